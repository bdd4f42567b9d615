//! Missing-data pattern analysis: pattern enumeration, per-group missing
//! percentages, influx/outflux coefficients and the fluxplot.
//!
//! Convention: the response indicator is 1 for an observed cell. A fully
//! observed variable therefore has influx 0 and outflux 1, and sits in the
//! top-left corner of the fluxplot.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, DataTable};
use crate::error::{Error, Result};
use crate::plot::{Chart, Range};
use crate::util::{fmt_f64, write_file};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    /// `true` where the variable is observed.
    pub observed: Vec<bool>,
    pub count: usize,
}

impl Pattern {
    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }
}

/// Distinct missingness patterns, most frequent first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternTable {
    pub variables: Vec<String>,
    pub patterns: Vec<Pattern>,
}

impl PatternTable {
    pub fn total_rows(&self) -> usize {
        self.patterns.iter().map(|p| p.count).sum()
    }

    /// One row per pattern: `count,n_missing,<1 observed / 0 missing per variable>`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("count,n_missing,{}\n", self.variables.join(","));
        for p in &self.patterns {
            let cells: Vec<&str> = p.observed.iter().map(|&o| if o { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{},{},{}", p.count, p.n_missing(), cells.join(","));
        }
        out
    }
}

/// Enumerates missingness patterns. Ties in frequency keep first-appearance order.
pub fn missing_patterns(t: &DataTable) -> PatternTable {
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut patterns: Vec<Pattern> = Vec::new();
    for row in 0..t.n_rows() {
        let mask: Vec<bool> = (0..t.n_cols()).map(|c| t.is_observed(row, c)).collect();
        match index.get(&mask) {
            Some(&i) => patterns[i].count += 1,
            None => {
                index.insert(mask.clone(), patterns.len());
                patterns.push(Pattern {
                    observed: mask,
                    count: 1,
                });
            }
        }
    }
    // stable sort keeps first-appearance order among equal counts
    patterns.sort_by(|a, b| b.count.cmp(&a.count));
    PatternTable {
        variables: t.names().iter().map(|s| s.to_string()).collect(),
        patterns,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMissing {
    pub variable: String,
    pub group_level: u8,
    pub rows: usize,
    pub missing: usize,
    pub percent: f64,
}

/// Percentage of missing cells per variable within each level of a binary group column.
pub fn percent_missing_by_group(t: &DataTable, group: &str) -> Result<Vec<GroupMissing>> {
    let g = t.require(group)?;
    if t.spec(g).kind != ColumnKind::Binary {
        return Err(Error::Precondition(format!("group column `{group}` must be binary")));
    }
    if t.missing_count(g) > 0 {
        return Err(Error::Precondition(format!(
            "group column `{group}` has missing values"
        )));
    }
    let levels: Vec<u8> = t.column(g).iter().map(|v| v.unwrap_or(0.0) as u8).collect();
    let mut out = Vec::new();
    for c in (0..t.n_cols()).filter(|&c| c != g) {
        for level in [0u8, 1u8] {
            let rows: Vec<usize> = (0..t.n_rows()).filter(|&r| levels[r] == level).collect();
            let missing = rows.iter().filter(|&&r| !t.is_observed(r, c)).count();
            let percent = if rows.is_empty() {
                0.0
            } else {
                100.0 * missing as f64 / rows.len() as f64
            };
            out.push(GroupMissing {
                variable: t.spec(c).name.clone(),
                group_level: level,
                rows: rows.len(),
                missing,
                percent,
            });
        }
    }
    Ok(out)
}

pub fn group_missing_csv(rows: &[GroupMissing]) -> String {
    let mut out = String::from("variable,group_level,rows,missing,percent\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.variable,
            r.group_level,
            r.rows,
            r.missing,
            fmt_f64(r.percent)
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxRecord {
    pub variable: String,
    pub prop_observed: f64,
    pub influx: f64,
    pub outflux: f64,
    /// Fraction of the rows observing this variable that are incomplete.
    pub fico: f64,
}

/// Influx, outflux and FICO for every column of `t`.
///
/// With `r` the response indicator, `obs_i` the number of observed cells in
/// row `i` and `mis_i` the number of missing ones:
///
/// * influx  `I_a = Σ_i (1 - r_ia) obs_i / Σ_i obs_i`
/// * outflux `O_a = Σ_i r_ia mis_i / Σ_i mis_i`
///
/// which is the pair sum over all variables `b` collapsed row by row. A
/// table without missing cells gets influx 0 and outflux 1 everywhere.
pub fn influx_outflux(t: &DataTable) -> Vec<FluxRecord> {
    let n = t.n_rows();
    let p = t.n_cols();
    let mut obs_in_row = vec![0usize; n];
    for c in 0..p {
        for (r, v) in t.column(c).iter().enumerate() {
            if v.is_some() {
                obs_in_row[r] += 1;
            }
        }
    }
    let total_obs: usize = obs_in_row.iter().sum();
    let total_mis = n * p - total_obs;

    (0..p)
        .map(|a| {
            let col = t.column(a);
            let mut influx_num = 0usize;
            let mut outflux_num = 0usize;
            let mut observed = 0usize;
            let mut observed_incomplete = 0usize;
            for (r, v) in col.iter().enumerate() {
                let mis_in_row = p - obs_in_row[r];
                if v.is_some() {
                    observed += 1;
                    outflux_num += mis_in_row;
                    if mis_in_row > 0 {
                        observed_incomplete += 1;
                    }
                } else {
                    influx_num += obs_in_row[r];
                }
            }
            let (influx, outflux) = if total_mis == 0 {
                (0.0, 1.0)
            } else if total_obs == 0 {
                (1.0, 0.0)
            } else {
                (
                    influx_num as f64 / total_obs as f64,
                    outflux_num as f64 / total_mis as f64,
                )
            };
            FluxRecord {
                variable: t.spec(a).name.clone(),
                prop_observed: if n == 0 { 0.0 } else { observed as f64 / n as f64 },
                influx,
                outflux,
                fico: if observed == 0 {
                    0.0
                } else {
                    observed_incomplete as f64 / observed as f64
                },
            }
        })
        .collect()
}

/// Variables with outflux strictly above `threshold`, plus every name in
/// `always_include` (typically the outcome and analyst-pinned variables).
/// The result follows the order of `flux`, then of `always_include`.
pub fn select_imputation_predictors(
    flux: &[FluxRecord],
    threshold: f64,
    always_include: &[&str],
) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "outflux threshold must be in [0, 1], got {threshold}"
        )));
    }
    let mut selected: Vec<String> = flux
        .iter()
        .filter(|f| f.outflux > threshold || always_include.contains(&f.variable.as_str()))
        .map(|f| f.variable.clone())
        .collect();
    for name in always_include {
        if !selected.iter().any(|s| s == name) {
            selected.push(name.to_string());
        }
    }
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "no variable has outflux above {threshold} and none is pinned"
        )));
    }
    Ok(selected)
}

pub fn flux_csv(flux: &[FluxRecord]) -> String {
    let mut out = String::from("variable,influx,outflux,prop_observed,fico\n");
    for f in flux {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.variable,
            fmt_f64(f.influx),
            fmt_f64(f.outflux),
            fmt_f64(f.prop_observed),
            fmt_f64(f.fico)
        );
    }
    out
}

pub fn fluxplot_svg(flux: &[FluxRecord]) -> String {
    let mut chart = Chart::new(
        "Fluxplot: outflux vs influx",
        "Influx",
        "Outflux",
        Range::new(0.0, 1.0),
        Range::new(0.0, 1.0),
    );
    chart.reference_line((0.0, 1.0), (1.0, 0.0));
    for f in flux {
        chart.labelled_point(f.influx, f.outflux, &f.variable);
    }
    chart.finish()
}

/// Writes the fluxplot SVG to `path` and its coordinates to the same path
/// with a `.csv` extension.
pub fn emit_fluxplot(flux: &[FluxRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &fluxplot_svg(flux))?;
    write_file(&path.with_extension("csv"), &flux_csv(flux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;

    fn from_masks(masks: &[&[u8]]) -> DataTable {
        let cols = (0..masks.len()).map(|j| ColumnSpec::continuous(format!("v{j}"))).collect();
        let vals = masks
            .iter()
            .map(|m| m.iter().map(|&r| if r == 1 { Some(1.0) } else { None }).collect())
            .collect();
        DataTable::new(cols, vals).unwrap()
    }

    #[test]
    fn hand_case() {
        let t = from_masks(&[&[1, 1, 1, 0], &[1, 0, 1, 1], &[1, 1, 0, 1]]);
        let f = influx_outflux(&t);
        for rec in &f {
            assert_eq!(rec.influx, 2.0 / 9.0);
            assert_eq!(rec.outflux, 2.0 / 3.0);
            assert_eq!(rec.prop_observed, 0.75);
        }
        assert_eq!(f[0].fico, 2.0 / 3.0);

        let patterns = missing_patterns(&t);
        assert_eq!(patterns.patterns.len(), 4);
        assert!(patterns.patterns.iter().all(|p| p.count == 1));
    }

    #[test]
    fn complete_table_conventions() {
        let t = from_masks(&[&[1, 1], &[1, 1]]);
        for rec in influx_outflux(&t) {
            assert_eq!((rec.influx, rec.outflux, rec.fico), (0.0, 1.0, 0.0));
        }
        let p = missing_patterns(&t);
        assert_eq!(p.patterns.len(), 1);
        assert_eq!(p.patterns[0].count, 2);
    }

    #[test]
    fn complete_and_empty_variables_hit_the_corners() {
        let t = from_masks(&[&[1, 1, 1], &[0, 0, 0], &[1, 0, 1]]);
        let f = influx_outflux(&t);
        assert_eq!((f[0].influx, f[0].outflux), (0.0, 1.0));
        assert_eq!((f[1].influx, f[1].outflux), (1.0, 0.0));
    }

    #[test]
    fn group_percentages() {
        let t = DataTable::new(
            vec![ColumnSpec::outcome("g"), ColumnSpec::continuous("x"), ColumnSpec::continuous("z")],
            vec![
                vec![Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(1.0)],
                vec![None, Some(1.0), Some(1.0), Some(1.0), Some(2.0)],
                vec![Some(1.0); 5],
            ],
        )
        .unwrap();
        let rows = percent_missing_by_group(&t, "g").unwrap();
        let x0 = rows.iter().find(|r| r.variable == "x" && r.group_level == 0).unwrap();
        assert_eq!(x0.percent, 25.0);
        assert!(rows.iter().filter(|r| r.variable == "z").all(|r| r.percent == 0.0));
    }

    #[test]
    fn group_with_missing_is_rejected() {
        let t = DataTable::new(
            vec![ColumnSpec::outcome("g"), ColumnSpec::continuous("x")],
            vec![vec![None, Some(1.0)], vec![Some(1.0), Some(1.0)]],
        )
        .unwrap();
        assert!(matches!(percent_missing_by_group(&t, "g"), Err(Error::Precondition(_))));
    }

    #[test]
    fn selection_threshold_is_strict() {
        let t = from_masks(&[&[1, 1, 1, 0], &[1, 0, 1, 1], &[1, 1, 0, 1]]);
        let f = influx_outflux(&t);
        assert_eq!(select_imputation_predictors(&f, 0.95, &["hepout"]).unwrap(), vec!["hepout"]);
        assert!(select_imputation_predictors(&f, 0.95, &[]).is_err());
        assert_eq!(select_imputation_predictors(&f, 0.0, &[]).unwrap().len(), 3);
        let exact = FluxRecord {
            variable: "edge".into(),
            prop_observed: 1.0,
            influx: 0.0,
            outflux: 0.9,
            fico: 0.0,
        };
        assert!(select_imputation_predictors(&[exact], 0.9, &[]).is_err());
    }

    #[test]
    fn fluxplot_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flux.svg");
        emit_fluxplot(&[], &path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("<svg"));

        let age = FluxRecord {
            variable: "Age".into(),
            prop_observed: 1.0,
            influx: 0.0,
            outflux: 1.0,
            fico: 0.454,
        };
        emit_fluxplot(&[age], &path).unwrap();
        let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("Age,0.0,1.0"));
        let svg = std::fs::read_to_string(&path).unwrap();
        // top-left of the plotting area
        assert!(svg.contains(r#"cx="60.00" cy="60.00""#));
    }
}
