//! Discrimination and group-comparison statistics: ROC/AUC, Mann-Whitney U,
//! Pearson chi-square on 2×2 tables and the Anderson-Darling normality test.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, DataTable};
use crate::dist::{chi2_sf, normal_cdf, normal_sf};
use crate::error::{Error, Result};
use crate::glm::{DesignMatrix, GlmFit};
use crate::plot::{Chart, Range};
use crate::util::{fmt_f64, mean, sample_sd, write_file};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Cutpoint for each point: a row is called positive when its score is
    /// at least the threshold. The first point `(0, 0)` has threshold +∞.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    /// Trapezoidal area of the stored points.
    pub fn trapezoid_area(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
            .sum()
    }

    /// `threshold,fpr,tpr`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for i in 0..self.fpr.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_f64(self.thresholds[i]),
                fmt_f64(self.fpr[i]),
                fmt_f64(self.tpr[i])
            );
        }
        out
    }
}

fn class_counts(labels: &[bool]) -> (u64, u64) {
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    (pos, labels.len() as u64 - pos)
}

/// ROC curve over unique score cutpoints. Tied scores move the curve
/// diagonally, which is the half-credit convention of the Mann-Whitney U.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Usage("scores and labels differ in length".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Usage(format!("non-finite score {s}")));
    }
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::Usage("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the Mann-Whitney U, kept in integers so AUC is exact
    let mut twice_u: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        twice_u += dfp as u128 * (2 * tp as u128 + dtp as u128);
        tp += dtp;
        fp += dfp;
        thresholds.push(s);
        fpr.push(fp as f64 / n as f64);
        tpr.push(tp as f64 / p as f64);
    }
    let auc = twice_u as f64 / (2 * p as u128 * n as u128) as f64;
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Wins of `x` over `y`, ties counting one half.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Two-sided Mann-Whitney U test with tie-corrected variance and a
/// continuity correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Usage("Mann-Whitney U needs two nonempty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Usage("Mann-Whitney U needs finite values".into()));
    }
    let mut all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (n1, n2) = (x.len() as u128, y.len() as u128);
    let n = n1 + n2;

    // twice the rank sum of x, using midranks
    let mut twice_r1: u128 = 0;
    let mut tie_term: f64 = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let twice_midrank = (i + 1 + j) as u128; // (i+1 + j) / 2 * 2
        let in_x = all[i..j].iter().filter(|e| e.1).count() as u128;
        twice_r1 += twice_midrank * in_x;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let twice_u = twice_r1 - n1 * (n1 + 1);
    let u = twice_u as f64 / 2.0;

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let mu = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let (z, p_value) = if var > 0.0 {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (z.copysign(u - mu), (2.0 * normal_sf(z)).min(1.0))
    } else {
        (0.0, 1.0)
    };
    Ok(MannWhitney { u, z, p_value })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of independence on a 2×2 table of counts,
/// optionally with Yates' continuity correction.
pub fn chi_square_test(table: [[u64; 2]; 2], yates: bool) -> Result<ChiSquare> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::Usage("chi-square table has an empty margin".into()));
    }
    let total = (rows[0] + rows[1]) as f64;
    let mut statistic = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] as f64 * cols[j] as f64 / total;
            let mut d = (table[i][j] as f64 - e).abs();
            if yates {
                d = (d - 0.5).max(0.0);
            }
            statistic += d * d / e;
        }
    }
    Ok(ChiSquare {
        statistic,
        df: 1.0,
        p_value: chi2_sf(statistic, 1.0),
    })
}

/// Significance band of an Anderson-Darling statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PBand {
    /// p > 0.15
    Above15,
    /// 0.10 < p ≤ 0.15
    Below15,
    Below10,
    Below5,
    Below2_5,
    /// p ≤ 0.01
    Below1,
}

impl PBand {
    /// Whether normality is rejected at `level` (one of 0.15, 0.10, 0.05, 0.025, 0.01).
    pub fn rejects_at(self, level: f64) -> bool {
        let needed = match level {
            l if l >= 0.15 => PBand::Below15,
            l if l >= 0.10 => PBand::Below10,
            l if l >= 0.05 => PBand::Below5,
            l if l >= 0.025 => PBand::Below2_5,
            _ => PBand::Below1,
        };
        self >= needed
    }
}

/// Critical values of the modified statistic when mean and variance are estimated.
const AD_CRITICAL: [(f64, PBand); 5] = [
    (1.092, PBand::Below1),
    (0.918, PBand::Below2_5),
    (0.787, PBand::Below5),
    (0.656, PBand::Below10),
    (0.576, PBand::Below15),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    pub a2: f64,
    /// `A²(1 + 0.75/n + 2.25/n²)`.
    pub a2_star: f64,
    pub band: PBand,
}

pub fn anderson_darling_normality(x: &[f64]) -> Result<AndersonDarling> {
    let n = x.len();
    if n < 8 {
        return Err(Error::Usage(format!("Anderson-Darling needs n ≥ 8, got {n}")));
    }
    let m = mean(x);
    let sd = sample_sd(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Usage("Anderson-Darling sample has zero variance".into()));
    }
    let mut z: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    let nf = n as f64;
    let tiny = f64::MIN_POSITIVE;
    let s: f64 = (0..n)
        .map(|i| {
            let lo = normal_cdf(z[i]).max(tiny).ln();
            let hi = normal_sf(z[n - 1 - i]).max(tiny).ln();
            (2.0 * i as f64 + 1.0) * (lo + hi)
        })
        .sum();
    let a2 = -nf - s / nf;
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let band = AD_CRITICAL
        .iter()
        .find(|(c, _)| a2_star >= *c)
        .map(|&(_, b)| b)
        .unwrap_or(PBand::Above15);
    Ok(AndersonDarling { a2, a2_star, band })
}

/// Probabilities and labels for one model on validation rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredModel {
    pub name: String,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// AUC of each per-imputation model; empty for a single model.
    pub per_imputation_auc: Vec<f64>,
}

fn labels_of(t: &DataTable, outcome: &str) -> Result<Vec<bool>> {
    let c = t.require(outcome)?;
    t.column(c)
        .iter()
        .enumerate()
        .map(|(r, v)| {
            v.map(|v| v == 1.0)
                .ok_or_else(|| Error::Precondition(format!("outcome is missing at validation row {r}")))
        })
        .collect()
}

fn model_variables(fit: &GlmFit) -> Vec<String> {
    let mut vars: Vec<String> = fit
        .terms
        .iter()
        .skip(1)
        .map(|t| t.split('[').next().unwrap_or(t).to_string())
        .collect();
    vars.dedup();
    vars
}

/// Design for `fit` on `t`, rebuilt so that categorical indicators line up
/// with the fitted terms even when a level is absent from `t`.
fn design_for(fit: &GlmFit, t: &DataTable) -> Result<DesignMatrix> {
    let n = t.n_rows();
    let mut cols = Vec::with_capacity(fit.terms.len());
    for (j, term) in fit.terms.iter().enumerate() {
        if j == 0 {
            cols.push(vec![1.0; n]);
            continue;
        }
        let (var, level) = match term.split_once('[') {
            Some((v, l)) => (v, l.trim_end_matches(']').parse::<f64>().ok()),
            None => (term.as_str(), None),
        };
        let c = t.require(var)?;
        let values = t
            .column(c)
            .iter()
            .enumerate()
            .map(|(r, v)| {
                let v = v.ok_or_else(|| Error::Precondition(format!("`{var}` is missing at row {r}")))?;
                Ok(match level {
                    Some(l) if t.spec(c).kind == ColumnKind::Categorical => (v == l) as u8 as f64,
                    _ => v,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        cols.push(values);
    }
    let x = nalgebra::DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    DesignMatrix::new(fit.terms.clone(), x)
}

/// Scores `fit` on the validation rows that are complete on its variables
/// and the outcome.
pub fn score_available_case(name: &str, fit: &GlmFit, validation: &DataTable, outcome: &str) -> Result<ScoredModel> {
    let oc = validation.require(outcome)?;
    let vars: Vec<usize> = model_variables(fit)
        .iter()
        .map(|v| validation.require(v))
        .collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..validation.n_rows())
        .filter(|&r| validation.is_observed(r, oc) && vars.iter().all(|&c| validation.is_observed(r, c)))
        .collect();
    let sub = validation.select_rows(&rows);
    let scores = fit.predict(&design_for(fit, &sub)?)?;
    Ok(ScoredModel {
        name: name.to_string(),
        scores,
        labels: labels_of(&sub, outcome)?,
        per_imputation_auc: Vec::new(),
    })
}

/// Scores a multiply imputed model: `fits[k]` is applied to `completed[k]`,
/// the `m` probabilities are averaged per row for the pooled curve, and each
/// per-imputation AUC is kept for the mean (SD) summary.
pub fn score_pooled(name: &str, fits: &[GlmFit], completed: &[DataTable], outcome: &str) -> Result<ScoredModel> {
    if fits.is_empty() || fits.len() != completed.len() {
        return Err(Error::Usage(format!(
            "{} fits for {} completed validation sets",
            fits.len(),
            completed.len()
        )));
    }
    let labels = labels_of(&completed[0], outcome)?;
    let mut sum = vec![0.0; labels.len()];
    let mut per_imputation_auc = Vec::with_capacity(fits.len());
    for (fit, t) in fits.iter().zip(completed) {
        if labels_of(t, outcome)? != labels {
            return Err(Error::Usage("completed validation sets disagree on the outcome".into()));
        }
        let p = fit.predict(&design_for(fit, t)?)?;
        per_imputation_auc.push(roc_curve(&p, &labels)?.auc);
        for (s, v) in sum.iter_mut().zip(&p) {
            *s += v;
        }
    }
    let m = fits.len() as f64;
    Ok(ScoredModel {
        name: name.to_string(),
        scores: sum.into_iter().map(|s| s / m).collect(),
        labels,
        per_imputation_auc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub model: String,
    pub auc: f64,
    /// SD of the per-imputation AUCs; `None` for single models.
    pub auc_sd: Option<f64>,
    pub auc_mean: Option<f64>,
}

/// "72% (SD 0.003)"
pub fn format_mean_sd(mean: f64, sd: f64) -> String {
    format!("{:.0}% (SD {:.3})", mean * 100.0, sd)
}

pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    let mut chart = Chart::new(
        "ROC",
        "False positive rate",
        "True positive rate",
        Range::new(0.0, 1.0),
        Range::new(0.0, 1.0),
    );
    chart.reference_line((0.0, 0.0), (1.0, 1.0));
    for (i, (name, c)) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = c.fpr.iter().copied().zip(c.tpr.iter().copied()).collect();
        chart.polyline(&pts, i, &format!("{name} (AUC {:.3})", c.auc));
    }
    chart.finish()
}

/// Writes `roc_<name>.csv` and `roc_<name>.svg` per model, `roc_all.svg`
/// and `auc_summary.csv` (`model,auc,auc_sd`) into `dir`.
pub fn auroc_report(models: &[ScoredModel], dir: impl AsRef<Path>) -> Result<Vec<AucSummary>> {
    let dir = dir.as_ref();
    let mut curves = Vec::with_capacity(models.len());
    let mut summary = Vec::with_capacity(models.len());
    for m in models {
        let roc = roc_curve(&m.scores, &m.labels)?;
        write_file(&dir.join(format!("roc_{}.csv", m.name)), &roc.to_csv())?;
        write_file(&dir.join(format!("roc_{}.svg", m.name)), &roc_svg(&[(&m.name, &roc)]))?;
        let (auc_mean, auc_sd) = if m.per_imputation_auc.is_empty() {
            (None, None)
        } else {
            (Some(mean(&m.per_imputation_auc)), Some(sample_sd(&m.per_imputation_auc)))
        };
        summary.push(AucSummary {
            model: m.name.clone(),
            auc: roc.auc,
            auc_sd,
            auc_mean,
        });
        curves.push((m.name.as_str(), roc));
    }
    let refs: Vec<(&str, &RocCurve)> = curves.iter().map(|(n, c)| (*n, c)).collect();
    write_file(&dir.join("roc_all.svg"), &roc_svg(&refs))?;

    let mut csv = String::from("model,auc,auc_sd\n");
    for s in &summary {
        let sd = s.auc_sd.map(fmt_f64).unwrap_or_else(|| "NA".into());
        let _ = writeln!(csv, "{},{},{}", s.model, fmt_f64(s.auc), sd);
    }
    write_file(&dir.join("auc_summary.csv"), &csv)?;
    Ok(summary)
}

/// One row of a two-group descriptive table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub variable: String,
    /// Mean (continuous) or proportion coded 1 (binary) in the outcome = 0 group.
    pub summary_negative: f64,
    /// SD for continuous variables; count coded 1 for binary ones.
    pub spread_negative: f64,
    pub summary_positive: f64,
    pub spread_positive: f64,
    pub test: String,
    pub p_value: f64,
}

/// Outcome-group comparison of every other non-categorical column on its
/// observed values: Mann-Whitney for continuous, chi-square for binary.
pub fn compare_groups(t: &DataTable, outcome: &str) -> Result<Vec<GroupComparison>> {
    let oc = t.require(outcome)?;
    let mut out = Vec::new();
    for c in 0..t.n_cols() {
        let spec = t.spec(c);
        if c == oc || spec.kind == ColumnKind::Categorical {
            continue;
        }
        let (mut neg, mut pos) = (Vec::new(), Vec::new());
        for r in 0..t.n_rows() {
            if let (Some(v), Some(y)) = (t.value(r, c), t.value(r, oc)) {
                if y == 1.0 {
                    pos.push(v)
                } else {
                    neg.push(v)
                }
            }
        }
        if neg.is_empty() || pos.is_empty() {
            continue;
        }
        let row = match spec.kind {
            ColumnKind::Binary => {
                let ones = |xs: &[f64]| xs.iter().filter(|&&v| v == 1.0).count() as u64;
                let (n1, p1) = (ones(&neg), ones(&pos));
                let table = [[n1, neg.len() as u64 - n1], [p1, pos.len() as u64 - p1]];
                let p_value = chi_square_test(table, false).map(|c| c.p_value).unwrap_or(f64::NAN);
                GroupComparison {
                    variable: spec.name.clone(),
                    summary_negative: n1 as f64 / neg.len() as f64,
                    spread_negative: n1 as f64,
                    summary_positive: p1 as f64 / pos.len() as f64,
                    spread_positive: p1 as f64,
                    test: "chi_square".into(),
                    p_value,
                }
            }
            _ => GroupComparison {
                variable: spec.name.clone(),
                summary_negative: mean(&neg),
                spread_negative: sample_sd(&neg),
                summary_positive: mean(&pos),
                spread_positive: sample_sd(&pos),
                test: "mann_whitney".into(),
                p_value: mann_whitney_u(&neg, &pos)?.p_value,
            },
        };
        out.push(row);
    }
    Ok(out)
}

pub fn group_comparison_csv(rows: &[GroupComparison]) -> String {
    let mut out = String::from("variable,summary_negative,spread_negative,summary_positive,spread_positive,test,p\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variable,
            fmt_f64(r.summary_negative),
            fmt_f64(r.spread_negative),
            fmt_f64(r.summary_positive),
            fmt_f64(r.spread_positive),
            r.test,
            fmt_f64(r.p_value)
        );
    }
    out
}
