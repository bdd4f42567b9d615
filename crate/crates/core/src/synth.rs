//! Synthetic pathology-like tables with a known outcome model and
//! controllable missingness.
//!
//! Variables are drawn jointly normal on their analysis scale and then
//! mapped to the recorded scale: log-scale biomarkers are stored as `10^v`,
//! square-root-scale counts as `v²`. The outcome follows a logistic model on
//! analysis-scale terms (`log_ALT`, `sqrt_Lymph`, ...), which is what the
//! pipeline fits after applying its transforms, so the generating
//! coefficients are directly comparable to fitted ones.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSpec, DataTable, Transform};
use crate::dist::normal_cdf;
use crate::error::{Error, Result};
use crate::util::{logistic, mix_seed, rng_for};

const OUTCOME_STREAM: u64 = 1;
const MISSINGNESS_SALT: u64 = 0x6d61_736b;

/// How an analysis-scale draw `v` becomes the recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal,
    /// Recorded as `10^v`; analysed as `log_X = ln(10^v)`.
    Log10,
    /// Recorded as `max(v, 0)²`; analysed as `sqrt_X`.
    Square,
    /// `1` with the given probability, via the latent normal's quantile.
    Binary { prevalence: f64 },
}

impl Marginal {
    pub fn transform(self) -> Transform {
        match self {
            Marginal::Log10 => Transform::Log,
            Marginal::Square => Transform::Sqrt,
            _ => Transform::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub marginal: Marginal,
    /// Bounds applied to the recorded value.
    #[serde(default)]
    pub clamp: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intercept {
    Fixed { value: f64 },
    /// Solved on the generated rows so the mean probability hits this value.
    Prevalence { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub name: String,
    pub intercept: Intercept,
    /// Analysis-scale term → coefficient.
    pub coefficients: BTreeMap<String, f64>,
    /// Terms enter as `term − center`.
    #[serde(default)]
    pub centers: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Mcar { rate: f64 },
    /// Rate depends on a fully observed binary driver.
    Mar { driver: String, rate_when: f64, rate_otherwise: f64 },
    /// Rate depends on the first target's own recorded value.
    Mnar { threshold: f64, rate_above: f64, rate_below: f64 },
}

/// Masks all `targets` of a row together (a test panel not ordered).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessRule {
    pub targets: Vec<String>,
    pub mechanism: Mechanism,
}

impl MissingnessRule {
    pub fn mcar<S: AsRef<str>>(targets: &[S], rate: f64) -> Self {
        MissingnessRule {
            targets: targets.iter().map(|t| t.as_ref().to_string()).collect(),
            mechanism: Mechanism::Mcar { rate },
        }
    }

    pub fn mar<S: AsRef<str>>(targets: &[S], driver: &str, rate_when: f64, rate_otherwise: f64) -> Self {
        MissingnessRule {
            targets: targets.iter().map(|t| t.as_ref().to_string()).collect(),
            mechanism: Mechanism::Mar {
                driver: driver.to_string(),
                rate_when,
                rate_otherwise,
            },
        }
    }

    fn rates(&self) -> Vec<f64> {
        match &self.mechanism {
            Mechanism::Mcar { rate } => vec![*rate],
            Mechanism::Mar {
                rate_when,
                rate_otherwise,
                ..
            } => vec![*rate_when, *rate_otherwise],
            Mechanism::Mnar {
                rate_above, rate_below, ..
            } => vec![*rate_above, *rate_below],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub name: String,
    pub version: u32,
    pub n_rows: usize,
    pub variables: Vec<VariableSpec>,
    /// Analysis-scale means, one per variable (ignored for binary variables).
    pub means: Vec<f64>,
    /// Analysis-scale covariance, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub outcome: OutcomeModel,
    pub missingness: Vec<MissingnessRule>,
    pub seed: u64,
}

/// Generating coefficients of a scenario's outcome model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub scenario: String,
    pub outcome: String,
    /// Known intercept, when it is not calibrated per dataset.
    pub intercept: Option<f64>,
    pub coefficients: BTreeMap<String, f64>,
}

impl ScenarioTruth {
    /// Terms with a nonzero generating coefficient.
    pub fn true_predictors(&self) -> Vec<String> {
        self.coefficients
            .iter()
            .filter(|(_, &b)| b != 0.0)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

impl GeneratorConfig {
    /// Table schema: one column per variable, then the outcome.
    pub fn schema(&self) -> Vec<ColumnSpec> {
        let mut cols: Vec<ColumnSpec> = self
            .variables
            .iter()
            .map(|v| match v.marginal {
                Marginal::Binary { .. } => ColumnSpec::binary(&v.name),
                m => ColumnSpec::continuous(&v.name).with_transform(m.transform()),
            })
            .collect();
        cols.push(ColumnSpec::outcome(&self.outcome.name));
        cols
    }

    pub fn truth(&self) -> ScenarioTruth {
        ScenarioTruth {
            scenario: self.name.clone(),
            outcome: self.outcome.name.clone(),
            intercept: match self.outcome.intercept {
                Intercept::Fixed { value } => Some(value),
                Intercept::Prevalence { .. } => None,
            },
            coefficients: self.outcome.coefficients.clone(),
        }
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        let p = self.variables.len();
        if self.means.len() != p || self.covariance.len() != p || self.covariance.iter().any(|r| r.len() != p) {
            return Err(Error::Config(format!("generator `{}`: means/covariance do not match {p} variables", self.name)));
        }
        let cov = DMatrix::from_fn(p, p, |i, j| self.covariance[i][j]);
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::Config("covariance is not symmetric".into()));
        }
        cov.cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::Config("covariance is not positive definite".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.cholesky()?;
        if self.n_rows == 0 {
            return Err(Error::Config("n_rows must be positive".into()));
        }
        let names: Vec<&str> = self.variables.iter().map(|v| v.name.as_str()).collect();
        for v in &self.variables {
            if let Marginal::Binary { prevalence } = v.marginal {
                if !(0.0..=1.0).contains(&prevalence) {
                    return Err(Error::Config(format!("prevalence of `{}` is outside [0, 1]", v.name)));
                }
            }
        }
        for term in self.outcome.coefficients.keys() {
            term_source(term, &self.variables)?;
        }
        for rule in &self.missingness {
            if rule.rates().iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::Config(format!("missingness rate outside [0, 1] for {:?}", rule.targets)));
            }
            for t in &rule.targets {
                if !names.contains(&t.as_str()) {
                    return Err(Error::Config(format!("missingness target `{t}` is not a variable")));
                }
            }
            if let Mechanism::Mar { driver, .. } = &rule.mechanism {
                if rule.targets.contains(driver) {
                    return Err(Error::Config(format!("`{driver}` drives its own missingness")));
                }
            }
        }
        Ok(())
    }
}

/// Variable index behind an analysis-scale term and how to compute it.
fn term_source(term: &str, vars: &[VariableSpec]) -> Result<(usize, Transform)> {
    for (prefix, tr) in [("log_", Transform::Log), ("sqrt_", Transform::Sqrt)] {
        if let Some(src) = term.strip_prefix(prefix) {
            if let Some(i) = vars.iter().position(|v| v.name == src) {
                return Ok((i, tr));
            }
        }
    }
    vars.iter()
        .position(|v| v.name == term)
        .map(|i| (i, Transform::None))
        .ok_or_else(|| Error::Config(format!("outcome term `{term}` matches no variable")))
}

fn recorded(v: f64, spec: &VariableSpec) -> f64 {
    let x = match spec.marginal {
        Marginal::Normal => v,
        Marginal::Log10 => 10f64.powf(v),
        Marginal::Square => v.max(0.0).powi(2),
        Marginal::Binary { prevalence } => (normal_cdf(v) < prevalence) as u8 as f64,
    };
    match spec.clamp {
        Some((lo, hi)) => x.clamp(lo, hi),
        None => x,
    }
}

fn solve_intercept(eta: &[f64], prevalence: f64) -> f64 {
    let mean_p = |b: f64| eta.iter().map(|e| logistic(b + e)).sum::<f64>() / eta.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draws the complete table (no missing cells).
pub fn generate_complete(cfg: &GeneratorConfig) -> Result<DataTable> {
    cfg.validate()?;
    let l = cfg.cholesky()?;
    let p = cfg.variables.len();
    let n = cfg.n_rows;
    let mut rng = rng_for(cfg.seed, 0);
    let mu = DVector::from_column_slice(&cfg.means);

    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); p + 1];
    for _ in 0..n {
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = &mu + &l * z;
        for j in 0..p {
            cols[j].push(Some(recorded(v[j], &cfg.variables[j])));
        }
    }

    let terms: Vec<(f64, f64, usize, Transform)> = cfg
        .outcome
        .coefficients
        .iter()
        .map(|(t, &b)| {
            let (i, tr) = term_source(t, &cfg.variables)?;
            Ok((b, cfg.outcome.centers.get(t).copied().unwrap_or(0.0), i, tr))
        })
        .collect::<Result<_>>()?;
    let eta: Vec<f64> = (0..n)
        .map(|r| {
            terms
                .iter()
                .map(|&(b, c, i, tr)| {
                    let x = cols[i][r].expect("complete");
                    b * (tr.apply(x).unwrap_or(f64::NAN) - c)
                })
                .sum()
        })
        .collect();
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("outcome terms fall outside their transform's domain".into()));
    }
    let b0 = match cfg.outcome.intercept {
        Intercept::Fixed { value } => value,
        Intercept::Prevalence { value } => solve_intercept(&eta, value),
    };
    let mut out_rng = rng_for(cfg.seed, OUTCOME_STREAM);
    cols[p] = eta
        .iter()
        .map(|e| Some((out_rng.random::<f64>() < logistic(b0 + e)) as u8 as f64))
        .collect();
    DataTable::new(cfg.schema(), cols)
}

/// Masks cells according to `rules`; each rule draws from its own stream.
pub fn impose_missingness(t: &DataTable, rules: &[MissingnessRule], seed: u64) -> Result<DataTable> {
    let (columns, mut values) = t.clone().into_parts();
    for (k, rule) in rules.iter().enumerate() {
        let targets: Vec<usize> = rule.targets.iter().map(|n| t.require(n)).collect::<Result<_>>()?;
        if targets.is_empty() {
            continue;
        }
        let mut rng = rng_for(seed, k as u64);
        let driver = match &rule.mechanism {
            Mechanism::Mar { driver, .. } => {
                let d = t.require(driver)?;
                if targets.contains(&d) {
                    return Err(Error::Config(format!("`{driver}` drives its own missingness")));
                }
                if values[d].iter().any(Option::is_none) {
                    return Err(Error::Precondition(format!("missingness driver `{driver}` has missing values")));
                }
                Some(d)
            }
            _ => None,
        };
        for r in 0..t.n_rows() {
            let rate = match &rule.mechanism {
                Mechanism::Mcar { rate } => *rate,
                Mechanism::Mar {
                    rate_when,
                    rate_otherwise,
                    ..
                } => {
                    if values[driver.expect("mar driver")][r] == Some(1.0) {
                        *rate_when
                    } else {
                        *rate_otherwise
                    }
                }
                Mechanism::Mnar {
                    threshold,
                    rate_above,
                    rate_below,
                } => match t.value(r, targets[0]) {
                    Some(v) if v > *threshold => *rate_above,
                    _ => *rate_below,
                },
            };
            // one draw per row keeps the stream aligned whatever the rate
            let u: f64 = rng.random();
            if u < rate {
                for &c in &targets {
                    values[c][r] = None;
                }
            }
        }
    }
    Ok(DataTable::from_parts_unchecked(columns, values))
}

/// Complete table plus the config's missingness.
pub fn generate(cfg: &GeneratorConfig) -> Result<DataTable> {
    let complete = generate_complete(cfg)?;
    impose_missingness(&complete, &cfg.missingness, mix_seed(cfg.seed, MISSINGNESS_SALT))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PaperLike,
    McarSmall,
    MarBivariate,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_like" => Ok(Scenario::PaperLike),
            "mcar_small" => Ok(Scenario::McarSmall),
            "mar_bivariate" => Ok(Scenario::MarBivariate),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected paper_like, mcar_small or mar_bivariate)"
            ))),
        }
    }
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::PaperLike => "paper_like",
            Scenario::McarSmall => "mcar_small",
            Scenario::MarBivariate => "mar_bivariate",
        }
    }
}

/// Frozen scenario definition plus its generating truth.
pub fn benchmark_scenario(name: &str) -> Result<(GeneratorConfig, ScenarioTruth)> {
    let cfg = match name.parse::<Scenario>()? {
        Scenario::PaperLike => paper_like(),
        Scenario::McarSmall => bivariate("mcar_small", MissingnessRule::mcar(&["x2"], 0.2)),
        Scenario::MarBivariate => bivariate("mar_bivariate", MissingnessRule::mar(&["x2"], "y", 0.1, 0.3)),
    };
    let truth = cfg.truth();
    Ok((cfg, truth))
}

fn bivariate(name: &str, rule: MissingnessRule) -> GeneratorConfig {
    GeneratorConfig {
        name: name.into(),
        version: 1,
        n_rows: 500,
        variables: vec![
            VariableSpec {
                name: "x1".into(),
                marginal: Marginal::Normal,
                clamp: None,
            },
            VariableSpec {
                name: "x2".into(),
                marginal: Marginal::Normal,
                clamp: None,
            },
        ],
        means: vec![0.0, 0.0],
        covariance: vec![vec![1.0, 0.8], vec![0.8, 1.0]],
        outcome: OutcomeModel {
            name: "y".into(),
            intercept: Intercept::Fixed { value: 0.0 },
            coefficients: BTreeMap::from([("x1".to_string(), 0.5), ("x2".to_string(), 0.5)]),
            centers: BTreeMap::new(),
        },
        missingness: vec![rule],
        seed: 0,
    }
}

/// Panels of tests ordered together; correlated within, independent across.
const PANELS: [&[&str]; 6] = [
    &["Age"],
    &["Sex"],
    &["Sodium", "K", "Crea", "Urea"],
    &["ALB", "ALT", "ALKP", "GGT", "TBil"],
    &["RCC", "Hb", "Hct", "MCV", "MCH", "MCHC", "RDW"],
    &["WCC", "Neut", "Lymph", "Mono", "Eos", "Bas", "Plt"],
];

/// 25 predictors of a hepatitis C screening cohort (n = 10,774, 6.2% positive).
///
/// Means and SDs are on the recorded scale of the source summary table,
/// where liver, renal and platelet/white-cell values already appear as
/// log10 and differential counts as square roots; those become `Log10` and
/// `Square` marginals. Variables absent from that table use textbook
/// reference values.
fn paper_like() -> GeneratorConfig {
    use Marginal::*;
    let vars: [(&str, Marginal, f64, f64); 25] = [
        ("Age", Normal, 44.4, 19.1),
        ("Sex", Binary { prevalence: 0.505 }, 0.0, 1.0),
        ("Sodium", Normal, 139.63, 3.21),
        ("K", Normal, 4.00, 0.45),
        ("Crea", Log10, 1.93, 0.16),
        ("Urea", Log10, 0.72, 0.20),
        ("ALB", Normal, 42.8, 5.8),
        ("ALT", Log10, 1.47, 0.38),
        ("ALKP", Log10, 1.92, 0.21),
        ("GGT", Log10, 1.61, 0.44),
        ("TBil", Log10, 1.03, 0.30),
        ("RCC", Normal, 4.54, 0.64),
        ("Hb", Normal, 138.0, 17.0),
        ("Hct", Normal, 0.41, 0.05),
        ("MCV", Normal, 90.0, 6.0),
        ("MCH", Normal, 30.0, 2.3),
        ("MCHC", Normal, 335.0, 12.0),
        ("RDW", Normal, 13.89, 1.77),
        ("WCC", Log10, 0.87, 0.17),
        ("Neut", Square, 2.10, 0.50),
        ("Lymph", Square, 1.39, 0.35),
        ("Mono", Square, 0.74, 0.20),
        ("Eos", Square, 0.38, 0.18),
        ("Bas", Square, 0.18, 0.09),
        ("Plt", Log10, 2.39, 0.20),
    ];
    let within = |panel: usize| match panel {
        2 | 3 => 0.3,
        4 => 0.4,
        5 => 0.3,
        _ => 0.0,
    };
    let panel_of = |name: &str| PANELS.iter().position(|p| p.contains(&name)).expect("every variable is in a panel");
    let p = vars.len();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    let (pi, pj) = (panel_of(vars[i].0), panel_of(vars[j].0));
                    let rho = if i == j {
                        1.0
                    } else if pi == pj {
                        within(pi)
                    } else {
                        0.0
                    };
                    rho * vars[i].3 * vars[j].3
                })
                .collect()
        })
        .collect();

    let ln10 = std::f64::consts::LN_10;
    let mean_of = |name: &str| vars.iter().find(|v| v.0 == name).expect("known variable").2;
    let truth: [(&str, f64, f64); 8] = [
        ("Age", -0.016, mean_of("Age")),
        ("Sex", -0.6, 0.5),
        ("RDW", 0.16, mean_of("RDW")),
        ("log_ALT", 0.35, mean_of("ALT") * ln10),
        ("sqrt_Lymph", 0.9, mean_of("Lymph")),
        ("ALB", -0.047, mean_of("ALB")),
        ("log_TBil", -0.40, mean_of("TBil") * ln10),
        ("log_Urea", -0.6, mean_of("Urea") * ln10),
    ];

    let tiny: [(&str, f64); 15] = [
        ("Bas", 0.025),
        ("Eos", 0.019),
        ("Plt", 0.008),
        ("WCC", 0.005),
        ("MCHC", 0.002),
        ("Hct", 0.002),
        ("RCC", 0.002),
        ("RDW", 0.002),
        ("MCV", 0.0015),
        ("MCH", 0.0015),
        ("Hb", 0.001),
        ("Urea", 0.015),
        ("Crea", 0.015),
        ("K", 0.004),
        ("GGT", 0.02),
    ];
    let mut missingness = vec![
        MissingnessRule::mar(&["Sodium", "K", "Crea", "Urea"], "HepC", 0.116, 0.172),
        MissingnessRule::mar(&["ALB", "ALT", "ALKP", "GGT", "TBil"], "HepC", 0.036, 0.164),
        MissingnessRule::mcar(&["Neut", "Lymph", "Mono"], 0.005),
    ];
    missingness.extend(tiny.iter().map(|&(v, r)| MissingnessRule::mcar(&[v], r)));

    GeneratorConfig {
        name: "paper_like".into(),
        version: 1,
        n_rows: 10_774,
        variables: vars
            .iter()
            .map(|&(name, marginal, _, _)| VariableSpec {
                name: name.into(),
                marginal,
                clamp: (name == "Age").then_some((15.0, 100.0)),
            })
            .collect(),
        means: vars.iter().map(|v| v.2).collect(),
        covariance,
        outcome: OutcomeModel {
            name: "HepC".into(),
            intercept: Intercept::Prevalence {
                value: 672.0 / 10_774.0,
            },
            coefficients: truth.iter().map(|&(t, b, _)| (t.to_string(), b)).collect(),
            centers: truth.iter().map(|&(t, _, c)| (t.to_string(), c)).collect(),
        },
        missingness,
        seed: 0,
    }
}
