//! Logistic regression fitted by iteratively reweighted least squares, with
//! Wald and likelihood-ratio tests and backward stepwise selection.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, DataTable};
use crate::dist::{chi2_sf, normal_sf};
use crate::error::{Error, Result};
use crate::util::{compensated_sum, fmt_f64, logistic, softplus};

pub const INTERCEPT: &str = "(Intercept)";

/// Dense design with the intercept in column 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    terms: Vec<String>,
    x: DMatrix<f64>,
}

impl DesignMatrix {
    /// Wraps a matrix whose first column must be the all-ones intercept.
    pub fn new(terms: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        if terms.len() != x.ncols() {
            return Err(Error::Usage(format!(
                "{} term names for {} columns",
                terms.len(),
                x.ncols()
            )));
        }
        if terms.first().map(String::as_str) != Some(INTERCEPT) || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Usage("design must start with an all-ones intercept column".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("design contains non-finite values".into()));
        }
        Ok(DesignMatrix { terms, x })
    }

    /// Intercept plus one column per named term. Categorical columns expand
    /// to indicator columns `name[level]` for every level but the smallest.
    /// Every row must be observed on every term.
    pub fn from_table<S: AsRef<str>>(t: &DataTable, terms: &[S]) -> Result<Self> {
        let n = t.n_rows();
        let mut names = vec![INTERCEPT.to_string()];
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        for term in terms {
            let term = term.as_ref();
            let c = t.require(term)?;
            let values: Vec<f64> = t
                .column(c)
                .iter()
                .enumerate()
                .map(|(row, v)| {
                    v.ok_or_else(|| {
                        Error::Precondition(format!("term `{term}` is missing at row {row}"))
                    })
                })
                .collect::<Result<_>>()?;
            if t.spec(c).kind == ColumnKind::Categorical {
                let mut levels = values.clone();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                for level in levels.iter().skip(1) {
                    names.push(format!("{term}[{level}]"));
                    cols.push(values.iter().map(|v| if v == level { 1.0 } else { 0.0 }).collect());
                }
            } else {
                names.push(term.to_string());
                cols.push(values);
            }
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok(DesignMatrix { terms: names, x })
    }

    pub fn intercept_only(n: usize) -> Self {
        DesignMatrix {
            terms: vec![INTERCEPT.to_string()],
            x: DMatrix::from_element(n, 1, 1.0),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.x.ncols()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == name)
    }

    /// Design restricted to the given column indices (intercept must be kept first).
    pub fn select(&self, keep: &[usize]) -> DesignMatrix {
        DesignMatrix {
            terms: keep.iter().map(|&j| self.terms[j].clone()).collect(),
            x: self.x.select_columns(keep),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            terms: self.terms.clone(),
            x: self.x.select_rows(rows),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Inverse Fisher information at the estimate, row-major `p × p`.
    pub covariance: Vec<Vec<f64>>,
    /// `-2 log L`.
    pub deviance: f64,
    /// `deviance + 2 p`.
    pub aic: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub n_obs: usize,
}

impl GlmFit {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.term_index(name).map(|i| self.coefficients[i])
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.n_terms();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.n_terms()).map(|i| self.covariance[i][i].sqrt()).collect()
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(self.std_errors())
            .map(|(b, se)| b / se)
            .collect()
    }

    /// Two-sided normal-reference p-values, one per term.
    pub fn p_values(&self) -> Vec<f64> {
        self.z_values().iter().map(|z| (2.0 * normal_sf(z.abs())).min(1.0)).collect()
    }

    /// Fitted probabilities for a design with the same term order.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        if x.terms() != self.terms.as_slice() {
            return Err(Error::Usage("design terms do not match the fitted terms".into()));
        }
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok((x.matrix() * beta).iter().map(|&e| logistic(e)).collect())
    }

    /// `term,estimate,se,z,p`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("term,estimate,se,z,p\n");
        let (se, z, p) = (self.std_errors(), self.z_values(), self.p_values());
        for i in 0..self.n_terms() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.terms[i],
                fmt_f64(self.coefficients[i]),
                fmt_f64(se[i]),
                fmt_f64(z[i]),
                fmt_f64(p[i])
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Stop when `max |Xᵀ(y - p)|` falls below this.
    pub score_tol: f64,
    /// Stop when `|Δ deviance| / (|deviance| + 0.1)` falls below this.
    pub rel_deviance_tol: f64,
    pub max_halvings: usize,
    /// Warm start; zeros when absent.
    pub start: Option<Vec<f64>>,
    pub check_rank: bool,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 50,
            score_tol: 1e-8,
            rel_deviance_tol: 1e-10,
            max_halvings: 10,
            start: None,
            check_rank: true,
        }
    }
}

/// |linear predictor| beyond which fitted probabilities are pinned at 0 or 1.
const SEPARATION_ETA: f64 = 30.0;

fn deviance_from_eta(eta: &DVector<f64>, y: &[f64]) -> f64 {
    2.0 * compensated_sum(
        eta.iter()
            .zip(y)
            .map(|(&e, &yi)| if yi > 0.5 { softplus(-e) } else { softplus(e) }),
    )
}

/// `-2 log L` of the logistic model at an arbitrary coefficient vector.
pub fn logistic_deviance(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    let eta = x.matrix() * DVector::from_column_slice(beta);
    deviance_from_eta(&eta, y)
}

fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut xw = Vec::with_capacity(x.len());
    for col in x.as_slice().chunks_exact(n) {
        xw.extend(col.iter().zip(w).map(|(v, wi)| v * wi));
    }
    cross_product(x, &xw)
}

/// `XᵀX`, symmetrised.
pub(crate) fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    cross_product(x, x.as_slice())
}

/// `Xᵀ B` for a column-major `B` shaped like `X`, symmetrised. nalgebra's
/// `tr_mul` runs column dot products; the blocked GEMM kernel is several
/// times faster for tall designs.
fn cross_product(x: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    let (n, p) = x.shape();
    assert_eq!(b.len(), n * p);
    let mut g = DMatrix::<f64>::zeros(p, p);
    let (n_s, p_s) = (n as isize, p as isize);
    // SAFETY: all three buffers hold the extents given by the strides; Xᵀ is
    // read from column-major X with row stride n and column stride 1
    unsafe {
        matrixmultiply::dgemm(p, n, p, 1.0, x.as_ptr(), n_s, 1, b.as_ptr(), 1, n_s, 0.0, g.as_mut_ptr(), 1, p_s);
    }
    (&g + g.transpose()) * 0.5
}

/// Finds the first column that is (numerically) a linear combination of
/// the columns before it.
fn check_rank(x: &DesignMatrix) -> Result<()> {
    let g = x.matrix().tr_mul(x.matrix());
    let p = g.ncols();
    let scale: Vec<f64> = (0..p).map(|j| g[(j, j)].sqrt()).collect();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        if scale[j] == 0.0 {
            return Err(Error::RankDeficient {
                term: x.terms()[j].clone(),
            });
        }
        for i in j..p {
            let mut s = g[(i, j)] / (scale[i] * scale[j]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 1e-10 {
                    return Err(Error::RankDeficient {
                        term: x.terms()[j].clone(),
                    });
                }
                l[(j, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(())
}

fn validate_inputs(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::Usage(format!(
            "{} outcomes for {} design rows",
            y.len(),
            x.n_rows()
        )));
    }
    if x.n_rows() <= x.n_terms() {
        return Err(Error::Precondition(format!(
            "need more rows ({}) than terms ({})",
            x.n_rows(),
            x.n_terms()
        )));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Usage("logistic outcome must be 0/1".into()));
    }
    Ok(())
}

pub fn fit_logistic_irls(x: &DesignMatrix, y: &[f64]) -> Result<GlmFit> {
    fit_logistic_irls_with(x, y, &IrlsOptions::default())
}

/// Newton-Raphson / IRLS with step-halving on any deviance increase.
///
/// Hitting the iteration cap, failing to find a descent step, or a linear
/// predictor beyond ±30 (separation) gives `converged = false`; those are
/// reported, not raised.
pub fn fit_logistic_irls_with(x: &DesignMatrix, y: &[f64], opts: &IrlsOptions) -> Result<GlmFit> {
    validate_inputs(x, y)?;
    if opts.check_rank {
        check_rank(x)?;
    }
    let path = irls_path(x.matrix(), y, opts)?;
    finish_fit(x, path)
}

/// Coefficients and deviance at the end of the Newton iterations.
struct IrlsPath {
    beta: DVector<f64>,
    eta: DVector<f64>,
    deviance: f64,
    n_iter: usize,
    converged: bool,
}

fn irls_path(xm: &DMatrix<f64>, y: &[f64], opts: &IrlsOptions) -> Result<IrlsPath> {
    let n = xm.nrows();
    let p = xm.ncols();
    let yv = DVector::from_column_slice(y);

    let mut beta = match &opts.start {
        Some(s) if s.len() == p => DVector::from_column_slice(s),
        Some(_) => return Err(Error::Usage("warm start has the wrong length".into())),
        None => DVector::zeros(p),
    };
    let mut eta = xm * &beta;
    let mut dev = deviance_from_eta(&eta, y);
    let mut converged = false;
    let mut n_iter = 0;
    let mut w = vec![0.0; n];

    while n_iter < opts.max_iter {
        let mu = eta.map(logistic);
        for i in 0..n {
            w[i] = (mu[i] * (1.0 - mu[i])).max(1e-300);
        }
        let score = xm.tr_mul(&(&yv - &mu));
        if score.amax() < opts.score_tol {
            // a small score can still leave β loose when the likelihood is flat; polish once
            converged = true;
        }
        let info = weighted_gram(xm, &w);
        let Some(chol) = info.cholesky() else { break };
        let delta = chol.solve(&score);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &beta + &delta * step;
            let cand_eta = xm * &candidate;
            let cand_dev = deviance_from_eta(&cand_eta, y);
            // tolerate summation rounding so the last Newton step near the optimum is taken
            if cand_dev.is_finite() && cand_dev <= dev + 1e-13 * (dev.abs() + 1.0) {
                accepted = Some((candidate, cand_eta, cand_dev));
                break;
            }
            step *= 0.5;
        }
        n_iter += 1;
        let Some((new_beta, new_eta, new_dev)) = accepted else { break };
        let rel = (dev - new_dev).abs() / (new_dev.abs() + 0.1);
        beta = new_beta;
        eta = new_eta;
        dev = new_dev;
        if converged {
            break;
        }
        if rel < opts.rel_deviance_tol {
            // one more Newton step: the deviance is flat long before β stops moving
            converged = true;
        }
    }

    if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
        converged = false;
    }
    Ok(IrlsPath {
        beta,
        eta,
        deviance: dev,
        n_iter,
        converged,
    })
}

fn finish_fit(x: &DesignMatrix, path: IrlsPath) -> Result<GlmFit> {
    let w: Vec<f64> = path
        .eta
        .iter()
        .map(|&e| {
            let mu = logistic(e);
            (mu * (1.0 - mu)).max(1e-300)
        })
        .collect();
    let info = weighted_gram(x.matrix(), &w);
    let cov = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.try_inverse())
        .ok_or_else(|| Error::Numeric("Fisher information is singular".into()))?;
    let cov = (&cov + cov.transpose()) * 0.5;
    let p = cov.ncols();

    Ok(GlmFit {
        terms: x.terms().to_vec(),
        coefficients: path.beta.iter().copied().collect(),
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        deviance: path.deviance,
        aic: path.deviance + 2.0 * p as f64,
        n_iter: path.n_iter,
        converged: path.converged,
        n_obs: x.matrix().nrows(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Multivariate Wald test of `β_S = 0`: `β_Sᵀ V_S⁻¹ β_S ~ χ²(|S|)`.
pub fn wald_test<S: AsRef<str>>(fit: &GlmFit, terms: &[S]) -> Result<TestResult> {
    let idx: Vec<usize> = terms
        .iter()
        .map(|t| {
            fit.term_index(t.as_ref())
                .ok_or_else(|| Error::Usage(format!("term `{}` is not in the fit", t.as_ref())))
        })
        .collect::<Result<_>>()?;
    let k = idx.len();
    if k == 0 {
        return Err(Error::Usage("Wald test needs at least one term".into()));
    }
    let b = DVector::from_iterator(k, idx.iter().map(|&i| fit.coefficients[i]));
    let v = DMatrix::from_fn(k, k, |i, j| fit.covariance[idx[i]][idx[j]]);
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::Numeric("sub-covariance is singular".into()))?;
    let statistic = b.dot(&chol.solve(&b));
    Ok(TestResult {
        statistic,
        df: k as f64,
        p_value: chi2_sf(statistic, k as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrtResult {
    pub test: TestResult,
    /// The raw deviance difference was negative and has been set to zero.
    pub clamped: bool,
}

/// `deviance(reduced) - deviance(full)` against `χ²(p_full - p_reduced)`.
pub fn likelihood_ratio_test(full: &GlmFit, reduced: &GlmFit) -> Result<LrtResult> {
    if full.n_obs != reduced.n_obs {
        return Err(Error::Usage(format!(
            "models were fitted on {} and {} rows",
            full.n_obs, reduced.n_obs
        )));
    }
    if let Some(t) = reduced.terms.iter().find(|t| full.term_index(t).is_none()) {
        return Err(Error::Usage(format!("reduced-model term `{t}` is not in the full model")));
    }
    let df = (full.n_terms() - reduced.n_terms()) as f64;
    let raw = reduced.deviance - full.deviance;
    let clamped = raw < 0.0;
    let statistic = raw.max(0.0);
    let p_value = if df == 0.0 { 1.0 } else { chi2_sf(statistic, df) };
    Ok(LrtResult {
        test: TestResult {
            statistic,
            df,
            p_value,
        },
        clamped,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCriterion {
    #[default]
    Aic,
    /// Drop the largest Wald p-value while it exceeds the level.
    PValue(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepwiseResult {
    pub fit: GlmFit,
    /// Retained non-intercept terms, in design order.
    pub selected: Vec<String>,
    /// Removed terms, in removal order.
    pub dropped: Vec<String>,
}

/// Start for the model without column `drop`: the conditional mean of the
/// remaining coefficients given `β_drop = 0` under the current covariance.
fn reduced_start(fit: &GlmFit, keep: &[usize], drop: usize) -> Vec<f64> {
    let vdd = fit.covariance[drop][drop];
    let bd = fit.coefficients[drop];
    keep.iter()
        .map(|&j| fit.coefficients[j] - fit.covariance[j][drop] / vdd * bd)
        .collect()
}

/// Newton path of a sub-model; a warm start that fails to converge is
/// retried from zero so it cannot change the answer.
fn refit_path(x: &DesignMatrix, y: &[f64], start: Option<Vec<f64>>) -> Result<IrlsPath> {
    let opts = IrlsOptions {
        start,
        check_rank: false,
        ..IrlsOptions::default()
    };
    let path = irls_path(x.matrix(), y, &opts)?;
    if path.converged || opts.start.is_none() {
        return Ok(path);
    }
    irls_path(
        x.matrix(),
        y,
        &IrlsOptions {
            check_rank: false,
            ..IrlsOptions::default()
        },
    )
}

fn refit(x: &DesignMatrix, y: &[f64], keep: &[usize], start: Option<Vec<f64>>) -> Result<GlmFit> {
    let sub = x.select(keep);
    let path = refit_path(&sub, y, start)?;
    finish_fit(&sub, path)
}

/// Backward elimination from the full model. The intercept is never
/// dropped; ties go to the earlier term.
pub fn backward_stepwise(x: &DesignMatrix, y: &[f64], criterion: StepCriterion) -> Result<StepwiseResult> {
    let mut keep: Vec<usize> = (0..x.n_terms()).collect();
    let mut current = fit_logistic_irls(x, y)?;
    let mut dropped = Vec::new();

    loop {
        if keep.len() == 1 {
            break;
        }
        let choice = match criterion {
            StepCriterion::Aic => {
                // candidates only need a deviance; the covariance is built for the winner
                let mut best: Option<(usize, DesignMatrix, IrlsPath)> = None;
                for pos in 1..keep.len() {
                    let reduced: Vec<usize> = keep.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, &j)| j).collect();
                    let start_keep: Vec<usize> = (0..keep.len()).filter(|&i| i != pos).collect();
                    let start = reduced_start(&current, &start_keep, pos);
                    let sub = x.select(&reduced);
                    let path = refit_path(&sub, y, Some(start))?;
                    if best.as_ref().is_none_or(|(_, _, b)| path.deviance < b.deviance) {
                        best = Some((pos, sub, path));
                    }
                }
                match best {
                    Some((pos, sub, path)) if path.deviance + 2.0 * (sub.n_terms() as f64) < current.aic => {
                        Some((pos, finish_fit(&sub, path)?))
                    }
                    _ => None,
                }
            }
            StepCriterion::PValue(alpha) => {
                let p = current.p_values();
                let mut worst: Option<usize> = None;
                for pos in 1..keep.len() {
                    if worst.is_none_or(|w| p[pos] > p[w]) {
                        worst = Some(pos);
                    }
                }
                match worst {
                    Some(pos) if p[pos] > alpha => {
                        let reduced: Vec<usize> = keep.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, &j)| j).collect();
                        let start_keep: Vec<usize> = (0..keep.len()).filter(|&i| i != pos).collect();
                        let start = reduced_start(&current, &start_keep, pos);
                        Some((pos, refit(x, y, &reduced, Some(start))?))
                    }
                    _ => None,
                }
            }
        };
        match choice {
            Some((pos, fit)) => {
                dropped.push(x.terms()[keep[pos]].clone());
                keep.remove(pos);
                current = fit;
            }
            None => break,
        }
    }

    Ok(StepwiseResult {
        selected: current.terms[1..].to_vec(),
        fit: current,
        dropped,
    })
}
