//! Combining results across imputations: Rubin's rules, pooled Wald (D1)
//! and likelihood-ratio (D3) tests, selection tallies and the supermodel.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataTable;
use crate::dist::{f_sf, t_two_sided, DF_CAP};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic_irls, logistic_deviance, DesignMatrix, GlmFit, INTERCEPT};
use crate::util::fmt_f64;

/// Coefficients and their covariance from one completed dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl CoefficientSet {
    /// A set with a diagonal covariance built from standard errors.
    pub fn from_se(terms: Vec<String>, beta: Vec<f64>, se: &[f64]) -> Self {
        let covariance = DMatrix::from_diagonal(&DVector::from_iterator(se.len(), se.iter().map(|s| s * s)));
        CoefficientSet {
            terms,
            beta,
            covariance,
        }
    }
}

impl From<&GlmFit> for CoefficientSet {
    fn from(fit: &GlmFit) -> Self {
        CoefficientSet {
            terms: fit.terms.clone(),
            beta: fit.coefficients.clone(),
            covariance: fit.covariance_matrix(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DfMethod {
    /// `(m-1)(1 + W/((1+1/m)B))²`.
    #[default]
    Rubin,
    /// Small-sample adjustment given the complete-data residual df.
    BarnardRubin { complete_df: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub term: String,
    pub m: usize,
    pub qbar: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub df: f64,
    pub fmi: f64,
    pub p_value: f64,
}

impl PooledEstimate {
    pub fn se_total(&self) -> f64 {
        self.total.sqrt()
    }

    /// Symmetric t interval at the given coverage.
    pub fn confidence_interval(&self, level: f64) -> (f64, f64) {
        let q = t_quantile(0.5 + level / 2.0, self.df);
        let half = q * self.se_total();
        (self.qbar - half, self.qbar + half)
    }
}

fn t_quantile(p: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
    if df >= DF_CAP {
        Normal::standard().inverse_cdf(p)
    } else {
        StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(p)
    }
}

fn rubin_df(m: f64, w: f64, b: f64, method: DfMethod) -> f64 {
    let between = (1.0 + 1.0 / m) * b;
    let classic = if between > 0.0 {
        ((m - 1.0) * (1.0 + w / between).powi(2)).min(DF_CAP)
    } else {
        DF_CAP
    };
    match method {
        DfMethod::Rubin => classic,
        DfMethod::BarnardRubin { complete_df } => {
            let lambda = between / (w + between);
            let observed = (complete_df + 1.0) / (complete_df + 3.0) * complete_df * (1.0 - lambda);
            if between > 0.0 {
                let old = (m - 1.0) / (lambda * lambda);
                old * observed / (old + observed)
            } else {
                observed
            }
        }
    }
}

/// Rubin's rules for a single scalar estimated in each of `m` imputations.
pub fn pool_scalar(term: &str, beta: &[f64], variance: &[f64], df_method: DfMethod) -> Result<PooledEstimate> {
    let m = beta.len();
    if m < 2 {
        return Err(Error::Usage(format!("pooling needs at least 2 imputations, got {m}")));
    }
    if variance.len() != m {
        return Err(Error::Usage("one variance per estimate is required".into()));
    }
    let mf = m as f64;
    let qbar = beta.iter().sum::<f64>() / mf;
    let within = variance.iter().sum::<f64>() / mf;
    if !(within > 0.0) {
        return Err(Error::Numeric(format!("within-imputation variance of `{term}` is not positive")));
    }
    let between = beta.iter().map(|b| (b - qbar).powi(2)).sum::<f64>() / (mf - 1.0);
    let total = within + (1.0 + 1.0 / mf) * between;
    let df = rubin_df(mf, within, between, df_method);
    let fmi = (1.0 + 1.0 / mf) * between / total;
    let p_value = t_two_sided(qbar / total.sqrt(), df);
    Ok(PooledEstimate {
        term: term.to_string(),
        m,
        qbar,
        within,
        between,
        total,
        df,
        fmi,
        p_value,
    })
}

fn check_terms(sets: &[CoefficientSet]) -> Result<()> {
    if sets.len() < 2 {
        return Err(Error::Usage(format!("pooling needs at least 2 imputations, got {}", sets.len())));
    }
    let first = &sets[0].terms;
    for (k, s) in sets.iter().enumerate() {
        if &s.terms != first {
            return Err(Error::Usage(format!("imputation {k} has different terms from imputation 0")));
        }
        if s.beta.len() != first.len() || s.covariance.nrows() != first.len() || s.covariance.ncols() != first.len() {
            return Err(Error::Usage(format!("imputation {k} has inconsistent dimensions")));
        }
    }
    Ok(())
}

/// Term-by-term Rubin pooling.
pub fn pool_rubin(sets: &[CoefficientSet], df_method: DfMethod) -> Result<Vec<PooledEstimate>> {
    check_terms(sets)?;
    (0..sets[0].terms.len())
        .map(|j| {
            let beta: Vec<f64> = sets.iter().map(|s| s.beta[j]).collect();
            let var: Vec<f64> = sets.iter().map(|s| s.covariance[(j, j)]).collect();
            pool_scalar(&sets[0].terms[j], &beta, &var, df_method)
        })
        .collect()
}

pub fn pool_fits(fits: &[GlmFit], df_method: DfMethod) -> Result<Vec<PooledEstimate>> {
    let sets: Vec<CoefficientSet> = fits.iter().map(CoefficientSet::from).collect();
    pool_rubin(&sets, df_method)
}

/// `term,qbar,se_total,df,fmi,p`
pub fn pooled_csv(pooled: &[PooledEstimate]) -> String {
    let mut out = String::from("term,qbar,se_total,df,fmi,p\n");
    for p in pooled {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.term,
            fmt_f64(p.qbar),
            fmt_f64(p.se_total()),
            fmt_f64(p.df),
            fmt_f64(p.fmi),
            fmt_f64(p.p_value)
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledTest {
    pub statistic: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    /// Average relative increase in variance due to nonresponse.
    pub r: f64,
}

/// D1 internals, kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct D1Detail {
    pub test: PooledTest,
    pub qbar: DVector<f64>,
    pub within: DMatrix<f64>,
    pub between: DMatrix<f64>,
}

/// Denominator df of the pooled F reference for `k` tested parameters.
pub fn pooled_test_df(k: usize, m: usize, r: f64) -> f64 {
    if !(r > 0.0) {
        return DF_CAP;
    }
    let kf = k as f64;
    let t = kf * (m as f64 - 1.0);
    let v = if t > 4.0 {
        4.0 + (t - 4.0) * (1.0 + (1.0 - 2.0 / t) / r).powi(2)
    } else {
        t * (1.0 + 1.0 / kf) * (1.0 + 1.0 / r).powi(2) / 2.0
    };
    v.min(DF_CAP)
}

fn indices_of<S: AsRef<str>>(set: &CoefficientSet, terms: &[S]) -> Result<Vec<usize>> {
    terms
        .iter()
        .map(|t| {
            set.terms
                .iter()
                .position(|x| x == t.as_ref())
                .ok_or_else(|| Error::Usage(format!("term `{}` is not in the model", t.as_ref())))
        })
        .collect()
}

/// Pooled multivariate Wald test of `β_S = 0`.
pub fn pooled_wald_d1<S: AsRef<str>>(sets: &[CoefficientSet], terms: &[S]) -> Result<D1Detail> {
    check_terms(sets)?;
    let idx = indices_of(&sets[0], terms)?;
    let k = idx.len();
    if k == 0 {
        return Err(Error::Usage("pooled Wald test needs at least one term".into()));
    }
    let m = sets.len();
    let mf = m as f64;
    let sub = |s: &CoefficientSet| DVector::from_iterator(k, idx.iter().map(|&i| s.beta[i]));
    let qs: Vec<DVector<f64>> = sets.iter().map(sub).collect();
    let qbar = qs.iter().fold(DVector::zeros(k), |a, q| a + q) / mf;
    let within = sets.iter().fold(DMatrix::zeros(k, k), |a, s| {
        a + DMatrix::from_fn(k, k, |i, j| s.covariance[(idx[i], idx[j])])
    }) / mf;
    let between = qs.iter().fold(DMatrix::zeros(k, k), |a, q| {
        let d = q - &qbar;
        a + &d * d.transpose()
    }) / (mf - 1.0);

    let chol = within
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("mean within-imputation covariance is singular".into()))?;
    let r = (1.0 + 1.0 / mf) * chol.solve(&between).trace() / k as f64;
    let statistic = qbar.dot(&chol.solve(&qbar)) / (k as f64 * (1.0 + r));
    let df2 = pooled_test_df(k, m, r);
    Ok(D1Detail {
        test: PooledTest {
            statistic,
            df1: k as f64,
            df2,
            p_value: f_sf(statistic, k as f64, df2),
            r,
        },
        qbar,
        within,
        between,
    })
}

/// Pooled likelihood-ratio test (Meng and Rubin) of the full model against
/// the model without `terms`. Each element of `data` is one completed
/// dataset's full design and response.
pub fn pooled_lrt_d3<S: AsRef<str>>(data: &[(DesignMatrix, Vec<f64>)], terms: &[S]) -> Result<PooledTest> {
    let m = data.len();
    if m < 2 {
        return Err(Error::Usage(format!("pooling needs at least 2 imputations, got {m}")));
    }
    let full_terms = data[0].0.terms().to_vec();
    let drop: Vec<usize> = terms
        .iter()
        .map(|t| {
            full_terms
                .iter()
                .position(|x| x == t.as_ref())
                .ok_or_else(|| Error::Usage(format!("term `{}` is not in the model", t.as_ref())))
        })
        .collect::<Result<_>>()?;
    let k = drop.len();
    if k == 0 {
        return Err(Error::Usage("pooled LRT needs at least one term".into()));
    }
    let keep: Vec<usize> = (0..full_terms.len()).filter(|j| !drop.contains(j)).collect();

    let mut full_fits = Vec::with_capacity(m);
    let mut reduced_fits = Vec::with_capacity(m);
    for (x, y) in data {
        if x.terms() != full_terms.as_slice() {
            return Err(Error::Usage("designs have different terms".into()));
        }
        full_fits.push(fit_logistic_irls(x, y)?);
        reduced_fits.push(fit_logistic_irls(&x.select(&keep), y)?);
    }
    let mf = m as f64;
    let avg = |fits: &[GlmFit], j: usize| fits.iter().map(|f| f.coefficients[j]).sum::<f64>() / mf;
    let beta_full: Vec<f64> = (0..full_terms.len()).map(|j| avg(&full_fits, j)).collect();
    let beta_red: Vec<f64> = (0..keep.len()).map(|j| avg(&reduced_fits, j)).collect();

    let d_m = full_fits
        .iter()
        .zip(&reduced_fits)
        .map(|(f, r)| r.deviance - f.deviance)
        .sum::<f64>()
        / mf;
    let d_l = data
        .iter()
        .map(|(x, y)| logistic_deviance(&x.select(&keep), y, &beta_red) - logistic_deviance(x, y, &beta_full))
        .sum::<f64>()
        / mf;
    let kf = k as f64;
    let r = ((mf + 1.0) / (kf * (mf - 1.0)) * (d_m - d_l)).max(0.0);
    let statistic = (d_l / (kf * (1.0 + r))).max(0.0);
    let df2 = pooled_test_df(k, m, r);
    Ok(PooledTest {
        statistic,
        df1: kf,
        df2,
        p_value: f_sf(statistic, kf, df2),
        r,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PooledTestKind {
    #[default]
    D1,
    D3,
}

/// Number of per-imputation models selecting each candidate term.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionTally {
    pub m: usize,
    pub counts: BTreeMap<String, usize>,
}

impl SelectionTally {
    pub fn count(&self, term: &str) -> usize {
        self.counts.get(term).copied().unwrap_or(0)
    }
}

/// Counts each candidate's appearances among `models`. Terms outside
/// `candidates` are counted too.
pub fn tally_selected<S: AsRef<str>>(candidates: &[S], models: &[Vec<String>]) -> SelectionTally {
    let mut counts: BTreeMap<String, usize> = candidates.iter().map(|c| (c.as_ref().to_string(), 0)).collect();
    for model in models {
        let mut seen: Vec<&String> = model.iter().filter(|t| *t != INTERCEPT).collect();
        seen.sort();
        seen.dedup();
        for t in seen {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    SelectionTally { m: models.len(), counts }
}

/// One row per term, one `count_m<m>` column per tally.
pub fn tally_csv(tallies: &[&SelectionTally]) -> String {
    let mut terms: Vec<&String> = tallies.iter().flat_map(|t| t.counts.keys()).collect();
    terms.sort();
    terms.dedup();
    let mut out = String::from("term");
    for t in tallies {
        let _ = write!(out, ",count_m{}", t.m);
    }
    out.push('\n');
    for term in terms {
        out.push_str(term);
        for t in tallies {
            let _ = write!(out, ",{}", t.count(term));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateTest {
    pub term: String,
    pub count: usize,
    pub p_value: f64,
    pub kept: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Supermodel {
    /// Terms selected in every imputation.
    pub core: Vec<String>,
    /// Minority terms in testing order.
    pub tests: Vec<CandidateTest>,
    /// Final variables: core then kept candidates.
    pub terms: Vec<String>,
    pub fits: Vec<GlmFit>,
    pub pooled: Vec<PooledEstimate>,
}

/// Design columns belonging to variable `var` (one, or several indicators).
fn design_columns(x: &DesignMatrix, var: &str) -> Vec<String> {
    let prefix = format!("{var}[");
    x.terms()
        .iter()
        .filter(|t| *t == var || t.starts_with(&prefix))
        .cloned()
        .collect()
}

fn fit_all<S: AsRef<str>>(completed: &[DataTable], outcome: &str, terms: &[S]) -> Result<Vec<(DesignMatrix, Vec<f64>, GlmFit)>> {
    completed
        .iter()
        .map(|t| {
            let x = DesignMatrix::from_table(t, terms)?;
            let yc = t.require(outcome)?;
            let y: Vec<f64> = t
                .column(yc)
                .iter()
                .map(|v| v.ok_or_else(|| Error::Precondition(format!("outcome `{outcome}` has missing values"))))
                .collect::<Result<_>>()?;
            let fit = fit_logistic_irls(&x, &y)?;
            Ok((x, y, fit))
        })
        .collect()
}

/// Impute-then-select supermodel.
///
/// Terms chosen in all `m` imputations form the core. Every other term with
/// a nonzero count is tried in order of decreasing count (ties by name): it
/// is added to the core plus the candidates kept so far, the model is refit
/// on every completed dataset, and the term stays if the pooled test gives
/// `p < alpha`. The final model is refit on all datasets and pooled.
pub fn build_supermodel(
    tally: &SelectionTally,
    completed: &[DataTable],
    outcome: &str,
    alpha: f64,
    test: PooledTestKind,
) -> Result<Supermodel> {
    if completed.len() != tally.m {
        return Err(Error::Usage(format!(
            "tally counts {} models but {} completed datasets were given",
            tally.m,
            completed.len()
        )));
    }
    let core: Vec<String> = tally
        .counts
        .iter()
        .filter(|(_, &c)| c == tally.m)
        .map(|(t, _)| t.clone())
        .collect();
    let mut candidates: Vec<(&String, usize)> = tally
        .counts
        .iter()
        .filter(|(_, &c)| c > 0 && c < tally.m)
        .map(|(t, &c)| (t, c))
        .collect();
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut terms = core.clone();
    let mut tests = Vec::new();
    for (cand, count) in candidates {
        let mut trial = terms.clone();
        trial.push(cand.clone());
        let fitted = fit_all(completed, outcome, &trial)?;
        let cols = design_columns(&fitted[0].0, cand);
        let p_value = match test {
            PooledTestKind::D1 => {
                let sets: Vec<CoefficientSet> = fitted.iter().map(|(_, _, f)| CoefficientSet::from(f)).collect();
                pooled_wald_d1(&sets, &cols)?.test.p_value
            }
            PooledTestKind::D3 => {
                let data: Vec<(DesignMatrix, Vec<f64>)> = fitted.into_iter().map(|(x, y, _)| (x, y)).collect();
                pooled_lrt_d3(&data, &cols)?.p_value
            }
        };
        let kept = p_value < alpha;
        if kept {
            terms = trial;
        }
        tests.push(CandidateTest {
            term: cand.clone(),
            count,
            p_value,
            kept,
        });
    }

    let fits: Vec<GlmFit> = fit_all(completed, outcome, &terms)?.into_iter().map(|(_, _, f)| f).collect();
    let pooled = pool_fits(&fits, DfMethod::Rubin)?;
    Ok(Supermodel {
        core,
        tests,
        terms,
        fits,
        pooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;
    use approx::assert_abs_diff_eq;

    fn scalar_sets(beta: &[f64], var: &[f64]) -> Vec<CoefficientSet> {
        beta.iter()
            .zip(var)
            .map(|(&b, &v)| CoefficientSet::from_se(vec!["x".into()], vec![b], &[v.sqrt()]))
            .collect()
    }

    #[test]
    fn hand_case() {
        let p = &pool_rubin(&scalar_sets(&[1.0, 2.0, 3.0], &[0.5; 3]), DfMethod::Rubin).unwrap()[0];
        assert_abs_diff_eq!(p.qbar, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.within, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.between, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.total, 0.5 + 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.df, 3.78125, epsilon = 1e-12);
        assert_abs_diff_eq!(p.fmi, (4.0 / 3.0) / (0.5 + 4.0 / 3.0), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let p = &pool_rubin(&scalar_sets(&[1.5; 4], &[0.2; 4]), DfMethod::Rubin).unwrap()[0];
        assert_eq!(p.between, 0.0);
        assert_eq!(p.total, p.within);
        assert_eq!(p.df, DF_CAP);
        assert_eq!(p.fmi, 0.0);

        let p = &pool_rubin(&scalar_sets(&[0.0, 0.0], &[1.0, 1.0]), DfMethod::Rubin).unwrap()[0];
        assert_eq!(p.qbar, 0.0);
        assert_eq!(p.p_value, 1.0);

        let p = &pool_rubin(&scalar_sets(&[0.25, 0.75], &[1.0, 1.0]), DfMethod::Rubin).unwrap()[0];
        assert_eq!(p.qbar, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(pool_rubin(&scalar_sets(&[1.0], &[1.0]), DfMethod::Rubin), Err(Error::Usage(_))));
        let mut sets = scalar_sets(&[1.0, 2.0], &[1.0, 1.0]);
        sets[1].terms = vec!["z".into()];
        assert!(matches!(pool_rubin(&sets, DfMethod::Rubin), Err(Error::Usage(_))));
    }

    #[test]
    fn barnard_rubin_never_exceeds_complete_df() {
        let sets = scalar_sets(&[1.0, 1.2, 0.9, 1.1, 1.05], &[0.3; 5]);
        let classic = pool_rubin(&sets, DfMethod::Rubin).unwrap()[0].df;
        let br = pool_rubin(&sets, DfMethod::BarnardRubin { complete_df: 50.0 }).unwrap()[0].df;
        assert!(br < 50.0);
        assert!(br < classic);
    }

    #[test]
    fn interval_covers_estimate() {
        let p = &pool_rubin(&scalar_sets(&[1.0, 2.0, 3.0], &[0.5; 3]), DfMethod::Rubin).unwrap()[0];
        let (lo, hi) = p.confidence_interval(0.95);
        assert!(lo < 2.0 && hi > 2.0);
        assert_abs_diff_eq!((lo + hi) / 2.0, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn d1_without_between_variance_is_wald_over_k() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]);
        let set = CoefficientSet {
            terms: vec!["a".into(), "b".into()],
            beta: vec![1.0, -0.5],
            covariance: cov.clone(),
        };
        let d = pooled_wald_d1(&[set.clone(), set.clone(), set], &["a", "b"]).unwrap();
        let b = DVector::from_vec(vec![1.0, -0.5]);
        let wald = b.dot(&(cov.try_inverse().unwrap() * &b));
        assert_abs_diff_eq!(d.test.statistic, wald / 2.0, epsilon = 1e-12);
        assert_eq!(d.test.r, 0.0);
        assert_eq!(d.test.df2, DF_CAP);
    }

    #[test]
    fn d1_one_term_matches_rubin_t() {
        let beta: Vec<f64> = (0..20).map(|i| 0.8 + 0.01 * ((i * 7) % 5) as f64).collect();
        let sets = scalar_sets(&beta, &[0.04; 20]);
        let rubin = &pool_rubin(&sets, DfMethod::Rubin).unwrap()[0];
        let d1 = pooled_wald_d1(&sets, &["x"]).unwrap().test;
        let t = rubin.qbar / rubin.se_total();
        assert_abs_diff_eq!(d1.statistic, t * t, epsilon = 1e-10);
        assert!((d1.p_value - rubin.p_value).abs() < 1e-6);
    }

    #[test]
    fn singular_within_is_numeric_error() {
        let sets = scalar_sets(&[1.0, 2.0], &[0.0, 0.0]);
        assert!(matches!(pooled_wald_d1(&sets, &["x"]), Err(Error::Numeric(_))));
    }

    #[test]
    fn tallies() {
        let models = vec![
            vec!["Age".to_string(), "RDW".into()],
            vec!["Age".to_string()],
            vec!["Age".to_string(), INTERCEPT.into()],
        ];
        let t = tally_selected(&["Age", "RDW", "Sex"], &models);
        assert_eq!(t.m, 3);
        assert_eq!((t.count("Age"), t.count("RDW"), t.count("Sex")), (3, 1, 0));
        assert!(!t.counts.contains_key(INTERCEPT));
        let csv = tally_csv(&[&t]);
        assert_eq!(csv, "term,count_m3\nAge,3\nRDW,1\nSex,0\n");
    }

    fn toy_completed(m: usize) -> Vec<DataTable> {
        (0..m)
            .map(|k| {
                let n = 200;
                let a: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 101) as f64 / 50.0 - 1.0).collect();
                let noise: Vec<f64> = (0..n).map(|i| ((i * 53 + 7 * k + 3) % 97) as f64 / 48.0 - 1.0).collect();
                let y: Vec<f64> = (0..n)
                    .map(|i| {
                        let p = 1.0 / (1.0 + (-(2.5 * a[i])).exp());
                        let u = ((i * 71 + 13) % 89) as f64 / 89.0;
                        (u < p) as u8 as f64
                    })
                    .collect();
                DataTable::new(
                    vec![ColumnSpec::outcome("y"), ColumnSpec::continuous("a"), ColumnSpec::continuous("noise")],
                    vec![
                        y.into_iter().map(Some).collect(),
                        a.into_iter().map(Some).collect(),
                        noise.into_iter().map(Some).collect(),
                    ],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn supermodel_with_unanimous_tally_runs_no_tests() {
        let completed = toy_completed(3);
        let models = vec![vec!["a".to_string(), "noise".into()]; 3];
        let tally = tally_selected(&["a", "noise"], &models);
        let s = build_supermodel(&tally, &completed, "y", 0.05, PooledTestKind::D1).unwrap();
        assert!(s.tests.is_empty());
        assert_eq!(s.terms, vec!["a", "noise"]);
        assert_eq!(s.pooled.len(), 3);
    }

    #[test]
    fn supermodel_tests_minority_terms_in_order() {
        let completed = toy_completed(4);
        let models = vec![
            vec!["noise".to_string()],
            vec!["a".to_string(), "noise".into()],
            vec!["a".to_string(), "noise".into()],
            vec!["a".to_string(), "noise".into()],
        ];
        let tally = tally_selected(&["a", "noise"], &models);
        for kind in [PooledTestKind::D1, PooledTestKind::D3] {
            let s = build_supermodel(&tally, &completed, "y", 0.05, kind).unwrap();
            assert_eq!(s.core, vec!["noise"]);
            assert_eq!(s.tests.len(), 1);
            assert_eq!(s.tests[0].term, "a");
            assert!(s.tests[0].kept, "strong effect should survive: {:?}", s.tests[0]);
            assert_eq!(s.terms, vec!["noise", "a"]);
        }
    }
}
