//! Single-variable imputation models used inside each chained-equations sweep.
//!
//! Every imputer sees the observed outcome values, a design for the rows
//! that observe it and a design for the rows to fill. The public wrappers
//! take a partially observed column and a predictor matrix without an
//! intercept column; the intercept is added here.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::glm::{fit_logistic_irls, gram, DesignMatrix, INTERCEPT};
use crate::util::logistic;

/// Imputed values for the missing rows, in row order.
#[derive(Clone, Debug, PartialEq)]
pub struct Draws {
    pub values: Vec<f64>,
    /// The normal equations were singular and a ridge penalty was added.
    pub ridge: bool,
    /// The logistic model failed and marginal class frequencies were used.
    pub fallback: bool,
}

pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    out.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    out
}

struct Split {
    y_obs: Vec<f64>,
    x_obs: DMatrix<f64>,
    x_mis: DMatrix<f64>,
}

fn split(y: &[Option<f64>], x: &DMatrix<f64>) -> Result<Split> {
    if x.nrows() != y.len() {
        return Err(Error::Usage(format!(
            "{} outcome rows but {} predictor rows",
            y.len(),
            x.nrows()
        )));
    }
    let obs: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    let mis: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_none()).collect();
    Ok(Split {
        y_obs: obs.iter().map(|&i| y[i].unwrap_or_default()).collect(),
        x_obs: with_intercept(&x.select_rows(&obs)),
        x_mis: with_intercept(&x.select_rows(&mis)),
    })
}

fn check_counts(n_obs: usize, n_cols: usize) -> Result<()> {
    // n_cols includes the intercept
    let predictors = n_cols - 1;
    if n_obs <= predictors + 2 {
        return Err(Error::Precondition(format!(
            "{n_obs} observed values are too few for {predictors} predictors"
        )));
    }
    Ok(())
}

/// Least-squares fit with the pieces needed for posterior draws.
struct LinearPosterior {
    beta_hat: DVector<f64>,
    /// Lower Cholesky factor of the (possibly ridged) `XᵀX`.
    xtx_chol: DMatrix<f64>,
    rss: f64,
    df: f64,
    ridge: bool,
}

impl LinearPosterior {
    fn fit(y_obs: &[f64], x_obs: &DMatrix<f64>) -> Result<Self> {
        let n = x_obs.nrows();
        let p = x_obs.ncols();
        check_counts(n, p)?;
        let xtx = gram(x_obs);
        let yv = DVector::from_column_slice(y_obs);
        let xty = x_obs.tr_mul(&yv);

        let max_diag = (0..p).map(|j| xtx[(j, j)]).fold(0.0f64, f64::max);
        let well_conditioned = |l: &DMatrix<f64>| {
            let min_pivot = (0..p).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
            min_pivot > 1e-12 * max_diag
        };
        let (chol, ridge) = match xtx.clone().cholesky() {
            Some(c) if well_conditioned(&c.l()) => (c, false),
            _ => {
                let penalty = 1e-5 * xtx.trace() / p as f64;
                let ridged = &xtx + DMatrix::identity(p, p) * penalty.max(f64::MIN_POSITIVE);
                let c = ridged
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("normal equations singular after ridge".into()))?;
                (c, true)
            }
        };
        let beta_hat = chol.solve(&xty);
        let resid = &yv - x_obs * &beta_hat;
        Ok(LinearPosterior {
            beta_hat,
            xtx_chol: chol.l(),
            rss: resid.norm_squared(),
            df: (n - p) as f64,
            ridge,
        })
    }

    /// `σ* = sqrt(rss / g)` with `g ~ χ²(n - p)`, then `β* = β̂ + σ* L⁻ᵀ z`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, f64) {
        let g: f64 = ChiSquared::new(self.df).expect("df > 0").sample(rng);
        let sigma = (self.rss / g).sqrt();
        let p = self.beta_hat.len();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let offset = self
            .xtx_chol
            .transpose()
            .solve_upper_triangular(&z)
            .unwrap_or_else(|| DVector::zeros(p));
        (&self.beta_hat + offset * sigma, sigma)
    }
}

pub(crate) fn draw_bayes_linear<R: Rng + ?Sized>(
    y_obs: &[f64],
    x_obs: &DMatrix<f64>,
    x_mis: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Draws> {
    let post = LinearPosterior::fit(y_obs, x_obs)?;
    let (beta, sigma) = post.draw(rng);
    let mean = x_mis * beta;
    let values = mean
        .iter()
        .map(|&m| m + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Draws {
        values,
        ridge: post.ridge,
        fallback: false,
    })
}

/// Indices of the `k` entries of `sorted` (ascending by value) closest to
/// `target`; ties prefer the lower value.
fn nearest_k(sorted: &[(f64, usize)], target: f64, k: usize) -> Vec<usize> {
    let mut hi = sorted.partition_point(|&(v, _)| v < target);
    let mut lo = hi;
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let left = (lo > 0).then(|| target - sorted[lo - 1].0);
        let right = (hi < sorted.len()).then(|| sorted[hi].0 - target);
        match (left, right) {
            (Some(l), Some(r)) if l <= r => {
                lo -= 1;
                out.push(sorted[lo].1);
            }
            (Some(_), Some(_)) | (None, Some(_)) => {
                out.push(sorted[hi].1);
                hi += 1;
            }
            (Some(_), None) => {
                lo -= 1;
                out.push(sorted[lo].1);
            }
            (None, None) => break,
        }
    }
    out
}

/// Type-1 predictive mean matching: observed rows are predicted with `β̂`,
/// missing rows with a posterior draw `β*`, and each missing row copies the
/// observed value of a donor drawn uniformly from its `donors` nearest
/// predicted neighbours.
pub(crate) fn draw_pmm<R: Rng + ?Sized>(
    y_obs: &[f64],
    x_obs: &DMatrix<f64>,
    x_mis: &DMatrix<f64>,
    donors: usize,
    rng: &mut R,
) -> Result<Draws> {
    if donors == 0 || donors > y_obs.len() {
        return Err(Error::Precondition(format!(
            "{donors} donors requested from {} observed values",
            y_obs.len()
        )));
    }
    let post = LinearPosterior::fit(y_obs, x_obs)?;
    let (beta_star, _) = post.draw(rng);
    let pred_obs = x_obs * &post.beta_hat;
    let pred_mis = x_mis * beta_star;

    let mut sorted: Vec<(f64, usize)> = pred_obs.iter().copied().zip(0..).collect();
    sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let values = pred_mis
        .iter()
        .map(|&target| {
            let pool = nearest_k(&sorted, target, donors);
            y_obs[pool[rng.random_range(0..pool.len())]]
        })
        .collect();
    Ok(Draws {
        values,
        ridge: post.ridge,
        fallback: false,
    })
}

pub(crate) fn draw_logistic<R: Rng + ?Sized>(
    y_obs: &[f64],
    x_obs: &DMatrix<f64>,
    x_mis: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Draws> {
    let positives = y_obs.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y_obs.len() {
        return Err(Error::Precondition(
            "logistic imputation needs both classes among observed values".into(),
        ));
    }
    let mut terms = vec![INTERCEPT.to_string()];
    terms.extend((1..x_obs.ncols()).map(|j| format!("x{j}")));
    let fitted = DesignMatrix::new(terms, x_obs.clone())
        .and_then(|d| fit_logistic_irls(&d, y_obs))
        .ok()
        .filter(|f| f.converged);

    let probabilities: Vec<f64> = match &fitted {
        Some(fit) => {
            let p = fit.n_terms();
            let cov = fit.covariance_matrix();
            let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let shift = cov.cholesky().map(|c| c.l() * z).unwrap_or_else(|| DVector::zeros(p));
            let beta = DVector::from_column_slice(&fit.coefficients) + shift;
            (x_mis * beta).iter().map(|&e| logistic(e)).collect()
        }
        None => vec![positives as f64 / y_obs.len() as f64; x_mis.nrows()],
    };
    let values = probabilities
        .iter()
        .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect();
    Ok(Draws {
        values,
        ridge: false,
        fallback: fitted.is_none(),
    })
}

/// Bayesian linear regression imputation (normal model, posterior draw of
/// coefficients and residual variance).
pub fn impute_bayes_linear<R: Rng + ?Sized>(y: &[Option<f64>], x: &DMatrix<f64>, rng: &mut R) -> Result<Draws> {
    let s = split(y, x)?;
    draw_bayes_linear(&s.y_obs, &s.x_obs, &s.x_mis, rng)
}

/// Predictive mean matching; every imputed value is one of the observed values.
pub fn impute_pmm<R: Rng + ?Sized>(
    y: &[Option<f64>],
    x: &DMatrix<f64>,
    donors: usize,
    rng: &mut R,
) -> Result<Draws> {
    let s = split(y, x)?;
    draw_pmm(&s.y_obs, &s.x_obs, &s.x_mis, donors, rng)
}

/// Logistic-regression imputation of a 0/1 column. Falls back to the
/// observed class frequency when the fit does not converge.
pub fn impute_logistic<R: Rng + ?Sized>(y: &[Option<f64>], x: &DMatrix<f64>, rng: &mut R) -> Result<Draws> {
    let s = split(y, x)?;
    draw_logistic(&s.y_obs, &s.x_obs, &s.x_mis, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_for;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn exact_linear_relation_is_reproduced() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<Option<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == 3 || i == 7 { None } else { Some(1.0 + 2.0 * v) })
            .collect();
        let d = impute_bayes_linear(&y, &col(&x), &mut rng_for(1, 0)).unwrap();
        assert!((d.values[0] - 7.0).abs() < 1e-9);
        assert!((d.values[1] - 15.0).abs() < 1e-9);
        assert!(!d.ridge);
    }

    #[test]
    fn constant_predictor_triggers_ridge_and_centres_on_mean() {
        let n = 60;
        let y: Vec<Option<f64>> = (0..n)
            .map(|i| if i % 3 == 0 { None } else { Some(((i * 17) % 11) as f64) })
            .collect();
        let obs: Vec<f64> = y.iter().flatten().copied().collect();
        let obs_mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let x = col(&vec![1.0; n]);
        let mut rng = rng_for(5, 0);
        let mut draws = Vec::new();
        let mut ridge = false;
        while draws.len() < 10_000 {
            let d = impute_bayes_linear(&y, &x, &mut rng).unwrap();
            ridge |= d.ridge;
            draws.extend(d.values);
        }
        assert!(ridge);
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        // draws are correlated within a call (shared β*), so widen by the design effect
        let calls = draws.len() as f64 / (n / 3) as f64;
        assert!((m - obs_mean).abs() < 3.0 * sd / calls.sqrt());
    }

    #[test]
    fn seeded_draws_repeat() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let y: Vec<Option<f64>> = x.iter().enumerate().map(|(i, v)| (i % 4 != 0).then_some(v * 3.0 + (i as f64).cos())).collect();
        let a = impute_bayes_linear(&y, &col(&x), &mut rng_for(9, 2)).unwrap();
        let b = impute_bayes_linear(&y, &col(&x), &mut rng_for(9, 2)).unwrap();
        assert_eq!(a, b);
        let a = impute_pmm(&y, &col(&x), 3, &mut rng_for(9, 2)).unwrap();
        let b = impute_pmm(&y, &col(&x), 3, &mut rng_for(9, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pmm_single_donor_is_nearest_neighbour() {
        // y = 2x exactly, so β* = β̂ and the nearest prediction is the nearest x
        let x = [1.0, 2.0, 3.0, 3.4, 5.0, 6.0];
        let y = [Some(2.0), Some(4.0), Some(6.0), None, Some(10.0), Some(12.0)];
        let d = impute_pmm(&y, &col(&x), 1, &mut rng_for(3, 0)).unwrap();
        assert_eq!(d.values, vec![6.0]);
    }

    #[test]
    fn pmm_values_come_from_observed_support() {
        let n = 80;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<Option<f64>> = (0..n).map(|i| (i % 5 != 0).then_some((i % 13) as f64)).collect();
        let support: Vec<f64> = y.iter().flatten().copied().collect();
        for seed in 0..20 {
            let d = impute_pmm(&y, &col(&x), 5, &mut rng_for(seed, 0)).unwrap();
            assert!(d.values.iter().all(|v| support.contains(v)));
        }
    }

    #[test]
    fn pmm_all_donors_with_flat_predictions_is_uniform() {
        let n = 40;
        let y: Vec<Option<f64>> = (0..n).map(|i| if i == 0 { None } else { Some(i as f64) }).collect();
        let x = DMatrix::<f64>::zeros(n, 0);
        let obs = n - 1;
        let mut counts = vec![0usize; n];
        let mut rng = rng_for(11, 0);
        let reps = 39_000;
        for _ in 0..reps {
            let d = impute_pmm(&y, &x, obs, &mut rng).unwrap();
            counts[d.values[0] as usize] += 1;
        }
        let expected = reps as f64 / obs as f64;
        let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(crate::dist::chi2_sf(chi2, (obs - 1) as f64) > 1e-3);
        assert!(impute_pmm(&y, &x, obs + 1, &mut rng).is_err());
    }

    #[test]
    fn logistic_favours_the_dominant_class() {
        let n = 50;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 10) as f64).collect();
        let mut y: Vec<Option<f64>> = vec![Some(1.0); n];
        y[0] = Some(0.0);
        y[n - 1] = None;
        let mut rng = rng_for(13, 0);
        let ones = (0..1000)
            .filter(|_| impute_logistic(&y, &col(&x), &mut rng).unwrap().values[0] == 1.0)
            .count();
        assert!(ones >= 800, "{ones}");
    }

    #[test]
    fn logistic_at_even_odds_is_symmetric() {
        let n = 41;
        let x = DMatrix::<f64>::zeros(n, 0);
        let y: Vec<Option<f64>> = (0..n).map(|i| if i == 40 { None } else { Some((i % 2) as f64) }).collect();
        let mut rng = rng_for(17, 0);
        let reps = 4000;
        let ones = (0..reps)
            .filter(|_| impute_logistic(&y, &x, &mut rng).unwrap().values[0] == 1.0)
            .count() as f64;
        // 4 standard errors of a fair coin
        assert!((ones / reps as f64 - 0.5).abs() < 4.0 * (0.25 / reps as f64).sqrt());
    }

    #[test]
    fn logistic_needs_both_classes() {
        let y = vec![Some(1.0), Some(1.0), None, Some(1.0), Some(1.0)];
        let x = DMatrix::<f64>::zeros(5, 0);
        assert!(impute_logistic(&y, &x, &mut rng_for(0, 0)).is_err());
    }

    #[test]
    fn logistic_separation_falls_back() {
        let x = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 0.5, -0.5];
        let y = [Some(0.0), Some(0.0), Some(0.0), Some(1.0), Some(1.0), Some(1.0), None, Some(0.0)];
        let d = impute_logistic(&y, &col(&x), &mut rng_for(0, 0)).unwrap();
        assert!(d.fallback);
    }

    #[test]
    fn nearest_k_prefers_lower_on_ties() {
        let sorted = vec![(1.0, 0), (2.0, 1), (3.0, 2)];
        assert_eq!(nearest_k(&sorted, 2.5, 1), vec![1]);
        assert_eq!(nearest_k(&sorted, 10.0, 2), vec![2, 1]);
        assert_eq!(nearest_k(&sorted, -1.0, 3), vec![0, 1, 2]);
    }
}
