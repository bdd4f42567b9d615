//! Tail probabilities for the reference distributions used by the tests.

use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};
use statrs::function::gamma::gamma_ur;

/// Degrees of freedom at or beyond which t and F references are replaced by
/// their normal / chi-square limits.
pub const DF_CAP: f64 = 1e6;

/// Upper tail `P(X > x)` for `X ~ χ²(df)`, via the regularized upper incomplete gamma function.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df / 2.0, x / 2.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn normal_sf(z: f64) -> f64 {
    Normal::standard().sf(z)
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let a = t.abs();
    let p = if df >= DF_CAP {
        2.0 * normal_sf(a)
    } else {
        2.0 * StudentsT::new(0.0, 1.0, df).expect("df > 0").sf(a)
    };
    p.min(1.0)
}

/// Upper tail of `F(df1, df2)`.
pub fn f_sf(x: f64, df1: f64, df2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if df2 >= DF_CAP {
        return chi2_sf(x * df1, df1);
    }
    FisherSnedecor::new(df1, df2).expect("positive df").sf(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_known_values() {
        // χ²(1) at 3.8416 is the squared 97.5% normal quantile 1.96
        assert!((chi2_sf(3.8416, 1.0) - 0.05).abs() < 1e-4);
        assert!((chi2_sf(8.0, 2.0) - (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(chi2_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn t_limits_to_normal() {
        let near = t_two_sided(1.96, 1e7);
        assert!((near - 2.0 * normal_sf(1.96)).abs() < 1e-15);
        assert!((t_two_sided(1.96, 5e5) - near).abs() < 1e-6);
        assert_eq!(t_two_sided(0.0, 10.0), 1.0);
    }

    #[test]
    fn f_with_one_numerator_df_is_squared_t() {
        for &(t, df) in &[(2.1, 7.0), (0.5, 30.0), (3.3, 150.0)] {
            assert!((f_sf(t * t, 1.0, df) - t_two_sided(t, df)).abs() < 1e-10);
        }
    }
}
