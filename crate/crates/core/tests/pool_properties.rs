use approx::assert_relative_eq;
use fluxmi::pool::{pool_scalar, pooled_wald_d1, CoefficientSet, DfMethod};
use proptest::prelude::*;

fn draws() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..15).prop_flat_map(|m| {
        (
            prop::collection::vec(-5.0f64..5.0, m),
            prop::collection::vec(0.01f64..3.0, m),
        )
    })
}

proptest! {
    #[test]
    fn total_variance_dominates_within((beta, var) in draws()) {
        let p = pool_scalar("b", &beta, &var, DfMethod::Rubin).unwrap();
        prop_assert!(p.total >= p.within);
        prop_assert!((0.0..=1.0).contains(&p.fmi));
        prop_assert!(p.df > 0.0);
        prop_assert!((0.0..=1.0).contains(&p.p_value));
        let mean = beta.iter().sum::<f64>() / beta.len() as f64;
        prop_assert!((p.qbar - mean).abs() < 1e-12);
    }

    // rescaling a coefficient rescales its variance components but leaves
    // df, fmi and the p-value alone
    #[test]
    fn scale_equivariance((beta, var) in draws(), c in 0.1f64..10.0) {
        let a = pool_scalar("b", &beta, &var, DfMethod::Rubin).unwrap();
        let sb: Vec<f64> = beta.iter().map(|b| b * c).collect();
        let sv: Vec<f64> = var.iter().map(|v| v * c * c).collect();
        let b = pool_scalar("b", &sb, &sv, DfMethod::Rubin).unwrap();
        prop_assert!((b.qbar - c * a.qbar).abs() <= 1e-9 * (1.0 + b.qbar.abs()));
        prop_assert!((b.total - c * c * a.total).abs() <= 1e-9 * b.total);
        prop_assert!((b.df - a.df).abs() <= 1e-6 * a.df);
        prop_assert!((b.fmi - a.fmi).abs() <= 1e-9);
    }

    #[test]
    fn interval_contains_estimate((beta, var) in draws()) {
        let p = pool_scalar("b", &beta, &var, DfMethod::Rubin).unwrap();
        let (lo, hi) = p.confidence_interval(0.95);
        let (lo9, hi9) = p.confidence_interval(0.99);
        prop_assert!(lo < p.qbar && p.qbar < hi);
        prop_assert!(lo9 < lo && hi < hi9);
    }

    #[test]
    fn barnard_rubin_df_never_exceeds_complete_df((beta, var) in draws(), dfc in 5.0f64..500.0) {
        let p = pool_scalar("b", &beta, &var, DfMethod::BarnardRubin { complete_df: dfc }).unwrap();
        prop_assert!(p.df > 0.0 && p.df <= dfc);
    }

    // with one parameter D1 is the square of the pooled t statistic
    #[test]
    fn single_term_d1_is_squared_t((beta, var) in draws()) {
        let sets: Vec<CoefficientSet> = beta
            .iter()
            .zip(&var)
            .map(|(b, v)| CoefficientSet::from_se(vec!["b".into()], vec![*b], &[v.sqrt()]))
            .collect();
        let d1 = pooled_wald_d1(&sets, &["b"]).unwrap();
        let p = pool_scalar("b", &beta, &var, DfMethod::Rubin).unwrap();
        prop_assume!(p.between > 0.0);
        assert_relative_eq!(d1.test.statistic, p.qbar * p.qbar / p.total, max_relative = 1e-9);
    }
}

#[test]
fn rejects_short_or_mismatched_input() {
    assert!(pool_scalar("b", &[1.0], &[1.0], DfMethod::Rubin).is_err());
    assert!(pool_scalar("b", &[1.0, 2.0], &[1.0], DfMethod::Rubin).is_err());
    assert!(pool_scalar("b", &[1.0, 2.0], &[1.0, -1.0], DfMethod::Rubin).is_err());
}
