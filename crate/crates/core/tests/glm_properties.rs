use fluxmi::data::{ColumnSpec, DataTable};
use fluxmi::glm::{backward_stepwise, fit_logistic_irls, DesignMatrix, StepCriterion};
use fluxmi::util::rng_for;
use proptest::prelude::*;
use rand::Rng;

fn problem(seed: u64, n: usize, shift: f64) -> (DataTable, Vec<f64>) {
    let mut rng = rng_for(seed, 0);
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x1
        .iter()
        .zip(&x2)
        .map(|(a, b)| {
            let p = 1.0 / (1.0 + (-(0.3 + 0.8 * a - 0.5 * b)).exp());
            f64::from(u8::from(rng.random::<f64>() < p))
        })
        .collect();
    let t = DataTable::new(
        vec![ColumnSpec::continuous("x1"), ColumnSpec::continuous("x2")],
        vec![
            x1.iter().map(|v| Some(v + shift)).collect(),
            x2.into_iter().map(Some).collect(),
        ],
    )
    .unwrap();
    (t, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // shifting a predictor moves only the intercept
    #[test]
    fn slopes_are_location_invariant(seed in 0u64..10_000, shift in -5.0f64..5.0) {
        let (t0, y) = problem(seed, 150, 0.0);
        let (t1, _) = problem(seed, 150, shift);
        let f0 = fit_logistic_irls(&DesignMatrix::from_table(&t0, &["x1", "x2"]).unwrap(), &y).unwrap();
        let f1 = fit_logistic_irls(&DesignMatrix::from_table(&t1, &["x1", "x2"]).unwrap(), &y).unwrap();
        prop_assume!(f0.converged && f1.converged);
        prop_assert!((f0.coefficients[1] - f1.coefficients[1]).abs() < 1e-7);
        prop_assert!((f0.coefficients[2] - f1.coefficients[2]).abs() < 1e-7);
        prop_assert!((f0.deviance - f1.deviance).abs() < 1e-7);
    }

    // relabelling y as 1 - y negates every coefficient
    #[test]
    fn label_flip_negates(seed in 0u64..10_000) {
        let (t, y) = problem(seed, 120, 0.0);
        let x = DesignMatrix::from_table(&t, &["x1", "x2"]).unwrap();
        let flipped: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let a = fit_logistic_irls(&x, &y).unwrap();
        let b = fit_logistic_irls(&x, &flipped).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((p + q).abs() < 1e-7);
        }
        prop_assert!((a.deviance - b.deviance).abs() < 1e-7);
    }

    #[test]
    fn stepwise_never_raises_aic(seed in 0u64..10_000) {
        let (t, y) = problem(seed, 100, 0.0);
        let x = DesignMatrix::from_table(&t, &["x1", "x2"]).unwrap();
        let full = fit_logistic_irls(&x, &y).unwrap();
        let step = backward_stepwise(&x, &y, StepCriterion::Aic).unwrap();
        prop_assert!(step.fit.aic <= full.aic + 1e-9);
        prop_assert_eq!(step.selected.len() + step.dropped.len(), 2);
    }
}

#[test]
fn score_vanishes_at_the_fit() {
    let (t, y) = problem(5, 300, 0.0);
    let x = DesignMatrix::from_table(&t, &["x1", "x2"]).unwrap();
    let fit = fit_logistic_irls(&x, &y).unwrap();
    let m = x.matrix();
    for j in 0..3 {
        let s: f64 = (0..m.nrows())
            .map(|i| {
                let eta: f64 = (0..3).map(|k| m[(i, k)] * fit.coefficients[k]).sum();
                m[(i, j)] * (y[i] - 1.0 / (1.0 + (-eta).exp()))
            })
            .sum();
        assert!(s.abs() < 1e-9, "score {j} = {s}");
    }
}
