use fluxmi::data::{ColumnSpec, DataTable};
use fluxmi::flux::{influx_outflux, missing_patterns, select_imputation_predictors};
use proptest::prelude::*;

fn table(mask: &[Vec<bool>]) -> DataTable {
    let cols = (0..mask.len()).map(|j| ColumnSpec::continuous(format!("v{j}"))).collect();
    let values = mask.iter().map(|c| c.iter().map(|&r| r.then_some(0.5)).collect()).collect();
    DataTable::new(cols, values).unwrap()
}

fn masks() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (1usize..7, 1usize..15).prop_flat_map(|(p, n)| prop::collection::vec(prop::collection::vec(any::<bool>(), n), p))
}

proptest! {
    #[test]
    fn statistics_are_proportions(mask in masks()) {
        for r in influx_outflux(&table(&mask)) {
            for v in [r.influx, r.outflux, r.fico, r.prop_observed] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    // every (missing, observed) cell pair in a row counts once toward some
    // variable's influx and once toward another's outflux
    #[test]
    fn influx_and_outflux_share_the_pair_total(mask in masks()) {
        let flux = influx_outflux(&table(&mask));
        let obs: usize = mask.iter().flatten().filter(|r| **r).count();
        let mis = mask.iter().flatten().count() - obs;
        prop_assume!(obs > 0 && mis > 0);
        let inflow: f64 = flux.iter().map(|r| r.influx).sum::<f64>() * obs as f64;
        let outflow: f64 = flux.iter().map(|r| r.outflux).sum::<f64>() * mis as f64;
        prop_assert!((inflow - outflow).abs() < 1e-9);
    }

    #[test]
    fn column_order_does_not_matter(mask in masks()) {
        let forward = influx_outflux(&table(&mask));
        let mut rev = mask.clone();
        rev.reverse();
        let backward = influx_outflux(&table(&rev));
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            prop_assert_eq!(a.influx, b.influx);
            prop_assert_eq!(a.outflux, b.outflux);
            prop_assert_eq!(a.fico, b.fico);
        }
    }

    #[test]
    fn pattern_counts_cover_every_row(mask in masks()) {
        let t = table(&mask);
        prop_assert_eq!(missing_patterns(&t).total_rows(), t.n_rows());
    }

    #[test]
    fn selection_is_monotone_in_the_threshold(mask in masks(), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let flux = influx_outflux(&table(&mask));
        // an empty selection is reported as an error
        let loose = select_imputation_predictors(&flux, lo, &[]).unwrap_or_default();
        let strict = select_imputation_predictors(&flux, hi, &[]).unwrap_or_default();
        prop_assert!(strict.iter().all(|v| loose.contains(v)));
    }
}

#[test]
fn complete_table_has_no_influx() {
    let t = table(&[vec![true; 5], vec![true; 5]]);
    for r in influx_outflux(&t) {
        assert_eq!((r.influx, r.outflux, r.fico), (0.0, 1.0, 0.0));
    }
}

#[test]
fn pinned_names_are_always_selected() {
    let t = table(&[vec![true, false, true], vec![false, false, true], vec![true; 3]]);
    let flux = influx_outflux(&t);
    let chosen = select_imputation_predictors(&flux, 1.0, &["v1"]).unwrap();
    assert_eq!(chosen, vec!["v1".to_string()]);
    assert!(select_imputation_predictors(&flux, 1.5, &[]).is_err());
}
