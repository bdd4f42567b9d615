//! Multiple imputation by chained equations.
//!
//! Each of the `m` chains starts from random draws of observed values and
//! then sweeps `max_iter` times over the incomplete variables, re-imputing
//! each one from the current completion of its predictors. Transformed
//! twins (`log_ALT`, ...) are imputed passively: they are recomputed from
//! their source right after the source is updated.
//!
//! Chain `k` draws from its own random stream derived from `(seed, k)`, so
//! running chains in parallel gives the same stack as running them serially.

mod elementary;
mod trace;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, DataTable, Role, Transform, TransformLedger};
use crate::error::{Error, Result};
use crate::util::{mean, mix_seed, rng_for, sample_sd};

pub use elementary::{impute_bayes_linear, impute_logistic, impute_pmm, Draws};
pub use trace::{convergence_trace, trace_csv, trace_svg, ConvergenceTrace, TraceEntry};

const HOLDOUT_SALT: u64 = 0x686f_6c64_6f75_74;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Pmm,
    BayesLinear,
    Logistic,
    Passive { transform: Transform, source: String },
}

impl Method {
    pub fn is_passive(&self) -> bool {
        matches!(self, Method::Passive { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub m: usize,
    pub max_iter: usize,
    /// Variable → the variables used to predict it.
    pub predictors: BTreeMap<String, Vec<String>>,
    /// Variable → elementary method. Variables without a method are left as they are.
    pub methods: BTreeMap<String, Method>,
    pub pmm_donors: usize,
    pub seed: u64,
    /// Run chains on the rayon thread pool. Never changes the result.
    #[serde(default, skip_serializing)]
    pub parallel: bool,
}

impl ImputationConfig {
    /// Defaults: m = 5, 10 sweeps, 5 PMM donors, no variables configured.
    pub fn new(seed: u64) -> Self {
        ImputationConfig {
            m: 5,
            max_iter: 10,
            predictors: BTreeMap::new(),
            methods: BTreeMap::new(),
            pmm_donors: 5,
            seed,
            parallel: false,
        }
    }

    /// Standard setup for `t`: PMM for continuous and categorical columns,
    /// logistic for binary ones, passive imputation for every derived column
    /// in `ledger`. Every imputed variable is predicted by `predictor_pool`
    /// minus itself and minus its own transformed twin or source. Excluded
    /// columns are neither imputed nor used.
    pub fn from_table(t: &DataTable, predictor_pool: &[String], ledger: &TransformLedger, seed: u64) -> Result<Self> {
        let mut cfg = ImputationConfig::new(seed);
        for spec in t.columns() {
            if spec.role == Role::Excluded {
                continue;
            }
            let name = &spec.name;
            if let Some(entry) = ledger.source_of(name) {
                cfg.methods.insert(
                    name.clone(),
                    Method::Passive {
                        transform: entry.transform,
                        source: entry.source.clone(),
                    },
                );
                continue;
            }
            let method = match spec.kind {
                ColumnKind::Binary => Method::Logistic,
                ColumnKind::Continuous | ColumnKind::Categorical => Method::Pmm,
            };
            cfg.methods.insert(name.clone(), method);
            let twin = ledger.derived_of(name).map(|e| e.derived.as_str());
            let preds: Vec<String> = predictor_pool
                .iter()
                .filter(|p| *p != name && Some(p.as_str()) != twin)
                .filter(|p| {
                    t.index_of(p)
                        .is_some_and(|c| t.spec(c).role != Role::Excluded && ledger.source_of(p).is_none())
                })
                .cloned()
                .collect();
            cfg.predictors.insert(name.clone(), preds);
        }
        Ok(cfg)
    }

    pub fn validate(&self, t: &DataTable) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("m must be at least 2, got {}", self.m)));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.pmm_donors < 1 {
            return Err(Error::Config("pmm_donors must be at least 1".into()));
        }
        for (var, method) in &self.methods {
            let c = t
                .index_of(var)
                .ok_or_else(|| Error::Config(format!("method given for unknown variable `{var}`")))?;
            match method {
                Method::Passive { source, .. } => {
                    match self.methods.get(source) {
                        None => {
                            if t.index_of(source).is_none() {
                                return Err(Error::Config(format!(
                                    "passive variable `{var}` has unknown source `{source}`"
                                )));
                            }
                        }
                        Some(m) if m.is_passive() => {
                            return Err(Error::Config(format!(
                                "passive variable `{var}` has passive source `{source}`"
                            )))
                        }
                        Some(_) => {}
                    }
                    if self.predictors.get(var).is_some_and(|p| !p.is_empty()) {
                        return Err(Error::Config(format!(
                            "passive variable `{var}` cannot have predictors"
                        )));
                    }
                }
                Method::Logistic if t.spec(c).kind != ColumnKind::Binary => {
                    return Err(Error::Config(format!("logistic method on non-binary `{var}`")));
                }
                _ => {}
            }
        }
        for (var, preds) in &self.predictors {
            if t.index_of(var).is_none() {
                return Err(Error::Config(format!("predictors given for unknown variable `{var}`")));
            }
            for p in preds {
                if p == var {
                    return Err(Error::Config(format!("variable `{var}` cannot predict itself")));
                }
                let c = t
                    .index_of(p)
                    .ok_or_else(|| Error::Config(format!("unknown predictor `{p}` for `{var}`")))?;
                if t.missing_count(c) > 0 && !self.methods.contains_key(p) {
                    return Err(Error::Config(format!(
                        "predictor `{p}` has missing values but no imputation method"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    RidgeFallback,
    MarginalFallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationWarning {
    pub chain: usize,
    pub iteration: usize,
    pub variable: String,
    pub kind: WarningKind,
}

/// `m` completed copies of the input plus provenance and traces.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputedStack {
    pub completed: Vec<DataTable>,
    pub seed: u64,
    pub iterations: usize,
    pub trace: ConvergenceTrace,
    pub warnings: Vec<ImputationWarning>,
}

impl ImputedStack {
    pub fn m(&self) -> usize {
        self.completed.len()
    }
}

/// Per-variable plan shared by every chain.
struct VarPlan {
    col: usize,
    name: String,
    method: Method,
    predictors: Vec<Predictor>,
    /// Passive columns recomputed from this one: (column, transform).
    passive: Vec<(usize, Transform)>,
}

struct Predictor {
    col: usize,
    /// Categorical levels after the reference level; empty for numeric columns.
    levels: Vec<f64>,
}

impl Predictor {
    fn width(&self) -> usize {
        self.levels.len().max(1)
    }
}

fn categorical_levels(t: &DataTable, col: usize) -> Vec<f64> {
    if t.spec(col).kind != ColumnKind::Categorical {
        return Vec::new();
    }
    let mut levels: Vec<f64> = t.column(col).iter().flatten().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels.into_iter().skip(1).collect()
}

fn build_plans(
    basis: &DataTable,
    target: &DataTable,
    cfg: &ImputationConfig,
    exclude_predictors: &[&str],
) -> Result<Vec<VarPlan>> {
    let mut active: Vec<(usize, usize)> = cfg
        .methods
        .iter()
        .filter(|(_, m)| !m.is_passive())
        .map(|(name, _)| target.require(name))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|c| (target.missing_count(c), c))
        .filter(|(missing, _)| *missing > 0)
        .collect();
    // ascending missingness, ties by column order
    active.sort();

    active
        .into_iter()
        .map(|(_, col)| {
            let name = target.spec(col).name.clone();
            let method = cfg.methods[&name].clone();
            let predictors = cfg
                .predictors
                .get(&name)
                .map(|ps| {
                    ps.iter()
                        .filter(|p| !exclude_predictors.contains(&p.as_str()))
                        .map(|p| {
                            let c = basis.require(p)?;
                            Ok(Predictor {
                                col: c,
                                levels: categorical_levels(basis, c),
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?
                .unwrap_or_default();
            let passive = cfg
                .methods
                .iter()
                .filter_map(|(derived, m)| match m {
                    Method::Passive { transform, source } if *source == name => {
                        Some(target.require(derived).map(|c| (c, *transform)))
                    }
                    _ => None,
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VarPlan {
                col,
                name,
                method,
                predictors,
                passive,
            })
        })
        .collect()
}

/// Column-major working copy; NaN marks cells nobody imputes.
type State = Vec<Vec<f64>>;

fn state_of(t: &DataTable) -> State {
    (0..t.n_cols())
        .map(|c| t.column(c).iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect()
}

fn predictor_matrix(state: &State, predictors: &[Predictor], rows: &[usize]) -> DMatrix<f64> {
    let width: usize = predictors.iter().map(Predictor::width).sum();
    let mut x = DMatrix::zeros(rows.len(), width);
    let mut j = 0;
    for p in predictors {
        let col = &state[p.col];
        if p.levels.is_empty() {
            for (i, &r) in rows.iter().enumerate() {
                x[(i, j)] = col[r];
            }
            j += 1;
        } else {
            for (l, level) in p.levels.iter().enumerate() {
                for (i, &r) in rows.iter().enumerate() {
                    x[(i, j + l)] = if col[r] == *level { 1.0 } else { 0.0 };
                }
            }
            j += p.levels.len();
        }
    }
    x
}

fn draw_for<R: Rng + ?Sized>(
    method: &Method,
    y_obs: &[f64],
    x_obs: &DMatrix<f64>,
    x_mis: &DMatrix<f64>,
    donors: usize,
    rng: &mut R,
) -> Result<Draws> {
    let x_obs = elementary::with_intercept(x_obs);
    let x_mis = elementary::with_intercept(x_mis);
    match method {
        Method::Pmm => elementary::draw_pmm(y_obs, &x_obs, &x_mis, donors, rng),
        Method::BayesLinear => elementary::draw_bayes_linear(y_obs, &x_obs, &x_mis, rng),
        Method::Logistic => elementary::draw_logistic(y_obs, &x_obs, &x_mis, rng),
        Method::Passive { .. } => Err(Error::Usage("passive variables are not drawn".into())),
    }
}

fn refresh_passive(state: &mut State, plan: &VarPlan, rows: &[usize], table: &DataTable) -> Result<()> {
    for &(derived, transform) in &plan.passive {
        for &r in rows {
            let v = state[plan.col][r];
            state[derived][r] = transform.apply(v).ok_or_else(|| Error::Domain {
                row: r,
                column: table.spec(plan.col).name.clone(),
                message: format!("imputed value {v} is outside the domain of {transform:?}"),
            })?;
        }
    }
    Ok(())
}

struct ChainOutput {
    table: DataTable,
    trace: Vec<TraceEntry>,
    warnings: Vec<ImputationWarning>,
}

fn annotate(chain: usize, iteration: usize, variable: &str) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Imputation {
        chain,
        iteration,
        variable: variable.to_string(),
        source: Box::new(e),
    }
}

fn record_warnings(out: &mut Vec<ImputationWarning>, d: &Draws, chain: usize, iteration: usize, variable: &str) {
    for (flag, kind) in [(d.ridge, WarningKind::RidgeFallback), (d.fallback, WarningKind::MarginalFallback)] {
        if flag {
            out.push(ImputationWarning {
                chain,
                iteration,
                variable: variable.to_string(),
                kind,
            });
        }
    }
}

fn finish_table(t: &DataTable, state: State, imputed: &[usize]) -> DataTable {
    let (columns, mut values) = t.clone().into_parts();
    for &c in imputed {
        values[c] = state[c].iter().map(|&v| Some(v)).collect();
    }
    DataTable::from_parts_unchecked(columns, values)
}

fn imputed_columns(plans: &[VarPlan]) -> Vec<usize> {
    let mut cols: Vec<usize> = plans
        .iter()
        .flat_map(|p| std::iter::once(p.col).chain(p.passive.iter().map(|(c, _)| *c)))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

fn run_chain(t: &DataTable, cfg: &ImputationConfig, plans: &[VarPlan], chain: usize) -> Result<ChainOutput> {
    let mut rng: ChaCha8Rng = rng_for(cfg.seed, chain as u64);
    let mut state = state_of(t);
    let mut trace = Vec::new();
    let mut warnings = Vec::new();

    let rows: Vec<(Vec<usize>, Vec<usize>)> = plans
        .iter()
        .map(|p| {
            let col = t.column(p.col);
            (
                (0..t.n_rows()).filter(|&r| col[r].is_some()).collect(),
                (0..t.n_rows()).filter(|&r| col[r].is_none()).collect(),
            )
        })
        .collect();

    for (plan, (obs, mis)) in plans.iter().zip(&rows) {
        if obs.is_empty() {
            return Err(Error::Initialization(plan.name.clone()));
        }
        for &r in mis {
            state[plan.col][r] = state[plan.col][obs[rng.random_range(0..obs.len())]];
        }
        refresh_passive(&mut state, plan, mis, t).map_err(annotate(chain, 0, &plan.name))?;
    }

    for iteration in 1..=cfg.max_iter {
        for (plan, (obs, mis)) in plans.iter().zip(&rows) {
            let y_obs: Vec<f64> = obs.iter().map(|&r| state[plan.col][r]).collect();
            let x_obs = predictor_matrix(&state, &plan.predictors, obs);
            let x_mis = predictor_matrix(&state, &plan.predictors, mis);
            let draws = draw_for(&plan.method, &y_obs, &x_obs, &x_mis, cfg.pmm_donors, &mut rng)
                .map_err(annotate(chain, iteration, &plan.name))?;
            record_warnings(&mut warnings, &draws, chain, iteration, &plan.name);
            for (&r, &v) in mis.iter().zip(&draws.values) {
                state[plan.col][r] = v;
            }
            refresh_passive(&mut state, plan, mis, t).map_err(annotate(chain, iteration, &plan.name))?;
            trace.push(TraceEntry {
                chain,
                iteration,
                variable: plan.name.clone(),
                mean: mean(&draws.values),
                sd: sample_sd(&draws.values),
            });
        }
    }

    Ok(ChainOutput {
        table: finish_table(t, state, &imputed_columns(plans)),
        trace,
        warnings,
    })
}

fn collect_chains<F>(m: usize, parallel: bool, f: F) -> Result<Vec<ChainOutput>>
where
    F: Fn(usize) -> Result<ChainOutput> + Sync + Send,
{
    if parallel {
        (0..m).into_par_iter().map(f).collect()
    } else {
        (0..m).map(f).collect()
    }
}

fn stack_from(outputs: Vec<ChainOutput>, cfg: &ImputationConfig) -> ImputedStack {
    let mut completed = Vec::with_capacity(outputs.len());
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for out in outputs {
        completed.push(out.table);
        entries.extend(out.trace);
        warnings.extend(out.warnings);
    }
    ImputedStack {
        completed,
        seed: cfg.seed,
        iterations: cfg.max_iter,
        trace: ConvergenceTrace { entries },
        warnings,
    }
}

/// Runs `cfg.m` independent chains over `t`.
pub fn run_chained_equations(t: &DataTable, cfg: &ImputationConfig) -> Result<ImputedStack> {
    cfg.validate(t)?;
    let plans = build_plans(t, t, cfg, &[])?;
    let outputs = collect_chains(cfg.m, cfg.parallel, |k| run_chain(t, cfg, &plans, k))?;
    Ok(stack_from(outputs, cfg))
}

/// Imputes rows that took no part in fitting (e.g. a validation split).
///
/// Chain `k` fits each elementary model on the `k`-th completed training
/// table, using only training rows where the variable was observed, and
/// applies it to `holdout`. Predictors named in `exclude_predictors`
/// (normally the outcome) are dropped from every model so the holdout's own
/// outcome never informs its imputations.
pub fn impute_holdout(
    train: &DataTable,
    stack: &ImputedStack,
    holdout: &DataTable,
    cfg: &ImputationConfig,
    exclude_predictors: &[&str],
) -> Result<Vec<DataTable>> {
    if train.names() != holdout.names() {
        return Err(Error::Usage("holdout columns differ from training columns".into()));
    }
    cfg.validate(holdout)?;
    let plans = build_plans(train, holdout, cfg, exclude_predictors)?;
    let salt = mix_seed(cfg.seed, HOLDOUT_SALT);

    let chain = |k: usize| -> Result<ChainOutput> {
        let fitted = state_of(&stack.completed[k]);
        let mut rng: ChaCha8Rng = rng_for(salt, k as u64);
        let mut state = state_of(holdout);

        let train_obs: Vec<Vec<usize>> = plans
            .iter()
            .map(|p| (0..train.n_rows()).filter(|&r| train.is_observed(r, p.col)).collect())
            .collect();
        let hold_mis: Vec<Vec<usize>> = plans
            .iter()
            .map(|p| (0..holdout.n_rows()).filter(|&r| !holdout.is_observed(r, p.col)).collect())
            .collect();

        for ((plan, obs), mis) in plans.iter().zip(&train_obs).zip(&hold_mis) {
            if obs.is_empty() {
                return Err(Error::Initialization(plan.name.clone()));
            }
            for &r in mis {
                state[plan.col][r] = fitted[plan.col][obs[rng.random_range(0..obs.len())]];
            }
            refresh_passive(&mut state, plan, mis, holdout).map_err(annotate(k, 0, &plan.name))?;
        }
        for iteration in 1..=cfg.max_iter {
            for ((plan, obs), mis) in plans.iter().zip(&train_obs).zip(&hold_mis) {
                let y_obs: Vec<f64> = obs.iter().map(|&r| fitted[plan.col][r]).collect();
                let x_obs = predictor_matrix(&fitted, &plan.predictors, obs);
                let x_mis = predictor_matrix(&state, &plan.predictors, mis);
                let draws = draw_for(&plan.method, &y_obs, &x_obs, &x_mis, cfg.pmm_donors, &mut rng)
                    .map_err(annotate(k, iteration, &plan.name))?;
                for (&r, &v) in mis.iter().zip(&draws.values) {
                    state[plan.col][r] = v;
                }
                refresh_passive(&mut state, plan, mis, holdout).map_err(annotate(k, iteration, &plan.name))?;
            }
        }
        Ok(ChainOutput {
            table: finish_table(holdout, state, &imputed_columns(&plans)),
            trace: Vec::new(),
            warnings: Vec::new(),
        })
    };

    if stack.m() < 1 {
        return Err(Error::Usage("empty imputed stack".into()));
    }
    let outputs = collect_chains(stack.m(), cfg.parallel, chain)?;
    Ok(outputs.into_iter().map(|o| o.table).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_transforms, ColumnSpec};

    fn small_table() -> DataTable {
        let n = 40;
        let x: Vec<Option<f64>> = (0..n).map(|i| Some(1.0 + (i as f64 * 0.7).sin().abs() * 3.0)).collect();
        let z: Vec<Option<f64>> = (0..n)
            .map(|i| (i % 4 != 0).then_some(2.0 + x[i].unwrap() + ((i * 13) % 7) as f64 * 0.1))
            .collect();
        let y: Vec<Option<f64>> = (0..n).map(|i| Some((i % 3 == 0) as u8 as f64)).collect();
        DataTable::new(
            vec![
                ColumnSpec::outcome("y"),
                ColumnSpec::continuous("x"),
                ColumnSpec::continuous("z").with_transform(Transform::Log),
            ],
            vec![y, x, z],
        )
        .unwrap()
    }

    fn config_for(t: &DataTable, ledger: &TransformLedger, seed: u64) -> ImputationConfig {
        let pool = vec!["y".to_string(), "x".to_string(), "z".to_string()];
        let mut cfg = ImputationConfig::from_table(t, &pool, ledger, seed).unwrap();
        cfg.m = 3;
        cfg.max_iter = 4;
        cfg
    }

    #[test]
    fn complete_table_is_returned_unchanged() {
        let t = DataTable::new(
            vec![ColumnSpec::continuous("a"), ColumnSpec::continuous("b")],
            vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]],
        )
        .unwrap();
        let mut cfg = ImputationConfig::new(1);
        cfg.methods.insert("a".into(), Method::Pmm);
        let stack = run_chained_equations(&t, &cfg).unwrap();
        assert_eq!(stack.m(), 5);
        assert!(stack.completed.iter().all(|c| *c == t));
        assert!(stack.trace.entries.is_empty());
    }

    #[test]
    fn passive_twin_tracks_its_source() {
        let raw = small_table();
        let ledger = TransformLedger::from_schema(raw.columns());
        let t = apply_transforms(&raw, &ledger).unwrap();
        let cfg = config_for(&t, &ledger, 3);
        assert_eq!(
            cfg.methods["log_z"],
            Method::Passive {
                transform: Transform::Log,
                source: "z".into()
            }
        );
        assert!(!cfg.predictors["x"].contains(&"log_z".to_string()));
        let stack = run_chained_equations(&t, &cfg).unwrap();
        let (z, lz) = (t.index_of("z").unwrap(), t.index_of("log_z").unwrap());
        for c in &stack.completed {
            for r in 0..c.n_rows() {
                assert_eq!(c.value(r, lz).unwrap(), c.value(r, z).unwrap().ln());
            }
        }
        // m chains × sweeps × one actively imputed variable
        assert_eq!(stack.trace.entries.len(), 3 * 4);
    }

    #[test]
    fn observed_cells_survive_and_runs_repeat() {
        let raw = small_table();
        let ledger = TransformLedger::from_schema(raw.columns());
        let t = apply_transforms(&raw, &ledger).unwrap();
        let cfg = config_for(&t, &ledger, 11);
        let a = run_chained_equations(&t, &cfg).unwrap();
        let b = run_chained_equations(&t, &ImputationConfig { parallel: true, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        for c in &a.completed {
            for col in 0..t.n_cols() {
                for r in 0..t.n_rows() {
                    if let Some(v) = t.value(r, col) {
                        assert_eq!(c.value(r, col).unwrap().to_bits(), v.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn errors_carry_chain_and_variable() {
        let t = DataTable::new(
            vec![ColumnSpec::continuous("a"), ColumnSpec::continuous("b")],
            vec![vec![None, None, None], vec![Some(1.0), Some(2.0), Some(3.0)]],
        )
        .unwrap();
        let mut cfg = ImputationConfig::new(1);
        cfg.methods.insert("a".into(), Method::Pmm);
        assert!(matches!(run_chained_equations(&t, &cfg), Err(Error::Initialization(v)) if v == "a"));

        let t = DataTable::new(
            vec![ColumnSpec::continuous("a"), ColumnSpec::continuous("b")],
            vec![vec![None, Some(1.0), Some(2.0)], vec![Some(1.0), Some(2.0), Some(3.0)]],
        )
        .unwrap();
        cfg.predictors.insert("a".into(), vec!["b".into()]);
        match run_chained_equations(&t, &cfg) {
            Err(Error::Imputation { chain, iteration, variable, .. }) => {
                assert_eq!((chain, iteration, variable.as_str()), (0, 1, "a"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let t = small_table();
        let mut cfg = ImputationConfig::new(0);
        cfg.m = 1;
        assert!(cfg.validate(&t).is_err());
        let mut cfg = ImputationConfig::new(0);
        cfg.predictors.insert("x".into(), vec!["x".into()]);
        assert!(cfg.validate(&t).is_err());
        let mut cfg = ImputationConfig::new(0);
        cfg.predictors.insert("x".into(), vec!["z".into()]);
        assert!(cfg.validate(&t).is_err(), "z is incomplete and has no method");
        let mut cfg = ImputationConfig::new(0);
        cfg.methods.insert("x".into(), Method::Logistic);
        assert!(cfg.validate(&t).is_err());
    }

    #[test]
    fn holdout_imputation_fills_every_cell() {
        let raw = small_table();
        let ledger = TransformLedger::from_schema(raw.columns());
        let t = apply_transforms(&raw, &ledger).unwrap();
        let cfg = config_for(&t, &ledger, 5);
        let stack = run_chained_equations(&t, &cfg).unwrap();
        let holdout = t.select_rows(&[0, 1, 4, 8, 9]);
        let filled = impute_holdout(&t, &stack, &holdout, &cfg, &["y"]).unwrap();
        assert_eq!(filled.len(), 3);
        let z = t.index_of("z").unwrap();
        let train_support: Vec<f64> = t.column(z).iter().flatten().copied().collect();
        for c in &filled {
            assert_eq!(c.total_missing(), 0);
            assert!(c.column(z).iter().all(|v| train_support.contains(&v.unwrap())));
        }
        let again = impute_holdout(&t, &stack, &holdout, &cfg, &["y"]).unwrap();
        assert_eq!(filled, again);
    }
}
