//! Stage functions of the end-to-end workflow and the files each one writes.
//!
//! Every stage is a pure function of the config and the previous stage, so a
//! subcommand can recompute its upstream stages and reach the same state as
//! a full run.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use fluxmi::data::{
    apply_transforms, drop_missing_outcome, filter_high_missing_rows, load_csv, save_csv, split_train_validation,
    DataTable, Role, RowFilterReport, TransformLedger,
};
use fluxmi::eval::{
    anderson_darling_normality, auroc_report, compare_groups, format_mean_sd, group_comparison_csv,
    score_available_case, score_pooled, AucSummary, ScoredModel,
};
use fluxmi::flux::{
    emit_fluxplot, group_missing_csv, influx_outflux, missing_patterns, percent_missing_by_group,
    select_imputation_predictors, FluxRecord, GroupMissing, PatternTable,
};
use fluxmi::glm::{backward_stepwise, DesignMatrix, GlmFit, StepwiseResult};
use fluxmi::mice::{convergence_trace, impute_holdout, run_chained_equations, ImputationConfig, ImputedStack};
use fluxmi::pool::{build_supermodel, pool_fits, pooled_csv, tally_csv, tally_selected, PooledEstimate, SelectionTally, Supermodel};
use fluxmi::synth::{benchmark_scenario, generate, ScenarioTruth};
use fluxmi::util::{fmt_f64, mix_seed, write_file};

use crate::config::{Input, PipelineConfig};
use crate::CliError;

const SPLIT_SALT: u64 = 1;
const MICE_SALT: u64 = 2;

fn stage<T>(name: &'static str, r: fluxmi::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Stage { stage: name, source })
}

/// Progress messages on stderr unless quiet.
#[derive(Clone, Copy, Debug)]
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    pub fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("fluxmi: {msg}");
        }
    }
}

/// Records every file written so the manifest can list them.
#[derive(Debug)]
pub struct Outputs {
    pub root: PathBuf,
    pub written: BTreeSet<String>,
}

impl Outputs {
    /// Creates `root` and checks that it accepts files.
    pub fn open(root: &Path) -> Result<Self, CliError> {
        let unusable = |e: std::io::Error| CliError::Usage(format!("output directory {} is not writable: {e}", root.display()));
        std::fs::create_dir_all(root).map_err(unusable)?;
        let probe = root.join(".fluxmi-write-check");
        std::fs::write(&probe, b"").map_err(unusable)?;
        std::fs::remove_file(&probe).map_err(unusable)?;
        Ok(Outputs {
            root: root.to_path_buf(),
            written: BTreeSet::new(),
        })
    }

    fn path(&mut self, rel: &str) -> PathBuf {
        self.written.insert(rel.to_string());
        self.root.join(rel)
    }

    pub fn text(&mut self, stage_name: &'static str, rel: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(rel);
        stage(stage_name, write_file(&p, contents))
    }

    pub fn table(&mut self, stage_name: &'static str, rel: &str, t: &DataTable) -> Result<(), CliError> {
        let p = self.path(rel);
        stage(stage_name, save_csv(t, p))
    }

    fn json<T: Serialize>(&mut self, stage_name: &'static str, rel: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        self.text(stage_name, rel, &text)
    }

    /// Marks a file written by a library helper.
    fn mark(&mut self, rel: &str) -> PathBuf {
        self.path(rel)
    }
}

/// Input table after outcome and row filtering.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub table: DataTable,
    pub outcome: String,
    pub dropped_outcome: usize,
    pub filter: RowFilterReport,
    pub truth: Option<ScenarioTruth>,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared, CliError> {
    let (raw, truth) = match &cfg.input {
        Input::Csv { path, schema } => (stage("load", load_csv(path, schema))?, None),
        Input::Synth { scenario } => {
            let (mut gen, truth) = benchmark_scenario(scenario).map_err(|e| CliError::Usage(e.to_string()))?;
            gen.seed = cfg.seed;
            (stage("synth", generate(&gen))?, Some(truth))
        }
    };
    let (table, dropped_outcome) = stage("load", drop_missing_outcome(&raw))?;
    let (table, filter) = stage("row filter", filter_high_missing_rows(&table, cfg.row_filter_threshold))?;
    let outcome = table.spec(stage("load", table.outcome_index())?).name.clone();
    Ok(Prepared {
        table,
        outcome,
        dropped_outcome,
        filter,
        truth,
    })
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub patterns: PatternTable,
    pub by_outcome: Vec<GroupMissing>,
    pub flux: Vec<FluxRecord>,
    pub comparison: String,
    pub normality: String,
}

fn analysed_columns(t: &DataTable) -> Result<DataTable, CliError> {
    let names: Vec<&str> = t
        .columns()
        .iter()
        .filter(|c| c.role != Role::Excluded)
        .map(|c| c.name.as_str())
        .collect();
    stage("analyze", t.select_columns(&names))
}

fn normality_csv(t: &DataTable) -> String {
    let mut out = String::from("variable,a2_star,band\n");
    for c in 0..t.n_cols() {
        let spec = t.spec(c);
        if spec.role != Role::Predictor || spec.kind != fluxmi::data::ColumnKind::Continuous {
            continue;
        }
        let x: Vec<f64> = t.column(c).iter().flatten().copied().collect();
        if let Ok(ad) = anderson_darling_normality(&x) {
            let band = serde_json::to_value(ad.band).expect("band serializes");
            let _ = writeln!(out, "{},{},{}", spec.name, fmt_f64(ad.a2_star), band.as_str().unwrap_or(""));
        }
    }
    out
}

pub fn analyze(prep: &Prepared) -> Result<Analysis, CliError> {
    let t = analysed_columns(&prep.table)?;
    let predictors: Vec<&str> = t
        .columns()
        .iter()
        .filter(|c| c.role != Role::Outcome)
        .map(|c| c.name.as_str())
        .collect();
    Ok(Analysis {
        patterns: missing_patterns(&stage("analyze", t.select_columns(&predictors))?),
        by_outcome: stage("analyze", percent_missing_by_group(&t, &prep.outcome))?,
        flux: influx_outflux(&t),
        comparison: group_comparison_csv(&stage("analyze", compare_groups(&t, &prep.outcome))?),
        normality: normality_csv(&t),
    })
}

pub fn write_analysis(prep: &Prepared, a: &Analysis, out: &mut Outputs) -> Result<(), CliError> {
    let mut filter = String::from("stage,rows\n");
    let _ = writeln!(filter, "missing_outcome_removed,{}", prep.dropped_outcome);
    let _ = writeln!(filter, "high_missing_removed,{}", prep.filter.removed);
    let _ = writeln!(filter, "kept,{}", prep.filter.kept);
    out.text("analyze", "analysis/row_filter.csv", &filter)?;
    out.text("analyze", "analysis/patterns.csv", &a.patterns.to_csv())?;
    out.text("analyze", "analysis/missing_by_outcome.csv", &group_missing_csv(&a.by_outcome))?;
    out.text("analyze", "analysis/group_comparison.csv", &a.comparison)?;
    out.text("analyze", "analysis/normality.csv", &a.normality)?;
    let svg = out.mark("analysis/fluxplot.svg");
    out.mark("analysis/fluxplot.csv");
    stage("analyze", emit_fluxplot(&a.flux, svg))?;
    if let Some(truth) = &prep.truth {
        out.json("analyze", "analysis/truth.json", truth)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Imputed {
    pub train: DataTable,
    pub validation: DataTable,
    pub ledger: TransformLedger,
    /// Variables used to predict incomplete ones.
    pub predictors: Vec<String>,
    /// Analysis-model candidate variables.
    pub candidates: Vec<String>,
    pub config: ImputationConfig,
    pub stack: ImputedStack,
}

/// Split, transform, choose imputation predictors by outflux and run `m` chains.
pub fn impute(cfg: &PipelineConfig, prep: &Prepared, m: usize) -> Result<Imputed, CliError> {
    impute_seeded(cfg, prep, m, mix_seed(cfg.seed, MICE_SALT))
}

/// [`impute`] with an explicit chain seed; the split still follows `cfg.seed`.
pub fn impute_seeded(cfg: &PipelineConfig, prep: &Prepared, m: usize, mice_seed: u64) -> Result<Imputed, CliError> {
    let base = analysed_columns(&prep.table)?;
    let (train_raw, valid_raw) = stage("split", split_train_validation(&base, cfg.split_fraction, mix_seed(cfg.seed, SPLIT_SALT)))?;
    let ledger = TransformLedger::from_schema(train_raw.columns());

    let flux = influx_outflux(&train_raw);
    let mut pinned: Vec<&str> = vec![prep.outcome.as_str()];
    pinned.extend(cfg.imputation.pinned_predictors.iter().map(String::as_str));
    let predictors = stage("impute", select_imputation_predictors(&flux, cfg.outflux_threshold, &pinned))?;

    let train = stage("transform", apply_transforms(&train_raw, &ledger))?;
    let validation = stage("transform", apply_transforms(&valid_raw, &ledger))?;
    let candidates: Vec<String> = train
        .columns()
        .iter()
        .filter(|c| c.role == Role::Predictor)
        .map(|c| c.name.clone())
        .collect();

    let mut config = stage(
        "impute",
        ImputationConfig::from_table(&train, &predictors, &ledger, mice_seed),
    )?;
    config.m = m;
    config.max_iter = cfg.imputation.max_iter;
    config.pmm_donors = cfg.imputation.pmm_donors;
    config.parallel = cfg.imputation.parallel;
    let stack = stage("impute", run_chained_equations(&train, &config))?;
    Ok(Imputed {
        train,
        validation,
        ledger,
        predictors,
        candidates,
        config,
        stack,
    })
}

pub fn write_imputation(imp: &Imputed, out: &mut Outputs) -> Result<(), CliError> {
    let mut preds = String::from("variable\n");
    for p in &imp.predictors {
        let _ = writeln!(preds, "{p}");
    }
    out.text("impute", "imputation/predictors.csv", &preds)?;
    out.json("impute", "imputation/imputation_config.json", &imp.config)?;
    out.json("impute", "imputation/transforms.json", &imp.ledger)?;
    for (k, t) in imp.stack.completed.iter().enumerate() {
        out.table("impute", &format!("imputation/train_imp{}.csv", k + 1), t)?;
    }
    let csv = out.mark("imputation/trace.csv");
    out.mark("imputation/trace.svg");
    stage("impute", convergence_trace(&imp.stack, csv))?;
    let mut warnings = String::from("chain,iteration,variable,kind\n");
    for w in &imp.stack.warnings {
        let kind = serde_json::to_value(w.kind).expect("kind serializes");
        let _ = writeln!(warnings, "{},{},{},{}", w.chain, w.iteration, w.variable, kind.as_str().unwrap_or(""));
    }
    out.text("impute", "imputation/warnings.csv", &warnings)
}

fn response(t: &DataTable, outcome: &str) -> fluxmi::Result<Vec<f64>> {
    let c = t.require(outcome)?;
    t.column(c)
        .iter()
        .map(|v| v.ok_or_else(|| fluxmi::Error::Precondition(format!("outcome `{outcome}` has missing values"))))
        .collect()
}

/// Variable behind a design term (`g[2]` → `g`).
fn variable_of(term: &str) -> &str {
    term.split('[').next().unwrap_or(term)
}

fn selected_variables(r: &StepwiseResult) -> Vec<String> {
    let mut v: Vec<String> = r.selected.iter().map(|t| variable_of(t).to_string()).collect();
    v.dedup();
    v
}

fn stepwise_on(t: &DataTable, candidates: &[String], outcome: &str, cfg: &PipelineConfig) -> fluxmi::Result<StepwiseResult> {
    let x = DesignMatrix::from_table(t, candidates)?;
    let y = response(t, outcome)?;
    backward_stepwise(&x, &y, cfg.stepwise)
}

#[derive(Clone, Debug)]
pub struct Fitted {
    pub per_imputation: Vec<StepwiseResult>,
    pub available_case: StepwiseResult,
    pub available_case_rows: usize,
}

/// Rows complete on `vars`.
fn complete_rows(t: &DataTable, vars: &[String]) -> Result<DataTable, CliError> {
    let cols: Vec<usize> = vars
        .iter()
        .map(|v| stage("fit", t.require(v)))
        .collect::<Result<_, _>>()?;
    let rows: Vec<usize> = (0..t.n_rows())
        .filter(|&r| cols.iter().all(|&c| t.is_observed(r, c)))
        .collect();
    Ok(t.select_rows(&rows))
}

pub fn stepwise_per_imputation(cfg: &PipelineConfig, prep: &Prepared, stack: &ImputedStack, candidates: &[String]) -> Result<Vec<StepwiseResult>, CliError> {
    stack
        .completed
        .iter()
        .map(|t| stage("fit", stepwise_on(t, candidates, &prep.outcome, cfg)))
        .collect()
}

pub fn fit(cfg: &PipelineConfig, prep: &Prepared, imp: &Imputed) -> Result<Fitted, CliError> {
    let per_imputation = stepwise_per_imputation(cfg, prep, &imp.stack, &imp.candidates)?;
    let mut vars = imp.candidates.clone();
    vars.push(prep.outcome.clone());
    let ac = complete_rows(&imp.train, &vars)?;
    let available_case = stage("fit", stepwise_on(&ac, &imp.candidates, &prep.outcome, cfg))?;
    Ok(Fitted {
        per_imputation,
        available_case,
        available_case_rows: ac.n_rows(),
    })
}

pub fn write_fits(f: &Fitted, out: &mut Outputs) -> Result<(), CliError> {
    let mut selected = String::from("imputation,term\n");
    for (k, r) in f.per_imputation.iter().enumerate() {
        out.text("fit", &format!("models/stepwise_imp{}.csv", k + 1), &r.fit.summary_csv())?;
        for t in &r.selected {
            let _ = writeln!(selected, "{},{t}", k + 1);
        }
    }
    out.text("fit", "models/selected.csv", &selected)?;
    out.text("fit", "models/available_case.csv", &f.available_case.fit.summary_csv())?;
    out.text(
        "fit",
        "models/available_case_rows.csv",
        &format!("rows\n{}\n", f.available_case_rows),
    )
}

#[derive(Clone, Debug)]
pub struct Pooled {
    pub tally: SelectionTally,
    /// Tallies from the `compare_m` runs.
    pub compare: Vec<SelectionTally>,
    pub supermodel: Supermodel,
    /// Full candidate model pooled directly, for comparison.
    pub full_model: Vec<PooledEstimate>,
}

pub fn tally_of(candidates: &[String], fits: &[StepwiseResult]) -> SelectionTally {
    let models: Vec<Vec<String>> = fits.iter().map(selected_variables).collect();
    tally_selected(candidates, &models)
}

pub fn pool(cfg: &PipelineConfig, prep: &Prepared, imp: &Imputed, fitted: &Fitted, rep: Reporter) -> Result<Pooled, CliError> {
    let tally = tally_of(&imp.candidates, &fitted.per_imputation);
    let supermodel = stage(
        "pool",
        build_supermodel(&tally, &imp.stack.completed, &prep.outcome, cfg.supermodel_alpha, cfg.pooled_test),
    )?;
    let full_fits: Vec<GlmFit> = imp
        .stack
        .completed
        .iter()
        .map(|t| {
            let x = DesignMatrix::from_table(t, &imp.candidates)?;
            fluxmi::glm::fit_logistic_irls(&x, &response(t, &prep.outcome)?)
        })
        .collect::<fluxmi::Result<_>>()
        .map_err(|source| CliError::Stage { stage: "pool", source })?;
    let full_model = stage("pool", pool_fits(&full_fits, fluxmi::pool::DfMethod::Rubin))?;

    let mut compare = Vec::new();
    for &m in &cfg.imputation.compare_m {
        rep.note(&format!("selection tally with m = {m}"));
        let other = impute(cfg, prep, m)?;
        let fits = stepwise_per_imputation(cfg, prep, &other.stack, &other.candidates)?;
        compare.push(tally_of(&other.candidates, &fits));
    }
    Ok(Pooled {
        tally,
        compare,
        supermodel,
        full_model,
    })
}

pub fn write_pooling(p: &Pooled, out: &mut Outputs) -> Result<(), CliError> {
    let mut all = vec![&p.tally];
    all.extend(p.compare.iter());
    out.text("pool", "pooling/tally.csv", &tally_csv(&all))?;
    let mut tests = String::from("term,count,p,kept\n");
    for t in &p.supermodel.tests {
        let _ = writeln!(tests, "{},{},{},{}", t.term, t.count, fmt_f64(t.p_value), t.kept);
    }
    out.text("pool", "pooling/supermodel_tests.csv", &tests)?;
    out.text("pool", "pooling/pooled.csv", &pooled_csv(&p.supermodel.pooled))?;
    out.text("pool", "pooling/pooled_full_model.csv", &pooled_csv(&p.full_model))
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub models: Vec<ScoredModel>,
    pub validation_completed: Vec<DataTable>,
}

pub fn evaluate(prep: &Prepared, imp: &Imputed, fitted: &Fitted, pooled: &Pooled) -> Result<Evaluation, CliError> {
    let validation_completed = stage(
        "eval",
        impute_holdout(&imp.train, &imp.stack, &imp.validation, &imp.config, &[prep.outcome.as_str()]),
    )?;
    let ac = stage(
        "eval",
        score_available_case("available_case", &fitted.available_case.fit, &imp.validation, &prep.outcome),
    )?;
    let mi = stage(
        "eval",
        score_pooled("mice_supermodel", &pooled.supermodel.fits, &validation_completed, &prep.outcome),
    )?;
    Ok(Evaluation {
        models: vec![ac, mi],
        validation_completed,
    })
}

pub fn write_evaluation(e: &Evaluation, out: &mut Outputs) -> Result<Vec<AucSummary>, CliError> {
    for m in &e.models {
        out.mark(&format!("evaluation/roc_{}.csv", m.name));
        out.mark(&format!("evaluation/roc_{}.svg", m.name));
    }
    out.mark("evaluation/roc_all.svg");
    out.mark("evaluation/auc_summary.csv");
    let dir = out.root.join("evaluation");
    let summary = stage("eval", auroc_report(&e.models, &dir))?;
    let mut text = String::from("model,summary\n");
    for s in &summary {
        let line = match (s.auc_mean, s.auc_sd) {
            (Some(mean), Some(sd)) => format!("pooled AUC {:.3}; per-imputation {}", s.auc, format_mean_sd(mean, sd)),
            _ => format!("AUC {:.3}", s.auc),
        };
        let _ = writeln!(text, "{},{line}", s.model);
    }
    out.text("eval", "evaluation/auc_text.csv", &text)?;
    Ok(summary)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a PipelineConfig,
    outputs: Vec<&'a String>,
}

pub fn write_manifest(cfg: &PipelineConfig, command: &str, out: &mut Outputs) -> Result<(), CliError> {
    out.written.insert("manifest.json".into());
    let manifest = Manifest {
        tool: "fluxmi",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg,
        outputs: out.written.iter().collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    stage("manifest", write_file(&out.root.join("manifest.json"), &text))
}

/// How far a command runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Analyze,
    Impute,
    Fit,
    Pool,
    Eval,
}

impl Stage {
    pub fn command(self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::Impute => "impute",
            Stage::Fit => "fit",
            Stage::Pool => "pool",
            Stage::Eval => "eval",
        }
    }
}

/// Runs every stage up to `last`. With `all_outputs` the upstream stages'
/// files are written too (the `run` command); otherwise only `last`'s.
pub fn execute(cfg: &PipelineConfig, last: Stage, all_outputs: bool, command: &str, rep: Reporter) -> Result<Outputs, CliError> {
    cfg.validate()?;
    let mut out = Outputs::open(&cfg.output_dir)?;
    let writes = |s: Stage| all_outputs || s == last;

    rep.note("loading data");
    let prep = prepare(cfg)?;
    if writes(Stage::Analyze) {
        let a = analyze(&prep)?;
        write_analysis(&prep, &a, &mut out)?;
    }
    if last == Stage::Analyze {
        write_manifest(cfg, command, &mut out)?;
        return Ok(out);
    }

    rep.note(&format!("imputing with m = {}", cfg.imputation.m));
    let imp = impute(cfg, &prep, cfg.imputation.m)?;
    if writes(Stage::Impute) {
        write_imputation(&imp, &mut out)?;
    }
    if last > Stage::Impute {
        rep.note("backward stepwise selection per imputation");
        let fitted = fit(cfg, &prep, &imp)?;
        if writes(Stage::Fit) {
            write_fits(&fitted, &mut out)?;
        }
        if last > Stage::Fit {
            rep.note("pooling");
            let pooled = pool(cfg, &prep, &imp, &fitted, rep)?;
            if writes(Stage::Pool) {
                write_pooling(&pooled, &mut out)?;
            }
            if last > Stage::Pool {
                rep.note("validation");
                let e = evaluate(&prep, &imp, &fitted, &pooled)?;
                for s in write_evaluation(&e, &mut out)? {
                    rep.note(&format!("{}: AUC {:.3}", s.model, s.auc));
                }
            }
        }
    }
    write_manifest(cfg, command, &mut out)?;
    Ok(out)
}
