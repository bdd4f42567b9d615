use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fluxmi::synth::benchmark_scenario;
use fluxmi_cli::config::PipelineConfig;
use fluxmi_cli::pipeline::{execute, Outputs, Reporter, Stage};
use fluxmi_cli::CliError;

#[derive(Parser)]
#[command(name = "fluxmi", version, about = "Flux-guided multiple imputation for clinical prediction models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON pipeline configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the number of imputations.
    #[arg(long)]
    m: Option<usize>,
    /// Run imputation chains on several threads.
    #[arg(long)]
    parallel: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Missingness patterns, flux statistics and group comparisons.
    Analyze(Common),
    /// Split, transform and impute the training table.
    Impute(Common),
    /// Backward stepwise selection per imputation and on available cases.
    Fit(Common),
    /// Selection tally, supermodel and pooled coefficients.
    Pool(Common),
    /// Validation AUROC of the pooled and available-case models.
    Eval(Common),
    /// Every stage, writing all outputs.
    Run(Common),
    /// Write a built-in synthetic scenario with its ground truth.
    Synth {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn resolve(c: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(m) = c.m {
        cfg.imputation.m = m;
    }
    cfg.imputation.parallel |= c.parallel;
    Ok(cfg)
}

fn stage_command(c: &Common, last: Stage, all: bool, name: &str) -> Result<(), CliError> {
    let cfg = resolve(c)?;
    let out = execute(&cfg, last, all, name, Reporter { quiet: c.quiet })?;
    if !c.quiet {
        eprintln!("fluxmi: wrote {} files to {}", out.written.len(), out.root.display());
    }
    Ok(())
}

fn synth(scenario: &str, seed: Option<u64>, dir: &PathBuf) -> Result<(), CliError> {
    let (mut gen, truth) = benchmark_scenario(scenario).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(s) = seed {
        gen.seed = s;
    }
    let stage = |source| CliError::Stage { stage: "synth", source };
    let table = fluxmi::synth::generate(&gen).map_err(stage)?;
    let mut out = Outputs::open(dir)?;
    out.table("synth", &format!("{scenario}.csv"), &table)?;
    let truth_json = serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n";
    out.text("synth", &format!("{scenario}_truth.json"), &truth_json)?;
    let cfg_json = serde_json::to_string_pretty(&gen).expect("config serializes") + "\n";
    out.text("synth", &format!("{scenario}_config.json"), &cfg_json)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(c) => stage_command(c, Stage::Analyze, false, "analyze"),
        Command::Impute(c) => stage_command(c, Stage::Impute, false, "impute"),
        Command::Fit(c) => stage_command(c, Stage::Fit, false, "fit"),
        Command::Pool(c) => stage_command(c, Stage::Pool, false, "pool"),
        Command::Eval(c) => stage_command(c, Stage::Eval, false, "eval"),
        Command::Run(c) => stage_command(c, Stage::Eval, true, "run"),
        Command::Synth { scenario, seed, out } => synth(scenario, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fluxmi: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
