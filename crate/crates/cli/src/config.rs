//! Pipeline configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fluxmi::data::{ColumnSpec, Role};
use fluxmi::glm::StepCriterion;
use fluxmi::pool::PooledTestKind;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    /// A CSV file read against an explicit schema.
    Csv { path: PathBuf, schema: Vec<ColumnSpec> },
    /// A built-in synthetic scenario, generated with the run seed.
    Synth { scenario: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationSettings {
    pub m: usize,
    pub max_iter: usize,
    pub pmm_donors: usize,
    /// Run chains concurrently. Results do not depend on it, so it is left
    /// out of the serialized form and the config hash.
    #[serde(skip_serializing)]
    pub parallel: bool,
    /// Additional imputation counts whose selection tallies are reported
    /// next to the main one.
    pub compare_m: Vec<usize>,
    /// Variables always used as imputation predictors, besides the outcome.
    pub pinned_predictors: Vec<String>,
}

impl Default for ImputationSettings {
    fn default() -> Self {
        ImputationSettings {
            m: 5,
            max_iter: 10,
            pmm_donors: 5,
            parallel: false,
            compare_m: Vec::new(),
            pinned_predictors: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub input: Input,
    /// Rows missing at least this fraction of predictors are dropped.
    pub row_filter_threshold: f64,
    pub outflux_threshold: f64,
    pub split_fraction: f64,
    pub imputation: ImputationSettings,
    pub stepwise: StepCriterion,
    pub supermodel_alpha: f64,
    pub pooled_test: PooledTestKind,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            input: Input::Synth {
                scenario: "paper_like".into(),
            },
            row_filter_threshold: 0.6,
            outflux_threshold: 0.9,
            split_fraction: 0.7,
            imputation: ImputationSettings::default(),
            stepwise: StepCriterion::Aic,
            supermodel_alpha: 0.05,
            pooled_test: PooledTestKind::D1,
            seed: 20_190_601,
            output_dir: PathBuf::from("fluxmi-out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.row_filter_threshold > 0.0 && self.row_filter_threshold <= 1.0) {
            return bad("row_filter_threshold must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.outflux_threshold) {
            return bad("outflux_threshold must be in [0, 1]".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must be in (0, 1)".into());
        }
        if !(self.supermodel_alpha > 0.0 && self.supermodel_alpha < 1.0) {
            return bad("supermodel_alpha must be in (0, 1)".into());
        }
        if let StepCriterion::PValue(a) = self.stepwise {
            if !(a > 0.0 && a < 1.0) {
                return bad("stepwise p-value level must be in (0, 1)".into());
            }
        }
        let imp = &self.imputation;
        if imp.m < 2 || imp.compare_m.iter().any(|&m| m < 2) {
            return bad("every imputation count must be at least 2".into());
        }
        if imp.max_iter < 1 || imp.pmm_donors < 1 {
            return bad("max_iter and pmm_donors must be at least 1".into());
        }
        if let Input::Synth { scenario } = &self.input {
            if let Err(e) = scenario.parse::<fluxmi::synth::Scenario>() {
                return bad(e.to_string());
            }
        }
        if let Input::Csv { schema, .. } = &self.input {
            let outcomes = schema.iter().filter(|c| c.role == Role::Outcome).count();
            if outcomes != 1 {
                return bad(format!("schema must have exactly one outcome column, found {outcomes}"));
            }
            for p in &imp.pinned_predictors {
                if !schema.iter().any(|c| &c.name == p) {
                    return bad(format!("pinned predictor `{p}` is not in the schema"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
