//! Run configuration: a sectioned TOML file plus command-line overrides.
//!
//! Every key is optional; omitted keys take the desk-scale defaults. See
//! `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderConfig, MseNormalization};
use crate::detectors::AdmmParams;
use crate::error::{Error, Result};
use crate::evaluation::{parse_scenarios, EvalConfig, Scenario};
use crate::fronthaul::Precision;
use crate::signal_model::{Constellation, SystemConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub m: usize,
    pub k: usize,
    pub n_sc: usize,
    pub n_cbw: usize,
    pub n_slot: usize,
    pub constellation: Constellation,
}

impl Default for SystemSection {
    fn default() -> Self {
        let s = SystemConfig::default();
        SystemSection {
            m: s.m,
            k: s.k,
            n_sc: s.n_sc,
            n_cbw: s.n_cbw,
            n_slot: s.n_slot,
            constellation: s.constellation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    pub l2_coeff: f64,
    pub sparsity_coeff: f64,
    pub sparsity_target: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub loss_tol: f64,
    pub mse: MseNormalization,
    pub rotations: usize,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let a = AutoencoderConfig::default();
        AutoencoderSection {
            l2_coeff: a.l2_coeff,
            sparsity_coeff: a.sparsity_coeff,
            sparsity_target: a.sparsity_target,
            max_epochs: 2000,
            grad_tol: a.grad_tol,
            loss_tol: a.loss_tol,
            mse: a.mse,
            rotations: a.rotations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub iterations: usize,
    pub clusters: usize,
    pub admm_rho: f64,
    pub admm_outer: usize,
    pub admm_inner: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let p = AdmmParams::default();
        DetectorSection {
            iterations: crate::evaluation::DEFAULT_ITERATIONS,
            clusters: 4,
            admm_rho: p.rho,
            admm_outer: p.t_outer,
            admm_inner: p.t_inner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    /// Each block's AE is trained at that block's SNR.
    Operating,
    /// Each block's AE is trained once at `training_snr_db`.
    Fixed,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WirePrecision {
    F32,
    F64,
}

impl From<WirePrecision> for Precision {
    fn from(p: WirePrecision) -> Precision {
        match p {
            WirePrecision::F32 => Precision::F32,
            WirePrecision::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub scenarios: Vec<String>,
    pub n_div: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub blocks: usize,
    pub seed: u64,
    pub training: TrainingMode,
    pub training_snr_db: f64,
    pub precision: WirePrecision,
    pub threads: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            scenarios: ["full", "ae", "array", "admm"].map(String::from).to_vec(),
            n_div: vec![2, 4, 8],
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            blocks: 50,
            seed: 0,
            training: TrainingMode::Operating,
            training_snr_db: 10.0,
            precision: WirePrecision::F32,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub autoencoder: AutoencoderSection,
    pub detector: DetectorSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// M=512, K=40, four clusters, five iterations.
    pub fn apply_paper_scale(&mut self) {
        self.system.m = 512;
        self.system.k = 40;
        self.detector.clusters = 4;
        self.detector.iterations = 5;
        self.sweep.n_div = vec![8];
    }

    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            m: self.system.m,
            k: self.system.k,
            n_sc: self.system.n_sc,
            n_cbw: self.system.n_cbw,
            n_slot: self.system.n_slot,
            constellation: self.system.constellation,
            master_seed: self.sweep.seed,
        }
    }

    /// `n_div` is filled per scenario.
    pub fn autoencoder(&self, n_div: usize) -> AutoencoderConfig {
        let a = &self.autoencoder;
        AutoencoderConfig {
            n_div,
            l2_coeff: a.l2_coeff,
            sparsity_coeff: a.sparsity_coeff,
            sparsity_target: a.sparsity_target,
            max_epochs: a.max_epochs,
            grad_tol: a.grad_tol,
            loss_tol: a.loss_tol,
            mse: a.mse,
            rotations: a.rotations,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            system: self.system(),
            autoencoder: self.autoencoder(self.sweep.n_div.first().copied().unwrap_or(1)),
            admm: AdmmParams {
                rho: self.detector.admm_rho,
                t_outer: self.detector.admm_outer,
                t_inner: self.detector.admm_inner,
            },
            precision: self.sweep.precision.into(),
            threads: self.sweep.threads,
        }
    }

    /// Scenario list with `ae` expanded according to the training mode.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let mut items = Vec::new();
        for s in &self.sweep.scenarios {
            if s.trim() == "ae" {
                if self.sweep.training != TrainingMode::Fixed {
                    items.push("ae".to_string());
                }
                if self.sweep.training != TrainingMode::Operating {
                    items.push(format!("ae-train{}", self.sweep.training_snr_db));
                }
            } else {
                items.push(s.clone());
            }
        }
        let mut list = parse_scenarios(&items.join(","), &self.sweep.n_div, self.detector.clusters)?;
        for s in &mut list {
            s.iterations = self.detector.iterations;
        }
        Ok(list)
    }

    /// Every violated constraint across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self.system().violations().into_iter().map(|m| format!("system: {m}")).collect();
        if self.sweep.blocks == 0 {
            v.push("sweep: blocks must be at least 1".into());
        }
        if self.sweep.snr_db.is_empty() {
            v.push("sweep: snr_db must not be empty".into());
        }
        if self.sweep.snr_db.iter().any(|s| s.is_nan()) {
            v.push("sweep: snr_db contains NaN".into());
        }
        if self.sweep.n_div.is_empty() {
            v.push("sweep: n_div must not be empty".into());
        }
        if self.detector.iterations == 0 {
            v.push("detector: iterations must be at least 1".into());
        }
        if self.autoencoder.max_epochs == 0 {
            v.push("autoencoder: max_epochs must be at least 1".into());
        }
        match self.scenarios() {
            Ok(list) => v.extend(self.eval_config().violations(&list)),
            Err(Error::Config(msgs)) => v.extend(msgs.into_iter().map(|m| format!("sweep: {m}"))),
            Err(e) => v.push(e.to_string()),
        }
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
