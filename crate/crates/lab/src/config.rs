//! Experiment configuration, loaded from TOML and hashed for provenance.

use std::path::{Path, PathBuf};

use ddst_core::link::LinkConfig;
use ddst_core::rng::derive_seed;
use ddst_neural::{SnrPolicy, TrainingConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::registry::Registry;

/// Which network a command acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Net {
    Ce,
    Sd,
}

impl Net {
    pub fn label(self) -> &'static str {
        match self {
            Self::Ce => "ce",
            Self::Sd => "sd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSettings {
    pub train_samples: usize,
    pub validation_samples: usize,
    pub snr_policy: SnrPolicy,
    pub training: TrainingConfig,
}

impl NetSettings {
    fn defaults(training: TrainingConfig) -> Self {
        Self { train_samples: 60_000, validation_samples: 20_000, snr_policy: SnrPolicy::mixed_default(), training }
    }
}

impl Default for NetSettings {
    fn default() -> Self {
        Self::defaults(TrainingConfig::ce_default())
    }
}

/// Monte-Carlo stopping rule for one BER point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingRule {
    /// Frames always simulated.
    pub min_trials: usize,
    /// Keep going until this many bit errors are seen...
    pub min_errors: usize,
    /// ...or this many frames have run (the point is then flagged as capped).
    pub max_trials: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        // 2084 frames of 480 bits is just over 10^6 bits.
        Self { min_trials: 100, min_errors: 100, max_trials: 2084 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub link: LinkConfig,
    pub snr_grid_db: Vec<f64>,
    /// EVM targets for sweeps; empty means the link's own target.
    pub evm_grid_pct: Vec<f64>,
    /// Path counts for sweeps; empty means the link's own `num_paths`.
    pub paths_grid: Vec<usize>,
    pub variants: Vec<String>,
    pub stopping: StoppingRule,
    pub ce: NetSettings,
    pub sd: NetSettings,
    /// L2 coefficients for the regularization study.
    pub alpha_grid: Vec<f64>,
    pub out_dir: PathBuf,
    /// Single-threaded, wall-clock-free outputs.
    pub deterministic: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            link: LinkConfig::default(),
            snr_grid_db: (0..=10).map(|k| 3.0 * k as f64).collect(),
            evm_grid_pct: Vec::new(),
            paths_grid: Vec::new(),
            variants: vec!["LS_CE + ZF_SD".into(), "MMSE_CE + MMSE_SD".into(), "CE_Net + SD_Net".into()],
            stopping: StoppingRule::default(),
            ce: NetSettings::defaults(TrainingConfig::ce_default()),
            sd: NetSettings::defaults(TrainingConfig::sd_default()),
            alpha_grid: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
            out_dir: PathBuf::from("ddst-out"),
            deterministic: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Output(e.to_string()))
    }

    /// The experiment seed also seeds the link's training sequence and calibration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.link.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        self.link.ddst.validate()?;
        if self.snr_grid_db.is_empty() {
            return bad("the SNR grid is empty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("the SNR grid contains a non-finite value".into());
        }
        if self.evm_grid_pct.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("EVM targets must be positive".into());
        }
        if self.paths_grid.iter().any(|&l| l == 0 || l > self.link.ddst.p) {
            return bad(format!("path counts must lie in 1..={}", self.link.ddst.p));
        }
        if self.variants.is_empty() {
            return bad("no receiver variants selected".into());
        }
        let registry = Registry::builtin();
        for v in &self.variants {
            registry.parse_variant(v)?;
        }
        let s = &self.stopping;
        if s.min_trials == 0 || s.max_trials < s.min_trials {
            return bad(format!("stopping rule needs 1 <= min_trials <= max_trials, got {s:?}"));
        }
        for (name, net) in [("ce", &self.ce), ("sd", &self.sd)] {
            if net.train_samples < 2 || net.validation_samples == 0 {
                return bad(format!("{name}: need at least two training and one validation sample"));
            }
            net.training.validate().map_err(|e| LabError::Config(format!("{name}: {e}")))?;
            net.snr_policy.validate().map_err(|e| LabError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn net(&self, net: Net) -> &NetSettings {
        match net {
            Net::Ce => &self.ce,
            Net::Sd => &self.sd,
        }
    }

    pub fn net_mut(&mut self, net: Net) -> &mut NetSettings {
        match net {
            Net::Ce => &mut self.ce,
            Net::Sd => &mut self.sd,
        }
    }

    /// Hex SHA-256 of the configuration with the output directory blanked,
    /// so relocating outputs does not change provenance.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("configuration serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn derived_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn evm_targets(&self) -> Vec<Option<f64>> {
        if self.evm_grid_pct.is_empty() {
            vec![self.link.drive.target_evm_pct()]
        } else {
            self.evm_grid_pct.iter().map(|&e| Some(e)).collect()
        }
    }

    pub fn path_counts(&self) -> Vec<usize> {
        if self.paths_grid.is_empty() {
            vec![self.link.num_paths]
        } else {
            self.paths_grid.clone()
        }
    }

    pub fn checkpoint_path(&self, net: Net) -> PathBuf {
        self.out_dir.join(format!("{}_net.ckpt", net.label()))
    }

    pub fn dataset_path(&self, net: Net, split: &str) -> PathBuf {
        self.out_dir.join(format!("{}_{split}.dset", net.label()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_files_fill_defaults_and_unknown_keys_fail() {
        let cfg = ExperimentConfig::from_toml_str("seed = 5\nsnr_grid_db = [10.0]\n[link]\nnum_paths = 4\n").unwrap();
        assert_eq!((cfg.seed, cfg.link.num_paths, cfg.snr_grid_db.clone()), (5, 4, vec![10.0]));
        assert!(matches!(ExperimentConfig::from_toml_str("sneed = 5"), Err(LabError::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("snr_grid_db = []"), Err(LabError::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("variants = [\"LS_CE\"]"), Err(LabError::Config(_))));
    }

    #[test]
    fn hash_ignores_out_dir_but_not_seed() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().with_seed(1).hash());
        assert_eq!(a.hash().len(), 64);
    }
}
