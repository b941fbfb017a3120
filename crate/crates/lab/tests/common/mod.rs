#![allow(dead_code)]

use std::path::Path;

use ddst_core::link::LinkConfig;
use ddst_lab::config::{ExperimentConfig, StoppingRule};
use ddst_lab::workflow::architecture;
use ddst_lab::Net;
use ddst_neural::{save_checkpoint, MlpArchitecture, MlpModel};

/// A configuration small enough for unit-scale runs.
pub fn small_config(out_dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        link: LinkConfig { calibration_frames: 40, anchor_frames: 100, ..LinkConfig::default() },
        snr_grid_db: vec![20.0],
        stopping: StoppingRule { min_trials: 5, min_errors: 100, max_trials: 5 },
        out_dir: out_dir.to_path_buf(),
        deterministic: true,
        ..ExperimentConfig::default()
    };
    for net in [Net::Ce, Net::Sd] {
        let s = cfg.net_mut(net);
        s.train_samples = 120;
        s.validation_samples = 40;
        s.training.epochs = 2;
    }
    cfg
}

/// A ReLU network that passes its input through unchanged: every value is
/// lifted by a large bias, routed through the first units of each hidden
/// layer, and lowered again at the linear output.
pub fn identity_model(arch: MlpArchitecture) -> MlpModel {
    const LIFT: f64 = 1e3;
    let width = arch.input_width();
    let mut m = MlpModel::zeros(arch).unwrap();
    let depth = m.weights.len();
    for k in 0..depth {
        for i in 0..width {
            m.weights[k][[i, i]] = 1.0;
        }
    }
    m.biases[0].iter_mut().take(width).for_each(|b| *b = LIFT);
    m.biases[depth - 1].iter_mut().for_each(|b| *b = -LIFT);
    m
}

pub fn write_identity_checkpoints(cfg: &ExperimentConfig) {
    std::fs::create_dir_all(&cfg.out_dir).unwrap();
    for net in [Net::Ce, Net::Sd] {
        let model = identity_model(architecture(net, cfg.link.ddst.n));
        save_checkpoint(&cfg.checkpoint_path(net), &model, &cfg.hash()).unwrap();
    }
}
