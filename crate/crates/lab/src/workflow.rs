//! The subcommand workflows: dataset generation, training, the online
//! inference pipeline and drive-level calibration. Sweeps live in `sweep`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ddst_core::dsp::reshape_real_to_complex;
use ddst_core::link::{DriveLevel, Link};
use ddst_core::receiver::RxSetup;
use ddst_core::rng;
use ddst_core::rx::count_errors;
use ddst_core::DdstError;
use ddst_neural::{
    build_ce_dataset, build_sd_dataset, glorot_init, load_checkpoint_for, load_dataset, save_checkpoint,
    save_dataset, train, Dataset, MlpArchitecture, MlpModel, TrainingConfig, TrainingReport,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{file_hash, ExperimentConfig, Net};
use crate::error::{LabError, Result};
use crate::registry::{Models, Needs, Registry};
use crate::sweep::{run_sweep, SweepResult};

pub fn build_link(config: &ExperimentConfig) -> Result<Link> {
    Ok(Link::build(config.link.clone())?)
}

fn ensure_out_dir(config: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&config.out_dir).map_err(|e| LabError::io(&config.out_dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn architecture(net: Net, n: usize) -> MlpArchitecture {
    match net {
        Net::Ce => MlpArchitecture::ce_net(n),
        Net::Sd => MlpArchitecture::sd_net(n),
    }
}

/// Load a trained network, or explain which command produces it.
pub fn load_net(config: &ExperimentConfig, net: Net) -> Result<Arc<MlpModel>> {
    let path = config.checkpoint_path(net);
    if !path.exists() {
        return Err(LabError::MissingDependency(format!(
            "{} not found; run `ddst train --net {}` first",
            path.display(),
            net.label()
        )));
    }
    let ckpt = load_checkpoint_for(&path, &architecture(net, config.link.ddst.n))?;
    Ok(Arc::new(ckpt.model))
}

/// Load exactly the checkpoints `needs` asks for.
pub fn load_models(config: &ExperimentConfig, needs: Needs) -> Result<Models> {
    Ok(Models {
        ce_net: if needs.ce_net { Some(load_net(config, Net::Ce)?) } else { None },
        sd_net: if needs.sd_net { Some(load_net(config, Net::Sd)?) } else { None },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetFile {
    pub split: String,
    pub path: PathBuf,
    pub rows: usize,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateReport {
    pub net: Net,
    pub config_hash: String,
    pub files: Vec<DatasetFile>,
    pub manifest: PathBuf,
}

/// Build the training and validation sets for `net`. `count` overrides the
/// configured training size; validation keeps its configured ratio to it.
pub fn generate(config: &ExperimentConfig, net: Net, count: Option<usize>) -> Result<GenerateReport> {
    config.validate()?;
    ensure_out_dir(config)?;
    let link = build_link(config)?;
    let settings = config.net(net);
    let train_rows = count.unwrap_or(settings.train_samples);
    let val_rows = match count {
        Some(c) => (c * settings.validation_samples / settings.train_samples).max(1),
        None => settings.validation_samples,
    };
    let ce = match net {
        Net::Ce => None,
        Net::Sd => Some(load_net(config, Net::Ce)?),
    };
    let hash = config.hash();
    let mut files = Vec::new();
    for (split, rows) in [("train", train_rows), ("val", val_rows)] {
        let seed = config.derived_seed(&format!("{}-{split}", net.label()));
        let ds = match net {
            Net::Ce => build_ce_dataset(&link, rows, &settings.snr_policy, seed, &hash)?,
            Net::Sd => build_sd_dataset(&link, ce.as_deref(), rows, &settings.snr_policy, seed, &hash)?,
        };
        let path = config.dataset_path(net, split);
        let generation = json!({ "split": split, "snr_policy": settings.snr_policy, "link": config.link });
        save_dataset(&path, &ds, &generation)?;
        files.push(DatasetFile { split: split.into(), sha256: file_hash(&path)?, path, rows, seed });
    }
    let manifest = config.out_dir.join(format!("{}_manifest.json", net.label()));
    let report = GenerateReport { net, config_hash: hash, files, manifest: manifest.clone() };
    let text = serde_json::to_string_pretty(&report).map_err(|e| LabError::Output(e.to_string()))?;
    write_text(&manifest, &text)?;
    Ok(report)
}

fn load_split(config: &ExperimentConfig, net: Net, split: &str) -> Result<Dataset> {
    let path = config.dataset_path(net, split);
    if !path.exists() {
        return Err(LabError::MissingDependency(format!(
            "{} not found; run `ddst generate --net {}` first",
            path.display(),
            net.label()
        )));
    }
    Ok(load_dataset(&path)?.0)
}

fn write_curve(path: &Path, report: &TrainingReport, alpha: f64, hash: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Output(e.to_string()))?;
    let out = |e: csv::Error| LabError::Output(e.to_string());
    w.write_record(["epoch", "train_loss", "validation_loss", "l2_coefficient", "config_hash"]).map_err(out)?;
    for e in &report.curve {
        w.write_record([
            e.epoch.to_string(),
            format!("{:e}", e.train_loss),
            format!("{:e}", e.validation_loss),
            format!("{alpha:e}"),
            hash.to_owned(),
        ])
        .map_err(out)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

fn fit(config: &ExperimentConfig, net: Net, training: &TrainingConfig) -> Result<(MlpModel, TrainingReport)> {
    if net == Net::Sd {
        // The SD inputs were produced by a fixed CE-Net; refuse to train
        // against a missing one rather than against stale data.
        load_net(config, Net::Ce)?;
    }
    let train_set = load_split(config, net, "train")?;
    let val_set = load_split(config, net, "val")?;
    let mut model = glorot_init(architecture(net, config.link.ddst.n), config.derived_seed(&format!("{}-init", net.label())))?;
    let mut training = training.clone();
    if training.shuffle_seed == 0 {
        training.shuffle_seed = config.derived_seed(&format!("{}-shuffle", net.label()));
    }
    let report = train(&mut model, &train_set, &val_set, &training)?;
    Ok((model, report))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub report: TrainingReport,
}

/// Train `net` on its generated datasets and save the best-validation model.
pub fn train_net(config: &ExperimentConfig, net: Net) -> Result<TrainOutcome> {
    config.validate()?;
    ensure_out_dir(config)?;
    let training = &config.net(net).training;
    let (model, report) = fit(config, net, training)?;
    let hash = config.hash();
    let checkpoint = config.checkpoint_path(net);
    save_checkpoint(&checkpoint, &model, &hash)?;
    let curve = config.out_dir.join(format!("{}_loss.csv", net.label()));
    write_curve(&curve, &report, training.l2_coefficient, &hash)?;
    Ok(TrainOutcome { checkpoint, curve, report })
}

#[derive(Debug, Clone)]
pub struct AlphaCurve {
    pub alpha: f64,
    pub curve: PathBuf,
    pub report: TrainingReport,
}

/// One fresh training run per L2 coefficient in the configured grid. No
/// checkpoint is written; the curves are the product.
pub fn train_alpha_grid(config: &ExperimentConfig, net: Net) -> Result<Vec<AlphaCurve>> {
    config.validate()?;
    ensure_out_dir(config)?;
    let hash = config.hash();
    config
        .alpha_grid
        .iter()
        .map(|&alpha| {
            let training = TrainingConfig { l2_coefficient: alpha, ..config.net(net).training.clone() };
            let (_, report) = fit(config, net, &training)?;
            let curve = config.out_dir.join(format!("{}_loss_alpha_{alpha:e}.csv", net.label()));
            write_curve(&curve, &report, alpha, &hash)?;
            Ok(AlphaCurve { alpha, curve, report })
        })
        .collect()
}

/// Where the online pipeline takes its received frames from.
#[derive(Debug, Clone)]
pub enum FrameSource {
    /// Text file, one frame per line: N real parts then N imaginary parts,
    /// separated by whitespace or commas.
    File(PathBuf),
    /// Frames drawn from the configured link; bit errors are then counted.
    Simulated { count: usize, snr_db: Option<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameOutcome {
    pub index: usize,
    pub bits: Vec<u8>,
    pub latency_s: f64,
    pub bit_errors: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferReport {
    pub variant: String,
    pub stages: Vec<&'static str>,
    pub frames: Vec<FrameOutcome>,
    pub bits_path: PathBuf,
    pub config_hash: String,
}

impl InferReport {
    pub fn bit_errors(&self) -> Option<usize> {
        self.frames.iter().map(|f| f.bit_errors).sum()
    }
}

/// Parse a frames file completely before anything is processed.
pub fn read_frames(path: &Path, n: usize) -> Result<Vec<Vec<ddst_core::Complex64>>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| LabError::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if values.len() != 2 * n {
            return Err(DdstError::Dimension { expected: 2 * n, found: values.len() }.into());
        }
        frames.push(reshape_real_to_complex(&values)?);
    }
    Ok(frames)
}

/// Run the online pipeline over `source` with `variant` (the learned chain
/// by default). Outputs are written only after every frame succeeded.
pub fn infer(config: &ExperimentConfig, source: &FrameSource, variant: Option<&str>) -> Result<InferReport> {
    config.validate()?;
    let registry = Registry::builtin();
    let variant = variant.unwrap_or("CE_Net + SD_Net");
    let models = load_models(config, registry.needs(variant)?)?;
    let chain = registry.build(variant, &models)?;
    let link = build_link(config)?;
    let n = link.ddst().n;

    let (received, truth, snr_db) = match source {
        FrameSource::File(path) => (read_frames(path, n)?, None, None),
        FrameSource::Simulated { count, snr_db } => {
            let mut r = rng::stream(config.derived_seed("infer"), 0);
            let records = (0..*count).map(|_| link.simulate_frame(*snr_db, &mut r)).collect::<ddst_core::Result<Vec<_>>>()?;
            let (rx, bits) = records.into_iter().map(|f| (f.received, f.bits)).unzip();
            (rx, Some(bits), *snr_db)
        }
    };
    let setup = RxSetup::for_link(&link, snr_db);
    let ctx = setup.context();
    let truth: Option<Vec<_>> = truth;
    let mut frames = Vec::with_capacity(received.len());
    for (i, y) in received.iter().enumerate() {
        let t0 = Instant::now();
        let det = chain.process(&ctx, y)?;
        let latency_s = if config.deterministic { 0.0 } else { t0.elapsed().as_secs_f64() };
        let bit_errors = match &truth {
            Some(t) => Some(count_errors(&det.bits, &t[i])?.0),
            None => None,
        };
        frames.push(FrameOutcome { index: i, bits: det.bits.0, latency_s, bit_errors });
    }

    ensure_out_dir(config)?;
    let hash = config.hash();
    let bits_path = config.out_dir.join("infer_bits.txt");
    let mut text = format!("# variant={}\n# config_hash={hash}\n", chain.label());
    for f in &frames {
        text.extend(f.bits.iter().map(|b| if *b == 0 { '0' } else { '1' }));
        text.push('\n');
    }
    write_text(&bits_path, &text)?;
    let latency_path = config.out_dir.join("infer_frames.csv");
    let mut w = csv::Writer::from_path(&latency_path).map_err(|e| LabError::Output(e.to_string()))?;
    let out = |e: csv::Error| LabError::Output(e.to_string());
    w.write_record(["frame", "latency_s", "bit_errors", "config_hash"]).map_err(out)?;
    for f in &frames {
        let errors = f.bit_errors.map_or(String::new(), |e| e.to_string());
        w.write_record([f.index.to_string(), format!("{:e}", f.latency_s), errors, hash.clone()]).map_err(out)?;
    }
    w.flush().map_err(|e| LabError::io(&latency_path, e))?;

    Ok(InferReport { variant: chain.label(), stages: chain.stages(), frames, bits_path, config_hash: hash })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationRow {
    pub target_evm_pct: f64,
    pub drive_level: f64,
    pub measured_evm_pct: f64,
    pub data_gain_abs: f64,
    pub distortion_power: f64,
}

/// Calibrate the amplifier drive level for each EVM target.
pub fn calibrate_evm(config: &ExperimentConfig, targets: &[f64]) -> Result<Vec<CalibrationRow>> {
    config.validate()?;
    let rows = targets
        .iter()
        .map(|&evm_pct| {
            let mut link_cfg = config.link.clone();
            link_cfg.drive = DriveLevel::TargetEvm { evm_pct };
            let link = Link::build(link_cfg)?;
            let op = link.operating_point();
            Ok(CalibrationRow {
                target_evm_pct: evm_pct,
                drive_level: op.hpa.input_scale,
                measured_evm_pct: op.evm_pct,
                data_gain_abs: op.data_gain.norm(),
                distortion_power: op.distortion_power,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_out_dir(config)?;
    let path = config.out_dir.join("calibration.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| LabError::Output(e.to_string()))?;
    let out = |e: csv::Error| LabError::Output(e.to_string());
    w.write_record(["target_evm_pct", "drive_level", "measured_evm_pct", "data_gain_abs", "distortion_power", "config_hash"])
        .map_err(out)?;
    let hash = config.hash();
    for r in &rows {
        w.write_record([
            r.target_evm_pct.to_string(),
            format!("{:e}", r.drive_level),
            format!("{:.6}", r.measured_evm_pct),
            format!("{:.9}", r.data_gain_abs),
            format!("{:e}", r.distortion_power),
            hash.clone(),
        ])
        .map_err(out)?;
    }
    w.flush().map_err(|e| LabError::io(&path, e))?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub result: SweepResult,
    pub csv: PathBuf,
    pub plot_data: PathBuf,
    pub metadata: PathBuf,
}

/// Sweep the configured grid, loading only the checkpoints the variants need.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let registry = Registry::builtin();
    let needs = config.variants.iter().try_fold(Needs::default(), |acc, v| Ok::<_, LabError>(acc.union(registry.needs(v)?)))?;
    let models = load_models(config, needs)?;
    let result = run_sweep(config, &registry, &models)?;
    ensure_out_dir(config)?;
    let csv = config.out_dir.join("sweep.csv");
    let plot_data = config.out_dir.join("sweep_plot.csv");
    result.write_csv(&csv)?;
    result.write_plot_data(&plot_data)?;
    let metadata = config.out_dir.join("sweep_meta.json");
    let meta = json!({
        "config_hash": result.config_hash,
        "bits_per_frame": result.bits_per_frame,
        "stopping_rule": config.stopping,
        "interval": "wilson-95",
        "variants": config.variants,
    });
    let mut f = fs::File::create(&metadata).map_err(|e| LabError::io(&metadata, e))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&meta).map_err(|e| LabError::Output(e.to_string()))?)
        .map_err(|e| LabError::io(&metadata, e))?;
    Ok(SweepOutcome { result, csv, plot_data, metadata })
}
