//! Monte-Carlo BER sweeps over (EVM, L, SNR) for a set of receiver variants.
//!
//! Within one grid cell every variant sees the same frames, so differences
//! between variants are paired rather than independent estimates.

use std::path::Path;
use std::time::Instant;

use ddst_core::link::{DriveLevel, Link, LinkConfig};
use ddst_core::receiver::{ReceiverChain, RxSetup};
use ddst_core::rng;
use ddst_core::rx::count_errors;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StoppingRule};
use crate::error::{LabError, Result};
use crate::registry::{Models, Registry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub snr_db: f64,
    /// Calibrated EVM target; `None` for an uncalibrated amplifier.
    pub evm_pct: Option<f64>,
    pub paths: usize,
    /// Frames simulated.
    pub trials: usize,
    pub bit_errors: usize,
    pub ber: f64,
    /// The frame cap was hit before the error target.
    pub capped: bool,
    pub wall_time_s: f64,
}

impl SweepRow {
    pub fn bits(&self, bits_per_frame: usize) -> usize {
        self.trials * bits_per_frame
    }

    /// Wilson 95% interval on the bit error rate.
    pub fn interval(&self, bits_per_frame: usize) -> (f64, f64) {
        wilson_interval(self.bit_errors, self.bits(bits_per_frame))
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(errors: usize, bits: usize) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = bits as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    // The bounds touch 0 and 1 exactly at the extremes; rounding would not.
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == bits { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub bits_per_frame: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.variant
                .cmp(&b.variant)
                .then(a.evm_pct.unwrap_or(-1.0).total_cmp(&b.evm_pct.unwrap_or(-1.0)))
                .then(a.paths.cmp(&b.paths))
                .then(a.snr_db.total_cmp(&b.snr_db))
        });
    }

    pub fn find(&self, variant: &str, snr_db: f64, evm_pct: Option<f64>, paths: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.variant == variant && r.snr_db == snr_db && r.evm_pct == evm_pct && r.paths == paths)
    }

    /// One row per (variant, cell).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Output(e.to_string()))?;
        let out = |e: csv::Error| LabError::Output(e.to_string());
        w.write_record([
            "variant",
            "snr_db",
            "evm_pct",
            "paths",
            "trials",
            "bit_errors",
            "ber",
            "capped",
            "wall_time_s",
            "config_hash",
        ])
        .map_err(out)?;
        for r in &self.rows {
            w.write_record([
                r.variant.clone(),
                r.snr_db.to_string(),
                r.evm_pct.map_or(String::new(), |e| e.to_string()),
                r.paths.to_string(),
                r.trials.to_string(),
                r.bit_errors.to_string(),
                format!("{:e}", r.ber),
                r.capped.to_string(),
                format!("{:.3}", r.wall_time_s),
                self.config_hash.clone(),
            ])
            .map_err(out)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))
    }

    /// Long format for plotting: one line per (variant, cell) with the
    /// interval bounds and the block the point belongs to.
    pub fn write_plot_data(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Output(e.to_string()))?;
        let out = |e: csv::Error| LabError::Output(e.to_string());
        w.write_record(["block", "series", "x_snr_db", "ber", "ber_low", "ber_high", "config_hash"]).map_err(out)?;
        for r in &self.rows {
            let (lo, hi) = r.interval(self.bits_per_frame);
            let block = format!("evm={};L={}", r.evm_pct.map_or("none".into(), |e| e.to_string()), r.paths);
            w.write_record([
                block,
                r.variant.clone(),
                r.snr_db.to_string(),
                format!("{:e}", r.ber),
                format!("{lo:e}"),
                format!("{hi:e}"),
                self.config_hash.clone(),
            ])
            .map_err(out)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))
    }
}

/// One (EVM, L) block of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub evm_pct: Option<f64>,
    pub paths: usize,
}

/// Link for one block: the configured link, recalibrated and re-pathed.
pub fn block_link(base: &LinkConfig, block: Block) -> Result<Link> {
    let mut cfg = base.clone();
    cfg.num_paths = block.paths;
    cfg.drive = match block.evm_pct {
        Some(evm_pct) => DriveLevel::TargetEvm { evm_pct },
        None => DriveLevel::Fixed,
    };
    Ok(Link::build(cfg)?)
}

/// Run every variant over a common frame sequence at one SNR.
pub fn run_cell(
    link: &Link,
    chains: &[(String, ReceiverChain)],
    snr_db: f64,
    rule: &StoppingRule,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let setup = RxSetup::for_link(link, Some(snr_db));
    let ctx = setup.context();
    let mut r = rng::stream(seed, 0);
    let mut errors = vec![0usize; chains.len()];
    let mut trials = vec![0usize; chains.len()];
    let mut elapsed = vec![0.0f64; chains.len()];
    let done = |e: usize, t: usize| t >= rule.max_trials || (t >= rule.min_trials && e >= rule.min_errors);
    while (0..chains.len()).any(|i| !done(errors[i], trials[i])) {
        let frame = link.simulate_frame(Some(snr_db), &mut r)?;
        for (i, (_, chain)) in chains.iter().enumerate() {
            if done(errors[i], trials[i]) {
                continue;
            }
            let t0 = Instant::now();
            let det = chain.process(&ctx, &frame.received)?;
            elapsed[i] += t0.elapsed().as_secs_f64();
            errors[i] += count_errors(&det.bits, &frame.bits)?.0;
            trials[i] += 1;
        }
    }
    let bits_per_frame = link.ddst().bits_per_frame();
    Ok(chains
        .iter()
        .enumerate()
        .map(|(i, (name, _))| SweepRow {
            variant: name.clone(),
            snr_db,
            evm_pct: link.config().drive.target_evm_pct(),
            paths: link.config().num_paths,
            trials: trials[i],
            bit_errors: errors[i],
            ber: errors[i] as f64 / (trials[i] * bits_per_frame) as f64,
            capped: errors[i] < rule.min_errors,
            wall_time_s: elapsed[i],
        })
        .collect())
}

fn cell_seed(seed: u64, block: Block, snr_db: f64) -> u64 {
    let label = format!("sweep/evm={:?}/L={}/snr={}", block.evm_pct, block.paths, snr_db);
    rng::derive_seed(seed, &label)
}

/// Sweep every (EVM, L, SNR) cell of `config` over its variants.
pub fn run_sweep(config: &ExperimentConfig, registry: &Registry, models: &Models) -> Result<SweepResult> {
    config.validate()?;
    let chains: Vec<(String, ReceiverChain)> = config
        .variants
        .iter()
        .map(|v| {
            let chain = registry.build(v, models)?;
            Ok((chain.label(), chain))
        })
        .collect::<Result<_>>()?;

    let blocks: Vec<Block> = config
        .evm_targets()
        .into_iter()
        .flat_map(|evm_pct| config.path_counts().into_iter().map(move |paths| Block { evm_pct, paths }))
        .collect();
    // One calibration per block.
    let links: Vec<(Block, Link)> = blocks.iter().map(|&b| Ok((b, block_link(&config.link, b)?))).collect::<Result<_>>()?;

    let cells: Vec<(usize, f64)> =
        (0..links.len()).flat_map(|i| config.snr_grid_db.iter().map(move |&s| (i, s))).collect();
    let run = |&(i, snr): &(usize, f64)| {
        let (block, link) = &links[i];
        run_cell(link, &chains, snr, &config.stopping, cell_seed(config.seed, *block, snr))
    };
    let per_cell: Vec<Vec<SweepRow>> = if config.deterministic {
        cells.iter().map(run).collect::<Result<_>>()?
    } else {
        cells.par_iter().map(run).collect::<Result<_>>()?
    };

    let mut rows: Vec<SweepRow> = per_cell.into_iter().flatten().collect();
    if config.deterministic {
        for r in &mut rows {
            r.wall_time_s = 0.0;
        }
    }
    let mut result =
        SweepResult { config_hash: config.hash(), bits_per_frame: config.link.ddst.bits_per_frame(), rows };
    result.sort();
    Ok(result)
}
