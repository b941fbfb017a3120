//! Supervised sample sets for the two refiners.
//!
//! Every sample draws from its own seed stream, so a dataset is a pure
//! function of `(link, count, policy, seed)` and any single row can be
//! regenerated in isolation.

use ddst_core::dsp::{reshape_complex_to_real, reshape_real_to_complex};
use ddst_core::link::Link;
use ddst_core::rng::{self, derive_seed};
use ddst_core::rx::ChannelEstimate;
use ndarray::{s, Array2, ArrayView1, Axis};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_width, NeuralError, Result};
use crate::mlp::{MlpModel, Mode};

/// How each sample's receiver SNR is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SnrPolicy {
    Noiseless,
    Fixed { snr_db: f64 },
    /// Uniform over a grid, independently per sample.
    Mixed { grid_db: Vec<f64> },
}

impl Default for SnrPolicy {
    fn default() -> Self {
        Self::mixed_default()
    }
}

impl SnrPolicy {
    /// `{0, 5, ..., 45}` dB.
    pub fn mixed_default() -> Self {
        Self::Mixed { grid_db: (0..10).map(|k| 5.0 * k as f64).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Mixed { grid_db } if grid_db.is_empty() => Err(NeuralError::Config("empty SNR grid".into())),
            Self::Mixed { grid_db } if grid_db.iter().any(|s| !s.is_finite()) => {
                Err(NeuralError::Config("non-finite SNR in grid".into()))
            }
            Self::Fixed { snr_db } if !snr_db.is_finite() => Err(NeuralError::Config("non-finite SNR".into())),
            _ => Ok(()),
        }
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match self {
            Self::Noiseless => None,
            Self::Fixed { snr_db } => Some(*snr_db),
            Self::Mixed { grid_db } => grid_db.choose(rng).copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Input: LS channel estimate. Label: effective channel response.
    Ce,
    /// Input: ZF-equalized symbols. Label: transmitted symbols.
    Sd,
}

impl DatasetKind {
    fn stream_label(self) -> &'static str {
        match self {
            Self::Ce => "ce-dataset",
            Self::Sd => "sd-dataset",
        }
    }
}

/// Rows of real-reshaped inputs and labels plus per-sample metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub inputs: Array2<f64>,
    pub labels: Array2<f64>,
    /// Per-sample SNR; `+inf` marks a noiseless sample.
    pub snr_db: Vec<f64>,
    /// Per-sample stream index under the dataset seed.
    pub streams: Vec<u64>,
    pub seed: u64,
    pub config_hash: String,
}

impl Dataset {
    pub fn new(
        kind: DatasetKind,
        inputs: Array2<f64>,
        labels: Array2<f64>,
        snr_db: Vec<f64>,
        streams: Vec<u64>,
        seed: u64,
        config_hash: String,
    ) -> Result<Self> {
        let ds = Self { kind, inputs, labels, snr_db, streams, seed, config_hash };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.inputs.nrows();
        check_width(rows, self.labels.nrows())?;
        check_width(rows, self.snr_db.len())?;
        check_width(rows, self.streams.len())?;
        if !self.inputs.iter().chain(self.labels.iter()).all(|v| v.is_finite()) {
            return Err(NeuralError::Format("dataset contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_width(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn label_width(&self) -> usize {
        self.labels.ncols()
    }

    /// Split off the last `count` rows.
    pub fn split_tail(mut self, count: usize) -> Result<(Self, Self)> {
        if count > self.len() {
            return Err(NeuralError::Dimension { expected: count, found: self.len() });
        }
        let cut = self.len() - count;
        let tail = Self {
            kind: self.kind,
            inputs: self.inputs.slice(s![cut.., ..]).to_owned(),
            labels: self.labels.slice(s![cut.., ..]).to_owned(),
            snr_db: self.snr_db.split_off(cut),
            streams: self.streams.split_off(cut),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        };
        self.inputs = self.inputs.slice(s![..cut, ..]).to_owned();
        self.labels = self.labels.slice(s![..cut, ..]).to_owned();
        Ok((self, tail))
    }
}

/// Where the SD dataset takes its channel knowledge from.
#[derive(Debug, Clone, Copy)]
pub enum CsiSource<'a> {
    /// The trained channel refiner applied to the LS estimate.
    CeNet(&'a MlpModel),
    Ls,
    /// The true effective channel.
    Perfect,
}

struct RawSample {
    ls: ChannelEstimate,
    effective: Vec<ddst_core::Complex64>,
    received: Vec<ddst_core::Complex64>,
    symbols: Vec<ddst_core::Complex64>,
    snr: f64,
}

fn simulate(link: &Link, kind: DatasetKind, count: usize, policy: &SnrPolicy, seed: u64) -> Result<Vec<RawSample>> {
    policy.validate()?;
    let base = derive_seed(seed, kind.stream_label());
    let front = link.front_end();
    (0..count as u64)
        .map(|i| {
            let mut r = rng::stream(base, i);
            let snr = policy.draw(&mut r);
            let frame = link.simulate_frame(snr, &mut r)?;
            Ok(RawSample {
                ls: front.ls_estimate(&frame.received)?,
                effective: link.effective_response(&frame.channel),
                received: frame.received,
                symbols: frame.symbols,
                snr: snr.unwrap_or(f64::INFINITY),
            })
        })
        .collect()
}

fn rows(vectors: impl Iterator<Item = Vec<f64>>, count: usize, width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((count, width));
    for (mut row, v) in out.axis_iter_mut(Axis(0)).zip(vectors) {
        row.assign(&ArrayView1::from(&v[..]));
    }
    out
}

/// LS estimates paired with the effective channel `K_s H` they should map to.
pub fn build_ce_dataset(link: &Link, count: usize, policy: &SnrPolicy, seed: u64, config_hash: &str) -> Result<Dataset> {
    let width = 2 * link.ddst().n;
    let raw = simulate(link, DatasetKind::Ce, count, policy, seed)?;
    let inputs = rows(raw.iter().map(|s| reshape_complex_to_real(&s.ls.freq_full)), count, width);
    let labels = rows(raw.iter().map(|s| reshape_complex_to_real(&s.effective)), count, width);
    Dataset::new(
        DatasetKind::Ce,
        inputs,
        labels,
        raw.iter().map(|s| s.snr).collect(),
        (0..count as u64).collect(),
        seed,
        config_hash.to_owned(),
    )
}

/// ZF-equalized symbols under refined CSI paired with the transmitted symbols.
/// Fails with a dependency error when no trained channel refiner is supplied.
pub fn build_sd_dataset(
    link: &Link,
    ce_model: Option<&MlpModel>,
    count: usize,
    policy: &SnrPolicy,
    seed: u64,
    config_hash: &str,
) -> Result<Dataset> {
    let ce = ce_model.ok_or_else(|| {
        NeuralError::MissingDependency("the SD dataset needs a trained CE-Net; train it first".into())
    })?;
    build_sd_dataset_with(link, CsiSource::CeNet(ce), count, policy, seed, config_hash)
}

pub fn build_sd_dataset_with(
    link: &Link,
    csi: CsiSource<'_>,
    count: usize,
    policy: &SnrPolicy,
    seed: u64,
    config_hash: &str,
) -> Result<Dataset> {
    let n = link.ddst().n;
    let front = link.front_end();
    let raw = simulate(link, DatasetKind::Sd, count, policy, seed)?;

    let responses: Vec<Vec<ddst_core::Complex64>> = match csi {
        CsiSource::Ls => raw.iter().map(|s| s.ls.freq_full.clone()).collect(),
        CsiSource::Perfect => raw.iter().map(|s| s.effective.clone()).collect(),
        CsiSource::CeNet(model) => {
            check_width(2 * n, model.architecture.input_width())?;
            let ls = rows(raw.iter().map(|s| reshape_complex_to_real(&s.ls.freq_full)), count, 2 * n);
            let mut refined = Vec::with_capacity(count);
            for chunk in ls.axis_chunks_iter(Axis(0), 1024) {
                let out = model.forward(chunk, Mode::Infer)?;
                for row in out.axis_iter(Axis(0)) {
                    refined.push(reshape_real_to_complex(row.as_slice().expect("row-major output"))?);
                }
            }
            refined
        }
    };

    let mut equalized = Vec::with_capacity(count);
    for (sample, freq) in raw.iter().zip(responses) {
        let est = ChannelEstimate { time_taps: front.freq_to_taps(&freq)?, freq_full: freq, method: sample.ls.method };
        let clean = front.remove_training(&sample.received)?;
        equalized.push(reshape_complex_to_real(&front.zf_equalize(&clean, &est)?.time_symbols));
    }
    let inputs = rows(equalized.into_iter(), count, 2 * n);
    let labels = rows(raw.iter().map(|s| reshape_complex_to_real(&s.symbols)), count, 2 * n);
    Dataset::new(
        DatasetKind::Sd,
        inputs,
        labels,
        raw.iter().map(|s| s.snr).collect(),
        (0..count as u64).collect(),
        seed,
        config_hash.to_owned(),
    )
}
