//! End-to-end link simulation: frame construction, calibrated amplifier,
//! multipath channel and noise, with the statistics the receivers rely on.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DdstError, Result};
use crate::frame::{build_training_sequence, modulate_qpsk, superimpose, BitBlock, DdstConfig};
use crate::impairments::{
    apply_hpa, calibrate_drive_level, draw_channel, exponential_pdp, ChannelRealization, HpaOperatingPoint, NoiseSpec,
    SalehHpa, PDP_DECAY_DB,
};
use crate::rng::{self, derive_seed, SimRng};
use crate::rx::{RxFrontEnd, TapStatistics};

/// How the amplifier's drive level is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveLevel {
    /// Recalibrate `input_scale` so the ensemble EVM hits the target.
    TargetEvm { evm_pct: f64 },
    /// Use the amplifier exactly as configured.
    Fixed,
}

impl DriveLevel {
    pub fn target_evm_pct(self) -> Option<f64> {
        match self {
            Self::TargetEvm { evm_pct } => Some(evm_pct),
            Self::Fixed => None,
        }
    }
}

/// Link-level simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub ddst: DdstConfig,
    pub hpa: SalehHpa,
    pub drive: DriveLevel,
    /// Number of channel paths `L`.
    pub num_paths: usize,
    /// Seed for the training sequence and the calibration ensembles.
    pub seed: u64,
    pub calibration_frames: usize,
    /// Frames used to anchor `E_xdis` and the Bussgang statistics.
    pub anchor_frames: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            ddst: DdstConfig::default(),
            hpa: SalehHpa::default(),
            drive: DriveLevel::TargetEvm { evm_pct: 55.0 },
            num_paths: 12,
            seed: 2024,
            calibration_frames: 200,
            anchor_frames: 1000,
        }
    }
}

impl LinkConfig {
    /// Default link recalibrated to another EVM and path count.
    pub fn at(evm_pct: f64, num_paths: usize, seed: u64) -> Self {
        Self { drive: DriveLevel::TargetEvm { evm_pct }, num_paths, seed, ..Self::default() }
    }

    /// Distortion-free link: unit-gain linear amplifier.
    pub fn linear(ddst: DdstConfig, num_paths: usize, seed: u64) -> Self {
        Self { ddst, hpa: SalehHpa::linear(1.0), drive: DriveLevel::Fixed, num_paths, seed, ..Self::default() }
    }
}

/// One simulated frame with every intermediate signal kept.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub bits: BitBlock,
    /// Modulated data `s`.
    pub symbols: Vec<Complex64>,
    /// `Θ s`.
    pub projected: Vec<Complex64>,
    /// `x = Θ s + c`.
    pub transmitted: Vec<Complex64>,
    pub channel: ChannelRealization,
    pub received: Vec<Complex64>,
    pub noise_variance: f64,
}

#[derive(Debug, Clone)]
pub struct Link {
    config: LinkConfig,
    front: RxFrontEnd,
    operating_point: HpaOperatingPoint,
    tap_powers: Vec<f64>,
}

impl Link {
    pub fn build(config: LinkConfig) -> Result<Self> {
        config.ddst.validate()?;
        if config.num_paths == 0 || config.num_paths > config.ddst.p {
            return Err(DdstError::Config(format!(
                "number of paths L = {} must satisfy 1 <= L <= P = {}",
                config.num_paths, config.ddst.p
            )));
        }
        let mut train_rng = rng::stream(derive_seed(config.seed, "training-sequence"), 0);
        let training = build_training_sequence(&config.ddst, 1.0, &mut train_rng)?;
        let front = RxFrontEnd::new(&config.ddst, &training)?;

        let mut link = Self {
            tap_powers: exponential_pdp(config.num_paths, PDP_DECAY_DB),
            operating_point: HpaOperatingPoint {
                hpa: config.hpa,
                evm_pct: 0.0,
                output_power: 1.0,
                data_gain: Complex64::new(1.0, 0.0),
                training_gain: Complex64::new(1.0, 0.0),
                distortion_power: 0.0,
            },
            front,
            config,
        };

        let mut hpa = link.config.hpa;
        if let Some(target) = link.config.drive.target_evm_pct() {
            let mut cal_rng = rng::stream(derive_seed(link.config.seed, "calibration"), 0);
            let (frames, _) = link.draw_transmit_frames(link.config.calibration_frames.max(1), &mut cal_rng)?;
            hpa.input_scale = calibrate_drive_level(target, &hpa, &frames)?;
        }
        let mut anchor_rng = rng::stream(derive_seed(link.config.seed, "anchor"), 0);
        let (frames, data) = link.draw_transmit_frames(link.config.anchor_frames.max(1), &mut anchor_rng)?;
        link.operating_point = HpaOperatingPoint::measure(hpa, &frames, &data)?;
        Ok(link)
    }

    /// Transmit frames and their projected-data components.
    fn draw_transmit_frames(&self, count: usize, rng: &mut SimRng) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
        let mut frames = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let (_, _, projected, x) = self.draw_transmit(rng)?;
            frames.push(x);
            data.push(projected);
        }
        Ok((frames, data))
    }

    fn draw_transmit<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<(BitBlock, Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
        let cfg = &self.config.ddst;
        let bits = BitBlock::random(cfg.bits_per_frame(), rng);
        let symbols = modulate_qpsk(&bits, cfg.symbol_energy())?;
        let projected = self.front.projector().apply(&symbols)?;
        let transmitted = superimpose(&projected, self.front.training())?;
        Ok((bits, symbols, projected, transmitted))
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn ddst(&self) -> &DdstConfig {
        &self.config.ddst
    }

    pub fn front_end(&self) -> &RxFrontEnd {
        &self.front
    }

    pub fn training(&self) -> &[Complex64] {
        self.front.training()
    }

    pub fn operating_point(&self) -> &HpaOperatingPoint {
        &self.operating_point
    }

    pub fn hpa(&self) -> &SalehHpa {
        &self.operating_point.hpa
    }

    /// Receiver noise variance at `snr_db`, anchored to the ensemble `E_xdis`.
    pub fn noise_variance(&self, snr_db: Option<f64>) -> f64 {
        snr_db.map_or(0.0, |s| NoiseSpec::new(s).variance(self.operating_point.output_power))
    }

    /// Noise plus amplifier distortion, treated as one white disturbance by the
    /// second-order (LMMSE) receivers.
    pub fn effective_noise_variance(&self, snr_db: Option<f64>) -> f64 {
        self.noise_variance(snr_db) + self.operating_point.distortion_power
    }

    /// Tap covariance of the effective data channel `K_s h`, with `K_s` the
    /// amplifier's Bussgang gain on the data component.
    pub fn tap_statistics(&self) -> TapStatistics {
        let g = self.operating_point.data_gain.norm_sqr();
        TapStatistics { powers: self.tap_powers.iter().map(|p| p * g).collect() }
    }

    /// Frequency response of the effective data channel `K_s H`.
    pub fn effective_response(&self, channel: &ChannelRealization) -> Vec<Complex64> {
        let k = self.operating_point.data_gain;
        channel.freq_response.iter().map(|h| h * k).collect()
    }

    pub fn draw_channel<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization> {
        draw_channel(self.config.num_paths, self.config.ddst.p, self.front.dft(), rng)
    }

    /// Simulate one frame over a fresh channel; `snr_db = None` is noiseless.
    pub fn simulate_frame<R: Rng + ?Sized>(&self, snr_db: Option<f64>, rng: &mut R) -> Result<FrameRecord> {
        let channel = self.draw_channel(rng)?;
        self.simulate_frame_over(channel, snr_db, rng)
    }

    pub fn simulate_frame_over<R: Rng + ?Sized>(
        &self,
        channel: ChannelRealization,
        snr_db: Option<f64>,
        rng: &mut R,
    ) -> Result<FrameRecord> {
        let (bits, symbols, projected, transmitted) = self.draw_transmit(rng)?;
        let noise_variance = self.noise_variance(snr_db);
        let distorted = apply_hpa(&transmitted, &self.operating_point.hpa);
        let mut received = channel.apply(&distorted)?;
        crate::impairments::add_noise(&mut received, noise_variance, rng);
        Ok(FrameRecord { bits, symbols, projected, transmitted, channel, received, noise_variance })
    }
}
