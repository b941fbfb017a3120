//! Model-driven receiver stages: pilot-bin LS and LMMSE channel estimation,
//! training removal, per-bin ZF/MMSE equalization, hard QPSK decisions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, UnitaryDft};
use crate::error::{check_len, DdstError, Result};
use crate::frame::{BitBlock, DdstConfig, DdstProjector};

/// Smallest channel magnitude ZF will divide by.
pub const ZF_FLOOR: f64 = 1e-8;
/// Smallest pilot spectral magnitude LS accepts.
pub const PILOT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    Ls,
    Mmse,
    CeNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `Ĥ` on all `N` bins.
    pub freq_full: Vec<Complex64>,
    /// Length-`P` tap estimate on the true tap scale, so that
    /// `freq_full = sqrt(N) * DFT(zero-padded time_taps)` for the LS chain.
    pub time_taps: Vec<Complex64>,
    pub method: EstimateMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EqualizerMethod {
    Zf,
    Mmse,
    SdNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizedFrame {
    pub time_symbols: Vec<Complex64>,
    pub method: EqualizerMethod,
    /// Bins whose channel magnitude was clipped at [`ZF_FLOOR`].
    pub clipped_bins: usize,
}

/// Diagonal tap covariance of the channel model, `E|h_l|^2` per tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapStatistics {
    pub powers: Vec<f64>,
}

/// Everything the linear stages need that is fixed per link: transforms,
/// the DDST projector and the known training spectrum at the pilot bins.
#[derive(Debug, Clone)]
pub struct RxFrontEnd {
    config: DdstConfig,
    dft_n: UnitaryDft,
    dft_p: UnitaryDft,
    projector: DdstProjector,
    training: Vec<Complex64>,
    pilot_spectrum: Vec<Complex64>,
}

impl RxFrontEnd {
    pub fn new(config: &DdstConfig, training: &[Complex64]) -> Result<Self> {
        config.validate()?;
        check_len(config.n, training.len())?;
        let dft_n = UnitaryDft::new(config.n);
        let spectrum = dft_n.forward(training)?;
        let pilot_spectrum: Vec<Complex64> = config.pilot_bins().map(|m| spectrum[m]).collect();
        for (k, z) in pilot_spectrum.iter().enumerate() {
            if z.norm() < PILOT_FLOOR {
                return Err(DdstError::IllConditionedPilot { bin: k * config.q(), magnitude: z.norm() });
            }
        }
        Ok(Self {
            config: config.clone(),
            dft_n,
            dft_p: UnitaryDft::new(config.p),
            projector: DdstProjector::new(config)?,
            training: training.to_vec(),
            pilot_spectrum,
        })
    }

    pub fn config(&self) -> &DdstConfig {
        &self.config
    }

    pub fn dft(&self) -> &UnitaryDft {
        &self.dft_n
    }

    pub fn projector(&self) -> &DdstProjector {
        &self.projector
    }

    pub fn training(&self) -> &[Complex64] {
        &self.training
    }

    pub fn pilot_spectrum(&self) -> &[Complex64] {
        &self.pilot_spectrum
    }

    /// `Ĥ = sqrt(N) F_N [taps; 0]`.
    pub fn taps_to_freq(&self, taps: &[Complex64]) -> Result<Vec<Complex64>> {
        let padded = dsp::zero_pad(taps, self.config.n)?;
        let scale = (self.config.n as f64).sqrt();
        Ok(self.dft_n.forward(&padded)?.into_iter().map(|z| z * scale).collect())
    }

    /// Inverse of [`Self::taps_to_freq`] over the full length-`N` tap grid.
    pub fn freq_to_taps(&self, freq: &[Complex64]) -> Result<Vec<Complex64>> {
        let scale = 1.0 / (self.config.n as f64).sqrt();
        Ok(self.dft_n.inverse(freq)?.into_iter().map(|z| z * scale).collect())
    }

    /// Pilot-bin LS: `Ĥ_P(k) = Y(kQ) / C(kQ)`, back to `P` taps with `F_P^H`,
    /// zero-padded to `N` and transformed onto the full grid.
    pub fn ls_estimate(&self, y: &[Complex64]) -> Result<ChannelEstimate> {
        let spec = self.dft_n.forward(y)?;
        let h_p: Vec<Complex64> =
            self.config.pilot_bins().zip(&self.pilot_spectrum).map(|(m, c)| spec[m] / c).collect();
        // F_P^H Ĥ_P equals sqrt(P) times the taps under unitary transforms.
        let unscale = 1.0 / (self.config.p as f64).sqrt();
        let time_taps: Vec<Complex64> = self.dft_p.inverse(&h_p)?.into_iter().map(|z| z * unscale).collect();
        let freq_full = self.taps_to_freq(&time_taps)?;
        Ok(ChannelEstimate { freq_full, time_taps, method: EstimateMethod::Ls })
    }

    /// Per-tap noise variance of the LS tap estimate for receiver noise `sigma_v2`.
    pub fn ls_tap_noise_variance(&self, sigma_v2: f64) -> f64 {
        let p = self.config.p as f64;
        let inv: f64 = self.pilot_spectrum.iter().map(|c| c.norm_sqr().recip()).sum();
        sigma_v2 * inv / (p * p)
    }

    /// Per-tap LMMSE shrinkage of the LS taps, `R_h (R_h + σ_eff^2 I)^{-1} ĥ_LS`,
    /// with `R_h` diagonal. Taps beyond the statistics' length have zero prior power.
    pub fn mmse_estimate(&self, y: &[Complex64], stats: &TapStatistics, sigma_v2: f64) -> Result<ChannelEstimate> {
        if stats.powers.is_empty() {
            return Err(DdstError::Config("MMSE estimation needs channel tap statistics".into()));
        }
        let ls = self.ls_estimate(y)?;
        let sigma_eff = self.ls_tap_noise_variance(sigma_v2);
        if sigma_eff == 0.0 {
            return Ok(ChannelEstimate { method: EstimateMethod::Mmse, ..ls });
        }
        let time_taps: Vec<Complex64> = ls
            .time_taps
            .iter()
            .enumerate()
            .map(|(l, h)| {
                let r = stats.powers.get(l).copied().unwrap_or(0.0);
                h * (r / (r + sigma_eff))
            })
            .collect();
        let freq_full = self.taps_to_freq(&time_taps)?;
        Ok(ChannelEstimate { freq_full, time_taps, method: EstimateMethod::Mmse })
    }

    /// `ŷ = (I - J) y`.
    pub fn remove_training(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.projector.apply(y)
    }

    fn equalize_with<F>(&self, y_clean: &[Complex64], est: &ChannelEstimate, mut gain: F) -> Result<(Vec<Complex64>, usize)>
    where
        F: FnMut(Complex64) -> (Complex64, bool),
    {
        check_len(self.config.n, est.freq_full.len())?;
        let mut spec = self.dft_n.forward(y_clean)?;
        let mut clipped = 0;
        for (z, h) in spec.iter_mut().zip(&est.freq_full) {
            let (g, clip) = gain(*h);
            clipped += usize::from(clip);
            *z *= g;
        }
        self.dft_n.transform_in_place(&mut spec, dsp::Direction::Inverse)?;
        Ok((spec, clipped))
    }

    /// Per-bin `Ŝ[m] = Ŷ[m] / Ĥ[m]`, back to time domain. Channel magnitudes
    /// below [`ZF_FLOOR`] are clipped (phase kept) and counted.
    pub fn zf_equalize(&self, y_clean: &[Complex64], est: &ChannelEstimate) -> Result<EqualizedFrame> {
        let (time_symbols, clipped_bins) = self.equalize_with(y_clean, est, |h| {
            let mag = h.norm();
            if mag < ZF_FLOOR {
                let phase = if mag > 0.0 { h / mag } else { Complex64::new(1.0, 0.0) };
                ((phase * ZF_FLOOR).inv(), true)
            } else {
                (h.inv(), false)
            }
        })?;
        Ok(EqualizedFrame { time_symbols, method: EqualizerMethod::Zf, clipped_bins })
    }

    /// Per-bin LMMSE equalizer `G[m] = Ĥ*[m] / (|Ĥ[m]|^2 + σ_v^2 / E_s)`.
    pub fn mmse_equalize(
        &self,
        y_clean: &[Complex64],
        est: &ChannelEstimate,
        sigma_v2: f64,
        symbol_energy: f64,
    ) -> Result<EqualizedFrame> {
        if sigma_v2 == 0.0 {
            let zf = self.zf_equalize(y_clean, est)?;
            return Ok(EqualizedFrame { method: EqualizerMethod::Mmse, ..zf });
        }
        let reg = sigma_v2 / symbol_energy;
        let (time_symbols, _) = self.equalize_with(y_clean, est, |h| (h.conj() / (h.norm_sqr() + reg), false))?;
        Ok(EqualizedFrame { time_symbols, method: EqualizerMethod::Mmse, clipped_bins: 0 })
    }
}

/// Sign decisions on I and Q; a zero component decides toward bit 0.
pub fn demap_qpsk(symbols: &[Complex64]) -> BitBlock {
    let mut bits = Vec::with_capacity(2 * symbols.len());
    for z in symbols {
        bits.push(u8::from(z.re < 0.0));
        bits.push(u8::from(z.im < 0.0));
    }
    BitBlock(bits)
}

/// `(Hamming distance, length)`.
pub fn count_errors(detected: &BitBlock, truth: &BitBlock) -> Result<(usize, usize)> {
    check_len(truth.len(), detected.len())?;
    let errors = detected.0.iter().zip(&truth.0).filter(|(a, b)| a != b).count();
    Ok((errors, truth.len()))
}
