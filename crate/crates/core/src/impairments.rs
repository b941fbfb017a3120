//! Transmitter nonlinearity, multipath channel and receiver noise.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{self, UnitaryDft};
use crate::error::{check_len, DdstError, Result};

/// Memoryless Saleh amplifier acting on the complex envelope.
///
/// With `r = input_scale * |x|`:
/// `A(r) = alpha_a r / (1 + beta_a r^2)` and
/// `Φ(r) = alpha_phi r^2 / (1 + beta_phi r^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SalehHpa {
    pub alpha_a: f64,
    pub beta_a: f64,
    pub alpha_phi: f64,
    pub beta_phi: f64,
    /// Drive level applied before the AM/AM and AM/PM curves.
    pub input_scale: f64,
}

impl Default for SalehHpa {
    fn default() -> Self {
        Self { alpha_a: 1.96, beta_a: 0.99, alpha_phi: 2.53, beta_phi: 2.82, input_scale: 1.0 }
    }
}

impl SalehHpa {
    /// A distortion-free amplifier with complex-envelope gain `gain`.
    pub fn linear(gain: f64) -> Self {
        Self { alpha_a: gain, beta_a: 0.0, alpha_phi: 0.0, beta_phi: 0.0, input_scale: 1.0 }
    }

    pub fn with_input_scale(mut self, input_scale: f64) -> Self {
        self.input_scale = input_scale;
        self
    }

    pub fn am_am(&self, r: f64) -> f64 {
        self.alpha_a * r / (1.0 + self.beta_a * r * r)
    }

    pub fn am_pm(&self, r: f64) -> f64 {
        self.alpha_phi * r * r / (1.0 + self.beta_phi * r * r)
    }

    /// Small-signal complex-envelope gain, `alpha_a * input_scale`.
    pub fn linear_gain(&self) -> f64 {
        self.alpha_a * self.input_scale
    }

    pub fn apply_sample(&self, x: Complex64) -> Complex64 {
        let r = self.input_scale * x.norm();
        // A(r) / |x| written without the division so that 0 maps to 0.
        let gain = self.alpha_a * self.input_scale / (1.0 + self.beta_a * r * r);
        x * Complex64::from_polar(gain, self.am_pm(r))
    }
}

pub fn apply_hpa(x: &[Complex64], hpa: &SalehHpa) -> Vec<Complex64> {
    x.iter().map(|&z| hpa.apply_sample(z)).collect()
}

/// Error energy and reference energy of one vector against the linear
/// reference `R_n = alpha_a * input_scale * x_n`.
fn evm_energies(x: &[Complex64], hpa: &SalehHpa) -> (f64, f64) {
    let g = hpa.linear_gain();
    x.iter().fold((0.0, 0.0), |(err, refe), &z| {
        let reference = z * g;
        (err + (hpa.apply_sample(z) - reference).norm_sqr(), refe + reference.norm_sqr())
    })
}

/// EVM in percent of one vector.
pub fn measure_evm(x: &[Complex64], hpa: &SalehHpa) -> Result<f64> {
    measure_evm_ensemble(std::slice::from_ref(&x), hpa)
}

/// EVM in percent pooled over a set of frames (energies summed before the ratio).
pub fn measure_evm_ensemble<V: AsRef<[Complex64]>>(frames: &[V], hpa: &SalehHpa) -> Result<f64> {
    let (err, refe) = frames
        .iter()
        .map(|f| evm_energies(f.as_ref(), hpa))
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if refe <= 0.0 || !refe.is_finite() {
        return Err(DdstError::UndefinedInput("EVM of an all-zero input (or zero-gain amplifier)".into()));
    }
    Ok(100.0 * (err / refe).sqrt())
}

/// Bisection on the drive level so that the pooled EVM over `reference_frames`
/// hits `target_pct`. Returns the calibrated `input_scale`.
///
/// EVM must be monotone in the drive level over the bracket; any probe that
/// breaks the ordering of its bracket endpoints aborts the calibration.
pub fn calibrate_drive_level<V: AsRef<[Complex64]>>(
    target_pct: f64,
    hpa: &SalehHpa,
    reference_frames: &[V],
) -> Result<f64> {
    let fail = |reason: String| DdstError::Calibration { target_pct, reason };
    if !(target_pct > 0.0 && target_pct < 90.0) {
        return Err(fail("target must lie in (0, 90) percent".into()));
    }
    let evm_at = |scale: f64| measure_evm_ensemble(reference_frames, &hpa.with_input_scale(scale));
    const MONOTONE_SLACK: f64 = 1e-9;

    let (mut lo, mut evm_lo) = (0.0, 0.0);
    let mut hi = 1e-4;
    let mut evm_hi = evm_at(hi)?;
    while evm_hi < target_pct {
        if hi > 1e3 {
            return Err(fail(format!("unreachable: EVM reaches only {evm_hi:.3}% at drive level {hi:e}")));
        }
        let next = 2.0 * hi;
        let evm_next = evm_at(next)?;
        if evm_next + MONOTONE_SLACK < evm_hi {
            return Err(fail(format!("EVM not monotone in drive level near {hi:e}")));
        }
        lo = hi;
        evm_lo = evm_hi;
        hi = next;
        evm_hi = evm_next;
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let evm_mid = evm_at(mid)?;
        if evm_mid + MONOTONE_SLACK < evm_lo || evm_mid > evm_hi + MONOTONE_SLACK {
            return Err(fail(format!("EVM not monotone in drive level near {mid:e}")));
        }
        if (evm_mid - target_pct).abs() < 1e-3 || hi - lo < 1e-14 * hi {
            return Ok(mid);
        }
        if evm_mid < target_pct {
            lo = mid;
            evm_lo = evm_mid;
        } else {
            hi = mid;
            evm_hi = evm_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Statistics of a calibrated amplifier over a transmit ensemble, frozen for
/// noise anchoring and for the linear receivers' second-order models.
///
/// The amplifier output is split as `x_dis = K_s Θs + K_c c + d`, with the
/// Bussgang gains fitted separately for the data and training components and
/// `d` the residual distortion, uncorrelated with both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpaOperatingPoint {
    pub hpa: SalehHpa,
    pub evm_pct: f64,
    /// Mean per-sample power of the distorted frames, `E_xdis`.
    pub output_power: f64,
    /// Linear gain seen by the data component, `K_s`.
    pub data_gain: Complex64,
    /// Linear gain seen by the training component, `K_c`.
    pub training_gain: Complex64,
    /// Mean per-sample power of the residual `d`.
    pub distortion_power: f64,
}

impl HpaOperatingPoint {
    /// Measure over frames `x = data + training`, given the data parts.
    pub fn measure<V: AsRef<[Complex64]>>(hpa: SalehHpa, transmitted: &[V], data: &[V]) -> Result<Self> {
        if transmitted.len() != data.len() {
            return Err(DdstError::Dimension { expected: transmitted.len(), found: data.len() });
        }
        let evm_pct = measure_evm_ensemble(transmitted, &hpa)?;
        let zero = Complex64::new(0.0, 0.0);
        let distorted: Vec<Vec<Complex64>> = transmitted.iter().map(|f| apply_hpa(f.as_ref(), &hpa)).collect();
        // Joint least squares for (K_s, K_c) over the ensemble.
        let (mut cross_d, mut cross_c, mut cd) = (zero, zero, zero);
        let (mut pow_d, mut pow_c, mut out_pow, mut count) = (0.0, 0.0, 0.0, 0usize);
        for ((x, d), y) in transmitted.iter().zip(data).zip(&distorted) {
            let (x, d) = (x.as_ref(), d.as_ref());
            check_len(x.len(), d.len())?;
            for ((xi, di), yi) in x.iter().zip(d).zip(y) {
                let ci = xi - di;
                cross_d += yi * di.conj();
                cross_c += yi * ci.conj();
                cd += ci * di.conj();
                pow_d += di.norm_sqr();
                pow_c += ci.norm_sqr();
                out_pow += yi.norm_sqr();
            }
            count += y.len();
        }
        let det = pow_d * pow_c - cd.norm_sqr();
        let (data_gain, training_gain) = if det > 1e-12 * pow_d * pow_c {
            ((cross_d * pow_c - cross_c * cd) / det, (cross_c * pow_d - cross_d * cd.conj()) / det)
        } else {
            // Collinear components: one common gain.
            let pow_x = pow_d + pow_c + 2.0 * cd.re;
            let k = if pow_x > 0.0 { (cross_d + cross_c) / pow_x } else { zero };
            (k, k)
        };
        let mut resid = 0.0;
        for ((x, d), y) in transmitted.iter().zip(data).zip(&distorted) {
            for ((xi, di), yi) in x.as_ref().iter().zip(d.as_ref()).zip(y) {
                resid += (yi - data_gain * di - training_gain * (xi - di)).norm_sqr();
            }
        }
        Ok(Self {
            hpa,
            evm_pct,
            output_power: out_pow / count as f64,
            data_gain,
            training_gain,
            distortion_power: resid / count as f64,
        })
    }
}

/// Tapped-delay-line channel with its frequency response on the frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Path gains `h_0 .. h_{L-1}`.
    pub taps: Vec<Complex64>,
    /// `H[m] = sum_l h_l exp(-j 2π m l / N)`, i.e. `sqrt(N)` times the unitary DFT
    /// of the zero-padded taps.
    pub freq_response: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_taps(taps: Vec<Complex64>, dft: &UnitaryDft) -> Result<Self> {
        let n = dft.size();
        let padded = dsp::zero_pad(&taps, n)?;
        let scale = (n as f64).sqrt();
        let freq_response = dft.forward(&padded)?.into_iter().map(|z| z * scale).collect();
        Ok(Self { taps, freq_response })
    }

    pub fn identity(dft: &UnitaryDft) -> Self {
        Self::from_taps(vec![Complex64::new(1.0, 0.0)], dft).expect("single tap fits any frame")
    }

    pub fn num_paths(&self) -> usize {
        self.taps.len()
    }

    pub fn padded_taps(&self) -> Vec<Complex64> {
        dsp::zero_pad(&self.taps, self.freq_response.len()).expect("taps fit the frame")
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.freq_response.len(), x.len())?;
        dsp::circular_convolve_direct(&self.padded_taps(), x)
    }
}

/// Normalized exponential power-delay profile decaying `decay_db` per tap.
pub fn exponential_pdp(num_paths: usize, decay_db: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..num_paths).map(|l| 10f64.powf(-decay_db * l as f64 / 10.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

pub const PDP_DECAY_DB: f64 = 3.0;

/// Draw an `L`-tap Rayleigh realization with the 3 dB/tap exponential profile,
/// normalized so that `sum |h_l|^2 = 1`. `L` may not exceed the training period.
pub fn draw_channel<R: Rng + ?Sized>(
    num_paths: usize,
    period: usize,
    dft: &UnitaryDft,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if num_paths == 0 || num_paths > period {
        return Err(DdstError::Config(format!(
            "number of paths L = {num_paths} must satisfy 1 <= L <= P = {period}"
        )));
    }
    let pdp = exponential_pdp(num_paths, PDP_DECAY_DB);
    let mut taps: Vec<Complex64> = pdp.iter().map(|&p| complex_gaussian(rng, p)).collect();
    let energy = dsp::norm_sqr(&taps);
    let norm = if energy > 0.0 { energy.sqrt().recip() } else { 1.0 };
    for h in &mut taps {
        *h *= norm;
    }
    ChannelRealization::from_taps(taps, dft)
}

/// Circular complex Gaussian sample with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Receiver noise level, anchored to the distorted transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db }
    }

    /// `sigma_v^2 = E_xdis * 10^(-SNR/10)`.
    pub fn variance(&self, distorted_power: f64) -> f64 {
        distorted_power * 10f64.powf(-self.snr_db / 10.0)
    }
}

pub fn add_noise<R: Rng + ?Sized>(y: &mut [Complex64], variance: f64, rng: &mut R) {
    if variance > 0.0 {
        for z in y.iter_mut() {
            *z += complex_gaussian(rng, variance);
        }
    }
}

/// `y = H_c f_dis(x) + v`, with `v` of per-sample variance `noise_variance`.
pub fn transmit<R: Rng + ?Sized>(
    x: &[Complex64],
    hpa: &SalehHpa,
    channel: &ChannelRealization,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let distorted = apply_hpa(x, hpa);
    let mut y = channel.apply(&distorted)?;
    add_noise(&mut y, noise_variance, rng);
    Ok(y)
}
