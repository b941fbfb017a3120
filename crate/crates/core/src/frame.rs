//! DDST transmit frame construction.
//!
//! A frame is built as `x = (I - J) s + c`, where `s` carries QPSK data,
//! `c` is a `P`-periodic training sequence and `J = (1/Q) J_Q ⊗ I_P`
//! averages the `Q` length-`P` blocks of a vector with the rotation phases
//! `exp(j 2π t (q - q') / Q)`. For `t = 0`, `I - J` removes exactly the
//! spectral content at the pilot bins `kQ`, which is where `c` lives.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, UnitaryDft};
use crate::error::{check_len, DdstError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    #[default]
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
        }
    }
}

/// Frame and power-split parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdstConfig {
    /// Frame length in samples.
    pub n: usize,
    /// Training period in samples.
    pub p: usize,
    /// Constellation-rotation shift used by `J_Q`.
    pub t: i64,
    pub data_power_fraction: f64,
    pub training_power_fraction: f64,
    pub modulation: Modulation,
}

impl Default for DdstConfig {
    fn default() -> Self {
        Self {
            n: 240,
            p: 12,
            t: 0,
            data_power_fraction: 0.9,
            training_power_fraction: 0.1,
            modulation: Modulation::Qpsk,
        }
    }
}

impl DdstConfig {
    pub fn new(n: usize, p: usize, t: i64, data_power_fraction: f64) -> Result<Self> {
        let cfg = Self {
            n,
            p,
            t,
            data_power_fraction,
            training_power_fraction: 1.0 - data_power_fraction,
            modulation: Modulation::Qpsk,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(DdstError::Config("N and P must be positive".into()));
        }
        if self.n % self.p != 0 {
            return Err(DdstError::Config(format!(
                "N = {} is not a multiple of P = {} (floor(N/P)*P != N)",
                self.n, self.p
            )));
        }
        let (d, c) = (self.data_power_fraction, self.training_power_fraction);
        if !(d > 0.0 && d < 1.0 && c > 0.0 && c < 1.0) {
            return Err(DdstError::Config("power fractions must lie in (0, 1)".into()));
        }
        if (d + c - 1.0).abs() > 1e-12 {
            return Err(DdstError::Config(format!("power fractions sum to {}, expected 1", d + c)));
        }
        Ok(())
    }

    /// Number of training repetitions per frame, `Q = N / P`.
    pub fn q(&self) -> usize {
        self.n / self.p
    }

    /// Per-symbol energy of the modulated data `s` such that the projected
    /// data `Θ s` carries `data_power_fraction` of a unit-power frame.
    /// `J` is a rank-`P` projection, so it removes `P / N` of the data energy.
    pub fn symbol_energy(&self) -> f64 {
        self.data_power_fraction * self.n as f64 / (self.n - self.p) as f64
    }

    pub fn bits_per_frame(&self) -> usize {
        self.n * self.modulation.bits_per_symbol()
    }

    /// Pilot bin indices `kQ`, `k = 0..P`.
    pub fn pilot_bins(&self) -> impl Iterator<Item = usize> {
        let q = self.q();
        (0..self.p).map(move |k| k * q)
    }
}

/// Hard bits for one frame, two per QPSK symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock(pub Vec<u8>);

impl BitBlock {
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random_range(0..2u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// Gray-mapped QPSK: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`,
/// scaled to `energy_per_symbol`.
pub fn modulate_qpsk(bits: &BitBlock, energy_per_symbol: f64) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(DdstError::Format(format!("QPSK needs an even bit count, got {}", bits.len())));
    }
    let amp = energy_per_symbol.sqrt() * FRAC_1_SQRT_2;
    Ok(bits
        .0
        .chunks_exact(2)
        .map(|b| {
            let re = 1.0 - 2.0 * f64::from(b[0]);
            let im = 1.0 - 2.0 * f64::from(b[1]);
            Complex64::new(re * amp, im * amp)
        })
        .collect())
}

/// The DDST operators `J` and `Θ = I - J`, applied block-structurally.
#[derive(Debug, Clone)]
pub struct DdstProjector {
    n: usize,
    p: usize,
    q: usize,
    /// `exp(j 2π t q / Q)` for each block `q`.
    phases: Vec<Complex64>,
}

impl DdstProjector {
    pub fn new(config: &DdstConfig) -> Result<Self> {
        config.validate()?;
        let q = config.q();
        let t = config.t.rem_euclid(q as i64) as f64;
        let phases = (0..q)
            .map(|b| Complex64::from_polar(1.0, 2.0 * PI * t * b as f64 / q as f64))
            .collect();
        Ok(Self { n: config.n, p: config.p, q, phases })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `J s`: per position `p`, the phase-weighted mean of the `Q` blocks,
    /// re-spread over all blocks with the matching phase.
    pub fn apply_j(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.n, s.len())?;
        let mut acc = vec![Complex64::new(0.0, 0.0); self.p];
        for (b, block) in s.chunks_exact(self.p).enumerate() {
            let w = self.phases[b].conj();
            for (a, z) in acc.iter_mut().zip(block) {
                *a += w * z;
            }
        }
        let inv_q = 1.0 / self.q as f64;
        let mut out = Vec::with_capacity(self.n);
        for w in &self.phases {
            out.extend(acc.iter().map(|a| a * w * inv_q));
        }
        Ok(out)
    }

    /// `Θ s = s - J s`.
    pub fn apply(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        let js = self.apply_j(s)?;
        Ok(s.iter().zip(&js).map(|(a, b)| a - b).collect())
    }
}

pub fn apply_projection(s: &[Complex64], proj: &DdstProjector) -> Result<Vec<Complex64>> {
    proj.apply(s)
}

/// True when every pilot bin of `s_tds` is numerically empty relative to the
/// vector's norm. Meaningful for `t = 0` projections.
pub fn pilot_spectrum_is_cleared(dft: &UnitaryDft, s_tds: &[Complex64], config: &DdstConfig) -> Result<bool> {
    let spec = dft.forward(s_tds)?;
    let tol = 1e-9 * dsp::norm_sqr(s_tds).sqrt();
    Ok(config.pilot_bins().all(|m| spec[m].norm() <= tol))
}

/// Draw the known training sequence: a length-`P` base sequence with
/// unit-modulus uniform-random-phase spectrum, tiled `Q` times and scaled so
/// that the mean per-sample power equals `training_power_fraction * total_power`.
///
/// The flat base spectrum makes every pilot bin carry the same energy, so the
/// pilot-bin division in LS estimation is uniformly conditioned.
pub fn build_training_sequence<R: Rng + ?Sized>(
    config: &DdstConfig,
    total_power: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    config.validate()?;
    let spectrum: Vec<Complex64> = (0..config.p)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let base = UnitaryDft::new(config.p).inverse(&spectrum)?;
    let gain = (config.training_power_fraction * total_power / dsp::mean_power(&base)).sqrt();
    Ok((0..config.n).map(|i| base[i % config.p] * gain).collect())
}

/// `x = s_tds + c`.
pub fn superimpose(s_tds: &[Complex64], c: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(s_tds.len(), c.len())?;
    Ok(s_tds.iter().zip(c).map(|(a, b)| a + b).collect())
}
