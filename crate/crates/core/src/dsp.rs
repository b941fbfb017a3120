//! Complex-vector arithmetic and the unitary DFT.
//!
//! All transforms here use the unitary normalization: both directions carry a
//! `1/sqrt(N)` factor, so the forward transform preserves the Euclidean norm
//! and the inverse is its conjugate transpose.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary DFT of a fixed size, `F_N` and its conjugate transpose.
///
/// Backed by a mixed-radix FFT plan, so composite sizes such as 240 run in
/// `O(N log N)`. The plan is immutable and shareable across threads.
#[derive(Clone)]
pub struct UnitaryDft {
    size: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitaryDft").field("size", &self.size).finish()
    }
}

impl UnitaryDft {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "DFT size must be positive");
        let mut planner = FftPlanner::new();
        Self {
            size,
            scale: 1.0 / (size as f64).sqrt(),
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn transform(&self, v: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
        let mut out = v.to_vec();
        self.transform_in_place(&mut out, direction)?;
        Ok(out)
    }

    pub fn transform_in_place(&self, v: &mut [Complex64], direction: Direction) -> Result<()> {
        check_len(self.size, v.len())?;
        match direction {
            Direction::Forward => self.forward.process(v),
            Direction::Inverse => self.inverse.process(v),
        }
        for z in v.iter_mut() {
            *z *= self.scale;
        }
        Ok(())
    }

    pub fn forward(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.transform(v, Direction::Forward)
    }

    pub fn inverse(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.transform(v, Direction::Inverse)
    }
}

/// One-shot unitary DFT. Plans a transform on every call; hold a
/// [`UnitaryDft`] when transforming many vectors of the same size.
pub fn dft(v: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
    UnitaryDft::new(v.len().max(1)).transform(v, direction)
}

/// `H_c x` for the circulant matrix whose first column is `h`, computed as
/// `sqrt(N) * IDFT(DFT(h) .* DFT(x))` under the unitary transform.
pub fn circular_convolve(dft: &UnitaryDft, h: &[Complex64], x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(dft.size(), x.len())?;
    check_len(x.len(), h.len())?;
    let hf = dft.forward(h)?;
    let mut xf = dft.forward(x)?;
    let gain = (x.len() as f64).sqrt();
    for (a, b) in xf.iter_mut().zip(&hf) {
        *a *= b * gain;
    }
    dft.transform_in_place(&mut xf, Direction::Inverse)?;
    Ok(xf)
}

/// Direct `O(N L)` circular convolution. Only the leading nonzero taps of
/// `h` contribute work, which makes this the cheaper route for short channels.
pub fn circular_convolve_direct(h: &[Complex64], x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(x.len(), h.len())?;
    let n = x.len();
    let support = h.iter().rposition(|z| *z != Complex64::new(0.0, 0.0)).map_or(0, |i| i + 1);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (k, out) in y.iter_mut().enumerate() {
        for (l, tap) in h[..support].iter().enumerate() {
            *out += tap * x[(k + n - l) % n];
        }
    }
    Ok(y)
}

/// Stack `[Re(v); Im(v)]` into a real vector of length `2 * v.len()`.
pub fn reshape_complex_to_real(v: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.len());
    out.extend(v.iter().map(|z| z.re));
    out.extend(v.iter().map(|z| z.im));
    out
}

/// Inverse of [`reshape_complex_to_real`]: real parts from the first half,
/// imaginary parts from the second half.
pub fn reshape_real_to_complex(v: &[f64]) -> Result<Vec<Complex64>> {
    if v.len() % 2 != 0 {
        return Err(crate::DdstError::Format(format!(
            "real-stacked vector must have even length, got {}",
            v.len()
        )));
    }
    let (re, im) = v.split_at(v.len() / 2);
    Ok(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
}

/// Zero-pad (or reject) `taps` to length `n`.
pub fn zero_pad(taps: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if taps.len() > n {
        return Err(crate::DdstError::Dimension { expected: n, found: taps.len() });
    }
    let mut out = taps.to_vec();
    out.resize(n, Complex64::new(0.0, 0.0));
    Ok(out)
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn mean_power(v: &[Complex64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        norm_sqr(v) / v.len() as f64
    }
}
