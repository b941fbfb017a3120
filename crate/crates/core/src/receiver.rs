//! Interchangeable receiver strategies.
//!
//! A receiver variant is a channel estimator followed by a symbol detector.
//! Both halves sit behind object-safe traits so that the model-driven stages
//! defined here and the learned refiners from other crates can be mixed
//! freely and selected by name at runtime.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::Result;
use crate::frame::BitBlock;
use crate::link::Link;
use crate::rx::{demap_qpsk, ChannelEstimate, EqualizedFrame, RxFrontEnd, TapStatistics};

/// Per-frame receiver context: fixed link knowledge plus the current
/// noise assumptions. Learned strategies ignore the second-order fields.
#[derive(Debug, Clone, Copy)]
pub struct RxContext<'a> {
    pub front: &'a RxFrontEnd,
    pub tap_stats: &'a TapStatistics,
    /// Disturbance variance assumed by LMMSE stages (noise plus distortion).
    pub effective_noise_variance: f64,
    /// Data power per symbol, `E_s`.
    pub symbol_energy: f64,
}

/// Owned backing for [`RxContext`] built from a link at one SNR.
#[derive(Debug, Clone)]
pub struct RxSetup {
    front: RxFrontEnd,
    tap_stats: TapStatistics,
    effective_noise_variance: f64,
    symbol_energy: f64,
}

impl RxSetup {
    pub fn for_link(link: &Link, snr_db: Option<f64>) -> Self {
        Self {
            front: link.front_end().clone(),
            tap_stats: link.tap_statistics(),
            effective_noise_variance: link.effective_noise_variance(snr_db),
            symbol_energy: link.ddst().symbol_energy(),
        }
    }

    pub fn context(&self) -> RxContext<'_> {
        RxContext {
            front: &self.front,
            tap_stats: &self.tap_stats,
            effective_noise_variance: self.effective_noise_variance,
            symbol_energy: self.symbol_energy,
        }
    }
}

pub trait ChannelEstimator: Send + Sync {
    /// Registry name, e.g. `LS_CE`.
    fn name(&self) -> &str;

    /// Processing stages this estimator runs, in order.
    fn stages(&self) -> Vec<&'static str>;

    fn estimate(&self, ctx: &RxContext<'_>, received: &[Complex64]) -> Result<ChannelEstimate>;
}

pub trait SymbolDetector: Send + Sync {
    /// Registry name, e.g. `ZF_SD`.
    fn name(&self) -> &str;

    fn stages(&self) -> Vec<&'static str>;

    /// Remove the training component from `received` and recover the data symbols.
    fn detect(&self, ctx: &RxContext<'_>, received: &[Complex64], estimate: &ChannelEstimate) -> Result<EqualizedFrame>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LsEstimator;

impl ChannelEstimator for LsEstimator {
    fn name(&self) -> &str {
        "LS_CE"
    }

    fn stages(&self) -> Vec<&'static str> {
        vec!["ls_estimate"]
    }

    fn estimate(&self, ctx: &RxContext<'_>, received: &[Complex64]) -> Result<ChannelEstimate> {
        ctx.front.ls_estimate(received)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MmseEstimator;

impl ChannelEstimator for MmseEstimator {
    fn name(&self) -> &str {
        "MMSE_CE"
    }

    fn stages(&self) -> Vec<&'static str> {
        vec!["mmse_estimate"]
    }

    fn estimate(&self, ctx: &RxContext<'_>, received: &[Complex64]) -> Result<ChannelEstimate> {
        ctx.front.mmse_estimate(received, ctx.tap_stats, ctx.effective_noise_variance)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZfDetector;

impl SymbolDetector for ZfDetector {
    fn name(&self) -> &str {
        "ZF_SD"
    }

    fn stages(&self) -> Vec<&'static str> {
        vec!["zf_equalize"]
    }

    fn detect(&self, ctx: &RxContext<'_>, received: &[Complex64], estimate: &ChannelEstimate) -> Result<EqualizedFrame> {
        let clean = ctx.front.remove_training(received)?;
        ctx.front.zf_equalize(&clean, estimate)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MmseDetector;

impl SymbolDetector for MmseDetector {
    fn name(&self) -> &str {
        "MMSE_SD"
    }

    fn stages(&self) -> Vec<&'static str> {
        vec!["mmse_equalize"]
    }

    fn detect(&self, ctx: &RxContext<'_>, received: &[Complex64], estimate: &ChannelEstimate) -> Result<EqualizedFrame> {
        let clean = ctx.front.remove_training(received)?;
        ctx.front.mmse_equalize(&clean, estimate, ctx.effective_noise_variance, ctx.symbol_energy)
    }
}

/// Result of running one receiver variant on one frame.
#[derive(Debug, Clone)]
pub struct Detection {
    pub estimate: ChannelEstimate,
    pub equalized: EqualizedFrame,
    pub bits: BitBlock,
    pub stages: Vec<&'static str>,
}

/// An estimator/detector pair, labelled `"<estimator> + <detector>"`.
#[derive(Clone)]
pub struct ReceiverChain {
    pub estimator: Arc<dyn ChannelEstimator>,
    pub detector: Arc<dyn SymbolDetector>,
}

impl std::fmt::Debug for ReceiverChain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl ReceiverChain {
    pub fn new(estimator: Arc<dyn ChannelEstimator>, detector: Arc<dyn SymbolDetector>) -> Self {
        Self { estimator, detector }
    }

    pub fn label(&self) -> String {
        format!("{} + {}", self.estimator.name(), self.detector.name())
    }

    pub fn stages(&self) -> Vec<&'static str> {
        let mut s = self.estimator.stages();
        s.extend(self.detector.stages());
        s
    }

    pub fn process(&self, ctx: &RxContext<'_>, received: &[Complex64]) -> Result<Detection> {
        let estimate = self.estimator.estimate(ctx, received)?;
        let equalized = self.detector.detect(ctx, received, &estimate)?;
        let bits = demap_qpsk(&equalized.time_symbols);
        Ok(Detection { estimate, equalized, bits, stages: self.stages() })
    }
}
