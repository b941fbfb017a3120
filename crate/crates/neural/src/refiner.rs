//! The learned refiners as receiver strategies.

use std::sync::Arc;

use ddst_core::dsp::{reshape_complex_to_real, reshape_real_to_complex};
use ddst_core::receiver::{ChannelEstimator, RxContext, SymbolDetector};
use ddst_core::rx::{ChannelEstimate, EqualizedFrame, EqualizerMethod, EstimateMethod};
use ddst_core::{Complex64, DdstError};

use crate::error::NeuralError;
use crate::mlp::MlpModel;

impl From<NeuralError> for DdstError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Link(inner) => inner,
            NeuralError::Dimension { expected, found } => DdstError::Dimension { expected, found },
            other => DdstError::Model(other.to_string()),
        }
    }
}

fn refine(model: &MlpModel, v: &[Complex64]) -> ddst_core::Result<Vec<Complex64>> {
    let out = model.predict(&reshape_complex_to_real(v)).map_err(DdstError::from)?;
    reshape_real_to_complex(&out)
}

/// LS estimate followed by the channel refiner.
#[derive(Debug, Clone)]
pub struct CeNetEstimator {
    model: Arc<MlpModel>,
}

impl CeNetEstimator {
    pub fn new(model: Arc<MlpModel>) -> Self {
        Self { model }
    }
}

impl ChannelEstimator for CeNetEstimator {
    fn name(&self) -> &str {
        "CE_Net"
    }

    fn stages(&self) -> Vec<&'static str> {
        vec!["ls_estimate", "ce_net"]
    }

    fn estimate(&self, ctx: &RxContext<'_>, received: &[Complex64]) -> ddst_core::Result<ChannelEstimate> {
        let ls = ctx.front.ls_estimate(received)?;
        let freq_full = refine(&self.model, &ls.freq_full)?;
        Ok(ChannelEstimate { time_taps: ctx.front.freq_to_taps(&freq_full)?, freq_full, method: EstimateMethod::CeNet })
    }
}

/// ZF equalization followed by the detection refiner.
#[derive(Debug, Clone)]
pub struct SdNetDetector {
    model: Arc<MlpModel>,
}

impl SdNetDetector {
    pub fn new(model: Arc<MlpModel>) -> Self {
        Self { model }
    }
}

impl SymbolDetector for SdNetDetector {
    fn name(&self) -> &str {
        "SD_Net"
    }

    fn stages(&self) -> Vec<&'static str> {
        vec!["zf_equalize", "sd_net"]
    }

    fn detect(&self, ctx: &RxContext<'_>, received: &[Complex64], estimate: &ChannelEstimate) -> ddst_core::Result<EqualizedFrame> {
        let clean = ctx.front.remove_training(received)?;
        let zf = ctx.front.zf_equalize(&clean, estimate)?;
        Ok(EqualizedFrame {
            time_symbols: refine(&self.model, &zf.time_symbols)?,
            method: EqualizerMethod::SdNet,
            clipped_bins: zf.clipped_bins,
        })
    }
}
