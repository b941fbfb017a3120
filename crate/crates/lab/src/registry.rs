//! Name-keyed registry of receiver strategies.
//!
//! Estimators and detectors are registered separately; a variant name joins
//! one of each as `"<estimator> + <detector>"`, e.g. `"MMSE_CE + MMSE_SD"`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ddst_core::receiver::{
    ChannelEstimator, LsEstimator, MmseDetector, MmseEstimator, ReceiverChain, SymbolDetector, ZfDetector,
};
use ddst_neural::{CeNetEstimator, MlpModel, SdNetDetector};

use crate::error::{LabError, Result};

/// Trained networks available to factories.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub ce_net: Option<Arc<MlpModel>>,
    pub sd_net: Option<Arc<MlpModel>>,
}

/// Which trained networks a variant needs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Needs {
    pub ce_net: bool,
    pub sd_net: bool,
}

impl Needs {
    pub fn any(self) -> bool {
        self.ce_net || self.sd_net
    }

    pub fn union(self, other: Self) -> Self {
        Self { ce_net: self.ce_net || other.ce_net, sd_net: self.sd_net || other.sd_net }
    }
}

type EstimatorFactory = Box<dyn Fn(&Models) -> Result<Arc<dyn ChannelEstimator>> + Send + Sync>;
type DetectorFactory = Box<dyn Fn(&Models) -> Result<Arc<dyn SymbolDetector>> + Send + Sync>;

struct Entry<F> {
    factory: F,
    needs: Needs,
}

pub struct Registry {
    estimators: BTreeMap<String, Entry<EstimatorFactory>>,
    detectors: BTreeMap<String, Entry<DetectorFactory>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("estimators", &self.estimators.keys().collect::<Vec<_>>())
            .field("detectors", &self.detectors.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn missing(net: &str, command: &str) -> LabError {
    LabError::MissingDependency(format!("no trained {net} checkpoint is loaded; run `ddst {command}` first"))
}

impl Registry {
    pub fn empty() -> Self {
        Self { estimators: BTreeMap::new(), detectors: BTreeMap::new() }
    }

    /// The classic strategies plus the two learned refiners.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_estimator("LS_CE", Needs::default(), |_| Ok(Arc::new(LsEstimator)));
        r.register_estimator("MMSE_CE", Needs::default(), |_| Ok(Arc::new(MmseEstimator)));
        r.register_estimator("CE_Net", Needs { ce_net: true, sd_net: false }, |m| {
            let model = m.ce_net.clone().ok_or_else(|| missing("CE-Net", "train --net ce"))?;
            Ok(Arc::new(CeNetEstimator::new(model)))
        });
        r.register_detector("ZF_SD", Needs::default(), |_| Ok(Arc::new(ZfDetector)));
        r.register_detector("MMSE_SD", Needs::default(), |_| Ok(Arc::new(MmseDetector)));
        r.register_detector("SD_Net", Needs { ce_net: false, sd_net: true }, |m| {
            let model = m.sd_net.clone().ok_or_else(|| missing("SD-Net", "train --net sd"))?;
            Ok(Arc::new(SdNetDetector::new(model)))
        });
        r
    }

    pub fn register_estimator<F>(&mut self, name: &str, needs: Needs, factory: F)
    where
        F: Fn(&Models) -> Result<Arc<dyn ChannelEstimator>> + Send + Sync + 'static,
    {
        self.estimators.insert(name.to_owned(), Entry { factory: Box::new(factory), needs });
    }

    pub fn register_detector<F>(&mut self, name: &str, needs: Needs, factory: F)
    where
        F: Fn(&Models) -> Result<Arc<dyn SymbolDetector>> + Send + Sync + 'static,
    {
        self.detectors.insert(name.to_owned(), Entry { factory: Box::new(factory), needs });
    }

    pub fn estimator_names(&self) -> impl Iterator<Item = &str> {
        self.estimators.keys().map(String::as_str)
    }

    pub fn detector_names(&self) -> impl Iterator<Item = &str> {
        self.detectors.keys().map(String::as_str)
    }

    /// Split and validate a variant name.
    pub fn parse_variant<'a>(&self, variant: &'a str) -> Result<(&'a str, &'a str)> {
        let (est, det) = variant
            .split_once('+')
            .map(|(a, b)| (a.trim(), b.trim()))
            .ok_or_else(|| LabError::Config(format!("variant `{variant}` is not of the form `<estimator> + <detector>`")))?;
        if !self.estimators.contains_key(est) {
            let known: Vec<_> = self.estimator_names().collect();
            return Err(LabError::Config(format!("unknown channel estimator `{est}` (known: {})", known.join(", "))));
        }
        if !self.detectors.contains_key(det) {
            let known: Vec<_> = self.detector_names().collect();
            return Err(LabError::Config(format!("unknown symbol detector `{det}` (known: {})", known.join(", "))));
        }
        Ok((est, det))
    }

    pub fn needs(&self, variant: &str) -> Result<Needs> {
        let (est, det) = self.parse_variant(variant)?;
        Ok(self.estimators[est].needs.union(self.detectors[det].needs))
    }

    pub fn build(&self, variant: &str, models: &Models) -> Result<ReceiverChain> {
        let (est, det) = self.parse_variant(variant)?;
        let estimator = (self.estimators[est].factory)(models)?;
        let detector = (self.detectors[det].factory)(models)?;
        Ok(ReceiverChain::new(estimator, detector))
    }
}
