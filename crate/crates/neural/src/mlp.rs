//! Dense multilayer perceptron with an optional parameter-free batch-norm on
//! its input, ReLU hidden layers and a linear output layer.
//!
//! Activations are laid out one sample per row. Weight matrix `k` has shape
//! `layer_sizes[k] x layer_sizes[k + 1]`, so a layer computes `Z = A W + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_width, NeuralError, Result};

/// Running-statistics momentum of the input batch-norm.
pub const BN_MOMENTUM: f64 = 0.99;
/// Variance floor inside the batch-norm square root.
pub const BN_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Input layer tag: no transform.
    None,
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub input_batch_norm: bool,
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, input_batch_norm: bool) -> Result<Self> {
        let arch = Self { layer_sizes, activations, input_batch_norm };
        arch.validate()?;
        Ok(arch)
    }

    /// Channel-estimate refiner: `[2N, 2N, 2N, 2N]`.
    pub fn ce_net(n: usize) -> Self {
        use Activation::*;
        Self { layer_sizes: vec![2 * n; 4], activations: vec![None, Relu, Relu, Linear], input_batch_norm: true }
    }

    /// Detection refiner: `[2N, 2N, 12N, 6N, 2N]`.
    pub fn sd_net(n: usize) -> Self {
        use Activation::*;
        Self {
            layer_sizes: vec![2 * n, 2 * n, 12 * n, 6 * n, 2 * n],
            activations: vec![None, Relu, Relu, Relu, Linear],
            input_batch_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NeuralError::Architecture(m));
        if self.layer_sizes.len() < 2 {
            return bad(format!("need at least two layers, got {}", self.layer_sizes.len()));
        }
        if self.activations.len() != self.layer_sizes.len() {
            return bad(format!(
                "{} activation tags for {} layers",
                self.activations.len(),
                self.layer_sizes.len()
            ));
        }
        if self.layer_sizes.contains(&0) {
            return bad("layer sizes must be positive".into());
        }
        if self.activations[0] != Activation::None {
            return bad("the input layer takes the `none` activation".into());
        }
        if self.activations[1..].contains(&Activation::None) {
            return bad("only the input layer may use the `none` activation".into());
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated architecture")
    }

    /// Number of weight matrices.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in the input batch-norm.
    Train,
    /// Running statistics in the input batch-norm.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub architecture: MlpArchitecture,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub bn_running_mean: Array1<f64>,
    pub bn_running_var: Array1<f64>,
    /// Optimizer steps taken so far.
    pub step: u64,
}

/// Parameter gradients, laid out like the model's tensors.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Gradient with respect to the raw network input, when requested.
    pub input: Option<Array2<f64>>,
}

struct Normalized {
    x_hat: Array2<f64>,
    inv_std: Option<Array1<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, unit running variance.
    pub fn glorot<R: Rng + ?Sized>(architecture: MlpArchitecture, rng: &mut R) -> Result<Self> {
        architecture.validate()?;
        let mut weights = Vec::with_capacity(architecture.depth());
        let mut biases = Vec::with_capacity(architecture.depth());
        for w in architecture.layer_sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-limit..=limit)));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Self::with_parameters(architecture, weights, biases))
    }

    /// All weights and biases zero.
    pub fn zeros(architecture: MlpArchitecture) -> Result<Self> {
        architecture.validate()?;
        let weights = architecture.layer_sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = architecture.layer_sizes[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self::with_parameters(architecture, weights, biases))
    }

    fn with_parameters(architecture: MlpArchitecture, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Self {
        let d = architecture.input_width();
        Self {
            architecture,
            weights,
            biases,
            bn_running_mean: Array1::zeros(d),
            bn_running_var: Array1::ones(d),
            step: 0,
        }
    }

    /// Check tensor shapes against the architecture.
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let arch = &self.architecture;
        if self.weights.len() != arch.depth() || self.biases.len() != arch.depth() {
            return Err(NeuralError::Architecture(format!(
                "{} weight and {} bias tensors for {} layers",
                self.weights.len(),
                self.biases.len(),
                arch.depth()
            )));
        }
        for (k, w) in arch.layer_sizes.windows(2).enumerate() {
            if self.weights[k].dim() != (w[0], w[1]) || self.biases[k].len() != w[1] {
                return Err(NeuralError::Architecture(format!(
                    "layer {k}: expected weight {}x{} and bias {}, found {:?} and {}",
                    w[0],
                    w[1],
                    w[1],
                    self.weights[k].dim(),
                    self.biases[k].len()
                )));
            }
        }
        check_width(arch.input_width(), self.bn_running_mean.len())?;
        check_width(arch.input_width(), self.bn_running_var.len())?;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.bn_running_mean.iter().all(|v| v.is_finite())
            && self.bn_running_var.iter().all(|v| v.is_finite())
    }

    /// `Σ_k ||W_k||_F^2`; biases are not regularized.
    pub fn weight_norm_sqr(&self) -> f64 {
        self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    fn normalize(&self, x: ArrayView2<'_, f64>, mode: Mode) -> Normalized {
        if !self.architecture.input_batch_norm {
            return Normalized { x_hat: x.to_owned(), inv_std: None, batch_mean: None, batch_var: None };
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                let var = x.var_axis(Axis(0), 0.0);
                (mean, var)
            }
            Mode::Infer => (self.bn_running_mean.clone(), self.bn_running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
        let x_hat = (&x - &mean) * &inv_std;
        let (batch_mean, batch_var) = match mode {
            Mode::Train => (Some(mean), Some(var)),
            Mode::Infer => (None, None),
        };
        Normalized { x_hat, inv_std: Some(inv_std), batch_mean, batch_var }
    }

    fn layer(&self, k: usize, a: &Array2<f64>) -> Array2<f64> {
        let mut z = a.dot(&self.weights[k]);
        z += &self.biases[k];
        if self.architecture.activations[k + 1] == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }

    fn check_batch(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        check_width(self.architecture.input_width(), x.ncols())?;
        if x.nrows() == 0 {
            return Err(NeuralError::Dimension { expected: 1, found: 0 });
        }
        Ok(())
    }

    /// Batched forward pass. Pure in both modes: training-mode batch
    /// statistics are not folded into the running averages here.
    pub fn forward(&self, x: ArrayView2<'_, f64>, mode: Mode) -> Result<Array2<f64>> {
        self.check_batch(&x)?;
        let mut a = self.normalize(x, mode).x_hat;
        for k in 0..self.architecture.depth() {
            a = self.layer(k, &a);
        }
        Ok(a)
    }

    /// Inference on a single input vector.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| NeuralError::Format(e.to_string()))?;
        Ok(self.forward(view, Mode::Infer)?.into_raw_vec_and_offset().0)
    }

    /// `(1/B) Σ_b ||f(x_b) - y_b||^2 + α Σ_k ||W_k||_F^2`.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, alpha: f64, mode: Mode) -> Result<f64> {
        let out = self.forward(x, mode)?;
        check_width(out.nrows(), y.nrows())?;
        check_width(out.ncols(), y.ncols())?;
        let data = Zip::from(&out).and(&y).fold(0.0, |acc, o, l| acc + (o - l) * (o - l)) / x.nrows() as f64;
        Ok(data + alpha * self.weight_norm_sqr())
    }

    /// Loss and its exact gradient with respect to every weight and bias.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        alpha: f64,
        mode: Mode,
        with_input_gradient: bool,
    ) -> Result<(f64, Gradients)> {
        self.check_batch(&x)?;
        check_width(x.nrows(), y.nrows())?;
        check_width(self.architecture.output_width(), y.ncols())?;
        let batch = x.nrows() as f64;
        let depth = self.architecture.depth();

        let norm = self.normalize(x, mode);
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(norm.x_hat);
        for k in 0..depth {
            let next = self.layer(k, &acts[k]);
            acts.push(next);
        }

        let mut delta = &acts[depth] - &y;
        let data_loss = delta.iter().map(|v| v * v).sum::<f64>() / batch;
        let loss = data_loss + alpha * self.weight_norm_sqr();
        delta *= 2.0 / batch;

        let mut gw = vec![Array2::zeros((0, 0)); depth];
        let mut gb = vec![Array1::zeros(0); depth];
        for k in (0..depth).rev() {
            if self.architecture.activations[k + 1] == Activation::Relu {
                Zip::from(&mut delta).and(&acts[k + 1]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let mut w_grad = acts[k].t().dot(&delta);
            if alpha != 0.0 {
                w_grad.scaled_add(2.0 * alpha, &self.weights[k]);
            }
            gw[k] = w_grad;
            gb[k] = delta.sum_axis(Axis(0));
            if k > 0 || with_input_gradient {
                delta = delta.dot(&self.weights[k].t());
            }
        }

        let input = if with_input_gradient {
            Some(match (&norm.inv_std, mode) {
                (None, _) => delta,
                (Some(inv_std), Mode::Infer) => delta * inv_std,
                (Some(inv_std), Mode::Train) => {
                    // dx = inv_std/B (B dx̂ - Σ dx̂ - x̂ Σ(dx̂ ⊙ x̂))
                    let x_hat = &acts[0];
                    let sum_d = delta.sum_axis(Axis(0));
                    let sum_dx = (&delta * x_hat).sum_axis(Axis(0));
                    let mut dx = &delta * batch - &sum_d - x_hat * &sum_dx;
                    dx *= &(inv_std / batch);
                    dx
                }
            })
        } else {
            None
        };
        Ok((loss, Gradients { weights: gw, biases: gb, input }))
    }

    /// Fold one training batch's statistics into the running averages.
    pub fn update_running_stats(&mut self, x: ArrayView2<'_, f64>) -> Result<()> {
        self.check_batch(&x)?;
        if !self.architecture.input_batch_norm {
            return Ok(());
        }
        let norm = self.normalize(x, Mode::Train);
        let (mean, var) = (norm.batch_mean.expect("train mode"), norm.batch_var.expect("train mode"));
        Zip::from(&mut self.bn_running_mean).and(&mean).for_each(|r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
        Zip::from(&mut self.bn_running_var).and(&var).for_each(|r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn presets_have_expected_shapes() {
        let ce = MlpArchitecture::ce_net(240);
        assert_eq!(ce.layer_sizes, vec![480; 4]);
        let sd = MlpArchitecture::sd_net(240);
        assert_eq!(sd.layer_sizes, vec![480, 480, 2880, 1440, 480]);
        assert_eq!(sd.parameter_count(), 480 * 480 + 480 + 480 * 2880 + 2880 + 2880 * 1440 + 1440 + 1440 * 480 + 480);
    }

    #[test]
    fn architecture_validation() {
        use Activation::*;
        assert!(MlpArchitecture::new(vec![2], vec![None], false).is_err());
        assert!(MlpArchitecture::new(vec![2, 2], vec![Relu, Linear], false).is_err());
        assert!(MlpArchitecture::new(vec![2, 0], vec![None, Linear], false).is_err());
        assert!(MlpArchitecture::new(vec![2, 2], vec![None, None], false).is_err());
        assert!(MlpArchitecture::new(vec![2, 2], vec![None, Linear], false).is_ok());
    }

    #[test]
    fn hand_evaluated_two_layer_net() {
        use Activation::*;
        let arch = MlpArchitecture::new(vec![2, 2, 2], vec![None, Relu, Linear], false).unwrap();
        let mut m = MlpModel::zeros(arch).unwrap();
        m.weights[0] = array![[1.0, -1.0], [2.0, 1.0]];
        m.biases[0] = array![0.5, -10.0];
        m.weights[1] = array![[1.0, 0.0], [3.0, 2.0]];
        m.biases[1] = array![0.0, 1.0];
        // Hidden z = [1 + 4 + 0.5, -1 + 2 - 10] = [5.5, -9] -> relu [5.5, 0].
        let out = m.predict(&[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![5.5, 1.0]);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = MlpModel::zeros(MlpArchitecture::ce_net(4)).unwrap();
        assert!(matches!(m.predict(&[0.0; 7]), Err(NeuralError::Dimension { expected: 8, found: 7 })));
    }
}
