//! Fully connected ReLU network with a softmax head.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use sparsepix_core::surrogate::{LossSpec, Surrogate};
use sparsepix_core::{Image, ModelError, ScoreVector, Scorer};

use crate::contrast;
use crate::error::{ModelsError, Result};

pub const INPUT_SIDE: usize = 32;
pub const INPUT_LEN: usize = INPUT_SIDE * INPUT_SIDE * 3;
pub const HIDDEN: usize = 64;

/// `y = W x + b` with `W` stored row-major as `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    /// He-normal weights, zero bias.
    pub fn he<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("finite std");
        let weights = (0..rows * cols).map(|_| normal.sample(rng) as f32).collect();
        Self { rows, cols, weights, bias: vec![0.0; rows] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| f64::from(*w) * v).sum::<f64>() + f64::from(*b)
        }));
    }

    /// `W^T g`.
    fn back(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, gi) in self.weights.chunks_exact(self.cols).zip(g) {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += f64::from(*w) * gi;
            }
        }
        out
    }
}

/// Feed-forward classifier: a fixed contrast stage (see [`crate::contrast`]),
/// then dense layers with ReLU between them and softmax on the last. Inputs
/// are image intensities divided by 255.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyClassifier {
    layers: Vec<Dense>,
}

/// Activations kept for backpropagation.
pub(crate) struct Pass {
    /// Border-ring means used by the contrast stage.
    pub means: [f64; 3],
    /// Contrast map followed by each hidden layer's post-ReLU output.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last entry holds the logits.
    pub pre: Vec<Vec<f64>>,
}

impl TinyClassifier {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(ModelsError::Format("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 {
                return Err(ModelsError::Format(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(ModelsError::Format(format!("layer {i} has inconsistent sizes")));
            }
            if i > 0 && layers[i - 1].rows != l.cols {
                return Err(ModelsError::Format(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.cols,
                    i - 1,
                    layers[i - 1].rows
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `input -> hidden (ReLU) -> classes` with He initialization.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self { layers: vec![Dense::he(hidden, input, rng), Dense::he(classes, hidden, rng)] }
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self { layers: vec![Dense::zeros(hidden, input), Dense::zeros(classes, hidden)] }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].cols
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map(|l| l.rows).unwrap_or(0)
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.input_len() {
            return Err(ModelsError::Dimension { expected: self.input_len(), got });
        }
        Ok(())
    }

    pub(crate) fn pass(&self, input: &[f64]) -> Result<Pass> {
        let (features, means) = contrast::forward(input)?;
        let mut activations = vec![features];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.rows);
            layer.apply(activations.last().expect("input present"), &mut z);
            if i + 1 < self.layers.len() {
                activations.push(z.iter().map(|v| v.max(0.0)).collect());
            }
            pre.push(z);
        }
        Ok(Pass { means, activations, pre })
    }

    pub fn logits_unit(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_len(input.len())?;
        Ok(self.pass(input)?.pre.pop().expect("at least one layer"))
    }

    pub fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        self.logits_unit(&image.to_unit())
    }

    pub fn forward(&self, image: &Image) -> Result<ScoreVector> {
        Ok(ScoreVector::softmax(&self.logits(image)?)?)
    }

    pub fn predict(&self, image: &Image) -> Result<usize> {
        Ok(self.forward(image)?.argmax())
    }

    /// Gradient of the loss with respect to the pre-activations of each layer.
    pub(crate) fn backward(&self, pass: &Pass, dlogits: Vec<f64>) -> Vec<Vec<f64>> {
        let mut deltas = vec![dlogits];
        for i in (1..self.layers.len()).rev() {
            let g = self.layers[i].back(deltas.last().expect("nonempty"));
            let masked = g
                .into_iter()
                .zip(&pass.pre[i - 1])
                .map(|(g, z)| if *z > 0.0 { g } else { 0.0 })
                .collect();
            deltas.push(masked);
        }
        deltas.reverse();
        deltas
    }

    /// Loss value and its gradient with respect to the unit-scaled input.
    pub fn loss_gradient_unit(&self, input: &[f64], loss: LossSpec) -> Result<(f64, Vec<f64>)> {
        self.check_len(input.len())?;
        let pass = self.pass(input)?;
        let (value, dlogits) = loss_head(pass.pre.last().expect("logits"), loss)?;
        let deltas = self.backward(&pass, dlogits);
        let grad = contrast::backward(input, &pass.means, &self.layers[0].back(&deltas[0]))?;
        Ok((value, grad))
    }

    /// `∂loss/∂input` in unit intensity scale.
    pub fn input_gradient(&self, image: &Image, loss: LossSpec) -> Result<Vec<f64>> {
        Ok(self.loss_gradient_unit(&image.to_unit(), loss)?.1)
    }
}

/// Loss on logits and its gradient with respect to them.
pub fn loss_head(logits: &[f64], loss: LossSpec) -> Result<(f64, Vec<f64>)> {
    let classes = logits.len();
    let label = match loss {
        LossSpec::Margin { label, .. } | LossSpec::CrossEntropy { label } => label,
    };
    if label >= classes {
        return Err(sparsepix_core::Error::LabelOutOfRange { label, classes }.into());
    }
    let mut grad = vec![0.0; classes];
    match loss {
        LossSpec::CrossEntropy { .. } => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (g, e) in grad.iter_mut().zip(&exps) {
                *g = e / total;
            }
            grad[label] -= 1.0;
            Ok((total.ln() + max - logits[label], grad))
        }
        LossSpec::Margin { kappa, .. } => {
            let Some(rival) = (0..classes)
                .filter(|&j| j != label)
                .reduce(|a, b| if logits[b] > logits[a] { b } else { a })
            else {
                return Ok((-kappa, grad));
            };
            let margin = logits[label] - logits[rival];
            if margin > -kappa {
                grad[label] = 1.0;
                grad[rival] = -1.0;
                Ok((margin, grad))
            } else {
                Ok((-kappa, grad))
            }
        }
    }
}

impl Scorer for TinyClassifier {
    fn score(&self, image: &Image) -> std::result::Result<ScoreVector, ModelError> {
        self.forward(image).map_err(|e| ModelError::Input(e.to_string()))
    }
}

impl Surrogate for TinyClassifier {
    fn input_len(&self) -> usize {
        TinyClassifier::input_len(self)
    }

    fn loss_and_gradient(
        &self,
        input: &[f64],
        loss: LossSpec,
    ) -> sparsepix_core::Result<(f64, Vec<f64>)> {
        self.loss_gradient_unit(input, loss).map_err(|e| match e {
            ModelsError::Core(c) => c,
            other => sparsepix_core::Error::InvalidParameter(other.to_string()),
        })
    }
}
