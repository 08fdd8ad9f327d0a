//! Mini-batch SGD on cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparsepix_core::surrogate::LossSpec;

use crate::dataset::LabeledImage;
use crate::error::{ModelsError, Result};
use crate::tiny::{loss_head, TinyClassifier, HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 15, learning_rate: 0.1, batch_size: 32, hidden: HIDDEN, classes: 3, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub final_loss: f64,
}

pub fn accuracy(model: &TinyClassifier, data: &[LabeledImage]) -> Result<f64> {
    if data.is_empty() {
        return Err(ModelsError::EmptyDataset);
    }
    let mut correct = 0usize;
    for item in data {
        if model.predict(&item.image)? == item.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

struct Grads(Vec<(Vec<f64>, Vec<f64>)>);

impl Grads {
    fn zeros(model: &TinyClassifier) -> Self {
        Self(model.layers().iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.rows])).collect())
    }

    fn clear(&mut self) {
        for (w, b) in &mut self.0 {
            w.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Accumulates one sample's cross-entropy gradient; returns its loss.
fn accumulate(model: &TinyClassifier, input: &[f64], label: usize, grads: &mut Grads) -> Result<f64> {
    let pass = model.pass(input)?;
    let (loss, dlogits) = loss_head(pass.pre.last().expect("logits"), LossSpec::CrossEntropy { label })?;
    let deltas = model.backward(&pass, dlogits);
    for (((gw, gb), delta), (layer, act)) in grads
        .0
        .iter_mut()
        .zip(&deltas)
        .zip(model.layers().iter().zip(&pass.activations))
    {
        for (r, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            gb[r] += d;
            for (g, a) in gw[r * layer.cols..(r + 1) * layer.cols].iter_mut().zip(act) {
                *g += d * a;
            }
        }
    }
    Ok(loss)
}

/// Trains a fresh `input -> hidden -> classes` network. Deterministic for a fixed seed.
pub fn train(
    train_set: &[LabeledImage],
    test_set: Option<&[LabeledImage]>,
    cfg: &TrainConfig,
) -> Result<(TinyClassifier, TrainReport)> {
    if train_set.is_empty() {
        return Err(ModelsError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 || cfg.classes == 0 {
        return Err(ModelsError::Dataset("batch size, hidden width and classes must be >= 1".into()));
    }
    if let Some(bad) = train_set.iter().find(|s| s.label >= cfg.classes) {
        return Err(ModelsError::Dataset(format!("label {} >= {} classes", bad.label, cfg.classes)));
    }
    let input_len = train_set[0].image.data().len();
    if let Some(bad) = train_set.iter().find(|s| s.image.data().len() != input_len) {
        return Err(ModelsError::Dimension { expected: input_len, got: bad.image.data().len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TinyClassifier::random(input_len, cfg.hidden, cfg.classes, &mut rng);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = Grads::zeros(&model);
    let mut final_loss = f64::NAN;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                epoch_loss += accumulate(&model, &train_set[i].image.to_unit(), train_set[i].label, &mut grads)?;
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (layer, (gw, gb)) in model.layers_mut().iter_mut().zip(&grads.0) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w = (f64::from(*w) - scale * g) as f32;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b = (f64::from(*b) - scale * g) as f32;
                }
            }
        }
        final_loss = epoch_loss / train_set.len() as f64;
        log::debug!("epoch loss {final_loss:.4}");
    }

    let report = TrainReport {
        train_accuracy: accuracy(&model, train_set)?,
        test_accuracy: test_set.map(|t| accuracy(&model, t)).transpose()?,
        final_loss,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_shapes;

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(train(&[], None, &TrainConfig::default()), Err(ModelsError::EmptyDataset)));
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let data = generate_shapes(12, 3);
        let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, hidden: 8, ..TrainConfig::default() };
        let (trained, _) = train(&data, None, &cfg).unwrap();
        let untouched = { let cfg = TrainConfig { epochs: 0, ..cfg }; train(&data, None, &cfg).unwrap().0 };
        assert_eq!(trained, untouched);
    }

    #[test]
    fn same_seed_same_weights() {
        let data = generate_shapes(30, 1);
        let cfg = TrainConfig { epochs: 2, hidden: 8, ..TrainConfig::default() };
        assert_eq!(train(&data, None, &cfg).unwrap().0, train(&data, None, &cfg).unwrap().0);
        let other = TrainConfig { seed: 1, ..cfg };
        assert_ne!(train(&data, None, &cfg).unwrap().0, train(&data, None, &other).unwrap().0);
    }
}
