use crate::error::Result;

/// Loss whose input-gradient a surrogate can supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    /// `max(Z_label - max_{j != label} Z_j, -kappa)` on logits. Lowering it
    /// pushes the prediction away from `label`.
    Margin { label: usize, kappa: f64 },
    /// `-ln p_label`.
    CrossEntropy { label: usize },
}

/// A classifier with white-box access to input gradients.
///
/// Inputs are intensities divided by 255, laid out like [`crate::Image`] data.
pub trait Surrogate {
    fn input_len(&self) -> usize;

    fn loss_and_gradient(&self, input: &[f64], loss: LossSpec) -> Result<(f64, Vec<f64>)>;
}

impl<S: Surrogate + ?Sized> Surrogate for &S {
    fn input_len(&self) -> usize {
        (**self).input_len()
    }

    fn loss_and_gradient(&self, input: &[f64], loss: LossSpec) -> Result<(f64, Vec<f64>)> {
        (**self).loss_and_gradient(input, loss)
    }
}
