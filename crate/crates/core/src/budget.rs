//! Black-box scoring with exact call accounting.

use thiserror::Error;

use crate::image::Image;
use crate::scores::ScoreVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("input rejected: {0}")]
    Input(String),
}

/// A probability-scoring black box.
///
/// Implementations must tolerate concurrent `score` calls; campaigns attack
/// several images in parallel against one shared scorer.
pub trait Scorer: Send + Sync {
    fn score(&self, image: &Image) -> Result<ScoreVector, ModelError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, image: &Image) -> Result<ScoreVector, ModelError> {
        (**self).score(image)
    }
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn score(&self, image: &Image) -> Result<ScoreVector, ModelError> {
        (**self).score(image)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&self, image: &Image) -> Result<ScoreVector, ModelError> {
        (**self).score(image)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("call budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Wraps a scorer with a call counter and a hard budget.
///
/// One instance belongs to one attack run. Transport and protocol failures
/// from the inner scorer do not consume budget.
pub struct BudgetedModel<S> {
    inner: S,
    calls_used: u64,
    budget: u64,
}

impl<S: Scorer> BudgetedModel<S> {
    pub fn new(inner: S, budget: u64) -> Self {
        Self { inner, calls_used: 0, budget }
    }

    pub fn calls_used(&self) -> u64 {
        self.calls_used
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.calls_used
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn score(&mut self, image: &Image) -> Result<ScoreVector, ScoreError> {
        if self.calls_used >= self.budget {
            return Err(ScoreError::BudgetExhausted { budget: self.budget });
        }
        let scores = self.inner.score(image)?;
        self.calls_used += 1;
        Ok(scores)
    }

    /// Charges `calls` call-equivalents without scoring, saturating at the budget.
    /// Returns the amount actually charged.
    pub fn debit(&mut self, calls: u64) -> u64 {
        let charged = calls.min(self.remaining());
        self.calls_used += charged;
        charged
    }
}
