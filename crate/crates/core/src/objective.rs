//! The search objective seen by the optimizers, and its pixel-attack instance.
//!
//! Optimizers minimize. The pixel-attack objective reports the negated
//! adversarial loss, and flags success so the search can stop at the first
//! misclassification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{BudgetedModel, ModelError, ScoreError, Scorer};
use crate::error::Error;
use crate::image::Image;
use crate::perturbation::PixelPerturbation;
use crate::scores::AttackConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub success: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl From<ScoreError> for EvalError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::BudgetExhausted { .. } => EvalError::BudgetExhausted,
            ScoreError::Model(m) => EvalError::Model(m),
        }
    }
}

/// A budgeted function on flat vectors.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, EvalError>;

    /// Total evaluation budget, including any call-equivalents already charged.
    fn budget(&self) -> u64;
}

impl<O: Objective + ?Sized> Objective for &mut O {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, EvalError> {
        (**self).evaluate(x)
    }

    fn budget(&self) -> u64 {
        (**self).budget()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Success,
    BudgetExhausted,
    GenerationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub call: u64,
    pub value: f64,
}

/// Result of one optimizer run. `calls` counts the evaluations the optimizer
/// performed; the trace records each strict improvement of the best value.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub success: bool,
    pub stop: StopReason,
    pub best: Vec<f64>,
    pub best_value: f64,
    pub calls: u64,
    pub trace: Vec<TracePoint>,
}

/// Bookkeeping shared by the optimizers: counts evaluations, tracks the
/// incumbent and converts budget exhaustion into a terminal state.
pub(crate) struct Tracker<O> {
    objective: O,
    pub calls: u64,
    pub best: Vec<f64>,
    pub best_value: f64,
    pub trace: Vec<TracePoint>,
}

pub(crate) enum Step {
    Value(f64),
    Stop(SearchOutcome),
}

impl<O: Objective> Tracker<O> {
    pub fn new(objective: O) -> Self {
        Self {
            objective,
            calls: 0,
            best: Vec::new(),
            best_value: f64::INFINITY,
            trace: Vec::new(),
        }
    }

    pub fn budget(&self) -> u64 {
        self.objective.budget()
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<Step, EvalError> {
        match self.objective.evaluate(x) {
            Ok(e) => {
                self.calls += 1;
                if e.value < self.best_value || self.best.is_empty() {
                    if e.value < self.best_value {
                        self.trace.push(TracePoint { call: self.calls, value: e.value });
                    }
                    self.best_value = e.value;
                    self.best = x.to_vec();
                }
                if e.success {
                    self.best_value = e.value;
                    self.best = x.to_vec();
                    return Ok(Step::Stop(self.finish(true, StopReason::Success)));
                }
                Ok(Step::Value(e.value))
            }
            Err(EvalError::BudgetExhausted) => {
                Ok(Step::Stop(self.finish(false, StopReason::BudgetExhausted)))
            }
            Err(e) => Err(e),
        }
    }

    pub fn finish(&mut self, success: bool, stop: StopReason) -> SearchOutcome {
        SearchOutcome {
            success,
            stop,
            best: std::mem::take(&mut self.best),
            best_value: self.best_value,
            calls: self.calls,
            trace: std::mem::take(&mut self.trace),
        }
    }
}

/// Plain function wrapped with a hard evaluation budget. Never succeeds.
pub struct FnObjective<F> {
    f: F,
    calls: u64,
    budget: u64,
}

impl<F: FnMut(&[f64]) -> f64> FnObjective<F> {
    pub fn new(f: F, budget: u64) -> Self {
        Self { f, calls: 0, budget }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl<F: FnMut(&[f64]) -> f64> Objective for FnObjective<F> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, EvalError> {
        if self.calls >= self.budget {
            return Err(EvalError::BudgetExhausted);
        }
        self.calls += 1;
        Ok(Evaluation { value: (self.f)(x), success: false })
    }

    fn budget(&self) -> u64 {
        self.budget
    }
}

/// Final result of attacking one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub success: bool,
    /// Budget consumed, including call-equivalents charged before the search.
    pub calls: u64,
    pub adversarial: Image,
    pub perturbation: PixelPerturbation,
    /// Label predicted for `adversarial`; `None` if nothing was scored.
    pub predicted_label: Option<usize>,
    /// `(budget call index, adversarial loss)` at each improvement.
    pub loss_trace: Vec<TracePoint>,
}

struct Incumbent {
    vector: Vec<f64>,
    value: f64,
    label: usize,
}

/// Decodes flat vectors into perturbations of one image and scores them
/// through a budgeted black box.
pub struct PixelObjective<'a, S> {
    image: &'a Image,
    cfg: &'a AttackConfig,
    model: BudgetedModel<S>,
    incumbent: Option<Incumbent>,
    trace: Vec<TracePoint>,
}

impl<'a, S: Scorer> PixelObjective<'a, S> {
    pub fn new(image: &'a Image, cfg: &'a AttackConfig, model: BudgetedModel<S>) -> Self {
        Self { image, cfg, model, incumbent: None, trace: Vec::new() }
    }

    pub fn model(&self) -> &BudgetedModel<S> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut BudgetedModel<S> {
        &mut self.model
    }

    pub fn decode(&self, x: &[f64]) -> Result<PixelPerturbation, Error> {
        PixelPerturbation::decode(x, self.image.width(), self.image.height(), self.cfg.pixels)
    }

    /// Builds the outcome from the incumbent this objective observed.
    pub fn into_outcome(self, search: &SearchOutcome) -> Result<AttackOutcome, Error> {
        let calls = self.model.calls_used();
        let (perturbation, predicted_label) = match &self.incumbent {
            Some(inc) => (self.decode(&inc.vector)?, Some(inc.label)),
            None => (PixelPerturbation::empty(self.cfg.pixels)?, None),
        };
        Ok(AttackOutcome {
            success: search.success,
            calls,
            adversarial: perturbation.apply(self.image)?,
            perturbation,
            predicted_label,
            loss_trace: self.trace,
        })
    }
}

impl<S: Scorer> Objective for PixelObjective<'_, S> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, EvalError> {
        let candidate = self.decode(x)?.apply(self.image)?;
        let scores = self.model.score(&candidate)?;
        let loss = self.cfg.adversarial_loss(&scores)?;
        let success = self.cfg.is_success(&scores)?;
        let value = -loss;
        let improved = self.incumbent.as_ref().is_none_or(|inc| value < inc.value);
        if improved {
            self.trace.push(TracePoint { call: self.model.calls_used(), value: loss });
        }
        if improved || success {
            self.incumbent = Some(Incumbent { vector: x.to_vec(), value, label: scores.argmax() });
        }
        Ok(Evaluation { value, success })
    }

    fn budget(&self) -> u64 {
        self.model.budget()
    }
}
