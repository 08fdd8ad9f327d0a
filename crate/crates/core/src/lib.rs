//! Few-pixel black-box adversarial search.
//!
//! The crate provides the perturbation model (pixel replacement tuples and
//! their flat search encoding), a budgeted black-box scoring wrapper, two
//! derivative-free optimizers (generalized simulated annealing and
//! differential evolution) and a structured-attack mask used to seed them.

pub mod budget;
pub mod de;
pub mod error;
pub mod gsa;
pub mod image;
pub mod objective;
pub mod perturbation;
pub mod scores;
pub mod strmask;
pub mod surrogate;

pub use budget::{BudgetedModel, ModelError, ScoreError, Scorer};
pub use error::{Error, Result};
pub use image::Image;
pub use objective::{
    AttackOutcome, EvalError, Evaluation, FnObjective, Objective, PixelObjective, SearchOutcome,
    StopReason, TracePoint,
};
pub use perturbation::{Bounds, PixelPerturbation, PixelTuple};
pub use scores::{AttackConfig, Goal, ScoreVector};
pub use surrogate::{LossSpec, Surrogate};
