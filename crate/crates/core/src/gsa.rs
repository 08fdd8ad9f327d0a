//! Generalized simulated annealing with Tsallis visiting and acceptance
//! distributions.
//!
//! Each iteration perturbs every coordinate with a heavy-tailed step whose
//! scale shrinks with the temperature schedule, wraps the candidate back into
//! the search box and accepts it with the generalized (or classic Metropolis)
//! rule. When the temperature falls below `restart_ratio * T1` the schedule
//! restarts from the best point found so far. There is no local-search phase.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{EvalError, Objective, SearchOutcome, Step, Tracker};
use crate::perturbation::Bounds;

/// Steps beyond this magnitude are redrawn uniformly inside `[0, TAIL_LIMIT)`.
const TAIL_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcceptanceMode {
    /// `exp(-ΔE / T)` for uphill moves.
    Simple,
    /// Tsallis acceptance `[1 - (1 - q_a) ΔE / T]^(1 / (1 - q_a))`.
    Generalized,
}

/// Which temperature the acceptance rule sees at iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcceptanceTemperature {
    /// `T(t) / t`.
    Decayed,
    /// `T(t)` itself.
    Visiting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsaParams {
    /// Visiting parameter `q_v`, in (1, 3).
    pub visiting: f64,
    /// Acceptance parameter `q_a`.
    pub acceptance: f64,
    /// Initial temperature `T(1)`.
    pub initial_temperature: f64,
    pub restart_ratio: f64,
    pub acceptance_mode: AcceptanceMode,
    pub acceptance_temperature: AcceptanceTemperature,
}

impl Default for GsaParams {
    fn default() -> Self {
        Self {
            visiting: 2.62,
            acceptance: -5.0,
            initial_temperature: 5230.0,
            restart_ratio: 2e-6,
            acceptance_mode: AcceptanceMode::Generalized,
            acceptance_temperature: AcceptanceTemperature::Decayed,
        }
    }
}

impl GsaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.visiting > 1.0 && self.visiting < 3.0) {
            return Err(Error::InvalidParameter(format!("q_v = {} not in (1, 3)", self.visiting)));
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "initial temperature {} must be positive",
                self.initial_temperature
            )));
        }
        if !(self.restart_ratio > 0.0 && self.restart_ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "restart ratio {} not in (0, 1)",
                self.restart_ratio
            )));
        }
        if !self.acceptance.is_finite() || self.acceptance == 1.0 {
            return Err(Error::InvalidParameter(format!("q_a = {} is not usable", self.acceptance)));
        }
        Ok(())
    }
}

/// `T(t) = T(1) (2^(q_v-1) - 1) / ((1+t)^(q_v-1) - 1)` for `t >= 1`.
pub fn temperature(t: u64, params: &GsaParams) -> Result<f64> {
    if t < 1 {
        return Err(Error::InvalidParameter("iteration must be >= 1".into()));
    }
    let e = params.visiting - 1.0;
    let num = (e * 2f64.ln()).exp_m1();
    let den = (e * ((1 + t) as f64).ln()).exp_m1();
    Ok(params.initial_temperature * (num / den))
}

pub fn acceptance_probability(
    delta_e: f64,
    t_accept: f64,
    params: &GsaParams,
    mode: AcceptanceMode,
) -> Result<f64> {
    if !delta_e.is_finite() {
        return Err(Error::NonFinite(format!("energy difference {delta_e}")));
    }
    if !(t_accept > 0.0) {
        return Err(Error::InvalidParameter(format!("acceptance temperature {t_accept}")));
    }
    if delta_e <= 0.0 {
        return Ok(1.0);
    }
    let p = match mode {
        AcceptanceMode::Simple => (-delta_e / t_accept).exp(),
        AcceptanceMode::Generalized => {
            let one_minus_q = 1.0 - params.acceptance;
            let base = 1.0 - one_minus_q * delta_e / t_accept;
            if base <= 0.0 {
                0.0
            } else {
                (base.ln() / one_minus_q).exp()
            }
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Source of the Gaussian and uniform draws used by the visiting step.
pub trait Noise {
    fn gaussian(&mut self) -> f64;
    /// Uniform on `[0, 1)`.
    fn uniform(&mut self) -> f64;
}

impl<R: Rng + ?Sized> Noise for R {
    fn gaussian(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    fn uniform(&mut self) -> f64 {
        self.random()
    }
}

/// Tsallis-Stariolo visiting distribution for a fixed `q_v`.
///
/// A step is `sigma(T) * g1 / |g2|^((q_v - 1) / (3 - q_v))` for standard
/// Gaussians `g1`, `g2`, with the width `sigma(T)` built from the
/// temperature and Γ-function factors of `q_v`.
#[derive(Debug, Clone, Copy)]
pub struct VisitingDistribution {
    q: f64,
    factor4_p: f64,
    factor6: f64,
}

impl VisitingDistribution {
    pub fn new(q_v: f64) -> Result<Self> {
        if !(q_v > 1.0 && q_v < 3.0) {
            return Err(Error::InvalidParameter(format!("q_v = {q_v} not in (1, 3)")));
        }
        let pi = std::f64::consts::PI;
        let factor2 = ((4.0 - q_v) * (q_v - 1.0).ln()).exp();
        let factor3 = ((2.0 - q_v) * std::f64::consts::LN_2 / (q_v - 1.0)).exp();
        let factor4_p = pi.sqrt() * factor2 / (factor3 * (3.0 - q_v));
        let factor5 = 1.0 / (q_v - 1.0) - 0.5;
        let d1 = 2.0 - factor5;
        let factor6 =
            pi * (1.0 - factor5) / (pi * (1.0 - factor5)).sin() / libm::lgamma(d1).exp();
        Ok(Self { q: q_v, factor4_p, factor6 })
    }

    /// Width multiplying `g1` at temperature `t`.
    pub fn sigma(&self, temperature: f64) -> f64 {
        let factor1 = (temperature.ln() / (self.q - 1.0)).exp();
        let factor4 = self.factor4_p * factor1;
        (-(self.q - 1.0) * (self.factor6 / factor4).ln() / (3.0 - self.q)).exp()
    }

    /// One step from the Gaussian pair `(g1, g2)`.
    pub fn step_from(&self, sigma: f64, g1: f64, g2: f64) -> f64 {
        if g1 == 0.0 {
            return 0.0;
        }
        let den = ((self.q - 1.0) * g2.abs().ln() / (3.0 - self.q)).exp();
        sigma * g1 / den
    }

    pub fn sample<N: Noise + ?Sized>(&self, temperature: f64, noise: &mut N) -> f64 {
        let sigma = self.sigma(temperature);
        let (g1, g2) = (noise.gaussian(), noise.gaussian());
        let step = self.step_from(sigma, g1, g2);
        if step > TAIL_LIMIT {
            TAIL_LIMIT * noise.uniform()
        } else if step < -TAIL_LIMIT {
            -TAIL_LIMIT * noise.uniform()
        } else {
            step
        }
    }
}

/// Candidate = `current` plus one visiting step per coordinate, wrapped into `bounds`.
pub fn visiting_step<N: Noise + ?Sized>(
    current: &[f64],
    temperature: f64,
    dist: &VisitingDistribution,
    bounds: &Bounds,
    noise: &mut N,
) -> Vec<f64> {
    current
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let step = dist.sample(temperature, noise);
            if step == 0.0 {
                x
            } else {
                bounds.wrap(i, x + step)
            }
        })
        .collect()
}

/// Minimizes `objective` from `init`, stopping at the first success or when the budget runs out.
pub fn anneal<O: Objective, R: Rng + ?Sized>(
    objective: O,
    bounds: &Bounds,
    init: &[f64],
    params: &GsaParams,
    rng: &mut R,
) -> std::result::Result<SearchOutcome, EvalError> {
    params.validate()?;
    if init.len() != bounds.dim() {
        return Err(Error::LengthMismatch { expected: bounds.dim(), got: init.len() }.into());
    }
    if !bounds.contains(init) {
        return Err(Error::InvalidParameter("initial point outside bounds".into()).into());
    }
    let dist = VisitingDistribution::new(params.visiting)?;
    let mut tracker = Tracker::new(objective);

    let mut current = init.to_vec();
    let mut current_value = match tracker.eval(&current)? {
        Step::Value(v) => v,
        Step::Stop(out) => return Ok(out),
    };

    let mut t: u64 = 1;
    loop {
        let temp = temperature(t, params)?;
        if temp < params.restart_ratio * params.initial_temperature {
            t = 1;
            current.clone_from(&tracker.best);
            current_value = tracker.best_value;
            continue;
        }
        let candidate = visiting_step(&current, temp, &dist, bounds, rng);
        let value = match tracker.eval(&candidate)? {
            Step::Value(v) => v,
            Step::Stop(out) => return Ok(out),
        };
        let t_accept = match params.acceptance_temperature {
            AcceptanceTemperature::Decayed => temp / t as f64,
            AcceptanceTemperature::Visiting => temp,
        };
        let delta = value - current_value;
        let accept = delta <= 0.0
            || rng.random::<f64>()
                < acceptance_probability(delta, t_accept, params, params.acceptance_mode)?;
        if accept {
            current = candidate;
            current_value = value;
        }
        t += 1;
    }
}
