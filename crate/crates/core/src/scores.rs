use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the probability sum.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Per-class probabilities returned by a scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidScores("empty score vector".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidScores(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidScores(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probabilities))
    }

    /// Uniform distribution over `classes` classes.
    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        Self(vec![1.0 / classes as f64; classes])
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logit".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self::new(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate().skip(1) {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn get(&self, label: usize) -> Result<f64> {
        self.0
            .get(label)
            .copied()
            .ok_or(Error::LabelOutOfRange { label, classes: self.0.len() })
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(s: ScoreVector) -> Self {
        s.0
    }
}

pub const DEFAULT_PIXELS: usize = 25;
pub const DEFAULT_BUDGET: u64 = 15_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Goal {
    Untargeted,
    Targeted(usize),
}

/// Per-image attack settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub pixels: usize,
    pub budget: u64,
    pub true_label: usize,
    pub goal: Goal,
    pub seed: u64,
}

impl AttackConfig {
    pub fn untargeted(true_label: usize) -> Self {
        Self {
            pixels: DEFAULT_PIXELS,
            budget: DEFAULT_BUDGET,
            true_label,
            goal: Goal::Untargeted,
            seed: 0,
        }
    }

    pub fn with_pixels(mut self, pixels: usize) -> Self {
        self.pixels = pixels;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.goal = Goal::Targeted(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels == 0 {
            return Err(Error::InvalidConfig("pixel limit must be >= 1".into()));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be >= 1".into()));
        }
        Ok(())
    }

    fn check_labels(&self, classes: usize) -> Result<()> {
        for label in std::iter::once(self.true_label).chain(match self.goal {
            Goal::Targeted(t) => Some(t),
            Goal::Untargeted => None,
        }) {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        Ok(())
    }

    /// Loss to maximize: one minus the probability of the true (or target) class.
    pub fn adversarial_loss(&self, scores: &ScoreVector) -> Result<f64> {
        self.check_labels(scores.classes())?;
        let label = match self.goal {
            Goal::Untargeted => self.true_label,
            Goal::Targeted(t) => t,
        };
        Ok(1.0 - scores.get(label)?)
    }

    pub fn is_success(&self, scores: &ScoreVector) -> Result<bool> {
        self.check_labels(scores.classes())?;
        let top = scores.argmax();
        Ok(match self.goal {
            Goal::Untargeted => top != self.true_label,
            Goal::Targeted(t) => top == t,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn loss_examples() {
        let cfg = AttackConfig::untargeted(0);
        assert_eq!(cfg.adversarial_loss(&sv(&[1.0, 0.0, 0.0])).unwrap(), 0.0);
        let u = cfg.adversarial_loss(&ScoreVector::uniform(10)).unwrap();
        assert!((u - 0.9).abs() < 1e-15);
        let l = cfg.adversarial_loss(&sv(&[0.7, 0.2, 0.1])).unwrap();
        assert!((l - 0.3).abs() < 1e-15);
    }

    #[test]
    fn success_examples() {
        let cfg = AttackConfig::untargeted(0);
        assert!(!cfg.is_success(&sv(&[0.6, 0.4])).unwrap());
        assert!(cfg.is_success(&sv(&[0.4, 0.6])).unwrap());
        assert!(!cfg.is_success(&sv(&[0.5, 0.5])).unwrap());
    }

    #[test]
    fn argmax_decides_not_loss() {
        let cfg = AttackConfig::untargeted(0);
        let s = sv(&[0.45, 0.3, 0.25]);
        assert!((cfg.adversarial_loss(&s).unwrap() - 0.55).abs() < 1e-15);
        assert!(!cfg.is_success(&s).unwrap());
    }

    #[test]
    fn targeted_goal() {
        let cfg = AttackConfig::untargeted(0).with_target(2);
        let s = sv(&[0.2, 0.5, 0.3]);
        assert!(!cfg.is_success(&s).unwrap());
        assert!((cfg.adversarial_loss(&s).unwrap() - 0.7).abs() < 1e-15);
        assert!(cfg.is_success(&sv(&[0.2, 0.3, 0.5])).unwrap());
    }

    #[test]
    fn label_out_of_range() {
        let cfg = AttackConfig::untargeted(3);
        assert!(matches!(
            cfg.adversarial_loss(&sv(&[0.5, 0.5])),
            Err(Error::LabelOutOfRange { label: 3, classes: 2 })
        ));
        assert!(cfg.is_success(&sv(&[0.5, 0.5])).is_err());
        let cfg = AttackConfig::untargeted(0).with_target(5);
        assert!(cfg.is_success(&sv(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(ScoreVector::new(vec![0.5, 0.3]).is_err());
        assert!(ScoreVector::new(vec![1.2, -0.2]).is_err());
        assert!(ScoreVector::new(vec![]).is_err());
        assert!(ScoreVector::new(vec![0.5, 0.5 + 5e-7]).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::untargeted(0).validate().is_ok());
        assert!(AttackConfig::untargeted(0).with_pixels(0).validate().is_err());
        assert!(AttackConfig::untargeted(0).with_budget(0).validate().is_err());
    }

    proptest! {
        #[test]
        fn loss_in_unit_interval(raw in prop::collection::vec(0.0f64..10.0, 2..12), label in 0usize..2) {
            let s = ScoreVector::softmax(&raw).unwrap();
            let l = AttackConfig::untargeted(label).adversarial_loss(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
        }
    }
}
