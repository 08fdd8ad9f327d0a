//! Structured-attack mask initialization.
//!
//! A small ADMM solver minimizes `f(x0 + δ) + γ‖δ‖² + τ Σ_G ‖δ_G‖₂` on a
//! white-box surrogate, with `δ` split as `δ = z`. The group penalty acts on
//! k×k pixel blocks across all three channels. Thresholding `|z|` against a
//! fraction of its maximum gives a per-channel binary mask, and the
//! optimizers are then seeded with inverse-colored pixels drawn from the
//! mask's support.
//!
//! `δ` lives in unit intensity scale (intensity / 255), matching the
//! surrogate's input.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::perturbation::{PixelPerturbation, PixelTuple};
use crate::surrogate::{LossSpec, Surrogate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrAttackParams {
    /// Distortion weight `γ`.
    pub distortion: f64,
    /// Group-sparsity weight `τ`.
    pub sparsity: f64,
    /// ADMM penalty `ρ`.
    pub penalty: f64,
    pub group_size: usize,
    pub stride: usize,
    pub iterations: usize,
    pub inner_steps: usize,
    pub step_size: f64,
    /// Margin floor `κ`.
    pub confidence: f64,
    /// Relative mask threshold `θ`.
    pub threshold: f64,
    /// Call-equivalents charged to the black-box budget for building a mask.
    pub call_charge: u64,
}

impl Default for StrAttackParams {
    fn default() -> Self {
        Self {
            distortion: 1.0,
            sparsity: 0.5,
            penalty: 5.0,
            group_size: 2,
            stride: 2,
            iterations: 20,
            inner_steps: 5,
            step_size: 0.01,
            confidence: 0.0,
            threshold: 0.1,
            call_charge: 5,
        }
    }
}

impl StrAttackParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("distortion", self.distortion),
            ("sparsity", self.sparsity),
            ("penalty", self.penalty),
            ("step size", self.step_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if self.group_size == 0 || self.stride < self.group_size {
            return Err(Error::InvalidParameter(format!(
                "group size {} and stride {} must satisfy 1 <= size <= stride",
                self.group_size, self.stride
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!("threshold {} not in (0, 1)", self.threshold)));
        }
        if !(self.confidence >= 0.0) {
            return Err(Error::InvalidParameter(format!("confidence {} < 0", self.confidence)));
        }
        Ok(())
    }
}

/// Budget charge for building one mask.
pub fn mask_call_cost(params: &StrAttackParams) -> u64 {
    params.call_charge
}

/// Real-valued perturbation laid out like image data (row-major, RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height * CHANNELS] }
    }

    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height * CHANNELS {
            return Err(Error::LengthMismatch { expected: width * height * CHANNELS, got: values.len() });
        }
        Ok(Self { width, height, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Non-overlapping pixel blocks of `size x size` placed every `stride` pixels.
/// Pixels no block covers (when `stride > size`) form singleton groups.
/// Each group lists element indices over all three channels.
pub fn pixel_groups(width: usize, height: usize, size: usize, stride: usize) -> Vec<Vec<usize>> {
    let mut covered = vec![false; width * height];
    let mut groups = Vec::new();
    for gy in (0..height).step_by(stride) {
        for gx in (0..width).step_by(stride) {
            let mut g = Vec::with_capacity(size * size * CHANNELS);
            for y in gy..(gy + size).min(height) {
                for x in gx..(gx + size).min(width) {
                    covered[y * width + x] = true;
                    let o = (y * width + x) * CHANNELS;
                    g.extend(o..o + CHANNELS);
                }
            }
            groups.push(g);
        }
    }
    for (p, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
        groups.push((p * CHANNELS..(p + 1) * CHANNELS).collect());
    }
    groups
}

/// Block soft-threshold of one group in place: `G ↦ max(0, 1 - λ/‖G‖₂) G`.
pub fn shrink_group(values: &mut [f64], lambda: f64) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > lambda { 1.0 - lambda / norm } else { 0.0 };
    values.iter_mut().for_each(|v| *v *= scale);
}

/// Proximal operator of `λ Σ_G ‖·_G‖₂` over `groups`.
pub fn group_prox(values: &[f64], lambda: f64, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {lambda} < 0")));
    }
    let mut out = values.to_vec();
    let mut buf = Vec::new();
    for g in groups {
        buf.clear();
        buf.extend(g.iter().map(|&i| values[i]));
        shrink_group(&mut buf, lambda);
        for (&i, v) in g.iter().zip(&buf) {
            out[i] = *v;
        }
    }
    Ok(out)
}

pub fn group_norm(values: &[f64], groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|g| g.iter().map(|&i| values[i] * values[i]).sum::<f64>().sqrt())
        .sum()
}

fn check_finite(g: &[f64]) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("surrogate gradient".into()))
    }
}

/// Value of the structured objective at perturbation `z`.
pub fn structured_objective<S: Surrogate + ?Sized>(
    surrogate: &S,
    x0: &[f64],
    z: &[f64],
    label: usize,
    params: &StrAttackParams,
    groups: &[Vec<usize>],
) -> Result<f64> {
    objective_parts(surrogate, x0, z, label, params, groups).map(|(f, rest)| f + rest)
}

/// Attack loss and the distortion plus sparsity terms.
fn objective_parts<S: Surrogate + ?Sized>(
    surrogate: &S,
    x0: &[f64],
    z: &[f64],
    label: usize,
    params: &StrAttackParams,
    groups: &[Vec<usize>],
) -> Result<(f64, f64)> {
    let input: Vec<f64> = x0.iter().zip(z).map(|(a, b)| a + b).collect();
    let (f, _) = surrogate
        .loss_and_gradient(&input, LossSpec::Margin { label, kappa: params.confidence })?;
    let l2: f64 = z.iter().map(|v| v * v).sum();
    Ok((f, params.distortion * l2 + params.sparsity * group_norm(z, groups)))
}

/// ADMM for the structured objective. Returns the split variable `z` of
/// lowest objective among the iterates that fool the surrogate by the
/// confidence margin, or the final `z` when none does.
pub fn strattack<S: Surrogate + ?Sized>(
    surrogate: &S,
    image: &Image,
    true_label: usize,
    params: &StrAttackParams,
) -> Result<Field> {
    strattack_traced(surrogate, image, true_label, params).map(|(z, _)| z)
}

/// As [`strattack`], also returning the structured objective at `z` after each outer iteration.
/// The trace covers every iterate, not only the returned one.
pub fn strattack_traced<S: Surrogate + ?Sized>(
    surrogate: &S,
    image: &Image,
    true_label: usize,
    params: &StrAttackParams,
) -> Result<(Field, Vec<f64>)> {
    params.validate()?;
    let n = image.data().len();
    if surrogate.input_len() != n {
        return Err(Error::LengthMismatch { expected: surrogate.input_len(), got: n });
    }
    let x0 = image.to_unit();
    let groups = pixel_groups(image.width(), image.height(), params.group_size, params.stride);
    let loss = LossSpec::Margin { label: true_label, kappa: params.confidence };
    let (gamma, rho) = (params.distortion, params.penalty);

    let mut delta = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut input = vec![0.0; n];
    let mut trace = Vec::with_capacity(params.iterations);
    let mut best: Option<(f64, Vec<f64>)> = None;

    for _ in 0..params.iterations {
        for _ in 0..params.inner_steps {
            for i in 0..n {
                input[i] = x0[i] + delta[i];
            }
            let (_, g) = surrogate.loss_and_gradient(&input, loss)?;
            check_finite(&g)?;
            for i in 0..n {
                let grad = g[i] + 2.0 * gamma * delta[i] + rho * (delta[i] - z[i] + u[i]);
                delta[i] -= params.step_size * grad;
            }
        }
        let v: Vec<f64> = delta.iter().zip(&u).map(|(d, u)| d + u).collect();
        z = group_prox(&v, params.sparsity / rho, &groups)?;
        for i in 0..n {
            // keep x0 + z a valid image
            z[i] = z[i].clamp(-x0[i], 1.0 - x0[i]);
            u[i] += delta[i] - z[i];
        }
        let (f, rest) = objective_parts(surrogate, &x0, &z, true_label, params, &groups)?;
        let value = f + rest;
        trace.push(value);
        if f <= -params.confidence && best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, z.clone()));
        }
    }
    let z = best.map_or(z, |(_, z)| z);
    Ok((Field::new(image.width(), image.height(), z)?, trace))
}

/// Per-pixel, per-channel boolean map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height * CHANNELS {
            return Err(Error::LengthMismatch { expected: width * height * CHANNELS, got: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> bool {
        self.bits[(y * self.width + x) * CHANNELS + channel]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// A pixel is eligible when any of its channels is set.
    pub fn eligible(&self, x: usize, y: usize) -> bool {
        (0..CHANNELS).any(|c| self.get(x, y, c))
    }

    pub fn eligible_pixels(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.eligible(x, y))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// One channel as 8-bit grayscale (0 or 255), row-major.
    pub fn channel_plane(&self, channel: usize) -> Vec<u8> {
        assert!(channel < CHANNELS);
        self.bits.iter().skip(channel).step_by(CHANNELS).map(|b| if *b { 255 } else { 0 }).collect()
    }

    /// Inverse of [`Self::channel_plane`]; nonzero bytes are set.
    pub fn from_planes(width: usize, height: usize, planes: [&[u8]; 3]) -> Result<Self> {
        for p in planes {
            if p.len() != width * height {
                return Err(Error::LengthMismatch { expected: width * height, got: p.len() });
            }
        }
        let bits = (0..width * height)
            .flat_map(|i| planes.map(|p| p[i] != 0))
            .collect();
        Self::new(width, height, bits)
    }
}

/// `true` where `|δ| > θ · max|δ|`.
pub fn binary_mask(delta: &Field, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} not in (0, 1)")));
    }
    let cut = threshold * delta.max_abs();
    let bits = delta.values.iter().map(|v| v.abs() > cut).collect();
    BinaryMask::new(delta.width, delta.height, bits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskInit {
    pub perturbation: PixelPerturbation,
    /// Set when the mask had no eligible pixel and positions were drawn uniformly.
    pub fallback: bool,
}

fn inverse(rgb: [u8; 3]) -> [u8; 3] {
    rgb.map(|c| 255 - c)
}

/// Samples up to `n` distinct mask-eligible pixels and colors each with the
/// inverse of the image's color there.
pub fn init_from_mask<R: Rng + ?Sized>(
    image: &Image,
    mask: &BinaryMask,
    n: usize,
    rng: &mut R,
) -> Result<MaskInit> {
    if n == 0 {
        return Err(Error::InvalidParameter("pixel count must be >= 1".into()));
    }
    if mask.width != image.width() || mask.height != image.height() {
        return Err(Error::InvalidParameter(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width,
            mask.height,
            image.width(),
            image.height()
        )));
    }
    let eligible = mask.eligible_pixels();
    let fallback = eligible.is_empty();
    let positions: Vec<(usize, usize)> = if fallback {
        let w = image.width();
        sample(rng, image.pixel_count(), n.min(image.pixel_count()))
            .into_iter()
            .map(|p| (p % w, p / w))
            .collect()
    } else {
        sample(rng, eligible.len(), n.min(eligible.len()))
            .into_iter()
            .map(|i| eligible[i])
            .collect()
    };
    let tuples = positions
        .into_iter()
        .map(|(x, y)| PixelTuple { x, y, rgb: inverse(image.pixel(x, y)) })
        .collect();
    Ok(MaskInit { perturbation: PixelPerturbation::new(tuples, n)?, fallback })
}
