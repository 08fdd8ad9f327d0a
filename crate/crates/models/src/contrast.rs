//! Fixed input stage of [`crate::TinyClassifier`].
//!
//! Each unit-scaled intensity is replaced by its absolute deviation from the
//! mean of the same channel over the image's one-pixel border ring. Shapes
//! never fill the border, so the ring mean tracks the background color and
//! the stage maps any color pair to a foreground-vs-background contrast map.
//! Inputs are square RGB images flattened row-major.

use crate::error::{ModelsError, Result};

const CH: usize = 3;

/// Side length of the square image with `len` unit intensities.
pub fn side_for(len: usize) -> Result<usize> {
    let pixels = len / CH;
    let side = (pixels as f64).sqrt().round() as usize;
    if len % CH != 0 || side * side != pixels || side < 2 {
        return Err(ModelsError::Format(format!("input length {len} is not a square RGB image")));
    }
    Ok(side)
}

fn on_border(p: usize, side: usize) -> bool {
    let (x, y) = (p % side, p / side);
    x == 0 || y == 0 || x == side - 1 || y == side - 1
}

/// Per-channel mean over the border ring.
pub fn border_means(input: &[f64], side: usize) -> [f64; 3] {
    let mut sums = [0.0; CH];
    let mut n = 0usize;
    for (p, px) in input.chunks_exact(CH).enumerate() {
        if on_border(p, side) {
            for c in 0..CH {
                sums[c] += px[c];
            }
            n += 1;
        }
    }
    sums.map(|s| s / n as f64)
}

/// Contrast map and the reference means it was taken against.
pub fn forward(input: &[f64]) -> Result<(Vec<f64>, [f64; 3])> {
    let side = side_for(input.len())?;
    let means = border_means(input, side);
    let out = input.iter().enumerate().map(|(i, v)| (v - means[i % CH]).abs()).collect();
    Ok((out, means))
}

/// Pulls a gradient on the contrast map back to the raw input.
pub fn backward(input: &[f64], means: &[f64; 3], grad: &[f64]) -> Result<Vec<f64>> {
    let side = side_for(input.len())?;
    let signed: Vec<f64> = input
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (v, g))| {
            let d = v - means[i % CH];
            if d > 0.0 {
                *g
            } else if d < 0.0 {
                -*g
            } else {
                0.0
            }
        })
        .collect();
    let mut totals = [0.0; CH];
    for (i, s) in signed.iter().enumerate() {
        totals[i % CH] += s;
    }
    let ring = (4 * side - 4) as f64;
    Ok(signed
        .iter()
        .enumerate()
        .map(|(i, s)| if on_border(i / CH, side) { s - totals[i % CH] / ring } else { *s })
        .collect())
}
