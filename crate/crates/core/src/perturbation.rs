//! Few-pixel perturbations and their continuous search-space encoding.
//!
//! A perturbation is an ordered list of `(x, y, r, g, b)` tuples. Applying it
//! replaces the RGB value at each coordinate; later tuples at the same
//! coordinate overwrite earlier ones. Optimizers search over a flat vector of
//! length `5 * d` inside a box; decoding floors and clamps each slot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Number of search coordinates per pixel tuple.
pub const TUPLE_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelTuple {
    pub x: usize,
    pub y: usize,
    pub rgb: [u8; 3],
}

impl PixelTuple {
    pub fn new(x: usize, y: usize, r: u8, g: u8, b: u8) -> Self {
        Self { x, y, rgb: [r, g, b] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelPerturbation {
    tuples: Vec<PixelTuple>,
    limit: usize,
}

impl PixelPerturbation {
    pub fn new(tuples: Vec<PixelTuple>, limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::InvalidPerturbation("pixel limit must be >= 1".into()));
        }
        if tuples.len() > limit {
            return Err(Error::InvalidPerturbation(format!(
                "{} tuples exceed pixel limit {}",
                tuples.len(),
                limit
            )));
        }
        Ok(Self { tuples, limit })
    }

    pub fn empty(limit: usize) -> Result<Self> {
        Self::new(Vec::new(), limit)
    }

    pub fn tuples(&self) -> &[PixelTuple] {
        &self.tuples
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for t in &self.tuples {
            if t.x >= width || t.y >= height {
                return Err(Error::InvalidPerturbation(format!(
                    "coordinate ({}, {}) outside {}x{} image",
                    t.x, t.y, width, height
                )));
            }
        }
        Ok(())
    }

    /// Returns a copy of `image` with every tuple's pixel replaced by its color.
    pub fn apply(&self, image: &Image) -> Result<Image> {
        self.check_bounds(image.width(), image.height())?;
        let mut out = image.clone();
        for t in &self.tuples {
            out.set_pixel(t.x, t.y, t.rgb);
        }
        Ok(out)
    }

    /// Flat search vector: `[x, y, r, g, b]` per tuple.
    pub fn encode(&self) -> Vec<f64> {
        self.tuples
            .iter()
            .flat_map(|t| {
                [
                    t.x as f64,
                    t.y as f64,
                    f64::from(t.rgb[0]),
                    f64::from(t.rgb[1]),
                    f64::from(t.rgb[2]),
                ]
            })
            .collect()
    }

    /// Decodes a flat vector of length `5 * limit` for a `width x height` image.
    pub fn decode(v: &[f64], width: usize, height: usize, limit: usize) -> Result<Self> {
        if v.len() != TUPLE_LEN * limit {
            return Err(Error::LengthMismatch { expected: TUPLE_LEN * limit, got: v.len() });
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        let tuples = v
            .chunks_exact(TUPLE_LEN)
            .map(|c| PixelTuple {
                x: floor_clamp(c[0], width - 1),
                y: floor_clamp(c[1], height - 1),
                rgb: [
                    floor_clamp(c[2], 255) as u8,
                    floor_clamp(c[3], 255) as u8,
                    floor_clamp(c[4], 255) as u8,
                ],
            })
            .collect();
        Self::new(tuples, limit)
    }
}

fn floor_clamp(v: f64, max: usize) -> usize {
    if v.is_nan() || v <= 0.0 {
        return 0;
    }
    let f = v.floor();
    if f >= max as f64 {
        max
    } else {
        f as usize
    }
}

/// Per-coordinate search box. Intervals are `[lower, upper)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::InvalidParameter("bounds must have at least one dimension".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidParameter(format!("bad interval [{l}, {u}) at {i}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    /// `[0, W) x [0, H) x [0, 256)^3`, repeated `limit` times.
    pub fn for_pixels(width: usize, height: usize, limit: usize) -> Result<Self> {
        let lo = [0.0; TUPLE_LEN];
        let hi = [width as f64, height as f64, 256.0, 256.0, 256.0];
        Self::new(
            lo.iter().copied().cycle().take(TUPLE_LEN * limit).collect(),
            hi.iter().copied().cycle().take(TUPLE_LEN * limit).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v.iter().zip(&self.lower).zip(&self.upper).all(|((x, l), u)| *x >= *l && *x <= *u)
    }

    /// Maps `v` into `[lower, upper)` by modular wrap-around.
    pub fn wrap(&self, i: usize, v: f64) -> f64 {
        let (l, u) = (self.lower[i], self.upper[i]);
        let w = l + (v - l).rem_euclid(u - l);
        if w >= u || !w.is_finite() {
            l
        } else {
            w
        }
    }

    pub fn clamp(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.lower[i], self.upper[i])
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.random_range(*l..*u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_perturbation_is_identity() {
        let img = Image::new(2, 2, (0..12).collect()).unwrap();
        let p = PixelPerturbation::empty(3).unwrap();
        assert_eq!(p.apply(&img).unwrap(), img);
    }

    #[test]
    fn single_tuple_replaces_one_pixel() {
        let img = Image::filled(2, 2, [0, 0, 0]);
        let p = PixelPerturbation::new(vec![PixelTuple::new(0, 0, 255, 255, 255)], 1).unwrap();
        let out = p.apply(&img).unwrap();
        assert_eq!(out.pixel(0, 0), [255, 255, 255]);
        for (x, y) in [(1, 0), (0, 1), (1, 1)] {
            assert_eq!(out.pixel(x, y), [0, 0, 0]);
        }
    }

    #[test]
    fn last_write_wins() {
        let img = Image::filled(2, 2, [0, 0, 0]);
        let p = PixelPerturbation::new(
            vec![PixelTuple::new(1, 1, 10, 0, 0), PixelTuple::new(1, 1, 0, 20, 0)],
            2,
        )
        .unwrap();
        assert_eq!(p.apply(&img).unwrap().pixel(1, 1), [0, 20, 0]);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let img = Image::filled(2, 2, [0, 0, 0]);
        let p = PixelPerturbation::new(vec![PixelTuple::new(2, 0, 1, 1, 1)], 1).unwrap();
        assert!(matches!(p.apply(&img), Err(Error::InvalidPerturbation(_))));
    }

    #[test]
    fn too_many_tuples_rejected() {
        let t = PixelTuple::new(0, 0, 0, 0, 0);
        assert!(PixelPerturbation::new(vec![t, t], 1).is_err());
    }

    #[test]
    fn decode_floors_and_clamps() {
        let p = PixelPerturbation::decode(&[31.7, -0.3, 255.999, 256.5, 12.9], 32, 32, 1).unwrap();
        assert_eq!(p.tuples()[0], PixelTuple::new(31, 0, 255, 255, 12));
        let p = PixelPerturbation::decode(&[40.0, 32.0, f64::NAN, 0.0, 0.0], 32, 32, 1).unwrap();
        assert_eq!(p.tuples()[0], PixelTuple::new(31, 31, 0, 0, 0));
    }

    #[test]
    fn decode_wrong_length() {
        assert!(matches!(
            PixelPerturbation::decode(&[0.0; 9], 4, 4, 2),
            Err(Error::LengthMismatch { expected: 10, got: 9 })
        ));
    }

    #[test]
    fn wrap_stays_in_half_open_box() {
        let b = Bounds::uniform(1, 0.0, 32.0).unwrap();
        assert_eq!(b.wrap(0, 33.5), 1.5);
        assert_eq!(b.wrap(0, -1.0), 31.0);
        assert_eq!(b.wrap(0, -1e-20), 0.0);
        assert_eq!(b.wrap(0, 64.0), 0.0);
    }

    fn tuple_strategy(w: usize, h: usize) -> impl Strategy<Value = PixelTuple> {
        (0..w, 0..h, any::<[u8; 3]>()).prop_map(|(x, y, rgb)| PixelTuple { x, y, rgb })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(tuples in prop::collection::vec(tuple_strategy(7, 5), 1..10)) {
            let d = tuples.len();
            let p = PixelPerturbation::new(tuples, d).unwrap();
            let q = PixelPerturbation::decode(&p.encode(), 7, 5, d).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn apply_changes_at_most_d_pixels(
            tuples in prop::collection::vec(tuple_strategy(6, 4), 0..8),
            seed in any::<u8>(),
        ) {
            let img = Image::filled(6, 4, [seed, seed.wrapping_mul(3), 7]);
            let p = PixelPerturbation::new(tuples, 8).unwrap();
            let out = p.apply(&img).unwrap();
            prop_assert!(out.l0_distance(&img) <= p.len());
        }
    }
}
