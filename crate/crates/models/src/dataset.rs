//! Synthetic shapes dataset and its PNG directory format.
//!
//! Classes: 0 filled disk, 1 filled axis-aligned square, 2 plus-shaped cross.
//! Labels are assigned round-robin, so classes are balanced to within one
//! image.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparsepix_core::Image;

use crate::error::{ModelsError, Result};

pub const SIDE: usize = 32;
pub const CLASSES: usize = 3;
pub const LABELS_FILE: &str = "labels.csv";
/// Default split sizes used by the CLI and the calibrated training defaults.
pub const DEFAULT_TRAIN_SIZE: usize = 20_000;
pub const DEFAULT_TEST_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
}

fn contrasting<R: Rng + ?Sized>(bg: [u8; 3], rng: &mut R) -> [u8; 3] {
    loop {
        let fg: [u8; 3] = rng.random();
        if fg.iter().zip(&bg).any(|(a, b)| a.abs_diff(*b) >= 60) {
            return fg;
        }
    }
}

fn shape_mask<R: Rng + ?Sized>(label: usize, rng: &mut R) -> Vec<bool> {
    let n = SIDE as i64;
    let inside: Box<dyn Fn(i64, i64) -> bool> = match label {
        0 => {
            let r = rng.random_range(4..=10i64);
            let cx = rng.random_range(r..n - r);
            let cy = rng.random_range(r..n - r);
            Box::new(move |x, y| (x - cx).pow(2) + (y - cy).pow(2) <= r * r)
        }
        1 => {
            let s = rng.random_range(6..=16i64);
            let x0 = rng.random_range(0..=n - s);
            let y0 = rng.random_range(0..=n - s);
            Box::new(move |x, y| x >= x0 && x < x0 + s && y >= y0 && y < y0 + s)
        }
        _ => {
            let arm = rng.random_range(5..=12i64);
            let cx = rng.random_range(arm..n - arm);
            let cy = rng.random_range(arm..n - arm);
            Box::new(move |x, y| {
                let (dx, dy) = ((x - cx).abs(), (y - cy).abs());
                (dy <= 1 && dx <= arm) || (dx <= 1 && dy <= arm)
            })
        }
    };
    (0..n).flat_map(|y| (0..n).map(move |x| (x, y))).map(|(x, y)| inside(x, y)).collect()
}

fn shape_image<R: Rng + ?Sized>(label: usize, rng: &mut R) -> Image {
    let bg: [u8; 3] = rng.random();
    let fg = contrasting(bg, rng);
    let mask = shape_mask(label, rng);
    let data = mask
        .iter()
        .flat_map(|on| if *on { fg } else { bg })
        .map(|c| (i32::from(c) + rng.random_range(-10..=10)).clamp(0, 255) as u8)
        .collect();
    Image::new(SIDE, SIDE, data).expect("32x32x3 by construction")
}

/// `count` labeled 32x32 images; byte-identical for equal `(count, seed)`.
pub fn generate_shapes(count: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let label = i % CLASSES;
            LabeledImage { image: shape_image(label, &mut rng), label }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    filename: String,
    label: usize,
}

pub fn image_filename(index: usize) -> String {
    format!("img_{index:05}.png")
}

pub fn save_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    image::save_buffer(
        path,
        image.data(),
        image.width() as u32,
        image.height() as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(())
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Image::new(w as usize, h as usize, rgb.into_raw())?)
}

/// Writes one PNG per image plus `labels.csv` (`filename,label`).
pub fn export(dir: impl AsRef<Path>, data: &[LabeledImage]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(LABELS_FILE))?;
    for (i, item) in data.iter().enumerate() {
        let filename = image_filename(i);
        save_png(&item.image, dir.join(&filename))?;
        w.serialize(Row { filename, label: item.label })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a directory written by [`export`], in manifest order.
pub fn import(dir: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    let dir = dir.as_ref();
    let mut r = csv::Reader::from_path(dir.join(LABELS_FILE))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        if row.filename.contains(['/', '\\']) {
            return Err(ModelsError::Dataset(format!("bad filename {}", row.filename)));
        }
        out.push(LabeledImage { image: load_png(dir.join(&row.filename))?, label: row.label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(generate_shapes(20, 4), generate_shapes(20, 4));
        assert_ne!(generate_shapes(20, 4), generate_shapes(20, 5));
        // a prefix does not depend on the count
        assert_eq!(generate_shapes(20, 4)[..7], generate_shapes(7, 4)[..]);
    }

    #[test]
    fn balanced_labels() {
        for count in [1, 2, 10, 11, 301] {
            let data = generate_shapes(count, 0);
            let mut per = [0usize; CLASSES];
            data.iter().for_each(|d| per[d.label] += 1);
            let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
            assert!(hi - lo <= 1, "{per:?}");
        }
    }

    #[test]
    fn images_are_valid() {
        for d in generate_shapes(30, 9) {
            assert_eq!((d.image.width(), d.image.height()), (SIDE, SIDE));
            assert_eq!(d.image.data().len(), SIDE * SIDE * 3);
        }
    }

    #[test]
    fn shapes_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for label in 0..CLASSES {
            for _ in 0..200 {
                let m = shape_mask(label, &mut rng);
                // at least the minimal shape area is drawn, so nothing was clipped away entirely
                let area = m.iter().filter(|b| **b).count();
                let min = [49, 36, 3 * 11 + 3 * 8][label];
                assert!(area >= min, "label {label} area {area}");
            }
        }
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_shapes(9, 1);
        export(dir.path(), &data).unwrap();
        assert_eq!(import(dir.path()).unwrap(), data);
    }
}
