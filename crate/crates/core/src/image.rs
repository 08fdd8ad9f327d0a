use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::InvalidImage(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * CHANNELS).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * CHANNELS
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    /// Panics if `(x, y)` is out of bounds.
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        assert!(self.contains(x, y), "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        assert!(self.contains(x, y), "pixel ({x}, {y}) out of bounds");
        let o = self.offset(x, y);
        self.data[o..o + CHANNELS].copy_from_slice(&rgb);
    }

    /// Intensities divided by 255, in storage order.
    pub fn to_unit(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v) / 255.0).collect()
    }

    /// Number of pixels whose RGB value differs from `other`.
    pub fn l0_distance(&self, other: &Image) -> usize {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .chunks_exact(CHANNELS)
            .zip(other.data.chunks_exact(CHANNELS))
            .filter(|(a, b)| a != b)
            .count()
    }
}
