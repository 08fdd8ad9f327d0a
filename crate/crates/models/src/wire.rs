//! JSON bodies of the `POST /v1/scores` protocol.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sparsepix_core::Image;

pub const SCORES_PATH: &str = "/v1/scores";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub width: usize,
    pub height: usize,
    /// Base64 of the raw row-major RGB bytes.
    pub pixels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

impl ScoreRequest {
    pub fn from_image(image: &Image) -> Self {
        Self { width: image.width(), height: image.height(), pixels: STANDARD.encode(image.data()) }
    }

    pub fn to_image(&self) -> Result<Image, String> {
        let bytes = STANDARD.decode(&self.pixels).map_err(|e| format!("pixels: {e}"))?;
        Image::new(self.width, self.height, bytes).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_json_shape() {
        let img = Image::new(1, 1, vec![1, 2, 3]).unwrap();
        let json = serde_json::to_string(&ScoreRequest::from_image(&img)).unwrap();
        assert_eq!(json, r#"{"width":1,"height":1,"pixels":"AQID"}"#);
        let back: ScoreRequest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_image().unwrap(), img);
    }

    #[test]
    fn bad_pixels() {
        let req = ScoreRequest { width: 2, height: 1, pixels: "AQID".into() };
        assert!(req.to_image().is_err());
        let req = ScoreRequest { width: 1, height: 1, pixels: "***".into() };
        assert!(req.to_image().is_err());
    }
}
