use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::grid::{ColorImage, DepthMap, Grid};
use crate::net::{b64_decode, b64_encode, blocking_client, encode_png_rgb, HttpSettings, Throttle};

use super::normals::{NormalBoundaryMaps, NormalPredictor, FALLBACK_NORMAL};

#[derive(Serialize)]
struct PredictRequest<'a> {
    image: &'a str,
}

#[derive(Deserialize)]
struct PredictResponse {
    normals: String,
    boundary: String,
}

/// Client for a normal/boundary model server:
/// `{image: base64 PNG}` → `{normals: base64 f32 LE xyz triplets, boundary: base64 f32 LE}`,
/// both row-major.
pub struct RemoteNormalPredictor {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    throttle: Throttle,
}

impl RemoteNormalPredictor {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        settings: &HttpSettings,
    ) -> Result<Self> {
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client: blocking_client(settings)?,
            throttle: Throttle::new(settings),
        })
    }

    pub fn predict_rgb(&self, rgb: &ColorImage) -> Result<NormalBoundaryMaps> {
        let png = b64_encode(&encode_png_rgb(rgb)?);
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&PredictRequest { image: &png });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = {
            let _permit = self.throttle.acquire();
            req.send()
                .map_err(|e| Error::PredictorFailed(e.to_string()))?
        };
        if !resp.status().is_success() {
            return Err(Error::PredictorFailed(format!("HTTP {}", resp.status())));
        }
        let body: PredictResponse = resp
            .json()
            .map_err(|e| Error::PredictorFailed(e.to_string()))?;
        decode_maps(&body.normals, &body.boundary, rgb.width(), rgb.height())
    }
}

impl NormalPredictor for RemoteNormalPredictor {
    fn predict(
        &self,
        rgb: &ColorImage,
        _depth: &DepthMap,
        _intrinsics: &CameraIntrinsics,
    ) -> Result<NormalBoundaryMaps> {
        self.predict_rgb(rgb)
    }
}

fn f32s(b64: &str) -> Result<Vec<f32>> {
    let bytes = b64_decode(b64).map_err(|e| Error::PredictorFailed(e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::PredictorShapeMismatch(format!(
            "{} bytes is not a whole number of floats",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Decodes and sanitizes server maps: normals are renormalized (with a
/// warning if any were off by more than 1e-6), boundary values clamped.
pub fn decode_maps(
    normals_b64: &str,
    boundary_b64: &str,
    width: usize,
    height: usize,
) -> Result<NormalBoundaryMaps> {
    let n = f32s(normals_b64)?;
    let b = f32s(boundary_b64)?;
    let px = width * height;
    if n.len() != 3 * px || b.len() != px {
        return Err(Error::PredictorShapeMismatch(format!(
            "expected {} normal and {} boundary values for {width}x{height}, got {} and {}",
            3 * px,
            px,
            n.len(),
            b.len()
        )));
    }
    let mut renormalized = 0usize;
    let normals: Vec<Vector3<f64>> = n
        .chunks_exact(3)
        .map(|c| {
            let v = Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64);
            let len = v.norm();
            if !len.is_finite() || len < 1e-12 {
                renormalized += 1;
                return FALLBACK_NORMAL;
            }
            if (len - 1.0).abs() > 1e-6 {
                renormalized += 1;
            }
            v / len
        })
        .collect();
    if renormalized > 0 {
        log::warn!("normal predictor returned {renormalized} non-unit normals; renormalized");
    }
    let boundary: Vec<f64> = b
        .iter()
        .map(|&v| {
            if v.is_finite() {
                (v as f64).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect();
    NormalBoundaryMaps::new(
        Grid::from_vec(width, height, normals)?,
        Grid::from_vec(width, height, boundary)?,
    )
}

/// Inverse of [`decode_maps`], for servers and test doubles.
pub fn encode_maps(maps: &NormalBoundaryMaps) -> (String, String) {
    let mut n = Vec::with_capacity(maps.normals.len() * 12);
    for v in maps.normals.iter() {
        for c in v.iter() {
            n.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    let b: Vec<u8> = maps
        .boundary
        .iter()
        .flat_map(|v| (*v as f32).to_le_bytes())
        .collect();
    (b64_encode(&n), b64_encode(&b))
}
