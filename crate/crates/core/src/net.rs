//! HTTP plumbing shared by the remote inpainting, captioning and normal
//! prediction clients.

use std::io::Cursor;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::{GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ColorImage, Grid, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub timeout_secs: f64,
    /// Upper bound on concurrent requests per client.
    pub max_in_flight: usize,
    /// Sustained request rate (token-bucket refill, requests per second).
    pub requests_per_second: f64,
    /// Token-bucket capacity.
    pub burst: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            timeout_secs: 120.0,
            max_in_flight: 4,
            requests_per_second: 2.0,
            burst: 4,
        }
    }
}

pub(crate) fn blocking_client(settings: &HttpSettings) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(settings.timeout_secs))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build HTTP client: {e}")))
}

struct ThrottleState {
    in_flight: usize,
    tokens: f64,
    last_refill: Instant,
}

/// Concurrency cap plus token-bucket rate limit.
pub struct Throttle {
    max_in_flight: usize,
    rate: f64,
    burst: f64,
    state: Mutex<ThrottleState>,
    freed: Condvar,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.throttle.state.lock().unwrap();
        s.in_flight -= 1;
        self.throttle.freed.notify_one();
    }
}

impl Throttle {
    pub fn new(settings: &HttpSettings) -> Self {
        let burst = settings.burst.max(1) as f64;
        Self {
            max_in_flight: settings.max_in_flight.max(1),
            rate: settings.requests_per_second,
            burst,
            state: Mutex::new(ThrottleState {
                in_flight: 0,
                tokens: burst,
                last_refill: Instant::now(),
            }),
            freed: Condvar::new(),
        }
    }

    /// Blocks until a request slot and a rate token are both available.
    pub fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            if self.rate > 0.0 {
                let dt = now.duration_since(s.last_refill).as_secs_f64();
                s.tokens = (s.tokens + dt * self.rate).min(self.burst);
            } else {
                s.tokens = self.burst;
            }
            s.last_refill = now;
            if s.in_flight < self.max_in_flight && s.tokens >= 1.0 {
                s.tokens -= 1.0;
                s.in_flight += 1;
                return Permit { throttle: self };
            }
            let wait = if s.in_flight >= self.max_in_flight {
                Duration::from_millis(50)
            } else {
                Duration::from_secs_f64(((1.0 - s.tokens) / self.rate).max(0.001))
            };
            s = self.freed.wait_timeout(s, wait).unwrap().0;
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().in_flight
    }
}

pub fn color_to_rgb_image(img: &ColorImage) -> RgbImage {
    let raw: Vec<u8> = img.iter().flat_map(|p| p.iter().copied()).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size")
}

pub fn rgb_image_to_color(img: &RgbImage) -> ColorImage {
    let (w, h) = img.dimensions();
    Grid::from_fn(w as usize, h as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0
    })
}

/// Mask on the wire: 255 = inpaint, 0 = keep.
pub fn mask_to_gray(mask: &Mask) -> GrayImage {
    let raw: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer size")
}

pub fn encode_png_rgb(img: &ColorImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    color_to_rgb_image(img).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_png_mask(mask: &Mask) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    mask_to_gray(mask).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_png_rgb(bytes: &[u8]) -> Result<ColorImage> {
    let img = image::load_from_memory(bytes)?.to_rgb8();
    Ok(rgb_image_to_color(&img))
}

pub fn b64_encode(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>> {
    // Some servers prefix a data URL header.
    let payload = text.split_once("base64,").map_or(text, |(_, rest)| rest);
    B64.decode(payload.trim())
        .map_err(|e| Error::InvalidInput(format!("bad base64 payload: {e}")))
}
