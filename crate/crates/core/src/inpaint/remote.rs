//! Remote inpainting over HTTP.
//!
//! The neutral wire contract is
//! `POST {image: base64 PNG, mask: base64 PNG, prompt, seed}` → `{image: base64 PNG}`
//! with mask value 255 = inpaint and 0 = keep. Two adapters translate it for
//! common hosted APIs, which also require a fixed square input size.

use std::io::Cursor;

use image::imageops::{self, FilterType};
use image::{ImageFormat, Rgb, RgbImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::ColorImage;
use crate::net::{
    b64_decode, b64_encode, blocking_client, color_to_rgb_image, decode_png_rgb, encode_png_mask,
    encode_png_rgb, mask_to_gray, rgb_image_to_color, HttpSettings, Throttle,
};

use super::{InpaintBackend, InpaintRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WireFormat {
    /// The neutral JSON contract, native resolution.
    Generic,
    /// AUTOMATIC1111-style `/sdapi/v1/img2img` with an inpainting mask.
    StableDiffusionWebui,
    /// OpenAI-style multipart `/v1/images/edits`; transparency marks the edit region.
    OpenaiEdits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteBackendConfig {
    pub endpoint: String,
    pub format: WireFormat,
    /// Side length of the square the provider expects; ignored by `Generic`.
    pub square_size: u32,
    pub http: HttpSettings,
}

impl Default for RemoteBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/inpaint".into(),
            format: WireFormat::Generic,
            square_size: 1024,
            http: HttpSettings::default(),
        }
    }
}

/// Aspect-preserving fit of a `width × height` image into a centered
/// `size × size` square, with the inverse mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub width: u32,
    pub height: u32,
    pub size: u32,
    pub scale: f64,
    pub inner_width: u32,
    pub inner_height: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

impl Letterbox {
    pub fn new(width: u32, height: u32, size: u32) -> Self {
        let scale = size as f64 / width.max(height) as f64;
        let inner_width = ((width as f64 * scale).round() as u32).clamp(1, size);
        let inner_height = ((height as f64 * scale).round() as u32).clamp(1, size);
        Self {
            width,
            height,
            size,
            scale,
            inner_width,
            inner_height,
            offset_x: (size - inner_width) / 2,
            offset_y: (size - inner_height) / 2,
        }
    }

    pub fn pad_rgb(&self, img: &RgbImage) -> RgbImage {
        let inner = imageops::resize(
            img,
            self.inner_width,
            self.inner_height,
            FilterType::Triangle,
        );
        let mut out = RgbImage::from_pixel(self.size, self.size, Rgb([0, 0, 0]));
        imageops::replace(&mut out, &inner, self.offset_x as i64, self.offset_y as i64);
        out
    }

    /// Padding is "keep" so the provider never paints into it.
    pub fn pad_mask(&self, mask: &image::GrayImage) -> image::GrayImage {
        let inner = imageops::resize(
            mask,
            self.inner_width,
            self.inner_height,
            FilterType::Nearest,
        );
        let mut out = image::GrayImage::new(self.size, self.size);
        imageops::replace(&mut out, &inner, self.offset_x as i64, self.offset_y as i64);
        out
    }

    pub fn unpad_rgb(&self, img: &RgbImage) -> Result<RgbImage> {
        if img.dimensions() != (self.size, self.size) {
            return Err(Error::BackendShapeMismatch {
                expected_width: self.size,
                expected_height: self.size,
                width: img.width(),
                height: img.height(),
            });
        }
        let inner = imageops::crop_imm(
            img,
            self.offset_x,
            self.offset_y,
            self.inner_width,
            self.inner_height,
        )
        .to_image();
        Ok(imageops::resize(
            &inner,
            self.width,
            self.height,
            FilterType::Triangle,
        ))
    }
}

pub struct RemoteBackend {
    config: RemoteBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    throttle: Throttle,
}

#[derive(Deserialize)]
struct GenericResponse {
    image: String,
}

#[derive(Deserialize)]
struct WebuiResponse {
    images: Vec<String>,
}

#[derive(Deserialize)]
struct EditsDatum {
    b64_json: String,
}

#[derive(Deserialize)]
struct EditsResponse {
    data: Vec<EditsDatum>,
}

impl RemoteBackend {
    pub fn new(config: RemoteBackendConfig, api_key: Option<String>) -> Result<Self> {
        Ok(Self {
            client: blocking_client(&config.http)?,
            throttle: Throttle::new(&config.http),
            config,
            api_key,
        })
    }

    fn fail(&self, request: &InpaintRequest, reason: impl Into<String>) -> Error {
        Error::BackendFailed {
            view: request.view_id,
            reason: reason.into(),
        }
    }

    fn send(
        &self,
        request: &InpaintRequest,
        builder: reqwest::blocking::RequestBuilder,
    ) -> Result<reqwest::blocking::Response> {
        let builder = match &self.api_key {
            Some(key) => builder.bearer_auth(key),
            None => builder,
        };
        let _permit = self.throttle.acquire();
        let resp = builder
            .send()
            .map_err(|e| self.fail(request, e.to_string()))?;
        if !resp.status().is_success() {
            let status = resp.status();
            let body = resp.text().unwrap_or_default();
            return Err(self.fail(
                request,
                format!(
                    "HTTP {status}: {}",
                    body.chars().take(200).collect::<String>()
                ),
            ));
        }
        Ok(resp)
    }

    fn decode(&self, request: &InpaintRequest, b64: &str) -> Result<RgbImage> {
        let bytes = b64_decode(b64).map_err(|e| self.fail(request, e.to_string()))?;
        let img = decode_png_rgb(&bytes)
            .map_err(|e| self.fail(request, format!("undecodable image: {e}")))?;
        Ok(color_to_rgb_image(&img))
    }

    fn generic(&self, request: &InpaintRequest) -> Result<ColorImage> {
        let body = json!({
            "image": b64_encode(&encode_png_rgb(&request.image)?),
            "mask": b64_encode(&encode_png_mask(&request.mask)?),
            "prompt": request.prompt.as_str(),
            "seed": request.seed,
        });
        let resp = self.send(request, self.client.post(&self.config.endpoint).json(&body))?;
        let parsed: GenericResponse = resp.json().map_err(|e| self.fail(request, e.to_string()))?;
        Ok(rgb_image_to_color(&self.decode(request, &parsed.image)?))
    }

    fn webui(&self, request: &InpaintRequest) -> Result<ColorImage> {
        let lb = Letterbox::new(
            request.image.width() as u32,
            request.image.height() as u32,
            self.config.square_size,
        );
        let image = lb.pad_rgb(&color_to_rgb_image(&request.image));
        let mask = lb.pad_mask(&mask_to_gray(&request.mask));
        let body = json!({
            "init_images": [b64_encode(&png(&image)?)],
            "mask": b64_encode(&png(&mask)?),
            "prompt": request.prompt.as_str(),
            "seed": request.seed.map_or(-1, |s| s as i64),
            "width": lb.size,
            "height": lb.size,
            "denoising_strength": 1.0,
            "inpainting_fill": 1,
            "inpaint_full_res": false,
            "inpainting_mask_invert": 0,
            "mask_blur": 0,
        });
        let resp = self.send(request, self.client.post(&self.config.endpoint).json(&body))?;
        let parsed: WebuiResponse = resp.json().map_err(|e| self.fail(request, e.to_string()))?;
        let first = parsed
            .images
            .first()
            .ok_or_else(|| self.fail(request, "response contained no images"))?;
        Ok(rgb_image_to_color(
            &lb.unpad_rgb(&self.decode(request, first)?)?,
        ))
    }

    fn openai_edits(&self, request: &InpaintRequest) -> Result<ColorImage> {
        let lb = Letterbox::new(
            request.image.width() as u32,
            request.image.height() as u32,
            self.config.square_size,
        );
        let image = lb.pad_rgb(&color_to_rgb_image(&request.image));
        let mask = lb.pad_mask(&mask_to_gray(&request.mask));
        let rgba = RgbaImage::from_fn(lb.size, lb.size, |x, y| {
            let p = image.get_pixel(x, y).0;
            let alpha = if mask.get_pixel(x, y).0[0] > 127 {
                0
            } else {
                255
            };
            Rgba([p[0], p[1], p[2], alpha])
        });
        let part = reqwest::blocking::multipart::Part::bytes(png(&rgba)?)
            .file_name("image.png")
            .mime_str("image/png")
            .map_err(|e| self.fail(request, e.to_string()))?;
        let form = reqwest::blocking::multipart::Form::new()
            .part("image", part)
            .text("prompt", request.prompt.as_str().to_string())
            .text("n", "1")
            .text("size", format!("{0}x{0}", lb.size))
            .text("response_format", "b64_json");
        let resp = self.send(
            request,
            self.client.post(&self.config.endpoint).multipart(form),
        )?;
        let parsed: EditsResponse = resp.json().map_err(|e| self.fail(request, e.to_string()))?;
        let first = parsed
            .data
            .first()
            .ok_or_else(|| self.fail(request, "response contained no images"))?;
        Ok(rgb_image_to_color(
            &lb.unpad_rgb(&self.decode(request, &first.b64_json)?)?,
        ))
    }
}

fn png<P, C>(img: &image::ImageBuffer<P, C>) -> Result<Vec<u8>>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

impl InpaintBackend for RemoteBackend {
    fn id(&self) -> String {
        format!(
            "remote:{:?}:{}:{}",
            self.config.format, self.config.square_size, self.config.endpoint
        )
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<ColorImage> {
        match self.config.format {
            WireFormat::Generic => self.generic(request),
            WireFormat::StableDiffusionWebui => self.webui(request),
            WireFormat::OpenaiEdits => self.openai_edits(request),
        }
    }
}
