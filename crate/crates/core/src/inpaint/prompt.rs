use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ColorImage;
use crate::net::{b64_encode, blocking_client, encode_png_rgb, HttpSettings};

pub const PROMPT_PREFIX: &str = "A photo of ";
pub const FALLBACK_PROMPT: &str = "a photo of household objects on a table";
pub const MAX_PROMPT_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Prompt(String);

impl Prompt {
    /// Rejects blank text; truncates anything past [`MAX_PROMPT_CHARS`].
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        if text.chars().count() > MAX_PROMPT_CHARS {
            log::warn!("prompt longer than {MAX_PROMPT_CHARS} characters, truncating");
            return Ok(Self(text.chars().take(MAX_PROMPT_CHARS).collect()));
        }
        Ok(Self(text))
    }

    pub fn fallback() -> Self {
        Self(FALLBACK_PROMPT.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Prompt {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Prompt::new(value)
    }
}

impl From<Prompt> for String {
    fn from(p: Prompt) -> String {
        p.0
    }
}

impl std::fmt::Display for Prompt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Image captioning service.
pub trait Captioner: Send + Sync {
    fn caption(&self, image: &ColorImage) -> Result<String>;
}

/// Prefixes a caption of the input image, or falls back to a generic
/// tabletop prompt when no captioner is configured or it fails.
pub fn make_prompt(frame_rgb: &ColorImage, captioner: Option<&dyn Captioner>) -> Prompt {
    let Some(captioner) = captioner else {
        return Prompt::fallback();
    };
    match captioner.caption(frame_rgb) {
        Ok(caption) if !caption.trim().is_empty() => {
            Prompt::new(format!("{PROMPT_PREFIX}{}", caption.trim()))
                .unwrap_or_else(|_| Prompt::fallback())
        }
        Ok(_) => {
            log::warn!("captioner returned an empty caption, using fallback prompt");
            Prompt::fallback()
        }
        Err(e) => {
            log::warn!("captioner failed ({e}), using fallback prompt");
            Prompt::fallback()
        }
    }
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    image: &'a str,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

/// JSON-over-HTTP captioner: `{image: base64 PNG}` → `{caption}`.
pub struct RemoteCaptioner {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteCaptioner {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        settings: &HttpSettings,
    ) -> Result<Self> {
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client: blocking_client(settings)?,
        })
    }
}

impl Captioner for RemoteCaptioner {
    fn caption(&self, image: &ColorImage) -> Result<String> {
        let png = b64_encode(&encode_png_rgb(image)?);
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&CaptionRequest { image: &png });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let fail = |e: String| Error::InvalidInput(format!("captioner request failed: {e}"));
        let resp = req.send().map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("HTTP {}", resp.status())));
        }
        let body: CaptionResponse = resp.json().map_err(|e| fail(e.to_string()))?;
        Ok(body.caption)
    }
}
