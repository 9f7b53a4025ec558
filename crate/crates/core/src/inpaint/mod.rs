//! Inpainting of novel views: small holes are closed locally, large regions
//! go to a pluggable backend (a remote diffusion service or an offline mock).

mod cache;
mod holes;
mod mock;
mod prompt;
mod remote;
mod telea;

use std::thread;
use std::time::Duration;

pub use cache::{cache_key, CachedBackend};
pub use holes::{closing, fill_small_holes, CLOSING_KERNEL};
pub use mock::{nearest_fill, MockBackend};
pub use prompt::{
    make_prompt, Captioner, Prompt, RemoteCaptioner, FALLBACK_PROMPT, MAX_PROMPT_CHARS,
    PROMPT_PREFIX,
};
pub use remote::{Letterbox, RemoteBackend, RemoteBackendConfig, WireFormat};
pub use telea::telea_inpaint;

use crate::error::{Error, Result};
use crate::grid::{ColorImage, Grid, Mask};

#[derive(Debug, Clone)]
pub struct InpaintRequest {
    pub image: ColorImage,
    /// `true` = inpaint.
    pub mask: Mask,
    pub prompt: Prompt,
    pub seed: Option<u64>,
    /// Viewpoint this request belongs to, for error reporting only.
    pub view_id: Option<usize>,
}

impl InpaintRequest {
    pub fn new(image: ColorImage, mask: Mask, prompt: Prompt, seed: Option<u64>) -> Result<Self> {
        if !image.same_dims(&mask) {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} vs mask {:?}",
                image.dims(),
                mask.dims()
            )));
        }
        Ok(Self {
            image,
            mask,
            prompt,
            seed,
            view_id: None,
        })
    }

    pub fn with_view(mut self, view_id: usize) -> Self {
        self.view_id = Some(view_id);
        self
    }
}

/// An image inpainting service. Implementations must be safe to call from
/// several threads at once.
pub trait InpaintBackend: Send + Sync {
    /// Stable identifier, part of the response-cache key.
    fn id(&self) -> String;

    /// Raw backend output. May differ from the input outside the mask;
    /// [`inpaint`] composites it back.
    fn inpaint(&self, request: &InpaintRequest) -> Result<ColorImage>;
}

impl<T: InpaintBackend + ?Sized> InpaintBackend for std::sync::Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<ColorImage> {
        (**self).inpaint(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Inpaints with the default retry policy.
pub fn inpaint(request: &InpaintRequest, backend: &dyn InpaintBackend) -> Result<ColorImage> {
    inpaint_with_retry(request, backend, &RetryPolicy::default())
}

/// Calls the backend with exponential backoff, then composites the result
/// through the mask so unmasked pixels are returned bit-exactly.
pub fn inpaint_with_retry(
    request: &InpaintRequest,
    backend: &dyn InpaintBackend,
    policy: &RetryPolicy,
) -> Result<ColorImage> {
    if request.mask.count_set() == 0 {
        return Ok(request.image.clone());
    }
    let mut last_error = String::new();
    for attempt in 0..policy.attempts.max(1) {
        if attempt > 0 {
            thread::sleep(policy.base_delay * (1u32 << (attempt - 1)));
        }
        match backend.inpaint(request) {
            Ok(raw) => return composite(request, &raw),
            Err(e) => {
                log::warn!(
                    "inpaint backend {} attempt {} failed for view {:?}: {e}",
                    backend.id(),
                    attempt + 1,
                    request.view_id
                );
                last_error = e.to_string();
            }
        }
    }
    Err(Error::BackendFailed {
        view: request.view_id,
        reason: last_error,
    })
}

fn composite(request: &InpaintRequest, raw: &ColorImage) -> Result<ColorImage> {
    if !raw.same_dims(&request.image) {
        return Err(Error::BackendShapeMismatch {
            expected_width: request.image.width() as u32,
            expected_height: request.image.height() as u32,
            width: raw.width() as u32,
            height: raw.height() as u32,
        });
    }
    let (w, h) = request.image.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        if *request.mask.get(x, y) {
            *raw.get(x, y)
        } else {
            *request.image.get(x, y)
        }
    }))
}
