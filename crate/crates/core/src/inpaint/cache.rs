use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::ColorImage;
use crate::net::{decode_png_rgb, encode_png_rgb};

use super::{InpaintBackend, InpaintRequest};

/// Hex SHA-256 over the backend id, image dimensions and bytes, mask,
/// prompt and seed.
pub fn cache_key(backend_id: &str, request: &InpaintRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"ric-inpaint-v1\0");
    h.update(backend_id.as_bytes());
    h.update([0]);
    h.update((request.image.width() as u64).to_le_bytes());
    h.update((request.image.height() as u64).to_le_bytes());
    for px in request.image.iter() {
        h.update(px);
    }
    let mask: Vec<u8> = request.mask.iter().map(|&m| m as u8).collect();
    h.update(&mask);
    h.update(request.prompt.as_str().as_bytes());
    h.update([0]);
    match request.seed {
        Some(s) => {
            h.update([1]);
            h.update(s.to_le_bytes());
        }
        None => h.update([0]),
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Content-addressed disk cache in front of another backend. Entries live
/// at `<dir>/<first two hex chars>/<key>.png`. Concurrent requests for the
/// same key reach the inner backend at most once.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    requests: AtomicUsize,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<B: InpaintBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            requests: AtomicUsize::new(0),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of calls forwarded to the inner backend.
    pub fn backend_requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.png"))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    fn load(&self, path: &Path, request: &InpaintRequest) -> Option<ColorImage> {
        let bytes = fs::read(path).ok()?;
        match decode_png_rgb(&bytes) {
            Ok(img) if img.same_dims(&request.image) => Some(img),
            _ => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    fn store(&self, path: &Path, image: &ColorImage) -> Result<()> {
        let parent = path.parent().expect("entry has a parent directory");
        fs::create_dir_all(parent)?;
        // Write-then-rename so readers never see a partial file.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, encode_png_rgb(image)?)?;
        fs::rename(&tmp, path).map_err(Error::from)
    }
}

impl<B: InpaintBackend> InpaintBackend for CachedBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<ColorImage> {
        let key = cache_key(&self.inner.id(), request);
        let path = self.entry_path(&key);
        let lock = self.lock_for(&key);
        let _guard = lock.lock().unwrap();
        if let Some(hit) = self.load(&path, request) {
            log::debug!("inpaint cache hit {key}");
            return Ok(hit);
        }
        self.requests.fetch_add(1, Ordering::SeqCst);
        let out = self.inner.inpaint(request)?;
        if out.same_dims(&request.image) {
            if let Err(e) = self.store(&path, &out) {
                log::warn!("could not write cache entry {}: {e}", path.display());
            }
        }
        Ok(out)
    }
}
