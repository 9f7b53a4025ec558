//! Pipeline configuration, loadable from TOML or JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::depth::{
    DepthSolveParams, GeometricNormals, NormalPredictor, RemoteNormalPredictor, DEFAULT_EDGE_JUMP,
};
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::inpaint::{
    CachedBackend, Captioner, InpaintBackend, MockBackend, RemoteBackend, RemoteBackendConfig,
    RemoteCaptioner, RetryPolicy,
};
use crate::masking::FrustumParams;
use crate::net::HttpSettings;
use crate::view_select::ViewSelectionParams;

pub const DEFAULT_API_KEY_ENV: &str = "RIC_INPAINT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock,
    Remote(RemoteBackendConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalsConfig {
    Geometric {
        #[serde(default = "default_edge_jump")]
        edge_jump: f64,
    },
    Remote {
        endpoint: String,
        #[serde(default)]
        http: HttpSettings,
    },
}

fn default_edge_jump() -> f64 {
    DEFAULT_EDGE_JUMP
}

impl Default for NormalsConfig {
    fn default() -> Self {
        Self::Geometric {
            edge_jump: DEFAULT_EDGE_JUMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionerConfig {
    pub endpoint: String,
    #[serde(default)]
    pub http: HttpSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryConfig {
    pub attempts: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        let p = RetryPolicy::default();
        Self {
            attempts: p.attempts,
            base_delay_ms: p.base_delay.as_millis() as u64,
        }
    }
}

impl From<RetryConfig> for RetryPolicy {
    fn from(c: RetryConfig) -> Self {
        RetryPolicy {
            attempts: c.attempts.max(1),
            base_delay: Duration::from_millis(c.base_delay_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub view_selection: ViewSelectionParams,
    pub frustum: FrustumParams,
    pub depth: DepthSolveParams,
    pub fusion: FusionParams,
    pub normals: NormalsConfig,
    pub backend: BackendConfig,
    pub captioner: Option<CaptionerConfig>,
    /// Environment variable holding the bearer token for remote services.
    pub api_key_env: String,
    /// On-disk inpainting response cache.
    pub cache_dir: Option<PathBuf>,
    /// Base seed; viewpoint `k` uses `seed + k`.
    pub seed: Option<u64>,
    /// Worker threads for per-view processing; defaults to the number of viewpoints.
    pub workers: Option<usize>,
    pub retry: RetryConfig,
    pub debug_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            view_selection: ViewSelectionParams::default(),
            frustum: FrustumParams::default(),
            depth: DepthSolveParams::default(),
            fusion: FusionParams::default(),
            normals: NormalsConfig::default(),
            backend: BackendConfig::Mock,
            captioner: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            cache_dir: None,
            seed: Some(0),
            workers: None,
            retry: RetryConfig::default(),
            debug_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.view_selection.validate()?;
        self.frustum.validate()?;
        self.depth.validate()?;
        self.fusion.validate()?;
        if self.workers == Some(0) {
            return Err(Error::InvalidInput("workers must be at least 1".into()));
        }
        if let NormalsConfig::Geometric { edge_jump } = self.normals {
            if !(edge_jump > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "edge_jump must be positive, got {edge_jump}"
                )));
            }
        }
        Ok(())
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str_auto(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Format {
                path: "<inline>".into(),
                reason: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: Self = if json {
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry.into()
    }

    /// The configured backend, wrapped in the response cache when `cache_dir` is set.
    pub fn build_backend(&self) -> Result<Arc<dyn InpaintBackend>> {
        let inner: Arc<dyn InpaintBackend> = match &self.backend {
            BackendConfig::Mock => Arc::new(MockBackend),
            BackendConfig::Remote(cfg) => {
                Arc::new(RemoteBackend::new(cfg.clone(), self.api_key())?)
            }
        };
        Ok(match &self.cache_dir {
            Some(dir) => Arc::new(CachedBackend::new(inner, dir)),
            None => inner,
        })
    }

    pub fn build_normals(&self) -> Result<Arc<dyn NormalPredictor>> {
        Ok(match &self.normals {
            NormalsConfig::Geometric { edge_jump } => Arc::new(GeometricNormals {
                edge_jump: *edge_jump,
            }),
            NormalsConfig::Remote { endpoint, http } => Arc::new(RemoteNormalPredictor::new(
                endpoint.clone(),
                self.api_key(),
                http,
            )?),
        })
    }

    pub fn build_captioner(&self) -> Result<Option<Arc<dyn Captioner>>> {
        self.captioner
            .as_ref()
            .map(|c| -> Result<Arc<dyn Captioner>> {
                Ok(Arc::new(RemoteCaptioner::new(
                    c.endpoint.clone(),
                    self.api_key(),
                    &c.http,
                )?))
            })
            .transpose()
    }
}
