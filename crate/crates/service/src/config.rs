use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::job::JobParams;

pub const ENV_DATA_ROOT: &str = "FIBERSCOPE_DATA_ROOT";
pub const ENV_MODEL: &str = "FIBERSCOPE_MODEL";
pub const ENV_WORKERS: &str = "FIBERSCOPE_WORKERS";
pub const ENV_BIND: &str = "FIBERSCOPE_BIND";
pub const ENV_MAX_UPLOAD: &str = "FIBERSCOPE_MAX_UPLOAD_BYTES";
pub const ENV_PX_UM: &str = "FIBERSCOPE_PX_UM";
pub const ENV_CONF: &str = "FIBERSCOPE_CONF";
pub const ENV_IOU: &str = "FIBERSCOPE_IOU";
pub const ENV_MASK_THRESHOLD: &str = "FIBERSCOPE_MASK_THRESHOLD";
pub const ENV_TILE_SIZE: &str = "FIBERSCOPE_TILE_SIZE";
pub const ENV_OVERLAP: &str = "FIBERSCOPE_OVERLAP";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub data_root: PathBuf,
    /// ONNX model; without one the service runs the model-free component
    /// detector.
    pub model: Option<PathBuf>,
    pub workers: usize,
    pub bind: String,
    pub max_upload_bytes: usize,
    /// Parameters for uploads that do not override them.
    pub defaults: JobParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("fiberscope-data"),
            model: None,
            workers: 1,
            bind: "127.0.0.1:8080".into(),
            max_upload_bytes: 4 << 30,
            defaults: JobParams::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads an optional TOML file, then applies `FIBERSCOPE_*` environment
    /// overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_toml_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(v) = get(ENV_DATA_ROOT) {
            self.data_root = PathBuf::from(v);
        }
        if let Some(v) = get(ENV_MODEL) {
            self.model = Some(PathBuf::from(v));
        }
        if let Some(v) = get(ENV_BIND) {
            self.bind = v;
        }
        if let Some(v) = get(ENV_WORKERS) {
            self.workers = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_WORKERS}: not a count: `{v}`")))?;
        }
        if let Some(v) = get(ENV_MAX_UPLOAD) {
            self.max_upload_bytes = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_MAX_UPLOAD}: not a size: `{v}`")))?;
        }
        for (key, param) in [
            (ENV_PX_UM, "microns_per_pixel"),
            (ENV_CONF, "conf_threshold"),
            (ENV_IOU, "iou_threshold"),
            (ENV_MASK_THRESHOLD, "mask_threshold"),
            (ENV_TILE_SIZE, "tile_size"),
            (ENV_OVERLAP, "overlap"),
        ] {
            if let Some(v) = get(key) {
                self.defaults
                    .set(param, &v)
                    .map_err(|e| ConfigError::Invalid(format!("{key}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        self.defaults
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("defaults: {e}")))
    }
}
