use std::time::{SystemTime, UNIX_EPOCH};

use fiberscope_core::inference::InferenceParams;
use fiberscope_core::morphometry::{CalibrationConfig, MorphometryConfig};
use fiberscope_core::pipeline::{MergeParams, DEFAULT_DEDUP_IOU, DEFAULT_OVERLAP, DEFAULT_TILE_SIZE};
use serde::{Deserialize, Serialize};

/// Parameter snapshot taken when a job is created.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobParams {
    #[serde(flatten)]
    pub inference: InferenceParams,
    pub tile_size: usize,
    pub overlap: usize,
    pub dedup_iou: f64,
    /// Objects within this many pixels of the image edge are dropped.
    pub border_margin: usize,
    pub microns_per_pixel: f64,
    pub morphometry: MorphometryConfig,
}

impl Default for JobParams {
    fn default() -> Self {
        Self {
            inference: InferenceParams::default(),
            tile_size: DEFAULT_TILE_SIZE,
            overlap: DEFAULT_OVERLAP,
            dedup_iou: DEFAULT_DEDUP_IOU,
            border_margin: 0,
            microns_per_pixel: CalibrationConfig::default().microns_per_pixel,
            morphometry: MorphometryConfig::default(),
        }
    }
}

impl JobParams {
    pub fn validate(&self) -> Result<(), String> {
        self.inference.validate().map_err(|e| e.to_string())?;
        if self.tile_size == 0 {
            return Err("tile_size must be positive".into());
        }
        if self.overlap >= self.tile_size {
            return Err(format!(
                "overlap ({}) must be smaller than tile_size ({})",
                self.overlap, self.tile_size
            ));
        }
        if !(0.0..=1.0).contains(&self.dedup_iou) {
            return Err(format!("dedup_iou must be in [0,1], got {}", self.dedup_iou));
        }
        CalibrationConfig::new(self.microns_per_pixel).map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn calibration(&self) -> CalibrationConfig {
        CalibrationConfig {
            microns_per_pixel: self.microns_per_pixel,
        }
    }

    pub fn merge(&self) -> MergeParams {
        MergeParams {
            dedup_iou: self.dedup_iou,
            border_margin: self.border_margin,
        }
    }

    /// Applies one `name=value` override, as sent in upload form fields.
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, String> {
            value
                .trim()
                .parse()
                .map_err(|_| format!("{name}: cannot parse `{value}`"))
        }
        match name {
            "preset" => {
                let preset = InferenceParams::preset(value.trim()).ok_or_else(|| format!("unknown preset `{value}`"))?;
                self.inference = preset;
            }
            "conf_threshold" | "conf" => self.inference.conf_threshold = num(name, value)?,
            "iou_threshold" => self.inference.iou_threshold = num(name, value)?,
            "mask_threshold" => self.inference.mask_threshold = num(name, value)?,
            "box_dilation" => self.inference.box_dilation = num(name, value)?,
            "tile_size" => self.tile_size = num(name, value)?,
            "overlap" => self.overlap = num(name, value)?,
            "dedup_iou" => self.dedup_iou = num(name, value)?,
            "border_margin" => self.border_margin = num(name, value)?,
            "microns_per_pixel" | "px_um" => self.microns_per_pixel = num(name, value)?,
            "length_mode" => {
                self.morphometry.length_mode = serde_json::from_value(serde_json::Value::String(value.trim().into()))
                    .map_err(|_| format!("length_mode: expected pixel_count or euclidean, got `{value}`"))?
            }
            _ => return Err(format!("unknown parameter `{name}`")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Only queued -> running -> done/failed is allowed.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }

    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

impl std::fmt::Display for JobState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
        })
    }
}

/// Contents of `job.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub state: JobState,
    /// File name of the stored input inside the job directory.
    pub input: String,
    /// Name the client uploaded the image under.
    pub original_name: Option<String>,
    pub params: JobParams,
    /// Milliseconds since the Unix epoch.
    pub created_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    pub error: Option<String>,
}

impl JobRecord {
    pub fn new(id: String, input: String, original_name: Option<String>, params: JobParams) -> Self {
        Self {
            id,
            state: JobState::Queued,
            input,
            original_name,
            params,
            created_ms: now_ms(),
            started_ms: None,
            finished_ms: None,
            error: None,
        }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn new_job_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Ids are generated hex tokens; anything else cannot name a job directory.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}
