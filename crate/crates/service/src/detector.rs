use std::path::Path;
use std::sync::Arc;

use fiberscope_core::inference::{ComponentDetector, Device, InferenceError, ModelSession, SessionDetector, TileDetector};

use crate::job::JobParams;

/// Builds the per-job tile detector from the job's parameter snapshot.
pub trait DetectorProvider: Send + Sync {
    fn detector(&self, params: &JobParams) -> Result<Box<dyn TileDetector>, String>;

    fn describe(&self) -> String;
}

/// A loaded ONNX model; the job's inference thresholds are applied per job.
pub struct ModelProvider {
    pub session: ModelSession,
}

impl ModelProvider {
    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        Ok(Self {
            session: ModelSession::load(path, Device::Cpu, None)?,
        })
    }
}

impl DetectorProvider for ModelProvider {
    fn detector(&self, params: &JobParams) -> Result<Box<dyn TileDetector>, String> {
        Ok(Box::new(SessionDetector {
            session: self.session.clone(),
            params: params.inference,
        }))
    }

    fn describe(&self) -> String {
        match &self.session.model_path {
            Some(p) => format!("model {}", p.display()),
            None => "model".into(),
        }
    }
}

/// Model-free dark-component detector, for demos and smoke tests.
pub struct ComponentProvider(pub ComponentDetector);

impl DetectorProvider for ComponentProvider {
    fn detector(&self, _params: &JobParams) -> Result<Box<dyn TileDetector>, String> {
        Ok(Box::new(self.0))
    }

    fn describe(&self) -> String {
        "component detector (no model)".into()
    }
}

/// Any closure can act as a provider, which lets tests inject detections.
impl<F> DetectorProvider for F
where
    F: Fn(&JobParams) -> Result<Box<dyn TileDetector>, String> + Send + Sync,
{
    fn detector(&self, params: &JobParams) -> Result<Box<dyn TileDetector>, String> {
        self(params)
    }

    fn describe(&self) -> String {
        "custom detector".into()
    }
}

/// The model named in the config, else the component detector.
pub fn provider_for(model: Option<&Path>) -> Result<Arc<dyn DetectorProvider>, InferenceError> {
    match model {
        Some(path) => Ok(Arc::new(ModelProvider::load(path)?)),
        None => Ok(Arc::new(ComponentProvider(ComponentDetector::default()))),
    }
}
