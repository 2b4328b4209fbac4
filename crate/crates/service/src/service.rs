use std::collections::VecDeque;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use fiberscope_core::geometry::PixelRect;
use fiberscope_core::raster::open_raster;

use crate::analysis::{analyze, AnalysisOutput};
use crate::config::ServiceConfig;
use crate::detector::DetectorProvider;
use crate::export::{encode_png, render_overlay, write_csv, write_mask_archive};
use crate::job::{new_job_id, JobParams, JobRecord, JobState};
use crate::store::{JobStore, StoreError};

pub const CSV_FILE: &str = "results.csv";
pub const MASKS_FILE: &str = "masks.zip";
const UPLOAD_FILE: &str = "upload";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("empty upload")]
    EmptyUpload,
    #[error("not a decodable image: {0}")]
    Undecodable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

/// An upload being written to the staging area. The directory is removed
/// unless the upload is committed as a job.
pub struct StagedUpload {
    id: String,
    dir: PathBuf,
    committed: bool,
}

impl StagedUpload {
    pub fn file(&self) -> PathBuf {
        self.dir.join(UPLOAD_FILE)
    }
}

impl Drop for StagedUpload {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

struct Shared {
    store: JobStore,
    provider: Arc<dyn DetectorProvider>,
    queue: Mutex<VecDeque<String>>,
    wake: Condvar,
    stopping: AtomicBool,
}

/// Job queue with a fixed pool of worker threads over a [`JobStore`].
pub struct Service {
    shared: Arc<Shared>,
    config: ServiceConfig,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Service {
    /// Opens the data root, recovers persisted jobs and starts the workers.
    pub fn start(config: ServiceConfig, provider: Arc<dyn DetectorProvider>) -> Result<Self, ServiceError> {
        config.validate().map_err(|e| ServiceError::InvalidParameter(e.to_string()))?;
        let (store, requeue) = JobStore::open(&config.data_root)?;
        if !requeue.is_empty() {
            log::info!("resuming {} queued job(s)", requeue.len());
        }
        let shared = Arc::new(Shared {
            store,
            provider,
            queue: Mutex::new(requeue.into()),
            wake: Condvar::new(),
            stopping: AtomicBool::new(false),
        });
        let workers = (0..config.workers)
            .map(|i| {
                let shared = shared.clone();
                std::thread::Builder::new()
                    .name(format!("fiberscope-worker-{i}"))
                    .spawn(move || worker_loop(&shared))
                    .map_err(|e| ServiceError::Internal(format!("cannot start worker: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            shared,
            config,
            workers: Mutex::new(workers),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn provider(&self) -> &dyn DetectorProvider {
        self.shared.provider.as_ref()
    }

    pub fn store(&self) -> &JobStore {
        &self.shared.store
    }

    pub fn stage_upload(&self) -> Result<StagedUpload, ServiceError> {
        let id = new_job_id();
        let dir = self.shared.store.staging_dir().join(&id);
        fs::create_dir_all(&dir).map_err(|e| ServiceError::Internal(format!("{}: {e}", dir.display())))?;
        Ok(StagedUpload {
            id,
            dir,
            committed: false,
        })
    }

    /// Checks the staged file and turns it into a queued job.
    pub fn commit_upload(
        &self,
        mut staged: StagedUpload,
        original_name: Option<String>,
        params: JobParams,
    ) -> Result<JobRecord, ServiceError> {
        params.validate().map_err(ServiceError::InvalidParameter)?;
        let file = staged.file();
        let len = fs::metadata(&file).map(|m| m.len()).unwrap_or(0);
        if len == 0 {
            return Err(ServiceError::EmptyUpload);
        }
        let ext = probe_image(&file)?;
        let input = format!("input.{ext}");
        fs::rename(&file, staged.dir.join(&input)).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let record = JobRecord::new(staged.id.clone(), input, original_name, params);
        self.shared.store.insert(record.clone(), &staged.dir)?;
        staged.committed = true;
        self.enqueue(&record.id);
        Ok(record)
    }

    /// Submits an in-memory image.
    pub fn submit_bytes(&self, bytes: &[u8], original_name: Option<String>, params: JobParams) -> Result<JobRecord, ServiceError> {
        let staged = self.stage_upload()?;
        fs::write(staged.file(), bytes).map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.commit_upload(staged, original_name, params)
    }

    fn enqueue(&self, id: &str) {
        self.shared.queue.lock().expect("queue poisoned").push_back(id.to_string());
        self.shared.wake.notify_one();
    }

    pub fn job(&self, id: &str) -> Result<JobRecord, ServiceError> {
        Ok(self.shared.store.get(id)?)
    }

    pub fn jobs(&self) -> Vec<JobRecord> {
        self.shared.store.list()
    }

    pub fn results(&self, id: &str) -> Result<Arc<AnalysisOutput>, ServiceError> {
        Ok(self.shared.store.results(id)?)
    }

    /// Polls until the job finishes or `timeout` passes.
    pub fn wait(&self, id: &str, timeout: Duration) -> Result<JobRecord, ServiceError> {
        let deadline = Instant::now() + timeout;
        loop {
            let job = self.job(id)?;
            if job.state.is_finished() || Instant::now() >= deadline {
                return Ok(job);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    /// Path of the measurement CSV, written on first request.
    pub fn csv_path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        Ok(self.shared.store.export_file(id, CSV_FILE, |out, path| {
            let f = fs::File::create(path).map_err(|e| e.to_string())?;
            write_csv(out, std::io::BufWriter::new(f)).map_err(|e| e.to_string())
        })?)
    }

    /// Path of the mask archive, written on first request.
    pub fn masks_path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        Ok(self.shared.store.export_file(id, MASKS_FILE, |out, path| {
            let f = fs::File::create(path).map_err(|e| e.to_string())?;
            let w = write_mask_archive(out, std::io::BufWriter::new(f)).map_err(|e| e.to_string())?;
            w.into_inner().map_err(|e| e.to_string())?.sync_all().map_err(|e| e.to_string())
        })?)
    }

    /// Input image with detections at or above `cutoff` drawn on it, as PNG.
    pub fn overlay_png(&self, id: &str, cutoff: f64) -> Result<Vec<u8>, ServiceError> {
        if !(0.0..=1.0).contains(&cutoff) {
            return Err(ServiceError::InvalidParameter(format!("conf must be in [0,1], got {cutoff}")));
        }
        let output = self.results(id)?;
        let record = self.job(id)?;
        let source = open_raster(&self.shared.store.input_path(&record)).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let (w, h) = source.dimensions();
        let mut image = source
            .read_window(PixelRect::new(0, 0, w, h))
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        render_overlay(&mut image, &output, cutoff);
        encode_png(&image).map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// Stops the workers after their current job. Queued jobs stay queued
    /// on disk and resume at the next start.
    pub fn shutdown(&self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        self.shared.wake.notify_all();
        let handles: Vec<_> = self.workers.lock().expect("worker list poisoned").drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Reads only the header; returns the file extension for the format.
fn probe_image(path: &Path) -> Result<&'static str, ServiceError> {
    let reader = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let format = reader
        .format()
        .ok_or_else(|| ServiceError::Undecodable("unrecognised image format".into()))?;
    let ext = format.extensions_str().first().copied().unwrap_or("img");
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| ServiceError::Undecodable(e.to_string()))?;
    if w == 0 || h == 0 {
        return Err(ServiceError::Undecodable("image has no pixels".into()));
    }
    Ok(ext)
}

fn worker_loop(shared: &Shared) {
    loop {
        let id = {
            let mut q = shared.queue.lock().expect("queue poisoned");
            loop {
                if shared.stopping.load(Ordering::SeqCst) {
                    return;
                }
                if let Some(id) = q.pop_front() {
                    break id;
                }
                q = shared.wake.wait(q).expect("queue poisoned");
            }
        };
        run_job(shared, &id);
    }
}

fn run_job(shared: &Shared, id: &str) {
    let record = match shared.store.transition(id, JobState::Running, None) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("job {id}: {e}");
            return;
        }
    };
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<AnalysisOutput, String> {
        let detector = shared.provider.detector(&record.params)?;
        let source = open_raster(&shared.store.input_path(&record)).map_err(|e| e.to_string())?;
        analyze(detector.as_ref(), source.as_ref(), &record.params).map_err(|e| e.to_string())
    }))
    .unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(format!("internal error: {msg}"))
    });
    let result = match outcome {
        Ok(output) => {
            let n = output.detection_count();
            shared
                .store
                .save_results(id, output)
                .and_then(|_| shared.store.transition(id, JobState::Done, None))
                .map(|_| log::info!("job {id}: {n} detections in {:.2?}", started.elapsed()))
        }
        Err(message) => {
            log::warn!("job {id} failed: {message}");
            shared.store.transition(id, JobState::Failed, Some(message)).map(|_| ())
        }
    };
    if let Err(e) = result {
        log::error!("job {id}: cannot record outcome: {e}");
        let _ = shared.store.transition(id, JobState::Failed, Some(e.to_string()));
    }
}
