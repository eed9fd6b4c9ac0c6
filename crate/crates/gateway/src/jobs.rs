//! Evaluation jobs on a bounded worker pool.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::{load_suite, run_eval, write_report, BackendKind, EvalOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    pub id: String,
    pub suite: String,
    pub backend: BackendKind,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_ref: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct JobRequest {
    pub suite: String,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub script: Option<PathBuf>,
}

pub struct JobManager {
    jobs: Mutex<BTreeMap<String, EvalJob>>,
    permits: Arc<Semaphore>,
    next: AtomicU64,
    dir: PathBuf,
}

impl JobManager {
    pub fn new(dir: PathBuf, workers: usize) -> Self {
        Self {
            jobs: Mutex::new(BTreeMap::new()),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            next: AtomicU64::new(1),
            dir,
        }
    }

    pub fn get(&self, id: &str) -> Option<EvalJob> {
        self.jobs.lock().get(id).cloned()
    }

    pub fn list(&self) -> Vec<EvalJob> {
        self.jobs.lock().values().cloned().collect()
    }

    fn set(&self, id: &str, f: impl FnOnce(&mut EvalJob)) {
        if let Some(j) = self.jobs.lock().get_mut(id) {
            f(j);
        }
    }

    pub fn report_path(&self, id: &str) -> PathBuf {
        self.dir.join(id).join("report.json")
    }

    /// Queues a job and returns its initial record.
    pub fn submit(self: &Arc<Self>, req: JobRequest) -> EvalJob {
        let id = format!("job-{}", self.next.fetch_add(1, Ordering::Relaxed));
        let job = EvalJob {
            id: id.clone(),
            suite: req.suite.clone(),
            backend: req.backend,
            status: JobStatus::Queued,
            error: None,
            report_ref: None,
        };
        self.jobs.lock().insert(id.clone(), job.clone());
        let me = self.clone();
        tokio::spawn(async move {
            let Ok(_permit) = me.permits.clone().acquire_owned().await else {
                return;
            };
            me.set(&id, |j| j.status = JobStatus::Running);
            let worker = me.clone();
            let jid = id.clone();
            let outcome = tokio::task::spawn_blocking(move || {
                let scenarios = load_suite(&req.suite)?;
                let dir = worker.dir.join(&jid);
                std::fs::create_dir_all(&dir).map_err(|e| crate::GatewayError::Io(e.to_string()))?;
                let opts = EvalOptions {
                    script: req.script.clone(),
                    traces: Some(dir.join("traces.jsonl")),
                };
                let (report, timing) = run_eval(&scenarios, req.backend, &opts)?;
                let path = worker.report_path(&jid);
                write_report(&path, &report, &timing)?;
                Ok::<_, crate::GatewayError>(path)
            })
            .await;
            match outcome {
                Ok(Ok(path)) => me.set(&id, |j| {
                    j.status = JobStatus::Done;
                    j.report_ref = Some(path.display().to_string());
                }),
                Ok(Err(e)) => {
                    tracing::warn!(job = %id, error = %e, "eval job failed");
                    me.set(&id, |j| {
                        j.status = JobStatus::Failed;
                        j.error = Some(e.to_string());
                    });
                }
                Err(e) => me.set(&id, |j| {
                    j.status = JobStatus::Failed;
                    j.error = Some(format!("worker panicked: {e}"));
                }),
            }
        });
        job
    }
}
