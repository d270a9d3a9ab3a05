//! Training observers: structured logs, plan instrumentation, checkpoints.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csp::{ChannelPlan, DrawKey};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Checkpoint};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
    pub lr: f64,
    pub loss: f64,
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
}

pub trait TrainHooks {
    /// Called for every CSP draw used to build a training input.
    fn on_plan(&mut self, _key: DrawKey, _plan: &ChannelPlan) {}

    fn on_log(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _ckpt: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Appends JSON lines to a log file and writes cadence checkpoints next to
/// the final output.
pub struct FileHooks {
    log: Option<std::fs::File>,
    log_path: PathBuf,
    checkpoint_dir: Option<PathBuf>,
    saved: usize,
    echo: bool,
}

impl FileHooks {
    pub fn new(log_path: Option<&Path>, checkpoint_dir: Option<&Path>, echo: bool) -> Result<Self> {
        let log = match log_path {
            Some(p) => Some(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        Ok(Self {
            log,
            log_path: log_path.map(Path::to_path_buf).unwrap_or_default(),
            checkpoint_dir: checkpoint_dir.map(Path::to_path_buf),
            saved: 0,
            echo,
        })
    }
}

impl TrainHooks for FileHooks {
    fn on_log(&mut self, record: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("log records serialize");
        if self.echo {
            eprintln!("{line}");
        }
        if let Some(f) = &mut self.log {
            writeln!(f, "{line}").map_err(|e| Error::io(&self.log_path, e))?;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if let Some(dir) = &self.checkpoint_dir {
            self.saved += 1;
            save_checkpoint(ckpt, &dir.join(format!("step-{:08}.cspk", ckpt.meta.steps)))?;
        }
        Ok(())
    }
}

/// Records every CSP plan it sees, keyed by draw.
#[derive(Debug, Default)]
pub struct PlanRecorder {
    pub plans: Vec<(DrawKey, ChannelPlan)>,
    pub logs: Vec<LogRecord>,
}

impl TrainHooks for PlanRecorder {
    fn on_plan(&mut self, key: DrawKey, plan: &ChannelPlan) {
        self.plans.push((key, plan.clone()));
    }

    fn on_log(&mut self, record: &LogRecord) -> Result<()> {
        self.logs.push(record.clone());
        Ok(())
    }
}

/// Reads a JSON-lines training log.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Json { path: path.to_path_buf(), source: e }))
        .collect()
}
