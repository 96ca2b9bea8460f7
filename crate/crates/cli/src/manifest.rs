use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{DatagenConfig, EvalConfig, PlotConfig, TrainRunConfig};
use crate::failure::Failure;

pub const BUILD_ID: &str = env!("OBJDYN_BUILD_ID");

/// A command together with everything it resolved to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum Run {
    Datagen(DatagenConfig),
    Train(TrainRunConfig),
    Eval(EvalConfig),
    Plot(PlotConfig),
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Datagen(_) => "datagen",
            Run::Train(_) => "train",
            Run::Eval(_) => "eval",
            Run::Plot(_) => "plot",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Run::Datagen(c) => Some(c.seed),
            Run::Train(c) => Some(c.train.seed),
            Run::Eval(c) => Some(c.seed),
            Run::Plot(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Succeeded,
    Failed,
}

/// Record of one invocation, written before any work starts and updated when
/// it ends. `objdyn replay` re-executes the recorded run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: Run,
    pub build: String,
    pub seed: Option<u64>,
    pub argv: Vec<String>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: Option<f64>,
    pub status: Status,
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip)]
    path: PathBuf,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    /// Writes a fresh manifest to `path`.
    pub fn start(run: Run, path: PathBuf) -> Result<Self, Failure> {
        let m = RunManifest {
            seed: run.seed(),
            run,
            build: BUILD_ID.to_owned(),
            argv: std::env::args().collect(),
            started: now(),
            finished: None,
            status: Status::Running,
            error: None,
            outputs: Vec::new(),
            path,
        };
        m.write()?;
        Ok(m)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn finish(&mut self, result: &Result<Vec<PathBuf>, Failure>) -> Result<(), Failure> {
        self.finished = Some(now());
        match result {
            Ok(outputs) => {
                self.status = Status::Succeeded;
                self.outputs = outputs.clone();
            }
            Err(e) => {
                self.status = Status::Failed;
                self.error = Some(e.message.clone());
            }
        }
        self.write()
    }

    fn write(&self) -> Result<(), Failure> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&self.path, text + "\n")
            .map_err(|e| Failure::data(format!("cannot write {}: {e}", self.path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        let mut m: RunManifest = serde_json::from_str(&text).map_err(|e| {
            Failure::data(format!("malformed run manifest {}: {e}", path.display()))
        })?;
        m.path = path.to_owned();
        Ok(m)
    }
}
