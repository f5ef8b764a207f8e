use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Calibration,
    Ingest,
    Trajectory,
    Scene,
    Render,
    Output,
    Synth,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

/// A failure tagged with the stage that raised it.
#[derive(Debug, Clone, Error, Serialize)]
#[error("[{stage}] {code}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub code: String,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Stage::Config, "invalid_config", message)
    }

    pub fn io(stage: Stage, path: &Path, e: impl fmt::Display) -> Self {
        Self::new(stage, "io", format!("{}: {e}", path.display()))
    }

    /// 1 for configuration problems, 2 for everything that fails mid-run.
    pub fn exit_code(&self) -> i32 {
        if self.stage == Stage::Config {
            1
        } else {
            2
        }
    }
}
