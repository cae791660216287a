use std::fs;
use std::path::Path;

use extprob::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::Artifact;
use crate::Cli;

/// Everything needed to reproduce a run byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub command: String,
    /// Invocation with the program name normalized to `extprob`.
    pub argv: Vec<String>,
    pub model: Option<String>,
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(cli: &Cli, mut argv: Vec<String>, artifacts: &[Artifact]) -> Self {
        if let Some(first) = argv.first_mut() {
            *first = "extprob".into();
        }
        RunManifest {
            engine_version: env!("CARGO_PKG_VERSION").into(),
            command: cli.command.name().into(),
            argv,
            model: cli.command.model_path(),
            tolerance: cli.tol,
            seed: cli.command.seed(),
            outputs: artifacts.iter().map(|a| a.name.clone()).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact], manifest: &RunManifest) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.contents).map_err(io)?;
    }
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(dir.join("manifest.json"), text).map_err(io)
}
