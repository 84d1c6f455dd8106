//! Shared fixtures for the integration tests: a memorized reference model
//! trained once per test binary through the same pipeline the binary uses.

#![allow(dead_code)]

use std::sync::OnceLock;

use cu_lab::cli::{cmd_gen_world, cmd_train, ExperimentConfig, TrainSummary};
use cu_lab::model::ModelParams;
use cu_lab::world::SyntheticWorld;
use tempfile::TempDir;

pub struct Reference {
    pub config: ExperimentConfig,
    pub world: SyntheticWorld,
    pub theta: ModelParams,
    pub summary: TrainSummary,
    /// Keeps the output directory alive for the whole binary.
    pub dir: TempDir,
}

/// Default experiment with its output directory under `dir`.
pub fn config_in(dir: &TempDir) -> ExperimentConfig {
    ExperimentConfig {
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    }
}

pub fn reference() -> &'static Reference {
    static CELL: OnceLock<Reference> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = config_in(&dir);
        let world = cmd_gen_world(&config, false).unwrap();
        let (theta, summary) = cmd_train(&config, false).unwrap();
        Reference {
            config,
            world,
            theta,
            summary,
            dir,
        }
    })
}
