//! Experiments, configuration files and artifact output on top of
//! `ddrsim-core`.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;
use std::time::Instant;

pub use ddrsim_core as core;

use config::RunConfig;
use experiments::Experiment;
use output::{sha256_hex, ArtifactDir, Manifest, PLOT_TEMPLATE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] ddrsim_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for physics and runtime failures, 2 for usage and config errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Physics(_) | CliError::Io(_) => 1,
        }
    }
}

/// Run one experiment into `out` on a pool of `jobs` threads and write
/// the resolved config, a plotting template and the manifest.
pub fn run_experiment(exp: Experiment, cfg: &RunConfig, out: &Path, jobs: usize) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let mut dir = ArtifactDir::create(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} threads: {e}")))?;
    let summary = pool.install(|| experiments::run(exp, cfg, &mut dir))?;
    let config_text = cfg.to_toml();
    dir.write_bytes("config.toml", config_text.as_bytes())?;
    dir.write_bytes("plot.py", PLOT_TEMPLATE.as_bytes())?;
    let manifest = Manifest {
        experiment: exp.name().into(),
        ddrsim_version: env!("CARGO_PKG_VERSION").into(),
        core_version: ddrsim_core::VERSION.into(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seed: cfg.seed,
        jobs,
        wall_time_s: start.elapsed().as_secs_f64(),
        rerun: format!("ddrsim run {} --config config.toml", exp.name()),
        artifacts: dir.artifacts().to_vec(),
        summary,
    };
    dir.write_manifest(&manifest)?;
    Ok(manifest)
}
