//! Experiment runner: configuration files, named presets, basis cache and
//! report emission.

pub mod cache;
pub mod config;
pub mod error;
pub mod experiments;
pub mod presets;
pub mod report;

use std::path::Path;

use cache::Cache;
use config::ExperimentConfig;
use error::CliError;
use report::ReportBundle;

/// Resolves `preset:NAME` or reads a config file.
pub fn load_config(source: &str) -> Result<ExperimentConfig, CliError> {
    let text = match source.strip_prefix("preset:") {
        Some(name) => presets::preset(name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))?
            .to_string(),
        None => std::fs::read_to_string(source).map_err(|e| CliError::Io(format!("{source}: {e}")))?,
    };
    Ok(config::parse(&text)?)
}

/// Executes a configuration and writes its report into `out`.
pub fn run(cfg: ExperimentConfig, cache: Cache, out: &Path) -> Result<ReportBundle, CliError> {
    let svg = cfg.svg;
    let bundle = experiments::Runner::new(cfg, cache)?.run()?;
    bundle.write(out, svg)?;
    Ok(bundle)
}
