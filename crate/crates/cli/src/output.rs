//! Metric files. Every file is UTF-8 CSV with a header row.

use std::fs;
use std::path::Path;

use relabel_core::trainer::StepRecord;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const REWARDS: &str = "rewards.csv";
pub const CORRECTION_ACCURACY: &str = "correction_accuracy.csv";
pub const FINAL: &str = "final.csv";
pub const CONFIG_RESOLVED: &str = "config_resolved.json";
pub const SWEEP: &str = "sweep.csv";

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

/// `epoch,step,lcr,nla,composite,q`
pub fn write_rewards(dir: &Path, records: &[StepRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join(REWARDS))?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["epoch", "step", "lcr", "nla", "composite", "q"])?;
    }
    w.flush()?;
    Ok(())
}

/// `step,accuracy`, step 0 being the input labels.
pub fn write_correction_accuracy(dir: &Path, trace: &[f64]) -> Result<(), CliError> {
    write_series(&dir.join(CORRECTION_ACCURACY), ["step", "accuracy"], trace)
}

/// Two-column series indexed from 0.
pub fn write_series(path: &Path, header: [&str; 2], values: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `test_accuracy,config_hash`; the accuracy is empty without a test set.
pub fn write_final(dir: &Path, test_accuracy: Option<f64>, config: &ExperimentConfig) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join(FINAL))?;
    w.write_record(["test_accuracy", "config_hash"])?;
    w.write_record([
        test_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        config.hash(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_config(dir: &Path, config: &ExperimentConfig) -> Result<(), CliError> {
    fs::write(dir.join(CONFIG_RESOLVED), config.resolved_json())?;
    Ok(())
}
