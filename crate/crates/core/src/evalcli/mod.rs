//! Metrics, the encoder/decoder ablation harness, gradient certification,
//! and the file formats behind the command-line tool.

mod ablate;
mod certify;
mod metrics;
mod predictions;
mod runconfig;

use rayon::prelude::*;

use crate::error::Result;
use crate::model::Model;
use crate::scenario::{balance_scenarios, extract_scenarios, to_target_frame, Scenario, Track};

pub use self::ablate::{ablate, AblationRow, AblationTable, ABLATION_GRID};
pub use self::certify::{
    certify, check_end_to_end, CertEntry, CertificationReport, CERT_SEEDS, COMPONENT_TOLERANCE, END_TO_END_TOLERANCE,
};
pub use self::metrics::{ade, fde, horizon_step, per_step_errors, rmse_at, MetricsReport, Trajectory, REPORT_HORIZONS};
pub use self::predictions::{read_predictions, read_predictions_from, write_predictions, write_predictions_to};
pub use self::runconfig::RunConfig;

/// Model predictions over `scenarios` scored against their futures.
pub fn evaluate(model: &Model, scenarios: &[Scenario], threads: Option<usize>) -> Result<MetricsReport> {
    let preds = model.predict_all(scenarios, threads)?;
    MetricsReport::from_predictions(&preds, scenarios, model.config.variant, model.config.fingerprint())
}

/// Tracks to balanced, target-frame scenarios.
pub fn preprocess(tracks: &[Track], cfg: &RunConfig) -> Result<Vec<Scenario>> {
    let raw = extract_scenarios(tracks, &cfg.extract())?;
    let framed: Vec<Scenario> = raw.par_iter().map(to_target_frame).collect::<Result<_>>()?;
    Ok(balance_scenarios(&framed, cfg.balance_seed))
}
