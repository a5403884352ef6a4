use serde::Serialize;

use super::metrics::MetricsReport;
use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::model::{train, Model, ModelConfig, TrainConfig};
use crate::scenario::Scenario;

/// Encoder/decoder pairs in table order: LSTM encoders first, then sLSTM,
/// each over sLSTM, mLSTM and LSTM decoders.
pub const ABLATION_GRID: [(CellKind, CellKind); 6] = [
    (CellKind::Lstm, CellKind::SLstm),
    (CellKind::Lstm, CellKind::MLstm),
    (CellKind::Lstm, CellKind::Lstm),
    (CellKind::SLstm, CellKind::SLstm),
    (CellKind::SLstm, CellKind::MLstm),
    (CellKind::SLstm, CellKind::Lstm),
];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub encoder: CellKind,
    pub decoder: CellKind,
    pub metrics: MetricsReport,
    pub best_epoch: usize,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Encoder, decoder, ADE and FDE columns.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<8} {:<8} {:>10} {:>10}\n", "encoder", "decoder", "ADE [m]", "FDE [m]");
        for r in &self.rows {
            s += &format!(
                "{:<8} {:<8} {:>10.4} {:>10.4}\n",
                r.encoder.to_string(),
                r.decoder.to_string(),
                r.metrics.ade,
                r.metrics.fde
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("encoder,decoder,ade,fde,best_epoch,final_train_loss\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{:?},{:?},{},{:?}\n",
                r.encoder, r.decoder, r.metrics.ade, r.metrics.fde, r.best_epoch, r.final_train_loss
            );
        }
        s
    }

    /// Row with the lowest ADE.
    pub fn best(&self) -> Option<&AblationRow> {
        self.rows.iter().min_by(|a, b| a.metrics.ade.total_cmp(&b.metrics.ade))
    }
}

/// Trains and evaluates every pair in `grid` with the same seed, data and
/// budget. Metrics come from `test`.
pub fn ablate(
    train_set: &[Scenario],
    val_set: &[Scenario],
    test_set: &[Scenario],
    base: &ModelConfig,
    budget: &TrainConfig,
    grid: &[(CellKind, CellKind)],
) -> Result<AblationTable> {
    if grid.is_empty() {
        return Err(Error::Empty("ablation grid".into()));
    }
    if test_set.is_empty() {
        return Err(Error::Empty("ablation test set".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &(encoder, decoder) in grid {
        let cfg = ModelConfig {
            encoder,
            decoder,
            ..base.clone()
        };
        let out = train(Model::new(cfg)?, train_set, val_set, budget)?;
        let preds = out.model.predict_all(test_set, budget.threads)?;
        let metrics = MetricsReport::from_predictions(&preds, test_set, out.model.config.variant, out.model.config.fingerprint())?;
        rows.push(AblationRow {
            encoder,
            decoder,
            metrics,
            best_epoch: out.best_epoch,
            final_train_loss: out.history.last().map_or(f64::NAN, |h| h.train_loss),
        });
    }
    Ok(AblationTable { rows })
}
