use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Prediction, Variant};
use crate::scenario::Scenario;

/// One trajectory: `t_f` positions.
pub type Trajectory = Vec<[f64; 2]>;

/// Horizons reported by default, seconds.
pub const REPORT_HORIZONS: [u32; 5] = [1, 2, 3, 4, 5];

fn check(preds: &[Trajectory], gts: &[Trajectory]) -> Result<usize> {
    if preds.is_empty() || gts.is_empty() {
        return Err(Error::Empty("metric input".into()));
    }
    let t_f = gts[0].len();
    let mismatch = preds.len() != gts.len()
        || t_f == 0
        || preds.iter().chain(gts).any(|p| p.len() != t_f);
    if mismatch {
        let len = |s: &[Trajectory]| s.first().map_or(0, Vec::len);
        return Err(Error::Shape {
            op: "metric",
            lhs: vec![preds.len(), len(preds), 2],
            rhs: vec![gts.len(), t_f, 2],
        });
    }
    Ok(t_f)
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Mean Euclidean error over every scenario and step.
pub fn ade(preds: &[Trajectory], gts: &[Trajectory]) -> Result<f64> {
    let t_f = check(preds, gts)?;
    let mut sum = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        for t in 0..t_f {
            sum += dist(p[t], g[t]);
        }
    }
    Ok(sum / (preds.len() * t_f) as f64)
}

/// Mean Euclidean error at the last step.
pub fn fde(preds: &[Trajectory], gts: &[Trajectory]) -> Result<f64> {
    let t_f = check(preds, gts)?;
    let sum: f64 = preds.iter().zip(gts).map(|(p, g)| dist(p[t_f - 1], g[t_f - 1])).sum();
    Ok(sum / preds.len() as f64)
}

/// `sqrt(mean_n(dx² + dy²))` at 1-based step `step`.
pub fn rmse_at(preds: &[Trajectory], gts: &[Trajectory], step: usize) -> Result<f64> {
    let t_f = check(preds, gts)?;
    if step == 0 || step > t_f {
        return Err(Error::Config(format!("step {step} is outside the horizon 1..={t_f}")));
    }
    let k = step - 1;
    let mut sum = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let (dx, dy) = (p[k][0] - g[k][0], p[k][1] - g[k][1]);
        sum += dx * dx + dy * dy;
    }
    Ok((sum / preds.len() as f64).sqrt())
}

/// Step index of a horizon given in seconds.
pub fn horizon_step(seconds: f64, dt: f64, t_f: usize) -> Result<usize> {
    let k = (seconds / dt).round();
    if !(seconds > 0.0) || (k * dt - seconds).abs() > 1e-9 || k < 1.0 || k as usize > t_f {
        return Err(Error::Config(format!(
            "horizon {seconds} s is not a step within (0, {}] s at dt = {dt}",
            t_f as f64 * dt
        )));
    }
    Ok(k as usize)
}

/// Mean error per step, averaged over scenarios.
pub fn per_step_errors(preds: &[Trajectory], gts: &[Trajectory]) -> Result<Vec<f64>> {
    let t_f = check(preds, gts)?;
    let mut out = vec![0.0; t_f];
    for (p, g) in preds.iter().zip(gts) {
        for (t, e) in out.iter_mut().enumerate() {
            *e += dist(p[t], g[t]);
        }
    }
    let n = preds.len() as f64;
    out.iter_mut().for_each(|e| *e /= n);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ade: f64,
    pub fde: f64,
    /// Horizon in whole seconds to RMSE; horizons past `t_f·dt` are absent.
    pub rmse_at: BTreeMap<u32, f64>,
    pub n_scenarios: usize,
    pub variant: Variant,
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn from_trajectories(
        preds: &[Trajectory],
        gts: &[Trajectory],
        dt: f64,
        variant: Variant,
        fingerprint: String,
    ) -> Result<Self> {
        let t_f = check(preds, gts)?;
        let mut rmse = BTreeMap::new();
        for h in REPORT_HORIZONS {
            if let Ok(k) = horizon_step(h as f64, dt, t_f) {
                rmse.insert(h, rmse_at(preds, gts, k)?);
            }
        }
        let report = Self {
            ade: ade(preds, gts)?,
            fde: fde(preds, gts)?,
            rmse_at: rmse,
            n_scenarios: preds.len(),
            variant,
            fingerprint,
        };
        report.validate()?;
        Ok(report)
    }

    /// Pairs predictions with scenarios by position; ids must agree.
    pub fn from_predictions(
        preds: &[Prediction],
        scenarios: &[Scenario],
        variant: Variant,
        fingerprint: String,
    ) -> Result<Self> {
        if preds.len() != scenarios.len() {
            return Err(Error::Shape {
                op: "evaluate",
                lhs: vec![preds.len()],
                rhs: vec![scenarios.len()],
            });
        }
        for (p, s) in preds.iter().zip(scenarios) {
            if p.scenario_id != s.scenario_id {
                return Err(Error::Format(format!(
                    "prediction for '{}' paired with scenario '{}'",
                    p.scenario_id, s.scenario_id
                )));
            }
        }
        let dt = scenarios.first().map_or(0.2, |s| s.dt);
        if scenarios.iter().any(|s| s.dt != dt) {
            return Err(Error::Config("scenarios mix different time steps".into()));
        }
        let p: Vec<Trajectory> = preds.iter().map(|p| p.positions.clone()).collect();
        let g: Vec<Trajectory> = scenarios.iter().map(Scenario::future_positions).collect();
        Self::from_trajectories(&p, &g, dt, variant, fingerprint)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.ade) || !ok(self.fde) || !self.rmse_at.values().all(|v| ok(*v)) {
            return Err(Error::NonFinite(format!("metrics {self:?}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
