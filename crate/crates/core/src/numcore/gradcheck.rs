use serde::Serialize;

use super::tape::{Tape, Var};
use super::tensor::{DiffTensor, ParamStore};
use crate::error::{Error, Result};

/// Where analytic and numeric derivatives disagree the most.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Coordinate {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    /// Worst relative error over coordinates whose gradient rises above
    /// the finite-difference noise level.
    pub max_relative_error: f64,
    /// Worst relative error over every coordinate.
    pub raw_max_relative_error: f64,
    pub worst_coordinate: Option<Coordinate>,
    pub coordinates_checked: usize,
    /// Coordinates where both derivatives sit below the noise level, e.g.
    /// parameters the output is invariant to.
    pub below_noise: usize,
    /// Coordinates whose difference stencil crosses a LeakyReLU, abs or max
    /// switch; the one-sided derivatives differ there, so they are skipped.
    pub across_switch: usize,
}

impl GradReport {
    /// Coordinates that entered the error bound.
    pub fn resolved(&self) -> usize {
        self.coordinates_checked - self.below_noise - self.across_switch
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }

    /// Combines two reports, keeping the worse coordinate.
    pub fn merge(self, other: GradReport) -> GradReport {
        let checked = self.coordinates_checked + other.coordinates_checked;
        let below = self.below_noise + other.below_noise;
        let across = self.across_switch + other.across_switch;
        let raw = self.raw_max_relative_error.max(other.raw_max_relative_error);
        let mut worst = if other.max_relative_error > self.max_relative_error {
            other
        } else {
            self
        };
        worst.coordinates_checked = checked;
        worst.below_noise = below;
        worst.across_switch = across;
        worst.raw_max_relative_error = raw;
        worst
    }
}

/// Absolute derivative magnitude that central differences cannot resolve
/// for an objective of size `value`.
pub fn noise_level(value: f64, epsilon: f64) -> f64 {
    32768.0 * f64::EPSILON * value.abs().max(1.0) / epsilon
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, store: &ParamStore) -> Result<(f64, Vec<bool>)>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let out = f(&tape, store)?;
    let v = out.scalar();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("objective evaluated to {v}")));
    }
    Ok((v, tape.switch_pattern()))
}

/// Central-difference check of every trainable coordinate in `store`.
pub fn grad_check_params<F>(f: F, store: &ParamStore, epsilon: f64) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let (analytic, noise, pattern) = {
        let tape = Tape::new();
        let out = f(&tape, store)?;
        let v = out.scalar();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {v}")));
        }
        (tape.backward(out)?.flat_param_grads(store), noise_level(v, epsilon), tape.switch_pattern())
    };

    let mut probe = store.clone();
    let mut report = GradReport {
        max_relative_error: 0.0,
        raw_max_relative_error: 0.0,
        worst_coordinate: None,
        coordinates_checked: 0,
        below_noise: 0,
        across_switch: 0,
    };
    let mut offset = 0;
    for id in store.ids() {
        let len = store.get(id).len();
        if !store.get(id).requires_grad() {
            offset += len;
            continue;
        }
        for i in 0..len {
            let x0 = store.get(id).values()[i];
            probe.get_mut(id).values_mut()[i] = x0 + epsilon;
            let (up, up_pattern) = evaluate(&f, &probe)?;
            probe.get_mut(id).values_mut()[i] = x0 - epsilon;
            let (down, down_pattern) = evaluate(&f, &probe)?;
            probe.get_mut(id).values_mut()[i] = x0;

            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[offset + i];
            let err = relative_error(a, numeric);
            report.coordinates_checked += 1;
            report.raw_max_relative_error = report.raw_max_relative_error.max(err);
            if up_pattern != pattern || down_pattern != pattern {
                report.across_switch += 1;
                continue;
            }
            if a.abs().max(numeric.abs()) <= noise {
                report.below_noise += 1;
                if report.worst_coordinate.is_none() {
                    report.worst_coordinate = Some(Coordinate {
                        tensor: store.name(id).to_string(),
                        index: i,
                        analytic: a,
                        numeric,
                    });
                }
                continue;
            }
            if err > report.max_relative_error || report.worst_coordinate.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst_coordinate = Some(Coordinate {
                    tensor: store.name(id).to_string(),
                    index: i,
                    analytic: a,
                    numeric,
                });
            }
        }
        offset += len;
    }
    Ok(report)
}

/// Central-difference check of a scalar function of loose tensors.
pub fn grad_check<F>(f: F, inputs: &[DiffTensor], epsilon: f64) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut store = ParamStore::new();
    for (i, t) in inputs.iter().enumerate() {
        store.add(format!("input{i}"), t.clone());
    }
    grad_check_params(
        |tape, ps| {
            let vars: Vec<Var<'_>> = ps.ids().map(|id| tape.param(ps, id)).collect();
            f(tape, &vars)
        },
        &store,
        epsilon,
    )
}
