//! Point-mass kinematic layer driven by longitudinal acceleration and yaw
//! rate, plus the numerical differentiation that recovers those controls
//! from sampled positions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Real, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, v: f64, psi: f64) -> Self {
        Self { x, y, v, psi }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.psi.is_finite()
    }
}

/// Per-step controls with a fixed time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub a_x: Vec<f64>,
    pub psi_dot: Vec<f64>,
    pub dt: f64,
}

impl ControlSequence {
    pub fn new(a_x: Vec<f64>, psi_dot: Vec<f64>, dt: f64) -> Result<Self> {
        if a_x.len() != psi_dot.len() {
            return Err(Error::Shape {
                op: "controls",
                lhs: vec![a_x.len()],
                rhs: vec![psi_dot.len()],
            });
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { a_x, psi_dot, dt })
    }

    pub fn zeros(len: usize, dt: f64) -> Self {
        Self::new(vec![0.0; len], vec![0.0; len], dt).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.a_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_x.is_empty()
    }

    /// Controls `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> Self {
        Self {
            a_x: self.a_x[start..end].to_vec(),
            psi_dot: self.psi_dot[start..end].to_vec(),
            dt: self.dt,
        }
    }
}

/// Physical bounds on the controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    /// m/s²
    pub a_max: f64,
    /// rad/s
    pub psi_dot_max: f64,
}

/// Yaw-rate bound in degrees per second.
pub const YAW_RATE_LIMIT_DEG: f64 = 71.26;
/// Longitudinal acceleration bound in m/s².
pub const ACCEL_LIMIT: f64 = 9.0;

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            a_max: ACCEL_LIMIT,
            psi_dot_max: YAW_RATE_LIMIT_DEG * PI / 180.0,
        }
    }
}

impl MotionLimits {
    pub fn contains(&self, a_x: f64, psi_dot: f64) -> bool {
        a_x.abs() <= self.a_max && psi_dot.abs() <= self.psi_dot_max
    }
}

/// `bound · tanh(raw / bound)`: odd, strictly inside the bound, never flat.
pub fn saturate<R: Real>(raw: R, bound: f64) -> R {
    raw.mul_f(1.0 / bound).tanh().mul_f(bound)
}

pub fn clamp_controls(raw: &ControlSequence, limits: &MotionLimits) -> ControlSequence {
    ControlSequence {
        a_x: raw.a_x.iter().map(|&a| saturate(a, limits.a_max)).collect(),
        psi_dot: raw
            .psi_dot
            .iter()
            .map(|&w| saturate(w, limits.psi_dot_max))
            .collect(),
        dt: raw.dt,
    }
}

/// Kinematic state over any [`Real`] scalar.
#[derive(Debug, Clone, Copy)]
pub struct StateOf<R> {
    pub x: R,
    pub y: R,
    pub v: R,
    pub psi: R,
}

/// One update of the point-mass model:
///
/// ```text
/// x⁺ = x + v·cos ψ·Δt + (a·cos ψ − ψ̇·v·sin ψ)·Δt²/2
/// y⁺ = y + v·sin ψ·Δt + (a·sin ψ + ψ̇·v·cos ψ)·Δt²/2
/// v⁺ = v + a·Δt
/// ψ⁺ = ψ + ψ̇·Δt
/// ```
pub fn kinematic_step<R: Real>(s: &StateOf<R>, a_x: R, psi_dot: R, dt: f64) -> StateOf<R> {
    let c = s.psi.cos();
    let sn = s.psi.sin();
    let half_dt2 = 0.5 * dt * dt;
    let turn = psi_dot * s.v;
    StateOf {
        x: s.x + (s.v * c).mul_f(dt) + (a_x * c - turn * sn).mul_f(half_dt2),
        y: s.y + (s.v * sn).mul_f(dt) + (a_x * sn + turn * c).mul_f(half_dt2),
        v: s.v + a_x.mul_f(dt),
        psi: s.psi + psi_dot.mul_f(dt),
    }
}

/// Output of [`rollout`]: positions after each step and the full state trace
/// including the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub positions: Vec<[f64; 2]>,
    pub states: Vec<KinematicState>,
}

pub fn rollout(initial: &KinematicState, controls: &ControlSequence) -> Result<Rollout> {
    let mut s = StateOf {
        x: initial.x,
        y: initial.y,
        v: initial.v,
        psi: initial.psi,
    };
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*initial);
    let mut positions = Vec::with_capacity(controls.len());
    for (k, (&a, &w)) in controls.a_x.iter().zip(&controls.psi_dot).enumerate() {
        s = kinematic_step(&s, a, w, controls.dt);
        let st = KinematicState::new(s.x, s.y, s.v, s.psi);
        if !st.is_finite() {
            return Err(Error::Propagation { step: k });
        }
        states.push(st);
        positions.push([s.x, s.y]);
    }
    Ok(Rollout { positions, states })
}

/// Differentiable rollout on a tape. `a_x` and `psi_dot` are per-step
/// single-element vars; the result is a `[steps, 2]` position matrix.
pub fn rollout_var<'t>(
    initial: StateOf<Var<'t>>,
    a_x: &[Var<'t>],
    psi_dot: &[Var<'t>],
    dt: f64,
) -> Result<Var<'t>> {
    if a_x.len() != psi_dot.len() || a_x.is_empty() {
        return Err(Error::Shape {
            op: "rollout",
            lhs: vec![a_x.len()],
            rhs: vec![psi_dot.len()],
        });
    }
    let mut s = initial;
    let mut points = Vec::with_capacity(2 * a_x.len());
    for (k, (&a, &w)) in a_x.iter().zip(psi_dot).enumerate() {
        s = kinematic_step(&s, a, w, dt);
        if !(s.x.is_finite() && s.y.is_finite() && s.v.is_finite() && s.psi.is_finite()) {
            return Err(Error::Propagation { step: k });
        }
        points.push(s.x);
        points.push(s.y);
    }
    Var::concat(&points).reshape(&[a_x.len(), 2])
}

/// Binds a plain state as constants on `tape`.
pub fn state_on_tape<'t>(tape: &'t Tape, s: &KinematicState) -> StateOf<Var<'t>> {
    StateOf {
        x: tape.scalar(s.x),
        y: tape.scalar(s.y),
        v: tape.scalar(s.v),
        psi: tape.scalar(s.psi),
    }
}

/// Maps an angle difference into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Positions sampled at (nominally) uniform times.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTrack {
    pub positions: Vec<[f64; 2]>,
    pub times: Vec<f64>,
}

impl PositionTrack {
    pub fn uniform(positions: Vec<[f64; 2]>, dt: f64) -> Self {
        let times = (0..positions.len()).map(|k| k as f64 * dt).collect();
        Self { positions, times }
    }
}

/// Controls and states recovered from a position track.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMotion {
    /// One control per sample; the last uses backward differences.
    pub controls: ControlSequence,
    /// Position, speed and heading at every sample.
    pub states: Vec<KinematicState>,
}

impl DerivedMotion {
    /// State at the last sample, used to seed a rollout.
    pub fn final_state(&self) -> KinematicState {
        *self.states.last().expect("non-empty")
    }
}

const TIMESTAMP_TOLERANCE: f64 = 1e-6;
const STATIONARY_SPEED: f64 = 1e-9;

/// Recovers speed, heading, longitudinal acceleration and yaw rate.
///
/// Velocity vectors use central differences inside the track and
/// second-order one-sided stencils at both ends. Heading is the unwrapped
/// direction of the velocity; acceleration and yaw rate are forward
/// differences of speed and heading (backward at the last sample), so that
/// a rollout from the first state reproduces the recovered speeds and
/// headings step by step.
pub fn derive_controls(track: &PositionTrack, dt: f64) -> Result<DerivedMotion> {
    let p = &track.positions;
    let k = p.len();
    if k < 3 {
        return Err(Error::Empty(format!(
            "need at least 3 samples to differentiate, got {k}"
        )));
    }
    if track.times.len() != k {
        return Err(Error::Shape {
            op: "derive_controls",
            lhs: vec![k],
            rhs: vec![track.times.len()],
        });
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if let Some(w) = track.times.windows(2).find(|w| ((w[1] - w[0]) - dt).abs() > TIMESTAMP_TOLERANCE) {
        return Err(Error::Config(format!(
            "non-uniform sampling: step {} differs from {dt}",
            w[1] - w[0]
        )));
    }

    let vel: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let d = if i == 0 {
                [
                    -3.0 * p[0][0] + 4.0 * p[1][0] - p[2][0],
                    -3.0 * p[0][1] + 4.0 * p[1][1] - p[2][1],
                ]
            } else if i == k - 1 {
                [
                    3.0 * p[i][0] - 4.0 * p[i - 1][0] + p[i - 2][0],
                    3.0 * p[i][1] - 4.0 * p[i - 1][1] + p[i - 2][1],
                ]
            } else {
                [p[i + 1][0] - p[i - 1][0], p[i + 1][1] - p[i - 1][1]]
            };
            [d[0] / (2.0 * dt), d[1] / (2.0 * dt)]
        })
        .collect();
    let speed: Vec<f64> = vel.iter().map(|u| u[0].hypot(u[1])).collect();

    let raw: Vec<Option<f64>> = vel
        .iter()
        .zip(&speed)
        .map(|(u, &s)| (s > STATIONARY_SPEED).then(|| u[1].atan2(u[0])))
        .collect();
    let first = raw.iter().flatten().next().copied().unwrap_or(0.0);
    let mut heading = Vec::with_capacity(k);
    let mut prev = first;
    for r in &raw {
        let h = match r {
            Some(a) => prev + wrap_angle(a - prev),
            None => prev,
        };
        heading.push(h);
        prev = h;
    }

    let forward = |xs: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| {
                if i + 1 < k {
                    (xs[i + 1] - xs[i]) / dt
                } else {
                    (xs[i] - xs[i - 1]) / dt
                }
            })
            .collect()
    };
    let controls = ControlSequence::new(forward(&speed), forward(&heading), dt)?;
    let states = (0..k)
        .map(|i| KinematicState::new(p[i][0], p[i][1], speed[i], heading[i]))
        .collect();
    Ok(DerivedMotion { controls, states })
}

/// Largest distance between a track and its reconstruction by rolling the
/// derived controls forward from the first sample.
pub fn roundtrip_error(track: &PositionTrack, dt: f64) -> Result<f64> {
    let motion = derive_controls(track, dt)?;
    let k = track.positions.len();
    let replay = rollout(&motion.states[0], &motion.controls.window(0, k - 1))?;
    Ok(replay
        .positions
        .iter()
        .zip(&track.positions[1..])
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .fold(0.0, f64::max))
}
