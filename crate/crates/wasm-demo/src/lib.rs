//! Browser bindings for three small demonstrations: a kinematic rollout
//! under bounded controls, a lane change recovered from its positions, and
//! the stabilized sLSTM recurrence next to its naive form.
//!
//! Everything is computed by plain functions returning `Result<_, String>`;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use wasm_bindgen::prelude::*;
use xtrack::cells::{slstm_step, ForgetActivation, GateParams, SLstmState};
use xtrack::kinematics::{
    clamp_controls, derive_controls, rollout, ControlSequence, KinematicState, MotionLimits, PositionTrack,
};
use xtrack::numcore::{ParamStore, SeededRng, Tape};

fn flatten(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Positions and the controls actually applied.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    positions: Vec<f64>,
    a_x: Vec<f64>,
    psi_dot: Vec<f64>,
}

#[wasm_bindgen]
impl Path {
    /// `[x0, y0, x1, y1, ...]`, starting at the initial position.
    #[wasm_bindgen(getter)]
    pub fn positions(&self) -> Vec<f64> {
        self.positions.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn a_x(&self) -> Vec<f64> {
        self.a_x.clone()
    }

    /// rad/s
    #[wasm_bindgen(getter)]
    pub fn psi_dot(&self) -> Vec<f64> {
        self.psi_dot.clone()
    }
}

/// Constant raw controls from the origin. With `bounded`, they pass through
/// the same saturation as the X-TRACK head first.
pub fn rollout_path(
    speed: f64,
    heading_deg: f64,
    accel: f64,
    yaw_rate_deg: f64,
    steps: usize,
    dt: f64,
    bounded: bool,
) -> Result<Path, String> {
    let raw = ControlSequence::new(vec![accel; steps], vec![yaw_rate_deg.to_radians(); steps], dt)
        .map_err(|e| e.to_string())?;
    let controls = if bounded {
        clamp_controls(&raw, &MotionLimits::default())
    } else {
        raw
    };
    let start = KinematicState::new(0.0, 0.0, speed, heading_deg.to_radians());
    let r = rollout(&start, &controls).map_err(|e| e.to_string())?;
    let mut positions = vec![0.0, 0.0];
    positions.extend(flatten(&r.positions));
    Ok(Path {
        positions,
        a_x: controls.a_x,
        psi_dot: controls.psi_dot,
    })
}

#[wasm_bindgen(js_name = rolloutPath)]
pub fn rollout_path_js(
    speed: f64,
    heading_deg: f64,
    accel: f64,
    yaw_rate_deg: f64,
    steps: usize,
    dt: f64,
    bounded: bool,
) -> Result<Path, JsError> {
    rollout_path(speed, heading_deg, accel, yaw_rate_deg, steps, dt, bounded).map_err(|e| JsError::new(&e))
}

/// A track, its recovered controls and the replay from its first sample.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Roundtrip {
    truth: Vec<f64>,
    replay: Vec<f64>,
    a_x: Vec<f64>,
    psi_dot: Vec<f64>,
    max_error: f64,
}

#[wasm_bindgen]
impl Roundtrip {
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn replay(&self) -> Vec<f64> {
        self.replay.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn a_x(&self) -> Vec<f64> {
        self.a_x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn psi_dot(&self) -> Vec<f64> {
        self.psi_dot.clone()
    }

    /// Metres.
    #[wasm_bindgen(getter)]
    pub fn max_error(&self) -> f64 {
        self.max_error
    }
}

/// Logistic lane change of `width` metres, 1% to 99% over `duration`
/// seconds, centred in a `span`-second window.
pub fn lane_change(speed: f64, width: f64, duration: f64, span: f64, dt: f64) -> Result<Roundtrip, String> {
    if !(dt > 0.0 && duration > 0.0 && span >= 2.0 * dt) {
        return Err("need dt > 0, duration > 0 and at least three samples".into());
    }
    let k = 2.0 * 99f64.ln() / duration;
    let n = (span / dt).round() as usize + 1;
    let truth: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            [speed * t, width / (1.0 + (-k * (t - span / 2.0)).exp())]
        })
        .collect();
    let motion = derive_controls(&PositionTrack::uniform(truth.clone(), dt), dt).map_err(|e| e.to_string())?;
    let replayed = rollout(&motion.states[0], &motion.controls.window(0, n - 1)).map_err(|e| e.to_string())?;
    let mut replay = vec![truth[0]];
    replay.extend(replayed.positions);
    let max_error = replay
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .fold(0.0, f64::max);
    Ok(Roundtrip {
        truth: flatten(&truth),
        replay: flatten(&replay),
        a_x: motion.controls.a_x,
        psi_dot: motion.controls.psi_dot,
        max_error,
    })
}

#[wasm_bindgen(js_name = laneChange)]
pub fn lane_change_js(speed: f64, width: f64, duration: f64, span: f64, dt: f64) -> Result<Roundtrip, JsError> {
    lane_change(speed, width, duration, span, dt).map_err(|e| JsError::new(&e))
}

/// First hidden unit of both recurrences, step by step.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTrace {
    stabilized: Vec<f64>,
    naive: Vec<f64>,
    overflow_step: i32,
}

#[wasm_bindgen]
impl StabilityTrace {
    #[wasm_bindgen(getter)]
    pub fn stabilized(&self) -> Vec<f64> {
        self.stabilized.clone()
    }

    /// NaN from the overflow on.
    #[wasm_bindgen(getter)]
    pub fn naive(&self) -> Vec<f64> {
        self.naive.clone()
    }

    /// First step where the naive recurrence stops being finite, or -1.
    #[wasm_bindgen(getter)]
    pub fn overflow_step(&self) -> i32 {
        self.overflow_step
    }
}

const TRACE_INPUT: usize = 4;
const TRACE_HIDDEN: usize = 8;

/// Runs an exp-gated sLSTM over `steps` N(0,1) inputs, with every
/// forget-gate bias set to `forget_bias`.
pub fn slstm_trace(steps: usize, seed: u64, forget_bias: f64) -> Result<StabilityTrace, String> {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    let p = GateParams::new(&mut store, "s", TRACE_INPUT, TRACE_HIDDEN, 2, ForgetActivation::Exp, &mut rng)
        .map_err(|e| e.to_string())?;
    store.get_mut(p.b[2]).values_mut().fill(forget_bias);

    let tape = Tape::new();
    let mut s = SLstmState::zeros(&tape, TRACE_HIDDEN);
    let d = TRACE_HIDDEN;
    let (mut c, mut n, mut h) = (vec![0.0; d], vec![0.0; d], tape.zeros(&[d]));
    let mut out = StabilityTrace {
        stabilized: Vec::with_capacity(steps),
        naive: Vec::with_capacity(steps),
        overflow_step: -1,
    };
    for k in 0..steps {
        let x = tape.vector((0..TRACE_INPUT).map(|_| rng.normal()).collect());
        s = slstm_step(&tape, &store, &p, &s, x).map_err(|e| e.to_string())?;
        out.stabilized.push(s.h.value()[0]);

        if out.overflow_step >= 0 {
            out.naive.push(f64::NAN);
            continue;
        }
        // textbook recurrence with the gates exponentiated directly
        let pre = p.preactivations(&tape, &store, x, h).map_err(|e| e.to_string())?;
        let [z, i, f, o] = pre.map(|v| v.value());
        let mut hv = vec![0.0; d];
        for j in 0..d {
            c[j] = f[j].exp() * c[j] + i[j].exp() * z[j].tanh();
            n[j] = f[j].exp() * n[j] + i[j].exp();
            hv[j] = c[j] / n[j] / (1.0 + (-o[j]).exp());
        }
        if hv.iter().all(|v| v.is_finite()) {
            out.naive.push(hv[0]);
            h = tape.vector(hv);
        } else {
            out.naive.push(f64::NAN);
            out.overflow_step = k as i32;
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = slstmTrace)]
pub fn slstm_trace_js(steps: usize, seed: u32, forget_bias: f64) -> Result<StabilityTrace, JsError> {
    slstm_trace(steps, seed.into(), forget_bias).map_err(|e| JsError::new(&e))
}

/// `[a_max m/s², psi_dot_max deg/s]`.
#[wasm_bindgen(js_name = motionLimits)]
pub fn motion_limits() -> Vec<f64> {
    let l = MotionLimits::default();
    vec![l.a_max, l.psi_dot_max.to_degrees()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_controls_go_straight() {
        let p = rollout_path(10.0, 0.0, 0.0, 0.0, 3, 0.2, true).unwrap();
        assert_eq!(p.positions, [0.0, 0.0, 2.0, 0.0, 4.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn bounded_controls_respect_limits() {
        let p = rollout_path(20.0, 0.0, 50.0, 500.0, 10, 0.2, true).unwrap();
        let l = MotionLimits::default();
        assert!(p.a_x.iter().all(|a| a.abs() <= l.a_max));
        assert!(p.psi_dot.iter().all(|w| w.abs() <= l.psi_dot_max));
        let raw = rollout_path(20.0, 0.0, 50.0, 500.0, 10, 0.2, false).unwrap();
        assert_eq!(raw.a_x[0], 50.0);
    }

    #[test]
    fn rollout_rejects_bad_step() {
        assert!(rollout_path(10.0, 0.0, 0.0, 0.0, 3, 0.0, true).is_err());
    }

    #[test]
    fn lane_change_replays_within_ten_centimetres() {
        let r = lane_change(30.0, 3.5, 4.0, 5.0, 0.2).unwrap();
        assert_eq!(r.truth.len(), 52);
        assert_eq!(r.replay.len(), r.truth.len());
        assert_eq!(r.replay[..2], r.truth[..2]);
        assert!(r.max_error < 0.1, "{}", r.max_error);
        assert!(lane_change(30.0, 3.5, 4.0, 0.2, 0.2).is_err());
    }

    #[test]
    fn naive_slstm_overflows_where_the_stabilized_one_does_not() {
        let t = slstm_trace(1000, 7, 1.5).unwrap();
        assert!(t.stabilized.iter().all(|v| v.is_finite()));
        assert!(t.overflow_step > 0);
        let k = t.overflow_step as usize;
        assert!(t.naive[k..].iter().all(|v| v.is_nan()));
        for j in 0..k {
            assert!((t.naive[j] - t.stabilized[j]).abs() < 1e-9, "step {j}");
        }
        let calm = slstm_trace(1000, 7, 0.0).unwrap();
        assert!(calm.stabilized.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn limits_in_display_units() {
        let l = motion_limits();
        assert_eq!(l[0], 9.0);
        assert!((l[1] - 71.26).abs() < 1e-12);
    }
}
