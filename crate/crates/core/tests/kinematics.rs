use std::f64::consts::PI;

use proptest::prelude::*;
use xtrack::kinematics::*;
use xtrack::numcore::{grad_check, DiffTensor, Var};

fn lane_change_track(speed: f64, width: f64, duration: f64, span: f64, dt: f64) -> PositionTrack {
    // Logistic lateral profile spanning 1%..99% of `width` over `duration`,
    // centred in the track.
    let k = 2.0 * (99.0f64).ln() / duration;
    let n = (span / dt).round() as usize + 1;
    let pts = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let y = width / (1.0 + (-k * (t - span / 2.0)).exp());
            [speed * t, y]
        })
        .collect();
    PositionTrack::uniform(pts, dt)
}

fn circle_track(radius: f64, speed: f64, span: f64, dt: f64) -> PositionTrack {
    let n = (span / dt).round() as usize + 1;
    let w = speed / radius;
    let pts = (0..n)
        .map(|i| {
            let th = w * i as f64 * dt;
            [radius * th.sin(), radius * (1.0 - th.cos())]
        })
        .collect();
    PositionTrack::uniform(pts, dt)
}

#[test]
fn straight_constant_speed_has_zero_controls() {
    let dt = 0.2;
    let track = PositionTrack::uniform((0..20).map(|i| [3.0 + 25.0 * dt * i as f64, 1.5]).collect(), dt);
    let m = derive_controls(&track, dt).unwrap();
    assert!(m.controls.a_x.iter().all(|a| a.abs() <= 1e-10));
    assert!(m.controls.psi_dot.iter().all(|w| w.abs() <= 1e-10));
    assert!(roundtrip_error(&track, dt).unwrap() < 1e-9);
}

#[test]
fn constant_acceleration_is_recovered() {
    let dt = 0.2;
    let a = 1.7;
    let track = PositionTrack::uniform(
        (0..25)
            .map(|i| {
                let t = i as f64 * dt;
                [10.0 * t + 0.5 * a * t * t, 0.0]
            })
            .collect(),
        dt,
    );
    let m = derive_controls(&track, dt).unwrap();
    assert!(m.controls.a_x.iter().all(|x| (x - a).abs() < 1e-9), "{:?}", m.controls.a_x);
    assert!(m.controls.psi_dot.iter().all(|w| w.abs() < 1e-12));
}

#[test]
fn circle_yaw_rate_matches_v_over_r() {
    let dt = 0.2;
    let m = derive_controls(&circle_track(100.0, 10.0, 5.0, dt), dt).unwrap();
    for w in &m.controls.psi_dot {
        assert!((w - 0.1).abs() < 1e-3, "{w}");
    }
}

#[test]
fn lane_change_roundtrip_under_ten_centimetres() {
    let dt = 0.2;
    let track = lane_change_track(30.0, 3.5, 4.0, 5.0, dt);
    let err = roundtrip_error(&track, dt).unwrap();
    assert!(err < 0.1, "roundtrip error {err}");
}

#[test]
fn halving_dt_reduces_circle_error() {
    let mut prev = f64::INFINITY;
    for dt in [0.4, 0.2, 0.1, 0.05] {
        let err = roundtrip_error(&circle_track(100.0, 10.0, 5.0, dt), dt).unwrap();
        assert!(err < prev, "dt {dt}: {err} !< {prev}");
        prev = err;
    }
}

#[test]
fn derive_returns_last_observed_state() {
    let dt = 0.2;
    let track = PositionTrack::uniform((0..5).map(|i| [2.0 * i as f64, 2.0 * i as f64]).collect(), dt);
    let m = derive_controls(&track, dt).unwrap();
    let s = m.final_state();
    assert_eq!([s.x, s.y], [8.0, 8.0]);
    assert!((s.psi - PI / 4.0).abs() < 1e-12);
    assert!((s.v - 2.0 * 2f64.sqrt() / dt).abs() < 1e-9);
}

#[test]
fn rollout_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = xtrack::numcore::SeededRng::new(seed);
        let steps = 6;
        let a: Vec<f64> = (0..steps).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let w: Vec<f64> = (0..steps).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let init = vec![rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(5.0, 30.0), rng.uniform(-PI, PI)];
        let inputs = [DiffTensor::from_vec(a), DiffTensor::from_vec(w), DiffTensor::from_vec(init)];
        let report = grad_check(
            |_, v| {
                let a: Vec<Var> = (0..steps).map(|k| v[0].slice(k, 1).unwrap()).collect();
                let w: Vec<Var> = (0..steps).map(|k| v[1].slice(k, 1).unwrap()).collect();
                let s = StateOf {
                    x: v[2].slice(0, 1)?,
                    y: v[2].slice(1, 1)?,
                    v: v[2].slice(2, 1)?,
                    psi: v[2].slice(3, 1)?,
                };
                let pos = rollout_var(s, &a, &w, 0.2)?;
                let last = pos.row(steps - 1)?;
                Ok(last.slice(0, 1)? * 0.7 + last.slice(1, 1)? * 1.3)
            },
            &inputs,
            1e-6,
        )
        .unwrap();
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn tape_rollout_agrees_with_plain_rollout() {
    let tape = xtrack::numcore::Tape::new();
    let init = KinematicState::new(1.0, -2.0, 12.0, 0.3);
    let c = ControlSequence::new(vec![0.5, -1.0, 2.0], vec![0.1, 0.0, -0.2], 0.2).unwrap();
    let a: Vec<Var> = c.a_x.iter().map(|&x| tape.scalar(x)).collect();
    let w: Vec<Var> = c.psi_dot.iter().map(|&x| tape.scalar(x)).collect();
    let pos = rollout_var(state_on_tape(&tape, &init), &a, &w, c.dt).unwrap().value();
    let plain = rollout(&init, &c).unwrap();
    for (k, p) in plain.positions.iter().enumerate() {
        assert_eq!(pos[2 * k], p[0]);
        assert_eq!(pos[2 * k + 1], p[1]);
    }
}

proptest! {
    #[test]
    fn clamp_never_exceeds_limits(a in prop::num::f64::NORMAL | prop::num::f64::ZERO,
                                  w in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let l = MotionLimits::default();
        let c = clamp_controls(&ControlSequence::new(vec![a], vec![w], 0.2).unwrap(), &l);
        prop_assert!(c.a_x[0].abs() <= l.a_max);
        prop_assert!(c.psi_dot[0].abs() <= l.psi_dot_max);
    }

    #[test]
    fn zero_controls_trace_straight_lines(x in -100.0..100.0f64, y in -100.0..100.0f64,
                                          v in 0.0..40.0f64, psi in -PI..PI, steps in 1usize..40) {
        let s = KinematicState::new(x, y, v, psi);
        let r = rollout(&s, &ControlSequence::zeros(steps, 0.2)).unwrap();
        let step = [v * psi.cos() * 0.2, v * psi.sin() * 0.2];
        let mut prev = [x, y];
        for (p, st) in r.positions.iter().zip(&r.states[1..]) {
            prop_assert!((p[0] - prev[0] - step[0]).abs() < 1e-9);
            prop_assert!((p[1] - prev[1] - step[1]).abs() < 1e-9);
            prop_assert_eq!(st.v, v);
            prop_assert_eq!(st.psi, psi);
            prev = *p;
        }
    }

    #[test]
    fn rollout_is_rotation_equivariant(theta in -PI..PI, v in 1.0..30.0f64,
                                        a in prop::collection::vec(-3.0..3.0f64, 10),
                                        w in prop::collection::vec(-0.5..0.5f64, 10)) {
        let c = ControlSequence::new(a, w, 0.2).unwrap();
        let base = rollout(&KinematicState::new(0.0, 0.0, v, 0.1), &c).unwrap();
        let rotated = rollout(&KinematicState::new(0.0, 0.0, v, 0.1 + theta), &c).unwrap();
        let (s, co) = theta.sin_cos();
        for (p, q) in base.positions.iter().zip(&rotated.positions) {
            let rp = [co * p[0] - s * p[1], s * p[0] + co * p[1]];
            prop_assert!((rp[0] - q[0]).abs() < 1e-9 && (rp[1] - q[1]).abs() < 1e-9);
        }
    }
}
