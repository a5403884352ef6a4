use serde::{Deserialize, Serialize};

use super::{Scenario, Slot, Track};
use crate::error::{Error, Result};

/// Maps source coordinates `p` to `R (p - origin)`, where `R` is a rotation
/// by π when `flipped`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub origin: [f64; 2],
    pub flipped: bool,
}

impl FrameTransform {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        if self.flipped {
            // `+ 0.0` keeps exact zeros unsigned
            [-d[0] + 0.0, -d[1] + 0.0]
        } else {
            d
        }
    }

    pub fn invert(&self, q: [f64; 2]) -> [f64; 2] {
        let d = if self.flipped { [-q[0], -q[1]] } else { q };
        [d[0] + self.origin[0], d[1] + self.origin[1]]
    }

    /// `self` followed by `next`.
    fn then(self, next: FrameTransform) -> FrameTransform {
        let o = if self.flipped {
            [-next.origin[0], -next.origin[1]]
        } else {
            next.origin
        };
        FrameTransform {
            origin: [self.origin[0] + o[0], self.origin[1] + o[1]],
            flipped: self.flipped != next.flipped,
        }
    }
}

fn transform_track(t: &mut Track, tf: &FrameTransform) {
    for (x, y) in t.x.iter_mut().zip(t.y.iter_mut()) {
        [*x, *y] = tf.apply([*x, *y]);
    }
}

/// Moves the target's first observed position to the origin and turns
/// travel toward decreasing x into travel toward increasing x. The map is a
/// rigid motion, so distances and left/right relations are kept.
pub fn to_target_frame(scenario: &Scenario) -> Result<Scenario> {
    let t = &scenario.target;
    if scenario.t_obs == 0 || t.len() < scenario.t_obs {
        return Err(Error::Degenerate(format!("scenario {} has no history", scenario.scenario_id)));
    }
    let first = [t.x[0], t.y[0]];
    let last = [t.x[scenario.t_obs - 1], t.y[scenario.t_obs - 1]];
    let dx = last[0] - first[0];
    if dx.hypot(last[1] - first[1]) < 1e-6 {
        return Err(Error::Degenerate(format!(
            "scenario {}: target does not move over its history",
            scenario.scenario_id
        )));
    }
    let step = FrameTransform {
        origin: first,
        flipped: dx < 0.0,
    };
    let mut out = scenario.clone();
    transform_track(&mut out.target, &step);
    for slot in &mut out.neighbors.slots {
        if let Slot::Vehicle(n) = slot {
            transform_track(n, &step);
        }
    }
    out.transform = Some(match scenario.transform {
        Some(prev) => prev.then(step),
        None => step,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::straight;
    use crate::scenario::{Maneuver, NeighborGrid};

    fn scenario(v: f64) -> Scenario {
        let target = straight(1, 300.0, 14.0, v, 0..40, 2).sample(&(0..40).collect::<Vec<_>>(), 25.0).unwrap();
        let mut neighbors = NeighborGrid::ghosts();
        neighbors.slots[0] = Slot::Vehicle(straight(2, 330.0 * v.signum(), 14.2, v, 0..40, 2));
        neighbors.slots[3] = Slot::Vehicle(straight(3, 290.0, 10.5, v * 1.1, 0..40, 1));
        Scenario {
            scenario_id: "s".into(),
            maneuver: Maneuver::KeepLane,
            dt: 0.04,
            t_obs: 15,
            t_f: 25,
            target,
            neighbors,
            transform: None,
        }
    }

    #[test]
    fn first_position_is_origin() {
        let s = to_target_frame(&scenario(25.0)).unwrap();
        assert_eq!([s.target.x[0], s.target.y[0]], [0.0, 0.0]);
    }

    #[test]
    fn reversed_travel_is_turned_around() {
        let s = to_target_frame(&scenario(-25.0)).unwrap();
        assert!(s.target.x.windows(2).all(|w| w[1] > w[0]));
        assert!(s.transform.unwrap().flipped);
    }

    #[test]
    fn idempotent_after_first_application() {
        let once = to_target_frame(&scenario(-30.0)).unwrap();
        let twice = to_target_frame(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn inverse_recovers_source() {
        let src = scenario(-30.0);
        let s = to_target_frame(&src).unwrap();
        let tf = s.transform.unwrap();
        for (p, q) in src.target.positions().iter().zip(s.target.positions()) {
            let back = tf.invert(q);
            assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_target_is_degenerate() {
        let mut s = scenario(25.0);
        s.target.x = vec![5.0; 40];
        assert!(matches!(to_target_frame(&s), Err(Error::Degenerate(_))));
    }
}
