use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Maneuver, NeighborGrid, Scenario, Slot, Track, NUM_SLOTS};
use crate::error::{Error, Result};

/// Longitudinal thresholds for neighbor slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotGeometry {
    /// Adjacent-lane vehicles within this many meters of the target are
    /// alongside.
    pub alongside_margin: f64,
}

impl Default for SlotGeometry {
    fn default() -> Self {
        Self { alongside_margin: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Model step, seconds.
    pub dt: f64,
    pub t_obs: usize,
    pub t_f: usize,
    /// Window start spacing, seconds.
    pub stride: f64,
    pub geometry: SlotGeometry,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            t_obs: 15,
            t_f: 25,
            stride: 1.0,
            geometry: SlotGeometry::default(),
        }
    }
}

impl ExtractConfig {
    /// Source frames per model step.
    fn frame_step(&self, frame_rate: f64) -> Result<i64> {
        let step = (frame_rate * self.dt).round();
        if step < 1.0 || ((step / frame_rate) - self.dt).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "dt {} s is not a whole number of frames at {frame_rate} Hz",
                self.dt
            )));
        }
        Ok(step as i64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.t_obs == 0 || self.t_f == 0 || !(self.stride > 0.0) {
            return Err(Error::Config("dt, t_obs, t_f and stride must be positive".into()));
        }
        Ok(())
    }
}

/// Slides `t_obs + t_f` step windows over every track and builds one
/// scenario per window the target fully covers. Output is in source
/// coordinates, ordered by `(vehicle_id, start frame)`.
pub fn extract_scenarios(tracks: &[Track], cfg: &ExtractConfig) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    let n = (cfg.t_obs + cfg.t_f) as i64;
    let per_target: Vec<Vec<(i64, i64, Scenario)>> = tracks
        .par_iter()
        .map(|track| -> Result<Vec<(i64, i64, Scenario)>> {
            if track.is_empty() {
                return Ok(Vec::new());
            }
            let step = cfg.frame_step(track.frame_rate)?;
            let stride = ((cfg.stride * track.frame_rate).round() as i64).max(1);
            let span = (n - 1) * step;
            let mut out = Vec::new();
            let mut start = track.first_frame();
            while start + span <= track.last_frame() {
                let frames: Vec<i64> = (0..n).map(|k| start + k * step).collect();
                if let Some(target) = track.sample(&frames, 1.0 / cfg.dt) {
                    let (i0, i1) = (
                        track.index_of(start).expect("in range"),
                        track.index_of(start + span).expect("in range"),
                    );
                    let lanes = &track.lane_id[i0..=i1];
                    let maneuver = if lanes.iter().any(|&l| l != lanes[0]) {
                        Maneuver::LaneChange
                    } else {
                        Maneuver::KeepLane
                    };
                    let neighbors = assign_neighbors(track, &frames, tracks, cfg);
                    out.push((
                        track.vehicle_id,
                        start,
                        Scenario {
                            scenario_id: format!("{}-{}", track.vehicle_id, start),
                            maneuver,
                            dt: cfg.dt,
                            t_obs: cfg.t_obs,
                            t_f: cfg.t_f,
                            target,
                            neighbors,
                            transform: None,
                        },
                    ));
                }
                start += stride;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<(i64, i64, Scenario)> = per_target.into_iter().flatten().collect();
    all.sort_by_key(|(id, start, _)| (*id, *start));
    Ok(all.into_iter().map(|(_, _, s)| s).collect())
}

/// Fills the eight slots from vehicles travelling the same way as the
/// target, judged at the last observed frame. Only vehicles present over
/// all of `frames` qualify; the nearest one wins each slot and empty slots
/// become ghosts.
pub fn assign_neighbors(target: &Track, frames: &[i64], tracks: &[Track], cfg: &ExtractConfig) -> NeighborGrid {
    let mut grid = NeighborGrid::ghosts();
    let reference = frames[cfg.t_obs.min(frames.len()) - 1];
    let Some(ti) = target.index_of(reference) else {
        return grid;
    };
    let dir = target.direction();
    let (xt, yt, lane) = (target.x[ti], target.y[ti], target.lane_id[ti]);
    let margin = cfg.geometry.alongside_margin;
    let mut best: [Option<(f64, i64, usize)>; NUM_SLOTS] = [None; NUM_SLOTS];

    for (k, c) in tracks.iter().enumerate() {
        if c.vehicle_id == target.vehicle_id || c.direction() != dir {
            continue;
        }
        let Some(ci) = c.index_of(reference) else {
            continue;
        };
        if frames.iter().any(|&f| c.index_of(f).is_none()) {
            continue;
        }
        let dl = c.lane_id[ci] - lane;
        if dl.abs() > 1 {
            continue;
        }
        let long = (c.x[ci] - xt) * dir;
        let slot = if dl == 0 {
            if long >= 0.0 {
                0
            } else {
                1
            }
        } else {
            let base = if (c.y[ci] - yt) * dir < 0.0 { 2 } else { 5 };
            base + if long > margin {
                0
            } else if long < -margin {
                2
            } else {
                1
            }
        };
        let key = (long.abs(), c.vehicle_id, k);
        if best[slot].is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
            best[slot] = Some(key);
        }
    }
    for (slot, b) in grid.slots.iter_mut().zip(best) {
        if let Some((_, _, k)) = b {
            *slot = Slot::Vehicle(tracks[k].sample(frames, 1.0 / cfg.dt).expect("coverage checked"));
        }
    }
    grid
}
