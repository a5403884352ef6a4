//! Traffic data: tracks, 8 s scenarios, neighbor grids, and dataset plumbing.
//!
//! Coordinates follow the highD convention: x along the road, y pointing to
//! the right of a vehicle travelling in +x.

mod archive;
mod csv;
mod extract;
mod frame;
mod split;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::archive::{read_archive, read_archive_from, write_archive, write_archive_to, ARCHIVE_VERSION};
pub use self::csv::{load_tracks, read_tracks, write_tracks, write_tracks_to, FormatConfig};
pub use self::extract::{assign_neighbors, extract_scenarios, ExtractConfig, SlotGeometry};
pub use self::frame::{to_target_frame, FrameTransform};
pub use self::split::{balance_scenarios, split_dataset, SplitSpec, Splits};
pub use self::synth::{synth_generate, synth_recording, RecordingSpec, SynthSpec};

/// One vehicle's samples over a run of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub vehicle_id: i64,
    pub frames: Vec<i64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Speed, m/s.
    pub v: Vec<f64>,
    /// Acceleration along the velocity direction, m/s².
    pub a: Vec<f64>,
    pub lane_id: Vec<i64>,
    pub frame_rate: f64,
}

impl Track {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks equal lengths and strictly increasing, evenly spaced frames.
    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if [self.x.len(), self.y.len(), self.v.len(), self.a.len(), self.lane_id.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Format(format!(
                "track {} has columns of unequal length",
                self.vehicle_id
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::Format(format!("track {} has no frame rate", self.vehicle_id)));
        }
        if n >= 2 {
            let step = self.frames[1] - self.frames[0];
            if step <= 0 || self.frames.windows(2).any(|w| w[1] - w[0] != step) {
                return Err(Error::Format(format!(
                    "track {} frames are not evenly increasing",
                    self.vehicle_id
                )));
            }
        }
        Ok(())
    }

    pub fn first_frame(&self) -> i64 {
        self.frames[0]
    }

    pub fn last_frame(&self) -> i64 {
        self.frames[self.frames.len() - 1]
    }

    /// Index of `frame` in a contiguous source track.
    pub fn index_of(&self, frame: i64) -> Option<usize> {
        if self.is_empty() || frame < self.first_frame() || frame > self.last_frame() {
            return None;
        }
        let step = if self.len() > 1 { self.frames[1] - self.frames[0] } else { 1 };
        let off = frame - self.first_frame();
        (off % step == 0).then_some((off / step) as usize)
    }

    /// Sub-track at the given frames, or `None` if any is missing.
    pub fn sample(&self, frames: &[i64], frame_rate: f64) -> Option<Track> {
        let idx: Vec<usize> = frames.iter().map(|&f| self.index_of(f)).collect::<Option<_>>()?;
        Some(self.select(&idx, frame_rate))
    }

    fn select(&self, idx: &[usize], frame_rate: f64) -> Track {
        Track {
            vehicle_id: self.vehicle_id,
            frames: idx.iter().map(|&i| self.frames[i]).collect(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            v: idx.iter().map(|&i| self.v[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            lane_id: idx.iter().map(|&i| self.lane_id[i]).collect(),
            frame_rate,
        }
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Track {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx, self.frame_rate)
    }

    /// Samples from `start` on.
    pub fn tail_from(&self, start: usize) -> Track {
        let idx: Vec<usize> = (start.min(self.len())..self.len()).collect();
        self.select(&idx, self.frame_rate)
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.x.iter().zip(&self.y).map(|(&x, &y)| [x, y]).collect()
    }

    /// +1 when the track moves toward increasing x overall, else -1.
    pub fn direction(&self) -> f64 {
        match (self.x.first(), self.x.last()) {
            (Some(a), Some(b)) if b < a => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    KeepLane,
    LaneChange,
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Maneuver::KeepLane => "keep_lane",
            Maneuver::LaneChange => "lane_change",
        })
    }
}

impl FromStr for Maneuver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep_lane" => Ok(Maneuver::KeepLane),
            "lane_change" => Ok(Maneuver::LaneChange),
            _ => Err(Error::Usage(format!("unknown maneuver '{s}'"))),
        }
    }
}

/// Neighbor slot names, in node order 1..=8.
pub const SLOT_NAMES: [&str; 8] = [
    "preceding",
    "following",
    "left_preceding",
    "left_alongside",
    "left_following",
    "right_preceding",
    "right_alongside",
    "right_following",
];

pub const NUM_SLOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Vehicle(Track),
    /// Placeholder carrying the target's own motion features.
    Ghost,
}

impl Slot {
    pub fn is_ghost(&self) -> bool {
        matches!(self, Slot::Ghost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGrid {
    pub slots: [Slot; NUM_SLOTS],
}

impl NeighborGrid {
    pub fn ghosts() -> Self {
        Self {
            slots: std::array::from_fn(|_| Slot::Ghost),
        }
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        SLOT_NAMES.iter().position(|n| *n == name).map(|i| &self.slots[i])
    }

    pub fn ghost_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_ghost()).count()
    }

    /// Track for each slot, with ghosts resolved to the target.
    pub fn resolved<'a>(&'a self, target: &'a Track) -> [&'a Track; NUM_SLOTS] {
        std::array::from_fn(|i| match &self.slots[i] {
            Slot::Vehicle(t) => t,
            Slot::Ghost => target,
        })
    }
}

/// One 8 s sample: target window, neighbor grid and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub maneuver: Maneuver,
    pub dt: f64,
    pub t_obs: usize,
    pub t_f: usize,
    /// `t_obs + t_f` samples.
    pub target: Track,
    pub neighbors: NeighborGrid,
    /// Set once positions are in the target frame.
    pub transform: Option<FrameTransform>,
}

impl Scenario {
    pub fn window_len(&self) -> usize {
        self.t_obs + self.t_f
    }

    pub fn history(&self) -> Track {
        self.target.head(self.t_obs)
    }

    pub fn future_positions(&self) -> Vec<[f64; 2]> {
        self.target.positions()[self.t_obs..].to_vec()
    }

    /// Structural checks every pipeline output satisfies.
    pub fn validate(&self) -> Result<()> {
        let n = self.window_len();
        self.target.validate()?;
        if self.target.len() != n {
            return Err(Error::Format(format!(
                "scenario {}: target has {} samples, expected {n}",
                self.scenario_id,
                self.target.len()
            )));
        }
        for (name, slot) in SLOT_NAMES.iter().zip(&self.neighbors.slots) {
            if let Slot::Vehicle(t) = slot {
                t.validate()?;
                if t.len() != n {
                    return Err(Error::Format(format!(
                        "scenario {}: slot {name} has {} samples, expected {n}",
                        self.scenario_id,
                        t.len()
                    )));
                }
            }
        }
        if !(self.dt > 0.0) || self.t_obs == 0 || self.t_f == 0 {
            return Err(Error::Format(format!("scenario {}: bad timing", self.scenario_id)));
        }
        Ok(())
    }

    /// Every position in the scenario: target first, then real neighbors.
    pub fn all_positions(&self) -> Vec<[f64; 2]> {
        let mut out = self.target.positions();
        for slot in &self.neighbors.slots {
            if let Slot::Vehicle(t) = slot {
                out.extend(t.positions());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn straight(id: i64, x0: f64, y: f64, v: f64, frames: std::ops::Range<i64>, lane: i64) -> Track {
        let rate = 25.0;
        let fs: Vec<i64> = frames.collect();
        let f0 = fs[0];
        Track {
            vehicle_id: id,
            x: fs.iter().map(|f| x0 + v * (f - f0) as f64 / rate).collect(),
            y: vec![y; fs.len()],
            v: vec![v.abs(); fs.len()],
            a: vec![0.0; fs.len()],
            lane_id: vec![lane; fs.len()],
            frames: fs,
            frame_rate: rate,
        }
    }

    #[test]
    fn index_and_sample() {
        let t = straight(1, 0.0, 0.0, 25.0, 10..60, 2);
        assert_eq!(t.index_of(10), Some(0));
        assert_eq!(t.index_of(59), Some(49));
        assert_eq!(t.index_of(60), None);
        let s = t.sample(&[10, 15, 20], 5.0).unwrap();
        assert_eq!(s.frames, vec![10, 15, 20]);
        assert_eq!(s.index_of(15), Some(1));
        assert_eq!(s.index_of(12), None);
        assert!(t.sample(&[55, 60], 5.0).is_none());
    }

    #[test]
    fn validate_catches_ragged_columns() {
        let mut t = straight(1, 0.0, 0.0, 25.0, 0..5, 1);
        assert!(t.validate().is_ok());
        t.v.pop();
        assert!(t.validate().is_err());
    }

    #[test]
    fn ghost_grid_resolves_to_target() {
        let t = straight(1, 0.0, 0.0, 25.0, 0..5, 1);
        let g = NeighborGrid::ghosts();
        assert_eq!(g.ghost_count(), 8);
        assert!(g.resolved(&t).iter().all(|r| **r == t));
        assert!(g.slot("left_alongside").unwrap().is_ghost());
    }

    #[test]
    fn maneuver_names_roundtrip() {
        for m in [Maneuver::KeepLane, Maneuver::LaneChange] {
            assert_eq!(m.to_string().parse::<Maneuver>().unwrap(), m);
        }
    }
}
