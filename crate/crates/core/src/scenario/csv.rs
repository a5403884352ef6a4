use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Track;
use crate::error::{Error, Result};

/// Maps vendor column names onto the track contract and declares timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatConfig {
    pub frame: String,
    pub id: String,
    pub x: String,
    pub y: String,
    pub x_velocity: String,
    pub y_velocity: String,
    pub x_acceleration: String,
    pub y_acceleration: String,
    pub lane_id: String,
    pub frame_rate: f64,
}

impl Default for FormatConfig {
    fn default() -> Self {
        Self::highd()
    }
}

impl FormatConfig {
    /// highD `*_tracks.csv` at 25 Hz.
    pub fn highd() -> Self {
        Self {
            frame: "frame".into(),
            id: "id".into(),
            x: "x".into(),
            y: "y".into(),
            x_velocity: "xVelocity".into(),
            y_velocity: "yVelocity".into(),
            x_acceleration: "xAcceleration".into(),
            y_acceleration: "yAcceleration".into(),
            lane_id: "laneId".into(),
            frame_rate: 25.0,
        }
    }

    fn columns(&self) -> [&str; 9] {
        [
            &self.frame,
            &self.id,
            &self.x,
            &self.y,
            &self.x_velocity,
            &self.y_velocity,
            &self.x_acceleration,
            &self.y_acceleration,
            &self.lane_id,
        ]
    }

    /// Applies a `format.*` key from a config file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let slot = match key {
            "frame_rate" => {
                self.frame_rate = value
                    .parse()
                    .map_err(|_| Error::Config(format!("format.frame_rate: bad number '{value}'")))?;
                return Ok(());
            }
            "frame" => &mut self.frame,
            "id" => &mut self.id,
            "x" => &mut self.x,
            "y" => &mut self.y,
            "x_velocity" => &mut self.x_velocity,
            "y_velocity" => &mut self.y_velocity,
            "x_acceleration" => &mut self.x_acceleration,
            "y_acceleration" => &mut self.y_acceleration,
            "lane_id" => &mut self.lane_id,
            _ => return Err(Error::Config(format!("unknown format key '{key}'"))),
        };
        *slot = value.to_string();
        Ok(())
    }
}

struct Row {
    frame: i64,
    id: i64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    ax: f64,
    ay: f64,
    lane: i64,
}

pub fn load_tracks(path: impl AsRef<Path>, format: &FormatConfig) -> Result<Vec<Track>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_tracks(file, format)
}

/// Parses a track CSV. Rows are grouped per vehicle, ordered by frame, and
/// split wherever frames are not consecutive.
pub fn read_tracks<R: Read>(reader: R, format: &FormatConfig) -> Result<Vec<Track>> {
    if !(format.frame_rate > 0.0) {
        return Err(Error::Config("format frame_rate must be positive".into()));
    }
    let mut rdr = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?.clone();
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(format.columns()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut per_vehicle: BTreeMap<i64, Vec<Row>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { row: line, msg: e.to_string() })?;
        let cols = format.columns();
        let float = |j: usize| -> Result<f64> {
            let cell = rec.get(idx[j]).unwrap_or("");
            cell.parse::<f64>().map_err(|_| Error::Parse {
                row: line,
                msg: format!("column {}: '{cell}' is not a number", cols[j]),
            })
        };
        let int = |j: usize| -> Result<i64> {
            let cell = rec.get(idx[j]).unwrap_or("");
            cell.parse::<i64>()
                .or_else(|_| match cell.parse::<f64>() {
                    Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
                    _ => Err(()),
                })
                .map_err(|_| Error::Parse {
                    row: line,
                    msg: format!("column {}: '{cell}' is not an integer", cols[j]),
                })
        };
        let row = Row {
            frame: int(0)?,
            id: int(1)?,
            x: float(2)?,
            y: float(3)?,
            vx: float(4)?,
            vy: float(5)?,
            ax: float(6)?,
            ay: float(7)?,
            lane: int(8)?,
        };
        per_vehicle.entry(row.id).or_default().push(row);
    }

    let mut tracks = Vec::new();
    for (id, mut rows) in per_vehicle {
        rows.sort_by_key(|r| r.frame);
        if let Some(w) = rows.windows(2).find(|w| w[0].frame == w[1].frame) {
            return Err(Error::Format(format!("vehicle {id} has two rows for frame {}", w[0].frame)));
        }
        let dir = if rows.last().unwrap().x < rows[0].x { -1.0 } else { 1.0 };
        let mut start = 0;
        for end in 1..=rows.len() {
            if end == rows.len() || rows[end].frame != rows[end - 1].frame + 1 {
                tracks.push(build_track(id, &rows[start..end], dir, format.frame_rate));
                start = end;
            }
        }
    }
    Ok(tracks)
}

fn build_track(id: i64, rows: &[Row], dir: f64, frame_rate: f64) -> Track {
    let mut t = Track {
        vehicle_id: id,
        frames: Vec::with_capacity(rows.len()),
        x: Vec::with_capacity(rows.len()),
        y: Vec::with_capacity(rows.len()),
        v: Vec::with_capacity(rows.len()),
        a: Vec::with_capacity(rows.len()),
        lane_id: Vec::with_capacity(rows.len()),
        frame_rate,
    };
    for r in rows {
        let speed = r.vx.hypot(r.vy);
        let along = if speed > 0.0 {
            r.ax * (r.vx / speed) + r.ay * (r.vy / speed)
        } else {
            dir * r.ax
        };
        t.frames.push(r.frame);
        t.x.push(r.x);
        t.y.push(r.y);
        t.v.push(speed);
        t.a.push(along);
        t.lane_id.push(r.lane);
    }
    t
}

pub fn write_tracks(path: impl AsRef<Path>, tracks: &[Track], format: &FormatConfig) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_tracks_to(std::io::BufWriter::new(file), tracks, format)
}

/// Writes tracks with velocity and acceleration along the travel direction
/// on the x axis, which the loader maps back exactly.
pub fn write_tracks_to<W: Write>(writer: W, tracks: &[Track], format: &FormatConfig) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(writer);
    let to_io = |e: ::csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(format.columns()).map_err(to_io)?;
    for t in tracks {
        let dir = t.direction();
        for i in 0..t.len() {
            w.write_record([
                t.frames[i].to_string(),
                t.vehicle_id.to_string(),
                fmt_f64(t.x[i]),
                fmt_f64(t.y[i]),
                fmt_f64(dir * t.v[i]),
                fmt_f64(0.0),
                fmt_f64(dir * t.a[i]),
                fmt_f64(0.0),
                t.lane_id[i].to_string(),
            ])
            .map_err(to_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
