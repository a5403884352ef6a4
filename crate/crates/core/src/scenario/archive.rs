use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Scenario;
use crate::error::{Error, Result};

/// First line of every scenario archive.
pub const ARCHIVE_VERSION: &str = "xtrack-scenarios v1";

pub fn write_archive(path: impl AsRef<Path>, scenarios: &[Scenario]) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_archive_to(BufWriter::new(file), scenarios)
}

/// Version line, then one JSON scenario per line. Record fields appear in
/// the order `scenario_id, maneuver, dt, t_obs, t_f, target, neighbors,
/// transform`; tracks as `vehicle_id, frames, x, y, v, a, lane_id,
/// frame_rate`; neighbor slots in grid order, each either `"Ghost"` or
/// `{"Vehicle": track}`. Floats use shortest round-trip decimals.
pub fn write_archive_to<W: Write>(mut w: W, scenarios: &[Scenario]) -> Result<()> {
    writeln!(w, "{ARCHIVE_VERSION}")?;
    for s in scenarios {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_archive_from(file)
}

pub fn read_archive_from<R: Read>(r: R) -> Result<Vec<Scenario>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != ARCHIVE_VERSION {
        return Err(Error::Format(format!(
            "unsupported archive header '{}', expected '{ARCHIVE_VERSION}'",
            header.trim_end()
        )));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Scenario = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: k + 2,
            msg: e.to_string(),
        })?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}
