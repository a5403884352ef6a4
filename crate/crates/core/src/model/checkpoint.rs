//! Plain-text parameter checkpoints.
//!
//! ```text
//! xtrack-checkpoint v1
//! fingerprint <64 hex chars, SHA-256 of the architecture keys>
//! config <ModelConfig as one JSON object>
//! tensors <count>
//! <name> <rank> <dim>...       one header line per tensor, in store order,
//! <value> <value> ...          followed by its row-major values
//! ```
//!
//! Values are shortest round-trip decimals, so a save/load cycle is exact.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "xtrack-checkpoint v1";

pub fn save_params(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_params(BufWriter::new(file), model)
}

pub fn write_params<W: Write>(mut w: W, model: &Model) -> Result<()> {
    writeln!(w, "{CHECKPOINT_VERSION}")?;
    writeln!(w, "fingerprint {}", model.config.fingerprint())?;
    writeln!(w, "config {}", serde_json::to_string(&model.config)?)?;
    writeln!(w, "tensors {}", model.store.len())?;
    for (name, t) in model.store.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        writeln!(w, "{name} {} {}", t.shape().len(), dims.join(" "))?;
        let vals: Vec<String> = t.values().iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", vals.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint. With `expected`, the file must carry the same
/// architecture fingerprint; without it the embedded config is trusted.
pub fn load_params(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Model> {
    let file = std::fs::File::open(path.as_ref())?;
    read_params(file, expected)
}

pub fn read_params<R: Read>(r: R, expected: Option<&ModelConfig>) -> Result<Model> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((k, line)) => Ok((k + 1, line?)),
            None => Err(Error::Format(format!("checkpoint ends before {what}"))),
        }
    };
    let (_, header) = next("the version line")?;
    if header.trim_end() != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint header '{}', expected '{CHECKPOINT_VERSION}'",
            header.trim_end()
        )));
    }
    let field = |(row, line): (usize, String), key: &str| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| Error::Parse {
                row,
                msg: format!("expected `{key} ...`"),
            })
    };
    let fingerprint = field(next("fingerprint")?, "fingerprint")?;
    let stored: ModelConfig = serde_json::from_str(&field(next("config")?, "config")?)?;
    if stored.fingerprint() != fingerprint {
        return Err(Error::Format("checkpoint config does not match its fingerprint".into()));
    }
    let config = match expected {
        Some(want) if want.fingerprint() != fingerprint => {
            return Err(Error::ConfigMismatch {
                expected: want.fingerprint(),
                found: fingerprint,
            })
        }
        Some(want) => ModelConfig {
            seed: stored.seed,
            ..want.clone()
        },
        None => stored,
    };
    let mut model = Model::new(config)?;

    let (row, count) = next("tensor count")?;
    let count: usize = field((row, count), "tensors")?
        .parse()
        .map_err(|_| Error::Parse { row, msg: "bad tensor count".into() })?;
    if count != model.store.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} tensors, model needs {}",
            model.store.len()
        )));
    }
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let (row, head) = next("a tensor header")?;
        let mut parts = head.split_whitespace();
        let name = parts.next().unwrap_or("");
        let dims: Vec<usize> = parts
            .skip(1)
            .map(|d| d.parse().map_err(|_| Error::Parse { row, msg: format!("bad dimension '{d}'") }))
            .collect::<Result<_>>()?;
        let t = model.store.get(id);
        if name != model.store.name(id) || dims != t.shape() {
            return Err(Error::Format(format!(
                "line {row}: tensor {name} {dims:?} where {} {:?} was expected",
                model.store.name(id),
                t.shape()
            )));
        }
        let (row, body) = next("tensor values")?;
        let values: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| Error::Parse { row, msg: format!("bad value '{v}'") }))
            .collect::<Result<_>>()?;
        if values.len() != t.len() {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} values, found {}", t.len(), values.len()),
            });
        }
        model.store.get_mut(id).values_mut().copy_from_slice(&values);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_identical() {
        let m = Model::new(ModelConfig { seed: 3, ..ModelConfig::tiny() }).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &m).unwrap();
        let back = read_params(buf.as_slice(), Some(&m.config)).unwrap();
        assert_eq!(back.store, m.store);
        assert_eq!(back.config, m.config);
        assert_eq!(read_params(buf.as_slice(), None).unwrap().store, m.store);
    }

    #[test]
    fn wrong_width_is_a_mismatch() {
        let m = Model::new(ModelConfig::tiny()).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &m).unwrap();
        let other = ModelConfig {
            encoder_hidden: 16,
            ..ModelConfig::tiny()
        };
        assert!(matches!(
            read_params(buf.as_slice(), Some(&other)),
            Err(Error::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = Model::new(ModelConfig::tiny()).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(read_params(text.replacen("v1", "v9", 1).as_bytes(), None).is_err());
        let cut: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(matches!(read_params(cut.as_bytes(), None), Err(Error::Format(_))));
        let bad = text.replacen("\n0.0", "\nabc", 1);
        assert!(read_params(bad.as_bytes(), None).is_err());
    }
}
