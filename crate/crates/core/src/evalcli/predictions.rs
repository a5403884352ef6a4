//! Per-step prediction dumps for plotting.
//!
//! ```text
//! scenario_id,t,x_pred,y_pred[,ax_pred,psidot_pred]
//! ```
//!
//! One row per scenario and future step; `t` is seconds after the last
//! observation. Control columns appear when every prediction carries
//! controls.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::ControlSequence;
use crate::model::Prediction;

const BASE_HEADER: [&str; 4] = ["scenario_id", "t", "x_pred", "y_pred"];
const CONTROL_HEADER: [&str; 2] = ["ax_pred", "psidot_pred"];

fn step_time(k: usize, dt: f64) -> String {
    let t = ((k + 1) as f64 * dt * 1e9).round() / 1e9;
    format!("{t:?}")
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction], dt: f64) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_predictions_to(std::io::BufWriter::new(file), preds, dt)
}

pub fn write_predictions_to<W: Write>(w: W, preds: &[Prediction], dt: f64) -> Result<()> {
    let with_controls = !preds.is_empty() && preds.iter().all(|p| p.controls.is_some());
    let csv_err = |e: ::csv::Error| Error::Format(e.to_string());
    let mut out = ::csv::Writer::from_writer(w);
    let mut header = BASE_HEADER.to_vec();
    if with_controls {
        header.extend(CONTROL_HEADER);
    }
    out.write_record(&header).map_err(csv_err)?;
    for p in preds {
        for (k, q) in p.positions.iter().enumerate() {
            let mut row = vec![p.scenario_id.clone(), step_time(k, dt), format!("{:?}", q[0]), format!("{:?}", q[1])];
            if let (true, Some(c)) = (with_controls, &p.controls) {
                row.push(format!("{:?}", c.a_x[k]));
                row.push(format!("{:?}", c.psi_dot[k]));
            }
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    read_predictions_from(std::fs::File::open(path.as_ref())?)
}

/// Groups consecutive rows by scenario id, keeping file order.
pub fn read_predictions_from<R: Read>(r: R) -> Result<Vec<Prediction>> {
    let mut rdr = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?.clone();
    let names: Vec<&str> = headers.iter().collect();
    for col in BASE_HEADER {
        if !names.contains(&col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    let with_controls = CONTROL_HEADER.iter().all(|c| names.contains(c));
    let col = |name: &str| names.iter().position(|n| *n == name).unwrap_or(usize::MAX);
    let (ci, ct, cx, cy, ca, cw) = (
        col("scenario_id"),
        col("t"),
        col("x_pred"),
        col("y_pred"),
        col("ax_pred"),
        col("psidot_pred"),
    );

    struct Acc {
        id: String,
        first_t: f64,
        pos: Vec<[f64; 2]>,
        a: Vec<f64>,
        w: Vec<f64>,
    }
    let finish = |acc: Acc| -> Result<Prediction> {
        let controls = if with_controls {
            Some(ControlSequence::new(acc.a, acc.w, acc.first_t)?)
        } else {
            None
        };
        Ok(Prediction {
            scenario_id: acc.id,
            positions: acc.pos,
            controls,
        })
    };

    let mut out = Vec::new();
    let mut cur: Option<Acc> = None;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { row: line, msg: e.to_string() })?;
        let num = |c: usize| -> Result<f64> {
            let cell = rec.get(c).unwrap_or("");
            cell.parse().map_err(|_| Error::Parse {
                row: line,
                msg: format!("'{cell}' is not a number"),
            })
        };
        let id = rec.get(ci).unwrap_or("").to_string();
        let t = num(ct)?;
        if cur.as_ref().is_none_or(|c| c.id != id) {
            if let Some(done) = cur.take() {
                out.push(finish(done)?);
            }
            if out.iter().any(|p: &Prediction| p.scenario_id == id) {
                return Err(Error::Parse {
                    row: line,
                    msg: format!("rows for scenario '{id}' are not contiguous"),
                });
            }
            cur = Some(Acc { id, first_t: t, pos: Vec::new(), a: Vec::new(), w: Vec::new() });
        }
        let acc = cur.as_mut().expect("set above");
        acc.pos.push([num(cx)?, num(cy)?]);
        if with_controls {
            acc.a.push(num(ca)?);
            acc.w.push(num(cw)?);
        }
    }
    if let Some(done) = cur {
        out.push(finish(done)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, n: usize, controls: bool) -> Prediction {
        Prediction {
            scenario_id: id.into(),
            positions: (0..n).map(|k| [k as f64 * 1.1, -0.1 / (k + 1) as f64]).collect(),
            controls: controls.then(|| ControlSequence::new(vec![0.3; n], vec![-0.01; n], 0.2).unwrap()),
        }
    }

    #[test]
    fn roundtrip_with_and_without_controls() {
        for controls in [false, true] {
            let preds = vec![pred("a", 3, controls), pred("b", 3, controls)];
            let mut buf = Vec::new();
            write_predictions_to(&mut buf, &preds, 0.2).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert_eq!(text.lines().count(), 1 + 6);
            assert_eq!(text.lines().next().unwrap().split(',').count(), if controls { 6 } else { 4 });
            assert!(text.contains("a,0.6,"));
            assert_eq!(read_predictions_from(buf.as_slice()).unwrap(), preds);
        }
    }

    #[test]
    fn rejects_split_groups_and_missing_columns() {
        let text = "scenario_id,t,x_pred,y_pred\na,0.2,1,1\nb,0.2,1,1\na,0.4,1,1\n";
        assert!(read_predictions_from(text.as_bytes()).is_err());
        assert!(matches!(
            read_predictions_from("scenario_id,t,x_pred\n".as_bytes()),
            Err(Error::MissingColumn(_))
        ));
    }
}
