//! CSV and JSON persistence. Floats are written with 17 significant digits so
//! every value round-trips exactly.

use std::path::Path;

use serde::Serialize;

use super::experiment::{AveragedCurve, SweepResult};
use super::HarnessError;
use crate::trace::Trace;

pub const TRACE_HEADER: [&str; 15] = [
    "run_id",
    "algorithm",
    "d1",
    "d2",
    "gamma",
    "seed",
    "round",
    "grad_evals",
    "comm_steps",
    "opt_gap",
    "f_gap",
    "consensus_err",
    "tracking_err",
    "lyapunov",
    "client_div",
];

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    HarnessError::io(path, source)
}

fn to_bytes(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w).expect("writing CSV to memory cannot fail");
    w.into_inner().expect("flushing an in-memory CSV cannot fail")
}

/// Round-level CSV of the traces, in the given order.
pub fn traces_csv(traces: &[Trace]) -> Vec<u8> {
    to_bytes(|w| {
        w.write_record(TRACE_HEADER)?;
        for t in traces {
            for m in &t.rounds {
                w.write_record([
                    t.run_id.clone(),
                    t.algorithm.clone(),
                    t.d1.to_string(),
                    t.d2.to_string(),
                    fmt_float(t.gamma),
                    t.seed.to_string(),
                    m.round.to_string(),
                    m.grad_evals.to_string(),
                    m.comm_steps.to_string(),
                    fmt_float(m.opt_gap),
                    fmt_float(m.f_gap),
                    fmt_float(m.consensus_err),
                    fmt_float(m.tracking_err),
                    fmt_float(m.lyapunov),
                    fmt_float(m.client_div),
                ])?;
            }
        }
        Ok(())
    })
}

/// Seed-averaged curves, one row per algorithm and round.
pub fn curves_csv(curves: &[AveragedCurve]) -> Vec<u8> {
    to_bytes(|w| {
        w.write_record(["algorithm", "round", "grad_evals", "comm_steps", "mean_opt_gap", "seeds"])?;
        for c in curves {
            for (k, gap) in c.mean_opt_gap.iter().enumerate() {
                w.write_record([
                    c.label.clone(),
                    k.to_string(),
                    c.grad_evals[k].to_string(),
                    c.comm_steps[k].to_string(),
                    fmt_float(*gap),
                    c.seeds.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

/// One row per `(d1, d2)` cell in row-major order.
pub fn sweep_csv(sweep: &SweepResult) -> Vec<u8> {
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    to_bytes(|w| {
        w.write_record([
            "d1",
            "d2",
            "gamma",
            "theory_comp",
            "theory_comm",
            "theory_cost",
            "status",
            "empirical_grad_evals",
            "empirical_comm_steps",
            "empirical_cost",
        ])?;
        for c in &sweep.cells {
            w.write_record([
                c.d1.to_string(),
                c.d2.to_string(),
                fmt_float(c.gamma),
                fmt_float(c.theory.comp),
                fmt_float(c.theory.comm),
                fmt_float(c.theory.cost),
                c.status().to_string(),
                opt_u(c.reached.map(|r| r.grad_evals)),
                opt_u(c.reached.map(|r| r.comm_steps)),
                opt(c.empirical_cost),
            ])?;
        }
        Ok(())
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn write_traces_csv(traces: &[Trace], path: &Path) -> Result<(), HarnessError> {
    write_bytes(path, &traces_csv(traces))
}

/// Pretty-printed JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes to JSON");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), HarnessError> {
    write_bytes(path, &json_bytes(value))
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Streams a CSV through the `csv` reader; used to validate exported files.
pub fn read_csv_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_list_is_header_only() {
        let bytes = traces_csv(&[]);
        assert_eq!(String::from_utf8(bytes).unwrap(), TRACE_HEADER.join(",") + "\n");
    }

    #[test]
    fn floats_roundtrip_exactly() {
        for v in [0.1, 1.0 / 3.0, 2.5e-300, 6.02214076e23, -0.0] {
            let s = fmt_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn read_back_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_traces_csv(&[], &path).unwrap();
        let (header, rows) = read_csv_records(&path).unwrap();
        assert_eq!(header, TRACE_HEADER);
        assert!(rows.is_empty());
    }
}
