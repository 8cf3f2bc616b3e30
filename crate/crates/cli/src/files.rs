//! On-disk formats: time-series CSV, text snapshots and JSON verdicts.
//!
//! Every file is written to a temporary sibling and renamed into place.
//!
//! Time-series CSV columns, in order:
//! `t, M_m0, M_m1, M_1, M_lambda, M_2lambda_minus_alpha, log_mass, lyapunov,
//! cum_trunc_loss, dt, steps`. Floats use 17 significant digits.
//!
//! Snapshot layout:
//!
//! ```text
//! t <time>
//! kind geometric|uniform
//! edges <n+1>
//! <one edge per line>
//! values <n>
//! <one cell average per line>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use cofrag_core::integrator::Record;
use cofrag_core::{GridKind, MomentReport, SizeGrid, State, TimeSeries};

use crate::CliError;

pub const CSV_HEADER: [&str; 11] = [
    "t",
    "M_m0",
    "M_m1",
    "M_1",
    "M_lambda",
    "M_2lambda_minus_alpha",
    "log_mass",
    "lyapunov",
    "cum_trunc_loss",
    "dt",
    "steps",
];

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Parse(format!("{}: {msg}", path.display()))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io(&tmp, e))?;
    f.sync_all().map_err(|e| io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

/// Exponents of the CSV moment columns for a run with `(m0, m1)`.
pub fn csv_exponents(ts: &TimeSeries) -> [f64; 5] {
    let lambda = ts.spec.lambda;
    [ts.m0, ts.m1, 1.0, lambda, 2.0 * lambda - ts.spec.alpha]
}

pub fn timeseries_csv(ts: &TimeSeries) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Io(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(internal)?;
    let exps = csv_exponents(ts);
    for r in &ts.records {
        let mut row = vec![num(r.t)];
        for m in exps {
            row.push(num(r.moments.get(m).ok_or(CliError::from_core(cofrag_core::Error::MissingMoment(m)))?));
        }
        row.push(num(r.moments.log_mass));
        row.push(num(r.lyapunov));
        row.push(num(r.cum_trunc_loss));
        row.push(num(r.dt));
        row.push(r.steps.to_string());
        w.write_record(&row).map_err(internal)?;
    }
    w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))
}

/// Parses a time-series CSV into records with moments at `exps` (see
/// [`csv_exponents`]); duplicate exponents keep the first column.
pub fn read_timeseries_csv(path: &Path, exps: [f64; 5]) -> Result<Vec<Record>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    let header = rdr.headers().map_err(|e| parse_err(path, e))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(parse_err(path, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| parse_err(path, e))?;
        let f = |k: usize| -> Result<f64, CliError> {
            row.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| parse_err(path, format!("row {}: bad value in column {}", line + 1, CSV_HEADER[k])))
        };
        let mut entries: Vec<(f64, f64)> = Vec::new();
        for (k, m) in exps.iter().enumerate() {
            if !entries.iter().any(|e| e.0 == *m) {
                entries.push((*m, f(k + 1)?));
            }
        }
        let steps = row
            .get(10)
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| parse_err(path, format!("row {}: bad step count", line + 1)))?;
        out.push(Record {
            t: f(0)?,
            moments: MomentReport { entries, log_mass: f(6)? },
            lyapunov: f(7)?,
            cum_trunc_loss: f(8)?,
            cum_flushed: 0.0,
            flux: 0.0,
            dt: f(9)?,
            steps,
            rejected: 0,
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    Ok(out)
}

pub fn snapshot_text(state: &State) -> String {
    let g = state.grid();
    let kind = match g.kind() {
        GridKind::Geometric => "geometric",
        GridKind::Uniform => "uniform",
    };
    let mut s = format!("t {}\nkind {kind}\nedges {}\n", num(state.t), g.edges().len());
    for e in g.edges() {
        s.push_str(&num(*e));
        s.push('\n');
    }
    s.push_str(&format!("values {}\n", g.len()));
    for v in state.values() {
        s.push_str(&num(*v));
        s.push('\n');
    }
    s
}

fn keyed<'a>(path: &Path, lines: &mut std::str::Lines<'a>, key: &str) -> Result<&'a str, CliError> {
    let line = lines.next().ok_or_else(|| parse_err(path, format!("missing `{key}` line")))?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| parse_err(path, format!("expected `{key}`, found `{line}`")))
}

fn numbers(path: &Path, lines: &mut std::str::Lines, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    (0..n)
        .map(|_| {
            lines
                .next()
                .and_then(|l| l.trim().parse::<f64>().ok())
                .ok_or_else(|| parse_err(path, format!("truncated or malformed {what}")))
        })
        .collect()
}

pub fn parse_snapshot(path: &Path, text: &str) -> Result<State, CliError> {
    let mut lines = text.lines();
    let t: f64 = keyed(path, &mut lines, "t")?.parse().map_err(|e| parse_err(path, e))?;
    let kind = match keyed(path, &mut lines, "kind")? {
        "geometric" => GridKind::Geometric,
        "uniform" => GridKind::Uniform,
        other => return Err(parse_err(path, format!("unknown grid kind `{other}`"))),
    };
    let n_edges: usize = keyed(path, &mut lines, "edges")?.parse().map_err(|e| parse_err(path, e))?;
    let edges = numbers(path, &mut lines, n_edges, "edges")?;
    let n: usize = keyed(path, &mut lines, "values")?.parse().map_err(|e| parse_err(path, e))?;
    let values = numbers(path, &mut lines, n, "values")?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(parse_err(path, "trailing data"));
    }
    let grid = SizeGrid::from_edges(edges, kind).map_err(|e| parse_err(path, e))?;
    State::new(Arc::new(grid), values, t).map_err(|e| parse_err(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<State, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    parse_snapshot(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cofrag_core::grid::make_grid;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = Arc::new(make_grid(1e-3, 7.0, 13, GridKind::Geometric).unwrap());
        let values: Vec<f64> = (0..13).map(|i| (i as f64 * 0.731).sin().abs() / 3.0 + 1e-300).collect();
        let s = State::new(g, values, 0.1 + 0.2).unwrap();
        let text = snapshot_text(&s);
        let back = parse_snapshot(Path::new("mem"), &text).unwrap();
        assert_eq!(back.t.to_bits(), s.t.to_bits());
        assert_eq!(back.grid(), s.grid());
        let bits = |s: &State| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&s));
    }

    proptest::proptest! {
        #[test]
        fn snapshot_round_trip_any_values(
            values in proptest::collection::vec(proptest::prop_oneof![proptest::strategy::Just(0.0), 0.0f64..1e300, 1e-320f64..1e-300], 2..40),
            t in 0.0f64..1e6,
            geometric in proptest::bool::ANY,
        ) {
            let kind = if geometric { GridKind::Geometric } else { GridKind::Uniform };
            let g = Arc::new(make_grid(1e-4, 1e4, values.len(), kind).unwrap());
            let s = State::new(g, values, t).unwrap();
            let back = parse_snapshot(Path::new("mem"), &snapshot_text(&s)).unwrap();
            proptest::prop_assert_eq!(back.t.to_bits(), s.t.to_bits());
            proptest::prop_assert_eq!(back.grid(), s.grid());
            let bits = |s: &State| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            proptest::prop_assert_eq!(bits(&back), bits(&s));
        }
    }

    #[test]
    fn malformed_snapshots_are_rejected() {
        assert!(matches!(parse_snapshot(Path::new("m"), "t 0\nkind odd\n"), Err(CliError::Parse(_))));
        assert!(matches!(parse_snapshot(Path::new("m"), "t 0\nkind uniform\nedges 3\n0.1\n0.2\n"), Err(CliError::Parse(_))));
    }
}
