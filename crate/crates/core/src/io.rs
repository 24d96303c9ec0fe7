//! CSV and JSON emission with fixed column order and C-style `%.12e` numbers.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::{json, Value};

use crate::trajectories::{BoostedSample, Ensemble, TrajectoryPair};

/// Version of the JSON layouts written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Formats like C's `%.12e`: `-1.234567890123e-05`, `nan`, `inf`.
pub fn fmt_e12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

/// Writes one CSV row of numbers.
pub fn write_row<W: Write>(w: &mut W, vals: &[f64]) -> io::Result<()> {
    let line: Vec<String> = vals.iter().map(|&v| fmt_e12(v)).collect();
    writeln!(w, "{}", line.join(","))
}

/// Ensemble bundle: pair_id,t,x1,x2,v1,v2. Terminated pairs contribute
/// their partial path; rows are ordered by pair id.
pub fn write_trajectories_csv<W: Write>(w: &mut W, ens: &Ensemble) -> io::Result<()> {
    writeln!(w, "pair_id,t,x1,x2,v1,v2")?;
    let mut rows: Vec<(usize, &TrajectoryPair)> = ens.indices.iter().copied().zip(&ens.pairs).collect();
    rows.extend(ens.failures.iter().filter_map(|f| f.partial.as_ref().map(|p| (f.index, p))));
    rows.sort_by_key(|r| r.0);
    for (id, p) in rows {
        for s in &p.samples {
            write!(w, "{id},")?;
            write_row(w, &[s.t, s.x1, s.x2, s.v1, s.v2])?;
        }
    }
    Ok(())
}

/// Snapshot: pair_id,x1,x2.
pub fn write_snapshot_csv<W: Write>(w: &mut W, ids: &[usize], pts: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "pair_id,x1,x2")?;
    for (id, &(a, b)) in ids.iter().zip(pts) {
        write!(w, "{id},")?;
        write_row(w, &[a, b])?;
    }
    Ok(())
}

/// Single-particle boosted tracks: pair_id,particle,t_source,t,x,v,backwards.
pub fn write_tracks_csv<'a, W: Write>(
    w: &mut W,
    tracks: impl IntoIterator<Item = (usize, u8, &'a [BoostedSample])>,
) -> io::Result<()> {
    writeln!(w, "pair_id,particle,t_source,t,x,v,backwards")?;
    for (id, particle, tr) in tracks {
        for s in tr {
            write!(w, "{id},{particle},")?;
            let line = [fmt_e12(s.t_source), fmt_e12(s.t), fmt_e12(s.x), fmt_e12(s.v)].join(",");
            writeln!(w, "{line},{}", u8::from(s.backwards))?;
        }
    }
    Ok(())
}

/// Standard meta block attached to every JSON output.
pub fn meta(kind: &str, extra: Value) -> Value {
    let mut m = json!({
        "schema_version": SCHEMA_VERSION,
        "generator": concat!("bohm-sim ", env!("CARGO_PKG_VERSION")),
        "kind": kind,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut m, extra) {
        dst.extend(src);
    }
    m
}

/// `{"meta": ..., "data": ...}` pretty-printed.
pub fn write_json<W: Write, T: Serialize>(w: &mut W, meta: Value, data: &T) -> io::Result<()> {
    let v = json!({ "meta": meta, "data": data });
    serde_json::to_writer_pretty(&mut *w, &v).map_err(io::Error::other)?;
    writeln!(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_e12(1.0), "1.000000000000e+00");
        assert_eq!(fmt_e12(-1.5e-5), "-1.500000000000e-05");
        assert_eq!(fmt_e12(6.02214076e23), "6.022140760000e+23");
        assert_eq!(fmt_e12(1e-300), "1.000000000000e-300");
        assert_eq!(fmt_e12(0.0), "0.000000000000e+00");
        assert_eq!(fmt_e12(f64::NAN), "nan");
        assert_eq!(fmt_e12(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn round_trips_through_parse() {
        for x in [0.1234567890123456, -98765.4321, 3.0e-7] {
            let y: f64 = fmt_e12(x).parse().unwrap();
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn meta_block() {
        let m = meta("test", json!({"seed": 4}));
        assert_eq!(m["schema_version"], 1);
        assert_eq!(m["seed"], 4);
        let mut buf = Vec::new();
        write_json(&mut buf, m, &[1, 2]).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["data"][1], 2);
    }
}
