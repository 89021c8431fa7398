//! CSV emission. Non-finite values are written as `NA`; floats use the shortest
//! representation that parses back exactly, so equal runs give equal bytes.

use std::io::Write;

use crate::error::Result;
use crate::harness::scenario::MetricsRecord;

pub const METRICS_HEADER: &str =
    "step,time,mse_heterogeneous,mse_av_only,mse_mv_only,omega_re,omega_im,rank,placement,wall_clock_s";

/// Timing columns, excluded when comparing runs for determinism.
pub const TIMING_COLUMNS: &[&str] = &["wall_clock_s", "seconds_no_eig", "seconds_with_eig"];

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        "NA".to_string()
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        let placement = r.placement.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.time),
            fmt_f64(r.mse_heterogeneous),
            fmt_f64(r.mse_av_only),
            fmt_f64(r.mse_mv_only),
            fmt_f64(r.omega_re),
            fmt_f64(r.omega_im),
            r.rank,
            placement,
            fmt_f64(r.wall_clock_s)
        )?;
    }
    Ok(())
}

/// Drops the named timing columns from CSV text.
pub fn strip_timing(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return String::new() };
    let keep: Vec<bool> = header.split(',').map(|c| !TIMING_COLUMNS.contains(&c)).collect();
    let filter = |line: &str| {
        line.split(',').zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect::<Vec<_>>().join(",")
    };
    let mut out = filter(header);
    out.push('\n');
    for l in lines {
        out.push_str(&filter(l));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_and_strip() {
        let r = MetricsRecord {
            step: 5,
            time: 0.25,
            mse_heterogeneous: 0.1,
            mse_av_only: 0.2,
            mse_mv_only: f64::NAN,
            omega_re: -1.0,
            omega_im: 0.0,
            rank: 3,
            placement: vec![4, 17],
            wall_clock_s: 0.0123,
        };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n5,0.25,0.1,0.2,NA,-1.0,0.0,3,4;17,0.0123\n"));
        let stripped = strip_timing(&text);
        assert!(!stripped.contains("wall_clock_s"));
        assert!(stripped.ends_with("3,4;17\n"));
    }
}
