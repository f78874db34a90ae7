use std::io::Write;

use crate::experiments::{BenchRow, DecouplingRow, SpeckleRow};
use crate::{Error, Result};

pub const DECOUPLING_HEADER: [&str; 6] = ["beta", "n", "dist_P0", "dist_P", "dist_P0_full", "converged"];
pub const SPECKLE_HEADER: [&str; 5] = ["seed", "step", "filter", "mse", "step_time_s"];
pub const BENCH_HEADER: [&str; 5] = ["filter", "n", "r", "median_step_time_s", "reps"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn write_rows<W: Write, const K: usize>(
    out: W,
    header: [&str; K],
    rows: impl Iterator<Item = [String; K]>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_decoupling_csv<W: Write>(out: W, rows: &[DecouplingRow]) -> Result<()> {
    write_rows(
        out,
        DECOUPLING_HEADER,
        rows.iter().map(|r| {
            [fmt_f64(r.beta), r.n.to_string(), fmt_f64(r.dist_p0), fmt_f64(r.dist_p), fmt_f64(r.dist_p0_full), r.converged.to_string()]
        }),
    )
}

pub fn write_speckle_csv<W: Write>(out: W, rows: &[SpeckleRow]) -> Result<()> {
    write_rows(
        out,
        SPECKLE_HEADER,
        rows.iter().map(|r| {
            [r.seed.to_string(), r.step.to_string(), r.filter.tag().to_string(), fmt_f64(r.mse), fmt_f64(r.step_time_s)]
        }),
    )
}

pub fn write_bench_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    write_rows(
        out,
        BENCH_HEADER,
        rows.iter().map(|r| {
            [r.filter.to_string(), r.n.to_string(), r.r.to_string(), fmt_f64(r.median_step_time_s), r.reps.to_string()]
        }),
    )
}
