//! Desk-scale studies: decoupling sweep, synthetic speckle tracking,
//! per-step scaling and Monte Carlo error covariances.

mod bench;
mod decoupling;
mod monte_carlo;
mod output;
mod speckle;

pub use bench::{loglog_slope, median_time, scaling_benchmark, BenchConfig, BenchRow};
pub use decoupling::{
    decoupling_cell, decoupling_study, dist_p_slope, empirical_critical_beta, DecouplingConfig, DecouplingRow,
};
pub use monte_carlo::{monte_carlo_error, GainSource};
pub use output::{
    fmt_f64, write_bench_csv, write_decoupling_csv, write_speckle_csv, BENCH_HEADER, DECOUPLING_HEADER, SPECKLE_HEADER,
};
pub use speckle::{
    speckle_probes, speckle_seed, speckle_study, summarize_speckle, SpeckleConfig, SpeckleRow, SpeckleSummary,
    FULL_EKF_PIXEL_CAP, PROBE_COUNT,
};
