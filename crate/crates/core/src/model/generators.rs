use crate::blockstruct::DenseMat;
use crate::model::rng::{standard_normal, RngSpec};
use crate::model::system::{CoupledSystem, Subsystem};
use crate::spectral::spectral_radius;
use crate::{Error, Result};

/// `n` copies of `F = [[0.9, β], [0, 0.9]]`, `H = [1 1]`, `V = I₂`, `R = 1`,
/// `G = [1 1]ᵀ`, with `U = 1`.
pub fn make_identical_chain(beta: f64, n: usize) -> Result<CoupledSystem<f64>> {
    let sub = Subsystem {
        transition: DenseMat::from_rows(&[[0.9, beta], [0.0, 0.9]])?,
        observation: DenseMat::from_rows(&[[1.0, 1.0]])?,
        process_cov: DenseMat::identity(2),
        meas_cov: DenseMat::identity(1),
        coupling: DenseMat::from_rows(&[[1.0], [1.0]])?,
    };
    CoupledSystem::identical(&sub, n, DenseMat::identity(1))
}

/// Random test instance. Each `F⁽ⁱ⁾` is a Gaussian matrix rescaled to
/// spectral radius `spectral_radius_cap`; covariances are `AAᵀ + 0.1 I`.
pub fn make_random_system(
    c: usize,
    d: usize,
    r: usize,
    n: usize,
    spectral_radius_cap: f64,
    rng: &RngSpec,
) -> Result<CoupledSystem<f64>> {
    if c == 0 || d == 0 || r == 0 || n == 0 {
        return Err(Error::Validation(format!("dimensions must be positive (c={c}, d={d}, r={r}, n={n})")));
    }
    if !(spectral_radius_cap >= 0.0) {
        return Err(Error::Validation("spectral_radius_cap must be non-negative".into()));
    }
    let mut g = rng.rng()?;
    let mut gauss = |rows: usize, cols: usize| DenseMat::from_fn(rows, cols, |_, _| standard_normal(&mut g));
    let spd = |k: usize, gauss: &mut dyn FnMut(usize, usize) -> DenseMat<f64>| {
        let a = gauss(k, k);
        (&a.matmul_t(&a) + &DenseMat::identity(k).scale(0.1)).symmetrized()
    };
    let mut subs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = gauss(c, c);
        let rho = spectral_radius(&a)?;
        let transition = if rho > 0.0 { a.scale(spectral_radius_cap / rho) } else { DenseMat::zeros(c, c) };
        let observation = gauss(d, c);
        let process_cov = spd(c, &mut gauss);
        let meas_cov = spd(d, &mut gauss);
        let coupling = gauss(c, r);
        subs.push(Subsystem { transition, observation, process_cov, meas_cov, coupling });
    }
    let input_cov = spd(r, &mut gauss);
    CoupledSystem::new(&subs, input_cov)
}

/// Highest total polynomial degree used for drift modes.
pub const MAX_MODE_DEGREE: usize = 10;

/// Speckle drift model plus the orthonormal pixel basis behind `G`.
#[derive(Clone, Debug)]
pub struct SpeckleSystem {
    pub system: CoupledSystem<f64>,
    /// `n_pixels × ⌈r/2⌉`, orthonormal columns.
    pub modes: DenseMat<f64>,
}

/// Per-pixel complex field `[Re E, Im E]` with `F = I`, tiny `V`, and
/// increments spanned by `r_modes` smooth modes.
///
/// The modes are low-order 2-D monomials on a square pixel grid,
/// orthonormalized over the pixels. The first `⌈r/2⌉` input columns drive
/// the real channel and the remaining `⌊r/2⌋` the imaginary channel, so
/// `GᵀG = I`. `V = 1e-4·s²·I₂`, `U = s²·I_r` with `s = drift_scale`.
/// `H = [1 0]`, `R = 1` are placeholders that the EKF relinearizes each step.
pub fn make_speckle_system(n_pixels: usize, r_modes: usize, drift_scale: f64) -> Result<SpeckleSystem> {
    if r_modes == 0 || n_pixels < r_modes {
        return Err(Error::Validation(format!("need n_pixels ≥ r_modes ≥ 1 (got {n_pixels}, {r_modes})")));
    }
    let re_modes = r_modes.div_ceil(2);
    let im_modes = r_modes / 2;
    let modes = polynomial_modes(n_pixels, re_modes)?;
    let var = drift_scale * drift_scale;
    let subs: Vec<Subsystem<f64>> = (0..n_pixels)
        .map(|i| {
            let coupling = DenseMat::from_fn(2, r_modes, |ch, k| match (ch, k < re_modes) {
                (0, true) => modes[(i, k)],
                (1, false) => modes[(i, k - re_modes)],
                _ => 0.0,
            });
            Subsystem {
                transition: DenseMat::identity(2),
                observation: DenseMat::from_rows(&[[1.0, 0.0]]).expect("1×2"),
                process_cov: DenseMat::identity(2).scale(1e-4 * var),
                meas_cov: DenseMat::identity(1),
                coupling,
            }
        })
        .collect();
    debug_assert!(im_modes <= re_modes);
    let system = CoupledSystem::new(&subs, DenseMat::identity(r_modes).scale(var))?;
    Ok(SpeckleSystem { system, modes })
}

/// Side length of the square grid holding `n_pixels` pixels row by row.
pub fn grid_width(n_pixels: usize) -> usize {
    let mut w = (n_pixels as f64).sqrt().floor() as usize;
    while w * w < n_pixels {
        w += 1;
    }
    w.max(1)
}

fn polynomial_modes(n_pixels: usize, count: usize) -> Result<DenseMat<f64>> {
    let w = grid_width(n_pixels);
    let h = n_pixels.div_ceil(w);
    let coord = |k: usize, len: usize| if len > 1 { 2.0 * k as f64 / (len - 1) as f64 - 1.0 } else { 0.0 };
    let exponents: Vec<(i32, i32)> = (0..=MAX_MODE_DEGREE as i32)
        .flat_map(|deg| (0..=deg).rev().map(move |px| (px, deg - px)))
        .take(count)
        .collect();
    if exponents.len() < count {
        return Err(Error::Validation(format!(
            "{count} modes per channel exceed the degree-{MAX_MODE_DEGREE} polynomial basis"
        )));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (k, &(px, py)) in exponents.iter().enumerate() {
        let mut v: Vec<f64> =
            (0..n_pixels).map(|p| coord(p % w, w).powi(px) * coord(p / w, h).powi(py)).collect();
        let raw = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &cols {
                let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-8 * raw.max(1e-300)) {
            return Err(Error::Validation(format!(
                "mode {k} (x^{px} y^{py}) is degenerate on a {n_pixels}-pixel grid"
            )));
        }
        v.iter_mut().for_each(|a| *a /= norm);
        cols.push(v);
    }
    Ok(DenseMat::from_fn(n_pixels, count, |i, k| cols[k][i]))
}
