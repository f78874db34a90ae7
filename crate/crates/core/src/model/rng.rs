//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed. Normals come
//! from `rand_distr::StandardNormal` (ziggurat). Poisson counts use
//! sequential inversion below a mean of 30 and Hörmann's PTRS transformed
//! rejection above it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blockstruct::DenseMat;
use crate::{Error, Real, Result};

pub const CHACHA8: &str = "chacha8";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngSpec {
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
}

fn default_algorithm() -> String {
    CHACHA8.to_owned()
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, algorithm: default_algorithm() }
    }

    pub fn rng(&self) -> Result<ChaCha8Rng> {
        self.stream(0)
    }

    /// Independent sub-stream `k` of this seed (ChaCha stream id).
    pub fn stream(&self, k: u64) -> Result<ChaCha8Rng> {
        if self.algorithm != CHACHA8 {
            return Err(Error::Validation(format!(
                "unknown rng algorithm {:?} (supported: {CHACHA8})",
                self.algorithm
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        Ok(rng)
    }

    /// A child spec whose seed is derived from this one and `salt`.
    pub fn derive(&self, salt: u64) -> Self {
        // splitmix64 finalizer
        let mut z = self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self { seed: z ^ (z >> 31), algorithm: self.algorithm.clone() }
    }
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Lower-triangular `L` with `L Lᵀ = cov` for a symmetric PSD `cov`.
///
/// Semidefinite Cholesky: a pivot within `1e-12·max|cov|` of zero zeroes its
/// column; a pivot below `−1e-10·max|cov|` is a validation error.
pub fn psd_factor<T: Real>(cov: &DenseMat<T>, what: &str) -> Result<DenseMat<f64>> {
    if !cov.is_square() {
        return Err(Error::Validation(format!("{what}: covariance must be square, got {:?}", cov.shape())));
    }
    let a: DenseMat<f64> = cov.cast();
    let n = a.rows();
    let scale = a.max_abs();
    if a.asymmetry() > 1e-10 * scale.max(1.0) {
        return Err(Error::Validation(format!("{what}: covariance is not symmetric")));
    }
    let tol = 1e-12 * scale;
    let mut l = DenseMat::<f64>::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|p| l[(j, p)] * l[(j, p)]).sum::<f64>();
        if d < -1e-10 * scale {
            return Err(Error::Validation(format!("{what}: covariance is not positive semidefinite")));
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - (0..j).map(|p| l[(i, p)] * l[(j, p)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    let resid = (&l.matmul_t(&l) - &a).max_abs();
    if resid > 1e-8 * scale.max(1e-300) {
        return Err(Error::Validation(format!("{what}: covariance is not positive semidefinite")));
    }
    Ok(l)
}

/// Appends `L ξ` with `ξ ~ N(0, I)` to `out`.
pub fn sample_gaussian<R: Rng + ?Sized>(factor: &DenseMat<f64>, rng: &mut R, out: &mut Vec<f64>) {
    let n = factor.rows();
    let xi: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
    for i in 0..n {
        out.push((0..=i).map(|p| factor[(i, p)] * xi[p]).sum());
    }
}

/// Poisson(mean) draw.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 30.0 {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p < f64::MIN_POSITIVE && cdf >= u {
            break;
        }
        if k > 1000 {
            break;
        }
    }
    k
}

/// Hörmann (1993), "The transformed rejection method for generating Poisson
/// random variables", algorithm PTRS.
fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let invalpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * invalpha / (a / (us * us) + b)).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_spec_same_stream() {
        let a: Vec<f64> = {
            let mut r = RngSpec::new(7).rng().unwrap();
            (0..5).map(|_| standard_normal(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = RngSpec::new(7).rng().unwrap();
            (0..5).map(|_| standard_normal(&mut r)).collect()
        };
        assert_eq!(a, b);
        let mut other = RngSpec::new(7).stream(1).unwrap();
        assert_ne!(a[0], standard_normal(&mut other));
    }

    #[test]
    fn unknown_algorithm_rejected() {
        let spec = RngSpec { seed: 1, algorithm: "mt19937".into() };
        assert!(matches!(spec.rng(), Err(Error::Validation(_))));
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for k in 1..20 {
            fact *= k as f64;
            assert!((ln_gamma(k as f64 + 1.0) - fact.ln()).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn poisson_moments_both_regimes() {
        let mut rng = RngSpec::new(11).rng().unwrap();
        for &mean in &[0.3, 4.0, 29.0, 31.0, 250.0] {
            let n = 40_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_poisson(mean, &mut rng) as f64).collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            // five standard errors of the sample mean / variance
            assert!((m - mean).abs() < 5.0 * (mean / n as f64).sqrt(), "mean {mean}: {m}");
            let var_se = (mean * (1.0 + 2.0 * mean) / n as f64).sqrt();
            assert!((var - mean).abs() < 5.0 * var_se, "var {mean}: {var}");
        }
    }

    #[test]
    fn psd_factor_handles_singular_and_rejects_indefinite() {
        let z = DenseMat::<f64>::zeros(2, 2);
        assert_eq!(psd_factor(&z, "z").unwrap(), z);
        let rank1 = DenseMat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let l = psd_factor(&rank1, "r1").unwrap();
        assert!((&l.matmul_t(&l) - &rank1).max_abs() < 1e-14);
        let bad = DenseMat::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(psd_factor(&bad, "bad"), Err(Error::Validation(_))));
    }
}
