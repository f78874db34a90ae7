use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::blockstruct::{BlockDiagMat, DenseMat};
use crate::model::{make_identical_chain, make_random_system, simulate, CoupledSystem, RngSpec};
use crate::spectral::sym_min_eigenvalue;

fn random_prior(sys: &CoupledSystem<f64>, seed: u64) -> BdFilterState<f64> {
    let mut g = RngSpec::new(seed).rng().unwrap();
    let c = sys.c();
    let blocks: Vec<DenseMat<f64>> = (0..sys.n())
        .map(|_| {
            let a = DenseMat::from_fn(c, c, |_, _| g.random_range(-1.0..1.0));
            (&a.matmul_t(&a) + &DenseMat::identity(c).scale(0.2)).symmetrized()
        })
        .collect();
    let x = (0..sys.state_dim()).map(|_| g.random_range(-2.0..2.0)).collect();
    BdFilterState::new(x, BlockDiagMat::from_blocks(&blocks).unwrap()).unwrap()
}

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut g = RngSpec::new(seed).rng().unwrap();
    (0..len).map(|_| g.random_range(-3.0..3.0)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    a / b.max(1e-300)
}

fn vec_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn vec_norm(a: &[f64]) -> f64 {
    a.iter().map(|p| p * p).sum::<f64>().sqrt()
}

/// Runs both BD variants for `steps` steps and returns the worst relative
/// covariance, state and gain-action errors.
fn fast_vs_naive(sys: &CoupledSystem<f64>, steps: usize, seed: u64) -> (f64, f64, f64) {
    let mut naive = random_prior(sys, seed);
    let mut fast = naive.clone();
    let (mut ep, mut ex, mut ek) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..steps {
        let y = random_vec(sys.meas_dim(), seed * 1000 + k as u64);
        let (nn, gain) = bdkf_naive_step(&naive, sys, Observation::Measured(&y)).unwrap();
        let (ff, work) = bdkf_fast_step(&fast, sys, Observation::Measured(&y)).unwrap();
        ep = ep.max(rel((&nn.p.to_dense() - &ff.p.to_dense()).frobenius_norm(), nn.p.frobenius_norm()));
        ex = ex.max(rel(vec_dist(&nn.x, &ff.x), vec_norm(&nn.x)));
        for j in 0..5 {
            let z = random_vec(sys.meas_dim(), seed * 7919 + (k * 5 + j) as u64);
            let dense = gain.mul_vec(&z);
            ek = ek.max(rel(vec_dist(&dense, &work.gain_action(&z)), vec_norm(&dense)));
        }
        naive = nn;
        fast = ff;
    }
    (ep, ex, ek)
}

#[test]
fn fast_matches_naive_on_random_systems() {
    for (k, &n) in [2usize, 4, 8, 16, 32].iter().enumerate() {
        let (c, d, r) = (1 + k % 3, 1 + k % 2, 1 + (k * 3) % 4);
        let sys = make_random_system(c, d, r, n, 0.95, &RngSpec::new(k as u64)).unwrap();
        let (ep, ex, ek) = fast_vs_naive(&sys, 10, k as u64 + 100);
        assert!(ep <= 1e-9 && ex <= 1e-9 && ek <= 1e-9, "n={n}: {ep:e} {ex:e} {ek:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fast_naive_equivalence(n in 1usize..12, c in 1usize..4, d in 1usize..3, r in 1usize..5, seed in 0u64..1_000_000) {
        let sys = make_random_system(c, d, r, n, 0.95, &RngSpec::new(seed)).unwrap();
        let (ep, ex, ek) = fast_vs_naive(&sys, 4, seed);
        prop_assert!(ep <= 1e-9, "covariance {ep:e}");
        prop_assert!(ex <= 1e-9, "state {ex:e}");
        prop_assert!(ek <= 1e-9, "gain {ek:e}");
    }

    #[test]
    fn covariance_blocks_stay_symmetric_psd(n in 1usize..8, c in 1usize..4, r in 1usize..4, seed in 0u64..1_000_000) {
        let sys = make_random_system(c, 1, r, n, 0.95, &RngSpec::new(seed)).unwrap();
        let mut st = random_prior(&sys, seed);
        for k in 0..5 {
            let y = random_vec(n, seed + k);
            st = bdkf_fast_step(&st, &sys, Observation::Measured(&y)).unwrap().0;
            for i in 0..n {
                let b = st.p.block_mat(i);
                prop_assert!(b.asymmetry() <= 1e-12 * b.max_abs().max(1.0));
                prop_assert!(sym_min_eigenvalue(&b).unwrap() >= -1e-10 * b.trace());
            }
        }
    }
}

#[test]
fn single_subsystem_matches_full_kf() {
    let sys = make_random_system(3, 2, 2, 1, 0.9, &RngSpec::new(4)).unwrap();
    let ds = sys.dense_stack().unwrap();
    let mut bd = random_prior(&sys, 5);
    let mut naive = bd.clone();
    let mut full = bd.to_dense();
    for k in 0..15 {
        let y = random_vec(2, k);
        bd = bdkf_fast_step(&bd, &sys, Observation::Measured(&y)).unwrap().0;
        naive = bdkf_naive_step(&naive, &sys, Observation::Measured(&y)).unwrap().0;
        full = full_kf_step(&full, &ds, Observation::Measured(&y)).unwrap();
    }
    assert!((&bd.p.to_dense() - &full.p).max_abs() <= 1e-10);
    assert!((&naive.p.to_dense() - &full.p).max_abs() <= 1e-10);
    assert!(vec_dist(&bd.x, &full.x) <= 1e-10);
}

fn assert_bd_equals_banded(sys: &CoupledSystem<f64>) {
    let mut fast = random_prior(sys, 9);
    let mut naive = fast.clone();
    let mut banded = fast.clone();
    for k in 0..10 {
        let y = random_vec(sys.meas_dim(), 40 + k);
        fast = bdkf_fast_step(&fast, sys, Observation::Measured(&y)).unwrap().0;
        naive = bdkf_naive_step(&naive, sys, Observation::Measured(&y)).unwrap().0;
        banded = banded_kf_step(&banded, sys, Observation::Measured(&y)).unwrap();
    }
    assert!((&fast.p.to_dense() - &banded.p.to_dense()).max_abs() <= 1e-10);
    assert!((&naive.p.to_dense() - &banded.p.to_dense()).max_abs() <= 1e-10);
    assert!(vec_dist(&fast.x, &banded.x) <= 1e-10);
    assert!(vec_dist(&naive.x, &banded.x) <= 1e-10);
}

#[test]
fn zero_input_covariance_reduces_to_banded() {
    let sys = make_random_system(2, 1, 3, 6, 0.9, &RngSpec::new(2)).unwrap();
    assert_bd_equals_banded(&sys.with_input_cov(DenseMat::zeros(3, 3)).unwrap());
}

#[test]
fn zero_coupling_reduces_to_banded() {
    let sys = make_random_system(2, 2, 2, 5, 0.9, &RngSpec::new(3)).unwrap();
    let subs: Vec<_> = sys
        .subsystems()
        .into_iter()
        .map(|mut s| {
            s.coupling = DenseMat::zeros(2, 2);
            s
        })
        .collect();
    assert_bd_equals_banded(&CoupledSystem::new(&subs, sys.input_cov().clone()).unwrap());
}

#[test]
fn naive_is_projection_of_dense_update() {
    let sys = make_identical_chain(0.5, 3).unwrap();
    let ds = sys.dense_stack().unwrap();
    let prior = BdFilterState::new(vec![0.0; 6], BlockDiagMat::identity(3, 2)).unwrap();
    let y = [1.0, -0.5, 2.0];
    let (bd, _) = bdkf_naive_step(&prior, &sys, Observation::Measured(&y)).unwrap();
    let full = full_kf_step(&prior.to_dense(), &ds, Observation::Measured(&y)).unwrap();
    let projected = crate::blockstruct::project_d(&full.p, 2).unwrap();
    assert!((&bd.p.to_dense() - &projected.to_dense()).max_abs() <= 1e-12);
}

#[test]
fn banded_blocks_equal_isolated_filters() {
    let sys = make_identical_chain(0.1, 4).unwrap();
    let traj = simulate(&sys, 50, &[0.0; 8], &RngSpec::new(11)).unwrap();
    let mut st = BdFilterState::new(vec![0.0; 8], BlockDiagMat::identity(4, 2)).unwrap();
    let solo_sys = sys.banded_block(0).unwrap();
    let solo_ds = solo_sys.dense_stack().unwrap();
    let mut solo = DenseFilterState::new(vec![0.0; 2], DenseMat::identity(2)).unwrap();
    for y in &traj.measurements {
        st = banded_kf_step(&st, &sys, Observation::Measured(y)).unwrap();
        solo = full_kf_step(&solo, &solo_ds, Observation::Measured(&y[..1])).unwrap();
    }
    for i in 0..4 {
        assert!((&st.p.block_mat(i) - &solo.p).max_abs() <= 1e-12);
    }
    assert!(vec_dist(&st.x[..2], &solo.x) <= 1e-12);
}

#[test]
fn coupling_posterior_basics() {
    let sys = make_random_system(2, 1, 3, 8, 0.9, &RngSpec::new(6)).unwrap();
    let st = random_prior(&sys, 1);
    let y = random_vec(8, 2);
    let (_, work) = bdkf_fast_step(&st, &sys, Observation::Measured(&y)).unwrap();
    let zero = coupling_posterior(&work, &[0.0; 8]).unwrap();
    assert!(zero.mu.iter().all(|&m| m == 0.0));
    assert_eq!(zero.sigma, work.c1);
    let gap = sys.input_cov() - &zero.sigma;
    assert!(sym_min_eigenvalue(&gap).unwrap() >= -1e-10);
    // C₂ and C₁ coincide in exact arithmetic
    assert!((&work.c2 - &work.c1).max_abs() <= 1e-10 * work.c1.max_abs());
    assert!(coupling_posterior(&work, &[0.0; 3]).is_err());
}

#[test]
fn dense_gain_matches_naive() {
    let sys = make_random_system(3, 2, 2, 4, 0.9, &RngSpec::new(12)).unwrap();
    let st = random_prior(&sys, 3);
    let y = random_vec(8, 4);
    let (_, k_naive) = bdkf_naive_step(&st, &sys, Observation::Measured(&y)).unwrap();
    let (_, work) = bdkf_fast_step(&st, &sys, Observation::Measured(&y)).unwrap();
    assert!((&work.dense_gain() - &k_naive).max_abs() <= 1e-10 * k_naive.max_abs());
}

#[test]
fn non_pd_measurement_block_is_reported() {
    let sys = make_identical_chain(0.1, 3).unwrap();
    let h = BlockDiagMat::zeros(3, 1, 2);
    let mut r = BlockDiagMat::identity(3, 1);
    r.block_mut(2)[0] = 0.0;
    let sys = sys.with_measurement(h, r).unwrap();
    let st = BdFilterState::new(vec![0.0; 6], BlockDiagMat::identity(3, 2)).unwrap();
    let err = bdkf_fast_step(&st, &sys, Observation::Measured(&[0.0; 3])).unwrap_err();
    assert!(matches!(err, crate::Error::NotPositiveDefinite { what: "M", block: 2 }));
    assert!(err.is_numerical());
}

#[test]
fn shape_errors() {
    let sys = make_identical_chain(0.1, 2).unwrap();
    let st = BdFilterState::new(vec![0.0; 4], BlockDiagMat::identity(2, 2)).unwrap();
    assert!(bdkf_fast_step(&st, &sys, Observation::Measured(&[0.0; 3])).is_err());
    let bad = BdFilterState { x: vec![0.0; 3], ..st.clone() };
    assert!(banded_kf_step(&bad, &sys, Observation::Measured(&[0.0; 2])).is_err());
}

#[test]
fn works_in_single_precision() {
    let sys = make_random_system(2, 1, 2, 6, 0.9, &RngSpec::new(21)).unwrap();
    let sys32 = sys.cast::<f32>();
    let st = random_prior(&sys, 2);
    let st32 = BdFilterState::new(st.x.iter().map(|&v| v as f32).collect(), st.p.cast()).unwrap();
    let y = random_vec(6, 5);
    let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let (a, _) = bdkf_fast_step(&st, &sys, Observation::Measured(&y)).unwrap();
    let (b, _) = bdkf_fast_step(&st32, &sys32, Observation::Measured(&y32)).unwrap();
    let diff = (&a.p.to_dense() - &b.p.cast::<f64>().to_dense()).max_abs();
    assert!(diff <= 1e-4 * a.p.max_abs(), "{diff}");
}
