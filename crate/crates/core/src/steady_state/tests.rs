use super::*;
use crate::blockstruct::{BlockDiagMat, DenseMat};
use crate::filters::{bdkf_fast_step, BdFilterState, Observation};
use crate::model::{make_identical_chain, make_random_system, CoupledSystem, RngSpec, Subsystem};
use crate::spectral::sym_min_eigenvalue;

fn scalar(f: f64, h: f64, q: f64, r: f64) -> CoupledSystem<f64> {
    let m = |v: f64| DenseMat::from_rows(&[[v]]).unwrap();
    let sub = Subsystem { transition: m(f), observation: m(h), process_cov: m(q), meas_cov: m(r), coupling: m(0.0) };
    CoupledSystem::identical(&sub, 1, m(0.0)).unwrap()
}

fn uncoupled(sys: &CoupledSystem<f64>) -> CoupledSystem<f64> {
    sys.with_input_cov(DenseMat::zeros(sys.r(), sys.r())).unwrap()
}

fn total_q(sys: &CoupledSystem<f64>) -> DenseMat<f64> {
    sys.total_process_cov().unwrap()
}

#[test]
fn deadbeat_scalar() {
    let sys = scalar(0.0, 1.0, 2.5, 0.7);
    let res = solve_dare(&sys, &total_q(&sys), IterOptions::default(), None).unwrap();
    assert!((res.p_minus.to_dense()[(0, 0)] - 2.5).abs() < 1e-14);
}

#[test]
fn perfect_measurement() {
    let m = DenseMat::from_rows(&[[0.5, 0.2], [0.0, 0.7]]).unwrap();
    let sub = Subsystem {
        transition: m,
        observation: DenseMat::identity(2),
        process_cov: DenseMat::from_rows(&[[1.0, 0.3], [0.3, 2.0]]).unwrap(),
        meas_cov: DenseMat::identity(2).scale(1e-10),
        coupling: DenseMat::zeros(2, 1),
    };
    let sys = CoupledSystem::identical(&sub, 1, DenseMat::identity(1)).unwrap();
    let q = total_q(&sys);
    let res = solve_dare(&sys, &q, IterOptions::default(), None).unwrap();
    assert!(res.p_plus.to_dense().max_abs() < 1e-9);
    assert!((&res.p_minus.to_dense() - &q).max_abs() < 1e-9);
}

/// `‖P − F(P − PHᵀ(HPHᵀ+R)⁻¹HP)Fᵀ − Q‖ / ‖P‖`
fn riccati_residual(sys: &CoupledSystem<f64>, q: &DenseMat<f64>, p: &DenseMat<f64>) -> f64 {
    let ds = sys.dense_stack().unwrap();
    let (f, h) = (&ds.transition, &ds.observation);
    let hp = h.matmul(p);
    let s = &hp.matmul_t(h) + &ds.meas_cov;
    let pp = p - &hp.t_matmul(&s.solve(&hp).unwrap());
    (p - &(&f.sandwich(&pp) + q)).frobenius_norm() / p.frobenius_norm()
}

#[test]
fn chain_riccati_residual() {
    let sys = make_identical_chain(0.5, 1).unwrap();
    let q = total_q(&sys);
    let res = solve_dare(&sys, &q, IterOptions::default(), None).unwrap();
    assert!(res.converged && res.detectable);
    assert!(riccati_residual(&sys, &q, &res.p_minus.to_dense()) <= 1e-10);
}

#[test]
fn bd_without_input_matches_per_block_dare() {
    let sys = uncoupled(&make_random_system(2, 1, 2, 3, 0.9, &RngSpec::new(3)).unwrap());
    let bd = solve_bd_dare(&sys, IterOptions::default(), None).unwrap();
    let full = solve_dare(&sys, &total_q(&sys), IterOptions::default(), None).unwrap();
    let diff = &bd.p_minus.to_dense() - &full.p_minus.to_dense();
    assert!(diff.max_abs() <= 1e-9 * full.p_minus.to_dense().max_abs());
}

#[test]
fn bd_fixed_point_is_unique_and_monotone() {
    let sys = make_identical_chain(0.1, 8).unwrap();
    let opts = IterOptions::default();
    let lo = solve_bd_dare(&sys, opts, Some(&BlockDiagMat::identity(8, 2).scale(0.01))).unwrap();
    let hi = solve_bd_dare(&sys, opts, Some(&BlockDiagMat::identity(8, 2).scale(100.0))).unwrap();
    let diff = (&lo.p_minus.to_dense() - &hi.p_minus.to_dense()).frobenius_norm();
    assert!(diff <= 1e-6, "{diff}");

    let mut p = BlockDiagMat::zeros(8, 2, 2);
    for _ in 0..60 {
        let next = bd_riccati_map(&sys, &p).unwrap();
        let inc = next.sub(&p).unwrap();
        for i in 0..8 {
            assert!(sym_min_eigenvalue(&inc.block_mat(i)).unwrap() >= -1e-10);
        }
        p = next;
    }
}

#[test]
fn steady_gain_reproduces_fixed_point() {
    let sys = make_random_system(2, 1, 3, 6, 0.9, &RngSpec::new(17)).unwrap();
    let res = solve_bd_dare(&sys, IterOptions::default(), None).unwrap();
    let Covariance::Block(p) = &res.p_plus else { panic!("block covariance expected") };
    let st = BdFilterState::new(vec![0.0; 12], p.clone()).unwrap();
    let (next, work) = bdkf_fast_step(&st, &sys, Observation::Measured(&[0.0; 6])).unwrap();
    assert!((&next.p.to_dense() - &p.to_dense()).frobenius_norm() <= 1e-9 * p.frobenius_norm());
    let Gain::Factored(g) = &res.gain else { panic!("factored gain expected") };
    assert!((&g.dense_gain() - &work.dense_gain()).max_abs() <= 1e-9);
}

#[test]
fn banded_properties() {
    let sys = make_identical_chain(0.5, 4).unwrap();
    let res = banded_steady(&sys, IterOptions::default()).unwrap();
    let p = res.p_plus.to_dense();
    let b0 = p.submatrix(0, 0, 2, 2);
    for i in 1..4 {
        assert_eq!(p.submatrix(2 * i, 2 * i, 2, 2), b0);
    }
    let more = banded_steady(&make_identical_chain(0.5, 9).unwrap(), IterOptions::default()).unwrap();
    assert_eq!(more.p_plus.diag_block(0, 2), b0);

    let random = uncoupled(&make_random_system(2, 1, 1, 3, 0.8, &RngSpec::new(5)).unwrap());
    let banded = banded_steady(&random, IterOptions::default()).unwrap();
    let full = solve_dare(&random, &total_q(&random), IterOptions::default(), None).unwrap();
    assert!((&banded.p_plus.to_dense() - &full.p_plus.to_dense()).max_abs() <= 1e-9);
}

#[test]
fn lowrank_norm_matches_dense() {
    let sys = make_random_system(3, 1, 2, 5, 0.9, &RngSpec::new(2)).unwrap();
    let res = solve_bd_dare(&sys, IterOptions::with_tol(1e-8), None).unwrap();
    let dense = res.p_minus.to_dense().frobenius_norm();
    assert!((res.p_minus.frobenius_norm() - dense).abs() <= 1e-12 * dense);
}

#[test]
fn coupling_without_input_is_trivial() {
    let base = make_random_system(2, 1, 2, 4, 0.9, &RngSpec::new(8)).unwrap();
    let subs: Vec<_> = base
        .subsystems()
        .into_iter()
        .map(|mut s| {
            s.coupling = DenseMat::zeros(2, 2);
            s
        })
        .collect();
    let sys = CoupledSystem::new(&subs, base.input_cov().clone()).unwrap();
    let banded = banded_steady(&sys, IterOptions::default()).unwrap();
    let Covariance::Block(p) = &banded.p_plus else { unreachable!() };
    let cs = compute_c(&sys, p).unwrap();
    assert!((&cs.c - sys.input_cov()).max_abs() <= 1e-14);
    assert!(cs.eps.iter().all(|&e| e == 0.0));
    assert_eq!(cs.eta, 0.0);
}

fn chain_c(beta: f64, n: usize, r_scale: f64) -> DenseMat<f64> {
    let sys = make_identical_chain(beta, n).unwrap();
    let sys = sys.with_measurement(sys.observation().clone(), sys.meas_cov().scale(r_scale)).unwrap();
    let banded = banded_steady(&sys, IterOptions::default()).unwrap();
    let Covariance::Block(p) = &banded.p_plus else { unreachable!() };
    compute_c(&sys, p).unwrap().c
}

#[test]
fn coupling_shrinks_like_one_over_n() {
    let mut scaled = Vec::new();
    let mut prev = f64::INFINITY;
    for n in [8, 16, 32, 64, 128, 256] {
        let c = chain_c(0.5, n, 1.0).frobenius_norm();
        assert!(c < prev);
        prev = c;
        scaled.push(c * n as f64);
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi / lo < 2.0, "{scaled:?}");
}

#[test]
fn noisier_measurements_increase_coupling() {
    let small = chain_c(0.5, 8, 1.0);
    let big = chain_c(0.5, 8, 2.0);
    assert!(sym_min_eigenvalue(&(&big - &small)).unwrap() >= -1e-10);
}

#[test]
fn alpha_examples() {
    let dead = Subsystem {
        transition: DenseMat::zeros(2, 2),
        observation: DenseMat::from_rows(&[[1.0, 0.0]]).unwrap(),
        process_cov: DenseMat::identity(2),
        meas_cov: DenseMat::identity(1),
        coupling: DenseMat::zeros(2, 1),
    };
    let al = alpha_constants(&dead, &DenseMat::identity(2)).unwrap();
    assert_eq!(al.a1, 1.0);
    assert_eq!(al.a2, 0.0);

    let sym = Subsystem {
        transition: DenseMat::from_rows(&[[0.5, 0.0], [0.0, 0.3]]).unwrap(),
        observation: DenseMat::identity(2),
        process_cov: DenseMat::identity(2),
        meas_cov: DenseMat::identity(2),
        coupling: DenseMat::zeros(2, 1),
    };
    let al = alpha_constants(&sym, &DenseMat::identity(2)).unwrap();
    assert!((al.bauer_fike - 1.0).abs() < 1e-12);
}

#[test]
fn alpha_matches_independent_evaluation() {
    use nalgebra::DMatrix;
    let sys = uncoupled(&make_identical_chain(0.1, 1).unwrap());
    let res = banded_steady(&sys, IterOptions::default()).unwrap();
    let pm = res.p_minus.diag_block(0, 2);
    let al = alpha_constants(&sys.subsystem(0), &pm).unwrap();

    let na = |m: &DenseMat<f64>| DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let (f, h, r, p) = (na(&sys.subsystem(0).transition), na(&sys.subsystem(0).observation), na(&sys.subsystem(0).meas_cov), na(&pm));
    let s_inv = (&h * &p * h.transpose() + &r).try_inverse().unwrap();
    let k = &p * h.transpose() * &s_inv;
    let fc = (DMatrix::identity(2, 2) - &k * &h) * &f;
    let rho = fc.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let two = |m: DMatrix<f64>| m.singular_values().max();
    let a3 = two((DMatrix::identity(2, 2) + &p * h.transpose() * r.try_inverse().unwrap() * &h).try_inverse().unwrap());
    let expect = [
        1.0 / (1.0 - rho * rho),
        two(fc.clone()),
        a3,
        two(h.transpose() * &s_inv * &h * &f),
        two(h.transpose() * &s_inv * &h),
    ];
    let got = [al.a1, al.a2, al.a3, al.a4, al.a5];
    for (g, e) in got.iter().zip(expect) {
        assert!((g - e).abs() <= 1e-10 * e.abs().max(1.0), "{got:?} vs {expect:?}");
    }
}

fn prop2_for(sys: &CoupledSystem<f64>, with_full: bool) -> Prop2Report {
    let opts = IterOptions::default();
    let v_only = uncoupled(sys);
    let base = banded_steady(&v_only, opts).unwrap();
    let banded = banded_steady(sys, opts).unwrap();
    let Covariance::Block(pg) = &banded.p_plus else { unreachable!() };
    let coupling = compute_c(sys, pg).unwrap();
    let alphas: Vec<_> = (0..sys.n())
        .map(|i| alpha_constants(&sys.subsystem(i), &base.p_minus.diag_block(i, sys.c())).unwrap())
        .collect();
    let bd = solve_bd_dare(sys, opts, None).unwrap();
    let full = with_full.then(|| solve_dare(sys, &total_q(sys), opts, None).unwrap());
    prop2_bounds(sys, &alphas, &coupling, &base, &bd, full.as_ref()).unwrap()
}

#[test]
fn prop2_without_input_is_zero() {
    let sys = uncoupled(&make_identical_chain(0.3, 4).unwrap());
    let rep = prop2_for(&sys, true);
    assert_eq!(rep.eta, 0.0);
    assert!(rep.part1_bound.iter().all(|&b| b == 0.0));
    assert_eq!(rep.part2_bound_p, 0.0);
    assert!(rep.part1_measured.iter().all(|&m| m <= 1e-9));
    assert!(rep.part2_measured_p_bd <= 1e-9);
    assert!(rep.part2_measured_fc_bd.unwrap() <= 1e-9);
}

#[test]
fn prop2_holds_for_weak_coupling() {
    let sys = make_identical_chain(0.1, 16).unwrap();
    let sys = sys.with_input_cov(sys.input_cov().scale(1e-3)).unwrap();
    let rep = prop2_for(&sys, true);
    assert!(rep.part1_condition_ok.iter().all(|&ok| ok));
    assert!(rep.part2_condition_ok);
    assert!(rep.part2_bound_p <= rep.part2_bound_p_loose);
    assert!(rep.bounds_hold(), "{rep:?}");
}

#[test]
fn true_error_with_optimal_gain_is_kalman_covariance() {
    let sys = make_random_system(2, 1, 2, 3, 0.9, &RngSpec::new(31)).unwrap();
    let q = total_q(&sys);
    let res = solve_dare(&sys, &q, IterOptions::default(), None).unwrap();
    let sigma = true_error_cov(&sys, &res.gain.to_dense(), IterOptions::default()).unwrap();
    assert!((&sigma - &res.p_plus.to_dense()).max_abs() <= 1e-8);
}

#[test]
fn true_error_with_zero_gain_solves_lyapunov() {
    let sys = make_random_system(2, 1, 1, 2, 0.7, &RngSpec::new(4)).unwrap();
    let ds = sys.dense_stack().unwrap();
    let sigma = true_error_cov(&sys, &DenseMat::zeros(4, 2), IterOptions::default()).unwrap();
    let rhs = &ds.transition.sandwich(&sigma) + &ds.total_process_cov;
    assert!((&sigma - &rhs).max_abs() <= 1e-9 * sigma.max_abs());
}

#[test]
fn true_error_rejects_unstable_loop() {
    let sys = scalar(1.5, 1.0, 1.0, 1.0);
    assert!(matches!(true_error_cov(&sys, &DenseMat::zeros(1, 1), IterOptions::default()), Err(crate::Error::Domain(_))));
}

fn check_orderings(sys: &CoupledSystem<f64>, tag: &str) {
    let opts = IterOptions::default();
    let bd = solve_bd_dare(sys, opts, None).unwrap();
    let banded = banded_steady(sys, opts).unwrap();
    let base = banded_steady(&uncoupled(sys), opts).unwrap();
    let pm = base.p_minus.to_dense();
    let gap = sym_min_eigenvalue(&(&bd.p_minus.to_dense() - &pm)).unwrap();
    assert!(gap >= -1e-8 * pm.frobenius_norm(), "{tag}: {gap}");
    let pg = banded.p_plus.to_dense();
    let gap = sym_min_eigenvalue(&(&pg - &bd.p_plus.to_dense())).unwrap();
    assert!(gap >= -1e-8 * pg.frobenius_norm(), "{tag}: {gap}");
}

#[test]
fn orderings_on_random_systems() {
    for seed in 0..5 {
        check_orderings(&make_random_system(2, 1, 2, 4, 0.9, &RngSpec::new(seed)).unwrap(), &format!("seed {seed}"));
    }
    for beta in [0.1, 1.0, 2.0] {
        check_orderings(&make_identical_chain(beta, 8).unwrap(), &format!("beta {beta}"));
    }
}

#[test]
fn projected_prior_is_not_above_coupled_prior() {
    // D{X} is not ordered against X, so the BD prior can undercut the coupled one
    let sys = make_identical_chain(1.0, 8).unwrap();
    let opts = IterOptions::default();
    let full = solve_dare(&sys, &total_q(&sys), opts, None).unwrap();
    let bd = solve_bd_dare(&sys, opts, None).unwrap();
    let gap = sym_min_eigenvalue(&(&bd.p_minus.to_dense() - &full.p_minus.to_dense())).unwrap();
    assert!(gap < -0.1, "{gap}");
}

#[test]
fn non_convergence_reports_history() {
    let sys = make_identical_chain(0.1, 2).unwrap();
    let err = solve_bd_dare(&sys, IterOptions { tol: 1e-11, max_iter: 3 }, None).unwrap_err();
    let crate::Error::NonConvergence { iterations, history, .. } = err else { panic!("{err:?}") };
    assert_eq!(iterations, 3);
    assert_eq!(history.len(), 3);
}
