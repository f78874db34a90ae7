use bdkf::blockstruct::DenseMat;
use bdkf::model::{make_identical_chain, make_random_system, simulate, CoupledSystem, RngSpec};

const STEPS: usize = 100_000;

fn sample_cov(rows: impl Iterator<Item = Vec<f64>>, dim: usize) -> DenseMat<f64> {
    let mut sum = vec![0.0; dim];
    let mut outer = DenseMat::<f64>::zeros(dim, dim);
    let mut count = 0usize;
    for r in rows {
        let o = outer.as_mut_slice();
        for i in 0..dim {
            sum[i] += r[i];
            for j in 0..dim {
                o[i * dim + j] += r[i] * r[j];
            }
        }
        count += 1;
    }
    let m = count as f64;
    DenseMat::from_fn(dim, dim, |i, j| (outer.row(i)[j] - sum[i] * sum[j] / m) / (m - 1.0))
}

fn rel(a: &DenseMat<f64>, b: &DenseMat<f64>) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm()
}

fn check_process_noise(sys: &CoupledSystem<f64>, seed: u64) {
    let dim = sys.state_dim();
    let traj = simulate(sys, STEPS, &vec![0.0; dim], &RngSpec::new(seed)).unwrap();
    let f = sys.transition().to_dense();
    let prev = std::iter::once(&traj.initial).chain(&traj.states);
    let steps = prev.zip(&traj.states).map(|(a, b)| {
        let fa = f.mul_vec(a);
        b.iter().zip(fa).map(|(x, y)| x - y).collect::<Vec<_>>()
    });
    let cov = sample_cov(steps, dim);
    let q = sys.total_process_cov().unwrap();
    let err = rel(&cov, &q);
    assert!(err < 0.05, "process noise covariance off by {err:.3} (relative Frobenius)");

    let h = sys.observation().to_dense();
    let resid = traj.states.iter().zip(&traj.measurements).map(|(x, y)| {
        let hx = h.mul_vec(x);
        y.iter().zip(hx).map(|(a, b)| a - b).collect::<Vec<_>>()
    });
    let r = sys.meas_cov().to_dense();
    let err = rel(&sample_cov(resid, r.rows()), &r);
    assert!(err < 0.05, "measurement noise covariance off by {err:.3} (relative Frobenius)");
}

#[test]
fn chain_increments_match_process_noise() {
    check_process_noise(&make_identical_chain(0.5, 3).unwrap(), 11);
}

#[test]
fn random_system_increments_match_process_noise() {
    check_process_noise(&make_random_system(2, 2, 3, 4, 0.9, &RngSpec::new(4)).unwrap(), 12);
}
