//! Independent oracles for the integration suites: direct-summation
//! transforms, brute-force ApEn, an exact QP solve for SVR, normal
//! equations for least squares, and counting-based rank statistics.
//! Everything here is deliberately the slow, obvious route.

#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus};
use clarabel::solver::SupportedConeT::NonnegativeConeT;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Orthonormal DCT-II by direct O(L^2) summation.
pub fn dct_direct(signal: &[f64]) -> Vec<f64> {
    let l = signal.len();
    (0..l)
        .map(|k| {
            let mut acc = 0.0;
            for (n, s) in signal.iter().enumerate() {
                acc += s
                    * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64
                        / (2.0 * l as f64))
                        .cos();
            }
            let c = if k == 0 {
                1.0 / 2.0f64.sqrt()
            } else {
                1.0
            };
            c * (2.0 / l as f64).sqrt() * acc
        })
        .collect()
}

/// DFT bin magnitudes by direct O(L^2) summation.
pub fn dft_direct_magnitudes(signal: &[f64], q: usize) -> Vec<f64> {
    let l = signal.len();
    (0..q)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, s) in signal.iter().enumerate() {
                let angle = -std::f64::consts::TAU * k as f64 * n as f64 / l as f64;
                re += s * angle.cos();
                im += s * angle.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Brute-force ApEn: the double-loop count per embedded vector with
/// self-matches, then the mean-log difference. `r_eff` is absolute.
pub fn apen_bruteforce(signal: &[f64], m: usize, tau: usize, r_eff: f64) -> f64 {
    let phi = |m: usize| -> f64 {
        let n_vec = signal.len() - (m - 1) * tau;
        let mut acc = 0.0;
        for i in 0..n_vec {
            let mut count = 0usize;
            for j in 0..n_vec {
                let mut dist = 0.0f64;
                for l in 0..m {
                    dist = dist.max((signal[i + l * tau] - signal[j + l * tau]).abs());
                }
                if dist <= r_eff {
                    count += 1;
                }
            }
            acc += (count as f64 / n_vec as f64).ln();
        }
        acc / n_vec as f64
    };
    phi(m) - phi(m + 1)
}

/// Exact optimal objective of the epsilon-insensitive linear SVR primal,
/// solved as a dense QP in (w, b, xi) by an interior-point method.
pub fn svr_qp_objective(x: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64) -> f64 {
    let n = x.nrows();
    let k = x.ncols();
    let nv = k + 1 + n;

    // P: identity on the w block
    let p_dense = DMatrix::<f64>::from_fn(nv, nv, |r, col| {
        if r == col && r < k {
            1.0
        } else {
            0.0
        }
    });
    let mut q = vec![0.0; nv];
    for slot in q.iter_mut().skip(k + 1) {
        *slot = c;
    }

    // rows: w.x_i + b - xi_i <= y_i + eps; -w.x_i - b - xi_i <= -y_i + eps;
    // -xi_i <= 0
    let mut a_dense = DMatrix::<f64>::zeros(3 * n, nv);
    let mut b_vec = vec![0.0; 3 * n];
    for i in 0..n {
        for j in 0..k {
            a_dense[(i, j)] = x[(i, j)];
            a_dense[(n + i, j)] = -x[(i, j)];
        }
        a_dense[(i, k)] = 1.0;
        a_dense[(n + i, k)] = -1.0;
        a_dense[(i, k + 1 + i)] = -1.0;
        a_dense[(n + i, k + 1 + i)] = -1.0;
        a_dense[(2 * n + i, k + 1 + i)] = -1.0;
        b_vec[i] = y[i] + epsilon;
        b_vec[n + i] = -y[i] + epsilon;
        b_vec[2 * n + i] = 0.0;
    }

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-12)
        .tol_feas(1e-12)
        .max_iter(200)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(
        &csc_from_dense(&p_dense),
        &q,
        &csc_from_dense(&a_dense),
        &b_vec,
        &[NonnegativeConeT(3 * n)],
        settings,
    );
    solver.solve();
    assert!(
        matches!(
            solver.solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        ),
        "oracle QP did not solve: {:?}",
        solver.solution.status
    );
    solver.solution.obj_val
}

fn csc_from_dense(m: &DMatrix<f64>) -> CscMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut colptr = Vec::with_capacity(cols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for c in 0..cols {
        for r in 0..rows {
            let v = m[(r, c)];
            if v != 0.0 {
                rowval.push(r);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

/// Least squares by explicit normal equations `(Y^T Y)^-1 Y^T g`,
/// solved with an LU factorization. Full-rank systems only.
pub fn normal_equations(y: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let yty = y.transpose() * y;
    let ytg = y.transpose() * g;
    yty.lu().solve(&ytg).expect("full-rank normal equations")
}

/// Average ranks by O(n^2) counting: 1 + number smaller + half the
/// number of equal others.
pub fn ranks_by_counting(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let smaller = values.iter().filter(|o| *o < v).count();
            let equal = values.iter().filter(|o| *o == v).count();
            1.0 + smaller as f64 + (equal as f64 - 1.0) / 2.0
        })
        .collect()
}

/// Rank-then-Pearson Spearman oracle. Identical or mirrored rankings are
/// exactly +/-1 in real arithmetic, so they are returned exactly; a
/// constant vector returns None.
pub fn spearman_bruteforce(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = ranks_by_counting(a);
    let rb = ranks_by_counting(b);
    let n = a.len() as f64;
    let constant = |r: &[f64]| r.iter().all(|v| *v == r[0]);
    if constant(&ra) || constant(&rb) {
        return None;
    }
    if ra == rb {
        return Some(1.0);
    }
    if ra
        .iter()
        .zip(&rb)
        .all(|(x, y)| *y == n + 1.0 - x)
    {
        return Some(-1.0);
    }
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean_a) * (y - mean_b);
        va += (x - mean_a) * (x - mean_a);
        vb += (y - mean_b) * (y - mean_b);
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Deterministic uniform samples in [lo, hi).
pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
