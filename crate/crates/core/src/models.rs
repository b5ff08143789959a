//! Skill-level classification (1-nearest-neighbor) and score prediction
//! (linear epsilon-insensitive support vector regression).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::SkillLevel;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("model has no training points")]
    EmptyModel,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("solver hit the {iterations}-iteration cap with relative duality gap {gap:.3e}")]
    NoConvergence { iterations: usize, gap: f64 },
}

/// Nearest-neighbor classifier over reduced feature vectors.
#[derive(Debug, Clone)]
pub struct KnnModel {
    points: DMatrix<f64>,
    labels: Vec<SkillLevel>,
}

impl KnnModel {
    pub fn new(points: DMatrix<f64>, labels: Vec<SkillLevel>) -> Result<Self, ModelError> {
        if points.nrows() == 0 {
            return Err(ModelError::EmptyModel);
        }
        if points.nrows() != labels.len() {
            return Err(ModelError::DimMismatch {
                expected: points.nrows(),
                got: labels.len(),
            });
        }
        Ok(KnnModel { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Label of the training point nearest to `x` in Euclidean distance;
/// ties go to the lowest training index.
pub fn knn_classify(model: &KnnModel, x: &DVector<f64>) -> Result<SkillLevel, ModelError> {
    if x.len() != model.dim() {
        return Err(ModelError::DimMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, row) in model.points.row_iter().enumerate() {
        let mut d = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            let diff = a - b;
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(model.labels[best])
}

/// A fitted linear SVR: `predict(x) = weights . x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvrModel {
    pub weights: DVector<f64>,
    pub bias: f64,
    pub c: f64,
    pub epsilon: f64,
}

/// Training objective: `0.5 ||w||^2 + C * sum max(0, |w.x_i + b - y_i| - eps)`.
pub fn svr_objective(
    x: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    epsilon: f64,
    w: &DVector<f64>,
    b: f64,
) -> f64 {
    0.5 * w.dot(w) + c * hinge_loss(x, y, epsilon, w, b)
}

/// Epsilon-insensitive training loss (unweighted sum).
pub fn hinge_loss(x: &DMatrix<f64>, y: &[f64], epsilon: f64, w: &DVector<f64>, b: f64) -> f64 {
    let mut loss = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let pred = x.row(i).transpose().dot(w) + b;
        loss += ((pred - yi).abs() - epsilon).max(0.0);
    }
    loss
}

const SVR_MAX_ITER: usize = 200;
const SVR_REL_GAP: f64 = 1e-6;

/// Fits the epsilon-insensitive linear SVR by solving the primal as a
/// small dense QP with a Mehrotra predictor-corrector interior-point
/// method, then certifying the result with an independent primal-dual
/// gap at the `1e-6` relative optimality contract.
///
/// The bias is not regularized; it is recovered exactly from the final
/// weights by minimizing the piecewise-linear primal in `b`.
pub fn svr_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    epsilon: f64,
) -> Result<LinearSvrModel, ModelError> {
    let n = x.nrows();
    if n < 2 {
        return Err(ModelError::BadParam(format!("need n >= 2 samples, got {n}")));
    }
    if y.len() != n {
        return Err(ModelError::DimMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(ModelError::BadParam(format!("C must be positive, got {c}")));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(ModelError::BadParam(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }

    // Primal QP in z = (w, b, xi): minimize 1/2||w||^2 + C sum(xi)
    // subject to the 3n rows  w.x_i + b - xi_i <= y_i + eps,
    // -w.x_i - b - xi_i <= -y_i + eps, and -xi_i <= 0.
    let k = x.ncols();
    let nv = k + 1 + n;
    let m = 3 * n;
    let mut g_mat = DMatrix::<f64>::zeros(m, nv);
    let mut h = DVector::<f64>::zeros(m);
    for i in 0..n {
        for j in 0..k {
            g_mat[(i, j)] = x[(i, j)];
            g_mat[(n + i, j)] = -x[(i, j)];
        }
        g_mat[(i, k)] = 1.0;
        g_mat[(n + i, k)] = -1.0;
        g_mat[(i, k + 1 + i)] = -1.0;
        g_mat[(n + i, k + 1 + i)] = -1.0;
        g_mat[(2 * n + i, k + 1 + i)] = -1.0;
        h[i] = y[i] + epsilon;
        h[n + i] = -y[i] + epsilon;
    }
    let mut q = DVector::<f64>::zeros(nv);
    for i in 0..n {
        q[k + 1 + i] = c;
    }

    let mut z = DVector::<f64>::zeros(nv);
    let mut s = DVector::<f64>::from_fn(m, |i, _| h[i].abs().max(1.0));
    let mut lam = DVector::<f64>::from_element(m, 1.0);
    let g_t = g_mat.transpose();
    let h_scale = 1.0 + h.amax();
    let q_scale = 1.0 + q.amax();

    let mut iterations = 0usize;
    for iter in 0..SVR_MAX_ITER {
        iterations = iter + 1;
        let r_prim = &g_mat * &z + &s - &h;
        let mut r_dual = &g_t * &lam + &q;
        for i in 0..k {
            r_dual[i] += z[i];
        }
        let gap = s.dot(&lam);
        let obj = 0.5 * z.rows(0, k).norm_squared() + q.dot(&z);
        if gap / (1.0 + obj.abs()) < 1e-10
            && r_prim.amax() / h_scale < 1e-10
            && r_dual.amax() / q_scale.max(obj.abs()) < 1e-9
        {
            break;
        }

        let mu = gap / m as f64;
        let d = lam.component_div(&s);
        let mut kkt = &g_t * DMatrix::from_diagonal(&d) * &g_mat;
        for i in 0..k {
            kkt[(i, i)] += 1.0;
        }
        let mut reg = 0.0;
        let chol = loop {
            match kkt.clone().cholesky() {
                Some(f) => break f,
                None => {
                    reg = if reg == 0.0 { 1e-10 } else { reg * 100.0 };
                    if reg > 1.0 {
                        return Err(ModelError::NoConvergence {
                            iterations,
                            gap: f64::INFINITY,
                        });
                    }
                    for i in 0..nv {
                        kkt[(i, i)] += reg * (1.0 + kkt[(i, i)].abs());
                    }
                }
            }
        };

        let solve = |r_cent: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
            let tmp = (lam.component_mul(&r_prim) - r_cent).component_div(&s);
            let rhs = -(&r_dual) - &g_t * tmp;
            let dz = chol.solve(&rhs);
            let ds = -(&r_prim) - &g_mat * &dz;
            let dlam = (-r_cent - lam.component_mul(&ds)).component_div(&s);
            (dz, ds, dlam)
        };
        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            let mut alpha = 1.0f64;
            for i in 0..m {
                if dv[i] < 0.0 {
                    alpha = alpha.min(-v[i] / dv[i]);
                }
            }
            alpha
        };

        // Mehrotra predictor-corrector with separate primal/dual steps
        let r_cent_aff = s.component_mul(&lam);
        let (_, ds_a, dl_a) = solve(&r_cent_aff);
        let ap_aff = max_step(&s, &ds_a).min(1.0);
        let ad_aff = max_step(&lam, &dl_a).min(1.0);
        let mu_aff = (&s + &ds_a * ap_aff).dot(&(&lam + &dl_a * ad_aff)) / m as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let r_cent = s.component_mul(&lam) + ds_a.component_mul(&dl_a)
            - DVector::from_element(m, sigma * mu);
        let (dz, ds, dlam) = solve(&r_cent);
        let alpha_p = (0.995 * max_step(&s, &ds)).min(1.0);
        let alpha_d = (0.995 * max_step(&lam, &dlam)).min(1.0);
        z += dz * alpha_p;
        s += ds * alpha_p;
        lam += dlam * alpha_d;
    }

    // independent optimality certificate: exact bias for the returned
    // weights plus the dual value from beta = lambda_plus - lambda_minus
    let w = z.rows(0, k).into_owned();
    let mut beta: Vec<f64> = (0..n).map(|i| (lam[n + i] - lam[i]).clamp(-c, c)).collect();
    let (w, b, gap) = certify(x, y, c, epsilon, &mut beta, w);
    if gap <= SVR_REL_GAP {
        Ok(LinearSvrModel {
            weights: w,
            bias: b,
            c,
            epsilon,
        })
    } else {
        Err(ModelError::NoConvergence { iterations, gap })
    }
}

/// Independent optimality certificate: restores the dual equality
/// constraint exactly, recovers the exact primal-optimal bias for the
/// given weights, and returns the relative primal-dual gap.
fn certify(
    x: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    epsilon: f64,
    beta: &mut [f64],
    w: DVector<f64>,
) -> (DVector<f64>, f64, f64) {
    // absorb float drift of sum(beta) into the entry with most room
    let drift: f64 = beta.iter().sum();
    if drift != 0.0 {
        let mut best = 0;
        let mut room = f64::NEG_INFINITY;
        for (idx, b) in beta.iter().enumerate() {
            let r = if drift > 0.0 { b + c } else { c - b };
            if r > room {
                room = r;
                best = idx;
            }
        }
        beta[best] = (beta[best] - drift).clamp(-c, c);
    }

    let b = optimal_bias(&w, x, y, epsilon);
    let primal = svr_objective(x, y, c, epsilon, &w, b);

    let w_dual = x.transpose() * DVector::from_column_slice(beta);
    let quad = 0.5 * w_dual.norm_squared();
    let l1: f64 = beta.iter().map(|v| v.abs()).sum();
    let ydot: f64 = beta.iter().zip(y).map(|(b, y)| b * y).sum();
    let dual = -quad + ydot - epsilon * l1;

    let gap = (primal - dual) / primal.abs().max(1.0);
    (w, b, gap)
}

/// Exact minimizer over `b` of the primal loss given fixed weights: the
/// loss is piecewise linear in `b`, so some breakpoint attains the min.
fn optimal_bias(w: &DVector<f64>, x: &DMatrix<f64>, y: &[f64], epsilon: f64) -> f64 {
    let residuals: Vec<f64> = (0..x.nrows())
        .map(|i| x.row(i).transpose().dot(w) - y[i])
        .collect();
    let mut candidates = Vec::with_capacity(2 * residuals.len());
    for r in &residuals {
        candidates.push(-r - epsilon);
        candidates.push(-r + epsilon);
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let loss = |b: f64| -> f64 {
        residuals
            .iter()
            .map(|r| ((r + b).abs() - epsilon).max(0.0))
            .sum()
    };
    let mut best = candidates[0];
    let mut best_loss = loss(best);
    for cand in candidates.into_iter().skip(1) {
        let l = loss(cand);
        if l < best_loss {
            best_loss = l;
            best = cand;
        }
    }
    best
}

/// `weights . x + bias`.
pub fn svr_predict(model: &LinearSvrModel, x: &DVector<f64>) -> Result<f64, ModelError> {
    if x.len() != model.weights.len() {
        return Err(ModelError::DimMismatch {
            expected: model.weights.len(),
            got: x.len(),
        });
    }
    Ok(model.weights.dot(x) + model.bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(data)
    }

    #[test]
    fn knn_returns_exact_match_label() {
        let points = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 10.0, 10.0]);
        let model = KnnModel::new(points, vec![SkillLevel::Novice, SkillLevel::Expert]).unwrap();
        assert_eq!(
            knn_classify(&model, &v(&[10.0, 10.0])).unwrap(),
            SkillLevel::Expert
        );
        assert_eq!(
            knn_classify(&model, &v(&[1.0, 1.0])).unwrap(),
            SkillLevel::Novice
        );
    }

    #[test]
    fn knn_tie_breaks_to_lowest_index() {
        let points = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let model =
            KnnModel::new(points, vec![SkillLevel::Intermediate, SkillLevel::Expert]).unwrap();
        assert_eq!(
            knn_classify(&model, &v(&[0.0])).unwrap(),
            SkillLevel::Intermediate
        );
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(
            KnnModel::new(DMatrix::zeros(0, 2), vec![]),
            Err(ModelError::EmptyModel)
        ));
        let model = KnnModel::new(DMatrix::zeros(1, 2), vec![SkillLevel::Novice]).unwrap();
        assert!(matches!(
            knn_classify(&model, &v(&[1.0])),
            Err(ModelError::DimMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn svr_realizable_line_has_zero_loss() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let x = DMatrix::from_column_slice(12, 1, &xs);
        let y: Vec<f64> = xs.iter().map(|v| 0.5 * v + 1.0).collect();
        let model = svr_fit(&x, &y, 10.0, 0.1).unwrap();
        let loss = hinge_loss(&x, &y, 0.1, &model.weights, model.bias);
        assert!(loss < 1e-6, "hinge loss {loss}");
        for (i, yi) in y.iter().enumerate() {
            let pred = svr_predict(&model, &v(&[xs[i]])).unwrap();
            assert!((pred - yi).abs() <= 0.1 + 1e-6);
        }
    }

    #[test]
    fn svr_constant_targets_zero_epsilon() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = vec![3.5; 5];
        let model = svr_fit(&x, &y, 1.0, 0.0).unwrap();
        // w = 0, b = c attains objective 0; solver must be within tolerance
        let obj = svr_objective(&x, &y, 1.0, 0.0, &model.weights, model.bias);
        assert!(obj <= 1e-6, "objective {obj}");
        assert!((svr_predict(&model, &v(&[9.0])).unwrap() - 3.5).abs() < 1e-3);
    }

    #[test]
    fn svr_rejects_bad_params() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(
            svr_fit(&x, &y, 0.0, 0.1),
            Err(ModelError::BadParam(_))
        ));
        assert!(matches!(
            svr_fit(&x, &y, 1.0, -0.1),
            Err(ModelError::BadParam(_))
        ));
        assert!(matches!(
            svr_fit(&x, &y[..2], 1.0, 0.1),
            Err(ModelError::DimMismatch { .. })
        ));
    }

    #[test]
    fn svr_predict_fixed_weights() {
        let model = LinearSvrModel {
            weights: v(&[0.0, 0.0]),
            bias: 3.5,
            c: 1.0,
            epsilon: 0.1,
        };
        assert_eq!(svr_predict(&model, &v(&[7.0, -2.0])).unwrap(), 3.5);
        let model = LinearSvrModel {
            weights: v(&[1.0, -1.0]),
            bias: 0.0,
            c: 1.0,
            epsilon: 0.1,
        };
        assert_eq!(svr_predict(&model, &v(&[2.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn svr_unseen_point_on_line_within_tube() {
        // interpolated point: the fitted line stays inside the tube
        // between training abscissae
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let x = DMatrix::from_column_slice(12, 1, &xs);
        let y: Vec<f64> = xs.iter().map(|v| 0.5 * v + 1.0).collect();
        let model = svr_fit(&x, &y, 10.0, 0.1).unwrap();
        let pred = svr_predict(&model, &v(&[5.5])).unwrap();
        assert!((pred - 3.75).abs() <= 0.1 + 1e-6);
    }

    #[test]
    fn svr_hinge_loss_non_increasing_in_c() {
        let x = DMatrix::from_fn(20, 3, |r, c| ((r * 3 + c) as f64 * 0.7).sin());
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.43).cos() * 3.0).collect();
        let mut prev = f64::INFINITY;
        for c in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let model = svr_fit(&x, &y, c, 0.1).unwrap();
            let loss = hinge_loss(&x, &y, 0.1, &model.weights, model.bias);
            assert!(loss <= prev + 1e-6, "loss {loss} after {prev} at C={c}");
            prev = loss;
        }
    }
}
