//! Spearman rank correlation with average ranks for ties and a
//! two-sided Student-t p-value.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

/// Outcome of a correlation computation. A constant input vector leaves
/// rho undefined; that case is reported explicitly instead of as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Correlation {
    Defined { rho: f64, p: f64 },
    Degenerate,
}

impl Correlation {
    pub fn rho(&self) -> Option<f64> {
        match self {
            Correlation::Defined { rho, .. } => Some(*rho),
            Correlation::Degenerate => None,
        }
    }

    pub fn p(&self) -> Option<f64> {
        match self {
            Correlation::Defined { p, .. } => Some(*p),
            Correlation::Degenerate => None,
        }
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0; // positions are 1-based
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a) * (x - mean_a);
        var_b += (y - mean_b) * (y - mean_b);
    }
    if var_a == 0.0 || var_b == 0.0 {
        None
    } else {
        Some(cov / (var_a.sqrt() * var_b.sqrt()))
    }
}

/// Spearman's rho: Pearson correlation of the average-rank vectors, with
/// a two-sided p-value from `t = rho * sqrt((n-2) / (1 - rho^2))` against
/// Student-t with n-2 degrees of freedom. `rho = ±1` gives `p = 0`; the
/// p-value is NaN for n < 3.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::ShapeMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < 2 {
        return Err(EvalError::BadInput(format!(
            "need at least 2 observations, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::BadInput("non-finite observation".into()));
    }
    let ranks_a = average_ranks(a);
    let ranks_b = average_ranks(b);
    let n = a.len();
    // identical or mirrored rankings are exactly +/-1, not rounded
    let rho = if ranks_a == ranks_b {
        if ranks_a.iter().all(|r| *r == ranks_a[0]) {
            return Ok(Correlation::Degenerate);
        }
        1.0
    } else if ranks_a
        .iter()
        .zip(&ranks_b)
        .all(|(ra, rb)| *rb == (n + 1) as f64 - ra)
    {
        -1.0
    } else {
        let Some(rho) = pearson(&ranks_a, &ranks_b) else {
            return Ok(Correlation::Degenerate);
        };
        rho.clamp(-1.0, 1.0)
    };
    let p = if rho.abs() == 1.0 {
        0.0
    } else if n < 3 {
        f64::NAN
    } else {
        let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n as f64 - 2.0)
            .map_err(|e| EvalError::BadInput(format!("t-distribution: {e}")))?;
        2.0 * dist.cdf(-t.abs())
    };
    Ok(Correlation::Defined { rho, p })
}

/// Exact-style permutation p-value for small n: the fraction of `draws`
/// label shuffles whose |rho| meets or exceeds the observed |rho|
/// (add-one smoothed).
pub fn spearman_permutation_p(
    a: &[f64],
    b: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Correlation, EvalError> {
    let observed = spearman(a, b)?;
    let Correlation::Defined { rho, .. } = observed else {
        return Ok(Correlation::Degenerate);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = b.to_vec();
    let mut hits = 0usize;
    for _ in 0..draws {
        shuffled.shuffle(&mut rng);
        if let Correlation::Defined { rho: r, .. } = spearman(a, &shuffled)? {
            if r.abs() >= rho.abs() - 1e-12 {
                hits += 1;
            }
        }
    }
    let p = (hits + 1) as f64 / (draws + 1) as f64;
    Ok(Correlation::Defined { rho, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_monotone() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        match spearman(&v, &v).unwrap() {
            Correlation::Defined { rho, p } => {
                assert_eq!(rho, 1.0);
                assert_eq!(p, 0.0);
            }
            Correlation::Degenerate => panic!("unexpected degenerate"),
        }
    }

    #[test]
    fn perfect_anti_monotone() {
        let rho = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])
            .unwrap()
            .rho()
            .unwrap();
        assert_eq!(rho, -1.0);
    }

    #[test]
    fn constant_vector_is_degenerate_not_zero() {
        let r = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r, Correlation::Degenerate);
    }

    #[test]
    fn tie_ranks_are_averaged() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 30.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }

    #[test]
    fn shape_and_nan_rejected() {
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(EvalError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            spearman(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(EvalError::BadInput(_))
        ));
    }

    #[test]
    fn monotone_transform_invariance() {
        let a = [0.3, -1.2, 4.0, 2.2, 0.0, 9.1];
        let b = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let base = spearman(&a, &b).unwrap().rho().unwrap();
        let a_t: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let b_t: Vec<f64> = b.iter().map(|v| 3.0 * v + 100.0).collect();
        assert_eq!(spearman(&a_t, &b_t).unwrap().rho().unwrap(), base);
    }

    #[test]
    fn permutation_p_close_to_t_for_strong_effect() {
        let a: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v * 2.0 + 1.0).collect();
        match spearman_permutation_p(&a, &b, 200, 7).unwrap() {
            Correlation::Defined { rho, p } => {
                assert_eq!(rho, 1.0);
                assert!(p < 0.05);
            }
            Correlation::Degenerate => panic!("unexpected degenerate"),
        }
    }
}
