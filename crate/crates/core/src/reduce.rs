//! PCA dimensionality reduction, fitted on training features only.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("PCA needs at least 2 training rows, got {0}")]
    DegenerateInput(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("bad model text: {0}")]
    Parse(String),
}

/// A fitted PCA basis: column means, orthonormal component rows, and
/// per-component explained variance (non-increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    components: DMatrix<f64>,
    explained_variance: DVector<f64>,
    clamped_from: Option<usize>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn explained_variance(&self) -> &DVector<f64> {
        &self.explained_variance
    }

    /// The requested component count when it had to be clamped to
    /// `min(n - 1, p)`, `None` when it was honored as-is.
    pub fn clamped_from(&self) -> Option<usize> {
        self.clamped_from
    }

    pub fn transform(&self, x: &DVector<f64>) -> Result<DVector<f64>, ReduceError> {
        if x.len() != self.dim() {
            return Err(ReduceError::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(&self.components * (x - &self.mean))
    }

    /// Maps a reduced vector back into feature space.
    pub fn reconstruct(&self, z: &DVector<f64>) -> Result<DVector<f64>, ReduceError> {
        if z.len() != self.k() {
            return Err(ReduceError::DimMismatch {
                expected: self.k(),
                got: z.len(),
            });
        }
        Ok(self.components.transpose() * z + &self.mean)
    }

    /// Flat text serialization at 17 significant digits: a header line,
    /// the mean, then component rows followed by explained variances.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "pca k={} dim={} clamped_from={}\n",
            self.k(),
            self.dim(),
            self.clamped_from.map_or("-".to_string(), |v| v.to_string())
        );
        push_row(&mut out, self.mean.iter());
        for row in self.components.row_iter() {
            push_row(&mut out, row.iter());
        }
        push_row(&mut out, self.explained_variance.iter());
        out
    }

    pub fn from_text(text: &str) -> Result<PcaModel, ReduceError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| ReduceError::Parse("empty".into()))?;
        let mut k = None;
        let mut dim = None;
        let mut clamped = None;
        for field in header.split_whitespace().skip(1) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| ReduceError::Parse(format!("bad header field `{field}`")))?;
            match key {
                "k" => k = Some(parse_usize(value)?),
                "dim" => dim = Some(parse_usize(value)?),
                "clamped_from" => {
                    clamped = if value == "-" {
                        Some(None)
                    } else {
                        Some(Some(parse_usize(value)?))
                    }
                }
                _ => return Err(ReduceError::Parse(format!("unknown header key `{key}`"))),
            }
        }
        let (k, dim) = match (k, dim) {
            (Some(k), Some(dim)) => (k, dim),
            _ => return Err(ReduceError::Parse("missing k/dim".into())),
        };
        let mean = DVector::from_vec(parse_row(lines.next(), dim)?);
        let mut components = DMatrix::<f64>::zeros(k, dim);
        for r in 0..k {
            let row = parse_row(lines.next(), dim)?;
            for (c, v) in row.into_iter().enumerate() {
                components[(r, c)] = v;
            }
        }
        let explained = DVector::from_vec(parse_row(lines.next(), k)?);
        Ok(PcaModel {
            mean,
            components,
            explained_variance: explained,
            clamped_from: clamped.flatten(),
        })
    }
}

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&format!("{v:.16e}"));
        first = false;
    }
    out.push('\n');
}

fn parse_usize(s: &str) -> Result<usize, ReduceError> {
    s.parse()
        .map_err(|_| ReduceError::Parse(format!("bad integer `{s}`")))
}

fn parse_row(line: Option<&str>, expected: usize) -> Result<Vec<f64>, ReduceError> {
    let line = line.ok_or_else(|| ReduceError::Parse("truncated model text".into()))?;
    let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    let values = values.map_err(|e| ReduceError::Parse(format!("bad float: {e}")))?;
    if values.len() != expected {
        return Err(ReduceError::Parse(format!(
            "row of {} values, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

/// Fits PCA on `x` (rows are training samples). The requested `k` is
/// clamped to `min(k, n - 1, p)`; the clamp is recorded in the model.
/// Components follow a deterministic sign convention: each row's entry of
/// largest magnitude (lowest index on ties) is non-negative.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel, ReduceError> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(ReduceError::DegenerateInput(n));
    }
    let k_eff = k.min(n - 1).min(p).max(1);
    let clamped_from = (k_eff != k).then_some(k);

    let mean = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / n as f64));
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut components = DMatrix::<f64>::zeros(k_eff, p);
    let mut explained = DVector::<f64>::zeros(k_eff);
    for r in 0..k_eff {
        let sv = if r < svd.singular_values.len() {
            svd.singular_values[r]
        } else {
            0.0
        };
        explained[r] = sv * sv / (n as f64 - 1.0);
        let row = v_t.row(r);
        // sign convention: largest-magnitude entry non-negative
        let mut pivot = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[pivot].abs() {
                pivot = i;
            }
        }
        let flip = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..p {
            components[(r, c)] = flip * row[c];
        }
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
        clamped_from,
    })
}

/// Projects `x` onto the fitted basis: `components * (x - mean)`.
pub fn pca_transform(model: &PcaModel, x: &DVector<f64>) -> Result<DVector<f64>, ReduceError> {
    model.transform(x)
}
