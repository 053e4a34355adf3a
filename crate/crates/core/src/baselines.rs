//! Comparison pipelines: PCA on flattened prestack windows and the
//! poststack (offset-stacked) feature construction.

use crate::error::{Error, Result};
use crate::features::{FeatureSet, GatherWindow, SurveyGrid};
use crate::matrix::Matrix;

/// Principal components of a feature matrix. All `d` eigenpairs are kept;
/// `retained` marks how many the variance threshold selects.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// d x d; column j is the unit eigenvector of eigenvalue j. The
    /// largest-magnitude component of each column is positive.
    pub components: Matrix,
    /// Smallest count whose cumulative variance ratio reaches the threshold.
    pub retained: usize,
    pub variance_threshold: f64,
}

/// Fits PCA on the sample covariance of mean-centered rows. The symmetric
/// eigenproblem is solved by cyclic Jacobi rotations.
pub fn pca_fit(x: &Matrix, variance_threshold: f64) -> Result<PcaModel> {
    if x.rows() < 2 {
        return Err(Error::DegenerateInput {
            context: "pca_fit",
            detail: format!("need at least 2 rows, got {}", x.rows()),
        });
    }
    if !(0.0 < variance_threshold && variance_threshold <= 1.0) {
        return Err(Error::InvalidConfigValue {
            key: "pca_variance".to_string(),
            value: variance_threshold.to_string(),
            reason: "must lie in (0, 1]".to_string(),
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite { context: "pca_fit" });
    }
    let (n, d) = (x.rows(), x.cols());
    let mean = x.column_means();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for (c, (v, m)) in centered.iter_mut().zip(x.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        for p in 0..d {
            for q in p..d {
                let v = cov.get(p, q) + centered[p] * centered[q];
                cov.set(p, q, v);
            }
        }
    }
    let denom = (n - 1) as f64;
    for p in 0..d {
        for q in p..d {
            let v = cov.get(p, q) / denom;
            cov.set(p, q, v);
            cov.set(q, p, v);
        }
    }

    let (mut eigenvalues, mut components) = jacobi_eigen(&cov);

    // descending eigenvalue order, deterministic for ties
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .expect("finite")
            .then(a.cmp(&b))
    });
    let sorted_vals: Vec<f64> = order.iter().map(|&i| eigenvalues[i].max(0.0)).collect();
    let mut sorted_vecs = Matrix::zeros(d, d);
    for (new_j, &old_j) in order.iter().enumerate() {
        // sign convention: largest-magnitude component positive
        let mut pivot = 0;
        let mut best = 0.0;
        for t in 0..d {
            let v = components.get(t, old_j).abs();
            if v > best {
                best = v;
                pivot = t;
            }
        }
        let flip = if components.get(pivot, old_j) < 0.0 { -1.0 } else { 1.0 };
        for t in 0..d {
            sorted_vecs.set(t, new_j, flip * components.get(t, old_j));
        }
    }
    eigenvalues = sorted_vals;
    components = sorted_vecs;

    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput {
            context: "pca_fit",
            detail: "zero total variance".to_string(),
        });
    }
    let mut cum = 0.0;
    let mut retained = d;
    for (i, v) in eigenvalues.iter().enumerate() {
        cum += v;
        if cum / total >= variance_threshold {
            retained = i + 1;
            break;
        }
    }

    Ok(PcaModel {
        mean,
        eigenvalues,
        components,
        retained,
        variance_threshold,
    })
}

/// Cyclic Jacobi diagonalization of a symmetric matrix. Returns the
/// eigenvalues (diagonal after convergence) and the accumulated rotations
/// (columns are eigenvectors).
fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let d = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::zeros(d, d);
    for i in 0..d {
        v.set(i, i, 1.0);
    }
    let frob: f64 = m.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = 1e-14 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..d {
                for q in p + 1..d {
                    s += 2.0 * m.get(p, q) * m.get(p, q);
                }
            }
            s.sqrt()
        };
        if off <= stop {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let mip = m.get(i, p);
                    let miq = m.get(i, q);
                    m.set(i, p, c * mip - s * miq);
                    m.set(i, q, s * mip + c * miq);
                }
                for j in 0..d {
                    let mpj = m.get(p, j);
                    let mqj = m.get(q, j);
                    m.set(p, j, c * mpj - s * mqj);
                    m.set(q, j, s * mpj + c * mqj);
                }
                for i in 0..d {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..d).map(|i| m.get(i, i)).collect();
    (eigenvalues, v)
}

/// Centered projection onto the retained components: N x r.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    let d = model.mean.len();
    if x.cols() != d {
        return Err(Error::ShapeMismatch {
            context: "pca_transform",
            detail: format!("{} columns, model has {d}", x.cols()),
        });
    }
    let r = model.retained;
    let mut out = Matrix::zeros(x.rows(), r);
    for i in 0..x.rows() {
        let row = x.row(i);
        for j in 0..r {
            let mut acc = 0.0;
            for t in 0..d {
                acc += (row[t] - model.mean[t]) * model.components.get(t, j);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Poststack feature: mean across offset traces per time sample, then
/// standardized. Returns the h-long vector and whether it was constant
/// (zeroed with a warning upstream).
pub fn stack_poststack(w: &GatherWindow) -> (Vec<f64>, bool) {
    let (h, cols) = (w.height(), w.width());
    let mut stacked = vec![0.0; h];
    for (i, s) in stacked.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..cols {
            acc += w.samples.get3(0, i, j);
        }
        *s = acc / cols as f64;
    }
    let mean = stacked.iter().sum::<f64>() / h as f64;
    let var = stacked.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
    let std = var.sqrt();
    let normalized: Vec<f64> = stacked.iter().map(|v| (v - mean) / std).collect();
    if std == 0.0 || normalized.iter().any(|v| !v.is_finite()) {
        (vec![0.0; h], true)
    } else {
        (normalized, false)
    }
}

/// Poststack features for a whole grid; also reports how many windows
/// stacked to a constant trace.
pub fn poststack_features(grid: &SurveyGrid) -> Result<(FeatureSet, usize)> {
    let mut constant = 0;
    let mut rows = Vec::with_capacity(grid.windows().len());
    let mut keys = Vec::with_capacity(grid.windows().len());
    for w in grid.windows() {
        let (v, flag) = stack_poststack(w);
        if flag {
            constant += 1;
        }
        rows.push(v);
        keys.push((w.inline, w.crossline));
    }
    Ok((
        FeatureSet {
            keys,
            matrix: Matrix::from_rows(&rows)?,
        },
        constant,
    ))
}
