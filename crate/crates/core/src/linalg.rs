//! Dense helpers: sorted symmetric spectra, Gram–Schmidt, and a Lanczos
//! solver for a few leading eigenvectors when the spectrum is already known.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric matrix, descending.
pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Full eigendecomposition, eigenvalues descending with matching columns.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(idx.iter());
    (values, vectors)
}

/// Orthonormal basis for the column span, by twice-iterated modified
/// Gram–Schmidt. Columns whose remainder falls below `drop_tol` times their
/// original norm are treated as dependent and dropped.
pub(crate) fn orthonormal_basis(cols: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.ncols());
    for c in cols.column_iter() {
        let norm0 = c.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = c.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol * norm0 {
            basis.push(v / norm);
        }
    }
    if basis.is_empty() {
        return DMatrix::zeros(cols.nrows(), 0);
    }
    DMatrix::from_columns(&basis)
}

/// Leading `k` eigenvectors of symmetric `m`, whose descending eigenvalues
/// `known` were computed beforehand.
///
/// Lanczos results are accepted only when the Ritz values reproduce `known`
/// and the residuals are small; otherwise a dense decomposition is used.
pub(crate) fn top_eigenvectors(m: &DMatrix<f64>, known: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    if k > d || known.len() < k {
        return Err(Error::internal(format!("cannot extract {k} eigenvectors of a {d}-square matrix")));
    }
    if k == 0 {
        return Ok(DMatrix::zeros(d, 0));
    }
    if d > 256 && 4 * k <= d {
        if let Some(v) = lanczos(m, known, k) {
            return Ok(v);
        }
    }
    let (_, vectors) = symmetric_eigen(m);
    Ok(vectors.columns(0, k).into_owned())
}

fn lanczos(m: &DMatrix<f64>, known: &[f64], k: usize) -> Option<DMatrix<f64>> {
    let d = m.nrows();
    let scale = known.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let max_steps = d.min(3 * k + 300);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = DMatrix::<f64>::zeros(d, max_steps + 1);
    let start: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    q.set_column(0, &(&start / start.norm()));
    let (mut alphas, mut betas): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for j in 0..max_steps {
        let mut w = m * q.column(j);
        let alpha = q.column(j).dot(&w);
        w.axpy(-alpha, &q.column(j), 1.0);
        if j > 0 {
            w.axpy(-betas[j - 1], &q.column(j - 1), 1.0);
        }
        for _ in 0..2 {
            let basis = q.columns(0, j + 1);
            let h = basis.tr_mul(&w);
            w -= basis * h;
        }
        alphas.push(alpha);
        let beta = w.norm();
        let steps = j + 1;
        let exhausted = beta <= 1e-12 * scale;
        if steps >= k && (steps % 10 == 0 || steps == max_steps || exhausted) {
            let mut t = DMatrix::<f64>::zeros(steps, steps);
            for i in 0..steps {
                t[(i, i)] = alphas[i];
                if i + 1 < steps {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let (theta, s) = symmetric_eigen(&t);
            let converged = (0..k).all(|i| {
                let resid = beta * s[(steps - 1, i)].abs();
                resid <= 1e-10 * scale && (theta[i] - known[i]).abs() <= 1e-8 * scale
            });
            if converged {
                let ritz = q.columns(0, steps) * s.columns(0, k);
                let basis = orthonormal_basis(&ritz, 1e-6);
                return (basis.ncols() == k).then_some(basis);
            }
        }
        if exhausted {
            return None;
        }
        betas.push(beta);
        q.set_column(j + 1, &(w / beta));
    }
    None
}
