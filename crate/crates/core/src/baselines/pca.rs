use super::matrix::dot;
use super::{ColumnMap, Matrix};
use crate::{Error, Result};

/// Singular values and right singular vectors (as columns of `v`) of `a`,
/// by one-sided Jacobi rotations on the columns of `a`. Returned in
/// descending order of singular value.
fn jacobi_svd(a: &Matrix) -> (Vec<f64>, Matrix) {
    let (m, n) = (a.rows(), a.cols());
    // Column-major working copies: cols[j] is column j of `a`.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let eps = f64::EPSILON;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let mut vm = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            vm.set(i, k, v[j][i]);
        }
    }
    (order.iter().map(|&j| sigma[j]).collect(), vm)
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (u, w) = (*a, *b);
        *a = c * u - s * w;
        *b = s * u + c * w;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows.
    pub components: Matrix,
    /// Non-increasing; `s^2 / (n - 1)` for singular values `s` of the centered data.
    pub explained_variance: Vec<f64>,
    /// Applied to raw rows before centering, when fitted with [`pca_fit_nonzero`].
    pub columns: Option<ColumnMap>,
}

/// Top-`k` principal directions of `train` (rows are samples).
///
/// Uses the SVD of the centered matrix when `d <= n` and the eigenvectors
/// of its `n x n` Gram matrix otherwise. Each component is signed so that
/// its largest-magnitude entry is positive.
pub fn pca_fit(train: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (train.rows(), train.cols());
    if k == 0 || n < 2 || k > (n - 1).min(d) {
        return Err(Error::Invalid(format!(
            "cannot keep {k} components from {n} samples of dimension {d} (need 1 <= k <= min(n-1, d))"
        )));
    }
    if !train.is_finite() {
        return Err(Error::Invalid("PCA input contains non-finite values".into()));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(train.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut x = train.clone();
    for r in 0..n {
        for (v, m) in x.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut sing = Vec::with_capacity(k);
    if d <= n {
        let (s, v) = jacobi_svd(&x);
        for j in 0..k {
            comps.push((0..d).map(|i| v.get(i, j)).collect());
            sing.push(s[j]);
        }
    } else {
        let gram = x.matmul(&x.transpose())?;
        let (lambda, v) = jacobi_svd(&gram);
        for j in 0..k {
            let s = lambda[j].max(0.0).sqrt();
            if !(s > 0.0) {
                return Err(Error::Degenerate(format!(
                    "centered data has rank {j}, fewer than {k} components"
                )));
            }
            let mut u = vec![0.0; d];
            for r in 0..n {
                let w = v.get(r, j) / s;
                for (ui, xv) in u.iter_mut().zip(x.row(r)) {
                    *ui += w * xv;
                }
            }
            comps.push(u);
            sing.push(s);
        }
        // Two Gram-Schmidt passes remove the orthogonality loss of the Gram route.
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = comps.split_at_mut(j);
                let cj = &mut rest[0];
                for ci in done.iter() {
                    let proj = dot(ci, cj);
                    cj.iter_mut().zip(ci).for_each(|(a, b)| *a -= proj * b);
                }
                let norm = dot(cj, cj).sqrt();
                cj.iter_mut().for_each(|a| *a /= norm);
            }
        }
    }
    for c in &mut comps {
        let (idx, _) = c
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        if c[idx] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&comps)?,
        explained_variance: sing.iter().map(|s| s * s / (n - 1) as f64).collect(),
        columns: None,
    })
}

/// Drops all-zero training columns, then fits PCA on the rest.
pub fn pca_fit_nonzero(train: &Matrix, k: usize) -> Result<PcaModel> {
    let map = ColumnMap::fit(train)?;
    let mut model = pca_fit(&map.apply(train)?, k)?;
    model.columns = Some(map);
    Ok(model)
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    /// `(x - mean) * components^T`, after the column map if one was fitted.
    pub fn transform(&self, m: &Matrix) -> Result<Matrix> {
        let reduced;
        let m = match &self.columns {
            Some(map) => {
                reduced = map.apply(m)?;
                &reduced
            }
            None => m,
        };
        if m.cols() != self.mean.len() {
            return Err(Error::Invalid(format!(
                "matrix has {} columns, PCA expects {}",
                m.cols(),
                self.mean.len()
            )));
        }
        let k = self.n_components();
        let mut out = Matrix::zeros(m.rows(), k);
        let mut centered = vec![0.0; self.mean.len()];
        for r in 0..m.rows() {
            for ((c, v), mu) in centered.iter_mut().zip(m.row(r)).zip(&self.mean) {
                *c = v - mu;
            }
            for j in 0..k {
                out.set(r, j, dot(&centered, self.components.row(j)));
            }
        }
        Ok(out)
    }

    /// `scores * components + mean`, in the reduced column space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let mut out = scores.matmul(&self.components)?;
        for r in 0..out.rows() {
            for (v, mu) in out.row_mut(r).iter_mut().zip(&self.mean) {
                *v += mu;
            }
        }
        Ok(out)
    }
}
