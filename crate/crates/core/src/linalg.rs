//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<KahanSum>().value()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// `ln det` of a symmetric positive definite matrix, or `None` when the
/// Cholesky factorization fails.
pub fn spd_log_det(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) {
            return None;
        }
        s += 2.0 * d.ln();
    }
    Some(s)
}

/// Indices of columns of a Gram matrix that are (numerically) linear
/// combinations of earlier columns, found by a sequential Cholesky sweep.
pub fn collinear_columns(gram: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let p = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut kept = vec![false; p];
    let mut dropped = Vec::new();
    for k in 0..p {
        let diag = gram[(k, k)];
        let mut d = diag;
        for j in 0..k {
            if kept[j] {
                d -= l[(k, j)] * l[(k, j)];
            }
        }
        if !(diag > 0.0) || d <= rel_tol * diag {
            dropped.push(k);
            continue;
        }
        let lkk = d.sqrt();
        l[(k, k)] = lkk;
        kept[k] = true;
        for i in (k + 1)..p {
            let mut s = gram[(i, k)];
            for j in 0..k {
                if kept[j] {
                    s -= l[(i, j)] * l[(k, j)];
                }
            }
            l[(i, k)] = s / lkk;
        }
    }
    dropped
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(p: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(p, p, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat(0.1).take(10));
        assert!((compensated_sum(v.iter().copied()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_collinear_column() {
        // columns: 1, x, 2x+1
        let x = [0.0, 1.0, 2.0, 5.0];
        let rows: Vec<[f64; 3]> = x.iter().map(|&v| [1.0, v, 2.0 * v + 1.0]).collect();
        let mut g = DMatrix::zeros(3, 3);
        for r in &rows {
            for i in 0..3 {
                for j in 0..3 {
                    g[(i, j)] += r[i] * r[j];
                }
            }
        }
        assert_eq!(collinear_columns(&g, 1e-10), vec![2]);
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((spd_log_det(&m).unwrap() - 6f64.ln()).abs() < 1e-14);
        assert!(spd_log_det(&DMatrix::zeros(2, 2)).is_none());
    }
}
