//! Ridge and RBF kernel ridge regression.

use crate::error::{GsneError, Result};
use crate::linalg::{gemm, Cholesky, Matrix, Trans};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut m = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (a, v) in m.iter_mut().zip(x.row(i)) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= x.rows() as f64);
    m
}

/// Solve `(Xc^T Xc + lambda I) beta = Xc^T yc` on centred data, so the
/// intercept is not penalized.
pub fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    if !(lambda > 0.0) {
        return Err(GsneError::Input("ridge penalty must be positive".into()));
    }
    if x.rows() != y.len() || y.is_empty() {
        return Err(GsneError::Input("ridge needs one target per row".into()));
    }
    let xm = column_means(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let mut xc = x.clone();
    for i in 0..xc.rows() {
        for (v, m) in xc.row_mut(i).iter_mut().zip(&xm) {
            *v -= m;
        }
    }
    let d = x.cols();
    let mut a = Matrix::zeros(d, d);
    gemm(1.0, &xc, Trans::Yes, &xc, Trans::No, 0.0, &mut a);
    for j in 0..d {
        a.set(j, j, a.get(j, j) + lambda);
    }
    let mut b = vec![0.0; d];
    for i in 0..xc.rows() {
        let r = y[i] - ym;
        for (bj, v) in b.iter_mut().zip(xc.row(i)) {
            *bj += v * r;
        }
    }
    let coef = Cholesky::factor(&a)?.solve(&b);
    let intercept = ym - coef.iter().zip(&xm).map(|(c, m)| c * m).sum::<f64>();
    Ok(RidgeModel { coef, intercept })
}

/// Squared Euclidean distances between the rows of `a` and `b`.
pub fn sq_distances(a: &Matrix, b: &Matrix) -> Matrix {
    let mut d = Matrix::zeros(a.rows(), b.rows());
    gemm(-2.0, a, Trans::No, b, Trans::Yes, 0.0, &mut d);
    let na: Vec<f64> = (0..a.rows()).map(|i| a.row(i).iter().map(|v| v * v).sum()).collect();
    let nb: Vec<f64> = (0..b.rows()).map(|i| b.row(i).iter().map(|v| v * v).sum()).collect();
    for i in 0..a.rows() {
        for (j, v) in d.row_mut(i).iter_mut().enumerate() {
            *v = (*v + na[i] + nb[j]).max(0.0);
        }
    }
    d
}

/// Median distance over all distinct pairs of rows.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let d = sq_distances(x, x);
    let n = x.rows();
    let mut v: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        v.extend_from_slice(&d.row(i)[i + 1..]);
    }
    if v.is_empty() {
        return 1.0;
    }
    let mid = v.len() / 2;
    v.select_nth_unstable_by(mid, f64::total_cmp);
    let m = v[mid].sqrt();
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeModel {
    pub support: Matrix,
    pub alpha: Vec<f64>,
    pub bandwidth: f64,
    /// Added to every prediction; the fit solves for `y - offset`.
    pub offset: f64,
}

impl KernelRidgeModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut k = sq_distances(x, &self.support);
        let g = -0.5 / (self.bandwidth * self.bandwidth);
        (0..x.rows())
            .map(|i| {
                let row = k.row_mut(i);
                self.offset + row.iter().zip(&self.alpha).map(|(d, a)| (g * d).exp() * a).sum::<f64>()
            })
            .collect()
    }
}

/// RBF Gram matrix `exp(-|xi - xj|^2 / (2 h^2))`.
pub fn rbf_gram(x: &Matrix, bandwidth: f64) -> Matrix {
    let mut k = sq_distances(x, x);
    let g = -0.5 / (bandwidth * bandwidth);
    k.as_mut_slice().iter_mut().for_each(|v| *v = (g * *v).exp());
    k
}

/// Solve `(K + lambda I) alpha = y - offset` for the RBF kernel.
pub fn fit_kernel_ridge_offset(
    x: &Matrix,
    y: &[f64],
    bandwidth: f64,
    lambda: f64,
    offset: f64,
) -> Result<KernelRidgeModel> {
    if !(lambda > 0.0 && bandwidth > 0.0) {
        return Err(GsneError::Input("kernel ridge needs positive penalty and bandwidth".into()));
    }
    if x.rows() != y.len() || y.is_empty() {
        return Err(GsneError::Input("kernel ridge needs one target per row".into()));
    }
    let mut k = rbf_gram(x, bandwidth);
    for i in 0..k.rows() {
        k.set(i, i, k.get(i, i) + lambda);
    }
    let rhs: Vec<f64> = y.iter().map(|v| v - offset).collect();
    let alpha = Cholesky::factor(&k)?.solve(&rhs);
    Ok(KernelRidgeModel {
        support: x.clone(),
        alpha,
        bandwidth,
        offset,
    })
}

pub fn fit_kernel_ridge(x: &Matrix, y: &[f64], bandwidth: f64, lambda: f64) -> Result<KernelRidgeModel> {
    fit_kernel_ridge_offset(x, y, bandwidth, lambda, 0.0)
}
