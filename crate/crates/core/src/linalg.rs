//! Dense singular value decompositions.
//!
//! Matrices are stored as `nalgebra` types throughout the crate; the
//! decompositions themselves are delegated to `faer`, whose SVD stays
//! accurate on the exactly rank-deficient matrices that exactness systems
//! produce (repeated and zero rows).

use faer::Mat;
use nalgebra::{DMatrix, DVector};

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub vt: DMatrix<f64>,
}

impl Svd {
    /// Number of singular values strictly above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.s.iter().filter(|&&s| s > tol).count()
    }

    pub fn max_singular_value(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(m, 0),
            s: DVector::zeros(0),
            vt: DMatrix::zeros(0, n),
        };
    }
    let f = to_faer(a);
    let d = f.thin_svd().expect("SVD iteration did not converge");
    let (u, s, v) = (d.U(), d.S(), d.V());
    let sc = s.column_vector();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sc[j].total_cmp(&sc[i]));
    Svd {
        u: DMatrix::from_fn(m, k, |i, c| u[(i, order[c])]),
        s: DVector::from_fn(k, |c, _| sc[order[c]]),
        vt: DMatrix::from_fn(k, n, |c, j| v[(j, order[c])]),
    }
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    svd(a).s
}

/// Moore–Penrose pseudo-inverse, discarding singular values below
/// `rtol · σ_max`.
pub fn pinv(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let d = svd(a);
    let cut = rtol * d.max_singular_value();
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for c in 0..d.s.len() {
        if d.s[c] > cut {
            out += d.vt.row(c).transpose() * d.u.column(c).transpose() / d.s[c];
        }
    }
    out
}

/// Least-squares solution of `A x = b` via the pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> DVector<f64> {
    pinv(a, rtol) * b
}
