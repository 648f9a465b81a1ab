//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigen-decomposition of a hermitian matrix: (ascending eigenvalues, eigenvectors as columns).
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let e = to_faer(&hermitize(h)).selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = e.s().column_vector();
    let u = e.u();
    let w = (0..n).map(|i| s.read(i).re).collect();
    (w, CMat::from_fn(n, n, |i, j| u.read(i, j)))
}

/// e^{−iht} for hermitian h.
pub fn unitary(h: &CMat, t: f64) -> CMat {
    let (w, v) = eigh(h);
    let mut vd = v.clone();
    for (j, wj) in w.iter().enumerate() {
        let ph = C64::from_polar(1.0, -wj * t);
        for i in 0..vd.nrows() {
            vd[(i, j)] *= ph;
        }
    }
    let u = &vd * v.adjoint();
    // One Newton–Schulz polar step: removes the O(1e-15) unitarity defect
    // that small-gap fixed points would otherwise amplify.
    let n = u.nrows();
    let defect = u.adjoint() * &u;
    &u * (CMat::identity(n, n) * c(1.5) - defect * c(0.5))
}

/// All eigenvalues of a general complex square matrix.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    to_faer(m).complex_eigenvalues()
}

pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    eigh(m).0.iter().map(|x| x.abs()).sum()
}

pub fn hermiticity_residual(m: &CMat) -> f64 {
    (m - m.adjoint()).camax()
}

/// Row-major vectorisation: v[i*d + j] = m[(i, j)].
pub fn vec_row(m: &CMat) -> nalgebra::DVector<C64> {
    let (r, cc) = m.shape();
    nalgebra::DVector::from_fn(r * cc, |k, _| m[(k / cc, k % cc)])
}

pub fn unvec_row(v: &nalgebra::DVector<C64>, d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| v[i * d + j])
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
