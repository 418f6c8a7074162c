//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// `a^H b`.
#[inline]
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// `|a^H b|^2`.
#[inline]
pub fn gain(a: &CVector, b: &CVector) -> f64 {
    inner(a, b).norm_sqr()
}

#[inline]
pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// M x K matrix whose k-th column is `vectors[k]`.
pub fn stack_columns(vectors: &[CVector]) -> CMatrix {
    let rows = vectors.first().map_or(0, |v| v.len());
    CMatrix::from_fn(rows, vectors.len(), |i, j| vectors[j][i])
}

/// `I + scale * sum_k w_k v_k v_k^H`.
pub fn identity_plus_outer(dim: usize, terms: &[(f64, &CVector)], scale: f64) -> CMatrix {
    let mut m = CMatrix::identity(dim, dim);
    for &(w, v) in terms {
        m += (v * v.adjoint()) * Complex64::new(w * scale, 0.0);
    }
    m
}

/// `log2 det(A)` for a Hermitian positive-definite `A`, via Cholesky.
pub fn log2_det_hpd(a: CMatrix) -> Option<f64> {
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let ln_det: f64 = (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    Some(ln_det / std::f64::consts::LN_2)
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Ratio of the largest to the smallest of the `min(rows, cols)` singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Unit-norm dominant left singular vector of `m`, phase-fixed so that its
/// largest-magnitude entry is real and positive (lowest index on ties).
pub fn dominant_left_singular_vector(m: &CMatrix) -> CVector {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let best = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > svd.singular_values[best] { i } else { best });
    let mut v: CVector = u.column(best).into_owned();
    fix_phase(&mut v);
    v
}

/// Rotates `v` so its largest-magnitude entry is real positive.
pub fn fix_phase(v: &mut CVector) {
    let mut idx = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm_sqr() > v[idx].norm_sqr() * (1.0 + 1e-12) {
            idx = i;
        }
    }
    let pivot = v[idx];
    if pivot.norm() > 0.0 {
        let rot = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// Returns `v` scaled to squared norm `power`; a zero vector stays zero.
pub fn with_power(v: &CVector, power: f64) -> CVector {
    let n = norm_sqr(v);
    if n == 0.0 || power <= 0.0 {
        return CVector::zeros(v.len());
    }
    v * Complex64::new((power / n).sqrt(), 0.0)
}
