//! Small dense complex matrices, the generalized Hermitian eigenproblem
//! `h v = λ g v`, and the diagonal spectrum perturbation that separates
//! coincident eigenvalues.
//!
//! Everything here is stack allocated with a fixed capacity of
//! [`MAX_DIM`]; these kernels run once per grid point.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::symfunc::Spectrum;

pub const MAX_DIM: usize = 4;

/// Relative tolerance for conjugate symmetry.
pub const HERMITIAN_TOL: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// General complex `n × n` matrix, `n <= MAX_DIM`.
#[derive(Clone, Copy, PartialEq)]
pub struct CMatrix {
    n: usize,
    a: [[Complex64; MAX_DIM]; MAX_DIM],
}

impl std::fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<Vec<Complex64>> =
            (0..self.n).map(|i| self.a[i][..self.n].to_vec()).collect();
        f.debug_struct("CMatrix").field("n", &self.n).field("rows", &rows).finish()
    }
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1 && n <= MAX_DIM, "matrix dimension {n} outside 1..={MAX_DIM}");
        CMatrix { n, a: [[ZERO; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[i][j] = v;
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i][k];
                for j in 0..n {
                    out.a[i][j] += aik * other.a[k][j];
                }
            }
        }
        out
    }

    /// `self* · other`.
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aki = self.a[k][i].conj();
                for j in 0..n {
                    out.a[i][j] += aki * other.a[k][j];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self.a[j][i].conj())
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self.a[i][j] + other.a[i][j])
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self.a[i][j] - other.a[i][j])
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self.a[i][j] * s)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.a[i][j].norm());
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j].norm_sqr();
            }
        }
        s.sqrt()
    }

    /// LU with partial pivoting; returns `None` for an exactly singular matrix.
    fn lu(&self) -> Option<(CMatrix, [usize; MAX_DIM], f64)> {
        let n = self.n;
        let mut m = *self;
        let mut perm = [0usize; MAX_DIM];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        let mut sign = 1.0;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| m.a[x][col].norm().total_cmp(&m.a[y][col].norm()))
                .unwrap();
            if m.a[piv][col].norm() == 0.0 {
                return None;
            }
            if piv != col {
                m.a.swap(piv, col);
                perm.swap(piv, col);
                sign = -sign;
            }
            let d = m.a[col][col];
            for r in (col + 1)..n {
                let factor = m.a[r][col] / d;
                m.a[r][col] = factor;
                for c in (col + 1)..n {
                    let v = m.a[col][c];
                    m.a[r][c] -= factor * v;
                }
            }
        }
        Some((m, perm, sign))
    }

    pub fn det(&self) -> Complex64 {
        match self.lu() {
            None => ZERO,
            Some((m, _, sign)) => {
                let mut d = Complex64::new(sign, 0.0);
                for i in 0..self.n {
                    d *= m.a[i][i];
                }
                d
            }
        }
    }

    pub fn inverse(&self) -> Option<CMatrix> {
        let n = self.n;
        let (m, perm, _) = self.lu()?;
        let mut inv = CMatrix::zeros(n);
        for col in 0..n {
            let mut x = [ZERO; MAX_DIM];
            for i in 0..n {
                let mut v = if perm[i] == col { ONE } else { ZERO };
                for j in 0..i {
                    v -= m.a[i][j] * x[j];
                }
                x[i] = v;
            }
            for i in (0..n).rev() {
                let mut v = x[i];
                for j in (i + 1)..n {
                    v -= m.a[i][j] * x[j];
                }
                x[i] = v / m.a[i][i];
            }
            for i in 0..n {
                inv.a[i][col] = x[i];
            }
        }
        Some(inv)
    }
}

/// Conjugate-symmetric complex matrix. Houses pointwise metric and form
/// coefficients `(g_{ij̄})`, `(h_{ij̄})`.
#[derive(Clone, Copy, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl std::fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::ops::Deref for HermitianMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

impl HermitianMatrix {
    /// Validates conjugate symmetry to `HERMITIAN_TOL` relative to the entry scale.
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = m.n;
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..=i {
                if (m.a[i][j] - m.a[j][i].conj()).norm() > HERMITIAN_TOL * scale {
                    return Err(Error::arg(format!(
                        "matrix is not Hermitian at ({i}, {j}): {} vs {}",
                        m.a[i][j],
                        m.a[j][i].conj()
                    )));
                }
            }
        }
        Ok(Self::hermitize(m))
    }

    /// `(M + M*)/2`.
    pub fn hermitize(m: CMatrix) -> Self {
        let n = m.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            out.a[i][i] = Complex64::new(m.a[i][i].re, 0.0);
            for j in (i + 1)..n {
                let v = (m.a[i][j] + m.a[j][i].conj()) * 0.5;
                out.a[i][j] = v;
                out.a[j][i] = v.conj();
            }
        }
        HermitianMatrix(out)
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(CMatrix::identity(n))
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = CMatrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.a[i][i] = Complex64::new(v, 0.0);
        }
        HermitianMatrix(m)
    }

    /// Real symmetric rows; panics if not symmetric.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = CMatrix::from_fn(n, |i, j| Complex64::new(rows[i][j], 0.0));
        Self::new(m).expect("rows are not symmetric")
    }

    /// Sets `(i, j)` and its conjugate mirror.
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        if i == j {
            self.0.a[i][i] = Complex64::new(v.re, 0.0);
        } else {
            self.0.a[i][j] = v;
            self.0.a[j][i] = v.conj();
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn add_h(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(self.0.add(&other.0))
    }

    pub fn sub_h(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(self.0.sub(&other.0))
    }

    pub fn scale_h(&self, s: f64) -> HermitianMatrix {
        HermitianMatrix(self.0.scale(s))
    }

    pub fn trace_re(&self) -> f64 {
        self.0.trace().re
    }

    pub fn det_re(&self) -> f64 {
        self.0.det().re
    }

    /// `P* H P`, Hermitian for any `P`.
    pub fn congruence(&self, p: &CMatrix) -> HermitianMatrix {
        HermitianMatrix::hermitize(p.adjoint_mul(&self.0.mul(p)))
    }

    /// `P H P*`.
    pub fn congruence_adj(&self, p: &CMatrix) -> HermitianMatrix {
        HermitianMatrix::hermitize(p.mul(&self.0).mul(&p.adjoint()))
    }

    pub fn inverse_h(&self) -> Option<HermitianMatrix> {
        self.0.inverse().map(HermitianMatrix::hermitize)
    }

    /// `Re tr(self · other)`, the pairing `Σ a_{ij} b_{ji}`.
    pub fn pairing(&self, other: &HermitianMatrix) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.0.a[i][j] * other.0.a[j][i]).re;
            }
        }
        acc
    }

    /// Lower triangular `L` with `self = L L*`, or the failing pivot.
    pub fn cholesky(&self) -> std::result::Result<CMatrix, (usize, f64)> {
        let n = self.n;
        let mut l = CMatrix::zeros(n);
        let scale = (0..n).map(|i| self.0.a[i][i].re.abs()).fold(0.0, f64::max);
        for j in 0..n {
            let mut d = self.0.a[j][j].re;
            for k in 0..j {
                d -= l.a[j][k].norm_sqr();
            }
            if !(d > 1e-14 * scale) || !d.is_finite() {
                return Err((j, d));
            }
            let dj = d.sqrt();
            l.a[j][j] = Complex64::new(dj, 0.0);
            for i in (j + 1)..n {
                let mut v = self.0.a[i][j];
                for k in 0..j {
                    v -= l.a[i][k] * l.a[j][k].conj();
                }
                l.a[i][j] = v / dj;
            }
        }
        Ok(l)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        let (s, _) = eigh(self);
        s[s.len() - 1]
    }
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues are descending; column `i` of the unitary factor
/// is the eigenvector of eigenvalue `i`.
pub fn eigh(h: &HermitianMatrix) -> (Spectrum, CMatrix) {
    let (vals, q) = eigh_raw(h);
    (Spectrum::new(vals[..h.n].to_vec()), q)
}

/// Allocation-free variant returning descending eigenvalues in a fixed array.
pub fn eigh_raw(h: &HermitianMatrix) -> ([f64; MAX_DIM], CMatrix) {
    let n = h.n;
    if n == 2 {
        return eigh2(h);
    }
    let mut a = h.0;
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius();
    if n > 1 && scale > 0.0 {
        for _sweep in 0..60 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.a[p][q].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-17 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }
    let mut vals = [0.0; MAX_DIM];
    for i in 0..n {
        vals[i] = a.a[i][i].re;
    }
    let mut order = [0usize; MAX_DIM];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    order[..n].sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    let mut sorted = [0.0; MAX_DIM];
    let mut q = CMatrix::zeros(n);
    for (dst, &src) in order[..n].iter().enumerate() {
        sorted[dst] = vals[src];
        for r in 0..n {
            q.a[r][dst] = v.a[r][src];
        }
    }
    (sorted, q)
}

/// Closed form for 2×2, choosing the eigenvector formula without cancellation.
fn eigh2(h: &HermitianMatrix) -> ([f64; MAX_DIM], CMatrix) {
    let a = h.0.a[0][0].re;
    let d = h.0.a[1][1].re;
    let b = h.0.a[0][1];
    let half = 0.5 * (a - d);
    let r = half.hypot(b.norm());
    let m = 0.5 * (a + d);
    let mut vals = [0.0; MAX_DIM];
    vals[0] = m + r;
    vals[1] = m - r;
    let mut q = CMatrix::zeros(2);
    let zero = Complex64::new(0.0, 0.0);
    let (x, y) = if b == zero {
        if a >= d {
            (Complex64::new(1.0, 0.0), zero)
        } else {
            (zero, Complex64::new(1.0, 0.0))
        }
    } else if half >= 0.0 {
        (Complex64::new(half + r, 0.0), b.conj())
    } else {
        (b, Complex64::new(r - half, 0.0))
    };
    let s = 1.0 / (x.norm_sqr() + y.norm_sqr()).sqrt();
    let (x, y) = (x * s, y * s);
    q.a[0][0] = x;
    q.a[1][0] = y;
    q.a[0][1] = -y.conj();
    q.a[1][1] = x.conj();
    (vals, q)
}

/// One Jacobi rotation annihilating `a[p][q]`: a phase making the entry real
/// followed by a real plane rotation.
#[inline]
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a.a[p][q];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let n = a.n;
    let phase = apq / r; // e^{iφ}
    let alpha = a.a[p][p].re;
    let beta = a.a[q][q].re;
    let zeta = (beta - alpha) / (2.0 * r);
    let t = if zeta >= 0.0 {
        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
    } else {
        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // J restricted to (p, q): [[c, s], [-s e^{-iφ}, c e^{-iφ}]].
    let ph = phase.conj();
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -ph * s;
    let jqq = ph * c;
    for k in 0..n {
        let akp = a.a[k][p];
        let akq = a.a[k][q];
        a.a[k][p] = akp * jpp + akq * jqp;
        a.a[k][q] = akp * jpq + akq * jqq;
    }
    for k in 0..n {
        let apk = a.a[p][k];
        let aqk = a.a[q][k];
        a.a[p][k] = jpp.conj() * apk + jqp.conj() * aqk;
        a.a[q][k] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a.a[p][q] = ZERO;
    a.a[q][p] = ZERO;
    a.a[p][p] = Complex64::new(alpha - t * r, 0.0);
    a.a[q][q] = Complex64::new(beta + t * r, 0.0);
    for k in 0..n {
        let vkp = v.a[k][p];
        let vkq = v.a[k][q];
        v.a[k][p] = vkp * jpp + vkq * jqp;
        v.a[k][q] = vkp * jpq + vkq * jqq;
    }
}

/// Solves `L X = B` for lower triangular `L`.
fn lower_solve(l: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = l.n;
    let mut x = CMatrix::zeros(n);
    for col in 0..n {
        for i in 0..n {
            let mut s = b.a[i][col];
            for k in 0..i {
                s -= l.a[i][k] * x.a[k][col];
            }
            x.a[i][col] = s / l.a[i][i];
        }
    }
    x
}

/// Solves `L* X = B` for lower triangular `L`.
fn lower_adjoint_solve(l: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = l.n;
    let mut x = CMatrix::zeros(n);
    for col in 0..n {
        for i in (0..n).rev() {
            let mut s = b.a[i][col];
            for k in (i + 1)..n {
                s -= l.a[k][i].conj() * x.a[k][col];
            }
            x.a[i][col] = s / l.a[i][i].re;
        }
    }
    x
}

/// Eigenvalues and `g`-orthonormal eigenvectors of the endomorphism
/// `A = g⁻¹h`, i.e. of the pencil `h v = λ g v`.
///
/// With `g = L L*` the pencil is reduced to the Hermitian matrix
/// `L⁻¹ h L⁻*`; eigenvectors are mapped back by `L⁻*`.
pub fn endo_from_pair(g: &HermitianMatrix, h: &HermitianMatrix) -> Result<(Spectrum, CMatrix)> {
    let (vals, basis) = endo_from_pair_raw(g, h)?;
    Ok((Spectrum::new(vals[..g.n].to_vec()), basis))
}

pub(crate) fn endo_from_pair_raw(
    g: &HermitianMatrix,
    h: &HermitianMatrix,
) -> Result<([f64; MAX_DIM], CMatrix)> {
    if g.n != h.n {
        return Err(Error::Dimension(format!("pair dimensions {} and {}", g.n, h.n)));
    }
    let l = g
        .cholesky()
        .map_err(|(_, d)| Error::Metric { point: 0, min_eigenvalue: d })?;
    let reduced = reduce(&l, h);
    let (vals, q) = eigh_raw(&reduced);
    let basis = lower_adjoint_solve(&l, &q);
    Ok((vals, basis))
}

/// `L⁻¹ h L⁻*` as a Hermitian matrix.
pub(crate) fn reduce(l: &CMatrix, h: &HermitianMatrix) -> HermitianMatrix {
    let y = lower_solve(l, &h.0); // L⁻¹ h
    let z = lower_solve(l, &y.adjoint()); // L⁻¹ (L⁻¹ h)* = L⁻¹ h L⁻*
    HermitianMatrix::hermitize(z)
}

/// Diagonal shift `B = diag(0, B_2, …, B_n)` separating a descending spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationB {
    pub diag: Vec<f64>,
    /// Gap parameter actually used (may be capped to keep the trace above -1).
    pub tau: f64,
    /// `Σ_{p>1} 1/(λ_1 − λ̃_p)`.
    pub inverse_gap_sum: f64,
}

/// Chooses `B_i = τ (i-1)/(n-1)` and returns `λ̃ = λ − B`, strictly decreasing.
///
/// `τ` is capped at `(1 + Σλ)/n` so that `Σλ̃ > −1`.
pub fn perturb_spectrum(lambda: &Spectrum, tau: f64) -> Result<(PerturbationB, Spectrum)> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::arg(format!("perturbation gap must be positive, got {tau}")));
    }
    let n = lambda.len();
    if n == 0 {
        return Err(Error::arg("empty spectrum"));
    }
    let trace: f64 = lambda.iter().sum();
    if !(trace + 1.0 > 0.0) {
        return Err(Error::arg(format!("spectrum trace {trace} leaves no room above -1")));
    }
    let tau = tau.min((1.0 + trace) / n as f64);
    let diag: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| tau * i as f64 / (n - 1) as f64).collect()
    };
    let perturbed: Vec<f64> = lambda.iter().zip(&diag).map(|(l, b)| l - b).collect();
    let inverse_gap_sum = perturbed[1..].iter().map(|p| 1.0 / (lambda[0] - p)).sum();
    Ok((PerturbationB { diag, tau, inverse_gap_sum }, Spectrum::new(perturbed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn endo_examples() {
        let g = HermitianMatrix::identity(3);
        let h = HermitianMatrix::from_real_diag(&[1.0, 3.0, 2.0]);
        let (s, _) = endo_from_pair(&g, &h).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 2.0, 1.0]);

        let g = HermitianMatrix::from_real_diag(&[2.0, 1.0]);
        let h = HermitianMatrix::from_real_diag(&[2.0, 3.0]);
        let (s, _) = endo_from_pair(&g, &h).unwrap();
        assert_relative_eq!(s[0], 3.0, epsilon = 1e-15);
        assert_relative_eq!(s[1], 1.0, epsilon = 1e-15);

        let (s, _) = endo_from_pair(&HermitianMatrix::identity(4), &HermitianMatrix::identity(4)).unwrap();
        assert!(s.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn endo_rejects_indefinite_metric() {
        let g = HermitianMatrix::from_real_diag(&[1.0, -1.0]);
        let h = HermitianMatrix::identity(2);
        assert!(matches!(endo_from_pair(&g, &h), Err(Error::Metric { .. })));
    }

    #[test]
    fn eigenvectors_are_g_orthonormal() {
        let mut g = HermitianMatrix::from_real_diag(&[2.0, 1.5, 1.0]);
        g.set(0, 1, c(0.3, -0.2));
        g.set(1, 2, c(0.1, 0.4));
        let mut h = HermitianMatrix::from_real_diag(&[0.5, -1.0, 2.0]);
        h.set(0, 2, c(0.7, 0.1));
        h.set(0, 1, c(-0.2, 0.9));
        let (s, v) = endo_from_pair(&g, &h).unwrap();
        let gram = g.congruence(&v);
        let diag = h.congruence(&v);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - c(e, 0.0)).norm() < 1e-13);
                let d = if i == j { s[i] } else { 0.0 };
                assert!((diag.get(i, j) - c(d, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn jacobi_handles_complex_two_by_two() {
        let mut h = HermitianMatrix::from_real_diag(&[1.0, 1.0]);
        h.set(0, 1, c(0.0, 1.0));
        let (s, q) = eigh(&h);
        assert_relative_eq!(s[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(s[1], 0.0, epsilon = 1e-15);
        let back = h.congruence(&q);
        assert!(back.get(0, 1).norm() < 1e-15);
    }

    #[test]
    fn hermitian_validation() {
        let m = CMatrix::from_fn(2, |i, j| if i == 0 && j == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!(HermitianMatrix::new(m).is_err());
    }

    #[test]
    fn det_and_inverse() {
        let mut h = HermitianMatrix::from_real_diag(&[2.0, 3.0, 1.0]);
        h.set(0, 1, c(0.5, 0.5));
        let inv = h.inverse().unwrap();
        let id = h.mul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id.get(i, j) - c(e, 0.0)).norm() < 1e-14);
            }
        }
        // det = 1 * (2*3 - |0.5+0.5i|^2) = 5.5
        assert_relative_eq!(h.det_re(), 5.5, epsilon = 1e-14);
    }

    #[test]
    fn perturbation_examples() {
        let (b, p) = perturb_spectrum(&Spectrum::new(vec![1.0, 1.0]), 0.1).unwrap();
        assert_eq!(b.diag, vec![0.0, 0.1]);
        assert_relative_eq!(p[0], 1.0);
        assert_relative_eq!(p[1], 0.9, epsilon = 1e-15);

        let (_, p) = perturb_spectrum(&Spectrum::new(vec![5.0, 3.0, 1.0]), 0.1).unwrap();
        assert!(p[0] > p[1] && p[1] > p[2]);
        assert!(p.iter().sum::<f64>() > -1.0);

        let (b, p) = perturb_spectrum(&Spectrum::new(vec![1.0, 1.0, 1.0]), 0.3).unwrap();
        assert_eq!(b.diag, vec![0.0, 0.15, 0.3]);
        assert_relative_eq!(p[1], 0.85, epsilon = 1e-15);
        assert_relative_eq!(p[2], 0.7, epsilon = 1e-15);
        assert!(p.iter().sum::<f64>() > -1.0);

        assert!(perturb_spectrum(&Spectrum::new(vec![1.0]), 0.0).is_err());
        assert!(perturb_spectrum(&Spectrum::new(vec![1.0]), -1.0).is_err());
    }

    #[test]
    fn perturbation_caps_tau() {
        let (b, p) = perturb_spectrum(&Spectrum::new(vec![0.1, 0.05, 0.05]), 10.0).unwrap();
        assert!(b.tau < 10.0);
        assert!(p.iter().sum::<f64>() > -1.0);
    }
}
