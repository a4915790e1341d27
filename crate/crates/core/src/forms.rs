//! (1,1) and (n−1,n−1) forms through their Hermitian coefficient matrices.
//!
//! A (1,1) form `√-1 υ_{ij̄} dz_i ∧ dz̄_j` is stored as `(υ_{ij̄})`; an
//! (n−1,n−1) form as the matrix `(ϱ^{j̄i})`, normalized so that
//! `ω^{n−1}/(n−1)!` has coefficient matrix `adj(g) = det(g) g⁻¹`.

use num_complex::Complex64;

use crate::chart::HermitianField;
use crate::error::{Error, Result};
use crate::hermitian::{endo_from_pair, HermitianMatrix, MAX_DIM};
use crate::symfunc::{cone_margin, ConeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneOneForm(pub HermitianMatrix);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NMinusOneForm(pub HermitianMatrix);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `v ↦ v^{n−1}/(n−1)!`
    Forward,
    Inverse,
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

fn require_metric(omega: &HermitianMatrix) -> Result<HermitianMatrix> {
    let e = omega.min_eigenvalue();
    if !(e > 0.0) {
        return Err(Error::Metric { point: 0, min_eigenvalue: e });
    }
    Ok(omega.inverse_h().expect("positive definite matrix is invertible"))
}

fn require_same_dim(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// `*(χ ∧ ω^{n−2}) = (n−2)! [(tr_ω χ) ω − χ]`.
pub fn hodge_star_trace(omega: &HermitianMatrix, chi: &OneOneForm) -> Result<OneOneForm> {
    let n = omega.dim();
    if n < 2 {
        return Err(Error::Dimension(format!("hodge_star_trace needs n >= 2, got {n}")));
    }
    require_same_dim(omega, &chi.0)?;
    let ginv = require_metric(omega)?;
    let tr = ginv.pairing(&chi.0);
    Ok(OneOneForm(omega.scale_h(tr).sub_h(&chi.0).scale_h(factorial(n - 2))))
}

/// Hodge star of a (1,1) form: coefficients `det(g) g⁻¹ φ g⁻¹`.
pub fn star_one_one(omega: &HermitianMatrix, phi: &OneOneForm) -> Result<NMinusOneForm> {
    require_same_dim(omega, &phi.0)?;
    let ginv = require_metric(omega)?;
    Ok(NMinusOneForm(phi.0.congruence(&ginv).scale_h(omega.det_re())))
}

/// Hodge star of an (n−1,n−1) form back to a (1,1) form: `g ϱ g / det(g)`.
pub fn star_n_minus_one(omega: &HermitianMatrix, rho: &NMinusOneForm) -> Result<OneOneForm> {
    require_same_dim(omega, &rho.0)?;
    require_metric(omega)?;
    Ok(OneOneForm(rho.0.congruence(omega.matrix()).scale_h(1.0 / omega.det_re())))
}

type Poly = Vec<Complex64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add_scaled(acc: &mut Poly, p: &Poly, s: f64) {
    if acc.len() < p.len() {
        acc.resize(p.len(), Complex64::new(0.0, 0.0));
    }
    for (a, x) in acc.iter_mut().zip(p) {
        *a += x * s;
    }
}

/// Determinant of a matrix of polynomials by cofactor expansion.
fn poly_det(m: &[Vec<Poly>]) -> Poly {
    let k = m.len();
    if k == 0 {
        return vec![Complex64::new(1.0, 0.0)];
    }
    let mut acc: Poly = vec![Complex64::new(0.0, 0.0)];
    for col in 0..k {
        let minor: Vec<Vec<Poly>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, p)| p.clone()).collect())
            .collect();
        let term = poly_mul(&m[0][col], &poly_det(&minor));
        poly_add_scaled(&mut acc, &term, if col % 2 == 0 { 1.0 } else { -1.0 });
    }
    acc
}

/// Coefficient matrices `C_0, …, C_{n−1}` of
/// `χ^j ∧ ω^{n−1−j} / (j!(n−1−j)!)`, read off as the `s^j` coefficients of
/// `adj(g + sχ)` by polynomial cofactor expansion.
pub fn mixed_wedge_coefficients(omega: &HermitianMatrix, chi: &OneOneForm) -> Result<Vec<NMinusOneForm>> {
    require_same_dim(omega, &chi.0)?;
    let n = omega.dim();
    if n < 2 {
        return Err(Error::Dimension(format!("(n-1,n-1) forms need n >= 2, got {n}")));
    }
    let entries: Vec<Vec<Poly>> = (0..n)
        .map(|i| (0..n).map(|j| vec![omega.get(i, j), chi.0.get(i, j)]).collect())
        .collect();
    // adj(M)_{ij} = (−1)^{i+j} det(M without row j and column i)
    let mut coeffs = vec![[[Complex64::new(0.0, 0.0); MAX_DIM]; MAX_DIM]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<Poly>> = entries
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != j)
                .map(|(_, row)| row.iter().enumerate().filter(|(c, _)| *c != i).map(|(_, p)| p.clone()).collect())
                .collect();
            let d = poly_det(&minor);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            for (deg, c) in d.iter().enumerate().take(n) {
                coeffs[deg][i][j] = c * sign;
            }
        }
    }
    Ok(coeffs
        .into_iter()
        .map(|a| {
            let mut m = HermitianMatrix::zeros(n);
            for i in 0..n {
                for j in i..n {
                    m.set(i, j, (a[i][j] + a[j][i].conj()) * 0.5);
                }
            }
            NMinusOneForm(m)
        })
        .collect())
}

/// `χ ∧ ω^{n−2}` as an (n−1,n−1) form.
pub fn chi_wedge_omega(omega: &HermitianMatrix, chi: &OneOneForm) -> Result<NMinusOneForm> {
    let n = omega.dim();
    let c = mixed_wedge_coefficients(omega, chi)?;
    Ok(NMinusOneForm(c[1].0.scale_h(factorial(n - 2))))
}

/// Lemma-style bijection between positive (1,1) and (n−1,n−1) forms.
///
/// Forward maps `v` to its adjugate `det(v) v⁻¹`; inverse maps `Φ` to
/// `det(Φ)^{1/(n−1)} Φ⁻¹`.
pub fn power_root_bijection(m: &HermitianMatrix, direction: Direction) -> Result<HermitianMatrix> {
    let n = m.dim();
    if n < 2 {
        return Err(Error::Dimension(format!("bijection needs n >= 2, got {n}")));
    }
    let e = m.min_eigenvalue();
    if !(e > 0.0) {
        return Err(Error::Positivity(format!("input has minimum eigenvalue {e:e}")));
    }
    let inv = m.inverse_h().expect("positive definite matrix is invertible");
    let det = m.det_re();
    Ok(match direction {
        Direction::Forward => inv.scale_h(det),
        Direction::Inverse => inv.scale_h(det.powf(1.0 / (n as f64 - 1.0))),
    })
}

/// Pointwise verdict with the scale-aware cone margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub positive: bool,
    pub margin: f64,
    pub worst_point: usize,
}

/// Cone margin of `λ(ω⁻¹α)` for `Γ_k` at a single point.
pub fn positivity_k_margin(omega: &HermitianMatrix, alpha: &HermitianMatrix, k: usize) -> Result<f64> {
    let n = omega.dim();
    if k == 0 || k > n {
        return Err(Error::arg(format!("k must satisfy 1 <= k <= {n}, got {k}")));
    }
    let (lambda, _) = endo_from_pair(omega, alpha)?;
    Ok(cone_margin(&lambda, ConeId::Garding(k)))
}

/// True iff `λ(ω⁻¹α) ∈ Γ_k` at every point.
pub fn positivity_k(omega: &HermitianField, alpha: &HermitianField, k: usize) -> Result<PositivityReport> {
    if omega.points() != alpha.points() || omega.dim() != alpha.dim() {
        return Err(Error::Dimension("metric and form fields differ in shape".into()));
    }
    let mut report = PositivityReport { positive: true, margin: f64::INFINITY, worst_point: 0 };
    for p in 0..omega.points() {
        let m = positivity_k_margin(&omega.get(p), &alpha.get(p), k)?;
        if m < report.margin {
            report.margin = m;
            report.worst_point = p;
        }
    }
    report.positive = report.margin > 0.0;
    Ok(report)
}

/// Coefficients of `k c ω_h^{k−1} ∧ ω^{n−k} − ℓ ω_h^{ℓ−1} ∧ ω^{n−ℓ}`,
/// divided by `(n−1)!`.
pub fn quotient_combination(
    omega: &HermitianMatrix,
    omega_h: &OneOneForm,
    k: usize,
    ell: usize,
    c: f64,
) -> Result<NMinusOneForm> {
    let n = omega.dim();
    if !(1 <= ell && ell < k && k <= n) {
        return Err(Error::arg(format!("need 1 <= l < k <= n, got l = {ell}, k = {k}, n = {n}")));
    }
    let cs = mixed_wedge_coefficients(omega, omega_h)?;
    let weight = |j: usize| j as f64 * factorial(j - 1) * factorial(n - j) / factorial(n - 1);
    let p = cs[k - 1].0.scale_h(c * weight(k)).sub_h(&cs[ell - 1].0.scale_h(weight(ell)));
    Ok(NMinusOneForm(p))
}

/// Smallest eigenvalue of an (n−1,n−1) form relative to `ω^{n−1}/(n−1)!`.
pub fn n_minus_one_margin(omega: &HermitianMatrix, rho: &NMinusOneForm) -> Result<f64> {
    let base = power_root_bijection(omega, Direction::Forward)?;
    let (lambda, _) = endo_from_pair(&base, &rho.0)?;
    Ok(lambda[lambda.len() - 1])
}
