//! Elementary symmetric polynomials, Gårding cones and the concave operator
//! family `f(λ)` evaluated on spectra.
//!
//! Four families are realized:
//!
//! | family              | `f(λ)`                                   | cone               |
//! |---------------------|------------------------------------------|--------------------|
//! | `MongeAmpere`       | `log σ_n`                                | `Γ_n`              |
//! | `Hessian(k)`        | `log(σ_k / C(n,k))`                      | `Γ_k`              |
//! | `HessianQuotient`   | `-(σ_ℓ / C(n,ℓ)) / (σ_k / C(n,k))`       | `Γ_k`              |
//! | `TTransformHessian` | `log σ_k(T λ)`, `T_i λ = Σ_{j≠i} λ_j`    | `T⁻¹(Γ_k)`         |
//!
//! All derivatives are closed form. Matrix-level derivatives live in
//! [`gerhardt`](crate::symfunc::gerhardt_derivatives).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::{self, CMatrix, HermitianMatrix, MAX_DIM};

/// Longest tuple accepted by the stack-allocated kernels.
pub const MAX_LEN: usize = 12;

/// Scale-aware strictness: `σ_j > STRICT_TOL · (1 + |λ|^j)`.
pub const STRICT_TOL: f64 = 1e-12;

/// Gap below which two eigenvalues are treated as coincident when forming
/// divided differences, relative to `1 + |λ|`.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Default gap parameter of the spectrum perturbation used for coincident
/// eigenvalues.
pub const DEFAULT_TAU: f64 = 1e-6;

/// Fills `out[0..=m]` with `σ_0..σ_m` of the entries of `xs` whose index is
/// not in `skip`, using the running-product recurrence. Returns `m`.
fn elementary_into(xs: &[f64], skip: [usize; 2], out: &mut [f64]) -> usize {
    out[0] = 1.0;
    let mut m = 0;
    for (i, &x) in xs.iter().enumerate() {
        if i == skip[0] || i == skip[1] {
            continue;
        }
        m += 1;
        out[m] = 0.0;
        for j in (1..=m).rev() {
            out[j] += x * out[j - 1];
        }
    }
    m
}

const NO_SKIP: [usize; 2] = [usize::MAX, usize::MAX];

/// `σ_j(λ)`, with `σ_0 = 1`.
pub fn sigma(lambda: &[f64], j: usize) -> Result<f64> {
    if j > lambda.len() {
        return Err(Error::arg(format!(
            "sigma index {j} exceeds tuple length {}",
            lambda.len()
        )));
    }
    Ok(sigmas(lambda)[j])
}

/// All of `σ_0(λ) .. σ_n(λ)`.
pub fn sigmas(lambda: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lambda.len() + 1];
    elementary_into(lambda, NO_SKIP, &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

fn norm(lambda: &[f64]) -> f64 {
    lambda.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// An `n`-tuple of eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Spectrum(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for Spectrum {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MongeAmpere,
    Hessian,
    HessianQuotient,
    TTransformHessian,
}

/// `Γ_k`, or the pullback `T⁻¹(Γ_k)` under the trace-complement map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeId {
    Garding(usize),
    TPullback(usize),
}

impl ConeId {
    pub fn k(&self) -> usize {
        match *self {
            ConeId::Garding(k) | ConeId::TPullback(k) => k,
        }
    }
}

/// A concave symmetric operator together with its cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorSpec {
    pub family: Family,
    pub n: usize,
    pub k: usize,
    /// Lower index of the quotient; 0 for the other families.
    pub ell: usize,
    /// Quotient constant; the quotient equation reads `f(λ) = -c`.
    pub c: f64,
}

impl OperatorSpec {
    fn check_dim(n: usize) -> Result<()> {
        if n == 0 || n > MAX_LEN {
            return Err(Error::arg(format!("dimension {n} outside 1..={MAX_LEN}")));
        }
        Ok(())
    }

    pub fn monge_ampere(n: usize) -> Result<Self> {
        Self::check_dim(n)?;
        Ok(OperatorSpec { family: Family::MongeAmpere, n, k: n, ell: 0, c: 1.0 })
    }

    pub fn hessian(n: usize, k: usize) -> Result<Self> {
        Self::check_dim(n)?;
        if k == 0 || k > n {
            return Err(Error::arg(format!("hessian index k = {k} outside 1..={n}")));
        }
        Ok(OperatorSpec { family: Family::Hessian, n, k, ell: 0, c: 1.0 })
    }

    pub fn hessian_quotient(n: usize, k: usize, ell: usize, c: f64) -> Result<Self> {
        Self::check_dim(n)?;
        if !(1 <= ell && ell < k && k <= n) {
            return Err(Error::arg(format!(
                "quotient indices need 1 <= ell < k <= n, got ell = {ell}, k = {k}, n = {n}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::arg(format!("quotient constant must be positive, got {c}")));
        }
        Ok(OperatorSpec { family: Family::HessianQuotient, n, k, ell, c })
    }

    pub fn ttransform_hessian(n: usize, k: usize) -> Result<Self> {
        Self::check_dim(n)?;
        if n < 2 {
            return Err(Error::arg("the trace-complement family needs n >= 2"));
        }
        if k == 0 || k > n {
            return Err(Error::arg(format!("hessian index k = {k} outside 1..={n}")));
        }
        Ok(OperatorSpec { family: Family::TTransformHessian, n, k, ell: 0, c: 1.0 })
    }

    pub fn cone(&self) -> ConeId {
        match self.family {
            Family::TTransformHessian => ConeId::TPullback(self.k),
            _ => ConeId::Garding(self.k),
        }
    }

    /// Whether `lim_{t→∞} f(λ', t)` is `+∞` on the whole of `Γ_∞`.
    pub fn unbounded_at_infinity(&self) -> bool {
        self.family != Family::HessianQuotient
    }

    fn check_len(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.n {
            return Err(Error::arg(format!(
                "tuple length {} does not match operator dimension {}",
                lambda.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// `T_i(λ) = Σ_{j≠i} λ_j`.
pub fn t_transform(lambda: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lambda.len()];
    t_transform_into(lambda, &mut out);
    out
}

fn t_transform_into(lambda: &[f64], out: &mut [f64]) {
    let s: f64 = lambda.iter().sum();
    for (o, &x) in out.iter_mut().zip(lambda) {
        *o = s - x;
    }
}

/// Copies `lambda` into a stack buffer, applying `T` for pullback cones.
fn cone_coordinates(lambda: &[f64], cone: ConeId) -> ([f64; MAX_LEN], usize) {
    let n = lambda.len();
    assert!(n <= MAX_LEN, "tuple length {n} exceeds {MAX_LEN}");
    let mut buf = [0.0; MAX_LEN];
    match cone {
        ConeId::Garding(_) => buf[..n].copy_from_slice(lambda),
        ConeId::TPullback(_) => t_transform_into(lambda, &mut buf[..n]),
    }
    (buf, n)
}

/// True iff `σ_1(λ), …, σ_k(λ)` are all positive (after `T` for the pullback cone).
pub fn cone_contains(lambda: &[f64], cone: ConeId) -> bool {
    first_failure(lambda, cone, 0.0).is_none()
}

/// `min_{1≤j≤k} σ_j / (1 + |λ|^j)` in cone coordinates; positive iff inside.
pub fn cone_margin(lambda: &[f64], cone: ConeId) -> f64 {
    let (x, n) = cone_coordinates(lambda, cone);
    let k = cone.k().min(n);
    let mut s = [0.0; MAX_LEN + 1];
    elementary_into(&x[..n], NO_SKIP, &mut s);
    let r = norm(&x[..n]);
    (1..=k)
        .map(|j| s[j] / (1.0 + r.powi(j as i32)))
        .fold(f64::INFINITY, f64::min)
}

/// Strict interior test used before differentiating.
pub fn strictly_inside(lambda: &[f64], cone: ConeId) -> bool {
    first_failure(lambda, cone, STRICT_TOL).is_none()
}

/// First `(j, σ_j)` with `σ_j <= tol · (1 + |λ|^j)`.
fn first_failure(lambda: &[f64], cone: ConeId, tol: f64) -> Option<(usize, f64)> {
    let (x, n) = cone_coordinates(lambda, cone);
    let k = cone.k().min(n);
    let mut s = [0.0; MAX_LEN + 1];
    elementary_into(&x[..n], NO_SKIP, &mut s);
    let r = norm(&x[..n]);
    (1..=k)
        .find(|&j| !(s[j] > tol * (1.0 + r.powi(j as i32))))
        .map(|j| (j, s[j]))
}

fn require(lambda: &[f64], cone: ConeId, tol: f64) -> Result<()> {
    match first_failure(lambda, cone, tol) {
        None => Ok(()),
        Some((index, value)) => Err(Error::Domain { index, value }),
    }
}

/// `f(λ)` for the given operator. The tuple is sorted descending first so the
/// result is bit-identical under permutations.
pub fn f_eval(op: &OperatorSpec, lambda: &[f64]) -> Result<f64> {
    op.check_len(lambda)?;
    let mut buf = [0.0; MAX_LEN];
    let n = op.n;
    buf[..n].copy_from_slice(lambda);
    buf[..n].sort_by(|a, b| b.total_cmp(a));
    let lambda = &buf[..n];
    require(lambda, op.cone(), 0.0)?;
    Ok(eval_unchecked(op, lambda))
}

pub(crate) fn eval_unchecked(op: &OperatorSpec, lambda: &[f64]) -> f64 {
    let n = op.n;
    let mut s = [0.0; MAX_LEN + 1];
    match op.family {
        Family::MongeAmpere => {
            elementary_into(lambda, NO_SKIP, &mut s);
            s[n].ln()
        }
        Family::Hessian => {
            elementary_into(lambda, NO_SKIP, &mut s);
            (s[op.k] / binomial(n, op.k)).ln()
        }
        Family::HessianQuotient => {
            elementary_into(lambda, NO_SKIP, &mut s);
            -(s[op.ell] / binomial(n, op.ell)) / (s[op.k] / binomial(n, op.k))
        }
        Family::TTransformHessian => {
            let mut t = [0.0; MAX_LEN];
            t_transform_into(lambda, &mut t[..n]);
            elementary_into(&t[..n], NO_SKIP, &mut s);
            s[op.k].ln()
        }
    }
}

/// Gradient and Hessian of `σ_k` at `x`: `∂_i σ_k = σ_{k-1}(x|i)`,
/// `∂_i∂_j σ_k = σ_{k-2}(x|ij)` off the diagonal, zero on it.
fn sigma_derivatives(x: &[f64], k: usize, grad: &mut [f64], hess: Option<&mut [f64]>) {
    let n = x.len();
    let mut s = [0.0; MAX_LEN + 1];
    for i in 0..n {
        elementary_into(x, [i, usize::MAX], &mut s);
        grad[i] = if k >= 1 { s[k - 1] } else { 0.0 };
    }
    if let Some(h) = hess {
        for i in 0..n {
            h[i * n + i] = 0.0;
            for j in (i + 1)..n {
                elementary_into(x, [i, j], &mut s);
                let v = if k >= 2 { s[k - 2] } else { 0.0 };
                h[i * n + j] = v;
                h[j * n + i] = v;
            }
        }
    }
}

/// Writes `(∂_i log σ_k, ∂_i∂_j log σ_k)` at `x`.
fn log_sigma_derivatives(x: &[f64], k: usize, grad: &mut [f64], hess: Option<&mut [f64]>) {
    let n = x.len();
    let mut s = [0.0; MAX_LEN + 1];
    elementary_into(x, NO_SKIP, &mut s);
    let sk = s[k];
    match hess {
        None => {
            sigma_derivatives(x, k, grad, None);
            for g in grad.iter_mut().take(n) {
                *g /= sk;
            }
        }
        Some(h) => {
            sigma_derivatives(x, k, grad, Some(&mut h[..n * n]));
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = h[i * n + j] / sk - grad[i] * grad[j] / (sk * sk);
                }
            }
            for g in grad.iter_mut().take(n) {
                *g /= sk;
            }
        }
    }
}

/// Closed-form first (and optionally second) derivatives of `f`, written into
/// `grad[0..n]` and row-major `hess[0..n*n]`. No cone check.
pub(crate) fn derivatives_unchecked(
    op: &OperatorSpec,
    lambda: &[f64],
    grad: &mut [f64],
    hess: Option<&mut [f64]>,
) {
    let n = op.n;
    match op.family {
        Family::MongeAmpere => {
            for i in 0..n {
                grad[i] = 1.0 / lambda[i];
            }
            if let Some(h) = hess {
                h[..n * n].iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    h[i * n + i] = -1.0 / (lambda[i] * lambda[i]);
                }
            }
        }
        Family::Hessian => log_sigma_derivatives(lambda, op.k, grad, hess),
        Family::HessianQuotient => {
            let (k, l) = (op.k, op.ell);
            let kappa = binomial(n, k) / binomial(n, l);
            let mut s = [0.0; MAX_LEN + 1];
            elementary_into(lambda, NO_SKIP, &mut s);
            let (sl, sk) = (s[l], s[k]);
            let mut gl = [0.0; MAX_LEN];
            let mut gk = [0.0; MAX_LEN];
            let want_hess = hess.is_some();
            let mut hl = [0.0; MAX_LEN * MAX_LEN];
            let mut hk = [0.0; MAX_LEN * MAX_LEN];
            if want_hess {
                sigma_derivatives(lambda, l, &mut gl, Some(&mut hl[..n * n]));
                sigma_derivatives(lambda, k, &mut gk, Some(&mut hk[..n * n]));
            } else {
                sigma_derivatives(lambda, l, &mut gl, None);
                sigma_derivatives(lambda, k, &mut gk, None);
            }
            for i in 0..n {
                grad[i] = -kappa * (gl[i] * sk - sl * gk[i]) / (sk * sk);
            }
            if let Some(h) = hess {
                let sk2 = sk * sk;
                let sk3 = sk2 * sk;
                for i in 0..n {
                    for j in 0..n {
                        let v = hl[i * n + j] / sk
                            - (gl[i] * gk[j] + gl[j] * gk[i]) / sk2
                            - sl * hk[i * n + j] / sk2
                            + 2.0 * sl * gk[i] * gk[j] / sk3;
                        h[i * n + j] = -kappa * v;
                    }
                }
            }
        }
        Family::TTransformHessian => {
            let mut t = [0.0; MAX_LEN];
            t_transform_into(lambda, &mut t[..n]);
            let mut g = [0.0; MAX_LEN];
            let mut hh = [0.0; MAX_LEN * MAX_LEN];
            let want_hess = hess.is_some();
            if want_hess {
                log_sigma_derivatives(&t[..n], op.k, &mut g, Some(&mut hh[..n * n]));
            } else {
                log_sigma_derivatives(&t[..n], op.k, &mut g, None);
            }
            // The Jacobian of T is J = 11ᵀ - I, so ∇f = J g and ∇²f = J H J.
            let gsum: f64 = g[..n].iter().sum();
            for i in 0..n {
                grad[i] = gsum - g[i];
            }
            if let Some(h) = hess {
                let mut row = [0.0; MAX_LEN];
                let mut col = [0.0; MAX_LEN];
                let mut total = 0.0;
                for i in 0..n {
                    row[i] = (0..n).map(|j| hh[i * n + j]).sum();
                    col[i] = (0..n).map(|j| hh[j * n + i]).sum();
                    total += row[i];
                }
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = total - row[i] - col[j] + hh[i * n + j];
                    }
                }
            }
        }
    }
}

/// `(f_i, f_ij)` at a point strictly inside the cone.
pub fn f_grad_hess(op: &OperatorSpec, lambda: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    op.check_len(lambda)?;
    require(lambda, op.cone(), STRICT_TOL)?;
    let n = op.n;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    derivatives_unchecked(op, lambda, &mut grad, Some(&mut hess));
    Ok((grad, hess.chunks(n).map(|r| r.to_vec()).collect()))
}

/// Gradient only; the allocation-free variant used on grids.
pub fn f_grad_into(op: &OperatorSpec, lambda: &[f64], grad: &mut [f64]) -> Result<()> {
    op.check_len(lambda)?;
    require(lambda, op.cone(), STRICT_TOL)?;
    derivatives_unchecked(op, lambda, grad, None);
    Ok(())
}

/// Value of a limit that may diverge to `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInfinity => None,
        }
    }
}

/// Membership of an `(n-1)`-tuple in `Γ_∞`, the set of tuples that admit a
/// completion `(λ', t)` inside the cone.
pub fn in_gamma_infinity(op: &OperatorSpec, lambda_prime: &[f64]) -> bool {
    let m = lambda_prime.len();
    if m + 1 != op.n {
        return false;
    }
    match op.cone() {
        // (λ', t) ∈ Γ_k for large t iff λ' ∈ Γ_{k-1} in one dimension fewer.
        ConeId::Garding(k) => {
            k == 1 || first_failure(lambda_prime, ConeId::Garding(k - 1), 0.0).is_none()
        }
        // T(λ', t) ∈ Γ_k: the first n-1 entries grow with t, the last is Σλ'.
        ConeId::TPullback(k) => k < op.n || lambda_prime.iter().sum::<f64>() > 0.0,
    }
}

/// `lim_{t→∞} f(λ', t)`.
pub fn f_infinity(op: &OperatorSpec, lambda_prime: &[f64]) -> Result<ExtendedReal> {
    if lambda_prime.len() + 1 != op.n {
        return Err(Error::arg(format!(
            "f_infinity expects {} entries, got {}",
            op.n - 1,
            lambda_prime.len()
        )));
    }
    if !in_gamma_infinity(op, lambda_prime) {
        let k = op.k.saturating_sub(1).max(1);
        let s = sigmas(lambda_prime);
        let index = (1..=k.min(lambda_prime.len())).find(|&j| s[j] <= 0.0).unwrap_or(k);
        return Err(Error::Domain { index, value: s.get(index).copied().unwrap_or(0.0) });
    }
    match op.family {
        Family::HessianQuotient => {
            // σ_j(λ', t) = σ_j(λ') + t σ_{j-1}(λ'), so the ratio tends to the
            // ratio of the t-coefficients.
            let s = sigmas(lambda_prime);
            let kappa = binomial(op.n, op.k) / binomial(op.n, op.ell);
            Ok(ExtendedReal::Finite(-kappa * s[op.ell - 1] / s[op.k - 1]))
        }
        _ => Ok(ExtendedReal::PosInfinity),
    }
}

/// First- and second-order matrix derivatives of `F(A) = f(λ(A))` at a
/// Hermitian `A`.
#[derive(Debug, Clone)]
pub struct GerhardtDerivatives {
    op: OperatorSpec,
    /// Eigenvalues of `A`, descending.
    pub lambda: Vec<f64>,
    /// Eigenvalues used for the divided differences (perturbed when `A` has
    /// coincident eigenvalues).
    pub lambda_divided: Vec<f64>,
    /// Unitary eigenbasis; column `i` belongs to `lambda[i]`.
    pub basis: CMatrix,
    /// `f_i` at `lambda`.
    pub f_i: Vec<f64>,
    /// `f_ij` at `lambda`, row-major.
    f_ij: Vec<f64>,
    /// Divided differences `(f_p - f_q)/(λ_p - λ_q)`, row-major, zero on the diagonal.
    divided: Vec<f64>,
    /// Whether the spectrum perturbation was applied.
    pub perturbed: bool,
}

impl GerhardtDerivatives {
    /// `F^{ij}` in the ambient basis, `Q diag(f_i) Q*`, so that
    /// `d/dt F(A + tX)|₀ = Re tr(F X)`.
    pub fn first(&self) -> HermitianMatrix {
        let n = self.op.n;
        let q = &self.basis;
        let mut out = HermitianMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in 0..n {
                    acc += q.get(i, p) * self.f_i[p] * q.get(j, p).conj();
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// `F^{ij}` in the eigenbasis: `diag(f_i)`.
    pub fn first_diagonal(&self) -> &[f64] {
        &self.f_i
    }

    /// `Σ|f_ij| + max|divided difference|`, a bound on the quadratic form
    /// over unit-Frobenius directions.
    pub fn second_order_scale(&self) -> f64 {
        let a: f64 = self.f_ij.iter().map(|v| v.abs()).sum();
        let b = self.divided.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a + b
    }

    /// `F^{ij,rs} X_{ij̄} X_{rs̄}` for a Hermitian direction `X` given in the
    /// ambient basis.

    pub fn quadratic_form(&self, x: &HermitianMatrix) -> f64 {
        let n = self.op.n;
        let xt = self.basis.adjoint_mul(x).mul(&self.basis);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.f_ij[i * n + j] * xt.get(i, i).re * xt.get(j, j).re;
            }
        }
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    acc += self.divided[p * n + q] * xt.get(p, q).norm_sqr();
                }
            }
        }
        acc
    }

    /// The right side of the upper bound keeping only the first-row terms:
    /// `f_ij X_ii X_jj + Σ_{p>1} (f_1 - f_p)/(λ_1 - λ_p) |X_p1|²`.
    pub fn quadratic_upper_bound(&self, x: &HermitianMatrix) -> f64 {
        let n = self.op.n;
        let xt = self.basis.adjoint_mul(x).mul(&self.basis);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.f_ij[i * n + j] * xt.get(i, i).re * xt.get(j, j).re;
            }
        }
        for p in 1..n {
            acc += self.divided[p] * xt.get(p, 0).norm_sqr();
        }
        acc
    }
}

/// Matrix derivatives of `F` at `A`; coincident eigenvalues (gap below
/// `DEGENERACY_TOL·(1+|λ|)`) are separated by the diagonal perturbation
/// with gap `tau` before forming divided differences.
pub fn gerhardt_derivatives(
    op: &OperatorSpec,
    a: &HermitianMatrix,
    tau: f64,
) -> Result<GerhardtDerivatives> {
    let n = op.n;
    if a.dim() != n {
        return Err(Error::arg(format!(
            "matrix dimension {} does not match operator dimension {n}",
            a.dim()
        )));
    }
    let (spectrum, basis) = hermitian::eigh(a);
    let lambda = spectrum.into_vec();
    require(&lambda, op.cone(), STRICT_TOL)?;

    let mut f_i = vec![0.0; n];
    let mut f_ij = vec![0.0; n * n];
    derivatives_unchecked(op, &lambda, &mut f_i, Some(&mut f_ij));

    let scale = 1.0 + norm(&lambda);
    let degenerate = lambda.windows(2).any(|w| (w[0] - w[1]).abs() < DEGENERACY_TOL * scale);
    let (lambda_divided, grad_divided) = if degenerate {
        let (_, perturbed) = hermitian::perturb_spectrum(&Spectrum(lambda.clone()), tau)?;
        let lp = perturbed.into_vec();
        require(&lp, op.cone(), 0.0)?;
        let mut g = vec![0.0; n];
        derivatives_unchecked(op, &lp, &mut g, None);
        (lp, g)
    } else {
        (lambda.clone(), f_i.clone())
    };
    let mut divided = vec![0.0; n * n];
    for p in 0..n {
        for q in 0..n {
            if p != q {
                divided[p * n + q] = (grad_divided[p] - grad_divided[q])
                    / (lambda_divided[p] - lambda_divided[q]);
            }
        }
    }
    debug_assert!(n <= MAX_DIM);
    Ok(GerhardtDerivatives {
        op: *op,
        lambda,
        lambda_divided,
        basis,
        f_i,
        f_ij,
        divided,
        perturbed: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&[1.0, 2.0, 3.0], 2).unwrap(), 11.0);
        assert_eq!(sigma(&[1.0, 1.0, 1.0], 3).unwrap(), 1.0);
        assert_eq!(sigma(&[1.0, 2.0, 3.0], 0).unwrap(), 1.0);
        assert!(matches!(sigma(&[1.0, 2.0], 3), Err(Error::Argument(_))));
    }

    #[test]
    fn cone_examples() {
        assert!(cone_contains(&[3.0, -1.0], ConeId::Garding(1)));
        assert!(!cone_contains(&[3.0, -1.0], ConeId::Garding(2)));
        assert!(cone_contains(&[1.0, 1.0, 1.0], ConeId::Garding(3)));
        // T(3, -1) = (-1, 3): σ_2 = -3.
        assert!(!cone_contains(&[3.0, -1.0], ConeId::TPullback(2)));
        assert!(cone_contains(&[2.0, 3.0], ConeId::TPullback(2)));
    }

    #[test]
    fn f_eval_examples() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        assert_eq!(f_eval(&ma, &[1.0, 1.0]).unwrap(), 0.0);
        let q = OperatorSpec::hessian_quotient(2, 2, 1, 1.0).unwrap();
        assert_relative_eq!(f_eval(&q, &[1.0, 1.0]).unwrap(), -1.0, epsilon = 1e-15);
        let t = OperatorSpec::ttransform_hessian(2, 2).unwrap();
        assert_relative_eq!(f_eval(&t, &[2.0, 3.0]).unwrap(), 6f64.ln(), epsilon = 1e-15);
        let h = OperatorSpec::hessian(3, 2).unwrap();
        // σ_2(1,1,1) = 3 = C(3,2).
        assert_relative_eq!(f_eval(&h, &[1.0, 1.0, 1.0]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn f_eval_outside_cone_reports_first_sigma() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        match f_eval(&ma, &[3.0, -1.0]) {
            Err(Error::Domain { index, value }) => {
                assert_eq!(index, 2);
                assert_eq!(value, -3.0);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        let h = OperatorSpec::hessian(2, 1).unwrap();
        assert!(matches!(f_eval(&h, &[-3.0, 1.0]), Err(Error::Domain { index: 1, .. })));
    }

    #[test]
    fn monge_ampere_derivatives() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        let (g, h) = f_grad_hess(&ma, &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![1.0, 0.5]);
        assert_eq!(h, vec![vec![-1.0, 0.0], vec![0.0, -0.25]]);

        let ma3 = OperatorSpec::monge_ampere(3).unwrap();
        let (g, _) = f_grad_hess(&ma3, &[1.0, 1.0, 1.0]).unwrap();
        let euler: f64 = g.iter().sum();
        assert_eq!(euler, 3.0);
    }

    #[test]
    fn quotient_gradient_matches_central_differences() {
        let q = OperatorSpec::hessian_quotient(2, 2, 1, 1.0).unwrap();
        let x = [1.0, 1.0];
        let (g, _) = f_grad_hess(&q, &x).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (f_eval(&q, &xp).unwrap() - f_eval(&q, &xm).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[i], fd, max_relative = 1e-6);
            assert!(g[i] > 0.0);
        }
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn boundary_is_rejected_by_derivatives() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        assert!(matches!(f_grad_hess(&ma, &[1.0, 0.0]), Err(Error::Domain { .. })));
        assert!(matches!(f_grad_hess(&ma, &[1.0, 1e-14]), Err(Error::Domain { .. })));
    }

    #[test]
    fn f_infinity_examples() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        assert_eq!(f_infinity(&ma, &[1.0]).unwrap(), ExtendedReal::PosInfinity);
        let q = OperatorSpec::hessian_quotient(2, 2, 1, 1.0).unwrap();
        assert_eq!(f_infinity(&q, &[1.0]).unwrap(), ExtendedReal::Finite(-0.5));
        let h = OperatorSpec::hessian(3, 2).unwrap();
        assert_eq!(f_infinity(&h, &[1.0, 1.0]).unwrap(), ExtendedReal::PosInfinity);
        assert!(matches!(f_infinity(&ma, &[-1.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn quotient_limit_matches_large_t() {
        let q = OperatorSpec::hessian_quotient(3, 3, 1, 1.0).unwrap();
        let lp = [0.7, 1.9];
        let lim = f_infinity(&q, &lp).unwrap().finite().unwrap();
        let far = f_eval(&q, &[0.7, 1.9, 1e9]).unwrap();
        assert_relative_eq!(lim, far, max_relative = 1e-8);
    }

    #[test]
    fn ttransform_gradient_is_chain_rule() {
        let t = OperatorSpec::ttransform_hessian(3, 2).unwrap();
        let x = [0.9, 0.4, -0.1];
        let (g, h) = f_grad_hess(&t, &x).unwrap();
        let step = 1e-5;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += step;
            xm[i] -= step;
            let fd = (f_eval(&t, &xp).unwrap() - f_eval(&t, &xm).unwrap()) / (2.0 * step);
            assert_relative_eq!(g[i], fd, max_relative = 1e-7);
            let (gp, _) = f_grad_hess(&t, &xp).unwrap();
            let (gm, _) = f_grad_hess(&t, &xm).unwrap();
            for j in 0..3 {
                assert_relative_eq!(h[j][i], (gp[j] - gm[j]) / (2.0 * step), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn gerhardt_examples() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        let a = HermitianMatrix::from_real_diag(&[1.0, 2.0]);
        let d = gerhardt_derivatives(&ma, &a, DEFAULT_TAU).unwrap();
        let f = d.first();
        assert_relative_eq!(f.get(0, 0).re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(f.get(1, 1).re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(f.get(0, 1).norm(), 0.0, epsilon = 1e-15);
        let x = HermitianMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_relative_eq!(d.quadratic_form(&x), -1.0, epsilon = 1e-14);
        assert_eq!(d.quadratic_form(&HermitianMatrix::zeros(2)), 0.0);
        assert!(d.quadratic_form(&x) <= d.quadratic_upper_bound(&x) + 1e-14);
    }

    #[test]
    fn gerhardt_degenerate_spectrum_is_perturbed() {
        let ma = OperatorSpec::monge_ampere(2).unwrap();
        let a = HermitianMatrix::identity(2);
        let d = gerhardt_derivatives(&ma, &a, DEFAULT_TAU).unwrap();
        assert!(d.perturbed);
        // log det(I + tX) with X = [[0,1],[1,0]] has second derivative -2.
        let x = HermitianMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_relative_eq!(d.quadratic_form(&x), -2.0, max_relative = 1e-5);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn operator_spec_validation() {
        assert!(OperatorSpec::hessian(3, 4).is_err());
        assert!(OperatorSpec::hessian_quotient(3, 2, 0, 1.0).is_err());
        assert!(OperatorSpec::hessian_quotient(3, 2, 2, 1.0).is_err());
        assert!(OperatorSpec::hessian_quotient(3, 3, 1, -1.0).is_err());
        assert!(OperatorSpec::ttransform_hessian(1, 1).is_err());
    }
}
