//! Certification of C-subsolutions and the Hessian-quotient cone condition.

use serde::Serialize;

use crate::chart::{compensated_sum, BasicScalarField, Chart, HermitianField};
use crate::error::{Error, Result};
use crate::forms::{n_minus_one_margin, positivity_k_margin, quotient_combination, OneOneForm};
use crate::hermitian::{endo_from_pair, HermitianMatrix};
use crate::symfunc::{
    binomial, f_eval, f_infinity, in_gamma_infinity, sigma, strictly_inside, ExtendedReal, OperatorSpec, Spectrum,
};

/// Stand-in margin when every axis limit is `+∞`.
pub const UNBOUNDED_SENTINEL: f64 = 1e30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsolutionReport {
    pub is_subsolution: bool,
    pub worst_point: usize,
    pub worst_margin: f64,
    /// True when the margin is the sentinel because `f_∞ = +∞`.
    pub unbounded: bool,
    /// `(δ, R)`: with `μ − δ·1` the ray `μ − δ·1 + t e_i` meets the level set
    /// `f = ψ` inside the ball of radius `R`, for every axis and point.
    pub delta_r: Option<(f64, f64)>,
}

fn drop_axis(mu: &[f64], i: usize) -> Vec<f64> {
    mu.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &v)| v).collect()
}

/// `min_i lim_{t→∞} f(μ + t e_i)`, or `None` for `+∞`.
fn axis_limit(op: &OperatorSpec, mu: &[f64]) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for i in 0..mu.len() {
        match f_infinity(op, &drop_axis(mu, i))? {
            ExtendedReal::PosInfinity => {}
            ExtendedReal::Finite(v) => best = Some(best.map_or(v, |b: f64| b.min(v))),
        }
    }
    Ok(best)
}

fn spectra(chart: &Chart, a: &HermitianField) -> Result<Vec<Spectrum>> {
    if a.points() != chart.points() || a.dim() != chart.n() {
        return Err(Error::Dimension("form field does not match the chart".into()));
    }
    (0..chart.points())
        .map(|p| endo_from_pair(&chart.metric_at(p), &a.get(p)).map(|(l, _)| l))
        .collect()
}

/// Checks `min_i lim_{t→∞} f(μ + t e_i) > ψ` at every grid point, with
/// `μ = λ(g⁻¹ A)`.
pub fn c_subsolution_report(
    op: &OperatorSpec,
    chart: &Chart,
    a_under: &HermitianField,
    psi: &BasicScalarField,
) -> Result<SubsolutionReport> {
    if psi.len() != chart.points() {
        return Err(Error::Dimension("psi does not match the chart".into()));
    }
    let mus = spectra(chart, a_under)?;
    let mut worst = (0usize, f64::INFINITY);
    let mut all_unbounded = true;
    for (p, mu) in mus.iter().enumerate() {
        for i in 0..mu.len() {
            if !in_gamma_infinity(op, &drop_axis(mu, i)) {
                return Err(Error::SubsolutionDomain { point: p, spectrum: mu.to_vec() });
            }
        }
        let margin = match axis_limit(op, mu)? {
            None => UNBOUNDED_SENTINEL,
            Some(v) => {
                all_unbounded = false;
                v - psi.values()[p]
            }
        };
        if margin < worst.1 {
            worst = (p, margin);
        }
    }
    let is_subsolution = worst.1 > 0.0;
    let delta_r = if is_subsolution { delta_r(op, &mus, psi.values()) } else { None };
    Ok(SubsolutionReport {
        is_subsolution,
        worst_point: worst.0,
        worst_margin: worst.1,
        unbounded: all_unbounded,
        delta_r,
    })
}

/// Pointwise subsolution margin for a single spectrum.
pub fn subsolution_margin(op: &OperatorSpec, mu: &[f64], psi: f64) -> Result<f64> {
    Ok(match axis_limit(op, mu)? {
        None => UNBOUNDED_SENTINEL,
        Some(v) => v - psi,
    })
}

fn delta_r(op: &OperatorSpec, mus: &[Spectrum], psi: &[f64]) -> Option<(f64, f64)> {
    // Largest δ on a halving ladder keeping every shifted spectrum a subsolution.
    let mut delta = 1.0;
    let shifted = |d: f64, mu: &[f64]| mu.iter().map(|v| v - d).collect::<Vec<f64>>();
    'ladder: for _ in 0..40 {
        for (mu, &s) in mus.iter().zip(psi) {
            let m = shifted(delta, mu);
            let ok = (0..m.len()).all(|i| in_gamma_infinity(op, &drop_axis(&m, i)))
                && matches!(subsolution_margin(op, &m, s), Ok(v) if v > 0.0);
            if !ok {
                delta *= 0.5;
                continue 'ladder;
            }
        }
        let mut radius = 0.0f64;
        for (mu, &s) in mus.iter().zip(psi) {
            let m = shifted(delta, mu);
            for i in 0..m.len() {
                let t = level_crossing(op, &m, i, s)?;
                let mut x = m.clone();
                x[i] += t;
                radius = radius.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        return Some((delta, radius));
    }
    None
}

/// Smallest `t >= 0` with `μ + t e_i` admissible and `f >= ψ`.
fn level_crossing(op: &OperatorSpec, mu: &[f64], i: usize, psi: f64) -> Option<f64> {
    let above = |t: f64| {
        let mut x = mu.to_vec();
        x[i] += t;
        strictly_inside(&x, op.cone()) && matches!(f_eval(op, &x), Ok(v) if v >= psi)
    };
    if above(0.0) {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while !above(hi) {
        hi *= 2.0;
        if hi > 1e15 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientConeReport {
    pub holds: bool,
    pub margin: f64,
    pub worst_point: usize,
    /// Margin recomputed from the (n−1,n−1) combination.
    pub forms_margin: f64,
}

/// Eigenvalue-route and forms-route margins at one point.
pub fn quotient_cone_margins(
    omega: &HermitianMatrix,
    omega_h: &HermitianMatrix,
    k: usize,
    ell: usize,
    c: f64,
) -> Result<(f64, f64)> {
    let n = omega.dim();
    if ell == 0 {
        return Err(Error::arg("quotient cone condition needs l >= 1"));
    }
    if !(ell < k && k <= n) {
        return Err(Error::arg(format!("need 1 <= l < k <= n, got l = {ell}, k = {k}, n = {n}")));
    }
    let km = positivity_k_margin(omega, omega_h, k)?;
    if !(km > 0.0) {
        return Err(Error::Positivity(format!("omega_h is not strictly {k}-positive (margin {km:e})")));
    }
    let (mu, _) = endo_from_pair(omega, omega_h)?;
    let nf = n as f64;
    let mut eig = f64::INFINITY;
    for i in 0..n {
        let sub = drop_axis(&mu, i);
        let v = nf * c * sigma(&sub, k - 1)? / binomial(n, k) - nf * sigma(&sub, ell - 1)? / binomial(n, ell);
        eig = eig.min(v);
    }
    let combo = quotient_combination(omega, &OneOneForm(*omega_h), k, ell, c)?;
    let forms = n_minus_one_margin(omega, &combo)?;
    Ok((eig, forms))
}

pub fn quotient_cone_condition(
    omega_h: &HermitianField,
    omega: &HermitianField,
    k: usize,
    ell: usize,
    c: f64,
) -> Result<QuotientConeReport> {
    if omega.points() != omega_h.points() || omega.dim() != omega_h.dim() {
        return Err(Error::Dimension("metric and form fields differ in shape".into()));
    }
    let mut report = QuotientConeReport { holds: false, margin: f64::INFINITY, worst_point: 0, forms_margin: f64::INFINITY };
    for p in 0..omega.points() {
        let (eig, forms) = quotient_cone_margins(&omega.get(p), &omega_h.get(p), k, ell, c)?;
        if eig < report.margin {
            report.margin = eig;
            report.worst_point = p;
        }
        report.forms_margin = report.forms_margin.min(forms);
    }
    report.holds = report.margin > 0.0;
    Ok(report)
}

/// `c = ∫ ω_h^ℓ ∧ ω^{n−ℓ} / ∫ ω_h^k ∧ ω^{n−k}`.
pub fn integral_ratio_c(chart: &Chart, omega_h: &HermitianField, k: usize, ell: usize) -> Result<f64> {
    let n = chart.n();
    let mus = spectra(chart, omega_h)?;
    let mut num = Vec::with_capacity(mus.len());
    let mut den = Vec::with_capacity(mus.len());
    for (p, mu) in mus.iter().enumerate() {
        let vol = chart.metric_at(p).det_re();
        num.push(sigma(mu, ell)? / binomial(n, ell) * vol);
        den.push(sigma(mu, k)? / binomial(n, k) * vol);
    }
    Ok(compensated_sum(&num) / compensated_sum(&den))
}
