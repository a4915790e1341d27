//! Manufactured-solution campaigns and the seeded identity suite.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chart::BasicScalarField;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::{
    chi_wedge_omega, hodge_star_trace, power_root_bijection, star_n_minus_one, star_one_one, Direction, OneOneForm,
};
use crate::hermitian::{eigh, CMatrix, HermitianMatrix};
use crate::solver::{
    calabi_yau_check, operator_values, quadratic_tail_constant, solve, trace_complement_beta, Mode, ProblemSpec,
    SolveRun,
};
use crate::subsolution::quotient_cone_margins;
use crate::symfunc::{
    cone_margin, f_eval, f_grad_hess, gerhardt_derivatives, sigma, strictly_inside, ConeId, Family, OperatorSpec,
    DEFAULT_TAU,
};

/// Where an expected value comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Paper,
    Trivial,
    Derived { oracle: String },
}

fn derived(oracle: &str) -> Provenance {
    Provenance::Derived { oracle: oracle.to_string() }
}

/// Upper bound on an achieved quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub quantity: &'static str,
    pub bound: f64,
    pub provenance: Provenance,
}

fn expect(quantity: &'static str, bound: f64, provenance: Provenance) -> Expectation {
    Expectation { quantity, bound, provenance }
}

/// Independent reference each case is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    /// `ψ` is generated from a known `u*`.
    Forward,
    /// Linear `k = 1` equation solved directly in Fourier space.
    Poisson,
    /// `u ≡ 0, b = 0` solves the equation by direct algebra.
    Zero,
    /// `b` is pinned by the discrete total mass.
    Mass,
    /// Trace-complement family against Monge–Ampère with the explicit form.
    Swap,
}

#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub name: &'static str,
    pub config: RunConfig,
    pub exact_u: Option<&'static str>,
    /// Second starting field for the uniqueness comparison.
    pub alternate_u: &'static str,
    pub oracle: Oracle,
    pub expected: Vec<Expectation>,
}

pub const CASE_NAMES: [&str; 5] = ["ma-n2-smooth", "hessian-k1", "quotient-const", "ma-mass", "ttransform-swap"];

fn uniqueness() -> [Expectation; 2] {
    [
        expect("uniqueness_u", 1e-8, Provenance::Paper),
        expect("uniqueness_b", 1e-10, Provenance::Paper),
    ]
}

fn residual_bound() -> Expectation {
    expect("residual", 1e-10, derived("direct residual evaluation"))
}

pub fn case(name: &str) -> Option<CaseSpec> {
    let spec = match name {
        "ma-n2-smooth" => {
            let cfg = RunConfig::new(2, 32, Family::MongeAmpere);
            let oracle = "forward construction of psi from u*";
            CaseSpec {
                name: "ma-n2-smooth",
                config: cfg,
                exact_u: Some("0.05*(cos(2*pi*x1) + cos(2*pi*y2))"),
                alternate_u: "0.03*sin(2*pi*(x1 + y2)) - 0.02*cos(2*pi*x2)",
                oracle: Oracle::Forward,
                expected: vec![
                    expect("u_error", 1e-6, derived(oracle)),
                    expect("b_abs", 1e-8, derived(oracle)),
                    residual_bound(),
                    expect("newton_tail", 1e2, Provenance::Paper),
                ],
            }
        }
        "hessian-k1" => {
            let mut cfg = RunConfig::new(2, 16, Family::Hessian);
            cfg.k = Some(1);
            cfg.rhs = Some("0.2*cos(2*pi*x1) + 0.1*sin(2*pi*(x2 + y1))".into());
            let oracle = "FFT Poisson solve of the linear equation";
            CaseSpec {
                name: "hessian-k1",
                config: cfg,
                exact_u: None,
                alternate_u: "0.05*cos(2*pi*y1)",
                oracle: Oracle::Poisson,
                expected: vec![
                    expect("u_error", 1e-10, derived(oracle)),
                    expect("b_error", 1e-10, derived(oracle)),
                    residual_bound(),
                ],
            }
        }
        "quotient-const" => {
            let mut cfg = RunConfig::new(2, 8, Family::HessianQuotient);
            cfg.k = Some(2);
            cfg.ell = Some(1);
            cfg.form_scale = Some(2.0);
            let oracle = "direct algebra: f(2, 2) = -c";
            CaseSpec {
                name: "quotient-const",
                config: cfg,
                exact_u: None,
                alternate_u: "0.05*cos(2*pi*x1)",
                oracle: Oracle::Zero,
                expected: vec![
                    expect("u_abs", 1e-10, derived(oracle)),
                    expect("b_abs", 1e-10, derived(oracle)),
                    residual_bound(),
                ],
            }
        }
        "ma-mass" => {
            let mut cfg = RunConfig::new(2, 16, Family::MongeAmpere);
            cfg.rhs = Some("log(2 + cos(2*pi*x1))".into());
            let oracle = "discrete mass identity mean det(I + ddbar u) = 1";
            CaseSpec {
                name: "ma-mass",
                config: cfg,
                exact_u: None,
                alternate_u: "0.04*cos(2*pi*(x1 - y2))",
                oracle: Oracle::Mass,
                expected: vec![
                    expect("b_error", 1e-8, derived(oracle)),
                    expect("mass_error", 1e-8, derived(oracle)),
                    residual_bound(),
                ],
            }
        }
        "ttransform-swap" => {
            let mut cfg = RunConfig::new(2, 16, Family::TTransformHessian);
            cfg.k = Some(2);
            cfg.form_diag = Some(vec![2.0, 1.5]);
            cfg.form_upper = Some(vec![0.3, 0.2]);
            cfg.rhs = Some("0.1*cos(2*pi*x1) + 0.05*sin(2*pi*(x2 + y1))".into());
            let oracle = "Monge-Ampere solve with the trace-complement form";
            CaseSpec {
                name: "ttransform-swap",
                config: cfg,
                exact_u: None,
                alternate_u: "0.03*cos(2*pi*y2)",
                oracle: Oracle::Swap,
                expected: vec![
                    expect("u_error", 1e-8, derived(oracle)),
                    expect("b_error", 1e-8, derived(oracle)),
                    expect("calabi_yau", 1e-8, derived("pointwise determinant ratio of the recovered form")),
                    residual_bound(),
                ],
            }
        }
        _ => return None,
    };
    let mut spec = spec;
    spec.expected.extend(uniqueness());
    Some(spec)
}

pub fn all_cases() -> Vec<CaseSpec> {
    CASE_NAMES.iter().filter_map(|n| case(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub quantity: &'static str,
    pub achieved: f64,
    pub bound: f64,
    pub passed: bool,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManufacturedReport {
    pub case: &'static str,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub b: f64,
    pub residual: f64,
    pub newton_iterations: usize,
    pub rejected_steps: usize,
    pub elapsed_seconds: f64,
    #[serde(skip)]
    pub run: SolveRun,
}

impl ManufacturedReport {
    pub fn check(&self, quantity: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.quantity == quantity)
    }
}

fn with_case<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Case { case: name.to_string(), source: Box::new(e) })
}

fn run_from(spec: &ProblemSpec, cfg: &RunConfig, start: Option<&str>) -> Result<SolveRun> {
    let mut opts = cfg.solve_options(&spec.chart)?;
    if let Some(src) = start {
        opts.initial_u = Some(spec.chart.sample_expr(&Expr::parse(src)?)?);
    }
    solve(spec, &opts)
}

/// `Δu = 2e^{ψ+b} − 2` solved in Fourier space; the `k = 1` Hessian
/// equation `log(tr(I + ∂∂̄u)/2) = ψ + b` in closed form.
fn poisson_oracle(spec: &ProblemSpec) -> Result<(BasicScalarField, f64)> {
    let chart = &spec.chart;
    let n = chart.n() as f64;
    let e: Vec<f64> = spec.psi.values().iter().map(|v| v.exp()).collect();
    let b = -spec.psi.with_values(e.clone()).mean().ln();
    let rhs: Vec<f64> = e.iter().map(|v| n * v * b.exp() - n).collect();
    let g = match chart.metric() {
        crate::chart::Metric::Constant(g) => g.inverse_h().expect("metric is positive definite"),
        crate::chart::Metric::Field(_) => return Err(Error::arg("the Poisson oracle needs a constant metric")),
    };
    let symbol = chart.constant_symbol(&g);
    let mut hat = chart.forward(&rhs);
    for (h, s) in hat.iter_mut().zip(&symbol) {
        *h = if s.abs() > 0.0 { *h / *s } else { Complex64::new(0.0, 0.0) };
    }
    let u = chart.field(chart.inverse_real(hat))?;
    let s = u.sup();
    Ok((u.map(|v| v - s), b))
}

/// Builds `ψ` from the case data, solves from two starting fields and
/// compares against the case oracle.
pub fn run_manufactured(case: &CaseSpec) -> Result<ManufacturedReport> {
    let name = case.name;
    let mut spec = with_case(name, case.config.problem())?;
    let exact = match case.exact_u {
        Some(src) => {
            let u = with_case(name, spec.chart.sample_expr(&with_case(name, Expr::parse(src))?))?;
            spec.psi = with_case(name, operator_values(&spec, &u))?;
            let s = u.sup();
            Some(u.map(|v| v - s))
        }
        None => None,
    };
    let run = with_case(name, run_from(&spec, &case.config, None))?;
    let alt = with_case(name, run_from(&spec, &case.config, Some(case.alternate_u)))?;

    let mut achieved: Vec<(&'static str, f64)> = vec![
        ("residual", run.residual),
        ("uniqueness_u", run.u.distance(&alt.u)),
        ("uniqueness_b", (run.b - alt.b).abs()),
    ];
    if let Some(c) = quadratic_tail_constant(&run.final_residuals(), 1e-12) {
        achieved.push(("newton_tail", c));
    }
    match case.oracle {
        Oracle::Forward => {
            let exact = exact.as_ref().ok_or_else(|| Error::arg("forward oracle needs a manufactured field"))?;
            achieved.push(("u_error", run.u.distance(exact)));
            achieved.push(("b_abs", run.b.abs()));
        }
        Oracle::Poisson => {
            let (u, b) = with_case(name, poisson_oracle(&spec))?;
            achieved.push(("u_error", run.u.distance(&u)));
            achieved.push(("b_error", (run.b - b).abs()));
        }
        Oracle::Zero => {
            achieved.push(("u_abs", run.u.sup_abs()));
            achieved.push(("b_abs", run.b.abs()));
        }
        Oracle::Mass => {
            let g = with_case(name, case.config.field(&spec.chart, case.config.rhs.as_deref()))?;
            let e = g.map(|v| v.exp());
            achieved.push(("b_error", (run.b + e.mean().ln()).abs()));
            achieved.push(("mass_error", (e.map(|v| v * run.b.exp()).mean() - 1.0).abs()));
        }
        Oracle::Swap => {
            let beta = trace_complement_beta(&spec.chart, &spec.form);
            let g = with_case(name, case.config.field(&spec.chart, case.config.rhs.as_deref()))?;
            let ma = with_case(name, OperatorSpec::monge_ampere(spec.op.n))?;
            let plain = with_case(name, ProblemSpec::new(ma, spec.chart.clone(), beta, g, Mode::Eigenvalue))?;
            let other = with_case(name, run_from(&plain, &case.config, None))?;
            achieved.push(("u_error", run.u.distance(&other.u)));
            achieved.push(("b_error", (run.b - other.b).abs()));
            achieved.push(("calabi_yau", with_case(name, calabi_yau_check(&spec, &run.u, run.b))?));
        }
    }

    let checks: Vec<CheckResult> = case
        .expected
        .iter()
        .map(|e| {
            let value = achieved.iter().find(|(q, _)| *q == e.quantity).map_or(f64::NAN, |(_, v)| *v);
            CheckResult {
                quantity: e.quantity,
                achieved: value,
                bound: e.bound,
                passed: value < e.bound,
                provenance: e.provenance.clone(),
            }
        })
        .collect();
    Ok(ManufacturedReport {
        case: name,
        passed: checks.iter().all(|c| c.passed),
        checks,
        b: run.b,
        residual: run.residual,
        newton_iterations: run.history.len(),
        rejected_steps: run.rejected_steps,
        elapsed_seconds: run.elapsed_seconds + alt.elapsed_seconds,
        run,
    })
}

/// Sample counts for [`verify_identities_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SuiteSizes {
    pub identities: usize,
    pub derivatives: usize,
    pub cones: usize,
    pub routes: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        SuiteSizes { identities: 1000, derivatives: 200, cones: 1000, routes: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityEntry {
    pub name: String,
    /// The identity being checked, as a formula.
    pub anchor: &'static str,
    pub samples: usize,
    pub max_error: f64,
    pub bound: f64,
    pub violations: usize,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub passed: bool,
    pub entries: Vec<IdentityEntry>,
    pub elapsed_seconds: f64,
}

impl IdentityReport {
    pub fn entry(&self, name: &str) -> Option<&IdentityEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

struct Tally {
    name: String,
    anchor: &'static str,
    bound: f64,
    samples: usize,
    max_error: f64,
    violations: usize,
}

impl Tally {
    fn new(name: impl Into<String>, anchor: &'static str, bound: f64) -> Self {
        Tally { name: name.into(), anchor, bound, samples: 0, max_error: 0.0, violations: 0 }
    }

    fn record(&mut self, err: f64) {
        self.samples += 1;
        // NaN is a violation and poisons the maximum.
        if !(err <= self.bound) {
            self.violations += 1;
        }
        if err.is_nan() || err > self.max_error {
            self.max_error = err;
        }
    }

    fn fail(&mut self) {
        self.samples += 1;
        self.violations += 1;
        self.max_error = f64::INFINITY;
    }

    fn finish(self) -> IdentityEntry {
        let note = (self.samples == 0).then(|| "0 samples: vacuous pass".to_string());
        IdentityEntry {
            passed: self.violations == 0,
            name: self.name,
            anchor: self.anchor,
            samples: self.samples,
            max_error: self.max_error,
            bound: self.bound,
            violations: self.violations,
            note,
        }
    }
}

fn rel(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(1.0)
}

fn rel_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    let m = CMatrix::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    HermitianMatrix::hermitize(m)
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    eigh(&random_hermitian(rng, n)).1
}

fn with_spectrum(v: &CMatrix, lambda: &[f64]) -> HermitianMatrix {
    let n = lambda.len();
    let d = CMatrix::from_fn(n, |i, j| if i == j { Complex64::new(lambda[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    HermitianMatrix::hermitize(v.mul(&d).mul(&v.adjoint()))
}

fn random_positive(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    let lambda: Vec<f64> = (0..n).map(|_| (rng.gen_range(-1.0f64..1.0)).exp()).collect();
    with_spectrum(&random_unitary(rng, n), &lambda)
}

fn sample_cone(rng: &mut ChaCha8Rng, n: usize, cone: ConeId) -> Vec<f64> {
    loop {
        let lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..3.0)).collect();
        if cone_margin(&lambda, cone) > 1e-3 {
            let s = rng.gen_range(-1.0f64..1.0).exp();
            return lambda.into_iter().map(|v| v * s).collect();
        }
    }
}

/// Largest `t` (by bisection) with `λ − t·1` still strictly inside the cone.
fn inner_radius(lambda: &[f64], cone: ConeId) -> f64 {
    let scale = lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (0.0, scale);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let shifted: Vec<f64> = lambda.iter().map(|v| v - mid).collect();
        if strictly_inside(&shifted, cone) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn random_operator(rng: &mut ChaCha8Rng, family: Family, n: usize) -> OperatorSpec {
    let op = match family {
        Family::MongeAmpere => OperatorSpec::monge_ampere(n),
        Family::Hessian => OperatorSpec::hessian(n, rng.gen_range(1..=n)),
        Family::HessianQuotient => {
            let k = rng.gen_range(2..=n);
            OperatorSpec::hessian_quotient(n, k, rng.gen_range(1..k), 1.0)
        }
        Family::TTransformHessian => OperatorSpec::ttransform_hessian(n, rng.gen_range(1..=n)),
    };
    op.expect("sampled indices are valid")
}

const FAMILIES: [Family; 4] =
    [Family::MongeAmpere, Family::Hessian, Family::HessianQuotient, Family::TTransformHessian];

fn family_name(f: Family) -> &'static str {
    match f {
        Family::MongeAmpere => "monge_ampere",
        Family::Hessian => "hessian",
        Family::HessianQuotient => "hessian_quotient",
        Family::TTransformHessian => "t_transform_hessian",
    }
}

fn spectral_f(op: &OperatorSpec, a: &HermitianMatrix) -> Option<f64> {
    let (lambda, _) = eigh(a);
    f_eval(op, lambda.as_slice()).ok()
}

fn form_identities(rng: &mut ChaCha8Rng, samples: usize) -> Vec<IdentityEntry> {
    let mut wedge = Tally::new("hodge-star-wedge", "*(chi ^ omega^{n-2}) = (n-2)! [(tr_omega chi) omega - chi]", 1e-10);
    let mut trace = Tally::new("trace-identity", "tr_omega(*(chi ^ omega^{n-2})) / (n-2)! = (n-1) tr_omega chi", 1e-12);
    let mut involution = Tally::new("n2-involution", "n = 2: the trace star applied twice is the identity", 1e-12);
    let mut adj_det = Tally::new("adjugate-determinant", "det(v^{n-1}/(n-1)!) = (det v)^{n-1}", 1e-10);
    let mut det_ratio = Tally::new("star-determinant-ratio", "det(*phi) / det(*xi) = det(phi) / det(xi)", 1e-10);
    let mut round_trip = Tally::new("bijection-round-trip", "inverse(forward(v)) = v and forward(inverse(Phi)) = Phi", 1e-10);
    let mut sigmas = Tally::new("sigma-brute-force", "sigma_j(lambda) = sum over j-subsets of products", 1e-12);

    for i in 0..samples {
        let n = 2 + i % 3;
        let omega = random_positive(rng, n);
        let chi = OneOneForm(random_hermitian(rng, n));

        match (hodge_star_trace(&omega, &chi), chi_wedge_omega(&omega, &chi)) {
            (Ok(direct), Ok(w)) => match star_n_minus_one(&omega, &w) {
                Ok(route) => wedge.record(rel(&route.0, &direct.0)),
                Err(_) => wedge.fail(),
            },
            _ => wedge.fail(),
        }

        let ginv = omega.inverse_h().expect("positive definite");
        match hodge_star_trace(&omega, &chi) {
            Ok(s) => {
                let fact: f64 = (1..=n - 2).map(|v| v as f64).product();
                let lhs = ginv.pairing(&s.0) / fact;
                let rhs = (n as f64 - 1.0) * ginv.pairing(&chi.0);
                trace.record(rel_scalar(lhs, rhs));
            }
            Err(_) => trace.fail(),
        }

        let omega2 = random_positive(rng, 2);
        let chi2 = OneOneForm(random_hermitian(rng, 2));
        match hodge_star_trace(&omega2, &chi2).and_then(|s| hodge_star_trace(&omega2, &s)) {
            Ok(twice) => involution.record(rel(&twice.0, &chi2.0)),
            Err(_) => involution.fail(),
        }

        let v = random_positive(rng, n);
        match power_root_bijection(&v, Direction::Forward) {
            Ok(phi) => {
                adj_det.record(rel_scalar(phi.det_re(), v.det_re().powi(n as i32 - 1)));
                match power_root_bijection(&phi, Direction::Inverse) {
                    Ok(back) => round_trip.record(rel(&back, &v)),
                    Err(_) => round_trip.fail(),
                }
            }
            Err(_) => {
                adj_det.fail();
                round_trip.fail();
            }
        }
        match power_root_bijection(&v, Direction::Inverse).and_then(|w| power_root_bijection(&w, Direction::Forward)) {
            Ok(back) => round_trip.record(rel(&back, &v)),
            Err(_) => round_trip.fail(),
        }

        let (phi, xi) = loop {
            let phi = random_hermitian(rng, n);
            let xi = random_hermitian(rng, n);
            let floor = 1e-2;
            if phi.det_re().abs() > floor && xi.det_re().abs() > floor {
                break (phi, xi);
            }
        };
        match (star_one_one(&omega, &OneOneForm(phi)), star_one_one(&omega, &OneOneForm(xi))) {
            (Ok(sp), Ok(sx)) => {
                let lhs = sp.0.det_re() / sx.0.det_re();
                let rhs = phi.det_re() / xi.det_re();
                det_ratio.record((lhs - rhs).abs() / rhs.abs().max(1.0));
            }
            _ => det_ratio.fail(),
        }

        let len = 1 + i % 6;
        let lambda: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for j in 0..=len {
            let (mut sum, mut abs) = (0.0, 0.0);
            for mask in 0u32..(1 << len) {
                if mask.count_ones() as usize == j {
                    let p: f64 = (0..len).filter(|b| mask >> b & 1 == 1).map(|b| lambda[b]).product();
                    sum += p;
                    abs += p.abs();
                }
            }
            match sigma(&lambda, j) {
                Ok(s) => sigmas.record((s - sum).abs() / abs.max(1.0)),
                Err(_) => sigmas.fail(),
            }
        }
    }
    [wedge, trace, involution, adj_det, det_ratio, round_trip, sigmas].into_iter().map(Tally::finish).collect()
}

fn derivative_oracle(rng: &mut ChaCha8Rng, samples: usize) -> Vec<IdentityEntry> {
    let mut first = Tally::new("first-derivative", "F^{ij} X_ij = d/dt F(A + tX) at t = 0", 1e-6);
    let mut second = Tally::new("second-derivative", "F^{ij,rs} X_ij X_rs = d^2/dt^2 F(A + tX) at t = 0", 1e-5);
    for i in 0..samples {
        let n = 2 + i % 3;
        let op = random_operator(rng, FAMILIES[i % 4], n);
        let lambda = sample_cone(rng, n, op.cone());
        let a = with_spectrum(&random_unitary(rng, n), &lambda);
        let mut x = random_hermitian(rng, n);
        x = x.scale_h(1.0 / x.matrix().frobenius());
        let radius = inner_radius(&lambda, op.cone());
        let d = match gerhardt_derivatives(&op, &a, DEFAULT_TAU) {
            Ok(d) => d,
            Err(_) => {
                first.fail();
                second.fail();
                continue;
            }
        };
        let at = |t: f64| spectral_f(&op, &a.add_h(&x.scale_h(t)));

        let h = 1e-4 * radius;
        match (at(h), at(-h)) {
            (Some(p), Some(m)) => {
                let fd = (p - m) / (2.0 * h);
                let exact = d.first().pairing(&x);
                let scale = d.first().matrix().frobenius().max(f64::MIN_POSITIVE);
                first.record((fd - exact).abs() / scale);
            }
            _ => first.fail(),
        }

        let h = 2e-3 * radius;
        match (at(h), at(0.0), at(-h)) {
            (Some(p), Some(z), Some(m)) => {
                let sd = (p - 2.0 * z + m) / (h * h);
                let exact = d.quadratic_form(&x);
                second.record((sd - exact).abs() / d.second_order_scale().max(f64::MIN_POSITIVE));
            }
            _ => second.fail(),
        }
    }
    vec![first.finish(), second.finish()]
}

fn cone_suite(rng: &mut ChaCha8Rng, samples: usize) -> Vec<IdentityEntry> {
    let mut out = Vec::new();
    for family in FAMILIES {
        let tag = family_name(family);
        let mut positive = Tally::new(format!("positive-gradient[{tag}]"), "f_i > 0 on the cone", 0.0);
        let mut concave =
            Tally::new(format!("midpoint-concavity[{tag}]"), "f((a+b)/2) >= (f(a)+f(b))/2 - 1e-12 (1+|f(a)|+|f(b)|)", 0.0);
        let mut euler = Tally::new(format!("euler-lower-bound[{tag}]"), "sum_i f_i lambda_i >= -1e-12", 1e-12);
        for i in 0..samples {
            let n = 2 + i % 3;
            let op = random_operator(rng, family, n);
            let a = sample_cone(rng, n, op.cone());
            let b = sample_cone(rng, n, op.cone());
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            match (f_grad_hess(&op, &a), f_eval(&op, &a), f_eval(&op, &b), f_eval(&op, &mid)) {
                (Ok((grad, _)), Ok(fa), Ok(fb), Ok(fm)) => {
                    let worst = grad.iter().fold(f64::INFINITY, |m, &g| m.min(g));
                    positive.record(if worst > 0.0 { 0.0 } else { -worst + f64::MIN_POSITIVE });
                    let gap = 0.5 * (fa + fb) - fm - 1e-12 * (1.0 + fa.abs() + fb.abs());
                    concave.record(gap.max(0.0));
                    let e: f64 = grad.iter().zip(&a).map(|(g, l)| g * l).sum();
                    euler.record((-e).max(0.0));
                }
                _ => {
                    positive.fail();
                    concave.fail();
                    euler.fail();
                }
            }
        }
        out.extend([positive.finish(), concave.finish(), euler.finish()]);
    }
    out
}

fn cone_routes(rng: &mut ChaCha8Rng, samples: usize) -> IdentityEntry {
    let mut t = Tally::new(
        "quotient-cone-routes",
        "eigenvalue-route margin = (n-1,n-1) combination margin for k c omega_h^{k-1} omega^{n-k} - l omega_h^{l-1} omega^{n-l}",
        1e-10,
    );
    for i in 0..samples {
        let n = 2 + i % 3;
        let k = rng.gen_range(2..=n);
        let ell = rng.gen_range(1..k);
        let c = rng.gen_range(0.2..3.0);
        let omega = random_positive(rng, n);
        let mu = sample_cone(rng, n, ConeId::Garding(k));
        // ω_h with λ(ω⁻¹ω_h) = μ: L diag(μ) L* with ω = L L* up to a unitary.
        let l = omega.cholesky().expect("positive definite");
        let v = random_unitary(rng, n);
        let inner = with_spectrum(&v, &mu);
        let omega_h = HermitianMatrix::hermitize(l.mul(inner.matrix()).mul(&l.adjoint()));
        match quotient_cone_margins(&omega, &omega_h, k, ell, c) {
            Ok((eig, forms)) => t.record((eig - forms).abs() / eig.abs().max(1.0)),
            Err(_) => t.fail(),
        }
    }
    t.finish()
}

pub fn verify_identities(seed: u64) -> IdentityReport {
    verify_identities_with(seed, SuiteSizes::default())
}

/// Runs every suite on inputs drawn from a ChaCha stream seeded by `seed`.
pub fn verify_identities_with(seed: u64, sizes: SuiteSizes) -> IdentityReport {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = form_identities(&mut rng, sizes.identities);
    entries.extend(derivative_oracle(&mut rng, sizes.derivatives));
    entries.extend(cone_suite(&mut rng, sizes.cones));
    entries.push(cone_routes(&mut rng, sizes.routes));
    IdentityReport {
        seed,
        passed: entries.iter().all(|e| e.passed),
        entries,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_has_tagged_expectations() {
        for c in all_cases() {
            assert!(!c.expected.is_empty());
            for e in &c.expected {
                if let Provenance::Derived { oracle } = &e.provenance {
                    assert!(!oracle.is_empty(), "{}: {}", c.name, e.quantity);
                }
            }
        }
        assert!(case("no-such-case").is_none());
    }

    #[test]
    fn empty_suite_is_vacuous() {
        let r = verify_identities_with(0, SuiteSizes { identities: 0, derivatives: 0, cones: 0, routes: 0 });
        assert!(r.passed);
        assert!(r.entries.iter().all(|e| e.samples == 0 && e.note.as_deref() == Some("0 samples: vacuous pass")));
    }

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let sizes = SuiteSizes { identities: 30, derivatives: 20, cones: 30, routes: 20 };
        let a = verify_identities_with(7, sizes);
        let b = verify_identities_with(7, sizes);
        for e in &a.entries {
            assert!(e.passed, "{e:?}");
        }
        let strip = |r: &IdentityReport| r.entries.clone();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn quotient_case_recovers_zero() {
        let r = run_manufactured(&case("quotient-const").unwrap()).unwrap();
        assert!(r.passed, "{:?}", r.checks);
    }

    #[test]
    fn errors_carry_the_case_name() {
        let mut c = case("quotient-const").unwrap();
        c.config.grid = 3;
        match run_manufactured(&c) {
            Err(Error::Case { case, .. }) => assert_eq!(case, "quotient-const"),
            other => panic!("{other:?}"),
        }
    }
}
