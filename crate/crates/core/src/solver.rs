//! Damped Newton inside a continuity path for `f(λ(A_u)) = ψ + b`, with
//! `A_u = g⁻¹(β + u_{ij̄})`, plus the explicit parabolic flow.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::{BasicScalarField, Chart, HermitianField, Metric};
use crate::error::{Error, Result};
use crate::forms::{power_root_bijection, star_one_one, Direction, OneOneForm};
use crate::hermitian::{eigh_raw, endo_from_pair_raw, CMatrix, HermitianMatrix, MAX_DIM};
use crate::symfunc::{cone_margin, derivatives_unchecked, eval_unchecked, Family, OperatorSpec};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_PATH_TOL: f64 = 1e-8;
pub const MARGIN_FLOOR: f64 = 1e-10;
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `A = g⁻¹(β + ∂∂̄u)` with `f` applied to its eigenvalues.
    Eigenvalue,
    /// The form is `ω_h`; `β = (tr_g ω_h) g − (n−1) ω_h` and `f = log σ_k ∘ T`.
    TTransform,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub op: OperatorSpec,
    pub chart: Chart,
    /// `β` in eigenvalue mode, `ω_h` in trace-complement mode.
    pub form: HermitianField,
    pub psi: BasicScalarField,
    pub mode: Mode,
    beta: HermitianField,
}

impl ProblemSpec {
    pub fn new(op: OperatorSpec, chart: Chart, form: HermitianField, psi: BasicScalarField, mode: Mode) -> Result<Self> {
        if op.n != chart.n() {
            return Err(Error::Dimension(format!("operator has n = {}, chart has n = {}", op.n, chart.n())));
        }
        if form.dim() != chart.n() || form.points() != chart.points() {
            return Err(Error::Dimension("form field does not match the chart".into()));
        }
        if psi.len() != chart.points() {
            return Err(Error::Dimension("right-hand side does not match the chart".into()));
        }
        let t_family = op.family == Family::TTransformHessian;
        if t_family != (mode == Mode::TTransform) {
            return Err(Error::arg("the trace-complement family and mode must be used together"));
        }
        let beta = match mode {
            Mode::Eigenvalue => form.clone(),
            Mode::TTransform => trace_complement_beta(&chart, &form),
        };
        Ok(ProblemSpec { op, chart, form, psi, mode, beta })
    }

    pub fn beta(&self) -> &HermitianField {
        &self.beta
    }
}

/// `β = (tr_g ω_h) g − (n−1) ω_h` pointwise.
pub fn trace_complement_beta(chart: &Chart, omega_h: &HermitianField) -> HermitianField {
    let n = chart.n() as f64;
    let tr = chart.trace_field(omega_h);
    HermitianField::from_fn(chart.n(), chart.points(), |p| {
        chart.metric_at(p).scale_h(tr.values()[p]).sub_h(&omega_h.get(p).scale_h(n - 1.0))
    })
}

/// Pointwise results of one sweep of the nonlinear kernel.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub residual: Vec<f64>,
    pub sup: f64,
    /// `M = V diag(f_i) V*` with `V` the `g`-orthonormal eigenbasis.
    pub coeff: Option<HermitianField>,
    pub margin_min: f64,
    /// `min Σ f_i`.
    pub tau_min: f64,
    /// `min f_i / Σ f_i`.
    pub kappa_min: f64,
}

struct ChunkStats {
    margin: f64,
    worst: usize,
    spectrum: [f64; MAX_DIM],
    tau: f64,
    kappa: f64,
}

/// `sup |R|` of a residual vector.
fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn evaluate(
    op: &OperatorSpec,
    chart: &Chart,
    beta: &HermitianField,
    hess: &HermitianField,
    psi: &[f64],
    b: f64,
    want_coeff: bool,
    floor: f64,
) -> Result<Evaluation> {
    let n = chart.n();
    let nn = n * n;
    let points = chart.points();
    let identity_metric = matches!(chart.metric(), Metric::Constant(g) if *g == HermitianMatrix::identity(n));
    let mut residual = vec![0.0; points];
    let mut coeff = if want_coeff { Some(HermitianField::zeros(n, points)) } else { None };
    let cone = op.cone();

    let kernel = |start: usize, res: &mut [f64], mut co: Option<&mut [f64]>| -> Result<ChunkStats> {
        let mut stats = ChunkStats {
            margin: f64::INFINITY,
            worst: start,
            spectrum: [0.0; MAX_DIM],
            tau: f64::INFINITY,
            kappa: f64::INFINITY,
        };
        let mut grad = [0.0; MAX_DIM];
        for (off, r) in res.iter_mut().enumerate() {
            let p = start + off;
            let a = beta.get_sum(hess, p);
            let (vals, basis) = if identity_metric {
                eigh_raw(&a)
            } else {
                endo_from_pair_raw(&chart.metric_at(p), &a).map_err(|_| Error::Metric {
                    point: p,
                    min_eigenvalue: chart.metric_at(p).min_eigenvalue(),
                })?
            };
            let lam = &vals[..n];
            let margin = cone_margin(lam, cone);
            if !(margin > stats.margin) {
                stats.margin = margin;
                stats.worst = p;
                stats.spectrum = vals;
            }
            if !(margin > floor) {
                continue;
            }
            *r = eval_unchecked(op, lam) - psi[p] - b;
            if let Some(c) = co.as_deref_mut() {
                derivatives_unchecked(op, lam, &mut grad[..n], None);
                let total: f64 = grad[..n].iter().sum();
                let least = grad[..n].iter().copied().fold(f64::INFINITY, f64::min);
                stats.tau = stats.tau.min(total);
                stats.kappa = stats.kappa.min(least / total);
                pack_coefficients(&basis, &grad[..n], &mut c[off * nn..(off + 1) * nn]);
            }
        }
        Ok(stats)
    };

    let threads = crate::thread_count().min(points).max(1);
    let chunk = points.div_ceil(threads);
    let stats: Vec<Result<ChunkStats>> = if threads == 1 {
        vec![kernel(0, &mut residual, coeff.as_mut().map(|c| c.data_mut()))]
    } else {
        let mut co_chunks: Vec<Option<&mut [f64]>> = match coeff.as_mut() {
            Some(c) => c.data_mut().chunks_mut(chunk * nn).map(Some).collect(),
            None => (0..threads).map(|_| None).collect(),
        };
        std::thread::scope(|s| {
            let handles: Vec<_> = residual
                .chunks_mut(chunk)
                .zip(co_chunks.iter_mut())
                .enumerate()
                .map(|(i, (res, co))| {
                    let co = co.take();
                    let kernel = &kernel;
                    s.spawn(move || kernel(i * chunk, res, co))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("kernel thread panicked")).collect()
        })
    };

    let mut margin_min = f64::INFINITY;
    let mut worst = (0, [0.0; MAX_DIM]);
    let mut tau_min = f64::INFINITY;
    let mut kappa_min = f64::INFINITY;
    for s in stats {
        let s = s?;
        if !(s.margin >= margin_min) {
            margin_min = s.margin;
            worst = (s.worst, s.spectrum);
        }
        tau_min = tau_min.min(s.tau);
        kappa_min = kappa_min.min(s.kappa);
    }
    if !(margin_min > floor) {
        return Err(Error::Admissibility { point: worst.0, spectrum: worst.1[..n].to_vec() });
    }
    let sup = sup_abs(&residual);
    Ok(Evaluation { residual, sup, coeff, margin_min, tau_min, kappa_min })
}

/// Packs `V diag(w) V*` into the per-point layout of [`HermitianField`].
fn pack_coefficients(v: &CMatrix, w: &[f64], out: &mut [f64]) {
    let n = w.len();
    for i in 0..n {
        out[i] = (0..n).map(|q| w[q] * v.get(i, q).norm_sqr()).sum();
    }
    let mut o = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = Complex64::new(0.0, 0.0);
            for q in 0..n {
                s += v.get(i, q) * v.get(j, q).conj() * w[q];
            }
            out[o] = s.re;
            out[o + 1] = s.im;
            o += 2;
        }
    }
}

/// `(f(λ(A_u)) − ψ − b, sup-norm)`.
pub fn residual(spec: &ProblemSpec, u: &BasicScalarField, b: f64) -> Result<(BasicScalarField, f64)> {
    let hess = spec.chart.complex_hessian(u);
    let e = evaluate(&spec.op, &spec.chart, &spec.beta, &hess, spec.psi.values(), b, false, MARGIN_FLOOR)?;
    Ok((u.with_values(e.residual), e.sup))
}

/// `f(λ(A_u))` pointwise.
pub fn operator_values(spec: &ProblemSpec, u: &BasicScalarField) -> Result<BasicScalarField> {
    let hess = spec.chart.complex_hessian(u);
    let zeros = vec![0.0; spec.chart.points()];
    let e = evaluate(&spec.op, &spec.chart, &spec.beta, &hess, &zeros, 0.0, false, MARGIN_FLOOR)?;
    Ok(u.with_values(e.residual))
}

pub fn normalize_pair(u: &BasicScalarField, b: f64) -> (BasicScalarField, f64) {
    let s = u.sup();
    (u.map(|v| v - s), b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingPolicy {
    pub max_halvings: usize,
    pub margin_floor: f64,
}

impl Default for DampingPolicy {
    fn default() -> Self {
        DampingPolicy { max_halvings: MAX_HALVINGS, margin_floor: MARGIN_FLOOR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub residual_before: f64,
    pub residual_after: f64,
    pub step_length: f64,
    pub halvings: usize,
    pub gmres_iterations: usize,
    pub gmres_relative_residual: f64,
    pub delta_u_sup: f64,
    pub delta_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { restart: 20, max_iterations: 400 }
    }
}

#[derive(Clone)]
struct State {
    u: Vec<f64>,
    hess: HermitianField,
    b: f64,
    eval: Evaluation,
}

struct Direction2 {
    v: Vec<f64>,
    hess: HermitianField,
    beta: f64,
    iterations: usize,
    relative: f64,
}

/// Solves `L v − β = rhs` with `v` mean zero, right preconditioned by the
/// constant-coefficient operator built from the grid mean of `M`.
fn newton_direction(chart: &Chart, coeff: &HermitianField, rhs: &[f64], tol: f64, krylov: KrylovOptions) -> Direction2 {
    let points = chart.points();
    let mean = coeff.mean();
    let symbol = chart.constant_symbol(&mean);
    let precondition = |z: &[f64]| -> (Vec<Complex64>, f64) {
        let mut hat = chart.forward(z);
        let beta = -hat[0].re / points as f64;
        hat[0] = Complex64::new(0.0, 0.0);
        for (h, s) in hat.iter_mut().zip(&symbol).skip(1) {
            *h /= *s;
        }
        (hat, beta)
    };
    let mut apply = |z: &[f64]| -> Vec<f64> {
        let (hat, beta) = precondition(z);
        let h = chart.hessian_from_spectrum(&hat);
        let mut out = coeff.pairing(&h);
        for o in out.iter_mut() {
            *o -= beta;
        }
        out
    };
    let out = gmres(&mut apply, rhs, tol, krylov.restart, krylov.max_iterations);
    let (hat, beta) = precondition(&out.x);
    let hess = chart.hessian_from_spectrum(&hat);
    let v = chart.inverse_real(hat);
    Direction2 { v, hess, beta, iterations: out.iterations, relative: out.relative_residual }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES with modified Gram–Schmidt and Givens rotations.
pub(crate) fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    tol: f64,
    restart: usize,
    max_iterations: usize,
) -> GmresOutcome {
    let len = rhs.len();
    let mut x = vec![0.0; len];
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, relative_residual: 0.0 };
    }
    let mut total = 0;
    let mut rel;
    loop {
        let r: Vec<f64> = if total == 0 {
            rhs.to_vec()
        } else {
            let ax = apply(&x);
            rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
        };
        let beta = dot(&r, &r).sqrt();
        rel = beta / bnorm;
        if rel <= tol || total >= max_iterations {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            let mut w = apply(&basis[j]);
            total += 1;
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                h[i][j] = hij;
                for (wv, qv) in w.iter_mut().zip(q) {
                    *wv -= hij * qv;
                }
            }
            let wn = dot(&w, &w).sqrt();
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = if d == 0.0 { 1.0 } else { h[j][j] / d };
            sn[j] = if d == 0.0 { 0.0 } else { h[j + 1][j] / d };
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            rel = g[j + 1].abs() / bnorm;
            if rel <= tol || total >= max_iterations || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = ((i + 1)..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (q, yi) in basis.iter().zip(&y) {
            for (xv, qv) in x.iter_mut().zip(q) {
                *xv += yi * qv;
            }
        }
        if rel <= tol || total >= max_iterations {
            break;
        }
    }
    GmresOutcome { x, iterations: total, relative_residual: rel }
}

/// Inner Krylov tolerance for an outer residual `r`.
fn forcing_term(r: f64) -> f64 {
    r.min(1e-2).max(1e-13)
}

fn damped_step(
    spec: &ProblemSpec,
    state: &State,
    psi: &[f64],
    policy: DampingPolicy,
    krylov: KrylovOptions,
) -> Result<(State, StepReport)> {
    let r0 = state.eval.sup;
    let coeff = state.eval.coeff.as_ref().expect("state carries Newton coefficients");
    let rhs: Vec<f64> = state.eval.residual.iter().map(|r| -r).collect();
    let dir = newton_direction(&spec.chart, coeff, &rhs, forcing_term(r0), krylov);
    let mut alpha = 1.0;
    for halvings in 0..=policy.max_halvings {
        let mut hess = state.hess.clone();
        hess.axpy(alpha, &dir.hess);
        let b = state.b + alpha * dir.beta;
        if let Ok(eval) = evaluate(&spec.op, &spec.chart, &spec.beta, &hess, psi, b, true, policy.margin_floor) {
            if eval.sup < r0 {
                let mut u: Vec<f64> = state.u.iter().zip(&dir.v).map(|(a, d)| a + alpha * d).collect();
                let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for x in u.iter_mut() {
                    *x -= top;
                }
                let report = StepReport {
                    residual_before: r0,
                    residual_after: eval.sup,
                    step_length: alpha,
                    halvings,
                    gmres_iterations: dir.iterations,
                    gmres_relative_residual: dir.relative,
                    delta_u_sup: alpha * sup_abs(&dir.v),
                    delta_b: alpha * dir.beta,
                };
                return Ok((State { u, hess, b, eval }, report));
            }
        }
        alpha *= 0.5;
    }
    Err(Error::Stagnation { halvings: policy.max_halvings, residual: r0 })
}

fn initial_state(spec: &ProblemSpec, u: &BasicScalarField, b: f64, psi: &[f64], floor: f64) -> Result<State> {
    let hess = spec.chart.complex_hessian(u);
    let eval = evaluate(&spec.op, &spec.chart, &spec.beta, &hess, psi, b, true, floor)?;
    Ok(State { u: u.values().to_vec(), hess, b, eval })
}

/// One damped Newton step on the target equation.
pub fn newton_step(
    spec: &ProblemSpec,
    u: &BasicScalarField,
    b: f64,
    policy: DampingPolicy,
) -> Result<(BasicScalarField, f64, StepReport)> {
    let state = initial_state(spec, u, b, spec.psi.values(), policy.margin_floor)?;
    if state.eval.sup == 0.0 {
        let (u, b) = normalize_pair(u, b);
        let report = StepReport {
            residual_before: 0.0,
            residual_after: 0.0,
            step_length: 0.0,
            halvings: 0,
            gmres_iterations: 0,
            gmres_relative_residual: 0.0,
            delta_u_sup: 0.0,
            delta_b: 0.0,
        };
        return Ok((u, b, report));
    }
    let (next, report) = damped_step(spec, &state, spec.psi.values(), policy, KrylovOptions::default())?;
    Ok((u.with_values(next.u), next.b, report))
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub path_tol: f64,
    pub max_newton: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub damping: DampingPolicy,
    pub krylov: KrylovOptions,
    pub initial_u: Option<BasicScalarField>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            path_tol: DEFAULT_PATH_TOL,
            max_newton: 30,
            initial_step: 0.25,
            min_step: 1e-4,
            max_step: 0.25,
            damping: DampingPolicy::default(),
            krylov: KrylovOptions::default(),
            initial_u: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub b: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub sup_u: f64,
    pub sup_grad: f64,
    pub sup_ddbar: f64,
    pub tau_min: f64,
    pub kappa_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonRecord {
    pub t: f64,
    pub iteration: usize,
    pub residual: f64,
    pub b: f64,
    pub step_length: f64,
    pub halvings: usize,
    pub gmres_iterations: usize,
    pub accepted_t: bool,
}

#[derive(Debug, Clone)]
pub struct SolveRun {
    pub path: Vec<PathPoint>,
    pub history: Vec<NewtonRecord>,
    pub u: BasicScalarField,
    pub b: f64,
    pub residual: f64,
    pub converged: bool,
    pub tau_min: f64,
    pub kappa_min: f64,
    pub rejected_steps: usize,
    pub elapsed_seconds: f64,
}

impl SolveRun {
    /// Residuals of the Newton iterations at the final `t`.
    pub fn final_residuals(&self) -> Vec<f64> {
        let last = self.history.iter().rev().take_while(|r| r.t == 1.0 && r.accepted_t).count();
        self.history[self.history.len() - last..].iter().map(|r| r.residual).collect()
    }
}

/// Largest observed `r_{m+1}/r_m²` over the last three residuals, skipping
/// ratios whose numerator is already below `floor`.
pub fn quadratic_tail_constant(residuals: &[f64], floor: f64) -> Option<f64> {
    if residuals.len() < 3 {
        return None;
    }
    let tail = &residuals[residuals.len() - 3..];
    let mut c = 0.0f64;
    for w in tail.windows(2) {
        if w[1] > floor {
            c = c.max(w[1] / (w[0] * w[0]));
        }
    }
    Some(c)
}

enum NewtonFailure {
    Fatal(Error),
    Retry,
}

fn newton_solve(
    spec: &ProblemSpec,
    mut state: State,
    prev_psi: &[f64],
    psi: &[f64],
    t: f64,
    tol: f64,
    opts: &SolveOptions,
    records: &mut Vec<NewtonRecord>,
) -> std::result::Result<(State, usize), NewtonFailure> {
    // Only ψ changes between continuation steps; the coefficients carry over.
    for ((r, new), old) in state.eval.residual.iter_mut().zip(psi).zip(prev_psi) {
        *r += old - new;
    }
    state.eval.sup = sup_abs(&state.eval.residual);
    let mut last = NewtonRecord {
        t,
        iteration: 0,
        residual: state.eval.sup,
        b: state.b,
        step_length: 0.0,
        halvings: 0,
        gmres_iterations: 0,
        accepted_t: false,
    };
    let start = records.len();
    for it in 0..=opts.max_newton {
        records.push(last.clone());
        if state.eval.sup <= tol {
            for r in &mut records[start..] {
                r.accepted_t = true;
            }
            return Ok((state, it));
        }
        if it == opts.max_newton {
            break;
        }
        match damped_step(spec, &state, psi, opts.damping, opts.krylov) {
            Ok((next, rep)) => {
                state = next;
                last = NewtonRecord {
                    t,
                    iteration: it + 1,
                    residual: state.eval.sup,
                    b: state.b,
                    step_length: rep.step_length,
                    halvings: rep.halvings,
                    gmres_iterations: rep.gmres_iterations,
                    accepted_t: false,
                };
            }
            Err(Error::Stagnation { .. }) => return Err(NewtonFailure::Retry),
            Err(e) => return Err(NewtonFailure::Fatal(e)),
        }
    }
    Err(NewtonFailure::Retry)
}

fn path_point(spec: &ProblemSpec, state: &State, t: f64, iterations: usize) -> PathPoint {
    let u = spec.psi.with_values(state.u.clone());
    PathPoint {
        t,
        b: state.b,
        newton_iterations: iterations,
        residual: state.eval.sup,
        sup_u: u.sup_abs(),
        sup_grad: spec.chart.gradient_sup(&u),
        sup_ddbar: state.hess.sup_abs(),
        tau_min: state.eval.tau_min,
        kappa_min: state.eval.kappa_min,
    }
}

/// Continuity method from `ψ_0 = f(λ(A_{u_0}))`, at which `(u_0, 0)` is an
/// exact solution, to the target `ψ`.
pub fn solve(spec: &ProblemSpec, opts: &SolveOptions) -> Result<SolveRun> {
    let clock = Instant::now();
    let points = spec.chart.points();
    let u0 = match &opts.initial_u {
        Some(u) => {
            if u.len() != points {
                return Err(Error::Dimension("initial field does not match the chart".into()));
            }
            normalize_pair(u, 0.0).0
        }
        None => BasicScalarField::zeros(&spec.chart),
    };
    let zeros = vec![0.0; points];
    let start = initial_state(spec, &u0, 0.0, &zeros, opts.damping.margin_floor)?;
    let f0 = start.eval.residual.clone();
    let target = spec.psi.values();
    let psi_at = |t: f64| -> Vec<f64> { target.iter().zip(&f0).map(|(p, f)| t * p + (1.0 - t) * f).collect() };

    let mut state = start;
    let mut psi_prev = psi_at(0.0);
    state.eval = evaluate(&spec.op, &spec.chart, &spec.beta, &state.hess, &psi_prev, 0.0, true, opts.damping.margin_floor)?;
    let mut path = vec![path_point(spec, &state, 0.0, 0)];
    let mut history = Vec::new();
    let mut t = 0.0;
    let mut dt = opts.initial_step;
    let mut rejected = 0;
    let mut tau_min = state.eval.tau_min;
    let mut kappa_min = state.eval.kappa_min;
    while t < 1.0 {
        let t_try = if t + dt >= 1.0 - 1e-14 { 1.0 } else { t + dt };
        let tol = if t_try == 1.0 { opts.tol } else { opts.path_tol };
        let psi = psi_at(t_try);
        match newton_solve(spec, state.clone(), &psi_prev, &psi, t_try, tol, opts, &mut history) {
            Ok((next, iterations)) => {
                state = next;
                psi_prev = psi;
                t = t_try;
                tau_min = tau_min.min(state.eval.tau_min);
                kappa_min = kappa_min.min(state.eval.kappa_min);
                path.push(path_point(spec, &state, t, iterations));
                dt = (2.0 * dt).min(opts.max_step);
            }
            Err(NewtonFailure::Fatal(e)) => return Err(e),
            Err(NewtonFailure::Retry) => {
                rejected += 1;
                dt *= 0.5;
                if dt < opts.min_step {
                    return Err(Error::Continuation { last_t: t, min_step: opts.min_step });
                }
            }
        }
    }
    let u = spec.psi.with_values(state.u.clone());
    Ok(SolveRun {
        path,
        history,
        u,
        b: state.b,
        residual: state.eval.sup,
        converged: state.eval.sup <= opts.tol,
        tau_min,
        kappa_min,
        rejected_steps: rejected,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    /// `sup |R − mean R|` before each step and after the last one.
    pub residuals: Vec<f64>,
    pub strictly_decreasing: bool,
    pub u: BasicScalarField,
    pub steps: usize,
}

/// Explicit Euler for `∂_t u = f(λ(A_u)) − ψ` with the mean removed,
/// renormalized so `sup u = 0` after every step.
pub fn parabolic_flow(spec: &ProblemSpec, u0: &BasicScalarField, dt: f64, steps: usize) -> Result<FlowRun> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg(format!("time step must be positive, got {dt}")));
    }
    let mut u = normalize_pair(u0, 0.0).0;
    let mut residuals = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let (r, _) = residual(spec, &u, 0.0).map_err(|e| Error::FlowAbort { step, reason: e.to_string() })?;
        let mean = r.mean();
        let drift: Vec<f64> = r.values().iter().map(|v| v - mean).collect();
        let sup = sup_abs(&drift);
        if !sup.is_finite() {
            return Err(Error::FlowAbort { step, reason: "residual is not finite".into() });
        }
        residuals.push(sup);
        if step == steps {
            break;
        }
        let next: Vec<f64> = u.values().iter().zip(&drift).map(|(a, d)| a + dt * d).collect();
        u = normalize_pair(&u.with_values(next), 0.0).0;
    }
    let strictly_decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
    Ok(FlowRun { residuals, strictly_decreasing, u, steps })
}

/// For the trace-complement family with `k = n`: the largest relative gap
/// between `det(ω̃_u)/det(g)` and `exp((ψ + b − n log(n−1))/(n−1))`, where
/// `ω̃_u` is recovered through the Hodge star and the power-root bijection.
pub fn calabi_yau_check(spec: &ProblemSpec, u: &BasicScalarField, b: f64) -> Result<f64> {
    let n = spec.op.n;
    if spec.mode != Mode::TTransform || spec.op.k != n {
        return Err(Error::arg("the Calabi-Yau check needs the trace-complement family with k = n"));
    }
    let chart = &spec.chart;
    let hess = chart.complex_hessian(u);
    let total = spec.beta.add(&hess);
    let traces = chart.trace_field(&total);
    let nf = n as f64;
    let mut worst = 0.0f64;
    for p in 0..chart.points() {
        let g = chart.metric_at(p);
        let w = g.scale_h(traces.values()[p]).sub_h(&total.get(p)).scale_h(1.0 / (nf - 1.0));
        let rho = star_one_one(&g, &OneOneForm(w))?;
        let v = power_root_bijection(&rho.0, Direction::Inverse)?;
        let lhs = v.det_re() / g.det_re();
        let rhs = ((spec.psi.values()[p] + b - nf * (nf - 1.0).ln()) / (nf - 1.0)).exp();
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(worst)
}
