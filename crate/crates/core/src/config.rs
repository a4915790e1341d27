//! Run configuration: flat `key = value` files (TOML syntax) describing the
//! chart, the operator, the data fields and the solver tolerances.
//!
//! ```text
//! n = 2
//! grid = 32
//! family = "monge_ampere"
//! rhs = "log(2 + cos(2*pi*x1))"
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::{build_chart, BasicScalarField, Chart, HermitianField, MetricSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::hermitian::HermitianMatrix;
use crate::solver::{ProblemSpec, SolveOptions, DEFAULT_PATH_TOL, DEFAULT_TOL};
use crate::subsolution::integral_ratio_c;
use crate::symfunc::{binomial, Family, OperatorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuotientConstant {
    Value(f64),
    /// `"integral"`: the ratio of the two mixed volumes of the form.
    Named(String),
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_path_tol() -> f64 {
    DEFAULT_PATH_TOL
}

fn default_max_newton() -> usize {
    30
}

fn default_dt() -> f64 {
    1e-4
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub grid: usize,
    /// Constant metric diagonal; identity when absent.
    #[serde(default)]
    pub metric_diag: Option<Vec<f64>>,
    /// Kähler potential perturbation `κ`, added as `∂∂̄κ` to the metric.
    #[serde(default)]
    pub potential: Option<String>,
    pub family: Family,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub ell: Option<usize>,
    #[serde(default)]
    pub c: Option<QuotientConstant>,
    /// Constant diagonal of the reference form (`β`, or `ω_h` for the
    /// trace-complement family).
    #[serde(default)]
    pub form_diag: Option<Vec<f64>>,
    /// `(re, im)` pairs of the strict upper triangle, row-major, completing `form_diag`.
    #[serde(default)]
    pub form_upper: Option<Vec<f64>>,
    /// Reference form as a multiple of the metric; used when `form_diag` is absent.
    #[serde(default)]
    pub form_scale: Option<f64>,
    /// Right-hand side `G` of the volume-form equation.
    #[serde(default)]
    pub rhs: Option<String>,
    #[serde(default)]
    pub initial_u: Option<String>,
    /// Candidate subsolution for the `subsolution` command; zero when absent.
    #[serde(default)]
    pub subsolution_u: Option<String>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_path_tol")]
    pub path_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Starting field for the flow; zero when absent.
    #[serde(default)]
    pub flow_u0: Option<String>,
}

impl RunConfig {
    /// Defaults for everything but the chart size and the family.
    pub fn new(n: usize, grid: usize, family: Family) -> Self {
        RunConfig {
            n,
            grid,
            metric_diag: None,
            potential: None,
            family,
            k: None,
            ell: None,
            c: None,
            form_diag: None,
            form_upper: None,
            form_scale: None,
            rhs: None,
            initial_u: None,
            subsolution_u: None,
            tol: default_tol(),
            path_tol: default_path_tol(),
            max_newton: default_max_newton(),
            seed: 0,
            dt: default_dt(),
            steps: default_steps(),
            flow_u0: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn chart(&self) -> Result<Chart> {
        let base = match &self.metric_diag {
            Some(d) => {
                if d.len() != self.n {
                    return Err(Error::Config(format!("metric_diag needs {} entries", self.n)));
                }
                HermitianMatrix::from_real_diag(d)
            }
            None => HermitianMatrix::identity(self.n.clamp(1, 3)),
        };
        match &self.potential {
            None => build_chart(self.n, self.grid, MetricSpec::Constant(base)),
            Some(src) => {
                let probe = build_chart(self.n, self.grid, MetricSpec::Constant(base))?;
                let kappa = probe.sample_expr(&Expr::parse(src)?)?;
                build_chart(self.n, self.grid, MetricSpec::Potential { base, kappa: kappa.into_values() })
            }
        }
    }

    pub fn form(&self, chart: &Chart) -> Result<HermitianField> {
        match &self.form_diag {
            Some(d) => {
                if d.len() != self.n {
                    return Err(Error::Config(format!("form_diag needs {} entries", self.n)));
                }
                let mut m = HermitianMatrix::from_real_diag(d);
                if let Some(up) = &self.form_upper {
                    let pairs = self.n * (self.n - 1) / 2;
                    if up.len() != 2 * pairs {
                        return Err(Error::Config(format!("form_upper needs {} numbers", 2 * pairs)));
                    }
                    let mut o = 0;
                    for i in 0..self.n {
                        for j in (i + 1)..self.n {
                            m.set(i, j, Complex64::new(up[o], up[o + 1]));
                            o += 2;
                        }
                    }
                }
                Ok(HermitianField::constant(&m, chart.points()))
            }
            None if self.form_upper.is_some() => Err(Error::Config("form_upper needs form_diag".into())),
            None => Ok(chart.metric_field().scale(self.form_scale.unwrap_or(1.0))),
        }
    }

    fn require_k(&self) -> Result<usize> {
        self.k.ok_or_else(|| Error::Config(format!("family {:?} needs k", self.family)))
    }

    pub fn operator(&self, chart: &Chart, form: &HermitianField) -> Result<OperatorSpec> {
        match self.family {
            Family::MongeAmpere => OperatorSpec::monge_ampere(self.n),
            Family::Hessian => OperatorSpec::hessian(self.n, self.require_k()?),
            Family::TTransformHessian => OperatorSpec::ttransform_hessian(self.n, self.require_k()?),
            Family::HessianQuotient => {
                let k = self.require_k()?;
                let ell = self.ell.ok_or_else(|| Error::Config("hessian_quotient needs ell".into()))?;
                if ell == 0 || ell >= k || k > self.n {
                    return Err(Error::arg(format!("need 1 <= ell < k <= n, got ell = {ell}, k = {k}")));
                }
                let c = match &self.c {
                    None => integral_ratio_c(chart, form, k, ell)?,
                    Some(QuotientConstant::Value(v)) => *v,
                    Some(QuotientConstant::Named(s)) if s == "integral" => integral_ratio_c(chart, form, k, ell)?,
                    Some(QuotientConstant::Named(s)) => {
                        return Err(Error::Config(format!("c must be a number or \"integral\", got {s:?}")))
                    }
                };
                OperatorSpec::hessian_quotient(self.n, k, ell, c)
            }
        }
    }

    pub fn field(&self, chart: &Chart, src: Option<&str>) -> Result<BasicScalarField> {
        match src {
            None => Ok(BasicScalarField::zeros(chart)),
            Some(s) => chart.sample_expr(&Expr::parse(s)?),
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let chart = self.chart()?;
        let form = self.form(&chart)?;
        let op = self.operator(&chart, &form)?;
        let g = self.field(&chart, self.rhs.as_deref())?;
        let psi = rhs_to_psi(&op, &g, self.rhs.is_some())?;
        let mode = mode_for(op.family);
        ProblemSpec::new(op, chart, form, psi, mode)
    }

    pub fn solve_options(&self, chart: &Chart) -> Result<SolveOptions> {
        let initial_u = match &self.initial_u {
            None => None,
            Some(s) => Some(chart.sample_expr(&Expr::parse(s)?)?),
        };
        Ok(SolveOptions {
            tol: self.tol,
            path_tol: self.path_tol,
            max_newton: self.max_newton,
            initial_u,
            ..SolveOptions::default()
        })
    }
}

pub fn mode_for(family: Family) -> crate::solver::Mode {
    match family {
        Family::TTransformHessian => crate::solver::Mode::TTransform,
        _ => crate::solver::Mode::Eigenvalue,
    }
}

/// Converts the volume-form data `G` into the right-hand side `ψ` of
/// `f(λ) = ψ + b` for the chosen family.
pub fn rhs_to_psi(op: &OperatorSpec, g: &BasicScalarField, rhs_given: bool) -> Result<BasicScalarField> {
    Ok(match op.family {
        Family::MongeAmpere | Family::Hessian => g.clone(),
        Family::TTransformHessian => {
            let shift = op.k as f64 * (op.n as f64 - 1.0).ln() + binomial(op.n, op.k).ln();
            g.map(|v| v + shift)
        }
        Family::HessianQuotient => {
            if rhs_given {
                return Err(Error::Config("the quotient equation takes no rhs; it is fixed by c".into()));
            }
            g.map(|_| -op.c)
        }
    })
}
