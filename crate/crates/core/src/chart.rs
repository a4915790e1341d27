//! Periodic transverse chart: a real 2n-torus with unit periods, sampled on
//! an `N^{2n}` grid, together with spectral complex Hessians.
//!
//! Real axes are ordered `(x1, y1, x2, y2, ...)` with `z_j = x_j + i y_j`,
//! and the flat point index is row-major over that order.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::hermitian::{HermitianMatrix, MAX_DIM};
use crate::spectral::{wavenumber, FftNd};

pub const MIN_GRID: usize = 8;
pub const MAX_COMPLEX_DIM: usize = 3;

const SNAPSHOT_MAGIC: &[u8; 8] = b"TVFIELD1";

/// Real basic function sampled on the chart grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicScalarField {
    n: usize,
    grid: usize,
    values: Vec<f64>,
}

impl BasicScalarField {
    pub fn new(n: usize, grid: usize, values: Vec<f64>) -> Result<Self> {
        let want = grid.pow(2 * n as u32);
        if values.len() != want {
            return Err(Error::Dimension(format!(
                "field has {} samples, grid needs {want}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite sample {} at point {i}", values[i])));
        }
        Ok(BasicScalarField { n, grid, values })
    }

    pub fn constant(chart: &Chart, v: f64) -> Self {
        BasicScalarField { n: chart.n, grid: chart.grid, values: vec![v; chart.points] }
    }

    pub fn zeros(chart: &Chart) -> Self {
        Self::constant(chart, 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.grid)
    }

    /// Same-shape field with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        BasicScalarField { n: self.n, grid: self.grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        self.with_values(self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(&self.values) / self.values.len() as f64
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup |self - other|`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Per-point Hermitian matrices in a packed real layout: the `n` real
/// diagonal entries, then `(re, im)` of each strictly upper entry in
/// row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    n: usize,
    data: Vec<f64>,
}

impl HermitianField {
    pub fn zeros(n: usize, points: usize) -> Self {
        HermitianField { n, data: vec![0.0; n * n * points] }
    }

    pub fn constant(m: &HermitianMatrix, points: usize) -> Self {
        let mut f = Self::zeros(m.dim(), points);
        for p in 0..points {
            f.set(p, m);
        }
        f
    }

    pub fn from_fn(n: usize, points: usize, mut f: impl FnMut(usize) -> HermitianMatrix) -> Self {
        let mut out = Self::zeros(n, points);
        for p in 0..points {
            out.set(p, &f(p));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Packed storage, `n²` reals per point.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self + s·other` in place.
    pub fn axpy(&mut self, s: f64, other: &HermitianField) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Pointwise `Re tr(A B)` against another field.
    pub fn pairing(&self, other: &HermitianField) -> Vec<f64> {
        let n = self.n;
        let nn = n * n;
        self.data
            .chunks(nn)
            .zip(other.data.chunks(nn))
            .map(|(a, b)| {
                let d: f64 = (0..n).map(|i| a[i] * b[i]).sum();
                let o: f64 = (n..nn).map(|i| a[i] * b[i]).sum();
                d + 2.0 * o
            })
            .collect()
    }

    /// Entrywise mean over the grid.
    pub fn mean(&self) -> HermitianMatrix {
        let n = self.n;
        let nn = n * n;
        let pts = self.points();
        let mut packed = vec![0.0; nn];
        for (slot, acc) in packed.iter_mut().enumerate() {
            let column: Vec<f64> = (0..pts).map(|p| self.data[p * nn + slot]).collect();
            *acc = compensated_sum(&column) / pts as f64;
        }
        HermitianField { n, data: packed }.get(0)
    }

    pub fn points(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.data.len() / (self.n * self.n)
        }
    }

    pub fn get(&self, p: usize) -> HermitianMatrix {
        let n = self.n;
        let s = &self.data[p * n * n..(p + 1) * n * n];
        let mut m = HermitianMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::new(s[i], 0.0));
        }
        let mut o = n;
        for i in 0..n {
            for j in (i + 1)..n {
                m.set(i, j, Complex64::new(s[o], s[o + 1]));
                o += 2;
            }
        }
        m
    }

    /// `self[p] + other[p]` without materializing either matrix.
    pub(crate) fn get_sum(&self, other: &HermitianField, p: usize) -> HermitianMatrix {
        let n = self.n;
        let range = p * n * n..(p + 1) * n * n;
        let (s, t) = (&self.data[range.clone()], &other.data[range]);
        let mut m = HermitianMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::new(s[i] + t[i], 0.0));
        }
        let mut o = n;
        for i in 0..n {
            for j in (i + 1)..n {
                m.set(i, j, Complex64::new(s[o] + t[o], s[o + 1] + t[o + 1]));
                o += 2;
            }
        }
        m
    }

    pub fn set(&mut self, p: usize, m: &HermitianMatrix) {
        let n = self.n;
        assert_eq!(m.dim(), n);
        let s = &mut self.data[p * n * n..(p + 1) * n * n];
        for i in 0..n {
            s[i] = m.get(i, i).re;
        }
        let mut o = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = m.get(i, j);
                s[o] = v.re;
                s[o + 1] = v.im;
                o += 2;
            }
        }
    }

    /// Pointwise `self + other`.
    pub fn add(&self, other: &HermitianField) -> HermitianField {
        assert_eq!(self.data.len(), other.data.len());
        HermitianField {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> HermitianField {
        HermitianField { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// Largest entry modulus over all points.
    pub fn sup_abs(&self) -> f64 {
        let n = self.n;
        let mut best = 0.0f64;
        for s in self.data.chunks(n * n) {
            for &d in &s[..n] {
                best = best.max(d.abs());
            }
            for c in s[n..].chunks(2) {
                best = best.max(c[0].hypot(c[1]));
            }
        }
        best
    }

    /// `sup_p max_ij |self_ij - other_ij|`.
    pub fn distance(&self, other: &HermitianField) -> f64 {
        let n = self.n;
        let mut best = 0.0f64;
        for (s, t) in self.data.chunks(n * n).zip(other.data.chunks(n * n)) {
            for i in 0..n {
                best = best.max((s[i] - t[i]).abs());
            }
            for (a, b) in s[n..].chunks(2).zip(t[n..].chunks(2)) {
                best = best.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        best
    }

    /// Minimum eigenvalue over the field and the point realizing it.
    pub fn min_eigenvalue(&self) -> (usize, f64) {
        let mut worst = (0, f64::INFINITY);
        for p in 0..self.points() {
            let e = self.get(p).min_eigenvalue();
            if e < worst.1 {
                worst = (p, e);
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub enum MetricSpec {
    Constant(HermitianMatrix),
    /// `g = base + ∂∂̄κ` with `κ` given by its grid samples.
    Potential { base: HermitianMatrix, kappa: Vec<f64> },
}

#[derive(Debug, Clone)]
pub enum Metric {
    Constant(HermitianMatrix),
    Field(HermitianField),
}

#[derive(Debug, Clone)]
pub struct Chart {
    n: usize,
    grid: usize,
    points: usize,
    metric: Metric,
    diag_symbol: Vec<Vec<f64>>,
    zeta: Vec<Vec<Complex64>>,
    fft: FftNd,
}

/// Validates `(n, N)` and builds the chart, checking the metric pointwise.
pub fn build_chart(n: usize, grid: usize, metric: MetricSpec) -> Result<Chart> {
    Chart::new(n, grid, metric)
}

pub fn complex_hessian(chart: &Chart, u: &BasicScalarField) -> HermitianField {
    chart.complex_hessian(u)
}

pub fn laplacian_b(chart: &Chart, u: &BasicScalarField) -> BasicScalarField {
    chart.laplacian_b(u)
}

pub fn integrate(chart: &Chart, field: &BasicScalarField) -> f64 {
    chart.integrate(field)
}

impl Chart {
    pub fn new(n: usize, grid: usize, metric: MetricSpec) -> Result<Chart> {
        if !(1..=MAX_COMPLEX_DIM).contains(&n) {
            return Err(Error::arg(format!("complex dimension must be 1..=3, got {n}")));
        }
        if grid < MIN_GRID || !grid.is_power_of_two() {
            return Err(Error::arg(format!("grid must be a power of two >= {MIN_GRID}, got {grid}")));
        }
        let dims = 2 * n;
        let points = grid.pow(dims as u32);
        let mut diag_symbol = vec![vec![0.0; points]; n];
        let mut zeta = vec![vec![Complex64::new(0.0, 0.0); points]; n];
        let mut digits = [0usize; 2 * MAX_COMPLEX_DIM];
        for m in 0..points {
            let mut r = m;
            for a in (0..dims).rev() {
                digits[a] = r % grid;
                r /= grid;
            }
            for i in 0..n {
                let kx = wavenumber(digits[2 * i], grid) as f64;
                let ky = wavenumber(digits[2 * i + 1], grid) as f64;
                diag_symbol[i][m] = -PI * PI * (kx * kx + ky * ky);
                zeta[i][m] = Complex64::new(first_derivative_k(digits[2 * i], grid), first_derivative_k(digits[2 * i + 1], grid));
            }
        }
        let mut chart = Chart {
            n,
            grid,
            points,
            metric: Metric::Constant(HermitianMatrix::identity(n)),
            diag_symbol,
            zeta,
            fft: FftNd::new(grid, dims),
        };
        chart.metric = match metric {
            MetricSpec::Constant(g) => {
                if g.dim() != n {
                    return Err(Error::Dimension(format!("metric is {}x{}, chart has n = {n}", g.dim(), g.dim())));
                }
                let e = g.min_eigenvalue();
                if !(e > 0.0) {
                    return Err(Error::Metric { point: 0, min_eigenvalue: e });
                }
                Metric::Constant(g)
            }
            MetricSpec::Potential { base, kappa } => {
                if base.dim() != n {
                    return Err(Error::Dimension(format!("metric is {}x{}, chart has n = {n}", base.dim(), base.dim())));
                }
                let kappa = BasicScalarField::new(n, grid, kappa)?;
                let h = chart.complex_hessian(&kappa);
                let g = HermitianField::constant(&base, points).add(&h);
                let (point, e) = g.min_eigenvalue();
                if !(e > 0.0) {
                    return Err(Error::Metric { point, min_eigenvalue: e });
                }
                Metric::Field(g)
            }
        };
        Ok(chart)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn metric_at(&self, p: usize) -> HermitianMatrix {
        match &self.metric {
            Metric::Constant(g) => *g,
            Metric::Field(f) => f.get(p),
        }
    }

    pub fn metric_field(&self) -> HermitianField {
        match &self.metric {
            Metric::Constant(g) => HermitianField::constant(g, self.points),
            Metric::Field(f) => f.clone(),
        }
    }

    /// Real coordinates of grid point `p` in `[0, 1)^{2n}`.
    pub fn coords(&self, p: usize) -> [f64; 2 * MAX_COMPLEX_DIM] {
        let mut c = [0.0; 2 * MAX_COMPLEX_DIM];
        let mut r = p;
        for a in (0..2 * self.n).rev() {
            c[a] = (r % self.grid) as f64 / self.grid as f64;
            r /= self.grid;
        }
        c
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Result<BasicScalarField> {
        let values = (0..self.points).map(|p| f(&self.coords(p)[..2 * self.n])).collect();
        BasicScalarField::new(self.n, self.grid, values)
    }

    pub fn sample_expr(&self, e: &Expr) -> Result<BasicScalarField> {
        if let Some(a) = e.max_axis() {
            if a >= 2 * self.n {
                return Err(Error::Config(format!(
                    "expression uses a coordinate beyond complex dimension {}",
                    self.n
                )));
            }
        }
        self.sample(|c| e.eval(c))
    }

    pub fn field(&self, values: Vec<f64>) -> Result<BasicScalarField> {
        BasicScalarField::new(self.n, self.grid, values)
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf
    }

    /// Real part of the inverse transform.
    pub fn inverse_real(&self, mut hat: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut hat);
        hat.into_iter().map(|c| c.re).collect()
    }

    /// Symbol of `∂_i ∂_j̄` at mode `m`.
    ///
    /// The diagonal keeps the Nyquist second derivative; mixed terms are
    /// built from first-derivative symbols that vanish at Nyquist.
    #[inline]
    pub fn symbol(&self, i: usize, j: usize, m: usize) -> Complex64 {
        if i == j {
            Complex64::new(self.diag_symbol[i][m], 0.0)
        } else {
            self.zeta[i][m].conj() * self.zeta[j][m] * (-PI * PI)
        }
    }

    /// `Re tr(c S(m))` for every mode: the symbol of `v ↦ Re Σ c_ij v_{jī}`.
    pub fn constant_symbol(&self, c: &HermitianMatrix) -> Vec<f64> {
        let n = self.n;
        (0..self.points)
            .map(|m| {
                let mut s = 0.0;
                for i in 0..n {
                    s += c.get(i, i).re * self.diag_symbol[i][m];
                    for j in (i + 1)..n {
                        s += 2.0 * (c.get(i, j) * self.symbol(j, i, m)).re;
                    }
                }
                s
            })
            .collect()
    }

    pub fn complex_hessian(&self, u: &BasicScalarField) -> HermitianField {
        let hat = self.forward(u.values());
        self.hessian_from_spectrum(&hat)
    }

    /// Complex Hessian from the forward transform of a real field.
    pub fn hessian_from_spectrum(&self, hat: &[Complex64]) -> HermitianField {
        let n = self.n;
        let nn = n * n;
        let mut out = HermitianField::zeros(n, self.points);
        let i_unit = Complex64::new(0.0, 1.0);
        // Two real diagonal entries share one inverse transform.
        let mut i = 0;
        while i < n {
            let pair = i + 1 < n;
            let mut buf: Vec<Complex64> = (0..self.points)
                .map(|m| {
                    let a = hat[m] * self.diag_symbol[i][m];
                    if pair {
                        a + i_unit * hat[m] * self.diag_symbol[i + 1][m]
                    } else {
                        a
                    }
                })
                .collect();
            self.fft.inverse(&mut buf);
            for (p, v) in buf.iter().enumerate() {
                out.data[p * nn + i] = v.re;
                if pair {
                    out.data[p * nn + i + 1] = v.im;
                }
            }
            i += 2;
        }
        let mut o = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut buf: Vec<Complex64> = (0..self.points).map(|m| hat[m] * self.symbol(i, j, m)).collect();
                self.fft.inverse(&mut buf);
                for (p, v) in buf.iter().enumerate() {
                    out.data[p * nn + o] = v.re;
                    out.data[p * nn + o + 1] = v.im;
                }
                o += 2;
            }
        }
        out
    }

    /// `Δ_B u = g^{j̄i} u_{ij̄}`, evaluated as the pointwise trace of the
    /// spectral complex Hessian.
    pub fn laplacian_b(&self, u: &BasicScalarField) -> BasicScalarField {
        let h = self.complex_hessian(u);
        self.trace_field(&h)
    }

    /// Pointwise `tr_g h`.
    pub fn trace_field(&self, h: &HermitianField) -> BasicScalarField {
        let inv_const = match &self.metric {
            Metric::Constant(g) => g.inverse_h(),
            Metric::Field(_) => None,
        };
        let values = (0..self.points)
            .map(|p| {
                let ginv = match inv_const {
                    Some(gi) => gi,
                    None => self.metric_at(p).inverse_h().expect("metric checked positive definite"),
                };
                ginv.pairing(&h.get(p))
            })
            .collect();
        BasicScalarField { n: self.n, grid: self.grid, values }
    }

    /// Mean-value quadrature on the unit-volume torus.
    pub fn integrate(&self, field: &BasicScalarField) -> f64 {
        field.mean()
    }

    /// `sup_p |∇u|` over the real gradient.
    pub fn gradient_sup(&self, u: &BasicScalarField) -> f64 {
        let hat = self.forward(u.values());
        let mut sq = vec![0.0; self.points];
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        for i in 0..self.n {
            // ∂_x and ∂_y of axis pair i packed as real and imaginary parts.
            let mut buf: Vec<Complex64> = (0..self.points)
                .map(|m| {
                    let z = self.zeta[i][m];
                    hat[m] * two_pi_i * z.re + Complex64::new(0.0, 1.0) * hat[m] * two_pi_i * z.im
                })
                .collect();
            self.fft.inverse(&mut buf);
            for (s, v) in sq.iter_mut().zip(&buf) {
                *s += v.norm_sqr();
            }
        }
        sq.into_iter().fold(0.0, f64::max).sqrt()
    }
}

/// Neumaier-compensated sum in index order.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn first_derivative_k(i: usize, grid: usize) -> f64 {
    if i == grid / 2 {
        0.0
    } else {
        wavenumber(i, grid) as f64
    }
}

const _: () = assert!(MAX_COMPLEX_DIM <= MAX_DIM);

/// Path of the metadata file written next to a snapshot.
pub fn snapshot_meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes `field` as a 32-byte header (magic, n, N, count as u64 LE)
/// followed by little-endian f64 samples, plus a `key = value` sidecar.
pub fn write_snapshot(path: &Path, field: &BasicScalarField, meta: &[(&str, String)]) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 8 * field.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(field.n as u64).to_le_bytes());
    buf.extend_from_slice(&(field.grid as u64).to_le_bytes());
    buf.extend_from_slice(&(field.len() as u64).to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    let mut text = format!("n = {}\ngrid = {}\ncount = {}\n", field.n, field.grid, field.len());
    for (k, v) in meta {
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(snapshot_meta_path(path), text)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<BasicScalarField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(Error::Io(format!("{} is not a field snapshot", path.display())));
    }
    let word = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let (n, grid, count) = (word(8), word(16), word(24));
    if bytes.len() != 32 + 8 * count {
        return Err(Error::Io(format!(
            "snapshot {} declares {count} samples but holds {} bytes",
            path.display(),
            bytes.len() - 32
        )));
    }
    let values = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    BasicScalarField::new(n, grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, grid: usize) -> Chart {
        build_chart(n, grid, MetricSpec::Constant(HermitianMatrix::identity(n))).unwrap()
    }

    fn tau() -> f64 {
        2.0 * PI
    }

    #[test]
    fn build_examples_and_errors() {
        let c = flat(2, 16);
        assert_eq!(c.points(), 16usize.pow(4));
        assert_eq!(c.metric_at(123), HermitianMatrix::identity(2));

        let c = build_chart(1, 32, MetricSpec::Constant(HermitianMatrix::from_real_diag(&[2.0]))).unwrap();
        assert_eq!(c.metric_at(7).get(0, 0).re, 2.0);

        assert!(matches!(build_chart(2, 12, MetricSpec::Constant(HermitianMatrix::identity(2))), Err(Error::Argument(_))));
        assert!(matches!(build_chart(2, 4, MetricSpec::Constant(HermitianMatrix::identity(2))), Err(Error::Argument(_))));
        assert!(matches!(build_chart(4, 8, MetricSpec::Constant(HermitianMatrix::identity(4))), Err(Error::Argument(_))));
        assert!(matches!(
            build_chart(2, 8, MetricSpec::Constant(HermitianMatrix::from_real_diag(&[1.0, -1.0]))),
            Err(Error::Metric { .. })
        ));
    }

    #[test]
    fn potential_metric_matches_analytic_second_derivative() {
        let probe = flat(2, 16);
        let kappa = probe.sample(|c| 0.01 * (tau() * c[0]).cos()).unwrap();
        let chart = build_chart(
            2,
            16,
            MetricSpec::Potential { base: HermitianMatrix::identity(2), kappa: kappa.into_values() },
        )
        .unwrap();
        let mut min_e = f64::INFINITY;
        for p in 0..chart.points() {
            let g = chart.metric_at(p);
            let x = chart.coords(p)[0];
            // κ_{11̄} = ¼ κ_xx = -π²·0.01·cos(2πx)
            let want = 1.0 - PI * PI * 0.01 * (tau() * x).cos();
            assert!((g.get(0, 0).re - want).abs() < 1e-13);
            assert!((g.get(1, 1).re - 1.0).abs() < 1e-13);
            assert!(g.get(0, 1).norm() < 1e-13);
            min_e = min_e.min(g.min_eigenvalue());
        }
        assert!(min_e > 0.0);
    }

    #[test]
    fn potential_metric_reports_worst_point() {
        let probe = flat(1, 8);
        let kappa = probe.sample(|c| 0.5 * (tau() * c[0]).cos()).unwrap();
        let err = build_chart(1, 8, MetricSpec::Potential { base: HermitianMatrix::identity(1), kappa: kappa.into_values() })
            .unwrap_err();
        match err {
            // Most negative at x = 0, i.e. point 0.
            Error::Metric { point, min_eigenvalue } => {
                assert_eq!(point, 0);
                assert!((min_eigenvalue - (1.0 - 0.5 * PI * PI)).abs() < 1e-12);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn hessian_of_single_cosine() {
        let c = flat(2, 16);
        let u = c.sample(|x| (tau() * x[0]).cos()).unwrap();
        let h = c.complex_hessian(&u);
        for p in 0..c.points() {
            let m = h.get(p);
            let want = -PI * PI * (tau() * c.coords(p)[0]).cos();
            assert!((m.get(0, 0).re - want).abs() < 1e-12);
            assert!(m.get(1, 1).norm() < 1e-12);
            assert!(m.get(0, 1).norm() < 1e-12);
        }
        let zero = c.complex_hessian(&BasicScalarField::constant(&c, 3.5));
        assert!(zero.sup_abs() < 1e-12);
    }

    #[test]
    fn hessian_of_product_matches_analytic() {
        let c = flat(2, 32);
        let u = c.sample(|x| (tau() * x[0]).cos() * (tau() * x[3]).cos()).unwrap();
        let h = c.complex_hessian(&u);
        let mut err = 0.0f64;
        for p in 0..c.points() {
            let x = c.coords(p);
            let (cx, sx) = ((tau() * x[0]).cos(), (tau() * x[0]).sin());
            let (cy, sy) = ((tau() * x[3]).cos(), (tau() * x[3]).sin());
            // ∂_1∂_2̄ = ¼(∂x1 - i∂y1)(∂x2 + i∂y2); here only ∂x1 and ∂y2 act.
            let u11 = -PI * PI * cx * cy;
            let u22 = -PI * PI * cx * cy;
            let u12 = Complex64::new(0.0, 0.25) * (-tau() * sx) * (-tau() * sy);
            let m = h.get(p);
            err = err
                .max((m.get(0, 0).re - u11).abs())
                .max((m.get(1, 1).re - u22).abs())
                .max((m.get(0, 1) - u12).norm());
        }
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn spectral_convergence_for_analytic_function() {
        // u = exp(0.3 cos 2πx1) is analytic but not band limited.
        let mut errs = Vec::new();
        for grid in [8, 16, 32] {
            let c = flat(1, grid);
            let u = c.sample(|x| (0.3 * (tau() * x[0]).cos()).exp()).unwrap();
            let h = c.complex_hessian(&u);
            let mut e = 0.0f64;
            for p in 0..c.points() {
                let x = c.coords(p)[0];
                let s = 0.3 * (tau() * x).cos();
                let d1 = -0.3 * tau() * (tau() * x).sin();
                let d2 = -0.3 * tau() * tau() * (tau() * x).cos();
                let want = 0.25 * s.exp() * (d1 * d1 + d2);
                e = e.max((h.get(p).get(0, 0).re - want).abs());
            }
            errs.push(e);
        }
        assert!(errs[2] < 1e-10, "{errs:?}");
        assert!(errs[1] < errs[0]);
    }

    #[test]
    fn laplacian_and_integrals() {
        let c = flat(2, 16);
        let u = c.sample(|x| (tau() * x[0]).cos()).unwrap();
        let l = c.laplacian_b(&u);
        for p in 0..c.points() {
            let want = -PI * PI * (tau() * c.coords(p)[0]).cos();
            assert!((l.values()[p] - want).abs() < 1e-12);
        }
        assert!(c.laplacian_b(&BasicScalarField::zeros(&c)).sup_abs() == 0.0);

        let c2 = build_chart(2, 16, MetricSpec::Constant(HermitianMatrix::from_real_diag(&[2.0, 1.0]))).unwrap();
        let l = c2.laplacian_b(&u);
        for p in 0..c2.points() {
            let want = -PI * PI / 2.0 * (tau() * c2.coords(p)[0]).cos();
            assert!((l.values()[p] - want).abs() < 1e-12);
        }

        assert_eq!(c.integrate(&BasicScalarField::constant(&c, 1.0)), 1.0);
        assert!(c.integrate(&u).abs() < 1e-14);
        let u2 = c.sample(|x| (tau() * x[0]).cos().powi(2)).unwrap();
        assert!((c.integrate(&u2) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gradient_sup_of_mode() {
        let c = flat(2, 16);
        let u = c.sample(|x| (tau() * (x[1] + x[2])).sin()).unwrap();
        // |∇u| = 2π√2 |cos|, maximized on the grid.
        assert!((c.gradient_sup(&u) - tau() * 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn constant_symbol_is_negative_away_from_zero_mode() {
        let c = flat(2, 8);
        let mut a = HermitianMatrix::from_real_diag(&[2.0, 1.0]);
        a.set(0, 1, Complex64::new(0.3, -0.4));
        let s = c.constant_symbol(&a);
        assert_eq!(s[0], 0.0);
        assert!(s[1..].iter().all(|&v| v < 0.0));

        // The symbol reproduces the pointwise pairing for a band-limited field.
        let u = c.sample(|x| (tau() * (x[0] - 2.0 * x[3])).cos() + 0.5 * (tau() * (x[1] + x[2])).sin()).unwrap();
        let mut hat = c.forward(u.values());
        for (h, s) in hat.iter_mut().zip(&s) {
            *h *= s;
        }
        let via_symbol = c.inverse_real(hat);
        let h = c.complex_hessian(&u);
        for p in 0..c.points() {
            assert!((a.pairing(&h.get(p)) - via_symbol[p]).abs() < 1e-10);
        }
    }

    #[test]
    fn packed_field_roundtrip() {
        let mut m = HermitianMatrix::from_real_diag(&[1.0, 2.0, 3.0]);
        m.set(0, 2, Complex64::new(0.5, 0.25));
        m.set(1, 2, Complex64::new(-0.1, 0.7));
        let mut f = HermitianField::zeros(3, 4);
        f.set(2, &m);
        assert_eq!(f.get(2), m);
        assert_eq!(f.get(1), HermitianMatrix::zeros(3));
        assert_eq!(f.points(), 4);
    }

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = flat(1, 8);
        let u = c.sample(|x| (tau() * x[0]).sin() + x[1]).unwrap();
        let path = dir.path().join("u.bin");
        write_snapshot(&path, &u, &[("name", "u".into())]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 32 + 8 * 64);
        assert_eq!(&bytes[..8], SNAPSHOT_MAGIC);
        assert_eq!(read_snapshot(&path).unwrap(), u);
        let meta = std::fs::read_to_string(snapshot_meta_path(&path)).unwrap();
        assert!(meta.contains("grid = 8") && meta.contains("name = u"));
        std::fs::write(&path, &bytes[..40]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
