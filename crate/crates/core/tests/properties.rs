use num_complex::Complex64;
use proptest::prelude::*;

use transverse::chart::{build_chart, read_snapshot, write_snapshot, BasicScalarField, Chart, MetricSpec};
use transverse::expr::Expr;
use transverse::forms::{hodge_star_trace, power_root_bijection, Direction, OneOneForm};
use transverse::hermitian::{eigh, perturb_spectrum, CMatrix, HermitianMatrix};
use transverse::solver::{residual, ProblemSpec, Mode};
use transverse::subsolution::subsolution_margin;
use transverse::symfunc::{
    cone_contains, cone_margin, f_eval, sigma, ConeId, OperatorSpec, Spectrum,
};

fn hermitian(n: usize) -> impl Strategy<Value = HermitianMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
        HermitianMatrix::hermitize(CMatrix::from_fn(n, |i, j| Complex64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1])))
    })
}

fn positive(n: usize) -> impl Strategy<Value = HermitianMatrix> {
    hermitian(n).prop_map(move |h| {
        let m = h.matrix().mul(&h.matrix().adjoint()).add(&CMatrix::identity(n).scale(0.3));
        HermitianMatrix::hermitize(m)
    })
}

fn garding_tuple(n: usize, k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..3.0, n).prop_filter("inside the cone", move |l| cone_margin(l, ConeId::Garding(k)) > 1e-6)
}

fn flat(n: usize, grid: usize) -> Chart {
    build_chart(n, grid, MetricSpec::Constant(HermitianMatrix::identity(n))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_is_symmetric(mut l in prop::collection::vec(-2.0f64..2.0, 1..7), j in 0usize..7, seed in any::<u64>()) {
        let j = j.min(l.len());
        let a = sigma(&l, j).unwrap();
        let len = l.len();
        l.rotate_left((seed as usize) % len);
        l.reverse();
        let b = sigma(&l, j).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn margin_sign_matches_membership(l in prop::collection::vec(-2.0f64..2.0, 1..6), k in 1usize..6, t in any::<bool>()) {
        let k = k.min(l.len());
        let cone = if t && l.len() >= 2 { ConeId::TPullback(k) } else { ConeId::Garding(k) };
        prop_assert_eq!(cone_margin(&l, cone) > 0.0, cone_contains(&l, cone));
    }

    #[test]
    fn hessian_is_concave_on_segments(a in garding_tuple(3, 2), b in garding_tuple(3, 2), s in 0.0f64..1.0) {
        let op = OperatorSpec::hessian(3, 2).unwrap();
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
        let (fa, fb, fm) = (f_eval(&op, &a).unwrap(), f_eval(&op, &b).unwrap(), f_eval(&op, &m).unwrap());
        prop_assert!(fm >= s * fa + (1.0 - s) * fb - 1e-12 * (1.0 + fa.abs() + fb.abs()));
    }

    #[test]
    fn eigh_reconstructs(h in (1usize..5).prop_flat_map(hermitian)) {
        let n = h.dim();
        let (lambda, v) = eigh(&h);
        let d = CMatrix::from_fn(n, |i, j| if i == j { Complex64::new(lambda.as_slice()[i], 0.0) } else { Complex64::new(0.0, 0.0) });
        let back = v.mul(&d).mul(&v.adjoint());
        prop_assert!(back.sub(h.matrix()).max_abs() < 1e-12);
        prop_assert!(v.adjoint_mul(&v).sub(&CMatrix::identity(n)).max_abs() < 1e-12);
        prop_assert!(lambda.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn bijection_round_trips(v in (2usize..5).prop_flat_map(positive)) {
        let phi = power_root_bijection(&v, Direction::Forward).unwrap();
        let back = power_root_bijection(&phi, Direction::Inverse).unwrap();
        prop_assert!(back.sub(&v).max_abs() < 1e-10 * v.max_abs().max(1.0));
    }

    #[test]
    fn trace_star_is_an_involution_in_dimension_two(g in positive(2), chi in hermitian(2)) {
        let once = hodge_star_trace(&g, &OneOneForm(chi)).unwrap();
        let twice = hodge_star_trace(&g, &once).unwrap();
        prop_assert!(twice.0.sub(&chi).max_abs() < 1e-12 * chi.max_abs().max(1.0));
    }

    #[test]
    fn perturbation_separates_and_stays_close(l in prop::collection::vec(0.0f64..2.0, 1..5), tau in 1e-8f64..1e-2) {
        let lambda = Spectrum::new(l);
        let (b, p) = perturb_spectrum(&lambda, tau).unwrap();
        prop_assert!(p.as_slice().windows(2).all(|w| w[0] > w[1]));
        for (x, y) in lambda.as_slice().iter().zip(p.as_slice()) {
            prop_assert!((x - y).abs() <= b.tau + 1e-15);
        }
    }

    #[test]
    fn subsolution_margin_is_monotone_in_psi(mu in garding_tuple(2, 2), psi in -3.0f64..1.0, drop in 0.0f64..2.0) {
        let op = OperatorSpec::hessian_quotient(2, 2, 1, 1.0).unwrap();
        let hi = subsolution_margin(&op, &mu, psi).unwrap();
        let lo = subsolution_margin(&op, &mu, psi - drop).unwrap();
        prop_assert!(lo >= hi);
    }

    #[test]
    fn expression_matches_direct_evaluation(a in -2.0f64..2.0, k in 1i32..4, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let e = Expr::parse(&format!("{a}*cos(2*pi*{k}*x1) + exp(-y1)*sin(2*pi*(x1 - y1))")).unwrap();
        let direct = a * (2.0 * std::f64::consts::PI * k as f64 * x).cos()
            + (-y).exp() * (2.0 * std::f64::consts::PI * (x - y)).sin();
        prop_assert!((e.eval(&[x, y]) - direct).abs() < 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residual_ignores_constant_shifts(c in -5.0f64..5.0, amp in 0.0f64..0.02) {
        let chart = flat(2, 8);
        let op = OperatorSpec::monge_ampere(2).unwrap();
        let form = chart.metric_field();
        let psi = BasicScalarField::zeros(&chart);
        let spec = ProblemSpec::new(op, chart, form, psi, Mode::Eigenvalue).unwrap();
        let u = spec.chart.sample_expr(&Expr::parse(&format!("{amp}*cos(2*pi*(x1 + y2))")).unwrap()).unwrap();
        let (r0, _) = residual(&spec, &u, 0.0).unwrap();
        let (r1, _) = residual(&spec, &u.map(|v| v + c), 0.0).unwrap();
        prop_assert!(r0.distance(&r1) < 1e-13);
    }

    #[test]
    fn hessian_is_linear(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let chart = flat(2, 8);
        let u = chart.sample_expr(&Expr::parse("cos(2*pi*x1)*sin(2*pi*y2)").unwrap()).unwrap();
        let v = chart.sample_expr(&Expr::parse("sin(2*pi*(x2 + 2*y1))").unwrap()).unwrap();
        let w = u.zip_map(&v, |p, q| a * p + b * q);
        let mut lhs = chart.complex_hessian(&u).scale(a);
        lhs.axpy(b, &chart.complex_hessian(&v));
        prop_assert!(lhs.distance(&chart.complex_hessian(&w)) < 1e-11);
    }

    #[test]
    fn snapshots_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 64)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.f64");
        let field = BasicScalarField::new(1, 8, vals).unwrap();
        write_snapshot(&path, &field, &[("note", "x".to_string())]).unwrap();
        prop_assert_eq!(read_snapshot(&path).unwrap(), field);
    }
}
