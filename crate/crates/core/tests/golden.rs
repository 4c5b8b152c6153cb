//! Closed-form values on the unit disc, through the public API only.

use finpart::continuation::{laurent_at_zero, laurent_contour_check, residue_at, select_path, Gamma, Integrand, Path};
use finpart::currents::{self, Method};
use finpart::cutoff::{cutoff_integral, predict_expansion};
use finpart::expr::{evaluate, parse, wirtinger};
use finpart::forms::{ChartSpec, Form, SingularForm};
use finpart::quadrature::{integrate_polydisc, QuadratureConfig, RadialWeight};
use finpart::C64;
use num_rational::BigRational;
use std::f64::consts::PI;

fn close(a: C64, b: C64, rel: f64) -> bool {
    (a - b).norm() <= rel * b.norm().max(1e-300)
}

fn disc_integrand(power: u32, xi: &str) -> Integrand {
    let chart = ChartSpec::flat(1, vec![1]).unwrap();
    let omega = SingularForm::new(Form::vol(1), power);
    currents::integrand(&chart, &omega, &Form::scalar(1, parse(xi).unwrap())).unwrap()
}

/// π B(λ, k+1) = π k! / λ(λ+1)…(λ+k).
fn beta(lambda: C64, k: u32) -> C64 {
    (0..=k).fold(C64::new(PI, 0.0), |acc, j| acc * (j.max(1) as f64) / (lambda + j as f64))
}

#[test]
fn polydisc_quadrature_with_a_singular_weight() {
    // ∫ |z|^{-1} (1 − |z|²)^4 dV = π B(1/2, 5) = 256π/315
    let chart = ChartSpec::flat(1, vec![1]).unwrap();
    let w = RadialWeight::uniform(1, C64::new(-1.0, 0.0), 0);
    let v = integrate_polydisc(&w, &parse("(1 - z1*zb1)^4").unwrap(), &chart, &QuadratureConfig::default()).unwrap();
    assert!(close(v, C64::new(256.0 * PI / 315.0, 0.0), 1e-10), "{v}");
}

#[test]
fn continued_gamma_is_a_beta_function() {
    let g = Gamma::new(disc_integrand(1, "(1 - z1*zb1)^12"), QuadratureConfig::default());
    for l in [C64::new(1.0, 0.0), C64::new(0.3, -0.8), C64::new(-0.6, 0.4), C64::new(-1.7, 0.25), C64::new(2.5, 3.0)] {
        let v = g.eval(l, C64::new(0.0, 0.0), None).unwrap();
        assert!(close(v, beta(l, 12), 1e-9), "λ = {l}: {v} vs {}", beta(l, 12));
    }
    assert_eq!(select_path(&g.integrand.chart, 1, C64::new(1.5, 0.0)), Path::Direct);
    assert_eq!(select_path(&g.integrand.chart, 1, C64::new(-1.7, 0.0)), Path::Parts(1));
}

#[test]
fn laurent_coefficients_on_the_golden_discs() {
    let cfg = QuadratureConfig::default();
    let d1 = disc_integrand(1, "(1 - z1*zb1)^4");
    let s = laurent_at_zero(&d1, &cfg).unwrap();
    assert!(close(s.c(1), C64::new(PI, 0.0), 1e-10));
    assert!(close(s.c(0), C64::new(-25.0 * PI / 12.0, 0.0), 1e-10));
    let c = laurent_contour_check(&Gamma::new(d1, cfg.clone())).unwrap();
    assert!(close(c.c(0), s.c(0), 1e-8));

    let d2 = disc_integrand(2, "(1 - z1*zb1)^4");
    let s = laurent_at_zero(&d2, &cfg).unwrap();
    assert!(close(s.c(1), C64::new(-4.0 * PI, 0.0), 1e-10));
    assert!(close(s.c(0), C64::new(10.0 * PI / 3.0, 0.0), 1e-10));
}

#[test]
fn cutoff_integral_and_its_expansion_on_d2() {
    let ig = disc_integrand(2, "(1 - z1*zb1)^4");
    let cfg = QuadratureConfig::default();
    let closed = |e: f64| PI * (1.0 / e + 4.0 * e.ln() + 10.0 / 3.0 - 6.0 * e + 2.0 * e * e - e.powi(3) / 3.0);
    for eps in [1e-2, 1e-3, 0.2] {
        let v = cutoff_integral(&ig, eps, &cfg).unwrap();
        assert!(close(v, C64::new(closed(eps), 0.0), 1e-8), "ε = {eps}: {v}");
    }
    let g = Gamma::new(ig, cfg);
    let one = BigRational::from_integer(1.into());
    let res = residue_at(&g, &one, None).unwrap();
    assert_eq!(res.ell, 1);
    let e = predict_expansion(std::slice::from_ref(&g)).unwrap();
    assert!(close(e.coefficient(&one, 0).unwrap(), C64::new(PI, 0.0), 1e-5));
    // the basis is ε^{-p} log^j(1/ε): 4π log ε becomes −4π log(1/ε)
    let zero = BigRational::from_integer(0.into());
    assert!(close(e.coefficient(&zero, 1).unwrap(), C64::new(-4.0 * PI, 0.0), 1e-6));
    assert!(close(e.coefficient(&zero, 0).unwrap(), C64::new(10.0 * PI / 3.0, 0.0), 1e-6));
}

#[test]
fn constant_metric_shift_moves_the_finite_part() {
    // ψ = φ + 1 gives μ0 − μ1 = −25π/12 − π
    let chart = ChartSpec::new(1, 1, vec![1], parse("0").unwrap(), parse("1").unwrap(), vec![1.0]).unwrap();
    let omega = SingularForm::new(Form::vol(1), 1);
    let xi = Form::scalar(1, parse("(1 - z1*zb1)^4").unwrap());
    let rows = currents::verify_metric_change(&chart, &omega, &xi, Method::Structural, &QuadratureConfig::default()).unwrap();
    assert!(close(rows[0].value, C64::new(-37.0 * PI / 12.0, 0.0), 1e-8));
    assert!(currents::max_residual(&rows) < 1e-8);
}

#[test]
fn wirtinger_derivatives_of_a_monomial() {
    let e = parse("z1^2*zb1 + 3*zb2").unwrap();
    let z = [C64::new(0.3, -0.2), C64::new(0.1, 0.4)];
    let dz = evaluate(&wirtinger(&e, 0, false), &z).unwrap();
    let dzb = evaluate(&wirtinger(&e, 0, true), &z).unwrap();
    assert!(close(dz, 2.0 * z[0] * z[0].conj(), 1e-14));
    assert!(close(dzb, z[0] * z[0], 1e-14));
    assert!(close(evaluate(&wirtinger(&e, 1, true), &z).unwrap(), C64::new(3.0, 0.0), 1e-15));
}
