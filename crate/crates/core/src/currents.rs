//! The currents `μ_j(ω)`: Laurent coefficients of `λ ↦ ∫ ‖s‖^{2λ} ω ∧ ξ`
//! at 0, paired with test forms of complementary degree, and the identities
//! they satisfy.

use crate::continuation::{h_factor, laurent_at_zero, laurent_contour_check, ContinuationError, Gamma, Integrand, LaurentData};
use crate::expr::{apply_mixed_partial, Expr, C64, DEFAULT_ORDER_CAP};
use crate::forms::{d_singular, dlognorm_wedge, ChartSpec, Form, SingularForm};
use crate::quadrature::{integrate_locus, QuadratureConfig};
use num_traits::ToPrimitive;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurrentsError {
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
    #[error("degrees do not pair to top degree: ω has degrees {omega:?}, ξ has {xi:?} (n = {n})")]
    Degree { omega: Vec<usize>, xi: Vec<usize>, n: usize },
    #[error("verify-stokes needs ω of total degree 2n−1 = {expected}, got {found:?}")]
    StokesDegree { expected: usize, found: Vec<usize> },
}

impl From<crate::quadrature::QuadratureError> for CurrentsError {
    fn from(e: crate::quadrature::QuadratureError) -> Self {
        CurrentsError::Continuation(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Structural,
    Contour,
    Locus,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Structural => "structural",
            Method::Contour => "contour",
            Method::Locus => "locus",
        }
    }
}

/// `⟨μ_j(ω), ξ⟩` with the method that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentAction {
    pub j: usize,
    pub value: C64,
    pub method: Method,
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub j: usize,
    pub method: String,
    pub value: C64,
    pub reference: C64,
    pub residual: f64,
}

impl ReportRow {
    pub fn new(j: usize, method: impl Into<String>, value: C64, reference: C64) -> Self {
        ReportRow { j, method: method.into(), value, reference, residual: residual(value, reference) }
    }
}

/// `|a − b| / max(1, |a|, |b|)`.
pub fn residual(a: C64, b: C64) -> f64 {
    (a - b).norm() / 1f64.max(a.norm()).max(b.norm())
}

pub fn max_residual(rows: &[ReportRow]) -> f64 {
    rows.iter().map(|r| r.residual).fold(0.0, f64::max)
}

fn homogeneous_degree(f: &Form) -> Option<Option<usize>> {
    let d = f.degrees();
    match d.len() {
        0 => Some(None),
        1 => Some(Some(d[0])),
        _ => None,
    }
}

/// Top-degree part of `ω ∧ ξ`: only complementary bidegree pairs survive.
pub fn pair(omega: &SingularForm, xi: &Form) -> Result<SingularForm, CurrentsError> {
    let n = omega.n();
    let bad = || CurrentsError::Degree { omega: omega.numerator.degrees(), xi: xi.degrees(), n };
    let (Some(dw), Some(dx)) = (homogeneous_degree(&omega.numerator), homogeneous_degree(xi)) else { return Err(bad()) };
    if let (Some(a), Some(b)) = (dw, dx) {
        if a + b != 2 * n {
            return Err(bad());
        }
    }
    let mut top = Form::zero(n);
    for (p, q) in omega.numerator.bidegrees() {
        if p <= n && q <= n {
            let other = xi.component(n - p, n - q);
            if !other.is_zero() {
                top = top.add(&omega.numerator.component(p, q).wedge(&other));
            }
        }
    }
    Ok(SingularForm::new(top, omega.denom_power))
}

pub fn integrand(chart: &ChartSpec, omega: &SingularForm, xi: &Form) -> Result<Integrand, CurrentsError> {
    let top = pair(omega, xi)?;
    Ok(Integrand::new(chart, &top, &Form::scalar(chart.n, Expr::one()))?)
}

/// All Laurent coefficients `⟨μ_j(ω), ξ⟩`, j = 0..=2κ.
pub fn mu_actions(chart: &ChartSpec, omega: &SingularForm, xi: &Form, method: Method, cfg: &QuadratureConfig) -> Result<LaurentData, CurrentsError> {
    let ig = integrand(chart, omega, xi)?;
    Ok(match method {
        Method::Contour => laurent_contour_check(&Gamma::new(ig, cfg.clone()))?,
        _ => laurent_at_zero(&ig, cfg)?,
    })
}

pub fn mu_action(chart: &ChartSpec, omega: &SingularForm, xi: &Form, j: usize, cfg: &QuadratureConfig) -> Result<CurrentAction, CurrentsError> {
    let data = mu_actions(chart, omega, xi, Method::Structural, cfg)?;
    Ok(CurrentAction { j, value: data.c(j), method: Method::Structural })
}

/// `fp ∫ ω = ⟨μ_0(ω), 1⟩` for a top-degree ω.
pub fn finite_part(chart: &ChartSpec, omega: &SingularForm, cfg: &QuadratureConfig) -> Result<C64, CurrentsError> {
    Ok(mu_action(chart, omega, &Form::scalar(chart.n, Expr::one()), 0, cfg)?.value)
}

/// `c_κ = h(0) π^κ ∏m_t ∫_{z_1=…=z_κ=0} ∂^{Nm−1}∂̄^{Nm−1} f dV'`: each
/// `∂∂̄ log|z_t|²` in the log-weighted integral is `π` times the point mass
/// on `{z_t = 0}` in Lebesgue measure.
pub fn mu_kappa_direct(chart: &ChartSpec, omega: &SingularForm, xi: &Form, cfg: &QuadratureConfig) -> Result<CurrentAction, CurrentsError> {
    let ig = integrand(chart, omega, xi)?;
    let kappa = chart.kappa;
    if ig.n_power == 0 {
        let value = if kappa == 0 { laurent_at_zero(&ig, cfg)?.c(0) } else { C64::new(0.0, 0.0) };
        return Ok(CurrentAction { j: kappa, value, method: Method::Locus });
    }
    if kappa == 0 {
        return Ok(CurrentAction { j: 0, value: laurent_at_zero(&ig, cfg)?.c(0), method: Method::Locus });
    }
    let orders: Vec<(u32, u32)> = (0..chart.n)
        .map(|t| if t < kappa { (ig.n_power * chart.m[t] - 1, ig.n_power * chart.m[t] - 1) } else { (0, 0) })
        .collect();
    let g = apply_mixed_partial(&ig.density, &orders, DEFAULT_ORDER_CAP).map_err(ContinuationError::from)?;
    let locus: Vec<usize> = (0..kappa).collect();
    let integral = integrate_locus(&locus, &g, chart, cfg)?;
    let h0 = h_factor(chart, ig.n_power, 0).taylor(0).expect("h has no root at 0")[0].to_f64().unwrap_or(f64::NAN);
    let prefactor = h0 * PI.powi(kappa as i32) * chart.m.iter().map(|&m| m as f64).product::<f64>();
    Ok(CurrentAction { j: kappa, value: integral * prefactor, method: Method::Locus })
}

/// `(−1)^{k+1} μ_j(ω)(dξ) = μ_j(dω)(ξ) + μ_{j+1}(d‖s‖²/‖s‖² ∧ ω)(ξ)` for
/// `j = 0..=κ`, with `k = deg ω = 2n − 1`.
pub fn verify_stokes(chart: &ChartSpec, omega: &SingularForm, xi: &Form, cfg: &QuadratureConfig) -> Result<Vec<ReportRow>, CurrentsError> {
    let n = chart.n;
    let degrees = omega.numerator.degrees();
    if degrees.iter().any(|&d| d != 2 * n - 1) {
        return Err(CurrentsError::StokesDegree { expected: 2 * n - 1, found: degrees });
    }
    let k = 2 * n - 1;
    let sign = if (k + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let lhs = mu_actions(chart, omega, &xi.d(), Method::Structural, cfg)?;
    let d_omega = mu_actions(chart, &d_singular(omega, chart), xi, Method::Structural, cfg)?;
    let log_term = mu_actions(chart, &dlognorm_wedge(omega, chart), xi, Method::Structural, cfg)?;
    Ok((0..=chart.kappa)
        .map(|j| ReportRow::new(j, "stokes", lhs.c(j) * sign, d_omega.c(j) + log_term.c(j + 1)))
        .collect())
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |a, i| a * i as f64)
}

/// `μ_j^{|·|}(ω)` computed (a) on the chart with φ replaced by ψ and
/// (b) as `Σ_ℓ (1/ℓ!) μ_{j+ℓ}^{‖·‖}((φ−ψ)^ℓ ω)`. Rows carry (a) as the
/// value and (b) as the reference. The structural formula expands
/// `e^{−λψ}` exactly as (b) does, so (a) should use the contour method
/// unless only a consistency check of the bookkeeping is wanted.
pub fn verify_metric_change(chart: &ChartSpec, omega: &SingularForm, xi: &Form, method: Method, cfg: &QuadratureConfig) -> Result<Vec<ReportRow>, CurrentsError> {
    let ig = integrand(chart, omega, xi)?;
    let changed = ig.with_metric(&chart.psi)?;
    let direct = match method {
        Method::Contour => laurent_contour_check(&Gamma::new(changed, cfg.clone()))?,
        _ => laurent_at_zero(&changed, cfg)?,
    };
    let top = 2 * chart.kappa;
    let log_ratio = (&chart.phi - &chart.psi).simplify();
    let mut series = Vec::with_capacity(top + 1);
    for l in 0..=top {
        let scaled = Integrand::from_density(chart, &ig.density * &log_ratio.pow(l as i32), ig.n_power);
        series.push(if l > 0 && log_ratio.is_zero() { vec![C64::new(0.0, 0.0); top + 1] } else { laurent_at_zero(&scaled, cfg)?.coefficients });
    }
    Ok((0..=top)
        .map(|j| {
            let recon: C64 = (0..=top - j).map(|l| series[l][j + l] / factorial(l)).sum();
            ReportRow::new(j, format!("metric-{}", method.name()), direct.c(j), recon)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::forms::parse_form;

    fn d1() -> ChartSpec {
        ChartSpec::flat(1, vec![1]).unwrap()
    }

    fn vol_over(n: usize, power: u32) -> SingularForm {
        SingularForm::new(Form::vol(n), power)
    }

    fn scalar(text: &str, n: usize) -> Form {
        Form::scalar(n, parse(text).unwrap())
    }

    fn rel(a: C64, b: f64) -> f64 {
        (a - b).norm() / b.abs()
    }

    #[test]
    fn golden_actions() {
        let cfg = QuadratureConfig::default();
        let xi = scalar("(1 - z1*zb1)^4", 1);
        assert!(rel(mu_action(&d1(), &vol_over(1, 1), &xi, 1, &cfg).unwrap().value, PI) < 1e-8);
        let fp = finite_part(&d1(), &vol_over(1, 1).wedge(&xi), &cfg).unwrap();
        assert!(rel(fp, -25.0 * PI / 12.0) < 1e-8);
        let fp2 = finite_part(&d1(), &vol_over(1, 2).wedge(&xi), &cfg).unwrap();
        assert!(rel(fp2, 10.0 * PI / 3.0) < 1e-8);
        let fp0 = finite_part(&d1(), &vol_over(1, 0).wedge(&xi), &cfg).unwrap();
        assert!(rel(fp0, PI / 5.0) < 1e-12);
    }

    #[test]
    fn off_support_tests_see_only_mu0() {
        let cfg = QuadratureConfig::default();
        let xi = scalar("bump(0.3, 0.5)", 1);
        let data = mu_actions(&d1(), &vol_over(1, 1), &xi, Method::Structural, &cfg).unwrap();
        assert!(data.c(1).norm() < 1e-8 * (1.0 + data.c(0).norm()));
        // ∫ bump/|z|² directly: smooth since the ball misses the origin
        let plain = crate::quadrature::integrate_polydisc(
            &crate::quadrature::RadialWeight::none(1),
            &parse("bump(0.3, 0.5)/(z1*zb1)").unwrap(),
            &d1(),
            &cfg,
        )
        .unwrap();
        assert!((data.c(0) - plain).norm() < 1e-7 * plain.norm());
    }

    #[test]
    fn module_rule() {
        let cfg = QuadratureConfig::default();
        let f = parse("1 + z1*zb1 + 0.5*z1").unwrap();
        let xi = scalar("bump(1)", 1);
        let left = mu_actions(&d1(), &vol_over(1, 1), &xi.scale(&f), Method::Structural, &cfg).unwrap();
        let right = mu_actions(&d1(), &vol_over(1, 1).scale(&f), &xi, Method::Structural, &cfg).unwrap();
        for j in 0..2 {
            assert!(residual(left.c(j), right.c(j)) < 1e-7);
        }
    }

    #[test]
    fn locus_matches_structural() {
        let cfg = QuadratureConfig::default();
        let xi = scalar("(1 - z1*zb1)^4", 1);
        for n_power in [1, 2] {
            let a = mu_kappa_direct(&d1(), &vol_over(1, n_power), &xi, &cfg).unwrap();
            let b = mu_action(&d1(), &vol_over(1, n_power), &xi, 1, &cfg).unwrap();
            assert!(residual(a.value, b.value) < 1e-8, "N={n_power}: {:?} {:?}", a, b);
        }
        let c2 = ChartSpec::flat(1, vec![2]).unwrap();
        let xi = scalar("bump(1)*(1 + z1*zb1)", 1);
        let a = mu_kappa_direct(&c2, &vol_over(1, 1), &xi, &cfg).unwrap();
        let b = mu_action(&c2, &vol_over(1, 1), &xi, 1, &cfg).unwrap();
        assert!(residual(a.value, b.value) < 1e-7, "{:?} {:?}", a, b);
        let zero = mu_kappa_direct(&d1(), &vol_over(1, 1), &scalar("z1*zb1*bump(1)", 1), &cfg).unwrap();
        assert!(zero.value.norm() < 1e-14);
    }

    #[test]
    fn stokes_one_form() {
        let cfg = QuadratureConfig::default();
        let omega = SingularForm::new(parse_form("zb1*bump(1)*dz1", 1).unwrap(), 1);
        let xi = scalar("1 + z1*zb1 + 0.25*zb1", 1);
        let rows = verify_stokes(&d1(), &omega, &xi, &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(max_residual(&rows) < 1e-7, "{rows:?}");
        // ω of the wrong degree
        assert!(verify_stokes(&d1(), &vol_over(1, 1), &xi, &cfg).is_err());
    }

    #[test]
    fn metric_change_constant_shift() {
        let cfg = QuadratureConfig::default();
        let chart = ChartSpec::new(1, 1, vec![1], Expr::zero(), Expr::one(), vec![1.0]).unwrap();
        let xi = scalar("(1 - z1*zb1)^4", 1);
        for method in [Method::Structural, Method::Contour] {
            let rows = verify_metric_change(&chart, &vol_over(1, 1), &xi, method, &cfg).unwrap();
            assert!(rel(rows[0].value, -37.0 * PI / 12.0) < 1e-8, "{rows:?}");
            assert!(rel(rows[1].value, PI) < 1e-8);
            assert!(max_residual(&rows) < 1e-8, "{rows:?}");
        }
        let same = ChartSpec::flat(1, vec![1]).unwrap();
        assert!(max_residual(&verify_metric_change(&same, &vol_over(1, 1), &xi, Method::Structural, &cfg).unwrap()) < 1e-12);
        let curved = ChartSpec::new(1, 1, vec![1], Expr::zero(), parse("0.5 + z1*zb1 + 0.25*(z1 + zb1)").unwrap(), vec![1.0]).unwrap();
        let rows = verify_metric_change(&curved, &vol_over(1, 1), &xi, Method::Contour, &cfg).unwrap();
        assert!(rel(rows[0].value, -25.0 * PI / 12.0 - PI / 2.0) < 1e-8, "{rows:?}");
        assert!(max_residual(&rows) < 1e-7, "{rows:?}");
    }

    #[test]
    fn degree_mismatch_is_reported() {
        let cfg = QuadratureConfig::default();
        let err = mu_action(&d1(), &vol_over(1, 1), &Form::dz(1, 0), 0, &cfg).unwrap_err();
        assert!(matches!(err, CurrentsError::Degree { .. }));
    }
}
