//! Subcommand implementations. Every reported quantity is the sum over the
//! spec's chart terms.

use crate::report::{complex, num, Report, Table};
use crate::spec::{Config, InputError};
use finpart::continuation::{laurent_at_zero, laurent_contour_check, poles, residue_radius, residue_with, select_path, ContinuationError, Gamma, Path};
use finpart::currents::{self, residual, CurrentsError, ReportRow};
use finpart::cutoff::{self, CutoffError};
use finpart::expr::{parse, C64};
use finpart::forms::{ChartSpec, Form, SingularForm};
use finpart::quadrature::QuadratureConfig;
use num_rational::BigRational;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{0}")]
    Engine(String),
}

impl From<ContinuationError> for CommandError {
    fn from(e: ContinuationError) -> Self {
        CommandError::Engine(e.to_string())
    }
}

impl From<CurrentsError> for CommandError {
    fn from(e: CurrentsError) -> Self {
        CommandError::Engine(e.to_string())
    }
}

impl From<CutoffError> for CommandError {
    fn from(e: CutoffError) -> Self {
        CommandError::Engine(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CommandError>;

const ZERO: C64 = C64::new(0.0, 0.0);

fn gammas(cfg: &Config) -> Result<Vec<Gamma>> {
    cfg.charts
        .iter()
        .map(|t| Ok(Gamma::new(currents::integrand(&t.chart, &t.omega, &t.xi)?, cfg.quadrature.clone())))
        .collect()
}

fn path_name(p: Path) -> String {
    match p {
        Path::Direct => "direct".into(),
        Path::Parts(m) => format!("parts({m})"),
    }
}

const ROW_COLUMNS: [&str; 7] = ["j", "method", "value_re", "value_im", "reference_re", "reference_im", "residual"];

fn row_table(name: &'static str, rows: &[ReportRow]) -> Table {
    let mut t = Table::new(name, &ROW_COLUMNS);
    for r in rows {
        let [vr, vi] = complex(r.value);
        let [rr, ri] = complex(r.reference);
        t.push(vec![r.j.to_string(), r.method.clone(), vr, vi, rr, ri, num(r.residual)]);
    }
    t
}

/// Adds per-chart rows with matching (j, method).
fn sum_rows(per_chart: Vec<Vec<ReportRow>>) -> Vec<ReportRow> {
    let mut acc: BTreeMap<usize, (String, C64, C64)> = BTreeMap::new();
    for rows in per_chart {
        for r in rows {
            let e = acc.entry(r.j).or_insert((r.method.clone(), ZERO, ZERO));
            e.1 += r.value;
            e.2 += r.reference;
        }
    }
    acc.into_iter().map(|(j, (m, v, r))| ReportRow::new(j, m, v, r)).collect()
}

pub fn gamma(cfg: &Config, mut report: Report) -> Result<Report> {
    let (lambda, tau) = (cfg.run.lambda, cfg.run.tau);
    let mut value = ZERO;
    let mut reference = Some(ZERO);
    let (mut paths, mut alts) = (Vec::new(), Vec::new());
    let mut crossed = false;
    for g in gammas(cfg)? {
        let ig = &g.integrand;
        let path = select_path(&ig.chart, ig.n_power, lambda);
        let here = g.eval(lambda, tau, None)?;
        value += here;
        paths.push(path_name(path));
        let alt = match path {
            _ if ig.chart.kappa == 0 => None,
            Path::Direct => Some(0),
            Path::Parts(m) => Some(m + 1),
        };
        let other = alt.map(|m| g.eval(lambda, tau, Some(m)));
        match (other, reference.as_mut()) {
            (Some(Ok(v)), Some(r)) => {
                *r += v;
                crossed = true;
                alts.push(path_name(Path::Parts(alt.unwrap())));
            }
            (Some(Err(ContinuationError::InsufficientVanishing { .. } | ContinuationError::OrderCap(_))), _) => reference = None,
            (Some(Err(e)), _) => return Err(e.into()),
            (None, Some(r)) => {
                *r += here;
                alts.push("none".into());
            }
            (_, None) => {}
        }
    }
    let mut t = Table::new(
        "gamma",
        &["lambda_re", "lambda_im", "tau_re", "tau_im", "path", "value_re", "value_im", "reference_path", "reference_re", "reference_im", "residual"],
    );
    let [lr, li] = complex(lambda);
    let [tr, ti] = complex(tau);
    let [vr, vi] = complex(value);
    let (ref_path, rr, ri, res) = match reference.filter(|_| crossed) {
        Some(r) => {
            let [a, b] = complex(r);
            (alts.join("+"), a, b, residual(value, r))
        }
        None => ("none".into(), String::new(), String::new(), 0.0),
    };
    t.push(vec![lr, li, tr, ti, paths.join("+"), vr, vi, ref_path.clone(), rr, ri, num(res)]);
    report.tables.push(t);
    report.summary.push(format!("Γ({lambda}, {tau}) = {value:.12e} via {}", paths.join("+")));
    if reference.is_some() && crossed {
        report.check("cross-check against a second integration-by-parts order", res, cfg.run.tol.gamma);
    } else {
        report.summary.push("no second evaluation path available for a cross-check".into());
    }
    Ok(report)
}

struct Laurent {
    structural: Vec<C64>,
    contour: Option<Vec<C64>>,
    locus: Option<C64>,
    kappa: Option<usize>,
}

fn laurent_sums(cfg: &Config, locus: bool) -> Result<Laurent> {
    let top = cfg.charts.iter().map(|t| 2 * t.chart.kappa).max().unwrap_or(0);
    let mut structural = vec![ZERO; top + 1];
    let mut contour = cfg.run.contour.then(|| vec![ZERO; top + 1]);
    let kappas: Vec<usize> = cfg.charts.iter().map(|t| t.chart.kappa).collect();
    let kappa = kappas.iter().all(|&k| k == kappas[0]).then_some(kappas[0]);
    let mut locus_sum = (locus && kappa.is_some()).then_some(ZERO);
    for (t, g) in cfg.charts.iter().zip(gammas(cfg)?) {
        let s = laurent_at_zero(&g.integrand, &cfg.quadrature)?;
        for (j, c) in structural.iter_mut().enumerate() {
            *c += s.c(j);
        }
        if let Some(cs) = contour.as_mut() {
            let c = laurent_contour_check(&g)?;
            for (j, v) in cs.iter_mut().enumerate() {
                *v += c.c(j);
            }
        }
        if let Some(l) = locus_sum.as_mut() {
            *l += currents::mu_kappa_direct(&t.chart, &t.omega, &t.xi, &cfg.quadrature)?.value;
        }
    }
    Ok(Laurent { structural, contour, locus: locus_sum, kappa })
}

fn laurent_rows(l: &Laurent, top: usize) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for j in 0..=top.min(l.structural.len() - 1) {
        let reference = l.contour.as_ref().map_or(l.structural[j], |c| c[j]);
        rows.push(ReportRow::new(j, if l.contour.is_some() { "structural-vs-contour" } else { "structural" }, l.structural[j], reference));
    }
    if let (Some(v), Some(k)) = (l.locus, l.kappa) {
        rows.push(ReportRow::new(k, "locus-vs-structural", v, l.structural[k]));
    }
    rows
}

pub fn laurent(cfg: &Config, mut report: Report) -> Result<Report> {
    let l = laurent_sums(cfg, true)?;
    let top = cfg.run.jmax.unwrap_or(l.structural.len() - 1);
    let rows = laurent_rows(&l, top);
    let threshold = 1e-8 * (1.0 + l.structural[0].norm());
    let kappa_eff = (0..l.structural.len()).rev().find(|&j| l.structural[j].norm() > threshold).unwrap_or(0);
    report.summary.push(format!("effective pole order at 0: {kappa_eff} (threshold {threshold:.3e})"));
    for r in rows.iter().filter(|r| r.j <= 1 || r.method.starts_with("locus")) {
        report.summary.push(format!("  j = {} [{}]: {:.12e}", r.j, r.method, r.value));
    }
    if l.contour.is_some() || l.locus.is_some() {
        report.check("max residual", currents::max_residual(&rows), cfg.run.tol.laurent);
    }
    report.tables.push(row_table("laurent", &rows));
    Ok(report)
}

pub fn finite_part(cfg: &Config, mut report: Report) -> Result<Report> {
    let l = laurent_sums(cfg, false)?;
    let rows = laurent_rows(&l, 0);
    report.summary.push(format!("finite part ⟨μ_0(ω), ξ⟩ = {:.12e}", l.structural[0]));
    if l.contour.is_some() {
        report.check("structural vs contour", rows[0].residual, cfg.run.tol.laurent);
    }
    report.tables.push(row_table("finite-part", &rows));
    Ok(report)
}

pub fn residues(cfg: &Config, mut report: Report) -> Result<Report> {
    let gs = gammas(cfg)?;
    let mut table: BTreeMap<BigRational, u32> = BTreeMap::new();
    for g in &gs {
        for (p, ell) in poles(&g.integrand.chart, g.integrand.n_power) {
            let e = table.entry(p).or_insert(0);
            *e = (*e).max(ell);
        }
    }
    let mut t = Table::new("residues", &["p", "ell", "k", "value_re", "value_im", "reference_re", "reference_im", "residual"]);
    let mut worst: f64 = 0.0;
    for (p, &ell) in table.iter().rev() {
        let radius = gs.iter().map(|g| residue_radius(&g.integrand.chart, g.integrand.n_power, p)).fold(f64::INFINITY, f64::min);
        let mut a = vec![ZERO; 2 * ell as usize];
        let mut b = a.clone();
        for g in &gs {
            for (acc, r) in [(&mut a, radius), (&mut b, radius / 2.0)] {
                let data = residue_with(g, p, ell, Some(r))?;
                for (x, y) in acc.iter_mut().zip(&data.coefficients) {
                    *x += y;
                }
            }
        }
        for k in 0..a.len() {
            let res = residual(a[k], b[k]);
            worst = worst.max(res);
            let [vr, vi] = complex(a[k]);
            let [rr, ri] = complex(b[k]);
            t.push(vec![p.to_string(), ell.to_string(), k.to_string(), vr, vi, rr, ri, num(res)]);
        }
        report.summary.push(format!("pole {p} (order 2·{ell}): ε^(-{p}) coefficient {:.12e}", a[2 * ell as usize - 1]));
    }
    if table.is_empty() {
        report.summary.push("no positive poles".into());
    } else {
        report.check("radius-halving residual", worst, cfg.run.tol.residue);
    }
    report.tables.push(t);
    Ok(report)
}

pub fn cutoff(cfg: &Config, mut report: Report) -> Result<Report> {
    let gs = gammas(cfg)?;
    let mut t = Table::new("cutoff", &["eps", "value_re", "value_im"]);
    for eps in cfg.run.grid() {
        let v = cutoff::cutoff_sum(&gs, eps)?;
        let [vr, vi] = complex(v);
        t.push(vec![num(eps), vr, vi]);
    }
    report.summary.push(format!("{} cut-off integrals from ε = {:e} to {:e}", t.rows.len(), cfg.run.eps_max, cfg.run.eps_min));
    report.tables.push(t);
    Ok(report)
}

fn metric_method(cfg: &Config) -> currents::Method {
    if cfg.run.contour {
        currents::Method::Contour
    } else {
        currents::Method::Structural
    }
}

pub fn verify_metric(cfg: &Config, mut report: Report) -> Result<Report> {
    let per: Vec<Vec<ReportRow>> =
        cfg.charts.iter().map(|t| currents::verify_metric_change(&t.chart, &t.omega, &t.xi, metric_method(cfg), &cfg.quadrature)).collect::<std::result::Result<_, _>>()?;
    let rows = sum_rows(per);
    report.summary.push(format!("μ_0 in the changed metric: {:.12e}", rows[0].value));
    report.check("max reconstruction residual", currents::max_residual(&rows), cfg.run.tol.metric);
    report.tables.push(row_table("verify-metric", &rows));
    Ok(report)
}

pub fn verify_stokes(cfg: &Config, mut report: Report) -> Result<Report> {
    let per: Vec<Vec<ReportRow>> =
        cfg.charts.iter().map(|t| currents::verify_stokes(&t.chart, &t.omega, &t.xi, &cfg.quadrature)).collect::<std::result::Result<_, _>>()?;
    let rows = sum_rows(per);
    report.check("max Stokes residual", currents::max_residual(&rows), cfg.run.tol.stokes);
    report.tables.push(row_table("verify-stokes", &rows));
    Ok(report)
}

pub fn verify_asymptotic(cfg: &Config, mut report: Report) -> Result<Report> {
    let gs = gammas(cfg)?;
    let r = cutoff::verify_asymptotic(&gs, &cfg.run.grid())?;
    let delta = r.expansion.delta;
    let mut samples = Table::new("samples", &["eps", "value_re", "value_im", "predicted_re", "predicted_im", "defect_abs", "defect_over_eps_delta"]);
    for s in &r.samples {
        let [vr, vi] = complex(s.value);
        let [pr, pi] = complex(s.predicted);
        samples.push(vec![num(s.eps), vr, vi, pr, pi, num(s.defect.norm()), num(s.defect.norm() / s.eps.powf(delta))]);
    }
    let mut expansion = Table::new("expansion", &["p", "j", "predicted_re", "predicted_im", "fitted_re", "fitted_im", "residual"]);
    for row in &r.rows {
        let [pr, pi] = complex(row.predicted);
        let [fr, fi] = complex(row.fitted);
        expansion.push(vec![row.p.to_string(), row.j.to_string(), pr, pi, fr, fi, num(row.residual)]);
    }
    report.summary.push(format!("remainder exponent δ = {delta}, fitted slope {:.4}, sup |defect|/ε^δ = {:.4e}", r.slope, r.constant));
    report.summary.push(format!("fit condition number {:.3e}", r.fit.condition));
    if !r.slope_ok {
        report.failed = true;
        report.summary.push(format!("slope {:.4} below δ − 0.1: FAIL", r.slope));
    }
    report.check("max fitted-vs-predicted residual", r.rows.iter().map(|x| x.residual).fold(0.0, f64::max), cfg.run.tol.fit);
    report.tables.push(samples);
    report.tables.push(expansion);
    Ok(report)
}

pub fn mellin(cfg: &Config, mut report: Report) -> Result<Report> {
    let gs = gammas(cfg)?;
    let mut t = Table::new("mellin", &["lambda", "transform_re", "transform_im", "reference_re", "reference_im", "rel_err", "tail", "tail_flag"]);
    let mut worst: f64 = 0.0;
    for &lambda in &cfg.run.mellin_lambdas {
        let r = cutoff::mellin_check(&gs, lambda)?;
        worst = worst.max(r.rel_err);
        if r.tail_flag {
            report.failed = true;
            report.summary.push(format!("λ = {lambda}: truncated ε-tail {:.3e} above the quadrature tolerance", r.tail));
        }
        let [a, b] = complex(r.transform);
        let [c, d] = complex(r.reference);
        t.push(vec![num(lambda), a, b, c, d, num(r.rel_err), num(r.tail), r.tail_flag.to_string()]);
    }
    report.check("max relative error", worst, cfg.run.tol.mellin);
    report.tables.push(t);
    Ok(report)
}

struct Check {
    name: &'static str,
    value: C64,
    reference: C64,
    tolerance: f64,
}

fn golden_chart(psi: &str) -> ChartSpec {
    ChartSpec::new(1, 1, vec![1], parse("0").unwrap(), parse(psi).unwrap(), vec![1.0]).unwrap()
}

/// Closed-form checks on the unit-disc charts, independent of any spec.
pub fn selftest(quad: &QuadratureConfig, tol: &crate::spec::Tolerances, mut report: Report) -> Result<Report> {
    let xi = Form::scalar(1, parse("(1 - z1*zb1)^4").unwrap());
    let chart = golden_chart("0");
    let term = |n: u32| -> Result<Gamma> { Ok(Gamma::new(currents::integrand(&chart, &SingularForm::new(Form::vol(1), n), &xi)?, quad.clone())) };
    let real = |x: f64| C64::new(x, 0.0);
    let (d1, d2) = (term(1)?, term(2)?);
    let mut checks = Vec::new();
    checks.push(Check { name: "d1_gamma_at_1", value: d1.eval(real(1.0), ZERO, None)?, reference: real(PI / 5.0), tolerance: tol.gamma });
    let s1 = laurent_at_zero(&d1.integrand, quad)?;
    let c1 = laurent_contour_check(&d1)?;
    checks.push(Check { name: "d1_mu1_structural", value: s1.c(1), reference: real(PI), tolerance: tol.laurent });
    checks.push(Check { name: "d1_mu0_structural", value: s1.c(0), reference: real(-25.0 * PI / 12.0), tolerance: tol.laurent });
    checks.push(Check { name: "d1_mu1_contour", value: c1.c(1), reference: real(PI), tolerance: tol.laurent });
    checks.push(Check { name: "d1_mu0_contour", value: c1.c(0), reference: real(-25.0 * PI / 12.0), tolerance: tol.laurent });
    let s2 = laurent_at_zero(&d2.integrand, quad)?;
    checks.push(Check { name: "d2_mu1_structural", value: s2.c(1), reference: real(-4.0 * PI), tolerance: tol.laurent });
    checks.push(Check { name: "d2_mu0_structural", value: s2.c(0), reference: real(10.0 * PI / 3.0), tolerance: tol.laurent });
    let one = BigRational::from_integer(1.into());
    let res = finpart::continuation::residue_at(&d2, &one, None)?;
    checks.push(Check { name: "d2_residue_at_1", value: res.coefficients[1], reference: real(PI), tolerance: tol.residue });
    let shifted = currents::verify_metric_change(&golden_chart("1"), &SingularForm::new(Form::vol(1), 1), &xi, currents::Method::Contour, quad)?;
    checks.push(Check { name: "d1_metric_shift_mu0", value: shifted[0].value, reference: real(-37.0 * PI / 12.0), tolerance: tol.metric });
    let m = cutoff::mellin_check(std::slice::from_ref(&d1), 3.0)?;
    checks.push(Check { name: "d1_mellin_at_3", value: m.transform, reference: real(PI / 315.0), tolerance: tol.mellin });
    let mut t = Table::new("selftest", &["check", "value_re", "value_im", "reference_re", "reference_im", "residual", "tolerance", "status"]);
    for c in &checks {
        let res = (c.value - c.reference).norm() / c.reference.norm();
        let [vr, vi] = complex(c.value);
        let [rr, ri] = complex(c.reference);
        let ok = res <= c.tolerance;
        t.push(vec![c.name.into(), vr, vi, rr, ri, num(res), num(c.tolerance), if ok { "ok" } else { "FAIL" }.into()]);
        report.check(c.name, res, c.tolerance);
    }
    report.tables.push(t);
    Ok(report)
}
