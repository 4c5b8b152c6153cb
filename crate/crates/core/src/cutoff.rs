//! The ε-side of the regularization: `I(ε) = ∫_{‖s‖² ≥ ε} ω ∧ ξ`, its
//! predicted small-ε expansion, empirical fits and the Mellin identity
//! `∫_0^∞ ε^{λ−1} I(ε) dε = Γ(λ)/λ`.

use crate::continuation::{laurent_at_zero, poles, residue_radius, residue_with, ContinuationError, Gamma, Integrand};
use std::collections::BTreeMap;
use crate::expr::C64;
use crate::quadrature::{cutoff_sup, integrate_cutoff, on_interval, QuadratureError, RadialFactor, RadialWeight};
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CutoffError {
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
    #[error("need at least {needed} samples for {terms} basis terms, got {samples}")]
    TooFewSamples { samples: usize, terms: usize, needed: usize },
    #[error("least-squares basis is rank deficient (condition ≈ {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("Mellin check needs λ ≥ N + 0.5 = {min}, got {lambda}")]
    LambdaTooSmall { lambda: f64, min: f64 },
    #[error("sample ε = {0} is not positive")]
    BadEpsilon(f64),
}

impl From<QuadratureError> for CutoffError {
    fn from(e: QuadratureError) -> Self {
        CutoffError::Continuation(e.into())
    }
}

/// `coefficient · ε^{−p} (log ε^{−1})^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub p: BigRational,
    pub j: u32,
    pub coefficient: C64,
}

pub fn basis_value(p: &BigRational, j: u32, eps: f64) -> f64 {
    let l = (1.0 / eps).ln();
    (p.to_f64().unwrap_or(f64::NAN) * l).exp() * l.powi(j as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticExpansion {
    pub terms: Vec<Term>,
    /// Remainder exponent: the expansion is claimed up to `O(ε^δ)`.
    pub delta: f64,
}

impl AsymptoticExpansion {
    pub fn eval(&self, eps: f64) -> C64 {
        self.terms.iter().map(|t| t.coefficient * basis_value(&t.p, t.j, eps)).sum()
    }

    pub fn keys(&self) -> Vec<(BigRational, u32)> {
        self.terms.iter().map(|t| (t.p.clone(), t.j)).collect()
    }

    pub fn coefficient(&self, p: &BigRational, j: u32) -> Option<C64> {
        self.terms.iter().find(|t| &t.p == p && t.j == j).map(|t| t.coefficient)
    }
}

/// `I(ε)` for one chart term: the Lebesgue density of `ω ∧ ξ` is
/// `f / |z^m|^{2N}`.
pub fn cutoff_integral(ig: &Integrand, eps: f64, cfg: &crate::quadrature::QuadratureConfig) -> Result<C64, CutoffError> {
    let c = &ig.chart;
    let weight = RadialWeight { factors: c.m.iter().map(|&m| RadialFactor::new(C64::new(-2.0 * (ig.n_power * m) as f64, 0.0), 0)).collect() };
    Ok(integrate_cutoff(eps, &weight, &ig.density, c, cfg)?.into_result()?)
}

/// Terms `(0, j)` with `c_j/j!` from the Laurent data at 0, and `(p, j)`
/// with `c_{2ℓ_p−1−j}/j!` from the residue data at each positive pole.
/// δ is the gap to the first negative pole, capped at 1. Chart terms are
/// summed: pole orders are taken as the maximum over charts.
pub fn predict_expansion(gammas: &[Gamma]) -> Result<AsymptoticExpansion, CutoffError> {
    let mut table: BTreeMap<BigRational, u32> = BTreeMap::new();
    for g in gammas {
        for (p, ell) in poles(&g.integrand.chart, g.integrand.n_power) {
            let e = table.entry(p).or_insert(0);
            *e = (*e).max(ell);
        }
    }
    let mut terms = Vec::new();
    for (p, &ell) in table.iter().rev() {
        let radius = gammas.iter().map(|g| residue_radius(&g.integrand.chart, g.integrand.n_power, p)).fold(f64::INFINITY, f64::min);
        let top = 2 * ell as usize - 1;
        let mut coeffs = vec![C64::new(0.0, 0.0); top + 1];
        for g in gammas {
            let res = residue_with(g, p, ell, Some(radius))?;
            for (c, r) in coeffs.iter_mut().zip(&res.coefficients) {
                *c += r;
            }
        }
        let mut f = 1.0;
        for j in 0..=top {
            if j > 0 {
                f *= j as f64;
            }
            terms.push(Term { p: p.clone(), j: j as u32, coefficient: coeffs[top - j] / f });
        }
    }
    let top = gammas.iter().filter(|g| !g.integrand.is_holomorphic()).map(|g| g.integrand.chart.kappa).max().unwrap_or(0);
    let mut c = vec![C64::new(0.0, 0.0); top + 1];
    for g in gammas {
        let laurent = laurent_at_zero(&g.integrand, &g.cfg)?;
        for (j, cj) in c.iter_mut().enumerate() {
            *cj += laurent.c(j);
        }
    }
    for j in (0..=top).rev() {
        let f = (1..=j).fold(1.0, |a, i| a * i as f64);
        terms.push(Term { p: BigRational::zero(), j: j as u32, coefficient: c[j] / f });
    }
    let max_m = gammas.iter().map(|g| g.integrand.chart.max_m()).max().unwrap_or(1).max(1);
    Ok(AsymptoticExpansion { terms, delta: 1f64.min(1.0 / max_m as f64) })
}

/// `I(ε)` summed over chart terms.
pub fn cutoff_sum(gammas: &[Gamma], eps: f64) -> Result<C64, CutoffError> {
    let mut total = C64::new(0.0, 0.0);
    for g in gammas {
        total += cutoff_integral(&g.integrand, eps, &g.cfg)?;
    }
    Ok(total)
}

/// Twelve geometric points from 1e−2 down to 1e−6.
pub fn default_grid() -> Vec<f64> {
    geometric_grid(1e-2, 1e-6, 12)
}

pub fn geometric_grid(from: f64, to: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![from];
    }
    (0..count).map(|k| from * (to / from).powf(k as f64 / (count - 1) as f64)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    /// One coefficient per basis key.
    pub coefficients: Vec<C64>,
    /// Coefficients of the `ε^δ` remainder columns.
    pub nuisance: Vec<C64>,
    pub residual_norm: f64,
    pub condition: f64,
}

/// Least squares of the samples against `ε^{−p}(log ε^{−1})^j` plus optional
/// remainder columns `ε^{δ}`. Columns are scaled to unit norm; real and
/// imaginary parts share the factorization.
pub fn fit_expansion(samples: &[(f64, C64)], basis: &[(BigRational, u32)], remainder: &[f64]) -> Result<Fit, CutoffError> {
    let k = basis.len() + remainder.len();
    if samples.len() < 2 * k {
        return Err(CutoffError::TooFewSamples { samples: samples.len(), terms: k, needed: 2 * k });
    }
    if let Some((e, _)) = samples.iter().find(|(e, _)| !(*e > 0.0)) {
        return Err(CutoffError::BadEpsilon(*e));
    }
    let rows = samples.len();
    let mut a = DMatrix::<f64>::zeros(rows, k);
    for (i, (eps, _)) in samples.iter().enumerate() {
        for (c, (p, j)) in basis.iter().enumerate() {
            a[(i, c)] = basis_value(p, *j, *eps);
        }
        for (c, d) in remainder.iter().enumerate() {
            a[(i, basis.len() + c)] = eps.powf(*d);
        }
    }
    let scales: Vec<f64> = (0..k).map(|c| a.column(c).norm()).collect();
    for (c, s) in scales.iter().enumerate() {
        if *s > 0.0 {
            a.column_mut(c).scale_mut(1.0 / s);
        }
    }
    let b = DMatrix::from_fn(rows, 2, |i, c| if c == 0 { samples[i].1.re } else { samples[i].1.im });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > 1e-13 * smax) {
        return Err(CutoffError::RankDeficient { condition });
    }
    let x = svd.solve(&b, 0.0).map_err(|_| CutoffError::RankDeficient { condition })?;
    let r = &a * &x - &b;
    let residual_norm = r.norm();
    let coeff: Vec<C64> = (0..k).map(|c| C64::new(x[(c, 0)], x[(c, 1)]) / scales[c]).collect();
    Ok(Fit { coefficients: coeff[..basis.len()].to_vec(), nuisance: coeff[basis.len()..].to_vec(), residual_norm, condition })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefectSample {
    pub eps: f64,
    pub value: C64,
    pub predicted: C64,
    pub defect: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionRow {
    pub p: BigRational,
    pub j: u32,
    pub predicted: C64,
    pub fitted: C64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticReport {
    pub expansion: AsymptoticExpansion,
    pub samples: Vec<DefectSample>,
    /// Least-squares slope of `log|D|` against `log ε`.
    pub slope: f64,
    /// `max |D(ε)| / ε^δ` over the grid.
    pub constant: f64,
    pub slope_ok: bool,
    pub fit: Fit,
    pub rows: Vec<ExpansionRow>,
}

/// Samples `I(ε)` on the grid (concurrently), compares with the predicted
/// expansion, measures the remainder slope and fits the coefficients back.
pub fn verify_asymptotic(gammas: &[Gamma], grid: &[f64]) -> Result<AsymptoticReport, CutoffError> {
    let expansion = predict_expansion(gammas)?;
    let values: Vec<Result<C64, CutoffError>> = grid.par_iter().map(|&e| cutoff_sum(gammas, e)).collect();
    let mut samples = Vec::with_capacity(grid.len());
    for (&eps, v) in grid.iter().zip(values) {
        let value = v?;
        let predicted = expansion.eval(eps);
        samples.push(DefectSample { eps, value, predicted, defect: value - predicted });
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.defect.norm() > 0.0).map(|s| (s.eps.ln(), s.defect.norm().ln())).collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::INFINITY
    };
    let constant = samples.iter().map(|s| s.defect.norm() / s.eps.powf(expansion.delta)).fold(0.0, f64::max);
    let keys = expansion.keys();
    let fit_samples: Vec<(f64, C64)> = samples.iter().map(|s| (s.eps, s.value)).collect();
    let fit = fit_expansion(&fit_samples, &keys, &[expansion.delta])?;
    let rows = expansion
        .terms
        .iter()
        .zip(&fit.coefficients)
        .map(|(t, f)| ExpansionRow { p: t.p.clone(), j: t.j, predicted: t.coefficient, fitted: *f, residual: crate::currents::residual(*f, t.coefficient) })
        .collect();
    Ok(AsymptoticReport { slope_ok: slope >= expansion.delta - 0.1, expansion, samples, slope, constant, fit, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MellinReport {
    pub lambda: f64,
    /// `∫_0^{ε_max} ε^{λ−1} I(ε) dε`.
    pub transform: C64,
    /// `Γ(λ)/λ`.
    pub reference: C64,
    pub rel_err: f64,
    /// Size of the neglected `ε → 0` tail relative to the transform.
    pub tail: f64,
    pub tail_flag: bool,
    pub samples: usize,
}

const MELLIN_NODES: usize = 8;

/// With `ε = ε_max e^{−s}` the transform is `ε_max^λ ∫_0^∞ e^{−λs} I dε`;
/// unit panels in s up to `40/(λ − N)`.
pub fn mellin_check(gammas: &[Gamma], lambda: f64) -> Result<MellinReport, CutoffError> {
    let growth = gammas
        .iter()
        .map(|g| if g.integrand.chart.kappa == 0 { 0.0 } else { g.integrand.n_power as f64 })
        .fold(0.0, f64::max);
    let min = growth + 0.5;
    if !(lambda >= min) {
        return Err(CutoffError::LambdaTooSmall { lambda, min });
    }
    let eps_max = gammas.iter().map(|g| cutoff_sup(&g.integrand.chart)).fold(0.0, f64::max);
    let s_max = (40.0 / (lambda - growth)).ceil().max(4.0) as usize;
    let nodes: Vec<(f64, f64)> = (0..s_max).flat_map(|k| on_interval(MELLIN_NODES, k as f64, k as f64 + 1.0)).collect();
    let values: Vec<Result<C64, CutoffError>> = nodes.par_iter().map(|&(s, _)| cutoff_sum(gammas, eps_max * (-s).exp())).collect();
    let mut total = C64::new(0.0, 0.0);
    let mut last = 0.0;
    for (&(s, w), v) in nodes.iter().zip(values) {
        let term = v? * (w * (-lambda * s).exp());
        last = term.norm() / w;
        total += term;
    }
    let scale = eps_max.powf(lambda);
    let transform = total * scale;
    let tail = last * scale / (lambda - growth) / transform.norm().max(f64::MIN_POSITIVE);
    let mut reference = C64::new(0.0, 0.0);
    for g in gammas {
        reference += g.eval(C64::new(lambda, 0.0), C64::new(0.0, 0.0), None)? / lambda;
    }
    let tolerance = gammas.iter().map(|g| g.cfg.tolerance).fold(f64::INFINITY, f64::min);
    Ok(MellinReport {
        lambda,
        transform,
        reference,
        rel_err: (transform - reference).norm() / reference.norm(),
        tail,
        tail_flag: tail > tolerance,
        samples: nodes.len(),
    })
}

/// `|Γ(c + iT)|` for each T: the rapid decay along vertical lines is used,
/// not proved, by the contour arguments; this is a smoke test of it.
pub fn vertical_decay(gamma: &Gamma, c: f64, heights: &[f64]) -> Result<Vec<f64>, CutoffError> {
    let pts: Vec<(C64, C64)> = heights.iter().map(|&t| (C64::new(c, t), C64::new(0.0, 0.0))).collect();
    Ok(gamma.eval_many(&pts, None)?.into_iter().map(|v| v.norm()).collect())
}
