//! Tensor-product polar rules over polydiscs and coordinate slices.

use super::gauss::on_interval;
use super::{accepts, angular_count, error_model, Acc, Estimate, QuadratureConfig, QuadratureError, RadialFactor, RadialWeight, Source};
use crate::expr::{Expr, Tape, TapeScratch, C64};
use crate::forms::ChartSpec;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::sync::Arc;

/// Innermost graded radius kept as a Gauss panel; below it the weight is
/// integrated exactly.
const INNER_RADIUS: f64 = 1e-10;
const OUTER_PANELS: usize = 3;

/// Integration domain: a polydisc, some of whose variables may be frozen at
/// zero (a coordinate slice).
#[derive(Clone, Debug)]
pub struct Domain {
    pub radii: Vec<f64>,
    pub kappa: usize,
    pub fixed: Vec<bool>,
    /// Trigonometric degree hint per variable (see `Expr::angular_degree`).
    pub angular_degree: Vec<Option<u32>>,
}

impl Domain {
    pub fn polydisc(chart: &ChartSpec, integrands: &[&Expr]) -> Self {
        Domain::slice(chart, &[], integrands)
    }

    /// Variables listed in `zeroed` (zero based) are fixed at the origin.
    pub fn slice(chart: &ChartSpec, zeroed: &[usize], integrands: &[&Expr]) -> Self {
        let angular_degree = (0..chart.n)
            .map(|t| {
                integrands
                    .iter()
                    .map(|e| e.angular_degree(t))
                    .try_fold(0u32, |acc, d| d.map(|d| acc.max(d)))
            })
            .collect();
        Domain {
            radii: chart.radii.clone(),
            kappa: chart.kappa,
            fixed: (0..chart.n).map(|t| zeroed.contains(&t)).collect(),
            angular_degree,
        }
    }
}

/// One integral of a batch: source index and its radial weight.
#[derive(Clone, Debug)]
pub struct Job {
    pub source: usize,
    pub weight: RadialWeight,
}

#[derive(Clone, Copy)]
enum Cell {
    Gauss { u: f64, gw: f64 },
    Inner { u0: f64 },
}

fn cells(radius: f64, per_panel: usize, gamma: f64) -> Vec<(f64, Cell)> {
    let mut breaks = vec![1.0];
    for k in 1..=OUTER_PANELS {
        breaks.push(1.0 - 0.75 * k as f64 / OUTER_PANELS as f64);
    }
    let mut lo = 0.25;
    while radius * (lo / 4.0f64).powf(gamma) >= INNER_RADIUS {
        lo /= 4.0;
        breaks.push(lo);
    }
    // breaks descend from 1 to the innermost panel edge
    let mut out = Vec::new();
    let u0 = *breaks.last().unwrap();
    out.push((radius * (0.5 * u0).powf(gamma), Cell::Inner { u0 }));
    for pair in breaks.windows(2).rev() {
        let (b, a) = (pair[0], pair[1]);
        for (u, gw) in on_interval(per_panel, a, b) {
            out.push((radius * u.powf(gamma), Cell::Gauss { u, gw }));
        }
    }
    out
}

pub(crate) fn panel_count(radius: f64, gamma: f64) -> usize {
    let mut n = OUTER_PANELS;
    let mut lo = 0.25;
    while radius * (lo / 4.0f64).powf(gamma) >= INNER_RADIUS {
        lo /= 4.0;
        n += 1;
    }
    n
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫ r^a (log r)^j r dr` over one cell, divided by nothing: the weight the
/// frozen smooth factor is multiplied with.
fn cell_weight(radius: f64, gamma: f64, r: f64, cell: Cell, f: RadialFactor) -> C64 {
    let a2 = f.power + 2.0;
    match cell {
        Cell::Gauss { u, gw } => {
            let rp = if f.power == C64::new(0.0, 0.0) { C64::new(r * r, 0.0) } else { C64::new(r, 0.0).powc(a2) };
            let mut w = rp * (gw * gamma / u);
            if f.log_power > 0 {
                w *= r.ln().powi(f.log_power as i32);
            }
            w
        }
        Cell::Inner { u0 } => {
            let sp1 = a2 * gamma;
            let ln_r = radius.ln();
            let ln_u0 = u0.ln();
            let u0p = (sp1 * ln_u0).exp();
            let j = f.log_power;
            let mut total = C64::new(0.0, 0.0);
            for i in 0..=j {
                // ∫_0^{u0} u^σ (log u)^i du with σ + 1 = sp1
                let mut m = C64::new(0.0, 0.0);
                let mut falling = 1.0;
                for l in 0..=i {
                    if l > 0 {
                        falling *= (i - l + 1) as f64;
                    }
                    let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                    m += sign * falling * ln_u0.powi((i - l) as i32) / sp1.powi(l as i32 + 1);
                }
                m *= u0p;
                total += m * binom(j, i) * ln_r.powi((j - i) as i32) * gamma.powi(i as i32);
            }
            total * (a2 * ln_r).exp() * gamma
        }
    }
}

struct VarRule {
    points: Vec<C64>,
    /// Points per parallel chunk (one radial ring).
    chunk: usize,
    /// Weights per job, per point.
    w: Vec<Vec<C64>>,
}

fn var_rule(domain: &Domain, t: usize, jobs: &[Job], per_panel: usize, n_theta: usize, gamma: f64) -> VarRule {
    if domain.fixed[t] {
        return VarRule { points: vec![C64::new(0.0, 0.0)], chunk: 1, w: vec![vec![C64::new(1.0, 0.0)]; jobs.len()] };
    }
    let radius = domain.radii[t];
    let cs = cells(radius, per_panel, gamma);
    let mut points = Vec::with_capacity(cs.len() * n_theta);
    for &(r, _) in &cs {
        for k in 0..n_theta {
            points.push(C64::from_polar(r, TAU * k as f64 / n_theta as f64));
        }
    }
    let dtheta = TAU / n_theta as f64;
    let mut cache: Vec<(RadialFactor, Vec<C64>)> = Vec::new();
    let mut w = Vec::with_capacity(jobs.len());
    for job in jobs {
        let f = if t < domain.kappa { job.weight.factor(t) } else { RadialFactor::ONE };
        let radial = match cache.iter().find(|(g, _)| *g == f) {
            Some((_, v)) => v.clone(),
            None => {
                let v: Vec<C64> = cs.iter().map(|&(r, c)| cell_weight(radius, gamma, r, c, f) * dtheta).collect();
                cache.push((f, v.clone()));
                v
            }
        };
        let mut per_point = Vec::with_capacity(points.len());
        for wr in &radial {
            per_point.extend(std::iter::repeat_n(*wr, n_theta));
        }
        w.push(per_point);
    }
    VarRule { points, chunk: n_theta, w }
}

struct Scratch {
    tape: TapeScratch,
    vals: Vec<C64>,
    levels: Vec<Vec<Acc>>,
}

fn visit(t: usize, range: std::ops::Range<usize>, rules: &[VarRule], z: &mut [C64], sources: &[Source], jobs: &[Job], scratch: &mut Scratch, out: &mut [Acc]) {
    let rule = &rules[t];
    let last = t + 1 == rules.len();
    for p in range {
        z[t] = rule.points[p];
        if last {
            for (s, src) in sources.iter().enumerate() {
                scratch.vals[s] = src.tape.eval(z, &src.params, &mut scratch.tape);
            }
            for (b, job) in jobs.iter().enumerate() {
                let v = scratch.vals[job.source];
                if v != C64::new(0.0, 0.0) {
                    out[b].add(rule.w[b][p] * v);
                }
            }
        } else {
            let mut child = std::mem::take(&mut scratch.levels[t + 1]);
            child.iter_mut().for_each(|a| *a = Acc::default());
            visit(t + 1, 0..rules[t + 1].points.len(), rules, z, sources, jobs, scratch, &mut child);
            for b in 0..jobs.len() {
                out[b].add_weighted(rule.w[b][p], &child[b]);
            }
            scratch.levels[t + 1] = child;
        }
    }
}

fn tensor_sum(rules: &[VarRule], sources: &[Source], jobs: &[Job]) -> Vec<Acc> {
    let n = rules.len();
    let outer = &rules[0];
    let chunks = outer.points.len().div_ceil(outer.chunk);
    let partial: Vec<Vec<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Scratch {
                tape: TapeScratch::default(),
                vals: vec![C64::new(0.0, 0.0); sources.len()],
                levels: vec![vec![Acc::default(); jobs.len()]; n],
            };
            let mut z = vec![C64::new(0.0, 0.0); n];
            let mut out = vec![Acc::default(); jobs.len()];
            let lo = c * outer.chunk;
            let hi = (lo + outer.chunk).min(outer.points.len());
            visit(0, lo..hi, rules, &mut z, sources, jobs, &mut scratch, &mut out);
            out
        })
        .collect();
    let mut total = vec![Acc::default(); jobs.len()];
    for part in &partial {
        for (b, a) in part.iter().enumerate() {
            total[b].add_weighted(C64::new(1.0, 0.0), a);
        }
    }
    total
}

/// Integrates every job of a batch on shared nodes, refining all of them
/// until each meets the tolerance or the doubling budget is spent.
/// Non-converged jobs come back with `converged = false`.
pub fn integrate_batch(domain: &Domain, sources: &[Source], jobs: &[Job], cfg: &QuadratureConfig) -> Result<Vec<Estimate>, QuadratureError> {
    cfg.validate()?;
    for job in jobs {
        let singular = RadialWeight {
            factors: (0..domain.kappa).filter(|&t| !domain.fixed[t]).map(|t| job.weight.factor(t)).collect(),
        };
        singular.check()?;
        if job.source >= sources.len() {
            return Err(QuadratureError::Domain(format!("job refers to missing source {}", job.source)));
        }
    }
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    let n = domain.radii.len();
    let max_panels = (0..n).map(|t| panel_count(domain.radii[t], cfg.grading)).max().unwrap_or(1);
    let per_panel = cfg.radial_nodes.div_ceil(max_panels).max(2);
    let thetas: Vec<usize> = (0..n).map(|t| angular_count(cfg.angular_nodes, domain.angular_degree[t])).collect();
    let run = |pp: usize, scale: f64| {
        let rules: Vec<VarRule> = (0..n)
            .map(|t| {
                let nt = ((thetas[t] as f64 * scale) as usize).max(4);
                var_rule(domain, t, jobs, pp, nt + nt % 2, cfg.grading)
            })
            .collect();
        tensor_sum(&rules, sources, jobs)
    };
    let mut coarse = run((per_panel / 2).max(1), 0.5);
    let mut fine = run(per_panel, 1.0);
    let mut level = 0;
    loop {
        if fine.iter().any(|a| !(a.value().re.is_finite() && a.value().im.is_finite())) {
            return Err(QuadratureError::NonFinite);
        }
        let errs: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| error_model(f.value(), c.value(), f.abs)).collect();
        let ok: Vec<bool> = fine.iter().zip(&errs).map(|(f, e)| accepts(*e, f.value(), f.abs, cfg.tolerance)).collect();
        if ok.iter().all(|x| *x) || level >= cfg.max_doublings {
            return Ok(fine
                .iter()
                .zip(&coarse)
                .zip(errs.iter().zip(&ok))
                .map(|((f, c), (e, ok))| Estimate { value: f.value(), error: *e, scale: f.abs, previous: c.value(), converged: *ok, doublings: level })
                .collect());
        }
        level += 1;
        coarse = fine;
        let factor = 1usize << level;
        fine = run(per_panel * factor, factor as f64);
    }
}

/// `∫ weight · smooth dV` over the chart polydisc (Lebesgue measure).
pub fn integrate_polydisc(weight: &RadialWeight, smooth: &Expr, chart: &ChartSpec, cfg: &QuadratureConfig) -> Result<C64, QuadratureError> {
    let domain = Domain::polydisc(chart, &[smooth]);
    let sources = [Source::plain(Arc::new(Tape::compile(smooth)))];
    let jobs = [Job { source: 0, weight: weight.clone() }];
    integrate_batch(&domain, &sources, &jobs, cfg)?[0].into_result()
}

/// `∫ smooth dV'` over the slice `{z_i = 0 : i ∈ zeroed}` (zero based), in
/// Lebesgue measure on the remaining variables.
pub fn integrate_locus(zeroed: &[usize], smooth: &Expr, chart: &ChartSpec, cfg: &QuadratureConfig) -> Result<C64, QuadratureError> {
    if let Some(&bad) = zeroed.iter().find(|&&i| i >= chart.n) {
        return Err(QuadratureError::Domain(format!("locus index {} exceeds n = {}", bad + 1, chart.n)));
    }
    let tape = Tape::compile(smooth);
    if zeroed.len() == chart.n {
        let v = tape.eval_checked(&vec![C64::new(0.0, 0.0); chart.n], &[C64::new(0.0, 0.0); 2]).map_err(|_| QuadratureError::NonFinite)?;
        return Ok(v);
    }
    let domain = Domain::slice(chart, zeroed, &[smooth]);
    let sources = [Source::plain(Arc::new(tape))];
    let jobs = [Job { source: 0, weight: RadialWeight::none(chart.kappa) }];
    integrate_batch(&domain, &sources, &jobs, cfg)?[0].into_result()
}
