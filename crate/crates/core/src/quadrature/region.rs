//! Integration over the cut-off region `{‖s‖² > ε}` of a chart polydisc.
//!
//! The region is assumed radially star-shaped in each singular variable:
//! with all other coordinates fixed, `‖s‖²` crosses `ε` once as `r_t` grows.
//! Singular radii are innermost, `r_0` last, so each lower limit is found
//! with the outer coordinates already fixed.

use super::gauss::on_interval;
use super::polar::{integrate_batch, Domain, Job};
use super::{accepts, angular_count, error_model, Acc, Estimate, QuadratureConfig, QuadratureError, RadialWeight, Source};
use crate::expr::{Expr, Tape, TapeScratch, C64};
use crate::forms::ChartSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::sync::Arc;

const MONOTONE_SAMPLES: usize = 16;

struct Ctx<'a> {
    chart: &'a ChartSpec,
    weight: &'a RadialWeight,
    smooth: &'a Tape,
    norm: &'a Tape,
    flat: bool,
    eps: f64,
    /// Non-singular variable rules: (points, weights).
    outer: Vec<(Vec<C64>, Vec<C64>)>,
    n_theta: Vec<usize>,
    per_panel: usize,
}

struct Scratch {
    tape: TapeScratch,
    z: Vec<C64>,
    theta: Vec<f64>,
    r: Vec<f64>,
}

impl Ctx<'_> {
    fn norm_at(&self, s: &mut Scratch, t: usize, r: f64) -> f64 {
        // r_t = r, inner radii at their maxima, outer radii as already set
        for u in 0..self.chart.kappa {
            let ru = if u < t { self.chart.radii[u] } else if u == t { r } else { s.r[u] };
            s.z[u] = C64::from_polar(ru, s.theta[u]);
        }
        self.norm.eval(&s.z, &[C64::new(0.0, 0.0); 2], &mut s.tape).re
    }

    fn lower_limit(&self, s: &mut Scratch, t: usize) -> Result<Option<f64>, QuadratureError> {
        let big_r = self.chart.radii[t];
        if self.flat {
            let mut rest = 1.0;
            for u in 0..self.chart.kappa {
                if u == t {
                    continue;
                }
                let ru = if u < t { self.chart.radii[u] } else { s.r[u] };
                rest *= ru.powi(2 * self.chart.m[u] as i32);
            }
            if rest <= 0.0 {
                return Ok(None);
            }
            let lo = (self.eps / rest).powf(0.5 / self.chart.m[t] as f64);
            return Ok(if lo >= big_r { None } else { Some(lo) });
        }
        let mut prev_r = 0.0;
        let mut prev = -self.eps;
        let mut crossings = 0;
        let mut bracket = None;
        for k in 1..=MONOTONE_SAMPLES {
            let r = big_r * k as f64 / MONOTONE_SAMPLES as f64;
            let h = self.norm_at(s, t, r) - self.eps;
            if (h >= 0.0) != (prev >= 0.0) {
                crossings += 1;
                bracket.get_or_insert((prev_r, r));
            }
            prev = h;
            prev_r = r;
        }
        if crossings == 0 {
            return Ok(None);
        }
        if crossings > 1 {
            return Err(QuadratureError::NonMonotone { variable: t + 1, crossings });
        }
        let (mut a, mut b) = bracket.unwrap();
        while b - a > 1e-12 * big_r {
            let mid = 0.5 * (a + b);
            if self.norm_at(s, t, mid) >= self.eps {
                b = mid;
            } else {
                a = mid;
            }
        }
        Ok(Some(0.5 * (a + b)))
    }

    /// Integral over the remaining singular radii `r_t, r_{t-1}, …, r_0`.
    fn radii(&self, s: &mut Scratch, t: usize) -> Result<Acc, QuadratureError> {
        let mut acc = Acc::default();
        let Some(lo) = self.lower_limit(s, t)? else { return Ok(acc) };
        let big_r = self.chart.radii[t];
        let f = self.weight.factor(t);
        let mut a = lo;
        while a < big_r {
            let b = if 2.0 * a >= big_r * 0.999 { big_r } else { 2.0 * a };
            for (r, gw) in on_interval(self.per_panel, a, b) {
                s.r[t] = r;
                let w = f.at(r) * (gw * r);
                if t == 0 {
                    for u in 0..self.chart.kappa {
                        s.z[u] = C64::from_polar(s.r[u], s.theta[u]);
                    }
                    let v = self.smooth.eval(&s.z, &[C64::new(0.0, 0.0); 2], &mut s.tape);
                    acc.add(w * v);
                } else {
                    let inner = self.radii(s, t - 1)?;
                    acc.add_weighted(w, &inner);
                }
            }
            a = b;
        }
        Ok(acc)
    }

    /// Singular angles, then the radii.
    fn angles(&self, s: &mut Scratch, t: usize) -> Result<Acc, QuadratureError> {
        if t == self.chart.kappa {
            return self.radii(s, self.chart.kappa - 1);
        }
        let nt = self.n_theta[t];
        let w = C64::new(TAU / nt as f64, 0.0);
        let mut acc = Acc::default();
        for k in 0..nt {
            s.theta[t] = TAU * k as f64 / nt as f64;
            let inner = self.angles(s, t + 1)?;
            acc.add_weighted(w, &inner);
        }
        Ok(acc)
    }

    /// Non-singular variables outermost.
    fn outer(&self, s: &mut Scratch, t: usize) -> Result<Acc, QuadratureError> {
        if t == self.chart.n {
            return self.angles(s, 0);
        }
        let (pts, ws) = &self.outer[t - self.chart.kappa];
        let mut acc = Acc::default();
        for (p, w) in pts.iter().zip(ws) {
            s.z[t] = *p;
            let inner = self.outer(s, t + 1)?;
            acc.add_weighted(*w, &inner);
        }
        Ok(acc)
    }

    fn scratch(&self) -> Scratch {
        let n = self.chart.n;
        Scratch { tape: TapeScratch::default(), z: vec![C64::new(0.0, 0.0); n], theta: vec![0.0; n], r: vec![0.0; n] }
    }

    /// Splits the outermost loop across threads; partial sums are combined
    /// in index order.
    fn run(&self) -> Result<Acc, QuadratureError> {
        let kappa = self.chart.kappa;
        let (count, first_outer) = if self.chart.n > kappa { (self.outer[0].0.len(), true) } else { (self.n_theta[0], false) };
        let parts: Vec<Result<Acc, QuadratureError>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut s = self.scratch();
                if first_outer {
                    s.z[kappa] = self.outer[0].0[i];
                    let inner = self.outer(&mut s, kappa + 1)?;
                    let mut a = Acc::default();
                    a.add_weighted(self.outer[0].1[i], &inner);
                    Ok(a)
                } else {
                    let nt = self.n_theta[0];
                    s.theta[0] = TAU * i as f64 / nt as f64;
                    let inner = self.angles(&mut s, 1)?;
                    let mut a = Acc::default();
                    a.add_weighted(C64::new(TAU / nt as f64, 0.0), &inner);
                    Ok(a)
                }
            })
            .collect();
        let mut total = Acc::default();
        for p in parts {
            total.add_weighted(C64::new(1.0, 0.0), &p?);
        }
        Ok(total)
    }
}

/// Plain polar rule (weight 1) for one non-singular variable.
fn outer_rule(radius: f64, n_radial: usize, n_theta: usize) -> (Vec<C64>, Vec<C64>) {
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (r, gw) in on_interval(n_radial, 0.0, radius) {
        for k in 0..n_theta {
            pts.push(C64::from_polar(r, TAU * k as f64 / n_theta as f64));
            ws.push(C64::new(gw * r * TAU / n_theta as f64, 0.0));
        }
    }
    (pts, ws)
}

/// `∫_{‖s‖² > ε} weight · smooth dV` over the chart polydisc.
pub fn integrate_cutoff(eps: f64, weight: &RadialWeight, smooth: &Expr, chart: &ChartSpec, cfg: &QuadratureConfig) -> Result<Estimate, QuadratureError> {
    cfg.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(QuadratureError::Domain(format!("cut-off level must be positive, got {eps}")));
    }
    let smooth_tape = Tape::compile(smooth);
    let norm_tape = Tape::compile(&chart.norm_sq());
    if chart.kappa == 0 {
        return cutoff_without_singular(eps, smooth, &smooth_tape, &norm_tape, chart, cfg);
    }
    for (t, f) in weight.factors.iter().enumerate().take(chart.kappa) {
        if !f.power.re.is_finite() || !f.power.im.is_finite() {
            return Err(QuadratureError::NonIntegrable { variable: t + 1, power: f.power });
        }
    }
    let degrees: Vec<Option<u32>> = (0..chart.n).map(|t| smooth.angular_degree(t).and_then(|a| chart.norm_sq().angular_degree(t).map(|b| a.max(b)))).collect();
    let base_theta: Vec<usize> = degrees.iter().map(|d| angular_count(cfg.angular_nodes, *d)).collect();
    let base_panel = (cfg.radial_nodes / 8).max(8);
    let outer_radial = (cfg.radial_nodes / 4).max(8);
    let build = |scale: f64, panel: usize, radial: usize| {
        let n_theta: Vec<usize> = base_theta
            .iter()
            .map(|&b| {
                let v = ((b as f64 * scale) as usize).max(4);
                v + v % 2
            })
            .collect();
        let outer = (chart.kappa..chart.n).map(|t| outer_rule(chart.radii[t], radial, n_theta[t])).collect();
        Ctx {
            chart,
            weight,
            smooth: &smooth_tape,
            norm: &norm_tape,
            flat: chart.phi.is_zero(),
            eps,
            outer,
            n_theta,
            per_panel: panel,
        }
    };
    let mut coarse = build(0.5, base_panel / 2, outer_radial / 2).run()?;
    let mut fine = build(1.0, base_panel, outer_radial).run()?;
    let mut level = 0;
    loop {
        let v = fine.value();
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(QuadratureError::NonFinite);
        }
        let err = error_model(v, coarse.value(), fine.abs);
        let ok = accepts(err, v, fine.abs, cfg.tolerance);
        if ok || level >= cfg.max_doublings {
            return Ok(Estimate { value: v, error: err, scale: fine.abs, previous: coarse.value(), converged: ok, doublings: level });
        }
        level += 1;
        let k = 1usize << level;
        coarse = fine;
        fine = build(k as f64, base_panel * k, outer_radial * k).run()?;
    }
}

fn cutoff_without_singular(eps: f64, smooth: &Expr, smooth_tape: &Tape, norm_tape: &Tape, chart: &ChartSpec, cfg: &QuadratureConfig) -> Result<Estimate, QuadratureError> {
    let domain = Domain::polydisc(chart, &[smooth]);
    let mut above = 0usize;
    let mut below = 0usize;
    let mut scratch = TapeScratch::default();
    let zero = [C64::new(0.0, 0.0); 2];
    for z in sample_points(chart, 2048) {
        if norm_tape.eval(&z, &zero, &mut scratch).re >= eps {
            above += 1;
        } else {
            below += 1;
        }
    }
    match (above, below) {
        (_, 0) => {
            let sources = [Source::plain(Arc::new(smooth_tape.clone()))];
            let jobs = [Job { source: 0, weight: RadialWeight::none(0) }];
            Ok(integrate_batch(&domain, &sources, &jobs, cfg)?[0])
        }
        (0, _) => Ok(Estimate::exact(C64::new(0.0, 0.0))),
        _ => Err(QuadratureError::NoSingularCoordinate),
    }
}

/// Deterministic sample of the closed polydisc: the corner torus plus
/// pseudo-random interior points.
fn sample_points(chart: &ChartSpec, count: usize) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0c07);
    let mut out = Vec::with_capacity(count + 1);
    out.push(vec![C64::new(0.0, 0.0); chart.n]);
    for i in 0..count {
        out.push(
            (0..chart.n)
                .map(|t| {
                    let r = if i % 4 == 0 { chart.radii[t] } else { chart.radii[t] * rng.gen::<f64>().sqrt() };
                    C64::from_polar(r, TAU * rng.gen::<f64>())
                })
                .collect(),
        );
    }
    out
}

/// `sup ‖s‖²` over the polydisc, for the upper end of cut-off integrals.
/// Exact for `φ ≡ 0`; otherwise the maximum over a sample, nudged up by
/// `1e-3` relative so that the region is empty beyond it.
pub fn cutoff_sup(chart: &ChartSpec) -> f64 {
    if chart.phi.is_zero() {
        return (0..chart.kappa).map(|t| chart.radii[t].powi(2 * chart.m[t] as i32)).product();
    }
    let tape = Tape::compile(&chart.norm_sq());
    let mut scratch = TapeScratch::default();
    let zero = [C64::new(0.0, 0.0); 2];
    let mut best = 0.0f64;
    for z in sample_points(chart, 8192) {
        best = best.max(tape.eval(&z, &zero, &mut scratch).re);
    }
    best * (1.0 + 1e-3)
}
