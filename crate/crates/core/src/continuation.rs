//! Analytic continuation of
//! `Γ(λ, τ) = ∫ |z^m|^{2(λ−N)} e^{−λφ} e^{−τ(ψ−φ)} f dV`
//! where `f` is the Lebesgue density of `ω̃ ∧ ξ` times `e^{Nφ}`.
//!
//! Off the half-plane of absolute convergence, Γ is evaluated after moving
//! `P_M = ∏_t ∂_t^{(N+M)m_t}` and its conjugate onto the smooth factor:
//!
//! `Γ = h_M(λ) (λ+M)^{−2κ} ∫ |z^m|^{2(λ+M)} P_M P̄_M(e^{−λφ}e^{−τ(ψ−φ)} f) dV`.
//!
//! Laurent data at 0 come from exact Taylor coefficients of `h` combined with
//! log-weighted integrals, and independently from Cauchy sums on a circle.

use crate::expr::{apply_mixed_partial, Expr, OrderCapExceeded, Param, Tape, C64, DEFAULT_ORDER_CAP};
use crate::forms::{ChartSpec, Form, SingularForm, Word};
use crate::quadrature::{integrate_batch, Domain, Job, QuadratureConfig, QuadratureError, RadialFactor, RadialWeight, Source};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Margin kept between `Re` of every radial exponent and the integrability
/// edge.
const MARGIN: f64 = 0.1;
const POLE_GUARD: f64 = 1e-6;
const LAURENT_POINTS: usize = 64;
const RESIDUE_POINTS: usize = 32;
const MIN_RESIDUE_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuationError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    OrderCap(#[from] OrderCapExceeded),
    #[error("λ = {lambda} is within {distance:.3e} of the pole {pole}")]
    NearPole { lambda: C64, pole: f64, distance: f64 },
    #[error("integrand vanishes only to order ≈{found:.2} on |z{variable}| = R, but integration by parts needs {needed}")]
    InsufficientVanishing { variable: usize, needed: u32, found: f64 },
    #[error("ω ∧ ξ is not of top degree (bidegrees {0:?})")]
    NotTopDegree(Vec<(usize, usize)>),
    #[error("forms live on different dimensions ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("{0} is not a positive pole of this chart")]
    NotAPole(BigRational),
    #[error("residue circle radius {0:.2e} is below the minimum")]
    RadiusTooSmall(f64),
}

/// `constant / ∏ (λ − root)^{mult}` with rational data.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalMero {
    pub constant: BigRational,
    pub factors: Vec<(BigRational, u32)>,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

impl RationalMero {
    pub fn eval(&self, lambda: C64) -> C64 {
        let mut v = C64::new(to_f64(&self.constant), 0.0);
        for (root, mult) in &self.factors {
            v /= (lambda - to_f64(root)).powi(*mult as i32);
        }
        v
    }

    /// Exact Taylor coefficients `h^{(ℓ)}(0)/ℓ!` for `ℓ ≤ order`, by the
    /// recursion `(ℓ+1) h_{ℓ+1} = Σ_k h_{ℓ−k} g_k` with
    /// `g_k = Σ mult / root^{k+1}` the series of `h'/h`. `None` if 0 is a root.
    pub fn taylor(&self, order: usize) -> Option<Vec<BigRational>> {
        if self.factors.iter().any(|(r, _)| r.is_zero()) {
            return None;
        }
        let mut h0 = self.constant.clone();
        for (root, mult) in &self.factors {
            for _ in 0..*mult {
                h0 /= -root.clone();
            }
        }
        let g: Vec<BigRational> = (0..order)
            .map(|k| {
                self.factors.iter().fold(BigRational::zero(), |acc, (root, mult)| {
                    let mut p = BigRational::one();
                    for _ in 0..=k {
                        p *= root.clone();
                    }
                    acc + BigRational::from_integer(BigInt::from(*mult)) / p
                })
            })
            .collect();
        let mut h = vec![h0];
        for l in 0..order {
            let s = (0..=l).fold(BigRational::zero(), |acc, k| acc + &h[l - k] * &g[k]);
            h.push(s / BigRational::from_integer(BigInt::from(l + 1)));
        }
        Some(h)
    }
}

/// `h_M(λ) = ∏_i m_i^{−2} ∏_{j=1}^{(N+M)m_i−1} (m_i(λ+M) − j)^{−2}`.
pub fn h_factor(chart: &ChartSpec, n_power: u32, shift: u32) -> RationalMero {
    let mut constant = BigRational::one();
    let mut roots: BTreeMap<BigRational, u32> = BTreeMap::new();
    for &m in &chart.m {
        let m = m as i64;
        let top = (n_power as i64 + shift as i64) * m - 1;
        // m_i^{-2} and one m_i^{-2} per linear factor rewritten monic
        let count = 1 + top.max(0);
        for _ in 0..count {
            constant /= BigRational::from_integer(BigInt::from(m * m));
        }
        for j in 1..=top {
            *roots.entry(ratio(j, m) - BigRational::from_integer(BigInt::from(shift))).or_insert(0) += 2;
        }
    }
    RationalMero { constant, factors: roots.into_iter().collect() }
}

/// Positive poles `p = j/m_i` (`1 ≤ j ≤ N m_i − 1`) with multiplicity
/// counts `ℓ_p = #{(i, j) : j/m_i = p}`.
pub fn poles(chart: &ChartSpec, n_power: u32) -> Vec<(BigRational, u32)> {
    let mut out: BTreeMap<BigRational, u32> = BTreeMap::new();
    for &m in &chart.m {
        for j in 1..(n_power as i64 * m as i64) {
            *out.entry(ratio(j, m as i64)).or_insert(0) += 1;
        }
    }
    out.into_iter().collect()
}

/// Distance from λ to the nearest point of the polar set
/// `{k/m_i : k ≤ N m_i − 1}`.
fn pole_distance(chart: &ChartSpec, n_power: u32, lambda: C64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &m in &chart.m {
        let m = m as f64;
        let top = n_power as f64 * m - 1.0;
        let k = (lambda.re * m).round().min(top);
        for kk in [k - 1.0, k, k + 1.0] {
            if kk > top {
                continue;
            }
            let p = kk / m;
            let d = (lambda - p).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
    }
    best
}

/// The smooth data of one chart term.
#[derive(Clone, Debug)]
pub struct Integrand {
    pub chart: ChartSpec,
    /// `f`: Lebesgue density of `ω̃ ∧ ξ`, times `e^{Nφ}`.
    pub density: Expr,
    pub n_power: u32,
}

impl Integrand {
    pub fn new(chart: &ChartSpec, omega: &SingularForm, xi: &Form) -> Result<Self, ContinuationError> {
        if omega.n() != chart.n || xi.n() != chart.n {
            return Err(ContinuationError::Dimension(omega.n().max(xi.n()), chart.n));
        }
        let top = omega.numerator.wedge(xi);
        let top_word = Word::top(chart.n);
        // wedge overflow only marks terms that vanish identically
        if top.terms().any(|(w, _)| *w != top_word) {
            return Err(ContinuationError::NotTopDegree(top.bidegrees()));
        }
        let mut density = top.lebesgue_density();
        if omega.denom_power > 0 && !chart.phi.is_zero() {
            density = &density * &Expr::exp(chart.phi.scale(C64::new(omega.denom_power as f64, 0.0)));
        }
        Ok(Integrand { chart: chart.clone(), density: density.simplify(), n_power: omega.denom_power })
    }

    pub fn from_density(chart: &ChartSpec, density: Expr, n_power: u32) -> Self {
        Integrand { chart: chart.clone(), density: density.simplify(), n_power }
    }

    /// The same density measured against the second metric: φ replaced by ψ.
    pub fn with_metric(&self, phi: &Expr) -> Result<Self, ContinuationError> {
        let chart = self.chart.with_weights(phi.clone(), self.chart.psi.clone()).map_err(|e| QuadratureError::Domain(e.to_string()))?;
        Ok(Integrand { chart, density: self.density.clone(), n_power: self.n_power })
    }

    /// Γ is entire near 0 when there is no singular denominator.
    pub fn is_holomorphic(&self) -> bool {
        self.n_power == 0 || self.chart.kappa == 0
    }

    /// `e^{−λφ} e^{−τ(ψ−φ)} f` with λ, τ symbolic.
    fn weighted(&self) -> Expr {
        let c = &self.chart;
        let lam = Expr::param(Param::Lambda);
        let tau = Expr::param(Param::Tau);
        let arg = -(&(&lam * &c.phi) + &(&tau * &(&c.psi - &c.phi)));
        (&Expr::exp(arg) * &self.density).simplify()
    }

    fn orders(&self, shift: u32) -> Vec<(u32, u32)> {
        (0..self.chart.n)
            .map(|t| {
                if t < self.chart.kappa {
                    let o = (self.n_power + shift) * self.chart.m[t];
                    (o, o)
                } else {
                    (0, 0)
                }
            })
            .collect()
    }
}

/// How Γ is evaluated at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Path {
    Direct,
    Parts(u32),
}

/// Direct whenever every `m_t(Re λ − N) > −1 + margin`; otherwise the
/// smallest M with `m_t Re(λ + M) > −1 + margin`.
pub fn select_path(chart: &ChartSpec, n_power: u32, lambda: C64) -> Path {
    if n_power == 0 && chart.kappa == 0 || chart.kappa == 0 {
        return Path::Direct;
    }
    let edge = -1.0 + MARGIN;
    if chart.m.iter().all(|&m| m as f64 * (lambda.re - n_power as f64) > edge) {
        return Path::Direct;
    }
    let mut shift = 0u32;
    while !chart.m.iter().all(|&m| m as f64 * (lambda.re + shift as f64) > edge) {
        shift += 1;
    }
    Path::Parts(shift)
}

/// Evaluator with per-path caches of the differentiated integrand.
pub struct Gamma {
    pub integrand: Integrand,
    pub cfg: QuadratureConfig,
    tapes: Mutex<HashMap<Path, (Expr, Arc<Tape>)>>,
    vanishing: Mutex<HashMap<u32, Result<(), ContinuationError>>>,
}

impl Gamma {
    pub fn new(integrand: Integrand, cfg: QuadratureConfig) -> Self {
        Gamma { integrand, cfg, tapes: Mutex::new(HashMap::new()), vanishing: Mutex::new(HashMap::new()) }
    }

    fn tape(&self, path: Path) -> Result<(Expr, Arc<Tape>), ContinuationError> {
        if let Some(t) = self.tapes.lock().unwrap().get(&path) {
            return Ok(t.clone());
        }
        let base = self.integrand.weighted();
        let e = match path {
            Path::Direct => base,
            Path::Parts(shift) => {
                self.check_vanishing(shift)?;
                apply_mixed_partial(&base, &self.integrand.orders(shift), DEFAULT_ORDER_CAP)?
            }
        };
        let entry = (e.clone(), Arc::new(Tape::compile(&e)));
        self.tapes.lock().unwrap().insert(path, entry.clone());
        Ok(entry)
    }

    /// Moving `P_M P̄_M` across needs `f` to vanish to order `2(N+M)m_t` on
    /// each boundary circle `|z_t| = R_t`.
    pub fn check_vanishing(&self, shift: u32) -> Result<(), ContinuationError> {
        if let Some(r) = self.vanishing.lock().unwrap().get(&shift) {
            return r.clone();
        }
        let ig = &self.integrand;
        let needed: Vec<u32> = (0..ig.chart.kappa).map(|t| 2 * (ig.n_power + shift) * ig.chart.m[t]).collect();
        let r = check_boundary_order(&ig.chart, &ig.density, &needed);
        self.vanishing.lock().unwrap().insert(shift, r.clone());
        r
    }

    fn prefactor(&self, path: Path, lambda: C64) -> C64 {
        match path {
            Path::Direct => C64::new(1.0, 0.0),
            Path::Parts(shift) => {
                let h = h_factor(&self.integrand.chart, self.integrand.n_power, shift).eval(lambda);
                h / (lambda + shift as f64).powi(2 * self.integrand.chart.kappa as i32)
            }
        }
    }

    fn weight(&self, path: Path, lambda: C64) -> RadialWeight {
        let c = &self.integrand.chart;
        let exponent = match path {
            Path::Direct => lambda - self.integrand.n_power as f64,
            Path::Parts(shift) => lambda + shift as f64,
        };
        RadialWeight { factors: c.m.iter().map(|&m| RadialFactor::new(exponent * (2.0 * m as f64), 0)).collect() }
    }

    /// Γ(λ, τ). Rejects λ within 1e−6 of the polar set.
    pub fn eval(&self, lambda: C64, tau: C64, shift: Option<u32>) -> Result<C64, ContinuationError> {
        let ig = &self.integrand;
        if !ig.chart.m.is_empty() {
            if let Some((d, p)) = pole_distance(&ig.chart, ig.n_power, lambda) {
                if d < POLE_GUARD {
                    return Err(ContinuationError::NearPole { lambda, pole: p, distance: d });
                }
            }
        }
        Ok(self.eval_many(&[(lambda, tau)], shift)?[0])
    }

    /// Γ at many points, batched per evaluation path. Only exact pole hits
    /// are rejected (as non-finite values).
    pub fn eval_many(&self, points: &[(C64, C64)], shift: Option<u32>) -> Result<Vec<C64>, ContinuationError> {
        let chart = &self.integrand.chart;
        let paths: Vec<Path> = points
            .iter()
            .map(|(l, _)| match shift {
                Some(s) if chart.kappa > 0 && self.integrand.n_power + s > 0 => Path::Parts(s),
                _ => select_path(chart, self.integrand.n_power, *l),
            })
            .collect();
        let mut groups: BTreeMap<Path, Vec<usize>> = BTreeMap::new();
        for (i, p) in paths.iter().enumerate() {
            groups.entry(*p).or_default().push(i);
        }
        let mut out = vec![C64::new(0.0, 0.0); points.len()];
        for (path, idx) in groups {
            let (expr, tape) = self.tape(path)?;
            let domain = Domain::polydisc(chart, &[&expr]);
            let shared = !tape.uses_params();
            let sources: Vec<Source> = if shared {
                vec![Source::plain(tape.clone())]
            } else {
                idx.iter().map(|&i| Source::new(tape.clone(), points[i].0, points[i].1)).collect()
            };
            let jobs: Vec<Job> = idx
                .iter()
                .enumerate()
                .map(|(b, &i)| Job { source: if shared { 0 } else { b }, weight: self.weight(path, points[i].0) })
                .collect();
            let ests = integrate_batch(&domain, &sources, &jobs, &self.cfg)?;
            for (est, &i) in ests.into_iter().zip(&idx) {
                let v = self.prefactor(path, points[i].0) * est.into_result()?;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(QuadratureError::NonFinite.into());
                }
                out[i] = v;
            }
        }
        Ok(out)
    }
}

/// Estimates the vanishing order of `f` on `|z_t| = R_t` from the ratio of
/// values at distances `h` and `h/2` inside the boundary.
fn check_boundary_order(chart: &ChartSpec, f: &Expr, needed: &[u32]) -> Result<(), ContinuationError> {
    const H: f64 = 1e-2;
    const TINY: f64 = 1e-200;
    let tape = Tape::compile(f);
    let zero = [C64::new(0.0, 0.0); 2];
    for (t, &need) in needed.iter().enumerate() {
        let radius = chart.radii[t];
        let mut z: Vec<C64> = (0..chart.n).map(|s| C64::from_polar(0.37 * chart.radii[s], 0.7 + s as f64)).collect();
        for k in 0..8 {
            let theta = TAU * (k as f64 + 0.25) / 8.0;
            z[t] = C64::from_polar(radius * (1.0 - H), theta);
            let far = tape.eval_checked(&z, &zero).map(|v| v.norm()).unwrap_or(0.0);
            z[t] = C64::from_polar(radius * (1.0 - H / 2.0), theta);
            let near = tape.eval_checked(&z, &zero).map(|v| v.norm()).unwrap_or(0.0);
            if near <= TINY || far <= TINY {
                continue;
            }
            let order = (far / near).log2();
            if order < need as f64 - 0.25 {
                return Err(ContinuationError::InsufficientVanishing { variable: t + 1, needed: need, found: order });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaurentMethod {
    Structural,
    Contour,
}

/// Coefficients `c_j` of `λ^{−j}` at λ = 0, indexed by j = 0..=2κ.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentData {
    pub kappa_effective: usize,
    pub coefficients: Vec<C64>,
    pub threshold: f64,
    pub method: LaurentMethod,
}

impl LaurentData {
    fn new(coefficients: Vec<C64>, method: LaurentMethod) -> Self {
        let threshold = 1e-8 * (1.0 + coefficients[0].norm());
        let kappa_effective = (0..coefficients.len()).rev().find(|&j| coefficients[j].norm() > threshold).unwrap_or(0);
        LaurentData { kappa_effective, coefficients, threshold, method }
    }

    pub fn c(&self, j: usize) -> C64 {
        self.coefficients.get(j).copied().unwrap_or_default()
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |a, i| a * i as f64)
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Compositions of `total` into `parts` positive integers, lexicographic.
fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Plain integral `∫ f dV` (the value of Γ at 0 when Γ is entire there).
fn plain_integral(ig: &Integrand, cfg: &QuadratureConfig) -> Result<C64, ContinuationError> {
    let tape = Arc::new(Tape::compile(&ig.density));
    let domain = Domain::polydisc(&ig.chart, &[&ig.density]);
    let jobs = [Job { source: 0, weight: RadialWeight::none(ig.chart.kappa) }];
    Ok(integrate_batch(&domain, &[Source::plain(tape)], &jobs, cfg)?[0].into_result()?)
}

/// Table `I_{k,r}` for `κ ≤ k ≤ 2κ`, `0 ≤ r ≤ k − κ`; entries outside are 0.
fn ikr_table(ig: &Integrand, cfg: &QuadratureConfig) -> Result<Vec<Vec<C64>>, ContinuationError> {
    let c = &ig.chart;
    let kappa = c.kappa;
    let mut table = vec![vec![C64::new(0.0, 0.0); 2 * kappa + 1]; 2 * kappa + 1];
    check_boundary_order(c, &ig.density, &(0..kappa).map(|t| 2 * ig.n_power * c.m[t]).collect::<Vec<_>>())?;
    let orders = ig.orders(0);
    let mut sources = Vec::new();
    let mut exprs = Vec::new();
    let mut source_of_r = Vec::new();
    for r in 0..=kappa {
        let base = if r == 0 { ig.density.clone() } else { &c.phi.pow(r as i32) * &ig.density };
        let e = apply_mixed_partial(&base.simplify(), &orders, DEFAULT_ORDER_CAP)?;
        if e.is_zero() {
            source_of_r.push(None);
            continue;
        }
        source_of_r.push(Some(sources.len()));
        sources.push(Source::plain(Arc::new(Tape::compile(&e))));
        exprs.push(e);
    }
    let mut jobs = Vec::new();
    let mut keys = Vec::new();
    for k in kappa..=2 * kappa {
        for r in 0..=(k - kappa) {
            let Some(s) = source_of_r[r] else { continue };
            let len = (k - r) as u32;
            for alpha in compositions(len, kappa) {
                let coeff = alpha.iter().enumerate().fold(factorial(len), |acc, (t, &a)| acc * (2.0 * c.m[t] as f64).powi(a as i32) / factorial(a));
                let weight = RadialWeight { factors: alpha.iter().map(|&a| RadialFactor::new(C64::new(0.0, 0.0), a)).collect() };
                jobs.push(Job { source: s, weight });
                keys.push((k, r, coeff));
            }
        }
    }
    if jobs.is_empty() {
        return Ok(table);
    }
    let refs: Vec<&Expr> = exprs.iter().collect();
    let domain = Domain::polydisc(c, &refs);
    let ests = integrate_batch(&domain, &sources, &jobs, cfg)?;
    for (est, (k, r, coeff)) in ests.into_iter().zip(keys) {
        table[k][r] += est.into_result()? * coeff;
    }
    Ok(table)
}

/// `I_{k,r}`: log-weighted integral of `P P̄(φ^r f)`; exactly 0 when
/// `k − r < κ`.
pub fn i_kr(ig: &Integrand, k: usize, r: usize, cfg: &QuadratureConfig) -> Result<C64, ContinuationError> {
    let kappa = ig.chart.kappa;
    if r > k || k < r + kappa || k > 2 * kappa || ig.is_holomorphic() {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(ikr_table(ig, cfg)?[k][r])
}

/// Laurent coefficients at 0 from `c_j = Σ_ℓ h_ℓ I^{(k)}(0)/k!`,
/// `k = 2κ − j − ℓ`, with `I^{(k)}(0) = Σ_r C(k,r)(−1)^r I_{k,r}`.
pub fn laurent_at_zero(ig: &Integrand, cfg: &QuadratureConfig) -> Result<LaurentData, ContinuationError> {
    let kappa = ig.chart.kappa;
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * kappa + 1];
    if ig.is_holomorphic() {
        coeffs[0] = plain_integral(ig, cfg)?;
        return Ok(LaurentData::new(coeffs, LaurentMethod::Structural));
    }
    let table = ikr_table(ig, cfg)?;
    let h: Vec<f64> = h_factor(&ig.chart, ig.n_power, 0)
        .taylor(2 * kappa)
        .expect("h has no root at 0 for M = 0")
        .iter()
        .map(to_f64)
        .collect();
    let derivs: Vec<C64> = (0..=2 * kappa)
        .map(|k| (0..=k).map(|r| table[k][r] * (binomial(k as u32, r as u32) * if r % 2 == 0 { 1.0 } else { -1.0 })).sum())
        .collect();
    for (j, c) in coeffs.iter_mut().enumerate() {
        for (l, hl) in h.iter().enumerate().take(2 * kappa - j + 1) {
            let k = 2 * kappa - j - l;
            *c += derivs[k] * (hl / factorial(k as u32));
        }
    }
    Ok(LaurentData::new(coeffs, LaurentMethod::Structural))
}

/// Circle radius for sampling around 0: inside half the gap to ±1/max m.
pub fn laurent_radius(chart: &ChartSpec) -> f64 {
    0.1f64.min(0.5 / chart.max_m() as f64)
}

/// Laurent coefficients at 0 by discrete Cauchy sums of Γ on a circle.
pub fn laurent_contour_check(gamma: &Gamma) -> Result<LaurentData, ContinuationError> {
    let rho = laurent_radius(&gamma.integrand.chart);
    let kappa = gamma.integrand.chart.kappa;
    let lambdas: Vec<C64> = (0..LAURENT_POINTS).map(|k| C64::from_polar(rho, TAU * (k as f64 + 0.5) / LAURENT_POINTS as f64)).collect();
    let points: Vec<(C64, C64)> = lambdas.iter().map(|&l| (l, C64::new(0.0, 0.0))).collect();
    let values = gamma.eval_many(&points, None)?;
    let coeffs = (0..=2 * kappa)
        .map(|j| lambdas.iter().zip(&values).map(|(l, v)| v * l.powi(j as i32)).sum::<C64>() / LAURENT_POINTS as f64)
        .collect();
    Ok(LaurentData::new(coeffs, LaurentMethod::Contour))
}

/// Taylor data of `g(λ) = (λ−p)^{2ℓ_p} Γ(λ)/λ` at a positive pole.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueData {
    pub pole: BigRational,
    pub ell: u32,
    /// `c_k` for `k = 0..2ℓ_p`.
    pub coefficients: Vec<C64>,
    pub radius: f64,
}

/// Default sampling radius around p: `0.05·min(1, distance to the nearest
/// other point of the polar set, 0 included)`.
pub fn residue_radius(chart: &ChartSpec, n_power: u32, p: &BigRational) -> f64 {
    let pf = to_f64(p);
    let mut gap = pf;
    for &m in &chart.m {
        let top = n_power as i64 * m as i64 - 1;
        let k = (pf * m as f64).round() as i64;
        for kk in [k - 1, k + 1] {
            if kk <= top {
                gap = gap.min((pf - kk as f64 / m as f64).abs());
            }
        }
    }
    0.05 * gap.min(1.0)
}

pub fn residue_at(gamma: &Gamma, p: &BigRational, radius: Option<f64>) -> Result<ResidueData, ContinuationError> {
    let ig = &gamma.integrand;
    let ell = poles(&ig.chart, ig.n_power)
        .into_iter()
        .find(|(q, _)| q == p)
        .map(|(_, l)| l)
        .ok_or_else(|| ContinuationError::NotAPole(p.clone()))?;
    if !p.is_positive() {
        return Err(ContinuationError::NotAPole(p.clone()));
    }
    residue_with(gamma, p, ell, radius)
}

/// As [`residue_at`] with a caller-chosen `ℓ`, which may exceed the pole
/// order at p (or p may be a regular point); used to add chart terms whose
/// pole orders differ.
pub fn residue_with(gamma: &Gamma, p: &BigRational, ell: u32, radius: Option<f64>) -> Result<ResidueData, ContinuationError> {
    let ig = &gamma.integrand;
    let rho = radius.unwrap_or_else(|| residue_radius(&ig.chart, ig.n_power, p));
    if rho < MIN_RESIDUE_RADIUS {
        return Err(ContinuationError::RadiusTooSmall(rho));
    }
    let pf = to_f64(p);
    let offsets: Vec<C64> = (0..RESIDUE_POINTS).map(|k| C64::from_polar(rho, TAU * (k as f64 + 0.5) / RESIDUE_POINTS as f64)).collect();
    let points: Vec<(C64, C64)> = offsets.iter().map(|d| (d + pf, C64::new(0.0, 0.0))).collect();
    let values = gamma.eval_many(&points, None)?;
    let order = 2 * ell as i32;
    let g: Vec<C64> = offsets.iter().zip(&values).map(|(d, v)| d.powi(order) * v / (d + pf)).collect();
    let coefficients = (0..order)
        .map(|k| offsets.iter().zip(&g).map(|(d, gv)| gv * d.powi(-k)).sum::<C64>() / RESIDUE_POINTS as f64)
        .collect();
    Ok(ResidueData { pole: p.clone(), ell, coefficients, radius: rho })
}

/// `sup |(λ−p)^{2ℓ_p} Γ(λ)|` over a circle of the given radius around p.
pub fn pole_order_sup(gamma: &Gamma, p: &BigRational, ell: u32, radius: f64) -> Result<f64, ContinuationError> {
    let pf = to_f64(p);
    let offsets: Vec<C64> = (0..RESIDUE_POINTS).map(|k| C64::from_polar(radius, TAU * (k as f64 + 0.5) / RESIDUE_POINTS as f64)).collect();
    let points: Vec<(C64, C64)> = offsets.iter().map(|d| (d + pf, C64::new(0.0, 0.0))).collect();
    let values = gamma.eval_many(&points, None)?;
    Ok(offsets.iter().zip(&values).map(|(d, v)| (d.powi(2 * ell as i32) * v).norm()).fold(0.0, f64::max))
}
