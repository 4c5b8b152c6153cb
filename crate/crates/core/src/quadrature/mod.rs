//! Numerical integration over polydiscs, coordinate slices and cut-off
//! regions, for smooth factors times radial power/log singularities.
//!
//! Each variable is integrated in polar coordinates `z_t = r_t e^{iθ_t}`:
//! trapezoid in θ, and Gauss–Legendre in `u` with `r = R u^γ` on panels that
//! shrink geometrically toward the origin. The innermost cell is integrated
//! exactly against the weight with the smooth factor frozen. Sums are
//! compensated and always taken in the same order, so results are
//! bit-reproducible for any thread count.

mod gauss;
mod polar;
mod region;

use crate::expr::{Tape, C64};
use std::sync::Arc;
use thiserror::Error;

pub use gauss::{legendre, on_interval};
pub use polar::{integrate_batch, integrate_locus, integrate_polydisc, Domain, Job};
pub use region::{cutoff_sup, integrate_cutoff};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Radial nodes per variable, spread over the graded panels.
    pub radial_nodes: usize,
    /// Angular trapezoid nodes per variable (a floor; raised for high
    /// trigonometric degree).
    pub angular_nodes: usize,
    /// Grading exponent γ in `r = R u^γ`.
    pub grading: f64,
    /// Relative target on `|Q|` plus the absolute sum `Σ|w f|`.
    pub tolerance: f64,
    pub max_doublings: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { radial_nodes: 96, angular_nodes: 64, grading: 3.0, tolerance: 1e-9, max_doublings: 4 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), QuadratureError> {
        if self.radial_nodes == 0 || self.angular_nodes == 0 {
            return Err(QuadratureError::InvalidConfig("node counts must be positive".into()));
        }
        if !(self.grading >= 1.0 && self.grading.is_finite()) {
            return Err(QuadratureError::InvalidConfig(format!("grading must be >= 1, got {}", self.grading)));
        }
        if !(self.tolerance > 0.0) {
            return Err(QuadratureError::InvalidConfig(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// `r^{power} (log r)^{log_power}` for one singular variable; the polar
/// measure's extra `r` is not included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialFactor {
    pub power: C64,
    pub log_power: u32,
}

impl RadialFactor {
    pub const ONE: RadialFactor = RadialFactor { power: C64 { re: 0.0, im: 0.0 }, log_power: 0 };

    pub fn new(power: C64, log_power: u32) -> Self {
        RadialFactor { power, log_power }
    }

    #[inline]
    pub fn at(&self, r: f64) -> C64 {
        let mut v = if self.power == C64::new(0.0, 0.0) { C64::new(1.0, 0.0) } else { C64::new(r, 0.0).powc(self.power) };
        if self.log_power > 0 {
            v *= r.ln().powi(self.log_power as i32);
        }
        v
    }
}

/// Radial weight per singular variable `t < κ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialWeight {
    pub factors: Vec<RadialFactor>,
}

impl RadialWeight {
    pub fn none(kappa: usize) -> Self {
        RadialWeight { factors: vec![RadialFactor::ONE; kappa] }
    }

    pub fn uniform(kappa: usize, power: C64, log_power: u32) -> Self {
        RadialWeight { factors: vec![RadialFactor::new(power, log_power); kappa] }
    }

    pub fn factor(&self, t: usize) -> RadialFactor {
        self.factors.get(t).copied().unwrap_or(RadialFactor::ONE)
    }

    /// Integrability over the disc: `Re power > −2` (i.e. `> −1` once the
    /// polar measure's `r` is absorbed).
    pub fn check(&self) -> Result<(), QuadratureError> {
        for (t, f) in self.factors.iter().enumerate() {
            if !(f.power.re > -2.0) || !f.power.im.is_finite() {
                return Err(QuadratureError::NonIntegrable { variable: t + 1, power: f.power });
            }
        }
        Ok(())
    }
}

/// A compiled integrand with fixed parameter values.
#[derive(Clone)]
pub struct Source {
    pub tape: Arc<Tape>,
    pub params: [C64; 2],
}

impl Source {
    pub fn new(tape: Arc<Tape>, lambda: C64, tau: C64) -> Self {
        Source { tape, params: [lambda, tau] }
    }

    pub fn plain(tape: Arc<Tape>) -> Self {
        Source::new(tape, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }
}

/// A quadrature value with its error model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: C64,
    /// Estimated absolute error.
    pub error: f64,
    /// `Σ|w f|`, the scale the tolerance is measured against.
    pub scale: f64,
    /// Value at the previous resolution.
    pub previous: C64,
    pub converged: bool,
    pub doublings: u32,
}

impl Estimate {
    pub fn exact(value: C64) -> Self {
        Estimate { value, error: 0.0, scale: value.norm(), previous: value, converged: true, doublings: 0 }
    }

    pub fn into_result(self) -> Result<C64, QuadratureError> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(QuadratureError::NotConverged { previous: self.previous, last: self.value, doublings: self.doublings })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("radial weight for z{variable} has power {power}; Re power must exceed -2")]
    NonIntegrable { variable: usize, power: C64 },
    #[error("invalid quadrature config: {0}")]
    InvalidConfig(String),
    #[error("quadrature did not converge after {doublings} doublings (last {last}, previous {previous})")]
    NotConverged { previous: C64, last: C64, doublings: u32 },
    #[error("integrand is not finite on the quadrature grid")]
    NonFinite,
    #[error("cut-off boundary is not radially monotone in z{variable} (found {crossings} crossings)")]
    NonMonotone { variable: usize, crossings: usize },
    #[error("cut-off region is not radial: the chart has no singular coordinates and ‖s‖² crosses ε")]
    NoSingularCoordinate,
    #[error("{0}")]
    Domain(String),
}

/// Neumaier-compensated complex accumulator.
#[derive(Clone, Copy, Default, Debug)]
pub(crate) struct Acc {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
    pub abs: f64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl Acc {
    #[inline]
    pub fn add(&mut self, v: C64) {
        neumaier(&mut self.re, &mut self.re_c, v.re);
        neumaier(&mut self.im, &mut self.im_c, v.im);
        self.abs += v.norm();
    }

    #[inline]
    pub fn add_weighted(&mut self, w: C64, inner: &Acc) {
        let v = w * inner.value();
        neumaier(&mut self.re, &mut self.re_c, v.re);
        neumaier(&mut self.im, &mut self.im_c, v.im);
        self.abs += w.norm() * inner.abs;
    }

    #[inline]
    pub fn value(&self) -> C64 {
        C64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

/// Error model for rules that converge geometrically in the node count: at
/// half resolution the error is about the square root (relative to scale)
/// of the full-resolution error, so the difference of the two bounds the
/// coarse error and its square bounds the fine one. Large differences are
/// taken at face value.
pub(crate) fn error_model(fine: C64, coarse: C64, scale: f64) -> f64 {
    let diff = (fine - coarse).norm();
    let s = scale.max(fine.norm()).max(f64::MIN_POSITIVE);
    let rel = diff / s;
    if rel > 1e-3 {
        diff
    } else {
        (10.0 * rel * rel).max(4.0 * f64::EPSILON) * s
    }
}

pub(crate) fn accepts(e: f64, value: C64, scale: f64, tol: f64) -> bool {
    // an integrand that vanishes on every node is exactly zero
    (scale == 0.0 && value.norm() == 0.0) || e <= tol * scale.max(value.norm())
}

/// Angular trapezoid count: even, at least `4·degree`, floor `base`.
pub(crate) fn angular_count(base: usize, degree: Option<u32>) -> usize {
    let need = degree.map(|d| 4 * d as usize).unwrap_or(0).max(base).max(4);
    need + need % 2
}
