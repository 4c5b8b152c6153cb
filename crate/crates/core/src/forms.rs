//! Bigraded differential forms on a chart, singular forms `ω̃/‖s‖^{2N}` and
//! the chart data that defines `‖s‖`.
//!
//! A basis word `dz_J ∧ dz̄_K` is stored as two bitmasks and always read in
//! the canonical order: increasing `dz` indices, then increasing `dz̄`.

use crate::expr::{self, Expr, ParseError, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Largest supported chart dimension.
pub const MAX_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word {
    pub dz: u32,
    pub dzb: u32,
}

impl Word {
    pub const EMPTY: Word = Word { dz: 0, dzb: 0 };

    pub fn top(n: usize) -> Word {
        let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        Word { dz: all, dzb: all }
    }

    pub fn p(self) -> usize {
        self.dz.count_ones() as usize
    }

    pub fn q(self) -> usize {
        self.dzb.count_ones() as usize
    }
}

/// `(−1)^{#{(a, b) : a ∈ A, b ∈ B, a > b}}`
fn merge_sign(a: u32, b: u32) -> i32 {
    let mut count = 0;
    let mut rest = b;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        rest &= rest - 1;
        let above = if bit == 31 { 0 } else { a & !((1u32 << (bit + 1)) - 1) };
        count += above.count_ones();
    }
    if count % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sign and word of `(dz_J∧dz̄_K) ∧ (dz_J'∧dz̄_K')`, or `None` on a repeat.
fn wedge_words(x: Word, y: Word) -> Option<(i32, Word)> {
    if x.dz & y.dz != 0 || x.dzb & y.dzb != 0 {
        return None;
    }
    let cross = if (x.q() * y.p()).is_multiple_of(2) { 1 } else { -1 };
    Some((cross * merge_sign(x.dz, y.dz) * merge_sign(x.dzb, y.dzb), Word { dz: x.dz | y.dz, dzb: x.dzb | y.dzb }))
}

/// `c_n` with `dz_1∧…∧dz_n∧dz̄_1∧…∧dz̄_n = c_n · dV_Lebesgue`,
/// `c_n = (−1)^{n(n−1)/2}(−2i)^n`.
pub fn lebesgue_factor(n: usize) -> C64 {
    let mut c = C64::new(1.0, 0.0);
    for _ in 0..n {
        c *= C64::new(0.0, -2.0);
    }
    if (n * n.saturating_sub(1) / 2) % 2 == 1 {
        -c
    } else {
        c
    }
}

/// A (possibly mixed-degree) form: a map from basis words to coefficients.
#[derive(Clone, Debug)]
pub struct Form {
    n: usize,
    terms: BTreeMap<Word, Expr>,
    overflow: bool,
}

impl Form {
    pub fn zero(n: usize) -> Form {
        assert!(n <= MAX_DIM, "chart dimension {n} exceeds {MAX_DIM}");
        Form { n, terms: BTreeMap::new(), overflow: false }
    }

    pub fn scalar(n: usize, f: Expr) -> Form {
        Form::term(n, Word::EMPTY, f)
    }

    pub fn term(n: usize, word: Word, coeff: Expr) -> Form {
        let mut out = Form::zero(n);
        if !coeff.is_zero() {
            out.terms.insert(word, coeff);
        }
        out
    }

    /// `dz_t` (zero based).
    pub fn dz(n: usize, t: usize) -> Form {
        Form::term(n, Word { dz: 1 << t, dzb: 0 }, Expr::one())
    }

    pub fn dzb(n: usize, t: usize) -> Form {
        Form::term(n, Word { dz: 0, dzb: 1 << t }, Expr::one())
    }

    /// The Lebesgue volume form, `c_n^{-1} dz_1…dz_n dz̄_1…dz̄_n`.
    pub fn vol(n: usize) -> Form {
        Form::term(n, Word::top(n), Expr::constant(lebesgue_factor(n).inv()))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Expr)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, w: Word) -> Expr {
        self.terms.get(&w).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Set when some wedge in this form's history exceeded degree n.
    pub fn overflowed(&self) -> bool {
        self.overflow
    }

    /// Bidegrees present, in canonical order.
    pub fn bidegrees(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.terms.keys().map(|w| (w.p(), w.q())).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Total degrees present.
    pub fn degrees(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.keys().map(|w| w.p() + w.q()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// The component of bidegree (p, q).
    pub fn component(&self, p: usize, q: usize) -> Form {
        let mut out = Form::zero(self.n);
        out.overflow = self.overflow;
        for (w, c) in &self.terms {
            if w.p() == p && w.q() == q {
                out.terms.insert(*w, c.clone());
            }
        }
        out
    }

    /// Coefficient of the top word `dz_1…dz_n dz̄_1…dz̄_n`.
    pub fn top_coefficient(&self) -> Expr {
        self.coefficient(Word::top(self.n))
    }

    /// Lebesgue density of the top component: `∫ top = ∫ density dV`.
    pub fn lebesgue_density(&self) -> Expr {
        self.top_coefficient().scale(lebesgue_factor(self.n))
    }

    fn insert_add(&mut self, w: Word, c: Expr) {
        let v = match self.terms.remove(&w) {
            Some(old) => &old + &c,
            None => c,
        };
        if !v.is_zero() {
            self.terms.insert(w, v);
        }
    }

    pub fn add(&self, other: &Form) -> Form {
        assert_eq!(self.n, other.n, "adding forms on different charts");
        let mut out = self.clone();
        out.overflow |= other.overflow;
        for (w, c) in &other.terms {
            out.insert_add(*w, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Form) -> Form {
        self.add(&other.scale_const(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, f: &Expr) -> Form {
        let mut out = Form::zero(self.n);
        out.overflow = self.overflow;
        for (w, c) in &self.terms {
            out.insert_add(*w, c * f);
        }
        out
    }

    pub fn scale_const(&self, c: C64) -> Form {
        self.scale(&Expr::constant(c))
    }

    /// Graded wedge product.
    pub fn wedge(&self, other: &Form) -> Form {
        assert_eq!(self.n, other.n, "wedging forms on different charts");
        let mut out = Form::zero(self.n);
        out.overflow = self.overflow || other.overflow;
        for (wa, ca) in &self.terms {
            for (wb, cb) in &other.terms {
                if wa.p() + wb.p() > self.n || wa.q() + wb.q() > self.n {
                    out.overflow = true;
                    continue;
                }
                if let Some((sign, w)) = wedge_words(*wa, *wb) {
                    out.insert_add(w, (ca * cb).scale(C64::new(sign as f64, 0.0)));
                }
            }
        }
        out
    }

    /// `∂`, raising p by one.
    pub fn del(&self) -> Form {
        self.differential(false)
    }

    /// `∂̄`, raising q by one.
    pub fn delbar(&self) -> Form {
        self.differential(true)
    }

    /// `d = ∂ + ∂̄`.
    pub fn d(&self) -> Form {
        self.del().add(&self.delbar())
    }

    fn differential(&self, conj: bool) -> Form {
        let mut out = Form::zero(self.n);
        out.overflow = self.overflow;
        for (w, c) in &self.terms {
            for t in 0..self.n {
                let bit = 1u32 << t;
                let below = bit - 1;
                let (sign_count, word) = if conj {
                    if w.dzb & bit != 0 {
                        continue;
                    }
                    (w.p() as u32 + (w.dzb & below).count_ones(), Word { dz: w.dz, dzb: w.dzb | bit })
                } else {
                    if w.dz & bit != 0 {
                        continue;
                    }
                    ((w.dz & below).count_ones(), Word { dz: w.dz | bit, dzb: w.dzb })
                };
                let dc = expr::wirtinger(c, t, conj);
                if dc.is_zero() {
                    continue;
                }
                let sign = if sign_count % 2 == 0 { 1.0 } else { -1.0 };
                out.insert_add(word, dc.scale(C64::new(sign, 0.0)));
            }
        }
        out
    }

    pub fn simplify(&self) -> Form {
        let mut out = Form::zero(self.n);
        out.overflow = self.overflow;
        for (w, c) in &self.terms {
            out.insert_add(*w, c.simplify());
        }
        out
    }

    /// Numeric coefficients at a point, keyed by word.
    pub fn eval(&self, z: &[C64]) -> Result<BTreeMap<Word, C64>, expr::EvalError> {
        self.terms.iter().map(|(w, c)| Ok((*w, expr::evaluate(c, z)?))).collect()
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({c})")?;
            let mut names = Vec::new();
            for t in 0..self.n {
                if w.dz & (1 << t) != 0 {
                    names.push(format!("dz{}", t + 1));
                }
            }
            for t in 0..self.n {
                if w.dzb & (1 << t) != 0 {
                    names.push(format!("dzb{}", t + 1));
                }
            }
            if !names.is_empty() {
                write!(f, "*{}", names.join("^"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormParseError {
    #[error(transparent)]
    Expr(#[from] ParseError),
    #[error("basis index {index} at offset {offset} exceeds the chart dimension {n}")]
    Index { offset: usize, index: usize, n: usize },
    #[error("second basis word at offset {offset}; join basis elements with `^`")]
    SecondBasis { offset: usize },
}

impl FormParseError {
    pub fn offset(&self) -> usize {
        match self {
            FormParseError::Expr(e) => e.offset(),
            FormParseError::Index { offset, .. } | FormParseError::SecondBasis { offset } => *offset,
        }
    }
}

fn basis_token(name: &str, n: usize, offset: usize) -> Result<Option<Form>, FormParseError> {
    if name == "vol" {
        return Ok(Some(Form::vol(n)));
    }
    let (idx, conj) = if let Some(k) = expr::split_indexed(name, "dzb") {
        (k, true)
    } else if let Some(k) = expr::split_indexed(name, "dz") {
        (k, false)
    } else {
        return Ok(None);
    };
    if idx >= n {
        return Err(FormParseError::Index { offset, index: idx + 1, n });
    }
    Ok(Some(if conj { Form::dzb(n, idx) } else { Form::dz(n, idx) }))
}

/// Parse a form: a sum of terms `expr * dz1^dzb2^…`, with `vol` the
/// Lebesgue volume form and bare expressions as 0-forms.
pub fn parse_form(text: &str, n: usize) -> Result<Form, FormParseError> {
    use expr::TokenKind;
    let mut p = expr::Parser::new(text)?;
    let mut total = Form::zero(n);
    let mut sign = 1.0;
    loop {
        while p.peek().kind == TokenKind::Minus {
            p.advance();
            sign = -sign;
        }
        let mut factors = vec![Expr::real(sign)];
        let mut basis: Option<Form> = None;
        loop {
            let tok = p.peek().clone();
            let word = match &tok.kind {
                TokenKind::Ident(name) => basis_token(name, n, tok.offset)?,
                _ => None,
            };
            match word {
                Some(mut w) => {
                    if basis.is_some() {
                        return Err(FormParseError::SecondBasis { offset: tok.offset });
                    }
                    p.advance();
                    while p.peek().kind == TokenKind::Caret {
                        p.advance();
                        let t = p.advance();
                        let next = match &t.kind {
                            TokenKind::Ident(name) => basis_token(name, n, t.offset)?,
                            _ => None,
                        };
                        let next = next.ok_or_else(|| ParseError::syntax(t.offset, "expected a basis element after `^`"))?;
                        w = w.wedge(&next);
                    }
                    basis = Some(w);
                }
                None => factors.push(p.parse_unary()?),
            }
            match p.peek().kind {
                TokenKind::Star => {
                    p.advance();
                }
                TokenKind::Slash => {
                    p.advance();
                    factors.push(p.parse_unary()?.pow(-1));
                }
                _ => break,
            }
        }
        let coeff = Expr::product(factors);
        let term = match basis {
            Some(b) => b.scale(&coeff),
            None => Form::scalar(n, coeff),
        };
        total = total.add(&term);
        match p.peek().kind {
            TokenKind::Plus => {
                p.advance();
                sign = 1.0;
            }
            TokenKind::Minus => {
                p.advance();
                sign = -1.0;
            }
            _ => break,
        }
    }
    p.expect_end()?;
    Ok(total)
}

/// `ω̃ / ‖s‖^{2N}` with a smooth numerator.
#[derive(Clone, Debug)]
pub struct SingularForm {
    pub numerator: Form,
    pub denom_power: u32,
}

impl SingularForm {
    pub fn new(numerator: Form, denom_power: u32) -> Self {
        SingularForm { numerator, denom_power }
    }

    pub fn n(&self) -> usize {
        self.numerator.n()
    }

    /// `ω ∧ ξ` for a smooth ξ.
    pub fn wedge(&self, xi: &Form) -> SingularForm {
        SingularForm::new(self.numerator.wedge(xi), self.denom_power)
    }

    /// `ξ ∧ ω` for a smooth ξ.
    pub fn wedge_left(&self, xi: &Form) -> SingularForm {
        SingularForm::new(xi.wedge(&self.numerator), self.denom_power)
    }

    pub fn scale(&self, f: &Expr) -> SingularForm {
        SingularForm::new(self.numerator.scale(f), self.denom_power)
    }

    pub fn add(&self, other: &SingularForm, chart: &ChartSpec) -> SingularForm {
        // bring both to the larger denominator power
        let n = self.denom_power.max(other.denom_power);
        let lift = |w: &SingularForm| w.numerator.scale(&chart.norm_sq().pow((n - w.denom_power) as i32));
        SingularForm::new(lift(self).add(&lift(other)), n)
    }

    /// Semantic coefficients at a point off V.
    pub fn eval(&self, chart: &ChartSpec, z: &[C64]) -> Result<BTreeMap<Word, C64>, expr::EvalError> {
        let s = expr::evaluate(&chart.norm_sq(), z)?;
        let d = s.powi(self.denom_power as i32);
        Ok(self.numerator.eval(z)?.into_iter().map(|(w, v)| (w, v / d)).collect())
    }
}

/// `d ω` as a singular form: numerator `‖s‖²dω̃ − N d‖s‖²∧ω̃`, power `N+1`.
/// With N = 0 this is just `dω̃`.
pub fn d_singular(omega: &SingularForm, chart: &ChartSpec) -> SingularForm {
    let n = omega.denom_power;
    let dnum = omega.numerator.d();
    if n == 0 {
        return SingularForm::new(dnum, 0);
    }
    let s = chart.norm_sq();
    let ds = Form::scalar(chart.n, s.clone()).d();
    let num = dnum.scale(&s).sub(&ds.wedge(&omega.numerator).scale_const(C64::new(n as f64, 0.0)));
    SingularForm::new(num, n + 1)
}

/// `(d‖s‖²/‖s‖²) ∧ ω`.
pub fn dlognorm_wedge(omega: &SingularForm, chart: &ChartSpec) -> SingularForm {
    let ds = Form::scalar(chart.n, chart.norm_sq()).d();
    SingularForm::new(ds.wedge(&omega.numerator), omega.denom_power + 1)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("chart dimension must be between 1 and {MAX_DIM}, got {0}")]
    Dimension(usize),
    #[error("kappa = {kappa} exceeds n = {n}")]
    Kappa { kappa: usize, n: usize },
    #[error("expected {kappa} exponents m, got {got}")]
    Exponents { kappa: usize, got: usize },
    #[error("exponents m must be positive")]
    ZeroExponent,
    #[error("expected {n} positive radii, got {got:?}")]
    Radii { n: usize, got: Vec<f64> },
    #[error("{name} uses z{var} but the chart has n = {n}")]
    Variable { name: &'static str, var: usize, n: usize },
    #[error("{name} is not real-valued at sample z = {point:?} (value {value})")]
    NotReal { name: &'static str, point: Vec<C64>, value: C64 },
    #[error("{name} cannot be evaluated at a sample point: {source}")]
    Eval { name: &'static str, source: expr::EvalError },
}

/// A normal-crossings chart: `‖s‖² = |z_1^{m_1}…z_κ^{m_κ}|² e^{−φ}`,
/// `|s|² = same · e^{−ψ}`, integration over the polydisc `|z_t| < R_t`.
#[derive(Clone, Debug)]
pub struct ChartSpec {
    pub n: usize,
    pub kappa: usize,
    pub m: Vec<u32>,
    pub phi: Expr,
    pub psi: Expr,
    pub radii: Vec<f64>,
}

const REAL_SAMPLES: usize = 50;
const REAL_TOL: f64 = 1e-10;

impl ChartSpec {
    pub fn new(n: usize, kappa: usize, m: Vec<u32>, phi: Expr, psi: Expr, radii: Vec<f64>) -> Result<Self, ChartError> {
        if n == 0 || n > MAX_DIM {
            return Err(ChartError::Dimension(n));
        }
        if kappa > n {
            return Err(ChartError::Kappa { kappa, n });
        }
        if m.len() != kappa {
            return Err(ChartError::Exponents { kappa, got: m.len() });
        }
        if m.contains(&0) {
            return Err(ChartError::ZeroExponent);
        }
        if radii.len() != n || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(ChartError::Radii { n, got: radii });
        }
        let chart = ChartSpec { n, kappa, m, phi: phi.simplify(), psi: psi.simplify(), radii };
        chart.validate_weights()?;
        Ok(chart)
    }

    /// The unit polydisc chart with zero weights.
    pub fn flat(n: usize, m: Vec<u32>) -> Result<Self, ChartError> {
        let kappa = m.len();
        ChartSpec::new(n, kappa, m, Expr::zero(), Expr::zero(), vec![1.0; n])
    }

    fn validate_weights(&self) -> Result<(), ChartError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c4a7);
        let weights = [("phi", &self.phi), ("psi", &self.psi)];
        for (name, e) in weights {
            let b = e.var_bound();
            if b > self.n {
                return Err(ChartError::Variable { name, var: b, n: self.n });
            }
        }
        let tapes = [("phi", expr::Tape::compile(&self.phi)), ("psi", expr::Tape::compile(&self.psi))];
        for _ in 0..REAL_SAMPLES {
            let z: Vec<C64> = self
                .radii
                .iter()
                .map(|r| C64::from_polar(r * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * std::f64::consts::TAU))
                .collect();
            for (name, t) in &tapes {
                let v = t.eval_checked(&z, &[C64::new(0.0, 0.0); 2]).map_err(|source| ChartError::Eval { name, source })?;
                if v.im.abs() > REAL_TOL {
                    return Err(ChartError::NotReal { name, point: z, value: v });
                }
            }
        }
        Ok(())
    }

    /// `∏ (z_t z̄_t)^{m_t}`.
    pub fn monomial_sq(&self) -> Expr {
        Expr::product(
            self.m
                .iter()
                .enumerate()
                .map(|(t, &m)| (&Expr::var(t) * &Expr::var_conj(t)).pow(m as i32))
                .collect(),
        )
    }

    /// `‖s‖²` as an expression.
    pub fn norm_sq(&self) -> Expr {
        &self.monomial_sq() * &Expr::exp(-&self.phi)
    }

    /// `|s|²` as an expression.
    pub fn abs_sq(&self) -> Expr {
        &self.monomial_sq() * &Expr::exp(-&self.psi)
    }

    /// The same chart with the weights replaced.
    pub fn with_weights(&self, phi: Expr, psi: Expr) -> Result<Self, ChartError> {
        ChartSpec::new(self.n, self.kappa, self.m.clone(), phi, psi, self.radii.clone())
    }

    pub fn max_m(&self) -> u32 {
        self.m.iter().copied().max().unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn pts(n: usize) -> Vec<Vec<C64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..10)
            .map(|_| (0..n).map(|_| C64::from_polar(rng.gen_range(0.1..0.7), rng.gen_range(0.0..std::f64::consts::TAU))).collect())
            .collect()
    }

    fn assert_zero_at(f: &Form, n: usize, tol: f64) {
        for z in pts(n) {
            for (w, v) in f.eval(&z).unwrap() {
                assert!(v.norm() <= tol, "coefficient {w:?} = {v}");
            }
        }
    }

    fn assert_same(a: &Form, b: &Form, n: usize, rel: f64) {
        assert_zero_at(&a.sub(b).simplify(), n, 0.0f64.max(rel * 1e3));
        for z in pts(n) {
            let x = a.eval(&z).unwrap();
            let y = b.eval(&z).unwrap();
            for (w, v) in &x {
                let u = y.get(w).copied().unwrap_or_default();
                assert!((v - u).norm() <= rel * v.norm().max(u.norm()).max(1.0), "{w:?}: {v} vs {u}");
            }
        }
    }

    #[test]
    fn wedge_signs() {
        let n = 1;
        let a = Form::dz(n, 0).wedge(&Form::dzb(n, 0));
        let b = Form::dzb(n, 0).wedge(&Form::dz(n, 0));
        assert_same(&a, &b.scale_const(C64::new(-1.0, 0.0)), n, 1e-15);
        assert!(Form::dz(n, 0).wedge(&Form::dz(n, 0)).is_zero());
        let x = parse_form("zb1*dz1", 1).unwrap().wedge(&parse_form("z1*dzb1", 1).unwrap());
        assert_same(&x, &parse_form("z1*zb1*dz1^dzb1", 1).unwrap(), 1, 1e-15);
    }

    #[test]
    fn overflow_is_flagged() {
        let v = Form::vol(1);
        let w = v.wedge(&Form::dz(1, 0));
        assert!(w.is_zero() && w.overflowed());
        assert!(!Form::dz(2, 0).wedge(&Form::dz(2, 0)).overflowed());
    }

    #[test]
    fn lebesgue_factor_matches_pairwise_convention() {
        assert_eq!(lebesgue_factor(1), C64::new(0.0, -2.0));
        // n = 2: dz1 dz2 dz̄1 dz̄2 = −(dz1 dz̄1)(dz2 dz̄2) = −(−2i)² = 4
        assert_eq!(lebesgue_factor(2), C64::new(4.0, 0.0));
        let v = Form::vol(2);
        let pairs = Form::dz(2, 0).wedge(&Form::dzb(2, 0)).wedge(&Form::dz(2, 1)).wedge(&Form::dzb(2, 1));
        let z = vec![C64::new(0.1, 0.0); 2];
        let ratio = pairs.eval(&z).unwrap()[&Word::top(2)] / v.eval(&z).unwrap()[&Word::top(2)];
        assert!((ratio - C64::new(0.0, -2.0).powi(2)).norm() < 1e-14);
    }

    #[test]
    fn exterior_derivative_examples() {
        assert!(Form::scalar(2, Expr::real(3.0)).d().is_zero());
        let f = parse_form("zb1*dz1", 1).unwrap().d();
        assert_same(&f, &Form::dzb(1, 0).wedge(&Form::dz(1, 0)), 1, 1e-15);
        let e = parse("exp(z1*zb2) + z2^3*zb1^2 + bump(1.5)*z1").unwrap();
        let s = Form::scalar(2, e);
        assert_zero_at(&s.d().d().simplify(), 2, 1e-12);
        assert_zero_at(&s.del().del(), 2, 1e-12);
        assert_zero_at(&s.delbar().delbar(), 2, 1e-12);
        assert_same(&s.del().delbar(), &s.delbar().del().scale_const(C64::new(-1.0, 0.0)), 2, 1e-12);
        let one = parse_form("zb2*z1^2*dz2 + exp(z1)*dzb1 - z2*dz1^dzb2", 2).unwrap();
        assert_zero_at(&one.d().d().simplify(), 2, 1e-12);
    }

    #[test]
    fn graded_anticommutativity() {
        let a = parse_form("z1*dz1 + zb2*dzb1", 2).unwrap();
        let b = parse_form("z2*zb1*dz2^dzb2 + dzb2", 2).unwrap();
        // a is of degree 1; b mixes degrees 2 and 1
        let b2 = b.component(1, 1);
        let b1 = b.component(0, 1);
        assert_same(&a.wedge(&b2), &b2.wedge(&a), 2, 1e-14);
        assert_same(&a.wedge(&b1), &b1.wedge(&a).scale_const(C64::new(-1.0, 0.0)), 2, 1e-14);
    }

    #[test]
    fn form_parser() {
        let f = parse_form("(1 - z1*zb1)^4 * vol", 1).unwrap();
        assert_eq!(f.bidegrees(), vec![(1, 1)]);
        let z = [C64::new(0.5, 0.0)];
        let d = expr::evaluate(&f.lebesgue_density(), &z).unwrap();
        assert!((d - C64::new(0.75f64.powi(4), 0.0)).norm() < 1e-15);
        let g = parse_form("dzb1^dz1", 1).unwrap();
        assert_eq!(g.coefficient(Word::top(1)).as_const(), Some(C64::new(-1.0, 0.0)));
        let h = parse_form("-2*z1*dz1 + zb1 - dzb1", 1).unwrap();
        assert_eq!(h.degrees(), vec![0, 1]);
        assert!(matches!(parse_form("dz3", 2), Err(FormParseError::Index { index: 3, .. })));
        assert!(matches!(parse_form("dz1*dz2", 2), Err(FormParseError::SecondBasis { .. })));
        assert_eq!(parse_form("z1 * (z1", 1).unwrap_err().offset(), 8);
    }

    #[test]
    fn chart_validation() {
        assert!(ChartSpec::flat(1, vec![1]).is_ok());
        assert!(matches!(ChartSpec::flat(1, vec![1, 1]), Err(ChartError::Kappa { .. })));
        let bad = ChartSpec::new(1, 1, vec![1], parse("i*z1").unwrap(), Expr::zero(), vec![1.0]);
        assert!(matches!(bad, Err(ChartError::NotReal { name: "phi", .. })));
        let ok = ChartSpec::new(1, 1, vec![1], parse("z1*zb1 + z1 + zb1").unwrap(), Expr::zero(), vec![1.0]);
        assert!(ok.is_ok());
        assert!(matches!(
            ChartSpec::new(1, 1, vec![1], parse("z2*zb2").unwrap(), Expr::zero(), vec![1.0]),
            Err(ChartError::Variable { .. })
        ));
    }

    fn semantic_d(omega: &SingularForm, chart: &ChartSpec, z: &[C64]) -> BTreeMap<Word, C64> {
        // d of the semantic coefficients by central differences
        let h = 1e-5;
        let mut out: BTreeMap<Word, C64> = BTreeMap::new();
        let n = chart.n;
        for t in 0..n {
            for conj in [false, true] {
                let shift = |dz: C64| {
                    let mut w = z.to_vec();
                    w[t] += dz;
                    omega.eval(chart, &w).unwrap()
                };
                let px = shift(C64::new(h, 0.0));
                let mx = shift(C64::new(-h, 0.0));
                let py = shift(C64::new(0.0, h));
                let my = shift(C64::new(0.0, -h));
                for (w, _) in omega.numerator.terms() {
                    let g = |m: &BTreeMap<Word, C64>| m.get(w).copied().unwrap_or_default();
                    let dx = (g(&px) - g(&mx)) / (2.0 * h);
                    let dy = (g(&py) - g(&my)) / (2.0 * h);
                    let i = C64::new(0.0, 1.0);
                    let deriv = if conj { (dx + i * dy) * 0.5 } else { (dx - i * dy) * 0.5 };
                    let basis = if conj { Form::dzb(n, t) } else { Form::dz(n, t) };
                    let word_form = basis.wedge(&Form::term(n, *w, Expr::one()));
                    for (ww, c) in word_form.terms() {
                        *out.entry(*ww).or_default() += deriv * c.as_const().unwrap();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn d_singular_matches_semantic_derivative() {
        let chart = ChartSpec::new(2, 1, vec![1], parse("0.3*z1*zb1").unwrap(), Expr::zero(), vec![1.0, 1.0]).unwrap();
        let omega = SingularForm::new(parse_form("zb1*bump(1)*dz1^dz2^dzb2", 2).unwrap(), 1);
        let d = d_singular(&omega, &chart);
        assert_eq!(d.denom_power, 2);
        for z in pts(2) {
            let exact = d.eval(&chart, &z).unwrap();
            let fd = semantic_d(&omega, &chart, &z);
            for (w, v) in &fd {
                let u = exact.get(w).copied().unwrap_or_default();
                assert!((v - u).norm() <= 1e-6 * v.norm().max(1.0), "{w:?}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn d_singular_special_cases() {
        let chart = ChartSpec::flat(1, vec![1]).unwrap();
        let smooth = SingularForm::new(parse_form("z1*zb1^2*dz1", 1).unwrap(), 0);
        let d = d_singular(&smooth, &chart);
        assert_eq!(d.denom_power, 0);
        assert_same(&d.numerator, &smooth.numerator.d(), 1, 1e-15);
        let top = SingularForm::new(Form::vol(1), 1);
        let dt = d_singular(&top, &chart);
        assert!(dt.numerator.is_zero() && dt.numerator.overflowed());
    }

    #[test]
    fn dlognorm_examples() {
        let chart = ChartSpec::flat(1, vec![1]).unwrap();
        assert!(dlognorm_wedge(&SingularForm::new(Form::zero(1), 0), &chart).numerator.is_zero());
        assert!(dlognorm_wedge(&SingularForm::new(Form::vol(1), 0), &chart).numerator.is_zero());
        let omega = SingularForm::new(parse_form("bump(1)*dzb1", 1).unwrap(), 0);
        let r = dlognorm_wedge(&omega, &chart);
        assert_eq!(r.denom_power, 1);
        for z in pts(1) {
            let got = r.eval(&chart, &z).unwrap()[&Word::top(1)];
            let b = expr::evaluate(&parse("bump(1)").unwrap(), &z).unwrap();
            let want = z[0].conj() * b / z[0].norm_sqr();
            assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
        }
    }

    #[test]
    fn leibniz_for_d_singular() {
        let chart = ChartSpec::new(1, 1, vec![2], parse("z1*zb1").unwrap(), Expr::zero(), vec![1.0]).unwrap();
        let omega = SingularForm::new(parse_form("zb1^2*bump(1)*dz1", 1).unwrap(), 1);
        let f = parse("exp(z1) + zb1*z1").unwrap();
        let lhs = d_singular(&omega.scale(&f), &chart);
        let df = Form::scalar(1, f.clone()).d();
        let a = omega.wedge_left(&df);
        let b = d_singular(&omega, &chart).scale(&f);
        for z in pts(1) {
            let l = lhs.eval(&chart, &z).unwrap()[&Word::top(1)];
            let r = a.eval(&chart, &z).unwrap().get(&Word::top(1)).copied().unwrap_or_default()
                + b.eval(&chart, &z).unwrap()[&Word::top(1)];
            assert!((l - r).norm() <= 1e-6 * l.norm().max(1.0), "{l} vs {r}");
        }
    }
}
