//! Expressions in the chart variables `z_t` and their conjugates.
//!
//! Nodes are immutable and hash-consed through a global interner, so two
//! structurally equal expressions built through the same constructors share
//! one allocation and compare by id. The smart constructors (`sum`, `product`,
//! `pow`, ...) keep results in a light canonical form: flattened, constant
//! folded, like terms and equal bases merged. The parser builds raw trees so
//! that printing and re-parsing is exact; `simplify` canonicalizes them.

mod diff;
mod eval;
mod parse;
mod print;

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock, Mutex};

pub use num_complex::Complex64 as C64;

pub use diff::{apply_mixed_partial, wirtinger, OrderCapExceeded, DEFAULT_ORDER_CAP};
pub use eval::{evaluate, evaluate_with, EvalError, Tape, TapeScratch};
pub use parse::{parse, ParseError};
pub(crate) use parse::{split_indexed, Parser, TokenKind};

/// Internal continuation parameters. They never appear in user input but
/// print and parse as `lambda`/`tau` so internal expressions stay printable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Lambda,
    Tau,
}

impl Param {
    pub(crate) fn slot(self) -> usize {
        match self {
            Param::Lambda => 0,
            Param::Tau => 1,
        }
    }
}

/// A ball `Σ|z_t − c_t|² < R²`; centers missing past the end are zero.
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: f64,
    pub center: Vec<C64>,
}

impl Ball {
    pub fn centered(radius: f64) -> Self {
        Ball { radius, center: Vec::new() }
    }

    pub fn center_of(&self, t: usize) -> C64 {
        self.center.get(t).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    /// `R² − Σ|z_t − c_t|²` at a point.
    pub fn gap(&self, z: &[C64]) -> f64 {
        let mut s = 0.0;
        for (t, zt) in z.iter().enumerate() {
            s += (zt - self.center_of(t)).norm_sqr();
        }
        self.radius * self.radius - s
    }

    fn key(&self) -> (u64, Vec<(u64, u64)>) {
        let mut c: Vec<(u64, u64)> = self.center.iter().map(|v| const_bits(*v)).collect();
        while c.last() == Some(&(0, 0)) {
            c.pop();
        }
        (canon_bits(self.radius), c)
    }
}

impl PartialEq for Ball {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Ball {}
impl Hash for Ball {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

fn canon_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

fn const_bits(c: C64) -> (u64, u64) {
    (canon_bits(c.re), canon_bits(c.im))
}

/// Node kinds. Quotients are products with negative integer powers.
#[derive(Clone, Debug)]
pub enum Kind {
    Const(C64),
    Var { index: usize, conj: bool },
    Param { param: Param, conj: bool },
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Expr, i32),
    Exp(Expr),
    Log(Expr),
    /// `exp(−1/gap)` inside the ball, zero outside.
    Bump(Ball),
    /// The polynomial `R² − Σ(z_t − c_t)(z̄_t − c̄_t)`.
    BallGap(Ball),
}

impl PartialEq for Kind {
    fn eq(&self, other: &Self) -> bool {
        use Kind::*;
        match (self, other) {
            (Const(a), Const(b)) => const_bits(*a) == const_bits(*b),
            (Var { index: a, conj: c }, Var { index: b, conj: d }) => a == b && c == d,
            (Param { param: a, conj: c }, Param { param: b, conj: d }) => a == b && c == d,
            (Sum(a), Sum(b)) | (Product(a), Product(b)) => a == b,
            (Pow(a, k), Pow(b, l)) => a == b && k == l,
            (Exp(a), Exp(b)) | (Log(a), Log(b)) => a == b,
            (Bump(a), Bump(b)) | (BallGap(a), BallGap(b)) => a == b,
            _ => false,
        }
    }
}
impl Eq for Kind {}

impl Hash for Kind {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Kind::Const(c) => const_bits(*c).hash(state),
            Kind::Var { index, conj } => (index, conj).hash(state),
            Kind::Param { param, conj } => (param, conj).hash(state),
            Kind::Sum(v) | Kind::Product(v) => v.hash(state),
            Kind::Pow(b, k) => (b, k).hash(state),
            Kind::Exp(a) | Kind::Log(a) => a.hash(state),
            Kind::Bump(b) | Kind::BallGap(b) => b.hash(state),
        }
    }
}

pub(crate) struct Node {
    id: u64,
    shash: u64,
    kind: Kind,
}

/// Shared handle to an interned expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}
impl Eq for Expr {}
impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state)
    }
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Expr({self})")
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);
static INTERNER: LazyLock<Mutex<HashMap<Kind, Expr>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

fn mix(h: u64, v: u64) -> u64 {
    // splitmix64 finalizer over an xor-combined state
    let mut x = h ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn structural_hash(kind: &Kind) -> u64 {
    match kind {
        Kind::Const(c) => {
            let (a, b) = const_bits(*c);
            mix(mix(1, a), b)
        }
        Kind::Var { index, conj } => mix(mix(2, *index as u64), *conj as u64),
        Kind::Param { param, conj } => mix(mix(3, param.slot() as u64), *conj as u64),
        Kind::Sum(v) => v.iter().fold(4, |h, e| mix(h, e.0.shash)),
        Kind::Product(v) => v.iter().fold(5, |h, e| mix(h, e.0.shash)),
        Kind::Pow(b, k) => mix(mix(6, b.0.shash), *k as i64 as u64),
        Kind::Exp(a) => mix(7, a.0.shash),
        Kind::Log(a) => mix(8, a.0.shash),
        Kind::Bump(b) | Kind::BallGap(b) => {
            let (r, c) = b.key();
            let tag = if matches!(kind, Kind::Bump(_)) { 9 } else { 10 };
            c.iter().fold(mix(tag, r), |h, (x, y)| mix(mix(h, *x), *y))
        }
    }
}

impl Expr {
    /// Intern a node exactly as given, without any simplification.
    pub fn raw(kind: Kind) -> Expr {
        let shash = structural_hash(&kind);
        let mut table = INTERNER.lock().expect("expression interner poisoned");
        if let Some(e) = table.get(&kind) {
            return e.clone();
        }
        let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
        let e = Expr(Arc::new(Node { id, shash, kind: kind.clone() }));
        table.insert(kind, e.clone());
        e
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Content hash, stable across runs.
    pub fn structural_hash(&self) -> u64 {
        self.0.shash
    }

    pub fn constant(c: C64) -> Expr {
        Expr::raw(Kind::Const(c))
    }

    pub fn real(x: f64) -> Expr {
        Expr::constant(C64::new(x, 0.0))
    }

    pub fn zero() -> Expr {
        Expr::real(0.0)
    }

    pub fn one() -> Expr {
        Expr::real(1.0)
    }

    /// `z_{index+1}` (indices are zero based internally).
    pub fn var(index: usize) -> Expr {
        Expr::raw(Kind::Var { index, conj: false })
    }

    pub fn var_conj(index: usize) -> Expr {
        Expr::raw(Kind::Var { index, conj: true })
    }

    pub fn param(param: Param) -> Expr {
        Expr::raw(Kind::Param { param, conj: false })
    }

    pub fn bump(ball: Ball) -> Expr {
        Expr::raw(Kind::Bump(ball))
    }

    pub fn ball_gap(ball: Ball) -> Expr {
        Expr::raw(Kind::BallGap(ball))
    }

    pub fn as_const(&self) -> Option<C64> {
        match self.kind() {
            Kind::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(C64::new(0.0, 0.0))
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(C64::new(1.0, 0.0))
    }

    /// Smart n-ary sum.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        flatten_into(terms, &mut flat, true);
        let mut constant = C64::new(0.0, 0.0);
        let mut order: Vec<Expr> = Vec::new();
        let mut coeffs: HashMap<u64, C64> = HashMap::new();
        for t in flat {
            if let Some(c) = t.as_const() {
                constant += c;
                continue;
            }
            let (c, rest) = split_coefficient(&t);
            match coeffs.get_mut(&rest.id()) {
                Some(acc) => *acc += c,
                None => {
                    coeffs.insert(rest.id(), c);
                    order.push(rest);
                }
            }
        }
        let mut out = Vec::with_capacity(order.len() + 1);
        for rest in order {
            let c = coeffs[&rest.id()];
            if c != C64::new(0.0, 0.0) {
                out.push(scale_canonical(c, rest));
            }
        }
        if constant != C64::new(0.0, 0.0) {
            out.push(Expr::constant(constant));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => {
                sort_canonical(&mut out);
                Expr::raw(Kind::Sum(out))
            }
        }
    }

    /// Smart n-ary product.
    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        flatten_into(factors, &mut flat, false);
        let mut constant = C64::new(1.0, 0.0);
        let mut order: Vec<Expr> = Vec::new();
        let mut powers: HashMap<u64, i64> = HashMap::new();
        let mut exp_args = Vec::new();
        let mut push = |base: Expr, k: i64, order: &mut Vec<Expr>| match powers.get_mut(&base.id()) {
            Some(acc) => *acc += k,
            None => {
                powers.insert(base.id(), k);
                order.push(base);
            }
        };
        for f in flat {
            match f.kind() {
                Kind::Const(c) => constant *= c,
                Kind::Pow(b, k) => match b.as_const() {
                    Some(c) if c != C64::new(0.0, 0.0) => constant *= c.powi(*k),
                    _ => push(b.clone(), *k as i64, &mut order),
                },
                Kind::Exp(a) => exp_args.push(a.clone()),
                _ => push(f.clone(), 1, &mut order),
            }
        }
        if constant == C64::new(0.0, 0.0) {
            return Expr::zero();
        }
        if !exp_args.is_empty() {
            let merged = Expr::exp(Expr::sum(exp_args));
            match merged.as_const() {
                Some(c) => constant *= c,
                None => push(merged, 1, &mut order),
            }
        }
        let mut out = Vec::with_capacity(order.len() + 1);
        for base in order {
            let k = powers[&base.id()];
            if k == 0 {
                continue;
            }
            let k = i32::try_from(k).expect("exponent overflow in product");
            out.push(if k == 1 { base } else { Expr::raw(Kind::Pow(base, k)) });
        }
        sort_canonical(&mut out);
        if constant != C64::new(1.0, 0.0) || out.is_empty() {
            out.insert(0, Expr::constant(constant));
        }
        if out.len() == 1 {
            return out.pop().unwrap();
        }
        Expr::raw(Kind::Product(out))
    }

    /// Smart integer power.
    pub fn pow(&self, k: i32) -> Expr {
        if k == 0 {
            return Expr::one();
        }
        if k == 1 {
            return self.clone();
        }
        match self.kind() {
            Kind::Const(c) if *c != C64::new(0.0, 0.0) || k > 0 => Expr::constant(c.powi(k)),
            Kind::Pow(b, a) => b.pow(a.checked_mul(k).expect("exponent overflow")),
            Kind::Product(fs) => Expr::product(fs.iter().map(|f| f.pow(k)).collect()),
            Kind::Exp(a) => Expr::exp(Expr::product(vec![Expr::real(k as f64), a.clone()])),
            _ => Expr::raw(Kind::Pow(self.clone(), k)),
        }
    }

    pub fn exp(a: Expr) -> Expr {
        match a.kind() {
            Kind::Const(c) => Expr::constant(c.exp()),
            Kind::Log(x) => x.clone(),
            _ => Expr::raw(Kind::Exp(a)),
        }
    }

    pub fn ln(a: Expr) -> Expr {
        match a.kind() {
            Kind::Const(c) if *c != C64::new(0.0, 0.0) => Expr::constant(c.ln()),
            _ => Expr::raw(Kind::Log(a)),
        }
    }

    pub fn scale(&self, c: C64) -> Expr {
        Expr::product(vec![Expr::constant(c), self.clone()])
    }

    /// Complex conjugate as an expression in swapped variables.
    pub fn conj(&self) -> Expr {
        let mut memo = HashMap::new();
        conj_rec(self, &mut memo)
    }

    /// Canonicalize a raw tree bottom-up through the smart constructors.
    pub fn simplify(&self) -> Expr {
        let mut memo = HashMap::new();
        simplify_rec(self, &mut memo)
    }

    /// Highest frequency of `e^{iθ_t}` per variable for trigonometric
    /// polynomials in polar coordinates; `None` when the dependence is not
    /// polynomial (exp/log of angle-dependent data, off-center bumps).
    pub fn angular_degree(&self, t: usize) -> Option<u32> {
        let mut memo = HashMap::new();
        angular_rec(self, t, &mut memo)
    }

    /// Whether any `Param` node occurs.
    pub fn has_params(&self) -> bool {
        let mut seen = HashMap::new();
        has_params_rec(self, &mut seen)
    }

    /// Largest variable index + 1 referenced.
    pub fn var_bound(&self) -> usize {
        let mut seen = HashMap::new();
        var_bound_rec(self, &mut seen)
    }
}

fn flatten_into(items: Vec<Expr>, out: &mut Vec<Expr>, sum: bool) {
    for e in items {
        match (e.kind(), sum) {
            (Kind::Sum(ch), true) | (Kind::Product(ch), false) => flatten_into(ch.clone(), out, sum),
            _ => out.push(e),
        }
    }
}

fn sort_canonical(v: &mut [Expr]) {
    v.sort_by(|a, b| {
        let ka = matches!(a.kind(), Kind::Const(_));
        let kb = matches!(b.kind(), Kind::Const(_));
        kb.cmp(&ka).then(a.0.shash.cmp(&b.0.shash)).then(a.id().cmp(&b.id()))
    });
}

/// Split `c·rest` for like-term collection.
fn split_coefficient(e: &Expr) -> (C64, Expr) {
    if let Kind::Product(fs) = e.kind() {
        if let Some(c) = fs[0].as_const() {
            let rest = &fs[1..];
            let rest = if rest.len() == 1 { rest[0].clone() } else { Expr::raw(Kind::Product(rest.to_vec())) };
            return (c, rest);
        }
    }
    (C64::new(1.0, 0.0), e.clone())
}

fn scale_canonical(c: C64, rest: Expr) -> Expr {
    if c == C64::new(1.0, 0.0) {
        return rest;
    }
    let mut fs = vec![Expr::constant(c)];
    match rest.kind() {
        Kind::Product(inner) => fs.extend(inner.iter().cloned()),
        _ => fs.push(rest),
    }
    Expr::raw(Kind::Product(fs))
}

fn conj_rec(e: &Expr, memo: &mut HashMap<u64, Expr>) -> Expr {
    if let Some(r) = memo.get(&e.id()) {
        return r.clone();
    }
    let r = match e.kind() {
        Kind::Const(c) => Expr::constant(c.conj()),
        Kind::Var { index, conj } => Expr::raw(Kind::Var { index: *index, conj: !conj }),
        Kind::Param { param, conj } => Expr::raw(Kind::Param { param: *param, conj: !conj }),
        Kind::Sum(v) => Expr::raw(Kind::Sum(v.iter().map(|x| conj_rec(x, memo)).collect())),
        Kind::Product(v) => Expr::raw(Kind::Product(v.iter().map(|x| conj_rec(x, memo)).collect())),
        Kind::Pow(b, k) => Expr::raw(Kind::Pow(conj_rec(b, memo), *k)),
        Kind::Exp(a) => Expr::raw(Kind::Exp(conj_rec(a, memo))),
        Kind::Log(a) => Expr::raw(Kind::Log(conj_rec(a, memo))),
        Kind::Bump(_) | Kind::BallGap(_) => e.clone(),
    };
    memo.insert(e.id(), r.clone());
    r
}

fn simplify_rec(e: &Expr, memo: &mut HashMap<u64, Expr>) -> Expr {
    if let Some(r) = memo.get(&e.id()) {
        return r.clone();
    }
    let r = match e.kind() {
        Kind::Const(_) | Kind::Var { .. } | Kind::Param { .. } | Kind::Bump(_) | Kind::BallGap(_) => e.clone(),
        Kind::Sum(v) => Expr::sum(v.iter().map(|x| simplify_rec(x, memo)).collect()),
        Kind::Product(v) => Expr::product(v.iter().map(|x| simplify_rec(x, memo)).collect()),
        Kind::Pow(b, k) => simplify_rec(b, memo).pow(*k),
        Kind::Exp(a) => Expr::exp(simplify_rec(a, memo)),
        Kind::Log(a) => Expr::ln(simplify_rec(a, memo)),
    };
    memo.insert(e.id(), r.clone());
    r
}

fn angular_rec(e: &Expr, t: usize, memo: &mut HashMap<u64, Option<u32>>) -> Option<u32> {
    if let Some(r) = memo.get(&e.id()) {
        return *r;
    }
    let r = match e.kind() {
        Kind::Const(_) | Kind::Param { .. } => Some(0),
        Kind::Var { index, .. } => Some(u32::from(*index == t)),
        Kind::Sum(v) => v.iter().try_fold(0u32, |acc, x| angular_rec(x, t, memo).map(|d| acc.max(d))),
        Kind::Product(v) => v.iter().try_fold(0u32, |acc, x| angular_rec(x, t, memo).map(|d| acc.saturating_add(d))),
        Kind::Pow(b, k) => angular_rec(b, t, memo).and_then(|d| if d == 0 { Some(0) } else if *k > 0 { Some(d.saturating_mul(*k as u32)) } else { None }),
        Kind::Exp(a) | Kind::Log(a) => match angular_rec(a, t, memo) {
            Some(0) => Some(0),
            _ => None,
        },
        // Only |z_t − c_t|² enters, which is angle free when c_t = 0.
        Kind::Bump(b) | Kind::BallGap(b) if b.center_of(t) == C64::new(0.0, 0.0) => Some(0),
        Kind::BallGap(_) => Some(1),
        Kind::Bump(_) => None,
    };
    memo.insert(e.id(), r);
    r
}

fn has_params_rec(e: &Expr, seen: &mut HashMap<u64, bool>) -> bool {
    if let Some(r) = seen.get(&e.id()) {
        return *r;
    }
    let r = match e.kind() {
        Kind::Param { .. } => true,
        Kind::Sum(v) | Kind::Product(v) => v.iter().any(|x| has_params_rec(x, seen)),
        Kind::Pow(b, _) => has_params_rec(b, seen),
        Kind::Exp(a) | Kind::Log(a) => has_params_rec(a, seen),
        _ => false,
    };
    seen.insert(e.id(), r);
    r
}

fn var_bound_rec(e: &Expr, seen: &mut HashMap<u64, usize>) -> usize {
    if let Some(r) = seen.get(&e.id()) {
        return *r;
    }
    let r = match e.kind() {
        Kind::Var { index, .. } => index + 1,
        Kind::Sum(v) | Kind::Product(v) => v.iter().map(|x| var_bound_rec(x, seen)).max().unwrap_or(0),
        Kind::Pow(b, _) => var_bound_rec(b, seen),
        Kind::Exp(a) | Kind::Log(a) => var_bound_rec(a, seen),
        Kind::Bump(b) | Kind::BallGap(b) => b.center.len(),
        _ => 0,
    };
    seen.insert(e.id(), r);
    r
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                std::ops::$tr::$m(&self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum(vec![a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::sum(vec![a.clone(), b.scale(C64::new(-1.0, 0.0))]));
binop!(Mul, mul, |a, b| Expr::product(vec![a.clone(), b.clone()]));
binop!(Div, div, |a, b| Expr::product(vec![a.clone(), b.pow(-1)]));

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(C64::new(-1.0, 0.0))
    }
}
impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}
