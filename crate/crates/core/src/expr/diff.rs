//! Wirtinger derivatives `∂/∂z_t` and `∂/∂z̄_t`, with z and z̄ independent.

use super::{Ball, Expr, Kind, C64};
use std::collections::HashMap;
use std::sync::{LazyLock, Mutex};
use thiserror::Error;

/// Default cap on the total order of a mixed partial.
pub const DEFAULT_ORDER_CAP: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("mixed partial of total order {requested} exceeds the order cap {cap}")]
pub struct OrderCapExceeded {
    pub requested: u32,
    pub cap: u32,
}

static CACHE: LazyLock<Mutex<HashMap<(u64, usize, bool), Expr>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

/// `∂e/∂z_t` (or `∂e/∂z̄_t` when `conj`), `t` zero based.
pub fn wirtinger(e: &Expr, t: usize, conj: bool) -> Expr {
    let key = (e.id(), t, conj);
    if let Some(d) = CACHE.lock().expect("derivative cache poisoned").get(&key) {
        return d.clone();
    }
    let d = derive(e, t, conj);
    CACHE.lock().expect("derivative cache poisoned").insert(key, d.clone());
    d
}

fn gap_derivative(b: &Ball, t: usize, conj: bool) -> Expr {
    // ∂/∂z_t of R² − Σ(z−c)(z̄−c̄) is −(z̄_t − c̄_t), and symmetrically.
    let c = b.center_of(t);
    let (v, c) = if conj { (Expr::var(t), c) } else { (Expr::var_conj(t), c.conj()) };
    Expr::sum(vec![Expr::constant(c), v.scale(C64::new(-1.0, 0.0))])
}

fn derive(e: &Expr, t: usize, conj: bool) -> Expr {
    match e.kind() {
        Kind::Const(_) | Kind::Param { .. } => Expr::zero(),
        Kind::Var { index, conj: c } => {
            if *index == t && *c == conj {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Kind::Sum(v) => Expr::sum(v.iter().map(|x| wirtinger(x, t, conj)).collect()),
        Kind::Product(v) => {
            let mut terms = Vec::new();
            for i in 0..v.len() {
                let di = wirtinger(&v[i], t, conj);
                if di.is_zero() {
                    continue;
                }
                let mut fs: Vec<Expr> = v.clone();
                fs[i] = di;
                terms.push(Expr::product(fs));
            }
            Expr::sum(terms)
        }
        Kind::Pow(b, k) => {
            let db = wirtinger(b, t, conj);
            if db.is_zero() {
                return Expr::zero();
            }
            Expr::product(vec![Expr::real(*k as f64), b.pow(k - 1), db])
        }
        Kind::Exp(a) => {
            let da = wirtinger(a, t, conj);
            if da.is_zero() {
                return Expr::zero();
            }
            Expr::product(vec![e.clone(), da])
        }
        Kind::Log(a) => {
            let da = wirtinger(a, t, conj);
            if da.is_zero() {
                return Expr::zero();
            }
            Expr::product(vec![da, a.pow(-1)])
        }
        Kind::Bump(b) => {
            let gap = Expr::ball_gap(b.clone());
            Expr::product(vec![e.clone(), gap.pow(-2), gap_derivative(b, t, conj)])
        }
        Kind::BallGap(b) => gap_derivative(b, t, conj),
    }
}

/// Applies `∂^{a_t}_{z_t} ∂^{b_t}_{z̄_t}` for every variable, simplifying
/// after each step. `orders[t] = (a_t, b_t)`.
pub fn apply_mixed_partial(e: &Expr, orders: &[(u32, u32)], cap: u32) -> Result<Expr, OrderCapExceeded> {
    let total: u32 = orders.iter().map(|(a, b)| a + b).sum();
    if total > cap {
        return Err(OrderCapExceeded { requested: total, cap });
    }
    let mut cur = e.simplify();
    for (t, &(a, b)) in orders.iter().enumerate() {
        for _ in 0..a {
            cur = wirtinger(&cur, t, false);
        }
        for _ in 0..b {
            cur = wirtinger(&cur, t, true);
        }
    }
    Ok(cur)
}
