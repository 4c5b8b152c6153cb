//! Evaluation through a compiled instruction tape.
//!
//! A tape lists the DAG nodes in topological order; each instruction writes
//! one register. Products short-circuit on a zero factor, so a bump that is
//! zero outside its ball annihilates the singular rational factors its
//! derivatives carry.

use super::{Ball, Expr, Kind, C64};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of zero")]
    LogDomain,
    #[error("non-finite value")]
    NonFinite,
    #[error("expression uses variable z{needed} but the point has {given} coordinates")]
    Dimension { needed: usize, given: usize },
}

#[derive(Debug, Clone)]
enum Op {
    Const(C64),
    Var(u32),
    VarConj(u32),
    Param(u8, bool),
    Sum(u32, u32),
    Prod(u32, u32),
    Pow(u32, i32),
    Exp(u32),
    Log(u32),
    Bump(u32),
    Gap(u32),
}

/// Compiled, immutable evaluator for one expression.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    args: Vec<u32>,
    balls: Vec<Ball>,
    var_bound: usize,
    uses_params: bool,
}

/// Reusable register storage.
#[derive(Default)]
pub struct TapeScratch {
    regs: Vec<C64>,
}

impl Tape {
    pub fn compile(e: &Expr) -> Tape {
        let mut tape = Tape { ops: Vec::new(), args: Vec::new(), balls: Vec::new(), var_bound: 0, uses_params: false };
        let mut slots: HashMap<u64, u32> = HashMap::new();
        // iterative post-order walk; derivative DAGs can be deep
        let mut stack: Vec<(Expr, bool)> = vec![(e.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if slots.contains_key(&node.id()) {
                continue;
            }
            let children: Vec<&Expr> = match node.kind() {
                Kind::Sum(v) | Kind::Product(v) => v.iter().collect(),
                Kind::Pow(b, _) => vec![b],
                Kind::Exp(a) | Kind::Log(a) => vec![a],
                _ => Vec::new(),
            };
            if !expanded && children.iter().any(|c| !slots.contains_key(&c.id())) {
                stack.push((node.clone(), true));
                for c in children.iter().rev() {
                    if !slots.contains_key(&c.id()) {
                        stack.push(((*c).clone(), false));
                    }
                }
                continue;
            }
            let slot = |x: &Expr| slots[&x.id()];
            let op = match node.kind() {
                Kind::Const(c) => Op::Const(*c),
                Kind::Var { index, conj } => {
                    tape.var_bound = tape.var_bound.max(index + 1);
                    if *conj {
                        Op::VarConj(*index as u32)
                    } else {
                        Op::Var(*index as u32)
                    }
                }
                Kind::Param { param, conj } => {
                    tape.uses_params = true;
                    Op::Param(param.slot() as u8, *conj)
                }
                Kind::Sum(v) | Kind::Product(v) => {
                    let start = tape.args.len() as u32;
                    for c in v {
                        tape.args.push(slot(c));
                    }
                    if matches!(node.kind(), Kind::Sum(_)) {
                        Op::Sum(start, v.len() as u32)
                    } else {
                        Op::Prod(start, v.len() as u32)
                    }
                }
                Kind::Pow(b, k) => Op::Pow(slot(b), *k),
                Kind::Exp(a) => Op::Exp(slot(a)),
                Kind::Log(a) => Op::Log(slot(a)),
                Kind::Bump(b) | Kind::BallGap(b) => {
                    tape.balls.push(b.clone());
                    let i = (tape.balls.len() - 1) as u32;
                    if matches!(node.kind(), Kind::Bump(_)) {
                        Op::Bump(i)
                    } else {
                        Op::Gap(i)
                    }
                }
            };
            slots.insert(node.id(), tape.ops.len() as u32);
            tape.ops.push(op);
        }
        tape
    }

    pub fn uses_params(&self) -> bool {
        self.uses_params
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Fast evaluation: non-finite values propagate instead of erroring.
    /// `params` holds λ and τ.
    #[inline]
    pub fn eval(&self, z: &[C64], params: &[C64; 2], scratch: &mut TapeScratch) -> C64 {
        self.run(z, params, scratch, &mut None)
    }

    /// Evaluation that classifies singular operations when they reach the result.
    pub fn eval_checked(&self, z: &[C64], params: &[C64; 2]) -> Result<C64, EvalError> {
        if z.len() < self.var_bound {
            return Err(EvalError::Dimension { needed: self.var_bound, given: z.len() });
        }
        let mut scratch = TapeScratch::default();
        let mut first_err = Some(None);
        let v = self.run(z, params, &mut scratch, &mut first_err);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(first_err.flatten().unwrap_or(EvalError::NonFinite))
        }
    }

    fn run(&self, z: &[C64], params: &[C64; 2], scratch: &mut TapeScratch, errs: &mut Option<Option<EvalError>>) -> C64 {
        let regs = &mut scratch.regs;
        regs.clear();
        regs.reserve(self.ops.len());
        let zero = C64::new(0.0, 0.0);
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(t) => z.get(t as usize).copied().unwrap_or(zero),
                Op::VarConj(t) => z.get(t as usize).copied().unwrap_or(zero).conj(),
                Op::Param(s, c) => {
                    let p = params[s as usize];
                    if c {
                        p.conj()
                    } else {
                        p
                    }
                }
                Op::Sum(s, n) => {
                    let mut acc = zero;
                    for &a in &self.args[s as usize..(s + n) as usize] {
                        acc += regs[a as usize];
                    }
                    acc
                }
                Op::Prod(s, n) => {
                    let mut acc = C64::new(1.0, 0.0);
                    for &a in &self.args[s as usize..(s + n) as usize] {
                        let x = regs[a as usize];
                        if x == zero {
                            acc = zero;
                            break;
                        }
                        acc *= x;
                    }
                    acc
                }
                Op::Pow(b, k) => {
                    let x = regs[b as usize];
                    if k < 0 && x == zero {
                        if let Some(slot @ None) = errs {
                            *slot = Some(EvalError::DivisionByZero);
                        }
                        C64::new(f64::INFINITY, f64::NAN)
                    } else {
                        pow_int(x, k)
                    }
                }
                Op::Exp(a) => regs[a as usize].exp(),
                Op::Log(a) => {
                    let x = regs[a as usize];
                    if x == zero {
                        if let Some(slot @ None) = errs {
                            *slot = Some(EvalError::LogDomain);
                        }
                    }
                    x.ln()
                }
                Op::Bump(i) => {
                    let g = self.balls[i as usize].gap(z);
                    if g > 0.0 {
                        C64::new((-1.0 / g).exp(), 0.0)
                    } else {
                        zero
                    }
                }
                Op::Gap(i) => C64::new(self.balls[i as usize].gap(z), 0.0),
            };
            regs.push(v);
        }
        regs.last().copied().unwrap_or(zero)
    }
}

#[inline]
fn pow_int(x: C64, k: i32) -> C64 {
    match k {
        0 => C64::new(1.0, 0.0),
        1 => x,
        2 => x * x,
        -1 => x.inv(),
        _ => {
            let mut base = if k < 0 { x.inv() } else { x };
            let mut e = k.unsigned_abs();
            let mut acc = C64::new(1.0, 0.0);
            while e > 0 {
                if e & 1 == 1 {
                    acc *= base;
                }
                base *= base;
                e >>= 1;
            }
            acc
        }
    }
}

/// Evaluate at a point (one complex value per variable); parameters λ, τ are 0.
pub fn evaluate(e: &Expr, point: &[C64]) -> Result<C64, EvalError> {
    Tape::compile(e).eval_checked(point, &[C64::new(0.0, 0.0); 2])
}

/// Evaluate with explicit values for the internal parameters λ and τ.
pub fn evaluate_with(e: &Expr, point: &[C64], lambda: C64, tau: C64) -> Result<C64, EvalError> {
    Tape::compile(e).eval_checked(point, &[lambda, tau])
}
