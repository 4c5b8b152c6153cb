//! Fully parenthesized printing that re-parses to the same tree.

use super::{Expr, Kind, Param, C64};
use std::fmt;

fn real(x: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if x.is_sign_negative() && x != 0.0 {
        write!(f, "({x})")
    } else {
        write!(f, "{}", x.abs())
    }
}

pub(crate) fn constant(c: C64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.im == 0.0 {
        return real(c.re, f);
    }
    f.write_str("(")?;
    if c.re != 0.0 {
        real(c.re, f)?;
        f.write_str(" + ")?;
    }
    real(c.im, f)?;
    f.write_str("*i)")
}

fn is_atomic(e: &Expr) -> bool {
    match e.kind() {
        Kind::Var { .. } | Kind::Param { .. } | Kind::Exp(_) | Kind::Log(_) | Kind::Bump(_) | Kind::BallGap(_) => true,
        // negative and complex constants print their own parentheses
        Kind::Const(_) => true,
        _ => false,
    }
}

fn ball_args(name: &str, b: &super::Ball, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{name}(")?;
    real(b.radius, f)?;
    for c in &b.center {
        f.write_str(", ")?;
        constant(*c, f)?;
    }
    f.write_str(")")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Const(c) => constant(*c, f),
            Kind::Var { index, conj } => write!(f, "{}{}", if *conj { "zb" } else { "z" }, index + 1),
            Kind::Param { param, conj } => {
                let name = match param {
                    Param::Lambda => "lambda",
                    Param::Tau => "tau",
                };
                write!(f, "{name}{}", if *conj { "b" } else { "" })
            }
            Kind::Sum(v) => {
                for (i, t) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    if matches!(t.kind(), Kind::Sum(_)) {
                        write!(f, "({t})")?;
                    } else {
                        write!(f, "{t}")?;
                    }
                }
                Ok(())
            }
            Kind::Product(v) => {
                for (i, t) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    if matches!(t.kind(), Kind::Sum(_) | Kind::Product(_)) {
                        write!(f, "({t})")?;
                    } else {
                        write!(f, "{t}")?;
                    }
                }
                Ok(())
            }
            Kind::Pow(b, k) => {
                if is_atomic(b) {
                    write!(f, "{b}")?;
                } else {
                    write!(f, "({b})")?;
                }
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Kind::Exp(a) => write!(f, "exp({a})"),
            Kind::Log(a) => write!(f, "log({a})"),
            Kind::Bump(b) => ball_args("bump", b, f),
            Kind::BallGap(b) => ball_args("ballgap", b, f),
        }
    }
}
