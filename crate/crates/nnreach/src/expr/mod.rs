//! Symbolic expressions over named real variables.
//!
//! The grammar covers what plant dynamics, guards, resets, and controller
//! constructions need: `+ - * /`, integer powers, unary minus, and the
//! elementary functions `cos sin tan exp sigmoid tanh`. Expressions evaluate
//! generically over any [`Number`] carrier — plain `f64` for simulation,
//! [`Interval`] for range checks, and Taylor models for flowpipes — so a
//! model is written once and reused along every analysis path.

mod diff;
mod parse;

pub use diff::{differentiate, simplify};
pub use parse::{parse, ParseError};

use crate::interval::{scalar, Interval, IntervalError};
use std::collections::BTreeSet;
use thiserror::Error;

/// Elementary functions usable in expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
    Tan,
    Exp,
    Sigmoid,
    Tanh,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Sigmoid => "sigmoid",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "sigmoid" => Func::Sigmoid,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power with a non-negative literal exponent.
    Pow(Box<Expr>, u32),
    Apply(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// A numeric carrier that expressions can be evaluated over.
///
/// `Ctx` carries whatever is needed to lift a bare constant into the carrier
/// (Taylor models need their variable count and order; scalars need nothing).
pub trait Number: Clone {
    type Ctx: Copy;
    fn constant(c: f64, ctx: &Self::Ctx) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Result<Self, EvalError>;
    fn neg(&self) -> Self;
    fn powi(&self, n: u32) -> Self;
    fn apply(&self, f: Func) -> Result<Self, EvalError>;
}

impl Number for f64 {
    type Ctx = ();

    fn constant(c: f64, _: &()) -> f64 {
        c
    }

    fn add(&self, rhs: &f64) -> f64 {
        self + rhs
    }

    fn sub(&self, rhs: &f64) -> f64 {
        self - rhs
    }

    fn mul(&self, rhs: &f64) -> f64 {
        self * rhs
    }

    fn div(&self, rhs: &f64) -> Result<f64, EvalError> {
        if *rhs == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(self / rhs)
    }

    fn neg(&self) -> f64 {
        -self
    }

    fn powi(&self, n: u32) -> f64 {
        f64::powi(*self, n as i32)
    }

    fn apply(&self, f: Func) -> Result<f64, EvalError> {
        Ok(match f {
            Func::Cos => self.cos(),
            Func::Sin => self.sin(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Sigmoid => scalar::sigmoid(*self),
            Func::Tanh => self.tanh(),
        })
    }
}

impl Number for Interval {
    type Ctx = ();

    fn constant(c: f64, _: &()) -> Interval {
        Interval::point(c)
    }

    fn add(&self, rhs: &Interval) -> Interval {
        Interval::add(self, rhs)
    }

    fn sub(&self, rhs: &Interval) -> Interval {
        Interval::sub(self, rhs)
    }

    fn mul(&self, rhs: &Interval) -> Interval {
        Interval::mul(self, rhs)
    }

    fn div(&self, rhs: &Interval) -> Result<Interval, EvalError> {
        Ok(Interval::div(self, rhs)?)
    }

    fn neg(&self) -> Interval {
        Interval::neg(self)
    }

    fn powi(&self, n: u32) -> Interval {
        Interval::powi(self, n)
    }

    fn apply(&self, f: Func) -> Result<Interval, EvalError> {
        Ok(match f {
            Func::Cos => self.cos(),
            Func::Sin => self.sin(),
            Func::Tan => self.tan()?,
            Func::Exp => self.exp()?,
            Func::Sigmoid => self.sigmoid(),
            Func::Tanh => self.tanh(),
        })
    }
}

/// Variable bindings for evaluation.
pub trait VarEnv<V> {
    fn get(&self, name: &str) -> Option<&V>;
}

impl<V> VarEnv<V> for std::collections::HashMap<String, V> {
    fn get(&self, name: &str) -> Option<&V> {
        std::collections::HashMap::get(self, name)
    }
}

impl<V> VarEnv<V> for std::collections::BTreeMap<String, V> {
    fn get(&self, name: &str) -> Option<&V> {
        std::collections::BTreeMap::get(self, name)
    }
}

/// Parallel name/value slices, for callers that keep variables ordered.
impl<V> VarEnv<V> for (&[String], &[V]) {
    fn get(&self, name: &str) -> Option<&V> {
        self.0.iter().position(|n| n == name).map(|i| &self.1[i])
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn apply(f: Func, arg: Expr) -> Expr {
        Expr::Apply(f, Box::new(arg))
    }

    pub fn pow(self, n: u32) -> Expr {
        Expr::Pow(Box::new(self), n)
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }

    /// Evaluates over any carrier; fails on unbound variables or carrier
    /// errors (interval division by zero, tan poles, ...).
    pub fn eval<V: Number>(&self, env: &impl VarEnv<V>, ctx: &V::Ctx) -> Result<V, EvalError> {
        match self {
            Expr::Const(c) => Ok(V::constant(*c, ctx)),
            Expr::Var(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
            Expr::Neg(a) => Ok(a.eval(env, ctx)?.neg()),
            Expr::Add(a, b) => Ok(a.eval(env, ctx)?.add(&b.eval(env, ctx)?)),
            Expr::Sub(a, b) => Ok(a.eval(env, ctx)?.sub(&b.eval(env, ctx)?)),
            Expr::Mul(a, b) => Ok(a.eval(env, ctx)?.mul(&b.eval(env, ctx)?)),
            Expr::Div(a, b) => a.eval(env, ctx)?.div(&b.eval(env, ctx)?),
            Expr::Pow(a, n) => Ok(a.eval(env, ctx)?.powi(*n)),
            Expr::Apply(f, a) => a.eval(env, ctx)?.apply(*f),
        }
    }

    /// Convenience wrapper for scalar evaluation.
    pub fn eval_f64(&self, env: &impl VarEnv<f64>) -> Result<f64, EvalError> {
        self.eval(env, &())
    }

    /// Folds the expression to a constant if it contains no variables.
    /// Elementary functions are folded too (scalar semantics); callers that
    /// need rigorous enclosures should evaluate over intervals instead.
    pub fn fold_constant(&self) -> Option<f64> {
        struct EmptyEnv;
        impl VarEnv<f64> for EmptyEnv {
            fn get(&self, _: &str) -> Option<&f64> {
                None
            }
        }
        self.eval_f64(&EmptyEnv).ok()
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Apply(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Replaces every occurrence of `name` with `with`.
    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => {
                if v == name {
                    with.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(name, with))),
            Expr::Add(a, b) => Expr::Add(
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Expr::Sub(a, b) => Expr::Sub(
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Expr::Mul(a, b) => Expr::Mul(
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(a.substitute(name, with)),
                Box::new(b.substitute(name, with)),
            ),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.substitute(name, with)), *n),
            Expr::Apply(f, a) => Expr::Apply(*f, Box::new(a.substitute(name, with))),
        }
    }

    /// Arguments of every `tan` application in the expression.
    pub fn tan_arguments(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Apply(Func::Tan, a) = e {
                out.push(a.as_ref());
            }
        });
        out
    }

    /// Denominators of every division in the expression.
    pub fn denominators(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Div(_, b) = e {
                out.push(b.as_ref());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Apply(_, a) => a.walk(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Apply(..) => 5,
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    /// Negating a literal folds immediately, keeping trees in the canonical
    /// form the parser also produces (no `Neg` wrapping a constant).
    fn neg(self) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::Neg(Box::new(other)),
        }
    }
}

fn fmt_child(e: &Expr, min_prec: u8, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl std::fmt::Display for Expr {
    /// Canonical printing; `parse(print(e))` reproduces `e` structurally.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                fmt_child(a, 3, f)
            }
            Expr::Add(a, b) => {
                fmt_child(a, 1, f)?;
                write!(f, " + ")?;
                fmt_child(b, 2, f)
            }
            Expr::Sub(a, b) => {
                fmt_child(a, 1, f)?;
                write!(f, " - ")?;
                fmt_child(b, 2, f)
            }
            Expr::Mul(a, b) => {
                fmt_child(a, 2, f)?;
                write!(f, " * ")?;
                fmt_child(b, 3, f)
            }
            Expr::Div(a, b) => {
                fmt_child(a, 2, f)?;
                write!(f, " / ")?;
                fmt_child(b, 3, f)
            }
            Expr::Pow(a, n) => {
                fmt_child(a, 5, f)?;
                write!(f, "^{n}")
            }
            Expr::Apply(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn mountain_car_velocity_update_at_point() {
        let e = parse("v + 0.0015*u - 0.0025*cos(3*p)").unwrap();
        let v1 = e.eval_f64(&env(&[("p", -0.5), ("v", 0.0), ("u", 1.0)])).unwrap();
        assert!((v1 - 0.00132316).abs() <= 1e-8, "got {v1}");
        // Cross-check the parser/eval path against direct arithmetic.
        assert_eq!(v1, 0.0 + 0.0015 * 1.0 - 0.0025 * (3.0f64 * -0.5).cos());
        let v2 = e.eval_f64(&env(&[("p", -0.45), ("v", 0.0), ("u", 0.0)])).unwrap();
        assert!((v2 - -0.00054751672).abs() <= 1e-10, "got {v2}");
        assert_eq!(v2, -0.0025 * 1.35f64.cos());
    }

    #[test]
    fn interval_eval_encloses_scalar_eval() {
        let e = parse("v + 0.0015*u - 0.0025*cos(3*p)").unwrap();
        let boxes: HashMap<String, Interval> = [
            ("p", Interval::new(-0.6, -0.4).unwrap()),
            ("v", Interval::new(-0.01, 0.01).unwrap()),
            ("u", Interval::new(-1.0, 1.0).unwrap()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let enc: Interval = e.eval(&boxes, &()).unwrap();
        for &p in &[-0.6, -0.5, -0.4] {
            for &v in &[-0.01, 0.0, 0.01] {
                for &u in &[-1.0, 0.0, 1.0] {
                    let x = e.eval_f64(&env(&[("p", p), ("v", v), ("u", u)])).unwrap();
                    assert!(enc.contains(x));
                }
            }
        }
    }

    #[test]
    fn constant_cos_interval_eval() {
        let e = parse("cos(-1.5)").unwrap();
        let enc: Interval = e
            .eval(&HashMap::<String, Interval>::new(), &())
            .unwrap();
        assert!(enc.contains(0.0707372016677029));
        assert!(enc.width() < 1e-12);
    }

    #[test]
    fn unbound_variable_reported_by_name() {
        let e = parse("x + y").unwrap();
        let err = e.eval_f64(&env(&[("x", 1.0)])).unwrap_err();
        assert_eq!(err, EvalError::UnboundVariable("y".into()));
    }

    #[test]
    fn division_by_zero_interval_rejected() {
        let e = parse("1/x").unwrap();
        let boxes: HashMap<String, Interval> =
            [("x".to_string(), Interval::new(-1.0, 1.0).unwrap())].into();
        assert!(matches!(e.eval::<Interval>(&boxes, &()), Err(EvalError::Interval(_))));
        assert_eq!(e.eval_f64(&env(&[("x", 0.0)])), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn substitution_rewrites_variables() {
        let e = parse("x + cos(x)").unwrap();
        let s = e.substitute("x", &parse("2*y").unwrap());
        assert_eq!(s, parse("2*y + cos(2*y)").unwrap());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-10.0..10.0f64).prop_map(Expr::Const),
            prop_oneof![Just("x"), Just("y"), Just("z_1")].prop_map(Expr::var),
        ];
        leaf.prop_recursive(4, 64, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.div(b)),
                inner.clone().prop_map(|a| -a),
                (inner.clone(), 0..4u32).prop_map(|(a, n)| a.pow(n)),
                (
                    prop_oneof![
                        Just(Func::Cos),
                        Just(Func::Sin),
                        Just(Func::Tan),
                        Just(Func::Exp),
                        Just(Func::Sigmoid),
                        Just(Func::Tanh)
                    ],
                    inner
                )
                    .prop_map(|(f, a)| Expr::apply(f, a)),
            ]
        })
    }

    proptest! {
        /// Printing then reparsing reproduces the tree exactly.
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        /// Interval evaluation of a point box encloses scalar evaluation.
        #[test]
        fn point_interval_eval_consistent(e in arb_expr(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
            let scalar_env = env(&[("x", x), ("y", y), ("z_1", 0.5)]);
            let iv_env: HashMap<String, Interval> = scalar_env
                .iter()
                .map(|(k, v)| (k.clone(), Interval::point(*v)))
                .collect();
            if let Ok(v) = e.eval_f64(&scalar_env) {
                if v.is_finite() {
                    if let Ok(enc) = e.eval::<Interval>(&iv_env, &()) {
                        prop_assert!(enc.contains(v), "value {} outside {}", v, enc);
                    }
                }
            }
        }
    }
}
