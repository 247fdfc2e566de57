//! Symbolic differentiation with light algebraic simplification.
//!
//! Derivatives of the elementary functions are written back in terms of the
//! functions themselves (`sigmoid' = sigmoid·(1−sigmoid)`, `tanh' = 1−tanh²`,
//! `tan' = 1+tan²`) so repeated differentiation — Taylor coefficients of ODE
//! solutions are built this way — stays inside the expression language.

use super::{Expr, Func};

/// Partial derivative of `e` with respect to `var`, simplified.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    simplify(&raw_derivative(e, var))
}

fn raw_derivative(e: &Expr, var: &str) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(v) => Expr::Const(if v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => -raw_derivative(a, var),
        Expr::Add(a, b) => raw_derivative(a, var) + raw_derivative(b, var),
        Expr::Sub(a, b) => raw_derivative(a, var) - raw_derivative(b, var),
        Expr::Mul(a, b) => {
            raw_derivative(a, var) * (**b).clone() + (**a).clone() * raw_derivative(b, var)
        }
        Expr::Div(a, b) => {
            let num = raw_derivative(a, var) * (**b).clone()
                - (**a).clone() * raw_derivative(b, var);
            num.div((**b).clone().pow(2))
        }
        Expr::Pow(a, n) => match n {
            0 => Expr::Const(0.0),
            1 => raw_derivative(a, var),
            n => {
                Expr::Const(*n as f64) * (**a).clone().pow(n - 1) * raw_derivative(a, var)
            }
        },
        Expr::Apply(f, a) => {
            let arg = (**a).clone();
            let outer = match f {
                Func::Cos => -Expr::apply(Func::Sin, arg),
                Func::Sin => Expr::apply(Func::Cos, arg),
                Func::Tan => Expr::Const(1.0) + Expr::apply(Func::Tan, arg).pow(2),
                Func::Exp => Expr::apply(Func::Exp, arg),
                Func::Sigmoid => {
                    let s = Expr::apply(Func::Sigmoid, arg);
                    s.clone() * (Expr::Const(1.0) - s)
                }
                Func::Tanh => Expr::Const(1.0) - Expr::apply(Func::Tanh, arg).pow(2),
            };
            outer * raw_derivative(a, var)
        }
    }
}

/// Constant folding and identity elimination. Arithmetic on literals folds at
/// f64 precision (this defines the model being analyzed, it does not weaken
/// enclosures); elementary-function applications are deliberately left
/// unfolded so that interval and Taylor evaluation keep their error terms.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => match simplify(a) {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => -other,
        },
        Expr::Add(a, b) => match (simplify(a), simplify(b)) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (Expr::Const(z), other) | (other, Expr::Const(z)) if z == 0.0 => other,
            (Expr::Const(x), Expr::Add(y, rest)) | (Expr::Add(y, rest), Expr::Const(x)) => {
                if let Expr::Const(y) = *y {
                    simplify(&(Expr::Const(x + y) + *rest))
                } else {
                    Expr::Const(x) + (*y + *rest)
                }
            }
            (other, Expr::Const(x)) => Expr::Const(x) + other,
            (x, y) => x + y,
        },
        Expr::Sub(a, b) => match (simplify(a), simplify(b)) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
            (x, Expr::Const(z)) if z == 0.0 => x,
            (Expr::Const(z), y) if z == 0.0 => simplify(&-y),
            (x, y) => x - y,
        },
        Expr::Mul(a, b) => match (simplify(a), simplify(b)) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
            (Expr::Const(o), other) | (other, Expr::Const(o)) if o == 1.0 => other,
            (Expr::Const(x), Expr::Neg(y)) | (Expr::Neg(y), Expr::Const(x)) => {
                simplify(&(Expr::Const(-x) * *y))
            }
            (Expr::Const(x), Expr::Mul(y, rest)) | (Expr::Mul(y, rest), Expr::Const(x)) => {
                if let Expr::Const(y) = *y {
                    simplify(&(Expr::Const(x * y) * *rest))
                } else {
                    Expr::Const(x) * (*y * *rest)
                }
            }
            (other, Expr::Const(x)) => Expr::Const(x) * other,
            (x, y) => x * y,
        },
        Expr::Div(a, b) => match (simplify(a), simplify(b)) {
            (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
            (x, Expr::Const(o)) if o == 1.0 => x,
            (x, y) => x.div(y),
        },
        Expr::Pow(a, n) => match (simplify(a), *n) {
            (_, 0) => Expr::Const(1.0),
            (x, 1) => x,
            (Expr::Const(c), n) => Expr::Const(c.powi(n as i32)),
            (x, n) => x.pow(n),
        },
        Expr::Apply(f, a) => Expr::apply(*f, simplify(a)),
    }
}
