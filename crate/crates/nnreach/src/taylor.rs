//! Taylor models: multivariate polynomials over the normalized domain
//! `[-1, 1]^n` paired with a validated interval remainder.
//!
//! A Taylor model `(p, I)` encloses every function `f` with
//! `f(x) − p(x) ∈ I` on the domain, so arithmetic on models yields enclosures
//! of arithmetic on functions. Truncation beyond the fixed polynomial order
//! and all floating-point coefficient rounding are pushed into the remainder,
//! keeping results sound. Range bounding deliberately uses the cheap
//! coefficient-sum bound (`constant ± Σ|cᵢ|`); wrappers that need tighter
//! ranges subdivide the domain instead.

use crate::expr::{EvalError, Func, Number};
use crate::interval::{Interval, IntervalError, SLACK_ULPS};
use std::collections::BTreeMap;

/// Hard cap on the polynomial order; derivative tables and factorials are
/// sized for it.
pub const MAX_ORDER: u32 = 8;

/// Pieces used when bounding elementary-function derivatives over a range;
/// plain interval evaluation of the derivative polynomials is too coarse.
const RANGE_SUBDIV: u32 = 16;

type Mono = Vec<u8>;

fn degree(m: &Mono) -> u32 {
    m.iter().map(|&e| e as u32).sum()
}

/// Tracks an upper bound on accumulated coefficient rounding error. Each
/// tracked value contributes `|v|·ε`, at least twice the worst-case rounding
/// of the operation that produced it.
#[derive(Default)]
struct Slack(f64);

impl Slack {
    fn track(&mut self, v: f64) {
        self.0 += v.abs() * f64::EPSILON;
    }

    fn interval(&self) -> Interval {
        Interval::outward(-self.0, self.0, 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaylorModel {
    n_vars: usize,
    order: u32,
    poly: BTreeMap<Mono, f64>,
    remainder: Interval,
}

impl TaylorModel {
    pub fn constant(c: f64, n_vars: usize, order: u32) -> TaylorModel {
        assert!(order >= 1 && order <= MAX_ORDER, "order {order} out of range");
        assert!(c.is_finite());
        let mut poly = BTreeMap::new();
        if c != 0.0 {
            poly.insert(vec![0u8; n_vars], c);
        }
        TaylorModel { n_vars, order, poly, remainder: Interval::ZERO }
    }

    /// The identity in domain variable `i`.
    pub fn var(i: usize, n_vars: usize, order: u32) -> TaylorModel {
        assert!(i < n_vars);
        let mut tm = TaylorModel::constant(0.0, n_vars, order);
        let mut m = vec![0u8; n_vars];
        m[i] = 1;
        tm.poly.insert(m, 1.0);
        tm
    }

    /// `c0 + Σ lin[i]·xᵢ`.
    pub fn affine(c0: f64, lin: &[f64], order: u32) -> TaylorModel {
        let n_vars = lin.len();
        let mut tm = TaylorModel::constant(c0, n_vars, order);
        for (i, &c) in lin.iter().enumerate() {
            if c != 0.0 {
                let mut m = vec![0u8; n_vars];
                m[i] = 1;
                tm.poly.insert(m, c);
            }
        }
        tm
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn remainder(&self) -> Interval {
        self.remainder
    }

    pub fn with_remainder(mut self, r: Interval) -> TaylorModel {
        self.remainder = r;
        self
    }

    /// Adds `extra` to the remainder (interval addition, outward rounded).
    pub fn widen_remainder(mut self, extra: Interval) -> TaylorModel {
        self.remainder = self.remainder.add(&extra);
        self
    }

    /// If the model is exactly a constant (no variable terms, no remainder
    /// width), returns it.
    pub fn as_constant(&self) -> Option<f64> {
        if self.remainder != Interval::ZERO {
            return None;
        }
        match self.poly.len() {
            0 => Some(0.0),
            1 => {
                let (m, &c) = self.poly.iter().next().unwrap();
                (degree(m) == 0).then_some(c)
            }
            _ => None,
        }
    }

    fn assert_compatible(&self, rhs: &TaylorModel) {
        assert!(
            self.n_vars == rhs.n_vars && self.order == rhs.order,
            "Taylor model mismatch: {}v/{} vs {}v/{}",
            self.n_vars,
            self.order,
            rhs.n_vars,
            rhs.order
        );
    }

    pub fn add(&self, rhs: &TaylorModel) -> TaylorModel {
        self.assert_compatible(rhs);
        let mut slack = Slack::default();
        let mut poly = self.poly.clone();
        for (m, &c) in &rhs.poly {
            let v = poly.entry(m.clone()).or_insert(0.0);
            *v += c;
            slack.track(*v);
        }
        poly.retain(|_, c| *c != 0.0);
        TaylorModel {
            n_vars: self.n_vars,
            order: self.order,
            poly,
            remainder: self.remainder.add(&rhs.remainder).add(&slack.interval()),
        }
    }

    pub fn neg(&self) -> TaylorModel {
        let mut out = self.clone();
        for c in out.poly.values_mut() {
            *c = -*c;
        }
        out.remainder = self.remainder.neg();
        out
    }

    pub fn sub(&self, rhs: &TaylorModel) -> TaylorModel {
        self.add(&rhs.neg())
    }

    pub fn add_constant(&self, c: f64) -> TaylorModel {
        let mut slack = Slack::default();
        let mut out = self.clone();
        let v = out.poly.entry(vec![0u8; self.n_vars]).or_insert(0.0);
        *v += c;
        slack.track(*v);
        if *v == 0.0 {
            out.poly.remove(&vec![0u8; self.n_vars]);
        }
        out.remainder = out.remainder.add(&slack.interval());
        out
    }

    pub fn scale(&self, c: f64) -> TaylorModel {
        assert!(c.is_finite());
        if c == 0.0 {
            return TaylorModel::constant(0.0, self.n_vars, self.order);
        }
        let mut slack = Slack::default();
        let mut out = self.clone();
        for v in out.poly.values_mut() {
            *v *= c;
            slack.track(*v);
        }
        out.remainder = self.remainder.scale(c).add(&slack.interval());
        out
    }

    pub fn mul(&self, rhs: &TaylorModel) -> TaylorModel {
        self.assert_compatible(rhs);
        let mut slack = Slack::default();
        let mut poly: BTreeMap<Mono, f64> = BTreeMap::new();
        let mut truncated = 0.0f64;
        for (ma, &ca) in &self.poly {
            for (mb, &cb) in &rhs.poly {
                let p = ca * cb;
                slack.track(p);
                if degree(ma) + degree(mb) <= self.order {
                    let m: Mono = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                    let v = poly.entry(m).or_insert(0.0);
                    *v += p;
                    slack.track(*v);
                } else {
                    // Bounded over [-1,1]^n by its absolute coefficient.
                    truncated += p.abs();
                    slack.track(truncated);
                }
            }
        }
        poly.retain(|_, c| *c != 0.0);
        let cross = self
            .poly_bound()
            .mul(&rhs.remainder)
            .add(&rhs.poly_bound().mul(&self.remainder))
            .add(&self.remainder.mul(&rhs.remainder));
        let remainder = cross
            .add(&Interval::outward(-truncated, truncated, 1))
            .add(&slack.interval());
        TaylorModel { n_vars: self.n_vars, order: self.order, poly, remainder }
    }

    pub fn powi(&self, n: u32) -> TaylorModel {
        match n {
            0 => TaylorModel::constant(1.0, self.n_vars, self.order),
            _ => {
                let mut acc = self.clone();
                for _ in 1..n {
                    acc = acc.mul(self);
                }
                acc
            }
        }
    }

    /// Coefficient-sum range of the polynomial part over `[-1,1]^n`.
    pub fn poly_bound(&self) -> Interval {
        let mut c0 = 0.0f64;
        let mut sum = 0.0f64;
        let mut slack = Slack::default();
        for (m, &c) in &self.poly {
            if degree(m) == 0 {
                c0 = c;
            } else {
                sum += c.abs();
                slack.track(sum);
            }
        }
        let pad = slack.0;
        Interval::outward(c0 - sum - pad, c0 + sum + pad, SLACK_ULPS)
    }

    /// Validated range: polynomial bound plus remainder.
    pub fn bound(&self) -> Interval {
        self.poly_bound().add(&self.remainder)
    }

    /// Polynomial part evaluated at a domain point in plain f64 — a
    /// diagnostic/test helper, not a validated enclosure by itself.
    pub fn poly_eval_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.n_vars);
        let mut acc = 0.0;
        for (m, &c) in &self.poly {
            let mut term = c;
            for (i, &e) in m.iter().enumerate() {
                term *= point[i].powi(e as i32);
            }
            acc += term;
        }
        acc
    }

    /// Antiderivative in domain variable `time_var` with zero constant of
    /// integration, assuming the variable ranges over `[0, 1]` (callers scale
    /// the integrand by the physical step width beforehand). Terms pushed
    /// past the order cap and the integrated remainder are widened soundly.
    pub fn integrate_time(&self, time_var: usize) -> TaylorModel {
        assert!(time_var < self.n_vars);
        let mut slack = Slack::default();
        let mut poly: BTreeMap<Mono, f64> = BTreeMap::new();
        let mut truncated = 0.0f64;
        for (m, &c) in &self.poly {
            let k = m[time_var] as u32;
            let v = c / (k + 1) as f64;
            slack.track(v);
            if degree(m) + 1 <= self.order {
                let mut m2 = m.clone();
                m2[time_var] += 1;
                let e = poly.entry(m2).or_insert(0.0);
                *e += v;
                slack.track(*e);
            } else {
                truncated += v.abs();
                slack.track(truncated);
            }
        }
        poly.retain(|_, c| *c != 0.0);
        // ∫₀ˢ r dτ for s ∈ [0,1] stays inside hull(r, 0).
        let remainder = self
            .remainder
            .hull(&Interval::ZERO)
            .add(&Interval::outward(-truncated, truncated, 1))
            .add(&slack.interval());
        TaylorModel { n_vars: self.n_vars, order: self.order, poly, remainder }
    }

    /// Substitutes `value` for domain variable `var` (exact for `value = 1`,
    /// the step-end evaluation used by the integrator). The variable slot is
    /// kept, it just no longer occurs.
    pub fn substitute_var(&self, var: usize, value: f64) -> TaylorModel {
        assert!(var < self.n_vars);
        assert!(
            (-1.0..=1.0).contains(&value),
            "substitution point {value} outside the normalized domain"
        );
        let mut slack = Slack::default();
        let mut poly: BTreeMap<Mono, f64> = BTreeMap::new();
        for (m, &c) in &self.poly {
            let k = m[var];
            let v = if k == 0 { c } else { c * value.powi(k as i32) };
            if k != 0 {
                slack.track(v);
            }
            let mut m2 = m.clone();
            m2[var] = 0;
            let e = poly.entry(m2).or_insert(0.0);
            *e += v;
            slack.track(*e);
        }
        poly.retain(|_, c| *c != 0.0);
        TaylorModel {
            n_vars: self.n_vars,
            order: self.order,
            poly,
            remainder: self.remainder.add(&slack.interval()),
        }
    }

    /// Composes an elementary function with this model: univariate Taylor
    /// expansion of `f` around the midpoint of the model's range, with a
    /// Lagrange remainder bounded over the whole range. All expansion
    /// coefficients are computed as intervals, so their rounding is carried
    /// into the remainder too.
    pub fn compose_elem(&self, f: Func) -> Result<TaylorModel, IntervalError> {
        let range = self.bound();
        let c = range.midpoint();
        let order = self.order;

        let mut coeffs = Vec::with_capacity(order as usize + 1);
        let mut factorial = 1.0f64;
        for k in 0..=order {
            if k > 0 {
                factorial *= k as f64;
            }
            let d = elem_derivative(f, k, Interval::point(c))?;
            coeffs.push(d.scale(1.0 / factorial));
        }
        let lagrange_deriv = elem_derivative_over(f, order + 1, range)?;

        let d = self.add_constant(-c);
        let mut out = TaylorModel::constant(coeffs[order as usize].midpoint(), self.n_vars, order);
        for k in (0..order).rev() {
            out = out.mul(&d).add_constant(coeffs[k as usize].midpoint());
        }

        // Coefficient enclosure radii, scaled by |d|^k.
        let dabs = Interval::point(d.bound().abs_max());
        let mut err = Interval::ZERO;
        let mut dpow = Interval::point(1.0);
        for coeff in coeffs.iter() {
            let r = coeff.radius() + coeff.midpoint().abs() * f64::EPSILON;
            err = err.add(&Interval::outward(-r, r, 1).mul(&dpow));
            dpow = dpow.mul(&dabs);
        }
        let lagrange = lagrange_deriv
            .mul(&d.bound().powi(order + 1))
            .scale(1.0 / (factorial * (order + 1) as f64));
        Ok(out.widen_remainder(err).widen_remainder(lagrange))
    }
}

impl std::fmt::Display for TaylorModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for (m, c) in &self.poly {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &e) in m.iter().enumerate() {
                if e == 1 {
                    write!(f, "*x{i}")?;
                } else if e > 1 {
                    write!(f, "*x{i}^{e}")?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + {}", self.remainder)
    }
}

// ---------------------------------------------------------------------------
// Derivatives of the elementary functions.
//
// For sigmoid, tanh, and tan the k-th derivative is a fixed polynomial in the
// function value itself (σ' = σ−σ², tanh' = 1−tanh², tan' = 1+tan²), and the
// recurrences keep integer coefficients, so the tables below are exact.
// ---------------------------------------------------------------------------

/// Dense univariate polynomial, ascending powers, exact integer coefficients.
type UniPoly = Vec<f64>;

fn uni_derivative(p: &UniPoly) -> UniPoly {
    (1..p.len()).map(|k| p[k] * k as f64).collect()
}

fn uni_mul(a: &UniPoly, b: &UniPoly) -> UniPoly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Interval Horner evaluation.
fn uni_eval(p: &UniPoly, x: Interval) -> Interval {
    let mut acc = Interval::ZERO;
    for &c in p.iter().rev() {
        acc = acc.mul(&x).add(&Interval::point(c));
    }
    acc
}

/// Range of `p` over `x`: subdivided mean-value form,
/// `p(piece) ⊆ p(mid) + p'(piece)·(piece − mid)`, which tightens the naive
/// interval Horner bound from O(width) to O(width²) per piece.
fn uni_range(p: &UniPoly, x: Interval, pieces: u32) -> Interval {
    if pieces <= 1 || x.width() == 0.0 {
        return uni_eval(p, x);
    }
    let dp = uni_derivative(p);
    let mut out: Option<Interval> = None;
    let w = x.width() / pieces as f64;
    for i in 0..pieces {
        let lo = x.lo() + w * i as f64;
        let hi = if i + 1 == pieces { x.hi() } else { x.lo() + w * (i + 1) as f64 };
        let piece = Interval::outward(lo, hi, 1);
        let mid = Interval::point(piece.midpoint());
        let val = uni_eval(p, mid).add(&uni_eval(&dp, piece).mul(&piece.sub(&mid)));
        out = Some(match out {
            None => val,
            Some(acc) => acc.hull(&val),
        });
    }
    out.unwrap_or(Interval::ZERO)
}

/// Derivative polynomials `d^k f = P_k(f)` for the self-referential
/// functions, built by the recurrence `P_{k+1} = P_k' · chain(f)`.
fn derivative_poly(f: Func, k: u32) -> UniPoly {
    // chain: sigmoid → s − s², tanh/tan → 1 ∓ t².
    let chain: UniPoly = match f {
        Func::Sigmoid => vec![0.0, 1.0, -1.0],
        Func::Tanh => vec![1.0, 0.0, -1.0],
        Func::Tan => vec![1.0, 0.0, 1.0],
        _ => unreachable!("no derivative polynomial for {:?}", f),
    };
    let mut p: UniPoly = vec![0.0, 1.0]; // the function value itself
    for _ in 0..k {
        p = uni_mul(&uni_derivative(&p), &chain);
    }
    p
}

/// Enclosure of `f^{(k)}` at a point interval.
fn elem_derivative(f: Func, k: u32, at: Interval) -> Result<Interval, IntervalError> {
    elem_derivative_impl(f, k, at, 1)
}

/// Enclosure of `f^{(k)}` over a whole range (subdivided for tightness).
fn elem_derivative_over(f: Func, k: u32, over: Interval) -> Result<Interval, IntervalError> {
    elem_derivative_impl(f, k, over, RANGE_SUBDIV)
}

fn elem_derivative_impl(
    f: Func,
    k: u32,
    x: Interval,
    pieces: u32,
) -> Result<Interval, IntervalError> {
    Ok(match f {
        Func::Exp => x.exp()?,
        Func::Sin => match k % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => x.sin().neg(),
            _ => x.cos().neg(),
        },
        Func::Cos => match k % 4 {
            0 => x.cos(),
            1 => x.sin().neg(),
            2 => x.cos().neg(),
            _ => x.sin(),
        },
        Func::Sigmoid => uni_range(&derivative_poly(f, k), x.sigmoid(), pieces),
        Func::Tanh => uni_range(&derivative_poly(f, k), x.tanh(), pieces),
        Func::Tan => uni_range(&derivative_poly(f, k), x.tan()?, pieces),
    })
}

/// Context needed to lift constants when evaluating expressions over models.
#[derive(Clone, Copy, Debug)]
pub struct TmCtx {
    pub n_vars: usize,
    pub order: u32,
}

impl Number for TaylorModel {
    type Ctx = TmCtx;

    fn constant(c: f64, ctx: &TmCtx) -> TaylorModel {
        TaylorModel::constant(c, ctx.n_vars, ctx.order)
    }

    fn add(&self, rhs: &TaylorModel) -> TaylorModel {
        TaylorModel::add(self, rhs)
    }

    fn sub(&self, rhs: &TaylorModel) -> TaylorModel {
        TaylorModel::sub(self, rhs)
    }

    fn mul(&self, rhs: &TaylorModel) -> TaylorModel {
        TaylorModel::mul(self, rhs)
    }

    fn div(&self, rhs: &TaylorModel) -> Result<TaylorModel, EvalError> {
        match rhs.as_constant() {
            Some(c) if c != 0.0 => Ok(self.scale(1.0 / c)),
            Some(_) => Err(EvalError::DivisionByZero),
            None => Err(EvalError::Unsupported("division by a non-constant Taylor model")),
        }
    }

    fn neg(&self) -> TaylorModel {
        TaylorModel::neg(self)
    }

    fn powi(&self, n: u32) -> TaylorModel {
        TaylorModel::powi(self, n)
    }

    fn apply(&self, f: Func) -> Result<TaylorModel, EvalError> {
        Ok(self.compose_elem(f)?)
    }
}
