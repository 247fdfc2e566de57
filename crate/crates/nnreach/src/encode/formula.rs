//! Real-arithmetic formula export for sigmoid networks, in two forms.
//!
//! The direct form writes each neuron as `h = 1/(1 + exp(−(w·y + b)))` over
//! the boxed inputs, chains layers through named post-activations, and
//! closes with the affine outputs and the queried output predicate.
//!
//! The exponential-free form holds for a single hidden layer: scale the
//! inputs by a common decimal denominator `d₀` so every hidden weight
//! becomes an integer `r = d₀·w`, then substitute `y_j := e^{−x_j/d₀}`. Each
//! neuron's denominator turns into a monomial in the `y`s — negative
//! exponents routed through reciprocal partners `z_j` tied by `y_j·z_j = 1`
//! — so after multiplying the `h` constraints through by their denominators
//! the whole formula is polynomial arithmetic over boxed variables. Interval
//! endpoints `e^{±bound/d₀}` and the constants `e^{−b}` are emitted as
//! floating-point approximations; a header comment records `d₀` and that
//! caveat rather than asserting any decidability claim.

use super::EncodeError;
use crate::automaton::Relation;
use crate::interval::{scalar, Interval};
use crate::neural::{Activation, Layer, NeuralNetwork};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Which formula text to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormulaForm {
    /// Direct form with an explicit `exp` symbol; any sigmoid depth.
    Phi0,
    /// Exponential-free polynomial form; single hidden layer only.
    ExpFree,
}

/// The question the formula closes with: `output ⋈ bound`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputPredicate {
    /// 0-based output index.
    pub output: usize,
    /// Comparison direction.
    pub relation: Relation,
    /// Right-hand constant.
    pub bound: f64,
}

/// The integer scaffolding of the exponential-free rewrite.
#[derive(Clone, Debug, PartialEq)]
pub struct FormulaRewrite {
    /// Common decimal denominator of the hidden weight matrix.
    pub d0: u64,
    /// Scaled hidden weights `r[i][j] = d₀·w[i][j]`, exactly integral.
    pub r: Vec<Vec<i64>>,
    /// Domain of each substituted input `y_j`: `[e^{−β_j/d₀}, e^{−α_j/d₀}]`
    /// for the original box `x_j ∈ [α_j, β_j]`.
    pub y_bounds: Vec<Interval>,
    /// Input indices whose monomials need the reciprocal partner `z_j`
    /// (some neuron has `r[i][j] < 0`), each tied by a `y_j·z_j = 1` row.
    pub reciprocal_inputs: Vec<usize>,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact small-integer fraction for a weight, read from its shortest decimal
/// form — the same digits a weight file would carry.
fn decimal_fraction(w: f64) -> Result<(i64, u64), EncodeError> {
    let guard = |detail: &str| EncodeError::NonRationalWeightGuard {
        weight: w,
        detail: detail.to_string(),
    };
    if !w.is_finite() {
        return Err(guard("not finite"));
    }
    let repr = format!("{w}");
    let (mantissa, exp10) = match repr.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().map_err(|_| guard("unreadable exponent"))?),
        None => (repr.as_str(), 0),
    };
    let negative = mantissa.starts_with('-');
    let unsigned = mantissa.trim_start_matches('-');
    let (int_part, frac_part) = unsigned.split_once('.').unwrap_or((unsigned, ""));
    let digits = format!("{int_part}{frac_part}");
    let mut numerator: i128 = digits.parse().map_err(|_| guard("unreadable digits"))?;
    if negative {
        numerator = -numerator;
    }
    // w = numerator / 10^scale with scale possibly ≤ 0.
    let scale = frac_part.len() as i32 - exp10;
    if scale.unsigned_abs() > 18 {
        return Err(guard("more than 18 decimal places"));
    }
    let (num, den): (i128, i128) = if scale >= 0 {
        (numerator, 10i128.pow(scale as u32))
    } else {
        let factor = 10i128.pow((-scale) as u32);
        (numerator.checked_mul(factor).ok_or_else(|| guard("digits overflow"))?, 1)
    };
    let g = gcd(num.unsigned_abs(), den as u128).max(1);
    let num = num / g as i128;
    let den = den / g as i128;
    Ok((
        i64::try_from(num).map_err(|_| guard("numerator overflows i64"))?,
        u64::try_from(den).expect("positive reduced denominator"),
    ))
}

/// The single-hidden-layer shape the exponential-free form needs: a sigmoid
/// layer, optionally followed by one linear readout.
fn split_exp_free(nn: &NeuralNetwork) -> Result<(&Layer, Option<&Layer>), EncodeError> {
    let reject = |l: usize, a: Activation| EncodeError::UnsupportedActivation {
        layer: l,
        activation: a.name().to_string(),
    };
    match nn.layers.as_slice() {
        [hidden] => match hidden.activation {
            Activation::Sigmoid => Ok((hidden, None)),
            a => Err(reject(1, a)),
        },
        [hidden, readout] => {
            if hidden.activation != Activation::Sigmoid {
                return Err(reject(1, hidden.activation));
            }
            if readout.activation != Activation::Linear {
                return Err(reject(2, readout.activation));
            }
            Ok((hidden, Some(readout)))
        }
        layers => Err(EncodeError::ExpFreeNeedsSingleHiddenLayer {
            hidden: layers.len().saturating_sub(1),
        }),
    }
}

/// Builds the integer rewrite for a single-hidden-layer sigmoid network over
/// `input_box`: the common decimal denominator `d₀`, the integral scaled
/// weights, the substituted input domains, and which inputs need reciprocal
/// partners.
pub fn formula_rewrite(
    nn: &NeuralNetwork,
    input_box: &[Interval],
) -> Result<FormulaRewrite, EncodeError> {
    if input_box.len() != nn.input_arity {
        return Err(EncodeError::BoxArityMismatch {
            expected: nn.input_arity,
            found: input_box.len(),
        });
    }
    let (hidden, _) = split_exp_free(nn)?;

    let mut fractions: Vec<Vec<(i64, u64)>> = Vec::with_capacity(hidden.rows());
    let mut d0: u64 = 1;
    for row in &hidden.weights {
        let mut frac_row = Vec::with_capacity(row.len());
        for &w in row {
            let (num, den) = decimal_fraction(w)?;
            let g = gcd(d0 as u128, den as u128);
            d0 = u64::try_from((d0 as u128 / g) * den as u128).map_err(|_| {
                EncodeError::NonRationalWeightGuard {
                    weight: w,
                    detail: "common denominator overflows u64".to_string(),
                }
            })?;
            frac_row.push((num, den));
        }
        fractions.push(frac_row);
    }

    let mut r = Vec::with_capacity(fractions.len());
    for (row, wrow) in fractions.iter().zip(&hidden.weights) {
        let mut r_row = Vec::with_capacity(row.len());
        for (&(num, den), &w) in row.iter().zip(wrow) {
            let scaled = num as i128 * (d0 / den) as i128;
            r_row.push(i64::try_from(scaled).map_err(|_| EncodeError::NonRationalWeightGuard {
                weight: w,
                detail: "scaled weight overflows i64".to_string(),
            })?);
        }
        r.push(r_row);
    }

    let y_bounds = input_box
        .iter()
        .map(|iv| {
            Interval::new((-iv.hi() / d0 as f64).exp(), (-iv.lo() / d0 as f64).exp())
                .expect("exp is monotone")
        })
        .collect();
    let reciprocal_inputs = (0..nn.input_arity)
        .filter(|j| r.iter().any(|row| row[*j] < 0))
        .collect();

    Ok(FormulaRewrite { d0, r, y_bounds, reciprocal_inputs })
}

/// Strict SMT-LIB real literal: plain decimal digits, no exponent notation,
/// negatives wrapped as `(- …)`. Exact for every finite `f64` because the
/// shortest round-trip decimal is re-expanded digit by digit.
fn smt_real(v: f64) -> String {
    debug_assert!(v.is_finite(), "formula constants must be finite");
    if v == 0.0 {
        return "0.0".to_string();
    }
    if v < 0.0 {
        return format!("(- {})", smt_real(-v));
    }
    let repr = format!("{v}");
    match repr.split_once(['e', 'E']) {
        None => {
            if repr.contains('.') {
                repr
            } else {
                format!("{repr}.0")
            }
        }
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().expect("f64 display exponent");
            let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
            let digits = format!("{int_part}{frac_part}");
            let point = int_part.len() as i32 + exp;
            if point <= 0 {
                format!("0.{}{}", "0".repeat((-point) as usize), digits)
            } else if point as usize >= digits.len() {
                format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
            } else {
                format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
            }
        }
    }
}

/// `(+ (* w₁ v₁) … b)` — the affine form used by neuron and output rows.
fn affine_sexp(weights: &[f64], names: &[String], bias: f64) -> String {
    let mut out = String::from("(+");
    for (w, v) in weights.iter().zip(names) {
        let _ = write!(out, " (* {} {})", smt_real(*w), v);
    }
    let _ = write!(out, " {})", smt_real(bias));
    out
}

fn push_declare(out: &mut String, name: &str) {
    let _ = writeln!(out, "(declare-const {name} Real)");
}

fn push_box(out: &mut String, name: &str, iv: &Interval) {
    let _ = writeln!(out, "(assert (>= {name} {}))", smt_real(iv.lo()));
    let _ = writeln!(out, "(assert (<= {name} {}))", smt_real(iv.hi()));
}

fn predicate_line(names: &[String], predicate: &OutputPredicate) -> String {
    format!(
        "(assert ({} {} {}))",
        predicate.relation,
        names[predicate.output],
        smt_real(predicate.bound),
    )
}

fn phi0_text(
    nn: &NeuralNetwork,
    input_box: &[Interval],
    predicate: &OutputPredicate,
) -> Result<String, EncodeError> {
    let last = nn.layers.len() - 1;
    for (l, layer) in nn.layers.iter().enumerate() {
        let ok = match layer.activation {
            Activation::Sigmoid => true,
            Activation::Linear => l == last,
            Activation::Tanh => false,
        };
        if !ok {
            return Err(EncodeError::UnsupportedActivation {
                layer: l + 1,
                activation: layer.activation.name().to_string(),
            });
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "; sigmoid network as a real formula, direct form");
    let _ = writeln!(
        out,
        "; inputs y1..y{} boxed; each neuron h = 1/(1 + exp(-(w.y + b)))",
        nn.input_arity,
    );
    out.push_str("(declare-fun exp (Real) Real)\n");

    let input_names: Vec<String> = (1..=nn.input_arity).map(|j| format!("y{j}")).collect();
    for name in &input_names {
        push_declare(&mut out, name);
    }
    let mut layer_names: Vec<Vec<String>> = Vec::new();
    for (l, layer) in nn.layers.iter().enumerate() {
        let names: Vec<String> = (1..=layer.rows())
            .map(|i| if l == last { format!("u{i}") } else { format!("h{}_{}", l + 1, i) })
            .collect();
        for name in &names {
            push_declare(&mut out, name);
        }
        layer_names.push(names);
    }

    for (name, iv) in input_names.iter().zip(input_box) {
        push_box(&mut out, name, iv);
    }
    let mut prev = &input_names;
    for (l, layer) in nn.layers.iter().enumerate() {
        for i in 0..layer.rows() {
            let name = &layer_names[l][i];
            let affine = affine_sexp(&layer.weights[i], prev, layer.bias[i]);
            match layer.activation {
                Activation::Sigmoid => {
                    let _ = writeln!(
                        out,
                        "(assert (= {name} (/ 1.0 (+ 1.0 (exp (- {affine}))))))",
                    );
                }
                Activation::Linear => {
                    let _ = writeln!(out, "(assert (= {name} {affine}))");
                }
                Activation::Tanh => unreachable!("rejected above"),
            }
        }
        prev = &layer_names[l];
    }
    out.push_str(&predicate_line(&layer_names[last], predicate));
    out.push_str("\n(check-sat)\n");
    Ok(out)
}

/// One neuron's monomial `(* y^r… z^−r… e^{−b})`, folded to a bare factor
/// when only one remains.
fn monomial_sexp(r_row: &[i64], bias: f64) -> String {
    let mut factors = Vec::new();
    for (j, &r) in r_row.iter().enumerate() {
        let (base, power) = if r >= 0 { (format!("y{}", j + 1), r) } else { (format!("z{}", j + 1), -r) };
        match power {
            0 => {}
            1 => factors.push(base),
            p => factors.push(format!("(^ {base} {p})")),
        }
    }
    factors.push(smt_real((-bias).exp()));
    if factors.len() == 1 {
        factors.pop().expect("just pushed")
    } else {
        format!("(* {})", factors.join(" "))
    }
}

fn exp_free_text(
    nn: &NeuralNetwork,
    input_box: &[Interval],
    predicate: &OutputPredicate,
) -> Result<String, EncodeError> {
    let rewrite = formula_rewrite(nn, input_box)?;
    let (hidden, readout) = split_exp_free(nn)?;

    let mut out = String::new();
    let _ = writeln!(out, "; sigmoid network as a real formula, exponential-free form");
    let _ = writeln!(out, "; d0 = {} (common decimal denominator of the hidden weights)", rewrite.d0);
    let _ = writeln!(out, "; y{{j}} stands for exp(-x{{j}}/d0); scaled weights are integers");
    let _ = writeln!(out, "; interval endpoints and e^(-bias) constants below are floating-point");
    let _ = writeln!(out, "; approximations of exponentials; their exact-rationality side");
    let _ = writeln!(out, "; condition is recorded here, not enforced");

    let arity = nn.input_arity;
    let y_names: Vec<String> = (1..=arity).map(|j| format!("y{j}")).collect();
    for name in &y_names {
        push_declare(&mut out, name);
    }
    for &j in &rewrite.reciprocal_inputs {
        push_declare(&mut out, &format!("z{}", j + 1));
    }
    let h_names: Vec<String> = (1..=hidden.rows()).map(|i| format!("h{i}")).collect();
    for name in &h_names {
        push_declare(&mut out, name);
    }
    let n_outputs = readout.map_or(hidden.rows(), Layer::rows);
    let u_names: Vec<String> = (1..=n_outputs).map(|o| format!("u{o}")).collect();
    for name in &u_names {
        push_declare(&mut out, name);
    }

    for (name, iv) in y_names.iter().zip(&rewrite.y_bounds) {
        push_box(&mut out, name, iv);
    }
    for &j in &rewrite.reciprocal_inputs {
        let d0 = rewrite.d0 as f64;
        let z_bounds = Interval::new(
            (input_box[j].lo() / d0).exp(),
            (input_box[j].hi() / d0).exp(),
        )
        .expect("exp is monotone");
        push_box(&mut out, &format!("z{}", j + 1), &z_bounds);
        let _ = writeln!(out, "(assert (= (* y{0} z{0}) 1.0))", j + 1);
    }
    for (i, name) in h_names.iter().enumerate() {
        let monomial = monomial_sexp(&rewrite.r[i], hidden.bias[i]);
        let _ = writeln!(out, "(assert (= (* {name} (+ 1.0 {monomial})) 1.0))");
    }
    match readout {
        Some(layer) => {
            for (o, name) in u_names.iter().enumerate() {
                let affine = affine_sexp(&layer.weights[o], &h_names, layer.bias[o]);
                let _ = writeln!(out, "(assert (= {name} {affine}))");
            }
        }
        None => {
            for (u, h) in u_names.iter().zip(&h_names) {
                let _ = writeln!(out, "(assert (= {u} {h}))");
            }
        }
    }
    out.push_str(&predicate_line(&u_names, predicate));
    out.push_str("\n(check-sat)\n");
    Ok(out)
}

/// Emits the network, the input box, and the output predicate as solver
/// input text in the requested form.
///
/// The direct form allows any depth of sigmoid layers before an optional
/// linear readout; the exponential-free form needs exactly one hidden layer
/// and hidden weights that read back as decimal fractions.
pub fn export_formula(
    nn: &NeuralNetwork,
    input_box: &[Interval],
    predicate: &OutputPredicate,
    form: FormulaForm,
) -> Result<String, EncodeError> {
    if input_box.len() != nn.input_arity {
        return Err(EncodeError::BoxArityMismatch {
            expected: nn.input_arity,
            found: input_box.len(),
        });
    }
    if predicate.output >= nn.output_arity() {
        return Err(EncodeError::PredicateOutput {
            output: predicate.output,
            outputs: nn.output_arity(),
        });
    }
    match form {
        FormulaForm::Phi0 => phi0_text(nn, input_box, predicate),
        FormulaForm::ExpFree => exp_free_text(nn, input_box, predicate),
    }
}

/// The point model the direct form's variables take at input `x`: inputs,
/// every post-activation under the emitted naming, and outputs.
pub fn phi0_valuation(nn: &NeuralNetwork, x: &[f64]) -> BTreeMap<String, f64> {
    let mut vals = BTreeMap::new();
    for (j, v) in x.iter().enumerate() {
        vals.insert(format!("y{}", j + 1), *v);
    }
    let last = nn.layers.len() - 1;
    let mut current = x.to_vec();
    for (l, layer) in nn.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.rows());
        for i in 0..layer.rows() {
            let pre: f64 = layer.weights[i].iter().zip(&current).map(|(w, v)| w * v).sum::<f64>()
                + layer.bias[i];
            let post = layer.activation.apply(pre);
            let name = if l == last { format!("u{}", i + 1) } else { format!("h{}_{}", l + 1, i + 1) };
            vals.insert(name, post);
            next.push(post);
        }
        current = next;
    }
    vals
}

/// The point model of the exponential-free form at input `x`: substituted
/// inputs `y_j = e^{−x_j/d₀}`, reciprocal partners, hidden posts, outputs.
pub fn exp_free_valuation(nn: &NeuralNetwork, d0: u64, x: &[f64]) -> BTreeMap<String, f64> {
    let mut vals = BTreeMap::new();
    for (j, v) in x.iter().enumerate() {
        vals.insert(format!("y{}", j + 1), (-v / d0 as f64).exp());
        vals.insert(format!("z{}", j + 1), (v / d0 as f64).exp());
    }
    let (hidden, readout) = match nn.layers.as_slice() {
        [h] => (h, None),
        [h, r] => (h, Some(r)),
        _ => panic!("exp-free valuation needs a single hidden layer"),
    };
    let mut posts = Vec::with_capacity(hidden.rows());
    for i in 0..hidden.rows() {
        let pre: f64 = hidden.weights[i].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            + hidden.bias[i];
        let post = scalar::sigmoid(pre);
        vals.insert(format!("h{}", i + 1), post);
        posts.push(post);
    }
    match readout {
        Some(layer) => {
            for o in 0..layer.rows() {
                let u: f64 = layer.weights[o].iter().zip(&posts).map(|(w, v)| w * v).sum::<f64>()
                    + layer.bias[o];
                vals.insert(format!("u{}", o + 1), u);
            }
        }
        None => {
            for (i, post) in posts.iter().enumerate() {
                vals.insert(format!("u{}", i + 1), *post);
            }
        }
    }
    vals
}

/// Failure to read or evaluate formula text.
#[derive(Debug, Error)]
pub enum FormulaEvalError {
    /// Structurally broken s-expression text.
    #[error("formula parse: {0}")]
    Parse(String),
    /// A symbol with no value in the supplied assignment.
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    /// An operator applied outside its arity or domain.
    #[error("`{op}`: {reason}")]
    Operator {
        /// Operator name.
        op: String,
        /// What went wrong.
        reason: String,
    },
}

enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn lex(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        let code = line.split(';').next().unwrap_or("");
        for c in code.chars() {
            match c {
                '(' | ')' => {
                    if !current.is_empty() {
                        tokens.push(std::mem::take(&mut current));
                    }
                    tokens.push(c.to_string());
                }
                c if c.is_whitespace() => {
                    if !current.is_empty() {
                        tokens.push(std::mem::take(&mut current));
                    }
                }
                c => current.push(c),
            }
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    tokens
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>, FormulaEvalError> {
    let tokens = lex(text);
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for tok in tokens {
        match tok.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().ok_or_else(|| {
                    FormulaEvalError::Parse("unmatched closing parenthesis".to_string())
                })?;
                if stack.is_empty() {
                    return Err(FormulaEvalError::Parse("unmatched closing parenthesis".to_string()));
                }
                stack.last_mut().expect("checked non-empty").push(Sexp::List(done));
            }
            _ => stack.last_mut().expect("root frame").push(Sexp::Atom(tok)),
        }
    }
    if stack.len() != 1 {
        return Err(FormulaEvalError::Parse("unclosed parenthesis".to_string()));
    }
    Ok(stack.pop().expect("root frame"))
}

fn eval(sexp: &Sexp, vals: &BTreeMap<String, f64>) -> Result<f64, FormulaEvalError> {
    let arity_err = |op: &str, reason: &str| FormulaEvalError::Operator {
        op: op.to_string(),
        reason: reason.to_string(),
    };
    match sexp {
        Sexp::Atom(a) => {
            if let Ok(v) = a.parse::<f64>() {
                if v.is_finite() {
                    return Ok(v);
                }
            }
            vals.get(a).copied().ok_or_else(|| FormulaEvalError::Unbound(a.clone()))
        }
        Sexp::List(items) => {
            let (op, args) = match items.split_first() {
                Some((Sexp::Atom(op), args)) => (op.as_str(), args),
                _ => return Err(FormulaEvalError::Parse("application without operator".to_string())),
            };
            let unary = |args: &[Sexp]| -> Result<f64, FormulaEvalError> {
                match args {
                    [a] => eval(a, vals),
                    _ => Err(arity_err(op, "expects one argument")),
                }
            };
            match op {
                "+" => args.iter().map(|a| eval(a, vals)).sum(),
                "*" => args.iter().map(|a| eval(a, vals)).product(),
                "-" => match args {
                    [a] => Ok(-eval(a, vals)?),
                    [a, b] => Ok(eval(a, vals)? - eval(b, vals)?),
                    _ => Err(arity_err(op, "expects one or two arguments")),
                },
                "/" => match args {
                    [a, b] => Ok(eval(a, vals)? / eval(b, vals)?),
                    _ => Err(arity_err(op, "expects two arguments")),
                },
                "exp" => Ok(unary(args)?.exp()),
                "^" => match args {
                    [a, b] => {
                        let base = eval(a, vals)?;
                        let power = eval(b, vals)?;
                        if power.fract() != 0.0 || power.abs() > i32::MAX as f64 {
                            return Err(arity_err(op, "exponent must be a small integer"));
                        }
                        Ok(base.powi(power as i32))
                    }
                    _ => Err(arity_err(op, "expects two arguments")),
                },
                other => Err(arity_err(other, "unknown operator")),
            }
        }
    }
}

/// Residual of each `(assert …)` in emitted formula text under a variable
/// assignment, in file order: `|a − b|` for equalities, the one-sided excess
/// for inequalities, `0` when the conjunct holds. Declarations and
/// `(check-sat)` are skipped; anything else is a parse error.
pub fn assertion_residuals(
    text: &str,
    vals: &BTreeMap<String, f64>,
) -> Result<Vec<f64>, FormulaEvalError> {
    let forms = parse_sexps(text)?;
    let mut residuals = Vec::new();
    for form in &forms {
        let items = match form {
            Sexp::List(items) => items,
            Sexp::Atom(a) => {
                return Err(FormulaEvalError::Parse(format!("stray atom `{a}` at top level")))
            }
        };
        let head = match items.first() {
            Some(Sexp::Atom(h)) => h.as_str(),
            _ => return Err(FormulaEvalError::Parse("empty top-level form".to_string())),
        };
        match head {
            "declare-const" | "declare-fun" | "check-sat" | "set-logic" | "set-info" => {}
            "assert" => {
                let body = match &items[1..] {
                    [body] => body,
                    _ => {
                        return Err(FormulaEvalError::Parse(
                            "assert takes exactly one body".to_string(),
                        ))
                    }
                };
                let (rel, a, b) = match body {
                    Sexp::List(parts) => match parts.as_slice() {
                        [Sexp::Atom(rel), a, b] if matches!(rel.as_str(), "=" | "<=" | ">=") => {
                            (rel.as_str(), a, b)
                        }
                        _ => {
                            return Err(FormulaEvalError::Parse(
                                "assert body must be a binary comparison".to_string(),
                            ))
                        }
                    },
                    Sexp::Atom(_) => {
                        return Err(FormulaEvalError::Parse(
                            "assert body must be a binary comparison".to_string(),
                        ))
                    }
                };
                let (a, b) = (eval(a, vals)?, eval(b, vals)?);
                residuals.push(match rel {
                    "=" => (a - b).abs(),
                    "<=" => (a - b).max(0.0),
                    ">=" => (b - a).max(0.0),
                    _ => unreachable!("matched above"),
                });
            }
            other => {
                return Err(FormulaEvalError::Parse(format!("unexpected form `{other}`")))
            }
        }
    }
    Ok(residuals)
}
