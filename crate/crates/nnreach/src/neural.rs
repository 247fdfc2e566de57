//! Neural networks: representation, exact evaluation, weight-file I/O, and
//! the transformation into an equivalent hybrid automaton.
//!
//! The transformation is the heart of the crate. A sigmoid `σ(x)` is the
//! time-1 value of the scalar ODE `ġ = x·g·(1−g)` started at `g(0) = 0.5`
//! (differentiate `σ(t·x)` in `t` to see it); `tanh(x)` likewise solves
//! `ġ = x·(1−g²)` from `g(0) = 0`. A whole layer therefore becomes a mode
//! whose flow runs every neuron's proxy ODE for one time unit, and the affine
//! maps `W·x + b` become resets on the transitions between modes. Flowpipe
//! tools for hybrid systems can then bound the network's output — the
//! automaton's reachable set at the final mode *is* the network image, with
//! no activation-specific approximation step.

use std::fmt::Write as _;

use thiserror::Error;

use crate::automaton::{Constraint, HybridAutomaton, Mode, Transition};
use crate::expr::Expr;
use crate::interval::{scalar, Interval};

/// Activation function applied elementwise after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Logistic sigmoid `1/(1+e^{−x})`.
    Sigmoid,
    /// Hyperbolic tangent.
    Tanh,
    /// Identity (permitted on the output layer only).
    Linear,
}

impl Activation {
    /// Lower-case name used by the weight-file format.
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    /// Inverse of [`Activation::name`].
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    /// Exact scalar application.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => scalar::sigmoid(x),
            Activation::Tanh => scalar::tanh(x),
            Activation::Linear => x,
        }
    }
}

/// One layer: `y = activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Weight matrix, `rows × cols` (row-major).
    pub weights: Vec<Vec<f64>>,
    /// Bias vector, one entry per row.
    pub bias: Vec<f64>,
    /// Elementwise activation.
    pub activation: Activation,
}

impl Layer {
    /// Output width.
    pub fn rows(&self) -> usize {
        self.weights.len()
    }

    /// Input width.
    pub fn cols(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// A fully-connected feedforward network `h = h_L ∘ … ∘ h_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNetwork {
    /// Input arity.
    pub input_arity: usize,
    /// Layers in application order; the last layer's activation may be
    /// `linear`, all earlier ones must be `sigmoid` or `tanh`.
    pub layers: Vec<Layer>,
}

/// Failure to load, evaluate, or transform a network.
#[derive(Debug, Error)]
pub enum NetworkError {
    /// Weight file is syntactically malformed.
    #[error("weight file line {line}: {reason}")]
    FormatError {
        /// 1-based physical line number.
        line: usize,
        /// What went wrong.
        reason: String,
    },
    /// Declared and actual dimensions disagree.
    #[error("layer {layer}: {reason}")]
    DimensionMismatch {
        /// 1-based layer index.
        layer: usize,
        /// What disagrees.
        reason: String,
    },
    /// Input vector length differs from the network's input arity.
    #[error("network takes {expected} inputs, got {found}")]
    ArityMismatch {
        /// Network input arity.
        expected: usize,
        /// Supplied vector length.
        found: usize,
    },
    /// An activation is not admissible in its position.
    #[error("layer {layer}: activation `{activation}` is not supported here")]
    UnsupportedActivation {
        /// 1-based layer index.
        layer: usize,
        /// The offending activation name.
        activation: String,
    },
}

impl NeuralNetwork {
    /// Builds a network, checking the dimension chain: the first layer reads
    /// `input_arity` values, every later layer reads the previous layer's
    /// output, weight rows match bias length, and all entries are finite.
    pub fn new(input_arity: usize, layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::DimensionMismatch {
                layer: 1,
                reason: "network has no layers".to_string(),
            });
        }
        let mut expected_cols = input_arity;
        for (j, layer) in layers.iter().enumerate() {
            let idx = j + 1;
            if layer.rows() == 0 {
                return Err(NetworkError::DimensionMismatch {
                    layer: idx,
                    reason: "layer has no rows".to_string(),
                });
            }
            for row in &layer.weights {
                if row.len() != layer.cols() {
                    return Err(NetworkError::DimensionMismatch {
                        layer: idx,
                        reason: format!(
                            "ragged weight matrix: row of length {} in a {}-column layer",
                            row.len(),
                            layer.cols()
                        ),
                    });
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(NetworkError::DimensionMismatch {
                        layer: idx,
                        reason: "non-finite weight".to_string(),
                    });
                }
            }
            if layer.cols() != expected_cols {
                return Err(NetworkError::DimensionMismatch {
                    layer: idx,
                    reason: format!(
                        "layer reads {} values but the previous stage produces {}",
                        layer.cols(),
                        expected_cols
                    ),
                });
            }
            if layer.bias.len() != layer.rows() {
                return Err(NetworkError::DimensionMismatch {
                    layer: idx,
                    reason: format!(
                        "{} biases for {} rows",
                        layer.bias.len(),
                        layer.rows()
                    ),
                });
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(NetworkError::DimensionMismatch {
                    layer: idx,
                    reason: "non-finite bias".to_string(),
                });
            }
            expected_cols = layer.rows();
        }
        Ok(NeuralNetwork { input_arity, layers })
    }

    /// Output arity (rows of the last layer).
    pub fn output_arity(&self) -> usize {
        self.layers.last().map_or(0, Layer::rows)
    }

    /// Width `N` of the proxy state in the automaton encoding: the widest
    /// vector that ever sits in the activation register — the input itself or
    /// any nonlinear layer's output.
    pub fn padded_width(&self) -> usize {
        let mut n = self.input_arity;
        for layer in &self.layers {
            if layer.activation != Activation::Linear {
                n = n.max(layer.rows());
            }
        }
        n
    }
}

/// Exact forward pass.
pub fn eval_network(nn: &NeuralNetwork, y: &[f64]) -> Result<Vec<f64>, NetworkError> {
    if y.len() != nn.input_arity {
        return Err(NetworkError::ArityMismatch {
            expected: nn.input_arity,
            found: y.len(),
        });
    }
    let mut current = y.to_vec();
    for layer in &nn.layers {
        let mut next = Vec::with_capacity(layer.rows());
        for (row, b) in layer.weights.iter().zip(&layer.bias) {
            let pre: f64 = row.iter().zip(&current).map(|(w, x)| w * x).sum::<f64>() + b;
            next.push(layer.activation.apply(pre));
        }
        current = next;
    }
    Ok(current)
}

/// Parses the textual weight-file format:
///
/// ```text
/// nnet <input-arity> <output-arity> <layer-count>
/// layer <rows> <cols> <activation>
/// <cols weights>            (one line per row)
/// <rows biases>             (one line)
/// ```
///
/// one `layer` block per layer, `#`-prefixed lines and blank lines ignored,
/// numbers in ordinary decimal or scientific notation.
pub fn load_network(text: &str) -> Result<NeuralNetwork, NetworkError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next_line = move |what: &str| {
        lines.next().ok_or_else(|| NetworkError::FormatError {
            line: text.lines().count() + 1,
            reason: format!("unexpected end of file, expected {what}"),
        })
    };

    fn parse_num<T: std::str::FromStr>(
        line: usize,
        token: &str,
        what: &str,
    ) -> Result<T, NetworkError> {
        token.parse().map_err(|_| NetworkError::FormatError {
            line,
            reason: format!("cannot parse `{token}` as {what}"),
        })
    }

    let (line, header) = next_line("the `nnet` header")?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "nnet" {
        return Err(NetworkError::FormatError {
            line,
            reason: "expected `nnet <inputs> <outputs> <layers>`".to_string(),
        });
    }
    let p: usize = parse_num(line, tokens[1], "the input arity")?;
    let q: usize = parse_num(line, tokens[2], "the output arity")?;
    let l: usize = parse_num(line, tokens[3], "the layer count")?;
    if l == 0 {
        return Err(NetworkError::FormatError {
            line,
            reason: "layer count must be at least 1".to_string(),
        });
    }

    let mut layers = Vec::with_capacity(l);
    for layer_idx in 1..=l {
        let (line, header) = next_line("a `layer` header")?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 4 || tokens[0] != "layer" {
            return Err(NetworkError::FormatError {
                line,
                reason: "expected `layer <rows> <cols> <activation>`".to_string(),
            });
        }
        let rows: usize = parse_num(line, tokens[1], "the row count")?;
        let cols: usize = parse_num(line, tokens[2], "the column count")?;
        let activation = Activation::from_name(tokens[3]).ok_or_else(|| {
            NetworkError::FormatError {
                line,
                reason: format!(
                    "unknown activation `{}`, expected sigmoid, tanh, or linear",
                    tokens[3]
                ),
            }
        })?;

        let mut read_row = |what: String, expected: usize| -> Result<Vec<f64>, NetworkError> {
            let (line, row) = next_line(&what)?;
            let values = row
                .split_whitespace()
                .map(|t| parse_num::<f64>(line, t, "a decimal number"))
                .collect::<Result<Vec<f64>, _>>()?;
            if values.len() != expected {
                return Err(NetworkError::DimensionMismatch {
                    layer: layer_idx,
                    reason: format!("{} values on line {line}, expected {expected}", values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::FormatError {
                    line,
                    reason: "non-finite value".to_string(),
                });
            }
            Ok(values)
        };

        let mut weights = Vec::with_capacity(rows);
        for r in 0..rows {
            weights.push(read_row(format!("weight row {} of layer {layer_idx}", r + 1), cols)?);
        }
        let bias = read_row(format!("the bias row of layer {layer_idx}"), rows)?;
        layers.push(Layer { weights, bias, activation });
    }

    let nn = NeuralNetwork::new(p, layers)?;
    if nn.output_arity() != q {
        return Err(NetworkError::DimensionMismatch {
            layer: l,
            reason: format!(
                "header declares {q} outputs but the last layer has {} rows",
                nn.output_arity()
            ),
        });
    }
    Ok(nn)
}

/// Renders a network in the [`load_network`] format. Numbers print in
/// shortest-round-trip form, so `load_network(format_network(nn)) == nn`
/// bit for bit.
pub fn format_network(nn: &NeuralNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "nnet {} {} {}",
        nn.input_arity,
        nn.output_arity(),
        nn.layers.len()
    );
    for layer in &nn.layers {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            layer.rows(),
            layer.cols(),
            layer.activation.name()
        );
        for row in &layer.weights {
            let _ = writeln!(out, "{}", join_numbers(row));
        }
        let _ = writeln!(out, "{}", join_numbers(&layer.bias));
    }
    out
}

fn join_numbers(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

/// `Σ weights[k]·vars[k] + bias` as an expression, skipping zero terms and
/// unit coefficients for readable output.
fn affine_expr(weights: &[f64], bias: f64, vars: &[String]) -> Expr {
    let mut acc: Option<Expr> = None;
    for (w, name) in weights.iter().zip(vars) {
        if *w == 0.0 {
            continue;
        }
        let term = if *w == 1.0 {
            Expr::Var(name.clone())
        } else {
            Expr::Const(*w) * Expr::Var(name.clone())
        };
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    match acc {
        Some(a) if bias == 0.0 => a,
        Some(a) => a + Expr::Const(bias),
        None => Expr::Const(bias),
    }
}

/// Proxy-ODE right-hand side for one neuron: the flow that carries the
/// activation register from its rest value to `activation(J)` in unit time.
fn proxy_flow(activation: Activation, xp: &str, xj: &str) -> Expr {
    let xp = Expr::Var(xp.to_string());
    let xj = Expr::Var(xj.to_string());
    match activation {
        // ġ = J·g·(1−g), g(0) = 0.5 — lands on σ(J) at t = 1.
        Activation::Sigmoid => xj * xp.clone() * (Expr::Const(1.0) - xp),
        // ġ = J·(1−g²), g(0) = 0 — lands on tanh(J) at t = 1.
        Activation::Tanh => xj * (Expr::Const(1.0) - Expr::Pow(Box::new(xp), 2)),
        Activation::Linear => unreachable!("linear layers never get a flow mode"),
    }
}

/// Rest value the activation register is reset to before a layer's flow.
fn rest_value(activation: Activation) -> f64 {
    match activation {
        Activation::Sigmoid => 0.5,
        Activation::Tanh => 0.0,
        Activation::Linear => unreachable!("linear layers never get a flow mode"),
    }
}

/// Transforms a network into an equivalent hybrid automaton.
///
/// Continuous state: an activation register `xp1..xpN` (`N` =
/// [`NeuralNetwork::padded_width`]), a pre-activation register `xj1..xjN`,
/// outputs `u1..uq`, and a clock `t`. The run starts in mode `q0` with the
/// network input sitting in `xp1..xpp`. Each nonlinear layer is one mode:
/// the entering reset latches `xj = W·xp + b` (reading the previous layer's
/// activations) and rests `xp`; the mode's flow integrates every neuron's
/// proxy ODE until the clock guard `t = 1` fires. The final transition writes
/// the outputs — the last affine map if the output layer is linear, or the
/// activation register itself if the output layer was nonlinear and already
/// ran as a mode. The reachable values of `u` in the terminal mode equal the
/// network's output exactly; unused register slots are pinned to zero so
/// every mode's flow stays total.
///
/// Requires every hidden activation to be `sigmoid` or `tanh` (the output
/// layer may also be `linear`).
pub fn network_to_automaton(nn: &NeuralNetwork) -> Result<HybridAutomaton, NetworkError> {
    let l = nn.layers.len();
    for (j, layer) in nn.layers.iter().enumerate() {
        if layer.activation == Activation::Linear && j + 1 != l {
            return Err(NetworkError::UnsupportedActivation {
                layer: j + 1,
                activation: layer.activation.name().to_string(),
            });
        }
    }

    let n = nn.padded_width();
    let q = nn.output_arity();
    let xp: Vec<String> = (1..=n).map(|i| format!("xp{i}")).collect();
    let xj: Vec<String> = (1..=n).map(|i| format!("xj{i}")).collect();
    let u: Vec<String> = (1..=q).map(|i| format!("u{i}")).collect();
    let mut variables: Vec<String> = Vec::with_capacity(2 * n + q + 1);
    variables.extend(xp.iter().cloned());
    variables.extend(xj.iter().cloned());
    variables.extend(u.iter().cloned());
    variables.push("t".to_string());

    // Layers that run as flow modes: all of them, except a linear output
    // layer, which folds into the final reset.
    let flow_layers: Vec<usize> = (0..l)
        .filter(|&j| nn.layers[j].activation != Activation::Linear)
        .collect();

    let mut modes = vec![Mode::idle("q0")];
    let mut transitions = Vec::new();
    let mut prev_mode = "q0".to_string();

    for (m, &j) in flow_layers.iter().enumerate() {
        let layer = &nn.layers[j];
        let mode_name = format!("q{}", m + 1);

        // Reset on entry: latch pre-activations from the previous stage's
        // values (still sitting in xp), then rest the activation register.
        // Resets evaluate simultaneously on the pre-jump state, so the xj
        // assignments read the old xp.
        let mut enter = Transition::new(prev_mode.clone(), mode_name.clone());
        if m > 0 {
            enter = enter.with_guard(Constraint::eq(Expr::Var("t".to_string()), 1.0));
        }
        for i in 0..n {
            let (xj_val, xp_val) = if i < layer.rows() {
                (
                    affine_expr(&layer.weights[i], layer.bias[i], &xp[..layer.cols()]),
                    Expr::Const(rest_value(layer.activation)),
                )
            } else {
                (Expr::Const(0.0), Expr::Const(0.0))
            };
            enter = enter.with_reset(xj[i].clone(), xj_val).with_reset(xp[i].clone(), xp_val);
        }
        enter = enter.with_reset("t", Expr::Const(0.0));
        transitions.push(enter);

        // Flow: every live neuron integrates its proxy ODE; everything else
        // holds still while the clock runs to the t = 1 guard.
        let mut flow = Vec::with_capacity(variables.len());
        for i in 0..n {
            flow.push(if i < layer.rows() {
                proxy_flow(layer.activation, &xp[i], &xj[i])
            } else {
                Expr::Const(0.0)
            });
        }
        flow.extend(std::iter::repeat(Expr::Const(0.0)).take(n + q));
        flow.push(Expr::Const(1.0));
        modes.push(Mode::ode(
            mode_name.clone(),
            flow,
            vec![Constraint::le(Expr::Var("t".to_string()), 1.0)],
        ));
        prev_mode = mode_name;
    }

    // Final transition into the terminal mode: write the outputs.
    let terminal = format!("q{}", flow_layers.len() + 1);
    modes.push(Mode::idle(terminal.clone()));
    let mut finish = Transition::new(prev_mode, terminal.clone());
    if !flow_layers.is_empty() {
        finish = finish.with_guard(Constraint::eq(Expr::Var("t".to_string()), 1.0));
    }
    let last = nn.layers.last().expect("layer count checked positive");
    for k in 0..q {
        let value = if last.activation == Activation::Linear {
            affine_expr(&last.weights[k], last.bias[k], &xp[..last.cols()])
        } else {
            Expr::Var(xp[k].clone())
        };
        finish = finish.with_reset(u[k].clone(), value);
    }
    transitions.push(finish);

    Ok(HybridAutomaton {
        initial_set: vec![Interval::point(0.0); variables.len()],
        inputs: xp[..nn.input_arity].to_vec(),
        observation: u.iter().map(|name| Expr::Var(name.clone())).collect(),
        variables,
        modes,
        transitions,
        initial_mode: "q0".to_string(),
    })
}
