//! Big-M mixed-integer encoding of feedforward networks.
//!
//! Every sigmoid/tanh neuron is bracketed by a piecewise-linear sandwich
//! over its interval-propagated pre-activation range. One binary per piece
//! selects the active segment, the binaries of a neuron sum to one, and four
//! big-M rows per piece pin the post-activation between the piece's lines
//! and the pre-activation inside the piece's slab. Linear output layers stay
//! exact equality rows, so a linear-only network degenerates to a plain LP.

use super::lp::{parse_lp, LpBound};
use super::pwl::{pwl_sandwich, PwlSandwich};
use super::EncodeError;
use crate::interval::Interval;
use crate::neural::{Activation, NeuralNetwork};
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Headroom added to every big-M constant over its exact worst-case slack,
/// so rounding in the constant's own computation cannot cut a feasible
/// point.
const BIG_M_PAD: f64 = 1e-6;

/// Ceiling on piece-choice combinations [`milp_output_hull`] will enumerate.
const MAX_ASSIGNMENTS: u128 = 4_000_000;

/// One nonlinear neuron's encoding block.
struct NeuronBlock {
    /// Pre-activation variable name.
    pre: String,
    /// Post-activation variable name (`u…` on the final layer).
    post: String,
    /// Interval-propagated pre-activation range.
    pre_bounds: Interval,
    /// Activation image of `pre_bounds`.
    post_bounds: Interval,
    /// Sandwich over `pre_bounds`.
    sandwich: PwlSandwich,
    /// Binary selector names, one per piece.
    binaries: Vec<String>,
    /// Weights into the previous stage's variables.
    weights: Vec<f64>,
    /// Affine offset.
    bias: f64,
}

/// One emitted layer.
enum Stage {
    /// Affine rows only (final linear layer).
    Linear {
        names: Vec<String>,
        bounds: Vec<Interval>,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    /// Sandwiched neurons.
    Nonlinear { blocks: Vec<NeuronBlock> },
}

/// The full encoding; rendering and the brute-force audit share it.
struct Encoding {
    input_names: Vec<String>,
    input_box: Vec<Interval>,
    stages: Vec<Stage>,
    /// Variables each stage reads (inputs for stage 0, then post names).
    stage_inputs: Vec<Vec<String>>,
    output_names: Vec<String>,
    n_pieces: usize,
}

fn affine_range(weights: &[f64], bias: f64, ranges: &[Interval]) -> Interval {
    let mut acc = Interval::point(bias);
    for (w, r) in weights.iter().zip(ranges) {
        acc = acc.add(&r.scale(*w));
    }
    acc
}

fn encode(nn: &NeuralNetwork, input_box: &[Interval], n_pieces: usize) -> Result<Encoding, EncodeError> {
    assert!(n_pieces >= 1, "at least one sandwich piece");
    if input_box.len() != nn.input_arity {
        return Err(EncodeError::BoxArityMismatch {
            expected: nn.input_arity,
            found: input_box.len(),
        });
    }

    let input_names: Vec<String> = (1..=nn.input_arity).map(|j| format!("y{j}")).collect();
    let mut prev_names = input_names.clone();
    let mut ranges: Vec<Interval> = input_box.to_vec();
    let mut stages = Vec::new();
    let mut stage_inputs = Vec::new();
    let last = nn.layers.len() - 1;

    for (l, layer) in nn.layers.iter().enumerate() {
        let is_last = l == last;
        let pre: Vec<Interval> = (0..layer.rows())
            .map(|r| affine_range(&layer.weights[r], layer.bias[r], &ranges))
            .collect();
        stage_inputs.push(prev_names.clone());
        match layer.activation {
            Activation::Linear => {
                if !is_last {
                    return Err(EncodeError::UnsupportedActivation {
                        layer: l + 1,
                        activation: layer.activation.name().to_string(),
                    });
                }
                let names: Vec<String> = (1..=layer.rows()).map(|o| format!("u{o}")).collect();
                prev_names = names.clone();
                stages.push(Stage::Linear {
                    names,
                    bounds: pre.clone(),
                    weights: layer.weights.clone(),
                    bias: layer.bias.clone(),
                });
                ranges = pre;
            }
            act => {
                let mut blocks = Vec::with_capacity(layer.rows());
                for r in 0..layer.rows() {
                    let post = if is_last {
                        format!("u{}", r + 1)
                    } else {
                        format!("h{}_{}", l + 1, r + 1)
                    };
                    let post_bounds = match act {
                        Activation::Sigmoid => pre[r].sigmoid(),
                        Activation::Tanh => pre[r].tanh(),
                        Activation::Linear => unreachable!("handled above"),
                    };
                    blocks.push(NeuronBlock {
                        pre: format!("x{}_{}", l + 1, r + 1),
                        post,
                        pre_bounds: pre[r],
                        post_bounds,
                        sandwich: pwl_sandwich(act, pre[r], n_pieces),
                        binaries: (1..=n_pieces)
                            .map(|k| format!("d{}_{}_{}", l + 1, r + 1, k))
                            .collect(),
                        weights: layer.weights[r].clone(),
                        bias: layer.bias[r],
                    });
                }
                prev_names = blocks.iter().map(|b| b.post.clone()).collect();
                ranges = blocks.iter().map(|b| b.post_bounds).collect();
                stages.push(Stage::Nonlinear { blocks });
            }
        }
    }

    Ok(Encoding {
        input_names,
        input_box: input_box.to_vec(),
        output_names: prev_names,
        stages,
        stage_inputs,
        n_pieces,
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes `±c₁ v₁ ± c₂ v₂ …`, omitting unit coefficients.
fn push_terms(out: &mut String, terms: &[(f64, &str)]) {
    for (i, (c, v)) in terms.iter().enumerate() {
        if i == 0 {
            if *c < 0.0 {
                out.push_str("- ");
            }
        } else {
            out.push_str(if *c < 0.0 { " - " } else { " + " });
        }
        let mag = c.abs();
        if mag != 1.0 {
            let _ = write!(out, "{} ", num(mag));
        }
        out.push_str(v);
    }
}

fn push_row(out: &mut String, name: &str, terms: &[(f64, &str)], rel: &str, rhs: f64) {
    let _ = write!(out, " {name}: ");
    push_terms(out, terms);
    let _ = writeln!(out, " {rel} {}", num(rhs));
}

/// The four big-M rows of one piece, with per-row constants sized from the
/// neuron's ranges: each row must be slack over the whole feasible box when
/// its binary is off, and exactly the piece constraint when it is on.
fn push_piece_rows(out: &mut String, b: &NeuronBlock, k: usize) {
    let (xl, xh) = (b.pre_bounds.lo(), b.pre_bounds.hi());
    let (hl, hh) = (b.post_bounds.lo(), b.post_bounds.hi());
    let (a, z) = (b.sandwich.breakpoints[k], b.sandwich.breakpoints[k + 1]);
    let low = b.sandwich.lower[k];
    let up = b.sandwich.upper[k];
    let m = low.slope;
    let d = b.binaries[k].as_str();
    let tag = d.trim_start_matches('d');

    // post ≤ upper line:  h − m·x ≤ cu + M(1−d)
    let m_up = (hh - (m * xl).min(m * xh) - up.intercept).max(0.0) + BIG_M_PAD;
    push_row(
        out,
        &format!("up{tag}"),
        &[(1.0, b.post.as_str()), (-m, b.pre.as_str()), (m_up, d)],
        "<=",
        m_up + up.intercept,
    );
    // post ≥ lower line:  m·x − h ≤ −cl + M(1−d)
    let m_lo = ((m * xl).max(m * xh) + low.intercept - hl).max(0.0) + BIG_M_PAD;
    push_row(
        out,
        &format!("lo{tag}"),
        &[(m, b.pre.as_str()), (-1.0, b.post.as_str()), (m_lo, d)],
        "<=",
        m_lo - low.intercept,
    );
    // pre inside the piece slab:  a ≤ x ≤ z when d = 1.
    let m_slo = (a - xl).max(0.0) + BIG_M_PAD;
    push_row(out, &format!("slo{tag}"), &[(-1.0, b.pre.as_str()), (m_slo, d)], "<=", m_slo - a);
    let m_shi = (xh - z).max(0.0) + BIG_M_PAD;
    push_row(out, &format!("shi{tag}"), &[(1.0, b.pre.as_str()), (m_shi, d)], "<=", m_shi + z);
}

fn render(enc: &Encoding) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ big-M encoding of a {}-input feedforward network, {} piece(s) per neuron",
        enc.input_names.len(),
        enc.n_pieces,
    );
    let _ = writeln!(
        out,
        "\\ neuron ranges from interval propagation; objective targets the first output",
    );
    let _ = writeln!(
        out,
        "\\ retarget by editing the objective line (Maximize or Minimize, any of {}..{})",
        enc.output_names[0],
        enc.output_names[enc.output_names.len() - 1],
    );
    out.push_str("Maximize\n");
    let _ = writeln!(out, " obj: {}", enc.output_names[0]);
    out.push_str("Subject To\n");

    for (s, stage) in enc.stages.iter().enumerate() {
        let inputs = &enc.stage_inputs[s];
        match stage {
            Stage::Linear { names, weights, bias, .. } => {
                for (o, name) in names.iter().enumerate() {
                    let mut terms: Vec<(f64, &str)> = vec![(1.0, name.as_str())];
                    for (w, v) in weights[o].iter().zip(inputs) {
                        terms.push((-w, v.as_str()));
                    }
                    push_row(&mut out, &format!("out{}", o + 1), &terms, "=", bias[o]);
                }
            }
            Stage::Nonlinear { blocks } => {
                for (r, b) in blocks.iter().enumerate() {
                    let mut terms: Vec<(f64, &str)> = vec![(1.0, b.pre.as_str())];
                    for (w, v) in b.weights.iter().zip(inputs) {
                        terms.push((-w, v.as_str()));
                    }
                    push_row(&mut out, &format!("pre{}_{}", s + 1, r + 1), &terms, "=", b.bias);

                    let sum_terms: Vec<(f64, &str)> =
                        b.binaries.iter().map(|d| (1.0, d.as_str())).collect();
                    push_row(&mut out, &format!("sum{}_{}", s + 1, r + 1), &sum_terms, "=", 1.0);

                    for k in 0..b.sandwich.n_pieces() {
                        push_piece_rows(&mut out, b, k);
                    }
                }
            }
        }
    }

    out.push_str("Bounds\n");
    for (name, iv) in enc.input_names.iter().zip(&enc.input_box) {
        let _ = writeln!(out, " {} <= {} <= {}", num(iv.lo()), name, num(iv.hi()));
    }
    for stage in &enc.stages {
        match stage {
            Stage::Linear { names, bounds, .. } => {
                for (name, iv) in names.iter().zip(bounds) {
                    let _ = writeln!(out, " {} <= {} <= {}", num(iv.lo()), name, num(iv.hi()));
                }
            }
            Stage::Nonlinear { blocks } => {
                for b in blocks {
                    let _ = writeln!(
                        out,
                        " {} <= {} <= {}",
                        num(b.pre_bounds.lo()),
                        b.pre,
                        num(b.pre_bounds.hi()),
                    );
                    let _ = writeln!(
                        out,
                        " {} <= {} <= {}",
                        num(b.post_bounds.lo()),
                        b.post,
                        num(b.post_bounds.hi()),
                    );
                }
            }
        }
    }

    let binaries: Vec<&str> = enc
        .stages
        .iter()
        .flat_map(|s| match s {
            Stage::Nonlinear { blocks } => blocks
                .iter()
                .flat_map(|b| b.binaries.iter().map(String::as_str))
                .collect::<Vec<_>>(),
            Stage::Linear { .. } => Vec::new(),
        })
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        let _ = writeln!(out, " {}", binaries.join(" "));
    }
    out.push_str("End\n");
    out
}

/// Emits the network as CPLEX-LP text over `input_box`, sandwiching every
/// nonlinear neuron with `n_pieces` pieces.
///
/// The objective line maximises the first output; a header comment explains
/// how to retarget it. Before returning, the text is parsed back through the
/// bundled reader and audited structurally — a failure there is an emitter
/// bug surfacing as [`EncodeError::LpSelfCheck`], never a property of the
/// network.
pub fn export_milp(
    nn: &NeuralNetwork,
    input_box: &[Interval],
    n_pieces: usize,
) -> Result<String, EncodeError> {
    let enc = encode(nn, input_box, n_pieces)?;
    let text = render(&enc);

    let parsed = parse_lp(&text).map_err(|e| EncodeError::LpSelfCheck(e.to_string()))?;
    let n_binaries: usize = enc
        .stages
        .iter()
        .map(|s| match s {
            Stage::Nonlinear { blocks } => blocks.iter().map(|b| b.binaries.len()).sum(),
            Stage::Linear { .. } => 0,
        })
        .sum();
    if parsed.binaries.len() != n_binaries {
        return Err(EncodeError::LpSelfCheck(format!(
            "binary count {} after parse-back, {} emitted",
            parsed.binaries.len(),
            n_binaries,
        )));
    }
    let bounded: BTreeSet<&str> = parsed
        .bounds
        .iter()
        .map(|b| match b {
            LpBound::Range { var, .. } | LpBound::Free { var } => var.as_str(),
        })
        .collect();
    let binary: BTreeSet<&str> = parsed.binaries.iter().map(String::as_str).collect();
    let used = parsed
        .rows
        .iter()
        .flat_map(|r| r.terms.iter())
        .chain(parsed.objective.iter());
    for (_, var) in used {
        if !bounded.contains(var.as_str()) && !binary.contains(var.as_str()) {
            return Err(EncodeError::LpSelfCheck(format!(
                "`{var}` appears in a row but has neither bounds nor binary status",
            )));
        }
    }
    Ok(text)
}

/// Output ranges from brute-force enumeration of every binary assignment of
/// the same encoding [`export_milp`] emits.
///
/// For each piece choice the feasible set is propagated with interval
/// arithmetic — pre-activations meet their piece slab, post-activations sit
/// between the piece's lines — and infeasible choices are dropped. The hull
/// over assignments therefore contains every point the MILP admits, and in
/// particular the network's true range over the box. Exponential in the
/// neuron count by design: an audit oracle for small networks, refused above
/// a fixed assignment budget.
pub fn milp_output_hull(
    nn: &NeuralNetwork,
    input_box: &[Interval],
    n_pieces: usize,
) -> Result<Vec<Interval>, EncodeError> {
    let enc = encode(nn, input_box, n_pieces)?;
    let n_blocks: usize = enc
        .stages
        .iter()
        .map(|s| match s {
            Stage::Nonlinear { blocks } => blocks.len(),
            Stage::Linear { .. } => 0,
        })
        .sum();
    let assignments = (n_pieces as u128)
        .checked_pow(n_blocks as u32)
        .unwrap_or(u128::MAX);
    if assignments > MAX_ASSIGNMENTS {
        return Err(EncodeError::EnumerationTooLarge { assignments });
    }

    let mut hull: Vec<Option<Interval>> = vec![None; enc.output_names.len()];
    let mut choice = vec![0usize; n_blocks];
    loop {
        if let Some(outputs) = propagate_assignment(&enc, &choice) {
            for (h, o) in hull.iter_mut().zip(outputs) {
                *h = Some(match h {
                    Some(prev) => prev.hull(&o),
                    None => o,
                });
            }
        }
        // Odometer over piece choices.
        let mut pos = 0;
        loop {
            if pos == n_blocks {
                let hull = hull
                    .into_iter()
                    .map(|h| h.expect("sandwich pieces cover each pre-activation range"))
                    .collect();
                return Ok(hull);
            }
            choice[pos] += 1;
            if choice[pos] < n_pieces {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// Interval propagation under one piece assignment; `None` when some piece
/// slab misses its neuron's reachable pre-activation range.
fn propagate_assignment(enc: &Encoding, choice: &[usize]) -> Option<Vec<Interval>> {
    let mut ranges: Vec<Interval> = enc.input_box.clone();
    let mut next_block = 0usize;
    for stage in &enc.stages {
        match stage {
            Stage::Linear { weights, bias, .. } => {
                ranges = (0..weights.len())
                    .map(|o| affine_range(&weights[o], bias[o], &ranges))
                    .collect();
            }
            Stage::Nonlinear { blocks } => {
                let mut post = Vec::with_capacity(blocks.len());
                for b in blocks {
                    let k = choice[next_block];
                    next_block += 1;
                    let pre = affine_range(&b.weights, b.bias, &ranges);
                    let slab = Interval::new(b.sandwich.breakpoints[k], b.sandwich.breakpoints[k + 1])
                        .expect("breakpoints ascend");
                    let x = pre.intersect(&slab)?;
                    let low = b.sandwich.lower[k];
                    let up = b.sandwich.upper[k];
                    let s_lo = (low.slope * x.lo()).min(low.slope * x.hi()) + low.intercept;
                    let s_hi = (up.slope * x.lo()).max(up.slope * x.hi()) + up.intercept;
                    let s = Interval::new(s_lo, s_hi).expect("upper line above lower line");
                    post.push(s.intersect(&b.post_bounds)?);
                }
                ranges = post;
            }
        }
    }
    Some(ranges)
}

#[cfg(test)]
mod tests {
    use super::super::lp::LpSense;
    use super::*;
    use crate::interval::scalar;
    use crate::neural::{eval_network, Layer};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn single_sigmoid() -> NeuralNetwork {
        NeuralNetwork::new(
            1,
            vec![Layer {
                weights: vec![vec![1.0]],
                bias: vec![0.0],
                activation: Activation::Sigmoid,
            }],
        )
        .unwrap()
    }

    fn linear_net() -> NeuralNetwork {
        NeuralNetwork::new(
            2,
            vec![Layer {
                weights: vec![vec![3.0, 5.0]],
                bias: vec![0.0],
                activation: Activation::Linear,
            }],
        )
        .unwrap()
    }

    fn toy_net() -> NeuralNetwork {
        NeuralNetwork::new(
            2,
            vec![
                Layer {
                    weights: vec![vec![0.3, 0.2], vec![0.1, 0.5]],
                    bias: vec![0.1, 0.2],
                    activation: Activation::Sigmoid,
                },
                Layer {
                    weights: vec![vec![3.0, 5.0]],
                    bias: vec![0.0],
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_piece_neuron_emits_the_expected_census() {
        let text = export_milp(&single_sigmoid(), &[iv(-1.0, 1.0)], 2).unwrap();
        let lp = parse_lp(&text).unwrap();
        assert_eq!(lp.sense, LpSense::Maximize);
        assert_eq!(lp.objective, vec![(1.0, "u1".to_string())]);
        assert_eq!(lp.binaries.len(), 2);
        let by_prefix = |p: &str| lp.rows.iter().filter(|r| r.name.starts_with(p)).count();
        assert_eq!(by_prefix("sum"), 1);
        let big_m = by_prefix("up") + by_prefix("lo") + by_prefix("slo") + by_prefix("shi");
        assert_eq!(big_m, 8);
        assert_eq!(by_prefix("pre"), 1);
        assert_eq!(lp.rows.len(), 10);
    }

    #[test]
    fn linear_network_collapses_to_a_plain_lp() {
        let the_box = [iv(2.0, 3.0), iv(1.0, 2.0)];
        let text = export_milp(&linear_net(), &the_box, 4).unwrap();
        let lp = parse_lp(&text).unwrap();
        assert!(lp.binaries.is_empty());
        assert_eq!(lp.rows.len(), 1);

        let hull = milp_output_hull(&linear_net(), &the_box, 4).unwrap();
        // Exact affine corner range: 3·[2,3] + 5·[1,2] = [11, 19].
        assert!(hull[0].contains(11.0) && hull[0].contains(19.0));
        assert!(hull[0].lo() >= 11.0 - 1e-9 && hull[0].hi() <= 19.0 + 1e-9);
    }

    #[test]
    fn hidden_linear_layer_is_rejected() {
        let nn = NeuralNetwork {
            input_arity: 1,
            layers: vec![
                Layer { weights: vec![vec![1.0]], bias: vec![0.0], activation: Activation::Linear },
                Layer { weights: vec![vec![1.0]], bias: vec![0.0], activation: Activation::Linear },
            ],
        };
        assert!(matches!(
            export_milp(&nn, &[iv(0.0, 1.0)], 2),
            Err(EncodeError::UnsupportedActivation { layer: 1, .. })
        ));
    }

    #[test]
    fn enumerated_hull_brackets_the_corner_oracle() {
        let the_box = [iv(2.0, 3.0), iv(1.0, 2.0)];
        let hull = milp_output_hull(&toy_net(), &the_box, 100).unwrap();
        // Both weight signs are positive, so the exact range runs corner to
        // corner; with 100 pieces per neuron the hull must stay within a
        // whisker of it on both sides.
        let exact_lo = 8.0 * scalar::sigmoid(0.9);
        let exact_hi = 3.0 * scalar::sigmoid(1.4) + 5.0 * scalar::sigmoid(1.5);
        assert!(hull[0].contains(exact_lo) && hull[0].contains(exact_hi));
        assert!(hull[0].lo() >= exact_lo - 1e-3 && hull[0].hi() <= exact_hi + 1e-3);
        assert!((hull[0].hi() - 6.49442).abs() <= 1e-3);
    }

    #[test]
    fn true_network_points_satisfy_every_emitted_row() {
        let text = export_milp(&single_sigmoid(), &[iv(-1.0, 1.0)], 2).unwrap();
        let lp = parse_lp(&text).unwrap();
        let s = pwl_sandwich(Activation::Sigmoid, iv(-1.0, 1.0), 2);
        for i in 0..=20 {
            let y = -1.0 + 0.1 * i as f64;
            let piece = s.piece_of(y);
            let mut vals = BTreeMap::from([
                ("y1".to_string(), y),
                ("x1_1".to_string(), y),
                ("u1".to_string(), scalar::sigmoid(y)),
            ]);
            for (k, d) in lp.binaries.iter().enumerate() {
                vals.insert(d.clone(), if k == piece { 1.0 } else { 0.0 });
            }
            for row in &lp.rows {
                let lhs: f64 = row.terms.iter().map(|(c, v)| c * vals[v]).sum();
                let ok = match row.relation {
                    crate::automaton::Relation::Le => lhs <= row.rhs + 1e-9,
                    crate::automaton::Relation::Ge => lhs >= row.rhs - 1e-9,
                    crate::automaton::Relation::Eq => (lhs - row.rhs).abs() <= 1e-9,
                };
                assert!(ok, "row {} violated at y={y}: lhs={lhs} rhs={}", row.name, row.rhs);
            }
            for bound in &lp.bounds {
                if let LpBound::Range { var, lo, hi } = bound {
                    let v = vals[var];
                    assert!(*lo <= v && v <= *hi, "bound on {var} violated at y={y}");
                }
            }
        }
    }

    proptest! {
        // Audit-oracle soundness on small networks: every exactly evaluated
        // point output must land inside the enumerated hull.
        #[test]
        fn sampled_points_land_inside_the_enumerated_hull(
            n_hidden in 1usize..=2,
            n_pieces in 1usize..=3,
            use_tanh in any::<bool>(),
            weights in prop::collection::vec(-2.0..2.0f64, 8),
            bias in prop::collection::vec(-1.0..1.0f64, 3),
            lo in -1.0..1.0f64,
            width in 0.1..2.0f64,
            samples in prop::collection::vec(0.0..1.0f64, 8),
        ) {
            let act = if use_tanh { Activation::Tanh } else { Activation::Sigmoid };
            let hidden = Layer {
                weights: (0..n_hidden).map(|r| vec![weights[2 * r], weights[2 * r + 1]]).collect(),
                bias: bias[..n_hidden].to_vec(),
                activation: act,
            };
            let readout = Layer {
                weights: vec![(0..n_hidden).map(|c| weights[4 + c]).collect()],
                bias: vec![bias[2]],
                activation: Activation::Linear,
            };
            let nn = NeuralNetwork::new(2, vec![hidden, readout]).unwrap();
            let the_box = [iv(lo, lo + width), iv(-0.5, 0.5)];

            let hull = milp_output_hull(&nn, &the_box, n_pieces).unwrap();
            let mut points: Vec<[f64; 2]> = vec![
                [the_box[0].lo(), the_box[1].lo()],
                [the_box[0].lo(), the_box[1].hi()],
                [the_box[0].hi(), the_box[1].lo()],
                [the_box[0].hi(), the_box[1].hi()],
            ];
            for pair in samples.chunks(2) {
                points.push([
                    the_box[0].lo() + the_box[0].width() * pair[0],
                    the_box[1].lo() + the_box[1].width() * pair[1],
                ]);
            }
            for p in points {
                let out = eval_network(&nn, &p).unwrap()[0];
                prop_assert!(
                    hull[0].lo() - 1e-9 <= out && out <= hull[0].hi() + 1e-9,
                    "output {out} escapes hull {:?}", hull[0],
                );
            }
        }
    }
}
