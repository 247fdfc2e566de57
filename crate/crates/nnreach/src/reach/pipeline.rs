//! Controller reach: propagating Taylor models through a network's automaton
//! form (ode path) or directly through its layers (functional path).
//!
//! The two paths are deliberately independent enclosures of the same map. The
//! ode path walks the automaton the transform produced — apply the entry
//! reset, integrate each activation mode to its clock guard, take the exit
//! reset — so it exercises exactly the published construction. The functional
//! path skips the proxy dynamics and composes each activation as a validated
//! elementary function of the affine pre-activation model. Agreement between
//! them is a standing test oracle; neither is derived from the other.

use crate::automaton::{HybridAutomaton, Mode, ModeKind, Relation, Transition};
use crate::expr::{Expr, Func};
use crate::neural::{Activation, NeuralNetwork};
use crate::taylor::{TaylorModel, TmCtx};

use super::ode::{driver_magnitude, integrate_mode, step_count};
use super::{apply_resets, ControllerPath, ReachSettings, StepFailure};

/// Which layer automaton to walk and how. `segment` is a pipeline-shaped
/// automaton: a deterministic chain of idle and flow modes as produced by the
/// network transform. Inputs are bound to the automaton's declared input
/// variables; the result is the observation vector's enclosure at the
/// terminal mode.
///
/// The functional path needs the source network and fails with
/// `NeedsNetwork` when it is absent.
pub fn layer_reach(
    segment: &HybridAutomaton,
    network: Option<&NeuralNetwork>,
    inputs: &[TaylorModel],
    ctx: TmCtx,
    time_axis: usize,
    settings: &ReachSettings,
    path: ControllerPath,
) -> Result<Vec<TaylorModel>, StepFailure> {
    match path {
        ControllerPath::Ode => pipeline_reach_ode(segment, inputs, ctx, time_axis, settings),
        ControllerPath::Functional => {
            let nn = network.ok_or(StepFailure::NeedsNetwork)?;
            network_reach_functional(nn, inputs, ctx)
        }
    }
}

/// Walks a pipeline automaton on Taylor models: resets are evaluated
/// simultaneously, flow modes are integrated for exactly their clock span
/// (discharging the `t = 1` exit guard by construction), and the observation
/// is read in the terminal mode.
pub(crate) fn pipeline_reach_ode(
    segment: &HybridAutomaton,
    inputs: &[TaylorModel],
    ctx: TmCtx,
    time_axis: usize,
    settings: &ReachSettings,
) -> Result<Vec<TaylorModel>, StepFailure> {
    assert_eq!(
        inputs.len(),
        segment.inputs.len(),
        "one input model per declared input variable"
    );

    // Non-input state starts at the midpoints of the declared initial set
    // (the network transform pins every slot to a point anyway).
    let mut state: Vec<TaylorModel> = segment
        .initial_set
        .iter()
        .map(|iv| TaylorModel::constant(iv.midpoint(), ctx.n_vars, ctx.order))
        .collect();
    for (name, tm) in segment.inputs.iter().zip(inputs) {
        let idx = segment
            .var_index(name)
            .ok_or_else(|| malformed(format!("input {name} is not a state variable")))?;
        state[idx] = tm.clone();
    }

    let mut mode_name = segment.initial_mode.clone();
    // A pipeline visits each mode at most once; anything longer is a cycle.
    for _ in 0..=segment.modes.len() {
        let mode = segment
            .mode(&mode_name)
            .ok_or_else(|| malformed(format!("unknown mode {mode_name}")))?;

        let outgoing: Vec<usize> = segment
            .transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.src == mode_name)
            .map(|(i, _)| i)
            .collect();
        if outgoing.len() > 1 {
            return Err(malformed(format!("mode {mode_name} has multiple exits")));
        }
        let next = outgoing.first().map(|&i| &segment.transitions[i]);

        match mode.kind {
            ModeKind::Idle => {}
            ModeKind::Ode => {
                let tr = next.ok_or_else(|| {
                    malformed(format!("flow mode {mode_name} has no exit"))
                })?;
                let span = clock_span(segment, mode, tr, &state)?;
                let driver = driver_magnitude(&segment.variables, &mode.flow, &state);
                let n = step_count(span, driver, settings.ode_step);
                integrate_mode(
                    &segment.variables,
                    &mode.flow,
                    &mut state,
                    span,
                    n,
                    ctx,
                    time_axis,
                    settings,
                )?;
            }
            ModeKind::DiscreteMap => {
                return Err(malformed(format!(
                    "mode {mode_name} is a discrete map, not a pipeline stage"
                )));
            }
        }

        match next {
            None => {
                let env = (segment.variables.as_slice(), state.as_slice());
                let mut out = Vec::with_capacity(segment.observation.len());
                for expr in &segment.observation {
                    out.push(expr.eval::<TaylorModel>(&env, &ctx)?);
                }
                return Ok(out);
            }
            Some(tr) => {
                apply_resets(&segment.variables, &tr.reset, &mut state, ctx)?;
                mode_name = tr.dst.clone();
            }
        }
    }
    Err(malformed("pipeline does not terminate (mode cycle)".to_string()))
}

fn malformed(detail: String) -> StepFailure {
    StepFailure::Pipeline(detail)
}

/// Extracts the integration span from a flow mode's exit guard, which must be
/// a single `clock = c` constraint on a variable with unit flow and a
/// deterministic current value. Integrating for exactly `c − clock₀` time
/// units discharges the guard without a numeric equality test.
fn clock_span(
    segment: &HybridAutomaton,
    mode: &Mode,
    tr: &Transition,
    state: &[TaylorModel],
) -> Result<f64, StepFailure> {
    let [guard] = tr.guard.as_slice() else {
        return Err(malformed(format!(
            "flow mode {} needs exactly one exit guard",
            mode.name
        )));
    };
    if guard.relation != Relation::Eq {
        return Err(malformed(format!("exit guard of {} must be an equality", mode.name)));
    }
    let Expr::Var(name) = &guard.expr else {
        return Err(malformed(format!("exit guard of {} must test a bare clock", mode.name)));
    };
    let idx = segment
        .var_index(name)
        .ok_or_else(|| malformed(format!("guard variable {name} is not a state variable")))?;
    if !matches!(mode.flow[idx], Expr::Const(c) if c == 1.0) {
        return Err(malformed(format!("guard variable {name} is not a unit clock")));
    }
    let t0 = state[idx]
        .as_constant()
        .ok_or_else(|| malformed(format!("clock {name} must enter {} at a point", mode.name)))?;
    let span = guard.bound - t0;
    if span <= 0.0 {
        return Err(malformed(format!("clock {name} already past its guard in {}", mode.name)));
    }
    Ok(span)
}

/// Functional enclosure of the network image: per layer, affine combination
/// of the incoming models followed by validated composition with the
/// activation.
pub(crate) fn network_reach_functional(
    nn: &NeuralNetwork,
    inputs: &[TaylorModel],
    ctx: TmCtx,
) -> Result<Vec<TaylorModel>, StepFailure> {
    assert_eq!(inputs.len(), nn.input_arity, "one input model per network input");
    let mut cur: Vec<TaylorModel> = inputs.to_vec();
    for layer in &nn.layers {
        let mut next = Vec::with_capacity(layer.rows());
        for (row, bias) in layer.weights.iter().zip(&layer.bias) {
            let mut acc = TaylorModel::constant(*bias, ctx.n_vars, ctx.order);
            for (w, x) in row.iter().zip(&cur) {
                if *w != 0.0 {
                    acc = acc.add(&x.scale(*w));
                }
            }
            next.push(match layer.activation {
                Activation::Sigmoid => acc.compose_elem(Func::Sigmoid)?,
                Activation::Tanh => acc.compose_elem(Func::Tanh)?,
                Activation::Linear => acc,
            });
        }
        cur = next;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{scalar, Interval};
    use crate::neural::{network_to_automaton, Layer, NeuralNetwork};

    /// The running two-input example: hidden sigmoid layer
    /// [0.3 0.2; 0.1 0.5] + (0.1, 0.2), linear read-out (3, 5).
    fn toy_network() -> NeuralNetwork {
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

    fn settings() -> ReachSettings {
        ReachSettings::default()
    }

    /// Order 6 with a halved step: proxy truncation error drops well below
    /// the micro level, which the point-fidelity tests lean on.
    fn tight_settings() -> ReachSettings {
        let mut s = ReachSettings::default();
        s.tm_order = 6;
        s.ode_step = 0.05;
        s
    }

    fn tight_ctx(n: usize) -> TmCtx {
        TmCtx { n_vars: n + 1, order: 6 }
    }

    /// Chart with `n` box axes plus the trailing time axis.
    fn ctx_with_axes(n: usize) -> TmCtx {
        TmCtx { n_vars: n + 1, order: 4 }
    }

    fn point_inputs(vals: &[f64], ctx: TmCtx) -> Vec<TaylorModel> {
        vals.iter().map(|v| TaylorModel::constant(*v, ctx.n_vars, ctx.order)).collect()
    }

    #[test]
    fn ode_path_matches_forward_pass_at_a_point() {
        let nn = toy_network();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = tight_ctx(0);
        let inputs = point_inputs(&[2.0, 1.0], ctx);
        let out =
            pipeline_reach_ode(&auto, &inputs, ctx, ctx.n_vars - 1, &tight_settings()).unwrap();
        assert_eq!(out.len(), 1);
        let truth = 8.0 * scalar::sigmoid(0.9);
        let b = out[0].bound();
        assert!(b.contains(truth), "{b} should contain {truth}");
        assert!(b.width() <= 1e-6, "width {}", b.width());
    }

    #[test]
    fn functional_path_matches_forward_pass_at_a_point() {
        let nn = toy_network();
        let ctx = ctx_with_axes(0);
        let inputs = point_inputs(&[2.0, 1.0], ctx);
        let out = network_reach_functional(&nn, &inputs, ctx).unwrap();
        let truth = 8.0 * scalar::sigmoid(0.9);
        let b = out[0].bound();
        assert!(b.contains(truth), "{b} should contain {truth}");
        assert!(b.width() <= 1e-9, "width {}", b.width());
    }

    #[test]
    fn hidden_neurons_land_on_sigmoid_of_preactivation() {
        // Point (2, 1): both hidden pre-activations are 0.9, so both proxy
        // flows must land on σ(0.9) ≈ 0.710949.
        let nn = NeuralNetwork::new(
            2,
            vec![Layer {
                weights: vec![vec![0.3, 0.2], vec![0.1, 0.5]],
                bias: vec![0.1, 0.2],
                activation: Activation::Sigmoid,
            }],
        )
        .unwrap();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = ctx_with_axes(0);
        let inputs = point_inputs(&[2.0, 1.0], ctx);
        let out =
            pipeline_reach_ode(&auto, &inputs, ctx, ctx.n_vars - 1, &settings()).unwrap();
        let truth = scalar::sigmoid(0.9);
        for tm in &out {
            let b = tm.bound();
            assert!(b.contains(truth), "{b} should contain {truth}");
            assert!((b.midpoint() - 0.710949).abs() <= 1e-6, "spot value 0.710949…");
            assert!(b.width() <= 1e-6);
        }
    }

    #[test]
    fn box_input_bounds_contain_the_corner_range() {
        // All weights ≥ 0, so the exact output range over the box
        // [2,3]×[1,2] is attained at the corner pair: [5.68760, 6.49442].
        let nn = toy_network();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = ctx_with_axes(2);
        let inputs = vec![
            TaylorModel::affine(2.5, &[0.5, 0.0, 0.0], ctx.order),
            TaylorModel::affine(1.5, &[0.0, 0.5, 0.0], ctx.order),
        ];
        // Pre-activations over the box: z1 ∈ [0.9, 1.4], z2 ∈ [0.9, 1.5].
        let exact_lo = 8.0 * scalar::sigmoid(0.9);
        let exact_hi = 3.0 * scalar::sigmoid(1.4) + 5.0 * scalar::sigmoid(1.5);

        for path in [ControllerPath::Ode, ControllerPath::Functional] {
            let out = layer_reach(
                &auto,
                Some(&nn),
                &inputs,
                ctx,
                ctx.n_vars - 1,
                &settings(),
                path,
            )
            .unwrap();
            let b = out[0].bound();
            assert!(b.contains(exact_lo) && b.contains(exact_hi), "{path:?}: {b}");
            // A single chart over the whole box pays for the coefficient-sum
            // bound: σ is concave here, so the model's center sits ≈0.03
            // above the true range midpoint and the high side carries ≈2×
            // that as irreducible excess. Subdivided charts tighten this —
            // see `subdivided_box_range_is_tight` on `network_output_range`.
            let excess = (exact_lo - b.lo()).max(b.hi() - exact_hi);
            assert!(excess <= 0.07, "{path:?}: excess {excess}");
        }
    }

    #[test]
    fn subdivided_box_range_is_tight() {
        use crate::reach::{network_output_range, SubdivisionStrategy};

        // Hulling per-piece charts shrinks the coefficient-sum overestimate
        // quadratically with the piece radius: 16 pieces per axis bring the
        // whole-box excess (~0.06) under 1e-3 at the default order.
        let nn = toy_network();
        let inputs = vec![
            Interval::new(2.0, 3.0).unwrap(),
            Interval::new(1.0, 2.0).unwrap(),
        ];
        let exact_lo = 8.0 * scalar::sigmoid(0.9);
        let exact_hi = 3.0 * scalar::sigmoid(1.4) + 5.0 * scalar::sigmoid(1.5);
        let mut settings = ReachSettings::default();
        settings.subdivision = Some(SubdivisionStrategy::Uniform(16));
        for path in [ControllerPath::Ode, ControllerPath::Functional] {
            let out = network_output_range(&nn, &inputs, &settings, path).unwrap();
            let b = &out[0];
            assert!(b.contains(exact_lo) && b.contains(exact_hi), "{path:?}: {b}");
            let excess = (exact_lo - b.lo()).max(b.hi() - exact_hi);
            assert!(excess <= 1e-3, "{path:?}: excess {excess}");
        }
    }

    #[test]
    fn paths_agree_within_combined_remainders() {
        let nn = toy_network();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = ctx_with_axes(2);
        let inputs = vec![
            TaylorModel::affine(2.5, &[0.5, 0.0, 0.0], ctx.order),
            TaylorModel::affine(1.5, &[0.0, 0.5, 0.0], ctx.order),
        ];
        let ode = pipeline_reach_ode(&auto, &inputs, ctx, ctx.n_vars - 1, &settings())
            .unwrap()[0]
            .bound();
        let fun = network_reach_functional(&nn, &inputs, ctx).unwrap()[0].bound();
        assert!(ode.intersect(&fun).is_some(), "disjoint enclosures {ode} vs {fun}");
    }

    #[test]
    fn zero_width_input_through_linear_layer_is_exact_affine() {
        let nn = NeuralNetwork::new(
            2,
            vec![Layer {
                weights: vec![vec![2.0, -1.0]],
                bias: vec![0.25],
                activation: Activation::Linear,
            }],
        )
        .unwrap();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = ctx_with_axes(0);
        let inputs = point_inputs(&[0.5, 0.125], ctx);
        let out =
            pipeline_reach_ode(&auto, &inputs, ctx, ctx.n_vars - 1, &settings()).unwrap();
        // Dyadic arithmetic throughout: the image is the exact point up to
        // the slack the affine evaluation folds outward.
        let b = out[0].bound();
        let truth = 2.0 * 0.5 - 1.0 * 0.125 + 0.25;
        assert!(b.contains(truth), "{b} should contain {truth}");
        assert!(b.width() <= 1e-12, "width {}", b.width());
    }

    #[test]
    fn tanh_output_layer_via_both_paths() {
        let nn = NeuralNetwork::new(
            1,
            vec![Layer {
                weights: vec![vec![2.0]],
                bias: vec![0.0],
                activation: Activation::Tanh,
            }],
        )
        .unwrap();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = tight_ctx(0);
        let inputs = point_inputs(&[0.3], ctx);
        let truth = scalar::tanh(0.6);
        for path in [ControllerPath::Ode, ControllerPath::Functional] {
            let out = layer_reach(
                &auto,
                Some(&nn),
                &inputs,
                ctx,
                ctx.n_vars - 1,
                &tight_settings(),
                path,
            )
            .unwrap();
            let b = out[0].bound();
            assert!(b.contains(truth), "{path:?}: {b} misses {truth}");
            assert!(b.width() <= 1e-6, "{path:?}: width {}", b.width());
        }
    }

    #[test]
    fn functional_path_without_network_is_an_error() {
        let nn = toy_network();
        let auto = network_to_automaton(&nn).unwrap();
        let ctx = ctx_with_axes(0);
        let inputs = point_inputs(&[2.0, 1.0], ctx);
        let err = layer_reach(
            &auto,
            None,
            &inputs,
            ctx,
            ctx.n_vars - 1,
            &settings(),
            ControllerPath::Functional,
        )
        .unwrap_err();
        assert!(matches!(err, StepFailure::NeedsNetwork));
    }
}
