//! Hybrid-automaton data model.
//!
//! A [`HybridAutomaton`] is a list of named variables, a set of modes — each
//! carrying per-variable dynamics and invariant constraints — and guarded
//! transitions that reset variables on entry. Controller automata produced by
//! [`crate::neural::network_to_automaton`] and the built-in plants of
//! [`crate::cases`] share this representation; [`compose_closed_loop`] wires
//! one of each together for simulation and reach analysis.
//!
//! The types here are plain data: execution semantics (flowpipe propagation,
//! clamp handling, branching) live in [`crate::reach`] and [`crate::sim`].
//! Automata are immutable after [`validate_automaton`] and freely shareable
//! across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::expr::{EvalError, Expr, VarEnv};
use crate::interval::Interval;

/// Comparison direction of a [`Constraint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Expression ≤ bound.
    Le,
    /// Expression ≥ bound.
    Ge,
    /// Expression = bound.
    Eq,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

/// A guard or invariant constraint of the form `expr <= c`, `expr >= c`, or
/// `expr = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Left-hand side over the automaton's variables.
    pub expr: Expr,
    /// Comparison direction.
    pub relation: Relation,
    /// Right-hand constant.
    pub bound: f64,
}

impl Constraint {
    /// Constraint `expr <= bound`.
    pub fn le(expr: Expr, bound: f64) -> Self {
        Constraint { expr, relation: Relation::Le, bound }
    }

    /// Constraint `expr >= bound`.
    pub fn ge(expr: Expr, bound: f64) -> Self {
        Constraint { expr, relation: Relation::Ge, bound }
    }

    /// Constraint `expr = bound`.
    pub fn eq(expr: Expr, bound: f64) -> Self {
        Constraint { expr, relation: Relation::Eq, bound }
    }

    /// Evaluates the constraint at a point state. Comparisons are non-strict
    /// and exact in floating point (`Eq` means bit-level `==` after rounding).
    pub fn holds_at(&self, env: &impl VarEnv<f64>) -> Result<bool, EvalError> {
        let v = self.expr.eval_f64(env)?;
        Ok(match self.relation {
            Relation::Le => v <= self.bound,
            Relation::Ge => v >= self.bound,
            Relation::Eq => v == self.bound,
        })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.expr, self.relation, self.bound)
    }
}

/// How a mode's `flow` expressions are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    /// Continuous dynamics: `flow[i]` is the time derivative of variable `i`.
    Ode,
    /// Discrete dynamics: `flow[i]` is the next value of variable `i`, all
    /// expressions evaluated simultaneously on the pre-step state.
    DiscreteMap,
    /// No dynamics; the mode only anchors transitions (or terminates a run).
    Idle,
}

/// A single mode of a hybrid automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Unique mode name.
    pub name: String,
    /// Interpretation of `flow`.
    pub kind: ModeKind,
    /// One expression per automaton variable, in declaration order; empty for
    /// [`ModeKind::Idle`].
    pub flow: Vec<Expr>,
    /// Constraints that must hold while the automaton stays in this mode.
    pub invariant: Vec<Constraint>,
}

impl Mode {
    /// A continuous mode with the given per-variable derivatives.
    pub fn ode(name: impl Into<String>, flow: Vec<Expr>, invariant: Vec<Constraint>) -> Self {
        Mode { name: name.into(), kind: ModeKind::Ode, flow, invariant }
    }

    /// A discrete mode whose flow expressions give next-step values.
    pub fn discrete_map(name: impl Into<String>, flow: Vec<Expr>) -> Self {
        Mode { name: name.into(), kind: ModeKind::DiscreteMap, flow, invariant: Vec::new() }
    }

    /// A mode with no dynamics.
    pub fn idle(name: impl Into<String>) -> Self {
        Mode { name: name.into(), kind: ModeKind::Idle, flow: Vec::new(), invariant: Vec::new() }
    }
}

/// A guarded transition between modes. Variables absent from `reset` carry
/// their values unchanged across the jump.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Source mode name.
    pub src: String,
    /// Destination mode name (may equal `src` for saturating self-loops).
    pub dst: String,
    /// Conjunction of enabling constraints; empty means always enabled.
    pub guard: Vec<Constraint>,
    /// Reassignments applied on the jump, evaluated simultaneously on the
    /// pre-jump state.
    pub reset: BTreeMap<String, Expr>,
}

impl Transition {
    /// An always-enabled transition with no resets.
    pub fn new(src: impl Into<String>, dst: impl Into<String>) -> Self {
        Transition {
            src: src.into(),
            dst: dst.into(),
            guard: Vec::new(),
            reset: BTreeMap::new(),
        }
    }

    /// Adds a guard constraint.
    pub fn with_guard(mut self, c: Constraint) -> Self {
        self.guard.push(c);
        self
    }

    /// Adds a reset assignment.
    pub fn with_reset(mut self, var: impl Into<String>, e: Expr) -> Self {
        self.reset.insert(var.into(), e);
        self
    }
}

/// Which bound a saturating self-transition enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampSide {
    /// Guard `x >= c`, reset `x = c`: values above `c` saturate down to `c`.
    Upper,
    /// Guard `x <= c`, reset `x = c`: values below `c` saturate up to `c`.
    Lower,
}

/// A recognized saturating self-transition: variable `var` is clamped at
/// `limit` on the given side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturation {
    /// Index of the clamped variable.
    pub var: usize,
    /// Clamp value.
    pub limit: f64,
    /// Which side of `limit` triggers the clamp.
    pub side: ClampSide,
}

/// A hybrid automaton: named continuous variables, modes, transitions, an
/// initial configuration, and an observation map.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridAutomaton {
    /// Ordered variable names; all flows, initial sets, and state vectors use
    /// this order.
    pub variables: Vec<String>,
    /// Modes, in declaration order (the order is meaningful only for
    /// deterministic iteration).
    pub modes: Vec<Mode>,
    /// Transitions, in declaration order; when several are enabled at once,
    /// executors take the first.
    pub transitions: Vec<Transition>,
    /// Name of the starting mode.
    pub initial_mode: String,
    /// Initial box, one interval per variable.
    pub initial_set: Vec<Interval>,
    /// Variables written from outside between runs (a controller's measurement
    /// slots, a plant's control inputs); must be declared variables.
    pub inputs: Vec<String>,
    /// Observation map: the values this automaton exposes to the outside
    /// (a controller's outputs, a plant's measurements).
    pub observation: Vec<Expr>,
}

impl HybridAutomaton {
    /// Looks up a mode by name.
    pub fn mode(&self, name: &str) -> Option<&Mode> {
        self.modes.iter().find(|m| m.name == name)
    }

    /// Position of a variable in the declaration order.
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Transitions leaving the named mode, in declaration order.
    pub fn transitions_from<'a>(&'a self, mode: &'a str) -> impl Iterator<Item = &'a Transition> {
        self.transitions.iter().filter(move |t| t.src == mode)
    }

    /// Recognizes a saturating self-transition: `src == dst`, a single guard
    /// `x >= c` (or `x <= c`) on a bare variable, and the sole reset `x = c`.
    /// Executors treat these as clamps rather than ordinary jumps.
    pub fn classify_saturation(&self, t: &Transition) -> Option<Saturation> {
        if t.src != t.dst || t.guard.len() != 1 || t.reset.len() != 1 {
            return None;
        }
        let guard = &t.guard[0];
        let var_name = match &guard.expr {
            Expr::Var(n) => n,
            _ => return None,
        };
        let (reset_var, reset_expr) = t.reset.iter().next().expect("len checked above");
        if reset_var != var_name || *reset_expr != Expr::Const(guard.bound) {
            return None;
        }
        let side = match guard.relation {
            Relation::Ge => ClampSide::Upper,
            Relation::Le => ClampSide::Lower,
            Relation::Eq => return None,
        };
        Some(Saturation { var: self.var_index(var_name)?, limit: guard.bound, side })
    }

    /// Structural validation; see [`validate_automaton`].
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_automaton(self)
    }
}

/// A structural defect found by [`validate_automaton`]. Diagnostics are data,
/// not errors: callers decide whether to abort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// A variable name is declared more than once.
    DuplicateVariable(String),
    /// A mode name is declared more than once.
    DuplicateMode(String),
    /// A mode name is referenced but never declared.
    UnknownMode {
        /// The missing mode.
        name: String,
        /// What referenced it (initial mode, or a transition endpoint).
        referenced_by: String,
    },
    /// A mode's flow list does not match the variable list.
    FlowArityMismatch {
        /// Offending mode.
        mode: String,
        /// Expected entry count (variable count, or 0 for idle modes).
        expected: usize,
        /// Actual entry count.
        found: usize,
    },
    /// An expression references an undeclared variable.
    UnknownVariable {
        /// The undeclared name.
        name: String,
        /// Where the expression lives.
        context: String,
    },
    /// `tan` applied to a non-constant argument. Tangents are only admissible
    /// when their argument is fixed at model-build time (piecewise-constant
    /// controls); reachability over a genuine `tan` of a state variable would
    /// have to handle its poles.
    NonConstantTan {
        /// Where the expression lives.
        context: String,
        /// Printed form of the offending argument.
        argument: String,
    },
    /// A division inside an ODE right-hand side whose denominator is not a
    /// provably nonzero constant. Such flows could divide by zero mid-segment
    /// and would make the flowpipe stepper partial.
    UnsafeDenominator {
        /// Where the expression lives.
        context: String,
        /// Printed form of the offending denominator.
        denominator: String,
    },
    /// The initial box does not have one interval per variable.
    InitialSetArityMismatch {
        /// Variable count.
        expected: usize,
        /// Interval count.
        found: usize,
    },
    /// An entry of `inputs` is not a declared variable.
    UnknownInput(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateVariable(n) => write!(f, "variable `{n}` declared twice"),
            Diagnostic::DuplicateMode(n) => write!(f, "mode `{n}` declared twice"),
            Diagnostic::UnknownMode { name, referenced_by } => {
                write!(f, "unknown mode `{name}` referenced by {referenced_by}")
            }
            Diagnostic::FlowArityMismatch { mode, expected, found } => write!(
                f,
                "mode `{mode}` has {found} flow expressions, expected {expected}"
            ),
            Diagnostic::UnknownVariable { name, context } => {
                write!(f, "unknown variable `{name}` in {context}")
            }
            Diagnostic::NonConstantTan { context, argument } => {
                write!(f, "tan of non-constant argument `{argument}` in {context}")
            }
            Diagnostic::UnsafeDenominator { context, denominator } => write!(
                f,
                "denominator `{denominator}` in {context} is not a nonzero constant"
            ),
            Diagnostic::InitialSetArityMismatch { expected, found } => write!(
                f,
                "initial set has {found} intervals for {expected} variables"
            ),
            Diagnostic::UnknownInput(n) => write!(f, "input `{n}` is not a declared variable"),
        }
    }
}

/// Context for [`check_expr`]: whether the expression is an ODE right-hand
/// side (which triggers the denominator rule).
#[derive(Clone, Copy, PartialEq, Eq)]
enum ExprPlace {
    OdeFlow,
    Other,
}

/// Appends diagnostics for one expression: undeclared variables, non-constant
/// `tan` arguments, and (in ODE flows) denominators that are not nonzero
/// constants.
fn check_expr(
    e: &Expr,
    vars: &BTreeSet<&str>,
    place: ExprPlace,
    context: &str,
    out: &mut Vec<Diagnostic>,
) {
    for name in e.free_vars() {
        if !vars.contains(name.as_str()) {
            out.push(Diagnostic::UnknownVariable { name, context: context.to_string() });
        }
    }
    for arg in e.tan_arguments() {
        if !arg.free_vars().is_empty() {
            out.push(Diagnostic::NonConstantTan {
                context: context.to_string(),
                argument: arg.to_string(),
            });
        }
    }
    if place == ExprPlace::OdeFlow {
        for den in e.denominators() {
            match den.fold_constant() {
                Some(c) if c != 0.0 => {}
                _ => out.push(Diagnostic::UnsafeDenominator {
                    context: context.to_string(),
                    denominator: den.to_string(),
                }),
            }
        }
    }
}

/// Checks every structural invariant of an automaton and returns the list of
/// violations (empty iff the automaton is well-formed): unique variable and
/// mode names, existing transition endpoints and initial mode, flow arity per
/// mode kind, declared-variables-only expressions, constant `tan` arguments,
/// and nonzero-constant denominators inside ODE flows.
pub fn validate_automaton(h: &HybridAutomaton) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut vars: BTreeSet<&str> = BTreeSet::new();
    for v in &h.variables {
        if !vars.insert(v.as_str()) {
            out.push(Diagnostic::DuplicateVariable(v.clone()));
        }
    }

    let mut mode_names: BTreeSet<&str> = BTreeSet::new();
    for m in &h.modes {
        if !mode_names.insert(m.name.as_str()) {
            out.push(Diagnostic::DuplicateMode(m.name.clone()));
        }
        let expected = match m.kind {
            ModeKind::Idle => 0,
            ModeKind::Ode | ModeKind::DiscreteMap => h.variables.len(),
        };
        if m.flow.len() != expected {
            out.push(Diagnostic::FlowArityMismatch {
                mode: m.name.clone(),
                expected,
                found: m.flow.len(),
            });
        }
        let place = match m.kind {
            ModeKind::Ode => ExprPlace::OdeFlow,
            _ => ExprPlace::Other,
        };
        for (i, e) in m.flow.iter().enumerate() {
            let var = h.variables.get(i).map(String::as_str).unwrap_or("?");
            let context = format!("flow of mode `{}` for variable `{var}`", m.name);
            check_expr(e, &vars, place, &context, &mut out);
        }
        for c in &m.invariant {
            let context = format!("invariant of mode `{}`", m.name);
            check_expr(&c.expr, &vars, ExprPlace::Other, &context, &mut out);
        }
    }

    if !mode_names.contains(h.initial_mode.as_str()) {
        out.push(Diagnostic::UnknownMode {
            name: h.initial_mode.clone(),
            referenced_by: "the initial mode".to_string(),
        });
    }
    if h.initial_set.len() != h.variables.len() {
        out.push(Diagnostic::InitialSetArityMismatch {
            expected: h.variables.len(),
            found: h.initial_set.len(),
        });
    }
    for input in &h.inputs {
        if !vars.contains(input.as_str()) {
            out.push(Diagnostic::UnknownInput(input.clone()));
        }
    }
    for (i, e) in h.observation.iter().enumerate() {
        let context = format!("observation {i}");
        check_expr(e, &vars, ExprPlace::Other, &context, &mut out);
    }

    for t in &h.transitions {
        let label = format!("transition `{}` -> `{}`", t.src, t.dst);
        for endpoint in [&t.src, &t.dst] {
            if !mode_names.contains(endpoint.as_str()) {
                out.push(Diagnostic::UnknownMode {
                    name: endpoint.clone(),
                    referenced_by: label.clone(),
                });
            }
        }
        for c in &t.guard {
            let context = format!("guard of {label}");
            check_expr(&c.expr, &vars, ExprPlace::Other, &context, &mut out);
        }
        for (target, e) in &t.reset {
            if !vars.contains(target.as_str()) {
                out.push(Diagnostic::UnknownVariable {
                    name: target.clone(),
                    context: format!("reset target of {label}"),
                });
            }
            let context = format!("reset of {label} for `{target}`");
            check_expr(e, &vars, ExprPlace::Other, &context, &mut out);
        }
    }

    out
}

/// How often the controller is evaluated relative to plant progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheduling {
    /// The plant (a discrete map) advances `k` steps per control latch.
    DiscretePeriod(usize),
    /// The plant (continuous) advances `dt` time units per control latch,
    /// with the control held constant in between (zero-order hold).
    SampleTime(f64),
}

/// How the controller's outputs drive the plant.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlMap {
    /// Output `i` is latched into the named plant variable before each plant
    /// advance.
    Latch(Vec<String>),
    /// The index of the largest output selects the plant mode to run for the
    /// next advance (a classifier over finitely many actions).
    SelectMode(Vec<String>),
}

impl ControlMap {
    /// Number of controller outputs this map consumes.
    pub fn arity(&self) -> usize {
        match self {
            ControlMap::Latch(v) | ControlMap::SelectMode(v) => v.len(),
        }
    }
}

/// A controller automaton wired to a plant automaton. One loop iteration
/// reads the measurements `wiring` from the plant state into the controller's
/// inputs, runs the controller automaton to completion, applies `control` to
/// latch outputs (or select the plant mode), and advances the plant one
/// scheduling period.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    /// The controller (typically built by
    /// [`crate::neural::network_to_automaton`]).
    pub controller: HybridAutomaton,
    /// The plant.
    pub plant: HybridAutomaton,
    /// Measurement expressions over plant variables; `wiring[i]` feeds
    /// `controller.inputs[i]`.
    pub wiring: Vec<Expr>,
    /// How controller outputs reach the plant.
    pub control: ControlMap,
    /// Plant advance per control latch.
    pub scheduling: Scheduling,
    /// The network the controller automaton was derived from, when known.
    /// Exact simulation and the functional controller path use closed-form
    /// activations and need the weights, not just the automaton.
    pub network: Option<crate::neural::NeuralNetwork>,
}

impl ClosedLoop {
    /// Attaches the controller's source network.
    pub fn with_network(mut self, nn: crate::neural::NeuralNetwork) -> Self {
        self.network = Some(nn);
        self
    }
}

/// Failure to assemble a [`ClosedLoop`].
#[derive(Debug, Error)]
pub enum ComposeError {
    /// Measurement count differs from the controller's declared input count.
    #[error("wiring supplies {found} measurements but the controller declares {expected} inputs")]
    WiringArityMismatch {
        /// Controller input count.
        expected: usize,
        /// Wiring expression count.
        found: usize,
    },
    /// Control-map target count differs from the controller's output count.
    #[error("controller emits {found} outputs but the control map names {expected} targets")]
    ControlArityMismatch {
        /// Control-map target count.
        expected: usize,
        /// Controller observation count.
        found: usize,
    },
    /// The controller and plant declare a variable with the same name.
    #[error("variable `{0}` is declared by both the controller and the plant")]
    NamespaceCollision(String),
    /// One of the automata failed structural validation.
    #[error("{which} automaton is malformed: {}", fmt_diagnostics(.diagnostics))]
    InvalidAutomaton {
        /// `"controller"` or `"plant"`.
        which: &'static str,
        /// The validation findings.
        diagnostics: Vec<Diagnostic>,
    },
    /// A latch target or selected mode does not exist in the plant.
    #[error("control map references unknown plant {kind} `{name}`")]
    UnknownControlTarget {
        /// `"variable"` or `"mode"`.
        kind: &'static str,
        /// The missing name.
        name: String,
    },
    /// A wiring expression mentions a variable outside the plant.
    #[error("wiring expression {index} references `{name}`, which is not a plant variable")]
    WiringUnknownVariable {
        /// Position in the wiring list.
        index: usize,
        /// The unknown name.
        name: String,
    },
    /// Non-positive sample time or zero period.
    #[error("scheduling must advance the plant: {0}")]
    InvalidScheduling(String),
}

fn fmt_diagnostics(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Wires a controller automaton to a plant. Both automata must validate, the
/// namespaces must be disjoint, wiring arity must match the controller's
/// inputs, and the control map must match the controller's outputs and name
/// existing plant variables/modes.
pub fn compose_closed_loop(
    controller: HybridAutomaton,
    plant: HybridAutomaton,
    wiring: Vec<Expr>,
    control: ControlMap,
    scheduling: Scheduling,
) -> Result<ClosedLoop, ComposeError> {
    for (which, h) in [("controller", &controller), ("plant", &plant)] {
        let diagnostics = h.validate();
        if !diagnostics.is_empty() {
            return Err(ComposeError::InvalidAutomaton { which, diagnostics });
        }
    }
    for v in &controller.variables {
        if plant.variables.contains(v) {
            return Err(ComposeError::NamespaceCollision(v.clone()));
        }
    }
    if wiring.len() != controller.inputs.len() {
        return Err(ComposeError::WiringArityMismatch {
            expected: controller.inputs.len(),
            found: wiring.len(),
        });
    }
    for (index, e) in wiring.iter().enumerate() {
        for name in e.free_vars() {
            if !plant.variables.contains(&name) {
                return Err(ComposeError::WiringUnknownVariable { index, name });
            }
        }
    }
    if control.arity() != controller.observation.len() {
        return Err(ComposeError::ControlArityMismatch {
            expected: control.arity(),
            found: controller.observation.len(),
        });
    }
    match &control {
        ControlMap::Latch(vars) => {
            for v in vars {
                if !plant.variables.contains(v) {
                    return Err(ComposeError::UnknownControlTarget {
                        kind: "variable",
                        name: v.clone(),
                    });
                }
            }
        }
        ControlMap::SelectMode(modes) => {
            for m in modes {
                if plant.mode(m).is_none() {
                    return Err(ComposeError::UnknownControlTarget {
                        kind: "mode",
                        name: m.clone(),
                    });
                }
            }
        }
    }
    match scheduling {
        Scheduling::DiscretePeriod(0) => {
            return Err(ComposeError::InvalidScheduling("period must be >= 1".to_string()))
        }
        Scheduling::SampleTime(dt) if !(dt > 0.0) => {
            return Err(ComposeError::InvalidScheduling(format!(
                "sample time must be positive, got {dt}"
            )))
        }
        _ => {}
    }
    Ok(ClosedLoop { controller, plant, wiring, control, scheduling, network: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).expect("test expression parses")
    }

    /// A small cart plant: position/velocity/control with a velocity clamp, a
    /// goal jump, and reward bookkeeping.
    fn cart_plant() -> HybridAutomaton {
        HybridAutomaton {
            variables: vec!["p".into(), "v".into(), "u".into(), "r".into()],
            modes: vec![
                Mode::discrete_map(
                    "drive",
                    vec![e("p + v"), e("v + 0.0015*u - 0.0025*cos(3*p)"), e("u"), e("r - 0.1*u^2")],
                ),
                Mode::idle("done"),
            ],
            transitions: vec![
                Transition::new("drive", "drive")
                    .with_guard(Constraint::ge(e("v"), 0.07))
                    .with_reset("v", Expr::Const(0.07)),
                Transition::new("drive", "drive")
                    .with_guard(Constraint::le(e("v"), -0.07))
                    .with_reset("v", Expr::Const(-0.07)),
                Transition::new("drive", "done")
                    .with_guard(Constraint::ge(e("p"), 0.45))
                    .with_reset("r", e("r + 100")),
            ],
            initial_mode: "drive".to_string(),
            initial_set: vec![
                Interval::new(-0.5, -0.4).unwrap(),
                Interval::point(0.0),
                Interval::point(0.0),
                Interval::point(0.0),
            ],
            inputs: vec!["u".into()],
            observation: vec![e("p"), e("v")],
        }
    }

    /// A stub controller with one input slot and one output.
    fn stub_controller() -> HybridAutomaton {
        HybridAutomaton {
            variables: vec!["cin".into(), "cout".into()],
            modes: vec![
                Mode::idle("q0"),
                Mode::discrete_map("q1", vec![e("cin"), e("2*cin")]),
            ],
            transitions: vec![Transition::new("q0", "q1")],
            initial_mode: "q0".to_string(),
            initial_set: vec![Interval::point(0.0), Interval::point(0.0)],
            inputs: vec!["cin".into()],
            observation: vec![e("cout")],
        }
    }

    #[test]
    fn well_formed_plant_validates_cleanly() {
        assert_eq!(cart_plant().validate(), Vec::new());
    }

    #[test]
    fn transition_to_unknown_mode_is_reported() {
        let mut h = cart_plant();
        h.transitions.push(Transition::new("drive", "q9"));
        let ds = h.validate();
        assert_eq!(ds.len(), 1);
        assert!(matches!(&ds[0], Diagnostic::UnknownMode { name, .. } if name == "q9"));
    }

    #[test]
    fn missing_initial_mode_is_reported() {
        let mut h = cart_plant();
        h.initial_mode = "warp".to_string();
        assert!(h
            .validate()
            .iter()
            .any(|d| matches!(d, Diagnostic::UnknownMode { name, .. } if name == "warp")));
    }

    #[test]
    fn duplicate_mode_and_variable_are_reported() {
        let mut h = cart_plant();
        h.modes.push(Mode::idle("done"));
        h.variables.push("p".to_string());
        let ds = h.validate();
        assert!(ds.contains(&Diagnostic::DuplicateMode("done".to_string())));
        assert!(ds.contains(&Diagnostic::DuplicateVariable("p".to_string())));
        // The extra variable also breaks flow arity and the initial set.
        assert!(ds.iter().any(|d| matches!(d, Diagnostic::FlowArityMismatch { .. })));
        assert!(ds.iter().any(|d| matches!(d, Diagnostic::InitialSetArityMismatch { .. })));
    }

    #[test]
    fn unknown_variable_in_guard_is_reported() {
        let mut h = cart_plant();
        h.transitions.push(
            Transition::new("drive", "done").with_guard(Constraint::ge(e("altitude"), 1.0)),
        );
        assert!(h
            .validate()
            .iter()
            .any(|d| matches!(d, Diagnostic::UnknownVariable { name, .. } if name == "altitude")));
    }

    #[test]
    fn ode_flow_with_tan_of_state_is_rejected() {
        let h = HybridAutomaton {
            variables: vec!["x".into()],
            modes: vec![Mode::ode("m", vec![e("tan(x)")], vec![])],
            transitions: vec![],
            initial_mode: "m".to_string(),
            initial_set: vec![Interval::point(0.0)],
            inputs: vec![],
            observation: vec![],
        };
        let ds = h.validate();
        assert_eq!(ds.len(), 1);
        assert!(matches!(&ds[0], Diagnostic::NonConstantTan { argument, .. } if argument == "x"));
    }

    #[test]
    fn constant_tan_is_accepted() {
        let h = HybridAutomaton {
            variables: vec!["x".into()],
            // Piecewise-constant control folded into the flow, as in the
            // quadrotor's per-action accelerations.
            modes: vec![Mode::ode("m", vec![e("9.81*tan(0.1)")], vec![])],
            transitions: vec![],
            initial_mode: "m".to_string(),
            initial_set: vec![Interval::point(0.0)],
            inputs: vec![],
            observation: vec![],
        };
        assert_eq!(h.validate(), Vec::new());
    }

    #[test]
    fn ode_denominator_rules() {
        let make = |flow: &str| HybridAutomaton {
            variables: vec!["x".into()],
            modes: vec![Mode::ode("m", vec![e(flow)], vec![])],
            transitions: vec![],
            initial_mode: "m".to_string(),
            initial_set: vec![Interval::point(0.0)],
            inputs: vec![],
            observation: vec![],
        };
        // Nonzero constant denominators are fine.
        assert_eq!(make("x / 2").validate(), Vec::new());
        // Variable and zero denominators are not.
        for bad in ["x / x", "1 / (2 - 2)"] {
            let ds = make(bad).validate();
            assert_eq!(ds.len(), 1, "{bad}");
            assert!(matches!(ds[0], Diagnostic::UnsafeDenominator { .. }));
        }
        // The rule applies to ODE flows only; discrete maps may divide and
        // take their chances at evaluation time.
        let mut h = make("x / 2");
        h.modes[0] = Mode::discrete_map("m", vec![e("x / x")]);
        assert_eq!(h.validate(), Vec::new());
    }

    #[test]
    fn saturation_classification() {
        let h = cart_plant();
        let sats: Vec<Option<Saturation>> =
            h.transitions.iter().map(|t| h.classify_saturation(t)).collect();
        assert_eq!(
            sats[0],
            Some(Saturation { var: 1, limit: 0.07, side: ClampSide::Upper })
        );
        assert_eq!(
            sats[1],
            Some(Saturation { var: 1, limit: -0.07, side: ClampSide::Lower })
        );
        // The goal jump is not a saturation.
        assert_eq!(sats[2], None);
    }

    #[test]
    fn constraint_holds_at_points() {
        let names = vec!["p".to_string(), "v".to_string()];
        let state = vec![0.5_f64, -0.01];
        let env = (names.as_slice(), state.as_slice());
        assert!(Constraint::ge(e("p"), 0.45).holds_at(&env).unwrap());
        assert!(Constraint::le(e("v"), 0.07).holds_at(&env).unwrap());
        assert!(!Constraint::eq(e("p + v"), 0.0).holds_at(&env).unwrap());
        assert!(Constraint::eq(e("p"), 0.5).holds_at(&env).unwrap());
    }

    #[test]
    fn compose_accepts_matching_loop() {
        let cl = compose_closed_loop(
            stub_controller(),
            cart_plant(),
            vec![e("p")],
            ControlMap::Latch(vec!["u".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap();
        assert_eq!(cl.wiring.len(), 1);
        assert_eq!(cl.control.arity(), 1);
    }

    #[test]
    fn compose_rejects_wiring_arity_mismatch() {
        let err = compose_closed_loop(
            stub_controller(),
            cart_plant(),
            vec![e("p"), e("v")],
            ControlMap::Latch(vec!["u".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap_err();
        assert!(matches!(err, ComposeError::WiringArityMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn compose_rejects_namespace_collision() {
        let mut controller = stub_controller();
        controller.variables[0] = "p".to_string();
        controller.inputs[0] = "p".to_string();
        controller.modes[1].flow = vec![e("p"), e("2*p")];
        let err = compose_closed_loop(
            controller,
            cart_plant(),
            vec![e("p")],
            ControlMap::Latch(vec!["u".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap_err();
        assert!(matches!(err, ComposeError::NamespaceCollision(n) if n == "p"));
    }

    #[test]
    fn compose_rejects_unknown_latch_target_and_mode() {
        let err = compose_closed_loop(
            stub_controller(),
            cart_plant(),
            vec![e("p")],
            ControlMap::Latch(vec!["thrust".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ComposeError::UnknownControlTarget { kind: "variable", .. }
        ));

        let err = compose_closed_loop(
            stub_controller(),
            cart_plant(),
            vec![e("p")],
            ControlMap::SelectMode(vec!["hover".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap_err();
        assert!(matches!(err, ComposeError::UnknownControlTarget { kind: "mode", .. }));
    }

    #[test]
    fn compose_rejects_invalid_scheduling() {
        for bad in [Scheduling::DiscretePeriod(0), Scheduling::SampleTime(0.0)] {
            let err = compose_closed_loop(
                stub_controller(),
                cart_plant(),
                vec![e("p")],
                ControlMap::Latch(vec!["u".to_string()]),
                bad,
            )
            .unwrap_err();
            assert!(matches!(err, ComposeError::InvalidScheduling(_)));
        }
    }

    #[test]
    fn compose_validates_both_automata() {
        let mut plant = cart_plant();
        plant.transitions.push(Transition::new("drive", "q9"));
        let err = compose_closed_loop(
            stub_controller(),
            plant,
            vec![e("p")],
            ControlMap::Latch(vec!["u".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap_err();
        match err {
            ComposeError::InvalidAutomaton { which, diagnostics } => {
                assert_eq!(which, "plant");
                assert_eq!(diagnostics.len(), 1);
            }
            other => panic!("expected InvalidAutomaton, got {other:?}"),
        }
    }
}
