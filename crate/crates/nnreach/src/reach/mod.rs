//! Validated reachability for closed loops: guaranteed enclosures of every
//! trajectory from a box of initial states.
//!
//! State sets are Taylor models over a shared domain chart — one normalized
//! axis per non-degenerate initial interval plus a trailing axis for
//! normalized time within the current flow segment. Each control step
//! alternates a controller pass (walking the network's automaton on Taylor
//! models, or composing activations directly; see [`layer_reach`]) with a
//! plant advance (simultaneous discrete maps or validated ODE integration),
//! honoring saturating self-transitions and mode switches. Discrete-action
//! controllers branch whenever the winning output cannot be decided from the
//! bounds alone; every feasible action spawns a child, so the union of
//! leaves covers all executions.
//!
//! Everything here is deterministic: fixed iteration orders, no randomness,
//! bit-identical results for identical inputs.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::automaton::{
    ClampSide, ClosedLoop, Constraint, ControlMap, HybridAutomaton, ModeKind, Relation,
    Saturation, Scheduling,
};
use crate::expr::{EvalError, Expr};
use crate::interval::{Interval, IntervalError};
use crate::neural::{network_to_automaton, NeuralNetwork};
use crate::taylor::{TaylorModel, TmCtx, MAX_ORDER};

mod ode;
mod pipeline;

pub use pipeline::layer_reach;

use ode::{driver_magnitude, integrate_mode, step_count, OdeStepper};

/// A reach computation that could not proceed. `RemainderBlowup` is a normal
/// outcome (the enclosure degraded; callers downgrade it to a branch status
/// or an Unknown verdict); the other variants indicate a malformed loop.
#[derive(Debug, Error)]
pub enum StepFailure {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    /// Picard iteration failed to certify a remainder.
    #[error("remainder for `{var}` failed to contract within {iters} Picard iterations (width {width:.3e})")]
    RemainderBlowup {
        /// Variable with the widest uncontracted remainder.
        var: String,
        /// Iterations attempted.
        iters: usize,
        /// Width of that remainder when iteration stopped.
        width: f64,
    },
    /// The functional controller path was requested but the loop carries no
    /// source network.
    #[error("the functional controller path needs the source network attached to the loop")]
    NeedsNetwork,
    /// The controller automaton is not the deterministic pipeline the walker
    /// expects, or the plant disagrees with its scheduling.
    #[error("malformed reach input: {0}")]
    Pipeline(String),
}

/// How the controller's image is enclosed each control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerPath {
    /// Walk the network's automaton form: resets, proxy-ODE modes integrated
    /// to their clock guards, observation read at the terminal mode.
    Ode,
    /// Compose each activation directly as a validated elementary function of
    /// the affine pre-activation model (requires the source network).
    Functional,
}

/// How an initial box is split into independently verified subsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubdivisionStrategy {
    /// Split every non-degenerate axis into `k` equal parts.
    Uniform(usize),
    /// Split each axis into as many equal parts as needed for piece widths
    /// of at most `w`.
    Adaptive(f64),
}

/// Tuning knobs for the reach engine. The defaults are the ones every
/// built-in scenario starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSettings {
    /// Taylor-model polynomial order (1 ..= [`MAX_ORDER`]).
    pub tm_order: u32,
    /// Target integration step: a flow segment of span `T` with frozen
    /// drivers of magnitude `J` is covered in `ceil(max(T, J·T)/ode_step)`
    /// validated steps.
    pub ode_step: f64,
    /// Picard inflate-and-check attempts before giving up on a step.
    pub picard_max_iter: usize,
    /// Growth factor applied to a remainder candidate that failed to
    /// contract.
    pub remainder_inflation: f64,
    /// Cap on the total number of branch leaves.
    pub max_branches: usize,
    /// Per-variable bound width that flags a branch as degraded.
    pub max_remainder_width: f64,
    /// Optional initial-set subdivision (consumed by drivers, not by
    /// [`run_closed_loop`] itself).
    pub subdivision: Option<SubdivisionStrategy>,
    /// Controller enclosure route.
    pub controller_path: ControllerPath,
}

impl Default for ReachSettings {
    fn default() -> Self {
        ReachSettings {
            tm_order: 4,
            ode_step: 0.1,
            picard_max_iter: 30,
            remainder_inflation: 1.3,
            max_branches: 256,
            max_remainder_width: 1e2,
            subdivision: None,
            controller_path: ControllerPath::Ode,
        }
    }
}

impl ReachSettings {
    /// Checks every knob is in its legal range.
    pub fn validate(&self) -> Result<(), String> {
        if self.tm_order == 0 || self.tm_order > MAX_ORDER {
            return Err(format!("tm_order must be in 1..={MAX_ORDER}, got {}", self.tm_order));
        }
        if !(self.ode_step > 0.0) {
            return Err(format!("ode_step must be positive, got {}", self.ode_step));
        }
        if self.picard_max_iter == 0 {
            return Err("picard_max_iter must be at least 1".to_string());
        }
        if !(self.remainder_inflation > 1.0) {
            return Err(format!(
                "remainder_inflation must exceed 1, got {}",
                self.remainder_inflation
            ));
        }
        if self.max_branches == 0 {
            return Err("max_branches must be at least 1".to_string());
        }
        if !(self.max_remainder_width > 0.0) {
            return Err(format!(
                "max_remainder_width must be positive, got {}",
                self.max_remainder_width
            ));
        }
        match self.subdivision {
            Some(SubdivisionStrategy::Uniform(k)) if k == 0 => {
                return Err("uniform subdivision needs k >= 1".to_string());
            }
            Some(SubdivisionStrategy::Adaptive(w)) if !(w > 0.0) => {
                return Err(format!("adaptive subdivision needs a positive width, got {w}"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// The shared Taylor-model domain for one reach run: one axis per
/// non-degenerate initial interval, plus a trailing axis reserved for
/// normalized time inside flow segments (substituted out at segment ends, so
/// inter-step states never depend on it).
#[derive(Debug, Clone)]
pub struct Chart {
    axes: Vec<Option<usize>>,
    n_vars: usize,
    time_axis: usize,
    order: u32,
}

impl Chart {
    /// Builds the chart for an initial box and the state models representing
    /// it: `mid + rad·d` on each non-degenerate axis (with the radius nudged
    /// outward so the real segment covers the interval), constants elsewhere.
    pub fn new(initial: &[Interval], order: u32) -> (Chart, Vec<TaylorModel>) {
        let mut axes = Vec::with_capacity(initial.len());
        let mut next = 0usize;
        for iv in initial {
            if iv.width() > 0.0 {
                axes.push(Some(next));
                next += 1;
            } else {
                axes.push(None);
            }
        }
        let n_vars = next + 1;
        let time_axis = next;
        let state = initial
            .iter()
            .zip(&axes)
            .map(|(iv, axis)| match axis {
                Some(a) => box_axis_tm(*iv, *a, n_vars, order),
                None => TaylorModel::constant(iv.lo(), n_vars, order),
            })
            .collect();
        (Chart { axes, n_vars, time_axis, order }, state)
    }

    /// Taylor context models over this chart must share.
    pub fn ctx(&self) -> TmCtx {
        TmCtx { n_vars: self.n_vars, order: self.order }
    }

    /// Index of the reserved normalized-time axis.
    pub fn time_axis(&self) -> usize {
        self.time_axis
    }

    /// Domain axis assigned to an initial-box coordinate, if any.
    pub fn axis_of(&self, var: usize) -> Option<usize> {
        self.axes[var]
    }
}

/// Affine model `mid + rad·d_axis` whose real range covers `iv`: the radius
/// gets two ulps of outward margin against midpoint rounding.
fn box_axis_tm(iv: Interval, axis: usize, n_vars: usize, order: u32) -> TaylorModel {
    let mid = iv.midpoint();
    let rad = (iv.hi() - mid).max(mid - iv.lo()).next_up().next_up();
    let mut lin = vec![0.0; n_vars];
    lin[axis] = rad;
    TaylorModel::affine(mid, &lin, order)
}

/// Constant-plus-remainder model whose bound covers `iv` (used where clamping
/// collapses a variable's dependence on the chart).
fn tm_from_interval(iv: Interval, ctx: TmCtx) -> TaylorModel {
    let mid = iv.midpoint();
    TaylorModel::constant(mid, ctx.n_vars, ctx.order)
        .with_remainder(iv.sub(&Interval::point(mid)))
}

/// Applies a transition's resets simultaneously: every right-hand side is
/// evaluated on the pre-jump state before any slot is written.
pub(crate) fn apply_resets(
    names: &[String],
    resets: &BTreeMap<String, Expr>,
    state: &mut [TaylorModel],
    ctx: TmCtx,
) -> Result<(), StepFailure> {
    if resets.is_empty() {
        return Ok(());
    }
    let mut updates = Vec::with_capacity(resets.len());
    {
        let env = (names, &state[..]);
        for (var, expr) in resets {
            let idx = names.iter().position(|n| n == var).ok_or_else(|| {
                StepFailure::Pipeline(format!("reset writes unknown variable {var}"))
            })?;
            updates.push((idx, expr.eval::<TaylorModel>(&env, &ctx)?));
        }
    }
    for (idx, tm) in updates {
        state[idx] = tm;
    }
    Ok(())
}

/// One validated integration step of width `dt` for the given flow field,
/// returning the end-of-step state (normalized time substituted out). The
/// models' shared chart must reserve `time_axis` for step time.
pub fn ode_flowpipe_step(
    names: &[String],
    flows: &[Expr],
    state: &[TaylorModel],
    dt: f64,
    time_axis: usize,
    settings: &ReachSettings,
) -> Result<Vec<TaylorModel>, StepFailure> {
    assert!(!state.is_empty(), "flowpipe step needs at least one variable");
    let ctx = TmCtx { n_vars: state[0].n_vars(), order: settings.tm_order };
    let stepper = OdeStepper::new(names, flows, ctx, time_axis);
    let pipe = stepper.step(state, dt, settings)?;
    Ok(pipe.iter().map(|tm| tm.substitute_var(time_axis, 1.0)).collect())
}

/// A clamp that fired (or may have fired) while advancing the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationHit {
    /// Clamped variable.
    pub var: String,
    /// Clamp value.
    pub limit: f64,
}

/// Simultaneous evaluation of a discrete map on Taylor models, followed by
/// the mode's saturation clamps. A bound entirely beyond a clamp collapses to
/// the clamp point (exact); a straddling bound proceeds with the clamped hull
/// — both record a hit.
pub fn discrete_map_step(
    names: &[String],
    maps: &[Expr],
    state: &[TaylorModel],
    saturations: &[Saturation],
    ctx: TmCtx,
) -> Result<(Vec<TaylorModel>, Vec<SaturationHit>), StepFailure> {
    assert_eq!(names.len(), maps.len(), "one map per variable");
    assert_eq!(names.len(), state.len(), "one model per variable");
    let env = (names, state);
    let mut next = Vec::with_capacity(maps.len());
    for m in maps {
        next.push(m.eval::<TaylorModel>(&env, &ctx)?);
    }
    let mut hits = Vec::new();
    for sat in saturations {
        apply_clamp(&mut next, names, sat, &mut hits, ctx);
    }
    Ok((next, hits))
}

fn apply_clamp(
    state: &mut [TaylorModel],
    names: &[String],
    sat: &Saturation,
    hits: &mut Vec<SaturationHit>,
    ctx: TmCtx,
) {
    let b = state[sat.var].bound();
    let clipped = match sat.side {
        ClampSide::Upper => {
            if b.lo() >= sat.limit {
                Some(Interval::point(sat.limit))
            } else if b.hi() > sat.limit {
                Some(Interval::new(b.lo(), sat.limit).expect("straddle keeps ordering"))
            } else {
                None
            }
        }
        ClampSide::Lower => {
            if b.hi() <= sat.limit {
                Some(Interval::point(sat.limit))
            } else if b.lo() < sat.limit {
                Some(Interval::new(sat.limit, b.hi()).expect("straddle keeps ordering"))
            } else {
                None
            }
        }
    };
    if let Some(iv) = clipped {
        state[sat.var] = tm_from_interval(iv, ctx);
        hits.push(SaturationHit { var: names[sat.var].clone(), limit: sat.limit });
    }
}

/// Three-way guard evaluation on interval bounds.
enum GuardStatus {
    /// Every true state satisfies the guard.
    True,
    /// No true state satisfies the guard.
    False,
    /// The bounds straddle the guard; neither branch is certain.
    Maybe,
}

fn guard_status(
    guard: &[Constraint],
    names: &[String],
    state: &[TaylorModel],
    ctx: TmCtx,
) -> Result<GuardStatus, StepFailure> {
    let env = (names, state);
    let mut all = GuardStatus::True;
    for c in guard {
        let b = c.expr.eval::<TaylorModel>(&env, &ctx)?.bound();
        let status = match c.relation {
            Relation::Le => {
                if b.hi() <= c.bound {
                    GuardStatus::True
                } else if b.lo() > c.bound {
                    GuardStatus::False
                } else {
                    GuardStatus::Maybe
                }
            }
            Relation::Ge => {
                if b.lo() >= c.bound {
                    GuardStatus::True
                } else if b.hi() < c.bound {
                    GuardStatus::False
                } else {
                    GuardStatus::Maybe
                }
            }
            Relation::Eq => {
                if b.lo() == c.bound && b.hi() == c.bound {
                    GuardStatus::True
                } else if !b.contains(c.bound) {
                    GuardStatus::False
                } else {
                    GuardStatus::Maybe
                }
            }
        };
        match status {
            GuardStatus::False => return Ok(GuardStatus::False),
            GuardStatus::Maybe => all = GuardStatus::Maybe,
            GuardStatus::True => {}
        }
    }
    Ok(all)
}

fn render_guard(guard: &[Constraint]) -> String {
    guard
        .iter()
        .map(|c| format!("{} {} {}", c.expr, c.relation, c.bound))
        .collect::<Vec<_>>()
        .join(" && ")
}

/// The enclosure recorded for one control step of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Flowpipe {
    /// Control step index (0-based).
    pub step: usize,
    /// Plant mode the step ran in (before any jump it triggered).
    pub mode: String,
    /// Physical time span the step covers.
    pub time: Interval,
    /// Action index chosen this step (mode-select controllers only).
    pub action: Option<usize>,
    /// Controller output bounds this step.
    pub control: Vec<Interval>,
    /// End-of-step state models, one per plant variable.
    pub state: Vec<TaylorModel>,
    /// Cached end-of-step bounds.
    pub bounds: Vec<Interval>,
    /// Bounds over the whole step (intra-step flowpipes hulled in).
    pub span_bounds: Vec<Interval>,
    /// Clamps that fired during the step.
    pub saturations: Vec<SaturationHit>,
    /// Mode entered via a cross transition during the step, if any.
    pub entered: Option<String>,
}

/// Why a branch stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalStatus {
    /// Ran to the step horizon or into an idle plant mode.
    Completed {
        /// First step whose advance took a cross transition (goal entry),
        /// if any.
        goal_step: Option<usize>,
    },
    /// A variable's enclosure exceeded the width cap, or Picard validation
    /// failed.
    RemainderBlowup {
        /// Step at which the enclosure degraded.
        step: usize,
        /// Offending variable.
        var: String,
    },
    /// Splitting again would exceed the branch budget.
    BranchLimit {
        /// Step at which the budget ran out.
        step: usize,
    },
    /// A transition guard could not be decided from the bounds.
    GuardStraddle {
        /// Step at which the guard straddled.
        step: usize,
        /// The undecidable guard, rendered for reporting.
        guard: String,
    },
}

/// One leaf of the branch tree: the action choices that led here, the
/// per-step enclosures, and how the branch ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Action index per control step (empty for latched controllers).
    pub actions: Vec<usize>,
    /// Per-step enclosures, in step order.
    pub pipes: Vec<Flowpipe>,
    /// Terminal status.
    pub status: TerminalStatus,
}

/// The full result of a closed-loop reach run. The union of leaves covers
/// every execution from the initial box (degraded leaves report their status
/// rather than aborting the run).
#[derive(Debug, Clone, PartialEq)]
pub struct ReachResult {
    /// Plant variables, in declaration order (column order for all bounds).
    pub variables: Vec<String>,
    /// The initial box this run covered.
    pub initial: Vec<Interval>,
    /// Branch leaves, ordered lexicographically by action sequence.
    pub branches: Vec<Branch>,
}

impl ReachResult {
    /// Whether every leaf ran to completion.
    pub fn all_completed(&self) -> bool {
        self.branches
            .iter()
            .all(|b| matches!(b.status, TerminalStatus::Completed { .. }))
    }

    /// CSV dump of per-step enclosures, one row per variable per step, step
    /// bounds hulled across branches: `step,time_lo,time_hi,var,lo,hi`.
    pub fn flowpipe_csv(&self) -> String {
        let mut out = String::from("step,time_lo,time_hi,var,lo,hi\n");
        let max_steps = self.branches.iter().map(|b| b.pipes.len()).max().unwrap_or(0);
        for step in 0..max_steps {
            let pipes: Vec<&Flowpipe> =
                self.branches.iter().filter_map(|b| b.pipes.get(step)).collect();
            let Some(first) = pipes.first() else { continue };
            let mut time = first.time;
            for p in &pipes[1..] {
                time = time.hull(&p.time);
            }
            for (v, name) in self.variables.iter().enumerate() {
                let mut h = pipes[0].span_bounds[v];
                for p in &pipes[1..] {
                    h = h.hull(&p.span_bounds[v]);
                }
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    step,
                    time.lo(),
                    time.hi(),
                    name,
                    h.lo(),
                    h.hi()
                ));
            }
        }
        out
    }
}

/// Splits a box into covering sub-boxes: cut points are shared between
/// neighbors (faces overlap exactly), outer faces are the original
/// endpoints, and the order is lexicographic with the last axis fastest.
pub fn subdivide_initial_set(
    initial: &[Interval],
    strategy: SubdivisionStrategy,
) -> Vec<Vec<Interval>> {
    let pieces: Vec<usize> = initial
        .iter()
        .map(|iv| match strategy {
            SubdivisionStrategy::Uniform(k) => {
                assert!(k >= 1, "uniform subdivision needs k >= 1");
                if iv.width() > 0.0 {
                    k
                } else {
                    1
                }
            }
            SubdivisionStrategy::Adaptive(w) => {
                assert!(w > 0.0, "adaptive subdivision needs a positive width");
                ((iv.width() / w).ceil() as usize).max(1)
            }
        })
        .collect();

    let cut = |iv: &Interval, n: usize, i: usize| -> f64 {
        if i == 0 {
            iv.lo()
        } else if i == n {
            iv.hi()
        } else {
            (iv.lo() + iv.width() * (i as f64 / n as f64)).clamp(iv.lo(), iv.hi())
        }
    };

    let mut out = Vec::with_capacity(pieces.iter().product());
    let mut idx = vec![0usize; initial.len()];
    loop {
        out.push(
            initial
                .iter()
                .zip(&pieces)
                .zip(&idx)
                .map(|((iv, n), i)| {
                    Interval::new(cut(iv, *n, *i), cut(iv, *n, *i + 1)).expect("cuts are ordered")
                })
                .collect(),
        );
        let mut k = initial.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < pieces[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Output range of a network over an input box, computed by reach through
/// the network's automaton form (or the functional composition, per `path`).
///
/// The interval bound of a Taylor model is the coefficient-sum bound, whose
/// overestimate scales with the square of the input radius; when
/// `settings.subdivision` is set, the box is split accordingly, each piece
/// gets its own chart, and the per-piece bounds are hulled. Subdividing is
/// the supported way to tighten the range — the bound itself stays cheap.
pub fn network_output_range(
    nn: &NeuralNetwork,
    inputs: &[Interval],
    settings: &ReachSettings,
    path: ControllerPath,
) -> Result<Vec<Interval>, StepFailure> {
    settings.validate().map_err(StepFailure::Pipeline)?;
    let auto = network_to_automaton(nn)
        .map_err(|e| StepFailure::Pipeline(format!("network transform failed: {e}")))?;
    let pieces = match settings.subdivision {
        Some(strategy) => subdivide_initial_set(inputs, strategy),
        None => vec![inputs.to_vec()],
    };
    let mut hull: Vec<Interval> = Vec::new();
    for piece in &pieces {
        let (chart, state) = Chart::new(piece, settings.tm_order);
        let out = layer_reach(
            &auto,
            Some(nn),
            &state,
            chart.ctx(),
            chart.time_axis(),
            settings,
            path,
        )?;
        let bounds: Vec<Interval> = out.iter().map(TaylorModel::bound).collect();
        if hull.is_empty() {
            hull = bounds;
        } else {
            for (h, b) in hull.iter_mut().zip(&bounds) {
                *h = h.hull(b);
            }
        }
    }
    Ok(hull)
}

/// What one plant advance produced.
struct AdvanceReport {
    ran_in: String,
    saturations: Vec<SaturationHit>,
    entered: Option<String>,
    straddle: Option<String>,
    span: Vec<Interval>,
    span_time: f64,
}

fn widen_span(span: &mut Vec<Interval>, state: &[TaylorModel]) {
    if span.is_empty() {
        *span = state.iter().map(TaylorModel::bound).collect();
    } else {
        for (s, tm) in span.iter_mut().zip(state) {
            *s = s.hull(&tm.bound());
        }
    }
}

/// First-enabled cross transition (declaration order, clamps excluded):
/// fires it when the guard certainly holds, skips it when it certainly does
/// not, and reports a straddle otherwise. Returns `true` when the advance
/// must stop on a straddle.
fn settle_cross_jumps(
    plant: &HybridAutomaton,
    mode: &mut String,
    state: &mut [TaylorModel],
    ctx: TmCtx,
    rep: &mut AdvanceReport,
) -> Result<bool, StepFailure> {
    let candidates: Vec<usize> = plant
        .transitions
        .iter()
        .enumerate()
        .filter(|(_, t)| t.src == *mode && plant.classify_saturation(t).is_none())
        .map(|(i, _)| i)
        .collect();
    for i in candidates {
        let t = &plant.transitions[i];
        match guard_status(&t.guard, &plant.variables, state, ctx)? {
            GuardStatus::False => {}
            GuardStatus::True => {
                apply_resets(&plant.variables, &t.reset, state, ctx)?;
                rep.entered = Some(t.dst.clone());
                *mode = t.dst.clone();
                return Ok(false);
            }
            GuardStatus::Maybe => {
                rep.straddle = Some(render_guard(&t.guard));
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Advances the plant one control period: `k` map applications under step
/// scheduling (stopping early in an idle mode), or `dt` time units of
/// validated integration under sample-time scheduling. Saturations and mode
/// switches are settled exactly as the simulator does.
fn advance_plant(
    plant: &HybridAutomaton,
    scheduling: &Scheduling,
    mode: &mut String,
    state: &mut Vec<TaylorModel>,
    ctx: TmCtx,
    time_axis: usize,
    settings: &ReachSettings,
) -> Result<AdvanceReport, StepFailure> {
    let mut rep = AdvanceReport {
        ran_in: mode.clone(),
        saturations: Vec::new(),
        entered: None,
        straddle: None,
        span: Vec::new(),
        span_time: 0.0,
    };
    match scheduling {
        Scheduling::DiscretePeriod(period) => {
            for _ in 0..*period {
                let def = plant
                    .mode(mode)
                    .ok_or_else(|| StepFailure::Pipeline(format!("unknown plant mode {mode}")))?;
                match def.kind {
                    ModeKind::Idle => break,
                    ModeKind::Ode => {
                        return Err(StepFailure::Pipeline(format!(
                            "mode {mode} is continuous but the loop schedules plant steps"
                        )))
                    }
                    ModeKind::DiscreteMap => {}
                }
                let sats: Vec<Saturation> = plant
                    .transitions_from(mode)
                    .filter_map(|t| plant.classify_saturation(t))
                    .collect();
                let (next, hits) =
                    discrete_map_step(&plant.variables, &def.flow, state, &sats, ctx)?;
                *state = next;
                rep.saturations.extend(hits);
                rep.span_time += 1.0;
                widen_span(&mut rep.span, state);
                let stop = settle_cross_jumps(plant, mode, state, ctx, &mut rep)?;
                widen_span(&mut rep.span, state);
                if stop {
                    return Ok(rep);
                }
            }
        }
        Scheduling::SampleTime(dt) => {
            let def = plant
                .mode(mode)
                .ok_or_else(|| StepFailure::Pipeline(format!("unknown plant mode {mode}")))?;
            match def.kind {
                ModeKind::Idle => {}
                ModeKind::DiscreteMap => {
                    return Err(StepFailure::Pipeline(format!(
                        "mode {mode} is a discrete map but the loop schedules a sample time"
                    )))
                }
                ModeKind::Ode => {
                    let driver = driver_magnitude(&plant.variables, &def.flow, state);
                    let n = step_count(*dt, driver, settings.ode_step);
                    let pipes = integrate_mode(
                        &plant.variables,
                        &def.flow,
                        state,
                        *dt,
                        n,
                        ctx,
                        time_axis,
                        settings,
                    )?;
                    for pipe in &pipes {
                        widen_span(&mut rep.span, pipe);
                    }
                    rep.span_time += *dt;
                    let stop = settle_cross_jumps(plant, mode, state, ctx, &mut rep)?;
                    widen_span(&mut rep.span, state);
                    if stop {
                        return Ok(rep);
                    }
                }
            }
        }
    }
    if rep.span.is_empty() {
        rep.span = state.iter().map(TaylorModel::bound).collect();
    }
    Ok(rep)
}

#[derive(Clone)]
struct PendingAction {
    action: usize,
    control: Vec<Interval>,
}

#[derive(Clone)]
struct BranchState {
    mode: String,
    state: Vec<TaylorModel>,
    pipes: Vec<Flowpipe>,
    actions: Vec<usize>,
    time: f64,
    goal_step: Option<usize>,
    pending: Option<PendingAction>,
}

/// Actions whose upper output bound reaches the best lower bound: exactly
/// the set that could win the argmax for some true state.
fn feasible_actions(bounds: &[Interval]) -> Vec<usize> {
    let best_lb = bounds.iter().map(Interval::lo).fold(f64::NEG_INFINITY, f64::max);
    bounds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.hi() >= best_lb)
        .map(|(i, _)| i)
        .collect()
}

/// Computes guaranteed enclosures of every closed-loop execution from the
/// initial box for the given number of control steps.
///
/// Each step runs the controller on the current enclosure, applies the
/// control map (branching on every feasible action when the argmax is
/// undecided), and advances the plant. Degraded enclosures, straddled
/// guards, and branch-budget exhaustion become leaf statuses; hard errors
/// (malformed loops, unbound variables) abort.
pub fn run_closed_loop(
    cl: &ClosedLoop,
    initial: &[Interval],
    steps: usize,
    settings: &ReachSettings,
) -> Result<ReachResult, StepFailure> {
    if let Err(msg) = settings.validate() {
        panic!("invalid reach settings: {msg}");
    }
    let plant = &cl.plant;
    assert_eq!(
        initial.len(),
        plant.variables.len(),
        "one initial interval per plant variable"
    );

    let (chart, init_state) = Chart::new(initial, settings.tm_order);
    let ctx = chart.ctx();
    let time_axis = chart.time_axis();

    let mut stack = vec![BranchState {
        mode: plant.initial_mode.clone(),
        state: init_state,
        pipes: Vec::new(),
        actions: Vec::new(),
        time: 0.0,
        goal_step: None,
        pending: None,
    }];
    let mut leaves: Vec<Branch> = Vec::new();

    'branches: while let Some(mut b) = stack.pop() {
        let status = loop {
            let step = b.pipes.len();
            if step == steps {
                break TerminalStatus::Completed { goal_step: b.goal_step };
            }
            let mode_def = plant
                .mode(&b.mode)
                .ok_or_else(|| StepFailure::Pipeline(format!("unknown plant mode {}", b.mode)))?;
            if mode_def.kind == ModeKind::Idle {
                break TerminalStatus::Completed { goal_step: b.goal_step };
            }

            // Controller phase (already done when resuming a split branch).
            let (action, control) = match b.pending.take() {
                Some(p) => (Some(p.action), p.control),
                None => {
                    let mut y = Vec::with_capacity(cl.wiring.len());
                    {
                        let env = (plant.variables.as_slice(), b.state.as_slice());
                        for w in &cl.wiring {
                            y.push(w.eval::<TaylorModel>(&env, &ctx)?);
                        }
                    }
                    let u = match layer_reach(
                        &cl.controller,
                        cl.network.as_ref(),
                        &y,
                        ctx,
                        time_axis,
                        settings,
                        settings.controller_path,
                    ) {
                        Ok(u) => u,
                        Err(StepFailure::RemainderBlowup { var, .. }) => {
                            break TerminalStatus::RemainderBlowup { step, var }
                        }
                        Err(e) => return Err(e),
                    };
                    let bounds: Vec<Interval> = u.iter().map(TaylorModel::bound).collect();
                    match &cl.control {
                        ControlMap::Latch(targets) => {
                            for (name, tm) in targets.iter().zip(&u) {
                                let idx =
                                    plant.var_index(name).expect("latch targets are validated");
                                b.state[idx] = tm.clone();
                            }
                            (None, bounds)
                        }
                        ControlMap::SelectMode(_) => {
                            let feasible = feasible_actions(&bounds);
                            if feasible.len() > 1 {
                                if leaves.len() + stack.len() + feasible.len()
                                    > settings.max_branches
                                {
                                    break TerminalStatus::BranchLimit { step };
                                }
                                for &a in feasible.iter().rev() {
                                    let mut child = b.clone();
                                    child.actions.push(a);
                                    child.pending = Some(PendingAction {
                                        action: a,
                                        control: bounds.clone(),
                                    });
                                    stack.push(child);
                                }
                                continue 'branches;
                            }
                            let a = feasible[0];
                            b.actions.push(a);
                            (Some(a), bounds)
                        }
                    }
                }
            };
            if let (Some(a), ControlMap::SelectMode(modes)) = (action, &cl.control) {
                b.mode = modes[a].clone();
            }

            // Plant phase.
            let report = match advance_plant(
                plant,
                &cl.scheduling,
                &mut b.mode,
                &mut b.state,
                ctx,
                time_axis,
                settings,
            ) {
                Ok(r) => r,
                Err(StepFailure::RemainderBlowup { var, .. }) => {
                    break TerminalStatus::RemainderBlowup { step, var }
                }
                Err(e) => return Err(e),
            };
            if let Some(guard) = report.straddle {
                break TerminalStatus::GuardStraddle { step, guard };
            }

            let bounds: Vec<Interval> = b.state.iter().map(TaylorModel::bound).collect();
            let time = Interval::new(b.time, b.time + report.span_time)
                .expect("time only advances");
            b.pipes.push(Flowpipe {
                step,
                mode: report.ran_in,
                time,
                action,
                control,
                state: b.state.clone(),
                bounds: bounds.clone(),
                span_bounds: report.span,
                saturations: report.saturations,
                entered: report.entered.clone(),
            });
            b.time += report.span_time;
            if report.entered.is_some() && b.goal_step.is_none() {
                b.goal_step = Some(step);
            }
            if let Some((idx, _)) = bounds
                .iter()
                .enumerate()
                .find(|(_, bd)| bd.width() > settings.max_remainder_width)
            {
                break TerminalStatus::RemainderBlowup {
                    step,
                    var: plant.variables[idx].clone(),
                };
            }
        };
        leaves.push(Branch { actions: b.actions, pipes: b.pipes, status });
    }

    Ok(ReachResult {
        variables: plant.variables.clone(),
        initial: initial.to_vec(),
        branches: leaves,
    })
}
