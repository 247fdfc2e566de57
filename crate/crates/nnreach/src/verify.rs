//! Property checking over reach results and counterexample search by exact
//! simulation.
//!
//! The two halves are deliberately one-sided. [`check_property`] reads only
//! validated flowpipe bounds, so its `Verified` verdict inherits the
//! enclosures' soundness; when a bound straddles a constraint it says
//! `Unknown` rather than guessing. [`falsify_by_simulation`] attacks the same
//! property with exact trajectories — box corners first, then a seeded
//! uniform sweep — and a hit is a genuine counterexample that replays
//! bit-identically. Absence of a hit proves nothing, and the checker never
//! claims `Falsified` on its own: enclosures prove, simulations refute.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::automaton::{ClosedLoop, Relation};
use crate::interval::Interval;
use crate::reach::{ReachResult, TerminalStatus};
use crate::sim::{simulate, SimError, Trace};

/// One bound on a named plant variable, `var <= bound` or `var >= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    /// Constrained plant variable.
    pub var: String,
    /// Direction; equality is not a usable property bound.
    pub relation: Relation,
    /// Right-hand side.
    pub bound: f64,
}

impl Condition {
    /// `var <= bound`.
    pub fn le(var: &str, bound: f64) -> Condition {
        Condition { var: var.to_string(), relation: Relation::Le, bound }
    }

    /// `var >= bound`.
    pub fn ge(var: &str, bound: f64) -> Condition {
        Condition { var: var.to_string(), relation: Relation::Ge, bound }
    }

    /// Does an exact value satisfy the condition?
    fn holds_at(&self, x: f64) -> bool {
        match self.relation {
            Relation::Le => x <= self.bound,
            Relation::Ge => x >= self.bound,
            Relation::Eq => x == self.bound,
        }
    }

    /// Trivalent check against a validated enclosure: `Some(true)` when every
    /// enclosed value satisfies the condition, `Some(false)` when none does,
    /// `None` when the bound cuts through it.
    fn holds_over(&self, b: &Interval) -> Option<bool> {
        match self.relation {
            Relation::Le => {
                if b.hi() <= self.bound {
                    Some(true)
                } else if b.lo() > self.bound {
                    Some(false)
                } else {
                    None
                }
            }
            Relation::Ge => {
                if b.lo() >= self.bound {
                    Some(true)
                } else if b.hi() < self.bound {
                    Some(false)
                } else {
                    None
                }
            }
            Relation::Eq => {
                if b.lo() == self.bound && b.hi() == self.bound {
                    Some(true)
                } else if !b.contains(self.bound) {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {}", self.var, self.relation, self.bound)
    }
}

/// The goal half of a reach-and-hold style property: drive `var` to at least
/// `threshold` within the step budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    /// Monitored plant variable.
    pub var: String,
    /// Threshold the variable must reach (`var >= threshold`).
    pub threshold: f64,
}

/// Reward requirement, checked at the goal step: the tracked reward variable
/// must be at least `floor`. Ties count — "at least ρ" is non-strict.
#[derive(Debug, Clone, PartialEq)]
pub struct Reward {
    /// Plant variable accumulating the reward.
    pub var: String,
    /// Lower bound ρ.
    pub floor: f64,
}

/// What must hold over a closed-loop run.
///
/// Safety conditions apply to every step's whole-span enclosure; terminal
/// conditions to each branch's final state. A goal, when present, must be
/// reached on every branch within `max_steps`, and the reward floor (which
/// needs a goal) is checked where the goal is first reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    /// Per-step bounds.
    pub safety: Vec<Condition>,
    /// Bounds on each branch's final state.
    pub terminal: Vec<Condition>,
    /// Reach target, if the property has one.
    pub goal: Option<Goal>,
    /// Reward floor at the goal step.
    pub reward: Option<Reward>,
    /// Step budget K.
    pub max_steps: usize,
}

impl Property {
    /// A pure safety property: conditions hold at every step, no goal.
    pub fn safety_only(safety: Vec<Condition>, max_steps: usize) -> Property {
        Property { safety, terminal: Vec::new(), goal: None, reward: None, max_steps }
    }

    /// Checks that every referenced variable exists and the shape is usable.
    pub fn validate(&self, variables: &[String]) -> Result<(), String> {
        let known = |v: &str| variables.iter().any(|n| n == v);
        for c in self.safety.iter().chain(&self.terminal) {
            if matches!(c.relation, Relation::Eq) {
                return Err(format!("condition `{c}` uses equality; bound it from both sides"));
            }
            if !known(&c.var) {
                return Err(format!("condition `{c}` references unknown variable `{}`", c.var));
            }
        }
        if let Some(g) = &self.goal {
            if !known(&g.var) {
                return Err(format!("goal references unknown variable `{}`", g.var));
            }
        }
        if let Some(r) = &self.reward {
            if !known(&r.var) {
                return Err(format!("reward references unknown variable `{}`", r.var));
            }
            if self.goal.is_none() {
                return Err("a reward floor needs a goal to anchor it".to_string());
            }
        }
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".to_string());
        }
        Ok(())
    }
}

/// Outcome of checking a property.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Every branch satisfies the property; `steps_bound` is the largest
    /// step count any branch needed to reach the goal (the horizon itself
    /// for goal-free properties).
    Verified {
        /// Max steps over branches.
        steps_bound: usize,
    },
    /// An exact trace violates the property.
    Falsified {
        /// Where the trace starts.
        initial: Vec<f64>,
        /// The violating run.
        trace: Trace,
        /// Rendered form of the broken condition.
        violated: String,
    },
    /// Neither proved nor refuted.
    Unknown {
        /// What blocked the proof.
        reason: String,
        /// Subset index this verdict belongs to (0 when unsubdivided;
        /// callers running a subdivision sweep fill it in).
        subset: usize,
        /// Step where the blocker appeared, when one is identifiable.
        step: Option<usize>,
    },
}

impl Verdict {
    /// Restamps the subset index on an `Unknown`; other verdicts pass
    /// through. Subdivision sweeps run subsets independently and attach
    /// indices afterwards.
    pub fn for_subset(mut self, ix: usize) -> Verdict {
        if let Verdict::Unknown { subset, .. } = &mut self {
            *subset = ix;
        }
        self
    }
}

fn unknown(reason: String, step: Option<usize>) -> Verdict {
    Verdict::Unknown { reason, subset: 0, step }
}

/// Sound property check over validated enclosures: `Verified` only when every
/// branch completed, every per-step bound satisfies every safety condition,
/// each branch's final state meets the terminal conditions, and (when a goal
/// is present) every branch provably reaches it — with the reward floor met —
/// within the budget. Anything the bounds cannot decide comes back `Unknown`;
/// refutation is [`falsify_by_simulation`]'s job.
pub fn check_property(result: &ReachResult, prop: &Property) -> Verdict {
    if let Err(e) = prop.validate(&result.variables) {
        return unknown(format!("property does not fit this loop: {e}"), None);
    }
    let col = |var: &str| result.variables.iter().position(|n| n == var).expect("validated");

    let mut steps_bound = 0usize;
    for branch in &result.branches {
        match &branch.status {
            TerminalStatus::Completed { .. } => {}
            TerminalStatus::RemainderBlowup { step, var } => {
                return unknown(format!("remainder blowup on `{var}`"), Some(*step));
            }
            TerminalStatus::BranchLimit { step } => {
                return unknown("branch budget exhausted".to_string(), Some(*step));
            }
            TerminalStatus::GuardStraddle { step, guard } => {
                return unknown(format!("guard straddle: {guard}"), Some(*step));
            }
        }

        for pipe in &branch.pipes {
            for c in &prop.safety {
                match c.holds_over(&pipe.span_bounds[col(&c.var)]) {
                    Some(true) => {}
                    Some(false) => {
                        return unknown(format!("safety bound violated: {c}"), Some(pipe.step));
                    }
                    None => {
                        return unknown(format!("safety bound straddled: {c}"), Some(pipe.step));
                    }
                }
            }
        }

        let last = match branch.pipes.last() {
            Some(p) => p,
            None => return unknown("branch recorded no steps".to_string(), None),
        };
        for c in &prop.terminal {
            match c.holds_over(&last.bounds[col(&c.var)]) {
                Some(true) => {}
                Some(false) => {
                    return unknown(format!("terminal bound violated: {c}"), Some(last.step));
                }
                None => {
                    return unknown(format!("terminal bound straddled: {c}"), Some(last.step));
                }
            }
        }

        let branch_steps = match &prop.goal {
            None => branch.pipes.len(),
            Some(goal) => {
                let reach = Condition::ge(&goal.var, goal.threshold);
                let mut reached = None;
                for pipe in &branch.pipes {
                    if pipe.step >= prop.max_steps {
                        break;
                    }
                    match reach.holds_over(&pipe.bounds[col(&goal.var)]) {
                        Some(true) => {
                            reached = Some(pipe);
                            break;
                        }
                        Some(false) => {}
                        None => {
                            return unknown(
                                format!("goal straddled: {reach}"),
                                Some(pipe.step),
                            );
                        }
                    }
                }
                let pipe = match reached {
                    Some(p) => p,
                    None => {
                        return unknown(
                            format!("goal not provably reached within {} steps", prop.max_steps),
                            None,
                        );
                    }
                };
                if let Some(r) = &prop.reward {
                    let floor = Condition::ge(&r.var, r.floor);
                    match floor.holds_over(&pipe.bounds[col(&r.var)]) {
                        Some(true) => {}
                        Some(false) => {
                            return unknown(
                                format!("reward bound violated: {floor}"),
                                Some(pipe.step),
                            );
                        }
                        None => {
                            return unknown(
                                format!("reward bound straddled: {floor}"),
                                Some(pipe.step),
                            );
                        }
                    }
                }
                pipe.step + 1
            }
        };
        steps_bound = steps_bound.max(branch_steps);
    }
    Verdict::Verified { steps_bound }
}

/// The reward lower bound a result guarantees: minimum over branches of the
/// reward variable's lower bound at the step the goal is first provably
/// reached (the final step when the property has no goal). `None` when some
/// branch never decides the goal — there is no sound bound to report then.
pub fn reward_lower_bound(result: &ReachResult, prop: &Property) -> Option<f64> {
    let r = prop.reward.as_ref()?;
    let rcol = result.variables.iter().position(|n| n == &r.var)?;
    let mut worst = f64::INFINITY;
    for branch in &result.branches {
        let pipe = match &prop.goal {
            None => branch.pipes.last()?,
            Some(goal) => {
                let gcol = result.variables.iter().position(|n| n == &goal.var)?;
                branch
                    .pipes
                    .iter()
                    .find(|p| p.bounds[gcol].lo() >= goal.threshold)?
            }
        };
        worst = worst.min(pipe.bounds[rcol].lo());
    }
    (worst.is_finite()).then_some(worst)
}

/// An exact violating run, replayable from `initial`.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    /// Initial plant state the violation starts from.
    pub initial: Vec<f64>,
    /// The full simulated trace.
    pub trace: Trace,
    /// Rendered form of the condition that broke.
    pub violated: String,
    /// Cycle at which it broke (for a missed goal: the budget).
    pub step: usize,
    /// Reward achieved by the trace, when the property tracks one.
    pub reward: Option<f64>,
}

/// Checks one exact trace against the property. Returns the violation, if
/// any, in the same precedence order the checker uses: per-step safety,
/// then goal/reward, then terminal state.
fn violation_in(trace: &Trace, prop: &Property) -> Option<(String, usize)> {
    let value = |cycle: usize, var: &str| trace.value(cycle, var).expect("validated variable");

    for cycle in 0..=trace.cycles() {
        for c in &prop.safety {
            if !c.holds_at(value(cycle, &c.var)) {
                return Some((c.to_string(), cycle));
            }
        }
    }

    let mut goal_cycle = None;
    if let Some(goal) = &prop.goal {
        let budget = prop.max_steps.min(trace.cycles());
        goal_cycle = (0..=budget).find(|&c| value(c, &goal.var) >= goal.threshold);
        let cycle = match goal_cycle {
            Some(c) => c,
            None => {
                let g = Condition::ge(&goal.var, goal.threshold);
                return Some((format!("{g} within {} steps", prop.max_steps), prop.max_steps));
            }
        };
        if let Some(r) = &prop.reward {
            if value(cycle, &r.var) < r.floor {
                return Some((Condition::ge(&r.var, r.floor).to_string(), cycle));
            }
        }
    }

    // The run effectively ends where the goal is reached; goal-free
    // properties are judged at the horizon.
    let end = goal_cycle.unwrap_or(trace.cycles());
    for c in &prop.terminal {
        if !c.holds_at(value(end, &c.var)) {
            return Some((c.to_string(), end));
        }
    }
    None
}

fn reward_of(trace: &Trace, prop: &Property) -> Option<f64> {
    let r = prop.reward.as_ref()?;
    let end = match &prop.goal {
        Some(goal) => (0..=trace.cycles())
            .find(|&c| trace.value(c, &goal.var).unwrap_or(f64::NEG_INFINITY) >= goal.threshold)
            .unwrap_or(trace.cycles()),
        None => trace.cycles(),
    };
    trace.value(end, &r.var)
}

/// Hunts for an exact counterexample: simulates every corner of the initial
/// box first (when `corner_first` is set), then `n_samples` uniform draws
/// from a ChaCha8 stream seeded with `seed`. The first violating trace wins.
/// Finding nothing proves nothing — this is the refutation side only.
pub fn falsify_by_simulation(
    cl: &ClosedLoop,
    initial: &[Interval],
    prop: &Property,
    n_samples: usize,
    corner_first: bool,
    seed: u64,
) -> Result<Option<Counterexample>, SimError> {
    assert!(n_samples >= 1, "need at least one sample");
    prop.validate(&cl.plant.variables)
        .unwrap_or_else(|e| panic!("property does not fit this loop: {e}"));

    let try_point = |point: Vec<f64>| -> Result<Option<Counterexample>, SimError> {
        let trace = simulate(cl, &point, prop.max_steps)?;
        Ok(violation_in(&trace, prop).map(|(violated, step)| Counterexample {
            reward: reward_of(&trace, prop),
            initial: point,
            trace,
            violated,
            step,
        }))
    };

    if corner_first {
        for corner in corners(initial) {
            if let Some(ce) = try_point(corner)? {
                return Ok(Some(ce));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let point: Vec<f64> = initial
            .iter()
            .map(|iv| {
                if iv.width() > 0.0 {
                    rng.random_range(iv.lo()..=iv.hi())
                } else {
                    iv.lo()
                }
            })
            .collect();
        if let Some(ce) = try_point(point)? {
            return Ok(Some(ce));
        }
    }
    Ok(None)
}

/// All corner points of a box, degenerate axes contributing their single
/// value. The count doubles per wide axis, so callers with many wide axes
/// should keep `corner_first` within reason.
fn corners(initial: &[Interval]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::with_capacity(initial.len())];
    for iv in initial {
        if iv.width() > 0.0 {
            let mut doubled = Vec::with_capacity(points.len() * 2);
            for p in &points {
                let mut lo = p.clone();
                lo.push(iv.lo());
                doubled.push(lo);
                let mut hi = p.clone();
                hi.push(iv.hi());
                doubled.push(hi);
            }
            points = doubled;
        } else {
            for p in &mut points {
                p.push(iv.lo());
            }
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{
        compose_closed_loop, Constraint, ControlMap, HybridAutomaton, Mode, Scheduling,
        Transition,
    };
    use crate::expr::parse;
    use crate::neural::{Activation, Layer, NeuralNetwork};
    use crate::reach::{run_closed_loop, ReachSettings};

    fn e(s: &str) -> crate::expr::Expr {
        parse(s).unwrap()
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    /// Constant-output controller: u = bias, ignoring the measurement.
    fn constant_controller(bias: f64) -> NeuralNetwork {
        NeuralNetwork::new(
            1,
            vec![Layer {
                weights: vec![vec![0.0]],
                bias: vec![bias],
                activation: Activation::Linear,
            }],
        )
        .unwrap()
    }

    /// Ramp plant: x advances by `rate·u` per step, r pays the step cost and
    /// collects +100 on crossing `goal`.
    fn ramp_loop(rate: f64, goal: f64, bias: f64) -> ClosedLoop {
        let plant = HybridAutomaton {
            variables: vec!["x".into(), "r".into(), "u".into()],
            modes: vec![
                Mode::discrete_map(
                    "run",
                    vec![e(&format!("x + {rate} * u")), e("r - 0.1 * u^2"), e("u")],
                ),
                Mode::idle("done"),
            ],
            transitions: vec![Transition::new("run", "done")
                .with_guard(Constraint::ge(e("x"), goal))
                .with_reset("r", e("r + 100"))],
            initial_mode: "run".into(),
            initial_set: vec![Interval::point(0.0); 3],
            inputs: vec!["u".into()],
            observation: vec![e("x")],
        };
        let nn = constant_controller(bias);
        let controller = crate::neural::network_to_automaton(&nn).unwrap();
        compose_closed_loop(
            controller,
            plant,
            vec![e("x")],
            ControlMap::Latch(vec!["u".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap()
        .with_network(nn)
    }

    fn reach_goal_property(goal: f64, floor: f64, max_steps: usize) -> Property {
        Property {
            safety: Vec::new(),
            terminal: Vec::new(),
            goal: Some(Goal { var: "x".into(), threshold: goal }),
            reward: Some(Reward { var: "r".into(), floor }),
            max_steps,
        }
    }

    #[test]
    fn validation_rejects_foreign_variables() {
        let vars = vec!["x".to_string(), "r".to_string()];
        let mut prop = Property::safety_only(vec![Condition::le("y", 1.0)], 10);
        assert!(prop.validate(&vars).is_err());
        prop.safety = vec![Condition::le("x", 1.0)];
        assert!(prop.validate(&vars).is_ok());
        prop.reward = Some(Reward { var: "r".into(), floor: 90.0 });
        assert!(prop.validate(&vars).is_err(), "reward without goal");
    }

    #[test]
    fn verified_run_reports_the_step_bound() {
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let result = run_closed_loop(
            &cl,
            &[iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)],
            10,
            &ReachSettings::default(),
        )
        .unwrap();
        // x crosses 0.45 on step 5 (x₅ ∈ [0.5, 0.51]); reward 100 − 0.5.
        let prop = reach_goal_property(0.45, 99.0, 10);
        let verdict = check_property(&result, &prop);
        assert_eq!(verdict, Verdict::Verified { steps_bound: 5 });
        let floor = reward_lower_bound(&result, &prop).unwrap();
        assert!((floor - 99.5).abs() < 1e-9, "reward floor {floor}");
    }

    #[test]
    fn reward_straddle_is_unknown_not_verified() {
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let result = run_closed_loop(
            &cl,
            &[iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)],
            10,
            &ReachSettings::default(),
        )
        .unwrap();
        // The reward at the goal step is exactly 99.5; a floor inside the
        // enclosure's slack cannot be decided.
        let prop = reach_goal_property(0.45, 99.5 + 1e-14, 10);
        match check_property(&result, &prop) {
            Verdict::Unknown { reason, .. } => {
                assert!(reason.contains("reward"), "{reason}");
            }
            v => panic!("expected Unknown, got {v:?}"),
        }
    }

    #[test]
    fn missed_goal_is_unknown() {
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let result = run_closed_loop(
            &cl,
            &[iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)],
            3,
            &ReachSettings::default(),
        )
        .unwrap();
        let prop = reach_goal_property(0.45, 90.0, 3);
        match check_property(&result, &prop) {
            Verdict::Unknown { reason, .. } => {
                assert!(reason.contains("goal not provably reached"), "{reason}");
            }
            v => panic!("expected Unknown, got {v:?}"),
        }
    }

    #[test]
    fn safety_straddle_points_at_the_step() {
        let cl = ramp_loop(0.1, 10.0, 1.0);
        let result = run_closed_loop(
            &cl,
            &[iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)],
            6,
            &ReachSettings::default(),
        )
        .unwrap();
        // x reaches [0.4, 0.41] on step 4 and [0.5, 0.51] on step 5: a 0.45
        // cap is satisfied through step 4, straddled never, violated at 5.
        let prop = Property::safety_only(vec![Condition::le("x", 0.45)], 6);
        match check_property(&result, &prop) {
            Verdict::Unknown { reason, step, .. } => {
                assert!(reason.contains("violated"), "{reason}");
                assert_eq!(step, Some(4), "zero-based step of the fifth advance");
            }
            v => panic!("expected Unknown, got {v:?}"),
        }
    }

    #[test]
    fn fifty_steps_of_unit_control_land_on_ninety_five() {
        // u = 1 throughout, goal crossed exactly at step 50: the reward
        // telescope gives 100 − 0.1·50 = 95.
        let cl = ramp_loop(0.01, 0.5, 1.0);
        let trace = simulate(&cl, &[0.0, 0.0, 0.0], 60).unwrap();
        let prop = reach_goal_property(0.5, 90.0, 60);
        assert!(violation_in(&trace, &prop).is_none());
        let reward = reward_of(&trace, &prop).unwrap();
        assert!((reward - 95.0).abs() < 1e-9, "reward {reward}");
    }

    #[test]
    fn cost_makes_a_lossless_reward_floor_falsifiable() {
        // Any nonzero control pays 0.1·u² per step, so demanding the full
        // 100 is refuted by the very first sample.
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let prop = reach_goal_property(0.45, 100.0, 10);
        let ce = falsify_by_simulation(
            &cl,
            &[iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)],
            &prop,
            10,
            true,
            7,
        )
        .unwrap()
        .expect("cost strictly positive");
        assert!(ce.violated.contains("r >= 100"), "{}", ce.violated);
        let reward = ce.reward.unwrap();
        assert!(reward < 100.0, "reward {reward}");
    }

    #[test]
    fn clamped_variable_never_falsifies_its_clamp_bound() {
        // The plant clamps x at 0.2 from above, so `x <= 0.2` holds on every
        // exact trajectory no matter how many samples we throw at it.
        let plant = HybridAutomaton {
            variables: vec!["x".into(), "u".into()],
            modes: vec![Mode::discrete_map("run", vec![e("x + 0.05 * u"), e("u")])],
            transitions: vec![Transition::new("run", "run")
                .with_guard(Constraint::ge(e("x"), 0.2))
                .with_reset("x", e("0.2"))],
            initial_mode: "run".into(),
            initial_set: vec![Interval::point(0.0); 2],
            inputs: vec!["u".into()],
            observation: vec![e("x")],
        };
        let nn = constant_controller(1.0);
        let controller = crate::neural::network_to_automaton(&nn).unwrap();
        let cl = compose_closed_loop(
            controller,
            plant,
            vec![e("x")],
            ControlMap::Latch(vec!["u".to_string()]),
            Scheduling::DiscretePeriod(1),
        )
        .unwrap()
        .with_network(nn);
        let prop = Property::safety_only(vec![Condition::le("x", 0.2)], 20);
        let none = falsify_by_simulation(
            &cl,
            &[iv(-0.1, 0.1), Interval::point(0.0)],
            &prop,
            10_000,
            true,
            42,
        )
        .unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn verified_results_survive_a_simulation_assault() {
        // Soundness coupling: once the checker says Verified, no exact
        // sample may violate the same property.
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let initial = [iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)];
        let result =
            run_closed_loop(&cl, &initial, 10, &ReachSettings::default()).unwrap();
        let prop = reach_goal_property(0.45, 99.0, 10);
        assert!(matches!(check_property(&result, &prop), Verdict::Verified { .. }));
        let none = falsify_by_simulation(&cl, &initial, &prop, 10_000, true, 1).unwrap();
        assert!(none.is_none(), "simulation contradicted a sound verdict");
    }

    #[test]
    fn counterexamples_replay_bit_identically() {
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let initial = [iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)];
        let prop = reach_goal_property(0.45, 100.0, 10);
        let a = falsify_by_simulation(&cl, &initial, &prop, 50, false, 99)
            .unwrap()
            .expect("falsifiable");
        let b = falsify_by_simulation(&cl, &initial, &prop, 50, false, 99)
            .unwrap()
            .expect("falsifiable");
        assert_eq!(a, b, "same seed, same counterexample");
        let replay = simulate(&cl, &a.initial, prop.max_steps).unwrap();
        assert_eq!(replay, a.trace, "replay must reproduce the violation");
    }

    #[test]
    fn corner_enumeration_covers_wide_axes_only() {
        let pts = corners(&[iv(0.0, 1.0), Interval::point(2.0), iv(-1.0, 1.0)]);
        assert_eq!(pts.len(), 4);
        assert!(pts.contains(&vec![0.0, 2.0, -1.0]));
        assert!(pts.contains(&vec![1.0, 2.0, 1.0]));
    }

    #[test]
    fn blown_branch_turns_into_unknown() {
        let cl = ramp_loop(0.1, 0.45, 1.0);
        let mut result = run_closed_loop(
            &cl,
            &[iv(0.0, 0.01), Interval::point(0.0), Interval::point(0.0)],
            10,
            &ReachSettings::default(),
        )
        .unwrap();
        result.branches[0].status =
            TerminalStatus::RemainderBlowup { step: 3, var: "x".into() };
        let prop = reach_goal_property(0.45, 99.0, 10);
        match check_property(&result, &prop) {
            Verdict::Unknown { reason, step, .. } => {
                assert!(reason.contains("remainder blowup"), "{reason}");
                assert_eq!(step, Some(3));
            }
            v => panic!("expected Unknown, got {v:?}"),
        }
    }
}
