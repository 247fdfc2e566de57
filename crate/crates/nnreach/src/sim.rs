//! Exact point simulation of closed loops.
//!
//! This is the reference semantics everything else is measured against:
//! flowpipe enclosures must contain these trajectories, counterexamples must
//! replay through here bit-identically, and reward bounds are validated
//! against the rewards accumulated here. One simulation cycle reads the
//! measurements from the plant state, runs the controller (closed-form
//! network evaluation — not the proxy ODEs), applies the control map, and
//! advances the plant one scheduling period, honoring saturating
//! self-transitions and mode switches exactly as declared.

use thiserror::Error;

use crate::automaton::{ClosedLoop, ControlMap, HybridAutomaton, ModeKind, Scheduling, Transition};
use crate::expr::EvalError;
use crate::neural::{eval_network, NetworkError};

/// A clamp that fired during simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationEvent {
    /// Cycle index (0-based) in which the clamp fired.
    pub cycle: usize,
    /// Clamped variable.
    pub var: String,
    /// Value the variable was pinned to.
    pub limit: f64,
}

/// A complete simulated run: plant states over time plus the control activity
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Plant variable names, fixing the meaning of each state column.
    pub variables: Vec<String>,
    /// Plant state after each cycle; `states[0]` is the initial state, so the
    /// length is one more than the number of completed cycles.
    pub states: Vec<Vec<f64>>,
    /// Controller outputs latched at the start of each cycle.
    pub controls: Vec<Vec<f64>>,
    /// Action chosen per cycle (`Some` only for mode-selecting controllers).
    pub actions: Vec<Option<usize>>,
    /// Plant mode at each snapshot, aligned with `states`.
    pub modes: Vec<String>,
    /// Clamps that fired, in order.
    pub saturations: Vec<SaturationEvent>,
}

impl Trace {
    /// Number of completed cycles.
    pub fn cycles(&self) -> usize {
        self.controls.len()
    }

    /// The last state reached.
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("a trace always holds the initial state")
    }

    /// Value of a named variable after `cycle` cycles (0 = initial).
    pub fn value(&self, cycle: usize, var: &str) -> Option<f64> {
        let idx = self.variables.iter().position(|v| v == var)?;
        self.states.get(cycle).map(|s| s[idx])
    }

    /// First cycle count after which the plant sat in the named mode.
    pub fn first_in_mode(&self, mode: &str) -> Option<usize> {
        self.modes.iter().position(|m| m == mode)
    }
}

/// Simulation failure.
#[derive(Debug, Error)]
pub enum SimError {
    /// An expression failed to evaluate.
    #[error(transparent)]
    Eval(#[from] EvalError),
    /// Controller network evaluation failed.
    #[error(transparent)]
    Network(#[from] NetworkError),
    /// The controller has ODE modes but no attached source network; exact
    /// simulation cannot integrate proxy flows.
    #[error("exact simulation of this controller needs its source network")]
    NeedsNetwork,
    /// The initial state has the wrong length.
    #[error("initial state has {found} entries for {expected} plant variables")]
    BadInitial {
        /// Plant variable count.
        expected: usize,
        /// Supplied entry count.
        found: usize,
    },
    /// A mode name could not be resolved (malformed automaton).
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    /// Plant mode kind and scheduling disagree (a discrete map under a
    /// continuous sample time, or an ODE under a step period).
    #[error("mode `{mode}` is {kind} but the loop schedules {scheduling}")]
    SchedulingMismatch {
        /// Offending plant mode.
        mode: String,
        /// `"a discrete map"` or `"an ODE"`.
        kind: &'static str,
        /// `"plant steps"` or `"a sample time"`.
        scheduling: &'static str,
    },
    /// The controller automaton kept jumping without reaching a terminal
    /// mode.
    #[error("controller pipeline did not terminate within {0} jumps")]
    PipelineStuck(usize),
}

/// Evaluates the controller exactly at a measurement point: through the
/// source network when attached, otherwise by walking the controller
/// automaton's resets (possible only when it has no ODE modes, e.g. for
/// purely linear controllers).
pub fn controller_output(cl: &ClosedLoop, y: &[f64]) -> Result<Vec<f64>, SimError> {
    if let Some(nn) = &cl.network {
        return Ok(eval_network(nn, y)?);
    }
    exec_reset_pipeline(&cl.controller, y)
}

/// Runs a reset-only controller automaton at a point: writes `inputs` into
/// the declared input slots, follows enabled transitions applying resets until
/// no transition fires, and reads the observation map.
fn exec_reset_pipeline(h: &HybridAutomaton, inputs: &[f64]) -> Result<Vec<f64>, SimError> {
    let mut state: Vec<f64> = h.initial_set.iter().map(|iv| iv.midpoint()).collect();
    for (slot, value) in h.inputs.iter().zip(inputs) {
        let idx = h.var_index(slot).ok_or_else(|| SimError::UnknownMode(slot.clone()))?;
        state[idx] = *value;
    }
    let mut mode = h.initial_mode.clone();
    let max_jumps = h.modes.len() + 1;
    for _ in 0..max_jumps {
        let def = h.mode(&mode).ok_or_else(|| SimError::UnknownMode(mode.clone()))?;
        if def.kind != ModeKind::Idle {
            return Err(SimError::NeedsNetwork);
        }
        let mut next_mode = None;
        for t in h.transitions_from(&mode) {
            if guard_holds(t, &h.variables, &state)? {
                apply_resets(t, &h.variables, &mut state)?;
                next_mode = Some(t.dst.clone());
                break;
            }
        }
        if let Some(next) = next_mode {
            mode = next;
        } else {
            let env = (h.variables.as_slice(), state.as_slice());
            return h
                .observation
                .iter()
                .map(|e| e.eval_f64(&env).map_err(SimError::from))
                .collect();
        }
    }
    Err(SimError::PipelineStuck(max_jumps))
}

fn guard_holds(t: &Transition, names: &[String], state: &[f64]) -> Result<bool, SimError> {
    let env = (names, state);
    for c in &t.guard {
        if !c.holds_at(&env)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Applies a transition's resets simultaneously on the pre-jump state.
fn apply_resets(t: &Transition, names: &[String], state: &mut Vec<f64>) -> Result<(), SimError> {
    let mut new_values = Vec::with_capacity(t.reset.len());
    {
        let env = (names, state.as_slice());
        for (target, e) in &t.reset {
            let idx = names
                .iter()
                .position(|v| v == target)
                .ok_or_else(|| SimError::UnknownMode(target.clone()))?;
            new_values.push((idx, e.eval_f64(&env)?));
        }
    }
    for (idx, v) in new_values {
        state[idx] = v;
    }
    Ok(())
}

/// Index of the largest entry; ties go to the smallest index, so action
/// selection is deterministic.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Number of substeps the reference integrator uses per sample period when a
/// plant mode is a genuine ODE. The built-in case studies use discrete maps,
/// for which simulation is exact; this path exists for hand-written
/// continuous plants and is deterministic but carries RK4 truncation error.
const ODE_SUBSTEPS: usize = 64;

/// Advances the plant one step in its current mode (one map application, or
/// `dt` time units of RK4), then applies saturations and the first enabled
/// mode switch. Returns `false` if the mode is idle and nothing moved.
fn step_plant_once(
    plant: &HybridAutomaton,
    mode: &mut String,
    state: &mut Vec<f64>,
    dt: Option<f64>,
    cycle: usize,
    saturations: &mut Vec<SaturationEvent>,
) -> Result<bool, SimError> {
    let def = plant.mode(mode).ok_or_else(|| SimError::UnknownMode(mode.clone()))?;
    match def.kind {
        ModeKind::Idle => return Ok(false),
        ModeKind::DiscreteMap => {
            if dt.is_some() {
                return Err(SimError::SchedulingMismatch {
                    mode: mode.clone(),
                    kind: "a discrete map",
                    scheduling: "a sample time",
                });
            }
            let env = (plant.variables.as_slice(), state.as_slice());
            let new = def
                .flow
                .iter()
                .map(|e| e.eval_f64(&env))
                .collect::<Result<Vec<f64>, _>>()?;
            *state = new;
        }
        ModeKind::Ode => {
            let dt = dt.ok_or(SimError::SchedulingMismatch {
                mode: mode.clone(),
                kind: "an ODE",
                scheduling: "plant steps",
            })?;
            let h = dt / ODE_SUBSTEPS as f64;
            let eval_flow = |s: &[f64]| -> Result<Vec<f64>, SimError> {
                let env = (plant.variables.as_slice(), s);
                def.flow
                    .iter()
                    .map(|e| e.eval_f64(&env).map_err(SimError::from))
                    .collect()
            };
            for _ in 0..ODE_SUBSTEPS {
                let k1 = eval_flow(state)?;
                let k2 = eval_flow(&shifted(state, &k1, h / 2.0))?;
                let k3 = eval_flow(&shifted(state, &k2, h / 2.0))?;
                let k4 = eval_flow(&shifted(state, &k3, h))?;
                for i in 0..state.len() {
                    state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }

    // Saturations first (in declaration order), then the first enabled mode
    // switch, both evaluated on the post-step state.
    for t in plant.transitions_from(&mode.clone()) {
        if let Some(sat) = plant.classify_saturation(t) {
            if guard_holds(t, &plant.variables, state)? {
                state[sat.var] = sat.limit;
                saturations.push(SaturationEvent {
                    cycle,
                    var: plant.variables[sat.var].clone(),
                    limit: sat.limit,
                });
            }
        }
    }
    let current = mode.clone();
    for t in plant.transitions_from(&current) {
        if plant.classify_saturation(t).is_some() {
            continue;
        }
        if guard_holds(t, &plant.variables, state)? {
            apply_resets(t, &plant.variables, state)?;
            *mode = t.dst.clone();
            break;
        }
    }
    Ok(true)
}

fn shifted(state: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    state.iter().zip(k).map(|(s, d)| s + h * d).collect()
}

/// Simulates the closed loop exactly for up to `cycles` control cycles from a
/// plant initial state (in plant variable order). Stops early if the plant
/// enters an idle mode (episode over). Deterministic: identical inputs yield
/// bit-identical traces.
pub fn simulate(cl: &ClosedLoop, initial: &[f64], cycles: usize) -> Result<Trace, SimError> {
    let plant = &cl.plant;
    if initial.len() != plant.variables.len() {
        return Err(SimError::BadInitial {
            expected: plant.variables.len(),
            found: initial.len(),
        });
    }

    let mut state = initial.to_vec();
    let mut mode = plant.initial_mode.clone();
    let mut trace = Trace {
        variables: plant.variables.clone(),
        states: vec![state.clone()],
        controls: Vec::new(),
        actions: Vec::new(),
        modes: vec![mode.clone()],
        saturations: Vec::new(),
    };

    for cycle in 0..cycles {
        let def = plant.mode(&mode).ok_or_else(|| SimError::UnknownMode(mode.clone()))?;
        if def.kind == ModeKind::Idle {
            break;
        }

        let env = (plant.variables.as_slice(), state.as_slice());
        let y = cl
            .wiring
            .iter()
            .map(|e| e.eval_f64(&env))
            .collect::<Result<Vec<f64>, _>>()?;
        let out = controller_output(cl, &y)?;

        let mut action = None;
        match &cl.control {
            ControlMap::Latch(vars) => {
                for (var, value) in vars.iter().zip(&out) {
                    let idx = plant
                        .var_index(var)
                        .ok_or_else(|| SimError::UnknownMode(var.clone()))?;
                    state[idx] = *value;
                }
            }
            ControlMap::SelectMode(mode_names) => {
                let a = argmax(&out);
                action = Some(a);
                mode = mode_names[a].clone();
            }
        }
        trace.controls.push(out);
        trace.actions.push(action);

        match cl.scheduling {
            Scheduling::DiscretePeriod(k) => {
                for _ in 0..k {
                    if !step_plant_once(plant, &mut mode, &mut state, None, cycle, &mut trace.saturations)? {
                        break;
                    }
                }
            }
            Scheduling::SampleTime(dt) => {
                step_plant_once(plant, &mut mode, &mut state, Some(dt), cycle, &mut trace.saturations)?;
            }
        }

        trace.states.push(state.clone());
        trace.modes.push(mode.clone());
    }

    Ok(trace)
}
