//! Validated integration of one ODE mode: Taylor-series-in-time flowpipes
//! whose remainders are proven by Picard iteration.
//!
//! One step works in normalized step time `s ∈ [0, 1]` living on a reserved
//! domain axis of the Taylor models. The solution candidate is the Taylor
//! series `x(s·h) ≈ Σ Lⁱ(x)·(h·s)ⁱ/i!` built from symbolic Lie derivatives of
//! the flow field evaluated on the incoming state models. The remainder
//! interval is then grown (inflate-and-check) until the Picard operator
//! `Φ(X) = x₀ + h·∫ f(X)` maps the candidate set into its own interior, which
//! certifies that every true trajectory from the incoming set stays inside
//! the returned models for the whole step. Substituting `s = 1` (exact) gives
//! the end-of-step state for chaining.

use crate::expr::{differentiate, simplify, Expr};
use crate::interval::Interval;
use crate::taylor::{TaylorModel, TmCtx};

use super::{ReachSettings, StepFailure};

/// Whether a flow entry is literally zero (its variable is frozen in this
/// mode). Frozen variables skip integration entirely.
fn is_zero_flow(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

/// Symbolic time derivatives of every variable along a fixed flow field:
/// `table[i][j]` is the (i+1)-th time derivative of variable `j`, obtained by
/// repeatedly applying `d/dt = Σ_m f_m · ∂/∂x_m`.
pub(crate) struct LieTable {
    table: Vec<Vec<Expr>>,
}

impl LieTable {
    /// Builds derivatives up to the given Taylor order.
    pub(crate) fn new(names: &[String], flows: &[Expr], order: u32) -> LieTable {
        let mut table = Vec::with_capacity(order as usize);
        table.push(flows.to_vec());
        for _ in 1..order {
            let prev = table.last().expect("table starts non-empty");
            let next: Vec<Expr> =
                prev.iter().map(|e| lie_derivative(e, names, flows)).collect();
            table.push(next);
        }
        LieTable { table }
    }

    /// The i-th time derivative expression of variable `j` (i ≥ 1).
    fn deriv(&self, i: usize, j: usize) -> &Expr {
        &self.table[i - 1][j]
    }
}

/// `Σ_m ∂e/∂x_m · f_m`, skipping variables `e` does not mention.
fn lie_derivative(e: &Expr, names: &[String], flows: &[Expr]) -> Expr {
    let free = e.free_vars();
    let mut acc = Expr::Const(0.0);
    for (name, flow) in names.iter().zip(flows) {
        if is_zero_flow(flow) || !free.contains(name) {
            continue;
        }
        let d = differentiate(e, name);
        if matches!(d, Expr::Const(c) if c == 0.0) {
            continue;
        }
        acc = acc + d * flow.clone();
    }
    simplify(&acc)
}

/// Integrator for one mode's flow field over a shared Taylor-model chart.
pub(crate) struct OdeStepper<'a> {
    names: &'a [String],
    flows: &'a [Expr],
    lie: LieTable,
    ctx: TmCtx,
    /// Domain axis holding normalized step time.
    time_axis: usize,
}

impl<'a> OdeStepper<'a> {
    pub(crate) fn new(
        names: &'a [String],
        flows: &'a [Expr],
        ctx: TmCtx,
        time_axis: usize,
    ) -> OdeStepper<'a> {
        let lie = LieTable::new(names, flows, ctx.order);
        OdeStepper { names, flows, lie, ctx, time_axis }
    }

    /// The Picard operator on the step's normalized time axis:
    /// `Φ(X)_j = x0_j + h·∫₀ˢ f_j(X)` (the flow is scaled by the physical
    /// step width so one unit of `s` is one step).
    fn picard(
        &self,
        x0: &[TaylorModel],
        x: &[TaylorModel],
        h: f64,
    ) -> Result<Vec<TaylorModel>, StepFailure> {
        let mut out = Vec::with_capacity(x.len());
        for (j, flow) in self.flows.iter().enumerate() {
            if is_zero_flow(flow) {
                out.push(x0[j].clone());
                continue;
            }
            let env = (self.names, x);
            let f = flow.eval::<TaylorModel>(&env, &self.ctx)?;
            out.push(x0[j].add(&f.scale(h).integrate_time(self.time_axis)));
        }
        Ok(out)
    }

    /// One validated step of physical width `h`. `state` must be free of the
    /// time axis (time substituted out by the previous step). Returns the
    /// step's flowpipe: models over (chart × normalized time) enclosing every
    /// trajectory for `s ∈ [0, 1]`; the enclosure is in fact validated on the
    /// whole normalized axis, which is sound and keeps the chart fixed.
    ///
    /// Flows are pre-scaled by `h` before use, so "one unit of normalized
    /// time" is exactly one step.
    pub(crate) fn step(
        &self,
        state: &[TaylorModel],
        h: f64,
        settings: &ReachSettings,
    ) -> Result<Vec<TaylorModel>, StepFailure> {
        let order = self.ctx.order;
        let time = TaylorModel::var(self.time_axis, self.ctx.n_vars, order);

        // Taylor candidate: x0 + Σ_i Lⁱ(x0)·hⁱ/i!·sⁱ. All rounding and
        // truncation slack lands in the models' remainders.
        let mut candidate = state.to_vec();
        let env = (self.names, state);
        let mut s_pow = TaylorModel::constant(1.0, self.ctx.n_vars, order);
        let mut h_over_fact = 1.0f64;
        for i in 1..=order as usize {
            s_pow = s_pow.mul(&time);
            h_over_fact *= h / i as f64;
            for (j, flow) in self.flows.iter().enumerate() {
                if is_zero_flow(flow) {
                    continue;
                }
                let c = self.lie.deriv(i, j).eval::<TaylorModel>(&env, &self.ctx)?;
                candidate[j] = candidate[j].add(&c.scale(h_over_fact).mul(&s_pow));
            }
        }

        // Split into pure polynomial + per-variable remainder seed.
        let poly: Vec<TaylorModel> = candidate
            .iter()
            .map(|tm| tm.clone().with_remainder(Interval::ZERO))
            .collect();
        let mut rem: Vec<Interval> = candidate.iter().map(TaylorModel::remainder).collect();

        // Inflate-and-check: grow the remainders until Φ maps the candidate
        // into its own interior, then re-apply Φ a few times to tighten.
        let with_rem = |r: &[Interval]| -> Vec<TaylorModel> {
            poly.iter()
                .zip(r)
                .map(|(p, ri)| p.clone().with_remainder(*ri))
                .collect()
        };
        let defect = |z: &[TaylorModel]| -> Vec<Interval> {
            z.iter().zip(&poly).map(|(zj, pj)| zj.sub(pj).bound()).collect()
        };

        let runaway = |r: &[Interval]| -> Option<StepFailure> {
            let (j, width) = r
                .iter()
                .enumerate()
                .map(|(j, r)| (j, r.width()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one variable");
            (width > REMAINDER_RUNAWAY).then(|| StepFailure::RemainderBlowup {
                var: self.names[j].clone(),
                iters: settings.picard_max_iter,
                width,
            })
        };

        // First defect from the seed remainder alone.
        let z = self.picard(state, &with_rem(&rem), h)?;
        let mut d = defect(&z);
        for (r, dj) in rem.iter_mut().zip(&d) {
            *r = inflate(r.hull(dj), settings.remainder_inflation);
        }

        let mut contracted = false;
        for _ in 0..settings.picard_max_iter {
            // Diverging candidates square with every Φ application on
            // nonlinear flows; bail out before f64 overflow.
            if let Some(err) = runaway(&rem) {
                return Err(err);
            }
            let z = self.picard(state, &with_rem(&rem), h)?;
            d = defect(&z);
            if d.iter().zip(&rem).all(|(dj, rj)| rj.contains_in_interior(dj)) {
                contracted = true;
                break;
            }
            for (r, dj) in rem.iter_mut().zip(&d) {
                *r = inflate(r.hull(dj), settings.remainder_inflation);
            }
        }
        if !contracted {
            let (j, width) = rem
                .iter()
                .enumerate()
                .map(|(j, r)| (j, r.width()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one variable");
            return Err(StepFailure::RemainderBlowup {
                var: self.names[j].clone(),
                iters: settings.picard_max_iter,
                width,
            });
        }

        // Refinement: each extra Φ application may only shrink a valid
        // remainder; stop as soon as it does not.
        rem = d;
        for _ in 0..2 {
            let z = self.picard(state, &with_rem(&rem), h)?;
            let d = defect(&z);
            if d.iter().zip(&rem).all(|(dj, rj)| rj.contains_interval(dj)) {
                rem = d;
            } else {
                break;
            }
        }

        Ok(with_rem(&rem))
    }
}

/// Remainder width beyond which Picard iteration is declared divergent
/// (far past any usable enclosure, well short of f64 overflow under
/// polynomial flows).
const REMAINDER_RUNAWAY: f64 = 1e20;

/// Inflates an interval about its midpoint, with an absolute floor so
/// zero-width seeds can grow.
fn inflate(r: Interval, factor: f64) -> Interval {
    let mid = r.midpoint();
    let rad = (r.width() / 2.0) * factor + 1e-300 + f64::EPSILON * mid.abs();
    Interval::new(mid - rad, mid + rad).expect("inflation preserves ordering")
}

/// Magnitude of the mode's frozen drivers: the largest bound of any variable
/// that appears in a flow but is itself frozen (zero flow). For activation
/// modes this is the largest pre-activation magnitude, which is exactly what
/// limits the usable Taylor step width.
pub(crate) fn driver_magnitude(names: &[String], flows: &[Expr], state: &[TaylorModel]) -> f64 {
    let mut mag = 0.0f64;
    for flow in flows {
        if is_zero_flow(flow) {
            continue;
        }
        for name in flow.free_vars() {
            let Some(idx) = names.iter().position(|n| *n == name) else { continue };
            if is_zero_flow(&flows[idx]) {
                mag = mag.max(state[idx].bound().abs_max());
            }
        }
    }
    mag
}

/// Number of steps used to cover `span` time units: at least `span/ode_step`,
/// scaled up by the driver magnitude so that `|driver|·h` stays at or below
/// `ode_step` per step.
pub(crate) fn step_count(span: f64, driver: f64, ode_step: f64) -> usize {
    let scaled = span.max(driver * span);
    ((scaled / ode_step).ceil() as usize).max(1)
}

/// Integrates a mode for `span` time units in `n` validated steps, advancing
/// `state` in place and returning each step's flowpipe. Step boundaries are
/// `span·i/n`; consecutive boundaries subtract exactly (they lie within a
/// factor of two of each other), so the step widths telescope to `span` with
/// no accumulated drift.
pub(crate) fn integrate_mode(
    names: &[String],
    flows: &[Expr],
    state: &mut Vec<TaylorModel>,
    span: f64,
    n: usize,
    ctx: TmCtx,
    time_axis: usize,
    settings: &ReachSettings,
) -> Result<Vec<Vec<TaylorModel>>, StepFailure> {
    if flows.iter().all(is_zero_flow) {
        return Ok(vec![state.clone()]);
    }
    let stepper = OdeStepper::new(names, flows, ctx, time_axis);
    let boundary = |i: usize| span * (i as f64 / n as f64);
    let mut pipes = Vec::with_capacity(n);
    for i in 0..n {
        let h = boundary(i + 1) - boundary(i);
        debug_assert!(h > 0.0, "step widths must be positive");
        let pipe = stepper.step(state, h, settings)?;
        *state = pipe.iter().map(|tm| tm.substitute_var(time_axis, 1.0)).collect();
        pipes.push(pipe);
    }
    Ok(pipes)
}
