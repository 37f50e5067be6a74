//! Model predictive shielding with interval forward-reachable sets.
//!
//! The monitor rolls the fallback policy forward from `f(x, u, 𝒟)` for a fixed
//! horizon, over-approximating the reachable set at each step by a box. A
//! control passes when no box can touch the failure set and the last box lies
//! inside a terminal set that the fallback keeps invariant.

use std::io::Write;
use std::sync::Arc;

use crate::dynamics::{ModelKind, SystemModel};
use crate::error::{Error, Result};
use crate::filter::{Intervention, SafetyFilter};
use crate::hj::ValueGrid;
use crate::interval::{Interval, IntervalBox};
use crate::margin::MarginFunction;
use crate::policy::Policy;

/// Boxes `sets[τ]` enclosing the states reachable after `τ` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct FrsTube {
    pub sets: Vec<IntervalBox>,
}

impl FrsTube {
    pub fn horizon(&self) -> usize {
        self.sets.len() - 1
    }

    /// CSV with columns `tau, lower_0, upper_0, lower_1, upper_1, ...`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let dim = self.sets.first().map_or(0, IntervalBox::dim);
        let mut header = vec!["tau".to_owned()];
        for i in 0..dim {
            header.push(format!("lower_{i}"));
            header.push(format!("upper_{i}"));
        }
        out.write_record(&header)?;
        for (tau, b) in self.sets.iter().enumerate() {
            let mut row = vec![tau.to_string()];
            for i in 0..dim {
                row.push(b.lower()[i].to_string());
                row.push(b.upper()[i].to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum TerminalSafeSet {
    Box(IntervalBox),
    /// `{ x : V(x) ≥ 0 }` of a solved value grid.
    Value(Arc<ValueGrid>),
}

impl TerminalSafeSet {
    pub fn membership(&self, x: &[f64]) -> bool {
        match self {
            Self::Box(b) => b.contains(x),
            Self::Value(v) => v.safe_membership(x),
        }
    }

    /// True only if every point of `b` is in the set.
    pub fn box_containment(&self, b: &IntervalBox) -> bool {
        match self {
            Self::Box(omega) => omega.contains_box(b),
            Self::Value(v) => v.min_over_box(b) >= 0.0,
        }
    }
}

/// Decelerate the double integrator toward a creep velocity,
/// `u = clamp((v_creep − v) / Δt, −u_max, u_max)`.
///
/// With a creep velocity pointing away from the obstacle, the set of states
/// already at creep speed is invariant under bounded disturbances, whereas
/// holding still lets the disturbance walk the position toward the obstacle.
#[derive(Clone, Debug)]
pub struct BrakingPolicy {
    pub u_max: f64,
    pub dt: f64,
    pub creep: f64,
}

/// Relative pad on the exact closed-loop velocity enclosure.
const BRAKING_PAD: f64 = 1e-12;

impl BrakingPolicy {
    pub fn for_double_integrator(model: &SystemModel, creep: f64) -> Result<Self> {
        if model.kind() != ModelKind::DoubleIntegrator {
            return Err(Error::InvalidArgument(format!(
                "braking policy needs a double integrator, got `{}`",
                model.name()
            )));
        }
        Ok(Self {
            u_max: model.control_set().upper()[0],
            dt: model.dt(),
            creep,
        })
    }

    fn accel(&self, v: f64) -> f64 {
        ((self.creep - v) / self.dt).clamp(-self.u_max, self.u_max)
    }
}

impl Policy for BrakingPolicy {
    fn control(&self, x: &[f64]) -> Vec<f64> {
        vec![self.accel(x[1])]
    }

    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(vec![0.0, 1.0 / self.dt])
    }

    fn control_enclosure(&self, _model: &SystemModel, states: &IntervalBox) -> IntervalBox {
        if states.is_empty() {
            return IntervalBox::empty(1);
        }
        let v = states.interval(1);
        IntervalBox::from_intervals(&[Interval::new(self.accel(v.hi), self.accel(v.lo))])
    }

    /// `v + u(v) Δt` is nondecreasing in `v`, so the velocity image is spanned by
    /// the endpoint images; this avoids the doubling that a center-plus-slope
    /// enclosure would give.
    fn closed_loop_step(&self, model: &SystemModel, states: &IntervalBox, disturbances: &IntervalBox) -> IntervalBox {
        let generic = model.interval_step(states, &self.control_enclosure(model, states), disturbances);
        if generic.is_empty() || model.kind() != ModelKind::DoubleIntegrator {
            return generic;
        }
        let v = states.interval(1);
        let d = if disturbances.dim() == 0 {
            Interval::point(0.0)
        } else {
            disturbances.interval(0)
        };
        let lo = v.lo + (self.accel(v.lo) + d.lo) * self.dt;
        let hi = v.hi + (self.accel(v.hi) + d.hi) * self.dt;
        let pad = |x: f64| BRAKING_PAD * (1.0 + x.abs());
        let tight = Interval::new(lo - pad(lo), hi + pad(hi));
        let vel = tight.intersect(&generic.interval(1)).unwrap_or(generic.interval(1));
        IntervalBox::from_intervals(&[generic.interval(0), vel])
    }
}

/// Box terminal set for the double integrator: positions in `safe_box`,
/// velocities within `v_tol` of the policy's creep velocity.
///
/// Invariance under the braking policy is proven at construction by a
/// one-step interval image of the whole set, which is sound over the
/// continuum of states and disturbances.
pub fn braking_terminal_set(
    model: &SystemModel,
    braking: &BrakingPolicy,
    v_tol: f64,
    safe_box: &IntervalBox,
) -> Result<TerminalSafeSet> {
    if model.kind() != ModelKind::DoubleIntegrator {
        return Err(Error::Rejected("braking terminal set needs a double integrator".into()));
    }
    if !(v_tol >= 0.0) {
        return Err(Error::Rejected(format!("v_tol must be nonnegative, got {v_tol}")));
    }
    let band = IntervalBox::new(
        vec![f64::NEG_INFINITY, braking.creep - v_tol],
        vec![f64::INFINITY, braking.creep + v_tol],
    )?;
    let omega = safe_box.intersect(&band);
    if omega.is_empty() {
        return Err(Error::Rejected("terminal set is empty".into()));
    }
    let image = braking.closed_loop_step(model, &omega, model.disturbance_set());
    if !omega.contains_box(&image) {
        return Err(Error::Rejected(format!(
            "terminal set {omega} is not invariant under braking: one-step image {image}"
        )));
    }
    Ok(TerminalSafeSet::Box(omega))
}

/// Interval tube of the fallback after applying `u0` once.
pub fn propagate_frs(model: &SystemModel, fallback: &dyn Policy, x: &[f64], u0: &[f64], horizon: usize) -> Result<FrsTube> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("tube horizon must be at least 1".into()));
    }
    let mut sets = Vec::with_capacity(horizon + 1);
    sets.push(IntervalBox::point(x));
    sets.push(model.interval_step(&sets[0], &IntervalBox::point(u0), model.disturbance_set()));
    for tau in 1..horizon {
        let next = fallback.closed_loop_step(model, &sets[tau], model.disturbance_set());
        sets.push(next);
    }
    Ok(FrsTube { sets })
}

/// The tube, if it certifies `(x, u)`; stops at the first box touching the failure set.
fn certify(
    model: &SystemModel,
    fallback: &dyn Policy,
    terminal: &TerminalSafeSet,
    margin: &MarginFunction,
    x: &[f64],
    u: &[f64],
    horizon: usize,
) -> Option<FrsTube> {
    let start = IntervalBox::point(x);
    if !margin.box_avoids_failure(&start) {
        return None;
    }
    let mut sets = vec![start];
    let first = model.interval_step(&sets[0], &IntervalBox::point(u), model.disturbance_set());
    sets.push(first);
    loop {
        let last = sets.last().expect("nonempty tube");
        if !margin.box_avoids_failure(last) {
            return None;
        }
        if sets.len() == horizon + 1 {
            break;
        }
        let next = fallback.closed_loop_step(model, last, model.disturbance_set());
        sets.push(next);
    }
    terminal.box_containment(&sets[horizon]).then_some(FrsTube { sets })
}

/// `+½` if the tube avoids the failure set and ends inside the terminal set, `−½` otherwise.
pub fn mps_monitor(
    model: &SystemModel,
    fallback: &dyn Policy,
    terminal: &TerminalSafeSet,
    margin: &MarginFunction,
    x: &[f64],
    u: &[f64],
    horizon: usize,
) -> f64 {
    if horizon == 0 {
        return -0.5;
    }
    if certify(model, fallback, terminal, margin, x, u, horizon).is_some() {
        0.5
    } else {
        -0.5
    }
}

/// Switch filter: pass certified controls, otherwise apply the fallback.
#[derive(Clone, Debug)]
pub struct MpsFilter {
    model: SystemModel,
    fallback: Arc<dyn Policy>,
    terminal: TerminalSafeSet,
    margin: MarginFunction,
    horizon: usize,
    last_certified: Option<FrsTube>,
}

pub fn mps_filter(
    model: &SystemModel,
    fallback: Arc<dyn Policy>,
    terminal: TerminalSafeSet,
    margin: MarginFunction,
    horizon: usize,
) -> Result<MpsFilter> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("MPS horizon must be at least 1".into()));
    }
    if let TerminalSafeSet::Box(b) = &terminal {
        if b.dim() != model.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "terminal box",
                expected: model.state_dim(),
                actual: b.dim(),
            });
        }
        if !margin.box_avoids_failure(b) {
            return Err(Error::Rejected(format!("terminal set {b} intersects the failure set")));
        }
    }
    Ok(MpsFilter {
        model: model.clone(),
        fallback,
        terminal,
        margin,
        horizon,
        last_certified: None,
    })
}

impl MpsFilter {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn terminal(&self) -> &TerminalSafeSet {
        &self.terminal
    }

    pub fn fallback_policy(&self) -> &Arc<dyn Policy> {
        &self.fallback
    }

    /// Tube of the most recently accepted control.
    pub fn last_certified(&self) -> Option<&FrsTube> {
        self.last_certified.as_ref()
    }
}

impl SafetyFilter for MpsFilter {
    fn name(&self) -> &str {
        "mps"
    }

    fn monitor(&self, x: &[f64], u: &[f64]) -> f64 {
        mps_monitor(&self.model, self.fallback.as_ref(), &self.terminal, &self.margin, x, u, self.horizon)
    }

    fn fallback(&self, x: &[f64]) -> Vec<f64> {
        self.fallback.control(x)
    }

    fn intervene(&mut self, x: &[f64], u: &[f64]) -> Intervention {
        match certify(&self.model, self.fallback.as_ref(), &self.terminal, &self.margin, x, u, self.horizon) {
            Some(tube) => {
                self.last_certified = Some(tube);
                Intervention::pass(u)
            }
            None => Intervention {
                control: self.fallback.control(x),
                degraded: false,
            },
        }
    }

    fn reset(&mut self) {
        self.last_certified = None;
    }

    fn clone_box(&self) -> Box<dyn SafetyFilter> {
        Box::new(self.clone())
    }
}

/// Outcome of a randomized containment check.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ContainmentReport {
    pub samples: usize,
    pub failures: usize,
    /// Sample index and stage of the first escape.
    pub first_failure: Option<(usize, usize)>,
}

/// Draws start states from `region`, first controls from the control box
/// and disturbances from the disturbance box, all uniformly, simulates the
/// fallback, and checks that every visited state lies in its tube box.
pub fn sample_frs_containment(
    model: &SystemModel,
    fallback: &dyn Policy,
    region: &IntervalBox,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<ContainmentReport> {
    let mut rng = crate::harness::stream_rng(seed, 4);
    let mut report = ContainmentReport {
        samples,
        failures: 0,
        first_failure: None,
    };
    for i in 0..samples {
        let x0 = crate::harness::uniform_in(&mut rng, region);
        let u0 = crate::harness::uniform_in(&mut rng, model.control_set());
        let tube = propagate_frs(model, fallback, &x0, &u0, horizon)?;
        let mut x = x0;
        let mut escaped = None;
        for tau in 1..=horizon {
            let u = if tau == 1 { u0.clone() } else { fallback.control(&x) };
            let d = crate::harness::uniform_in(&mut rng, model.disturbance_set());
            x = model.step(&x, &u, &d)?;
            if !tube.sets[tau].contains(&x) {
                escaped = Some(tau);
                break;
            }
        }
        if let Some(tau) = escaped {
            report.failures += 1;
            report.first_failure.get_or_insert((i, tau));
        }
    }
    Ok(report)
}
