//! The monitor / fallback / intervention abstraction shared by every filter,
//! the value-based least-restrictive filter, and brute-force soundness checks.
//!
//! A monitor value `≥ 0` for `(x, u)` certifies that after applying `u` the
//! fallback keeps the system out of the failure set for all admissible
//! disturbances. The threshold is exactly zero; conservatism lives in the
//! approximations (grids, interval sets), never in a slack on the sign test.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::SystemModel;
use crate::error::{check_dim, Error, Result};
use crate::hj::{best_control, worst_case_value, OptimalSafetyPolicy, ValueGrid};
use crate::margin::MarginFunction;
use crate::policy::{Policy, TaskPolicy};

/// Control produced by an intervention. `degraded` marks a fallback taken
/// because the filter's own problem had no solution (e.g. an infeasible QP).
#[derive(Clone, Debug, PartialEq)]
pub struct Intervention {
    pub control: Vec<f64>,
    pub degraded: bool,
}

impl Intervention {
    pub fn pass(u: &[f64]) -> Self {
        Self {
            control: u.to_vec(),
            degraded: false,
        }
    }
}

pub trait SafetyFilter: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn monitor(&self, x: &[f64], u: &[f64]) -> f64;

    fn fallback(&self, x: &[f64]) -> Vec<f64>;

    /// Maps a candidate control to the applied one. Filters that carry a plan
    /// cache update it here; everything else is pure.
    fn intervene(&mut self, x: &[f64], u: &[f64]) -> Intervention;

    /// Incorporate a new observation before the next decision.
    fn observe(&mut self, _x: &[f64]) {}

    /// Forget episode-local state.
    fn reset(&mut self) {}

    fn clone_box(&self) -> Box<dyn SafetyFilter>;

    /// The deployment test: a state is certified when the fallback itself passes.
    fn certifies(&self, x: &[f64]) -> bool {
        self.monitor(x, &self.fallback(x)) >= 0.0
    }
}

impl Clone for Box<dyn SafetyFilter> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterDecision {
    pub candidate: Vec<f64>,
    pub applied: Vec<f64>,
    /// Monitor value of the candidate, taken before intervention.
    pub monitor_value: f64,
    pub overridden: bool,
    pub degraded: bool,
}

pub fn decide(filter: &mut dyn SafetyFilter, x: &[f64], candidate: &[f64]) -> FilterDecision {
    let monitor_value = filter.monitor(x, candidate);
    let Intervention { control, degraded } = filter.intervene(x, candidate);
    FilterDecision {
        overridden: control.as_slice() != candidate,
        candidate: candidate.to_vec(),
        applied: control,
        monitor_value,
        degraded,
    }
}

/// Observe, ask the task policy, filter, and advance the model one step.
pub fn filtered_step(
    model: &SystemModel,
    filter: &mut dyn SafetyFilter,
    task: &mut dyn TaskPolicy,
    t: usize,
    x: &[f64],
    d: &[f64],
) -> Result<(Vec<f64>, FilterDecision)> {
    filter.observe(x);
    let candidate = task.control(t, x);
    let decision = decide(filter, x, &candidate);
    let next = model.step(x, &decision.applied, d)?;
    Ok((next, decision))
}

/// Passes everything. The baseline for unfiltered runs.
#[derive(Clone, Debug, Default)]
pub struct NullFilter;

impl SafetyFilter for NullFilter {
    fn name(&self) -> &str {
        "none"
    }

    fn monitor(&self, _x: &[f64], _u: &[f64]) -> f64 {
        0.5
    }

    fn fallback(&self, x: &[f64]) -> Vec<f64> {
        // Never applied; any admissible value works.
        let _ = x;
        Vec::new()
    }

    fn intervene(&mut self, _x: &[f64], u: &[f64]) -> Intervention {
        Intervention::pass(u)
    }

    fn clone_box(&self) -> Box<dyn SafetyFilter> {
        Box::new(self.clone())
    }
}

/// Switch filter on a solved value grid: pass `u` if the worst-case successor
/// value is nonnegative, otherwise apply the optimal safety policy.
#[derive(Clone, Debug)]
pub struct LeastRestrictiveFilter {
    policy: OptimalSafetyPolicy,
}

pub fn least_restrictive_filter(
    model: &SystemModel,
    grid: Arc<ValueGrid>,
    u_candidates: Vec<Vec<f64>>,
    d_candidates: Vec<Vec<f64>>,
) -> Result<LeastRestrictiveFilter> {
    check_dim("value grid", model.state_dim(), grid.dim())?;
    Ok(LeastRestrictiveFilter {
        policy: OptimalSafetyPolicy::new(model.clone(), grid, u_candidates, d_candidates)?,
    })
}

impl LeastRestrictiveFilter {
    pub fn grid(&self) -> &Arc<ValueGrid> {
        self.policy.grid()
    }

    pub fn policy(&self) -> &OptimalSafetyPolicy {
        &self.policy
    }
}

impl SafetyFilter for LeastRestrictiveFilter {
    fn name(&self) -> &str {
        "least_restrictive"
    }

    fn monitor(&self, x: &[f64], u: &[f64]) -> f64 {
        worst_case_value(self.policy.model(), self.policy.grid(), x, u, self.policy.d_candidates())
    }

    fn fallback(&self, x: &[f64]) -> Vec<f64> {
        self.policy.control(x)
    }

    fn intervene(&mut self, x: &[f64], u: &[f64]) -> Intervention {
        if self.monitor(x, u) >= 0.0 {
            Intervention::pass(u)
        } else {
            Intervention {
                control: self.fallback(x),
                degraded: false,
            }
        }
    }

    fn certifies(&self, x: &[f64]) -> bool {
        let p = &self.policy;
        let mut next = vec![0.0; x.len()];
        best_control(p.model(), p.grid(), x, p.u_candidates(), p.d_candidates(), &mut next).1 >= 0.0
    }

    fn clone_box(&self) -> Box<dyn SafetyFilter> {
        Box::new(self.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub initial_state: Vec<f64>,
    pub disturbances: Vec<Vec<f64>>,
    /// States visited, starting with the initial state and ending in the failure set.
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoundnessReport {
    pub checked_states: usize,
    pub certified_states: usize,
    pub rollouts: u128,
    pub counterexample: Option<Counterexample>,
}

impl SoundnessReport {
    pub fn is_sound(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Exhaustive game-tree check of the monitor's certificate.
///
/// For every initial state the filter certifies, rolls out the fallback
/// under every sequence of `horizon` disturbance candidates and reports the
/// first sequence that reaches the failure set. Errors if the number of
/// sequences would exceed `budget`.
pub fn verify_monitor_soundness(
    model: &SystemModel,
    filter: &dyn SafetyFilter,
    margin: &MarginFunction,
    initial_states: &[Vec<f64>],
    horizon: usize,
    d_candidates: &[Vec<f64>],
    budget: u128,
) -> Result<SoundnessReport> {
    if d_candidates.is_empty() {
        return Err(Error::InvalidArgument("disturbance candidate list is empty".into()));
    }
    let certified: Vec<&Vec<f64>> = initial_states.iter().filter(|x| filter.certifies(x)).collect();
    let per_state = (d_candidates.len() as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    let needed = per_state.saturating_mul(certified.len() as u128);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut report = SoundnessReport {
        checked_states: initial_states.len(),
        certified_states: certified.len(),
        rollouts: 0,
        counterexample: None,
    };
    if horizon == 0 {
        return Ok(report);
    }
    for x0 in certified {
        let mut states = vec![x0.clone()];
        let mut ds = Vec::new();
        if let Some(cx) = explore(model, filter, margin, horizon, d_candidates, &mut states, &mut ds, &mut report.rollouts) {
            report.counterexample = Some(cx);
            break;
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn explore(
    model: &SystemModel,
    filter: &dyn SafetyFilter,
    margin: &MarginFunction,
    horizon: usize,
    d_candidates: &[Vec<f64>],
    states: &mut Vec<Vec<f64>>,
    ds: &mut Vec<Vec<f64>>,
    rollouts: &mut u128,
) -> Option<Counterexample> {
    let x = states.last().expect("nonempty path").clone();
    if margin.in_failure_set(&x) {
        return Some(Counterexample {
            initial_state: states[0].clone(),
            disturbances: ds.clone(),
            states: states.clone(),
        });
    }
    if ds.len() == horizon {
        *rollouts += 1;
        return None;
    }
    let u = filter.fallback(&x);
    let mut next = vec![0.0; x.len()];
    for d in d_candidates {
        model.step_into(&x, &u, d, &mut next);
        states.push(next.clone());
        ds.push(d.clone());
        let found = explore(model, filter, margin, horizon, d_candidates, states, ds, rollouts);
        states.pop();
        ds.pop();
        if found.is_some() {
            return found;
        }
    }
    None
}

/// A violation of the intervention contract: the fallback passed at `state`
/// but the intervened control for `candidate` did not.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractViolation {
    pub state: Vec<f64>,
    pub candidate: Vec<f64>,
    pub applied: Vec<f64>,
    pub monitor_value: f64,
}

/// Checks, over a lattice of candidate controls, that whenever the fallback
/// passes the monitor at a state, so does every intervened control.
pub fn check_intervention_contract(
    filter: &dyn SafetyFilter,
    states: &[Vec<f64>],
    candidates: &[Vec<f64>],
) -> Vec<ContractViolation> {
    let mut out = Vec::new();
    for x in states {
        if !filter.certifies(x) {
            continue;
        }
        for u in candidates {
            let mut f = filter.clone_box();
            let applied = f.intervene(x, u).control;
            let value = filter.monitor(x, &applied);
            if !(value >= 0.0) {
                out.push(ContractViolation {
                    state: x.clone(),
                    candidate: u.clone(),
                    applied,
                    monitor_value: value,
                });
            }
        }
    }
    out
}
