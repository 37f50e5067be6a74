//! Closed-loop episodes, task and disturbance policies, metrics, and the
//! experiments built on them (separation, Monte Carlo, filter comparison).
//!
//! Episodes are deterministic given their seed: the task policy and the
//! disturbance policy each draw from their own ChaCha stream derived from it.
//! Batches run in parallel and are returned sorted by seed.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::dynamics::{discretize_box, SystemModel};
use crate::error::{check_dim, Error, Result};
use crate::filter::{decide, FilterDecision, NullFilter, SafetyFilter};
use crate::hj::ValueGrid;
use crate::interval::IntervalBox;
use crate::margin::MarginFunction;
use crate::policy::{FeedbackTask, SaturatedLinearPolicy, TaskPolicy};

const TASK_STREAM: u64 = 1;
const DISTURBANCE_STREAM: u64 = 2;
const START_STREAM: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn uniform_in(rng: &mut ChaCha8Rng, b: &IntervalBox) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            let (lo, hi) = (b.lower()[i], b.upper()[i]);
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        })
        .collect()
}

/// Chooses the disturbance after the filter has chosen the control.
pub trait DisturbancePolicy: Send + fmt::Debug {
    fn disturbance(&mut self, t: usize, x: &[f64], u: &[f64]) -> Vec<f64>;

    fn reset(&mut self, _seed: u64) {}
}

#[derive(Clone, Debug)]
pub struct ZeroDisturbance {
    dim: usize,
}

impl ZeroDisturbance {
    pub fn new(model: &SystemModel) -> Self {
        Self {
            dim: model.disturbance_dim(),
        }
    }
}

impl DisturbancePolicy for ZeroDisturbance {
    fn disturbance(&mut self, _t: usize, _x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// Uniform over the disturbance box.
#[derive(Clone, Debug)]
pub struct UniformDisturbance {
    set: IntervalBox,
    rng: ChaCha8Rng,
}

impl UniformDisturbance {
    pub fn new(model: &SystemModel) -> Self {
        Self {
            set: model.disturbance_set().clone(),
            rng: stream_rng(0, DISTURBANCE_STREAM),
        }
    }
}

impl DisturbancePolicy for UniformDisturbance {
    fn disturbance(&mut self, _t: usize, _x: &[f64], _u: &[f64]) -> Vec<f64> {
        uniform_in(&mut self.rng, &self.set)
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream_rng(seed, DISTURBANCE_STREAM);
    }
}

/// Uniform over a finite lattice of disturbances.
#[derive(Clone, Debug)]
pub struct RandomLatticeDisturbance {
    candidates: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl RandomLatticeDisturbance {
    pub fn new(candidates: Vec<Vec<f64>>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("disturbance lattice is empty".into()));
        }
        Ok(Self {
            candidates,
            rng: stream_rng(0, DISTURBANCE_STREAM),
        })
    }
}

impl DisturbancePolicy for RandomLatticeDisturbance {
    fn disturbance(&mut self, _t: usize, _x: &[f64], _u: &[f64]) -> Vec<f64> {
        let i = self.rng.random_range(0..self.candidates.len());
        self.candidates[i].clone()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream_rng(seed, DISTURBANCE_STREAM);
    }
}

/// Picks the lattice disturbance whose successor has the lowest score; the
/// first candidate wins ties.
fn argmin_successor(model: &SystemModel, candidates: &[Vec<f64>], x: &[f64], u: &[f64], score: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut next = vec![0.0; model.state_dim()];
    let mut best = (0, f64::INFINITY);
    for (i, d) in candidates.iter().enumerate() {
        model.step_into(x, u, d, &mut next);
        let s = score(&next);
        if i == 0 || s < best.1 {
            best = (i, s);
        }
    }
    candidates[best.0].clone()
}

/// Antagonist that minimizes the value of the next state.
#[derive(Clone, Debug)]
pub struct AdversarialDisturbance {
    model: SystemModel,
    grid: Arc<ValueGrid>,
    candidates: Vec<Vec<f64>>,
}

pub fn adversarial_disturbance(model: &SystemModel, grid: Arc<ValueGrid>, d_candidates: Vec<Vec<f64>>) -> Result<AdversarialDisturbance> {
    check_dim("value grid", model.state_dim(), grid.dim())?;
    if d_candidates.is_empty() {
        return Err(Error::InvalidArgument("disturbance lattice is empty".into()));
    }
    Ok(AdversarialDisturbance {
        model: model.clone(),
        grid,
        candidates: d_candidates,
    })
}

impl DisturbancePolicy for AdversarialDisturbance {
    fn disturbance(&mut self, _t: usize, x: &[f64], u: &[f64]) -> Vec<f64> {
        argmin_successor(&self.model, &self.candidates, x, u, |y| self.grid.value_at(y))
    }
}

/// Antagonist that minimizes the margin of the next state. Used where no
/// value grid exists.
#[derive(Clone, Debug)]
pub struct MarginGreedyDisturbance {
    model: SystemModel,
    margin: MarginFunction,
    candidates: Vec<Vec<f64>>,
}

impl MarginGreedyDisturbance {
    pub fn new(model: &SystemModel, margin: MarginFunction, d_candidates: Vec<Vec<f64>>) -> Result<Self> {
        if d_candidates.is_empty() {
            return Err(Error::InvalidArgument("disturbance lattice is empty".into()));
        }
        Ok(Self {
            model: model.clone(),
            margin,
            candidates: d_candidates,
        })
    }
}

impl DisturbancePolicy for MarginGreedyDisturbance {
    fn disturbance(&mut self, _t: usize, x: &[f64], u: &[f64]) -> Vec<f64> {
        argmin_successor(&self.model, &self.candidates, x, u, |y| self.margin.eval(y))
    }
}

/// Uniformly random controls from the control box.
#[derive(Clone, Debug)]
pub struct RandomTask {
    set: IntervalBox,
    rng: ChaCha8Rng,
}

impl RandomTask {
    pub fn new(model: &SystemModel) -> Self {
        Self {
            set: model.control_set().clone(),
            rng: stream_rng(0, TASK_STREAM),
        }
    }
}

impl TaskPolicy for RandomTask {
    fn control(&mut self, _t: usize, _x: &[f64]) -> Vec<f64> {
        uniform_in(&mut self.rng, &self.set)
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream_rng(seed, TASK_STREAM);
    }
}

/// Steers toward the failure set: among lattice controls, the one that
/// minimizes the margin after holding it for `lookahead` undisturbed steps.
#[derive(Clone, Debug)]
pub struct AdversarialTask {
    model: SystemModel,
    margin: MarginFunction,
    candidates: Vec<Vec<f64>>,
    lookahead: usize,
}

impl AdversarialTask {
    pub fn new(model: &SystemModel, margin: MarginFunction, u_counts: &[usize], lookahead: usize) -> Result<Self> {
        if lookahead == 0 {
            return Err(Error::InvalidArgument("lookahead must be at least 1".into()));
        }
        Ok(Self {
            model: model.clone(),
            margin,
            candidates: discretize_box(model.control_set(), u_counts)?,
            lookahead,
        })
    }
}

impl TaskPolicy for AdversarialTask {
    fn control(&mut self, _t: usize, x: &[f64]) -> Vec<f64> {
        let d = self.model.zero_disturbance();
        let mut best = (0, f64::INFINITY);
        let mut y = x.to_vec();
        let mut next = vec![0.0; x.len()];
        for (i, u) in self.candidates.iter().enumerate() {
            y.copy_from_slice(x);
            for _ in 0..self.lookahead {
                self.model.step_into(&y, u, &d, &mut next);
                std::mem::swap(&mut y, &mut next);
            }
            let g = self.margin.eval(&y);
            if i == 0 || g < best.1 {
                best = (i, g);
            }
        }
        self.candidates[best.0].clone()
    }
}

/// Saturated linear feedback toward `goal`.
pub fn goal_seeking_task(model: &SystemModel, gain: Vec<f64>, goal: Vec<f64>) -> Result<FeedbackTask<SaturatedLinearPolicy>> {
    check_dim("gain entries", model.control_dim() * model.state_dim(), gain.len())?;
    check_dim("goal", model.state_dim(), goal.len())?;
    Ok(FeedbackTask(SaturatedLinearPolicy {
        gain,
        x_ref: goal,
        u_ref: vec![0.0; model.control_dim()],
        bounds: model.control_set().clone(),
    }))
}

/// Everything about an episode except the policies and the seed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub model: SystemModel,
    pub margin: MarginFunction,
    pub x0: Vec<f64>,
    pub steps: usize,
    /// Target of the quadratic task cost.
    pub goal: Vec<f64>,
    /// Control weight `ρ` in the task cost.
    pub control_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// A step was rejected by the model (e.g. a control outside its box).
    StepError,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    /// `steps + 1` states.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub decisions: Vec<FilterDecision>,
    pub termination: Termination,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub steps: usize,
    /// Number of visited states (including the start) with negative margin.
    pub violations: usize,
    pub intervention_count: usize,
    pub intervention_rate: f64,
    pub degraded_count: usize,
    pub mean_monitor: f64,
    pub min_monitor: f64,
    pub task_cost: f64,
    /// Number of times the override flag flipped between consecutive steps.
    pub chatter_count: usize,
}

fn metrics(scenario: &Scenario, traj: &Trajectory) -> EpisodeMetrics {
    let steps = traj.decisions.len();
    let violations = traj.states.iter().filter(|x| scenario.margin.in_failure_set(x)).count();
    let intervention_count = traj.decisions.iter().filter(|d| d.overridden).count();
    let degraded_count = traj.decisions.iter().filter(|d| d.degraded).count();
    let chatter_count = traj.decisions.windows(2).filter(|w| w[0].overridden != w[1].overridden).count();
    let task_cost = traj
        .states
        .iter()
        .zip(&traj.controls)
        .map(|(x, u)| {
            let dx: f64 = x.iter().zip(&scenario.goal).map(|(a, b)| (a - b) * (a - b)).sum();
            let du: f64 = u.iter().map(|v| v * v).sum();
            dx + scenario.control_weight * du
        })
        .sum();
    let (mean_monitor, min_monitor) = if steps == 0 {
        (0.0, 0.0)
    } else {
        let sum: f64 = traj.decisions.iter().map(|d| d.monitor_value).sum();
        let min = traj.decisions.iter().map(|d| d.monitor_value).fold(f64::INFINITY, f64::min);
        (sum / steps as f64, min)
    };
    EpisodeMetrics {
        steps,
        violations,
        intervention_count,
        intervention_rate: if steps == 0 { 0.0 } else { intervention_count as f64 / steps as f64 },
        degraded_count,
        mean_monitor,
        min_monitor,
        task_cost,
        chatter_count,
    }
}

/// Runs one episode. The filter must certify the start state, otherwise the
/// episode is rejected before any step is taken.
pub fn run_episode(
    scenario: &Scenario,
    filter: &mut dyn SafetyFilter,
    task: &mut dyn TaskPolicy,
    disturbance: &mut dyn DisturbancePolicy,
    seed: u64,
) -> Result<(Trajectory, EpisodeMetrics)> {
    let model = &scenario.model;
    check_dim("initial state", model.state_dim(), scenario.x0.len())?;
    check_dim("goal", model.state_dim(), scenario.goal.len())?;
    filter.reset();
    task.reset(seed);
    disturbance.reset(seed);
    filter.observe(&scenario.x0);
    if !filter.certifies(&scenario.x0) {
        return Err(Error::DeploymentRejected(format!(
            "{} does not certify the initial state {:?}",
            filter.name(),
            scenario.x0
        )));
    }
    let mut traj = Trajectory {
        seed,
        states: vec![scenario.x0.clone()],
        controls: Vec::with_capacity(scenario.steps),
        disturbances: Vec::with_capacity(scenario.steps),
        decisions: Vec::with_capacity(scenario.steps),
        termination: Termination::Completed,
    };
    for t in 0..scenario.steps {
        let x = traj.states.last().expect("nonempty").clone();
        filter.observe(&x);
        let candidate = task.control(t, &x);
        let decision = decide(filter, &x, &candidate);
        let d = disturbance.disturbance(t, &x, &decision.applied);
        let next = match model.step(&x, &decision.applied, &d) {
            Ok(next) => next,
            Err(e) => {
                log::warn!("episode {seed} stopped at step {t}: {e}");
                traj.termination = Termination::StepError;
                break;
            }
        };
        traj.controls.push(decision.applied.clone());
        traj.disturbances.push(d);
        traj.decisions.push(decision);
        traj.states.push(next);
    }
    let m = metrics(scenario, &traj);
    Ok((traj, m))
}

/// Recomputes the states of a logged trajectory from its start, controls and
/// disturbances.
pub fn replay(model: &SystemModel, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let mut states = vec![traj.states.first().cloned().unwrap_or_default()];
    for (u, d) in traj.controls.iter().zip(&traj.disturbances) {
        let next = model.step(states.last().expect("nonempty"), u, d)?;
        states.push(next);
    }
    Ok(states)
}

/// True when replaying reproduces every logged state bit for bit.
pub fn replay_matches(model: &SystemModel, traj: &Trajectory) -> Result<bool> {
    let states = replay(model, traj)?;
    Ok(states.len() == traj.states.len()
        && states
            .iter()
            .zip(&traj.states)
            .all(|(a, b)| a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())))
}

pub type TaskFactory<'a> = dyn Fn() -> Box<dyn TaskPolicy> + Sync + 'a;
pub type DisturbanceFactory<'a> = dyn Fn() -> Box<dyn DisturbancePolicy> + Sync + 'a;

/// One episode per seed, in parallel, sorted by seed.
pub fn run_batch(
    scenario: &Scenario,
    filter: &dyn SafetyFilter,
    task: &TaskFactory,
    disturbance: &DisturbanceFactory,
    seeds: &[u64],
) -> Result<Vec<(Trajectory, EpisodeMetrics)>> {
    let mut out = seeds
        .par_iter()
        .map(|&seed| {
            let mut f = filter.clone_box();
            run_episode(scenario, f.as_mut(), task().as_mut(), disturbance().as_mut(), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|(t, _)| t.seed);
    Ok(out)
}

/// Rejection-samples a start state from `region` that the filter certifies.
pub fn sample_certified_start(filter: &dyn SafetyFilter, region: &IntervalBox, seed: u64, max_tries: usize) -> Option<Vec<f64>> {
    let mut rng = stream_rng(seed, START_STREAM);
    let mut f = filter.clone_box();
    for _ in 0..max_tries {
        let x = uniform_in(&mut rng, region);
        f.reset();
        f.observe(&x);
        if f.certifies(&x) {
            return Some(x);
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationRow {
    pub seed: u64,
    pub unfiltered_violations: usize,
    pub unfiltered_cost: f64,
    pub filtered_violations: usize,
    pub filtered_cost: f64,
    pub interventions: usize,
    /// `filtered_cost − unfiltered_cost`.
    pub cost_inflation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    pub filter: String,
    pub rows: Vec<SeparationRow>,
    pub unfiltered_violations: usize,
    pub filtered_violations: usize,
    pub mean_cost_inflation: f64,
}

/// Runs the same task unfiltered and filtered from the same start and seeds.
pub fn separation_experiment(
    scenario: &Scenario,
    filter: &dyn SafetyFilter,
    task: &TaskFactory,
    disturbance: &DisturbanceFactory,
    seeds: &[u64],
) -> Result<SeparationReport> {
    let raw = run_batch(scenario, &NullFilter, task, disturbance, seeds)?;
    let filtered = run_batch(scenario, filter, task, disturbance, seeds)?;
    let rows: Vec<SeparationRow> = raw
        .iter()
        .zip(&filtered)
        .map(|((t, a), (_, b))| SeparationRow {
            seed: t.seed,
            unfiltered_violations: a.violations,
            unfiltered_cost: a.task_cost,
            filtered_violations: b.violations,
            filtered_cost: b.task_cost,
            interventions: b.intervention_count,
            cost_inflation: b.task_cost - a.task_cost,
        })
        .collect();
    let n = rows.len().max(1) as f64;
    Ok(SeparationReport {
        filter: filter.name().to_string(),
        unfiltered_violations: rows.iter().map(|r| r.unfiltered_violations).sum(),
        filtered_violations: rows.iter().map(|r| r.filtered_violations).sum(),
        mean_cost_inflation: rows.iter().map(|r| r.cost_inflation).sum::<f64>() / n,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub episodes: usize,
    pub failures: usize,
    pub estimate: f64,
    pub confidence: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Two-sided Clopper-Pearson interval for `failures` out of `episodes`.
pub fn clopper_pearson(failures: usize, episodes: usize, confidence: f64) -> Result<(f64, f64)> {
    if episodes == 0 || failures > episodes {
        return Err(Error::InvalidArgument(format!("{failures} failures out of {episodes} episodes")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (failures as f64, episodes as f64);
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::InvalidArgument(e.to_string()));
    let lower = if failures == 0 { 0.0 } else { beta(k, n - k + 1.0)?.inverse_cdf(alpha / 2.0) };
    let upper = if failures == episodes { 1.0 } else { beta(k + 1.0, n - k)?.inverse_cdf(1.0 - alpha / 2.0) };
    Ok((lower, upper))
}

/// Fraction of episodes that ever enter the failure set, seeds
/// `base_seed .. base_seed + episodes`.
pub fn monte_carlo_safety(
    scenario: &Scenario,
    filter: &dyn SafetyFilter,
    task: &TaskFactory,
    disturbance: &DisturbanceFactory,
    episodes: usize,
    base_seed: u64,
    confidence: f64,
) -> Result<MonteCarloReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("at least one episode is needed".into()));
    }
    let seeds: Vec<u64> = (0..episodes as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let runs = run_batch(scenario, filter, task, disturbance, &seeds)?;
    let failures = runs.iter().filter(|(_, m)| m.violations > 0).count();
    let (lower, upper) = clopper_pearson(failures, episodes, confidence)?;
    Ok(MonteCarloReport {
        episodes,
        failures,
        estimate: failures as f64 / episodes as f64,
        confidence,
        lower,
        upper,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub filter: String,
    pub episodes: usize,
    pub violations: usize,
    pub intervention_rate: f64,
    pub task_cost: f64,
    pub chatter_count: usize,
    pub mean_monitor: f64,
    pub degraded_count: usize,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// The first-seed trajectory of every filter, in filter order.
    pub traces: Vec<(String, Trajectory)>,
}

/// Same scenario, task and seeds for every filter. Violations and chatter
/// are totals over seeds; rates, costs and monitor values are means.
pub fn compare_filters(
    scenario: &Scenario,
    filters: &[&dyn SafetyFilter],
    task: &TaskFactory,
    disturbance: &DisturbanceFactory,
    seeds: &[u64],
) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(filters.len());
    let mut traces = Vec::with_capacity(filters.len());
    for filter in filters {
        let runs = run_batch(scenario, *filter, task, disturbance, seeds)?;
        let n = runs.len().max(1) as f64;
        rows.push(ComparisonRow {
            filter: filter.name().to_string(),
            episodes: runs.len(),
            violations: runs.iter().map(|(_, m)| m.violations).sum(),
            intervention_rate: runs.iter().map(|(_, m)| m.intervention_rate).sum::<f64>() / n,
            task_cost: runs.iter().map(|(_, m)| m.task_cost).sum::<f64>() / n,
            chatter_count: runs.iter().map(|(_, m)| m.chatter_count).sum(),
            mean_monitor: runs.iter().map(|(_, m)| m.mean_monitor).sum::<f64>() / n,
            degraded_count: runs.iter().map(|(_, m)| m.degraded_count).sum(),
        });
        if let Some((t, _)) = runs.into_iter().next() {
            traces.push((filter.name().to_string(), t));
        }
    }
    Ok(Comparison { rows, traces })
}

pub fn write_comparison_csv(w: impl Write, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-step log: `t, x_0.., u_0.., d_0.., candidate_0.., monitor, overridden, degraded`.
/// The final state gets a row of its own with empty decision fields.
pub fn write_trajectory_csv(w: impl Write, traj: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.controls.first().map_or(0, Vec::len);
    let k = traj.disturbances.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..k).map(|i| format!("d{i}")));
    header.extend((0..m).map(|i| format!("candidate{i}")));
    header.extend(["monitor", "overridden", "degraded"].map(String::from));
    out.write_record(&header)?;
    for (t, x) in traj.states.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(x.iter().map(f64::to_string));
        match traj.decisions.get(t) {
            Some(dec) => {
                rec.extend(traj.controls[t].iter().map(f64::to_string));
                rec.extend(traj.disturbances[t].iter().map(f64::to_string));
                rec.extend(dec.candidate.iter().map(f64::to_string));
                rec.push(dec.monitor_value.to_string());
                rec.push(dec.overridden.to_string());
                rec.push(dec.degraded.to_string());
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 2 * m + k + 3)),
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_double_integrator;
    use crate::margin::margin_halfspace;

    fn wall_scenario(steps: usize) -> Scenario {
        let model = make_double_integrator(1.0, 0.0, 0.1).unwrap();
        Scenario {
            model,
            margin: margin_halfspace(vec![1.0, 0.0], 0.0).unwrap(),
            x0: vec![1.0, 0.0],
            steps,
            goal: vec![2.0, 0.0],
            control_weight: 0.1,
        }
    }

    #[test]
    fn zero_steps_give_empty_trajectory() {
        let s = wall_scenario(0);
        let mut task = goal_seeking_task(&s.model, vec![-1.0, -1.5], s.goal.clone()).unwrap();
        let mut d = ZeroDisturbance::new(&s.model);
        let (t, m) = run_episode(&s, &mut NullFilter, &mut task, &mut d, 7).unwrap();
        assert_eq!(t.states, vec![s.x0.clone()]);
        assert!(t.controls.is_empty());
        assert_eq!(m, EpisodeMetrics::default());
    }

    #[test]
    fn clopper_pearson_known_values() {
        let (lo, hi) = clopper_pearson(0, 1000, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        // 1 − 0.025^(1/1000)
        assert!((hi - (1.0 - 0.025f64.powf(1.0 / 1000.0))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(1, 1, 0.95).unwrap();
        assert!((lo - 0.025).abs() < 1e-9);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn lowest_index_wins_disturbance_ties() {
        let model = make_double_integrator(1.0, 0.5, 0.1).unwrap();
        let margin = MarginFunction::custom(|_| 1.0);
        let mut adv = MarginGreedyDisturbance::new(&model, margin, vec![vec![-0.5], vec![0.5]]).unwrap();
        assert_eq!(adv.disturbance(0, &[1.0, 0.0], &[0.0]), vec![-0.5]);
    }

    #[test]
    fn replay_reproduces_random_episode() {
        let s = wall_scenario(50);
        let model = make_double_integrator(1.0, 0.2, 0.1).unwrap();
        let s = Scenario { model, ..s };
        let mut task = RandomTask::new(&s.model);
        let mut d = UniformDisturbance::new(&s.model);
        let (t, _) = run_episode(&s, &mut NullFilter, &mut task, &mut d, 3).unwrap();
        assert!(replay_matches(&s.model, &t).unwrap());
        let (t2, _) = run_episode(&s, &mut NullFilter, &mut task, &mut d, 3).unwrap();
        assert_eq!(t, t2);
    }
}
