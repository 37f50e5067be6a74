//! Stock benchmark instances: the double-integrator wall (one filter per
//! family) and the scalar unstable linear system for tube MPC.

use std::sync::Arc;

use crate::cbf::{cbf_qp_filter, double_integrator_barrier};
use crate::dynamics::{discretize_box, make_double_integrator, make_linear, SystemModel};
use crate::error::Result;
use crate::filter::{least_restrictive_filter, SafetyFilter};
use crate::harness::{
    adversarial_disturbance, goal_seeking_task, AdversarialTask, DisturbancePolicy, MarginGreedyDisturbance,
    RandomTask, Scenario,
};
use crate::hj::{candidate_lattices, solve, GridSpec, SolveOptions, SolveReport, ValueGrid};
use crate::interval::IntervalBox;
use crate::margin::{margin_halfspace, margin_min, MarginFunction};
use crate::policy::TaskPolicy;
use crate::rollout::{braking_terminal_set, mps_filter, BrakingPolicy};
use crate::tube_mpc::tube_mpc_filter;

pub const WALL_U_MAX: f64 = 1.0;
pub const WALL_DT: f64 = 0.05;
pub const WALL_D_MAX: f64 = 0.2;
pub const WALL_P_RANGE: (f64, f64) = (0.0, 4.0);
pub const WALL_V_RANGE: (f64, f64) = (-3.0, 3.0);
pub const WALL_NODES: usize = 161;
/// Far edge of the robust benchmark grid. Nodes that cannot avoid leaving the
/// grid count as unsafe, so the grid reaches well past the states the
/// benchmarks visit (braking from v = 3 at 0.8 takes about 5.6).
pub const ROBUST_WALL_P_MAX: f64 = 12.0;
/// Speed bound of the robust grid, past the benchmark range so that no
/// control from a benchmark state leaves the grid through the speed axis.
pub const ROBUST_WALL_V_MAX: f64 = 3.6;

pub const CBF_STANDOFF: f64 = 0.1;

pub const MPS_CREEP: f64 = 0.02;
pub const MPS_SAFE_P: f64 = 0.05;
pub const MPS_HORIZON: usize = 80;

pub const SCALAR_A: f64 = 1.2;
pub const SCALAR_GAIN: f64 = -0.7;
pub const SCALAR_D_MAX: f64 = 0.1;
pub const SCALAR_LIMIT: f64 = 2.0;
pub const SCALAR_TERMINAL: f64 = 1.0;
pub const SCALAR_HORIZON: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GoalSeeking,
    Random,
    Adversarial,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::GoalSeeking, TaskKind::Random, TaskKind::Adversarial];
}

/// Double integrator `(p, v)` with acceleration bound 1 and `Δt = 0.05`.
pub fn wall_model(d_max: f64) -> Result<SystemModel> {
    make_double_integrator(WALL_U_MAX, d_max, WALL_DT)
}

/// The wall at `p = 0`: failure is `p < 0`.
pub fn wall_margin() -> MarginFunction {
    margin_halfspace(vec![1.0, 0.0], 0.0).expect("nonzero normal")
}

/// `nodes × nodes` grid over `p ∈ [0, 4]`, `v ∈ [−3, 3]`.
pub fn wall_grid_spec(nodes: usize) -> Result<GridSpec> {
    GridSpec::new(
        IntervalBox::new(vec![WALL_P_RANGE.0, WALL_V_RANGE.0], vec![WALL_P_RANGE.1, WALL_V_RANGE.1])?,
        vec![nodes, nodes],
    )
}

/// Three control candidates, and three disturbance candidates when there is a disturbance.
/// The robust grid contracts slowly, hence the large sweep cap.
pub fn wall_solve_options(model: &SystemModel) -> SolveOptions {
    let d_counts = if model.disturbance_dim() == 0 { vec![] } else { vec![3] };
    let mut options = SolveOptions::new(vec![3], d_counts);
    options.max_iters = 5000;
    options
}

/// Grid over `p ∈ [0, 12]`, `v ∈ [−3.6, 3.6]` at the spacing of the 161-node wall grid.
pub fn robust_wall_grid_spec() -> Result<GridSpec> {
    GridSpec::new(
        IntervalBox::new(vec![WALL_P_RANGE.0, -ROBUST_WALL_V_MAX], vec![ROBUST_WALL_P_MAX, ROBUST_WALL_V_MAX])?,
        vec![481, 193],
    )
}

/// Value grid for the disturbed wall used by the least-restrictive and MPS benchmarks.
pub fn solve_robust_wall() -> Result<(SystemModel, ValueGrid, SolveReport)> {
    let model = wall_model(WALL_D_MAX)?;
    let (grid, report) = solve(&model, &wall_margin(), &robust_wall_grid_spec()?, &wall_solve_options(&model))?;
    Ok((model, grid, report))
}

pub fn solve_wall(d_max: f64, nodes: usize) -> Result<(SystemModel, ValueGrid, SolveReport)> {
    let model = wall_model(d_max)?;
    let (grid, report) = solve(&model, &wall_margin(), &wall_grid_spec(nodes)?, &wall_solve_options(&model))?;
    Ok((model, grid, report))
}

/// Continuous-time stopping boundary `p = v² / (2 a)` for `v < 0`.
pub fn wall_stopping_boundary(v: f64, decel: f64) -> f64 {
    if v < 0.0 {
        v * v / (2.0 * decel)
    } else {
        0.0
    }
}

/// A filter on its benchmark, with what the harness needs to exercise it.
#[derive(Debug)]
pub struct Benchmark {
    pub name: &'static str,
    pub model: SystemModel,
    pub margin: MarginFunction,
    pub filter: Box<dyn SafetyFilter>,
    /// Start states are drawn from here and kept if the filter certifies them.
    pub start_region: IntervalBox,
    pub goal: Vec<f64>,
    pub goal_gain: Vec<f64>,
    pub u_counts: Vec<usize>,
    pub d_candidates: Vec<Vec<f64>>,
    /// Value grid used by the disturbance adversary when present.
    pub adversary_grid: Option<Arc<ValueGrid>>,
    pub lookahead: usize,
}

impl Benchmark {
    pub fn scenario(&self, x0: Vec<f64>, steps: usize) -> Scenario {
        Scenario {
            model: self.model.clone(),
            margin: self.margin.clone(),
            x0,
            steps,
            goal: self.goal.clone(),
            control_weight: 0.01,
        }
    }

    pub fn task(&self, kind: TaskKind) -> Box<dyn TaskPolicy> {
        match kind {
            TaskKind::GoalSeeking => Box::new(
                goal_seeking_task(&self.model, self.goal_gain.clone(), self.goal.clone()).expect("benchmark dimensions agree"),
            ),
            TaskKind::Random => Box::new(RandomTask::new(&self.model)),
            TaskKind::Adversarial => Box::new(
                AdversarialTask::new(&self.model, self.margin.clone(), &self.u_counts, self.lookahead)
                    .expect("benchmark lattice is valid"),
            ),
        }
    }

    /// Worst case within the disturbance lattice: minimizes the value of the
    /// next state if a grid is available, its margin otherwise.
    pub fn adversary(&self) -> Box<dyn DisturbancePolicy> {
        match &self.adversary_grid {
            Some(grid) => Box::new(
                adversarial_disturbance(&self.model, grid.clone(), self.d_candidates.clone()).expect("grid matches model"),
            ),
            None => Box::new(
                MarginGreedyDisturbance::new(&self.model, self.margin.clone(), self.d_candidates.clone())
                    .expect("nonempty lattice"),
            ),
        }
    }
}

fn wall_start_region() -> IntervalBox {
    IntervalBox::new(vec![0.3, -2.0], vec![3.0, 2.0]).expect("ordered bounds")
}

fn wall_benchmark(name: &'static str, model: SystemModel, filter: Box<dyn SafetyFilter>, grid: Option<Arc<ValueGrid>>) -> Result<Benchmark> {
    let (_, d) = candidate_lattices(&model, &[3], &wall_solve_options(&model).d_counts)?;
    Ok(Benchmark {
        name,
        model,
        margin: wall_margin(),
        filter,
        start_region: wall_start_region(),
        // Beyond the wall, so goal seeking presses against it.
        goal: vec![-0.5, 0.0],
        goal_gain: vec![-1.0, -1.5],
        u_counts: vec![3],
        d_candidates: d,
        adversary_grid: grid,
        lookahead: 2,
    })
}

/// Least-restrictive filter on the robust wall grid (`|d| ≤ 0.2`).
pub fn least_restrictive_benchmark(grid: Arc<ValueGrid>) -> Result<Benchmark> {
    let model = wall_model(WALL_D_MAX)?;
    let (u, d) = candidate_lattices(&model, &[3], &[3])?;
    let filter = least_restrictive_filter(&model, grid.clone(), u, d)?;
    wall_benchmark("least_restrictive", model, Box::new(filter), Some(grid))
}

/// CBF-QP on the undisturbed wall, with a standoff that absorbs the
/// one-cycle overshoot of the sampled barrier condition.
pub fn cbf_benchmark() -> Result<Benchmark> {
    let model = wall_model(0.0)?;
    let barrier = double_integrator_barrier(WALL_U_MAX, 0.5 / WALL_DT, CBF_STANDOFF)?;
    let filter = cbf_qp_filter(&model, barrier)?;
    wall_benchmark("cbf_qp", model, Box::new(filter), None)
}

/// Robust MPS on the wall: braking fallback to a creep speed and its
/// invariant terminal band.
pub fn mps_benchmark(adversary_grid: Option<Arc<ValueGrid>>) -> Result<Benchmark> {
    let model = wall_model(WALL_D_MAX)?;
    let braking = BrakingPolicy::for_double_integrator(&model, MPS_CREEP)?;
    let safe = IntervalBox::new(vec![MPS_SAFE_P, f64::NEG_INFINITY], vec![f64::INFINITY, f64::INFINITY])?;
    let terminal = braking_terminal_set(&model, &braking, MPS_CREEP, &safe)?;
    let filter = mps_filter(&model, Arc::new(braking), terminal, wall_margin(), MPS_HORIZON)?;
    wall_benchmark("mps", model, Box::new(filter), adversary_grid)
}

pub fn scalar_model() -> Result<SystemModel> {
    make_linear(
        vec![SCALAR_A],
        vec![1.0],
        vec![1.0],
        1.0,
        IntervalBox::symmetric(&[1.0])?,
        IntervalBox::symmetric(&[SCALAR_D_MAX])?,
    )
}

/// `|x| ≤ 2` as the minimum of two halfspaces.
pub fn scalar_margin() -> MarginFunction {
    margin_min(vec![
        margin_halfspace(vec![1.0], -SCALAR_LIMIT).expect("nonzero normal"),
        margin_halfspace(vec![-1.0], -SCALAR_LIMIT).expect("nonzero normal"),
    ])
    .expect("nonempty")
}

pub fn scalar_terminal() -> IntervalBox {
    IntervalBox::symmetric(&[SCALAR_TERMINAL]).expect("nonnegative radius")
}

/// Tube MPC on `x' = 1.2 x + u + d`, `|u| ≤ 1`, `|d| ≤ 0.1`, `|x| ≤ 2`.
pub fn tube_mpc_benchmark() -> Result<Benchmark> {
    let model = scalar_model()?;
    let margin = scalar_margin();
    let filter = tube_mpc_filter(&model, &[SCALAR_GAIN], &margin, &scalar_terminal(), &[0.0], &[0.0], SCALAR_HORIZON)?;
    Ok(Benchmark {
        name: "tube_mpc",
        d_candidates: discretize_box(model.disturbance_set(), &[3])?,
        model,
        margin,
        filter: Box::new(filter),
        start_region: IntervalBox::symmetric(&[1.8])?,
        goal: vec![3.0],
        goal_gain: vec![SCALAR_GAIN],
        u_counts: vec![3],
        adversary_grid: None,
        lookahead: 1,
    })
}
