//! TOML run configuration. Parsing is strict: unknown keys are errors.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::benchmarks::TaskKind;
use crate::cbf::{cbf_qp_filter, double_integrator_barrier};
use crate::dynamics::{
    make_double_integrator, make_dubins_car, make_inverted_pendulum, make_linear, make_planar_double_integrator,
    SystemModel,
};
use crate::error::{Error, Result};
use crate::filter::{least_restrictive_filter, NullFilter, SafetyFilter};
use crate::harness::{
    adversarial_disturbance, goal_seeking_task, AdversarialTask, DisturbancePolicy, MarginGreedyDisturbance,
    RandomLatticeDisturbance, RandomTask, UniformDisturbance, ZeroDisturbance,
};
use crate::hj::{candidate_lattices, GridSpec, Lattice, SolveOptions, ValueGrid};
use crate::interval::IntervalBox;
use crate::margin::{margin_halfspace, margin_keep_in_box, margin_keepout_ball, margin_min, MarginFunction};
use crate::policy::TaskPolicy;
use crate::rollout::{braking_terminal_set, mps_filter, BrakingPolicy, TerminalSafeSet};
use crate::tube_mpc::{nominal_mpc_filter, tube_mpc_filter};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; episode `i` uses `seed + i`.
    #[serde(default)]
    pub seed: u64,
    /// Output directory, overridden by `--out`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    pub margin: MarginConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Filters for `compare`.
    #[serde(default)]
    pub compare: Vec<FilterConfig>,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    DoubleIntegrator {
        u_max: f64,
        #[serde(default)]
        d_max: f64,
        dt: f64,
    },
    PlanarDoubleIntegrator {
        a_max: f64,
        #[serde(default)]
        d_max: f64,
        dt: f64,
    },
    DubinsCar {
        speed: f64,
        omega_max: f64,
        #[serde(default)]
        d_max: f64,
        dt: f64,
    },
    InvertedPendulum {
        torque_max: f64,
        #[serde(default)]
        d_max: f64,
        dt: f64,
    },
    /// `x' = A x + B u + E d`, matrices row-major.
    Linear {
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default)]
        e: Vec<f64>,
        #[serde(default = "one")]
        dt: f64,
        control_lower: Vec<f64>,
        control_upper: Vec<f64>,
        #[serde(default)]
        disturbance_lower: Vec<f64>,
        #[serde(default)]
        disturbance_upper: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginConfig {
    Halfspace { normal: Vec<f64>, offset: f64 },
    KeepoutBall { center: Vec<f64>, radius: f64 },
    KeepInBox { lower: Vec<f64>, upper: Vec<f64> },
    Min { parts: Vec<MarginConfig> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub shape: Vec<usize>,
    pub u_counts: Vec<usize>,
    #[serde(default)]
    pub d_counts: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_max_iters() -> usize {
    1000
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    #[default]
    None,
    LeastRestrictive,
    /// Wall barrier for the double integrator.
    CbfQp {
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        standoff: f64,
    },
    Mps {
        horizon: usize,
        #[serde(default)]
        terminal: MpsTerminal,
        /// Braking target speed; the terminal band has the same half-width.
        #[serde(default = "default_creep")]
        creep: f64,
        /// Lower corner of the safe box for the braking terminal set.
        #[serde(default)]
        safe_lower: Vec<f64>,
        #[serde(default)]
        safe_upper: Vec<f64>,
    },
    TubeMpc {
        gain: Vec<f64>,
        horizon: usize,
        terminal_lower: Vec<f64>,
        terminal_upper: Vec<f64>,
        x_ref: Vec<f64>,
        u_ref: Vec<f64>,
        #[serde(default = "yes")]
        tighten: bool,
    },
}

fn default_creep() -> f64 {
    0.02
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpsTerminal {
    #[default]
    Braking,
    /// `{V ≥ 0}` of the solved grid.
    Value,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    #[default]
    Zero,
    Uniform,
    /// Lowest next-state value over the lattice (needs a grid).
    Adversarial,
    /// Lowest next-state margin over the lattice.
    MarginGreedy,
    RandomLattice,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "one_usize")]
    pub episodes: usize,
    /// Start state. Without one, starts are sampled from `start_lower..start_upper`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub start_lower: Vec<f64>,
    #[serde(default)]
    pub start_upper: Vec<f64>,
    #[serde(default)]
    pub goal: Vec<f64>,
    #[serde(default = "default_control_weight")]
    pub control_weight: f64,
    #[serde(default = "default_task")]
    pub task: TaskKind,
    /// Goal-seeking feedback gain, row-major `m×n`.
    #[serde(default)]
    pub task_gain: Vec<f64>,
    #[serde(default = "default_lookahead")]
    pub lookahead: usize,
    /// Disturbance lattice counts for the adversaries; defaults to the grid's.
    #[serde(default)]
    pub d_counts: Vec<usize>,
    #[serde(default)]
    pub disturbance: DisturbanceKind,
    /// Episodes of the Monte Carlo failure estimate in `run` (0 disables it).
    #[serde(default)]
    pub monte_carlo_episodes: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_steps() -> usize {
    200
}

fn one_usize() -> usize {
    1
}

fn default_control_weight() -> f64 {
    0.01
}

fn default_task() -> TaskKind {
    TaskKind::GoalSeeking
}

fn default_lookahead() -> usize {
    2
}

fn default_confidence() -> f64 {
    0.95
}

impl Default for HarnessConfig {
    fn default() -> Self {
        toml::from_str("").expect("all harness fields have defaults")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// State lattice counts over the grid domain (or `lower..upper`).
    #[serde(default)]
    pub state_counts: Vec<usize>,
    #[serde(default)]
    pub lower: Vec<f64>,
    #[serde(default)]
    pub upper: Vec<f64>,
    #[serde(default = "default_verify_horizon")]
    pub horizon: usize,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Random containment samples for interval tubes and tube-MPC error bounds.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Offset added to the value grid for the corrupted-certificate self-test.
    #[serde(default = "default_corruption")]
    pub corruption: f64,
}

fn default_verify_horizon() -> usize {
    6
}

fn default_budget() -> u64 {
    50_000_000
}

fn default_samples() -> usize {
    10_000
}

fn default_corruption() -> f64 {
    10.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        toml::from_str("").expect("all verify fields have defaults")
    }
}

fn config_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn boxed(lower: &[f64], upper: &[f64]) -> Result<IntervalBox> {
    IntervalBox::new(lower.to_vec(), upper.to_vec())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses and validates; `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
        config.validate().map_err(|e| config_error(path, e.to_string()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        self.build_margin()?;
        if let Some(grid) = &self.grid {
            if !(grid.tolerance > 0.0) {
                return Err(Error::InvalidArgument(format!("grid.tolerance must be positive, got {}", grid.tolerance)));
            }
            if grid.max_iters == 0 {
                return Err(Error::InvalidArgument("grid.max_iters must be at least 1".into()));
            }
            self.grid_spec()?;
            candidate_lattices(&model, &grid.u_counts, &grid.d_counts)?;
        }
        let h = &self.harness;
        if !(h.confidence > 0.0 && h.confidence < 1.0) {
            return Err(Error::InvalidArgument(format!("harness.confidence must lie in (0, 1), got {}", h.confidence)));
        }
        if !(h.control_weight >= 0.0) {
            return Err(Error::InvalidArgument("harness.control_weight must be nonnegative".into()));
        }
        if h.episodes == 0 {
            return Err(Error::InvalidArgument("harness.episodes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        match &self.model {
            ModelConfig::DoubleIntegrator { u_max, d_max, dt } => make_double_integrator(*u_max, *d_max, *dt),
            ModelConfig::PlanarDoubleIntegrator { a_max, d_max, dt } => make_planar_double_integrator(*a_max, *d_max, *dt),
            ModelConfig::DubinsCar {
                speed,
                omega_max,
                d_max,
                dt,
            } => make_dubins_car(*speed, *omega_max, *d_max, *dt),
            ModelConfig::InvertedPendulum { torque_max, d_max, dt } => make_inverted_pendulum(*torque_max, *d_max, *dt),
            ModelConfig::Linear {
                a,
                b,
                e,
                dt,
                control_lower,
                control_upper,
                disturbance_lower,
                disturbance_upper,
            } => {
                let dist = if disturbance_lower.is_empty() && disturbance_upper.is_empty() {
                    IntervalBox::zero_dim()
                } else {
                    boxed(disturbance_lower, disturbance_upper)?
                };
                make_linear(a.clone(), b.clone(), e.clone(), *dt, boxed(control_lower, control_upper)?, dist)
            }
        }
    }

    pub fn build_margin(&self) -> Result<MarginFunction> {
        fn build(m: &MarginConfig, n: usize) -> Result<MarginFunction> {
            match m {
                MarginConfig::Halfspace { normal, offset } => margin_halfspace(normal.clone(), *offset),
                MarginConfig::KeepoutBall { center, radius } => margin_keepout_ball(center.clone(), *radius),
                MarginConfig::KeepInBox { lower, upper } => margin_keep_in_box(lower, upper, n),
                MarginConfig::Min { parts } => margin_min(parts.iter().map(|p| build(p, n)).collect::<Result<_>>()?),
            }
        }
        build(&self.margin, self.build_model()?.state_dim())
    }

    pub fn grid_config(&self) -> Result<&GridConfig> {
        self.grid
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("this command needs a [grid] section".into()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = self.grid_config()?;
        GridSpec::new(boxed(&g.lower, &g.upper)?, g.shape.clone())
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let g = self.grid_config()?;
        Ok(SolveOptions {
            u_counts: g.u_counts.clone(),
            d_counts: g.d_counts.clone(),
            tolerance: g.tolerance,
            max_iters: g.max_iters,
        })
    }

    /// Control and disturbance lattices from the grid section.
    pub fn lattices(&self, model: &SystemModel) -> Result<(Lattice, Lattice)> {
        let g = self.grid_config()?;
        candidate_lattices(model, &g.u_counts, &g.d_counts)
    }

    /// Disturbance lattice for the harness adversaries.
    pub fn adversary_lattice(&self, model: &SystemModel) -> Result<Vec<Vec<f64>>> {
        let counts = if !self.harness.d_counts.is_empty() {
            self.harness.d_counts.clone()
        } else if let Some(g) = &self.grid {
            g.d_counts.clone()
        } else {
            vec![3; model.disturbance_dim()]
        };
        Ok(candidate_lattices(model, &vec![1; model.control_dim()], &counts)?.1)
    }

    /// Whether building `filter` needs the solved value grid.
    pub fn needs_grid(filter: &FilterConfig) -> bool {
        matches!(
            filter,
            FilterConfig::LeastRestrictive
                | FilterConfig::Mps {
                    terminal: MpsTerminal::Value,
                    ..
                }
        )
    }

    pub fn build_filter(&self, filter: &FilterConfig, model: &SystemModel, grid: Option<&Arc<ValueGrid>>) -> Result<Box<dyn SafetyFilter>> {
        let margin = self.build_margin()?;
        let need_grid = || grid.cloned().ok_or_else(|| Error::InvalidArgument("filter needs a solved value grid".into()));
        Ok(match filter {
            FilterConfig::None => Box::new(NullFilter),
            FilterConfig::LeastRestrictive => {
                let (u, d) = self.lattices(model)?;
                Box::new(least_restrictive_filter(model, need_grid()?, u, d)?)
            }
            FilterConfig::CbfQp { kappa, standoff } => {
                let u_max = model.control_set().upper()[0];
                let kappa = kappa.unwrap_or(0.5 / model.dt());
                Box::new(cbf_qp_filter(model, double_integrator_barrier(u_max, kappa, *standoff)?)?)
            }
            FilterConfig::Mps {
                horizon,
                terminal,
                creep,
                safe_lower,
                safe_upper,
            } => {
                let braking = BrakingPolicy::for_double_integrator(model, *creep)?;
                let terminal = match terminal {
                    MpsTerminal::Value => TerminalSafeSet::Value(need_grid()?),
                    MpsTerminal::Braking => {
                        let n = model.state_dim();
                        let lower = if safe_lower.is_empty() { vec![f64::NEG_INFINITY; n] } else { safe_lower.clone() };
                        let upper = if safe_upper.is_empty() { vec![f64::INFINITY; n] } else { safe_upper.clone() };
                        braking_terminal_set(model, &braking, *creep, &boxed(&lower, &upper)?)?
                    }
                };
                Box::new(mps_filter(model, Arc::new(braking), terminal, margin, *horizon)?)
            }
            FilterConfig::TubeMpc {
                gain,
                horizon,
                terminal_lower,
                terminal_upper,
                x_ref,
                u_ref,
                tighten,
            } => {
                let terminal = boxed(terminal_lower, terminal_upper)?;
                if *tighten {
                    Box::new(tube_mpc_filter(model, gain, &margin, &terminal, x_ref, u_ref, *horizon)?)
                } else {
                    Box::new(nominal_mpc_filter(model, gain, &margin, &terminal, x_ref, u_ref, *horizon)?)
                }
            }
        })
    }

    pub fn build_task(&self, model: &SystemModel) -> Result<Box<dyn TaskPolicy>> {
        let h = &self.harness;
        Ok(match h.task {
            TaskKind::GoalSeeking => Box::new(goal_seeking_task(model, h.task_gain.clone(), self.goal(model))?),
            TaskKind::Random => Box::new(RandomTask::new(model)),
            TaskKind::Adversarial => {
                let counts = self.grid.as_ref().map_or_else(|| vec![3; model.control_dim()], |g| g.u_counts.clone());
                Box::new(AdversarialTask::new(model, self.build_margin()?, &counts, h.lookahead)?)
            }
        })
    }

    pub fn goal(&self, model: &SystemModel) -> Vec<f64> {
        if self.harness.goal.is_empty() {
            vec![0.0; model.state_dim()]
        } else {
            self.harness.goal.clone()
        }
    }

    pub fn build_disturbance(&self, model: &SystemModel, grid: Option<&Arc<ValueGrid>>) -> Result<Box<dyn DisturbancePolicy>> {
        Ok(match self.harness.disturbance {
            DisturbanceKind::Zero => Box::new(ZeroDisturbance::new(model)),
            DisturbanceKind::Uniform => Box::new(UniformDisturbance::new(model)),
            DisturbanceKind::Adversarial => {
                let grid = grid
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument("adversarial disturbance needs a [grid] section".into()))?;
                Box::new(adversarial_disturbance(model, grid, self.adversary_lattice(model)?)?)
            }
            DisturbanceKind::MarginGreedy => {
                Box::new(MarginGreedyDisturbance::new(model, self.build_margin()?, self.adversary_lattice(model)?)?)
            }
            DisturbanceKind::RandomLattice => Box::new(RandomLatticeDisturbance::new(self.adversary_lattice(model)?)?),
        })
    }
}
