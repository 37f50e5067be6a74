//! Discrete-time uncertain dynamics `x' = f(x, u, d)` with box control and
//! disturbance sets, plus the stock benchmark models.
//!
//! Every continuous model is discretized by one forward-Euler step and the
//! disturbance is added to the highest-order derivative.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::interval::{Interval, IntervalBox};

/// Relative tolerance when checking that a control or disturbance lies in its box.
const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    DoubleIntegrator,
    PlanarDoubleIntegrator,
    DubinsCar,
    InvertedPendulum,
    Linear,
    Custom,
}

/// Continuous-time control-affine form `ẋ = drift + input · u` at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlAffine {
    pub drift: Vec<f64>,
    /// Row-major `state_dim × control_dim`.
    pub input: Vec<f64>,
    pub control_dim: usize,
}

impl ControlAffine {
    pub fn rate(&self, u: &[f64]) -> Vec<f64> {
        let m = self.control_dim;
        self.drift
            .iter()
            .enumerate()
            .map(|(i, f)| f + (0..m).map(|j| self.input[i * m + j] * u[j]).sum::<f64>())
            .collect()
    }

    /// `wᵀ · input`, the sensitivity of `wᵀ ẋ` to each control component.
    pub fn project_input(&self, w: &[f64]) -> Vec<f64> {
        let m = self.control_dim;
        (0..m)
            .map(|j| w.iter().enumerate().map(|(i, wi)| wi * self.input[i * m + j]).sum())
            .collect()
    }
}

/// The map behind a [`SystemModel`]. Implementations must be pure.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn kind(&self) -> ModelKind;

    /// Writes `f(x, u, d)` into `next`. `d` is empty for disturbance-free models.
    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]);

    /// A box containing `f(x, u, d)` for every `x`, `u`, `d` in the given boxes.
    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval>;

    fn control_affine(&self, _x: &[f64]) -> Option<ControlAffine> {
        None
    }

    fn as_linear(&self) -> Option<&LinearDynamics> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct SystemModel {
    name: String,
    state_dim: usize,
    dt: f64,
    control_set: IntervalBox,
    disturbance_set: IntervalBox,
    dynamics: Arc<dyn Dynamics>,
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        state_dim: usize,
        dt: f64,
        control_set: IntervalBox,
        disturbance_set: IntervalBox,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state_dim must be positive".into()));
        }
        if control_set.dim() == 0 || control_set.is_empty() {
            return Err(Error::InvalidArgument("control set must be a nonempty box of positive dimension".into()));
        }
        if disturbance_set.is_empty() {
            return Err(Error::InvalidArgument("disturbance set is empty".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            dt,
            control_set,
            disturbance_set,
            dynamics,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModelKind {
        self.dynamics.kind()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_set.dim()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbance_set.dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn control_set(&self) -> &IntervalBox {
        &self.control_set
    }

    pub fn disturbance_set(&self) -> &IntervalBox {
        &self.disturbance_set
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    /// Same map with a different disturbance box (dimension must match).
    pub fn with_disturbance_set(&self, disturbance_set: IntervalBox) -> Result<Self> {
        check_dim("disturbance set", self.disturbance_dim(), disturbance_set.dim())?;
        let mut out = self.clone();
        out.disturbance_set = disturbance_set;
        Ok(out)
    }

    pub fn zero_disturbance(&self) -> Vec<f64> {
        vec![0.0; self.disturbance_dim()]
    }

    /// `f(x, u, d)` with the control and disturbance checked against their boxes.
    pub fn step(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.state_dim, x.len())?;
        check_dim("control", self.control_dim(), u.len())?;
        check_dim("disturbance", self.disturbance_dim(), d.len())?;
        check_member("control", u, &self.control_set)?;
        check_member("disturbance", d, &self.disturbance_set)?;
        let mut next = vec![0.0; self.state_dim];
        self.dynamics.step(x, u, d, &mut next);
        Ok(next)
    }

    /// Unchecked step for inner loops; lengths are only debug-asserted.
    #[inline]
    pub fn step_into(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        debug_assert_eq!(x.len(), self.state_dim);
        debug_assert_eq!(u.len(), self.control_dim());
        debug_assert_eq!(d.len(), self.disturbance_dim());
        self.dynamics.step(x, u, d, next);
    }

    /// Enclosure of `{ f(x, u, d) : x ∈ states, u ∈ controls, d ∈ disturbances }`.
    pub fn interval_step(&self, states: &IntervalBox, controls: &IntervalBox, disturbances: &IntervalBox) -> IntervalBox {
        assert_eq!(states.dim(), self.state_dim, "state box dimension");
        assert_eq!(controls.dim(), self.control_dim(), "control box dimension");
        assert_eq!(disturbances.dim(), self.disturbance_dim(), "disturbance box dimension");
        if states.is_empty() || controls.is_empty() || disturbances.is_empty() {
            return IntervalBox::empty(self.state_dim);
        }
        let out = self
            .dynamics
            .interval_step(&states.intervals(), &controls.intervals(), &disturbances.intervals());
        IntervalBox::from_intervals(&out)
    }

    /// Enclosure of one step from a box under a fixed control over the whole disturbance set.
    pub fn interval_step_point(&self, states: &IntervalBox, u: &[f64]) -> IntervalBox {
        self.interval_step(states, &IntervalBox::point(u), &self.disturbance_set)
    }

    pub fn linear(&self) -> Option<&LinearDynamics> {
        self.dynamics.as_linear()
    }

    pub fn is_control_affine(&self) -> bool {
        self.dynamics.control_affine(&vec![0.0; self.state_dim]).is_some()
    }

    pub fn control_affine(&self, x: &[f64]) -> Result<ControlAffine> {
        self.dynamics
            .control_affine(x)
            .ok_or_else(|| Error::NotControlAffine(self.name.clone()))
    }
}

fn check_member(what: &'static str, v: &[f64], set: &IntervalBox) -> Result<()> {
    let inside = v.iter().enumerate().all(|(i, x)| {
        let (l, u) = (set.lower()[i], set.upper()[i]);
        let tol = MEMBERSHIP_SLACK * 1f64.max(l.abs()).max(u.abs());
        x.is_finite() && *x >= l - tol && *x <= u + tol
    });
    if inside {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            what,
            value: v.to_vec(),
            lower: set.lower().to_vec(),
            upper: set.upper().to_vec(),
        })
    }
}

fn positive(what: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be positive, got {value}")))
    }
}

fn disturbance_box(d_max: f64, dim: usize) -> Result<IntervalBox> {
    if !(d_max >= 0.0 && d_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("d_max must be nonnegative, got {d_max}")));
    }
    if d_max == 0.0 {
        Ok(IntervalBox::zero_dim())
    } else {
        IntervalBox::symmetric(&vec![d_max; dim])
    }
}

#[inline]
fn dist(d: &[f64], i: usize) -> f64 {
    d.get(i).copied().unwrap_or(0.0)
}

#[inline]
fn dist_interval(d: &[Interval], i: usize) -> Interval {
    d.get(i).copied().unwrap_or(Interval::point(0.0))
}

/// `p' = p + v Δt`, `v' = v + (u + d) Δt`.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    pub dt: f64,
}

impl Dynamics for DoubleIntegrator {
    fn kind(&self) -> ModelKind {
        ModelKind::DoubleIntegrator
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        next[0] = x[0] + x[1] * self.dt;
        next[1] = x[1] + (u[0] + dist(d, 0)) * self.dt;
    }

    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval> {
        vec![
            x[0] + x[1].scale(self.dt),
            x[1] + (u[0] + dist_interval(d, 0)).scale(self.dt),
        ]
    }

    fn control_affine(&self, x: &[f64]) -> Option<ControlAffine> {
        Some(ControlAffine {
            drift: vec![x[1], 0.0],
            input: vec![0.0, 1.0],
            control_dim: 1,
        })
    }
}

/// Two decoupled double integrators: state `(px, py, vx, vy)`, control `(ax, ay)`.
#[derive(Debug, Clone)]
pub struct PlanarDoubleIntegrator {
    pub dt: f64,
}

impl Dynamics for PlanarDoubleIntegrator {
    fn kind(&self) -> ModelKind {
        ModelKind::PlanarDoubleIntegrator
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        for k in 0..2 {
            next[k] = x[k] + x[k + 2] * self.dt;
            next[k + 2] = x[k + 2] + (u[k] + dist(d, k)) * self.dt;
        }
    }

    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval> {
        let mut out = vec![Interval::point(0.0); 4];
        for k in 0..2 {
            out[k] = x[k] + x[k + 2].scale(self.dt);
            out[k + 2] = x[k + 2] + (u[k] + dist_interval(d, k)).scale(self.dt);
        }
        out
    }

    fn control_affine(&self, x: &[f64]) -> Option<ControlAffine> {
        Some(ControlAffine {
            drift: vec![x[2], x[3], 0.0, 0.0],
            input: vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            control_dim: 2,
        })
    }
}

/// Unicycle at constant speed: `(x, y, θ)`, control is the turn rate.
#[derive(Debug, Clone)]
pub struct DubinsCar {
    pub speed: f64,
    pub dt: f64,
}

impl Dynamics for DubinsCar {
    fn kind(&self) -> ModelKind {
        ModelKind::DubinsCar
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        let th = x[2];
        next[0] = x[0] + (self.speed * th.cos()) * self.dt;
        next[1] = x[1] + (self.speed * th.sin()) * self.dt;
        next[2] = th + (u[0] + dist(d, 0)) * self.dt;
    }

    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval> {
        let th = x[2];
        vec![
            x[0] + th.cos().scale(self.speed).scale(self.dt),
            x[1] + th.sin().scale(self.speed).scale(self.dt),
            th + (u[0] + dist_interval(d, 0)).scale(self.dt),
        ]
    }

    fn control_affine(&self, x: &[f64]) -> Option<ControlAffine> {
        Some(ControlAffine {
            drift: vec![self.speed * x[2].cos(), self.speed * x[2].sin(), 0.0],
            input: vec![0.0, 0.0, 1.0],
            control_dim: 1,
        })
    }
}

/// Normalized pendulum about the upright: `θ̈ = sin θ + u + d`.
#[derive(Debug, Clone)]
pub struct InvertedPendulum {
    pub dt: f64,
}

impl Dynamics for InvertedPendulum {
    fn kind(&self) -> ModelKind {
        ModelKind::InvertedPendulum
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        next[0] = x[0] + x[1] * self.dt;
        next[1] = x[1] + ((x[0].sin() + u[0]) + dist(d, 0)) * self.dt;
    }

    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval> {
        vec![
            x[0] + x[1].scale(self.dt),
            x[1] + ((x[0].sin() + u[0]) + dist_interval(d, 0)).scale(self.dt),
        ]
    }

    fn control_affine(&self, x: &[f64]) -> Option<ControlAffine> {
        Some(ControlAffine {
            drift: vec![x[1], x[0].sin()],
            input: vec![0.0, 1.0],
            control_dim: 1,
        })
    }
}

/// Discrete-time linear map `x' = A x + B u + E d`, matrices row-major.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl Dynamics for LinearDynamics {
    fn kind(&self) -> ModelKind {
        ModelKind::Linear
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for j in 0..self.n {
                s += self.a[i * self.n + j] * x[j];
            }
            for j in 0..self.m {
                s += self.b[i * self.m + j] * u[j];
            }
            for j in 0..self.k {
                s += self.e[i * self.k + j] * d[j];
            }
            next[i] = s;
        }
    }

    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval> {
        (0..self.n)
            .map(|i| {
                let mut s = Interval::point(0.0);
                for j in 0..self.n {
                    s = s + x[j].scale(self.a[i * self.n + j]);
                }
                for j in 0..self.m {
                    s = s + u[j].scale(self.b[i * self.m + j]);
                }
                for j in 0..self.k {
                    s = s + d[j].scale(self.e[i * self.k + j]);
                }
                s
            })
            .collect()
    }

    fn as_linear(&self) -> Option<&LinearDynamics> {
        Some(self)
    }
}

type StepFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
type EnclosureFn = dyn Fn(&[Interval], &[Interval], &[Interval]) -> Vec<Interval> + Send + Sync;

/// User-supplied map. Without an enclosure, [`Dynamics::interval_step`]
/// returns the whole space, which is sound but useless for reachability.
#[derive(Clone)]
pub struct CustomDynamics {
    pub state_dim: usize,
    pub step: Arc<StepFn>,
    pub enclosure: Option<Arc<EnclosureFn>>,
}

impl fmt::Debug for CustomDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDynamics")
            .field("state_dim", &self.state_dim)
            .field("has_enclosure", &self.enclosure.is_some())
            .finish()
    }
}

impl Dynamics for CustomDynamics {
    fn kind(&self) -> ModelKind {
        ModelKind::Custom
    }

    fn step(&self, x: &[f64], u: &[f64], d: &[f64], next: &mut [f64]) {
        (self.step)(x, u, d, next)
    }

    fn interval_step(&self, x: &[Interval], u: &[Interval], d: &[Interval]) -> Vec<Interval> {
        match &self.enclosure {
            Some(f) => f(x, u, d),
            None => vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY); self.state_dim],
        }
    }
}

pub fn make_double_integrator(u_max: f64, d_max: f64, dt: f64) -> Result<SystemModel> {
    positive("u_max", u_max)?;
    positive("dt", dt)?;
    SystemModel::new(
        "double_integrator",
        Arc::new(DoubleIntegrator { dt }),
        2,
        dt,
        IntervalBox::symmetric(&[u_max])?,
        disturbance_box(d_max, 1)?,
    )
}

pub fn make_planar_double_integrator(a_max: f64, d_max: f64, dt: f64) -> Result<SystemModel> {
    positive("a_max", a_max)?;
    positive("dt", dt)?;
    SystemModel::new(
        "planar_double_integrator",
        Arc::new(PlanarDoubleIntegrator { dt }),
        4,
        dt,
        IntervalBox::symmetric(&[a_max, a_max])?,
        disturbance_box(d_max, 2)?,
    )
}

pub fn make_dubins_car(speed: f64, omega_max: f64, d_max: f64, dt: f64) -> Result<SystemModel> {
    positive("speed", speed)?;
    positive("omega_max", omega_max)?;
    positive("dt", dt)?;
    SystemModel::new(
        "dubins_car",
        Arc::new(DubinsCar { speed, dt }),
        3,
        dt,
        IntervalBox::symmetric(&[omega_max])?,
        disturbance_box(d_max, 1)?,
    )
}

pub fn make_inverted_pendulum(torque_max: f64, d_max: f64, dt: f64) -> Result<SystemModel> {
    positive("torque_max", torque_max)?;
    positive("dt", dt)?;
    SystemModel::new(
        "inverted_pendulum",
        Arc::new(InvertedPendulum { dt }),
        2,
        dt,
        IntervalBox::symmetric(&[torque_max])?,
        disturbance_box(d_max, 1)?,
    )
}

/// `x' = A x + B u + E d` with `A: n×n`, `B: n×m`, `E: n×k`, all row-major.
/// `dt` is informational; the map is already discrete.
pub fn make_linear(
    a: Vec<f64>,
    b: Vec<f64>,
    e: Vec<f64>,
    dt: f64,
    control_set: IntervalBox,
    disturbance_set: IntervalBox,
) -> Result<SystemModel> {
    let n = (a.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != a.len() {
        return Err(Error::InvalidArgument(format!("A has {} entries, not a square matrix", a.len())));
    }
    let m = control_set.dim();
    let k = disturbance_set.dim();
    check_dim("B entries", n * m, b.len())?;
    check_dim("E entries", n * k, e.len())?;
    SystemModel::new(
        "linear",
        Arc::new(LinearDynamics { a, b, e, n, m, k }),
        n,
        dt,
        control_set,
        disturbance_set,
    )
}

/// Regular lattice over a box, first coordinate varying slowest.
///
/// Endpoints are hit exactly; a count of one yields the box center.
pub fn discretize_box(b: &IntervalBox, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_dim("lattice counts", b.dim(), counts.len())?;
    if b.is_empty() {
        return Err(Error::InvalidArgument("cannot discretize an empty box".into()));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("lattice count for dimension {i} is zero")));
    }
    let axes: Vec<Vec<f64>> = (0..b.dim())
        .map(|i| {
            let iv = b.interval(i);
            if !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(Error::InvalidArgument(format!("dimension {i} is unbounded")));
            }
            Ok(lattice_axis(iv.lo, iv.hi, counts[i]))
        })
        .collect::<Result<_>>()?;
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; b.dim()];
    for _ in 0..total {
        points.push(idx.iter().enumerate().map(|(i, &k)| axes[i][k]).collect());
        for i in (0..idx.len()).rev() {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(points)
}

pub(crate) fn lattice_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![Interval::new(lo, hi).mid()];
    }
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| if k + 1 == count { hi } else { lo + (hi - lo) * (k as f64 / last) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_integrator_steps() {
        let m = make_double_integrator(1.0, 0.0, 0.1).unwrap();
        assert_eq!(m.step(&[1.0, 0.0], &[0.0], &[]).unwrap(), vec![1.0, 0.0]);
        let next = m.step(&[0.0, 1.0], &[1.0], &[]).unwrap();
        assert!((next[0] - 0.1).abs() < 1e-15 && (next[1] - 1.1).abs() < 1e-15);
        assert_eq!(m.step(&[0.0, -1.0], &[1.0], &[]).unwrap()[1], -1.0 + 0.1);
        assert_eq!(m.disturbance_dim(), 0);
        assert_eq!(make_double_integrator(1.0, 0.2, 0.1).unwrap().disturbance_dim(), 1);
    }

    #[test]
    fn step_rejects_inadmissible_inputs() {
        let m = make_double_integrator(1.0, 0.2, 0.1).unwrap();
        assert!(matches!(m.step(&[0.0, 0.0], &[1.5], &[0.0]), Err(Error::OutOfBounds { what: "control", .. })));
        assert!(matches!(m.step(&[0.0, 0.0], &[0.0], &[0.3]), Err(Error::OutOfBounds { .. })));
        assert!(matches!(m.step(&[0.0], &[0.0], &[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constructors_validate() {
        assert!(make_double_integrator(0.0, 0.0, 0.1).is_err());
        assert!(make_double_integrator(1.0, 0.0, 0.0).is_err());
        assert!(make_double_integrator(1.0, -0.1, 0.1).is_err());
        assert!(make_dubins_car(0.0, 1.0, 0.0, 0.1).is_err());
        assert!(make_inverted_pendulum(-1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn double_integrator_interval_step_is_exact_for_linear_map() {
        let dt = 0.1;
        let m = make_double_integrator(1.0, 0.1, dt).unwrap();
        let x = IntervalBox::new(vec![0.0, 1.0], vec![0.1, 1.0]).unwrap();
        let out = m.interval_step_point(&x, &[0.0]);
        assert!((out.lower()[0] - 0.1).abs() < 1e-15 && (out.upper()[0] - 0.2).abs() < 1e-15);
        assert!((out.lower()[1] - (1.0 - 0.1 * dt)).abs() < 1e-15);
        assert!((out.upper()[1] - (1.0 + 0.1 * dt)).abs() < 1e-15);
    }

    #[test]
    fn dubins_and_pendulum_hand_steps() {
        let car = make_dubins_car(1.0, 1.0, 0.0, 0.1).unwrap();
        let next = car.step(&[0.0, 0.0, 0.0], &[0.0], &[]).unwrap();
        assert_eq!(next, vec![0.1, 0.0, 0.0]);
        let up = car.step(&[0.0, 0.0, std::f64::consts::FRAC_PI_2], &[0.0], &[]).unwrap();
        assert!(up[0].abs() < 1e-16 && (up[1] - 0.1).abs() < 1e-16);

        let pend = make_inverted_pendulum(1.0, 0.0, 0.1).unwrap();
        assert_eq!(pend.step(&[0.0, 0.0], &[0.0], &[]).unwrap(), vec![0.0, 0.0]);
        let fall = pend.step(&[std::f64::consts::FRAC_PI_2, 0.0], &[0.0], &[]).unwrap();
        assert!((fall[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn lattice_examples() {
        let b = IntervalBox::new(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(discretize_box(&b, &[3]).unwrap(), vec![vec![-1.0], vec![0.0], vec![1.0]]);
        assert_eq!(discretize_box(&b, &[1]).unwrap(), vec![vec![0.0]]);
        let b2 = IntervalBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(
            discretize_box(&b2, &[2, 2]).unwrap(),
            vec![vec![-1.0, 0.0], vec![-1.0, 2.0], vec![1.0, 0.0], vec![1.0, 2.0]]
        );
        assert!(discretize_box(&b, &[0]).is_err());
        assert_eq!(discretize_box(&IntervalBox::zero_dim(), &[]).unwrap(), vec![Vec::<f64>::new()]);
    }

    #[test]
    fn linear_model_shape_checks() {
        let u = IntervalBox::symmetric(&[1.0]).unwrap();
        let d = IntervalBox::symmetric(&[0.1]).unwrap();
        assert!(make_linear(vec![1.0, 0.0, 0.0], vec![1.0], vec![1.0], 1.0, u.clone(), d.clone()).is_err());
        let m = make_linear(vec![1.2], vec![1.0], vec![1.0], 1.0, u, d).unwrap();
        let next = m.step(&[1.0], &[-0.5], &[0.1]).unwrap();
        assert!((next[0] - 0.8).abs() < 1e-15);
    }
}
