//! Control barrier function filters.
//!
//! With a barrier `h` and an extended class-K function `α`, a control `u` at
//! state `x` satisfies the decrease condition when
//! `∇h(x)ᵀ (f̄(x) + ḡ(x) u) + α(h(x)) ≥ 0`. The QP filter returns the admissible
//! control closest to the task control that satisfies it. The condition is
//! imposed once per control cycle, so between cycles `h` can dip below zero by
//! an amount of order `Δt`; see [`double_integrator_slack_bound`].

use std::fmt;
use std::sync::Arc;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::filter::{Intervention, SafetyFilter};
use crate::qp::project_box_halfspace;

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub enum ClassK {
    /// `α(a) = κ a`.
    Linear(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ClassK {
    pub fn eval(&self, a: f64) -> f64 {
        match self {
            Self::Linear(k) => k * a,
            Self::Custom(f) => f(a),
        }
    }
}

impl fmt::Debug for ClassK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(k) => write!(f, "Linear({k})"),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Clone)]
pub struct BarrierFunction {
    h: Arc<ScalarFn>,
    grad: Arc<GradientFn>,
    alpha: ClassK,
}

impl fmt::Debug for BarrierFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierFunction").field("alpha", &self.alpha).finish_non_exhaustive()
    }
}

impl BarrierFunction {
    pub fn new(
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        alpha: ClassK,
    ) -> Self {
        Self {
            h: Arc::new(h),
            grad: Arc::new(grad),
            alpha,
        }
    }

    pub fn h(&self, x: &[f64]) -> f64 {
        (self.h)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    pub fn alpha(&self, a: f64) -> f64 {
        self.alpha.eval(a)
    }

    pub fn class_k(&self) -> &ClassK {
        &self.alpha
    }

    /// Checks `α(0) = 0` and strict increase on the samples.
    pub fn check_class_k(&self, samples: &[f64]) -> Result<()> {
        if self.alpha(0.0) != 0.0 {
            return Err(Error::Rejected(format!("alpha(0) = {} must be zero", self.alpha(0.0))));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        for w in sorted.windows(2) {
            if !(self.alpha(w[0]) < self.alpha(w[1])) {
                return Err(Error::Rejected(format!(
                    "alpha is not strictly increasing between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Checks `α(a) < a / Δt` on the positive samples, the condition under which
    /// the discrete-time check keeps the fallback admissible.
    pub fn check_sampling_condition(&self, dt: f64, samples: &[f64]) -> Result<()> {
        for &a in samples.iter().filter(|a| **a > 0.0) {
            if !(self.alpha(a) < a / dt) {
                return Err(Error::Rejected(format!(
                    "alpha({a}) = {} is not below a/dt = {}",
                    self.alpha(a),
                    a / dt
                )));
            }
        }
        Ok(())
    }
}

/// Wall barrier for the double integrator: position minus the standoff and
/// the braking distance at full deceleration,
/// `h(p, v) = p − s − max(0, −v)² / (2 u_max)`, with `α(a) = κ a`.
pub fn double_integrator_barrier(u_max: f64, kappa: f64, standoff: f64) -> Result<BarrierFunction> {
    if !(u_max > 0.0) {
        return Err(Error::InvalidArgument(format!("u_max must be positive, got {u_max}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    Ok(BarrierFunction::new(
        move |x| {
            let closing = (-x[1]).max(0.0);
            x[0] - standoff - closing * closing / (2.0 * u_max)
        },
        move |x| vec![1.0, (-x[1]).max(0.0) / u_max],
        ClassK::Linear(kappa),
    ))
}

/// The stock wall barrier with `κ = 0.5 / Δt` and no standoff.
pub fn builtin_barrier_double_integrator(u_max: f64, dt: f64) -> Result<BarrierFunction> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    double_integrator_barrier(u_max, 0.5 / dt, 0.0)
}

/// Upper bound on how far `h` of [`double_integrator_barrier`] can drop below
/// zero on the filtered Euler double integrator without disturbance, for
/// speeds up to `v_max`: one cycle of braking overshoot `v_max Δt / 2` plus a
/// second-order term `u_max Δt²`.
pub fn double_integrator_slack_bound(v_max: f64, u_max: f64, dt: f64) -> f64 {
    0.5 * v_max * dt + u_max * dt * dt
}

/// `∇h(x)ᵀ (f̄(x) + ḡ(x) u) + α(h(x))`.
pub fn cbf_constraint(model: &SystemModel, b: &BarrierFunction, x: &[f64], u: &[f64]) -> Result<f64> {
    let affine = model.control_affine(x)?;
    let grad = b.grad(x);
    let rate = affine.rate(u);
    Ok(grad.iter().zip(&rate).map(|(g, r)| g * r).sum::<f64>() + b.alpha(b.h(x)))
}

/// The decrease condition at one state as `a · u + c0 ≥ 0`.
struct Linearized {
    a: Vec<f64>,
    c0: f64,
    h: f64,
}

impl Linearized {
    fn value(&self, u: &[f64]) -> f64 {
        self.a.iter().zip(u).map(|(a, u)| a * u).sum::<f64>() + self.c0
    }
}

/// QP safety filter: `min ½‖u − u_task‖²` subject to the decrease condition and
/// the control box. Infeasible problems (including states with `h < 0`, where
/// the barrier certifies nothing) fall back to the control maximizing `ḣ`.
#[derive(Clone, Debug)]
pub struct CbfQpFilter {
    model: SystemModel,
    barrier: BarrierFunction,
}

pub fn cbf_qp_filter(model: &SystemModel, barrier: BarrierFunction) -> Result<CbfQpFilter> {
    if !model.is_control_affine() {
        return Err(Error::NotControlAffine(model.name().to_owned()));
    }
    Ok(CbfQpFilter {
        model: model.clone(),
        barrier,
    })
}

impl CbfQpFilter {
    pub fn barrier(&self) -> &BarrierFunction {
        &self.barrier
    }

    fn linearize(&self, x: &[f64]) -> Linearized {
        let affine = self
            .model
            .control_affine(x)
            .expect("model checked control-affine at construction");
        let grad = self.barrier.grad(x);
        let h = self.barrier.h(x);
        let drift: f64 = grad.iter().zip(&affine.drift).map(|(g, f)| g * f).sum();
        Linearized {
            a: affine.project_input(&grad),
            c0: drift + self.barrier.alpha(h),
            h,
        }
    }

    /// Exact QP solution, or `None` if the problem is infeasible or `h(x) < 0`.
    pub fn solve_qp(&self, x: &[f64], u_task: &[f64]) -> Option<Vec<f64>> {
        let lin = self.linearize(x);
        if !(lin.h >= 0.0) {
            return None;
        }
        let set = self.model.control_set();
        let c = -lin.c0;
        let bound: f64 = lin
            .a
            .iter()
            .zip(set.lower().iter().zip(set.upper()))
            .map(|(a, (l, u))| a.abs() * l.abs().max(u.abs()))
            .sum();
        let margin = 1e-12 * (1.0 + c.abs() + bound);
        project_box_halfspace(u_task, &lin.a, c, margin, set.lower(), set.upper(), |u| lin.value(u) >= 0.0)
    }
}

impl SafetyFilter for CbfQpFilter {
    fn name(&self) -> &str {
        "cbf_qp"
    }

    fn monitor(&self, x: &[f64], u: &[f64]) -> f64 {
        let lin = self.linearize(x);
        lin.h.min(lin.value(u))
    }

    /// `argmax_u ḣ(x, u)` over the control box; coordinates that do not
    /// affect `ḣ` take the box center.
    fn fallback(&self, x: &[f64]) -> Vec<f64> {
        let lin = self.linearize(x);
        let set = self.model.control_set();
        lin.a
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if *a > 0.0 {
                    set.upper()[j]
                } else if *a < 0.0 {
                    set.lower()[j]
                } else {
                    set.interval(j).mid()
                }
            })
            .collect()
    }

    fn intervene(&mut self, x: &[f64], u: &[f64]) -> Intervention {
        match self.solve_qp(x, u) {
            Some(control) => Intervention {
                control,
                degraded: false,
            },
            None => Intervention {
                control: self.fallback(x),
                degraded: true,
            },
        }
    }

    fn clone_box(&self) -> Box<dyn SafetyFilter> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_double_integrator;

    #[test]
    fn wall_barrier_values() {
        let b = builtin_barrier_double_integrator(1.0, 0.05).unwrap();
        assert_eq!(b.h(&[0.7, 0.3]), 0.7);
        assert_eq!(b.h(&[0.5, -1.0]), 0.0);
        assert_eq!(b.grad(&[0.5, -1.0]), vec![1.0, 1.0]);
        assert_eq!(b.grad(&[0.5, 2.0]), vec![1.0, 0.0]);
        b.check_class_k(&[-1.0, -0.1, 0.0, 0.3, 2.0]).unwrap();
        b.check_sampling_condition(0.05, &[1e-6, 0.1, 1.0, 10.0]).unwrap();
        let aggressive = double_integrator_barrier(1.0, 1.0 / 0.05, 0.0).unwrap();
        assert!(aggressive.check_sampling_condition(0.05, &[0.5]).is_err());
    }

    #[test]
    fn fallback_maximizes_barrier_rate() {
        let model = make_double_integrator(1.0, 0.0, 0.05).unwrap();
        let f = cbf_qp_filter(&model, builtin_barrier_double_integrator(1.0, 0.05).unwrap()).unwrap();
        assert_eq!(f.fallback(&[1.0, -1.0]), vec![1.0]);
        // Moving away from the wall: the rate does not depend on u.
        assert_eq!(f.fallback(&[1.0, 1.0]), vec![0.0]);
    }

    #[test]
    fn qp_projects_onto_decrease_condition() {
        let dt = 0.05;
        let model = make_double_integrator(1.0, 0.0, dt).unwrap();
        let b = builtin_barrier_double_integrator(1.0, dt).unwrap();
        let mut f = cbf_qp_filter(&model, b.clone()).unwrap();
        // h = 0.6 - 0.5 = 0.1, condition: -v + |v| u + κ h ≥ 0 → u ≥ 1 - 0.1κ = 0.
        let x = [0.6, -1.0];
        let out = f.intervene(&x, &[-1.0]);
        assert!(!out.degraded);
        assert!(out.control[0].abs() < 1e-10, "{:?}", out.control);
        assert!(cbf_constraint(&model, &b, &x, &out.control).unwrap() >= 0.0);
        let keep = f.intervene(&x, &[0.5]);
        assert_eq!(keep.control, vec![0.5]);
    }
}
