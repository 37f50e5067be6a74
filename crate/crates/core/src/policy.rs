//! State-feedback policies and their enclosures over state boxes.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::SystemModel;
use crate::interval::{Interval, IntervalBox};

/// Relative pad applied to Lipschitz-based control enclosures to absorb rounding.
const ENCLOSURE_PAD: f64 = 1e-12;

pub trait Policy: Send + Sync + fmt::Debug {
    fn control(&self, x: &[f64]) -> Vec<f64>;

    /// Row-major `control_dim × state_dim` bounds on `|∂u_i/∂x_j|`, if the policy is Lipschitz.
    fn lipschitz(&self) -> Option<Vec<f64>> {
        None
    }

    /// A box containing `control(x)` for every `x` in `states`.
    ///
    /// A point box maps to its exact control. Otherwise the control at the
    /// center is widened by the Lipschitz bound times the box radius and
    /// intersected with the control set; without a Lipschitz bound the whole
    /// control set is returned.
    fn control_enclosure(&self, model: &SystemModel, states: &IntervalBox) -> IntervalBox {
        let admissible = model.control_set();
        if states.is_empty() {
            return IntervalBox::empty(model.control_dim());
        }
        if states.is_point() {
            return IntervalBox::point(&self.control(states.lower()));
        }
        let Some(lip) = self.lipschitz() else {
            return admissible.clone();
        };
        let center = states.center();
        let radius = states.radius();
        let u = self.control(&center);
        let n = center.len();
        let spread: Vec<Interval> = u
            .iter()
            .enumerate()
            .map(|(i, ui)| {
                let mut r = 0.0;
                for j in 0..n {
                    let l = lip[i * n + j];
                    if l != 0.0 {
                        r += l * radius[j];
                    }
                }
                let r = r + ENCLOSURE_PAD * (1.0 + ui.abs());
                Interval::new(ui - r, ui + r)
            })
            .collect();
        let enclosure = IntervalBox::from_intervals(&spread).intersect(admissible);
        if enclosure.is_empty() {
            admissible.clone()
        } else {
            enclosure
        }
    }

    /// Enclosure of the closed-loop successors `f(x, control(x), d)`.
    fn closed_loop_step(&self, model: &SystemModel, states: &IntervalBox, disturbances: &IntervalBox) -> IntervalBox {
        model.interval_step(states, &self.control_enclosure(model, states), disturbances)
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn control(&self, x: &[f64]) -> Vec<f64> {
        (**self).control(x)
    }
    fn lipschitz(&self) -> Option<Vec<f64>> {
        (**self).lipschitz()
    }
    fn control_enclosure(&self, model: &SystemModel, states: &IntervalBox) -> IntervalBox {
        (**self).control_enclosure(model, states)
    }
    fn closed_loop_step(&self, model: &SystemModel, states: &IntervalBox, disturbances: &IntervalBox) -> IntervalBox {
        (**self).closed_loop_step(model, states, disturbances)
    }
}

/// A possibly stateful, possibly time-varying policy that proposes controls.
/// Task policies know nothing about safety.
pub trait TaskPolicy: Send + fmt::Debug {
    fn control(&mut self, t: usize, x: &[f64]) -> Vec<f64>;

    /// Re-seed any internal randomness before an episode.
    fn reset(&mut self, _seed: u64) {}
}

/// Any state-feedback policy used as a task policy.
#[derive(Debug, Clone)]
pub struct FeedbackTask<P>(pub P);

impl<P: Policy> TaskPolicy for FeedbackTask<P> {
    fn control(&mut self, _t: usize, x: &[f64]) -> Vec<f64> {
        self.0.control(x)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub u: Vec<f64>,
}

impl Policy for ConstantPolicy {
    fn control(&self, _x: &[f64]) -> Vec<f64> {
        self.u.clone()
    }

    fn control_enclosure(&self, _model: &SystemModel, _states: &IntervalBox) -> IntervalBox {
        IntervalBox::point(&self.u)
    }
}

/// `clamp(u_ref + K (x − x_ref))` into a control box.
#[derive(Debug, Clone)]
pub struct SaturatedLinearPolicy {
    /// Row-major `control_dim × state_dim`.
    pub gain: Vec<f64>,
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub bounds: IntervalBox,
}

impl Policy for SaturatedLinearPolicy {
    fn control(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let raw: Vec<f64> = self
            .u_ref
            .iter()
            .enumerate()
            .map(|(i, u0)| {
                u0 + (0..n)
                    .map(|j| self.gain[i * n + j] * (x[j] - self.x_ref[j]))
                    .sum::<f64>()
            })
            .collect();
        self.bounds.clamp(&raw)
    }

    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(self.gain.iter().map(|k| k.abs()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_double_integrator;

    #[test]
    fn lipschitz_enclosure_contains_samples() {
        let model = make_double_integrator(1.0, 0.0, 0.1).unwrap();
        let policy = SaturatedLinearPolicy {
            gain: vec![-0.5, -1.0],
            x_ref: vec![1.0, 0.0],
            u_ref: vec![0.0],
            bounds: model.control_set().clone(),
        };
        let states = IntervalBox::new(vec![0.5, -0.2], vec![0.9, 0.4]).unwrap();
        let enc = policy.control_enclosure(&model, &states);
        for i in 0..=10 {
            for j in 0..=10 {
                let x = [0.5 + 0.04 * i as f64, -0.2 + 0.06 * j as f64];
                assert!(enc.contains(&policy.control(&x)));
            }
        }
    }

    #[test]
    fn enclosure_without_lipschitz_is_whole_control_set() {
        #[derive(Debug)]
        struct Bang;
        impl Policy for Bang {
            fn control(&self, x: &[f64]) -> Vec<f64> {
                vec![if x[1] > 0.0 { -1.0 } else { 1.0 }]
            }
        }
        let model = make_double_integrator(1.0, 0.0, 0.1).unwrap();
        let states = IntervalBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(Bang.control_enclosure(&model, &states), *model.control_set());
        assert_eq!(
            Bang.control_enclosure(&model, &IntervalBox::point(&[0.0, 1.0])),
            IntervalBox::point(&[-1.0])
        );
    }
}
