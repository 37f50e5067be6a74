//! Margin functions: `g(x) < 0` exactly on the failure set.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interval::IntervalBox;

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type BoundFn = dyn Fn(&IntervalBox) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum MarginFunction {
    /// `normalᵀ x − offset`; a signed distance when the normal has unit length.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `‖x − center‖ − radius` over the leading `center.len()` coordinates.
    KeepOutBall { center: Vec<f64>, radius: f64 },
    /// Pointwise minimum: the failure set is the union of the members' failure sets.
    Min(Vec<MarginFunction>),
    Custom {
        eval: Arc<ScalarFn>,
        gradient: Option<Arc<GradientFn>>,
        /// Lower bound of `eval` over a box. Missing means `-∞`.
        lower_bound: Option<Arc<BoundFn>>,
    },
}

impl fmt::Debug for MarginFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Halfspace { normal, offset } => f
                .debug_struct("Halfspace")
                .field("normal", normal)
                .field("offset", offset)
                .finish(),
            Self::KeepOutBall { center, radius } => f
                .debug_struct("KeepOutBall")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            Self::Min(parts) => f.debug_tuple("Min").field(parts).finish(),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

pub fn margin_halfspace(normal: Vec<f64>, offset: f64) -> Result<MarginFunction> {
    if normal.is_empty() || normal.iter().all(|n| *n == 0.0) {
        return Err(Error::InvalidArgument("halfspace normal must be nonzero".into()));
    }
    if normal.iter().any(|n| !n.is_finite()) || !offset.is_finite() {
        return Err(Error::InvalidArgument("halfspace normal and offset must be finite".into()));
    }
    Ok(MarginFunction::Halfspace { normal, offset })
}

pub fn margin_keepout_ball(center: Vec<f64>, radius: f64) -> Result<MarginFunction> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
    }
    if center.is_empty() {
        return Err(Error::InvalidArgument("ball center is empty".into()));
    }
    Ok(MarginFunction::KeepOutBall { center, radius })
}

pub fn margin_min(parts: Vec<MarginFunction>) -> Result<MarginFunction> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("minimum of zero margin functions".into()));
    }
    Ok(MarginFunction::Min(parts))
}

/// Keep-in box on the leading coordinates: negative outside `lower..upper`.
/// Infinite bounds are skipped.
pub fn margin_keep_in_box(lower: &[f64], upper: &[f64], state_dim: usize) -> Result<MarginFunction> {
    if lower.len() != upper.len() || lower.len() > state_dim {
        return Err(Error::InvalidArgument("keep-in box bounds do not match the state".into()));
    }
    let mut parts = Vec::new();
    for i in 0..lower.len() {
        let mut n = vec![0.0; state_dim];
        if lower[i].is_finite() {
            n[i] = 1.0;
            parts.push(margin_halfspace(n.clone(), lower[i])?);
        }
        if upper[i].is_finite() {
            n[i] = -1.0;
            parts.push(margin_halfspace(n, -upper[i])?);
        }
    }
    margin_min(parts)
}

impl MarginFunction {
    pub fn custom(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom {
            eval: Arc::new(eval),
            gradient: None,
            lower_bound: None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Halfspace { normal, offset } => {
                normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() - offset
            }
            Self::KeepOutBall { center, radius } => {
                center
                    .iter()
                    .zip(x)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt()
                    - radius
            }
            Self::Min(parts) => parts.iter().map(|p| p.eval(x)).fold(f64::INFINITY, f64::min),
            Self::Custom { eval, .. } => eval(x),
        }
    }

    pub fn in_failure_set(&self, x: &[f64]) -> bool {
        self.eval(x) < 0.0
    }

    /// Gradient where it exists; for a minimum, the gradient of the first active member.
    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::Halfspace { normal, .. } => {
                let mut g = vec![0.0; x.len()];
                g[..normal.len()].copy_from_slice(normal);
                Some(g)
            }
            Self::KeepOutBall { center, .. } => {
                let dist = center
                    .iter()
                    .zip(x)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                if dist == 0.0 {
                    return None;
                }
                let mut g = vec![0.0; x.len()];
                for (i, c) in center.iter().enumerate() {
                    g[i] = (x[i] - c) / dist;
                }
                Some(g)
            }
            Self::Min(parts) => {
                let (best, _) = parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, p.eval(x)))
                    .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
                parts[best].gradient(x)
            }
            Self::Custom { gradient, .. } => gradient.as_ref().map(|g| g(x)),
        }
    }

    /// A value no larger than `eval` anywhere in the box. Exact for halfspaces and balls.
    pub fn lower_bound(&self, b: &IntervalBox) -> f64 {
        if b.is_empty() {
            return f64::INFINITY;
        }
        match self {
            Self::Halfspace { normal, offset } => {
                normal
                    .iter()
                    .enumerate()
                    .map(|(i, n)| b.interval(i).scale(*n).lo)
                    .sum::<f64>()
                    - offset
            }
            Self::KeepOutBall { center, radius } => {
                center
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let iv = b.interval(i);
                        let gap = if *c < iv.lo {
                            iv.lo - c
                        } else if *c > iv.hi {
                            c - iv.hi
                        } else {
                            0.0
                        };
                        gap * gap
                    })
                    .sum::<f64>()
                    .sqrt()
                    - radius
            }
            Self::Min(parts) => parts.iter().map(|p| p.lower_bound(b)).fold(f64::INFINITY, f64::min),
            Self::Custom { lower_bound, .. } => lower_bound.as_ref().map_or(f64::NEG_INFINITY, |f| f(b)),
        }
    }

    /// True only if no point of the box is in the failure set.
    pub fn box_avoids_failure(&self, b: &IntervalBox) -> bool {
        self.lower_bound(b) >= 0.0
    }

    /// The halfspaces whose intersection is the complement of the failure set,
    /// when the margin is a halfspace or a minimum of halfspaces.
    pub fn halfspaces(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        match self {
            Self::Halfspace { normal, offset } => Some(vec![(normal.clone(), *offset)]),
            Self::Min(parts) => {
                let mut out = Vec::new();
                for p in parts {
                    out.extend(p.halfspaces()?);
                }
                Some(out)
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let wall = margin_halfspace(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(wall.eval(&[-1.0, 5.0]), -1.0);
        let ball = margin_keepout_ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.eval(&[3.0, 4.0]), 4.0);
        let both = margin_min(vec![wall, ball]).unwrap();
        assert_eq!(both.eval(&[3.0, 4.0]), 3.0);
        assert!(margin_halfspace(vec![0.0, 0.0], 1.0).is_err());
        assert!(margin_keepout_ball(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn ball_only_looks_at_leading_coordinates() {
        let ball = margin_keepout_ball(vec![1.0, 1.0], 0.5).unwrap();
        assert_eq!(ball.eval(&[1.0, 1.0, 7.0, -3.0]), -0.5);
        let b = IntervalBox::new(vec![2.0, 1.0, -9.0, -9.0], vec![3.0, 1.0, 9.0, 9.0]).unwrap();
        assert_eq!(ball.lower_bound(&b), 0.5);
    }

    #[test]
    fn lower_bounds_are_attained_on_corners() {
        let g = margin_halfspace(vec![1.0, -2.0], 0.5).unwrap();
        let b = IntervalBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(g.lower_bound(&b), 0.0 - 2.0 - 0.5);
        assert_eq!(g.lower_bound(&b), g.eval(&[0.0, 1.0]));
    }

    #[test]
    fn keep_in_box_halfspaces() {
        let g = margin_keep_in_box(&[-2.0], &[2.0], 1).unwrap();
        assert_eq!(g.eval(&[0.5]), 1.5);
        assert_eq!(g.eval(&[-2.5]), -0.5);
        assert_eq!(g.halfspaces().unwrap().len(), 2);
    }
}
