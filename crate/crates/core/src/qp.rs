//! Small dense convex quadratic programs.
//!
//! [`solve_qp`] is the Goldfarb–Idnani dual active-set method for
//! `min ½ zᵀ G z + cᵀ z  s.t.  A z ≥ b` with `G` positive definite. It starts
//! from the unconstrained minimizer and adds the most violated constraint
//! (lowest index on ties) until all hold, dropping constraints whose
//! multipliers would turn negative. Pivoting is deterministic.
//!
//! [`project_box_halfspace`] solves the single-halfspace, box-bounded
//! projection exactly by enumerating active sets.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Indices of the constraints active at the solution.
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    /// One constraint per row: `constraints.row(i) · z ≥ bounds[i]`.
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

impl QuadraticProgram {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }

    /// Largest constraint violation at `z` (zero when feasible).
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        let s = &self.constraints * z - &self.bounds;
        s.iter().fold(0.0, |acc, v| acc.max(-v))
    }
}

/// Relative feasibility tolerance on each constraint.
const FEAS_TOL: f64 = 1e-11;

pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    let n = qp.hessian.nrows();
    let m = qp.constraints.nrows();
    assert_eq!(qp.hessian.ncols(), n);
    assert_eq!(qp.linear.len(), n);
    assert_eq!(qp.constraints.ncols(), n);
    assert_eq!(qp.bounds.len(), m);

    let chol = qp.hessian.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let ginv = chol.inverse();
    let mut z = -(&ginv * &qp.linear);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();

    let row = |i: usize| -> DVector<f64> { qp.constraints.row(i).transpose() };
    let slack = |z: &DVector<f64>, i: usize| -> f64 { qp.constraints.row(i).dot(&z.transpose()) - qp.bounds[i] };
    let tol = |i: usize, z: &DVector<f64>| -> f64 {
        FEAS_TOL * (1.0 + qp.bounds[i].abs() + qp.constraints.row(i).abs().dot(&z.abs().transpose()))
    };

    let limit = 50 * (n + m + 1);
    for iteration in 0..limit {
        // Most violated inactive constraint.
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let s = slack(&z, i);
            if s < -tol(i, &z) && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else {
            return Ok(QpSolution {
                objective: qp.objective(&z),
                z,
                active,
                multipliers: u,
                iterations: iteration,
            });
        };
        let np = row(p);
        let mut u_plus = u.clone();
        u_plus.push(0.0);
        loop {
            let (step, dual) = directions(&ginv, &qp.constraints, &active, &np).ok_or(QpError::Infeasible)?;
            let q = active.len();
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..q {
                if dual[j] > 1e-12 {
                    let ratio = u_plus[j] / dual[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            let curvature = step.dot(&np);
            let scale = np.dot(&(&ginv * &np));
            let t2 = if curvature > 1e-12 * scale {
                -slack(&z, p) / curvature
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(QpError::Infeasible);
            }
            for j in 0..q {
                u_plus[j] -= t * dual[j];
            }
            u_plus[q] += t;
            if t2.is_finite() {
                z += &step * t;
            }
            if t2 <= t1 {
                active.push(p);
                u = u_plus;
                break;
            }
            let k = drop.expect("partial step has a blocking constraint");
            active.remove(k);
            u_plus.remove(k);
        }
    }
    Err(QpError::IterationLimit)
}

/// Primal step `H n` and dual step `N* n` for the current active set, where
/// `N*` is the `G⁻¹`-weighted pseudo-inverse of the active normals and
/// `H = G⁻¹ (I − N N*)` the reduced inverse Hessian.
fn directions(
    ginv: &DMatrix<f64>,
    constraints: &DMatrix<f64>,
    active: &[usize],
    np: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = ginv.nrows();
    if active.is_empty() {
        return Some((ginv * np, DVector::zeros(0)));
    }
    let q = active.len();
    let mut normals = DMatrix::zeros(n, q);
    for (j, &i) in active.iter().enumerate() {
        normals.set_column(j, &constraints.row(i).transpose());
    }
    let gn = ginv * &normals;
    let gram = normals.transpose() * &gn;
    let dual = gram.lu().solve(&(gn.transpose() * np))?;
    let step = ginv * np - &gn * &dual;
    Some((step, dual))
}

/// Exact `argmin ‖u − target‖²` subject to `a · u ≥ c` and `lower ≤ u ≤ upper`.
///
/// Enumerates, for every assignment of each coordinate to free / lower / upper
/// and the halfspace to inactive / active, the corresponding stationary point,
/// and keeps the closest feasible one (first found on ties). Active-halfspace
/// candidates aim for `a · u ≥ c + margin` so that rounding cannot leave them
/// on the wrong side; `feasible(u)` is the caller's exact acceptance test.
/// Returns `None` when no candidate is feasible.
pub fn project_box_halfspace(
    target: &[f64],
    a: &[f64],
    c: f64,
    margin: f64,
    lower: &[f64],
    upper: &[f64],
    feasible: impl Fn(&[f64]) -> bool,
) -> Option<Vec<f64>> {
    let m = target.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(m as u32);
    let mut u = vec![0.0; m];
    for code in 0..total {
        let mut fixed = vec![false; m];
        let mut rest = code;
        for j in 0..m {
            match rest % 3 {
                0 => u[j] = target[j],
                1 => {
                    u[j] = lower[j];
                    fixed[j] = true;
                }
                _ => {
                    u[j] = upper[j];
                    fixed[j] = true;
                }
            }
            rest /= 3;
        }
        for halfspace_active in [false, true] {
            let mut cand = u.clone();
            if halfspace_active {
                let norm2: f64 = (0..m).filter(|&j| !fixed[j]).map(|j| a[j] * a[j]).sum();
                if norm2 == 0.0 {
                    continue;
                }
                let current: f64 = (0..m).map(|j| a[j] * cand[j]).sum();
                let mu = (c + margin - current) / norm2;
                for j in 0..m {
                    if !fixed[j] {
                        cand[j] += mu * a[j];
                    }
                }
            }
            let in_box = (0..m).all(|j| lower[j] <= cand[j] && cand[j] <= upper[j]);
            if !in_box || !feasible(&cand) {
                continue;
            }
            let dist: f64 = cand.iter().zip(target).map(|(x, t)| (x - t) * (x - t)).sum();
            if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                best = Some((dist, cand));
            }
        }
    }
    best.map(|(_, u)| u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(h: &[f64], c: &[f64], a: &[f64], b: &[f64]) -> QuadraticProgram {
        let n = c.len();
        QuadraticProgram {
            hessian: DMatrix::from_row_slice(n, n, h),
            linear: DVector::from_row_slice(c),
            constraints: DMatrix::from_row_slice(b.len(), n, a),
            bounds: DVector::from_row_slice(b),
        }
    }

    #[test]
    fn unconstrained_minimum_when_feasible() {
        let p = qp(&[2.0, 0.0, 0.0, 2.0], &[-2.0, -4.0], &[1.0, 0.0], &[-10.0]);
        let s = solve_qp(&p).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-14 && (s.z[1] - 2.0).abs() < 1e-14);
        assert!(s.active.is_empty());
    }

    #[test]
    fn textbook_problem() {
        // min ½z'Gz + c'z with the classic quadprog example.
        let p = qp(
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[0.0, -5.0, 0.0],
            &[-4.0, -3.0, 0.0, 2.0, 1.0, 0.0, 0.0, -2.0, 1.0],
            &[-8.0, 2.0, 0.0],
        );
        let s = solve_qp(&p).unwrap();
        let expect = [0.4761904761904762, 1.0476190476190477, 2.0952380952380953];
        for i in 0..3 {
            assert!((s.z[i] - expect[i]).abs() < 1e-12, "{:?}", s.z);
        }
        assert!((s.objective - (-2.380952380952381)).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let p = qp(&[1.0], &[0.0], &[1.0, -1.0], &[1.0, 0.0]);
        assert_eq!(solve_qp(&p).unwrap_err(), QpError::Infeasible);
    }

    #[test]
    fn projection_onto_halfspace_and_box() {
        // a·u ≥ c with a = 2, c = 1: u ≥ 0.5.
        let u = project_box_halfspace(&[-0.3], &[2.0], 1.0, 0.0, &[-1.0], &[1.0], |u| 2.0 * u[0] >= 1.0).unwrap();
        assert_eq!(u, vec![0.5]);
        assert!(project_box_halfspace(&[-0.3], &[2.0], 3.0, 0.0, &[-1.0], &[1.0], |u| 2.0 * u[0] >= 3.0).is_none());
        // Target already feasible.
        assert_eq!(
            project_box_halfspace(&[0.7], &[2.0], 1.0, 0.0, &[-1.0], &[1.0], |u| 2.0 * u[0] >= 1.0).unwrap(),
            vec![0.7]
        );
    }
}
