//! Rigid-tube MPC safety filter for linear models `x' = A x + B u + E d`.
//!
//! Under the feedback `u = û + K (x − x̂)` the tracking error `e = x − x̂`
//! obeys `e' = (A + BK) e + E d`, so after `τ` steps it lies in
//! `E_τ = Σ_{i<τ} (A+BK)^i W` with `W` the box hull of `E 𝒟`. Planning the
//! disturbance-free nominal trajectory against constraints shrunk by `E_τ`
//! (stage halfspaces, terminal box, control box) keeps the true state safe,
//! and the time-shifted plan stays feasible at the next step whatever the
//! disturbance was. Each sum term is hulled separately; hulling the recursion
//! `E_{τ+1} = (A+BK) E_τ ⊕ W` instead would compound wrapping.
//!
//! The filter plans with `x̂₀ = x` and applies the first nominal control. A
//! task control that admits a feasible plan as its first step passes
//! untouched. Otherwise the closest feasible first control is applied, and if
//! there is none the last feasible plan is continued with error feedback.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::SystemModel;
use crate::error::{check_dim, Error, Result};
use crate::filter::{Intervention, SafetyFilter};
use crate::interval::{Interval, IntervalBox};
use crate::margin::MarginFunction;
use crate::qp::{solve_qp, QuadraticProgram};
use crate::rollout::ContainmentReport;

/// Extra tightening on every planned constraint, so that solver tolerance
/// never pushes a plan onto the wrong side of a tightened constraint.
const PLAN_MARGIN: f64 = 1e-9;

/// Weight of the tail controls' pull toward `u_ref`; only there to make the
/// QP strictly convex.
const TAIL_WEIGHT: f64 = 1e-8;

/// Largest power of `A + BK` tried when looking for a contraction.
const STABILITY_POWERS: usize = 200;

/// Per-stage error boxes `E_0 = {0}, ..., E_H` and their images under `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tightening {
    pub error_bounds: Vec<IntervalBox>,
    pub control_offsets: Vec<IntervalBox>,
}

fn mat_box(m: &DMatrix<f64>, b: &IntervalBox) -> IntervalBox {
    let rows: Vec<Interval> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols()).fold(Interval::point(0.0), |acc, j| acc + b.interval(j).scale(m[(i, j)]))
        })
        .collect();
    IntervalBox::from_intervals(&rows)
}

fn box_sum(a: &IntervalBox, b: &IntervalBox) -> IntervalBox {
    let rows: Vec<Interval> = (0..a.dim()).map(|i| a.interval(i) + b.interval(i)).collect();
    IntervalBox::from_intervals(&rows)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Checks that some power of `M` up to [`STABILITY_POWERS`] has induced
/// ∞-norm below one, which implies spectral radius below one.
pub fn check_stable(m: &DMatrix<f64>) -> Result<()> {
    let mut p = m.clone();
    for _ in 0..STABILITY_POWERS {
        if inf_norm(&p) < 1.0 {
            return Ok(());
        }
        p = &p * m;
    }
    Err(Error::Rejected(format!(
        "A + BK is not stable: no power up to {STABILITY_POWERS} contracts in the ∞-norm"
    )))
}

/// Error bounds for the closed-loop error `e' = (A + BK) e + w`, `w ∈ dist_box`.
/// Matrices are row-major; `A: n×n`, `B: n×m`, `K: m×n`.
pub fn compute_tightening(a: &[f64], b: &[f64], k: &[f64], dist_box: &IntervalBox, horizon: usize) -> Result<Tightening> {
    let n = dist_box.dim();
    check_dim("A entries", n * n, a.len())?;
    if n == 0 || b.len() % n != 0 {
        return Err(Error::InvalidArgument("B does not have one row per state".into()));
    }
    let m = b.len() / n;
    check_dim("K entries", m * n, k.len())?;
    let a = DMatrix::from_row_slice(n, n, a);
    let b = DMatrix::from_row_slice(n, m, b);
    let k = DMatrix::from_row_slice(m, n, k);
    let closed = &a + &b * &k;
    check_stable(&closed)?;
    let mut error_bounds = vec![IntervalBox::point(&vec![0.0; n])];
    let mut power = DMatrix::identity(n, n);
    for _ in 0..horizon {
        let term = mat_box(&power, dist_box);
        let next = box_sum(error_bounds.last().expect("nonempty"), &term);
        error_bounds.push(next);
        power = &closed * &power;
    }
    let control_offsets = error_bounds.iter().map(|e| mat_box(&k, e)).collect();
    Ok(Tightening {
        error_bounds,
        control_offsets,
    })
}

/// A nominal plan: `controls[τ]` for `τ < H` and `states[τ]` for `τ ≤ H`.
#[derive(Clone, Debug, PartialEq)]
pub struct NominalPlan {
    pub controls: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct TubeMpcFilter {
    model: SystemModel,
    n: usize,
    m: usize,
    horizon: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    gain: DMatrix<f64>,
    x_ref: Vec<f64>,
    u_ref: Vec<f64>,
    halfspaces: Vec<(Vec<f64>, f64)>,
    tightening: Tightening,
    /// `stage_offsets[τ][i]`: tightened offset of halfspace `i` at stage `τ`.
    stage_offsets: Vec<Vec<f64>>,
    terminal: IntervalBox,
    control_sets: Vec<IntervalBox>,
    /// `A^τ` for `τ ≤ H`.
    powers: Vec<DMatrix<f64>>,
    /// `S_τ` with `x̂_τ = A^τ x + S_τ z`, `z` the stacked controls.
    input_maps: Vec<DMatrix<f64>>,
    cache: Option<(NominalPlan, usize)>,
    name: &'static str,
}

/// Tube MPC filter for a linear model.
///
/// `gain` is the auxiliary feedback `K` (row-major `m×n`), `margin` must be a
/// halfspace or a minimum of halfspaces, `terminal` is the terminal box `Ω`
/// and `(x_ref, u_ref)` an equilibrium about which the terminal law
/// `u = u_ref + K (x − x_ref)` is applied.
#[allow(clippy::too_many_arguments)]
pub fn tube_mpc_filter(
    model: &SystemModel,
    gain: &[f64],
    margin: &MarginFunction,
    terminal: &IntervalBox,
    x_ref: &[f64],
    u_ref: &[f64],
    horizon: usize,
) -> Result<TubeMpcFilter> {
    build(model, gain, margin, terminal, x_ref, u_ref, horizon, true)
}

/// The same planner with no tightening: nominal MPC that trusts the model.
#[allow(clippy::too_many_arguments)]
pub fn nominal_mpc_filter(
    model: &SystemModel,
    gain: &[f64],
    margin: &MarginFunction,
    terminal: &IntervalBox,
    x_ref: &[f64],
    u_ref: &[f64],
    horizon: usize,
) -> Result<TubeMpcFilter> {
    build(model, gain, margin, terminal, x_ref, u_ref, horizon, false)
}

#[allow(clippy::too_many_arguments)]
fn build(
    model: &SystemModel,
    gain: &[f64],
    margin: &MarginFunction,
    terminal: &IntervalBox,
    x_ref: &[f64],
    u_ref: &[f64],
    horizon: usize,
    tighten: bool,
) -> Result<TubeMpcFilter> {
    let lin = model
        .linear()
        .ok_or_else(|| Error::InvalidArgument(format!("tube MPC needs a linear model, got `{}`", model.name())))?;
    let (n, m, kd) = (lin.n, lin.m, lin.k);
    if horizon == 0 {
        return Err(Error::InvalidArgument("tube MPC horizon must be at least 1".into()));
    }
    check_dim("gain entries", m * n, gain.len())?;
    check_dim("terminal box", n, terminal.dim())?;
    check_dim("x_ref", n, x_ref.len())?;
    check_dim("u_ref", m, u_ref.len())?;
    let halfspaces = margin
        .halfspaces()
        .ok_or_else(|| Error::InvalidArgument("tube MPC needs a failure set bounded by halfspaces".into()))?;
    for (normal, _) in &halfspaces {
        check_dim("halfspace normal", n, normal.len())?;
    }

    let a = DMatrix::from_row_slice(n, n, &lin.a);
    let b = DMatrix::from_row_slice(n, m, &lin.b);
    let e = DMatrix::from_row_slice(n, kd, &lin.e);
    let k = DMatrix::from_row_slice(m, n, gain);
    let closed = &a + &b * &k;
    check_stable(&closed)?;

    let equilibrium = &a * DVector::from_row_slice(x_ref) + &b * DVector::from_row_slice(u_ref);
    if (0..n).any(|i| (equilibrium[i] - x_ref[i]).abs() > 1e-12 * (1.0 + x_ref[i].abs())) {
        return Err(Error::Rejected("(x_ref, u_ref) is not an equilibrium of the nominal model".into()));
    }

    let w = if tighten && kd > 0 {
        mat_box(&e, model.disturbance_set())
    } else {
        IntervalBox::point(&vec![0.0; n])
    };
    let tightening = compute_tightening(&lin.a, &lin.b, gain, &w, horizon)?;

    if !margin.box_avoids_failure(terminal) {
        return Err(Error::Rejected(format!("terminal box {terminal} intersects the failure set")));
    }

    let stage_offsets: Vec<Vec<f64>> = tightening
        .error_bounds
        .iter()
        .map(|err| {
            halfspaces
                .iter()
                .map(|(normal, offset)| {
                    // Worst case of nᵀe over the error box, moved to the offset.
                    let worst = (0..n).fold(0.0, |acc, i| acc + err.interval(i).scale(normal[i]).lo);
                    offset - worst
                })
                .collect()
        })
        .collect();

    let err_h = &tightening.error_bounds[horizon];
    let shrunk = shrink(terminal, err_h)?;
    let control_sets = (0..=horizon)
        .map(|tau| shrink(model.control_set(), &tightening.control_offsets[tau]))
        .collect::<Result<Vec<_>>>()?;

    // Terminal invariance of the box the planner actually targets.
    let planned = shrink(&shrunk, &IntervalBox::symmetric(&vec![PLAN_MARGIN; n])?)?;
    let centered = translate(&planned, x_ref, -1.0);
    let mut power = DMatrix::identity(n, n);
    for _ in 0..horizon {
        power = &closed * &power;
    }
    let image = box_sum(&mat_box(&closed, &centered), &mat_box(&power, &w));
    if !centered.contains_box(&image) {
        return Err(Error::Rejected(format!(
            "terminal box is not invariant for the tightened system: {centered} maps to {image}"
        )));
    }
    let law = translate(&mat_box(&k, &centered), u_ref, 1.0);
    if !control_sets[horizon].contains_box(&law) {
        return Err(Error::Rejected(format!(
            "terminal feedback needs controls {law}, tightened control set is {}",
            control_sets[horizon]
        )));
    }

    let mut powers = vec![DMatrix::identity(n, n)];
    for _ in 0..horizon {
        let next = &a * powers.last().expect("nonempty");
        powers.push(next);
    }
    let mut input_maps = vec![DMatrix::zeros(n, m * horizon)];
    for tau in 1..=horizon {
        let mut s = &a * &input_maps[tau - 1];
        s.view_mut((0, (tau - 1) * m), (n, m)).copy_from(&b);
        input_maps.push(s);
    }

    Ok(TubeMpcFilter {
        model: model.clone(),
        n,
        m,
        horizon,
        a,
        b,
        gain: k,
        x_ref: x_ref.to_vec(),
        u_ref: u_ref.to_vec(),
        halfspaces,
        tightening,
        stage_offsets,
        terminal: shrunk,
        control_sets: control_sets[..horizon].to_vec(),
        powers,
        input_maps,
        cache: None,
        name: if tighten { "tube_mpc" } else { "nominal_mpc" },
    })
}

/// `{ x : x + e ∈ outer for all e ∈ err }`.
fn shrink(outer: &IntervalBox, err: &IntervalBox) -> Result<IntervalBox> {
    let lower: Vec<f64> = (0..outer.dim()).map(|i| outer.lower()[i] - err.lower()[i]).collect();
    let upper: Vec<f64> = (0..outer.dim()).map(|i| outer.upper()[i] - err.upper()[i]).collect();
    IntervalBox::new(lower, upper).map_err(|_| Error::Rejected(format!("{outer} is too small to absorb error bound {err}")))
}

fn translate(b: &IntervalBox, by: &[f64], sign: f64) -> IntervalBox {
    let rows: Vec<Interval> = (0..b.dim()).map(|i| b.interval(i) + Interval::point(sign * by[i])).collect();
    IntervalBox::from_intervals(&rows)
}

/// Constraint rows `G z ≥ h` of the planning problem at one state.
struct Constraints {
    g: DMatrix<f64>,
    h: DVector<f64>,
}

impl TubeMpcFilter {
    pub fn tightening(&self) -> &Tightening {
        &self.tightening
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Tightened terminal box `Ω ⊖ E_H`.
    pub fn tightened_terminal(&self) -> &IntervalBox {
        &self.terminal
    }

    /// Tightened control box at each stage.
    pub fn tightened_controls(&self) -> &[IntervalBox] {
        &self.control_sets
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Stage-zero test: the current state satisfies the (untightened) halfspaces.
    fn state_admissible(&self, x: &[f64]) -> bool {
        self.halfspaces
            .iter()
            .zip(&self.stage_offsets[0])
            .all(|((normal, _), off)| normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() >= *off)
    }

    fn constraints(&self, x: &[f64], margin: f64) -> Constraints {
        let (n, m, hz) = (self.n, self.m, self.horizon);
        let xv = DVector::from_row_slice(x);
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for tau in 1..hz {
            let free = &self.powers[tau] * &xv;
            for (i, (normal, _)) in self.halfspaces.iter().enumerate() {
                let nv = DVector::from_row_slice(normal);
                let row = self.input_maps[tau].transpose() * &nv;
                rows.push((row, self.stage_offsets[tau][i] + margin - nv.dot(&free)));
            }
        }
        let free = &self.powers[hz] * &xv;
        let s = &self.input_maps[hz];
        for i in 0..n {
            let row = s.row(i).transpose();
            if self.terminal.lower()[i].is_finite() {
                rows.push((row.clone(), self.terminal.lower()[i] + margin - free[i]));
            }
            if self.terminal.upper()[i].is_finite() {
                rows.push((-row, -(self.terminal.upper()[i] - margin) + free[i]));
            }
        }
        for tau in 0..hz {
            for j in 0..m {
                let mut e = DVector::zeros(m * hz);
                e[tau * m + j] = 1.0;
                let set = &self.control_sets[tau];
                if set.lower()[j].is_finite() {
                    rows.push((e.clone(), set.lower()[j]));
                }
                if set.upper()[j].is_finite() {
                    rows.push((-e, -set.upper()[j]));
                }
            }
        }
        let mut g = DMatrix::zeros(rows.len(), m * hz);
        let mut h = DVector::zeros(rows.len());
        for (r, (row, bound)) in rows.into_iter().enumerate() {
            g.set_row(r, &row.transpose());
            h[r] = bound;
        }
        Constraints { g, h }
    }

    fn finish(&self, x: &[f64], z: &DVector<f64>) -> NominalPlan {
        let (m, hz) = (self.m, self.horizon);
        let controls: Vec<Vec<f64>> = (0..hz)
            .map(|tau| self.control_sets[tau].clamp(&z.as_slice()[tau * m..(tau + 1) * m]))
            .collect();
        let states = self.rollout(x, &controls);
        NominalPlan { controls, states }
    }

    fn rollout(&self, x: &[f64], controls: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut states = vec![x.to_vec()];
        for u in controls {
            let s = DVector::from_row_slice(states.last().expect("nonempty"));
            let next = &self.a * s + &self.b * DVector::from_row_slice(u);
            states.push(next.as_slice().to_vec());
        }
        states
    }

    /// A feasible plan whose first control is exactly `u`, if one exists.
    pub fn plan_with_first(&self, x: &[f64], u: &[f64]) -> Option<NominalPlan> {
        if !self.state_admissible(x) || !self.control_sets[0].contains(u) {
            return None;
        }
        let c = self.constraints(x, PLAN_MARGIN);
        let (m, hz) = (self.m, self.horizon);
        let first = c.g.columns(0, m) * DVector::from_row_slice(u);
        let rhs = &c.h - first;
        let mut z = DVector::zeros(m * hz);
        z.as_mut_slice()[..m].copy_from_slice(u);
        if hz == 1 {
            if rhs.iter().any(|v| *v > 1e-11 * (1.0 + v.abs())) {
                return None;
            }
            return Some(self.finish(x, &z));
        }
        let tail = m * (hz - 1);
        let mut linear = DVector::zeros(tail);
        for tau in 0..hz - 1 {
            for j in 0..m {
                linear[tau * m + j] = -self.u_ref[j];
            }
        }
        let qp = QuadraticProgram {
            hessian: DMatrix::identity(tail, tail),
            linear,
            constraints: c.g.columns(m, tail).into_owned(),
            bounds: rhs,
        };
        let sol = solve_qp(&qp).ok()?;
        z.as_mut_slice()[m..].copy_from_slice(sol.z.as_slice());
        Some(self.finish(x, &z))
    }

    /// The feasible plan whose first control is closest to `u_task`, if any.
    pub fn plan_closest(&self, x: &[f64], u_task: &[f64]) -> Option<NominalPlan> {
        if !self.state_admissible(x) {
            return None;
        }
        let c = self.constraints(x, PLAN_MARGIN);
        let (m, hz) = (self.m, self.horizon);
        let nz = m * hz;
        let mut hessian = DMatrix::identity(nz, nz) * TAIL_WEIGHT;
        let mut linear = DVector::zeros(nz);
        for j in 0..m {
            hessian[(j, j)] = 1.0;
            linear[j] = -u_task[j];
        }
        for tau in 1..hz {
            for j in 0..m {
                linear[tau * m + j] = -TAIL_WEIGHT * self.u_ref[j];
            }
        }
        let qp = QuadraticProgram {
            hessian,
            linear,
            constraints: c.g,
            bounds: c.h,
        };
        let sol = solve_qp(&qp).ok()?;
        Some(self.finish(x, &sol.z))
    }

    pub fn feasible(&self, x: &[f64]) -> bool {
        self.plan_closest(x, &self.u_ref).is_some()
    }

    /// Checks a plan against the tightened constraints (without the planning
    /// margin) with a small absolute tolerance.
    pub fn plan_satisfies_constraints(&self, x: &[f64], plan: &NominalPlan, tol: f64) -> bool {
        if plan.controls.len() != self.horizon || plan.states.first().map(Vec::as_slice) != Some(x) {
            return false;
        }
        if !self.state_admissible(x) {
            return false;
        }
        for tau in 0..self.horizon {
            if !self.control_sets[tau].contains_with_slack(&plan.controls[tau], tol) {
                return false;
            }
        }
        for tau in 1..self.horizon {
            for (i, (normal, _)) in self.halfspaces.iter().enumerate() {
                let v: f64 = normal.iter().zip(&plan.states[tau]).map(|(n, s)| n * s).sum();
                if v < self.stage_offsets[tau][i] - tol {
                    return false;
                }
            }
        }
        self.terminal.contains_with_slack(&plan.states[self.horizon], tol)
    }

    /// The previous plan moved one step forward from the actual next state,
    /// with the error fed back through `K` and the terminal law appended.
    pub fn shifted_plan(&self, plan: &NominalPlan, x_next: &[f64]) -> NominalPlan {
        let hz = self.horizon;
        let mut controls = Vec::with_capacity(hz);
        let mut states = vec![x_next.to_vec()];
        for tau in 0..hz {
            let current = states.last().expect("nonempty").clone();
            let u = if tau + 1 < hz {
                self.feedback(&plan.controls[tau + 1], &current, &plan.states[tau + 1])
            } else {
                self.feedback(&self.u_ref, &current, &self.x_ref)
            };
            let next = &self.a * DVector::from_row_slice(&current) + &self.b * DVector::from_row_slice(&u);
            states.push(next.as_slice().to_vec());
            controls.push(u);
        }
        NominalPlan { controls, states }
    }

    /// `u + K (x − x_nominal)`.
    fn feedback(&self, u: &[f64], x: &[f64], nominal: &[f64]) -> Vec<f64> {
        let err = DVector::from_row_slice(x) - DVector::from_row_slice(nominal);
        let v = DVector::from_row_slice(u) + &self.gain * err;
        v.as_slice().to_vec()
    }

    /// Control of a cached plan `age` steps after it was made.
    fn plan_control(&self, plan: &NominalPlan, age: usize, x: &[f64]) -> Vec<f64> {
        let raw = if age < self.horizon {
            self.feedback(&plan.controls[age], x, &plan.states[age])
        } else {
            self.feedback(&self.u_ref, x, &self.x_ref)
        };
        self.model.control_set().clamp(&raw)
    }
}

impl SafetyFilter for TubeMpcFilter {
    fn name(&self) -> &str {
        self.name
    }

    fn monitor(&self, x: &[f64], u: &[f64]) -> f64 {
        if self.plan_with_first(x, u).is_some() {
            0.5
        } else {
            -0.5
        }
    }

    /// The cached plan continued one step, or the terminal law without a plan.
    fn fallback(&self, x: &[f64]) -> Vec<f64> {
        match &self.cache {
            Some((plan, age)) => self.plan_control(plan, age + 1, x),
            None => {
                let raw = self.feedback(&self.u_ref, x, &self.x_ref);
                self.model.control_set().clamp(&raw)
            }
        }
    }

    fn intervene(&mut self, x: &[f64], u: &[f64]) -> Intervention {
        if let Some(plan) = self.plan_with_first(x, u) {
            self.cache = Some((plan, 0));
            return Intervention::pass(u);
        }
        if let Some(plan) = self.plan_closest(x, u) {
            let first = plan.controls[0].clone();
            self.cache = Some((plan, 0));
            return Intervention {
                control: first,
                degraded: false,
            };
        }
        let control = match &mut self.cache {
            Some((plan, age)) => {
                *age += 1;
                let (plan, age) = (plan.clone(), *age);
                self.plan_control(&plan, age, x)
            }
            None => self.fallback(x),
        };
        Intervention {
            control,
            degraded: true,
        }
    }

    /// Deployable wherever a feasible plan exists.
    fn certifies(&self, x: &[f64]) -> bool {
        self.feasible(x)
    }

    fn reset(&mut self) {
        self.cache = None;
    }

    fn clone_box(&self) -> Box<dyn SafetyFilter> {
        Box::new(self.clone())
    }
}

/// Simulates the tracking error `e' = (A + BK) e + E d` from `e = 0` under
/// uniformly drawn disturbances and checks `e_τ ∈ error_bounds[τ]`. The
/// check allows a relative slack of `1e-12` for rounding.
pub fn sample_error_bounds(model: &SystemModel, gain: &[f64], tightening: &Tightening, samples: usize, seed: u64) -> Result<ContainmentReport> {
    let lin = model
        .linear()
        .ok_or_else(|| Error::InvalidArgument("error bounds need a linear model".into()))?;
    check_dim("gain entries", lin.m * lin.n, gain.len())?;
    let closed = DMatrix::from_row_slice(lin.n, lin.n, &lin.a)
        + DMatrix::from_row_slice(lin.n, lin.m, &lin.b) * DMatrix::from_row_slice(lin.m, lin.n, gain);
    let e_map = DMatrix::from_row_slice(lin.n, lin.k, &lin.e);
    let mut rng = crate::harness::stream_rng(seed, 5);
    let mut report = ContainmentReport {
        samples,
        failures: 0,
        first_failure: None,
    };
    for i in 0..samples {
        let mut e = DVector::zeros(lin.n);
        for tau in 1..tightening.error_bounds.len() {
            let d = crate::harness::uniform_in(&mut rng, model.disturbance_set());
            e = &closed * e + &e_map * DVector::from_row_slice(&d);
            let bound = &tightening.error_bounds[tau];
            let slack = 1e-12 * (1.0 + bound.upper().iter().chain(bound.lower()).fold(0.0, |a: f64, v| a.max(v.abs())));
            if !bound.contains_with_slack(e.as_slice(), slack) {
                report.failures += 1;
                report.first_failure.get_or_insert((i, tau));
                break;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_error_bounds_follow_geometric_series() {
        let d = IntervalBox::symmetric(&[1.0]).unwrap();
        let t = compute_tightening(&[1.5], &[1.0], &[-1.0], &d, 6).unwrap();
        assert_eq!(t.error_bounds[0], IntervalBox::point(&[0.0]));
        assert_eq!(t.error_bounds[1], d);
        for tau in 0..=6 {
            let r = 2.0 - 2f64.powi(1 - tau as i32);
            assert!((t.error_bounds[tau].upper()[0] - r).abs() < 1e-14);
            assert!((t.error_bounds[tau].lower()[0] + r).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_disturbance_means_no_tightening() {
        let d = IntervalBox::point(&[0.0, 0.0]);
        let t = compute_tightening(&[1.0, 0.1, 0.0, 1.0], &[0.0, 0.1], &[-1.0, -1.5], &d, 4).unwrap();
        assert!(t.error_bounds.iter().all(|e| e.upper().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn rejects_unstable_feedback() {
        let d = IntervalBox::symmetric(&[0.1]).unwrap();
        assert!(matches!(compute_tightening(&[1.2], &[1.0], &[0.0], &d, 3), Err(Error::Rejected(_))));
    }
}
