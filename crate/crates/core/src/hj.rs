//! Grid dynamic programming for the discrete Isaacs recursion
//!
//! ```text
//! V_{k}(x) = min{ g(x), max_u min_d V_{k+1}(f(x, u, d)) },   V_0 = g
//! ```
//!
//! iterated to a fixed point on a rectilinear grid. The maximization over
//! controls and minimization over disturbances run over finite lattices of
//! candidates. Off-node values come from multilinear interpolation, which is
//! monotone in the node values and never overshoots them. Queries outside the
//! grid domain return the out-of-domain value (default `-∞`), so leaving the
//! domain is treated as failure.
//!
//! The solve returns the last iterate together with a [`SolveReport`]; values
//! decrease monotonically node by node from `g`, so stopping early still gives
//! an over-approximation of the fixed point, never an under-approximation of
//! the unsafe region. Callers must check [`SolveReport::converged`].

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dynamics::{discretize_box, lattice_axis, SystemModel};
use crate::error::{check_dim, Error, Result};
use crate::interval::IntervalBox;
use crate::margin::MarginFunction;
use crate::policy::Policy;

/// Interpolation supports at most this many state dimensions.
pub const MAX_GRID_DIM: usize = 6;

/// Fractional grid positions this close to an integer are snapped onto the node.
const NODE_SNAP: f64 = 1e-10;

const MAGIC: &str = "VALUEGRID";
const FORMAT_VERSION: &str = "v1";

/// Node layout of a rectilinear grid: `shape[i]` evenly spaced nodes over
/// each domain interval, endpoints included.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    domain: IntervalBox,
    shape: Vec<usize>,
    axes: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(domain: IntervalBox, shape: Vec<usize>) -> Result<Self> {
        check_dim("grid shape", domain.dim(), shape.len())?;
        if domain.dim() == 0 || domain.dim() > MAX_GRID_DIM {
            return Err(Error::InvalidArgument(format!(
                "grids support 1..={MAX_GRID_DIM} dimensions, got {}",
                domain.dim()
            )));
        }
        if domain.is_empty() {
            return Err(Error::InvalidArgument("grid domain is empty".into()));
        }
        for i in 0..domain.dim() {
            let iv = domain.interval(i);
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo < iv.hi) {
                return Err(Error::InvalidArgument(format!(
                    "grid domain dimension {i} must be a finite interval of positive width, got {iv}"
                )));
            }
            if shape[i] < 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid needs at least 2 nodes per dimension, dimension {i} has {}",
                    shape[i]
                )));
            }
        }
        let axes = (0..domain.dim())
            .map(|i| lattice_axis(domain.lower()[i], domain.upper()[i], shape[i]))
            .collect();
        Ok(Self { domain, shape, axes })
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.domain
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Node coordinates along dimension `i`.
    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn spacing(&self, i: usize) -> f64 {
        self.domain.interval(i).width() / (self.shape[i] - 1) as f64
    }

    /// Coordinates of the node with flat row-major index `idx` (last dimension fastest).
    pub fn node(&self, mut idx: usize, out: &mut [f64]) {
        for i in (0..self.dim()).rev() {
            let k = idx % self.shape[i];
            idx /= self.shape[i];
            out[i] = self.axes[i][k];
        }
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        (0..self.node_count())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.dim()],
                |x, idx| {
                    self.node(idx, x);
                    f(x)
                },
            )
            .collect()
    }
}

/// Safety values on grid nodes; the maximal safe set is `{ x : value_at(x) ≥ 0 }`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    spec: GridSpec,
    values: Vec<f64>,
    out_of_domain_value: f64,
    strides: Vec<usize>,
}

impl ValueGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::with_out_of_domain_value(spec, values, f64::NEG_INFINITY)
    }

    pub fn with_out_of_domain_value(spec: GridSpec, values: Vec<f64>, out_of_domain_value: f64) -> Result<Self> {
        check_dim("grid values", spec.node_count(), values.len())?;
        if values.iter().any(|v| v.is_nan()) || out_of_domain_value.is_nan() {
            return Err(Error::InvalidArgument("grid values must not be NaN".into()));
        }
        let mut strides = vec![1usize; spec.dim()];
        for i in (0..spec.dim().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * spec.shape[i + 1];
        }
        Ok(Self {
            spec,
            values,
            out_of_domain_value,
            strides,
        })
    }

    pub fn from_margin(spec: GridSpec, g: &MarginFunction) -> Result<Self> {
        let values = spec.sample(|x| g.eval(x));
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.spec.domain
    }

    pub fn shape(&self) -> &[usize] {
        &self.spec.shape
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn out_of_domain_value(&self) -> f64 {
        self.out_of_domain_value
    }

    /// Same grid with every node value shifted by `offset`.
    pub fn offset(&self, offset: f64) -> ValueGrid {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += offset);
        out
    }

    /// Multilinear interpolation; out-of-domain points (and NaN) return the sentinel.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        assert_eq!(x.len(), d, "query dimension");
        let mut base = [0usize; MAX_GRID_DIM];
        let mut frac = [0.0f64; MAX_GRID_DIM];
        let domain = &self.spec.domain;
        for i in 0..d {
            let (lo, hi) = (domain.lower()[i], domain.upper()[i]);
            let xi = x[i];
            if !(xi >= lo && xi <= hi) {
                return self.out_of_domain_value;
            }
            let cells = (self.spec.shape[i] - 1) as f64;
            let mut t = (xi - lo) / (hi - lo) * cells;
            let nearest = t.round();
            if (t - nearest).abs() <= NODE_SNAP {
                t = nearest;
            }
            let mut k = t.floor();
            if k >= cells {
                k = cells - 1.0;
            }
            base[i] = k as usize;
            frac[i] = t - k;
        }
        let mut acc = 0.0;
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for i in 0..d {
                if mask >> i & 1 == 1 {
                    w *= frac[i];
                    idx += (base[i] + 1) * self.strides[i];
                } else {
                    w *= 1.0 - frac[i];
                    idx += base[i] * self.strides[i];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }

    pub fn safe_membership(&self, x: &[f64]) -> bool {
        self.value_at(x) >= 0.0
    }

    /// Exact minimum of the interpolant over a box.
    ///
    /// The interpolant is multilinear between consecutive node coordinates, so
    /// its minimum over the box is attained on the product of the box bounds
    /// and the node coordinates strictly inside them. Any part of the box
    /// outside the domain contributes the out-of-domain value.
    pub fn min_over_box(&self, b: &IntervalBox) -> f64 {
        if b.is_empty() {
            return f64::INFINITY;
        }
        let d = self.dim();
        assert_eq!(b.dim(), d, "box dimension");
        let mut outside = false;
        let mut coords: Vec<Vec<f64>> = Vec::with_capacity(d);
        for i in 0..d {
            let dom = self.spec.domain.interval(i);
            let iv = b.interval(i);
            if iv.lo < dom.lo || iv.hi > dom.hi {
                outside = true;
            }
            let Some(clip) = iv.intersect(&dom) else {
                return self.out_of_domain_value;
            };
            let mut c = vec![clip.lo];
            c.extend(self.spec.axes[i].iter().copied().filter(|v| *v > clip.lo && *v < clip.hi));
            if clip.hi > clip.lo {
                c.push(clip.hi);
            }
            coords.push(c);
        }
        let mut best = if outside { self.out_of_domain_value } else { f64::INFINITY };
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        loop {
            for i in 0..d {
                point[i] = coords[i][idx[i]];
            }
            best = best.min(self.value_at(&point));
            let mut i = d;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < coords[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }

    /// Writes the documented binary format: one ASCII header line, then the
    /// node values as little-endian IEEE-754 doubles in row-major order.
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        writeln!(
            w,
            "{MAGIC} {FORMAT_VERSION} dim={} shape={} lower={} upper={} oob={}",
            self.dim(),
            self.shape().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            join(self.domain().lower()),
            join(self.domain().upper()),
            self.out_of_domain_value,
        )?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let header = header
            .strip_suffix('\n')
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let mut fields = header.split(' ');
        if fields.next() != Some(MAGIC) {
            return Err(Error::Format("bad magic string".into()));
        }
        if fields.next() != Some(FORMAT_VERSION) {
            return Err(Error::Format("unsupported format version".into()));
        }
        let mut take = |key: &str| -> Result<String> {
            let field = fields.next().ok_or_else(|| Error::Format(format!("missing `{key}`")))?;
            field
                .strip_prefix(key)
                .and_then(|s| s.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| Error::Format(format!("expected `{key}=...`, found `{field}`")))
        };
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
        let parse_list = |s: &str| s.split(',').map(parse_f).collect::<Result<Vec<f64>>>();
        let dim: usize = take("dim")?
            .parse()
            .map_err(|e| Error::Format(format!("dim: {e}")))?;
        let shape = take("shape")?
            .split(',')
            .map(|s| s.parse::<usize>().map_err(|e| Error::Format(format!("shape: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let lower = parse_list(&take("lower")?)?;
        let upper = parse_list(&take("upper")?)?;
        let oob = parse_f(&take("oob")?)?;
        if shape.len() != dim || lower.len() != dim || upper.len() != dim {
            return Err(Error::Format("header dimensions disagree".into()));
        }
        let spec = GridSpec::new(IntervalBox::new(lower, upper)?, shape)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != spec.node_count() * 8 {
            return Err(Error::Format(format!(
                "expected {} value bytes, found {}",
                spec.node_count() * 8,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::with_out_of_domain_value(spec, values, oob)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// Value of a successor state during value iteration. A successor that
/// leaves the grid into the failure set takes its (negative) margin there, an
/// upper bound on its true value with the right sign; any other exit takes
/// the grid's sentinel. Queries outside the iteration always use the sentinel.
#[inline]
fn successor_value(grid: &ValueGrid, exit_margin: Option<&MarginFunction>, next: &[f64]) -> f64 {
    let v = grid.value_at(next);
    match exit_margin {
        Some(g) if v == grid.out_of_domain_value && !grid.spec.domain.contains(next) => {
            let m = g.eval(next);
            if m < 0.0 {
                let clamped = grid.spec.domain.clamp(next);
                m.min(grid.value_at(&clamped) + m - g.eval(&clamped))
            } else {
                v
            }
        }
        _ => v,
    }
}

/// `min_d V(f(x, u, d))` over the disturbance candidates. Stops early once
/// the running minimum drops below `floor`, since the caller only needs to
/// know the value does not beat it.
#[inline]
#[allow(clippy::too_many_arguments)]
fn worst_case(
    model: &SystemModel,
    grid: &ValueGrid,
    x: &[f64],
    u: &[f64],
    d_candidates: &[Vec<f64>],
    exit_margin: Option<&MarginFunction>,
    floor: f64,
    next: &mut [f64],
) -> f64 {
    let mut worst = f64::INFINITY;
    for d in d_candidates {
        model.step_into(x, u, d, next);
        worst = worst.min(successor_value(grid, exit_margin, next));
        if worst < floor {
            break;
        }
    }
    worst
}

/// `min_d V(f(x, u, d))` over the disturbance candidates.
pub fn worst_case_value(model: &SystemModel, grid: &ValueGrid, x: &[f64], u: &[f64], d_candidates: &[Vec<f64>]) -> f64 {
    let mut next = vec![0.0; model.state_dim()];
    worst_case(model, grid, x, u, d_candidates, None, f64::NEG_INFINITY, &mut next)
}

/// Index and value of `argmax_u min_d V(f(x, u, d))`; ties go to the lowest index.
pub fn best_control(
    model: &SystemModel,
    grid: &ValueGrid,
    x: &[f64],
    u_candidates: &[Vec<f64>],
    d_candidates: &[Vec<f64>],
    next: &mut [f64],
) -> (usize, f64) {
    best_control_with_exit(model, grid, x, u_candidates, d_candidates, None, next)
}

fn best_control_with_exit(
    model: &SystemModel,
    grid: &ValueGrid,
    x: &[f64],
    u_candidates: &[Vec<f64>],
    d_candidates: &[Vec<f64>],
    exit_margin: Option<&MarginFunction>,
    next: &mut [f64],
) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, u) in u_candidates.iter().enumerate() {
        // A candidate can only win if its worst case is strictly larger, so
        // its evaluation may stop as soon as it falls below the incumbent.
        let w = worst_case(model, grid, x, u, d_candidates, exit_margin, best.1, next);
        if i == 0 || w > best.1 {
            best = (i, w);
        }
    }
    best
}

fn check_candidates(model: &SystemModel, u: &[Vec<f64>], d: &[Vec<f64>]) -> Result<()> {
    if u.is_empty() || d.is_empty() {
        return Err(Error::InvalidArgument("candidate lists must be nonempty".into()));
    }
    for c in u {
        check_dim("control candidate", model.control_dim(), c.len())?;
    }
    for c in d {
        check_dim("disturbance candidate", model.disturbance_dim(), c.len())?;
    }
    Ok(())
}

fn sweep(
    model: &SystemModel,
    g: &MarginFunction,
    g_nodes: &[f64],
    v_next: &ValueGrid,
    u_candidates: &[Vec<f64>],
    d_candidates: &[Vec<f64>],
) -> Vec<f64> {
    let n = model.state_dim();
    let spec = v_next.spec();
    (0..spec.node_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(x, next), idx| {
                spec.node(idx, x);
                let (_, best) = best_control_with_exit(model, v_next, x, u_candidates, d_candidates, Some(g), next);
                g_nodes[idx].min(best)
            },
        )
        .collect()
}

/// One application of the Isaacs operator. The input grid is not modified.
pub fn backward_step(
    model: &SystemModel,
    g: &MarginFunction,
    v_next: &ValueGrid,
    u_candidates: &[Vec<f64>],
    d_candidates: &[Vec<f64>],
) -> Result<ValueGrid> {
    check_dim("grid", model.state_dim(), v_next.dim())?;
    check_candidates(model, u_candidates, d_candidates)?;
    let g_nodes = v_next.spec().sample(|x| g.eval(x));
    let values = sweep(model, g, &g_nodes, v_next, u_candidates, d_candidates);
    ValueGrid::with_out_of_domain_value(v_next.spec().clone(), values, v_next.out_of_domain_value())
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Lattice counts per control dimension.
    pub u_counts: Vec<usize>,
    /// Lattice counts per disturbance dimension; ignored for exact models.
    pub d_counts: Vec<usize>,
    /// Stop once the sup-norm change between iterates is at most this.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl SolveOptions {
    pub fn new(u_counts: Vec<usize>, d_counts: Vec<usize>) -> Self {
        Self {
            u_counts,
            d_counts,
            tolerance: 1e-6,
            max_iters: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    /// Residual after each iteration.
    pub residuals: Vec<f64>,
}

mod duration_secs {
    pub fn serialize<S: serde::Serializer>(d: &std::time::Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

/// Sup-norm change between iterates; equal values (including two `-∞`) differ by zero.
pub fn residual(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

/// Candidate points, one vector per point.
pub type Lattice = Vec<Vec<f64>>;

/// Control and disturbance candidate lattices for a model.
pub fn candidate_lattices(model: &SystemModel, u_counts: &[usize], d_counts: &[usize]) -> Result<(Lattice, Lattice)> {
    let u = discretize_box(model.control_set(), u_counts)?;
    let d = if model.disturbance_dim() == 0 {
        vec![Vec::new()]
    } else {
        discretize_box(model.disturbance_set(), d_counts)?
    };
    Ok((u, d))
}

/// Iterates [`backward_step`] from `V = g` until the residual is within tolerance.
pub fn solve(model: &SystemModel, g: &MarginFunction, spec: &GridSpec, options: &SolveOptions) -> Result<(ValueGrid, SolveReport)> {
    let (u, d) = candidate_lattices(model, &options.u_counts, &options.d_counts)?;
    solve_with_candidates(model, g, spec, &u, &d, options.tolerance, options.max_iters)
}

pub fn solve_with_candidates(
    model: &SystemModel,
    g: &MarginFunction,
    spec: &GridSpec,
    u_candidates: &[Vec<f64>],
    d_candidates: &[Vec<f64>],
    tolerance: f64,
    max_iters: usize,
) -> Result<(ValueGrid, SolveReport)> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    check_dim("grid", model.state_dim(), spec.dim())?;
    check_candidates(model, u_candidates, d_candidates)?;
    let start = Instant::now();
    let g_nodes = spec.sample(|x| g.eval(x));
    let mut grid = ValueGrid::new(spec.clone(), g_nodes.clone())?;
    let mut residuals = Vec::new();
    let mut final_residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..max_iters {
        let values = sweep(model, g, &g_nodes, &grid, u_candidates, d_candidates);
        final_residual = residual(&values, grid.values());
        residuals.push(final_residual);
        grid.values = values;
        log::debug!("iteration {} residual {final_residual:e}", residuals.len());
        if final_residual <= tolerance {
            converged = true;
            break;
        }
    }
    let report = SolveReport {
        iterations: residuals.len(),
        final_residual,
        converged,
        wall_time: start.elapsed(),
        residuals,
    };
    Ok((grid, report))
}

/// `argmax_u min_d V(f(x, u, d))` over the candidate lattices.
#[derive(Clone, Debug)]
pub struct OptimalSafetyPolicy {
    model: SystemModel,
    grid: Arc<ValueGrid>,
    u_candidates: Vec<Vec<f64>>,
    d_candidates: Vec<Vec<f64>>,
}

impl OptimalSafetyPolicy {
    pub fn new(
        model: SystemModel,
        grid: Arc<ValueGrid>,
        u_candidates: Vec<Vec<f64>>,
        d_candidates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_dim("grid", model.state_dim(), grid.dim())?;
        check_candidates(&model, &u_candidates, &d_candidates)?;
        Ok(Self {
            model,
            grid,
            u_candidates,
            d_candidates,
        })
    }

    pub fn grid(&self) -> &Arc<ValueGrid> {
        &self.grid
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn u_candidates(&self) -> &[Vec<f64>] {
        &self.u_candidates
    }

    pub fn d_candidates(&self) -> &[Vec<f64>] {
        &self.d_candidates
    }

    /// Winning candidate index and its worst-case successor value.
    pub fn best(&self, x: &[f64]) -> (usize, f64) {
        let mut next = vec![0.0; self.model.state_dim()];
        best_control(&self.model, &self.grid, x, &self.u_candidates, &self.d_candidates, &mut next)
    }
}

impl Policy for OptimalSafetyPolicy {
    fn control(&self, x: &[f64]) -> Vec<f64> {
        self.u_candidates[self.best(x).0].clone()
    }
}

pub fn optimal_safety_policy(
    model: &SystemModel,
    grid: Arc<ValueGrid>,
    u_candidates: Vec<Vec<f64>>,
    d_candidates: Vec<Vec<f64>>,
) -> Result<OptimalSafetyPolicy> {
    OptimalSafetyPolicy::new(model.clone(), grid, u_candidates, d_candidates)
}
