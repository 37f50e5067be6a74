//! Braking filter for a planar robot moving through an initially unknown map.
//!
//! The information state is the robot state plus the set of grid cells known
//! to be free. Sensing only ever adds cells, so a braking maneuver that stays
//! inside the known free cells today stays inside them tomorrow; that is the
//! whole safety argument, and the filter checks exactly that: after applying
//! `u`, full braking must stop the robot within the horizon without leaving
//! known free space.

use std::path::Path;
use std::sync::Arc;

use crate::dynamics::{ModelKind, SystemModel};
use crate::error::{Error, Result};
use crate::filter::{Intervention, SafetyFilter};
use crate::margin::MarginFunction;

/// Speeds at or below this count as stopped.
const STOP_TOL: f64 = 1e-9;

/// Static occupancy grid. Row `r`, column `c` covers
/// `[x0 + c s, x0 + (c+1) s] × [y0 + r s, y0 + (r+1) s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: [f64; 2],
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// Parses rows of `0` (free) and `1` (occupied). The first line is the top
    /// row (largest `y`), so the file reads like a map. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str, cell_size: f64, origin: [f64; 2]) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::InvalidArgument(format!("cell size must be positive, got {cell_size}")));
        }
        let mut lines: Vec<Vec<bool>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::InvalidArgument(format!("line {}: unexpected character {other:?}", n + 1))),
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = lines.first() {
                if first.len() != row.len() {
                    return Err(Error::InvalidArgument(format!(
                        "line {}: expected {} cells, found {}",
                        n + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            lines.push(row);
        }
        if lines.is_empty() || lines[0].is_empty() {
            return Err(Error::InvalidArgument("occupancy map is empty".into()));
        }
        let rows = lines.len();
        let cols = lines[0].len();
        let occupied = lines.into_iter().rev().flatten().collect();
        Ok(Self {
            rows,
            cols,
            cell_size,
            origin,
            occupied,
        })
    }

    pub fn load(path: impl AsRef<Path>, cell_size: f64, origin: [f64; 2]) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, cell_size, origin)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// `(row, col)` of the cell containing a position, if inside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin[0]) / self.cell_size).floor();
        let r = ((y - self.origin[1]) / self.cell_size).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows).then_some((r as usize, c as usize))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.occupied[row * self.cols + col]
    }

    /// Positions in occupied cells or off the map are failures.
    pub fn position_is_free(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|(r, c)| !self.is_occupied(r, c))
    }

    /// `+1` on free positions, `−1` in occupied cells or off the map. An
    /// indicator rather than a distance, which is all the harness needs.
    pub fn margin(self: &Arc<Self>) -> MarginFunction {
        let world = Arc::clone(self);
        MarginFunction::custom(move |x| if world.position_is_free(x[0], x[1]) { 1.0 } else { -1.0 })
    }
}

#[derive(Clone, Debug)]
pub struct ExplorationFilter {
    model: SystemModel,
    world: Arc<OccupancyGrid>,
    known_free: Vec<bool>,
    sensor_radius: f64,
    horizon: usize,
}

pub fn exploration_filter(
    robot: &SystemModel,
    sensor_radius: f64,
    world: Arc<OccupancyGrid>,
    horizon: usize,
) -> Result<ExplorationFilter> {
    if robot.kind() != ModelKind::PlanarDoubleIntegrator {
        return Err(Error::InvalidArgument(format!(
            "exploration filter needs a planar double integrator, got `{}`",
            robot.name()
        )));
    }
    if !(sensor_radius > 0.0) {
        return Err(Error::InvalidArgument(format!("sensor radius must be positive, got {sensor_radius}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("braking horizon must be at least 1".into()));
    }
    Ok(ExplorationFilter {
        model: robot.clone(),
        known_free: vec![false; world.rows * world.cols],
        world,
        sensor_radius,
        horizon,
    })
}

impl ExplorationFilter {
    pub fn known_free(&self) -> &[bool] {
        &self.known_free
    }

    pub fn known_free_count(&self) -> usize {
        self.known_free.iter().filter(|k| **k).count()
    }

    pub fn world(&self) -> &Arc<OccupancyGrid> {
        &self.world
    }

    /// Every cell met by the bounding box of the segment is known free.
    pub fn segment_known_free(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let w = &self.world;
        let lo = [a[0].min(b[0]), a[1].min(b[1])];
        let hi = [a[0].max(b[0]), a[1].max(b[1])];
        let (Some((r0, c0)), Some((r1, c1))) = (w.cell_of(lo[0], lo[1]), w.cell_of(hi[0], hi[1])) else {
            return false;
        };
        (r0..=r1).all(|r| (c0..=c1).all(|c| self.known_free[r * w.cols + c]))
    }

    pub fn position_known_free(&self, x: &[f64]) -> bool {
        self.segment_known_free([x[0], x[1]], [x[0], x[1]])
    }

    fn brake(&self, x: &[f64]) -> Vec<f64> {
        let a = self.model.control_set().upper()[0];
        let dt = self.model.dt();
        vec![(-x[2] / dt).clamp(-a, a), (-x[3] / dt).clamp(-a, a)]
    }

    fn stopped(x: &[f64]) -> bool {
        x[2].abs() <= STOP_TOL && x[3].abs() <= STOP_TOL
    }

    /// Positions visited by applying `u` and then braking, or `None` if the
    /// robot is still moving after the horizon.
    pub fn braking_path(&self, x: &[f64], u: &[f64]) -> Option<Vec<[f64; 2]>> {
        let d = self.model.zero_disturbance();
        let mut path = vec![[x[0], x[1]]];
        let mut s = x.to_vec();
        let mut next = vec![0.0; 4];
        self.model.step_into(&s, u, &d, &mut next);
        s.copy_from_slice(&next);
        path.push([s[0], s[1]]);
        for _ in 1..self.horizon {
            if Self::stopped(&s) {
                return Some(path);
            }
            let b = self.brake(&s);
            self.model.step_into(&s, &b, &d, &mut next);
            s.copy_from_slice(&next);
            path.push([s[0], s[1]]);
        }
        Self::stopped(&s).then_some(path)
    }
}

impl SafetyFilter for ExplorationFilter {
    fn name(&self) -> &str {
        "exploration"
    }

    fn monitor(&self, x: &[f64], u: &[f64]) -> f64 {
        let Some(path) = self.braking_path(x, u) else {
            return -1.0;
        };
        let inside = self.position_known_free(x) && path.windows(2).all(|w| self.segment_known_free(w[0], w[1]));
        if inside {
            1.0
        } else {
            -1.0
        }
    }

    fn fallback(&self, x: &[f64]) -> Vec<f64> {
        self.brake(x)
    }

    fn intervene(&mut self, x: &[f64], u: &[f64]) -> Intervention {
        if self.monitor(x, u) >= 0.0 {
            Intervention::pass(u)
        } else {
            Intervention {
                control: self.brake(x),
                degraded: false,
            }
        }
    }

    /// Reveals every free cell whose center lies within the sensor radius.
    fn observe(&mut self, x: &[f64]) {
        let w = Arc::clone(&self.world);
        let reach = (self.sensor_radius / w.cell_size).ceil() as isize + 1;
        let Some((r0, c0)) = w.cell_of(x[0], x[1]).or_else(|| {
            // Off the map: scan from the nearest in-map cell.
            let cx = ((x[0] - w.origin[0]) / w.cell_size).floor().clamp(0.0, (w.cols - 1) as f64);
            let cy = ((x[1] - w.origin[1]) / w.cell_size).floor().clamp(0.0, (w.rows - 1) as f64);
            Some((cy as usize, cx as usize))
        }) else {
            return;
        };
        let r2 = self.sensor_radius * self.sensor_radius;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (r, c) = (r0 as isize + dr, c0 as isize + dc);
                if r < 0 || c < 0 || r as usize >= w.rows || c as usize >= w.cols {
                    continue;
                }
                let (r, c) = (r as usize, c as usize);
                let center = w.cell_center(r, c);
                let dist2 = (center[0] - x[0]).powi(2) + (center[1] - x[1]).powi(2);
                if dist2 <= r2 && !w.is_occupied(r, c) {
                    self.known_free[r * w.cols + c] = true;
                }
            }
        }
    }

    fn reset(&mut self) {
        self.known_free.iter_mut().for_each(|k| *k = false);
    }

    fn clone_box(&self) -> Box<dyn SafetyFilter> {
        Box::new(self.clone())
    }
}
