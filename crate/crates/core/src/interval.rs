//! Closed real intervals and axis-aligned boxes.
//!
//! Arithmetic uses the same floating-point operations, in the same order, as
//! the point maps it encloses. Round-to-nearest is monotone, so an enclosure
//! built from endpoint evaluations of a monotone expression contains every
//! floating-point evaluation at interior points. Transcendental functions get
//! a small outward pad because libm makes no monotonicity promise.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TRIG_PAD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Panics if `lo > hi` or either bound is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval bounds out of order: [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    pub fn symmetric(radius: f64) -> Self {
        Self::new(-radius, radius)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        if self.lo.is_finite() && self.hi.is_finite() {
            0.5 * self.lo + 0.5 * self.hi
        } else if self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY {
            0.0
        } else if self.lo.is_finite() {
            self.lo
        } else {
            self.hi
        }
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.width()
    }

    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::new(lo, hi))
    }

    /// Multiplication by a scalar. Zero times an unbounded interval is zero.
    pub fn scale(&self, k: f64) -> Interval {
        if k == 0.0 {
            return Interval::point(0.0);
        }
        let a = self.lo * k;
        let b = self.hi * k;
        if k > 0.0 {
            Interval::new(a, b)
        } else {
            Interval::new(b, a)
        }
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let products = [
            mul_ext(self.lo, other.lo),
            mul_ext(self.lo, other.hi),
            mul_ext(self.hi, other.lo),
            mul_ext(self.hi, other.hi),
        ];
        let lo = products.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }

    pub fn sin(&self) -> Interval {
        // sin(x) = cos(x - pi/2); reuse the cosine piece analysis.
        trig_enclosure(*self, f64::sin, FRAC_PI_2)
    }

    pub fn cos(&self) -> Interval {
        trig_enclosure(*self, f64::cos, 0.0)
    }
}

fn mul_ext(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Enclosure of a shifted cosine `f` where `f(x) = cos(x - phase)`.
///
/// Extrema of cosine sit at multiples of pi; the function is monotone between
/// consecutive ones, so the range is the hull of the endpoint values and any
/// extremum inside the interval.
fn trig_enclosure(x: Interval, f: fn(f64) -> f64, phase: f64) -> Interval {
    if !x.lo.is_finite() || !x.hi.is_finite() || x.width() >= 2.0 * PI {
        return Interval::new(-1.0, 1.0);
    }
    let a = f(x.lo);
    let b = f(x.hi);
    let mut lo = a.min(b);
    let mut hi = a.max(b);
    // Index of extrema k*pi + phase inside [x.lo, x.hi].
    let first = ((x.lo - phase) / PI).ceil() as i64;
    let last = ((x.hi - phase) / PI).floor() as i64;
    for k in first..=last {
        if k.rem_euclid(2) == 0 {
            hi = 1.0;
        } else {
            lo = -1.0;
        }
    }
    Interval::new((lo - TRIG_PAD).max(-1.0), (hi + TRIG_PAD).min(1.0))
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::new(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Axis-aligned box `lower <= x <= upper`. The empty set is a separate flag so
/// that `lower <= upper` always holds for the stored bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    empty: bool,
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box upper bound",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidArgument(format!(
                    "box dimension {i} has bounds [{l}, {u}]"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            empty: false,
        })
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lower: x.to_vec(),
            upper: x.to_vec(),
            empty: false,
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![0.0; dim],
            empty: true,
        }
    }

    /// The single point of `R^0`; the disturbance set of an exact model.
    pub fn zero_dim() -> Self {
        Self::point(&[])
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            empty: false,
        }
    }

    /// `[-r_i, r_i]` in every dimension.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        Self::new(radius.iter().map(|r| -r).collect(), radius.to_vec())
    }

    pub fn from_intervals(intervals: &[Interval]) -> Self {
        Self {
            lower: intervals.iter().map(|i| i.lo).collect(),
            upper: intervals.iter().map(|i| i.hi).collect(),
            empty: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn interval(&self, i: usize) -> Interval {
        Interval::new(self.lower[i], self.upper[i])
    }

    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.dim()).map(|i| self.interval(i)).collect()
    }

    pub fn is_point(&self) -> bool {
        !self.empty && self.lower == self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_slack(x, 0.0)
    }

    pub fn contains_with_slack(&self, x: &[f64], slack: f64) -> bool {
        !self.empty
            && x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l - slack <= *v && *v <= *u + slack)
    }

    /// Set inclusion `other ⊆ self`.
    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        if other.empty {
            return true;
        }
        !self.empty
            && (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    pub fn intersect(&self, other: &IntervalBox) -> IntervalBox {
        if self.empty || other.empty {
            return IntervalBox::empty(self.dim());
        }
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let l = self.lower[i].max(other.lower[i]);
            let u = self.upper[i].min(other.upper[i]);
            if l > u {
                return IntervalBox::empty(self.dim());
            }
            lower.push(l);
            upper.push(u);
        }
        IntervalBox {
            lower,
            upper,
            empty: false,
        }
    }

    pub fn hull(&self, other: &IntervalBox) -> IntervalBox {
        if self.empty {
            return other.clone();
        }
        if other.empty {
            return self.clone();
        }
        IntervalBox {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
            empty: false,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.intervals().iter().map(Interval::mid).collect()
    }

    pub fn radius(&self) -> Vec<f64> {
        self.intervals().iter().map(Interval::radius).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.intervals().iter().map(Interval::width).collect()
    }

    /// Grow each side by `amount[i]` (must be nonnegative).
    pub fn inflate(&self, amount: &[f64]) -> IntervalBox {
        if self.empty {
            return self.clone();
        }
        IntervalBox {
            lower: self.lower.iter().zip(amount).map(|(l, a)| l - a).collect(),
            upper: self.upper.iter().zip(amount).map(|(u, a)| u + a).collect(),
            empty: false,
        }
    }

    /// Clamp a point into the box, component-wise.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.empty {
            return write!(f, "∅");
        }
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, " × ")?;
            }
            write!(f, "{}", self.interval(i))?;
        }
        Ok(())
    }
}
