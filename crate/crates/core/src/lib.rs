//! Safety filters for discrete-time systems with bounded disturbances.
//!
//! Every filter is a monitor, a fallback policy and an intervention scheme
//! (see [`filter::SafetyFilter`]). Four families are provided: the
//! least-restrictive switch on a Hamilton-Jacobi value grid ([`hj`],
//! [`filter`]), the control barrier function QP ([`cbf`]), rollout-based
//! model predictive shielding ([`rollout`], [`explore`]) and tube MPC
//! ([`tube_mpc`]). [`harness`] runs them in closed loop.

pub mod benchmarks;
pub mod cbf;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod explore;
pub mod filter;
pub mod harness;
pub mod hj;
pub mod interval;
pub mod margin;
pub mod policy;
pub mod qp;
pub mod rollout;
pub mod tube_mpc;

pub use error::{Error, Result};
pub use filter::{FilterDecision, Intervention, SafetyFilter};
pub use interval::{Interval, IntervalBox};
