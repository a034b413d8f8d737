//! Geometric Cosserat-rod dynamics and shooting-based boundary observers for
//! soft continuum robots.
//!
//! The crate is organized bottom-up:
//!
//! - [`liegroup`]: SO(3)/SE(3) primitives.
//! - [`rodmodel`]: section matrices, constitutive law, actuation and energy.
//! - [`shootsolve`]: implicit time stepping with a Newton shooting solve per step.
//! - [`observers`]: boundary-observer strategies and measurement handling.
//! - [`gains`]: Riemann diagonalization, reflection matrices and optimal gains.
//! - [`harness`]: scenarios, sweeps, reports and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gains;
pub mod harness;
pub mod liegroup;
pub mod observers;
pub mod rodmodel;
pub mod shootsolve;

pub use error::{Error, Result};
pub use liegroup::{Pose, Twist, Wrench};
pub use rodmodel::{RodParameters, RodState, TendonRouting};
