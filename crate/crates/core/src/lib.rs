//! Synthetic intermediate motion clips between reference motions and a target.
//!
//! A reference clip is aligned to the target with order-preserving optimal
//! transport ([`align`]), projected to a frame-to-frame assignment
//! ([`assignment`]), blended along per-joint rotation geodesics ([`pose`]) and
//! made free of self-collisions ([`collision`], [`optimizer`]). [`pipeline`]
//! ties these together and [`io`] and [`cli`] expose them.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

pub mod align;
pub mod assignment;
pub mod cli;
pub mod collision;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod optimizer;
pub mod pipeline;
pub mod pose;
pub mod synthetic;

pub use error::{Error, Result};
