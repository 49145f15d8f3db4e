//! Numerical laboratory for the G/GI/N queue in the Halfin-Whitt regime:
//! exact discrete-event simulation at finite N, deterministic solvers for the
//! fluid and diffusion limit equations, Gaussian-driver samplers, and a
//! verification harness that checks the finite-N scaled processes against the
//! limit solutions.

// validation uses `!(x > 0.0)` deliberately so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod dist;
pub mod fluid;
pub mod grid;
pub mod regulator;
pub mod renewal;
pub mod stats;

pub mod rng;
pub mod sim;
pub mod verify;
