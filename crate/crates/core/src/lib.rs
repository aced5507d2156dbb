//! Radially symmetric finite-volume simulator for the chemotaxis system with
//! indirect signal production
//!
//! ```text
//! u_t = ∇·(∇u - u∇v),   v_t = Δv - v + w,   0 = Δw - w + u
//! ```
//!
//! on a ball in `R^n` with homogeneous Neumann conditions, together with its
//! Lyapunov functional, a family of concentrated low-energy initial data and
//! empirical probes of the estimates that drive finite-time blowup.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod helmholtz;
pub mod initial_data;
pub mod io;
pub mod probes;
pub mod verify;

pub use error::{Error, Result};
