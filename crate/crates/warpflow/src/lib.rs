//! Numerical integrator and verification harness for Ricci flow of
//! multiply-warped product metrics over a one-dimensional base.
//!
//! The crate simulates metrics of the form
//! `g = phi^2 dx^2 + sum_a u_a g_{F_a}` evolving by Ricci flow, where each
//! fiber is a space form and `u_a = (a_a - mu_a t) + v_a(x,t)` splits the
//! warping into a homogeneous shrinking part and a positive perturbation.
//! On top of the integrator it provides:
//!
//! * exact pointwise curvature kernels and a brute-force Christoffel
//!   oracle for them ([`geometry`]),
//! * the calculus of slowly-varying control functions that gate admissible
//!   initial data ([`control`], [`assumptions`]),
//! * per-frame monitored quantities and heat-operator residual checks
//!   ([`diagnostics`]),
//! * quantitative measurements of uniform equivalence, singularity
//!   formation at spatial infinity, and cylinder stability ([`verify`]),
//! * parabolic rescaling along essential blowup sequences and the soliton
//!   dichotomy ([`blowup`], [`soliton`]),
//! * a reproducible experiment harness and CLI ([`harness`]).

pub mod assumptions;
pub mod blowup;
pub mod control;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod harness;
pub mod soliton;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{FiberSpec, FlowState, WarpedProductSpec};
