//! Analysis of planar piecewise-smooth vector fields with a switching
//! manifold: Filippov sliding, canard cycles and their regularizations.

// `!(a < b)` comparisons are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod canard;
pub mod expr;
pub mod flow;
pub mod geometry;
pub mod index;
pub mod io;
pub mod ode;
pub mod regularize;
pub mod roots;
pub mod system;

pub use expr::{parse, Expr, Var};
pub use geometry::Vec2;
pub use system::{NonSmoothSystem, PseudoKind, SigmaClass, Tolerances, Which};
