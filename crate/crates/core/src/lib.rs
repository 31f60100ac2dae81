//! Simulation and diagnostics for the simplified Ericksen-Leslie system on
//! the round two-sphere:
//!
//! ```text
//! u_t + D_u u + grad P = D^2 u - sum_i (grad d^i) tau^i(d),   div u = 0,
//! d_t + u . grad d     = Delta d + |grad d|^2 d,              |d| = 1,
//! ```
//!
//! discretized on two overlapping stereographic charts.
//!
//! * [`charts`]: the atlas, conformal factor, quadrature and partition of unity.
//! * [`fields`]: node fields, chart transitions, initial-data builders.
//! * [`calculus`]: differential operators, integrals, elliptic solves.
//! * [`energetics`]: energies, degree, tension, dissipation.
//! * [`evolve`]: time stepping.
//! * [`diagnostics`]: decay fits, concentration scans, certificates, constants.
//! * [`cli`]: configuration, file formats and the command-line front end.

pub mod calculus;
pub mod charts;
pub mod cli;
pub mod diagnostics;
pub mod energetics;
pub mod error;
pub mod evolve;
pub mod fields;

pub use charts::{build_atlas, ChartAtlas, ChartId};
pub use error::{Error, Result};
pub use fields::{DirectorField, FlowState, PressureField, ScalarField, VelocityField};
