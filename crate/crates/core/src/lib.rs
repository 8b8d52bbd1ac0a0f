//! Multi-dimensional function-space summation-by-parts (MFSBP) operators.
//!
//! The crate builds diagonal-norm SBP operators `D = P⁻¹Q` that are exact
//! for a user-chosen function space on triangles and disks, and uses them in
//! an energy-stable multi-block solver for linear advection.
//!
//! Modules follow the construction pipeline:
//! [`fspace`] → [`geometry`] → [`quadrature`] → [`operator`] → [`mesh`] →
//! [`solver`].

// Comparisons are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fspace;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod operator;
pub mod quadrature;
pub mod solver;

use serde::{Deserialize, Serialize};

pub use error::{FspaceError, MeshError, OperatorError, QuadratureError, SolverError};
pub use fspace::{BasisFunction, FunctionSpace, SpaceSpec};
pub use geometry::{Domain, NodeSet};

pub use operator::{assemble_operator, MfsbpOperator, OperatorConfig};
pub use quadrature::{PocsConfig, Quadrature};

/// A point in the plane.
pub type Point = [f64; 2];

/// Coordinate direction of a derivative or boundary matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    X,
    Y,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::X, Direction::Y];

    pub fn unit(self) -> [f64; 2] {
        match self {
            Direction::X => [1.0, 0.0],
            Direction::Y => [0.0, 1.0],
        }
    }

    /// The component of `v` along this direction.
    pub fn component(self, v: [f64; 2]) -> f64 {
        match self {
            Direction::X => v[0],
            Direction::Y => v[1],
        }
    }
}
