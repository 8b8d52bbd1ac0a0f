//! Command-line front end: builds and validates operators, runs single
//! experiments and convergence studies, and writes every result as CSV or
//! JSON next to the resolved run configuration.

// Comparisons are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use mfsbp::{MeshError, OperatorError, QuadratureError, SolverError};
use thiserror::Error;

pub use config::{Command, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("construction failed during {stage}: {message}")]
    Construction {
        stage: &'static str,
        message: String,
    },
    #[error("solver failed: {0}")]
    Solver(String),
}

impl CliError {
    /// 0 success, 2 configuration or I/O, 3 construction, 4 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Construction { .. } => 3,
            CliError::Solver(_) => 4,
        }
    }
}

fn quadrature_stage(e: &QuadratureError) -> &'static str {
    match e {
        QuadratureError::Surface { .. } => "surface quadrature",
        QuadratureError::Volume(_) => "volume quadrature",
        QuadratureError::Escalation { what, .. } if what.contains("surface") => {
            "surface quadrature"
        }
        QuadratureError::Escalation { .. } => "volume quadrature",
        QuadratureError::Fspace(_) => "function space",
        _ => "quadrature",
    }
}

impl From<OperatorError> for CliError {
    fn from(e: OperatorError) -> Self {
        let stage = match &e {
            OperatorError::Quadrature(q) => quadrature_stage(q),
            OperatorError::Fspace(_) => "function space",
            OperatorError::Antisymmetric { .. } => "Q_A",
            OperatorError::Invariant { .. } => "validation",
        };
        CliError::Construction {
            stage,
            message: e.to_string(),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Operator(op) => op.into(),
            MeshError::Invalid(m) => CliError::Config(m),
            other => CliError::Construction {
                stage: "face matching",
                message: other.to_string(),
            },
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Invalid(m) => CliError::Config(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let qa: CliError = OperatorError::Antisymmetric {
            residual: 1.0,
            iterations: 3,
        }
        .into();
        assert_eq!(qa.exit_code(), 3);
        assert!(qa.to_string().contains("Q_A"));
        let surf: CliError = OperatorError::Quadrature(QuadratureError::Surface {
            part: 1,
            source: Box::new(QuadratureError::Pocs {
                residual: 0.1,
                iterations: 10,
            }),
        })
        .into();
        assert!(surf.to_string().contains("surface quadrature"));
        let solver: CliError = SolverError::NonFinite { elem: 0, time: 0.5 }.into();
        assert_eq!(solver.exit_code(), 4);
    }
}
