//! Run configuration: one JSON document per run, with a few scalar fields
//! overridable from the command line.

use std::path::{Path, PathBuf};

use mfsbp::geometry::DomainKind;
use mfsbp::mesh::MatchConfig;
use mfsbp::operator::NodeCounts;
use mfsbp::solver::{AdvectionProblem, SolverConfig};
use mfsbp::{OperatorConfig, SpaceSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Build,
    Validate,
    Solve,
    Convergence,
    Quadrature,
}

/// A space with the node counts used for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceRun {
    pub space: SpaceSpec,
    pub nodes: NodeCounts,
}

/// The two discretisations compared by a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub poly: SpaceRun,
    pub trig: SpaceRun,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            poly: SpaceRun {
                space: SpaceSpec::F1,
                nodes: NodeCounts::Fixed {
                    per_part: 8,
                    interior: 21,
                },
            },
            trig: SpaceRun {
                space: SpaceSpec::F2 {
                    omega: std::f64::consts::PI,
                },
                nodes: NodeCounts::Fixed {
                    per_part: 8,
                    interior: 12,
                },
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must name the subcommand being run.
    pub command: Option<Command>,
    pub space: SpaceSpec,
    pub domain: DomainKind,
    /// Node counts, POCS settings and Halton skip.
    pub operator: OperatorConfig,
    pub problem: AdvectionProblem,
    pub solver: SolverConfig,
    /// Squares per side when the domain is a rectangle.
    pub k: usize,
    pub k_list: Vec<usize>,
    pub convergence: ConvergenceConfig,
    pub matching: MatchConfig,
    /// Operator document checked by `validate` instead of building one.
    pub operator_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            space: SpaceSpec::F1,
            domain: DomainKind::Triangle {
                vertices: [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            },
            operator: OperatorConfig::default(),
            problem: AdvectionProblem::default(),
            solver: SolverConfig::default(),
            k: 10,
            k_list: (3..=10).collect(),
            convergence: ConvergenceConfig::default(),
            matching: MatchConfig::default(),
            operator_file: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that replace fields of the file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Squares per side of a rectangle mesh.
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated K values for convergence studies.
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    pub final_time: Option<f64>,
    /// Halton points discarded before interior nodes are taken.
    #[arg(long)]
    pub halton_skip: Option<u64>,
    /// Operator document to validate.
    #[arg(long)]
    pub operator_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(ks) = &o.k_list {
            self.k_list = ks.clone();
        }
        if let Some(dt) = o.dt {
            self.solver.dt = dt;
        }
        if let Some(t) = o.final_time {
            self.problem.final_time = t;
        }
        if let Some(skip) = o.halton_skip {
            self.operator.escalation.halton_skip = skip;
        }
        if let Some(f) = &o.operator_file {
            self.operator_file = Some(f.clone());
        }
    }

    /// Reject values no command can use.
    pub fn check(&self, command: Command) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(c) = self.command {
            if c != command {
                return bad(format!("config is for '{c:?}' but '{command:?}' was run"));
            }
        }
        if let Err(m) = self.operator.pocs.validate() {
            return bad(format!("pocs: {m}"));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return bad("k_list must be non-empty with entries ≥ 1".into());
        }
        if !(self.solver.dt > 0.0 && self.solver.dt.is_finite()) {
            return bad(format!(
                "solver.dt must be positive, got {}",
                self.solver.dt
            ));
        }
        if let Err(e) = self.problem.validate() {
            return bad(e.to_string());
        }
        if let DomainKind::Disk { radius, .. } = self.domain {
            if !(radius > 0.0) {
                return bad("disk radius must be positive".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"spaec": {"name": "F1"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"solver": {"dt": 0.1, "cfl": 2}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"space": {"name": "F2", "omega": 1, "x": 0}}"#).is_err());
    }

    #[test]
    fn partial_sections_fill_in() {
        let cfg = RunConfig::from_json(
            r#"{"space": {"name": "F2", "omega": 3.0},
                "operator": {"nodes": {"fixed": {"per_part": 8, "interior": 12}}},
                "problem": {"final_time": 0.25}}"#,
        )
        .unwrap();
        assert_eq!(cfg.space, SpaceSpec::F2 { omega: 3.0 });
        assert_eq!(
            cfg.operator.nodes,
            NodeCounts::Fixed {
                per_part: 8,
                interior: 12
            }
        );
        assert_eq!(cfg.problem.final_time, 0.25);
        assert_eq!(cfg.problem.a, 1.0);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            k: Some(4),
            dt: Some(5e-4),
            ..Default::default()
        });
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.k, 4);
    }

    #[test]
    fn inconsistent_values_are_config_errors() {
        let mut cfg = RunConfig::default();
        cfg.solver.dt = 0.0;
        assert!(matches!(
            cfg.check(Command::Solve),
            Err(CliError::Config(_))
        ));
        let cfg = RunConfig {
            command: Some(Command::Build),
            ..Default::default()
        };
        assert!(cfg.check(Command::Solve).is_err());
        assert!(cfg.check(Command::Build).is_ok());
    }
}
