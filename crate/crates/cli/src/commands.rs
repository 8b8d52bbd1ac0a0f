//! The five subcommands. Each writes its outputs plus `config.json` (the
//! resolved configuration) into the output directory.

use std::path::{Path, PathBuf};

use mfsbp::geometry::DomainKind;
use mfsbp::mesh::{DiscreteMesh, Mesh};
use mfsbp::operator::{assemble_from_spec, validate_operator, ValidationLimits, ValidationReport};
use mfsbp::quadrature::{SurfaceSystem, VolumeSystem};
use mfsbp::solver::{run_experiment, Discretization, RunResult};
use mfsbp::{Direction, Domain, MfsbpOperator, OperatorConfig};
use rayon::prelude::*;

use crate::config::{Command, RunConfig, SpaceRun};
use crate::output::{ensure_dir, num, opt_num, read_rows, write_text, Table};
use crate::CliError;

pub fn run(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    cfg.check(command)?;
    ensure_dir(&cfg.output_dir)?;
    let mut resolved = cfg.clone();
    resolved.command = Some(command);
    write_text(&cfg.output_dir.join("config.json"), &resolved.to_json())?;
    match command {
        Command::Build => cmd_build(cfg).map(|_| ()),
        Command::Validate => cmd_validate(cfg),
        Command::Solve => cmd_solve(cfg).map(|_| ()),
        Command::Convergence => cmd_convergence(cfg).map(|_| ()),
        Command::Quadrature => cmd_quadrature(cfg),
    }
}

fn domain(cfg: &RunConfig) -> Domain {
    Domain::new(cfg.domain.clone())
}

fn build_operator(cfg: &RunConfig) -> Result<MfsbpOperator, CliError> {
    let op = assemble_from_spec(&cfg.space, &domain(cfg), &cfg.operator)?;
    log::info!(
        "built {} operator: {} nodes in {:.3} s",
        cfg.space.label(),
        op.len(),
        op.meta.build_seconds
    );
    Ok(op)
}

fn report_text(op: &MfsbpOperator, report: &ValidationReport) -> String {
    let space = op
        .spec
        .as_ref()
        .map_or(op.space.label.clone(), |s| s.label());
    format!(
        "space: {space}\nnodes: {} ({} surface, {} interior)\nresult: {}\n{report}",
        op.len(),
        op.nodes.n_surface(),
        op.nodes.interior.len(),
        if report.passed() { "PASS" } else { "FAIL" },
    )
}

/// Build an operator; write `operator.json` and `validation.txt`.
///
/// Validation failures are reported in the text file but do not fail the
/// command (the `validate` command does that).
pub fn cmd_build(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let op = build_operator(cfg)?;
    let report = validate_operator(&op, &ValidationLimits::default());
    for c in report.failures() {
        log::warn!(
            "check '{}' failed: {:e} > {:e}",
            c.name,
            c.measured,
            c.limit
        );
    }
    let path = cfg.output_dir.join("operator.json");
    op.write(&path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    write_text(
        &cfg.output_dir.join("validation.txt"),
        &report_text(&op, &report),
    )?;
    println!("operator: {} ({} nodes)", path.display(), op.len());
    Ok(path)
}

/// Validate a stored operator (or a freshly built one); exit 3 when any
/// check fails.
pub fn cmd_validate(cfg: &RunConfig) -> Result<(), CliError> {
    let op = match &cfg.operator_file {
        Some(path) => MfsbpOperator::read(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => build_operator(cfg)?,
    };
    let report = validate_operator(&op, &ValidationLimits::default());
    let text = report_text(&op, &report);
    write_text(&cfg.output_dir.join("validation.txt"), &text)?;
    print!("{text}");
    let failure = report.failures().next().map(|c| CliError::Construction {
        stage: "validation",
        message: format!(
            "check '{}' measured {:e} above {:e}",
            c.name, c.measured, c.limit
        ),
    });
    failure.map_or(Ok(()), Err)
}

fn mesh_for(domain: &Domain, k: usize) -> Result<Mesh, CliError> {
    match domain.kind {
        DomainKind::Rectangle { .. } => Ok(Mesh::structured_triangulation(k, domain)?),
        _ => Ok(Mesh::single(domain)),
    }
}

/// Run one experiment; write `history.csv` and `solution.csv`.
pub fn cmd_solve(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let mesh = mesh_for(&domain(cfg), cfg.k)?;
    let dm = DiscreteMesh::build(mesh, &cfg.space, &cfg.operator, &cfg.matching)?;
    let result = run_experiment(&dm, &cfg.problem, &cfg.solver)?;

    let mut hist = Table::create(
        &cfg.output_dir.join("history.csv"),
        &[
            "t [time]",
            "E [rms of u]",
            "mass [u*area]",
            "energy [u^2*area]",
        ],
    )?;
    for d in &result.history {
        hist.row(&[num(d.t), num(d.error), num(d.mass), num(d.energy)])?;
    }
    hist.finish()?;

    let disc = Discretization::new(&dm, &cfg.problem, cfg.solver.c_max(&cfg.problem));
    let exact = cfg
        .problem
        .exact
        .as_ref()
        .map(|f| disc.sample(f, result.state.t));
    let mut sol = Table::create(
        &cfg.output_dir.join("solution.csv"),
        &[
            "element [-]",
            "x [length]",
            "y [length]",
            "u [u]",
            "u_exact [u]",
        ],
    )?;
    for (e, pts) in dm.points.iter().enumerate() {
        for (i, p) in pts.iter().enumerate() {
            let ex = exact.as_ref().map(|v| v[e][i]);
            sol.row(&[
                e.to_string(),
                num(p[0]),
                num(p[1]),
                num(result.state.u[e][i]),
                opt_num(ex),
            ])?;
        }
    }
    sol.finish()?;
    println!(
        "solve: {} elements, {} steps, t = {}, E = {:e}, {:.2} s",
        dm.len(),
        result.steps,
        result.state.t,
        result.final_error(),
        result.seconds
    );
    Ok(result)
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub k: usize,
    pub h: f64,
    pub e_poly: f64,
    pub e_trig: f64,
    /// Largest `‖D_ξ V − V_ξ‖_F` of the trig class operators.
    pub residual_trig: f64,
    pub order_poly: Option<f64>,
    pub order_trig: Option<f64>,
}

fn study_error(
    cfg: &RunConfig,
    square: &Domain,
    k: usize,
    run: &SpaceRun,
) -> Result<(f64, f64), CliError> {
    let op_cfg = OperatorConfig {
        nodes: run.nodes.clone(),
        ..cfg.operator.clone()
    };
    let mesh = Mesh::structured_triangulation(k, square)?;
    let dm = DiscreteMesh::build(mesh, &run.space, &op_cfg, &cfg.matching)?;
    let residual = dm
        .cache_ops()
        .flat_map(|op| Direction::ALL.map(|d| op.exactness_residual(d)))
        .fold(0.0, f64::max);
    let result = run_experiment(&dm, &cfg.problem, &cfg.solver)?;
    log::info!(
        "K = {k}, {}: E = {:e} ({:.2} s)",
        run.space.label(),
        result.final_error(),
        result.seconds
    );
    Ok((result.final_error(), residual))
}

fn observed_order(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    (e0 / e1).ln() / (h0 / h1).ln()
}

const CONVERGENCE_HEADER: [&str; 7] = [
    "K [-]",
    "h [length]",
    "E_poly [rms of u]",
    "E_trig [rms of u]",
    "residual_trig [Frobenius]",
    "order_poly [-]",
    "order_trig [-]",
];

fn per_k_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("convergence_K{k:02}.csv"))
}

/// Errors of both spaces for every K (computed in parallel, one file per
/// K), merged into `convergence.csv` with observed orders between
/// consecutive entries.
pub fn cmd_convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>, CliError> {
    if cfg.problem.exact.is_none() {
        return Err(CliError::Config(
            "convergence needs a problem with an exact solution".into(),
        ));
    }
    let square = match cfg.domain {
        DomainKind::Rectangle { .. } => domain(cfg),
        _ => Domain::rectangle([0.0, 0.0], [1.0, 1.0]),
    };
    let dir = &cfg.output_dir;
    cfg.k_list
        .par_iter()
        .map(|&k| {
            let (e_poly, _) = study_error(cfg, &square, k, &cfg.convergence.poly)?;
            let (e_trig, residual) = study_error(cfg, &square, k, &cfg.convergence.trig)?;
            let h = Mesh::structured_triangulation(k, &square)?.h();
            let mut t = Table::create(&per_k_path(dir, k), &CONVERGENCE_HEADER[..5])?;
            t.row(&[
                k.to_string(),
                num(h),
                num(e_poly),
                num(e_trig),
                num(residual),
            ])?;
            t.finish()
        })
        .collect::<Result<Vec<()>, CliError>>()?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.k_list.len());
    for &k in &cfg.k_list {
        let path = per_k_path(dir, k);
        let rec = read_rows(&path)?;
        let cells = rec
            .first()
            .ok_or_else(|| CliError::Output(format!("{}: no data row", path.display())))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            cells[i]
                .parse()
                .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
        };
        let (h, e_poly, e_trig, residual_trig) = (parse(1)?, parse(2)?, parse(3)?, parse(4)?);
        let prev = rows.last();
        rows.push(ConvergenceRow {
            k,
            h,
            e_poly,
            e_trig,
            residual_trig,
            order_poly: prev.map(|p| observed_order(p.e_poly, e_poly, p.h, h)),
            order_trig: prev.map(|p| observed_order(p.e_trig, e_trig, p.h, h)),
        });
    }
    let mut t = Table::create(&dir.join("convergence.csv"), &CONVERGENCE_HEADER)?;
    for r in &rows {
        t.row(&[
            r.k.to_string(),
            num(r.h),
            num(r.e_poly),
            num(r.e_trig),
            num(r.residual_trig),
            opt_num(r.order_poly),
            opt_num(r.order_trig),
        ])?;
        println!(
            "K = {:2}: E_poly = {:.3e}, E_trig = {:.3e}, orders {} / {}",
            r.k,
            r.e_poly,
            r.e_trig,
            r.order_poly.map_or("-".into(), |o| format!("{o:.2}")),
            r.order_trig.map_or("-".into(), |o| format!("{o:.2}")),
        );
    }
    t.finish()?;
    Ok(rows)
}

/// Surface and volume weights of the configured operator plus the defect
/// of every exactness condition against the moment oracle.
pub fn cmd_quadrature(cfg: &RunConfig) -> Result<(), CliError> {
    let op = build_operator(cfg)?;
    let dir = &cfg.output_dir;

    let mut surf = Table::create(
        &dir.join("surface_weights.csv"),
        &[
            "part [-]",
            "x [length]",
            "y [length]",
            "n_x [-]",
            "n_y [-]",
            "weight [length]",
        ],
    )?;
    let weights = op.surface_weights();
    let mut k = 0;
    for (part, nodes) in op.nodes.surface.iter().enumerate() {
        for node in nodes {
            surf.row(&[
                part.to_string(),
                num(node.point[0]),
                num(node.point[1]),
                num(node.normal[0]),
                num(node.normal[1]),
                num(weights[k]),
            ])?;
            k += 1;
        }
    }
    surf.finish()?;

    let points = op.nodes.points();
    let mut vol = Table::create(
        &dir.join("volume_weights.csv"),
        &["x [length]", "y [length]", "weight [area]"],
    )?;
    for (p, w) in points.iter().zip(op.p.iter()) {
        vol.row(&[num(p[0]), num(p[1]), num(*w)])?;
    }
    vol.finish()?;

    let construction = |e: mfsbp::QuadratureError| CliError::from(mfsbp::OperatorError::from(e));
    let mut ex = Table::create(
        &dir.join("exactness.csv"),
        &[
            "kind [-]",
            "part [-]",
            "direction [-]",
            "function [index]",
            "oracle [integral]",
            "quadrature [integral]",
            "defect [integral]",
        ],
    )?;
    let mut worst = 0.0_f64;
    let ssys = SurfaceSystem::new(&op.space, &op.domain).map_err(construction)?;
    for (part, nodes) in op.nodes.surface.iter().enumerate() {
        let offset = op.nodes.part_offsets()[part];
        for dir in Direction::ALL {
            for (i, g) in ssys.funcs.iter().enumerate() {
                let q: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(j, n)| weights[offset + j] * g.eval(n.point) * dir.component(n.normal))
                    .sum();
                let m = ssys.moments[part][dir as usize][i];
                worst = worst.max((q - m).abs());
                ex.row(&[
                    "surface".to_string(),
                    part.to_string(),
                    format!("{dir:?}").to_lowercase(),
                    i.to_string(),
                    num(m),
                    num(q),
                    num((q - m).abs()),
                ])?;
            }
        }
    }
    let vsys = VolumeSystem::new(&op.space, &op.domain).map_err(construction)?;
    let mut volume_rows: Vec<(String, f64, f64)> = vsys
        .funcs
        .iter()
        .zip(&vsys.moments)
        .enumerate()
        .map(|(i, (g, &m))| {
            let q: f64 = points
                .iter()
                .zip(op.p.iter())
                .map(|(p, w)| w * g.eval(*p))
                .sum();
            (i.to_string(), m, q)
        })
        .collect();
    volume_rows.push(("area".into(), vsys.area, op.p.sum()));
    for (name, m, q) in volume_rows {
        worst = worst.max((q - m).abs());
        ex.row(&[
            "volume".to_string(),
            String::new(),
            String::new(),
            name,
            num(m),
            num(q),
            num((q - m).abs()),
        ])?;
    }
    ex.finish()?;
    println!(
        "quadrature: {} surface + {} interior nodes, volume weight sum {:.16e}, largest defect {:e}",
        op.nodes.n_surface(),
        op.nodes.interior.len(),
        op.p.sum(),
        worst
    );
    Ok(())
}
