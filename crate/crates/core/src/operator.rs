//! Assembly and validation of MFSBP operators `D_ξ = P⁻¹Q_ξ`.
//!
//! `P` is the diagonal of a positive volume quadrature, `B_ξ` the diagonal
//! mimetic boundary matrix built from one shared surface quadrature, and
//! `Q_ξ = Q_A + ½B_ξ` with an anti-symmetric `Q_A` found by alternating
//! projections.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::OperatorError;
use crate::fspace::{FunctionSpace, SpaceSpec};
use crate::geometry::{Domain, NodeSet};
use crate::quadrature::{
    build_quadratures, escalate_nodes, EscalationConfig, PocsConfig, Quadrature, SurfaceSystem,
};
use crate::Direction;

/// Version of the operator file layout written by [`OperatorFile`].
pub const SCHEMA_VERSION: u32 = 1;

/// Diagonal boundary matrix; zero at interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMatrix {
    pub diag: DVector<f64>,
    pub direction: Direction,
}

impl BoundaryMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }

    /// `uᵀ B v`.
    pub fn form(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.diag
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(b, (x, y))| b * x * y)
            .sum()
    }
}

/// `B_ξ = diag(v_n (ξ·n_n))` on the surface nodes, zero elsewhere.
pub fn assemble_boundary_matrices(surfq: &Quadrature, nodes: &NodeSet) -> [BoundaryMatrix; 2] {
    let normals: Vec<[f64; 2]> = nodes.surface.iter().flatten().map(|s| s.normal).collect();
    assert_eq!(
        normals.len(),
        surfq.weights.len(),
        "one surface weight per surface node"
    );
    Direction::ALL.map(|dir| {
        let mut diag = DVector::zeros(nodes.len());
        for (i, (n, w)) in normals.iter().zip(&surfq.weights).enumerate() {
            diag[i] = w * dir.component(*n);
        }
        BoundaryMatrix {
            diag,
            direction: dir,
        }
    })
}

/// Anti-symmetric part of an operator together with its solve statistics.
#[derive(Clone, Debug)]
pub struct QaSolution {
    pub q_a: DMatrix<f64>,
    /// `‖Q_A V − (P V_ξ − ½ B_ξ V)‖_F`.
    pub residual: f64,
    pub iterations: usize,
    /// The target was met to `cfg.tol`; otherwise the iteration stagnated at
    /// the closest point of the two constraint sets.
    pub converged: bool,
}

fn antisymmetric_projection(m: &DMatrix<f64>, r: &DVector<f64>) -> DMatrix<f64> {
    // Nearest anti-symmetric matrix with prescribed row sums r:
    // A = (M − Mᵀ)/2 followed by the minimal correction (s1ᵀ − 1sᵀ)/N.
    let n = m.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] - m[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    let s: DVector<f64> = r - a.column_sum();
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (s[i] - s[j]) * inv_n;
            a[(i, j)] += d;
            a[(j, i)] -= d;
        }
    }
    a
}

/// Solve `Q_A V = P V_ξ − ½ B_ξ V` for anti-symmetric `Q_A` by alternating
/// projections from the zero matrix.
///
/// The exactness set is `{Q : QV = R}` with projection
/// `Q + (R − QV)V⁺`; the second set is the anti-symmetric matrices whose row
/// sums equal `−½B_ξ1`. When constants lie in the space every exact `Q_A`
/// has those row sums, so the solution set is unchanged, and the returned
/// matrix gives `D_ξ1 = 0` even when the system can only be met in a
/// least-squares sense.
pub fn build_qa(
    v: &DMatrix<f64>,
    v_xi: &DMatrix<f64>,
    p_diag: &DVector<f64>,
    b: &BoundaryMatrix,
    cfg: &PocsConfig,
) -> Result<QaSolution, OperatorError> {
    let n = v.nrows();
    let pv = DMatrix::from_fn(n, v.ncols(), |i, j| p_diag[i] * v_xi[(i, j)]);
    let bv = DMatrix::from_fn(n, v.ncols(), |i, j| b.diag[i] * v[(i, j)]);
    let target = &pv - 0.5 * bv;
    let row_sums = -0.5 * &b.diag;
    let v_pinv = crate::linalg::pinv(v, 1e-13);
    let goal = cfg.tol * (1.0 + pv.norm());

    let mut q = DMatrix::zeros(n, n);
    let mut best = (f64::INFINITY, q.clone());
    let mut last_check = f64::INFINITY;
    let mut stalls = 0;
    for it in 1..=cfg.max_iters {
        let defect = &target - &q * v;
        let qc = &q + &defect * &v_pinv;
        let next = antisymmetric_projection(&qc, &row_sums);
        let step = (&next - &q).norm();
        q = next;
        if it % 10 != 0 && it > 1 {
            continue;
        }
        let residual = (&q * v - &target).norm();
        if residual < best.0 {
            best = (residual, q.clone());
        }
        // keep iterating past the goal until the iterates stop moving: the
        // derivative matrix divides by small weights, so every digit counts
        if step <= 4.0 * f64::EPSILON * (1.0 + q.norm()) {
            log::debug!("Q_A settled at residual {residual:e} after {it} iterations");
            return Ok(QaSolution {
                q_a: best.1,
                residual: best.0,
                iterations: it,
                converged: best.0 <= goal,
            });
        }
        if it % crate::quadrature::pocs::CHECK_EVERY == 0 {
            // no relative progress over a whole window: the sets do not meet
            if best.0 > (1.0 - 1e-9) * last_check {
                stalls += 1;
                if stalls >= 4 {
                    return Ok(QaSolution {
                        q_a: best.1,
                        residual: best.0,
                        iterations: it,
                        converged: best.0 <= goal,
                    });
                }
            } else {
                stalls = 0;
            }
            last_check = best.0;
        }
    }
    if best.0 <= goal {
        return Ok(QaSolution {
            q_a: best.1,
            residual: best.0,
            iterations: cfg.max_iters,
            converged: true,
        });
    }
    Err(OperatorError::Antisymmetric {
        residual: best.0,
        iterations: cfg.max_iters,
    })
}

/// One coordinate direction of an operator.
#[derive(Clone, Debug)]
pub struct DirectionalOperator {
    pub b: BoundaryMatrix,
    pub q: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// How nodes are chosen for an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeCounts {
    /// Equidistant nodes per boundary part plus Halton interior nodes.
    Fixed { per_part: usize, interior: usize },
    /// Increase counts one at a time until both quadratures exist.
    Escalate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub nodes: NodeCounts,
    pub pocs: PocsConfig,
    /// Seeds and ceilings for [`NodeCounts::Escalate`]; its `halton_skip`
    /// also applies to fixed counts.
    pub escalation: EscalationConfig,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            nodes: NodeCounts::Escalate,
            pocs: PocsConfig::default(),
            escalation: EscalationConfig::default(),
        }
    }
}

impl OperatorConfig {
    pub fn fixed(per_part: usize, interior: usize) -> Self {
        Self {
            nodes: NodeCounts::Fixed { per_part, interior },
            ..Self::default()
        }
    }
}

/// Statistics recorded during construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub per_part: usize,
    pub interior: usize,
    pub halton_skip: u64,
    /// Length scale the operator was rescaled by (1 for direct builds).
    pub scale: f64,
    pub w_min: f64,
    pub surface: Quadrature,
    pub volume_solves: Vec<crate::quadrature::SolveInfo>,
    pub volume_residual: f64,
    /// `‖Q_A V − (P V_ξ − ½B_ξ V)‖_F` per direction.
    pub qa_residual: [f64; 2],
    pub qa_iterations: [usize; 2],
    pub qa_converged: [bool; 2],
    /// SHA-256 of the little-endian bytes of `Q_A,x` followed by `Q_A,y`.
    pub qa_hash: String,
    pub pocs: PocsConfig,
    #[serde(skip)]
    pub build_seconds: f64,
}

/// `D_ξ = P⁻¹Q_ξ` with `Q_ξ + Q_ξᵀ = B_ξ` on one node set; both directions
/// share `p`.
#[derive(Clone, Debug)]
pub struct MfsbpOperator {
    pub spec: Option<SpaceSpec>,
    /// The space in the operator's own coordinates.
    pub space: FunctionSpace,
    pub domain: Domain,
    pub nodes: NodeSet,
    pub p: DVector<f64>,
    pub dirs: [DirectionalOperator; 2],
    pub meta: OperatorMeta,
}

impl MfsbpOperator {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn dir(&self, d: Direction) -> &DirectionalOperator {
        &self.dirs[d as usize]
    }

    /// Surface weights `v_n`, one per surface node.
    pub fn surface_weights(&self) -> &[f64] {
        &self.meta.surface.weights
    }

    /// `Q_A,ξ = Q_ξ − ½B_ξ`.
    pub fn q_a(&self, d: Direction) -> DMatrix<f64> {
        let op = self.dir(d);
        &op.q - 0.5 * op.b.to_dense()
    }

    /// Exactness residual `‖D_ξ V − V_ξ‖_F`.
    pub fn exactness_residual(&self, d: Direction) -> f64 {
        match self.space.eval_vandermonde(&self.nodes.points()) {
            Ok(vm) => (&self.dir(d).d * &vm.v - vm.derivative(d)).norm(),
            Err(_) => f64::INFINITY,
        }
    }

    /// The same operator on the domain dilated by `h` and shifted by
    /// `origin`: nodes `origin + h·p`, `P·h²`, `B·h`, `Q·h`, `D/h`.
    /// `space` must be the dilated space expressed in the new coordinates.
    pub fn rescaled(&self, h: f64, origin: crate::Point, space: FunctionSpace) -> MfsbpOperator {
        let map = |p: crate::Point| [origin[0] + h * p[0], origin[1] + h * p[1]];
        let nodes = NodeSet {
            surface: self
                .nodes
                .surface
                .iter()
                .map(|part| {
                    part.iter()
                        .map(|s| crate::geometry::SurfaceNode {
                            point: map(s.point),
                            normal: s.normal,
                        })
                        .collect()
                })
                .collect(),
            interior: self.nodes.interior.iter().map(|&p| map(p)).collect(),
        };
        let domain = self.domain.dilated(h).translated(origin);
        let dirs = self.dirs.clone().map(|op| DirectionalOperator {
            b: BoundaryMatrix {
                diag: op.b.diag * h,
                direction: op.b.direction,
            },
            q: op.q * h,
            d: op.d / h,
        });
        let mut meta = self.meta.clone();
        meta.scale *= h;
        meta.w_min *= h * h;
        meta.surface.weights.iter_mut().for_each(|w| *w *= h);
        meta.surface.nodes = nodes.surface.iter().flatten().map(|s| s.point).collect();
        MfsbpOperator {
            spec: self.spec.clone(),
            space,
            domain,
            nodes,
            p: &self.p * (h * h),
            dirs,
            meta,
        }
    }
}

/// `D = P⁻¹Q` with each diagonal entry replaced by the negated compensated
/// sum of its row's off-diagonal entries. The two agree analytically
/// (`Q1 = 0` when constants lie in the space); this form keeps `D1 = 0` at
/// round-off level even where small weights amplify the error of `Q1`.
pub fn derivative_matrix(q: &DMatrix<f64>, p: &DVector<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut d = DMatrix::from_fn(n, n, |i, j| q[(i, j)] / p[i]);
    for i in 0..n {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for j in (0..n).filter(|&j| j != i) {
            let x = d[(i, j)];
            let t = sum + x;
            comp += if sum.abs() >= x.abs() {
                (sum - t) + x
            } else {
                (x - t) + sum
            };
            sum = t;
        }
        d[(i, i)] = -(sum + comp);
    }
    d
}

fn qa_hash(q: &[DMatrix<f64>; 2]) -> String {
    let mut hasher = Sha256::new();
    for m in q {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                hasher.update(m[(i, j)].to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<(), OperatorError> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(OperatorError::Invariant {
            check: what,
            measured: f64::NAN,
            limit: 0.0,
        })
    }
}

/// Build an operator on `domain` for `space`: node selection, surface and
/// volume quadratures, boundary matrices and `Q_A` for both directions.
///
/// Structural invariants (SBP identity, positive `P ≥ w_min`, `D_ξ1 = 0`,
/// finiteness) are enforced; the exactness residual is recorded and
/// reported by [`validate_operator`].
pub fn assemble_operator(
    space: &FunctionSpace,
    spec: Option<&SpaceSpec>,
    domain: &Domain,
    cfg: &OperatorConfig,
) -> Result<MfsbpOperator, OperatorError> {
    let started = Instant::now();
    let skip = cfg.escalation.halton_skip;
    let (nodes, surface, volume) = match cfg.nodes {
        NodeCounts::Fixed { per_part, interior } => {
            let nodes = NodeSet::generate(domain, per_part, interior, skip);
            space.eval_vandermonde(&nodes.points())?;
            let (surface, volume) = build_quadratures(space, domain, &nodes, &cfg.pocs)?;
            (nodes, surface, volume)
        }
        NodeCounts::Escalate => {
            let e = escalate_nodes(space, domain, &cfg.pocs, &cfg.escalation)?;
            (e.nodes, e.surface, e.volume)
        }
    };
    finish_assembly(space, spec, domain, cfg, nodes, surface, volume, started)
}

/// Assemble on a prescribed node set (surface nodes grouped like
/// `domain.parts`); the node counts in `cfg` are ignored.
pub fn assemble_operator_on_nodes(
    space: &FunctionSpace,
    spec: Option<&SpaceSpec>,
    domain: &Domain,
    nodes: NodeSet,
    cfg: &OperatorConfig,
) -> Result<MfsbpOperator, OperatorError> {
    let started = Instant::now();
    if nodes.surface.len() != domain.parts.len() {
        return Err(OperatorError::Invariant {
            check: "surface groups per part",
            measured: nodes.surface.len() as f64,
            limit: domain.parts.len() as f64,
        });
    }
    space.eval_vandermonde(&nodes.points())?;
    let (surface, volume) = build_quadratures(space, domain, &nodes, &cfg.pocs)?;
    finish_assembly(space, spec, domain, cfg, nodes, surface, volume, started)
}

#[allow(clippy::too_many_arguments)]
fn finish_assembly(
    space: &FunctionSpace,
    spec: Option<&SpaceSpec>,
    domain: &Domain,
    cfg: &OperatorConfig,
    nodes: NodeSet,
    surface: Quadrature,
    volume: Quadrature,
    started: Instant,
) -> Result<MfsbpOperator, OperatorError> {
    let skip = cfg.escalation.halton_skip;
    let vm = space.eval_vandermonde(&nodes.points())?;
    let p = DVector::from_vec(volume.weights.clone());
    let bs = assemble_boundary_matrices(&surface, &nodes);

    let mut q_as: Vec<QaSolution> = Vec::with_capacity(2);
    for (dir, b) in Direction::ALL.iter().zip(&bs) {
        q_as.push(build_qa(&vm.v, vm.derivative(*dir), &p, b, &cfg.pocs)?);
    }
    let hash = qa_hash(&[q_as[0].q_a.clone(), q_as[1].q_a.clone()]);
    let constants = space.contains_constants();
    let dirs = [0, 1].map(|k| {
        let b = bs[k].clone();
        let q = &q_as[k].q_a + 0.5 * b.to_dense();
        let d = if constants {
            derivative_matrix(&q, &p)
        } else {
            DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / p[i])
        };
        DirectionalOperator { b, q, d }
    });
    let per_part = nodes.surface.first().map_or(0, Vec::len);
    let op = MfsbpOperator {
        spec: spec.cloned(),
        space: space.clone(),
        domain: domain.clone(),
        meta: OperatorMeta {
            per_part,
            interior: nodes.interior.len(),
            halton_skip: skip,
            scale: 1.0,
            w_min: volume.w_min.unwrap_or(0.0),
            volume_solves: volume.solves.clone(),
            volume_residual: volume.residual,
            surface,
            qa_residual: [q_as[0].residual, q_as[1].residual],
            qa_iterations: [q_as[0].iterations, q_as[1].iterations],
            qa_converged: [q_as[0].converged, q_as[1].converged],
            qa_hash: hash,
            pocs: cfg.pocs.clone(),
            build_seconds: 0.0,
        },
        nodes,
        p,
        dirs,
    };
    for d in &op.dirs {
        check_finite(&d.q, "finite Q")?;
        check_finite(&d.d, "finite D")?;
    }
    let structural = structural_checks(&op);
    if let Some(c) = structural.iter().find(|c| !c.passed) {
        return Err(OperatorError::Invariant {
            check: c.name,
            measured: c.measured,
            limit: c.limit,
        });
    }
    let mut op = op;
    op.meta.build_seconds = started.elapsed().as_secs_f64();
    Ok(op)
}

/// Assemble from a builtin space descriptor.
pub fn assemble_from_spec(
    spec: &SpaceSpec,
    domain: &Domain,
    cfg: &OperatorConfig,
) -> Result<MfsbpOperator, OperatorError> {
    assemble_operator(&FunctionSpace::from_spec(spec), Some(spec), domain, cfg)
}

/// One measured quantity with its limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub direction: Option<Direction>,
    pub measured: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(
        name: &'static str,
        direction: Option<Direction>,
        measured: f64,
        limit: f64,
    ) -> Self {
        Self {
            name,
            direction,
            measured,
            limit,
            passed: measured <= limit,
        }
    }

    fn at_least(name: &'static str, measured: f64, limit: f64) -> Self {
        Self {
            name,
            direction: None,
            measured,
            limit,
            passed: measured >= limit,
        }
    }
}

/// Invariant measurements of an operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str, direction: Option<Direction>) -> Option<&Check> {
        self.checks
            .iter()
            .find(|c| c.name == name && c.direction == direction)
    }

    /// Largest measurement over both directions.
    pub fn worst(&self, name: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name == name)
            .map(|c| c.measured)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let dir = match c.direction {
                Some(Direction::X) => " [x]",
                Some(Direction::Y) => " [y]",
                None => "",
            };
            writeln!(
                f,
                "{:<4} {}{}: {:.3e} (limit {:.3e})",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                dir,
                c.measured,
                c.limit
            )?;
        }
        Ok(())
    }
}

/// Tolerances used by [`validate_operator`]; derivative-type limits are
/// stated at unit scale and divided by the operator's length scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationLimits {
    pub sbp_relative: f64,
    pub exactness: f64,
    pub constants: f64,
    pub weight_sum: f64,
    pub boundary: f64,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        Self {
            sbp_relative: 1e-13,
            exactness: 1e-9,
            constants: 1e-12,
            weight_sum: 1e-11,
            boundary: 1e-10,
        }
    }
}

fn structural_checks(op: &MfsbpOperator) -> Vec<Check> {
    let lim = ValidationLimits::default();
    let inv_scale = 1.0 / op.meta.scale.min(1.0);
    let mut checks = Vec::new();
    for (dir, d) in Direction::ALL.iter().zip(&op.dirs) {
        let b = d.b.to_dense();
        let sbp = (&d.q + d.q.transpose() - &b).amax();
        let limit = lim.sbp_relative * b.amax() + 1e-15;
        checks.push(Check::at_most("sbp identity", Some(*dir), sbp, limit));
        let ones = DVector::from_element(op.len(), 1.0);
        checks.push(Check::at_most(
            "constants",
            Some(*dir),
            (&d.d * ones).amax(),
            lim.constants * inv_scale,
        ));
    }
    let p_min = op.p.min();
    checks.push(Check::at_least("positive P", p_min, f64::MIN_POSITIVE));
    checks.push(Check::at_least(
        "P above w_min",
        p_min,
        op.meta.w_min * (1.0 - 1e-12),
    ));
    checks
}

/// Measure every operator invariant: SBP identity, exactness, `D_ξ1 = 0`,
/// positivity and sum of `P`, and the boundary exactness
/// `fᵀB_ξ g = ∮ f g (ξ·n) ds` over all basis pairs against the moment oracle.
pub fn validate_operator(op: &MfsbpOperator, limits: &ValidationLimits) -> ValidationReport {
    let mut checks = structural_checks(op);
    let inv_scale = 1.0 / op.meta.scale.min(1.0);
    let area = op.domain.area();
    checks.push(Check::at_most(
        "P sum",
        None,
        (op.p.sum() - area).abs(),
        limits.weight_sum * area.max(1.0),
    ));
    for d in Direction::ALL {
        checks.push(Check::at_most(
            "exactness",
            Some(d),
            op.exactness_residual(d),
            limits.exactness * inv_scale,
        ));
    }
    let boundary = boundary_defect(op);
    for d in Direction::ALL {
        checks.push(Check::at_most(
            "boundary exactness",
            Some(d),
            boundary.map_or(f64::INFINITY, |b| b[d as usize]),
            limits.boundary * op.meta.scale.max(1.0),
        ));
    }
    ValidationReport { checks }
}

/// `max_{i,j} |f_iᵀ B_ξ f_j − ∮ f_i f_j (ξ·n) ds|` per direction.
pub fn boundary_defect(op: &MfsbpOperator) -> Option<[f64; 2]> {
    let sys = SurfaceSystem::new(&op.space, &op.domain).ok()?;
    let pts = op.nodes.points();
    let vals: Vec<Vec<f64>> = sys
        .funcs
        .iter()
        .map(|g| pts.iter().map(|&p| g.eval(p)).collect())
        .collect();
    Some([0, 1].map(|d| {
        let b = &op.dirs[d].b.diag;
        sys.funcs
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let exact: f64 = sys.moments.iter().map(|m| m[d][i]).sum();
                let disc: f64 = vals[i].iter().zip(b.iter()).map(|(g, b)| g * b).sum();
                (disc - exact).abs()
            })
            .fold(0.0, f64::max)
    }))
}

/// Serialized form of an operator: a versioned JSON document with dense
/// row-major `Q` matrices and diagonal `P` and `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub schema_version: u32,
    pub spec: Option<SpaceSpec>,
    pub space: FunctionSpace,
    pub domain: Domain,
    pub nodes: NodeSet,
    pub p_diag: Vec<f64>,
    pub q_x: Vec<f64>,
    pub q_y: Vec<f64>,
    pub b_x: Vec<f64>,
    pub b_y: Vec<f64>,
    pub meta: OperatorMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum OperatorFileError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed operator file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("inconsistent operator file: {0}")]
    Shape(String),
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect()
}

impl From<&MfsbpOperator> for OperatorFile {
    fn from(op: &MfsbpOperator) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            spec: op.spec.clone(),
            space: op.space.clone(),
            domain: op.domain.clone(),
            nodes: op.nodes.clone(),
            p_diag: op.p.iter().copied().collect(),
            q_x: row_major(&op.dirs[0].q),
            q_y: row_major(&op.dirs[1].q),
            b_x: op.dirs[0].b.diag.iter().copied().collect(),
            b_y: op.dirs[1].b.diag.iter().copied().collect(),
            meta: op.meta.clone(),
        }
    }
}

impl OperatorFile {
    pub fn into_operator(self) -> Result<MfsbpOperator, OperatorFileError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(OperatorFileError::Version(self.schema_version));
        }
        let n = self.p_diag.len();
        if self.nodes.len() != n
            || self.q_x.len() != n * n
            || self.q_y.len() != n * n
            || self.b_x.len() != n
            || self.b_y.len() != n
        {
            return Err(OperatorFileError::Shape(format!(
                "{n} weights for {} nodes",
                self.nodes.len()
            )));
        }
        let p = DVector::from_vec(self.p_diag);
        let constants = self.space.contains_constants();
        let mk = |q: Vec<f64>, b: Vec<f64>, direction| {
            let q = DMatrix::from_row_slice(n, n, &q);
            let d = if constants {
                derivative_matrix(&q, &p)
            } else {
                DMatrix::from_fn(n, n, |i, j| q[(i, j)] / p[i])
            };
            DirectionalOperator {
                b: BoundaryMatrix {
                    diag: DVector::from_vec(b),
                    direction,
                },
                q,
                d,
            }
        };
        let dirs = [
            mk(self.q_x, self.b_x, Direction::X),
            mk(self.q_y, self.b_y, Direction::Y),
        ];
        Ok(MfsbpOperator {
            spec: self.spec,
            space: self.space,
            domain: self.domain,
            nodes: self.nodes,
            p,
            dirs,
            meta: self.meta,
        })
    }
}

impl MfsbpOperator {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&OperatorFile::from(self)).expect("operator serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, OperatorFileError> {
        serde_json::from_str::<OperatorFile>(s)?.into_operator()
    }

    pub fn write(&self, path: &Path) -> Result<(), OperatorFileError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, OperatorFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
