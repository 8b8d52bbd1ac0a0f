//! Positive, function-space-exact quadratures.
//!
//! Exactness conditions are linear systems `A w = b` whose rows are spanning
//! functions evaluated at the nodes and whose right-hand sides are reference
//! moments. They are compressed by an SVD and solved under a lower bound on
//! the weights by alternating projections.

pub mod gauss;
pub mod moments;
pub mod pocs;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::QuadratureError;
use crate::fspace::{BasisFunction, FunctionSpace};
use crate::geometry::{BoundaryPart, Domain, NodeSet};
use crate::{Direction, Point};
use moments::{compute_moments, NormalWeight, Target};
use pocs::{solve_exactness, ExactSolve};

pub use moments::{integrate, integrate_many};
pub use pocs::{compress_system, pocs_bounded_solve, CompressedSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PocsConfig {
    /// Relative exactness tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// SVD thresholds tried during compression, ascending.
    pub eps_sweep: Vec<f64>,
    /// Volume weights are bounded below by `w_min_fraction · area / N`.
    pub w_min_fraction: f64,
    /// Require every original exactness condition to hold to `10·tol`
    /// instead of accepting the best fit over the threshold sweep.
    pub strict: bool,
}

impl Default for PocsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 100_000,
            eps_sweep: (5..=16).rev().map(|k| 10f64.powi(-k)).collect(),
            w_min_fraction: 0.1,
            strict: false,
        }
    }
}

impl PocsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol > 0.0) {
            return Err(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return Err("max_iters must be positive".into());
        }
        if self.eps_sweep.is_empty() || self.eps_sweep.windows(2).any(|w| w[0] > w[1]) {
            return Err("eps_sweep must be non-empty and ascending".into());
        }
        if !(self.w_min_fraction > 0.0 && self.w_min_fraction < 1.0) {
            return Err("w_min_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// How one exactness system was solved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub eps: f64,
    pub rank: usize,
    pub rows: usize,
    pub iterations: usize,
    /// Largest relative defect on the uncompressed system.
    pub defect: f64,
    /// `‖Aw − b‖₂` on the uncompressed system.
    pub residual: f64,
}

impl SolveInfo {
    fn from_solve(s: &ExactSolve, rows: usize) -> Self {
        Self {
            eps: s.eps,
            rank: s.rank,
            rows,
            iterations: s.iterations,
            defect: s.defect,
            residual: s.residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Largest relative exactness defect over all solved systems.
    pub residual: f64,
    /// Lower weight bound (volume quadratures only).
    pub w_min: Option<f64>,
    /// One entry per solved system (per boundary part, or one for volume).
    pub solves: Vec<SolveInfo>,
}

impl Quadrature {
    pub fn apply(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

/// Spanning functions and moments of the surface exactness conditions, per
/// boundary part. Independent of the node positions.
///
/// The conditions for the products `1·f` (`f ∈ F`) are imposed exactly and
/// the remaining ones in the best-fit sense of [`pocs::solve_exactness`];
/// this keeps `∮ n_ξ ds = 0` and the divergence identities for `F` exact
/// even when the full `F²` system has no solution on the given nodes.
///
/// On a straight part the normal is constant, so both directional systems
/// reduce to one plain line quadrature. It is posed in a frame that depends
/// only on the segment's length and direction (up to orientation): two
/// elements sharing a face then solve the same system and obtain the same
/// weights, which inter-element conservation needs.
#[derive(Clone, Debug)]
pub struct SurfaceSystem {
    pub funcs: Vec<BasisFunction>,
    /// `moments[part][dir]` holds `∫_Γj g (ξ·n) ds` for every `g`.
    pub moments: Vec<[Vec<f64>; 2]>,
    /// Line-quadrature system of each straight part.
    pub faces: Vec<Option<FaceFrame>>,
    /// Indices into `funcs` of the conditions imposed exactly.
    pub hard: Vec<usize>,
}

/// Canonical frame of a straight part: `p = mid + s·t`, with `t` pointing
/// into the half-plane `t_x > 0` (or along `+y`).
#[derive(Clone, Debug)]
pub struct FaceFrame {
    pub mid: Point,
    pub tangent: Point,
    /// The part runs against `tangent`; its nodes are visited backwards.
    pub reversed: bool,
    /// Evaluate the functions at `s·t` instead of at the node itself
    /// (valid when the span is translation invariant).
    pub centered: bool,
    /// `∫ g ds` over the part, in the frame's coordinates.
    pub moments: Vec<f64>,
    pub length: f64,
}

impl FaceFrame {
    fn new(
        part: &BoundaryPart,
        funcs: &[BasisFunction],
        centered: bool,
    ) -> Result<Option<Self>, QuadratureError> {
        let BoundaryPart::Segment { start, end } = *part else {
            return Ok(None);
        };
        let d = [end[0] - start[0], end[1] - start[1]];
        let reversed = d[0] < 0.0 || (d[0] == 0.0 && d[1] < 0.0);
        let (a, b) = if reversed { (end, start) } else { (start, end) };
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        let tangent = [dx / len, dy / len];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let line = if centered {
            let half = [0.5 * dx, 0.5 * dy];
            BoundaryPart::Segment {
                start: [-half[0], -half[1]],
                end: half,
            }
        } else {
            BoundaryPart::Segment { start: a, end: b }
        };
        let moments = compute_moments(funcs, Target::Part(&line), NormalWeight::None)?;
        Ok(Some(Self {
            mid,
            tangent,
            reversed,
            centered,
            moments,
            length: len,
        }))
    }

    /// Node order in which the frame visits a part's nodes.
    fn order(&self, n: usize) -> Vec<usize> {
        if self.reversed {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        }
    }

    /// Points at which the functions are evaluated, in frame order.
    ///
    /// Midpoint-equidistant layouts are recognised and placed at their
    /// exact frame coordinates, so that faces whose nodes differ only by
    /// rounding still produce bit-identical systems.
    fn eval_points(&self, pts: &[Point], len: f64) -> Vec<Point> {
        if !self.centered {
            return pts.to_vec();
        }
        let s: Vec<f64> = pts
            .iter()
            .map(|p| {
                (p[0] - self.mid[0]) * self.tangent[0] + (p[1] - self.mid[1]) * self.tangent[1]
            })
            .collect();
        let n = s.len();
        let exact = |k: usize| ((k as f64 + 0.5) / n as f64 - 0.5) * len;
        let snapped = if s
            .iter()
            .enumerate()
            .all(|(k, v)| (v - exact(k)).abs() <= 1e-12 * len)
        {
            (0..n).map(exact).collect()
        } else {
            s
        };
        snapped
            .into_iter()
            .map(|s| [s * self.tangent[0], s * self.tangent[1]])
            .collect()
    }
}

impl SurfaceSystem {
    pub fn new(space: &FunctionSpace, domain: &Domain) -> Result<Self, QuadratureError> {
        let funcs = space.product_spanning_set();
        let moments = domain
            .parts
            .iter()
            .map(|part| {
                let m = |d| compute_moments(&funcs, Target::Part(part), NormalWeight::Normal(d));
                Ok([m(Direction::X)?, m(Direction::Y)?])
            })
            .collect::<Result<_, QuadratureError>>()?;
        let faces = domain
            .parts
            .iter()
            .map(|part| FaceFrame::new(part, &funcs, space.translation_invariant))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            funcs,
            moments,
            faces,
            hard: space.constant_product_indices(),
        })
    }

    /// Exactness system for one part, with the indices of the rows imposed
    /// exactly. Columns follow the part's node order.
    ///
    /// Straight parts give the line system of their [`FaceFrame`] (rows
    /// scaled to unit maximum when the frame cannot be centered, so that
    /// equal spans yield equal systems); curved parts give stacked
    /// `n_x`/`n_y` rows.
    pub fn system(&self, part: usize, nodes: &NodeSet) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
        let pts = &nodes.surface[part];
        let l = self.funcs.len();
        if let Some(frame) = &self.faces[part] {
            let order = frame.order(pts.len());
            let ordered: Vec<Point> = order.iter().map(|&m| pts[m].point).collect();
            let eval = frame.eval_points(&ordered, frame.length);
            let mut a = DMatrix::zeros(l, pts.len());
            let mut b = DVector::zeros(l);
            for (i, g) in self.funcs.iter().enumerate() {
                for (c, p) in eval.iter().enumerate() {
                    a[(i, c)] = g.eval(*p);
                }
                b[i] = frame.moments[i];
                if !frame.centered {
                    let scale = a.row(i).amax().max(b[i].abs());
                    if scale > 0.0 {
                        a.row_mut(i).unscale_mut(scale);
                        b[i] /= scale;
                    }
                }
            }
            let mut a_out = a.clone();
            for (c, &m) in order.iter().enumerate() {
                a_out.set_column(m, &a.column(c));
            }
            return (a_out, b, self.hard.clone());
        }
        let mut a = DMatrix::zeros(2 * l, pts.len());
        let mut b = DVector::zeros(2 * l);
        for (d, dir) in Direction::ALL.iter().enumerate() {
            for (i, g) in self.funcs.iter().enumerate() {
                for (m, node) in pts.iter().enumerate() {
                    a[(d * l + i, m)] = g.eval(node.point) * dir.component(node.normal);
                }
                b[d * l + i] = self.moments[part][d][i];
            }
        }
        let hard = (0..2)
            .flat_map(|d| self.hard.iter().map(move |i| d * l + i))
            .collect();
        (a, b, hard)
    }

    pub fn solve(&self, nodes: &NodeSet, cfg: &PocsConfig) -> Result<Quadrature, QuadratureError> {
        let mut weights = Vec::with_capacity(nodes.n_surface());
        let mut solves = Vec::new();
        for part in 0..nodes.surface.len() {
            let (mut a, b, hard) = self.system(part, nodes);
            // solve in the frame's node order so both sides of a face agree
            let order = match &self.faces[part] {
                Some(frame) => frame.order(a.ncols()),
                None => (0..a.ncols()).collect(),
            };
            let a_frame = DMatrix::from_fn(a.nrows(), a.ncols(), |i, c| a[(i, order[c])]);
            a = a_frame;
            let lower = DVector::zeros(a.ncols());
            let s = solve_exactness(&a, &b, &hard, &lower, cfg).map_err(|e| {
                QuadratureError::Surface {
                    part,
                    source: Box::new(e),
                }
            })?;
            solves.push(SolveInfo::from_solve(&s, a.nrows()));
            let mut w = vec![0.0; a.ncols()];
            for (c, &m) in order.iter().enumerate() {
                w[m] = s.w[c];
            }
            weights.extend(w);
        }
        Ok(Quadrature {
            nodes: nodes.surface.iter().flatten().map(|s| s.point).collect(),
            weights,
            residual: solves.iter().map(|s| s.defect).fold(0.0, f64::max),
            w_min: None,
            solves,
        })
    }
}

/// Spanning functions `∂x(F²) ∪ ∂y(F²)` and their moments over the domain.
/// As for the surface, the conditions for `∂ξ(1·f)` are imposed exactly,
/// together with `Σ w = area`.
#[derive(Clone, Debug)]
pub struct VolumeSystem {
    pub funcs: Vec<BasisFunction>,
    pub moments: Vec<f64>,
    pub area: f64,
    pub hard: Vec<usize>,
    /// Append the area condition (constants lie in the space).
    pub exact_area: bool,
}

impl VolumeSystem {
    pub fn new(space: &FunctionSpace, domain: &Domain) -> Result<Self, QuadratureError> {
        let mut funcs = space.derivative_spanning_set(Direction::X.unit());
        funcs.extend(space.derivative_spanning_set(Direction::Y.unit()));
        let moments = compute_moments(&funcs, Target::Domain(domain), NormalWeight::None)?;
        let l = space.dim() * space.dim();
        let base = space.constant_product_indices();
        Ok(Self {
            funcs,
            moments,
            area: domain.area(),
            hard: (0..2)
                .flat_map(|d| base.iter().map(move |i| d * l + i))
                .collect(),
            exact_area: space.contains_constants(),
        })
    }

    /// Rows for every spanning function plus, when imposed, a row of ones
    /// for the area; also returns the indices of the rows imposed exactly.
    pub fn system(&self, points: &[Point]) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
        let l = self.funcs.len();
        let extra = usize::from(self.exact_area);
        let a = DMatrix::from_fn(l + extra, points.len(), |i, n| {
            if i < l {
                self.funcs[i].eval(points[n])
            } else {
                1.0
            }
        });
        let mut b = DVector::zeros(l + extra);
        b.rows_mut(0, l).copy_from_slice(&self.moments);
        if self.exact_area {
            b[l] = self.area;
        }
        let mut hard = self.hard.clone();
        hard.extend(l..l + extra);
        (a, b, hard)
    }

    pub fn solve(&self, nodes: &NodeSet, cfg: &PocsConfig) -> Result<Quadrature, QuadratureError> {
        let points = nodes.points();
        let (a, b, hard) = self.system(&points);
        let w_min = cfg.w_min_fraction * self.area / points.len() as f64;
        let lower = DVector::from_element(points.len(), w_min);
        let s = solve_exactness(&a, &b, &hard, &lower, cfg)
            .map_err(|e| QuadratureError::Volume(Box::new(e)))?;
        Ok(Quadrature {
            nodes: points,
            weights: s.w.iter().copied().collect(),
            residual: s.defect,
            w_min: Some(w_min),
            solves: vec![SolveInfo::from_solve(&s, a.nrows())],
        })
    }
}

/// Positive surface quadrature exact for `∮ g (ξ·n) ds`, `g ∈ F²`, in both
/// coordinate directions, with one shared weight per surface node.
pub fn build_surface_quadrature(
    space: &FunctionSpace,
    domain: &Domain,
    nodes: &NodeSet,
    cfg: &PocsConfig,
) -> Result<Quadrature, QuadratureError> {
    SurfaceSystem::new(space, domain)?.solve(nodes, cfg)
}

/// Volume quadrature on all nodes (surface first) exact for `∂x(F²)` and
/// `∂y(F²)` with weights bounded below by `w_min`.
pub fn build_volume_quadrature(
    space: &FunctionSpace,
    domain: &Domain,
    nodes: &NodeSet,
    cfg: &PocsConfig,
) -> Result<Quadrature, QuadratureError> {
    VolumeSystem::new(space, domain)?.solve(nodes, cfg)
}

/// Surface and volume quadratures on a fixed node set.
pub fn build_quadratures(
    space: &FunctionSpace,
    domain: &Domain,
    nodes: &NodeSet,
    cfg: &PocsConfig,
) -> Result<(Quadrature, Quadrature), QuadratureError> {
    let surface = build_surface_quadrature(space, domain, nodes, cfg)?;
    let volume = build_volume_quadrature(space, domain, nodes, cfg)?;
    Ok((surface, volume))
}

/// Starting counts and ceilings for node escalation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscalationConfig {
    pub start_surface: usize,
    pub start_interior: usize,
    pub max_surface: usize,
    pub max_interior: usize,
    pub halton_skip: u64,
}

impl Default for EscalationConfig {
    fn default() -> Self {
        Self {
            start_surface: 1,
            start_interior: 0,
            max_surface: 64,
            max_interior: 512,
            halton_skip: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Escalated {
    pub nodes: NodeSet,
    pub surface: Quadrature,
    pub volume: Quadrature,
}

/// Increase surface nodes per part one at a time until a surface quadrature
/// exists, then interior nodes until a volume quadrature exists and the node
/// set is unisolvent for the space.
///
/// Candidates are solved in strict mode: a best fit that misses some
/// exactness condition does not stop the search.
pub fn escalate_nodes(
    space: &FunctionSpace,
    domain: &Domain,
    cfg: &PocsConfig,
    esc: &EscalationConfig,
) -> Result<Escalated, QuadratureError> {
    let strict = PocsConfig {
        strict: true,
        ..cfg.clone()
    };
    let cfg = &strict;
    let surf = SurfaceSystem::new(space, domain)?;
    let mut per_part = esc.start_surface.max(1);
    let surface = loop {
        if per_part > esc.max_surface {
            return Err(QuadratureError::Escalation {
                what: "surface nodes per part",
                ceiling: esc.max_surface,
            });
        }
        let nodes = NodeSet::generate(domain, per_part, 0, esc.halton_skip);
        match surf.solve(&nodes, cfg) {
            Ok(q) => break q,
            Err(e) => log::debug!("{per_part} surface nodes per part: {e}"),
        }
        per_part += 1;
    };
    let vol = VolumeSystem::new(space, domain)?;
    let mut interior = esc.start_interior;
    loop {
        if interior > esc.max_interior {
            return Err(QuadratureError::Escalation {
                what: "interior nodes",
                ceiling: esc.max_interior,
            });
        }
        let nodes = NodeSet::generate(domain, per_part, interior, esc.halton_skip);
        if nodes.len() >= space.dim() && space.eval_vandermonde(&nodes.points()).is_ok() {
            match vol.solve(&nodes, cfg) {
                Ok(volume) => {
                    return Ok(Escalated {
                        nodes,
                        surface,
                        volume,
                    })
                }
                Err(e) => log::debug!("{interior} interior nodes: {e}"),
            }
        }
        interior += 1;
    }
}
