//! Reference domains, their smooth boundary parts, and node placement.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::Point;

/// A smooth piece of a domain boundary, parametrized over `t ∈ [0, 1]`.
///
/// Domains are traversed counter-clockwise, so the outward normal of a
/// segment is its tangent rotated clockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryPart {
    Segment {
        start: Point,
        end: Point,
    },
    Arc {
        center: Point,
        radius: f64,
        theta_start: f64,
        theta_end: f64,
    },
}

impl BoundaryPart {
    pub fn point(&self, t: f64) -> Point {
        match self {
            BoundaryPart::Segment { start, end } => [
                start[0] + t * (end[0] - start[0]),
                start[1] + t * (end[1] - start[1]),
            ],
            BoundaryPart::Arc {
                center,
                radius,
                theta_start,
                theta_end,
            } => {
                let th = theta_start + t * (theta_end - theta_start);
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }

    pub fn normal(&self, t: f64) -> [f64; 2] {
        match self {
            BoundaryPart::Segment { start, end } => {
                let (dx, dy) = (end[0] - start[0], end[1] - start[1]);
                let len = dx.hypot(dy);
                [dy / len, -dx / len]
            }
            BoundaryPart::Arc {
                theta_start,
                theta_end,
                ..
            } => {
                let th = theta_start + t * (theta_end - theta_start);
                [th.cos(), th.sin()]
            }
        }
    }

    /// `|γ'(t)|`, constant for both kinds.
    pub fn speed(&self) -> f64 {
        self.arc_length()
    }

    pub fn arc_length(&self) -> f64 {
        match self {
            BoundaryPart::Segment { start, end } => (end[0] - start[0]).hypot(end[1] - start[1]),
            BoundaryPart::Arc {
                radius,
                theta_start,
                theta_end,
                ..
            } => radius * (theta_end - theta_start).abs(),
        }
    }

    /// `m` nodes at `t_k = (k - 1/2)/m`, paired with their outward normals.
    pub fn equidistant_nodes(&self, m: usize) -> Vec<SurfaceNode> {
        (1..=m)
            .map(|k| {
                let t = (k as f64 - 0.5) / m as f64;
                SurfaceNode {
                    point: self.point(t),
                    normal: self.normal(t),
                }
            })
            .collect()
    }

    pub fn translated(&self, offset: Point) -> BoundaryPart {
        let mv = |p: &Point| [p[0] + offset[0], p[1] + offset[1]];
        match self {
            BoundaryPart::Segment { start, end } => BoundaryPart::Segment {
                start: mv(start),
                end: mv(end),
            },
            BoundaryPart::Arc {
                center,
                radius,
                theta_start,
                theta_end,
            } => BoundaryPart::Arc {
                center: mv(center),
                radius: *radius,
                theta_start: *theta_start,
                theta_end: *theta_end,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainKind {
    /// Vertices in counter-clockwise order.
    Triangle {
        vertices: [Point; 3],
    },
    Disk {
        center: Point,
        radius: f64,
    },
    Rectangle {
        min: Point,
        max: Point,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub parts: Vec<BoundaryPart>,
}

impl Domain {
    pub fn new(kind: DomainKind) -> Self {
        let parts = match &kind {
            DomainKind::Triangle { vertices } => (0..3)
                .map(|i| BoundaryPart::Segment {
                    start: vertices[i],
                    end: vertices[(i + 1) % 3],
                })
                .collect(),
            DomainKind::Disk { center, radius } => vec![BoundaryPart::Arc {
                center: *center,
                radius: *radius,
                theta_start: 0.0,
                theta_end: 2.0 * PI,
            }],
            DomainKind::Rectangle { min, max } => {
                let c = [*min, [max[0], min[1]], *max, [min[0], max[1]]];
                (0..4)
                    .map(|i| BoundaryPart::Segment {
                        start: c[i],
                        end: c[(i + 1) % 4],
                    })
                    .collect()
            }
        };
        Self { kind, parts }
    }

    /// `0 ≤ x ≤ 1, 0 ≤ y ≤ 1 - x`, edges ordered bottom, hypotenuse, left.
    pub fn reference_triangle() -> Self {
        Self::triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    }

    pub fn triangle(vertices: [Point; 3]) -> Self {
        Self::new(DomainKind::Triangle { vertices })
    }

    pub fn disk(center: Point, radius: f64) -> Self {
        Self::new(DomainKind::Disk { center, radius })
    }

    pub fn rectangle(min: Point, max: Point) -> Self {
        Self::new(DomainKind::Rectangle { min, max })
    }

    pub fn area(&self) -> f64 {
        match &self.kind {
            DomainKind::Triangle {
                vertices: [a, b, c],
            } => 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs(),
            DomainKind::Disk { radius, .. } => PI * radius * radius,
            DomainKind::Rectangle { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.parts.iter().map(BoundaryPart::arc_length).sum()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match &self.kind {
            DomainKind::Triangle { vertices } => {
                let mut lo = vertices[0];
                let mut hi = vertices[0];
                for v in vertices {
                    lo = [lo[0].min(v[0]), lo[1].min(v[1])];
                    hi = [hi[0].max(v[0]), hi[1].max(v[1])];
                }
                (lo, hi)
            }
            DomainKind::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            DomainKind::Rectangle { min, max } => (*min, *max),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Disk { radius, .. } => 2.0 * radius,
            _ => {
                let (lo, hi) = self.bounding_box();
                (hi[0] - lo[0]).hypot(hi[1] - lo[1])
            }
        }
    }

    /// Points where the boundary normal is undefined.
    pub fn corners(&self) -> Vec<Point> {
        match &self.kind {
            DomainKind::Triangle { vertices } => vertices.to_vec(),
            DomainKind::Disk { .. } => Vec::new(),
            DomainKind::Rectangle { min, max } => {
                vec![*min, [max[0], min[1]], *max, [min[0], max[1]]]
            }
        }
    }

    /// Strict interior test with a margin of `1e-12 · diameter`.
    pub fn contains(&self, p: Point) -> bool {
        let margin = 1e-12 * self.diameter();
        match &self.kind {
            DomainKind::Triangle { .. } | DomainKind::Rectangle { .. } => {
                self.parts.iter().all(|part| {
                    let BoundaryPart::Segment { start, .. } = part else {
                        unreachable!("polygon parts are segments")
                    };
                    let n = part.normal(0.0);
                    // signed distance to the edge line, positive inside
                    let d = -((p[0] - start[0]) * n[0] + (p[1] - start[1]) * n[1]);
                    d > margin
                })
            }
            DomainKind::Disk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) < radius - margin
            }
        }
    }

    /// The image under `p ↦ h·p` (`h > 0`).
    pub fn dilated(&self, h: f64) -> Domain {
        let sc = |p: &Point| [h * p[0], h * p[1]];
        Domain::new(match &self.kind {
            DomainKind::Triangle { vertices } => DomainKind::Triangle {
                vertices: [sc(&vertices[0]), sc(&vertices[1]), sc(&vertices[2])],
            },
            DomainKind::Disk { center, radius } => DomainKind::Disk {
                center: sc(center),
                radius: h * radius,
            },
            DomainKind::Rectangle { min, max } => DomainKind::Rectangle {
                min: sc(min),
                max: sc(max),
            },
        })
    }

    pub fn translated(&self, offset: Point) -> Domain {
        let mv = |p: &Point| [p[0] + offset[0], p[1] + offset[1]];
        let kind = match &self.kind {
            DomainKind::Triangle { vertices } => DomainKind::Triangle {
                vertices: [mv(&vertices[0]), mv(&vertices[1]), mv(&vertices[2])],
            },
            DomainKind::Disk { center, radius } => DomainKind::Disk {
                center: mv(center),
                radius: *radius,
            },
            DomainKind::Rectangle { min, max } => DomainKind::Rectangle {
                min: mv(min),
                max: mv(max),
            },
        };
        Domain {
            kind,
            parts: self.parts.iter().map(|p| p.translated(offset)).collect(),
        }
    }
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// The `index`-th two-dimensional Halton point (bases 2 and 3), 1-based.
pub fn halton_point(index: u64) -> Point {
    [radical_inverse(index, 2), radical_inverse(index, 3)]
}

/// First `n` Halton points mapped into the bounding box that fall strictly
/// inside the domain, after discarding the first `skip` sequence entries.
pub fn halton_interior_nodes(domain: &Domain, n: usize, skip: u64) -> Vec<Point> {
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(n);
    let mut index = skip;
    while out.len() < n {
        index += 1;
        let h = halton_point(index);
        let p = [
            lo[0] + h[0] * (hi[0] - lo[0]),
            lo[1] + h[1] * (hi[1] - lo[1]),
        ];
        if domain.contains(p) {
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceNode {
    pub point: Point,
    pub normal: [f64; 2],
}

/// Surface nodes grouped by boundary part, followed by interior nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub surface: Vec<Vec<SurfaceNode>>,
    pub interior: Vec<Point>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NodeSetError {
    #[error("node {0:?} lies on a domain corner")]
    OnCorner(Point),
    #[error("interior node {0:?} is not strictly inside the domain")]
    NotInterior(Point),
    #[error("duplicate surface node {0:?} on part {1}")]
    Duplicate(Point, usize),
    #[error("node set has {got} surface groups but the domain has {expected} parts")]
    PartCount { got: usize, expected: usize },
}

impl NodeSet {
    /// Equidistant surface nodes (`per_part` on each part) plus `interior`
    /// Halton points.
    pub fn generate(domain: &Domain, per_part: usize, interior: usize, skip: u64) -> Self {
        Self {
            surface: domain
                .parts
                .iter()
                .map(|p| p.equidistant_nodes(per_part))
                .collect(),
            interior: halton_interior_nodes(domain, interior, skip),
        }
    }

    pub fn n_surface(&self) -> usize {
        self.surface.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.n_surface() + self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All node coordinates, surface first (part by part), then interior.
    pub fn points(&self) -> Vec<Point> {
        self.surface
            .iter()
            .flatten()
            .map(|s| s.point)
            .chain(self.interior.iter().copied())
            .collect()
    }

    /// Global index of the first node of each surface part.
    pub fn part_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.surface.len());
        let mut acc = 0;
        for part in &self.surface {
            off.push(acc);
            acc += part.len();
        }
        off
    }

    pub fn translated(&self, offset: Point) -> NodeSet {
        let mv = |p: Point| [p[0] + offset[0], p[1] + offset[1]];
        NodeSet {
            surface: self
                .surface
                .iter()
                .map(|part| {
                    part.iter()
                        .map(|s| SurfaceNode {
                            point: mv(s.point),
                            normal: s.normal,
                        })
                        .collect()
                })
                .collect(),
            interior: self.interior.iter().map(|p| mv(*p)).collect(),
        }
    }

    /// The image under `p ↦ 2·center − p`. Normals flip with the points;
    /// part and node order are kept.
    pub fn point_reflected(&self, center: Point) -> NodeSet {
        let mv = |p: Point| [2.0 * center[0] - p[0], 2.0 * center[1] - p[1]];
        NodeSet {
            surface: self
                .surface
                .iter()
                .map(|part| {
                    part.iter()
                        .map(|s| SurfaceNode {
                            point: mv(s.point),
                            normal: [-s.normal[0], -s.normal[1]],
                        })
                        .collect()
                })
                .collect(),
            interior: self.interior.iter().map(|p| mv(*p)).collect(),
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<(), NodeSetError> {
        if self.surface.len() != domain.parts.len() {
            return Err(NodeSetError::PartCount {
                got: self.surface.len(),
                expected: domain.parts.len(),
            });
        }
        let tol = 1e-9 * domain.diameter();
        let corners = domain.corners();
        for p in self.points() {
            if corners
                .iter()
                .any(|c| (p[0] - c[0]).hypot(p[1] - c[1]) < tol)
            {
                return Err(NodeSetError::OnCorner(p));
            }
        }
        for p in &self.interior {
            if !domain.contains(*p) {
                return Err(NodeSetError::NotInterior(*p));
            }
        }
        for (j, part) in self.surface.iter().enumerate() {
            for (a, na) in part.iter().enumerate() {
                for nb in &part[a + 1..] {
                    if (na.point[0] - nb.point[0]).hypot(na.point[1] - nb.point[1]) < tol {
                        return Err(NodeSetError::Duplicate(na.point, j));
                    }
                }
            }
        }
        Ok(())
    }
}
