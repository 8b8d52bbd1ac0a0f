//! Multi-block meshes: structured triangulations of squares and single
//! elements, one operator per congruence class, and face matching.
//!
//! Elements are translated copies of a few classes. Each class is built
//! once on its unit-size domain with the function space dilated to the
//! element size, then rescaled to physical size in element-local
//! coordinates; global coordinates are `local + origin`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::MeshError;
use crate::fspace::{FunctionSpace, SpaceSpec};
use crate::geometry::{Domain, DomainKind, NodeSet};
use crate::operator::{
    assemble_operator, assemble_operator_on_nodes, MfsbpOperator, OperatorConfig,
};
use crate::Point;

/// Congruence class of an element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassId {
    /// Right triangle with legs along the square's bottom and left sides.
    Lower,
    /// Point reflection of `Lower` through the square's center.
    Upper,
    /// The whole domain as one element (e.g. the disk).
    Single,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementClass {
    pub id: ClassId,
    /// Domain at unit size on which the operator is constructed.
    pub unit_domain: Domain,
    /// Physical size relative to `unit_domain`.
    pub h: f64,
}

impl ElementClass {
    pub fn local_domain(&self) -> Domain {
        self.unit_domain.dilated(self.h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub class_id: ClassId,
    /// Translation from local to global coordinates.
    pub origin: Point,
    pub local_domain: Domain,
}

impl Element {
    pub fn to_global(&self, p: Point) -> Point {
        [p[0] + self.origin[0], p[1] + self.origin[1]]
    }
}

/// Element geometry without operators.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub domain: Domain,
    pub classes: Vec<ElementClass>,
    pub elements: Vec<Element>,
}

impl Mesh {
    /// `K²` squares of side `h = side/K`, each split along its
    /// anti-diagonal into a lower and an upper triangle.
    pub fn structured_triangulation(k: usize, square: &Domain) -> Result<Mesh, MeshError> {
        let DomainKind::Rectangle { min, max } = square.kind else {
            return Err(MeshError::Invalid("triangulation needs a rectangle".into()));
        };
        if k == 0 {
            return Err(MeshError::Invalid("K must be at least 1".into()));
        }
        let (w, hgt) = (max[0] - min[0], max[1] - min[1]);
        if (w - hgt).abs() > 1e-12 * w.max(hgt) {
            return Err(MeshError::Invalid(format!(
                "elements must be squares: domain is {w} × {hgt}"
            )));
        }
        let h = w / k as f64;
        let lower = Domain::reference_triangle();
        let upper = Domain::triangle([[1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let classes = vec![
            ElementClass {
                id: ClassId::Lower,
                unit_domain: lower,
                h,
            },
            ElementClass {
                id: ClassId::Upper,
                unit_domain: upper,
                h,
            },
        ];
        let mut elements = Vec::with_capacity(2 * k * k);
        for j in 0..k {
            for i in 0..k {
                let origin = [min[0] + i as f64 * h, min[1] + j as f64 * h];
                for class in &classes {
                    elements.push(Element {
                        class_id: class.id,
                        origin,
                        local_domain: class.local_domain(),
                    });
                }
            }
        }
        Ok(Mesh {
            domain: square.clone(),
            classes,
            elements,
        })
    }

    /// The domain itself as the only element (built at its own size).
    pub fn single(domain: &Domain) -> Mesh {
        let class = ElementClass {
            id: ClassId::Single,
            unit_domain: domain.clone(),
            h: 1.0,
        };
        Mesh {
            domain: domain.clone(),
            elements: vec![Element {
                class_id: ClassId::Single,
                origin: [0.0, 0.0],
                local_domain: class.local_domain(),
            }],
            classes: vec![class],
        }
    }

    pub fn class(&self, id: ClassId) -> &ElementClass {
        self.classes
            .iter()
            .find(|c| c.id == id)
            .expect("element class belongs to the mesh")
    }

    pub fn area(&self) -> f64 {
        self.elements.iter().map(|e| e.local_domain.area()).sum()
    }

    /// Element size used for scaling (the class size).
    pub fn h(&self) -> f64 {
        self.classes[0].h
    }
}

/// The function space of a class at unit size.
///
/// Translation-invariant spaces are fixed in physical coordinates, so the
/// unit-size space is the physical one dilated by `h`. Other spaces (the
/// RBF space) are element-relative: their parameters refer to the unit
/// square of the element, shared by its lower and upper triangle, so both
/// sides of every face see the same restricted span.
pub fn class_unit_space(spec: &SpaceSpec, class: &ElementClass) -> FunctionSpace {
    if spec.is_translation_invariant() {
        FunctionSpace::from_spec(spec).scale(class.h)
    } else {
        FunctionSpace::from_spec(spec)
    }
}

/// Build a class operator at unit size, optionally on prescribed unit-size
/// nodes, and rescale it to physical size in local coordinates.
pub fn instantiate_class_operator(
    class: &ElementClass,
    spec: &SpaceSpec,
    cfg: &OperatorConfig,
    unit_nodes: Option<NodeSet>,
) -> Result<MfsbpOperator, MeshError> {
    let unit_space = class_unit_space(spec, class);
    let unit = match unit_nodes {
        Some(nodes) => {
            assemble_operator_on_nodes(&unit_space, Some(spec), &class.unit_domain, nodes, cfg)?
        }
        None => assemble_operator(&unit_space, Some(spec), &class.unit_domain, cfg)?,
    };
    Ok(rescale_unit(unit, class))
}

fn rescale_unit(unit: MfsbpOperator, class: &ElementClass) -> MfsbpOperator {
    if class.h == 1.0 {
        return unit;
    }
    let local_space = unit.space.scale(1.0 / class.h);
    unit.rescaled(class.h, [0.0, 0.0], local_space)
}

/// Class operators, each built at most once.
///
/// The upper triangle is built on the point reflection of the lower
/// triangle's nodes, so both classes share one node layout up to the
/// reflection (its own quadratures and `Q_A` are solved independently).
#[derive(Clone, Debug, Default)]
pub struct OperatorCache {
    ops: HashMap<ClassId, Arc<MfsbpOperator>>,
    pub builds: usize,
    pub hits: usize,
}

impl OperatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ClassId) -> Option<&Arc<MfsbpOperator>> {
        self.ops.get(&id)
    }

    /// Build every missing class of `mesh` and count one hit for every
    /// further element of an already built class.
    pub fn populate(
        &mut self,
        mesh: &Mesh,
        spec: &SpaceSpec,
        cfg: &OperatorConfig,
    ) -> Result<(), MeshError> {
        let mut unit_nodes: HashMap<ClassId, NodeSet> = HashMap::new();
        let mut classes: Vec<&ElementClass> = mesh.classes.iter().collect();
        classes.sort_by_key(|c| c.id);
        for class in classes {
            if self.ops.contains_key(&class.id) {
                continue;
            }
            let nodes = match class.id {
                ClassId::Upper => unit_nodes
                    .get(&ClassId::Lower)
                    .map(|n| n.point_reflected([0.5, 0.5])),
                _ => None,
            };
            let unit_space = class_unit_space(spec, class);
            let unit = match nodes {
                Some(n) => {
                    assemble_operator_on_nodes(&unit_space, Some(spec), &class.unit_domain, n, cfg)?
                }
                None => assemble_operator(&unit_space, Some(spec), &class.unit_domain, cfg)?,
            };
            unit_nodes.insert(class.id, unit.nodes.clone());
            self.builds += 1;
            self.ops
                .insert(class.id, Arc::new(rescale_unit(unit, class)));
        }
        self.hits += mesh.elements.len() - mesh.classes.len();
        Ok(())
    }
}

/// Surface node layout of a class in local coordinates: per part, node
/// positions and surface weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassLayout {
    pub parts: Vec<Vec<(Point, f64)>>,
    /// Offset of each part's first node in the element's node vector.
    pub offsets: Vec<usize>,
}

impl ClassLayout {
    pub fn of(op: &MfsbpOperator) -> Self {
        let weights = op.surface_weights();
        let offsets = op.nodes.part_offsets();
        let parts = op
            .nodes
            .surface
            .iter()
            .zip(&offsets)
            .map(|(part, &off)| {
                part.iter()
                    .enumerate()
                    .map(|(k, s)| (s.point, weights[off + k]))
                    .collect()
            })
            .collect();
        Self { parts, offsets }
    }
}

/// Two faces sharing nodes: `nodes_l[k]` and `nodes_r[k]` (element node
/// indices) sit at the same global point.
#[derive(Clone, Debug, PartialEq)]
pub struct FacePairing {
    pub elem_l: usize,
    pub part_l: usize,
    pub elem_r: usize,
    pub part_r: usize,
    pub nodes_l: Vec<usize>,
    pub nodes_r: Vec<usize>,
}

/// What lies across a face.
#[derive(Clone, Debug, PartialEq)]
pub enum FaceLink {
    /// The neighbouring element and its matching node per face node.
    Interior { elem: usize, nodes: Vec<usize> },
    /// Physical boundary; inflow/outflow is decided per node at run time.
    Boundary,
}

/// Tolerances for [`match_faces`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Node coincidence tolerance relative to `h`.
    pub position_rel: f64,
    /// Largest allowed difference of paired surface weights.
    pub weight_abs: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            position_rel: 1e-12,
            weight_abs: 1e-11,
        }
    }
}

fn face_on_boundary(domain: &Domain, a: Point, b: Point, tol: f64) -> bool {
    domain.parts.iter().any(|part| match part {
        crate::geometry::BoundaryPart::Segment { start, end } => {
            let d = [end[0] - start[0], end[1] - start[1]];
            let len = d[0].hypot(d[1]);
            let dist = |p: Point| ((p[0] - start[0]) * d[1] - (p[1] - start[1]) * d[0]).abs() / len;
            dist(a) <= tol && dist(b) <= tol
        }
        crate::geometry::BoundaryPart::Arc { .. } => true,
    })
}

fn face_endpoints(elem: &Element, part: usize) -> (Point, Point) {
    let p = &elem.local_domain.parts[part];
    (elem.to_global(p.point(0.0)), elem.to_global(p.point(1.0)))
}

/// Pair every interior face node with its neighbour's node by coordinates
/// and check that paired surface weights agree.
#[allow(clippy::needless_range_loop)] // `part` indexes several parallel tables
pub fn match_faces(
    mesh: &Mesh,
    layouts: &HashMap<ClassId, ClassLayout>,
    cfg: &MatchConfig,
) -> Result<(Vec<Vec<FaceLink>>, Vec<FacePairing>), MeshError> {
    let h = mesh.h();
    let tol = cfg.position_rel * h;
    let key_scale = 1e6 / h;
    let key = |p: Point| {
        (
            (p[0] * key_scale).round() as i64,
            (p[1] * key_scale).round() as i64,
        )
    };

    // faces keyed by their rounded midpoints
    let mut by_mid: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
    for (e, elem) in mesh.elements.iter().enumerate() {
        for part in 0..elem.local_domain.parts.len() {
            let (a, b) = face_endpoints(elem, part);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            by_mid.entry(key(mid)).or_default().push((e, part));
        }
    }

    let mut links: Vec<Vec<FaceLink>> = mesh
        .elements
        .iter()
        .map(|el| vec![FaceLink::Boundary; el.local_domain.parts.len()])
        .collect();
    let mut pairings = Vec::new();
    for (e, elem) in mesh.elements.iter().enumerate() {
        let layout = &layouts[&elem.class_id];
        for part in 0..elem.local_domain.parts.len() {
            let (a, b) = face_endpoints(elem, part);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let partner = by_mid[&key(mid)].iter().copied().find(|&(o, _)| o != e);
            let Some((other, opart)) = partner else {
                if face_on_boundary(&mesh.domain, a, b, 1e-9 * h) {
                    continue;
                }
                return Err(MeshError::NonConforming {
                    elem: e,
                    part,
                    other: e,
                });
            };
            let oelem = &mesh.elements[other];
            let olayout = &layouts[&oelem.class_id];
            let mine = &layout.parts[part];
            let theirs = &olayout.parts[opart];
            if mine.len() != theirs.len() {
                return Err(MeshError::NonConforming {
                    elem: e,
                    part,
                    other,
                });
            }
            let mut nodes = Vec::with_capacity(mine.len());
            for (p, w) in mine {
                let gp = elem.to_global(*p);
                let found = theirs.iter().position(|(q, _)| {
                    let gq = oelem.to_global(*q);
                    (gp[0] - gq[0]).hypot(gp[1] - gq[1]) <= tol
                });
                let Some(k) = found else {
                    return Err(MeshError::NonConforming {
                        elem: e,
                        part,
                        other,
                    });
                };
                let diff = (w - theirs[k].1).abs();
                if diff > cfg.weight_abs {
                    return Err(MeshError::WeightMismatch {
                        elem: e,
                        part,
                        diff,
                    });
                }
                nodes.push(olayout.offsets[opart] + k);
            }
            if e < other {
                pairings.push(FacePairing {
                    elem_l: e,
                    part_l: part,
                    elem_r: other,
                    part_r: opart,
                    nodes_l: (0..mine.len()).map(|k| layout.offsets[part] + k).collect(),
                    nodes_r: nodes.clone(),
                });
            }
            links[e][part] = FaceLink::Interior { elem: other, nodes };
        }
    }
    Ok((links, pairings))
}

/// A mesh with its class operators and face connectivity, ready for the
/// solver. Immutable and shared read-only.
#[derive(Clone, Debug)]
pub struct DiscreteMesh {
    pub mesh: Mesh,
    pub spec: SpaceSpec,
    pub cache: OperatorCache,
    pub links: Vec<Vec<FaceLink>>,
    pub pairings: Vec<FacePairing>,
    /// Global node coordinates per element.
    pub points: Vec<Vec<Point>>,
    /// Per element and surface node: the paired `(element, node)`, or
    /// `None` on the physical boundary.
    pub outer: Vec<Vec<Option<(usize, usize)>>>,
}

impl DiscreteMesh {
    pub fn build(
        mesh: Mesh,
        spec: &SpaceSpec,
        cfg: &OperatorConfig,
        matching: &MatchConfig,
    ) -> Result<Self, MeshError> {
        let mut cache = OperatorCache::new();
        cache.populate(&mesh, spec, cfg)?;
        Self::with_cache(mesh, spec, cache, matching)
    }

    /// Assemble connectivity from already built class operators.
    pub fn with_cache(
        mesh: Mesh,
        spec: &SpaceSpec,
        cache: OperatorCache,
        matching: &MatchConfig,
    ) -> Result<Self, MeshError> {
        let layouts: HashMap<ClassId, ClassLayout> = mesh
            .classes
            .iter()
            .map(|c| {
                (
                    c.id,
                    ClassLayout::of(cache.get(c.id).expect("class operator built")),
                )
            })
            .collect();
        let (links, pairings) = match_faces(&mesh, &layouts, matching)?;
        let points = mesh
            .elements
            .iter()
            .map(|el| {
                let op = cache.get(el.class_id).expect("class operator built");
                op.nodes
                    .points()
                    .into_iter()
                    .map(|p| el.to_global(p))
                    .collect()
            })
            .collect();
        let outer = mesh
            .elements
            .iter()
            .enumerate()
            .map(|(e, el)| {
                let layout = &layouts[&el.class_id];
                let n_surface: usize = layout.parts.iter().map(Vec::len).sum();
                let mut out = vec![None; n_surface];
                for (part, link) in links[e].iter().enumerate() {
                    if let FaceLink::Interior { elem, nodes } = link {
                        for (k, &m) in nodes.iter().enumerate() {
                            out[layout.offsets[part] + k] = Some((*elem, m));
                        }
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            mesh,
            spec: spec.clone(),
            cache,
            links,
            pairings,
            points,
            outer,
        })
    }

    pub fn len(&self) -> usize {
        self.mesh.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.elements.is_empty()
    }

    /// The operator of every class.
    pub fn cache_ops(&self) -> impl Iterator<Item = &MfsbpOperator> {
        self.mesh
            .classes
            .iter()
            .filter_map(|c| self.cache.get(c.id).map(|op| op.as_ref()))
    }

    pub fn operator(&self, elem: usize) -> &MfsbpOperator {
        self.cache
            .get(self.mesh.elements[elem].class_id)
            .expect("class operator built")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Direction;
    use std::f64::consts::PI;

    fn unit_square() -> Domain {
        Domain::rectangle([0.0, 0.0], [1.0, 1.0])
    }

    fn f1_cfg() -> OperatorConfig {
        OperatorConfig::fixed(8, 21)
    }

    #[test]
    fn counts_and_area() {
        for k in [1, 3, 10] {
            let m = Mesh::structured_triangulation(k, &unit_square()).unwrap();
            assert_eq!(m.elements.len(), 2 * k * k);
            assert!((m.area() - 1.0).abs() < 1e-12);
        }
        assert!(Mesh::structured_triangulation(0, &unit_square()).is_err());
        let rect = Domain::rectangle([0.0, 0.0], [2.0, 1.0]);
        assert!(Mesh::structured_triangulation(2, &rect).is_err());
    }

    #[test]
    fn single_square_has_one_interior_face() {
        let mesh = Mesh::structured_triangulation(1, &unit_square()).unwrap();
        let dm =
            DiscreteMesh::build(mesh, &SpaceSpec::F1, &f1_cfg(), &MatchConfig::default()).unwrap();
        assert_eq!(dm.pairings.len(), 1);
        let boundary: usize = dm
            .links
            .iter()
            .flatten()
            .filter(|l| matches!(l, FaceLink::Boundary))
            .count();
        assert_eq!(boundary, 4);
        // the diagonal: 8 hypotenuse nodes paired one-to-one
        let p = &dm.pairings[0];
        assert_eq!((p.part_l, p.part_r), (1, 1));
        assert_eq!(p.nodes_l.len(), 8);
        let mut sorted = p.nodes_r.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
    }

    #[test]
    fn paired_nodes_coincide_with_antiparallel_normals() {
        let mesh = Mesh::structured_triangulation(3, &unit_square()).unwrap();
        let dm =
            DiscreteMesh::build(mesh, &SpaceSpec::F1, &f1_cfg(), &MatchConfig::default()).unwrap();
        assert_eq!(dm.cache.builds, 2);
        assert_eq!(dm.cache.hits, 18 - 2);
        // interior faces: 3 per square (diagonal) minus nothing, plus shared legs
        assert_eq!(dm.pairings.len(), 9 + 2 * 3 * 2);
        for p in &dm.pairings {
            let (ol, or) = (dm.operator(p.elem_l), dm.operator(p.elem_r));
            let nl: Vec<_> = ol.nodes.surface.iter().flatten().collect();
            let nr: Vec<_> = or.nodes.surface.iter().flatten().collect();
            for (&a, &b) in p.nodes_l.iter().zip(&p.nodes_r) {
                let (pa, pb) = (dm.points[p.elem_l][a], dm.points[p.elem_r][b]);
                assert!((pa[0] - pb[0]).hypot(pa[1] - pb[1]) <= 1e-12 / 3.0);
                assert!((nl[a].normal[0] + nr[b].normal[0]).abs() < 1e-14);
                assert!((nl[a].normal[1] + nr[b].normal[1]).abs() < 1e-14);
                let (wa, wb) = (ol.surface_weights()[a], or.surface_weights()[b]);
                assert!((wa - wb).abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn every_face_linked_once() {
        let mesh = Mesh::structured_triangulation(4, &unit_square()).unwrap();
        let dm =
            DiscreteMesh::build(mesh, &SpaceSpec::F1, &f1_cfg(), &MatchConfig::default()).unwrap();
        for (e, links) in dm.links.iter().enumerate() {
            for (part, link) in links.iter().enumerate() {
                if let FaceLink::Interior { elem, .. } = link {
                    // the partner links back
                    let back = dm.links[*elem]
                        .iter()
                        .any(|l| matches!(l, FaceLink::Interior { elem: b, .. } if *b == e));
                    assert!(back, "face ({e}, {part})");
                }
            }
        }
        let boundary = dm
            .links
            .iter()
            .flatten()
            .filter(|l| matches!(l, FaceLink::Boundary))
            .count();
        assert_eq!(boundary, 4 * 4);
    }

    #[test]
    fn perturbed_node_is_rejected() {
        let mesh = Mesh::structured_triangulation(1, &unit_square()).unwrap();
        let mut cache = OperatorCache::new();
        cache.populate(&mesh, &SpaceSpec::F1, &f1_cfg()).unwrap();
        let mut layouts: HashMap<ClassId, ClassLayout> = mesh
            .classes
            .iter()
            .map(|c| (c.id, ClassLayout::of(cache.get(c.id).unwrap())))
            .collect();
        layouts.get_mut(&ClassId::Upper).unwrap().parts[1][3].0[0] += 1e-6;
        let err = match_faces(&mesh, &layouts, &MatchConfig::default()).unwrap_err();
        assert!(matches!(err, MeshError::NonConforming { .. }));
        layouts.get_mut(&ClassId::Upper).unwrap().parts[1][3].0[0] -= 1e-6;
        layouts.get_mut(&ClassId::Upper).unwrap().parts[1][3].1 += 1e-8;
        let err = match_faces(&mesh, &layouts, &MatchConfig::default()).unwrap_err();
        assert!(matches!(err, MeshError::WeightMismatch { .. }));
    }

    #[test]
    fn unit_mesh_class_matches_reference_operator() {
        let spec = SpaceSpec::F2 { omega: PI };
        let cfg = OperatorConfig::fixed(8, 12);
        let mesh = Mesh::structured_triangulation(1, &unit_square()).unwrap();
        let class = mesh.class(ClassId::Lower).clone();
        let local = instantiate_class_operator(&class, &spec, &cfg, None).unwrap();
        let reference =
            crate::operator::assemble_from_spec(&spec, &Domain::reference_triangle(), &cfg)
                .unwrap();
        assert_eq!(local.nodes, reference.nodes);
        for d in Direction::ALL {
            let (a, b) = (local.exactness_residual(d), reference.exactness_residual(d));
            assert!((a - b).abs() <= 1e-9 * (1.0 + b), "{a} vs {b}");
        }
    }

    #[test]
    fn upper_class_normals_are_reflected() {
        let mesh = Mesh::structured_triangulation(2, &unit_square()).unwrap();
        let mut cache = OperatorCache::new();
        cache.populate(&mesh, &SpaceSpec::F1, &f1_cfg()).unwrap();
        let lo = cache.get(ClassId::Lower).unwrap();
        let up = cache.get(ClassId::Upper).unwrap();
        for (pl, pu) in lo.nodes.surface.iter().zip(&up.nodes.surface) {
            assert!((pl[0].normal[0] + pu[0].normal[0]).abs() < 1e-15);
            assert!((pl[0].normal[1] + pu[0].normal[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn trig_interface_weights_agree_exactly() {
        let mesh = Mesh::structured_triangulation(3, &unit_square()).unwrap();
        let strict = MatchConfig {
            position_rel: 1e-12,
            weight_abs: 0.0,
        };
        let dm = DiscreteMesh::build(
            mesh,
            &SpaceSpec::F2 { omega: PI },
            &OperatorConfig::fixed(8, 12),
            &strict,
        )
        .unwrap();
        assert_eq!(dm.pairings.len(), 21);
    }

    #[test]
    fn upper_nodes_reflect_lower_nodes() {
        let mesh = Mesh::structured_triangulation(2, &unit_square()).unwrap();
        let mut cache = OperatorCache::new();
        cache.populate(&mesh, &SpaceSpec::F1, &f1_cfg()).unwrap();
        let h = 0.5;
        let lo = cache.get(ClassId::Lower).unwrap().nodes.points();
        let up = cache.get(ClassId::Upper).unwrap().nodes.points();
        for (a, b) in lo.iter().zip(&up) {
            assert!((a[0] + b[0] - h).abs() < 1e-15 && (a[1] + b[1] - h).abs() < 1e-15);
        }
    }

    #[test]
    fn rbf_space_is_shared_by_both_triangles_of_a_square() {
        let spec = SpaceSpec::F3 {
            center: [1.0 / 3.0, 1.0 / 3.0],
            diameter: 0.2,
        };
        let mesh = Mesh::structured_triangulation(2, &unit_square()).unwrap();
        for class in &mesh.classes {
            assert_eq!(
                class_unit_space(&spec, class),
                FunctionSpace::from_spec(&spec)
            );
        }
        let dm = DiscreteMesh::build(
            mesh,
            &spec,
            &OperatorConfig::fixed(10, 20),
            &MatchConfig::default(),
        );
        assert!(dm.is_ok(), "{:?}", dm.err());
    }

    #[test]
    fn disk_is_a_single_element() {
        let disk = Domain::disk([0.5, 0.5], 0.5);
        let dm = DiscreteMesh::build(
            Mesh::single(&disk),
            &SpaceSpec::F1,
            &OperatorConfig::fixed(12, 25),
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!(dm.len(), 1);
        assert_eq!(dm.cache.builds, 1);
        assert!(dm.pairings.is_empty());
        assert!(dm.outer[0].iter().all(Option::is_none));
    }
}
