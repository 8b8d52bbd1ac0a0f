//! High-accuracy reference integrals ("moments") of basis functions.
//!
//! Volume integrals use composite rules that are refined level by level
//! (triangle: midpoint subdivision with a collapsed tensor Gauss rule; disk:
//! polar tensor Gauss; rectangle: tensor Gauss), boundary integrals use
//! composite Gauss–Legendre on the parametrization. Refinement stops once
//! two successive levels agree to `1e-13` relative to `max(|I|, ∫|f|)`.

use std::f64::consts::PI;

use super::gauss::gauss_legendre_unit;
use crate::error::QuadratureError;
use crate::fspace::BasisFunction;
use crate::geometry::{BoundaryPart, Domain, DomainKind};
use crate::{Direction, Point};

const POINTS_PER_DIRECTION: usize = 10;
const MAX_LEVEL: usize = 12;
/// Two-dimensional rules grow by a factor of four per level; beyond this
/// level the rule would no longer fit comfortably in memory.
const MAX_LEVEL_2D: usize = 8;
const REL_TOL: f64 = 1e-13;

/// What to integrate over.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Domain(&'a Domain),
    Part(&'a BoundaryPart),
}

/// Optional factor multiplying the integrand on boundary parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalWeight {
    None,
    Normal(Direction),
}

/// A flattened composite rule: points, weights and (for boundaries) normals.
struct Rule {
    points: Vec<Point>,
    weights: Vec<f64>,
}

fn triangle_rule(vertices: &[Point; 3], level: usize, out: &mut Rule) {
    let (u, wu) = gauss_legendre_unit(POINTS_PER_DIRECTION);
    let mut tris = vec![*vertices];
    for _ in 0..level {
        let mut next = Vec::with_capacity(4 * tris.len());
        for [a, b, c] in tris {
            let mid = |p: Point, q: Point| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    for [a, b, c] in tris {
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - a[0], c[1] - a[1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        for (s, ws) in u.iter().zip(&wu) {
            for (r, wr) in u.iter().zip(&wu) {
                // collapsed coordinates: (s, r(1 - s)) covers the unit triangle
                let t = r * (1.0 - s);
                out.points
                    .push([a[0] + s * e1[0] + t * e2[0], a[1] + s * e1[1] + t * e2[1]]);
                out.weights.push(ws * wr * (1.0 - s) * jac);
            }
        }
    }
}

fn tensor_panels(level: usize, panels0: usize) -> (Vec<f64>, Vec<f64>) {
    let (u, wu) = gauss_legendre_unit(POINTS_PER_DIRECTION);
    let panels = panels0 << level;
    let h = 1.0 / panels as f64;
    let mut x = Vec::with_capacity(panels * u.len());
    let mut w = Vec::with_capacity(panels * u.len());
    for k in 0..panels {
        for (t, wt) in u.iter().zip(&wu) {
            x.push((k as f64 + t) * h);
            w.push(wt * h);
        }
    }
    (x, w)
}

fn volume_rule(domain: &Domain, level: usize) -> Rule {
    let mut rule = Rule {
        points: Vec::new(),
        weights: Vec::new(),
    };
    match &domain.kind {
        DomainKind::Triangle { vertices } => triangle_rule(vertices, level, &mut rule),
        DomainKind::Disk { center, radius } => {
            let (rho, wrho) = tensor_panels(level, 1);
            let (th, wth) = tensor_panels(level, 4);
            for (r, wr) in rho.iter().zip(&wrho) {
                let rr = r * radius;
                for (t, wt) in th.iter().zip(&wth) {
                    let a = 2.0 * PI * t;
                    rule.points
                        .push([center[0] + rr * a.cos(), center[1] + rr * a.sin()]);
                    rule.weights.push(wr * radius * wt * 2.0 * PI * rr);
                }
            }
        }
        DomainKind::Rectangle { min, max } => {
            let (s, ws) = tensor_panels(level, 1);
            let (lx, ly) = (max[0] - min[0], max[1] - min[1]);
            for (x, wx) in s.iter().zip(&ws) {
                for (y, wy) in s.iter().zip(&ws) {
                    rule.points.push([min[0] + x * lx, min[1] + y * ly]);
                    rule.weights.push(wx * wy * lx * ly);
                }
            }
        }
    }
    rule
}

fn boundary_rule(part: &BoundaryPart, weight: NormalWeight, level: usize) -> Rule {
    let (t, wt) = tensor_panels(level, 1);
    let speed = part.speed();
    let mut rule = Rule {
        points: Vec::with_capacity(t.len()),
        weights: Vec::with_capacity(t.len()),
    };
    for (t, w) in t.iter().zip(&wt) {
        let factor = match weight {
            NormalWeight::None => 1.0,
            NormalWeight::Normal(dir) => dir.component(part.normal(*t)),
        };
        rule.points.push(part.point(*t));
        rule.weights.push(w * speed * factor);
    }
    rule
}

fn rule_at(target: Target<'_>, weight: NormalWeight, level: usize) -> Rule {
    match target {
        Target::Domain(d) => volume_rule(d, level),
        Target::Part(p) => boundary_rule(p, weight, level),
    }
}

/// Integrals of several scalar functions, refined until every one of them
/// has converged.
pub fn integrate_many<F>(
    funcs: &[F],
    target: Target<'_>,
    weight: NormalWeight,
) -> Result<Vec<f64>, QuadratureError>
where
    F: Fn(Point) -> f64,
{
    let n = funcs.len();
    let apply = |rule: &Rule| -> Vec<(f64, f64)> {
        funcs
            .iter()
            .map(|f| {
                let mut s = 0.0;
                let mut sa = 0.0;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let v = f(*p) * w;
                    s += v;
                    sa += v.abs();
                }
                (s, sa)
            })
            .collect()
    };
    let mut prev = apply(&rule_at(target, weight, 0));
    let mut done = vec![false; n];
    let mut result: Vec<f64> = prev.iter().map(|p| p.0).collect();
    let max_level = match target {
        Target::Domain(_) => MAX_LEVEL_2D,
        Target::Part(_) => MAX_LEVEL,
    };
    for level in 1..=max_level {
        let rule = rule_at(target, weight, level);
        // only re-evaluate functions that have not converged yet
        let cur: Vec<(f64, f64)> = funcs
            .iter()
            .enumerate()
            .map(|(i, f)| {
                if done[i] {
                    return prev[i];
                }
                let mut s = 0.0;
                let mut sa = 0.0;
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let v = f(*p) * w;
                    s += v;
                    sa += v.abs();
                }
                (s, sa)
            })
            .collect();
        for i in 0..n {
            if done[i] {
                continue;
            }
            let scale = cur[i].0.abs().max(cur[i].1);
            if (cur[i].0 - prev[i].0).abs() <= REL_TOL * scale {
                done[i] = true;
                result[i] = cur[i].0;
            }
        }
        if done.iter().all(|&d| d) {
            return Ok(result);
        }
        if level == max_level {
            let i = done.iter().position(|d| !d).unwrap_or(0);
            return Err(QuadratureError::MomentOracle {
                previous: prev[i].0,
                last: cur[i].0,
            });
        }
        prev = cur;
    }
    unreachable!("refinement loop always returns")
}

/// Integral of one function.
pub fn integrate<F>(f: F, target: Target<'_>, weight: NormalWeight) -> Result<f64, QuadratureError>
where
    F: Fn(Point) -> f64,
{
    Ok(integrate_many(&[f], target, weight)?[0])
}

/// Reference moments `∫ f dΩ` or `∫ f (ξ·n) ds` of every function in `funcs`.
pub fn compute_moments(
    funcs: &[BasisFunction],
    target: Target<'_>,
    weight: NormalWeight,
) -> Result<Vec<f64>, QuadratureError> {
    let closures: Vec<_> = funcs.iter().map(|f| move |p: Point| f.eval(p)).collect();
    integrate_many(&closures, target, weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fspace::{FunctionSpace, SpaceSpec};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn area_of_unit_triangle() {
        let tri = Domain::reference_triangle();
        let v = integrate(|_| 1.0, Target::Domain(&tri), NormalWeight::None).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_and_polynomial_moments_on_triangle() {
        let tri = Domain::reference_triangle();
        let v = integrate(|p| 2.0 * p[0], Target::Domain(&tri), NormalWeight::None).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        // ∫∫ x^a y^b = a! b! / (a + b + 2)!
        let v = integrate(
            |p| p[0].powi(3) * p[1].powi(2),
            Target::Domain(&tri),
            NormalWeight::None,
        )
        .unwrap();
        assert!(rel(v, 6.0 * 2.0 / 5040.0) < 1e-13);
    }

    #[test]
    fn trig_moment_on_triangle() {
        // ∫∫_T sin(π(x+y)) = ∫_0^1 s sin(πs) ds = 1/π
        let tri = Domain::reference_triangle();
        let v = integrate(
            |p| (PI * (p[0] + p[1])).sin(),
            Target::Domain(&tri),
            NormalWeight::None,
        )
        .unwrap();
        assert!(rel(v, 1.0 / PI) < 1e-13);
    }

    #[test]
    fn divergence_identity_on_circle() {
        let disk = Domain::disk([0.5, 0.5], 0.5);
        let v = integrate(
            |p| p[0],
            Target::Part(&disk.parts[0]),
            NormalWeight::Normal(Direction::X),
        )
        .unwrap();
        assert!(rel(v, PI / 4.0) < 1e-13);
        let area = integrate(|_| 1.0, Target::Domain(&disk), NormalWeight::None).unwrap();
        assert!(rel(area, PI / 4.0) < 1e-14);
    }

    #[test]
    fn disk_second_moment() {
        // ∫∫ (x-c)^2 over a disk of radius r = π r^4 / 4
        let disk = Domain::disk([0.5, 0.5], 0.5);
        let v = integrate(
            |p| (p[0] - 0.5).powi(2),
            Target::Domain(&disk),
            NormalWeight::None,
        )
        .unwrap();
        assert!(rel(v, PI * 0.0625 / 4.0) < 1e-13);
    }

    #[test]
    fn rectangle_moment() {
        let rect = Domain::rectangle([0.0, 0.0], [2.0, 1.0]);
        let v = integrate(|p| p[0] * p[1], Target::Domain(&rect), NormalWeight::None).unwrap();
        assert!(rel(v, 1.0) < 1e-14);
    }

    #[test]
    fn gaussian_moment_matches_divergence_theorem() {
        // ∫∫ ∂x g = ∮ g n_x for the narrow Gaussian of the RBF space
        let tri = Domain::reference_triangle();
        let g = FunctionSpace::from_spec(&SpaceSpec::F3 {
            center: [1.0 / 3.0, 1.0 / 3.0],
            diameter: 0.2,
        })
        .basis[3]
            .clone();
        let vol = integrate(|p| g.grad(p)[0], Target::Domain(&tri), NormalWeight::None).unwrap();
        let mut surf = 0.0;
        for part in &tri.parts {
            surf += integrate(
                |p| g.eval(p),
                Target::Part(part),
                NormalWeight::Normal(Direction::X),
            )
            .unwrap();
        }
        assert!((vol - surf).abs() < 1e-14, "{vol} vs {surf}");
    }

    #[test]
    fn zero_function_converges_immediately() {
        let tri = Domain::reference_triangle();
        let v = integrate(|_| 0.0, Target::Domain(&tri), NormalWeight::None).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn singular_integrand_reports_failure() {
        let tri = Domain::reference_triangle();
        let err = integrate(
            |p| 1.0 / (p[0] - 0.5).abs().sqrt(),
            Target::Part(&tri.parts[0]),
            NormalWeight::None,
        );
        assert!(matches!(err, Err(QuadratureError::MomentOracle { .. })));
    }
}
