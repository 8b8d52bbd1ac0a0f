//! Function spaces as lists of analytically differentiable basis functions.
//!
//! A [`FunctionSpace`] is the space `F` an operator is exact for. The
//! quadrature conditions need two derived spanning sets: all pairwise
//! products (`F²`) and their directional derivatives (`∂ξ(F²)`). Both are
//! generated lazily as [`BasisFunction`] trees and may contain duplicates;
//! the SVD compression in [`crate::quadrature`] removes redundancy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FspaceError;
use crate::Point;

/// Gradient of a scalar function in the plane.
pub type Grad = [f64; 2];
/// Symmetric 2×2 Hessian, row-major.
pub type Hessian = [[f64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wave {
    Sin,
    Cos,
}

/// One analytic basis function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFunction {
    /// `(x - cx)^ex * (y - cy)^ey`.
    Monomial {
        exponents: [u32; 2],
        #[serde(default)]
        center: Point,
    },
    /// `sin` or `cos` of `omega * (c1 x + c2 y) + phase`.
    Trig {
        wave: Wave,
        omega: f64,
        coeffs: [f64; 2],
        #[serde(default)]
        phase: f64,
    },
    /// `exp(-|p - center|^2 / diameter^2)`.
    Gaussian { center: Point, diameter: f64 },
    Product {
        f: Box<BasisFunction>,
        g: Box<BasisFunction>,
    },
    /// `direction · grad(inner)`.
    DirectionalDerivative {
        inner: Box<BasisFunction>,
        direction: [f64; 2],
    },
}

impl BasisFunction {
    pub fn constant() -> Self {
        Self::monomial(0, 0)
    }

    pub fn monomial(ex: u32, ey: u32) -> Self {
        BasisFunction::Monomial {
            exponents: [ex, ey],
            center: [0.0, 0.0],
        }
    }

    pub fn trig(wave: Wave, omega: f64, coeffs: [f64; 2]) -> Self {
        BasisFunction::Trig {
            wave,
            omega,
            coeffs,
            phase: 0.0,
        }
    }

    pub fn gaussian(center: Point, diameter: f64) -> Self {
        BasisFunction::Gaussian { center, diameter }
    }

    pub fn product(f: BasisFunction, g: BasisFunction) -> Self {
        BasisFunction::Product {
            f: Box::new(f),
            g: Box::new(g),
        }
    }

    pub fn directional_derivative(inner: BasisFunction, direction: [f64; 2]) -> Self {
        BasisFunction::DirectionalDerivative {
            inner: Box::new(inner),
            direction,
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            BasisFunction::Monomial { exponents, center } => {
                powi(p[0] - center[0], exponents[0]) * powi(p[1] - center[1], exponents[1])
            }
            BasisFunction::Trig {
                wave,
                omega,
                coeffs,
                phase,
            } => {
                let arg = omega * (coeffs[0] * p[0] + coeffs[1] * p[1]) + phase;
                match wave {
                    Wave::Sin => arg.sin(),
                    Wave::Cos => arg.cos(),
                }
            }
            BasisFunction::Gaussian { center, diameter } => {
                let rx = p[0] - center[0];
                let ry = p[1] - center[1];
                (-(rx * rx + ry * ry) / (diameter * diameter)).exp()
            }
            BasisFunction::Product { f, g } => f.eval(p) * g.eval(p),
            BasisFunction::DirectionalDerivative { inner, direction } => {
                let g = inner.grad(p);
                direction[0] * g[0] + direction[1] * g[1]
            }
        }
    }

    pub fn grad(&self, p: Point) -> Grad {
        match self {
            BasisFunction::Monomial { exponents, center } => {
                let (x, y) = (p[0] - center[0], p[1] - center[1]);
                let [ex, ey] = *exponents;
                let dx = if ex == 0 {
                    0.0
                } else {
                    ex as f64 * powi(x, ex - 1) * powi(y, ey)
                };
                let dy = if ey == 0 {
                    0.0
                } else {
                    ey as f64 * powi(x, ex) * powi(y, ey - 1)
                };
                [dx, dy]
            }
            BasisFunction::Trig {
                wave,
                omega,
                coeffs,
                phase,
            } => {
                let arg = omega * (coeffs[0] * p[0] + coeffs[1] * p[1]) + phase;
                let d = match wave {
                    Wave::Sin => arg.cos(),
                    Wave::Cos => -arg.sin(),
                };
                [omega * coeffs[0] * d, omega * coeffs[1] * d]
            }
            BasisFunction::Gaussian { center, diameter } => {
                let e = self.eval(p);
                let s = -2.0 / (diameter * diameter);
                [s * (p[0] - center[0]) * e, s * (p[1] - center[1]) * e]
            }
            BasisFunction::Product { f, g } => {
                let (fv, gv) = (f.eval(p), g.eval(p));
                let (fg, gg) = (f.grad(p), g.grad(p));
                [fg[0] * gv + fv * gg[0], fg[1] * gv + fv * gg[1]]
            }
            BasisFunction::DirectionalDerivative { inner, direction } => {
                let h = inner
                    .hessian(p)
                    .expect("nested directional derivatives are not supported");
                [
                    h[0][0] * direction[0] + h[0][1] * direction[1],
                    h[1][0] * direction[0] + h[1][1] * direction[1],
                ]
            }
        }
    }

    /// Second derivatives. `None` for directional-derivative wrappers, which
    /// would need third derivatives of their argument.
    pub fn hessian(&self, p: Point) -> Option<Hessian> {
        let h = match self {
            BasisFunction::Monomial { exponents, center } => {
                let (x, y) = (p[0] - center[0], p[1] - center[1]);
                let [ex, ey] = *exponents;
                let d1 = |e: u32, v: f64| {
                    if e == 0 {
                        0.0
                    } else {
                        e as f64 * powi(v, e - 1)
                    }
                };
                let d2 = |e: u32, v: f64| {
                    if e < 2 {
                        0.0
                    } else {
                        (e * (e - 1)) as f64 * powi(v, e - 2)
                    }
                };
                let hxy = d1(ex, x) * d1(ey, y);
                [
                    [d2(ex, x) * powi(y, ey), hxy],
                    [hxy, powi(x, ex) * d2(ey, y)],
                ]
            }
            BasisFunction::Trig { omega, coeffs, .. } => {
                let v = -omega * omega * self.eval(p);
                [
                    [v * coeffs[0] * coeffs[0], v * coeffs[0] * coeffs[1]],
                    [v * coeffs[1] * coeffs[0], v * coeffs[1] * coeffs[1]],
                ]
            }
            BasisFunction::Gaussian { center, diameter } => {
                let e = self.eval(p);
                let d2 = diameter * diameter;
                let r = [p[0] - center[0], p[1] - center[1]];
                let mut h = [[0.0; 2]; 2];
                for (i, row) in h.iter_mut().enumerate() {
                    for (j, hij) in row.iter_mut().enumerate() {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        *hij = e * (4.0 * r[i] * r[j] / (d2 * d2) - 2.0 * delta / d2);
                    }
                }
                h
            }
            BasisFunction::Product { f, g } => {
                let (fv, gv) = (f.eval(p), g.eval(p));
                let (fg, gg) = (f.grad(p), g.grad(p));
                let (fh, gh) = (f.hessian(p)?, g.hessian(p)?);
                let mut h = [[0.0; 2]; 2];
                for (i, row) in h.iter_mut().enumerate() {
                    for (j, hij) in row.iter_mut().enumerate() {
                        *hij = fh[i][j] * gv + fv * gh[i][j] + fg[i] * gg[j] + gg[i] * fg[j];
                    }
                }
                h
            }
            BasisFunction::DirectionalDerivative { .. } => return None,
        };
        Some(h)
    }

    /// The function moved by `offset`: `g(p) = f(p - offset)`.
    pub fn translated(&self, offset: Point) -> BasisFunction {
        match self {
            BasisFunction::Monomial { exponents, center } => BasisFunction::Monomial {
                exponents: *exponents,
                center: [center[0] + offset[0], center[1] + offset[1]],
            },
            BasisFunction::Trig {
                wave,
                omega,
                coeffs,
                phase,
            } => BasisFunction::Trig {
                wave: *wave,
                omega: *omega,
                coeffs: *coeffs,
                phase: phase - omega * (coeffs[0] * offset[0] + coeffs[1] * offset[1]),
            },
            BasisFunction::Gaussian { center, diameter } => BasisFunction::Gaussian {
                center: [center[0] + offset[0], center[1] + offset[1]],
                diameter: *diameter,
            },
            BasisFunction::Product { f, g } => {
                BasisFunction::product(f.translated(offset), g.translated(offset))
            }
            BasisFunction::DirectionalDerivative { inner, direction } => {
                BasisFunction::directional_derivative(inner.translated(offset), *direction)
            }
        }
    }
}

impl BasisFunction {
    /// The function seen through the dilation `p ↦ h·p`, up to a constant
    /// factor: `g(p) ∝ f(h p)`. Spans are preserved exactly.
    pub fn scaled(&self, h: f64) -> BasisFunction {
        match self {
            BasisFunction::Monomial { exponents, center } => BasisFunction::Monomial {
                exponents: *exponents,
                center: [center[0] / h, center[1] / h],
            },
            BasisFunction::Trig {
                wave,
                omega,
                coeffs,
                phase,
            } => BasisFunction::Trig {
                wave: *wave,
                omega: omega * h,
                coeffs: *coeffs,
                phase: *phase,
            },
            BasisFunction::Gaussian { center, diameter } => BasisFunction::Gaussian {
                center: [center[0] / h, center[1] / h],
                diameter: diameter / h,
            },
            BasisFunction::Product { f, g } => BasisFunction::product(f.scaled(h), g.scaled(h)),
            BasisFunction::DirectionalDerivative { inner, direction } => {
                BasisFunction::directional_derivative(inner.scaled(h), *direction)
            }
        }
    }
}

fn powi(v: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => v,
        2 => v * v,
        _ => v.powi(e as i32),
    }
}

/// Named builtin spaces with their parameters, as they appear in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", deny_unknown_fields)]
pub enum SpaceSpec {
    /// All monomials of total degree ≤ 3 (ten functions).
    F1,
    /// `{1, x, y, sin(ω(x+y)), cos(ω(x+y))}`.
    F2 { omega: f64 },
    /// `{1, x, y, exp(-|p - x0|²/d²)}`.
    F3 { center: Point, diameter: f64 },
    /// `{1, x, y}` plus the four products of `sin/cos(ωx)` with `sin/cos(ωy)`.
    F4 { omega: f64 },
    /// All monomials of total degree ≤ `degree`.
    Polynomial { degree: u32 },
}

impl SpaceSpec {
    pub fn label(&self) -> String {
        match self {
            SpaceSpec::F1 => "F1".to_string(),
            SpaceSpec::F2 { omega } => format!("F2(omega={omega})"),
            SpaceSpec::F3 { center, diameter } => {
                format!("F3(center=({}, {}), d={diameter})", center[0], center[1])
            }
            SpaceSpec::F4 { omega } => format!("F4(omega={omega})"),
            SpaceSpec::Polynomial { degree } => format!("P{degree}"),
        }
    }

    /// Whether the span is unchanged by translations of the plane.
    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self, SpaceSpec::F3 { .. })
    }
}

/// An ordered basis `f_1, …, f_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpace {
    pub label: String,
    pub basis: Vec<BasisFunction>,
    /// The span is known to be closed under translations of the plane, so
    /// it may be evaluated in any shifted frame.
    #[serde(default)]
    pub translation_invariant: bool,
}

impl FunctionSpace {
    pub fn new(label: impl Into<String>, basis: Vec<BasisFunction>) -> Self {
        Self {
            label: label.into(),
            basis,
            translation_invariant: false,
        }
    }

    fn with_translation_invariance(mut self, invariant: bool) -> Self {
        self.translation_invariant = invariant;
        self
    }

    pub fn from_spec(spec: &SpaceSpec) -> Self {
        let linear = || {
            vec![
                BasisFunction::constant(),
                BasisFunction::monomial(1, 0),
                BasisFunction::monomial(0, 1),
            ]
        };
        let basis = match spec {
            SpaceSpec::F1 => return Self::polynomial(3).relabel(spec.label()),
            SpaceSpec::Polynomial { degree } => return Self::polynomial(*degree),
            SpaceSpec::F2 { omega } => {
                let mut b = linear();
                b.push(BasisFunction::trig(Wave::Sin, *omega, [1.0, 1.0]));
                b.push(BasisFunction::trig(Wave::Cos, *omega, [1.0, 1.0]));
                b
            }
            SpaceSpec::F3 { center, diameter } => {
                let mut b = linear();
                b.push(BasisFunction::gaussian(*center, *diameter));
                b
            }
            SpaceSpec::F4 { omega } => {
                let tx = |w| BasisFunction::trig(w, *omega, [1.0, 0.0]);
                let ty = |w| BasisFunction::trig(w, *omega, [0.0, 1.0]);
                let mut b = linear();
                b.push(BasisFunction::product(tx(Wave::Sin), ty(Wave::Sin)));
                b.push(BasisFunction::product(tx(Wave::Cos), ty(Wave::Cos)));
                b.push(BasisFunction::product(tx(Wave::Sin), ty(Wave::Cos)));
                b.push(BasisFunction::product(tx(Wave::Cos), ty(Wave::Sin)));
                b
            }
        };
        Self::new(spec.label(), basis).with_translation_invariance(spec.is_translation_invariant())
    }

    /// Monomials `x^i y^j` with `i + j ≤ degree`, ordered by total degree and
    /// then by decreasing power of `x`.
    pub fn polynomial(degree: u32) -> Self {
        let mut basis = Vec::new();
        for total in 0..=degree {
            for ey in 0..=total {
                basis.push(BasisFunction::monomial(total - ey, ey));
            }
        }
        Self::new(format!("P{degree}"), basis).with_translation_invariance(true)
    }

    fn relabel(mut self, label: String) -> Self {
        self.label = label;
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// All pairwise products `g_{i + K j} = f_i f_j` (length `K²`).
    pub fn product_spanning_set(&self) -> Vec<BasisFunction> {
        let mut out = Vec::with_capacity(self.dim() * self.dim());
        for fj in &self.basis {
            for fi in &self.basis {
                out.push(BasisFunction::product(fi.clone(), fj.clone()));
            }
        }
        out
    }

    /// `∂ξ(f_i f_j)` for all pairs (length `K²`).
    pub fn derivative_spanning_set(&self, direction: [f64; 2]) -> Vec<BasisFunction> {
        self.product_spanning_set()
            .into_iter()
            .map(|g| BasisFunction::directional_derivative(g, direction))
            .collect()
    }

    /// The space moved by `offset`: every basis function becomes
    /// `f(· - offset)`, expressed in the same family.
    pub fn translate(&self, offset: Point) -> FunctionSpace {
        FunctionSpace {
            label: self.label.clone(),
            basis: self.basis.iter().map(|f| f.translated(offset)).collect(),
            translation_invariant: self.translation_invariant,
        }
    }

    /// The space seen through the dilation `p ↦ h·p` (same span as
    /// `{f(h ·) : f ∈ F}`).
    pub fn scale(&self, h: f64) -> FunctionSpace {
        FunctionSpace {
            label: self.label.clone(),
            basis: self.basis.iter().map(|f| f.scaled(h)).collect(),
            translation_invariant: self.translation_invariant,
        }
    }

    /// Nodal values of the basis and of its x/y derivatives.
    pub fn eval_vandermonde(&self, nodes: &[Point]) -> Result<Vandermonde, FspaceError> {
        let (n, k) = (nodes.len(), self.dim());
        if n == 0 || n < k {
            return Err(FspaceError::TooFewNodes { nodes: n, dim: k });
        }
        let mut v = DMatrix::zeros(n, k);
        let mut vx = DMatrix::zeros(n, k);
        let mut vy = DMatrix::zeros(n, k);
        for (i, p) in nodes.iter().enumerate() {
            for (j, f) in self.basis.iter().enumerate() {
                v[(i, j)] = f.eval(*p);
                let g = f.grad(*p);
                vx[(i, j)] = g[0];
                vy[(i, j)] = g[1];
            }
        }
        let sv = crate::linalg::singular_values(&v);
        let smax = sv.max();
        let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
        if rank < k {
            return Err(FspaceError::NotUnisolvent { rank, dim: k });
        }
        Ok(Vandermonde { v, vx, vy })
    }

    /// Whether the constant function is one of the basis functions.
    pub fn contains_constants(&self) -> bool {
        self.constant_index().is_some()
    }

    /// Position of the constant function in the basis.
    pub fn constant_index(&self) -> Option<usize> {
        self.basis.iter().position(|f| {
            matches!(
                f,
                BasisFunction::Monomial {
                    exponents: [0, 0],
                    ..
                }
            )
        })
    }

    /// Indices of the spanning functions `1·f_j` and `f_j·1` within
    /// [`Self::product_spanning_set`]; empty if constants are not in the basis.
    pub fn constant_product_indices(&self) -> Vec<usize> {
        let k = self.dim();
        match self.constant_index() {
            None => Vec::new(),
            Some(c) => {
                let mut idx: Vec<usize> = (0..k).flat_map(|j| [c + k * j, j + k * c]).collect();
                idx.sort_unstable();
                idx.dedup();
                idx
            }
        }
    }

    /// Least-squares residual (max norm) of representing the constant
    /// function on `points` by the basis.
    pub fn constant_residual(&self, points: &[Point]) -> f64 {
        let (n, k) = (points.len(), self.dim());
        let v = DMatrix::from_fn(n, k, |i, j| self.basis[j].eval(points[i]));
        let ones = DVector::from_element(n, 1.0);
        let c = crate::linalg::lstsq(&v, &ones, 1e-13);
        (&v * c - ones).amax()
    }
}

/// `V`, `V_x`, `V_y`: rows are nodes, columns are basis functions.
#[derive(Clone, Debug)]
pub struct Vandermonde {
    pub v: DMatrix<f64>,
    pub vx: DMatrix<f64>,
    pub vy: DMatrix<f64>,
}

impl Vandermonde {
    pub fn derivative(&self, dir: crate::Direction) -> &DMatrix<f64> {
        match dir {
            crate::Direction::X => &self.vx,
            crate::Direction::Y => &self.vy,
        }
    }
}
