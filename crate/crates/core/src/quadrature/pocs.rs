//! SVD compression of exactness systems and the bounded POCS solver.

use nalgebra::{DMatrix, DVector};

use super::PocsConfig;
use crate::error::QuadratureError;

/// An exactness system reduced to orthonormal rows.
#[derive(Clone, Debug)]
pub struct CompressedSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rank: usize,
}

/// Keep the right singular vectors of `A` with `σ ≥ eps` as rows, and map
/// the right-hand side to `Σ⁻¹Uᵀb` on the same subspace.
pub fn compress_system(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    eps: f64,
) -> Result<CompressedSystem, QuadratureError> {
    let svd = crate::linalg::svd(a);
    let (u, vt) = (&svd.u, &svd.vt);
    let keep: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] >= eps).collect();
    if keep.is_empty() {
        return Err(QuadratureError::EmptyCompression { eps });
    }
    let n = a.ncols();
    let mut ac = DMatrix::zeros(keep.len(), n);
    let mut bc = DVector::zeros(keep.len());
    for (r, &i) in keep.iter().enumerate() {
        ac.row_mut(r).copy_from(&vt.row(i));
        bc[r] = u.column(i).dot(b) / svd.s[i];
    }
    Ok(CompressedSystem {
        a: ac,
        b: bc,
        rank: keep.len(),
    })
}

#[derive(Clone, Debug)]
pub struct PocsSolution {
    pub w: DVector<f64>,
    /// `‖Aw − b‖_∞` on the system that was solved.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct PocsFailure {
    pub best: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl From<PocsFailure> for QuadratureError {
    fn from(f: PocsFailure) -> Self {
        QuadratureError::Pocs {
            residual: f.residual,
            iterations: f.iterations,
        }
    }
}

fn clamp(w: &mut DVector<f64>, lower: &DVector<f64>) {
    for (x, l) in w.iter_mut().zip(lower.iter()) {
        if *x < *l {
            *x = *l;
        }
    }
}

/// How often the stall detector samples the residual.
pub(crate) const CHECK_EVERY: usize = 250;

/// Alternating projections between `{w : Aw = b}` (rows of `A` must be
/// orthonormal) and the box `{w ≥ lower}`. The returned iterate is always
/// the clamped one, so the bound holds exactly.
///
/// When the residual decays so slowly that the iteration budget cannot be
/// met even at the current rate, the solve stops early and reports failure.
pub fn pocs_bounded_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lower: &DVector<f64>,
    cfg: &PocsConfig,
    w0: Option<&DVector<f64>>,
) -> Result<PocsSolution, PocsFailure> {
    let target = cfg.tol * (1.0 + b.amax());
    let mut w = match w0 {
        Some(w0) => w0.clone(),
        None => a.tr_mul(b),
    };
    clamp(&mut w, lower);
    let mut r = b - a * &w;
    let mut res = r.amax();
    let mut best = (w.clone(), res);
    let mut last_check = res;
    let mut iterations = 0;
    while res > target && iterations < cfg.max_iters {
        w += a.tr_mul(&r);
        clamp(&mut w, lower);
        r = b - a * &w;
        res = r.amax();
        iterations += 1;
        if res < best.1 {
            best = (w.clone(), res);
        }
        if iterations % CHECK_EVERY == 0 && res > target {
            let rate = res / last_check;
            last_check = res;
            let remaining = (cfg.max_iters - iterations) as f64 / CHECK_EVERY as f64;
            let needed = if rate < 1.0 {
                (target / res).ln() / rate.ln()
            } else {
                f64::INFINITY
            };
            if needed > remaining {
                break;
            }
        }
    }
    if res <= target {
        let (w, res) = polish(a, b, lower, w, res);
        Ok(PocsSolution {
            w,
            residual: res,
            iterations,
        })
    } else {
        Err(PocsFailure {
            best: best.0,
            residual: best.1,
            iterations,
        })
    }
}

/// Refine a converged iterate by exact projections onto `{Aw = b}` with the
/// weights that sit on their bound held fixed. A step is kept only if it
/// respects every bound and lowers the residual, so the result stays in both
/// sets while the exactness defect drops to round-off level.
fn polish(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lower: &DVector<f64>,
    mut w: DVector<f64>,
    mut res: f64,
) -> (DVector<f64>, f64) {
    for _ in 0..3 {
        let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > lower[i]).collect();
        if free.is_empty() || a.nrows() == 0 {
            break;
        }
        let r = b - a * &w;
        let step = crate::linalg::lstsq(&a.select_columns(&free), &r, 1e-14);
        let mut trial = w.clone();
        for (k, &i) in free.iter().enumerate() {
            trial[i] += step[k];
        }
        if (0..trial.len()).any(|i| trial[i] < lower[i]) {
            break;
        }
        let trial_res = (b - a * &trial).amax();
        if trial_res >= res {
            break;
        }
        w = trial;
        res = trial_res;
    }
    (w, res)
}

/// Largest row defect `|(Aw − b)_i| / (1 + |b_i|)`.
pub fn relative_defect(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let r = a * w - b;
    r.iter()
        .zip(b.iter())
        .map(|(r, b)| r.abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}

/// Result of solving an exactness system over the threshold sweep.
#[derive(Clone, Debug)]
pub struct ExactSolve {
    pub w: DVector<f64>,
    pub eps: f64,
    pub rank: usize,
    pub iterations: usize,
    /// Largest relative defect on the original, uncompressed system.
    pub defect: f64,
    /// `‖Aw − b‖₂` on the original system (the selection criterion).
    pub residual: f64,
}

/// Orthonormal rows spanning the hard constraints, and the matching
/// right-hand side. Nearly dependent hard rows are merged.
fn orthonormal_hard_rows(a: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    if a.nrows() == 0 {
        return (DMatrix::zeros(0, a.ncols()), DVector::zeros(0));
    }
    let smax = crate::linalg::singular_values(a).max();
    match compress_system(a, b, 1e-13 * smax.max(f64::MIN_POSITIVE)) {
        Ok(c) => (c.a, c.b),
        Err(_) => (DMatrix::zeros(0, a.ncols()), DVector::zeros(0)),
    }
}

/// Solve `A w = b, w ≥ lower` for an over-complete, possibly ill-conditioned
/// exactness system.
///
/// Rows listed in `hard` are kept exactly; the remaining rows are projected
/// onto the complement of the hard rows and compressed with every threshold
/// of `cfg.eps_sweep`. Among the thresholds for which the bounded POCS
/// iteration converges, the weights with the smallest residual on the
/// original system are returned. With `cfg.strict`, a solution must also
/// meet every original row to `10·tol` relative.
pub fn solve_exactness(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    hard: &[usize],
    lower: &DVector<f64>,
    cfg: &PocsConfig,
) -> Result<ExactSolve, QuadratureError> {
    let n = a.ncols();
    let soft: Vec<usize> = (0..a.nrows()).filter(|i| !hard.contains(i)).collect();
    let (ha, hb) = orthonormal_hard_rows(&a.select_rows(hard), &b.select_rows(hard));
    // soft rows restricted to the complement of the hard row space
    let (mut sa, mut sb) = (a.select_rows(&soft), b.select_rows(&soft));
    if ha.nrows() > 0 {
        let particular = ha.tr_mul(&hb);
        sb -= &sa * particular;
        let proj = DMatrix::identity(n, n) - ha.tr_mul(&ha);
        sa *= proj;
    }
    let mut tried = Vec::new();
    let mut best: Option<ExactSolve> = None;
    let mut best_failure: Option<(f64, usize)> = None;
    let mut last_err = None;
    for &eps in &cfg.eps_sweep {
        let sys = if sa.nrows() == 0 {
            CompressedSystem {
                a: DMatrix::zeros(0, n),
                b: DVector::zeros(0),
                rank: 0,
            }
        } else {
            match compress_system(&sa, &sb, eps) {
                Ok(s) => s,
                Err(e) if ha.nrows() == 0 => {
                    last_err = Some(e);
                    continue;
                }
                Err(_) => CompressedSystem {
                    a: DMatrix::zeros(0, n),
                    b: DVector::zeros(0),
                    rank: 0,
                },
            }
        };
        if tried.contains(&sys.rank) {
            continue;
        }
        tried.push(sys.rank);
        let full_a = if ha.nrows() == 0 {
            sys.a.clone()
        } else {
            let mut m = DMatrix::zeros(ha.nrows() + sys.rank, n);
            m.rows_mut(0, ha.nrows()).copy_from(&ha);
            m.rows_mut(ha.nrows(), sys.rank).copy_from(&sys.a);
            m
        };
        let mut full_b = DVector::zeros(ha.nrows() + sys.rank);
        full_b.rows_mut(0, ha.nrows()).copy_from(&hb);
        full_b.rows_mut(ha.nrows(), sys.rank).copy_from(&sys.b);
        let rank = full_a.nrows();
        match pocs_bounded_solve(&full_a, &full_b, lower, cfg, None) {
            Ok(sol) => {
                let defect = relative_defect(a, b, &sol.w);
                let residual = (a * &sol.w - b).norm();
                log::debug!(
                    "eps {eps:e}: rank {rank}, {} iterations, residual {residual:e}, defect {defect:e}",
                    sol.iterations
                );
                if cfg.strict && defect > 10.0 * cfg.tol {
                    continue;
                }
                if best.as_ref().is_none_or(|b| residual < b.residual) {
                    best = Some(ExactSolve {
                        w: sol.w,
                        eps,
                        rank,
                        iterations: sol.iterations,
                        defect,
                        residual,
                    });
                }
            }
            Err(f) => {
                log::debug!("eps {eps:e}: rank {rank}, POCS failed at {:e}", f.residual);
                if best_failure.is_none_or(|(r, _)| f.residual < r) {
                    best_failure = Some((f.residual, f.iterations));
                }
            }
        }
    }
    match (best, best_failure, last_err) {
        (Some(s), _, _) => Ok(s),
        (None, Some((residual, iterations)), _) => Err(QuadratureError::Pocs {
            residual,
            iterations,
        }),
        (None, None, Some(e)) if tried.is_empty() => Err(e),
        _ => Err(QuadratureError::Pocs {
            residual: f64::INFINITY,
            iterations: 0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PocsConfig {
        PocsConfig::default()
    }

    #[test]
    fn duplicated_row_is_folded() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![3.0, 3.0, 2.0]);
        let c = compress_system(&a, &b, 1e-12).unwrap();
        assert_eq!(c.rank, 2);
        let gram = &c.a * c.a.transpose();
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        // the compressed system has the same solutions as the original
        let w = c.a.tr_mul(&c.b);
        assert!((&a * &w - &b).amax() < 1e-12);
    }

    #[test]
    fn identity_compression() {
        let a = DMatrix::identity(4, 4);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let c = compress_system(&a, &b, 1e-16).unwrap();
        assert_eq!(c.rank, 4);
        assert!((c.a.tr_mul(&c.b) - &b).amax() < 1e-15);
    }

    #[test]
    fn tiny_matrix_compresses_to_nothing() {
        let a = DMatrix::from_element(2, 2, 1e-20);
        let b = DVector::zeros(2);
        assert!(matches!(
            compress_system(&a, &b, 1e-16),
            Err(QuadratureError::EmptyCompression { .. })
        ));
    }

    #[test]
    fn symmetric_two_node_segment() {
        let len = 0.7;
        let s = 1.0 / 2f64.sqrt();
        let a = DMatrix::from_row_slice(1, 2, &[s, s]);
        let b = DVector::from_vec(vec![s * len]);
        let sol = pocs_bounded_solve(&a, &b, &DVector::zeros(2), &cfg(), None).unwrap();
        assert!((sol.w[0] - len / 2.0).abs() < 1e-15);
        assert!((sol.w[1] - len / 2.0).abs() < 1e-15);
    }

    /// Exhaustive search for the feasible set of a 3-node system with one
    /// active lower bound.
    #[test]
    fn active_lower_bound_against_grid_search() {
        // weights sum to 1 and first moment at nodes 0, 0.5, 1 equals 0.9:
        // unconstrained solutions put negative weight on node 0.
        let x = [0.0, 0.5, 1.0];
        let a0 = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, x[0], x[1], x[2]]);
        let b0 = DVector::from_vec(vec![1.0, 0.9]);
        let wmin = 0.05;
        let lower = DVector::from_element(3, wmin);
        let sys = compress_system(&a0, &b0, 1e-14).unwrap();
        let sol = pocs_bounded_solve(&sys.a, &sys.b, &lower, &cfg(), None).unwrap();
        assert!(sol.w.iter().all(|&w| w >= wmin));
        assert!((&a0 * &sol.w - &b0).amax() <= 1e-11);
        // feasible set: w0 = t, w2 = 0.9 - 0.5(1 - t) ... parametrize by w0
        // and keep the grid points that satisfy both bounds.
        let mut feasible = Vec::new();
        for k in 0..=100_000 {
            let w0 = k as f64 * 1e-5;
            // w1 + w2 = 1 - w0, 0.5 w1 + w2 = 0.9  →  w1 = 2(1 - w0 - 0.9) ...
            let w1 = 2.0 * (1.0 - w0) - 1.8;
            let w2 = 1.0 - w0 - w1;
            if w0 >= wmin && w1 >= wmin && w2 >= wmin {
                feasible.push(w0);
            }
        }
        let (lo, hi) = (feasible[0], *feasible.last().unwrap());
        assert!(sol.w[0] >= lo - 1e-5 && sol.w[0] <= hi + 1e-5);
        assert!(
            (sol.w[0] - wmin).abs() < 1e-12,
            "bound should be active: {}",
            sol.w[0]
        );
    }

    #[test]
    fn infeasible_system_fails_with_best_iterate() {
        // w ≥ 0 but the weights must sum to -1
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]) / 2f64.sqrt();
        let b = DVector::from_vec(vec![-1.0 / 2f64.sqrt()]);
        let err = pocs_bounded_solve(&a, &b, &DVector::zeros(2), &cfg(), None).unwrap_err();
        assert!(err.residual > 0.1);
        assert!(err.iterations < cfg().max_iters);
    }

    #[test]
    fn fejer_monotone_toward_known_feasible_point() {
        // random positive-feasible system: b = A w* for positive w*
        let n = 12;
        let m = 5;
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let a0 = DMatrix::from_fn(m, n, |_, _| rnd() - 0.5);
        let wstar = DVector::from_fn(n, |_, _| 0.5 + rnd());
        let b0 = &a0 * &wstar;
        let sys = compress_system(&a0, &b0, 1e-14).unwrap();
        let lower = DVector::zeros(n);
        let mut w = sys.a.tr_mul(&sys.b);
        clamp(&mut w, &lower);
        let mut dist = (&w - &wstar).norm();
        for _ in 0..200 {
            w += sys.a.tr_mul(&(&sys.b - &sys.a * &w));
            clamp(&mut w, &lower);
            let d = (&w - &wstar).norm();
            assert!(d <= dist + 1e-13);
            dist = d;
        }
    }

    #[test]
    fn sweep_picks_an_accurate_solution() {
        // nearly dependent rows: a tiny singular value that must be kept
        let a = DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0,
                1.0,
                1.0,
                1.0,
                0.0,
                0.25,
                0.5,
                1.0,
                0.0,
                0.25 + 1e-9,
                0.5,
                1.0,
            ],
        );
        let wstar = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let b = &a * &wstar;
        let s = solve_exactness(&a, &b, &[], &DVector::zeros(4), &cfg()).unwrap();
        assert!(s.defect <= 1e-11);
        assert!(s.w.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn hard_rows_hold_in_best_fit() {
        // inconsistent soft rows: the first (hard) row must still hold
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 0.3, 0.5]);
        let s = solve_exactness(&a, &b, &[0], &DVector::zeros(2), &cfg()).unwrap();
        assert!((s.w[0] + s.w[1] - 1.0).abs() < 1e-13);
        assert!((s.w[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn strict_mode_rejects_inconsistent_systems() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let strict = PocsConfig {
            strict: true,
            ..cfg()
        };
        assert!(solve_exactness(&a, &b, &[], &DVector::zeros(1), &strict).is_err());
        let s = solve_exactness(&a, &b, &[], &DVector::zeros(1), &cfg()).unwrap();
        assert!((s.w[0] - 1.5).abs() < 1e-12);
    }
}
