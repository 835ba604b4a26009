//! Seeded instance generators and a small exact oracle.
//!
//! Every generator is a pure function of its arguments: the same seed
//! produces the same instance byte for byte, which is what makes regression
//! traces and cross-run comparisons meaningful. Randomness comes from
//! ChaCha12 seeded directly with the user seed.
//!
//! The planted generators build instances around a known witness y, so tests
//! can assert "feasible" verdicts unconditionally: the instance is feasible
//! by construction with margin to spare. The margin generator builds scalar
//! multiples with a uniform packing/covering gap, which the ratio test must
//! reject at the very first iteration. The diagonal objective generator
//! pairs with [`lp_oracle_small`], which solves the same instance exactly by
//! vertex enumeration (the optimum of a bounded LP sits on a vertex), plus a
//! grid sweep as a cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::reduce::{MpcInstance, PositiveSdpInstance};
use crate::spectral::{sym_eigh, DiagMatrix, SymMatrix};

/// Planted witnesses cover their targets with this factor of slack.
const COVER_MARGIN: f64 = 1.25;

/// Conditioning floor for planted mixes (relative to the top eigenvalue).
const CONDITION_FLOOR: f64 = 1e-6;

/// Resampling attempts before a generator gives up.
const MAX_ATTEMPTS: usize = 10;

/// Grid sweeps are capped at roughly this many points in total.
const GRID_POINT_CAP: f64 = 4e6;

/// A generated instance together with the planted witness: `witness`
/// satisfies the packing constraint with equality (up to roundoff) and the
/// covering constraints with `COVER_MARGIN` slack.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub instance: MpcInstance,
    pub witness: Vec<f64>,
}

/// A generated infeasible instance: every variable's packing-to-covering
/// ratio is exactly `margin`, so covering 1 forces packing norm `margin`.
#[derive(Debug, Clone)]
pub struct MarginInstance {
    pub instance: MpcInstance,
    pub margin: f64,
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidGenSpec {
            what: format!("dimensions must be positive, got n = {n}, m = {m}"),
        });
    }
    Ok(())
}

/// Uniform matrix with entries in [-1, 1), row-major.
fn rand_entries(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random symmetric matrix with entries of size about `scale`.
pub fn rand_sym(n: usize, scale: f64, rng: &mut ChaCha12Rng) -> SymMatrix {
    let raw: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-scale..scale)).collect();
    SymMatrix::new(n, raw).expect("finite entries")
}

/// Random PSD matrix `R^T R / n` with entries of size about `scale`.
pub fn rand_psd(n: usize, scale: f64, rng: &mut ChaCha12Rng) -> SymMatrix {
    let r = rand_entries(n, rng);
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += r[k * n + i] * r[k * n + j];
            }
            let v = acc * scale / n as f64;
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    SymMatrix::new(n, data).expect("finite entries")
}

/// Feasible instance with identity targets: packing matrices are congruences
/// of random Gram pieces chosen so that `sum y_j P_j = I` exactly, covering
/// diagonals are scaled so that `sum y_j C_j = COVER_MARGIN` coordinate-wise.
pub fn planted_identity(n: usize, m: usize, seed: u64) -> Result<PlantedInstance> {
    check_dims(n, m)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..=1.0)).collect();

    // Gram pieces whose y-mix is comfortably positive definite; resample the
    // (improbable) degenerate draws so the inverse square root is stable.
    let mut attempt = 0;
    let (pieces, mix_dec) = loop {
        let pieces: Vec<SymMatrix> = (0..m).map(|_| rand_psd(n, 1.0, &mut rng)).collect();
        let mut mix = SymMatrix::zeros(n);
        for (g, &w) in pieces.iter().zip(&y) {
            mix.add_scaled(g, w)?;
        }
        let dec = sym_eigh(&mix)?;
        if dec.lambda_min() > CONDITION_FLOOR * dec.lambda_max() {
            break (pieces, dec);
        }
        attempt += 1;
        if attempt >= MAX_ATTEMPTS {
            return Err(Error::InvalidGenSpec {
                what: format!("planted mix stayed ill-conditioned after {MAX_ATTEMPTS} draws"),
            });
        }
    };

    // W = mix^{-1/2}, column-major; P_j = W^T G_j W sums to the identity
    // under y by construction.
    let mut w = vec![0.0; n * n];
    for col in 0..n {
        let lam = mix_dec.eigenvalues()[col];
        let scale = 1.0 / lam.sqrt();
        let v = mix_dec.eigenvector(col);
        for i in 0..n {
            w[col * n + i] = v[i] * scale;
        }
    }
    let packing: Vec<SymMatrix> = pieces
        .iter()
        .map(|g| g.congruence(&w, n))
        .collect::<Result<_>>()?;

    // Covering diagonals: random positive mass, rescaled per coordinate so
    // the witness covers at exactly the margin.
    let raw: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(0.1..=1.0)).collect())
        .collect();
    let mut col_sum = vec![0.0; n];
    for (u, &w) in raw.iter().zip(&y) {
        for (k, &v) in u.iter().enumerate() {
            col_sum[k] += w * v;
        }
    }
    let covering: Vec<DiagMatrix> = raw
        .iter()
        .map(|u| {
            DiagMatrix::new(
                u.iter()
                    .enumerate()
                    .map(|(k, &v)| COVER_MARGIN * v / col_sum[k])
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;

    let instance = MpcInstance::new(
        packing,
        covering,
        SymMatrix::identity(n),
        DiagMatrix::new(vec![1.0; n])?,
    )?;
    Ok(PlantedInstance {
        instance,
        witness: y,
    })
}

/// Feasible instance with general targets: an identity-form planted instance
/// pushed through a random congruence (optionally rank-deficient, making the
/// packing target singular) and a random positive rescaling of the covering
/// targets. The witness carries over unchanged.
pub fn planted_general(
    n: usize,
    m: usize,
    seed: u64,
    singular_target: bool,
) -> Result<PlantedInstance> {
    let base = planted_identity(n, m, seed)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut attempt = 0;
    let map = loop {
        let mut map = rand_entries(n, &mut rng);
        if singular_target {
            // Zeroing a row caps the rank at n - 1: the packing target
            // M^T M then has a genuine null space for the reducer to find.
            for v in map.iter_mut().take(n) {
                *v = 0.0;
            }
        }
        let gram = SymMatrix::identity(n).congruence(&map_cols(&map, n), n)?;
        let dec = sym_eigh(&gram)?;
        let rank_floor = if singular_target && n > 1 {
            dec.eigenvalues()[1]
        } else {
            dec.lambda_min()
        };
        if rank_floor > CONDITION_FLOOR * dec.lambda_max() {
            break map;
        }
        attempt += 1;
        if attempt >= MAX_ATTEMPTS {
            return Err(Error::InvalidGenSpec {
                what: format!("congruence map stayed ill-conditioned after {MAX_ATTEMPTS} draws"),
            });
        }
    };
    let w = map_cols(&map, n);

    let packing: Vec<SymMatrix> = base
        .instance
        .packing()
        .iter()
        .map(|p| p.congruence(&w, n))
        .collect::<Result<_>>()?;
    let pack_rhs = SymMatrix::identity(n).congruence(&w, n)?;

    let scales: Vec<f64> = (0..base.instance.n_c())
        .map(|_| rng.gen_range(0.5..=2.0))
        .collect();
    let covering: Vec<DiagMatrix> = base
        .instance
        .covering()
        .iter()
        .map(|c| DiagMatrix::new(c.d().iter().zip(&scales).map(|(v, s)| v * s).collect()))
        .collect::<Result<_>>()?;
    let cover_rhs = DiagMatrix::new(scales)?;

    let instance = MpcInstance::new(packing, covering, pack_rhs, cover_rhs)?;
    Ok(PlantedInstance {
        instance,
        witness: base.witness,
    })
}

/// Row-major square matrix reinterpreted as a column-major congruence map.
fn map_cols(row_major: &[f64], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            w[j * n + i] = row_major[i * n + j];
        }
    }
    w
}

/// Infeasible instance with a uniform gap: `P_j = margin * c_j * I` and
/// `C_j = c_j * ones`, so covering the target forces packing norm `margin`.
/// Requires `margin > 1 + 9 * intended_eps`, which makes the instance
/// infeasible even against the relaxed packing bound at that accuracy (and
/// at every smaller one).
pub fn margin_infeasible(
    n: usize,
    m: usize,
    seed: u64,
    margin: f64,
    intended_eps: f64,
) -> Result<MarginInstance> {
    check_dims(n, m)?;
    if !(intended_eps > 0.0 && intended_eps < 1.0) {
        return Err(Error::InvalidGenSpec {
            what: format!("intended accuracy must lie in (0, 1), got {intended_eps}"),
        });
    }
    if !margin.is_finite() || margin <= 1.0 + 9.0 * intended_eps {
        return Err(Error::InvalidGenSpec {
            what: format!(
                "margin must exceed 1 + 9 eps = {} to certify infeasibility, got {margin}",
                1.0 + 9.0 * intended_eps
            ),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut packing = Vec::with_capacity(m);
    let mut covering = Vec::with_capacity(m);
    for _ in 0..m {
        let c: f64 = rng.gen_range(0.1..=1.0);
        let mut p = SymMatrix::identity(n);
        p.scale(margin * c);
        packing.push(p);
        covering.push(DiagMatrix::new(vec![c; n])?);
    }
    let instance = MpcInstance::new(
        packing,
        covering,
        SymMatrix::identity(n),
        DiagMatrix::new(vec![1.0; n])?,
    )?;
    Ok(MarginInstance { instance, margin })
}

/// Objective-maximisation instance with diagonal packing matrices (entries
/// in [0.1, 2]), identity target and objective coefficients in [0.1, 1].
/// Small enough instances of this shape are solved exactly by
/// [`lp_oracle_small`].
pub fn diagonal_objective(n: usize, m: usize, seed: u64) -> Result<PositiveSdpInstance> {
    check_dims(n, m)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut packing = Vec::with_capacity(m);
    let mut objective = Vec::with_capacity(m);
    for _ in 0..m {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..=2.0)).collect();
        packing.push(SymMatrix::from_diag(&d)?);
        objective.push(rng.gen_range(0.1..=1.0));
    }
    PositiveSdpInstance::new(packing, SymMatrix::identity(n), objective)
}

/// Exact optimum of `max c . x` over `x >= 0`, `sum x_j P_j <= P` for
/// instances where every matrix is diagonal and at most three variables are
/// involved. The LP feasible region is a bounded polytope, so the optimum
/// sits on a vertex; all candidate vertices (choices of active constraints)
/// are enumerated and solved exactly. A grid sweep with `grid` points per
/// axis (capped so the total stays around four million points) cross-checks
/// the result from below.
pub fn lp_oracle_small(inst: &PositiveSdpInstance, grid: usize) -> Result<f64> {
    let m = inst.m();
    let n = inst.pack_rhs().n();
    if m > 3 {
        return Err(Error::UnsupportedOracle {
            what: format!("exhaustive oracle handles at most 3 variables, got {m}"),
        });
    }
    let off_tol = 1e-12;
    let diag_of = |a: &SymMatrix| -> Result<Vec<f64>> {
        let scale = a.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if i != j && a.get(i, j).abs() > off_tol * scale {
                    return Err(Error::UnsupportedOracle {
                        what: "exhaustive oracle requires diagonal matrices".into(),
                    });
                }
            }
        }
        Ok((0..n).map(|k| a.get(k, k)).collect())
    };
    let b: Vec<f64> = diag_of(inst.pack_rhs())?;
    let a: Vec<Vec<f64>> = inst.packing().iter().map(&diag_of).collect::<Result<_>>()?;

    // Columns forced to zero by a zero-capacity row, and columns that are
    // unconstrained (unbounded if they pay anything).
    let mut kept: Vec<usize> = Vec::new();
    for (j, col) in a.iter().enumerate() {
        let forced = (0..n).any(|k| b[k] <= 0.0 && col[k] > 0.0);
        if forced {
            continue;
        }
        let constrained = (0..n).any(|k| col[k] > 0.0);
        if !constrained {
            if inst.objective()[j] > 0.0 {
                return Err(Error::Unbounded);
            }
            continue;
        }
        kept.push(j);
    }
    let d = kept.len();
    if d == 0 {
        return Ok(0.0);
    }
    let cols: Vec<Vec<f64>> = kept.iter().map(|&j| a[j].clone()).collect();
    let obj: Vec<f64> = kept.iter().map(|&j| inst.objective()[j]).collect();

    // Candidate rows: the n capacity constraints (lhs . x = b) and the d
    // sign constraints (x_j = 0).
    let feas_tol = 1e-9;
    let mut best = 0.0f64;
    let row_count = n + d;
    let mut choice = vec![0usize; d];
    enumerate_subsets(row_count, d, &mut choice, 0, 0, &mut |subset| {
        let mut mat = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        for (r, &row) in subset.iter().enumerate() {
            if row < n {
                for (cidx, col) in cols.iter().enumerate() {
                    mat[r * d + cidx] = col[row];
                }
                rhs[r] = b[row];
            } else {
                mat[r * d + (row - n)] = 1.0;
                rhs[r] = 0.0;
            }
        }
        let x = match solve_dense(&mut mat, &mut rhs, d) {
            Some(x) => x,
            None => return,
        };
        if x.iter().any(|v| *v < -feas_tol) {
            return;
        }
        for k in 0..n {
            let lhs: f64 = cols.iter().zip(&x).map(|(col, xv)| col[k] * xv).sum();
            if lhs > b[k] + feas_tol * b[k].abs().max(1.0) {
                return;
            }
        }
        let value: f64 = obj.iter().zip(&x).map(|(c, xv)| c * xv).sum();
        if value > best {
            best = value;
        }
    });

    if grid > 0 {
        let per_axis = grid
            .min(GRID_POINT_CAP.powf(1.0 / d as f64) as usize)
            .max(1);
        let ub: Vec<f64> = (0..d)
            .map(|cidx| {
                (0..n)
                    .filter(|&k| cols[cidx][k] > 0.0)
                    .map(|k| b[k] / cols[cidx][k])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut idx = vec![0usize; d];
        let mut grid_best = 0.0f64;
        loop {
            let x: Vec<f64> = idx
                .iter()
                .zip(&ub)
                .map(|(&i, &u)| u * i as f64 / per_axis as f64)
                .collect();
            let feasible = (0..n).all(|k| {
                let lhs: f64 = cols.iter().zip(&x).map(|(col, xv)| col[k] * xv).sum();
                lhs <= b[k] + feas_tol * b[k].abs().max(1.0)
            });
            if feasible {
                let value: f64 = obj.iter().zip(&x).map(|(c, xv)| c * xv).sum();
                if value > grid_best {
                    grid_best = value;
                }
            }
            // Odometer increment over the d-dimensional grid.
            let mut axis = 0;
            loop {
                if axis == d {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] <= per_axis {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == d {
                break;
            }
        }
        // Grid points are feasible by construction, so they can never beat
        // the exact vertex optimum.
        debug_assert!(grid_best <= best + 1e-6 * best.abs().max(1.0));
    }

    Ok(best)
}

/// Calls `f` on every size-`k` subset of `0..n`, in lexicographic order.
fn enumerate_subsets(
    n: usize,
    k: usize,
    choice: &mut Vec<usize>,
    depth: usize,
    start: usize,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        f(choice);
        return;
    }
    for row in start..n {
        choice[depth] = row;
        enumerate_subsets(n, k, choice, depth + 1, row + 1, f);
    }
}

/// Gaussian elimination with partial pivoting; `None` on (near-)singular
/// systems. `mat` is d x d row-major, consumed along with `rhs`.
fn solve_dense(mat: &mut [f64], rhs: &mut [f64], d: usize) -> Option<Vec<f64>> {
    let scale = mat.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..d {
        let mut pivot = col;
        for row in col + 1..d {
            if mat[row * d + col].abs() > mat[pivot * d + col].abs() {
                pivot = row;
            }
        }
        if mat[pivot * d + col].abs() < 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for j in 0..d {
                mat.swap(col * d + j, pivot * d + j);
            }
            rhs.swap(col, pivot);
        }
        let inv = 1.0 / mat[col * d + col];
        for row in col + 1..d {
            let factor = mat[row * d + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for j in col..d {
                mat[row * d + j] -= factor * mat[col * d + j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = rhs[col];
        for j in col + 1..d {
            acc -= mat[col * d + j] * x[j];
        }
        x[col] = acc / mat[col * d + col];
    }
    Some(x)
}
