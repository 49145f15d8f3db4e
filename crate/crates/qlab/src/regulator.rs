//! Fixed-point solvers for the regulator equation
//! `z(t) = x(t) + ∫_0^t (z(t-s) + a)^+ dB(s)`.
//!
//! Three interchangeable methods: a single causal forward sweep (the default,
//! exact on the grid), the point-mass recursion, and successive
//! approximations (an independent oracle with a geometric contraction bound).

use crate::dist::Dist;
use crate::grid::{conv_with_increments, grid_increments, GridError, Path, TimeGrid};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegulatorError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("point mass location must be positive, got {0}")]
    NonpositivePointMass(f64),
    #[error("successive approximations hit max_iter={max_iter} with residual {residual}")]
    MaxIterExceeded { max_iter: usize, residual: f64 },
}

/// The data of one regulator equation: free path, integrator law, shift.
#[derive(Clone, Debug)]
pub struct RegulatorProblem {
    pub free: Path,
    pub dist: Dist,
    /// `a` in `(z + a)^+`: -1 for the fluid equation, 0 for the diffusion.
    pub shift: f64,
}

/// Solution plus convergence bookkeeping.
#[derive(Clone, Debug)]
pub struct SolverReport {
    pub solution: Path,
    pub iterations: usize,
    /// Sup-norm of the last update (0 for the exact forward sweep).
    pub residual: f64,
}

pub const DEFAULT_TOL: f64 = 1e-9;

/// Forward sweep on the grid increments. Strictly causal because
/// `ΔB_0 = 0`, so `z(t_k)` only uses `z(t_j)`, `j < k`.
pub fn solve_forward(p: &RegulatorProblem) -> Result<SolverReport, RegulatorError> {
    let inc = grid_increments(&p.dist, p.free.grid())?;
    let x = p.free.values();
    let a = p.shift;
    let mut z = vec![0.0; x.len()];
    for k in 0..x.len() {
        let mut acc = x[k];
        for j in 1..=k {
            acc += (z[k - j] + a).max(0.0) * inc[j];
        }
        z[k] = acc;
    }
    Ok(SolverReport {
        solution: Path::new(p.free.grid(), z).expect("same grid"),
        iterations: 1,
        residual: 0.0,
    })
}

/// Point-mass recursion: `z(t) = x(t)` for `t < c` and
/// `z(t) = x(t) + (z(t-c) + a)^+` for `t >= c`.
pub fn solve_pointmass(x: &Path, c: f64, a: f64) -> Result<Path, RegulatorError> {
    if !(c > 0.0) {
        return Err(RegulatorError::NonpositivePointMass(c));
    }
    let grid = x.grid();
    let lag = grid.nearest_index(c);
    if lag == 0 {
        return Err(RegulatorError::NonpositivePointMass(c));
    }
    let xv = x.values();
    let mut z = vec![0.0; xv.len()];
    for k in 0..xv.len() {
        z[k] = if k < lag {
            xv[k]
        } else {
            xv[k] + (z[k - lag] + a).max(0.0)
        };
    }
    Ok(Path::new(grid, z).expect("same grid"))
}

/// Successive approximations from `u_0`, stopping when the sup-norm update
/// falls below `tol`.
pub fn solve_picard_from(
    p: &RegulatorProblem,
    u0: Path,
    tol: f64,
    max_iter: usize,
) -> Result<SolverReport, RegulatorError> {
    let inc = grid_increments(&p.dist, p.free.grid())?;
    let mut u = u0;
    let mut residual = f64::INFINITY;
    for n in 1..=max_iter {
        let shifted = u.map(|v| (v + p.shift).max(0.0));
        let next = p.free.add(&conv_with_increments(&shifted, &inc))?;
        residual = next.sup_distance(&u);
        u = next;
        if residual <= tol {
            return Ok(SolverReport {
                solution: u,
                iterations: n,
                residual,
            });
        }
    }
    Err(RegulatorError::MaxIterExceeded { max_iter, residual })
}

/// Successive approximations from `u_0 = 0` with the default iteration
/// budget `10 ceil(T / δ_B)`.
pub fn solve_picard(
    p: &RegulatorProblem,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<SolverReport, RegulatorError> {
    let grid = p.free.grid();
    let budget = max_iter.unwrap_or_else(|| default_max_iter(&p.dist, grid));
    solve_picard_from(p, Path::zeros(grid), tol, budget)
}

/// Largest grid multiple `δ` with `sup_y B(y+δ) - B(y) <= 1/2`, scanned at
/// grid resolution over `[0, T]`. Point masses give no such δ; fall back to
/// one grid step.
pub fn contraction_delta(d: &Dist, grid: TimeGrid) -> f64 {
    let cdf: Vec<f64> = grid.points().map(|t| d.cdf(t)).collect();
    let n = cdf.len();
    let mut best = 0usize;
    for lag in 1..n {
        let mut sup: f64 = cdf[lag]; // y = 0 window, B(0) = 0
        for y in 0..n - lag {
            sup = sup.max(cdf[y + lag] - cdf[y]);
        }
        if sup <= 0.5 {
            best = lag;
        } else {
            break;
        }
    }
    grid.step() * best.max(1) as f64
}

fn default_max_iter(d: &Dist, grid: TimeGrid) -> usize {
    let delta = contraction_delta(d, grid);
    let blocks = (grid.horizon() / delta).ceil() as usize;
    10 * blocks.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(horizon: f64, h: f64) -> TimeGrid {
        TimeGrid::new(horizon, h).unwrap()
    }

    fn sawtooth_free(g: TimeGrid) -> Path {
        // x(t) = 1{t<1} + min(t,1)
        Path::from_fn(g, |t| if t < 1.0 { 1.0 + t } else { 1.0 })
    }

    #[test]
    fn forward_zero_input() {
        let p = RegulatorProblem {
            free: Path::zeros(grid(5.0, 0.01)),
            dist: Dist::erlang1(2),
            shift: 0.0,
        };
        assert_eq!(solve_forward(&p).unwrap().solution.sup_norm(), 0.0);
    }

    #[test]
    fn forward_constant_one_fluid_det() {
        // x = 1, a = -1, B = det(1): (z - 1)^+ = 0 at every step, z = 1
        let p = RegulatorProblem {
            free: Path::constant(grid(5.0, 0.01), 1.0),
            dist: Dist::deterministic(1.0).unwrap(),
            shift: -1.0,
        };
        let z = solve_forward(&p).unwrap().solution;
        for v in z.values() {
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn forward_sawtooth() {
        let g = grid(5.0, 0.01);
        let p = RegulatorProblem {
            free: sawtooth_free(g),
            dist: Dist::deterministic(1.0).unwrap(),
            shift: -1.0,
        };
        let z = solve_forward(&p).unwrap().solution;
        for (k, v) in z.values().iter().enumerate() {
            let t = g.point(k);
            let expected = 1.0 + t - t.floor();
            // at integer grid points the cadlag value is exactly 1
            assert!((v - expected).abs() <= 1e-9, "t={t} z={v}");
        }
    }

    #[test]
    fn pointmass_examples() {
        let g = grid(3.0, 0.01);
        // x = 0 -> z = 0
        let z = solve_pointmass(&Path::zeros(g), 0.7, -0.5).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        // sawtooth
        let z = solve_pointmass(&sawtooth_free(g), 1.0, -1.0).unwrap();
        for (k, v) in z.values().iter().enumerate() {
            let t = g.point(k);
            assert!((v - (1.0 + t - t.floor())).abs() <= 1e-9);
        }
        // x(t) = t, c = 1, a = 0: unrolled three steps
        let z = solve_pointmass(&Path::identity(g), 1.0, 0.0).unwrap();
        for (k, v) in z.values().iter().enumerate() {
            let t = g.point(k);
            let expected = if t < 1.0 {
                t
            } else if t < 2.0 {
                t + (t - 1.0)
            } else {
                t + (t - 1.0) + (t - 2.0)
            };
            assert!((v - expected).abs() <= 1e-9, "t={t}");
        }
        assert!(solve_pointmass(&Path::zeros(g), 0.0, 0.0).is_err());
    }

    #[test]
    fn pointmass_agrees_with_forward() {
        let g = grid(4.0, 0.01);
        let x = Path::from_fn(g, |t| (3.0 * t).sin() + 0.5 * t);
        let d = Dist::deterministic(1.0).unwrap();
        let z1 = solve_pointmass(&x, 1.0, -1.0).unwrap();
        let p = RegulatorProblem {
            free: x,
            dist: d,
            shift: -1.0,
        };
        let z2 = solve_forward(&p).unwrap().solution;
        assert!(z1.sup_distance(&z2) <= 1e-9);
    }

    #[test]
    fn picard_equilibrium_fixed_point() {
        // x = 1, a = -1, B = exp(1), T = 5: z = 1, geometric residual decay
        let p = RegulatorProblem {
            free: Path::constant(grid(5.0, 0.01), 1.0),
            dist: Dist::exponential1(),
            shift: -1.0,
        };
        let rep = solve_picard(&p, 1e-8, None).unwrap();
        assert!((rep.solution.sup_norm() - 1.0).abs() <= 1e-7);
        assert!(rep.residual <= 1e-8);
    }

    #[test]
    fn picard_zero_one_iteration() {
        let p = RegulatorProblem {
            free: Path::zeros(grid(2.0, 0.01)),
            dist: Dist::exponential1(),
            shift: 0.0,
        };
        let rep = solve_picard(&p, 1e-12, None).unwrap();
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn picard_matches_forward_on_sawtooth() {
        let g = grid(5.0, 0.01);
        let p = RegulatorProblem {
            free: sawtooth_free(g),
            dist: Dist::deterministic(1.0).unwrap(),
            shift: -1.0,
        };
        let tol = 1e-9;
        let picard = solve_picard(&p, tol, Some(500)).unwrap();
        let forward = solve_forward(&p).unwrap();
        assert!(
            picard.solution.sup_distance(&forward.solution) <= tol.max(10.0 * g.step())
        );
    }

    #[test]
    fn uniqueness_two_initializations() {
        let g = grid(4.0, 0.01);
        let x = Path::from_fn(g, |t| (2.0 * t).cos());
        let p = RegulatorProblem {
            free: x.clone(),
            dist: Dist::erlang1(2),
            shift: 0.0,
        };
        let tol = 1e-10;
        let from_zero = solve_picard(&p, tol, Some(2000)).unwrap();
        let from_x = solve_picard_from(&p, x, tol, 2000).unwrap();
        assert!(from_zero.solution.sup_distance(&from_x.solution) <= 2.0 * tol);
    }

    #[test]
    fn geometric_error_bound_envelope() {
        // residuals of the Picard iterates stay below j^j n^j eps^n ||x||_T
        // for an exponential B, with eps from the contraction window
        let g = grid(2.0, 0.01);
        let d = Dist::exponential1();
        let delta = contraction_delta(&d, g);
        let eps = (0..g.len())
            .map(|y| {
                let t = g.point(y);
                d.cdf(t + delta) - d.cdf(t)
            })
            .fold(0.0f64, f64::max);
        assert!(eps <= 0.5);
        let x = Path::from_fn(g, |t| 1.0 + (4.0 * t).sin());
        let norm_x = x.sup_norm();
        let p = RegulatorProblem {
            free: x,
            dist: d,
            shift: 0.0,
        };
        let inc = grid_increments(&p.dist, g).unwrap();
        let j = (g.horizon() / delta).ceil();
        let mut u = Path::zeros(g);
        for n in 1..15usize {
            let shifted = u.map(|v| v.max(0.0));
            let next = p.free.add(&conv_with_increments(&shifted, &inc)).unwrap();
            // resid here is ||u_n - u_{n-1}||, bounded via m = n - 1
            let resid = next.sup_distance(&u);
            if n >= 2 {
                let m = (n - 1) as f64;
                let bound = j.powf(j) * m.powf(j) * eps.powf(m) * norm_x;
                assert!(resid <= bound, "n={n} resid={resid} bound={bound}");
            }
            u = next;
        }
    }

    fn random_path(g: TimeGrid, seed: u64, scale: f64) -> Path {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = 0.0;
        Path::new(
            g,
            (0..g.len())
                .map(|_| {
                    v += rng.random_range(-scale..scale);
                    v
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn lipschitz_pointmass_bound() {
        // ||phi(x1) - phi(x2)||_t <= k ||x1 - x2||_t for (k-1)c <= t < kc
        let g = grid(4.0, 0.01);
        let c = 1.0;
        for seed in 0..20u64 {
            let x1 = random_path(g, seed, 0.2);
            let x2 = random_path(g, 1000 + seed, 0.2);
            let z1 = solve_pointmass(&x1, c, 0.0).unwrap();
            let z2 = solve_pointmass(&x2, c, 0.0).unwrap();
            let mut sup_x: f64 = 0.0;
            let mut sup_z: f64 = 0.0;
            for k in 0..g.len() {
                let t = g.point(k);
                sup_x = sup_x.max((x1.values()[k] - x2.values()[k]).abs());
                sup_z = sup_z.max((z1.values()[k] - z2.values()[k]).abs());
                let kk = (t / c).floor() + 1.0;
                assert!(sup_z <= kk * sup_x + 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn lipschitz_nondegenerate_bound() {
        // ||phi(x1) - phi(x2)||_{k delta} <= (1 - eps)^{-k} ||x1 - x2||_{k delta}
        let g = grid(3.0, 0.01);
        let d = Dist::exponential1();
        let delta = contraction_delta(&d, g);
        let eps = 0.5;
        let lag = g.nearest_index(delta);
        for seed in 0..20u64 {
            let x1 = random_path(g, 2000 + seed, 0.3);
            let x2 = random_path(g, 3000 + seed, 0.3);
            let z1 = solve_forward(&RegulatorProblem {
                free: x1.clone(),
                dist: d.clone(),
                shift: 0.0,
            })
            .unwrap()
            .solution;
            let z2 = solve_forward(&RegulatorProblem {
                free: x2.clone(),
                dist: d.clone(),
                shift: 0.0,
            })
            .unwrap()
            .solution;
            let mut block = 1usize;
            while block * lag < g.len() {
                let end = block * lag;
                let sup_x = (0..=end)
                    .map(|k| (x1.values()[k] - x2.values()[k]).abs())
                    .fold(0.0f64, f64::max);
                let sup_z = (0..=end)
                    .map(|k| (z1.values()[k] - z2.values()[k]).abs())
                    .fold(0.0f64, f64::max);
                let bound = (1.0f64 - eps).powi(-(block as i32)) * sup_x;
                assert!(sup_z <= bound + 1e-12, "block {block}");
                block += 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn monotone_in_free_path(vals in proptest::collection::vec(-2.0f64..2.0, 101), bumps in proptest::collection::vec(0.0f64..1.0, 101)) {
            let g = TimeGrid::new(1.0, 0.01).unwrap();
            let x1 = Path::new(g, vals.clone()).unwrap();
            let x2 = Path::new(g, vals.iter().zip(&bumps).map(|(v, b)| v + b).collect()).unwrap();
            let d = Dist::erlang1(2);
            let z1 = solve_forward(&RegulatorProblem { free: x1, dist: d.clone(), shift: -1.0 }).unwrap().solution;
            let z2 = solve_forward(&RegulatorProblem { free: x2, dist: d, shift: -1.0 }).unwrap().solution;
            for (a, b) in z1.values().iter().zip(z2.values()) {
                prop_assert!(a <= &(b + 1e-12));
            }
        }
    }
}
