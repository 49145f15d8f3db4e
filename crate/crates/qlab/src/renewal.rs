//! Renewal function of a service law and renewal-type integral equations,
//! `M(t) = F(t) + ∫_0^t M(t-u) dF(u)`.
//!
//! The renewal function is computed once per (law, grid) pair and reused by
//! the diffusion module across Monte-Carlo replications.

use crate::dist::{Dist, Law};
use crate::grid::{conv_with_increments, grid_increments, GridError, Path, TimeGrid};

/// `M(t)` on a grid together with the law it was built from.
#[derive(Clone, Debug)]
pub struct RenewalFunction {
    values: Path,
    dist: Dist,
    increments: Vec<f64>,
}

impl RenewalFunction {
    pub fn path(&self) -> &Path {
        &self.values
    }

    pub fn grid(&self) -> TimeGrid {
        self.values.grid()
    }

    pub fn dist(&self) -> &Dist {
        &self.dist
    }

    /// Grid increments `ΔM_j = M(t_j) - M(t_{j-1})` (no mass at 0).
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
}

/// Solve the renewal equation by a causal forward recursion
/// (`ΔF_0 = 0` because `F(0) = 0`). Deterministic laws take the exact
/// step-function fast path `M(t) = ⌊t/c⌋`.
pub fn renewal_function(d: &Dist, grid: TimeGrid) -> Result<RenewalFunction, GridError> {
    let values = if let Law::Deterministic { point } = d.law() {
        Path::from_fn(grid, |t| (t / point + 1e-9).floor())
    } else {
        let inc = grid_increments(d, grid)?;
        if inc[0] != 0.0 {
            return Err(GridError::AtomAtZero);
        }
        let n = grid.len();
        let mut m = vec![0.0; n];
        let mut cdf = 0.0;
        for k in 0..n {
            cdf += inc[k];
            let mut acc = cdf;
            for j in 1..=k {
                acc += m[k - j] * inc[j];
            }
            m[k] = acc;
        }
        Path::new(grid, m).expect("same grid")
    };
    let mut increments = vec![0.0; grid.len()];
    for (j, inc) in increments.iter_mut().enumerate().skip(1) {
        *inc = values.values()[j] - values.values()[j - 1];
    }
    Ok(RenewalFunction {
        values,
        dist: d.clone(),
        increments,
    })
}

/// Solve `r(t) = H(t) + ∫_0^t r(t-u) dF(u)` via the renewal-function
/// representation `r = H + ∫ H(t-u) dM(u)`, then verify the original
/// equation as a residual self-check.
pub fn solve_renewal_type(h: &Path, m: &RenewalFunction) -> Result<Path, GridError> {
    if h.grid() != m.grid() {
        return Err(GridError::GridMismatch);
    }
    let r = h.add(&conv_with_increments(h, m.increments()))?;
    debug_assert!({
        let f_inc = grid_increments(&m.dist, h.grid())?;
        let back = h.add(&conv_with_increments(&r, &f_inc))?;
        back.sup_distance(&r) <= 10.0 * h.grid().step()
    });
    Ok(r)
}

/// `sup_k |F_e(t_k) + ∫_0^{t_k} F_e(t_k - s) dM(s) - t_k|`, the discretization
/// residual of the identity `F_e + F_e ∗ dM = t` (requires mean 1).
pub fn key_identity_residual(d: &Dist, grid: TimeGrid) -> Result<f64, GridError> {
    let m = renewal_function(d, grid)?;
    let fe = Path::from_fn(grid, |t| d.tail_integral(t));
    let lhs = fe.add(&conv_with_increments(&fe, m.increments()))?;
    let e = Path::identity(grid);
    Ok(lhs.sup_distance(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{dist_from_name, Dist};
    use rand::SeedableRng;

    #[test]
    fn poisson_renewal_function_is_identity() {
        let grid = TimeGrid::new(10.0, 1e-3).unwrap();
        let m = renewal_function(&Dist::exponential1(), grid).unwrap();
        let sup = m.path().sup_distance(&Path::identity(grid));
        assert!(sup <= 1e-2, "sup |M(t) - t| = {sup}");
    }

    #[test]
    fn deterministic_renewal_is_floor() {
        let grid = TimeGrid::new(10.0, 1e-2).unwrap();
        let m = renewal_function(&Dist::deterministic(1.0).unwrap(), grid).unwrap();
        for (k, v) in m.path().values().iter().enumerate() {
            let t = grid.point(k);
            assert_eq!(*v, (t + 1e-9).floor(), "t={t}");
        }
    }

    #[test]
    fn erlang_renewal_matches_monte_carlo_count() {
        // E[number of renewals by t=5] estimated by simulation
        let grid = TimeGrid::new(5.0, 1e-3).unwrap();
        let d = Dist::erlang1(2);
        let m = renewal_function(&d, grid).unwrap();
        let reps = 100_000;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut counts = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut t = 0.0;
            let mut n = 0u32;
            loop {
                t += d.sample(&mut rng);
                if t > 5.0 {
                    break;
                }
                n += 1;
            }
            counts.push(f64::from(n));
        }
        let est = crate::stats::mean(&counts);
        let sd = crate::stats::variance(&counts).sqrt() / (reps as f64).sqrt();
        let m5 = m.path().eval(5.0);
        assert!(
            (m5 - est).abs() <= 3.0 * sd + 1e-2,
            "M(5)={m5} MC={est} (3 sigma {})",
            3.0 * sd
        );
    }

    #[test]
    fn renewal_function_invariants() {
        for d in [Dist::exponential1(), Dist::erlang1(2)] {
            let grid = TimeGrid::new(50.0, 0.01).unwrap();
            let m = renewal_function(&d, grid).unwrap();
            let v = m.path().values();
            assert_eq!(v[0], 0.0);
            for k in 1..v.len() {
                assert!(v[k] + 1e-12 >= v[k - 1]);
                assert!(v[k] + 1e-9 >= d.cdf(grid.point(k)));
            }
            // elementary renewal behavior at T = 50
            assert!((v[v.len() - 1] / 50.0 - 1.0).abs() <= 0.05);
        }
        // deterministic fast path
        let grid = TimeGrid::new(50.0, 0.01).unwrap();
        let m = renewal_function(&Dist::deterministic(1.0).unwrap(), grid).unwrap();
        assert!((m.path().eval(50.0) / 50.0 - 1.0).abs() <= 0.05);
    }

    #[test]
    fn renewal_type_solution_examples() {
        let grid = TimeGrid::new(5.0, 1e-3).unwrap();
        let d = Dist::exponential1();
        let m = renewal_function(&d, grid).unwrap();
        // H = 0 -> r = 0
        let r = solve_renewal_type(&Path::zeros(grid), &m).unwrap();
        assert_eq!(r.sup_norm(), 0.0);
        // H = F_e, F = exp(1) -> r(t) = t
        let fe = Path::from_fn(grid, |t| d.tail_integral(t));
        let r = solve_renewal_type(&fe, &m).unwrap();
        assert!(r.sup_distance(&Path::identity(grid)) <= 10.0 * grid.step());
        // H = F -> r = M
        let f = Path::from_fn(grid, |t| d.cdf(t));
        let r = solve_renewal_type(&f, &m).unwrap();
        assert!(r.sup_distance(m.path()) <= 10.0 * grid.step());
    }

    #[test]
    fn key_identity_examples() {
        let grid = TimeGrid::new(10.0, 1e-3).unwrap();
        assert!(key_identity_residual(&Dist::exponential1(), grid).unwrap() <= 1e-2);
        // deterministic: F_e linear, M a step function, piecewise-exact
        assert!(
            key_identity_residual(&Dist::deterministic(1.0).unwrap(), grid).unwrap()
                <= 2.0 * grid.step()
        );
        // t = 0 row contributes no residual by construction
        let d = dist_from_name("h2").unwrap();
        let m = renewal_function(&d, grid).unwrap();
        let fe0 = d.tail_integral(0.0) + m.increments()[0];
        assert_eq!(fe0, 0.0);
    }

    #[test]
    fn key_identity_residual_halves_with_h() {
        let d = Dist::erlang1(2);
        let coarse =
            key_identity_residual(&d, TimeGrid::new(10.0, 2e-3).unwrap()).unwrap();
        let fine = key_identity_residual(&d, TimeGrid::new(10.0, 1e-3).unwrap()).unwrap();
        let ratio = coarse / fine;
        assert!((1.8..=2.2).contains(&ratio), "refinement ratio {ratio}");
    }
}
