//! Second-order (diffusion) limit: Gaussian driver sampling, the two
//! equivalent limit representations (convolution fixed point and renewal
//! expansion), the virtual-wait limit, and the exponential-case reference
//! diffusion.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dist::{Dist, DistError};
use crate::grid::{
    conv_with_increments, grid_increments, tail_integral_by_parts, GridError, Path, TimeGrid,
};
use crate::regulator::{solve_forward, RegulatorError, RegulatorProblem};
use crate::renewal::RenewalFunction;
use crate::rng::{component, substream};

/// Square-root staffing: the traffic intensity at `n` servers is
/// `1 - beta/sqrt(n)` exactly, so `sqrt(n)(1 - rho) = beta` at every `n`.
#[derive(Clone, Copy, Debug)]
pub struct HwScaling {
    pub beta: f64,
}

impl HwScaling {
    pub fn rho(&self, n: u64) -> f64 {
        1.0 - self.beta / (n as f64).sqrt()
    }

    /// Arrival rate `n * rho(n)` of the n-server system.
    pub fn arrival_rate(&self, n: u64) -> f64 {
        n as f64 * self.rho(n)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Regulator(#[from] RegulatorError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("covariance not positive semidefinite after jitter {jitter:e}")]
    CovarianceNotPsd { jitter: f64 },
    #[error("virtual-wait residual {residual:e} exceeds bound {bound:e}")]
    WaitResidual { residual: f64, bound: f64 },
}

/// Law of the initial diffusion-scaled headcount.
#[derive(Clone, Debug)]
pub enum Q0Law {
    Point(f64),
    Gaussian { mean: f64, sd: f64 },
}

impl Q0Law {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Q0Law::Point(v) => *v,
            Q0Law::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
        }
    }
}

/// One Monte-Carlo draw of the limit inputs. All component paths live on one
/// grid; `zeta(0) = q0` by construction.
#[derive(Clone, Debug)]
pub struct DriverSample {
    pub q0: f64,
    /// Time-changed Brownian bridge, covariance
    /// `F_e(s) ∧ F_e(t) - F_e(s) F_e(t)`.
    pub bridge: Path,
    /// Arrival fluctuation, Brownian motion with variance `sigma2 * t`.
    pub xi: Path,
    /// `∫_0^t G(t-s) dξ(s)` by parts.
    pub m1: Path,
    /// Centered Gaussian with covariance `∫_0^{s∧t} G(s∨t-u) F(s∧t-u) du`.
    pub m2: Path,
    /// `q0 * (1 - F_e(t))`.
    pub h_term: Path,
    /// `q0⁺ * (G(t) - (1 - F_e(t)))`; vanishes as both tails do.
    pub m_q: Path,
    /// Infinite-server part `h_term + bridge + m1 + m2`.
    pub q_infinite: Path,
    /// Full driver `m_q + q_infinite`.
    pub zeta: Path,
}

/// Largest covariance matrix that is factorized densely; finer grids sample
/// the quadratic-variation terms on a coarser grid and interpolate (O(h)).
const COV_GRID_CAP: usize = 4096;

const JITTER_LADDER: [f64; 5] = [1e-14, 1e-13, 1e-12, 1e-11, 1e-10];

/// Cholesky factor of the second service-fluctuation term on a (possibly
/// coarsened) grid; `None` means the covariance is identically zero, as for
/// deterministic service.
struct M2Factor {
    coarse_step: f64,
    /// Lower factor over coarse indices 1..=dim (index 0 excluded: the
    /// process starts at 0 exactly).
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    dim: usize,
}

fn m2_covariance(service: &Dist, coarse_step: f64, npts: usize) -> DMatrix<f64> {
    // entries Γ(τ_i, τ_j) = ∫_0^{τ_m} G(τ_g + v) F(v) dv, m = i∧j, g = |i-j|,
    // accumulated one Simpson panel per coarse step along each diagonal;
    // integrand values sit on the half-step lattice, tabulated once
    let h2 = coarse_step;
    let half = h2 / 2.0;
    let max_i = 4 * (npts - 1);
    let gh: Vec<f64> = (0..=max_i).map(|i| service.tail(i as f64 * half)).collect();
    let fh: Vec<f64> = (0..=max_i).map(|i| service.cdf(i as f64 * half)).collect();
    let dim = npts - 1;
    let mut c = DMatrix::zeros(dim, dim);
    for g in 0..dim {
        let off = 2 * g;
        let mut acc = 0.0;
        for m in 1..npts - g {
            let a = 2 * (m - 1);
            acc += h2 / 6.0
                * (gh[off + a] * fh[a]
                    + 4.0 * gh[off + a + 1] * fh[a + 1]
                    + gh[off + a + 2] * fh[a + 2]);
            c[(m - 1, m - 1 + g)] = acc;
            c[(m - 1 + g, m - 1)] = acc;
        }
    }
    c
}

fn m2_factor_with_cap(
    service: &Dist,
    grid: TimeGrid,
    cap: usize,
) -> Result<M2Factor, DiffusionError> {
    let n = grid.len();
    let stride = (n - 1).div_ceil(cap - 1).max(1);
    let npts = (n - 1).div_ceil(stride) + 1;
    let coarse_step = stride as f64 * grid.step();
    let c = m2_covariance(service, coarse_step, npts);
    let dim = npts - 1;
    if c.diagonal().amax() < 1e-12 {
        return Ok(M2Factor {
            coarse_step,
            chol: None,
            dim,
        });
    }
    let mut jitter = 0.0;
    loop {
        let mut m = c.clone();
        for i in 0..dim {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(m) {
            return Ok(M2Factor {
                coarse_step,
                chol: Some(chol),
                dim,
            });
        }
        jitter = match JITTER_LADDER.iter().find(|j| **j > jitter) {
            Some(j) => *j,
            None => return Err(DiffusionError::CovarianceNotPsd { jitter }),
        };
    }
}

impl M2Factor {
    fn sample(&self, grid: TimeGrid, rng: &mut impl Rng) -> Path {
        let chol = match &self.chol {
            None => return Path::zeros(grid),
            Some(c) => c,
        };
        let z = nalgebra::DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal));
        let y = chol.l() * z;
        // prepend the exact zero at time 0, then interpolate to the grid
        let coarse = |j: usize| if j == 0 { 0.0 } else { y[j - 1] };
        Path::from_fn(grid, |t| {
            let x = t / self.coarse_step;
            let j = (x.floor() as usize).min(self.dim - 1);
            let frac = x - j as f64;
            coarse(j) * (1.0 - frac) + coarse(j + 1) * frac
        })
    }
}

/// Brownian bridge run through the clock `u(t)`: Gaussian, zero at `u = 0`,
/// pinned at `u = 1`, covariance `u(s) ∧ u(t) - u(s) u(t)`. `u` must be
/// nondecreasing with values in [0, 1].
pub fn sample_bridge(u: &Path, rng: &mut impl Rng) -> Path {
    let n = u.grid().len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let (a, b) = (u.values()[k - 1].clamp(0.0, 1.0), u.values()[k].clamp(0.0, 1.0));
        if b <= a {
            w[k] = w[k - 1];
        } else if b >= 1.0 - 1e-14 {
            w[k] = 0.0;
        } else {
            let shrink = (1.0 - b) / (1.0 - a);
            let z: f64 = rng.sample(StandardNormal);
            w[k] = w[k - 1] * shrink + ((b - a) * shrink).sqrt() * z;
        }
    }
    Path::new(u.grid(), w).expect("same grid")
}

/// Brownian motion with `Var X(t) = sigma2 * t`.
pub fn sample_xi(sigma2: f64, grid: TimeGrid, rng: &mut impl Rng) -> Path {
    let sd = (sigma2 * grid.step()).sqrt();
    let mut x = vec![0.0; grid.len()];
    for k in 1..grid.len() {
        let z: f64 = rng.sample(StandardNormal);
        x[k] = x[k - 1] + sd * z;
    }
    Path::new(grid, x).expect("same grid")
}

/// `∫_0^t G(t-s) dξ(s)` with `G` the service survival function.
pub fn compute_m1(xi: &Path, service: &Dist) -> Result<Path, GridError> {
    tail_integral_by_parts(xi, service)
}

/// Draws the Gaussian driver of the limit. The covariance factorization for
/// the service-fluctuation term is built once and shared across
/// replications.
pub struct GaussianDriverSampler {
    grid: TimeGrid,
    service: Dist,
    sigma2: f64,
    q0_law: Q0Law,
    /// Equilibrium CDF at grid points.
    fe: Vec<f64>,
    m2: M2Factor,
}

impl GaussianDriverSampler {
    pub fn new(
        service: &Dist,
        sigma2: f64,
        q0_law: Q0Law,
        grid: TimeGrid,
    ) -> Result<Self, DiffusionError> {
        let fe = (0..grid.len())
            .map(|k| service.equilibrium_cdf(grid.point(k)))
            .collect::<Result<Vec<_>, _>>()?;
        let m2 = m2_factor_with_cap(service, grid, COV_GRID_CAP)?;
        Ok(GaussianDriverSampler {
            grid,
            service: service.clone(),
            sigma2,
            q0_law,
            fe,
            m2,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn service(&self) -> &Dist {
        &self.service
    }

    /// Equilibrium CDF as a path on the sampler grid.
    pub fn fe_path(&self) -> Path {
        Path::new(self.grid, self.fe.clone()).expect("same grid")
    }

    pub fn sample_m2(&self, rng: &mut impl Rng) -> Path {
        self.m2.sample(self.grid, rng)
    }

    /// Form the deterministic terms and totals from sampled components.
    pub fn assemble(
        &self,
        q0: f64,
        bridge: Path,
        xi: Path,
        m2: Path,
    ) -> Result<DriverSample, GridError> {
        let m1 = compute_m1(&xi, &self.service)?;
        let h_term = Path::from_fn(self.grid, |t| {
            q0 * (1.0 - self.fe[self.grid.nearest_index(t)])
        });
        let q0p = q0.max(0.0);
        let m_q = Path::from_fn(self.grid, |t| {
            q0p * (self.service.tail(t) - (1.0 - self.fe[self.grid.nearest_index(t)]))
        });
        let q_infinite = h_term.add(&bridge)?.add(&m1)?.add(&m2)?;
        let zeta = m_q.add(&q_infinite)?;
        Ok(DriverSample {
            q0,
            bridge,
            xi,
            m1,
            m2,
            h_term,
            m_q,
            q_infinite,
            zeta,
        })
    }

    /// One replication, with independent substreams per component so any
    /// component can be regenerated in isolation.
    pub fn sample(&self, seed: u64, replication: u64) -> Result<DriverSample, GridError> {
        let q0 = self
            .q0_law
            .sample(&mut substream(seed, replication, component::INITIAL));
        let bridge = sample_bridge(
            &self.fe_path(),
            &mut substream(seed, replication, component::BRIDGE),
        );
        let xi = sample_xi(
            self.sigma2,
            self.grid,
            &mut substream(seed, replication, component::ARRIVALS),
        );
        let m2 = self.sample_m2(&mut substream(seed, replication, component::M2));
        self.assemble(q0, bridge, xi, m2)
    }
}

/// Fixed-point representation: regulator map with shift 0 applied to
/// `zeta - beta * F_e`.
pub fn solve_limit_convolution(
    zeta: &Path,
    service: &Dist,
    beta: f64,
) -> Result<Path, DiffusionError> {
    let grid = zeta.grid();
    let free = Path::from_fn(grid, |t| {
        zeta.values()[grid.nearest_index(t)]
            - beta * service.equilibrium_cdf(t).unwrap_or(f64::NAN)
    });
    let report = solve_forward(&RegulatorProblem {
        free,
        dist: service.clone(),
        shift: 0.0,
    })?;
    Ok(report.solution)
}

/// Renewal-expansion representation,
/// `z = zeta + zeta∗dM - beta*t + (-z)⁺∗dM`, as a causal sweep (dM has no
/// mass at 0). The drift term uses the grid value of
/// `F_e + F_e∗dM` in place of `t` — the two are equal in the limit, and the
/// substitution makes the discrete recursion agree with the convolution
/// representation to truncation order rather than O(h).
pub fn solve_limit_renewal(
    zeta: &Path,
    beta: f64,
    m: &RenewalFunction,
) -> Result<Path, GridError> {
    if zeta.grid() != m.grid() {
        return Err(GridError::GridMismatch);
    }
    let grid = zeta.grid();
    let fe = Path::from_fn(grid, |t| m.dist().tail_integral(t));
    let kappa = fe.add(&conv_with_increments(&fe, m.increments()))?;
    let base = zeta.add(&conv_with_increments(zeta, m.increments()))?;
    let inc = m.increments();
    let n = grid.len();
    let mut z: Vec<f64> = vec![0.0; n];
    for k in 0..n {
        let mut acc = base.values()[k] - beta * kappa.values()[k];
        for j in 1..=k {
            acc += (-z[k - j]).max(0.0) * inc[j];
        }
        z[k] = acc;
    }
    Path::new(grid, z).map_err(|_| GridError::GridMismatch)
}

/// Both representations plus the virtual-wait limit.
#[derive(Clone, Debug)]
pub struct LimitPaths {
    pub q_conv: Path,
    pub q_renewal: Path,
    pub wait: Path,
    /// `‖q_conv - q_renewal‖`.
    pub gap: f64,
}

pub fn limit_paths(
    d: &DriverSample,
    beta: f64,
    m: &RenewalFunction,
) -> Result<LimitPaths, DiffusionError> {
    let q_conv = solve_limit_convolution(&d.zeta, m.dist(), beta)?;
    let q_renewal = solve_limit_renewal(&d.zeta, beta, m)?;
    let wait = virtual_wait_limit(&q_conv, &d.zeta, m.dist(), beta)?;
    let gap = q_conv.sup_distance(&q_renewal);
    Ok(LimitPaths {
        q_conv,
        q_renewal,
        wait,
        gap,
    })
}

/// Virtual-wait limit `V = Q⁺`, checked against its own fixed-point
/// characterization `V = (zeta - beta*F_e + V∗dF)⁺`.
pub fn virtual_wait_limit(
    q: &Path,
    zeta: &Path,
    service: &Dist,
    beta: f64,
) -> Result<Path, DiffusionError> {
    let grid = q.grid();
    let v = q.positive_part();
    let inc = grid_increments(service, grid)?;
    let conv = conv_with_increments(&v, &inc);
    let mut residual = 0.0f64;
    for k in 0..grid.len() {
        let t = grid.point(k);
        let rhs = (zeta.values()[k] - beta * service.equilibrium_cdf(t)? + conv.values()[k])
            .max(0.0);
        residual = residual.max((v.values()[k] - rhs).abs());
    }
    let bound = 10.0 * grid.step();
    if residual > bound {
        return Err(DiffusionError::WaitResidual { residual, bound });
    }
    Ok(v)
}

/// Piecewise drift of the exponential-case limit: `-beta` above 0,
/// `-x - beta` below.
pub fn hw_drift(x: f64, beta: f64) -> f64 {
    if x >= 0.0 {
        -beta
    } else {
        -x - beta
    }
}

/// Euler scheme for `dX = hw_drift(X) dt + diff_coeff dW` with externally
/// supplied standard-normal step noise (one value per grid step).
pub fn euler_maruyama_with(
    x0: f64,
    beta: f64,
    diff_coeff: f64,
    grid: TimeGrid,
    noise: &[f64],
) -> Path {
    let h = grid.step();
    let mut x = vec![0.0; grid.len()];
    x[0] = x0;
    for k in 1..grid.len() {
        x[k] = x[k - 1] + hw_drift(x[k - 1], beta) * h + diff_coeff * h.sqrt() * noise[k - 1];
    }
    Path::new(grid, x).expect("same grid")
}

/// Reference one-dimensional diffusion for exponential service:
/// drift `hw_drift`, infinitesimal variance `1 + sigma2`.
pub fn hw_reference_diffusion(
    beta: f64,
    sigma2: f64,
    x0: f64,
    grid: TimeGrid,
    rng: &mut impl Rng,
) -> Path {
    let noise: Vec<f64> = (1..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    euler_maruyama_with(x0, beta, (1.0 + sigma2).sqrt(), grid, &noise)
}

/// `B(t) = zeta(t) + ∫_0^t zeta(s) ds`; for exponential service this should
/// be a Brownian motion with variance `1 + sigma2` per unit time.
pub fn b_process(zeta: &Path) -> Path {
    zeta.add(&zeta.cumulative_integral()).expect("same grid")
}

#[derive(Clone, Debug)]
pub struct BProcessReport {
    pub var_b1: f64,
    pub cov_b1_b2: f64,
    /// Target infinitesimal variance `1 + sigma2`.
    pub base: f64,
    /// Max relative deviation of `Cov(B(s), B(t))` from `base * (s ∧ t)`
    /// over the integer lattice.
    pub max_rel_dev: f64,
}

/// Monte-Carlo covariance diagnostics of the B-process for exponential
/// service started empty (the initial law the identity is checked under).
pub fn b_process_covariance_check(
    sigma2: f64,
    samples: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<BProcessReport, DiffusionError> {
    let sampler =
        GaussianDriverSampler::new(&Dist::exponential1(), sigma2, Q0Law::Point(0.0), grid)?;
    let lattice: Vec<f64> = (1..=grid.horizon().floor() as usize)
        .map(|k| k as f64)
        .collect();
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); lattice.len()];
    for rep in 0..samples {
        let d = sampler.sample(seed, rep as u64)?;
        let b = b_process(&d.zeta);
        for (i, t) in lattice.iter().enumerate() {
            draws[i].push(b.eval(*t));
        }
    }
    let base = 1.0 + sigma2;
    let mut max_rel_dev = 0.0f64;
    for i in 0..lattice.len() {
        for j in i..lattice.len() {
            let c = crate::stats::covariance(&draws[i], &draws[j]);
            let target = base * lattice[i].min(lattice[j]);
            max_rel_dev = max_rel_dev.max((c - target).abs() / target);
        }
    }
    Ok(BProcessReport {
        var_b1: crate::stats::variance(&draws[0]),
        cov_b1_b2: if lattice.len() > 1 {
            crate::stats::covariance(&draws[0], &draws[1])
        } else {
            f64::NAN
        },
        base,
        max_rel_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renewal::renewal_function;
    use crate::stats::{correlation, mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn scaling_exact() {
        let s = HwScaling { beta: 1.0 };
        for n in [25u64, 100, 400] {
            assert!(((n as f64).sqrt() * (1.0 - s.rho(n)) - 1.0).abs() <= 1e-12);
            assert!(s.rho(n) > 0.0);
        }
        assert_eq!(s.arrival_rate(100), 90.0);
    }

    #[test]
    fn bridge_variance_and_pinning() {
        let grid = TimeGrid::new(8.0, 0.01).unwrap();
        let d = Dist::exponential1();
        let u = Path::from_fn(grid, |t| d.equilibrium_cdf(t).unwrap());
        let t_half = (2.0f64).ln(); // F_e = 0.5 here
        let mut r = rng(7);
        let mut at_half = Vec::new();
        let mut at_end = Vec::new();
        for _ in 0..5000 {
            let w = sample_bridge(&u, &mut r);
            at_half.push(w.eval(t_half));
            at_end.push(w.eval(8.0)); // F_e(8) ≈ 0.99966
        }
        let v = variance(&at_half);
        assert!((v - 0.25).abs() <= 0.02, "var at u=0.5: {v}");
        assert!(variance(&at_end) <= 2e-3, "pinned-end variance");
        assert!(mean(&at_half).abs() <= 0.03);
    }

    #[test]
    fn xi_variance_and_independent_increments() {
        let grid = TimeGrid::new(2.0, 0.01).unwrap();
        assert_eq!(sample_xi(0.0, grid, &mut rng(1)).sup_norm(), 0.0);
        let mut r = rng(2);
        let (mut end, mut first, mut inc) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..5000 {
            let x = sample_xi(1.0, grid, &mut r);
            end.push(x.eval(2.0));
            first.push(x.eval(1.0));
            inc.push(x.eval(2.0) - x.eval(1.0));
        }
        assert!((variance(&end) - 2.0).abs() <= 0.15);
        assert!(correlation(&first, &inc).abs() <= 0.05);
    }

    #[test]
    fn m1_examples() {
        let grid = TimeGrid::new(3.0, 1e-3).unwrap();
        let d = Dist::exponential1();
        let zero = compute_m1(&Path::zeros(grid), &d).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        let ramp = compute_m1(&Path::identity(grid), &d).unwrap();
        let target = Path::from_fn(grid, |t| 1.0 - (-t).exp());
        assert!(ramp.sup_distance(&target) <= 10.0 * grid.step());
    }

    #[test]
    fn m1_ito_isometry() {
        // Var M1(1) = sigma2 * ∫_0^1 G(u)^2 du = (1 - e^{-2})/2 for exp(1)
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let d = Dist::exponential1();
        let mut r = rng(3);
        let mut vals = Vec::new();
        for _ in 0..5000 {
            let xi = sample_xi(1.0, grid, &mut r);
            vals.push(compute_m1(&xi, &d).unwrap().eval(1.0));
        }
        let target = (1.0 - (-2.0f64).exp()) / 2.0;
        let v = variance(&vals);
        assert!((v / target - 1.0).abs() <= 0.10, "var {v} vs {target}");
    }

    #[test]
    fn m2_covariance_value_and_variance() {
        let grid = TimeGrid::new(2.0, 0.01).unwrap();
        let d = Dist::exponential1();
        let f = m2_factor_with_cap(&d, grid, COV_GRID_CAP).unwrap();
        // Γ(1,1) = ∫_0^1 e^{-(1-u)}(1 - e^{-(1-u)}) du
        let target = (1.0 - (-1.0f64).exp()) - (1.0 - (-2.0f64).exp()) / 2.0;
        let k = grid.nearest_index(1.0);
        let chol = f.chol.as_ref().unwrap();
        let c11 = (chol.l() * chol.l().transpose())[(k - 1, k - 1)];
        assert!((c11 - target).abs() <= 1e-6, "Γ(1,1) = {c11} vs {target}");
        let mut r = rng(4);
        let vals: Vec<f64> = (0..5000).map(|_| f.sample(grid, &mut r).eval(1.0)).collect();
        assert!((variance(&vals) / target - 1.0).abs() <= 0.10);
        // zero at the time origin, every draw
        assert_eq!(f.sample(grid, &mut r).values()[0], 0.0);
    }

    #[test]
    fn m2_deterministic_service_is_zero() {
        let grid = TimeGrid::new(3.0, 0.01).unwrap();
        let d = Dist::deterministic(1.0).unwrap();
        let f = m2_factor_with_cap(&d, grid, COV_GRID_CAP).unwrap();
        assert!(f.chol.is_none());
        assert_eq!(f.sample(grid, &mut rng(5)).sup_norm(), 0.0);
    }

    #[test]
    fn m2_grid_cap_interpolation() {
        // force coarsening and compare the variance at t = 1 to the full one
        let grid = TimeGrid::new(2.0, 0.01).unwrap();
        let d = Dist::exponential1();
        let f = m2_factor_with_cap(&d, grid, 64).unwrap();
        let mut r = rng(6);
        let vals: Vec<f64> = (0..5000).map(|_| f.sample(grid, &mut r).eval(1.0)).collect();
        let target = (1.0 - (-1.0f64).exp()) - (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((variance(&vals) / target - 1.0).abs() <= 0.15);
    }

    #[test]
    fn assemble_zero_noise_and_pinning() {
        let grid = TimeGrid::new(10.0, 0.01).unwrap();
        let d = Dist::exponential1();
        let s = GaussianDriverSampler::new(&d, 1.0, Q0Law::Point(0.0), grid).unwrap();
        for q in [1.5, -0.7, 0.0] {
            let ds = s
                .assemble(q, Path::zeros(grid), Path::zeros(grid), Path::zeros(grid))
                .unwrap();
            let want = Path::from_fn(grid, |t| {
                let fbar = 1.0 - d.equilibrium_cdf(t).unwrap();
                q * fbar + q.max(0.0) * (d.tail(t) - fbar)
            });
            assert!(ds.zeta.sup_distance(&want) <= 1e-12);
            if q == 0.0 {
                assert_eq!(ds.zeta.sup_norm(), 0.0);
            }
            // m_q decays once both tails are below 1e-3 (t >= 8 here)
            let cut = grid.nearest_index(8.0);
            let late = ds.m_q.values()[cut..]
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(late <= 2e-3 * q.max(0.0) + 1e-15);
        }
        for rep in 0..100 {
            let s2 =
                GaussianDriverSampler::new(&d, 1.0, Q0Law::Gaussian { mean: 0.3, sd: 1.0 }, grid)
                    .unwrap();
            let ds = s2.sample(11, rep).unwrap();
            assert!((ds.zeta.values()[0] - ds.q0).abs() <= 1e-12);
            assert_eq!(ds.bridge.values()[0], 0.0);
            assert_eq!(ds.m1.values()[0], 0.0);
            assert_eq!(ds.m2.values()[0], 0.0);
        }
    }

    #[test]
    fn convolution_solver_examples() {
        let grid = TimeGrid::new(3.0, 1e-3).unwrap();
        let d = Dist::exponential1();
        let z = solve_limit_convolution(&Path::zeros(grid), &d, 0.0).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        let c = 0.8;
        let z = solve_limit_convolution(&Path::constant(grid, c), &d, 0.0).unwrap();
        let want = Path::from_fn(grid, |t| c * (1.0 + t));
        assert!(z.sup_distance(&want) <= 10.0 * grid.step());
        let beta = 0.7;
        let z = solve_limit_convolution(&Path::zeros(grid), &d, beta).unwrap();
        let want = Path::from_fn(grid, |t| -beta * d.equilibrium_cdf(t).unwrap());
        assert!(z.sup_distance(&want) <= 10.0 * grid.step());
        assert!(z.values().iter().all(|v| *v <= 1e-12));
    }

    #[test]
    fn renewal_solver_examples() {
        let grid = TimeGrid::new(3.0, 1e-3).unwrap();
        let d = Dist::exponential1();
        let m = renewal_function(&d, grid).unwrap();
        let z = solve_limit_renewal(&Path::zeros(grid), 0.0, &m).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        let c = 0.8;
        let z = solve_limit_renewal(&Path::constant(grid, c), 0.0, &m).unwrap();
        let want = Path::from_fn(grid, |t| c * (1.0 + t));
        assert!(z.sup_distance(&want) <= 10.0 * grid.step());
    }

    #[test]
    fn representations_agree_on_sampled_drivers() {
        let grid = TimeGrid::new(5.0, 1e-2).unwrap();
        for d in [Dist::exponential1(), Dist::erlang1(2)] {
            let m = renewal_function(&d, grid).unwrap();
            let s = GaussianDriverSampler::new(&d, 1.0, Q0Law::Point(0.0), grid).unwrap();
            for rep in 0..3 {
                let ds = s.sample(99, rep).unwrap();
                let lp = limit_paths(&ds, 1.0, &m).unwrap();
                assert!(lp.gap <= 5e-3, "gap {} for {:?}", lp.gap, d.law());
                // the positive-part correction integral stays nonnegative
                let adj = lp
                    .q_conv
                    .sub(&Path::from_fn(grid, |t| {
                        ds.zeta.values()[grid.nearest_index(t)]
                            - 1.0 * d.equilibrium_cdf(t).unwrap()
                    }))
                    .unwrap();
                assert!(adj.values().iter().all(|v| *v >= -1e-12));
            }
        }
    }

    #[test]
    fn virtual_wait_examples() {
        let grid = TimeGrid::new(3.0, 1e-3).unwrap();
        let d = Dist::exponential1();
        // negative solution -> zero wait
        let beta = 0.7;
        let z = solve_limit_convolution(&Path::zeros(grid), &d, beta).unwrap();
        let v = virtual_wait_limit(&z, &Path::zeros(grid), &d, beta).unwrap();
        assert_eq!(v.sup_norm(), 0.0);
        // positive constant driver
        let c = 0.8;
        let zeta = Path::constant(grid, c);
        let z = solve_limit_convolution(&zeta, &d, 0.0).unwrap();
        let v = virtual_wait_limit(&z, &zeta, &d, 0.0).unwrap();
        let want = Path::from_fn(grid, |t| c * (1.0 + t));
        assert!(v.sup_distance(&want) <= 10.0 * grid.step());
    }

    #[test]
    fn virtual_wait_residual_on_random_drivers() {
        let grid = TimeGrid::new(4.0, 1e-2).unwrap();
        let d = Dist::erlang1(2);
        let s = GaussianDriverSampler::new(&d, 1.0, Q0Law::Gaussian { mean: 0.0, sd: 1.0 }, grid)
            .unwrap();
        for rep in 0..100 {
            let ds = s.sample(123, rep).unwrap();
            let z = solve_limit_convolution(&ds.zeta, &d, 0.5).unwrap();
            virtual_wait_limit(&z, &ds.zeta, &d, 0.5).unwrap();
        }
    }

    #[test]
    fn reference_diffusion_drift() {
        assert_eq!(hw_drift(0.5, 0.3), -0.3);
        assert_eq!(hw_drift(-0.5, 0.3), 0.5 - 0.3);
        let grid = TimeGrid::new(2.0, 1e-3).unwrap();
        let zeros = vec![0.0; grid.len() - 1];
        // below zero, beta = 0: pure ODE x' = -x
        let x = euler_maruyama_with(-1.0, 0.0, (2.0f64).sqrt(), grid, &zeros);
        let want = Path::from_fn(grid, |t| -(-t).exp());
        assert!(x.sup_distance(&want) <= 10.0 * grid.step());
        // above zero: straight line of slope -beta until it hits 0
        let x = euler_maruyama_with(1.0, 0.5, (2.0f64).sqrt(), grid, &zeros);
        for k in 0..grid.len() {
            let t = grid.point(k);
            if t <= 1.9 {
                assert!((x.values()[k] - (1.0 - 0.5 * t)).abs() <= 10.0 * grid.step());
            }
        }
    }

    #[test]
    fn b_process_basics() {
        let grid = TimeGrid::new(2.0, 0.02).unwrap();
        let r = b_process_covariance_check(1.0, 1500, grid, 17).unwrap();
        assert!((r.var_b1 / r.base - 1.0).abs() <= 0.2, "var {}", r.var_b1);
        assert!((r.cov_b1_b2 / r.base - 1.0).abs() <= 0.2);
        // B(0) = 0 when started empty
        let s =
            GaussianDriverSampler::new(&Dist::exponential1(), 1.0, Q0Law::Point(0.0), grid)
                .unwrap();
        let b = b_process(&s.sample(1, 0).unwrap().zeta);
        assert_eq!(b.values()[0], 0.0);
    }
}
