//! First-order (fluid) limit of the scaled queue length: build the free path
//! from the initial condition and arrival function and apply the regulator
//! map with shift -1.

use crate::dist::Dist;
use crate::grid::{tail_integral_by_parts, Path, TimeGrid};
use crate::regulator::{solve_forward, RegulatorError, RegulatorProblem};

/// Limiting fluid arrival function. `Identity` is the usual rate-1 case and
/// is evaluated in closed form (the infinite-server term is then exactly the
/// equilibrium CDF); any nondecreasing path is accepted otherwise.
#[derive(Clone, Debug)]
pub enum FluidArrival {
    Identity,
    Custom(Path),
}

/// The data of the fluid equation.
#[derive(Clone, Debug)]
pub struct FluidProblem {
    /// Limiting scaled number of customers at time 0-.
    pub q0: f64,
    /// Residual service law of the initial customers in service.
    pub initial: Dist,
    /// Service law (mean 1).
    pub service: Dist,
    pub arrival: FluidArrival,
}

/// Fluid solution with its four constituent terms; they sum to `total`
/// exactly on the grid.
#[derive(Clone, Debug)]
pub struct FluidSolution {
    pub total: Path,
    /// Customers in service at 0- still present.
    pub initial_service: Path,
    /// Customers waiting at 0- whose service started after 0.
    pub initial_queue: Path,
    /// Infinite-server contribution of post-0 arrivals.
    pub infinite_server: Path,
    /// Waiting-time adjustment (the fixed-point integral term).
    pub adjustment: Path,
}

impl FluidProblem {
    /// Mean-1 service with equilibrium initial residuals and identity
    /// arrivals, started at fluid level `q0`.
    pub fn equilibrium(service: &Dist, q0: f64) -> Result<FluidProblem, crate::dist::DistError> {
        Ok(FluidProblem {
            q0,
            initial: service.equilibrium()?,
            service: service.clone(),
            arrival: FluidArrival::Identity,
        })
    }
}

/// Solve the fluid equation on the grid. The free path is
/// `min(q0,1) F̄0(t) + (q0-1)^+ G(t) + ∫_0^t G(t-s) dĀ(s)`, and the solution
/// is the regulator fixed point with shift -1.
pub fn fluid_limit(p: &FluidProblem, grid: TimeGrid) -> Result<FluidSolution, RegulatorError> {
    let in_service = p.q0.min(1.0);
    let in_queue = (p.q0 - 1.0).max(0.0);
    let initial_service = Path::from_fn(grid, |t| in_service * (1.0 - p.initial.cdf(t)));
    let initial_queue = Path::from_fn(grid, |t| in_queue * p.service.tail(t));
    let infinite_server = match &p.arrival {
        // ∫_0^t G(t-s) ds = ∫_0^t G(u) du, exact per variant
        FluidArrival::Identity => Path::from_fn(grid, |t| p.service.tail_integral(t)),
        FluidArrival::Custom(a) => tail_integral_by_parts(a, &p.service)?,
    };
    let free = initial_service
        .add(&initial_queue)?
        .add(&infinite_server)?;
    let report = solve_forward(&RegulatorProblem {
        free: free.clone(),
        dist: p.service.clone(),
        shift: -1.0,
    })?;
    let total = report.solution;
    let adjustment = total.sub(&free)?;
    Ok(FluidSolution {
        total,
        initial_service,
        initial_queue,
        infinite_server,
        adjustment,
    })
}

/// `‖Q̄ - 1‖_T` for the equilibrium start (q0 = 1, F0 = F_e, identity
/// arrivals); the unique solution is constant 1.
pub fn equilibrium_check(service: &Dist, grid: TimeGrid) -> Result<f64, RegulatorError> {
    let p = FluidProblem::equilibrium(service, 1.0)
        .map_err(|_| RegulatorError::NonpositivePointMass(f64::NAN))?;
    let sol = fluid_limit(&p, grid)?;
    Ok(sol.total.sup_distance(&Path::constant(grid, 1.0)))
}
