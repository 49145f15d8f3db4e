//! Acceptance checks: every numbered criterion of the project gate, grouped
//! into suites. Each check carries the measured value and its bound so
//! reports show margins, not just booleans.

use crate::diffusion::{
    b_process_covariance_check, hw_reference_diffusion, limit_paths, solve_limit_convolution,
    virtual_wait_limit, DiffusionError, GaussianDriverSampler, Q0Law,
};
use crate::dist::{dist_from_name, Dist};
use crate::fluid::{equilibrium_check, fluid_limit, FluidArrival, FluidProblem};
use crate::grid::{adaptive_simpson, Path, TimeGrid};
use crate::regulator::{
    contraction_delta, solve_forward, solve_picard, solve_picard_from, solve_pointmass,
    RegulatorProblem,
};
use crate::renewal::{key_identity_residual, renewal_function};
use crate::sim::{convergence_experiment, scale_paths, simulate, verify_prop21, SimConfig};
use crate::stats;
use rand::{Rng, SeedableRng};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, bound: f64) -> Check {
        Check {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }
}

/// One numbered acceptance criterion with its component checks.
#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Monte-Carlo sizes divided by 10, bounds doubled.
    pub fast: bool,
    pub seed: u64,
}

impl VerifyOptions {
    fn mc(&self, n: usize) -> usize {
        if self.fast {
            (n / 10).max(2)
        } else {
            n
        }
    }

    fn widen(&self, b: f64) -> f64 {
        if self.fast {
            2.0 * b
        } else {
            b
        }
    }
}

pub const SUITES: [&str; 6] = ["regulator", "renewal", "fluid", "diffusion", "simulate", "all"];

/// Run a named suite. Criterion ids refer to the project acceptance list.
pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<Criterion>, String> {
    let ids: Vec<usize> = match name {
        "regulator" => vec![6],
        "renewal" => vec![3, 4],
        "fluid" => vec![1, 2],
        "diffusion" => vec![5, 10, 11],
        "simulate" => vec![7, 8, 9, 12],
        "all" => (1..=12).collect(),
        other => return Err(format!("unknown suite '{other}'")),
    };
    ids.iter().map(|id| run_criterion(*id, opts)).collect()
}

pub fn run_criterion(id: usize, opts: &VerifyOptions) -> Result<Criterion, String> {
    let e = |e: &dyn std::fmt::Display| e.to_string();
    match id {
        1 => criterion_sawtooth(opts).map_err(|x| e(&x)),
        2 => criterion_equilibrium_fluid(opts).map_err(|x| e(&x)),
        3 => criterion_renewal_function(opts).map_err(|x| e(&x)),
        4 => criterion_key_identity(opts).map_err(|x| e(&x)),
        5 => criterion_representation_equivalence(opts).map_err(|x| e(&x)),
        6 => criterion_regulator_properties(opts).map_err(|x| e(&x)),
        7 => criterion_departure_balance(opts).map_err(|x| e(&x)),
        8 => criterion_fluid_convergence(opts).map_err(|x| e(&x)),
        9 => criterion_diffusion_marginal(opts).map_err(|x| e(&x)),
        10 => criterion_exponential_reduction(opts).map_err(|x| e(&x)),
        11 => criterion_driver_statistics(opts).map_err(|x| e(&x)),
        12 => criterion_virtual_wait(opts).map_err(|x| e(&x)),
        _ => Err(format!("no criterion {id}")),
    }
}

fn criterion_sawtooth(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(5.0, 0.01).map_err(|e| e.to_string())?;
    let det = Dist::deterministic(1.0).map_err(|e| e.to_string())?;
    let sol = fluid_limit(
        &FluidProblem {
            q0: 1.0,
            initial: det.clone(),
            service: det,
            arrival: FluidArrival::Identity,
        },
        grid,
    )
    .map_err(|e| e.to_string())?;
    let h = grid.step();
    let mut worst = 0.0f64;
    for (k, v) in sol.total.values().iter().enumerate() {
        let t = grid.point(k);
        let frac = (t - t.round()).abs();
        if frac >= h - 1e-12 {
            worst = worst.max((v - (1.0 + t - t.floor())).abs());
        }
    }
    Ok(Criterion {
        id: 1,
        title: "sawtooth fluid path for unit deterministic service",
        checks: vec![Check::le(
            "sup error off the jump points",
            worst,
            opts.widen(2.0 * h),
        )],
    })
}

fn criterion_equilibrium_fluid(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(10.0, 1e-3).map_err(|e| e.to_string())?;
    let mut checks = Vec::new();
    for name in ["exp1", "erlang2", "det1"] {
        let d = dist_from_name(name).map_err(|e| e.to_string())?;
        let dev = equilibrium_check(&d, grid).map_err(|e| e.to_string())?;
        checks.push(Check::le(
            format!("sup |fluid - 1| for {name}"),
            dev,
            opts.widen(1e-4),
        ));
    }
    Ok(Criterion {
        id: 2,
        title: "equilibrium start keeps the fluid path at 1",
        checks,
    })
}

fn criterion_renewal_function(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(10.0, 1e-3).map_err(|e| e.to_string())?;
    let m = renewal_function(&Dist::exponential1(), grid).map_err(|e| e.to_string())?;
    let exp_dev = m.path().sup_distance(&Path::identity(grid));
    let det = Dist::deterministic(1.0).map_err(|e| e.to_string())?;
    let md = renewal_function(&det, grid).map_err(|e| e.to_string())?;
    let det_dev = (0..grid.len())
        .map(|k| (md.path().values()[k] - (grid.point(k) + 1e-9).floor()).abs())
        .fold(0.0f64, f64::max);
    Ok(Criterion {
        id: 3,
        title: "renewal function: Poisson identity and deterministic staircase",
        checks: vec![
            Check::le("sup |M(t) - t|, exponential", exp_dev, opts.widen(1e-2)),
            Check::le("staircase exactness, deterministic", det_dev, opts.widen(1e-12)),
        ],
    })
}

fn criterion_key_identity(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(10.0, 1e-3).map_err(|e| e.to_string())?;
    let mut checks = Vec::new();
    for name in ["exp1", "erlang2", "det1", "h2"] {
        let d = dist_from_name(name).map_err(|e| e.to_string())?;
        let r = key_identity_residual(&d, grid).map_err(|e| e.to_string())?;
        checks.push(Check::le(
            format!("residual of F_e + F_e*dM = t, {name}"),
            r,
            opts.widen(1e-2),
        ));
    }
    let d = dist_from_name("erlang2").map_err(|e| e.to_string())?;
    let coarse = key_identity_residual(&d, TimeGrid::new(10.0, 2e-3).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let fine = key_identity_residual(&d, grid).map_err(|e| e.to_string())?;
    checks.push(Check::le(
        "first-order refinement: |coarse/fine - 2|",
        (coarse / fine - 2.0).abs(),
        opts.widen(0.2),
    ));
    Ok(Criterion {
        id: 4,
        title: "renewal key identity residual and its refinement rate",
        checks,
    })
}

fn criterion_representation_equivalence(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(5.0, 1e-2).map_err(|e| e.to_string())?;
    let per_combo = opts.mc(100).div_ceil(4);
    let mut worst = 0.0f64;
    for (di, dname) in ["exp1", "erlang2"].iter().enumerate() {
        let d = dist_from_name(dname).map_err(|e| e.to_string())?;
        let m = renewal_function(&d, grid).map_err(|e| e.to_string())?;
        let sampler = GaussianDriverSampler::new(&d, 1.0, Q0Law::Gaussian { mean: 0.0, sd: 1.0 }, grid)
            .map_err(|e| e.to_string())?;
        for (bi, beta) in [0.0, 1.0].iter().enumerate() {
            for rep in 0..per_combo {
                let stream = (di * 2 + bi) as u64 * 10_000 + rep as u64;
                let ds = sampler
                    .sample(opts.seed ^ 0x5eed_0005, stream)
                    .map_err(|e| e.to_string())?;
                let lp = limit_paths(&ds, *beta, &m).map_err(|e| e.to_string())?;
                worst = worst.max(lp.gap);
            }
        }
    }
    Ok(Criterion {
        id: 5,
        title: "convolution and renewal representations agree pathwise",
        checks: vec![Check::le(
            "max sup-gap over sampled drivers",
            worst,
            opts.widen(5e-3),
        )],
    })
}

fn regulator_random_path(grid: TimeGrid, rng: &mut impl Rng, scale: f64) -> Path {
    let mut v = 0.0;
    Path::new(
        grid,
        (0..grid.len())
            .map(|_| {
                v += rng.random_range(-scale..scale);
                v
            })
            .collect(),
    )
    .expect("same grid")
}

fn criterion_regulator_properties(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(4.0, 0.01).map_err(|e| e.to_string())?;
    let tol = 1e-9;
    let dists = [
        dist_from_name("exp1").map_err(|e| e.to_string())?,
        dist_from_name("erlang2").map_err(|e| e.to_string())?,
        dist_from_name("h2").map_err(|e| e.to_string())?,
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_0006);
    let reps = opts.mc(50);
    let (mut picard_gap, mut uniq_gap) = (0.0f64, 0.0f64);
    for i in 0..reps {
        let x = regulator_random_path(grid, &mut rng, 0.2);
        let p = RegulatorProblem {
            free: x.clone(),
            dist: dists[i % dists.len()].clone(),
            shift: if i % 2 == 0 { 0.0 } else { -1.0 },
        };
        let fwd = solve_forward(&p).map_err(|e| e.to_string())?.solution;
        let pic = solve_picard(&p, tol, None).map_err(|e| e.to_string())?.solution;
        picard_gap = picard_gap.max(fwd.sup_distance(&pic));
        let other = solve_picard_from(&p, x, tol, 100_000)
            .map_err(|e| e.to_string())?
            .solution;
        uniq_gap = uniq_gap.max(pic.sup_distance(&other));
    }
    // point-mass Lipschitz ratio against k = floor(t/c) + 1
    let c = 1.0;
    let mut lip_ratio = 0.0f64;
    for _ in 0..opts.mc(50) {
        let x1 = regulator_random_path(grid, &mut rng, 0.2);
        let x2 = regulator_random_path(grid, &mut rng, 0.2);
        let z1 = solve_pointmass(&x1, c, 0.0).map_err(|e| e.to_string())?;
        let z2 = solve_pointmass(&x2, c, 0.0).map_err(|e| e.to_string())?;
        let (mut sup_x, mut sup_z) = (0.0f64, 0.0f64);
        for k in 0..grid.len() {
            sup_x = sup_x.max((x1.values()[k] - x2.values()[k]).abs());
            sup_z = sup_z.max((z1.values()[k] - z2.values()[k]).abs());
            let kk = (grid.point(k) / c).floor() + 1.0;
            if sup_x > 0.0 {
                lip_ratio = lip_ratio.max(sup_z / (kk * sup_x));
            }
        }
    }
    // contraction-window ratio against (1 - eps)^{-k}, eps = 1/2
    let d = Dist::exponential1();
    let lag = grid.nearest_index(contraction_delta(&d, grid));
    let mut nd_ratio = 0.0f64;
    for _ in 0..opts.mc(50) {
        let x1 = regulator_random_path(grid, &mut rng, 0.3);
        let x2 = regulator_random_path(grid, &mut rng, 0.3);
        let solve = |x: &Path| {
            solve_forward(&RegulatorProblem {
                free: x.clone(),
                dist: d.clone(),
                shift: 0.0,
            })
            .map(|r| r.solution)
        };
        let z1 = solve(&x1).map_err(|e| e.to_string())?;
        let z2 = solve(&x2).map_err(|e| e.to_string())?;
        let mut block = 1usize;
        while block * lag < grid.len() {
            let end = block * lag;
            let sup = |a: &Path, b: &Path| {
                (0..=end)
                    .map(|k| (a.values()[k] - b.values()[k]).abs())
                    .fold(0.0f64, f64::max)
            };
            let sup_x = sup(&x1, &x2);
            if sup_x > 0.0 {
                nd_ratio = nd_ratio.max(sup(&z1, &z2) / (2.0f64.powi(block as i32) * sup_x));
            }
            block += 1;
        }
    }
    Ok(Criterion {
        id: 6,
        title: "fixed-point solver cross-checks and contraction bounds",
        checks: vec![
            Check::le(
                "iterative vs forward sup-gap",
                picard_gap,
                opts.widen(tol.max(10.0 * grid.step())),
            ),
            Check::le("two-initialization gap", uniq_gap, opts.widen(2.0 * tol)),
            Check::le("point-mass Lipschitz ratio", lip_ratio, opts.widen(1.0) + 1e-9),
            Check::le("contraction-window ratio", nd_ratio, opts.widen(1.0) + 1e-9),
        ],
    })
}

fn criterion_departure_balance(opts: &VerifyOptions) -> Result<Criterion, String> {
    let det = Dist::deterministic(1.0).map_err(|e| e.to_string())?;
    let exp = Dist::exponential1();
    let half = opts.mc(20).div_ceil(2);
    let mut det_worst = 0.0f64;
    let mut exp_worst = 0.0f64;
    for rep in 0..half {
        for (service, worst) in [(&det, &mut det_worst), (&exp, &mut exp_worst)] {
            let mut cfg = SimConfig::hw(10, 1.0, &exp, service, 5.0, opts.seed ^ 0x5eed_0007)
                .map_err(|e| e.to_string())?;
            cfg.replication = rep as u64;
            let log = simulate(&cfg).map_err(|e| e.to_string())?;
            log.check_invariants()?;
            for t in [2.5, 5.0] {
                let (_, _, diff) = verify_prop21(&log, service, t);
                *worst = worst.max(diff);
            }
        }
    }
    Ok(Criterion {
        id: 7,
        title: "in-log departed-customer balance",
        checks: vec![
            Check::le("max |lhs - rhs|, deterministic service", det_worst, opts.widen(1e-9)),
            Check::le("max |lhs - rhs|, exponential service", exp_worst, opts.widen(1e-6)),
        ],
    })
}

fn criterion_fluid_convergence(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(10.0, 1e-2).map_err(|e| e.to_string())?;
    let exp = Dist::exponential1();
    let rows = convergence_experiment(
        1.0,
        &exp,
        &exp,
        &[25, 100, 400],
        opts.mc(50),
        opts.mc(200),
        grid,
        opts.seed ^ 0x5eed_0008,
    )
    .map_err(|e| e.to_string())?;
    let m: Vec<f64> = rows.iter().map(|r| r.median_fluid_gap).collect();
    Ok(Criterion {
        id: 8,
        title: "fluid-scale convergence of the simulator",
        checks: vec![
            Check::le(
                "monotone decrease of median gaps (max increment)",
                (m[1] - m[0]).max(m[2] - m[1]),
                0.0,
            ),
            Check::le("gap ratio n=400 vs n=100", m[2] / m[1], opts.widen(0.6)),
        ],
    })
}

/// Terminal draws: (diffusion-scaled queue, its positive part, scaled wait).
type TerminalDraws = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Shared machinery for criteria 9 and 12: terminal draws of the scaled
/// simulator and of the limit solution, M/M/N at beta = 1.
fn des_terminals(n: u64, reps: usize, seed: u64) -> Result<TerminalDraws, String> {
    let exp = Dist::exponential1();
    let grid = TimeGrid::new(5.0, 0.5).map_err(|e| e.to_string())?; // only t=5 read
    let mut q_tilde = Vec::with_capacity(reps);
    let mut q_plus = Vec::with_capacity(reps);
    let mut wait = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut cfg = SimConfig::hw(n, 1.0, &exp, &exp, 5.0, seed).map_err(|e| e.to_string())?;
        cfg.replication = rep as u64;
        let log = simulate(&cfg).map_err(|e| e.to_string())?;
        let sp = scale_paths(&log, grid).map_err(|e| e.to_string())?;
        q_tilde.push(sp.q_tilde.eval(5.0));
        q_plus.push(sp.q_tilde_plus.eval(5.0));
        wait.push(sp.wait.eval(5.0));
    }
    Ok((q_tilde, q_plus, wait))
}

fn limit_terminals(reps: usize, seed: u64) -> Result<Vec<f64>, String> {
    let exp = Dist::exponential1();
    let grid = TimeGrid::new(5.0, 1e-2).map_err(|e| e.to_string())?;
    let sampler = GaussianDriverSampler::new(&exp, 1.0, Q0Law::Point(0.0), grid)
        .map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(reps);
    for rep in 0..reps {
        let ds = sampler.sample(seed, rep as u64).map_err(|e| e.to_string())?;
        let z = solve_limit_convolution(&ds.zeta, &exp, 1.0).map_err(|e| e.to_string())?;
        out.push(z.eval(5.0));
    }
    Ok(out)
}

fn criterion_diffusion_marginal(opts: &VerifyOptions) -> Result<Criterion, String> {
    let reps = opts.mc(2000);
    let (mut des, _, _) = des_terminals(400, reps, opts.seed ^ 0x5eed_0009)?;
    let mut lim = limit_terminals(reps, opts.seed ^ 0x5eed_1009)?;
    des.sort_by(f64::total_cmp);
    lim.sort_by(f64::total_cmp);
    let ks = stats::ks_two_sample(&des, &lim);
    Ok(Criterion {
        id: 9,
        title: "terminal law of the scaled simulator matches the limit",
        checks: vec![Check::le("two-sample KS at t = 5, n = 400", ks, opts.widen(0.1))],
    })
}

fn criterion_exponential_reduction(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(2.0, 1e-2).map_err(|e| e.to_string())?;
    let r = b_process_covariance_check(1.0, opts.mc(5000), grid, opts.seed ^ 0x5eed_000a)
        .map_err(|e| e.to_string())?;
    let mut checks = vec![
        Check::le("|Var B(1)/(1+s2) - 1|", (r.var_b1 / r.base - 1.0).abs(), opts.widen(0.1)),
        Check::le(
            "|Cov(B(1),B(2))/(1+s2) - 1|",
            (r.cov_b1_b2 / r.base - 1.0).abs(),
            opts.widen(0.1),
        ),
    ];
    let reps = opts.mc(5000);
    let mut lim = limit_terminals(reps, opts.seed ^ 0x5eed_100a)?;
    let em_grid = TimeGrid::new(5.0, 1e-3).map_err(|e| e.to_string())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_200a);
    let mut em: Vec<f64> = (0..reps)
        .map(|_| hw_reference_diffusion(1.0, 1.0, 0.0, em_grid, &mut rng).eval(5.0))
        .collect();
    lim.sort_by(f64::total_cmp);
    em.sort_by(f64::total_cmp);
    checks.push(Check::le(
        "two-sample KS vs one-dimensional reference at t = 5",
        stats::ks_two_sample(&lim, &em),
        opts.widen(0.05),
    ));
    Ok(Criterion {
        id: 10,
        title: "exponential-case reduction to the one-dimensional diffusion",
        checks,
    })
}

fn criterion_driver_statistics(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(2.0, 1e-2).map_err(|e| e.to_string())?;
    let exp = Dist::exponential1();
    let sampler = GaussianDriverSampler::new(&exp, 1.0, Q0Law::Point(0.0), grid)
        .map_err(|e| e.to_string())?;
    let reps = opts.mc(5000);
    let t_half = (2.0f64).ln(); // equilibrium CDF is 1/2 here
    let (mut m2v, mut m1v, mut brv) = (Vec::new(), Vec::new(), Vec::new());
    for rep in 0..reps {
        let ds = sampler
            .sample(opts.seed ^ 0x5eed_000b, rep as u64)
            .map_err(|e| e.to_string())?;
        m2v.push(ds.m2.eval(1.0));
        m1v.push(ds.m1.eval(1.0));
        brv.push(ds.bridge.eval(t_half));
    }
    let gamma11 = adaptive_simpson(&|u: f64| exp.tail(1.0 - u) * exp.cdf(1.0 - u), 0.0, 1.0, 1e-10);
    let iso = adaptive_simpson(&|u: f64| exp.tail(u).powi(2), 0.0, 1.0, 1e-10);
    Ok(Criterion {
        id: 11,
        title: "Gaussian driver marginals match their covariance oracles",
        checks: vec![
            Check::le(
                "|Var M2(1)/quadrature - 1|",
                (stats::variance(&m2v) / gamma11 - 1.0).abs(),
                opts.widen(0.10),
            ),
            Check::le(
                "|Var M1(1)/isometry - 1|",
                (stats::variance(&m1v) / iso - 1.0).abs(),
                opts.widen(0.10),
            ),
            Check::le(
                "|bridge variance at clock 1/2 - 1/4|",
                (stats::variance(&brv) - 0.25).abs(),
                opts.widen(0.02),
            ),
        ],
    })
}

fn criterion_virtual_wait(opts: &VerifyOptions) -> Result<Criterion, String> {
    let grid = TimeGrid::new(5.0, 1e-2).map_err(|e| e.to_string())?;
    let d = dist_from_name("erlang2").map_err(|e| e.to_string())?;
    let sampler =
        GaussianDriverSampler::new(&d, 1.0, Q0Law::Gaussian { mean: 0.0, sd: 1.0 }, grid)
            .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for rep in 0..opts.mc(100) {
        let ds = sampler
            .sample(opts.seed ^ 0x5eed_000c, rep as u64)
            .map_err(|e| e.to_string())?;
        let z = solve_limit_convolution(&ds.zeta, &d, 0.5).map_err(|e| e.to_string())?;
        match virtual_wait_limit(&z, &ds.zeta, &d, 0.5) {
            Ok(_) => {}
            Err(DiffusionError::WaitResidual { residual, .. }) => worst = worst.max(residual),
            Err(e) => return Err(e.to_string()),
        }
    }
    let reps = opts.mc(2000);
    let (_, mut q_plus, mut wait) = des_terminals(400, reps, opts.seed ^ 0x5eed_100c)?;
    q_plus.sort_by(f64::total_cmp);
    wait.sort_by(f64::total_cmp);
    let ks = stats::ks_two_sample(&wait, &q_plus);
    Ok(Criterion {
        id: 12,
        title: "virtual-wait limit: fixed-point residual and scaled-wait law",
        checks: vec![
            Check::le(
                "max fixed-point residual over drivers",
                worst,
                opts.widen(10.0 * grid.step()),
            ),
            Check::le("two-sample KS of scaled wait vs positive part", ks, opts.widen(0.1)),
        ],
    })
}
