//! Command-line front end: every module as a subcommand, config-file driven
//! with flag overrides, CSV output prefixed by a reproducibility manifest.

// validation uses `!(x > 0.0)` deliberately so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Deserialize;

use qlab::diffusion::{
    limit_paths, GaussianDriverSampler, Q0Law,
};
use qlab::dist::{dist_from_name, Dist};
use qlab::fluid::{fluid_limit, FluidArrival, FluidProblem};
use qlab::grid::{Path as QPath, TimeGrid};
use qlab::regulator::{solve_picard, RegulatorProblem, DEFAULT_TOL};
use qlab::renewal::{key_identity_residual, renewal_function};
use qlab::sim::{convergence_experiment, simulate, EventKind, SimConfig};
use qlab::verify::{run_suite, VerifyOptions, SUITES};

#[derive(Parser)]
#[command(name = "qlab", version, about = "Many-server queue laboratory", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the regulator fixed-point equation for a free path given as CSV
    Regulator(RegulatorArgs),
    /// Tabulate the renewal function and its key-identity residual
    Renewal(RenewalArgs),
    /// Solve the fluid limit equation
    Fluid(FluidArgs),
    /// Sample the Gaussian driver and solve the diffusion limit
    Diffusion(DiffusionArgs),
    /// Run one discrete-event simulation and dump the event log
    Simulate(SimulateArgs),
    /// Sweep server counts and report convergence diagnostics
    Converge(ConvergeArgs),
    /// Run acceptance suites
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; explicit flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (precedence: flag, config, QLAB_SEED, random)
    #[arg(long)]
    seed: Option<u64>,
    /// Replication parallelism
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RegulatorArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// CSV file with t,x(t) rows defining the free path
    #[arg(long)]
    x: Option<PathBuf>,
    /// Integrator law (exp1, det1, erlang2..4, h2, or a JSON spec file)
    #[arg(long)]
    dist: Option<String>,
    /// Shift in the positive part: -1 fluid, 0 diffusion
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct RenewalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct FluidArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial fluid level
    #[arg(long)]
    q0: Option<f64>,
    /// Service law
    #[arg(long)]
    dist: Option<String>,
    /// Residual law of initially served customers (default: equilibrium)
    #[arg(long)]
    init_dist: Option<String>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct DiffusionArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Service law
    #[arg(long)]
    dist: Option<String>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Also write the full paths of replication 0 here
    #[arg(long)]
    path_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Server count
    #[arg(long)]
    n: Option<u64>,
    /// Drift parameter of square-root staffing (sets the arrival rate)
    #[arg(long)]
    beta: Option<f64>,
    /// Service law
    #[arg(long)]
    dist: Option<String>,
    /// Interarrival base law (mean 1)
    #[arg(long)]
    arrival_dist: Option<String>,
    /// Headcount at time 0- (default: n)
    #[arg(long)]
    q0: Option<u64>,
    /// Residual law of initially served customers (default: equilibrium)
    #[arg(long)]
    init_dist: Option<String>,
    #[arg(long = "T")]
    t: Option<f64>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    arrival_dist: Option<String>,
    /// Comma-separated server counts
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Monte-Carlo size of the limit-law sample the KS column uses
    #[arg(long)]
    limit_draws: Option<usize>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// One of regulator, renewal, fluid, diffusion, simulate, all
    #[arg(long)]
    suite: String,
    /// Monte-Carlo sizes / 10, bounds x 2
    #[arg(long)]
    fast: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileCfg {
    seed: Option<u64>,
    x: Option<PathBuf>,
    dist: Option<String>,
    arrival_dist: Option<String>,
    init_dist: Option<String>,
    a: Option<f64>,
    tol: Option<f64>,
    q0: Option<f64>,
    n: Option<u64>,
    beta: Option<f64>,
    sigma2: Option<f64>,
    #[serde(rename = "T")]
    t: Option<f64>,
    h: Option<f64>,
    reps: Option<usize>,
    limit_draws: Option<usize>,
    n_list: Option<Vec<u64>>,
}

fn load_cfg(common: &CommonArgs) -> Result<FileCfg, String> {
    match &common.config {
        None => Ok(FileCfg::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn resolve_seed(common: &CommonArgs, cfg: &FileCfg) -> u64 {
    common
        .seed
        .or(cfg.seed)
        .or_else(|| {
            std::env::var("QLAB_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or_else(|| rand::rng().random())
}

/// Writes the manifest comment block then CSV rows.
struct CsvOut {
    dest: Box<dyn Write>,
}

impl CsvOut {
    fn open(path: &Option<PathBuf>) -> Result<CsvOut, String> {
        let dest: Box<dyn Write> = match path {
            None => Box::new(std::io::stdout().lock()),
            Some(p) => Box::new(fs::File::create(p).map_err(|e| format!("{}: {e}", p.display()))?),
        };
        Ok(CsvOut { dest })
    }

    fn manifest(
        &mut self,
        subcommand: &str,
        resolved: &serde_json::Value,
        seed: u64,
        outputs: &[String],
    ) -> Result<(), String> {
        let w = &mut self.dest;
        let v = env!("CARGO_PKG_VERSION");
        writeln!(w, "# subcommand: {subcommand}").map_err(|e| e.to_string())?;
        writeln!(w, "# config: {resolved}").map_err(|e| e.to_string())?;
        writeln!(w, "# seed: {seed}").map_err(|e| e.to_string())?;
        writeln!(w, "# version: {v}").map_err(|e| e.to_string())?;
        writeln!(w, "# outputs: {}", outputs.join(" ")).map_err(|e| e.to_string())?;
        Ok(())
    }

    fn row(&mut self, fields: &[String]) -> Result<(), String> {
        let quoted: Vec<String> = fields
            .iter()
            .map(|f| {
                if f.contains(',') || f.contains('"') || f.contains('\n') {
                    format!("\"{}\"", f.replace('"', "\"\""))
                } else {
                    f.clone()
                }
            })
            .collect();
        writeln!(self.dest, "{}", quoted.join(",")).map_err(|e| e.to_string())
    }
}

fn out_names(common: &CommonArgs) -> Vec<String> {
    match &common.out {
        None => vec!["<stdout>".into()],
        Some(p) => vec![p.display().to_string()],
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.12}")
}

fn need<T: Clone>(flag: Option<T>, cfg: Option<T>, name: &str) -> Result<T, String> {
    flag.or(cfg).ok_or_else(|| format!("missing --{name}"))
}

fn run_in_parallel<T: Send>(
    jobs: usize,
    n: usize,
    f: impl Fn(usize) -> Result<T, String> + Sync,
) -> Result<Vec<T>, String> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T, String>>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(jobs);
    std::thread::scope(|scope| {
        for (j, part) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, slot) in part.iter_mut().enumerate() {
                    *slot = Some(f(j * chunk + i));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}

fn parse_free_path(path: &PathBuf) -> Result<QPath, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',');
        let (a, b) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(t), Ok(x)) => {
                ts.push(t);
                xs.push(x);
            }
            _ => continue, // header line
        }
    }
    if ts.len() < 2 {
        return Err("free-path CSV needs at least two t,x rows".into());
    }
    let step = ts[1] - ts[0];
    if !(step > 0.0) {
        return Err("free-path CSV must have increasing, uniform t".into());
    }
    for w in ts.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0) {
            return Err("free-path CSV must be on a uniform grid".into());
        }
    }
    let grid = TimeGrid::new(ts[ts.len() - 1], step).map_err(|e| e.to_string())?;
    if grid.len() != xs.len() {
        return Err("free-path CSV grid did not round-trip".into());
    }
    QPath::new(grid, xs).map_err(|e| e.to_string())
}

fn dist_arg(name: &str) -> Result<Dist, String> {
    dist_from_name(name).map_err(|e| e.to_string())
}

fn cmd_regulator(a: RegulatorArgs) -> Result<(), String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    let x_path = need(a.x, cfg.x, "x")?;
    let dist_name = need(a.dist, cfg.dist, "dist")?;
    let shift = a.a.or(cfg.a).unwrap_or(0.0);
    let tol = a.tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    let free = parse_free_path(&x_path)?;
    let dist = dist_arg(&dist_name)?;
    let report = solve_picard(
        &RegulatorProblem {
            free: free.clone(),
            dist,
            shift,
        },
        tol,
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut out = CsvOut::open(&a.common.out)?;
    let resolved = serde_json::json!({
        "x": x_path.display().to_string(), "dist": dist_name, "a": shift, "tol": tol,
    });
    out.manifest("regulator", &resolved, seed, &out_names(&a.common))?;
    out.row(&["t".into(), "z".into()])?;
    let grid = report.solution.grid();
    for (k, z) in report.solution.values().iter().enumerate() {
        out.row(&[fmt(grid.point(k)), fmt(*z)])?;
    }
    eprintln!(
        "regulator: iterations={} residual={:.3e}",
        report.iterations, report.residual
    );
    Ok(())
}

fn cmd_renewal(a: RenewalArgs) -> Result<(), String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    let dist_name = need(a.dist, cfg.dist, "dist")?;
    let t_end = a.t.or(cfg.t).unwrap_or(10.0);
    let h = a.h.or(cfg.h).unwrap_or(1e-3);
    let d = dist_arg(&dist_name)?;
    let grid = TimeGrid::new(t_end, h).map_err(|e| e.to_string())?;
    let m = renewal_function(&d, grid).map_err(|e| e.to_string())?;
    let residual = key_identity_residual(&d, grid).map_err(|e| e.to_string())?;
    let mut out = CsvOut::open(&a.common.out)?;
    let resolved = serde_json::json!({ "dist": dist_name, "T": t_end, "h": h });
    out.manifest("renewal", &resolved, seed, &out_names(&a.common))?;
    writeln!(out.dest, "# key_identity_residual: {residual:.6e}").map_err(|e| e.to_string())?;
    out.row(&["t".into(), "M".into()])?;
    for (k, v) in m.path().values().iter().enumerate() {
        out.row(&[fmt(grid.point(k)), fmt(*v)])?;
    }
    Ok(())
}

fn cmd_fluid(a: FluidArgs) -> Result<(), String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    let dist_name = need(a.dist, cfg.dist, "dist")?;
    let q0 = a.q0.or(cfg.q0).unwrap_or(1.0);
    let t_end = a.t.or(cfg.t).unwrap_or(10.0);
    let h = a.h.or(cfg.h).unwrap_or(1e-2);
    let service = dist_arg(&dist_name)?;
    let init_name = a.init_dist.or(cfg.init_dist);
    let initial = match &init_name {
        Some(n) => dist_arg(n)?,
        None => service.equilibrium().map_err(|e| e.to_string())?,
    };
    let grid = TimeGrid::new(t_end, h).map_err(|e| e.to_string())?;
    let sol = fluid_limit(
        &FluidProblem {
            q0,
            initial,
            service,
            arrival: FluidArrival::Identity,
        },
        grid,
    )
    .map_err(|e| e.to_string())?;
    let mut out = CsvOut::open(&a.common.out)?;
    let resolved = serde_json::json!({
        "q0": q0, "dist": dist_name,
        "init_dist": init_name.unwrap_or_else(|| "equilibrium".into()),
        "T": t_end, "h": h,
    });
    out.manifest("fluid", &resolved, seed, &out_names(&a.common))?;
    out.row(&[
        "t".into(),
        "q_bar".into(),
        "initial_service".into(),
        "initial_queue".into(),
        "infinite_server".into(),
        "adjustment".into(),
    ])?;
    for k in 0..grid.len() {
        out.row(&[
            fmt(grid.point(k)),
            fmt(sol.total.values()[k]),
            fmt(sol.initial_service.values()[k]),
            fmt(sol.initial_queue.values()[k]),
            fmt(sol.infinite_server.values()[k]),
            fmt(sol.adjustment.values()[k]),
        ])?;
    }
    Ok(())
}

fn cmd_diffusion(a: DiffusionArgs) -> Result<(), String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    let dist_name = need(a.dist, cfg.dist, "dist")?;
    let beta = a.beta.or(cfg.beta).unwrap_or(1.0);
    let sigma2 = a.sigma2.or(cfg.sigma2).unwrap_or(1.0);
    let t_end = a.t.or(cfg.t).unwrap_or(5.0);
    let h = a.h.or(cfg.h).unwrap_or(1e-2);
    let reps = a.reps.or(cfg.reps).unwrap_or(100);
    let service = dist_arg(&dist_name)?;
    let grid = TimeGrid::new(t_end, h).map_err(|e| e.to_string())?;
    let sampler = GaussianDriverSampler::new(&service, sigma2, Q0Law::Point(0.0), grid)
        .map_err(|e| e.to_string())?;
    let m = renewal_function(&service, grid).map_err(|e| e.to_string())?;
    let results = run_in_parallel(a.common.jobs, reps, |rep| {
        let ds = sampler.sample(seed, rep as u64).map_err(|e| e.to_string())?;
        let lp = limit_paths(&ds, beta, &m).map_err(|e| e.to_string())?;
        Ok((lp.q_conv.eval(t_end), lp.wait.eval(t_end), lp.gap))
    })?;
    let mut out = CsvOut::open(&a.common.out)?;
    let mut outputs = out_names(&a.common);
    if let Some(p) = &a.path_out {
        outputs.push(p.display().to_string());
    }
    let resolved = serde_json::json!({
        "beta": beta, "sigma2": sigma2, "dist": dist_name,
        "T": t_end, "h": h, "reps": reps,
    });
    out.manifest("diffusion", &resolved, seed, &outputs)?;
    out.row(&["rep".into(), "q_T".into(), "v_T".into(), "rep_gap".into()])?;
    for (rep, (q, v, gap)) in results.iter().enumerate() {
        out.row(&[rep.to_string(), fmt(*q), fmt(*v), fmt(*gap)])?;
    }
    if let Some(p) = &a.path_out {
        let ds = sampler.sample(seed, 0).map_err(|e| e.to_string())?;
        let lp = limit_paths(&ds, beta, &m).map_err(|e| e.to_string())?;
        let mut pout = CsvOut::open(&Some(p.clone()))?;
        pout.manifest("diffusion", &resolved, seed, &outputs)?;
        pout.row(&[
            "t".into(),
            "zeta".into(),
            "q_conv".into(),
            "q_renewal".into(),
            "wait".into(),
        ])?;
        for k in 0..grid.len() {
            pout.row(&[
                fmt(grid.point(k)),
                fmt(ds.zeta.values()[k]),
                fmt(lp.q_conv.values()[k]),
                fmt(lp.q_renewal.values()[k]),
                fmt(lp.wait.values()[k]),
            ])?;
        }
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    let n = need(a.n, cfg.n, "n")?;
    let dist_name = need(a.dist, cfg.dist, "dist")?;
    let beta = a.beta.or(cfg.beta).unwrap_or(1.0);
    let t_end = a.t.or(cfg.t).unwrap_or(10.0);
    let service = dist_arg(&dist_name)?;
    let arrival_name = a.arrival_dist.or(cfg.arrival_dist).unwrap_or_else(|| "exp1".into());
    let arrival = dist_arg(&arrival_name)?;
    let init_name = a.init_dist.or(cfg.init_dist);
    let mut sim_cfg =
        SimConfig::hw(n, beta, &arrival, &service, t_end, seed).map_err(|e| e.to_string())?;
    if let Some(q0) = a.q0.or(cfg.q0.map(|q| q as u64)) {
        sim_cfg.q0 = q0;
    }
    if let Some(name) = &init_name {
        sim_cfg.initial = dist_arg(name)?;
    }
    let log = simulate(&sim_cfg).map_err(|e| e.to_string())?;
    log.check_invariants()?;
    let mut out = CsvOut::open(&a.common.out)?;
    let resolved = serde_json::json!({
        "n": n, "beta": beta, "dist": dist_name, "arrival_dist": arrival_name,
        "q0": sim_cfg.q0,
        "init_dist": init_name.unwrap_or_else(|| "equilibrium".into()),
        "T": t_end,
    });
    out.manifest("simulate", &resolved, seed, &out_names(&a.common))?;
    out.row(&["time".into(), "kind".into(), "q".into()])?;
    for e in &log.events {
        let kind = match e.kind {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
        };
        out.row(&[fmt(e.time), kind.into(), e.q.to_string()])?;
    }
    Ok(())
}

fn cmd_converge(a: ConvergeArgs) -> Result<(), String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    let dist_name = need(a.dist, cfg.dist, "dist")?;
    let beta = a.beta.or(cfg.beta).unwrap_or(1.0);
    let reps = a.reps.or(cfg.reps).unwrap_or(50);
    let limit_draws = a.limit_draws.or(cfg.limit_draws).unwrap_or(500);
    let t_end = a.t.or(cfg.t).unwrap_or(10.0);
    let h = a.h.or(cfg.h).unwrap_or(1e-2);
    let ns: Vec<u64> = match (a.n_list, cfg.n_list) {
        (Some(s), _) => s
            .split(',')
            .map(|p| p.trim().parse().map_err(|e| format!("--n-list: {e}")))
            .collect::<Result<_, _>>()?,
        (None, Some(v)) => v,
        (None, None) => vec![25, 100, 400],
    };
    let service = dist_arg(&dist_name)?;
    let arrival_name = a.arrival_dist.or(cfg.arrival_dist).unwrap_or_else(|| "exp1".into());
    let arrival = dist_arg(&arrival_name)?;
    let grid = TimeGrid::new(t_end, h).map_err(|e| e.to_string())?;
    let rows = convergence_experiment(
        beta,
        &arrival,
        &service,
        &ns,
        reps,
        limit_draws,
        grid,
        seed,
    )
    .map_err(|e| e.to_string())?;
    let mut out = CsvOut::open(&a.common.out)?;
    let resolved = serde_json::json!({
        "beta": beta, "dist": dist_name, "arrival_dist": arrival_name,
        "n_list": ns, "reps": reps, "limit_draws": limit_draws, "T": t_end, "h": h,
    });
    out.manifest("converge", &resolved, seed, &out_names(&a.common))?;
    out.row(&[
        "n".into(),
        "rep".into(),
        "fluid_gap".into(),
        "w0_sup".into(),
        "m2_sup".into(),
        "terminal_q_tilde".into(),
        "median_fluid_gap".into(),
        "ks_vs_limit".into(),
    ])?;
    for r in &rows {
        for rep in 0..r.gaps.len() {
            out.row(&[
                r.n.to_string(),
                rep.to_string(),
                fmt(r.gaps[rep]),
                fmt(r.w0s[rep]),
                fmt(r.m2s[rep]),
                fmt(r.terminals[rep]),
                fmt(r.median_fluid_gap),
                fmt(r.ks_vs_limit),
            ])?;
        }
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<bool, String> {
    let cfg = load_cfg(&a.common)?;
    let seed = resolve_seed(&a.common, &cfg);
    if !SUITES.contains(&a.suite.as_str()) {
        return Err(format!(
            "unknown suite '{}'; expected one of {}",
            a.suite,
            SUITES.join(", ")
        ));
    }
    let opts = VerifyOptions { fast: a.fast, seed };
    let criteria = run_suite(&a.suite, &opts)?;
    let mut out = CsvOut::open(&a.common.out)?;
    let resolved = serde_json::json!({ "suite": a.suite, "fast": a.fast });
    out.manifest("verify", &resolved, seed, &out_names(&a.common))?;
    out.row(&[
        "criterion".into(),
        "check".into(),
        "value".into(),
        "bound".into(),
        "pass".into(),
    ])?;
    let mut all_pass = true;
    for c in &criteria {
        for ch in &c.checks {
            out.row(&[
                format!("{} {}", c.id, c.title),
                ch.name.clone(),
                format!("{:.6e}", ch.value),
                format!("{:.6e}", ch.bound),
                if ch.pass { "pass".into() } else { "FAIL".into() },
            ])?;
        }
        all_pass &= c.pass();
        eprintln!(
            "criterion {:>2} [{}] {}",
            c.id,
            if c.pass() { "pass" } else { "FAIL" },
            c.title
        );
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind::*;
            let _ = e.print();
            return match e.kind() {
                DisplayHelp | DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.cmd {
        Cmd::Regulator(a) => cmd_regulator(a),
        Cmd::Renewal(a) => cmd_renewal(a),
        Cmd::Fluid(a) => cmd_fluid(a),
        Cmd::Diffusion(a) => cmd_diffusion(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Converge(a) => cmd_converge(a),
        Cmd::Verify(a) => {
            return match cmd_verify(a) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(2),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
