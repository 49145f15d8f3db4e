//! Discrete-event simulation of the finite-N FCFS many-server queue, with
//! per-customer records, pathwise identity checks, and the scaled paths the
//! limit theory is verified against.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;

use crate::diffusion::HwScaling;
use crate::dist::{Dist, DistError};
use crate::grid::{GridError, Path, TimeGrid};
use crate::rng::{component, substream};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("virtual wait at t={t} unresolved: departure process exhausted")]
    Truncated { t: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Arrival process. `base` is a mean-1 interarrival law; actual
/// interarrivals are `base / rate`. Superposition merges `streams`
/// independent renewal processes of rate `rate / streams`.
#[derive(Clone, Debug)]
pub enum ArrivalModel {
    SingleRenewal { base: Dist, rate: f64 },
    Superposition { base: Dist, rate: f64, streams: usize },
}

impl ArrivalModel {
    pub fn rate(&self) -> f64 {
        match self {
            ArrivalModel::SingleRenewal { rate, .. } => *rate,
            ArrivalModel::Superposition { rate, .. } => *rate,
        }
    }

    pub fn base(&self) -> &Dist {
        match self {
            ArrivalModel::SingleRenewal { base, .. } => base,
            ArrivalModel::Superposition { base, .. } => base,
        }
    }

    /// All arrival epochs in (0, horizon], sorted.
    pub fn generate(&self, horizon: f64, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            ArrivalModel::SingleRenewal { base, rate } => {
                if *rate <= 0.0 {
                    return Vec::new();
                }
                let mut out = Vec::new();
                let mut t = 0.0;
                loop {
                    t += base.sample(rng) / rate;
                    if t > horizon {
                        return out;
                    }
                    out.push(t);
                }
            }
            ArrivalModel::Superposition {
                base,
                rate,
                streams,
            } => {
                if *rate <= 0.0 || *streams == 0 {
                    return Vec::new();
                }
                let stream_rate = rate / *streams as f64;
                let mut out = Vec::new();
                for _ in 0..*streams {
                    let mut t = 0.0;
                    loop {
                        t += base.sample(rng) / stream_rate;
                        if t > horizon {
                            break;
                        }
                        out.push(t);
                    }
                }
                out.sort_by(f64::total_cmp);
                out
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Server count.
    pub n: u64,
    pub arrivals: ArrivalModel,
    pub service: Dist,
    /// Headcount at time 0-.
    pub q0: u64,
    /// Residual service law of the min(q0, n) customers already in service.
    pub initial: Dist,
    pub horizon: f64,
    pub seed: u64,
    pub replication: u64,
}

impl SimConfig {
    /// Square-root-staffed configuration at equilibrium start: `q0 = n`,
    /// arrival rate `n * (1 - beta/sqrt(n))`, initial residuals drawn from
    /// the service law's equilibrium distribution.
    pub fn hw(
        n: u64,
        beta: f64,
        arrival_base: &Dist,
        service: &Dist,
        horizon: f64,
        seed: u64,
    ) -> Result<SimConfig, DistError> {
        Ok(SimConfig {
            n,
            arrivals: ArrivalModel::SingleRenewal {
                base: arrival_base.clone(),
                rate: HwScaling { beta }.arrival_rate(n),
            },
            service: service.clone(),
            q0: n,
            initial: service.equilibrium()?,
            horizon,
            seed,
            replication: 0,
        })
    }
}

/// One customer's full history. Times are absolute; `departure` may exceed
/// the horizon (runs are drained so every admitted customer completes).
#[derive(Clone, Copy, Debug)]
pub struct Customer {
    pub arrival: f64,
    pub wait: f64,
    pub service_start: f64,
    pub service_time: f64,
    pub departure: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Departure,
}

#[derive(Clone, Copy, Debug)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Headcount just after the event.
    pub q: u64,
}

#[derive(Clone, Debug)]
pub struct EventLog {
    pub n: u64,
    pub q0: u64,
    pub horizon: f64,
    /// The min(q0, n) customers in service at 0-, index order.
    pub initial_in_service: Vec<Customer>,
    /// The (q0 - n)+ customers waiting at 0-, index order.
    pub initial_waiting: Vec<Customer>,
    /// Post-0 arrivals in arrival order.
    pub arrivals: Vec<Customer>,
    /// Chronological, departures before arrivals at equal times.
    pub events: Vec<Event>,
}

/// Min-heap key for departure scheduling.
#[derive(PartialEq)]
struct TimeKey(f64, usize);

impl Eq for TimeKey {}
impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Clone, Copy)]
enum Slot {
    InitialWaiting(usize),
    Arrival(usize),
}

pub fn simulate(cfg: &SimConfig) -> Result<EventLog, SimError> {
    if !(cfg.horizon > 0.0) {
        return Err(SimError::InvalidConfig("horizon must be positive".into()));
    }
    let mut rng_init = substream(cfg.seed, cfg.replication, component::INITIAL);
    let mut rng_arr = substream(cfg.seed, cfg.replication, component::ARRIVALS);
    let mut rng_srv = substream(cfg.seed, cfg.replication, component::SERVICE);

    let n = cfg.n;
    let in_service0 = cfg.q0.min(n) as usize;
    let waiting0 = cfg.q0.saturating_sub(n) as usize;

    let mut initial_in_service = Vec::with_capacity(in_service0);
    let mut heap: BinaryHeap<Reverse<TimeKey>> = BinaryHeap::new();
    // heap payload: 0.. = initial in service, then offsets into the other
    // two groups fixed below
    for i in 0..in_service0 {
        let r = cfg.initial.sample(&mut rng_init);
        initial_in_service.push(Customer {
            arrival: 0.0,
            wait: 0.0,
            service_start: 0.0,
            service_time: r,
            departure: r,
        });
        heap.push(Reverse(TimeKey(r, i)));
    }
    let mut initial_waiting = vec![
        Customer {
            arrival: 0.0,
            wait: 0.0,
            service_start: 0.0,
            service_time: 0.0,
            departure: 0.0,
        };
        waiting0
    ];
    let arrival_times = cfg.arrivals.generate(cfg.horizon, &mut rng_arr);
    let mut arrivals: Vec<Customer> = Vec::with_capacity(arrival_times.len());

    let mut fifo: VecDeque<Slot> = (0..waiting0).map(Slot::InitialWaiting).collect();
    let mut events = Vec::new();
    let mut q = cfg.q0;
    let mut busy = in_service0 as u64;
    let mut next_arr = 0usize;
    let mut heap_id = in_service0; // unique tiebreak ids for scheduled departures

    // service times are drawn here, in service-start order
    let start_service =
        |slot: Slot,
         time: f64,
         heap: &mut BinaryHeap<Reverse<TimeKey>>,
         arrivals: &mut Vec<Customer>,
         initial_waiting: &mut Vec<Customer>,
         rng_srv: &mut rand_chacha::ChaCha8Rng,
         heap_id: &mut usize| {
            let s = cfg.service.sample(rng_srv);
            let c = match slot {
                Slot::InitialWaiting(i) => &mut initial_waiting[i],
                Slot::Arrival(i) => &mut arrivals[i],
            };
            c.wait = time - c.arrival;
            c.service_start = time;
            c.service_time = s;
            c.departure = time + s;
            heap.push(Reverse(TimeKey(time + s, *heap_id)));
            *heap_id += 1;
        };

    loop {
        let next_dep = heap.peek().map(|Reverse(TimeKey(t, _))| *t);
        let next_at = arrival_times.get(next_arr).copied();
        match (next_dep, next_at) {
            (None, None) => break,
            // departures first at ties keeps the headcount path cadlag
            (Some(td), at) if at.is_none() || td <= at.unwrap() => {
                heap.pop();
                q -= 1;
                busy -= 1;
                events.push(Event {
                    time: td,
                    kind: EventKind::Departure,
                    q,
                });
                if let Some(slot) = fifo.pop_front() {
                    busy += 1;
                    start_service(
                        slot,
                        td,
                        &mut heap,
                        &mut arrivals,
                        &mut initial_waiting,
                        &mut rng_srv,
                        &mut heap_id,
                    );
                }
            }
            (_, Some(ta)) => {
                next_arr += 1;
                let idx = arrivals.len();
                arrivals.push(Customer {
                    arrival: ta,
                    wait: 0.0,
                    service_start: 0.0,
                    service_time: 0.0,
                    departure: 0.0,
                });
                q += 1;
                events.push(Event {
                    time: ta,
                    kind: EventKind::Arrival,
                    q,
                });
                if busy < n {
                    busy += 1;
                    start_service(
                        Slot::Arrival(idx),
                        ta,
                        &mut heap,
                        &mut arrivals,
                        &mut initial_waiting,
                        &mut rng_srv,
                        &mut heap_id,
                    );
                } else {
                    fifo.push_back(Slot::Arrival(idx));
                }
            }
            _ => unreachable!(),
        }
    }

    Ok(EventLog {
        n,
        q0: cfg.q0,
        horizon: cfg.horizon,
        initial_in_service,
        initial_waiting,
        arrivals,
        events,
    })
}

impl EventLog {
    /// Headcount at time t (right-continuous).
    pub fn q_at(&self, t: f64) -> u64 {
        let mut q = self.q0;
        for e in &self.events {
            if e.time > t {
                break;
            }
            q = e.q;
        }
        q
    }

    /// Arrivals in (0, t].
    pub fn a_at(&self, t: f64) -> u64 {
        self.arrivals.partition_point(|c| c.arrival <= t) as u64
    }

    /// Departures in [0, t] (drained log: includes post-horizon ones).
    pub fn d_at(&self, t: f64) -> u64 {
        self.sorted_departures()
            .partition_point(|d| *d <= t) as u64
    }

    /// Service entries after time 0- and up to t.
    pub fn entered_service_at(&self, t: f64) -> u64 {
        self.initial_waiting
            .iter()
            .chain(&self.arrivals)
            .filter(|c| c.service_start <= t && c.departure > 0.0)
            .count() as u64
    }

    fn sorted_departures(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .initial_in_service
            .iter()
            .chain(&self.initial_waiting)
            .chain(&self.arrivals)
            .map(|c| c.departure)
            .collect();
        d.sort_by(f64::total_cmp);
        d
    }

    /// Headcount as a right-continuous step path on the grid.
    pub fn q_path(&self, grid: TimeGrid) -> Path {
        let mut vals = vec![0.0; grid.len()];
        let mut q = self.q0;
        let mut ev = 0;
        for (k, v) in vals.iter_mut().enumerate() {
            let t = grid.point(k);
            while ev < self.events.len() && self.events[ev].time <= t {
                q = self.events[ev].q;
                ev += 1;
            }
            *v = q as f64;
        }
        Path::new(grid, vals).expect("same grid")
    }

    /// Centered initial-residual indicator sum:
    /// `sum_i (1{residual_i > t} - (1 - F0(t)))` over customers in service
    /// at 0-.
    pub fn w0_path(&self, f0: &Dist, grid: TimeGrid) -> Path {
        let m = self.initial_in_service.len() as f64;
        Path::from_fn(grid, |t| {
            let alive = self
                .initial_in_service
                .iter()
                .filter(|c| c.service_time > t)
                .count() as f64;
            alive - m * (1.0 - f0.cdf(t))
        })
    }

    /// Centered service indicator sum over customers entering service after
    /// 0-: each term is `1{departure > t} - G(t - service_start)` with the
    /// survival function vanishing on negative arguments.
    pub fn m2_path(&self, service: &Dist, grid: TimeGrid) -> Path {
        let g = |x: f64| if x < 0.0 { 1.0 } else { service.tail(x) };
        Path::from_fn(grid, |t| {
            let mut s = 0.0;
            for c in &self.initial_waiting {
                s += if c.departure > t { 1.0 } else { 0.0 } - (1.0 - g(t - c.service_start));
            }
            for c in self.arrivals.iter().filter(|c| c.arrival <= t) {
                s += if c.departure > t { 1.0 } else { 0.0 } - (1.0 - g(t - c.service_start));
            }
            s
        })
    }

    /// Wait of a customer arriving at time t: under FCFS it enters service
    /// once all but n-1 of the `a_at(t) + q0` customers ahead of it have
    /// departed, so the wait is the (a_at(t) + q0 - n + 1)-th departure
    /// epoch minus t, clamped at zero.
    pub fn virtual_wait_at(&self, t: f64, sorted_deps: &[f64]) -> Result<f64, SimError> {
        let ahead = self.a_at(t) + self.q0;
        let k = (ahead + 1).saturating_sub(self.n);
        if k == 0 {
            return Ok(0.0);
        }
        match sorted_deps.get(k as usize - 1) {
            Some(s) => Ok((s - t).max(0.0)),
            None => Err(SimError::Truncated { t }),
        }
    }

    pub fn virtual_wait(&self, grid: TimeGrid) -> Result<Path, SimError> {
        let deps = self.sorted_departures();
        let mut vals = vec![0.0; grid.len()];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = self.virtual_wait_at(grid.point(k), &deps)?;
        }
        Ok(Path::new(grid, vals)?)
    }

    /// Pathwise sanity checks at every event time: flow conservation,
    /// nonidling, FCFS start order, the server-accounting identity
    /// `min(Q, n) = min(q0, n) + entered_service - departed`, the waiting
    /// headcount decomposition, and each realized wait equaling the virtual
    /// wait at the customer's arrival instant.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut a = 0u64;
        let mut d = 0u64;
        for e in &self.events {
            match e.kind {
                EventKind::Arrival => a += 1,
                EventKind::Departure => d += 1,
            }
            if self.q0 + a != e.q + d {
                return Err(format!("flow conservation broken at t={}", e.time));
            }
            let t = e.time;
            let entered = self.entered_service_at(t);
            let in_service0 = self.q0.min(self.n);
            if e.q.min(self.n) + d != in_service0 + entered {
                return Err(format!("server accounting broken at t={t}"));
            }
            // waiting decomposition: (Q - n)^+ equals the headcount whose
            // service has not started by t
            let waiting = self
                .initial_waiting
                .iter()
                .filter(|c| c.service_start > t)
                .count() as u64
                + self
                    .arrivals
                    .iter()
                    .filter(|c| c.arrival <= t && c.service_start > t)
                    .count() as u64;
            if e.q.saturating_sub(self.n) != waiting {
                return Err(format!("waiting decomposition broken at t={t}"));
            }
            // nonidling: someone waiting forces all servers busy
            let busy = in_service0 + entered - d;
            if waiting > 0 && busy != self.n {
                return Err(format!("idle server with waiting customers at t={t}"));
            }
        }
        // FCFS: starts nondecreasing within each class, initial waiters first
        let iw_starts: Vec<f64> = self.initial_waiting.iter().map(|c| c.service_start).collect();
        let ar_starts: Vec<f64> = self.arrivals.iter().map(|c| c.service_start).collect();
        if iw_starts.windows(2).any(|w| w[0] > w[1])
            || ar_starts.windows(2).any(|w| w[0] > w[1])
        {
            return Err("service starts out of order".into());
        }
        if let (Some(last_iw), Some(first_ar)) = (iw_starts.last(), ar_starts.first()) {
            if last_iw > first_ar {
                return Err("initial waiter started after a new arrival".into());
            }
        }
        // realized waits match the virtual wait seen on arrival
        let deps = self.sorted_departures();
        for (i, c) in self.arrivals.iter().enumerate() {
            let ahead = i as u64 + self.q0; // a_at(arrival-) = i
            let k = (ahead + 1).saturating_sub(self.n);
            let v = if k == 0 {
                0.0
            } else {
                (deps[k as usize - 1] - c.arrival).max(0.0)
            };
            if (v - c.wait).abs() > 1e-9 {
                return Err(format!(
                    "wait of arrival {i} is {} but virtual wait was {v}",
                    c.wait
                ));
            }
        }
        Ok(())
    }
}

/// Both sides of the departed-customer balance: the sum over post-0 arrivals
/// of `G(t - start) - G(t - arrival)` against the waiting-headcount integral
/// `∫ (Q(t-s) - n)^+ dF(s)` minus the initial-waiter correction. The
/// integral is evaluated exactly: atoms of F hit the step path at points,
/// and the continuous part is integrated piece by piece where Q is constant.
pub fn verify_prop21(log: &EventLog, service: &Dist, t: f64) -> (f64, f64, f64) {
    let g = |x: f64| if x < 0.0 { 1.0 } else { service.tail(x) };
    let mut lhs = 0.0;
    for c in log.arrivals.iter().filter(|c| c.arrival <= t) {
        lhs += g(t - c.service_start) - g(t - c.arrival);
    }
    let dec = service.decompose();
    let n = log.n as f64;
    let mut integral = 0.0;
    for atom in &dec.atoms {
        if atom.location > 0.0 && atom.location <= t {
            integral += (log.q_at(t - atom.location) as f64 - n).max(0.0) * atom.mass;
        }
    }
    // breakpoints of s -> Q(t - s)
    let mut pts: Vec<f64> = vec![0.0, t];
    for e in &log.events {
        let s = t - e.time;
        if s > 0.0 && s < t {
            pts.push(s);
        }
    }
    pts.sort_by(f64::total_cmp);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let qv = log.q_at(t - 0.5 * (a + b)) as f64;
        integral += (qv - n).max(0.0) * (dec.continuous_cdf(b) - dec.continuous_cdf(a));
    }
    let mut correction = 0.0;
    for c in &log.initial_waiting {
        correction += g(t - c.service_start) - g(t);
    }
    let rhs = integral - correction;
    (lhs, rhs, (lhs - rhs).abs())
}

/// The four scalings of one run.
#[derive(Clone, Debug)]
pub struct ScaledPaths {
    /// `Q / n`.
    pub q_bar: Path,
    /// `(Q - n) / sqrt(n)`.
    pub q_tilde: Path,
    pub q_tilde_plus: Path,
    /// `sqrt(n) * V`.
    pub wait: Path,
}

pub fn scale_paths(log: &EventLog, grid: TimeGrid) -> Result<ScaledPaths, SimError> {
    let n = log.n as f64;
    let q = log.q_path(grid);
    let q_bar = q.scale(1.0 / n);
    let q_tilde = q.map(|v| (v - n) / n.sqrt());
    let q_tilde_plus = q_tilde.positive_part();
    let wait = log.virtual_wait(grid)?.scale(n.sqrt());
    Ok(ScaledPaths {
        q_bar,
        q_tilde,
        q_tilde_plus,
        wait,
    })
}

/// Per-N summary of a square-root-staffing sweep.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: u64,
    /// Median over replications of `sup |q_bar - fluid|`.
    pub median_fluid_gap: f64,
    /// Two-sample KS of the terminal diffusion-scaled headcount against the
    /// Monte-Carlo law of the limit.
    pub ks_vs_limit: f64,
    /// Median sup-norm of the fluid-scaled initial-residual sum.
    pub median_w0: f64,
    /// Median sup-norm of the fluid-scaled service indicator sum.
    pub median_m2: f64,
    /// Per-replication detail backing the medians.
    pub gaps: Vec<f64>,
    pub w0s: Vec<f64>,
    pub m2s: Vec<f64>,
    /// Terminal diffusion-scaled values per replication.
    pub terminals: Vec<f64>,
}

/// Equilibrium-start convergence sweep: for each n, `reps` runs at
/// `q0 = n`, initial residuals from the service equilibrium law.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    beta: f64,
    arrival_base: &Dist,
    service: &Dist,
    ns: &[u64],
    reps: usize,
    limit_draws: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<Vec<ConvergenceRow>, SimError> {
    use crate::diffusion::{solve_limit_convolution, GaussianDriverSampler, Q0Law};

    let fluid = crate::fluid::fluid_limit(
        &crate::fluid::FluidProblem::equilibrium(service, 1.0)?,
        grid,
    )
    .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let sigma2 = arrival_base.variance();
    let sampler = GaussianDriverSampler::new(service, sigma2, Q0Law::Point(0.0), grid)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let t_end = grid.horizon();
    let mut limit_draws_v = Vec::with_capacity(limit_draws);
    for rep in 0..limit_draws {
        let d = sampler.sample(seed ^ 0x9e3779b9, rep as u64)?;
        let z = solve_limit_convolution(&d.zeta, service, beta)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        limit_draws_v.push(z.eval(t_end));
    }
    limit_draws_v.sort_by(f64::total_cmp);

    let mut rows = Vec::new();
    for &n in ns {
        let mut gaps = Vec::with_capacity(reps);
        let mut w0s = Vec::with_capacity(reps);
        let mut m2s = Vec::with_capacity(reps);
        let mut terminals = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut cfg = SimConfig::hw(n, beta, arrival_base, service, t_end, seed)?;
            cfg.replication = rep as u64;
            let log = simulate(&cfg)?;
            let sp = scale_paths(&log, grid)?;
            gaps.push(sp.q_bar.sup_distance(&fluid.total));
            let nf = n as f64;
            w0s.push(log.w0_path(&cfg.initial, grid).sup_norm() / nf);
            m2s.push(log.m2_path(service, grid).sup_norm() / nf);
            terminals.push(sp.q_tilde.eval(t_end));
        }
        let mut sorted_terms = terminals.clone();
        sorted_terms.sort_by(f64::total_cmp);
        rows.push(ConvergenceRow {
            n,
            median_fluid_gap: crate::stats::median(&gaps),
            ks_vs_limit: crate::stats::ks_two_sample(&sorted_terms, &limit_draws_v),
            median_w0: crate::stats::median(&w0s),
            median_m2: crate::stats::median(&m2s),
            gaps,
            w0s,
            m2s,
            terminals,
        });
    }
    Ok(rows)
}
