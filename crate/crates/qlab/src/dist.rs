//! Probability laws on `[0, ∞)` with exact CDF/tail evaluation, atom
//! bookkeeping, equilibrium distributions and sampling.
//!
//! Every solver in this crate integrates against one of these laws, so the
//! CDF is evaluated in closed form per variant. Service-time laws are
//! normalized to mean 1 at construction (see [`Dist::normalized_to_mean1`]).

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::Deserialize;
use thiserror::Error;

/// A point mass: location and probability mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

#[derive(Debug, Error)]
pub enum DistError {
    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),
    #[error("distribution has an atom at zero")]
    AtomAtZero,
    #[error("equilibrium distribution requires mean 1, got {0}")]
    MeanNotOne(f64),
    #[error("empirical file {path}: {msg}")]
    EmpiricalFile { path: String, msg: String },
}

/// The supported law variants. All have support in `(0, ∞)` (no mass at 0).
#[derive(Clone, Debug)]
pub enum Law {
    Exponential { rate: f64 },
    Deterministic { point: f64 },
    Erlang { shape: u32, rate: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    /// Point masses at `span, 2*span, ..` with the given masses (summing to 1).
    Lattice { span: f64, masses: Vec<f64> },
    /// Equal-mass point masses at the given (sorted, positive) locations.
    Empirical { points: Vec<f64> },
    /// Atoms plus a continuous component carrying weight `cont_weight`.
    Mixture {
        atoms: Vec<Atom>,
        cont_weight: f64,
        cont: Box<Law>,
    },
    /// The equilibrium (stationary residual-life) law of a mean-1 inner law.
    EquilibriumOf(Box<Law>),
}

/// An immutable distribution on `[0, ∞)`: closed-form CDF, tail, atoms,
/// equilibrium CDF and sampling. Safe to share across threads.
#[derive(Clone, Debug)]
pub struct Dist {
    law: Law,
    mean: f64,
}

impl Law {
    fn validate(&self) -> Result<(), DistError> {
        use Law::*;
        let bad = |m: &str| Err(DistError::InvalidParameters(m.to_string()));
        match self {
            Exponential { rate } => {
                if !(*rate > 0.0) {
                    return bad("exponential rate must be positive");
                }
            }
            Deterministic { point } => {
                if !(*point > 0.0) {
                    return Err(DistError::AtomAtZero);
                }
            }
            Erlang { shape, rate } => {
                if *shape == 0 || !(*rate > 0.0) {
                    return bad("erlang needs shape >= 1 and positive rate");
                }
            }
            Hyperexponential { weights, rates } => {
                if weights.len() != rates.len() || weights.is_empty() {
                    return bad("hyperexponential weights/rates length mismatch");
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || rates.iter().any(|r| !(*r > 0.0)) {
                    return bad("hyperexponential needs nonnegative weights, positive rates");
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return bad("hyperexponential weights must sum to 1");
                }
            }
            Lattice { span, masses } => {
                if !(*span > 0.0) || masses.is_empty() {
                    return bad("lattice needs positive span and nonempty masses");
                }
                let s: f64 = masses.iter().sum();
                if (s - 1.0).abs() > 1e-9 || masses.iter().any(|m| !(*m >= 0.0)) {
                    return bad("lattice masses must be nonnegative and sum to 1");
                }
            }
            Empirical { points } => {
                if points.is_empty() {
                    return bad("empirical law needs at least one point");
                }
                if points.iter().any(|p| !(*p > 0.0)) {
                    return Err(DistError::AtomAtZero);
                }
                if points.windows(2).any(|w| w[0] > w[1]) {
                    return bad("empirical points must be sorted");
                }
            }
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => {
                if atoms.iter().any(|a| a.location <= 0.0) {
                    return Err(DistError::AtomAtZero);
                }
                let am: f64 = atoms.iter().map(|a| a.mass).sum();
                if (am + cont_weight - 1.0).abs() > 1e-9 || !(*cont_weight >= 0.0) {
                    return bad("mixture weights must sum to 1");
                }
                cont.validate()?;
            }
            EquilibriumOf(inner) => {
                inner.validate()?;
                let m = inner.mean();
                if (m - 1.0).abs() > 1e-6 {
                    return Err(DistError::MeanNotOne(m));
                }
            }
        }
        Ok(())
    }

    fn mean(&self) -> f64 {
        use Law::*;
        match self {
            Exponential { rate } => 1.0 / rate,
            Deterministic { point } => *point,
            Erlang { shape, rate } => f64::from(*shape) / rate,
            Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w / r)
                .sum(),
            Lattice { span, masses } => masses
                .iter()
                .enumerate()
                .map(|(k, m)| m * span * (k + 1) as f64)
                .sum(),
            Empirical { points } => points.iter().sum::<f64>() / points.len() as f64,
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => {
                atoms.iter().map(|a| a.mass * a.location).sum::<f64>() + cont_weight * cont.mean()
            }
            // Mean of the equilibrium law is E[X^2]/2 for a mean-1 X.
            EquilibriumOf(inner) => inner.second_moment() / 2.0,
        }
    }

    fn second_moment(&self) -> f64 {
        use Law::*;
        match self {
            Exponential { rate } => 2.0 / (rate * rate),
            Deterministic { point } => point * point,
            Erlang { shape, rate } => {
                let k = f64::from(*shape);
                k * (k + 1.0) / (rate * rate)
            }
            Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| 2.0 * w / (r * r))
                .sum(),
            Lattice { span, masses } => masses
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let p = span * (k + 1) as f64;
                    m * p * p
                })
                .sum(),
            Empirical { points } => {
                points.iter().map(|p| p * p).sum::<f64>() / points.len() as f64
            }
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => {
                atoms.iter().map(|a| a.mass * a.location * a.location).sum::<f64>()
                    + cont_weight * cont.second_moment()
            }
            // E[X_e^2] = E[X^3]/3; fall back to quadrature of 2 u G(u).
            EquilibriumOf(inner) => {
                let g = |u: f64| 2.0 * u * (1.0 - inner.cdf(u));
                let mut hi = 1.0;
                while 1.0 - inner.cdf(hi) > 1e-12 && hi < 1e6 {
                    hi *= 2.0;
                }
                crate::grid::adaptive_simpson(&g, 0.0, hi, 1e-9)
            }
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        use Law::*;
        if t < 0.0 {
            return 0.0;
        }
        match self {
            Exponential { rate } => 1.0 - (-rate * t).exp(),
            Deterministic { point } => {
                if t >= *point {
                    1.0
                } else {
                    0.0
                }
            }
            Erlang { shape, rate } => {
                // 1 - e^{-rt} sum_{m<k} (rt)^m / m!
                let x = rate * t;
                let mut term = 1.0;
                let mut sum = 1.0;
                for m in 1..*shape {
                    term *= x / f64::from(m);
                    sum += term;
                }
                1.0 - (-x).exp() * sum
            }
            Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (1.0 - (-r * t).exp()))
                .sum(),
            Lattice { span, masses } => {
                let k = (t / span).floor() as usize;
                masses.iter().take(k.min(masses.len())).sum()
            }
            Empirical { points } => {
                // number of points <= t
                let n = points.partition_point(|p| *p <= t);
                n as f64 / points.len() as f64
            }
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => {
                atoms
                    .iter()
                    .filter(|a| a.location <= t)
                    .map(|a| a.mass)
                    .sum::<f64>()
                    + cont_weight * cont.cdf(t)
            }
            EquilibriumOf(inner) => inner.tail_integral(t),
        }
    }

    /// `∫_0^t (1 - F(u)) du`, in closed form per variant.
    fn tail_integral(&self, t: f64) -> f64 {
        use Law::*;
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Exponential { rate } => (1.0 - (-rate * t).exp()) / rate,
            Deterministic { point } => t.min(*point),
            Erlang { shape, rate } => {
                // sum_{j<k} (1/r)(1 - e^{-rt} sum_{m<=j} (rt)^m/m!)
                let x = rate * t;
                let ex = (-x).exp();
                let mut term = 1.0; // (rt)^m / m!
                let mut partial = 1.0; // sum_{m<=j} of term
                let mut total = 0.0;
                for j in 0..*shape {
                    if j > 0 {
                        term *= x / f64::from(j);
                        partial += term;
                    }
                    total += 1.0 - ex * partial;
                }
                total / rate
            }
            Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (1.0 - (-r * t).exp()) / r)
                .sum(),
            Lattice { span, masses } => masses
                .iter()
                .enumerate()
                .map(|(k, m)| m * t.min(span * (k + 1) as f64))
                .sum(),
            Empirical { points } => {
                points.iter().map(|p| t.min(*p)).sum::<f64>() / points.len() as f64
            }
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => {
                atoms.iter().map(|a| a.mass * t.min(a.location)).sum::<f64>()
                    + cont_weight * cont.tail_integral(t)
            }
            // No closed form in general; the tail is continuous and smooth
            // between the inner law's atoms, so adaptive Simpson suffices.
            EquilibriumOf(_) => {
                let g = |u: f64| 1.0 - self.cdf(u);
                crate::grid::adaptive_simpson(&g, 0.0, t, 1e-9)
            }
        }
    }

    fn atoms(&self) -> Vec<Atom> {
        use Law::*;
        match self {
            Exponential { .. } | Erlang { .. } | Hyperexponential { .. } | EquilibriumOf(_) => {
                Vec::new()
            }
            Deterministic { point } => vec![Atom {
                location: *point,
                mass: 1.0,
            }],
            Lattice { span, masses } => masses
                .iter()
                .enumerate()
                .filter(|(_, m)| **m > 0.0)
                .map(|(k, m)| Atom {
                    location: span * (k + 1) as f64,
                    mass: *m,
                })
                .collect(),
            Empirical { points } => {
                // merge duplicates
                let mut out: Vec<Atom> = Vec::new();
                let w = 1.0 / points.len() as f64;
                for p in points {
                    match out.last_mut() {
                        Some(a) if a.location == *p => a.mass += w,
                        _ => out.push(Atom {
                            location: *p,
                            mass: w,
                        }),
                    }
                }
                out
            }
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => {
                let mut out = atoms.clone();
                for a in cont.atoms() {
                    out.push(Atom {
                        location: a.location,
                        mass: a.mass * cont_weight,
                    });
                }
                out.sort_by(|a, b| a.location.total_cmp(&b.location));
                out
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use Law::*;
        match self {
            Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            Deterministic { point } => *point,
            Erlang { shape, rate } => Gamma::new(f64::from(*shape), 1.0 / rate)
                .unwrap()
                .sample(rng),
            Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, r) in weights.iter().zip(rates) {
                    acc += w;
                    if u <= acc {
                        return Exp::new(*r).unwrap().sample(rng);
                    }
                }
                Exp::new(*rates.last().unwrap()).unwrap().sample(rng)
            }
            Lattice { span, masses } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, m) in masses.iter().enumerate() {
                    acc += m;
                    if u <= acc {
                        return span * (k + 1) as f64;
                    }
                }
                span * masses.len() as f64
            }
            Empirical { points } => points[rng.random_range(0..points.len())],
            Mixture {
                atoms,
                cont_weight: _,
                cont,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.mass;
                    if u <= acc {
                        return a.location;
                    }
                }
                cont.sample(rng)
            }
            EquilibriumOf(inner) => {
                // Exponential is its own equilibrium law.
                if let Exponential { rate } = **inner {
                    debug_assert!((rate - 1.0).abs() < 1e-9);
                    return Exp::new(rate).unwrap().sample(rng);
                }
                // Inverse transform by bisection on the continuous CDF
                // t -> tail_integral(t).
                let u: f64 = rng.random();
                let mut hi = 1.0;
                while inner.tail_integral(hi) < u && hi < 1e9 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if inner.tail_integral(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Rescale time by `1/s` (i.e. the law of `X / s`).
    fn scaled(&self, s: f64) -> Law {
        use Law::*;
        match self {
            Exponential { rate } => Exponential { rate: rate * s },
            Deterministic { point } => Deterministic { point: point / s },
            Erlang { shape, rate } => Erlang {
                shape: *shape,
                rate: rate * s,
            },
            Hyperexponential { weights, rates } => Hyperexponential {
                weights: weights.clone(),
                rates: rates.iter().map(|r| r * s).collect(),
            },
            Lattice { span, masses } => Lattice {
                span: span / s,
                masses: masses.clone(),
            },
            Empirical { points } => Empirical {
                points: points.iter().map(|p| p / s).collect(),
            },
            Mixture {
                atoms,
                cont_weight,
                cont,
            } => Mixture {
                atoms: atoms
                    .iter()
                    .map(|a| Atom {
                        location: a.location / s,
                        mass: a.mass,
                    })
                    .collect(),
                cont_weight: *cont_weight,
                cont: Box::new(cont.scaled(s)),
            },
            EquilibriumOf(inner) => EquilibriumOf(inner.clone()),
        }
    }
}

/// Atom list plus continuous-part evaluator, so that `F = F_c + F_d`.
pub struct Decomposition {
    pub atoms: Vec<Atom>,
    dist: Dist,
}

impl Decomposition {
    /// The continuous part `F_c(t) = F(t) - Σ_{p_k <= t} c_k`.
    pub fn continuous_cdf(&self, t: f64) -> f64 {
        let discrete: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location <= t)
            .map(|a| a.mass)
            .sum();
        self.dist.cdf(t) - discrete
    }
}

impl Dist {
    pub fn new(law: Law) -> Result<Dist, DistError> {
        law.validate()?;
        let mean = law.mean();
        Ok(Dist { law, mean })
    }

    /// Mean-1 exponential.
    pub fn exponential1() -> Dist {
        Dist::new(Law::Exponential { rate: 1.0 }).unwrap()
    }

    pub fn deterministic(point: f64) -> Result<Dist, DistError> {
        Dist::new(Law::Deterministic { point })
    }

    /// Mean-1 Erlang with the given shape (rate = shape).
    pub fn erlang1(shape: u32) -> Dist {
        Dist::new(Law::Erlang {
            shape,
            rate: f64::from(shape),
        })
        .unwrap()
    }

    pub fn hyperexponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Dist, DistError> {
        Dist::new(Law::Hyperexponential { weights, rates })
    }

    /// Rescale so the mean is exactly 1.
    pub fn normalized_to_mean1(&self) -> Dist {
        if (self.mean - 1.0).abs() < 1e-15 {
            return self.clone();
        }
        let law = self.law.scaled(self.mean);
        let mean = law.mean();
        Dist { law, mean }
    }

    /// The equilibrium law `F_e` of this (mean-1) law, as a distribution.
    pub fn equilibrium(&self) -> Result<Dist, DistError> {
        if (self.mean - 1.0).abs() > 1e-6 {
            return Err(DistError::MeanNotOne(self.mean));
        }
        Dist::new(Law::EquilibriumOf(Box::new(self.law.clone())))
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.law.second_moment() - self.mean * self.mean
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.law.cdf(t)
    }

    /// `G(t) = 1 - F(t)`; by construction `cdf(t) + tail(t) == 1` exactly.
    pub fn tail(&self, t: f64) -> f64 {
        1.0 - self.law.cdf(t)
    }

    /// `∫_0^t G(u) du` (closed form per variant).
    pub fn tail_integral(&self, t: f64) -> f64 {
        self.law.tail_integral(t)
    }

    /// The equilibrium CDF `F_e(t) = ∫_0^t G(u) du`; requires mean 1.
    pub fn equilibrium_cdf(&self, t: f64) -> Result<f64, DistError> {
        if (self.mean - 1.0).abs() > 1e-6 {
            return Err(DistError::MeanNotOne(self.mean));
        }
        Ok(self.law.tail_integral(t))
    }

    pub fn atoms(&self) -> Vec<Atom> {
        self.law.atoms()
    }

    pub fn has_atoms(&self) -> bool {
        !self.law.atoms().is_empty()
    }

    /// Split into discrete and continuous parts.
    pub fn decompose(&self) -> Decomposition {
        Decomposition {
            atoms: self.law.atoms(),
            dist: self.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.law.sample(rng)
    }
}

/// Tagged config record for a distribution, e.g. `{"kind":"erlang","shape":2}`.
/// Service laws are auto-normalized to mean 1 unless `normalize` is false.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Exponential {
        #[serde(default = "one")]
        rate: f64,
    },
    Deterministic {
        #[serde(default = "one")]
        point: f64,
    },
    Erlang {
        shape: u32,
        rate: Option<f64>,
    },
    Hyperexponential {
        weights: Vec<f64>,
        rates: Vec<f64>,
    },
    Lattice {
        span: f64,
        masses: Vec<f64>,
    },
    /// Newline-delimited file of nonnegative reals.
    Empirical {
        path: String,
    },
}

fn one() -> f64 {
    1.0
}

impl DistSpec {
    pub fn build(&self) -> Result<Dist, DistError> {
        let law = match self {
            DistSpec::Exponential { rate } => Law::Exponential { rate: *rate },
            DistSpec::Deterministic { point } => Law::Deterministic { point: *point },
            DistSpec::Erlang { shape, rate } => Law::Erlang {
                shape: *shape,
                rate: rate.unwrap_or(f64::from(*shape)),
            },
            DistSpec::Hyperexponential { weights, rates } => Law::Hyperexponential {
                weights: weights.clone(),
                rates: rates.clone(),
            },
            DistSpec::Lattice { span, masses } => Law::Lattice {
                span: *span,
                masses: masses.clone(),
            },
            DistSpec::Empirical { path } => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| DistError::EmpiricalFile {
                        path: path.clone(),
                        msg: e.to_string(),
                    })?;
                let mut points = Vec::new();
                for line in text.lines() {
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    let v: f64 = line.parse().map_err(|_| DistError::EmpiricalFile {
                        path: path.clone(),
                        msg: format!("bad value {line:?}"),
                    })?;
                    points.push(v);
                }
                points.sort_by(f64::total_cmp);
                Law::Empirical { points }
            }
        };
        Dist::new(law)
    }

    /// Build and normalize to mean 1 (the Halfin-Whitt convention).
    pub fn build_mean1(&self) -> Result<Dist, DistError> {
        Ok(self.build()?.normalized_to_mean1())
    }
}

/// Parse a CLI shorthand (`exp1`, `det1`, `erlang2`, `h2`) or a JSON spec file.
pub fn dist_from_name(name: &str) -> Result<Dist, DistError> {
    match name {
        "exp1" | "exp" | "exponential" | "mm" => Ok(Dist::exponential1()),
        "det1" | "det" | "deterministic" => Dist::deterministic(1.0),
        "erlang2" => Ok(Dist::erlang1(2)),
        "erlang3" => Ok(Dist::erlang1(3)),
        "erlang4" => Ok(Dist::erlang1(4)),
        "h2" | "hyper" => {
            // balanced two-phase hyperexponential, rebalanced to mean 1
            Dist::hyperexponential(vec![0.5, 0.5], vec![0.5, 1.5])
                .map(|d| d.normalized_to_mean1())
        }
        path if std::path::Path::new(path).exists() => {
            let text = std::fs::read_to_string(path).map_err(|e| DistError::EmpiricalFile {
                path: path.to_string(),
                msg: e.to_string(),
            })?;
            let spec: DistSpec =
                serde_json::from_str(&text).map_err(|e| DistError::InvalidParameters(
                    format!("{path}: {e}"),
                ))?;
            spec.build_mean1()
        }
        other => Err(DistError::InvalidParameters(format!(
            "unknown distribution {other:?}"
        ))),
    }
}
