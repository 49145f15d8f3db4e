//! Uniform time grids, piecewise-constant cadlag paths and
//! Riemann-Stieltjes convolution against distributions.
//!
//! Paths are cadlag step functions sampled at `t_k = k h`. Stieltjes sums
//! evaluate the integrand at the left (causal) endpoint `g(t_k - s_j)` with
//! `s_j` the right edge of each increment; atoms are snapped to the nearest
//! grid point so point masses contribute exactly their mass.

use crate::dist::Dist;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: horizon {horizon}, step {step}")]
    InvalidGrid { horizon: f64, step: f64 },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("distribution has an atom at 0 after grid snapping")]
    AtomAtZero,
    #[error("path length {len} does not match grid ({points} points)")]
    LengthMismatch { len: usize, points: usize },
}

/// Uniform grid `t_k = k h`, `k = 0..=steps`, covering `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    step: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, step: f64) -> Result<TimeGrid, GridError> {
        if !(step > 0.0) || horizon < step {
            return Err(GridError::InvalidGrid { horizon, step });
        }
        let steps = (horizon / step - 1e-9).ceil() as usize;
        Ok(TimeGrid { step, steps })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of grid points (`steps + 1`).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.steps as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }

    /// Index of the grid point nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        ((t / self.step).round() as usize).min(self.steps)
    }

    /// Largest index with `t_k <= t` (cadlag lookup).
    pub fn floor_index(&self, t: f64) -> usize {
        ((t / self.step + 1e-9).floor() as usize).min(self.steps)
    }
}

/// A cadlag sample on a [`TimeGrid`], piecewise constant between points.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Path, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                len: values.len(),
                points: grid.len(),
            });
        }
        Ok(Path { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Path {
        let values = grid.points().map(f).collect();
        Path { grid, values }
    }

    pub fn zeros(grid: TimeGrid) -> Path {
        Path {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Path {
        Path {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// The identity path `e(t) = t`.
    pub fn identity(grid: TimeGrid) -> Path {
        Path::from_fn(grid, |t| t)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cadlag evaluation: the value at the largest grid point `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.grid.floor_index(t)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Path) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Path {
        Path {
            grid: self.grid,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Path, f: impl Fn(f64, f64) -> f64) -> Result<Path, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(Path {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Path) -> Result<Path, GridError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Path) -> Result<Path, GridError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Path {
        self.map(|v| c * v)
    }

    /// Pointwise positive part.
    pub fn positive_part(&self) -> Path {
        self.map(|v| v.max(0.0))
    }

    /// Left-Riemann running integral `t_k -> Σ_{j<k} v_j h`.
    pub fn cumulative_integral(&self) -> Path {
        let h = self.grid.step;
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        for v in &self.values {
            out.push(acc);
            acc += v * h;
        }
        Path {
            grid: self.grid,
            values: out,
        }
    }
}

/// Grid increments `ΔB_j = B(s_j) - B(s_{j-1})` of a distribution, with atoms
/// snapped to their nearest grid point. `ΔB_0 = 0` always; an atom that snaps
/// to index 0 is an error (the solvers need strictly causal increments).
pub fn grid_increments(d: &Dist, grid: TimeGrid) -> Result<Vec<f64>, GridError> {
    let dec = d.decompose();
    let n = grid.len();
    let mut inc = vec![0.0; n];
    let mut prev = 0.0;
    for (j, slot) in inc.iter_mut().enumerate().skip(1) {
        let fc = dec.continuous_cdf(grid.point(j));
        *slot = fc - prev;
        prev = fc;
    }
    for a in &dec.atoms {
        let j = grid.nearest_index(a.location);
        // atoms beyond the horizon never enter any sum on this grid
        if a.location > grid.horizon() + grid.step / 2.0 {
            continue;
        }
        if j == 0 {
            return Err(GridError::AtomAtZero);
        }
        inc[j] += a.mass;
    }
    Ok(inc)
}

/// Causal discrete convolution `t_k -> Σ_{j=1..k} g(t_{k-j}) inc_j`.
pub fn conv_with_increments(g: &Path, inc: &[f64]) -> Path {
    let n = g.len();
    debug_assert_eq!(inc.len(), n);
    let gv = g.values();
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += gv[k - j] * inc[j];
        }
        *o = acc;
    }
    Path {
        grid: g.grid(),
        values: out,
    }
}

/// Riemann-Stieltjes convolution `t_k -> ∫_0^{t_k} g(t_k - s) dB(s)`.
pub fn stieltjes_conv(g: &Path, b: &Dist) -> Result<Path, GridError> {
    let inc = grid_increments(b, g.grid())?;
    Ok(conv_with_increments(g, &inc))
}

/// `t -> ∫_0^t G(t - s) dx(s)` by integration by parts:
/// `G(0) x(t) - x(0) G(t) - ∫_0^t x(t-s) dG(s)`, the last term evaluated as
/// a Stieltjes convolution against `dF` with opposite sign.
pub fn tail_integral_by_parts(x: &Path, d: &Dist) -> Result<Path, GridError> {
    let conv = stieltjes_conv(x, d)?;
    let x0 = x.values()[0];
    let grid = x.grid();
    let values = x
        .values()
        .iter()
        .zip(conv.values())
        .enumerate()
        .map(|(k, (xv, cv))| xv - x0 * d.tail(grid.point(k)) - cv)
        .collect();
    Ok(Path { grid, values })
}

/// Adaptive composite Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
        }
    }
    if a >= b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid01(horizon: f64) -> TimeGrid {
        TimeGrid::new(horizon, 0.01).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(5.0, 0.01).unwrap();
        assert_eq!(g.len(), 501);
        assert_abs_diff_eq!(g.horizon(), 5.0, epsilon = 1e-12);
        assert!(TimeGrid::new(0.0, 0.01).is_err());
        assert!(TimeGrid::new(1.0, -0.1).is_err());
    }

    #[test]
    fn conv_constant_integrand_recovers_cdf() {
        // g = 1, any B -> t |-> B(t)
        for d in [
            Dist::exponential1(),
            Dist::deterministic(1.0).unwrap(),
            Dist::erlang1(2),
        ] {
            let g = Path::constant(grid01(3.0), 1.0);
            let out = stieltjes_conv(&g, &d).unwrap();
            for (k, v) in out.values().iter().enumerate() {
                let t = out.grid().point(k);
                assert_abs_diff_eq!(*v, d.cdf(t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conv_point_mass_shifts() {
        // g(t) = t, B = deterministic(1) -> (t - 1)^+
        let g = Path::identity(grid01(3.0));
        let d = Dist::deterministic(1.0).unwrap();
        let out = stieltjes_conv(&g, &d).unwrap();
        for (k, v) in out.values().iter().enumerate() {
            let t = out.grid().point(k);
            assert_abs_diff_eq!(*v, (t - 1.0).max(0.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn conv_exponential_closed_form() {
        // g(t) = e^{-t}, B = exp(1): ∫_0^t e^{-(t-s)} e^{-s} ds = t e^{-t}
        let grid = grid01(2.0);
        let g = Path::from_fn(grid, |t| (-t).exp());
        let d = Dist::exponential1();
        let out = stieltjes_conv(&g, &d).unwrap();
        let t = 1.0;
        let k = grid.nearest_index(t);
        assert!((out.values()[k] - t * (-t).exp()).abs() <= 10.0 * grid.step());
    }

    #[test]
    fn conv_atom_at_zero_rejected() {
        let g = Path::identity(grid01(1.0));
        // deterministic with point below h/2 snaps to index 0
        let d = Dist::deterministic(0.004).unwrap();
        assert!(matches!(
            stieltjes_conv(&g, &d),
            Err(GridError::AtomAtZero)
        ));
    }

    #[test]
    fn tibp_identity_exponential() {
        // x = e, G of exp(1): ∫_0^t e^{-(t-s)} ds = 1 - e^{-t}
        let grid = grid01(3.0);
        let x = Path::identity(grid);
        let out = tail_integral_by_parts(&x, &Dist::exponential1()).unwrap();
        for (k, v) in out.values().iter().enumerate() {
            let t = grid.point(k);
            assert!((*v - (1.0 - (-t).exp())).abs() <= 10.0 * grid.step());
        }
    }

    #[test]
    fn tibp_zero_and_deterministic() {
        let grid = grid01(3.0);
        let zero = Path::zeros(grid);
        let out = tail_integral_by_parts(&zero, &Dist::exponential1()).unwrap();
        assert_eq!(out.sup_norm(), 0.0);

        // x = e, G of deterministic(1) -> min(t, 1)
        let x = Path::identity(grid);
        let out = tail_integral_by_parts(&x, &Dist::deterministic(1.0).unwrap()).unwrap();
        for (k, v) in out.values().iter().enumerate() {
            let t = grid.point(k);
            assert_abs_diff_eq!(*v, t.min(1.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn tibp_matches_equilibrium_cdf_all_variants() {
        // ∫_0^t G(t-s) de(s) = F_e(t) within 10 h
        let grid = grid01(4.0);
        let e = Path::identity(grid);
        for d in [
            Dist::exponential1(),
            Dist::deterministic(1.0).unwrap(),
            Dist::erlang1(2),
            crate::dist::dist_from_name("h2").unwrap(),
        ] {
            let out = tail_integral_by_parts(&e, &d).unwrap();
            for (k, v) in out.values().iter().enumerate() {
                let t = grid.point(k);
                assert!(
                    (*v - d.equilibrium_cdf(t).unwrap()).abs() <= 10.0 * grid.step(),
                    "variant {:?} at t={t}",
                    d.law()
                );
            }
        }
    }

    #[test]
    fn mass_bound() {
        let grid = grid01(3.0);
        let g = Path::from_fn(grid, |t| (2.0 * t).sin());
        let d = Dist::erlang1(2);
        let out = stieltjes_conv(&g, &d).unwrap();
        assert!(out.sup_norm() <= g.sup_norm() * d.cdf(grid.horizon()) + 1e-12);
    }

    #[test]
    fn grid_refinement_first_order() {
        // Richardson ratio ~ 2 for the exponential example
        let t = 1.0f64;
        let exact = t * (-t).exp();
        let err = |h: f64| {
            let grid = TimeGrid::new(2.0, h).unwrap();
            let g = Path::from_fn(grid, |u| (-u).exp());
            let out = stieltjes_conv(&g, &Dist::exponential1()).unwrap();
            (out.values()[grid.nearest_index(t)] - exact).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn simpson_known_integrals() {
        assert_abs_diff_eq!(
            adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10),
            2.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 50.0, 1e-10),
            1.0,
            epsilon = 1e-8
        );
    }

    proptest! {
        #[test]
        fn conv_linearity(alpha in -3.0f64..3.0, vals1 in proptest::collection::vec(-5.0f64..5.0, 51), vals2 in proptest::collection::vec(-5.0f64..5.0, 51)) {
            let grid = TimeGrid::new(0.5, 0.01).unwrap();
            let g1 = Path::new(grid, vals1).unwrap();
            let g2 = Path::new(grid, vals2).unwrap();
            let d = Dist::exponential1();
            let lhs = stieltjes_conv(&g1.scale(alpha).add(&g2).unwrap(), &d).unwrap();
            let rhs = stieltjes_conv(&g1, &d).unwrap().scale(alpha)
                .add(&stieltjes_conv(&g2, &d).unwrap()).unwrap();
            prop_assert!(lhs.sup_distance(&rhs) <= 1e-12);
        }
    }
}
