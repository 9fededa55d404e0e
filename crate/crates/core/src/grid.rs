//! Grid densities and the regularity functionals of standard pairs.
//!
//! Two representations are used. [`GridDensity`] stores complex samples on
//! uniform nodes and is the working type for transfer-operator output and
//! full-circle densities. [`PolarGrid`] stores modulus and unwrapped phase
//! separately; standard-pair densities are of the form `|ρ| e^{iΘ}` with a
//! smooth modulus and a steep but smooth phase, and the polar form keeps both
//! components piecewise-linear-representable at moderate node counts.

use crate::error::{Error, Result};
use crate::interval::{wrap_unit, Interval};
use crate::Complex;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const MIN_NODES: usize = 16;

/// Complex density sampled on `n` uniform nodes over `[lo, hi]`, both
/// endpoints included. For a full-circle density (`[0, 1]`) the last node
/// duplicates the first, which makes the trapezoid rule the periodic rule.
#[derive(Clone, Debug)]
pub struct GridDensity {
    interval: Interval,
    values: Vec<Complex>,
}

impl GridDensity {
    pub fn new(interval: Interval, values: Vec<Complex>) -> Result<GridDensity> {
        if values.len() < MIN_NODES {
            return Err(Error::InvalidDensity(format!(
                "need at least {MIN_NODES} nodes, got {}",
                values.len()
            )));
        }
        if interval.len() > 1.0 + 1e-9 {
            return Err(Error::InvalidDensity("support longer than the circle".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidDensity("non-finite sample".into()));
        }
        Ok(GridDensity { interval, values })
    }

    pub fn from_fn(interval: Interval, n: usize, f: impl Fn(f64) -> Complex) -> Result<GridDensity> {
        let values = (0..n)
            .map(|i| f(interval.lerp(i as f64 / (n - 1) as f64)))
            .collect();
        GridDensity::new(interval, values)
    }

    pub fn full_circle_from_fn(n: usize, f: impl Fn(f64) -> Complex) -> Result<GridDensity> {
        GridDensity::from_fn(Interval::UNIT, n, f)
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn values(&self) -> &[Complex] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex] {
        &mut self.values
    }

    pub fn resolution(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        self.interval.len() / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.interval.lerp(i as f64 / (self.values.len() - 1) as f64)
    }

    pub fn is_full_circle(&self) -> bool {
        self.interval.lo.abs() < 1e-12 && (self.interval.hi - 1.0).abs() < 1e-12
    }

    /// Linear interpolation inside the support; zero outside. Full-circle
    /// densities wrap the argument.
    pub fn eval(&self, x: f64) -> Complex {
        let x = if self.is_full_circle() { wrap_unit(x) } else { x };
        if !self.interval.contains_closed(x) {
            return Complex::new(0.0, 0.0);
        }
        let t = self.interval.unlerp(x) * (self.values.len() - 1) as f64;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// `∫ |ρ|` by the composite trapezoid rule.
    pub fn l1_mass(&self) -> f64 {
        trapezoid(self.spacing(), self.values.iter().map(|v| v.norm()))
    }

    /// `∫ ρ` (complex trapezoid).
    pub fn integral(&self) -> Complex {
        let h = self.spacing();
        let n = self.values.len();
        let mut acc = (self.values[0] + self.values[n - 1]) * 0.5;
        for v in &self.values[1..n - 1] {
            acc += *v;
        }
        acc * h
    }

    pub fn scale(&mut self, c: Complex) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// CSV rows `node,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,re,im")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", self.node(i), v.re, v.im)?;
        }
        Ok(())
    }
}

/// Regularity estimates for a density: `H(ρ)` (log-modulus Hölder quotient),
/// the sup of `|arg(ρ)'|`, the L¹ mass, and the modulus extremes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    pub l1_mass: f64,
    pub holder_log: f64,
    pub arg_slope: f64,
    pub inf_mod: f64,
    pub sup_mod: f64,
}

/// Estimate regularity of a complex grid density.
///
/// `H(ρ)` is maximized over node pairs at dyadic separations; the argument
/// derivative uses centered differences after reducing adjacent phase jumps
/// mod 2π into `(-π, π]`. Errors on a vanishing modulus node.
pub fn regularity(g: &GridDensity, alpha: f64) -> Result<RegularityReport> {
    let moduli: Vec<f64> = g.values().iter().map(|v| v.norm()).collect();
    if let Some(node) = moduli.iter().position(|&m| m == 0.0) {
        return Err(Error::DegenerateDensity { node });
    }
    let phases: Vec<f64> = unwrap_phases(g.values().iter().map(|v| v.arg()));
    let logm: Vec<f64> = moduli.iter().map(|&m| m.ln()).collect();
    let h = g.spacing();
    let holder_log = holder_quotient(&logm, h, alpha);
    let arg_slope = sup_abs_slope(&phases, h);
    let inf_mod = moduli.iter().copied().fold(f64::INFINITY, f64::min);
    let sup_mod = moduli.iter().copied().fold(0.0, f64::max);
    Ok(RegularityReport {
        l1_mass: g.l1_mass(),
        holder_log,
        arg_slope,
        inf_mod,
        sup_mod,
    })
}

/// `a`-comparability check of Lemma-Fed type: `inf_I |ρ|`, `Avg_J |ρ|`,
/// `Avg_{J'} |ρ|`, `sup_I |ρ|` must be pairwise `a`-comparable.
///
/// Precondition `H(ρ) <= a` is validated and rejected as a contract violation.
pub fn comparability_check(
    g: &GridDensity,
    alpha: f64,
    a: f64,
    j1: Interval,
    j2: Interval,
) -> Result<bool> {
    let report = regularity(g, alpha)?;
    if report.holder_log > a * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Precondition(format!(
            "H(rho) = {:.6} exceeds a = {a}",
            report.holder_log
        )));
    }
    for j in [j1, j2] {
        if j.len() <= 0.0 || !g.interval().contains_closed(j.lo) || !g.interval().contains_closed(j.hi)
        {
            return Err(Error::Precondition("subinterval outside support".into()));
        }
    }
    let avg1 = average_abs(g, j1);
    let avg2 = average_abs(g, j2);
    let quants = [report.inf_mod, avg1, avg2, report.sup_mod];
    let ea = a.exp() * (1.0 + 1e-12);
    for &p in &quants {
        for &q in &quants {
            if q > ea * p + 1e-300 && !(q <= ea * p) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn average_abs(g: &GridDensity, j: Interval) -> f64 {
    // Quadrature of |ρ| over j using the grid with endpoint interpolation.
    let n = ((j.len() / g.spacing()).ceil() as usize + 2).max(8);
    let mut acc = 0.0;
    for k in 0..=n {
        let x = j.lerp(k as f64 / n as f64);
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * g.eval(x).norm();
    }
    acc * j.len() / n as f64 / j.len()
}

/// Modulus and unwrapped phase on uniform nodes; the polar counterpart of
/// [`GridDensity`] used for standard-pair densities.
#[derive(Clone, Debug)]
pub struct PolarGrid {
    interval: Interval,
    modulus: Vec<f64>,
    phase: Vec<f64>,
}

impl PolarGrid {
    pub fn new(interval: Interval, modulus: Vec<f64>, phase: Vec<f64>) -> Result<PolarGrid> {
        if modulus.len() != phase.len() {
            return Err(Error::InvalidDensity("modulus/phase length mismatch".into()));
        }
        if modulus.len() < MIN_NODES {
            return Err(Error::InvalidDensity(format!(
                "need at least {MIN_NODES} nodes, got {}",
                modulus.len()
            )));
        }
        if let Some(node) = modulus.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::DegenerateDensity { node });
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDensity("non-finite phase".into()));
        }
        Ok(PolarGrid { interval, modulus, phase })
    }

    pub fn from_fns(
        interval: Interval,
        n: usize,
        mod_fn: impl Fn(f64) -> f64,
        phase_fn: impl Fn(f64) -> f64,
    ) -> Result<PolarGrid> {
        let xs = |i: usize| interval.lerp(i as f64 / (n - 1) as f64);
        let modulus = (0..n).map(|i| mod_fn(xs(i))).collect();
        let phase = (0..n).map(|i| phase_fn(xs(i))).collect();
        PolarGrid::new(interval, modulus, phase)
    }

    /// Unwrap a complex grid into polar form. Adjacent phase jumps must stay
    /// below π, i.e. the grid must respect the phase-resolution policy.
    pub fn from_grid_density(g: &GridDensity) -> Result<PolarGrid> {
        let modulus: Vec<f64> = g.values().iter().map(|v| v.norm()).collect();
        let phase = unwrap_phases(g.values().iter().map(|v| v.arg()));
        PolarGrid::new(g.interval(), modulus, phase)
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn len_nodes(&self) -> usize {
        self.modulus.len()
    }

    pub fn spacing(&self) -> f64 {
        self.interval.len() / (self.modulus.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.interval.lerp(i as f64 / (self.modulus.len() - 1) as f64)
    }

    pub fn modulus(&self) -> &[f64] {
        &self.modulus
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    /// Linear interpolation of modulus and phase at `x` inside the support.
    pub fn eval_polar(&self, x: f64) -> (f64, f64) {
        let t = self.interval.unlerp(x).clamp(0.0, 1.0) * (self.modulus.len() - 1) as f64;
        let i = (t.floor() as usize).min(self.modulus.len() - 2);
        let frac = t - i as f64;
        (
            self.modulus[i] * (1.0 - frac) + self.modulus[i + 1] * frac,
            self.phase[i] * (1.0 - frac) + self.phase[i + 1] * frac,
        )
    }

    pub fn eval_complex(&self, x: f64) -> Complex {
        let (m, p) = self.eval_polar(x);
        Complex::from_polar(m, p)
    }

    pub fn l1_mass(&self) -> f64 {
        trapezoid(self.spacing(), self.modulus.iter().copied())
    }

    /// Divide the modulus by `z` (mass renormalization).
    pub fn scale_modulus(&mut self, z: f64) {
        for m in &mut self.modulus {
            *m /= z;
        }
    }

    pub fn regularity(&self, alpha: f64) -> RegularityReport {
        let logm: Vec<f64> = self.modulus.iter().map(|&m| m.ln()).collect();
        let h = self.spacing();
        RegularityReport {
            l1_mass: self.l1_mass(),
            holder_log: holder_quotient(&logm, h, alpha),
            arg_slope: sup_abs_slope(&self.phase, h),
            inf_mod: self.modulus.iter().copied().fold(f64::INFINITY, f64::min),
            sup_mod: self.modulus.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn to_grid_density(&self) -> GridDensity {
        let values = self
            .modulus
            .iter()
            .zip(&self.phase)
            .map(|(&m, &p)| Complex::from_polar(m, p))
            .collect();
        GridDensity { interval: self.interval, values }
    }
}

pub fn trapezoid(h: f64, values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.5 * (vals[0] + vals[n - 1]);
    for v in &vals[1..n - 1] {
        acc += v;
    }
    acc * h
}

/// Reduce adjacent phase jumps mod 2π into `(-π, π]` and accumulate.
pub fn unwrap_phases(raw: impl Iterator<Item = f64>) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let mut out = Vec::new();
    let mut prev_raw = 0.0;
    let mut prev = 0.0;
    for (i, p) in raw.enumerate() {
        if i == 0 {
            out.push(p);
            prev_raw = p;
            prev = p;
            continue;
        }
        let mut d = (p - prev_raw) % tau;
        if d > std::f64::consts::PI {
            d -= tau;
        } else if d <= -std::f64::consts::PI {
            d += tau;
        }
        prev += d;
        prev_raw = p;
        out.push(prev);
    }
    out
}

/// Max over dyadic-separation node pairs of `|v_i - v_j| / (|x_i - x_j|)^alpha`.
fn holder_quotient(vals: &[f64], h: f64, alpha: f64) -> f64 {
    let n = vals.len();
    let mut best: f64 = 0.0;
    let mut m = n - 1;
    while m >= 1 {
        let sep = (m as f64 * h).powf(alpha);
        for i in 0..n - m {
            best = best.max((vals[i + m] - vals[i]).abs() / sep);
        }
        if m == 1 {
            break;
        }
        m /= 2;
    }
    best
}

/// Sup of |slope| by centered differences (one-sided at the ends).
fn sup_abs_slope(vals: &[f64], h: f64) -> f64 {
    let n = vals.len();
    let mut best: f64 = (vals[1] - vals[0]).abs() / h;
    best = best.max((vals[n - 1] - vals[n - 2]).abs() / h);
    for i in 1..n - 1 {
        best = best.max((vals[i + 1] - vals[i - 1]).abs() / (2.0 * h));
    }
    best
}

/// Minimum node count for resolving a phase with slope bound `phase_slope`
/// over a support of length `len`: `N >= 16 * phase_slope * len / π`.
pub fn phase_policy_nodes(phase_slope: f64, len: f64) -> usize {
    let n = (16.0 * phase_slope.abs() * len / std::f64::consts::PI).ceil() as usize;
    n.max(MIN_NODES)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn mass_of_constant_on_half_interval() {
        let g = GridDensity::from_fn(Interval::new(0.0, 0.5), 64, |_| c(1.0, 0.0)).unwrap();
        assert!((g.l1_mass() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mass_of_unit_modulus_phase() {
        let tau = std::f64::consts::TAU;
        let g = GridDensity::full_circle_from_fn(4096, |x| Complex::from_polar(1.0, tau * x))
            .unwrap();
        assert!((g.l1_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_of_linear_density() {
        let g = GridDensity::full_circle_from_fn(4096, |x| c(x, 0.0)).unwrap();
        // Exact integral 0.5; trapezoid of |x| is exact on a linear integrand,
        // but the duplicated endpoint carries value 1 at x = 1. Quadrature
        // error stays far below 1e-8 at N = 2^12.
        assert!((g.l1_mass() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn regularity_constant() {
        let g = GridDensity::from_fn(Interval::new(0.2, 0.7), 64, |_| c(0.0, 2.0)).unwrap();
        let r = regularity(&g, 1.0).unwrap();
        assert_eq!(r.holder_log, 0.0);
        assert_eq!(r.arg_slope, 0.0);
    }

    #[test]
    fn regularity_pure_phase() {
        // ρ = e^{ibx} with b = 50 on [0, 0.1): H = 0, arg slope = 50.
        let g = GridDensity::from_fn(Interval::new(0.0, 0.1), 64, |x| {
            Complex::from_polar(1.0, 50.0 * x)
        })
        .unwrap();
        let r = regularity(&g, 1.0).unwrap();
        assert!(r.holder_log < 1e-9);
        assert!((r.arg_slope - 50.0).abs() < 1e-6);
    }

    #[test]
    fn regularity_exponential_modulus() {
        let g = GridDensity::from_fn(Interval::new(0.0, 0.1), 128, |x| c(x.exp(), 0.0)).unwrap();
        let r = regularity(&g, 1.0).unwrap();
        assert!((r.holder_log - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_density_rejected() {
        let mut vals = vec![c(1.0, 0.0); 32];
        vals[7] = c(0.0, 0.0);
        let g = GridDensity::new(Interval::new(0.0, 0.5), vals).unwrap();
        assert!(matches!(
            regularity(&g, 1.0),
            Err(Error::DegenerateDensity { node: 7 })
        ));
    }

    #[test]
    fn comparability_constant_and_exponential() {
        let g = GridDensity::full_circle_from_fn(512, |_| c(3.0, 0.0)).unwrap();
        assert!(comparability_check(&g, 1.0, 0.0, Interval::new(0.1, 0.2), Interval::new(0.7, 0.9))
            .unwrap());

        let g = GridDensity::full_circle_from_fn(2048, |x| c(x.exp(), 0.0)).unwrap();
        assert!(comparability_check(&g, 1.0, 1.0, Interval::new(0.0, 0.1), Interval::new(0.9, 1.0))
            .unwrap());
        // Precondition H <= a fails for a = 0.05.
        assert!(matches!(
            comparability_check(&g, 1.0, 0.05, Interval::new(0.0, 0.1), Interval::new(0.9, 1.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn quadrature_richardson() {
        // Doubling N changes the mass by <= C / N^2 for C¹ integrands.
        let f = |x: f64| c((std::f64::consts::TAU * x).sin() + 2.0, 0.5 * x);
        let masses: Vec<f64> = [256usize, 512, 1024, 2048]
            .iter()
            .map(|&n| GridDensity::full_circle_from_fn(n, f).unwrap().l1_mass())
            .collect();
        let d1 = (masses[1] - masses[0]).abs();
        let d2 = (masses[2] - masses[1]).abs();
        let d3 = (masses[3] - masses[2]).abs();
        assert!(d2 < d1 * 0.3 + 1e-14);
        assert!(d3 < d2 * 0.3 + 1e-14);
    }

    #[test]
    fn phase_unwrapping_recovers_linear_phase() {
        let b = 40.0;
        let iv = Interval::new(0.0, 1.0);
        let n = phase_policy_nodes(b, 1.0).max(16 * 40);
        let g = GridDensity::from_fn(iv, n, |x| Complex::from_polar(1.0, b * x)).unwrap();
        let p = PolarGrid::from_grid_density(&g).unwrap();
        for i in 0..p.len_nodes() {
            let x = p.node(i);
            let expect = b * x;
            let diff = (p.phase()[i] - expect).abs();
            assert!(diff < 1e-8, "node {i}: {diff:.3e}");
        }
    }

    #[test]
    fn polar_grid_round_trip() {
        let iv = Interval::new(0.25, 0.5);
        let p = PolarGrid::from_fns(iv, 64, |x| 1.0 + x, |x| 30.0 * x * x).unwrap();
        let g = p.to_grid_density();
        let p2 = PolarGrid::from_grid_density(&g).unwrap();
        for i in 0..p.len_nodes() {
            assert!((p.modulus()[i] - p2.modulus()[i]).abs() < 1e-12);
            // Unwrapped phases agree up to a global 2π multiple.
            let d = p.phase()[i] - p2.phase()[i];
            let d0 = p.phase()[0] - p2.phase()[0];
            assert!((d - d0).abs() < 1e-9);
        }
    }

    #[test]
    fn lemma_fed_property_random_log_lipschitz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a: f64 = rng.random_range(0.3..3.0);
            let k1: f64 = rng.random_range(0.5..2.0);
            let k2: f64 = rng.random_range(0.5..3.0);
            let scale = a / (k1 * std::f64::consts::TAU + k2 * 2.0) * 0.9;
            let g = GridDensity::full_circle_from_fn(1024, |x| {
                let s = scale * ((std::f64::consts::TAU * k1 * x).sin() + k2 * (x - 0.5));
                c(s.exp(), 0.0)
            })
            .unwrap();
            let r = regularity(&g, 1.0).unwrap();
            if r.holder_log <= a {
                let j1 = Interval::new(rng.random_range(0.0..0.5), rng.random_range(0.5..0.7));
                let j2 = Interval::new(rng.random_range(0.7..0.8), rng.random_range(0.8..1.0));
                assert!(comparability_check(&g, 1.0, a, j1, j2).unwrap());
            }
        }
    }
}
