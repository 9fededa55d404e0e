//! Correlation experiments for the skew product.
//!
//! `cor(n) = ∫ φ · ψ∘F^n dν − ∫φ dν ∫ψ dν` with `ν = μ × m`. Two routes are
//! implemented: the mode route pairs evolved vertical Fourier modes
//! `L_{2πk}^n(℘ φ̂_k)` against `ψ̂_{-k}` and stays resolved for all `n`; the
//! direct route quadratures `φ · ψ∘F^n` on a tensor grid and is only valid
//! while the expansion has not outrun the grid (`e^{λn} ≲ N`), failing with
//! a resolution error beyond that.

use crate::dynamics::SkewProduct;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{trapezoid, GridDensity};
use crate::interval::Interval;
use crate::transfer::{
    invariant_density, phase_policy_nodes_for, spectral_radius_estimate, SpectralEstimate,
    TransferOperator,
};
use crate::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Smoothness tag for a 2D observable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    CAlpha,
    C2,
    C3,
}

type Evaluator2D = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A real observable on the torus with its vertical Fourier data.
#[derive(Clone)]
pub struct Observable2D {
    eval: Evaluator2D,
    pub smoothness: Smoothness,
    /// Analytic vertical modes, when known: `(k, coefficient function of x)`.
    modes: Option<Vec<(i64, Arc<dyn Fn(f64) -> Complex + Send + Sync>)>>,
}

impl Observable2D {
    pub fn new(
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        smoothness: Smoothness,
    ) -> Observable2D {
        Observable2D { eval: Arc::new(eval), smoothness, modes: None }
    }

    /// `cos 2π(x + y)`: the single-mode test observable (modes ±1).
    pub fn cos_xy() -> Observable2D {
        let tau = std::f64::consts::TAU;
        Observable2D {
            eval: Arc::new(move |x, y| (tau * (x + y)).cos()),
            smoothness: Smoothness::C3,
            modes: Some(vec![
                (
                    1,
                    Arc::new(move |x: f64| Complex::from_polar(0.5, tau * x))
                        as Arc<dyn Fn(f64) -> Complex + Send + Sync>,
                ),
                (-1, Arc::new(move |x: f64| Complex::from_polar(0.5, -tau * x))),
            ]),
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }

    /// Vertical Fourier coefficient `φ̂_k(x) = ∫ φ(x, y) e^{-2πiky} dy`,
    /// sampled on `nx` x-nodes (analytic modes used when available).
    pub fn fourier_mode(&self, k: i64, nx: usize, ny: usize) -> Result<GridDensity> {
        if let Some(modes) = &self.modes {
            if let Some((_, f)) = modes.iter().find(|(kk, _)| *kk == k) {
                let f = f.clone();
                return GridDensity::full_circle_from_fn(nx, move |x| f(x));
            }
            return GridDensity::full_circle_from_fn(nx, |_| Complex::new(0.0, 0.0));
        }
        let tau = std::f64::consts::TAU;
        let eval = self.eval.clone();
        GridDensity::full_circle_from_fn(nx, move |x| {
            let mut acc = Complex::new(0.0, 0.0);
            for j in 0..ny {
                let y = j as f64 / ny as f64;
                acc += Complex::from_polar(1.0, -tau * k as f64 * y) * eval(x, y);
            }
            acc / ny as f64
        })
    }

    /// `‖φ̂_k‖_{C^α}` estimate (`sup + Hölder seminorm` over dyadic pairs).
    pub fn mode_calpha_norm(&self, k: i64, alpha: f64, nx: usize, ny: usize) -> Result<f64> {
        let g = self.fourier_mode(k, nx, ny)?;
        let vals = g.values();
        let n = vals.len();
        let h = g.spacing();
        let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut seminorm = 0.0f64;
        let mut m = n - 1;
        while m >= 1 {
            let sep = (m as f64 * h).powf(alpha);
            for i in 0..n - m {
                seminorm = seminorm.max((vals[i + m] - vals[i]).norm() / sep);
            }
            if m == 1 {
                break;
            }
            m /= 2;
        }
        Ok(sup + seminorm)
    }

    /// Crude `‖φ‖_{C²}` upper estimate by finite differences on a grid.
    pub fn c2_norm_estimate(&self, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut sup = 0.0f64;
        let mut d2 = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let v = self.value(x, y);
                sup = sup.max(v.abs());
                let dxx = (self.value(x + h, y) - 2.0 * v + self.value(x - h, y)) / (h * h);
                let dyy = (self.value(x, y + h) - 2.0 * v + self.value(x, y - h)) / (h * h);
                d2 = d2.max(dxx.abs()).max(dyy.abs());
            }
        }
        sup + d2
    }
}

/// Correlation values with the stretched-exponential fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub values: Vec<f64>,
    pub fit: Option<StretchedFit>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StretchedFit {
    /// Prefactor `C` in `C e^{-γ₃ √n}`.
    pub c: f64,
    /// Stretched rate `γ₃`.
    pub gamma3: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Correlation via the mode route: `cor(n) = Σ_k ∫ L_{2πk}^n(℘ φ̂_k) ψ̂_{-k} dm
/// − ν(φ)ν(ψ)`, evolving each vertical mode under its twisted operator.
///
/// This is the route that stays resolved at large `n`; its agreement with
/// the direct tensor-grid quadrature at small `n` is a module invariant.
pub fn correlation(
    skew: &SkewProduct,
    phi: &Observable2D,
    psi: &Observable2D,
    n_max: usize,
    resolution: usize,
    mode_cap: i64,
) -> Result<CorrelationSeries> {
    let rho = invariant_density(&skew.base, resolution, 1e-12)?;
    let ny = (4 * mode_cap as usize + 8).max(64);
    let mean_phi = nu_integral(skew, phi, &rho, resolution, ny)?;
    let mean_psi = nu_integral(skew, psi, &rho, resolution, ny)?;

    // Modes of φ weighted by the invariant density.
    let modes: Vec<(i64, GridDensity, GridDensity)> = (-mode_cap..=mode_cap)
        .map(|k| -> Result<Option<(i64, GridDensity, GridDensity)>> {
            let mut phik = phi.fourier_mode(k, resolution, ny)?;
            let psik = psi.fourier_mode(-k, resolution, ny)?;
            let negligible = phik.values().iter().all(|v| v.norm() < 1e-14)
                || psik.values().iter().all(|v| v.norm() < 1e-14);
            if negligible {
                return Ok(None);
            }
            for (i, v) in phik.values_mut().iter_mut().enumerate() {
                *v *= rho.values()[i].re;
            }
            Ok(Some((k, phik, psik)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let h = 1.0 / (resolution - 1) as f64;
    let mut values = vec![0.0f64; n_max + 1];
    let per_mode: Vec<Vec<Complex>> = modes
        .par_iter()
        .map(|(k, phik, psik)| {
            let op = TransferOperator::new(skew, 1, resolution).expect("operator");
            let b = std::f64::consts::TAU * *k as f64;
            let mut u = phik.clone();
            let mut out = Vec::with_capacity(n_max + 1);
            for n in 0..=n_max {
                if n > 0 {
                    let vals = op.apply_values(u.values(), b);
                    u = GridDensity::new(Interval::UNIT, vals).expect("grid");
                }
                let mut acc = Complex::new(0.0, 0.0);
                let nvals = u.values();
                let pvals = psik.values();
                for i in 0..resolution {
                    let w = if i == 0 || i == resolution - 1 { 0.5 } else { 1.0 };
                    acc += nvals[i] * pvals[i] * w;
                }
                out.push(acc * h);
            }
            out
        })
        .collect();
    for series in &per_mode {
        for (n, v) in series.iter().enumerate() {
            values[n] += v.re;
        }
    }
    for v in &mut values {
        *v -= mean_phi * mean_psi;
    }
    let fit = fit_stretched_exponential(&values, 4).ok();
    Ok(CorrelationSeries { values, fit })
}

/// `∫ φ dν` by tensor quadrature with the invariant density weight.
fn nu_integral(
    _skew: &SkewProduct,
    phi: &Observable2D,
    rho: &GridDensity,
    nx: usize,
    ny: usize,
) -> Result<f64> {
    let h = 1.0 / (nx - 1) as f64;
    let total: f64 = (0..nx)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 * h;
            let w = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
            let wx = rho.values()[i].re * w;
            let mut acc = 0.0;
            for j in 0..ny {
                acc += phi.value(x, j as f64 / ny as f64);
            }
            wx * acc / ny as f64
        })
        .sum();
    Ok(total * h)
}

/// Correlation by direct tensor-grid quadrature of `φ · ψ∘F^n` with the
/// invariant density weight.
///
/// Valid while the expansion has not outrun the grid: requires
/// `e^{λ n_max} <= resolution / 8`, otherwise refuses with the suggested
/// resolution.
pub fn correlation_direct(
    skew: &SkewProduct,
    phi: &Observable2D,
    psi: &Observable2D,
    n_max: usize,
    resolution: usize,
) -> Result<CorrelationSeries> {
    let needed = ((skew.base.lambda * n_max as f64).exp() * 8.0) as usize;
    if resolution < needed {
        return Err(Error::Resolution { given: resolution, required: needed });
    }
    let rho = invariant_density(&skew.base, resolution, 1e-12)?;
    let ny = 256usize;
    let mean_phi = nu_integral(skew, phi, &rho, resolution, ny)?;
    let mean_psi = nu_integral(skew, psi, &rho, resolution, ny)?;
    let h = 1.0 / (resolution - 1) as f64;
    // Precompute x-orbits and Birkhoff sums once.
    let mut xs: Vec<f64> = (0..resolution).map(|i| i as f64 * h).collect();
    let mut taus = vec![0.0f64; resolution];
    let mut values = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            for i in 0..resolution {
                taus[i] += skew.roof.value(xs[i]);
                xs[i] = skew.base.apply(xs[i]);
            }
        }
        let total: f64 = (0..resolution)
            .into_par_iter()
            .map(|i| {
                let x0 = i as f64 * h;
                let w = if i == 0 || i == resolution - 1 { 0.5 } else { 1.0 };
                let wx = rho.values()[i].re * w;
                let mut acc = 0.0;
                for j in 0..ny {
                    let y = j as f64 / ny as f64;
                    acc += phi.value(x0, y) * psi.value(xs[i], y + taus[i]);
                }
                wx * acc / ny as f64
            })
            .sum();
        values.push(total * h - mean_phi * mean_psi);
    }
    let fit = fit_stretched_exponential(&values, 4).ok();
    Ok(CorrelationSeries { values, fit })
}

/// Least-squares fit of `ln|cor(n)| = ln C − γ₃ √n` on `n >= n_min`, with
/// points below the `1e-13` numerical floor excluded.
pub fn fit_stretched_exponential(values: &[f64], n_min: usize) -> Result<StretchedFit> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .skip(n_min)
        .filter(|(_, &v)| v.abs() > 1e-13)
        .map(|(n, &v)| ((n as f64).sqrt(), v.abs().ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Underdetermined(format!(
            "only {} usable points above the numerical floor",
            pts.len()
        )));
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept, r2) = linear_fit(&ts, &ys);
    Ok(StretchedFit {
        c: intercept.exp(),
        gamma3: -slope,
        r_squared: r2,
        points_used: pts.len(),
    })
}

/// The optimal split point of `L e^{-γ₂ n / ln L} + L^{-1}`: solve the
/// equal-parts equation `2 ln L = γ₂ n / ln L` numerically (Newton on
/// `u = ln L`) and return `(L, bound = 2/L)`.
pub fn optimal_mode_split(gamma2: f64, n: f64) -> (f64, f64) {
    assert!(gamma2 > 0.0 && n > 0.0);
    // f(u) = 2u² − γ₂ n has the positive root u = sqrt(γ₂ n / 2); iterate
    // Newton from a safe start to keep the route numeric end to end.
    let mut u = 1.0f64.max(gamma2 * n);
    for _ in 0..200 {
        let f = 2.0 * u * u - gamma2 * n;
        let df = 4.0 * u;
        let next = u - f / df;
        if (next - u).abs() < 1e-15 * u.max(1.0) {
            u = next;
            break;
        }
        u = next;
    }
    let l = u.exp();
    (l, 2.0 / l)
}

/// Decay-rate data feeding the correlation bound: per-mode envelopes for
/// `|k| < k₀` and the fitted `(C, γ₂)` for the large-twist regime.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateTable {
    /// `(mode k, prefactor C_k, rate r_k)` with `‖L_{2πk}^n u‖ <= C_k r_k^n`.
    pub small_modes: Vec<(i64, f64, f64)>,
    /// Mode threshold `k₀` (twist threshold `b₀ / 2π`, rounded up).
    pub mode_threshold: i64,
    pub gamma2: f64,
    pub c_large: f64,
}

/// Fit per-mode norm-decay envelopes for `0 < |k| < k₀` and the `γ₂` rate at
/// the reference mode `k₀`.
pub fn fit_rate_table(
    skew: &SkewProduct,
    mode_threshold: i64,
    resolution: usize,
    n_fit: usize,
) -> Result<RateTable> {
    assert!(mode_threshold >= 1);
    let mut small_modes = Vec::new();
    for k in 1..mode_threshold {
        let b = std::f64::consts::TAU * k as f64;
        let res = resolution.max(phase_policy_nodes_for(skew, b));
        let op = TransferOperator::new(skew, 1, res)?;
        let mut u = GridDensity::full_circle_from_fn(res, |x| {
            Complex::from_polar(1.0, std::f64::consts::TAU * x)
        })?;
        let mut norms = Vec::with_capacity(n_fit + 1);
        norms.push(u.l1_mass());
        for _ in 0..n_fit {
            u = GridDensity::new(Interval::UNIT, op.apply_values(u.values(), b))?;
            norms.push(u.l1_mass());
        }
        // Envelope: r from the late-window ratio, C as the max of
        // norms[n]/r^n with margin.
        let window = (n_fit / 3).max(2);
        let r = (norms[n_fit] / norms[n_fit - window]).powf(1.0 / window as f64);
        let r = r.clamp(1e-6, 1.0);
        let mut c: f64 = 0.0;
        for (n, &v) in norms.iter().enumerate() {
            c = c.max(v / r.powi(n as i32));
        }
        for (k_signed, c_env, r_env) in [(k, c * 1.01, r), (-k, c * 1.01, r)] {
            small_modes.push((k_signed, c_env, r_env));
        }
    }
    // γ₂ at the threshold mode: ‖L_b^n‖ <= C e^{-(γ₂/ln|b|) n}.
    let b_ref = std::f64::consts::TAU * mode_threshold as f64;
    let res = resolution.max(phase_policy_nodes_for(skew, b_ref));
    let op = TransferOperator::new(skew, 1, res)?;
    let mut u = GridDensity::full_circle_from_fn(res, |_| Complex::new(1.0, 0.0))?;
    let mut norms = vec![u.l1_mass()];
    for _ in 0..n_fit {
        u = GridDensity::new(Interval::UNIT, op.apply_values(u.values(), b_ref))?;
        norms.push(u.l1_mass());
    }
    let ns: Vec<f64> = (1..=n_fit).map(|n| n as f64).collect();
    let ys: Vec<f64> = norms[1..].iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, intercept, _) = linear_fit(&ns, &ys);
    let gamma2 = (-slope * b_ref.abs().ln()).max(1e-6);
    let c_large = intercept.exp().max(1.0) * 1.05;
    Ok(RateTable { small_modes, mode_threshold, gamma2, c_large })
}

/// Evaluate the split correlation bound at time `n`:
/// small modes through their fitted envelopes, large modes through
/// `C e^{-γ₂ n / ln|b|} |k|^{-2}` Fourier decay up to `mode_cap`, plus the
/// `|k| > mode_cap` tail bounded via the `C²` mode decay.
pub fn mode_split_bound(
    skew: &SkewProduct,
    phi: &Observable2D,
    psi: &Observable2D,
    n: usize,
    rates: &RateTable,
    mode_cap: i64,
    resolution: usize,
) -> Result<f64> {
    let alpha = skew.base.alpha;
    let ny = (4 * mode_cap as usize + 8).max(64);
    let mut bound = 0.0f64;
    // |k| < threshold: fitted envelopes times the mode norms.
    for &(k, c_k, r_k) in &rates.small_modes {
        if k == 0 {
            continue;
        }
        let phik = phi.mode_calpha_norm(k, alpha, resolution.min(1 << 12), ny)?;
        let psik_sup = psi
            .fourier_mode(-k, resolution.min(1 << 12), ny)?
            .values()
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        if phik < 1e-14 || psik_sup < 1e-14 {
            continue;
        }
        bound += c_k * r_k.powi(n as i32) * phik * psik_sup;
    }
    // Mean-zero 0-mode through the untwisted gap.
    let gap = spectral_radius_gap_zero(skew, resolution)?;
    let phi0 = phi.mode_calpha_norm(0, alpha, resolution.min(1 << 12), ny)?;
    let psi0 = psi
        .fourier_mode(0, resolution.min(1 << 12), ny)?
        .values()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if phi0 > 1e-14 && psi0 > 1e-14 {
        bound += 2.0 * gap.powi(n as i32) * phi0 * psi0;
    }
    // threshold <= |k| <= cap: the γ₂ estimate with C² Fourier decay.
    let c2 = match phi.smoothness {
        Smoothness::CAlpha => None,
        _ => Some(phi.c2_norm_estimate(256)),
    };
    let psi_sup = {
        let mut sup = 0.0f64;
        for i in 0..64 {
            for j in 0..64 {
                sup = sup.max(psi.value(i as f64 / 64.0, j as f64 / 64.0).abs());
            }
        }
        sup
    };
    if let Some(c2) = c2 {
        for k in rates.mode_threshold..=mode_cap {
            for k in [k, -k] {
                let b = std::f64::consts::TAU * k as f64;
                let decay = (-rates.gamma2 * n as f64 / b.abs().ln()).exp();
                bound += rates.c_large * decay * c2 / (k as f64 * k as f64) * psi_sup;
            }
        }
        // |k| > cap tail: Σ C‖φ‖_{C²} k^{-2} <= 2 C ‖φ‖ / cap.
        bound += 2.0 * c2 * psi_sup / mode_cap as f64;
    }
    Ok(bound)
}

fn spectral_radius_gap_zero(skew: &SkewProduct, resolution: usize) -> Result<f64> {
    // Mean-zero decay rate of L_0, measured by iterating a mean-zero density.
    let op = TransferOperator::new(skew, 1, resolution.min(1 << 12))?;
    let res = resolution.min(1 << 12);
    let x0 = 0.5f64.sqrt();
    let mut g = GridDensity::full_circle_from_fn(res, |x| {
        Complex::new(if x < x0 { 1.0 } else { -x0 / (1.0 - x0) }, 0.0)
    })?;
    let mut norms = vec![g.l1_mass()];
    for _ in 0..10 {
        g = GridDensity::new(Interval::UNIT, op.apply_values(g.values(), 0.0))?;
        norms.push(g.l1_mass());
    }
    let r = (norms[10] / norms[4]).powf(1.0 / 6.0);
    Ok(r.clamp(0.05, 1.0).max((-skew.base.lambda).exp()))
}

/// Sweep `spectral_radius_estimate` over a twist range (CLI helper).
pub fn spectrum_sweep(
    skew: &SkewProduct,
    bs: &[f64],
    resolution: usize,
    iters: usize,
    trials: usize,
) -> Result<Vec<SpectralEstimate>> {
    bs.iter()
        .map(|&b| spectral_radius_estimate(skew, b, resolution, iters, trials))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::presets::*;

    #[test]
    fn constant_observables_have_zero_correlation() {
        let skew = doubling_cos();
        let phi = Observable2D::new(|_, _| 2.5, Smoothness::C3);
        let psi = Observable2D::new(|_, _| -0.5, Smoothness::C3);
        let series = correlation(&skew, &phi, &psi, 6, 1 << 10, 4).unwrap();
        for v in &series.values {
            assert!(v.abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn mode_route_matches_direct_quadrature() {
        // Mode-sum consistency at small n where the direct route is valid.
        let skew = doubling_cos();
        let phi = Observable2D::cos_xy();
        let psi = Observable2D::cos_xy();
        let direct = correlation_direct(&skew, &phi, &psi, 6, 1 << 12).unwrap();
        let modal = correlation(&skew, &phi, &psi, 6, 1 << 12, 2).unwrap();
        for (n, (u, v)) in direct.values.iter().zip(&modal.values).enumerate() {
            assert!((u - v).abs() < 2e-4, "n = {n}: direct {u} vs modal {v}");
        }
    }

    #[test]
    fn direct_route_refuses_unresolved_depth() {
        let skew = doubling_cos();
        let phi = Observable2D::cos_xy();
        let res = correlation_direct(&skew, &phi, &phi, 30, 1 << 12);
        assert!(matches!(res, Err(Error::Resolution { .. })));
    }

    #[test]
    fn measure_invariance() {
        // ∫ φ∘F dν = ∫ φ dν for random smooth φ.
        use rand::{Rng, SeedableRng};
        let skew = doubling_cos();
        let res = 1 << 12;
        let rho = invariant_density(&skew.base, res, 1e-12).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let (a1, a2): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let tau = std::f64::consts::TAU;
            let phi = Observable2D::new(
                move |x, y| 1.0 + a1 * (tau * (x + 2.0 * y)).cos() + a2 * (tau * y).sin(),
                Smoothness::C3,
            );
            let skew2 = skew.clone();
            let phi_f = Observable2D::new(
                move |x, y| {
                    let fx = skew2.base.apply(x);
                    let fy = y + skew2.roof.value(x);
                    phi_eval_helper(a1, a2, fx, fy)
                },
                Smoothness::C3,
            );
            let i1 = nu_integral(&skew, &phi, &rho, res, 256).unwrap();
            let i2 = nu_integral(&skew, &phi_f, &rho, res, 256).unwrap();
            let rel = (i1 - i2).abs() / i1.abs().max(1e-9);
            assert!(rel < 1e-6, "relative invariance defect {rel:.3e}");
        }
    }

    fn phi_eval_helper(a1: f64, a2: f64, x: f64, y: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        1.0 + a1 * (tau * (x + 2.0 * y)).cos() + a2 * (tau * y).sin()
    }

    #[test]
    fn fourier_decay_of_smooth_observable() {
        // ‖φ̂_k‖ <= C ‖φ‖_{C²} k^{-2} for a C² (non-polynomial) observable.
        let phi = Observable2D::new(
            |x, y| (std::f64::consts::TAU * y).cos().exp() * (std::f64::consts::TAU * x).cos(),
            Smoothness::C2,
        );
        let c2 = phi.c2_norm_estimate(128);
        for k in 2..=16i64 {
            let norm = phi.mode_calpha_norm(k, 1.0, 256, 512).unwrap();
            assert!(
                norm <= 2.0 * c2 / (k as f64 * k as f64),
                "mode {k}: {norm} vs C2 bound {}",
                2.0 * c2 / (k as f64 * k as f64)
            );
        }
    }

    #[test]
    fn stretched_fit_recovers_synthetic() {
        // cor(n) = 3 e^{-0.7 √n}.
        let values: Vec<f64> = (0..=40)
            .map(|n| 3.0 * (-0.7 * (n as f64).sqrt()).exp())
            .collect();
        let fit = fit_stretched_exponential(&values, 4).unwrap();
        assert!((fit.c - 3.0).abs() < 1e-6);
        assert!((fit.gamma3 - 0.7).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn stretched_fit_on_exponential_is_conservative() {
        // Exponential decay fits with positive γ₃ (closed-form regression
        // oracle cross-check).
        let values: Vec<f64> = (0..=30).map(|n| (-0.3 * n as f64).exp()).collect();
        let fit = fit_stretched_exponential(&values, 4).unwrap();
        assert!(fit.gamma3 > 0.0);
        // Oracle: compute the same regression by hand.
        let pts: Vec<(f64, f64)> = (4..=30)
            .map(|n| ((n as f64).sqrt(), (-0.3 * n as f64)))
            .collect();
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let stt: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let slope = sty / stt;
        assert!((fit.gamma3 + slope).abs() < 1e-9);
    }

    #[test]
    fn noise_floor_points_excluded() {
        let mut values: Vec<f64> = (0..=30)
            .map(|n| 2.0 * (-0.5 * (n as f64).sqrt()).exp())
            .collect();
        for v in values.iter_mut().skip(20) {
            *v = 1e-15;
        }
        let fit = fit_stretched_exponential(&values, 4).unwrap();
        assert_eq!(fit.points_used, 16);
        // All points at the floor: underdetermined.
        let flat = vec![1e-15; 31];
        assert!(matches!(
            fit_stretched_exponential(&flat, 4),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn split_identity_examples() {
        for (gamma2, n) in [(0.5, 10.0), (0.25, 40.0), (1.0, 100.0), (0.08, 400.0), (2.0, 9.0)] {
            let (l, bound) = optimal_mode_split(gamma2, n);
            let expect_l = (gamma2 * n / 2.0).sqrt().exp();
            assert!((l - expect_l).abs() <= 1e-10 * expect_l);
            let expect_bound = 2.0 * (-(gamma2 * n / 2.0).sqrt()).exp();
            assert!((bound - expect_bound).abs() <= 1e-10 * expect_bound);
        }
    }

    #[test]
    fn bound_dominates_measured_correlation() {
        let skew = doubling_cos();
        let phi = Observable2D::cos_xy();
        let rates = fit_rate_table(&skew, 2, 1 << 10, 24).unwrap();
        // φ has only modes ±1: with threshold 2 the bound reduces to the two
        // fitted envelope terms plus the C² tail.
        let series = correlation(&skew, &phi, &phi, 12, 1 << 10, 2).unwrap();
        for n in [4usize, 8, 12] {
            let bound = mode_split_bound(&skew, &phi, &phi, n, &rates, 64, 1 << 10).unwrap();
            assert!(
                series.values[n].abs() <= bound,
                "n = {n}: |cor| = {} above bound {bound}",
                series.values[n].abs()
            );
        }
    }
}
