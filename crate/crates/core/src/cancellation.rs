//! Oscillatory-cancellation weight reduction for standard families.
//!
//! Two overlapping standard pairs produced by transversal inverse branches
//! carry a phase difference `Θ_b` sweeping at rate `~ |b| C₁`. Each pair is
//! split into a constant-modulus part (`c = e^{-a}/2`) and a remainder; on
//! intervals `J_m` where `cos Θ_b ∈ [1/4, 1/2]` the constant-modulus parts
//! are combined through a `C¹` reweighting `κ`, which strictly decreases the
//! total weight while leaving the family density unchanged. Repeating the
//! step drives the weight (and hence `‖L_b^n ρ‖_{L¹}`) down geometrically.

use crate::dynamics::SkewProduct;
use crate::error::{Error, Result};
use crate::families::{
    boundary_measure, family_density, iterate_family, FamilyPair, GridPolicy, PairParams,
    StandardFamily, StandardPair,
};
use crate::grid::{GridDensity, PolarGrid};
use crate::interval::Interval;
use crate::transfer::TransferOperator;
use crate::transversality::{transversality_table, SearchConfig, TableResult, TransversalityWitness};
use crate::Complex;
use serde::{Deserialize, Serialize};

/// Lower cancellation constant `α₁` (any value in `(0, 1/2]` works; the
/// extreme maximizes the measured cancellation band).
pub const ALPHA_1: f64 = 0.5;

/// Upper cancellation constant `α₂ = (√7 − 1)/2`, the sharp threshold of
/// `x ↦ √(1 + x + x²) − x` at `x = 1/2`.
pub fn alpha_2() -> f64 {
    (7.0f64.sqrt() - 1.0) / 2.0
}

/// The constant-modulus / remainder split of a standard pair.
#[derive(Clone, Debug)]
pub struct SplitPair {
    /// Normalized constant-modulus part `N(c e^{iΘ})`.
    pub bar: StandardPair,
    /// Relative weight `∫|c e^{iΘ}| = c |I|`.
    pub bar_weight: f64,
    /// Normalized remainder `N((|ρ| − c) e^{iΘ})` with `H <= 4a`.
    pub tilde: StandardPair,
    pub tilde_weight: f64,
    /// The split level `c = e^{-a}/2`.
    pub c: f64,
}

/// Split `ρ = c e^{iΘ} + (|ρ| − c) e^{iΘ}` with `c = e^{-a}/2`.
///
/// Requires `inf |ρ| >= 2c` (guaranteed for standard pairs by the
/// comparability lemma); the remainder inherits `H <= 4a`. Both parts share
/// the pair's phase, so the argument budget passes through unchanged.
pub fn split_pair(pair: &StandardPair) -> Result<SplitPair> {
    let a = pair.params.a;
    let c = 0.5 * (-a).exp();
    let inf_mod = pair
        .density
        .modulus()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if inf_mod < 2.0 * c * (1.0 - 1e-9) {
        return Err(Error::SplitInfeasible { inf_mod, two_c: 2.0 * c });
    }
    let arg_budget = pair.regularity().arg_slope * (1.0 + 1e-9) + 1e-12;
    let n = pair.density.len_nodes();
    let phase = pair.density.phase().to_vec();
    let bar_grid = PolarGrid::new(pair.interval, vec![c; n], phase.clone())?;
    let tilde_mod: Vec<f64> = pair.density.modulus().iter().map(|&m| m - c).collect();
    let tilde_grid = PolarGrid::new(pair.interval, tilde_mod, phase)?;
    let bar_weight = bar_grid.l1_mass();
    let tilde_weight = tilde_grid.l1_mass();
    let bar = StandardPair::with_budgets(bar_grid, pair.params, a, arg_budget)?;
    let tilde = StandardPair::with_budgets(tilde_grid, pair.params, 4.0 * a, arg_budget)?;
    Ok(SplitPair { bar, bar_weight, tilde, tilde_weight, c })
}

/// Sampled phase difference `Θ_b = Θ₁ − Θ₂` on an overlap interval.
#[derive(Clone, Debug)]
pub struct PhaseDifference {
    pub interval: Interval,
    /// Uniform samples of `Θ_b`.
    pub theta: Vec<f64>,
    pub min_abs_slope: f64,
    pub max_abs_slope: f64,
    /// Whether `Θ_b'` kept a constant sign over the overlap.
    pub monotone: bool,
}

impl PhaseDifference {
    pub fn spacing(&self) -> f64 {
        self.interval.len() / (self.theta.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.interval.lerp(i as f64 / (self.theta.len() - 1) as f64)
    }
}

/// Compute `Θ_b` on `overlap ⊆ I₁ ∩ I₂` from the pairs' unwrapped phases.
///
/// The returned sampling resolves the phase-bound rate `2|b|(C_τ + C₁)`.
pub fn phase_difference(
    pair1: &StandardPair,
    pair2: &StandardPair,
    overlap: Interval,
    slope_hint: f64,
) -> Result<PhaseDifference> {
    if overlap.lo < pair1.interval.lo.max(pair2.interval.lo) - 1e-12
        || overlap.hi > pair1.interval.hi.min(pair2.interval.hi) + 1e-12
    {
        return Err(Error::Precondition("overlap must lie inside both supports".into()));
    }
    // The J_m bands span only ~0.27 rad of Θ_b, so sample 8x finer than the
    // representation policy to give each band enough nodes.
    let nodes = (8 * crate::grid::phase_policy_nodes(slope_hint, overlap.len())).max(64);
    let theta: Vec<f64> = (0..nodes)
        .map(|i| {
            let x = overlap.lerp(i as f64 / (nodes - 1) as f64);
            pair1.density.eval_polar(x).1 - pair2.density.eval_polar(x).1
        })
        .collect();
    let h = overlap.len() / (nodes - 1) as f64;
    let mut min_slope = f64::INFINITY;
    let mut max_slope = 0.0f64;
    let mut pos = false;
    let mut neg = false;
    for w in theta.windows(2) {
        let s = (w[1] - w[0]) / h;
        min_slope = min_slope.min(s.abs());
        max_slope = max_slope.max(s.abs());
        if s > 0.0 {
            pos = true;
        }
        if s < 0.0 {
            neg = true;
        }
    }
    Ok(PhaseDifference {
        interval: overlap,
        theta,
        min_abs_slope: min_slope,
        max_abs_slope: max_slope,
        monotone: !(pos && neg),
    })
}

/// One full-oscillation cell: `Θ_b` ranges over `[2π, 3π]` on `i_m`, the
/// selection `j_m` keeps `cos Θ_b ∈ [1/4, 1/2]`, and `j_m_inner` is its
/// middle third where `κ = 1 − κ₀`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OscillationCell {
    pub i_m: Interval,
    pub j_m: Interval,
    pub j_m_inner: Interval,
}

/// Oscillation decomposition of an overlap with the `K₁..K₄` constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OscillationLayout {
    pub cells: Vec<OscillationCell>,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub b: f64,
    pub c1: f64,
    pub c_tau: f64,
}

impl OscillationLayout {
    /// Declared ramp-derivative constant `C_κ = 18 / K₃` (ramp length is at
    /// least `K₃ |b|^{-1} / 3`).
    pub fn c_kappa(&self) -> f64 {
        18.0 / self.k3
    }
}

/// Divide the range of `Θ_b` into full oscillations and select the `J_m`.
///
/// Needs at least one full `2π` oscillation (`|b| >= b₀`); cells are chosen
/// in Θ-space with length in `[2π, 3π]`, mapped back through the monotone
/// sampled phase, and `J_m` is shrunk to whole sample steps so that
/// `cos Θ_b ∈ [1/4, 1/2]` holds at every retained node.
pub fn oscillation_layout(
    theta: &PhaseDifference,
    b: f64,
    c1: f64,
    c_tau: f64,
) -> Result<OscillationLayout> {
    let two_pi = std::f64::consts::TAU;
    let pi = std::f64::consts::PI;
    if !theta.monotone {
        return Err(Error::Precondition("phase difference changes direction".into()));
    }
    let t0 = theta.theta[0];
    let t1 = *theta.theta.last().unwrap();
    let range = (t1 - t0).abs();
    if range < two_pi {
        return Err(Error::BelowB0 {
            b: b.abs(),
            b0: 4.0 * pi / (c1 * theta.interval.len()),
        });
    }
    // Number of Θ-cells, each of length in [2π, 3π]; when no exact division
    // exists, cover with floor(range/2π) cells of length 2.5π.
    let kmin = (range / (3.0 * pi)).ceil() as usize;
    let kmax = (range / two_pi).floor() as usize;
    let (cells_n, cell_len) = if kmin <= kmax {
        (kmin.max(1), range / kmin.max(1) as f64)
    } else {
        (kmax, 2.5 * pi)
    };
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    // x-position where Θ_b first reaches level t (monotone interpolation).
    let x_at = |level: f64| -> f64 {
        let t = level;
        for (i, w) in theta.theta.windows(2).enumerate() {
            let (lo, hi) = if dir > 0.0 { (w[0], w[1]) } else { (w[1], w[0]) };
            if (dir > 0.0 && lo <= t && t <= hi) || (dir < 0.0 && lo <= t && t <= hi) {
                let frac = if (w[1] - w[0]).abs() < 1e-300 {
                    0.0
                } else {
                    (t - w[0]) / (w[1] - w[0])
                };
                return theta.node(i) + frac.clamp(0.0, 1.0) * theta.spacing();
            }
        }
        if dir > 0.0 && t <= t0 || dir < 0.0 && t >= t0 {
            theta.interval.lo
        } else {
            theta.interval.hi
        }
    };
    let arc_lo = (0.25f64).acos(); // 1.3181...
    let arc_hi = (0.5f64).acos(); // π/3
    let mut cells = Vec::with_capacity(cells_n);
    for m in 0..cells_n {
        let a_level = t0 + dir * cell_len * m as f64;
        let b_level = t0 + dir * cell_len * (m + 1) as f64;
        let i_m = sorted_interval(x_at(a_level), x_at(b_level));
        // First θ-band inside the cell where cos θ ∈ [1/4, 1/2]: bands are
        // [2πk + π/3, 2πk + arccos(1/4)] and their mirror images.
        let (band_lo, band_hi) = first_cos_band(a_level, b_level, dir, arc_hi, arc_lo);
        let j_full = sorted_interval(x_at(band_lo), x_at(band_hi));
        // Shrink to whole sample nodes so the cos condition holds nodewise.
        let Some(j_m) = shrink_to_nodes(theta, j_full) else {
            continue;
        };
        let third = j_m.len() / 3.0;
        let j_m_inner = Interval::new(j_m.lo + third, j_m.hi - third);
        cells.push(OscillationCell { i_m, j_m, j_m_inner });
    }
    if cells.is_empty() {
        return Err(Error::BelowB0 {
            b: b.abs(),
            b0: 4.0 * pi / (c1 * theta.interval.len()),
        });
    }
    let arc_width = arc_lo - arc_hi;
    Ok(OscillationLayout {
        cells,
        k1: pi / (c_tau + c1),
        k2: 6.0 * pi / c1,
        k3: arc_width / (2.0 * (c_tau + c1)),
        k4: 2.0 * arc_width / c1,
        b,
        c1,
        c_tau,
    })
}

fn sorted_interval(a: f64, b: f64) -> Interval {
    if a <= b {
        Interval::new(a, b.max(a + 1e-300))
    } else {
        Interval::new(b, a)
    }
}

/// First θ-band with `cos θ ∈ [1/4, 1/2]` fully inside `(a_level, b_level)`
/// (traversed in direction `dir`). Bands repeat with period 2π on both the
/// descending (`[π/3, arccos 1/4]`) and ascending (mirrored) sides, so a full
/// oscillation always contains one.
fn first_cos_band(a_level: f64, b_level: f64, dir: f64, arc_hi: f64, arc_lo: f64) -> (f64, f64) {
    let two_pi = std::f64::consts::TAU;
    let lo = a_level.min(b_level);
    let hi = a_level.max(b_level);
    let k0 = ((lo - arc_lo) / two_pi).floor() - 1.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..5 {
        let base = (k0 + k as f64) * two_pi;
        for (s, e) in [
            (base + arc_hi, base + arc_lo),
            (base + two_pi - arc_lo, base + two_pi - arc_hi),
        ] {
            if s >= lo && e <= hi {
                let candidate = (s, e);
                let better = match best {
                    None => true,
                    Some((bs, _)) => {
                        if dir > 0.0 {
                            candidate.0 < bs
                        } else {
                            candidate.0 > bs
                        }
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
    }
    best.unwrap_or((lo, lo))
}

/// Largest subinterval of `j` whose endpoints are sample nodes of `theta`
/// with at least 2 interior steps.
fn shrink_to_nodes(theta: &PhaseDifference, j: Interval) -> Option<Interval> {
    let h = theta.spacing();
    let lo_idx = ((j.lo - theta.interval.lo) / h).ceil() as usize;
    let hi_idx = ((j.hi - theta.interval.lo) / h).floor() as usize;
    if hi_idx <= lo_idx + 1 || hi_idx >= theta.theta.len() {
        return None;
    }
    Some(Interval::new(theta.node(lo_idx), theta.node(hi_idx)))
}

/// The `C¹` reweighting `κ ∈ [1 − κ₀, 1]`: equal to `1 − κ₀` on the middle
/// thirds `J_m'`, equal to 1 outside the `J_m`, with cubic smoothstep ramps
/// on the outer thirds.
#[derive(Clone, Debug)]
pub struct KappaFunction {
    pub cells: Vec<OscillationCell>,
    pub kappa0: f64,
}

impl KappaFunction {
    pub fn new(layout: &OscillationLayout, kappa0: f64) -> KappaFunction {
        assert!(kappa0 > 0.0 && kappa0 <= 0.5, "kappa0 must lie in (0, 1/2]");
        KappaFunction { cells: layout.cells.clone(), kappa0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        for c in &self.cells {
            if c.j_m.contains_closed(x) {
                let third = c.j_m.len() / 3.0;
                let t = if x < c.j_m_inner.lo {
                    (x - c.j_m.lo) / third
                } else if x > c.j_m_inner.hi {
                    (c.j_m.hi - x) / third
                } else {
                    1.0
                };
                let s = smoothstep(t.clamp(0.0, 1.0));
                return 1.0 - self.kappa0 * s;
            }
        }
        1.0
    }

    pub fn deriv(&self, x: f64) -> f64 {
        for c in &self.cells {
            if c.j_m.contains_closed(x) {
                let third = c.j_m.len() / 3.0;
                if x < c.j_m_inner.lo {
                    let t = ((x - c.j_m.lo) / third).clamp(0.0, 1.0);
                    return -self.kappa0 * smoothstep_deriv(t) / third;
                } else if x > c.j_m_inner.hi {
                    let t = ((c.j_m.hi - x) / third).clamp(0.0, 1.0);
                    return self.kappa0 * smoothstep_deriv(t) / third;
                }
                return 0.0;
            }
        }
        0.0
    }

    /// Measured sup of `|κ'|` over the ramps.
    pub fn max_abs_deriv(&self) -> f64 {
        // Smoothstep peak slope 1.5 at t = 1/2 over a ramp of one third.
        self.cells
            .iter()
            .map(|c| 1.5 * self.kappa0 / (c.j_m.len() / 3.0))
            .fold(0.0, f64::max)
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn smoothstep_deriv(t: f64) -> f64 {
    6.0 * t * (1.0 - t)
}

/// Build `κ` from a layout with `κ₀ ∈ (0, 1/2]`.
pub fn build_kappa(layout: &OscillationLayout, kappa0: f64) -> KappaFunction {
    KappaFunction::new(layout, kappa0)
}

/// Outcome of one pairwise cancellation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReductionReport {
    pub old_total: f64,
    pub new_total: f64,
    /// `−ln(new/old)`.
    pub gamma: f64,
    /// `α₂' = 1 − (1 − α₂) K₃ / (3 K₂)`: the paper's per-overlap factor.
    pub alpha2_eff: f64,
    /// Admissibility threshold `4π/(C₁ Δ)` of the overlap used.
    pub b0: f64,
    /// Node-wise residual of the equivalence identity.
    pub equivalence_residual: f64,
    /// Measured bar weights before/after.
    pub bar_w1: f64,
    pub bar_w2: f64,
    pub bar_w1_star: f64,
    pub bar_w2_star: f64,
    pub oscillation_cells: usize,
    /// Worst margins of the cancellation band (nonnegative = satisfied).
    pub band_margin_lo: f64,
    pub band_margin_hi: f64,
    /// Measured `sup|κ'|` against the declared `C_κ κ₀ |b|`.
    pub kappa_deriv: f64,
    pub kappa_deriv_bound: f64,
}

/// Extended outcome of one couple cancellation.
struct CoupleOutcome {
    report: ReductionReport,
    post_h_budget: f64,
    post_arg_budget: f64,
}

/// Replace pairs `idx1, idx2` (overlapping on `overlap` with separation
/// constant `c1`) by the four pairs `(κ ρ̄₁, ρ̄₂ + (1−κ)(w₁/w₂)ρ̄₁, ρ̃₁, ρ̃₂)`,
/// renormalized. The family density is unchanged; the combined bar weight
/// strictly decreases.
pub fn apply_cancellation(
    family: &StandardFamily,
    idx1: usize,
    idx2: usize,
    overlap: Interval,
    c1: f64,
) -> Result<(StandardFamily, ReductionReport)> {
    let (quad, outcome) = cancel_couple(
        &family.pairs[idx1],
        &family.pairs[idx2],
        overlap,
        c1,
        family.params,
        family.arg_budget,
        family.total_weight(),
    )?;
    let mut pairs: Vec<FamilyPair> = family
        .pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx1 && *i != idx2)
        .map(|(_, p)| p.clone())
        .collect();
    pairs.extend(quad);
    let mut out = StandardFamily::from_pairs(pairs, family.params, family.boundary_bound);
    out.h_budget = family.h_budget.max(outcome.post_h_budget);
    out.arg_budget = family.arg_budget.max(outcome.post_arg_budget);
    out.dropped_weight = family.dropped_weight;
    out.z_defect = family.z_defect;
    Ok((out, outcome.report))
}

fn cancel_couple(
    fp1: &FamilyPair,
    fp2: &FamilyPair,
    overlap: Interval,
    c1: f64,
    params: PairParams,
    family_arg_budget: f64,
    family_total: f64,
) -> Result<([FamilyPair; 4], CoupleOutcome)> {
    let b = params.b;
    let c_tau_like = (family_arg_budget / params.b.abs().max(1e-300)).max(1e-9);
    // Enforce w2 <= w1 by swapping.
    let (fp1, fp2) = if fp2.weight > fp1.weight { (fp2, fp1) } else { (fp1, fp2) };
    let w1 = fp1.weight;
    let w2 = fp2.weight;
    let p1 = &fp1.pair;
    let p2 = &fp2.pair;
    let overlap = overlap
        .intersect(&p1.interval, 0.0)
        .and_then(|iv| iv.intersect(&p2.interval, 0.0))
        .ok_or_else(|| Error::Precondition("overlap outside pair supports".into()))?;

    let split1 = split_pair(p1)?;
    let split2 = split_pair(p2)?;
    let c = split1.c;

    // Phase difference of the bar parts (equal to the pairs' phase difference).
    let slope_hint = 2.0 * b.abs() * (c_tau_like + c1);
    let theta = phase_difference(p1, p2, overlap, slope_hint)?;
    let layout = oscillation_layout(&theta, b, c1, c_tau_like)?;
    let kappa0 = w2 / (2.0 * w1);
    let kappa = build_kappa(&layout, kappa0);

    // Cancellation band at every retained node of every J_m:
    // α₁ c (κ₀w₁ + w₂) <= |κ₀w₁ ρ̄₁ + w₂ ρ̄₂| <= c (κ₀w₁ + α₂ w₂).
    let alpha2 = alpha_2();
    let mut band_lo = f64::INFINITY;
    let mut band_hi = f64::INFINITY;
    let h = theta.spacing();
    for cell in &layout.cells {
        let i0 = ((cell.j_m.lo - theta.interval.lo) / h).round() as usize;
        let i1 = ((cell.j_m.hi - theta.interval.lo) / h).round() as usize;
        for i in i0..=i1.min(theta.theta.len() - 1) {
            let cosv = theta.theta[i].cos();
            let combined = c
                * ((kappa0 * w1).powi(2)
                    + w2 * w2
                    + 2.0 * kappa0 * w1 * w2 * cosv)
                    .sqrt();
            let lo_bound = ALPHA_1 * c * (kappa0 * w1 + w2);
            let hi_bound = c * (kappa0 * w1 + alpha2 * w2);
            band_lo = band_lo.min(combined - lo_bound);
            band_hi = band_hi.min(hi_bound - combined);
        }
    }
    if band_lo < -1e-9 * c || band_hi < -1e-9 * c {
        return Err(Error::Precondition(format!(
            "cancellation band violated: margins lo {band_lo:.3e}, hi {band_hi:.3e}"
        )));
    }

    // Modified bar densities. bar1* = κ ρ̄₁ on I₁; bar2* = ρ̄₂ + (1−κ)(w₁/w₂)ρ̄₁
    // on I₂ (the correction is supported in the J_m ⊆ I_*). Both are stored
    // on grids fine enough to resolve the J_m dips (width ~ K₃/|b|), and the
    // stored node values use the interpolated Θ's, which is also what the
    // equivalence check evaluates, keeping the identity exact nodewise.
    let ratio = w1 / w2;
    let refined = |iv: Interval, base: usize| {
        base.max(8 * crate::grid::phase_policy_nodes(slope_hint, iv.len()))
    };
    let bar1_nodes = refined(p1.interval, p1.density.len_nodes());
    let mut bar1_mod = Vec::with_capacity(bar1_nodes);
    let mut bar1_phase = Vec::with_capacity(bar1_nodes);
    for i in 0..bar1_nodes {
        let x = p1.interval.lerp(i as f64 / (bar1_nodes - 1) as f64);
        bar1_mod.push(c * kappa.eval(x));
        bar1_phase.push(p1.density.eval_polar(x).1);
    }
    let bar1_star_grid = PolarGrid::new(p1.interval, bar1_mod, bar1_phase)?;

    let n2 = refined(p2.interval, p2.density.len_nodes());
    let mut bar2_mod = Vec::with_capacity(n2);
    let mut bar2_phase = Vec::with_capacity(n2);
    let mut equiv_residual = 0.0f64;
    for i in 0..n2 {
        let x = p2.interval.lerp(i as f64 / (n2 - 1) as f64);
        let th2 = p2.density.eval_polar(x).1;
        let q = if overlap.contains_closed(x) { (1.0 - kappa.eval(x)) * ratio } else { 0.0 };
        if q == 0.0 {
            bar2_mod.push(c);
            bar2_phase.push(th2);
            continue;
        }
        let th1 = p1.density.eval_polar(x).1;
        let theta_b = th1 - th2;
        let re = 1.0 + q * theta_b.cos();
        let im = q * theta_b.sin();
        let modl = c * (re * re + im * im).sqrt();
        // |q| <= κ₀ w₁/w₂ = 1/2 keeps the correction phase in (−π/2, π/2).
        let phase = th2 + im.atan2(re);
        bar2_mod.push(modl);
        bar2_phase.push(phase);
        // Node-wise equivalence: w₂ bar2*(x) must equal w₂ ρ̄₂(x) + (1−κ)w₁ ρ̄₁(x).
        let lhs = Complex::from_polar(modl, phase) * w2;
        let rhs = Complex::from_polar(c, th2) * w2 + Complex::from_polar(c, th1) * (q * w2);
        equiv_residual = equiv_residual.max((lhs - rhs).norm());
    }
    let bar2_star_grid = PolarGrid::new(p2.interval, bar2_mod, bar2_phase)?;

    let bar1_star_mass = bar1_star_grid.l1_mass();
    let bar2_star_mass = bar2_star_grid.l1_mass();
    let bar_w1_star = w1 * bar1_star_mass;
    let bar_w2_star = w2 * bar2_star_mass;
    let bar_w1 = w1 * split1.bar_weight;
    let bar_w2 = w2 * split2.bar_weight;

    // Logarithmic-derivative chain bound for the modified bars:
    // |ρ̄₂*'| <= (Θ-slope budget + C_κ |b|) |ρ̄₂*| / α₁. The classification
    // H <= a|b| additionally needs (e^{-λn} + C_τ/a + C_κ/a)/α₁ < 1, which
    // forces a beyond e^{-a}-underflow scale, so the pairs carry their
    // measured budgets instead and the restoration sweep contracts them.
    let ratio_bound = (family_arg_budget + layout.c_kappa() * b.abs()) / ALPHA_1;
    for grid in [&bar1_star_grid, &bar2_star_grid] {
        let h = grid.spacing();
        for i in 0..grid.len_nodes() - 1 {
            let dm = (grid.modulus()[i + 1].ln() - grid.modulus()[i].ln()) / h;
            let dp = (grid.phase()[i + 1] - grid.phase()[i]) / h;
            let ratio = (dm * dm + dp * dp).sqrt();
            if ratio > ratio_bound * (1.0 + 1e-6) {
                return Err(Error::Precondition(format!(
                    "modified bar exceeds the chain bound: |ρ'|/|ρ| = {ratio:.3e} > {ratio_bound:.3e}"
                )));
            }
        }
    }
    let bar1_star = StandardPair::normalized_unchecked(bar1_star_grid, params)?;
    let bar2_star = StandardPair::normalized_unchecked(bar2_star_grid, params)?;
    let rep1 = bar1_star.regularity();
    let rep2 = bar2_star.regularity();
    let h_budget = rep1.holder_log.max(rep2.holder_log).max(4.0 * params.a);
    let arg_budget = rep1.arg_slope.max(rep2.arg_slope).max(params.arg_bound());

    let old_total = family_total;
    let parent_record = fp1.record.clone();
    let parent_record2 = fp2.record.clone();
    let quad = [
        FamilyPair { pair: bar1_star, weight: bar_w1_star, record: parent_record.clone() },
        FamilyPair { pair: bar2_star, weight: bar_w2_star, record: parent_record2.clone() },
        FamilyPair { pair: split1.tilde, weight: w1 * split1.tilde_weight, record: parent_record },
        FamilyPair { pair: split2.tilde, weight: w2 * split2.tilde_weight, record: parent_record2 },
    ];
    let new_total = old_total - (w1 + w2) + quad.iter().map(|p| p.weight).sum::<f64>();

    let report = ReductionReport {
        old_total,
        new_total,
        gamma: -(new_total / old_total).ln(),
        alpha2_eff: 1.0 - (1.0 - alpha2) * layout.k3 / (3.0 * layout.k2),
        b0: 4.0 * std::f64::consts::PI / (c1 * overlap.len()),
        equivalence_residual: equiv_residual,
        bar_w1,
        bar_w2,
        bar_w1_star,
        bar_w2_star,
        oscillation_cells: layout.cells.len(),
        band_margin_lo: band_lo,
        band_margin_hi: band_hi,
        kappa_deriv: kappa.max_abs_deriv(),
        kappa_deriv_bound: layout.c_kappa() * kappa0 * b.abs(),
    };
    Ok((quad, CoupleOutcome { report, post_h_budget: h_budget, post_arg_budget: arg_budget }))
}

/// Summary of one full weight-reduction step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightReductionReport {
    /// Depth-1 iterations spent spreading the family.
    pub m_steps: usize,
    /// Depth of the cancellation-stage iteration.
    pub n_cancel: usize,
    /// Restoration iterations.
    pub n_restore: usize,
    pub total_depth: usize,
    /// Long pairs treated / skipped (no usable overlap).
    pub cancelled: usize,
    pub skipped: usize,
    pub gamma1: f64,
    pub reductions: Vec<ReductionReport>,
}

/// One round of the family-decay proposition: spread until pairs longer than
/// `3δ` carry weight `>= 3/4`, cancel every long pair through the
/// transversality table, then iterate `ñ_b = ⌈λ^{-1} ln(|b|/(1 − D/a))⌉`
/// more steps to restore `H <= a`. Returns the reduced family (weight
/// `e^{-γ₁} < 1`) and the measured `γ₁`.
pub fn weight_reduction_step(
    family: &StandardFamily,
    skew: &SkewProduct,
    delta: f64,
    witness: &TransversalityWitness,
    policy: &GridPolicy,
    restore_policy: &GridPolicy,
) -> Result<(StandardFamily, WeightReductionReport)> {
    let params = family.params;
    let b = params.b;
    if family.boundary_bound * delta >= 0.25 {
        return Err(Error::Precondition(format!(
            "need B delta < 1/4 (B = {}, delta = {delta})",
            family.boundary_bound
        )));
    }
    if b.abs() < witness.b0() {
        return Err(Error::BelowB0 { b: b.abs(), b0: witness.b0() });
    }
    let lam = skew.base.lambda;
    let a = params.a;
    let n_cancel = witness.n_delta;
    // Internal-phase condition: the pulled-back argument slope at the
    // cancellation stage, e^{-λn} arg_budget, must stay below |b| C₁ / 4 so
    // the phase difference is dominated by the Birkhoff term.
    let stage_arg = (-lam * n_cancel as f64).exp() * family.arg_budget.max(params.arg_bound());
    if stage_arg >= b.abs() * witness.c1 / 4.0 {
        return Err(Error::CannotReduce(format!(
            "witness depth {n_cancel} too shallow: e^(-λn) arg budget = {:.4} not below |b| C1/4 = {:.4}",
            stage_arg,
            b.abs() * witness.c1 / 4.0
        )));
    }

    // Stage 1: spread until long pairs dominate.
    let mut fam = family.clone();
    let mut m_steps = 0;
    while fam.weight_wider_than(3.0 * delta) < 0.75 * fam.total_weight() {
        if m_steps >= 24 {
            return Err(Error::CannotReduce(
                "long-pair weight did not reach 3/4 within 24 spreading steps".into(),
            ));
        }
        fam = iterate_family(&fam, 1, skew, policy)?;
        m_steps += 1;
    }

    // Stage 2: record long parents with a table cell inside their support.
    let step = 1.0 / witness.k_delta as f64;
    let long_parents: Vec<(usize, usize)> = fam
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, fp)| fp.pair.interval.len() > 3.0 * delta)
        .filter_map(|(j, fp)| {
            let iv = fp.pair.interval;
            let l0 = (iv.lo / step).ceil() as usize;
            let fits = ((l0 + 1) as f64) * step <= iv.hi + 1e-12 && l0 < witness.k_delta;
            fits.then_some((j, l0))
        })
        .collect();
    fam = iterate_family(&fam, n_cancel, skew, policy)?;

    // Stage 3: cancel the witness children of every long parent, batched
    // (each cancellation touches children of a distinct parent, so the
    // couples are disjoint and the family is rebuilt once).
    let mut children_of: Vec<Vec<usize>> = vec![Vec::new(); long_parents.len() + fam.pairs.len()];
    let mut parent_slot = vec![usize::MAX; fam.pairs.len().max(long_parents.len() * 2)];
    for (slot, &(parent, _)) in long_parents.iter().enumerate() {
        if parent >= parent_slot.len() {
            parent_slot.resize(parent + 1, usize::MAX);
        }
        parent_slot[parent] = slot;
    }
    for (i, fp) in fam.pairs.iter().enumerate() {
        if let Some(rec) = &fp.record {
            if rec.parent < parent_slot.len() && parent_slot[rec.parent] != usize::MAX {
                children_of[parent_slot[rec.parent]].push(i);
            }
        }
    }
    let mut cancelled = 0usize;
    let mut skipped = 0usize;
    let mut reductions = Vec::new();
    let mut replaced: Vec<bool> = vec![false; fam.pairs.len()];
    let mut new_pairs: Vec<FamilyPair> = Vec::new();
    let mut h_budget = fam.h_budget;
    let mut arg_budget = fam.arg_budget;
    for (slot, &(_, cell)) in long_parents.iter().enumerate() {
        let wp = &witness.pairs[cell];
        let mut best: Option<(usize, usize, Interval)> = None;
        for &i in &children_of[slot] {
            let ri = fam.pairs[i].record.as_ref().unwrap();
            if ri.word != wp.word1 {
                continue;
            }
            for &k in &children_of[slot] {
                let rk = fam.pairs[k].record.as_ref().unwrap();
                if rk.word != wp.word2 {
                    continue;
                }
                let iv1 = fam.pairs[i].pair.interval;
                let iv2 = fam.pairs[k].pair.interval;
                if let Some(ov) = iv1
                    .intersect(&iv2, 1e-9)
                    .and_then(|iv| iv.intersect(&wp.overlap, 1e-9))
                {
                    if best.as_ref().map_or(true, |(_, _, b)| ov.len() > b.len()) {
                        best = Some((i, k, ov));
                    }
                }
            }
        }
        let Some((i, k, ov)) = best else {
            skipped += 1;
            continue;
        };
        match cancel_couple(
            &fam.pairs[i],
            &fam.pairs[k],
            ov,
            wp.c1,
            params,
            fam.arg_budget,
            fam.total_weight(),
        ) {
            Ok((quad, report)) => {
                replaced[i] = true;
                replaced[k] = true;
                h_budget = h_budget.max(report.post_h_budget);
                arg_budget = arg_budget.max(report.post_arg_budget);
                new_pairs.extend(quad);
                reductions.push(report.report);
                cancelled += 1;
            }
            Err(Error::BelowB0 { .. }) => {
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if cancelled == 0 {
        return Err(Error::CannotReduce(format!(
            "no usable overlap among {} long parents (skipped {skipped})",
            long_parents.len()
        )));
    }
    let mut pairs: Vec<FamilyPair> = fam
        .pairs
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !replaced[*i])
        .map(|(_, p)| p)
        .collect();
    pairs.extend(new_pairs);
    let mut rebuilt = StandardFamily::from_pairs(pairs, params, family.boundary_bound);
    rebuilt.h_budget = h_budget;
    rebuilt.arg_budget = arg_budget;
    rebuilt.dropped_weight = fam.dropped_weight;
    rebuilt.z_defect = fam.z_defect;
    fam = rebuilt;

    // Stage 4: the restoration sweep, ñ_b = ⌈λ^{-1} ln(|b|/(1 − D/a))⌉ more
    // depth-1 iterations. This is the count that contracts a post-
    // cancellation budget of a|b| back to a; the measured budget can exceed
    // a|b| through the κ-ramp constant, so the residual budget after the
    // sweep is reported rather than asserted.
    let d = skew.base.distortion;
    let n_restore = ((b.abs() / (1.0 - d / a)).ln() / lam).ceil().max(1.0) as usize;
    for _ in 0..n_restore {
        fam = iterate_family(&fam, 1, skew, restore_policy)?;
    }

    let gamma1 = -(fam.total_weight() / family.total_weight()).ln();
    let report = WeightReductionReport {
        m_steps,
        n_cancel,
        n_restore,
        total_depth: m_steps + n_cancel + n_restore,
        cancelled,
        skipped,
        gamma1,
        reductions,
    };
    Ok((fam, report))
}

/// Decompose a Hölder observable `g = (g − c) + c` with
/// `c = 1 + |g|_α/a + sup|g|` into two standard families chopped into
/// `⌊1/ε₀⌋ + 1` equal pieces. Reconstruction `Σ w ρ = g` is exact.
pub fn holder_to_families(
    g: &GridDensity,
    params: PairParams,
    policy: &GridPolicy,
) -> Result<(StandardFamily, StandardFamily, f64)> {
    let alpha = params.alpha;
    // Hölder seminorm and sup estimates over dyadic node pairs.
    let vals = g.values();
    let n = vals.len();
    let spacing = g.spacing();
    let mut holder = 0.0f64;
    let mut m = n - 1;
    while m >= 1 {
        let sep = (m as f64 * spacing).powf(alpha);
        for i in 0..n - m {
            holder = holder.max((vals[i + m] - vals[i]).norm() / sep);
        }
        if m == 1 {
            break;
        }
        m /= 2;
    }
    let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let c = 1.0 + holder / params.a + sup;

    let pieces = (1.0 / params.eps0).floor() as usize + 1;
    let len = 1.0 / pieces as f64;
    let mut gc_pairs = Vec::with_capacity(pieces);
    let mut c_pairs = Vec::with_capacity(pieces);
    for j in 0..pieces {
        let iv = Interval::new(j as f64 * len, ((j + 1) as f64 * len).min(1.0));
        let nodes = policy.nodes_for(iv.len(), params.arg_bound()).max(
            (iv.len() / spacing).ceil() as usize + 2,
        );
        // g − c has modulus >= 1, so its polar form is well defined.
        let mut moduli = Vec::with_capacity(nodes);
        let mut phases = Vec::new();
        for i in 0..nodes {
            let x = iv.lerp(i as f64 / (nodes - 1) as f64);
            let v = g.eval(x) - Complex::new(c, 0.0);
            moduli.push(v.norm());
            phases.push(v.arg());
        }
        let phases = crate::grid::unwrap_phases(phases.into_iter());
        let grid = PolarGrid::new(iv, moduli, phases)?;
        let w = grid.l1_mass();
        let pair = StandardPair::with_budgets(grid, params, params.a, params.arg_bound())?;
        gc_pairs.push(FamilyPair { pair, weight: w, record: None });

        let cgrid = PolarGrid::from_fns(iv, 16.max(crate::grid::MIN_NODES), |_| c, |_| 0.0)?;
        let cw = cgrid.l1_mass();
        let cpair = StandardPair::with_budgets(cgrid, params, params.a, params.arg_bound())?;
        c_pairs.push(FamilyPair { pair: cpair, weight: cw, record: None });
    }
    // Declare the boundary bound from measurement (the generic 4/ε₀ bound
    // is far too pessimistic for near-uniform pieces).
    let gc_family = StandardFamily::from_pairs(gc_pairs, params, 1.0);
    let c_family = StandardFamily::from_pairs(c_pairs, params, 1.0);
    let measure_b = |fam: &StandardFamily| {
        let total = fam.total_weight();
        (1..=6)
            .map(|k| {
                let eps = params.eps0 * 0.5f64.powi(k);
                boundary_measure(fam, eps) / eps / total
            })
            .fold(0.0f64, f64::max)
            * 1.05
    };
    let mut gc_family = gc_family;
    let mut c_family = c_family;
    gc_family.boundary_bound = measure_b(&gc_family);
    c_family.boundary_bound = measure_b(&c_family);
    Ok((gc_family, c_family, c))
}

/// One checkpoint of the decay loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayCheckpoint {
    /// Total operator depth reached.
    pub depth: usize,
    /// Family weight bound `W₀ Π e^{-γ₁}` at this checkpoint.
    pub family_bound: f64,
    /// Direct `‖L_b^depth g₀‖_{L¹}` for the cross-check.
    pub direct_norm: f64,
    pub gamma1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayLoopReport {
    pub initial_weight: f64,
    pub checkpoints: Vec<DecayCheckpoint>,
    /// Sum of the per-round `γ₁`.
    pub total_gamma: f64,
}

/// Alternate weight-reduction and renormalization `k_steps` times starting
/// from the standard-family decomposition of `g₀`, cross-checking the
/// telescoped family bound against direct operator norms.
pub fn decay_loop(
    g0: &GridDensity,
    skew: &SkewProduct,
    params: PairParams,
    k_steps: usize,
    delta: f64,
    witness: &TransversalityWitness,
    policy: &GridPolicy,
    restore_policy: &GridPolicy,
    check_resolution: usize,
) -> Result<DecayLoopReport> {
    let b = params.b;
    if b.abs() < witness.b0() {
        return Err(Error::BelowB0 { b: b.abs(), b0: witness.b0() });
    }
    let (fam_gc, fam_c, _c) = holder_to_families(g0, params, policy)?;
    let mut pairs = fam_gc.pairs;
    pairs.extend(fam_c.pairs);
    let mut fam = StandardFamily::from_pairs(pairs, params, 1.0);
    let w0 = fam.total_weight();
    fam.normalize_weights();
    // Measured boundary bound of the normalized family.
    fam.boundary_bound = (1..=6)
        .map(|k| {
            let eps = params.eps0 * 0.5f64.powi(k);
            boundary_measure(&fam, eps) / eps
        })
        .fold(0.0f64, f64::max)
        * 1.05;

    // Direct-operator cross-check state.
    let op = TransferOperator::new(skew, 1, check_resolution)?;
    let mut direct = crate::transfer::to_full_circle(g0, check_resolution)?;

    let mut bound = w0;
    let mut total_gamma = 0.0;
    let mut depth = 0usize;
    let mut checkpoints = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        let (next, report) = weight_reduction_step(&fam, skew, delta, witness, policy, restore_policy)?;
        fam = next;
        fam.normalize_weights();
        bound *= (-report.gamma1).exp();
        total_gamma += report.gamma1;
        for _ in 0..report.total_depth {
            let vals = op.apply_values(direct.values(), b);
            direct = GridDensity::new(Interval::UNIT, vals)?;
        }
        depth += report.total_depth;
        checkpoints.push(DecayCheckpoint {
            depth,
            family_bound: bound,
            direct_norm: direct.l1_mass(),
            gamma1: report.gamma1,
        });
    }
    Ok(DecayLoopReport { initial_weight: w0, checkpoints, total_gamma })
}

/// Per-step weight trajectory rows `step,total_weight,gamma_running`.
pub fn write_reduction_csv<W: std::io::Write>(
    mut w: W,
    report: &DecayLoopReport,
) -> Result<()> {
    writeln!(w, "step,total_weight,gamma_running")?;
    let mut running = 0.0;
    for (i, cp) in report.checkpoints.iter().enumerate() {
        running += cp.gamma1;
        writeln!(w, "{},{},{}", i + 1, cp.family_bound, running)?;
    }
    Ok(())
}

/// Convenience: build a transversality witness table sized for a
/// weight-reduction run (cells of size `delta`, depth adequate for
/// `a e^{-λn} < C₁/4`).
pub fn reduction_witness(
    skew: &SkewProduct,
    delta: f64,
    a: f64,
    cfg: &SearchConfig,
) -> Result<TransversalityWitness> {
    match transversality_table(skew, delta, cfg)? {
        TableResult::Transversal(w) => {
            let lam = skew.base.lambda;
            if a * (-lam * w.n_delta as f64).exp() >= w.c1 / 4.0 {
                return Err(Error::CannotReduce(format!(
                    "table depth {} too shallow for a = {a}",
                    w.n_delta
                )));
            }
            Ok(w)
        }
        TableResult::CohomologySuspected { failed_interval, depth_cap } => {
            Err(Error::CannotReduce(format!(
                "cohomology suspected: no witness on [{:.3}, {:.3}) within depth {depth_cap}",
                failed_interval.lo, failed_interval.hi
            )))
        }
    }
}

/// `Σ_j w_j ∫_{∂_ε I_j} |ρ_j|` convenience re-export for reports.
pub fn family_boundary(family: &StandardFamily, eps: f64) -> f64 {
    boundary_measure(family, eps)
}

/// Assemble the family density and compare with a reference in L¹ (used by
/// the equivalence diagnostics).
pub fn family_l1_distance(
    family: &StandardFamily,
    reference: &GridDensity,
    resolution: usize,
) -> Result<f64> {
    let fd = family_density(family, resolution)?;
    let rf = crate::transfer::to_full_circle(reference, resolution)?;
    Ok(crate::transfer::l1_distance(&fd, &rf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::presets::*;
    use crate::families::random_pair;

    #[test]
    fn alpha2_sharpness_brute_force() {
        // x ↦ √(1+x+x²) − x is at most (√7−1)/2 on [1/2, 50].
        let a2 = alpha_2();
        let mut worst = 0.0f64;
        for k in 0..=500_000 {
            let x = 0.5 + 49.5 * k as f64 / 500_000.0;
            let v = (1.0 + x + x * x).sqrt() - x;
            worst = worst.max(v);
            assert!(v <= a2 + 1e-12, "x = {x}: {v} > {a2}");
        }
        // The maximum is attained at the left endpoint.
        assert!((worst - a2).abs() < 1e-9);
    }

    #[test]
    fn split_uniform_pair() {
        // Uniform density 1/|I| on |I| = 1/2 with a = ln 4: c = 1/8,
        // weights (c|I|, 1 − c|I|) = (1/16, 15/16).
        let params = PairParams::new((4.0f64).ln(), 0.0, 0.6, 1.0);
        let iv = Interval::new(0.2, 0.7);
        let pair = StandardPair::from_fns(iv, 64, params, |_| 1.0, |_| 0.3).unwrap();
        let split = split_pair(&pair).unwrap();
        assert!((split.c - 0.125).abs() < 1e-12);
        assert!((split.bar_weight - 1.0 / 16.0).abs() < 1e-10);
        assert!((split.tilde_weight - 15.0 / 16.0).abs() < 1e-10);
        // Reconstruction bar + tilde = ρ nodewise.
        for i in 0..pair.density.len_nodes() {
            let x = pair.density.node(i);
            let orig = pair.density.eval_complex(x);
            let back = split.bar.density.eval_complex(x) * split.bar_weight
                + split.tilde.density.eval_complex(x) * split.tilde_weight;
            assert!((orig - back).norm() < 1e-12);
        }
    }

    #[test]
    fn split_reconstruction_random_pairs() {
        let params = PairParams::new(2.0, 12.0, 0.4, 1.0);
        for seed in 0..20 {
            let pair = random_pair(
                Interval::new(0.1, 0.45),
                params,
                seed,
                &GridPolicy::default(),
            );
            let split = split_pair(&pair).unwrap();
            for i in 0..pair.density.len_nodes() {
                let x = pair.density.node(i);
                let orig = pair.density.eval_complex(x);
                let back = split.bar.density.eval_complex(x) * split.bar_weight
                    + split.tilde.density.eval_complex(x) * split.tilde_weight;
                assert!((orig - back).norm() < 1e-12);
            }
            // H(tilde) <= 4a (the remainder regularity bound).
            let rep = split.tilde.regularity();
            assert!(rep.holder_log <= 4.0 * params.a * (1.0 + 1e-6));
        }
    }

    #[test]
    fn phase_difference_trivial_and_analytic() {
        let params = PairParams::new(2.0, 200.0, 0.6, 1.0);
        let iv = Interval::new(0.3, 0.52);
        // Identical phases: Θ_b = 0.
        let p1 = StandardPair::from_fns(iv, 512, params, |_| 1.0, |x| 150.0 * x).unwrap();
        let p2 = StandardPair::from_fns(iv, 512, params, |_| 1.0, |x| 150.0 * x).unwrap();
        let pd = phase_difference(&p1, &p2, iv, 10.0).unwrap();
        assert!(pd.theta.iter().all(|&t| t.abs() < 1e-10));

        // Analytic slope check: Θ = 180x vs 30x gives Θ_b' = 150.
        let p3 = StandardPair::from_fns(iv, 512, params, |_| 1.0, |x| 30.0 * x).unwrap();
        let pd = phase_difference(&p1, &p3, iv, 200.0).unwrap();
        assert!(pd.monotone);
        assert!((pd.min_abs_slope - 120.0).abs() < 1.0);
        assert!((pd.max_abs_slope - 120.0).abs() < 1.0);
    }

    #[test]
    fn layout_linear_phase() {
        // Θ_b(x) = 100x on [0, 1): cells of Θ-length in [2π, 3π], each J_m
        // nonempty with width (arccos(1/4) − arccos(1/2)) / 100.
        let params = PairParams::new(2.0, 100.0, 1.0, 1.0);
        let iv = Interval::new(0.0, 0.99);
        let p1 = StandardPair::from_fns(iv, 4096, params, |_| 1.0, |x| 100.0 * x).unwrap();
        let p2 = StandardPair::from_fns(iv, 4096, params, |_| 1.0, |_| 0.0).unwrap();
        let pd = phase_difference(&p1, &p2, iv, 120.0).unwrap();
        let c1 = 50.0;
        let c_tau = 50.0;
        let layout = oscillation_layout(&pd, 100.0, c1, c_tau).unwrap();
        let expect_cells = (100.0 * 0.99 / (3.0 * std::f64::consts::PI)).floor() as usize;
        assert!(layout.cells.len() >= expect_cells, "{} cells", layout.cells.len());
        let jw_expect = ((0.25f64).acos() - (0.5f64).acos()) / 100.0;
        for cell in &layout.cells {
            let il = cell.i_m.len();
            assert!(il >= 2.0 * std::f64::consts::PI / 100.0 - 1e-6);
            assert!(il <= 3.0 * std::f64::consts::PI / 100.0 + 1e-6);
            assert!(cell.j_m.len() > 0.0);
            assert!((cell.j_m.len() - jw_expect).abs() < jw_expect * 0.2);
            // cos Θ_b within the band at the retained nodes.
            for k in 0..=8 {
                let x = cell.j_m.lerp(k as f64 / 8.0);
                let cosv = (100.0 * x).cos();
                assert!(cosv >= 0.25 - 0.02 && cosv <= 0.5 + 0.02);
            }
        }
    }

    #[test]
    fn kappa_function_properties() {
        let params = PairParams::new(2.0, 300.0, 1.0, 1.0);
        let iv = Interval::new(0.0, 0.9);
        let p1 = StandardPair::from_fns(iv, 8192, params, |_| 1.0, |x| 300.0 * x).unwrap();
        let p2 = StandardPair::from_fns(iv, 8192, params, |_| 1.0, |_| 0.0).unwrap();
        let pd = phase_difference(&p1, &p2, iv, 320.0).unwrap();
        let layout = oscillation_layout(&pd, 300.0, 150.0, 150.0).unwrap();
        // κ₀ = w₂/(2w₁) with w₁ = 0.6, w₂ = 0.4 is 1/3.
        let kappa0: f64 = 0.4 / (2.0 * 0.6);
        assert!((kappa0 - 1.0 / 3.0).abs() < 1e-12);
        let kappa = build_kappa(&layout, kappa0);
        for cell in &layout.cells {
            assert!((kappa.eval(cell.j_m_inner.midpoint()) - (1.0 - kappa0)).abs() < 1e-12);
            assert!((kappa.eval(cell.j_m.lo - 1e-6) - 1.0).abs() < 1e-12);
        }
        // Derivative bound |κ'| <= C_κ κ₀ |b|.
        let bound = layout.c_kappa() * kappa0 * 300.0;
        assert!(kappa.max_abs_deriv() <= bound, "{} > {bound}", kappa.max_abs_deriv());
        // Finite-difference check of the closed-form derivative, sampled
        // away from the C¹ seams (κ'' jumps there).
        let cell = layout.cells[0];
        for k in 0..40 {
            let x = cell.j_m.lerp((k as f64 + 0.5) / 41.0);
            let h = 1e-9 * cell.j_m.len().max(1e-6);
            let fd = (kappa.eval(x + h) - kappa.eval(x - h)) / (2.0 * h);
            let scale = 1.0 + kappa.max_abs_deriv();
            assert!((fd - kappa.deriv(x)).abs() < 1e-4 * scale, "x={x}: {fd} vs {}", kappa.deriv(x));
        }
    }

    #[test]
    fn kappa_empty_layout_is_identity() {
        let layout = OscillationLayout {
            cells: vec![],
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            k4: 1.0,
            b: 10.0,
            c1: 1.0,
            c_tau: 1.0,
        };
        let kappa = build_kappa(&layout, 0.25);
        for k in 0..32 {
            assert_eq!(kappa.eval(k as f64 / 32.0), 1.0);
        }
    }

    #[test]
    fn cancellation_on_synthetic_overlap() {
        // Two overlapping pairs with a linear phase difference: equivalence
        // exact nodewise, band inequality satisfied, weight strictly down.
        let b = 400.0;
        let params = PairParams::new(1.5, b, 0.5, 1.0);
        let iv1 = Interval::new(0.1, 0.45);
        let iv2 = Interval::new(0.15, 0.48);
        let p1 = StandardPair::from_fns(
            iv1,
            4096,
            params,
            |x| 1.0 + 0.2 * (std::f64::consts::TAU * x).sin(),
            move |x| 0.9 * b * x,
        )
        .unwrap();
        let p2 = StandardPair::from_fns(
            iv2,
            4096,
            params,
            |x| 1.0 + 0.1 * (std::f64::consts::TAU * x).cos(),
            move |x| -0.35 * b * x,
        )
        .unwrap();
        let family = StandardFamily::from_pairs(
            vec![
                FamilyPair { pair: p1, weight: 0.55, record: None },
                FamilyPair { pair: p2, weight: 0.45, record: None },
            ],
            params,
            8.0,
        );
        let overlap = Interval::new(0.16, 0.44);
        // Reference density before cancellation.
        let before = family_density(&family, 1 << 14).unwrap();
        let c1 = 0.9 * b + 0.35 * b; // |Θ_b'| / |b| scale fed as C1.
        let (after, report) = apply_cancellation(&family, 0, 1, overlap, c1 / b).unwrap();
        assert_eq!(after.pairs.len(), 4);
        assert!(report.equivalence_residual < 1e-10, "{}", report.equivalence_residual);
        assert!(report.new_total < report.old_total);
        assert!(report.gamma > 0.0);
        assert!(report.band_margin_lo >= -1e-9 && report.band_margin_hi >= -1e-9);
        assert!(report.kappa_deriv <= report.kappa_deriv_bound);
        // Weight decrease bounded by the paper's per-overlap factor on the
        // bar parts: bar1* + bar2* <= bar1 + α₂'' bar2 for some α₂'' < 1.
        assert!(report.bar_w1_star + report.bar_w2_star < report.bar_w1 + report.bar_w2);
        // Family density unchanged in L¹ (up to interpolation diagnostics).
        let after_density = family_density(&after, 1 << 14).unwrap();
        let dist = crate::transfer::l1_distance(&before, &after_density);
        assert!(dist < 2e-4, "assembled equivalence distance {dist:.3e}");
    }

    #[test]
    fn alpha2_band_restricted_to_overlap() {
        // The paper's α₂' bound applies to the I_*-restricted bar integrals.
        let b = 500.0;
        let params = PairParams::new(1.5, b, 0.6, 1.0);
        let iv = Interval::new(0.2, 0.5);
        let p1 = StandardPair::from_fns(iv, 8192, params, |_| 1.0, move |x| 0.8 * b * x)
            .unwrap();
        let p2 = StandardPair::from_fns(iv, 8192, params, |_| 1.0, |_| 0.1).unwrap();
        let family = StandardFamily::from_pairs(
            vec![
                FamilyPair { pair: p1.clone(), weight: 0.5, record: None },
                FamilyPair { pair: p2.clone(), weight: 0.5, record: None },
            ],
            params,
            8.0,
        );
        let (_, report) = apply_cancellation(&family, 0, 1, iv, 0.8).unwrap();
        // On the full shared support the α₂' factor bounds the decrease.
        let lhs = report.bar_w1_star + report.bar_w2_star;
        let rhs = report.bar_w1 + report.alpha2_eff * report.bar_w2;
        assert!(
            lhs <= rhs * (1.0 + 1e-6),
            "bar weights {lhs} vs alpha2'-bound {rhs}"
        );
    }
}
