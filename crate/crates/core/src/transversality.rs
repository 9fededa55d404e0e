//! Derivative-cone transversality: the UNI mechanism.
//!
//! The derivative cocycle `DF(u, v) = (f'u, τ'u + v)` preserves the cone
//! `K_η = {|v| <= η|u|}` with `η = ‖τ'/f'‖_∞ / (1 − ‖1/f'‖_∞)`. A slope `s`
//! transports as `s ↦ (τ' + s)/f'` along an inverse orbit. Disjointness of
//! the pushed cones at two inverse branches separates the pullback roof
//! slopes `(τ_n∘h_1)'` and `(τ_n∘h_2)'`; a persistent common direction
//! solves `f'·θ∘f = τ' + θ` and certifies a coboundary.

use crate::dynamics::{InverseBranch, SkewProduct, DEFAULT_BRANCH_CAP};
use crate::error::{Error, Result};
use crate::interval::Interval;
use serde::{Deserialize, Serialize};

/// A slope cone `{(u, v): v/u ∈ [lo, hi]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub lo: f64,
    pub hi: f64,
}

impl Cone {
    pub fn symmetric(eta: f64) -> Cone {
        Cone { lo: -eta, hi: eta }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, other: &Cone) -> bool {
        self.lo <= other.lo + 1e-12 && other.hi <= self.hi + 1e-12
    }

    /// Intersection, treating widths below `width_tol` as empty (touching
    /// cones count as transversal).
    pub fn intersect(&self, other: &Cone, width_tol: f64) -> Option<Cone> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if hi - lo >= width_tol {
            Some(Cone { lo, hi })
        } else {
            None
        }
    }

    /// Disjointness with a tolerance relative to the cone widths: an
    /// intersection thinner than `rel_tol * min(width)` counts as empty, so
    /// touching cones of positive width are transversal while degenerate
    /// zero-width cones lying on a common direction are not.
    pub fn disjoint_from(&self, other: &Cone, rel_tol: f64) -> bool {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        let tol = rel_tol * self.width().min(other.width()).min(1.0);
        hi - lo < tol
    }

    /// Slope gap to another cone (0 when they overlap).
    pub fn gap(&self, other: &Cone) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi).max(0.0)
    }
}

/// `η = ‖τ'/f'‖_∞ / (1 − ‖1/f'‖_∞)`: sampled sup in the numerator, the
/// declared expansion bound `‖1/f'‖ <= e^{-λ}` in the denominator.
pub fn cone_eta(skew: &SkewProduct) -> Result<f64> {
    let lam = skew.base.lambda;
    if lam <= 0.0 {
        return Err(Error::InvalidMap("map not expanding".into()));
    }
    let samples = 1 << 10;
    let mut sup = 0.0f64;
    for br in skew.base.branches() {
        for k in 0..=samples {
            let x = br.domain.lerp(k as f64 / samples as f64);
            sup = sup.max((skew.roof.deriv(x) / br.deriv(x)).abs());
        }
    }
    Ok(sup / (1.0 - (-lam).exp()))
}

/// Push a slope cone through `DF^n` along the inverse branch `h` at `x`:
/// the interval image of `s ↦ (τ'(y) + s)/f'(y)` applied along the inverse
/// orbit from the deepest preimage up.
pub fn push_cone(skew: &SkewProduct, h: &InverseBranch, cone: Cone, x: f64) -> Result<Cone> {
    if !h.domain.contains_closed(x) {
        return Err(Error::OutsideDomain { x, lo: h.domain.lo, hi: h.domain.hi });
    }
    let chain = skew.base.pullback(&h.word, x)?;
    let mut lo = cone.lo;
    let mut hi = cone.hi;
    for &y in chain.points.iter() {
        let tp = skew.roof.deriv(y);
        let fp = skew.base.deriv(y);
        let a = (tp + lo) / fp;
        let b = (tp + hi) / fp;
        lo = a.min(b);
        hi = a.max(b);
    }
    Ok(Cone { lo, hi })
}

/// `|(τ_n∘h_1)'(x) − (τ_n∘h_2)'(x)|`.
pub fn uni_separation(
    skew: &SkewProduct,
    h1: &InverseBranch,
    h2: &InverseBranch,
    x: f64,
) -> Result<f64> {
    let s1 = skew.roof_slope_along_branch(h1, x)?;
    let s2 = skew.roof_slope_along_branch(h2, x)?;
    Ok((s1 - s2).abs())
}

/// A verified transversality witness: branch pairs whose images overlap on
/// `I_*` with separated pullback roof slopes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessPair {
    pub word1: Vec<u16>,
    pub word2: Vec<u16>,
    pub overlap: Interval,
    /// Separation threshold held on the overlap.
    pub c1: f64,
    /// Overlap length.
    pub delta: f64,
    /// `min_j |h_j(I_*)|`: the least preimage length of the overlap.
    pub least_domain: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransversalityWitness {
    pub n_delta: usize,
    pub pairs: Vec<WitnessPair>,
    /// Global `C₁ = min_l C₁_l`.
    pub c1: f64,
    /// Global `Δ = min_l Δ_l`.
    pub delta: f64,
    /// `M(n_δ) = min` of the least preimage lengths.
    pub least_domain: f64,
    pub k_delta: usize,
}

impl TransversalityWitness {
    /// Admissibility threshold `b₀ = 4π / (C₁ Δ)`.
    pub fn b0(&self) -> f64 {
        4.0 * std::f64::consts::PI / (self.c1 * self.delta)
    }
}

/// Outcome of a witness search: a verified witness, or not found within the
/// depth cap (the legitimate outcome for cohomologous roofs).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum WitnessSearch {
    Found(TransversalityWitness),
    NotFound { depth_cap: usize, best_separation: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct SearchConfig {
    pub depth_cap: usize,
    /// Samples over a candidate overlap.
    pub samples: usize,
    pub branch_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { depth_cap: 12, samples: 256, branch_cap: DEFAULT_BRANCH_CAP }
    }
}

/// Search depths `1, 2, ...` for two inverse branches with cylinders inside
/// `I` whose images overlap on an interval where the slope separation
/// exceeds `C₁` (set to half the maximal sampled separation, re-verified on
/// a 10× finer sample with a 10% margin).
pub fn find_overlap_witness(
    skew: &SkewProduct,
    region: Interval,
    delta: f64,
    cfg: &SearchConfig,
) -> Result<WitnessSearch> {
    if delta >= region.len() {
        return Err(Error::Precondition(format!(
            "delta = {delta} must be below |I| = {}",
            region.len()
        )));
    }
    let eta = cone_eta(skew)?;
    let mut best_sep = 0.0f64;
    for n in 1..=cfg.depth_cap {
        if skew.base.branch_count().checked_pow(n as u32).map_or(true, |c| c > cfg.branch_cap) {
            break;
        }
        let branches = skew.base.inverse_branches(n, cfg.branch_cap)?;
        let inside: Vec<&InverseBranch> = branches
            .iter()
            .filter(|ib| region.lo <= ib.range.lo && ib.range.hi <= region.hi + 1e-12)
            .collect();
        if inside.len() < 2 {
            continue;
        }
        let mut best: Option<WitnessPair> = None;
        for (i, h1) in inside.iter().enumerate() {
            for h2 in inside.iter().skip(i + 1) {
                if let Some(mut wp) = try_pair(skew, h1, h2, eta, cfg.samples)? {
                    best_sep = best_sep.max(wp.c1 * 2.0);
                    if verify_pair(skew, h1, h2, eta, &mut wp, cfg.samples * 10)?
                        && best.as_ref().map_or(true, |b| wp.c1 * wp.delta > b.c1 * b.delta)
                    {
                        best = Some(wp);
                    }
                }
            }
        }
        if let Some(wp) = best {
            let (c1, delta_l, m) = (wp.c1, wp.delta, wp.least_domain);
            return Ok(WitnessSearch::Found(TransversalityWitness {
                n_delta: n,
                pairs: vec![wp],
                c1,
                delta: delta_l,
                least_domain: m,
                k_delta: 1,
            }));
        }
    }
    Ok(WitnessSearch::NotFound { depth_cap: cfg.depth_cap, best_separation: best_sep })
}

/// Candidate overlap with `C₁ = max_sep / 2`: the maximal run of samples
/// where the separation exceeds `1.25 C₁` (so the verification margin is
/// real) AND the pushed cones are disjoint. The cone condition is what
/// rules out cohomologous roofs, whose finite-depth separations are positive
/// but whose pushed cones always share a direction.
fn try_pair(
    skew: &SkewProduct,
    h1: &InverseBranch,
    h2: &InverseBranch,
    eta: f64,
    samples: usize,
) -> Result<Option<WitnessPair>> {
    let Some(overlap) = h1.domain.intersect(&h2.domain, 1e-9) else {
        return Ok(None);
    };
    let k_eta = Cone::symmetric(eta);
    let seps: Vec<f64> = (0..=samples)
        .map(|k| uni_separation(skew, h1, h2, overlap.lerp(k as f64 / samples as f64)))
        .collect::<Result<_>>()?;
    let disjoint: Vec<bool> = (0..=samples)
        .map(|k| -> Result<bool> {
            let x = overlap.lerp(k as f64 / samples as f64);
            let c1 = push_cone(skew, h1, k_eta, x)?;
            let c2 = push_cone(skew, h2, k_eta, x)?;
            Ok(c1.disjoint_from(&c2, 1e-9))
        })
        .collect::<Result<_>>()?;
    let max_sep = seps.iter().copied().fold(0.0f64, f64::max);
    if max_sep <= 1e-9 {
        return Ok(None);
    }
    let c1 = max_sep / 2.0;
    let threshold = 1.25 * c1;
    let mut best_run: Option<(usize, usize)> = None;
    let mut run_start: Option<usize> = None;
    for (k, (&s, &dj)) in seps.iter().zip(&disjoint).enumerate() {
        let ok = s > threshold && dj;
        if ok {
            run_start.get_or_insert(k);
        }
        if !ok || k == samples {
            if let Some(st) = run_start.take() {
                let end = if !ok { k } else { k + 1 };
                if best_run.map_or(true, |(a, b)| end - st > b - a) {
                    best_run = Some((st, end));
                }
            }
        }
    }
    let Some((st, end)) = best_run else { return Ok(None) };
    if end - st < 2 {
        return Ok(None);
    }
    let i_star = Interval::new(
        overlap.lerp(st as f64 / samples as f64),
        overlap.lerp((end - 1) as f64 / samples as f64),
    );
    if i_star.len() < 1e-9 {
        return Ok(None);
    }
    let least_domain = preimage_len(skew, h1, i_star)?.min(preimage_len(skew, h2, i_star)?);
    Ok(Some(WitnessPair {
        word1: h1.word.clone(),
        word2: h2.word.clone(),
        overlap: i_star,
        c1,
        delta: i_star.len(),
        least_domain,
    }))
}

fn preimage_len(skew: &SkewProduct, h: &InverseBranch, iv: Interval) -> Result<f64> {
    let a = skew.base.pullback(&h.word, iv.lo)?.points[0];
    let b = skew.base.pullback(&h.word, iv.hi)?.points[0];
    Ok((b - a).abs())
}

/// Re-verify the candidate on a finer sample: the separation must exceed
/// `1.1 C₁` and the pushed cones stay disjoint everywhere on `I_*`.
fn verify_pair(
    skew: &SkewProduct,
    h1: &InverseBranch,
    h2: &InverseBranch,
    eta: f64,
    wp: &mut WitnessPair,
    samples: usize,
) -> Result<bool> {
    let k_eta = Cone::symmetric(eta);
    let mut min_sep = f64::INFINITY;
    for k in 0..=samples {
        let x = wp.overlap.lerp(k as f64 / samples as f64);
        min_sep = min_sep.min(uni_separation(skew, h1, h2, x)?);
        let c1 = push_cone(skew, h1, k_eta, x)?;
        let c2 = push_cone(skew, h2, k_eta, x)?;
        if !c1.disjoint_from(&c2, 1e-9) {
            return Ok(false);
        }
    }
    Ok(min_sep > 1.1 * wp.c1)
}

/// Verdict of the δ-grid transversality table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum TableResult {
    /// Witnesses found for every grid interval at a common depth.
    Transversal(TransversalityWitness),
    /// Some interval admits no separated pair up to the cap.
    CohomologySuspected { failed_interval: Interval, depth_cap: usize },
}

/// Cover the circle by `k_δ = ⌈1/δ⌉` intervals and find a witness pair per
/// interval at a common depth; aggregate `Δ = min_l Δ_l` and `M(n_δ)`.
pub fn transversality_table(
    skew: &SkewProduct,
    delta: f64,
    cfg: &SearchConfig,
) -> Result<TableResult> {
    assert!(delta > 0.0);
    let eta = cone_eta(skew)?;
    let k_delta = (1.0 / delta).ceil() as usize;
    let step = 1.0 / k_delta as f64;
    let mut last_failed = Interval::new(0.0, step);
    for n in 1..=cfg.depth_cap {
        if skew.base.branch_count().checked_pow(n as u32).map_or(true, |c| c > cfg.branch_cap) {
            break;
        }
        let branches = skew.base.inverse_branches(n, cfg.branch_cap)?;
        let mut pairs = Vec::with_capacity(k_delta);
        let mut all_found = true;
        for l in 0..k_delta {
            let cell = Interval::new(l as f64 * step, ((l + 1) as f64 * step).min(1.0));
            let inside: Vec<&InverseBranch> = branches
                .iter()
                .filter(|ib| cell.lo <= ib.range.lo && ib.range.hi <= cell.hi + 1e-12)
                .collect();
            let mut best: Option<WitnessPair> = None;
            for (i, h1) in inside.iter().enumerate() {
                for h2 in inside.iter().skip(i + 1) {
                    if let Some(mut wp) = try_pair(skew, h1, h2, eta, cfg.samples)? {
                        if verify_pair(skew, h1, h2, eta, &mut wp, cfg.samples * 4)?
                            && best.as_ref().map_or(true, |b| wp.c1 * wp.delta > b.c1 * b.delta)
                        {
                            best = Some(wp);
                        }
                    }
                }
            }
            match best {
                Some(wp) => pairs.push(wp),
                None => {
                    all_found = false;
                    last_failed = cell;
                    break;
                }
            }
        }
        if all_found {
            let c1 = pairs.iter().map(|p| p.c1).fold(f64::INFINITY, f64::min);
            let delta_g = pairs.iter().map(|p| p.delta).fold(f64::INFINITY, f64::min);
            let m = pairs.iter().map(|p| p.least_domain).fold(f64::INFINITY, f64::min);
            return Ok(TableResult::Transversal(TransversalityWitness {
                n_delta: n,
                pairs,
                c1,
                delta: delta_g,
                least_domain: m,
                k_delta,
            }));
        }
    }
    Ok(TableResult::CohomologySuspected {
        failed_interval: last_failed,
        depth_cap: cfg.depth_cap,
    })
}

/// Verdict of the cone-intersection cohomology detector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum CohomologyVerdict {
    /// A pair of pushed cones separated at this depth/point.
    Transversal { depth: usize, x: f64, gap: f64 },
    /// Cone intersections stayed nonempty with shrinking width; the limiting
    /// slope field solves the cohomological equation up to `residual`.
    CohomologousSuspected {
        theta: Vec<(f64, f64)>,
        residual: f64,
        final_width: f64,
    },
}

/// Intersect pushed cones over all depth-`n` branches at sampled points.
///
/// Reports `Transversal` at the first depth where some pair of cones
/// separates at some sample; otherwise recovers the common direction `θ(x)`
/// and measures the cohomological residual `‖f'·θ∘f − τ' − θ‖_∞`.
pub fn cohomology_detector(
    skew: &SkewProduct,
    n_max: usize,
    tol: f64,
) -> Result<CohomologyVerdict> {
    let eta = cone_eta(skew)?;
    let cone = Cone::symmetric(eta);
    let n_samples = 64;
    let xs: Vec<f64> = (0..n_samples)
        .map(|k| (k as f64 + 0.37) / n_samples as f64)
        .collect();
    let mut theta: Vec<(f64, f64)> = Vec::new();
    let mut final_width = 0.0f64;
    for n in 1..=n_max {
        if skew.base.branch_count().checked_pow(n as u32).map_or(true, |c| c > DEFAULT_BRANCH_CAP)
        {
            break;
        }
        let branches = skew.base.inverse_branches(n, DEFAULT_BRANCH_CAP)?;
        theta.clear();
        final_width = 0.0;
        for &x in &xs {
            let cones: Vec<Cone> = branches
                .iter()
                .filter(|ib| ib.domain.contains_closed(x))
                .map(|ib| push_cone(skew, ib, cone, x))
                .collect::<Result<_>>()?;
            // Pairwise separation check.
            for (i, c1) in cones.iter().enumerate() {
                for c2 in cones.iter().skip(i + 1) {
                    if c1.disjoint_from(c2, 1e-9) {
                        return Ok(CohomologyVerdict::Transversal {
                            depth: n,
                            x,
                            gap: c1.gap(c2),
                        });
                    }
                }
            }
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for c in &cones {
                lo = lo.max(c.lo);
                hi = hi.min(c.hi);
            }
            theta.push((x, 0.5 * (lo + hi)));
            final_width = final_width.max(hi - lo);
        }
    }
    // Residual of f'·θ∘f = τ' + θ on the sampled field (interpolating θ∘f).
    let interp = |x: f64| -> f64 {
        let x = crate::interval::wrap_unit(x);
        let pos = x * n_samples as f64 - 0.37;
        let i = pos.floor();
        let frac = pos - i;
        let i0 = ((i as isize).rem_euclid(n_samples as isize)) as usize;
        let i1 = (i0 + 1) % n_samples;
        theta[i0].1 * (1.0 - frac) + theta[i1].1 * frac
    };
    let mut residual = 0.0f64;
    for &(x, th) in &theta {
        let lhs = skew.base.deriv(x) * interp(skew.base.apply(x));
        let rhs = skew.roof.deriv(x) + th;
        residual = residual.max((lhs - rhs).abs());
    }
    let _ = tol;
    Ok(CohomologyVerdict::CohomologousSuspected { theta, residual, final_width })
}
