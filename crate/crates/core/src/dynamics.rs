//! Piecewise expanding circle maps, inverse branch trees, and roof functions.
//!
//! A map is a finite ordered list of monotone branches whose half-open domains
//! partition `[0, 1)`. Each branch carries a closed-form lift; the branch image
//! must fit in `[0, 1]` after subtracting an integer, so a piece whose image
//! crosses the circle cut has to be supplied pre-split at the preimage of 0.
//! Inverse branches of `f^n` are indexed by itineraries `(b_0, ..., b_{n-1})`
//! with `f^j(h(x)) ∈ O_{b_j}`.

use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::interval::{union_length, wrap_unit, Interval};
use serde::{Deserialize, Serialize};

/// Tolerance for the bisection + Newton inverse-branch solves.
const INVERT_TOL: f64 = 1e-14;
/// Samples per branch for validating declared analytic bounds.
const VALIDATION_SAMPLES: usize = 1 << 12;
/// Default cap on enumerated inverse branches.
pub const DEFAULT_BRANCH_CAP: usize = 4_000_000;

/// One monotone branch of the map, with its lift formula.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    /// Monotonicity interval `O_h ⊆ [0, 1)` (half-open).
    pub domain: Interval,
    /// Closed-form lift on the domain.
    pub formula: Formula,
    /// Image `f(O_h)` reduced into `[0, 1]`.
    pub image: Interval,
    /// Integer subtracted from the lift to land in `[0, 1]`.
    pub lift_offset: f64,
    pub increasing: bool,
}

impl Branch {
    fn build(domain: Interval, formula: Formula) -> Result<Branch> {
        let va = formula.eval(domain.lo);
        let vb = formula.eval(domain.hi);
        let increasing = vb > va;
        let (m, big) = if increasing { (va, vb) } else { (vb, va) };
        if big - m > 1.0 + 1e-9 {
            return Err(Error::InvalidMap(format!(
                "branch on [{}, {}) has image longer than the circle ({:.6})",
                domain.lo,
                domain.hi,
                big - m
            )));
        }
        // Snap to the nearest integer when the lower image endpoint sits on
        // the circle cut (branch boundaries are solved numerically).
        let k = if (m - m.round()).abs() < 1e-9 { m.round() } else { m.floor() };
        if big - k > 1.0 + 1e-9 {
            return Err(Error::InvalidMap(format!(
                "branch on [{}, {}) wraps the circle cut; split it at the preimage of 0",
                domain.lo, domain.hi
            )));
        }
        let image = Interval::new((m - k).max(0.0), (big - k).min(1.0));
        Ok(Branch { domain, formula, image, lift_offset: k, increasing })
    }

    /// Branch value as a circle point in `[0, 1]`.
    pub fn apply(&self, x: f64) -> f64 {
        (self.formula.eval(x) - self.lift_offset).clamp(0.0, 1.0)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.formula.deriv(x)
    }

    /// Right inverse: solve `f(y) = x` for `y` in the branch domain.
    ///
    /// `x` must lie in the branch image. Affine branches invert in closed
    /// form; otherwise bisection brackets and Newton polishes to 1e-14.
    pub fn invert(&self, x: f64) -> Result<f64> {
        if !(self.image.lo - 1e-12..=self.image.hi + 1e-12).contains(&x) {
            return Err(Error::OutsideDomain { x, lo: self.image.lo, hi: self.image.hi });
        }
        let target = x.clamp(self.image.lo, self.image.hi) + self.lift_offset;
        if let Some((c, s)) = self.formula.as_affine() {
            return Ok(((target - c) / s).clamp(self.domain.lo, self.domain.hi));
        }
        let (mut lo, mut hi) = (self.domain.lo, self.domain.hi);
        // Bisection on the (monotone) lift until Newton is safe.
        let sign = if self.increasing { 1.0 } else { -1.0 };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = sign * (self.formula.eval(mid) - target);
            if v.abs() < INVERT_TOL {
                return Ok(mid);
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-6 {
                break;
            }
        }
        let mut y = 0.5 * (lo + hi);
        let mut best = y;
        let mut best_res = f64::INFINITY;
        for _ in 0..60 {
            let r = self.formula.eval(y) - target;
            if r.abs() < best_res {
                best_res = r.abs();
                best = y;
            }
            if r.abs() < INVERT_TOL * 1e-2 {
                break;
            }
            let d = self.formula.deriv(y);
            let mut step = r / d;
            let max_step = 0.5 * (hi - lo).max(1e-12);
            step = step.clamp(-max_step, max_step);
            y = (y - step).clamp(self.domain.lo, self.domain.hi);
        }
        Ok(best)
    }
}

/// A piecewise `C^{1+α}` expanding circle map with declared constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseMap {
    branches: Vec<Branch>,
    /// Hölder exponent of the branch derivatives.
    pub alpha: f64,
    /// Expansion exponent (nats): `|f'| >= e^lambda` with `lambda >= ln 2`.
    pub lambda: f64,
    /// Distortion constant `D` in `|h'(x)|/|h'(y)| <= e^{D |x-y|^alpha}`.
    pub distortion: f64,
}

impl PiecewiseMap {
    /// Validate and build a map from ordered `(domain, lift formula)` pieces.
    ///
    /// Checks: domains partition `[0, 1)`; sampled `|f'| >= e^lambda` with
    /// `lambda >= ln 2`; sampled distortion within the declared `D`. Declared
    /// constants are trusted where sampling cannot decide; sampling failures
    /// are hard errors.
    pub fn new(
        pieces: Vec<(Interval, Formula)>,
        alpha: f64,
        lambda: f64,
        distortion: f64,
    ) -> Result<PiecewiseMap> {
        if pieces.is_empty() {
            return Err(Error::InvalidMap("no branches".into()));
        }
        if !(0.0 < alpha && alpha <= 1.0) {
            return Err(Error::InvalidMap(format!("alpha = {alpha} outside (0, 1]")));
        }
        if lambda < (2.0f64).ln() - 1e-12 {
            return Err(Error::InvalidMap(format!(
                "lambda = {lambda:.6} violates lambda >= ln 2 = {:.6}",
                (2.0f64).ln()
            )));
        }
        if distortion < 0.0 {
            return Err(Error::InvalidMap("distortion must be nonnegative".into()));
        }
        let mut sorted = pieces;
        sorted.sort_by(|a, b| a.0.lo.total_cmp(&b.0.lo));
        if sorted[0].0.lo.abs() > 1e-12 || (sorted.last().unwrap().0.hi - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMap("branch domains must cover [0, 1)".into()));
        }
        for w in sorted.windows(2) {
            if (w[0].0.hi - w[1].0.lo).abs() > 1e-12 {
                return Err(Error::InvalidMap(format!(
                    "gap or overlap between branch domains at {}",
                    w[0].0.hi
                )));
            }
        }
        let mut branches = Vec::with_capacity(sorted.len());
        for (domain, formula) in sorted {
            branches.push(Branch::build(domain, formula)?);
        }
        let map = PiecewiseMap { branches, alpha, lambda, distortion };
        map.validate_expansion()?;
        map.validate_distortion()?;
        Ok(map)
    }

    fn validate_expansion(&self) -> Result<()> {
        let floor = self.lambda.exp() * (1.0 - 1e-9);
        for (i, br) in self.branches.iter().enumerate() {
            for k in 0..=VALIDATION_SAMPLES {
                let x = br.domain.lerp(k as f64 / VALIDATION_SAMPLES as f64);
                let d = br.deriv(x).abs();
                if d < floor {
                    return Err(Error::InvalidMap(format!(
                        "branch {i}: |f'({x:.6})| = {d:.6} below e^lambda = {:.6}",
                        self.lambda.exp()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sampled check of `|ln|f'(u)| - ln|f'(v)|| <= D |f(u) - f(v)|^alpha`
    /// over dyadic-separation pairs, which is the depth-1 distortion bound
    /// read through `x = f(u)`.
    fn validate_distortion(&self) -> Result<()> {
        let n = 256;
        for (i, br) in self.branches.iter().enumerate() {
            let logd: Vec<f64> = (0..=n)
                .map(|k| br.deriv(br.domain.lerp(k as f64 / n as f64)).abs().ln())
                .collect();
            let vals: Vec<f64> = (0..=n)
                .map(|k| br.formula.eval(br.domain.lerp(k as f64 / n as f64)))
                .collect();
            let mut m = n;
            while m >= 1 {
                for j in 0..=(n - m) {
                    let dx = (vals[j + m] - vals[j]).abs();
                    let lhs = (logd[j + m] - logd[j]).abs();
                    let bound = self.distortion * dx.powf(self.alpha) + 1e-9;
                    if lhs > bound {
                        return Err(Error::InvalidMap(format!(
                            "branch {i}: sampled distortion {lhs:.3e} exceeds D|x-y|^alpha = {bound:.3e}"
                        )));
                    }
                }
                m /= 2;
            }
        }
        Ok(())
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Branch index containing the circle point `x` (half-open convention).
    pub fn branch_index(&self, x: f64) -> usize {
        let x = wrap_unit(x);
        match self
            .branches
            .binary_search_by(|br| br.domain.lo.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// `f(x)` as a circle point in `[0, 1)`.
    pub fn apply(&self, x: f64) -> f64 {
        let x = wrap_unit(x);
        let br = &self.branches[self.branch_index(x)];
        wrap_unit(br.apply(x))
    }

    /// `f'(x)` with the half-open branch lookup.
    pub fn deriv(&self, x: f64) -> f64 {
        let x = wrap_unit(x);
        self.branches[self.branch_index(x)].deriv(x)
    }

    /// Partition endpoints of the branch domains.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.branches.iter().map(|b| b.domain.lo).collect();
        e.push(1.0);
        e
    }

    /// All inverse branches of `f^n` with nonempty domain, in word order.
    ///
    /// Fails with a resource error when the enumeration would exceed `cap`
    /// (use [`DEFAULT_BRANCH_CAP`] unless a tighter budget is needed).
    pub fn inverse_branches(&self, n: usize, cap: usize) -> Result<Vec<InverseBranch>> {
        assert!(n >= 1, "depth must be at least 1");
        let mut level: Vec<InverseBranch> = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, br)| InverseBranch {
                word: vec![i as u16],
                domain: br.image,
                range: br.domain,
            })
            .collect();
        for _depth in 1..n {
            if level.len().saturating_mul(self.branches.len()) > cap {
                return Err(Error::BranchCapExceeded { depth: n, cap });
            }
            let mut next = Vec::with_capacity(level.len() * self.branches.len());
            for ib in &level {
                for (j, br) in self.branches.iter().enumerate() {
                    // Word extension appends the last symbol: h_{w'} = h_w ∘ h_j,
                    // whose domain is the branch-j image of dom(h_w) ∩ O_j.
                    let Some(cut) = ib.domain.intersect(&br.domain, 1e-13) else {
                        continue;
                    };
                    let a = br.apply(cut.lo);
                    let b = br.apply(cut.hi);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    if hi - lo < 1e-13 {
                        continue;
                    }
                    let ra = self.pullback_point(&ib.word, cut.lo)?;
                    let rb = self.pullback_point(&ib.word, cut.hi)?;
                    let (rlo, rhi) = if ra <= rb { (ra, rb) } else { (rb, ra) };
                    let mut word = ib.word.clone();
                    word.push(j as u16);
                    next.push(InverseBranch {
                        word,
                        domain: Interval::new(lo, hi),
                        range: Interval::new(rlo, rhi),
                    });
                }
            }
            level = next;
        }
        Ok(level)
    }

    /// Evaluate `h_w(x)` for an itinerary word, without derivative bookkeeping.
    fn pullback_point(&self, word: &[u16], x: f64) -> Result<f64> {
        let mut z = x;
        for &b in word.iter().rev() {
            z = self.branches[b as usize].invert(z)?;
        }
        Ok(z)
    }

    /// Full pullback chain for `h_w` at `x`: the inverse orbit
    /// `y_j = f^j(h_w(x))` together with the signed derivative `h_w'(x)`.
    pub fn pullback(&self, word: &[u16], x: f64) -> Result<PullbackChain> {
        let n = word.len();
        let mut points = vec![0.0; n];
        let mut z = x;
        for (j, &b) in word.iter().enumerate().rev() {
            z = self.branches[b as usize].invert(z)?;
            points[j] = z;
        }
        let mut deriv = 1.0;
        for (j, &b) in word.iter().enumerate() {
            deriv /= self.branches[b as usize].deriv(points[j]);
        }
        Ok(PullbackChain { points, deriv })
    }

    /// Smallest `N` such that every depth-`n` cylinder maps onto the circle
    /// under `f^N`, up to `resolution` of full measure.
    pub fn covering_time(&self, n: usize, resolution: f64, cap: usize) -> Result<usize> {
        let branches = self.inverse_branches(n, DEFAULT_BRANCH_CAP)?;
        let mut worst = 0usize;
        for ib in &branches {
            let mut pieces = vec![ib.range];
            let mut covered = union_length(&mut pieces, 1e-12) >= 1.0 - resolution;
            let mut steps = 0usize;
            while !covered {
                if steps >= cap {
                    let deficit = 1.0 - union_length(&mut pieces, 1e-12);
                    return Err(Error::NotCovering { cap, deficit });
                }
                pieces = self.forward_image(&pieces);
                steps += 1;
                covered = union_length(&mut pieces, 1e-12) >= 1.0 - resolution;
            }
            worst = worst.max(steps);
        }
        Ok(worst)
    }

    /// Forward image of a union of intervals under one application of `f`.
    fn forward_image(&self, pieces: &[Interval]) -> Vec<Interval> {
        let mut out = Vec::new();
        for piece in pieces {
            for br in &self.branches {
                if let Some(cut) = piece.intersect(&br.domain, 1e-13) {
                    let a = br.apply(cut.lo);
                    let b = br.apply(cut.hi);
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    if hi - lo > 1e-13 {
                        out.push(Interval::new(lo, hi));
                    }
                }
            }
        }
        out
    }
}

/// Inverse orbit data for one branch word at one point.
pub struct PullbackChain {
    /// `y_j = f^j(h(x))` for `j = 0..n`; `points[0] = h(x)`.
    pub points: Vec<f64>,
    /// Signed derivative `h'(x)` (product of step inverse derivatives).
    pub deriv: f64,
}

/// An inverse branch `h` of `f^n`: domain `f^n(O_h)`, range `O_h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InverseBranch {
    /// Itinerary `(b_0, ..., b_{n-1})` with `f^j(h(x)) ∈ O_{b_j}`.
    pub word: Vec<u16>,
    pub domain: Interval,
    pub range: Interval,
}

impl InverseBranch {
    pub fn depth(&self) -> usize {
        self.word.len()
    }
}

/// Piecewise `C¹` roof function with its declared pullback-slope bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoofFunction {
    pieces: Vec<(Interval, Formula)>,
    /// Declared bound on `|(τ_n ∘ h)'|` over all depths and branches.
    pub c_tau: f64,
}

impl RoofFunction {
    pub fn new(pieces: Vec<(Interval, Formula)>, c_tau: f64) -> Result<RoofFunction> {
        if pieces.is_empty() {
            return Err(Error::InvalidRoof("no pieces".into()));
        }
        if c_tau < 0.0 || !c_tau.is_finite() {
            return Err(Error::InvalidRoof(format!("C_tau = {c_tau} must be finite and >= 0")));
        }
        let mut sorted = pieces;
        sorted.sort_by(|a, b| a.0.lo.total_cmp(&b.0.lo));
        if sorted[0].0.lo.abs() > 1e-12 || (sorted.last().unwrap().0.hi - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidRoof("pieces must cover [0, 1)".into()));
        }
        for w in sorted.windows(2) {
            if (w[0].0.hi - w[1].0.lo).abs() > 1e-12 {
                return Err(Error::InvalidRoof(format!("gap between pieces at {}", w[0].0.hi)));
            }
        }
        Ok(RoofFunction { pieces: sorted, c_tau })
    }

    pub fn single(formula: Formula, c_tau: f64) -> Result<RoofFunction> {
        RoofFunction::new(vec![(Interval::UNIT, formula)], c_tau)
    }

    fn piece_at(&self, x: f64) -> &(Interval, Formula) {
        let x = wrap_unit(x);
        let i = match self
            .pieces
            .binary_search_by(|p| p.0.lo.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        &self.pieces[i]
    }

    pub fn value(&self, x: f64) -> f64 {
        let p = self.piece_at(x);
        p.1.eval(wrap_unit(x))
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let p = self.piece_at(x);
        p.1.deriv(wrap_unit(x))
    }

    pub fn endpoints(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.pieces.iter().map(|p| p.0.lo).collect();
        e.push(1.0);
        e
    }

    /// Sampled sup of `|τ'|`.
    pub fn sup_deriv(&self, samples: usize) -> f64 {
        let mut sup: f64 = 0.0;
        for (iv, f) in &self.pieces {
            for k in 0..=samples {
                let x = iv.lerp(k as f64 / samples as f64);
                sup = sup.max(f.deriv(x).abs());
            }
        }
        sup
    }
}

/// The skew product `F(x, y) = (f(x), y + τ(x))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkewProduct {
    pub base: PiecewiseMap,
    pub roof: RoofFunction,
}

impl SkewProduct {
    /// Build and spot-check the roof regularity bound `|(τ_n ∘ h)'| <= C_τ`
    /// on sampled branches at small depths.
    pub fn new(base: PiecewiseMap, roof: RoofFunction) -> Result<SkewProduct> {
        let skew = SkewProduct { base, roof };
        for n in 1..=3usize {
            if skew.base.branch_count().pow(n as u32) > 4096 {
                break;
            }
            let branches = skew.base.inverse_branches(n, DEFAULT_BRANCH_CAP)?;
            for ib in &branches {
                for k in 1..8 {
                    let x = ib.domain.lerp(k as f64 / 8.0);
                    let s = skew.roof_slope_along_branch(ib, x)?;
                    if s.abs() > skew.roof.c_tau * (1.0 + 1e-6) + 1e-12 {
                        return Err(Error::InvalidRoof(format!(
                            "sampled |(tau_n o h)'| = {:.6} exceeds declared C_tau = {:.6} at depth {n}",
                            s.abs(),
                            skew.roof.c_tau
                        )));
                    }
                }
            }
        }
        Ok(skew)
    }

    /// Birkhoff sum `τ_n(x) = Σ_{j<n} τ(f^j x)` along the forward orbit.
    ///
    /// Errors when the orbit passes within `tol` of a partition endpoint of
    /// the joint partition of `f` and `τ`.
    pub fn birkhoff_roof(&self, n: usize, x: f64, tol: f64) -> Result<f64> {
        let mut endpoints = self.base.endpoints();
        endpoints.extend(self.roof.endpoints());
        let mut z = wrap_unit(x);
        let mut sum = 0.0;
        for step in 0..n {
            for &e in &endpoints {
                if (z - e).abs() < tol || (z - e + 1.0).abs() < tol || (z - e - 1.0).abs() < tol {
                    return Err(Error::BoundaryHit { step, x: z });
                }
            }
            sum += self.roof.value(z);
            z = self.base.apply(z);
        }
        Ok(sum)
    }

    /// Birkhoff sum along an inverse branch: `τ_n(h(x))`.
    pub fn birkhoff_along_branch(&self, h: &InverseBranch, x: f64) -> Result<f64> {
        let chain = self.base.pullback(&h.word, x)?;
        Ok(chain.points.iter().map(|&y| self.roof.value(y)).sum())
    }

    /// `(τ_n ∘ h)'(x)` by the chain rule over the branch word.
    pub fn roof_slope_along_branch(&self, h: &InverseBranch, x: f64) -> Result<f64> {
        if !h.domain.contains_closed(x) {
            return Err(Error::OutsideDomain { x, lo: h.domain.lo, hi: h.domain.hi });
        }
        let chain = self.base.pullback(&h.word, x)?;
        let n = h.word.len();
        let mut p = 1.0;
        let mut slope = 0.0;
        for j in (0..n).rev() {
            p /= self.base.deriv_on_branch(h.word[j] as usize, chain.points[j]);
            slope += self.roof.deriv(chain.points[j]) * p;
        }
        Ok(slope)
    }
}

impl PiecewiseMap {
    /// Branch derivative evaluated on the branch's own formula (no lookup).
    fn deriv_on_branch(&self, idx: usize, y: f64) -> f64 {
        self.branches[idx].deriv(y)
    }
}

/// Ready-made maps and roofs used across tests and experiments.
pub mod presets {
    use super::*;

    /// `f(x) = 2x mod 1`. Note `lambda = ln 2` sits exactly on the admissibility
    /// boundary: the map constructs, but the standard-family parameter solver
    /// will report the growth inequality as infeasible.
    pub fn doubling() -> PiecewiseMap {
        PiecewiseMap::new(
            vec![
                (Interval::new(0.0, 0.5), Formula::affine(0.0, 2.0)),
                (Interval::new(0.5, 1.0), Formula::affine(0.0, 2.0)),
            ],
            1.0,
            (2.0f64).ln(),
            0.0,
        )
        .expect("doubling preset is valid")
    }

    /// `f(x) = 3x mod 1`.
    pub fn tripling() -> PiecewiseMap {
        PiecewiseMap::new(
            vec![
                (Interval::new(0.0, 1.0 / 3.0), Formula::affine(0.0, 3.0)),
                (Interval::new(1.0 / 3.0, 2.0 / 3.0), Formula::affine(0.0, 3.0)),
                (Interval::new(2.0 / 3.0, 1.0), Formula::affine(0.0, 3.0)),
            ],
            1.0,
            (3.0f64).ln(),
            0.0,
        )
        .expect("tripling preset is valid")
    }

    /// Four-branch Markov map with unequal slopes (all > 2) whose invariant
    /// density is genuinely piecewise constant: 55/54 on [0, 0.4) and
    /// 80/81 on [0.4, 1).
    pub fn markov_unequal() -> PiecewiseMap {
        PiecewiseMap::new(
            vec![
                (Interval::new(0.0, 0.2), Formula::affine(0.0, 5.0)),
                (Interval::new(0.2, 0.4), Formula::affine(-0.2, 3.0)),
                (Interval::new(0.4, 0.85), Formula::affine(-0.4 * 20.0 / 9.0, 20.0 / 9.0)),
                (Interval::new(0.85, 1.0), Formula::affine(-0.85 * 8.0 / 3.0, 8.0 / 3.0)),
            ],
            1.0,
            (20.0f64 / 9.0).ln(),
            0.0,
        )
        .expect("markov preset is valid")
    }

    /// Nonlinear full-branch perturbation of the tripling map,
    /// `f(x) = 3x + ε sin(2πx) mod 1`, split at the preimages of integers.
    pub fn perturbed_tripling(eps: f64) -> PiecewiseMap {
        assert!(eps.abs() < 0.09, "perturbation must keep |f'| > 2");
        let lift = Formula {
            poly: vec![0.0, 3.0],
            trig: vec![crate::formula::TrigTerm {
                kind: crate::formula::TrigKind::Sin,
                amp: eps,
                freq: 1.0,
                phase: 0.0,
            }],
        };
        // Solve 3x + eps sin(2πx) = k for k = 1, 2 by bisection.
        let solve = |k: f64| -> f64 {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lift.eval(mid) < k {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let x1 = solve(1.0);
        let x2 = solve(2.0);
        let lambda = (3.0 - eps.abs() * std::f64::consts::TAU).ln();
        // Depth-1 distortion: sup |f''| / inf |f'|^2, summed over depths.
        let d1 = eps.abs() * std::f64::consts::TAU.powi(2)
            / (3.0 - eps.abs() * std::f64::consts::TAU).powi(2);
        let distortion = d1 / (1.0 - (-lambda).exp()) * 1.05;
        PiecewiseMap::new(
            vec![
                (Interval::new(0.0, x1), lift.clone()),
                (Interval::new(x1, x2), lift.clone()),
                (Interval::new(x2, 1.0), lift),
            ],
            1.0,
            lambda,
            distortion,
        )
        .expect("perturbed tripling preset is valid")
    }

    /// Roof `τ(x) = cos 2πx` with `C_τ` matched to the map's expansion.
    pub fn cos_roof(lambda: f64) -> RoofFunction {
        let c_tau = std::f64::consts::TAU / (lambda.exp() - 1.0);
        RoofFunction::single(Formula::cos(1.0, 1.0), c_tau).expect("cos roof valid")
    }

    /// Coboundary roof `τ = φ∘f − φ` for `φ = sin 2πx` over the doubling map:
    /// `τ(x) = sin 4πx − sin 2πx`.
    pub fn coboundary_roof() -> RoofFunction {
        let f = Formula {
            poly: Vec::new(),
            trig: vec![
                crate::formula::TrigTerm {
                    kind: crate::formula::TrigKind::Sin,
                    amp: 1.0,
                    freq: 2.0,
                    phase: 0.0,
                },
                crate::formula::TrigTerm {
                    kind: crate::formula::TrigKind::Sin,
                    amp: -1.0,
                    freq: 1.0,
                    phase: 0.0,
                },
            ],
        };
        // sup |τ'| <= 6π; over doubling the pullback sum gives C_τ = 6π.
        RoofFunction::single(f, 6.0 * std::f64::consts::PI).expect("coboundary roof valid")
    }

    pub fn constant_roof(c: f64) -> RoofFunction {
        RoofFunction::single(Formula::constant(c), 0.0).expect("constant roof valid")
    }

    /// Sawtooth roof `τ(x) = x` (piecewise C¹ with a jump at 0).
    pub fn linear_roof(lambda: f64) -> RoofFunction {
        let c_tau = 1.0 / (lambda.exp() - 1.0);
        RoofFunction::single(Formula::affine(0.0, 1.0), c_tau).expect("linear roof valid")
    }

    pub fn doubling_cos() -> SkewProduct {
        let map = doubling();
        let roof = cos_roof(map.lambda);
        SkewProduct::new(map, roof).expect("doubling+cos valid")
    }

    pub fn tripling_cos() -> SkewProduct {
        let map = tripling();
        let roof = cos_roof(map.lambda);
        SkewProduct::new(map, roof).expect("tripling+cos valid")
    }

    pub fn doubling_coboundary() -> SkewProduct {
        SkewProduct::new(doubling(), coboundary_roof()).expect("doubling+coboundary valid")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    #[test]
    fn doubling_depth2_branches() {
        let map = doubling();
        let branches = map.inverse_branches(2, DEFAULT_BRANCH_CAP).unwrap();
        assert_eq!(branches.len(), 4);
        for (k, ib) in branches.iter().enumerate() {
            assert!((ib.range.len() - 0.25).abs() < 1e-12);
            assert!((ib.range.lo - k as f64 * 0.25).abs() < 1e-12);
            let chain = map.pullback(&ib.word, 0.3).unwrap();
            assert!((chain.deriv.abs() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn tripling_depth1_branches() {
        let map = tripling();
        let branches = map.inverse_branches(1, DEFAULT_BRANCH_CAP).unwrap();
        assert_eq!(branches.len(), 3);
        for ib in &branches {
            let chain = map.pullback(&ib.word, 0.5).unwrap();
            assert!((chain.deriv.abs() - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn subexpanding_map_rejected() {
        // Slopes 3 and 3/2: the second violates |f'| >= 2.
        let res = PiecewiseMap::new(
            vec![
                (Interval::new(0.0, 1.0 / 3.0), Formula::affine(0.0, 3.0)),
                (Interval::new(1.0 / 3.0, 1.0), Formula::affine(-0.5, 1.5)),
            ],
            1.0,
            (1.5f64).ln(),
            0.0,
        );
        assert!(matches!(res, Err(Error::InvalidMap(_))));
    }

    #[test]
    fn branch_composition_consistency() {
        // f^n(h(x)) = x to 1e-12 for every branch at depths <= 8 (sampled),
        // with the budget scaled by the forward amplification (sup |f'|)^n
        // where that exceeds 1e-12: re-applying f^n amplifies the per-step
        // inversion error by the expansion.
        for (map, per_step) in [
            (doubling(), 1e-16),
            (tripling(), 1e-16),
            (markov_unequal(), 1e-16),
            (perturbed_tripling(0.05), 1e-14),
        ] {
            let sup_deriv = map
                .branches()
                .iter()
                .map(|br| br.deriv(br.domain.midpoint()).abs() * 1.1)
                .fold(0.0f64, f64::max);
            for n in [1usize, 4, 8] {
                if map.branch_count().pow(n as u32) > 100_000 {
                    continue;
                }
                let tol = (per_step * sup_deriv.powi(n as i32)).max(1e-12);
                let branches = map.inverse_branches(n, DEFAULT_BRANCH_CAP).unwrap();
                for ib in branches.iter().step_by(1 + branches.len() / 40) {
                    for k in 1..4 {
                        let x = ib.domain.lerp(k as f64 / 4.0);
                        let chain = map.pullback(&ib.word, x).unwrap();
                        let mut z = chain.points[0];
                        for _ in 0..n {
                            z = map.apply(z);
                        }
                        let diff = (z - wrap_unit(x)).abs();
                        let diff = diff.min((diff - 1.0).abs());
                        assert!(diff < tol, "map round trip failed: {diff:.3e} (tol {tol:.3e})");
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_product_law() {
        let map = perturbed_tripling(0.05);
        let branches = map.inverse_branches(3, DEFAULT_BRANCH_CAP).unwrap();
        for ib in &branches {
            let x = ib.domain.midpoint();
            let chain = map.pullback(&ib.word, x).unwrap();
            let mut product = 1.0;
            for (j, &b) in ib.word.iter().enumerate() {
                product /= map.branches()[b as usize].deriv(chain.points[j]);
            }
            let rel = ((chain.deriv - product) / product).abs();
            assert!(rel < 1e-10);
        }
    }

    #[test]
    fn summability_proxy() {
        // Σ_{h ∈ H^n} sup |h'| <= M^n with M the depth-1 sum, n <= 6.
        let map = markov_unequal();
        let m1: f64 = map
            .inverse_branches(1, DEFAULT_BRANCH_CAP)
            .unwrap()
            .iter()
            .map(|ib| {
                let x = ib.domain.midpoint();
                map.pullback(&ib.word, x).unwrap().deriv.abs()
            })
            .sum();
        for n in 2..=6 {
            let sum: f64 = map
                .inverse_branches(n, DEFAULT_BRANCH_CAP)
                .unwrap()
                .iter()
                .map(|ib| {
                    // Piecewise linear branches: |h'| constant on the domain.
                    let x = ib.domain.midpoint();
                    map.pullback(&ib.word, x).unwrap().deriv.abs()
                })
                .sum();
            assert!(sum <= m1.powi(n as i32) + 1e-9, "n = {n}: {sum} > {}", m1.powi(n as i32));
        }
    }

    #[test]
    fn birkhoff_constant_roof() {
        let skew = SkewProduct::new(doubling(), constant_roof(1.0)).unwrap();
        let v = skew.birkhoff_roof(5, 0.137, 1e-12).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_linear_roof() {
        let map = doubling();
        let skew = SkewProduct::new(map, linear_roof((2.0f64).ln())).unwrap();
        let v = skew.birkhoff_roof(2, 0.1, 1e-12).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_cos_roof_matches_orbit_oracle() {
        let skew = doubling_cos();
        let x = 0.2;
        // Independent orbit-summation oracle.
        let mut z = x;
        let mut expect = 0.0;
        for _ in 0..3 {
            expect += (std::f64::consts::TAU * z).cos();
            z = 2.0 * z % 1.0;
        }
        let v = skew.birkhoff_roof(3, x, 1e-12).unwrap();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_boundary_hit() {
        let skew = doubling_cos();
        assert!(matches!(
            skew.birkhoff_roof(3, 0.5, 1e-12),
            Err(Error::BoundaryHit { .. })
        ));
        // 0.25 hits 0.5 after one step.
        assert!(matches!(
            skew.birkhoff_roof(3, 0.25, 1e-12),
            Err(Error::BoundaryHit { step: 1, .. })
        ));
    }

    #[test]
    fn roof_slope_finite_difference_oracle() {
        let skew = doubling_cos();
        let branches = skew.base.inverse_branches(1, DEFAULT_BRANCH_CAP).unwrap();
        let x = 0.5;
        // h1(x) = x/2: slope -π sin(πx); h2(x) = (x+1)/2: slope +π sin(πx).
        let s1 = skew.roof_slope_along_branch(&branches[0], x).unwrap();
        let s2 = skew.roof_slope_along_branch(&branches[1], x).unwrap();
        assert!((s1 + std::f64::consts::PI).abs() < 1e-10);
        assert!((s2 - std::f64::consts::PI).abs() < 1e-10);
        // Finite-difference oracle on τ∘h.
        let h = 1e-6;
        for (ib, s) in branches.iter().zip([s1, s2]) {
            let f = |x: f64| skew.birkhoff_along_branch(ib, x).unwrap();
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            assert!((fd - s).abs() < 1e-6);
        }
    }

    #[test]
    fn roof_slope_constant_roof_is_zero() {
        let skew = SkewProduct::new(tripling(), constant_roof(2.5)).unwrap();
        for ib in skew.base.inverse_branches(3, DEFAULT_BRANCH_CAP).unwrap() {
            let s = skew.roof_slope_along_branch(&ib, ib.domain.midpoint()).unwrap();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn covering_times() {
        assert_eq!(doubling().covering_time(1, 1e-9, 64).unwrap(), 1);
        assert_eq!(tripling().covering_time(2, 1e-9, 64).unwrap(), 2);
        // Two-full-branch map at depth 3 covers in exactly 3 steps.
        assert_eq!(doubling().covering_time(3, 1e-9, 64).unwrap(), 3);
        assert_eq!(markov_unequal().covering_time(1, 1e-9, 64).unwrap(), 2);
    }

    #[test]
    fn piecewise_linear_distortion_is_zero() {
        let map = markov_unequal();
        for ib in map.inverse_branches(2, DEFAULT_BRANCH_CAP).unwrap() {
            let d1 = map.pullback(&ib.word, ib.domain.lerp(0.25)).unwrap().deriv;
            let d2 = map.pullback(&ib.word, ib.domain.lerp(0.75)).unwrap().deriv;
            assert!((d1 / d2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_cap_is_enforced() {
        let map = tripling();
        assert!(matches!(
            map.inverse_branches(10, 1000),
            Err(Error::BranchCapExceeded { .. })
        ));
    }

    #[test]
    fn nonlinear_inverse_to_newton_tolerance() {
        let map = perturbed_tripling(0.05);
        for ib in map.inverse_branches(1, DEFAULT_BRANCH_CAP).unwrap() {
            for k in 0..=16 {
                let x = ib.domain.lerp(k as f64 / 16.0);
                let y = map.pullback(&ib.word, x).unwrap().points[0];
                let back = map.branches()[ib.word[0] as usize].apply(y);
                assert!((back - x).abs() < 1e-12);
            }
        }
    }
}
