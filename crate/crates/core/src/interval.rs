use serde::{Deserialize, Serialize};

/// A nondegenerate interval `[lo, hi]` with `lo < hi`.
///
/// Points on the circle are represented in `[0, 1)`; intervals used as branch
/// domains follow a half-open convention `[lo, hi)` so that partitions are
/// disjoint modulo endpoints. Branch images may reach `hi = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Interval {
        assert!(lo < hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Half-open membership `lo <= x < hi`.
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Intersection, `None` when shorter than `min_len`.
    pub fn intersect(&self, other: &Interval, min_len: f64) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if hi - lo > min_len {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    /// Position of `x` as a fraction of the interval length.
    pub fn unlerp(&self, x: f64) -> f64 {
        (x - self.lo) / self.len()
    }

    pub fn lerp(&self, t: f64) -> f64 {
        self.lo + t * self.len()
    }
}

/// Reduce a point to the fundamental domain `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Merge a set of intervals, gluing pieces whose gap is below `gap_tol`,
/// and return the total length of the union.
pub fn union_length(intervals: &mut Vec<Interval>, gap_tol: f64) -> f64 {
    if intervals.is_empty() {
        return 0.0;
    }
    intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals.iter() {
        match merged.last_mut() {
            Some(last) if iv.lo <= last.hi + gap_tol => {
                if iv.hi > last.hi {
                    last.hi = iv.hi;
                }
            }
            _ => merged.push(*iv),
        }
    }
    let total = merged.iter().map(|iv| iv.len()).sum();
    *intervals = merged;
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_membership() {
        let iv = Interval::new(0.25, 0.5);
        assert!(iv.contains(0.25));
        assert!(!iv.contains(0.5));
        assert!(iv.contains_closed(0.5));
    }

    #[test]
    fn union_merges_adjacent() {
        let mut ivs = vec![
            Interval::new(0.0, 0.3),
            Interval::new(0.7, 1.0),
            Interval::new(0.3, 0.5),
        ];
        let len = union_length(&mut ivs, 1e-12);
        assert!((len - 0.8).abs() < 1e-12);
        assert_eq!(ivs.len(), 2);
    }

    #[test]
    fn wrap_reduces_to_unit() {
        assert_eq!(wrap_unit(1.0), 0.0);
        assert!((wrap_unit(2.3) - 0.3).abs() < 1e-12);
        assert!((wrap_unit(-0.25) - 0.75).abs() < 1e-12);
    }
}
