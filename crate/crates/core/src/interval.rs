//! Interval queries against empirical measures.
//!
//! The default convention is half-open `(a, b]`, so that evaluating a
//! distribution function at the endpoints reproduces the measure of the
//! interval. Open and closed variants exist for probing band edges, where
//! atoms can sit exactly on an endpoint.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// `(lo, hi]`
    HalfOpen,
    /// `(lo, hi)`
    Open,
    /// `[lo, hi]`
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub kind: IntervalKind,
}

impl Interval {
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, kind: IntervalKind::HalfOpen }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, kind: IntervalKind::Open }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, kind: IntervalKind::Closed }
    }

    /// The whole real line.
    pub fn all() -> Self {
        Interval::open(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Window of half-width `w` centred at `e`, open on both sides.
    pub fn window(e: f64, w: f64) -> Self {
        Interval::open(e - w, e + w)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        match self.kind {
            IntervalKind::HalfOpen => x > self.lo && x <= self.hi,
            IntervalKind::Open => x > self.lo && x < self.hi,
            IntervalKind::Closed => x >= self.lo && x <= self.hi,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self.kind {
            IntervalKind::Closed => self.lo > self.hi,
            _ => self.lo >= self.hi,
        }
    }

    /// True when `self` is contained in `other` as a set, decided on the
    /// endpoint arithmetic alone.
    pub fn subset_of(&self, other: &Interval) -> bool {
        if self.is_empty() {
            return true;
        }
        let lo_ok = if other.closed_lo() || !self.closed_lo() {
            self.lo >= other.lo
        } else {
            self.lo > other.lo
        };
        let hi_ok = if other.closed_hi() || !self.closed_hi() {
            self.hi <= other.hi
        } else {
            self.hi < other.hi
        };
        lo_ok && hi_ok
    }

    fn closed_lo(&self) -> bool {
        self.kind == IntervalKind::Closed
    }

    fn closed_hi(&self) -> bool {
        matches!(self.kind, IntervalKind::Closed | IntervalKind::HalfOpen)
    }
}

/// Axis-aligned rectangle `X × Y` for plane-measure queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub x: Interval,
    pub y: Interval,
}

impl Rectangle {
    pub fn new(x: Interval, y: Interval) -> Self {
        Rectangle { x, y }
    }

    pub fn all() -> Self {
        Rectangle { x: Interval::all(), y: Interval::all() }
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x.contains(x) && self.y.contains(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_conventions() {
        let h = Interval::half_open(0.0, 1.0);
        assert!(!h.contains(0.0));
        assert!(h.contains(1.0));

        let o = Interval::open(0.0, 1.0);
        assert!(!o.contains(0.0));
        assert!(!o.contains(1.0));

        let c = Interval::closed(0.0, 1.0);
        assert!(c.contains(0.0));
        assert!(c.contains(1.0));
    }

    #[test]
    fn all_contains_everything_finite() {
        let a = Interval::all();
        assert!(a.contains(-1e300));
        assert!(a.contains(0.0));
        assert!(a.contains(1e300));
    }

    #[test]
    fn subset_respects_endpoint_kinds() {
        let open = Interval::open(0.0, 1.0);
        let closed = Interval::closed(0.0, 1.0);
        assert!(open.subset_of(&closed));
        assert!(!closed.subset_of(&open));
        assert!(open.subset_of(&open));
    }
}
