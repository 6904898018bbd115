//! Exact geometry of the band-rectangle support on the plane.
//!
//! The correlation measure lives on `Σ = ⋃ R_ij`, the Cartesian products of
//! the spectral bands of the two operators. A rectangle corner `(c, d)` is
//! *good* when the anti-diagonal line `λ₁ + λ₂ = c + d` meets `Σ` only in
//! finitely many points, all of them rectangle corners. Good corners admit
//! a strip cover: the strip `{c+d ≤ λ₁+λ₂ ≤ c+d+a}` intersected with `Σ`
//! fits inside squares of side `2a` anchored at the corners on the line.
//!
//! Classification is a discrete predicate, so everything here runs on exact
//! rationals; band edges supplied as decimal or fractional strings never
//! see floating point at all.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{CoreError, Result};
use crate::interval::Interval;
use crate::measures::EmpiricalMeasure1D;

pub type Rat = BigRational;

/// Parse an exact rational from `"7"`, `"-12.345"` or `"3/4"`.
pub fn parse_exact(text: &str) -> Result<Rat> {
    let s = text.trim();
    let bad = |why: &str| CoreError::InvalidArgument(format!("cannot parse '{s}' as a rational: {why}"));
    if s.is_empty() {
        return Err(bad("empty"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad("bad numerator"))?;
        let d: BigInt = den.trim().parse().map_err(|_| bad("bad denominator"))?;
        if d.is_zero() {
            return Err(bad("zero denominator"));
        }
        return Ok(Rat::new(n, d));
    }
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad("no digits"));
    }
    let mut numerator: BigInt = if int_part.is_empty() {
        BigInt::zero()
    } else {
        int_part.parse().map_err(|_| bad("bad integer part"))?
    };
    let mut denominator = BigInt::from(1);
    for ch in frac_part.chars() {
        let digit = ch.to_digit(10).ok_or_else(|| bad("bad fractional digit"))?;
        numerator = numerator * 10 + digit;
        denominator *= 10;
    }
    Ok(Rat::new(numerator * sign, denominator))
}

/// Exact conversion of a finite f64.
pub fn rat_from_f64(x: f64) -> Result<Rat> {
    Rat::from_float(x)
        .ok_or_else(|| CoreError::InvalidArgument(format!("{x} is not a finite number")))
}

pub fn rat_to_f64(x: &Rat) -> f64 {
    x.to_f64().expect("band-edge rationals fit in f64 range")
}

/// Spectral bands held exactly: disjoint closed intervals, increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactBands {
    bands: Vec<(Rat, Rat)>,
}

impl ExactBands {
    pub fn new(bands: Vec<(Rat, Rat)>) -> Result<Self> {
        if bands.is_empty() {
            return Err(CoreError::InvalidBands("band list is empty".into()));
        }
        for (lo, hi) in &bands {
            if lo > hi {
                return Err(CoreError::InvalidBands(format!("band [{lo}, {hi}] is inverted")));
            }
        }
        for w in bands.windows(2) {
            if w[0].1 >= w[1].0 {
                return Err(CoreError::InvalidBands(format!(
                    "bands [{}, {}] and [{}, {}] are not disjoint increasing",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(ExactBands { bands })
    }

    pub fn from_strings(edges: &[(&str, &str)]) -> Result<Self> {
        let bands = edges
            .iter()
            .map(|(lo, hi)| Ok((parse_exact(lo)?, parse_exact(hi)?)))
            .collect::<Result<Vec<_>>>()?;
        ExactBands::new(bands)
    }

    pub fn from_f64_pairs(edges: &[(f64, f64)]) -> Result<Self> {
        let bands = edges
            .iter()
            .map(|&(lo, hi)| Ok((rat_from_f64(lo)?, rat_from_f64(hi)?)))
            .collect::<Result<Vec<_>>>()?;
        ExactBands::new(bands)
    }

    pub fn bands(&self) -> &[(Rat, Rat)] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// One closed rectangle `[x_lo, x_hi] × [y_lo, y_hi]` of the support, with
/// the band pair that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportRect {
    pub x_lo: Rat,
    pub x_hi: Rat,
    pub y_lo: Rat,
    pub y_hi: Rat,
    pub band_index: (usize, usize),
}

impl SupportRect {
    pub fn is_degenerate(&self) -> bool {
        self.x_lo == self.x_hi || self.y_lo == self.y_hi
    }

    pub fn corners(&self) -> Vec<(Rat, Rat)> {
        let mut cs = vec![
            (self.x_lo.clone(), self.y_lo.clone()),
            (self.x_hi.clone(), self.y_lo.clone()),
            (self.x_lo.clone(), self.y_hi.clone()),
            (self.x_hi.clone(), self.y_hi.clone()),
        ];
        cs.sort();
        cs.dedup();
        cs
    }

    pub fn contains(&self, x: &Rat, y: &Rat) -> bool {
        *x >= self.x_lo && *x <= self.x_hi && *y >= self.y_lo && *y <= self.y_hi
    }

    /// Smallest and largest value of `x + y` over the rectangle.
    pub fn sum_range(&self) -> (Rat, Rat) {
        (&self.x_lo + &self.y_lo, &self.x_hi + &self.y_hi)
    }
}

/// The support `Σ` as the full Cartesian product of band rectangles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RectangleSet {
    pub rectangles: Vec<SupportRect>,
    pub bands_plus: ExactBands,
    pub bands_minus: ExactBands,
}

/// Build `Σ` from two band structures: one rectangle per band pair.
pub fn build_support(bands_plus: &ExactBands, bands_minus: &ExactBands) -> RectangleSet {
    let mut rectangles = Vec::with_capacity(bands_plus.len() * bands_minus.len());
    for (i, (x_lo, x_hi)) in bands_plus.bands().iter().enumerate() {
        for (j, (y_lo, y_hi)) in bands_minus.bands().iter().enumerate() {
            rectangles.push(SupportRect {
                x_lo: x_lo.clone(),
                x_hi: x_hi.clone(),
                y_lo: y_lo.clone(),
                y_hi: y_hi.clone(),
                band_index: (i, j),
            });
        }
    }
    RectangleSet {
        rectangles,
        bands_plus: bands_plus.clone(),
        bands_minus: bands_minus.clone(),
    }
}

/// A corner of `Σ` lying on the classified anti-diagonal line, with the
/// roles it plays in its rectangles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KCorner {
    pub x: Rat,
    pub y: Rat,
    pub lower_left: bool,
    pub top_right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessReason {
    /// The line crosses the rectangle in a nondegenerate segment.
    SegmentCrossing,
    /// The line meets the rectangle in a single point that is not a corner
    /// (only possible for degenerate rectangles).
    NonCornerTouch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadWitness {
    pub rect: SupportRect,
    pub reason: WitnessReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoodCornerReport {
    pub corner: (Rat, Rat),
    pub is_good: bool,
    pub k_set: Vec<KCorner>,
    pub witness: Option<BadWitness>,
}

/// Classify a corner of `Σ` by intersecting the line `x + y = c + d` with
/// every rectangle exactly.
pub fn classify_corner(sigma: &RectangleSet, corner: &(Rat, Rat)) -> Result<GoodCornerReport> {
    let (c, d) = corner;
    let is_corner_of_sigma = sigma
        .rectangles
        .iter()
        .any(|r| r.corners().iter().any(|(x, y)| x == c && y == d));
    if !is_corner_of_sigma {
        return Err(CoreError::NotACorner(c.to_string(), d.to_string()));
    }
    let s = c + d;

    let mut witness = None;
    for rect in &sigma.rectangles {
        // The line restricted to the rectangle spans x in [lo, hi].
        let lo = (&s - &rect.y_hi).max(rect.x_lo.clone());
        let hi = (&s - &rect.y_lo).min(rect.x_hi.clone());
        if lo > hi {
            continue;
        }
        if lo < hi {
            witness = Some(BadWitness { rect: rect.clone(), reason: WitnessReason::SegmentCrossing });
            break;
        }
        let x = lo;
        let y = &s - &x;
        let on_x_edge = x == rect.x_lo || x == rect.x_hi;
        let on_y_edge = y == rect.y_lo || y == rect.y_hi;
        if !(on_x_edge && on_y_edge) {
            witness = Some(BadWitness { rect: rect.clone(), reason: WitnessReason::NonCornerTouch });
            break;
        }
    }

    // K: every rectangle corner on the line, deduplicated only on exact
    // coincidence.
    let mut k_set: Vec<KCorner> = Vec::new();
    for rect in &sigma.rectangles {
        for (x, y) in rect.corners() {
            if &x + &y != s {
                continue;
            }
            let lower_left = x == rect.x_lo && y == rect.y_lo;
            let top_right = x == rect.x_hi && y == rect.y_hi;
            match k_set.iter_mut().find(|k| k.x == x && k.y == y) {
                Some(existing) => {
                    existing.lower_left |= lower_left;
                    existing.top_right |= top_right;
                }
                None => k_set.push(KCorner { x, y, lower_left, top_right }),
            }
        }
    }
    k_set.sort_by(|a, b| a.x.cmp(&b.x).then(a.y.cmp(&b.y)));

    Ok(GoodCornerReport {
        corner: corner.clone(),
        is_good: witness.is_none(),
        k_set,
        witness,
    })
}

/// Two-band corner certificate: evaluates the edge-sum ordering chain and,
/// when it holds, returns the four canonical corners (plus the four extra
/// corners in the symmetric equal-bands case), each cross-validated by
/// [`classify_corner`].
///
/// The chain compares `b₁⁺+b₁⁻` against the *smaller* of the two mixed
/// corner sums: both mixed rectangles must start above the line through
/// `(b₁⁺, b₁⁻)`, otherwise the lower one swallows it. (A max there would
/// let the chain hold while that corner fails classification; the two
/// agree exactly in the symmetric equal-bands case, where the mixed sums
/// coincide.)
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoBandReport {
    pub ordering_holds: bool,
    pub good_corners: Vec<GoodCornerReport>,
    pub symmetric_extras: Vec<GoodCornerReport>,
}

pub fn two_band_good_corners(
    bands_plus: &ExactBands,
    bands_minus: &ExactBands,
) -> Result<TwoBandReport> {
    if bands_plus.len() != 2 || bands_minus.len() != 2 {
        return Err(CoreError::InvalidBands(format!(
            "exactly two bands per side required, got {} and {}",
            bands_plus.len(),
            bands_minus.len()
        )));
    }
    let (ap1, bp1) = bands_plus.bands()[0].clone();
    let (ap2, bp2) = bands_plus.bands()[1].clone();
    let (am1, bm1) = bands_minus.bands()[0].clone();
    let (am2, bm2) = bands_minus.bands()[1].clone();

    let c1 = &ap1 + &am1;
    let c2 = &bp1 + &bm1;
    let c3 = (&ap2 + &am1).min(&ap1 + &am2);
    let c4 = (&bp2 + &bm1).max(&bp1 + &bm2);
    let c5 = &ap2 + &am2;
    let c6 = &bp2 + &bm2;
    let ordering_holds = c1 < c2 && c2 < c3 && c3 < c4 && c4 < c5 && c5 < c6;

    let mut good_corners = Vec::new();
    let mut symmetric_extras = Vec::new();
    if ordering_holds {
        let sigma = build_support(bands_plus, bands_minus);
        for corner in [
            (ap1.clone(), am1.clone()),
            (bp1.clone(), bm1.clone()),
            (ap2.clone(), am2.clone()),
            (bp2.clone(), bm2.clone()),
        ] {
            good_corners.push(classify_corner(&sigma, &corner)?);
        }
        let symmetric = ap1 == am1 && bp1 == bm1 && ap2 == am2 && bp2 == bm2;
        if symmetric {
            for corner in [
                (ap2.clone(), am1.clone()),
                (ap1.clone(), am2.clone()),
                (bp2.clone(), bm1.clone()),
                (bp1.clone(), bm2.clone()),
            ] {
                symmetric_extras.push(classify_corner(&sigma, &corner)?);
            }
        }
    }
    Ok(TwoBandReport { ordering_holds, good_corners, symmetric_extras })
}

/// A cover square of side `2a`, anchored at a K corner and oriented into
/// the support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripSquare {
    pub x_lo: Rat,
    pub x_hi: Rat,
    pub y_lo: Rat,
    pub y_hi: Rat,
    pub anchor: (Rat, Rat),
}

impl StripSquare {
    fn contains(&self, x: &Rat, y: &Rat) -> bool {
        *x >= self.x_lo && *x <= self.x_hi && *y >= self.y_lo && *y <= self.y_hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripCover {
    pub corner: (Rat, Rat),
    pub half_width: Rat,
    pub squares: Vec<StripSquare>,
    pub containment_holds: bool,
    pub counterexample: Option<(Rat, Rat)>,
}

/// Build the corner-anchored square cover of the strip
/// `{c+d ≤ λ₁+λ₂ ≤ c+d+a}` and verify by exact rectangle arithmetic that
/// it contains `strip ∩ Σ`; a failure reports a point of the difference.
pub fn strip_cover(sigma: &RectangleSet, report: &GoodCornerReport, a: &Rat) -> Result<StripCover> {
    if !report.is_good {
        return Err(CoreError::CornerNotGood(
            report.corner.0.to_string(),
            report.corner.1.to_string(),
        ));
    }
    if !a.is_positive() {
        return Err(CoreError::InvalidArgument("strip half-width must be positive".into()));
    }
    let side = Rat::from_integer(BigInt::from(2)) * a;
    let mut squares = Vec::new();
    for k in &report.k_set {
        if k.lower_left {
            squares.push(StripSquare {
                x_lo: k.x.clone(),
                x_hi: &k.x + &side,
                y_lo: k.y.clone(),
                y_hi: &k.y + &side,
                anchor: (k.x.clone(), k.y.clone()),
            });
        }
        if k.top_right {
            squares.push(StripSquare {
                x_lo: &k.x - &side,
                x_hi: k.x.clone(),
                y_lo: &k.y - &side,
                y_hi: k.y.clone(),
                anchor: (k.x.clone(), k.y.clone()),
            });
        }
    }

    let s0 = &report.corner.0 + &report.corner.1;
    let s1 = &s0 + a;
    let counterexample = sigma
        .rectangles
        .iter()
        .find_map(|rect| uncovered_point(rect, &s0, &s1, &squares));
    Ok(StripCover {
        corner: report.corner.clone(),
        half_width: a.clone(),
        squares,
        containment_holds: counterexample.is_none(),
        counterexample,
    })
}

/// Sum of `min(n₊((c_γ - 2a, c_γ + 2a)), n₋((d_γ - 2a, d_γ + 2a)))` over
/// the corners on the line: the right-hand side of the good-corner bound,
/// evaluated on empirical density-of-states measures.
pub fn corner_window_bound(
    k_set: &[KCorner],
    dos_plus: &EmpiricalMeasure1D,
    dos_minus: &EmpiricalMeasure1D,
    a: f64,
) -> Result<f64> {
    if k_set.is_empty() {
        return Err(CoreError::InvalidArgument("empty corner set".into()));
    }
    let mut total = 0.0;
    for k in k_set {
        let c = rat_to_f64(&k.x);
        let d = rat_to_f64(&k.y);
        let mass_plus = dos_plus.mass(&Interval::window(c, 2.0 * a));
        let mass_minus = dos_minus.mass(&Interval::window(d, 2.0 * a));
        total += mass_plus.min(mass_minus);
    }
    Ok(total)
}

// ── exact containment machinery ─────────────────────────────────────────

type Point = (Rat, Rat);

/// A point of `rect ∩ strip` not covered by any square, if one exists.
fn uncovered_point(
    rect: &SupportRect,
    s0: &Rat,
    s1: &Rat,
    squares: &[StripSquare],
) -> Option<Point> {
    let (min_sum, max_sum) = rect.sum_range();
    if &min_sum > s1 || &max_sum < s0 {
        return None;
    }

    if rect.is_degenerate() {
        return uncovered_on_degenerate(rect, s0, s1, squares);
    }

    // Clip the rectangle against the strip halfplanes.
    let poly = vec![
        (rect.x_lo.clone(), rect.y_lo.clone()),
        (rect.x_hi.clone(), rect.y_lo.clone()),
        (rect.x_hi.clone(), rect.y_hi.clone()),
        (rect.x_lo.clone(), rect.y_hi.clone()),
    ];
    let poly = clip(&poly, |p| &(&p.0 + &p.1) - s0); // x + y ≥ s0
    let poly = clip(&poly, |p| s1 - &(&p.0 + &p.1)); // x + y ≤ s1
    if poly.is_empty() {
        return None;
    }
    let mut distinct = poly.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() <= 2 || polygon_area_doubled(&poly).is_zero() {
        // Point or segment touch; check the vertices themselves.
        return distinct
            .into_iter()
            .find(|(x, y)| !squares.iter().any(|sq| sq.contains(x, y)));
    }

    // Full-dimensional region: refine by the square edge lines and test one
    // interior point per cell.
    let xs = cut_coords(poly.iter().map(|p| p.0.clone()), squares.iter().flat_map(|s| {
        [s.x_lo.clone(), s.x_hi.clone()]
    }));
    let ys = cut_coords(poly.iter().map(|p| p.1.clone()), squares.iter().flat_map(|s| {
        [s.y_lo.clone(), s.y_hi.clone()]
    }));
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            let cell = clip_to_cell(&poly, &wx[0], &wx[1], &wy[0], &wy[1]);
            if cell.is_empty() || polygon_area_doubled(&cell).is_zero() {
                continue;
            }
            let centroid = polygon_centroid(&cell);
            if !squares.iter().any(|sq| sq.contains(&centroid.0, &centroid.1)) {
                return Some(centroid);
            }
        }
    }
    None
}

/// Degenerate rectangles are one-dimensional; clip the strip piece against
/// the squares with interval arithmetic.
fn uncovered_on_degenerate(
    rect: &SupportRect,
    s0: &Rat,
    s1: &Rat,
    squares: &[StripSquare],
) -> Option<Point> {
    // Parametrize by y for a vertical segment, by x otherwise.
    let vertical = rect.x_lo == rect.x_hi;
    let (fixed, t_lo, t_hi) = if vertical {
        (rect.x_lo.clone(), rect.y_lo.clone(), rect.y_hi.clone())
    } else {
        (rect.y_lo.clone(), rect.x_lo.clone(), rect.x_hi.clone())
    };
    // Strip condition: s0 ≤ fixed + t ≤ s1.
    let lo = (s0 - &fixed).max(t_lo);
    let hi = (s1 - &fixed).min(t_hi);
    if lo > hi {
        return None;
    }
    let mut pieces = vec![(lo, hi)];
    for sq in squares {
        let (f_lo, f_hi, t_sq_lo, t_sq_hi) = if vertical {
            (&sq.x_lo, &sq.x_hi, &sq.y_lo, &sq.y_hi)
        } else {
            (&sq.y_lo, &sq.y_hi, &sq.x_lo, &sq.x_hi)
        };
        if &fixed < f_lo || &fixed > f_hi {
            continue;
        }
        let mut next = Vec::new();
        for (p_lo, p_hi) in pieces {
            if &p_hi < t_sq_lo || &p_lo > t_sq_hi {
                next.push((p_lo, p_hi));
                continue;
            }
            if &p_lo < t_sq_lo {
                next.push((p_lo, t_sq_lo.clone()));
            }
            if &p_hi > t_sq_hi {
                next.push((t_sq_hi.clone(), p_hi));
            }
        }
        pieces = next;
        if pieces.is_empty() {
            return None;
        }
    }
    // Positive-length residual pieces have uncovered midpoints. Residual
    // single points still need an explicit membership check: they are
    // covered when they sit on a closed square boundary, uncovered when the
    // strip piece was a point no square ever touched.
    for (p_lo, p_hi) in &pieces {
        if p_lo < p_hi {
            let mid = (p_lo + p_hi) / Rat::from_integer(BigInt::from(2));
            return Some(if vertical { (fixed, mid) } else { (mid, fixed) });
        }
    }
    for (p_lo, _) in pieces {
        let point = if vertical {
            (fixed.clone(), p_lo)
        } else {
            (p_lo, fixed.clone())
        };
        if !squares.iter().any(|sq| sq.contains(&point.0, &point.1)) {
            return Some(point);
        }
    }
    None
}

/// Sutherland-Hodgman clip of a convex polygon by the halfplane `f ≥ 0`.
fn clip(poly: &[Point], f: impl Fn(&Point) -> Rat) -> Vec<Point> {
    let mut out = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let cur = &poly[i];
        let next = &poly[(i + 1) % n];
        let fc = f(cur);
        let fn_ = f(next);
        if !fc.is_negative() {
            out.push(cur.clone());
        }
        if (fc.is_negative() && fn_.is_positive()) || (fc.is_positive() && fn_.is_negative()) {
            // Exact crossing point.
            let t = &fc / (&fc - &fn_);
            let x = &cur.0 + &t * (&next.0 - &cur.0);
            let y = &cur.1 + &t * (&next.1 - &cur.1);
            out.push((x, y));
        }
    }
    out
}

fn clip_to_cell(poly: &[Point], x_lo: &Rat, x_hi: &Rat, y_lo: &Rat, y_hi: &Rat) -> Vec<Point> {
    let p = clip(poly, |q| &q.0 - x_lo);
    let p = clip(&p, |q| x_hi - &q.0);
    let p = clip(&p, |q| &q.1 - y_lo);
    clip(&p, |q| y_hi - &q.1)
}

/// Twice the signed shoelace area, absolute value.
fn polygon_area_doubled(poly: &[Point]) -> Rat {
    let n = poly.len();
    let mut acc = Rat::zero();
    for i in 0..n {
        let (x1, y1) = &poly[i];
        let (x2, y2) = &poly[(i + 1) % n];
        acc += x1 * y2 - x2 * y1;
    }
    acc.abs()
}

fn polygon_centroid(poly: &[Point]) -> Point {
    let n = Rat::from_integer(BigInt::from(poly.len() as i64));
    let mut sx = Rat::zero();
    let mut sy = Rat::zero();
    for (x, y) in poly {
        sx += x;
        sy += y;
    }
    (sx / &n, sy / &n)
}

fn cut_coords(
    poly_coords: impl Iterator<Item = Rat>,
    square_edges: impl Iterator<Item = Rat>,
) -> Vec<Rat> {
    let mut bounds: Vec<Rat> = poly_coords.collect();
    bounds.sort();
    let lo = bounds.first().cloned().expect("nonempty polygon");
    let hi = bounds.last().cloned().expect("nonempty polygon");
    let mut cuts = vec![lo.clone(), hi.clone()];
    for e in square_edges {
        if e > lo && e < hi {
            cuts.push(e);
        }
    }
    cuts.sort();
    cuts.dedup();
    cuts
}
