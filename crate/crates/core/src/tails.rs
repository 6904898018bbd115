//! Band-edge tail masses, Lifshitz-type exponent fits, and the edge-window
//! inequality between the absorption curve and the density of states.
//!
//! Near a spectral band edge the density of states of a disordered lattice
//! operator is expected to vanish super-polynomially, `m(δ) ≈ e^{-C δ^{-α}}`.
//! At desk scale the exponent is probed, never asserted: tail profiles
//! collect window masses on a shrinking δ grid, the fit regresses
//! `log(-log m)` on `log(1/δ)`, and a convexity proxy checks the qualitative
//! super-polynomial signature.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{self, ExactBands, Rat};
use crate::interval::Interval;
use crate::lattice::{almost_sure_bands, BandStructure, OperatorSign, PotentialDistribution};
use crate::measures::{EmpiricalMeasure1D, IlacCurve};

/// Slack for the edge-window inequality checks.
pub const EDGE_INEQUALITY_SLACK: f64 = 1e-12;

/// Fitted exponents below this are reported as non-Lifshitz (flat tails).
pub const NON_LIFSHITZ_EXPONENT: f64 = 0.01;

/// Anything with interval masses can feed a tail profile.
pub trait SpectralMass {
    fn mass_of(&self, interval: &Interval) -> f64;
}

impl SpectralMass for EmpiricalMeasure1D {
    fn mass_of(&self, interval: &Interval) -> f64 {
        self.mass(interval)
    }
}

impl SpectralMass for IlacCurve {
    fn mass_of(&self, interval: &Interval) -> f64 {
        self.mass(interval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    TwoSided,
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    pub delta: f64,
    pub mass: f64,
}

/// Window masses `m(δ)` around an energy, on a strictly decreasing δ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub edge: f64,
    pub side: TailSide,
    pub samples: Vec<TailSample>,
}

/// Probe the mass of shrinking open windows around `edge`.
pub fn tail_profile<M: SpectralMass>(
    source: &M,
    edge: f64,
    delta_grid: &[f64],
    side: TailSide,
) -> Result<TailProfile> {
    if delta_grid.is_empty() {
        return Err(CoreError::InvalidArgument("delta grid is empty".into()));
    }
    for w in delta_grid.windows(2) {
        if w[0] <= w[1] {
            return Err(CoreError::InvalidArgument(
                "delta grid must be strictly decreasing".into(),
            ));
        }
    }
    if delta_grid.last().copied().unwrap_or(0.0) <= 0.0 {
        return Err(CoreError::InvalidArgument("delta grid must be positive".into()));
    }
    let samples = delta_grid
        .iter()
        .map(|&delta| {
            let window = match side {
                TailSide::TwoSided => Interval::open(edge - delta, edge + delta),
                TailSide::Right => Interval::open(edge, edge + delta),
                TailSide::Left => Interval::open(edge - delta, edge),
            };
            TailSample { delta, mass: source.mass_of(&window) }
        })
        .collect();
    Ok(TailProfile { edge, side, samples })
}

/// Default δ grid: eight geometric points from one half down to one
/// twentieth of the band width.
pub fn default_delta_grid(band_width: f64) -> Vec<f64> {
    let hi = 0.5 * band_width;
    let lo = 0.05 * band_width;
    let ratio = (lo / hi).powf(1.0 / 7.0);
    (0..8).map(|k| hi * ratio.powi(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifshitzFit {
    /// Slope of `log(-log m)` against `log(1/δ)`.
    pub exponent: f64,
    /// `C` in `m(δ) ≈ e^{-C δ^{-exponent}}`.
    pub constant: f64,
    pub r_squared: f64,
    pub points_used: usize,
    /// Samples dropped because `m = 0`.
    pub excluded_zero: usize,
    /// Samples dropped because `m ≥ 1` makes the double logarithm undefined.
    pub excluded_unit: usize,
    /// Exponent indistinguishable from zero: the profile is flat, not a
    /// Lifshitz tail.
    pub non_lifshitz: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LifshitzVerdict {
    Fit(LifshitzFit),
    /// Every sample had zero mass; nothing to fit at this volume.
    NoTailMass,
}

/// Least-squares fit of `log(-log m(δ)) = log C + α · log(1/δ)`.
///
/// Zero-mass samples are excluded (and counted); samples with `m ≥ 1` are
/// excluded likewise. Fewer than three usable points is an error unless
/// every sample was empty.
pub fn lifshitz_fit(profile: &TailProfile) -> Result<LifshitzVerdict> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded_zero = 0;
    let mut excluded_unit = 0;
    for s in &profile.samples {
        if s.mass <= 0.0 {
            excluded_zero += 1;
        } else if s.mass >= 1.0 {
            excluded_unit += 1;
        } else {
            xs.push(-s.delta.ln());
            ys.push((-s.mass.ln()).ln());
        }
    }
    if xs.is_empty() && excluded_unit == 0 {
        return Ok(LifshitzVerdict::NoTailMass);
    }
    if xs.len() < 3 {
        return Err(CoreError::InvalidArgument(format!(
            "lifshitz fit needs at least 3 usable samples, got {} ({} zero-mass, {} saturated)",
            xs.len(),
            excluded_zero,
            excluded_unit
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(CoreError::InvalidArgument(
            "lifshitz fit needs at least two distinct δ values".into(),
        ));
    }
    let exponent = sxy / sxx;
    let intercept = mean_y - exponent * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let fitted = intercept + exponent * x;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LifshitzVerdict::Fit(LifshitzFit {
        exponent,
        constant: intercept.exp(),
        r_squared,
        points_used: xs.len(),
        excluded_zero,
        excluded_unit,
        non_lifshitz: exponent.abs() < NON_LIFSHITZ_EXPONENT,
    }))
}

/// Slopes of `log m` against `log δ` between consecutive usable samples,
/// listed from the largest δ to the smallest, and whether they are
/// nondecreasing in that direction — the finite-volume signature of
/// super-polynomial decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProxy {
    pub slopes: Vec<f64>,
    pub holds: bool,
}

pub fn convexity_proxy(profile: &TailProfile) -> Result<ConvexityProxy> {
    let usable: Vec<(f64, f64)> = profile
        .samples
        .iter()
        .filter(|s| s.mass > 0.0 && s.mass < 1.0)
        .map(|s| (s.delta.ln(), s.mass.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(CoreError::InvalidArgument(format!(
            "convexity proxy needs at least 3 usable samples, got {}",
            usable.len()
        )));
    }
    // Samples run δ-descending, so consecutive slopes walk toward the edge.
    let slopes: Vec<f64> = usable
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let holds = slopes.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    Ok(ConvexityProxy { slopes, holds })
}

/// Which end of the spectrum an edge-window table probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralEdge {
    Lower,
    Upper,
}

impl std::fmt::Display for SpectralEdge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectralEdge::Lower => write!(f, "lower"),
            SpectralEdge::Upper => write!(f, "upper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWindowRow {
    pub a: f64,
    /// `A(e₊+e₋+a) - A(e₊+e₋-a)`.
    pub lhs: f64,
    /// Mass of the open window of half-width `2a` around the `+` edge.
    pub rhs_plus: f64,
    pub rhs_minus: f64,
    pub holds: bool,
    /// One-sided window `(e, e+2a)` (lower edge) or `(e-2a, e)` (upper):
    /// the tight variant the per-realization argument actually bounds.
    pub rhs_plus_tight: f64,
    pub rhs_minus_tight: f64,
    pub holds_tight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWindowTable {
    pub edge: SpectralEdge,
    pub e_plus: f64,
    pub e_minus: f64,
    pub rows: Vec<EdgeWindowRow>,
}

impl EdgeWindowTable {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Edge-window inequality table: for each `a` the absorption increment
/// around `e₊ + e₋` against the density-of-states window masses at the
/// respective edges.
pub fn edge_window_table(
    ilac: &IlacCurve,
    dos_plus: &EmpiricalMeasure1D,
    dos_minus: &EmpiricalMeasure1D,
    e_plus: f64,
    e_minus: f64,
    edge: SpectralEdge,
    a_grid: &[f64],
) -> Result<EdgeWindowTable> {
    if a_grid.is_empty() {
        return Err(CoreError::InvalidArgument("a grid is empty".into()));
    }
    let rows = a_grid
        .iter()
        .map(|&a| {
            let lhs = ilac.increment(e_plus + e_minus, a);
            let rhs_plus = dos_plus.mass(&Interval::window(e_plus, 2.0 * a));
            let rhs_minus = dos_minus.mass(&Interval::window(e_minus, 2.0 * a));
            let tight = |e: f64, dos: &EmpiricalMeasure1D| match edge {
                SpectralEdge::Lower => dos.mass(&Interval::open(e, e + 2.0 * a)),
                SpectralEdge::Upper => dos.mass(&Interval::open(e - 2.0 * a, e)),
            };
            let rhs_plus_tight = tight(e_plus, dos_plus);
            let rhs_minus_tight = tight(e_minus, dos_minus);
            EdgeWindowRow {
                a,
                lhs,
                rhs_plus,
                rhs_minus,
                holds: lhs <= rhs_plus.min(rhs_minus) + EDGE_INEQUALITY_SLACK,
                rhs_plus_tight,
                rhs_minus_tight,
                holds_tight: lhs <= rhs_plus_tight.min(rhs_minus_tight) + EDGE_INEQUALITY_SLACK,
            }
        })
        .collect();
    Ok(EdgeWindowTable { edge, e_plus, e_minus, rows })
}

/// Corner certificate condensed for reporting next to a probed energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerCertificate {
    pub corner: (f64, f64),
    pub is_good: bool,
    pub k_count: usize,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProbe {
    pub label: String,
    pub energy: f64,
    pub certificate: CornerCertificate,
    pub profile: TailProfile,
    pub fit: Option<LifshitzVerdict>,
    pub fit_error: Option<String>,
}

/// Report of the two-band tail analysis: external band-edge energies plus,
/// when the band gap survives and the single-site measure has uniform edge
/// density, the six internal corner-sum energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBandTailReport {
    pub bands_plus: BandStructure,
    pub bands_minus: BandStructure,
    pub gap_condition_met: bool,
    pub regularity_ok: bool,
    pub external: Vec<EnergyProbe>,
    pub internal: Vec<EnergyProbe>,
    pub internal_skipped: Option<String>,
}

pub fn two_band_tail_report(
    dist: &PotentialDistribution,
    dimension: usize,
    ilac: &IlacCurve,
    delta_grid: &[f64],
) -> Result<TwoBandTailReport> {
    let plus = almost_sure_bands(dist, dimension, OperatorSign::Plus)?;
    let minus = almost_sure_bands(dist, dimension, OperatorSign::Minus)?;
    let regularity_ok = dist.has_uniform_edge_density();

    let bp = &plus.structure;
    let bm = &minus.structure;
    let exact_plus = exact_bands_of(bp)?;
    let exact_minus = exact_bands_of(bm)?;
    let sigma = geometry::build_support(&exact_plus, &exact_minus);

    let probe = |label: &str, x: &Rat, y: &Rat| -> Result<EnergyProbe> {
        let report = geometry::classify_corner(&sigma, &(x.clone(), y.clone()))?;
        let cx = geometry::rat_to_f64(x);
        let cy = geometry::rat_to_f64(y);
        let energy = cx + cy;
        let profile = tail_profile(ilac, energy, delta_grid, TailSide::TwoSided)?;
        let (fit, fit_error) = match lifshitz_fit(&profile) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok(EnergyProbe {
            label: label.to_string(),
            energy,
            certificate: CornerCertificate {
                corner: (cx, cy),
                is_good: report.is_good,
                k_count: report.k_set.len(),
                witness: report.witness.map(|w| {
                    format!(
                        "{:?} by band rectangle ({}, {})",
                        w.reason, w.rect.band_index.0, w.rect.band_index.1
                    )
                }),
            },
            profile,
            fit,
            fit_error,
        })
    };

    let first_plus = &exact_plus.bands()[0];
    let first_minus = &exact_minus.bands()[0];
    let last_plus = exact_plus.bands().last().unwrap();
    let last_minus = exact_minus.bands().last().unwrap();
    let external = vec![
        probe("a1+ + a1-", &first_plus.0, &first_minus.0)?,
        probe("b_last+ + b_last-", &last_plus.1, &last_minus.1)?,
    ];

    let two_banded = bp.bands.len() == 2 && bm.bands.len() == 2;
    let gap_condition_met = plus.gap_condition_met && minus.gap_condition_met && two_banded;
    let (internal, internal_skipped) = if !two_banded {
        (Vec::new(), Some("fewer than two spectral bands; no internal edges".to_string()))
    } else if !gap_condition_met {
        (Vec::new(), Some("band gap condition unmet: fattened support intervals overlap".to_string()))
    } else if !regularity_ok {
        (Vec::new(), Some("single-site measure lacks uniform edge density".to_string()))
    } else {
        let (ap1, bp1) = exact_plus.bands()[0].clone();
        let (ap2, bp2) = exact_plus.bands()[1].clone();
        let (am1, _bm1) = exact_minus.bands()[0].clone();
        let (am2, bm2) = exact_minus.bands()[1].clone();
        let probes = vec![
            probe("b1+ + a1-", &bp1, &am1)?,
            probe("a2+ + a1-", &ap2, &am1)?,
            probe("b2+ + a1-", &bp2, &am1)?,
            probe("a1+ + a2-", &ap1, &am2)?,
            probe("b1+ + b2-", &bp1, &bm2)?,
            probe("a2+ + a2-", &ap2, &am2)?,
        ];
        (probes, None)
    };

    Ok(TwoBandTailReport {
        bands_plus: bp.clone(),
        bands_minus: bm.clone(),
        gap_condition_met,
        regularity_ok,
        external,
        internal,
        internal_skipped,
    })
}

fn exact_bands_of(bands: &BandStructure) -> Result<ExactBands> {
    let pairs: Vec<(f64, f64)> = bands.bands.iter().map(|b| (b.lo, b.hi)).collect();
    ExactBands::from_f64_pairs(&pairs)
}
