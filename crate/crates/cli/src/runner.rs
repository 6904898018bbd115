//! Kind-specific experiment runners.
//!
//! Every runner follows the same shape: execute the disorder realizations
//! in parallel (rayon, order-preserving collect), merge the
//! per-realization results in a fixed order, and emit data files as byte
//! buffers. Window masses of merged measures are computed by averaging the
//! per-realization masses, which equals evaluating the merged measure by
//! linearity of atom sums and keeps memory flat in the realization count.

use std::path::PathBuf;
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use ilac_core::covariance::{
    BoundedFunction, FamilyRecipe, OrbitContext, PointwiseMap, TorusSpace,
};
use ilac_core::eigen::{
    eig_symmetric, eig_symmetric_values, overlap_matrix, EigenDecomposition, OverlapMatrix,
};
use ilac_core::geometry::{self, ExactBands, GoodCornerReport, Rat};
use ilac_core::interval::Interval;
use ilac_core::io as core_io;
use ilac_core::lattice::{
    self, almost_sure_bands, AlmostSureBands, BandStructure, BoxSpec, Boundary, OperatorSign,
    PotentialDistribution,
};
use ilac_core::matrix::{CompensatedSum, Matrix};
use ilac_core::measures::{
    correlation_estimate, dos_estimate, ilac_curve, DosEstimator, EmpiricalMeasure1D,
    EmpiricalMeasure2D, IlacCurve, Provenance,
};
use ilac_core::tails::{
    self, convexity_proxy, default_delta_grid, lifshitz_fit, tail_profile, EdgeWindowRow,
    EdgeWindowTable, SpectralEdge, TailSide, EDGE_INEQUALITY_SLACK,
};

use crate::config::{ExperimentConfig, ExperimentKind, TailSource};
use crate::manifest::{LeakageStats, OutputDigest, RunManifest};
use crate::RunError;

/// Tolerance for the empirical corner-bound check.
const CORNER_BOUND_SLACK: f64 = 1e-9;
/// Leakage fraction above which the corner-bound check is declared
/// unmeaning rather than failed.
const LEAKAGE_MEANINGFUL_LIMIT: f64 = 0.05;

struct Products {
    files: Vec<(String, Vec<u8>)>,
    leakage: LeakageStats,
    verification_failed: bool,
}

/// Run a fully resolved experiment and write its outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, RunError> {
    let kind = config
        .kind
        .ok_or_else(|| RunError::Config("experiment kind is not set".into()))?;
    let start = Instant::now();

    let workers = config.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    if workers == 0 {
        return Err(RunError::Config("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Config(format!("cannot build worker pool: {e}")))?;

    let products = pool.install(|| dispatch(kind, config))?;

    let out_dir: PathBuf = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| RunError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut outputs = Vec::new();
    for (name, bytes) in &products.files {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| RunError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        outputs.push(OutputDigest { path: name.clone(), sha256: crate::manifest::sha256_hex(bytes) });
    }

    let mut resolved = config.clone();
    resolved.kind = Some(kind);
    let boundary = match kind {
        ExperimentKind::Covariance => "periodic (torus)".to_string(),
        ExperimentKind::Corners if config.box_spec.is_none() => "dirichlet".to_string(),
        _ => config.box_or_default().boundary.to_string(),
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind,
        config: resolved,
        boundary,
        realization_streams: (0..config.realizations).collect(),
        timing_ms: start.elapsed().as_millis(),
        leakage: products.leakage,
        outputs,
        verification_failed: products.verification_failed,
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut buf = Vec::new();
    core_io::write_json(&mut buf, &manifest).map_err(|e| RunError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    std::fs::write(&manifest_path, buf).map_err(|e| RunError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    Ok(manifest)
}

fn dispatch(kind: ExperimentKind, config: &ExperimentConfig) -> Result<Products, RunError> {
    match kind {
        ExperimentKind::Dos => run_dos(config),
        ExperimentKind::Ilac => run_ilac(config),
        ExperimentKind::Rho => run_rho(config),
        ExperimentKind::Corners => run_corners(config),
        ExperimentKind::Tails => run_tails(config),
        ExperimentKind::Verify21 => run_verify21(config),
        ExperimentKind::Verify31 => run_verify31(config),
        ExperimentKind::Covariance => run_covariance(config),
    }
}

// ── shared realization machinery ─────────────────────────────────────────

struct Lattice {
    spec: BoxSpec,
    dist: PotentialDistribution,
    delta: Matrix,
    bands_plus: AlmostSureBands,
    bands_minus: AlmostSureBands,
}

impl Lattice {
    fn prepare(config: &ExperimentConfig) -> Result<Self, RunError> {
        let spec = config.box_or_default().to_spec()?;
        let dist = config.potential_or_default();
        dist.validate().map_err(|e| RunError::Config(e.to_string()))?;
        let delta = lattice::laplacian(&spec).map_err(|e| RunError::Config(e.to_string()))?;
        let bands_plus = almost_sure_bands(&dist, spec.dimension, OperatorSign::Plus)
            .map_err(RunError::numerical)?;
        let bands_minus = almost_sure_bands(&dist, spec.dimension, OperatorSign::Minus)
            .map_err(RunError::numerical)?;
        Ok(Lattice { spec, dist, delta, bands_plus, bands_minus })
    }

    fn pair(&self, seed: u64, r: u64) -> Result<lattice::HamiltonianPair, RunError> {
        let q = lattice::sample_potential(&self.dist, &self.spec, seed, r)
            .map_err(|e| RunError::at_realization(r, e))?;
        lattice::assemble_hamiltonians(&self.delta, &q, &self.spec)
            .map_err(|e| RunError::at_realization(r, e))
    }
}

fn out_of_band(evals: &[f64], bands: &BandStructure) -> u64 {
    evals.iter().filter(|&&x| !bands.contains(x)).count() as u64
}

struct DecsRealization {
    dec_plus: EigenDecomposition,
    dec_minus: EigenDecomposition,
    oob_plus: u64,
    oob_minus: u64,
}

fn decs_realization(lat: &Lattice, seed: u64, r: u64) -> Result<DecsRealization, RunError> {
    let pair = lat.pair(seed, r)?;
    let dec_plus = eig_symmetric(&pair.h_plus).map_err(|e| RunError::at_realization(r, e))?;
    let dec_minus = eig_symmetric(&pair.h_minus).map_err(|e| RunError::at_realization(r, e))?;
    let oob_plus = out_of_band(dec_plus.eigenvalues(), &lat.bands_plus.structure);
    let oob_minus = out_of_band(dec_minus.eigenvalues(), &lat.bands_minus.structure);
    Ok(DecsRealization { dec_plus, dec_minus, oob_plus, oob_minus })
}

struct FullRealization {
    dec_plus: EigenDecomposition,
    dec_minus: EigenDecomposition,
    overlaps: OverlapMatrix,
    oob_plus: u64,
    oob_minus: u64,
}

fn full_realization(lat: &Lattice, seed: u64, r: u64) -> Result<FullRealization, RunError> {
    let decs = decs_realization(lat, seed, r)?;
    let overlaps = overlap_matrix(&decs.dec_plus, &decs.dec_minus)
        .map_err(|e| RunError::at_realization(r, e))?;
    Ok(FullRealization {
        dec_plus: decs.dec_plus,
        dec_minus: decs.dec_minus,
        overlaps,
        oob_plus: decs.oob_plus,
        oob_minus: decs.oob_minus,
    })
}

fn values_realization(lat: &Lattice, seed: u64, r: u64) -> Result<(Vec<f64>, Vec<f64>, u64, u64), RunError> {
    let pair = lat.pair(seed, r)?;
    let evals_plus =
        eig_symmetric_values(&pair.h_plus).map_err(|e| RunError::at_realization(r, e))?;
    let evals_minus =
        eig_symmetric_values(&pair.h_minus).map_err(|e| RunError::at_realization(r, e))?;
    let oob_plus = out_of_band(&evals_plus, &lat.bands_plus.structure);
    let oob_minus = out_of_band(&evals_minus, &lat.bands_minus.structure);
    Ok((evals_plus, evals_minus, oob_plus, oob_minus))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = Vec::new();
    core_io::write_json(&mut buf, value).expect("in-memory json write");
    buf
}

fn count_per_volume(evals: &[f64], volume: usize) -> EmpiricalMeasure1D {
    let w = 1.0 / volume as f64;
    EmpiricalMeasure1D::from_atoms(
        evals.iter().map(|&x| (x, w)).collect(),
        Provenance::DosCountPerVolume,
    )
}

// ── dos ──────────────────────────────────────────────────────────────────

fn run_dos(config: &ExperimentConfig) -> Result<Products, RunError> {
    let lat = Lattice::prepare(config)?;
    let estimator = config.params.estimator.unwrap_or(DosEstimator::CountPerVolume);
    let n = lat.spec.site_count();
    let r_count = config.realizations;
    if r_count == 0 {
        return Err(RunError::Config("realizations must be at least 1".into()));
    }

    let per: Vec<(EmpiricalMeasure1D, EmpiricalMeasure1D, u64, u64)> = (0..r_count)
        .into_par_iter()
        .map(|r| match estimator {
            DosEstimator::CountPerVolume => {
                let (ep, em, oob_p, oob_m) = values_realization(&lat, config.seed, r)?;
                Ok((count_per_volume(&ep, n), count_per_volume(&em, n), oob_p, oob_m))
            }
            DosEstimator::LocalAtSite => {
                let real = decs_realization(&lat, config.seed, r)?;
                Ok((
                    dos_estimate(&real.dec_plus, &lat.spec, estimator),
                    dos_estimate(&real.dec_minus, &lat.spec, estimator),
                    real.oob_plus,
                    real.oob_minus,
                ))
            }
        })
        .collect::<Result<_, RunError>>()?;

    let dos_plus = EmpiricalMeasure1D::merge_equal(
        &per.iter().map(|p| p.0.clone()).collect::<Vec<_>>(),
    )
    .map_err(RunError::numerical)?;
    let dos_minus = EmpiricalMeasure1D::merge_equal(
        &per.iter().map(|p| p.1.clone()).collect::<Vec<_>>(),
    )
    .map_err(RunError::numerical)?;

    let mut files = Vec::new();
    for (name, m) in [("dos_plus", &dos_plus), ("dos_minus", &dos_minus)] {
        let mut csv = Vec::new();
        core_io::write_measure_1d_csv(&mut csv, m)
            .map_err(|e| RunError::Io { path: name.into(), source: e })?;
        files.push((format!("{name}.csv"), csv));
        files.push((format!("{name}.json"), json_bytes(m)));
    }

    Ok(Products {
        files,
        leakage: leakage_from(&per.iter().map(|p| (p.2, p.3)).collect::<Vec<_>>(), 2 * n as u64, 0),
        verification_failed: false,
    })
}

fn leakage_from(oob: &[(u64, u64)], evals_per_realization: u64, excluded: u64) -> LeakageStats {
    LeakageStats {
        realizations: oob.len() as u64,
        excluded_realizations: excluded,
        out_of_band_plus: oob.iter().map(|p| p.0).sum(),
        out_of_band_minus: oob.iter().map(|p| p.1).sum(),
        total_eigenvalues: evals_per_realization * oob.len() as u64,
    }
}

// ── ilac / rho ───────────────────────────────────────────────────────────

fn run_ilac(config: &ExperimentConfig) -> Result<Products, RunError> {
    let lat = Lattice::prepare(config)?;
    let r_count = config.realizations.max(1);

    let per: Vec<(IlacCurve, u64, u64)> = (0..r_count)
        .into_par_iter()
        .map(|r| {
            let real = full_realization(&lat, config.seed, r)?;
            let rho = correlation_estimate(&real.dec_plus, &real.dec_minus, &real.overlaps, &lat.spec)
                .map_err(|e| RunError::at_realization(r, e))?;
            Ok((ilac_curve(&rho), real.oob_plus, real.oob_minus))
        })
        .collect::<Result<_, RunError>>()?;

    let curve = IlacCurve::merge_equal(&per.iter().map(|p| p.0.clone()).collect::<Vec<_>>())
        .map_err(RunError::numerical)?;

    let mut csv = Vec::new();
    core_io::write_curve_csv(&mut csv, &curve)
        .map_err(|e| RunError::Io { path: "ilac.csv".into(), source: e })?;
    let wrapped = json!({ "provenance": "ilac_sum", "curve": curve });
    let files = vec![("ilac.csv".to_string(), csv), ("ilac.json".to_string(), json_bytes(&wrapped))];
    let n = lat.spec.site_count() as u64;
    Ok(Products {
        files,
        leakage: leakage_from(&per.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>(), 2 * n, 0),
        verification_failed: false,
    })
}

fn run_rho(config: &ExperimentConfig) -> Result<Products, RunError> {
    let lat = Lattice::prepare(config)?;
    let r_count = config.realizations.max(1);

    let per: Vec<(EmpiricalMeasure2D, u64, u64)> = (0..r_count)
        .into_par_iter()
        .map(|r| {
            let real = full_realization(&lat, config.seed, r)?;
            let rho = correlation_estimate(&real.dec_plus, &real.dec_minus, &real.overlaps, &lat.spec)
                .map_err(|e| RunError::at_realization(r, e))?;
            Ok((rho, real.oob_plus, real.oob_minus))
        })
        .collect::<Result<_, RunError>>()?;

    let rho = EmpiricalMeasure2D::merge_equal(&per.iter().map(|p| p.0.clone()).collect::<Vec<_>>())
        .map_err(RunError::numerical)?;

    let mut csv = Vec::new();
    core_io::write_measure_2d_csv(&mut csv, &rho)
        .map_err(|e| RunError::Io { path: "rho.csv".into(), source: e })?;
    let files = vec![("rho.csv".to_string(), csv), ("rho.json".to_string(), json_bytes(&rho))];
    let n = lat.spec.site_count() as u64;
    Ok(Products {
        files,
        leakage: leakage_from(&per.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>(), 2 * n, 0),
        verification_failed: false,
    })
}

// ── corners ──────────────────────────────────────────────────────────────

fn parse_band_strings(edges: &[String]) -> Result<ExactBands, RunError> {
    if edges.len() < 2 || edges.len() % 2 != 0 {
        return Err(RunError::Config(format!(
            "band edge list must hold lo/hi pairs, got {} entries",
            edges.len()
        )));
    }
    let pairs: Vec<(&str, &str)> = edges
        .chunks(2)
        .map(|pair| (pair[0].as_str(), pair[1].as_str()))
        .collect();
    ExactBands::from_strings(&pairs).map_err(|e| RunError::Config(e.to_string()))
}

fn exact_bands_from_structure(bands: &BandStructure) -> Result<ExactBands, RunError> {
    let pairs: Vec<(f64, f64)> = bands.bands.iter().map(|b| (b.lo, b.hi)).collect();
    ExactBands::from_f64_pairs(&pairs).map_err(RunError::numerical)
}

fn run_corners(config: &ExperimentConfig) -> Result<Products, RunError> {
    let dist = config.potential_or_default();
    dist.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let dimension = config.box_spec.map(|b| b.dimension).unwrap_or(1);

    let bands_supplied = config.params.bands_plus.is_some() || config.params.bands_minus.is_some();
    let (exact_plus, exact_minus) = match (&config.params.bands_plus, &config.params.bands_minus) {
        (Some(p), Some(m)) => (parse_band_strings(p)?, parse_band_strings(m)?),
        (None, None) => {
            let plus = almost_sure_bands(&dist, dimension, OperatorSign::Plus)
                .map_err(RunError::numerical)?;
            let minus = almost_sure_bands(&dist, dimension, OperatorSign::Minus)
                .map_err(RunError::numerical)?;
            (
                exact_bands_from_structure(&plus.structure)?,
                exact_bands_from_structure(&minus.structure)?,
            )
        }
        _ => {
            return Err(RunError::Config(
                "bands_plus and bands_minus must be supplied together".into(),
            ))
        }
    };

    let sigma = geometry::build_support(&exact_plus, &exact_minus);
    let mut corners: Vec<(Rat, Rat)> =
        sigma.rectangles.iter().flat_map(|r| r.corners()).collect();
    corners.sort();
    corners.dedup();
    let reports: Vec<GoodCornerReport> = corners
        .iter()
        .map(|c| geometry::classify_corner(&sigma, c).map_err(RunError::numerical))
        .collect::<Result<_, _>>()?;

    let two_band = if exact_plus.len() == 2 && exact_minus.len() == 2 {
        Some(
            geometry::two_band_good_corners(&exact_plus, &exact_minus)
                .map_err(RunError::numerical)?,
        )
    } else {
        None
    };

    let a_grid = config.params.a_grid.clone().unwrap_or_else(|| vec![0.01, 0.1, 0.5]);
    let mut covers = Vec::new();
    for report in reports.iter().filter(|r| r.is_good) {
        for &a in &a_grid {
            let a_rat = geometry::rat_from_f64(a).map_err(RunError::numerical)?;
            let cover =
                geometry::strip_cover(&sigma, report, &a_rat).map_err(RunError::numerical)?;
            covers.push(cover);
        }
    }

    let corners_json = json!({
        "bands_plus": exact_plus.bands().iter()
            .map(|(lo, hi)| [lo.to_string(), hi.to_string()]).collect::<Vec<_>>(),
        "bands_minus": exact_minus.bands().iter()
            .map(|(lo, hi)| [lo.to_string(), hi.to_string()]).collect::<Vec<_>>(),
        "rectangle_count": sigma.rectangles.len(),
        "reports": reports.iter().map(core_io::corner_report_json).collect::<Vec<_>>(),
        "two_band": two_band.as_ref().map(|t| json!({
            "ordering_holds": t.ordering_holds,
            "good_corners": t.good_corners.iter().map(core_io::corner_report_json).collect::<Vec<_>>(),
            "symmetric_extras": t.symmetric_extras.iter().map(core_io::corner_report_json).collect::<Vec<_>>(),
        })),
    });
    let covers_json =
        serde_json::Value::Array(covers.iter().map(core_io::strip_cover_json).collect());

    let mut files = vec![
        ("corners.json".to_string(), json_bytes(&corners_json)),
        ("strip_covers.json".to_string(), json_bytes(&covers_json)),
    ];

    // Empirical corner-bound table: only meaningful when the geometry came
    // from the potential's own almost-sure bands.
    let mut verification_failed = false;
    let mut leakage = LeakageStats::default();
    if !bands_supplied && config.realizations > 0 && config.box_spec.is_some() {
        let (rows, stats, failed) = corner_bound_table(config, &reports)?;
        let mut csv = Vec::new();
        core_io::write_bound_table_csv(&mut csv, &rows)
            .map_err(|e| RunError::Io { path: "bound_table.csv".into(), source: e })?;
        files.push(("bound_table.csv".to_string(), csv));
        leakage = stats;
        verification_failed = failed;
    }

    Ok(Products { files, leakage, verification_failed })
}

/// Monte-Carlo cross-check of the good-corner bound: the absorption
/// increment at each good corner sum against the corner window bound, with
/// eigenvalues clipped to the almost-sure bands.
fn corner_bound_table(
    config: &ExperimentConfig,
    reports: &[GoodCornerReport],
) -> Result<(Vec<core_io::BoundTableRow>, LeakageStats, bool), RunError> {
    let lat = Lattice::prepare(config)?;
    let n = lat.spec.site_count();
    let r_count = config.realizations;
    let a_grid = config.params.a_grid.clone().unwrap_or_else(|| vec![0.01, 0.1, 0.5]);

    struct Clipped {
        dos_plus: EmpiricalMeasure1D,
        dos_minus: EmpiricalMeasure1D,
        curve: IlacCurve,
        oob_plus: u64,
        oob_minus: u64,
    }

    let per: Vec<Clipped> = (0..r_count)
        .into_par_iter()
        .map(|r| {
            let real = full_realization(&lat, config.seed, r)?;
            let in_plus: Vec<usize> = (0..n)
                .filter(|&i| lat.bands_plus.structure.contains(real.dec_plus.eigenvalues()[i]))
                .collect();
            let in_minus: Vec<usize> = (0..n)
                .filter(|&j| lat.bands_minus.structure.contains(real.dec_minus.eigenvalues()[j]))
                .collect();
            let w = 1.0 / n as f64;
            let dos_plus = EmpiricalMeasure1D::from_atoms(
                in_plus.iter().map(|&i| (real.dec_plus.eigenvalues()[i], w)).collect(),
                Provenance::DosCountPerVolume,
            );
            let dos_minus = EmpiricalMeasure1D::from_atoms(
                in_minus.iter().map(|&j| (real.dec_minus.eigenvalues()[j], w)).collect(),
                Provenance::DosCountPerVolume,
            );
            let mut sums = Vec::with_capacity(in_plus.len() * in_minus.len());
            for &i in &in_plus {
                let x = real.dec_plus.eigenvalues()[i];
                for &j in &in_minus {
                    sums.push((x + real.dec_minus.eigenvalues()[j], real.overlaps.weight(i, j) * w));
                }
            }
            Ok(Clipped {
                dos_plus,
                dos_minus,
                curve: IlacCurve::from_sum_atoms(sums),
                oob_plus: real.oob_plus,
                oob_minus: real.oob_minus,
            })
        })
        .collect::<Result<_, RunError>>()?;

    let dos_plus =
        EmpiricalMeasure1D::merge_equal(&per.iter().map(|p| p.dos_plus.clone()).collect::<Vec<_>>())
            .map_err(RunError::numerical)?;
    let dos_minus = EmpiricalMeasure1D::merge_equal(
        &per.iter().map(|p| p.dos_minus.clone()).collect::<Vec<_>>(),
    )
    .map_err(RunError::numerical)?;
    let curve = IlacCurve::merge_equal(&per.iter().map(|p| p.curve.clone()).collect::<Vec<_>>())
        .map_err(RunError::numerical)?;

    let leakage = leakage_from(
        &per.iter().map(|p| (p.oob_plus, p.oob_minus)).collect::<Vec<_>>(),
        2 * n as u64,
        0,
    );
    let leakage_fraction = (leakage.out_of_band_plus + leakage.out_of_band_minus) as f64
        / leakage.total_eigenvalues.max(1) as f64;
    let meaningful = leakage_fraction < LEAKAGE_MEANINGFUL_LIMIT;

    let mut rows = Vec::new();
    let mut failed = false;
    for report in reports.iter().filter(|r| r.is_good) {
        let cx = geometry::rat_to_f64(&report.corner.0);
        let cy = geometry::rat_to_f64(&report.corner.1);
        for &a in &a_grid {
            let increment = curve.increment(cx + cy, a);
            let bound = geometry::corner_window_bound(&report.k_set, &dos_plus, &dos_minus, a)
                .map_err(RunError::numerical)?;
            let holds = increment <= bound + CORNER_BOUND_SLACK;
            if meaningful && !holds {
                failed = true;
            }
            rows.push(core_io::BoundTableRow {
                corner: (cx, cy),
                a,
                ilac_increment: increment,
                bound,
                holds,
            });
        }
    }
    Ok((rows, leakage, failed))
}

// ── tails ────────────────────────────────────────────────────────────────

fn run_tails(config: &ExperimentConfig) -> Result<Products, RunError> {
    let lat = Lattice::prepare(config)?;
    let n = lat.spec.site_count();
    let r_count = config.realizations.max(1);
    let source = config.params.tail_source.unwrap_or(TailSource::DosPlus);
    let side = config.params.side.unwrap_or(TailSide::TwoSided);

    let (bands_lo, bands_hi, first_band_width) = {
        let bp = &lat.bands_plus.structure;
        let bm = &lat.bands_minus.structure;
        match source {
            TailSource::DosPlus => (bp.min(), bp.max(), bp.bands[0].hi - bp.bands[0].lo),
            TailSource::DosMinus => (bm.min(), bm.max(), bm.bands[0].hi - bm.bands[0].lo),
            TailSource::Ilac => (
                bp.min() + bm.min(),
                bp.max() + bm.max(),
                bp.bands[0].hi - bp.bands[0].lo,
            ),
        }
    };
    let energies = config
        .params
        .energies
        .clone()
        .unwrap_or_else(|| vec![bands_lo, bands_hi]);
    let delta_grid = config
        .params
        .delta_grid
        .clone()
        .unwrap_or_else(|| default_delta_grid(first_band_width));

    enum Merged {
        Dos(EmpiricalMeasure1D),
        Curve(IlacCurve),
    }

    let (merged, oob): (Merged, Vec<(u64, u64)>) = match source {
        TailSource::DosPlus | TailSource::DosMinus => {
            let per: Vec<(EmpiricalMeasure1D, u64, u64)> = (0..r_count)
                .into_par_iter()
                .map(|r| {
                    let (ep, em, oob_p, oob_m) = values_realization(&lat, config.seed, r)?;
                    let evals = match source {
                        TailSource::DosPlus => &ep,
                        _ => &em,
                    };
                    Ok((count_per_volume(evals, n), oob_p, oob_m))
                })
                .collect::<Result<_, RunError>>()?;
            let dos = EmpiricalMeasure1D::merge_equal(
                &per.iter().map(|p| p.0.clone()).collect::<Vec<_>>(),
            )
            .map_err(RunError::numerical)?;
            (Merged::Dos(dos), per.iter().map(|p| (p.1, p.2)).collect())
        }
        TailSource::Ilac => {
            let per: Vec<(IlacCurve, u64, u64)> = (0..r_count)
                .into_par_iter()
                .map(|r| {
                    let real = full_realization(&lat, config.seed, r)?;
                    let rho = correlation_estimate(
                        &real.dec_plus,
                        &real.dec_minus,
                        &real.overlaps,
                        &lat.spec,
                    )
                    .map_err(|e| RunError::at_realization(r, e))?;
                    Ok((ilac_curve(&rho), real.oob_plus, real.oob_minus))
                })
                .collect::<Result<_, RunError>>()?;
            let curve =
                IlacCurve::merge_equal(&per.iter().map(|p| p.0.clone()).collect::<Vec<_>>())
                    .map_err(RunError::numerical)?;
            (Merged::Curve(curve), per.iter().map(|p| (p.1, p.2)).collect())
        }
    };

    let mut files = Vec::new();
    let mut probes = Vec::new();
    for (idx, &energy) in energies.iter().enumerate() {
        let profile = match &merged {
            Merged::Dos(dos) => tail_profile(dos, energy, &delta_grid, side),
            Merged::Curve(curve) => tail_profile(curve, energy, &delta_grid, side),
        }
        .map_err(RunError::numerical)?;
        let fit = lifshitz_fit(&profile);
        let proxy = convexity_proxy(&profile);
        let mut csv = Vec::new();
        core_io::write_tail_profile_csv(&mut csv, &profile)
            .map_err(|e| RunError::Io { path: format!("tail_{idx}.csv"), source: e })?;
        files.push((format!("tail_{idx}.csv"), csv));
        probes.push(json!({
            "energy": energy,
            "profile": profile,
            "fit": match fit {
                Ok(v) => serde_json::to_value(&v).expect("fit serializes"),
                Err(e) => json!({ "error": e.to_string() }),
            },
            "convexity_proxy": match proxy {
                Ok(p) => serde_json::to_value(&p).expect("proxy serializes"),
                Err(e) => json!({ "error": e.to_string() }),
            },
        }));
    }
    let report = json!({
        "source": match source {
            TailSource::DosPlus => "dos_plus",
            TailSource::DosMinus => "dos_minus",
            TailSource::Ilac => "ilac",
        },
        "delta_grid": delta_grid,
        "probes": probes,
    });
    files.push(("tails.json".to_string(), json_bytes(&report)));

    Ok(Products {
        files,
        leakage: leakage_from(&oob, 2 * n as u64, 0),
        verification_failed: false,
    })
}

// ── verify21 ─────────────────────────────────────────────────────────────

fn run_verify21(config: &ExperimentConfig) -> Result<Products, RunError> {
    let lat = Lattice::prepare(config)?;
    let n = lat.spec.site_count();
    let r_count = config.realizations.max(1);
    let a_grid = config
        .params
        .a_grid
        .clone()
        .unwrap_or_else(|| (1..=20).map(|k| 0.05 * k as f64).collect());
    if a_grid.is_empty() {
        return Err(RunError::Config("a_grid must not be empty".into()));
    }

    let e_plus = lat.bands_plus.structure.min();
    let e_minus = lat.bands_minus.structure.min();
    let e_plus_top = lat.bands_plus.structure.max();
    let e_minus_top = lat.bands_minus.structure.max();

    /// Per-realization window masses, fixed layout per `a`:
    /// [lhs, rhs_plus, rhs_minus, rhs_plus_tight, rhs_minus_tight] × edges.
    struct WindowMasses {
        lower: Vec<[f64; 5]>,
        upper: Vec<[f64; 5]>,
        included: bool,
        oob_plus: u64,
        oob_minus: u64,
    }

    let per: Vec<WindowMasses> = (0..r_count)
        .into_par_iter()
        .map(|r| {
            let real = full_realization(&lat, config.seed, r)?;
            let included = real.oob_plus == 0 && real.oob_minus == 0;
            if !included {
                return Ok(WindowMasses {
                    lower: Vec::new(),
                    upper: Vec::new(),
                    included,
                    oob_plus: real.oob_plus,
                    oob_minus: real.oob_minus,
                });
            }
            let rho =
                correlation_estimate(&real.dec_plus, &real.dec_minus, &real.overlaps, &lat.spec)
                    .map_err(|e| RunError::at_realization(r, e))?;
            let curve = ilac_curve(&rho);
            let dos_p = dos_estimate(&real.dec_plus, &lat.spec, DosEstimator::CountPerVolume);
            let dos_m = dos_estimate(&real.dec_minus, &lat.spec, DosEstimator::CountPerVolume);
            let masses = |edge: SpectralEdge, ep: f64, em: f64| -> Vec<[f64; 5]> {
                a_grid
                    .iter()
                    .map(|&a| {
                        let lhs = curve.increment(ep + em, a);
                        let rhs_plus = dos_p.mass(&Interval::window(ep, 2.0 * a));
                        let rhs_minus = dos_m.mass(&Interval::window(em, 2.0 * a));
                        let tight = |e: f64, dos: &EmpiricalMeasure1D| match edge {
                            SpectralEdge::Lower => dos.mass(&Interval::open(e, e + 2.0 * a)),
                            SpectralEdge::Upper => dos.mass(&Interval::open(e - 2.0 * a, e)),
                        };
                        [lhs, rhs_plus, rhs_minus, tight(ep, &dos_p), tight(em, &dos_m)]
                    })
                    .collect()
            };
            Ok(WindowMasses {
                lower: masses(SpectralEdge::Lower, e_plus, e_minus),
                upper: masses(SpectralEdge::Upper, e_plus_top, e_minus_top),
                included,
                oob_plus: real.oob_plus,
                oob_minus: real.oob_minus,
            })
        })
        .collect::<Result<_, RunError>>()?;

    let included: Vec<&WindowMasses> = per.iter().filter(|p| p.included).collect();
    if included.is_empty() {
        return Err(RunError::Config(
            "every realization had out-of-band eigenvalues; nothing to verify".into(),
        ));
    }

    // Fixed-order averages over included realizations; by linearity this
    // equals evaluating the merged measures.
    let average = |pick: fn(&WindowMasses) -> &Vec<[f64; 5]>| -> Vec<[f64; 5]> {
        (0..a_grid.len())
            .map(|k| {
                let mut acc = [CompensatedSum::new(); 5];
                for wm in &included {
                    for (slot, value) in acc.iter_mut().zip(pick(wm)[k]) {
                        slot.add(value);
                    }
                }
                let count = included.len() as f64;
                [
                    acc[0].value() / count,
                    acc[1].value() / count,
                    acc[2].value() / count,
                    acc[3].value() / count,
                    acc[4].value() / count,
                ]
            })
            .collect()
    };

    let build_table = |edge: SpectralEdge, ep: f64, em: f64, avgs: Vec<[f64; 5]>| EdgeWindowTable {
        edge,
        e_plus: ep,
        e_minus: em,
        rows: a_grid
            .iter()
            .zip(avgs)
            .map(|(&a, m)| EdgeWindowRow {
                a,
                lhs: m[0],
                rhs_plus: m[1],
                rhs_minus: m[2],
                holds: m[0] <= m[1].min(m[2]) + EDGE_INEQUALITY_SLACK,
                rhs_plus_tight: m[3],
                rhs_minus_tight: m[4],
                holds_tight: m[0] <= m[3].min(m[4]) + EDGE_INEQUALITY_SLACK,
            })
            .collect(),
    };

    let lower = build_table(SpectralEdge::Lower, e_plus, e_minus, average(|w| &w.lower));
    let upper = build_table(SpectralEdge::Upper, e_plus_top, e_minus_top, average(|w| &w.upper));

    let verification_failed = lower
        .rows
        .iter()
        .chain(&upper.rows)
        .any(|row| !(row.holds && row.holds_tight));

    let mut csv = Vec::new();
    core_io::write_edge_tables_csv(&mut csv, &[&lower, &upper])
        .map_err(|e| RunError::Io { path: "verify21.csv".into(), source: e })?;
    let report = json!({
        "included_realizations": included.len(),
        "excluded_realizations": per.len() - included.len(),
        "lower": lower,
        "upper": upper,
    });
    let files = vec![
        ("verify21.csv".to_string(), csv),
        ("verify21.json".to_string(), json_bytes(&report)),
    ];

    let excluded = (per.len() - included.len()) as u64;
    Ok(Products {
        files,
        leakage: leakage_from(
            &per.iter().map(|p| (p.oob_plus, p.oob_minus)).collect::<Vec<_>>(),
            2 * n as u64,
            excluded,
        ),
        verification_failed,
    })
}

// ── verify31 ─────────────────────────────────────────────────────────────

fn run_verify31(config: &ExperimentConfig) -> Result<Products, RunError> {
    let lat = Lattice::prepare(config)?;
    let n = lat.spec.site_count();
    let r_count = config.realizations.max(1);
    let first_band_width = {
        let b = &lat.bands_plus.structure.bands[0];
        b.hi - b.lo
    };
    let delta_grid = config
        .params
        .delta_grid
        .clone()
        .unwrap_or_else(|| default_delta_grid(first_band_width));

    let per: Vec<(IlacCurve, u64, u64)> = (0..r_count)
        .into_par_iter()
        .map(|r| {
            let real = full_realization(&lat, config.seed, r)?;
            let rho =
                correlation_estimate(&real.dec_plus, &real.dec_minus, &real.overlaps, &lat.spec)
                    .map_err(|e| RunError::at_realization(r, e))?;
            Ok((ilac_curve(&rho), real.oob_plus, real.oob_minus))
        })
        .collect::<Result<_, RunError>>()?;

    let curve = IlacCurve::merge_equal(&per.iter().map(|p| p.0.clone()).collect::<Vec<_>>())
        .map_err(RunError::numerical)?;

    let report = tails::two_band_tail_report(&lat.dist, lat.spec.dimension, &curve, &delta_grid)
        .map_err(RunError::numerical)?;

    let mut files = vec![("verify31.json".to_string(), json_bytes(&report))];
    for (section, probes) in [("external", &report.external), ("internal", &report.internal)] {
        for (idx, probe) in probes.iter().enumerate() {
            let mut csv = Vec::new();
            core_io::write_tail_profile_csv(&mut csv, &probe.profile).map_err(|e| RunError::Io {
                path: format!("verify31_{section}_{idx}.csv"),
                source: e,
            })?;
            files.push((format!("verify31_{section}_{idx}.csv"), csv));
        }
    }

    Ok(Products {
        files,
        leakage: leakage_from(&per.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>(), 2 * n as u64, 0),
        verification_failed: false,
    })
}

// ── covariance ───────────────────────────────────────────────────────────

fn run_covariance(config: &ExperimentConfig) -> Result<Products, RunError> {
    let dimension = config.params.torus_dimension.unwrap_or(1);
    let modulus = config.params.torus_modulus.unwrap_or(16);
    let families = config.params.families.unwrap_or(50);
    let torus = TorusSpace::new(dimension, modulus).map_err(|e| RunError::Config(e.to_string()))?;
    let dist = config.potential_or_default();
    dist.validate().map_err(|e| RunError::Config(e.to_string()))?;

    // Base potential over the torus sites, drawn with the usual keyed
    // generator (realization stream 0).
    let sample_spec = BoxSpec::with_site_cap(
        dimension,
        modulus,
        Boundary::Periodic,
        ilac_core::covariance::TORUS_SITE_CAP,
    )
    .map_err(|e| RunError::Config(e.to_string()))?;
    let q = lattice::sample_potential(&dist, &sample_spec, config.seed, 0)
        .map_err(RunError::numerical)?;
    let ctx = OrbitContext::new(torus, q.values.clone()).map_err(RunError::numerical)?;

    // Spectral interval endpoints sit at eigenvalue midpoints of the base
    // realization, far from any eigenvalue of any shifted copy.
    let mut h_plus = torus.laplacian();
    let mut h_minus = torus.laplacian();
    for (site, &v) in q.values.iter().enumerate() {
        h_plus[(site, site)] += v;
        h_minus[(site, site)] -= v;
    }
    let cuts_plus = interval_cuts(&eig_symmetric_values(&h_plus).map_err(RunError::numerical)?);
    let cuts_minus = interval_cuts(&eig_symmetric_values(&h_minus).map_err(RunError::numerical)?);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ COVAR_SEED_SALT);
    let mut results = Vec::new();
    let mut all_pass = true;

    for f in 0..families {
        // Keep spectral projections of H± in steady rotation.
        let a = if f % 2 == 0 {
            random_projection(&mut rng, &cuts_plus, &cuts_minus)
        } else {
            random_recipe(&mut rng, &cuts_plus, &cuts_minus)
        };
        let b = random_recipe(&mut rng, &cuts_plus, &cuts_minus);
        let check = ctx.commutation_check(&a, &b).map_err(RunError::numerical)?;
        all_pass &= check.pass;
        let mut row = core_io::identity_check_json("commutation", &check);
        attach_recipes(&mut row, &[("a", &a), ("b", &b)]);
        results.push(row);

        if f % 2 == 0 {
            let c = random_recipe(&mut rng, &cuts_plus, &cuts_minus);
            let check = ctx.cyclic_check(&a, &b, &c).map_err(RunError::numerical)?;
            all_pass &= check.pass;
            let mut row = core_io::identity_check_json("cyclic", &check);
            attach_recipes(&mut row, &[("a", &a), ("b", &b), ("c", &c)]);
            results.push(row);
        } else {
            let pa = random_positive_recipe(&mut rng, &cuts_plus, &cuts_minus);
            let pb = random_positive_recipe(&mut rng, &cuts_plus, &cuts_minus);
            let check = ctx.positivity_check(&pa, &pb).map_err(RunError::numerical)?;
            all_pass &= check.pass;
            let mut row = core_io::positivity_check_json("positivity", &check);
            attach_recipes(&mut row, &[("a", &pa), ("b", &pb)]);
            results.push(row);
        }
    }

    let report = json!({
        "torus": { "dimension": dimension, "modulus": modulus },
        "partition_of_unity_exact": torus.partition_of_unity_is_exact(),
        "group_law_exact": torus.group_law_is_exact(),
        "families": families,
        "checks": results,
    });
    let files = vec![("covariance.json".to_string(), json_bytes(&report))];
    Ok(Products {
        files,
        leakage: LeakageStats::default(),
        verification_failed: !all_pass,
    })
}

const COVAR_SEED_SALT: u64 = 0xC0FA_11CE;

fn attach_recipes(row: &mut serde_json::Value, recipes: &[(&str, &FamilyRecipe)]) {
    if let serde_json::Value::Object(map) = row {
        for (name, recipe) in recipes {
            map.insert(
                format!("family_{name}"),
                serde_json::to_value(recipe).expect("recipe serializes"),
            );
        }
    }
}

/// Candidate projection-interval endpoints: midpoints between consecutive
/// eigenvalues, plus margins beyond the spectral edges.
fn interval_cuts(evals: &[f64]) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(evals.len() + 1);
    cuts.push(evals[0] - 0.5);
    for w in evals.windows(2) {
        cuts.push(0.5 * (w[0] + w[1]));
    }
    cuts.push(evals[evals.len() - 1] + 0.5);
    cuts.dedup();
    cuts
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn pick_cut_pair(rng: &mut ChaCha8Rng, cuts: &[f64]) -> (f64, f64) {
    let n = cuts.len();
    let i = (rng.next_u64() as usize) % n;
    let mut j = (rng.next_u64() as usize) % n;
    if i == j {
        j = (j + 1) % n;
    }
    let (lo, hi) = if cuts[i] <= cuts[j] { (cuts[i], cuts[j]) } else { (cuts[j], cuts[i]) };
    (lo, hi)
}

fn pick_sign(rng: &mut ChaCha8Rng) -> OperatorSign {
    if rng.next_u64() % 2 == 0 {
        OperatorSign::Plus
    } else {
        OperatorSign::Minus
    }
}

fn random_projection(rng: &mut ChaCha8Rng, cuts_plus: &[f64], cuts_minus: &[f64]) -> FamilyRecipe {
    let sign = pick_sign(rng);
    let cuts = match sign {
        OperatorSign::Plus => cuts_plus,
        OperatorSign::Minus => cuts_minus,
    };
    let (lo, hi) = pick_cut_pair(rng, cuts);
    FamilyRecipe::SpectralProjection { sign, lo, hi }
}

fn random_recipe(rng: &mut ChaCha8Rng, cuts_plus: &[f64], cuts_minus: &[f64]) -> FamilyRecipe {
    match rng.next_u64() % 4 {
        0 => {
            let map = match rng.next_u64() % 4 {
                0 => PointwiseMap::One,
                1 => PointwiseMap::Identity,
                2 => PointwiseMap::Square,
                _ => PointwiseMap::Cos,
            };
            FamilyRecipe::Multiplication { map }
        }
        1 => {
            let sign = pick_sign(rng);
            let function = match rng.next_u64() % 3 {
                0 => {
                    let cuts = match sign {
                        OperatorSign::Plus => cuts_plus,
                        OperatorSign::Minus => cuts_minus,
                    };
                    let (lo, hi) = pick_cut_pair(rng, cuts);
                    BoundedFunction::Indicator { lo, hi }
                }
                1 => BoundedFunction::Gaussian {
                    center: -3.0 + 7.0 * unit(rng),
                    width: 0.5 + 2.5 * unit(rng),
                },
                _ => BoundedFunction::Cosine {
                    frequency: 0.3 + 2.2 * unit(rng),
                    phase: std::f64::consts::TAU * unit(rng),
                },
            };
            FamilyRecipe::FunctionOfH { sign, function }
        }
        2 => random_projection(rng, cuts_plus, cuts_minus),
        _ => FamilyRecipe::Laplacian,
    }
}

fn random_positive_recipe(
    rng: &mut ChaCha8Rng,
    cuts_plus: &[f64],
    cuts_minus: &[f64],
) -> FamilyRecipe {
    match rng.next_u64() % 3 {
        0 => random_projection(rng, cuts_plus, cuts_minus),
        1 => FamilyRecipe::FunctionOfH {
            sign: pick_sign(rng),
            function: BoundedFunction::Gaussian {
                center: -3.0 + 7.0 * unit(rng),
                width: 0.5 + 2.5 * unit(rng),
            },
        },
        _ => FamilyRecipe::Multiplication {
            map: if rng.next_u64() % 2 == 0 { PointwiseMap::Square } else { PointwiseMap::One },
        },
    }
}
