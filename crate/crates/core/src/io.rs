//! Deterministic serialization of measures, curves and reports.
//!
//! CSV files are UTF-8 with a header row, '.' decimal separator and 17
//! significant digits, so identical runs produce byte-identical files.
//! JSON carries estimator provenance next to the data. Rational corner
//! coordinates serialize both as exact `num/den` strings and as f64.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::json;

use crate::covariance::{IdentityCheck, PositivityCheck};
use crate::geometry::{rat_to_f64, GoodCornerReport, StripCover, WitnessReason};
use crate::measures::{EmpiricalMeasure1D, EmpiricalMeasure2D, IlacCurve};
use crate::tails::{EdgeWindowTable, TailProfile};

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_measure_1d_csv<W: Write>(w: &mut W, m: &EmpiricalMeasure1D) -> io::Result<()> {
    writeln!(w, "position,weight")?;
    for (pos, weight) in m.atoms() {
        writeln!(w, "{},{}", fmt_float(pos), fmt_float(weight))?;
    }
    Ok(())
}

pub fn write_measure_2d_csv<W: Write>(w: &mut W, m: &EmpiricalMeasure2D) -> io::Result<()> {
    writeln!(w, "position,position2,weight")?;
    for atom in m.atoms() {
        writeln!(
            w,
            "{},{},{}",
            fmt_float(atom.x),
            fmt_float(atom.y),
            fmt_float(atom.weight)
        )?;
    }
    Ok(())
}

pub fn write_curve_csv<W: Write>(w: &mut W, curve: &IlacCurve) -> io::Result<()> {
    writeln!(w, "position,weight,cumulative")?;
    for ((s, inc), cum) in curve
        .breakpoints()
        .iter()
        .zip(curve.increments())
        .zip(curve.cumulative())
    {
        writeln!(w, "{},{},{}", fmt_float(*s), fmt_float(*inc), fmt_float(*cum))?;
    }
    Ok(())
}

/// Columns: delta, mass, log_delta, loglog_mass; the double logarithm is
/// left empty when undefined (mass outside (0, 1)).
pub fn write_tail_profile_csv<W: Write>(w: &mut W, profile: &TailProfile) -> io::Result<()> {
    writeln!(w, "delta,mass,log_delta,loglog_mass")?;
    for s in &profile.samples {
        let loglog = if s.mass > 0.0 && s.mass < 1.0 {
            fmt_float((-s.mass.ln()).ln())
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{}",
            fmt_float(s.delta),
            fmt_float(s.mass),
            fmt_float(s.delta.ln()),
            loglog
        )?;
    }
    Ok(())
}

pub fn write_edge_table_csv<W: Write>(w: &mut W, table: &EdgeWindowTable) -> io::Result<()> {
    write_edge_tables_csv(w, &[table])
}

/// Several edge tables in one file; the `edge` column tells them apart.
pub fn write_edge_tables_csv<W: Write>(w: &mut W, tables: &[&EdgeWindowTable]) -> io::Result<()> {
    writeln!(
        w,
        "edge,a,lhs,rhs_plus,rhs_minus,holds,rhs_plus_tight,rhs_minus_tight,holds_tight"
    )?;
    for table in tables {
        for r in &table.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                table.edge,
                fmt_float(r.a),
                fmt_float(r.lhs),
                fmt_float(r.rhs_plus),
                fmt_float(r.rhs_minus),
                r.holds,
                fmt_float(r.rhs_plus_tight),
                fmt_float(r.rhs_minus_tight),
                r.holds_tight
            )?;
        }
    }
    Ok(())
}

/// One row per `(corner, a)`: the empirical absorption increment against
/// the corner window bound.
pub struct BoundTableRow {
    pub corner: (f64, f64),
    pub a: f64,
    pub ilac_increment: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn write_bound_table_csv<W: Write>(w: &mut W, rows: &[BoundTableRow]) -> io::Result<()> {
    writeln!(w, "corner,a,ilac_increment,bound,holds")?;
    for r in rows {
        writeln!(
            w,
            "\"({}, {})\",{},{},{},{}",
            fmt_float(r.corner.0),
            fmt_float(r.corner.1),
            fmt_float(r.a),
            fmt_float(r.ilac_increment),
            fmt_float(r.bound),
            r.holds
        )?;
    }
    Ok(())
}

pub fn corner_report_json(report: &GoodCornerReport) -> serde_json::Value {
    let witness = report.witness.as_ref().map(|w| {
        json!({
            "band_index": [w.rect.band_index.0, w.rect.band_index.1],
            "rect": {
                "x": [w.rect.x_lo.to_string(), w.rect.x_hi.to_string()],
                "y": [w.rect.y_lo.to_string(), w.rect.y_hi.to_string()],
            },
            "reason": match w.reason {
                WitnessReason::SegmentCrossing => "segment_crossing",
                WitnessReason::NonCornerTouch => "non_corner_touch",
            },
        })
    });
    json!({
        "corner": [rat_to_f64(&report.corner.0), rat_to_f64(&report.corner.1)],
        "corner_exact": [report.corner.0.to_string(), report.corner.1.to_string()],
        "is_good": report.is_good,
        "K": report.k_set.iter().map(|k| json!({
            "point": [rat_to_f64(&k.x), rat_to_f64(&k.y)],
            "point_exact": [k.x.to_string(), k.y.to_string()],
            "lower_left": k.lower_left,
            "top_right": k.top_right,
        })).collect::<Vec<_>>(),
        "witness": witness,
    })
}

pub fn strip_cover_json(cover: &StripCover) -> serde_json::Value {
    json!({
        "corner": [rat_to_f64(&cover.corner.0), rat_to_f64(&cover.corner.1)],
        "corner_exact": [cover.corner.0.to_string(), cover.corner.1.to_string()],
        "half_width": rat_to_f64(&cover.half_width),
        "squares": cover.squares.iter().map(|s| json!({
            "x": [rat_to_f64(&s.x_lo), rat_to_f64(&s.x_hi)],
            "y": [rat_to_f64(&s.y_lo), rat_to_f64(&s.y_hi)],
            "anchor_exact": [s.anchor.0.to_string(), s.anchor.1.to_string()],
        })).collect::<Vec<_>>(),
        "containment_holds": cover.containment_holds,
        "counterexample": cover.counterexample.as_ref().map(|(x, y)| {
            json!([x.to_string(), y.to_string()])
        }),
    })
}

pub fn identity_check_json(identity: &str, check: &IdentityCheck) -> serde_json::Value {
    json!({
        "identity": identity,
        "lhs": check.lhs,
        "rhs": check.rhs,
        "diff": check.max_abs_diff,
        "pass": check.pass,
    })
}

pub fn positivity_check_json(identity: &str, check: &PositivityCheck) -> serde_json::Value {
    json!({
        "identity": identity,
        "lhs": check.value,
        "rhs": 0.0,
        "diff": check.value.min(0.0).abs(),
        "pass": check.pass,
    })
}

/// Serialize any serde value as pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Provenance;

    #[test]
    fn float_formatting_round_trips() {
        for &x in &[0.1, -2.0, 1.0 / 3.0, 123456.789e-12, 0.0] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn measure_csv_shape() {
        let m = EmpiricalMeasure1D::from_atoms(
            vec![(1.0, 0.5), (-1.0, 0.5)],
            Provenance::DosCountPerVolume,
        );
        let mut buf = Vec::new();
        write_measure_1d_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "position,weight");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with('-'), "atoms sorted ascending: {}", lines[1]);
    }

    #[test]
    fn identical_inputs_serialize_identically() {
        let m = EmpiricalMeasure1D::from_atoms(
            vec![(0.25, 0.125), (0.5, 0.25)],
            Provenance::DosCountPerVolume,
        );
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_measure_1d_csv(&mut a, &m).unwrap();
        write_measure_1d_csv(&mut b, &m).unwrap();
        assert_eq!(a, b);
    }
}
