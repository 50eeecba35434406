//! Stable text formats: panel CSVs, Monte Carlo CSVs.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-exactly; separators are `,` and lines end in `\n`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{HdcceError, Result};
use crate::montecarlo::{McReport, SummaryTable};
use crate::panel::PanelDataset;

/// Round-trip exact float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn io_err(e: impl std::fmt::Display) -> HdcceError {
    HdcceError::InvalidConfig(format!("i/o: {e}"))
}

fn read_err(e: impl std::fmt::Display) -> HdcceError {
    HdcceError::Data(format!("malformed CSV: {e}"))
}

/// `y.csv`: one row per unit, one column per period, no header.
pub fn write_y_csv<W: Write>(panel: &PanelDataset, mut w: W) -> Result<()> {
    for yi in &panel.y {
        let line: Vec<String> = yi.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// `x.csv`: long format `unit,time,j,value` with 1-based indices.
pub fn write_x_csv<W: Write>(panel: &PanelDataset, mut w: W) -> Result<()> {
    writeln!(w, "unit,time,j,value").map_err(io_err)?;
    for (i, xi) in panel.x.iter().enumerate() {
        for s in 0..panel.t {
            for j in 0..panel.p {
                writeln!(w, "{},{},{},{}", i + 1, s + 1, j + 1, fmt_f64(xi[(s, j)])).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn parse_cell(field: &str, unit: usize, time: usize, j: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| HdcceError::Data(format!("unparseable value '{field}' at unit {unit}, time {time}, j {j}")))?;
    if !v.is_finite() {
        return Err(HdcceError::NonFinite { unit, time, j });
    }
    Ok(v)
}

/// Read `y.csv` and `x.csv` back into a panel. Non-finite cells are reported
/// with their 1-based location (`j = 0` denotes the response).
pub fn read_panel_csv<R1: Read, R2: Read>(y: R1, x: R2) -> Result<PanelDataset> {
    let mut yr = csv::ReaderBuilder::new().has_headers(false).from_reader(y);
    let mut ys: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in yr.records().enumerate() {
        let rec = rec.map_err(read_err)?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(s, f)| parse_cell(f, i + 1, s + 1, 0))
            .collect::<Result<Vec<f64>>>()?;
        ys.push(row);
    }
    let n = ys.len();
    if n == 0 {
        return Err(HdcceError::Dimension("y.csv is empty".into()));
    }
    let t = ys[0].len();
    if let Some(i) = ys.iter().position(|r| r.len() != t) {
        return Err(HdcceError::Dimension(format!("y.csv row {} has {} columns, expected {t}", i + 1, ys[i].len())));
    }

    let mut xr = csv::ReaderBuilder::new().has_headers(true).from_reader(x);
    let mut cells: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut p = 0;
    for rec in xr.records() {
        let rec = rec.map_err(read_err)?;
        if rec.len() != 4 {
            return Err(HdcceError::Dimension(format!("x.csv record has {} fields, expected 4", rec.len())));
        }
        let idx = |k: usize| -> Result<usize> {
            rec[k].trim().parse::<usize>().map_err(|_| HdcceError::Data(format!("bad index '{}' in x.csv", &rec[k])))
        };
        let (unit, time, j) = (idx(0)?, idx(1)?, idx(2)?);
        if unit == 0 || unit > n || time == 0 || time > t || j == 0 {
            return Err(HdcceError::Dimension(format!("x.csv index (unit {unit}, time {time}, j {j}) out of range")));
        }
        let v = parse_cell(&rec[3], unit, time, j)?;
        p = p.max(j);
        cells.push((unit, time, j, v));
    }
    if p == 0 {
        return Err(HdcceError::Dimension("x.csv has no records".into()));
    }
    if cells.len() != n * t * p {
        return Err(HdcceError::Dimension(format!("x.csv has {} cells, expected n*T*p = {}", cells.len(), n * t * p)));
    }
    let mut xs = vec![DMatrix::from_element(t, p, f64::NAN); n];
    for (unit, time, j, v) in cells {
        xs[unit - 1][(time - 1, j - 1)] = v;
    }
    for (i, xi) in xs.iter().enumerate() {
        if let Some(pos) = xi.iter().position(|v| v.is_nan()) {
            return Err(HdcceError::Dimension(format!(
                "x.csv is missing unit {}, time {}, j {}",
                i + 1,
                pos % t + 1,
                pos / t + 1
            )));
        }
    }
    PanelDataset::new(ys.into_iter().map(DVector::from_vec).collect(), xs)
}

/// `deviations.csv`: `run,estimator,j,delta` for included records.
pub fn write_deviations<W: Write>(report: &McReport, mut w: W) -> Result<()> {
    writeln!(w, "run,estimator,j,delta").map_err(io_err)?;
    for &est in &report.spec.estimators {
        for (run, rec) in report.included(est) {
            for (c, &j) in report.coordinates.iter().enumerate() {
                writeln!(w, "{},{},{},{}", run, est.name(), j, fmt_f64(rec.deltas[c])).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(table: &SummaryTable, mut w: W) -> Result<()> {
    writeln!(w, "estimator,coordinate,q05,q25,median,q75,q95,mean,share_exact_zero,n_runs,n_excluded").map_err(io_err)?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.estimator,
            r.coordinate,
            fmt_f64(r.q05),
            fmt_f64(r.q25),
            fmt_f64(r.median),
            fmt_f64(r.q75),
            fmt_f64(r.q95),
            fmt_f64(r.mean),
            fmt_f64(r.share_exact_zero),
            r.n_runs,
            r.n_excluded
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Per-run diagnostics: `run,seed,k_hat,projection_ratio,gap_ratio,head_over_p`.
pub fn write_run_diagnostics<W: Write>(report: &McReport, mut w: W) -> Result<()> {
    writeln!(w, "run,seed,k_hat,projection_ratio,gap_ratio,head_over_p").map_err(io_err)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &report.runs {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.run,
            r.seed,
            r.k_hat.map(|k| k.to_string()).unwrap_or_default(),
            opt(r.projection_ratio),
            opt(r.gap_ratio),
            opt(r.head_over_p)
        )
        .map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn panel_round_trip() {
        let y = vec![DVector::from_vec(vec![1.0, 2.5]), DVector::from_vec(vec![-0.1, 3.0])];
        let x = vec![DMatrix::from_fn(2, 3, |s, j| (s * 3 + j) as f64 * 0.1), DMatrix::from_fn(2, 3, |s, j| -((s + j) as f64))];
        let panel = PanelDataset::new(y, x).unwrap();
        let mut yb = Vec::new();
        let mut xb = Vec::new();
        write_y_csv(&panel, &mut yb).unwrap();
        write_x_csv(&panel, &mut xb).unwrap();
        let back = read_panel_csv(&yb[..], &xb[..]).unwrap();
        assert_eq!(back, panel);
    }

    #[test]
    fn nan_cell_located() {
        let y = "1,2\n3,4\n";
        let x = "unit,time,j,value\n1,1,1,0\n1,2,1,0\n2,1,1,NaN\n2,2,1,0\n";
        let err = read_panel_csv(y.as_bytes(), x.as_bytes()).unwrap_err();
        assert_eq!(err, HdcceError::NonFinite { unit: 2, time: 1, j: 1 });
    }

    #[test]
    fn missing_cell_rejected() {
        let y = "1,2\n";
        let x = "unit,time,j,value\n1,1,1,0\n";
        assert!(matches!(read_panel_csv(y.as_bytes(), x.as_bytes()), Err(HdcceError::Dimension(_))));
    }
}
