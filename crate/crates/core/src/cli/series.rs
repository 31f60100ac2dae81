//! Time-series CSV: one row per report.

use std::path::Path;

use crate::energetics::EnergyReport;
use crate::error::{Error, Result};
use crate::evolve::{Monitors, Trajectory};

pub const COLUMNS: [&str; 14] = [
    "t",
    "kinetic",
    "E",
    "E_del",
    "E_delbar",
    "degree_raw",
    "dissipation",
    "monotone_E",
    "director_l2_error",
    "velocity_l2",
    "h1_error",
    "min_d3",
    "mean_u_norm",
    "max_local_energy_ratio",
];

pub fn row(r: &EnergyReport, m: &Monitors) -> [f64; 14] {
    [
        r.time,
        r.kinetic,
        r.dirichlet,
        r.e_del,
        r.e_delbar,
        r.degree_raw,
        r.dissipation,
        r.monotone,
        m.director_l2_error,
        m.velocity_l2,
        m.h1_error,
        m.min_d3,
        m.mean_u_norm,
        m.max_local_energy_ratio,
    ]
}

/// Values are written in shortest round-trip form, so equal runs give equal
/// files byte for byte.
pub fn write_series<W: std::io::Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(COLUMNS).map_err(err)?;
    for (r, m) in traj.reports.iter().zip(&traj.monitors) {
        w.write_record(row(r, m).iter().map(|v| v.to_string()))
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// `(t, column)` pairs from a series file.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("{}: no column {name:?}", path.display())))
    };
    let (ti, ci) = (find("t")?, find(column)?);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: bad number {:?}", line + 2, rec.get(i))))
        };
        out.push((parse(ti)?, parse(ci)?));
    }
    Ok(out)
}
