//! Report files. Column names here are frozen; see VERSIONS at the repository root.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::bands::BandStructure;
use crate::error::{Error, Result};
use crate::sweep::SweepRow;
use crate::thermo::FermiEnergy;

pub const REPORT_VERSION: u32 = 1;
pub const MODEL_NOTE: &str = "orbital response only; spin terms are excluded";

/// Header carried by every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub command: String,
    pub report_version: u32,
    pub model: String,
    pub crate_version: String,
}

impl ReportHeader {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            report_version: REPORT_VERSION,
            model: MODEL_NOTE.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub header: ReportHeader,
    pub result: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub l: usize,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    #[serde(rename = "E")]
    pub energy: f64,
}

pub fn band_rows(bs: &BandStructure) -> Vec<BandRow> {
    let mut rows = Vec::with_capacity(bs.n_bands * bs.k_points.len());
    for l in 0..bs.n_bands {
        for (k, energies) in bs.k_points.iter().zip(&bs.bands) {
            rows.push(BandRow { l: l + 1, k1: k[0], k2: k[1], k3: k[2], energy: energies[l] });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoRow {
    pub beta: f64,
    pub mu: f64,
    pub density: f64,
    pub fermi_energy_estimate: f64,
}

/// One row per inverse temperature of the schedule; the extrapolated estimate repeats.
pub fn thermo_rows(fermi: &FermiEnergy, densities: &[f64]) -> Vec<ThermoRow> {
    fermi
        .schedule
        .iter()
        .zip(densities)
        .map(|(&(beta, mu), &density)| ThermoRow { beta, mu, density, fermi_energy_estimate: fermi.estimate })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    #[serde(rename = "R")]
    pub lattice_constant: f64,
    pub cell_volume: f64,
    pub chi_bulk_scaled: f64,
    pub chi_atomic: f64,
    pub remainder: f64,
    pub fermi_energy: f64,
    pub fermi_remainder: f64,
    pub evenness_residual: f64,
    pub band_localization_max: f64,
}

impl From<&SweepRow> for SweepCsvRow {
    fn from(row: &SweepRow) -> Self {
        Self {
            lattice_constant: row.lattice_constant,
            cell_volume: row.cell_volume,
            chi_bulk_scaled: row.chi_bulk_scaled,
            chi_atomic: row.chi_atomic,
            remainder: row.remainder,
            fermi_energy: row.fermi_energy,
            fermi_remainder: row.fermi_remainder,
            evenness_residual: row.evenness_residual,
            band_localization_max: row.band_localization.iter().copied().fold(0.0, f64::max),
        }
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn json_bytes<T: Serialize>(command: &str, result: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&Report { header: ReportHeader::new(command), result })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Files of one run, held in memory until the run has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file through a temporary name, then renames them all into place.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
            if let Err(e) = fs::write(&tmp, bytes) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                return Err(e.into());
            }
            staged.push((tmp, dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            fs::rename(&tmp, &target)?;
            written.push(target);
        }
        Ok(written)
    }
}
