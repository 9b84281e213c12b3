//! TOML run configuration.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::eigensolve::SolveOptions;
use crate::error::{Error, Result};
use crate::model::{Grid, PhysicalParams, PotentialKind, SingleSitePotential};
use crate::susceptibility::BFieldProbe;
use crate::sweep::default_alpha_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physical: Option<PhysicalSection>,
    pub grid: Option<GridSection>,
    pub potential: Option<PotentialSection>,
    pub lattice: Option<LatticeSection>,
    pub solver: Option<SolveOptions>,
    pub contour: Option<ContourSection>,
    pub bprobe: Option<ProbeSection>,
    pub thermo: Option<ThermoSection>,
    pub sweep: Option<SweepSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    #[serde(default = "one")]
    pub kappa: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "two")]
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default = "bump")]
    pub kind: PotentialKind,
    pub depth: f64,
    pub radius: f64,
    #[serde(default = "unit")]
    pub aspect: f64,
}

fn bump() -> PotentialKind {
    PotentialKind::Bump
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    #[serde(rename = "R")]
    pub constant: Option<f64>,
    pub n0: usize,
    #[serde(default = "quarter")]
    pub spacing: f64,
    #[serde(default = "four")]
    pub k_per_axis: usize,
    /// Bands computed beyond the occupied ones.
    #[serde(default = "one_usize")]
    pub extra_bands: usize,
}

fn quarter() -> f64 {
    0.25
}

fn four() -> usize {
    4
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourKind {
    Circle,
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSection {
    #[serde(default = "circle")]
    pub shape: ContourKind,
    pub nodes: usize,
}

fn circle() -> ContourKind {
    ContourKind::Circle
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub h_b: f64,
    #[serde(default = "two")]
    pub levels: usize,
}

impl ProbeSection {
    pub fn probe(&self) -> Result<BFieldProbe> {
        BFieldProbe::new(self.h_b, self.levels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoSection {
    pub beta_schedule: Vec<f64>,
    #[serde(default = "two")]
    pub box_multiple: usize,
    #[serde(default = "box_beta")]
    pub box_beta: f64,
}

fn box_beta() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "R_values")]
    pub constants: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "yes")]
    pub noise_floor: bool,
    #[serde(default = "atomic_half_width")]
    pub atomic_half_width: f64,
}

fn yes() -> bool {
    true
}

fn atomic_half_width() -> f64 {
    8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default = "both_formats")]
    pub formats: Vec<Format>,
}

fn both_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn missing(section: &str, command: &str) -> Error {
    Error::Config(format!("section [{section}] is required by `{command}`"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        PhysicalParams::new(self.physical.map_or(1.0, |p| p.kappa)).map_err(config_error)
    }

    pub fn solver(&self) -> Result<SolveOptions> {
        let opts = self.solver.unwrap_or_default();
        opts.validate().map_err(config_error)?;
        Ok(opts)
    }

    pub fn grid(&self, command: &str) -> Result<Grid> {
        let g = self.grid.ok_or_else(|| missing("grid", command))?;
        Grid::dirichlet(g.dim, g.half_width, g.points).map_err(config_error)
    }

    pub fn site(&self, command: &str) -> Result<SingleSitePotential> {
        let p = self.potential.ok_or_else(|| missing("potential", command))?;
        SingleSitePotential::new(p.kind, p.depth, p.radius)
            .and_then(|s| s.with_aspect(p.aspect))
            .map_err(config_error)
    }

    pub fn lattice(&self, command: &str) -> Result<LatticeSection> {
        self.lattice.ok_or_else(|| missing("lattice", command))
    }

    pub fn lattice_constant(&self, command: &str) -> Result<f64> {
        self.lattice(command)?
            .constant
            .ok_or_else(|| Error::Config(format!("`{command}` needs lattice.R")))
    }

    pub fn probe(&self) -> Result<Option<BFieldProbe>> {
        self.bprobe.map(|p| p.probe().map_err(config_error)).transpose()
    }

    pub fn thermo(&self, command: &str) -> Result<ThermoSection> {
        self.thermo.clone().ok_or_else(|| missing("thermo", command))
    }

    pub fn sweep(&self, command: &str) -> Result<SweepSection> {
        self.sweep.clone().ok_or_else(|| missing("sweep", command))
    }

    pub fn contour(&self, command: &str) -> Result<ContourSection> {
        self.contour.ok_or_else(|| missing("contour", command))
    }

    pub fn formats(&self) -> Vec<Format> {
        self.output.as_ref().map_or_else(both_formats, |o| o.formats.clone())
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.as_ref().and_then(|o| o.dir.clone())
    }
}

/// Invalid values found while building model objects from the configuration are
/// configuration errors.
fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidInput(message) => Error::Config(message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[physical]
kappa = 2.0

[grid]
half_width = 10.0
points = 64

[potential]
depth = 6.0
radius = 2.0
aspect = 0.7

[lattice]
R = 6.0
n0 = 1

[bprobe]
h_b = 0.01
"#;

    #[test]
    fn parses_sections_with_defaults() {
        let config = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(config.params().unwrap().kappa(), 2.0);
        assert_eq!(config.grid("atomic").unwrap().points(), 64);
        assert_eq!(config.lattice("bands").unwrap().k_per_axis, 4);
        assert_eq!(config.lattice_constant("bands").unwrap(), 6.0);
        assert_eq!(config.probe().unwrap().unwrap().levels, 2);
        assert_eq!(config.formats(), vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_sections() {
        assert!(matches!(RunConfig::parse("[grid]\nhalf_width = 1.0\npoints = 8\ncolour = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[mystery]\n"), Err(Error::Config(_))));
        let config = RunConfig::parse("").unwrap();
        assert!(matches!(config.grid("atomic"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let config = RunConfig::parse("[potential]\ndepth = 6.0\nradius = -1.0\n").unwrap();
        assert!(matches!(config.site("atomic"), Err(Error::Config(_))));
        let config = RunConfig::parse("[solver]\ntol = -1.0\n").unwrap();
        assert!(matches!(config.solver(), Err(Error::Config(_))));
    }
}
