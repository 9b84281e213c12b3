//! Command-line front end: `orbmag <atomic|bands|thermo|sweep|kernel-check> --config FILE`.

pub mod cache;
pub mod config;
pub mod io;

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::ffi::OsString;
use std::path::PathBuf;

use crate::bands::{band_edges_and_gaps, band_structure, cell_grid, localization_slope, BandStructure, GapReport};
use crate::eigensolve::{ContourSpec, SolveOptions, SpectralData};
use crate::error::{Error, Result};
use crate::finite_t::{level_corrections, LevelData};
use crate::fit::LinearFit;
use crate::model::{Grid, LatticeConfig, ScalarField, SingleSitePotential};
use crate::operators::{hamiltonian_single_atom, observables};
use crate::susceptibility::{
    bound_spectrum, contour_kernel_susceptibility, report_from_spectrum, KernelTrace,
    SusceptibilityReport,
};
use crate::sweep::{crystal_box, fit_exponential_remainder, run_sweep, RemainderFit, SweepConfig, SweepOutcome};
use crate::thermo::{density, fermi_energy, finite_volume_susceptibility, FermiEnergy, ThermoResult};

use cache::{CacheStatus, SpectralCache};
use config::{ContourKind, Format, RunConfig};
use io::{band_rows, csv_bytes, json_bytes, thermo_rows, Outputs, SweepCsvRow};

const DEFAULT_OUT: &str = "orbmag-out";

#[derive(Debug, Parser)]
#[command(name = "orbmag", version, about = "Zero-field orbital susceptibility of wells and crystals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single worker thread, for bitwise reproducible output.
    #[arg(long, global = true)]
    serial: bool,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Per-level decomposition of a single well.
    Atomic,
    /// Band structure and gaps of the periodic crystal.
    Bands,
    /// Fermi energy and finite-volume susceptibility.
    Thermo,
    /// Crystal versus single-well susceptibility over lattice constants.
    Sweep,
    /// Contour-kernel susceptibility against the spectral decomposition.
    KernelCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Atomic => "atomic",
            Command::Bands => "bands",
            Command::Thermo => "thermo",
            Command::Sweep => "sweep",
            Command::KernelCheck => "kernel-check",
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(summary) => {
            for line in summary {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            e.exit_code()
        }
    }
}

/// Message with the tripped guard named.
fn describe(e: &Error) -> String {
    match e.root() {
        Error::InsufficientBoundStates { .. } => format!("occupation guard (n0 must not exceed the bound states): {e}"),
        Error::DegeneracyDetected { .. } => format!("non-degeneracy guard (occupied levels must be simple): {e}"),
        Error::NotInsulating(_) => format!("insulating guard (the Fermi level must sit in a gap): {e}"),
        _ => e.to_string(),
    }
}

fn execute(cli: &Cli) -> Result<Vec<String>> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let config = RunConfig::load(path)?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let threads = if cli.serial { 1 } else { 0 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cache = SpectralCache::from_env(&out.join(".cache"));
    log::info!("{} with {}, cache in {}", cli.command.name(), path.display(), cache.dir().display());
    let run = Run { config: &config, cache: &cache };
    let (outputs, summary) = pool.install(|| match cli.command {
        Command::Atomic => run.atomic(),
        Command::Bands => run.bands(),
        Command::Thermo => run.thermo(),
        Command::Sweep => run.sweep(),
        Command::KernelCheck => run.kernel_check(),
    })?;
    outputs.commit(&out)?;
    Ok(summary)
}

struct Run<'a> {
    config: &'a RunConfig,
    cache: &'a SpectralCache,
}

#[derive(Serialize)]
struct SpectrumKey<'a> {
    purpose: &'static str,
    grid: &'a Grid,
    site: &'a SingleSitePotential,
    minimum: usize,
    solver: &'a SolveOptions,
}

#[derive(Serialize)]
struct AtomicResult<'a> {
    report: &'a SusceptibilityReport,
    levels: Vec<LevelData>,
    /// `-2 kappa E2` of the ground level.
    ground_second_order_chi: Option<f64>,
    eigenvalues: &'a [f64],
}

#[derive(Serialize)]
struct BandsResult<'a> {
    bands: &'a BandStructure,
    gaps: &'a GapReport,
    time_reversal_defect: f64,
}

#[derive(Serialize)]
struct FiniteVolumeResult {
    lattice_constant: f64,
    box_multiple: usize,
    beta: f64,
    mu: f64,
    chi: f64,
    chi_scaled: f64,
    evenness_residual: f64,
}

#[derive(Serialize)]
struct ThermoReport<'a> {
    fermi: &'a FermiEnergy,
    schedule: Vec<ThermoResult>,
    finite_volume: Option<FiniteVolumeResult>,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    outcome: &'a SweepOutcome,
    fit: Option<RemainderFit>,
    fit_error: Option<String>,
    localization: Vec<Option<LinearFit>>,
}

#[derive(Serialize)]
struct KernelReport<'a> {
    kernel: &'a KernelTrace,
    contour: &'a ContourSpec,
    chi_total: f64,
    relative_error: f64,
}

fn cache_label(status: CacheStatus) -> &'static str {
    match status {
        CacheStatus::Hit => "hit",
        CacheStatus::Miss => "miss",
    }
}

fn add_files<T: Serialize, R: Serialize>(
    outputs: &mut Outputs,
    formats: &[Format],
    stem: &str,
    command: &str,
    json: &T,
    csv_rows: &[R],
) -> Result<()> {
    if formats.contains(&Format::Json) {
        outputs.add(format!("{stem}.json"), json_bytes(command, json)?);
    }
    if formats.contains(&Format::Csv) {
        outputs.add(format!("{stem}.csv"), csv_bytes(csv_rows)?);
    }
    Ok(())
}

impl Run<'_> {
    fn atomic_spectrum(&self, command: &str) -> Result<(Grid, ScalarField, SpectralData, CacheStatus)> {
        let grid = self.config.grid(command)?;
        let site = self.config.site(command)?;
        let n0 = self.config.lattice(command)?.n0;
        let solver = self.config.solver()?;
        let field = ScalarField::sample(grid, &site);
        let key = SpectrumKey { purpose: "single-well bound spectrum", grid: &grid, site: &site, minimum: n0, solver: &solver };
        let (spectral, status) = self.cache.get_or_compute(&key, || {
            let h = hamiltonian_single_atom(&grid, &field)?;
            bound_spectrum(&h, n0, &solver)
        })?;
        Ok((grid, field, spectral, status))
    }

    fn atomic(&self) -> Result<(Outputs, Vec<String>)> {
        let command = "atomic";
        let params = self.config.params()?;
        let probe = self.config.probe()?;
        let solver = self.config.solver()?;
        let n0 = self.config.lattice(command)?.n0;
        if n0 == 0 {
            return Err(Error::Config("lattice.n0 must be at least 1".into()));
        }
        let (grid, field, spectral, status) = self.atomic_spectrum(command)?;
        let h = hamiltonian_single_atom(&grid, &field)?;
        let report = report_from_spectrum(&grid, &field, &h, &spectral, n0, &params, probe.as_ref(), &solver)?;
        let obs = observables(&grid)?;
        let levels = (0..n0)
            .map(|l| level_corrections(&spectral, l, &h, &obs, &solver))
            .collect::<Result<Vec<_>>>()?;
        let ground = levels.first().map(|g| -2.0 * params.kappa() * g.second_order);
        let tau = spectral.count_negative;
        let result = AtomicResult {
            report: &report,
            levels,
            ground_second_order_chi: ground,
            eigenvalues: &spectral.eigenvalues[..tau],
        };
        let mut outputs = Outputs::default();
        add_files(&mut outputs, &self.config.formats(), "atomic", command, &result, &report.per_level)?;
        let mut line = format!(
            "atomic: n0={n0} tau={tau} chi_larmor={:.8e} chi_vanvleck={:.8e} chi_total={:.8e}",
            report.chi_larmor, report.chi_vanvleck, report.chi_total
        );
        if let Some(defect) = report.identity_defect() {
            line.push_str(&format!(" curvature_defect={defect:.3e}"));
        }
        line.push_str(&format!(" cache={}", cache_label(status)));
        Ok((outputs, vec![line]))
    }

    fn lattice_setup(&self, command: &str) -> Result<(LatticeConfig, SingleSitePotential, Grid, usize)> {
        let section = self.config.lattice(command)?;
        let constant = self.config.lattice_constant(command)?;
        let site = self.config.site(command)?;
        let dim = self.config.grid.map_or(2, |g| g.dim);
        let lattice = LatticeConfig::new(constant, 1, &site).map_err(|e| Error::Config(e.to_string()))?;
        let cell = cell_grid(&lattice, dim, section.spacing).map_err(|e| Error::Config(e.to_string()))?;
        let n_bands = section.n0 + section.extra_bands.max(1);
        Ok((lattice, site, cell, n_bands))
    }

    fn band_data(&self, command: &str) -> Result<(BandStructure, GapReport, Vec<f64>)> {
        let (lattice, site, cell, n_bands) = self.lattice_setup(command)?;
        let section = self.config.lattice(command)?;
        let solver = self.config.solver()?;
        let atomic = if self.config.grid.is_some() {
            let (_, _, spectral, _) = self.atomic_spectrum(command)?;
            spectral.eigenvalues[..spectral.count_negative].to_vec()
        } else {
            Vec::new()
        };
        let bs = band_structure(&lattice, &site, n_bands, section.k_per_axis, &cell, &solver)?;
        let gaps = band_edges_and_gaps(&bs, &atomic);
        Ok((bs, gaps, atomic))
    }

    fn bands(&self) -> Result<(Outputs, Vec<String>)> {
        let command = "bands";
        let (bs, gaps, _) = self.band_data(command)?;
        let result = BandsResult { bands: &bs, gaps: &gaps, time_reversal_defect: bs.time_reversal_defect() };
        let mut outputs = Outputs::default();
        add_files(&mut outputs, &self.config.formats(), "bands", command, &result, &band_rows(&bs))?;
        let mut lines = vec![format!(
            "bands: R={} bands={} k_points={} gaps={}",
            bs.lattice_constant,
            bs.n_bands,
            bs.k_points.len(),
            gaps.gaps.len()
        )];
        for g in &gaps.gaps {
            lines.push(format!("gap above band {}: [{:.8e}, {:.8e}]", g.below, g.lower, g.upper));
        }
        Ok((outputs, lines))
    }

    fn sweep_config(&self, command: &str, constants: Vec<f64>, atomic_half_width: f64, noise_floor: bool) -> Result<SweepConfig> {
        let section = self.config.lattice(command)?;
        let thermo = self.config.thermo(command)?;
        let config = SweepConfig {
            lattice_constants: constants,
            n0: section.n0,
            site: self.config.site(command)?,
            dim: self.config.grid.map_or(2, |g| g.dim),
            spacing: section.spacing,
            atomic_half_width,
            box_multiple: thermo.box_multiple,
            k_per_axis: section.k_per_axis,
            beta_schedule: thermo.beta_schedule,
            box_beta: thermo.box_beta,
            probe: self.config.probe()?.unwrap_or_default(),
            params: self.config.params()?,
            solver: self.config.solver()?,
            noise_floor,
        };
        config.validate().map_err(|e| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        })?;
        Ok(config)
    }

    fn thermo(&self) -> Result<(Outputs, Vec<String>)> {
        let command = "thermo";
        let section = self.config.lattice(command)?;
        let thermo = self.config.thermo(command)?;
        let (bs, _, _) = self.band_data(command)?;
        let fermi = fermi_energy(&bs, section.n0, &thermo.beta_schedule)?;
        let schedule = fermi
            .schedule
            .iter()
            .map(|&(beta, mu)| Ok(ThermoResult { beta, density: density(&bs, beta, mu)?, mu_solution: mu }))
            .collect::<Result<Vec<_>>>()?;
        let finite_volume = match self.config.bprobe {
            Some(_) => {
                let constant = bs.lattice_constant;
                let sweep = self.sweep_config(command, vec![constant], 0.5 * constant, false)?;
                let (grid, field) = crystal_box(&sweep, constant)?;
                let wells = sweep.box_multiple.pow(sweep.dim as u32);
                let fv = finite_volume_susceptibility(
                    &grid,
                    &field,
                    sweep.box_beta,
                    fermi.estimate,
                    sweep.params.kappa(),
                    &sweep.probe,
                    wells * (sweep.n0 + 1) + 4,
                    &crate::operators::MagneticOptions {
                        scheme: crate::operators::MagneticScheme::Peierls,
                        gauge_center: [0.0; 3],
                    },
                    &sweep.solver,
                )?;
                Some(FiniteVolumeResult {
                    lattice_constant: constant,
                    box_multiple: sweep.box_multiple,
                    beta: sweep.box_beta,
                    mu: fermi.estimate,
                    chi: fv.chi,
                    chi_scaled: fv.chi * bs.cell_volume(),
                    evenness_residual: fv.evenness_residual,
                })
            }
            None => None,
        };
        let densities: Vec<f64> = schedule.iter().map(|r| r.density).collect();
        let rows = thermo_rows(&fermi, &densities);
        let mut lines = vec![format!(
            "thermo: fermi_energy={:.10e} gap_midpoint={:.10e} deviation={:.3e}",
            fermi.estimate, fermi.gap_midpoint, fermi.deviation
        )];
        if let Some(fv) = &finite_volume {
            lines.push(format!("thermo: finite-volume chi={:.8e} scaled={:.8e}", fv.chi, fv.chi_scaled));
        }
        let report = ThermoReport { fermi: &fermi, schedule, finite_volume };
        let mut outputs = Outputs::default();
        add_files(&mut outputs, &self.config.formats(), "thermo", command, &report, &rows)?;
        Ok((outputs, lines))
    }

    fn sweep(&self) -> Result<(Outputs, Vec<String>)> {
        let command = "sweep";
        let section = self.config.sweep(command)?;
        let config = self.sweep_config(command, section.constants.clone(), section.atomic_half_width, section.noise_floor)?;
        let outcome = run_sweep(&config)?;
        let (fit, fit_error) = match fit_exponential_remainder(&outcome.rows, &section.alpha_grid, outcome.noise_floor.unwrap_or(0.0)) {
            Ok(fit) => (Some(fit), None),
            Err(e @ (Error::NoiseFloor(_) | Error::InvalidInput(_))) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let constants: Vec<f64> = outcome.rows.iter().map(|r| r.lattice_constant).collect();
        let localization = (0..outcome.atomic.tau.min(config.n0 + 1))
            .map(|l| {
                let deviations: Vec<f64> = outcome.rows.iter().filter_map(|r| r.band_localization.get(l).copied()).collect();
                (deviations.len() == constants.len())
                    .then(|| localization_slope(&constants, &deviations).ok())
                    .flatten()
            })
            .collect();
        let rows: Vec<SweepCsvRow> = outcome.rows.iter().map(SweepCsvRow::from).collect();
        let mut lines: Vec<String> = outcome
            .rows
            .iter()
            .map(|r| format!("sweep: R={} remainder={:.6e} fermi_remainder={:.6e}", r.lattice_constant, r.remainder, r.fermi_remainder))
            .collect();
        lines.push(match &fit {
            Some(f) => format!("sweep: fit c={:.4} alpha={:.2} r_squared={:.4}", f.c, f.alpha, f.r_squared),
            None => format!("sweep: no fit ({})", fit_error.as_deref().unwrap_or("")),
        });
        let report = SweepReport { outcome: &outcome, fit, fit_error, localization };
        let mut outputs = Outputs::default();
        add_files(&mut outputs, &self.config.formats(), "sweep", command, &report, &rows)?;
        Ok((outputs, lines))
    }

    fn kernel_check(&self) -> Result<(Outputs, Vec<String>)> {
        let command = "kernel-check";
        let params = self.config.params()?;
        let solver = self.config.solver()?;
        let contour_section = self.config.contour(command)?;
        let n0 = self.config.lattice(command)?.n0;
        let (grid, field, spectral, _) = self.atomic_spectrum(command)?;
        let h = hamiltonian_single_atom(&grid, &field)?;
        let report = report_from_spectrum(&grid, &field, &h, &spectral, n0, &params, None, &solver)?;
        let contour = match contour_section.shape {
            ContourKind::Circle => ContourSpec::around_lowest(&spectral.eigenvalues, n0, contour_section.nodes),
            ContourKind::Rectangle => {
                let lower = spectral.eigenvalues[0] - 1.0;
                let upper = 0.5 * (spectral.eigenvalues[n0 - 1] + spectral.eigenvalues[n0]);
                ContourSpec::rectangle(lower, upper, 1.0, contour_section.nodes)
            }
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        let kernel = contour_kernel_susceptibility(&h, &contour, &params, &solver)?;
        let relative_error = (kernel.chi - report.chi_total).abs() / report.chi_total.abs();
        let result = KernelReport { kernel: &kernel, contour: &contour, chi_total: report.chi_total, relative_error };
        let mut outputs = Outputs::default();
        if self.config.formats().contains(&Format::Json) {
            outputs.add("kernel.json", json_bytes(command, &result)?);
        }
        let line = format!(
            "kernel-check: chi_kernel={:.8e} chi_total={:.8e} relative_error={relative_error:.3e} null_trace={:.3e}",
            kernel.chi, report.chi_total, kernel.null_trace
        );
        Ok((outputs, vec![line]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommand_names() {
        for (argv, name) in [("atomic", "atomic"), ("kernel-check", "kernel-check"), ("sweep", "sweep")] {
            let cli = Cli::try_parse_from(["orbmag", argv, "--config", "x.toml"]).unwrap();
            assert_eq!(cli.command.name(), name);
        }
        assert!(Cli::try_parse_from(["orbmag", "plot"]).is_err());
        assert!(Cli::try_parse_from(["orbmag", "atomic", "--threads", "2"]).is_err());
    }

    #[test]
    fn missing_config_is_exit_two() {
        assert_eq!(run_cli(["orbmag", "atomic"]), 2);
        assert_eq!(run_cli(["orbmag", "atomic", "--config", "/nonexistent/run.toml"]), 2);
    }
}
