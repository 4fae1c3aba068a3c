//! End-to-end pipeline: configuration, presets and the simulate / spectra /
//! retrieve / render / evaluate stages, both in memory and on disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cube::HyperCube;
use crate::denoise::{DenoiserSpec, SnsSpec};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::io::csv::Table;
use crate::io::{self, pgm, CubeData, CubeFile};
use crate::metrics;
use crate::optics::{ComplexField, PropagationGeometry, Propagator};
use crate::phantom::{self, DepthMap, PhantomSpec, WrapPolicy};
use crate::retrieval::{self, PhaseBranch, RetrievalResult, SolverConfig, DEFAULT_MAX_ITERATIONS};
use crate::spectroscopy::{
    self, DelayLineConfig, InterferogramStack, SpectralAmplitudeCube, SpectralProfile, WavelengthGrid,
};

const NOISE_STREAM: u64 = 1;

/// Illumination spectrum: every on-grid wavelength inside
/// `[min_wavelength, max_wavelength]` with weights from `profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpectrum {
    pub min_wavelength: f64,
    pub max_wavelength: f64,
    #[serde(default)]
    pub profile: SpectralProfile,
}

/// Solver settings; the propagation geometry comes from the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_cube_iterations: usize,
    pub tolerance: Option<f64>,
    pub denoiser: DenoiserSpec,
    pub sns: SnsSpec,
    pub dispersion: DispersionModel,
    pub phase_branch: PhaseBranch,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_cube_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: None,
            denoiser: DenoiserSpec::default(),
            sns: SnsSpec::default(),
            dispersion: DispersionModel::default(),
            phase_branch: PhaseBranch::default(),
        }
    }
}

/// Input files of the later stages; command-line arguments take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct IoPaths {
    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub geometry: PropagationGeometry,
    pub delay: DelayLineConfig,
    /// Analysis band `[min, max]` in meters.
    pub band: [f64; 2],
    /// Number of band wavelengths kept for retrieval; all when absent.
    pub retrieval_wavelengths: Option<usize>,
    /// Broadband illumination; when absent the source emits exactly the
    /// analysis wavelengths with unit weight.
    pub source: Option<SourceSpectrum>,
    pub phantom: PhantomSpec,
    /// Refractive index of the simulated object.
    pub material: DispersionModel,
    pub wrap_policy: WrapPolicy,
    pub noise_sigma: f64,
    pub seed: u64,
    pub solver: SolverSettings,
    pub io: IoPaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            geometry: PropagationGeometry {
                distance: 16e-3,
                pixel_pitch: 3.45e-6,
                rows: 64,
                cols: 64,
                padding: 1,
            },
            delay: DelayLineConfig {
                delta_z: 100e-9,
                n_steps: 2000,
            },
            band: [680e-9, 820e-9],
            retrieval_wavelengths: Some(16),
            source: None,
            phantom: PhantomSpec::default(),
            material: DispersionModel::default(),
            wrap_policy: WrapPolicy::Warn,
            noise_sigma: 0.0,
            seed: 0,
            solver: SolverSettings::default(),
            io: IoPaths::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    PaperSim,
    PaperExp,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-sim" => Ok(Preset::PaperSim),
            "paper-exp" => Ok(Preset::PaperExp),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected paper-sim or paper-exp)"
            ))),
        }
    }
}

impl Preset {
    /// Overwrites the parameters the preset defines and leaves the rest.
    pub fn apply(self, cfg: &mut PipelineConfig) {
        cfg.geometry.distance = 16e-3;
        cfg.geometry.pixel_pitch = 3.45e-6;
        cfg.band = [680e-9, 820e-9];
        match self {
            Preset::PaperSim => {
                cfg.delay = DelayLineConfig {
                    delta_z: 100e-9,
                    n_steps: 2000,
                };
                cfg.phantom.max_depth = 317e-9;
                cfg.source = Some(SourceSpectrum {
                    min_wavelength: 470e-9,
                    max_wavelength: 2400e-9,
                    profile: SpectralProfile::FlatPerWavelength { reference: 750e-9 },
                });
            }
            Preset::PaperExp => {
                cfg.delay = DelayLineConfig {
                    delta_z: 59.7e-9,
                    n_steps: 1880,
                };
                cfg.phantom.max_depth = 127e-9;
                cfg.material = DispersionModel::SellmeierFusedSilica;
                cfg.solver.dispersion = DispersionModel::SellmeierFusedSilica;
                cfg.source = None;
            }
        }
    }

    pub fn config(self) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        self.apply(&mut cfg);
        cfg
    }
}

impl PipelineConfig {
    /// Reads a config file or a run manifest (its embedded config is used).
    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = io::read_json(path)?;
        let inner = match value.get("config") {
            Some(c) if value.get("stage").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Render options stored in a render manifest, if `path` is one.
    pub fn load_render_options(path: &Path) -> Result<Option<RenderOptions>> {
        let value: serde_json::Value = io::read_json(path)?;
        match value.get("render") {
            Some(r) if value.get("stage").is_some() => serde_json::from_value(r.clone())
                .map(Some)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            _ => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.delay.validate()?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        let grid = self.analysis_grid()?;
        if let Some(src) = &self.source {
            if !(src.min_wavelength <= self.band[0] && self.band[1] <= src.max_wavelength) {
                return Err(Error::Config(format!(
                    "source range [{}, {}] must contain the analysis band [{}, {}]",
                    src.min_wavelength, src.max_wavelength, self.band[0], self.band[1]
                )));
            }
            self.source_grid()?;
        }
        for &l in grid.wavelengths() {
            self.material.index(l)?;
            self.solver.dispersion.index(l)?;
        }
        self.solver_config()?.validate()?;
        for p in [&self.io.input, &self.io.truth].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Band wavelengths used for spectra and retrieval.
    pub fn analysis_grid(&self) -> Result<WavelengthGrid> {
        let grid = spectroscopy::wavelength_grid_for_band(&self.delay, self.band[0], self.band[1])?;
        match self.retrieval_wavelengths {
            Some(l) => grid.subsample(l).map_err(|e| Error::Config(e.to_string())),
            None => Ok(grid),
        }
    }

    /// Emitted wavelengths and their weights.
    pub fn source_grid(&self) -> Result<(WavelengthGrid, Vec<f64>)> {
        match &self.source {
            Some(src) => {
                let grid = spectroscopy::wavelength_grid_for_band(&self.delay, src.min_wavelength, src.max_wavelength)?;
                let w = src.profile.weights(&grid)?;
                Ok((grid, w))
            }
            None => {
                let grid = self.analysis_grid()?;
                let w = vec![1.0; grid.len()];
                Ok((grid, w))
            }
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        Ok(SolverConfig {
            max_cube_iterations: s.max_cube_iterations,
            tolerance: s.tolerance,
            denoiser: s.denoiser,
            sns: s.sns,
            dispersion: s.dispersion,
            phase_branch: s.phase_branch,
            geometry: self.geometry,
        })
    }
}

/// Everything `simulate` produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub depth: DepthMap,
    /// Object transmittances at the analysis wavelengths.
    pub truth: HyperCube,
    pub clean: InterferogramStack,
    pub noisy: InterferogramStack,
}

fn object_field(depth: &DepthMap, wavelength: f64, cfg: &PipelineConfig) -> Result<ComplexField> {
    let phase = phantom::thickness_to_phase(depth, wavelength, &cfg.material, cfg.wrap_policy)?;
    ComplexField::new(phase.mapv(Complex64::cis), wavelength, depth.pixel_pitch())
}

/// Phantom, object fields, sensor fields, interferograms and noise.
pub fn simulate(cfg: &PipelineConfig) -> Result<Simulation> {
    cfg.validate()?;
    let geom = cfg.geometry;
    let depth = phantom::make_phantom(&cfg.phantom, geom.rows, geom.cols, geom.pixel_pitch)?;
    let analysis = cfg.analysis_grid()?;
    let truth = HyperCube::new(
        analysis
            .wavelengths()
            .iter()
            .map(|&l| object_field(&depth, l, cfg))
            .collect::<Result<Vec<_>>>()?,
    )?;

    let (source, weights) = cfg.source_grid()?;
    let mut propagator = Propagator::new(geom)?;
    let mut sensor = Vec::with_capacity(source.len());
    for (&l, &w) in source.wavelengths().iter().zip(&weights) {
        let obj = object_field(&depth, l, cfg)?;
        let v = propagator.forward(&obj)?;
        let scale = w.sqrt();
        sensor.push(ComplexField::new(
            v.into_data().mapv(|x| x * scale),
            l,
            geom.pixel_pitch,
        )?);
    }
    let clean = spectroscopy::synthesize_interferograms(&HyperCube::new(sensor)?, &cfg.delay)?;
    let noisy = spectroscopy::add_noise(&clean, cfg.noise_sigma, spectroscopy::mix_seed(cfg.seed, NOISE_STREAM))?;
    Ok(Simulation {
        depth,
        truth,
        clean,
        noisy,
    })
}

/// Spectral amplitudes on the analysis grid, using the stack's delay line.
pub fn spectra(stack: &InterferogramStack, cfg: &PipelineConfig, pixel_pitch: f64) -> Result<SpectralAmplitudeCube> {
    let mut cfg = cfg.clone();
    cfg.delay = *stack.delay();
    spectroscopy::estimate_spectra(stack, &cfg.analysis_grid()?, pixel_pitch)
}

/// Per-wavelength peak intensity and spectral PSNR.
pub fn spectra_table(cube: &SpectralAmplitudeCube, sigma_noise: f64) -> Result<Table> {
    let psnr = if sigma_noise > 0.0 {
        spectroscopy::psnr_spectral(cube, sigma_noise, cube.grid().delay())?.psnr_db
    } else {
        vec![f64::INFINITY; cube.len()]
    };
    let mut table = Table::new(["wavelength_nm", "max_intensity", "psnr_db"]);
    for (s, (&l, p)) in cube.grid().wavelengths().iter().zip(psnr).enumerate() {
        let peak = cube.slice(s).iter().map(|a| a * a).fold(0.0, f64::max);
        table.push(vec![l * 1e9, peak, p])?;
    }
    Ok(table)
}

/// Truth slices reordered to match `wavelengths`.
pub fn match_truth(truth: &HyperCube, wavelengths: &[f64], dim: (usize, usize)) -> Result<Vec<Array2<f64>>> {
    if truth.dim() != dim {
        return Err(Error::invalid(format!(
            "truth cube is {:?} but the reconstruction is {dim:?}",
            truth.dim()
        )));
    }
    wavelengths
        .iter()
        .map(|&l| {
            truth
                .position_of(l)
                .map(|i| truth.slices()[i].phase())
                .ok_or_else(|| Error::invalid(format!("truth cube has no slice at {:.3} nm", l * 1e9)))
        })
        .collect()
}

pub fn phase_rrmse_per_slice(cube: &HyperCube, truth_phase: &[Array2<f64>]) -> Result<Vec<f64>> {
    cube.slices()
        .iter()
        .zip(truth_phase)
        .map(|(s, t)| metrics::phase_rrmse(&s.phase(), t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RetrievalReport {
    pub result: RetrievalResult,
    /// `t, phase_change` plus `mean_rrmse` when a truth cube is given.
    pub convergence: Table,
    /// `t, wavelength_nm, rrmse` rows, when a truth cube is given.
    pub rrmse: Option<Table>,
}

pub fn retrieve(
    cube: &SpectralAmplitudeCube,
    cfg: &PipelineConfig,
    truth: Option<&HyperCube>,
) -> Result<RetrievalReport> {
    let solver = cfg.solver_config()?;
    let wavelengths = cube.grid().wavelengths().to_vec();
    let truth_phase = truth.map(|t| match_truth(t, &wavelengths, cube.dim())).transpose()?;

    let mut convergence = Table::new(if truth_phase.is_some() {
        vec!["t", "phase_change", "mean_rrmse"]
    } else {
        vec!["t", "phase_change"]
    });
    let mut rrmse = truth_phase
        .as_ref()
        .map(|_| Table::new(["t", "wavelength_nm", "rrmse"]));
    let mut failure = None;
    let result = retrieval::hspr_run_with_monitor(cube, &solver, |t, outcome| {
        let mut row = vec![t as f64, outcome.phase_change];
        if let (Some(tp), Some(table)) = (&truth_phase, rrmse.as_mut()) {
            match phase_rrmse_per_slice(&outcome.object_cube, tp) {
                Ok(r) => {
                    for (&l, &v) in wavelengths.iter().zip(&r) {
                        table.rows.push(vec![t as f64, l * 1e9, v]);
                    }
                    row.push(r.iter().sum::<f64>() / r.len() as f64);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    row.push(f64::NAN);
                }
            }
        }
        convergence.rows.push(row);
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RetrievalReport {
        result,
        convergence,
        rrmse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RenderQuantity {
    #[default]
    Amplitude,
    Phase,
    Depth,
}

impl FromStr for RenderQuantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(Self::Amplitude),
            "phase" => Ok(Self::Phase),
            "depth" => Ok(Self::Depth),
            other => Err(Error::Config(format!("unknown render quantity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RenderOptions {
    pub quantity: RenderQuantity,
    /// Slice indices; all slices when absent.
    pub slices: Option<Vec<usize>>,
    /// Cross-section row; the middle row when absent.
    pub row: Option<usize>,
    /// Optional cross-section column.
    pub col: Option<usize>,
    /// Complex cube whose phase fixes the unobservable global phase offset
    /// before phase or depth rendering.
    pub phase_reference: Option<PathBuf>,
}

/// One rendered slice.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSlice {
    pub slice: usize,
    pub wavelength: Option<f64>,
    pub values: Array2<f64>,
    pub image: Array2<u8>,
    pub normalization: pgm::Normalization,
}

/// Values of the requested quantity for one slice of a cube file.
pub fn slice_values(
    file: &CubeFile,
    s: usize,
    quantity: RenderQuantity,
    dispersion: &DispersionModel,
    reference: Option<&HyperCube>,
) -> Result<Array2<f64>> {
    let header = file.header();
    if s >= header.slices {
        return Err(Error::invalid(format!(
            "slice {s} out of range (cube has {} slices)",
            header.slices
        )));
    }
    if quantity == RenderQuantity::Amplitude {
        return file.slice_real(s);
    }
    let CubeData::C128(data) = file.data() else {
        return Err(Error::invalid("phase and depth need a complex cube"));
    };
    let mut phase = data.index_axis(Axis(0), s).mapv(|v| v.arg());
    let wavelength = header.wavelengths_m.get(s).copied();
    if let Some(r) = reference {
        let l = wavelength.ok_or_else(|| Error::invalid("cube has no wavelengths to align"))?;
        let truth = match_truth(r, &[l], phase.dim())?;
        phase = metrics::align_phase(&phase, &truth[0])?;
    }
    if quantity == RenderQuantity::Depth {
        let l = wavelength.ok_or_else(|| Error::invalid("depth rendering needs slice wavelengths"))?;
        return Ok(
            phantom::phase_to_thickness(&phase, l, dispersion, header.pixel_pitch_m)?
                .heights()
                .clone(),
        );
    }
    Ok(phase)
}

pub fn render(
    file: &CubeFile,
    options: &RenderOptions,
    dispersion: &DispersionModel,
    reference: Option<&HyperCube>,
) -> Result<Vec<RenderedSlice>> {
    let header = file.header();
    let slices = options.slices.clone().unwrap_or_else(|| (0..header.slices).collect());
    slices
        .into_iter()
        .map(|s| {
            let values = slice_values(file, s, options.quantity, dispersion, reference)?;
            let (image, normalization) = pgm::normalize_to_u8(&values)?;
            Ok(RenderedSlice {
                slice: s,
                wavelength: header.wavelengths_m.get(s).copied(),
                values,
                image,
                normalization,
            })
        })
        .collect()
}

/// `position_um, value` along one row.
pub fn row_section(values: &Array2<f64>, row: usize, pixel_pitch: f64) -> Result<Table> {
    if row >= values.nrows() {
        return Err(Error::invalid(format!(
            "row {row} out of range ({} rows)",
            values.nrows()
        )));
    }
    let mut t = Table::new(["position_um", "value"]);
    for (c, &v) in values.row(row).iter().enumerate() {
        t.push(vec![c as f64 * pixel_pitch * 1e6, v])?;
    }
    Ok(t)
}

/// `position_um, value` along one column.
pub fn col_section(values: &Array2<f64>, col: usize, pixel_pitch: f64) -> Result<Table> {
    if col >= values.ncols() {
        return Err(Error::invalid(format!(
            "column {col} out of range ({} columns)",
            values.ncols()
        )));
    }
    let mut t = Table::new(["position_um", "value"]);
    for (r, &v) in values.column(col).iter().enumerate() {
        t.push(vec![r as f64 * pixel_pitch * 1e6, v])?;
    }
    Ok(t)
}

/// Per-wavelength phase RRMSE of a reconstruction against a truth cube.
pub fn evaluate(cube: &HyperCube, truth: &HyperCube) -> Result<Table> {
    let wavelengths = cube.wavelengths();
    let truth_phase = match_truth(truth, &wavelengths, cube.dim())?;
    let r = phase_rrmse_per_slice(cube, &truth_phase)?;
    let mut t = Table::new(["wavelength_nm", "phase_rrmse"]);
    for (&l, &v) in wavelengths.iter().zip(&r) {
        t.push(vec![l * 1e9, v])?;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, label: impl Into<String>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let hash = Sha256::digest(&bytes);
        Ok(Self {
            path: label.into(),
            sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// Provenance record written to every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<RenderOptions>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn write_manifest(
    out: &Path,
    stage: &str,
    cfg: &PipelineConfig,
    render: Option<&RenderOptions>,
    inputs: &[&Path],
    outputs: &[String],
) -> Result<PathBuf> {
    let manifest = Manifest {
        tool: "hspr".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        stage: stage.into(),
        seed: cfg.seed,
        config: cfg.clone(),
        render: render.cloned(),
        inputs: inputs
            .iter()
            .map(|p| FileDigest::of(p, p.to_string_lossy()))
            .collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|name| FileDigest::of(&out.join(name), name.clone()))
            .collect::<Result<_>>()?,
    };
    let path = out.join(MANIFEST_NAME);
    io::write_json(&path, &manifest)?;
    Ok(path)
}

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

pub const TRUTH_FILE: &str = "truth.cube";
pub const CLEAN_FILE: &str = "clean_stack.cube";
pub const NOISY_FILE: &str = "noisy_stack.cube";
pub const SPECTRAL_FILE: &str = "spectral.cube";
pub const SPECTRA_CSV: &str = "spectra.csv";
pub const OBJECT_FILE: &str = "object.cube";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const RRMSE_CSV: &str = "rrmse.csv";
pub const METRICS_CSV: &str = "metrics.csv";

/// Writes the truth cube and both stacks; returns their paths.
pub fn run_simulate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    ensure_dir(out)?;
    let sim = simulate(cfg)?;
    let pitch = cfg.geometry.pixel_pitch;
    CubeFile::from_hypercube(&sim.truth).write(&out.join(TRUTH_FILE))?;
    CubeFile::from_stack(&sim.clean, pitch).write(&out.join(CLEAN_FILE))?;
    CubeFile::from_stack(&sim.noisy, pitch).write(&out.join(NOISY_FILE))?;
    let names = [TRUTH_FILE, CLEAN_FILE, NOISY_FILE].map(String::from);
    write_manifest(out, "simulate", cfg, None, &[], &names)?;
    Ok(names.iter().map(|n| out.join(n)).collect())
}

pub fn run_spectra(stack_path: &Path, cfg: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    let file = CubeFile::read(stack_path)?;
    let stack = file.to_stack()?;
    ensure_dir(out)?;
    let cube = spectra(&stack, cfg, file.header().pixel_pitch_m)?;
    CubeFile::from_spectral(&cube).write(&out.join(SPECTRAL_FILE))?;
    spectra_table(&cube, cfg.noise_sigma)?.write(&out.join(SPECTRA_CSV))?;
    let mut cfg = cfg.clone();
    cfg.io = IoPaths {
        input: Some(stack_path.into()),
        truth: None,
    };
    write_manifest(
        out,
        "spectra",
        &cfg,
        None,
        &[stack_path],
        &[SPECTRAL_FILE.into(), SPECTRA_CSV.into()],
    )?;
    Ok(out.join(SPECTRAL_FILE))
}

pub fn run_retrieve(
    spectral_path: &Path,
    truth_path: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<PathBuf> {
    let cube = CubeFile::read(spectral_path)?.to_spectral()?;
    let truth = truth_path.map(|p| CubeFile::read(p)?.to_hypercube()).transpose()?;
    ensure_dir(out)?;
    let report = retrieve(&cube, cfg, truth.as_ref())?;
    CubeFile::from_hypercube(&report.result.object_cube).write(&out.join(OBJECT_FILE))?;
    report.convergence.write(&out.join(CONVERGENCE_CSV))?;
    let mut names = vec![OBJECT_FILE.to_string(), CONVERGENCE_CSV.to_string()];
    if let Some(r) = &report.rrmse {
        r.write(&out.join(RRMSE_CSV))?;
        names.push(RRMSE_CSV.into());
    }
    let mut inputs = vec![spectral_path];
    inputs.extend(truth_path);
    let mut cfg = cfg.clone();
    cfg.io = IoPaths {
        input: Some(spectral_path.into()),
        truth: truth_path.map(Into::into),
    };
    write_manifest(out, "retrieve", &cfg, None, &inputs, &names)?;
    Ok(out.join(OBJECT_FILE))
}

/// Writes `<stem>_s<k>_<quantity>.pgm` with a `.json` normalization
/// sidecar and row / column cross-section CSVs for each slice.
pub fn run_render(cube_path: &Path, options: &RenderOptions, cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let file = CubeFile::read(cube_path)?;
    let reference = options
        .phase_reference
        .as_deref()
        .map(|p| CubeFile::read(p)?.to_hypercube())
        .transpose()?;
    let rendered = render(&file, options, &cfg.solver.dispersion, reference.as_ref())?;
    ensure_dir(out)?;
    let stem = cube_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cube".into());
    let quantity = serde_json::to_value(options.quantity)?
        .as_str()
        .unwrap_or("value")
        .to_string();
    let pitch = file.header().pixel_pitch_m;
    let mut names = Vec::new();
    for r in &rendered {
        let base = format!("{stem}_s{:03}_{quantity}", r.slice);
        pgm::write_pgm(&out.join(format!("{base}.pgm")), &r.image)?;
        let sidecar = serde_json::json!({
            "slice": r.slice,
            "wavelength_m": r.wavelength,
            "quantity": quantity,
            "min": r.normalization.min,
            "max": r.normalization.max,
            "constant": r.normalization.constant,
        });
        io::write_json(&out.join(format!("{base}.json")), &sidecar)?;
        names.extend([format!("{base}.pgm"), format!("{base}.json")]);

        let row = options.row.unwrap_or(r.values.nrows() / 2);
        row_section(&r.values, row, pitch)?.write(&out.join(format!("{base}_row{row}.csv")))?;
        names.push(format!("{base}_row{row}.csv"));
        if let Some(col) = options.col {
            col_section(&r.values, col, pitch)?.write(&out.join(format!("{base}_col{col}.csv")))?;
            names.push(format!("{base}_col{col}.csv"));
        }
    }
    let mut inputs = vec![cube_path];
    inputs.extend(options.phase_reference.as_deref());
    let mut cfg = cfg.clone();
    cfg.io = IoPaths {
        input: Some(cube_path.into()),
        truth: None,
    };
    write_manifest(out, "render", &cfg, Some(options), &inputs, &names)?;
    Ok(names.iter().map(|n| out.join(n)).collect())
}

pub fn run_evaluate(cube_path: &Path, truth_path: &Path, cfg: &PipelineConfig, out: &Path) -> Result<Table> {
    let cube = CubeFile::read(cube_path)?.to_hypercube()?;
    let truth = CubeFile::read(truth_path)?.to_hypercube()?;
    let table = evaluate(&cube, &truth)?;
    ensure_dir(out)?;
    table.write(&out.join(METRICS_CSV))?;
    let mut cfg = cfg.clone();
    cfg.io = IoPaths {
        input: Some(cube_path.into()),
        truth: Some(truth_path.into()),
    };
    write_manifest(
        out,
        "evaluate",
        &cfg,
        None,
        &[cube_path, truth_path],
        &[METRICS_CSV.into()],
    )?;
    Ok(table)
}
