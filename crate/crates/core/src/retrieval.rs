//! Hyperspectral phase retrieval: the dual wavelength sweep.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cube::HyperCube;
use crate::denoise::{self, DenoiserSpec, SnsSpec};
use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::metrics::wrap_phase;
use crate::optics::{ComplexField, PropagationGeometry, Propagator};
use crate::spectroscopy::SpectralAmplitudeCube;

pub const DEFAULT_MAX_ITERATIONS: usize = 30;

/// How object phases are taken before the step-3 scaling `mu * phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseBranch {
    /// Principal value in `(-pi, pi]`.
    Wrapped,
    /// The `2 pi` cut is moved into the widest empty interval of the
    /// phase histogram, so a phase map that is contiguous modulo `2 pi`
    /// stays contiguous whatever its global offset.
    #[default]
    LargestGap,
}

/// Per-pixel phases with the branch cut chosen by `branch`.
pub fn branch_phases(data: &Array2<Complex64>, branch: PhaseBranch) -> Array2<f64> {
    let phase = data.mapv(|v| v.arg());
    if branch == PhaseBranch::Wrapped || phase.len() < 2 {
        return phase;
    }
    let mut sorted: Vec<f64> = phase.iter().copied().collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    // the wrap-around interval is the default cut
    let (mut best, mut cut_after) = (sorted[0] + 2.0 * std::f64::consts::PI - sorted[n - 1], None);
    for (i, w) in sorted.windows(2).enumerate() {
        if w[1] - w[0] > best {
            best = w[1] - w[0];
            cut_after = Some(i);
        }
    }
    match cut_after {
        None => phase,
        Some(i) => {
            let below = sorted[i];
            phase.mapv(|p| if p <= below { p + 2.0 * std::f64::consts::PI } else { p })
        }
    }
}

/// Phase scaling `phi_next = mu * phi_prev` for a thin transparent object.
pub fn phase_scale_mu(lambda_prev: f64, lambda_next: f64, dispersion: &DispersionModel) -> Result<f64> {
    for l in [lambda_prev, lambda_next] {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::invalid(format!("wavelength must be > 0, got {l}")));
        }
    }
    let n_prev = dispersion.index(lambda_prev)?;
    let n_next = dispersion.index(lambda_next)?;
    Ok(lambda_prev * (n_next - 1.0) / (lambda_next * (n_prev - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_iterations")]
    pub max_cube_iterations: usize,
    /// Phase-change stopping threshold in radians; `None` means
    /// `1e-3 * sqrt(pixel count)`.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub denoiser: DenoiserSpec,
    #[serde(default)]
    pub sns: SnsSpec,
    #[serde(default)]
    pub dispersion: DispersionModel,
    #[serde(default)]
    pub phase_branch: PhaseBranch,
    pub geometry: PropagationGeometry,
}

fn default_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

impl SolverConfig {
    pub fn new(geometry: PropagationGeometry) -> Self {
        Self {
            max_cube_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: None,
            denoiser: DenoiserSpec::default(),
            sns: SnsSpec::default(),
            dispersion: DispersionModel::default(),
            phase_branch: PhaseBranch::default(),
            geometry,
        }
    }

    /// Plain projections: no filtering, measured amplitude imposed as is.
    pub fn unregularized(geometry: PropagationGeometry) -> Self {
        Self {
            denoiser: DenoiserSpec::none(),
            sns: SnsSpec { gamma: 0.0 },
            ..Self::new(geometry)
        }
    }

    pub fn effective_tolerance(&self) -> f64 {
        self.tolerance
            .unwrap_or_else(|| 1e-3 * ((self.geometry.rows * self.geometry.cols) as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_cube_iterations == 0 {
            return Err(Error::Config("max_cube_iterations must be >= 1".into()));
        }
        if let Some(xi) = self.tolerance {
            // +inf is a legitimate "stop after one sweep"
            if xi.is_nan() || xi <= 0.0 {
                return Err(Error::Config(format!("tolerance must be > 0, got {xi}")));
            }
        }
        self.denoiser.validate()?;
        self.sns.validate()?;
        self.geometry.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub object_cube: HyperCube,
    pub iterations_run: usize,
    pub phase_change_history: Vec<f64>,
    pub converged: bool,
}

/// Output of one cube iteration.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub object_cube: HyperCube,
    /// Sensor-plane field at the first wavelength, input to the next sweep.
    pub state: ComplexField,
    pub phase_change: f64,
}

/// `V^1(lambda_1) = |V~(lambda_1)| exp(j 0)`.
pub fn hspr_init(cube: &SpectralAmplitudeCube) -> Result<ComplexField> {
    if cube.is_empty() {
        return Err(Error::invalid("spectral cube is empty"));
    }
    let amp = cube.slice(0).mapv(|a| Complex64::new(a, 0.0));
    ComplexField::new(amp, cube.grid().wavelengths()[0], cube.pixel_pitch())
}

/// Sweep state that carries the propagator cache between iterations.
pub struct Solver<'a> {
    cube: &'a SpectralAmplitudeCube,
    config: &'a SolverConfig,
    propagator: Propagator,
    mu_up: Vec<f64>,
    previous_phase: Option<Array2<f64>>,
}

impl<'a> Solver<'a> {
    pub fn new(cube: &'a SpectralAmplitudeCube, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        if cube.is_empty() {
            return Err(Error::invalid("spectral cube is empty"));
        }
        let geom = &config.geometry;
        if cube.dim() != (geom.rows, geom.cols) {
            return Err(Error::invalid(format!(
                "cube is {:?} but geometry is {}x{}",
                cube.dim(),
                geom.rows,
                geom.cols
            )));
        }
        if cube.pixel_pitch() != geom.pixel_pitch {
            return Err(Error::invalid(format!(
                "cube pixel pitch {} differs from geometry pitch {}",
                cube.pixel_pitch(),
                geom.pixel_pitch
            )));
        }
        let wl = cube.grid().wavelengths();
        let mu_up = wl
            .windows(2)
            .map(|w| phase_scale_mu(w[0], w[1], &config.dispersion))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cube,
            config,
            propagator: Propagator::new(*geom)?,
            mu_up,
            previous_phase: None,
        })
    }

    fn wavelength(&self, s: usize) -> f64 {
        self.cube.grid().wavelengths()[s]
    }

    /// Steps 1-2: back-propagate and filter.
    fn object_estimate(&mut self, sensor: &ComplexField, s: usize) -> Result<ComplexField> {
        let back = self.propagator.backward(sensor).map_err(|e| sweep_error(s, e))?;
        denoise::denoise_complex(&back, &self.config.denoiser).map_err(|e| sweep_error(s, e))
    }

    /// Steps 3-5: move the object estimate from `s` to `next` and return the
    /// amplitude-corrected sensor field there.
    fn transfer(&mut self, object: &ComplexField, s: usize, next: usize) -> Result<ComplexField> {
        let mu = match next.cmp(&s) {
            std::cmp::Ordering::Greater => self.mu_up[s],
            std::cmp::Ordering::Less => 1.0 / self.mu_up[next],
            std::cmp::Ordering::Equal => 1.0,
        };
        let lambda_next = self.wavelength(next);
        let scaled = if mu == 1.0 {
            object.data().clone()
        } else {
            let phase = branch_phases(object.data(), self.config.phase_branch);
            let mut scaled = object.data().clone();
            ndarray::Zip::from(&mut scaled)
                .and(&phase)
                .for_each(|a, &p| *a = Complex64::from_polar(a.norm(), mu * p));
            scaled
        };
        let moved = ComplexField::from_parts_unchecked(scaled, lambda_next, object.pixel_pitch());
        let sensor = self.propagator.forward(&moved).map_err(|e| sweep_error(next, e))?;

        let gamma = self.config.sns.gamma;
        let observed = self.cube.slice(next);
        let mut data = sensor.into_data();
        ndarray::Zip::from(&mut data).and(&observed).for_each(|v, &obs| {
            *v = Complex64::from_polar(denoise::fuse(obs, v.norm(), gamma), v.arg());
        });
        Ok(ComplexField::from_parts_unchecked(
            data,
            lambda_next,
            object.pixel_pitch(),
        ))
    }

    /// One cube iteration starting from the sensor field at the first
    /// wavelength.
    pub fn sweep(&mut self, state: &ComplexField, t: usize) -> Result<SweepOutcome> {
        let l = self.cube.len();
        if state.dim() != self.cube.dim() {
            return Err(Error::invalid(format!(
                "state is {:?} but cube is {:?}",
                state.dim(),
                self.cube.dim()
            )));
        }
        log::trace!("cube iteration {t} over {l} wavelengths");
        let mut order: Vec<usize> = (0..l).collect();
        order.extend((0..l.saturating_sub(1)).rev());
        if l == 1 {
            order.push(0);
        }

        let mut recorded: Vec<Option<ComplexField>> = vec![None; l];
        let mut sensor =
            ComplexField::from_parts_unchecked(state.data().clone(), self.wavelength(0), state.pixel_pitch());
        for (k, pair) in order.windows(2).enumerate() {
            let (s, next) = (pair[0], pair[1]);
            let object = self.object_estimate(&sensor, s)?;
            if k == 0 && self.previous_phase.is_none() {
                self.previous_phase = Some(object.phase());
            }
            sensor = self.transfer(&object, s, next)?;
            if k + 1 >= l {
                // return half of the sweep
                recorded[s] = Some(object);
            }
        }
        let first = self.object_estimate(&sensor, 0)?;
        let phase = first.phase();
        let phase_change = match &self.previous_phase {
            Some(prev) => phase
                .iter()
                .zip(prev)
                .map(|(a, b)| wrap_phase(a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
            None => f64::INFINITY,
        };
        self.previous_phase = Some(phase);
        recorded[0] = Some(first);

        let slices = recorded
            .into_iter()
            .map(|s| s.expect("every wavelength is visited on the return pass"))
            .collect();
        Ok(SweepOutcome {
            object_cube: HyperCube::new(slices)?,
            state: sensor,
            phase_change,
        })
    }
}

fn sweep_error(index: usize, source: Error) -> Error {
    Error::Sweep {
        index,
        source: Box::new(source),
    }
}

/// Single cube iteration with a fresh solver. The reference phase for
/// `phase_change` is the first object estimate at the first wavelength
/// inside this sweep.
pub fn hspr_sweep(
    state: &ComplexField,
    cube: &SpectralAmplitudeCube,
    config: &SolverConfig,
    t: usize,
) -> Result<SweepOutcome> {
    Solver::new(cube, config)?.sweep(state, t)
}

pub fn hspr_run(cube: &SpectralAmplitudeCube, config: &SolverConfig) -> Result<RetrievalResult> {
    hspr_run_with_monitor(cube, config, |_, _| {})
}

/// `hspr_run` calling `monitor(t, outcome)` after every cube iteration.
pub fn hspr_run_with_monitor(
    cube: &SpectralAmplitudeCube,
    config: &SolverConfig,
    mut monitor: impl FnMut(usize, &SweepOutcome),
) -> Result<RetrievalResult> {
    let mut solver = Solver::new(cube, config)?;
    let xi = config.effective_tolerance();
    let mut state = hspr_init(cube)?;
    let mut history = Vec::with_capacity(config.max_cube_iterations);
    let mut last = None;
    let mut converged = false;
    for t in 1..=config.max_cube_iterations {
        let outcome = solver.sweep(&state, t)?;
        log::debug!("cube iteration {t}: phase change {:.3e}", outcome.phase_change);
        history.push(outcome.phase_change);
        monitor(t, &outcome);
        state = outcome.state.clone();
        converged = outcome.phase_change < xi;
        last = Some(outcome);
        if converged {
            break;
        }
    }
    let last = last.expect("at least one iteration runs");
    Ok(RetrievalResult {
        object_cube: last.object_cube,
        iterations_run: history.len(),
        phase_change_history: history,
        converged,
    })
}

/// Single back-propagation of the measured amplitudes with zero phase.
pub fn backpropagation_baseline(cube: &SpectralAmplitudeCube, geometry: &PropagationGeometry) -> Result<HyperCube> {
    let mut propagator = Propagator::new(*geometry)?;
    let slices = (0..cube.len())
        .map(|s| {
            let field = ComplexField::new(
                cube.slice(s).mapv(|a| Complex64::new(a, 0.0)),
                cube.grid().wavelengths()[s],
                cube.pixel_pitch(),
            )?;
            propagator.backward(&field).map_err(|e| sweep_error(s, e))
        })
        .collect::<Result<Vec<_>>>()?;
    HyperCube::new(slices)
}
