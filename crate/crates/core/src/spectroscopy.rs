//! Delay-line Fourier spectroscopy: interferogram synthesis, observation
//! noise, spectral estimation and the PSNR bookkeeping that exposes the
//! multiplex (Fellgett) noise penalty.
//!
//! Wavelengths are restricted to the DFT bins of the delay scan,
//! `lambda_q = N dz / q`, so that every source line falls exactly on one
//! bin and estimation inverts synthesis without leakage. The delay grid
//! starts at `z = 0`.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cube::HyperCube;
use crate::error::{Error, Result};

/// Delay-line scan: `n_steps` mirror positions spaced by `delta_z` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayLineConfig {
    pub delta_z: f64,
    pub n_steps: usize,
}

impl DelayLineConfig {
    pub fn new(delta_z: f64, n_steps: usize) -> Result<Self> {
        let cfg = Self { delta_z, n_steps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_z.is_finite() && self.delta_z > 0.0) {
            return Err(Error::Config(format!("delay step must be > 0, got {}", self.delta_z)));
        }
        if self.n_steps < 2 {
            return Err(Error::Config(format!(
                "delay line needs >= 2 steps, got {}",
                self.n_steps
            )));
        }
        Ok(())
    }

    /// Total travel `Z = N dz`.
    pub fn total_travel(&self) -> f64 {
        self.n_steps as f64 * self.delta_z
    }

    /// Mirror shift of step `m`.
    pub fn z(&self, m: usize) -> f64 {
        m as f64 * self.delta_z
    }

    /// Whether `dz <= lambda_min / 2`.
    pub fn is_nyquist_admissible(&self, lambda_min: f64) -> bool {
        self.delta_z <= lambda_min / 2.0
    }

    /// Wavenumber resolution `1 / (2 Z)` in 1/m.
    pub fn wavenumber_resolution(&self) -> f64 {
        1.0 / (2.0 * self.total_travel())
    }

    /// Wavelength of DFT bin `q`.
    pub fn bin_wavelength(&self, q: usize) -> f64 {
        self.total_travel() / q as f64
    }

    /// The bin `q` with `N dz / q == wavelength` (1e-9 relative), if any.
    pub fn bin_of(&self, wavelength: f64) -> Option<usize> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return None;
        }
        let q = (self.total_travel() / wavelength).round();
        if q < 1.0 {
            return None;
        }
        let q = q as usize;
        let on_grid = (self.bin_wavelength(q) - wavelength).abs() <= 1e-9 * wavelength;
        on_grid.then_some(q)
    }
}

/// On-grid wavelengths in ascending order with their DFT bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    delay: DelayLineConfig,
    wavelengths: Vec<f64>,
    bins: Vec<usize>,
}

impl WavelengthGrid {
    /// Grid from explicit bins. Bins must be distinct, `>= 1` and `< N/2`.
    pub fn from_bins(delay: DelayLineConfig, mut bins: Vec<usize>) -> Result<Self> {
        delay.validate()?;
        bins.sort_unstable_by(|a, b| b.cmp(a));
        if bins.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("wavelength grid bins must be distinct"));
        }
        if let Some(&q) = bins.iter().find(|&&q| q == 0 || 2 * q >= delay.n_steps) {
            return Err(Error::invalid(format!(
                "bin {q} outside 1..{} (must stay below N/2)",
                delay.n_steps.div_ceil(2)
            )));
        }
        let wavelengths = bins.iter().map(|&q| delay.bin_wavelength(q)).collect();
        Ok(Self {
            delay,
            wavelengths,
            bins,
        })
    }

    /// Grid from wavelengths that must all be on the delay grid.
    pub fn from_wavelengths(delay: DelayLineConfig, wavelengths: &[f64]) -> Result<Self> {
        let bins = wavelengths
            .iter()
            .map(|&l| {
                delay.bin_of(l).ok_or_else(|| {
                    Error::invalid(format!(
                        "wavelength {:.6} nm is not on the delay grid (N dz / q)",
                        l * 1e9
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bins(delay, bins)
    }

    pub fn delay(&self) -> &DelayLineConfig {
        &self.delay
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    /// Keeps `count` wavelengths evenly spread over the grid, always
    /// including both ends.
    pub fn subsample(&self, count: usize) -> Result<Self> {
        let len = self.len();
        if count == 0 || count > len {
            return Err(Error::invalid(format!(
                "cannot select {count} wavelengths from a grid of {len}"
            )));
        }
        let picks: Vec<usize> = if count == 1 {
            vec![0]
        } else {
            (0..count)
                .map(|i| ((i * (len - 1)) as f64 / (count - 1) as f64).round() as usize)
                .collect()
        };
        Self::from_bins(self.delay, picks.into_iter().map(|i| self.bins[i]).collect())
    }

    /// Index of the grid wavelength closest to `wavelength`.
    pub fn nearest(&self, wavelength: f64) -> Option<usize> {
        self.wavelengths
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - wavelength).abs().total_cmp(&(b.1 - wavelength).abs()))
            .map(|(i, _)| i)
    }
}

/// All on-grid wavelengths `N dz / q` inside `[band_min, band_max]`.
pub fn wavelength_grid_for_band(delay: &DelayLineConfig, band_min: f64, band_max: f64) -> Result<WavelengthGrid> {
    delay.validate()?;
    if !(band_min > 0.0 && band_min < band_max && band_max.is_finite()) {
        return Err(Error::Config(format!(
            "band must satisfy 0 < min < max, got [{band_min}, {band_max}]"
        )));
    }
    if !delay.is_nyquist_admissible(band_min) {
        return Err(Error::Config(format!(
            "delay step {:.1} nm exceeds half the shortest wavelength ({:.1} nm / 2)",
            delay.delta_z * 1e9,
            band_min * 1e9
        )));
    }
    let travel = delay.total_travel();
    let q_min = (travel / band_max).ceil().max(1.0) as usize;
    let q_max = (travel / band_min).floor() as usize;
    let bins: Vec<usize> = (q_min.saturating_sub(1).max(1)..=q_max + 1)
        .filter(|&q| {
            let l = delay.bin_wavelength(q);
            l >= band_min && l <= band_max
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::Config(format!(
            "no on-grid wavelength in [{:.3}, {:.3}] nm",
            band_min * 1e9,
            band_max * 1e9
        )));
    }
    WavelengthGrid::from_bins(*delay, bins)
}

/// Relative spectral power of the source across a wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralProfile {
    #[default]
    Uniform,
    /// `floor + (1 - floor) exp(-((lambda - center) / width)^2 / 2)`.
    GaussianBump {
        center: f64,
        width: f64,
        floor: f64,
    },
    /// Unit weight inside `[plateau_min, plateau_max]`, Gaussian roll-off
    /// with standard deviation `rolloff` outside.
    FlatTop {
        plateau_min: f64,
        plateau_max: f64,
        rolloff: f64,
    },
    Explicit {
        weights: Vec<f64>,
    },
    /// Constant power per unit wavelength. Grid bins are uniform in
    /// wavenumber, so the per-bin weight is `(lambda / reference)^2`.
    FlatPerWavelength {
        reference: f64,
    },
}

impl SpectralProfile {
    pub fn weights(&self, grid: &WavelengthGrid) -> Result<Vec<f64>> {
        let w: Vec<f64> = match self {
            SpectralProfile::Uniform => vec![1.0; grid.len()],
            SpectralProfile::GaussianBump { center, width, floor } => {
                if !(*width > 0.0 && (0.0..=1.0).contains(floor)) {
                    return Err(Error::Config(
                        "gaussian profile needs width > 0 and floor in [0, 1]".into(),
                    ));
                }
                grid.wavelengths()
                    .iter()
                    .map(|l| floor + (1.0 - floor) * (-0.5 * ((l - center) / width).powi(2)).exp())
                    .collect()
            }
            SpectralProfile::FlatTop {
                plateau_min,
                plateau_max,
                rolloff,
            } => {
                if !(*rolloff > 0.0 && plateau_min <= plateau_max) {
                    return Err(Error::Config(
                        "flat-top profile needs rolloff > 0 and min <= max".into(),
                    ));
                }
                grid.wavelengths()
                    .iter()
                    .map(|&l| {
                        let dist = if l < *plateau_min {
                            plateau_min - l
                        } else if l > *plateau_max {
                            l - plateau_max
                        } else {
                            0.0
                        };
                        (-0.5 * (dist / rolloff).powi(2)).exp()
                    })
                    .collect()
            }
            SpectralProfile::FlatPerWavelength { reference } => {
                if !(reference.is_finite() && *reference > 0.0) {
                    return Err(Error::Config("flat-per-wavelength profile needs reference > 0".into()));
                }
                grid.wavelengths().iter().map(|l| (l / reference).powi(2)).collect()
            }
            SpectralProfile::Explicit { weights } => {
                if weights.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "{} explicit weights for {} wavelengths",
                        weights.len(),
                        grid.len()
                    )));
                }
                weights.clone()
            }
        };
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("spectral weights must be finite and >= 0".into()));
        }
        Ok(w)
    }
}

/// Sensor intensities `J(x, y, z_m)`, stored `rows x cols x N` so each
/// pixel's interferogram is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramStack {
    data: Array3<f64>,
    delay: DelayLineConfig,
}

impl InterferogramStack {
    pub fn new(data: Array3<f64>, delay: DelayLineConfig) -> Result<Self> {
        delay.validate()?;
        let (rows, cols, n) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("interferogram stack must have nonzero spatial size"));
        }
        if n != delay.n_steps {
            return Err(Error::invalid(format!(
                "stack has {n} delay samples but the delay line has {}",
                delay.n_steps
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("interferogram stack contains non-finite values"));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data, delay })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn delay(&self) -> &DelayLineConfig {
        &self.delay
    }

    pub fn dim(&self) -> (usize, usize) {
        let (r, c, _) = self.data.dim();
        (r, c)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Interferogram of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let n = self.delay.n_steps;
        let start = (row * self.data.dim().1 + col) * n;
        &self.data.as_slice().expect("standard layout")[start..start + n]
    }
}

/// Per-wavelength sensor amplitudes `|V(lambda_s)|`, stored `L x rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAmplitudeCube {
    amplitudes: Array3<f64>,
    grid: WavelengthGrid,
    spectral_weights: Vec<f64>,
    pixel_pitch: f64,
}

impl SpectralAmplitudeCube {
    pub fn new(
        amplitudes: Array3<f64>,
        grid: WavelengthGrid,
        spectral_weights: Vec<f64>,
        pixel_pitch: f64,
    ) -> Result<Self> {
        let (l, rows, cols) = amplitudes.dim();
        if l != grid.len() {
            return Err(Error::invalid(format!(
                "cube has {l} slices but the grid has {} wavelengths",
                grid.len()
            )));
        }
        if l == 0 || rows == 0 || cols == 0 {
            return Err(Error::invalid("spectral cube must be nonempty"));
        }
        if spectral_weights.len() != l {
            return Err(Error::invalid("one spectral weight per wavelength is required"));
        }
        if let Some(v) = amplitudes.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "spectral amplitudes must be finite and >= 0, found {v}"
            )));
        }
        if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
            return Err(Error::invalid("pixel pitch must be > 0"));
        }
        Ok(Self {
            amplitudes,
            grid,
            spectral_weights,
            pixel_pitch,
        })
    }

    /// Amplitudes of the sensor-plane fields of a complex cube. The cube
    /// wavelengths must be on the delay grid.
    pub fn from_fields(cube: &HyperCube, delay: DelayLineConfig, spectral_weights: Vec<f64>) -> Result<Self> {
        let grid = WavelengthGrid::from_wavelengths(delay, &cube.wavelengths())?;
        let (rows, cols) = cube.dim();
        let mut amplitudes = Array3::zeros((cube.len(), rows, cols));
        // the grid sorts by wavelength; place slices accordingly
        for (s, &l) in grid.wavelengths().iter().enumerate() {
            let idx = cube.position_of(l).expect("grid built from cube wavelengths");
            amplitudes
                .index_axis_mut(ndarray::Axis(0), s)
                .assign(&cube.slices()[idx].amplitude());
        }
        Self::new(amplitudes, grid, spectral_weights, cube.pixel_pitch())
    }

    pub fn amplitudes(&self) -> &Array3<f64> {
        &self.amplitudes
    }

    pub fn slice(&self, s: usize) -> ndarray::ArrayView2<'_, f64> {
        self.amplitudes.index_axis(ndarray::Axis(0), s)
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn spectral_weights(&self) -> &[f64] {
        &self.spectral_weights
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> (usize, usize) {
        let (_, r, c) = self.amplitudes.dim();
        (r, c)
    }

    /// Restricts the cube to the wavelengths of `grid` (all must be present).
    pub fn select(&self, grid: &WavelengthGrid) -> Result<Self> {
        let (rows, cols) = self.dim();
        let mut amplitudes = Array3::zeros((grid.len(), rows, cols));
        let mut weights = Vec::with_capacity(grid.len());
        for (s, q) in grid.bins().iter().enumerate() {
            let src = self
                .grid
                .bins()
                .iter()
                .position(|b| b == q)
                .ok_or_else(|| Error::invalid(format!("bin {q} is not part of this spectral cube")))?;
            amplitudes.index_axis_mut(ndarray::Axis(0), s).assign(&self.slice(src));
            weights.push(self.spectral_weights[src]);
        }
        Self::new(amplitudes, grid.clone(), weights, self.pixel_pitch)
    }
}

/// Evaluates `J(z_m) = sum_s |V_s|^2 (2 + 2 cos(2 pi z_m / lambda_s))` for
/// every pixel of a sensor-plane cube.
///
/// With on-grid wavelengths the cosine term is `cos(2 pi q_s m / N)`, so the
/// sum is evaluated as one length-N inverse DFT per pixel.
pub fn synthesize_interferograms(cube: &HyperCube, delay: &DelayLineConfig) -> Result<InterferogramStack> {
    delay.validate()?;
    let n = delay.n_steps;
    let bins = cube
        .slices()
        .iter()
        .map(|s| {
            let q = delay.bin_of(s.wavelength()).ok_or_else(|| {
                Error::invalid(format!(
                    "wavelength {:.6} nm is off the delay grid; off-grid sources leak across bins",
                    s.wavelength() * 1e9
                ))
            })?;
            if 2 * q >= n {
                return Err(Error::invalid(format!(
                    "wavelength {:.3} nm maps to bin {q} >= N/2 (aliased)",
                    s.wavelength() * 1e9
                )));
            }
            Ok(q)
        })
        .collect::<Result<Vec<_>>>()?;

    let (rows, cols) = cube.dim();
    let intensities: Vec<Array2<f64>> = cube.slices().iter().map(|s| s.intensity()).collect();

    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut data = Array3::zeros((rows, cols, n));
    for r in 0..rows {
        for c in 0..cols {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            let mut total = 0.0;
            for (intensity, &q) in intensities.iter().zip(&bins) {
                let i = intensity[[r, c]];
                buf[q].re += i;
                total += i;
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            for (m, out) in data.slice_mut(ndarray::s![r, c, ..]).iter_mut().enumerate() {
                *out = (2.0 * total + 2.0 * buf[m].re).max(0.0);
            }
        }
    }
    InterferogramStack::new(data, *delay)
}

/// SplitMix64 finalizer, used to derive independent per-row seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every sample. Row `r` draws from a
/// ChaCha8 stream seeded with `mix_seed(seed, r)`, so results do not depend
/// on evaluation order.
pub fn add_noise(stack: &InterferogramStack, sigma_noise: f64, rng_seed: u64) -> Result<InterferogramStack> {
    if !(sigma_noise.is_finite() && sigma_noise >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma_noise}")));
    }
    if sigma_noise == 0.0 {
        return Ok(stack.clone());
    }
    let normal = Normal::new(0.0, sigma_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = stack.data.clone();
    for (r, mut row) in data.outer_iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, r as u64));
        row.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    InterferogramStack::new(data, stack.delay)
}

/// Normalized DFT coefficients `DFT(J)[q_s] / N` of every pixel at every
/// grid bin, stored `L x rows x cols`.
pub fn spectral_coefficients(stack: &InterferogramStack, grid: &WavelengthGrid) -> Result<Array3<Complex64>> {
    let n = stack.delay.n_steps;
    if grid.delay().n_steps != n {
        return Err(Error::invalid(format!(
            "grid built for N = {} but stack has N = {n}",
            grid.delay().n_steps
        )));
    }
    if let Some(&q) = grid.bins().iter().find(|&&q| 2 * q >= n) {
        return Err(Error::invalid(format!("bin {q} >= N/2 cannot be estimated")));
    }
    let (rows, cols) = stack.dim();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = Array3::zeros((grid.len(), rows, cols));
    let norm = 1.0 / n as f64;
    for r in 0..rows {
        for c in 0..cols {
            for (b, &j) in buf.iter_mut().zip(stack.pixel(r, c)) {
                *b = Complex64::new(j, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (s, &q) in grid.bins().iter().enumerate() {
                out[[s, r, c]] = buf[q] * norm;
            }
        }
    }
    Ok(out)
}

/// Spectral amplitudes `|V(lambda_s)| = sqrt(|DFT(J)[q_s]| / N)`.
///
/// The attached spectral weights are the per-slice mean intensities
/// normalized to a maximum of 1.
pub fn estimate_spectra(
    stack: &InterferogramStack,
    grid: &WavelengthGrid,
    pixel_pitch: f64,
) -> Result<SpectralAmplitudeCube> {
    let coeffs = spectral_coefficients(stack, grid)?;
    let amplitudes = coeffs.mapv(|v| v.norm().sqrt());
    let means: Vec<f64> = coeffs
        .outer_iter()
        .map(|slice| slice.iter().map(|v| v.norm()).sum::<f64>() / slice.len() as f64)
        .collect();
    let peak = means.iter().copied().fold(0.0, f64::max);
    let weights = if peak > 0.0 {
        means.iter().map(|m| m / peak).collect()
    } else {
        vec![0.0; means.len()]
    };
    SpectralAmplitudeCube::new(amplitudes, grid.clone(), weights, pixel_pitch)
}

fn check_sigma(sigma_noise: f64) -> Result<()> {
    if sigma_noise.is_finite() && sigma_noise > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "PSNR is undefined for noise sigma {sigma_noise} (must be > 0)"
        )))
    }
}

/// Observation PSNR: `10 log10(max_{x,y,z} J / sigma)`. This is a ratio of
/// peak intensity to noise standard deviation, not the squared form.
pub fn psnr_observations(stack: &InterferogramStack, sigma_noise: f64) -> Result<f64> {
    check_sigma(sigma_noise)?;
    Ok(10.0 * (stack.max() / sigma_noise).log10())
}

/// Spectral-domain approximation `10 log10(max J / (sigma sqrt(N)))`,
/// i.e. the observation PSNR minus `5 log10 N`.
pub fn psnr_spectral_approx(stack: &InterferogramStack, sigma_noise: f64) -> Result<f64> {
    check_sigma(sigma_noise)?;
    let n = stack.delay.n_steps as f64;
    Ok(10.0 * (stack.max() / (sigma_noise * n.sqrt())).log10())
}

/// Per-wavelength PSNR `10 log10(max_{x,y} |V_s|^2 / (sigma / sqrt(N)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPsnr {
    pub wavelengths: Vec<f64>,
    pub psnr_db: Vec<f64>,
}

impl SpectralPsnr {
    pub fn mean(&self) -> f64 {
        self.psnr_db.iter().sum::<f64>() / self.psnr_db.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.psnr_db.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.psnr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn psnr_spectral(cube: &SpectralAmplitudeCube, sigma_noise: f64, delay: &DelayLineConfig) -> Result<SpectralPsnr> {
    check_sigma(sigma_noise)?;
    let noise = sigma_noise / (delay.n_steps as f64).sqrt();
    let psnr_db = cube
        .amplitudes()
        .outer_iter()
        .map(|slice| {
            let peak = slice.iter().map(|a| a * a).fold(0.0, f64::max);
            10.0 * (peak / noise).log10()
        })
        .collect();
    Ok(SpectralPsnr {
        wavelengths: cube.grid().wavelengths().to_vec(),
        psnr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::ComplexField;
    use std::f64::consts::PI;

    fn default_delay() -> DelayLineConfig {
        DelayLineConfig::new(100e-9, 2000).unwrap()
    }

    fn uniform_cube(delay: &DelayLineConfig, bins: &[usize], intensities: &[f64], n: usize) -> HyperCube {
        let slices = bins
            .iter()
            .zip(intensities)
            .map(|(&q, &i)| {
                ComplexField::new(
                    Array2::from_elem((n, n), Complex64::new(i.sqrt(), 0.0)),
                    delay.bin_wavelength(q),
                    3.45e-6,
                )
                .unwrap()
            })
            .collect();
        HyperCube::new(slices).unwrap()
    }

    #[test]
    fn band_grid_matches_direct_enumeration() {
        let grid = wavelength_grid_for_band(&default_delay(), 680e-9, 820e-9).unwrap();
        // oracle: q with 680 nm <= 200 um / q <= 820 nm
        let expected: Vec<usize> = (1..1000)
            .filter(|&q| {
                let l = 200e-6 / q as f64;
                (680e-9..=820e-9).contains(&l)
            })
            .rev()
            .collect();
        assert_eq!(grid.bins(), expected.as_slice());
        assert_eq!(grid.len(), 51);
        assert_eq!(*grid.bins().first().unwrap(), 294);
        assert_eq!(*grid.bins().last().unwrap(), 244);
        assert!((grid.wavelengths()[50] * 1e9 - 819.672).abs() < 1e-3);
        assert!((grid.wavelengths()[0] * 1e9 - 680.272).abs() < 1e-3);
        assert!(grid.wavelengths().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_bin_band() {
        let d = default_delay();
        let l = d.bin_wavelength(250);
        let grid = wavelength_grid_for_band(&d, l - 1e-12, l + 1e-12).unwrap();
        assert_eq!(grid.bins(), &[250]);
    }

    #[test]
    fn nyquist_violation_is_config_error() {
        let d = DelayLineConfig::new(500e-9, 2000).unwrap();
        let err = wavelength_grid_for_band(&d, 680e-9, 820e-9).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("500.0")));
    }

    #[test]
    fn subsample_keeps_ends() {
        let grid = wavelength_grid_for_band(&default_delay(), 680e-9, 820e-9).unwrap();
        let sub = grid.subsample(16).unwrap();
        assert_eq!(sub.len(), 16);
        assert_eq!(sub.bins()[0], 294);
        assert_eq!(sub.bins()[15], 244);
        assert!(grid.subsample(52).is_err());
    }

    #[test]
    fn single_wavelength_interferogram_values() {
        let d = default_delay();
        // q = 250 -> lambda = 800 nm = 8 dz, so z = lambda / 2 is m = 4
        let cube = uniform_cube(&d, &[250], &[1.0], 2);
        let stack = synthesize_interferograms(&cube, &d).unwrap();
        let px = stack.pixel(0, 0);
        assert!((px[0] - 4.0).abs() < 1e-12);
        assert!(px[4].abs() < 1e-12);
    }

    #[test]
    fn two_wavelengths_match_direct_sum() {
        let d = default_delay();
        let cube = uniform_cube(&d, &[250, 270], &[1.0, 3.0], 2);
        let stack = synthesize_interferograms(&cube, &d).unwrap();
        let (l1, l2) = (d.bin_wavelength(250), d.bin_wavelength(270));
        for m in [0, 1, 7, 333, 1999] {
            let z = d.z(m);
            let oracle = 8.0 + 2.0 * (2.0 * PI * z / l1).cos() + 6.0 * (2.0 * PI * z / l2).cos();
            assert!((stack.pixel(1, 0)[m] - oracle).abs() < 1e-11, "m={m}");
        }
    }

    #[test]
    fn off_grid_wavelength_rejected() {
        let d = default_delay();
        let f = ComplexField::new(Array2::from_elem((2, 2), Complex64::new(1.0, 0.0)), 700e-9, 3.45e-6).unwrap();
        let cube = HyperCube::new(vec![f]).unwrap();
        assert!(matches!(
            synthesize_interferograms(&cube, &d),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn noise_zero_sigma_is_identity_and_seed_deterministic() {
        let d = DelayLineConfig::new(100e-9, 64).unwrap();
        let stack = InterferogramStack::new(Array3::from_elem((3, 4, 64), 2.0), d).unwrap();
        assert_eq!(add_noise(&stack, 0.0, 9).unwrap(), stack);
        let a = add_noise(&stack, 0.3, 42).unwrap();
        let b = add_noise(&stack, 0.3, 42).unwrap();
        let c = add_noise(&stack, 0.3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(add_noise(&stack, -1.0, 0).is_err());
    }

    #[test]
    fn noise_moments_at_one_million_samples() {
        let d = DelayLineConfig::new(100e-9, 1000).unwrap();
        let clean = InterferogramStack::new(Array3::zeros((25, 40, 1000)), d).unwrap();
        let noisy = add_noise(&clean, 0.5, 7).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.data().sum() / n;
        let var = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((var.sqrt() / 0.5 - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn estimate_inverts_synthesis() {
        let d = default_delay();
        let grid = wavelength_grid_for_band(&d, 680e-9, 820e-9).unwrap();
        let ints: Vec<f64> = (0..grid.len()).map(|i| 0.5 + (i as f64 * 0.37).sin().abs()).collect();
        let cube = uniform_cube(&d, grid.bins(), &ints, 2);
        let stack = synthesize_interferograms(&cube, &d).unwrap();
        let est = estimate_spectra(&stack, &grid, 3.45e-6).unwrap();
        for (s, &q) in grid.bins().iter().enumerate() {
            let truth = ints[s];
            let got = est.slice(s)[[0, 1]].powi(2);
            assert!((got - truth).abs() / truth < 1e-10, "bin {q}: {got} vs {truth}");
        }
    }

    #[test]
    fn zero_stack_gives_zero_cube() {
        let d = default_delay();
        let grid = wavelength_grid_for_band(&d, 680e-9, 820e-9).unwrap();
        let stack = InterferogramStack::new(Array3::zeros((2, 3, 2000)), d).unwrap();
        let est = estimate_spectra(&stack, &grid, 3.45e-6).unwrap();
        assert!(est.amplitudes().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn grid_mismatch_and_high_bins_rejected() {
        let d = default_delay();
        assert!(WavelengthGrid::from_bins(d, vec![1000]).is_err());
        let grid = WavelengthGrid::from_bins(d, vec![10]).unwrap();
        let other = DelayLineConfig::new(100e-9, 64).unwrap();
        let stack = InterferogramStack::new(Array3::zeros((1, 1, 64)), other).unwrap();
        assert!(estimate_spectra(&stack, &grid, 1e-6).is_err());
    }

    #[test]
    fn psnr_formulas() {
        let d = DelayLineConfig::new(100e-9, 16).unwrap();
        let mut data = Array3::zeros((2, 2, 16));
        data[[1, 1, 3]] = 10.0;
        let stack = InterferogramStack::new(data, d).unwrap();
        assert!((psnr_observations(&stack, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(psnr_observations(&stack, 10.0).unwrap().abs() < 1e-12);
        assert!(psnr_observations(&stack, 0.0).is_err());
        let gap = psnr_observations(&stack, 0.5).unwrap() - psnr_spectral_approx(&stack, 0.5).unwrap();
        assert!((gap - 5.0 * 16f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn eq9_gap_for_two_thousand_steps() {
        let d = default_delay();
        let stack = InterferogramStack::new(Array3::from_elem((1, 1, 2000), 3.0), d).unwrap();
        let gap = psnr_observations(&stack, 0.7).unwrap() - psnr_spectral_approx(&stack, 0.7).unwrap();
        assert!((gap - 16.505).abs() < 5e-4, "{gap}");
    }

    #[test]
    fn spectral_psnr_of_uniform_cube() {
        let d = default_delay();
        let grid = wavelength_grid_for_band(&d, 700e-9, 720e-9).unwrap();
        let c: f64 = 2.5;
        let amps = Array3::from_elem((grid.len(), 4, 4), c.sqrt());
        let cube = SpectralAmplitudeCube::new(amps, grid.clone(), vec![1.0; grid.len()], 1e-6).unwrap();
        let p = psnr_spectral(&cube, 0.3, &d).unwrap();
        let expected = 10.0 * (c * 2000f64.sqrt() / 0.3).log10();
        assert!(p.psnr_db.iter().all(|v| (v - expected).abs() < 1e-10));
        assert!(psnr_spectral(&cube, 0.0, &d).is_err());
    }

    #[test]
    fn profiles() {
        let grid = wavelength_grid_for_band(&default_delay(), 600e-9, 900e-9).unwrap();
        let w = SpectralProfile::FlatTop {
            plateau_min: 680e-9,
            plateau_max: 820e-9,
            rolloff: 50e-9,
        }
        .weights(&grid)
        .unwrap();
        for (l, wi) in grid.wavelengths().iter().zip(&w) {
            if (680e-9..=820e-9).contains(l) {
                assert_eq!(*wi, 1.0);
            } else {
                assert!(*wi < 1.0 && *wi > 0.0);
            }
        }
        let g = SpectralProfile::GaussianBump {
            center: 750e-9,
            width: 40e-9,
            floor: 0.1,
        }
        .weights(&grid)
        .unwrap();
        assert!(g.iter().all(|&v| (0.1..=1.0).contains(&v)));
        assert!(SpectralProfile::Explicit { weights: vec![1.0] }.weights(&grid).is_err());
    }
}
