//! Complex-domain wavefront filtering and sensor-plane amplitude fusion.
//!
//! The object-plane filter is a pluggable stand-in for a collaborative
//! complex-domain filter: half-overlapping blocks, an orthonormal 2D DCT
//! applied to the complex block (real and imaginary parts transform
//! independently), hard thresholding on the magnitude of each complex
//! coefficient with the DC term kept, and uniform-weight aggregation.

use std::str::FromStr;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::ComplexField;

/// Gaussian consistency constant for the median absolute deviation.
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    None,
    #[default]
    BlockTransformThreshold,
}

impl FromStr for DenoiserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DenoiserKind::None),
            "block_transform_threshold" => Ok(DenoiserKind::BlockTransformThreshold),
            other => Err(Error::Config(format!("unknown denoiser kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    #[default]
    AutoMad,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserSpec {
    pub kind: DenoiserKind,
    pub block_size: usize,
    pub threshold_multiplier: f64,
    pub sigma_mode: SigmaMode,
    pub fixed_sigma: Option<f64>,
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::BlockTransformThreshold,
            block_size: 8,
            threshold_multiplier: 2.7,
            sigma_mode: SigmaMode::AutoMad,
            fixed_sigma: None,
        }
    }
}

impl DenoiserSpec {
    pub fn none() -> Self {
        Self {
            kind: DenoiserKind::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.block_size, 4 | 8 | 16) {
            return Err(Error::Config(format!(
                "denoiser block size must be 4, 8 or 16, got {}",
                self.block_size
            )));
        }
        if !(self.threshold_multiplier.is_finite() && self.threshold_multiplier > 0.0) {
            return Err(Error::Config(format!(
                "threshold multiplier must be > 0, got {}",
                self.threshold_multiplier
            )));
        }
        if self.sigma_mode == SigmaMode::Fixed {
            match self.fixed_sigma {
                Some(s) if s.is_finite() && s >= 0.0 => {}
                other => {
                    return Err(Error::Config(format!(
                        "fixed sigma mode needs fixed_sigma >= 0, got {other:?}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Robust noise level of the real part: `median(|HH|) / 0.6745` over the
/// diagonal detail band of a one-level orthonormal Haar transform.
pub fn estimate_noise_sigma(field: &ComplexField) -> Result<f64> {
    let (rows, cols) = field.dim();
    if rows < 2 || cols < 2 {
        return Err(Error::invalid(format!(
            "noise estimation needs at least 2x2 pixels, got {rows}x{cols}"
        )));
    }
    let d = field.data();
    let mut details: Vec<f64> = Vec::with_capacity((rows / 2) * (cols / 2));
    for r in (0..rows - 1).step_by(2) {
        for c in (0..cols - 1).step_by(2) {
            let hh = (d[[r, c]].re - d[[r, c + 1]].re - d[[r + 1, c]].re + d[[r + 1, c + 1]].re) / 2.0;
            details.push(hh.abs());
        }
    }
    Ok(median(&mut details) / MAD_SCALE)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Orthonormal DCT-II basis for square blocks.
#[derive(Debug, Clone)]
pub struct BlockDct {
    size: usize,
    basis: Array2<f64>,
}

impl BlockDct {
    pub fn new(size: usize) -> Self {
        let n = size as f64;
        let basis = Array2::from_shape_fn((size, size), |(k, i)| {
            let alpha = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos()
        });
        Self { size, basis }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `C X C^T`
    pub fn forward(&self, block: &Array2<Complex64>) -> Array2<Complex64> {
        let c = self.basis.mapv(|v| Complex64::new(v, 0.0));
        c.dot(block).dot(&c.t())
    }

    /// `C^T X C`
    pub fn inverse(&self, coeffs: &Array2<Complex64>) -> Array2<Complex64> {
        let c = self.basis.mapv(|v| Complex64::new(v, 0.0));
        c.t().dot(coeffs).dot(&c)
    }

    /// Transform, zero every non-DC coefficient with `|c| < threshold`,
    /// and transform back.
    pub fn hard_threshold(&self, block: &Array2<Complex64>, threshold: f64) -> Array2<Complex64> {
        let mut coeffs = self.forward(block);
        for ((k, l), v) in coeffs.indexed_iter_mut() {
            if (k, l) != (0, 0) && v.norm() < threshold {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse(&coeffs)
    }
}

pub fn denoise_complex(field: &ComplexField, spec: &DenoiserSpec) -> Result<ComplexField> {
    spec.validate()?;
    match spec.kind {
        DenoiserKind::None => Ok(field.clone()),
        DenoiserKind::BlockTransformThreshold => {
            let sigma = match spec.sigma_mode {
                SigmaMode::AutoMad => estimate_noise_sigma(field)?,
                SigmaMode::Fixed => spec.fixed_sigma.unwrap_or(0.0),
            };
            let data = block_threshold(field.data(), spec.block_size, spec.threshold_multiplier * sigma);
            Ok(ComplexField::from_parts_unchecked(
                data,
                field.wavelength(),
                field.pixel_pitch(),
            ))
        }
    }
}

fn block_threshold(data: &Array2<Complex64>, block: usize, threshold: f64) -> Array2<Complex64> {
    let (rows, cols) = data.dim();
    let stride = block / 2;
    let padded_len = |n: usize| block + stride * n.saturating_sub(block).div_ceil(stride);
    let (pr, pc) = (padded_len(rows), padded_len(cols));
    let padded = Array2::from_shape_fn((pr, pc), |(r, c)| data[[r.min(rows - 1), c.min(cols - 1)]]);

    let dct = BlockDct::new(block);
    let mut acc = Array2::<Complex64>::zeros((pr, pc));
    let mut weight = Array2::<f64>::zeros((pr, pc));
    for r0 in (0..=pr - block).step_by(stride) {
        for c0 in (0..=pc - block).step_by(stride) {
            let window = s![r0..r0 + block, c0..c0 + block];
            let filtered = dct.hard_threshold(&padded.slice(window).to_owned(), threshold);
            acc.slice_mut(window).zip_mut_with(&filtered, |a, f| *a += f);
            weight.slice_mut(window).mapv_inplace(|w| w + 1.0);
        }
    }
    Array2::from_shape_fn((rows, cols), |(r, c)| acc[[r, c]] / weight[[r, c]])
}

/// Blend regularizer for the sensor-plane amplitude update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnsSpec {
    pub gamma: f64,
}

impl Default for SnsSpec {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

impl SnsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_finite() && self.gamma >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "SNS gamma must be finite and >= 0, got {}",
                self.gamma
            )))
        }
    }
}

/// Gaussian-likelihood amplitude fusion `(|V~| + gamma |V|) / (1 + gamma)`.
///
/// `gamma = 0` returns the observed amplitude (Gerchberg-Saxton
/// replacement); large `gamma` trusts the propagated model. The result is
/// clamped to lie between the two inputs pixelwise.
pub fn sns_amplitude_update(
    observed_amp: &Array2<f64>,
    model_amp: &Array2<f64>,
    spec: &SnsSpec,
) -> Result<Array2<f64>> {
    spec.validate()?;
    if observed_amp.dim() != model_amp.dim() {
        return Err(Error::invalid(format!(
            "observed {:?} and model {:?} amplitudes differ in shape",
            observed_amp.dim(),
            model_amp.dim()
        )));
    }
    if observed_amp
        .iter()
        .chain(model_amp.iter())
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::invalid("amplitudes must be finite and >= 0"));
    }
    let gamma = spec.gamma;
    let mut out = Array2::zeros(observed_amp.dim());
    ndarray::Zip::from(&mut out)
        .and(observed_amp)
        .and(model_amp)
        .for_each(|o, &obs, &model| *o = fuse(obs, model, gamma));
    Ok(out)
}

#[inline]
pub(crate) fn fuse(observed: f64, model: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return observed;
    }
    let v = (observed + gamma * model) / (1.0 + gamma);
    v.clamp(observed.min(model), observed.max(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn field(data: Array2<Complex64>) -> ComplexField {
        ComplexField::new(data, 700e-9, 3.45e-6).unwrap()
    }

    fn noise(rows: usize, cols: usize, sigma: f64, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        Array2::from_shape_fn((rows, cols), |_| Complex64::new(n.sample(&mut rng), n.sample(&mut rng)))
    }

    fn rmse(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64).sqrt()
    }

    fn piecewise_phantom(n: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((n, n), |(r, c)| {
            let phase = if (16..48).contains(&r) && (8..24).contains(&c) {
                1.2
            } else if (40..56).contains(&r) && (30..60).contains(&c) {
                0.6
            } else {
                0.0
            };
            Complex64::cis(phase)
        })
    }

    #[test]
    fn sigma_of_constant_field_is_zero() {
        let f = field(Array2::from_elem((16, 16), Complex64::new(0.7, -0.2)));
        assert_eq!(estimate_noise_sigma(&f).unwrap(), 0.0);
    }

    #[test]
    fn sigma_needs_two_by_two() {
        let f = field(Array2::from_elem((1, 16), Complex64::new(1.0, 0.0)));
        assert!(estimate_noise_sigma(&f).is_err());
    }

    #[test]
    fn sigma_of_gaussian_noise_within_five_percent() {
        let f = field(noise(256, 256, 0.1, 11));
        let est = estimate_noise_sigma(&f).unwrap();
        assert!((est / 0.1 - 1.0).abs() < 0.05, "{est}");
    }

    #[test]
    fn sigma_of_clean_phantom_is_small() {
        let clean = piecewise_phantom(64);
        let f = field(clean.clone());
        let re: Vec<f64> = clean.iter().map(|v| v.re).collect();
        let range = re.iter().copied().fold(f64::MIN, f64::max) - re.iter().copied().fold(f64::MAX, f64::min);
        assert!(estimate_noise_sigma(&f).unwrap() < 0.01 * range);
    }

    #[test]
    fn none_is_bit_exact_identity() {
        let f = field(noise(13, 9, 0.3, 1));
        assert_eq!(denoise_complex(&f, &DenoiserSpec::none()).unwrap(), f);
    }

    #[test]
    fn constant_field_is_preserved() {
        let f = field(Array2::from_elem((20, 12), Complex64::new(0.3, 0.9)));
        let spec = DenoiserSpec {
            sigma_mode: SigmaMode::Fixed,
            fixed_sigma: Some(5.0),
            ..DenoiserSpec::default()
        };
        let out = denoise_complex(&f, &spec).unwrap();
        assert_eq!(out.dim(), f.dim());
        for v in out.data() {
            assert!((v - Complex64::new(0.3, 0.9)).norm() < 1e-12);
        }
    }

    #[test]
    fn halves_error_on_noisy_piecewise_constant_phantom() {
        let clean = piecewise_phantom(64);
        let noisy = &clean + &noise(64, 64, 0.1, 5);
        let out = denoise_complex(&field(noisy.clone()), &DenoiserSpec::default()).unwrap();
        let before = rmse(&noisy, &clean);
        let after = rmse(out.data(), &clean);
        assert!(after * 2.0 < before, "before {before}, after {after}");
    }

    #[test]
    fn unknown_kind_and_bad_block_rejected() {
        assert!(matches!("bm3d".parse::<DenoiserKind>(), Err(Error::Config(_))));
        let spec = DenoiserSpec {
            block_size: 6,
            ..DenoiserSpec::default()
        };
        assert!(denoise_complex(&field(noise(8, 8, 0.1, 0)), &spec).is_err());
        assert!(serde_json::from_str::<DenoiserSpec>(r#"{"kind":"bm3d"}"#).is_err());
    }

    #[test]
    fn handles_sizes_not_multiple_of_block() {
        let f = field(noise(21, 35, 0.1, 3));
        for b in [4, 8, 16] {
            let spec = DenoiserSpec {
                block_size: b,
                ..DenoiserSpec::default()
            };
            assert_eq!(denoise_complex(&f, &spec).unwrap().dim(), (21, 35));
        }
    }

    #[test]
    fn sns_limits() {
        let o = Array2::from_elem((2, 2), 2.0);
        let m = Array2::from_elem((2, 2), 4.0);
        assert_eq!(sns_amplitude_update(&o, &m, &SnsSpec { gamma: 0.0 }).unwrap(), o);
        assert!(sns_amplitude_update(&o, &m, &SnsSpec { gamma: 1.0 })
            .unwrap()
            .iter()
            .all(|&v| v == 3.0));
        let big = sns_amplitude_update(&o, &m, &SnsSpec { gamma: 1e9 }).unwrap();
        assert!(big.iter().all(|&v| ((v - 4.0) / 4.0).abs() < 1e-8));
        let neg = Array2::from_elem((2, 2), -1.0);
        assert!(sns_amplitude_update(&neg, &m, &SnsSpec::default()).is_err());
        assert!(sns_amplitude_update(&o, &Array2::zeros((3, 2)), &SnsSpec::default()).is_err());
    }

    proptest! {
        #[test]
        fn sns_is_between_inputs(o in 0.0..10.0f64, m in 0.0..10.0f64, gamma in 0.0..1e6f64) {
            let v = fuse(o, m, gamma);
            prop_assert!(v >= o.min(m) && v <= o.max(m));
        }

        #[test]
        fn sns_monotone_in_gamma(o in 0.0..5.0f64, d in 0.0..5.0f64, g1 in 0.0..100.0f64, dg in 0.0..100.0f64) {
            let m = o + d;
            prop_assert!(fuse(o, m, g1) <= fuse(o, m, g1 + dg));
        }

        #[test]
        fn thresholding_never_grows_ac_energy(
            vals in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 64),
            t in 0.0..2.0f64,
        ) {
            let block = Array2::from_shape_vec((8, 8), vals.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let out = BlockDct::new(8).hard_threshold(&block, t);
            let ac = |x: &Array2<Complex64>| {
                let mean = x.sum() / x.len() as f64;
                x.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>()
            };
            prop_assert!(ac(&out) <= ac(&block) * (1.0 + 1e-12) + 1e-24);
        }
    }
}
