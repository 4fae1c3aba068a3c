#![allow(dead_code)]

use std::f64::consts::PI;

use hspr_core::optics::{propagate_backward, propagate_forward};
use hspr_core::pipeline::{self, PipelineConfig};
use hspr_core::{ComplexField, DelayLineConfig, HyperCube, PropagationGeometry, SpectralAmplitudeCube};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_rms(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Sum of `waves` random plane waves on the DFT grid with |k| <= n/4.
pub fn band_limited_field(n: usize, waves: usize, wavelength: f64, pitch: f64, seed: u64) -> ComplexField {
    let mut r = rng(seed);
    let lim = (n / 4) as i64;
    let comps: Vec<(i64, i64, Complex64)> = (0..waves)
        .map(|_| {
            let kx = r.random_range(-lim..=lim);
            let ky = r.random_range(-lim..=lim);
            let c = Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5);
            (kx, ky, c)
        })
        .collect();
    let data = Array2::from_shape_fn((n, n), |(y, x)| {
        comps
            .iter()
            .map(|&(kx, ky, c)| c * Complex64::cis(2.0 * PI * (kx as f64 * x as f64 + ky as f64 * y as f64) / n as f64))
            .sum()
    });
    ComplexField::new(data, wavelength, pitch).unwrap()
}

/// Plane wave of DFT bin (ky, kx) and its analytic transfer factor.
pub fn plane_wave(
    n: usize,
    ky: i64,
    kx: i64,
    geom: &PropagationGeometry,
    wavelength: f64,
) -> (ComplexField, Complex64) {
    let data = Array2::from_shape_fn((n, n), |(y, x)| {
        Complex64::cis(2.0 * PI * (kx as f64 * x as f64 + ky as f64 * y as f64) / n as f64)
    });
    let fx = kx as f64 / (n as f64 * geom.pixel_pitch);
    let fy = ky as f64 / (n as f64 * geom.pixel_pitch);
    let arg = 1.0 / (wavelength * wavelength) - fx * fx - fy * fy;
    let h = if arg > 0.0 {
        Complex64::cis(2.0 * PI * geom.distance * arg.sqrt())
    } else {
        Complex64::new(0.0, 0.0)
    };
    (ComplexField::new(data, wavelength, geom.pixel_pitch).unwrap(), h)
}

/// Direct-sum interferogram `sum_s I_s (2 + 2 cos(2 pi m dz / lambda_s))`.
pub fn interferogram_oracle(intensities: &[f64], wavelengths: &[f64], delay: &DelayLineConfig) -> Vec<f64> {
    (0..delay.n_steps)
        .map(|m| {
            let z = m as f64 * delay.delta_z;
            intensities
                .iter()
                .zip(wavelengths)
                .map(|(i, l)| i * (2.0 + 2.0 * (2.0 * PI * z / l).cos()))
                .sum()
        })
        .collect()
}

/// Plain alternating projections at one wavelength, written from scratch.
pub fn gerchberg_saxton(
    observed: &Array2<f64>,
    wavelength: f64,
    geom: &PropagationGeometry,
    iterations: usize,
) -> Vec<(Array2<Complex64>, Array2<Complex64>)> {
    let mut sensor =
        ComplexField::new(observed.mapv(|a| Complex64::new(a, 0.0)), wavelength, geom.pixel_pitch).unwrap();
    let mut out = Vec::new();
    for _ in 0..iterations {
        let object = propagate_backward(&sensor, geom).unwrap();
        let model = propagate_forward(&object, geom).unwrap();
        sensor = ComplexField::from_polar(observed, &model.phase(), wavelength, geom.pixel_pitch).unwrap();
        let next_object = propagate_backward(&sensor, geom).unwrap();
        out.push((next_object.into_data(), sensor.data().clone()));
    }
    out
}

/// Noiseless sensor amplitudes of a truth cube, one per slice.
pub fn exact_cube(
    truth: &HyperCube,
    delay: DelayLineConfig,
    geom: &PropagationGeometry,
) -> (SpectralAmplitudeCube, HyperCube) {
    let sensor = HyperCube::new(
        truth
            .slices()
            .iter()
            .map(|s| propagate_forward(s, geom).unwrap())
            .collect(),
    )
    .unwrap();
    let cube = SpectralAmplitudeCube::from_fields(&sensor, delay, vec![1.0; truth.len()]).unwrap();
    (cube, sensor)
}

pub fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.geometry.rows = 32;
    cfg.geometry.cols = 32;
    cfg.delay = DelayLineConfig::new(200e-9, 256).unwrap();
    cfg.band = [600e-9, 900e-9];
    cfg.retrieval_wavelengths = Some(6);
    cfg.solver.max_cube_iterations = 15;
    cfg.solver.tolerance = Some(1e-12);
    cfg
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn truth_phase(truth: &HyperCube, cube: &SpectralAmplitudeCube) -> Vec<Array2<f64>> {
    pipeline::match_truth(truth, cube.grid().wavelengths(), cube.dim()).unwrap()
}

pub fn intensities_of(cube: &Array3<f64>) -> Array3<f64> {
    cube.mapv(|a| a * a)
}

/// Every stage on disk in `dir`; returns the produced files.
pub fn run_full_pipeline(cfg: &PipelineConfig, dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    use hspr_core::pipeline::*;
    let sim = dir.join("sim");
    let spec = dir.join("spectra");
    let ret = dir.join("retrieve");
    let ren = dir.join("render");
    let ev = dir.join("evaluate");
    run_simulate(cfg, &sim).unwrap();
    run_spectra(&sim.join(NOISY_FILE), cfg, &spec).unwrap();
    run_retrieve(&spec.join(SPECTRAL_FILE), Some(&sim.join(TRUTH_FILE)), cfg, &ret).unwrap();
    let options = RenderOptions {
        quantity: RenderQuantity::Depth,
        slices: Some(vec![0, 1]),
        row: Some(7),
        col: Some(9),
        phase_reference: Some(sim.join(TRUTH_FILE)),
    };
    run_render(&ret.join(OBJECT_FILE), &options, cfg, &ren).unwrap();
    run_evaluate(&ret.join(OBJECT_FILE), &sim.join(TRUTH_FILE), cfg, &ev).unwrap();
    let mut files: Vec<_> = [sim, spec, ret, ren, ev]
        .iter()
        .flat_map(|d| std::fs::read_dir(d).unwrap().map(|e| e.unwrap().path()))
        .filter(|p| p.file_name().unwrap() != MANIFEST_NAME)
        .collect();
    files.sort();
    files
}
