#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use hspr_core::metrics::{align_phase, plateau_height, rrmse};
use hspr_core::phantom::{phase_to_thickness, thickness_to_phase, DepthMap, WrapPolicy};
use hspr_core::pipeline::{self, phase_rrmse_per_slice, PipelineConfig, Preset};
use hspr_core::retrieval::{backpropagation_baseline, hspr_init, phase_scale_mu, Solver};
use hspr_core::spectroscopy::{
    estimate_spectra, psnr_observations, psnr_spectral, synthesize_interferograms, wavelength_grid_for_band,
};
use hspr_core::{
    ComplexField, DelayLineConfig, DenoiserSpec, DispersionModel, HyperCube, PropagationGeometry, Propagator, SnsSpec,
    SolverConfig,
};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn final_mean(report: &pipeline::RetrievalReport) -> f64 {
    *report.convergence.column("mean_rrmse").unwrap().last().unwrap()
}

fn spectroscopy_round_trip() -> Outcome {
    let start = Instant::now();
    let delay = DelayLineConfig::new(100e-9, 2000).unwrap();
    let grid = wavelength_grid_for_band(&delay, 680e-9, 820e-9)
        .unwrap()
        .subsample(16)
        .unwrap();
    let mut r = rng(1);
    let cube = HyperCube::new(
        grid.wavelengths()
            .iter()
            .map(|&l| {
                let d = Array2::from_shape_fn((64, 64), |_| {
                    Complex64::from_polar(0.1 + r.random::<f64>(), 6.0 * r.random::<f64>())
                });
                ComplexField::new(d, l, 3.45e-6).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let stack = synthesize_interferograms(&cube, &delay).unwrap();
    let est = estimate_spectra(&stack, &grid, 3.45e-6).unwrap();
    let mut worst: f64 = 0.0;
    for (s, &l) in grid.wavelengths().iter().enumerate() {
        let truth = cube.slices()[cube.position_of(l).unwrap()].intensity();
        for (a, t) in est.slice(s).iter().zip(truth.iter()) {
            worst = worst.max((a * a - t).abs() / t);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(30),
        format!(
            "max relative error {worst:.2e} (< 1e-10), {:.2} s (< 30 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn propagator_unitarity() -> Outcome {
    let delay = DelayLineConfig::new(100e-9, 2000).unwrap();
    let grid = wavelength_grid_for_band(&delay, 680e-9, 820e-9).unwrap();
    let geom = |d| PropagationGeometry::new(d, 3.45e-6, 128, 128).unwrap();
    let mut full = Propagator::new(geom(16e-3)).unwrap();
    let mut first = Propagator::new(geom(6e-3)).unwrap();
    let mut second = Propagator::new(geom(10e-3)).unwrap();
    let (mut round, mut comp): (f64, f64) = (0.0, 0.0);
    for (i, &l) in grid.wavelengths().iter().enumerate() {
        let f = band_limited_field(128, 12, l, 3.45e-6, i as u64);
        let fwd = full.forward(&f).unwrap();
        round = round.max(rel_rms(full.backward(&fwd).unwrap().data(), f.data()));
        let two = second.forward(&first.forward(&f).unwrap()).unwrap();
        comp = comp.max(rel_rms(two.data(), fwd.data()));
    }
    outcome(
        round < 1e-10 && comp < 1e-10,
        format!(
            "{} wavelengths, round trip {round:.2e}, composition 6+10 mm vs 16 mm {comp:.2e} (< 1e-10)",
            grid.len()
        ),
    )
}

fn fellgett_gap() -> Outcome {
    let mut cfg = Preset::PaperSim.config();
    let target = 10.0 * (cfg.delay.n_steps as f64).sqrt().log10();
    let clean = pipeline::simulate(&cfg).unwrap().clean;
    let mut pass = true;
    let mut parts = Vec::new();
    for sigma in [0.1, 0.25, 0.5, 1.0] {
        cfg.noise_sigma = sigma;
        let noisy =
            hspr_core::spectroscopy::add_noise(&clean, sigma, hspr_core::spectroscopy::mix_seed(cfg.seed, 1)).unwrap();
        let cube = pipeline::spectra(&noisy, &cfg, cfg.geometry.pixel_pitch).unwrap();
        let gap = psnr_observations(&noisy, sigma).unwrap() - psnr_spectral(&cube, sigma, &cfg.delay).unwrap().mean();
        pass &= (gap - target).abs() <= 1.0;
        parts.push(format!("sigma {sigma}: {gap:.2} dB"));
    }
    outcome(pass, format!("{} (target {target:.2} +/- 1 dB)", parts.join(", ")))
}

fn noiseless_convergence() -> Outcome {
    let start = Instant::now();
    let mut cfg = Preset::PaperSim.config();
    cfg.solver.max_cube_iterations = 30;
    cfg.solver.tolerance = Some(f64::MIN_POSITIVE);
    let sim = pipeline::simulate(&cfg).unwrap();
    let cube = pipeline::spectra(&sim.noisy, &cfg, cfg.geometry.pixel_pitch).unwrap();
    let report = pipeline::retrieve(&cube, &cfg, Some(&sim.truth)).unwrap();
    let table = report.rrmse.unwrap();
    let l = cube.len();
    let per_t: Vec<Vec<f64>> = table.rows.chunks(l).map(|c| c.iter().map(|r| r[2]).collect()).collect();
    let last = per_t.last().unwrap();
    let worst = last.iter().copied().fold(0.0, f64::max);
    let rises: usize = per_t[4..]
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| **b > **a + 1e-12).count())
        .sum();
    let elapsed = start.elapsed();
    outcome(
        per_t.len() == 30 && worst < 0.05 && rises == 0 && elapsed < Duration::from_secs(300),
        format!(
            "T = {}, worst final RRMSE {worst:.4} (< 0.05), {rises} increases for t >= 5, {:.1} s",
            per_t.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn noisy_preset(sigma: f64) -> (PipelineConfig, hspr_core::SpectralAmplitudeCube, HyperCube) {
    let mut cfg = Preset::PaperSim.config();
    cfg.noise_sigma = sigma;
    cfg.seed = 7;
    let sim = pipeline::simulate(&cfg).unwrap();
    let cube = pipeline::spectra(&sim.noisy, &cfg, cfg.geometry.pixel_pitch).unwrap();
    (cfg, cube, sim.truth)
}

fn quality_under_noise() -> Outcome {
    let (cfg, cube, truth) = noisy_preset(2.0);
    let psnr = psnr_spectral(&cube, 2.0, &cfg.delay).unwrap();
    let m = final_mean(&pipeline::retrieve(&cube, &cfg, Some(&truth)).unwrap());
    outcome(
        psnr.min() >= 18.0 && m < 0.1,
        format!(
            "sigma 2: spectral PSNR min {:.2} dB (>= 18), mean phase RRMSE {m:.4} (< 0.1)",
            psnr.min()
        ),
    )
}

fn ablation() -> Outcome {
    let (cfg, cube, truth) = noisy_preset(0.5);
    let full = final_mean(&pipeline::retrieve(&cube, &cfg, Some(&truth)).unwrap());
    let mut plain = cfg.clone();
    plain.solver.denoiser = DenoiserSpec::none();
    plain.solver.sns = SnsSpec { gamma: 0.0 };
    let bare = final_mean(&pipeline::retrieve(&cube, &plain, Some(&truth)).unwrap());

    let mut small = common::small_config();
    small.retrieval_wavelengths = Some(1);
    let sim = pipeline::simulate(&small).unwrap();
    let (one, _) = exact_cube(&sim.truth, small.delay, &small.geometry);
    let sc = SolverConfig::unregularized(small.geometry);
    let oracle = gerchberg_saxton(
        &one.slice(0).to_owned(),
        one.grid().wavelengths()[0],
        &small.geometry,
        10,
    );
    let mut solver = Solver::new(&one, &sc).unwrap();
    let mut state = hspr_init(&one).unwrap();
    let mut identical = true;
    for (t, (object, sensor)) in oracle.iter().enumerate() {
        let out = solver.sweep(&state, t + 1).unwrap();
        identical &= out.state.data() == sensor && out.object_cube.slices()[0].data() == object;
        state = out.state;
    }
    outcome(
        full < bare && identical,
        format!("sigma 0.5: full {full:.4} < plain {bare:.4}; L = 1 matches Gerchberg-Saxton bit for bit over 10 iterations: {identical}"),
    )
}

fn backprop_contrast() -> Outcome {
    let (cfg, cube, truth) = noisy_preset(0.5);
    let hspr = final_mean(&pipeline::retrieve(&cube, &cfg, Some(&truth)).unwrap());
    let bp = backpropagation_baseline(&cube, &cfg.geometry).unwrap();
    let tp = truth_phase(&truth, &cube);
    let bp_err = mean(&phase_rrmse_per_slice(&bp, &tp).unwrap());
    outcome(
        bp_err >= 2.0 * hspr,
        format!(
            "sigma 0.5: back-propagation {bp_err:.4} vs HSPR {hspr:.4} (ratio {:.1}, >= 2)",
            bp_err / hspr
        ),
    )
}

fn depth_fidelity() -> Outcome {
    let mut cfg = Preset::PaperExp.config();
    cfg.solver.tolerance = Some(f64::MIN_POSITIVE);
    let sim = pipeline::simulate(&cfg).unwrap();
    let cube = pipeline::spectra(&sim.noisy, &cfg, cfg.geometry.pixel_pitch).unwrap();
    let report = pipeline::retrieve(&cube, &cfg, None).unwrap();
    let s = cube.grid().nearest(687e-9).unwrap();
    let l = cube.grid().wavelengths()[s];
    let obj = &report.result.object_cube.slices()[report.result.object_cube.position_of(l).unwrap()];
    let truth = truth_phase(&sim.truth, &cube);
    let phase = align_phase(&obj.phase(), &truth[s]).unwrap();
    let depth = phase_to_thickness(&phase, l, &cfg.solver.dispersion, cfg.geometry.pixel_pitch).unwrap();
    let h = plateau_height(depth.heights(), &sim.depth.support()).unwrap();
    let rel = (h - 127e-9).abs() / 127e-9;
    outcome(
        rel < 0.1,
        format!(
            "plateau {:.2} nm at {:.2} nm (error {:.2}%, < 10%)",
            h * 1e9,
            l * 1e9,
            rel * 100.0
        ),
    )
}

fn formula_units() -> Outcome {
    let c = DispersionModel::Constant { n: 1.46 };
    let mu = phase_scale_mu(680e-9, 820e-9, &c).unwrap();
    let mu_ok = (mu - 680.0 / 820.0).abs() < 1e-12;
    let depth = DepthMap::new(Array2::from_elem((1, 1), 317e-9), 3.45e-6).unwrap();
    let phi = thickness_to_phase(&depth, 680e-9, &c, WrapPolicy::Error).unwrap()[[0, 0]];
    let phi_ok = (phi - 1.3473).abs() < 1e-4;
    let x = Array2::from_shape_fn((4, 5), |(r, c)| (r * 5 + c) as f64 + 1.0);
    let ids = (
        rrmse(&x, &x).unwrap(),
        rrmse(&Array2::zeros((4, 5)), &x).unwrap(),
        rrmse(&(&x * 2.0), &x).unwrap(),
    );
    outcome(
        mu_ok && phi_ok && ids == (0.0, 1.0, 1.0),
        format!("mu {mu:.12}, phase {phi:.6} rad, RRMSE identities {ids:?}"),
    )
}

fn io_determinism() -> Outcome {
    let mut cfg = Preset::PaperSim.config();
    cfg.noise_sigma = 0.5;
    cfg.seed = 7;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_full_pipeline(&cfg, a.path());
    // second run driven by the first run's manifest
    let replay = PipelineConfig::load(&a.path().join("sim").join(pipeline::MANIFEST_NAME)).unwrap();
    let fb = run_full_pipeline(&replay, b.path());
    let mut same = fa.len() == fb.len();
    let mut counts = [0usize; 3];
    for (x, y) in fa.iter().zip(&fb) {
        same &= x.strip_prefix(a.path()).ok() == y.strip_prefix(b.path()).ok();
        same &= std::fs::read(x).unwrap() == std::fs::read(y).unwrap();
        match x.extension().and_then(|e| e.to_str()) {
            Some("cube") => counts[0] += 1,
            Some("pgm") => counts[1] += 1,
            Some("csv") => counts[2] += 1,
            _ => {}
        }
    }
    outcome(
        same && counts.iter().all(|&c| c > 0),
        format!(
            "{} files compared ({} cube, {} pgm, {} csv), identical: {same}",
            fa.len(),
            counts[0],
            counts[1],
            counts[2]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("spectroscopy round trip", spectroscopy_round_trip),
        ("propagator unitarity", propagator_unitarity),
        ("Fellgett gap", fellgett_gap),
        ("noiseless convergence", noiseless_convergence),
        ("quality under noise", quality_under_noise),
        ("ablation direction", ablation),
        ("back-propagation contrast", backprop_contrast),
        ("depth fidelity", depth_fidelity),
        ("formula units", formula_units),
        ("IO determinism", io_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
