//! Reconstruction quality metrics.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `||estimate - truth||_F / ||truth||_F`.
pub fn rrmse(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    check_same(estimate, truth)?;
    let norm = frobenius(truth.iter().copied());
    if norm == 0.0 {
        return Err(Error::invalid("RRMSE is undefined for an all-zero reference"));
    }
    let diff = frobenius(estimate.iter().zip(truth).map(|(e, t)| e - t));
    Ok(diff / norm)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    // floor maps +pi to -pi; keep the half-open convention
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Constant phase offset `c` that best aligns `estimate` with `truth`:
/// `c = arg sum exp(j (estimate - truth))`.
pub fn phase_offset(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    check_same(estimate, truth)?;
    let s: Complex64 = estimate.iter().zip(truth).map(|(e, t)| Complex64::cis(e - t)).sum();
    Ok(s.arg())
}

/// Estimate with its global phase offset removed and every pixel moved to
/// the `2 pi` branch nearest the reference: `truth + wrap(est - c - truth)`.
pub fn align_phase(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<Array2<f64>> {
    let c = phase_offset(estimate, truth)?;
    let mut out = Array2::zeros(truth.dim());
    Zip::from(&mut out)
        .and(estimate)
        .and(truth)
        .for_each(|o, &e, &t| *o = t + wrap_phase(e - c - t));
    Ok(out)
}

/// Phase RRMSE after removing the unobservable global phase offset.
///
/// Intensity-only measurements cannot fix a constant phase, so
/// reconstructions are compared up to that constant.
pub fn phase_rrmse(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    rrmse(&align_phase(estimate, truth)?, truth)
}

/// Mean over `mask` minus mean over its complement.
pub fn plateau_height(values: &Array2<f64>, mask: &Array2<bool>) -> Result<f64> {
    if values.dim() != mask.dim() {
        return Err(Error::invalid("values and mask shapes differ"));
    }
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    Zip::from(values).and(mask).for_each(|&v, &m| {
        if m {
            on += v;
            n_on += 1;
        } else {
            off += v;
            n_off += 1;
        }
    });
    if n_on == 0 || n_off == 0 {
        return Err(Error::invalid(
            "plateau mask must split the frame into two nonempty parts",
        ));
    }
    Ok(on / n_on as f64 - off / n_off as f64)
}

fn frobenius(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

fn check_same(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!("shapes differ: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}
