//! Complex wavefronts and the angular-spectrum propagation operator.
//!
//! Fields are sampled on a regular `rows x cols` grid with square pixels.
//! Propagation multiplies the 2D spectrum of the field by
//! `H(fx, fy) = exp(j 2 pi d sqrt(1/lambda^2 - fx^2 - fy^2))` on propagating
//! frequencies and zeroes the evanescent ones, so `|H|` is either 0 or 1 and
//! the backward operator (conjugate `H`) inverts the forward one exactly on
//! the propagating band.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// One monochromatic 2D wavefront slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    data: Array2<Complex64>,
    wavelength: f64,
    pixel_pitch: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, wavelength: f64, pixel_pitch: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("field must have at least one row and one column"));
        }
        check_positive("wavelength", wavelength)?;
        check_positive("pixel pitch", pixel_pitch)?;
        if let Some(((r, c), v)) = data
            .indexed_iter()
            .find(|(_, v)| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::invalid(format!("non-finite field value {v} at ({r}, {c})")));
        }
        Ok(Self {
            data,
            wavelength,
            pixel_pitch,
        })
    }

    /// Builds `amplitude * exp(j phase)` elementwise.
    pub fn from_polar(amplitude: &Array2<f64>, phase: &Array2<f64>, wavelength: f64, pixel_pitch: f64) -> Result<Self> {
        if amplitude.dim() != phase.dim() {
            return Err(Error::invalid(format!(
                "amplitude {:?} and phase {:?} shapes differ",
                amplitude.dim(),
                phase.dim()
            )));
        }
        let mut data = Array2::zeros(amplitude.dim());
        ndarray::Zip::from(&mut data)
            .and(amplitude)
            .and(phase)
            .for_each(|d, &a, &p| *d = Complex64::from_polar(a, p));
        Self::new(data, wavelength, pixel_pitch)
    }

    /// Wraps data produced by internal operators that preserve finiteness.
    pub(crate) fn from_parts_unchecked(data: Array2<Complex64>, wavelength: f64, pixel_pitch: f64) -> Self {
        Self {
            data,
            wavelength,
            pixel_pitch,
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.data.mapv(|v| v.norm())
    }

    /// Wrapped phase in `(-pi, pi]`.
    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(|v| v.arg())
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.data.mapv(|v| v.norm_sqr())
    }

    /// Sum of `|v|^2` over all pixels.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Object-to-sensor propagation frame.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PropagationGeometry {
    /// Object-to-sensor distance in meters; zero is the identity.
    pub distance: f64,
    pub pixel_pitch: f64,
    pub rows: usize,
    pub cols: usize,
    /// Zero-padding factor applied before the FFT (1 = none).
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_padding() -> usize {
    1
}

impl PropagationGeometry {
    pub fn new(distance: f64, pixel_pitch: f64, rows: usize, cols: usize) -> Result<Self> {
        let geom = Self {
            distance,
            pixel_pitch,
            rows,
            cols,
            padding: 1,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn with_padding(mut self, padding: usize) -> Result<Self> {
        self.padding = padding;
        self.validate()?;
        Ok(self)
    }

    pub fn with_distance(mut self, distance: f64) -> Result<Self> {
        self.distance = distance;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return Err(Error::invalid(format!(
                "propagation distance must be finite and >= 0, got {}",
                self.distance
            )));
        }
        check_positive("pixel pitch", self.pixel_pitch)?;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("geometry must have at least one row and one column"));
        }
        if self.padding == 0 {
            return Err(Error::invalid("padding factor must be >= 1"));
        }
        Ok(())
    }

    fn padded_dim(&self) -> (usize, usize) {
        (self.rows * self.padding, self.cols * self.padding)
    }

    fn check_field(&self, field: &ComplexField) -> Result<()> {
        if field.dim() != (self.rows, self.cols) {
            return Err(Error::invalid(format!(
                "field is {:?} but geometry expects ({}, {})",
                field.dim(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }
}

/// Signed DFT frequency of bin `k` for a length-`n` axis sampled at `pitch`.
pub fn dft_frequency(k: usize, n: usize, pitch: f64) -> f64 {
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    signed / (n as f64 * pitch)
}

/// Angular-spectrum transfer function on the (padded) DFT grid of `geom`,
/// in wraparound frequency order.
pub fn transfer_function(geom: &PropagationGeometry, wavelength: f64) -> Result<Array2<Complex64>> {
    check_positive("wavelength", wavelength)?;
    geom.validate()?;
    let (rows, cols) = geom.padded_dim();
    if geom.distance == 0.0 {
        return Ok(Array2::from_elem((rows, cols), Complex64::new(1.0, 0.0)));
    }
    let inv_lambda_sq = 1.0 / (wavelength * wavelength);
    let fy: Vec<f64> = (0..rows).map(|k| dft_frequency(k, rows, geom.pixel_pitch)).collect();
    let fx: Vec<f64> = (0..cols).map(|k| dft_frequency(k, cols, geom.pixel_pitch)).collect();
    Ok(Array2::from_shape_fn((rows, cols), |(r, c)| {
        let kz_sq = inv_lambda_sq - fx[c] * fx[c] - fy[r] * fy[r];
        if kz_sq > 0.0 {
            Complex64::cis(2.0 * PI * geom.distance * kz_sq.sqrt())
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Planned 2D FFT for a fixed grid size.
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn process(&self, data: &mut Array2<Complex64>, inverse: bool) {
        debug_assert_eq!(data.dim(), (self.rows, self.cols));
        let (row_fft, col_fft) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let buf = data.as_slice_mut().expect("standard layout");
        row_fft.process(buf);

        let mut transposed = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut transposed, self.rows, self.cols);
        col_fft.process(&mut transposed);
        transpose(&transposed, buf, self.cols, self.rows);

        if inverse {
            let norm = 1.0 / (self.rows * self.cols) as f64;
            buf.iter_mut().for_each(|v| *v *= norm);
        }
    }

    pub(crate) fn forward(&self, data: &mut Array2<Complex64>) {
        self.process(data, false)
    }

    pub(crate) fn inverse(&self, data: &mut Array2<Complex64>) {
        self.process(data, true)
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

/// Reusable propagation operator for one geometry.
///
/// Caches the FFT plans and the transfer function of every wavelength seen,
/// so repeated calls inside an iterative solver only pay for the FFTs.
pub struct Propagator {
    geometry: PropagationGeometry,
    fft: Fft2,
    transfer: HashMap<u64, Array2<Complex64>>,
}

impl Propagator {
    pub fn new(geometry: PropagationGeometry) -> Result<Self> {
        geometry.validate()?;
        let (rows, cols) = geometry.padded_dim();
        Ok(Self {
            geometry,
            fft: Fft2::new(rows, cols),
            transfer: HashMap::new(),
        })
    }

    pub fn geometry(&self) -> &PropagationGeometry {
        &self.geometry
    }

    /// `P_lambda`: object plane to sensor plane.
    pub fn forward(&mut self, field: &ComplexField) -> Result<ComplexField> {
        self.apply(field, Direction::Forward)
    }

    /// `P_lambda^-1`: sensor plane back to object plane.
    pub fn backward(&mut self, field: &ComplexField) -> Result<ComplexField> {
        self.apply(field, Direction::Backward)
    }

    fn apply(&mut self, field: &ComplexField, direction: Direction) -> Result<ComplexField> {
        self.geometry.check_field(field)?;
        if self.geometry.distance == 0.0 {
            return Ok(field.clone());
        }
        let wavelength = field.wavelength();
        if !self.transfer.contains_key(&wavelength.to_bits()) {
            let h = transfer_function(&self.geometry, wavelength)?;
            self.transfer.insert(wavelength.to_bits(), h);
        }
        let h = &self.transfer[&wavelength.to_bits()];

        let (rows, cols) = (self.geometry.rows, self.geometry.cols);
        let pad = self.geometry.padding;
        let mut work = if pad == 1 {
            field.data().clone()
        } else {
            let mut padded = Array2::zeros(self.geometry.padded_dim());
            let (r0, c0) = pad_offset(rows, cols, pad);
            padded.slice_mut(s![r0..r0 + rows, c0..c0 + cols]).assign(field.data());
            padded
        };

        self.fft.forward(&mut work);
        match direction {
            Direction::Forward => ndarray::Zip::from(&mut work).and(h).for_each(|w, &t| *w *= t),
            Direction::Backward => ndarray::Zip::from(&mut work).and(h).for_each(|w, &t| *w *= t.conj()),
        }
        self.fft.inverse(&mut work);

        let data = if pad == 1 {
            work
        } else {
            let (r0, c0) = pad_offset(rows, cols, pad);
            work.slice(s![r0..r0 + rows, c0..c0 + cols]).to_owned()
        };
        Ok(ComplexField::from_parts_unchecked(
            data,
            wavelength,
            field.pixel_pitch(),
        ))
    }
}

fn pad_offset(rows: usize, cols: usize, pad: usize) -> (usize, usize) {
    ((pad - 1) * rows / 2, (pad - 1) * cols / 2)
}

pub fn propagate_forward(field: &ComplexField, geom: &PropagationGeometry) -> Result<ComplexField> {
    Propagator::new(*geom)?.forward(field)
}

pub fn propagate_backward(field: &ComplexField, geom: &PropagationGeometry) -> Result<ComplexField> {
    Propagator::new(*geom)?.backward(field)
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and > 0, got {value}")))
    }
}
