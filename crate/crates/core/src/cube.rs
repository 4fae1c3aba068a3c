use crate::error::{Error, Result};
use crate::optics::ComplexField;

/// Stack of complex wavefront slices, one per wavelength, sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    slices: Vec<ComplexField>,
}

impl HyperCube {
    pub fn new(slices: Vec<ComplexField>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("hypercube needs at least one slice"))?;
        let (dim, pitch) = (first.dim(), first.pixel_pitch());
        for (i, s) in slices.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::invalid(format!("slice {i} is {:?}, expected {dim:?}", s.dim())));
            }
            if s.pixel_pitch() != pitch {
                return Err(Error::invalid(format!(
                    "slice {i} pixel pitch {} differs from {pitch}",
                    s.pixel_pitch()
                )));
            }
        }
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[ComplexField] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<ComplexField> {
        self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.slices[0].dim()
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.slices[0].pixel_pitch()
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.wavelength()).collect()
    }

    /// Index of the slice whose wavelength equals `wavelength` to 1e-9 relative.
    pub fn position_of(&self, wavelength: f64) -> Option<usize> {
        self.slices
            .iter()
            .position(|s| (s.wavelength() - wavelength).abs() <= 1e-9 * wavelength)
    }
}
