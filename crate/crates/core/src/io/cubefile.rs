//! Bit-exact hypercube container.
//!
//! Layout: the 8 magic bytes `HSCUBE1\n`, the header length as u64
//! little-endian, that many bytes of JSON header, then the raw
//! little-endian payload in row-major order with slices outermost.
//! Complex values are interleaved `(re, im)` doubles.

use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cube::HyperCube;
use crate::error::{Error, Result};
use crate::optics::ComplexField;
use crate::spectroscopy::{DelayLineConfig, InterferogramStack, SpectralAmplitudeCube, WavelengthGrid};

pub const MAGIC: &[u8; 8] = b"HSCUBE1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
    pub slices: usize,
    pub wavelengths_m: Vec<f64>,
    pub pixel_pitch_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_z_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Relative source power per wavelength for spectral cubes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_weights: Option<Vec<f64>>,
}

/// Payload, indexed `(slice, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CubeData {
    F64(Array3<f64>),
    C128(Array3<Complex64>),
}

impl CubeData {
    pub fn dim(&self) -> (usize, usize, usize) {
        match self {
            CubeData::F64(a) => a.dim(),
            CubeData::C128(a) => a.dim(),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            CubeData::F64(_) => Dtype::F64,
            CubeData::C128(_) => Dtype::C128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeFile {
    header: CubeHeader,
    data: CubeData,
}

impl CubeFile {
    pub fn new(header: CubeHeader, data: CubeData) -> Result<Self> {
        let (s, r, c) = data.dim();
        if (header.slices, header.rows, header.cols) != (s, r, c) {
            return Err(Error::Format(format!(
                "header declares {}x{}x{} but payload is {s}x{r}x{c}",
                header.slices, header.rows, header.cols
            )));
        }
        if header.dtype != data.dtype() {
            return Err(Error::Format("header dtype does not match payload".into()));
        }
        if !header.wavelengths_m.is_empty() && header.wavelengths_m.len() != s {
            return Err(Error::Format(format!(
                "{} wavelengths for {s} slices",
                header.wavelengths_m.len()
            )));
        }
        if header.delta_z_m.is_some() != header.n_steps.is_some() {
            return Err(Error::Format("delta_z_m and n_steps must appear together".into()));
        }
        Ok(Self { header, data })
    }

    pub fn header(&self) -> &CubeHeader {
        &self.header
    }

    pub fn data(&self) -> &CubeData {
        &self.data
    }

    pub fn delay(&self) -> Option<DelayLineConfig> {
        Some(DelayLineConfig {
            delta_z: self.header.delta_z_m?,
            n_steps: self.header.n_steps?,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let (s, r, c) = self.data.dim();
        let mut out = Vec::with_capacity(16 + header.len() + s * r * c * self.header.dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        match &self.data {
            CubeData::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            CubeData::C128(a) => a.iter().for_each(|v| {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }),
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a hypercube file (bad magic)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let payload_start = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Format("header length exceeds file size".into()))?;
        let header: CubeHeader =
            serde_json::from_slice(&bytes[16..payload_start]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        let payload = &bytes[payload_start..];
        let count = header.rows * header.cols * header.slices;
        if payload.len() != count * header.dtype.size() {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                count * header.dtype.size()
            )));
        }
        let f = |chunk: &[u8]| f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        let shape = (header.slices, header.rows, header.cols);
        let data = match header.dtype {
            Dtype::F64 => CubeData::F64(
                Array3::from_shape_vec(shape, payload.chunks_exact(8).map(f).collect())
                    .map_err(|e| Error::Format(e.to_string()))?,
            ),
            Dtype::C128 => CubeData::C128(
                Array3::from_shape_vec(
                    shape,
                    payload
                        .chunks_exact(16)
                        .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
                        .collect(),
                )
                .map_err(|e| Error::Format(e.to_string()))?,
            ),
        };
        Self::new(header, data)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn base_header(dtype: Dtype, (slices, rows, cols): (usize, usize, usize), pixel_pitch: f64) -> CubeHeader {
        CubeHeader {
            dtype,
            rows,
            cols,
            slices,
            wavelengths_m: Vec::new(),
            pixel_pitch_m: pixel_pitch,
            delta_z_m: None,
            n_steps: None,
            spectral_weights: None,
        }
    }

    pub fn from_hypercube(cube: &HyperCube) -> Self {
        let (rows, cols) = cube.dim();
        let mut data = Array3::zeros((cube.len(), rows, cols));
        for (mut dst, src) in data.axis_iter_mut(Axis(0)).zip(cube.slices()) {
            dst.assign(src.data());
        }
        let mut header = Self::base_header(Dtype::C128, data.dim(), cube.pixel_pitch());
        header.wavelengths_m = cube.wavelengths();
        Self {
            header,
            data: CubeData::C128(data),
        }
    }

    pub fn to_hypercube(&self) -> Result<HyperCube> {
        let CubeData::C128(data) = &self.data else {
            return Err(Error::Format("complex cube expected, found f64 payload".into()));
        };
        if self.header.wavelengths_m.len() != self.header.slices {
            return Err(Error::Format("complex cube needs one wavelength per slice".into()));
        }
        let slices = data
            .axis_iter(Axis(0))
            .zip(&self.header.wavelengths_m)
            .map(|(s, &l)| ComplexField::new(s.to_owned(), l, self.header.pixel_pitch_m))
            .collect::<Result<Vec<_>>>()?;
        HyperCube::new(slices)
    }

    /// Interferogram stack; slice `m` is the frame at delay `z_m`.
    pub fn from_stack(stack: &InterferogramStack, pixel_pitch: f64) -> Self {
        let data = stack
            .data()
            .view()
            .permuted_axes([2, 0, 1])
            .as_standard_layout()
            .to_owned();
        let mut header = Self::base_header(Dtype::F64, data.dim(), pixel_pitch);
        header.delta_z_m = Some(stack.delay().delta_z);
        header.n_steps = Some(stack.delay().n_steps);
        Self {
            header,
            data: CubeData::F64(data),
        }
    }

    pub fn to_stack(&self) -> Result<InterferogramStack> {
        let delay = self
            .delay()
            .ok_or_else(|| Error::Format("interferogram file lacks delta_z_m / n_steps".into()))?;
        let CubeData::F64(data) = &self.data else {
            return Err(Error::Format("interferogram file must hold f64 data".into()));
        };
        let data = data.view().permuted_axes([1, 2, 0]).as_standard_layout().to_owned();
        InterferogramStack::new(data, delay)
    }

    pub fn from_spectral(cube: &SpectralAmplitudeCube) -> Self {
        let data = cube.amplitudes().clone();
        let mut header = Self::base_header(Dtype::F64, data.dim(), cube.pixel_pitch());
        let delay = cube.grid().delay();
        header.wavelengths_m = cube.grid().wavelengths().to_vec();
        header.delta_z_m = Some(delay.delta_z);
        header.n_steps = Some(delay.n_steps);
        header.spectral_weights = Some(cube.spectral_weights().to_vec());
        Self {
            header,
            data: CubeData::F64(data),
        }
    }

    pub fn to_spectral(&self) -> Result<SpectralAmplitudeCube> {
        let delay = self
            .delay()
            .ok_or_else(|| Error::Format("spectral cube file lacks delta_z_m / n_steps".into()))?;
        let CubeData::F64(data) = &self.data else {
            return Err(Error::Format("spectral cube file must hold f64 data".into()));
        };
        let grid = WavelengthGrid::from_wavelengths(delay, &self.header.wavelengths_m)?;
        if grid.wavelengths() != self.header.wavelengths_m.as_slice() {
            return Err(Error::Format(
                "spectral cube wavelengths must be ascending grid values".into(),
            ));
        }
        let weights = self
            .header
            .spectral_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / data.dim().0 as f64; data.dim().0]);
        SpectralAmplitudeCube::new(data.clone(), grid, weights, self.header.pixel_pitch_m)
    }

    /// Real-valued 2D slice, or the modulus for complex data.
    pub fn slice_real(&self, s: usize) -> Result<Array2<f64>> {
        if s >= self.header.slices {
            return Err(Error::invalid(format!(
                "slice {s} out of range (cube has {})",
                self.header.slices
            )));
        }
        Ok(match &self.data {
            CubeData::F64(a) => a.index_axis(Axis(0), s).to_owned(),
            CubeData::C128(a) => a.index_axis(Axis(0), s).mapv(|v| v.norm()),
        })
    }
}
