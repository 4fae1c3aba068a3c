//! Ground-truth depth phantoms and thickness/phase conversion.

use std::f64::consts::PI;
use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::io::pgm;

pub const DEFAULT_MAX_DEPTH: f64 = 317e-9;

/// Per-pixel thickness of a transparent object in meters.
///
/// Phantoms are nonnegative; maps recovered from reconstructed phase are
/// relative heights and may be signed.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    heights: Array2<f64>,
    pixel_pitch: f64,
}

impl DepthMap {
    pub fn new(heights: Array2<f64>, pixel_pitch: f64) -> Result<Self> {
        if let Some(h) = heights.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(Error::invalid(format!("depth must be finite and >= 0, found {h}")));
        }
        Self::relative(heights, pixel_pitch)
    }

    /// Signed relative heights (finite only).
    pub fn relative(heights: Array2<f64>, pixel_pitch: f64) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::invalid("depth map must be nonempty"));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("depth map contains non-finite values"));
        }
        if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
            return Err(Error::invalid("pixel pitch must be > 0"));
        }
        Ok(Self { heights, pixel_pitch })
    }

    pub fn heights(&self) -> &Array2<f64> {
        &self.heights
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn dim(&self) -> (usize, usize) {
        self.heights.dim()
    }

    pub fn max(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pixels with nonzero height.
    pub fn support(&self) -> Array2<bool> {
        self.heights.mapv(|h| h != 0.0)
    }
}

/// One resolution-target element: three horizontal bars followed by three
/// vertical bars, each `size` pixels wide and `5 size` long, top-left
/// corner at (`row`, `col`). Footprint is `5 size x 11 size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarElement {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl BarElement {
    pub fn height(&self) -> usize {
        5 * self.size
    }

    pub fn width(&self) -> usize {
        11 * self.size
    }

    fn paint(&self, mask: &mut Array2<bool>) {
        let s = self.size;
        for bar in 0..3 {
            // horizontal bars stacked vertically
            for r in self.row + 2 * bar * s..self.row + (2 * bar + 1) * s {
                for c in self.col..self.col + 5 * s {
                    mask[[r, c]] = true;
                }
            }
            // vertical bars side by side
            let c0 = self.col + 6 * s + 2 * bar * s;
            for r in self.row..self.row + 5 * s {
                for c in c0..c0 + s {
                    mask[[r, c]] = true;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    #[default]
    BinaryBars,
    Graymap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub max_depth: f64,
    /// Explicit element layout; a resolution-target layout sized to the
    /// frame is generated when absent.
    pub bar_layout: Option<Vec<BarElement>>,
    /// 8-bit binary PGM (P5) image for `graymap`.
    pub graymap_source: Option<PathBuf>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            kind: PhantomKind::BinaryBars,
            max_depth: DEFAULT_MAX_DEPTH,
            bar_layout: None,
            graymap_source: None,
        }
    }
}

impl PhantomSpec {
    pub fn binary(max_depth: f64) -> Self {
        Self {
            max_depth,
            ..Self::default()
        }
    }

    pub fn graymap(source: impl Into<PathBuf>, max_depth: f64) -> Self {
        Self {
            kind: PhantomKind::Graymap,
            max_depth,
            bar_layout: None,
            graymap_source: Some(source.into()),
        }
    }
}

/// Resolution-target layout for a `rows x cols` frame: elements of
/// decreasing bar width packed on shelves from the top-left corner.
pub fn default_bar_layout(rows: usize, cols: usize) -> Vec<BarElement> {
    let margin = (rows.min(cols) / 16).max(1);
    let first = (rows.min(cols) / 16).max(1);
    let mut sizes: Vec<usize> = (0..16)
        .map(|k| ((first as f64) * 2f64.powf(-(k as f64) / 2.0)).round().max(1.0) as usize)
        .collect();
    sizes.dedup();

    let mut layout = Vec::new();
    let (mut r, mut c, mut shelf) = (margin, margin, 0usize);
    for &size in &sizes {
        let (h, w) = (5 * size, 11 * size);
        let gap = (2 * size).max(2);
        if c + w + margin > cols {
            r += shelf + gap;
            c = margin;
            shelf = 0;
        }
        if r + h + margin > rows || c + w + margin > cols {
            continue;
        }
        layout.push(BarElement { row: r, col: c, size });
        c += w + gap;
        shelf = shelf.max(h);
    }
    layout
}

/// Generates a nonnegative depth map of the requested size.
pub fn make_phantom(spec: &PhantomSpec, rows: usize, cols: usize, pixel_pitch: f64) -> Result<DepthMap> {
    if rows < 16 || cols < 16 {
        return Err(Error::invalid(format!(
            "phantoms need at least 16x16 pixels, got {rows}x{cols}"
        )));
    }
    if !(spec.max_depth.is_finite() && spec.max_depth > 0.0) {
        return Err(Error::Config(format!("max depth must be > 0, got {}", spec.max_depth)));
    }
    let heights = match spec.kind {
        PhantomKind::BinaryBars => {
            let layout = spec
                .bar_layout
                .clone()
                .unwrap_or_else(|| default_bar_layout(rows, cols));
            if layout.is_empty() {
                return Err(Error::Config("bar layout is empty".into()));
            }
            let mut mask = Array2::from_elem((rows, cols), false);
            for e in &layout {
                if e.size == 0 || e.row + e.height() > rows || e.col + e.width() > cols {
                    return Err(Error::Config(format!(
                        "bar element {e:?} exceeds the {rows}x{cols} frame"
                    )));
                }
                e.paint(&mut mask);
            }
            mask.mapv(|m| if m { spec.max_depth } else { 0.0 })
        }
        PhantomKind::Graymap => {
            let path = spec
                .graymap_source
                .as_ref()
                .ok_or_else(|| Error::Config("graymap phantom needs graymap_source".into()))?;
            let image = pgm::read_pgm(path)?;
            let (ir, ic) = image.pixels.dim();
            let scale = spec.max_depth / image.max_value as f64;
            Array2::from_shape_fn((rows, cols), |(r, c)| {
                // nearest-neighbour resampling onto the requested frame
                let sr = (r * ir) / rows;
                let sc = (c * ic) / cols;
                image.pixels[[sr, sc]] as f64 * scale
            })
        }
    };
    DepthMap::new(heights, pixel_pitch)
}

/// What to do when a phantom's phase reaches pi and will wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WrapPolicy {
    #[default]
    Warn,
    Error,
}

/// `phi = 2 pi (n - 1) h / lambda`.
pub fn thickness_to_phase(
    depth: &DepthMap,
    wavelength: f64,
    dispersion: &DispersionModel,
    policy: WrapPolicy,
) -> Result<Array2<f64>> {
    let n = dispersion.index(wavelength)?;
    let k = 2.0 * PI * (n - 1.0) / wavelength;
    let phase = depth.heights().mapv(|h| k * h);
    let peak = phase.iter().copied().fold(0.0, |a: f64, b| a.max(b.abs()));
    if peak >= PI {
        let msg = format!(
            "phantom phase reaches {peak:.3} rad at {:.1} nm and will wrap",
            wavelength * 1e9
        );
        match policy {
            WrapPolicy::Warn => log::warn!("{msg}"),
            WrapPolicy::Error => return Err(Error::Config(msg)),
        }
    }
    Ok(phase)
}

/// `h = phi lambda / (2 pi (n - 1))`.
pub fn phase_to_thickness(
    phase: &Array2<f64>,
    wavelength: f64,
    dispersion: &DispersionModel,
    pixel_pitch: f64,
) -> Result<DepthMap> {
    let n = dispersion.index(wavelength)?;
    let k = 2.0 * PI * (n - 1.0) / wavelength;
    DepthMap::relative(phase.mapv(|p| p / k), pixel_pitch)
}
