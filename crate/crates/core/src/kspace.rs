//! Cartesian k-space simulation.
//!
//! Images are real `H x W` grids stored row-major. The forward transform is
//! the orthonormal 2-D DFT with the spectrum centered: the DC coefficient sits
//! at row `H / 2`, column `W / 2` (integer division), so a block of central
//! columns is a block of low horizontal frequencies. Acquisition happens one
//! whole column at a time; a [`ColumnMask`] records which columns are measured.

use std::cell::RefCell;
use std::fmt;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: usize = 8;

/// A real-valued image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < MIN_IMAGE_SIDE || width < MIN_IMAGE_SIDE {
            return Err(Error::invalid(format!(
                "image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::invalid(format!(
                "expected {} pixels for a {height}x{width} image, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("pixel {i} is not finite")));
        }
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Image::new(height, width, vec![0.0; height * width])
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Image::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Complex k-space samples with the DC term at `(height / 2, width / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceGrid {
    height: usize,
    width: usize,
    values: Vec<Complex64>,
}

impl KSpaceGrid {
    pub fn new(height: usize, width: usize, values: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::invalid(format!(
                "k-space grid {height}x{width} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("k-space values must be finite"));
        }
        Ok(KSpaceGrid {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.width + col]
    }

    /// Euclidean norm over all coefficients.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// The set of measured k-space columns.
///
/// Masks are values: [`ColumnMask::add_column`] returns a new mask and leaves
/// the receiver untouched.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ColumnMask {
    selected: Vec<bool>,
    count: usize,
}

impl ColumnMask {
    pub fn empty(width: usize) -> Self {
        ColumnMask {
            selected: vec![false; width],
            count: 0,
        }
    }

    pub fn full(width: usize) -> Self {
        ColumnMask {
            selected: vec![true; width],
            count: width,
        }
    }

    pub fn from_selected(selected: Vec<bool>) -> Self {
        let count = selected.iter().filter(|&&s| s).count();
        ColumnMask { selected, count }
    }

    /// Builds a mask of `width` columns with the given indices set.
    pub fn from_columns(width: usize, columns: &[usize]) -> Result<Self> {
        let mut selected = vec![false; width];
        for &c in columns {
            if c >= width {
                return Err(Error::invalid(format!(
                    "column {c} out of range for width {width}"
                )));
            }
            selected[c] = true;
        }
        Ok(ColumnMask::from_selected(selected))
    }

    pub fn width(&self) -> usize {
        self.selected.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_full(&self) -> bool {
        self.count == self.selected.len()
    }

    pub fn is_selected(&self, column: usize) -> bool {
        self.selected[column]
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
    }

    pub fn unmeasured(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (!s).then_some(i))
    }

    /// Returns a copy of this mask with `index` measured as well.
    pub fn add_column(&self, index: usize) -> Result<ColumnMask> {
        if index >= self.width() {
            return Err(Error::invalid(format!(
                "column {index} out of range for width {}",
                self.width()
            )));
        }
        if self.selected[index] {
            return Err(Error::Precondition(format!(
                "column {index} is already measured"
            )));
        }
        let mut next = self.clone();
        next.selected[index] = true;
        next.count += 1;
        Ok(next)
    }

    /// Column-wise conjunction.
    pub fn intersect(&self, other: &ColumnMask) -> Result<ColumnMask> {
        if self.width() != other.width() {
            return Err(Error::invalid("mask widths differ"));
        }
        Ok(ColumnMask::from_selected(
            self.selected
                .iter()
                .zip(&other.selected)
                .map(|(a, b)| *a && *b)
                .collect(),
        ))
    }

    /// Big-endian hex of the mask read as an integer with bit `i` set when
    /// column `i` is measured, zero-padded to `2 * ceil(width / 8)` digits.
    pub fn to_hex(&self) -> String {
        let nbytes = self.width().div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        for c in self.columns() {
            // byte 0 is the most significant
            bytes[nbytes - 1 - c / 8] |= 1 << (c % 8);
        }
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Inverse of [`ColumnMask::to_hex`].
    pub fn from_hex(width: usize, hex: &str) -> Result<ColumnMask> {
        let nbytes = width.div_ceil(8);
        if hex.len() != 2 * nbytes || !hex.is_ascii() {
            return Err(Error::invalid(format!(
                "mask hex `{hex}` must have {} digits for width {width}",
                2 * nbytes
            )));
        }
        let mut selected = vec![false; width];
        for (k, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).map_err(|_| Error::invalid("bad hex"))?;
            let byte = u8::from_str_radix(s, 16)
                .map_err(|_| Error::invalid(format!("bad hex digit pair `{s}`")))?;
            let base = (nbytes - 1 - k) * 8;
            for bit in 0..8 {
                if byte & (1 << bit) != 0 {
                    let c = base + bit;
                    if c >= width {
                        return Err(Error::invalid(format!(
                            "mask hex `{hex}` sets column {c} beyond width {width}"
                        )));
                    }
                    selected[c] = true;
                }
            }
        }
        Ok(ColumnMask::from_selected(selected))
    }
}

impl fmt::Debug for ColumnMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ColumnMask")
            .field("width", &self.width())
            .field("columns", &self.columns().collect::<Vec<_>>())
            .finish()
    }
}

/// Contiguous block of `budget` low-frequency columns starting at
/// `(width - budget) / 2`.
pub fn init_center_mask(width: usize, budget: usize) -> Result<ColumnMask> {
    if budget == 0 || budget > width {
        return Err(Error::invalid(format!(
            "initial budget {budget} must lie in 1..={width}"
        )));
    }
    let start = (width - budget) / 2;
    let mut selected = vec![false; width];
    selected[start..start + budget].fill(true);
    Ok(ColumnMask::from_selected(selected))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized 2-D FFT of a row-major buffer.
fn fft2_in_place(data: &mut [Complex64], height: usize, width: usize, direction: FftDirection) {
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (
            p.plan_fft(width, direction),
            p.plan_fft(height, direction),
        )
    });
    row_fft.process(data);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
}

/// Moves index 0 to `n / 2` along both axes (or back, when `inverse`).
fn shift(data: &[Complex64], height: usize, width: usize, inverse: bool) -> Vec<Complex64> {
    let (dr, dc) = (height / 2, width / 2);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..height {
        for c in 0..width {
            let (sr, sc) = if inverse {
                ((r + dr) % height, (c + dc) % width)
            } else {
                ((r + height - dr) % height, (c + width - dc) % width)
            };
            out[r * width + c] = data[sr * width + sc];
        }
    }
    out
}

/// Orthonormal, centered 2-D DFT.
pub fn forward_transform(img: &Image) -> KSpaceGrid {
    let (h, w) = (img.height, img.width);
    let mut data: Vec<Complex64> = img.pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    fft2_in_place(&mut data, h, w, FftDirection::Forward);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut values = shift(&data, h, w, false);
    values.iter_mut().for_each(|v| *v *= scale);
    KSpaceGrid {
        height: h,
        width: w,
        values,
    }
}

/// Exact inverse of [`forward_transform`]; returns the complex image row-major.
pub fn inverse_transform(ks: &KSpaceGrid) -> Vec<Complex64> {
    let (h, w) = (ks.height, ks.width);
    let mut data = shift(&ks.values, h, w, true);
    fft2_in_place(&mut data, h, w, FftDirection::Inverse);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= scale);
    data
}

/// Keeps the measured columns of `ks` and zeroes everything else.
pub fn apply_mask(ks: &KSpaceGrid, mask: &ColumnMask) -> Result<KSpaceGrid> {
    if mask.width() != ks.width {
        return Err(Error::invalid(format!(
            "mask width {} does not match k-space width {}",
            mask.width(),
            ks.width
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let values = ks
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| if mask.selected[i % ks.width] { v } else { zero })
        .collect();
    Ok(KSpaceGrid {
        height: ks.height,
        width: ks.width,
        values,
    })
}
