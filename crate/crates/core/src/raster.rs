//! Row-major H×W rasters.
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid { width, height, data: alloc::vec![value; width * height] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::CountMismatch {
                context: "raster data length",
                left: width * height,
                right: data.len(),
            });
        }
        Ok(Grid { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Grid { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&T> {
        if row < self.height && col < self.width {
            Some(&self.data[row * self.width + col])
        } else {
            None
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }

    /// Shape check used at module boundaries.
    pub fn expect_dims<U>(&self, other: &Grid<U>, context: &'static str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::shape(context, self.dims(), other.dims()))
        }
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (row, col): (usize, usize)) -> &T {
        assert!(row < self.height && col < self.width, "pixel ({row}, {col}) out of bounds");
        &self.data[row * self.width + col]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        assert!(row < self.height && col < self.width, "pixel ({row}, {col}) out of bounds");
        &mut self.data[row * self.width + col]
    }
}

/// Bilinear taps at continuous pixel position `(x, y)`, where the center of pixel
/// `(row, col)` sits at `(col + 0.5, row + 0.5)`.
///
/// Returns `(flat index, weight)` for the four corners, or `None` when the position
/// lies outside the hull of pixel centers. Positions exactly on the last row/column
/// are accepted with the far corner carrying zero weight.
pub fn bilinear_taps(width: usize, height: usize, x: f64, y: f64) -> Option<[(usize, f64); 4]> {
    if width == 0 || height == 0 || !x.is_finite() || !y.is_finite() {
        return None;
    }
    let gx = x - 0.5;
    let gy = y - 0.5;
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    if gx < 0.0 || gy < 0.0 || gx > max_x || gy > max_y {
        return None;
    }
    let c0 = (libm_floor(gx) as usize).min(width.saturating_sub(2));
    let r0 = (libm_floor(gy) as usize).min(height.saturating_sub(2));
    let c1 = (c0 + 1).min(width - 1);
    let r1 = (r0 + 1).min(height - 1);
    let fx = gx - c0 as f64;
    let fy = gy - r0 as f64;
    Some([
        (r0 * width + c0, (1.0 - fx) * (1.0 - fy)),
        (r0 * width + c1, fx * (1.0 - fy)),
        (r1 * width + c0, (1.0 - fx) * fy),
        (r1 * width + c1, fx * fy),
    ])
}

#[inline]
fn libm_floor(v: f64) -> f64 {
    num_traits::Float::floor(v)
}
