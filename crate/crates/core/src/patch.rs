//! Patch placement and the mutable working image episodes operate on.

use serde::{Deserialize, Serialize};

use crate::image::{GrayImage, Mask};

/// Integer patch center. The `P × P` footprint covers rows
/// `[i - P/2, i + P/2)` and columns `[j - P/2, j + P/2)`; its geometric
/// center in continuous coordinates is exactly `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Center {
    pub i: usize,
    pub j: usize,
}

impl Center {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    pub fn as_point(self) -> (f64, f64) {
        (self.i as f64, self.j as f64)
    }

    pub fn top_left(self, patch: usize) -> (usize, usize) {
        (self.i - patch / 2, self.j - patch / 2)
    }

    pub fn distance_to(self, p: (f64, f64)) -> f64 {
        let (di, dj) = (self.i as f64 - p.0, self.j as f64 - p.1);
        (di * di + dj * dj).sqrt()
    }
}

/// Inclusive range of centers whose footprint fits inside `extent` pixels.
pub fn center_range(extent: usize, patch: usize) -> (usize, usize) {
    (patch / 2, extent - patch / 2)
}

pub fn clamp_center(i: isize, j: isize, height: usize, width: usize, patch: usize) -> Center {
    let (ilo, ihi) = center_range(height, patch);
    let (jlo, jhi) = center_range(width, patch);
    Center::new(
        i.clamp(ilo as isize, ihi as isize) as usize,
        j.clamp(jlo as isize, jhi as isize) as usize,
    )
}

pub fn fits(c: Center, height: usize, width: usize, patch: usize) -> bool {
    let h = patch / 2;
    c.i >= h && c.j >= h && c.i + h <= height && c.j + h <= width
}

/// An image that episodes may overwrite with noise, tracking which pixels
/// have been replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingImage {
    pub pixels: GrayImage,
    /// Pixels replaced by termination noise.
    pub masked: Mask,
}

impl WorkingImage {
    pub fn new(pixels: GrayImage) -> Self {
        let masked = Mask::new(pixels.height(), pixels.width());
        Self { pixels, masked }
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn patch(&self, c: Center, patch: usize) -> GrayImage {
        let (t, l) = c.top_left(patch);
        self.pixels.window(t, l, patch)
    }
}

impl From<GrayImage> for WorkingImage {
    fn from(g: GrayImage) -> Self {
        Self::new(g)
    }
}
