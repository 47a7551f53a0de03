//! Grayscale images and binary masks on a row-major H×W grid.
//!
//! Continuous coordinates follow the pixel-area convention: pixel `(i, j)`
//! covers `[i, i+1) × [j, j+1)`, so its center sits at `(i + 0.5, j + 0.5)`.
//! `i` is the row (growing downward), `j` the column (growing rightward).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                actual: vec![data.len()],
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    /// Copies the `size × size` window whose top-left corner is `(top, left)`.
    pub fn window(&self, top: usize, left: usize, size: usize) -> GrayImage {
        debug_assert!(top + size <= self.height && left + size <= self.width);
        let mut data = Vec::with_capacity(size * size);
        for i in top..top + size {
            let row = i * self.width;
            data.extend_from_slice(&self.data[row + left..row + left + size]);
        }
        GrayImage {
            height: size,
            width: size,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let var = self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    /// Lower median for even pixel counts.
    pub fn median(&self) -> f64 {
        let mut v = self.data.clone();
        let mid = (v.len() - 1) / 2;
        let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        *m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.width + j] = v;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Number of set pixels inside the `size × size` window at `(top, left)`.
    pub fn count_window(&self, top: usize, left: usize, size: usize) -> usize {
        let mut n = 0;
        for i in top..top + size {
            let row = i * self.width;
            n += self.data[row + left..row + left + size].iter().filter(|&&b| b).count();
        }
        n
    }

    /// Mean of set-pixel centers, `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut si, mut sj, mut n) = (0.0, 0.0, 0usize);
        for i in 0..self.height {
            for j in 0..self.width {
                if self.get(i, j) {
                    si += i as f64 + 0.5;
                    sj += j as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (si / n as f64, sj / n as f64))
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Pixels at or above 0.5 become set.
    pub fn from_image(image: &GrayImage) -> Mask {
        Mask {
            height: image.height,
            width: image.width,
            data: image.data.iter().map(|&v| v >= 0.5).collect(),
        }
    }
}
