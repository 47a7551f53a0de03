//! Synthetic ultrasound-like phantoms with exact ground truth.
//!
//! The region of interest is a smooth star-convex blob whose radius is a
//! truncated Fourier series in the polar angle. Intensities are a flat
//! background plus a contrast step inside the ROI, optionally darkened by an
//! interior shadow wedge, then multiplied by log-normal speckle.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boundary::geometry::{rasterize, Point, Polygon};
use crate::error::{invalid, Result};
use crate::image::{GrayImage, Mask};
use crate::rng::{mix_seed, purpose, stream};

/// Shadow pixels keep this fraction of their intensity.
pub const SHADOW_ATTENUATION: f64 = 0.3;
/// Shadow wedges stop at this fraction of the local ROI radius.
const SHADOW_DEPTH: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    /// Patch size of the downstream controller; sets the ROI's border margin.
    pub patch_size: usize,
    pub radius_mean: f64,
    pub radius_jitter: f64,
    pub n_harmonics: usize,
    pub speckle_sigma: f64,
    pub shadow_probability: f64,
    pub shadow_max_fraction: f64,
    pub contrast: f64,
    pub background: f64,
    pub polygon_vertices: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 96,
            width: 96,
            patch_size: 24,
            radius_mean: 30.0,
            radius_jitter: 0.15,
            n_harmonics: 3,
            speckle_sigma: 0.25,
            shadow_probability: 0.3,
            shadow_max_fraction: 0.1,
            contrast: 0.35,
            background: 0.3,
            polygon_vertices: 128,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.patch_size;
        if p < 2 || !p.is_multiple_of(2) {
            return Err(invalid(format!("patch_size must be even and >= 2, got {p}")));
        }
        if self.height < 4 * p || self.width < 4 * p {
            return Err(invalid(format!(
                "image {}x{} smaller than 4 x patch size {p}",
                self.height, self.width
            )));
        }
        if !(0.0..1.0).contains(&self.radius_jitter) {
            return Err(invalid("radius_jitter must lie in [0, 1)"));
        }
        if self.radius_mean <= 0.0 || !self.radius_mean.is_finite() {
            return Err(invalid("radius_mean must be positive"));
        }
        let half = self.height.min(self.width) as f64 / 2.0;
        let rmax = self.max_radius();
        if rmax >= half {
            return Err(invalid(format!(
                "ROI does not fit: radius_mean x (1 + jitter) = {rmax} >= {half}"
            )));
        }
        if rmax > half - (p / 2) as f64 {
            return Err(invalid(format!(
                "ROI radius {rmax} leaves less than patch_size/2 = {} px of border margin",
                p / 2
            )));
        }
        if self.n_harmonics == 0 && self.radius_jitter > 0.0 {
            return Err(invalid("radius_jitter needs n_harmonics >= 1"));
        }
        if self.speckle_sigma < 0.0 || !self.speckle_sigma.is_finite() {
            return Err(invalid("speckle_sigma must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.shadow_probability) {
            return Err(invalid("shadow_probability must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.shadow_max_fraction) {
            return Err(invalid("shadow_max_fraction must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.contrast) || !(0.0..=1.0).contains(&self.background) {
            return Err(invalid("contrast and background must lie in [0, 1]"));
        }
        if self.background + self.contrast > 1.0 {
            return Err(invalid("background + contrast exceeds 1"));
        }
        if self.polygon_vertices < 8 {
            return Err(invalid("polygon_vertices must be >= 8"));
        }
        Ok(())
    }

    pub fn max_radius(&self) -> f64 {
        self.radius_mean * (1.0 + self.radius_jitter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: GrayImage,
    pub mask: Mask,
    pub gt_polygon: Polygon,
    /// Mean of mask-pixel centers.
    pub centroid: Point,
    /// Pixels darkened by the shadow artefact, if one was drawn.
    pub shadow: Option<Mask>,
}

impl Phantom {
    /// Builds a phantom around a hand-made polygon; mask and centroid follow from it.
    pub fn from_polygon(image: GrayImage, gt_polygon: Polygon) -> Result<Self> {
        let mask = rasterize(&gt_polygon, image.height(), image.width());
        let centroid = mask
            .centroid()
            .ok_or_else(|| invalid("polygon covers no pixel centers"))?;
        Ok(Self {
            image,
            mask,
            gt_polygon,
            centroid,
            shadow: None,
        })
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            centroid: [self.centroid.0, self.centroid.1],
            polygon: self.gt_polygon.vertices().iter().map(|&(i, j)| [i, j]).collect(),
        }
    }

    pub fn from_files(image: &Path, sidecar: &Path) -> Result<Self> {
        let image = crate::pgm::load_pgm(image)?;
        let side: Sidecar = serde_json::from_slice(&fs::read(sidecar)?)?;
        let poly = Polygon::new(side.polygon.iter().map(|p| (p[0], p[1])).collect())?;
        let mut ph = Phantom::from_polygon(image, poly)?;
        ph.centroid = (side.centroid[0], side.centroid[1]);
        Ok(ph)
    }
}

/// JSON sidecar: `{ "centroid": [i, j], "polygon": [[i, j], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub centroid: [f64; 2],
    pub polygon: Vec<[f64; 2]>,
}

struct Shape {
    center: Point,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
    radius_mean: f64,
}

impl Shape {
    fn radius(&self, theta: f64) -> f64 {
        let wobble: f64 = self
            .amplitudes
            .iter()
            .zip(&self.phases)
            .enumerate()
            .map(|(h, (a, phi))| a * ((h + 1) as f64 * theta + phi).cos())
            .sum();
        self.radius_mean * (1.0 + wobble)
    }

    fn point(&self, theta: f64) -> Point {
        let r = self.radius(theta);
        (self.center.0 + r * theta.sin(), self.center.1 + r * theta.cos())
    }
}

pub fn generate_phantom(config: &PhantomConfig, seed: u64) -> Result<Phantom> {
    config.validate()?;
    let mut rng = stream(seed, purpose::PHANTOM, 0);
    let (h, w) = (config.height, config.width);
    let n = config.n_harmonics;
    let amp = if n == 0 { 0.0 } else { config.radius_jitter / n as f64 };
    let amplitudes: Vec<f64> = (0..n).map(|_| rng.random_range(-amp..=amp)).collect();
    let phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    let rmax = config.radius_mean * (1.0 + amplitudes.iter().map(|a| a.abs()).sum::<f64>());

    // keep every mask pixel at least patch_size/2 from the border
    let margin = (config.patch_size / 2) as f64 + rmax;
    let mut place = |extent: usize| {
        let (lo, hi) = (margin, extent as f64 - margin);
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            extent as f64 / 2.0
        }
    };
    let center = (place(h), place(w));
    let shape = Shape {
        center,
        amplitudes,
        phases,
        radius_mean: config.radius_mean,
    };

    let nv = config.polygon_vertices;
    let vertices = (0..nv).map(|k| shape.point(TAU * k as f64 / nv as f64)).collect();
    let gt_polygon = Polygon::new(vertices)?;
    let mask = rasterize(&gt_polygon, h, w);
    let centroid = mask
        .centroid()
        .ok_or_else(|| invalid("ROI covers no pixel centers"))?;

    let shadow = if rng.random::<f64>() < config.shadow_probability {
        Some(draw_shadow(&shape, &mask, config.shadow_max_fraction, &mut rng))
    } else {
        None
    };

    let inside = config.background + config.contrast;
    let mut image = GrayImage::from_fn(h, w, |i, j| {
        if !mask.get(i, j) {
            config.background
        } else if shadow.as_ref().is_some_and(|s| s.get(i, j)) {
            inside * SHADOW_ATTENUATION
        } else {
            inside
        }
    });

    if config.speckle_sigma > 0.0 {
        let s = config.speckle_sigma;
        for v in image.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (*v * (s * z - 0.5 * s * s).exp()).clamp(0.0, 1.0);
        }
    }

    Ok(Phantom {
        image,
        mask,
        gt_polygon,
        centroid,
        shadow,
    })
}

/// Wedge from the shape center spanning `width` radians and reaching
/// `SHADOW_DEPTH` of the local radius, so it never touches the outline.
fn draw_shadow(shape: &Shape, mask: &Mask, max_fraction: f64, rng: &mut crate::rng::Rng) -> Mask {
    let max_width = TAU * max_fraction / (SHADOW_DEPTH * SHADOW_DEPTH);
    let width = rng.random_range(0.3..1.0f64).min(max_width);
    let start = rng.random_range(0.0..TAU);
    let (ci, cj) = shape.center;
    Mask::from_fn(mask.height(), mask.width(), |i, j| {
        if !mask.get(i, j) {
            return false;
        }
        let (di, dj) = (i as f64 + 0.5 - ci, j as f64 + 0.5 - cj);
        let theta = di.atan2(dj).rem_euclid(TAU);
        let rel = (theta - start).rem_euclid(TAU);
        rel <= width && (di * di + dj * dj).sqrt() < SHADOW_DEPTH * shape.radius(theta)
    })
}

/// Phantom `k` is generated from `mix_seed(seed, k)`.
pub fn generate_dataset(n: usize, config: &PhantomConfig, seed: u64) -> Result<Vec<Phantom>> {
    if n == 0 {
        return Err(invalid("dataset size must be >= 1"));
    }
    (0..n)
        .map(|k| generate_phantom(config, mix_seed(seed, k as u64)))
        .collect()
}

pub fn write_phantom(ph: &Phantom, dir: &Path, stem: &str) -> Result<Vec<String>> {
    let img = format!("{stem}.pgm");
    let mask = format!("{stem}_mask.pgm");
    let side = format!("{stem}.json");
    crate::pgm::save_pgm(&ph.image, dir.join(&img))?;
    crate::pgm::save_mask_pgm(&ph.mask, dir.join(&mask))?;
    fs::write(dir.join(&side), serde_json::to_vec_pretty(&ph.sidecar())?)?;
    Ok(vec![img, mask, side])
}
