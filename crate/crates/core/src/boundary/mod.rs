//! Inference-time delineation: run episodes from the image edges, keep the
//! termination centers as boundary points, and fill the polygon they span.

pub mod geometry;

use serde::{Deserialize, Serialize};

use crate::classifier::PresenceClassifier;
use crate::env::{run_episode, Controller, EnvConfig, ImageSession};
use crate::error::{invalid, Error, Result};
use crate::image::{GrayImage, Mask};
use crate::patch::{center_range, Center};
use crate::pgm;

pub use geometry::{contains, rasterize, Point, Polygon};

/// Scale at which the outlier radius is specified.
pub const REFERENCE_SIZE: f64 = 360.0;
pub const REFERENCE_RADIUS: f64 = 10.0;

/// Outlier radius for an image whose larger side is `size`.
pub fn scaled_radius(size: usize) -> f64 {
    REFERENCE_RADIUS * size as f64 / REFERENCE_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRule {
    /// Drop points farther than the radius from the mean point.
    MeanDistance,
    /// Drop points whose distance to the mean differs from the median such
    /// distance by more than the radius.
    RadialMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub episodes: usize,
    pub outlier_rule: OutlierRule,
    /// Overrides the scaled reference radius when set.
    pub outlier_radius: Option<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            episodes: 24,
            outlier_rule: OutlierRule::RadialMedian,
            outlier_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPointSet {
    pub raw: Vec<Point>,
    pub kept: Vec<Point>,
    pub rejected: Vec<Point>,
    pub mean: Point,
    pub radius: f64,
}

/// Van der Corput radical inverse in base 2.
fn radical_inverse(mut k: usize) -> f64 {
    let (mut x, mut f) = (0.0, 0.5);
    while k > 0 {
        if k & 1 == 1 {
            x += f;
        }
        k >>= 1;
        f *= 0.5;
    }
    x
}

/// Start centers for `m` inference episodes: edges cycle top, right,
/// bottom, left; positions along each edge follow a low-discrepancy order.
pub fn start_schedule(m: usize, height: usize, width: usize, patch: usize) -> Vec<Center> {
    let per = m.div_ceil(4).max(1);
    let (ilo, ihi) = center_range(height, patch);
    let (jlo, jhi) = center_range(width, patch);
    let at = |lo: usize, hi: usize, u: f64| (lo as f64 + u * (hi - lo) as f64).round() as usize;
    (0..m)
        .map(|k| {
            let u = (radical_inverse(k / 4) + 0.5 / per as f64) % 1.0;
            match k % 4 {
                0 => Center::new(ilo, at(jlo, jhi, u)),
                1 => Center::new(at(ilo, ihi, u), jhi),
                2 => Center::new(ihi, at(jlo, jhi, u)),
                _ => Center::new(at(ilo, ihi, u), jlo),
            }
        })
        .collect()
}

/// Runs `episodes` scheduled episodes on one image (noise masks accumulate)
/// and returns the centers where the classifier fired.
pub fn collect_boundary_points(
    image: &GrayImage,
    controller: &mut dyn Controller,
    classifier: &dyn PresenceClassifier,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    let centre = (image.height() as f64 / 2.0, image.width() as f64 / 2.0);
    let mut session = ImageSession::with_centroid(image.clone(), centre, env)?;
    let starts = start_schedule(episodes, image.height(), image.width(), env.patch_size);
    let mut points = Vec::new();
    for (m, start) in starts.into_iter().enumerate() {
        let traj = run_episode(&mut session, controller, classifier, Some(start), m as u64, seed)?;
        if traj.terminated {
            points.push(traj.final_center().expect("terminated after a step").as_point());
        }
    }
    if points.is_empty() {
        return Err(Error::NoSuccessfulEpisodes);
    }
    Ok(points)
}

pub fn mean_point(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (si, sj) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    (si / n, sj / n)
}

fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn split(points: &[Point], mean: Point, radius: f64, keep: impl Fn(&Point) -> bool) -> Result<BoundaryPointSet> {
    let (kept, rejected): (Vec<Point>, Vec<Point>) = points.iter().partition(|p| keep(p));
    if kept.is_empty() {
        return Err(Error::AllPointsRejected(points.len()));
    }
    Ok(BoundaryPointSet {
        raw: points.to_vec(),
        kept,
        rejected,
        mean,
        radius,
    })
}

/// Single pass: drop every point farther than `radius` from the mean of all points.
pub fn reject_outliers(points: &[Point], radius: f64) -> Result<BoundaryPointSet> {
    if points.is_empty() {
        return Err(Error::InsufficientBoundaryPoints(0));
    }
    let mean = mean_point(points);
    split(points, mean, radius, |p| dist(*p, mean) <= radius)
}

/// Single pass: drop points whose distance to the mean differs from the
/// median distance by more than `radius`.
pub fn reject_radial_outliers(points: &[Point], radius: f64) -> Result<BoundaryPointSet> {
    if points.is_empty() {
        return Err(Error::InsufficientBoundaryPoints(0));
    }
    let mean = mean_point(points);
    let mut d: Vec<f64> = points.iter().map(|p| dist(*p, mean)).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    split(points, mean, radius, |p| (dist(*p, mean) - median).abs() <= radius)
}

pub fn apply_outlier_rule(points: &[Point], rule: OutlierRule, radius: f64) -> Result<BoundaryPointSet> {
    match rule {
        OutlierRule::MeanDistance => reject_outliers(points, radius),
        OutlierRule::RadialMedian => reject_radial_outliers(points, radius),
    }
}

/// Orders points by angle about their mean; equal angles fall back to
/// radius, then input order.
pub fn build_polygon(points: &[Point]) -> Result<Polygon> {
    if points.len() < 3 {
        return Err(Error::InsufficientBoundaryPoints(points.len()));
    }
    let m = mean_point(points);
    let mut keyed: Vec<(f64, f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(k, p)| ((p.0 - m.0).atan2(p.1 - m.1), dist(*p, m), k))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    Polygon::new(keyed.into_iter().map(|(_, _, k)| points[k]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: Mask,
    pub polygon: Polygon,
    pub points: BoundaryPointSet,
}

#[derive(Serialize)]
struct SegmentationJson<'a> {
    polygon: &'a Polygon,
    points: &'a BoundaryPointSet,
}

impl Segmentation {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SegmentationJson {
            polygon: &self.polygon,
            points: &self.points,
        })?)
    }
}

/// Collect, filter, connect and fill.
pub fn segment(
    image: &GrayImage,
    controller: &mut dyn Controller,
    classifier: &dyn PresenceClassifier,
    env: &EnvConfig,
    config: &InferenceConfig,
    seed: u64,
) -> Result<Segmentation> {
    if config.episodes == 0 {
        return Err(invalid("inference needs at least one episode"));
    }
    let raw = collect_boundary_points(image, controller, classifier, env, config.episodes, seed)?;
    if raw.len() < 3 {
        return Err(Error::InsufficientBoundaryPoints(raw.len()));
    }
    let radius = config
        .outlier_radius
        .unwrap_or_else(|| scaled_radius(image.height().max(image.width())));
    let points = apply_outlier_rule(&raw, config.outlier_rule, radius)?;
    let polygon = build_polygon(&points.kept)?;
    let mask = rasterize(&polygon, image.height(), image.width());
    Ok(Segmentation { mask, polygon, points })
}

/// RGB overlay: image in gray, polygon outline in red, kept points in
/// green, rejected points in blue. Returns PPM bytes.
pub fn render_overlay(image: &GrayImage, seg: &Segmentation) -> Vec<u8> {
    let (h, w) = image.shape();
    let mut rgb: Vec<u8> = image.as_slice().iter().flat_map(|&v| [pgm::quantize(v); 3]).collect();
    let mut put = |i: f64, j: f64, c: [u8; 3]| {
        if i >= 0.0 && j >= 0.0 && (i as usize) < h && (j as usize) < w {
            let k = 3 * (i as usize * w + j as usize);
            rgb[k..k + 3].copy_from_slice(&c);
        }
    };
    for (a, b) in seg.polygon.edges() {
        let n = (dist(a, b).ceil() as usize * 2).max(1);
        for s in 0..=n {
            let t = s as f64 / n as f64;
            put(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), [255, 0, 0]);
        }
    }
    for p in &seg.points.kept {
        put(p.0, p.1, [0, 255, 0]);
    }
    for p in &seg.points.rejected {
        put(p.0, p.1, [0, 0, 255]);
    }
    pgm::encode_ppm(h, w, &rgb)
}
