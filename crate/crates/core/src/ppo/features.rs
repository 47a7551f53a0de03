use crate::nn::Tensor;
use crate::patch::{Center, WorkingImage};

/// Per-output-cell overlap weights for area resampling `n` input cells to
/// `d` output cells; each row sums to one.
fn area_weights(n: usize, d: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / d as f64;
    (0..d)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n);
            (first..last)
                .filter_map(|k| {
                    let w = (hi.min(k as f64 + 1.0) - lo.max(k as f64)) / scale;
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging resize of an `h`×`w` row-major grid to `d`×`d`.
pub fn resample_area(src: &[f64], h: usize, w: usize, d: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w, "grid size");
    let rw = area_weights(h, d);
    let cw = area_weights(w, d);
    let mut rows = vec![0.0; d * w];
    for (o, ws) in rw.iter().enumerate() {
        let out = &mut rows[o * w..(o + 1) * w];
        for &(k, wt) in ws {
            for (y, x) in out.iter_mut().zip(&src[k * w..(k + 1) * w]) {
                *y += wt * x;
            }
        }
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        let row = &rows[i * w..(i + 1) * w];
        for (j, ws) in cw.iter().enumerate() {
            out[i * d + j] = ws.iter().map(|&(k, wt)| wt * row[k]).sum();
        }
    }
    out
}

/// Fraction of each output cell covered by `[lo, hi)` along one axis.
fn interval_coverage(n: usize, d: usize, lo: usize, hi: usize) -> Vec<f64> {
    area_weights(n, d)
        .iter()
        .map(|ws| ws.iter().filter(|(k, _)| (lo..hi).contains(k)).map(|(_, w)| w).sum())
        .collect()
}

/// Three `d`×`d` channels: the whole image, the patch at `c`, and the
/// patch footprint's coverage of the image grid.
pub fn build_state_features(image: &WorkingImage, c: Center, patch: usize, d: usize) -> Tensor {
    let (h, w) = (image.height(), image.width());
    let mut data = Vec::with_capacity(3 * d * d);
    data.extend(resample_area(image.pixels.as_slice(), h, w, d));
    let p = image.patch(c, patch);
    data.extend(resample_area(p.as_slice(), patch, patch, d));
    let (top, left) = c.top_left(patch);
    let ri = interval_coverage(h, d, top, top + patch);
    let cj = interval_coverage(w, d, left, left + patch);
    for a in &ri {
        data.extend(cj.iter().map(|b| a * b));
    }
    Tensor::new(vec![3, d, d], data).expect("three d×d channels")
}
