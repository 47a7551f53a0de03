//! Scoring: Dice overlap, Welch's t-test, the sliding-window baseline and
//! a Table-style report over several methods.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::classifier::PresenceClassifier;
use crate::error::{invalid, Error, Result};
use crate::image::Mask;
use crate::patch::{center_range, Center, WorkingImage};
use crate::phantom::Phantom;

/// `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: vec![a.height(), a.width()],
            actual: vec![b.height(), b.width()],
        });
    }
    let inter = a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| **x && **y).count();
    let total = a.area() + b.area();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance two-sample test; returns `(t, two-tailed p)`.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::SampleTooSmall(s.len()));
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(Error::ZeroVariance);
        }
        return Ok((if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY }, 0.0));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok((t, p))
}

fn grid(lo: usize, hi: usize, stride: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (lo..=hi).step_by(stride).collect();
    if g.last() != Some(&hi) {
        g.push(hi);
    }
    g
}

/// Per-pixel mean presence over every patch on the stride grid that covers
/// the pixel, thresholded at 0.5. The last row and column of centers are
/// always included so the whole image is covered.
pub fn sliding_window_segment(image: &WorkingImage, classifier: &dyn PresenceClassifier, stride: usize) -> Result<Mask> {
    if stride == 0 {
        return Err(invalid("stride must be >= 1"));
    }
    let p = classifier.patch_size();
    let (h, w) = (image.height(), image.width());
    if p > h || p > w {
        return Err(invalid("patch larger than image"));
    }
    let (ilo, ihi) = center_range(h, p);
    let (jlo, jhi) = center_range(w, p);
    let mut sum = vec![0.0; h * w];
    let mut count = vec![0u32; h * w];
    for &ci in &grid(ilo, ihi, stride) {
        for &cj in &grid(jlo, jhi, stride) {
            let c = Center::new(ci, cj);
            let prob = classifier.presence(image, c);
            let (t, l) = c.top_left(p);
            for i in t..t + p {
                for k in i * w + l..i * w + l + p {
                    sum[k] += prob;
                    count[k] += 1;
                }
            }
        }
    }
    let mut mask = Mask::new(h, w);
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            mask.set(i, j, count[k] > 0 && sum[k] / f64::from(count[k]) >= 0.5);
        }
    }
    Ok(mask)
}

/// A segmentation method under evaluation.
pub trait Segmenter {
    fn name(&self) -> String;

    fn segment(&mut self, index: usize, phantom: &Phantom) -> Result<Mask>;
}

/// Adapts a closure to [`Segmenter`].
pub struct FnSegmenter<F> {
    pub name: String,
    pub f: F,
}

impl<F: FnMut(usize, &Phantom) -> Result<Mask>> Segmenter for FnSegmenter<F> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn segment(&mut self, index: usize, phantom: &Phantom) -> Result<Mask> {
        (self.f)(index, phantom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub dice: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Images where the method produced no mask (scored against an empty mask).
    pub failures: usize,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTest {
    pub method_a: String,
    pub method_b: String,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub image_ids: Vec<String>,
    pub methods: Vec<MethodReport>,
    pub tests: Vec<PairTest>,
}

fn summarize(method: String, dice: Vec<f64>, failures: usize, seconds: f64) -> MethodReport {
    let n = dice.len() as f64;
    let mean = dice.iter().sum::<f64>() / n;
    let std = if dice.len() > 1 { mean_var(&dice).1.sqrt() } else { 0.0 };
    MethodReport {
        method,
        mean,
        std,
        failures,
        mean_seconds: seconds / n,
        dice,
    }
}

/// Whether a segmentation error means "nothing found" rather than a bug.
pub fn is_empty_result(err: &Error) -> bool {
    matches!(
        err,
        Error::InsufficientBoundaryPoints(_) | Error::NoSuccessfulEpisodes | Error::AllPointsRejected(_)
    )
}

impl EvalReport {
    /// Builds means, sample stds and all pairwise tests from per-image scores.
    pub fn from_scores(image_ids: Vec<String>, scores: Vec<(String, Vec<f64>, usize, f64)>) -> Result<Self> {
        if image_ids.is_empty() {
            return Err(invalid("no images evaluated"));
        }
        let mut methods = Vec::new();
        for (name, dice, failures, seconds) in scores {
            if dice.len() != image_ids.len() {
                return Err(Error::ShapeMismatch {
                    expected: vec![image_ids.len()],
                    actual: vec![dice.len()],
                });
            }
            methods.push(summarize(name, dice, failures, seconds));
        }
        let mut tests = Vec::new();
        for a in 0..methods.len() {
            for b in a + 1..methods.len() {
                let (t, p) = match t_test(&methods[a].dice, &methods[b].dice) {
                    Ok(tp) => tp,
                    Err(Error::ZeroVariance | Error::SampleTooSmall(_)) if methods[a].dice == methods[b].dice => (0.0, 1.0),
                    Err(Error::SampleTooSmall(_)) => (f64::NAN, f64::NAN),
                    Err(e) => return Err(e),
                };
                tests.push(PairTest {
                    method_a: methods[a].method.clone(),
                    method_b: methods[b].method.clone(),
                    t,
                    p,
                });
            }
        }
        Ok(Self {
            image_ids,
            methods,
            tests,
        })
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn write_dice_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "method,image_id,dice")?;
        for m in &self.methods {
            for (id, d) in self.image_ids.iter().zip(&m.dice) {
                writeln!(w, "{},{},{:.6}", m.method, id, d)?;
            }
        }
        Ok(())
    }

    pub fn write_summary_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "method,mean,std")?;
        for m in &self.methods {
            writeln!(w, "{},{:.6},{:.6}", m.method, m.mean, m.std)?;
        }
        Ok(())
    }

    pub fn write_tests_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "methodA,methodB,t,p")?;
        for t in &self.tests {
            writeln!(w, "{},{},{:.6},{:.6}", t.method_a, t.method_b, t.t, t.p)?;
        }
        Ok(())
    }

    /// The three CSV documents: per-image Dice, summary, pairwise tests.
    pub fn to_csv_strings(&self) -> Result<[String; 3]> {
        let mut out: [Vec<u8>; 3] = Default::default();
        self.write_dice_csv(&mut out[0])?;
        self.write_summary_csv(&mut out[1])?;
        self.write_tests_csv(&mut out[2])?;
        Ok(out.map(|b| String::from_utf8(b).expect("ascii csv")))
    }
}

pub fn image_ids(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("img{k:04}")).collect()
}

/// Scores every method on every image against the ground-truth masks.
pub fn evaluate(dataset: &[Phantom], methods: &mut [Box<dyn Segmenter + '_>]) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(invalid("empty evaluation set"));
    }
    let mut scores = Vec::new();
    for m in methods.iter_mut() {
        let mut dice_list = Vec::with_capacity(dataset.len());
        let mut failures = 0;
        let start = Instant::now();
        for (k, ph) in dataset.iter().enumerate() {
            let mask = match m.segment(k, ph) {
                Ok(mask) => mask,
                Err(e) if is_empty_result(&e) => {
                    failures += 1;
                    Mask::new(ph.height(), ph.width())
                }
                Err(e) => return Err(e),
            };
            dice_list.push(dice(&mask, &ph.mask)?);
        }
        scores.push((m.name(), dice_list, failures, start.elapsed().as_secs_f64()));
    }
    EvalReport::from_scores(image_ids(dataset.len()), scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{CenterOracle, ConstantClassifier};
    use crate::image::GrayImage;
    use crate::phantom::{generate_dataset, PhantomConfig};
    use proptest::prelude::*;

    fn rect(h: usize, w: usize, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> Mask {
        Mask::from_fn(h, w, |i, j| r.contains(&i) && c.contains(&j))
    }

    #[test]
    fn dice_cases() {
        let a = rect(20, 20, 0..10, 0..10);
        let b = rect(20, 20, 0..10, 5..15);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &rect(20, 20, 10..20, 10..20)).unwrap(), 0.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&Mask::new(4, 4), &Mask::new(4, 4)).unwrap(), 1.0);
        assert!(dice(&a, &Mask::new(4, 4)).is_err());
    }

    #[test]
    fn welch_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let (t, p) = t_test(&a, &b).unwrap();
        assert!((t + 1.0).abs() < 1e-12);
        assert!(p > 0.3 && p < 0.4, "{p}");
        let (t0, p0) = t_test(&a, &a).unwrap();
        assert_eq!((t0, p0), (0.0, 1.0));
        let scaled: Vec<f64> = a.iter().map(|x| 3.5 * x).collect();
        let scaled_b: Vec<f64> = b.iter().map(|x| 3.5 * x).collect();
        assert!((t_test(&scaled, &scaled_b).unwrap().0 - t).abs() < 1e-12);
        assert!(matches!(t_test(&[1.0, 1.0], &[1.0, 1.0]), Err(Error::ZeroVariance)));
        assert!(matches!(t_test(&[1.0], &a), Err(Error::SampleTooSmall(1))));
    }

    #[test]
    fn welch_matches_hand_computation_for_unequal_samples() {
        let a = [0.7, 0.8, 0.75, 0.9];
        let b = [0.6, 0.65, 0.5, 0.7, 0.55, 0.62];
        let (ma, mb): (f64, f64) = (0.7875, 0.603_333_333_333_333_3);
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / 3.0;
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / 5.0;
        let t = (ma - mb) / (va / 4.0 + vb / 6.0).sqrt();
        assert!((t_test(&a, &b).unwrap().0 - t).abs() < 1e-9);
    }

    #[test]
    fn constant_classifiers_give_full_and_empty_masks() {
        let img = WorkingImage::new(GrayImage::filled(96, 96, 0.3));
        let full = sliding_window_segment(&img, &ConstantClassifier { patch_size: 24, prob: 1.0 }, 4).unwrap();
        assert_eq!(full.area(), 96 * 96);
        let none = sliding_window_segment(&img, &ConstantClassifier { patch_size: 24, prob: 0.0 }, 4).unwrap();
        assert_eq!(none.area(), 0);
        let odd = sliding_window_segment(&img, &ConstantClassifier { patch_size: 24, prob: 1.0 }, 5).unwrap();
        assert_eq!(odd.area(), 96 * 96);
    }

    #[test]
    fn center_oracle_sliding_window_is_accurate() {
        for ph in generate_dataset(3, &PhantomConfig::default(), 12).unwrap() {
            let clf = CenterOracle {
                mask: ph.mask.clone(),
                patch_size: 24,
            };
            let m = sliding_window_segment(&WorkingImage::new(ph.image.clone()), &clf, 1).unwrap();
            assert!(dice(&m, &ph.mask).unwrap() >= 0.8);
        }
    }

    struct Bright;

    impl PresenceClassifier for Bright {
        fn patch_size(&self) -> usize {
            8
        }
        fn presence(&self, image: &WorkingImage, c: Center) -> f64 {
            image.patch(c, 8).mean()
        }
    }

    #[test]
    fn sliding_window_translates_with_the_image() {
        let s = 4;
        let base = |di: usize, dj: usize| {
            GrayImage::from_fn(64, 64, |i, j| {
                let (y, x) = (i as f64 - 30.0 - di as f64, j as f64 - 28.0 - dj as f64);
                if y * y + x * x < 120.0 {
                    0.9
                } else {
                    0.1
                }
            })
        };
        let a = sliding_window_segment(&WorkingImage::new(base(0, 0)), &Bright, s).unwrap();
        let b = sliding_window_segment(&WorkingImage::new(base(s, s)), &Bright, s).unwrap();
        for i in 12..50 {
            for j in 12..50 {
                assert_eq!(a.get(i, j), b.get(i + s, j + s), "({i},{j})");
            }
        }
    }

    #[test]
    fn report_for_oracle_and_duplicates() {
        let ds = generate_dataset(4, &PhantomConfig::default(), 3).unwrap();
        let mut methods: Vec<Box<dyn Segmenter>> = vec![Box::new(FnSegmenter {
            name: "truth".into(),
            f: |_: usize, p: &Phantom| Ok(p.mask.clone()),
        })];
        let single = evaluate(&ds, &mut methods).unwrap();
        assert_eq!(single.methods[0].mean, 1.0);
        assert_eq!(single.methods[0].std, 0.0);
        assert!(single.tests.is_empty());

        let sw = |_: usize, p: &Phantom| {
            let clf = CenterOracle {
                mask: p.mask.clone(),
                patch_size: 24,
            };
            sliding_window_segment(&WorkingImage::new(p.image.clone()), &clf, 4)
        };
        let mut methods: Vec<Box<dyn Segmenter>> = vec![
            Box::new(FnSegmenter { name: "a".into(), f: sw }),
            Box::new(FnSegmenter { name: "b".into(), f: sw }),
        ];
        let rep = evaluate(&ds, &mut methods).unwrap();
        assert_eq!(rep.tests.len(), 1);
        assert_eq!(rep.tests[0].p, 1.0);
        let again = evaluate(&ds, &mut methods).unwrap();
        assert_eq!(rep.to_csv_strings().unwrap(), again.to_csv_strings().unwrap());
        let [d, s, t] = rep.to_csv_strings().unwrap();
        assert_eq!(d.lines().count(), 1 + 8);
        assert!(s.starts_with("method,mean,std\n"));
        assert!(t.starts_with("methodA,methodB,t,p\n"));
    }

    #[test]
    fn failed_segmentation_scores_zero() {
        let ds = generate_dataset(2, &PhantomConfig::default(), 3).unwrap();
        let mut methods: Vec<Box<dyn Segmenter>> = vec![Box::new(FnSegmenter {
            name: "none".into(),
            f: |_: usize, _: &Phantom| Err(Error::NoSuccessfulEpisodes),
        })];
        let rep = evaluate(&ds, &mut methods).unwrap();
        assert_eq!(rep.methods[0].dice, vec![0.0, 0.0]);
        assert_eq!(rep.methods[0].failures, 2);
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        proptest::collection::vec(any::<bool>(), 64).prop_map(|v| Mask::from_fn(8, 8, |i, j| v[i * 8 + j]))
    }

    proptest! {
        #[test]
        fn dice_is_symmetric(a in arb_mask(), b in arb_mask()) {
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            let d = dice(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
