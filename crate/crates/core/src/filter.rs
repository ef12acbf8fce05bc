//! Coverage-score filtering of annotations against detected UI elements.
//!
//! For a ground-truth box `B` and detections `D_1..D_n` the coverage score is
//! `S = Σ area(B ∩ D_i) / area(B)`. Intersections are summed independently, so
//! overlapping detections can push `S` above 1. A sample is kept iff `S >= tau`.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{NormBox, NormPoint};
use crate::schema::{Annotation, DatasetManifest, GroundingSample};
use crate::{Error, Result, Scalar};

/// Detected UI elements for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet<T> {
    pub image_id: String,
    pub boxes: Vec<NormBox<T>>,
    pub detector: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionFile {
    image_id: String,
    #[serde(default)]
    detector: String,
    boxes: Vec<[f64; 4]>,
}

impl DetectionSet<f64> {
    pub fn from_json(s: &str) -> Result<Self> {
        let f: DetectionFile = serde_json::from_str(s)?;
        let boxes = f
            .boxes
            .iter()
            .map(|b| NormBox::new(b[0], b[1], b[2], b[3]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            image_id: f.image_id,
            boxes,
            detector: f.detector,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DetectionFile {
            image_id: self.image_id.clone(),
            detector: self.detector.clone(),
            boxes: self.boxes.iter().map(|b| [b.x0, b.y0, b.x1, b.y1]).collect(),
        })
        .expect("detection file serializes")
    }
}

/// Loads every `*.json` detection file in `dir`, keyed by `image_id`.
pub fn load_detections_dir(dir: &Path) -> Result<HashMap<String, DetectionSet<f64>>> {
    let mut map = HashMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let set = DetectionSet::from_json(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
        map.insert(set.image_id.clone(), set);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Coverage threshold.
    pub tau: f64,
    /// Side of the square a point annotation expands to, as a fraction of the
    /// smaller image dimension.
    pub side_l: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            side_l: 0.04,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config {
                path: "filter.tau".into(),
                msg: format!("{} is outside [0, 1]", self.tau),
            });
        }
        if !(self.side_l > 0.0 && self.side_l <= 1.0) {
            return Err(Error::Config {
                path: "filter.side_l".into(),
                msg: format!("{} is outside (0, 1]", self.side_l),
            });
        }
        Ok(())
    }
}

/// Square of side `side_l * min(width, height)` pixels centered on `p`,
/// converted back to normalized units and clipped to the unit square.
pub fn expand_point_to_box<T: Scalar>(p: &NormPoint<T>, side_l: T, image_size: (u32, u32)) -> NormBox<T> {
    let (w, h) = (T::of(image_size.0 as f64), T::of(image_size.1 as f64));
    let half_px = side_l * w.min(h) / T::of(2.0);
    let (hx, hy) = (half_px / w, half_px / h);
    let clamp = |v: T| v.max(T::zero()).min(T::one());
    NormBox::new_unchecked(clamp(p.x - hx), clamp(p.y - hy), clamp(p.x + hx), clamp(p.y + hy))
}

/// Summed intersection area of `gt` with each detection, over `area(gt)`.
pub fn coverage_score<T: Scalar>(gt: &NormBox<T>, dets: &[NormBox<T>]) -> Result<T> {
    let area = gt.area();
    if area <= T::zero() {
        return Err(Error::Degenerate);
    }
    let covered = dets
        .iter()
        .fold(T::zero(), |acc, d| acc + gt.intersection_area(d));
    Ok(covered / area)
}

/// The box a sample is screened with: box annotations as-is, point
/// annotations expanded to a square.
pub fn ground_truth_box(sample: &GroundingSample, side_l: f64) -> NormBox<f64> {
    match sample.annotation {
        Annotation::Box(b) => b,
        Annotation::Point(p) => expand_point_to_box(&p, side_l, sample.image_size),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DropReason {
    LowCoverage(f64),
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub sample: GroundingSample,
    pub reason: DropReason,
}

impl Dropped {
    pub fn score(&self) -> Option<f64> {
        match self.reason {
            DropReason::LowCoverage(s) => Some(s),
            DropReason::Degenerate => None,
        }
    }
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: DatasetManifest,
    pub dropped: Vec<Dropped>,
    /// Samples whose image has no detection file.
    pub missing: DatasetManifest,
}

enum Verdict {
    Keep,
    Drop(DropReason),
    Missing,
}

/// Splits `manifest` into kept, dropped and missing-detection samples,
/// preserving input order within each part. Kept samples gain the `filtered` tag.
pub fn filter_dataset(
    manifest: &DatasetManifest,
    detections: &HashMap<String, DetectionSet<f64>>,
    cfg: &FilterConfig,
) -> Result<FilterOutcome> {
    cfg.validate()?;
    let verdicts: Vec<Verdict> = manifest
        .samples()
        .par_iter()
        .map(|s| {
            let Some(dets) = detections.get(&s.image_id()) else {
                return Verdict::Missing;
            };
            let gt = ground_truth_box(s, cfg.side_l);
            match coverage_score(&gt, &dets.boxes) {
                Ok(score) if score >= cfg.tau => Verdict::Keep,
                Ok(score) => Verdict::Drop(DropReason::LowCoverage(score)),
                Err(_) => Verdict::Drop(DropReason::Degenerate),
            }
        })
        .collect();

    let mut out = FilterOutcome::default();
    for (s, v) in manifest.samples().iter().zip(verdicts) {
        match v {
            Verdict::Keep => {
                let mut s = s.clone();
                s.stage_tags.insert("filtered".into());
                out.kept.push(s)?;
            }
            Verdict::Drop(reason) => out.dropped.push(Dropped {
                sample: s.clone(),
                reason,
            }),
            Verdict::Missing => out.missing.push(s.clone())?,
        }
    }
    Ok(out)
}
