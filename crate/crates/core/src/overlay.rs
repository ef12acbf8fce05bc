//! Multi-window overlay synthesis.
//!
//! Window crops are pasted onto a desktop background. A placement maps the
//! window's unit square to the background square `[o, o + scale]` on each axis
//! (background-normalized units), so window-local annotations transfer with
//! `v -> v * scale + o`. Windows are painted in ascending `z_order`; an
//! annotation survives when less than half of it is covered by higher windows.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use image::{imageops, ImageFormat, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::union_area_within;
use crate::schema::{quantize_3dp, Annotation, DatasetManifest, GroundingSample};
use crate::{Error, Point, Rect, Result};

pub const OVERLAY_TAG: &str = "synthetic/overlay";

/// A pre-rendered application window with window-local annotations.
#[derive(Debug, Clone)]
pub struct WindowAsset {
    pub name: String,
    pub image: RgbImage,
    pub annotations: Vec<(String, Rect)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationEntry {
    instruction: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

impl WindowAsset {
    pub fn new(name: impl Into<String>, image: RgbImage, annotations: Vec<(String, Rect)>) -> Result<Self> {
        let name = name.into();
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Asset(format!("{name}: empty window image")));
        }
        for (_, b) in &annotations {
            Rect::new(b.x0, b.y0, b.x1, b.y1).map_err(|e| Error::Asset(format!("{name}: {e}")))?;
        }
        Ok(Self {
            name,
            image,
            annotations,
        })
    }

    /// Reads `<dir>/image.png` and `<dir>/annotations.json`.
    ///
    /// The annotation file is a JSON array of `{"instruction", "box": [x0, y0, x1, y1]}`.
    pub fn load(dir: &Path) -> Result<Self> {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let img_path = dir.join("image.png");
        let image = image::open(&img_path)
            .map_err(|e| Error::Asset(format!("{}: {e}", img_path.display())))?
            .to_rgb8();
        let ann_path = dir.join("annotations.json");
        let text = std::fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
        let entries: Vec<AnnotationEntry> =
            serde_json::from_str(&text).map_err(|e| Error::Asset(format!("{}: {e}", ann_path.display())))?;
        let annotations = entries
            .into_iter()
            .map(|a| Ok((a.instruction, Rect::from_corners(a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3])?)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Asset(format!("{}: {e}", ann_path.display())))?;
        Self::new(name, image, annotations)
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every asset subdirectory (those containing `image.png`), sorted by name.
pub fn load_assets_dir(dir: &Path) -> Result<Vec<WindowAsset>> {
    sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.join("image.png").is_file())
        .map(|p| WindowAsset::load(&p))
        .collect()
}

/// Loads every `*.png` in `dir` as a background, keyed by file stem.
pub fn load_backgrounds_dir(dir: &Path) -> Result<Vec<(String, RgbImage)>> {
    sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let img = image::open(&p)
                .map_err(|e| Error::Asset(format!("{}: {e}", p.display())))?
                .to_rgb8();
            Ok((id, img))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub window_index: usize,
    /// Top-left corner in background-normalized coordinates.
    pub offset: Point,
    pub scale: f64,
    pub z_order: i64,
}

impl Placement {
    /// Window rectangle on the background; may extend past `[0, 1]²`.
    pub fn footprint(&self) -> Rect {
        Rect::new_unchecked(
            self.offset.x,
            self.offset.y,
            self.offset.x + self.scale,
            self.offset.y + self.scale,
        )
    }

    /// Fraction of the footprint inside the background frame.
    pub fn inside_fraction(&self) -> f64 {
        self.footprint().intersection_area(&Rect::unit()) / (self.scale * self.scale)
    }

    /// Exact, unclipped image of a window-local box.
    pub fn map_box(&self, b: &Rect) -> Rect {
        b.affine(self.scale, self.offset.x, self.offset.y)
    }

    /// Inverse of [`Placement::map_box`].
    pub fn unmap_box(&self, b: &Rect) -> Rect {
        let s = 1.0 / self.scale;
        b.affine(s, -self.offset.x * s, -self.offset.y * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionPlan {
    pub background_id: String,
    pub placements: Vec<Placement>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlayConfig {
    pub k_windows: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Minimum fraction of each window that must land on the background.
    pub min_inside: f64,
    pub max_retries: usize,
    /// Annotations with at least this fraction covered by higher windows are dropped.
    pub occlusion_threshold: f64,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            k_windows: 3,
            scale_min: 0.3,
            scale_max: 0.7,
            min_inside: 0.25,
            max_retries: 100,
            occlusion_threshold: 0.5,
        }
    }
}

impl OverlayConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| {
            Err(Error::Config {
                path: format!("synth.{key}"),
                msg,
            })
        };
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return bad(
                "scale_min",
                format!("need 0 < scale_min <= scale_max, got {} and {}", self.scale_min, self.scale_max),
            );
        }
        if !(self.min_inside > 0.0 && self.min_inside <= 1.0) {
            return bad("min_inside", format!("{} not in (0, 1]", self.min_inside));
        }
        if !(self.occlusion_threshold > 0.0 && self.occlusion_threshold <= 1.0) {
            return bad("occlusion_threshold", format!("{} not in (0, 1]", self.occlusion_threshold));
        }
        if self.max_retries == 0 {
            return bad("max_retries", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Checks indices, scales, the inside constraint and z-order uniqueness.
pub fn validate_plan(plan: &CompositionPlan, assets: &[WindowAsset], min_inside: f64) -> Result<()> {
    let mut zs = HashSet::new();
    for (i, p) in plan.placements.iter().enumerate() {
        if p.window_index >= assets.len() {
            return Err(Error::Validation(format!(
                "placement {i}: window index {} out of range ({} assets)",
                p.window_index,
                assets.len()
            )));
        }
        if !(p.scale > 0.0 && p.scale.is_finite()) {
            return Err(Error::Validation(format!("placement {i}: scale {} must be positive", p.scale)));
        }
        Point::new(p.offset.x, p.offset.y)?;
        if p.inside_fraction() < min_inside {
            return Err(Error::Validation(format!(
                "placement {i}: only {:.3} of the window is on screen",
                p.inside_fraction()
            )));
        }
        if !zs.insert(p.z_order) {
            return Err(Error::Validation(format!("placement {i}: duplicate z_order {}", p.z_order)));
        }
    }
    Ok(())
}

/// Maps a window-local box to background coordinates, clipped and quantized.
pub fn transform_annotation(b: &Rect, placement: &Placement) -> Result<Rect> {
    let m = placement.map_box(b);
    if m.x0 >= 1.0 || m.y0 >= 1.0 || m.x1 <= 0.0 || m.y1 <= 0.0 {
        return Err(Error::OffScreen);
    }
    let q = |v: f64| quantize_3dp(v.clamp(0.0, 1.0));
    Rect::new(q(m.x0)?, q(m.y0)?, q(m.x1)?, q(m.y1)?)
}

/// Fraction of `b` covered by footprints of placements above `z`.
pub fn occluded_fraction(b: &Rect, z: i64, placements: &[Placement]) -> f64 {
    let above: Vec<Rect> = placements
        .iter()
        .filter(|p| p.z_order > z)
        .map(|p| p.footprint())
        .collect();
    union_area_within(b, &above) / b.area()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub placement_index: usize,
    pub annotation_index: usize,
    pub instruction: String,
    pub global: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OverlayDropReason {
    OffScreen,
    /// Partly outside the frame; the visible part no longer matches the window-local box.
    Clipped,
    Occluded(f64),
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayDrop {
    pub placement_index: usize,
    pub annotation_index: usize,
    pub reason: OverlayDropReason,
}

/// Keeps candidates whose covered fraction is strictly below `threshold`.
pub fn occlusion_prune(
    candidates: Vec<Candidate>,
    placements: &[Placement],
    threshold: f64,
) -> (Vec<Candidate>, Vec<OverlayDrop>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in candidates {
        let z = placements[c.placement_index].z_order;
        let reason = if c.global.area() <= 0.0 {
            Some(OverlayDropReason::Degenerate)
        } else {
            let f = occluded_fraction(&c.global, z, placements);
            (f >= threshold).then_some(OverlayDropReason::Occluded(f))
        };
        match reason {
            Some(reason) => dropped.push(OverlayDrop {
                placement_index: c.placement_index,
                annotation_index: c.annotation_index,
                reason,
            }),
            None => kept.push(c),
        }
    }
    (kept, dropped)
}

/// Transfers every annotation of every placed window to background coordinates.
pub fn collect_candidates(assets: &[WindowAsset], plan: &CompositionPlan) -> (Vec<Candidate>, Vec<OverlayDrop>) {
    let mut out = Vec::new();
    let mut dropped = Vec::new();
    for (pi, p) in plan.placements.iter().enumerate() {
        for (ai, (instruction, b)) in assets[p.window_index].annotations.iter().enumerate() {
            let drop = |reason| OverlayDrop {
                placement_index: pi,
                annotation_index: ai,
                reason,
            };
            let m = p.map_box(b);
            match transform_annotation(b, p) {
                Err(_) => dropped.push(drop(OverlayDropReason::OffScreen)),
                Ok(_) if m.x0 < 0.0 || m.y0 < 0.0 || m.x1 > 1.0 || m.y1 > 1.0 => {
                    dropped.push(drop(OverlayDropReason::Clipped))
                }
                Ok(global) => out.push(Candidate {
                    placement_index: pi,
                    annotation_index: ai,
                    instruction: instruction.clone(),
                    global,
                }),
            }
        }
    }
    (out, dropped)
}

/// Paints windows onto a copy of `background` in ascending z-order.
///
/// A background pixel is covered by a window when its center lies in the
/// half-open footprint `[o, o + scale)`; its color is the bilinear sample of
/// the window at the inverse-mapped point. Windows are opaque.
pub fn paint(assets: &[WindowAsset], background: &RgbImage, plan: &CompositionPlan) -> RgbImage {
    let mut canvas = background.clone();
    let (w, h) = canvas.dimensions();
    let mut order: Vec<&Placement> = plan.placements.iter().collect();
    order.sort_by_key(|p| p.z_order);
    for p in order {
        let window = &assets[p.window_index].image;
        let span = |o: f64, n: u32| {
            let lo = ((o * n as f64).floor().max(0.0) as u32).min(n);
            let hi = (((o + p.scale) * n as f64).ceil().max(0.0) as u32).min(n);
            lo..hi
        };
        for py in span(p.offset.y, h) {
            let cy = (py as f64 + 0.5) / h as f64;
            if cy < p.offset.y || cy >= p.offset.y + p.scale {
                continue;
            }
            let v = (cy - p.offset.y) / p.scale;
            for px in span(p.offset.x, w) {
                let cx = (px as f64 + 0.5) / w as f64;
                if cx < p.offset.x || cx >= p.offset.x + p.scale {
                    continue;
                }
                let u = (cx - p.offset.x) / p.scale;
                if let Some(c) = imageops::sample_bilinear(window, u as f32, v as f32) {
                    canvas.put_pixel(px, py, c);
                }
            }
        }
    }
    canvas
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub image: RgbImage,
    pub samples: Vec<GroundingSample>,
    pub dropped: Vec<OverlayDrop>,
}

/// Paints the plan and emits a point sample and a box sample per surviving annotation.
///
/// Sample ids are `<composite_id>-w<placement>-a<annotation>-{point,box}` and
/// the image reference is `<composite_id>.png`.
pub fn compose(
    assets: &[WindowAsset],
    background: &RgbImage,
    plan: &CompositionPlan,
    composite_id: &str,
    cfg: &OverlayConfig,
) -> Result<Composition> {
    validate_plan(plan, assets, cfg.min_inside)?;
    let image = paint(assets, background, plan);
    let (candidates, mut dropped) = collect_candidates(assets, plan);
    let (kept, occluded) = occlusion_prune(candidates, &plan.placements, cfg.occlusion_threshold);
    dropped.extend(occluded);

    let mut samples = Vec::with_capacity(kept.len() * 2);
    for c in kept {
        let b = c.global;
        let center = b.center();
        for (kind, annotation) in [
            ("point", Annotation::from_coords(&[center.x, center.y])?),
            ("box", Annotation::Box(b)),
        ] {
            samples.push(GroundingSample {
                id: format!("{composite_id}-w{}-a{}-{kind}", c.placement_index, c.annotation_index),
                image_ref: format!("{composite_id}.png"),
                image_size: image.dimensions(),
                instruction: c.instruction.clone(),
                task: annotation.task(),
                annotation,
                source: "overlay".into(),
                stage_tags: BTreeSet::from([OVERLAY_TAG.to_string()]),
            });
        }
    }
    Ok(Composition {
        image,
        samples,
        dropped,
    })
}

/// Draws `k` distinct windows with random offsets and scales.
///
/// Each window is redrawn up to `max_retries` times until at least
/// `min_inside` of it lies on the background and it spans at least one pixel.
pub fn plan_random(
    asset_count: usize,
    background_id: &str,
    background_size: (u32, u32),
    k_windows: usize,
    seed: u64,
    cfg: &OverlayConfig,
) -> Result<CompositionPlan> {
    if k_windows > asset_count {
        return Err(Error::Planning(format!(
            "{k_windows} windows requested but only {asset_count} assets available"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, asset_count, k_windows).into_vec();
    let min_side = background_size.0.min(background_size.1).max(1) as f64;
    let mut placements = Vec::with_capacity(k_windows);
    for (z, window_index) in picks.into_iter().enumerate() {
        let mut found = None;
        for _ in 0..cfg.max_retries {
            let scale = rng.random_range(cfg.scale_min..=cfg.scale_max);
            let offset = Point::new_unchecked(rng.random::<f64>(), rng.random::<f64>());
            let p = Placement {
                window_index,
                offset,
                scale,
                z_order: z as i64,
            };
            if p.inside_fraction() >= cfg.min_inside && scale * min_side >= 1.0 {
                found = Some(p);
                break;
            }
        }
        match found {
            Some(p) => placements.push(p),
            None => {
                return Err(Error::Planning(format!(
                    "window {window_index}: no valid placement after {} tries",
                    cfg.max_retries
                )))
            }
        }
    }
    Ok(CompositionPlan {
        background_id: background_id.to_string(),
        placements,
        rng_seed: seed,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SynthOutcome {
    pub manifest: DatasetManifest,
    /// Composite ids that produced no surviving annotation (nothing written).
    pub empty_yield: Vec<String>,
    pub dropped: usize,
}

/// Generates `count` composites into `out_dir` and returns their samples.
///
/// Plan seeds are drawn sequentially from `seed`, then compositions run in
/// parallel; output order follows the composite index.
pub fn synthesize(
    assets: &[WindowAsset],
    backgrounds: &[(String, RgbImage)],
    count: usize,
    seed: u64,
    cfg: &OverlayConfig,
    out_dir: &Path,
) -> Result<SynthOutcome> {
    cfg.validate()?;
    if backgrounds.is_empty() && count > 0 {
        return Err(Error::Asset("no background images".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(usize, usize, u64)> = (0..count)
        .map(|i| (i, rng.random_range(0..backgrounds.len()), rng.random()))
        .collect();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let results = jobs
        .into_par_iter()
        .map(|(i, bg, plan_seed)| {
            let (bg_id, bg_img) = &backgrounds[bg];
            let plan = plan_random(assets.len(), bg_id, bg_img.dimensions(), cfg.k_windows, plan_seed, cfg)?;
            let id = format!("overlay-{i:05}");
            let comp = compose(assets, bg_img, &plan, &id, cfg)?;
            if !comp.samples.is_empty() {
                let mut bytes = std::io::Cursor::new(Vec::new());
                comp.image.write_to(&mut bytes, ImageFormat::Png)?;
                crate::pipeline::write_atomic(&out_dir.join(format!("{id}.png")), bytes.get_ref())?;
            }
            Ok((id, comp.samples, comp.dropped.len()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SynthOutcome::default();
    for (id, samples, dropped) in results {
        out.dropped += dropped;
        if samples.is_empty() {
            out.empty_yield.push(id);
        }
        for s in samples {
            out.manifest.push(s)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use image::Rgb;

    fn place(window_index: usize, ox: f64, oy: f64, scale: f64, z: i64) -> Placement {
        Placement {
            window_index,
            offset: Point::new_unchecked(ox, oy),
            scale,
            z_order: z,
        }
    }

    fn asset(color: [u8; 3], boxes: &[[f64; 4]]) -> WindowAsset {
        let anns = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("target {i}"), Rect::new(b[0], b[1], b[2], b[3]).unwrap()))
            .collect();
        WindowAsset::new("w", RgbImage::from_pixel(40, 30, Rgb(color)), anns).unwrap()
    }

    fn plan(placements: Vec<Placement>) -> CompositionPlan {
        CompositionPlan {
            background_id: "bg".into(),
            placements,
            rng_seed: 0,
        }
    }

    #[test]
    fn transform_examples() {
        let r = transform_annotation(&Rect::unit(), &place(0, 0.25, 0.25, 0.5, 0)).unwrap();
        assert_eq!(r, Rect::new(0.25, 0.25, 0.75, 0.75).unwrap());
        let b = Rect::new(0.123, 0.456, 0.789, 0.999).unwrap();
        assert_eq!(transform_annotation(&b, &place(0, 0.0, 0.0, 1.0, 0)).unwrap(), b);
        let r = transform_annotation(&Rect::new(0.2, 0.2, 0.4, 0.4).unwrap(), &place(0, 0.1, 0.3, 0.5, 0)).unwrap();
        assert_eq!(r, Rect::new(0.2, 0.4, 0.3, 0.5).unwrap());
    }

    #[test]
    fn transform_clips_and_rejects_offscreen() {
        let p = place(0, 0.8, 0.8, 0.5, 0);
        let r = transform_annotation(&Rect::new(0.2, 0.2, 0.6, 0.6).unwrap(), &p).unwrap();
        assert_eq!(r, Rect::new(0.9, 0.9, 1.0, 1.0).unwrap());
        let off = transform_annotation(&Rect::new(0.5, 0.5, 1.0, 1.0).unwrap(), &p);
        assert!(matches!(off, Err(Error::OffScreen)));
    }

    #[test]
    fn inverse_mapping() {
        let p = place(0, 0.13, 0.41, 0.37, 0);
        let b = Rect::new(0.1, 0.2, 0.7, 0.9).unwrap();
        let back = p.unmap_box(&p.map_box(&b));
        assert_abs_diff_eq!(back.x0, b.x0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y1, b.y1, epsilon = 1e-12);
    }

    #[test]
    fn single_window_twins() {
        let assets = vec![asset([200, 10, 10], &[[0.1, 0.1, 0.3, 0.3]])];
        let bg = RgbImage::from_pixel(100, 100, Rgb([0, 0, 0]));
        let c = compose(&assets, &bg, &plan(vec![place(0, 0.2, 0.2, 0.5, 0)]), "c", &OverlayConfig::default()).unwrap();
        assert_eq!(c.samples.len(), 2);
        assert_eq!(c.samples[0].annotation, Annotation::from_coords(&[0.3, 0.3]).unwrap());
        assert_eq!(c.samples[1].annotation, Annotation::from_coords(&[0.25, 0.25, 0.35, 0.35]).unwrap());
        assert!(c.samples.iter().all(|s| s.stage_tags.contains(OVERLAY_TAG)));
        assert_eq!(*c.image.get_pixel(30, 30), Rgb([200, 10, 10]));
        assert_eq!(*c.image.get_pixel(5, 5), Rgb([0, 0, 0]));
    }

    #[test]
    fn identical_stack_keeps_top_only() {
        let assets = vec![asset([1, 1, 1], &[[0.1, 0.1, 0.5, 0.5]]), asset([2, 2, 2], &[[0.1, 0.1, 0.5, 0.5]])];
        let bg = RgbImage::new(50, 50);
        let p = plan(vec![place(0, 0.1, 0.1, 0.6, 0), place(1, 0.1, 0.1, 0.6, 1)]);
        let c = compose(&assets, &bg, &p, "c", &OverlayConfig::default()).unwrap();
        assert_eq!(c.samples.len(), 2);
        assert!(c.samples.iter().all(|s| s.id.starts_with("c-w1-")));
        assert_eq!(c.dropped[0].reason, OverlayDropReason::Occluded(1.0));
    }

    #[test]
    fn half_covered_is_dropped() {
        let cands = vec![Candidate {
            placement_index: 0,
            annotation_index: 0,
            instruction: "x".into(),
            global: Rect::new(0.2, 0.2, 0.4, 0.4).unwrap(),
        }];
        let ps = vec![place(0, 0.0, 0.0, 0.5, 0), place(1, 0.3, 0.0, 0.6, 1)];
        let (kept, dropped) = occlusion_prune(cands.clone(), &ps, 0.5);
        assert!(kept.is_empty());
        assert_eq!(dropped.len(), 1);
        let ps = vec![place(0, 0.0, 0.0, 0.5, 0), place(1, 0.31, 0.0, 0.6, 1)];
        assert_eq!(occlusion_prune(cands, &ps, 0.5).0.len(), 1);
    }

    #[test]
    fn plans_are_deterministic_and_valid() {
        let cfg = OverlayConfig::default();
        let a = plan_random(5, "bg", (800, 600), 3, 42, &cfg).unwrap();
        assert_eq!(a, plan_random(5, "bg", (800, 600), 3, 42, &cfg).unwrap());
        assert!(plan_random(5, "bg", (800, 600), 0, 1, &cfg).unwrap().placements.is_empty());
        assert!(matches!(plan_random(2, "bg", (800, 600), 3, 1, &cfg), Err(Error::Planning(_))));
        for seed in 0..1000 {
            let p = plan_random(4, "bg", (640, 480), 3, seed, &cfg).unwrap();
            let distinct: HashSet<_> = p.placements.iter().map(|p| p.window_index).collect();
            assert_eq!(distinct.len(), 3);
            assert!(p.placements.iter().all(|p| p.inside_fraction() >= 0.25));
        }
    }

    #[test]
    fn duplicate_z_rejected() {
        let assets = vec![asset([0, 0, 0], &[]), asset([0, 0, 0], &[])];
        let p = plan(vec![place(0, 0.1, 0.1, 0.5, 3), place(1, 0.2, 0.2, 0.5, 3)]);
        assert!(validate_plan(&p, &assets, 0.25).is_err());
    }
}
