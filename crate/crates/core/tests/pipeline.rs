use std::collections::HashMap;
use std::fs;
use std::path::Path;

use forge_core::filter::{filter_dataset, DetectionSet, FilterConfig};
use forge_core::overlay::{compose, plan_random, OverlayConfig, WindowAsset};
use forge_core::pipeline::{artifacts, run_pipeline, run_synth, PipelineConfig, Stage};
use forge_core::schema::{read_manifest, Annotation, DatasetManifest, GroundingSample};
use forge_core::{Error, Rect};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point_sample(id: &str, image: &str, x: f64, y: f64) -> GroundingSample {
    let annotation = Annotation::from_coords(&[x, y]).unwrap();
    GroundingSample {
        id: id.into(),
        image_ref: image.into(),
        image_size: (1000, 1000),
        instruction: "click".into(),
        task: annotation.task(),
        annotation,
        source: "fixture".into(),
        stage_tags: Default::default(),
    }
}

fn box_sample(id: &str, image: &str, b: [f64; 4]) -> GroundingSample {
    let annotation = Annotation::from_coords(&b).unwrap();
    GroundingSample {
        task: annotation.task(),
        annotation,
        ..point_sample(id, image, 0.0, 0.0)
    }
}

#[test]
fn planted_coverage_partition() {
    let mut samples = Vec::new();
    let mut dets = HashMap::new();
    let mut planted = Vec::new();
    for i in 0..100 {
        let f = 0.3 + 0.4 * i as f64 / 99.0;
        let id = format!("img{i:03}");
        samples.push(box_sample(&id, &format!("{id}.png"), [0.2, 0.2, 0.4, 0.4]));
        dets.insert(
            id.clone(),
            DetectionSet {
                image_id: id.clone(),
                boxes: vec![Rect::new(0.2, 0.2, 0.2 + 0.2 * f, 0.4).unwrap()],
                detector: "planted".into(),
            },
        );
        planted.push(f >= 0.5);
    }
    let m = DatasetManifest::from_samples(samples).unwrap();
    let out = filter_dataset(&m, &dets, &FilterConfig::default()).unwrap();
    let kept: Vec<bool> = m
        .samples()
        .iter()
        .map(|s| out.kept.samples().iter().any(|k| k.id == s.id))
        .collect();
    assert_eq!(kept, planted);
    assert_eq!(out.kept.len() + out.dropped.len(), 100);
    assert!(out.kept.samples().iter().all(|s| s.stage_tags.contains("filtered")));
}

/// 20 raw records: 2 malformed, 3 poorly covered, 1 image without detections.
fn write_fixture(dir: &Path) -> String {
    let mut raw = String::new();
    for i in 0..20 {
        let img = format!("shot{}", i % 5);
        let line = match i {
            3 => format!(r#"{{"id":"r{i}","image":"{img}.png","width":1000,"height":1000,"instruction":"x","coords":[0.1,0.2,0.3]}}"#),
            11 => format!(r#"{{"id":"r{i}","image":"{img}.png","width":1000,"height":1000,"instruction":"x","coords":[1.2,0.2]}}"#),
            // a point far from every detection
            5..=7 => format!(r#"{{"id":"r{i}","image":"{img}.png","width":1000,"height":1000,"instruction":"x","coords":[0.95,0.95]}}"#),
            _ => {
                let x = 0.1 + 0.04 * i as f64;
                format!(
                    r#"{{"id":"r{i}","image":"{img}.png","width":1000,"height":1000,"instruction":"x","coords":[{x:.3},{:.3}]}}"#,
                    x
                )
            }
        };
        raw.push_str(&line);
        raw.push('\n');
    }
    fs::write(dir.join("raw.jsonl"), raw).unwrap();
    let dets = dir.join("dets");
    fs::create_dir_all(&dets).unwrap();
    // shot4 has no detection file
    for k in 0..4 {
        let d = DetectionSet {
            image_id: format!("shot{k}"),
            boxes: vec![
                Rect::new(0.0, 0.0, 0.9, 0.9).unwrap(),
                Rect::new(0.1 * k as f64, 0.5, 0.1 * k as f64 + 0.05, 0.55).unwrap(),
            ],
            detector: "fixture".into(),
        };
        fs::write(dets.join(format!("shot{k}.json")), d.to_json()).unwrap();
    }
    r#"
seed = 3
worker_count = 2

[paths]
work_dir = "work"
detections_dir = "dets"
sources = [{ adapter = "flat-list", path = "raw.jsonl" }]

[entropy]
bins = 8
grid = 4
"#
    .to_string()
}

fn counts(reports: &[forge_core::pipeline::StageReport], stage: &str) -> std::collections::BTreeMap<String, usize> {
    reports.iter().find(|r| r.stage == stage).unwrap().counts.clone()
}

#[test]
fn ingest_filter_entropy_conserves_samples() {
    let dir = tempfile::tempdir().unwrap();
    let toml = write_fixture(dir.path());
    let cfg = PipelineConfig::from_toml(&toml, dir.path()).unwrap();
    let reports = run_pipeline(&cfg, &[Stage::Ingest, Stage::Filter, Stage::Entropy]).unwrap();

    let ing = counts(&reports, "ingest");
    assert_eq!((ing["samples"], ing["rejected"]), (18, 2));
    let fil = counts(&reports, "filter");
    assert_eq!(fil["input"], 18);
    // shot4 holds r4, r9, r14, r19; r5..r7 sit outside every detection
    assert_eq!(fil["missing_detections"], 4);
    assert_eq!(fil["dropped"], 3);
    assert_eq!(fil["kept"], 11);
    assert_eq!(fil["kept"] + fil["dropped"] + fil["missing_detections"], fil["input"]);
    let ent = counts(&reports, "entropy");
    assert_eq!(ent["input"], fil["kept"]);
    assert_eq!(ent["samples"], fil["kept"]);

    let work = &cfg.paths.work_dir;
    let bucketed = read_manifest(work.join(artifacts::BUCKETED)).unwrap();
    assert_eq!(bucketed.len(), 11);
    assert!(bucketed.samples().iter().all(|s| s.difficulty().is_some() && s.stage_tags.contains("filtered")));
    let log = fs::read_to_string(work.join(artifacts::LOG)).unwrap();
    assert_eq!(log.lines().count(), 3);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["status"], "ok");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let read_all = |root: &Path| {
        let toml = write_fixture(root);
        let cfg = PipelineConfig::from_toml(&toml, root).unwrap();
        run_pipeline(&cfg, &[Stage::Ingest, Stage::Filter, Stage::Entropy, Stage::Resize, Stage::RlSim]).unwrap();
        [artifacts::INGESTED, artifacts::FILTERED, artifacts::BUCKETED, artifacts::RESIZED, artifacts::TRAINING_LOG]
            .map(|f| fs::read(cfg.paths.work_dir.join(f)).unwrap())
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(read_all(a.path()), read_all(b.path()));
}

#[test]
fn failed_stage_keeps_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let toml = write_fixture(dir.path()).replace("detections_dir = \"dets\"\n", "");
    let cfg = PipelineConfig::from_toml(&toml, dir.path()).unwrap();
    let err = run_pipeline(&cfg, &[Stage::Ingest, Stage::Filter, Stage::Entropy]).unwrap_err();
    assert!(matches!(err, Error::Dependency { ref stage, .. } if stage == "filter"), "{err}");
    assert_eq!(err.exit_code(), 3);
    let work = &cfg.paths.work_dir;
    assert_eq!(read_manifest(work.join(artifacts::INGESTED)).unwrap().len(), 18);
    assert!(!work.join(artifacts::FILTERED).exists());
    assert!(!work.join(artifacts::BUCKETED).exists());
    let names: Vec<_> = fs::read_dir(work).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 3, "stray files: {names:?}");
}

fn write_assets(root: &Path) {
    let assets = root.join("assets");
    for k in 0..4u8 {
        let d = assets.join(format!("app{k}"));
        fs::create_dir_all(&d).unwrap();
        let mut img = RgbImage::from_pixel(240, 160, Rgb([90, 90, 90 + k]));
        for y in 20..60 {
            for x in 30..120 {
                img.put_pixel(x, y, Rgb([200, 30 * k, 10]));
            }
        }
        img.save(d.join("image.png")).unwrap();
        fs::write(
            d.join("annotations.json"),
            r#"[{"instruction":"press the red button","box":[0.125,0.125,0.5,0.375]},
                {"instruction":"look at the footer","box":[0.0,0.8,1.0,1.0]}]"#,
        )
        .unwrap();
    }
    let bgs = root.join("bgs");
    fs::create_dir_all(&bgs).unwrap();
    for k in 0..2u8 {
        RgbImage::from_pixel(320, 200, Rgb([k * 100, 0, 50])).save(bgs.join(format!("desk{k}.png"))).unwrap();
    }
}

#[test]
fn synth_is_deterministic() {
    let run = |root: &Path| {
        write_assets(root);
        let cfg = OverlayConfig::default();
        let out_dir = root.join("out");
        let report = run_synth(
            &root.join("assets"),
            &root.join("bgs"),
            &cfg,
            12,
            7,
            &out_dir,
            &root.join("synth.jsonl"),
        )
        .unwrap();
        let mut pngs: Vec<_> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
        pngs.sort();
        let bytes: Vec<Vec<u8>> = pngs.iter().map(|p| fs::read(p).unwrap()).collect();
        (report.counts, fs::read(root.join("synth.jsonl")).unwrap(), bytes)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(a.path());
    assert_eq!(ra, run(b.path()));
    let manifest = DatasetManifest::read_from(&ra.1[..]).unwrap();
    assert_eq!(manifest.len(), ra.0["samples"]);
    assert!(!manifest.is_empty() && manifest.len().is_multiple_of(2));
    assert!(manifest.samples().iter().all(|s| s.stage_tags.contains("synthetic/overlay")));
}

/// Where a surviving annotation's center is not under a higher window, the
/// composite pixel there equals the source window pixel at the inverse-mapped point.
#[test]
fn composite_centers_match_source_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let assets: Vec<WindowAsset> = (0..4u8)
        .map(|k| {
            let (w, h) = (rng.random_range(200..400u32), rng.random_range(150..300u32));
            let mut img = RgbImage::from_pixel(w, h, Rgb([20, 20, 20 + k]));
            let mut anns = Vec::new();
            for a in 0..3u8 {
                let y0 = a as f64 * 0.3 + 0.05;
                let b = Rect::new(0.1 + 0.1 * a as f64, y0, 0.5 + 0.1 * a as f64, y0 + 0.2).unwrap();
                for py in (b.y0 * h as f64) as u32..(b.y1 * h as f64).ceil() as u32 {
                    for px in (b.x0 * w as f64) as u32..(b.x1 * w as f64).ceil() as u32 {
                        img.put_pixel(px, py, Rgb([k * 60, a * 80, 255]));
                    }
                }
                anns.push((format!("{k}/{a}"), b));
            }
            WindowAsset::new(format!("w{k}"), img, anns).unwrap()
        })
        .collect();
    let bg = RgbImage::from_pixel(1000, 700, Rgb([0, 0, 0]));
    let cfg = OverlayConfig::default();
    let (mut checked, mut hidden) = (0, 0);
    for seed in 0..50 {
        let plan = plan_random(assets.len(), "bg", bg.dimensions(), 3, seed, &cfg).unwrap();
        let comp = compose(&assets, &bg, &plan, "c", &cfg).unwrap();
        for s in comp.samples.iter().filter(|s| s.id.ends_with("-point")) {
            let pi: usize = s.id.split('-').nth(1).unwrap()[1..].parse().unwrap();
            let p = plan.placements[pi];
            let c = s.annotation.center();
            let (px, py) = ((c.x * 1000.0) as u32, (c.y * 700.0) as u32);
            let (cx, cy) = ((px as f64 + 0.5) / 1000.0, (py as f64 + 0.5) / 700.0);
            let covered = plan.placements.iter().any(|q| {
                let f = q.footprint();
                q.z_order > p.z_order && f.x0 <= cx && cx < f.x1 && f.y0 <= cy && cy < f.y1
            });
            if covered {
                hidden += 1;
                continue;
            }
            let win = &assets[p.window_index].image;
            let u = (cx - p.offset.x) / p.scale * win.width() as f64;
            let v = (cy - p.offset.y) / p.scale * win.height() as f64;
            assert_eq!(comp.image.get_pixel(px, py), win.get_pixel(u as u32, v as u32), "{} seed {seed}", s.id);
            checked += 1;
        }
    }
    assert!(checked > 100, "checked {checked}, hidden {hidden}");
}
