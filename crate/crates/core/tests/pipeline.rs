use agbo_core::agbo::{agbo_run_with, AgboConfig, FnObjective, ObjectiveError, RunOptions};
use agbo_core::features::{extract_features, Laterality, SegmentationMasks};
use agbo_core::imaging::{rgb_to_gray, standardize, BinaryMask, RgbImage};
use agbo_core::objectives::Benchmark;
use agbo_core::runio::{
    export_features_csv, load_config, read_history, JsonlSink, FEATURE_COLUMNS,
};
use agbo_core::{compare_methods, Method};

fn fundus() -> RgbImage {
    RgbImage::from_fn(300, 220, |x, y| {
        let (dx, dy) = (x as f64 - 160.0, y as f64 - 100.0);
        let d = (dx * dx + dy * dy).sqrt();
        if d > 90.0 {
            return [3, 2, 1];
        }
        // a dark vessel crossing the disk and a bright optic disc
        let vessel = (dx - 0.3 * dy).abs() < 2.0;
        let disc = ((dx - 30.0).powi(2) + dy * dy).sqrt() < 18.0;
        match (vessel, disc) {
            (true, _) => [110, 60, 30],
            (false, true) => [250, 220, 160],
            _ => [200, 110, 60],
        }
    })
    .unwrap()
}

#[test]
fn standardize_then_extract_then_export() {
    let std_img = standardize(&fundus()).unwrap();
    assert_eq!((std_img.width(), std_img.height()), (512, 512));
    let gray = rgb_to_gray(&std_img);

    let disc = BinaryMask::from_fn(512, 512, |x, y| gray.get(x, y) > 200).unwrap();
    assert!(disc.count() > 0);
    let (cx, cy) = disc
        .foreground()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
    let (cx, cy) = (cx / disc.count() as f64, cy / disc.count() as f64);
    let cup = BinaryMask::from_fn(512, 512, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        disc.get(x, y) && dx * dx + dy * dy < 20.0 * 20.0
    })
    .unwrap();
    let masks = SegmentationMasks::new(disc, cup).unwrap();
    let rec = extract_features(&gray, &masks, Laterality::Right).unwrap();
    assert!(rec.masks_consistent);
    assert_eq!(rec.nrr_area, rec.disc_area - rec.cup_area);
    assert_eq!(rec.isnt.total(), rec.nrr_area);
    assert!(rec.cdr_area > 0.0 && rec.cdr_area < 1.0);
    assert!(rec.vessels.max_vesselness <= 1.0 && rec.vessels.mean_vesselness >= 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    export_features_csv(&[rec.clone(), rec], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], FEATURE_COLUMNS.join(","));
    assert!(lines.iter().all(|l| l.split(',').count() == 19));
    assert!(export_features_csv(&[], &dir.path().join("none.csv")).is_err());
}

#[test]
fn config_file_and_history_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"space":[{"type":"categorical","choices":[8,16,32,64]},
                     {"type":"integer","lo":10,"hi":100},
                     {"type":"continuous","lo":1e-5,"hi":1e-2,"scale":"log"}],
            "seed":12,"iterations":6}"#,
    )
    .unwrap();
    let cfg = load_config(&cfg_path).unwrap();
    let hist_path = dir.path().join("h.jsonl");
    let mut sink = JsonlSink::create(&hist_path).unwrap();
    let out = agbo_run_with(
        &cfg,
        &Benchmark::MockTuning,
        &mut sink,
        RunOptions::default(),
    )
    .unwrap();
    drop(sink);
    let back = read_history(&cfg.space, &hist_path).unwrap();
    assert_eq!(back, out.history);
    assert!(load_config(&dir.path().join("missing.json")).is_err());
}

#[test]
fn interrupted_run_leaves_valid_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = AgboConfig::new(Benchmark::Branin.space(), 4);
    let calls = std::cell::Cell::new(0);
    let dying = FnObjective::new("dying", 2, |x: &[f64]| {
        calls.set(calls.get() + 1);
        if calls.get() == 14 {
            return Err(ObjectiveError::Failed("killed".into()));
        }
        Benchmark::Branin.eval(x)
    });
    let path = dir.path().join("h.jsonl");
    let mut sink = JsonlSink::create(&path).unwrap();
    let err = agbo_run_with(&cfg, &dying, &mut sink, RunOptions::default()).unwrap_err();
    assert_eq!(err.partial_history().unwrap().len(), 13);
    let back = read_history(&cfg.space, &path).unwrap();
    assert_eq!(back.len(), 13);
    assert_eq!(back, err.partial_history().unwrap());
}

#[test]
fn comparison_rows_cover_every_combination() {
    let objectives = [Benchmark::Sphere { dims: 2 }, Benchmark::MockTuning];
    let rows = compare_methods(&objectives, &Method::ALL, &[0, 1, 2], 20).unwrap();
    assert_eq!(rows.len(), 2 * 4 * 3);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.objective, objectives[k / 12].name());
        assert_eq!(r.method, Method::ALL[(k / 3) % 4]);
        assert_eq!(r.seed, (k % 3) as u64);
        assert_eq!(r.evaluations, 20);
        assert!(r.best <= 0.0);
    }
}
