//! CLI dispatch and file-format integration: exit codes, artifact
//! round-trips, and byte-level reproducibility of outputs.

use std::fs;
use std::path::Path;

use semi_anchored::cli;
use semi_anchored::io::config::{load_config, save_config, RunConfig};

fn run(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("semi-anchored")
        .chain(args.iter().copied())
        .map(str::to_string)
        .collect();
    cli::run(argv)
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const ANNOTATIONS: &str = r#"{
  "images": [
    {"id": 1, "width": 64, "height": 64},
    {"id": 2, "width": 48, "height": 64}
  ],
  "annotations": [
    {"image_id": 1, "category_id": 7, "bbox": [8, 8, 32, 32]},
    {"image_id": 2, "category_id": 3, "bbox": [10, 20, 16, 24]},
    {"image_id": 1, "category_id": 3, "bbox": [30, 30, 20, 12]}
  ],
  "categories": [{"id": 7, "name": "widget"}, {"id": 3, "name": "gadget"}]
}"#;

/// Same records, every array permuted.
const ANNOTATIONS_PERMUTED: &str = r#"{
  "categories": [{"id": 3, "name": "gadget"}, {"id": 7, "name": "widget"}],
  "annotations": [
    {"image_id": 1, "category_id": 3, "bbox": [30, 30, 20, 12]},
    {"image_id": 2, "category_id": 3, "bbox": [10, 20, 16, 24]},
    {"image_id": 1, "category_id": 7, "bbox": [8, 8, 32, 32]}
  ],
  "images": [
    {"id": 2, "width": 48, "height": 64},
    {"id": 1, "width": 64, "height": 64}
  ]
}"#;

#[test]
fn usage_errors_exit_with_code_2() {
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["eval", "--no-such-flag", "x"]), 2);
    assert_eq!(run(&["train-toy", "--steps", "not-a-number"]), 2);
}

#[test]
fn runtime_failures_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let anns = dir.path().join("a.json");
    write(&anns, ANNOTATIONS);
    // Missing input file.
    assert_eq!(
        run(&["assign", "--annotations", "/nonexistent/a.json"]),
        1
    );
    // Unsupported anchor count is a validation failure, not a crash.
    assert_eq!(run(&["train-toy", "--K", "4", "--steps", "1"]), 1);
    // Malformed detections file.
    let dets = dir.path().join("bad.txt");
    write(&dets, "1 1 0 0 -5 5 0.5\n");
    assert_eq!(
        run(&[
            "eval",
            "--detections",
            dets.to_str().unwrap(),
            "--annotations",
            anns.to_str().unwrap(),
        ]),
        1
    );
}

#[test]
fn assign_output_is_reproducible_and_order_independent() {
    let dir = tempfile::tempdir().unwrap();
    let anns = dir.path().join("a.json");
    let anns_permuted = dir.path().join("b.json");
    write(&anns, ANNOTATIONS);
    write(&anns_permuted, ANNOTATIONS_PERMUTED);
    let out = |name: &str| dir.path().join(name);
    for (input, output) in [
        (&anns, "first.txt"),
        (&anns, "second.txt"),
        (&anns_permuted, "permuted.txt"),
    ] {
        assert_eq!(
            run(&[
                "assign",
                "--annotations",
                input.to_str().unwrap(),
                "--out",
                out(output).to_str().unwrap(),
            ]),
            0
        );
    }
    let first = fs::read(out("first.txt")).unwrap();
    assert_eq!(first, fs::read(out("second.txt")).unwrap(), "not reproducible");
    assert_eq!(
        first,
        fs::read(out("permuted.txt")).unwrap(),
        "record order leaked into the assignment dump"
    );
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("image 1 locations 64 anchors-per-location 25"));
    assert!(text.contains("image 2 locations 48 anchors-per-location 25"));
}

#[test]
fn stats_reports_both_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let anns = dir.path().join("a.json");
    write(&anns, ANNOTATIONS);
    let out = dir.path().join("stats.txt");
    assert_eq!(
        run(&[
            "stats",
            "--annotations",
            anns.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    let text = fs::read_to_string(&out).unwrap();
    for key in [
        "positive_anchors",
        "negative_anchors",
        "positive_locations",
        "negative_locations",
        "anchor_positive_fraction",
        "location_positive_fraction",
    ] {
        assert!(text.contains(key), "missing {key} in:\n{text}");
    }
}

#[test]
fn infer_then_eval_scores_perfect_detections_at_ap_1() {
    let dir = tempfile::tempdir().unwrap();
    let anns = dir.path().join("a.json");
    write(
        &anns,
        r#"{"images":[{"id":5,"width":64,"height":64}],
            "annotations":[{"image_id":5,"category_id":1,"bbox":[8,8,32,32]}],
            "categories":[{"id":1,"name":"thing"}]}"#,
    );
    let heads = dir.path().join("heads.txt");
    write(
        &heads,
        "head-outputs v1\nimage 5 locations 1 classes 1 anchors 2\nloc 0 0.9\nanchor 0 0 0.8 8 8 40 40\nanchor 0 1 0.2 0 0 64 64\n",
    );
    let dets = dir.path().join("dets.txt");
    assert_eq!(
        run(&[
            "infer",
            "--heads",
            heads.to_str().unwrap(),
            "--out",
            dets.to_str().unwrap(),
        ]),
        0
    );
    // Top-1 keeps the 0.8 anchor; its refined box matches the GT.
    let det_text = fs::read_to_string(&dets).unwrap();
    assert_eq!(det_text, "5 1 8 8 32 32 0.72\n");
    let report = dir.path().join("report.txt");
    assert_eq!(
        run(&[
            "eval",
            "--detections",
            dets.to_str().unwrap(),
            "--annotations",
            anns.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ]),
        0
    );
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("ap 1\n"), "{text}");
}

#[test]
fn config_file_controls_inference_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let heads = dir.path().join("heads.txt");
    write(
        &heads,
        "head-outputs v1\nimage 1 locations 1 classes 1 anchors 2\nloc 0 0.9\nanchor 0 0 0.8 0 0 10 10\nanchor 0 1 0.6 20 0 30 10\n",
    );
    let config = dir.path().join("run.cfg");
    write(&config, "strategy = pos-0.1\n");
    let top1 = dir.path().join("top1.txt");
    let pos = dir.path().join("pos.txt");
    assert_eq!(
        run(&["infer", "--heads", heads.to_str().unwrap(), "--out", top1.to_str().unwrap()]),
        0
    );
    assert_eq!(
        run(&[
            "infer",
            "--heads",
            heads.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            pos.to_str().unwrap(),
        ]),
        0
    );
    let top1_lines = fs::read_to_string(&top1).unwrap().lines().count();
    let pos_lines = fs::read_to_string(&pos).unwrap().lines().count();
    assert_eq!(top1_lines, 1, "top-1 keeps one anchor");
    assert_eq!(pos_lines, 2, "pos-0.1 keeps both disjoint anchors");
}

#[test]
fn config_save_load_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    let cfg = RunConfig::default();
    save_config(&path, &cfg).unwrap();
    assert_eq!(load_config(&path).unwrap(), cfg);
    // The saved file is a stable artifact: saving again is byte-identical.
    let bytes = fs::read(&path).unwrap();
    save_config(&path, &cfg).unwrap();
    assert_eq!(bytes, fs::read(&path).unwrap());
}

#[test]
fn check_grad_and_prop1_succeed_from_the_cli() {
    assert_eq!(run(&["check-grad", "--points", "100", "--seed", "3"]), 0);
    assert_eq!(run(&["prop1", "--K", "3", "--C", "2"]), 0);
    // An out-of-range gamma in the sweep is a flag-value problem the
    // library rejects.
    assert_eq!(run(&["prop1", "--K", "2", "--C", "2", "--gamma", "1.5"]), 1);
}
