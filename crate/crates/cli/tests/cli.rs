use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsg_core::{brute_force_marginals, load_scene, Evidence, InferenceConfig, Pipeline};
use serde_json::Value;

fn fsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fsg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(fsg(&["bogus"]).status.code(), Some(64));
    assert_eq!(
        fsg(&["infer", "--no-such-flag", "a", "b"]).status.code(),
        Some(64)
    );
    assert_eq!(fsg(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_exits_2_and_bad_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(
        fsg(&["infer", p(&missing), p(&missing)]).status.code(),
        Some(2)
    );

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(fsg(&["infer", p(&bad), p(&bad)]).status.code(), Some(1));

    ok(&["generate", "--seed", "1", "--out-dir", p(dir.path())]);
    let scene = dir.path().join("scene.json");
    let props = dir.path().join("proposals.json");
    assert_eq!(
        fsg(&["infer", p(&scene), p(&props), "--b", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        fsg(&["generate", "--room", "garage"]).status.code(),
        Some(64)
    );
}

#[test]
fn generate_and_infer_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["generate", "--seed", "7", "--out-dir", p(d.path())]);
        let out = d.path().join("pred.json");
        ok(&[
            "infer",
            p(&d.path().join("scene.json")),
            p(&d.path().join("proposals.json")),
            "--out",
            p(&out),
        ]);
    }
    for f in [
        "scene.json",
        "gt.json",
        "proposals.json",
        "rules.json",
        "manual.json",
        "pred.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let s1 = ok(&["generate", "--seed", "7"]).stdout;
    let s2 = ok(&["generate", "--seed", "7"]).stdout;
    assert_eq!(s1, s2);
}

#[test]
fn annotate_recovers_generated_ground_truth() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "generate",
        "--seed",
        "3",
        "--room",
        "bathroom",
        "--out-dir",
        p(d.path()),
    ]);
    let out = ok(&[
        "annotate",
        p(&d.path().join("scene.json")),
        p(&d.path().join("rules.json")),
        "--manual",
        p(&d.path().join("manual.json")),
    ]);
    let got: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(got, read_json(&d.path().join("gt.json")));
}

#[test]
fn ground_truth_against_itself_scores_one() {
    let d = tempfile::tempdir().unwrap();
    ok(&["generate", "--seed", "11", "--out-dir", p(d.path())]);
    let gt = d.path().join("gt.json");
    let pred = d.path().join("self.json");
    let gt_json = read_json(&gt);
    let edges: Vec<Value> = gt_json["triplets"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            serde_json::json!({
                "id": format!("t{i}"),
                "source": t["subject"],
                "target": t["object"],
                "interaction": t["relation"],
                "confidence": 1.0,
            })
        })
        .collect();
    fs::write(
        &pred,
        serde_json::json!({ "nodes": gt_json["nodes"], "edges": edges }).to_string(),
    )
    .unwrap();
    let csv = d.path().join("bins.csv");
    let out = ok(&["eval", p(&gt), p(&pred), "--csv", p(&csv)]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    for k in ["precision", "recall", "f1"] {
        assert_eq!(r["triplets"][k].as_f64(), Some(1.0), "{k}");
    }
    assert_eq!(r["calibration"]["ece"].as_f64(), Some(0.0));
    assert!(fs::read_to_string(&csv).unwrap().starts_with("lo,hi"));
}

#[test]
fn four_burner_stove_matches_enumeration() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "generate",
        "--seed",
        "5",
        "--burners",
        "4",
        "--out-dir",
        p(d.path()),
    ]);
    let scene_path = d.path().join("scene.json");
    let props_path = d.path().join("proposals.json");
    let out = ok(&["infer", p(&scene_path), p(&props_path)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let edges = v["edges"].as_array().unwrap();

    let scene = load_scene(&scene_path).unwrap();
    let knob = |id: &str| scene.get(&id.into()).is_some_and(|n| n.label == "knob");
    let knob_edges: Vec<&Value> = edges
        .iter()
        .filter(|e| knob(e["source"].as_str().unwrap()))
        .collect();
    assert_eq!(knob_edges.len(), 16);

    let proposals = fsg_core::proposals::load_proposals(&props_path).unwrap();
    let pipeline = Pipeline::new(scene, proposals, InferenceConfig::default()).unwrap();
    let mut checked = 0;
    for c in &pipeline.components {
        let oracle = brute_force_marginals(c, &Evidence::new()).unwrap();
        for var in &c.variables {
            let e = edges
                .iter()
                .find(|e| e["id"] == var.edge.0.as_str())
                .unwrap();
            let got = e["confidence"].as_f64().unwrap();
            assert!(
                (got - oracle.marginals[&var.id]).abs() < 1e-9,
                "{}: {got}",
                var.edge
            );
            assert_eq!(e["accepted"].as_bool(), Some(got >= 0.5));
            checked += 1;
        }
    }
    assert!(checked >= 16);
}

#[test]
fn fuse_writes_a_scene() {
    let d = tempfile::tempdir().unwrap();
    let det = d.path().join("det.json");
    let obj = |x: f64, f: [f64; 2]| {
        serde_json::json!({
            "box": { "min": [x, 0.0, 0.0], "max": [x + 1.0, 1.0, 1.0] },
            "feature": f,
            "label": "cabinet",
            "parts": [{ "box": { "min": [x, 0.0, 0.0], "max": [x + 0.2, 0.2, 0.2] }, "feature": f, "label": "handle" }],
        })
    };
    let file = serde_json::json!({ "frames": [
        { "objects": [obj(0.0, [1.0, 0.0])] },
        { "objects": [obj(0.05, [1.0, 0.1]), obj(5.0, [0.0, 1.0])] },
    ]});
    fs::write(&det, file.to_string()).unwrap();
    let out = ok(&["fuse", p(&det)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let nodes = v["nodes"].as_array().unwrap();
    assert_eq!(nodes.iter().filter(|n| n["kind"] == "object").count(), 2);
    assert_eq!(nodes.iter().filter(|n| n["kind"] == "part").count(), 2);
}
