use fsg_core::proposals::load_proposals;
use fsg_core::synth::{load_ground_truth, load_manual_pairs, load_rules, ManualPairs, RuleFile};
use fsg_core::{
    annotate, brute_force_marginals, evaluate, generate_scene, load_scene, threshold_graph,
    EvalConfig, Evidence, GenConfig, InferenceConfig, Pipeline, PredictedGraph, RoomType,
};

fn write(dir: &std::path::Path, name: &str, json: String) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

#[test]
fn files_roundtrip_through_the_whole_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate_scene(&GenConfig {
        burners_per_stove: Some(3),
        ..GenConfig::new(21, RoomType::Kitchen)
    })
    .unwrap();
    let scene_p = write(dir.path(), "scene.json", g.scene.to_json());
    let props_p = write(
        dir.path(),
        "proposals.json",
        serde_json::to_string(&g.proposals).unwrap(),
    );
    let rules_p = write(
        dir.path(),
        "rules.json",
        serde_json::to_string(&RuleFile {
            rules: g.rules.clone(),
        })
        .unwrap(),
    );
    let manual_p = write(
        dir.path(),
        "manual.json",
        serde_json::to_string(&ManualPairs {
            pairs: g.manual.clone(),
        })
        .unwrap(),
    );
    let gt_p = write(dir.path(), "gt.json", g.ground_truth.to_json());

    let scene = load_scene(&scene_p).unwrap();
    assert_eq!(scene, g.scene);
    let gt = annotate(
        &scene,
        &load_rules(&rules_p).unwrap(),
        &load_manual_pairs(&manual_p).unwrap(),
    )
    .unwrap();
    assert_eq!(gt, load_ground_truth(&gt_p).unwrap());

    let cfg = InferenceConfig {
        b: 0.25,
        ..Default::default()
    };
    let pipeline = Pipeline::new(scene.clone(), load_proposals(&props_p).unwrap(), cfg).unwrap();
    for c in &pipeline.components {
        let oracle = brute_force_marginals(c, &Evidence::new()).unwrap();
        for v in &c.variables {
            let got = pipeline.marginals_by_edge()[&v.edge];
            assert!((got - oracle.marginals[&v.id]).abs() < 1e-9);
        }
    }
    let posterior = pipeline.posterior().unwrap();
    assert!(threshold_graph(&posterior, 0.5).len() <= posterior.len());

    let pred = PredictedGraph::from_posterior(scene, &posterior);
    let report = evaluate(
        &gt,
        &pred,
        &EvalConfig::default(),
        &["knob".to_string(), "switch".to_string()],
    );
    assert_eq!(report.nodes.recall, 1.0);
    assert!(report.triplets.recall > 0.5);
    assert!(report.ambiguous_calibration.is_some());
}

#[test]
fn pipeline_snapshot_roundtrips_with_evidence() {
    let g = generate_scene(&GenConfig::new(3, RoomType::Bedroom)).unwrap();
    let mut p = Pipeline::new(
        g.scene,
        g.proposals.to_proposals().unwrap(),
        InferenceConfig::default(),
    )
    .unwrap();
    let edge = p.components[0].variables[0].edge.clone();
    p.set_evidence(&edge, false).unwrap();
    let back: Pipeline = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.marginals_by_edge()[&edge], 0.0);
}
