use std::fs;
use std::io::Write;
use std::path::Path;

use fsg_core::eval::{load_predictions, MatchMode, ScanMode};
use fsg_core::fusion::{instances_to_scene, load_detections};
use fsg_core::proposals::load_proposals;
use fsg_core::synth::{load_ground_truth, load_manual_pairs, load_rules, ManualPairs, RuleFile};
use fsg_core::{
    annotate, baseline_confidence_fill, evaluate, generate_scene, load_scene, merge_stream,
    AssociationParams, EvalConfig, GenConfig, InferenceConfig, Pipeline,
};
use serde::Serialize;

use crate::args::{AnnotateArgs, Command, EvalArgs, FuseArgs, GenerateArgs, InferArgs, ScanArg};
use crate::view::graph_view;
use crate::CliError;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Infer(a) => infer(a),
        Command::Generate(a) => generate(a),
        Command::Annotate(a) => annotate_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Fuse(a) => fuse(a),
        Command::Serve(a) => crate::server::serve(a),
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize + ?Sized>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    emit(&to_json(value)?, out)
}

fn infer(a: InferArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.tau) {
        return Err(CliError::Validation(format!(
            "tau {} must lie in [0,1]",
            a.tau
        )));
    }
    let scene = load_scene(&a.scene)?;
    let proposals = load_proposals(&a.proposals)?;
    let config = InferenceConfig {
        b: a.b,
        exact_max_vars: a.exact_max_vars,
        ..InferenceConfig::default()
    };
    let pipeline = Pipeline::new(scene, proposals, config)?;
    let posterior = pipeline.posterior()?;
    emit_json(
        &graph_view(None, &pipeline, &posterior, a.tau),
        a.out.as_deref(),
    )
}

#[derive(Serialize)]
struct Bundle<'a> {
    config: &'a GenConfig,
    scene: &'a fsg_core::SceneGraph,
    ground_truth: &'a fsg_core::GroundTruthGraph,
    proposals: &'a fsg_core::ProposalFile,
    rules: RuleFile,
    manual: ManualPairs,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<&'a std::collections::BTreeMap<fsg_core::NodeId, Vec<[f64; 3]>>>,
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut config = GenConfig::new(a.seed, a.room);
    if let Some(j) = a.jitter {
        config.jitter = j;
    }
    if let Some(s) = a.spread {
        config.spread = s;
    }
    config.burners_per_stove = a.burners;
    let g = generate_scene(&config)?;
    let rules = RuleFile {
        rules: g.rules.clone(),
    };
    let manual = ManualPairs {
        pairs: g.manual.clone(),
    };
    match a.out_dir {
        Some(dir) => {
            fs::create_dir_all(&dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            emit_json(&g.scene, Some(&dir.join("scene.json")))?;
            emit_json(&g.ground_truth, Some(&dir.join("gt.json")))?;
            emit_json(&g.proposals, Some(&dir.join("proposals.json")))?;
            emit_json(&rules, Some(&dir.join("rules.json")))?;
            emit_json(&manual, Some(&dir.join("manual.json")))?;
            if a.points {
                emit_json(&g.node_points, Some(&dir.join("points.json")))?;
            }
            Ok(())
        }
        None => emit_json(
            &Bundle {
                config: &config,
                scene: &g.scene,
                ground_truth: &g.ground_truth,
                proposals: &g.proposals,
                rules,
                manual,
                points: a.points.then_some(&g.node_points),
            },
            None,
        ),
    }
}

fn annotate_cmd(a: AnnotateArgs) -> Result<(), CliError> {
    let scene = load_scene(&a.scene)?;
    let rules = load_rules(&a.rules)?;
    let manual = match &a.manual {
        Some(p) => load_manual_pairs(p)?,
        None => Vec::new(),
    };
    let gt = annotate(&scene, &rules, &manual)?;
    emit_json(&gt, a.out.as_deref())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    if a.k_node == 0 || a.k_rel == 0 {
        return Err(CliError::Validation(
            "k-node and k-rel must be at least 1".into(),
        ));
    }
    if a.bins == 0 {
        return Err(CliError::Validation("bins must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&a.tau) {
        return Err(CliError::Validation(format!(
            "tau {} must lie in [0,1]",
            a.tau
        )));
    }
    let gt = load_ground_truth(&a.gt)?;
    let mut pred = load_predictions(&a.pred)?;
    if a.baseline {
        if !(0.0..=1.0).contains(&a.baseline_default) {
            return Err(CliError::Validation(format!(
                "baseline default {} must lie in [0,1]",
                a.baseline_default
            )));
        }
        pred = baseline_confidence_fill(&pred, a.baseline_default, &a.baseline_exclude);
    }
    let config = EvalConfig {
        k_node: a.k_node,
        k_rel: a.k_rel,
        tau: a.tau,
        bins: a.bins,
        mode: if a.exclusive {
            MatchMode::Exclusive
        } else {
            MatchMode::NonExclusive
        },
        scan: match a.scan {
            ScanArg::FirstAccepted => ScanMode::FirstAccepted,
            ScanArg::FirstOverlap => ScanMode::FirstOverlap,
            ScanArg::BestIou => ScanMode::BestIou,
        },
    };
    let classes: Vec<String> = a
        .ambiguous_classes
        .iter()
        .filter(|c| !c.trim().is_empty())
        .cloned()
        .collect();
    let report = evaluate(&gt, &pred, &config, &classes);
    if let Some(csv) = &a.csv {
        let text = report
            .calibration
            .as_ref()
            .map(|c| c.to_csv())
            .unwrap_or_default();
        emit(&text, Some(csv))?;
    }
    emit_json(&report, a.out.as_deref())
}

fn fuse(a: FuseArgs) -> Result<(), CliError> {
    let dets = load_detections(&a.detections)?;
    let params = AssociationParams {
        iou_thresh: a.iou,
        cos_thresh: a.cos,
    };
    let instances = merge_stream(&dets, params)?;
    emit_json(&instances_to_scene(&instances), a.out.as_deref())
}
