//! Evaluation protocol: node matching, triplet metrics, and calibration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::inference::PosteriorEdge;
use crate::proposals::EdgeId;
use crate::scene::{iou3, NodeId, SceneGraph, SceneNode};
use crate::synth::GroundTruthGraph;

pub const DEFAULT_BINS: usize = 4;
pub const DEFAULT_AMBIGUOUS_CLASSES: [&str; 2] = ["switch", "knob"];
pub const DEFAULT_BASELINE_EXCLUSIONS: [&str; 4] = ["outlet", "switch", "power", "remote"];

/// Lowercases and collapses runs of non-alphanumerics into single spaces.
pub fn normalize_label(s: &str) -> String {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ranks candidate labels against a query label.
pub trait LabelSimilarity: Send + Sync {
    /// Similarity in [0, 1]; 0 means unrelated.
    fn score(&self, query: &str, candidate: &str) -> f64;

    /// Candidate indices by descending score; ties keep candidate order.
    fn rank(&self, query: &str, candidates: &[String]) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, self.score(query, c)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored
    }

    /// Whether `target` is among the `k` best-ranked candidates for `query`
    /// with a positive score.
    fn in_top_k(&self, query: &str, target: &str, candidates: &[String], k: usize) -> bool {
        let target = normalize_label(target);
        self.rank(query, candidates)
            .into_iter()
            .take(k)
            .any(|(i, s)| s > 0.0 && normalize_label(&candidates[i]) == target)
    }
}

/// Normalized exact match scores 1; otherwise token-set Jaccard scaled
/// just below 1, so an exact match always ranks first.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenSimilarity;

impl LabelSimilarity for TokenSimilarity {
    fn score(&self, query: &str, candidate: &str) -> f64 {
        let (q, c) = (normalize_label(query), normalize_label(candidate));
        if q == c {
            return 1.0;
        }
        let qt: BTreeSet<&str> = q.split(' ').filter(|t| !t.is_empty()).collect();
        let ct: BTreeSet<&str> = c.split(' ').filter(|t| !t.is_empty()).collect();
        let union = qt.union(&ct).count();
        if union == 0 {
            return 0.0;
        }
        0.99 * qt.intersection(&ct).count() as f64 / union as f64
    }
}

/// Distinct labels in first-seen order.
pub fn vocabulary<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    labels
        .into_iter()
        .filter(|l| seen.insert(normalize_label(l)))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exclusive,
    #[default]
    NonExclusive,
}

/// How predicted nodes are scanned for each ground-truth node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// First prediction, in creation order, with non-zero IoU whose label
    /// ranks the ground-truth label within top-K.
    #[default]
    FirstAccepted,
    /// Decide on the first non-zero-IoU prediction only.
    FirstOverlap,
    /// Highest-IoU accepted prediction.
    BestIou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMatch {
    pub gt: NodeId,
    pub pred: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub mode: MatchMode,
    pub scan: ScanMode,
    pub k: usize,
    pub matches: Vec<NodeMatch>,
    pub matched: usize,
    pub recall: f64,
}

impl MatchReport {
    pub fn pred_for(&self, gt: &NodeId) -> Option<&NodeId> {
        self.matches
            .iter()
            .find(|m| &m.gt == gt)
            .and_then(|m| m.pred.as_ref())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Matches each ground-truth node to a predicted node by spatial overlap
/// and label rank. `vocab` is the label list ranks are taken over.
pub fn match_nodes(
    gt: &SceneGraph,
    pred: &SceneGraph,
    k: usize,
    sim: &dyn LabelSimilarity,
    vocab: &[String],
    mode: MatchMode,
    scan: ScanMode,
) -> MatchReport {
    let mut used = vec![false; pred.len()];
    let accepts = |g: &SceneNode, p: &SceneNode| sim.in_top_k(&p.label, &g.label, vocab, k);
    let mut matches = Vec::with_capacity(gt.len());
    for g in gt.nodes() {
        let mut chosen: Option<(usize, f64)> = None;
        for (j, p) in pred.nodes().iter().enumerate() {
            if mode == MatchMode::Exclusive && used[j] {
                continue;
            }
            let iou = iou3(&g.bbox, &p.bbox);
            if iou <= 0.0 {
                continue;
            }
            let ok = accepts(g, p);
            match scan {
                ScanMode::FirstOverlap => {
                    if ok {
                        chosen = Some((j, iou));
                    }
                    break;
                }
                ScanMode::FirstAccepted => {
                    if ok {
                        chosen = Some((j, iou));
                        break;
                    }
                }
                ScanMode::BestIou => {
                    if ok && chosen.is_none_or(|(_, best)| iou > best) {
                        chosen = Some((j, iou));
                    }
                }
            }
        }
        if let Some((j, _)) = chosen {
            used[j] = true;
        }
        matches.push(NodeMatch {
            gt: g.id.clone(),
            pred: chosen.map(|(j, _)| pred.nodes()[j].id.clone()),
        });
    }
    let matched = matches.iter().filter(|m| m.pred.is_some()).count();
    MatchReport {
        mode,
        scan,
        k,
        recall: ratio(matched, matches.len()),
        matches,
        matched,
    }
}

/// A predicted functional edge; confidence may be absent for methods that
/// do not score their edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedEdge {
    pub id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub interaction: String,
    #[serde(default)]
    pub confidence: Option<f64>,
}

impl From<&PosteriorEdge> for PredictedEdge {
    fn from(e: &PosteriorEdge) -> Self {
        PredictedEdge {
            id: e.id.clone(),
            source: e.source.clone(),
            target: e.target.clone(),
            interaction: e.interaction.clone(),
            confidence: Some(e.confidence),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionFile {
    nodes: Vec<SceneNode>,
    edges: Vec<PredictedEdge>,
}

/// Predicted nodes and edges; reads the `infer` output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictionFile", into = "PredictionFile")]
pub struct PredictedGraph {
    pub nodes: SceneGraph,
    pub edges: Vec<PredictedEdge>,
}

impl TryFrom<PredictionFile> for PredictedGraph {
    type Error = Error;

    fn try_from(f: PredictionFile) -> Result<Self> {
        PredictedGraph::new(SceneGraph::new(f.nodes)?, f.edges)
    }
}

impl From<PredictedGraph> for PredictionFile {
    fn from(g: PredictedGraph) -> Self {
        PredictionFile {
            nodes: g.nodes.nodes().to_vec(),
            edges: g.edges,
        }
    }
}

impl PredictedGraph {
    pub fn new(nodes: SceneGraph, edges: Vec<PredictedEdge>) -> Result<Self> {
        for e in &edges {
            for id in [&e.source, &e.target] {
                if !nodes.contains(id) {
                    return Err(Error::validation(format!(
                        "edge '{}' references unknown node '{id}'",
                        e.id
                    )));
                }
            }
            if let Some(c) = e.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::validation(format!(
                        "edge '{}' has confidence {c} outside [0,1]",
                        e.id
                    )));
                }
            }
        }
        Ok(PredictedGraph { nodes, edges })
    }

    pub fn from_posterior(nodes: SceneGraph, posterior: &[PosteriorEdge]) -> Self {
        PredictedGraph {
            nodes,
            edges: posterior.iter().map(PredictedEdge::from).collect(),
        }
    }

    /// Edges with labels that match the ground truth exactly, confidence 1.
    pub fn from_ground_truth(gt: &GroundTruthGraph) -> Self {
        let edges = gt
            .triplets
            .iter()
            .enumerate()
            .map(|(i, t)| PredictedEdge {
                id: EdgeId(format!("gt_{i}")),
                source: t.subject.clone(),
                target: t.object.clone(),
                interaction: t.relation.clone(),
                confidence: Some(1.0),
            })
            .collect();
        PredictedGraph {
            nodes: gt.nodes.clone(),
            edges,
        }
    }

    fn label(&self, id: &NodeId) -> &str {
        self.nodes.get(id).map_or("", |n| n.label.as_str())
    }
}

pub fn load_predictions(path: &std::path::Path) -> Result<PredictedGraph> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_node: usize,
    pub k_rel: usize,
    pub tau: f64,
    pub bins: usize,
    pub mode: MatchMode,
    pub scan: ScanMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_node: 3,
            k_rel: 3,
            tau: 0.5,
            bins: DEFAULT_BINS,
            mode: MatchMode::NonExclusive,
            scan: ScanMode::FirstAccepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletReport {
    pub n_ma: usize,
    pub n_de: usize,
    pub n_gt: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub node_assoc_recall: f64,
    pub edge_pred_recall: f64,
    pub overall_triplet_recall: f64,
    /// True when any reported ratio had a zero denominator.
    pub degenerate: bool,
}

/// One scored prediction for calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub edge: EdgeId,
    pub confidence: f64,
    pub correct: bool,
    pub subject_label: String,
    pub object_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletEvaluation {
    pub nodes: MatchReport,
    pub triplets: TripletReport,
    /// Every prediction carrying a confidence, thresholded or not.
    pub samples: Vec<CalibrationSample>,
}

/// Scores predicted triplets against ground truth. A GT triplet is matched
/// when a detected prediction (confidence at least `tau`) connects the
/// predicted nodes matched to its subject and object, in that direction,
/// with a relation label in the top `k_rel`.
pub fn triplet_eval(
    gt: &GroundTruthGraph,
    pred: &PredictedGraph,
    config: &EvalConfig,
    node_sim: &dyn LabelSimilarity,
    rel_sim: &dyn LabelSimilarity,
) -> TripletEvaluation {
    let node_vocab = vocabulary(gt.nodes.nodes().iter().map(|n| n.label.as_str()));
    let rel_vocab = vocabulary(gt.triplets.iter().map(|t| t.relation.as_str()));
    let nodes = match_nodes(
        &gt.nodes,
        &pred.nodes,
        config.k_node,
        node_sim,
        &node_vocab,
        config.mode,
        config.scan,
    );

    let pair_of =
        |t: &crate::synth::Triplet| Some((nodes.pred_for(&t.subject)?, nodes.pred_for(&t.object)?));
    let relation_ok = |e: &PredictedEdge, t: &crate::synth::Triplet| {
        rel_sim.in_top_k(&e.interaction, &t.relation, &rel_vocab, config.k_rel)
    };
    let hits = |e: &PredictedEdge, t: &crate::synth::Triplet| {
        pair_of(t).is_some_and(|(s, o)| &e.source == s && &e.target == o)
    };

    let detected: Vec<&PredictedEdge> = pred
        .edges
        .iter()
        .filter(|e| e.confidence.is_some_and(|c| c >= config.tau))
        .collect();
    let n_de = detected.len();
    let n_gt = gt.triplets.len();
    let mut n_ma = 0;
    let mut n_assoc = 0;
    for t in &gt.triplets {
        let node_hits: Vec<&&PredictedEdge> = detected.iter().filter(|e| hits(e, t)).collect();
        if !node_hits.is_empty() {
            n_assoc += 1;
            if node_hits.iter().any(|e| relation_ok(e, t)) {
                n_ma += 1;
            }
        }
    }
    let precision = ratio(n_ma, n_de);
    let recall = ratio(n_ma, n_gt);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let triplets = TripletReport {
        n_ma,
        n_de,
        n_gt,
        precision,
        recall,
        f1,
        node_assoc_recall: ratio(n_assoc, n_gt),
        edge_pred_recall: ratio(n_ma, n_assoc),
        overall_triplet_recall: recall,
        degenerate: n_de == 0 || n_gt == 0 || n_assoc == 0,
    };

    let samples = pred
        .edges
        .iter()
        .filter_map(|e| {
            let confidence = e.confidence?;
            let correct = gt.triplets.iter().any(|t| hits(e, t) && relation_ok(e, t));
            Some(CalibrationSample {
                edge: e.id.clone(),
                confidence,
                correct,
                subject_label: pred.label(&e.source).to_string(),
                object_label: pred.label(&e.target).to_string(),
            })
        })
        .collect();
    TripletEvaluation {
        nodes,
        triplets,
        samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Fraction correct; 0 for empty bins.
    pub accuracy: f64,
    /// Mean confidence; 0 for empty bins.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub n: usize,
}

impl CalibrationReport {
    /// Expected calibration error recomputed from the bins.
    pub fn ece_from_bins(bins: &[CalibrationBin], n: usize) -> f64 {
        bins.iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
            .sum()
    }

    /// Reliability-diagram rows: `lo,hi,count,accuracy,confidence`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,count,accuracy,confidence\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lo, b.hi, b.count, b.accuracy, b.confidence
            ));
        }
        out
    }
}

/// Bin of confidence `c` among `m` equal-width bins; boundaries go to the
/// upper bin, and 1.0 to the top bin.
pub fn bin_index(c: f64, m: usize) -> usize {
    ((c * m as f64).floor() as usize).min(m - 1)
}

/// Expected calibration error over `m` equal-width bins.
pub fn ece(samples: &[(f64, bool)], m: usize) -> Result<CalibrationReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples(
            "calibration needs at least one sample".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("bin count must be positive".into()));
    }
    let mut count = vec![0usize; m];
    let mut correct = vec![0usize; m];
    let mut conf_sum = vec![0.0; m];
    for &(c, ok) in samples {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!(
                "confidence {c} outside [0,1]"
            )));
        }
        let i = bin_index(c, m);
        count[i] += 1;
        correct[i] += ok as usize;
        conf_sum[i] += c;
    }
    let bins: Vec<CalibrationBin> = (0..m)
        .map(|i| CalibrationBin {
            lo: i as f64 / m as f64,
            hi: (i + 1) as f64 / m as f64,
            count: count[i],
            accuracy: ratio(correct[i], count[i]),
            confidence: if count[i] == 0 {
                0.0
            } else {
                conf_sum[i] / count[i] as f64
            },
        })
        .collect();
    let n = samples.len();
    let ece = CalibrationReport::ece_from_bins(&bins, n);
    Ok(CalibrationReport { bins, ece, n })
}

fn mentions_any(label: &str, classes: &[String]) -> bool {
    let l = label.to_lowercase();
    classes.iter().any(|c| l.contains(&c.to_lowercase()))
}

/// Calibration restricted to samples whose subject or object label
/// contains one of `classes` (case-insensitive substring).
pub fn ambiguous_subset_ece(
    samples: &[CalibrationSample],
    classes: &[String],
    m: usize,
) -> Result<CalibrationReport> {
    let subset: Vec<(f64, bool)> = samples
        .iter()
        .filter(|s| {
            mentions_any(&s.subject_label, classes) || mentions_any(&s.object_label, classes)
        })
        .map(|s| (s.confidence, s.correct))
        .collect();
    if subset.is_empty() {
        return Err(Error::EmptySamples(
            "no samples match the ambiguous classes".into(),
        ));
    }
    ece(&subset, m)
}

pub fn default_ambiguous_classes() -> Vec<String> {
    DEFAULT_AMBIGUOUS_CLASSES
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn default_baseline_exclusions() -> Vec<String> {
    DEFAULT_BASELINE_EXCLUSIONS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Fills missing confidences with `default`, except on edges touching a
/// node whose label contains one of `excluded`; those stay missing.
pub fn baseline_confidence_fill(
    pred: &PredictedGraph,
    default: f64,
    excluded: &[String],
) -> PredictedGraph {
    let mut out = pred.clone();
    for e in &mut out.edges {
        if e.confidence.is_none()
            && !mentions_any(pred.label(&e.source), excluded)
            && !mentions_any(pred.label(&e.target), excluded)
        {
            e.confidence = Some(default);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub nodes: MatchReport,
    pub triplets: TripletReport,
    pub calibration: Option<CalibrationReport>,
    pub ambiguous_calibration: Option<CalibrationReport>,
}

/// Full report: matching, triplet metrics, and overall plus ambiguous-class
/// calibration (absent when there are no scored samples).
pub fn evaluate(
    gt: &GroundTruthGraph,
    pred: &PredictedGraph,
    config: &EvalConfig,
    ambiguous: &[String],
) -> EvalReport {
    let sim = TokenSimilarity;
    let ev = triplet_eval(gt, pred, config, &sim, &sim);
    let pairs: Vec<(f64, bool)> = ev
        .samples
        .iter()
        .map(|s| (s.confidence, s.correct))
        .collect();
    EvalReport {
        config: *config,
        calibration: ece(&pairs, config.bins).ok(),
        ambiguous_calibration: ambiguous_subset_ece(&ev.samples, ambiguous, config.bins).ok(),
        nodes: ev.nodes,
        triplets: ev.triplets,
    }
}
