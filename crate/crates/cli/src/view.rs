//! JSON shapes shared by the CLI output and the HTTP API.

use fsg_core::inference::PosteriorEdge;
use fsg_core::pipeline::{binary_entropy, Pipeline};
use fsg_core::{EdgeId, Result, SceneNode};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct EdgeView<'a> {
    #[serde(flatten)]
    pub edge: &'a PosteriorEdge,
    pub accepted: bool,
    /// Observed value when the edge is clamped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct GraphView<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<&'a str>,
    pub nodes: &'a [SceneNode],
    pub edges: Vec<EdgeView<'a>>,
    pub log_partition: f64,
    pub tau: f64,
    pub warnings: &'a [String],
    pub diagnostics: &'a [String],
}

fn evidence_of(pipeline: &Pipeline, edge: &EdgeId) -> Option<bool> {
    let slot = pipeline.slot(edge)?;
    pipeline.evidence().get(&slot.var).map(|o| o.value())
}

pub fn edge_views<'a>(
    pipeline: &Pipeline,
    posterior: &'a [PosteriorEdge],
    tau: f64,
) -> Vec<EdgeView<'a>> {
    posterior
        .iter()
        .map(|e| EdgeView {
            edge: e,
            accepted: e.confidence >= tau,
            evidence: evidence_of(pipeline, &e.id),
        })
        .collect()
}

pub fn graph_view<'a>(
    id: Option<&'a str>,
    pipeline: &'a Pipeline,
    posterior: &'a [PosteriorEdge],
    tau: f64,
) -> GraphView<'a> {
    GraphView {
        id,
        nodes: pipeline.scene.nodes(),
        edges: edge_views(pipeline, posterior, tau),
        log_partition: pipeline.summary().log_partition,
        tau,
        warnings: &pipeline.warnings,
        diagnostics: &pipeline.summary().diagnostics,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub id: EdgeId,
    pub confidence: f64,
    pub entropy: f64,
}

/// Unclamped factor-planned edges by descending marginal entropy; ties by
/// edge id.
pub fn suggestions(pipeline: &Pipeline) -> Result<Vec<Suggestion>> {
    let mut out: Vec<Suggestion> = pipeline
        .posterior()?
        .into_iter()
        .filter(|e| {
            pipeline
                .slot(&e.id)
                .is_some_and(|s| !pipeline.evidence().contains_key(&s.var))
        })
        .map(|e| Suggestion {
            entropy: binary_entropy(e.confidence),
            confidence: e.confidence,
            id: e.id,
        })
        .collect();
    out.sort_by(|a, b| {
        b.entropy
            .total_cmp(&a.entropy)
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(out)
}
