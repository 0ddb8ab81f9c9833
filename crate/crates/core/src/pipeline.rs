//! End-to-end assembly: scene and proposals in, posterior edges out, with
//! incremental evidence updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorgraph::{build_graph, FactorComponent, VarId};
use crate::inference::{
    infer, infer_all, update_confidences, Evidence, InferenceConfig, InferenceSummary, Observation,
    PosteriorEdge,
};
use crate::proposals::{build_all_groups, EdgeGroup, EdgeId, FunctionalProposal};
use crate::scene::SceneGraph;

/// Location of a factor-planned edge in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeSlot {
    pub var: VarId,
    /// Index into `Pipeline::components`.
    pub component: usize,
}

/// A scene with its candidate edges, factor components, current evidence
/// and the inference result that reflects that evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub scene: SceneGraph,
    pub proposals: Vec<FunctionalProposal>,
    pub config: InferenceConfig,
    pub groups: Vec<EdgeGroup>,
    pub warnings: Vec<String>,
    pub components: Vec<FactorComponent>,
    evidence: Evidence,
    summary: InferenceSummary,
}

impl Pipeline {
    pub fn new(
        scene: SceneGraph,
        proposals: Vec<FunctionalProposal>,
        config: InferenceConfig,
    ) -> Result<Self> {
        config.validate()?;
        for p in &proposals {
            p.validate()?;
        }
        let (groups, warnings) = build_all_groups(&scene, &proposals);
        let components = build_graph(&groups, config.b)?;
        let evidence = Evidence::new();
        let summary = infer_all(&components, &evidence, &config)?;
        Ok(Pipeline {
            scene,
            proposals,
            config,
            groups,
            warnings,
            components,
            evidence,
            summary,
        })
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn summary(&self) -> &InferenceSummary {
        &self.summary
    }

    pub fn posterior(&self) -> Result<Vec<PosteriorEdge>> {
        update_confidences(&self.groups, &self.components, &self.summary)
    }

    /// Whether `edge` names any candidate edge, planned or not.
    pub fn has_edge(&self, edge: &EdgeId) -> bool {
        self.groups
            .iter()
            .any(|g| g.edges.iter().any(|e| &e.id == edge))
    }

    pub fn slot(&self, edge: &EdgeId) -> Option<EdgeSlot> {
        self.components.iter().enumerate().find_map(|(i, c)| {
            c.variables
                .iter()
                .find(|v| &v.edge == edge)
                .map(|v| EdgeSlot {
                    var: v.id,
                    component: i,
                })
        })
    }

    fn slot_or_err(&self, edge: &EdgeId) -> Result<EdgeSlot> {
        if let Some(s) = self.slot(edge) {
            return Ok(s);
        }
        if self.has_edge(edge) {
            Err(Error::validation(format!(
                "edge '{edge}' carries no factors and cannot take evidence"
            )))
        } else {
            Err(Error::NotFound(format!("edge '{edge}'")))
        }
    }

    /// Clamps `edge` and recomputes its component only. Re-asserting the
    /// same observation is a no-op; the opposite one is a conflict.
    pub fn set_evidence(&mut self, edge: &EdgeId, observed: bool) -> Result<EdgeSlot> {
        let slot = self.slot_or_err(edge)?;
        let obs = Observation::from_bool(observed);
        match self.evidence.get(&slot.var) {
            Some(&existing) if existing == obs => return Ok(slot),
            Some(_) => {
                return Err(Error::Conflict(format!(
                    "edge '{edge}' is already clamped to {}",
                    !observed
                )));
            }
            None => {}
        }
        self.evidence.insert(slot.var, obs);
        self.recompute(slot.component);
        Ok(slot)
    }

    /// Removes the clamp on `edge` and recomputes its component.
    pub fn retract(&mut self, edge: &EdgeId) -> Result<EdgeSlot> {
        let slot = self.slot_or_err(edge)?;
        if self.evidence.remove(&slot.var).is_none() {
            return Err(Error::NotFound(format!("no evidence on edge '{edge}'")));
        }
        self.recompute(slot.component);
        Ok(slot)
    }

    fn recompute(&mut self, component: usize) {
        let c = &self.components[component];
        let local: Evidence = self
            .evidence
            .iter()
            .filter(|(v, _)| c.local_index(**v).is_some())
            .map(|(v, o)| (*v, *o))
            .collect();
        let result = infer(c, &local, &self.config);
        let entry = self
            .summary
            .components
            .iter_mut()
            .find(|r| r.component == c.id)
            .expect("every component has a result");
        entry.result = result;
        self.summary.refresh();
    }

    /// Marginals keyed by edge id for factor-planned edges.
    pub fn marginals_by_edge(&self) -> BTreeMap<EdgeId, f64> {
        self.components
            .iter()
            .flat_map(|c| c.variables.iter())
            .filter_map(|v| {
                self.summary
                    .marginals
                    .get(&v.id)
                    .map(|m| (v.edge.clone(), *m))
            })
            .collect()
    }
}

/// Binary entropy in nats; 0 at p in {0, 1}.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}
