//! Relation templates and candidate-edge instantiation.
//!
//! Each [`FunctionalProposal`] (e.g. "knob turns on burner") is expanded
//! into an [`EdgeGroup`] holding every candidate edge between nodes whose
//! labels match the template, a shared length scale, and the factor plan
//! that decides which factors the group contributes to inference.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::scene::{distance, NodeId, NodeKind, SceneGraph, SceneNode};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "level", content = "object_id", rename_all = "snake_case")]
pub enum ProposalScope {
    /// Part–object and part–part relations inside one object.
    PartLevel(NodeId),
    /// Object–object relations across the scene.
    ObjectLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalProposal {
    pub first_item_name: String,
    pub second_item_name: String,
    pub interaction: String,
    pub confidence: f64,
    pub is_one_to_one: bool,
    /// Only meaningful for object-level proposals.
    pub is_local: bool,
    pub scope: ProposalScope,
}

impl FunctionalProposal {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::validation(format!(
                "proposal '{} {} {}' has confidence {} outside [0,1]",
                self.first_item_name, self.interaction, self.second_item_name, self.confidence
            )));
        }
        Ok(())
    }

    pub fn factor_plan(&self) -> FactorPlan {
        match (&self.scope, self.is_one_to_one, self.is_local) {
            (ProposalScope::PartLevel(_), true, _) => FactorPlan::ProximityAndCardinality,
            (ProposalScope::PartLevel(_), false, _) => FactorPlan::ProximityOnly,
            (ProposalScope::ObjectLevel, true, _) => FactorPlan::ProximityAndCardinality,
            (ProposalScope::ObjectLevel, false, true) => FactorPlan::ProximityOnly,
            (ProposalScope::ObjectLevel, false, false) => FactorPlan::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorPlan {
    /// Edges keep their semantic confidence; no variables are created.
    None,
    ProximityOnly,
    ProximityAndCardinality,
}

impl FactorPlan {
    pub fn has_cardinality(self) -> bool {
        self == FactorPlan::ProximityAndCardinality
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub String);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EdgeId {
    fn from(s: &str) -> Self {
        EdgeId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEdge {
    pub id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub interaction: String,
    /// Euclidean distance between the endpoint centers, in meters.
    pub length: f64,
    pub semantic_confidence: f64,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGroup {
    pub id: usize,
    pub proposal: FunctionalProposal,
    pub edges: Vec<CandidateEdge>,
    /// Median edge length; zero for an empty group.
    pub lambda: f64,
    pub factor_plan: FactorPlan,
}

/// Lower median; 0 for an empty slice.
pub fn lower_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

fn label_matches(node: &SceneNode, name: &str) -> bool {
    node.label.trim().eq_ignore_ascii_case(name.trim())
}

/// Expands one proposal into its full candidate edge set.
///
/// Unresolvable labels are not an error: the group is returned empty and
/// a warning is reported, since detection routinely misses nodes.
pub fn instantiate_edges(
    scene: &SceneGraph,
    proposal: &FunctionalProposal,
    group_id: usize,
) -> (EdgeGroup, Vec<String>) {
    let mut warnings = Vec::new();
    let pool: Vec<&SceneNode> = match &proposal.scope {
        ProposalScope::PartLevel(object) => match scene.get(object) {
            Some(o) if o.kind == NodeKind::Object => {
                std::iter::once(o).chain(scene.parts_of(object)).collect()
            }
            _ => {
                warnings.push(format!(
                    "proposal scope '{object}' is not an object in the scene"
                ));
                Vec::new()
            }
        },
        ProposalScope::ObjectLevel => scene.objects().collect(),
    };

    let sources: Vec<&SceneNode> = pool
        .iter()
        .copied()
        .filter(|n| label_matches(n, &proposal.first_item_name))
        .collect();
    let targets: Vec<&SceneNode> = pool
        .iter()
        .copied()
        .filter(|n| label_matches(n, &proposal.second_item_name))
        .collect();
    if !pool.is_empty() {
        if sources.is_empty() {
            warnings.push(format!(
                "no node labelled '{}' for proposal '{}'",
                proposal.first_item_name, proposal.interaction
            ));
        }
        if targets.is_empty() {
            warnings.push(format!(
                "no node labelled '{}' for proposal '{}'",
                proposal.second_item_name, proposal.interaction
            ));
        }
    }

    let mut edges = Vec::with_capacity(sources.len() * targets.len());
    for s in &sources {
        for t in &targets {
            if s.id == t.id {
                continue;
            }
            edges.push(CandidateEdge {
                id: EdgeId(format!("g{group_id}_e{}", edges.len())),
                source: s.id.clone(),
                target: t.id.clone(),
                interaction: proposal.interaction.clone(),
                length: distance(s.center, t.center),
                semantic_confidence: proposal.confidence,
                group: group_id,
            });
        }
    }
    let lengths: Vec<f64> = edges.iter().map(|e| e.length).collect();
    let group = EdgeGroup {
        id: group_id,
        proposal: proposal.clone(),
        lambda: lower_median(&lengths),
        factor_plan: proposal.factor_plan(),
        edges,
    };
    (group, warnings)
}

/// Builds every group: part-level groups first (ordered by object id, then
/// input order), then object-level groups in input order.
pub fn build_all_groups(
    scene: &SceneGraph,
    proposals: &[FunctionalProposal],
) -> (Vec<EdgeGroup>, Vec<String>) {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| match &proposals[i].scope {
            ProposalScope::PartLevel(o) => (0, Some(o)),
            ProposalScope::ObjectLevel => (1, None),
        };
        key(a).cmp(&key(b)).then(a.cmp(&b))
    });
    let mut groups = Vec::with_capacity(order.len());
    let mut warnings = Vec::new();
    for (gid, &i) in order.iter().enumerate() {
        let (g, w) = instantiate_edges(scene, &proposals[i], gid);
        warnings.extend(w.into_iter().map(|w| format!("proposal {i}: {w}")));
        groups.push(g);
    }
    (groups, warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartProposalRecord {
    pub first_item_name: String,
    pub second_item_name: String,
    pub interaction: String,
    pub confidence: f64,
    pub is_one_to_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProposalRecord {
    pub first_item_name: String,
    pub second_item_name: String,
    pub interaction: String,
    pub confidence: f64,
    pub is_one_to_one: bool,
    pub is_local: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartProposalBlock {
    pub object_id: NodeId,
    pub proposals: Vec<PartProposalRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectProposalBlock {
    pub proposals: Vec<ObjectProposalRecord>,
}

/// On-disk proposals: one block per object for part-level output, plus
/// one object-level block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposalFile {
    #[serde(default)]
    pub part_level: Vec<PartProposalBlock>,
    #[serde(default)]
    pub object_level: ObjectProposalBlock,
}

impl ProposalFile {
    pub fn to_proposals(&self) -> Result<Vec<FunctionalProposal>> {
        let mut out = Vec::new();
        for block in &self.part_level {
            for p in &block.proposals {
                out.push(FunctionalProposal {
                    first_item_name: p.first_item_name.clone(),
                    second_item_name: p.second_item_name.clone(),
                    interaction: p.interaction.clone(),
                    confidence: p.confidence,
                    is_one_to_one: p.is_one_to_one,
                    is_local: true,
                    scope: ProposalScope::PartLevel(block.object_id.clone()),
                });
            }
        }
        for p in &self.object_level.proposals {
            out.push(FunctionalProposal {
                first_item_name: p.first_item_name.clone(),
                second_item_name: p.second_item_name.clone(),
                interaction: p.interaction.clone(),
                confidence: p.confidence,
                is_one_to_one: p.is_one_to_one,
                is_local: p.is_local,
                scope: ProposalScope::ObjectLevel,
            });
        }
        for p in &out {
            p.validate()?;
        }
        Ok(out)
    }

    pub fn from_proposals(proposals: &[FunctionalProposal]) -> ProposalFile {
        let mut file = ProposalFile::default();
        for p in proposals {
            match &p.scope {
                ProposalScope::PartLevel(object) => {
                    let rec = PartProposalRecord {
                        first_item_name: p.first_item_name.clone(),
                        second_item_name: p.second_item_name.clone(),
                        interaction: p.interaction.clone(),
                        confidence: p.confidence,
                        is_one_to_one: p.is_one_to_one,
                    };
                    match file.part_level.iter_mut().find(|b| &b.object_id == object) {
                        Some(b) => b.proposals.push(rec),
                        None => file.part_level.push(PartProposalBlock {
                            object_id: object.clone(),
                            proposals: vec![rec],
                        }),
                    }
                }
                ProposalScope::ObjectLevel => {
                    file.object_level.proposals.push(ObjectProposalRecord {
                        first_item_name: p.first_item_name.clone(),
                        second_item_name: p.second_item_name.clone(),
                        interaction: p.interaction.clone(),
                        confidence: p.confidence,
                        is_one_to_one: p.is_one_to_one,
                        is_local: p.is_local,
                    })
                }
            }
        }
        file
    }
}

pub fn load_proposals(path: &Path) -> Result<Vec<FunctionalProposal>> {
    let file: ProposalFile = serde_json::from_str(&read_file(path)?)?;
    file.to_proposals()
}
