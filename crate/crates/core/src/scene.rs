//! Object- and part-centric scene graphs.
//!
//! A [`SceneGraph`] is a flat list of [`SceneNode`]s whose parent links
//! form a forest of depth at most two (object → part). Node order is
//! preserved from the input and is treated as the creation order by the
//! evaluation protocol.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};

/// Caller-supplied node identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// Axis-aligned 3D box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Box3 {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Box3 { min, max }
    }

    /// Box of the given full extent centered on `center`.
    pub fn from_center(center: [f64; 3], size: [f64; 3]) -> Self {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for i in 0..3 {
            min[i] = center[i] - size[i] / 2.0;
            max[i] = center[i] + size[i] / 2.0;
        }
        Box3 { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| {
            self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i]
        })
    }

    pub fn volume(&self) -> f64 {
        (0..3)
            .map(|i| (self.max[i] - self.min[i]).max(0.0))
            .product()
    }

    pub fn center(&self) -> [f64; 3] {
        [
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
            (self.min[2] + self.max[2]) / 2.0,
        ]
    }

    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && other.max[i] <= self.max[i])
    }

    pub fn intersection_volume(&self, other: &Box3) -> f64 {
        (0..3)
            .map(|i| (self.max[i].min(other.max[i]) - self.min[i].max(other.min[i])).max(0.0))
            .product()
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &Box3) -> Box3 {
        let mut out = *self;
        for i in 0..3 {
            out.min[i] = out.min[i].min(other.min[i]);
            out.max[i] = out.max[i].max(other.max[i]);
        }
        out
    }

    pub fn translated(&self, offset: [f64; 3]) -> Box3 {
        let mut out = *self;
        for i in 0..3 {
            out.min[i] += offset[i];
            out.max[i] += offset[i];
        }
        out
    }
}

/// Volume intersection-over-union of two axis-aligned boxes.
///
/// Returns 0 whenever the union has zero volume, so point boxes never
/// match anything (not even themselves).
pub fn iou3(a: &Box3, b: &Box3) -> f64 {
    let inter = a.intersection_volume(b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Axis-aligned 2D box in normalized image coordinates (`xyxy`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Box2 {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let b = Box2 { min, max };
        if !b.is_valid() {
            return Err(Error::validation(format!(
                "2D box {min:?}-{max:?} must satisfy 0 <= min <= max <= 1"
            )));
        }
        Ok(b)
    }

    pub fn is_valid(&self) -> bool {
        (0..2).all(|i| 0.0 <= self.min[i] && self.min[i] <= self.max[i] && self.max[i] <= 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }

    pub fn intersection_area(&self, other: &Box2) -> f64 {
        let w = self.max[0].min(other.max[0]) - self.min[0].max(other.min[0]);
        let h = self.max[1].min(other.max[1]) - self.min[1].max(other.min[1]);
        w.max(0.0) * h.max(0.0)
    }
}

/// Verdict of the part-detection overlap filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartFilterVerdict {
    Keep,
    /// The part mostly lies outside its parent: a background detection.
    DiscardBackground,
    /// The part covers most of its parent: the object detected as its own part.
    DiscardObjectSized,
}

/// Minimum share of the part box that must overlap the parent object.
pub const PART_MIN_OVERLAP_OF_PART: f64 = 0.3;
/// Maximum share of the object box a part may cover.
pub const PART_MAX_OVERLAP_OF_OBJECT: f64 = 0.7;

/// Classifies a 2D part detection against its parent object's box.
///
/// The background test runs first; both thresholds are strict, so a
/// ratio of exactly 0.3 or exactly 0.7 keeps the part.
pub fn part_box_filter(part: &Box2, object: &Box2) -> Result<PartFilterVerdict> {
    let part_area = part.area();
    let object_area = object.area();
    if part_area <= 0.0 {
        return Err(Error::Degenerate("part box has zero area".into()));
    }
    if object_area <= 0.0 {
        return Err(Error::Degenerate("object box has zero area".into()));
    }
    let inter = part.intersection_area(object);
    if inter / part_area < PART_MIN_OVERLAP_OF_PART {
        return Ok(PartFilterVerdict::DiscardBackground);
    }
    if inter / object_area > PART_MAX_OVERLAP_OF_OBJECT {
        return Ok(PartFilterVerdict::DiscardObjectSized);
    }
    Ok(PartFilterVerdict::Keep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Object,
    Part,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: NodeId,
    pub label: String,
    #[serde(default)]
    pub description: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub parent: Option<NodeId>,
    pub center: [f64; 3],
    #[serde(rename = "box")]
    pub bbox: Box3,
    #[serde(default)]
    pub confidence: Option<f64>,
}

impl SceneNode {
    pub fn object(id: impl Into<String>, label: impl Into<String>, bbox: Box3) -> Self {
        SceneNode {
            id: NodeId(id.into()),
            label: label.into(),
            description: String::new(),
            kind: NodeKind::Object,
            parent: None,
            center: bbox.center(),
            bbox,
            confidence: None,
        }
    }

    pub fn part(
        id: impl Into<String>,
        label: impl Into<String>,
        parent: &NodeId,
        bbox: Box3,
    ) -> Self {
        SceneNode {
            id: NodeId(id.into()),
            label: label.into(),
            description: String::new(),
            kind: NodeKind::Part,
            parent: Some(parent.clone()),
            center: bbox.center(),
            bbox,
            confidence: None,
        }
    }
}

/// On-disk layout of a scene file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub nodes: Vec<SceneNode>,
}

/// A validated scene graph. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile", into = "SceneFile")]
pub struct SceneGraph {
    nodes: Vec<SceneNode>,
    index: HashMap<NodeId, usize>,
}

impl TryFrom<SceneFile> for SceneGraph {
    type Error = Error;

    fn try_from(file: SceneFile) -> Result<Self> {
        SceneGraph::new(file.nodes)
    }
}

impl From<SceneGraph> for SceneFile {
    fn from(g: SceneGraph) -> Self {
        SceneFile { nodes: g.nodes }
    }
}

impl SceneGraph {
    /// Validates and indexes `nodes`. Errors name the offending node.
    pub fn new(nodes: Vec<SceneNode>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate node id '{}'", n.id)));
            }
        }
        for n in &nodes {
            if !n.bbox.is_valid() {
                return Err(Error::validation(format!(
                    "node '{}' has an inverted or non-finite box",
                    n.id
                )));
            }
            if !n.center.iter().all(|c| c.is_finite()) || !n.bbox.contains_point(n.center) {
                return Err(Error::validation(format!(
                    "node '{}' has its center outside its box",
                    n.id
                )));
            }
            if let Some(c) = n.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::validation(format!(
                        "node '{}' has confidence {c} outside [0,1]",
                        n.id
                    )));
                }
            }
            match (n.kind, &n.parent) {
                (NodeKind::Object, Some(_)) => {
                    return Err(Error::validation(format!(
                        "object '{}' must not have a parent",
                        n.id
                    )));
                }
                (NodeKind::Part, None) => {
                    return Err(Error::validation(format!("part '{}' has no parent", n.id)));
                }
                (NodeKind::Part, Some(p)) => match index.get(p) {
                    None => {
                        return Err(Error::validation(format!(
                            "part '{}' references missing parent '{p}'",
                            n.id
                        )));
                    }
                    Some(&pi) if nodes[pi].kind != NodeKind::Object => {
                        return Err(Error::validation(format!(
                            "part '{}' has parent '{p}' which is not an object",
                            n.id
                        )));
                    }
                    Some(_) => {}
                },
                (NodeKind::Object, None) => {}
            }
        }
        Ok(SceneGraph { nodes, index })
    }

    pub fn nodes(&self) -> &[SceneNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<&SceneNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Position of a node in creation order.
    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Object)
    }

    /// Parts whose parent is `object`, in creation order.
    pub fn parts_of<'a>(&'a self, object: &'a NodeId) -> impl Iterator<Item = &'a SceneNode> + 'a {
        self.nodes
            .iter()
            .filter(move |n| n.parent.as_ref() == Some(object))
    }

    /// Number of parent links (one per part).
    pub fn hierarchy_edge_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.parent.is_some()).count()
    }

    /// Keeps only nodes accepted by `keep`; parts of dropped objects are
    /// dropped with them.
    pub fn retain(&self, mut keep: impl FnMut(&SceneNode) -> bool) -> SceneGraph {
        let kept: Vec<bool> = self.nodes.iter().map(&mut keep).collect();
        let nodes = self
            .nodes
            .iter()
            .zip(&kept)
            .filter(|(n, &k)| {
                k && n
                    .parent
                    .as_ref()
                    .is_none_or(|p| self.index.get(p).is_some_and(|&pi| kept[pi]))
            })
            .map(|(n, _)| n.clone())
            .collect();
        SceneGraph::new(nodes).expect("subset of a valid graph is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene graphs always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json())
    }
}

/// Reads and validates a scene file.
pub fn load_scene(path: &Path) -> Result<SceneGraph> {
    SceneGraph::from_json(&read_file(path)?)
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
