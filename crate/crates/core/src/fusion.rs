//! Multi-view instance association and merging.
//!
//! Detections arrive frame by frame. Each is first gated spatially
//! (3D IoU against existing instances of the same kind) and then
//! semantically (cosine similarity of appearance features). Objects of
//! a frame are merged before its parts, and a part may only merge into
//! a part instance of the object instance its parent detection joined.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::scene::{iou3, Box3, NodeKind, SceneGraph, SceneNode};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.03;
pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    /// Spatial gate: IoU must be strictly greater.
    pub iou_thresh: f64,
    /// Semantic gate: cosine similarity must be strictly greater.
    pub cos_thresh: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        AssociationParams {
            iou_thresh: DEFAULT_IOU_THRESHOLD,
            cos_thresh: DEFAULT_COSINE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub bbox: Box3,
    pub feature: Vec<f64>,
    pub label: String,
    pub kind: NodeKind,
    /// Index (into the same detection list) of the frame-local parent object.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub id: usize,
    pub kind: NodeKind,
    pub bbox: Box3,
    /// Label counts in first-seen order.
    pub label_votes: Vec<(String, usize)>,
    pub feature: Vec<f64>,
    #[serde(skip)]
    feature_sum: Vec<f64>,
    pub members: Vec<Detection>,
    pub parts: Vec<usize>,
    pub parent: Option<usize>,
}

impl Instance {
    fn new(id: usize, det: &Detection, parent: Option<usize>) -> Self {
        let mut inst = Instance {
            id,
            kind: det.kind,
            bbox: det.bbox,
            label_votes: Vec::new(),
            feature: Vec::new(),
            feature_sum: vec![0.0; det.feature.len()],
            members: Vec::new(),
            parts: Vec::new(),
            parent,
        };
        inst.absorb(det);
        inst
    }

    fn absorb(&mut self, det: &Detection) {
        self.bbox = if self.members.is_empty() {
            det.bbox
        } else {
            self.bbox.hull(&det.bbox)
        };
        match self.label_votes.iter_mut().find(|(l, _)| *l == det.label) {
            Some((_, c)) => *c += 1,
            None => self.label_votes.push((det.label.clone(), 1)),
        }
        for (s, f) in self.feature_sum.iter_mut().zip(&det.feature) {
            *s += f;
        }
        self.feature = normalized(&self.feature_sum);
        self.members.push(det.clone());
    }

    /// Most frequent label; ties go to the label seen first.
    pub fn label(&self) -> &str {
        let mut best: Option<&(String, usize)> = None;
        for v in &self.label_votes {
            if best.is_none_or(|b| v.1 > b.1) {
                best = Some(v);
            }
        }
        best.map_or("", |b| b.0.as_str())
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Returns the id of the first candidate (ascending id) of the same kind
/// that passes both the spatial and the semantic gate.
pub fn associate<'a>(
    det: &Detection,
    candidates: impl IntoIterator<Item = &'a Instance>,
    params: AssociationParams,
) -> Result<Option<usize>> {
    let mut candidates: Vec<&Instance> = candidates
        .into_iter()
        .filter(|i| i.kind == det.kind)
        .collect();
    candidates.sort_by_key(|i| i.id);
    for inst in candidates {
        if inst.feature.len() != det.feature.len() {
            return Err(Error::FeatureDimension {
                expected: inst.feature.len(),
                got: det.feature.len(),
            });
        }
        if iou3(&det.bbox, &inst.bbox) <= params.iou_thresh {
            continue;
        }
        if cosine_similarity(&det.feature, &inst.feature) > params.cos_thresh {
            return Ok(Some(inst.id));
        }
    }
    Ok(None)
}

/// Fuses an ordered detection stream into instances.
pub fn merge_stream(dets: &[Detection], params: AssociationParams) -> Result<Vec<Instance>> {
    let mut instances: Vec<Instance> = Vec::new();
    let mut assigned: Vec<Option<usize>> = vec![None; dets.len()];
    let dim = dets.first().map(|d| d.feature.len());

    let mut start = 0;
    while start < dets.len() {
        let frame = dets[start].frame;
        let mut end = start;
        while end < dets.len() && dets[end].frame == frame {
            end += 1;
        }
        if end < dets.len() && dets[end].frame < frame {
            return Err(Error::validation(format!(
                "detection {end} is from frame {} after frame {frame}",
                dets[end].frame
            )));
        }

        for i in (start..end).filter(|&i| dets[i].kind == NodeKind::Object) {
            let det = &dets[i];
            check_dim(dim, det)?;
            if det.parent.is_some() {
                return Err(Error::validation(format!(
                    "object detection {i} has a parent"
                )));
            }
            let id = match associate(det, instances.iter(), params)? {
                Some(id) => {
                    instances[id].absorb(det);
                    id
                }
                None => {
                    let id = instances.len();
                    instances.push(Instance::new(id, det, None));
                    id
                }
            };
            assigned[i] = Some(id);
        }

        for i in (start..end).filter(|&i| dets[i].kind == NodeKind::Part) {
            let det = &dets[i];
            check_dim(dim, det)?;
            let parent_det = det
                .parent
                .filter(|&p| p >= start && p < end && dets[p].kind == NodeKind::Object)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "part detection {i} references an unknown parent detection"
                    ))
                })?;
            let parent = assigned[parent_det].expect("objects of the frame are assigned first");
            let siblings: Vec<&Instance> = instances[parent]
                .parts
                .iter()
                .map(|&p| &instances[p])
                .collect();
            let id = match associate(det, siblings, params)? {
                Some(id) => {
                    instances[id].absorb(det);
                    id
                }
                None => {
                    let id = instances.len();
                    instances.push(Instance::new(id, det, Some(parent)));
                    instances[parent].parts.push(id);
                    id
                }
            };
            assigned[i] = Some(id);
        }
        start = end;
    }
    Ok(instances)
}

fn check_dim(dim: Option<usize>, det: &Detection) -> Result<()> {
    match dim {
        Some(d) if d != det.feature.len() => Err(Error::FeatureDimension {
            expected: d,
            got: det.feature.len(),
        }),
        _ => Ok(()),
    }
}

/// Builds a scene graph with `obj_<n>` / `part_<n>_<m>` ids.
pub fn instances_to_scene(instances: &[Instance]) -> SceneGraph {
    let mut nodes = Vec::new();
    for (n, obj) in instances
        .iter()
        .filter(|i| i.kind == NodeKind::Object)
        .enumerate()
    {
        let parent = SceneNode::object(format!("obj_{n}"), obj.label(), obj.bbox);
        let parent_id = parent.id.clone();
        nodes.push(parent);
        for (m, &p) in obj.parts.iter().enumerate() {
            let part = &instances[p];
            nodes.push(SceneNode::part(
                format!("part_{n}_{m}"),
                part.label(),
                &parent_id,
                part.bbox,
            ));
        }
    }
    SceneGraph::new(nodes).expect("instance hierarchy is a valid forest")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionsFile {
    pub frames: Vec<FrameDetections>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDetections {
    pub objects: Vec<ObjectDetectionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectDetectionRecord {
    #[serde(rename = "box")]
    pub bbox: Box3,
    pub feature: Vec<f64>,
    pub label: String,
    #[serde(default)]
    pub parts: Vec<PartDetectionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartDetectionRecord {
    #[serde(rename = "box")]
    pub bbox: Box3,
    pub feature: Vec<f64>,
    pub label: String,
}

impl DetectionsFile {
    /// Flattens nested frames into an ordered detection stream.
    pub fn to_stream(&self) -> Result<Vec<Detection>> {
        let mut out = Vec::new();
        for (frame, f) in self.frames.iter().enumerate() {
            for o in &f.objects {
                if !o.bbox.is_valid() {
                    return Err(Error::validation(format!(
                        "frame {frame}: object '{}' has an invalid box",
                        o.label
                    )));
                }
                let parent = out.len();
                out.push(Detection {
                    frame,
                    bbox: o.bbox,
                    feature: o.feature.clone(),
                    label: o.label.clone(),
                    kind: NodeKind::Object,
                    parent: None,
                });
                for p in &o.parts {
                    if !p.bbox.is_valid() {
                        return Err(Error::validation(format!(
                            "frame {frame}: part '{}' has an invalid box",
                            p.label
                        )));
                    }
                    out.push(Detection {
                        frame,
                        bbox: p.bbox,
                        feature: p.feature.clone(),
                        label: p.label.clone(),
                        kind: NodeKind::Part,
                        parent: Some(parent),
                    });
                }
            }
        }
        Ok(out)
    }
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let file: DetectionsFile = serde_json::from_str(&read_file(path)?)?;
    file.to_stream()
}
