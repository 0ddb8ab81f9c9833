//! Procedural benchmark scenes, rule-based ground-truth annotation and
//! visibility filtering.
//!
//! Scenes are abstract layouts of boxes. Each archetype (stove, switch
//! panel, cabinet, ...) is placed in its own slot along the room so that
//! unrelated archetypes never fall within the one-meter proximity radius
//! of each other.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::proposals::{
    ObjectProposalBlock, ObjectProposalRecord, PartProposalBlock, PartProposalRecord, ProposalFile,
};
use crate::scene::{distance, Box3, NodeId, NodeKind, SceneGraph, SceneNode};

/// Center distance below which the proximity strategy annotates an edge.
pub const PROXIMITY_RADIUS: f64 = 1.0;
pub const DEFAULT_VISIBILITY_RADIUS: f64 = 0.05;
pub const DEFAULT_MIN_POINTS: usize = 10;
/// Surface samples drawn per node for visibility filtering.
pub const SURFACE_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Exact,
    Proximity,
    PartObject,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRule {
    pub first_label: String,
    pub relation: String,
    pub second_label: String,
    pub strategy: Strategy,
}

impl AnnotationRule {
    pub fn new(first: &str, relation: &str, second: &str, strategy: Strategy) -> Self {
        AnnotationRule {
            first_label: first.into(),
            relation: relation.into(),
            second_label: second.into(),
            strategy,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    pub rules: Vec<AnnotationRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualPair {
    pub first_id: NodeId,
    pub second_id: NodeId,
    pub relation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManualPairs {
    pub pairs: Vec<ManualPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: NodeId,
    pub relation: String,
    pub object: NodeId,
}

impl Triplet {
    pub fn new(subject: &NodeId, relation: &str, object: &NodeId) -> Self {
        Triplet {
            subject: subject.clone(),
            relation: relation.into(),
            object: object.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroundTruthFile {
    nodes: Vec<SceneNode>,
    triplets: Vec<Triplet>,
}

/// Scene nodes plus sorted, duplicate-free functional triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthFile", into = "GroundTruthFile")]
pub struct GroundTruthGraph {
    pub nodes: SceneGraph,
    pub triplets: Vec<Triplet>,
}

impl TryFrom<GroundTruthFile> for GroundTruthGraph {
    type Error = Error;

    fn try_from(f: GroundTruthFile) -> Result<Self> {
        GroundTruthGraph::new(SceneGraph::new(f.nodes)?, f.triplets)
    }
}

impl From<GroundTruthGraph> for GroundTruthFile {
    fn from(g: GroundTruthGraph) -> Self {
        GroundTruthFile {
            nodes: g.nodes.nodes().to_vec(),
            triplets: g.triplets,
        }
    }
}

impl GroundTruthGraph {
    /// Sorts and dedups `triplets`; every endpoint must exist.
    pub fn new(nodes: SceneGraph, triplets: Vec<Triplet>) -> Result<Self> {
        for t in &triplets {
            for id in [&t.subject, &t.object] {
                if !nodes.contains(id) {
                    return Err(Error::validation(format!(
                        "triplet references unknown node '{id}'"
                    )));
                }
            }
        }
        let triplets: Vec<Triplet> = triplets
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(GroundTruthGraph { nodes, triplets })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth always serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthGraph> {
    GroundTruthGraph::from_json(&read_file(path)?)
}

pub fn load_rules(path: &Path) -> Result<Vec<AnnotationRule>> {
    Ok(serde_json::from_str::<RuleFile>(&read_file(path)?)?.rules)
}

pub fn load_manual_pairs(path: &Path) -> Result<Vec<ManualPair>> {
    Ok(serde_json::from_str::<ManualPairs>(&read_file(path)?)?.pairs)
}

/// Labels every functional relation the generator knows about.
pub fn default_rules() -> Vec<AnnotationRule> {
    use Strategy::*;
    vec![
        AnnotationRule::new("knob", "turns on", "burner", Manual),
        AnnotationRule::new("switch", "turns on", "light", Manual),
        AnnotationRule::new("handle", "opens", "cabinet", PartObject),
        AnnotationRule::new("handle", "opens", "door", PartObject),
        AnnotationRule::new("lever", "activates", "toaster", PartObject),
        AnnotationRule::new("pedal", "opens", "trashcan", PartObject),
        AnnotationRule::new("faucet", "fills", "sink", Proximity),
        AnnotationRule::new("faucet", "fills", "bathtub", Proximity),
        AnnotationRule::new("curtain", "covers", "window", Proximity),
        AnnotationRule::new("faucet", "fills", "kettle", Exact),
        AnnotationRule::new("remote", "controls", "tv", Exact),
        AnnotationRule::new("outlet", "powers", "toaster", Exact),
        AnnotationRule::new("key", "unlocks", "lock", Exact),
        AnnotationRule::new("knife", "slices", "apple", Exact),
        AnnotationRule::new("sponge", "cleans", "countertop", Exact),
    ]
}

/// Applies `rules` to `scene`. Manual rules are realized by `manual`, whose
/// pairs are all applied.
fn with_label<'a>(
    scene: &'a SceneGraph,
    label: &'a str,
) -> impl Iterator<Item = &'a SceneNode> + 'a {
    scene.nodes().iter().filter(move |n| n.label == label)
}

pub fn annotate(
    scene: &SceneGraph,
    rules: &[AnnotationRule],
    manual: &[ManualPair],
) -> Result<GroundTruthGraph> {
    let mut triplets = Vec::new();
    for rule in rules {
        match rule.strategy {
            Strategy::Exact => {
                for a in with_label(scene, &rule.first_label) {
                    for b in with_label(scene, &rule.second_label) {
                        if a.id != b.id {
                            triplets.push(Triplet::new(&a.id, &rule.relation, &b.id));
                        }
                    }
                }
            }
            Strategy::Proximity => {
                for a in with_label(scene, &rule.first_label) {
                    let nearest = with_label(scene, &rule.second_label)
                        .filter(|b| b.id != a.id)
                        .map(|b| (distance(a.center, b.center), &b.id))
                        .min_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(y.1)));
                    if let Some((d, b)) = nearest {
                        if d < PROXIMITY_RADIUS {
                            triplets.push(Triplet::new(&a.id, &rule.relation, b));
                        }
                    }
                }
            }
            Strategy::PartObject => {
                for a in with_label(scene, &rule.first_label).filter(|n| n.kind == NodeKind::Part) {
                    let parent = a.parent.as_ref().expect("parts have parents");
                    if scene
                        .get(parent)
                        .is_some_and(|p| p.label == rule.second_label)
                    {
                        triplets.push(Triplet::new(&a.id, &rule.relation, parent));
                    }
                    for sib in scene.parts_of(parent) {
                        if sib.id != a.id && sib.label == rule.second_label {
                            triplets.push(Triplet::new(&a.id, &rule.relation, &sib.id));
                        }
                    }
                }
            }
            Strategy::Manual => {}
        }
    }
    for p in manual {
        for id in [&p.first_id, &p.second_id] {
            if !scene.contains(id) {
                return Err(Error::validation(format!(
                    "manual pair references unknown node '{id}'"
                )));
            }
        }
        triplets.push(Triplet::new(&p.first_id, &p.relation, &p.second_id));
    }
    GroundTruthGraph::new(scene.clone(), triplets)
}

/// Uniform samples on the surface of `b`, faces chosen by area.
pub fn sample_surface<R: Rng + ?Sized>(b: &Box3, n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let e = [
        b.max[0] - b.min[0],
        b.max[1] - b.min[1],
        b.max[2] - b.min[2],
    ];
    // Face pairs normal to x, y, z.
    let areas = [e[1] * e[2], e[0] * e[2], e[0] * e[1]];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut p = [
                b.min[0] + rng.random::<f64>() * e[0],
                b.min[1] + rng.random::<f64>() * e[1],
                b.min[2] + rng.random::<f64>() * e[2],
            ];
            if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut axis = 2;
                for (i, a) in areas.iter().enumerate() {
                    if r < *a {
                        axis = i;
                        break;
                    }
                    r -= a;
                }
                p[axis] = if rng.random::<bool>() {
                    b.max[axis]
                } else {
                    b.min[axis]
                };
            }
            p
        })
        .collect()
}

/// Spatial hash over points with cell size equal to the query radius.
struct PointGrid<'a> {
    cell: f64,
    points: &'a [[f64; 3]],
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [[f64; 3]], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        PointGrid {
            cell,
            points,
            cells,
        }
    }

    fn key(p: &[f64; 3], cell: f64) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    fn any_within(&self, q: &[f64; 3], radius: f64) -> bool {
        let k = Self::key(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if ids.iter().any(|&i| distance(self.points[i], *q) <= radius) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Keeps nodes with at least `min_points` samples within `radius` of the
/// observed cloud. Triplets touching a dropped node are removed, and parts
/// of dropped objects go with them.
pub fn visibility_filter(
    gt: &GroundTruthGraph,
    node_points: &BTreeMap<NodeId, Vec<[f64; 3]>>,
    observed: &[[f64; 3]],
    radius: f64,
    min_points: usize,
) -> Result<GroundTruthGraph> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "visibility radius {radius} must be positive"
        )));
    }
    let grid = PointGrid::new(observed, radius);
    let visible: BTreeSet<&NodeId> = gt
        .nodes
        .nodes()
        .iter()
        .filter(|n| {
            let retained = node_points.get(&n.id).map_or(0, |pts| {
                pts.iter().filter(|p| grid.any_within(p, radius)).count()
            });
            retained >= min_points
        })
        .map(|n| &n.id)
        .collect();
    let nodes = gt.nodes.retain(|n| visible.contains(&n.id));
    let triplets = gt
        .triplets
        .iter()
        .filter(|t| nodes.contains(&t.subject) && nodes.contains(&t.object))
        .cloned()
        .collect();
    GroundTruthGraph::new(nodes, triplets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomType {
    Kitchen,
    Livingroom,
    Bedroom,
    Bathroom,
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoomType::Kitchen => "kitchen",
            RoomType::Livingroom => "livingroom",
            RoomType::Bedroom => "bedroom",
            RoomType::Bathroom => "bathroom",
        })
    }
}

impl FromStr for RoomType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kitchen" => Ok(RoomType::Kitchen),
            "livingroom" | "living_room" => Ok(RoomType::Livingroom),
            "bedroom" => Ok(RoomType::Bedroom),
            "bathroom" => Ok(RoomType::Bathroom),
            other => Err(Error::InvalidParameter(format!(
                "unknown room type '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchetypeCounts {
    pub stoves: usize,
    pub switch_panels: usize,
    pub cabinets: usize,
    pub sinks: usize,
    pub bathtubs: usize,
    pub toasters: usize,
    pub tvs: usize,
    pub windows: usize,
}

impl Default for ArchetypeCounts {
    fn default() -> Self {
        ArchetypeCounts::for_room(RoomType::Kitchen)
    }
}

impl ArchetypeCounts {
    pub fn none() -> Self {
        ArchetypeCounts {
            stoves: 0,
            switch_panels: 0,
            cabinets: 0,
            sinks: 0,
            bathtubs: 0,
            toasters: 0,
            tvs: 0,
            windows: 0,
        }
    }

    pub fn for_room(room: RoomType) -> Self {
        let base = ArchetypeCounts::none();
        match room {
            RoomType::Kitchen => ArchetypeCounts {
                stoves: 1,
                switch_panels: 1,
                cabinets: 2,
                sinks: 1,
                toasters: 1,
                ..base
            },
            RoomType::Livingroom => ArchetypeCounts {
                switch_panels: 1,
                cabinets: 1,
                tvs: 1,
                windows: 1,
                ..base
            },
            RoomType::Bedroom => ArchetypeCounts {
                switch_panels: 1,
                cabinets: 2,
                windows: 1,
                ..base
            },
            RoomType::Bathroom => ArchetypeCounts {
                switch_panels: 1,
                cabinets: 1,
                sinks: 1,
                bathtubs: 1,
                ..base
            },
        }
    }

    fn total(&self) -> usize {
        self.stoves
            + self.switch_panels
            + self.cabinets
            + self.sinks
            + self.bathtubs
            + self.toasters
            + self.tvs
            + self.windows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub room: RoomType,
    pub counts: ArchetypeCounts,
    /// Knob/burner count per stove; drawn from 2..=5 when unset.
    pub burners_per_stove: Option<usize>,
    /// Switches per panel; drawn from 1..=3 when unset.
    pub switches_per_panel: Option<usize>,
    /// Distance between neighbouring switches on a panel, meters; each
    /// light is wall-mounted above its switch.
    pub spread: f64,
    /// Standard deviation of positional noise on controlled elements
    /// (burners, lights), meters. Zero leaves every pairing resolvable by
    /// proximity.
    pub jitter: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig::new(0, RoomType::Kitchen)
    }
}

impl GenConfig {
    pub fn new(seed: u64, room: RoomType) -> Self {
        GenConfig {
            seed,
            room,
            counts: ArchetypeCounts::for_room(room),
            burners_per_stove: None,
            switches_per_panel: None,
            spread: 0.5,
            jitter: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spread {} must be positive",
                self.spread
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "jitter {} must be non-negative",
                self.jitter
            )));
        }
        if let Some(k) = self.burners_per_stove {
            if k == 0 {
                return Err(Error::InvalidParameter(
                    "burners_per_stove must be at least 1".into(),
                ));
            }
        }
        if self.switches_per_panel == Some(0) {
            return Err(Error::InvalidParameter(
                "switches_per_panel must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the generator emits for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: SceneGraph,
    pub ground_truth: GroundTruthGraph,
    pub proposals: ProposalFile,
    pub rules: Vec<AnnotationRule>,
    pub manual: Vec<ManualPair>,
    /// Per-node surface samples for visibility filtering.
    pub node_points: BTreeMap<NodeId, Vec<[f64; 3]>>,
}

/// Incremental scene assembly with stable id allocation.
struct Builder {
    nodes: Vec<SceneNode>,
    triplets: Vec<Triplet>,
    manual: Vec<ManualPair>,
    part_blocks: Vec<PartProposalBlock>,
    objects: usize,
    parts: BTreeMap<usize, usize>,
}

impl Builder {
    fn object(&mut self, label: &str, bbox: Box3) -> (usize, NodeId) {
        let n = self.objects;
        self.objects += 1;
        let id = format!("obj_{n}");
        self.nodes.push(SceneNode::object(id.clone(), label, bbox));
        (n, NodeId(id))
    }

    fn part(&mut self, parent: (usize, &NodeId), label: &str, bbox: Box3) -> NodeId {
        let m = self.parts.entry(parent.0).or_insert(0);
        let id = format!("part_{}_{}", parent.0, m);
        *m += 1;
        self.nodes
            .push(SceneNode::part(id.clone(), label, parent.1, bbox));
        NodeId(id)
    }

    fn manual(&mut self, a: &NodeId, relation: &str, b: &NodeId) {
        self.manual.push(ManualPair {
            first_id: a.clone(),
            second_id: b.clone(),
            relation: relation.into(),
        });
        self.triplets.push(Triplet::new(a, relation, b));
    }

    fn part_proposal(
        &mut self,
        object: &NodeId,
        first: &str,
        relation: &str,
        second: &str,
        confidence: f64,
    ) {
        self.part_blocks.push(PartProposalBlock {
            object_id: object.clone(),
            proposals: vec![PartProposalRecord {
                first_item_name: first.into(),
                second_item_name: second.into(),
                interaction: relation.into(),
                confidence,
                is_one_to_one: true,
            }],
        });
    }
}

fn object_proposal(
    first: &str,
    relation: &str,
    second: &str,
    confidence: f64,
    one_to_one: bool,
    local: bool,
) -> ObjectProposalRecord {
    ObjectProposalRecord {
        first_item_name: first.into(),
        second_item_name: second.into(),
        interaction: relation.into(),
        confidence,
        is_one_to_one: one_to_one,
        is_local: local,
    }
}

/// Clamps a lateral displacement so neighbours of width `size` placed
/// `pitch` apart never touch.
fn lateral(dx: f64, pitch: f64, size: f64) -> f64 {
    let room = ((pitch - size) / 2.0 - 0.005).max(0.0);
    dx.clamp(-room, room)
}

/// Spacing between archetype slots along the room, meters.
const SLOT_SPACING: f64 = 3.5;

/// Generates a scene, its ground truth, and the proposal list a language
/// model would have produced for it. Deterministic in `config.seed`.
pub fn generate_scene(config: &GenConfig) -> Result<GeneratedScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.jitter.max(f64::MIN_POSITIVE)).expect("valid std dev");
    let jit = |rng: &mut ChaCha8Rng| {
        if config.jitter > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        }
    };
    let mut b = Builder {
        nodes: Vec::new(),
        triplets: Vec::new(),
        manual: Vec::new(),
        part_blocks: Vec::new(),
        objects: 0,
        parts: BTreeMap::new(),
    };
    let c = &config.counts;
    let mut slot = 0usize;
    let mut next_slot = |rng: &mut ChaCha8Rng| {
        let x = slot as f64 * SLOT_SPACING + rng.random_range(-0.2..0.2);
        slot += 1;
        x
    };

    for _ in 0..c.stoves {
        let k = match config.burners_per_stove {
            Some(k) => k,
            None => rng.random_range(2..=5),
        };
        let ox = next_slot(&mut rng);
        let pitch = rng.random_range(0.28..0.34);
        let width = pitch * k as f64 + 0.1;
        let stove = b.object(
            "stove",
            Box3::from_center([ox, 0.35, 0.45], [width, 0.6, 0.9]),
        );
        let offset = |i: usize| (i as f64 - (k as f64 - 1.0) / 2.0) * pitch;
        let knobs: Vec<NodeId> = (0..k)
            .map(|i| {
                b.part(
                    (stove.0, &stove.1),
                    "knob",
                    Box3::from_center([ox + offset(i), 0.08, 0.85], [0.05, 0.04, 0.05]),
                )
            })
            .collect();
        let burners: Vec<NodeId> = (0..k)
            .map(|i| {
                let x = ox + offset(i) + lateral(jit(&mut rng), pitch, 0.15);
                let y = 0.3 + jit(&mut rng).clamp(-0.15, 0.15);
                b.part(
                    (stove.0, &stove.1),
                    "burner",
                    Box3::from_center([x, y, 0.89], [0.15, 0.15, 0.02]),
                )
            })
            .collect();
        for (knob, burner) in knobs.iter().zip(&burners) {
            b.manual(knob, "turns on", burner);
        }
        b.part_proposal(&stove.1, "knob", "turns on", "burner", 0.9);
    }

    for _ in 0..c.switch_panels {
        let n = match config.switches_per_panel {
            Some(n) => n,
            None => rng.random_range(1..=3),
        };
        let ox = next_slot(&mut rng);
        let offset = |i: usize| (i as f64 - (n as f64 - 1.0) / 2.0) * config.spread;
        let switches: Vec<NodeId> = (0..n)
            .map(|i| {
                b.object(
                    "switch",
                    Box3::from_center([ox + offset(i), 0.02, 1.2], [0.08, 0.02, 0.12]),
                )
                .1
            })
            .collect();
        let lights: Vec<NodeId> = (0..n)
            .map(|i| {
                let x = ox + offset(i) + lateral(jit(&mut rng), config.spread, 0.2);
                let z = 1.75 + jit(&mut rng).clamp(-0.3, 0.3);
                b.object("light", Box3::from_center([x, 0.15, z], [0.2, 0.2, 0.2]))
                    .1
            })
            .collect();
        for (s, l) in switches.iter().zip(&lights) {
            b.manual(s, "turns on", l);
        }
    }

    for _ in 0..c.cabinets {
        let ox = next_slot(&mut rng);
        let w = rng.random_range(0.4..0.8);
        let cab = b.object("cabinet", Box3::from_center([ox, 0.3, 0.5], [w, 0.6, 1.0]));
        let handle = b.part(
            (cab.0, &cab.1),
            "handle",
            Box3::from_center([ox + w / 2.0 - 0.06, 0.02, 0.8], [0.03, 0.03, 0.15]),
        );
        b.triplets.push(Triplet::new(&handle, "opens", &cab.1));
        b.part_proposal(&cab.1, "handle", "opens", "cabinet", 0.95);
    }

    for _ in 0..c.sinks {
        let ox = next_slot(&mut rng);
        let sink = b
            .object(
                "sink",
                Box3::from_center([ox, 0.35, 0.85], [0.6, 0.45, 0.2]),
            )
            .1;
        let faucet = b
            .object(
                "faucet",
                Box3::from_center([ox, 0.68, 1.05], [0.06, 0.15, 0.25]),
            )
            .1;
        b.triplets.push(Triplet::new(&faucet, "fills", &sink));
    }

    for _ in 0..c.bathtubs {
        let ox = next_slot(&mut rng);
        let tub = b
            .object(
                "bathtub",
                Box3::from_center([ox, 0.4, 0.3], [1.6, 0.75, 0.6]),
            )
            .1;
        let faucet = b
            .object(
                "faucet",
                Box3::from_center([ox - 0.7, 0.05, 0.75], [0.08, 0.1, 0.2]),
            )
            .1;
        b.triplets.push(Triplet::new(&faucet, "fills", &tub));
    }

    for _ in 0..c.toasters {
        let ox = next_slot(&mut rng);
        let toaster = b.object(
            "toaster",
            Box3::from_center([ox, 0.3, 1.0], [0.3, 0.2, 0.2]),
        );
        let lever = b.part(
            (toaster.0, &toaster.1),
            "lever",
            Box3::from_center([ox + 0.13, 0.3, 1.05], [0.04, 0.04, 0.02]),
        );
        let outlet = b
            .object(
                "outlet",
                Box3::from_center([ox + 0.4, 0.01, 1.1], [0.08, 0.02, 0.12]),
            )
            .1;
        b.triplets
            .push(Triplet::new(&lever, "activates", &toaster.1));
        b.part_proposal(&toaster.1, "lever", "activates", "toaster", 0.9);
        b.triplets.push(Triplet::new(&outlet, "powers", &toaster.1));
    }

    for _ in 0..c.tvs {
        let ox = next_slot(&mut rng);
        let tv = b
            .object("tv", Box3::from_center([ox, 0.05, 1.3], [1.2, 0.08, 0.7]))
            .1;
        let remote = b
            .object(
                "remote",
                Box3::from_center(
                    [ox + rng.random_range(-0.5..0.5), 2.5, 0.45],
                    [0.05, 0.18, 0.03],
                ),
            )
            .1;
        b.triplets.push(Triplet::new(&remote, "controls", &tv));
    }

    for _ in 0..c.windows {
        let ox = next_slot(&mut rng);
        let window = b
            .object(
                "window",
                Box3::from_center([ox, 0.02, 1.6], [1.2, 0.04, 1.2]),
            )
            .1;
        let curtain = b
            .object(
                "curtain",
                Box3::from_center([ox, 0.12, 1.5], [1.4, 0.04, 1.8]),
            )
            .1;
        b.triplets.push(Triplet::new(&curtain, "covers", &window));
    }
    debug_assert_eq!(slot, c.total());

    let scene = SceneGraph::new(b.nodes)?;
    let ground_truth = GroundTruthGraph::new(scene.clone(), b.triplets)?;

    let mut object_level = Vec::new();
    if c.switch_panels > 0 {
        object_level.push(object_proposal(
            "switch", "turns on", "light", 0.85, true, false,
        ));
    }
    if c.sinks > 0 {
        object_level.push(object_proposal("faucet", "fills", "sink", 0.9, true, true));
    }
    if c.bathtubs > 0 {
        object_level.push(object_proposal(
            "faucet", "fills", "bathtub", 0.9, true, true,
        ));
    }
    if c.toasters > 0 {
        object_level.push(object_proposal(
            "outlet", "powers", "toaster", 0.9, false, false,
        ));
    }
    if c.tvs > 0 {
        object_level.push(object_proposal(
            "remote", "controls", "tv", 0.9, false, false,
        ));
    }
    if c.windows > 0 {
        object_level.push(object_proposal(
            "curtain", "covers", "window", 0.9, true, true,
        ));
    }
    let proposals = ProposalFile {
        part_level: b.part_blocks,
        object_level: ObjectProposalBlock {
            proposals: object_level,
        },
    };

    let node_points = scene
        .nodes()
        .iter()
        .map(|n| {
            (
                n.id.clone(),
                sample_surface(&n.bbox, SURFACE_SAMPLES, &mut rng),
            )
        })
        .collect();

    Ok(GeneratedScene {
        scene,
        ground_truth,
        proposals,
        rules: default_rules(),
        manual: b.manual,
        node_points,
    })
}
