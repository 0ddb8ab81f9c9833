//! The dual factor graph: one binary variable per candidate edge.
//!
//! Every factor-planned edge becomes a variable with a Bernoulli
//! proximity prior. One-to-one groups additionally place a cardinality
//! factor on each endpoint node, over the variables of that group
//! incident to the node. Connected components are inferred independently.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposals::{EdgeGroup, EdgeId, FactorPlan};
use crate::scene::NodeId;

pub const DEFAULT_B: f64 = 0.25;
/// Floor for the `x = 0` entry of a prior table when `p` reaches 1.
pub const PRIOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub edge: EdgeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnaryPrior {
    pub variable: VarId,
    pub p: f64,
}

impl UnaryPrior {
    /// Potential table `[phi(0), phi(1)]`.
    pub fn table(&self) -> [f64; 2] {
        [(1.0 - self.p).max(PRIOR_FLOOR), self.p]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityFactor {
    pub node: NodeId,
    pub variables: Vec<VarId>,
    pub b: f64,
}

impl CardinalityFactor {
    pub fn value(&self, active: usize) -> f64 {
        cardinality_value(active, self.b).expect("b validated at construction")
    }
}

/// `exp(-length / lambda)`; a non-positive `lambda` (all endpoints
/// coincident) yields 1.
pub fn proximity_prior(length: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    (-length.max(0.0) / lambda).exp()
}

/// Soft one-to-one penalty: `b^2` with no active edge, `b^(d-1)` otherwise.
pub fn cardinality_value(active: usize, b: f64) -> Result<f64> {
    check_b(b)?;
    Ok(if active == 0 {
        b * b
    } else {
        b.powi(active as i32 - 1)
    })
}

pub(crate) fn check_b(b: f64) -> Result<()> {
    if b > 0.0 && b < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "cardinality penalty b = {b} must lie in (0,1)"
        )))
    }
}

/// A connected set of variables and the factors over them.
///
/// `variables` and `priors` are aligned and sorted by variable id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorComponent {
    pub id: usize,
    pub variables: Vec<Variable>,
    pub priors: Vec<UnaryPrior>,
    pub factors: Vec<CardinalityFactor>,
}

impl FactorComponent {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn local_index(&self, var: VarId) -> Option<usize> {
        self.variables.binary_search_by_key(&var, |v| v.id).ok()
    }

    pub fn contains_edge(&self, edge: &EdgeId) -> bool {
        self.variables.iter().any(|v| &v.edge == edge)
    }

    /// Factor scopes as local variable indices.
    pub fn local_scopes(&self) -> Vec<Vec<usize>> {
        self.factors
            .iter()
            .map(|f| {
                f.variables
                    .iter()
                    .map(|v| {
                        self.local_index(*v)
                            .expect("factor variables belong to the component")
                    })
                    .collect()
            })
            .collect()
    }

    /// Builds a component directly from prior probabilities and factor
    /// scopes over local indices. Connectivity is not enforced; use
    /// [`split_components`] when it matters.
    pub fn from_tables(id: usize, priors: &[f64], scopes: &[Vec<usize>], b: f64) -> Result<Self> {
        check_b(b)?;
        let variables = (0..priors.len())
            .map(|i| Variable {
                id: VarId(i),
                edge: EdgeId(format!("v{i}")),
            })
            .collect();
        let priors = priors
            .iter()
            .enumerate()
            .map(|(i, &p)| UnaryPrior {
                variable: VarId(i),
                p,
            })
            .collect();
        let mut factors = Vec::with_capacity(scopes.len());
        for (j, scope) in scopes.iter().enumerate() {
            factors.push(CardinalityFactor {
                node: NodeId(format!("n{j}")),
                variables: scope.iter().map(|&v| VarId(v)).collect(),
                b,
            });
        }
        let c = FactorComponent {
            id,
            variables,
            priors,
            factors,
        };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        for (j, f) in self.factors.iter().enumerate() {
            if f.variables.is_empty() {
                return Err(Error::validation(format!("factor {j} has an empty scope")));
            }
            if let Some(v) = f.variables.iter().find(|v| self.local_index(**v).is_none()) {
                return Err(Error::validation(format!(
                    "factor {j} references unknown variable {}",
                    v.0
                )));
            }
        }
        if self.priors.iter().any(|p| !(p.p > 0.0 && p.p <= 1.0)) {
            return Err(Error::validation("prior probabilities must lie in (0,1]"));
        }
        Ok(())
    }

    /// True when the variable–factor graph contains no cycle, i.e. when
    /// loopy belief propagation is exact on it.
    pub fn is_forest(&self) -> bool {
        // A bipartite graph is a forest iff edges = nodes - components.
        let n = self.variables.len() + self.factors.len();
        let edges: usize = self.factors.iter().map(|f| f.variables.len()).sum();
        let mut uf = UnionFind::new(n);
        for (j, scope) in self.local_scopes().iter().enumerate() {
            for &v in scope {
                uf.union(v, self.variables.len() + j);
            }
        }
        let comps = (0..n).filter(|&i| uf.find(i) == i).count();
        edges + comps == n
    }
}

/// The whole dual graph before component splitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub variables: Vec<Variable>,
    pub priors: Vec<UnaryPrior>,
    pub factors: Vec<CardinalityFactor>,
}

impl FactorGraph {
    pub fn from_groups(groups: &[EdgeGroup], b: f64) -> Result<Self> {
        check_b(b)?;
        let mut g = FactorGraph::default();
        for group in groups.iter().filter(|g| g.factor_plan != FactorPlan::None) {
            let first = g.variables.len();
            for edge in &group.edges {
                let id = VarId(g.variables.len());
                g.variables.push(Variable {
                    id,
                    edge: edge.id.clone(),
                });
                g.priors.push(UnaryPrior {
                    variable: id,
                    p: proximity_prior(edge.length, group.lambda),
                });
            }
            if group.factor_plan.has_cardinality() {
                let mut incident: Vec<(NodeId, Vec<VarId>)> = Vec::new();
                let mut add = |node: &NodeId, var: VarId| match incident
                    .iter_mut()
                    .find(|(n, _)| n == node)
                {
                    Some((_, vars)) => {
                        if !vars.contains(&var) {
                            vars.push(var)
                        }
                    }
                    None => incident.push((node.clone(), vec![var])),
                };
                for (k, edge) in group.edges.iter().enumerate() {
                    add(&edge.source, VarId(first + k));
                }
                for (k, edge) in group.edges.iter().enumerate() {
                    add(&edge.target, VarId(first + k));
                }
                for (node, mut variables) in incident {
                    variables.sort();
                    g.factors.push(CardinalityFactor { node, variables, b });
                }
            }
        }
        Ok(g)
    }

    pub fn components(&self) -> Vec<FactorComponent> {
        split_components(&self.variables, &self.priors, &self.factors)
    }
}

/// Variables and factors of each group with a factor plan, split into
/// connected components.
pub fn build_graph(groups: &[EdgeGroup], b: f64) -> Result<Vec<FactorComponent>> {
    Ok(FactorGraph::from_groups(groups, b)?.components())
}

/// Partitions variables and factors into connected components. Component
/// ids follow the smallest variable id they contain.
pub fn split_components(
    variables: &[Variable],
    priors: &[UnaryPrior],
    factors: &[CardinalityFactor],
) -> Vec<FactorComponent> {
    let pos: BTreeMap<VarId, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id, i))
        .collect();
    let mut uf = UnionFind::new(variables.len());
    for f in factors {
        let mut it = f.variables.iter().filter_map(|v| pos.get(v));
        if let Some(&first) = it.next() {
            for &other in it {
                uf.union(first, other);
            }
        }
    }
    let mut root_to_comp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut comps: Vec<FactorComponent> = Vec::new();
    let mut order: Vec<usize> = (0..variables.len()).collect();
    order.sort_by_key(|&i| variables[i].id);
    for i in order {
        let root = uf.find(i);
        let c = *root_to_comp.entry(root).or_insert_with(|| {
            comps.push(FactorComponent {
                id: comps.len(),
                variables: Vec::new(),
                priors: Vec::new(),
                factors: Vec::new(),
            });
            comps.len() - 1
        });
        comps[c].variables.push(variables[i].clone());
        let prior = priors
            .iter()
            .find(|p| p.variable == variables[i].id)
            .copied()
            .unwrap_or(UnaryPrior {
                variable: variables[i].id,
                p: 1.0,
            });
        comps[c].priors.push(prior);
    }
    for f in factors {
        if let Some(&first) = f.variables.first().and_then(|v| pos.get(v)) {
            let c = root_to_comp[&uf.find(first)];
            comps[c].factors.push(f.clone());
        }
    }
    comps
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
