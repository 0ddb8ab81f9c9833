//! Marginal inference over factor components.
//!
//! Small components are solved exactly by a variable-by-variable sum that
//! tracks, per open cardinality factor, whether it already has an active
//! variable. Larger ones use synchronous, damped loopy belief propagation
//! in which cardinality-factor messages are computed from distributions
//! over the number of active neighbours, so no factor table of size `2^k`
//! is ever built.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorgraph::{cardinality_value, FactorComponent, VarId};
use crate::proposals::{EdgeGroup, EdgeId, FactorPlan};
use crate::scene::NodeId;

/// Hard cap on the brute-force oracle.
pub const BRUTE_FORCE_MAX_VARS: usize = 24;
/// Upper bound accepted for `exact_max_vars`.
pub const EXACT_MAX_VARS_LIMIT: usize = 64;
/// Above this size the oracle accumulates in log space.
const LOG_SPACE_ABOVE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub exact_max_vars: usize,
    pub bp_damping: f64,
    pub bp_max_iters: usize,
    pub bp_tol: f64,
    pub b: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            exact_max_vars: 16,
            bp_damping: 0.3,
            bp_max_iters: 1000,
            bp_tol: 1e-10,
            b: crate::factorgraph::DEFAULT_B,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        crate::factorgraph::check_b(self.b)?;
        if !(0.0..1.0).contains(&self.bp_damping) {
            return Err(Error::InvalidParameter(format!(
                "bp_damping {} must lie in [0,1)",
                self.bp_damping
            )));
        }
        if self.bp_tol.is_nan() || self.bp_tol <= 0.0 {
            return Err(Error::InvalidParameter("bp_tol must be positive".into()));
        }
        if self.exact_max_vars > EXACT_MAX_VARS_LIMIT {
            return Err(Error::InvalidParameter(format!(
                "exact_max_vars {} exceeds {EXACT_MAX_VARS_LIMIT}",
                self.exact_max_vars
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    ObservedTrue,
    ObservedFalse,
}

impl Observation {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Observation::ObservedTrue
        } else {
            Observation::ObservedFalse
        }
    }

    pub fn value(self) -> bool {
        self == Observation::ObservedTrue
    }
}

pub type Evidence = BTreeMap<VarId, Observation>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    LoopyBp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    /// `P(x = 1)` per variable.
    pub marginals: BTreeMap<VarId, f64>,
    /// Log of the (evidence-restricted) normalizer; a Bethe estimate on the
    /// belief-propagation path.
    pub log_partition: f64,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
}

/// Prior tables with evidence applied: the unobserved state gets weight 0.
fn clamped_tables(component: &FactorComponent, evidence: &Evidence) -> Vec<[f64; 2]> {
    component
        .variables
        .iter()
        .zip(&component.priors)
        .map(|(v, p)| {
            let mut t = p.table();
            match evidence.get(&v.id) {
                Some(Observation::ObservedTrue) => t[0] = 0.0,
                Some(Observation::ObservedFalse) => t[1] = 0.0,
                None => {}
            }
            t
        })
        .collect()
}

fn pin_evidence(
    component: &FactorComponent,
    evidence: &Evidence,
    marginals: &mut BTreeMap<VarId, f64>,
) {
    for v in &component.variables {
        if let Some(obs) = evidence.get(&v.id) {
            marginals.insert(v.id, if obs.value() { 1.0 } else { 0.0 });
        }
    }
}

/// Reference enumeration of the joint. Deliberately naive: it evaluates
/// the unnormalized product term by term for every assignment.
pub fn brute_force_marginals(
    component: &FactorComponent,
    evidence: &Evidence,
) -> Result<InferenceResult> {
    let n = component.len();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(Error::ComponentTooLarge {
            vars: n,
            max: BRUTE_FORCE_MAX_VARS,
        });
    }
    let scopes = component.local_scopes();
    let b: Vec<f64> = component.factors.iter().map(|f| f.b).collect();
    let priors: Vec<[f64; 2]> = component.priors.iter().map(|p| p.table()).collect();
    let fixed: Vec<Option<bool>> = component
        .variables
        .iter()
        .map(|v| evidence.get(&v.id).map(|o| o.value()))
        .collect();
    let log_space = n > LOG_SPACE_ABOVE;

    let mut x = vec![false; n];
    let mut total = if log_space { f64::NEG_INFINITY } else { 0.0 };
    let mut on = vec![total; n];
    for code in 0u64..(1u64 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (code >> i) & 1 == 1;
        }
        if fixed
            .iter()
            .zip(&x)
            .any(|(f, &xi)| f.is_some_and(|v| v != xi))
        {
            continue;
        }
        let mut factors = Vec::with_capacity(n + scopes.len());
        for (i, &xi) in x.iter().enumerate() {
            factors.push(priors[i][xi as usize]);
        }
        for (scope, &bf) in scopes.iter().zip(&b) {
            let active = scope.iter().filter(|&&v| x[v]).count();
            factors.push(cardinality_value(active, bf)?);
        }
        if log_space {
            let lw: f64 = factors.iter().map(|f| f.ln()).sum();
            total = log_add(total, lw);
            for i in 0..n {
                if x[i] {
                    on[i] = log_add(on[i], lw);
                }
            }
        } else {
            let w: f64 = factors.iter().product();
            total += w;
            for i in 0..n {
                if x[i] {
                    on[i] += w;
                }
            }
        }
    }
    let mut marginals = BTreeMap::new();
    for (i, v) in component.variables.iter().enumerate() {
        let m = if log_space {
            (on[i] - total).exp()
        } else {
            on[i] / total
        };
        marginals.insert(v.id, m.clamp(0.0, 1.0));
    }
    pin_evidence(component, evidence, &mut marginals);
    Ok(InferenceResult {
        marginals,
        log_partition: if log_space { total } else { total.ln() },
        method: Method::Exact,
        converged: true,
        iterations: 0,
    })
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Exact marginals by summing out variables in index order while tracking,
/// for every factor whose scope is partly processed, whether any of its
/// variables is active. Beyond the first active variable each further one
/// scales a cardinality factor by `b`, so that bit is a sufficient state.
/// Each marginal is a ratio of two such sums.
fn exact_marginals(component: &FactorComponent, evidence: &Evidence) -> InferenceResult {
    let tables = clamped_tables(component, evidence);
    let plan = CountPlan::new(component);
    let log_z = plan.log_sum(&tables);
    let mut marginals = BTreeMap::new();
    for (i, v) in component.variables.iter().enumerate() {
        let p = if tables[i][1] == 0.0 {
            0.0
        } else if tables[i][0] == 0.0 {
            1.0
        } else {
            let mut on = tables.clone();
            on[i][0] = 0.0;
            (plan.log_sum(&on) - log_z).exp()
        };
        marginals.insert(v.id, p.clamp(0.0, 1.0));
    }
    pin_evidence(component, evidence, &mut marginals);
    InferenceResult {
        marginals,
        log_partition: log_z,
        method: Method::Exact,
        converged: true,
        iterations: 0,
    }
}

/// Precomputed opening/closing schedule of factors along the variable order.
struct CountPlan {
    n: usize,
    /// Factors whose first variable is `i`.
    opens: Vec<Vec<usize>>,
    /// Factors whose last variable is `i`.
    closes: Vec<Vec<usize>>,
    /// Factors containing variable `i`.
    touches: Vec<Vec<usize>>,
    /// `[phi(0), phi(1)]` per factor.
    phis: Vec<[f64; 2]>,
    /// `phi(d + 1) / phi(d)` for `d >= 1`.
    steps: Vec<f64>,
}

impl CountPlan {
    fn new(component: &FactorComponent) -> Self {
        let n = component.len();
        let mut plan = CountPlan {
            n,
            opens: vec![Vec::new(); n],
            closes: vec![Vec::new(); n],
            touches: vec![Vec::new(); n],
            phis: Vec::new(),
            steps: Vec::new(),
        };
        for (f, scope) in component.local_scopes().into_iter().enumerate() {
            let first = *scope.iter().min().expect("non-empty scope");
            let last = *scope.iter().max().expect("non-empty scope");
            plan.opens[first].push(f);
            plan.closes[last].push(f);
            for &v in &scope {
                plan.touches[v].push(f);
            }
            let factor = &component.factors[f];
            plan.phis.push([factor.value(0), factor.value(1)]);
            plan.steps.push(factor.b);
        }
        plan
    }

    /// Log of the sum over all assignments of the product of `tables`
    /// and all cardinality factors.
    fn log_sum(&self, tables: &[[f64; 2]]) -> f64 {
        let mut open: Vec<usize> = Vec::new();
        let mut states: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        states.insert(Vec::new(), 1.0);
        let mut log_scale = 0.0;
        for i in 0..self.n {
            for &f in &self.opens[i] {
                open.push(f);
            }
            let slots: Vec<(usize, f64)> = self.touches[i]
                .iter()
                .map(|f| {
                    (
                        open.iter()
                            .position(|o| o == f)
                            .expect("factor opened before use"),
                        self.steps[*f],
                    )
                })
                .collect();
            let mut next: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
            for (state, w) in &states {
                let mut state = state.clone();
                state.resize(open.len(), 0);
                if tables[i][0] > 0.0 {
                    *next.entry(state.clone()).or_insert(0.0) += w * tables[i][0];
                }
                if tables[i][1] > 0.0 {
                    let mut scale = tables[i][1];
                    for &(s, step) in &slots {
                        if state[s] == 1 {
                            scale *= step;
                        }
                        state[s] = 1;
                    }
                    *next.entry(state).or_insert(0.0) += w * scale;
                }
            }
            if !self.closes[i].is_empty() {
                let closing: Vec<(usize, usize)> = self.closes[i]
                    .iter()
                    .map(|f| (*f, open.iter().position(|o| o == f).expect("open factor")))
                    .collect();
                let keep: Vec<usize> = (0..open.len())
                    .filter(|s| closing.iter().all(|c| c.1 != *s))
                    .collect();
                let mut merged: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
                for (state, w) in next {
                    let factor: f64 = closing
                        .iter()
                        .map(|&(f, s)| self.phis[f][state[s] as usize])
                        .product();
                    let reduced: Vec<u8> = keep.iter().map(|&s| state[s]).collect();
                    *merged.entry(reduced).or_insert(0.0) += w * factor;
                }
                open = keep.iter().map(|&s| open[s]).collect();
                next = merged;
            }
            let max = next.values().cloned().fold(0.0, f64::max);
            if max == 0.0 {
                return f64::NEG_INFINITY;
            }
            for w in next.values_mut() {
                *w /= max;
            }
            log_scale += max.ln();
            states = next;
        }
        debug_assert!(open.is_empty());
        log_scale + states.values().sum::<f64>().ln()
    }
}

/// Distribution over the number of active variables among `msgs`.
fn count_distribution<'a>(msgs: impl Iterator<Item = &'a [f64; 2]>, capacity: usize) -> Vec<f64> {
    let mut dist = Vec::with_capacity(capacity + 1);
    dist.push(1.0);
    for m in msgs {
        dist.push(0.0);
        for c in (0..dist.len()).rev() {
            let off = dist[c] * m[0];
            let on = if c > 0 { dist[c - 1] * m[1] } else { 0.0 };
            dist[c] = off + on;
        }
    }
    dist
}

/// Outgoing messages of one cardinality factor, one per scope position.
///
/// For position `i` the message is `sum_c phi(c + x_i) P_{-i}(c)`, with the
/// count distribution of the other neighbours assembled from prefix and
/// suffix distributions.
fn cardinality_messages(incoming: &[[f64; 2]], phi: &[f64]) -> Vec<[f64; 2]> {
    let k = incoming.len();
    let mut prefix = Vec::with_capacity(k + 1);
    prefix.push(vec![1.0]);
    for i in 0..k {
        let next = count_distribution(std::iter::once(&incoming[i]), 1);
        prefix.push(convolve(&prefix[i], &next));
    }
    let mut suffix = vec![vec![1.0]; k + 1];
    for i in (0..k).rev() {
        let next = count_distribution(std::iter::once(&incoming[i]), 1);
        suffix[i] = convolve(&suffix[i + 1], &next);
    }
    (0..k)
        .map(|i| {
            let mut out = [0.0; 2];
            for (a, pa) in prefix[i].iter().enumerate() {
                if *pa == 0.0 {
                    continue;
                }
                for (c, sc) in suffix[i + 1].iter().enumerate() {
                    let w = pa * sc;
                    out[0] += w * phi[a + c];
                    out[1] += w * phi[a + c + 1];
                }
            }
            normalize(out)
        })
        .collect()
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn normalize(m: [f64; 2]) -> [f64; 2] {
    let s = m[0] + m[1];
    if s > 0.0 && s.is_finite() {
        [m[0] / s, m[1] / s]
    } else {
        [0.5, 0.5]
    }
}

/// Damped synchronous loopy belief propagation.
fn loopy_bp(
    component: &FactorComponent,
    evidence: &Evidence,
    config: &InferenceConfig,
) -> InferenceResult {
    let n = component.len();
    let tables = clamped_tables(component, evidence);
    let scopes = component.local_scopes();
    let phis: Vec<Vec<f64>> = scopes
        .iter()
        .zip(&component.factors)
        .map(|(s, f)| (0..=s.len()).map(|c| f.value(c)).collect())
        .collect();
    // For each variable: (factor, position within the factor's scope).
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (f, scope) in scopes.iter().enumerate() {
        for (pos, &v) in scope.iter().enumerate() {
            adjacency[v].push((f, pos));
        }
    }

    let mut to_var: Vec<Vec<[f64; 2]>> = scopes.iter().map(|s| vec![[0.5, 0.5]; s.len()]).collect();
    let var_to_factor = |to_var: &Vec<Vec<[f64; 2]>>| -> Vec<Vec<[f64; 2]>> {
        let mut out: Vec<Vec<[f64; 2]>> =
            scopes.iter().map(|s| vec![[0.0, 0.0]; s.len()]).collect();
        for (v, adj) in adjacency.iter().enumerate() {
            for &(f, pos) in adj {
                let mut m = tables[v];
                for &(g, gpos) in adj {
                    if g != f {
                        m[0] *= to_var[g][gpos][0];
                        m[1] *= to_var[g][gpos][1];
                    }
                }
                out[f][pos] = normalize(m);
            }
        }
        out
    };

    let alpha = config.bp_damping;
    let mut converged = scopes.is_empty();
    let mut iterations = 0;
    while !converged && iterations < config.bp_max_iters {
        iterations += 1;
        let incoming = var_to_factor(&to_var);
        let mut delta: f64 = 0.0;
        for f in 0..scopes.len() {
            let fresh = cardinality_messages(&incoming[f], &phis[f]);
            for (old, new) in to_var[f].iter_mut().zip(fresh) {
                let damped = normalize([
                    (1.0 - alpha) * new[0] + alpha * old[0],
                    (1.0 - alpha) * new[1] + alpha * old[1],
                ]);
                delta = delta.max((damped[1] - old[1]).abs());
                *old = damped;
            }
        }
        converged = delta < config.bp_tol;
    }

    let mut marginals = BTreeMap::new();
    let mut log_z = 0.0;
    let incoming = var_to_factor(&to_var);
    for (v, adj) in adjacency.iter().enumerate() {
        let mut belief = tables[v];
        for &(f, pos) in adj {
            belief[0] *= to_var[f][pos][0];
            belief[1] *= to_var[f][pos][1];
        }
        log_z += (belief[0] + belief[1]).ln();
        let p = normalize(belief)[1];
        marginals.insert(component.variables[v].id, p);
        for &(f, pos) in adj {
            let (q, m) = (incoming[f][pos], to_var[f][pos]);
            log_z -= (q[0] * m[0] + q[1] * m[1]).ln();
        }
    }
    for (f, phi) in phis.iter().enumerate() {
        let dist = count_distribution(incoming[f].iter(), incoming[f].len());
        let z_f: f64 = dist.iter().zip(phi).map(|(p, v)| p * v).sum();
        log_z += z_f.ln();
    }
    pin_evidence(component, evidence, &mut marginals);
    InferenceResult {
        marginals,
        log_partition: log_z,
        method: Method::LoopyBp,
        converged,
        iterations,
    }
}

/// Marginals for one component: exact up to `exact_max_vars`, loopy BP
/// beyond. Evidence on variables outside the component is ignored.
pub fn infer(
    component: &FactorComponent,
    evidence: &Evidence,
    config: &InferenceConfig,
) -> InferenceResult {
    if component.len() <= config.exact_max_vars {
        exact_marginals(component, evidence)
    } else {
        loopy_bp(component, evidence, config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentResult {
    pub component: usize,
    pub result: InferenceResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub components: Vec<ComponentResult>,
    pub marginals: BTreeMap<VarId, f64>,
    pub log_partition: f64,
    pub diagnostics: Vec<String>,
}

impl InferenceSummary {
    /// Rebuilds the merged views after `components` changed.
    pub fn refresh(&mut self) {
        self.marginals = self
            .components
            .iter()
            .flat_map(|c| c.result.marginals.iter().map(|(k, v)| (*k, *v)))
            .collect();
        self.log_partition = self.components.iter().map(|c| c.result.log_partition).sum();
        self.diagnostics = self
            .components
            .iter()
            .filter(|c| !c.result.converged)
            .map(|c| {
                format!(
                    "component {} did not converge after {} iterations",
                    c.component, c.result.iterations
                )
            })
            .collect();
    }

    pub fn result_for(&self, component: usize) -> Option<&InferenceResult> {
        self.components
            .iter()
            .find(|c| c.component == component)
            .map(|c| &c.result)
    }
}

/// Runs every component independently (in parallel) and merges results.
pub fn infer_all(
    components: &[FactorComponent],
    evidence: &Evidence,
    config: &InferenceConfig,
) -> Result<InferenceSummary> {
    config.validate()?;
    for var in evidence.keys() {
        if !components.iter().any(|c| c.local_index(*var).is_some()) {
            return Err(Error::validation(format!(
                "evidence references unknown variable {}",
                var.0
            )));
        }
    }
    let mut results: Vec<ComponentResult> = components
        .par_iter()
        .map(|c| ComponentResult {
            component: c.id,
            result: infer(c, evidence, config),
        })
        .collect();
    results.sort_by_key(|r| r.component);
    let mut summary = InferenceSummary {
        components: results,
        ..Default::default()
    };
    summary.refresh();
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMethod {
    /// No factors: the semantic confidence is kept.
    Semantic,
    Exact,
    LoopyBp,
}

impl From<Method> for EdgeMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Exact => EdgeMethod::Exact,
            Method::LoopyBp => EdgeMethod::LoopyBp,
        }
    }
}

/// A candidate edge with its posterior confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEdge {
    pub id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub interaction: String,
    pub confidence: f64,
    pub semantic_confidence: f64,
    pub group: usize,
    pub method: EdgeMethod,
    pub converged: bool,
}

/// Replaces the confidence of every factor-planned edge with its marginal.
pub fn update_confidences(
    groups: &[EdgeGroup],
    components: &[FactorComponent],
    summary: &InferenceSummary,
) -> Result<Vec<PosteriorEdge>> {
    let mut lookup: BTreeMap<&EdgeId, (VarId, usize)> = BTreeMap::new();
    for c in components {
        for v in &c.variables {
            lookup.insert(&v.edge, (v.id, c.id));
        }
    }
    let mut out = Vec::new();
    for g in groups {
        for e in &g.edges {
            let (confidence, method, converged) = if g.factor_plan == FactorPlan::None {
                (e.semantic_confidence, EdgeMethod::Semantic, true)
            } else {
                let (var, comp) = lookup
                    .get(&e.id)
                    .ok_or_else(|| Error::Internal(format!("edge {} has no variable", e.id)))?;
                let result = summary
                    .result_for(*comp)
                    .ok_or_else(|| Error::Internal(format!("component {comp} has no result")))?;
                let m = result
                    .marginals
                    .get(var)
                    .ok_or_else(|| Error::Internal(format!("edge {} has no marginal", e.id)))?;
                (*m, result.method.into(), result.converged)
            };
            out.push(PosteriorEdge {
                id: e.id.clone(),
                source: e.source.clone(),
                target: e.target.clone(),
                interaction: e.interaction.clone(),
                confidence,
                semantic_confidence: e.semantic_confidence,
                group: g.id,
                method,
                converged,
            });
        }
    }
    Ok(out)
}

/// Keeps edges with confidence at or above `tau`.
pub fn threshold_graph(posterior: &[PosteriorEdge], tau: f64) -> Vec<PosteriorEdge> {
    posterior
        .iter()
        .filter(|e| e.confidence >= tau)
        .cloned()
        .collect()
}
