//! Discrete structural causal models with exact inference by joint
//! enumeration, ancestral sampling, and a brute-force conditional
//! independence test.

mod corpus;

pub use corpus::{
    generate_splits, generate_synthetic_corpus, CorpusSpec, CorpusSplits, MarkerMode, PoolEntry,
    Record, CAUSE, CONFOUNDER, LABEL, NOISE, SPURIOUS,
};

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::graph::{Dag, GraphError, NodeSet};

/// Tolerance for CPT rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("conditioning on an event of probability zero: {0:?}")]
    ZeroProbabilityEvidence(Assignment),
    #[error("invalid corpus spec: {0}")]
    InvalidCorpusSpec(String),
}

/// Node name → value.
pub type Assignment = BTreeMap<String, i64>;

/// Builds an [`Assignment`] from `(name, value)` pairs.
pub fn assignment<'a>(pairs: impl IntoIterator<Item = (&'a str, i64)>) -> Assignment {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    graph: Dag,
    domains: Vec<Vec<i64>>,
    /// `cpts[i][row][k]` = P(node i = domains[i][k] | parent configuration `row`),
    /// rows in mixed radix over `graph.parents_of(i)` with the first parent
    /// most significant.
    cpts: Vec<Vec<Vec<f64>>>,
}

impl DiscreteScm {
    pub fn new(
        graph: Dag,
        mut domains: HashMap<String, Vec<i64>>,
        mut cpts: HashMap<String, Vec<Vec<f64>>>,
    ) -> Result<Self, ScmError> {
        let mut dom = Vec::with_capacity(graph.len());
        for name in graph.names() {
            let d = domains
                .remove(name)
                .ok_or_else(|| ScmError::InvalidModel(format!("no domain for `{name}`")))?;
            if d.is_empty() {
                return Err(ScmError::InvalidModel(format!("empty domain for `{name}`")));
            }
            let mut sorted = d.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != d.len() {
                return Err(ScmError::InvalidModel(format!(
                    "repeated domain value for `{name}`"
                )));
            }
            dom.push(d);
        }
        if let Some(extra) = domains.keys().next() {
            return Err(ScmError::InvalidModel(format!(
                "domain for unknown node `{extra}`"
            )));
        }

        let mut tables = Vec::with_capacity(graph.len());
        for (i, name) in graph.names().iter().enumerate() {
            let t = cpts
                .remove(name)
                .ok_or_else(|| ScmError::InvalidModel(format!("no CPT for `{name}`")))?;
            let rows: usize = graph.parents_of(i).iter().map(|&p| dom[p].len()).product();
            if t.len() != rows {
                return Err(ScmError::InvalidModel(format!(
                    "CPT for `{name}` has {} rows, expected {rows}",
                    t.len()
                )));
            }
            for row in &t {
                if row.len() != dom[i].len() {
                    return Err(ScmError::InvalidModel(format!(
                        "CPT row for `{name}` has {} entries, expected {}",
                        row.len(),
                        dom[i].len()
                    )));
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(ScmError::InvalidModel(format!(
                        "CPT for `{name}` has an entry outside [0, 1]"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(ScmError::InvalidModel(format!(
                        "CPT row for `{name}` sums to {s}"
                    )));
                }
            }
            tables.push(t);
        }
        if let Some(extra) = cpts.keys().next() {
            return Err(ScmError::InvalidModel(format!(
                "CPT for unknown node `{extra}`"
            )));
        }
        Ok(Self {
            graph,
            domains: dom,
            cpts: tables,
        })
    }

    /// Binary model from `P(node = 1 | parents)` per parent configuration.
    pub fn bernoulli(graph: Dag, p_one: &[(&str, Vec<f64>)]) -> Result<Self, ScmError> {
        let domains = graph
            .names()
            .iter()
            .map(|n| (n.clone(), vec![0, 1]))
            .collect();
        let cpts = p_one
            .iter()
            .map(|(n, ps)| {
                (
                    n.to_string(),
                    ps.iter().map(|&p| vec![1.0 - p, p]).collect(),
                )
            })
            .collect();
        Self::new(graph, domains, cpts)
    }

    /// Random CPTs over the given graph with every node binary. Entries are
    /// drawn from U(0.05, 0.95) so every joint configuration has mass.
    pub fn random_binary<R: Rng>(graph: Dag, rng: &mut R) -> Self {
        let domains: Vec<Vec<i64>> = vec![vec![0, 1]; graph.len()];
        let cpts = (0..graph.len())
            .map(|i| {
                let rows = 1usize << graph.parents_of(i).len();
                (0..rows)
                    .map(|_| {
                        let p: f64 = rng.gen_range(0.05..0.95);
                        vec![1.0 - p, p]
                    })
                    .collect()
            })
            .collect();
        Self {
            graph,
            domains,
            cpts,
        }
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn domain(&self, node: &str) -> Option<&[i64]> {
        self.graph
            .index_of(node)
            .map(|i| self.domains[i].as_slice())
    }

    pub fn cpt(&self, node: &str) -> Option<&[Vec<f64>]> {
        self.graph.index_of(node).map(|i| self.cpts[i].as_slice())
    }

    fn cpt_row(&self, i: usize, state: &[usize]) -> &[f64] {
        let mut row = 0;
        for &p in self.graph.parents_of(i) {
            row = row * self.domains[p].len() + state[p];
        }
        &self.cpts[i][row]
    }

    /// Probability of every full configuration, indexed in mixed radix with
    /// node 0 most significant.
    pub fn joint(&self) -> Vec<f64> {
        let sizes: Vec<usize> = self.domains.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut state = vec![0usize; sizes.len()];
        for _ in 0..total {
            let p: f64 = (0..sizes.len())
                .map(|i| self.cpt_row(i, &state)[state[i]])
                .product();
            out.push(p);
            // increment, last node fastest
            for i in (0..sizes.len()).rev() {
                state[i] += 1;
                if state[i] < sizes[i] {
                    break;
                }
                state[i] = 0;
            }
        }
        out
    }

    fn encode(&self, a: &Assignment) -> Result<Vec<(usize, usize)>, ScmError> {
        a.iter()
            .map(|(name, v)| {
                let i = self
                    .graph
                    .index_of(name)
                    .ok_or_else(|| ScmError::InvalidQuery(format!("unknown node `{name}`")))?;
                let k = self.domains[i].iter().position(|d| d == v).ok_or_else(|| {
                    ScmError::InvalidQuery(format!("value {v} not in domain of `{name}`"))
                })?;
                Ok((i, k))
            })
            .collect()
    }

    fn mass(&self, joint: &[f64], fixed: &[(usize, usize)]) -> f64 {
        let sizes: Vec<usize> = self.domains.iter().map(Vec::len).collect();
        let mut strides = vec![1usize; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        joint
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                fixed
                    .iter()
                    .all(|&(i, k)| (idx / strides[i]) % sizes[i] == k)
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// Exact `P(target | evidence)` by summing the full joint.
    pub fn query(&self, target: &Assignment, evidence: &Assignment) -> Result<f64, ScmError> {
        if let Some(k) = target.keys().find(|k| evidence.contains_key(*k)) {
            return Err(ScmError::InvalidQuery(format!(
                "`{k}` appears in both target and evidence"
            )));
        }
        let t = self.encode(target)?;
        let e = self.encode(evidence)?;
        let joint = self.joint();
        let pe = self.mass(&joint, &e);
        if pe <= 0.0 {
            return Err(ScmError::ZeroProbabilityEvidence(evidence.clone()));
        }
        let both: Vec<(usize, usize)> = t.into_iter().chain(e).collect();
        Ok(self.mass(&joint, &both) / pe)
    }

    /// Largest `|P(a | b, c) − P(a | c)|` over all configurations with
    /// `P(b, c) > 0`. Zero when `a` or `b` is empty.
    pub fn ci_gap(&self, a: &NodeSet, b: &NodeSet, c: &NodeSet) -> Result<f64, ScmError> {
        if !a.is_disjoint(b) || !a.is_disjoint(c) || !b.is_disjoint(c) {
            return Err(ScmError::InvalidQuery(
                "sets must be pairwise disjoint".into(),
            ));
        }
        let ai = self.graph.resolve(a)?;
        let bi = self.graph.resolve(b)?;
        let ci = self.graph.resolve(c)?;
        if ai.is_empty() || bi.is_empty() {
            return Ok(0.0);
        }

        // marginalise the joint onto (a, b, c) once
        let vars: Vec<usize> = ai.iter().chain(&bi).chain(&ci).copied().collect();
        let sizes: Vec<usize> = self.domains.iter().map(Vec::len).collect();
        let msizes: Vec<usize> = vars.iter().map(|&v| sizes[v]).collect();
        let mtotal: usize = msizes.iter().product();
        let mut marg = vec![0.0; mtotal];
        let mut state = vec![0usize; sizes.len()];
        for p in self.joint() {
            let mut idx = 0;
            for (&v, &s) in vars.iter().zip(&msizes) {
                idx = idx * s + state[v];
            }
            marg[idx] += p;
            for i in (0..sizes.len()).rev() {
                state[i] += 1;
                if state[i] < sizes[i] {
                    break;
                }
                state[i] = 0;
            }
        }

        let na: usize = msizes[..ai.len()].iter().product();
        let nb: usize = msizes[ai.len()..ai.len() + bi.len()].iter().product();
        let nc: usize = msizes[ai.len() + bi.len()..].iter().product();
        let at = |ka: usize, kb: usize, kc: usize| marg[(ka * nb + kb) * nc + kc];

        let mut gap: f64 = 0.0;
        for kc in 0..nc {
            let pc: f64 = (0..na)
                .flat_map(|ka| (0..nb).map(move |kb| (ka, kb)))
                .map(|(ka, kb)| at(ka, kb, kc))
                .sum();
            if pc <= 0.0 {
                continue;
            }
            for kb in 0..nb {
                let pbc: f64 = (0..na).map(|ka| at(ka, kb, kc)).sum();
                if pbc <= 0.0 {
                    continue;
                }
                for ka in 0..na {
                    let pac: f64 = (0..nb).map(|kb2| at(ka, kb2, kc)).sum();
                    gap = gap.max((at(ka, kb, kc) / pbc - pac / pc).abs());
                }
            }
        }
        Ok(gap)
    }

    pub fn conditional_independent(
        &self,
        a: &NodeSet,
        b: &NodeSet,
        c: &NodeSet,
        tol: f64,
    ) -> Result<bool, ScmError> {
        Ok(self.ci_gap(a, b, c)? <= tol)
    }

    /// One ancestral draw in topological order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Assignment {
        let state = self.sample_indices(rng);
        state
            .iter()
            .enumerate()
            .map(|(i, &k)| (self.graph.name(i).to_string(), self.domains[i][k]))
            .collect()
    }

    pub(crate) fn sample_indices<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut state = vec![0usize; self.graph.len()];
        for &i in self.graph.topological_order() {
            let row = self.cpt_row(i, &state);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (k, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            state[i] = pick;
        }
        state
    }
}

/// The confounded four-variable model with the confounder strength and label
/// fidelity exposed. `beer_toy_scm()` is `beer_toy_scm_with(0.9, 0.9)`.
pub fn beer_toy_scm_with(
    correlation_strength: f64,
    label_fidelity: f64,
) -> Result<DiscreteScm, ScmError> {
    let g = crate::graph::beer_toy_graph();
    // parents are ordered by node index, and each node here has at most one
    DiscreteScm::bernoulli(
        g,
        &[
            ("U", vec![0.5]),
            (
                "X_T",
                vec![1.0 - correlation_strength, correlation_strength],
            ),
            (
                "X_S",
                vec![1.0 - correlation_strength, correlation_strength],
            ),
            ("Y_S", vec![1.0 - label_fidelity, label_fidelity]),
        ],
    )
}

pub fn beer_toy_scm() -> DiscreteScm {
    beer_toy_scm_with(0.9, 0.9).expect("static parameters are valid")
}
