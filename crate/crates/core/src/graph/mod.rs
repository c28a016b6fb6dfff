//! Directed acyclic graphs over named variables and d-separation queries.
//!
//! The decision procedure in [`is_d_separated`] is a reachability sweep
//! ("Bayes ball"), while [`find_active_path`] enumerates simple paths and
//! applies the chain/fork/collider blocking rules literally. The two are kept
//! independent so each can serve as a check on the other.

mod dsep;
mod theorem;

pub use dsep::{find_active_path, is_d_separated, path_is_blocked, render_path};
pub use theorem::{
    direct_causes, satisfies_assumption1, verify_theorem1, verify_unchecked, DirectCauses,
    SeparationReport, SubsetRow, MAX_THEOREM_OBSERVABLES,
};

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("edge ({0}, {1}) references an unknown node")]
    UnknownEdgeEndpoint(String, String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("graph contains a directed cycle through `{0}`")]
    Cycle(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("assumption violated: `{label}` has a directed path into observable `{node}`")]
    AssumptionViolation { label: String, node: String },
    #[error("too many observables for subset enumeration ({0} > {MAX_THEOREM_OBSERVABLES})")]
    TooManyObservables(usize),
    #[error("graph file {path}: {message}")]
    File { path: String, message: String },
}

/// A set of node names. Ordered so that reports and witnesses are deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeSet(pub BTreeSet<String>);

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn insert(&mut self, name: impl Into<String>) -> bool {
        self.0.insert(name.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.difference(&other.0).cloned().collect())
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }
}

impl<S: Into<String>> FromIterator<S> for NodeSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        NodeSet(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "}}")
    }
}

/// On-disk form of a graph: `{"nodes": [...], "edges": [[parent, child], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

/// A validated DAG. Nodes are stored in insertion order; `order` is a
/// topological order of node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Dag {
    pub fn new<N, E, S, T>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = S>,
        E: IntoIterator<Item = (T, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let names: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        let mut parents = vec![Vec::new(); names.len()];
        let mut children = vec![Vec::new(); names.len()];
        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            let (Some(&pi), Some(&ci)) = (index.get(p), index.get(c)) else {
                return Err(GraphError::UnknownEdgeEndpoint(
                    p.to_string(),
                    c.to_string(),
                ));
            };
            if pi == ci {
                return Err(GraphError::SelfLoop(p.to_string()));
            }
            // duplicate edges collapse
            if !children[pi].contains(&ci) {
                children[pi].push(ci);
                parents[ci].push(pi);
            }
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }

        // Kahn's algorithm; anything left over sits on a cycle.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..names.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(names.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != names.len() {
            let stuck = (0..names.len()).find(|&i| indeg[i] > 0).unwrap_or(0);
            return Err(GraphError::Cycle(names[stuck].clone()));
        }

        Ok(Self {
            names,
            index,
            parents,
            children,
            order,
        })
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self, GraphError> {
        Self::new(
            spec.nodes.iter().cloned(),
            spec.edges.iter().map(|(p, c)| (p.as_str(), c.as_str())),
        )
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            nodes: self.names.clone(),
            edges: self
                .edges()
                .map(|(p, c)| (p.to_string(), c.to_string()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let file_err = |message: String| GraphError::File {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let spec: GraphSpec = serde_json::from_str(&text)
            .map_err(|e| file_err(format!("line {} column {}: {e}", e.line(), e.column())))?;
        Self::from_spec(&spec)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.children.iter().enumerate().flat_map(move |(p, cs)| {
            cs.iter()
                .map(move |&c| (self.names[p].as_str(), self.names[c].as_str()))
        })
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.children[parent].contains(&child)
    }

    /// Descendants of `i`, excluding `i` itself.
    pub fn descendants_of(&self, i: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = self.children[i].clone();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend_from_slice(&self.children[v]);
            }
        }
        seen
    }

    /// Nodes that are in `set` or have a descendant in `set`.
    pub(crate) fn ancestral_closure(&self, set: &[bool]) -> Vec<bool> {
        let mut out = set.to_vec();
        let mut stack: Vec<usize> = (0..self.len()).filter(|&i| set[i]).collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !out[p] {
                    out[p] = true;
                    stack.push(p);
                }
            }
        }
        out
    }

    pub(crate) fn resolve(&self, set: &NodeSet) -> Result<Vec<usize>, GraphError> {
        set.iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| GraphError::InvalidQuery(format!("unknown node `{n}`")))
            })
            .collect()
    }

    pub(crate) fn resolve_one(&self, name: &str) -> Result<usize, GraphError> {
        self.index_of(name)
            .ok_or_else(|| GraphError::InvalidQuery(format!("unknown node `{name}`")))
    }

    pub(crate) fn indicator(&self, idx: &[usize]) -> Vec<bool> {
        let mut v = vec![false; self.len()];
        for &i in idx {
            v[i] = true;
        }
        v
    }
}

/// The four-variable confounded graph: `U → X_T`, `U → X_S`, `X_S → Y_S`.
pub fn beer_toy_graph() -> Dag {
    Dag::new(
        ["U", "X_T", "X_S", "Y_S"],
        [("U", "X_T"), ("U", "X_S"), ("X_S", "Y_S")],
    )
    .expect("static graph is acyclic")
}

/// Mask-selection graph: the selection indicator `M_-` is caused by the
/// aroma comments and the explainer `E`; `X_S` also causes the label.
pub fn mask_selection_graph() -> Dag {
    Dag::new(
        ["U", "X_T", "X_S", "E", "M_-", "Y_S"],
        [
            ("U", "X_T"),
            ("U", "X_S"),
            ("X_S", "M_-"),
            ("E", "M_-"),
            ("X_S", "Y_S"),
        ],
    )
    .expect("static graph is acyclic")
}
