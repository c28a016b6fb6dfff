#![allow(dead_code)]

pub mod experiment;
pub mod gradcheck;

use mcd_core::graph::{Dag, NodeSet};
use mcd_core::scm::DiscreteScm;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SEPARATED_GAP: f64 = 1e-9;
pub const CONNECTED_GAP: f64 = 1e-3;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("V{i}")).collect()
}

/// Every labelled DAG on `n` nodes: each of the `3^(n choose 2)` orientations
/// of the node pairs (absent, forward, backward) that is acyclic.
pub fn all_dags(n: usize) -> Vec<Dag> {
    let nodes = names(n);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let mut edges = Vec::new();
        for &(i, j) in &pairs {
            match c % 3 {
                1 => edges.push((nodes[i].clone(), nodes[j].clone())),
                2 => edges.push((nodes[j].clone(), nodes[i].clone())),
                _ => {}
            }
            c /= 3;
        }
        if let Ok(g) = Dag::new(nodes.clone(), edges) {
            out.push(g);
        }
    }
    out
}

/// Random DAG: shuffle a node order, then add each forward pair with
/// probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> Dag {
    let nodes = names(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((nodes[order[i]].clone(), nodes[order[j]].clone()));
            }
        }
    }
    Dag::new(nodes, edges).expect("forward edges in a fixed order are acyclic")
}

/// Ordered triples of pairwise disjoint sets with `a` and `b` non-empty.
pub fn disjoint_triples(g: &Dag) -> Vec<(NodeSet, NodeSet, NodeSet)> {
    let n = g.len();
    let mut out = Vec::new();
    for code in 0..4usize.pow(n as u32) {
        let (mut a, mut b, mut c) = (NodeSet::new(), NodeSet::new(), NodeSet::new());
        let mut k = code;
        for i in 0..n {
            match k % 4 {
                1 => a.insert(g.name(i)),
                2 => b.insert(g.name(i)),
                3 => c.insert(g.name(i)),
                _ => false,
            };
            k /= 4;
        }
        if !a.is_empty() && !b.is_empty() {
            out.push((a, b, c));
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct OracleTally {
    pub queries: usize,
    pub separated: usize,
    /// d-separated but some CPT seed shows dependence.
    pub unsound: Vec<String>,
    /// d-connected but every CPT seed looks independent.
    pub incomplete: Vec<String>,
}

impl OracleTally {
    pub fn ok(&self) -> bool {
        self.unsound.is_empty() && self.incomplete.is_empty()
    }
}

/// Compares the graphical answer for every disjoint triple with exact
/// conditional-independence gaps under `seeds` random binary CPTs.
pub fn check_against_ci_oracle(g: &Dag, seeds: u64, tally: &mut OracleTally, seed_base: u64) {
    let scms: Vec<DiscreteScm> = (0..seeds)
        .map(|s| {
            DiscreteScm::random_binary(
                g.clone(),
                &mut ChaCha8Rng::seed_from_u64(seed_base * 1000 + s),
            )
        })
        .collect();
    for (a, b, c) in disjoint_triples(g) {
        tally.queries += 1;
        let sep = mcd_core::graph::is_d_separated(g, &a, &b, &c).unwrap();
        let gaps = scms.iter().map(|m| m.ci_gap(&a, &b, &c).unwrap());
        let describe = || format!("{:?} {a} vs {b} | {c}", g.to_spec().edges);
        if sep {
            tally.separated += 1;
            if gaps.clone().any(|x| x > SEPARATED_GAP) {
                tally.unsound.push(describe());
            }
        } else if !gaps.clone().any(|x| x > CONNECTED_GAP) {
            tally.incomplete.push(describe());
        }
    }
}

/// Random graph satisfying the no-path-from-label assumption: `k`
/// observables `X0..`, label `Y`, and up to two latent nodes `L0, L1`. The
/// label's parents are drawn from the observables only; its descendants are
/// latent.
pub fn random_label_sink_graph<R: Rng>(rng: &mut R, k: usize) -> (Dag, String, NodeSet) {
    let latent = rng.gen_range(0..=2usize);
    let observables: Vec<String> = (0..k).map(|i| format!("X{i}")).collect();
    let latents: Vec<String> = (0..latent).map(|i| format!("L{i}")).collect();
    // upstream part: latents and observables in a random order
    let mut upstream: Vec<String> = observables.iter().chain(&latents).cloned().collect();
    upstream.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..upstream.len() {
        for j in i + 1..upstream.len() {
            if rng.gen_bool(0.4) {
                edges.push((upstream[i].clone(), upstream[j].clone()));
            }
        }
    }
    for x in &observables {
        if rng.gen_bool(0.4) {
            edges.push((x.clone(), "Y".to_string()));
        }
    }
    let mut nodes = upstream;
    nodes.push("Y".into());
    // a latent child of the label with an observable co-parent
    if rng.gen_bool(0.5) {
        nodes.push("C".into());
        edges.push(("Y".into(), "C".into()));
        edges.push((observables[rng.gen_range(0..k)].clone(), "C".into()));
    }
    let g = Dag::new(nodes, edges).expect("upstream order plus sink label is acyclic");
    (g, "Y".into(), observables.into_iter().collect())
}
