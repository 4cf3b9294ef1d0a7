//! Similarity-graph instance selection.
//!
//! Instances become nodes, joined when the cosine similarity of their
//! standardized representations reaches a threshold. A greedy dominating
//! set or a greedy maximal independent set of that graph is the selection.
//!
//! Random tie-breaking uses one priority per node, drawn in ascending
//! instance-id order, so results do not depend on the order in which
//! representations are supplied.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{standardize, InstanceRepresentation, RepresentationSpec};
use crate::rng::RngStream;
use crate::types::{InstanceId, InstanceSet, SetRole};

const ZERO_NORM: f64 = 1e-12;

/// Thresholds swept in experiments and monotonicity checks.
pub const THRESHOLDS: [f64; 4] = [0.7, 0.8, 0.9, 0.95];

/// `u·v / (‖u‖‖v‖)`; 0 when exactly one vector is (near) zero, 1 when both are.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::arg(format!("cosine similarity of vectors with dimensions {} and {}", u.len(), v.len())));
    }
    let nu = libm::sqrt(u.iter().map(|x| x * x).sum::<f64>());
    let nv = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    match (nu < ZERO_NORM, nv < ZERO_NORM) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        _ => {
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
        }
    }
}

/// Undirected simple graph over instance ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    ids: Vec<InstanceId>,
    adjacency: Vec<Vec<usize>>,
    threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub density: f64,
}

impl SimilarityGraph {
    /// Edge between `i` and `j` iff `cos(rows[i], rows[j]) >= threshold`.
    pub fn build(ids: Vec<InstanceId>, rows: &[Vec<f64>], threshold: f64) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::arg("one id per representation row required"));
        }
        let n = rows.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if cosine_similarity(&rows[i], &rows[j])? >= threshold {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        Ok(SimilarityGraph { ids, adjacency, threshold })
    }

    /// Graph on nodes `0..n` with ids equal to their index.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b && !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        adjacency.iter_mut().for_each(|l| l.sort_unstable());
        SimilarityGraph { ids: (0..n as u32).map(InstanceId).collect(), adjacency, threshold: f64::NAN }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn ids(&self) -> &[InstanceId] {
        &self.ids
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.node_count();
        let e = self.edge_count();
        let density = if n > 1 { 2.0 * e as f64 / (n * (n - 1)) as f64 } else { 0.0 };
        GraphStats { nodes: n, edges: e, density }
    }

    /// Random node priorities, assigned in ascending id order.
    fn priorities<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let mut order: Vec<usize> = (0..self.node_count()).collect();
        order.sort_by_key(|&i| self.ids[i]);
        let mut prio = vec![0; self.node_count()];
        for i in order {
            prio[i] = rng.random();
        }
        prio
    }

    fn to_ids(&self, nodes: impl IntoIterator<Item = usize>) -> BTreeSet<InstanceId> {
        nodes.into_iter().map(|i| self.ids[i]).collect()
    }

    /// Every node is selected or adjacent to a selected node.
    pub fn is_dominating(&self, nodes: &BTreeSet<usize>) -> bool {
        (0..self.node_count()).all(|v| nodes.contains(&v) || self.adjacency[v].iter().any(|u| nodes.contains(u)))
    }

    pub fn is_independent(&self, nodes: &BTreeSet<usize>) -> bool {
        nodes.iter().all(|&v| self.adjacency[v].iter().all(|u| !nodes.contains(u)))
    }

    /// Independent, and no further node can be added.
    pub fn is_maximal_independent(&self, nodes: &BTreeSet<usize>) -> bool {
        self.is_independent(nodes) && self.is_dominating(nodes)
    }

    pub fn node_index(&self, id: InstanceId) -> Option<usize> {
        self.ids.iter().position(|i| *i == id)
    }
}

/// Greedy dominating set: repeatedly take the node whose closed
/// neighbourhood covers the most uncovered nodes, ties broken at random.
pub fn greedy_dominating_set<R: Rng + ?Sized>(graph: &SimilarityGraph, rng: &mut R) -> BTreeSet<InstanceId> {
    let prio = graph.priorities(rng);
    graph.to_ids(dominating_set_nodes(graph, &prio))
}

fn dominating_set_nodes(graph: &SimilarityGraph, prio: &[u64]) -> BTreeSet<usize> {
    let n = graph.node_count();
    let mut covered = vec![false; n];
    let mut uncovered = n;
    let mut chosen = BTreeSet::new();
    while uncovered > 0 {
        let mut best: Option<(usize, u64, usize)> = None;
        for v in 0..n {
            if chosen.contains(&v) {
                continue;
            }
            let gain = usize::from(!covered[v]) + graph.adjacency[v].iter().filter(|&&u| !covered[u]).count();
            let better = match best {
                None => gain > 0,
                Some((g, p, _)) => gain > g || (gain == g && prio[v] > p),
            };
            if better {
                best = Some((gain, prio[v], v));
            }
        }
        let (_, _, v) = best.expect("an uncovered node can always cover itself");
        chosen.insert(v);
        for u in core::iter::once(v).chain(graph.adjacency[v].iter().copied()) {
            if !covered[u] {
                covered[u] = true;
                uncovered -= 1;
            }
        }
    }
    chosen
}

/// Greedy maximal independent set: scan nodes in random order and keep each
/// one with no neighbour already kept.
pub fn greedy_maximal_independent_set<R: Rng + ?Sized>(graph: &SimilarityGraph, rng: &mut R) -> BTreeSet<InstanceId> {
    let prio = graph.priorities(rng);
    let mut order: Vec<usize> = (0..graph.node_count()).collect();
    order.sort_by_key(|&i| (core::cmp::Reverse(prio[i]), graph.ids[i]));
    graph.to_ids(independent_set_in_order(graph, &order))
}

/// Scan `order` and keep every node not adjacent to one already kept.
pub fn independent_set_in_order(graph: &SimilarityGraph, order: &[usize]) -> BTreeSet<usize> {
    let mut blocked = vec![false; graph.node_count()];
    let mut chosen = BTreeSet::new();
    for &v in order {
        if blocked[v] {
            continue;
        }
        chosen.insert(v);
        blocked[v] = true;
        graph.adjacency[v].iter().for_each(|&u| blocked[u] = true);
    }
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionMethod {
    #[serde(rename = "DS")]
    DominatingSet,
    #[serde(rename = "MIS")]
    MaximalIndependentSet,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::DominatingSet => "DS",
            SelectionMethod::MaximalIndependentSet => "MIS",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DS" => Ok(SelectionMethod::DominatingSet),
            "MIS" => Ok(SelectionMethod::MaximalIndependentSet),
            _ => Err(Error::arg(format!("unknown selection method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub threshold: f64,
    pub repetitions: usize,
    pub spec: RepresentationSpec,
}

impl SelectionConfig {
    /// Label such as `MIS-ts-R-0.7`.
    pub fn label(&self) -> alloc::string::String {
        format!("{}-{}-{}", self.method, self.spec, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRun {
    pub repetition: usize,
    pub selected: InstanceSet,
    pub graph: GraphStats,
}

/// Run the selector `config.repetitions` times, each repetition with its own
/// tie-breaking stream `rng.derive("repetition-{r}")`.
pub fn select_instances(
    representations: &[InstanceRepresentation],
    train: &InstanceSet,
    config: &SelectionConfig,
    rng: &RngStream,
) -> Result<Vec<SelectionRun>> {
    if !(config.threshold > 0.0) {
        return Err(Error::arg("selection threshold must be positive"));
    }
    if config.repetitions == 0 {
        return Err(Error::arg("need at least one selection repetition"));
    }
    let mut reps: Vec<&InstanceRepresentation> = representations.iter().collect();
    reps.sort_by_key(|r| r.instance_id);
    let rep_ids: BTreeSet<InstanceId> = reps.iter().map(|r| r.instance_id).collect();
    if rep_ids.len() != reps.len() {
        return Err(Error::arg("duplicate instance in representations"));
    }
    let train_ids: BTreeSet<InstanceId> = train.ids().collect();
    if rep_ids != train_ids {
        return Err(Error::arg("representations must cover exactly the train set"));
    }
    let ids: Vec<InstanceId> = reps.iter().map(|r| r.instance_id).collect();
    let rows: Vec<Vec<f64>> = reps.iter().map(|r| r.vector.clone()).collect();
    let rows = if rows.len() >= 2 { standardize(&rows)? } else { rows };
    let graph = SimilarityGraph::build(ids, &rows, config.threshold)?;
    let stats = graph.stats();
    (0..config.repetitions)
        .map(|r| {
            let mut stream = rng.derive(&format!("repetition-{r}"));
            let chosen = match config.method {
                SelectionMethod::DominatingSet => greedy_dominating_set(&graph, &mut stream),
                SelectionMethod::MaximalIndependentSet => greedy_maximal_independent_set(&graph, &mut stream),
            };
            Ok(SelectionRun { repetition: r, selected: train.subset(&chosen, SetRole::Selected)?, graph: stats })
        })
        .collect()
}

/// Exact minimum dominating set size by subset enumeration (small graphs).
pub fn minimum_dominating_set_size(graph: &SimilarityGraph) -> usize {
    let n = graph.node_count();
    assert!(n <= 20, "exhaustive search is limited to 20 nodes");
    let closed: Vec<u32> = (0..n).map(|v| graph.adjacency[v].iter().fold(1u32 << v, |m, &u| m | (1 << u))).collect();
    let full = (1u32 << n) - 1;
    (0u32..(1u32 << n))
        .filter(|mask| {
            let cover = (0..n).filter(|v| mask & (1 << v) != 0).fold(0, |c, v| c | closed[v]);
            cover == full
        })
        .map(u32::count_ones)
        .min()
        .unwrap_or(0) as usize
}

/// Shuffled copy of `0..n`, for tests and callers that want explicit orders.
pub fn random_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive_rng_stream;

    fn nodes(g: &SimilarityGraph, ids: &BTreeSet<InstanceId>) -> BTreeSet<usize> {
        ids.iter().map(|id| g.node_index(*id).unwrap()).collect()
    }

    #[test]
    fn cosine_reference_values() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.2]];
        let ids = vec![InstanceId(0), InstanceId(1), InstanceId(2)];
        assert_eq!(SimilarityGraph::build(ids.clone(), &rows, 1.01).unwrap().edge_count(), 0);
        assert_eq!(SimilarityGraph::build(ids, &rows, -1.0).unwrap().edge_count(), 3);
    }

    #[test]
    fn small_graph_cases() {
        let mut rng = derive_rng_stream(0, "graphs");
        let edgeless = SimilarityGraph::from_edges(5, &[]);
        assert_eq!(greedy_dominating_set(&edgeless, &mut rng).len(), 5);
        assert_eq!(greedy_maximal_independent_set(&edgeless, &mut rng).len(), 5);

        let complete: Vec<_> = (0..5).flat_map(|a| ((a + 1)..5).map(move |b| (a, b))).collect();
        let k5 = SimilarityGraph::from_edges(5, &complete);
        assert_eq!(greedy_dominating_set(&k5, &mut rng).len(), 1);

        let triangle = SimilarityGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(greedy_maximal_independent_set(&triangle, &mut rng).len(), 1);

        let path = SimilarityGraph::from_edges(3, &[(0, 1), (1, 2)]);
        for _ in 0..10 {
            let ds = greedy_dominating_set(&path, &mut rng);
            assert_eq!(ds, [InstanceId(1)].into_iter().collect());
        }
        assert_eq!(minimum_dominating_set_size(&path), 1);
        assert_eq!(independent_set_in_order(&path, &[0, 2, 1]), [0, 2].into_iter().collect());
    }

    #[test]
    fn random_graph_corpus() {
        let mut rng = derive_rng_stream(1, "corpus");
        for _ in 0..1000 {
            let n = rng.random_range(1..=50);
            let p: f64 = rng.random();
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.random::<f64>() < p {
                        edges.push((a, b));
                    }
                }
            }
            let g = SimilarityGraph::from_edges(n, &edges);
            let ds = greedy_dominating_set(&g, &mut rng);
            assert!(g.is_dominating(&nodes(&g, &ds)));
            let mis = greedy_maximal_independent_set(&g, &mut rng);
            assert!(g.is_maximal_independent(&nodes(&g, &mis)));
        }
    }

    #[test]
    fn greedy_within_log_factor_of_optimum() {
        let mut rng = derive_rng_stream(2, "approx");
        for _ in 0..300 {
            let n = rng.random_range(1..=10);
            let p: f64 = rng.random();
            let edges: Vec<_> =
                (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).filter(|_| rng.random::<f64>() < p).collect();
            let g = SimilarityGraph::from_edges(n, &edges);
            let greedy = greedy_dominating_set(&g, &mut rng).len() as f64;
            let exact = minimum_dominating_set_size(&g) as f64;
            assert!(greedy <= exact * (1.0 + libm::log(n as f64)) + 1e-9);
        }
    }
}
