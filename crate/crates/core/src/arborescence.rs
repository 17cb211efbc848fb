//! Maximum spanning arborescence over a sentence's candidate edges.
//!
//! The decoder is Chu-Liu/Edmonds with recursive cycle contraction. Among
//! equally good incoming edges the one that comes first in (head, dependent)
//! order wins, and with single-root enforcement root candidates are tried in
//! dependent order, keeping the first best solution.

use rayon::prelude::*;
use thiserror::Error;

use crate::edges::EdgeUnion;
use crate::model::{DepTree, Edge};

/// Largest sentence the brute-force decoder accepts.
pub const BRUTE_FORCE_MAX_TOKENS: usize = 8;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ArborescenceError {
    #[error("graph has no tokens")]
    Empty,
    #[error("edge {0} is out of range")]
    OutOfRange(Edge),
    #[error("edge {0} is a self-loop")]
    SelfLoop(Edge),
    #[error("edge {0} occurs more than once")]
    Duplicate(Edge),
    #[error("edge {edge} has non-finite weight {weight}")]
    NonFinite { edge: Edge, weight: f64 },
    #[error("graph has no spanning arborescence rooted at 0")]
    NoArborescence,
    #[error("brute force supports at most {BRUTE_FORCE_MAX_TOKENS} tokens, got {0}")]
    TooLarge(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedEdge {
    pub head: usize,
    pub dependent: usize,
    pub weight: f64,
}

impl WeightedEdge {
    pub fn new(head: usize, dependent: usize, weight: f64) -> Self {
        WeightedEdge {
            head,
            dependent,
            weight,
        }
    }

    fn edge(&self) -> Edge {
        Edge::new(self.head, self.dependent)
    }
}

/// Candidate edges of one sentence with real-valued scores. Nodes are
/// `0..=q`, node 0 being the artificial root.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTokenGraph {
    q: usize,
    edges: Vec<WeightedEdge>,
}

impl WeightedTokenGraph {
    pub fn new(q: usize, mut edges: Vec<WeightedEdge>) -> Result<Self, ArborescenceError> {
        if q == 0 {
            return Err(ArborescenceError::Empty);
        }
        for e in &edges {
            if e.head > q || e.dependent == 0 || e.dependent > q {
                return Err(ArborescenceError::OutOfRange(e.edge()));
            }
            if e.head == e.dependent {
                return Err(ArborescenceError::SelfLoop(e.edge()));
            }
            if !e.weight.is_finite() {
                return Err(ArborescenceError::NonFinite {
                    edge: e.edge(),
                    weight: e.weight,
                });
            }
        }
        edges.sort_by_key(|e| e.edge());
        if let Some(w) = edges.windows(2).find(|w| w[0].edge() == w[1].edge()) {
            return Err(ArborescenceError::Duplicate(w[0].edge()));
        }
        Ok(WeightedTokenGraph { q, edges })
    }

    /// Complete digraph over `q` tokens with weights from `weight(head, dep)`.
    pub fn complete(q: usize, mut weight: impl FnMut(usize, usize) -> f64) -> Result<Self, ArborescenceError> {
        let mut edges = Vec::with_capacity(q * q);
        for h in 0..=q {
            for d in 1..=q {
                if h != d {
                    edges.push(WeightedEdge::new(h, d, weight(h, d)));
                }
            }
        }
        WeightedTokenGraph::new(q, edges)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Edges in (head, dependent) order.
    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn weight(&self, edge: Edge) -> Option<f64> {
        self.edges
            .binary_search_by_key(&edge, |e| e.edge())
            .ok()
            .map(|i| self.edges[i].weight)
    }

    /// Total weight of `tree`, summed in dependent order. `None` if the tree
    /// uses an edge that is not a candidate.
    pub fn tree_weight(&self, tree: &DepTree) -> Option<f64> {
        tree.edges().into_iter().map(|e| self.weight(e)).sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Arc {
    from: usize,
    to: usize,
    weight: f64,
    /// Position of the originating edge in the graph's sorted edge list.
    id: usize,
}

fn better(a: &Arc, b: &Arc) -> bool {
    a.weight > b.weight || (a.weight == b.weight && a.id < b.id)
}

/// Returns, for every node except `root`, the index into `arcs` of its
/// incoming arc in a maximum arborescence.
fn chu_liu_edmonds(n: usize, root: usize, arcs: &[Arc]) -> Option<Vec<Option<usize>>> {
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (k, a) in arcs.iter().enumerate() {
        if a.to == root || a.from == a.to {
            continue;
        }
        match best[a.to] {
            Some(b) if !better(a, &arcs[b]) => {}
            _ => best[a.to] = Some(k),
        }
    }
    if (0..n).any(|v| v != root && best[v].is_none()) {
        return None;
    }

    let cycle = match find_cycle(n, root, &best, arcs) {
        None => return Some(best),
        Some(c) => c,
    };

    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    let mut map = vec![0; n];
    let mut next = 0;
    for v in 0..n {
        if !in_cycle[v] {
            map[v] = next;
            next += 1;
        }
    }
    let contracted = next;
    for &v in &cycle {
        map[v] = contracted;
    }

    let mut sub_arcs = Vec::with_capacity(arcs.len());
    let mut origin = Vec::with_capacity(arcs.len());
    for (k, a) in arcs.iter().enumerate() {
        let (u, v) = (map[a.from], map[a.to]);
        if u == v {
            continue;
        }
        let weight = if in_cycle[a.to] {
            a.weight - arcs[best[a.to].unwrap()].weight
        } else {
            a.weight
        };
        sub_arcs.push(Arc {
            from: u,
            to: v,
            weight,
            id: a.id,
        });
        origin.push(k);
    }

    let sub = chu_liu_edmonds(contracted + 1, map[root], &sub_arcs)?;

    let mut result = vec![None; n];
    for v in 0..n {
        if v != root && !in_cycle[v] {
            result[v] = sub[map[v]].map(|k| origin[k]);
        }
    }
    let entering = origin[sub[contracted].unwrap()];
    let entry = arcs[entering].to;
    for &v in &cycle {
        result[v] = if v == entry { Some(entering) } else { best[v] };
    }
    Some(result)
}

fn find_cycle(n: usize, root: usize, best: &[Option<usize>], arcs: &[Arc]) -> Option<Vec<usize>> {
    // 0 = unvisited; otherwise the start node of the walk that visited it + 1.
    let mut mark = vec![0usize; n];
    for start in 0..n {
        if start == root || mark[start] != 0 {
            continue;
        }
        let mut v = start;
        while v != root && mark[v] == 0 {
            mark[v] = start + 1;
            v = arcs[best[v].unwrap()].from;
        }
        if v != root && mark[v] == start + 1 {
            let mut cycle = vec![v];
            let mut u = arcs[best[v].unwrap()].from;
            while u != v {
                cycle.push(u);
                u = arcs[best[u].unwrap()].from;
            }
            return Some(cycle);
        }
    }
    None
}

fn solve(graph: &WeightedTokenGraph, edges: impl Iterator<Item = usize>) -> Option<DepTree> {
    let arcs: Vec<Arc> = edges
        .map(|id| {
            let e = &graph.edges[id];
            Arc {
                from: e.head,
                to: e.dependent,
                weight: e.weight,
                id,
            }
        })
        .collect();
    let chosen = chu_liu_edmonds(graph.q + 1, 0, &arcs)?;
    let heads = (1..=graph.q)
        .map(|d| arcs[chosen[d].unwrap()].from)
        .collect();
    Some(DepTree::new(heads).expect("Chu-Liu/Edmonds yields a tree"))
}

/// Maximum-weight spanning arborescence rooted at node 0.
///
/// With `single_root`, exactly one edge leaves the root: the problem is
/// solved once per candidate root edge with the other root edges removed.
pub fn max_arborescence(
    graph: &WeightedTokenGraph,
    single_root: bool,
) -> Result<DepTree, ArborescenceError> {
    if !single_root {
        return solve(graph, 0..graph.edges.len()).ok_or(ArborescenceError::NoArborescence);
    }

    let root_edges: Vec<usize> = (0..graph.edges.len())
        .filter(|&i| graph.edges[i].head == 0)
        .collect();
    let inner: Vec<usize> = (0..graph.edges.len())
        .filter(|&i| graph.edges[i].head != 0)
        .collect();

    let mut best: Option<(f64, DepTree)> = None;
    for &r in &root_edges {
        let candidate = match solve(graph, std::iter::once(r).chain(inner.iter().copied())) {
            Some(t) => t,
            None => continue,
        };
        let w = graph.tree_weight(&candidate).unwrap();
        if best.as_ref().map_or(true, |(bw, _)| w > *bw) {
            best = Some((w, candidate));
        }
    }
    best.map(|(_, t)| t).ok_or(ArborescenceError::NoArborescence)
}

/// Decode every sentence of `union`, using `scores[i]` as the weight of
/// candidate edge `i`.
pub fn decode_sentences(
    union: &EdgeUnion,
    scores: &[f64],
    single_root: bool,
) -> Result<Vec<DepTree>, ArborescenceError> {
    assert_eq!(scores.len(), union.edges.len(), "one score per candidate edge");
    (0..union.sentence_rows.len())
        .into_par_iter()
        .map(|s| {
            let rows = union.sentence_rows[s].clone();
            let edges = union.edges[rows.clone()]
                .iter()
                .zip(&scores[rows])
                .map(|(e, &w)| WeightedEdge::new(e.head, e.dependent, w))
                .collect();
            let graph = WeightedTokenGraph::new(union.sentence_lengths[s], edges)?;
            max_arborescence(&graph, single_root)
        })
        .collect()
}

/// Exhaustive search over head assignments, for testing.
///
/// Assignments are visited in lexicographic order of the head sequence and
/// the first one of maximum weight is returned.
pub fn brute_force_arborescence(
    graph: &WeightedTokenGraph,
    single_root: bool,
) -> Result<DepTree, ArborescenceError> {
    let q = graph.q;
    if q > BRUTE_FORCE_MAX_TOKENS {
        return Err(ArborescenceError::TooLarge(q));
    }
    // Candidate (head, weight) pairs per dependent, heads ascending.
    let mut options: Vec<Vec<(usize, f64)>> = vec![Vec::new(); q];
    for e in &graph.edges {
        options[e.dependent - 1].push((e.head, e.weight));
    }
    if options.iter().any(|o| o.is_empty()) {
        return Err(ArborescenceError::NoArborescence);
    }

    let mut pick = vec![0usize; q];
    let mut heads = vec![0usize; q];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        for d in 0..q {
            heads[d] = options[d][pick[d]].0;
        }
        let roots = heads.iter().filter(|&&h| h == 0).count();
        if (!single_root || roots == 1) && crate::model::validate_tree(&heads, q).is_ok() {
            let w: f64 = (0..q).map(|d| options[d][pick[d]].1).sum();
            if best.as_ref().map_or(true, |(bw, _)| w > *bw) {
                best = Some((w, heads.clone()));
            }
        }

        // Odometer with the last dependent varying fastest.
        let mut d = q;
        loop {
            if d == 0 {
                return best
                    .map(|(_, h)| DepTree::new(h).unwrap())
                    .ok_or(ArborescenceError::NoArborescence);
            }
            d -= 1;
            pick[d] += 1;
            if pick[d] < options[d].len() {
                break;
            }
            pick[d] = 0;
        }
    }
}
