use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separating sets keyed by `(min, max)` node pair.
pub type Sepsets = BTreeMap<(usize, usize), BTreeSet<usize>>;

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Mixed graph with directed and undirected edges; each unordered pair is in
/// at most one edge set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PartialDagRepr", try_from = "PartialDagRepr")]
pub struct PartialDag {
    nodes: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialDagRepr {
    nodes: Vec<String>,
    directed: Vec<[String; 2]>,
    undirected: Vec<[String; 2]>,
}

impl From<PartialDag> for PartialDagRepr {
    fn from(p: PartialDag) -> Self {
        let name = |i: usize| p.nodes[i].clone();
        Self {
            directed: p.directed.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
            undirected: p.undirected.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
            nodes: p.nodes.clone(),
        }
    }
}

impl TryFrom<PartialDagRepr> for PartialDag {
    type Error = Error;

    fn try_from(r: PartialDagRepr) -> Result<Self> {
        let mut p = PartialDag::empty(r.nodes);
        for [a, b] in &r.directed {
            let (a, b) = (p.index_of(a)?, p.index_of(b)?);
            p.add_directed(a, b)?;
        }
        for [a, b] in &r.undirected {
            let (a, b) = (p.index_of(a)?, p.index_of(b)?);
            p.add_undirected(a, b)?;
        }
        if p.has_directed_cycle() {
            return Err(Error::Cycle);
        }
        Ok(p)
    }
}

impl PartialDag {
    pub fn empty(nodes: Vec<String>) -> Self {
        Self { nodes, directed: BTreeSet::new(), undirected: BTreeSet::new() }
    }

    pub fn complete_undirected(nodes: Vec<String>) -> Self {
        let n = nodes.len();
        let mut p = Self::empty(nodes);
        for a in 0..n {
            for b in a + 1..n {
                p.undirected.insert((a, b));
            }
        }
        p
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_owned()))
    }

    pub fn directed_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    /// Undirected edges as `(min, max)` pairs.
    pub fn undirected_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    /// Every adjacency as a `(min, max)` pair.
    pub fn adjacencies(&self) -> BTreeSet<(usize, usize)> {
        self.directed
            .iter()
            .map(|&(a, b)| key(a, b))
            .chain(self.undirected.iter().copied())
            .collect()
    }

    fn check(&self, a: usize, b: usize) -> Result<()> {
        let n = self.n_nodes();
        if a >= n || b >= n {
            return Err(Error::UnknownNode(a.max(b).to_string()));
        }
        if a == b {
            return Err(Error::InvalidGraph("self-loop".into()));
        }
        if self.adjacent(a, b) {
            return Err(Error::InvalidGraph(format!(
                "pair ({}, {}) already has an edge",
                self.nodes[a], self.nodes[b]
            )));
        }
        Ok(())
    }

    pub fn add_directed(&mut self, a: usize, b: usize) -> Result<()> {
        self.check(a, b)?;
        self.directed.insert((a, b));
        Ok(())
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.check(a, b)?;
        self.undirected.insert(key(a, b));
        Ok(())
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.undirected.remove(&key(a, b));
        self.directed.remove(&(a, b));
        self.directed.remove(&(b, a));
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&key(a, b))
            || self.directed.contains(&(a, b))
            || self.directed.contains(&(b, a))
    }

    /// `a → b`.
    pub fn is_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
    }

    pub fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&key(a, b))
    }

    /// Turn the undirected edge `a − b` into `a → b`. Returns false (and
    /// leaves the graph unchanged) when there is no such undirected edge.
    pub fn orient(&mut self, a: usize, b: usize) -> bool {
        if self.undirected.remove(&key(a, b)) {
            self.directed.insert((a, b));
            true
        } else {
            false
        }
    }

    pub fn neighbors(&self, a: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&b| b != a && self.adjacent(a, b)).collect()
    }

    /// Whether a directed path `from ⇒ to` exists.
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.directed.iter().filter(|e| e.0 == v).map(|e| e.1));
        }
        false
    }

    pub fn has_directed_cycle(&self) -> bool {
        self.directed.iter().any(|&(a, b)| self.has_directed_path(b, a))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Orient `i → k ← j` for every unshielded triple `i − k − j` whose
/// separating set does not contain `k`.
///
/// Triples are visited in node order; when two v-structures disagree on an
/// edge the first orientation is kept.
pub fn orient_v_structures(skeleton: &PartialDag, sepsets: &Sepsets) -> Result<PartialDag> {
    if !skeleton.directed.is_empty() {
        return Err(Error::InvalidGraph("skeleton must be fully undirected".into()));
    }
    let mut out = skeleton.clone();
    let n = skeleton.n_nodes();
    for k in 0..n {
        let nbrs = skeleton.neighbors(k);
        for (x, &i) in nbrs.iter().enumerate() {
            for &j in &nbrs[x + 1..] {
                if skeleton.adjacent(i, j) {
                    continue;
                }
                let sep = sepsets.get(&key(i, j)).ok_or_else(|| {
                    Error::MissingSepset(skeleton.nodes[i].clone(), skeleton.nodes[j].clone())
                })?;
                if sep.contains(&k) {
                    continue;
                }
                for from in [i, j] {
                    if !out.orient(from, k) && !out.is_directed(from, k) {
                        log::warn!(
                            "conflicting v-structure at {}: keeping {} -> {}",
                            skeleton.nodes[k],
                            skeleton.nodes[k],
                            skeleton.nodes[from]
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Apply Meek's rules R1-R4 until no undirected edge can be oriented.
pub fn meek_closure(p: &PartialDag) -> PartialDag {
    let mut g = p.clone();
    loop {
        let mut changed = false;
        let edges: Vec<(usize, usize)> = g.undirected.iter().copied().collect();
        for (u, v) in edges {
            for (a, b) in [(u, v), (v, u)] {
                if g.is_undirected(a, b) && meek_applies(&g, a, b) && !g.has_directed_path(b, a) {
                    g.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            return g;
        }
    }
}

/// Whether one of R1-R4 orients the undirected edge `a − b` as `a → b`.
fn meek_applies(g: &PartialDag, a: usize, b: usize) -> bool {
    let n = g.n_nodes();
    // R1: c → a − b, c and b nonadjacent
    if (0..n).any(|c| c != b && g.is_directed(c, a) && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a → c → b
    if (0..n).any(|c| g.is_directed(a, c) && g.is_directed(c, b)) {
        return true;
    }
    // R3: a − c → b, a − d → b, c and d nonadjacent
    let und: Vec<usize> = (0..n)
        .filter(|&c| c != b && g.is_undirected(a, c))
        .collect();
    for (x, &c) in und.iter().enumerate() {
        for &d in &und[x + 1..] {
            if g.is_directed(c, b) && g.is_directed(d, b) && !g.adjacent(c, d) {
                return true;
            }
        }
    }
    // R4: a − d → c → b, a adjacent to c, b and d nonadjacent
    for &d in &und {
        if g.adjacent(b, d) {
            continue;
        }
        if (0..n).any(|c| {
            c != a && c != b && g.is_directed(d, c) && g.is_directed(c, b) && g.adjacent(a, c)
        }) {
            return true;
        }
    }
    false
}
