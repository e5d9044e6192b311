//! Directed acyclic graphs over latent and observed variables, d-separation,
//! and the graphical rank oracle.

mod pdag;

pub use pdag::{meek_closure, orient_v_structures, PartialDag, Sepsets};

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on separator size searched by [`Dag::minimal_dsep_support`].
pub const DEFAULT_MAX_SEPARATOR: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub latent: bool,
    /// Support size of the variable.
    pub card: usize,
}

impl Node {
    pub fn latent(name: impl Into<String>, card: usize) -> Self {
        Self { name: name.into(), latent: true, card }
    }

    pub fn observed(name: impl Into<String>, card: usize) -> Self {
        Self { name: name.into(), latent: false, card }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<Node>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl Dag {
    /// Build from nodes and `(parent, child)` index pairs.
    pub fn new(nodes: Vec<Node>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|o| o.name == node.name) {
                return Err(Error::InvalidGraph(format!("duplicate node {}", node.name)));
            }
        }
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::UnknownNode(format!("{}", a.max(b))));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on {}", nodes[a].name)));
            }
            if children[a].contains(&b) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {} -> {}",
                    nodes[a].name, nodes[b].name
                )));
            }
            children[a].push(b);
            parents[b].push(a);
        }
        parents.iter_mut().for_each(|p| p.sort_unstable());
        children.iter_mut().for_each(|c| c.sort_unstable());

        // Kahn's algorithm, smallest index first
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topo.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::Cycle);
        }
        Ok(Self { nodes, parents, children, topo })
    }

    /// Build from nodes and `(parent, child)` label pairs.
    pub fn from_labels(nodes: Vec<Node>, edges: &[(&str, &str)]) -> Result<Self> {
        let find = |name: &str| {
            nodes
                .iter()
                .position(|n| n.name == name)
                .ok_or_else(|| Error::UnknownNode(name.to_owned()))
        };
        let idx = edges
            .iter()
            .map(|&(a, b)| Ok((find(a)?, find(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, &idx)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &Node {
        &self.nodes[v]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::UnknownNode(name.to_owned()))
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Topological order, ties broken by node index.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// All `(parent, child)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| cs.iter().map(move |&b| (a, b)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.children[a].contains(&b)
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn latent_indices(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&v| self.nodes[v].latent).collect()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&v| !self.nodes[v].latent).collect()
    }

    /// `set` together with all its ancestors.
    pub fn ancestors_of(&self, set: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack: Vec<usize> = set.to_vec();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend_from_slice(&self.parents[v]);
            }
        }
        seen
    }

    /// Graph induced on `keep` (in the given order).
    pub fn induced(&self, keep: &[usize]) -> Result<Dag> {
        let mut pos = vec![usize::MAX; self.n_nodes()];
        for (i, &v) in keep.iter().enumerate() {
            if v >= self.n_nodes() {
                return Err(Error::UnknownNode(v.to_string()));
            }
            pos[v] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .filter(|&(a, b)| pos[a] != usize::MAX && pos[b] != usize::MAX)
            .map(|(a, b)| (pos[a], pos[b]))
            .collect();
        Dag::new(keep.iter().map(|&v| self.nodes[v].clone()).collect(), &edges)
    }

    /// True iff every path between `a` and `b` is blocked by `z`.
    ///
    /// Reachability walk over (node, direction) states: a trail passes a
    /// non-collider only if it is outside `z`, and a collider only if it is
    /// in `z` or has a descendant in `z`.
    pub fn d_separated(&self, a: &[usize], b: &[usize], z: &[usize]) -> Result<bool> {
        let n = self.n_nodes();
        for &v in a.iter().chain(b).chain(z) {
            if v >= n {
                return Err(Error::UnknownNode(v.to_string()));
            }
        }
        let disjoint = |x: &[usize], y: &[usize]| x.iter().all(|v| !y.contains(v));
        if !disjoint(a, b) || !disjoint(a, z) || !disjoint(b, z) {
            return Err(Error::OverlappingSets);
        }
        let mut in_z = vec![false; n];
        z.iter().for_each(|&v| in_z[v] = true);
        let anc_z = self.ancestors_of(z);

        // direction: false = arrived from a child (moving up), true = from a parent
        let mut visited = vec![[false; 2]; n];
        let mut queue: VecDeque<(usize, bool)> = a.iter().map(|&v| (v, false)).collect();
        while let Some((v, down)) = queue.pop_front() {
            if visited[v][down as usize] {
                continue;
            }
            visited[v][down as usize] = true;
            if !in_z[v] && b.contains(&v) {
                return Ok(false);
            }
            if !down {
                if !in_z[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, false)));
                    queue.extend(self.children[v].iter().map(|&c| (c, true)));
                }
            } else {
                if !in_z[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, true)));
                }
                if anc_z[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, false)));
                }
            }
        }
        Ok(true)
    }

    /// Smallest joint support `Π card(S)` over sets `S ⊆ V \ X` with at most
    /// `max_size` members that d-separate every pair in `x`.
    ///
    /// This is the graphical value of the tensor rank of the joint table of
    /// `x`. Ties in support go to the smaller, then lexicographically first,
    /// set.
    pub fn minimal_dsep_support(&self, x: &[usize], max_size: usize) -> Result<DsepSupport> {
        if x.len() < 2 {
            return Err(Error::InvalidQuery("need at least two variables".into()));
        }
        for (i, &v) in x.iter().enumerate() {
            if v >= self.n_nodes() {
                return Err(Error::UnknownNode(v.to_string()));
            }
            if x[..i].contains(&v) {
                return Err(Error::OverlappingSets);
            }
        }
        let pool: Vec<usize> = (0..self.n_nodes()).filter(|v| !x.contains(v)).collect();
        let mut best: Option<(usize, Vec<usize>)> = None;
        for size in 0..=max_size.min(pool.len()) {
            for_each_subset::<Error>(&pool, size, |s| {
                let support: usize = s.iter().map(|&v| self.nodes[v].card).product();
                if best.as_ref().is_some_and(|(b, _)| support >= *b) {
                    return Ok(());
                }
                if self.separates_all_pairs(x, s)? {
                    best = Some((support, s.to_vec()));
                }
                Ok(())
            })?;
        }
        Ok(match best {
            Some((support, witness)) => DsepSupport { support, witness, fallback: false },
            None => DsepSupport {
                support: pool
                    .iter()
                    .map(|&v| self.nodes[v].card)
                    .fold(1usize, usize::saturating_mul),
                witness: pool,
                fallback: true,
            },
        })
    }

    fn separates_all_pairs(&self, x: &[usize], s: &[usize]) -> Result<bool> {
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                if !self.d_separated(&[x[i]], &[x[j]], s)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Completed partially directed graph of this DAG's Markov equivalence
    /// class: skeleton, v-structures, then Meek closure.
    pub fn cpdag(&self) -> PartialDag {
        let names: Vec<String> = self.nodes.iter().map(|n| n.name.clone()).collect();
        let mut p = PartialDag::empty(names);
        for (a, b) in self.edges() {
            p.add_undirected(a, b).expect("skeleton edges are unique");
        }
        for k in 0..self.n_nodes() {
            let pa = &self.parents[k];
            for (x, &i) in pa.iter().enumerate() {
                for &j in &pa[x + 1..] {
                    if !self.adjacent(i, j) {
                        p.orient(i, k);
                        p.orient(j, k);
                    }
                }
            }
        }
        meek_closure(&p)
    }
}

/// Result of [`Dag::minimal_dsep_support`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsepSupport {
    pub support: usize,
    pub witness: Vec<usize>,
    /// Set when no separator was found within the size bound; `witness` then
    /// lists every other node and `support` their joint support.
    pub fallback: bool,
}

/// The `size`-element subsets of `pool` in lexicographic order.
pub(crate) fn subsets(pool: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_subset::<()>(pool, size, |s| {
        out.push(s.to_vec());
        Ok(())
    })
    .expect("infallible");
    out
}

/// Visit the `size`-element subsets of `pool` in lexicographic order.
pub(crate) fn for_each_subset<E>(
    pool: &[usize],
    size: usize,
    mut f: impl FnMut(&[usize]) -> std::result::Result<(), E>,
) -> std::result::Result<(), E> {
    if size > pool.len() {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..size).collect();
    let mut buf: Vec<usize> = vec![0; size];
    loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = pool[i];
        }
        f(&buf)?;
        let mut k = size;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            if idx[k] < pool.len() - size + k {
                idx[k] += 1;
                for j in k + 1..size {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
