//! Brute-force graph oracles shared by the integration targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use tensor_lsm::graph::{Dag, Node};

/// Random DAG over `n` nodes: each forward edge in a shuffled order is
/// present with probability `p`, so indices are not a topological order.
pub fn random_dag(rng: &mut impl Rng, n: usize, p: f64) -> (Dag, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((order[i], order[j]));
            }
        }
    }
    (dag_from_edges(n, &edges), edges)
}

pub fn dag_from_edges(n: usize, edges: &[(usize, usize)]) -> Dag {
    let nodes = (0..n).map(|i| Node::latent(format!("V{i}"), 2)).collect();
    Dag::new(nodes, edges).unwrap()
}

pub fn descendants(n: usize, edges: &[(usize, usize)], v: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([v]);
    let mut stack = vec![v];
    while let Some(x) = stack.pop() {
        for &(a, b) in edges {
            if a == x && seen.insert(b) {
                stack.push(b);
            }
        }
    }
    debug_assert!(seen.iter().all(|&x| x < n));
    seen
}

/// Every simple path between `a` and `b` in the skeleton.
pub fn all_paths(n: usize, edges: &[(usize, usize)], a: usize, b: usize) -> Vec<Vec<usize>> {
    fn go(
        cur: &mut Vec<usize>,
        b: usize,
        adj: &[Vec<usize>],
        out: &mut Vec<Vec<usize>>,
    ) {
        let x = *cur.last().unwrap();
        if x == b {
            out.push(cur.clone());
            return;
        }
        for &y in &adj[x] {
            if !cur.contains(&y) {
                cur.push(y);
                go(cur, b, adj, out);
                cur.pop();
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for &(x, y) in edges {
        adj[x].push(y);
        adj[y].push(x);
    }
    let mut out = Vec::new();
    go(&mut vec![a], b, &adj, &mut out);
    out
}

pub fn path_blocked(path: &[usize], edges: &[(usize, usize)], desc: &[BTreeSet<usize>], z: &BTreeSet<usize>) -> bool {
    path.windows(3).any(|w| {
        let (p, v, q) = (w[0], w[1], w[2]);
        let collider = edges.contains(&(p, v)) && edges.contains(&(q, v));
        if collider {
            desc[v].is_disjoint(z)
        } else {
            z.contains(&v)
        }
    })
}

pub fn v_structures(n: usize, edges: &[(usize, usize)]) -> BTreeSet<(usize, usize, usize)> {
    let adj = |a: usize, b: usize| edges.contains(&(a, b)) || edges.contains(&(b, a));
    let mut out = BTreeSet::new();
    for c in 0..n {
        for a in 0..n {
            for b in a + 1..n {
                if edges.contains(&(a, c)) && edges.contains(&(b, c)) && !adj(a, b) {
                    out.insert((a, c, b));
                }
            }
        }
    }
    out
}

pub fn acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
    (0..n).all(|v| {
        let d = descendants(n, edges, v);
        !edges.iter().any(|&(a, b)| b == v && d.contains(&a))
    })
}

/// Pattern of the Markov equivalence class by enumerating every orientation
/// of the skeleton with the same v-structures: an edge is directed when all
/// members agree on it. Returns `(directed, undirected as (min, max))`.
pub fn brute_force_cpdag(dag: &Dag, edges: &[(usize, usize)]) -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>) {
    let n = dag.n_nodes();
    let target = v_structures(n, edges);
    let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
    for mask in 0u32..(1 << edges.len()) {
        let oriented: Vec<(usize, usize)> = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| if mask >> i & 1 == 1 { (b, a) } else { (a, b) })
            .collect();
        if acyclic(n, &oriented) && v_structures(n, &oriented) == target {
            members.push(oriented);
        }
    }
    let mut directed = BTreeSet::new();
    let mut undirected = BTreeSet::new();
    for (i, &(a, b)) in edges.iter().enumerate() {
        let same = members.iter().all(|m| m[i] == (a, b));
        if same {
            directed.insert((a, b));
        } else {
            undirected.insert((a.min(b), a.max(b)));
        }
    }
    (directed, undirected)
}

/// d-separation of `a` and `b` given `z` by checking every simple path.
pub fn brute_force_dsep(n: usize, edges: &[(usize, usize)], a: usize, b: usize, z: &BTreeSet<usize>) -> bool {
    let desc: Vec<BTreeSet<usize>> = (0..n).map(|v| descendants(n, edges, v)).collect();
    all_paths(n, edges, a, b).iter().all(|p| path_blocked(p, edges, &desc, z))
}
