use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mode_smallest, Correction, DiscoveryConfig, TensorSource, TestKind, TestRecord};
use crate::error::Result;
use crate::rank_tests::{estimate_matrix_rank, tensor_rank_gof_test_with};

/// Observed variables sharing one latent parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub latent: String,
    /// Observed column indices, ascending.
    pub members: Vec<usize>,
    /// Estimated support of the latent parent.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub clusters: Vec<Cluster>,
}

impl MeasurementModel {
    pub fn n_latents(&self) -> usize {
        self.clusters.len()
    }

    pub fn latent_labels(&self) -> Vec<String> {
        self.clusters.iter().map(|c| c.latent.clone()).collect()
    }

    pub fn cluster_of(&self, var: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.members.contains(&var))
    }
}

/// Triples accepted by the cluster search, plus every test it ran.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterSearch {
    pub triples: Vec<[usize; 3]>,
    pub tests: Vec<TestRecord>,
    /// Estimated pairwise matrix ranks `(i, j, rank)` (heterogeneous search).
    pub pair_ranks: Vec<(usize, usize, usize)>,
}

/// Test whether `{i, j, k}` is a causal cluster of a latent with support `r`:
/// the three-way table must have rank `r`, and so must every four-way table
/// adding one more variable.
fn check_triple(
    source: &dyn TensorSource,
    triple: [usize; 3],
    r: usize,
    cfg: &DiscoveryConfig,
    tests: &mut Vec<TestRecord>,
) -> Result<bool> {
    let m = source.n_vars();
    let mut others: Vec<usize> = (0..m).filter(|s| !triple.contains(s)).collect();
    if let Some(cap) = cfg.rule2_checks {
        let n = cap.max(8.min(others.len())).min(others.len());
        if n < others.len() {
            let key = (triple[0] * m + triple[1]) * m + triple[2];
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (key as u64).wrapping_mul(0x9E37_79B9));
            let mut picked: Vec<usize> =
                sample(&mut rng, others.len(), n).iter().map(|i| others[i]).collect();
            picked.sort_unstable();
            others = picked;
        }
    }
    let alpha = match cfg.cluster_correction {
        Correction::None => cfg.alpha_tensor,
        Correction::Bonferroni => cfg.alpha_tensor / (1 + others.len()) as f64,
    };
    let names = source.names();
    let label = |vars: &[usize]| vars.iter().map(|&v| names[v].clone()).collect::<Vec<_>>();

    let t = source.tensor(&triple)?;
    let res = tensor_rank_gof_test_with(&t, r, &cfg.cp, alpha, &cfg.gof)?;
    let accept = res.accept;
    tests.push(TestRecord { kind: TestKind::Triple, vars: label(&triple), result: res });
    if !accept {
        return Ok(false);
    }
    for s in others {
        let vars = [triple[0], triple[1], triple[2], s];
        let t = source.tensor(&vars)?;
        let res = tensor_rank_gof_test_with(&t, r, &cfg.cp, alpha, &cfg.gof)?;
        let accept = res.accept;
        tests.push(TestRecord { kind: TestKind::Quadruple, vars: label(&vars), result: res });
        if !accept {
            return Ok(false);
        }
    }
    Ok(true)
}

fn triples(m: usize) -> impl Iterator<Item = [usize; 3]> {
    (0..m).flat_map(move |i| {
        (i + 1..m).flat_map(move |j| (j + 1..m).map(move |k| [i, j, k]))
    })
}

/// Search all triples, in lexicographic order, for causal clusters of
/// latents with support `r`.
pub fn find_clusters(source: &dyn TensorSource, r: usize, cfg: &DiscoveryConfig) -> Result<ClusterSearch> {
    let mut out = ClusterSearch::default();
    for triple in triples(source.n_vars()) {
        if check_triple(source, triple, r, cfg, &mut out.tests)? {
            out.triples.push(triple);
        }
    }
    Ok(out)
}

/// Cluster search when latents may differ in support: each triple is tested
/// at the smallest of its three estimated pairwise ranks, and each merged
/// cluster takes the most common rank among its member pairs.
pub fn find_clusters_hetero(
    source: &dyn TensorSource,
    cfg: &DiscoveryConfig,
) -> Result<(ClusterSearch, MeasurementModel)> {
    let mut ranks: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pair_rank = |i: usize, j: usize| -> Result<usize> {
        if let Some(&r) = ranks.get(&(i, j)) {
            return Ok(r);
        }
        let r = estimate_matrix_rank(&source.tensor(&[i, j])?, cfg.alpha_matrix)?;
        ranks.insert((i, j), r);
        Ok(r)
    };
    let mut out = ClusterSearch::default();
    for triple in triples(source.n_vars()) {
        let [i, j, k] = triple;
        let r = pair_rank(i, j)?.min(pair_rank(i, k)?).min(pair_rank(j, k)?);
        if r < 2 {
            continue;
        }
        if check_triple(source, triple, r, cfg, &mut out.tests)? {
            out.triples.push(triple);
        }
    }
    let mut mm = merge_clusters(&out.triples, 0);
    for c in &mut mm.clusters {
        let mut counts = BTreeMap::new();
        for (x, &a) in c.members.iter().enumerate() {
            for &b in &c.members[x + 1..] {
                *counts.entry(pair_rank(a, b)?).or_insert(0) += 1;
            }
        }
        c.support = mode_smallest(&counts);
    }
    out.pair_ranks = ranks.into_iter().map(|((i, j), r)| (i, j, r)).collect();
    Ok((out, mm))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Merge overlapping triples into clusters (connected components) and
/// label them `L1, L2, …` in order of their smallest member.
pub fn merge_clusters(triples: &[[usize; 3]], support: usize) -> MeasurementModel {
    let n = triples.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    for t in triples {
        for &v in t {
            used[v] = true;
        }
        for &v in &t[1..] {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, v));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in (0..n).filter(|&v| used[v]) {
        let root = find(&mut parent, v);
        groups.entry(root).or_default().push(v);
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().collect();
    members.sort_by_key(|m| m[0]);

    for m in &members {
        let k = m.len();
        let expected = k * (k - 1) * (k - 2) / 6;
        let found = triples.iter().filter(|t| m.contains(&t[0])).count();
        if found < expected {
            log::warn!("cluster {m:?} merged from {found} of its {expected} sub-triples");
        }
    }
    MeasurementModel {
        clusters: members
            .into_iter()
            .enumerate()
            .map(|(i, members)| Cluster { latent: format!("L{}", i + 1), members, support })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn members(mm: &MeasurementModel) -> Vec<Vec<usize>> {
        mm.clusters.iter().map(|c| c.members.clone()).collect()
    }

    #[test]
    fn disjoint_triples_stay_apart() {
        let mm = merge_clusters(&[[4, 5, 6], [1, 2, 3]], 2);
        assert_eq!(members(&mm), vec![vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(mm.clusters[0].latent, "L1");
        assert_eq!(mm.cluster_of(5), Some(1));
    }

    #[test]
    fn overlaps_merge_transitively() {
        let mm = merge_clusters(&[[1, 2, 3], [3, 4, 5], [5, 6, 7]], 2);
        assert_eq!(members(&mm), vec![vec![1, 2, 3, 4, 5, 6, 7]]);
    }

    #[test]
    fn empty_input() {
        assert_eq!(merge_clusters(&[], 2).n_latents(), 0);
    }

    #[test]
    fn triple_enumeration() {
        let all: Vec<_> = triples(4).collect();
        assert_eq!(all, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]);
    }
}
