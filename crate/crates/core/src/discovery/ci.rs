use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DiscoveryConfig, MeasurementModel, TensorSource, TestKind, TestRecord};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::rank_tests::{cr_matrix_rank_test, tensor_rank_gof_test_with, RankTestResult};

/// A latent conditional independence query `Li ⊥ Lj | Lp` together with
/// the observed children chosen to test it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiQuery {
    pub li: usize,
    pub lj: usize,
    pub lp: Vec<usize>,
    pub xi: usize,
    pub xj: usize,
    /// One child of each conditioning latent.
    pub xp1: Vec<usize>,
    /// A second, different child of each conditioning latent.
    pub xp2: Vec<usize>,
    /// Rank of the joint table under independence: the product of the
    /// conditioning latents' supports.
    pub rank: usize,
}

impl CiQuery {
    /// Observed variables of the test table, in axis order.
    pub fn vars(&self) -> Vec<usize> {
        let mut v = vec![self.xi, self.xj];
        v.extend(&self.xp1);
        v.extend(&self.xp2);
        v
    }
}

/// Choose children for `Li ⊥ Lj | Lp`. Selection 0 takes the lowest-index
/// children; selection `s` rotates through each cluster's members.
pub fn build_query(
    mm: &MeasurementModel,
    li: usize,
    lj: usize,
    lp: &[usize],
    selection: usize,
) -> Result<CiQuery> {
    let n = mm.n_latents();
    if li == lj || li >= n || lj >= n {
        return Err(Error::InvalidQuery(format!("bad latent pair ({li}, {lj})")));
    }
    for (x, &p) in lp.iter().enumerate() {
        if p >= n || p == li || p == lj || lp[..x].contains(&p) {
            return Err(Error::InvalidQuery(format!("bad conditioning latent {p}")));
        }
    }
    let pick = |c: usize, k: usize| {
        let m = &mm.clusters[c].members;
        m[k % m.len()]
    };
    let mut xp1 = Vec::with_capacity(lp.len());
    let mut xp2 = Vec::with_capacity(lp.len());
    for &p in lp {
        if mm.clusters[p].members.len() < 2 {
            return Err(Error::InvalidQuery(format!(
                "{} needs two children to condition on",
                mm.clusters[p].latent
            )));
        }
        xp1.push(pick(p, 2 * selection));
        xp2.push(pick(p, 2 * selection + 1));
    }
    Ok(CiQuery {
        li,
        lj,
        lp: lp.to_vec(),
        xi: pick(li, selection),
        xj: pick(lj, selection),
        xp1,
        xp2,
        rank: lp.iter().map(|&p| mm.clusters[p].support).product(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiOutcome {
    pub independent: bool,
    pub result: RankTestResult,
}

/// Decide `Li ⊥ Lj | Lp` from the rank of the table over the query's
/// children. With no conditioning latents this is a rank-one test of the
/// pair at `alpha_matrix`.
pub fn ci_test_latent(
    q: &CiQuery,
    source: &dyn TensorSource,
    cfg: &DiscoveryConfig,
) -> Result<CiOutcome> {
    if q.lp.is_empty() {
        let result = cr_matrix_rank_test(&source.tensor(&[q.xi, q.xj])?, 1, cfg.alpha_matrix)?;
        return Ok(CiOutcome { independent: result.accept, result });
    }
    let vars = q.vars();
    let cards = source.cards();
    let dims: Vec<usize> = vars.iter().map(|&v| cards[v]).collect();
    let bound = dims.iter().product::<usize>() - dims.iter().max().copied().unwrap_or(0);
    if q.rank >= bound {
        return Err(Error::Untestable { rank: q.rank, bound });
    }
    let t = source.tensor(&vars)?;
    let result = tensor_rank_gof_test_with(&t, q.rank, &cfg.cp, cfg.alpha_tensor, &cfg.gof)?;
    Ok(CiOutcome { independent: result.accept, result })
}

/// Source of answers to latent CI queries, indexed by latent position.
pub trait CiTester {
    fn independent(&mut self, li: usize, lj: usize, lp: &[usize]) -> Result<bool>;
}

/// CI decisions from tensor-rank tests on observed data.
pub struct TensorRankCi<'a> {
    source: &'a dyn TensorSource,
    mm: &'a MeasurementModel,
    cfg: &'a DiscoveryConfig,
    records: Vec<TestRecord>,
    /// Decisions keyed by the unordered pair and the sorted conditioning set.
    cache: BTreeMap<(usize, usize, Vec<usize>), bool>,
}

impl<'a> TensorRankCi<'a> {
    pub fn new(source: &'a dyn TensorSource, mm: &'a MeasurementModel, cfg: &'a DiscoveryConfig) -> Self {
        Self { source, mm, cfg, records: Vec::new(), cache: BTreeMap::new() }
    }

    pub fn into_records(self) -> Vec<TestRecord> {
        self.records
    }
}

impl CiTester for TensorRankCi<'_> {
    /// Majority over `ci_votes` child selections; ties count as dependent.
    fn independent(&mut self, li: usize, lj: usize, lp: &[usize]) -> Result<bool> {
        let mut sorted = lp.to_vec();
        sorted.sort_unstable();
        let key = (li.min(lj), li.max(lj), sorted);
        if let Some(&hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let names = self.source.names();
        let mut yes = 0;
        for sel in 0..self.cfg.ci_votes {
            let q = build_query(self.mm, li, lj, lp, sel)?;
            let out = ci_test_latent(&q, self.source, self.cfg)?;
            yes += out.independent as usize;
            self.records.push(TestRecord {
                kind: TestKind::LatentCi,
                vars: q.vars().iter().map(|&v| names[v].clone()).collect(),
                result: out.result,
            });
        }
        let independent = 2 * yes > self.cfg.ci_votes;
        self.cache.insert(key, independent);
        Ok(independent)
    }
}

/// CI answers read off a known latent DAG by d-separation.
pub struct DsepCi<'a> {
    pub dag: &'a Dag,
}

impl CiTester for DsepCi<'_> {
    fn independent(&mut self, li: usize, lj: usize, lp: &[usize]) -> Result<bool> {
        self.dag.d_separated(&[li], &[lj], lp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::merge_clusters;

    fn mm() -> MeasurementModel {
        merge_clusters(&[[0, 1, 2], [3, 4, 5], [6, 7, 8], [9, 10, 11]], 2)
    }

    #[test]
    fn lowest_index_children() {
        let q = build_query(&mm(), 0, 3, &[1, 2], 0).unwrap();
        assert_eq!((q.xi, q.xj), (0, 9));
        assert_eq!(q.xp1, vec![3, 6]);
        assert_eq!(q.xp2, vec![4, 7]);
        assert_eq!(q.rank, 4);
        assert_eq!(q.vars(), vec![0, 9, 3, 6, 4, 7]);
    }

    #[test]
    fn rotated_selection_keeps_sides_disjoint() {
        for sel in 0..3 {
            let q = build_query(&mm(), 0, 1, &[2], sel).unwrap();
            assert_ne!(q.xp1, q.xp2);
        }
    }

    #[test]
    fn invalid_queries() {
        assert!(build_query(&mm(), 0, 0, &[], 0).is_err());
        assert!(build_query(&mm(), 0, 1, &[1], 0).is_err());
        assert!(build_query(&mm(), 0, 1, &[7], 0).is_err());
    }
}
