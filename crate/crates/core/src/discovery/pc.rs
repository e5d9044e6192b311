use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::CiTester;
use crate::error::{Error, Result};
use crate::graph::{meek_closure, orient_v_structures, subsets, PartialDag, Sepsets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcResult {
    pub graph: PartialDag,
    pub skeleton: PartialDag,
    pub sepsets: Vec<((usize, usize), Vec<usize>)>,
}

/// PC search over latent variables: order-independent skeleton phase with
/// conditioning sets of at most `max_cond` latents, then v-structures and
/// Meek's rules.
///
/// Within a level every adjacency is tested against the graph as it stood
/// at the start of the level, and removals are applied at the end. Queries
/// that cannot be tested keep their edge.
pub fn pc_tensor_rank(
    tester: &mut dyn CiTester,
    latents: Vec<String>,
    max_cond: usize,
) -> Result<PcResult> {
    let mut skeleton = PartialDag::complete_undirected(latents);
    let mut sepsets = Sepsets::new();
    for level in 0..=max_cond {
        let snapshot = skeleton.clone();
        let mut removals = Vec::new();
        let mut any_candidates = false;
        for &(i, j) in snapshot.undirected_edges() {
            let mut separated = None;
            for (a, b) in [(i, j), (j, i)] {
                let pool: Vec<usize> = snapshot.neighbors(a).into_iter().filter(|&v| v != b).collect();
                if pool.len() < level {
                    continue;
                }
                any_candidates = true;
                for s in subsets(&pool, level) {
                    match tester.independent(i, j, &s) {
                        Ok(true) => {
                            separated = Some(s);
                            break;
                        }
                        Ok(false) => {}
                        Err(Error::Untestable { rank, bound }) => log::warn!(
                            "untestable query {} vs {} given {:?} (rank {rank}, bound {bound}); keeping edge",
                            snapshot.nodes()[i],
                            snapshot.nodes()[j],
                            s
                        ),
                        Err(e) => return Err(e),
                    }
                }
                if separated.is_some() {
                    break;
                }
            }
            if let Some(s) = separated {
                removals.push((i, j, s));
            }
        }
        for (i, j, s) in removals {
            skeleton.remove_edge(i, j);
            sepsets.insert((i, j), s.into_iter().collect::<BTreeSet<_>>());
        }
        if !any_candidates {
            break;
        }
    }
    let oriented = orient_v_structures(&skeleton, &sepsets)?;
    let graph = meek_closure(&oriented);
    Ok(PcResult {
        graph,
        skeleton,
        sepsets: sepsets.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
    })
}
