//! Scores for a learned model against the generating one: latent omission,
//! latent commission and mismeasurement for the measurement model; edge
//! omission, edge commission and orientation omission for the structure.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::discovery::{DiscoveryReport, MeasurementModel};
use crate::error::{Error, Result};
use crate::graph::PartialDag;
use crate::sim::LsmSpec;

/// A count over a denominator. `value` is absent when the denominator is
/// zero and the metric does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub count: usize,
    pub total: usize,
    pub value: Option<f64>,
}

impl Ratio {
    /// Values above one (more spurious latents than true ones) are clipped.
    pub fn new(count: usize, total: usize) -> Self {
        let value = (total > 0).then(|| (count as f64 / total as f64).min(1.0));
        Self { count, total, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub latent_omission: Option<Ratio>,
    pub latent_commission: Option<Ratio>,
    pub mismeasurement: Option<Ratio>,
    pub edge_omission: Option<Ratio>,
    pub edge_commission: Option<Ratio>,
    pub orientation_omission: Option<Ratio>,
}

impl EvalReport {
    /// Fill the fields missing here from `other`.
    pub fn merge(self, other: EvalReport) -> EvalReport {
        EvalReport {
            latent_omission: self.latent_omission.or(other.latent_omission),
            latent_commission: self.latent_commission.or(other.latent_commission),
            mismeasurement: self.mismeasurement.or(other.mismeasurement),
            edge_omission: self.edge_omission.or(other.edge_omission),
            edge_commission: self.edge_commission.or(other.edge_commission),
            orientation_omission: self.orientation_omission.or(other.orientation_omission),
        }
    }

    /// Metric values in a fixed order, with their column names.
    pub fn columns(&self) -> [(&'static str, Option<Ratio>); 6] {
        [
            ("latent_omission", self.latent_omission),
            ("latent_commission", self.latent_commission),
            ("mismeasurement", self.mismeasurement),
            ("edge_omission", self.edge_omission),
            ("edge_commission", self.edge_commission),
            ("orientation_omission", self.orientation_omission),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Repeatedly pair the learned and true latents with the largest
    /// overlap; ties go to the lower true label, then the lower learned one.
    #[default]
    Greedy,
    /// Maximize total overlap over all assignments, then the number of
    /// matched pairs (at most six latents on either side; larger
    /// problems fall back to greedy).
    Exhaustive,
}

pub const EXHAUSTIVE_LIMIT: usize = 6;

fn overlap(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}

/// For each learned cluster, the index of the true cluster it is matched
/// to. Only pairs sharing at least one observed variable can match.
pub fn match_latents(truth: &[Vec<usize>], learned: &[Vec<usize>], how: Matching) -> Vec<Option<usize>> {
    let ov: Vec<Vec<usize>> = learned.iter().map(|l| truth.iter().map(|t| overlap(l, t)).collect()).collect();
    if how == Matching::Exhaustive && truth.len().max(learned.len()) <= EXHAUSTIVE_LIMIT {
        return exhaustive_match(&ov, truth.len());
    }
    let mut out = vec![None; learned.len()];
    let mut true_used = vec![false; truth.len()];
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for t in 0..truth.len() {
            for (l, row) in ov.iter().enumerate() {
                if true_used[t] || out[l].is_some() || row[t] == 0 {
                    continue;
                }
                if best.map_or(true, |(_, _, o)| row[t] > o) {
                    best = Some((l, t, row[t]));
                }
            }
        }
        match best {
            Some((l, t, _)) => {
                out[l] = Some(t);
                true_used[t] = true;
            }
            None => return out,
        }
    }
}

fn exhaustive_match(ov: &[Vec<usize>], n_true: usize) -> Vec<Option<usize>> {
    // Score is (total overlap, matched pairs); the first best found wins.
    type Best = ((usize, usize), Vec<Option<usize>>);
    fn go(
        l: usize,
        ov: &[Vec<usize>],
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        score: (usize, usize),
        best: &mut Best,
    ) {
        if l == ov.len() {
            if score > best.0 {
                *best = (score, cur.clone());
            }
            return;
        }
        for t in 0..used.len() {
            if !used[t] && ov[l][t] > 0 {
                used[t] = true;
                cur[l] = Some(t);
                go(l + 1, ov, used, cur, (score.0 + ov[l][t], score.1 + 1), best);
                cur[l] = None;
                used[t] = false;
            }
        }
        go(l + 1, ov, used, cur, score, best);
    }
    let mut best: Best = ((0, 0), vec![None; ov.len()]);
    go(0, ov, &mut vec![false; n_true], &mut vec![None; ov.len()], (0, 0), &mut best);
    best.1
}

/// Latent omission, latent commission and mismeasurement. Observed
/// variables sitting in an unmatched learned cluster count as mismeasured.
pub fn score_measurement(truth: &LsmSpec, learned: &MeasurementModel, how: Matching) -> EvalReport {
    let true_clusters = truth.clusters();
    let learned_clusters: Vec<Vec<usize>> = learned.clusters.iter().map(|c| c.members.clone()).collect();
    let matching = match_latents(&true_clusters, &learned_clusters, how);
    let n_true = true_clusters.len();
    let matched = matching.iter().flatten().count();
    let unmatched_learned = matching.len() - matched;
    let mut wrong = 0;
    for (c, m) in learned_clusters.iter().zip(&matching) {
        wrong += match m {
            Some(t) => c.iter().filter(|x| !true_clusters[*t].contains(x)).count(),
            None => c.len(),
        };
    }
    EvalReport {
        latent_omission: Some(Ratio::new(n_true - matched, n_true)),
        latent_commission: Some(Ratio::new(unmatched_learned, n_true)),
        mismeasurement: Some(Ratio::new(wrong, truth.observed_nodes().len())),
        ..Default::default()
    }
}

/// Carry a learned latent graph onto the true latent names: matched latents
/// are renamed, unmatched learned latents dropped, and true latents the
/// learned model missed appear as isolated nodes.
pub fn align_structure(
    learned: &PartialDag,
    matching: &[Option<usize>],
    true_names: &[String],
) -> Result<PartialDag> {
    if matching.len() != learned.n_nodes() {
        return Err(Error::NodeMismatch(format!(
            "{} matches for {} learned latents",
            matching.len(),
            learned.n_nodes()
        )));
    }
    let mut out = PartialDag::empty(true_names.to_vec());
    for &(a, b) in learned.directed_edges() {
        if let (Some(x), Some(y)) = (matching[a], matching[b]) {
            out.add_directed(x, y)?;
        }
    }
    for &(a, b) in learned.undirected_edges() {
        if let (Some(x), Some(y)) = (matching[a], matching[b]) {
            out.add_undirected(x, y)?;
        }
    }
    Ok(out)
}

/// Edge omission, edge commission and orientation omission of `learned`
/// against the true pattern. Nodes are aligned by name.
pub fn score_structure(truth_cpdag: &PartialDag, learned: &PartialDag) -> Result<EvalReport> {
    let names: BTreeSet<&String> = truth_cpdag.nodes().iter().collect();
    let other: BTreeSet<&String> = learned.nodes().iter().collect();
    if names != other || learned.n_nodes() != truth_cpdag.n_nodes() {
        return Err(Error::NodeMismatch(format!(
            "true nodes {:?} vs learned nodes {:?}",
            truth_cpdag.nodes(),
            learned.nodes()
        )));
    }
    // Learned index -> true index.
    let map: Vec<usize> = learned
        .nodes()
        .iter()
        .map(|n| truth_cpdag.index_of(n))
        .collect::<Result<_>>()?;
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let true_adj = truth_cpdag.adjacencies();
    let learned_adj: BTreeSet<(usize, usize)> =
        learned.adjacencies().iter().map(|&(a, b)| key(map[a], map[b])).collect();
    let learned_dir: BTreeSet<(usize, usize)> =
        learned.directed_edges().iter().map(|&(a, b)| (map[a], map[b])).collect();

    let n = truth_cpdag.n_nodes();
    let missing = true_adj.difference(&learned_adj).count();
    let extra = learned_adj.difference(&true_adj).count();
    let arrows = truth_cpdag.directed_edges();
    let lost = arrows.iter().filter(|e| !learned_dir.contains(e)).count();
    Ok(EvalReport {
        edge_omission: Some(Ratio::new(missing, true_adj.len())),
        edge_commission: Some(Ratio::new(extra, n * n.saturating_sub(1) / 2 - true_adj.len())),
        orientation_omission: Some(Ratio::new(lost, arrows.len())),
        ..Default::default()
    })
}

/// All six scores of a discovery run against its generating model.
pub fn evaluate(truth: &LsmSpec, report: &DiscoveryReport, how: Matching) -> Result<EvalReport> {
    let measurement = score_measurement(truth, &report.measurement, how);
    let learned_clusters: Vec<Vec<usize>> =
        report.measurement.clusters.iter().map(|c| c.members.clone()).collect();
    let matching = match_latents(&truth.clusters(), &learned_clusters, how);
    let truth_cpdag = truth.latent_dag().cpdag();
    let aligned = align_structure(&report.structure, &matching, truth_cpdag.nodes())?;
    Ok(measurement.merge(score_structure(&truth_cpdag, &aligned)?))
}

/// Per-trial scores summarized as the mean ratio and the number of trials
/// with a nonzero ratio, written `mean(count)`. Trials where the metric
/// does not apply are left out; `N/A` when none apply.
pub fn table_cell(values: &[Option<Ratio>]) -> String {
    let vals: Vec<f64> = values.iter().filter_map(|r| r.and_then(|r| r.value)).collect();
    if vals.is_empty() {
        return "N/A".into();
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let affected = vals.iter().filter(|&&v| v > 0.0).count();
    format!("{mean:.2}({affected})")
}
