//! Learning the measurement model and the latent structure from observed
//! contingency tables.

mod ci;
mod clusters;
mod pc;

pub use ci::{build_query, ci_test_latent, CiOutcome, CiQuery, CiTester, DsepCi, TensorRankCi};
pub use clusters::{
    find_clusters, find_clusters_hetero, merge_clusters, Cluster, ClusterSearch, MeasurementModel,
};
pub use pc::{pc_tensor_rank, PcResult};

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpd::CpConfig;
use crate::error::{Error, Result};
use crate::graph::PartialDag;
use crate::rank_tests::{estimate_matrix_rank, GofOptions, RankTestResult};
use crate::sim::LsmSpec;
use crate::tensor::{CategoricalDataset, ContingencyTensor};

/// Nominal sample size attached to exact tables so the test statistics
/// have a scale.
pub const ORACLE_NOMINAL_N: usize = 1_000_000_000;

/// Anything that can produce joint tables over observed variables.
pub trait TensorSource {
    fn names(&self) -> Vec<String>;
    fn cards(&self) -> Vec<usize>;
    fn tensor(&self, vars: &[usize]) -> Result<ContingencyTensor>;

    fn n_vars(&self) -> usize {
        self.cards().len()
    }
}

/// Empirical tables from a dataset.
pub struct EmpiricalSource<'a>(pub &'a CategoricalDataset);

impl TensorSource for EmpiricalSource<'_> {
    fn names(&self) -> Vec<String> {
        self.0.names().to_vec()
    }

    fn cards(&self) -> Vec<usize> {
        self.0.cards().to_vec()
    }

    fn tensor(&self, vars: &[usize]) -> Result<ContingencyTensor> {
        self.0.contingency(vars)
    }
}

/// Exact tables of a model, reported with a nominal sample size.
pub struct OracleSource<'a> {
    pub spec: &'a LsmSpec,
    pub nominal_n: usize,
}

impl<'a> OracleSource<'a> {
    pub fn new(spec: &'a LsmSpec) -> Self {
        Self { spec, nominal_n: ORACLE_NOMINAL_N }
    }
}

impl TensorSource for OracleSource<'_> {
    fn names(&self) -> Vec<String> {
        self.spec.observed_names()
    }

    fn cards(&self) -> Vec<usize> {
        self.spec.observed_cards()
    }

    fn tensor(&self, vars: &[usize]) -> Result<ContingencyTensor> {
        Ok(self.spec.oracle_joint(vars)?.with_samples(self.nominal_n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    /// Split alpha evenly over the tests that decide one candidate cluster.
    Bonferroni,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryConfig {
    pub alpha_matrix: f64,
    pub alpha_tensor: f64,
    pub cp: CpConfig,
    pub gof: GofOptions,
    /// Pairs used to estimate the latent support.
    pub support_pairs: usize,
    /// Known latent support; estimated from pairwise ranks when absent.
    pub latent_support: Option<usize>,
    /// Allow a different support per latent.
    pub hetero: bool,
    /// Largest number of conditioning latents in the skeleton search.
    pub max_cond: usize,
    /// Multiple-testing correction over the tests deciding one candidate
    /// cluster.
    pub cluster_correction: Correction,
    /// Cap on the fourth variables checked per candidate cluster; never
    /// below `min(8, m - 3)`. `None` checks every one.
    pub rule2_checks: Option<usize>,
    /// Number of child selections voted over per latent CI query.
    pub ci_votes: usize,
    pub seed: u64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            alpha_matrix: 0.005,
            alpha_tensor: 0.05,
            cp: CpConfig::default(),
            gof: GofOptions::default(),
            support_pairs: 5,
            latent_support: None,
            hetero: false,
            max_cond: 2,
            cluster_correction: Correction::Bonferroni,
            rule2_checks: None,
            ci_votes: 1,
            seed: 0,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_matrix", self.alpha_matrix), ("alpha_tensor", self.alpha_tensor)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.cp.restarts == 0 {
            return Err(Error::InvalidConfig("cp.restarts must be positive".into()));
        }
        if self.support_pairs == 0 || self.ci_votes == 0 {
            return Err(Error::InvalidConfig("support_pairs and ci_votes must be positive".into()));
        }
        if self.latent_support.is_some_and(|r| r < 2) {
            return Err(Error::InvalidConfig("latent_support must be at least 2".into()));
        }
        Ok(())
    }
}

/// One rank test run during discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub kind: TestKind,
    pub vars: Vec<String>,
    pub result: RankTestResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Three-way screen of a candidate cluster.
    Triple,
    /// Four-way confirmation of a candidate cluster.
    Quadruple,
    /// Latent conditional independence.
    LatentCi,
}

/// Estimate the shared latent support as the most common estimated matrix
/// rank over `k` seeded random pairs; ties go to the smaller rank.
pub fn estimate_latent_support(
    source: &dyn TensorSource,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<usize> {
    let m = source.n_vars();
    if m < 2 {
        return Err(Error::InvalidDataset("need at least two observed variables".into()));
    }
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample(&mut rng, pairs.len(), k.min(pairs.len()));
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for idx in chosen.iter() {
        let (i, j) = pairs[idx];
        let r = estimate_matrix_rank(&source.tensor(&[i, j])?, alpha)?;
        *counts.entry(r).or_default() += 1;
    }
    let mode = mode_smallest(&counts);
    if mode <= 1 {
        return Err(Error::DegenerateModel);
    }
    Ok(mode)
}

/// Most frequent key, smallest on ties.
pub(crate) fn mode_smallest(counts: &BTreeMap<usize, usize>) -> usize {
    let best = counts.values().copied().max().unwrap_or(0);
    counts.iter().find(|(_, &c)| c == best).map_or(0, |(&k, _)| k)
}

/// Everything decided by one discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub config: DiscoveryConfig,
    pub variables: Vec<String>,
    /// Shared latent support used for the search (absent in hetero mode).
    pub latent_support: Option<usize>,
    pub measurement: MeasurementModel,
    pub structure: PartialDag,
    pub cluster_tests: Vec<TestRecord>,
    pub ci_tests: Vec<TestRecord>,
}

impl DiscoveryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Full pipeline: latent support, clusters, merged measurement model, then
/// the latent structure.
pub fn discover(source: &dyn TensorSource, cfg: &DiscoveryConfig) -> Result<DiscoveryReport> {
    cfg.validate()?;
    let (latent_support, search, measurement) = if cfg.hetero {
        let (search, mm) = find_clusters_hetero(source, cfg)?;
        (None, search, mm)
    } else {
        let r = match cfg.latent_support {
            Some(r) => r,
            None => estimate_latent_support(source, cfg.support_pairs, cfg.alpha_matrix, cfg.seed)?,
        };
        let search = find_clusters(source, r, cfg)?;
        let mm = merge_clusters(&search.triples, r);
        (Some(r), search, mm)
    };
    let mut tester = TensorRankCi::new(source, &measurement, cfg);
    let names = measurement.latent_labels();
    let pc = pc_tensor_rank(&mut tester, names, cfg.max_cond)?;
    let ci_tests = tester.into_records();
    Ok(DiscoveryReport {
        config: cfg.clone(),
        variables: source.names(),
        latent_support,
        measurement,
        structure: pc.graph,
        cluster_tests: search.tests,
        ci_tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_spec, Measurement, Structure};

    #[test]
    fn mode_prefers_smaller_on_ties() {
        let counts = BTreeMap::from([(2, 2), (3, 2), (4, 1)]);
        assert_eq!(mode_smallest(&counts), 2);
    }

    #[test]
    fn support_from_exact_tables() {
        let spec = build_spec(Structure::Chain(1), Measurement::Children(2), &[2], 3, 0).unwrap();
        let r = estimate_latent_support(&OracleSource::new(&spec), 5, 0.005, 0).unwrap();
        assert_eq!(r, 2);
    }

    #[test]
    fn independent_variables_are_degenerate() {
        let rows: Vec<Vec<u32>> = (0..900).map(|i| vec![i % 3, (i / 3) % 3, (i / 9) % 3]).collect();
        let data = CategoricalDataset::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![3, 3, 3],
            &rows,
        )
        .unwrap();
        assert!(matches!(
            estimate_latent_support(&EmpiricalSource(&data), 5, 0.005, 0),
            Err(Error::DegenerateModel)
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = DiscoveryConfig { alpha_tensor: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = DiscoveryConfig { latent_support: Some(1), ..Default::default() };
        assert!(cfg.validate().is_err());
        DiscoveryConfig::default().validate().unwrap();
    }
}
