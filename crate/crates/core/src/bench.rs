//! Repeated-trial benchmarks: generate a model, sample it, run discovery and
//! score the result, then summarize each case as one table row.
//!
//! Every trial draws its seeds from the master seed and its trial index
//! alone, so any single trial can be replayed in isolation and cases that
//! differ only in sample size share their generated models.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::discovery::{discover, DiscoveryConfig, EmpiricalSource, OracleSource};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, table_cell, EvalReport, Matching};
use crate::sim::{build_spec, Measurement, Structure};

/// splitmix64 finalizer applied to `x` advanced by the golden-ratio step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds of trial `t`: `(model, sample)`.
pub fn trial_seeds(master: u64, trial: usize) -> (u64, u64) {
    let model = splitmix64(master ^ splitmix64(trial as u64));
    (model, splitmix64(model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCase {
    pub structure: Structure,
    pub measurement: Measurement,
    /// One shared latent support, or one per latent.
    pub r: Vec<usize>,
    pub d: usize,
    /// Sample size; `0` scores the exact tables instead of samples.
    pub n_samples: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub master_seed: u64,
    pub cases: Vec<BenchCase>,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
    /// Hand the true latent support to discovery instead of estimating it.
    #[serde(default = "yes")]
    pub known_support: bool,
    #[serde(default)]
    pub matching: Matching,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub case: usize,
    pub trial: usize,
    pub model_seed: u64,
    pub sample_seed: u64,
    pub eval: EvalReport,
}

impl BenchCase {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.r.is_empty() || self.r.iter().any(|&r| r < 2) {
            return Err(Error::InvalidConfig("latent supports must be at least 2".into()));
        }
        Ok(())
    }

    fn hetero(&self) -> bool {
        self.r.iter().any(|&r| r != self.r[0])
    }
}

/// Discovery settings for one case: heterogeneous supports switch on the
/// per-latent search; otherwise the shared support is passed when known.
pub fn case_config(suite: &BenchSuite, case: &BenchCase, model_seed: u64) -> DiscoveryConfig {
    let mut cfg = suite.discovery.clone();
    cfg.seed = model_seed;
    if case.hetero() {
        cfg.hetero = true;
        cfg.latent_support = None;
    } else if suite.known_support {
        cfg.latent_support = Some(case.r[0]);
    }
    cfg
}

pub fn run_trial(suite: &BenchSuite, case_index: usize, trial: usize) -> Result<TrialOutcome> {
    let case = suite
        .cases
        .get(case_index)
        .ok_or_else(|| Error::InvalidConfig(format!("no case {case_index}")))?;
    case.validate()?;
    let (model_seed, sample_seed) = trial_seeds(suite.master_seed, trial);
    let spec = build_spec(case.structure, case.measurement, &case.r, case.d, model_seed)?;
    let cfg = case_config(suite, case, model_seed);
    let report = if case.n_samples == 0 {
        discover(&OracleSource::new(&spec), &cfg)?
    } else {
        let data = spec.sample(case.n_samples, sample_seed)?;
        discover(&EmpiricalSource(&data), &cfg)?
    };
    Ok(TrialOutcome {
        case: case_index,
        trial,
        model_seed,
        sample_seed,
        eval: evaluate(&spec, &report, suite.matching)?,
    })
}

/// Run every trial of every case, in case then trial order. A trial whose
/// discovery fails outright (for example every pair looking independent)
/// is an error for the whole suite.
pub fn run_suite(suite: &BenchSuite, mut progress: impl FnMut(&TrialOutcome)) -> Result<Vec<TrialOutcome>> {
    let mut out = Vec::new();
    for (c, case) in suite.cases.iter().enumerate() {
        case.validate()?;
        for t in 0..case.trials {
            let o = run_trial(suite, c, t)?;
            progress(&o);
            out.push(o);
        }
    }
    Ok(out)
}

/// Tab-separated table, one row per case, each metric as `mean(count)`.
pub fn render_table(suite: &BenchSuite, outcomes: &[TrialOutcome]) -> String {
    let mut s = String::from("structure\tmeasurement\tr\td\tn_samples\ttrials");
    for (name, _) in EvalReport::default().columns() {
        s.push('\t');
        s.push_str(name);
    }
    s.push('\n');
    for (c, case) in suite.cases.iter().enumerate() {
        let rows: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.case == c).collect();
        let r: Vec<String> = case.r.iter().map(|r| r.to_string()).collect();
        let _ = write!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            case.structure,
            case.measurement,
            r.join(","),
            case.d,
            case.n_samples,
            rows.len()
        );
        for k in 0..6 {
            let vals: Vec<_> = rows.iter().map(|o| o.eval.columns()[k].1).collect();
            s.push('\t');
            s.push_str(&table_cell(&vals));
        }
        s.push('\n');
    }
    s
}
