//! Discrete latent structure models: templates, random CPTs, forward
//! sampling and exact marginal tables.
//!
//! Node layout of generated specs: latents `L1..Lk` come first, followed by
//! the observed variables `X1..Xm`, grouped by latent parent in latent order.
//! Observed column `i` of a sampled dataset is node `k + i`.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dag, Node};
use crate::tensor::{for_each_index, CategoricalDataset, ContingencyTensor, DenseTensor};

/// Range CPT entries are drawn from before normalization.
const CPT_RANGE: (f64, f64) = (0.1, 0.8);
/// Smallest admissible singular value of a CPT matrix.
const CPT_MIN_SINGULAR: f64 = 1e-6;
const CPT_MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Structure {
    /// `L1 → L2`.
    Sm1,
    /// `L1 → L2 → L3`.
    Sm2,
    /// `L1 → L2, L1 → L3, L2 → L4, L3 → L4`.
    Sm3,
    /// `L1 → L2 ← L3`.
    Collider,
    /// `L1 → L2, L1 → L3, L1 → L4`.
    Star,
    /// `L1 → L2 → … → Lk`; `Chain(1)` is a single latent.
    Chain(usize),
}

impl Structure {
    pub fn n_latents(self) -> usize {
        match self {
            Structure::Sm1 => 2,
            Structure::Sm2 | Structure::Collider => 3,
            Structure::Sm3 | Structure::Star => 4,
            Structure::Chain(k) => k,
        }
    }

    /// Latent edges as index pairs into `L1..Lk`.
    pub fn edges(self) -> Vec<(usize, usize)> {
        match self {
            Structure::Sm1 => vec![(0, 1)],
            Structure::Sm2 => vec![(0, 1), (1, 2)],
            Structure::Sm3 => vec![(0, 1), (0, 2), (1, 3), (2, 3)],
            Structure::Collider => vec![(0, 1), (2, 1)],
            Structure::Star => vec![(0, 1), (0, 2), (0, 3)],
            Structure::Chain(k) => (1..k).map(|i| (i - 1, i)).collect(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "sm1" => Structure::Sm1,
            "sm2" => Structure::Sm2,
            "sm3" => Structure::Sm3,
            "collider" => Structure::Collider,
            "star" => Structure::Star,
            _ => match lower.strip_prefix("chain") {
                Some(k) => Structure::Chain(
                    k.parse().map_err(|_| Error::InvalidConfig(format!("bad structure {s}")))?,
                ),
                None => return Err(Error::InvalidConfig(format!("unknown structure {s}"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Measurement {
    /// Three pure children per latent.
    Mm1,
    /// Four pure children per latent.
    Mm2,
    /// `k` pure children per latent. Fewer than three breaks the
    /// identifiability conditions and is only meant for small fixtures.
    Children(usize),
}

impl Measurement {
    pub fn children_per_latent(self) -> usize {
        match self {
            Measurement::Mm1 => 3,
            Measurement::Mm2 => 4,
            Measurement::Children(k) => k,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm1" => Ok(Measurement::Mm1),
            "mm2" => Ok(Measurement::Mm2),
            other => other
                .parse()
                .map(Measurement::Children)
                .map_err(|_| Error::InvalidConfig(format!("unknown measurement model {s}"))),
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Structure::Sm1 => f.write_str("sm1"),
            Structure::Sm2 => f.write_str("sm2"),
            Structure::Sm3 => f.write_str("sm3"),
            Structure::Collider => f.write_str("collider"),
            Structure::Star => f.write_str("star"),
            Structure::Chain(k) => write!(f, "chain{k}"),
        }
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measurement::Mm1 => f.write_str("mm1"),
            Measurement::Mm2 => f.write_str("mm2"),
            Measurement::Children(k) => write!(f, "{k}"),
        }
    }
}

impl TryFrom<String> for Structure {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Structure::parse(&s)
    }
}

impl From<Structure> for String {
    fn from(s: Structure) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Measurement {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Measurement::parse(&s)
    }
}

impl From<Measurement> for String {
    fn from(m: Measurement) -> String {
        m.to_string()
    }
}

/// A discrete latent structure model with fully specified CPTs.
///
/// `cpts[v]` is stored row-major as `[parent configuration][value of v]`;
/// parent configurations enumerate `dag.parents(v)` (ascending node index)
/// row-major, last parent fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LsmSpec {
    dag: Dag,
    cpts: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LsmSpecRepr {
    nodes: Vec<Node>,
    edges: Vec<[String; 2]>,
    cpts: Vec<Vec<f64>>,
}

impl Serialize for LsmSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let name = |v: usize| self.dag.node(v).name.clone();
        LsmSpecRepr {
            nodes: self.dag.nodes().to_vec(),
            edges: self.dag.edges().into_iter().map(|(a, b)| [name(a), name(b)]).collect(),
            cpts: self.cpts.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LsmSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = LsmSpecRepr::deserialize(d)?;
        let edges: Vec<(&str, &str)> =
            repr.edges.iter().map(|[a, b]| (a.as_str(), b.as_str())).collect();
        Dag::from_labels(repr.nodes, &edges)
            .and_then(|dag| LsmSpec::new(dag, repr.cpts))
            .map_err(serde::de::Error::custom)
    }
}

impl LsmSpec {
    /// Validate CPT shapes and normalization, purity (no observed parents)
    /// and that every observed support exceeds every latent support.
    pub fn new(dag: Dag, cpts: Vec<Vec<f64>>) -> Result<Self> {
        if cpts.len() != dag.n_nodes() {
            return Err(Error::InvalidModel(format!(
                "{} CPTs for {} nodes",
                cpts.len(),
                dag.n_nodes()
            )));
        }
        for (v, node) in dag.nodes().iter().enumerate() {
            if node.card < 2 {
                return Err(Error::InvalidModel(format!("{} has support {}", node.name, node.card)));
            }
            if dag.parents(v).iter().any(|&p| !dag.node(p).latent) {
                return Err(Error::InvalidModel(format!("{} has an observed parent", node.name)));
            }
            if !node.latent && dag.parents(v).is_empty() {
                return Err(Error::InvalidModel(format!("{} has no latent parent", node.name)));
            }
            let configs: usize = dag.parents(v).iter().map(|&p| dag.node(p).card).product();
            let cpt = &cpts[v];
            if cpt.len() != configs * node.card {
                return Err(Error::InvalidModel(format!(
                    "CPT of {} has {} entries, expected {}",
                    node.name,
                    cpt.len(),
                    configs * node.card
                )));
            }
            for col in cpt.chunks(node.card) {
                if col.iter().any(|&x| !(x >= 0.0)) || (col.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "CPT column of {} is not a distribution",
                        node.name
                    )));
                }
            }
        }
        let max_r = dag.nodes().iter().filter(|n| n.latent).map(|n| n.card).max().unwrap_or(0);
        let min_d = dag.nodes().iter().filter(|n| !n.latent).map(|n| n.card).min().unwrap_or(usize::MAX);
        if max_r >= min_d {
            return Err(Error::SupportViolation(format!(
                "latent support {max_r} is not below observed support {min_d}"
            )));
        }
        Ok(Self { dag, cpts })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpt(&self, v: usize) -> &[f64] {
        &self.cpts[v]
    }

    pub fn latent_nodes(&self) -> Vec<usize> {
        self.dag.latent_indices()
    }

    /// Node indices of observed variables, in dataset column order.
    pub fn observed_nodes(&self) -> Vec<usize> {
        self.dag.observed_indices()
    }

    pub fn observed_names(&self) -> Vec<String> {
        self.observed_nodes().iter().map(|&v| self.dag.node(v).name.clone()).collect()
    }

    pub fn observed_cards(&self) -> Vec<usize> {
        self.observed_nodes().iter().map(|&v| self.dag.node(v).card).collect()
    }

    /// Observed column indices of each latent's observed children, in
    /// latent order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let obs = self.observed_nodes();
        self.latent_nodes()
            .iter()
            .map(|&l| {
                self.dag
                    .children(l)
                    .iter()
                    .filter_map(|c| obs.iter().position(|o| o == c))
                    .collect()
            })
            .collect()
    }

    /// Structure over the latent variables alone.
    pub fn latent_dag(&self) -> Dag {
        self.dag.induced(&self.latent_nodes()).expect("latents are valid nodes")
    }

    /// Check the full set of model conditions: each latent has at least
    /// three pure observed children.
    pub fn check_identifiable(&self) -> Result<()> {
        for l in self.latent_nodes() {
            let pure = self
                .dag
                .children(l)
                .iter()
                .filter(|&&c| !self.dag.node(c).latent && self.dag.parents(c).len() == 1)
                .count();
            if pure < 3 {
                return Err(Error::InvalidModel(format!(
                    "{} has {} pure children",
                    self.dag.node(l).name,
                    pure
                )));
            }
        }
        Ok(())
    }

    fn parent_config(&self, v: usize, values: &[usize]) -> usize {
        self.dag
            .parents(v)
            .iter()
            .fold(0, |acc, &p| acc * self.dag.node(p).card + values[p])
    }

    /// Ancestral sample of `n` rows over the observed variables.
    pub fn sample(&self, n: usize, seed: u64) -> Result<CategoricalDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = self.observed_nodes();
        let mut values = vec![0usize; self.dag.n_nodes()];
        let mut codes = Vec::with_capacity(n * obs.len());
        for _ in 0..n {
            for &v in self.dag.topological_order() {
                let card = self.dag.node(v).card;
                let cfg = self.parent_config(v, &values);
                let col = &self.cpts[v][cfg * card..(cfg + 1) * card];
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = card - 1;
                for (k, &p) in col.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                values[v] = pick;
            }
            codes.extend(obs.iter().map(|&v| values[v] as u32));
        }
        CategoricalDataset::from_flat(self.observed_names(), self.observed_cards(), codes)
    }

    /// Exact joint table of the observed columns `vars` (dataset column
    /// indices), with `n_samples = 0`.
    pub fn oracle_joint(&self, vars: &[usize]) -> Result<ContingencyTensor> {
        if vars.is_empty() {
            return Err(Error::EmptySelection);
        }
        let obs = self.observed_nodes();
        let nodes: Vec<usize> = vars
            .iter()
            .map(|&i| {
                obs.get(i).copied().ok_or(Error::IndexOutOfRange { index: i, len: obs.len() })
            })
            .collect::<Result<_>>()?;
        let dims: Vec<usize> = nodes.iter().map(|&v| self.dag.node(v).card).collect();
        let latents = self.latent_nodes();
        let lat_dims: Vec<usize> = latents.iter().map(|&l| self.dag.node(l).card).collect();
        let mut out = DenseTensor::zeros(dims.clone());
        let mut values = vec![0usize; self.dag.n_nodes()];
        let mut conds: Vec<&[f64]> = Vec::with_capacity(nodes.len());
        for_each_index(&lat_dims, |cfg| {
            for (&l, &x) in latents.iter().zip(cfg) {
                values[l] = x;
            }
            let weight: f64 = latents
                .iter()
                .map(|&l| {
                    let card = self.dag.node(l).card;
                    self.cpts[l][self.parent_config(l, &values) * card + values[l]]
                })
                .product();
            if weight == 0.0 {
                return;
            }
            conds.clear();
            for &v in &nodes {
                let card = self.dag.node(v).card;
                let c = self.parent_config(v, &values);
                conds.push(&self.cpts[v][c * card..(c + 1) * card]);
            }
            let mut flat = 0;
            let vals = out.values_mut();
            for_each_index(&dims, |idx| {
                let p: f64 = conds.iter().zip(idx).map(|(c, &i)| c[i]).product();
                vals[flat] += weight * p;
                flat += 1;
            });
        });
        let labels = nodes.iter().map(|&v| self.dag.node(v).name.clone()).collect();
        ContingencyTensor::from_dense(out, 0, labels)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Assemble a spec over `n_latents` latents with the given latent edges and
/// `children` pure observed children per latent, drawing random CPTs.
pub fn spec_from_latent_graph(
    latent_edges: &[(usize, usize)],
    latent_supports: &[usize],
    children: usize,
    d: usize,
    seed: u64,
) -> Result<LsmSpec> {
    let k = latent_supports.len();
    if let Some(&r) = latent_supports.iter().find(|&&r| r >= d) {
        return Err(Error::SupportViolation(format!("latent support {r} is not below {d}")));
    }
    if latent_supports.iter().any(|&r| r < 2) || d < 2 {
        return Err(Error::InvalidModel("supports must be at least 2".into()));
    }
    if children == 0 {
        return Err(Error::InvalidModel("each latent needs an observed child".into()));
    }
    let mut nodes: Vec<Node> =
        (0..k).map(|i| Node::latent(format!("L{}", i + 1), latent_supports[i])).collect();
    let mut edges = latent_edges.to_vec();
    for i in 0..k {
        for c in 0..children {
            let idx = i * children + c;
            nodes.push(Node::observed(format!("X{}", idx + 1), d));
            edges.push((i, k + idx));
        }
    }
    let dag = Dag::new(nodes, &edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cpts = (0..dag.n_nodes())
        .map(|v| {
            let configs: usize = dag.parents(v).iter().map(|&p| dag.node(p).card).product();
            draw_cpt(&mut rng, dag.node(v).card, configs)
        })
        .collect::<Result<Vec<_>>>()?;
    LsmSpec::new(dag, cpts)
}

/// Random CPT with `configs` columns over `card` values: uniform entries,
/// normalized per column, redrawn until the `card × configs` matrix is
/// numerically of full rank.
fn draw_cpt(rng: &mut ChaCha8Rng, card: usize, configs: usize) -> Result<Vec<f64>> {
    for _ in 0..CPT_MAX_DRAWS {
        let mut cpt: Vec<f64> =
            (0..card * configs).map(|_| rng.gen_range(CPT_RANGE.0..CPT_RANGE.1)).collect();
        for col in cpt.chunks_mut(card) {
            let s: f64 = col.iter().sum();
            col.iter_mut().for_each(|x| *x /= s);
        }
        if configs == 1 {
            return Ok(cpt);
        }
        let m = DMatrix::from_row_slice(configs, card, &cpt);
        let sv = m.singular_values();
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smallest >= CPT_MIN_SINGULAR {
            return Ok(cpt);
        }
    }
    Err(Error::InvalidModel("could not draw a full-rank CPT".into()))
}

/// Spec for a structure template and measurement template.
///
/// `r` holds either one latent support shared by all latents or one entry
/// per latent.
pub fn build_spec(
    structure: Structure,
    measurement: Measurement,
    r: &[usize],
    d: usize,
    seed: u64,
) -> Result<LsmSpec> {
    let k = structure.n_latents();
    let supports = match r.len() {
        1 => vec![r[0]; k],
        n if n == k => r.to_vec(),
        n => {
            return Err(Error::InvalidConfig(format!(
                "{n} latent supports for a structure with {k} latents"
            )))
        }
    };
    spec_from_latent_graph(&structure.edges(), &supports, measurement.children_per_latent(), d, seed)
}

/// Random latent DAG over `min_latents..=max_latents` latents (each forward
/// edge present with probability one half) with three pure children each.
pub fn random_spec(
    min_latents: usize,
    max_latents: usize,
    r: usize,
    d: usize,
    seed: u64,
) -> Result<LsmSpec> {
    if min_latents == 0 || min_latents > max_latents {
        return Err(Error::InvalidConfig("bad latent count range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(min_latents..=max_latents);
    let mut edges = Vec::new();
    for j in 1..k {
        for i in 0..j {
            if rng.gen_bool(0.5) {
                edges.push((i, j));
            }
        }
    }
    spec_from_latent_graph(&edges, &vec![r; k], 3, d, rng.gen())
}
