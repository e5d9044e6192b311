use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tensor_lsm::bench::{render_table, run_suite, BenchSuite};
use tensor_lsm::discovery::{discover, DiscoveryConfig, DiscoveryReport, EmpiricalSource};
use tensor_lsm::graph::DEFAULT_MAX_SEPARATOR;
use tensor_lsm::metrics::{evaluate, Matching};
use tensor_lsm::sim::{build_spec, LsmSpec, Measurement, Structure};
use tensor_lsm::tensor::CategoricalDataset;

#[derive(Parser)]
#[command(name = "tensor-lsm", version, about = "Learn discrete latent structure models from categorical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model from templates and sample a dataset from it.
    Generate(GenerateArgs),
    /// Learn clusters and latent structure from a dataset.
    Discover(DiscoverArgs),
    /// Run repeated generate/discover/score trials and print a table.
    Bench(BenchArgs),
    /// Answer exact queries about a model.
    Oracle(OracleArgs),
    /// Score a discovery report against the model that generated the data.
    Eval(EvalArgs),
}

/// Settings shared by the commands that run discovery.
#[derive(Args)]
struct Tuning {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha_matrix: Option<f64>,
    #[arg(long)]
    alpha_tensor: Option<f64>,
    /// CP restarts per tensor-rank test.
    #[arg(long)]
    restarts: Option<usize>,
    /// Largest conditioning set in the latent structure search.
    #[arg(long)]
    max_cond: Option<usize>,
    /// Allow latents with different supports.
    #[arg(long)]
    hetero: bool,
    /// JSON file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Tuning {
    fn apply(&self, cfg: &mut DiscoveryConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.alpha_matrix {
            cfg.alpha_matrix = a;
        }
        if let Some(a) = self.alpha_tensor {
            cfg.alpha_tensor = a;
        }
        if let Some(r) = self.restarts {
            cfg.cp.restarts = r;
        }
        if let Some(k) = self.max_cond {
            cfg.max_cond = k;
        }
        cfg.hetero |= self.hetero;
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "sm1")]
    structure: String,
    #[arg(long, default_value = "mm1")]
    measurement: String,
    /// Latent support, shared or one per latent (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    r: Vec<usize>,
    /// Observed cardinality.
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 50_000)]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spec_out: PathBuf,
    #[arg(long)]
    data_out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    structure: Structure,
    measurement: Measurement,
    r: Vec<usize>,
    d: usize,
    n_samples: usize,
    seed: u64,
}

#[derive(Args)]
struct DiscoverArgs {
    /// CSV with a header row and integer codes.
    #[arg(long)]
    data: PathBuf,
    /// Cardinalities of the columns; inferred from the data when absent.
    #[arg(long, value_delimiter = ',')]
    cards: Option<Vec<usize>>,
    /// Known shared latent support; estimated when absent.
    #[arg(long)]
    r: Option<usize>,
    #[command(flatten)]
    tuning: Tuning,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON suite: cases plus optional discovery settings.
    #[arg(long)]
    suite: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
    /// Table path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial scores as JSON.
    #[arg(long)]
    trials_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(subcommand)]
    query: OracleQuery,
}

#[derive(Subcommand)]
enum OracleQuery {
    /// Graphical rank of the joint table of the named variables.
    Rank {
        vars: Vec<String>,
        /// Largest separating set searched.
        #[arg(long, default_value_t = DEFAULT_MAX_SEPARATOR)]
        max_size: usize,
    },
    /// Whether two node sets are d-separated given a third.
    Dsep {
        #[arg(long, value_delimiter = ',', required = true)]
        a: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        b: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        given: Vec<String>,
    },
    /// Exact joint table of observed variables.
    Joint { vars: Vec<String> },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = MatchArg::Greedy)]
    matching: MatchArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Greedy,
    Exhaustive,
}

/// Overlay the keys of a JSON file onto `base`; nested objects merge.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, path: Option<&Path>) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    if let Some(path) = path {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if !patch.is_object() {
            bail!("{} must hold a JSON object", path.display());
        }
        merge(&mut value, patch);
    }
    Ok(serde_json::from_value(value)?)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn read_spec(path: &Path) -> Result<LsmSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LsmSpec::from_json(&text)?)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let flags = GenerateConfig {
        structure: Structure::parse(&args.structure)?,
        measurement: Measurement::parse(&args.measurement)?,
        r: args.r,
        d: args.d,
        n_samples: args.n_samples,
        seed: args.seed,
    };
    let cfg: GenerateConfig = overlay(&flags, args.config.as_deref())?;
    if cfg.n_samples == 0 {
        bail!("n_samples must be positive");
    }
    let spec = build_spec(cfg.structure, cfg.measurement, &cfg.r, cfg.d, cfg.seed)?;
    // The sample stream is decorrelated from the CPT stream.
    let data = spec.sample(cfg.n_samples, cfg.seed.wrapping_add(1))?;
    fs::write(&args.spec_out, spec.to_json()?)?;
    data.write_csv(&args.data_out)?;
    Ok(())
}

fn cmd_discover(args: DiscoverArgs) -> Result<()> {
    let mut flags = DiscoveryConfig::default();
    args.tuning.apply(&mut flags);
    flags.latent_support = args.r;
    let cfg: DiscoveryConfig = overlay(&flags, args.tuning.config.as_deref())?;
    let data = CategoricalDataset::read_csv(&args.data, args.cards)?;
    let report = discover(&EmpiricalSource(&data), &cfg)?;
    emit(args.out.as_deref(), &report.to_json()?)
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut discovery = DiscoveryConfig::default();
    args.tuning.apply(&mut discovery);
    let flags = BenchSuite {
        master_seed: args.tuning.seed.unwrap_or(0),
        cases: Vec::new(),
        discovery,
        known_support: true,
        matching: Matching::Greedy,
    };
    let suite: BenchSuite = overlay(&flags, Some(&args.suite))?;
    let outcomes = run_suite(&suite, |o| {
        log::info!("case {} trial {} done", o.case, o.trial);
    })?;
    if let Some(p) = &args.trials_out {
        fs::write(p, serde_json::to_string_pretty(&json!({ "suite": suite, "trials": outcomes }))?)?;
    }
    emit(args.out.as_deref(), &render_table(&suite, &outcomes))
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let dag = spec.dag();
    let nodes = |names: &[String]| -> Result<Vec<usize>> {
        names.iter().map(|n| Ok(dag.index_of(n)?)).collect()
    };
    let answer = match args.query {
        OracleQuery::Rank { vars, max_size } => {
            let res = dag.minimal_dsep_support(&nodes(&vars)?, max_size)?;
            let witness: Vec<&str> = res.witness.iter().map(|&v| dag.node(v).name.as_str()).collect();
            json!({ "rank": res.support, "witness": witness, "fallback": res.fallback })
        }
        OracleQuery::Dsep { a, b, given } => {
            json!({ "d_separated": dag.d_separated(&nodes(&a)?, &nodes(&b)?, &nodes(&given)?)? })
        }
        OracleQuery::Joint { vars } => {
            let observed = spec.observed_names();
            let cols: Vec<usize> = vars
                .iter()
                .map(|v| {
                    observed
                        .iter()
                        .position(|o| o == v)
                        .with_context(|| format!("{v} is not an observed variable"))
                })
                .collect::<Result<_>>()?;
            let t = spec.oracle_joint(&cols)?;
            json!({ "vars": vars, "dims": t.dims(), "values": t.values() })
        }
    };
    emit(None, &serde_json::to_string_pretty(&answer)?)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: DiscoveryReport = serde_json::from_str(&text)?;
    let how = match args.matching {
        MatchArg::Greedy => Matching::Greedy,
        MatchArg::Exhaustive => Matching::Exhaustive,
    };
    let eval = evaluate(&spec, &report, how)?;
    emit(None, &serde_json::to_string_pretty(&eval)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Discover(a) => cmd_discover(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<tensor_lsm::Error>() {
                Some(tensor_lsm::Error::DegenerateModel) => ExitCode::from(3),
                Some(tensor_lsm::Error::Untestable { .. }) => ExitCode::from(4),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
