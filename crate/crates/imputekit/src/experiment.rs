//! The three simulation studies as reproducible, file-producing runs.
//!
//! Each run writes `outdir/expN/{config.json, traces.csv, qq_*.csv,
//! summary.json}`. `config.json` and `summary.json` carry the fully
//! resolved configuration; feeding either back reproduces every file.
//!
//! - exp1: bivariate block pattern; iterative chain vs the zero-mean joint
//!   chain on the monitored regression slopes, plus the flat-prior
//!   kernel-identity check.
//! - exp2: seven covariates with MCAR cells; iterative chain vs data
//!   augmentation on the coefficients of y on the x's.
//! - exp3: replicated mixed binary/continuous datasets with interaction
//!   terms in the binary models; combined estimates of x1 on the rest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use imputekit_core::chains::{
    collect_imputations, init_state, iterative_sweep, run_one_chain, ChainConfig, ChainState, ChainTrace,
    IterativeSweep, Monitor, Sweep, TraceSet,
};
use imputekit_core::combine::{fit_each, rubin_combine, CombinedEstimate, EstimateMonitor};
use imputekit_core::condmodels::{ConditionalModelSpec, LinearPrior, Term};
use imputekit_core::data::{BivariatePattern, DataMatrix};
use imputekit_core::diagnostics::{quantile_sorted, BetaMonitor};
use imputekit_core::jointgauss::{bivariate_gibbs_sweep, DataAugmentationSweep, JointPrior, ZeroMeanDaSweep};
use imputekit_core::rng::DEFAULT_SEED;
use imputekit_core::sim::{
    exp2_analysis, exp3_analysis, exp3_specs, gen_exp1, gen_exp2_with_rate, gen_exp3_with_rate, main_effects_specs,
    EXP3_TRUTH, MCAR_RATE,
};
use imputekit_core::RngStream;

use crate::error::{Error, Result};
use crate::report::{compare, write_json, write_qq, write_traces, DiagnosticSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
}

impl ExperimentId {
    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(ExperimentId::Exp1),
            2 => Ok(ExperimentId::Exp2),
            3 => Ok(ExperimentId::Exp3),
            _ => Err(Error::Config(format!("experiment id must be 1, 2 or 3, got {k}"))),
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    pub seed: u64,
    pub n_a: usize,
    pub n_b: usize,
    pub n_c: usize,
    pub burn_in: usize,
    /// Recorded draws per engine, split evenly over its chains.
    pub draws: usize,
    pub thin: usize,
    pub chains_per_engine: usize,
    /// Prior of the iterative engine's linear models.
    pub prior: LinearPrior,
    pub tv_bins: usize,
    pub qq_points: usize,
    /// Sweeps compared in the flat-prior identity check; 0 skips it.
    pub identity_sweeps: usize,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Exp1Config {
            seed: DEFAULT_SEED,
            n_a: 200,
            n_b: 80,
            n_c: 80,
            burn_in: 1000,
            draws: 200_000,
            thin: 1,
            chains_per_engine: 2,
            prior: LinearPrior::Jeffreys,
            tv_bins: 50,
            qq_points: 99,
            identity_sweeps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Config {
    pub seed: u64,
    pub n: usize,
    pub missing_rate: f64,
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub chains_per_engine: usize,
    pub prior: LinearPrior,
    /// Prior of the joint engine. The default gives every conditional
    /// regression the Jeffreys prior, matching `prior = jeffreys`.
    pub joint_prior: JointPrior,
    pub tv_bins: usize,
    pub qq_points: usize,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config {
            seed: DEFAULT_SEED,
            n: 1000,
            missing_rate: MCAR_RATE,
            burn_in: 1000,
            draws: 10_000,
            thin: 10,
            chains_per_engine: 1,
            prior: LinearPrior::Jeffreys,
            joint_prior: JointPrior::ConditionalJeffreys,
            tv_bins: 50,
            qq_points: 99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp3Config {
    pub seed: u64,
    pub replicates: usize,
    pub n: usize,
    pub missing_rate: f64,
    /// Imputations per replicate.
    pub m: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Exp3Config { seed: DEFAULT_SEED, replicates: 200, n: 2000, missing_rate: MCAR_RATE, m: 20, burn_in: 50, thin: 5 }
    }
}

/// A resolved experiment configuration. Serialized with an `id` tag.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum ExperimentConfig {
    Exp1(Exp1Config),
    Exp2(Exp2Config),
    Exp3(Exp3Config),
}

impl<'de> Deserialize<'de> for ExperimentConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        ExperimentConfig::from_value(v, None).map_err(serde::de::Error::custom)
    }
}

fn positive(v: usize, what: &str) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{what} must be positive")));
    }
    Ok(())
}

fn rate(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Config(format!("missing_rate must lie in [0, 1), got {r}")));
    }
    Ok(())
}

fn split_draws(draws: usize, chains: usize) -> Result<()> {
    positive(chains, "chains_per_engine")?;
    positive(draws, "draws")?;
    if draws % chains != 0 {
        return Err(Error::Config(format!("draws ({draws}) must divide evenly over {chains} chains")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn defaults(id: ExperimentId) -> Self {
        match id {
            ExperimentId::Exp1 => ExperimentConfig::Exp1(Exp1Config::default()),
            ExperimentId::Exp2 => ExperimentConfig::Exp2(Exp2Config::default()),
            ExperimentId::Exp3 => ExperimentConfig::Exp3(Exp3Config::default()),
        }
    }

    pub fn id(&self) -> ExperimentId {
        match self {
            ExperimentConfig::Exp1(_) => ExperimentId::Exp1,
            ExperimentConfig::Exp2(_) => ExperimentId::Exp2,
            ExperimentConfig::Exp3(_) => ExperimentId::Exp3,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Exp1(c) => c.seed,
            ExperimentConfig::Exp2(c) => c.seed,
            ExperimentConfig::Exp3(c) => c.seed,
        }
    }

    /// Reads a (possibly partial) JSON object; absent keys take defaults.
    /// The `id` key may be omitted when `expected` is given and must agree
    /// with it otherwise.
    pub fn from_value(v: serde_json::Value, expected: Option<ExperimentId>) -> Result<Self> {
        let serde_json::Value::Object(mut map) = v else {
            return Err(Error::Config("experiment config must be a JSON object".into()));
        };
        let named = match map.remove("id") {
            Some(id) => Some(
                serde_json::from_value::<ExperimentId>(id)
                    .map_err(|e| Error::Config(format!("bad experiment id: {e}")))?,
            ),
            None => None,
        };
        let id = match (named, expected) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "config is for {} but {} was requested",
                    a.dir_name(),
                    b.dir_name()
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config("experiment config needs an `id`".into())),
        };
        let rest = serde_json::Value::Object(map);
        let bad = |e: serde_json::Error| Error::Config(e.to_string());
        let cfg = match id {
            ExperimentId::Exp1 => ExperimentConfig::Exp1(serde_json::from_value(rest).map_err(bad)?),
            ExperimentId::Exp2 => ExperimentConfig::Exp2(serde_json::from_value(rest).map_err(bad)?),
            ExperimentId::Exp3 => ExperimentConfig::Exp3(serde_json::from_value(rest).map_err(bad)?),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Exp1(c) => {
                positive(c.n_a, "n_a")?;
                positive(c.n_b, "n_b")?;
                positive(c.n_c, "n_c")?;
                split_draws(c.draws, c.chains_per_engine)?;
                positive(c.thin, "thin")?;
                positive(c.qq_points, "qq_points")?;
                if c.tv_bins < 2 {
                    return Err(Error::Config("tv_bins must be at least 2".into()));
                }
            }
            ExperimentConfig::Exp2(c) => {
                if c.n <= 50 {
                    return Err(Error::Config(format!("n must exceed 50, got {}", c.n)));
                }
                rate(c.missing_rate)?;
                split_draws(c.draws, c.chains_per_engine)?;
                positive(c.thin, "thin")?;
                positive(c.qq_points, "qq_points")?;
                if c.tv_bins < 2 {
                    return Err(Error::Config("tv_bins must be at least 2".into()));
                }
            }
            ExperimentConfig::Exp3(c) => {
                if c.n <= 100 {
                    return Err(Error::Config(format!("n must exceed 100, got {}", c.n)));
                }
                rate(c.missing_rate)?;
                positive(c.replicates, "replicates")?;
                positive(c.thin, "thin")?;
                if c.m < 2 {
                    return Err(Error::Config("m must be at least 2".into()));
                }
            }
        }
        Ok(())
    }
}

/// A stage that failed; the rest of the experiment still ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

/// Outcome of the matched-seed flat-prior comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub sweeps: usize,
    pub identical: bool,
    /// First sweep after which the completed datasets differed.
    pub first_mismatch: Option<usize>,
}

/// Trace chain numbers belonging to each engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineChains {
    pub iterative: Vec<usize>,
    pub joint: Vec<usize>,
}

/// `summary.json` of exp1 and exp2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub config: ExperimentConfig,
    pub chains: EngineChains,
    pub statistics: Vec<DiagnosticSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<IdentityCheck>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub statistic: String,
    pub truth: f64,
    /// Mean over replicates of the combined point estimates.
    pub mean: f64,
    /// Standard error of `mean` across replicates.
    pub mc_se: f64,
    pub q025: f64,
    pub q975: f64,
    /// Replicate averages of Rubin's variance components.
    pub mean_within: f64,
    pub mean_between: f64,
    pub mean_total: f64,
}

/// `summary.json` of exp3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub config: ExperimentConfig,
    pub replicates_completed: usize,
    pub coefficients: Vec<CoefficientSummary>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentSummary {
    Comparison(ComparisonSummary),
    Replication(ReplicationSummary),
}

impl ExperimentSummary {
    pub fn failures(&self) -> &[CellFailure] {
        match self {
            ExperimentSummary::Comparison(s) => &s.failures,
            ExperimentSummary::Replication(s) => &s.failures,
        }
    }
}

/// Generates the dataset of experiment `id` at the given sizes: `sizes` is
/// `[n_a, n_b, n_c]` for exp1 and `[n]` otherwise.
pub fn generate(id: ExperimentId, sizes: &[usize], missing_rate: f64, rng: &mut RngStream) -> Result<DataMatrix> {
    let dm = match (id, sizes) {
        (ExperimentId::Exp1, &[a, b, c]) => gen_exp1(a, b, c, rng)?,
        (ExperimentId::Exp2, &[n]) => gen_exp2_with_rate(n, missing_rate, rng)?,
        (ExperimentId::Exp3, &[n]) => gen_exp3_with_rate(n, missing_rate, rng)?,
        _ => return Err(Error::Config(format!("wrong number of sizes for {}", id.dir_name()))),
    };
    Ok(dm)
}

/// Flat-prior, no-intercept iterative models for the bivariate study.
pub fn bivariate_specs(prior: LinearPrior) -> Vec<ConditionalModelSpec> {
    vec![
        ConditionalModelSpec::linear(0, vec![Term::Main(1)], prior),
        ConditionalModelSpec::linear(1, vec![Term::Main(0)], prior),
    ]
}

/// Runs the flat-prior iterative sweep and the bivariate Gibbs sweep from
/// one initial state on copies of one stream, comparing the completed data
/// bit for bit after every sweep.
pub fn kernel_identity(dm: &DataMatrix, pattern: &BivariatePattern, sweeps: usize, rng: &RngStream) -> Result<IdentityCheck> {
    let specs = bivariate_specs(LinearPrior::Flat);
    let mut a = init_state(dm, &mut rng.substream("init"))?;
    let mut b = a.clone();
    let mut ra = rng.substream("sweep");
    let mut rb = ra.clone();
    let bits = |d: &DataMatrix| -> Vec<u64> {
        (0..d.n_cols()).flat_map(|j| (0..d.n_rows()).map(move |i| d.get(i, j).map_or(u64::MAX, f64::to_bits))).collect()
    };
    for s in 1..=sweeps {
        iterative_sweep(&mut a, &specs, &mut ra)?;
        bivariate_gibbs_sweep(&mut b, pattern, &mut rb)?;
        if bits(a.data()) != bits(b.data()) {
            return Ok(IdentityCheck { sweeps, identical: false, first_mismatch: Some(s) });
        }
    }
    Ok(IdentityCheck { sweeps, identical: true, first_mismatch: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Engine {
    Iterative,
    Joint,
}

impl Engine {
    fn label(self) -> &'static str {
        match self {
            Engine::Iterative => "iterative",
            Engine::Joint => "joint",
        }
    }
}

enum Job {
    Identity,
    Chain(Engine, usize),
}

enum JobOutput {
    Identity(IdentityCheck),
    Chain(Engine, ChainTrace),
}

fn failure(cell: impl Into<String>, e: impl std::fmt::Display) -> CellFailure {
    CellFailure { cell: cell.into(), error: e.to_string() }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs `cfg` on `workers` threads (0 = available parallelism) and writes
/// its files under `out/expN`. Stage failures are recorded in the summary;
/// only IO and configuration errors are returned as `Err`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let dir = experiment_dir(out, cfg.id());
    fs::create_dir_all(&dir).map_err(crate::error::io(&dir))?;
    write_json(&dir.join("config.json"), cfg)?;
    let pool = pool(workers)?;
    let summary = pool.install(|| match cfg {
        ExperimentConfig::Exp1(c) => run_exp1(cfg, c, &dir).map(ExperimentSummary::Comparison),
        ExperimentConfig::Exp2(c) => run_exp2(cfg, c, &dir).map(ExperimentSummary::Comparison),
        ExperimentConfig::Exp3(c) => run_exp3(cfg, c, &dir).map(ExperimentSummary::Replication),
    })?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn chain_config(burn_in: usize, draws: usize, thin: usize, chains: usize, seed: u64) -> ChainConfig {
    let per_chain = draws / chains;
    ChainConfig { n_iter: burn_in + per_chain * thin, burn_in, thin, n_chains: chains, seed }
}

struct ComparisonRun<'a> {
    dm: &'a DataMatrix,
    root: &'a RngStream,
    chain: ChainConfig,
    monitor: &'a (dyn Monitor + Sync),
    iterative: &'a (dyn Fn() -> Box<dyn Sweep> + Sync),
    joint: &'a (dyn Fn() -> Box<dyn Sweep> + Sync),
    identity: Option<(&'a BivariatePattern, usize)>,
    tv_bins: usize,
    qq_points: usize,
}

fn run_comparison(cfg: &ExperimentConfig, run: ComparisonRun<'_>, dir: &Path) -> Result<ComparisonSummary> {
    let k = run.chain.n_chains;
    let mut jobs: Vec<Job> = Vec::new();
    if run.identity.is_some() {
        jobs.push(Job::Identity);
    }
    for e in [Engine::Iterative, Engine::Joint] {
        jobs.extend((0..k).map(|c| Job::Chain(e, c)));
    }
    let results: Vec<std::result::Result<JobOutput, CellFailure>> = jobs
        .into_par_iter()
        .map(|job| match job {
            Job::Identity => {
                let (pattern, sweeps) = run.identity.expect("identity job scheduled");
                kernel_identity(run.dm, pattern, sweeps, &run.root.substream("identity"))
                    .map(JobOutput::Identity)
                    .map_err(|e| failure("identity", e))
            }
            Job::Chain(e, c) => {
                let mut inner = match e {
                    Engine::Iterative => (run.iterative)(),
                    Engine::Joint => (run.joint)(),
                };
                let mut sweep = |s: &mut ChainState, r: &mut RngStream| inner.sweep(s, r);
                let monitor: &dyn Monitor = run.monitor;
                run_one_chain(run.dm, &mut sweep, &run.chain, &[monitor], &run.root.substream(e.label()), c)
                    .map(|t| JobOutput::Chain(e, t))
                    .map_err(|err| failure(format!("{}/chain{c}", e.label()), err))
            }
        })
        .collect();

    let mut failures = Vec::new();
    let mut identity = None;
    let mut traces = Vec::new();
    let mut ok = [0usize; 2];
    for r in results {
        match r {
            Ok(JobOutput::Identity(check)) => identity = Some(check),
            Ok(JobOutput::Chain(e, mut t)) => {
                let slot = (e == Engine::Joint) as usize;
                ok[slot] += 1;
                t.chain += slot * k;
                traces.push((e, t));
            }
            Err(f) => failures.push(f),
        }
    }
    let names = run.monitor.names();
    let chains = EngineChains {
        iterative: traces.iter().filter(|(e, _)| *e == Engine::Iterative).map(|(_, t)| t.chain).collect(),
        joint: traces.iter().filter(|(e, _)| *e == Engine::Joint).map(|(_, t)| t.chain).collect(),
    };
    let set = TraceSet::from_chains(names.clone(), traces.iter().map(|(_, t)| t.clone()).collect())?;
    write_traces(&dir.join("traces.csv"), &set)?;

    let mut statistics = Vec::new();
    if ok == [k, k] {
        for (s, name) in names.iter().enumerate() {
            let side = |e: Engine| -> Vec<&[f64]> {
                traces.iter().filter(|(x, _)| *x == e).map(|(_, t)| t.values[s].as_slice()).collect()
            };
            match compare(&side(Engine::Iterative), &side(Engine::Joint), name, run.tv_bins, run.qq_points) {
                Ok((summary, qq)) => {
                    write_qq(&dir.join(format!("qq_{name}.csv")), &qq)?;
                    statistics.push(summary);
                }
                Err(e) => failures.push(failure(format!("compare/{name}"), e)),
            }
        }
    }
    Ok(ComparisonSummary { config: cfg.clone(), chains, statistics, identity, failures })
}

fn data_failure(cfg: &ExperimentConfig, e: impl std::fmt::Display) -> ComparisonSummary {
    ComparisonSummary {
        config: cfg.clone(),
        chains: EngineChains { iterative: Vec::new(), joint: Vec::new() },
        statistics: Vec::new(),
        identity: None,
        failures: vec![failure("data", e)],
    }
}

fn run_exp1(cfg: &ExperimentConfig, c: &Exp1Config, dir: &Path) -> Result<ComparisonSummary> {
    let root = RngStream::new(c.seed);
    let pattern = BivariatePattern::new(c.n_a, c.n_b, c.n_c);
    let dm = match generate(ExperimentId::Exp1, &[c.n_a, c.n_b, c.n_c], 0.0, &mut root.substream("data")) {
        Ok(dm) => dm,
        Err(e) => return Ok(data_failure(cfg, e)),
    };
    let specs = bivariate_specs(c.prior);
    let monitor = BetaMonitor { pattern };
    let iterative = || -> Box<dyn Sweep> {
        Box::new(IterativeSweep::new(&dm, specs.clone()).expect("bivariate specs are valid"))
    };
    let joint = || -> Box<dyn Sweep> { Box::new(ZeroMeanDaSweep) };
    let run = ComparisonRun {
        dm: &dm,
        root: &root,
        chain: chain_config(c.burn_in, c.draws, c.thin, c.chains_per_engine, c.seed),
        monitor: &monitor,
        iterative: &iterative,
        joint: &joint,
        identity: (c.identity_sweeps > 0).then_some((&pattern, c.identity_sweeps)),
        tv_bins: c.tv_bins,
        qq_points: c.qq_points,
    };
    run_comparison(cfg, run, dir)
}

fn run_exp2(cfg: &ExperimentConfig, c: &Exp2Config, dir: &Path) -> Result<ComparisonSummary> {
    let root = RngStream::new(c.seed);
    let dm = match generate(ExperimentId::Exp2, &[c.n], c.missing_rate, &mut root.substream("data")) {
        Ok(dm) => dm,
        Err(e) => return Ok(data_failure(cfg, e)),
    };
    let specs = main_effects_specs(&dm, c.prior);
    if let Err(e) = IterativeSweep::new(&dm, specs.clone()) {
        return Ok(data_failure(cfg, e));
    }
    let monitor = EstimateMonitor::new(exp2_analysis(), &dm);
    let iterative = || -> Box<dyn Sweep> {
        Box::new(IterativeSweep::new(&dm, specs.clone()).expect("checked above"))
    };
    let prior = c.joint_prior;
    let joint = || -> Box<dyn Sweep> { Box::new(DataAugmentationSweep { prior }) };
    let run = ComparisonRun {
        dm: &dm,
        root: &root,
        chain: chain_config(c.burn_in, c.draws, c.thin, c.chains_per_engine, c.seed),
        monitor: &monitor,
        iterative: &iterative,
        joint: &joint,
        identity: None,
        tv_bins: c.tv_bins,
        qq_points: c.qq_points,
    };
    run_comparison(cfg, run, dir)
}

struct Replicate {
    trace: ChainTrace,
    combined: CombinedEstimate,
}

fn run_replicate(c: &Exp3Config, r: usize) -> imputekit_core::Result<Replicate> {
    let rng = RngStream::new(c.seed).substream_indexed("replicate", r as u64);
    let dm = gen_exp3_with_rate(c.n, c.missing_rate, &mut rng.substream("data"))?;
    let mut state = init_state(&dm, &mut rng.substream("init"))?;
    let mut sweep = IterativeSweep::new(&dm, exp3_specs())?;
    let imputed = collect_imputations(&mut state, &mut sweep, c.burn_in, c.thin, c.m, &mut rng.substream("sweep"))?;
    let fits = fit_each(&imputed, &exp3_analysis())?;
    let estimates: Vec<Vec<f64>> = fits.iter().map(|f| f.estimate.clone()).collect();
    let variances: Vec<Vec<f64>> = fits.iter().map(|f| f.variance.clone()).collect();
    let combined = rubin_combine(&estimates, &variances)?;
    let k = estimates[0].len();
    let trace = ChainTrace {
        chain: r,
        iters: (1..=c.m).map(|i| c.burn_in + i * c.thin).collect(),
        values: (0..k).map(|s| estimates.iter().map(|e| e[s]).collect()).collect(),
    };
    Ok(Replicate { trace, combined })
}

fn run_exp3(cfg: &ExperimentConfig, c: &Exp3Config, dir: &Path) -> Result<ReplicationSummary> {
    let results: Vec<imputekit_core::Result<Replicate>> =
        (0..c.replicates).into_par_iter().map(|r| run_replicate(c, r)).collect();
    let names = {
        let probe = DataMatrix::from_columns(
            ["y1", "y2", "x1", "x2", "x3", "x4", "x5"].map(String::from).to_vec(),
            vec![vec![0.0]; 7],
        )?;
        exp3_analysis().parameter_names(&probe)
    };
    let mut failures = Vec::new();
    let mut done = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(rep) => done.push(rep),
            Err(e) => failures.push(failure(format!("replicate{r}"), e)),
        }
    }
    let set = TraceSet::from_chains(names.clone(), done.iter().map(|r| r.trace.clone()).collect())?;
    write_traces(&dir.join("traces.csv"), &set)?;

    let truth: Vec<f64> = std::iter::once(0.0).chain(EXP3_TRUTH).collect();
    let count = done.len();
    let mut coefficients = Vec::new();
    if count >= 2 {
        for (k, name) in names.iter().enumerate() {
            let mut points: Vec<f64> = done.iter().map(|r| r.combined.point[k]).collect();
            let avg = |f: &dyn Fn(&CombinedEstimate) -> f64| done.iter().map(|r| f(&r.combined)).sum::<f64>() / count as f64;
            let mean = points.iter().sum::<f64>() / count as f64;
            let var = points.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64;
            points.sort_by(f64::total_cmp);
            coefficients.push(CoefficientSummary {
                statistic: name.clone(),
                truth: truth[k],
                mean,
                mc_se: (var / count as f64).sqrt(),
                q025: quantile_sorted(&points, 0.025),
                q975: quantile_sorted(&points, 0.975),
                mean_within: avg(&|e| e.within_var[k]),
                mean_between: avg(&|e| e.between_var[k]),
                mean_total: avg(&|e| e.total_var[k]),
            });
        }
    }
    Ok(ReplicationSummary { config: cfg.clone(), replicates_completed: count, coefficients, failures })
}

/// Output directory of experiment `id` under `out`.
pub fn experiment_dir(out: &Path, id: ExperimentId) -> PathBuf {
    out.join(id.dir_name())
}
