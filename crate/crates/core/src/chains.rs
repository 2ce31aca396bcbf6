//! Chain state, sweeps, and the burn-in/thinning drivers that turn sweeps
//! into traces of monitored statistics.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::condmodels::{
    build_design, design_matrix, linear_impute, linear_posterior_draw, logistic_impute,
    logistic_posterior_draw, ConditionalModelSpec, Family, LinearDraw, LogisticDraw, ParamDraw,
};
use crate::data::{ColumnKind, DataMatrix};
use crate::error::invalid;
use crate::jointgauss::GaussParams;
use crate::rng::{RngStream, StreamPosition};
use crate::{Error, Result};

/// The chain's state: completed data, the original mask, and the latest
/// parameter draws.
#[derive(Clone, Debug)]
pub struct ChainState {
    data: DataMatrix,
    mask: Vec<bool>,
    observed: Vec<Vec<usize>>,
    missing: Vec<Vec<usize>>,
    /// Latest draw per column (iterative chains).
    pub draws: Vec<Option<ParamDraw>>,
    /// Latest joint parameter draw (data-augmentation chains).
    pub joint: Option<GaussParams>,
    /// Completed sweeps.
    pub iter: usize,
}

impl ChainState {
    fn from_completed(data: DataMatrix, mask: Vec<bool>, iter: usize) -> Result<Self> {
        let (n, p) = (data.n_rows(), data.n_cols());
        if mask.len() != n * p {
            return Err(invalid!("mask has {} cells, data has {}", mask.len(), n * p));
        }
        if !data.is_complete() {
            return Err(invalid!("chain data must be completed"));
        }
        let observed = (0..p).map(|j| (0..n).filter(|&i| mask[j * n + i]).collect()).collect();
        let missing = (0..p).map(|j| (0..n).filter(|&i| !mask[j * n + i]).collect()).collect();
        Ok(ChainState {
            data,
            mask,
            observed,
            missing,
            draws: alloc::vec![None; p],
            joint: None,
            iter,
        })
    }

    /// Completed data; every cell is present.
    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    /// Original presence mask, column-major.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn was_observed(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.data.n_rows() + i]
    }

    /// Rows where column `j` was originally observed.
    pub fn observed_rows(&self, j: usize) -> &[usize] {
        &self.observed[j]
    }

    /// Rows where column `j` was originally missing.
    pub fn missing_rows(&self, j: usize) -> &[usize] {
        &self.missing[j]
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&p| !p).count()
    }

    /// Writes an imputation; observed cells are never overwritten.
    pub(crate) fn impute(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(!self.was_observed(i, j), "attempt to overwrite observed cell ({i}, {j})");
        if !self.was_observed(i, j) {
            self.data.set(i, j, v);
        }
    }

    /// The incomplete matrix the chain started from (imputations hidden).
    pub fn original(&self) -> DataMatrix {
        let mut out = self.data.clone();
        for j in 0..out.n_cols() {
            for &i in &self.missing[j] {
                out.set_missing(i, j);
            }
        }
        out
    }

    pub fn checkpoint(&self, rng: &RngStream) -> Checkpoint {
        let p = self.data.n_cols();
        Checkpoint {
            names: self.data.names().to_vec(),
            kinds: self.data.kinds().to_vec(),
            n_rows: self.data.n_rows(),
            values: (0..p).flat_map(|j| self.data.column_raw(j).iter().copied()).collect(),
            mask: self.mask.clone(),
            iter: self.iter,
            rng: rng.position(),
        }
    }
}

/// Everything needed to resume a chain exactly: completed values, mask,
/// iteration counter and RNG position. Parameter draws are not saved; every
/// sweep redraws them before use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub n_rows: usize,
    /// Column-major completed values.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub iter: usize,
    pub rng: StreamPosition,
}

impl Checkpoint {
    pub fn restore(&self) -> Result<(ChainState, RngStream)> {
        let present = alloc::vec![true; self.values.len()];
        let data = DataMatrix::new(self.names.clone(), Some(self.kinds.clone()), self.values.clone(), present)?;
        if data.n_rows() != self.n_rows {
            return Err(invalid!("checkpoint row count mismatch"));
        }
        let state = ChainState::from_completed(data, self.mask.clone(), self.iter)?;
        Ok((state, RngStream::restore(&self.rng)?))
    }
}

/// Hot-deck initialization: each missing cell is filled with a uniformly
/// chosen observed value of its column (columns left to right, rows top to
/// bottom).
pub fn init_state(dm: &DataMatrix, rng: &mut RngStream) -> Result<ChainState> {
    let (n, p) = (dm.n_rows(), dm.n_cols());
    let mut completed = dm.clone();
    for j in 0..p {
        let missing = dm.missing_rows(j);
        if missing.is_empty() {
            continue;
        }
        let donors: Vec<f64> = (0..n).filter_map(|i| dm.get(i, j)).collect();
        if donors.len() < 2 {
            return Err(Error::Initialization(alloc::format!(
                "column `{}` has {} observed values; at least 2 are needed",
                dm.names()[j],
                donors.len()
            )));
        }
        for i in missing {
            completed.set(i, j, donors[rng.index(donors.len())]);
        }
    }
    ChainState::from_completed(completed, dm.mask().to_vec(), 0)
}

/// Checks that `specs` are valid for `dm` and cover every incomplete column.
pub fn check_specs(dm: &DataMatrix, specs: &[ConditionalModelSpec]) -> Result<()> {
    for spec in specs {
        spec.validate(dm)?;
    }
    for j in 0..dm.n_cols() {
        if dm.missing_count(j) > 0 && !specs.iter().any(|s| s.target == j) {
            return Err(Error::InvalidSpec(alloc::format!(
                "column `{}` has missing cells but no imputation model",
                dm.names()[j]
            )));
        }
    }
    Ok(())
}

/// One chained-equations sweep: for each spec in order, draw the model's
/// parameters from its posterior given the rows where the target was
/// observed (covariates as currently completed), then redraw the target's
/// missing cells from the predictive. Later steps see earlier imputations.
pub fn iterative_sweep(state: &mut ChainState, specs: &[ConditionalModelSpec], rng: &mut RngStream) -> Result<()> {
    let iteration = state.iter + 1;
    for spec in specs {
        let j = spec.target;
        let annotate = |e: Error, dm: &DataMatrix| Error::Fit {
            variable: dm.names().get(j).cloned().unwrap_or_default(),
            iteration,
            source: Box::new(e),
        };
        step(state, spec, rng).map_err(|e| annotate(e, &state.data))?;
    }
    state.iter = iteration;
    Ok(())
}

fn step(state: &mut ChainState, spec: &ConditionalModelSpec, rng: &mut RngStream) -> Result<()> {
    let j = spec.target;
    if j >= state.data.n_cols() {
        return Err(Error::InvalidSpec(alloc::format!("target column {j} out of range")));
    }
    let (x, y) = build_design(&state.data, spec, &state.observed[j])?;
    let x_mis = design_matrix(&state.data, &spec.terms, &state.missing[j])?;
    let imputed = match spec.family {
        Family::Linear => {
            let draw: LinearDraw = linear_posterior_draw(&x, &y, spec.prior, rng)?;
            let v = linear_impute(&x_mis, &draw, rng)?;
            state.draws[j] = Some(ParamDraw::Linear(draw));
            v
        }
        Family::Logistic => {
            let draw: LogisticDraw = logistic_posterior_draw(&x, &y, rng)?;
            let v = logistic_impute(&x_mis, &draw, rng)?;
            state.draws[j] = Some(ParamDraw::Logistic(draw));
            v
        }
    };
    let missing = core::mem::take(&mut state.missing[j]);
    for (&i, v) in missing.iter().zip(imputed) {
        state.impute(i, j, v);
    }
    state.missing[j] = missing;
    Ok(())
}

/// A transition of the imputation chain.
pub trait Sweep {
    fn sweep(&mut self, state: &mut ChainState, rng: &mut RngStream) -> Result<()>;
}

impl<F> Sweep for F
where
    F: FnMut(&mut ChainState, &mut RngStream) -> Result<()>,
{
    fn sweep(&mut self, state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
        self(state, rng)
    }
}

/// [`iterative_sweep`] over a fixed, validated visit order.
#[derive(Clone, Debug)]
pub struct IterativeSweep {
    specs: Vec<ConditionalModelSpec>,
}

impl IterativeSweep {
    pub fn new(dm: &DataMatrix, specs: Vec<ConditionalModelSpec>) -> Result<Self> {
        check_specs(dm, &specs)?;
        Ok(IterativeSweep { specs })
    }

    pub fn specs(&self) -> &[ConditionalModelSpec] {
        &self.specs
    }
}

impl Sweep for IterativeSweep {
    fn sweep(&mut self, state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
        iterative_sweep(state, &self.specs, rng)
    }
}

/// Burn-in, thinning and chain-count settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 11_000,
            burn_in: 1_000,
            thin: 10,
            n_chains: 4,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(invalid!("thin must be at least 1"));
        }
        if self.n_chains == 0 {
            return Err(invalid!("n_chains must be at least 1"));
        }
        if self.burn_in >= self.n_iter {
            return Err(invalid!("burn_in ({}) must be below n_iter ({})", self.burn_in, self.n_iter));
        }
        Ok(())
    }

    /// Whether the state after sweep `iter` (1-based) is recorded.
    pub fn records(&self, iter: usize) -> bool {
        iter > self.burn_in && (iter - self.burn_in) % self.thin == 0
    }

    /// Recorded points per chain.
    pub fn recorded_len(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Scalar statistics of a chain state recorded into traces.
pub trait Monitor {
    fn names(&self) -> Vec<String>;
    /// Appends one value per name to `out`.
    fn record(&self, state: &ChainState, out: &mut Vec<f64>) -> Result<()>;
}

/// A single named statistic backed by a closure.
pub struct FnMonitor<F> {
    name: String,
    f: F,
}

impl<F> FnMonitor<F>
where
    F: Fn(&ChainState) -> Result<f64>,
{
    pub fn new(name: &str, f: F) -> Self {
        FnMonitor {
            name: String::from(name),
            f,
        }
    }
}

impl<F> Monitor for FnMonitor<F>
where
    F: Fn(&ChainState) -> Result<f64>,
{
    fn names(&self) -> Vec<String> {
        alloc::vec![self.name.clone()]
    }

    fn record(&self, state: &ChainState, out: &mut Vec<f64>) -> Result<()> {
        out.push((self.f)(state)?);
        Ok(())
    }
}

/// Recorded values of one chain; `values[s]` is statistic `s`'s series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub chain: usize,
    pub iters: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// Traces for one or more chains over a common set of statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub statistics: Vec<String>,
    pub chains: Vec<ChainTrace>,
}

impl TraceSet {
    /// Assembles chain traces ordered by chain index; all must share length.
    pub fn from_chains(statistics: Vec<String>, mut chains: Vec<ChainTrace>) -> Result<Self> {
        chains.sort_by_key(|c| c.chain);
        if let Some(first) = chains.first() {
            let len = first.iters.len();
            if chains.iter().any(|c| c.iters.len() != len) {
                return Err(invalid!("chains recorded unequal numbers of points"));
            }
        }
        if chains.iter().any(|c| c.values.len() != statistics.len()) {
            return Err(invalid!("chain trace does not match the statistic list"));
        }
        Ok(TraceSet { statistics, chains })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn stat_index(&self, name: &str) -> Result<usize> {
        self.statistics
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| invalid!("no statistic named `{name}` in trace"))
    }

    /// One series per chain for statistic `name`.
    pub fn series(&self, name: &str) -> Result<Vec<&[f64]>> {
        let s = self.stat_index(name)?;
        Ok(self.chains.iter().map(|c| c.values[s].as_slice()).collect())
    }

    /// All chains' values of `name`, concatenated in chain order.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.series(name)?.into_iter().flatten().copied().collect())
    }
}

/// A chain that stopped on a failing sweep, with what it recorded so far.
#[derive(Clone, Debug)]
pub struct ChainAbort {
    pub error: Error,
    pub partial: ChainTrace,
}

impl fmt::Display for ChainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} points recorded)", self.error, self.partial.iters.len())
    }
}

impl core::error::Error for ChainAbort {}

impl From<ChainAbort> for Error {
    fn from(a: ChainAbort) -> Error {
        a.error
    }
}

fn names_of(monitors: &[&dyn Monitor]) -> Vec<String> {
    monitors.iter().flat_map(|m| m.names()).collect()
}

/// Applies `sweep` until `state.iter == cfg.n_iter`, recording every
/// monitor after each sweep selected by [`ChainConfig::records`].
///
/// Iteration numbers are absolute, so running to `k1` and then resuming the
/// same state and stream to `k1 + k2` records exactly what a single run to
/// `k1 + k2` would.
pub fn run_chain(
    state: &mut ChainState,
    sweep: &mut dyn Sweep,
    cfg: &ChainConfig,
    monitors: &[&dyn Monitor],
    rng: &mut RngStream,
    chain: usize,
) -> Result<ChainTrace, ChainAbort> {
    let n_stats = names_of(monitors).len();
    let mut trace = ChainTrace {
        chain,
        iters: Vec::new(),
        values: alloc::vec![Vec::new(); n_stats],
    };
    if let Err(error) = cfg.validate() {
        return Err(ChainAbort { error, partial: trace });
    }
    let mut row = Vec::with_capacity(n_stats);
    while state.iter < cfg.n_iter {
        let iteration = state.iter + 1;
        let before = state.iter;
        if let Err(e) = sweep.sweep(state, rng) {
            return Err(ChainAbort {
                error: Error::Sweep {
                    iteration,
                    source: Box::new(e),
                },
                partial: trace,
            });
        }
        // Sweeps that do not advance the counter themselves.
        if state.iter == before {
            state.iter = iteration;
        }
        if cfg.records(state.iter) {
            row.clear();
            for m in monitors {
                if let Err(e) = m.record(state, &mut row) {
                    return Err(ChainAbort {
                        error: Error::Sweep {
                            iteration,
                            source: Box::new(e),
                        },
                        partial: trace,
                    });
                }
            }
            trace.iters.push(state.iter);
            for (series, &v) in trace.values.iter_mut().zip(&row) {
                series.push(v);
            }
        }
    }
    Ok(trace)
}

/// Substreams used by chain `c`: (initialization, sweeps).
pub fn chain_streams(rng: &RngStream, c: usize) -> (RngStream, RngStream) {
    let base = rng.substream_indexed("chain", c as u64);
    (base.substream("init"), base.substream("sweep"))
}

/// Initializes and runs chain `c` of a multi-chain experiment on its own
/// substreams; concurrent drivers call this per chain.
pub fn run_one_chain<S: Sweep>(
    dm: &DataMatrix,
    sweep: &mut S,
    cfg: &ChainConfig,
    monitors: &[&dyn Monitor],
    rng: &RngStream,
    c: usize,
) -> Result<ChainTrace> {
    let (mut init_rng, mut sweep_rng) = chain_streams(rng, c);
    let wrap = |e: Error| Error::Chain {
        chain: c,
        source: Box::new(e),
    };
    let mut state = init_state(dm, &mut init_rng).map_err(wrap)?;
    run_chain(&mut state, sweep, cfg, monitors, &mut sweep_rng, c).map_err(|a| wrap(a.error))
}

/// `cfg.n_chains` independent chains from independent hot-deck starts,
/// run one after another. The result does not depend on execution order,
/// so a parallel driver calling [`run_one_chain`] produces the same traces.
pub fn run_parallel_chains<S: Sweep>(
    dm: &DataMatrix,
    mut make_sweep: impl FnMut(usize) -> S,
    cfg: &ChainConfig,
    monitors: &[&dyn Monitor],
    rng: &RngStream,
) -> Result<TraceSet> {
    cfg.validate()?;
    let mut chains = Vec::with_capacity(cfg.n_chains);
    for c in 0..cfg.n_chains {
        let mut sweep = make_sweep(c);
        chains.push(run_one_chain(dm, &mut sweep, cfg, monitors, rng, c)?);
    }
    TraceSet::from_chains(names_of(monitors), chains)
}

/// Runs `burn_in` sweeps, then keeps the completed data after every
/// `thin`-th sweep until `m` datasets are collected.
pub fn collect_imputations(
    state: &mut ChainState,
    sweep: &mut dyn Sweep,
    burn_in: usize,
    thin: usize,
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<DataMatrix>> {
    if thin == 0 {
        return Err(invalid!("thin must be at least 1"));
    }
    let mut out = Vec::with_capacity(m);
    let mut run = |state: &mut ChainState, rng: &mut RngStream| -> Result<()> {
        let before = state.iter;
        sweep.sweep(state, rng).map_err(|e| Error::Sweep {
            iteration: before + 1,
            source: Box::new(e),
        })?;
        if state.iter == before {
            state.iter += 1;
        }
        Ok(())
    };
    for _ in 0..burn_in {
        run(state, rng)?;
    }
    while out.len() < m {
        for _ in 0..thin {
            run(state, rng)?;
        }
        out.push(state.data().clone());
    }
    Ok(out)
}
