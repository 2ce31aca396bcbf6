//! Trace, Q-Q and summary files.
//!
//! - Traces: CSV `chain,iter,statistic,value`, one row per recorded value.
//! - Q-Q: CSV `level,q_left,q_right`.
//! - Diagnostic summary: JSON `{statistic, ks, tv, rhat}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use imputekit_core::chains::{ChainTrace, TraceSet};
use imputekit_core::diagnostics::{binned_tv, ks_two_sample, qq_points, rhat_of, QqPoint};

use crate::error::{io, Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").map_err(io(path))?;
    w.flush().map_err(io(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(io(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Format { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    chain: usize,
    iter: usize,
    statistic: String,
    value: f64,
}

pub fn write_traces(path: &Path, traces: &TraceSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_error(path);
    for c in &traces.chains {
        for (k, &iter) in c.iters.iter().enumerate() {
            for (s, name) in traces.statistics.iter().enumerate() {
                w.serialize(TraceRow { chain: c.chain, iter, statistic: name.clone(), value: c.values[s][k] })
                    .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(io(path))
}

/// Reads a trace file. Statistics keep their order of first appearance;
/// every chain must record every statistic at the same iterations.
pub fn read_traces(path: &Path) -> Result<TraceSet> {
    let file = File::open(path).map_err(io(path))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let format = |message: String| Error::Format { path: path.to_path_buf(), message };
    let mut statistics: Vec<String> = Vec::new();
    // chain -> statistic index -> (iter, value) in file order
    let mut by_chain: BTreeMap<usize, BTreeMap<usize, Vec<(usize, f64)>>> = BTreeMap::new();
    for row in rdr.deserialize::<TraceRow>() {
        let row = row.map_err(csv_error(path))?;
        let s = match statistics.iter().position(|n| *n == row.statistic) {
            Some(s) => s,
            None => {
                statistics.push(row.statistic);
                statistics.len() - 1
            }
        };
        by_chain.entry(row.chain).or_default().entry(s).or_default().push((row.iter, row.value));
    }
    let mut chains = Vec::with_capacity(by_chain.len());
    for (chain, stats) in by_chain {
        if stats.len() != statistics.len() {
            return Err(format(format!("chain {chain} does not record every statistic")));
        }
        let iters: Vec<usize> = stats[&0].iter().map(|p| p.0).collect();
        let mut values = Vec::with_capacity(statistics.len());
        for (s, points) in stats {
            if points.len() != iters.len() || points.iter().zip(&iters).any(|(p, i)| p.0 != *i) {
                return Err(format(format!("chain {chain}: `{}` recorded at different iterations", statistics[s])));
            }
            values.push(points.into_iter().map(|p| p.1).collect());
        }
        chains.push(ChainTrace { chain, iters, values });
    }
    Ok(TraceSet::from_chains(statistics, chains)?)
}

pub fn write_qq(path: &Path, points: &[QqPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_error(path);
    for p in points {
        w.serialize(p).map_err(&err)?;
    }
    w.flush().map_err(io(path))
}

/// Two-sample comparison of one statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub statistic: String,
    pub ks: f64,
    pub tv: f64,
    /// Potential scale reduction over the chains of both samples; `None`
    /// when every chain is constant or shorter than R-hat accepts.
    pub rhat: Option<f64>,
}

/// Compares `left` and `right` pooled draws of `statistic`. Returns the
/// summary and `qq_points` matched quantiles.
pub fn compare(
    left: &[&[f64]],
    right: &[&[f64]],
    statistic: &str,
    tv_bins: usize,
    n_qq: usize,
) -> Result<(DiagnosticSummary, Vec<QqPoint>)> {
    let a: Vec<f64> = left.iter().flat_map(|c| c.iter().copied()).collect();
    let b: Vec<f64> = right.iter().flat_map(|c| c.iter().copied()).collect();
    let all: Vec<&[f64]> = left.iter().chain(right).copied().collect();
    let summary = DiagnosticSummary {
        statistic: statistic.to_string(),
        ks: ks_two_sample(&a, &b)?.statistic,
        tv: binned_tv(&a, &b, tv_bins)?.value,
        rhat: rhat_of(&all).ok().and_then(|r| r.value()),
    };
    Ok((summary, qq_points(&a, &b, n_qq.min(a.len()).min(b.len()))?))
}

/// [`compare`] on two trace sets.
pub fn diagnose(
    left: &TraceSet,
    right: &TraceSet,
    statistic: &str,
    tv_bins: usize,
    n_qq: usize,
) -> Result<(DiagnosticSummary, Vec<QqPoint>)> {
    compare(&left.series(statistic)?, &right.series(statistic)?, statistic, tv_bins, n_qq)
}
