//! Multiple imputation of a user dataset: one chain, burn-in, then every
//! `thin`-th completed dataset written as CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use imputekit_core::chains::{collect_imputations, init_state, run_chain, ChainConfig, IterativeSweep, Sweep};
use imputekit_core::combine::{combine_imputations, CombinedEstimate};
use imputekit_core::condmodels::LinearPrior;
use imputekit_core::data::{ColumnKind, DataMatrix};
use imputekit_core::jointgauss::{DataAugmentationSweep, JointPrior};
use imputekit_core::sim::main_effects_specs;
use imputekit_core::RngStream;

use crate::csv_io::write_csv;
use crate::error::{io, Error, Result};
use crate::report::write_json;
use crate::spec_file::SpecFile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Chained conditional models from the spec file (main effects when
    /// the file lists none).
    Iterative,
    /// Data augmentation under a multivariate normal model.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    pub method: Method,
    pub m: usize,
    /// Total sweeps; defaults to `burn_in + m * thin`. Sweeps past the last
    /// kept dataset only advance the saved checkpoint.
    pub iters: Option<usize>,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Prior of the joint method.
    #[serde(default)]
    pub joint_prior: JointPrior,
}

/// Contents of `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeRun {
    pub options: ImputeOptions,
    pub spec: SpecFile,
    pub files: Vec<String>,
    /// Names of the combined parameters when an analysis was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<String>>,
}

/// Writes `imputed_001.csv..`, `checkpoint.json`, `run.json` and, when
/// `spec` has an analysis block, `combined.json` into `out`.
pub fn run_impute(dm: &DataMatrix, spec: &SpecFile, opts: &ImputeOptions, out: &Path) -> Result<ImputeRun> {
    if opts.m == 0 || opts.thin == 0 {
        return Err(Error::Config("m and thin must be positive".into()));
    }
    let needed = opts.burn_in + opts.m * opts.thin;
    let iters = opts.iters.unwrap_or(needed);
    if iters < needed {
        return Err(Error::Config(format!(
            "{iters} sweeps cannot hold burn-in {} plus {} datasets {} apart",
            opts.burn_in, opts.m, opts.thin
        )));
    }
    let analysis = spec.resolve_analysis(dm)?;
    let mut sweep: Box<dyn Sweep> = match opts.method {
        Method::Iterative => {
            let specs = if spec.models.is_empty() { main_effects_specs(dm, LinearPrior::Jeffreys) } else { spec.resolve(dm)? };
            Box::new(IterativeSweep::new(dm, specs)?)
        }
        Method::Joint => {
            if dm.kinds().contains(&ColumnKind::Binary) {
                return Err(Error::Config(
                    "joint imputation is Gaussian; declare binary columns continuous in the spec file or use the iterative method"
                        .into(),
                ));
            }
            Box::new(DataAugmentationSweep { prior: opts.joint_prior })
        }
    };
    let root = RngStream::new(opts.seed);
    let mut state = init_state(dm, &mut root.substream("init"))?;
    let mut rng = root.substream("sweep");
    let imputed = collect_imputations(&mut state, &mut *sweep, opts.burn_in, opts.thin, opts.m, &mut rng)?;
    if state.iter < iters {
        let tail = ChainConfig { n_iter: iters, burn_in: state.iter, thin: 1, n_chains: 1, seed: opts.seed };
        run_chain(&mut state, &mut *sweep, &tail, &[], &mut rng, 0).map_err(Error::from_abort)?;
    }

    fs::create_dir_all(out).map_err(io(out))?;
    let width = opts.m.to_string().len().max(3);
    let mut files = Vec::with_capacity(opts.m);
    for (k, d) in imputed.iter().enumerate() {
        let name = format!("imputed_{:0width$}.csv", k + 1);
        write_csv(d, &out.join(&name))?;
        files.push(name);
    }
    write_json(&out.join("checkpoint.json"), &state.checkpoint(&rng))?;
    let mut parameters = None;
    if let Some(model) = analysis {
        let combined: CombinedEstimate = combine_imputations(&imputed, &model)?;
        write_json(&out.join("combined.json"), &combined)?;
        parameters = Some(model.parameter_names(dm));
    }
    let run = ImputeRun { options: ImputeOptions { iters: Some(iters), ..opts.clone() }, spec: spec.clone(), files, parameters };
    write_json(&out.join("run.json"), &run)?;
    Ok(run)
}

impl Error {
    fn from_abort(a: imputekit_core::chains::ChainAbort) -> Error {
        Error::Core(a.into())
    }
}
