//! Combining analyses across multiply imputed datasets.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chains::{ChainState, Monitor};
use crate::condmodels::{build_design, logistic_mle, ConditionalModelSpec, Term};
use crate::data::DataMatrix;
use crate::error::invalid;
use crate::jointgauss::gaussian_mle;
use crate::linalg::LeastSquares;
use crate::{Error, Result};

/// Rubin's combined estimate; variances are componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedEstimate {
    pub point: Vec<f64>,
    #[serde(rename = "within")]
    pub within_var: Vec<f64>,
    #[serde(rename = "between")]
    pub between_var: Vec<f64>,
    #[serde(rename = "total")]
    pub total_var: Vec<f64>,
    pub m: usize,
}

/// Point = mean of estimates, W = mean of variances, B = sample variance of
/// estimates (divisor m - 1), T = W + (1 + 1/m) B.
pub fn rubin_combine(estimates: &[Vec<f64>], variances: &[Vec<f64>]) -> Result<CombinedEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(invalid!("combining needs at least 2 imputations, got {m}"));
    }
    if variances.len() != m {
        return Err(invalid!("{m} estimates but {} variance vectors", variances.len()));
    }
    let d = estimates[0].len();
    if estimates.iter().chain(variances).any(|v| v.len() != d) {
        return Err(invalid!("estimate and variance vectors differ in length"));
    }
    if variances.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(invalid!("within-imputation variances must be non-negative"));
    }
    let mf = m as f64;
    let mean_of = |vs: &[Vec<f64>], k: usize| vs.iter().map(|v| v[k]).sum::<f64>() / mf;
    let point: Vec<f64> = (0..d).map(|k| mean_of(estimates, k)).collect();
    let within: Vec<f64> = (0..d).map(|k| mean_of(variances, k)).collect();
    let between: Vec<f64> = (0..d)
        .map(|k| estimates.iter().map(|e| (e[k] - point[k]) * (e[k] - point[k])).sum::<f64>() / (mf - 1.0))
        .collect();
    let total = within.iter().zip(&between).map(|(w, b)| w + (1.0 + 1.0 / mf) * b).collect();
    Ok(CombinedEstimate {
        point,
        within_var: within,
        between_var: between,
        total_var: total,
        m,
    })
}

/// Complete-data analysis applied to each imputed dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisModel {
    /// Least-squares regression; parameters are the term coefficients.
    Linear { target: usize, terms: Vec<Term> },
    /// Logistic regression by maximum likelihood.
    Logistic { target: usize, terms: Vec<Term> },
    /// Multivariate normal MLE of `columns`: the means, then the upper
    /// triangle of the covariance row by row.
    Gaussian { columns: Vec<usize> },
}

/// Estimates and their complete-data sampling variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFit {
    pub estimate: Vec<f64>,
    pub variance: Vec<f64>,
}

impl AnalysisModel {
    pub fn parameter_names(&self, dm: &DataMatrix) -> Vec<String> {
        let name = |c: usize| dm.names().get(c).cloned().unwrap_or_else(|| alloc::format!("col{c}"));
        match self {
            AnalysisModel::Linear { terms, .. } | AnalysisModel::Logistic { terms, .. } => terms
                .iter()
                .map(|t| match *t {
                    Term::Intercept => String::from("intercept"),
                    Term::Main(c) => name(c),
                    Term::Interaction(a, b) => alloc::format!("{}:{}", name(a), name(b)),
                })
                .collect(),
            AnalysisModel::Gaussian { columns } => {
                let mut out: Vec<String> = columns.iter().map(|&c| alloc::format!("mu_{}", name(c))).collect();
                for (a, &ca) in columns.iter().enumerate() {
                    for &cb in &columns[a..] {
                        out.push(alloc::format!("sigma_{}_{}", name(ca), name(cb)));
                    }
                }
                out
            }
        }
    }

    fn spec(target: usize, terms: &[Term]) -> ConditionalModelSpec {
        ConditionalModelSpec::linear(target, terms.to_vec(), Default::default())
    }

    /// Fits the model to one completed dataset.
    pub fn fit(&self, dm: &DataMatrix) -> Result<AnalysisFit> {
        if !dm.is_complete() {
            return Err(invalid!("analysis needs a completed dataset"));
        }
        let rows: Vec<usize> = (0..dm.n_rows()).collect();
        match self {
            AnalysisModel::Linear { target, terms } => {
                let spec = Self::spec(*target, terms);
                spec.validate(dm)?;
                let (x, y) = build_design(dm, &spec, &rows)?;
                let (n, k) = x.shape();
                if n <= k {
                    return Err(invalid!("{n} rows cannot fit {k} coefficients with a residual variance"));
                }
                let ls = LeastSquares::fit(&x, &y)?;
                let s2 = ls.rss / (n - k) as f64;
                let rinv = upper_inverse(&ls.r)?;
                let variance = (0..k).map(|i| s2 * rinv.row(i).norm_squared()).collect();
                Ok(AnalysisFit {
                    estimate: ls.beta.iter().copied().collect(),
                    variance,
                })
            }
            AnalysisModel::Logistic { target, terms } => {
                let spec = ConditionalModelSpec::logistic(*target, terms.clone());
                spec.validate(dm)?;
                let (x, y) = build_design(dm, &spec, &rows)?;
                let fit = logistic_mle(&x, &y)?;
                let cov = fit.covariance();
                Ok(AnalysisFit {
                    estimate: fit.beta.iter().copied().collect(),
                    variance: cov.diagonal().iter().copied().collect(),
                })
            }
            AnalysisModel::Gaussian { columns } => {
                if columns.is_empty() || columns.iter().any(|&c| c >= dm.n_cols()) {
                    return Err(invalid!("Gaussian analysis columns out of range"));
                }
                let cols = dm.to_complete_columns()?;
                let n = dm.n_rows();
                let x = DMatrix::from_fn(n, columns.len(), |i, j| cols[columns[j]][i]);
                let g = gaussian_mle(&x)?;
                let nf = n as f64;
                let mut estimate: Vec<f64> = g.mu.iter().copied().collect();
                let mut variance: Vec<f64> = (0..columns.len()).map(|j| g.sigma[(j, j)] / nf).collect();
                for a in 0..columns.len() {
                    for b in a..columns.len() {
                        let s = &g.sigma;
                        estimate.push(s[(a, b)]);
                        variance.push((s[(a, a)] * s[(b, b)] + s[(a, b)] * s[(a, b)]) / nf);
                    }
                }
                Ok(AnalysisFit { estimate, variance })
            }
        }
    }
}

fn upper_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = r.nrows();
    let mut inv = DMatrix::identity(k, k);
    if !r.solve_upper_triangular_mut(&mut inv) {
        return Err(Error::NumericDomain(String::from("singular triangular factor")));
    }
    Ok(inv)
}

fn check_shapes(imputed: &[DataMatrix]) -> Result<()> {
    let first = imputed.first().ok_or_else(|| invalid!("no imputed datasets"))?;
    if imputed
        .iter()
        .any(|d| d.n_rows() != first.n_rows() || d.names() != first.names())
    {
        return Err(invalid!("imputed datasets differ in shape or column names"));
    }
    Ok(())
}

/// Row-wise concatenation of datasets with identical columns.
pub fn stack(imputed: &[DataMatrix]) -> Result<DataMatrix> {
    check_shapes(imputed)?;
    let first = &imputed[0];
    let (n, p) = (first.n_rows(), first.n_cols());
    let cols = imputed.iter().map(DataMatrix::to_complete_columns).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = (0..p).flat_map(|j| cols.iter().flat_map(move |c| c[j].iter().copied())).collect();
    let present = alloc::vec![true; values.len()];
    let out = DataMatrix::new(first.names().to_vec(), Some(first.kinds().to_vec()), values, present)?;
    debug_assert_eq!(out.n_rows(), n * imputed.len());
    Ok(out)
}

/// Maximum-likelihood fit on all imputed datasets stacked into one.
pub fn stacked_mle(imputed: &[DataMatrix], model: &AnalysisModel) -> Result<Vec<f64>> {
    Ok(model.fit(&stack(imputed)?)?.estimate)
}

/// Per-dataset fits, one per imputation; any failure fails the whole set.
pub fn fit_each(imputed: &[DataMatrix], model: &AnalysisModel) -> Result<Vec<AnalysisFit>> {
    check_shapes(imputed)?;
    imputed
        .iter()
        .enumerate()
        .map(|(i, d)| {
            model
                .fit(d)
                .map_err(|e| Error::Estimation(alloc::format!("imputed dataset {i}: {e}")))
        })
        .collect()
}

/// Average of the per-dataset estimates.
pub fn mean_of_estimates(imputed: &[DataMatrix], model: &AnalysisModel) -> Result<Vec<f64>> {
    let fits = fit_each(imputed, model)?;
    let d = fits[0].estimate.len();
    let m = fits.len() as f64;
    Ok((0..d).map(|k| fits.iter().map(|f| f.estimate[k]).sum::<f64>() / m).collect())
}

/// Rubin's rules over per-dataset fits of `model`.
pub fn combine_imputations(imputed: &[DataMatrix], model: &AnalysisModel) -> Result<CombinedEstimate> {
    let fits = fit_each(imputed, model)?;
    let est: Vec<Vec<f64>> = fits.iter().map(|f| f.estimate.clone()).collect();
    let var: Vec<Vec<f64>> = fits.iter().map(|f| f.variance.clone()).collect();
    rubin_combine(&est, &var)
}

/// Records the analysis estimates of the chain's completed data.
#[derive(Clone, Debug)]
pub struct EstimateMonitor {
    pub model: AnalysisModel,
    pub names: Vec<String>,
}

impl EstimateMonitor {
    pub fn new(model: AnalysisModel, dm: &DataMatrix) -> Self {
        let names = model.parameter_names(dm);
        EstimateMonitor { model, names }
    }
}

impl Monitor for EstimateMonitor {
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn record(&self, state: &ChainState, out: &mut Vec<f64>) -> Result<()> {
        out.extend(self.model.fit(state.data())?.estimate);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rubin_hand_example() {
        let c = rubin_combine(&[vec![1.0], vec![3.0]], &[vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(c.point, vec![2.0]);
        assert_eq!(c.within_var, vec![0.5]);
        assert_eq!(c.between_var, vec![2.0]);
        assert_eq!(c.total_var, vec![3.5]);
    }

    #[test]
    fn rubin_needs_two() {
        assert!(rubin_combine(&[vec![1.0]], &[vec![0.5]]).is_err());
    }

    #[test]
    fn identical_estimates_have_no_between_variance() {
        let c = rubin_combine(&vec![vec![1.0, 2.0]; 4], &vec![vec![0.1, 0.2]; 4]).unwrap();
        assert_eq!(c.between_var, vec![0.0, 0.0]);
        assert_eq!(c.total_var, c.within_var);
    }

    fn toy() -> DataMatrix {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 1.0 + 2.0 * v + ((i * 7) % 5) as f64 * 0.1).collect();
        DataMatrix::from_columns(vec!["x".into(), "y".into()], vec![x, y]).unwrap()
    }

    #[test]
    fn copies_reproduce_single_fit() {
        let dm = toy();
        let model = AnalysisModel::Linear { target: 1, terms: vec![Term::Intercept, Term::Main(0)] };
        let single = model.fit(&dm).unwrap().estimate;
        let stacked = stacked_mle(&[dm.clone(), dm.clone(), dm.clone()], &model).unwrap();
        let mean = mean_of_estimates(&[dm.clone(), dm.clone()], &model).unwrap();
        for k in 0..2 {
            assert!((stacked[k] - single[k]).abs() < 1e-12);
            assert!((mean[k] - single[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_parameter_layout() {
        let dm = toy();
        let model = AnalysisModel::Gaussian { columns: vec![0, 1] };
        assert_eq!(model.parameter_names(&dm), vec!["mu_x", "mu_y", "sigma_x_x", "sigma_x_y", "sigma_y_y"]);
        assert_eq!(model.fit(&dm).unwrap().estimate.len(), 5);
    }
}
