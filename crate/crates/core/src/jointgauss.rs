//! The joint multivariate Gaussian model: conjugate posterior draws, the
//! data-augmentation sweep, the bivariate per-variable Gibbs scheme,
//! conditional parameter maps, and EM for the observed-data MLE.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chains::ChainState;
use crate::condmodels::{linear_impute, linear_posterior_draw, LinearPrior};
use crate::data::{BivariatePattern, DataMatrix};
use crate::error::{domain, invalid};
use crate::linalg;
use crate::math;
use crate::rng::{draw_inv_wishart, draw_mvn, MvnFactor, RngStream};
use crate::{Error, Result};

/// EM stops once successive parameters differ by less than this (sup norm).
pub const EM_TOLERANCE: f64 = 1e-8;
pub const EM_MAX_ITER: usize = 500;

/// Mean vector and SPD covariance of a p-variate normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    #[serde(with = "crate::linalg::serde_vector")]
    pub mu: DVector<f64>,
    #[serde(with = "crate::linalg::serde_matrix")]
    pub sigma: DMatrix<f64>,
}

impl GaussParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        if sigma.shape() != (p, p) {
            return Err(invalid!("covariance is {:?}, mean has length {}", sigma.shape(), p));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-9 * sigma.amax().max(1.0) {
            return Err(domain!("covariance is not symmetric"));
        }
        linalg::spd_cholesky(&sigma, "covariance")?;
        Ok(GaussParams { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Normal linear conditional `x_j | x_{-j} ~ N(intercept + coefficients·x_{-j}, residual_var)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondGaussSpec {
    pub intercept: f64,
    #[serde(with = "crate::linalg::serde_vector")]
    pub coefficients: DVector<f64>,
    pub residual_var: f64,
}

/// Full bivariate normal parameters for (x, y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateParams {
    pub mu_x: f64,
    pub sigma_x2: f64,
    pub mu_y: f64,
    pub sigma_y2: f64,
    pub rho: f64,
}

/// Zero-mean bivariate normal parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BivariateZeroMeanParams {
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    pub rho: f64,
}

impl BivariateZeroMeanParams {
    pub fn new(sigma_x2: f64, sigma_y2: f64, rho: f64) -> Result<Self> {
        let p = BivariateZeroMeanParams { sigma_x2, sigma_y2, rho };
        p.full().check()?;
        Ok(p)
    }

    pub fn full(&self) -> BivariateParams {
        BivariateParams {
            mu_x: 0.0,
            sigma_x2: self.sigma_x2,
            mu_y: 0.0,
            sigma_y2: self.sigma_y2,
            rho: self.rho,
        }
    }
}

/// Univariate normal marginal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub mean: f64,
    pub var: f64,
}

impl BivariateParams {
    fn check(&self) -> Result<()> {
        if !(self.sigma_x2 > 0.0) || !(self.sigma_y2 > 0.0) {
            return Err(invalid!("variances must be positive, got {} and {}", self.sigma_x2, self.sigma_y2));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(invalid!("correlation must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.mu_x.is_finite() && self.mu_y.is_finite()) {
            return Err(invalid!("means must be finite"));
        }
        Ok(())
    }

    fn swapped(&self) -> Self {
        BivariateParams {
            mu_x: self.mu_y,
            sigma_x2: self.sigma_y2,
            mu_y: self.mu_x,
            sigma_y2: self.sigma_x2,
            rho: self.rho,
        }
    }
}

/// Parameters of `y | x`.
pub fn t2_bivariate(p: &BivariateParams) -> Result<CondGaussSpec> {
    p.check()?;
    let slope = p.rho * math::sqrt(p.sigma_y2) / math::sqrt(p.sigma_x2);
    Ok(CondGaussSpec {
        intercept: p.mu_y - slope * p.mu_x,
        coefficients: DVector::from_element(1, slope),
        residual_var: (1.0 - p.rho * p.rho) * p.sigma_y2,
    })
}

/// Parameters of `x | y`.
pub fn t1_bivariate(p: &BivariateParams) -> Result<CondGaussSpec> {
    t2_bivariate(&p.swapped())
}

/// Marginal of `x`, completing `t2_bivariate` to a one-to-one map.
pub fn t2_star(p: &BivariateParams) -> Result<Marginal> {
    p.check()?;
    Ok(Marginal {
        mean: p.mu_x,
        var: p.sigma_x2,
    })
}

/// Marginal of `y`, completing `t1_bivariate`.
pub fn t1_star(p: &BivariateParams) -> Result<Marginal> {
    p.check()?;
    Ok(Marginal {
        mean: p.mu_y,
        var: p.sigma_y2,
    })
}

/// Inverse of `(t2_bivariate, t2_star)`.
pub fn bivariate_from_t2(cond: &CondGaussSpec, x: &Marginal) -> Result<BivariateParams> {
    if cond.coefficients.len() != 1 {
        return Err(invalid!("bivariate conditional needs one coefficient"));
    }
    if !(cond.residual_var >= 0.0) || !(x.var > 0.0) {
        return Err(invalid!("variances must be positive"));
    }
    let beta = cond.coefficients[0];
    let sigma_y2 = cond.residual_var + beta * beta * x.var;
    if !(sigma_y2 > 0.0) {
        return Err(invalid!("implied variance of y is zero"));
    }
    Ok(BivariateParams {
        mu_x: x.mean,
        sigma_x2: x.var,
        mu_y: cond.intercept + beta * x.mean,
        sigma_y2,
        rho: beta * math::sqrt(x.var) / math::sqrt(sigma_y2),
    })
}

/// Inverse of `(t1_bivariate, t1_star)`.
pub fn bivariate_from_t1(cond: &CondGaussSpec, y: &Marginal) -> Result<BivariateParams> {
    Ok(bivariate_from_t2(cond, y)?.swapped())
}

/// Logistic parameters `(α, β)` of `x₁ | x₂` when `x₁ ~ Bernoulli(p)` and
/// `x₂ | x₁ ~ N(β₀ + β₁x₁, σ²)`.
///
/// The log-odds are `logit p + [(x₂-β₀)² - (x₂-β₀-β₁)²] / (2σ²)`, which is
/// linear in `x₂` with slope `β₁/σ²` and intercept
/// `logit p - (β₁² + 2β₀β₁)/(2σ²)`.
pub fn logit_compat_map(p: f64, beta0: f64, beta1: f64, sigma2: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid!("success probability must lie in (0, 1), got {p}"));
    }
    if !(sigma2 > 0.0) {
        return Err(invalid!("residual variance must be positive, got {sigma2}"));
    }
    let logit = math::ln(p / (1.0 - p));
    let alpha = logit - (beta1 * beta1 + 2.0 * beta0 * beta1) / (2.0 * sigma2);
    Ok((alpha, beta1 / sigma2))
}

/// Centered scatter matrix and column means of an n×p matrix.
fn scatter(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let s = centered.tr_mul(&centered);
    (mean, (&s + s.transpose()) * 0.5)
}

/// Sample mean and maximum-likelihood covariance (divisor n).
pub fn gaussian_mle(complete: &DMatrix<f64>) -> Result<GaussParams> {
    let (n, p) = complete.shape();
    if n <= p {
        return Err(invalid!("{n} rows cannot estimate a {p}-variate covariance"));
    }
    let (mean, s) = scatter(complete);
    GaussParams::new(mean, s / n as f64).map_err(|_| domain!("sample covariance is singular"))
}

/// Prior on (μ, Σ) for data augmentation; flat in μ under both choices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointPrior {
    /// `|Σ|^{-(p+1)/2}`.
    #[default]
    Niw,
    /// `|Σ|^{-1}`. Writing Σ as (Σ₋ⱼ, β, τ²) for the regression of any one
    /// coordinate on the rest, this is `τ⁻²` times a flat density: every
    /// conditional regression gets the Jeffreys prior `π(β, τ²) ∝ τ⁻²`.
    ConditionalJeffreys,
}

impl JointPrior {
    /// Inverse-Wishart degrees of freedom of `Σ | x` for n rows, p columns.
    pub fn sigma_df(self, n: usize, p: usize) -> f64 {
        match self {
            JointPrior::Niw => n as f64 - 1.0,
            JointPrior::ConditionalJeffreys => n as f64 - p as f64,
        }
    }
}

/// Posterior draw of (μ, Σ) from complete data under `prior`:
/// `Σ ~ IW(prior.sigma_df(n, p), S)`, then `μ | Σ ~ N(x̄, Σ/n)`.
pub fn joint_posterior_draw(complete: &DMatrix<f64>, prior: JointPrior, rng: &mut RngStream) -> Result<GaussParams> {
    let (n, p) = complete.shape();
    let df = prior.sigma_df(n, p);
    if !(df > (p + 1) as f64) {
        return Err(invalid!("{n} rows leave {df} posterior degrees of freedom for {p} columns"));
    }
    if complete.iter().any(|v| !v.is_finite()) {
        return Err(domain!("non-finite value in completed data"));
    }
    let (mean, s) = scatter(complete);
    if linalg::spd_cholesky(&s, "scatter matrix").is_err() {
        return Err(domain!("scatter matrix is degenerate (a column is constant or collinear)"));
    }
    let sigma = draw_inv_wishart(df, &s, rng)?;
    let mu = draw_mvn(&mean, &(&sigma / n as f64), rng)?;
    Ok(GaussParams { mu, sigma })
}

/// Posterior draw of (μ, Σ) from complete data under the prior
/// `|Σ|^{-(p+1)/2}`: `Σ ~ IW(n-1, S)`, then `μ | Σ ~ N(x̄, Σ/n)`.
pub fn niw_posterior_draw(complete: &DMatrix<f64>, rng: &mut RngStream) -> Result<GaussParams> {
    joint_posterior_draw(complete, JointPrior::Niw, rng)
}

/// Posterior draw of Σ for mean-zero data under a flat prior on the
/// entries of Σ: `Σ ~ IW(n - p - 1, XᵀX)`, with `μ` fixed at 0. For p = 2
/// this is the prior `σ_x σ_y` on `(σ_x², σ_y², ρ)`.
pub fn zero_mean_posterior_draw(complete: &DMatrix<f64>, rng: &mut RngStream) -> Result<GaussParams> {
    let (n, p) = complete.shape();
    if n <= 2 * p {
        return Err(invalid!("need more than 2p = {} rows, got {n}", 2 * p));
    }
    if complete.iter().any(|v| !v.is_finite()) {
        return Err(domain!("non-finite value in completed data"));
    }
    let s = complete.tr_mul(complete);
    let s = (&s + s.transpose()) * 0.5;
    if linalg::spd_cholesky(&s, "cross-product matrix").is_err() {
        return Err(domain!("cross-product matrix is degenerate"));
    }
    let sigma = draw_inv_wishart((n - p - 1) as f64, &s, rng)?;
    Ok(GaussParams {
        mu: DVector::zeros(p),
        sigma,
    })
}

/// Exact conditional of `x_j` given the other coordinates.
pub fn conditional_spec(params: &GaussParams, j: usize) -> Result<CondGaussSpec> {
    let p = params.dim();
    if j >= p {
        return Err(invalid!("column {j} out of range for dimension {p}"));
    }
    let others: Vec<usize> = (0..p).filter(|&i| i != j).collect();
    let cond = Conditional::new(params, &others, &[j])?;
    let coefficients = cond.coef.row(0).transpose();
    let intercept = params.mu[j] - coefficients.dot(&params.mu.select_rows(&others));
    let residual_var = cond.cov[(0, 0)];
    if !(residual_var > 0.0) {
        return Err(domain!("conditional variance of column {j} is not positive"));
    }
    Ok(CondGaussSpec {
        intercept,
        coefficients,
        residual_var,
    })
}

/// Regression of the `mis` block on the `obs` block.
struct Conditional {
    obs: Vec<usize>,
    mis: Vec<usize>,
    /// |mis| × |obs| coefficients Σ_MO Σ_OO⁻¹.
    coef: DMatrix<f64>,
    /// Σ_MM - Σ_MO Σ_OO⁻¹ Σ_OM.
    cov: DMatrix<f64>,
}

impl Conditional {
    fn new(params: &GaussParams, obs: &[usize], mis: &[usize]) -> Result<Self> {
        let s = &params.sigma;
        let s_mm = s.select_rows(mis).select_columns(mis);
        if obs.is_empty() {
            return Ok(Conditional {
                obs: Vec::new(),
                mis: mis.to_vec(),
                coef: DMatrix::zeros(mis.len(), 0),
                cov: s_mm,
            });
        }
        let s_oo = s.select_rows(obs).select_columns(obs);
        let s_om = s.select_rows(obs).select_columns(mis);
        let chol = linalg::spd_cholesky(&s_oo, "observed-block covariance")?;
        let coef = chol.solve(&s_om).transpose();
        let cov = &s_mm - &coef * &s_om;
        Ok(Conditional {
            obs: obs.to_vec(),
            mis: mis.to_vec(),
            coef,
            cov: (&cov + cov.transpose()) * 0.5,
        })
    }

    fn mean(&self, params: &GaussParams, row: &DVector<f64>) -> DVector<f64> {
        let mut m = params.mu.select_rows(&self.mis);
        if !self.obs.is_empty() {
            let r = DVector::from_iterator(self.obs.len(), self.obs.iter().map(|&o| row[o] - params.mu[o]));
            m += &self.coef * r;
        }
        m
    }
}

fn row_pattern(mask: &[bool], n: usize, p: usize, i: usize) -> Vec<bool> {
    (0..p).map(|j| mask[j * n + i]).collect()
}

fn split(pattern: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let obs = (0..pattern.len()).filter(|&j| pattern[j]).collect();
    let mis = (0..pattern.len()).filter(|&j| !pattern[j]).collect();
    (obs, mis)
}

fn completed_matrix(dm: &DataMatrix) -> Result<DMatrix<f64>> {
    let cols = dm.to_complete_columns()?;
    Ok(DMatrix::from_fn(dm.n_rows(), dm.n_cols(), |i, j| cols[j][i]))
}

/// Imputation half of a data-augmentation sweep: every row's missing cells
/// are redrawn jointly from their conditional normal given the row's
/// observed cells under `params`. Rows are visited in order; factorizations
/// are shared by rows with the same pattern.
pub fn da_impute(state: &mut ChainState, params: &GaussParams, rng: &mut RngStream) -> Result<()> {
    let (n, p) = (state.data().n_rows(), state.data().n_cols());
    if params.dim() != p {
        return Err(invalid!("parameters have dimension {}, data has {p} columns", params.dim()));
    }
    let mut cache: BTreeMap<Vec<bool>, (Conditional, MvnFactor)> = BTreeMap::new();
    let mut row = DVector::zeros(p);
    for i in 0..n {
        let pattern = row_pattern(state.mask(), n, p, i);
        if pattern.iter().all(|&o| o) {
            continue;
        }
        if !cache.contains_key(&pattern) {
            let (obs, mis) = split(&pattern);
            let cond = Conditional::new(params, &obs, &mis)?;
            let factor = MvnFactor::new(&cond.cov)?;
            cache.insert(pattern.clone(), (cond, factor));
        }
        let (cond, factor) = &cache[&pattern];
        for j in 0..p {
            row[j] = state.data().get(i, j).unwrap_or(f64::NAN);
        }
        let draw = factor.sample(&cond.mean(params, &row), rng)?;
        for (k, &j) in cond.mis.iter().enumerate() {
            state.impute(i, j, draw[k]);
        }
    }
    Ok(())
}

/// One data-augmentation Gibbs sweep: draw (μ, Σ) from the posterior given
/// the completed data, then redraw every missing cell given it.
pub fn da_sweep(state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
    da_sweep_with(state, JointPrior::Niw, rng)
}

/// [`da_sweep`] under an explicit joint prior.
pub fn da_sweep_with(state: &mut ChainState, prior: JointPrior, rng: &mut RngStream) -> Result<()> {
    let x = completed_matrix(state.data())?;
    let params = joint_posterior_draw(&x, prior, rng)?;
    da_impute(state, &params, rng)?;
    state.joint = Some(params);
    state.iter += 1;
    Ok(())
}

/// [`da_sweep_with`] as a [`Sweep`](crate::chains::Sweep); the default
/// prior is [`JointPrior::Niw`].
#[derive(Clone, Copy, Debug, Default)]
pub struct DataAugmentationSweep {
    pub prior: JointPrior,
}

impl crate::chains::Sweep for DataAugmentationSweep {
    fn sweep(&mut self, state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
        da_sweep_with(state, self.prior, rng)
    }
}

/// Data-augmentation sweep of the mean-zero joint model
/// ([`zero_mean_posterior_draw`], then [`da_impute`]).
pub fn zero_mean_da_sweep(state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
    let x = completed_matrix(state.data())?;
    let params = zero_mean_posterior_draw(&x, rng)?;
    da_impute(state, &params, rng)?;
    state.joint = Some(params);
    state.iter += 1;
    Ok(())
}

/// [`zero_mean_da_sweep`] as a [`Sweep`](crate::chains::Sweep).
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroMeanDaSweep;

impl crate::chains::Sweep for ZeroMeanDaSweep {
    fn sweep(&mut self, state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
        zero_mean_da_sweep(state, rng)
    }
}

/// One sweep of the per-variable Gibbs scheme for the zero-mean bivariate
/// model on a block pattern (columns x, y).
///
/// Under the joint prior the induced prior on each conditional regression
/// is flat, so each step is a flat-prior, no-intercept linear posterior
/// draw: x on y over blocks a and b, imputing x in block c; then y on x
/// over blocks a and c, imputing y in block b.
pub fn bivariate_gibbs_sweep(state: &mut ChainState, pattern: &BivariatePattern, rng: &mut RngStream) -> Result<()> {
    let dm = state.data();
    if dm.n_cols() != 2 || dm.n_rows() != pattern.n_rows() {
        return Err(invalid!("bivariate sweep needs two columns and {} rows", pattern.n_rows()));
    }
    let n = pattern.n_rows();
    let expect = |i: usize, j: usize| match j {
        0 => !pattern.block_c().contains(&i),
        _ => !pattern.block_b().contains(&i),
    };
    if (0..2).any(|j| (0..n).any(|i| state.was_observed(i, j) != expect(i, j))) {
        return Err(invalid!("chain mask does not match the block pattern"));
    }
    let iteration = state.iter + 1;
    for (target, other) in [(0usize, 1usize), (1, 0)] {
        let fit_rows = state.observed_rows(target).to_vec();
        let mis_rows = state.missing_rows(target).to_vec();
        let col = |rows: &[usize], j: usize| -> Vec<f64> {
            rows.iter().map(|&i| state.data().get(i, j).unwrap_or(f64::NAN)).collect()
        };
        let x = DMatrix::from_column_slice(fit_rows.len(), 1, &col(&fit_rows, other));
        let y = DVector::from_vec(col(&fit_rows, target));
        let x_mis = DMatrix::from_column_slice(mis_rows.len(), 1, &col(&mis_rows, other));
        let annotate = |e: Error| Error::Fit {
            variable: state.data().names()[target].clone(),
            iteration,
            source: alloc::boxed::Box::new(e),
        };
        let draw = linear_posterior_draw(&x, &y, LinearPrior::Flat, rng).map_err(annotate)?;
        let imputed = linear_impute(&x_mis, &draw, rng)?;
        for (&i, v) in mis_rows.iter().zip(imputed) {
            state.impute(i, target, v);
        }
        state.draws[target] = Some(crate::condmodels::ParamDraw::Linear(draw));
    }
    state.iter = iteration;
    Ok(())
}

/// [`bivariate_gibbs_sweep`] as a [`Sweep`](crate::chains::Sweep).
#[derive(Clone, Copy, Debug)]
pub struct BivariateGibbsSweep {
    pub pattern: BivariatePattern,
}

impl crate::chains::Sweep for BivariateGibbsSweep {
    fn sweep(&mut self, state: &mut ChainState, rng: &mut RngStream) -> Result<()> {
        bivariate_gibbs_sweep(state, &self.pattern, rng)
    }
}

/// Observed-data log-likelihood of `dm` under `params`.
pub fn observed_loglik(dm: &DataMatrix, params: &GaussParams) -> Result<f64> {
    let (n, p) = (dm.n_rows(), dm.n_cols());
    if params.dim() != p {
        return Err(invalid!("parameters have dimension {}, data has {p} columns", params.dim()));
    }
    let mut by_pattern: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_pattern.entry(row_pattern(dm.mask(), n, p, i)).or_default().push(i);
    }
    let mut total = 0.0;
    for (pattern, rows) in by_pattern {
        let (obs, _) = split(&pattern);
        if obs.is_empty() {
            continue;
        }
        let s_oo = params.sigma.select_rows(&obs).select_columns(&obs);
        let chol = linalg::spd_cholesky(&s_oo, "observed-block covariance")?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| math::ln(*d)).sum::<f64>();
        let mu_o = params.mu.select_rows(&obs);
        for i in rows {
            let r = DVector::from_iterator(obs.len(), obs.iter().enumerate().map(|(k, &j)| dm.get(i, j).unwrap_or(f64::NAN) - mu_o[k]));
            let quad = r.dot(&chol.solve(&r));
            total -= 0.5 * (obs.len() as f64 * math::LN_2PI + log_det + quad);
        }
    }
    Ok(total)
}

/// Result of [`em_observed_mle`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub params: GaussParams,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of the last update; the size of the remaining
    /// step when `converged` is false.
    pub last_change: f64,
    /// Observed-data log-likelihood at the start and after every update.
    pub loglik: Vec<f64>,
}

/// Maximum-likelihood estimate of (μ, Σ) from incomplete data by EM.
pub fn em_observed_mle(dm: &DataMatrix) -> Result<EmFit> {
    let (n, p) = (dm.n_rows(), dm.n_cols());
    if p == 0 || n == 0 {
        return Err(invalid!("empty data matrix"));
    }
    let mask = dm.mask();
    for a in 0..p {
        for b in a..p {
            if !(0..n).any(|i| mask[a * n + i] && mask[b * n + i]) {
                return Err(Error::Estimation(alloc::format!(
                    "columns `{}` and `{}` are never observed together; the covariance is not identifiable",
                    dm.names()[a],
                    dm.names()[b]
                )));
            }
        }
    }

    // Start from available-case means and variances, zero covariances.
    let mut mu = DVector::zeros(p);
    let mut sigma = DMatrix::zeros(p, p);
    for j in 0..p {
        let vals: Vec<f64> = (0..n).filter_map(|i| dm.get(i, j)).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        if !(v > 0.0) {
            return Err(Error::Estimation(alloc::format!("column `{}` has no observed variation", dm.names()[j])));
        }
        mu[j] = m;
        sigma[(j, j)] = v;
    }
    let mut params = GaussParams { mu, sigma };

    let mut by_pattern: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_pattern.entry(row_pattern(mask, n, p, i)).or_default().push(i);
    }

    let mut loglik = alloc::vec![observed_loglik(dm, &params)?];
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut filled = DMatrix::zeros(n, p);
    while iterations < EM_MAX_ITER {
        // E-step: conditional expectations and the summed conditional covariances.
        let mut extra = DMatrix::zeros(p, p);
        for (pattern, rows) in &by_pattern {
            let (obs, mis) = split(pattern);
            let cond = if mis.is_empty() {
                None
            } else {
                Some(Conditional::new(&params, &obs, &mis).map_err(|e| Error::Estimation(alloc::format!("E-step: {e}")))?)
            };
            let mut row = DVector::zeros(p);
            for &i in rows {
                for j in 0..p {
                    row[j] = dm.get(i, j).unwrap_or(0.0);
                }
                if let Some(c) = &cond {
                    let m = c.mean(&params, &row);
                    for (k, &j) in c.mis.iter().enumerate() {
                        row[j] = m[k];
                    }
                }
                filled.set_row(i, &row.transpose());
            }
            if let Some(c) = &cond {
                for (a, &ja) in c.mis.iter().enumerate() {
                    for (b, &jb) in c.mis.iter().enumerate() {
                        extra[(ja, jb)] += rows.len() as f64 * c.cov[(a, b)];
                    }
                }
            }
        }
        // M-step.
        let (mean, s) = scatter(&filled);
        let sigma = (s + extra) / n as f64;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let change = (&mean - &params.mu).amax().max((&sigma - &params.sigma).amax());
        params = GaussParams { mu: mean, sigma };
        iterations += 1;
        last_change = change;
        loglik.push(observed_loglik(dm, &params).map_err(|e| Error::Estimation(alloc::format!("M-step: {e}")))?);
        if change < EM_TOLERANCE {
            break;
        }
    }
    Ok(EmFit {
        params,
        iterations,
        converged: last_change < EM_TOLERANCE,
        last_change,
        loglik,
    })
}
