//! Per-variable conditional regression models for chained-equations
//! imputation: design construction (with interaction terms), posterior
//! parameter draws, and predictive imputation draws.
//!
//! A spec's interaction terms are the extra parameters that make a set of
//! conditionals incompatible; dropping them ([`ConditionalModelSpec::compatible_element`])
//! leaves the main-effects model.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, DataMatrix};
use crate::error::{domain, invalid};
use crate::linalg::{self, LeastSquares};
use crate::math;
use crate::rng::{self, RngStream};
use crate::{Error, Result};

/// Newton iteration cap for logistic fits.
pub const LOGISTIC_MAX_ITER: usize = 50;
/// Convergence threshold on the score's ∞-norm.
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
/// Coefficient norm treated as divergence (separation).
pub const LOGISTIC_DIVERGENCE_NORM: f64 = 1e4;
/// Linear predictor magnitude at which fitted probabilities are numerically 0 or 1.
pub const LOGISTIC_SATURATION: f64 = 35.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Intercept,
    Main(usize),
    Interaction(usize, usize),
}

impl Term {
    fn columns(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            Term::Intercept => (None, None),
            Term::Main(c) => (Some(c), None),
            Term::Interaction(x, y) => (Some(x), Some(y)),
        };
        a.into_iter().chain(b)
    }

    #[inline]
    fn eval(&self, dm: &DataMatrix, row: usize) -> Option<f64> {
        match *self {
            Term::Intercept => Some(1.0),
            Term::Main(c) => dm.get(row, c),
            Term::Interaction(x, y) => Some(dm.get(row, x)? * dm.get(row, y)?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

/// Prior on (β, σ²) of a linear conditional model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LinearPrior {
    /// π ∝ σ⁻²; σ² posterior has `rows - k` degrees of freedom.
    #[default]
    Jeffreys,
    /// π ∝ 1; σ² posterior has `rows - k - 2` degrees of freedom.
    Flat,
}

impl LinearPrior {
    pub fn sigma2_df(self, rows: usize, k: usize) -> f64 {
        match self {
            LinearPrior::Jeffreys => rows as f64 - k as f64,
            LinearPrior::Flat => rows as f64 - k as f64 - 2.0,
        }
    }
}

/// One variable's imputation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalModelSpec {
    pub target: usize,
    pub family: Family,
    pub terms: Vec<Term>,
    /// Ignored for logistic models.
    #[serde(default)]
    pub prior: LinearPrior,
}

impl ConditionalModelSpec {
    pub fn linear(target: usize, terms: Vec<Term>, prior: LinearPrior) -> Self {
        ConditionalModelSpec {
            target,
            family: Family::Linear,
            terms,
            prior,
        }
    }

    pub fn logistic(target: usize, terms: Vec<Term>) -> Self {
        ConditionalModelSpec {
            target,
            family: Family::Logistic,
            terms,
            prior: LinearPrior::Jeffreys,
        }
    }

    /// Intercept plus a main effect for every other of `p` columns.
    pub fn main_effects(target: usize, p: usize, family: Family, prior: LinearPrior) -> Self {
        let mut terms = alloc::vec![Term::Intercept];
        terms.extend((0..p).filter(|&c| c != target).map(Term::Main));
        ConditionalModelSpec {
            target,
            family,
            terms,
            prior,
        }
    }

    /// The spec with every interaction term removed.
    pub fn compatible_element(&self) -> Self {
        ConditionalModelSpec {
            terms: self
                .terms
                .iter()
                .copied()
                .filter(|t| !matches!(t, Term::Interaction(..)))
                .collect(),
            ..self.clone()
        }
    }

    /// Structural checks that do not need data.
    pub fn check_terms(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidSpec(alloc::format!(
                "model for column {} has no terms",
                self.target
            )));
        }
        for t in &self.terms {
            if t.columns().any(|c| c == self.target) {
                return Err(Error::InvalidSpec(alloc::format!(
                    "term {:?} references the target column {}",
                    t,
                    self.target
                )));
            }
            if let Term::Interaction(a, b) = t {
                if a == b {
                    return Err(Error::InvalidSpec(alloc::format!(
                        "interaction of column {a} with itself"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks against a data matrix: column ranges and family/kind agreement.
    pub fn validate(&self, dm: &DataMatrix) -> Result<()> {
        self.check_terms()?;
        let p = dm.n_cols();
        if self.target >= p || self.terms.iter().flat_map(Term::columns).any(|c| c >= p) {
            return Err(Error::InvalidSpec(alloc::format!(
                "model for column {} references a column outside 0..{}",
                self.target,
                p
            )));
        }
        if self.family == Family::Logistic && dm.kinds()[self.target] != ColumnKind::Binary {
            return Err(Error::InvalidSpec(alloc::format!(
                "logistic model needs a binary target, `{}` is continuous",
                dm.names()[self.target]
            )));
        }
        Ok(())
    }
}

/// Posterior draw (β, σ²) of a linear conditional model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDraw {
    #[serde(with = "crate::linalg::serde_vector")]
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

/// Approximate posterior draw of logistic coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticDraw {
    #[serde(with = "crate::linalg::serde_vector")]
    pub beta: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParamDraw {
    Linear(LinearDraw),
    Logistic(LogisticDraw),
}

/// Design rows for `terms` over `rows`; every referenced cell must be present.
pub fn design_matrix(dm: &DataMatrix, terms: &[Term], rows: &[usize]) -> Result<DMatrix<f64>> {
    let mut x = DMatrix::<f64>::zeros(rows.len(), terms.len());
    for (c, term) in terms.iter().enumerate() {
        for (r, &i) in rows.iter().enumerate() {
            x[(r, c)] = term
                .eval(dm, i)
                .ok_or_else(|| invalid!("term {:?} reads a missing cell in row {}", term, i))?;
        }
    }
    Ok(x)
}

/// Design matrix (one column per term, in spec order) and response over `rows`.
pub fn build_design(dm: &DataMatrix, spec: &ConditionalModelSpec, rows: &[usize]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    spec.check_terms()?;
    let x = design_matrix(dm, &spec.terms, rows)?;
    let mut y = DVector::<f64>::zeros(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        y[r] = dm
            .get(i, spec.target)
            .ok_or_else(|| invalid!("response `{}` is missing in row {}", dm.names()[spec.target], i))?;
    }
    Ok((x, y))
}

/// Least-squares summary from which conjugate posterior draws are taken.
#[derive(Clone, Debug)]
pub struct LinearPosterior {
    ls: LeastSquares,
    rows: usize,
}

impl LinearPosterior {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        Ok(LinearPosterior {
            ls: LeastSquares::fit(x, y)?,
            rows: x.nrows(),
        })
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.ls.beta
    }

    pub fn rss(&self) -> f64 {
        self.ls.rss
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.ls.beta.len()
    }

    /// σ² ~ scaled-inv-χ²(df, RSS/df), df set by the prior.
    pub fn draw_sigma2(&self, prior: LinearPrior, rng: &mut RngStream) -> Result<f64> {
        let df = prior.sigma2_df(self.rows, self.k());
        if !(df > 0.0) {
            return Err(invalid!("{} rows leave no residual degrees of freedom for {} coefficients", self.rows, self.k()));
        }
        if !(self.ls.rss > 0.0) {
            return Err(domain!("zero residual sum of squares: the response is fitted exactly"));
        }
        rng::draw_scaled_inv_chisq(df, self.ls.rss / df, rng)
    }

    /// β | σ² ~ N(β̂, σ²(XᵀX)⁻¹), as β̂ + σ R⁻¹ z.
    pub fn draw_beta(&self, sigma2: f64, rng: &mut RngStream) -> Result<DVector<f64>> {
        let k = self.k();
        let mut z = DVector::from_fn(k, |_, _| rng.standard_normal());
        linalg::solve_upper_in_place(&self.ls.r, &mut z)?;
        Ok(&self.ls.beta + z * math::sqrt(sigma2))
    }
}

/// Conjugate posterior draw of (β, σ²) for a linear model under `prior`.
pub fn linear_posterior_draw(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: LinearPrior,
    rng: &mut RngStream,
) -> Result<LinearDraw> {
    let (n, k) = x.shape();
    if n <= k + 2 {
        return Err(invalid!("linear posterior needs more than {} rows for {} coefficients, got {}", k + 2, k, n));
    }
    let post = LinearPosterior::new(x, y)?;
    let sigma2 = post.draw_sigma2(prior, rng)?;
    let beta = post.draw_beta(sigma2, rng)?;
    Ok(LinearDraw { beta, sigma2 })
}

/// Predictive draws `x·β + N(0, σ²)`, one per design row.
pub fn linear_impute(x_mis: &DMatrix<f64>, draw: &LinearDraw, rng: &mut RngStream) -> Result<Vec<f64>> {
    if x_mis.ncols() != draw.beta.len() {
        return Err(invalid!(
            "design has {} columns but the draw has {} coefficients",
            x_mis.ncols(),
            draw.beta.len()
        ));
    }
    let sd = math::sqrt(draw.sigma2);
    let mean = x_mis * &draw.beta;
    Ok(mean.iter().map(|&m| m + sd * rng.standard_normal()).collect())
}

/// Logistic maximum-likelihood fit with its observed information.
#[derive(Clone, Debug)]
pub struct LogisticFit {
    pub beta: DVector<f64>,
    /// Lower Cholesky factor of the observed Fisher information at `beta`.
    pub info_chol: DMatrix<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    /// Asymptotic covariance: the inverse observed information.
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.beta.len();
        let mut inv = DMatrix::<f64>::identity(k, k);
        self.info_chol.solve_lower_triangular_mut(&mut inv);
        inv.transpose() * inv
    }
}

fn check_binary_response(y: &DVector<f64>) -> Result<()> {
    let mut ones = 0usize;
    for &v in y.iter() {
        if v == 1.0 {
            ones += 1;
        } else if v != 0.0 {
            return Err(invalid!("logistic response must be 0/1, found {v}"));
        }
    }
    if ones == 0 || ones == y.len() {
        return Err(invalid!("logistic response has a single class ({} of {} ones)", ones, y.len()));
    }
    Ok(())
}

/// Newton–Raphson maximum likelihood for logistic regression.
pub fn logistic_mle(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LogisticFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(invalid!("design has {} rows but response has {}", n, y.len()));
    }
    check_binary_response(y)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(domain!("non-finite value in logistic design"));
    }
    let mut beta = DVector::<f64>::zeros(k);
    let mut weighted = DMatrix::<f64>::zeros(n, k);
    for iteration in 1..=LOGISTIC_MAX_ITER {
        let eta = x * &beta;
        let mut resid = DVector::<f64>::zeros(n);
        for i in 0..n {
            let p = math::logistic(eta[i]);
            resid[i] = y[i] - p;
            let sw = math::sqrt(p * (1.0 - p));
            for c in 0..k {
                weighted[(i, c)] = x[(i, c)] * sw;
            }
        }
        let grad = x.tr_mul(&resid);
        let info = weighted.tr_mul(&weighted);
        let chol = nalgebra::Cholesky::new(info).ok_or_else(|| {
            Error::Separation(alloc::format!("observed information became singular at iteration {iteration}"))
        })?;
        if grad.amax() < LOGISTIC_GRAD_TOL {
            let max_eta = eta.amax();
            if max_eta > LOGISTIC_SATURATION {
                return Err(Error::Separation(alloc::format!(
                    "fitted probabilities saturate (|linear predictor| up to {max_eta:.1})"
                )));
            }
            return Ok(LogisticFit {
                beta,
                info_chol: chol.l(),
                iterations: iteration,
            });
        }
        beta += chol.solve(&grad);
        let norm = beta.norm();
        if !(norm <= LOGISTIC_DIVERGENCE_NORM) {
            return Err(Error::Separation(alloc::format!(
                "coefficient norm {norm:e} exceeds {LOGISTIC_DIVERGENCE_NORM:e} at iteration {iteration}"
            )));
        }
    }
    Err(Error::Estimation(alloc::format!(
        "logistic Newton iterations did not converge within {LOGISTIC_MAX_ITER}"
    )))
}

/// MLE plus a Gaussian perturbation with covariance equal to the inverse
/// observed information: β̃ + L z with L Lᵀ = I(β̃)⁻¹.
pub fn logistic_posterior_draw(x: &DMatrix<f64>, y: &DVector<f64>, rng: &mut RngStream) -> Result<LogisticDraw> {
    let fit = logistic_mle(x, y)?;
    let k = fit.beta.len();
    let mut z = DVector::from_fn(k, |_, _| rng.standard_normal());
    // I = C Cᵀ  =>  I⁻¹ = C⁻ᵀ C⁻¹, so C⁻ᵀ z has covariance I⁻¹.
    if !fit.info_chol.tr_solve_lower_triangular_mut(&mut z) {
        return Err(domain!("singular observed information"));
    }
    Ok(LogisticDraw { beta: fit.beta + z })
}

/// Bernoulli(logistic(x·β)) draws as 0.0/1.0, one per design row.
pub fn logistic_impute(x_mis: &DMatrix<f64>, draw: &LogisticDraw, rng: &mut RngStream) -> Result<Vec<f64>> {
    if x_mis.ncols() != draw.beta.len() {
        return Err(invalid!(
            "design has {} columns but the draw has {} coefficients",
            x_mis.ncols(),
            draw.beta.len()
        ));
    }
    let eta = x_mis * &draw.beta;
    eta.iter()
        .map(|&e| rng::draw_bernoulli(math::logistic(e), rng).map(|b| if b { 1.0 } else { 0.0 }))
        .collect()
}
