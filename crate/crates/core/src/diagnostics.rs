//! Distribution comparison and convergence diagnostics.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::chains::{ChainState, Monitor, TraceSet};
use crate::condmodels::LinearPrior;
use crate::data::{BivariatePattern, DataMatrix};
use crate::error::{domain, invalid};
use crate::math;
use crate::rng::{draw_chisq, RngStream};
use crate::Result;

/// The two monitored regression slopes of a completed bivariate pattern:
/// x on y over block b (y imputed) and y on x over block c (x imputed),
/// both through the origin.
pub fn monitored_betas(dm: &DataMatrix, pattern: &BivariatePattern) -> Result<(f64, f64)> {
    if dm.n_cols() != 2 || dm.n_rows() != pattern.n_rows() {
        return Err(invalid!("monitored slopes need a two-column matrix with {} rows", pattern.n_rows()));
    }
    let x = dm.complete_column(0).ok_or_else(|| invalid!("x is not completed"))?;
    let y = dm.complete_column(1).ok_or_else(|| invalid!("y is not completed"))?;
    let ratio = |rows: core::ops::Range<usize>, den_of: &[f64], what: &str| {
        let num: f64 = rows.clone().map(|i| x[i] * y[i]).sum();
        let den: f64 = rows.map(|i| den_of[i] * den_of[i]).sum();
        if den == 0.0 {
            Err(domain!("zero denominator for {what}"))
        } else {
            Ok(num / den)
        }
    };
    let beta_x = ratio(pattern.block_b(), y, "beta_x")?;
    let beta_y = ratio(pattern.block_c(), x, "beta_y")?;
    Ok((beta_x, beta_y))
}

/// Records `beta_x` and `beta_y` of [`monitored_betas`].
#[derive(Clone, Copy, Debug)]
pub struct BetaMonitor {
    pub pattern: BivariatePattern,
}

impl Monitor for BetaMonitor {
    fn names(&self) -> Vec<String> {
        alloc::vec![String::from("beta_x"), String::from("beta_y")]
    }

    fn record(&self, state: &ChainState, out: &mut Vec<f64>) -> Result<()> {
        let (bx, by) = monitored_betas(state.data(), &self.pattern)?;
        out.push(bx);
        out.push(by);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn sorted(a: &[f64], what: &str) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(invalid!("{what} sample is empty"));
    }
    if a.iter().any(|v| v.is_nan()) {
        return Err(invalid!("{what} sample contains NaN"));
    }
    let mut s = a.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let sa = sorted(a, "first")?;
    let sb = sorted(b, "second")?;
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let t = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        n_a: sa.len(),
        n_b: sb.len(),
    })
}

/// Empirical quantile of sorted data: the order statistic of rank `r`
/// (1-based) sits at level `(r - 0.5)/N`; levels in between interpolate
/// linearly and levels outside clamp to the extremes.
pub fn quantile_sorted(s: &[f64], level: f64) -> f64 {
    let n = s.len();
    let h = (level * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let lo = h as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    s[lo] + frac * (s[hi] - s[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub level: f64,
    pub q_left: f64,
    pub q_right: f64,
}

/// Matched quantiles at levels `(i - 0.5)/k`, `i = 1..k`.
pub fn qq_points(a: &[f64], b: &[f64], k: usize) -> Result<Vec<QqPoint>> {
    if k == 0 {
        return Err(invalid!("quantile count must be positive"));
    }
    if k > a.len() || k > b.len() {
        return Err(invalid!("{k} quantiles requested from samples of size {} and {}", a.len(), b.len()));
    }
    let sa = sorted(a, "first")?;
    let sb = sorted(b, "second")?;
    Ok((1..=k)
        .map(|i| {
            let level = (i as f64 - 0.5) / k as f64;
            QqPoint {
                level,
                q_left: quantile_sorted(&sa, level),
                q_right: quantile_sorted(&sb, level),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub n_bins: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// Set when the pooled range has zero width; `value` is then 0.
    pub degenerate: bool,
}

/// Total variation between the histograms of `a` and `b` on `n_bins`
/// equal-width bins spanning the pooled range.
pub fn binned_tv(a: &[f64], b: &[f64], n_bins: usize) -> Result<TvEstimate> {
    if n_bins < 2 {
        return Err(invalid!("need at least 2 bins, got {n_bins}"));
    }
    for (s, what) in [(a, "first"), (b, "second")] {
        if s.is_empty() {
            return Err(invalid!("{what} sample is empty"));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("{what} sample has non-finite values"));
        }
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let mut est = TvEstimate {
        value: 0.0,
        n_bins,
        n_a: a.len(),
        n_b: b.len(),
        degenerate: false,
    };
    if !(hi > lo) {
        est.degenerate = true;
        return Ok(est);
    }
    let width = (hi - lo) / n_bins as f64;
    let counts = |s: &[f64]| {
        let mut c = alloc::vec![0usize; n_bins];
        for &v in s {
            let k = (((v - lo) / width) as usize).min(n_bins - 1);
            c[k] += 1;
        }
        c
    };
    let (ca, cb) = (counts(a), counts(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let tv: f64 = ca.iter().zip(&cb).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum();
    est.value = (0.5 * tv).min(1.0);
    Ok(est)
}

/// Potential scale reduction factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Rhat {
    Value(f64),
    /// Every chain is constant, so the within-chain variance is zero.
    Degenerate,
}

impl Rhat {
    pub fn value(self) -> Option<f64> {
        match self {
            Rhat::Value(v) => Some(v),
            Rhat::Degenerate => None,
        }
    }
}

/// R-hat over the chains of `traces` for `statistic`, in the two-variance
/// form `sqrt(((m-1)/m W + B/m) / W)` with `m` points per chain.
pub fn rhat(traces: &TraceSet, statistic: &str) -> Result<Rhat> {
    rhat_of(&traces.series(statistic)?)
}

/// [`rhat`] on raw per-chain series of equal length.
pub fn rhat_of(chains: &[&[f64]]) -> Result<Rhat> {
    if chains.len() < 2 {
        return Err(invalid!("R-hat needs at least 2 chains, got {}", chains.len()));
    }
    let m = chains[0].len();
    if chains.iter().any(|c| c.len() != m) {
        return Err(invalid!("chains have unequal lengths"));
    }
    if m < 10 {
        return Err(invalid!("R-hat needs at least 10 points per chain, got {m}"));
    }
    let mf = m as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / mf).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (mf - 1.0))
        .sum::<f64>()
        / chains.len() as f64;
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let b_over_m = means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (means.len() as f64 - 1.0);
    if !(w > 0.0) {
        return Ok(Rhat::Degenerate);
    }
    Ok(Rhat::Value(math::sqrt(((mf - 1.0) / mf * w + b_over_m) / w)))
}

/// Predictive draws per sample size in [`prior_sensitivity_curve`].
pub const SENSITIVITY_DRAWS: usize = 100_000;
pub const SENSITIVITY_BINS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub n: usize,
    pub tv: TvEstimate,
}

/// Binned TV between the posterior predictives of `y = βx + ε` (no
/// intercept) under two priors on `(β, σ²)`, given one simulated dataset of
/// size `n` with independent standard normal x and y.
///
/// Both predictives share every random number: `σ² = RSS / χ²` where the
/// chi-square with more degrees of freedom is the smaller one plus an
/// independent χ²₂, and the same normals drive `β`, the new `x` and the
/// noise. Identical priors therefore give TV exactly 0, and the estimate
/// carries only the difference the priors make.
pub fn prior_sensitivity_tv(
    n: usize,
    priors: (LinearPrior, LinearPrior),
    draws: usize,
    n_bins: usize,
    rng: &mut RngStream,
) -> Result<TvEstimate> {
    let k = 1;
    let df = (priors.0.sigma2_df(n, k), priors.1.sigma2_df(n, k));
    let df_min = df.0.min(df.1);
    if !(df_min > 0.0) {
        return Err(invalid!("n = {n} leaves no residual degrees of freedom"));
    }
    let mut data = rng.substream("data");
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = data.standard_normal();
        let y = data.standard_normal();
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let beta_hat = sxy / sxx;
    let rss = syy - beta_hat * sxy;
    if !(rss > 0.0) {
        return Err(domain!("simulated regression has zero residual"));
    }
    let extra = |d: f64| d - df_min;
    let mut pred = rng.substream("predictive");
    let mut a = Vec::with_capacity(draws);
    let mut b = Vec::with_capacity(draws);
    for _ in 0..draws {
        let g = draw_chisq(df_min, &mut pred)?;
        let e = if df.0 != df.1 { draw_chisq((df.0 - df.1).abs(), &mut pred)? } else { 0.0 };
        let z = pred.standard_normal();
        let x_new = pred.standard_normal();
        let eps = pred.standard_normal();
        for (d, out) in [(df.0, &mut a), (df.1, &mut b)] {
            let chi = if extra(d) > 0.0 { g + e } else { g };
            let sigma = math::sqrt(rss / chi);
            let beta = beta_hat + sigma * z / math::sqrt(sxx);
            out.push(x_new * beta + sigma * eps);
        }
    }
    binned_tv(&a, &b, n_bins)
}

/// Jeffreys-versus-flat predictive TV for each sample size, each on its own
/// substream `n/<n>`.
pub fn prior_sensitivity_curve(ns: &[usize], rng: &RngStream) -> Result<Vec<SensitivityPoint>> {
    ns.iter()
        .map(|&n| {
            let mut sub = rng.substream_indexed("n", n as u64);
            let tv = prior_sensitivity_tv(
                n,
                (LinearPrior::Jeffreys, LinearPrior::Flat),
                SENSITIVITY_DRAWS,
                SENSITIVITY_BINS,
                &mut sub,
            )?;
            Ok(SensitivityPoint { n, tv })
        })
        .collect()
}

/// Least-squares slope of `ln tv` on `ln n`.
pub fn loglog_slope(points: &[SensitivityPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(invalid!("need at least two points"));
    }
    if points.iter().any(|p| !(p.tv.value > 0.0)) {
        return Err(domain!("log-log slope needs positive TV values"));
    }
    let xs: Vec<f64> = points.iter().map(|p| math::ln(p.n as f64)).collect();
    let ys: Vec<f64> = points.iter().map(|p| math::ln(p.tv.value)).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
