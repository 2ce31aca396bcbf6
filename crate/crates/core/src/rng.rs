//! Seeded, reproducible random streams and the samplers every chain uses.
//!
//! An [`RngStream`] is addressed by a 64-bit seed and a path of labels.
//! The ChaCha20 key is the SHA-256 digest of (seed, path), so substreams for
//! chains, replicates or variables are derived without coordination, and the
//! same address yields the same draws on every platform.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, invalid};
use crate::linalg::{self, PSD_TOLERANCE};
use crate::Result;

/// Seed used when none is supplied on the command line or in a config.
pub const DEFAULT_SEED: u64 = 20_120_911;

const DOMAIN_TAG: &[u8] = b"imputekit/rng-stream/v1";

/// A reproducible random stream identified by `(seed, path)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: Vec<String>,
    inner: ChaCha20Rng,
}

/// Serializable position of a stream, enough to resume it exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPosition {
    pub seed: u64,
    pub path: Vec<String>,
    /// ChaCha word position, as a decimal string (u128 does not fit JSON numbers).
    pub word_pos: String,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, Vec::new())
    }

    fn at(seed: u64, path: Vec<String>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN_TAG);
        hasher.update(seed.to_le_bytes());
        for label in &path {
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        RngStream {
            seed,
            path,
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    /// Independent child stream; does not advance `self`.
    pub fn substream(&self, label: &str) -> RngStream {
        let mut path = self.path.clone();
        path.push(String::from(label));
        Self::at(self.seed, path)
    }

    /// Child stream `label/index`, e.g. one per chain or replicate.
    pub fn substream_indexed(&self, label: &str, index: u64) -> RngStream {
        self.substream(&alloc::format!("{label}/{index}"))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn position(&self) -> StreamPosition {
        StreamPosition {
            seed: self.seed,
            path: self.path.clone(),
            word_pos: alloc::format!("{}", self.inner.get_word_pos()),
        }
    }

    pub fn restore(pos: &StreamPosition) -> Result<RngStream> {
        let word_pos: u128 = pos
            .word_pos
            .parse()
            .map_err(|_| invalid!("bad stream word position `{}`", pos.word_pos))?;
        let mut s = Self::at(pos.seed, pos.path.clone());
        s.inner.set_word_pos(word_pos);
        Ok(s)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A precomputed (semi-definite) Cholesky factor for repeated normal draws.
#[derive(Clone, Debug)]
pub struct MvnFactor {
    lower: DMatrix<f64>,
}

impl MvnFactor {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        Ok(MvnFactor {
            lower: linalg::psd_cholesky(cov, PSD_TOLERANCE)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `mean + L z` with `z` standard normal; consumes `dim` normals.
    pub fn sample(&self, mean: &DVector<f64>, rng: &mut RngStream) -> Result<DVector<f64>> {
        let p = self.dim();
        if mean.len() != p {
            return Err(invalid!("mean has length {} but covariance is {}x{}", mean.len(), p, p));
        }
        let z = DVector::from_fn(p, |_, _| rng.standard_normal());
        Ok(mean + &self.lower * z)
    }
}

/// Draws from N(mean, cov) for a symmetric positive semi-definite `cov`.
pub fn draw_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut RngStream) -> Result<DVector<f64>> {
    MvnFactor::new(cov)?.sample(mean, rng)
}

/// Chi-square draw with `df` degrees of freedom.
pub fn draw_chisq(df: f64, rng: &mut RngStream) -> Result<f64> {
    if !(df > 0.0) {
        return Err(invalid!("chi-square df must be positive, got {df}"));
    }
    let dist = ChiSquared::new(df).map_err(|_| invalid!("chi-square df must be positive, got {df}"))?;
    Ok(dist.sample(rng))
}

/// Scaled inverse chi-square draw, distributed as `df · scale / χ²_df`.
pub fn draw_scaled_inv_chisq(df: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(invalid!("scaled inverse chi-square needs df > 0, got {df}"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid!("scaled inverse chi-square needs scale > 0, got {scale}"));
    }
    let chi = draw_chisq(df, rng)?;
    Ok(df * scale / chi)
}

/// Inverse-Wishart draw with `df` degrees of freedom and SPD `scale`
/// (mean `scale / (df - p - 1)`), via the Bartlett decomposition.
pub fn draw_inv_wishart(df: f64, scale: &DMatrix<f64>, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if scale.ncols() != p || p == 0 {
        return Err(invalid!("inverse-Wishart scale must be square and non-empty"));
    }
    if !(df > (p as f64) - 1.0) {
        return Err(invalid!("inverse-Wishart needs df > p - 1 = {}, got {df}", p - 1));
    }
    let c = linalg::spd_cholesky(scale, "inverse-Wishart scale")?.l();

    // Bartlett factor: A Aᵀ ~ Wishart(df, I).
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
        a[(i, i)] = libm::sqrt(draw_chisq(df - i as f64, rng)?);
    }
    // Σ = C A⁻ᵀ A⁻¹ Cᵀ = Bᵀ B with B = A⁻¹ Cᵀ.
    let mut b = c.transpose();
    if !a.solve_lower_triangular_mut(&mut b) {
        return Err(domain!("degenerate Bartlett factor"));
    }
    let sigma = b.transpose() * &b;
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Bernoulli draw: `true` with probability `prob`.
pub fn draw_bernoulli(prob: f64, rng: &mut RngStream) -> Result<bool> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(invalid!("Bernoulli probability must lie in [0, 1], got {prob}"));
    }
    Ok(rng.uniform() < prob)
}
