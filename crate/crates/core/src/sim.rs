//! Data generators and model lists for the three simulation studies.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::combine::AnalysisModel;
use crate::condmodels::{ConditionalModelSpec, Family, LinearPrior, Term};
use crate::data::{bivariate_pattern, mcar_mask, BivariatePattern, ColumnKind, DataMatrix};
use crate::error::invalid;
use crate::rng::{draw_bernoulli, MvnFactor, RngStream};
use crate::Result;

/// Block sizes of the bivariate study.
pub const EXP1_PATTERN: BivariatePattern = BivariatePattern::new(200, 80, 80);
/// Observation count and MCAR rate of the seven-covariate study.
pub const EXP2_N: usize = 1000;
pub const MCAR_RATE: f64 = 0.3;
/// Coefficients of y on (1, x₁, ..., x₇).
pub const EXP2_COEFFICIENTS: [f64; 8] = [-2.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
pub const EXP2_CORRELATION: f64 = 0.4;
pub const EXP3_N: usize = 2000;
pub const EXP3_P_Y1: f64 = 0.45;
pub const EXP3_P_Y2: f64 = 0.65;
pub const EXP3_SHIFT_Y1: f64 = 1.0;
pub const EXP3_SHIFT_Y2: f64 = 0.5;
pub const EXP3_CORRELATION: f64 = 0.2;
/// Coefficients of x₁ on (y₁, y₂, x₂, ..., x₅) implied by the generator.
pub const EXP3_TRUTH: [f64; 6] = [0.5, 0.25, 0.125, 0.125, 0.125, 0.125];

fn names(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |j| alloc::format!("{prefix}{j}"))
}

fn equicorrelated(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

fn check_size(n: usize, min: usize, what: &str) -> Result<()> {
    if n <= min {
        return Err(invalid!("{what} needs more than {min} rows, got {n}"));
    }
    Ok(())
}

/// Independent standard normal (x, y), all observed.
pub fn gen_exp1_complete(n: usize, rng: &mut RngStream) -> Result<DataMatrix> {
    if n == 0 {
        return Err(invalid!("sample size must be positive"));
    }
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        x.push(rng.standard_normal());
        y.push(rng.standard_normal());
    }
    DataMatrix::from_columns(alloc::vec!["x".into(), "y".into()], alloc::vec![x, y])
}

/// Bivariate data with the block pattern: y missing in block b, x in block c.
pub fn gen_exp1(n_a: usize, n_b: usize, n_c: usize, rng: &mut RngStream) -> Result<DataMatrix> {
    if n_a == 0 || n_b == 0 || n_c == 0 {
        return Err(invalid!("block sizes must be positive, got ({n_a}, {n_b}, {n_c})"));
    }
    let pat = BivariatePattern::new(n_a, n_b, n_c);
    bivariate_pattern(&pat, &gen_exp1_complete(pat.n_rows(), rng)?)
}

/// Columns y, x1..x7 with no missing cells.
pub fn gen_exp2_complete(n: usize, rng: &mut RngStream) -> Result<DataMatrix> {
    check_size(n, 0, "the seven-covariate study")?;
    let factor = MvnFactor::new(&equicorrelated(7, EXP2_CORRELATION))?;
    let zero = DVector::zeros(7);
    let mut cols = alloc::vec![Vec::with_capacity(n); 8];
    for _ in 0..n {
        let x = factor.sample(&zero, rng)?;
        let mean = EXP2_COEFFICIENTS[0] + (0..7).map(|k| EXP2_COEFFICIENTS[k + 1] * x[k]).sum::<f64>();
        cols[0].push(mean + rng.standard_normal());
        for k in 0..7 {
            cols[k + 1].push(x[k]);
        }
    }
    let mut nm = alloc::vec![String::from("y")];
    nm.extend(names("x", 7));
    DataMatrix::from_columns(nm, cols)
}

/// The seven-covariate study with 30% of cells missing completely at random.
pub fn gen_exp2(n: usize, rng: &mut RngStream) -> Result<DataMatrix> {
    gen_exp2_with_rate(n, MCAR_RATE, rng)
}

/// [`gen_exp2`] with a different MCAR rate.
pub fn gen_exp2_with_rate(n: usize, rate: f64, rng: &mut RngStream) -> Result<DataMatrix> {
    check_size(n, 50, "the seven-covariate study")?;
    let complete = gen_exp2_complete(n, &mut rng.substream("values"))?;
    mcar_mask(&complete, rate, &mut rng.substream("mask"))
}

/// Columns y1, y2 (binary), x1..x5 with no missing cells.
pub fn gen_exp3_complete(n: usize, rng: &mut RngStream) -> Result<DataMatrix> {
    check_size(n, 0, "the mixed binary/continuous study")?;
    let factor = MvnFactor::new(&equicorrelated(5, EXP3_CORRELATION))?;
    let mut cols = alloc::vec![Vec::with_capacity(n); 7];
    for _ in 0..n {
        let y1 = draw_bernoulli(EXP3_P_Y1, rng)? as u8 as f64;
        let y2 = draw_bernoulli(EXP3_P_Y2, rng)? as u8 as f64;
        let shift = EXP3_SHIFT_Y1 * y1 + EXP3_SHIFT_Y2 * y2;
        let x = factor.sample(&DVector::from_element(5, shift), rng)?;
        cols[0].push(y1);
        cols[1].push(y2);
        for k in 0..5 {
            cols[k + 2].push(x[k]);
        }
    }
    let mut nm = alloc::vec![String::from("y1"), String::from("y2")];
    nm.extend(names("x", 5));
    let kinds = [alloc::vec![ColumnKind::Binary; 2], alloc::vec![ColumnKind::Continuous; 5]].concat();
    DataMatrix::from_columns(nm, cols)?.with_kinds(kinds)
}

/// The mixed study with 30% MCAR cells.
pub fn gen_exp3(n: usize, rng: &mut RngStream) -> Result<DataMatrix> {
    gen_exp3_with_rate(n, MCAR_RATE, rng)
}

/// [`gen_exp3`] with a different MCAR rate.
pub fn gen_exp3_with_rate(n: usize, rate: f64, rng: &mut RngStream) -> Result<DataMatrix> {
    check_size(n, 100, "the mixed binary/continuous study")?;
    let complete = gen_exp3_complete(n, &mut rng.substream("values"))?;
    mcar_mask(&complete, rate, &mut rng.substream("mask"))
}

/// Intercept plus main effects of every other column for each column:
/// logistic for binary columns, linear (under `prior`) otherwise.
pub fn main_effects_specs(dm: &DataMatrix, prior: LinearPrior) -> Vec<ConditionalModelSpec> {
    let p = dm.n_cols();
    (0..p)
        .map(|j| {
            let family = match dm.kinds()[j] {
                ColumnKind::Binary => Family::Logistic,
                ColumnKind::Continuous => Family::Linear,
            };
            ConditionalModelSpec::main_effects(j, p, family, prior)
        })
        .collect()
}

/// Imputation models of the mixed study (columns y1, y2, x1..x5): logistic
/// models for y1 and y2 with two interactions each with the other binary,
/// and main-effects linear models for the x's.
pub fn exp3_specs() -> Vec<ConditionalModelSpec> {
    let (y1, y2, x1, x2) = (0, 1, 2, 3);
    let xs = || (2..7).map(Term::Main);
    let mut t1 = alloc::vec![Term::Intercept, Term::Main(y2)];
    t1.extend(xs());
    t1.extend([Term::Interaction(x1, y2), Term::Interaction(x2, y2)]);
    let mut t2 = alloc::vec![Term::Intercept, Term::Main(y1)];
    t2.extend(xs());
    t2.extend([Term::Interaction(x1, y1), Term::Interaction(x2, y1)]);
    let mut specs = alloc::vec![ConditionalModelSpec::logistic(y1, t1), ConditionalModelSpec::logistic(y2, t2)];
    specs.extend((2..7).map(|j| ConditionalModelSpec::main_effects(j, 7, Family::Linear, LinearPrior::Jeffreys)));
    specs
}

/// Regression of x1 on (1, y1, y2, x2..x5); its slopes target [`EXP3_TRUTH`].
pub fn exp3_analysis() -> AnalysisModel {
    let mut terms = alloc::vec![Term::Intercept, Term::Main(0), Term::Main(1)];
    terms.extend((3..7).map(Term::Main));
    AnalysisModel::Linear { target: 2, terms }
}

/// Regression of y on (1, x1..x7).
pub fn exp2_analysis() -> AnalysisModel {
    let mut terms = alloc::vec![Term::Intercept];
    terms.extend((1..8).map(Term::Main));
    AnalysisModel::Linear { target: 0, terms }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp1_shape_and_pattern() {
        let dm = gen_exp1(20, 8, 8, &mut RngStream::new(1)).unwrap();
        assert!(BivariatePattern::new(20, 8, 8).matches(&dm));
        assert_eq!(dm, gen_exp1(20, 8, 8, &mut RngStream::new(1)).unwrap());
        assert!(gen_exp1(0, 8, 8, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn size_checks() {
        assert!(gen_exp2(50, &mut RngStream::new(1)).is_err());
        assert!(gen_exp3(100, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn exp3_specs_are_valid() {
        let dm = gen_exp3(200, &mut RngStream::new(2)).unwrap();
        crate::chains::check_specs(&dm, &exp3_specs()).unwrap();
        assert_eq!(dm.kinds()[0], ColumnKind::Binary);
        assert_eq!(exp3_specs()[0].terms.len(), 9);
    }
}
