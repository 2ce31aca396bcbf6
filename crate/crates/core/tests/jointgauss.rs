use imputekit_core::chains::{init_state, run_parallel_chains, ChainConfig};
use imputekit_core::condmodels::logistic_mle;
use imputekit_core::data::{BivariatePattern, DataMatrix};
use imputekit_core::diagnostics::{ks_two_sample, rhat, BetaMonitor};
use imputekit_core::jointgauss::*;
use imputekit_core::sim::gen_exp1;
use imputekit_core::RngStream;
use nalgebra::{DMatrix, DVector};

/// The Bernoulli/normal map as typeset: slope β₁/(2σ²), intercept
/// logit p - β₁²/(2σ²).
fn printed_map(p: f64, beta1: f64, sigma2: f64) -> (f64, f64) {
    ((p / (1.0 - p)).ln() - beta1 * beta1 / (2.0 * sigma2), beta1 / (2.0 * sigma2))
}

#[test]
fn logit_map_matches_simulated_joint_model() {
    let (p, b0, b1, s2): (f64, f64, f64, f64) = (0.4, 0.5, 1.0, 1.5);
    let mut rng = RngStream::new(31);
    let n = 1_000_000;
    let mut x2 = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    for _ in 0..n {
        let bit = if rng.uniform() < p { 1.0 } else { 0.0 };
        x1.push(bit);
        x2.push(b0 + b1 * bit + s2.sqrt() * rng.standard_normal());
    }
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x2[i] });
    let fit = logistic_mle(&x, &DVector::from_vec(x1)).unwrap();
    let cov = fit.covariance();
    let se = [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()];
    let (alpha, beta) = logit_compat_map(p, b0, b1, s2).unwrap();
    assert!((fit.beta[0] - alpha).abs() < 4.0 * se[0], "alpha {} vs {}", fit.beta[0], alpha);
    assert!((fit.beta[1] - beta).abs() < 4.0 * se[1], "beta {} vs {}", fit.beta[1], beta);
    // The typeset map is far outside the sampling error.
    let (pa, pb) = printed_map(p, b1, s2);
    assert!((fit.beta[0] - pa).abs() > 4.0 * se[0] || (fit.beta[1] - pb).abs() > 4.0 * se[1]);
}

#[test]
fn conditional_spec_matches_precision_matrix_oracle() {
    let p = 7;
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.4 });
    let mu = DVector::from_fn(p, |i, _| i as f64 * 0.3 - 1.0);
    let params = GaussParams::new(mu.clone(), sigma.clone()).unwrap();
    let prec = sigma.try_inverse().unwrap();
    for j in 0..p {
        let c = conditional_spec(&params, j).unwrap();
        assert!((c.residual_var - 1.0 / prec[(j, j)]).abs() < 1e-10);
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        for (idx, &k) in others.iter().enumerate() {
            assert!((c.coefficients[idx] + prec[(j, k)] / prec[(j, j)]).abs() < 1e-10);
        }
    }
}

#[test]
fn niw_sigma_draws_have_inverse_wishart_mean() {
    let data = [0.3, -1.2, 0.8, 2.1, -0.4, 0.0, 1.1, -0.7, 0.5, 1.9, -2.2, 0.4, 0.9, -0.1, 1.4, -1.0, 0.2, 0.6, -0.3, 1.7];
    let n = data.len();
    let x = DMatrix::from_column_slice(n, 1, &data);
    let xbar = data.iter().sum::<f64>() / n as f64;
    let ss: f64 = data.iter().map(|v| (v - xbar) * (v - xbar)).sum();
    let target = ss / (n as f64 - 3.0);
    let mut rng = RngStream::new(32);
    let m = 100_000;
    let mut s = Vec::with_capacity(m);
    let mut mus = Vec::with_capacity(m);
    for _ in 0..m {
        let g = niw_posterior_draw(&x, &mut rng).unwrap();
        s.push(g.sigma[(0, 0)]);
        mus.push(g.mu[0]);
    }
    let mean = s.iter().sum::<f64>() / m as f64;
    let sd = (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64).sqrt();
    assert!((mean - target).abs() < 3.0 * sd / (m as f64).sqrt(), "{mean} vs {target}");
    let mu_mean = mus.iter().sum::<f64>() / m as f64;
    let mu_sd = (mus.iter().map(|v| (v - mu_mean) * (v - mu_mean)).sum::<f64>() / (m - 1) as f64).sqrt();
    assert!((mu_mean - xbar).abs() < 4.0 * mu_sd / (m as f64).sqrt());
}

#[test]
fn imputations_under_independence_follow_the_marginal() {
    let rows = vec![vec![None, Some(0.3)], vec![Some(1.0), Some(2.0)], vec![Some(-1.0), Some(0.1)]];
    let dm = DataMatrix::from_rows(vec!["x".into(), "y".into()], &rows, None).unwrap();
    let mut st = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let params = GaussParams::new(DVector::from_vec(vec![1.0, -1.0]), DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap();
    let mut rng = RngStream::new(33);
    let n = 100_000;
    let mut imputed = Vec::with_capacity(n);
    for _ in 0..n {
        da_impute(&mut st, &params, &mut rng).unwrap();
        imputed.push(st.data().get(0, 0).unwrap());
    }
    let mut oracle = RngStream::new(34);
    let reference: Vec<f64> = (0..n).map(|_| 1.0 + 2.0f64.sqrt() * oracle.standard_normal()).collect();
    assert!(ks_two_sample(&imputed, &reference).unwrap().statistic < 0.01);
}

#[test]
fn fully_missing_row_is_drawn_from_the_joint() {
    let rows = vec![vec![None, None], vec![Some(1.0), Some(2.0)], vec![Some(-1.0), Some(0.1)]];
    let dm = DataMatrix::from_rows(vec!["x".into(), "y".into()], &rows, None).unwrap();
    let mut st = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let params = GaussParams::new(DVector::from_vec(vec![3.0, -3.0]), DMatrix::identity(2, 2) * 1e-6).unwrap();
    da_impute(&mut st, &params, &mut RngStream::new(2)).unwrap();
    assert!((st.data().get(0, 0).unwrap() - 3.0).abs() < 0.01);
    assert!((st.data().get(0, 1).unwrap() + 3.0).abs() < 0.01);
}

#[test]
fn em_on_block_pattern_finds_no_correlation() {
    let dm = gen_exp1(200, 80, 80, &mut RngStream::new(35)).unwrap();
    let fit = em_observed_mle(&dm).unwrap();
    assert!(fit.converged);
    let s = &fit.params.sigma;
    let rho = s[(0, 1)] / (s[(0, 0)] * s[(1, 1)]).sqrt();
    assert!(rho.abs() < 4.0 / 200f64.sqrt(), "rho {rho}");
    assert!(fit.loglik.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn em_likelihood_never_decreases_on_mcar_data() {
    let dm = imputekit_core::sim::gen_exp2(200, &mut RngStream::new(36)).unwrap();
    let fit = em_observed_mle(&dm).unwrap();
    assert!(fit.loglik.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    assert!(fit.converged);
}

#[test]
fn bivariate_gibbs_without_missing_y_only_refreshes_y_parameters() {
    let pat = BivariatePattern::new(30, 0, 10);
    let full = imputekit_core::sim::gen_exp1_complete(40, &mut RngStream::new(37)).unwrap();
    let dm = imputekit_core::data::bivariate_pattern(&pat, &full).unwrap();
    let mut st = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let y_before: Vec<f64> = (0..40).map(|i| st.data().get(i, 1).unwrap()).collect();
    bivariate_gibbs_sweep(&mut st, &pat, &mut RngStream::new(2)).unwrap();
    let y_after: Vec<f64> = (0..40).map(|i| st.data().get(i, 1).unwrap()).collect();
    assert_eq!(y_before, y_after);
    assert!(st.draws[1].is_some());
}

#[test]
fn bivariate_gibbs_chains_agree_on_beta_x() {
    let pat = BivariatePattern::new(200, 80, 80);
    let dm = gen_exp1(200, 80, 80, &mut RngStream::new(38)).unwrap();
    let cfg = ChainConfig { n_iter: 5_500, burn_in: 500, thin: 1, n_chains: 4, seed: 0 };
    let mon = BetaMonitor { pattern: pat };
    let traces = run_parallel_chains(&dm, |_| BivariateGibbsSweep { pattern: pat }, &cfg, &[&mon], &RngStream::new(39)).unwrap();
    let r = rhat(&traces, "beta_x").unwrap().value().unwrap();
    assert!(r < 1.01, "R-hat {r}");
}

#[test]
fn zero_mean_posterior_matches_flat_prior_mean() {
    // p = 1: Σ ~ IW(n - 2, Σx²) has mean Σx² / (n - 4).
    let data = [0.5, -1.0, 1.5, 0.2, -0.8, 1.1, -0.3, 0.9];
    let n = data.len();
    let x = DMatrix::from_column_slice(n, 1, &data);
    let ss: f64 = data.iter().map(|v| v * v).sum();
    let mut rng = RngStream::new(40);
    let m = 100_000;
    let d: Vec<f64> = (0..m).map(|_| zero_mean_posterior_draw(&x, &mut rng).unwrap().sigma[(0, 0)]).collect();
    let mean = d.iter().sum::<f64>() / m as f64;
    let sd = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64).sqrt();
    assert!((mean - ss / (n as f64 - 4.0)).abs() < 4.0 * sd / (m as f64).sqrt());
}

#[test]
fn conditional_jeffreys_sigma_draws_have_inverse_wishart_mean() {
    // Σ ~ IW(n - p, S): E Σ = S / (n - 2p - 1).
    let mut rng = RngStream::new(77);
    let (n, p) = (40, 3);
    let x = DMatrix::from_fn(n, p, |_, _| rng.standard_normal());
    let xc = {
        let mut c = x.clone();
        for mut col in c.column_iter_mut() {
            let m = col.sum() / n as f64;
            col.add_scalar_mut(-m);
        }
        c
    };
    let s = xc.tr_mul(&xc);
    let expect = &s / (n - 2 * p - 1) as f64;
    let draws = 20_000;
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut sq = DMatrix::<f64>::zeros(p, p);
    for _ in 0..draws {
        let g = joint_posterior_draw(&x, JointPrior::ConditionalJeffreys, &mut rng).unwrap();
        sum += &g.sigma;
        sq += g.sigma.component_mul(&g.sigma);
    }
    for i in 0..p {
        for j in 0..p {
            let mean = sum[(i, j)] / draws as f64;
            let se = ((sq[(i, j)] / draws as f64 - mean * mean) / draws as f64).sqrt();
            assert!((mean - expect[(i, j)]).abs() < 4.0 * se, "({i},{j}) {mean} vs {}", expect[(i, j)]);
        }
    }
}

#[test]
fn niw_draw_is_the_default_joint_prior() {
    let mut a = RngStream::new(78);
    let x = DMatrix::from_fn(30, 2, |_, _| a.standard_normal());
    let one = niw_posterior_draw(&x, &mut RngStream::new(1)).unwrap();
    let two = joint_posterior_draw(&x, JointPrior::default(), &mut RngStream::new(1)).unwrap();
    assert_eq!(one, two);
}
