//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test -p imputekit --test acceptance`.

use std::time::{Duration, Instant};

use imputekit::core::chains::{collect_imputations, init_state, ChainState, IterativeSweep, Sweep};
use imputekit::core::combine::{fit_each, rubin_combine, stacked_mle, AnalysisModel};
use imputekit::core::condmodels::{logistic_mle, LinearPrior};
use imputekit::core::data::DataMatrix;
use imputekit::core::diagnostics::{
    binned_tv, ks_two_sample, loglog_slope, prior_sensitivity_curve, qq_points, rhat_of,
};
use imputekit::core::jointgauss::*;
use imputekit::core::sim::{exp3_specs, gen_exp1, gen_exp2, gen_exp3, main_effects_specs, EXP1_PATTERN};
use imputekit::core::RngStream;
use imputekit::experiment::{kernel_identity, run_experiment, ExperimentConfig, ExperimentId, ExperimentSummary};
use nalgebra::{DMatrix, DVector};

const SEED: u64 = 20_120_911;

const C1_SWEEPS: usize = 1000;
const C1_BUDGET: Duration = Duration::from_secs(1);

const C2_KS: f64 = 0.02;
const C2_TV: f64 = 0.05;
const C2_BUDGET: Duration = Duration::from_secs(120);

const C3_KS: f64 = 0.05;
const C3_BUDGET: Duration = Duration::from_secs(300);

const C4_SE_MULT: f64 = 3.0;
const C4_BUDGET: Duration = Duration::from_secs(900);

const C5_NS: [usize; 4] = [50, 200, 800, 3200];
const C5_NOISE: f64 = 0.01;
const C5_SLOPE: f64 = -0.2;
const C5_BUDGET: Duration = Duration::from_secs(120);

const C6_M: usize = 50;
const C6_BURN: usize = 1000;
const C6_THIN: usize = 10;
const C6_SE_MULT: f64 = 3.0;
const C6_BUDGET: Duration = Duration::from_secs(60);

const C7_SWEEPS: usize = 1000;
const C7_MAP_TOL: f64 = 1e-12;
const C7_RHAT: (f64, f64) = (0.99, 1.02);
const C7_ORACLE_DRAWS: usize = 1_000_000;
const C7_ORACLE_SE: f64 = 4.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(k: usize, name: &str, elapsed: Duration, o: &Outcome) -> bool {
    println!(
        "criterion {k} {name}: {} ({:.1}s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        o.detail
    );
    o.pass
}

fn run_default(id: ExperimentId) -> ExperimentSummary {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&ExperimentConfig::defaults(id), dir.path(), 0).unwrap()
}

fn c1() -> Outcome {
    let rng = RngStream::new(SEED);
    let dm = gen_exp1(200, 80, 80, &mut rng.substream("data")).unwrap();
    let t = Instant::now();
    let check = kernel_identity(&dm, &EXP1_PATTERN, C1_SWEEPS, &rng.substream("identity")).unwrap();
    let elapsed = t.elapsed();
    Outcome {
        pass: check.identical && elapsed < C1_BUDGET,
        detail: format!("identical={} first_mismatch={:?} sweeps={}", check.identical, check.first_mismatch, check.sweeps),
    }
}

fn comparison(id: ExperimentId, ks_max: f64, tv_max: Option<f64>, budget: Duration) -> Outcome {
    let t = Instant::now();
    let ExperimentSummary::Comparison(s) = run_default(id) else { unreachable!() };
    let elapsed = t.elapsed();
    let mut pass = s.failures.is_empty() && !s.statistics.is_empty() && elapsed < budget;
    let mut parts = Vec::new();
    for st in &s.statistics {
        pass &= st.ks < ks_max && tv_max.is_none_or(|m| st.tv < m);
        parts.push(match tv_max {
            Some(_) => format!("{} ks={:.4} tv={:.4}", st.statistic, st.ks, st.tv),
            None => format!("{} ks={:.4}", st.statistic, st.ks),
        });
    }
    for f in &s.failures {
        parts.push(format!("failed {}: {}", f.cell, f.error));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn c4() -> Outcome {
    let t = Instant::now();
    let ExperimentSummary::Replication(s) = run_default(ExperimentId::Exp3) else { unreachable!() };
    let elapsed = t.elapsed();
    let mut pass = s.failures.is_empty() && s.replicates_completed == 200 && elapsed < C4_BUDGET;
    let mut parts = vec![format!("replicates={}", s.replicates_completed)];
    for c in s.coefficients.iter().filter(|c| c.statistic != "intercept") {
        let z = (c.mean - c.truth) / c.mc_se;
        let covered = c.q025 <= c.truth && c.truth <= c.q975;
        pass &= z.abs() < C4_SE_MULT && covered;
        parts.push(format!("{} mean={:.4} truth={} z={:+.2} covered={}", c.statistic, c.mean, c.truth, z, covered));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn c5() -> Outcome {
    let pts = prior_sensitivity_curve(&C5_NS, &RngStream::new(SEED)).unwrap();
    let monotone = pts.windows(2).all(|w| w[1].tv.value <= w[0].tv.value + C5_NOISE);
    let slope = loglog_slope(&pts).unwrap();
    let tvs: Vec<String> = pts.iter().map(|p| format!("n={} tv={:.4}", p.n, p.tv.value)).collect();
    Outcome { pass: monotone && slope <= C5_SLOPE, detail: format!("{}; slope={slope:.3}", tvs.join(" ")) }
}

fn c6() -> Outcome {
    let rng = RngStream::new(SEED).substream("stacked");
    let dm = gen_exp1(200, 80, 80, &mut rng.substream("data")).unwrap();
    let em = em_observed_mle(&dm).unwrap();
    let mut state = init_state(&dm, &mut rng.substream("init")).unwrap();
    let mut sweep = IterativeSweep::new(&dm, main_effects_specs(&dm, LinearPrior::Jeffreys)).unwrap();
    let imputed = collect_imputations(&mut state, &mut sweep, C6_BURN, C6_THIN, C6_M, &mut rng.substream("sweep")).unwrap();
    let model = AnalysisModel::Gaussian { columns: vec![0, 1] };
    let stacked = stacked_mle(&imputed, &model).unwrap();
    let fits = fit_each(&imputed, &model).unwrap();
    let est: Vec<Vec<f64>> = fits.iter().map(|f| f.estimate.clone()).collect();
    let var: Vec<Vec<f64>> = fits.iter().map(|f| f.variance.clone()).collect();
    let combined = rubin_combine(&est, &var).unwrap();
    let p = &em.params;
    let target = [p.mu[0], p.mu[1], p.sigma[(0, 0)], p.sigma[(0, 1)], p.sigma[(1, 1)]];
    let names = ["mu_x", "mu_y", "s_xx", "s_xy", "s_yy"];
    let mut pass = em.converged;
    let mut parts = Vec::new();
    for k in 0..5 {
        let se = (combined.between_var[k] / C6_M as f64).sqrt();
        let z = (stacked[k] - target[k]) / se;
        pass &= z.abs() < C6_SE_MULT;
        parts.push(format!("{} stacked={:.4} em={:.4} z={:+.2}", names[k], stacked[k], target[k], z));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn preserves_observed(state: &mut ChainState, sweep: &mut dyn Sweep, rng: &mut RngStream) -> bool {
    let orig = state.original();
    for _ in 0..C7_SWEEPS {
        if sweep.sweep(state, rng).is_err() {
            return false;
        }
        let d = state.data();
        for j in 0..orig.n_cols() {
            for i in 0..orig.n_rows() {
                if let Some(v) = orig.get(i, j) {
                    if d.get(i, j).map(f64::to_bits) != Some(v.to_bits()) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn c7() -> Outcome {
    let root = RngStream::new(SEED).substream("properties");
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let bi = gen_exp1(200, 80, 80, &mut root.substream("bivariate")).unwrap();
    let mixed = gen_exp3(300, &mut root.substream("mixed")).unwrap();
    let engines: Vec<(&DataMatrix, Box<dyn Sweep>)> = vec![
        (&bi, Box::new(IterativeSweep::new(&bi, main_effects_specs(&bi, LinearPrior::Jeffreys)).unwrap())),
        (&mixed, Box::new(IterativeSweep::new(&mixed, exp3_specs()).unwrap())),
        (&bi, Box::new(DataAugmentationSweep::default())),
        (&bi, Box::new(ZeroMeanDaSweep)),
        (&bi, Box::new(BivariateGibbsSweep { pattern: EXP1_PATTERN })),
    ];
    let mut preserved = true;
    for (e, (dm, mut sweep)) in engines.into_iter().enumerate() {
        let r = root.substream_indexed("engine", e as u64);
        let mut state = init_state(dm, &mut r.substream("init")).unwrap();
        preserved &= preserves_observed(&mut state, &mut *sweep, &mut r.substream("sweep"));
    }
    checks.push(("observed cells", preserved));

    let mut maps = true;
    let mut agree = true;
    for (mx, sx, my, sy, rho) in [(0.0, 1.0, 0.0, 1.0, 0.0), (1.5, 2.0, -0.7, 0.5, 0.6), (-3.0, 0.1, 2.0, 9.0, -0.95)] {
        let p = BivariateParams { mu_x: mx, sigma_x2: sx, mu_y: my, sigma_y2: sy, rho };
        let close = |q: &BivariateParams| {
            [(q.mu_x, mx), (q.sigma_x2, sx), (q.mu_y, my), (q.sigma_y2, sy), (q.rho, rho)]
                .iter()
                .all(|(a, b)| (a - b).abs() <= C7_MAP_TOL * (1.0 + b.abs()))
        };
        maps &= close(&bivariate_from_t2(&t2_bivariate(&p).unwrap(), &t2_star(&p).unwrap()).unwrap());
        maps &= close(&bivariate_from_t1(&t1_bivariate(&p).unwrap(), &t1_star(&p).unwrap()).unwrap());
        let cov = rho * (sx * sy).sqrt();
        let g = GaussParams::new(DVector::from_vec(vec![mx, my]), DMatrix::from_row_slice(2, 2, &[sx, cov, cov, sy])).unwrap();
        let a = conditional_spec(&g, 1).unwrap();
        let b = t2_bivariate(&p).unwrap();
        agree &= (a.intercept - b.intercept).abs() <= C7_MAP_TOL
            && (a.coefficients[0] - b.coefficients[0]).abs() <= C7_MAP_TOL
            && (a.residual_var - b.residual_var).abs() <= C7_MAP_TOL;
    }
    checks.push(("t-map round trips", maps));
    checks.push(("conditional_spec = t2", agree));

    let r = rubin_combine(&[vec![1.0], vec![3.0]], &[vec![0.5], vec![0.5]]).unwrap();
    checks.push((
        "Rubin hand example",
        r.point[0] == 2.0 && r.within_var[0] == 0.5 && r.between_var[0] == 2.0 && r.total_var[0] == 3.5,
    ));

    let mut s = root.substream("identities");
    let a: Vec<f64> = (0..500).map(|_| s.standard_normal()).collect();
    let far: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
    let ident = ks_two_sample(&a, &a).unwrap().statistic == 0.0
        && binned_tv(&a, &a, 50).unwrap().value == 0.0
        && qq_points(&a, &a, 99).unwrap().iter().all(|p| p.q_left == p.q_right)
        && ks_two_sample(&a, &far).unwrap().statistic == 1.0
        && binned_tv(&a, &far, 50).unwrap().value == 1.0;
    checks.push(("KS/TV/Q-Q identities", ident));

    let em = em_observed_mle(&gen_exp2(1000, &mut root.substream("em")).unwrap()).unwrap();
    checks.push(("EM monotone", em.converged && em.loglik.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs())));

    let chains: Vec<Vec<f64>> = (0..4)
        .map(|c| {
            let mut r = root.substream_indexed("iid", c);
            (0..10_000).map(|_| r.standard_normal()).collect()
        })
        .collect();
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let rh = rhat_of(&refs).unwrap().value().unwrap_or(f64::NAN);
    checks.push(("R-hat iid", (C7_RHAT.0..=C7_RHAT.1).contains(&rh)));

    let (p, b0, b1, s2): (f64, f64, f64, f64) = (0.4, 0.5, 1.0, 1.5);
    let mut r = root.substream("oracle");
    let (mut bits, mut x2) = (Vec::with_capacity(C7_ORACLE_DRAWS), Vec::with_capacity(C7_ORACLE_DRAWS));
    for _ in 0..C7_ORACLE_DRAWS {
        let bit = if r.uniform() < p { 1.0 } else { 0.0 };
        bits.push(bit);
        x2.push(b0 + b1 * bit + s2.sqrt() * r.standard_normal());
    }
    let x = DMatrix::from_fn(C7_ORACLE_DRAWS, 2, |i, j| if j == 0 { 1.0 } else { x2[i] });
    let fit = logistic_mle(&x, &DVector::from_vec(bits)).unwrap();
    let cov = fit.covariance();
    let (alpha, beta) = logit_compat_map(p, b0, b1, s2).unwrap();
    let oracle = (fit.beta[0] - alpha).abs() < C7_ORACLE_SE * cov[(0, 0)].sqrt()
        && (fit.beta[1] - beta).abs() < C7_ORACLE_SE * cov[(1, 1)].sqrt();
    checks.push(("logistic map oracle", oracle));

    let pass = checks.iter().all(|c| c.1);
    let detail = checks.iter().map(|(n, ok)| format!("{n}={}", if *ok { "ok" } else { "FAIL" })).collect::<Vec<_>>().join("; ");
    Outcome { pass, detail: format!("{detail}; rhat={rh:.4}") }
}

fn main() {
    // Tolerate libtest flags passed by `cargo test`.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, &dyn Fn() -> Outcome); 7] = [
        ("kernel identity", &c1),
        ("bivariate iterative vs joint", &|| comparison(ExperimentId::Exp1, C2_KS, Some(C2_TV), C2_BUDGET)),
        ("seven-variable agreement", &|| comparison(ExperimentId::Exp2, C3_KS, None, C3_BUDGET)),
        ("replicated consistency", &c4),
        ("prior-sensitivity decay", &|| {
            let t = Instant::now();
            let mut o = c5();
            o.pass &= t.elapsed() < C5_BUDGET;
            o
        }),
        ("stacked vs observed-data MLE", &|| {
            let t = Instant::now();
            let mut o = c6();
            o.pass &= t.elapsed() < C6_BUDGET;
            o
        }),
        ("property suites", &c7),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|s| !name.contains(s) && s != (k + 1).to_string()) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        if !report(k + 1, name, t.elapsed(), &o) {
            failed += 1;
        }
    }
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
