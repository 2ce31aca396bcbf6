use imputekit_core::chains::*;
use imputekit_core::condmodels::{ConditionalModelSpec, LinearPrior, Term};
use imputekit_core::data::{BivariatePattern, DataMatrix};
use imputekit_core::diagnostics::BetaMonitor;
use imputekit_core::jointgauss::{BivariateGibbsSweep, DataAugmentationSweep, ZeroMeanDaSweep};
use imputekit_core::sim::{exp3_specs, gen_exp1, gen_exp2, gen_exp3, main_effects_specs};
use imputekit_core::RngStream;
use proptest::prelude::*;

fn observed_bits(dm: &DataMatrix) -> Vec<Option<u64>> {
    (0..dm.n_cols()).flat_map(|j| (0..dm.n_rows()).map(move |i| dm.get(i, j).map(f64::to_bits))).collect()
}

fn preserved(state: &ChainState, original: &DataMatrix) -> bool {
    (0..original.n_cols()).all(|j| {
        (0..original.n_rows()).all(|i| match original.get(i, j) {
            Some(v) => state.data().get(i, j).map(f64::to_bits) == Some(v.to_bits()),
            None => true,
        })
    })
}

fn sweeps_preserve(dm: &DataMatrix, sweep: &mut dyn Sweep, n: usize) {
    let mut st = init_state(dm, &mut RngStream::new(1)).unwrap();
    let mut rng = RngStream::new(2);
    for _ in 0..n {
        sweep.sweep(&mut st, &mut rng).unwrap();
        assert!(preserved(&st, dm));
    }
    assert_eq!(st.original(), *dm);
}

#[test]
fn every_engine_preserves_observed_cells() {
    let pat = BivariatePattern::new(40, 15, 15);
    let dm1 = gen_exp1(40, 15, 15, &mut RngStream::new(3)).unwrap();
    let specs = vec![
        ConditionalModelSpec::linear(0, vec![Term::Main(1)], LinearPrior::Jeffreys),
        ConditionalModelSpec::linear(1, vec![Term::Main(0)], LinearPrior::Jeffreys),
    ];
    sweeps_preserve(&dm1, &mut IterativeSweep::new(&dm1, specs).unwrap(), 200);
    sweeps_preserve(&dm1, &mut BivariateGibbsSweep { pattern: pat }, 200);
    sweeps_preserve(&dm1, &mut ZeroMeanDaSweep, 200);
    let dm2 = gen_exp2(120, &mut RngStream::new(4)).unwrap();
    sweeps_preserve(&dm2, &mut DataAugmentationSweep::default(), 100);
    let dm3 = gen_exp3(300, &mut RngStream::new(5)).unwrap();
    sweeps_preserve(&dm3, &mut IterativeSweep::new(&dm3, exp3_specs()).unwrap(), 30);
}

#[test]
fn binary_imputations_stay_binary() {
    let dm = gen_exp3(300, &mut RngStream::new(6)).unwrap();
    let mut st = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let mut sw = IterativeSweep::new(&dm, main_effects_specs(&dm, LinearPrior::Jeffreys)).unwrap();
    let mut rng = RngStream::new(7);
    for _ in 0..10 {
        sw.sweep(&mut st, &mut rng).unwrap();
    }
    for j in 0..2 {
        assert!((0..300).all(|i| matches!(st.data().get(i, j), Some(v) if v == 0.0 || v == 1.0)));
    }
}

#[test]
fn resuming_from_a_checkpoint_matches_one_long_run() {
    let pat = BivariatePattern::new(30, 10, 10);
    let dm = gen_exp1(30, 10, 10, &mut RngStream::new(8)).unwrap();
    let mon = BetaMonitor { pattern: pat };
    let cfg = |n_iter| ChainConfig { n_iter, burn_in: 5, thin: 2, n_chains: 1, seed: 0 };
    let mut sweep = ZeroMeanDaSweep;

    let mut st = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let mut rng = RngStream::new(9);
    let whole = run_chain(&mut st, &mut sweep, &cfg(40), &[&mon], &mut rng, 0).unwrap();

    let mut st2 = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let mut rng2 = RngStream::new(9);
    let first = run_chain(&mut st2, &mut sweep, &cfg(17), &[&mon], &mut rng2, 0).unwrap();
    let (mut st3, mut rng3) = st2.checkpoint(&rng2).restore().unwrap();
    let second = run_chain(&mut st3, &mut sweep, &cfg(40), &[&mon], &mut rng3, 0).unwrap();

    let mut iters = first.iters.clone();
    iters.extend(&second.iters);
    assert_eq!(iters, whole.iters);
    for s in 0..2 {
        let mut v = first.values[s].clone();
        v.extend(&second.values[s]);
        assert_eq!(v, whole.values[s]);
    }
    assert_eq!(st3.data(), st.data());
}

#[test]
fn chain_order_does_not_change_traces() {
    let pat = BivariatePattern::new(30, 10, 10);
    let dm = gen_exp1(30, 10, 10, &mut RngStream::new(10)).unwrap();
    let mon = BetaMonitor { pattern: pat };
    let cfg = ChainConfig { n_iter: 30, burn_in: 10, thin: 1, n_chains: 3, seed: 0 };
    let root = RngStream::new(11);
    let all = run_parallel_chains(&dm, |_| BivariateGibbsSweep { pattern: pat }, &cfg, &[&mon], &root).unwrap();
    for c in (0..3).rev() {
        let one = run_one_chain(&dm, &mut BivariateGibbsSweep { pattern: pat }, &cfg, &[&mon], &root, c).unwrap();
        assert_eq!(one, all.chains[c]);
    }
    assert_ne!(all.chains[0].values, all.chains[1].values);
}

#[test]
fn collect_imputations_keeps_every_thinned_state() {
    let dm = gen_exp1(30, 10, 10, &mut RngStream::new(12)).unwrap();
    let mut st = init_state(&dm, &mut RngStream::new(1)).unwrap();
    let imps = collect_imputations(&mut st, &mut ZeroMeanDaSweep, 5, 3, 4, &mut RngStream::new(2)).unwrap();
    assert_eq!(imps.len(), 4);
    assert_eq!(st.iter, 5 + 12);
    assert!(imps.iter().all(DataMatrix::is_complete));
    assert_ne!(imps[0], imps[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn iterative_sweeps_never_touch_observed_cells(seed in 0u64..10_000, n_b in 5usize..20, n_c in 5usize..20) {
        let dm = gen_exp1(25, n_b, n_c, &mut RngStream::new(seed)).unwrap();
        let before = observed_bits(&dm);
        let specs = vec![
            ConditionalModelSpec::linear(0, vec![Term::Intercept, Term::Main(1)], LinearPrior::Flat),
            ConditionalModelSpec::linear(1, vec![Term::Intercept, Term::Main(0)], LinearPrior::Jeffreys),
        ];
        let mut st = init_state(&dm, &mut RngStream::new(seed + 1)).unwrap();
        let mut rng = RngStream::new(seed + 2);
        for _ in 0..10 {
            iterative_sweep(&mut st, &specs, &mut rng).unwrap();
        }
        prop_assert_eq!(observed_bits(&st.original()), before);
        prop_assert!(preserved(&st, &dm));
    }
}
