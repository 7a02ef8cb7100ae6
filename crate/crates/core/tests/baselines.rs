use bsv::baselines::{
    mc_estimate, pmc_estimate, run_selection_baseline, select_grid, select_lhs, select_sobol, select_uniform, PmcConfig,
    Selector,
};
use bsv::bsv::BsvConfig;
use bsv::estimator::estimate_pfail_generic;
use bsv::grid::ProposalGrid;
use bsv::sobol::Sobol;
use bsv::space::{DesignSpace, Interval};
use bsv::systems::{ConstantSystem, FnSystem, Problem, ToyKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Unscrambled Sobol points (index counted from the origin), as produced by
// scipy.stats.qmc.Sobol(d=10, scramble=False).
const SOBOL_REF: &[(u64, [f64; 10])] = &[
    (1, [0.5; 10]),
    (2, [0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75]),
    (4, [0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625]),
    (8, [0.1875, 0.3125, 0.9375, 0.4375, 0.5625, 0.3125, 0.4375, 0.9375, 0.9375, 0.3125]),
    (9, [0.6875, 0.8125, 0.4375, 0.9375, 0.0625, 0.8125, 0.9375, 0.4375, 0.4375, 0.8125]),
    (
        100,
        [0.4140625, 0.2578125, 0.7734375, 0.7265625, 0.8828125, 0.7421875, 0.0234375, 0.4765625, 0.6328125, 0.6953125],
    ),
    (
        511,
        [
            0.001953125,
            0.501953125,
            0.408203125,
            0.845703125,
            0.353515625,
            0.876953125,
            0.744140625,
            0.462890625,
            0.220703125,
            0.201171875,
        ],
    ),
    (
        1000,
        [
            0.2197265625,
            0.0966796875,
            0.5185546875,
            0.6767578125,
            0.2802734375,
            0.9072265625,
            0.0458984375,
            0.8994140625,
            0.5009765625,
            0.0693359375,
        ],
    ),
];

#[test]
fn sobol_matches_reference_points() {
    let s = Sobol::new(10).unwrap();
    for (i, expected) in SOBOL_REF {
        assert_eq!(s.point(*i), expected.to_vec(), "point {i}");
    }
}

#[test]
fn sobol_projections_are_stratified() {
    for k in 1..=9u32 {
        let n = 1usize << k;
        let mut s = Sobol::new(10).unwrap();
        let pts: Vec<Vec<f64>> = (1..n).map(|_| s.next_point()).collect();
        for d in 0..10 {
            let mut got: Vec<u64> = pts.iter().map(|p| (p[d] * n as f64) as u64).collect();
            got.sort_unstable();
            let want: Vec<u64> = (1..n as u64).collect();
            assert_eq!(got, want, "k={k} axis {d}");
        }
    }
}

#[test]
fn selection_counts_and_box() {
    let space = DesignSpace::new(vec![Interval::new(-10.0, 5.0).unwrap(), Interval::new(0.0, 2.0).unwrap()]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for sel in Selector::all() {
        for count in [1, 2, 7, 64, 999] {
            let pts = sel.select(&space, count, &mut rng).unwrap();
            assert_eq!(pts.len(), count, "{sel}");
            assert!(pts.iter().all(|p| space.contains(p)), "{sel}");
        }
    }
    assert!(select_uniform(&space, 0, &mut rng).is_err());
}

#[test]
fn sobol_grid_first_points() {
    let unit = DesignSpace::new(vec![Interval::new(0.0, 1.0).unwrap(); 2]);
    let s = select_sobol(&unit, 3).unwrap();
    assert_eq!(s[1].0, vec![0.75, 0.25]);
    let g = select_grid(&unit, 5).unwrap();
    // 3 per axis, lexicographic, truncated
    assert_eq!(g[4].0, vec![0.5, 0.5]);
}

proptest! {
    #[test]
    fn lhs_one_point_per_stratum(count in 1usize..60, seed in 0u64..1000) {
        let space = DesignSpace::new(vec![Interval::new(0.0, 10.0).unwrap(), Interval::new(-1.0, 1.0).unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = select_lhs(&space, count, &mut rng).unwrap();
        for (d, b) in space.bounds.iter().enumerate() {
            let mut hits = vec![0usize; count];
            for p in &pts {
                let s = (((p[d] - b.lo) / b.width()) * count as f64).floor() as usize;
                hits[s.min(count - 1)] += 1;
            }
            prop_assert!(hits.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn snis_scale_invariant(ws in prop::collection::vec(0.01f64..10.0, 1..30), c in 0.01f64..100.0) {
        let v: Vec<f64> = ws.iter().enumerate().map(|(i, _)| (i % 2) as f64).collect();
        let snis = |w: &[f64]| w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        let scaled: Vec<f64> = ws.iter().map(|w| w * c).collect();
        prop_assert!((snis(&ws) - snis(&scaled)).abs() < 1e-12);
    }
}

#[test]
fn mc_running_mean_is_exact() {
    let p = Problem::toy(ToyKind::Squares);
    let mut calls = 0u32;
    let mut sys = FnSystem::binary("alternating", |_x: &[f64]| {
        calls += 1;
        (calls.is_multiple_of(3)) as u8 as f64
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = mc_estimate(&mut sys, &p.model, 30, &mut rng).unwrap();
    assert_eq!(r.history.len(), 30);
    for (i, h) in r.history.iter().enumerate() {
        let n = i + 1;
        assert_eq!(h.num_samples, n);
        assert_eq!(h.estimate, (n / 3) as f64 / n as f64);
    }
    assert_eq!(r.estimate, 10.0 / 30.0);
}

#[test]
fn constant_systems_under_mc_and_pmc() {
    let p = Problem::toy(ToyKind::Mixture);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fail = mc_estimate(&mut ConstantSystem { value: 1.0 }, &p.model, 100, &mut rng).unwrap();
    assert!(fail.history.iter().all(|h| h.estimate == 1.0));
    let safe = mc_estimate(&mut ConstantSystem { value: 0.0 }, &p.model, 100, &mut rng).unwrap();
    assert_eq!(safe.estimate, 0.0);

    let cfg = PmcConfig {
        max_iterations: 5,
        ..PmcConfig::default()
    };
    let r = pmc_estimate(&mut ConstantSystem { value: 1.0 }, &p.model, &cfg, &mut rng).unwrap();
    assert!((r.estimate - 1.0).abs() < 1e-12);
    assert_eq!(r.history.last().unwrap().num_samples, cfg.total_samples());
}

#[test]
fn pmc_first_iteration_is_monte_carlo() {
    let p = Problem::toy(ToyKind::Squares);
    let cfg = PmcConfig {
        max_iterations: 1,
        ..PmcConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = pmc_estimate(&mut p.system(), &p.model, &cfg, &mut rng).unwrap();
    let mean = r.records.iter().map(|r| r.y).sum::<f64>() / r.records.len() as f64;
    assert_eq!(r.records.len(), 50);
    assert!((r.estimate - mean).abs() < 1e-15);
    let ones = vec![1.0; 50];
    let ys: Vec<f64> = r.records.iter().map(|r| r.y).collect();
    assert!((estimate_pfail_generic(&ys, &ones, &ones).unwrap() - mean).abs() < 1e-15);
}

#[test]
fn pmc_full_schedule_total() {
    let p = Problem::toy(ToyKind::Squares);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = pmc_estimate(&mut p.system(), &p.model, &PmcConfig::default(), &mut rng).unwrap();
    assert_eq!(r.history.len(), 100);
    assert_eq!(r.history.last().unwrap().num_samples, 252_500);
    assert!(r.estimate > 0.0 && r.estimate < 1.0);
}

#[test]
fn selection_baseline_without_failures() {
    let p = Problem::toy(ToyKind::Representative);
    let grid = ProposalGrid::build_uniform(&p.model.space(), &p.model, 60).unwrap();
    // points far from the failure region only
    let pts: Vec<_> = (0..10).map(|i| vec![-10.0 + i as f64 * 0.1, -10.0].into()).collect();
    let r = run_selection_baseline(&mut p.system(), &p.model, &grid, &pts, &BsvConfig::new(1)).unwrap();
    assert!(r.failures.is_empty());
    assert!(r.most_likely_failure.is_none());
    assert!((0.0..=1.0).contains(&r.pfail_estimate));
    assert_eq!(r.records.len(), 10);
}

#[test]
fn mc_full_budget_within_three_standard_errors() {
    let p = Problem::toy(ToyKind::Representative);
    let g = ProposalGrid::build_uniform(&p.model.space(), &p.model, 500).unwrap();
    let truth = bsv::estimator::ground_truth_pfail(&mut p.system(), &g).unwrap();
    let n = PmcConfig::default().total_samples();
    let se = (truth * (1.0 - truth) / n as f64).sqrt();
    for seed in 1..=3 {
        let r = mc_estimate(&mut p.system(), &p.model, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(r.records.len(), n);
        assert!((r.estimate - truth).abs() <= 3.0 * se, "seed {seed}: {} vs {truth}", r.estimate);
    }
}

#[test]
fn pmc_with_covering_kernels_is_consistent() {
    // kernels as wide as the box keep q > 0 wherever p > 0
    let p = Problem::toy(ToyKind::Squares);
    let g = ProposalGrid::build_uniform(&p.model.space(), &p.model, 500).unwrap();
    let truth = bsv::estimator::ground_truth_pfail(&mut p.system(), &g).unwrap();
    let cfg = PmcConfig { kernel_bandwidth: 1.0, ..PmcConfig::default() };
    let errs: Vec<f64> = (1..=3)
        .map(|seed| {
            let r = pmc_estimate(&mut p.system(), &p.model, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            (r.estimate - truth).abs() / truth
        })
        .collect();
    assert!(errs.iter().all(|&e| e < 0.05), "{errs:?}");
}
