use bsv::estimator::{estimate_pfail, estimate_pfail_generic, ground_truth_pfail, true_labels, weighted_mean, EstimateMode};
use bsv::field::SurrogateField;
use bsv::gp::LinkParams;
use bsv::grid::ProposalGrid;
use bsv::operational::{Distribution, OperationalModel, OperationalParameter};
use bsv::systems::{booth, himmelblau, rwd_standin_fails, ConstantSystem, Problem, ToyKind, SQUARES};
use proptest::prelude::*;

fn gauss(x: f64, m: f64, s: f64) -> f64 {
    (-0.5 * ((x - m) / s).powi(2)).exp()
}

/// Brute-force likelihood-weighted failure probability on an n×n lattice,
/// with unnormalized per-axis density shapes (normalizers cancel).
fn sweep(lo: [f64; 2], hi: [f64; 2], n: usize, px: impl Fn(f64) -> f64, py: impl Fn(f64) -> f64, fail: impl Fn(f64, f64) -> bool) -> f64 {
    let axis = |d: usize| -> Vec<f64> {
        (0..n)
            .map(|i| if i + 1 == n { hi[d] } else { lo[d] + i as f64 * (hi[d] - lo[d]) / (n - 1) as f64 })
            .collect()
    };
    let (ax, ay) = (axis(0), axis(1));
    let (mut num, mut den) = (0.0, 0.0);
    for &x in &ax {
        for &y in &ay {
            let w = px(x) * py(y);
            den += w;
            if fail(x, y) {
                num += w;
            }
        }
    }
    num / den
}

fn grid_for(kind: ToyKind) -> (Problem, ProposalGrid) {
    let p = Problem::toy(kind);
    let g = ProposalGrid::build_uniform(&p.model.space(), &p.model, 500).unwrap();
    (p, g)
}

fn assert_rel(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol * b.abs(), "{a:e} vs {b:e}");
}

#[test]
fn ground_truth_matches_brute_force_sweeps() {
    let gmm = |v: f64| gauss(v, 2.0, 1.0) + gauss(v, -2.0, 1.0);
    let cases: Vec<(ToyKind, f64)> = vec![
        (
            ToyKind::Representative,
            sweep([-10.0; 2], [5.0; 2], 500, |x| gauss(x, -10.0, 1.5), |y| gauss(y, -2.5, 1.0), |x, y| booth(&[x, y]) <= 200.0),
        ),
        (
            ToyKind::Squares,
            sweep([0.0; 2], [10.0; 2], 500, |x| gauss(x, 5.0, 1.0), |y| gauss(y, 5.0, 1.0), |x, y| {
                SQUARES.iter().any(|s| x >= s[0] && x <= s[1] && y >= s[0] && y <= s[1])
            }),
        ),
        (
            ToyKind::Mixture,
            sweep([-6.0; 2], [6.0; 2], 500, gmm, gmm, |x, y| himmelblau(&[x, y]) <= 15.0),
        ),
        (
            ToyKind::ProbabilisticMixture,
            sweep([-6.0; 2], [6.0; 2], 500, |_| 1.0, |_| 1.0, |x, y| himmelblau(&[x, y]) <= 15.0),
        ),
        (
            ToyKind::RwdStandin,
            sweep([0.1, 1.0], [4.0, 7.0], 500, |d| gauss(d, 0.0, 1.0), |a| gauss(a, 3.0, 0.5), rwd_standin_fails),
        ),
    ];
    for (kind, oracle) in cases {
        let (p, g) = grid_for(kind);
        let truth = ground_truth_pfail(&mut p.system(), &g).unwrap();
        assert!(truth > 0.0, "{kind:?}");
        assert_rel(truth, oracle, 1e-10);
    }
}

#[test]
fn mixture_ground_truth_pinned() {
    let (p, g) = grid_for(ToyKind::Mixture);
    let truth = ground_truth_pfail(&mut p.system(), &g).unwrap();
    assert_rel(truth, 0.09733954915559963, 1e-12);
}

#[test]
fn hard_estimate_with_oracle_labels_is_ground_truth() {
    let (p, g) = grid_for(ToyKind::Representative);
    let labels = true_labels(&mut p.system(), &g).unwrap();
    let link = LinkParams::default();
    let field = SurrogateField {
        logit_mean: labels.iter().map(|&y| link.logit(y).unwrap()).collect(),
        logit_var: vec![0.0; labels.len()],
        link,
    };
    let est = estimate_pfail(&field, &g, EstimateMode::Hard).unwrap();
    assert_eq!(est, ground_truth_pfail(&mut p.system(), &g).unwrap());
}

#[test]
fn constant_systems() {
    let (_, g) = grid_for(ToyKind::Squares);
    assert_eq!(ground_truth_pfail(&mut ConstantSystem { value: 1.0 }, &g).unwrap(), 1.0);
    assert_eq!(ground_truth_pfail(&mut ConstantSystem { value: 0.0 }, &g).unwrap(), 0.0);
}

fn small_grid(model: &OperationalModel) -> ProposalGrid {
    ProposalGrid::build(&model.space(), model, &[2, 5]).unwrap()
}

fn model_with(trunc: f64) -> OperationalModel {
    OperationalModel::new(vec![
        OperationalParameter::new("a", (-1.0, 1.0), Distribution::truncated_normal(0.0, 1.0, -trunc, trunc)).unwrap(),
        OperationalParameter::new("b", (0.0, 3.0), Distribution::normal(1.0, 0.7)).unwrap(),
    ])
    .unwrap()
}

fn field_of(logits: &[f64]) -> SurrogateField {
    SurrogateField {
        logit_mean: logits.to_vec(),
        logit_var: vec![0.0; logits.len()],
        link: LinkParams::default(),
    }
}

proptest! {
    #[test]
    fn estimate_equals_brute_force_weighted_mean(logits in prop::collection::vec(-50.0f64..50.0, 10)) {
        let m = model_with(1.0);
        let g = small_grid(&m);
        let field = field_of(&logits);
        for mode in [EstimateMode::Hard, EstimateMode::Soft] {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..10 {
                let p = m.density(g.point(i)).unwrap();
                let f = field.mean(i);
                let v = match mode { EstimateMode::Hard => if f >= 0.5 { 1.0 } else { 0.0 }, EstimateMode::Soft => f };
                num += p * v;
                den += p;
            }
            prop_assert_eq!(estimate_pfail(&field, &g, mode).unwrap(), num / den);
        }
    }

    #[test]
    fn estimate_invariant_to_density_scale(logits in prop::collection::vec(-50.0f64..50.0, 10)) {
        // truncation bounds outside the box only rescale p
        let (g1, g2) = (small_grid(&model_with(1.0)), small_grid(&model_with(3.0)));
        let field = field_of(&logits);
        let (a, b) = (estimate_pfail(&field, &g1, EstimateMode::Soft).unwrap(), estimate_pfail(&field, &g2, EstimateMode::Soft).unwrap());
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn estimate_monotone(values in prop::collection::vec(0.0f64..=1.0, 10), bumps in prop::collection::vec(0.0f64..=1.0, 10)) {
        let g = small_grid(&model_with(1.0));
        let larger: Vec<f64> = values.iter().zip(&bumps).map(|(v, b)| (v + b).min(1.0)).collect();
        prop_assert!(weighted_mean(&g, &larger).unwrap() >= weighted_mean(&g, &values).unwrap());
    }

    #[test]
    fn hard_and_soft_agree_on_binary_surrogates(bits in prop::collection::vec(any::<bool>(), 10)) {
        let g = small_grid(&model_with(1.0));
        // saturated logits give f̂ of exactly 0 or 1
        let logits: Vec<f64> = bits.iter().map(|&b| if b { 1e3 } else { -1e3 }).collect();
        let field = field_of(&logits);
        prop_assert_eq!(estimate_pfail(&field, &g, EstimateMode::Hard).unwrap(), estimate_pfail(&field, &g, EstimateMode::Soft).unwrap());
    }
}

#[test]
fn trivial_fields() {
    let g = small_grid(&model_with(1.0));
    assert_eq!(estimate_pfail(&field_of(&[500.0; 10]), &g, EstimateMode::Hard).unwrap(), 1.0);
    let uniform = OperationalModel::new(vec![
        OperationalParameter::new("a", (0.0, 1.0), Distribution::uniform(0.0, 1.0)).unwrap(),
        OperationalParameter::new("b", (0.0, 1.0), Distribution::uniform(0.0, 1.0)).unwrap(),
    ])
    .unwrap();
    let gu = small_grid(&uniform);
    let half: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 50.0 } else { -50.0 }).collect();
    assert_eq!(estimate_pfail(&field_of(&half), &gu, EstimateMode::Hard).unwrap(), 0.5);
}

#[test]
fn generic_form_examples() {
    assert!((estimate_pfail_generic(&[1.0, 0.0], &[0.2, 0.8], &[0.5, 0.5]).unwrap() - 0.2).abs() < 1e-15);
}
