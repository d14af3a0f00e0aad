use proptest::prelude::*;

use wrinkle::cascade::build_cascade;
use wrinkle::experiments::{sigma_inequalities, ExperimentConfig};
use wrinkle::fvk::{evaluate_el, uniform_nodes, DeformationField};
use wrinkle::grid::XGrid;
use wrinkle::repair::{mollifier_profile, repair, RepairOptions, TwoSidedField};
use wrinkle::solver::project_constraint;
use wrinkle::spectral::{CoefficientField, FrequencyGrid};

fn random_field(l: f64, modes: u32, weights: &[f64]) -> CoefficientField {
    let freq = FrequencyGrid::dense(l, modes).unwrap();
    let x = XGrid::log_linear(60, 1e-3, 2.0).unwrap();
    CoefficientField::from_fn(freq, x, |j, t| weights[j % weights.len()] * t.sqrt() * (1.0 + (j as f64 * t).sin().abs()))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn retraction_lands_on_the_constraint(l in 1.0f64..4.0, w in prop::collection::vec(0.05f64..2.0, 1..6)) {
        let f = random_field(l, (2.0 * l).ceil() as u32 + 4, &w);
        let p = project_constraint(&f).unwrap();
        let x = p.xgrid().nodes().to_vec();
        for (r, t) in p.constraint_residual().iter().zip(&x) {
            prop_assert!(r.abs() <= 1e-12 * (1.0 + 2.0 * t));
        }
    }

    #[test]
    fn periodic_extension_preserves_energy_and_constraint(
        l in 1.0f64..3.0,
        n in 2u32..5,
        w in prop::collection::vec(0.05f64..2.0, 1..6),
    ) {
        let f = project_constraint(&random_field(l, (2.0 * l).ceil() as u32 + 2, &w)).unwrap();
        let g = f.periodic_extend(n).unwrap();
        prop_assert!((g.energy().total - f.energy().total).abs() <= 1e-11 * f.energy().total);
        for (a, b) in f.constraint_sum().iter().zip(g.constraint_sum()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn coefficient_json_round_trips_exactly(l in 1.0f64..5.0, w in prop::collection::vec(0.01f64..3.0, 1..4)) {
        let f = random_field(l, (2.0 * l).ceil() as u32 + 1, &w);
        prop_assert_eq!(CoefficientField::from_json(&f.to_json().unwrap()).unwrap(), f);
    }

    #[test]
    fn cascade_is_feasible_where_resolved(l in 1.0f64..6.0, b in 0.2f64..1.0) {
        let x = XGrid::log_linear(200, 1e-4, 2.0).unwrap();
        let c = build_cascade(l, b, &x, None).unwrap();
        prop_assert!(c.resolved_residual() <= 1e-10);
    }

    #[test]
    fn mollifier_profile_is_an_even_bump(t in -2.0f64..2.0) {
        let v = mollifier_profile(t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, mollifier_profile(-t));
        if t.abs() >= 1.0 {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn config_hash_tracks_only_result_inputs(seed in any::<u64>(), workers in 1usize..16, dir in "[a-z]{1,8}") {
        let base = ExperimentConfig { seed, ..Default::default() };
        let moved = ExperimentConfig { out_dir: dir.into(), workers, ..base.clone() };
        prop_assert_eq!(base.hash(), moved.hash());
        let reseeded = ExperimentConfig { seed: seed.wrapping_add(1), ..base.clone() };
        prop_assert_ne!(base.hash(), reseeded.hash());
        let text = serde_json::to_string(&moved).unwrap();
        prop_assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), moved);
    }

    #[test]
    fn monotone_sigma_profiles_satisfy_every_inequality(c in 0.5f64..20.0, d in 0.0f64..5.0) {
        let ls = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0];
        let sig: Vec<(f64, f64)> = ls.iter().map(|&l| (l, c * (1.0 + d / l))).collect();
        prop_assert!(sigma_inequalities(&sig, 0.0).iter().all(|i| i.passed));
    }

    #[test]
    fn planar_energy_is_exact_on_any_grid(l in 1.0f64..10.0, n in 7usize..24, ny in 4usize..16) {
        let d = DeformationField::planar(l, uniform_nodes(n), 2 * ny).unwrap();
        let e = evaluate_el(&d).unwrap();
        prop_assert!((e.total + 4.0 / 3.0).abs() <= 1e-12);
        prop_assert!(e.excess_scaled(l) > 0.0);
    }

    #[test]
    fn repair_output_is_feasible_and_vanishes_at_the_clamp(scale in 0.5f64..1.0, l in prop::sample::select(vec![2.0, 4.0, 8.0])) {
        let x = XGrid::log_linear(200, 1e-4, 2.0).unwrap();
        let mut u = build_cascade(l, 1.0, &x, None).unwrap().field;
        for j in 0..u.freq().len() {
            let r: Vec<f64> = u.row(j).iter().map(|a| scale * a).collect();
            u.set_row(j, &r);
        }
        let v = TwoSidedField::from_one_sided(&u, 64).unwrap();
        let out = repair(&v, &RepairOptions::default()).unwrap();
        prop_assert!(out.feasibility_margin >= -1e-10);
        let g = &out.field;
        prop_assert_eq!(g.xgrid().nodes()[0], 0.0);
        for j in 0..g.freq().len() {
            prop_assert_eq!(g.row(j)[0], 0.0);
        }
    }
}
