use gasket_lab::fit::{m0_scale, tauberian_convert};
use gasket_lab::gasket::constants;
use gasket_lab::graph::{build_graph, vertex_count};
use gasket_lab::ids::Ambient;
use gasket_lab::lab::config::{parse_grid, parse_pairs};
use gasket_lab::lab::{Command, ExperimentConfig};
use gasket_lab::obstacles::{sample_cloud, Cloud};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn m0_brackets_the_scale(t in 1e-3f64..1e6, nu in 1e-3f64..1e3, alpha in 0.05f64..1.95) {
        let m0 = m0_scale(t, nu, alpha).unwrap();
        let r = (t / nu).powf(1.0 / constants(alpha).unwrap().d_alpha);
        let tol = 1e-9 * r;
        prop_assert!(2f64.powi(m0 as i32) <= r + tol);
        prop_assert!(r < 2f64.powi(m0 as i32 + 1) + tol);
    }

    #[test]
    fn tauberian_is_increasing(a in 0.01f64..0.98, b in 0.01f64..0.98) {
        prop_assume!(a < b);
        prop_assert!(tauberian_convert(a).unwrap() < tauberian_convert(b).unwrap());
    }

    #[test]
    fn thinning_keeps_a_subset(seed in 0u64..1000, keep in 0.0f64..1.0) {
        let cloud = sample_cloud(1, 3.0, 0.2, 6, seed).unwrap();
        let thin = cloud.thinned(3.0 * keep).unwrap();
        prop_assert!(thin.len() <= cloud.len());
        prop_assert!(thin.centers.iter().all(|c| cloud.centers.contains(c)));
    }

    #[test]
    fn cloud_csv_round_trips(seed in 0u64..1000, nu in 0.0f64..5.0) {
        let cloud = sample_cloud(2, nu, 0.25, 7, seed).unwrap();
        prop_assert_eq!(Cloud::from_csv(&cloud.to_csv(None)).unwrap(), cloud);
    }

    #[test]
    fn manifest_round_trips(alpha in 0.05f64..1.95, seed in any::<u64>(), n in 1usize..500) {
        let mut cfg = ExperimentConfig::new(Command::Ids);
        cfg.apply([
            ("alpha".to_string(), alpha.to_string()),
            ("seed".to_string(), seed.to_string()),
            ("n_clouds".to_string(), n.to_string()),
        ]);
        let back = ExperimentConfig::from_manifest(&cfg.manifest(&[("seed.clouds".into(), "7".into())])).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn geometric_grids_are_increasing(lo in 1e-3f64..10.0, ratio in 1.01f64..100.0, n in 2usize..40) {
        let g = parse_grid(&format!("geom:{lo}:{}:{n}", lo * ratio)).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((g[0] - lo).abs() <= 1e-12 * lo);
    }

    #[test]
    fn keep_set_shrinks_with_more_obstacles(seed in 0u64..200) {
        let amb = Ambient::cached(1, 3, 1, 1.0).unwrap();
        let cloud = sample_cloud(1, 4.0, 0.2, 6, seed).unwrap();
        let thin = cloud.thinned(1.0).unwrap();
        let all = amb.keep_set(Some(&cloud), true).unwrap();
        let some = amb.keep_set(Some(&thin), true).unwrap();
        prop_assert!(all.iter().all(|v| some.contains(v)));
    }
}

#[test]
fn graph_sizes_match_the_count_formula() {
    for big in 0..=2 {
        for m in big..=big + 4 {
            let g = build_graph(big, m).unwrap();
            assert_eq!(g.len(), vertex_count(m));
            assert!((g.total_weight() - 3f64.powi(big as i32)).abs() < 1e-9);
        }
    }
}

#[test]
fn pair_parser_rejects_garbage() {
    assert!(parse_pairs("a=1\n\n# note\nb = 2\n").unwrap().len() == 2);
    assert!(parse_pairs("just words").is_err());
}
