use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::json;
use temperate::calculus::interior_indices;
use temperate::currents::{read_current, write_current, Dtype};
use temperate::fields::random_smooth_current;
use temperate::scenario::{apply_override, shipped_scenarios, ScenarioConfig};
use temperate::{
    dbar, dbar_star, distance_field, growth_exponent, mollify, shell_partition, sobolev_budget,
    sobolev_norm, weighted_l2_norm, ComplexGrid, Current, Domain, Mode, Mollifier, OperatorConfig,
    Shape, ShellDecomposition,
};

fn disc() -> &'static (Domain, ShellDecomposition) {
    static DISC: OnceLock<(Domain, ShellDecomposition)> = OnceLock::new();
    DISC.get_or_init(|| {
        let g = ComplexGrid::cube(1, -1.25, 1.25, 256).unwrap();
        let d = distance_field(&Shape::unit_disc(), &g).unwrap();
        let shells = shell_partition(&d, 6).unwrap();
        (d, shells)
    })
}

fn c64() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

fn grid2() -> ComplexGrid {
    ComplexGrid::cube(2, -1.5, 1.5, 16).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dbar_is_linear_and_squares_to_zero(seed in 0u64..1000, a in c64(), b in c64()) {
        let g = grid2();
        let cfg = OperatorConfig::default();
        let u1 = random_smooth_current(&g, 0, 0, 1.0, 3, seed);
        let u2 = random_smooth_current(&g, 0, 0, 1.0, 3, seed + 1);
        let mut combo = u1.clone();
        combo.scale(a);
        combo.axpy(b, &u2).unwrap();
        let lhs = dbar(&combo, &cfg).unwrap();
        let mut rhs = dbar(&u1, &cfg).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &dbar(&u2, &cfg).unwrap()).unwrap();
        let scale = lhs.l2_norm().max(1e-300);
        prop_assert!(lhs.sub(&rhs).unwrap().l2_norm() / scale < 1e-12);
        let dd = dbar(&lhs, &cfg).unwrap();
        prop_assert!(dd.l2_norm() / scale < 1e-12);
    }

    #[test]
    fn dbar_star_is_the_adjoint(seed in 0u64..1000) {
        let g = ComplexGrid::cube(1, -1.5, 1.5, 64).unwrap();
        for cfg in [OperatorConfig::default(), OperatorConfig::fourth_order()] {
            let u = random_smooth_current(&g, 0, 0, 1.0, 3, seed);
            let f = random_smooth_current(&g, 0, 1, 1.0, 3, seed + 7);
            let du = dbar(&u, &cfg).unwrap();
            let lhs = du.inner(&f).unwrap();
            let rhs = u.inner(&dbar_star(&f, &cfg).unwrap()).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * du.l2_norm() * f.l2_norm());
        }
    }

    #[test]
    fn mollifier_has_unit_discrete_mass(cells in 4.0..12.0f64, cx in -0.3..0.3f64, cy in -0.3..0.3f64) {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 64).unwrap();
        let m = Mollifier::for_grid(&g, cells * g.h()).unwrap();
        let mass: f64 = m.sample_at(&g, &[cx, cy]).iter().sum::<f64>() * g.cell_volume();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(Mollifier::for_grid(&g, 3.9 * g.h()).is_err());
    }

    #[test]
    fn mollification_preserves_total_mass(seed in 0u64..1000, cells in 4.0..8.0f64) {
        let g = ComplexGrid::cube(1, -1.5, 1.5, 64).unwrap();
        let f = random_smooth_current(&g, 0, 0, 1.0, 3, seed);
        let total = |c: &Current| c.components()[0].1.iter().sum::<Complex64>();
        let m = mollify(&f, cells * g.h()).unwrap();
        prop_assert!((total(&m) - total(&f)).norm() <= 1e-10 * f.l2_norm().max(1.0));
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive(seed in 0u64..1000, c in c64(), k in 0.0..3.0f64, s in -3.0..1.0f64) {
        let (d, _) = disc();
        let g = d.grid();
        let f1 = random_smooth_current(g, 0, 1, 0.9, 3, seed);
        let f2 = random_smooth_current(g, 0, 1, 0.9, 3, seed + 1);
        let mut cf = f1.clone();
        cf.scale(c);
        let n1 = weighted_l2_norm(&f1, d, k).unwrap();
        let n2 = weighted_l2_norm(&f2, d, k).unwrap();
        prop_assert!((weighted_l2_norm(&cf, d, k).unwrap() - c.norm() * n1).abs() <= 1e-10 * n1);
        prop_assert!(weighted_l2_norm(&f1.add(&f2).unwrap(), d, k).unwrap() <= (n1 + n2) * (1.0 + 1e-12));

        let field = |x: &Current| x.components()[0].1.clone();
        let s1 = sobolev_norm(&field(&f1), s, g).unwrap();
        let s2 = sobolev_norm(&field(&f2), s, g).unwrap();
        prop_assert!((sobolev_norm(&field(&cf), s, g).unwrap() - c.norm() * s1).abs() <= 1e-10 * s1);
        prop_assert!(sobolev_norm(&field(&f1.add(&f2).unwrap()), s, g).unwrap() <= (s1 + s2) * (1.0 + 1e-12));
    }

    #[test]
    fn sobolev_norm_is_monotone_in_the_index(seed in 0u64..1000, s in -4.0..1.0f64, step in 0.1..2.0f64) {
        let g = ComplexGrid::cube(1, -1.5, 1.5, 64).unwrap();
        let f = random_smooth_current(&g, 0, 0, 1.0, 3, seed);
        let v = &f.components()[0].1;
        prop_assert!(sobolev_norm(v, s, &g).unwrap() <= sobolev_norm(v, s + step, &g).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn growth_fit_recovers_power_laws(a in 0.0..4.0f64, c in 0.1..10.0f64) {
        let (d, shells) = disc();
        let mag: Vec<f64> = d.d_field().iter().map(|&x| if x > 0.0 { c * x.powf(-a) } else { 0.0 }).collect();
        let r = growth_exponent(&mag, shells, a, 0.5).unwrap();
        prop_assert!((r.fitted_exponent - a).abs() < 0.05, "a={a}: fitted {}", r.fitted_exponent);
        prop_assert!(r.pass);
        let r = growth_exponent(&mag, shells, a - 1.0, 0.5).unwrap();
        prop_assert!(!r.pass);
    }

    #[test]
    fn budget_invariants(k in 0u32..20, s in 0.0..20.0f64, n in 1usize..=2) {
        let b = sobolev_budget(Mode::Order { k }, n).unwrap();
        prop_assert_eq!(b.output_order, Some(k + 2 * n as u32 + 1));
        prop_assert!(b.g_order == b.v_order + 1);
        let b = sobolev_budget(Mode::Sobolev { s }, n).unwrap();
        let k = b.k as f64;
        prop_assert!(s <= k && k < s + 1.0);
        let r = b.r.unwrap() as f64;
        prop_assert!(r > k);
        prop_assert_eq!(b.output_sobolev_index, Some(-r - 2.0 * n as f64));
    }

    #[test]
    fn container_round_trips_exactly(seed in 0u64..1000, p in 0usize..=1, q in 0usize..=1) {
        let g = grid2();
        let c = random_smooth_current(&g, p, q, 1.0, 2, seed).with_order(3);
        let mut bytes = Vec::new();
        write_current(&mut bytes, &c, Dtype::Complex128).unwrap();
        let back = read_current(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.grid(), c.grid());
        prop_assert_eq!(back.declared_order(), 3);
        prop_assert_eq!(back.components(), c.components());
    }

    #[test]
    fn overrides_set_the_named_field(res in prop::sample::select(vec![16usize, 32, 64, 128]), seed in 0u64..1_000_000) {
        let text = shipped_scenarios()[0].1;
        let overrides = [format!("grid.resolution={res}"), format!("seed={seed}")];
        let config = ScenarioConfig::from_json(text, &overrides).unwrap();
        prop_assert_eq!(config.grid.resolution, res);
        prop_assert_eq!(config.seed, seed);
        let mut doc = json!({"a": [1, 2]});
        apply_override(&mut doc, &format!("a.1={seed}")).unwrap();
        prop_assert_eq!(doc, json!({"a": [1, seed]}));
    }
}

#[test]
fn shipped_scenarios_round_trip_through_json() {
    for &(name, text) in shipped_scenarios() {
        let config = ScenarioConfig::from_json(text, &[]).unwrap();
        config.validate().unwrap();
        let again =
            ScenarioConfig::from_json(&serde_json::to_string(&config).unwrap(), &[]).unwrap();
        assert_eq!(again, config, "{name}");
    }
}

#[test]
fn interior_indices_respect_the_margin() {
    let g = ComplexGrid::cube(1, -1.0, 1.0, 32).unwrap();
    assert_eq!(interior_indices(&g, 8).len(), 16 * 16);
    assert_eq!(interior_indices(&g, 0).len(), g.len());
}
