use num_complex::Complex64;
use temperate::fields::random_smooth_current;
use temperate::pipeline::run_theorem1_detailed;
use temperate::{
    distance_field, solve_weighted_dbar, ComplexGrid, Current, Domain, Mode, PipelineConfig, Shape,
};

fn disc(res: usize) -> Domain {
    let g = ComplexGrid::cube(1, -1.25, 1.25, res).unwrap();
    distance_field(&Shape::unit_disc(), &g).unwrap()
}

fn data(d: &Domain, seed: u64) -> Current {
    random_smooth_current(d.grid(), 0, 1, 0.9, 3, seed)
}

fn rel(a: &Current, b: &Current) -> f64 {
    a.sub(b).unwrap().l2_norm() / b.l2_norm()
}

#[test]
fn minimum_norm_solution_is_linear_in_the_data() {
    let d = disc(128);
    let (g1, g2) = (data(&d, 1), data(&d, 2));
    let a = Complex64::new(0.7, -1.3);
    let mut g = g1.clone();
    g.scale(a);
    g.axpy(Complex64::new(1.0, 0.0), &g2).unwrap();
    let solve = |g: &Current| solve_weighted_dbar(g, &d, 1.0, 1e-10, 20_000).unwrap().0;
    let mut expected = solve(&g1);
    expected.scale(a);
    expected
        .axpy(Complex64::new(1.0, 0.0), &solve(&g2))
        .unwrap();
    assert!(rel(&solve(&g), &expected) < 1e-6);
}

#[test]
fn pipeline_output_is_linear_in_the_data() {
    let d = disc(128);
    let (f1, f2) = (data(&d, 3), data(&d, 4));
    let cfg = PipelineConfig {
        tolerances: temperate::pipeline::Tolerances {
            solver: 1e-10,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = |f: &Current| run_theorem1_detailed(f, &d, Mode::Order { k: 0 }, &cfg).unwrap();
    let (s1, r1) = run(&f1);
    let (s2, r2) = run(&f2);
    let (s12, r12) = run(&f1.add(&f2).unwrap());
    for r in [&r1, &r2, &r12] {
        assert!(r.overall_pass, "{}", r.summary());
    }
    assert!(rel(&s12.w, &s1.w.add(&s2.w).unwrap()) < 1e-6);
}

#[test]
fn stage_failure_is_reported_not_raised() {
    let d = disc(128);
    let cfg = PipelineConfig {
        tolerances: temperate::pipeline::Tolerances {
            presolve: 1e-14,
            ..Default::default()
        },
        ..Default::default()
    };
    let (_, rep) = run_theorem1_detailed(&data(&d, 5), &d, Mode::Order { k: 0 }, &cfg).unwrap();
    assert!(!rep.overall_pass);
    assert_eq!(rep.failed_stage.as_deref(), Some("presolve"));
    assert!(rep.summary().contains("FAIL presolve"));
}
