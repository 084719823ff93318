use mmemq_core::bounds::{
    beta_iterations, empirical_variance, estimate_lambda, golden_section_min, lower_bound_curve, lower_expression,
    optimal_threshold, pmis_bounds_two_agents, threshold_grid, variance_bound_asymptotic, ClassCounts,
    MisdetectionInput,
};
use mmemq_core::wireless::q_function;
use proptest::prelude::*;

/// Upper Gaussian tail by composite Simpson quadrature of the density.
fn tail_by_quadrature(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - tail_by_quadrature(-x);
    }
    let n = 40_000usize;
    let (a, b) = (x, x + 12.0);
    let h = (b - a) / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..n {
        let v = pdf(a + h * k as f64);
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (pdf(a) + pdf(b) + 4.0 * odd + 2.0 * even)
}

#[test]
fn tail_matches_quadrature() {
    for x in [-3.0, -1.0, -0.2, 0.0, 0.3, 1.0, 2.5, 4.0, 6.0] {
        let q = q_function(x);
        let o = tail_by_quadrature(x);
        assert!(((q - o) / o).abs() < 1e-12, "x={x}: {q} vs {o}");
    }
}

#[test]
fn two_agent_reference_scenario() {
    let input = MisdetectionInput {
        counts: ClassCounts::new(30.0, 70.0),
        sigma_c: 1.0,
        sigma_u: 5.0,
        arss: vec![0.0, 0.0],
        grid: vec![0.0],
    };
    let b = pmis_bounds_two_agents(&input).unwrap();
    let delta = (2.0 * ((30.0 * 5.0) / 70.0f64).ln() / (1.0 - 1.0 / 25.0)).sqrt();
    assert!((b.delta - delta).abs() < 1e-14);
    let lower = tail_by_quadrature(delta) * 0.3 + tail_by_quadrature(-delta / 5.0) * 0.7;
    let upper = tail_by_quadrature(-delta) * 0.3 + tail_by_quadrature(delta / 5.0) * 0.7;
    assert!((b.lower - lower).abs() < 1e-12, "{} vs {lower}", b.lower);
    assert!((b.upper - upper).abs() < 1e-12, "{} vs {upper}", b.upper);
}

#[test]
fn beta_iterations_hand_value() {
    let b = beta_iterations(1.0, 0.5, &[vec![1.0], vec![1.0]]).unwrap();
    assert_eq!(b.iterations, 1);
}

#[test]
fn unimodal_curve_grid_matches_golden_section() {
    let input = MisdetectionInput {
        counts: ClassCounts::new(40.0, 60.0),
        sigma_c: 0.01,
        sigma_u: 0.1,
        arss: vec![0.1, 0.5],
        grid: threshold_grid(0.0, 1.0, 0.01).unwrap(),
    };
    let choice = optimal_threshold(&input, None).unwrap();
    let (x, _) = golden_section_min(|t| lower_expression(&input, t), 0.3, 0.6, 1e-10);
    assert!((choice.threshold - x).abs() <= 0.01 + 1e-12, "{} vs {x}", choice.threshold);
}

#[test]
fn noisier_uncoordinated_readings_raise_the_threshold() {
    let base = MisdetectionInput {
        counts: ClassCounts::new(40.0, 60.0),
        sigma_c: 0.01,
        sigma_u: 0.05,
        arss: vec![0.1, 0.5],
        grid: threshold_grid(0.0, 1.0, 0.005).unwrap(),
    };
    let mut last = f64::NEG_INFINITY;
    for su in [0.05, 0.1, 0.15, 0.2] {
        let inp = MisdetectionInput { sigma_u: su, ..base.clone() };
        let t = optimal_threshold(&inp, None).unwrap().threshold;
        assert!(t >= last, "sigma_u={su}: {t} < {last}");
        last = t;
    }
    let low = optimal_threshold(&base, None).unwrap().threshold;
    assert!(last > low);
}

#[test]
fn per_threshold_counts_must_align() {
    let input = MisdetectionInput {
        counts: ClassCounts::new(1.0, 1.0),
        sigma_c: 0.1,
        sigma_u: 0.5,
        arss: vec![0.0, 0.0],
        grid: vec![0.0, 0.1],
    };
    assert!(lower_bound_curve(&input, Some(&[ClassCounts::new(1.0, 1.0)])).is_err());
}

proptest! {
    #[test]
    fn two_agent_bounds_sum_to_one(
        nc in 1.0f64..1000.0,
        nu in 1.0f64..1000.0,
        sc in 0.01f64..1.0,
        ratio in 1.01f64..20.0,
    ) {
        let input = MisdetectionInput {
            counts: ClassCounts::new(nc, nu),
            sigma_c: sc,
            sigma_u: sc * ratio,
            arss: vec![0.0, 0.0],
            grid: vec![0.0],
        };
        match pmis_bounds_two_agents(&input) {
            Ok(b) => {
                prop_assert!(input.hypothesis_holds());
                prop_assert!((b.lower + b.upper - 1.0).abs() < 1e-12);
            }
            Err(_) => prop_assert!(!input.hypothesis_holds()),
        }
    }

    #[test]
    fn asymptotic_bound_decreases_in_u(l in proptest::collection::vec(0.0f64..10.0, 1..6), u in 0.0f64..0.98) {
        let a = variance_bound_asymptotic(&l, u).unwrap();
        let b = variance_bound_asymptotic(&l, u + 0.01).unwrap();
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn lambda_estimate_is_scale_equivariant(trace in proptest::collection::vec(-5.0f64..5.0, 8..200), k in 0.0f64..50.0) {
        let l = estimate_lambda(&trace).unwrap();
        let scaled: Vec<f64> = trace.iter().map(|x| k * x).collect();
        let ls = estimate_lambda(&scaled).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!((ls - k * l).abs() <= 1e-9 * (1.0 + k * l));
    }

    #[test]
    fn window_variance_is_non_negative(trace in proptest::collection::vec(-1e3f64..1e3, 1..300), w in 1usize..50) {
        let v = empirical_variance(&trace, w).unwrap();
        prop_assert!(v.values.iter().all(|&x| x >= 0.0));
        prop_assert_eq!(v.values.len(), trace.len() - v.window + 1);
    }
}
