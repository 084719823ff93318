use mmemq_core::cousins::{matrix_power_kernel, CousinSet, EstimatedKernel, MemqConfig};
use mmemq_core::mdp::{FiniteMdp, QLearner, QTable, Sample, Schedules, TransitionTensor, UpdateRatio};
use mmemq_core::rng::SeedStreams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(n_s: usize, n_a: usize, seed: u64) -> TransitionTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs: Vec<f64> = (0..n_s * n_a * n_s)
        .map(|_| if rng.random::<f64>() < 0.4 { 0.0 } else { rng.random() })
        .collect();
    for row in probs.chunks_mut(n_s) {
        let sum: f64 = row.iter().sum();
        if sum == 0.0 {
            row[0] = 1.0;
        } else {
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    TransitionTensor::from_probs(n_s, n_a, probs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kernel_powers_stay_row_stochastic(n_s in 1usize..9, n_a in 1usize..4, order in 1u32..12, seed: u64) {
        let p = random_tensor(n_s, n_a, seed);
        let pn = matrix_power_kernel(&p, order).unwrap();
        prop_assert!(pn.is_row_stochastic());
    }

    #[test]
    fn estimated_powers_stay_row_stochastic(
        visits in prop::collection::vec((0usize..6, 0usize..2, 0usize..6), 0..60),
        order in 1u32..8,
        refresh_at in 0usize..60,
    ) {
        let mut k = EstimatedKernel::new(6, 2);
        for (i, &(s, a, n)) in visits.iter().enumerate() {
            k.record(&Sample::new(s, a, n, 0.0)).unwrap();
            if i == refresh_at {
                k.refresh();
            }
        }
        k.refresh();
        prop_assert!(k.materialize(order).unwrap().is_row_stochastic());
        for s in 0..6 {
            for a in 0..2 {
                let total: f64 = k.power_row(order, s, a).iter().map(|&(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}

/// Two-sample chi-square statistic on a shared support.
fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize) {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (ka, kb) = ((nb as f64 / na as f64).sqrt(), (na as f64 / nb as f64).sqrt());
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        stat += (ka * x as f64 - kb * y as f64).powi(2) / (x + y) as f64;
        dof += 1;
    }
    (stat, dof.saturating_sub(1))
}

#[test]
fn first_order_draws_match_real_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mdp = FiniteMdp::random(8, 2, 4, &mut rng).unwrap();
    let mut k = EstimatedKernel::new(8, 2);
    for _ in 0..400_000 {
        let s = rng.random_range(0..8);
        let a = rng.random_range(0..2);
        let (n, c) = mdp.step(s, a, &mut rng);
        k.record(&Sample::new(s, a, n, c)).unwrap();
    }
    k.refresh();
    let mut synth = [0u64; 8];
    let mut real = [0u64; 8];
    for _ in 0..20_000 {
        synth[k.sample_next(1, 3, 1, &mut rng)] += 1;
        real[mdp.step(3, 1, &mut rng).0] += 1;
    }
    let (stat, dof) = chi_square_two_sample(&synth, &real);
    // chi-square 0.99 quantiles for dof 1..=7
    let crit = [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475];
    assert!(dof >= 1 && stat < crit[dof - 1], "chi2 {stat} with {dof} dof");
}

fn run_pair(orders: Vec<u32>, schedules: Schedules, iterations: u64, seed: u64) -> (CousinSet, QLearner, FiniteMdp) {
    let mut mdp_rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = FiniteMdp::random(10, 3, 3, &mut mdp_rng).unwrap();
    let streams = SeedStreams::new(seed);
    let config = MemqConfig::default().with_orders(orders);
    let mut set = CousinSet::new(
        10,
        3,
        0.9,
        None,
        config,
        schedules,
        &mut streams.stream("init"),
        streams.stream("model"),
    )
    .unwrap();
    let mut plain = QLearner::new(QTable::random(10, 3, 0.9, 0.01, &mut streams.stream("init")).unwrap(), schedules);
    let (mut env_a, mut act_a) = (streams.stream("env"), streams.stream("act"));
    let (mut env_b, mut act_b) = (streams.stream("env"), streams.stream("act"));
    let (mut sa, mut sb) = (0, 0);
    for t in 1..=iterations {
        let a = set.act(sa, t, &mut act_a).unwrap();
        let (n, c) = mdp.step(sa, a, &mut env_a);
        let before = set.buffer().len();
        set.memq_iteration(Sample::new(sa, a, n, c), t, &mdp).unwrap();
        assert_eq!(set.buffer().len(), (before + 1).min(set.config().buffer_capacity));
        sa = n;

        let a = plain.act(sb, t, &mut act_b).unwrap();
        let (n, c) = mdp.step(sb, a, &mut env_b);
        plain.learn(&Sample::new(sb, a, n, c), t).unwrap();
        sb = n;
    }
    (set, plain, mdp)
}

#[test]
fn single_real_environment_without_inertia_is_plain_q_learning() {
    let schedules = Schedules {
        update_ratio: UpdateRatio::Constant { value: 0.0 },
        ..Schedules::default()
    };
    let (set, plain, _) = run_pair(vec![1], schedules, 5_000, 3);
    assert_eq!(set.ensemble().values(), plain.table.values());
    assert_eq!(set.weights(), &[1.0]);
}

#[test]
fn weights_stay_on_simplex_during_learning() {
    let (set, _, _) = run_pair(vec![1, 2, 5], Schedules::default(), 3_000, 5);
    let w = set.weights();
    assert_eq!(w.len(), 3);
    assert!(w.iter().all(|x| *x >= 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for n in [1, 2, 5] {
        assert!(set.kernel().materialize(n).unwrap().is_row_stochastic());
    }
}

#[test]
fn higher_order_cousin_keeps_a_residual() {
    // A two-state flip: acting moves to the other state deterministically,
    // so the second power stays put and the cousin learns the wrong values.
    let p = TransitionTensor::from_action_matrices(&[vec![vec![0.0, 1.0], vec![1.0, 0.0]]]).unwrap();
    let mdp = FiniteMdp::new(p, vec![0.0, 1.0]).unwrap();
    let qstar = mdp.optimal_q(0.9, 1e-12).unwrap();
    let streams = SeedStreams::new(11);
    let mut set = CousinSet::new(
        2,
        1,
        0.9,
        None,
        MemqConfig::default().with_orders(vec![1, 2]),
        Schedules::default(),
        &mut streams.stream("init"),
        streams.stream("model"),
    )
    .unwrap();
    let mut s = 0;
    for t in 1..=40_000 {
        let (n, c) = mdp.step(s, 0, &mut streams.stream("unused"));
        set.memq_iteration(Sample::new(s, 0, n, c), t, &mdp).unwrap();
        s = n;
    }
    assert!(set.table(0).sup_distance(&qstar).unwrap() < 0.05);
    assert!(set.table(1).sup_distance(&qstar).unwrap() > 1.0);
}

#[test]
fn saturating_update_ratio_stabilizes_the_ensemble() {
    let mut mdp_rng = ChaCha8Rng::seed_from_u64(21);
    let mdp = FiniteMdp::random(10, 3, 3, &mut mdp_rng).unwrap();
    let streams = SeedStreams::new(21);
    let mut set = CousinSet::new(
        10,
        3,
        0.9,
        None,
        MemqConfig::default(),
        Schedules::default(),
        &mut streams.stream("init"),
        streams.stream("model"),
    )
    .unwrap();
    let (mut env, mut act) = (streams.stream("env"), streams.stream("act"));
    let window = 2_000u64;
    let mut means = Vec::new();
    let mut acc = 0.0;
    let mut prev = set.ensemble().clone();
    let mut s = 0;
    for t in 1..=20_000 {
        let a = set.act(s, t, &mut act).unwrap();
        let (n, c) = mdp.step(s, a, &mut env);
        set.memq_iteration(Sample::new(s, a, n, c), t, &mdp).unwrap();
        s = n;
        acc += set.ensemble().sup_distance(&prev).unwrap();
        prev = set.ensemble().clone();
        if t % window == 0 {
            means.push(acc / window as f64);
            acc = 0.0;
        }
    }
    let tail = &means[means.len() - 5..];
    assert!(tail.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}
