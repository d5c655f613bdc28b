use super::*;
use proptest::prelude::*;
use rand::SeedableRng;

fn random_image(seed: u64, h: usize, w: usize) -> Image {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Image::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn log_prob(net: &PolicyNetwork, x: &Image, mask: &ColumnMask, a: usize) -> f64 {
    net.forward(x, mask).unwrap()[a].ln()
}

/// Central differences of `log pi(a)` for every parameter.
fn finite_difference_gradient(
    net: &PolicyNetwork,
    x: &Image,
    mask: &ColumnMask,
    a: usize,
    step: f64,
) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.num_params())
        .map(|k| {
            let orig = probe.params()[k];
            probe.params_mut()[k] = orig + step;
            let up = log_prob(&probe, x, mask, a);
            probe.params_mut()[k] = orig - step;
            let down = log_prob(&probe, x, mask, a);
            probe.params_mut()[k] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Relative error with a magnitude floor of 1e-4: below it, central
/// differences at step 1e-5 are dominated by roundoff (~1e-11 absolute).
fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

#[test]
fn zero_output_layer_gives_uniform_masked_policy() {
    let mut net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 1).unwrap();
    net.zero_output_layer();
    let mask = ColumnMask::from_columns(8, &[3, 4]).unwrap();
    let p = net.forward(&random_image(1, 8, 8), &mask).unwrap();
    for (i, &pi) in p.iter().enumerate() {
        if i == 3 || i == 4 {
            assert_eq!(pi, 0.0);
        } else {
            assert!((pi - 1.0 / 6.0).abs() < 1e-12);
        }
    }
}

#[test]
fn single_remaining_column_is_certain() {
    let net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 2).unwrap();
    let mask = ColumnMask::from_columns(8, &[0, 1, 2, 3, 4, 6, 7]).unwrap();
    let p = net.forward(&random_image(2, 8, 8), &mask).unwrap();
    assert_eq!(p[5], 1.0);
    assert!(matches!(
        net.forward(&random_image(2, 8, 8), &ColumnMask::full(8)),
        Err(Error::NoActionsAvailable(8))
    ));
}

#[test]
fn rejects_wrong_input_or_measured_action() {
    let net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 3).unwrap();
    let mask = ColumnMask::from_columns(8, &[3, 4]).unwrap();
    assert!(net.forward(&random_image(1, 8, 10), &mask).is_err());
    let mut buf = net.gradient_buffer();
    let err = net
        .accumulate_log_prob_gradient(&random_image(1, 8, 8), &mask, 3, 1.0, &mut buf)
        .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn standard_architecture_shapes() {
    let arch = Architecture::standard(32, 32).unwrap();
    assert_eq!(arch.to_string(), "in32x32;conv1-8;conv8-16;dense1024-64;lrelu;dense64-32");
    assert_eq!(arch.param_count(), 72 + 1152 + 1024 * 64 + 64 + 64 * 32 + 32);
    let parsed: Architecture = arch.to_string().parse().unwrap();
    assert_eq!(parsed, arch);
    assert!("in32x32;conv1-8;dense100-32".parse::<Architecture>().is_err());
    assert!("in32x32;conv1-8;lrelu".parse::<Architecture>().is_err());
    assert_eq!(Architecture::tiny(8, 8, 2, 8, 6).unwrap().num_actions(), 6);
    assert!("bogus".parse::<Architecture>().is_err());
    assert!(Architecture::standard(30, 30).is_err());
}

#[test]
fn analytic_gradient_matches_finite_differences_on_standard_net() {
    let net = PolicyNetwork::new(Architecture::standard(16, 16).unwrap(), 11).unwrap();
    let x = random_image(12, 16, 16);
    let mask = crate::kspace::init_center_mask(16, 4).unwrap();
    let (_, analytic) = net.log_prob_and_gradient(&x, &mask, 2).unwrap();
    let numeric = finite_difference_gradient(&net, &x, &mask, 2, 1e-5);
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn zero_weight_leaves_buffer_untouched_and_accumulation_is_linear() {
    let net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 4).unwrap();
    let x = random_image(4, 8, 8);
    let mask = ColumnMask::from_columns(8, &[3, 4]).unwrap();
    let mut buf = net.gradient_buffer();
    buf.accum.iter_mut().enumerate().for_each(|(i, a)| *a = i as f64 * 0.1);
    let before = buf.clone();
    net.accumulate_log_prob_gradient(&x, &mask, 0, 0.0, &mut buf).unwrap();
    assert_eq!(buf, before);

    let mut twice = net.gradient_buffer();
    net.accumulate_log_prob_gradient(&x, &mask, 6, 0.7, &mut twice).unwrap();
    net.accumulate_log_prob_gradient(&x, &mask, 6, 0.7, &mut twice).unwrap();
    let mut once = net.gradient_buffer();
    net.accumulate_log_prob_gradient(&x, &mask, 6, 1.4, &mut once).unwrap();
    for (a, b) in twice.accum.iter().zip(&once.accum) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn batched_terms_equal_separate_accumulation() {
    let net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 5).unwrap();
    let x = random_image(5, 8, 8);
    let mask = ColumnMask::from_columns(8, &[3, 4]).unwrap();
    let terms = [(0, 0.3), (6, -0.2), (0, 0.05), (7, 1.0)];
    let mut batched = net.gradient_buffer();
    net.accumulate_weighted_log_prob_gradient(&x, &mask, &terms, &mut batched)
        .unwrap();
    let mut separate = net.gradient_buffer();
    for &(a, w) in &terms {
        net.accumulate_log_prob_gradient(&x, &mask, a, w, &mut separate).unwrap();
    }
    for (a, b) in batched.accum.iter().zip(&separate.accum) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn sampling_is_deterministic_and_respects_point_masses() {
    let mut rng = crate::seeding::rng_from_seed(1);
    let point = [0.0, 0.0, 1.0, 0.0];
    assert_eq!(sample_actions(&point, 16, &mut rng).unwrap(), vec![2; 16]);

    let policy = [0.1, 0.2, 0.3, 0.4];
    let a = sample_actions(&policy, 50, &mut crate::seeding::rng_from_seed(9)).unwrap();
    let b = sample_actions(&policy, 50, &mut crate::seeding::rng_from_seed(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_frequencies_match_probabilities() {
    let policy = [0.1, 0.2, 0.3, 0.4];
    let n = 100_000;
    let draws = sample_actions(&policy, n, &mut crate::seeding::rng_from_seed(3)).unwrap();
    for (a, &p) in policy.iter().enumerate() {
        let freq = draws.iter().filter(|&&d| d == a).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "action {a}: {freq} vs {p}");
    }
}

#[test]
fn score_function_has_zero_mean() {
    // E_a[grad log pi(a)] = sum_a pi(a) grad log pi(a) = grad sum_a pi(a) = 0
    let net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 6).unwrap();
    let x = random_image(6, 8, 8);
    let mask = ColumnMask::from_columns(8, &[3, 4]).unwrap();
    let probs = net.forward(&x, &mask).unwrap();
    let mut expected = net.gradient_buffer();
    let terms: Vec<(usize, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(a, &p)| (a, p))
        .collect();
    net.accumulate_weighted_log_prob_gradient(&x, &mask, &terms, &mut expected)
        .unwrap();
    assert!(expected.norm() < 1e-12);
}

#[test]
fn first_adam_step_moves_by_learning_rate() {
    let arch = Architecture::tiny(8, 8, 1, 1, 8).unwrap();
    let mut net = PolicyNetwork::new(arch, 7).unwrap();
    let start = net.params().to_vec();
    let mut st = OptimizerState::new(net.num_params(), 5e-5);
    let mut buf = net.gradient_buffer();
    buf.accum[0] = 3.0;
    buf.accum[1] = -0.02;
    optimizer_step(&mut net, &mut buf, &mut st).unwrap();
    // m_hat = g and v_hat = g^2 after one step, so the move is lr * g / (|g| + eps)
    let d0 = net.params()[0] - start[0];
    let d1 = net.params()[1] - start[1];
    assert!((d0 - 5e-5 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
    assert!((d1 + 5e-5 * 0.02 / (0.02 + 1e-8)).abs() < 1e-15);
    assert_eq!(&net.params()[2..], &start[2..]);
    assert_eq!(st.step_count, 1);
    assert!(buf.accum.iter().all(|&g| g == 0.0));
}

#[test]
fn zero_gradient_is_a_no_op_and_steps_are_monotone() {
    let arch = Architecture::tiny(8, 8, 1, 1, 8).unwrap();
    let mut net = PolicyNetwork::new(arch, 8).unwrap();
    let start = net.params().to_vec();
    let mut st = OptimizerState::new(net.num_params(), 1e-3);
    let mut buf = net.gradient_buffer();
    optimizer_step(&mut net, &mut buf, &mut st).unwrap();
    assert_eq!(net.params(), &start[..]);
    assert!(st.first_moment.iter().chain(&st.second_moment).all(|&m| m == 0.0));

    let mut st = OptimizerState::new(net.num_params(), 1e-3);
    let mut previous = net.params()[0];
    for _ in 0..2 {
        buf.accum[0] = 0.5;
        optimizer_step(&mut net, &mut buf, &mut st).unwrap();
        assert!(net.params()[0] > previous);
        previous = net.params()[0];
    }
}

#[test]
fn non_finite_gradient_is_rejected() {
    let arch = Architecture::tiny(8, 8, 1, 1, 8).unwrap();
    let mut net = PolicyNetwork::new(arch, 8).unwrap();
    let mut st = OptimizerState::new(net.num_params(), 1e-3);
    let mut buf = net.gradient_buffer();
    buf.accum[3] = f64::NAN;
    assert!(matches!(
        optimizer_step(&mut net, &mut buf, &mut st),
        Err(Error::Numerical(_))
    ));
}

#[test]
fn learning_rate_schedules() {
    let mut greedy = OptimizerState::new(1, 5e-5);
    for epoch in 1..=40 {
        decay_learning_rate(&mut greedy, LrSchedule::Greedy, epoch);
    }
    assert_eq!(greedy.learning_rate, 5e-5);
    for epoch in 41..=50 {
        decay_learning_rate(&mut greedy, LrSchedule::Greedy, epoch);
    }
    assert!((greedy.learning_rate - 5e-6).abs() < 1e-20);

    let mut nongreedy = OptimizerState::new(1, 5e-5);
    for epoch in 1..=50 {
        decay_learning_rate(&mut nongreedy, LrSchedule::NonGreedy, epoch);
    }
    assert_eq!(nongreedy.learning_rate, 3.125e-6);
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let mut net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), 9).unwrap();
    let mut st = OptimizerState::new(net.num_params(), 1e-3);
    let mut buf = net.gradient_buffer();
    buf.accum[5] = 1.0;
    optimizer_step(&mut net, &mut buf, &mut st).unwrap();

    let bytes = write_checkpoint(&net, &st);
    assert_eq!(&bytes[..4], b"KGPN");
    let (net2, st2) = read_checkpoint(&bytes).unwrap();
    assert_eq!(net2, net);
    assert_eq!(st2, st);

    assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(&bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradient_check_on_random_tiny_nets(seed in any::<u64>(), action in 0usize..8) {
        let net = PolicyNetwork::new(Architecture::tiny(8, 8, 2, 8, 8).unwrap(), seed).unwrap();
        let x = random_image(seed ^ 0x55, 8, 8);
        let mask = ColumnMask::from_columns(8, &[3, 4]).unwrap();
        let a = if mask.is_selected(action) { 0 } else { action };
        let (_, analytic) = net.log_prob_and_gradient(&x, &mask, a).unwrap();
        let numeric = finite_difference_gradient(&net, &x, &mask, a, 1e-5);
        let err = max_relative_error(&analytic, &numeric);
        prop_assert!(err < 1e-5, "max relative error {}", err);
    }

    #[test]
    fn logit_shift_invariance(logits in proptest::collection::vec(-20.0f64..20.0, 6), shift in -50.0f64..50.0) {
        let mask = ColumnMask::from_columns(6, &[1]).unwrap();
        let p = masked_softmax(&logits, &mask).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let q = masked_softmax(&shifted, &mask).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(p[1], 0.0);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(argmax(&p), argmax(&q));
    }
}
