use evcharge::nn::{apply_update, soft_update, Mlp, OptimizerState, OutputActivation};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps vanishing gradients
/// from turning rounding noise into large ratios.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Network with random weights and biases.
fn random_net(rng: &mut ChaCha8Rng, sizes: &[usize], output: OutputActivation) -> Mlp {
    let mut net = Mlp::new(sizes, output, rng).unwrap();
    net.for_each_param_mut(|_, v| *v = rng.gen_range(-1.0..1.0));
    net
}

/// Scalar loss `sum(weights * output)` so every output contributes.
fn loss(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (net.predict_batch(x.view()).unwrap() * w).sum()
}

/// Largest relative error over all parameters and inputs.
fn max_error(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let (_, cache) = net.forward_batch(x.view()).unwrap();
    let (grads, input_grad) = net.backward(&cache, w.view()).unwrap();
    let analytic = grads.flatten();
    let mut worst = 0.0f64;
    for k in 0..net.param_count() {
        let mut plus = net.clone();
        plus.for_each_param_mut(|j, v| if j == k { *v += STEP });
        let mut minus = net.clone();
        minus.for_each_param_mut(|j, v| if j == k { *v -= STEP });
        let numeric = (loss(&plus, x, w) - loss(&minus, x, w)) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic[k], numeric));
    }
    for ((r, c), &g) in input_grad.indexed_iter() {
        let mut xp = x.clone();
        xp[[r, c]] += STEP;
        let mut xm = x.clone();
        xm[[r, c]] -= STEP;
        let numeric = (loss(net, &xp, w) - loss(net, &xm, w)) / (2.0 * STEP);
        worst = worst.max(rel_err(g, numeric));
    }
    worst
}

fn random_case(seed: u64) -> (Mlp, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(2..=4);
    let sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=8)).collect();
    let output = if rng.gen_bool(0.5) { OutputActivation::Identity } else { OutputActivation::Sigmoid };
    let net = random_net(&mut rng, &sizes, output);
    let batch = rng.gen_range(1..=4);
    let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.gen_range(-2.0..2.0));
    let w = Array2::from_shape_fn((batch, sizes[depth - 1]), |_| rng.gen_range(-1.0..1.0));
    (net, x, w)
}

#[test]
fn backprop_matches_central_differences_on_random_nets() {
    let mut worst = 0.0f64;
    for seed in 0..150 {
        let (net, x, w) = random_case(seed);
        let e = max_error(&net, &x, &w);
        assert!(e <= TOL, "seed {seed}: relative error {e:e} for sizes {:?}", net.sizes());
        worst = worst.max(e);
    }
    assert!(worst.is_finite());
}

#[test]
fn default_actor_and_critic_shapes_pass_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (sizes, output) in [
        (vec![5, 16, 16, 1], OutputActivation::Sigmoid),
        (vec![18, 16, 16, 1], OutputActivation::Identity),
    ] {
        let net = random_net(&mut rng, &sizes, output);
        let x = Array2::from_shape_fn((3, sizes[0]), |_| rng.gen_range(0.0..1.0));
        let w = Array2::from_elem((3, 1), 1.0 / 3.0);
        assert!(max_error(&net, &x, &w) <= TOL);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn updates_preserve_shapes(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let (mut net, x, w) = random_case(seed);
        let sizes = net.sizes().to_vec();
        let mut target = net.clone();
        let mut opt = OptimizerState::new(&net, 1e-3);
        let (_, cache) = net.forward_batch(x.view()).unwrap();
        let (grads, _) = net.backward(&cache, w.view()).unwrap();
        apply_update(&mut net, &grads, &mut opt).unwrap();
        soft_update(&mut target, &net, tau).unwrap();
        prop_assert_eq!(net.sizes(), &sizes[..]);
        prop_assert!(target.same_shape(&net));
        prop_assert!(opt.fits(&net));
    }

    #[test]
    fn repeated_updates_are_bit_identical(seed in any::<u64>()) {
        let run = || {
            let (mut net, x, w) = random_case(seed);
            let mut opt = OptimizerState::new(&net, 1e-2);
            for _ in 0..5 {
                let (_, cache) = net.forward_batch(x.view()).unwrap();
                let (grads, _) = net.backward(&cache, w.view()).unwrap();
                apply_update(&mut net, &grads, &mut opt).unwrap();
            }
            net.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
