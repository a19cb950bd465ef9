use super::gradcheck::{finite_difference, max_rel_error};
use super::*;
use ndarray::array;
use rand_chacha::rand_core::SeedableRng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn zero_network_maps_everything_to_zero() {
    let layers = vec![Layer {
        weight: Array2::zeros((3, 4)),
        bias: Array1::zeros(3),
        activation: Activation::Tanh,
    }];
    let net = DenseNet::from_layers(layers).unwrap();
    let batch = Array2::from_shape_fn((5, 4), |(i, j)| (i + j) as f64);
    let (out, _) = net.forward(&batch).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn identity_linear_layer_reproduces_the_input() {
    let net = DenseNet::from_layers(vec![Layer {
        weight: Array2::eye(4),
        bias: Array1::zeros(4),
        activation: Activation::Identity,
    }])
    .unwrap();
    let batch = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 - j as f64);
    let (out, _) = net.forward(&batch).unwrap();
    assert_eq!(out, batch);
}

#[test]
fn forward_matches_straight_line_reevaluation() {
    let mut r = rng(5);
    let net = DenseNet::random(
        &[6, 5, 3],
        &[Activation::Tanh, Activation::Sigmoid],
        &mut r,
    )
    .unwrap();
    let batch = Array2::from_shape_fn((4, 6), |(i, j)| (i as f64 * 0.3 - j as f64 * 0.1).sin());
    let (out, _) = net.forward(&batch).unwrap();
    // Independent route: scalar loops straight off the layer definitions.
    for i in 0..4 {
        let mut row: Vec<f64> = batch.row(i).to_vec();
        for layer in net.layers() {
            let mut next = vec![0.0; layer.out_width()];
            for (o, n) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (j, &v) in row.iter().enumerate() {
                    acc += layer.weight[[o, j]] * v;
                }
                *n = layer.activation.apply(acc);
            }
            row = next;
        }
        for (j, &v) in row.iter().enumerate() {
            assert!((out[[i, j]] - v).abs() < 1e-14);
        }
    }
}

#[test]
fn forward_rejects_wrong_batch_width() {
    let mut r = rng(0);
    let net = DenseNet::random(&[4, 2], &[Activation::Tanh], &mut r).unwrap();
    let batch = Array2::zeros((2, 3));
    assert!(matches!(net.forward(&batch), Err(NnError::Shape(_))));
}

#[test]
fn backward_matches_finite_differences_on_the_encoder_shape() {
    let mut r = rng(11);
    let net = DenseNet::random(
        &[252, 32, 2],
        &[Activation::Tanh, Activation::Tanh],
        &mut r,
    )
    .unwrap();
    let batch = Array2::from_shape_fn((3, 252), |(i, j)| ((i * 131 + j) as f64 * 0.37).sin() * 0.2);
    // Scalar probe loss: weighted sum of outputs, squared.
    let probe = |net: &DenseNet| {
        let (out, _) = net.forward(&batch).unwrap();
        let s: f64 = out
            .iter()
            .enumerate()
            .map(|(i, &v)| v * (0.5 + (i % 3) as f64))
            .sum();
        s * s
    };
    let (out, cache) = net.forward(&batch).unwrap();
    let s: f64 = out
        .iter()
        .enumerate()
        .map(|(i, &v)| v * (0.5 + (i % 3) as f64))
        .sum();
    let out_grad = Array2::from_shape_fn(out.dim(), |(i, j)| {
        2.0 * s * (0.5 + ((i * out.ncols() + j) % 3) as f64)
    });
    let analytic = net.backward_params(&cache, &out_grad).unwrap();
    let numeric = finite_difference(&net, probe, 1e-5);
    let err = max_rel_error(&analytic, &numeric);
    assert!(err < 1e-4, "max relative error {}", err);
}

#[test]
fn zero_output_grad_gives_zero_parameter_grads() {
    let mut r = rng(2);
    let net = DenseNet::random(&[3, 4, 2], &[Activation::Relu, Activation::Identity], &mut r)
        .unwrap();
    let batch = Array2::from_shape_fn((3, 3), |(i, j)| (i + j) as f64 * 0.1);
    let (out, cache) = net.forward(&batch).unwrap();
    let grads = net
        .backward_params(&cache, &Array2::zeros(out.dim()))
        .unwrap();
    assert_eq!(grads.max_abs(), 0.0);
}

#[test]
fn linear_layer_weight_grad_is_outer_product() {
    let net = DenseNet::from_layers(vec![Layer {
        weight: array![[0.5, -0.25], [1.0, 0.75]],
        bias: Array1::zeros(2),
        activation: Activation::Identity,
    }])
    .unwrap();
    let batch = array![[1.0, 2.0], [3.0, -1.0]];
    let (_, cache) = net.forward(&batch).unwrap();
    let out_grad = array![[0.1, 0.2], [-0.3, 0.4]];
    let (grads, input_grad) = net.backward(&cache, &out_grad).unwrap();
    assert_eq!(grads.weights[0], out_grad.t().dot(&batch));
    assert_eq!(input_grad, out_grad.dot(&net.layers()[0].weight));
}

#[test]
fn stale_cache_is_rejected() {
    let mut r = rng(3);
    let mut net = DenseNet::random(&[3, 2], &[Activation::Tanh], &mut r).unwrap();
    let batch = Array2::zeros((1, 3));
    let (out, cache) = net.forward(&batch).unwrap();
    net.nudge_param(0, 0.1);
    let res = net.backward_params(&cache, &Array2::zeros(out.dim()));
    assert!(matches!(res, Err(NnError::StaleCache)));
}

mod losses {
    use super::*;

    #[test]
    fn uniform_logits_cost_log_k() {
        let logits = Array2::zeros((6, 4));
        let labels = vec![0, 1, 2, 3, 0, 2];
        let (loss, _) = cross_entropy_logits(&logits, &labels).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let mut logits = Array2::zeros((2, 3));
        logits[[0, 1]] = 50.0;
        logits[[1, 2]] = 50.0;
        let (loss, _) = cross_entropy_logits(&logits, &[1, 2]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn cross_entropy_grad_matches_finite_differences() {
        let mut r = rng(7);
        let net = DenseNet::random(&[5, 8, 4], &[Activation::Tanh, Activation::Identity], &mut r)
            .unwrap();
        let batch = Array2::from_shape_fn((6, 5), |(i, j)| ((i * 7 + j) as f64).cos());
        let labels = vec![0, 3, 1, 2, 2, 0];
        let (logits, cache) = net.forward(&batch).unwrap();
        let (_, dlogits) = cross_entropy_logits(&logits, &labels).unwrap();
        let analytic = net.backward_params(&cache, &dlogits).unwrap();
        let numeric = finite_difference(
            &net,
            |n| {
                let (l, _) = n.forward(&batch).unwrap();
                cross_entropy_logits(&l, &labels).unwrap().0
            },
            1e-5,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn coin_flip_probabilities_cost_log_two() {
        let probs = Array1::from_elem(8, 0.5);
        let labels = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let (loss, _) = bce(&probs, &labels).unwrap();
        assert!((loss - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_cost_the_clamp() {
        let probs = array![1.0, 0.0];
        let labels = vec![1.0, 0.0];
        let (loss, grad) = bce(&probs, &labels).unwrap();
        assert!(loss > 0.0 && loss < 2e-7);
        assert_eq!(grad, Array1::zeros(2));
    }

    #[test]
    fn bce_grad_matches_finite_differences() {
        let mut r = rng(13);
        let net = DenseNet::random(&[4, 6, 1], &[Activation::Tanh, Activation::Sigmoid], &mut r)
            .unwrap();
        let batch = Array2::from_shape_fn((5, 4), |(i, j)| ((i + 2 * j) as f64 * 0.41).sin());
        let labels = vec![1.0, 0.0, 1.0, 0.0, 1.0];
        let (out, cache) = net.forward(&batch).unwrap();
        let probs = out.column(0).to_owned();
        let (_, dprobs) = bce(&probs, &labels).unwrap();
        let dout = dprobs.insert_axis(ndarray::Axis(1));
        let analytic = net.backward_params(&cache, &dout).unwrap();
        let numeric = finite_difference(
            &net,
            |n| {
                let (o, _) = n.forward(&batch).unwrap();
                bce(&o.column(0).to_owned(), &labels).unwrap().0
            },
            1e-5,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn mse_trivials() {
        let a = Array2::from_elem((3, 4), 0.7);
        let (loss, _) = mse(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        let b = Array2::zeros((3, 4));
        let ones = Array2::ones((3, 4));
        let (loss, _) = mse(&ones, &b).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mse_grad_matches_finite_differences() {
        let mut r = rng(17);
        let net = DenseNet::random(&[3, 5, 2], &[Activation::Relu, Activation::Tanh], &mut r)
            .unwrap();
        let batch = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.35);
        let target = Array2::from_shape_fn((4, 2), |(i, j)| ((i + j) as f64 * 0.21).cos());
        let (pred, cache) = net.forward(&batch).unwrap();
        let (_, dpred) = mse(&pred, &target).unwrap();
        let analytic = net.backward_params(&cache, &dpred).unwrap();
        let numeric = finite_difference(
            &net,
            |n| {
                let (p, _) = n.forward(&batch).unwrap();
                mse(&p, &target).unwrap().0
            },
            1e-5,
        );
        assert!(max_rel_error(&analytic, &numeric) < 1e-4);
    }
}

mod adam {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_alone() {
        let mut r = rng(23);
        let mut net = DenseNet::random(&[3, 2], &[Activation::Tanh], &mut r).unwrap();
        let before = net.clone();
        let grads = GradBuffer::zeros_like(&net);
        let mut state = AdamState::new(&net, AdamParams::with_learning_rate(0.003));
        adam_step(&mut net, &grads, &mut state).unwrap();
        assert_eq!(net.layers(), before.layers());
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        // Single scalar parameter, constant gradient: bias correction makes
        // the first update lr * g / (|g| + eps) which is about lr.
        let mut net = DenseNet::from_layers(vec![Layer {
            weight: array![[2.0]],
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut grads = GradBuffer::zeros_like(&net);
        grads.weights[0][[0, 0]] = 0.5;
        let mut state = AdamState::new(&net, AdamParams::with_learning_rate(0.01));
        adam_step(&mut net, &grads, &mut state).unwrap();
        let moved = 2.0 - net.layers()[0].weight[[0, 0]];
        assert!((moved - 0.01).abs() < 1e-6, "moved {}", moved);
    }

    #[test]
    fn quadratic_bowl_descends_monotonically_after_warmup() {
        // Scalar simulation: Adam approaches the minimum at roughly one
        // learning rate per step, descending monotonically until the iterate
        // is within a step of the bottom, where it dithers at noise scale.
        let mut net = DenseNet::from_layers(vec![Layer {
            weight: array![[5.0]],
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut state = AdamState::new(&net, AdamParams::with_learning_rate(0.05));
        let loss_of = |w: f64| (w - 3.0) * (w - 3.0);
        let mut losses = Vec::new();
        for _ in 0..100 {
            let w = net.layers()[0].weight[[0, 0]];
            losses.push(loss_of(w));
            let mut grads = GradBuffer::zeros_like(&net);
            grads.weights[0][[0, 0]] = 2.0 * (w - 3.0);
            adam_step(&mut net, &grads, &mut state).unwrap();
        }
        let floor = 0.05f64 * 0.05;
        for pair in losses[10..].windows(2) {
            if pair[0] <= floor {
                break;
            }
            assert!(pair[1] <= pair[0] + 1e-12, "loss rose early: {:?}", pair);
        }
        let tail_max = losses[60..].iter().cloned().fold(0.0f64, f64::max);
        assert!(tail_max <= 4.0 * floor, "tail loss {}", tail_max);
        assert!(losses[59] < losses[0] * 1e-2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut r = rng(29);
        let mut net = DenseNet::random(&[3, 2], &[Activation::Tanh], &mut r).unwrap();
        let other = DenseNet::random(&[4, 2], &[Activation::Tanh], &mut r).unwrap();
        let grads = GradBuffer::zeros_like(&other);
        let mut state = AdamState::new(&net, AdamParams::with_learning_rate(0.01));
        assert!(adam_step(&mut net, &grads, &mut state).is_err());
    }
}

#[test]
fn tanh_output_layer_stays_in_the_unit_box() {
    let mut r = rng(31);
    let net = DenseNet::random(
        &[252, 32, 2],
        &[Activation::Tanh, Activation::Tanh],
        &mut r,
    )
    .unwrap();
    let batch = Array2::from_shape_fn((16, 252), |(i, j)| ((i * j) as f64 * 0.13).sin() * 3.0);
    let (out, _) = net.forward(&batch).unwrap();
    assert!(out.iter().all(|&v| (-1.0..=1.0).contains(&v)));
}

#[test]
fn identical_seeds_give_identical_training_trajectories() {
    let run = || {
        let mut r = rng(47);
        let mut net = DenseNet::random(&[4, 3, 2], &[Activation::Tanh, Activation::Identity], &mut r)
            .unwrap();
        let mut state = AdamState::new(&net, AdamParams::with_learning_rate(0.01));
        let batch = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin());
        let target = Array2::from_shape_fn((5, 2), |(i, j)| ((i + j) as f64 * 0.3).cos());
        for _ in 0..20 {
            let (pred, cache) = net.forward(&batch).unwrap();
            let (_, dpred) = mse(&pred, &target).unwrap();
            let grads = net.backward_params(&cache, &dpred).unwrap();
            adam_step(&mut net, &grads, &mut state).unwrap();
        }
        net
    };
    let a = run();
    let b = run();
    assert_eq!(a.layers(), b.layers());
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let mut r = rng(53);
    let net = DenseNet::random(
        &[6, 4, 3],
        &[Activation::Sigmoid, Activation::Identity],
        &mut r,
    )
    .unwrap();
    let mut buf = Vec::new();
    checkpoint::save_net(&net, &mut buf).unwrap();
    let loaded = checkpoint::load_net(&mut buf.as_slice()).unwrap();
    assert_eq!(net.layers(), loaded.layers());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let buf = vec![9u8, 0, 0, 0, 0];
    assert!(matches!(
        checkpoint::load_net(&mut buf.as_slice()),
        Err(NnError::Checkpoint(_))
    ));
}
