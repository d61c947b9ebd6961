//! Dense two-stage autoencoder: `y -> x~ -> e~ -> x^ -> y~`.
//!
//! Layer 1 inverts the observation process, layers 2 and 3 invert and
//! re-apply the environment response, layer 4 re-applies the observation
//! process. All layers share the window width. Training is plain mini-batch
//! backpropagation with per-layer freezing.

mod checkpoint;
mod grad;
pub mod gradcheck;
mod layer;
mod network;
mod optim;
mod train;

pub use checkpoint::Checkpoint;
pub use grad::{loss_and_gradients, Gradients, LayerGradient, LossComponents};
pub use layer::{Activation, DenseLayer};
pub use network::{calibrate, init_bound, init_network, to_windows, MlpNetwork, Stage, StageOutputs, NUM_LAYERS};
pub use optim::OptimizerKind;
pub use train::{train, EpochRecord, FrozenLayers, TrainConfig, TrainTrace};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::signal::SignalSeries;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn random_net(w: usize, seed: u64) -> MlpNetwork {
        gradcheck::random_network(w, seed).unwrap()
    }

    fn fd_check(net: &MlpNetwork, y: &[f64], x: Option<&[f64]>, cfg: &TrainConfig) -> f64 {
        gradcheck::max_relative_error(net, y, x, cfg, gradcheck::FD_STEP).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        assert_eq!(init_network(8, 1).unwrap(), init_network(8, 1).unwrap());
        assert_ne!(init_network(8, 1).unwrap(), init_network(8, 2).unwrap());
        let net = init_network(8, 1).unwrap();
        let bound = (6.0_f64 / 16.0).sqrt();
        for l in net.layers() {
            assert!(l.weights().iter().all(|w| w.abs() < bound));
            assert!(l.bias().iter().all(|b| *b == 0.0));
            assert!(l.trainable);
        }
        let acts: Vec<_> = net.layers().iter().map(|l| l.activation).collect();
        assert_eq!(acts, [Activation::Tanh, Activation::Tanh, Activation::Tanh, Activation::Linear]);
    }

    #[test]
    fn init_shapes() {
        let net = init_network(128, 5).unwrap();
        for l in net.layers() {
            assert_eq!((l.out_width(), l.in_width()), (128, 128));
            assert_eq!(l.weights().len(), 128 * 128);
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let layers = [
            DenseLayer::zeros(3, 3, Activation::Tanh),
            DenseLayer::zeros(3, 3, Activation::Tanh),
            DenseLayer::zeros(3, 3, Activation::Tanh),
            DenseLayer::zeros(3, 3, Activation::Linear),
        ];
        let net = MlpNetwork::from_layers(layers).unwrap();
        let out = net.forward(&[1.0, -2.0, 3.0]).unwrap();
        for v in [&out.x_tilde, &out.e_tilde, &out.x_hat, &out.y_tilde] {
            assert!(v.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mk = |w: [f64; 4], b: [f64; 2], act| DenseLayer::new(w.to_vec(), b.to_vec(), 2, act).unwrap();
        let net = MlpNetwork::from_layers([
            mk([0.5, -0.25, 0.1, 0.2], [0.1, -0.1], Activation::Tanh),
            mk([1.0, 0.5, -0.5, 1.0], [0.0, 0.2], Activation::Tanh),
            mk([0.3, 0.0, 0.0, -0.7], [0.05, 0.0], Activation::Tanh),
            mk([2.0, 1.0, -1.0, 0.5], [0.25, -0.5], Activation::Linear),
        ])
        .unwrap();
        let y = [0.8, -0.4];
        let out = net.forward(&y).unwrap();

        let x1 = (0.5 * 0.8 + -0.25 * -0.4 + 0.1_f64).tanh();
        let x2 = (0.1 * 0.8 + 0.2 * -0.4 - 0.1_f64).tanh();
        let e1 = (1.0 * x1 + 0.5 * x2 + 0.0_f64).tanh();
        let e2 = (-0.5 * x1 + 1.0 * x2 + 0.2_f64).tanh();
        let h1 = (0.3 * e1 + 0.05_f64).tanh();
        let h2 = (-0.7 * e2 + 0.0_f64).tanh();
        let y1 = 2.0 * h1 + 1.0 * h2 + 0.25;
        let y2 = -h1 + 0.5 * h2 - 0.5;
        for (got, want) in [
            (out.x_tilde[0], x1),
            (out.x_tilde[1], x2),
            (out.e_tilde[0], e1),
            (out.e_tilde[1], e2),
            (out.x_hat[0], h1),
            (out.x_hat[1], h2),
            (out.y_tilde[0], y1),
            (out.y_tilde[1], y2),
        ] {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = init_network(4, 0).unwrap();
        assert!(matches!(net.forward(&[1.0; 3]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn outputs_are_finite() {
        let net = random_net(6, 3);
        let out = net.forward(&[1e6, -1e6, 3.0, 0.0, 2.5, -7.0]).unwrap();
        assert!(out.y_tilde.iter().chain(&out.x_tilde).all(|v| v.is_finite()));
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss_and_gradient() {
        let net = random_net(4, 9);
        let y_in = [0.2, -0.1, 0.4, 0.3];
        let out = net.forward(&y_in).unwrap();
        // Present the network's own outputs as targets: y~ = y and x~ = x.
        let cfg = TrainConfig::default();
        let mut shifted = net.clone();
        // Make y~ equal the input by choosing the output bias.
        for (b, (yt, yv)) in shifted
            .layer_mut(Stage::ObservationForward)
            .bias_mut()
            .iter_mut()
            .zip(out.y_tilde.iter().zip(&y_in))
        {
            *b += yv - yt;
        }
        let x_target = shifted.forward(&y_in).unwrap().x_tilde;
        let (loss, grads) = loss_and_gradients(&shifted, &y_in, Some(&x_target), &cfg).unwrap();
        assert!(loss.total.abs() < 1e-28);
        assert!(grads.max_abs() < 1e-14);
    }

    #[test]
    fn alpha_zero_is_pure_reconstruction() {
        let net = random_net(4, 4);
        let y = [0.5, 0.1, -0.3, 0.9];
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.7,
            window_length: 4,
            ..TrainConfig::default()
        };
        let (loss, _) = loss_and_gradients(&net, &y, None, &cfg).unwrap();
        let yt = net.forward(&y).unwrap().y_tilde;
        let mse = yt.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 4.0;
        assert_eq!(loss.total, 0.7 * mse);
        assert_eq!(loss.loss_x, None);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = TrainConfig::default();
        for seed in 0..4 {
            let net = random_net(4, seed);
            let y = random_vec(&mut rng, 4, 1.0);
            let x = random_vec(&mut rng, 4, 1.0);
            let worst = fd_check(&net, &y, Some(&x), &cfg);
            assert!(worst < 1e-4, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn frozen_layers_report_non_applicable_gradients() {
        let mut net = random_net(4, 1);
        net.set_trainable(Stage::EnvironmentInverse, false);
        let (_, grads) = loss_and_gradients(&net, &[0.1; 4], None, &TrainConfig::default()).unwrap();
        assert!(!grads.layers[1].applicable);
        assert!(grads.layers[0].applicable);
        assert!(grads.layers[1].weights.iter().any(|g| *g != 0.0));
    }

    fn toy_data(w: usize, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, w, 0.8)).collect();
        let ys = xs.iter().map(|x| x.iter().map(|v| v + 0.2 * v * v).collect()).collect();
        (ys, xs)
    }

    fn small_cfg(w: usize) -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            window_length: w,
            learning_rate: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn full_freeze_leaves_network_untouched() {
        let (ys, xs) = toy_data(6, 20, 1);
        let mut net = init_network(6, 2).unwrap();
        let before = net.clone();
        let frozen: FrozenLayers = Stage::ALL.into_iter().collect();
        let trace = train(&mut net, &ys, Some(&xs), &small_cfg(6), &frozen).unwrap();
        assert_eq!(trace.len(), 30);
        for (a, b) in net.layers().iter().zip(before.layers()) {
            assert_eq!(a.weights(), b.weights());
            assert_eq!(a.bias(), b.bias());
        }
    }

    #[test]
    fn partial_freeze_touches_only_trainable_layers() {
        let (ys, _) = toy_data(6, 20, 2);
        let mut net = init_network(6, 4).unwrap();
        let before = net.clone();
        let frozen: FrozenLayers = Stage::ENVIRONMENT.into_iter().collect();
        let cfg = TrainConfig { alpha: 0.0, ..small_cfg(6) };
        let trace = train(&mut net, &ys, None, &cfg, &frozen).unwrap();
        assert!(trace.records.iter().all(|r| r.loss_x.is_none()));
        for stage in Stage::ALL {
            let same = net.layer(stage).weights() == before.layer(stage).weights()
                && net.layer(stage).bias() == before.layer(stage).bias();
            assert_eq!(same, frozen.contains(&stage), "{stage:?}");
        }
        let last = trace.last().unwrap().loss_y;
        assert!(last < trace.first().unwrap().loss_y);
    }

    #[test]
    fn training_is_deterministic() {
        let (ys, xs) = toy_data(5, 16, 3);
        let run = || {
            let mut net = init_network(5, 8).unwrap();
            let trace = train(&mut net, &ys, Some(&xs), &small_cfg(5), &FrozenLayers::new()).unwrap();
            (net, trace)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sgd_training_reduces_loss() {
        let (ys, xs) = toy_data(4, 32, 5);
        let mut net = init_network(4, 1).unwrap();
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.05,
            ..small_cfg(4)
        };
        let trace = train(&mut net, &ys, Some(&xs), &cfg, &FrozenLayers::new()).unwrap();
        assert!(trace.last().unwrap().total < 0.5 * trace.first().unwrap().total);
    }

    #[test]
    fn train_errors() {
        let mut net = init_network(4, 1).unwrap();
        let cfg = small_cfg(4);
        assert!(matches!(train(&mut net, &[], None, &cfg, &FrozenLayers::new()), Err(Error::EmptyDataset)));
        let ys = vec![vec![0.0; 4]; 3];
        let xs = vec![vec![0.0; 4]; 2];
        assert!(train(&mut net, &ys, Some(&xs), &cfg, &FrozenLayers::new()).is_err());
        let bad = vec![vec![0.0; 3]];
        assert!(matches!(train(&mut net, &bad, None, &cfg, &FrozenLayers::new()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let (ys, xs) = toy_data(4, 8, 6);
        let mut net = init_network(4, 1).unwrap();
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e200,
            ..small_cfg(4)
        };
        assert!(matches!(
            train(&mut net, &ys, Some(&xs), &cfg, &FrozenLayers::new()),
            Err(Error::Diverged { .. })
        ));
    }

    fn identity_stage_one(w: usize) -> MlpNetwork {
        let mut net = init_network(w, 0).unwrap();
        let l1 = net.layer_mut(Stage::ObservationInverse);
        l1.activation = Activation::Linear;
        l1.weights_mut().iter_mut().for_each(|v| *v = 0.0);
        for i in 0..w {
            l1.weights_mut()[i * w + i] = 1.0;
        }
        net
    }

    #[test]
    fn calibrate_preserves_length_and_identity() {
        let net = identity_stage_one(8);
        let y = SignalSeries::new((0..21).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
        let out = calibrate(&net, &y, 8).unwrap();
        assert_eq!(out.len(), y.len());
        for (a, b) in out.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let short = SignalSeries::new(vec![0.5, -0.25, 1.0]).unwrap();
        assert_eq!(calibrate(&net, &short, 8).unwrap(), short);
    }

    #[test]
    fn calibrate_honours_signal_scale() {
        let mut net = identity_stage_one(4);
        net.set_signal_scale(2.0).unwrap();
        let y = SignalSeries::new(vec![1.0, 2.0, -3.0, 4.0, 5.0]).unwrap();
        assert_eq!(calibrate(&net, &y, 4).unwrap(), y);
        assert!(calibrate(&net, &y, 5).is_err());
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let mut net = random_net(5, 12);
        net.set_trainable(Stage::EnvironmentForward, false);
        net.set_signal_scale(1.5).unwrap();
        let ckpt = Checkpoint {
            network: net,
            train: TrainConfig {
                learning_rate: 3.3e-4,
                optimizer: OptimizerKind::Sgd,
                window_length: 5,
                seed: u64::MAX,
                ..TrainConfig::default()
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.network.layers().iter().zip(ckpt.network.layers()) {
            assert!(a.weights().iter().zip(b.weights()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let p = std::path::Path::new("x.ckpt");
        assert!(matches!(Checkpoint::parse("hello", p), Err(Error::Parse { line: 1, .. })));
        assert!(Checkpoint::parse("driftcal-checkpoint 9\n", p).is_err());
        let mut text = Checkpoint {
            network: init_network(2, 0).unwrap(),
            train: TrainConfig { window_length: 2, ..TrainConfig::default() },
        }
        .to_text();
        text = text.replacen("bias 0e0 0e0", "bias 0e0", 1);
        assert!(matches!(Checkpoint::parse(&text, p), Err(Error::Parse { .. })));
    }
}
