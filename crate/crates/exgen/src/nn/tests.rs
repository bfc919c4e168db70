use ndarray::{Array1, Array2, Array4};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{
    max_rel_error, numeric_input_grads, numeric_param_grads, weighted_sum_grad, weighted_sum_loss,
};
use super::*;

fn mat_input(rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        scale * (((r * 31 + c * 17) as f64 * 0.613).sin())
    })
}

fn grid_input(b: usize, c: usize, h: usize, w: usize) -> Array4<f64> {
    Array4::from_shape_fn((b, c, h, w), |(bi, ci, y, x)| {
        (((bi * 101 + ci * 53 + y * 13 + x * 7) as f64) * 0.329).sin()
    })
}

/// Backprop through `net` on `input` and compare every parameter gradient
/// (and the input gradient for matrix inputs) against central differences.
fn assert_gradcheck(
    arch: ArchDescriptor,
    input: Value<f64>,
    cond: Option<Array1<f64>>,
    dropout_seed: Option<u64>,
) {
    let mut net = build_network::<f64>(&arch, 42).unwrap();
    assert!(net.param_count() <= 1000, "keep gradcheck nets small");
    let run = |net: &Network<f64>, input: &Value<f64>| -> (Value<f64>, Tape<f64>) {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        net.forward(input.clone(), cond.as_ref(), dropout_seed.is_some(), rng.as_mut())
            .unwrap()
    };

    let (y, tape) = run(&net, &input);
    let (grads, input_grad) = net.backward(&tape, weighted_sum_grad(&y)).unwrap();

    let input_for_eval = input.clone();
    let numeric = numeric_param_grads(&mut net, 1e-4, |n| {
        let (y, _) = run(n, &input_for_eval);
        weighted_sum_loss(&y)
    });

    for (li, layer_grads) in grads.per_layer.iter().enumerate() {
        for (ti, g) in layer_grads.iter().enumerate() {
            let analytic: Vec<f64> = g.data.iter().map(|v| v.as_f64()).collect();
            let err = max_rel_error(&analytic, &numeric[li][ti], 1e-6);
            assert!(
                err < 1e-4,
                "layer {li} ({}) tensor {} rel err {err}",
                net.layers[li].name(),
                g.name
            );
        }
    }

    if let (Value::Mat(m), Value::Mat(gin)) = (&input, &input_grad) {
        let numeric_in = numeric_input_grads(m, 1e-4, |x| {
            let (y, _) = run(&net, &Value::Mat(x.clone()));
            weighted_sum_loss(&y)
        });
        let analytic: Vec<f64> = gin.iter().copied().collect();
        let numeric: Vec<f64> = numeric_in.iter().copied().collect();
        let err = max_rel_error(&analytic, &numeric, 1e-6);
        assert!(err < 1e-4, "input grad rel err {err}");
    }
}

#[test]
fn build_is_deterministic() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 20 },
        vec![
            LayerSpec::Dense {
                in_dim: 20,
                out_dim: 64,
            },
            LayerSpec::Tanh,
        ],
    );
    let a = build_network::<f32>(&arch, 7).unwrap();
    let b = build_network::<f32>(&arch, 7).unwrap();
    for ((na, _, pa), (nb, _, pb)) in a.named_params().iter().zip(b.named_params().iter()) {
        assert_eq!(na, nb);
        assert_eq!(pa, pb, "same seed must give identical parameters");
    }
    let c = build_network::<f32>(&arch, 8).unwrap();
    assert_ne!(a.named_params()[0].2, c.named_params()[0].2);
}

#[test]
fn dense_weight_shape() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 20 },
        vec![LayerSpec::Dense {
            in_dim: 20,
            out_dim: 64,
        }],
    );
    let net = build_network::<f32>(&arch, 0).unwrap();
    let params = net.named_params();
    assert_eq!(params[0].0, "layer00.weight");
    assert_eq!(params[0].1, vec![20, 64]);
}

#[test]
fn conv_init_matches_target_stddev() {
    // One conv layer with 1e6 weights: 100 out, 625 in·k·k = 100·100·10·10... use
    // (out 40, in 25, k 32) = 40·25·32·32 = 1_024_000 weights.
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 25, h: 32, w: 32 },
        vec![LayerSpec::Conv {
            in_ch: 25,
            out_ch: 40,
            kernel: 32,
            stride: 1,
            pad: 0,
        }],
    );
    let net = build_network::<f32>(&arch, 3).unwrap();
    let (_, _, w) = &net.named_params()[0];
    let n = w.len() as f64;
    assert!(n >= 1e6);
    let mean = w.iter().map(|v| *v as f64).sum::<f64>() / n;
    let var = w.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    assert!((sd - 0.02).abs() < 0.001, "conv init stddev {sd}");
}

#[test]
fn conv_known_values() {
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 1, h: 3, w: 3 },
        vec![LayerSpec::Conv {
            in_ch: 1,
            out_ch: 1,
            kernel: 2,
            stride: 1,
            pad: 0,
        }],
    );
    let mut net = build_network::<f64>(&arch, 0).unwrap();
    if let Layer::Conv(l) = &mut net.layers[0] {
        l.w.fill(1.0);
        l.b.fill(0.0);
    }
    let x = Array4::from_shape_vec(
        (1, 1, 3, 3),
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
    )
    .unwrap();
    let y = net.infer(Value::Grid(x), None).unwrap().into_grid().unwrap();
    let expect = [12.0, 16.0, 24.0, 28.0];
    for (got, want) in y.iter().zip(expect.iter()) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn conv_t_known_values() {
    // Ones kernel, stride 2, no pad: each input pixel stamps a 2x2 block.
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 1, h: 2, w: 2 },
        vec![LayerSpec::ConvT {
            in_ch: 1,
            out_ch: 1,
            kernel: 2,
            stride: 2,
            pad: 0,
        }],
    );
    let mut net = build_network::<f64>(&arch, 0).unwrap();
    if let Layer::ConvT(l) = &mut net.layers[0] {
        l.w.fill(1.0);
        l.b.fill(0.0);
    }
    let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = net.infer(Value::Grid(x), None).unwrap().into_grid().unwrap();
    assert_eq!(y.shape(), [1, 1, 4, 4]);
    let expect = [
        1.0, 1.0, 2.0, 2.0, //
        1.0, 1.0, 2.0, 2.0, //
        3.0, 3.0, 4.0, 4.0, //
        3.0, 3.0, 4.0, 4.0,
    ];
    for (got, want) in y.iter().zip(expect.iter()) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn leaky_relu_and_zero_dense() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 2 },
        vec![LayerSpec::LeakyRelu { alpha: 0.2 }],
    );
    let net = build_network::<f64>(&arch, 0).unwrap();
    let x = Array2::from_shape_vec((1, 2), vec![-1.0, 3.0]).unwrap();
    let y = net.infer(Value::Mat(x), None).unwrap().into_mat().unwrap();
    assert!((y[(0, 0)] + 0.2).abs() < 1e-15);
    assert!((y[(0, 1)] - 3.0).abs() < 1e-15);

    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 3 },
        vec![LayerSpec::Dense {
            in_dim: 3,
            out_dim: 4,
        }],
    );
    let mut net = build_network::<f64>(&arch, 0).unwrap();
    if let Layer::Dense(l) = &mut net.layers[0] {
        l.w.fill(0.0);
    }
    let y = net
        .infer(Value::Mat(mat_input(2, 3, 1.0)), None)
        .unwrap()
        .into_mat()
        .unwrap();
    assert!(y.iter().all(|v| *v == 0.0));
}

#[test]
fn tanh_generator_output_is_bounded() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 8 },
        vec![
            LayerSpec::Dense {
                in_dim: 8,
                out_dim: 32,
            },
            LayerSpec::LeakyRelu { alpha: 0.2 },
            LayerSpec::Dense {
                in_dim: 32,
                out_dim: 16,
            },
            LayerSpec::Tanh,
        ],
    );
    let net = build_network::<f32>(&arch, 5).unwrap();
    let z = Array2::from_shape_fn((64, 8), |(r, c)| ((r * 7 + c) as f32 * 0.37).sin() * 3.0);
    let y = net.infer(Value::Mat(z), None).unwrap().into_mat().unwrap();
    assert!(y.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn gradcheck_dense_stack() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 5 },
        vec![
            LayerSpec::Dense {
                in_dim: 5,
                out_dim: 7,
            },
            LayerSpec::Tanh,
            LayerSpec::Dense {
                in_dim: 7,
                out_dim: 3,
            },
            LayerSpec::Sigmoid,
        ],
    );
    assert_gradcheck(arch, Value::Mat(mat_input(4, 5, 0.8)), None, None);
}

#[test]
fn gradcheck_conv_stack() {
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 2, h: 6, w: 6 },
        vec![
            LayerSpec::Conv {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::LeakyRelu { alpha: 0.2 },
            LayerSpec::Conv {
                in_ch: 3,
                out_ch: 2,
                kernel: 4,
                stride: 2,
                pad: 1,
            },
            LayerSpec::Sigmoid,
        ],
    );
    assert_gradcheck(arch, Value::Grid(grid_input(2, 2, 6, 6)), None, None);
}

#[test]
fn gradcheck_conv_t_stack() {
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 3, h: 2, w: 2 },
        vec![
            LayerSpec::ConvT {
                in_ch: 3,
                out_ch: 4,
                kernel: 4,
                stride: 2,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::ConvT {
                in_ch: 4,
                out_ch: 1,
                kernel: 4,
                stride: 2,
                pad: 1,
            },
            LayerSpec::Tanh,
        ],
    );
    assert_gradcheck(arch, Value::Grid(grid_input(2, 3, 2, 2)), None, None);
}

#[test]
fn gradcheck_instance_norm() {
    // A dense layer upstream keeps activations at O(1) so the normalizer's
    // 1/sqrt(var + eps) stays well-conditioned for the numeric oracle, while
    // its gradients still flow through the normalization.
    for affine in [false, true] {
        let arch = ArchDescriptor::new(
            InputKind::Flat { dim: 8 },
            vec![
                LayerSpec::Dense {
                    in_dim: 8,
                    out_dim: 18,
                },
                LayerSpec::ToGrid { ch: 2, h: 3, w: 3 },
                LayerSpec::InstanceNorm { ch: 2, affine },
                LayerSpec::LeakyRelu { alpha: 0.2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_dim: 18,
                    out_dim: 2,
                },
            ],
        );
        assert_gradcheck(arch, Value::Mat(mat_input(3, 8, 1.0)), None, None);
    }
}

#[test]
fn gradcheck_dropout_and_flatten() {
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 2, h: 3, w: 3 },
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense {
                in_dim: 18,
                out_dim: 9,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { p: 0.4 },
            LayerSpec::Dense {
                in_dim: 9,
                out_dim: 2,
            },
        ],
    );
    assert_gradcheck(arch, Value::Grid(grid_input(3, 2, 3, 3)), None, Some(99));
}

#[test]
fn gradcheck_concat_cond_and_to_grid() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 6 },
        vec![
            LayerSpec::Dense {
                in_dim: 6,
                out_dim: 8,
            },
            LayerSpec::LeakyRelu { alpha: 0.2 },
            LayerSpec::ConcatCond,
            LayerSpec::Dense {
                in_dim: 9,
                out_dim: 4,
            },
            LayerSpec::ToGrid { ch: 1, h: 2, w: 2 },
            LayerSpec::Tanh,
        ],
    );
    let cond = Array1::from_vec(vec![0.3, -0.7, 1.1]);
    assert_gradcheck(arch, Value::Mat(mat_input(3, 6, 1.0)), Some(cond), None);
}

#[test]
fn adam_zero_gradients_keep_parameters() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 3 },
        vec![LayerSpec::Dense {
            in_dim: 3,
            out_dim: 2,
        }],
    );
    let net = build_network::<f32>(&arch, 1).unwrap();
    let mut model = Model::new(net);
    let before: Vec<f32> = model.net.named_params()[0].2.to_vec();
    let grads = Gradients::zeros_like(&model.net);
    model.step(&grads, 0.1, &AdamConfig::default()).unwrap();
    assert_eq!(model.opt.step, 1);
    assert_eq!(model.net.named_params()[0].2, before.as_slice());
}

#[test]
fn adam_first_step_moves_by_lr() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 1 },
        vec![LayerSpec::Dense {
            in_dim: 1,
            out_dim: 1,
        }],
    );
    let net = build_network::<f32>(&arch, 1).unwrap();
    let mut model = Model::new(net);
    let w0 = model.net.named_params()[0].2[0];
    let mut grads = Gradients::zeros_like(&model.net);
    grads.per_layer[0][0].data[0] = 1.0;
    model.step(&grads, 0.1, &AdamConfig::default()).unwrap();
    let w1 = model.net.named_params()[0].2[0];
    // Bias-corrested first step is lr·sign(g) up to eps.
    assert!(((w0 - w1) - 0.1).abs() < 1e-6, "step was {}", w0 - w1);
}

#[test]
fn adam_clips_gradient_components() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 1 },
        vec![LayerSpec::Dense {
            in_dim: 1,
            out_dim: 1,
        }],
    );
    let cfg = AdamConfig::default(); // clip = 20
    // Two steps: the first bias-corrected step is lr·sign(g) no matter the
    // magnitude, but the accumulated second moment separates magnitudes on
    // the second step.
    let run = |g: f32| -> f32 {
        let net = build_network::<f32>(&arch, 1).unwrap();
        let mut model = Model::new(net);
        let mut grads = Gradients::zeros_like(&model.net);
        grads.per_layer[0][0].data[0] = g;
        model.step(&grads, 0.01, &cfg).unwrap();
        grads.per_layer[0][0].data[0] = 1.0;
        model.step(&grads, 0.01, &cfg).unwrap();
        model.net.named_params()[0].2[0]
    };
    assert_eq!(run(100.0), run(20.0));
    assert_ne!(run(100.0), run(10.0));
}

#[test]
fn arch_validation_names_offending_layer() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 4 },
        vec![
            LayerSpec::Dense {
                in_dim: 4,
                out_dim: 8,
            },
            LayerSpec::Dense {
                in_dim: 9, // wrong
                out_dim: 2,
            },
        ],
    );
    let err = build_network::<f32>(&arch, 0).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("layer 1"), "got: {msg}");
    assert!(msg.contains("dense"), "got: {msg}");
}

#[test]
fn forward_rejects_wrong_shapes_and_cond() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 4 },
        vec![LayerSpec::Dense {
            in_dim: 4,
            out_dim: 2,
        }],
    );
    let net = build_network::<f32>(&arch, 0).unwrap();
    let bad = Array2::<f32>::zeros((2, 5));
    assert!(matches!(
        net.infer(Value::Mat(bad), None),
        Err(NnError::ShapeMismatch { .. })
    ));
    let ok = Array2::<f32>::zeros((2, 4));
    let cond = Array1::from_vec(vec![1.0f32, 2.0]);
    assert!(matches!(
        net.infer(Value::Mat(ok), Some(&cond)),
        Err(NnError::SuperfluousCond)
    ));

    let arch_c = ArchDescriptor::new(InputKind::Flat { dim: 4 }, vec![LayerSpec::ConcatCond]);
    let net_c = build_network::<f32>(&arch_c, 0).unwrap();
    assert!(matches!(
        net_c.infer(Value::Mat(Array2::<f32>::zeros((2, 4))), None),
        Err(NnError::MissingCond)
    ));
}

#[test]
fn assert_finite_catches_nan() {
    let arch = ArchDescriptor::new(
        InputKind::Flat { dim: 2 },
        vec![LayerSpec::Dense {
            in_dim: 2,
            out_dim: 2,
        }],
    );
    let mut net = build_network::<f32>(&arch, 0).unwrap();
    assert!(net.assert_finite().is_ok());
    if let Layer::Dense(l) = &mut net.layers[0] {
        l.w[(0, 0)] = f32::NAN;
    }
    assert!(matches!(net.assert_finite(), Err(NnError::NonFinite(_))));
}

#[test]
fn instance_norm_normalizes_each_channel() {
    let arch = ArchDescriptor::new(
        InputKind::Grid { ch: 2, h: 4, w: 4 },
        vec![LayerSpec::InstanceNorm {
            ch: 2,
            affine: false,
        }],
    );
    let net = build_network::<f64>(&arch, 0).unwrap();
    let x = grid_input(2, 2, 4, 4) * 3.0 + 1.0;
    let y = net.infer(Value::Grid(x), None).unwrap().into_grid().unwrap();
    for bi in 0..2 {
        for ci in 0..2 {
            let plane = y.index_axis(ndarray::Axis(0), bi);
            let plane = plane.index_axis(ndarray::Axis(0), ci);
            let mean = plane.iter().sum::<f64>() / 16.0;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-3); // eps shifts it slightly
        }
    }
}
