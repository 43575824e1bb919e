use aedcnn_core::analyzer::count_macs;
use aedcnn_core::graph::{forward_traced, LayerShape};
use aedcnn_core::model_io::quantize_roundtrip;
use aedcnn_core::{
    build_preset, classify, forward, Arch, Error, FrontendConfig, IntegrityError, LayerSpec,
    ModelWeights, NetworkSpec, Shape3, Tensor,
};
use aedcnn_testkit::{test_signal, SplitMix};

fn mel_input() -> Tensor {
    aedcnn_core::frontend::log_mel_spectrogram(
        &test_signal(16_000, 4.0, 9),
        &FrontendConfig::default(),
    )
    .unwrap()
}

fn custom(h: usize, w: usize, c: usize, layers: Vec<LayerSpec>, classes: usize) -> NetworkSpec {
    NetworkSpec {
        arch: Arch::Custom,
        input_shape: Shape3::new(h, w, c),
        layers,
        num_classes: classes,
    }
}

fn small_specs() -> Vec<NetworkSpec> {
    use LayerSpec as L;
    vec![
        custom(
            8,
            8,
            1,
            vec![
                L::conv(3, 1, 4),
                L::conv(1, 1, 3),
                L::GlobalAvgPool,
                L::Softmax,
            ],
            3,
        ),
        custom(
            8,
            6,
            2,
            vec![
                L::conv(3, 2, 5),
                L::conv(3, 1, 6),
                L::conv(1, 1, 2),
                L::GlobalAvgPool,
                L::Softmax,
            ],
            2,
        ),
        custom(
            7,
            9,
            3,
            vec![
                L::conv(3, 2, 4),
                L::conv(3, 2, 4),
                L::conv(1, 1, 5),
                L::GlobalAvgPool,
                L::Softmax,
            ],
            5,
        ),
        custom(
            12,
            8,
            1,
            vec![
                L::conv(3, 1, 4),
                L::maxpool(2, 2),
                L::conv(3, 1, 8),
                L::maxpool(1, 2),
                L::conv(1, 1, 4),
                L::GlobalAvgPool,
                L::Softmax,
            ],
            4,
        ),
        custom(
            10,
            10,
            2,
            vec![
                L::conv(3, 1, 3),
                L::maxpool(2, 2),
                L::Flatten,
                L::dense(7),
                L::dense(3),
                L::Softmax,
            ],
            3,
        ),
        custom(
            16,
            4,
            1,
            vec![
                L::conv(3, 2, 2),
                L::conv(3, 2, 2),
                L::conv(3, 1, 6),
                L::GlobalAvgPool,
                L::Softmax,
            ],
            6,
        ),
    ]
}

#[test]
fn executed_macs_equal_analyzer_counts() {
    for (n, spec) in small_specs().iter().enumerate() {
        let weights = ModelWeights::seeded_uniform(spec, n as u64).unwrap();
        let s = spec.input_shape;
        let input = Tensor::new(
            s.height,
            s.width,
            s.channels,
            SplitMix::new(n as u64).vec(s.len(), -1.0, 1.0),
        )
        .unwrap();
        let trace = forward_traced(spec, &weights, &input).unwrap();
        let inputs = spec.input_shapes().unwrap();
        for (i, layer) in spec.layers.iter().enumerate() {
            let modeled = count_macs(layer, inputs[i]).unwrap();
            match layer {
                LayerSpec::Conv { .. } => {
                    assert_eq!(trace.layer_macs[i], modeled, "spec {n} layer {i}")
                }
                LayerSpec::Dense { .. } => {
                    // analyzer reports the bias-inclusive figure for fc rows
                    let LayerShape::Vector(fan_in) = inputs[i] else {
                        panic!()
                    };
                    let outputs = modeled / (fan_in as u64 + 1);
                    assert_eq!(trace.layer_macs[i], fan_in as u64 * outputs);
                }
                _ => assert_eq!(trace.layer_macs[i], 0),
            }
        }
    }
}

#[test]
fn cnp_forward_is_a_distribution_and_pure() {
    let spec = build_preset("cnn-cnp").unwrap();
    let weights = ModelWeights::seeded_uniform(&spec, 0).unwrap();
    let input = mel_input();
    let a = forward(&spec, &weights, &input).unwrap();
    let b = forward(&spec, &weights, &input).unwrap();
    assert_eq!(a.len(), 28);
    let sum: f64 = a.iter().map(|&v| v as f64).sum();
    assert!((sum - 1.0).abs() <= 1e-6);
    assert!(a.iter().all(|&p| p > 0.0));
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn zero_weights_give_uniform_output() {
    let spec = build_preset("cnn-c").unwrap();
    let p = forward(&spec, &ModelWeights::zeros(&spec).unwrap(), &mel_input()).unwrap();
    for v in p {
        assert!((v - 1.0 / 28.0).abs() < 1e-7);
    }
}

#[test]
fn concurrent_forward_matches_serial() {
    let spec = custom(
        16,
        16,
        1,
        vec![
            LayerSpec::conv(3, 2, 8),
            LayerSpec::conv(1, 1, 4),
            LayerSpec::GlobalAvgPool,
            LayerSpec::Softmax,
        ],
        4,
    );
    let weights = ModelWeights::seeded_uniform(&spec, 1).unwrap();
    let inputs: Vec<Tensor> = (0..4)
        .map(|i| Tensor::new(16, 16, 1, SplitMix::new(i).vec(256, -1.0, 1.0)).unwrap())
        .collect();
    let serial: Vec<_> = inputs
        .iter()
        .map(|x| forward(&spec, &weights, x).unwrap())
        .collect();
    let parallel: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|x| s.spawn(|| forward(&spec, &weights, x).unwrap()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}

#[test]
fn block_boundaries_of_c_and_cnp_agree() {
    let c = build_preset("cnn-c").unwrap().infer_shapes().unwrap();
    let cnp = build_preset("cnn-cnp").unwrap().infer_shapes().unwrap();
    // after block 1: pool vs stride-2 conv; after block 2: same; then classifier
    assert_eq!(c[2], cnp[1]);
    assert_eq!(c[5], cnp[3]);
    assert_eq!(c[c.len() - 1], cnp[cnp.len() - 1]);
}

#[test]
fn mismatched_weights_and_inputs_are_rejected() {
    let spec = build_preset("cnn-cnp").unwrap();
    let other = NetworkSpec::preset_with_classes(Arch::CnnCnp, 6).unwrap();
    let err = forward(&spec, &ModelWeights::zeros(&other).unwrap(), &mel_input()).unwrap_err();
    assert!(matches!(
        err,
        Error::Integrity(IntegrityError::ShapeMismatch(_))
    ));
    let weights = ModelWeights::zeros(&spec).unwrap();
    let wrong = Tensor::zeros(200, 64, 1).unwrap();
    assert!(matches!(
        forward(&spec, &weights, &wrong),
        Err(Error::Contract(_))
    ));
}

#[test]
fn quantized_weights_drift_little() {
    let input = mel_input();
    for (arch, seed) in [(Arch::CnnCnp, 0u64), (Arch::CnnCnp, 1), (Arch::CnnC, 2)] {
        let spec = NetworkSpec::preset(arch).unwrap();
        let weights = ModelWeights::seeded_uniform(&spec, seed).unwrap();
        let q = quantize_roundtrip(&spec, &weights).unwrap();
        let a = forward(&spec, &weights, &input).unwrap();
        let b = forward(&spec, &q, &input).unwrap();
        let drift = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(drift <= 1e-2, "{arch} seed {seed}: drift {drift}");
    }
}

#[test]
fn large_weights_drift_little_on_a_small_net() {
    // weights up to magnitude 8
    let spec = custom(
        8,
        8,
        1,
        vec![
            LayerSpec::conv(3, 1, 4),
            LayerSpec::conv(1, 1, 5),
            LayerSpec::GlobalAvgPool,
            LayerSpec::Softmax,
        ],
        5,
    );
    let mut weights = ModelWeights::zeros(&spec).unwrap();
    let mut rng = SplitMix::new(42);
    weights.map_values(|_| rng.uniform(-8.0, 8.0));
    let input = Tensor::new(8, 8, 1, SplitMix::new(42).vec(64, -1.0, 1.0)).unwrap();
    let q = quantize_roundtrip(&spec, &weights).unwrap();
    let a = forward(&spec, &weights, &input).unwrap();
    let b = forward(&spec, &q, &input).unwrap();
    let drift = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    assert!(drift <= 1e-2, "drift {drift}");
}

#[test]
fn classify_uses_forward_output() {
    let spec = NetworkSpec::preset_with_classes(Arch::CnnCnp, 6).unwrap();
    let p = forward(
        &spec,
        &ModelWeights::seeded_uniform(&spec, 5).unwrap(),
        &mel_input(),
    )
    .unwrap();
    let labels: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
    let (label, conf) = classify(&p, &labels).unwrap();
    let best = p.iter().copied().fold(0.0f32, f32::max);
    assert_eq!(conf, best);
    assert_eq!(label, labels[p.iter().position(|&v| v == best).unwrap()]);
}
