use proptest::prelude::*;
use ps8net::data::{assemble, synthetic_dataset, SyntheticSpec};
use ps8net::gradcheck::{grad_check, layer_suite, DEFAULT_STEP};
use ps8net::model::{Ps8Config, Ps8Net};
use ps8net::{Mode, Tape, Tensor};

#[test]
fn every_layer_type_passes_gradient_check() {
    let checks = layer_suite(0).unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    for want in ["conv k=1", "conv k=11", "batchnorm train", "batchnorm infer", "embed", "sk block", "network"] {
        assert!(names.contains(&want), "missing {want}");
    }
    for c in &checks {
        assert!(c.report.max_rel_error < 1e-4, "{}: {:?}", c.name, c.report);
        assert!(c.report.checked > 0);
    }
}

#[test]
fn shared_input_accumulates_gradient() {
    let x = Tensor::<f64>::new([1, 4, 2], vec![0.3, -0.2, 0.5, 1.1, -0.7, 0.9, 0.2, -0.4]).unwrap();
    let r = grad_check(&[x], DEFAULT_STEP, |t, v| {
        let s = t.softmax_rows(v[0]);
        let y = t.add(s, v[0])?;
        let z = t.concat_channels(&[y, v[0]])?;
        t.weighted_sum(z, (0..16).map(|i| i as f64 * 0.1 - 0.7).collect())
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-7, "{r:?}");
}

proptest! {
    #[test]
    fn same_convolution_keeps_length(k in prop::sample::select(vec![1usize, 3, 5, 11]), len in 1usize..=32, b in 1usize..3) {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::full([b, len, 2], 0.5));
        let w = tape.constant(Tensor::full([3, k, 2], 0.1));
        let bias = tape.constant(Tensor::zeros([3]));
        let y = tape.conv1d_same(x, w, bias).unwrap();
        prop_assert_eq!(tape.shape(y), &[b, len, 3]);
    }
}

#[test]
fn network_output_is_a_distribution_per_position() {
    let data = synthetic_dataset(&SyntheticSpec {
        count: 2,
        ..SyntheticSpec::default()
    });
    let batch = assemble(&data.records, &[0, 1]).unwrap();
    let net = Ps8Net::<f32>::build(Ps8Config::default().scaled(0.125), 0).unwrap();
    let mut tape = Tape::new();
    let (_, fwd) = net.forward(&mut tape, batch.features, Mode::Train, 9).unwrap();
    let probs = tape.value(fwd.probs);
    assert_eq!(probs.shape(), &[2, 700, 8]);
    for row in probs.data().chunks_exact(8) {
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() < 1e-6, "row sums to {s}");
        assert!(row.iter().all(|&v| v >= 0.0));
    }
}

fn parameter_gradients(net: &Ps8Net<f64>, features: Tensor<f64>, labels: &[u8], mask: &[bool], mode: Mode) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let (params, fwd) = net.forward(&mut tape, features, mode, 0).unwrap();
    let loss = tape.masked_cross_entropy(fwd.probs, labels, mask).unwrap();
    tape.backward(loss).unwrap();
    params.iter().map(|&p| tape.grad(p).unwrap().to_vec()).collect()
}

#[test]
fn padding_beyond_the_receptive_field_is_inert_in_infer_mode() {
    let data = synthetic_dataset(&SyntheticSpec {
        count: 2,
        window: 120,
        min_len: 8,
        max_len: 12,
        seed: 3,
        ..SyntheticSpec::default()
    });
    let cfg = Ps8Config {
        front_width: 6,
        module_widths: vec![4, 4],
        skip2_width: 4,
        dense_widths: vec![6, 6],
        module_dropout: 0.0,
        dense_dropout: 0.0,
        ..Ps8Config::default()
    };
    // Half-widths: front 2+2, each module 1+1+3·1, the kernel-11 block 3·5.
    let reach = 4 + 11 + 15 + 11;
    let net = Ps8Net::<f64>::build(cfg, 4).unwrap();
    let batch = assemble(&data.records, &[0, 1]).unwrap();
    let clean: Tensor<f64> = batch.features.cast();
    let mut noisy = clean.clone();
    for (i, v) in noisy.data_mut().iter_mut().enumerate() {
        let (t, c) = ((i / 42) % 120, i % 42);
        if t >= 12 + reach {
            // A residue letter plus profile noise.
            *v = if c < 21 { (c == t % 21) as u8 as f64 } else { ((i * 7919) % 13) as f64 / 13.0 };
        }
    }
    let a = parameter_gradients(&net, clean.clone(), &batch.labels, &batch.mask, Mode::Infer);
    let b = parameter_gradients(&net, noisy.clone(), &batch.labels, &batch.mask, Mode::Infer);
    assert_eq!(a, b);
    // Batch statistics see every position, padding included.
    let a = parameter_gradients(&net, clean, &batch.labels, &batch.mask, Mode::Train);
    let b = parameter_gradients(&net, noisy, &batch.labels, &batch.mask, Mode::Train);
    assert_ne!(a, b);
}
