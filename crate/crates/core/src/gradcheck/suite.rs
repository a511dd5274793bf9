//! Gradient checks of every layer type and of a tiny complete network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{grad_check, GradCheckReport, DEFAULT_STEP};
use crate::data::{assemble, synthetic_dataset, SyntheticSpec};
use crate::error::Result;
use crate::model::{ForwardCtx, ModuleShape, ParamBuilder, Ps8Config, Ps8Module, Ps8Net, SkBlock};
use crate::ops::norm::{BatchNormSettings, RunningStats};
use crate::tape::{Mode, Tape, Var};
use crate::tensor::Tensor;

/// One named check and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub name: String,
    pub report: GradCheckReport,
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<f64> {
    let data = (0..shape.iter().product())
        .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Contracts `y` with fixed random weights so every output element matters.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..tape.value(y).numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    tape.weighted_sum(y, weights)
}

/// Every parameter of `params` nudged by uniform noise in ±0.2 when it is a bias,
/// shift or scale, so no ReLU input sits exactly at zero.
fn jitter_offsets(names: &[String], tensors: &mut [Tensor<f64>], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in names.iter().zip(tensors) {
        if name.ends_with("bias") || name.ends_with("beta") || name.ends_with("gamma") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
    }
}

/// Runs the per-layer checks followed by the tiny network check.
pub fn layer_suite(seed: u64) -> Result<Vec<LayerCheck>> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = DEFAULT_STEP;
    let mut push = |name: String, report: GradCheckReport| checks.push(LayerCheck { name, report });

    for k in [1usize, 3, 5, 11] {
        let inputs = [normal(&mut rng, &[2, 6, 3], 1.0), normal(&mut rng, &[4, k, 3], 0.5), normal(&mut rng, &[4], 0.5)];
        let r = grad_check(&inputs, h, |t, v| {
            let y = t.conv1d_same(v[0], v[1], v[2])?;
            project(t, y, seed)
        })?;
        push(format!("conv k={k}"), r);
    }

    let x = normal(&mut rng, &[2, 5, 3], 1.0);
    push(
        "relu".into(),
        grad_check(&[x], h, |t, v| {
            let y = t.relu(v[0]);
            project(t, y, seed)
        })?,
    );

    let running = RunningStats {
        mean: vec![0.1, -0.2, 0.3],
        var: vec![0.5, 1.5, 2.0],
    };
    for mode in [Mode::Train, Mode::Infer] {
        let inputs = [normal(&mut rng, &[2, 5, 3], 1.0), normal(&mut rng, &[3], 1.0), normal(&mut rng, &[3], 1.0)];
        let r = grad_check(&inputs, h, |t, v| {
            let (y, _) = t.batch_norm(v[0], v[1], v[2], &running, mode, BatchNormSettings::default())?;
            project(t, y, seed)
        })?;
        push(format!("batchnorm {}", if mode == Mode::Train { "train" } else { "infer" }), r);
    }

    let x = normal(&mut rng, &[2, 5, 4], 1.0);
    push(
        "dropout".into(),
        grad_check(&[x], h, |t, v| {
            let y = t.dropout(v[0], 0.5, seed, Mode::Train)?;
            project(t, y, seed)
        })?,
    );

    let inputs = [normal(&mut rng, &[2, 3, 2], 1.0), normal(&mut rng, &[2, 3, 4], 1.0)];
    push(
        "concat".into(),
        grad_check(&inputs, h, |t, v| {
            let y = t.concat_channels(&[v[0], v[1]])?;
            project(t, y, seed)
        })?,
    );

    let x = normal(&mut rng, &[2, 3, 6], 1.0);
    push(
        "slice".into(),
        grad_check(&[x], h, |t, v| {
            let y = t.slice_channels(v[0], 2, 3)?;
            project(t, y, seed)
        })?,
    );

    let inputs = [normal(&mut rng, &[2, 3, 4], 1.0), normal(&mut rng, &[2, 3, 4], 1.0)];
    push(
        "add".into(),
        grad_check(&inputs, h, |t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, seed)
        })?,
    );

    let inputs = [normal(&mut rng, &[2, 3, 4], 1.0), normal(&mut rng, &[4, 5], 0.5), normal(&mut rng, &[5], 0.5)];
    push(
        "affine".into(),
        grad_check(&inputs, h, |t, v| {
            let y = t.affine(v[0], v[1], v[2])?;
            project(t, y, seed)
        })?,
    );

    let mut onehot = Tensor::<f64>::zeros([2, 4, 21]);
    for row in 0..8 {
        onehot.data_mut()[row * 21 + rng.random_range(0..21)] = 1.0;
    }
    let table = normal(&mut rng, &[21, 21], 1.0);
    push(
        "embed".into(),
        grad_check(&[table], h, |t, v| {
            let x = t.constant(onehot.clone());
            let y = t.embed(x, v[0])?;
            project(t, y, seed)
        })?,
    );

    let x = normal(&mut rng, &[2, 3, 8], 1.0);
    push(
        "softmax".into(),
        grad_check(&[x], h, |t, v| {
            let y = t.softmax_rows(v[0]);
            project(t, y, seed)
        })?,
    );

    let x = normal(&mut rng, &[2, 4, 8], 1.0);
    let labels: Vec<u8> = (0..8).map(|_| rng.random_range(0..8)).collect();
    let mask = [true, true, true, false, true, true, false, false];
    push(
        "masked cross-entropy".into(),
        grad_check(&[x], h, |t, v| {
            let p = t.softmax_rows(v[0]);
            t.masked_cross_entropy(p, &labels, &mask)
        })?,
    );

    let mut b = ParamBuilder::<f64>::new(seed);
    let block = SkBlock::build(&mut b, "sk", 3, 4, 3);
    // In train mode a convolution bias feeding batch normalization has an exactly
    // zero gradient, which leaves only round-off for the difference quotient.
    push("sk block".into(), check_built(b, seed, &[2, 5, 3], Mode::Infer, |ctx, x| block.forward(ctx, x))?);

    let mut b = ParamBuilder::<f64>::new(seed);
    let shape = ModuleShape {
        cin: 3,
        hidden: 4,
        series_width: 2,
        skip_kernel: 3,
        skip_blocks: 1,
        dropout: 0.0,
    };
    let module = Ps8Module::build(&mut b, "module", &shape);
    push("ps8 module".into(), check_built(b, seed, &[2, 4, 3], Mode::Infer, |ctx, x| module.forward(ctx, x))?);

    push("network".into(), tiny_network(seed)?);
    Ok(checks)
}

/// Checks a built block against its parameters and a random input together.
fn check_built<F>(mut b: ParamBuilder<f64>, seed: u64, input_shape: &[usize], mode: Mode, forward: F) -> Result<GradCheckReport>
where
    F: Fn(&mut ForwardCtx<'_, f64>, Var) -> Result<Var>,
{
    let names = b.params.names().to_vec();
    jitter_offsets(&names, b.params.tensors_mut(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut inputs = b.params.tensors().to_vec();
    inputs.push(normal(&mut rng, input_shape, 1.0));
    let stats = b.stats;
    grad_check(&inputs, DEFAULT_STEP, |t, v| {
        let (params, x) = v.split_at(v.len() - 1);
        let mut ctx = ForwardCtx::new(t, params, &stats, mode, BatchNormSettings::default(), seed);
        let y = forward(&mut ctx, x[0])?;
        project(ctx.tape, y, seed)
    })
}

/// Every parameter of a width-4 network on two length-4 proteins, infer mode.
fn tiny_network(seed: u64) -> Result<GradCheckReport> {
    let data = synthetic_dataset(&SyntheticSpec {
        count: 2,
        window: 4,
        min_len: 4,
        max_len: 4,
        seed,
        ..SyntheticSpec::default()
    });
    let batch = assemble(&data.records, &[0, 1])?;
    let x = batch.features.cast::<f64>();
    let config = Ps8Config {
        module_dropout: 0.0,
        dense_dropout: 0.0,
        ..Ps8Config::uniform(4)
    };
    let net = Ps8Net::<f64>::build(config, seed)?;
    let mut inputs = net.params().tensors().to_vec();
    jitter_offsets(net.params().names(), &mut inputs, seed);
    grad_check(&inputs, DEFAULT_STEP, |t, v| {
        let xv = t.constant(x.clone());
        let f = net.forward_with(t, v, xv, Mode::Infer, seed)?;
        t.masked_cross_entropy(f.probs, &batch.labels, &batch.mask)
    })
}
