//! The network against a straight-line reference written from the architecture
//! description, plus a closed-form parameter count.

use ps8net::data::{assemble, synthetic_dataset, SyntheticSpec};
use ps8net::model::{FeatureSet, ForwardCtx, ModuleShape, ParamBuilder, Ps8Config, Ps8Module, Ps8Net, SkBlock};
use ps8net::ops::{BatchNormSettings, RunningStats};
use ps8net::{Mode, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Seq = Vec<Vec<f64>>;

/// Named parameter and statistic lookups shared by the reference layers.
struct Weights<'a> {
    param: Box<dyn Fn(&str) -> Vec<f64> + 'a>,
    shape: Box<dyn Fn(&str) -> Vec<usize> + 'a>,
    stats: Box<dyn Fn(&str) -> (Vec<f64>, Vec<f64>) + 'a>,
    eps: f64,
}

impl Weights<'_> {
    fn conv(&self, x: &Seq, name: &str) -> Seq {
        let k = (self.param)(&format!("{name}.kernel"));
        let b = (self.param)(&format!("{name}.bias"));
        let s = (self.shape)(&format!("{name}.kernel"));
        let (cout, width, cin) = (s[0], s[1], s[2]);
        let head = width / 2;
        let t_len = x.len();
        (0..t_len)
            .map(|t| {
                (0..cout)
                    .map(|o| {
                        let mut acc = b[o];
                        for j in 0..width {
                            let pos = t as isize + j as isize - head as isize;
                            if pos < 0 || pos >= t_len as isize {
                                continue;
                            }
                            for c in 0..cin {
                                acc += k[(o * width + j) * cin + c] * x[pos as usize][c];
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn bn(&self, x: &Seq, name: &str) -> Seq {
        let g = (self.param)(&format!("{name}.gamma"));
        let b = (self.param)(&format!("{name}.beta"));
        let (mean, var) = (self.stats)(name);
        x.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(c, v)| (v - mean[c]) / (var[c] + self.eps).sqrt() * g[c] + b[c])
                    .collect()
            })
            .collect()
    }

    fn dense(&self, x: &Seq, name: &str) -> Seq {
        let w = (self.param)(&format!("{name}.weight"));
        let b = (self.param)(&format!("{name}.bias"));
        let cout = b.len();
        x.iter()
            .map(|row| {
                (0..cout)
                    .map(|o| b[o] + row.iter().enumerate().map(|(i, v)| v * w[i * cout + o]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    fn sk(&self, x: &Seq, name: &str, projected: bool) -> Seq {
        let h = relu(&self.bn(&self.conv(x, &format!("{name}.conv0")), &format!("{name}.bn0")));
        let h = relu(&self.bn(&self.conv(&h, &format!("{name}.conv1")), &format!("{name}.bn1")));
        let h = self.bn(&self.conv(&h, &format!("{name}.conv2")), &format!("{name}.bn2"));
        let id = if projected { self.conv(x, &format!("{name}.proj")) } else { x.clone() };
        relu(&add(&h, &id))
    }

    fn module(&self, x: &Seq, name: &str, blocks: usize) -> Seq {
        let shallow = |s: &str| {
            let h = relu(&self.conv(x, &format!("{name}.{s}.conv3")));
            relu(&self.conv(&h, &format!("{name}.{s}.conv1")))
        };
        let deep = |s: &str| {
            let mut h = relu(&self.conv(x, &format!("{name}.{s}.conv1")));
            h = relu(&self.conv(&h, &format!("{name}.{s}.conv3")));
            for i in 0..blocks {
                h = self.sk(&h, &format!("{name}.{s}.sk{i}"), false);
            }
            h
        };
        concat(&[shallow("s1"), deep("s2"), deep("s3"), shallow("s4")])
    }

    fn network(&self, cfg: &Ps8Config, x: &Seq) -> Seq {
        let seq: Seq = x.iter().map(|r| r[..21].to_vec()).collect();
        let prof: Seq = x.iter().map(|r| r[21..].to_vec()).collect();
        let embed = || {
            let table = (self.param)("embedding");
            seq.iter()
                .map(|r| (0..21).map(|j| (0..21).map(|i| r[i] * table[i * 21 + j]).sum()).collect())
                .collect::<Seq>()
        };
        let mut h = match cfg.features {
            FeatureSet::Both => concat(&[embed(), prof]),
            FeatureSet::SequenceOnly => embed(),
            FeatureSet::ProfileOnly => prof,
        };
        for i in 0..cfg.front_layers {
            h = relu(&self.conv(&h, &format!("front{i}")));
        }
        for i in 0..cfg.module_widths.len() {
            if i > 0 && cfg.use_skip2 {
                let projected = h[0].len() != cfg.skip2_width;
                h = self.sk(&h, &format!("skip{}", i - 1), projected);
            }
            let blocks = if cfg.use_skip1 { cfg.skip1_per_series } else { 0 };
            h = self.module(&h, &format!("module{i}"), blocks);
        }
        for i in 0..cfg.dense_widths.len() {
            h = relu(&self.dense(&h, &format!("dense{i}")));
        }
        softmax(&self.dense(&h, "output"))
    }
}

fn relu(x: &Seq) -> Seq {
    x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

fn add(a: &Seq, b: &Seq) -> Seq {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect()).collect()
}

fn concat(parts: &[Seq]) -> Seq {
    (0..parts[0].len())
        .map(|t| parts.iter().flat_map(|p| p[t].iter().copied()).collect())
        .collect()
}

fn softmax(x: &Seq) -> Seq {
    x.iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect()
}

fn to_seqs(t: &Tensor<f64>) -> Vec<Seq> {
    let s = t.shape();
    let (b, len, c) = (s[0], s[1], s[2]);
    (0..b)
        .map(|i| (0..len).map(|r| t.data()[(i * len + r) * c..][..c].to_vec()).collect())
        .collect()
}

fn perturb(net: &mut Ps8Net<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = net.params().names().to_vec();
    for (name, t) in names.iter().zip(net.params_mut().tensors_mut()) {
        if name.ends_with("bias") || name.ends_with("beta") || name.ends_with("gamma") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    for (_, s) in net.stats_mut().iter_mut() {
        for m in &mut s.mean {
            *m = rng.random_range(-0.5..0.5);
        }
        for v in &mut s.var {
            *v = rng.random_range(0.3..2.0);
        }
    }
}

fn weights_of(net: &Ps8Net<f64>) -> Weights<'_> {
    Weights {
        param: Box::new(move |n| net.params().by_name(n).unwrap_or_else(|| panic!("no parameter {n}")).data().to_vec()),
        shape: Box::new(move |n| net.params().by_name(n).unwrap().shape().to_vec()),
        stats: Box::new(move |n| {
            let s = net.stats().by_name(n).unwrap_or_else(|| panic!("no statistics {n}"));
            (s.mean.clone(), s.var.clone())
        }),
        eps: net.config().batch_norm.epsilon,
    }
}

fn check_network(cfg: Ps8Config, seed: u64) {
    let data = synthetic_dataset(&SyntheticSpec {
        count: 2,
        window: 9,
        min_len: 5,
        max_len: 9,
        seed,
        ..SyntheticSpec::default()
    });
    let batch = assemble(&data.records, &[0, 1]).unwrap();
    let x = batch.features.cast::<f64>();
    let mut net = Ps8Net::<f64>::build(cfg.clone(), seed).unwrap();
    perturb(&mut net, seed + 1);
    let got = net.predict_probs(x.clone()).unwrap();
    let w = weights_of(&net);
    let mut max_err = 0.0f64;
    for (b, seq) in to_seqs(&x).iter().enumerate() {
        let want = w.network(&cfg, seq);
        for (t, row) in want.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let g = got.data()[(b * seq.len() + t) * 8 + c];
                max_err = max_err.max((g - v).abs());
            }
        }
    }
    assert!(max_err < 1e-5, "{cfg:?}: max error {max_err}");
}

fn tiny(width: usize) -> Ps8Config {
    Ps8Config::uniform(width)
}

#[test]
fn full_network_matches_reference() {
    check_network(tiny(4), 1);
}

#[test]
fn every_wiring_variant_matches_reference() {
    check_network(Ps8Config { use_skip1: false, use_skip2: false, ..tiny(3) }, 2);
    check_network(Ps8Config { use_skip2: false, ..tiny(3) }, 3);
    check_network(Ps8Config { features: FeatureSet::SequenceOnly, ..tiny(3) }, 4);
    check_network(Ps8Config { features: FeatureSet::ProfileOnly, ..tiny(3) }, 5);
    check_network(Ps8Config { skip2_width: 5, module_widths: vec![3, 2], ..tiny(3) }, 6);
    check_network(Ps8Config { module_widths: vec![2], ..tiny(3) }, 7);
}

fn block_fixture(seed: u64) -> (ParamBuilder<f64>, Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = ParamBuilder::<f64>::new(seed);
    let x: Vec<f64> = (0..6 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    (b, Tensor::new([1, 6, 3], x).unwrap())
}

fn run_block(
    b: &ParamBuilder<f64>,
    x: &Tensor<f64>,
    f: impl Fn(&mut ForwardCtx<'_, f64>, ps8net::Var) -> ps8net::Result<ps8net::Var>,
) -> Tensor<f64> {
    let mut tape = Tape::new();
    let params = b.params.register(&mut tape, false);
    let xv = tape.constant(x.clone());
    let mut ctx = ForwardCtx::new(&mut tape, &params, &b.stats, Mode::Infer, BatchNormSettings::default(), 0);
    let y = f(&mut ctx, xv).unwrap();
    tape.value(y).clone()
}

fn builder_weights(b: &ParamBuilder<f64>) -> Weights<'_> {
    Weights {
        param: Box::new(move |n| b.params.by_name(n).unwrap().data().to_vec()),
        shape: Box::new(move |n| b.params.by_name(n).unwrap().shape().to_vec()),
        stats: Box::new(move |n| {
            let s: &RunningStats<f64> = b.stats.by_name(n).unwrap();
            (s.mean.clone(), s.var.clone())
        }),
        eps: BatchNormSettings::default().epsilon,
    }
}

fn assert_close(got: &Tensor<f64>, want: &Seq) {
    let flat: Vec<f64> = want.iter().flatten().copied().collect();
    assert_eq!(got.numel(), flat.len());
    for (g, w) in got.data().iter().zip(&flat) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}

#[test]
fn sk_block_matches_reference() {
    for (cin, cout) in [(3, 3), (3, 5)] {
        let (mut b, x) = block_fixture(cin as u64 * 10 + cout as u64);
        let block = SkBlock::build(&mut b, "blk", cin, cout, 3);
        assert_eq!(block.projection.is_some(), cin != cout);
        let got = run_block(&b, &x, |ctx, v| block.forward(ctx, v));
        let want = builder_weights(&b).sk(&to_seqs(&x)[0], "blk", cin != cout);
        assert_close(&got, &want);
    }
}

#[test]
fn module_with_two_hidden_units_matches_reference() {
    let (mut b, x) = block_fixture(11);
    let shape = ModuleShape {
        cin: 3,
        hidden: 2,
        series_width: 2,
        skip_kernel: 3,
        skip_blocks: 3,
        dropout: 0.25,
    };
    let module = Ps8Module::build(&mut b, "m", &shape);
    let got = run_block(&b, &x, |ctx, v| module.forward(ctx, v));
    assert_eq!(got.shape(), &[1, 6, 8]);
    let want = builder_weights(&b).module(&to_seqs(&x)[0], "m", 3);
    assert_close(&got, &want);
}

fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cout * k * cin + cout
}

fn sk_params(cin: usize, cout: usize, k: usize) -> usize {
    let proj = if cin != cout { conv_params(cin, cout, 1) } else { 0 };
    conv_params(cin, cout, k) + 2 * conv_params(cout, cout, k) + 3 * 2 * cout + proj
}

/// Parameter count derived from the layer list alone.
fn expected_params(cfg: &Ps8Config) -> usize {
    let mut total = 0;
    if cfg.features != FeatureSet::ProfileOnly {
        total += 21 * 21;
    }
    let mut width = cfg.features.input_width();
    for _ in 0..cfg.front_layers {
        total += conv_params(width, cfg.front_width, cfg.front_kernel);
        width = cfg.front_width;
    }
    for (i, &hidden) in cfg.module_widths.iter().enumerate() {
        if i > 0 && cfg.use_skip2 {
            total += sk_params(width, cfg.skip2_width, cfg.skip2_kernel);
            width = cfg.skip2_width;
        }
        let w = cfg.series_width(hidden);
        let blocks = if cfg.use_skip1 { cfg.skip1_per_series } else { 0 };
        let shallow = conv_params(width, w, 3) + conv_params(w, w, 1);
        let deep = conv_params(width, w, 1) + conv_params(w, w, 3) + blocks * sk_params(w, w, 3);
        total += 2 * shallow + 2 * deep;
        width = 4 * w;
    }
    for &d in &cfg.dense_widths {
        total += width * d + d;
        width = d;
    }
    total + width * 8 + 8
}

#[test]
fn parameter_count_matches_layer_arithmetic() {
    let configs = [
        Ps8Config::default(),
        Ps8Config::default().scaled(0.125),
        Ps8Config::default().scaled(0.25),
        Ps8Config {
            use_skip1: false,
            use_skip2: false,
            ..Ps8Config::default().scaled(0.125)
        },
        Ps8Config {
            features: FeatureSet::ProfileOnly,
            ..Ps8Config::default().scaled(0.125)
        },
        Ps8Config::default().with_module_count(5).scaled(0.125),
    ];
    for cfg in configs {
        let net = Ps8Net::<f32>::build(cfg.clone(), 0).unwrap();
        assert_eq!(net.param_count(), expected_params(&cfg), "{cfg:?}");
    }
    assert_eq!(expected_params(&Ps8Config::default().scaled(0.125)), 209_121);
}
