//! The assembled network.
//!
//! Wiring: embedding of the one-hot block, CONV5 ×2, then PS8 modules with a
//! kernel-11 skip block between consecutive modules, then the position-wise
//! classifier (dense, dense, dense-8, softmax).

use crate::error::{Error, Result};
use crate::model::blocks::{dropout_site, ConvLayer, DenseLayer, ModuleShape, Ps8Module, SkBlock};
use crate::model::config::{FeatureSet, Ps8Config, BLOCK_WIDTH, INPUT_WIDTH};
use crate::model::params::{apply_stat_updates, ForwardCtx, ParamBuilder, ParamId, ParamStore, StatsId, StatsStore};
use crate::labels::NUM_CLASSES;
use crate::ops::RunningStats;
use crate::scalar::Scalar;
use crate::tape::{Mode, Tape, Var};
use crate::tensor::Tensor;

/// Spread of the embedding's initial off-diagonal noise.
const EMBEDDING_NOISE: f64 = 0.01;

#[derive(Debug, Clone)]
pub enum Stage {
    Module(Ps8Module),
    Skip(SkBlock),
}

#[derive(Debug, Clone)]
pub struct Ps8Net<S: Scalar = f32> {
    config: Ps8Config,
    params: ParamStore<S>,
    stats: StatsStore<S>,
    embedding: Option<ParamId>,
    front: Vec<ConvLayer>,
    stages: Vec<Stage>,
    head: Vec<DenseLayer>,
}

/// Result of one forward pass.
pub struct Forward<S: Scalar> {
    /// B×T×8 class probabilities.
    pub probs: Var,
    /// Updated running statistics (train mode only); apply with [`Ps8Net::apply_stat_updates`].
    pub stat_updates: Vec<(StatsId, RunningStats<S>)>,
}

impl<S: Scalar> Ps8Net<S> {
    pub fn build(config: Ps8Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = ParamBuilder::<S>::new(seed);

        let embedding = (config.features != FeatureSet::ProfileOnly)
            .then(|| b.near_identity("embedding", BLOCK_WIDTH, EMBEDDING_NOISE));

        let mut width = config.features.input_width();
        let mut front = Vec::with_capacity(config.front_layers);
        for i in 0..config.front_layers {
            front.push(ConvLayer::build(&mut b, &format!("front{i}"), width, config.front_width, config.front_kernel));
            width = config.front_width;
        }

        let mut stages = Vec::new();
        for (i, &hidden) in config.module_widths.iter().enumerate() {
            if i > 0 && config.use_skip2 {
                let block = SkBlock::build(&mut b, &format!("skip{}", i - 1), width, config.skip2_width, config.skip2_kernel);
                width = block.cout;
                stages.push(Stage::Skip(block));
            }
            let shape = ModuleShape {
                cin: width,
                hidden,
                series_width: config.series_width(hidden),
                skip_kernel: config.skip1_kernel,
                skip_blocks: if config.use_skip1 { config.skip1_per_series } else { 0 },
                dropout: config.module_dropout,
            };
            let module = Ps8Module::build(&mut b, &format!("module{i}"), &shape);
            width = module.output_width();
            stages.push(Stage::Module(module));
        }

        let mut head = Vec::with_capacity(config.dense_widths.len() + 1);
        for (i, &w) in config.dense_widths.iter().enumerate() {
            head.push(DenseLayer::build(&mut b, &format!("dense{i}"), width, w, 2.0));
            width = w;
        }
        head.push(DenseLayer::build(&mut b, "output", width, NUM_CLASSES, 1.0));

        Ok(Ps8Net {
            config,
            params: b.params,
            stats: b.stats,
            embedding,
            front,
            stages,
            head,
        })
    }

    pub fn config(&self) -> &Ps8Config {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn stats(&self) -> &StatsStore<S> {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut StatsStore<S> {
        &mut self.stats
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Record all parameters on `tape` as gradient-carrying leaves.
    pub fn register_params(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.params.register(tape, true)
    }

    /// Forward pass using externally recorded parameter leaves (`params` in store order).
    pub fn forward_with(&self, tape: &mut Tape<S>, params: &[Var], input: Var, mode: Mode, seed: u64) -> Result<Forward<S>> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let shape = tape.shape(input).to_vec();
        if shape.len() != 3 || shape[2] != INPUT_WIDTH {
            return Err(Error::shape(format!("network input must be B×T×{INPUT_WIDTH}, got {shape:?}")));
        }
        let mut ctx = ForwardCtx::new(tape, params, &self.stats, mode, self.config.batch_norm, seed);

        let mut h = match self.config.features {
            FeatureSet::Both => {
                let seq = ctx.tape.slice_channels(input, 0, BLOCK_WIDTH)?;
                let prof = ctx.tape.slice_channels(input, BLOCK_WIDTH, BLOCK_WIDTH)?;
                let emb = ctx.tape.embed(seq, ctx.var(self.embedding.expect("embedding present")))?;
                ctx.tape.concat_channels(&[emb, prof])?
            }
            FeatureSet::SequenceOnly => {
                let seq = ctx.tape.slice_channels(input, 0, BLOCK_WIDTH)?;
                ctx.tape.embed(seq, ctx.var(self.embedding.expect("embedding present")))?
            }
            FeatureSet::ProfileOnly => ctx.tape.slice_channels(input, BLOCK_WIDTH, BLOCK_WIDTH)?,
        };

        for conv in &self.front {
            h = conv.forward_relu(&mut ctx, h)?;
        }
        for stage in &self.stages {
            h = match stage {
                Stage::Module(m) => m.forward(&mut ctx, h)?,
                Stage::Skip(s) => s.forward(&mut ctx, h)?,
            };
        }
        let (hidden, output) = self.head.split_at(self.head.len() - 1);
        for layer in hidden {
            h = layer.forward(&mut ctx, h)?;
            h = ctx.tape.relu(h);
            h = dropout_site(&mut ctx, h, self.config.dense_dropout)?;
        }
        let logits = output[0].forward(&mut ctx, h)?;
        let probs = ctx.tape.softmax_rows(logits);
        Ok(Forward {
            probs,
            stat_updates: ctx.take_stat_updates(),
        })
    }

    /// Records parameters and input on `tape`, then runs the forward pass.
    pub fn forward(&self, tape: &mut Tape<S>, input: Tensor<S>, mode: Mode, seed: u64) -> Result<(Vec<Var>, Forward<S>)> {
        let params = self.register_params(tape);
        let x = tape.constant(input);
        let fwd = self.forward_with(tape, &params, x, mode, seed)?;
        Ok((params, fwd))
    }

    /// Infer-mode probabilities for a B×T×42 batch.
    pub fn predict_probs(&self, input: Tensor<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let params = self.params.register(&mut tape, false);
        let x = tape.constant(input);
        let fwd = self.forward_with(&mut tape, &params, x, Mode::Infer, 0)?;
        Ok(tape.value(fwd.probs).clone())
    }

    pub fn apply_stat_updates(&mut self, updates: Vec<(StatsId, RunningStats<S>)>) {
        apply_stat_updates(&mut self.stats, updates);
    }

    /// Same architecture and values in another precision.
    pub fn cast<T: Scalar>(&self) -> Ps8Net<T> {
        Ps8Net {
            config: self.config.clone(),
            params: self.params.cast(),
            stats: self.stats.cast(),
            embedding: self.embedding,
            front: self.front.clone(),
            stages: self.stages.clone(),
            head: self.head.clone(),
        }
    }

    /// Replace parameter values and running statistics (e.g. from a checkpoint).
    pub fn load_state(&mut self, params: ParamStore<S>, stats: StatsStore<S>) -> Result<()> {
        check_same_layout(self.params.iter().map(|(n, t)| (n, t.shape())), params.iter().map(|(n, t)| (n, t.shape())))?;
        let stat_dims = |s: &StatsStore<S>| s.iter().map(|(n, r)| (n.to_string(), r.mean.len())).collect::<Vec<_>>();
        if stat_dims(&self.stats) != stat_dims(&stats) {
            return Err(Error::format("running statistics do not match the architecture"));
        }
        self.params = params;
        self.stats = stats;
        Ok(())
    }
}

fn check_same_layout<'a>(
    want: impl Iterator<Item = (&'a str, &'a [usize])>,
    got: impl Iterator<Item = (&'a str, &'a [usize])>,
) -> Result<()> {
    let want: Vec<_> = want.collect();
    let got: Vec<_> = got.collect();
    if want.len() != got.len() {
        return Err(Error::format(format!(
            "expected {} parameter tensors, found {}",
            want.len(),
            got.len()
        )));
    }
    for ((wn, ws), (gn, gs)) in want.iter().zip(&got) {
        if wn != gn || ws != gs {
            return Err(Error::format(format!("parameter mismatch: expected {wn} {ws:?}, found {gn} {gs:?}")));
        }
    }
    Ok(())
}
