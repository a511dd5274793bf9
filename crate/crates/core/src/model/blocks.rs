//! Convolution layers, skip-connection blocks and the four-series PS8 module.

use crate::error::Result;
use crate::model::params::{ForwardCtx, ParamBuilder, ParamId, StatsId};
use crate::scalar::Scalar;
use crate::tape::Var;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub cin: usize,
    pub cout: usize,
}

impl ConvLayer {
    pub fn build<S: Scalar>(b: &mut ParamBuilder<S>, name: &str, cin: usize, cout: usize, width: usize) -> Self {
        let fan_in = (width * cin) as f64;
        let kernel = b.normal(&format!("{name}.kernel"), &[cout, width, cin], (2.0 / fan_in).sqrt());
        let bias = b.constant(&format!("{name}.bias"), &[cout], 0.0);
        ConvLayer {
            kernel,
            bias,
            width,
            cin,
            cout,
        }
    }

    /// Convolution without activation.
    pub fn forward<S: Scalar>(&self, ctx: &mut ForwardCtx<'_, S>, x: Var) -> Result<Var> {
        let (k, b) = (ctx.var(self.kernel), ctx.var(self.bias));
        ctx.tape.conv1d_same(x, k, b)
    }

    /// Convolution followed by ReLU.
    pub fn forward_relu<S: Scalar>(&self, ctx: &mut ForwardCtx<'_, S>, x: Var) -> Result<Var> {
        let y = self.forward(ctx, x)?;
        Ok(ctx.tape.relu(y))
    }
}

#[derive(Debug, Clone)]
pub struct NormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: StatsId,
}

impl NormLayer {
    pub fn build<S: Scalar>(b: &mut ParamBuilder<S>, name: &str, channels: usize) -> Self {
        NormLayer {
            gamma: b.constant(&format!("{name}.gamma"), &[channels], 1.0),
            beta: b.constant(&format!("{name}.beta"), &[channels], 0.0),
            stats: b.running_stats(name, channels),
        }
    }

    pub fn forward<S: Scalar>(&self, ctx: &mut ForwardCtx<'_, S>, x: Var) -> Result<Var> {
        let (g, b) = (ctx.var(self.gamma), ctx.var(self.beta));
        let running = ctx.stats.get(self.stats);
        let (y, updated) = ctx.tape.batch_norm(x, g, b, running, ctx.mode, ctx.batch_norm)?;
        if let Some(u) = updated {
            ctx.stat_updates.push((self.stats, u));
        }
        Ok(y)
    }
}

/// Three same-width convolutions with batch normalization around an identity path:
/// `relu(bn(conv(relu(bn(conv(relu(bn(conv(x)))))))) + skip(x))`.
///
/// The first convolution maps `cin` to `cout`; the identity path is a width-1
/// projection exactly when the two differ.
#[derive(Debug, Clone)]
pub struct SkBlock {
    pub kernel_size: usize,
    pub cin: usize,
    pub cout: usize,
    pub convs: [ConvLayer; 3],
    pub norms: [NormLayer; 3],
    pub projection: Option<ConvLayer>,
}

impl SkBlock {
    pub fn build<S: Scalar>(b: &mut ParamBuilder<S>, name: &str, cin: usize, cout: usize, kernel_size: usize) -> Self {
        let convs = [
            ConvLayer::build(b, &format!("{name}.conv0"), cin, cout, kernel_size),
            ConvLayer::build(b, &format!("{name}.conv1"), cout, cout, kernel_size),
            ConvLayer::build(b, &format!("{name}.conv2"), cout, cout, kernel_size),
        ];
        let norms = [
            NormLayer::build(b, &format!("{name}.bn0"), cout),
            NormLayer::build(b, &format!("{name}.bn1"), cout),
            NormLayer::build(b, &format!("{name}.bn2"), cout),
        ];
        let projection = (cin != cout).then(|| ConvLayer::build(b, &format!("{name}.proj"), cin, cout, 1));
        SkBlock {
            kernel_size,
            cin,
            cout,
            convs,
            norms,
            projection,
        }
    }

    pub fn forward<S: Scalar>(&self, ctx: &mut ForwardCtx<'_, S>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, (conv, norm)) in self.convs.iter().zip(&self.norms).enumerate() {
            h = conv.forward(ctx, h)?;
            h = norm.forward(ctx, h)?;
            if i < 2 {
                h = ctx.tape.relu(h);
            }
        }
        let identity = match &self.projection {
            Some(p) => p.forward(ctx, x)?,
            None => x,
        };
        let sum = ctx.tape.add(h, identity)?;
        Ok(ctx.tape.relu(sum))
    }
}

/// CONV1 → CONV3 → a chain of kernel-3 skip blocks (the second and third series).
#[derive(Debug, Clone)]
pub struct DeepSeries {
    pub conv1: ConvLayer,
    pub conv3: ConvLayer,
    pub blocks: Vec<SkBlock>,
}

/// Four parallel convolution series over the same input, concatenated as `[y1|y2|y3|y4]`.
#[derive(Debug, Clone)]
pub struct Ps8Module {
    pub hidden: usize,
    pub series_width: usize,
    pub series1: [ConvLayer; 2],
    pub series2: DeepSeries,
    pub series3: DeepSeries,
    pub series4: [ConvLayer; 2],
    pub dropout: f64,
}

pub struct ModuleShape {
    pub cin: usize,
    pub hidden: usize,
    pub series_width: usize,
    pub skip_kernel: usize,
    pub skip_blocks: usize,
    pub dropout: f64,
}

impl Ps8Module {
    pub fn build<S: Scalar>(b: &mut ParamBuilder<S>, name: &str, shape: &ModuleShape) -> Self {
        let w = shape.series_width;
        let shallow = |b: &mut ParamBuilder<S>, series: &str| {
            [
                ConvLayer::build(b, &format!("{name}.{series}.conv3"), shape.cin, w, 3),
                ConvLayer::build(b, &format!("{name}.{series}.conv1"), w, w, 1),
            ]
        };
        let deep = |b: &mut ParamBuilder<S>, series: &str| DeepSeries {
            conv1: ConvLayer::build(b, &format!("{name}.{series}.conv1"), shape.cin, w, 1),
            conv3: ConvLayer::build(b, &format!("{name}.{series}.conv3"), w, w, 3),
            blocks: (0..shape.skip_blocks)
                .map(|i| SkBlock::build(b, &format!("{name}.{series}.sk{i}"), w, w, shape.skip_kernel))
                .collect(),
        };
        let series1 = shallow(b, "s1");
        let series2 = deep(b, "s2");
        let series3 = deep(b, "s3");
        let series4 = shallow(b, "s4");
        Ps8Module {
            hidden: shape.hidden,
            series_width: w,
            series1,
            series2,
            series3,
            series4,
            dropout: shape.dropout,
        }
    }

    pub fn output_width(&self) -> usize {
        4 * self.series_width
    }

    pub fn forward<S: Scalar>(&self, ctx: &mut ForwardCtx<'_, S>, x: Var) -> Result<Var> {
        let y1 = shallow_series(ctx, &self.series1, x)?;
        let y2 = deep_series(ctx, &self.series2, x)?;
        let y3 = deep_series(ctx, &self.series3, x)?;
        let y4 = shallow_series(ctx, &self.series4, x)?;
        let cat = ctx.tape.concat_channels(&[y1, y2, y3, y4])?;
        dropout_site(ctx, cat, self.dropout)
    }
}

fn shallow_series<S: Scalar>(ctx: &mut ForwardCtx<'_, S>, layers: &[ConvLayer; 2], x: Var) -> Result<Var> {
    let h = layers[0].forward_relu(ctx, x)?;
    layers[1].forward_relu(ctx, h)
}

fn deep_series<S: Scalar>(ctx: &mut ForwardCtx<'_, S>, series: &DeepSeries, x: Var) -> Result<Var> {
    let mut h = series.conv1.forward_relu(ctx, x)?;
    h = series.conv3.forward_relu(ctx, h)?;
    for block in &series.blocks {
        h = block.forward(ctx, h)?;
    }
    Ok(h)
}

/// Position-wise fully connected layer.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
}

impl DenseLayer {
    /// `gain` is 2 for layers feeding a ReLU and 1 for the output layer.
    pub fn build<S: Scalar>(b: &mut ParamBuilder<S>, name: &str, cin: usize, cout: usize, gain: f64) -> Self {
        DenseLayer {
            weight: b.normal(&format!("{name}.weight"), &[cin, cout], (gain / cin as f64).sqrt()),
            bias: b.constant(&format!("{name}.bias"), &[cout], 0.0),
            cin,
            cout,
        }
    }

    pub fn forward<S: Scalar>(&self, ctx: &mut ForwardCtx<'_, S>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.var(self.weight), ctx.var(self.bias));
        ctx.tape.affine(x, w, b)
    }
}

/// Dropout at a fresh site of the current pass.
pub(crate) fn dropout_site<S: Scalar>(ctx: &mut ForwardCtx<'_, S>, x: Var, rate: f64) -> Result<Var> {
    let seed = ctx.next_dropout_seed();
    ctx.tape.dropout(x, rate, seed, ctx.mode)
}
