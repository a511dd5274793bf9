//! Named parameter and normalization-statistic storage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ops::{BatchNormSettings, RunningStats};
use crate::scalar::Scalar;
use crate::tape::{Mode, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StatsId(pub(crate) usize);

/// Ordered, named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<S: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<S>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Record every parameter on `tape`, in store order.
    pub fn register(&self, tape: &mut Tape<S>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| tape.leaf(t.clone().with_requires_grad(trainable)))
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Ordered, named batch-norm running statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsStore<S: Scalar> {
    names: Vec<String>,
    stats: Vec<RunningStats<S>>,
}

impl<S: Scalar> StatsStore<S> {
    pub fn new() -> Self {
        StatsStore {
            names: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, stats: RunningStats<S>) -> StatsId {
        self.names.push(name.into());
        self.stats.push(stats);
        StatsId(self.stats.len() - 1)
    }

    pub fn get(&self, id: StatsId) -> &RunningStats<S> {
        &self.stats[id.0]
    }

    pub fn get_mut(&mut self, id: StatsId) -> &mut RunningStats<S> {
        &mut self.stats[id.0]
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RunningStats<S>)> {
        self.names.iter().map(String::as_str).zip(&self.stats)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut RunningStats<S>)> {
        self.names.iter().map(String::as_str).zip(self.stats.iter_mut())
    }

    pub fn by_name(&self, name: &str) -> Option<&RunningStats<S>> {
        self.names.iter().position(|n| n == name).map(|i| &self.stats[i])
    }

    pub fn cast<T: Scalar>(&self) -> StatsStore<T> {
        let conv = |v: &[S]| v.iter().map(|x| T::from_f64_lossy(x.to_f64_lossy())).collect();
        StatsStore {
            names: self.names.clone(),
            stats: self
                .stats
                .iter()
                .map(|s| RunningStats {
                    mean: conv(&s.mean),
                    var: conv(&s.var),
                })
                .collect(),
        }
    }
}

/// Creates parameters with their initial values from a seeded generator.
///
/// Weights feeding a ReLU draw from N(0, 2/fan_in); the output layer draws from
/// N(0, 1/fan_in); biases start at zero.
pub struct ParamBuilder<S: Scalar> {
    pub params: ParamStore<S>,
    pub stats: StatsStore<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> ParamBuilder<S> {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            params: ParamStore::new(),
            stats: StatsStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite standard deviation");
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| S::from_f64_lossy(dist.sample(&mut self.rng))).collect();
        self.params.push(name, Tensor::new(shape.to_vec(), data).expect("shape matches"))
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.params.push(name, Tensor::full(shape.to_vec(), S::from_f64_lossy(value)))
    }

    /// Identity plus N(0, noise²) entries.
    pub fn near_identity(&mut self, name: &str, size: usize, noise: f64) -> ParamId {
        let dist = Normal::new(0.0, noise).expect("finite standard deviation");
        let mut data = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                let base = if r == c { 1.0 } else { 0.0 };
                data.push(S::from_f64_lossy(base + dist.sample(&mut self.rng)));
            }
        }
        self.params.push(name, Tensor::new([size, size], data).expect("square"))
    }

    pub fn running_stats(&mut self, name: &str, channels: usize) -> StatsId {
        self.stats.push(name, RunningStats::fresh(channels))
    }
}

/// State threaded through a forward pass.
pub struct ForwardCtx<'a, S: Scalar> {
    pub tape: &'a mut Tape<S>,
    pub params: &'a [Var],
    pub stats: &'a StatsStore<S>,
    pub mode: Mode,
    pub batch_norm: BatchNormSettings,
    seed: u64,
    dropout_sites: u64,
    pub(crate) stat_updates: Vec<(StatsId, RunningStats<S>)>,
}

impl<'a, S: Scalar> ForwardCtx<'a, S> {
    pub fn new(
        tape: &'a mut Tape<S>,
        params: &'a [Var],
        stats: &'a StatsStore<S>,
        mode: Mode,
        batch_norm: BatchNormSettings,
        seed: u64,
    ) -> Self {
        ForwardCtx {
            tape,
            params,
            stats,
            mode,
            batch_norm,
            seed,
            dropout_sites: 0,
            stat_updates: Vec::new(),
        }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.params[id.0]
    }

    /// A distinct seed for each dropout site visited during this pass.
    pub(crate) fn next_dropout_seed(&mut self) -> u64 {
        self.dropout_sites += 1;
        splitmix64(self.seed ^ splitmix64(self.dropout_sites))
    }

    /// Running-statistic updates collected in train mode.
    pub fn take_stat_updates(&mut self) -> Vec<(StatsId, RunningStats<S>)> {
        std::mem::take(&mut self.stat_updates)
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Write collected running-statistic updates back into `stats`.
pub fn apply_stat_updates<S: Scalar>(stats: &mut StatsStore<S>, updates: Vec<(StatsId, RunningStats<S>)>) {
    for (id, s) in updates {
        *stats.get_mut(id) = s;
    }
}
