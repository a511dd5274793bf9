use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::data::{assemble, plan_batches, ProteinRecord};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::params::splitmix64;
use crate::model::Ps8Net;
use crate::tape::{Mode, Tape};
use crate::tensor::Tensor;
use crate::train::adam::{adam_step, AdamSettings, AdamState};
use crate::train::scheduler::{PlateauScheduler, SchedulerSettings};

pub const METRICS_HEADER: &str = "epoch,lr,train_loss,val_loss,val_q8";

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub adam: AdamSettings,
    pub scheduler: SchedulerSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 120,
            batch_size: 64,
            eval_batch_size: 16,
            lr: 2e-4,
            seed: 0,
            adam: AdamSettings::default(),
            scheduler: SchedulerSettings::default(),
        }
    }
}

impl TrainConfig {
    /// `key=value` pairs; floats use the shortest exact representation.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("eval_batch_size".into(), self.eval_batch_size.to_string()),
            ("lr".into(), format!("{:?}", self.lr)),
            ("seed".into(), self.seed.to_string()),
            ("adam_beta1".into(), format!("{:?}", self.adam.beta1)),
            ("adam_beta2".into(), format!("{:?}", self.adam.beta2)),
            ("adam_epsilon".into(), format!("{:?}", self.adam.epsilon)),
            ("patience".into(), self.scheduler.patience.to_string()),
            ("lr_factor".into(), format!("{:?}", self.scheduler.factor)),
            ("lr_floor".into(), format!("{:?}", self.scheduler.floor)),
            ("min_delta".into(), format!("{:?}", self.scheduler.min_delta)),
        ]
    }

    /// Set one field from text. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "eval_batch_size" => self.eval_batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "adam_beta1" => self.adam.beta1 = num(key, value)?,
            "adam_beta2" => self.adam.beta2 = num(key, value)?,
            "adam_epsilon" => self.adam.epsilon = num(key, value)?,
            "patience" => self.scheduler.patience = num(key, value)?,
            "lr_factor" => self.scheduler.factor = num(key, value)?,
            "lr_floor" => self.scheduler.floor = num(key, value)?,
            "min_delta" => self.scheduler.min_delta = num(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.eval_batch_size == 0 {
            return Err(Error::config("eval_batch_size", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        for (key, v) in [("adam_beta1", self.adam.beta1), ("adam_beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.adam.epsilon > 0.0) {
            return Err(Error::config("adam_epsilon", "must be positive"));
        }
        if self.scheduler.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if !(self.scheduler.factor > 0.0 && self.scheduler.factor <= 1.0) {
            return Err(Error::config("lr_factor", "must lie in (0, 1]"));
        }
        if !(self.scheduler.floor >= 0.0) {
            return Err(Error::config("lr_floor", "must be non-negative"));
        }
        if !(self.scheduler.min_delta >= 0.0) {
            return Err(Error::config("min_delta", "must be non-negative"));
        }
        Ok(())
    }
}

/// One row of the metric log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_q8: f64,
}

impl EpochRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch,
            sig6(self.lr),
            sig6(self.train_loss),
            sig6(self.val_loss),
            sig6(self.val_q8)
        )
    }

    fn exact_text(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?}",
            self.epoch, self.lr, self.train_loss, self.val_loss, self.val_q8
        )
    }

    fn parse_exact(text: &str) -> Result<Self> {
        let bad = || Error::format(format!("malformed log entry {text:?}"));
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != 5 {
            return Err(bad());
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(EpochRecord {
            epoch: parts[0].parse().map_err(|_| bad())?,
            lr: f(parts[1])?,
            train_loss: f(parts[2])?,
            val_loss: f(parts[3])?,
            val_q8: f(parts[4])?,
        })
    }
}

/// Six significant digits in the style of C's `%g`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..6).contains(&exp) {
        trim(format!("{:.*}", (5 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa.to_string()), exp.abs())
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub net: Ps8Net<f32>,
    pub adam: AdamState<f32>,
    pub scheduler: PlateauScheduler,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_q8: Option<f64>,
    pub log: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(net: Ps8Net<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(TrainState {
            adam: AdamState::new(net.params().tensors(), config.adam),
            scheduler: PlateauScheduler::new(config.lr, config.scheduler),
            net,
            config,
            epoch: 0,
            best_val_q8: None,
            log: Vec::new(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push_model(&self.net);
        for (k, v) in self.config.to_pairs() {
            ck.meta.push((format!("train.{k}"), v));
        }
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
        let sched = &self.scheduler;
        ck.meta.extend([
            ("state.epoch".into(), self.epoch.to_string()),
            ("state.best_val_q8".into(), opt(self.best_val_q8)),
            ("state.adam_step".into(), self.adam.step.to_string()),
            ("state.lr".into(), format!("{:?}", sched.lr)),
            ("state.monitor_best".into(), opt(sched.best)),
            ("state.stagnant".into(), sched.stagnant.to_string()),
            (
                "state.monitor_history".into(),
                sched.history.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","),
            ),
        ]);
        for (i, rec) in self.log.iter().enumerate() {
            ck.meta.push((format!("log.{i}"), rec.exact_text()));
        }
        for (i, name) in self.net.params().names().iter().enumerate() {
            let shape = self.net.params().tensors()[i].shape().to_vec();
            let t = |v: &[f32]| Tensor::new(shape.clone(), v.to_vec()).expect("moment matches parameter");
            ck.tensors.push((format!("adam/m/{name}"), t(&self.adam.m[i])));
            ck.tensors.push((format!("adam/v/{name}"), t(&self.adam.v[i])));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let net = ck.to_model()?;
        let mut config = TrainConfig::default();
        for (k, v) in &ck.meta {
            if let Some(key) = k.strip_prefix("train.") {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        let parse_f = |key: &str| -> Result<f64> {
            ck.require_meta(key)?
                .parse()
                .map_err(|_| Error::format(format!("checkpoint field `{key}` is not a number")))
        };
        let parse_u = |key: &str| -> Result<u64> {
            ck.require_meta(key)?
                .parse()
                .map_err(|_| Error::format(format!("checkpoint field `{key}` is not an integer")))
        };
        let parse_opt = |key: &str| -> Result<Option<f64>> {
            match ck.require_meta(key)? {
                "none" => Ok(None),
                _ => parse_f(key).map(Some),
            }
        };

        let mut adam = AdamState::new(net.params().tensors(), config.adam);
        adam.step = parse_u("state.adam_step")?;
        for (i, name) in net.params().names().iter().enumerate() {
            for (part, dest) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
                let t = ck
                    .tensor(&format!("adam/{part}/{name}"))
                    .ok_or_else(|| Error::format(format!("checkpoint is missing optimizer moment {part} of {name}")))?;
                if t.numel() != dest.len() {
                    return Err(Error::format(format!("optimizer moment {part} of {name} has the wrong size")));
                }
                dest.copy_from_slice(t.data());
            }
        }

        let history_text = ck.require_meta("state.monitor_history")?;
        let history = if history_text.is_empty() {
            Vec::new()
        } else {
            history_text
                .split(',')
                .map(|v| v.parse().map_err(|_| Error::format("malformed monitor history")))
                .collect::<Result<_>>()?
        };
        let scheduler = PlateauScheduler {
            settings: config.scheduler,
            lr: parse_f("state.lr")?,
            best: parse_opt("state.monitor_best")?,
            stagnant: parse_u("state.stagnant")? as usize,
            history,
        };
        let epoch = parse_u("state.epoch")? as usize;
        let log = (0..epoch)
            .map(|i| EpochRecord::parse_exact(ck.require_meta(&format!("log.{i}"))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainState {
            config,
            net,
            adam,
            scheduler,
            epoch,
            best_val_q8: parse_opt("state.best_val_q8")?,
            log,
        })
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for rec in &self.log {
            s.push_str(&rec.csv_line());
            s.push('\n');
        }
        s
    }
}

/// The fixed output layout of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let out = OutputDir {
            root: root.as_ref().to_path_buf(),
        };
        for dir in [out.checkpoints(), out.logs(), out.reports()] {
            fs::create_dir_all(dir)?;
        }
        Ok(out)
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("best.ps8n")
    }

    pub fn last_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("last.ps8n")
    }

    pub fn failed_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("failed.ps8n")
    }

    pub fn metrics(&self) -> PathBuf {
        self.logs().join("metrics.csv")
    }

    pub fn failure_report(&self) -> PathBuf {
        self.logs().join("failure.txt")
    }
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(SHUFFLE_STREAM ^ epoch as u64))
}

fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(DROPOUT_STREAM ^ ((epoch as u64) << 32) ^ batch as u64))
}

/// Runs epochs until `state.epoch == state.config.epochs`.
///
/// Each epoch trains on shuffled batches, evaluates the validation split, steps the
/// scheduler on validation loss and, when `out` is given, rewrites the metric log and
/// the `last` checkpoint; `best` follows the highest validation Q8.
pub fn train(
    state: &mut TrainState,
    records: &[ProteinRecord],
    train_split: &[usize],
    valid_split: &[usize],
    out: Option<&OutputDir>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<()> {
    if train_split.is_empty() || valid_split.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    state.config.validate()?;
    if let Some(out) = out {
        fs::write(out.metrics(), state.metrics_csv())?;
        if state.epoch == 0 {
            state.to_checkpoint().save(out.last_checkpoint())?;
        }
    }
    let names = state.net.params().names().to_vec();
    while state.epoch < state.config.epochs {
        let epoch = state.epoch;
        let lr = state.scheduler.lr;
        let plan = plan_batches(train_split, state.config.batch_size, shuffle_seed(state.config.seed, epoch), true)?;
        let mut nll = 0.0f64;
        let mut residues = 0usize;
        for (b, idx) in plan.iter().enumerate() {
            let batch = assemble(records, idx)?;
            let count = batch.residues();
            if count == 0 {
                continue;
            }
            let mut tape = Tape::new();
            let params = state.net.register_params(&mut tape);
            let x = tape.constant(batch.features);
            let fwd = state
                .net
                .forward_with(&mut tape, &params, x, Mode::Train, dropout_seed(state.config.seed, epoch, b))?;
            let loss_var = tape.masked_cross_entropy(fwd.probs, &batch.labels, &batch.mask)?;
            let loss = tape.value(loss_var).data()[0] as f64;
            if !loss.is_finite() {
                return Err(abort(state, out, epoch, b, idx, &format!("loss is {loss}")));
            }
            tape.backward(loss_var)?;
            let grads: Vec<Option<&[f32]>> = params.iter().map(|&p| tape.grad(p)).collect();
            if let Err(e) = adam_step(state.net.params_mut().tensors_mut(), &names, &grads, &mut state.adam, lr) {
                return Err(match e {
                    Error::NonFinite(msg) => abort(state, out, epoch, b, idx, &msg),
                    other => other,
                });
            }
            drop(grads);
            drop(tape);
            state.net.apply_stat_updates(fwd.stat_updates);
            nll += loss * count as f64;
            residues += count;
        }
        let val = evaluate(&state.net, records, valid_split, state.config.eval_batch_size)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            lr,
            train_loss: if residues > 0 { nll / residues as f64 } else { 0.0 },
            val_loss: val.loss,
            val_q8: val.q8(),
        };
        state.scheduler.step(val.loss);
        state.log.push(rec);
        state.epoch += 1;
        let improved = state.best_val_q8.is_none_or(|best| rec.val_q8 > best);
        if improved {
            state.best_val_q8 = Some(rec.val_q8);
        }
        if let Some(out) = out {
            let ck = state.to_checkpoint();
            if improved {
                ck.save(out.best_checkpoint())?;
            }
            ck.save(out.last_checkpoint())?;
            fs::write(out.metrics(), state.metrics_csv())?;
        }
        on_epoch(&rec);
    }
    Ok(())
}

/// Writes the pre-step state and a diagnostic, then returns the error to propagate.
fn abort(state: &TrainState, out: Option<&OutputDir>, epoch: usize, batch: usize, idx: &[usize], reason: &str) -> Error {
    let message = format!("epoch {}, batch {batch}, proteins {idx:?}: {reason}", epoch + 1);
    if let Some(out) = out {
        let dump = state.to_checkpoint().save(out.failed_checkpoint());
        let text = format!(
            "non-finite training step\n{message}\nlr {:?}\nparameters restored in {}\n",
            state.scheduler.lr,
            out.failed_checkpoint().display()
        );
        if let Err(e) = dump.and_then(|_| fs::write(out.failure_report(), text).map_err(Error::from)) {
            return Error::NonFinite(format!("{message} (diagnostic dump failed: {e})"));
        }
    }
    Error::NonFinite(message)
}
