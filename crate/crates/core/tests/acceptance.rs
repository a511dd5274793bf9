//! The nine acceptance criteria, one pass/fail line each.
//!
//! Runs as a plain binary so every line is printed. Pass criterion numbers as
//! arguments to run a subset.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{adam_first_step, brute_confusion, brute_q8, memorization_setup, random_instance};
use ps8net::data::raw::ROW_FLOATS;
use ps8net::data::{
    assemble, read_canonical, split_cullpdb6133, split_cullpdb6133_filtered, synthetic_dataset, write_canonical,
    Dataset, SplitMode, SyntheticSpec, SEQ_LEN,
};
use ps8net::eval::{confusion, evaluate, q8_accuracy, run_study, AblationData, Study};
use ps8net::gradcheck::layer_suite;
use ps8net::model::{Ps8Config, Ps8Net};
use ps8net::train::{adam_step, sig6, train, AdamSettings, AdamState, PlateauScheduler, SchedulerSettings, TrainConfig, TrainState};
use ps8net::{Mode, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const MEMORIZATION_EPOCHS: usize = 200;

fn gradient_correctness() -> Outcome {
    let checks = layer_suite(0).map_err(|e| e.to_string())?;
    let worst = checks
        .iter()
        .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
        .ok_or("no checks ran")?;
    ensure!(checks.iter().any(|c| c.name == "network"), "tiny network not checked");
    for c in &checks {
        ensure!(c.report.max_rel_error < 1e-4, "{} max relative error {:.3e}", c.name, c.report.max_rel_error);
    }
    Ok(format!(
        "{} checks, worst {} at {:.3e}",
        checks.len(),
        worst.name,
        worst.report.max_rel_error
    ))
}

fn padding_and_shapes() -> Outcome {
    for k in [1usize, 3, 5, 11] {
        for len in 1..=32 {
            let mut tape = Tape::<f32>::new();
            let x = tape.constant(Tensor::full([2, len, 3], 1.0));
            let w = tape.constant(Tensor::full([4, k, 3], 0.5));
            let b = tape.constant(Tensor::zeros([4]));
            let y = tape.conv1d_same(x, w, b).map_err(|e| e.to_string())?;
            ensure!(tape.shape(y) == [2, len, 4], "k={k} T={len}: shape {:?}", tape.shape(y));
        }
    }
    let data = synthetic_dataset(&SyntheticSpec {
        count: 2,
        ..SyntheticSpec::default()
    });
    let batch = assemble(&data.records, &[0, 1]).map_err(|e| e.to_string())?;
    let net = Ps8Net::<f32>::build(Ps8Config::default(), 0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for mode in [Mode::Train, Mode::Infer] {
        let mut tape = Tape::new();
        let (_, fwd) = net.forward(&mut tape, batch.features.clone(), mode, 0).map_err(|e| e.to_string())?;
        let probs = tape.value(fwd.probs);
        ensure!(probs.shape() == [2, SEQ_LEN, 8], "output shape {:?}", probs.shape());
        for row in probs.data().chunks_exact(8) {
            worst = worst.max((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst < 1e-6, "a row sums to 1 ± {worst:.2e}");
    Ok(format!("lengths preserved; full network 2×700×8, row sums within {worst:.1e}"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let inst = random_instance(&mut rng);
        let c = confusion(&inst.probs, &inst.labels, &inst.mask).map_err(|e| e.to_string())?;
        let q = q8_accuracy(&inst.probs, &inst.labels, &inst.mask).map_err(|e| e.to_string())?;
        ensure!(c.0 == brute_confusion(&inst), "instance {i}: confusion differs");
        ensure!(q == brute_q8(&inst), "instance {i}: q8 {q} vs {}", brute_q8(&inst));
    }
    Ok("1000 random instances match exactly".into())
}

fn optimizer_and_schedule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grad: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-5..3))).collect();
    let mut params = vec![Tensor::new([200], start.clone()).map_err(|e| e.to_string())?];
    let mut state = AdamState::new(&params, AdamSettings::default());
    adam_step(&mut params, &["w".to_string()], &[Some(&grad)], &mut state, 2e-4).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for ((p, s), g) in params[0].data().iter().zip(&start).zip(&grad) {
        worst = worst.max((p - adam_first_step(*s, *g, 2e-4, 1e-8)).abs());
    }
    ensure!(worst < 1e-12, "Adam first step off by {worst:.2e}");

    let mut sched = PlateauScheduler::new(2e-4, SchedulerSettings::default());
    let mut chain = vec![sched.lr];
    for _ in 0..50 {
        let lr = sched.step(0.5);
        if lr != *chain.last().unwrap() {
            chain.push(lr);
        }
    }
    let f = 0.1f64.sqrt();
    let exact = [2e-4, 2e-4 * f, 2e-4 * f * f, 2e-4 * f.powi(3), 5e-6];
    ensure!(
        chain.len() == exact.len() && chain.iter().zip(exact).all(|(a, b)| (a - b).abs() <= 1e-18),
        "chain {chain:?}"
    );
    let shown: Vec<String> = chain.iter().map(|&v| sig6(v)).collect();
    Ok(format!("Adam within {worst:.1e}; chain {}", shown.join(" -> ")))
}

struct Memorized {
    q8: f64,
    checkpoint: Vec<u8>,
    metrics: String,
}

fn memorization_run() -> Result<Memorized, String> {
    let (records, split, model, config) = memorization_setup(MEMORIZATION_EPOCHS);
    let net = Ps8Net::build(model, 1).map_err(|e| e.to_string())?;
    let mut state = TrainState::new(net, config).map_err(|e| e.to_string())?;
    train(&mut state, &records, &split, &split, None, |_| {}).map_err(|e| e.to_string())?;
    let q8 = evaluate(&state.net, &records, &split, 8).map_err(|e| e.to_string())?.q8();
    Ok(Memorized {
        q8,
        checkpoint: state.to_checkpoint().to_bytes().map_err(|e| e.to_string())?,
        metrics: state.metrics_csv(),
    })
}

static FIRST_RUN: OnceLock<Result<Memorized, String>> = OnceLock::new();

fn memorization() -> Outcome {
    let run = FIRST_RUN.get_or_init(memorization_run).as_ref().map_err(Clone::clone)?;
    ensure!(run.q8 >= 0.95, "train Q8 {:.4} after {MEMORIZATION_EPOCHS} epochs", run.q8);
    Ok(format!("train Q8 {:.4} after {MEMORIZATION_EPOCHS} epochs", run.q8))
}

fn synthetic(name: &str, count: usize, seed: u64) -> Dataset {
    synthetic_dataset(&SyntheticSpec {
        name: name.into(),
        count,
        seed,
        ..SyntheticSpec::default()
    })
}

fn beats_baseline() -> Outcome {
    let mut records = synthetic("filtered", 256, 10).records;
    records.extend(synthetic("filtered-valid", 32, 11).records);
    let test = synthetic("cb513", 64, 12);
    // The paper's dropout keeps this short run at the majority class.
    let model = Ps8Config {
        module_dropout: 0.0,
        dense_dropout: 0.0,
        ..Ps8Config::default().scaled(0.25)
    };
    let config = TrainConfig {
        epochs: 30,
        batch_size: 16,
        lr: 1e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    let net = Ps8Net::build(model, 1).map_err(|e| e.to_string())?;
    let mut state = TrainState::new(net, config).map_err(|e| e.to_string())?;
    let train_split: Vec<usize> = (0..256).collect();
    let valid_split: Vec<usize> = (256..288).collect();
    train(&mut state, &records, &train_split, &valid_split, None, |_| {}).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..test.len()).collect();
    let result = evaluate(&state.net, &test.records, &all, 16).map_err(|e| e.to_string())?;
    let baseline = result.confusion.majority_baseline().ok_or("empty test subset")?;
    ensure!(result.q8() > baseline, "Q8 {:.4} does not exceed the majority baseline {baseline:.4}", result.q8());
    Ok(format!("Q8 {:.4} vs majority baseline {baseline:.4}", result.q8()))
}

fn determinism() -> Outcome {
    let first = FIRST_RUN.get_or_init(memorization_run).as_ref().map_err(Clone::clone)?;
    let second = memorization_run()?;
    ensure!(first.checkpoint == second.checkpoint, "checkpoints differ");
    ensure!(first.metrics == second.metrics, "metric logs differ");
    Ok(format!("checkpoints ({} bytes) and metric logs identical", first.checkpoint.len()))
}

fn data_pipeline() -> Outcome {
    ensure!(ROW_FLOATS == 39_900 && 700 * 57 == ROW_FLOATS, "row width {ROW_FLOATS}");
    let paper = split_cullpdb6133(6133, SplitMode::Paper).map_err(|e| e.to_string())?;
    ensure!(paper.sizes() == (5600, 272, 256), "paper split {:?}", paper.sizes());
    let filtered = split_cullpdb6133_filtered(5534, 0).map_err(|e| e.to_string())?;
    ensure!(
        (filtered.train.len(), filtered.valid.len()) == (5234, 300),
        "filtered split {:?}",
        (filtered.train.len(), filtered.valid.len())
    );
    let ds = synthetic("roundtrip", 12, 4);
    let mut bytes = Vec::new();
    write_canonical(&ds, &mut bytes).map_err(|e| e.to_string())?;
    let back = read_canonical(&mut bytes.as_slice()).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_canonical(&back, &mut again).map_err(|e| e.to_string())?;
    ensure!(back == ds && again == bytes, "canonical round trip changed the data");
    Ok("splits (5600, 272, 256) and (5234, 300); round trip bit-identical; 700×57 = 39900".into())
}

fn ablations() -> Outcome {
    let pool = synthetic("pool", 10, 20);
    let mut tests = Vec::new();
    for (k, name) in ["cullpdb6133", "cb513", "casp10", "casp11"].iter().enumerate() {
        tests.push(synthetic(name, 3, 30 + k as u64));
    }
    let data = AblationData {
        records: pool.records,
        train: (0..8).collect(),
        valid: vec![8, 9],
        tests,
    };
    let base = Ps8Config::default().scaled(0.125);
    let config = TrainConfig {
        epochs: 1,
        batch_size: 4,
        eval_batch_size: 4,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let mut shapes = Vec::new();
    for (study, rows, cols) in [(Study::Features, 3, 1), (Study::Modules, 5, 4), (Study::Skip, 3, 4)] {
        let report = run_study(study, &base, &config, &data, |_| {}).map_err(|e| e.to_string())?;
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        ensure!(lines.len() == rows + 1, "{study}: {} CSV lines", lines.len());
        for line in &lines {
            ensure!(line.split(',').count() == 2 + 2 * cols, "{study}: malformed line {line:?}");
        }
        for row in &report.rows {
            ensure!(row.q8.iter().all(|q| (0.0..=1.0).contains(q)), "{study}: accuracy out of range");
        }
        if study == Study::Modules {
            let params: Vec<usize> = report.rows.iter().map(|r| r.parameters).collect();
            ensure!(params.windows(2).all(|w| w[0] < w[1]), "module counts not monotone: {params:?}");
        }
        shapes.push(format!("{study} {rows}×{cols}"));
    }
    Ok(shapes.join(", "))
}

struct Criterion {
    number: usize,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion { number: 1, name: "gradient correctness", limit: minutes(2), run: gradient_correctness },
        Criterion { number: 2, name: "padding and shapes", limit: Duration::from_secs(30), run: padding_and_shapes },
        Criterion { number: 3, name: "metric oracles", limit: Duration::from_secs(10), run: metric_oracles },
        Criterion { number: 4, name: "optimizer and schedule", limit: minutes(1), run: optimizer_and_schedule },
        Criterion { number: 5, name: "memorization", limit: minutes(15), run: memorization },
        Criterion { number: 6, name: "better than baseline", limit: minutes(120), run: beats_baseline },
        Criterion { number: 7, name: "determinism", limit: minutes(30), run: determinism },
        Criterion { number: 8, name: "data pipeline", limit: minutes(1), run: data_pipeline },
        Criterion { number: 9, name: "ablation harnesses", limit: minutes(30), run: ablations },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.number)) {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > c.limit => Err(format!("took {elapsed:.1?}, limit {:?}", c.limit)),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failures += 1;
        }
        println!("criterion {} ({}): {status} [{:.1}s] {detail}", c.number, c.name, elapsed.as_secs_f64());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
