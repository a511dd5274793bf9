use crate::data::{plan_batches, assemble, Dataset, ProteinRecord};
use crate::error::Result;
use crate::eval::metrics::{argmax, Confusion, EvalReport};
use crate::labels::NUM_CLASSES;
use crate::model::Ps8Net;
use crate::ops::softmax::PROB_FLOOR;

/// Masked cross-entropy and confusion counts over a split, in infer mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub confusion: Confusion,
}

impl Evaluation {
    pub fn q8(&self) -> f64 {
        self.confusion.accuracy().unwrap_or(0.0)
    }
}

pub fn evaluate(net: &Ps8Net<f32>, records: &[ProteinRecord], split: &[usize], batch_size: usize) -> Result<Evaluation> {
    let mut confusion = Confusion::default();
    let mut nll = 0.0f64;
    for idx in plan_batches(split, batch_size, 0, false)? {
        let batch = assemble(records, &idx)?;
        let probs = net.predict_probs(batch.features)?;
        for ((row, &label), &m) in probs.data().chunks_exact(NUM_CLASSES).zip(&batch.labels).zip(&batch.mask) {
            if m {
                nll -= (row[label as usize].max(PROB_FLOOR as f32) as f64).ln();
            }
        }
        confusion.accumulate(probs.data(), &batch.labels, &batch.mask)?;
    }
    let total = confusion.total();
    Ok(Evaluation {
        loss: if total > 0 { nll / total as f64 } else { 0.0 },
        confusion,
    })
}

/// Full report for every record of `dataset`.
pub fn evaluate_dataset(net: &Ps8Net<f32>, dataset: &Dataset, checkpoint: &str, batch_size: usize) -> Result<EvalReport> {
    let split: Vec<usize> = (0..dataset.len()).collect();
    let e = evaluate(net, &dataset.records, &split, batch_size)?;
    Ok(EvalReport {
        dataset: dataset.name.clone(),
        checkpoint: checkpoint.to_string(),
        labels: net.config().labels,
        confusion: e.confusion,
        loss: e.loss,
    })
}

/// One DSSP letter string per protein, covering its real residues only.
pub fn predict(net: &Ps8Net<f32>, records: &[ProteinRecord], batch_size: usize) -> Result<Vec<String>> {
    let labels = net.config().labels;
    let mut out = Vec::with_capacity(records.len());
    if records.is_empty() {
        return Ok(out);
    }
    let split: Vec<usize> = (0..records.len()).collect();
    for idx in plan_batches(&split, batch_size, 0, false)? {
        let batch = assemble(records, &idx)?;
        let window = records[idx[0]].window();
        let probs = net.predict_probs(batch.features)?;
        for (b, &i) in idx.iter().enumerate() {
            let rows = &probs.data()[b * window * NUM_CLASSES..][..window * NUM_CLASSES];
            let s = rows
                .chunks_exact(NUM_CLASSES)
                .zip(&records[i].mask)
                .filter(|(_, &m)| m)
                .map(|(row, _)| labels.letter(argmax(row)))
                .collect();
            out.push(s);
        }
    }
    Ok(out)
}
