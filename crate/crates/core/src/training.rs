//! Loss functions, mini-batch SGD and full training runs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, LabelSpace};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, ThresholdPolicy};
use crate::model::{Model, ModelConfig, OutputKind, PreparedPair};
use crate::numerics::{sgd_step, Gradients, Tape, Tensor, Var};
use crate::rng::child_rng;

/// Added inside every logarithm of the loss.
pub const LOG_EPS: f64 = 1e-12;

/// `ln(1 + LOG_EPS)`, added back so a perfect prediction scores exactly 0
/// rather than `-LOG_EPS`.
fn log_offset() -> f64 {
    (1.0 + LOG_EPS).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Record measured seconds per epoch in the run log. Off by default so
    /// logs of identical runs are byte-identical.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 1e-3,
            epochs: 10,
            seed: 0,
            shuffle: true,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive and finite, got {}", self.lr)));
        }
        Ok(())
    }
}

fn target_vector(targets: &BTreeSet<usize>, c: usize, output: OutputKind) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::domain("loss", "empty label set"));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::domain("loss", format!("label index {bad} outside {c} labels")));
    }
    let weight = match output {
        OutputKind::Softmax => 1.0 / targets.len() as f64,
        OutputKind::Sigmoid => 1.0,
    };
    Ok((0..c).map(|i| if targets.contains(&i) { weight } else { 0.0 }).collect())
}

/// Loss of one prediction.
///
/// Softmax heads use soft-target cross-entropy `-Σ t_c log(p_c + ε)` with
/// `t` the multi-hot target divided by the label count. Sigmoid heads use
/// binary cross-entropy averaged over labels. Both are shifted by
/// `ln(1 + ε)`, which keeps them nonnegative without touching gradients.
pub fn loss(probs: &[f64], targets: &BTreeSet<usize>, output: OutputKind) -> Result<f64> {
    let t = target_vector(targets, probs.len(), output)?;
    let raw = match output {
        OutputKind::Softmax => -t.iter().zip(probs).map(|(t, p)| t * (p + LOG_EPS).ln()).sum::<f64>(),
        OutputKind::Sigmoid => {
            -t.iter()
                .zip(probs)
                .map(|(y, p)| y * (p + LOG_EPS).ln() + (1.0 - y) * (1.0 - p + LOG_EPS).ln())
                .sum::<f64>()
                / probs.len() as f64
        }
    };
    Ok(raw + log_offset())
}

/// Records [`loss`] on the tape.
pub fn loss_on_tape(tape: &mut Tape<'_>, probs: Var, targets: &BTreeSet<usize>, output: OutputKind) -> Result<Var> {
    let c = tape.shape(probs).iter().product();
    let t = target_vector(targets, c, output)?;
    let shifted = tape.add_scalar(probs, LOG_EPS)?;
    let log_p = tape.log(shifted)?;
    match output {
        OutputKind::Softmax => {
            let t = tape.constant(Tensor::vector(t))?;
            let ll = tape.dot(t, log_p)?;
            let nll = tape.scale(ll, -1.0)?;
            tape.add_scalar(nll, log_offset())
        }
        OutputKind::Sigmoid => {
            let neg = tape.scale(probs, -1.0)?;
            let one_minus = tape.add_scalar(neg, 1.0 + LOG_EPS)?;
            let log_q = tape.log(one_minus)?;
            let y = tape.constant(Tensor::vector(t.clone()))?;
            let not_y = tape.constant(Tensor::vector(t.iter().map(|v| 1.0 - v).collect()))?;
            let a = tape.dot(y, log_p)?;
            let b = tape.dot(not_y, log_q)?;
            let ll = tape.add(a, b)?;
            let nll = tape.scale(ll, -1.0 / c as f64)?;
            tape.add_scalar(nll, log_offset())
        }
    }
}

/// An example resolved against a model's embedding table.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub image_id: String,
    pub input: PreparedPair,
    pub targets: BTreeSet<usize>,
}

pub fn prepare_examples(
    model: &Model,
    examples: &[Example],
    labels: &LabelSpace,
    table: &EmbeddingTable,
) -> Result<Vec<PreparedExample>> {
    examples
        .iter()
        .map(|ex| {
            let context = |e: Error| Error::Config(format!("image {}: {e}", ex.image_id));
            Ok(PreparedExample {
                image_id: ex.image_id.clone(),
                input: model.prepare(&ex.scene_graph, &ex.knowledge_graph, table).map_err(context)?,
                targets: labels.indices(&ex.labels).map_err(context)?,
            })
        })
        .collect()
}

/// Loss and parameter gradients of one example.
pub fn example_gradients(model: &Model, ex: &PreparedExample) -> Result<(f64, Gradients)> {
    let context = |e: Error| Error::Training(format!("image {}: {e}", ex.image_id));
    let mut tape = Tape::new();
    let vars = model.forward_on_tape(&mut tape, &ex.input).map_err(context)?;
    let l = loss_on_tape(&mut tape, vars.probs, &ex.targets, model.config().output).map_err(context)?;
    let value = tape.value(l).item().expect("scalar loss");
    if !value.is_finite() {
        return Err(Error::Training(format!("non-finite loss on image {}", ex.image_id)));
    }
    Ok((value, tape.backward(l).map_err(context)?))
}

/// One pass over `data`. Batch gradients are summed in example order,
/// divided by the batch size and applied with one SGD step. Returns the
/// mean per-example loss.
pub fn train_epoch(model: &mut Model, data: &[PreparedExample], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if config.shuffle {
        order.shuffle(rng);
    }
    let mut total = 0.0;
    for batch in order.chunks(config.batch_size.max(1)) {
        model.params_mut().zero_grads();
        for &i in batch {
            let (l, grads) = example_gradients(model, &data[i])?;
            total += l;
            grads.accumulate_into(model.params_mut());
        }
        model.params_mut().scale_grads(1.0 / batch.len() as f64);
        sgd_step(model.params_mut(), config.lr)?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f: f64,
    pub seconds: f64,
}

/// Per-epoch training history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
}

impl RunLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_macro_f,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_macro_f, r.seconds).unwrap();
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Model after the epoch with the highest validation macro F (the first
    /// one on ties); the initial model when no epoch ran.
    pub best: Model,
    pub best_epoch: Option<usize>,
    pub log: RunLog,
}

impl TrainOutcome {
    pub fn best_val_macro_f(&self) -> Option<f64> {
        let epoch = self.best_epoch?;
        self.log.records.iter().find(|r| r.epoch == epoch).map(|r| r.val_macro_f)
    }
}

/// Trains for `config.epochs` epochs, scoring the validation split after
/// each one.
pub fn train(
    mut model: Model,
    train_data: &[PreparedExample],
    val_data: &[PreparedExample],
    config: &TrainConfig,
    policy: ThresholdPolicy,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    if val_data.is_empty() {
        return Err(Error::Config("empty validation split".into()));
    }
    let mut rng = child_rng(config.seed, "shuffle");
    let mut log = RunLog::default();
    let mut best = model.clone();
    let mut best_epoch = None;
    let mut best_f = f64::NEG_INFINITY;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let train_loss = train_epoch(&mut model, train_data, config, &mut rng)?;
        let (report, _) = evaluate(&model, val_data, policy)?;
        let elapsed = start.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: loss {train_loss:.6} val macro F {:.2} ({elapsed:.2}s)", report.macro_f);
        log.records.push(EpochRecord {
            epoch,
            train_loss,
            val_macro_f: report.macro_f,
            seconds: if config.log_wall_time { elapsed } else { 0.0 },
        });
        if report.macro_f > best_f {
            best_f = report.macro_f;
            best = model.clone();
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        log,
    })
}

/// Everything a training run reads besides its configs.
#[derive(Clone, Copy)]
pub struct RunInputs<'a> {
    pub train: &'a [Example],
    pub val: &'a [Example],
    pub labels: &'a LabelSpace,
    pub table: &'a EmbeddingTable,
    pub policy: ThresholdPolicy,
}

/// Builds a fresh model from `model_config` and trains it.
pub fn run(model_config: &ModelConfig, train_config: &TrainConfig, inputs: RunInputs<'_>) -> Result<TrainOutcome> {
    if model_config.num_labels != inputs.labels.len() {
        return Err(Error::Config(format!(
            "model has {} labels but the label list has {}",
            model_config.num_labels,
            inputs.labels.len()
        )));
    }
    let table = model_config.train_embeddings.then_some(inputs.table);
    let model = Model::new(model_config.clone(), table)?;
    let train_data = prepare_examples(&model, inputs.train, inputs.labels, inputs.table)?;
    let val_data = prepare_examples(&model, inputs.val, inputs.labels, inputs.table)?;
    train(model, &train_data, &val_data, train_config, inputs.policy)
}
