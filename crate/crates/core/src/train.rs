//! Minibatch training with early stopping, and masked-accuracy evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::controller::{argmax, masked_loss, Model, ModelConfig};
use crate::data::{encode, Dataset, Encoded};
use crate::error::{Error, Result};
use crate::experiment::Condition;
use crate::optim::{Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub hidden_size: usize,
    /// Width of stack vectors; `None` uses the task default.
    pub stack_width: Option<usize>,
    pub patience: usize,
    pub max_epochs: usize,
    pub optimizer: AdamConfig,
    pub trials: usize,
    /// Dataset seed, and base for trial seeds (`seed + trial index`).
    pub seed: u64,
    /// Buffered controller steps per input symbol.
    pub step_multiplier: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 10,
            hidden_size: 10,
            stack_width: None,
            patience: 5,
            max_epochs: 100,
            optimizer: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            trials: 10,
            seed: 0,
            step_multiplier: 1,
        }
    }
}

impl Hyperparams {
    /// Defaults tuned for a condition. Buffered networks get two controller
    /// steps per input symbol, so a delayed output still fits in the output
    /// buffer, and a larger learning rate.
    pub fn for_condition(condition: &Condition) -> Hyperparams {
        let mut h = Hyperparams::default();
        if condition.buffered {
            h.step_multiplier = 2;
            h.optimizer.learning_rate = 0.02;
        }
        h
    }

    pub fn model_config(&self, condition: &Condition) -> ModelConfig {
        let task = condition.task;
        ModelConfig {
            controller: condition.controller,
            stack: condition.stack,
            buffered: condition.buffered,
            stack_width: self.stack_width.unwrap_or_else(|| task.stack_width()),
            hidden_size: self.hidden_size,
            input_size: task.input_alphabet().len(),
            output_size: task.output_alphabet().len(),
            step_multiplier: self.step_multiplier,
        }
    }
}

/// A dataset in tensor form.
#[derive(Clone, Debug)]
pub struct EncodedDataset {
    pub train: Vec<Encoded>,
    pub dev: Vec<Encoded>,
    pub test: Vec<Encoded>,
}

impl EncodedDataset {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let (ia, oa) = (ds.task.input_alphabet(), ds.task.output_alphabet());
        let enc = |xs: &[crate::data::Example]| -> Result<Vec<Encoded>> {
            xs.iter().map(|e| encode(e, &ia, &oa)).collect()
        };
        Ok(EncodedDataset {
            train: enc(&ds.train)?,
            dev: enc(&ds.dev)?,
            test: enc(&ds.test)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// Dev accuracy after each epoch.
    pub dev_history: Vec<f64>,
    /// Mean per-batch training loss for each epoch.
    pub loss_history: Vec<f64>,
    /// Dev accuracy at the stopping epoch.
    pub final_dev: f64,
    pub test: f64,
    /// Set when training hit a non-finite loss; accuracies are then zero.
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip)]
    pub model: Option<Model>,
}

impl TrialResult {
    pub fn epochs(&self) -> usize {
        self.dev_history.len()
    }
}

/// True once the last `patience` epochs all failed to exceed the best
/// accuracy attained before them.
pub fn should_stop(history: &[f64], patience: usize) -> bool {
    let n = history.len();
    if n <= patience {
        return false;
    }
    let best = history[..n - patience]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    history[n - patience..].iter().all(|&a| a <= best)
}

/// Correct and total counts over masked positions.
pub fn accuracy_counts(model: &Model, examples: &[Encoded]) -> Result<(usize, usize)> {
    let mut tape = Tape::new();
    let (mut correct, mut total) = (0, 0);
    for ex in examples {
        tape.clear();
        let vars = model.params.bind(&mut tape)?;
        let out = model.forward(&mut tape, &vars, &ex.inputs, ex.targets.len(), false)?;
        for ((&z, &t), &m) in out.logits.iter().zip(&ex.targets).zip(&ex.mask) {
            if m {
                total += 1;
                correct += usize::from(argmax(tape.value(z)) == t);
            }
        }
    }
    Ok((correct, total))
}

/// Fraction of masked positions whose argmax output equals the gold symbol.
pub fn masked_accuracy(model: &Model, examples: &[Encoded]) -> Result<f64> {
    let (correct, total) = accuracy_counts(model, examples)?;
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(correct as f64 / total as f64)
}

/// Adds one example's loss gradient into `grads`; returns the loss, or
/// `None` when the example has no masked positions.
pub fn accumulate_gradient(
    model: &Model,
    tape: &mut Tape,
    ex: &Encoded,
    grads: &mut [Vec<f64>],
) -> Result<Option<f64>> {
    tape.clear();
    let vars = model.params.bind(tape)?;
    let out = model.forward(tape, &vars, &ex.inputs, ex.targets.len(), false)?;
    let Some(loss) = masked_loss(tape, &out.logits, &ex.targets, &ex.mask)? else {
        return Ok(None);
    };
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Ok(Some(value));
    }
    let g = tape.backward(loss)?;
    for (k, &v) in vars.iter().enumerate() {
        g.accumulate_into(v, &mut grads[k]);
    }
    Ok(Some(value))
}

/// Trains one model from a seeded initialisation until early stopping or
/// the epoch cap, then evaluates it on the test split.
pub fn train(
    config: &ModelConfig,
    data: &EncodedDataset,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<TrialResult> {
    if hyper.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::init(config.clone(), &mut rng)?;
    let mut opt = Adam::new(hyper.optimizer.clone(), &model.params);
    let mut tape = Tape::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut result = TrialResult {
        seed,
        dev_history: Vec::new(),
        loss_history: Vec::new(),
        final_dev: 0.0,
        test: 0.0,
        failed: false,
        checkpoint: None,
        model: None,
    };

    while result.dev_history.len() < hyper.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(hyper.batch_size) {
            let mut grads: Vec<Vec<f64>> = model
                .params
                .entries
                .iter()
                .map(|p| vec![0.0; p.values.len()])
                .collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                if let Some(l) = accumulate_gradient(&model, &mut tape, &data.train[i], &mut grads)?
                {
                    batch_loss += l;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                result.failed = true;
                result.final_dev = 0.0;
                result.test = 0.0;
                return Ok(result);
            }
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            opt.step(&mut model.params, &grads);
            epoch_loss += batch_loss;
            batches += 1;
        }
        result.loss_history.push(epoch_loss / batches.max(1) as f64);
        result.dev_history.push(masked_accuracy(&model, &data.dev)?);
        if should_stop(&result.dev_history, hyper.patience) {
            break;
        }
    }
    result.final_dev = *result.dev_history.last().expect("at least one epoch");
    result.test = masked_accuracy(&model, &data.test)?;
    result.model = Some(model);
    Ok(result)
}
