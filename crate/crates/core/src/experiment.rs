//! Experimental conditions, multi-trial runs and summary tables.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerKind;
use crate::data::{build_dataset, immediate_closure_rate, Dataset, Task};
use crate::error::{Error, Result};
use crate::train::{train, EncodedDataset, Hyperparams, TrialResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub task: Task,
    pub buffered: bool,
    pub controller: ControllerKind,
    pub stack: bool,
}

impl Condition {
    pub const fn new(task: Task, buffered: bool, controller: ControllerKind, stack: bool) -> Self {
        Condition {
            task,
            buffered,
            controller,
            stack,
        }
    }

    /// The rows of the paper's results table, in order.
    pub fn table() -> Vec<Condition> {
        use ControllerKind::{Linear, Lstm};
        use Task::*;
        vec![
            Condition::new(Reversal, false, Linear, true),
            Condition::new(Reversal, true, Linear, true),
            Condition::new(Reversal, false, Lstm, true),
            Condition::new(Reversal, false, Lstm, false),
            Condition::new(Xor, false, Linear, true),
            Condition::new(Xor, false, Lstm, true),
            Condition::new(Xor, true, Linear, true),
            Condition::new(DelayedXor, false, Linear, true),
            Condition::new(Parenthesis, false, Linear, true),
            Condition::new(Parenthesis, false, Linear, false),
            Condition::new(Parenthesis, false, Lstm, true),
            Condition::new(Parenthesis, false, Lstm, false),
            Condition::new(Formula, false, Linear, true),
            Condition::new(Formula, false, Lstm, true),
            Condition::new(Formula, false, Lstm, false),
            Condition::new(Agreement, false, Linear, true),
            Condition::new(Agreement, false, Lstm, true),
            Condition::new(Agreement, false, Lstm, false),
        ]
    }

    /// Table rows, plus the four-symbol reversal variant under any reversal
    /// row's architecture.
    pub fn is_supported(&self) -> bool {
        let table = Condition::table();
        if self.task == Task::Reversal4 {
            let as_reversal = Condition {
                task: Task::Reversal,
                ..*self
            };
            return table.contains(&as_reversal);
        }
        table.contains(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_supported() {
            Ok(())
        } else {
            Err(Error::Config(format!("unsupported condition: {self}")))
        }
    }

    pub fn slug(&self) -> String {
        format!(
            "{}-{}{}{}",
            self.task,
            self.controller,
            if self.stack { "-stack" } else { "-nostack" },
            if self.buffered { "-buffered" } else { "" }
        )
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let yn = |b: bool| if b { "yes" } else { "no" };
        write!(
            f,
            "task={} buffered={} controller={} stack={}",
            self.task,
            yn(self.buffered),
            self.controller,
            yn(self.stack)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    /// Order statistics; an even count takes the mean of the middle pair.
    pub fn from_values(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Some(Stats {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_dev: Stats,
    pub test: Stats,
}

impl Summary {
    pub fn from_trials(trials: &[TrialResult]) -> Option<Summary> {
        let dev: Vec<f64> = trials.iter().map(|t| t.final_dev).collect();
        let test: Vec<f64> = trials.iter().map(|t| t.test).collect();
        Some(Summary {
            final_dev: Stats::from_values(&dev)?,
            test: Stats::from_values(&test)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub condition: Condition,
    pub hyperparams: Hyperparams,
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
    /// Openers immediately followed by their closer in the training data
    /// (parenthesis task only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immediate_closure_rate: Option<f64>,
}

impl ExperimentResult {
    /// Index of the trial with the highest test accuracy (first on ties).
    pub fn best_trial(&self) -> Option<usize> {
        (0..self.trials.len()).reduce(|b, i| {
            if self.trials[i].test > self.trials[b].test {
                i
            } else {
                b
            }
        })
    }
}

/// Builds the dataset from `hyper.seed` and runs `hyper.trials` trials.
pub fn run_experiment(condition: &Condition, hyper: &Hyperparams) -> Result<ExperimentResult> {
    let ds = build_dataset(condition.task, hyper.seed)?;
    run_experiment_on(condition, hyper, &ds)
}

/// Runs trials with seeds `hyper.seed + i` on a shared dataset, in parallel.
pub fn run_experiment_on(
    condition: &Condition,
    hyper: &Hyperparams,
    ds: &Dataset,
) -> Result<ExperimentResult> {
    condition.validate()?;
    if ds.task != condition.task {
        return Err(Error::Config(format!(
            "dataset is for {}, condition is for {}",
            ds.task, condition.task
        )));
    }
    if hyper.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let data = EncodedDataset::new(ds)?;
    let config = hyper.model_config(condition);
    config.validate()?;
    let trials = (0..hyper.trials as u64)
        .into_par_iter()
        .map(|i| train(&config, &data, hyper, hyper.seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_trials(&trials).expect("non-empty trials");
    Ok(ExperimentResult {
        condition: *condition,
        hyperparams: hyper.clone(),
        trials,
        summary,
        immediate_closure_rate: (condition.task == Task::Parenthesis)
            .then(|| immediate_closure_rate(&ds.train)),
    })
}

/// Plain-text table with one row per experiment, accuracies in percent.
pub fn render_table(results: &[ExperimentResult]) -> String {
    let yn = |b: bool| if b { "Yes" } else { "No" };
    let mut out = format!(
        "{:<12} {:<8} {:<10} {:<5} | {:>6} {:>6} {:>6} | {:>6} {:>6} {:>6}\n",
        "Task", "Buffered", "Controller", "Stack", "Min", "Med", "Max", "Min", "Med", "Max"
    );
    out.push_str(&"-".repeat(out.len() - 1));
    out.push('\n');
    for r in results {
        let c = &r.condition;
        let (d, t) = (r.summary.final_dev, r.summary.test);
        let controller = match c.controller {
            ControllerKind::Linear => "Linear",
            ControllerKind::Lstm => "LSTM",
        };
        out.push_str(&format!(
            "{:<12} {:<8} {:<10} {:<5} | {:>6.1} {:>6.1} {:>6.1} | {:>6.1} {:>6.1} {:>6.1}\n",
            c.task.name(),
            yn(c.buffered),
            controller,
            yn(c.stack),
            100.0 * d.min,
            100.0 * d.median,
            100.0 * d.max,
            100.0 * t.min,
            100.0 * t.median,
            100.0 * t.max
        ));
    }
    out
}
