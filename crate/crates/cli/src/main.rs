use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stack_rnn::checkpoint;
use stack_rnn::controller::ControllerKind;
use stack_rnn::data::{build_dataset, Dataset, Split, Task};
use stack_rnn::experiment::{render_table, run_experiment_on, Condition, ExperimentResult};
use stack_rnn::train::{masked_accuracy, train, EncodedDataset, Hyperparams};

#[derive(Parser)]
#[command(
    name = "stackrnn",
    version,
    about = "Neural stack RNNs on formal transduction tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/dev/test JSONL files for a task.
    Generate {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train a single model and save its checkpoint.
    Train {
        #[command(flatten)]
        cond: ConditionArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on one split of a generated dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: Task,
        /// Dataset seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Read `<task>.<split>.<seed>.jsonl` from this directory instead of
        /// regenerating the data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run multi-trial experiments and write a results table. Without
    /// `--task`, runs every row of the results table.
    Experiment {
        #[arg(long)]
        task: Option<Task>,
        #[arg(long, default_value = "linear")]
        controller: ControllerKind,
        #[arg(long, overrides_with = "no_stack")]
        stack: bool,
        #[arg(long)]
        no_stack: bool,
        #[arg(long)]
        buffered: bool,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Export a per-step trace (CSV and PGM heatmaps) of a checkpoint.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: Task,
        /// Input tokens, whitespace separated; a string without whitespace
        /// is split into characters.
        #[arg(long)]
        input: String,
        #[arg(long, default_value = "trace")]
        out: PathBuf,
        #[arg(long, default_value = "trace")]
        stem: String,
    },
}

#[derive(Args)]
struct ConditionArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value = "linear")]
    controller: ControllerKind,
    #[arg(long, overrides_with = "no_stack")]
    stack: bool,
    #[arg(long)]
    no_stack: bool,
    #[arg(long)]
    buffered: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file overriding default hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

/// Raised for invalid flag combinations; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|sp| sp.name() == s)
        .ok_or_else(|| format!("expected one of train, dev, test; got {s:?}"))
}

fn condition(
    task: Task,
    controller: ControllerKind,
    no_stack: bool,
    buffered: bool,
) -> Result<Condition> {
    let c = Condition::new(task, buffered, controller, !no_stack);
    if !c.is_supported() {
        return Err(UsageError(format!("no experiment matches {c}")).into());
    }
    Ok(c)
}

/// A `--config` file replaces the per-condition defaults; fields it omits
/// take the global defaults.
fn hyperparams(run: &RunArgs, c: &Condition) -> Result<Hyperparams> {
    let mut h = match &run.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Hyperparams::for_condition(c),
    };
    if let Some(s) = run.seed {
        h.seed = s;
    }
    Ok(h)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn tokens(input: &str) -> Vec<String> {
    if input.contains(char::is_whitespace) {
        input.split_whitespace().map(String::from).collect()
    } else {
        input.chars().map(String::from).collect()
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { task, seed, out } => {
            let ds = build_dataset(task, seed)?;
            for p in ds.write_jsonl(&out)? {
                println!("{}", p.display());
            }
        }
        Command::Train { cond, run } => {
            let c = condition(cond.task, cond.controller, cond.no_stack, cond.buffered)?;
            let hyper = hyperparams(&run, &c)?;
            let ds = build_dataset(c.task, hyper.seed)?;
            let data = EncodedDataset::new(&ds)?;
            let mut result = train(&hyper.model_config(&c), &data, &hyper, hyper.seed)?;
            fs::create_dir_all(&run.out)?;
            if let Some(model) = &result.model {
                let path = run.out.join(format!("{}.ckpt", c.slug()));
                checkpoint::save(&path, model)?;
                result.checkpoint = Some(path.display().to_string());
            }
            write_json(&run.out.join(format!("{}.result.json", c.slug())), &result)?;
            println!(
                "{c}: epochs {} final dev {:.2}% test {:.2}%{}",
                result.epochs(),
                100.0 * result.final_dev,
                100.0 * result.test,
                if result.failed {
                    " (failed: non-finite loss)"
                } else {
                    ""
                }
            );
        }
        Command::Eval {
            checkpoint: path,
            task,
            seed,
            split,
            data,
        } => {
            let model =
                checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let ds = match data {
                Some(dir) => Dataset::read_jsonl(dir, task, seed)?,
                None => build_dataset(task, seed)?,
            };
            let enc = EncodedDataset::new(&ds)?;
            let examples = match split {
                Split::Train => &enc.train,
                Split::Dev => &enc.dev,
                Split::Test => &enc.test,
            };
            if model.config.input_size != task.input_alphabet().len()
                || model.config.output_size != task.output_alphabet().len()
            {
                bail!("checkpoint {} does not match task {task}", path.display());
            }
            let acc = masked_accuracy(&model, examples)?;
            println!("{task} {}: {:.2}%", split.name(), 100.0 * acc);
        }
        Command::Experiment {
            task,
            controller,
            stack: _,
            no_stack,
            buffered,
            trials,
            run,
        } => {
            let conditions = match task {
                Some(t) => vec![condition(t, controller, no_stack, buffered)?],
                None => Condition::table(),
            };
            if trials == Some(0) {
                return Err(UsageError("--trials must be positive".into()).into());
            }
            fs::create_dir_all(&run.out)?;
            let mut results: Vec<ExperimentResult> = Vec::new();
            for c in &conditions {
                let mut hyper = hyperparams(&run, c)?;
                if let Some(n) = trials {
                    hyper.trials = n;
                }
                eprintln!("running {c} ({} trials)", hyper.trials);
                let ds = build_dataset(c.task, hyper.seed)?;
                let mut r = run_experiment_on(c, &hyper, &ds)?;
                let dir = run.out.join(c.slug());
                fs::create_dir_all(&dir)?;
                for (i, t) in r.trials.iter_mut().enumerate() {
                    if let Some(model) = &t.model {
                        let p = dir.join(format!("trial-{i}.ckpt"));
                        checkpoint::save(&p, model)?;
                        t.checkpoint = Some(p.display().to_string());
                    }
                }
                results.push(r);
            }
            write_json(&run.out.join("results.json"), &results)?;
            let table = render_table(&results);
            fs::write(run.out.join("table.txt"), &table)?;
            print!("{table}");
        }
        Command::Trace {
            checkpoint: path,
            task,
            input,
            out,
            stem,
        } => {
            let model =
                checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let t = stack_rnn::trace::trace(&model, task, &tokens(&input))?;
            for p in t.write(&out, &stem)? {
                println!("{}", p.display());
            }
            println!("prediction: {}", t.predictions.join(" "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
