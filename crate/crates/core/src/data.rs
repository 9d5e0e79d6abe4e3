//! Tasks, alphabets, dataset generation and serialization.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cfg::Cfg;
use crate::error::{Error, Result};
use crate::oracles;

/// One input/output pairing with its evaluation mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: Vec<String>,
    pub gold: Vec<String>,
    pub mask: Vec<bool>,
}

impl Example {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Reversal,
    Reversal4,
    Xor,
    DelayedXor,
    Parenthesis,
    Formula,
    Agreement,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Reversal,
        Task::Reversal4,
        Task::Xor,
        Task::DelayedXor,
        Task::Parenthesis,
        Task::Formula,
        Task::Agreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Reversal => "reversal",
            Task::Reversal4 => "reversal4",
            Task::Xor => "xor",
            Task::DelayedXor => "delayed-xor",
            Task::Parenthesis => "parenthesis",
            Task::Formula => "formula",
            Task::Agreement => "agreement",
        }
    }

    pub fn input_alphabet(self) -> Alphabet {
        match self {
            Task::Reversal => Alphabet::new(&["0", "1", "#"]),
            Task::Reversal4 => Alphabet::new(&["0", "1", "2", "3", "#"]),
            Task::Xor | Task::DelayedXor => Alphabet::new(&["0", "1"]),
            Task::Parenthesis => Alphabet::new(&["(", ")", "[", "]"]),
            Task::Formula => Alphabet::new(&["T", "F", "∨", "∧"]),
            Task::Agreement => Alphabet::new(&AGREEMENT_WORDS),
        }
    }

    pub fn output_alphabet(self) -> Alphabet {
        match self {
            Task::Reversal | Task::Reversal4 => Alphabet::new(&["0", "1", "#"]),
            Task::Xor | Task::DelayedXor | Task::Formula => Alphabet::new(&["0", "1"]),
            Task::Parenthesis => Alphabet::new(&["(", ")", "[", "]", oracles::END]),
            Task::Agreement => {
                let mut words = AGREEMENT_WORDS.to_vec();
                words.push(oracles::END);
                Alphabet::new(&words)
            }
        }
    }

    /// Width of vectors placed on the stack.
    pub fn stack_width(self) -> usize {
        match self {
            Task::Xor | Task::DelayedXor => 6,
            _ => 2,
        }
    }

    pub fn regime(self, split: Split) -> Regime {
        let test = split == Split::Test;
        match self {
            Task::Reversal | Task::Reversal4 if test => Regime::Uniform { min: 4, max: 36 },
            Task::Reversal | Task::Reversal4 => Regime::Uniform { min: 2, max: 18 },
            Task::Xor | Task::DelayedXor => Regime::Fixed(if test { 24 } else { 12 }),
            Task::Parenthesis if test => Regime::Grammar {
                min_depth: 12,
                depth: 12,
                min_len: 18,
                max_len: 110,
            },
            Task::Parenthesis => Regime::Grammar {
                min_depth: 1,
                depth: 6,
                min_len: 1,
                max_len: 20,
            },
            Task::Formula if test => Regime::Grammar {
                min_depth: 1,
                depth: 7,
                min_len: 7,
                max_len: 31,
            },
            Task::Formula => Regime::Grammar {
                min_depth: 1,
                depth: 6,
                min_len: 1,
                max_len: 15,
            },
            Task::Agreement if test => Regime::Grammar {
                min_depth: 1,
                depth: 32,
                min_len: 17,
                max_len: 49,
            },
            Task::Agreement => Regime::Grammar {
                min_depth: 1,
                depth: 16,
                min_len: 1,
                max_len: 23,
            },
        }
    }

    fn grammar(self) -> Option<Cfg> {
        match self {
            Task::Parenthesis => Some(Cfg::parenthesis()),
            Task::Formula => Some(Cfg::formula()),
            Task::Agreement => Some(Cfg::agreement()),
            _ => None,
        }
    }

    /// Gold output and mask for an input drawn from this task's source.
    pub fn oracle<S: AsRef<str>>(self, source: &[S]) -> Result<Example> {
        Ok(match self {
            Task::Reversal => oracles::reversal(source),
            Task::Reversal4 => oracles::reversal_keeping(source, |s| s == "0" || s == "1"),
            Task::Xor => oracles::xor(source, false)?,
            Task::DelayedXor => oracles::xor(source, true)?,
            Task::Parenthesis => oracles::parenthesis(source),
            Task::Formula => oracles::formula(source)?,
            Task::Agreement => oracles::agreement(source),
        })
    }
}

const AGREEMENT_WORDS: [&str; 9] = [
    "the", "lobster", "lobsters", "in", "that", "has", "have", "slept", "devoured",
];

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Dev => 2,
            Split::Test => 3,
        }
    }
}

/// How source strings for a split are drawn. Lengths are counted before
/// any `#` padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Uniform {
        min: usize,
        max: usize,
    },
    Fixed(usize),
    /// Derivations of depth in `min_depth..=depth`.
    Grammar {
        min_depth: usize,
        depth: usize,
        min_len: usize,
        max_len: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<S: AsRef<str>>(symbols: &[S]) -> Self {
        Alphabet {
            symbols: symbols.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index(&self, symbol: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| Error::UnknownSymbol {
                symbol: symbol.into(),
                alphabet: self.symbols.clone(),
            })
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn one_hot(&self, symbol: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.len()];
        v[self.index(symbol)?] = 1.0;
        Ok(v)
    }

    /// Inverse of [`Alphabet::one_hot`] by argmax.
    pub fn decode(&self, row: &[f64]) -> Option<&str> {
        if row.is_empty() {
            return None;
        }
        self.symbol(crate::controller::argmax(row))
    }
}

/// An example in tensor form.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

pub fn encode(example: &Example, input: &Alphabet, output: &Alphabet) -> Result<Encoded> {
    Ok(Encoded {
        inputs: example
            .input
            .iter()
            .map(|s| input.one_hot(s))
            .collect::<Result<_>>()?,
        targets: example
            .gold
            .iter()
            .map(|s| output.index(s))
            .collect::<Result<_>>()?,
        mask: example.mask.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        DatasetSizes {
            train: 800,
            dev: 100,
            test: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub task: Task,
    pub seed: u64,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

/// Attempts per example before a grammar sampler gives up.
const MAX_ATTEMPTS: usize = 100_000;

pub fn build_dataset(task: Task, seed: u64) -> Result<Dataset> {
    build_dataset_with(task, seed, &DatasetSizes::default())
}

pub fn build_dataset_with(task: Task, seed: u64, sizes: &DatasetSizes) -> Result<Dataset> {
    Ok(Dataset {
        task,
        seed,
        train: generate_split(task, seed, Split::Train, sizes.train)?,
        dev: generate_split(task, seed, Split::Dev, sizes.dev)?,
        test: generate_split(task, seed, Split::Test, sizes.test)?,
    })
}

/// Each split draws from its own ChaCha stream of the dataset seed.
pub fn generate_split(task: Task, seed: u64, split: Split, count: usize) -> Result<Vec<Example>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split.stream());
    let regime = task.regime(split);
    let grammar = task.grammar();
    (0..count)
        .map(|_| {
            for _ in 0..MAX_ATTEMPTS {
                let source = match (regime, &grammar) {
                    (Regime::Uniform { min, max }, _) => {
                        let n = rng.gen_range(min..=max);
                        random_symbols(task, n, &mut rng)
                    }
                    (Regime::Fixed(n), _) => random_symbols(task, n, &mut rng),
                    (
                        Regime::Grammar {
                            min_depth,
                            depth,
                            min_len,
                            max_len,
                        },
                        Some(g),
                    ) => {
                        let d = g.sample(depth, &mut rng)?;
                        let s = d.terminals();
                        if s.len() < min_len || s.len() > max_len || d.depth() < min_depth {
                            continue;
                        }
                        s
                    }
                    (Regime::Grammar { .. }, None) => {
                        unreachable!("grammar regime without grammar")
                    }
                };
                let ex = task.oracle(&source)?;
                if ex.masked_count() > 0 {
                    return Ok(ex);
                }
            }
            Err(Error::SamplerExhausted {
                task: task.name().into(),
                seed,
                attempts: MAX_ATTEMPTS,
            })
        })
        .collect()
}

fn random_symbols<R: Rng>(task: Task, n: usize, rng: &mut R) -> Vec<String> {
    let pool: &[&str] = match task {
        Task::Reversal4 => &["0", "1", "2", "3"],
        _ => &["0", "1"],
    };
    (0..n)
        .map(|_| pool[rng.gen_range(0..pool.len())].to_string())
        .collect()
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn file_name(task: Task, split: Split, seed: u64) -> String {
        format!("{}.{}.{}.jsonl", task.name(), split.name(), seed)
    }

    /// Writes `<task>.<split>.<seed>.jsonl` for each split into `dir`.
    pub fn write_jsonl(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir.as_ref())?;
        Split::ALL
            .into_iter()
            .map(|split| {
                let path = dir
                    .as_ref()
                    .join(Self::file_name(self.task, split, self.seed));
                let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
                write_examples(&mut w, self.split(split))?;
                w.flush()?;
                Ok(path)
            })
            .collect()
    }

    pub fn read_jsonl(dir: impl AsRef<Path>, task: Task, seed: u64) -> Result<Dataset> {
        let load = |split| {
            let path = dir.as_ref().join(Self::file_name(task, split, seed));
            read_examples(std::io::BufReader::new(std::fs::File::open(path)?))
        };
        Ok(Dataset {
            task,
            seed,
            train: load(Split::Train)?,
            dev: load(Split::Dev)?,
            test: load(Split::Test)?,
        })
    }
}

pub fn write_examples<W: Write>(mut w: W, examples: &[Example]) -> Result<()> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples<R: BufRead>(r: R) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Fraction of openers immediately followed by their own closer.
pub fn immediate_closure_rate(examples: &[Example]) -> f64 {
    let (mut openers, mut closed) = (0usize, 0usize);
    for e in examples {
        for (t, s) in e.input.iter().enumerate() {
            let closer = match s.as_str() {
                "(" => ")",
                "[" => "]",
                _ => continue,
            };
            openers += 1;
            if e.input.get(t + 1).is_some_and(|n| n == closer) {
                closed += 1;
            }
        }
    }
    if openers == 0 {
        0.0
    } else {
        closed as f64 / openers as f64
    }
}

pub fn mean_input_length(examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    examples.iter().map(|e| e.input.len()).sum::<usize>() as f64 / examples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSizes {
        DatasetSizes {
            train: 50,
            dev: 10,
            test: 20,
        }
    }

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
            assert_eq!(
                serde_json::to_string(&t).unwrap(),
                format!("\"{}\"", t.name())
            );
        }
        assert!("nope".parse::<Task>().is_err());
    }

    #[test]
    fn one_hot_and_decode() {
        let a = Task::Reversal.input_alphabet();
        assert_eq!(a.one_hot("1").unwrap(), vec![0.0, 1.0, 0.0]);
        for s in a.symbols() {
            assert_eq!(a.decode(&a.one_hot(s).unwrap()), Some(s.as_str()));
        }
        assert!(matches!(a.one_hot("2"), Err(Error::UnknownSymbol { .. })));
    }

    #[test]
    fn encode_rejects_unknown_symbols() {
        let ex = oracles::reversal(&["0", "1"]);
        let t = Task::Reversal;
        let enc = encode(&ex, &t.input_alphabet(), &t.output_alphabet()).unwrap();
        assert_eq!(enc.inputs.len(), 4);
        assert_eq!(enc.targets, vec![2, 2, 1, 0]);
        assert!(encode(&ex, &Task::Xor.input_alphabet(), &t.output_alphabet()).is_err());
    }

    #[test]
    fn every_task_generates_valid_examples() {
        for task in Task::ALL {
            let ds = build_dataset_with(task, 3, &small()).unwrap();
            for split in Split::ALL {
                for e in ds.split(split) {
                    assert_eq!(e.input.len(), e.gold.len(), "{task}");
                    assert_eq!(e.mask.len(), e.gold.len(), "{task}");
                    assert!(e.masked_count() > 0, "{task}");
                    encode(e, &task.input_alphabet(), &task.output_alphabet()).unwrap();
                }
            }
        }
    }

    #[test]
    fn splits_use_distinct_streams() {
        let ds = build_dataset_with(Task::Xor, 1, &small()).unwrap();
        assert_ne!(ds.train[..10], ds.dev[..10]);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset_with(Task::Formula, 4, &small()).unwrap();
        let paths = ds.write_jsonl(dir.path()).unwrap();
        assert!(paths[0].ends_with("formula.train.4.jsonl"));
        assert_eq!(
            Dataset::read_jsonl(dir.path(), Task::Formula, 4).unwrap(),
            ds
        );
    }

    #[test]
    fn length_laws() {
        let sizes = DatasetSizes {
            train: 800,
            dev: 1,
            test: 1,
        };
        let rev = build_dataset_with(Task::Reversal, 9, &sizes).unwrap();
        let mean = rev.train.iter().map(|e| e.input.len() / 2).sum::<usize>() as f64 / 800.0;
        assert!((mean - 10.0).abs() <= 1.0, "{mean}");
        let xor = build_dataset_with(Task::Xor, 9, &sizes).unwrap();
        assert!(xor.train.iter().all(|e| e.input.len() == 12));
        let par = build_dataset_with(Task::Parenthesis, 9, &sizes).unwrap();
        assert!(par.train.iter().all(|e| e.input.len() <= 20));
    }

    #[test]
    fn closure_rate() {
        let ex = oracles::parenthesis(&["(", ")", "[", "(", ")", "]"]);
        assert!((immediate_closure_rate(&[ex]) - 2.0 / 3.0).abs() < 1e-12);
    }
}
