//! Per-step computation traces: CSV tables and grayscale heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autodiff::Tape;
use crate::controller::{argmax, Model, StepRecord};
use crate::data::{Alphabet, Task};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Trace {
    pub buffered: bool,
    pub input: Vec<String>,
    pub records: Vec<StepRecord>,
    /// Argmax symbol of each step's `y_t`.
    pub step_outputs: Vec<String>,
    /// Argmax symbol of each final output position.
    pub predictions: Vec<String>,
    /// Argmax symbol of the vector read from the input buffer (buffered only).
    pub reads: Vec<String>,
}

/// Runs `model` on `input` and records every controller step.
pub fn trace<S: AsRef<str>>(model: &Model, task: Task, input: &[S]) -> Result<Trace> {
    let ia = task.input_alphabet();
    let oa = task.output_alphabet();
    check_compatible(model, task, &ia, &oa)?;
    let input: Vec<String> = input.iter().map(|s| s.as_ref().to_string()).collect();
    let rows = input
        .iter()
        .map(|s| ia.one_hot(s))
        .collect::<Result<Vec<_>>>()?;
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape)?;
    let out = model.forward(&mut tape, &vars, &rows, rows.len(), true)?;
    let symbol = |a: &Alphabet, v: &[f64]| a.symbol(argmax(v)).unwrap_or("?").to_string();
    Ok(Trace {
        buffered: model.config.buffered,
        step_outputs: out.records.iter().map(|r| symbol(&oa, &r.output)).collect(),
        predictions: out
            .logits
            .iter()
            .map(|&z| symbol(&oa, tape.value(z)))
            .collect(),
        reads: if model.config.buffered {
            out.records.iter().map(|r| symbol(&ia, &r.input)).collect()
        } else {
            Vec::new()
        },
        records: out.records,
        input,
    })
}

fn check_compatible(model: &Model, task: Task, ia: &Alphabet, oa: &Alphabet) -> Result<()> {
    let c = &model.config;
    if c.input_size != ia.len() || c.output_size != oa.len() {
        return Err(Error::Config(format!(
            "checkpoint expects {} input and {} output symbols; task {task} has {} and {}",
            c.input_size,
            c.output_size,
            ia.len(),
            oa.len()
        )));
    }
    Ok(())
}

/// A matrix of values in `[0, 1]`, one column per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    fn from_columns(columns: &[Vec<f64>]) -> Heatmap {
        let rows = columns.first().map_or(0, Vec::len);
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        for (c, col) in columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                values[r * cols + c] = v;
            }
        }
        Heatmap { rows, cols, values }
    }

    /// Binary PGM (P5) with each cell drawn as a `scale`×`scale` block;
    /// lighter is higher.
    pub fn to_pgm(&self, scale: usize) -> Vec<u8> {
        let (w, h) = (self.cols * scale, self.rows * scale);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.reserve(w * h);
        for y in 0..h {
            for x in 0..w {
                let v = self.values[(y / scale) * self.cols + x / scale];
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn width(&self) -> usize {
        self.records.first().map_or(0, |r| r.vector.len())
    }

    /// One row per step. Floats use the shortest representation that parses
    /// back to the same value.
    pub fn to_csv(&self) -> String {
        let m = self.width();
        let mut out = String::from("t,input,u,d");
        for k in 0..m {
            write!(out, ",v{k}").unwrap();
        }
        out.push_str(",output");
        if self.buffered {
            out.push_str(",read,i,o");
        }
        out.push('\n');
        for (t, r) in self.records.iter().enumerate() {
            let sym = self.input.get(t).map_or("", String::as_str);
            write!(out, "{t},{sym},{:?},{:?}", r.pop, r.push).unwrap();
            for v in &r.vector {
                write!(out, ",{v:?}").unwrap();
            }
            write!(out, ",{}", self.step_outputs[t]).unwrap();
            if self.buffered {
                write!(
                    out,
                    ",{},{:?},{:?}",
                    self.reads[t],
                    r.input_pop.unwrap_or(f64::NAN),
                    r.output_push.unwrap_or(f64::NAN)
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Named heatmaps: pop and push strengths, pushed vectors, the input
    /// seen by the controller, output probabilities, and for buffered
    /// networks the buffer strengths.
    pub fn heatmaps(&self) -> Vec<(&'static str, Heatmap)> {
        let col = |f: &dyn Fn(&StepRecord) -> Vec<f64>| -> Heatmap {
            Heatmap::from_columns(&self.records.iter().map(f).collect::<Vec<_>>())
        };
        let mut maps = vec![
            ("pop", col(&|r| vec![r.pop])),
            ("push", col(&|r| vec![r.push])),
            ("vectors", col(&|r| r.vector.clone())),
            ("input", col(&|r| r.input.clone())),
            ("output", col(&|r| softmax(&r.output))),
        ];
        if self.buffered {
            maps.push(("input_pop", col(&|r| vec![r.input_pop.unwrap_or(0.0)])));
            maps.push(("output_push", col(&|r| vec![r.output_push.unwrap_or(0.0)])));
        }
        maps
    }

    /// Writes `<stem>.csv` and `<stem>.<name>.pgm` files into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv())?;
        let mut paths = vec![csv];
        for (name, map) in self.heatmaps() {
            let p = dir.join(format!("{stem}.{name}.pgm"));
            std::fs::write(&p, map.to_pgm(8))?;
            paths.push(p);
        }
        Ok(paths)
    }
}
