//! Linear and LSTM controllers and the full Neural Stack forward passes.
//!
//! A controller reads `[x_t ; r_{t-1}]` (plus `h_{t-1}` for the LSTM) and
//! emits an output logit vector `y_t`, a stack instruction `(v_t, u_t, d_t)`
//! and, for buffered networks, input-dequeue and output-enqueue strengths
//! `(i_t, o_t)`. All instruction values pass through a sigmoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Result as AdResult, Shape, Tape, Var};
use crate::buffers::{InputBuffer, OutputBuffer};
use crate::error::{Error, Result};
use crate::stack::{StackInstruction, StackState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Linear,
    Lstm,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerKind::Linear => write!(f, "linear"),
            ControllerKind::Lstm => write!(f, "lstm"),
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ControllerKind::Linear),
            "lstm" => Ok(ControllerKind::Lstm),
            other => Err(Error::Config(format!("unknown controller {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub controller: ControllerKind,
    pub stack: bool,
    pub buffered: bool,
    pub stack_width: usize,
    pub hidden_size: usize,
    pub input_size: usize,
    pub output_size: usize,
    /// Buffered networks run `step_multiplier * input_len` controller steps.
    pub step_multiplier: usize,
}

impl ModelConfig {
    /// Length of the concatenated instruction/output head.
    fn head_size(&self) -> usize {
        self.output_size + self.stack_width + 2 + if self.buffered { 2 } else { 0 }
    }

    /// Width of `[x ; r]`.
    fn linear_in(&self) -> usize {
        self.input_size + self.stack_width
    }

    /// Named parameter shapes, in storage order.
    pub fn layout(&self) -> Vec<(String, Shape)> {
        let mut out = Vec::new();
        let mut add = |name: &str, shape: Shape| out.push((name.to_string(), shape));
        match self.controller {
            ControllerKind::Linear => {
                let n = self.linear_in();
                add("W_y", Shape::Matrix(self.output_size, n));
                add("b_y", Shape::Vector(self.output_size));
                add("W_v", Shape::Matrix(self.stack_width, n));
                add("b_v", Shape::Vector(self.stack_width));
                add("w_u", Shape::Vector(n));
                add("b_u", Shape::Scalar);
                add("w_d", Shape::Vector(n));
                add("b_d", Shape::Scalar);
                if self.buffered {
                    add("w_i", Shape::Vector(n));
                    add("b_i", Shape::Scalar);
                    add("w_o", Shape::Vector(n));
                    add("b_o", Shape::Scalar);
                }
            }
            ControllerKind::Lstm => {
                let h = self.hidden_size;
                add("W_gates", Shape::Matrix(4 * h, self.linear_in() + h));
                add("b_gates", Shape::Vector(4 * h));
                add("W_head", Shape::Matrix(self.head_size(), h));
                add("b_head", Shape::Vector(self.head_size()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 || self.stack_width == 0 {
            return Err(Error::Config(
                "alphabet and stack widths must be positive".into(),
            ));
        }
        if self.controller == ControllerKind::Lstm && self.hidden_size == 0 {
            return Err(Error::Config("lstm hidden size must be positive".into()));
        }
        if self.buffered && self.step_multiplier == 0 {
            return Err(Error::Config("step multiplier must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<f64>,
}

/// Learnable weights of a controller.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub entries: Vec<Param>,
}

impl Params {
    /// Weights uniform in `±sqrt(1 / fan_in)`, biases zero.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Params {
        let entries = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.numel();
                let values = match shape {
                    Shape::Matrix(_, fan_in) | Shape::Vector(fan_in) if !name.starts_with('b') => {
                        let bound = (1.0 / fan_in as f64).sqrt();
                        (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
                    }
                    _ => vec![0.0; n],
                };
                Param {
                    name,
                    shape,
                    values,
                }
            })
            .collect();
        Params { entries }
    }

    pub fn zeros(config: &ModelConfig) -> Params {
        Params {
            entries: config
                .layout()
                .into_iter()
                .map(|(name, shape)| Param {
                    values: vec![0.0; shape.numel()],
                    name,
                    shape,
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.iter_mut().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.values.len()).sum()
    }

    /// Records every parameter as a leaf, in storage order.
    pub fn bind(&self, tape: &mut Tape) -> AdResult<Vec<Var>> {
        self.entries
            .iter()
            .map(|p| tape.leaf(p.shape, &p.values))
            .collect()
    }

    /// Checks names and shapes against a configuration's layout.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let layout = config.layout();
        if layout.len() != self.entries.len()
            || layout
                .iter()
                .zip(&self.entries)
                .any(|((n, s), p)| *n != p.name || *s != p.shape || p.values.len() != s.numel())
        {
            return Err(Error::Checkpoint(
                "parameter layout does not match model configuration".into(),
            ));
        }
        Ok(())
    }
}

/// Recurrent state of an LSTM controller.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

/// One controller step's emissions.
#[derive(Clone, Copy, Debug)]
pub struct ControllerOutput {
    pub y: Var,
    pub instruction: StackInstruction,
    /// `i_t`, buffered networks only.
    pub input_pop: Option<Var>,
    /// `o_t`, buffered networks only.
    pub output_push: Option<Var>,
}

enum Bound {
    Linear {
        w_y: Var,
        b_y: Var,
        w_v: Var,
        b_v: Var,
        w_u: Var,
        b_u: Var,
        w_d: Var,
        b_d: Var,
        io: Option<[Var; 4]>,
    },
    Lstm {
        w_gates: Var,
        b_gates: Var,
        w_head: Var,
        b_head: Var,
    },
}

impl Bound {
    fn new(config: &ModelConfig, vars: &[Var]) -> Result<Bound> {
        if vars.len() != config.layout().len() {
            return Err(Error::Config(format!(
                "expected {} bound parameters, got {}",
                config.layout().len(),
                vars.len()
            )));
        }
        Ok(match config.controller {
            ControllerKind::Linear => Bound::Linear {
                w_y: vars[0],
                b_y: vars[1],
                w_v: vars[2],
                b_v: vars[3],
                w_u: vars[4],
                b_u: vars[5],
                w_d: vars[6],
                b_d: vars[7],
                io: config
                    .buffered
                    .then(|| [vars[8], vars[9], vars[10], vars[11]]),
            },
            ControllerKind::Lstm => Bound::Lstm {
                w_gates: vars[0],
                b_gates: vars[1],
                w_head: vars[2],
                b_head: vars[3],
            },
        })
    }
}

fn affine_scalar(tape: &mut Tape, w: Var, b: Var, z: Var) -> AdResult<Var> {
    let dot = tape.dot(w, z)?;
    let pre = tape.add(dot, b)?;
    Ok(tape.sigmoid(pre))
}

/// Linear controller step over `[x ; r_prev]`.
fn linear_step(tape: &mut Tape, bound: &Bound, x: Var, r_prev: Var) -> AdResult<ControllerOutput> {
    let Bound::Linear {
        w_y,
        b_y,
        w_v,
        b_v,
        w_u,
        b_u,
        w_d,
        b_d,
        io,
    } = *bound
    else {
        unreachable!("linear_step on lstm parameters")
    };
    let z = tape.concat(x, r_prev)?;
    let wy = tape.matvec(w_y, z)?;
    let y = tape.add(wy, b_y)?;
    let wv = tape.matvec(w_v, z)?;
    let pre_v = tape.add(wv, b_v)?;
    let v = tape.sigmoid(pre_v);
    let u = affine_scalar(tape, w_u, b_u, z)?;
    let d = affine_scalar(tape, w_d, b_d, z)?;
    let (input_pop, output_push) = match io {
        Some([w_i, b_i, w_o, b_o]) => (
            Some(affine_scalar(tape, w_i, b_i, z)?),
            Some(affine_scalar(tape, w_o, b_o, z)?),
        ),
        None => (None, None),
    };
    Ok(ControllerOutput {
        y,
        instruction: StackInstruction {
            vector: v,
            pop: u,
            push: d,
        },
        input_pop,
        output_push,
    })
}

/// LSTM controller step over `[x ; r_prev ; h_prev]` with gate order
/// input, forget, candidate, output. A single linear layer on `h_t` produces
/// the concatenated head `[y | v | u | d (| i | o)]`.
fn lstm_step(
    tape: &mut Tape,
    config: &ModelConfig,
    bound: &Bound,
    x: Var,
    r_prev: Var,
    state: LstmState,
) -> AdResult<(ControllerOutput, LstmState)> {
    let Bound::Lstm {
        w_gates,
        b_gates,
        w_head,
        b_head,
    } = *bound
    else {
        unreachable!("lstm_step on linear parameters")
    };
    let h = config.hidden_size;
    let xr = tape.concat(x, r_prev)?;
    let z = tape.concat(xr, state.hidden)?;
    let wz = tape.matvec(w_gates, z)?;
    let gates = tape.add(wz, b_gates)?;
    let gi = tape.slice(gates, 0, h)?;
    let gf = tape.slice(gates, h, h)?;
    let gg = tape.slice(gates, 2 * h, h)?;
    let go = tape.slice(gates, 3 * h, h)?;
    let ig = tape.sigmoid(gi);
    let fg = tape.sigmoid(gf);
    let cand = tape.tanh(gg);
    let og = tape.sigmoid(go);
    let keep = tape.mul(fg, state.cell)?;
    let write = tape.mul(ig, cand)?;
    let cell = tape.add(keep, write)?;
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(og, squashed)?;

    let wh = tape.matvec(w_head, hidden)?;
    let head = tape.add(wh, b_head)?;
    let n_out = config.output_size;
    let m = config.stack_width;
    let y = tape.slice(head, 0, n_out)?;
    let pre_v = tape.slice(head, n_out, m)?;
    let v = tape.sigmoid(pre_v);
    let mut scalar_head = |k: usize| -> AdResult<Var> {
        let s = tape.index(head, n_out + m + k)?;
        Ok(tape.sigmoid(s))
    };
    let u = scalar_head(0)?;
    let d = scalar_head(1)?;
    let (input_pop, output_push) = if config.buffered {
        (Some(scalar_head(2)?), Some(scalar_head(3)?))
    } else {
        (None, None)
    };
    Ok((
        ControllerOutput {
            y,
            instruction: StackInstruction {
                vector: v,
                pop: u,
                push: d,
            },
            input_pop,
            output_push,
        },
        LstmState { hidden, cell },
    ))
}

/// Per-step record for inspection and trace export.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Input vector seen by the controller.
    pub input: Vec<f64>,
    pub pop: f64,
    pub push: f64,
    pub vector: Vec<f64>,
    /// Stack strengths after the step (empty when the stack is disabled).
    pub strengths: Vec<f64>,
    pub read: Vec<f64>,
    /// Raw output logits `y_t`.
    pub output: Vec<f64>,
    pub input_pop: Option<f64>,
    pub output_push: Option<f64>,
    /// Input buffer strengths after this step's dequeue.
    pub input_strengths: Option<Vec<f64>>,
    /// Output buffer strengths after this step's enqueue.
    pub output_strengths: Option<Vec<f64>>,
}

impl StepRecord {
    pub fn remaining_input(&self) -> Option<f64> {
        self.input_strengths.as_ref().map(|s| s.iter().sum())
    }
}

/// Logits of a forward pass, plus optional step records.
pub struct ForwardOutput {
    pub logits: Vec<Var>,
    pub records: Vec<StepRecord>,
}

/// A controller configuration with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    pub fn new(config: ModelConfig, params: Params) -> Result<Model> {
        config.validate()?;
        params.check_layout(&config)?;
        Ok(Model { config, params })
    }

    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Model> {
        config.validate()?;
        let params = Params::init(&config, rng);
        Ok(Model { config, params })
    }

    /// Number of controller steps a buffered network runs for an input.
    pub fn buffered_steps(&self, input_len: usize) -> usize {
        (input_len * self.config.step_multiplier).max(1)
    }

    /// Runs the configured architecture. `vars` are the bound parameters
    /// (see [`Params::bind`]); `output_len` is the number of vectors to
    /// extract from the output buffer and is ignored by unbuffered networks.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &[Vec<f64>],
        output_len: usize,
        record: bool,
    ) -> Result<ForwardOutput> {
        if self.config.buffered {
            let steps = self.buffered_steps(inputs.len());
            self.forward_buffered(tape, vars, inputs, steps, output_len, record)
        } else {
            self.forward_unbuffered(tape, vars, inputs, record)
        }
    }

    /// Convenience wrapper returning plain logit values.
    pub fn predict(&self, inputs: &[Vec<f64>], output_len: usize) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape)?;
        let out = self.forward(&mut tape, &vars, inputs, output_len, false)?;
        Ok(out.logits.iter().map(|&v| tape.value(v).to_vec()).collect())
    }

    /// One controller step on bound parameters, without touching the stack.
    /// `state` must be `Some` exactly for LSTM controllers.
    pub fn step(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        r_prev: Var,
        state: Option<LstmState>,
    ) -> Result<(ControllerOutput, Option<LstmState>)> {
        let bound = Bound::new(&self.config, vars)?;
        if state.is_some() != (self.config.controller == ControllerKind::Lstm) {
            return Err(Error::Config(
                "lstm state given to the wrong controller".into(),
            ));
        }
        let mut state = state;
        let out = self.controller_step(tape, &bound, x, r_prev, &mut state)?;
        Ok((out, state))
    }

    /// Zero initial state for LSTM controllers, `None` for linear ones.
    pub fn initial_state(&self, tape: &mut Tape) -> Option<LstmState> {
        self.initial_lstm(tape)
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.config.input_size) {
            return Err(Error::Autodiff(
                crate::autodiff::AutodiffError::ShapeMismatch {
                    op: "forward",
                    lhs: Shape::Vector(self.config.input_size),
                    rhs: Shape::Vector(bad.len()),
                },
            ));
        }
        Ok(())
    }

    fn controller_step(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: Var,
        r_prev: Var,
        lstm: &mut Option<LstmState>,
    ) -> AdResult<ControllerOutput> {
        match lstm {
            None => linear_step(tape, bound, x, r_prev),
            Some(state) => {
                let (out, next) = lstm_step(tape, &self.config, bound, x, r_prev, *state)?;
                *state = next;
                Ok(out)
            }
        }
    }

    fn initial_lstm(&self, tape: &mut Tape) -> Option<LstmState> {
        (self.config.controller == ControllerKind::Lstm).then(|| LstmState {
            hidden: tape.zeros(Shape::Vector(self.config.hidden_size)),
            cell: tape.zeros(Shape::Vector(self.config.hidden_size)),
        })
    }

    /// Applies the stack instruction, or returns a zero read when the stack
    /// is disabled.
    fn apply_stack(
        &self,
        tape: &mut Tape,
        stack: &mut StackState,
        inst: &StackInstruction,
    ) -> AdResult<Var> {
        if self.config.stack {
            let (next, r) = stack.step(tape, inst)?;
            *stack = next;
            Ok(r)
        } else {
            Ok(tape.zeros(Shape::Vector(self.config.stack_width)))
        }
    }

    /// Same-length transduction: one output per input symbol.
    pub fn forward_unbuffered(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &[Vec<f64>],
        record: bool,
    ) -> Result<ForwardOutput> {
        self.check_inputs(inputs)?;
        let bound = Bound::new(&self.config, vars)?;
        let mut lstm = self.initial_lstm(tape);
        let mut stack = StackState::new(self.config.stack_width);
        let mut r = tape.zeros(Shape::Vector(self.config.stack_width));
        let mut logits = Vec::with_capacity(inputs.len());
        let mut records = Vec::new();
        for x_vals in inputs {
            let x = tape.vector_leaf(x_vals);
            let out = self.controller_step(tape, &bound, x, r, &mut lstm)?;
            r = self.apply_stack(tape, &mut stack, &out.instruction)?;
            logits.push(out.y);
            if record {
                records.push(self.record(tape, x, &out, &stack, r, None, None));
            }
        }
        Ok(ForwardOutput { logits, records })
    }

    /// Runs `steps` controller steps against the input/output buffers, then
    /// extracts `output_len` vectors from the output buffer. The first step
    /// dequeues with strength zero, so `x_1` is the first input symbol.
    pub fn forward_buffered(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: &[Vec<f64>],
        steps: usize,
        output_len: usize,
        record: bool,
    ) -> Result<ForwardOutput> {
        if !self.config.buffered {
            return Err(Error::Config(
                "forward_buffered on an unbuffered model".into(),
            ));
        }
        self.check_inputs(inputs)?;
        let bound = Bound::new(&self.config, vars)?;
        let mut lstm = self.initial_lstm(tape);
        let mut stack = StackState::new(self.config.stack_width);
        let mut r = tape.zeros(Shape::Vector(self.config.stack_width));
        let mut input = InputBuffer::new(tape, inputs, self.config.input_size)?;
        let mut output = OutputBuffer::new(self.config.output_size);
        let mut dequeue = tape.scalar_leaf(0.0);
        let mut records = Vec::new();
        for _ in 0..steps {
            input = input.dequeue(tape, dequeue)?;
            let x = input.read(tape)?;
            let out = self.controller_step(tape, &bound, x, r, &mut lstm)?;
            r = self.apply_stack(tape, &mut stack, &out.instruction)?;
            let push = out.output_push.expect("buffered controller emits o_t");
            output = output.enqueue(tape, out.y, push)?;
            dequeue = out.input_pop.expect("buffered controller emits i_t");
            if record {
                records.push(self.record(tape, x, &out, &stack, r, Some(&input), Some(&output)));
            }
        }
        let logits = output.extract(tape, output_len)?;
        Ok(ForwardOutput { logits, records })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        tape: &Tape,
        x: Var,
        out: &ControllerOutput,
        stack: &StackState,
        r: Var,
        input: Option<&InputBuffer>,
        output: Option<&OutputBuffer>,
    ) -> StepRecord {
        StepRecord {
            input: tape.value(x).to_vec(),
            pop: tape.scalar(out.instruction.pop),
            push: tape.scalar(out.instruction.push),
            vector: tape.value(out.instruction.vector).to_vec(),
            strengths: if self.config.stack {
                stack.strength_values(tape)
            } else {
                Vec::new()
            },
            read: tape.value(r).to_vec(),
            output: tape.value(out.y).to_vec(),
            input_pop: out.input_pop.map(|v| tape.scalar(v)),
            output_push: out.output_push.map(|v| tape.scalar(v)),
            input_strengths: input.map(|b| b.strength_values(tape)),
            output_strengths: output.map(|b| b.strength_values(tape)),
        }
    }
}

/// Sum of softmax cross-entropies over masked positions, or `None` when no
/// position is masked in.
pub fn masked_loss(
    tape: &mut Tape,
    logits: &[Var],
    targets: &[usize],
    mask: &[bool],
) -> AdResult<Option<Var>> {
    let mut total: Option<Var> = None;
    for ((&z, &t), &m) in logits.iter().zip(targets).zip(mask) {
        if !m {
            continue;
        }
        let ce = tape.softmax_cross_entropy(z, t)?;
        total = Some(match total {
            None => ce,
            Some(acc) => tape.add(acc, ce)?,
        });
    }
    Ok(total)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
