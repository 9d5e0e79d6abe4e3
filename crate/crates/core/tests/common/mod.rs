//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use stack_rnn::autodiff::Tape;
use stack_rnn::buffers::{InputBuffer, OutputBuffer};
use stack_rnn::stack::{StackInstruction, StackState};

/// One `{0,1}` stack instruction with the vector to push.
#[derive(Clone, Debug)]
pub struct DiscreteOp {
    pub pop: bool,
    pub push: bool,
    pub vector: Vec<f64>,
}

/// Runs a classical stack and returns the top after every step (zeros when
/// empty), with the final contents bottom to top.
pub fn discrete_stack(ops: &[DiscreteOp], width: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut stack: Vec<Vec<f64>> = Vec::new();
    let mut reads = Vec::new();
    for op in ops {
        if op.pop {
            stack.pop();
        }
        if op.push {
            stack.push(op.vector.clone());
        }
        reads.push(stack.last().cloned().unwrap_or_else(|| vec![0.0; width]));
    }
    (reads, stack)
}

/// Stack items as `(vector, strength)`, bottom to top.
pub type Items = Vec<(Vec<f64>, f64)>;

/// Same protocol on the neural stack. Returns reads and the final
/// `(vector, strength)` pairs.
pub fn neural_stack(ops: &[DiscreteOp], width: usize) -> (Vec<Vec<f64>>, Items) {
    let mut tape = Tape::new();
    let mut stack = StackState::new(width);
    let mut reads = Vec::new();
    for op in ops {
        let inst = StackInstruction {
            vector: tape.vector_leaf(&op.vector),
            pop: tape.scalar_leaf(if op.pop { 1.0 } else { 0.0 }),
            push: tape.scalar_leaf(if op.push { 1.0 } else { 0.0 }),
        };
        let (next, r) = stack.step(&mut tape, &inst).unwrap();
        stack = next;
        reads.push(tape.value(r).to_vec());
    }
    let items = stack
        .vectors()
        .iter()
        .zip(stack.strengths())
        .map(|(&v, &s)| (tape.value(v).to_vec(), tape.scalar(s)))
        .collect();
    (reads, items)
}

/// Classical input queue: dequeue when the flag is set, then read the front.
pub fn discrete_input(rows: &[Vec<f64>], dequeues: &[bool], width: usize) -> Vec<Vec<f64>> {
    let mut front = 0;
    dequeues
        .iter()
        .map(|&d| {
            if d && front < rows.len() {
                front += 1;
            }
            rows.get(front).cloned().unwrap_or_else(|| vec![0.0; width])
        })
        .collect()
}

pub fn neural_input(rows: &[Vec<f64>], dequeues: &[bool], width: usize) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let mut buf = InputBuffer::new(&mut tape, rows, width).unwrap();
    dequeues
        .iter()
        .map(|&d| {
            let s = tape.scalar_leaf(if d { 1.0 } else { 0.0 });
            buf = buf.dequeue(&mut tape, s).unwrap();
            let r = buf.read(&mut tape).unwrap();
            tape.value(r).to_vec()
        })
        .collect()
}

/// Classical output queue: keep flagged rows, then take the first `k`,
/// padding with zeros.
pub fn discrete_output(rows: &[(Vec<f64>, bool)], k: usize, width: usize) -> Vec<Vec<f64>> {
    let kept: Vec<Vec<f64>> = rows
        .iter()
        .filter(|(_, o)| *o)
        .map(|(y, _)| y.clone())
        .collect();
    (0..k)
        .map(|j| kept.get(j).cloned().unwrap_or_else(|| vec![0.0; width]))
        .collect()
}

pub fn neural_output(rows: &[(Vec<f64>, bool)], k: usize, width: usize) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let mut buf = OutputBuffer::new(width);
    for (y, o) in rows {
        let y = tape.vector_leaf(y);
        let o = tape.scalar_leaf(if *o { 1.0 } else { 0.0 });
        buf = buf.enqueue(&mut tape, y, o).unwrap();
    }
    buf.extract(&mut tape, k)
        .unwrap()
        .into_iter()
        .map(|v| tape.value(v).to_vec())
        .collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

pub fn chars(s: &str) -> Vec<String> {
    s.chars().map(String::from).collect()
}

/// Value of a complete RPN formula, by recursive descent from the right.
/// Returns the value and the index where the formula starts.
pub fn eval_rpn_from(tokens: &[String], end: usize) -> (bool, usize) {
    match tokens[end].as_str() {
        "T" => (true, end),
        "F" => (false, end),
        op => {
            let (b, start_b) = eval_rpn_from(tokens, end - 1);
            let (a, start_a) = eval_rpn_from(tokens, start_b - 1);
            (if op == "∨" { a || b } else { a && b }, start_a)
        }
    }
}

/// Start of the complete subformula ending at `end`, by arity counting.
pub fn subformula_start(tokens: &[String], end: usize) -> usize {
    let mut need = 1i64;
    let mut i = end;
    loop {
        need += if matches!(tokens[i].as_str(), "T" | "F") {
            -1
        } else {
            1
        };
        if need == 0 {
            return i;
        }
        i -= 1;
    }
}
