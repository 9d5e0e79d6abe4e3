//! Differentiable stack with continuous item strengths.
//!
//! Items are stored bottom to top; the top is the highest index. Every
//! operation returns a new state and leaves the receiver untouched, so
//! earlier states stay valid for tracing.

use crate::autodiff::{AutodiffError, Result, Shape, Tape, Var};

/// Pushed vectors together with their strengths.
#[derive(Clone, Debug)]
pub struct StackState {
    width: usize,
    vectors: Vec<Var>,
    strengths: Vec<Var>,
}

/// Instruction emitted by a controller: push vector, pop and push strengths.
#[derive(Clone, Copy, Debug)]
pub struct StackInstruction {
    pub vector: Var,
    pub pop: Var,
    pub push: Var,
}

impl StackState {
    pub fn new(width: usize) -> Self {
        StackState {
            width,
            vectors: Vec::new(),
            strengths: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Var] {
        &self.vectors
    }

    pub fn strengths(&self) -> &[Var] {
        &self.strengths
    }

    pub fn strength_values(&self, tape: &Tape) -> Vec<f64> {
        self.strengths.iter().map(|&s| tape.scalar(s)).collect()
    }

    /// Removes `u` units of strength, consuming items from the top down.
    pub fn pop(&self, tape: &mut Tape, u: Var) -> Result<StackState> {
        expect_scalar(tape, "pop", u)?;
        Ok(StackState {
            width: self.width,
            vectors: self.vectors.clone(),
            strengths: consume(tape, &self.strengths, u, Order::TopFirst)?,
        })
    }

    /// Places `v` on top with strength `d`.
    pub fn push(&self, tape: &mut Tape, v: Var, d: Var) -> Result<StackState> {
        expect_scalar(tape, "push", d)?;
        let shape = tape.shape(v);
        if shape != Shape::Vector(self.width) {
            return Err(AutodiffError::ShapeMismatch {
                op: "push",
                lhs: Shape::Vector(self.width),
                rhs: shape,
            });
        }
        let mut next = self.clone();
        next.vectors.push(v);
        next.strengths.push(d);
        Ok(next)
    }

    /// Strength-weighted sum of the topmost items totalling strength one.
    /// An empty stack reads the zero vector.
    pub fn read(&self, tape: &mut Tape) -> Result<Var> {
        read_weighted(
            tape,
            &self.vectors,
            &self.strengths,
            self.width,
            Order::TopFirst,
        )
    }

    /// Pop, then push, then read.
    pub fn step(&self, tape: &mut Tape, inst: &StackInstruction) -> Result<(StackState, Var)> {
        let popped = self.pop(tape, inst.pop)?;
        let pushed = popped.push(tape, inst.vector, inst.push)?;
        let r = pushed.read(tape)?;
        Ok((pushed, r))
    }
}

pub(crate) fn expect_scalar(tape: &Tape, op: &'static str, v: Var) -> Result<()> {
    match tape.shape(v) {
        Shape::Scalar => Ok(()),
        shape => Err(AutodiffError::BadOperand { op, shape }),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Order {
    /// Stack: start at the highest index.
    TopFirst,
    /// Queue: start at index zero.
    FrontFirst,
}

/// Subtracts `amount` from the strengths in `order`; whatever an item
/// cannot absorb is carried to the next one.
pub(crate) fn consume(
    tape: &mut Tape,
    strengths: &[Var],
    amount: Var,
    order: Order,
) -> Result<Vec<Var>> {
    let n = strengths.len();
    let mut out = strengths.to_vec();
    let mut left = amount;
    for k in 0..n {
        let i = match order {
            Order::TopFirst => n - 1 - k,
            Order::FrontFirst => k,
        };
        let old = strengths[i];
        let diff = tape.sub(old, left)?;
        out[i] = tape.relu(diff);
        if k + 1 < n {
            let rest = tape.sub(left, old)?;
            left = tape.relu(rest);
        }
    }
    Ok(out)
}

/// Reads items with total strength one, walking in `order`. Weights are
/// `min(strength, remaining)` where `remaining` starts at 1.
pub(crate) fn read_weighted(
    tape: &mut Tape,
    vectors: &[Var],
    strengths: &[Var],
    width: usize,
    order: Order,
) -> Result<Var> {
    let n = vectors.len();
    if n == 0 {
        return Ok(tape.zeros(Shape::Vector(width)));
    }
    let idx = |k: usize| match order {
        Order::TopFirst => n - 1 - k,
        Order::FrontFirst => k,
    };
    let mut remaining = tape.scalar_leaf(1.0);
    let mut acc: Option<Var> = None;
    for k in 0..n {
        let i = idx(k);
        let w = tape.min(strengths[i], remaining)?;
        let term = tape.scale(w, vectors[i])?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
        if k + 1 < n {
            let diff = tape.sub(remaining, strengths[i])?;
            remaining = tape.relu(diff);
        }
    }
    Ok(acc.expect("non-empty"))
}
