//! Differentiable input and output buffers.
//!
//! Both are strength-weighted queues: dequeuing consumes strength from the
//! front and reading takes a strength-one mixture starting at the front.

use crate::autodiff::{AutodiffError, Result, Shape, Tape, Var};
use crate::stack::{consume, expect_scalar, read_weighted, Order};

/// Read-only buffer over a fixed input sequence.
#[derive(Clone, Debug)]
pub struct InputBuffer {
    width: usize,
    rows: Vec<Var>,
    strengths: Vec<Var>,
}

impl InputBuffer {
    /// Loads `rows` (each of length `width`) as constants with strength one.
    pub fn new(tape: &mut Tape, rows: &[Vec<f64>], width: usize) -> Result<Self> {
        let mut vars = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != width {
                return Err(AutodiffError::ShapeMismatch {
                    op: "input_buffer",
                    lhs: Shape::Vector(width),
                    rhs: Shape::Vector(r.len()),
                });
            }
            vars.push(tape.vector_leaf(r));
        }
        let strengths = (0..rows.len()).map(|_| tape.scalar_leaf(1.0)).collect();
        Ok(InputBuffer {
            width,
            rows: vars,
            strengths,
        })
    }

    pub fn rows(&self) -> &[Var] {
        &self.rows
    }

    pub fn strengths(&self) -> &[Var] {
        &self.strengths
    }

    pub fn strength_values(&self, tape: &Tape) -> Vec<f64> {
        self.strengths.iter().map(|&s| tape.scalar(s)).collect()
    }

    pub fn dequeue(&self, tape: &mut Tape, strength: Var) -> Result<InputBuffer> {
        expect_scalar(tape, "dequeue_input", strength)?;
        Ok(InputBuffer {
            width: self.width,
            rows: self.rows.clone(),
            strengths: consume(tape, &self.strengths, strength, Order::FrontFirst)?,
        })
    }

    /// Front-weighted mixture with total strength one; zero when exhausted.
    pub fn read(&self, tape: &mut Tape) -> Result<Var> {
        read_weighted(
            tape,
            &self.rows,
            &self.strengths,
            self.width,
            Order::FrontFirst,
        )
    }
}

/// Write-only buffer collecting controller outputs.
#[derive(Clone, Debug)]
pub struct OutputBuffer {
    width: usize,
    rows: Vec<Var>,
    strengths: Vec<Var>,
}

impl OutputBuffer {
    pub fn new(width: usize) -> Self {
        OutputBuffer {
            width,
            rows: Vec::new(),
            strengths: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn strengths(&self) -> &[Var] {
        &self.strengths
    }

    pub fn strength_values(&self, tape: &Tape) -> Vec<f64> {
        self.strengths.iter().map(|&s| tape.scalar(s)).collect()
    }

    /// Appends `y` at the back with strength `o`.
    pub fn enqueue(&self, tape: &mut Tape, y: Var, o: Var) -> Result<OutputBuffer> {
        expect_scalar(tape, "enqueue_output", o)?;
        let shape = tape.shape(y);
        if shape != Shape::Vector(self.width) {
            return Err(AutodiffError::ShapeMismatch {
                op: "enqueue_output",
                lhs: Shape::Vector(self.width),
                rhs: shape,
            });
        }
        let mut next = self.clone();
        next.rows.push(y);
        next.strengths.push(o);
        Ok(next)
    }

    /// Produces `k` vectors, each by reading the front with strength one and
    /// then dequeuing with strength one.
    pub fn extract(&self, tape: &mut Tape, k: usize) -> Result<Vec<Var>> {
        let mut strengths = self.strengths.clone();
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            out.push(read_weighted(
                tape,
                &self.rows,
                &strengths,
                self.width,
                Order::FrontFirst,
            )?);
            if j + 1 < k {
                let one = tape.scalar_leaf(1.0);
                strengths = consume(tape, &strengths, one, Order::FrontFirst)?;
            }
        }
        Ok(out)
    }
}
