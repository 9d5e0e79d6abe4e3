mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stack_rnn::autodiff::Tape;
use stack_rnn::buffers::{InputBuffer, OutputBuffer};
use stack_rnn::controller::{masked_loss, ControllerKind, Model, ModelConfig};
use stack_rnn::data::{build_dataset_with, encode, DatasetSizes, Task};
use stack_rnn::stack::StackState;

const WIDTH: usize = 3;

fn discrete_op() -> impl Strategy<Value = DiscreteOp> {
    (
        any::<bool>(),
        any::<bool>(),
        prop::collection::vec(-1.0f64..1.0, WIDTH),
    )
        .prop_map(|(pop, push, vector)| DiscreteOp { pop, push, vector })
}

fn unit_strengths(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 0..max)
}

/// Basis vectors make the read weights directly observable.
fn basis(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stack_matches_discrete_stack(ops in prop::collection::vec(discrete_op(), 0..=50)) {
        let (want_reads, want_items) = discrete_stack(&ops, WIDTH);
        let (reads, items) = neural_stack(&ops, WIDTH);
        prop_assert!(max_abs_diff(&reads, &want_reads) <= 1e-9);
        let live: Vec<Vec<f64>> = items.iter().filter(|(_, s)| *s > 0.5).map(|(v, _)| v.clone()).collect();
        prop_assert!(items.iter().all(|(_, s)| *s == 0.0 || *s == 1.0));
        prop_assert_eq!(live, want_items);
    }

    #[test]
    fn input_buffer_matches_fifo(
        n in 0usize..20,
        dequeues in prop::collection::vec(any::<bool>(), 0..=50),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..WIDTH).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()).collect();
        let got = neural_input(&rows, &dequeues, WIDTH);
        let want = discrete_input(&rows, &dequeues, WIDTH);
        prop_assert!(max_abs_diff(&got, &want) <= 1e-9);
    }

    #[test]
    fn output_buffer_matches_fifo(
        rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, WIDTH), any::<bool>()), 0..=50),
        k in 0usize..60,
    ) {
        let got = neural_output(&rows, k, WIDTH);
        let want = discrete_output(&rows, k, WIDTH);
        prop_assert!(max_abs_diff(&got, &want) <= 1e-9);
    }

    #[test]
    fn pop_conserves_strength(strengths in unit_strengths(12), u in 0.0f64..2.0) {
        let n = strengths.len();
        let mut tape = Tape::new();
        let mut stack = StackState::new(n.max(1));
        for (v, &s) in basis(n.max(1)).iter().zip(&strengths) {
            let v = tape.vector_leaf(v);
            let s = tape.scalar_leaf(s);
            stack = stack.push(&mut tape, v, s).unwrap();
        }
        let u_var = tape.scalar_leaf(u);
        let popped = stack.pop(&mut tape, u_var).unwrap();
        let after = popped.strength_values(&tape);
        let before: f64 = strengths.iter().sum();
        let total: f64 = after.iter().sum();
        prop_assert!((total - (before - u).max(0.0)).abs() < 1e-9);
        for (a, b) in after.iter().zip(&strengths) {
            prop_assert!(*a >= 0.0 && *a <= *b);
        }
        // Read weights are the coordinates of the read in the basis.
        let r = popped.read(&mut tape).unwrap();
        let weights: f64 = tape.value(r).iter().sum();
        prop_assert!((weights - total.min(1.0)).abs() < 1e-9);
        prop_assert!(tape.value(r).iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn buffers_conserve_strength(strengths in unit_strengths(12), i in 0.0f64..2.0) {
        let n = strengths.len();
        let mut tape = Tape::new();
        let rows = basis(n.max(1));
        let mut out = OutputBuffer::new(n.max(1));
        for (y, &o) in rows.iter().zip(&strengths) {
            let y = tape.vector_leaf(y);
            let o = tape.scalar_leaf(o);
            out = out.enqueue(&mut tape, y, o).unwrap();
        }
        // Extraction weights sum to the strength available to each position.
        let total: f64 = strengths.iter().sum();
        let k = n + 2;
        let extracted = out.extract(&mut tape, k).unwrap();
        for (j, &v) in extracted.iter().enumerate() {
            let w: f64 = tape.value(v).iter().sum();
            let avail = (total - j as f64).clamp(0.0, 1.0);
            prop_assert!((w - avail).abs() < 1e-9, "position {j}: {w} vs {avail}");
        }

        let input = InputBuffer::new(&mut tape, &rows[..n], n.max(1)).unwrap();
        let mut input = input;
        let ones = n as f64;
        let i_var = tape.scalar_leaf(i);
        input = input.dequeue(&mut tape, i_var).unwrap();
        let left: f64 = input.strength_values(&tape).iter().sum();
        prop_assert!((left - (ones - i).max(0.0)).abs() < 1e-9);
    }

    #[test]
    fn unmasked_gold_does_not_change_loss(
        seed in any::<u64>(),
        len in 1usize..12,
        mask_bits in prop::collection::vec(any::<bool>(), 12),
        other in prop::collection::vec(0usize..3, 12),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let logits: Vec<_> = (0..len)
            .map(|_| {
                let v: Vec<f64> = (0..3).map(|_| rand::Rng::gen_range(&mut rng, -3.0..3.0)).collect();
                tape.vector_leaf(&v)
            })
            .collect();
        let targets: Vec<usize> = (0..len).map(|t| t % 3).collect();
        let mask = &mask_bits[..len];
        let changed: Vec<usize> = (0..len).map(|t| if mask[t] { targets[t] } else { other[t] }).collect();
        let a = masked_loss(&mut tape, &logits, &targets, mask).unwrap().map(|v| tape.scalar(v));
        let b = masked_loss(&mut tape, &logits, &changed, mask).unwrap().map(|v| tape.scalar(v));
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.is_none(), !mask.iter().any(|&m| m));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn datasets_are_deterministic(seed in 0u64..1000, task_ix in 0usize..Task::ALL.len()) {
        let task = Task::ALL[task_ix];
        let sizes = DatasetSizes { train: 20, dev: 5, test: 5 };
        let a = build_dataset_with(task, seed, &sizes).unwrap();
        let b = build_dataset_with(task, seed, &sizes).unwrap();
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.dev, &b.dev);
        prop_assert_eq!(&a.test, &b.test);
        let ia = task.input_alphabet();
        let oa = task.output_alphabet();
        for ex in a.train.iter().chain(&a.dev).chain(&a.test) {
            prop_assert!(ex.masked_count() > 0);
            prop_assert_eq!(ex.input.len(), ex.gold.len());
            prop_assert!(encode(ex, &ia, &oa).is_ok());
        }
    }

    #[test]
    fn saturated_buffers_match_unbuffered(seed in any::<u64>(), len in 1usize..10, lstm in any::<bool>()) {
        let controller = if lstm { ControllerKind::Lstm } else { ControllerKind::Linear };
        let (plain, buffered) = saturated_pair(controller, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let inputs: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                let k = rand::Rng::gen_range(&mut rng, 0..3);
                (0..3).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        let a = plain.predict(&inputs, len).unwrap();
        let b = buffered.predict(&inputs, len).unwrap();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-9);
    }
}

fn config(controller: ControllerKind, buffered: bool) -> ModelConfig {
    ModelConfig {
        controller,
        stack: true,
        buffered,
        stack_width: 2,
        hidden_size: 5,
        input_size: 3,
        output_size: 3,
        step_multiplier: 1,
    }
}

/// An unbuffered model and a buffered copy sharing its weights whose input
/// and output strengths are pinned to one.
fn saturated_pair(controller: ControllerKind, seed: u64) -> (Model, Model) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plain = Model::init(config(controller, false), &mut rng).unwrap();
    let mut buffered = Model::init(config(controller, true), &mut rng).unwrap();
    const SATURATE: f64 = 60.0;
    match controller {
        ControllerKind::Linear => {
            for p in &plain.params.entries {
                buffered.params.get_mut(&p.name).unwrap().values = p.values.clone();
            }
            for name in ["w_i", "w_o"] {
                buffered.params.get_mut(name).unwrap().values.fill(0.0);
            }
            for name in ["b_i", "b_o"] {
                buffered.params.get_mut(name).unwrap().values[0] = SATURATE;
            }
        }
        ControllerKind::Lstm => {
            // The head's rows are [y | v | u | d], then [i | o] when buffered.
            for name in ["W_gates", "b_gates"] {
                buffered.params.get_mut(name).unwrap().values =
                    plain.params.get(name).unwrap().values.clone();
            }
            let shared_rows = plain.params.get("b_head").unwrap().values.len();
            let w = plain.params.get("W_head").unwrap().values.clone();
            let bw = buffered.params.get_mut("W_head").unwrap();
            bw.values.fill(0.0);
            bw.values[..w.len()].copy_from_slice(&w);
            let b = plain.params.get("b_head").unwrap().values.clone();
            let bb = buffered.params.get_mut("b_head").unwrap();
            bb.values[..shared_rows].copy_from_slice(&b);
            bb.values[shared_rows..].fill(SATURATE);
        }
    }
    (plain, buffered)
}
