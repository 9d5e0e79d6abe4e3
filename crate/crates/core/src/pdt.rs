//! Deterministic pushdown transducers.
//!
//! A transition `δ(q, x, s) = (q', y, s')` fires in state `q` when `x` is
//! the next input symbol (or `x = ε`) and `s` is on top of the stack (or
//! `s = ε`, in which case nothing is popped). It emits `y` (possibly ε),
//! pushes `s'` (possibly ε) and moves to `q'`. The stack starts holding the
//! bottom marker [`BOTTOM`].
//!
//! ε-input transitions take priority over input-consuming ones; the
//! constructor rejects any pair of transitions that could both apply to the
//! same configuration.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const BOTTOM: &str = "$";

/// Consecutive ε-input steps allowed before a run is declared divergent.
const MAX_EPSILON_RUN: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: String,
    pub input: Option<String>,
    pub pop: Option<String>,
    pub to: String,
    pub output: Option<String>,
    pub push: Option<String>,
}

impl Transition {
    pub fn new(
        from: &str,
        input: Option<&str>,
        pop: Option<&str>,
        to: &str,
        output: Option<&str>,
        push: Option<&str>,
    ) -> Self {
        Transition {
            from: from.into(),
            input: input.map(Into::into),
            pop: pop.map(Into::into),
            to: to.into(),
            output: output.map(Into::into),
            push: push.map(Into::into),
        }
    }
}

fn label(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("ε")
}

fn compatible(a: &Option<String>, b: &Option<String>) -> bool {
    a.is_none() || b.is_none() || a == b
}

#[derive(Clone, Debug)]
pub struct Pdt {
    initial: String,
    transitions: Vec<Transition>,
    by_state: HashMap<String, Vec<usize>>,
}

/// Output of a run: the full output string, and the outputs grouped by the
/// input symbol whose consumption (plus any following ε-moves) produced them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PdtRun {
    pub output: Vec<String>,
    pub per_input: Vec<Vec<String>>,
}

impl Pdt {
    pub fn new(initial: &str, transitions: Vec<Transition>) -> Result<Pdt> {
        for (i, a) in transitions.iter().enumerate() {
            for b in &transitions[i + 1..] {
                if a.from == b.from && compatible(&a.input, &b.input) && compatible(&a.pop, &b.pop)
                {
                    return Err(Error::Pdt(format!(
                        "conflicting transitions in state {}: ({}, {}) and ({}, {})",
                        a.from,
                        label(&a.input),
                        label(&a.pop),
                        label(&b.input),
                        label(&b.pop)
                    )));
                }
            }
        }
        let mut by_state: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in transitions.iter().enumerate() {
            by_state.entry(t.from.clone()).or_default().push(i);
        }
        Ok(Pdt {
            initial: initial.into(),
            transitions,
            by_state,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    fn find(&self, state: &str, input: Option<&str>, top: Option<&str>) -> Option<&Transition> {
        self.by_state
            .get(state)?
            .iter()
            .map(|&i| &self.transitions[i])
            .find(|t| t.input.as_deref() == input && (t.pop.is_none() || t.pop.as_deref() == top))
    }

    pub fn run<S: AsRef<str>>(&self, input: &[S]) -> Result<Vec<String>> {
        Ok(self.run_grouped(input)?.output)
    }

    pub fn run_grouped<S: AsRef<str>>(&self, input: &[S]) -> Result<PdtRun> {
        let mut state = self.initial.clone();
        let mut stack = vec![BOTTOM.to_string()];
        let mut output = Vec::new();
        let mut per_input: Vec<Vec<String>> = Vec::with_capacity(input.len());
        let mut pos = 0;
        let mut eps_run = 0;
        loop {
            let top = stack.last().map(String::as_str);
            let (t, consumed) = match self.find(&state, None, top) {
                Some(t) => {
                    eps_run += 1;
                    if eps_run > MAX_EPSILON_RUN {
                        return Err(Error::Pdt(format!(
                            "ε-transitions diverge in state {state}"
                        )));
                    }
                    (t, false)
                }
                None if pos < input.len() => {
                    let x = input[pos].as_ref();
                    let t = self.find(&state, Some(x), top).ok_or_else(|| {
                        Error::Pdt(format!(
                            "undefined configuration ({state}, {x}, {})",
                            top.unwrap_or("ε")
                        ))
                    })?;
                    eps_run = 0;
                    (t, true)
                }
                None => break,
            };
            if consumed {
                per_input.push(Vec::new());
                pos += 1;
            }
            if t.pop.is_some() {
                stack.pop();
            }
            if let Some(s) = &t.push {
                stack.push(s.clone());
            }
            if let Some(y) = &t.output {
                output.push(y.clone());
                if let Some(group) = per_input.last_mut() {
                    group.push(y.clone());
                }
            }
            state = t.to.clone();
        }
        Ok(PdtRun { output, per_input })
    }

    /// Single-state reversal machine: push each bit while emitting `#`, then
    /// pop one bit per `#`.
    pub fn reversal() -> Pdt {
        let mut ts = Vec::new();
        for x in ["0", "1"] {
            ts.push(Transition::new(
                "q0",
                Some(x),
                None,
                "q0",
                Some("#"),
                Some(x),
            ));
            ts.push(Transition::new(
                "q0",
                Some("#"),
                Some(x),
                "q0",
                Some(x),
                None,
            ));
        }
        Pdt::new("q0", ts).expect("reversal machine is deterministic")
    }

    /// Two-state parity machine; the stack is unused.
    pub fn cumulative_xor() -> Pdt {
        let ts = vec![
            Transition::new("0", Some("0"), None, "0", Some("0"), None),
            Transition::new("0", Some("1"), None, "1", Some("1"), None),
            Transition::new("1", Some("0"), None, "1", Some("1"), None),
            Transition::new("1", Some("1"), None, "0", Some("0"), None),
        ];
        Pdt::new("0", ts).expect("xor machine is deterministic")
    }

    /// Predicts the closer for the innermost open bracket. After a closer is
    /// consumed, an ε-move peeks at the new stack top and emits its closer
    /// (or nothing at the bottom marker).
    pub fn parenthesis() -> Pdt {
        let mut ts = Vec::new();
        for (open, close) in [("(", ")"), ("[", "]")] {
            ts.push(Transition::new(
                "q1",
                Some(open),
                None,
                "q1",
                Some(close),
                Some(open),
            ));
            ts.push(Transition::new(
                "q1",
                Some(close),
                Some(open),
                "q2",
                None,
                None,
            ));
            ts.push(Transition::new(
                "q2",
                None,
                Some(open),
                "q1",
                Some(close),
                Some(open),
            ));
        }
        ts.push(Transition::new(
            "q2",
            None,
            Some(BOTTOM),
            "q1",
            None,
            Some(BOTTOM),
        ));
        Pdt::new("q1", ts).expect("parenthesis machine is deterministic")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<String> {
        s.chars().map(String::from).collect()
    }

    #[test]
    fn reversal_machine() {
        assert_eq!(
            Pdt::reversal().run(&chars("10##")).unwrap().concat(),
            "##01"
        );
        assert!(Pdt::reversal().run::<String>(&[]).unwrap().is_empty());
    }

    #[test]
    fn xor_machine() {
        assert_eq!(
            Pdt::cumulative_xor().run(&chars("1011")).unwrap().concat(),
            "1101"
        );
    }

    #[test]
    fn parenthesis_machine_groups_predictions() {
        let run = Pdt::parenthesis().run_grouped(&chars("([])")).unwrap();
        assert_eq!(
            run.per_input,
            vec![chars(")"), chars("]"), chars(")"), vec![]]
        );
    }

    #[test]
    fn undefined_configuration_names_it() {
        let err = Pdt::reversal().run(&chars("#")).unwrap_err();
        assert!(err.to_string().contains("(q0, #, $)"), "{err}");
    }

    #[test]
    fn conflicting_transitions_rejected() {
        let ts = vec![
            Transition::new("q", Some("a"), None, "q", None, None),
            Transition::new("q", Some("a"), Some("x"), "q", None, None),
        ];
        assert!(Pdt::new("q", ts).is_err());
        let ts = vec![
            Transition::new("q", None, Some("x"), "q", None, None),
            Transition::new("q", Some("a"), Some("x"), "q", None, None),
        ];
        assert!(Pdt::new("q", ts).is_err());
    }

    #[test]
    fn epsilon_loops_are_caught() {
        let ts = vec![Transition::new("q", None, None, "q", None, None)];
        let pdt = Pdt::new("q", ts).unwrap();
        assert!(pdt.run::<String>(&[]).is_err());
    }
}
