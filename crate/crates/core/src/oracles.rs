//! Gold outputs and evaluation masks for each task.

use crate::data::Example;
use crate::error::{Error, Result};

/// Gold symbol placed at the last position of language-modelling examples,
/// where the successor is undefined. Never evaluated.
pub const END: &str = ".";
pub const BLANK: &str = "#";

fn owned<S: AsRef<str>>(xs: &[S]) -> Vec<String> {
    xs.iter().map(|s| s.as_ref().to_string()).collect()
}

/// `w` → input `w #^|w|`, gold `#^|w| reverse(w)`, evaluated on the second half.
pub fn reversal<S: AsRef<str>>(w: &[S]) -> Example {
    reversal_keeping(w, |_| true)
}

/// Reversal where only symbols accepted by `keep` are copied to the output.
/// The gold is `#^|w|`, the reversed kept subsequence, then `#` padding to
/// full length; only the reversed part is evaluated.
pub fn reversal_keeping<S: AsRef<str>>(w: &[S], keep: impl Fn(&str) -> bool) -> Example {
    let n = w.len();
    let mut input = owned(w);
    input.extend(std::iter::repeat_n(BLANK.to_string(), n));
    let kept: Vec<String> = w
        .iter()
        .rev()
        .map(AsRef::as_ref)
        .filter(|s| keep(s))
        .map(String::from)
        .collect();
    let k = kept.len();
    let mut gold = vec![BLANK.to_string(); n];
    gold.extend(kept);
    gold.extend(std::iter::repeat_n(BLANK.to_string(), n - k));
    let mask = (0..2 * n).map(|t| t >= n && t < n + k).collect();
    Example { input, gold, mask }
}

/// Running XOR of the bits seen so far; the delayed variant excludes the
/// current bit, so its first output is 0.
pub fn xor<S: AsRef<str>>(bits: &[S], delayed: bool) -> Result<Example> {
    let mut acc = false;
    let mut gold = Vec::with_capacity(bits.len());
    for b in bits {
        let bit = match b.as_ref() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::UnknownSymbol {
                    symbol: other.into(),
                    alphabet: vec!["0".into(), "1".into()],
                })
            }
        };
        let before = acc;
        acc ^= bit;
        let out = if delayed { before } else { acc };
        gold.push(if out { "1" } else { "0" }.to_string());
    }
    Ok(Example {
        input: owned(bits),
        mask: vec![true; bits.len()],
        gold,
    })
}

/// Next-symbol language modelling: gold at `t` is the symbol at `t + 1`;
/// positions whose gold satisfies `evaluate` are masked in.
pub fn language_model<S: AsRef<str>>(tokens: &[S], evaluate: impl Fn(&str) -> bool) -> Example {
    let input = owned(tokens);
    let mut gold: Vec<String> = input.iter().skip(1).cloned().collect();
    if !input.is_empty() {
        gold.push(END.to_string());
    }
    let n = gold.len();
    let mask = gold
        .iter()
        .enumerate()
        .map(|(t, g)| t + 1 < n && evaluate(g))
        .collect();
    Example { input, gold, mask }
}

pub fn parenthesis<S: AsRef<str>>(s: &[S]) -> Example {
    language_model(s, |g| g == ")" || g == "]")
}

pub fn agreement<S: AsRef<str>>(tokens: &[S]) -> Example {
    language_model(tokens, |g| g == "has" || g == "have")
}

/// Each token's gold is the value of the longest subformula ending there:
/// the top of the evaluation stack after processing it.
pub fn formula<S: AsRef<str>>(rpn: &[S]) -> Result<Example> {
    let mut stack: Vec<bool> = Vec::new();
    let mut gold = Vec::with_capacity(rpn.len());
    for tok in rpn {
        let v = match tok.as_ref() {
            "T" => true,
            "F" => false,
            op @ ("∨" | "∧") => {
                let (b, a) = match (stack.pop(), stack.pop()) {
                    (Some(b), Some(a)) => (b, a),
                    _ => return Err(Error::Grammar(format!("operator {op} lacks operands"))),
                };
                if op == "∨" {
                    a || b
                } else {
                    a && b
                }
            }
            other => {
                return Err(Error::UnknownSymbol {
                    symbol: other.into(),
                    alphabet: ["T", "F", "∨", "∧"].map(String::from).to_vec(),
                })
            }
        };
        stack.push(v);
        gold.push(if v { "1" } else { "0" }.to_string());
    }
    Ok(Example {
        input: owned(rpn),
        mask: vec![true; rpn.len()],
        gold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<String> {
        s.chars().map(String::from).collect()
    }

    fn masked(e: &Example) -> Vec<(usize, &str)> {
        e.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(t, _)| (t, e.gold[t].as_str()))
            .collect()
    }

    #[test]
    fn reversal_examples() {
        let e = reversal(&chars("100111"));
        assert_eq!(e.input.concat(), "100111######");
        assert_eq!(e.gold.concat(), "######111001");
        assert_eq!(e.mask, [vec![false; 6], vec![true; 6]].concat());
        let e = reversal::<String>(&[]);
        assert!(e.input.is_empty() && e.gold.is_empty() && e.mask.is_empty());
    }

    #[test]
    fn four_symbol_reversal_drops_excluded_symbols() {
        let e = reversal_keeping(&chars("22303012311"), |s| s == "0" || s == "1");
        assert_eq!(e.gold.concat(), "###########11100######");
        let evaluated: String = masked(&e).iter().map(|(_, g)| *g).collect();
        assert_eq!(evaluated, "11100");
    }

    #[test]
    fn xor_examples() {
        assert_eq!(xor(&chars("1011"), false).unwrap().gold.concat(), "1101");
        assert_eq!(xor(&chars("1011"), true).unwrap().gold.concat(), "0110");
        assert_eq!(xor(&chars("0000"), true).unwrap().gold.concat(), "0000");
        assert!(xor(&chars("12"), false).is_err());
    }

    #[test]
    fn parenthesis_examples() {
        assert_eq!(
            masked(&parenthesis(&chars("([])"))),
            vec![(1, "]"), (2, ")")]
        );
        assert_eq!(masked(&parenthesis(&chars("()"))), vec![(0, ")")]);
        assert_eq!(parenthesis(&chars("()")).gold, vec![")", END]);
    }

    #[test]
    fn formula_examples() {
        let e = formula(&["T", "F", "∨"]).unwrap();
        assert_eq!(e.gold.concat(), "101");
        assert_eq!(formula(&["F"]).unwrap().gold.concat(), "0");
        assert!(formula(&["T", "∧"]).is_err());
    }

    #[test]
    fn agreement_examples() {
        let e = agreement(&["the", "lobster", "has"]);
        assert_eq!(masked(&e), vec![(1, "has")]);
        let e = agreement(&["the", "lobsters", "have"]);
        assert_eq!(masked(&e), vec![(1, "have")]);
    }
}
