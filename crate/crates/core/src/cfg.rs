//! Context-free grammars: parsing, depth-bounded sampling and membership.
//!
//! Depth counts nonterminal levels: a production whose right side holds only
//! terminals has depth 1, and a node's depth is one more than the deepest
//! nonterminal child.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub const PARENTHESIS: &str = include_str!("../grammars/parenthesis.cfg");
pub const FORMULA: &str = include_str!("../grammars/formula.cfg");
pub const AGREEMENT: &str = include_str!("../grammars/agreement.cfg");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    start: String,
    productions: Vec<Production>,
    by_lhs: HashMap<String, Vec<usize>>,
    terminals: BTreeSet<String>,
    min_depth: HashMap<String, usize>,
}

/// A derivation tree; terminal leaves have no children.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub symbol: String,
    pub children: Vec<Derivation>,
}

impl Derivation {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn terminals(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<String>) {
        if self.is_leaf() {
            out.push(self.symbol.clone());
        }
        for c in &self.children {
            c.collect(out);
        }
    }

    pub fn depth(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self
                .children
                .iter()
                .map(Derivation::depth)
                .max()
                .unwrap_or(0)
        }
    }
}

impl Cfg {
    /// Parses one `LHS -> RHS...` production per line. Blank lines and lines
    /// starting with `#` are skipped. The first left-hand side is the start
    /// symbol; every symbol that never appears on a left side is a terminal.
    pub fn parse(text: &str) -> Result<Cfg> {
        let mut productions = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = line
                .split_once("->")
                .ok_or_else(|| Error::Grammar(format!("line {}: missing '->'", n + 1)))?;
            let lhs = lhs.trim();
            if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                return Err(Error::Grammar(format!(
                    "line {}: bad left side {lhs:?}",
                    n + 1
                )));
            }
            let rhs: Vec<String> = rhs.split_whitespace().map(String::from).collect();
            if rhs.is_empty() {
                return Err(Error::Grammar(format!("line {}: empty right side", n + 1)));
            }
            productions.push(Production {
                lhs: lhs.to_string(),
                rhs,
            });
        }
        Cfg::new(productions)
    }

    pub fn new(productions: Vec<Production>) -> Result<Cfg> {
        let start = productions
            .first()
            .ok_or_else(|| Error::Grammar("no productions".into()))?
            .lhs
            .clone();
        let mut by_lhs: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in productions.iter().enumerate() {
            by_lhs.entry(p.lhs.clone()).or_default().push(i);
        }
        let terminals = productions
            .iter()
            .flat_map(|p| p.rhs.iter())
            .filter(|s| !by_lhs.contains_key(*s))
            .cloned()
            .collect();
        let mut cfg = Cfg {
            start,
            productions,
            by_lhs,
            terminals,
            min_depth: HashMap::new(),
        };
        cfg.min_depth = cfg.compute_min_depth();
        if let Some(nt) = cfg
            .by_lhs
            .keys()
            .find(|nt| !cfg.min_depth.contains_key(*nt))
        {
            return Err(Error::Grammar(format!(
                "nonterminal {nt} derives no terminal string"
            )));
        }
        Ok(cfg)
    }

    pub fn parenthesis() -> Cfg {
        Cfg::parse(PARENTHESIS).expect("bundled grammar parses")
    }

    pub fn formula() -> Cfg {
        Cfg::parse(FORMULA).expect("bundled grammar parses")
    }

    pub fn agreement() -> Cfg {
        Cfg::parse(AGREEMENT).expect("bundled grammar parses")
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn productions_for(&self, nt: &str) -> impl Iterator<Item = &Production> {
        self.by_lhs
            .get(nt)
            .into_iter()
            .flatten()
            .map(|&i| &self.productions[i])
    }

    pub fn terminals(&self) -> &BTreeSet<String> {
        &self.terminals
    }

    pub fn is_nonterminal(&self, s: &str) -> bool {
        self.by_lhs.contains_key(s)
    }

    /// Smallest derivation depth of any terminal string from `nt`.
    pub fn min_depth(&self, nt: &str) -> Option<usize> {
        self.min_depth.get(nt).copied()
    }

    fn production_depth(&self, p: &Production, known: &HashMap<String, usize>) -> Option<usize> {
        let mut d = 0;
        for s in &p.rhs {
            if self.is_nonterminal(s) {
                d = d.max(*known.get(s)?);
            }
        }
        Some(d + 1)
    }

    fn compute_min_depth(&self) -> HashMap<String, usize> {
        let mut known: HashMap<String, usize> = HashMap::new();
        loop {
            let mut changed = false;
            for p in &self.productions {
                if let Some(d) = self.production_depth(p, &known) {
                    let e = known.entry(p.lhs.clone()).or_insert(usize::MAX);
                    if d < *e {
                        *e = d;
                        changed = true;
                    }
                }
            }
            if !changed {
                return known;
            }
        }
    }

    /// Samples a derivation of depth at most `max_depth`, expanding leftmost
    /// first and choosing uniformly among productions that can still finish
    /// within the remaining depth.
    pub fn sample<R: Rng + ?Sized>(&self, max_depth: usize, rng: &mut R) -> Result<Derivation> {
        let need = self.min_depth[&self.start];
        if max_depth < need {
            return Err(Error::Grammar(format!(
                "max depth {max_depth} below minimum derivation depth {need}"
            )));
        }
        Ok(self.expand(&self.start, max_depth, rng))
    }

    fn expand<R: Rng + ?Sized>(&self, nt: &str, budget: usize, rng: &mut R) -> Derivation {
        let options: Vec<&Production> = self
            .productions_for(nt)
            .filter(|p| {
                self.production_depth(p, &self.min_depth)
                    .is_some_and(|d| d <= budget)
            })
            .collect();
        let p = options
            .choose(rng)
            .expect("budget admits at least one production");
        let children = p
            .rhs
            .iter()
            .map(|s| {
                if self.is_nonterminal(s) {
                    self.expand(s, budget - 1, rng)
                } else {
                    Derivation {
                        symbol: s.clone(),
                        children: Vec::new(),
                    }
                }
            })
            .collect();
        Derivation {
            symbol: nt.to_string(),
            children,
        }
    }

    pub fn sample_string<R: Rng + ?Sized>(
        &self,
        max_depth: usize,
        rng: &mut R,
    ) -> Result<Vec<String>> {
        Ok(self.sample(max_depth, rng)?.terminals())
    }

    /// Membership test by memoised span recognition. Assumes no
    /// ε-productions and no unit cycles, which [`Cfg::parse`] guarantees for
    /// the first and the bundled grammars satisfy for the second.
    pub fn recognizes<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        let tokens: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let mut memo = HashMap::new();
        !tokens.is_empty() && self.derives(&self.start, &tokens, 0, tokens.len(), &mut memo)
    }

    fn derives<'a>(
        &'a self,
        sym: &'a str,
        toks: &[&str],
        i: usize,
        j: usize,
        memo: &mut HashMap<(&'a str, usize, usize), bool>,
    ) -> bool {
        if !self.is_nonterminal(sym) {
            return j == i + 1 && toks[i] == sym;
        }
        if let Some(&v) = memo.get(&(sym, i, j)) {
            return v;
        }
        memo.insert((sym, i, j), false);
        let found = self
            .productions_for(sym)
            .any(|p| self.matches(&p.rhs, toks, i, j, memo));
        memo.insert((sym, i, j), found);
        found
    }

    fn matches<'a>(
        &'a self,
        rhs: &'a [String],
        toks: &[&str],
        i: usize,
        j: usize,
        memo: &mut HashMap<(&'a str, usize, usize), bool>,
    ) -> bool {
        match rhs {
            [] => i == j,
            [only] => self.derives(only, toks, i, j, memo),
            [first, rest @ ..] => {
                // every symbol spans at least one token
                let last = j.saturating_sub(rest.len());
                (i + 1..=last).any(|k| {
                    self.derives(first, toks, i, k, memo) && self.matches(rest, toks, k, j, memo)
                })
            }
        }
    }
}
