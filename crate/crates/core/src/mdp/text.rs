//! Human-readable text serialization for MDPs, abstractions, and policies.
//!
//! One document per object: a type line, named dimensions, then dense tables
//! as whitespace-separated decimal text, terminated by `end`. Floats are
//! written with Rust's shortest round-trip formatting, so parsing a written
//! document reproduces the original values exactly. Lines starting with `#`
//! are comments. Multiple documents may be concatenated in one file.

use super::{Abstraction, MdpError, PolicyTable, TabularMdp};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("line {line}: expected {expected}, found {found:?}")]
    Unexpected {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}: could not parse {what}: {source}")]
    BadNumber {
        line: usize,
        what: &'static str,
        #[source]
        source: std::num::ParseFloatError,
    },
    #[error("line {line}: could not parse {what}")]
    BadInt { line: usize, what: &'static str },
    #[error("document ended before `end`")]
    Truncated,
    #[error("invalid object: {0}")]
    Invalid(#[from] MdpError),
}

pub fn write_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let n = mdp.n_states();
    let m = mdp.n_actions();
    writeln!(out, "tabular_mdp v1").unwrap();
    writeln!(out, "n_states {}", n).unwrap();
    writeln!(out, "n_actions {}", m).unwrap();
    writeln!(out, "discount {}", mdp.discount()).unwrap();
    writeln!(out, "initial_dist").unwrap();
    writeln!(out, "{}", join_floats(mdp.initial_dist())).unwrap();
    writeln!(out, "transition").unwrap();
    for x in 0..n {
        for a in 0..m {
            writeln!(out, "{}", join_floats(mdp.transition_row(x, a))).unwrap();
        }
    }
    writeln!(out, "reward").unwrap();
    for x in 0..n {
        for a in 0..m {
            writeln!(out, "{}", join_floats(mdp.reward_row(x, a))).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    out
}

pub fn write_abstraction(abstraction: &Abstraction) -> String {
    let mut out = String::new();
    writeln!(out, "abstraction v1").unwrap();
    writeln!(out, "n_states {}", abstraction.n_ground()).unwrap();
    writeln!(out, "n_abstract {}", abstraction.n_abstract()).unwrap();
    writeln!(out, "mapping").unwrap();
    let mapped: Vec<String> = abstraction.mapping().iter().map(|z| z.to_string()).collect();
    writeln!(out, "{}", mapped.join(" ")).unwrap();
    writeln!(out, "end").unwrap();
    out
}

pub fn write_policy(policy: &PolicyTable) -> String {
    let mut out = String::new();
    writeln!(out, "policy v1").unwrap();
    writeln!(out, "n_states {}", policy.n_states()).unwrap();
    writeln!(out, "n_actions {}", policy.n_actions()).unwrap();
    writeln!(out, "horizon {}", policy.horizon()).unwrap();
    writeln!(out, "slices {}", policy.n_slices()).unwrap();
    for s in 0..policy.n_slices() {
        let t = if policy.is_stationary() { 0 } else { s };
        for x in 0..policy.n_states() {
            let row: Vec<String> = (0..policy.n_actions())
                .map(|a| policy.prob(t, x, a).to_string())
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    writeln!(out, "end").unwrap();
    out
}

fn join_floats(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    parts.join(" ")
}

/// Line-oriented cursor over a document, skipping blanks and `#` comments.
struct Cursor<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    consumed: usize,
}

impl<'a> Cursor<'a> {
    fn new(input: &'a str) -> Self {
        Self {
            lines: input.lines().enumerate().peekable(),
            consumed: 0,
        }
    }

    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (idx, raw) in self.lines.by_ref() {
            self.consumed = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some((idx + 1, line));
        }
        None
    }

    fn expect(&mut self, expected: &'static str) -> Result<(usize, &'a str), TextError> {
        match self.next_content() {
            Some((line, text)) => Ok((line, text)),
            None => Err(TextError::Truncated),
        }
        .and_then(|(line, text)| {
            if text == expected || text.starts_with(expected) {
                Ok((line, text))
            } else {
                Err(TextError::Unexpected {
                    line,
                    expected,
                    found: text.to_string(),
                })
            }
        })
    }

    fn expect_keyword_usize(&mut self, keyword: &'static str) -> Result<usize, TextError> {
        let (line, text) = self.expect(keyword)?;
        let rest = text[keyword.len()..].trim();
        rest.parse()
            .map_err(|_| TextError::BadInt { line, what: keyword })
    }

    fn expect_keyword_f64(&mut self, keyword: &'static str) -> Result<f64, TextError> {
        let (line, text) = self.expect(keyword)?;
        let rest = text[keyword.len()..].trim();
        rest.parse().map_err(|source| TextError::BadNumber {
            line,
            what: keyword,
            source,
        })
    }

    fn read_floats(&mut self, count: usize, what: &'static str) -> Result<Vec<f64>, TextError> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (line, text) = self.next_content().ok_or(TextError::Truncated)?;
            for token in text.split_whitespace() {
                let v: f64 = token.parse().map_err(|source| TextError::BadNumber {
                    line,
                    what,
                    source,
                })?;
                out.push(v);
            }
        }
        if out.len() != count {
            return Err(TextError::Unexpected {
                line: self.consumed,
                expected: what,
                found: format!("{} values where {} were expected", out.len(), count),
            });
        }
        Ok(out)
    }

    fn read_usizes(&mut self, count: usize, what: &'static str) -> Result<Vec<usize>, TextError> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (line, text) = self.next_content().ok_or(TextError::Truncated)?;
            for token in text.split_whitespace() {
                let v: usize = token
                    .parse()
                    .map_err(|_| TextError::BadInt { line, what })?;
                out.push(v);
            }
        }
        Ok(out)
    }
}

pub fn parse_mdp(input: &str) -> Result<TabularMdp, TextError> {
    let mut cur = Cursor::new(input);
    parse_mdp_at(&mut cur)
}

fn parse_mdp_at(cur: &mut Cursor) -> Result<TabularMdp, TextError> {
    cur.expect("tabular_mdp")?;
    let n = cur.expect_keyword_usize("n_states")?;
    let m = cur.expect_keyword_usize("n_actions")?;
    let discount = cur.expect_keyword_f64("discount")?;
    cur.expect("initial_dist")?;
    let initial = cur.read_floats(n, "initial_dist")?;
    cur.expect("transition")?;
    let transition = cur.read_floats(n * m * n, "transition")?;
    cur.expect("reward")?;
    let reward = cur.read_floats(n * m * n, "reward")?;
    cur.expect("end")?;
    Ok(TabularMdp::new(n, m, transition, reward, discount, initial)?)
}

pub fn parse_abstraction(input: &str) -> Result<Abstraction, TextError> {
    let mut cur = Cursor::new(input);
    parse_abstraction_at(&mut cur)
}

fn parse_abstraction_at(cur: &mut Cursor) -> Result<Abstraction, TextError> {
    cur.expect("abstraction")?;
    let n = cur.expect_keyword_usize("n_states")?;
    let n_abstract = cur.expect_keyword_usize("n_abstract")?;
    cur.expect("mapping")?;
    let mapping = cur.read_usizes(n, "mapping")?;
    cur.expect("end")?;
    Ok(Abstraction::new(mapping, n_abstract)?)
}

pub fn parse_policy(input: &str) -> Result<PolicyTable, TextError> {
    let mut cur = Cursor::new(input);
    parse_policy_at(&mut cur)
}

fn parse_policy_at(cur: &mut Cursor) -> Result<PolicyTable, TextError> {
    cur.expect("policy")?;
    let n = cur.expect_keyword_usize("n_states")?;
    let m = cur.expect_keyword_usize("n_actions")?;
    let horizon = cur.expect_keyword_usize("horizon")?;
    let n_slices = cur.expect_keyword_usize("slices")?;
    let data = cur.read_floats(n_slices * n * m, "policy")?;
    cur.expect("end")?;
    if n_slices == 1 {
        Ok(PolicyTable::stationary(n, m, horizon, data)?)
    } else if n_slices == horizon {
        Ok(PolicyTable::time_varying(n, m, data)?)
    } else {
        Err(TextError::Unexpected {
            line: 0,
            expected: "slices equal to 1 or to horizon",
            found: format!("slices {}", n_slices),
        })
    }
}

/// Parse an (mdp, abstraction) pair from a single document stream, in either
/// order. This is the on-disk input format of the `verify` subcommand.
pub fn parse_pair(input: &str) -> Result<(TabularMdp, Abstraction), TextError> {
    let mut cur = Cursor::new(input);
    let mut mdp = None;
    let mut abstraction = None;
    while mdp.is_none() || abstraction.is_none() {
        // Peek at the next content line to dispatch on document type.
        let mut probe = Cursor {
            lines: cur.lines.clone(),
            consumed: cur.consumed,
        };
        let (line, text) = probe.next_content().ok_or(TextError::Truncated)?;
        if text.starts_with("tabular_mdp") {
            mdp = Some(parse_mdp_at(&mut cur)?);
        } else if text.starts_with("abstraction") {
            abstraction = Some(parse_abstraction_at(&mut cur)?);
        } else {
            return Err(TextError::Unexpected {
                line,
                expected: "tabular_mdp or abstraction document",
                found: text.to_string(),
            });
        }
    }
    Ok((mdp.unwrap(), abstraction.unwrap()))
}
