//! Reader for the CPLEX-style LP text this crate emits.
//!
//! Covers the slice of the dialect the exporter uses — one named objective,
//! `Subject To` rows over `<= >= =`, a `Bounds` section with ranged, fixed,
//! or `free` lines, `Binaries`, and `End` — enough for round-trip
//! self-checks and for tests to audit emitted files structurally. Rows may
//! continue across lines; a new row starts at a `name:` label.

use crate::automaton::Relation;
use thiserror::Error;

/// Optimisation direction of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpSense {
    /// `Maximize` header.
    Maximize,
    /// `Minimize` header.
    Minimize,
}

/// One linear row `Σ coef·var  relation  rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    /// Row label.
    pub name: String,
    /// Left-hand side terms in file order.
    pub terms: Vec<(f64, String)>,
    /// Comparison direction.
    pub relation: Relation,
    /// Right-hand constant.
    pub rhs: f64,
}

/// One `Bounds` line.
#[derive(Clone, Debug, PartialEq)]
pub enum LpBound {
    /// `lo <= var <= hi`, also produced by a fixed `var = v` line.
    Range {
        /// Variable name.
        var: String,
        /// Lower bound.
        lo: f64,
        /// Upper bound.
        hi: f64,
    },
    /// `var free`.
    Free {
        /// Variable name.
        var: String,
    },
}

/// A parsed LP file.
#[derive(Clone, Debug, PartialEq)]
pub struct LpFile {
    /// Objective direction.
    pub sense: LpSense,
    /// Objective label (`obj` in emitted files).
    pub objective_name: String,
    /// Objective terms.
    pub objective: Vec<(f64, String)>,
    /// Constraint rows in file order.
    pub rows: Vec<LpRow>,
    /// Bounds lines in file order.
    pub bounds: Vec<LpBound>,
    /// Binary variable names.
    pub binaries: Vec<String>,
}

/// Syntax failure while reading LP text.
#[derive(Debug, Error)]
#[error("LP line {line}: {reason}")]
pub struct LpParseError {
    /// 1-based line number.
    pub line: usize,
    /// What went wrong.
    pub reason: String,
}

fn err(line: usize, reason: impl Into<String>) -> LpParseError {
    LpParseError { line, reason: reason.into() }
}

fn is_name(tok: &str) -> bool {
    let mut chars = tok.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn number(tok: &str, line: usize) -> Result<f64, LpParseError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(err(line, format!("expected a number, found `{tok}`"))),
    }
}

/// Parses `± coef·name ± coef·name …`; bare names carry coefficient 1.
fn parse_sum(tokens: &[&str], line: usize) -> Result<Vec<(f64, String)>, LpParseError> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in tokens {
        match *tok {
            "+" if coef.is_none() => {}
            "-" if coef.is_none() => sign = -sign,
            _ if is_name(tok) => {
                terms.push((sign * coef.take().unwrap_or(1.0), (*tok).to_string()));
                sign = 1.0;
            }
            _ => {
                let v = number(tok, line)?;
                if coef.replace(v).is_some() {
                    return Err(err(line, format!("two coefficients before a variable near `{tok}`")));
                }
            }
        }
    }
    if coef.is_some() {
        return Err(err(line, "dangling coefficient at end of expression"));
    }
    if terms.is_empty() {
        return Err(err(line, "empty linear expression"));
    }
    Ok(terms)
}

fn relation(tok: &str) -> Option<Relation> {
    match tok {
        "<=" | "<" | "=<" => Some(Relation::Le),
        ">=" | ">" | "=>" => Some(Relation::Ge),
        "=" => Some(Relation::Eq),
        _ => None,
    }
}

/// Parses a complete row body `terms relation rhs` (the part after `name:`).
fn parse_row_body(body: &str, line: usize) -> Result<(Vec<(f64, String)>, Relation, f64), LpParseError> {
    let tokens: Vec<&str> = body.split_whitespace().collect();
    let rel_at = tokens
        .iter()
        .position(|t| relation(t).is_some())
        .ok_or_else(|| err(line, "row has no comparison operator"))?;
    let rel = relation(tokens[rel_at]).expect("position found above");
    let terms = parse_sum(&tokens[..rel_at], line)?;
    let rhs_tokens = &tokens[rel_at + 1..];
    let rhs = match rhs_tokens {
        [v] => number(v, line)?,
        ["-", v] => -number(v, line)?,
        ["+", v] => number(v, line)?,
        _ => return Err(err(line, "right-hand side must be a single constant")),
    };
    Ok((terms, rel, rhs))
}

fn parse_bound_line(tokens: &[&str], line: usize) -> Result<LpBound, LpParseError> {
    match tokens {
        [v, f] if is_name(v) && f.eq_ignore_ascii_case("free") => {
            Ok(LpBound::Free { var: (*v).to_string() })
        }
        [v, "=", x] if is_name(v) => {
            let x = number(x, line)?;
            Ok(LpBound::Range { var: (*v).to_string(), lo: x, hi: x })
        }
        [lo, "<=", v, "<=", hi] if is_name(v) => Ok(LpBound::Range {
            var: (*v).to_string(),
            lo: number(lo, line)?,
            hi: number(hi, line)?,
        }),
        _ => Err(err(line, format!("unrecognised bounds line `{}`", tokens.join(" ")))),
    }
}

#[derive(PartialEq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Binaries,
    Done,
}

/// Reads LP text back into structured form.
pub fn parse_lp(text: &str) -> Result<LpFile, LpParseError> {
    let mut section = Section::Preamble;
    let mut sense = None;
    // Labelled bodies accumulate here so rows and the objective may span
    // physical lines; everything is parsed once its section closes.
    let mut objective_parts: Vec<(usize, String)> = Vec::new();
    let mut row_parts: Vec<(usize, String)> = Vec::new();
    let mut bounds = Vec::new();
    let mut binaries: Vec<String> = Vec::new();

    for (ix, raw) in text.lines().enumerate() {
        let line_no = ix + 1;
        let stripped = raw.split('\\').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let lowered = stripped.to_ascii_lowercase();
        let header = match lowered.as_str() {
            "maximize" | "maximise" | "max" => Some((Section::Objective, Some(LpSense::Maximize))),
            "minimize" | "minimise" | "min" => Some((Section::Objective, Some(LpSense::Minimize))),
            "subject to" | "st" | "s.t." => Some((Section::Rows, None)),
            "bounds" => Some((Section::Bounds, None)),
            "binaries" | "binary" | "bin" => Some((Section::Binaries, None)),
            "end" => Some((Section::Done, None)),
            "general" | "generals" | "semi-continuous" | "sos" => {
                return Err(err(line_no, format!("unsupported section `{stripped}`")))
            }
            _ => None,
        };
        if let Some((next, new_sense)) = header {
            if let Some(s) = new_sense {
                if sense.replace(s).is_some() {
                    return Err(err(line_no, "second objective section"));
                }
            }
            section = next;
            continue;
        }
        match section {
            Section::Preamble => return Err(err(line_no, "content before the objective section")),
            Section::Done => return Err(err(line_no, "content after End")),
            Section::Objective => objective_parts.push((line_no, stripped.to_string())),
            Section::Rows => {
                if stripped.contains(':') {
                    row_parts.push((line_no, stripped.to_string()));
                } else if let Some(last) = row_parts.last_mut() {
                    last.1.push(' ');
                    last.1.push_str(stripped);
                } else {
                    return Err(err(line_no, "row continuation before any labelled row"));
                }
            }
            Section::Bounds => {
                let tokens: Vec<&str> = stripped.split_whitespace().collect();
                bounds.push(parse_bound_line(&tokens, line_no)?);
            }
            Section::Binaries => {
                for tok in stripped.split_whitespace() {
                    if !is_name(tok) {
                        return Err(err(line_no, format!("bad binary name `{tok}`")));
                    }
                    binaries.push(tok.to_string());
                }
            }
        }
    }

    let sense = sense.ok_or_else(|| err(1, "missing objective section"))?;

    let (objective_name, objective) = {
        let joined: Vec<(usize, String)> = objective_parts;
        if joined.is_empty() {
            return Err(err(1, "empty objective"));
        }
        let first_line = joined[0].0;
        let body = joined.iter().map(|(_, s)| s.as_str()).collect::<Vec<_>>().join(" ");
        let (name, expr) = body
            .split_once(':')
            .ok_or_else(|| err(first_line, "objective must be labelled `name: expr`"))?;
        let name = name.trim();
        if !is_name(name) {
            return Err(err(first_line, format!("bad objective label `{name}`")));
        }
        let tokens: Vec<&str> = expr.split_whitespace().collect();
        (name.to_string(), parse_sum(&tokens, first_line)?)
    };

    let mut rows = Vec::new();
    for (line_no, body) in row_parts {
        let (name, rest) = body.split_once(':').expect("labelled rows only");
        let name = name.trim();
        if !is_name(name) {
            return Err(err(line_no, format!("bad row label `{name}`")));
        }
        let (terms, rel, rhs) = parse_row_body(rest, line_no)?;
        rows.push(LpRow { name: name.to_string(), terms, relation: rel, rhs });
    }

    Ok(LpFile { sense, objective_name, objective, rows, bounds, binaries })
}
