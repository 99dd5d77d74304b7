//! Plain-text formats for matrices and QAP instances.
//!
//! A matrix is a line holding `n` followed by `n` rows of `n` whitespace
//! separated numbers. A QAP instance is the dimension line, the rows of `A`,
//! a blank line and the rows of `B`. Lines starting with `#` are comments.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::qap::{QapInstance, QapKind};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-blank, non-comment line with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        self.inner.by_ref().find_map(|(i, l)| {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then_some((i + 1, t))
        })
    }
}

fn parse_dimension(lines: &mut Lines<'_>) -> Result<usize> {
    let (line, text) = lines.next_content().ok_or(Error::Parse {
        line: 1,
        msg: "missing dimension line".into(),
    })?;
    let n: usize = text.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a positive integer dimension, found {text:?}"),
    })?;
    if n == 0 {
        return Err(Error::Parse {
            line,
            msg: "dimension must be positive".into(),
        });
    }
    Ok(n)
}

fn parse_rows(lines: &mut Lines<'_>, n: usize, what: &str) -> Result<SquareMatrix> {
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        let (line, text) = lines.next_content().ok_or(Error::Parse {
            line: 0,
            msg: format!("{what}: expected {n} rows, found {r}"),
        })?;
        let row: Vec<f64> = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or(Error::Parse {
                        line,
                        msg: format!("{what}: {tok:?} is not a finite number"),
                    })
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Parse {
                line,
                msg: format!("{what}: expected {n} entries, found {}", row.len()),
            });
        }
        data.extend(row);
    }
    SquareMatrix::from_vec(n, data)
}

fn ensure_consumed(lines: &mut Lines<'_>) -> Result<()> {
    match lines.next_content() {
        Some((line, _)) => Err(Error::Parse {
            line,
            msg: "unexpected trailing content".into(),
        }),
        None => Ok(()),
    }
}

pub fn parse_matrix(text: &str) -> Result<SquareMatrix> {
    let mut lines = Lines::new(text);
    let n = parse_dimension(&mut lines)?;
    let m = parse_rows(&mut lines, n, "matrix")?;
    ensure_consumed(&mut lines)?;
    Ok(m)
}

fn push_rows(out: &mut String, m: &SquareMatrix) {
    for i in 0..m.n() {
        let row: Vec<String> = m.row(i).iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Round-trips exactly through [`parse_matrix`] (shortest `f64` formatting).
pub fn format_matrix(m: &SquareMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", m.n());
    push_rows(&mut out, m);
    out
}

/// Reads a graph-matching instance.
pub fn parse_qap(text: &str) -> Result<QapInstance> {
    parse_qap_as(text, QapKind::GraphMatching)
}

pub fn parse_qap_as(text: &str, kind: QapKind) -> Result<QapInstance> {
    let mut lines = Lines::new(text);
    let n = parse_dimension(&mut lines)?;
    let a = parse_rows(&mut lines, n, "A")?;
    let b = parse_rows(&mut lines, n, "B")?;
    ensure_consumed(&mut lines)?;
    QapInstance::new(a, b, kind)
}

pub fn format_qap(inst: &QapInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", inst.n());
    push_rows(&mut out, &inst.a);
    out.push('\n');
    push_rows(&mut out, &inst.b);
    out
}
