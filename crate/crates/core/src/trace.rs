//! Per-iteration optimizer log and its CSV form.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Sum of the penalty over all relaxed matrices.
    pub penalty: f64,
    /// Max |row/column sum − 1| over all relaxed matrices.
    pub constraint_violation: f64,
    /// Loss at the LAP-rounded permutations minus loss at the relaxed matrices.
    pub rounding_gap: f64,
    /// Same gap for row-wise argmax rounding, `None` when argmax collides.
    pub argmax_rounding_gap: Option<f64>,
}

pub const TRACE_CSV_HEADER: &str = "iteration,loss,penalty,constraint_violation,rounding_gap";

pub fn write_trace_csv<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.loss, r.penalty, r.constraint_violation, r.rounding_gap
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let rec = TraceRecord {
            iteration: 3,
            loss: 0.5,
            penalty: 0.25,
            constraint_violation: 1e-3,
            rounding_gap: -0.125,
            argmax_rounding_gap: None,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iteration,loss,penalty,constraint_violation,rounding_gap\n3,0.5,0.25,0.001,-0.125\n"
        );
    }
}
