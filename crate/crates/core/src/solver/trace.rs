use std::io::{self, Write};

use super::DualState;
use crate::functions::ExtendedReal;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// `Φ(λ^t)`; infinite when some `μ_i` leaves the domain of its support function.
    pub phi: ExtendedReal,
    /// `P(λ^t)`, the smooth part of `Φ`.
    pub smooth_dual: f64,
    pub consensus: f64,
    pub primal: f64,
    /// `‖λ^t − λ^{t−1}‖`; zero on the initial row.
    pub step_norm: f64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
    pub state: Option<DualState>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// CSV writer. Rows carry no timing unless `include_timing` is set, so two runs of the
/// same configuration produce identical bytes. Agent and edge labels are 1-based.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceWriter {
    pub include_timing: bool,
}

fn component_labels(prefix: &str, base: &str, len: usize, out: &mut Vec<String>) {
    if len == 1 {
        out.push(format!("{prefix}_{base}"));
    } else {
        for k in 1..=len {
            out.push(format!("{prefix}_{base}_{k}"));
        }
    }
}

impl TraceWriter {
    pub fn new(include_timing: bool) -> Self {
        TraceWriter { include_timing }
    }

    pub fn header(&self, trace: &Trace) -> Vec<String> {
        let mut cols: Vec<String> = [
            "iter",
            "Phi",
            "smooth_dual",
            "consensus_residual",
            "primal_residual",
            "step_norm",
        ]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if self.include_timing {
            cols.push("wall_time".into());
        }
        if let Some(state) = trace.rows.iter().find_map(|r| r.state.as_ref()) {
            for (i, l) in state.lambda.iter().enumerate() {
                component_labels("theta", &(i + 1).to_string(), l.theta.len(), &mut cols);
            }
            for (i, l) in state.lambda.iter().enumerate() {
                component_labels("mu", &(i + 1).to_string(), l.mu.len(), &mut cols);
            }
            for e in &state.xi {
                let base = format!("{}_{}", e.owner + 1, e.peer + 1);
                component_labels("xi", &base, e.xi.len(), &mut cols);
            }
        }
        cols
    }

    pub fn write<W: Write>(&self, trace: &Trace, mut out: W) -> io::Result<()> {
        let header = self.header(trace);
        writeln!(out, "{}", header.join(","))?;
        let with_state = header.len() > 6 + usize::from(self.include_timing);
        for row in &trace.rows {
            let mut fields = vec![
                row.iter.to_string(),
                row.phi.to_string(),
                row.smooth_dual.to_string(),
                row.consensus.to_string(),
                row.primal.to_string(),
                row.step_norm.to_string(),
            ];
            if self.include_timing {
                fields.push(row.wall_time.to_string());
            }
            if with_state {
                let state = row.state.as_ref().ok_or_else(|| {
                    io::Error::new(
                        io::ErrorKind::InvalidInput,
                        format!("trace row {} has no recorded state", row.iter),
                    )
                })?;
                for l in &state.lambda {
                    fields.extend(l.theta.iter().map(f64::to_string));
                }
                for l in &state.lambda {
                    fields.extend(l.mu.iter().map(f64::to_string));
                }
                for e in &state.xi {
                    fields.extend(e.xi.iter().map(f64::to_string));
                }
            }
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn to_string(&self, trace: &Trace) -> String {
        let mut buf = Vec::new();
        self.write(trace, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("trace is ASCII")
    }
}
