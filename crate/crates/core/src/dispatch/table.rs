//! Plain-text dispatch snapshots.
//!
//! ```text
//! load_factor 1.19
//! objective -1234.5
//! shed_total 0
//! cycles 3
//! [generators]        index bus mw
//! [loads]             index bus mw
//! [buses]             index id angle_rad
//! [branches]          index from to mw
//! [security]          monitored outaged
//! [cycle_objectives]  value
//! ```
//!
//! Numbers use the shortest representation that reads back to the same
//! `f64`, so a write/read round trip is exact. Bus ids and branch ends are
//! written for readers and ignored when parsing.

use std::fmt::Write;

use thiserror::Error;

use super::DispatchSolution;
use crate::grid_model::GridCase;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("dispatch table line {line}: {message}")]
pub struct TableError {
    pub line: usize,
    pub message: String,
}

const SECTIONS: [&str; 6] = ["generators", "loads", "buses", "branches", "security", "cycle_objectives"];

impl DispatchSolution {
    pub fn to_table(&self, case: &GridCase) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "load_factor {}", self.load_factor);
        let _ = writeln!(out, "objective {}", self.objective);
        let _ = writeln!(out, "shed_total {}", self.shed_total);
        let _ = writeln!(out, "cycles {}", self.cycles);
        out.push_str("[generators]\n");
        for (k, (g, p)) in case.generators.iter().zip(&self.p_gen).enumerate() {
            let _ = writeln!(out, "{k} {} {p}", g.bus);
        }
        out.push_str("[loads]\n");
        for (k, (l, p)) in case.loads.iter().zip(&self.p_served).enumerate() {
            let _ = writeln!(out, "{k} {} {p}", l.bus);
        }
        out.push_str("[buses]\n");
        for (k, (b, a)) in case.buses.iter().zip(&self.angles).enumerate() {
            let _ = writeln!(out, "{k} {} {a}", b.id);
        }
        out.push_str("[branches]\n");
        for (k, (br, f)) in case.branches.iter().zip(&self.flows).enumerate() {
            let _ = writeln!(out, "{k} {} {} {f}", br.from_bus, br.to_bus);
        }
        out.push_str("[security]\n");
        for (i, j) in &self.security_constraints_active {
            let _ = writeln!(out, "{i} {j}");
        }
        out.push_str("[cycle_objectives]\n");
        for v in &self.cycle_objectives {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_table(text: &str) -> Result<DispatchSolution, TableError> {
        let err = |line: usize, message: String| TableError { line, message };
        let mut sol = DispatchSolution {
            load_factor: f64::NAN,
            p_gen: Vec::new(),
            p_served: Vec::new(),
            angles: Vec::new(),
            flows: Vec::new(),
            objective: f64::NAN,
            shed_total: f64::NAN,
            security_constraints_active: Vec::new(),
            cycles: 0,
            cycle_objectives: Vec::new(),
        };
        let mut section: Option<&str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            if let Some(name) = raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = Some(
                    SECTIONS.iter().copied().find(|s| *s == name).ok_or_else(|| err(line, format!("unknown section '{name}'")))?,
                );
                continue;
            }
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let num = |k: usize| -> Result<f64, TableError> {
                let s = fields.get(k).ok_or_else(|| err(line, format!("expected at least {} fields", k + 1)))?;
                s.parse().map_err(|_| err(line, format!("'{s}' is not a number")))
            };
            let index = |k: usize| -> Result<usize, TableError> {
                let s = fields.get(k).ok_or_else(|| err(line, format!("expected at least {} fields", k + 1)))?;
                s.parse().map_err(|_| err(line, format!("'{s}' is not an index")))
            };
            let push = |v: &mut Vec<f64>, value: f64| -> Result<(), TableError> {
                if index(0)? != v.len() {
                    return Err(err(line, format!("expected index {}", v.len())));
                }
                v.push(value);
                Ok(())
            };
            match section {
                None => match fields[0] {
                    "load_factor" => sol.load_factor = num(1)?,
                    "objective" => sol.objective = num(1)?,
                    "shed_total" => sol.shed_total = num(1)?,
                    "cycles" => sol.cycles = index(1)?,
                    other => return Err(err(line, format!("unknown header '{other}'"))),
                },
                Some("generators") => push(&mut sol.p_gen, num(2)?)?,
                Some("loads") => push(&mut sol.p_served, num(2)?)?,
                Some("buses") => push(&mut sol.angles, num(2)?)?,
                Some("branches") => push(&mut sol.flows, num(3)?)?,
                Some("security") => sol.security_constraints_active.push((index(0)?, index(1)?)),
                Some(_) => sol.cycle_objectives.push(num(0)?),
            }
        }
        for (name, v) in [("load_factor", sol.load_factor), ("objective", sol.objective), ("shed_total", sol.shed_total)] {
            if v.is_nan() {
                return Err(err(text.lines().count(), format!("missing header '{name}'")));
            }
        }
        Ok(sol)
    }
}
