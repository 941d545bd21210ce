//! Trace CSV: one row per closed-loop cycle, plus the running incumbent.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fffopt_core::format_float;
use fffopt_core::optimizer::Observation;

pub const TRACE_HEADER: &str =
    "iteration,vp,em,roughness_um,feasible,phase_pi,best_feasible_vp,modulus_gpa";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: u32,
    pub vp: f64,
    pub em: f64,
    pub roughness_um: f64,
    pub feasible: bool,
    pub phase_pi: f64,
    pub best_feasible_vp: Option<f64>,
    pub modulus_gpa: Option<f64>,
}

/// Build rows for the observations from `start` on. The incumbent column is
/// accumulated over the whole history, so initialization samples count even
/// though they get no row of their own.
pub fn rows_from_history(history: &[Observation], start: usize) -> Vec<TraceRow> {
    let mut rows = Vec::with_capacity(history.len().saturating_sub(start));
    let mut best: Option<(f64, f64)> = None;
    for (k, o) in history.iter().enumerate() {
        if o.feasible {
            let better = match best {
                None => true,
                Some((bs, br)) => {
                    o.params.speed > bs || (o.params.speed == bs && o.roughness < br)
                }
            };
            if better {
                best = Some((o.params.speed, o.roughness));
            }
        }
        if k >= start {
            rows.push(TraceRow {
                iteration: o.iteration,
                vp: o.params.speed,
                em: o.params.extrusion,
                roughness_um: o.roughness,
                feasible: o.feasible,
                phase_pi: o.phase_confidence,
                best_feasible_vp: best.map(|(s, _)| s),
                modulus_gpa: o.modulus,
            });
        }
    }
    rows
}

pub fn write_trace<W: Write>(rows: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            format_float(r.vp),
            format_float(r.em),
            format_float(r.roughness_um),
            r.feasible,
            format_float(r.phase_pi),
            r.best_feasible_vp.map(format_float).unwrap_or_default(),
            r.modulus_gpa.map(format_float).unwrap_or_default(),
        )?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !saw_header {
            if line != TRACE_HEADER {
                bail!("{}: line 1: not a trace file", path.display());
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!(
                "{}: line {line_no}: expected 8 columns, got {}",
                path.display(),
                fields.len()
            );
        }
        let num = |field: &str, name: &str| -> Result<f64> {
            field
                .parse()
                .with_context(|| format!("{}: line {line_no}: bad {name}", path.display()))
        };
        let opt_num = |field: &str, name: &str| -> Result<Option<f64>> {
            if field.is_empty() {
                Ok(None)
            } else {
                num(field, name).map(Some)
            }
        };
        let feasible = match fields[4] {
            "true" => true,
            "false" => false,
            other => bail!(
                "{}: line {line_no}: feasible must be true or false, got '{other}'",
                path.display()
            ),
        };
        rows.push(TraceRow {
            iteration: fields[0]
                .parse()
                .with_context(|| format!("{}: line {line_no}: bad iteration", path.display()))?,
            vp: num(fields[1], "vp")?,
            em: num(fields[2], "em")?,
            roughness_um: num(fields[3], "roughness_um")?,
            feasible,
            phase_pi: num(fields[5], "phase_pi")?,
            best_feasible_vp: opt_num(fields[6], "best_feasible_vp")?,
            modulus_gpa: opt_num(fields[7], "modulus_gpa")?,
        });
    }
    if !saw_header {
        bail!("{}: empty file", path.display());
    }
    Ok(rows)
}
