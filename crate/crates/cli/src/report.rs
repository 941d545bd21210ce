use std::path::Path;

use anyhow::{bail, Result};
use fffopt_core::format_float;

use crate::trace::{self, TraceRow};

pub fn report(path: &Path) -> Result<()> {
    let rows = trace::read_trace(path)?;
    if rows.is_empty() {
        bail!("{}: trace has no data rows", path.display());
    }

    // Feasible fraction per confidence phase, in order of first appearance.
    let mut phases: Vec<(f64, usize, usize)> = Vec::new();
    for r in &rows {
        match phases.iter_mut().find(|(pi, _, _)| *pi == r.phase_pi) {
            Some((_, total, feasible)) => {
                *total += 1;
                *feasible += usize::from(r.feasible);
            }
            None => phases.push((r.phase_pi, 1, usize::from(r.feasible))),
        }
    }
    for (pi, total, feasible) in &phases {
        println!(
            "phase_pi,{},feasible_fraction,{}",
            format_float(*pi),
            format_float(*feasible as f64 / *total as f64)
        );
    }

    let mut best: Option<&TraceRow> = None;
    for r in rows.iter().filter(|r| r.feasible) {
        let better = match best {
            None => true,
            Some(b) => r.vp > b.vp || (r.vp == b.vp && r.roughness_um < b.roughness_um),
        };
        if better {
            best = Some(r);
        }
    }
    match best {
        Some(b) => {
            println!(
                "best_feasible,{},{},{}",
                format_float(b.vp),
                format_float(b.em),
                format_float(b.roughness_um)
            );
            // Improvement over the speed the loop started from.
            println!("speed_factor,{}", format_float(b.vp / rows[0].vp));
        }
        None => {
            println!("best_feasible,none");
            println!("speed_factor,none");
        }
    }

    let group_mean = |want: bool| -> Option<f64> {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.feasible == want)
            .filter_map(|r| r.modulus_gpa)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let render = |v: Option<f64>| v.map(format_float).unwrap_or_else(|| "none".into());
    println!("mean_modulus_feasible,{}", render(group_mean(true)));
    println!("mean_modulus_infeasible,{}", render(group_mean(false)));
    Ok(())
}
