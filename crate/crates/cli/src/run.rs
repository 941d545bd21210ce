use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use fffopt_core::optimizer::{OptimizerState, PhaseSpec};
use fffopt_core::simulator::{self, SimulatorConfig};
use fffopt_core::{ParameterBounds, PrintParameters};

use crate::trace;
use crate::RunArgs;

/// Built-in initialization sweep: one overly fast speed with extrusion levels
/// spread across the flow range.
pub const INIT_SWEEP_SPEED: f64 = 350.0;
pub const INIT_SWEEP_EXTRUSIONS: [f64; 7] = [0.7, 0.8, 0.9, 1.0, 1.1, 1.3, 1.5];

struct InitRow {
    params: PrintParameters,
    roughness: f64,
    modulus: Option<f64>,
}

const INIT_HEADERS: [&str; 2] = ["vp,em,roughness_um", "vp,em,roughness_um,modulus_gpa"];

fn read_init_csv(path: &Path) -> Result<Vec<InitRow>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    let mut with_modulus = false;
    let mut saw_header = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !saw_header {
            with_modulus = match line {
                h if h == INIT_HEADERS[0] => false,
                h if h == INIT_HEADERS[1] => true,
                other => bail!(
                    "{}: line 1: expected header '{}' or '{}', got '{other}'",
                    path.display(),
                    INIT_HEADERS[0],
                    INIT_HEADERS[1]
                ),
            };
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if with_modulus { 4 } else { 3 };
        if fields.len() != expected {
            bail!(
                "{}: line {line_no}: expected {expected} columns, got {}",
                path.display(),
                fields.len()
            );
        }
        let num = |f: &str, name: &str| -> Result<f64> {
            f.parse()
                .with_context(|| format!("{}: line {line_no}: bad {name}", path.display()))
        };
        let modulus = if with_modulus && !fields[3].is_empty() {
            Some(num(fields[3], "modulus_gpa")?)
        } else {
            None
        };
        rows.push(InitRow {
            params: PrintParameters::new(num(fields[0], "vp")?, num(fields[1], "em")?),
            roughness: num(fields[2], "roughness_um")?,
            modulus,
        });
    }
    if rows.is_empty() {
        bail!("{}: no initialization rows", path.display());
    }
    Ok(rows)
}

pub fn run(args: RunArgs) -> Result<()> {
    let config: SimulatorConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("{} is not a valid config", path.display()))?
        }
        None => SimulatorConfig::default(),
    };
    config.validate().map_err(|e| anyhow!("config: {e}"))?;

    let mut state =
        OptimizerState::with_defaults(ParameterBounds::default(), args.lambda, args.pi1, args.seed)?;
    let mut rng = simulator::noise_rng(args.seed);
    match &args.init {
        Some(path) => {
            for row in read_init_csv(path)? {
                state.update(row.params, row.roughness, row.modulus)?;
            }
        }
        None => {
            for &em in &INIT_SWEEP_EXTRUSIONS {
                let p = PrintParameters::new(INIT_SWEEP_SPEED, em);
                let m = simulator::virtual_print(&p, &config, &mut rng);
                state.update(p, m.roughness, m.modulus)?;
            }
        }
    }
    let init_len = state.observations().len();

    let schedule = [
        PhaseSpec {
            iterations: args.iters_phase1,
            confidence_threshold: args.pi1,
        },
        PhaseSpec {
            iterations: args.iters_phase2,
            confidence_threshold: args.pi2,
        },
    ];
    state.run_closed_loop(
        |p| Ok(simulator::virtual_print(p, &config, &mut rng)),
        &schedule,
    )?;

    let rows = trace::rows_from_history(state.observations(), init_len);
    let out = File::create(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    trace::write_trace(&rows, BufWriter::new(out))?;
    Ok(())
}
