//! Operator sessions: a state file advanced one suggest/record turn at a
//! time. A pending-suggestion record makes the protocol crash-safe, and a
//! content hash catches out-of-band edits.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fffopt_core::format_float;
use fffopt_core::optimizer::{OptimizerState, StateDoc};
use fffopt_core::PrintParameters;

use crate::RecordArgs;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionFile {
    #[serde(flatten)]
    doc: StateDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pending: Option<PrintParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_hash: Option<String>,
}

/// Hash of the session content with the hash field itself blanked. Computed
/// on the parsed form, so formatting changes don't count as edits but value
/// changes do.
fn content_hash(doc: &StateDoc, pending: Option<PrintParameters>) -> String {
    let canonical = SessionFile {
        doc: doc.clone(),
        pending,
        state_hash: None,
    };
    let bytes = serde_json::to_vec(&canonical).expect("session state always serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path) -> Result<(OptimizerState, Option<PrintParameters>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file: SessionFile = serde_json::from_str(&text)
        .with_context(|| format!("{}: state file does not parse", path.display()))?;
    if let Some(stored) = &file.state_hash {
        let expected = content_hash(&file.doc, file.pending);
        if *stored != expected {
            bail!(
                "{}: state_hash mismatch, the file changed since it was written",
                path.display()
            );
        }
    }
    let state = file
        .doc
        .into_state()
        .with_context(|| format!("{}: state file invalid", path.display()))?;
    Ok((state, file.pending))
}

pub fn save(path: &Path, state: &OptimizerState, pending: Option<PrintParameters>) -> Result<()> {
    let doc = StateDoc::from_state(state);
    let state_hash = Some(content_hash(&doc, pending));
    let file = SessionFile {
        doc,
        pending,
        state_hash,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn suggest(path: &Path) -> Result<()> {
    let (state, pending) = load(path)?;
    let params = match pending {
        Some(p) => p,
        None => {
            let p = state.suggest()?;
            save(path, &state, Some(p))?;
            p
        }
    };
    println!("{},{}", format_float(params.speed), format_float(params.extrusion));
    Ok(())
}

pub fn record(args: RecordArgs) -> Result<()> {
    let (mut state, pending) = load(&args.state)?;
    let params = match (args.vp, args.em) {
        (Some(vp), Some(em)) => PrintParameters::new(vp, em),
        (None, None) => pending.with_context(|| {
            format!(
                "{}: no pending suggestion, pass --vp and --em",
                args.state.display()
            )
        })?,
        _ => bail!("--vp and --em must be given together"),
    };
    state.update(params, args.roughness, args.modulus)?;
    save(&args.state, &state, None)?;
    match state.best_feasible() {
        Some(o) => println!(
            "best_feasible,{},{},{}",
            format_float(o.params.speed),
            format_float(o.params.extrusion),
            format_float(o.roughness)
        ),
        None => println!("best_feasible,none"),
    }
    Ok(())
}
