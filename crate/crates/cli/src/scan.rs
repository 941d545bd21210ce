use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fffopt_core::format_float;
use fffopt_core::profile::{self, compute_ra, global_roughness, profile_stats, PartScan};

pub fn read_part(input: &Path) -> Result<PartScan> {
    let file =
        File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    profile::read_scan_csv(BufReader::new(file))
        .with_context(|| format!("{}", input.display()))
}

pub fn ra(input: &Path) -> Result<()> {
    let part = read_part(input)?;
    let global = global_roughness(&part).with_context(|| format!("{}", input.display()))?;
    for p in part.profiles() {
        println!("{},{}", p.layer_index(), format_float(compute_ra(p)));
    }
    println!("global,{}", format_float(global));
    Ok(())
}

pub fn stats(inputs: &[PathBuf]) -> Result<()> {
    let mut values = Vec::with_capacity(inputs.len());
    for path in inputs {
        let part = read_part(path)?;
        values.push(global_roughness(&part).with_context(|| format!("{}", path.display()))?);
    }
    let s = profile_stats(&values)?;
    println!("minimum,{}", format_float(s.minimum));
    println!("maximum,{}", format_float(s.maximum));
    println!("mean,{}", format_float(s.mean));
    println!("std,{}", format_float(s.std));
    println!("cv,{}", format_float(s.cv));
    Ok(())
}
