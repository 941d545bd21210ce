//! Surface metrology on laser line scans.
//!
//! A scan pass is an ordered sequence of (position, height) samples along one
//! deposited layer. This module computes arithmetic mean roughness per pass,
//! aggregates it over a whole part, summarizes repeated evaluations, joins
//! parallel passes into a raster height grid, and reads and writes the scan
//! CSV interchange format.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::fmt::format_float;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("positions ({positions}) and heights ({heights}) differ in length")]
    LengthMismatch { positions: usize, heights: usize },
    #[error("positions must be strictly monotonic along the pass")]
    NonMonotonicPositions,
    #[error("sample values must be finite")]
    NonFiniteValue,
    #[error("layer index must be at least 1")]
    ZeroLayerIndex,
    #[error("layer indices must be contiguous from 1; found layer {found} at rank {rank}")]
    NonContiguousLayers { found: u32, rank: u32 },
    #[error("part scan has no layers")]
    EmptyPart,
    #[error("no values given")]
    EmptyInput,
    #[error("raster needs at least 2 passes, got {0}")]
    TooFewPasses(usize),
    #[error("pass spacing must be positive and finite")]
    InvalidPassSpacing,
    #[error("pass position ranges share no common interval")]
    DisjointPasses,
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One laser pass over one layer. Positions are stored strictly increasing;
/// passes recorded in the return direction are reversed on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanProfile {
    layer_index: u32,
    positions: Vec<f64>,
    heights: Vec<f64>,
}

impl ScanProfile {
    /// `layer_index` counts from 1. `positions` are in mm, `heights` in µm;
    /// positions must be strictly increasing or strictly decreasing.
    pub fn new(
        layer_index: u32,
        mut positions: Vec<f64>,
        mut heights: Vec<f64>,
    ) -> Result<Self, ProfileError> {
        if layer_index == 0 {
            return Err(ProfileError::ZeroLayerIndex);
        }
        if positions.len() != heights.len() {
            return Err(ProfileError::LengthMismatch {
                positions: positions.len(),
                heights: heights.len(),
            });
        }
        if positions.len() < 2 {
            return Err(ProfileError::TooFewSamples(positions.len()));
        }
        if positions.iter().chain(heights.iter()).any(|v| !v.is_finite()) {
            return Err(ProfileError::NonFiniteValue);
        }
        let ascending = positions[1] > positions[0];
        if !ascending {
            positions.reverse();
            heights.reverse();
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ProfileError::NonMonotonicPositions);
        }
        Ok(Self {
            layer_index,
            positions,
            heights,
        })
    }

    pub fn layer_index(&self) -> u32 {
        self.layer_index
    }

    /// Scan positions in mm, strictly increasing.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Surface heights in µm, one per position.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// All layer passes of one printed part, sorted by layer index 1..=N.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartScan {
    profiles: Vec<ScanProfile>,
}

impl PartScan {
    /// Accepts profiles in any order; they are sorted by layer index, which
    /// must then run contiguously from 1. An empty part is allowed.
    pub fn new(mut profiles: Vec<ScanProfile>) -> Result<Self, ProfileError> {
        profiles.sort_by_key(|p| p.layer_index());
        for (rank, p) in profiles.iter().enumerate() {
            let expected = rank as u32 + 1;
            if p.layer_index() != expected {
                return Err(ProfileError::NonContiguousLayers {
                    found: p.layer_index(),
                    rank: expected,
                });
            }
        }
        Ok(Self { profiles })
    }

    pub fn profiles(&self) -> &[ScanProfile] {
        &self.profiles
    }

    pub fn num_layers(&self) -> usize {
        self.profiles.len()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_abs_deviation(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|z| (z - m).abs()).sum::<f64>() / values.len() as f64
}

/// Arithmetic mean roughness of one pass: the mean absolute deviation of the
/// heights from their own mean. The sensor samples at a fixed rate under
/// constant scan speed, so positions carry no weight.
pub fn compute_ra(profile: &ScanProfile) -> f64 {
    mean_abs_deviation(profile.heights())
}

/// Ra of a bare height sequence in µm.
pub fn ra_from_heights(heights: &[f64]) -> Result<f64, ProfileError> {
    if heights.len() < 2 {
        return Err(ProfileError::TooFewSamples(heights.len()));
    }
    Ok(mean_abs_deviation(heights))
}

/// Global roughness of a part: the unweighted mean of per-layer Ra.
pub fn global_roughness(part: &PartScan) -> Result<f64, ProfileError> {
    if part.profiles().is_empty() {
        return Err(ProfileError::EmptyPart);
    }
    let sum: f64 = part.profiles().iter().map(compute_ra).sum();
    Ok(sum / part.num_layers() as f64)
}

/// Spread summary of repeated roughness evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub minimum: f64,
    pub maximum: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Coefficient of variation, std over mean; zero when the mean vanishes.
    pub cv: f64,
}

pub fn profile_stats(values: &[f64]) -> Result<StatsSummary, ProfileError> {
    if values.is_empty() {
        return Err(ProfileError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ProfileError::NonFiniteValue);
    }
    let mut minimum = f64::INFINITY;
    let mut maximum = f64::NEG_INFINITY;
    for &v in values {
        minimum = minimum.min(v);
        maximum = maximum.max(v);
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    let std = var.sqrt();
    let cv = if m == 0.0 { 0.0 } else { std / m };
    Ok(StatsSummary {
        minimum,
        maximum,
        mean: m,
        std,
        cv,
    })
}

/// Signed and absolute deviation summary for paired roughness values,
/// measured minus reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSummary {
    pub max_abs_dev: f64,
    pub mean_dev: f64,
    pub mean_abs_dev: f64,
}

pub fn compare_roughness_pairs(pairs: &[(f64, f64)]) -> Result<DeviationSummary, ProfileError> {
    if pairs.is_empty() {
        return Err(ProfileError::EmptyInput);
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(ProfileError::NonFiniteValue);
    }
    let n = pairs.len() as f64;
    let mut max_abs = 0.0f64;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    for &(measured, reference) in pairs {
        let d = measured - reference;
        max_abs = max_abs.max(d.abs());
        sum += d;
        sum_abs += d.abs();
    }
    Ok(DeviationSummary {
        max_abs_dev: max_abs,
        mean_dev: sum / n,
        mean_abs_dev: sum_abs / n,
    })
}

/// Height field resampled from parallel scan passes onto a common grid of
/// cross positions. Rows follow the pass order given at reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pass_spacing: f64,
    cross_positions: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl RasterGrid {
    /// Distance between neighboring passes in mm.
    pub fn pass_spacing(&self) -> f64 {
        self.pass_spacing
    }

    /// Grid positions along the scan direction in mm.
    pub fn cross_positions(&self) -> &[f64] {
        &self.cross_positions
    }

    /// One resampled height row per pass, in µm.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// CSV export: header row `pass_index,` plus the cross positions, then one
    /// row per pass with a 1-based index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let positions: Vec<String> = self.cross_positions.iter().map(|&p| format_float(p)).collect();
        writeln!(w, "pass_index,{}", positions.join(","))?;
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|&h| format_float(h)).collect();
            writeln!(w, "{},{}", i + 1, cells.join(","))?;
        }
        Ok(())
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn interpolate(positions: &[f64], heights: &[f64], x: f64) -> f64 {
    let x = x.clamp(positions[0], *positions.last().unwrap());
    let idx = positions.partition_point(|&p| p <= x);
    if idx == 0 {
        heights[0]
    } else if idx == positions.len() {
        *heights.last().unwrap()
    } else {
        let (x0, x1) = (positions[idx - 1], positions[idx]);
        let t = (x - x0) / (x1 - x0);
        heights[idx - 1] + t * (heights[idx] - heights[idx - 1])
    }
}

/// Join parallel passes into a raster height grid.
///
/// The shared axis is the intersection of all pass position ranges, sampled at
/// the median spacing of consecutive samples pooled over the passes. Heights
/// are linearly interpolated; layer indices of the passes are ignored, the
/// passes being parallel lines on one surface rather than stacked layers.
pub fn reconstruct_raster(
    passes: &[ScanProfile],
    pass_spacing: f64,
) -> Result<RasterGrid, ProfileError> {
    if passes.len() < 2 {
        return Err(ProfileError::TooFewPasses(passes.len()));
    }
    if !pass_spacing.is_finite() || pass_spacing <= 0.0 {
        return Err(ProfileError::InvalidPassSpacing);
    }
    let lo = passes
        .iter()
        .map(|p| p.positions()[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = passes
        .iter()
        .map(|p| *p.positions().last().unwrap())
        .fold(f64::INFINITY, f64::min);
    if lo > hi {
        return Err(ProfileError::DisjointPasses);
    }
    let mut deltas: Vec<f64> = passes
        .iter()
        .flat_map(|p| p.positions().windows(2).map(|w| w[1] - w[0]))
        .collect();
    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let step = median_of_sorted(&deltas);
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let cross_positions: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
    let rows = passes
        .iter()
        .map(|p| {
            cross_positions
                .iter()
                .map(|&x| interpolate(p.positions(), p.heights(), x))
                .collect()
        })
        .collect();
    Ok(RasterGrid {
        pass_spacing,
        cross_positions,
        rows,
    })
}

pub const SCAN_CSV_HEADER: &str = "layer_index,position_mm,height_um";

fn csv_err(line: usize, message: impl Into<String>) -> ProfileError {
    ProfileError::Csv {
        line,
        message: message.into(),
    }
}

/// Read a part scan from CSV. Format: header `layer_index,position_mm,height_um`,
/// then one row per sample with the rows of each layer forming one contiguous
/// block. Layers may appear in any order between blocks.
pub fn read_scan_csv<R: BufRead>(reader: R) -> Result<PartScan, ProfileError> {
    struct Block {
        layer: u32,
        start_line: usize,
        positions: Vec<f64>,
        heights: Vec<f64>,
    }

    let mut blocks: Vec<Block> = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !saw_header {
            if line != SCAN_CSV_HEADER {
                return Err(csv_err(
                    line_no,
                    format!("expected header '{SCAN_CSV_HEADER}', got '{line}'"),
                ));
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| csv_err(line_no, format!("missing {name} column")))
        };
        let layer: u32 = next_field("layer_index")?
            .trim()
            .parse()
            .map_err(|_| csv_err(line_no, "layer_index is not a positive integer"))?;
        let position: f64 = next_field("position_mm")?
            .trim()
            .parse()
            .map_err(|_| csv_err(line_no, "position_mm is not a number"))?;
        let height: f64 = next_field("height_um")?
            .trim()
            .parse()
            .map_err(|_| csv_err(line_no, "height_um is not a number"))?;
        if fields.next().is_some() {
            return Err(csv_err(line_no, "expected exactly 3 columns"));
        }
        match blocks.last_mut() {
            Some(b) if b.layer == layer => {
                b.positions.push(position);
                b.heights.push(height);
            }
            _ => {
                if blocks.iter().any(|b| b.layer == layer) {
                    return Err(csv_err(
                        line_no,
                        format!("layer {layer} appears in two separate blocks"),
                    ));
                }
                blocks.push(Block {
                    layer,
                    start_line: line_no,
                    positions: vec![position],
                    heights: vec![height],
                });
            }
        }
    }
    if !saw_header {
        return Err(csv_err(1, "empty file, expected a header row"));
    }
    let mut profiles = Vec::with_capacity(blocks.len());
    for b in blocks {
        let profile = ScanProfile::new(b.layer, b.positions, b.heights).map_err(|e| {
            csv_err(b.start_line, format!("layer {} block: {e}", b.layer))
        })?;
        profiles.push(profile);
    }
    PartScan::new(profiles)
}

/// Write a part scan in the same CSV format `read_scan_csv` accepts.
pub fn write_scan_csv<W: Write>(part: &PartScan, mut w: W) -> io::Result<()> {
    writeln!(w, "{SCAN_CSV_HEADER}")?;
    for p in part.profiles() {
        for (pos, h) in p.positions().iter().zip(p.heights()) {
            writeln!(w, "{},{},{}", p.layer_index(), format_float(*pos), format_float(*h))?;
        }
    }
    Ok(())
}
