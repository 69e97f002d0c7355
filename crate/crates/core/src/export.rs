//! CSV layouts for counts and derived statistics.
//!
//! Counts files hold one row per mode (or per ordered cell pair for
//! cross-talk scans):
//!
//! ```text
//! run_kind,input_cell,output_cell,temporal_index,total_counts,n_trials
//! signal,1,1,1,1234,14227
//! ```
//!
//! Storage runs repeat the cell in both cell columns.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{CrossTalkMatrix, CumulativePoint, ModeStats, NetworkProjection, SpatialModeStats};
use crate::error::{Error, Result};
use crate::simulator::{CrossTalkScan, ModeCount, ModeKey, RunKind, TrialCounts};

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    run_kind: String,
    input_cell: u32,
    output_cell: u32,
    temporal_index: u32,
    total_counts: u64,
    n_trials: u64,
}

/// Contents of a counts file.
#[derive(Debug, Clone, PartialEq)]
pub enum CountsFile {
    Storage(TrialCounts),
    CrossTalk(CrossTalkScan),
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_counts<W: Write>(counts: &TrialCounts, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &counts.counts {
        w.serialize(count_row(counts.kind, counts.n_trials, c))?;
    }
    flush(w)
}

pub fn write_scan<W: Write>(scan: &CrossTalkScan, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for &i in &scan.cells {
        for &j in &scan.cells {
            let t = scan
                .entries
                .get(&(i, j))
                .ok_or_else(|| Error::ModeMismatch(format!("scan lacks pair ({i}, {j})")))?;
            for c in &t.counts {
                w.serialize(count_row(t.kind, t.n_trials, c))?;
            }
        }
    }
    flush(w)
}

fn count_row(kind: RunKind, n_trials: u64, c: &ModeCount) -> CountRow {
    let (input_cell, output_cell) = match kind {
        RunKind::CrossTalk {
            input_cell,
            output_cell,
        } => (input_cell, output_cell),
        _ => (c.mode.cell_id, c.mode.cell_id),
    };
    CountRow {
        run_kind: kind.label().to_string(),
        input_cell,
        output_cell,
        temporal_index: c.mode.temporal_index,
        total_counts: c.total,
        n_trials,
    }
}

pub fn write_counts_file(counts: &CountsFile, path: &Path) -> Result<()> {
    let f = create(path)?;
    match counts {
        CountsFile::Storage(t) => write_counts(t, f),
        CountsFile::CrossTalk(s) => write_scan(s, f),
    }
}

pub fn read_counts<R: Read>(input: R, origin: &Path) -> Result<CountsFile> {
    let bad = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let mut rows = Vec::new();
    for (k, r) in csv::Reader::from_reader(input).deserialize::<CountRow>().enumerate() {
        rows.push(r.map_err(|e| bad(format!("row {}: {e}", k + 2)))?);
    }
    let first = rows.first().ok_or_else(|| bad("counts file has no rows".into()))?;
    let (label, n_trials) = (first.run_kind.clone(), first.n_trials);
    if let Some(r) = rows.iter().find(|r| r.run_kind != label || r.n_trials != n_trials) {
        return Err(bad(format!(
            "mixed rows: `{}` with {} trials after `{label}` with {n_trials}",
            r.run_kind, r.n_trials
        )));
    }
    if n_trials == 0 {
        return Err(bad("n_trials must be at least 1".into()));
    }
    match label.as_str() {
        "signal" | "noise" => {
            let kind = if label == "signal" {
                RunKind::Signal
            } else {
                RunKind::NoiseOnly
            };
            let mut counts = Vec::with_capacity(rows.len());
            let mut seen = std::collections::BTreeSet::new();
            for r in &rows {
                if r.input_cell != r.output_cell {
                    return Err(bad(format!(
                        "{label} row names two cells ({}, {})",
                        r.input_cell, r.output_cell
                    )));
                }
                let mode = ModeKey {
                    cell_id: r.input_cell,
                    temporal_index: r.temporal_index,
                };
                if !seen.insert(mode) {
                    return Err(bad(format!("mode {mode} appears twice")));
                }
                counts.push(ModeCount {
                    mode,
                    total: r.total_counts,
                });
            }
            Ok(CountsFile::Storage(TrialCounts {
                kind,
                n_trials,
                counts,
            }))
        }
        "crosstalk" => {
            let mut cells: Vec<u32> = Vec::new();
            let mut entries = BTreeMap::new();
            for r in &rows {
                if !cells.contains(&r.input_cell) {
                    cells.push(r.input_cell);
                }
                let t = TrialCounts {
                    kind: RunKind::CrossTalk {
                        input_cell: r.input_cell,
                        output_cell: r.output_cell,
                    },
                    n_trials,
                    counts: vec![ModeCount {
                        mode: ModeKey {
                            cell_id: r.output_cell,
                            temporal_index: r.temporal_index,
                        },
                        total: r.total_counts,
                    }],
                };
                if entries.insert((r.input_cell, r.output_cell), t).is_some() {
                    return Err(bad(format!("pair ({}, {}) appears twice", r.input_cell, r.output_cell)));
                }
            }
            Ok(CountsFile::CrossTalk(CrossTalkScan {
                cells,
                n_trials,
                entries,
            }))
        }
        other => Err(bad(format!("unknown run_kind `{other}`"))),
    }
}

pub fn read_counts_file(path: &Path) -> Result<CountsFile> {
    read_counts(open(path)?, path)
}

#[derive(Serialize)]
struct StatsRow {
    spatial_mode: u32,
    temporal_index: u32,
    c_signal: f64,
    c_signal_err: f64,
    c_noise: f64,
    c_noise_err: f64,
    snr: f64,
    snr_err: f64,
}

pub fn write_mode_stats<W: Write>(stats: &[ModeStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(StatsRow {
            spatial_mode: s.mode.cell_id,
            temporal_index: s.mode.temporal_index,
            c_signal: s.c_signal,
            c_signal_err: s.err_signal,
            c_noise: s.c_noise,
            c_noise_err: s.err_noise,
            snr: s.snr,
            snr_err: s.snr_err,
        })?;
    }
    flush(w)
}

#[derive(Serialize)]
struct SpatialRow {
    spatial_mode: u32,
    n_temporal: u32,
    c_signal: f64,
    c_signal_err: f64,
    c_noise: f64,
    c_noise_err: f64,
    snr: f64,
    snr_err: f64,
}

pub fn write_spatial_stats<W: Write>(stats: &[SpatialModeStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(SpatialRow {
            spatial_mode: s.cell_id,
            n_temporal: s.n_temporal,
            c_signal: s.c_signal,
            c_signal_err: s.err_signal,
            c_noise: s.c_noise,
            c_noise_err: s.err_noise,
            snr: s.snr,
            snr_err: s.snr_err,
        })?;
    }
    flush(w)
}

#[derive(Serialize)]
struct CumulativeRow {
    n_modes: usize,
    c_signal: f64,
    c_signal_err: f64,
    c_noise: f64,
    c_noise_err: f64,
}

pub fn write_cumulative<W: Write>(series: &[CumulativePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in series {
        w.serialize(CumulativeRow {
            n_modes: p.n_modes,
            c_signal: p.c_signal,
            c_signal_err: p.err_signal,
            c_noise: p.c_noise,
            c_noise_err: p.err_noise,
        })?;
    }
    flush(w)
}

#[derive(Serialize)]
struct ProjectionRow {
    spatial_mode: u32,
    c_signal_rescaled: f64,
    snr_adjusted: f64,
    snr_adjusted_err: f64,
    g2: f64,
    g2_err: f64,
    fidelity: f64,
    fidelity_err: f64,
    below_noise: bool,
}

pub fn write_projection<W: Write>(rows: &[NetworkProjection], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in rows {
        w.serialize(ProjectionRow {
            spatial_mode: p.cell_id,
            c_signal_rescaled: p.c_signal_rescaled,
            snr_adjusted: p.snr_adjusted,
            snr_adjusted_err: p.snr_adjusted_err,
            g2: p.g2_inferred,
            g2_err: p.g2_err,
            fidelity: p.fidelity,
            fidelity_err: p.fidelity_err,
            below_noise: p.below_noise,
        })?;
    }
    flush(w)
}

fn write_square<W: Write>(cells: &[u32], values: &[Vec<Option<f64>>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["input_cell".to_string()];
    header.extend(cells.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for (row, &i) in values.iter().zip(cells) {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    flush(w)
}

/// The normalized `N x N` matrix; rows are input cells, columns outputs.
/// Invalid rows are left blank.
pub fn write_crosstalk_matrix<W: Write>(m: &CrossTalkMatrix, out: W) -> Result<()> {
    write_square(&m.cells, &m.c, out)
}

pub fn write_crosstalk_errors<W: Write>(m: &CrossTalkMatrix, out: W) -> Result<()> {
    write_square(&m.cells, &m.err, out)
}

#[derive(Serialize)]
struct NoiseContributionRow {
    spatial_mode: u32,
    noise_contribution: Option<f64>,
    noise_contribution_err: Option<f64>,
}

pub fn write_noise_contribution<W: Write>(m: &CrossTalkMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (&c, v) in m.cells.iter().zip(&m.noise_contribution) {
        w.serialize(NoiseContributionRow {
            spatial_mode: c,
            noise_contribution: v.map(|x| x.0),
            noise_contribution_err: v.map(|x| x.1),
        })?;
    }
    flush(w)
}

/// Writes `f` into `path`, creating the file.
pub fn to_file(path: &Path, f: impl FnOnce(File) -> Result<()>) -> Result<()> {
    f(create(path)?)
}
