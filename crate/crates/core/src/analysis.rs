//! Count statistics, network projections and the cross-talk matrix.
//!
//! All uncertainties are Poisson errors on the raw totals carried through
//! each ratio at first order.

use serde::{Deserialize, Serialize};

use crate::device::{ArrayDevice, StorageConfig};
use crate::error::{Error, Result};
use crate::simulator::{CrossTalkScan, ModeKey, TrialCounts};

/// How the per-mode SNR is formed from signal-run and noise-run counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SnrDefinition {
    /// `c_S / c_B`
    #[default]
    Ratio,
    /// `(c_S - c_B) / c_B`
    Excess,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeStats {
    pub mode: ModeKey,
    pub c_signal: f64,
    pub err_signal: f64,
    pub c_noise: f64,
    pub err_noise: f64,
    pub snr: f64,
    pub snr_err: f64,
    /// Set when the noise run saw no counts in this mode.
    pub snr_infinite: bool,
}

/// Spatial-mode averages over all temporal modes of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialModeStats {
    pub cell_id: u32,
    pub n_temporal: u32,
    pub c_signal: f64,
    pub err_signal: f64,
    pub c_noise: f64,
    pub err_noise: f64,
    pub snr: f64,
    pub snr_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulativePoint {
    pub n_modes: usize,
    pub c_signal: f64,
    pub err_signal: f64,
    pub c_noise: f64,
    pub err_noise: f64,
}

fn rate(total: u64, n_trials: u64) -> (f64, f64) {
    let n = n_trials as f64;
    (total as f64 / n, (total as f64).sqrt() / n)
}

/// `a / b` with first-order error, `None` when `b` is zero.
fn ratio_with_err(a: f64, ea: f64, b: f64, eb: f64) -> Option<(f64, f64)> {
    if b > 0.0 {
        let r = a / b;
        let err = ((ea / b).powi(2) + (a * eb / (b * b)).powi(2)).sqrt();
        Some((r, err))
    } else {
        None
    }
}

fn snr_from(c_s: f64, e_s: f64, c_b: f64, e_b: f64, def: SnrDefinition) -> (f64, f64, bool) {
    match ratio_with_err(c_s, e_s, c_b, e_b) {
        Some((r, err)) => match def {
            SnrDefinition::Ratio => (r, err, false),
            SnrDefinition::Excess => (r - 1.0, err, false),
        },
        None => (f64::INFINITY, f64::NAN, true),
    }
}

/// Per-mode rates, errors and SNR with the default ratio definition.
pub fn per_mode_stats(signal: &TrialCounts, noise: &TrialCounts) -> Result<Vec<ModeStats>> {
    per_mode_stats_with(signal, noise, SnrDefinition::Ratio)
}

pub fn per_mode_stats_with(signal: &TrialCounts, noise: &TrialCounts, def: SnrDefinition) -> Result<Vec<ModeStats>> {
    check_same_modes(signal, noise)?;
    signal
        .counts
        .iter()
        .map(|s| {
            let b = noise.total(s.mode).expect("mode sets checked");
            let (c_signal, err_signal) = rate(s.total, signal.n_trials);
            let (c_noise, err_noise) = rate(b, noise.n_trials);
            let (snr, snr_err, snr_infinite) = snr_from(c_signal, err_signal, c_noise, err_noise, def);
            Ok(ModeStats {
                mode: s.mode,
                c_signal,
                err_signal,
                c_noise,
                err_noise,
                snr,
                snr_err,
                snr_infinite,
            })
        })
        .collect()
}

fn check_same_modes(signal: &TrialCounts, noise: &TrialCounts) -> Result<()> {
    let missing_in_noise: Vec<String> = signal
        .modes()
        .filter(|m| noise.total(*m).is_none())
        .map(|m| m.to_string())
        .collect();
    let missing_in_signal: Vec<String> = noise
        .modes()
        .filter(|m| signal.total(*m).is_none())
        .map(|m| m.to_string())
        .collect();
    if missing_in_noise.is_empty() && missing_in_signal.is_empty() {
        return Ok(());
    }
    let mut parts = Vec::new();
    if !missing_in_noise.is_empty() {
        parts.push(format!("missing from noise run: {}", missing_in_noise.join(" ")));
    }
    if !missing_in_signal.is_empty() {
        parts.push(format!("missing from signal run: {}", missing_in_signal.join(" ")));
    }
    Err(Error::ModeMismatch(parts.join("; ")))
}

/// Averages over the temporal modes of each cell, in first-seen cell order.
pub fn spatial_mode_stats(signal: &TrialCounts, noise: &TrialCounts, def: SnrDefinition) -> Result<Vec<SpatialModeStats>> {
    check_same_modes(signal, noise)?;
    let mut cells: Vec<u32> = Vec::new();
    for m in signal.modes() {
        if !cells.contains(&m.cell_id) {
            cells.push(m.cell_id);
        }
    }
    Ok(cells
        .into_iter()
        .map(|cell| {
            let modes: Vec<ModeKey> = signal.modes().filter(|m| m.cell_id == cell).collect();
            let nt = modes.len() as u64;
            let s: u64 = modes.iter().map(|m| signal.total(*m).unwrap()).sum();
            let b: u64 = modes.iter().map(|m| noise.total(*m).unwrap()).sum();
            let (c_signal, err_signal) = rate(s, signal.n_trials * nt);
            let (c_noise, err_noise) = rate(b, noise.n_trials * nt);
            let (snr, snr_err, _) = snr_from(c_signal, err_signal, c_noise, err_noise, def);
            SpatialModeStats {
                cell_id: cell,
                n_temporal: nt as u32,
                c_signal,
                err_signal,
                c_noise,
                err_noise,
                snr,
                snr_err,
            }
        })
        .collect())
}

/// Running sum `c_N = c_1 + ... + c_N`.
pub fn cumulative_counts(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Cumulative signal and noise per trial over the first N modes, N = 1..=M.
pub fn cumulative_series(stats: &[ModeStats]) -> Vec<CumulativePoint> {
    let signal = cumulative_counts(&stats.iter().map(|s| s.c_signal).collect::<Vec<_>>());
    let noise = cumulative_counts(&stats.iter().map(|s| s.c_noise).collect::<Vec<_>>());
    let var_s = cumulative_counts(&stats.iter().map(|s| s.err_signal.powi(2)).collect::<Vec<_>>());
    let var_b = cumulative_counts(&stats.iter().map(|s| s.err_noise.powi(2)).collect::<Vec<_>>());
    (0..stats.len())
        .map(|i| CumulativePoint {
            n_modes: i + 1,
            c_signal: signal[i],
            err_signal: var_s[i].sqrt(),
            c_noise: noise[i],
            err_noise: var_b[i].sqrt(),
        })
        .collect()
}

/// SNR of the pooled counts, mean signal per mode over mean noise per mode.
/// `None` when no noise was recorded.
pub fn average_snr(stats: &[ModeStats], def: SnrDefinition) -> Option<(f64, f64)> {
    let last = *cumulative_series(stats).last()?;
    match snr_from(last.c_signal, last.err_signal, last.c_noise, last.err_noise, def) {
        (_, _, true) => None,
        (snr, err, false) => Some((snr, err)),
    }
}

/// Detected signal rescaled to a heralded single-photon input that also
/// crosses the multiplexer: `c_S * eta_mux * eta_herald / n_mean`.
pub fn rescale_signal(c_signal: f64, eta_mux: f64, eta_herald: f64, n_mean: f64) -> Result<f64> {
    if !(n_mean > 0.0) {
        return Err(Error::Domain(format!("mean photon number must be positive, got {n_mean}")));
    }
    Ok(c_signal * eta_mux * eta_herald / n_mean)
}

/// `(c_tilde - c_B) / c_B`; infinite when `c_B` is zero.
pub fn adjusted_snr(c_tilde: f64, c_noise: f64) -> f64 {
    if c_noise > 0.0 {
        (c_tilde - c_noise) / c_noise
    } else {
        f64::INFINITY
    }
}

/// Idler-echo cross-correlation inferred from the adjusted SNR and the
/// signal-idler correlation of the source.
pub fn g2_inferred(snr_adj: f64, g2_source: f64) -> Result<f64> {
    if !(g2_source >= 1.0) {
        return Err(Error::Domain(format!("g2_source must be at least 1, got {g2_source}")));
    }
    if !(snr_adj >= 0.0) {
        return Err(Error::Domain(format!("adjusted SNR must be non-negative, got {snr_adj}")));
    }
    if snr_adj.is_infinite() {
        return Ok(g2_source);
    }
    Ok(g2_source * (snr_adj + 1.0) / (g2_source + snr_adj))
}

/// Upper bound on the entangled-state fidelity for a given cross-correlation.
pub fn fidelity_bound(g2: f64) -> Result<f64> {
    if !(g2 >= 1.0) {
        return Err(Error::Domain(format!("g2 must be at least 1, got {g2}")));
    }
    if g2.is_infinite() {
        return Ok(1.0);
    }
    Ok(0.75 * (g2 - 1.0) / (g2 + 1.0) + 0.25)
}

fn d_g2_d_snr(snr_adj: f64, g2_source: f64) -> f64 {
    g2_source * (g2_source - 1.0) / (g2_source + snr_adj).powi(2)
}

fn d_fidelity_d_g2(g2: f64) -> f64 {
    1.5 / (g2 + 1.0).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkProjection {
    pub cell_id: u32,
    pub c_signal_rescaled: f64,
    pub snr_adjusted: f64,
    pub snr_adjusted_err: f64,
    pub g2_inferred: f64,
    pub g2_err: f64,
    pub fidelity: f64,
    pub fidelity_err: f64,
    /// The rescaled signal does not exceed the noise; g2 and fidelity are
    /// evaluated at zero adjusted SNR.
    pub below_noise: bool,
}

/// Projection of one spatial mode from its average signal and noise rates.
pub fn project_mode(
    cell_id: u32,
    c_signal: f64,
    err_signal: f64,
    c_noise: f64,
    err_noise: f64,
    eta_mux: f64,
    storage: &StorageConfig,
) -> Result<NetworkProjection> {
    let scale = rescale_signal(1.0, eta_mux, storage.eta_herald, storage.mean_photon_number)?;
    let c_tilde = c_signal * scale;
    let snr_adj = adjusted_snr(c_tilde, c_noise);
    let snr_adj_err = ratio_with_err(c_tilde, err_signal * scale, c_noise, err_noise)
        .map(|(_, e)| e)
        .unwrap_or(f64::NAN);
    let below_noise = snr_adj < 0.0;
    let s = snr_adj.max(0.0);
    let g2 = g2_inferred(s, storage.g2_source)?;
    let g2_err = if below_noise {
        0.0
    } else {
        d_g2_d_snr(s, storage.g2_source) * snr_adj_err
    };
    let fidelity = fidelity_bound(g2)?;
    Ok(NetworkProjection {
        cell_id,
        c_signal_rescaled: c_tilde,
        snr_adjusted: snr_adj,
        snr_adjusted_err: snr_adj_err,
        g2_inferred: g2,
        g2_err,
        fidelity,
        fidelity_err: d_fidelity_d_g2(g2) * g2_err,
        below_noise,
    })
}

/// Projects every spatial mode, taking each cell's multiplexer efficiency
/// from `device`.
pub fn project_network(
    spatial: &[SpatialModeStats],
    device: &ArrayDevice,
    storage: &StorageConfig,
) -> Result<Vec<NetworkProjection>> {
    spatial
        .iter()
        .map(|s| {
            let cell = device
                .cell(s.cell_id)
                .ok_or_else(|| Error::Config(format!("device has no cell {}", s.cell_id)))?;
            project_mode(
                s.cell_id,
                s.c_signal,
                s.err_signal,
                s.c_noise,
                s.err_noise,
                cell.eta_mux,
                storage,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTalkMatrix {
    pub cells: Vec<u32>,
    /// `c[i][j] = c_ij / c_ii`, `None` for invalid rows.
    pub c: Vec<Vec<Option<f64>>>,
    pub err: Vec<Vec<Option<f64>>>,
    pub mean_offdiagonal: f64,
    pub mean_offdiagonal_err: f64,
    pub max_offdiagonal: f64,
    /// `n_ii / c_ii` with error, per cell.
    pub noise_contribution: Vec<Option<(f64, f64)>>,
    /// Cells whose matched count `c_ii` was zero.
    pub invalid_rows: Vec<u32>,
}

/// Normalizes a cross-talk scan by its matched diagonal.
pub fn crosstalk_matrix(scan: &CrossTalkScan, noise_diag: &TrialCounts) -> Result<CrossTalkMatrix> {
    let n = scan.cells.len();
    let mut c = vec![vec![None; n]; n];
    let mut err = vec![vec![None; n]; n];
    let mut noise_contribution = vec![None; n];
    let mut invalid_rows = Vec::new();
    let (mut sum, mut var, mut count, mut max) = (0.0, 0.0, 0usize, 0.0f64);

    let pair_rate = |i: u32, j: u32| -> Result<(f64, f64)> {
        let t = scan
            .total(i, j)
            .ok_or_else(|| Error::ModeMismatch(format!("cross-talk scan lacks pair ({i}, {j})")))?;
        Ok(rate(t, scan.n_trials))
    };

    for (a, &i) in scan.cells.iter().enumerate() {
        let (c_ii, e_ii) = pair_rate(i, i)?;
        if c_ii <= 0.0 {
            invalid_rows.push(i);
            for b in 0..n {
                pair_rate(i, scan.cells[b])?;
            }
            continue;
        }
        for (b, &j) in scan.cells.iter().enumerate() {
            let (c_ij, e_ij) = pair_rate(i, j)?;
            if i == j {
                c[a][b] = Some(1.0);
                err[a][b] = Some(0.0);
                continue;
            }
            let (r, e) = ratio_with_err(c_ij, e_ij, c_ii, e_ii).expect("c_ii > 0");
            c[a][b] = Some(r);
            err[a][b] = Some(e);
            sum += r;
            var += e * e;
            count += 1;
            max = max.max(r);
        }
        let mode = ModeKey {
            cell_id: i,
            temporal_index: 1,
        };
        let n_ii = noise_diag
            .total(mode)
            .ok_or_else(|| Error::ModeMismatch(format!("noise run lacks diagonal mode {mode}")))?;
        let (b, eb) = rate(n_ii, noise_diag.n_trials);
        noise_contribution[a] = ratio_with_err(b, eb, c_ii, e_ii);
    }
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    let mean_err = if count > 0 { var.sqrt() / count as f64 } else { 0.0 };
    Ok(CrossTalkMatrix {
        cells: scan.cells.clone(),
        c,
        err,
        mean_offdiagonal: mean,
        mean_offdiagonal_err: mean_err,
        max_offdiagonal: max,
        noise_contribution,
        invalid_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{ModeCount, RunKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn counts(kind: RunKind, n: u64, totals: &[(u32, u32, u64)]) -> TrialCounts {
        TrialCounts {
            kind,
            n_trials: n,
            counts: totals
                .iter()
                .map(|&(c, k, total)| ModeCount {
                    mode: ModeKey {
                        cell_id: c,
                        temporal_index: k,
                    },
                    total,
                })
                .collect(),
        }
    }

    #[test]
    fn per_mode_rates_and_snr() {
        let s = counts(RunKind::Signal, 10_000, &[(1, 1, 1000)]);
        let b = counts(RunKind::NoiseOnly, 10_000, &[(1, 1, 100)]);
        let st = per_mode_stats(&s, &b).unwrap();
        assert_abs_diff_eq!(st[0].c_signal, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(st[0].c_noise, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(st[0].snr, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(st[0].err_signal, 0.00316, epsilon = 5e-6);
        // SNR error: 10 * sqrt(1/1000 + 1/100)
        assert_abs_diff_eq!(st[0].snr_err, 10.0 * (0.001f64 + 0.01).sqrt(), epsilon = 1e-12);
        let ex = per_mode_stats_with(&s, &b, SnrDefinition::Excess).unwrap();
        assert_abs_diff_eq!(ex[0].snr, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_runs_have_unit_snr() {
        let s = counts(RunKind::Signal, 500, &[(1, 1, 7), (1, 2, 30), (2, 1, 12)]);
        for st in per_mode_stats(&s, &s).unwrap() {
            assert_eq!(st.snr, 1.0);
        }
    }

    #[test]
    fn zero_noise_flags_infinite_snr() {
        let s = counts(RunKind::Signal, 100, &[(1, 1, 5)]);
        let b = counts(RunKind::NoiseOnly, 100, &[(1, 1, 0)]);
        let st = per_mode_stats(&s, &b).unwrap();
        assert!(st[0].snr.is_infinite() && st[0].snr_infinite);
    }

    #[test]
    fn mismatched_modes_are_named() {
        let s = counts(RunKind::Signal, 100, &[(1, 1, 5), (1, 2, 5)]);
        let b = counts(RunKind::NoiseOnly, 100, &[(1, 1, 1), (3, 1, 1)]);
        match per_mode_stats(&s, &b) {
            Err(Error::ModeMismatch(m)) => {
                assert!(m.contains("(1, 2)"), "{m}");
                assert!(m.contains("(3, 1)"), "{m}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(cumulative_counts(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        let c = cumulative_counts(&[0.01, 0.02, 0.03]);
        assert_abs_diff_eq!(c[0], 0.01);
        assert_abs_diff_eq!(c[1], 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], 0.06, epsilon = 1e-15);
    }

    #[test]
    fn rescale_examples() {
        assert_abs_diff_eq!(rescale_signal(0.001, 0.90, 0.7, 1.03).unwrap(), 6.12e-4, epsilon = 5e-7);
        assert_eq!(rescale_signal(0.25, 1.0, 1.0, 1.0).unwrap(), 0.25);
        assert!(matches!(rescale_signal(0.1, 0.9, 0.7, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn adjusted_snr_examples() {
        assert_eq!(adjusted_snr(2.0e-4, 1.0e-4), 1.0);
        assert_eq!(adjusted_snr(1.0e-4, 1.0e-4), 0.0);
        assert_abs_diff_eq!(adjusted_snr(11.0e-4, 1.0e-4), 10.0, epsilon = 1e-12);
        assert!(adjusted_snr(1.0, 0.0).is_infinite());
    }

    #[test]
    fn g2_and_fidelity_examples() {
        assert_eq!(g2_inferred(0.0, 100.0).unwrap(), 1.0);
        assert_abs_diff_eq!(g2_inferred(10.0, 100.0).unwrap(), 10.0, epsilon = 1e-12);
        assert_eq!(g2_inferred(f64::INFINITY, 100.0).unwrap(), 100.0);
        assert!(g2_inferred(-0.5, 100.0).is_err());
        assert!(g2_inferred(1.0, 0.5).is_err());
        assert_eq!(fidelity_bound(1.0).unwrap(), 0.25);
        assert_abs_diff_eq!(fidelity_bound(10.0).unwrap(), 0.75 * 9.0 / 11.0 + 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_bound(10.0).unwrap(), 0.8636, epsilon = 5e-5);
        assert!(matches!(fidelity_bound(0.9), Err(Error::Domain(_))));
    }

    #[test]
    fn projection_error_matches_finite_difference() {
        let storage = StorageConfig {
            tau_us: 10.0,
            t_spin_us: 15.5,
            n_temporal: 6,
            mean_photon_number: 1.03,
            input_shape: crate::device::PulseShape::new(crate::device::PulseKind::Gaussian, 351.0),
            detection_window_ns: 351.0,
            eta_herald: 0.7,
            g2_source: 100.0,
        };
        let (cs, es, cb, eb) = (2.0e-3, 4.0e-5, 8.0e-5, 6.0e-6);
        let p = project_mode(1, cs, es, cb, eb, 0.9, &storage).unwrap();
        let f = |cs: f64, cb: f64| {
            let q = project_mode(1, cs, 0.0, cb, 0.0, 0.9, &storage).unwrap();
            (q.g2_inferred, q.fidelity)
        };
        let h = 1e-9;
        let dg_ds = (f(cs + h, cb).0 - f(cs - h, cb).0) / (2.0 * h);
        let dg_db = (f(cs, cb + h).0 - f(cs, cb - h).0) / (2.0 * h);
        let df_ds = (f(cs + h, cb).1 - f(cs - h, cb).1) / (2.0 * h);
        let df_db = (f(cs, cb + h).1 - f(cs, cb - h).1) / (2.0 * h);
        let g2_err = ((dg_ds * es).powi(2) + (dg_db * eb).powi(2)).sqrt();
        let f_err = ((df_ds * es).powi(2) + (df_db * eb).powi(2)).sqrt();
        assert_abs_diff_eq!(p.g2_err, g2_err, epsilon = 1e-4 * g2_err);
        assert_abs_diff_eq!(p.fidelity_err, f_err, epsilon = 1e-4 * f_err);
    }

    fn scan(n: u64, table: &[[u64; 3]; 3]) -> CrossTalkScan {
        let mut entries = BTreeMap::new();
        for i in 0..3 {
            for j in 0..3 {
                let (ci, cj) = (i as u32 + 1, j as u32 + 1);
                entries.insert(
                    (ci, cj),
                    counts(
                        RunKind::CrossTalk {
                            input_cell: ci,
                            output_cell: cj,
                        },
                        n,
                        &[(cj, 1, table[i][j])],
                    ),
                );
            }
        }
        CrossTalkScan {
            cells: vec![1, 2, 3],
            n_trials: n,
            entries,
        }
    }

    #[test]
    fn crosstalk_ratios() {
        let s = scan(1000, &[[100, 5, 0], [0, 50, 0], [0, 0, 0]]);
        let noise = counts(RunKind::NoiseOnly, 2000, &[(1, 1, 10), (2, 1, 4), (3, 1, 0)]);
        let m = crosstalk_matrix(&s, &noise).unwrap();
        assert_abs_diff_eq!(m.c[0][1].unwrap(), 0.05, epsilon = 1e-15);
        assert_eq!(m.c[0][0], Some(1.0));
        assert_eq!(m.c[1][1], Some(1.0));
        assert_eq!(m.invalid_rows, vec![3]);
        assert!(m.c[2].iter().all(Option::is_none));
        assert_abs_diff_eq!(m.mean_offdiagonal, 0.05 / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.max_offdiagonal, 0.05, epsilon = 1e-15);
        // n_11 / c_11 = (10 / 2000) / (100 / 1000)
        assert_abs_diff_eq!(m.noise_contribution[0].unwrap().0, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn identity_scan_is_unit_diagonal() {
        let s = scan(100, &[[40, 0, 0], [0, 30, 0], [0, 0, 20]]);
        let noise = counts(RunKind::NoiseOnly, 100, &[(1, 1, 0), (2, 1, 0), (3, 1, 0)]);
        let m = crosstalk_matrix(&s, &noise).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(m.c[a][b], Some(if a == b { 1.0 } else { 0.0 }));
            }
        }
        assert_eq!(m.mean_offdiagonal, 0.0);
    }

    proptest! {
        #[test]
        fn g2_monotone_and_bounded(a in 0.0f64..1e4, d in 1e-6f64..1e3, g in 1.0f64..1e3) {
            let lo = g2_inferred(a, g).unwrap();
            let hi = g2_inferred(a + d, g).unwrap();
            prop_assert!(hi >= lo);
            prop_assert!(hi <= g * (1.0 + 1e-12));
            prop_assert!(lo >= 1.0 - 1e-12);
        }

        #[test]
        fn fidelity_monotone_with_classical_bound(g in 1.0f64..1e3, d in 1e-3f64..10.0) {
            let f = fidelity_bound(g).unwrap();
            prop_assert!(fidelity_bound(g + d).unwrap() > f);
            prop_assert!((0.25..1.0).contains(&f));
            prop_assert_eq!(f > 0.5, g > 2.0);
        }

        #[test]
        fn cumulative_is_additive(a in prop::collection::vec(0.0f64..1.0, 1..40), b in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let joined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
            let whole = cumulative_counts(&joined);
            let ca = cumulative_counts(&a);
            let cb = cumulative_counts(&b);
            let expect = ca.last().unwrap() + cb.last().unwrap();
            prop_assert!((whole.last().unwrap() - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }
}
