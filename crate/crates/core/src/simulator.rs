//! Seeded Monte Carlo detection counts.
//!
//! Each storage trial draws one Poisson count per spatio-temporal mode from
//! the summed signal and noise expectation. Trial `k` always draws from
//! ChaCha8 stream `k` of the run seed, so totals do not depend on how the
//! trials are split across worker threads.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{spin_wave_efficiency, window_capture_fraction, ArrayDevice, CellParams, StorageConfig};
use crate::error::{Error, Result};
use crate::sequence::{compile_plan, EventKind, SequencePlan, Timeline, TimingConstraints, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Constant background per detection window.
    pub base_noise_per_window: f64,
    /// Extra control-pulse fluorescence per window right after the second pulse.
    pub fluorescence_amplitude: f64,
    pub fluorescence_decay_us: f64,
    /// Expected counts per window keyed by `(input_cell, output_cell)`.
    pub offresonant_echo_leak: BTreeMap<(u32, u32), f64>,
    pub dark_rate_hz: f64,
}

impl NoiseParams {
    pub fn silent() -> Self {
        Self {
            base_noise_per_window: 0.0,
            fluorescence_amplitude: 0.0,
            fluorescence_decay_us: 1.0,
            offresonant_echo_leak: BTreeMap::new(),
            dark_rate_hz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("base_noise_per_window", self.base_noise_per_window),
            ("fluorescence_amplitude", self.fluorescence_amplitude),
            ("dark_rate_hz", self.dark_rate_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.fluorescence_decay_us > 0.0) {
            return Err(Error::Config(format!(
                "fluorescence_decay_us must be positive, got {}",
                self.fluorescence_decay_us
            )));
        }
        for (&(i, j), &v) in &self.offresonant_echo_leak {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "offresonant_echo_leak ({i}, {j}) must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Dark counts in one window of `window_us`.
    pub fn dark_per_window(&self, window_us: f64) -> f64 {
        self.dark_rate_hz * window_us * 1e-6
    }
}

/// `leak[i][j]`: fraction of cell `i` emission collected in output mode `j`.
/// Indices are 1-based cell ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageMatrix {
    n: usize,
    data: Vec<f64>,
}

impl LeakageMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "leakage row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, v) in row.into_iter().enumerate() {
                if i == j && v != 1.0 {
                    return Err(Error::Config(format!(
                        "leakage diagonal ({0}, {0}) must be 1, got {v}",
                        i + 1
                    )));
                }
                if i != j && !(0.0..1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "leakage ({}, {}) must lie in [0, 1), got {v}",
                        i + 1,
                        j + 1
                    )));
                }
                data.push(v);
            }
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, input_cell: u32, output_cell: u32) -> f64 {
        self.data[(input_cell as usize - 1) * self.n + output_cell as usize - 1]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1))
    }
}

/// One spatio-temporal mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeKey {
    pub cell_id: u32,
    pub temporal_index: u32,
}

impl fmt::Display for ModeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.cell_id, self.temporal_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunKind {
    Signal,
    NoiseOnly,
    CrossTalk { input_cell: u32, output_cell: u32 },
}

impl RunKind {
    pub fn label(self) -> &'static str {
        match self {
            RunKind::Signal => "signal",
            RunKind::NoiseOnly => "noise",
            RunKind::CrossTalk { .. } => "crosstalk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCount {
    pub mode: ModeKey,
    pub total: u64,
}

/// Summed detections per mode over `n_trials` trials, in sequence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub kind: RunKind,
    pub n_trials: u64,
    pub counts: Vec<ModeCount>,
}

impl TrialCounts {
    pub fn total(&self, mode: ModeKey) -> Option<u64> {
        self.counts.iter().find(|c| c.mode == mode).map(|c| c.total)
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeKey> + '_ {
        self.counts.iter().map(|c| c.mode)
    }
}

/// Ordered-pair cross-talk scan, row-major over `(input, output)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTalkScan {
    pub cells: Vec<u32>,
    pub n_trials: u64,
    pub entries: BTreeMap<(u32, u32), TrialCounts>,
}

impl CrossTalkScan {
    pub fn total(&self, input_cell: u32, output_cell: u32) -> Option<u64> {
        self.entries
            .get(&(input_cell, output_cell))
            .and_then(|t| t.counts.first())
            .map(|c| c.total)
    }
}

/// Seed of a run. Trial `k` uses ChaCha8 stream `k` of this seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunSeed(pub u64);

impl RunSeed {
    pub fn trial_rng(self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(trial);
        rng
    }

    /// Independent seed for a sub-run, e.g. the noise run next to a signal run.
    pub fn derive(self, tag: u64) -> RunSeed {
        // splitmix64 finalizer
        let mut z = self.0 ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RunSeed(z ^ (z >> 31))
    }
}

/// Expected detected signal per trial in one mode of `cell`.
///
/// The mean photon number is calibrated after the multiplexer, so the
/// multiplexing efficiency is not part of this product.
pub fn expected_signal_per_mode(cell: &CellParams, config: &StorageConfig, device: &ArrayDevice) -> Result<f64> {
    Ok(config.mean_photon_number
        * spin_wave_efficiency(cell, config.tau_us)?
        * cell.eta_demux
        * cell.eta_fiber
        * device.eta_detection_path
        * window_capture_fraction(&config.input_shape, config.detection_window_ns))
}

/// Control-pulse induced noise (background plus fluorescence) in `mode`,
/// without dark counts.
pub fn control_noise_per_mode(mode: ModeKey, timeline: &Timeline, noise: &NoiseParams) -> Result<f64> {
    let echo = timeline
        .find(EventKind::EchoWindow, mode.cell_id, Some(mode.temporal_index))
        .ok_or_else(|| Error::Domain(format!("mode {mode} is not in the timeline")))?;
    let cp2 = timeline
        .find(EventKind::ControlPulse2, mode.cell_id, None)
        .ok_or_else(|| Error::Domain(format!("cell {} has no second control pulse", mode.cell_id)))?;
    let dt = echo.start_us - cp2.end_us();
    Ok(noise.base_noise_per_window + noise.fluorescence_amplitude * (-dt / noise.fluorescence_decay_us).exp())
}

/// Expected noise counts per trial in `mode`: background, fluorescence
/// decaying from the end of the cell's second control pulse, and dark counts.
pub fn expected_noise_per_mode(mode: ModeKey, timeline: &Timeline, noise: &NoiseParams) -> Result<f64> {
    let echo = timeline
        .find(EventKind::EchoWindow, mode.cell_id, Some(mode.temporal_index))
        .ok_or_else(|| Error::Domain(format!("mode {mode} is not in the timeline")))?;
    Ok(control_noise_per_mode(mode, timeline, noise)? + noise.dark_per_window(echo.duration_us))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeExpectation {
    pub mode: ModeKey,
    pub signal: f64,
    pub noise: f64,
}

impl ModeExpectation {
    pub fn mean(&self, with_input: bool) -> f64 {
        if with_input {
            self.signal + self.noise
        } else {
            self.noise
        }
    }
}

/// A compiled plan bound to a device and noise model.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub plan: SequencePlan,
    pub constraints: TimingConstraints,
    pub device: ArrayDevice,
    pub noise: NoiseParams,
    timeline: Timeline,
    expectations: Vec<ModeExpectation>,
}

impl Experiment {
    pub fn new(
        plan: SequencePlan,
        constraints: TimingConstraints,
        device: ArrayDevice,
        noise: NoiseParams,
    ) -> Result<Self> {
        device.validate()?;
        noise.validate()?;
        let unknown = unknown_cells(&plan, &device);
        if !unknown.is_empty() {
            return Err(Error::Infeasible(unknown));
        }
        let timeline = compile_plan(&plan, &constraints)?;
        let mut expectations = Vec::with_capacity(plan.n_modes());
        for &c in &plan.cell_order {
            let cell = device.cell(c).expect("checked above");
            let signal = expected_signal_per_mode(cell, &plan.storage, &device)?;
            for k in 1..=plan.storage.n_temporal {
                let mode = ModeKey {
                    cell_id: c,
                    temporal_index: k,
                };
                expectations.push(ModeExpectation {
                    mode,
                    signal,
                    noise: expected_noise_per_mode(mode, &timeline, &noise)?,
                });
            }
        }
        Ok(Self {
            plan,
            constraints,
            device,
            noise,
            timeline,
            expectations,
        })
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    /// Analytic per-mode expectations, in sequence order.
    pub fn expectations(&self) -> &[ModeExpectation] {
        &self.expectations
    }

    fn distributions(&self, with_input: bool) -> Vec<Option<Poisson<f64>>> {
        self.expectations
            .iter()
            .map(|e| poisson(e.mean(with_input)))
            .collect()
    }

    /// Detections of a single trial, one entry per mode.
    pub fn sample_trial(&self, seed: RunSeed, trial: u64, with_input: bool) -> Vec<u64> {
        let dists = self.distributions(with_input);
        let mut out = vec![0; dists.len()];
        draw_into(&dists, seed.trial_rng(trial), &mut out);
        out
    }

    pub fn run_trials(&self, n_trials: u64, seed: RunSeed, with_input: bool) -> Result<TrialCounts> {
        self.run_trials_with_workers(n_trials, seed, with_input, None)
    }

    /// As [`Experiment::run_trials`], on a dedicated pool of `workers`
    /// threads when given.
    pub fn run_trials_with_workers(
        &self,
        n_trials: u64,
        seed: RunSeed,
        with_input: bool,
        workers: Option<usize>,
    ) -> Result<TrialCounts> {
        if n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        let dists = self.distributions(with_input);
        let totals = accumulate(&dists, n_trials, seed, workers)?;
        Ok(TrialCounts {
            kind: if with_input {
                RunKind::Signal
            } else {
                RunKind::NoiseOnly
            },
            n_trials,
            counts: self
                .expectations
                .iter()
                .zip(totals)
                .map(|(e, total)| ModeCount { mode: e.mode, total })
                .collect(),
        })
    }

    /// Expected counts per trial for input cell `i` collected in output `j`.
    ///
    /// Spatial leakage applies to everything the input cell emits, echo and
    /// control-pulse noise alike. Dark counts and off-resonant echoes add on
    /// top.
    pub fn expected_crosstalk(&self, leak: &LeakageMatrix, input_cell: u32, output_cell: u32) -> Result<f64> {
        let cell = self
            .device
            .cell(input_cell)
            .ok_or_else(|| Error::Config(format!("unknown cell {input_cell}")))?;
        let mode = ModeKey {
            cell_id: input_cell,
            temporal_index: 1,
        };
        let signal = expected_signal_per_mode(cell, &self.plan.storage, &self.device)?;
        let cp_noise = control_noise_per_mode(mode, &self.timeline, &self.noise)?;
        let dark = self.noise.dark_per_window(self.plan.storage.detection_window_us());
        let off = self
            .noise
            .offresonant_echo_leak
            .get(&(input_cell, output_cell))
            .copied()
            .unwrap_or(0.0);
        Ok(leak.get(input_cell, output_cell) * (signal + cp_noise) + dark + off)
    }

    /// Stores one input in cell `i` and collects mode `j`, for every ordered
    /// pair of cells in the plan.
    pub fn run_crosstalk_scan(
        &self,
        leak: &LeakageMatrix,
        n_trials: u64,
        seed: RunSeed,
        workers: Option<usize>,
    ) -> Result<CrossTalkScan> {
        if self.plan.storage.n_temporal != 1 {
            return Err(Error::Config(format!(
                "cross-talk scans use one input per trial, plan has n_temporal = {}",
                self.plan.storage.n_temporal
            )));
        }
        if n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        let cells = self.plan.cell_order.clone();
        if let Some(&c) = cells.iter().find(|&&c| c as usize > leak.size()) {
            return Err(Error::Config(format!(
                "leakage matrix is {0}x{0} but the plan uses cell {c}",
                leak.size()
            )));
        }
        let mut pairs = Vec::with_capacity(cells.len() * cells.len());
        for &i in &cells {
            for &j in &cells {
                pairs.push((i, j, self.expected_crosstalk(leak, i, j)?));
            }
        }
        let dists: Vec<_> = pairs.iter().map(|p| poisson(p.2)).collect();
        let totals = accumulate(&dists, n_trials, seed, workers)?;
        let entries = pairs
            .iter()
            .zip(totals)
            .map(|(&(i, j, _), total)| {
                (
                    (i, j),
                    TrialCounts {
                        kind: RunKind::CrossTalk {
                            input_cell: i,
                            output_cell: j,
                        },
                        n_trials,
                        counts: vec![ModeCount {
                            mode: ModeKey {
                                cell_id: j,
                                temporal_index: 1,
                            },
                            total,
                        }],
                    },
                )
            })
            .collect();
        Ok(CrossTalkScan {
            cells,
            n_trials,
            entries,
        })
    }
}

/// Cells named by `plan` that `device` does not have.
pub fn unknown_cells(plan: &SequencePlan, device: &ArrayDevice) -> Vec<Violation> {
    plan.cell_order
        .iter()
        .filter(|&&c| device.cell(c).is_none())
        .map(|&cell_id| Violation::UnknownCell { cell_id })
        .collect()
}

/// Free-function form of [`Experiment::run_trials`].
pub fn run_trials(
    plan: &SequencePlan,
    device: &ArrayDevice,
    noise: &NoiseParams,
    n_trials: u64,
    seed: RunSeed,
    with_input: bool,
) -> Result<TrialCounts> {
    Experiment::new(plan.clone(), TimingConstraints::default(), device.clone(), noise.clone())?
        .run_trials(n_trials, seed, with_input)
}

/// Free-function form of [`Experiment::run_crosstalk_scan`] for a
/// single-input `config` over every device cell.
pub fn run_crosstalk_scan(
    device: &ArrayDevice,
    leak: &LeakageMatrix,
    noise: &NoiseParams,
    config: &StorageConfig,
    n_trials: u64,
    seed: RunSeed,
) -> Result<CrossTalkScan> {
    let plan = SequencePlan {
        storage: config.clone(),
        cell_order: device.cells.iter().map(|c| c.cell_id).collect(),
        mode_period_us: None,
    };
    Experiment::new(plan, TimingConstraints::default(), device.clone(), noise.clone())?
        .run_crosstalk_scan(leak, n_trials, seed, None)
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    if mean > 0.0 {
        Some(Poisson::new(mean).expect("positive finite mean"))
    } else {
        None
    }
}

fn draw_into(dists: &[Option<Poisson<f64>>], mut rng: ChaCha8Rng, out: &mut [u64]) {
    for (slot, d) in out.iter_mut().zip(dists) {
        if let Some(d) = d {
            *slot += d.sample(&mut rng) as u64;
        }
    }
}

fn accumulate(
    dists: &[Option<Poisson<f64>>],
    n_trials: u64,
    seed: RunSeed,
    workers: Option<usize>,
) -> Result<Vec<u64>> {
    let m = dists.len();
    let work = || {
        (0..n_trials)
            .into_par_iter()
            .fold(
                || vec![0u64; m],
                |mut acc, t| {
                    draw_into(dists, seed.trial_rng(t), &mut acc);
                    acc
                },
            )
            .reduce(
                || vec![0u64; m],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    };
    match workers {
        None => Ok(work()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{AfcCalibration, PulseKind, PulseShape};
    use approx::assert_abs_diff_eq;

    fn device(cells: u32) -> ArrayDevice {
        ArrayDevice {
            cells: (1..=cells)
                .map(|i| CellParams {
                    cell_id: i,
                    eta_mux: 0.9,
                    eta_demux: 0.80,
                    eta_fiber: 0.45,
                    eta_transfer: 0.1,
                    afc_calibration: AfcCalibration::new(vec![(10.0, 0.191), (25.0, 0.079)]).unwrap(),
                    position_um: 200.0 * i as f64,
                })
                .collect(),
            cell_spacing_um: 200.0,
            input_beam_diameter_um: 80.0,
            control_beam_diameter_um: 100.0,
            eta_detection_path: 0.14,
            dark_count_rate_hz: 0.0,
        }
    }

    fn config(nt: u32, nbar: f64) -> StorageConfig {
        StorageConfig {
            tau_us: 10.0,
            t_spin_us: 15.5,
            n_temporal: nt,
            mean_photon_number: nbar,
            input_shape: PulseShape::new(PulseKind::Gaussian, 351.0),
            detection_window_ns: 351.0,
            eta_herald: 0.7,
            g2_source: 100.0,
        }
    }

    fn plan(nt: u32, cells: u32, nbar: f64) -> SequencePlan {
        SequencePlan {
            storage: config(nt, nbar),
            cell_order: (1..=cells).collect(),
            mode_period_us: None,
        }
    }

    #[test]
    fn signal_expectation_six_factors() {
        let d = device(1);
        // spin-wave 0.191 * 0.1 = 0.0191
        let s = expected_signal_per_mode(&d.cells[0], &config(1, 1.03), &d).unwrap();
        let capture = window_capture_fraction(&PulseShape::new(PulseKind::Gaussian, 351.0), 351.0);
        assert_abs_diff_eq!(s, 1.03 * 0.0191 * 0.80 * 0.45 * 0.14 * capture, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 7.545e-4, epsilon = 5e-8);
        assert_eq!(expected_signal_per_mode(&d.cells[0], &config(1, 0.0), &d).unwrap(), 0.0);
    }

    #[test]
    fn noise_without_fluorescence_is_flat() {
        let noise = NoiseParams {
            base_noise_per_window: 1e-4,
            dark_rate_hz: 20.0,
            ..NoiseParams::silent()
        };
        let e = Experiment::new(plan(6, 2, 1.0), TimingConstraints::default(), device(2), noise).unwrap();
        let expected = 1e-4 + 20.0 * 0.351e-6;
        for m in e.expectations() {
            assert_abs_diff_eq!(m.noise, expected, epsilon = 1e-18);
        }
    }

    #[test]
    fn fluorescence_peaks_right_after_second_pulse() {
        let noise = NoiseParams {
            base_noise_per_window: 1e-4,
            fluorescence_amplitude: 3e-4,
            fluorescence_decay_us: 3.0,
            dark_rate_hz: 10.0,
            ..NoiseParams::silent()
        };
        let e = Experiment::new(plan(6, 1, 1.0), TimingConstraints::default(), device(1), noise).unwrap();
        let first = ModeKey {
            cell_id: 1,
            temporal_index: 1,
        };
        // default packing puts the first echo exactly at the end of the second pulse
        let n = expected_noise_per_mode(first, e.timeline(), &e.noise).unwrap();
        assert_abs_diff_eq!(n, 1e-4 + 3e-4 + 10.0 * 0.351e-6, epsilon = 1e-15);
    }

    #[test]
    fn early_modes_are_noisier() {
        let noise = NoiseParams {
            base_noise_per_window: 1e-4,
            fluorescence_amplitude: 2e-4,
            fluorescence_decay_us: 3.0,
            ..NoiseParams::silent()
        };
        let e = Experiment::new(plan(6, 1, 1.0), TimingConstraints::default(), device(1), noise).unwrap();
        let n: Vec<f64> = e.expectations().iter().map(|m| m.noise).collect();
        // oracle: exponential evaluated at dt = 0 and dt = 5 periods
        let period = 6.5 / 6.0;
        assert_abs_diff_eq!(n[0], 3e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(n[5], 1e-4 + 2e-4 * (-5.0 * period / 3.0f64).exp(), epsilon = 1e-15);
        assert!(n[0] > n[5]);
        assert!(n.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn silent_noise_run_counts_nothing() {
        let e = Experiment::new(plan(3, 2, 1.0), TimingConstraints::default(), device(2), NoiseParams::silent()).unwrap();
        let c = e.run_trials(1000, RunSeed(3), false).unwrap();
        assert_eq!(c.kind, RunKind::NoiseOnly);
        assert!(c.counts.iter().all(|m| m.total == 0));
    }

    #[test]
    fn zero_trials_rejected() {
        let e = Experiment::new(plan(3, 2, 1.0), TimingConstraints::default(), device(2), NoiseParams::silent()).unwrap();
        assert!(e.run_trials(0, RunSeed(3), true).is_err());
    }

    #[test]
    fn poisson_concentration_single_mode() {
        // tune the input so the one mode expects exactly 1e-3 detections per trial
        let d = device(1);
        let unit = expected_signal_per_mode(&d.cells[0], &config(1, 1.0), &d).unwrap();
        let p = plan(1, 1, 1e-3 / unit);
        let e = Experiment::new(p, TimingConstraints::default(), d, NoiseParams::silent()).unwrap();
        assert_abs_diff_eq!(e.expectations()[0].signal, 1e-3, epsilon = 1e-15);
        let c = e.run_trials(1_000_000, RunSeed(11), true).unwrap();
        let total = c.counts[0].total as f64;
        assert!((total - 1000.0).abs() <= 3.0 * 1000f64.sqrt(), "total {total}");
    }

    #[test]
    fn seeds_reproduce_and_partitioning_is_irrelevant() {
        let noise = NoiseParams {
            base_noise_per_window: 0.05,
            ..NoiseParams::silent()
        };
        let e = Experiment::new(plan(4, 3, 50.0), TimingConstraints::default(), device(3), noise).unwrap();
        let a = e.run_trials_with_workers(5000, RunSeed(9), true, Some(1)).unwrap();
        let b = e.run_trials_with_workers(5000, RunSeed(9), true, Some(4)).unwrap();
        let c = e.run_trials(5000, RunSeed(9), true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let d = e.run_trials(5000, RunSeed(10), true).unwrap();
        assert_ne!(a, d);
        // totals are the sum of the individual trials
        let mut sum = vec![0u64; e.expectations().len()];
        for t in 0..5000 {
            for (s, v) in sum.iter_mut().zip(e.sample_trial(RunSeed(9), t, true)) {
                *s += v;
            }
        }
        assert_eq!(sum, a.counts.iter().map(|m| m.total).collect::<Vec<_>>());
    }

    #[test]
    fn identity_crosstalk_without_noise_is_diagonal() {
        let e = Experiment::new(plan(1, 4, 50.0), TimingConstraints::default(), device(4), NoiseParams::silent()).unwrap();
        let scan = e.run_crosstalk_scan(&LeakageMatrix::identity(4), 2000, RunSeed(1), None).unwrap();
        for i in 1..=4 {
            for j in 1..=4 {
                let t = scan.total(i, j).unwrap();
                if i == j {
                    assert!(t > 0);
                } else {
                    assert_eq!(t, 0);
                }
            }
        }
    }

    #[test]
    fn crosstalk_diagonal_matches_signal_run_expectation() {
        let noise = NoiseParams {
            base_noise_per_window: 1e-3,
            fluorescence_amplitude: 1e-3,
            dark_rate_hz: 100.0,
            ..NoiseParams::silent()
        };
        let e = Experiment::new(plan(1, 3, 5.0), TimingConstraints::default(), device(3), noise).unwrap();
        let leak = LeakageMatrix::from_rows(vec![
            vec![1.0, 0.05, 0.0],
            vec![0.05, 1.0, 0.05],
            vec![0.0, 0.05, 1.0],
        ])
        .unwrap();
        for m in e.expectations() {
            let c = m.mode.cell_id;
            assert_abs_diff_eq!(e.expected_crosstalk(&leak, c, c).unwrap(), m.signal + m.noise, epsilon = 1e-15);
        }
    }

    #[test]
    fn crosstalk_requires_single_input() {
        let e = Experiment::new(plan(2, 2, 1.0), TimingConstraints::default(), device(2), NoiseParams::silent()).unwrap();
        assert!(e.run_crosstalk_scan(&LeakageMatrix::identity(2), 10, RunSeed(1), None).is_err());
    }

    #[test]
    fn leakage_matrix_checks() {
        assert!(LeakageMatrix::from_rows(vec![vec![1.0, 0.1], vec![0.1, 0.9]]).is_err());
        assert!(LeakageMatrix::from_rows(vec![vec![1.0, 1.0], vec![0.1, 1.0]]).is_err());
        assert!(LeakageMatrix::from_rows(vec![vec![1.0, 0.1]]).is_err());
        let m = LeakageMatrix::from_rows(vec![vec![1.0, 0.1], vec![0.2, 1.0]]).unwrap();
        assert_eq!(m.get(2, 1), 0.2);
    }

    #[test]
    fn unknown_cell_rejected() {
        let mut p = plan(1, 2, 1.0);
        p.cell_order = vec![1, 5];
        assert!(Experiment::new(p, TimingConstraints::default(), device(2), NoiseParams::silent()).is_err());
    }
}
