//! TOML schemas for the device, plan and noise files.
//!
//! Unknown keys are rejected. Parse errors carry the line reported by the
//! TOML parser; range errors name the offending key and the line it sits on.
//!
//! Device file:
//!
//! ```toml
//! cell_spacing_um = 200.0
//! input_beam_diameter_um = 80.0     # optional
//! control_beam_diameter_um = 100.0  # optional
//! eta_detection_path = 0.14
//! dark_count_rate_hz = 20.0
//!
//! [[cell]]
//! cell_id = 1
//! position_um = -900.0
//! eta_mux = 0.86
//! eta_demux = 0.84
//! eta_fiber = 0.26
//! eta_transfer = 0.30
//! afc_calibration = [[10.0, 0.170], [25.0, 0.047]]
//! ```
//!
//! Plan file keys: `tau_us`, `t_spin_us`, `n_temporal`, `mode_period_us`
//! (optional), `cell_order`, `mean_photon_number`, `detection_window_ns`,
//! `eta_herald` and `g2_source` (optional), an `[input_shape]` table with
//! `kind`, `fwhm_ns` and an optional `capture_override`, and an optional
//! `[timing]` table overriding [`TimingConstraints`].
//!
//! Noise file keys: `base_noise_per_window`, `fluorescence_amplitude`,
//! `fluorescence_decay_us`, `dark_rate_hz` (optional, falls back to the
//! device), `leakage` (optional square matrix) and any number of
//! `[[offresonant_echo_leak]]` tables with `input_cell`, `output_cell`,
//! `counts_per_window`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::device::{AfcCalibration, ArrayDevice, CellParams, PulseShape, StorageConfig};
use crate::error::{Error, Result};
use crate::sequence::{SequencePlan, TimingConstraints};
use crate::simulator::{LeakageMatrix, NoiseParams};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    cell_spacing_um: f64,
    #[serde(default = "default_input_beam")]
    input_beam_diameter_um: f64,
    #[serde(default = "default_control_beam")]
    control_beam_diameter_um: f64,
    eta_detection_path: f64,
    dark_count_rate_hz: f64,
    #[serde(rename = "cell")]
    cells: Vec<CellFile>,
}

fn default_input_beam() -> f64 {
    80.0
}

fn default_control_beam() -> f64 {
    100.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFile {
    cell_id: u32,
    position_um: f64,
    eta_mux: f64,
    eta_demux: f64,
    eta_fiber: f64,
    eta_transfer: f64,
    afc_calibration: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    tau_us: f64,
    t_spin_us: f64,
    n_temporal: u32,
    mode_period_us: Option<f64>,
    cell_order: Vec<u32>,
    mean_photon_number: f64,
    detection_window_ns: f64,
    #[serde(default = "default_eta_herald")]
    eta_herald: f64,
    #[serde(default = "default_g2_source")]
    g2_source: f64,
    input_shape: PulseShape,
    #[serde(default)]
    timing: TimingConstraints,
}

fn default_eta_herald() -> f64 {
    0.7
}

fn default_g2_source() -> f64 {
    100.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    base_noise_per_window: f64,
    fluorescence_amplitude: f64,
    fluorescence_decay_us: f64,
    dark_rate_hz: Option<f64>,
    leakage: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    offresonant_echo_leak: Vec<OffResonantFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffResonantFile {
    input_cell: u32,
    output_cell: u32,
    counts_per_window: f64,
}

/// A resolved noise file.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub params: NoiseParams,
    /// Present only in cross-talk noise files.
    pub leakage: Option<LeakageMatrix>,
}

/// A resolved plan file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub plan: SequencePlan,
    pub timing: TimingConstraints,
}

/// 1-based line of `key` inside the `nth` occurrence of `[[section]]`, or
/// among the top-level keys when `section` is `None`.
fn locate_key(text: &str, section: Option<(&str, usize)>, key: &str) -> Option<usize> {
    let mut seen = 0usize;
    let mut inside = section.is_none();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = match section {
                Some((name, nth)) if t == format!("[[{name}]]") => {
                    seen += 1;
                    seen == nth + 1
                }
                _ => false,
            };
            continue;
        }
        if inside {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn range_err(path: &Path, text: &str, section: Option<(&str, usize)>, key: &str, what: String) -> Error {
    match locate_key(text, section, key) {
        Some(line) => parse_err(path, format!("line {line}: key `{key}`: {what}")),
        None => parse_err(path, format!("key `{key}`: {what}")),
    }
}

fn from_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| parse_err(path, e.to_string().trim_end().to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn fraction(path: &Path, text: &str, section: Option<(&str, usize)>, key: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(range_err(path, text, section, key, format!("{v} is not a fraction in [0, 1]")))
    }
}

pub fn parse_device(text: &str, path: &Path) -> Result<ArrayDevice> {
    let file: DeviceFile = from_toml(text, path)?;
    let top = None;
    if file.cells.is_empty() {
        return Err(parse_err(path, "device needs at least one [[cell]] section"));
    }
    if !(file.cell_spacing_um > 0.0) {
        return Err(range_err(path, text, top, "cell_spacing_um", "must be positive".into()));
    }
    if !(file.dark_count_rate_hz >= 0.0) {
        return Err(range_err(path, text, top, "dark_count_rate_hz", "must be non-negative".into()));
    }
    let eta_detection_path = fraction(path, text, top, "eta_detection_path", file.eta_detection_path)?;
    let mut cells = Vec::with_capacity(file.cells.len());
    for (k, c) in file.cells.into_iter().enumerate() {
        let sec = Some(("cell", k));
        let afc_calibration = AfcCalibration::new(c.afc_calibration)
            .map_err(|e| range_err(path, text, sec, "afc_calibration", e.to_string()))?;
        cells.push(CellParams {
            cell_id: c.cell_id,
            eta_mux: fraction(path, text, sec, "eta_mux", c.eta_mux)?,
            eta_demux: fraction(path, text, sec, "eta_demux", c.eta_demux)?,
            eta_fiber: fraction(path, text, sec, "eta_fiber", c.eta_fiber)?,
            eta_transfer: fraction(path, text, sec, "eta_transfer", c.eta_transfer)?,
            afc_calibration,
            position_um: c.position_um,
        });
    }
    let device = ArrayDevice {
        cells,
        cell_spacing_um: file.cell_spacing_um,
        input_beam_diameter_um: file.input_beam_diameter_um,
        control_beam_diameter_um: file.control_beam_diameter_um,
        eta_detection_path,
        dark_count_rate_hz: file.dark_count_rate_hz,
    };
    device.validate().map_err(|e| parse_err(path, e.to_string()))?;
    Ok(device)
}

pub fn parse_plan(text: &str, path: &Path) -> Result<PlanConfig> {
    let file: PlanFile = from_toml(text, path)?;
    let storage = StorageConfig {
        tau_us: file.tau_us,
        t_spin_us: file.t_spin_us,
        n_temporal: file.n_temporal,
        mean_photon_number: file.mean_photon_number,
        input_shape: file.input_shape,
        detection_window_ns: file.detection_window_ns,
        eta_herald: file.eta_herald,
        g2_source: file.g2_source,
    };
    storage.validate().map_err(|e| parse_err(path, e.to_string()))?;
    file.timing.validate().map_err(|e| parse_err(path, e.to_string()))?;
    if file.cell_order.is_empty() {
        return Err(range_err(path, text, None, "cell_order", "must name at least one cell".into()));
    }
    if let Some(p) = file.mode_period_us {
        if !(p > 0.0) {
            return Err(range_err(path, text, None, "mode_period_us", "must be positive".into()));
        }
    }
    Ok(PlanConfig {
        plan: SequencePlan {
            storage,
            cell_order: file.cell_order,
            mode_period_us: file.mode_period_us,
        },
        timing: file.timing,
    })
}

/// Parses a noise file. A missing `dark_rate_hz` falls back to
/// `default_dark_rate_hz`, normally the device's detector dark rate.
pub fn parse_noise(text: &str, path: &Path, default_dark_rate_hz: f64) -> Result<NoiseConfig> {
    let file: NoiseFile = from_toml(text, path)?;
    let mut offresonant_echo_leak = BTreeMap::new();
    for (k, o) in file.offresonant_echo_leak.iter().enumerate() {
        if !(o.counts_per_window >= 0.0) {
            return Err(range_err(
                path,
                text,
                Some(("offresonant_echo_leak", k)),
                "counts_per_window",
                "must be non-negative".into(),
            ));
        }
        if offresonant_echo_leak
            .insert((o.input_cell, o.output_cell), o.counts_per_window)
            .is_some()
        {
            return Err(parse_err(
                path,
                format!(
                    "offresonant_echo_leak ({}, {}) given twice",
                    o.input_cell, o.output_cell
                ),
            ));
        }
    }
    let params = NoiseParams {
        base_noise_per_window: file.base_noise_per_window,
        fluorescence_amplitude: file.fluorescence_amplitude,
        fluorescence_decay_us: file.fluorescence_decay_us,
        offresonant_echo_leak,
        dark_rate_hz: file.dark_rate_hz.unwrap_or(default_dark_rate_hz),
    };
    params.validate().map_err(|e| parse_err(path, e.to_string()))?;
    let leakage = file
        .leakage
        .map(LeakageMatrix::from_rows)
        .transpose()
        .map_err(|e| range_err(path, text, None, "leakage", e.to_string()))?;
    Ok(NoiseConfig { params, leakage })
}

pub fn load_device(path: &Path) -> Result<(ArrayDevice, String)> {
    let text = read_text(path)?;
    Ok((parse_device(&text, path)?, text))
}

pub fn load_plan(path: &Path) -> Result<(PlanConfig, String)> {
    let text = read_text(path)?;
    Ok((parse_plan(&text, path)?, text))
}

pub fn load_noise(path: &Path, default_dark_rate_hz: f64) -> Result<(NoiseConfig, String)> {
    let text = read_text(path)?;
    Ok((parse_noise(&text, path, default_dark_rate_hz)?, text))
}

/// The configuration files shipped with the crate.
pub mod presets {
    use super::*;

    pub const DEVICE: &str = include_str!("../configs/device_default.toml");
    pub const PLAN_60: &str = include_str!("../configs/plan_60.toml");
    pub const PLAN_250: &str = include_str!("../configs/plan_250.toml");
    pub const PLAN_CROSSTALK: &str = include_str!("../configs/plan_crosstalk.toml");
    pub const NOISE_STORAGE: &str = include_str!("../configs/noise_storage.toml");
    pub const NOISE_CROSSTALK: &str = include_str!("../configs/noise_crosstalk.toml");

    /// Directory holding the shipped files on disk.
    pub fn dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
    }

    pub fn device() -> ArrayDevice {
        parse_device(DEVICE, Path::new("device_default.toml")).expect("shipped device file parses")
    }

    pub fn plan_60() -> PlanConfig {
        parse_plan(PLAN_60, Path::new("plan_60.toml")).expect("shipped plan parses")
    }

    pub fn plan_250() -> PlanConfig {
        parse_plan(PLAN_250, Path::new("plan_250.toml")).expect("shipped plan parses")
    }

    pub fn plan_crosstalk() -> PlanConfig {
        parse_plan(PLAN_CROSSTALK, Path::new("plan_crosstalk.toml")).expect("shipped plan parses")
    }

    pub fn noise_storage() -> NoiseConfig {
        parse_noise(NOISE_STORAGE, Path::new("noise_storage.toml"), device().dark_count_rate_hz)
            .expect("shipped noise file parses")
    }

    pub fn noise_crosstalk() -> NoiseConfig {
        parse_noise(NOISE_CROSSTALK, Path::new("noise_crosstalk.toml"), device().dark_count_rate_hz)
            .expect("shipped noise file parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{total_device_efficiency, PulseKind};

    fn p() -> &'static Path {
        Path::new("test.toml")
    }

    #[test]
    fn presets_parse() {
        let d = presets::device();
        assert_eq!(d.n_cells(), 10);
        assert_eq!(presets::plan_60().plan.storage.n_temporal, 6);
        assert_eq!(presets::plan_250().plan.storage.n_temporal, 25);
        let x = presets::plan_crosstalk();
        assert_eq!(x.plan.storage.input_shape.kind, PulseKind::Lorentzian);
        assert_eq!(x.plan.storage.input_shape.capture_override, Some(0.57));
        assert!(presets::noise_storage().leakage.is_none());
        assert_eq!(presets::noise_crosstalk().leakage.unwrap().size(), 10);
    }

    #[test]
    fn default_device_sits_in_measured_ranges() {
        let d = presets::device();
        let mut sum = 0.0;
        for c in &d.cells {
            let t10 = total_device_efficiency(c, 10.0).unwrap();
            let t25 = total_device_efficiency(c, 25.0).unwrap();
            assert!((0.0053..=0.026).contains(&t10), "cell {} t10 {t10}", c.cell_id);
            assert!((0.0019..=0.009).contains(&t25), "cell {} t25 {t25}", c.cell_id);
            assert!((0.86..=0.912).contains(&c.eta_mux));
            assert!((0.65..=0.92).contains(&c.eta_demux));
            assert!((0.26..=0.58).contains(&c.eta_fiber));
            assert!((0.20..=0.36).contains(&c.eta_transfer));
            let afc10 = c.afc_calibration.lookup(10.0).unwrap().efficiency;
            let afc25 = c.afc_calibration.lookup(25.0).unwrap().efficiency;
            assert!((0.134..=0.191).contains(&afc10));
            assert!((0.040..=0.079).contains(&afc25));
            sum += t10;
        }
        let mean = sum / d.n_cells() as f64;
        assert!((mean - 0.016).abs() <= 0.002, "mean total {mean}");
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = "cell_spacing_um = 200.0\neta_detection_path = 0.14\ndark_count_rate_hz = 1.0\nbogus = 3\n";
        let err = parse_device(text, p()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn range_error_names_key_and_line() {
        let mut text = presets::DEVICE.to_string();
        text = text.replacen("eta_fiber = 0.30", "eta_fiber = 1.30", 1);
        let msg = parse_device(&text, p()).unwrap_err().to_string();
        assert!(msg.contains("eta_fiber"), "{msg}");
        let line = text.lines().position(|l| l.contains("eta_fiber = 1.30")).unwrap() + 1;
        assert!(msg.contains(&format!("line {line}")), "{msg}");
    }

    #[test]
    fn empty_plan_is_a_parse_error() {
        let err = parse_plan("", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("missing field"), "{err}");
    }

    #[test]
    fn timing_overrides() {
        let text = format!("{}\n[timing]\nswitch_mux_us = 3.0\n", presets::PLAN_60);
        let cfg = parse_plan(&text, p()).unwrap();
        assert_eq!(cfg.timing.switch_mux_us, 3.0);
        assert_eq!(cfg.timing.switch_demux_us, 2.3);
        let bad = format!("{}\n[timing]\nswitch_mux = 3.0\n", presets::PLAN_60);
        assert!(parse_plan(&bad, p()).is_err());
    }

    #[test]
    fn noise_dark_rate_falls_back_to_device() {
        let text = "base_noise_per_window = 1e-5\nfluorescence_amplitude = 0.0\nfluorescence_decay_us = 1.0\n";
        let n = parse_noise(text, p(), 17.0).unwrap();
        assert_eq!(n.params.dark_rate_hz, 17.0);
        assert!(n.leakage.is_none());
    }

    #[test]
    fn bad_leakage_rejected() {
        let text = "base_noise_per_window = 0.0\nfluorescence_amplitude = 0.0\nfluorescence_decay_us = 1.0\nleakage = [[1.0, 0.1], [0.1, 0.5]]\n";
        let msg = parse_noise(text, p(), 0.0).unwrap_err().to_string();
        assert!(msg.contains("leakage") && msg.contains("line 4"), "{msg}");
    }
}
