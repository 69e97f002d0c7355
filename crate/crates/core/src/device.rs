//! Physical parameterization of the memory array.
//!
//! Every efficiency here is a phenomenological input measured with classical
//! light. The functions in this module combine them into the efficiency
//! cascade seen by a stored photon; none of them model the comb itself.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Relative slack used when comparing calibration abscissae.
const TAU_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    Gaussian,
    Lorentzian,
    Square,
}

/// Temporal intensity envelope of an input pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseShape {
    pub kind: PulseKind,
    pub fwhm_ns: f64,
    /// Measured fraction of the pulse inside the detection window. When set
    /// it replaces the analytic window integral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_override: Option<f64>,
}

impl PulseShape {
    pub fn new(kind: PulseKind, fwhm_ns: f64) -> Self {
        Self {
            kind,
            fwhm_ns,
            capture_override: None,
        }
    }

    pub fn with_capture_override(mut self, fraction: f64) -> Self {
        self.capture_override = Some(fraction);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_ns > 0.0 && self.fwhm_ns.is_finite()) {
            return Err(Error::Config(format!(
                "input_shape.fwhm_ns must be positive, got {}",
                self.fwhm_ns
            )));
        }
        if let Some(c) = self.capture_override {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Config(format!(
                    "input_shape.capture_override must lie in (0, 1], got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Duration of the pulse envelope in microseconds, taken as its FWHM.
    pub fn duration_us(&self) -> f64 {
        self.fwhm_ns * 1e-3
    }
}

/// Measured AFC efficiency at a handful of storage times.
///
/// Entries are kept sorted by storage time. Between two entries the
/// efficiency is interpolated as `eta0 * exp(-tau / t_eff)` through the
/// bracketing pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AfcCalibration(Vec<(f64, f64)>);

/// Result of a calibration lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfcLookup {
    pub efficiency: f64,
    /// Set when `tau` lies outside the calibrated span.
    pub extrapolated: bool,
}

impl AfcCalibration {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("afc_calibration is empty".into()));
        }
        if points.len() < 2 {
            return Err(Error::Config(
                "afc_calibration needs at least two (tau, efficiency) pairs".into(),
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(tau, eta) in &points {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!(
                    "afc_calibration storage time must be positive, got {tau}"
                )));
            }
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Config(format!(
                    "afc_calibration efficiency must lie in (0, 1], got {eta}"
                )));
            }
        }
        for pair in points.windows(2) {
            if pair[1].0 - pair[0].0 <= TAU_EPS * pair[1].0 {
                return Err(Error::Config(format!(
                    "afc_calibration has duplicate storage time {}",
                    pair[0].0
                )));
            }
            if pair[1].1 >= pair[0].1 {
                return Err(Error::Config(format!(
                    "afc_calibration must decrease with storage time ({} -> {} at tau {} -> {})",
                    pair[0].1, pair[1].1, pair[0].0, pair[1].0
                )));
            }
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.0
    }

    /// Interpolated efficiency at `tau` (µs). Extrapolation up to a factor of
    /// two beyond the calibrated span is allowed and flagged; farther out is
    /// a domain error.
    pub fn lookup(&self, tau: f64) -> Result<AfcLookup> {
        let pts = &self.0;
        if pts.is_empty() {
            return Err(Error::Config("afc_calibration is empty".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!(
                "storage time must be positive, got {tau}"
            )));
        }
        if let Some(&(_, eta)) = pts
            .iter()
            .find(|(t, _)| (t - tau).abs() <= TAU_EPS * t.abs())
        {
            return Ok(AfcLookup {
                efficiency: eta,
                extrapolated: false,
            });
        }
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if tau < first.0 / 2.0 || tau > last.0 * 2.0 {
            return Err(Error::Domain(format!(
                "storage time {tau} us is more than 2x outside the calibrated span [{}, {}]",
                first.0, last.0
            )));
        }
        let (lo, hi, extrapolated) = if tau < first.0 {
            (pts[0], pts[1], true)
        } else if tau > last.0 {
            (pts[pts.len() - 2], last, true)
        } else {
            let i = pts.partition_point(|(t, _)| *t < tau);
            (pts[i - 1], pts[i], false)
        };
        let t_eff = (hi.0 - lo.0) / (lo.1 / hi.1).ln();
        Ok(AfcLookup {
            efficiency: lo.1 * (-(tau - lo.0) / t_eff).exp(),
            extrapolated,
        })
    }
}

/// One memory cell of the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub cell_id: u32,
    pub eta_mux: f64,
    pub eta_demux: f64,
    pub eta_fiber: f64,
    /// Two-way transfer to and from the spin state.
    pub eta_transfer: f64,
    pub afc_calibration: AfcCalibration,
    pub position_um: f64,
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_mux", self.eta_mux),
            ("eta_demux", self.eta_demux),
            ("eta_fiber", self.eta_fiber),
            ("eta_transfer", self.eta_transfer),
        ] {
            check_fraction(name, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("cell {}: {m}", self.cell_id)),
                other => other,
            })?;
        }
        Ok(())
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayDevice {
    pub cells: Vec<CellParams>,
    pub cell_spacing_um: f64,
    pub input_beam_diameter_um: f64,
    pub control_beam_diameter_um: f64,
    pub eta_detection_path: f64,
    pub dark_count_rate_hz: f64,
}

impl ArrayDevice {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("device has no cells".into()));
        }
        if !(self.cell_spacing_um > 0.0) {
            return Err(Error::Config(format!(
                "cell_spacing_um must be positive, got {}",
                self.cell_spacing_um
            )));
        }
        check_fraction("eta_detection_path", self.eta_detection_path)?;
        if !(self.dark_count_rate_hz >= 0.0) {
            return Err(Error::Config(format!(
                "dark_count_rate_hz must be non-negative, got {}",
                self.dark_count_rate_hz
            )));
        }
        let n = self.cells.len() as u32;
        for (i, c) in self.cells.iter().enumerate() {
            c.validate()?;
            if c.cell_id < 1 || c.cell_id > n {
                return Err(Error::Config(format!(
                    "cell_id {} outside 1..={n}",
                    c.cell_id
                )));
            }
            for other in &self.cells[..i] {
                if other.cell_id == c.cell_id {
                    return Err(Error::Config(format!("duplicate cell_id {}", c.cell_id)));
                }
                if other.position_um == c.position_um {
                    return Err(Error::Config(format!(
                        "cells {} and {} share position {} um",
                        other.cell_id, c.cell_id, c.position_um
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn cell(&self, cell_id: u32) -> Option<&CellParams> {
        self.cells.iter().find(|c| c.cell_id == cell_id)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Storage settings shared by every cell in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageConfig {
    /// AFC storage time (µs).
    pub tau_us: f64,
    /// Spin-wave storage time (µs).
    pub t_spin_us: f64,
    /// Temporal modes per cell.
    pub n_temporal: u32,
    pub mean_photon_number: f64,
    pub input_shape: PulseShape,
    pub detection_window_ns: f64,
    /// Probability that a herald has a partner photon.
    pub eta_herald: f64,
    /// Signal-idler cross-correlation of the assumed pair source.
    pub g2_source: f64,
}

impl StorageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_us > 0.0) {
            return Err(Error::Config(format!("tau_us must be positive, got {}", self.tau_us)));
        }
        if !(self.t_spin_us >= 0.0) {
            return Err(Error::Config(format!(
                "t_spin_us must be non-negative, got {}",
                self.t_spin_us
            )));
        }
        if self.n_temporal < 1 {
            return Err(Error::Config("n_temporal must be at least 1".into()));
        }
        if !(self.mean_photon_number > 0.0) {
            return Err(Error::Config(format!(
                "mean_photon_number must be positive, got {}",
                self.mean_photon_number
            )));
        }
        if !(self.detection_window_ns > 0.0) {
            return Err(Error::Config(format!(
                "detection_window_ns must be positive, got {}",
                self.detection_window_ns
            )));
        }
        check_fraction("eta_herald", self.eta_herald)?;
        if !(self.g2_source >= 1.0) {
            return Err(Error::Config(format!(
                "g2_source must be at least 1, got {}",
                self.g2_source
            )));
        }
        self.input_shape.validate()
    }

    pub fn detection_window_us(&self) -> f64 {
        self.detection_window_ns * 1e-3
    }
}

/// AFC efficiency of `cell` at storage time `tau` (µs).
pub fn afc_efficiency_at(cell: &CellParams, tau: f64) -> Result<f64> {
    cell.afc_calibration.lookup(tau).map(|l| l.efficiency)
}

/// AFC efficiency times the two-way spin transfer.
pub fn spin_wave_efficiency(cell: &CellParams, tau: f64) -> Result<f64> {
    Ok(afc_efficiency_at(cell, tau)? * cell.eta_transfer)
}

/// Input fiber to output fiber efficiency of one cell.
pub fn total_device_efficiency(cell: &CellParams, tau: f64) -> Result<f64> {
    Ok(cell.eta_mux * spin_wave_efficiency(cell, tau)? * cell.eta_demux * cell.eta_fiber)
}

/// Fraction of the pulse energy inside a window of width `window_ns`
/// centered on the peak.
pub fn window_capture_fraction(shape: &PulseShape, window_ns: f64) -> f64 {
    if let Some(c) = shape.capture_override {
        return c;
    }
    if window_ns.is_infinite() {
        return 1.0;
    }
    let ratio = window_ns / shape.fwhm_ns;
    match shape.kind {
        // sigma = fwhm / (2 sqrt(2 ln 2)), so w / (2 sqrt(2) sigma) = ratio * sqrt(ln 2)
        PulseKind::Gaussian => erf(ratio * std::f64::consts::LN_2.sqrt()),
        PulseKind::Lorentzian => std::f64::consts::FRAC_2_PI * ratio.atan(),
        PulseKind::Square => ratio.min(1.0),
    }
}
