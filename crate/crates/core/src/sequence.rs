//! Storage-sequence compiler and timeline validator.
//!
//! A [`SequencePlan`] says which cells to fill and with how many temporal
//! modes. [`compile_plan`] lays it out as concrete deflector events, cell
//! block by cell block, and [`validate_timeline`] checks any timeline against
//! the switching constraints of the four deflectors.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::StorageConfig;
use crate::error::{Error, Result};

/// Slack (µs) used for every timing comparison.
pub const TIME_EPS: f64 = 1e-9;

/// Event `cell_id` meaning "all cells at once".
pub const ALL_CELLS: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelId {
    #[serde(rename = "PrepAOD")]
    PrepAod,
    #[serde(rename = "MuxAOD")]
    MuxAod,
    #[serde(rename = "ControlAOD")]
    ControlAod,
    #[serde(rename = "DemuxAOD")]
    DemuxAod,
}

impl ChannelId {
    pub const ALL: [ChannelId; 4] = [
        ChannelId::PrepAod,
        ChannelId::MuxAod,
        ChannelId::ControlAod,
        ChannelId::DemuxAod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::PrepAod => "PrepAOD",
            ChannelId::MuxAod => "MuxAOD",
            ChannelId::ControlAod => "ControlAOD",
            ChannelId::DemuxAod => "DemuxAOD",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Prepare,
    Input,
    ControlPulse1,
    ControlPulse2,
    EchoWindow,
}

impl EventKind {
    pub fn is_control(self) -> bool {
        matches!(self, EventKind::ControlPulse1 | EventKind::ControlPulse2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub channel: ChannelId,
    pub kind: EventKind,
    pub cell_id: u32,
    /// 1-based slot for `Input` and `EchoWindow` events.
    pub temporal_index: Option<u32>,
    pub start_us: f64,
    pub duration_us: f64,
}

impl TimelineEvent {
    pub fn end_us(&self) -> f64 {
        self.start_us + self.duration_us
    }

    fn overlaps(&self, other: &TimelineEvent) -> bool {
        self.start_us < other.end_us() - TIME_EPS && other.start_us < self.end_us() - TIME_EPS
    }
}

/// Hardware timing limits of the deflectors and control pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConstraints {
    pub switch_prep_us: f64,
    pub switch_control_us: f64,
    pub switch_mux_us: f64,
    pub switch_demux_us: f64,
    pub cp_duration_us: f64,
    pub cp_chirp_mhz: f64,
    /// Storage sequences run per preparation.
    pub repeats_per_cycle: u32,
    /// Length of the single preparation event. Not a measured value.
    pub prep_duration_us: f64,
}

impl Default for TimingConstraints {
    fn default() -> Self {
        Self {
            switch_prep_us: 1.4,
            switch_control_us: 2.0,
            switch_mux_us: 2.2,
            switch_demux_us: 2.3,
            cp_duration_us: 3.5,
            cp_chirp_mhz: 3.2,
            repeats_per_cycle: 51,
            prep_duration_us: 500.0,
        }
    }
}

impl TimingConstraints {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("switch_prep_us", self.switch_prep_us),
            ("switch_control_us", self.switch_control_us),
            ("switch_mux_us", self.switch_mux_us),
            ("switch_demux_us", self.switch_demux_us),
            ("cp_duration_us", self.cp_duration_us),
            ("cp_chirp_mhz", self.cp_chirp_mhz),
            ("prep_duration_us", self.prep_duration_us),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("timing.{name} must be positive, got {v}")));
            }
        }
        if self.repeats_per_cycle == 0 {
            return Err(Error::Config("timing.repeats_per_cycle must be at least 1".into()));
        }
        Ok(())
    }

    pub fn switching_time(&self, channel: ChannelId) -> f64 {
        match channel {
            ChannelId::PrepAod => self.switch_prep_us,
            ChannelId::MuxAod => self.switch_mux_us,
            ChannelId::ControlAod => self.switch_control_us,
            ChannelId::DemuxAod => self.switch_demux_us,
        }
    }

    /// Gap between one cell's last echo and the next cell's first input:
    /// both the multiplexer and demultiplexer must retune in between.
    pub fn block_guard_us(&self) -> f64 {
        self.switch_mux_us.max(self.switch_demux_us)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub storage: StorageConfig,
    pub cell_order: Vec<u32>,
    /// Input spacing within a cell block. `None` packs the modes so the last
    /// slot ends exactly where the first control pulse begins.
    pub mode_period_us: Option<f64>,
}

impl SequencePlan {
    pub fn mode_period(&self, constraints: &TimingConstraints) -> f64 {
        self.mode_period_us.unwrap_or_else(|| {
            (self.storage.tau_us - constraints.cp_duration_us) / self.storage.n_temporal as f64
        })
    }

    pub fn n_modes(&self) -> usize {
        self.cell_order.len() * self.storage.n_temporal as usize
    }
}

/// Outcome of the capacity rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    pub modes: u32,
    pub diagnostic: Option<String>,
}

/// Number of input slots of length `mode_period` that fit between the first
/// input and the end of the first control pulse.
pub fn max_temporal_modes(tau_us: f64, mode_period_us: f64, cp_duration_us: f64) -> Capacity {
    if !(tau_us > 0.0 && mode_period_us > 0.0 && cp_duration_us > 0.0) {
        return Capacity {
            modes: 0,
            diagnostic: Some(format!(
                "non-positive timing argument (tau {tau_us}, period {mode_period_us}, cp {cp_duration_us})"
            )),
        };
    }
    if cp_duration_us >= tau_us {
        return Capacity {
            modes: 0,
            diagnostic: Some(format!(
                "control pulse ({cp_duration_us} us) does not fit inside the AFC storage time ({tau_us} us)"
            )),
        };
    }
    let slots = ((tau_us - cp_duration_us) / mode_period_us + TIME_EPS).floor();
    Capacity {
        modes: slots.max(0.0) as u32,
        diagnostic: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Capacity {
        requested: u32,
        capacity: u32,
        diagnostic: Option<String>,
    },
    DuplicateCell {
        cell_id: u32,
    },
    UnknownCell {
        cell_id: u32,
    },
    /// Two consecutive events on one channel are closer than allowed.
    Switching {
        channel: ChannelId,
        earlier: usize,
        later: usize,
        gap_us: f64,
        required_us: f64,
    },
    PrepControlOverlap {
        prepare: usize,
        control: usize,
    },
    EchoCollision {
        cell_id: u32,
        echo: usize,
        control: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Capacity {
                requested,
                capacity,
                diagnostic,
            } => {
                write!(
                    f,
                    "capacity: {requested} temporal modes requested, at most {capacity} fit"
                )?;
                if let Some(d) = diagnostic {
                    write!(f, " ({d})")?;
                }
                Ok(())
            }
            Violation::DuplicateCell { cell_id } => {
                write!(f, "cell {cell_id} appears more than once in cell_order")
            }
            Violation::UnknownCell { cell_id } => {
                write!(f, "cell {cell_id} in cell_order is not part of the device")
            }
            Violation::Switching {
                channel,
                earlier,
                later,
                gap_us,
                required_us,
            } => write!(
                f,
                "switching: {channel} events #{earlier} and #{later} are {gap_us:.4} us apart, need {required_us} us"
            ),
            Violation::PrepControlOverlap { prepare, control } => write!(
                f,
                "overlap: preparation event #{prepare} overlaps control pulse #{control}"
            ),
            Violation::EchoCollision {
                cell_id,
                echo,
                control,
            } => write!(
                f,
                "echo collision: cell {cell_id} echo window #{echo} overlaps control pulse #{control}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok: no violations");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Span of one cell block in a compiled timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBlock {
    pub cell_id: u32,
    pub first_input_us: f64,
    pub cp1_start_us: f64,
    pub cp2_end_us: f64,
    pub last_echo_end_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    events: Vec<TimelineEvent>,
    /// Filled by [`compile_plan`]; empty for hand-built timelines.
    blocks: Vec<CellBlock>,
}

impl Timeline {
    /// Builds a timeline from arbitrary events, sorted by start time.
    pub fn from_events(mut events: Vec<TimelineEvent>) -> Self {
        events.sort_by(|a, b| a.start_us.total_cmp(&b.start_us));
        Self {
            events,
            blocks: Vec::new(),
        }
    }

    pub fn events(&self) -> &[TimelineEvent] {
        &self.events
    }

    pub fn blocks(&self) -> &[CellBlock] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TimelineEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn find(&self, kind: EventKind, cell_id: u32, temporal_index: Option<u32>) -> Option<&TimelineEvent> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.cell_id == cell_id && e.temporal_index == temporal_index)
    }

    /// Writes the timeline as CSV with columns
    /// `channel,kind,cell_id,temporal_index,start_us,duration_us`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.events {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io("timeline csv", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let events = r.deserialize().collect::<Result<Vec<TimelineEvent>, _>>()?;
        Ok(Self::from_events(events))
    }
}

/// Lays out `plan` as a channel-resolved timeline.
///
/// One preparation event on all cells opens the timeline. Each cell block
/// then holds `n_temporal` inputs at the mode period, a first control pulse
/// one period after the last input, a second one `t_spin` later, and the
/// echo windows at `input + tau + t_spin`. Consecutive blocks are separated
/// by [`TimingConstraints::block_guard_us`] and any other switching limit
/// that binds. Every violated constraint is returned at once.
pub fn compile_plan(plan: &SequencePlan, constraints: &TimingConstraints) -> Result<Timeline> {
    plan.storage.validate()?;
    constraints.validate()?;
    if plan.cell_order.is_empty() {
        return Err(Error::Config("cell_order is empty".into()));
    }
    let st = &plan.storage;
    let period = plan.mode_period(constraints);
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Config(format!("mode period must be positive, got {period}")));
    }

    let mut violations = Vec::new();
    let cap = max_temporal_modes(st.tau_us, period, constraints.cp_duration_us);
    if st.n_temporal > cap.modes {
        violations.push(Violation::Capacity {
            requested: st.n_temporal,
            capacity: cap.modes,
            diagnostic: cap.diagnostic.clone(),
        });
    }
    let mut seen = Vec::new();
    for &c in &plan.cell_order {
        if seen.contains(&c) {
            violations.push(Violation::DuplicateCell { cell_id: c });
        } else {
            seen.push(c);
        }
    }

    let nt = st.n_temporal;
    let input_len = st.input_shape.duration_us();
    let window = st.detection_window_us();
    let cp = constraints.cp_duration_us;
    let delay = st.tau_us + st.t_spin_us;

    let mut events = vec![TimelineEvent {
        channel: ChannelId::PrepAod,
        kind: EventKind::Prepare,
        cell_id: ALL_CELLS,
        temporal_index: None,
        start_us: 0.0,
        duration_us: constraints.prep_duration_us,
    }];
    let mut blocks: Vec<CellBlock> = Vec::with_capacity(plan.cell_order.len());
    let mut last_input_end = f64::NEG_INFINITY;

    for &cell in &plan.cell_order {
        let t0 = match blocks.last() {
            None => constraints.prep_duration_us + constraints.switch_prep_us,
            Some(prev) => [
                prev.last_echo_end_us + constraints.block_guard_us(),
                last_input_end + constraints.switch_mux_us,
                prev.cp2_end_us + constraints.switch_control_us - nt as f64 * period,
                prev.last_echo_end_us + constraints.switch_demux_us - delay,
            ]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max),
        };
        for k in 0..nt {
            events.push(TimelineEvent {
                channel: ChannelId::MuxAod,
                kind: EventKind::Input,
                cell_id: cell,
                temporal_index: Some(k + 1),
                start_us: t0 + k as f64 * period,
                duration_us: input_len,
            });
        }
        let cp1 = t0 + nt as f64 * period;
        let cp2 = cp1 + st.t_spin_us;
        for (kind, start) in [(EventKind::ControlPulse1, cp1), (EventKind::ControlPulse2, cp2)] {
            events.push(TimelineEvent {
                channel: ChannelId::ControlAod,
                kind,
                cell_id: cell,
                temporal_index: None,
                start_us: start,
                duration_us: cp,
            });
        }
        for k in 0..nt {
            events.push(TimelineEvent {
                channel: ChannelId::DemuxAod,
                kind: EventKind::EchoWindow,
                cell_id: cell,
                temporal_index: Some(k + 1),
                start_us: t0 + k as f64 * period + delay,
                duration_us: window,
            });
        }
        last_input_end = t0 + (nt - 1) as f64 * period + input_len;
        let last_echo_end = t0 + (nt - 1) as f64 * period + delay + window;
        blocks.push(CellBlock {
            cell_id: cell,
            first_input_us: t0,
            cp1_start_us: cp1,
            cp2_end_us: cp2 + cp,
            last_echo_end_us: last_echo_end.max(cp2 + cp),
        });
    }

    let mut timeline = Timeline::from_events(events);
    timeline.blocks = blocks;
    violations.extend(validate_timeline(&timeline, constraints).violations);
    if violations.is_empty() {
        Ok(timeline)
    } else {
        Err(Error::Infeasible(violations))
    }
}

/// Checks a start-sorted timeline against the deflector constraints.
///
/// Consecutive events on a channel must not overlap, and when they address
/// different cells they must be at least that channel's switching time
/// apart. Preparation and control pulses never overlap, and no echo window
/// overlaps a control pulse on the same cell.
pub fn validate_timeline(timeline: &Timeline, constraints: &TimingConstraints) -> ValidationReport {
    let events = timeline.events();
    let mut violations = Vec::new();

    for channel in ChannelId::ALL {
        let mut prev: Option<usize> = None;
        for (i, e) in events.iter().enumerate().filter(|(_, e)| e.channel == channel) {
            if let Some(p) = prev {
                let a = &events[p];
                let gap = e.start_us - a.end_us();
                let retune = a.cell_id != e.cell_id || a.cell_id == ALL_CELLS;
                let required = if retune {
                    constraints.switching_time(channel)
                } else {
                    0.0
                };
                if gap < required - TIME_EPS {
                    violations.push(Violation::Switching {
                        channel,
                        earlier: p,
                        later: i,
                        gap_us: gap,
                        required_us: required,
                    });
                }
            }
            // keep the event that ends last as the reference
            prev = match prev {
                Some(p) if events[p].end_us() > e.end_us() => Some(p),
                _ => Some(i),
            };
        }
    }

    let preps: Vec<usize> = (0..events.len())
        .filter(|&i| events[i].channel == ChannelId::PrepAod)
        .collect();
    let controls: Vec<usize> = (0..events.len())
        .filter(|&i| events[i].channel == ChannelId::ControlAod)
        .collect();
    for &p in &preps {
        for &c in &controls {
            if events[p].overlaps(&events[c]) {
                violations.push(Violation::PrepControlOverlap {
                    prepare: p,
                    control: c,
                });
            }
        }
    }

    for (i, echo) in events.iter().enumerate().filter(|(_, e)| e.kind == EventKind::EchoWindow) {
        for &c in &controls {
            let cp = &events[c];
            if cp.kind.is_control()
                && (cp.cell_id == echo.cell_id || cp.cell_id == ALL_CELLS)
                && echo.overlaps(cp)
            {
                violations.push(Violation::EchoCollision {
                    cell_id: echo.cell_id,
                    echo: i,
                    control: c,
                });
            }
        }
    }

    ValidationReport { violations }
}

/// Span from the first event start to the last event end.
pub fn trial_duration(timeline: &Timeline) -> Result<f64> {
    let events = timeline.events();
    if events.is_empty() {
        return Err(Error::EmptyTimeline);
    }
    let start = events.iter().map(|e| e.start_us).fold(f64::INFINITY, f64::min);
    let end = events.iter().map(|e| e.end_us()).fold(f64::NEG_INFINITY, f64::max);
    Ok(end - start)
}

/// Duration of one preparation followed by `repeats_per_cycle` storage
/// sequences.
pub fn cycle_duration(timeline: &Timeline, constraints: &TimingConstraints) -> Result<f64> {
    let storage = timeline
        .events()
        .iter()
        .filter(|e| e.kind != EventKind::Prepare)
        .collect::<Vec<_>>();
    if storage.is_empty() {
        return Err(Error::EmptyTimeline);
    }
    let start = storage.iter().map(|e| e.start_us).fold(f64::INFINITY, f64::min);
    let end = storage.iter().map(|e| e.end_us()).fold(f64::NEG_INFINITY, f64::max);
    Ok(constraints.prep_duration_us
        + constraints.switch_prep_us
        + constraints.repeats_per_cycle as f64 * (end - start + constraints.block_guard_us()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{PulseKind, PulseShape};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn storage(tau: f64, t_spin: f64, nt: u32) -> StorageConfig {
        StorageConfig {
            tau_us: tau,
            t_spin_us: t_spin,
            n_temporal: nt,
            mean_photon_number: 1.03,
            input_shape: PulseShape::new(PulseKind::Gaussian, 351.0),
            detection_window_ns: 351.0,
            eta_herald: 0.7,
            g2_source: 100.0,
        }
    }

    fn plan(tau: f64, t_spin: f64, nt: u32, cells: u32) -> SequencePlan {
        SequencePlan {
            storage: storage(tau, t_spin, nt),
            cell_order: (1..=cells).collect(),
            mode_period_us: None,
        }
    }

    fn ev(channel: ChannelId, kind: EventKind, cell: u32, start: f64, dur: f64) -> TimelineEvent {
        TimelineEvent {
            channel,
            kind,
            cell_id: cell,
            temporal_index: None,
            start_us: start,
            duration_us: dur,
        }
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(max_temporal_modes(10.0, 1.0833, 3.5).modes, 6);
        assert_eq!(max_temporal_modes(25.0, 0.86, 3.5).modes, 25);
        assert_eq!(max_temporal_modes(10.0, 20.0, 3.5).modes, 0);
        let c = max_temporal_modes(3.0, 0.5, 3.5);
        assert_eq!(c.modes, 0);
        assert!(c.diagnostic.is_some());
        // default packing is exactly feasible despite rounding
        assert_eq!(max_temporal_modes(10.0, 6.5 / 6.0, 3.5).modes, 6);
        assert_eq!(max_temporal_modes(25.0, 21.5 / 25.0, 3.5).modes, 25);
    }

    #[test]
    fn sixty_mode_plan_compiles() {
        let c = TimingConstraints::default();
        let t = compile_plan(&plan(10.0, 15.5, 6, 10), &c).unwrap();
        assert_eq!(t.of_kind(EventKind::Input).count(), 60);
        assert_eq!(t.of_kind(EventKind::EchoWindow).count(), 60);
        assert_eq!(t.of_kind(EventKind::Prepare).count(), 1);
        assert!(validate_timeline(&t, &c).is_clean());
    }

    #[test]
    fn single_mode_echo_delay() {
        let c = TimingConstraints::default();
        let t = compile_plan(&plan(10.0, 15.5, 1, 1), &c).unwrap();
        let input = t.find(EventKind::Input, 1, Some(1)).unwrap();
        let echoes: Vec<_> = t.of_kind(EventKind::EchoWindow).collect();
        assert_eq!(echoes.len(), 1);
        assert_abs_diff_eq!(echoes[0].start_us, input.start_us + 25.5, epsilon = 1e-12);
    }

    #[test]
    fn two_fifty_mode_plan_compiles() {
        let c = TimingConstraints::default();
        let t = compile_plan(&plan(25.0, 20.0, 25, 10), &c).unwrap();
        assert_eq!(t.of_kind(EventKind::EchoWindow).count(), 250);
        assert!(validate_timeline(&t, &c).is_clean());
    }

    #[test]
    fn over_capacity_plan_lists_violations() {
        let c = TimingConstraints::default();
        let mut p = plan(10.0, 15.5, 7, 2);
        p.mode_period_us = Some(1.0833);
        match compile_plan(&p, &c) {
            Err(Error::Infeasible(v)) => {
                assert!(v.iter().any(|v| matches!(v, Violation::Capacity { requested: 7, capacity: 6, .. })));
                assert!(v.iter().any(|v| matches!(v, Violation::EchoCollision { .. })));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_cells_rejected() {
        let c = TimingConstraints::default();
        let mut p = plan(10.0, 15.5, 2, 2);
        p.cell_order = vec![1, 2, 1];
        assert!(matches!(compile_plan(&p, &c), Err(Error::Infeasible(v)) if v.contains(&Violation::DuplicateCell { cell_id: 1 })));
    }

    #[test]
    fn short_spin_storage_collides_on_control_channel() {
        let c = TimingConstraints::default();
        let p = plan(10.0, 1.0, 2, 1);
        assert!(matches!(compile_plan(&p, &c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn empty_timeline_is_clean() {
        let r = validate_timeline(&Timeline::default(), &TimingConstraints::default());
        assert!(r.is_clean());
    }

    #[test]
    fn mux_retune_too_fast() {
        let c = TimingConstraints::default();
        let t = Timeline::from_events(vec![
            ev(ChannelId::MuxAod, EventKind::Input, 1, 0.0, 0.0 + 1e-6),
            ev(ChannelId::MuxAod, EventKind::Input, 2, 1.0, 0.351),
        ]);
        let r = validate_timeline(&t, &c);
        assert_eq!(r.violations.len(), 1);
        match &r.violations[0] {
            Violation::Switching { channel, required_us, .. } => {
                assert_eq!(*channel, ChannelId::MuxAod);
                assert_eq!(*required_us, 2.2);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn prep_and_control_must_not_overlap() {
        let c = TimingConstraints::default();
        let t = Timeline::from_events(vec![
            ev(ChannelId::PrepAod, EventKind::Prepare, ALL_CELLS, 0.0, 10.0),
            ev(ChannelId::ControlAod, EventKind::ControlPulse1, 1, 5.0, 3.5),
        ]);
        let r = validate_timeline(&t, &c);
        assert!(matches!(r.violations.as_slice(), [Violation::PrepControlOverlap { .. }]));
    }

    #[test]
    fn echo_over_control_on_same_cell_only() {
        let c = TimingConstraints::default();
        let same = Timeline::from_events(vec![
            ev(ChannelId::ControlAod, EventKind::ControlPulse2, 3, 0.0, 3.5),
            ev(ChannelId::DemuxAod, EventKind::EchoWindow, 3, 3.0, 0.351),
        ]);
        assert_eq!(validate_timeline(&same, &c).violations.len(), 1);
        let other = Timeline::from_events(vec![
            ev(ChannelId::ControlAod, EventKind::ControlPulse2, 4, 0.0, 3.5),
            ev(ChannelId::DemuxAod, EventKind::EchoWindow, 3, 3.0, 0.351),
        ]);
        assert!(validate_timeline(&other, &c).is_clean());
    }

    #[test]
    fn trial_duration_examples() {
        let one = Timeline::from_events(vec![ev(ChannelId::ControlAod, EventKind::ControlPulse1, 1, 4.0, 3.5)]);
        assert_abs_diff_eq!(trial_duration(&one).unwrap(), 3.5);
        let two = Timeline::from_events(vec![
            ev(ChannelId::MuxAod, EventKind::Input, 1, 10.0, 2.0),
            ev(ChannelId::MuxAod, EventKind::Input, 1, 0.0, 2.0),
        ]);
        assert_abs_diff_eq!(trial_duration(&two).unwrap(), 12.0);
        assert!(matches!(trial_duration(&Timeline::default()), Err(Error::EmptyTimeline)));
    }

    #[test]
    fn trial_duration_equals_sum_of_block_strides() {
        let c = TimingConstraints::default();
        let t = compile_plan(&plan(25.0, 20.0, 25, 10), &c).unwrap();
        let blocks = t.blocks();
        assert_eq!(blocks.len(), 10);
        // oracle: every block has the same span, blocks are one guard apart
        let span = blocks[0].last_echo_end_us - blocks[0].first_input_us;
        let expected = c.prep_duration_us + c.switch_prep_us + 10.0 * span + 9.0 * c.block_guard_us();
        assert_abs_diff_eq!(trial_duration(&t).unwrap(), expected, epsilon = 1e-9);
        // first input to last echo: 24 periods + tau + T_s + window
        assert_abs_diff_eq!(span, 24.0 * 0.86 + 45.0 + 0.351, epsilon = 1e-9);
    }

    #[test]
    fn timeline_csv_roundtrip() {
        let c = TimingConstraints::default();
        let t = compile_plan(&plan(10.0, 15.5, 2, 2), &c).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("channel,kind,cell_id,temporal_index,start_us,duration_us\n"));
        assert!(text.contains("PrepAOD,Prepare,0,,0.0,500.0"));
        let back = Timeline::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.events(), t.events());
    }

    fn feasible_plan() -> impl Strategy<Value = SequencePlan> {
        (4.0f64..40.0, 1u32..=12, 0.0f64..30.0, 1usize..=10, prop::bool::ANY).prop_map(
            |(tau, nt, extra_spin, cells, shuffle)| {
                let cp = 3.5;
                // keep one slot per mode and at least one pulse length per slot
                let nt = nt.min(((tau - cp) / 0.4).floor() as u32).max(1);
                let mut p = plan(tau, cp + 2.0 + extra_spin, nt, cells as u32);
                if shuffle {
                    p.cell_order.reverse();
                }
                p
            },
        )
    }

    proptest! {
        #[test]
        fn compiled_plans_validate_clean(p in feasible_plan()) {
            let c = TimingConstraints::default();
            let t = compile_plan(&p, &c).unwrap();
            prop_assert!(validate_timeline(&t, &c).is_clean());
        }

        #[test]
        fn echoes_are_fifo_and_delayed(p in feasible_plan()) {
            let c = TimingConstraints::default();
            let t = compile_plan(&p, &c).unwrap();
            let delay = p.storage.tau_us + p.storage.t_spin_us;
            for &cell in &p.cell_order {
                let inputs: Vec<_> = t.events().iter().filter(|e| e.kind == EventKind::Input && e.cell_id == cell).collect();
                let echoes: Vec<_> = t.events().iter().filter(|e| e.kind == EventKind::EchoWindow && e.cell_id == cell).collect();
                prop_assert_eq!(inputs.len(), echoes.len());
                let in_order: Vec<_> = inputs.iter().map(|e| e.temporal_index).collect();
                let out_order: Vec<_> = echoes.iter().map(|e| e.temporal_index).collect();
                prop_assert_eq!(in_order, out_order);
                for e in &echoes {
                    let i = t.find(EventKind::Input, cell, e.temporal_index).unwrap();
                    prop_assert_eq!(e.start_us, i.start_us + delay);
                }
            }
        }

        #[test]
        fn over_capacity_always_rejected(tau in 4.0f64..40.0, period in 0.4f64..3.0, extra in 1u32..5) {
            let c = TimingConstraints::default();
            let cap = max_temporal_modes(tau, period, c.cp_duration_us).modes;
            let mut p = plan(tau, 10.0, cap + extra, 2);
            p.mode_period_us = Some(period);
            let rejected = matches!(compile_plan(&p, &c), Err(Error::Infeasible(_)));
            prop_assert!(rejected);
        }
    }
}
