//! The `qmem` command line: `validate`, `run`, `analyze` and `replay`.
//!
//! Exit status is 0 on success, 1 when the inputs are well formed but
//! describe something infeasible or inconsistent, and 2 for usage and parse
//! errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    average_snr, crosstalk_matrix, cumulative_series, per_mode_stats_with, project_network, spatial_mode_stats,
    SnrDefinition,
};
use crate::config::{load_device, load_noise, load_plan, parse_device, parse_noise, parse_plan};
use crate::error::{Error, Result};
use crate::export::{self, read_counts_file, to_file, write_counts_file, CountsFile};
use crate::manifest::{compare_outputs, AnalyzeRecord, ConfigSnapshot, FileRecord, RunManifest, RunRecord};
use crate::sequence::{compile_plan, Timeline};
use crate::simulator::{unknown_cells, Experiment, RunSeed};

#[derive(Debug, Parser)]
#[command(name = "qmem", version, about = "Simulate and analyze a multiplexed AFC memory array")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a plan against a device and report timing violations.
    Validate(ValidateArgs),
    /// Simulate trials and write a counts CSV with its manifest.
    Run(RunArgs),
    /// Turn signal and noise counts into statistics CSVs.
    Analyze(AnalyzeArgs),
    /// Regenerate the outputs recorded in a manifest and compare them.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub device: PathBuf,
    /// Also write the compiled timeline here.
    #[arg(long)]
    pub timeline: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Signal,
    Noise,
    Crosstalk,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Signal => "signal",
            RunMode::Noise => "noise",
            RunMode::Crosstalk => "crosstalk",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, false).ok()
    }

    /// Tag mixed into the user seed so that signal, noise and cross-talk
    /// runs sharing a seed draw independent streams.
    pub fn stream_tag(self) -> u64 {
        match self {
            RunMode::Signal => 1,
            RunMode::Noise => 2,
            RunMode::Crosstalk => 3,
        }
    }

    pub fn counts_file(self) -> String {
        format!("{}_counts.csv", self.name())
    }

    pub fn manifest_file(self) -> String {
        format!("{}_manifest.toml", self.name())
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub device: PathBuf,
    #[arg(long)]
    pub noise: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub mode: RunMode,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to the global pool. Results do not depend
    /// on this.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Counts from a signal run, or from a cross-talk scan.
    #[arg(long)]
    pub signal: PathBuf,
    /// Counts from a noise-only run of the same plan.
    #[arg(long)]
    pub noise: PathBuf,
    /// Plan and device enable the network projection table.
    #[arg(long, requires = "device")]
    pub plan: Option<PathBuf>,
    #[arg(long, requires = "plan")]
    pub device: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SnrDefinition::Ratio)]
    pub snr_definition: SnrDefinition,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `args` and runs the command, printing to stdout and stderr.
/// Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match dispatch(&cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e, &mut std::io::stderr());
            e.exit_code()
        }
    }
}

fn report_error(e: &Error, out: &mut dyn Write) {
    let _ = writeln!(out, "error: {e}");
    if let Error::Infeasible(v) = e {
        for x in v {
            let _ = writeln!(out, "  {x}");
        }
    }
}

pub fn dispatch(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::Run(a) => cmd_run(a, out).map(|_| ()),
        Command::Analyze(a) => cmd_analyze(a, out).map(|_| ()),
        Command::Replay(a) => cmd_replay(a, out),
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) {
    let _ = writeln!(out, "{}", line.as_ref());
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, _) = load_plan(&args.plan)?;
    let (device, _) = load_device(&args.device)?;
    let mut violations = unknown_cells(&cfg.plan, &device);
    let timeline = match compile_plan(&cfg.plan, &cfg.timing) {
        Ok(t) => Some(t),
        Err(Error::Infeasible(v)) => {
            violations.extend(v);
            None
        }
        Err(e) => return Err(e),
    };
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }
    let timeline = timeline.expect("no violations");
    say(
        out,
        format!(
            "ok: {} modes over {} cells, {} events",
            cfg.plan.n_modes(),
            cfg.plan.cell_order.len(),
            timeline.events().len()
        ),
    );
    if let Some(path) = &args.timeline {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            ensure_dir(dir)?;
        }
        timeline.write_csv_file(path)?;
        say(out, format!("timeline written to {}", path.display()));
    }
    Ok(())
}

/// Builds the manifest record for a `run` from files on disk.
pub fn run_record(args: &RunArgs) -> Result<RunRecord> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    Ok(RunRecord {
        mode: args.mode.name().to_string(),
        n_trials: args.trials,
        seed: args.seed,
        stream_seed: RunSeed(args.seed).derive(args.mode.stream_tag()).0,
        workers: args.workers.map(|w| w as usize),
        plan: ConfigSnapshot::new(&args.plan, read(&args.plan)?),
        device: ConfigSnapshot::new(&args.device, read(&args.device)?),
        noise: ConfigSnapshot::new(&args.noise, read(&args.noise)?),
    })
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<RunManifest> {
    let record = run_record(args)?;
    execute_run(record, &args.out_dir, out)
}

/// Simulates the run described by `record` into `out_dir`, writing the
/// counts CSV and the manifest.
pub fn execute_run(record: RunRecord, out_dir: &Path, out: &mut dyn Write) -> Result<RunManifest> {
    let started = Instant::now();
    let mode = RunMode::parse(&record.mode)
        .ok_or_else(|| Error::Config(format!("unknown run mode `{}`", record.mode)))?;
    if record.stream_seed != RunSeed(record.seed).derive(mode.stream_tag()).0 {
        return Err(Error::Config("stream_seed does not follow from seed and mode".into()));
    }
    if record.n_trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let cfg = parse_plan(&record.plan.text, &record.plan.path)?;
    let device = parse_device(&record.device.text, &record.device.path)?;
    let noise = parse_noise(&record.noise.text, &record.noise.path, device.dark_count_rate_hz)?;
    let exp = Experiment::new(cfg.plan.clone(), cfg.timing.clone(), device, noise.params)?;
    let seed = RunSeed(record.stream_seed);
    let counts = match mode {
        RunMode::Signal | RunMode::Noise => CountsFile::Storage(exp.run_trials_with_workers(
            record.n_trials,
            seed,
            mode == RunMode::Signal,
            record.workers,
        )?),
        RunMode::Crosstalk => {
            let leak = noise.leakage.as_ref().ok_or_else(|| Error::Parse {
                path: record.noise.path.clone(),
                message: "a cross-talk run needs a `leakage` matrix in the noise file".into(),
            })?;
            CountsFile::CrossTalk(exp.run_crosstalk_scan(leak, record.n_trials, seed, record.workers)?)
        }
    };
    ensure_dir(out_dir)?;
    let counts_path = out_dir.join(mode.counts_file());
    write_counts_file(&counts, &counts_path)?;

    let mut summary = vec![
        format!("{} cells x {} temporal modes", cfg.plan.cell_order.len(), cfg.plan.storage.n_temporal),
        format!(
            "tau = {} us, T_s = {} us, period = {} us",
            cfg.plan.storage.tau_us,
            cfg.plan.storage.t_spin_us,
            cfg.plan.mode_period(&cfg.timing)
        ),
        format!("mean photon number {}", cfg.plan.storage.mean_photon_number),
    ];
    if mode != RunMode::Crosstalk {
        let expected: f64 = exp.expectations().iter().map(|e| e.mean(mode == RunMode::Signal)).sum();
        summary.push(format!("expected counts per trial, all modes: {expected}"));
    }
    let mut manifest = RunManifest::for_run(record);
    manifest.summary = summary;
    manifest.record_output(&counts_path)?;
    manifest.set_duration(started.elapsed());
    let manifest_path = out_dir.join(mode.manifest_file());
    manifest.write(&manifest_path)?;
    say(
        out,
        format!(
            "{}: {} trials, counts in {}, manifest in {}",
            mode.name(),
            manifest.run.as_ref().map_or(0, |r| r.n_trials),
            counts_path.display(),
            manifest_path.display()
        ),
    );
    Ok(manifest)
}

pub const ANALYZE_MANIFEST: &str = "analyze_manifest.toml";

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<RunManifest> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let snapshot = |p: &Option<PathBuf>| -> Result<Option<ConfigSnapshot>> {
        p.as_ref().map(|p| Ok(ConfigSnapshot::new(p, read(p)?))).transpose()
    };
    let record = AnalyzeRecord {
        snr_definition: match args.snr_definition {
            SnrDefinition::Ratio => "ratio".into(),
            SnrDefinition::Excess => "excess".into(),
        },
        signal: FileRecord::of(&args.signal)?,
        noise: FileRecord::of(&args.noise)?,
        plan: snapshot(&args.plan)?,
        device: snapshot(&args.device)?,
    };
    execute_analyze(record, &args.out_dir, out)
}

/// Runs the analysis described by `record`, reading the counts files it
/// names and checking they still match their recorded checksums.
pub fn execute_analyze(record: AnalyzeRecord, out_dir: &Path, out: &mut dyn Write) -> Result<RunManifest> {
    let started = Instant::now();
    let def = SnrDefinition::from_str(&record.snr_definition, false)
        .map_err(|_| Error::Config(format!("unknown SNR definition `{}`", record.snr_definition)))?;
    for f in [&record.signal, &record.noise] {
        let now = FileRecord::of(&f.path)?;
        if now.sha256 != f.sha256 {
            return Err(Error::Config(format!("{} changed since it was recorded", f.path.display())));
        }
    }
    let signal = read_counts_file(&record.signal.path)?;
    let noise = match read_counts_file(&record.noise.path)? {
        CountsFile::Storage(t) => t,
        CountsFile::CrossTalk(_) => {
            return Err(Error::Parse {
                path: record.noise.path.clone(),
                message: "noise input must be a storage counts file, not a cross-talk scan".into(),
            })
        }
    };
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let mut summary = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(std::fs::File) -> Result<()>| -> Result<()> {
        let path = out_dir.join(name);
        to_file(&path, f)?;
        written.push(path);
        Ok(())
    };
    match signal {
        CountsFile::Storage(signal) => {
            let stats = per_mode_stats_with(&signal, &noise, def)?;
            let spatial = spatial_mode_stats(&signal, &noise, def)?;
            let series = cumulative_series(&stats);
            emit("mode_stats.csv", &|f| export::write_mode_stats(&stats, f))?;
            emit("spatial_stats.csv", &|f| export::write_spatial_stats(&spatial, f))?;
            emit("cumulative.csv", &|f| export::write_cumulative(&series, f))?;
            if let Some(last) = series.last() {
                summary.push(format!(
                    "{} modes: c_S = {:.4} +- {:.4}, c_B = {:.5} +- {:.5}",
                    last.n_modes, last.c_signal, last.err_signal, last.c_noise, last.err_noise
                ));
            }
            if let Some((m, e)) = average_snr(&stats, def) {
                summary.push(format!("average SNR ({}) = {m:.2} +- {e:.2}", record.snr_definition));
            }
            if let (Some(p), Some(d)) = (&record.plan, &record.device) {
                let cfg = parse_plan(&p.text, &p.path)?;
                let device = parse_device(&d.text, &d.path)?;
                let proj = project_network(&spatial, &device, &cfg.plan.storage)?;
                emit("projection.csv", &|f| export::write_projection(&proj, f))?;
                let g2 = proj.iter().map(|p| p.g2_inferred);
                let fid = proj.iter().map(|p| p.fidelity);
                summary.push(format!(
                    "g2 in [{:.2}, {:.2}], fidelity bound in [{:.3}, {:.3}]",
                    g2.clone().fold(f64::INFINITY, f64::min),
                    g2.fold(f64::NEG_INFINITY, f64::max),
                    fid.clone().fold(f64::INFINITY, f64::min),
                    fid.fold(f64::NEG_INFINITY, f64::max)
                ));
            }
        }
        CountsFile::CrossTalk(scan) => {
            let m = crosstalk_matrix(&scan, &noise)?;
            emit("crosstalk_matrix.csv", &|f| export::write_crosstalk_matrix(&m, f))?;
            emit("crosstalk_errors.csv", &|f| export::write_crosstalk_errors(&m, f))?;
            emit("noise_contribution.csv", &|f| export::write_noise_contribution(&m, f))?;
            summary.push(format!(
                "mean off-diagonal cross-talk {:.4} +- {:.4}, max {:.4}",
                m.mean_offdiagonal, m.mean_offdiagonal_err, m.max_offdiagonal
            ));
            if !m.invalid_rows.is_empty() {
                summary.push(format!("rows without matched counts: {:?}", m.invalid_rows));
            }
        }
    }
    let mut manifest = RunManifest::for_analyze(record);
    for p in &written {
        manifest.record_output(p)?;
    }
    for s in &summary {
        say(out, s);
    }
    manifest.summary = summary;
    manifest.set_duration(started.elapsed());
    manifest.write(&out_dir.join(ANALYZE_MANIFEST))?;
    Ok(manifest)
}

pub fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<()> {
    let recorded = RunManifest::read(&args.manifest)?;
    let mut sink = std::io::sink();
    let fresh = match (&recorded.run, &recorded.analyze) {
        (Some(r), _) => execute_run(r.clone(), &args.out_dir, &mut sink)?,
        (_, Some(a)) => execute_analyze(a.clone(), &args.out_dir, &mut sink)?,
        _ => unreachable!("checked when the manifest was read"),
    };
    let report = compare_outputs(&recorded.outputs, &args.out_dir)?;
    for f in &report.matched {
        say(out, format!("identical  {f}"));
    }
    for (f, was, now) in &report.differing {
        say(out, format!("DIFFERENT  {f}  recorded {was}  now {now}"));
    }
    for f in &report.missing {
        say(out, format!("MISSING    {f}"));
    }
    debug_assert_eq!(fresh.outputs.len(), recorded.outputs.len());
    if report.is_identical() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "replay differs from {} in {} file(s)",
            args.manifest.display(),
            report.differing.len() + report.missing.len()
        )))
    }
}

/// Loads and compiles a plan, for callers that want the timeline directly.
pub fn compile_files(plan: &Path, device: &Path) -> Result<Timeline> {
    let (cfg, _) = load_plan(plan)?;
    let (device, _) = load_device(device)?;
    let unknown = unknown_cells(&cfg.plan, &device);
    if !unknown.is_empty() {
        return Err(Error::Infeasible(unknown));
    }
    compile_plan(&cfg.plan, &cfg.timing)
}

/// Loads the three configuration files of a run and binds them.
pub fn experiment_from_files(plan: &Path, device: &Path, noise: &Path) -> Result<Experiment> {
    let (cfg, _) = load_plan(plan)?;
    let (device, _) = load_device(device)?;
    let (noise, _) = load_noise(noise, device.dark_count_rate_hz)?;
    Experiment::new(cfg.plan, cfg.timing, device, noise.params)
}
