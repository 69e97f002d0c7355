//! Simulates the 60- and 250-mode storage experiments with weak coherent
//! inputs and summarises signal, noise and SNR.
//!
//!     cargo run --release --example weak_coherent_storage [-- trials seed]

use qmem_array::analysis::{average_snr, cumulative_series, per_mode_stats, spatial_mode_stats, SnrDefinition};
use qmem_array::config::{presets, PlanConfig};
use qmem_array::simulator::{Experiment, RunSeed};

fn report(name: &str, cfg: PlanConfig, n: u64, seed: RunSeed) -> qmem_array::Result<()> {
    let exp = Experiment::new(cfg.plan, cfg.timing, presets::device(), presets::noise_storage().params)?;
    let signal = exp.run_trials(n, seed.derive(1), true)?;
    let noise = exp.run_trials(n, seed.derive(2), false)?;
    let stats = per_mode_stats(&signal, &noise)?;
    let last = *cumulative_series(&stats).last().expect("modes");
    let expected: f64 = exp.expectations().iter().map(|e| e.mean(true)).sum();
    println!("{name}: {} modes, {n} trials", stats.len());
    println!(
        "  cumulative c_S = {:.4} +- {:.4} (expected {expected:.4}), c_B = {:.5} +- {:.5}",
        last.c_signal, last.err_signal, last.c_noise, last.err_noise
    );
    if let Some((snr, err)) = average_snr(&stats, SnrDefinition::Ratio) {
        println!("  average SNR {snr:.1} +- {err:.1}");
    }
    for s in spatial_mode_stats(&signal, &noise, SnrDefinition::Ratio)? {
        println!(
            "  cell {:>2}: c_S {:.2e}  c_B {:.2e}  SNR {:>5.1} +- {:.1}",
            s.cell_id, s.c_signal, s.c_noise, s.snr, s.snr_err
        );
    }
    Ok(())
}

fn main() -> qmem_array::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(14_227);
    let seed = RunSeed(args.next().and_then(|s| s.parse().ok()).unwrap_or(1));
    report("tau = 10 us", presets::plan_60(), n, seed)?;
    report("tau = 25 us", presets::plan_250(), n, seed)
}
