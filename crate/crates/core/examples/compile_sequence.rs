//! Compiles the 60-mode plan, prints the first cell block and shows the
//! validator rejecting a plan with one temporal mode too many.
//!
//!     cargo run --example compile_sequence [-- timeline.csv]

use qmem_array::config::presets;
use qmem_array::sequence::{compile_plan, cycle_duration, max_temporal_modes, trial_duration, EventKind};
use qmem_array::Error;

fn main() -> qmem_array::Result<()> {
    let cfg = presets::plan_60();
    let timeline = compile_plan(&cfg.plan, &cfg.timing)?;
    let period = cfg.plan.mode_period(&cfg.timing);
    let cap = max_temporal_modes(cfg.plan.storage.tau_us, period, cfg.timing.cp_duration_us);
    println!(
        "period {period:.4} us, capacity {} temporal modes, {} events, trial {:.2} us, cycle {:.1} us",
        cap.modes,
        timeline.events().len(),
        trial_duration(&timeline)?,
        cycle_duration(&timeline, &cfg.timing)?
    );

    let first = timeline.blocks()[0].cell_id;
    for e in timeline.events().iter().filter(|e| e.cell_id == first || e.kind == EventKind::Prepare) {
        println!(
            "  {:>10} {:<14} cell {:>2} mode {:>2}  {:>9.4} .. {:>9.4} us",
            e.channel.name(),
            format!("{:?}", e.kind),
            e.cell_id,
            e.temporal_index.map_or("-".into(), |k| k.to_string()),
            e.start_us,
            e.end_us()
        );
    }
    for b in timeline.blocks() {
        println!(
            "  block cell {:>2}: inputs from {:>8.3}, CP2 ends {:>8.3}, last echo ends {:>8.3}",
            b.cell_id, b.first_input_us, b.cp2_end_us, b.last_echo_end_us
        );
    }

    let mut crowded = cfg.plan.clone();
    crowded.storage.n_temporal = 7;
    crowded.mode_period_us = Some(period);
    match compile_plan(&crowded, &cfg.timing) {
        Err(Error::Infeasible(v)) => {
            println!("seven modes at the same period:");
            for x in v {
                println!("  {x}");
            }
        }
        other => println!("unexpected: {other:?}"),
    }

    if let Some(path) = std::env::args().nth(1) {
        timeline.write_csv_file(path.as_ref())?;
        println!("timeline written to {path}");
    }
    Ok(())
}
