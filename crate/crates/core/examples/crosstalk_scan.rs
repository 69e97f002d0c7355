//! Stores one input at a time in each cell and reads every output.
//! Prints the normalised cross-talk matrix and the noise contribution.
//!
//!     cargo run --release --example crosstalk_scan [-- trials]

use qmem_array::analysis::crosstalk_matrix;
use qmem_array::config::presets;
use qmem_array::simulator::{Experiment, RunSeed};

fn main() -> qmem_array::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let cfg = presets::plan_crosstalk();
    let noise = presets::noise_crosstalk();
    let leak = noise.leakage.clone().expect("shipped cross-talk noise has a leakage matrix");
    let exp = Experiment::new(cfg.plan, cfg.timing, presets::device(), noise.params)?;

    let seed = RunSeed(1);
    let scan = exp.run_crosstalk_scan(&leak, n, seed.derive(3), None)?;
    let diag = exp.run_trials(n, seed.derive(2), false)?;
    let m = crosstalk_matrix(&scan, &diag)?;

    print!("in\\out");
    for c in &m.cells {
        print!("{c:>7}");
    }
    println!();
    for (row, c) in m.c.iter().zip(&m.cells) {
        print!("{c:>6}");
        for v in row {
            match v {
                Some(x) => print!("{:>7.3}", x),
                None => print!("{:>7}", "-"),
            }
        }
        println!();
    }
    println!(
        "mean off-diagonal {:.4} +- {:.4}, max {:.4}",
        m.mean_offdiagonal, m.mean_offdiagonal_err, m.max_offdiagonal
    );
    for (c, v) in m.cells.iter().zip(&m.noise_contribution) {
        if let Some((x, e)) = v {
            println!("cell {c:>2}: noise contribution {:.1} +- {:.1} %", 100.0 * x, 100.0 * e);
        }
    }
    Ok(())
}
