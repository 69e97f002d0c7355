//! Drives the command-line pipeline in-process: validate, run signal and
//! noise, analyze, then replay both manifests and compare checksums.
//!
//!     cargo run --example reproducible_run [-- out_dir]

use std::path::PathBuf;

use qmem_array::cli::main_with_args;
use qmem_array::config::presets;

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/reproducible_run".into()));
    let cfg = presets::dir();
    let path = |name: &str| cfg.join(name).display().to_string();
    let at = |sub: &str| out.join(sub).display().to_string();
    let (plan, device, noise) = (path("plan_60.toml"), path("device_default.toml"), path("noise_storage.toml"));

    let mut steps: Vec<Vec<String>> = vec![vec![
        "validate".into(),
        "--plan".into(),
        plan.clone(),
        "--device".into(),
        device.clone(),
        "--timeline".into(),
        at("timeline.csv"),
    ]];
    for mode in ["signal", "noise"] {
        steps.push(
            [
                "run", "--plan", &plan, "--device", &device, "--noise", &noise, "--trials", "14227", "--seed", "7",
                "--mode", mode, "--out-dir", &at("runs"),
            ]
            .map(String::from)
            .to_vec(),
        );
    }
    steps.push(
        [
            "analyze",
            "--signal",
            &at("runs/signal_counts.csv"),
            "--noise",
            &at("runs/noise_counts.csv"),
            "--plan",
            &plan,
            "--device",
            &device,
            "--out-dir",
            &at("analysis"),
        ]
        .map(String::from)
        .to_vec(),
    );
    for (manifest, dir) in [("runs/signal_manifest.toml", "replay_run"), ("analysis/analyze_manifest.toml", "replay_analysis")] {
        steps.push(
            ["replay", "--manifest", &at(manifest), "--out-dir", &at(dir)]
                .map(String::from)
                .to_vec(),
        );
    }

    for args in steps {
        println!("$ qmem {}", args.join(" "));
        let code = main_with_args(std::iter::once("qmem".to_string()).chain(args));
        if code != 0 {
            eprintln!("exit status {code}");
            std::process::exit(code);
        }
    }
}
