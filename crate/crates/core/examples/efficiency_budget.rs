//! Per-cell efficiency cascade of the default device at the two storage
//! times, plus the fraction of each pulse shape caught by the echo window.
//!
//!     cargo run --example efficiency_budget

use qmem_array::config::presets;
use qmem_array::device::{
    afc_efficiency_at, spin_wave_efficiency, total_device_efficiency, window_capture_fraction, PulseKind, PulseShape,
};

fn main() -> qmem_array::Result<()> {
    let device = presets::device();
    println!("cell  mux    demux  fiber  transfer | afc(10)  sw(10)   total(10) | afc(25)  sw(25)   total(25)");
    let mut sum10 = 0.0;
    for c in &device.cells {
        let t10 = total_device_efficiency(c, 10.0)?;
        sum10 += t10;
        println!(
            "{:>4}  {:.3}  {:.3}  {:.3}  {:.3}    | {:.4}   {:.5}  {:.5}   | {:.4}   {:.5}  {:.5}",
            c.cell_id,
            c.eta_mux,
            c.eta_demux,
            c.eta_fiber,
            c.eta_transfer,
            afc_efficiency_at(c, 10.0)?,
            spin_wave_efficiency(c, 10.0)?,
            t10,
            afc_efficiency_at(c, 25.0)?,
            spin_wave_efficiency(c, 25.0)?,
            total_device_efficiency(c, 25.0)?,
        );
    }
    println!("mean total efficiency at 10 us: {:.4}", sum10 / device.n_cells() as f64);

    // Interpolated and extrapolated storage times.
    let c = &device.cells[5];
    for tau in [5.0, 17.5, 40.0] {
        let l = c.afc_calibration.lookup(tau)?;
        println!(
            "cell {} afc({tau}) = {:.4}{}",
            c.cell_id,
            l.efficiency,
            if l.extrapolated { " (extrapolated)" } else { "" }
        );
    }

    let window = 351.0;
    for shape in [
        PulseShape::new(PulseKind::Gaussian, 351.0),
        PulseShape::new(PulseKind::Lorentzian, 130.0),
        PulseShape::new(PulseKind::Lorentzian, 130.0).with_capture_override(0.57),
        PulseShape::new(PulseKind::Square, 300.0),
    ] {
        println!(
            "{:?} fwhm {} ns, override {:?}: captured {:.4} in {window} ns",
            shape.kind,
            shape.fwhm_ns,
            shape.capture_override,
            window_capture_fraction(&shape, window)
        );
    }
    Ok(())
}
