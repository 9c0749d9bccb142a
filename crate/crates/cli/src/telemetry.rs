//! CSV telemetry rows.

use std::io::Write;

use gyrotrack_core::scenario::ClosedLoopRun;

/// Column names, in order. Part of the external contract.
pub const HEADER: [&str; 35] = [
    "t",
    "R11",
    "R12",
    "R13",
    "R21",
    "R22",
    "R23",
    "R31",
    "R32",
    "R33",
    "Rd11",
    "Rd12",
    "Rd13",
    "Rd21",
    "Rd22",
    "Rd23",
    "Rd31",
    "Rd32",
    "Rd33",
    "Omega1",
    "Omega2",
    "Omega3",
    "OmegaR1",
    "OmegaR2",
    "OmegaR3",
    "Theta1",
    "Theta2",
    "Theta3",
    "u_int1",
    "u_int2",
    "u_int3",
    "psi_E",
    "geo_err",
    "E_cl",
    "momentum_drift",
];

/// Scientific notation with 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn row(run: &ClosedLoopRun, k: usize) -> Vec<f64> {
    let x = run.sample(k);
    let m = &run.metrics;
    let mut r = Vec::with_capacity(HEADER.len());
    r.push(m.times[k]);
    r.extend(x.plant.attitude.row_major());
    r.extend(x.reference.attitude.row_major());
    r.extend(x.plant.omega.iter());
    r.extend(x.plant.rotor_rates.iter());
    r.extend(x.plant.wrapped_rotor_angles().iter());
    r.extend(run.u_int[k].iter());
    r.extend([m.psi[k], m.geodesic_error[k], m.ecl[k], m.momentum_drift[k]]);
    r
}

/// Writes every `stride`-th sample, LF-terminated.
pub fn write_csv<W: Write>(out: W, run: &ClosedLoopRun, stride: usize) -> csv::Result<usize> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    let mut rows = 0;
    for k in (0..run.metrics.len()).step_by(stride.max(1)) {
        w.write_record(row(run, k).iter().map(|v| format_number(*v)))?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}
