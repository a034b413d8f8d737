//! CSV and JSON writers for the CLI outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::audit::EnergyAudit;
use super::sweep::SweepRow;
use crate::error::Result;
use crate::gains::MuSample;
use crate::observers::CSV_HEADER;
use crate::rodmodel::RodState;

pub const STRAIN_COLUMNS: [&str; 6] = ["u_x", "u_y", "u_z", "q_x", "q_y", "q_z"];

/// `t, node`, the measurement columns evaluated at the node, then the strain.
pub fn states_header() -> Vec<&'static str> {
    let mut h = vec!["t", "node"];
    h.extend_from_slice(&CSV_HEADER[1..]);
    h.extend_from_slice(&STRAIN_COLUMNS);
    h
}

/// One row per (time level, node); returns the number of data rows.
pub fn write_states_csv(path: impl AsRef<Path>, states: &[RodState]) -> Result<usize> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(states_header())?;
    let mut rows = 0;
    for s in states {
        for k in 0..s.node_count() {
            let g = &s.poses[k];
            let q = g.quaternion();
            let mut rec = vec![format!("{:.17e}", s.time), k.to_string()];
            let values = s.wrenches[k]
                .0
                .iter()
                .chain(q.iter())
                .chain(g.position.iter())
                .chain(s.velocities[k].0.iter())
                .chain(s.strains[k].0.iter());
            rec.extend(values.map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

pub const SWEEP_HEADER: [&str; 10] = [
    "variant",
    "gamma",
    "seed",
    "settle_time_s",
    "position_error_percent_of_length",
    "rotation_error_rad",
    "linear_velocity_error_m_per_s",
    "angular_velocity_error_rad_per_s",
    "steady_tip_position_error_m",
    "error",
];

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let e = r.post_settle_errors;
        w.write_record([
            r.variant.name().to_string(),
            format!("{}", r.gamma),
            r.seed.to_string(),
            opt(r.settle_time_s),
            opt(e.map(|e| e.position_percent_of_length)),
            opt(e.map(|e| e.rotation_rad)),
            opt(e.map(|e| e.linear_velocity_m_per_s)),
            opt(e.map(|e| e.angular_velocity_rad_per_s)),
            opt(r.steady_state_errors.map(|e| e.tip_position_m)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mu_csv(path: impl AsRef<Path>, samples: &[MuSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gamma_scale", "mu_max", "singularity_bracket"])?;
    for s in samples {
        w.write_record([format!("{}", s.gamma_scale), format!("{:.17e}", s.mu_max), (s.singularity_bracket as u8).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_energy_csv(path: impl AsRef<Path>, audit: &EnergyAudit) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "conservative_j", "dissipative_j"])?;
    let c = &audit.conservative;
    for (i, t) in c.times_s.iter().enumerate() {
        let d = audit.dissipative.energies_j.get(i).copied();
        w.write_record([format!("{t:.17e}"), format!("{:.17e}", c.energies_j[i]), opt(d)])?;
    }
    w.flush()?;
    Ok(())
}
