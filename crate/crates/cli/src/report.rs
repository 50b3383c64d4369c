//! Bit-stable CSV emission and parse-back.
//!
//! Floats print with 17 significant digits so f64 values round-trip exactly
//! and repeated runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;

use tarc_core::simulator::{Metrics, Record, RunOutcome, SimTrace};
use tarc_core::stability::{DelaySearch, StabilityCertificate};

/// 17 significant digits: exact f64 round-trip.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)
}

/// Trace CSV schema: `t, q_1..q_n, qd_1..qd_n, qdot_1..qdot_n, e1_1..e1_n,
/// tau_1..tau_n, c_hat, s_norm` (1 + 5n + 2 columns).
pub fn trace_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "qd", "qdot", "e1", "tau"] {
        for i in 1..=n {
            cols.push(format!("{prefix}_{i}"));
        }
    }
    cols.push("c_hat".into());
    cols.push("s_norm".into());
    cols.join(",")
}

pub fn write_trace_csv(path: &Path, trace: &SimTrace<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&trace_header(trace.n));
    out.push('\n');
    for r in &trace.records {
        let mut cells = Vec::with_capacity(3 + 5 * trace.n);
        cells.push(fmt17(r.t));
        for v in [&r.q, &r.q_d, &r.q_dot, &r.e1, &r.tau] {
            for i in 0..trace.n {
                cells.push(fmt17(v[i]));
            }
        }
        cells.push(fmt17(r.c_hat));
        cells.push(fmt17(r.s_norm));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    write_atomic(path, &out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a trace CSV back into a trace whose metrics reproduce the original
/// (measured-only columns are not part of the schema and come back zeroed).
pub fn read_trace_csv(path: &Path, settle_threshold: f64) -> Result<SimTrace<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty trace file"))?;
    let cols = header.split(',').count();
    if (cols - 3) % 5 != 0 {
        bail!("unexpected column count {cols}");
    }
    let n = (cols - 3) / 5;
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| anyhow!("line {}: {e}", lineno + 2)))
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            bail!("line {}: expected {cols} cells", lineno + 2);
        }
        let grab = |block: usize| DVector::from_fn(n, |i, _| vals[1 + block * n + i]);
        records.push(Record {
            t: vals[0],
            q: grab(0),
            q_d: grab(1),
            q_dot: grab(2),
            e1: grab(3),
            tau: grab(4),
            q_meas: DVector::zeros(n),
            c_hat: vals[1 + 5 * n],
            s_norm: vals[2 + 5 * n],
            q_dot_est: None,
        });
    }
    let dt = if records.len() >= 2 {
        records[1].t - records[0].t
    } else {
        1.0
    };
    Ok(SimTrace {
        n,
        dt,
        record_every: 1,
        warmup_steps: 0,
        settle_threshold,
        records,
        outcome: RunOutcome::Completed,
        warmup_tau_jump: None,
        warmup_jump_exceeded: false,
    })
}

pub const METRICS_HEADER: &str = "strategy,rms_e1,max_e1,control_energy,chattering_index,c_hat_final,c_hat_max,settle_time,diverged,config_hash";

pub fn metrics_row(strategy: &str, m: &Metrics<f64>, hash: &str) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        strategy,
        fmt17(m.rms_e1),
        fmt17(m.max_e1),
        fmt17(m.control_energy),
        fmt17(m.chattering_index),
        fmt17(m.c_hat_final),
        fmt17(m.c_hat_max),
        m.settle_time.map(fmt17).unwrap_or_default(),
        m.diverged,
        hash
    )
}

pub fn write_metrics_csv(path: &Path, rows: &[(String, Metrics<f64>)], hash: &str) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for (strategy, m) in rows {
        let _ = writeln!(out, "{}", metrics_row(strategy, m, hash));
    }
    write_atomic(path, &out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub const CERT_HEADER: &str =
    "kind,n,h,lambda_min,feasible,p_lambda_min,p_lambda_max,condition_norm,config_hash";

pub fn certificate_row(
    cert: &StabilityCertificate<f64>,
    n: usize,
    h: f64,
    hash: &str,
) -> String {
    let p_eig = tarc_core::linalg::sym_eigenvalues(&cert.p);
    format!(
        "{:?},{},{},{},{},{},{},{},{}",
        cert.kind,
        n,
        fmt17(h),
        fmt17(cert.lambda_min),
        cert.feasible,
        fmt17(p_eig[0]),
        fmt17(p_eig[p_eig.len() - 1]),
        fmt17(cert.condition_matrix.norm()),
        hash
    )
}

pub fn write_certificates_csv(path: &Path, rows: &[String]) -> Result<()> {
    let mut out = String::from(CERT_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{row}");
    }
    write_atomic(path, &out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub const DELAY_HEADER: &str =
    "kind,h_lo,h_star,h_feasible,h_infeasible,evals,config_hash";

pub fn write_delay_csv(
    path: &Path,
    kind: &str,
    h_lo: f64,
    search: &DelaySearch<f64>,
    hash: &str,
) -> Result<()> {
    let mut out = String::from(DELAY_HEADER);
    out.push('\n');
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{}",
        kind,
        fmt17(h_lo),
        fmt17(search.h_star),
        fmt17(search.h_feasible),
        fmt17(search.h_infeasible),
        search.evals,
        hash
    );
    write_atomic(path, &out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
