//! Run artifacts: `trace.csv`, `metrics.csv`, `report.txt`, `report.kv`.
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! an interrupted run never leaves a truncated file under the final name.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::scenario::Scenario;
use crate::sim::{Metrics, RunOutput, RunReport, SwarmState};

pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_KV_FILE: &str = "report.kv";

pub const METRICS_HEADER: &str = "t,center_error,velocity_center_error,min_pair_distance,lambda2,\
sum_grad_norm,consensus_vel_norm,lyap_W,lyap_W1,remark1_ok,gain_ok,clamp_events";

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn trace_header(dim: usize) -> String {
    let mut h = String::from("t,agent");
    for prefix in ["p", "v"] {
        for k in 0..dim {
            h.push(',');
            h.push_str(prefix);
            h.push_str(&axis_name(k));
        }
    }
    h
}

/// `x, y, z` for the first three axes, then `3, 4, ...`.
fn axis_name(k: usize) -> String {
    match k {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => k.to_string(),
    }
}

/// One row per recorded step and agent (agents numbered from 1); velocities
/// are zero for single-integrator runs.
pub fn trace_csv(trace: &[SwarmState]) -> String {
    let dim = trace.first().map_or(0, |s| s.dim());
    let mut out = trace_header(dim);
    out.push('\n');
    for s in trace {
        let t = num(s.t);
        for (i, (x, v)) in s.positions.iter().zip(&s.velocities).enumerate() {
            let _ = write!(out, "{t},{}", i + 1);
            for c in x.iter().chain(v.iter()) {
                out.push(',');
                out.push_str(&num(*c));
            }
            out.push('\n');
        }
    }
    out
}

pub fn metrics_csv(metrics: &[Metrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(m.t),
            num(m.center_error),
            opt(m.velocity_center_error),
            num(m.min_pair_distance),
            num(m.lambda2),
            num(m.sum_grad_norm),
            opt(m.consensus_vel_norm),
            num(m.lyap_w),
            num(m.lyap_w1),
            u8::from(m.remark1_ok),
            m.gain_ok.map(|b| u8::from(b).to_string()).unwrap_or_default(),
            m.clamp_events
        );
    }
    out
}

/// Flat `key=value` lines: status, counts, and min/max/last of each series.
pub fn report_kv(report: &RunReport) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("completed", report.completed.to_string());
    kv(
        "abort",
        report.abort.as_ref().map_or_else(|| "none".into(), |a| a.to_string()),
    );
    kv("t_final", num(report.t_final));
    kv("steps", report.steps.to_string());
    kv("records", report.records.to_string());
    kv("initial_connected", report.initial_connected.to_string());
    kv("collision_events", report.collision_events.to_string());
    kv("disconnection_events", report.disconnection_events.to_string());
    kv("nonfinite_events", report.nonfinite_events.to_string());
    kv("new_bonds", report.new_bonds.to_string());
    kv("disconnected_records", report.disconnected_records.to_string());
    kv("remark1_violations", report.remark1_violations.to_string());
    kv("gain_violations", report.gain_violations.to_string());
    kv("gain_indeterminate", report.gain_indeterminate.to_string());
    kv("gain_ok", (report.gain_violations == 0).to_string());
    kv("clamp_events", report.clamp_events.to_string());
    kv("monitor_violation", report.has_monitor_violation().to_string());
    for (name, e) in &report.series {
        kv(&format!("{name}.min"), num(e.min));
        kv(&format!("{name}.max"), num(e.max));
        kv(&format!("{name}.final"), num(e.last));
    }
    s
}

pub fn report_text(scenario: &Scenario, report: &RunReport) -> String {
    let mut s = String::new();
    let kind = match scenario.dynamics.kind {
        crate::scenario::DynamicsKind::Single => "single integrator",
        crate::scenario::DynamicsKind::Double => "double integrator",
    };
    let _ = writeln!(s, "Swarm tracking run ({kind}, {} agents)", scenario.agents.count);
    let _ = writeln!(s);
    match &report.abort {
        None => {
            let _ = writeln!(s, "Completed {} steps to t = {}.", report.steps, report.t_final);
        }
        Some(a) => {
            let _ = writeln!(s, "ABORTED after {} steps: {a}", report.steps);
        }
    }
    let _ = writeln!(
        s,
        "Collisions: {}  disconnections: {}  non-finite: {}  new bonds: {}",
        report.collision_events, report.disconnection_events, report.nonfinite_events, report.new_bonds
    );
    let _ = writeln!(
        s,
        "Records: {}  disconnected records: {}  swarm-radius bound violations: {}",
        report.records, report.disconnected_records, report.remark1_violations
    );
    let _ = writeln!(
        s,
        "Gain condition violated at {} records, indeterminate at {}; force clamps: {}",
        report.gain_violations, report.gain_indeterminate, report.clamp_events
    );
    if !report.initial_connected {
        let _ = writeln!(s, "WARNING: the initial proximity graph is disconnected.");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<24}{:>16}{:>16}{:>16}", "series", "min", "max", "final");
    for (name, e) in &report.series {
        let _ = writeln!(s, "{name:<24}{:>16.6e}{:>16.6e}{:>16.6e}", e.min, e.max, e.last);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Plot columns: agent paths from trace.csv (t, agent, px, py); tracking");
    let _ = writeln!(s, "and consensus from metrics.csv (t, center_error, sum_grad_norm,");
    let _ = writeln!(s, "consensus_vel_norm).");
    let _ = writeln!(s);
    let _ = writeln!(s, "[machine]");
    s.push_str(&report_kv(report));
    s
}

/// Paths of the files written by [`write_run`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub trace: PathBuf,
    pub metrics: PathBuf,
    pub report: PathBuf,
    pub report_kv: PathBuf,
}

pub fn write_run(dir: &Path, scenario: &Scenario, run: &RunOutput) -> std::io::Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let report = run.report();
    let files = RunFiles {
        trace: dir.join(TRACE_FILE),
        metrics: dir.join(METRICS_FILE),
        report: dir.join(REPORT_FILE),
        report_kv: dir.join(REPORT_KV_FILE),
    };
    write_atomic(&files.trace, trace_csv(&run.trace).as_bytes())?;
    write_atomic(&files.metrics, metrics_csv(&run.metrics).as_bytes())?;
    write_atomic(&files.report, report_text(scenario, &report).as_bytes())?;
    write_atomic(&files.report_kv, report_kv(&report).as_bytes())?;
    Ok(files)
}

/// Parses `key=value` lines, skipping blanks and anything without `=`.
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn trace_layout() {
        let s = SwarmState::at_rest(0.5, vec![dvector![1.0, 2.0], dvector![3.0, 4.0]]).unwrap();
        let csv = trace_csv(&[s]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,agent,px,py,vx,vy");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("5.000000000000e-1,1,1.000000000000e0,2.000000000000e0,0"));
        assert!(lines[2].contains(",2,"));
        assert_eq!(trace_header(4), "t,agent,px,py,pz,p3,vx,vy,vz,v3");
    }

    #[test]
    fn metrics_blank_cells() {
        let m = Metrics {
            t: 0.0,
            center_error: 1.0,
            velocity_center_error: None,
            min_pair_distance: 0.5,
            lambda2: 2.0,
            sum_grad_norm: 3.0,
            consensus_vel_norm: None,
            lyap_w: 0.0,
            lyap_w1: 4.5,
            remark1_ok: true,
            gain_ok: None,
            clamp_events: 0,
        };
        let csv = metrics_csv(&[m]);
        let row = csv.lines().nth(1).unwrap();
        let cells: Vec<_> = row.split(',').collect();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[2], "");
        assert_eq!(cells[6], "");
        assert_eq!(cells[9], "1");
        assert_eq!(cells[10], "");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn kv_round_trip() {
        let kv = parse_kv("a=1\n\nb = x=y\nnoise\n");
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "x=y".into())]);
    }
}
