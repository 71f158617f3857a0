//! Deterministic file output: identical configs and seeds produce
//! byte-identical CSV and JSON regardless of the parallelism degree.

use pwrelu::dynamics::Trajectory;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Writes a trajectory as CSV: `step_or_time, risk, grad_norm, theta_*`
/// rows at the recorded snapshot times.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let dim = traj.snapshots.first().map(|(_, t)| t.len()).unwrap_or(0);
    let mut out = String::new();
    out.push_str("step_or_time,risk,grad_norm");
    for i in 0..dim {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push('\n');
    for (t, theta) in &traj.snapshots {
        // the snapshot time is copied verbatim from the recording grid
        let idx = traj
            .times
            .iter()
            .position(|x| x == t)
            .expect("snapshot time is on the recording grid");
        out.push_str(&format!(
            "{},{},{}",
            t,
            traj.risks[idx],
            traj.grad_norms[idx.min(traj.grad_norms.len() - 1)]
        ));
        for v in theta {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Gnuplot-ready data: `step risk grad_norm` whitespace-separated.
pub fn write_plotdata(path: &Path, traj: &Trajectory) -> anyhow::Result<()> {
    let mut out = String::from("# step_or_time risk grad_norm\n");
    for (i, t) in traj.times.iter().enumerate() {
        out.push_str(&format!(
            "{} {} {}\n",
            t,
            traj.risks[i],
            traj.grad_norms[i.min(traj.grad_norms.len() - 1)]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Gradient vector as `index,value` CSV rows.
pub fn write_gradient_csv(path: &Path, grad: &[f64]) -> anyhow::Result<()> {
    let mut out = String::from("index,value\n");
    for (i, v) in grad.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parameter vector as `index,value` CSV rows.
pub fn write_theta_csv(path: &Path, theta: &[f64]) -> anyhow::Result<()> {
    write_gradient_csv(path, theta)
}

/// Reads a parameter vector from `index,value` CSV rows.
pub fn read_theta_csv(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("index")) {
            continue;
        }
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| anyhow::anyhow!("line {}: expected index,value", lineno + 1))?;
        entries.push((i.trim().parse()?, v.trim().parse()?));
    }
    entries.sort_by_key(|(i, _)| *i);
    anyhow::ensure!(
        entries.iter().enumerate().all(|(k, (i, _))| k == *i),
        "theta CSV indices must be 0..n contiguous"
    );
    Ok(entries.into_iter().map(|(_, v)| v).collect())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
