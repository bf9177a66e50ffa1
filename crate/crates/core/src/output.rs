//! Trace CSV files and the flat gains file.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hinf::{GareSolution, SolutionSource};
use crate::linalg::Mat;
use crate::sim::SimTrace;

pub const GAINS_HEADER: &str = "# masim gains v1";

pub fn csv_header(n: usize, m: usize, d: usize, agents: usize) -> String {
    let mut cols = vec!["t".to_string(), "agent".to_string()];
    cols.extend((1..=n).map(|k| format!("x{k}")));
    cols.extend((1..=n).map(|k| format!("r{k}")));
    cols.extend((1..=m).map(|k| format!("u{k}")));
    cols.extend((1..=d).map(|k| format!("omega{k}")));
    cols.extend(["e_norm", "eta_norm", "o", "s", "C"].map(String::from));
    cols.extend((1..=agents).map(|j| format!("T_i{j}")));
    cols.join(",")
}

/// One CSV per agent (`agent_<i>.csv`) plus `leader.csv`. Numbers use the shortest
/// round-trip representation, so identical traces give identical bytes.
pub fn write_trace(trace: &SimTrace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let agents = trace.n_agents();
    let first = &trace.agents[0][0];
    let (n, m, d) = (first.x.len(), first.u.len(), first.omega.len());
    for i in 0..agents {
        let file = fs::File::create(dir.join(format!("agent_{}.csv", i + 1)))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", csv_header(n, m, d, agents))?;
        let mut line = String::new();
        for (k, s) in trace.agents[i].iter().enumerate() {
            line.clear();
            write!(line, "{},{}", trace.t[k], i + 1).unwrap();
            for v in s.x.iter().chain(s.r.iter()).chain(s.u.iter()).chain(s.omega.iter()) {
                write!(line, ",{v}").unwrap();
            }
            write!(line, ",{},{},{},{},{}", s.e_norm, s.eta_norm, s.o, s.s, s.c).unwrap();
            for t in &s.trust {
                match t {
                    Some(v) => write!(line, ",{v}").unwrap(),
                    None => line.push(','),
                }
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    let mut w = BufWriter::new(fs::File::create(dir.join("leader.csv"))?);
    let n = trace.leader[0].len();
    let cols: Vec<String> = (1..=n).map(|k| format!("z{k}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for (k, z) in trace.leader.iter().enumerate() {
        let vals: Vec<String> = z.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", trace.t[k], vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_matrix(m: &Mat) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_matrix(key: &str, s: &str) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("gains `{key}`: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    crate::linalg::mat_from_rows(&rows).map_err(|_| Error::Config(format!("gains `{key}`: ragged rows")))
}

pub fn format_gains(sol: &GareSolution) -> String {
    let source = match sol.source {
        SolutionSource::Model => "model",
        SolutionSource::Learned => "learned",
    };
    let mut out = String::new();
    writeln!(out, "{GAINS_HEADER}").unwrap();
    writeln!(out, "source = {source}").unwrap();
    writeln!(out, "iterations = {}", sol.iterations).unwrap();
    writeln!(out, "alpha = {}", sol.alpha).unwrap();
    writeln!(out, "gamma = {}", sol.gamma).unwrap();
    writeln!(out, "residual = {}", sol.residual).unwrap();
    for (key, m) in [
        ("P", &sol.p),
        ("S", &sol.pi_map),
        ("G", &sol.gamma_map),
        ("K", &sol.k),
        ("g", &sol.g_map),
        ("W", &sol.worst_gain),
        ("w", &sol.worst_ff),
    ] {
        writeln!(out, "{key} = {}", fmt_matrix(m)).unwrap();
    }
    out
}

pub fn parse_gains(text: &str) -> Result<GareSolution> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(GAINS_HEADER) {
        return Err(Error::Config(format!("gains file must start with `{GAINS_HEADER}`")));
    }
    let mut kv = std::collections::HashMap::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("bad gains line `{line}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| Error::Config(format!("gains file lacks `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| Error::Config(format!("gains `{k}`: {e}"))) };
    let mat = |k: &str| -> Result<Mat> { parse_matrix(k, get(k)?) };
    let source = match get("source")?.as_str() {
        "model" => SolutionSource::Model,
        "learned" => SolutionSource::Learned,
        other => return Err(Error::Config(format!("unknown gains source `{other}`"))),
    };
    let sol = GareSolution {
        p: mat("P")?,
        pi_map: mat("S")?,
        gamma_map: mat("G")?,
        k: mat("K")?,
        g_map: mat("g")?,
        worst_gain: mat("W")?,
        worst_ff: mat("w")?,
        residual: num("residual")?,
        alpha: num("alpha")?,
        gamma: num("gamma")?,
        source,
        iterations: num("iterations")? as usize,
    };
    let nx = sol.p.nrows();
    let m = sol.k.nrows();
    if sol.p.ncols() != nx || sol.k.ncols() != nx || sol.pi_map.shape() != (nx, m) || sol.g_map.shape() != (m, m) {
        return Err(Error::Config("gains file matrices have inconsistent shapes".into()));
    }
    Ok(sol)
}

pub fn write_gains(sol: &GareSolution, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, format_gains(sol))?;
    Ok(())
}

pub fn read_gains(path: &Path) -> Result<GareSolution> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_gains(&text)
}
