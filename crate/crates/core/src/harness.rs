//! Scenario orchestration shared by the CLI and the acceptance tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::BaselineGains;
use crate::error::{Error, Result};
use crate::hinf::GareSolution;
use crate::metrics::{self, Summary};
use crate::observer::ObserverGains;
use crate::output;
use crate::rl::{self, LearnOutcome};
use crate::scenario::{AttackSignalSection, ControllerKind, Scenario, ScenarioFile};
use crate::sim::{Policy, SimTrace};

pub struct RunOutput {
    pub trace: SimTrace,
    pub summary: Summary,
    pub solution: Option<GareSolution>,
}

/// Learned solution for `hinf-rl`: read from `gains_file` if given, otherwise learned
/// inline (first configured agent).
pub fn learned_solution(sc: &Scenario) -> Result<GareSolution> {
    if let Some(path) = &sc.file.controller.gains_file {
        let p = if path.is_absolute() { path.clone() } else { sc.base_dir.join(path) };
        return output::read_gains(&p);
    }
    let mut outcomes = rl::learn(sc)?;
    Ok(outcomes.remove(0).1.solution)
}

pub fn simulate(sc: &Scenario) -> Result<RunOutput> {
    let learned = match sc.file.controller.kind {
        ControllerKind::HinfRl => Some(learned_solution(sc)?),
        _ => None,
    };
    let net = sc.network_with(learned)?;
    let trace = net.simulate(&sc.run_config())?;
    let (solution, aug) = match &net.policy {
        Policy::Hinf { aug, sol, .. } => (Some(sol.clone()), Some(aug.clone())),
        _ => (None, None),
    };
    let m = &sc.file.metrics;
    let summary = metrics::summarize(
        sc.name(),
        &trace,
        m.window,
        &m.check,
        solution.as_ref().zip(aug.as_ref()).map(|(s, a)| (s, &a.q, &a.r)),
    );
    Ok(RunOutput { trace, summary, solution })
}

/// Simulate and write `agent_<i>.csv`, `leader.csv` and `summary.json` into `out`.
pub fn run(sc: &Scenario, out: &Path) -> Result<RunOutput> {
    let res = simulate(sc)?;
    output::write_trace(&res.trace, out)?;
    let json = serde_json::to_string_pretty(&res.summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join("summary.json"), json)?;
    if let Some(sol) = &res.solution {
        output::write_gains(sol, &out.join("gains.txt"))?;
    }
    info!("wrote {}", out.display());
    Ok(res)
}

fn fmt_mat(m: &crate::linalg::Mat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = (0..m.ncols()).map(|j| format!("{:.6}", m[(i, j)])).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Human-readable design report: graph quantities, baseline/observer gains and the
/// model-based game solution.
pub fn gains_report(sc: &Scenario) -> Result<String> {
    let mut s = String::new();
    let g = &sc.matrices;
    writeln!(s, "scenario: {}", sc.name()).unwrap();
    writeln!(s, "phi = {:?}", g.phi.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>()).unwrap();
    writeln!(s, "lambda_min(sym(Phi H)) = {:.6}", g.lambda_min_sym).unwrap();
    writeln!(s, "connectivity margin f = {}", crate::graph::connectivity_margin(&sc.topology, &[])).unwrap();
    let o = &sc.observer;
    writeln!(
        s,
        "observer: c = {:.6} (>= {:.6}), rho = {:.6} (>= v_max = {}), F = {}",
        o.c,
        ObserverGains::c_bound(g),
        o.rho,
        sc.model.v_max,
        fmt_mat(&o.f)
    )
    .unwrap();
    let b = sc.baseline_gains()?;
    writeln!(
        s,
        "baseline: c1 = {:.6} (>= {:.6}), c2 = {:.6} (>= v_max = {}), K = {}",
        b.c1,
        BaselineGains::c1_bound(g),
        b.c2,
        sc.model.v_max,
        fmt_mat(&b.k)
    )
    .unwrap();
    let sol = sc.model_gare()?;
    writeln!(s, "game: alpha = {}, gamma = {}, residual = {:.3e}", sol.alpha, sol.gamma, sol.residual).unwrap();
    writeln!(s, "P = {}", fmt_mat(&sol.p)).unwrap();
    writeln!(s, "K = {}", fmt_mat(&sol.k)).unwrap();
    writeln!(s, "S = {}", fmt_mat(&sol.pi_map)).unwrap();
    writeln!(s, "G = {}", fmt_mat(&sol.gamma_map)).unwrap();
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnReport {
    pub agent: usize,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub p_error: Option<f64>,
}

/// Learn from data and write one gains file per agent (`gains_agent<i>.txt`).
pub fn learn(sc: &Scenario, out: &Path) -> Result<Vec<(LearnReport, LearnOutcome)>> {
    fs::create_dir_all(out)?;
    let model = sc.model_gare().ok();
    let mut reports = Vec::new();
    for (agent, o) in rl::learn(sc)? {
        output::write_gains(&o.solution, &out.join(format!("gains_agent{}.txt", agent + 1)))?;
        let p_error = model.as_ref().map(|m| (&o.solution.p - &m.p).norm());
        reports.push((LearnReport { agent: agent + 1, iterations: o.iterations, history: o.history.clone(), p_error }, o));
    }
    let json: Vec<&LearnReport> = reports.iter().map(|r| &r.0).collect();
    fs::write(out.join("learn.json"), serde_json::to_string_pretty(&json).map_err(|e| Error::Config(e.to_string()))?)?;
    Ok(reports)
}

/// Override keys for a sweep parameter name.
pub fn sweep_keys(file: &ScenarioFile, param: &str) -> Result<Vec<String>> {
    let key = match param {
        "gamma" | "alpha" => format!("controller.{param}"),
        "delta" | "theta" | "beta" | "kappa" => format!("monitor.{param}"),
        "dt" => "dt".to_string(),
        "amplitude" => {
            let keys: Vec<String> = file
                .attack
                .iter()
                .filter(|(_, a)| matches!(a.signal, AttackSignalSection::Stealthy { .. }))
                .map(|(label, _)| format!("attack.{label}.signal.amplitude"))
                .collect();
            if keys.is_empty() {
                return Err(Error::Config("amplitude sweep needs a stealthy attack".into()));
            }
            return Ok(keys);
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (gamma, alpha, delta, theta, beta, kappa, dt, amplitude)"
            )))
        }
    };
    Ok(vec![key])
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: Option<Summary>,
    pub error: Option<String>,
    /// Exit code the failing run would have produced on its own.
    pub exit_code: Option<i32>,
}

impl SweepPoint {
    /// Worst exit code over a sweep (0 when every run completed).
    pub fn aggregate_code(points: &[SweepPoint]) -> i32 {
        points.iter().filter_map(|p| p.exit_code).max().unwrap_or(0)
    }
}

/// Run the scenario once per value in parallel; each point writes into `out/<param>_<value>`.
pub fn sweep(path: &Path, overrides: &[String], param: &str, values: &[f64], out: Option<&Path>) -> Result<Vec<SweepPoint>> {
    let (file, _) = ScenarioFile::load(path, overrides)?;
    let keys = sweep_keys(&file, param)?;
    let points: Vec<SweepPoint> = values
        .par_iter()
        .map(|&v| {
            let mut ov = overrides.to_vec();
            ov.extend(keys.iter().map(|k| format!("{k}={v:?}")));
            let res = Scenario::load(path, &ov).and_then(|sc| match out {
                Some(dir) => run(&sc, &dir.join(format!("{param}_{v}"))),
                None => simulate(&sc),
            });
            match res {
                Ok(r) => SweepPoint { value: v, summary: Some(r.summary), error: None, exit_code: None },
                Err(e) => SweepPoint { value: v, summary: None, error: Some(e.to_string()), exit_code: Some(e.exit_code()) },
            }
        })
        .collect();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&points).map_err(|e| Error::Config(e.to_string()))?)?;
    }
    Ok(points)
}

/// Directory holding the bundled scenarios.
pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}
