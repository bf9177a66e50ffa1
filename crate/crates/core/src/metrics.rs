//! Run summaries and threshold checks.

use serde::Serialize;

use crate::hinf::{self, GareSolution};
use crate::linalg::{Mat, Vector};
use crate::scenario::{CheckKind, CheckSpec, Quantifier};
use crate::sim::SimTrace;

#[derive(Clone, Debug, Serialize)]
pub struct AgentMetrics {
    pub agent: usize,
    pub final_deviation: f64,
    pub window_max_deviation: f64,
    pub peak_deviation: f64,
    pub window_max_error: f64,
    pub window_max_observer_error: f64,
    pub min_confidence: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct L2Metrics {
    pub agent: usize,
    pub output_energy: f64,
    pub attack_energy: f64,
    pub ratio: f64,
    pub initial_value: f64,
    pub bound: f64,
    pub certified: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Per-agent measured value `(agent, value)`.
    pub values: Vec<(usize, f64)>,
    pub threshold: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub window: [f64; 2],
    pub agents: Vec<AgentMetrics>,
    pub l2: Vec<L2Metrics>,
    pub online_lambda_min: Option<f64>,
    pub checks: Vec<CheckResult>,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn agent_metrics(trace: &SimTrace, window: [f64; 2]) -> Vec<AgentMetrics> {
    let last = trace.t.len() - 1;
    (0..trace.n_agents())
        .map(|i| AgentMetrics {
            agent: i + 1,
            final_deviation: trace.deviation(i, last),
            window_max_deviation: trace.max_over(window[0], window[1], |k| trace.deviation(i, k)),
            peak_deviation: trace.max_over(f64::NEG_INFINITY, f64::INFINITY, |k| trace.deviation(i, k)),
            window_max_error: trace.max_over(window[0], window[1], |k| trace.agents[i][k].e_norm),
            window_max_observer_error: trace.max_over(window[0], window[1], |k| trace.observer_error(i, k)),
            min_confidence: trace.agents[i].iter().map(|s| s.c).fold(f64::INFINITY, f64::min),
        })
        .collect()
}

/// Discounted L2 ratio for one agent, with the value at t = 0 as certification slack.
pub fn l2_for_agent(trace: &SimTrace, agent: usize, sol: &GareSolution, q: &Mat, r: &Mat) -> Option<L2Metrics> {
    let len = trace.t.len();
    let x: Vec<_> = (0..len).map(|k| trace.augmented(agent, k)).collect();
    let u: Vec<_> = trace.agents[agent].iter().map(|s| s.u.clone()).collect();
    let w: Vec<_> = trace.agents[agent].iter().map(|s| s.omega.clone()).collect();
    let gain = hinf::l2_gain_ratio(&trace.t, &x, &u, &w, q, r, sol.alpha).ok()?;
    let initial_value = sol.value(&x[0], &trace.agents[agent][0].upsilon);
    let g2 = sol.gamma * sol.gamma;
    Some(L2Metrics {
        agent: agent + 1,
        output_energy: gain.output_energy,
        attack_energy: gain.attack_energy,
        ratio: gain.ratio,
        initial_value,
        bound: g2 + initial_value.max(0.0) / gain.attack_energy,
        certified: gain.certified(sol.gamma, initial_value),
    })
}

/// Fourier fundamental of the deviation `x_i − ζ₀` at angular frequency `omega` over
/// `[from, to]` (trapezoid rule): returns `(a, b)` with `δ(t) ≈ a cos ωt + b sin ωt`.
pub fn deviation_fundamental(trace: &SimTrace, agent: usize, omega: f64, from: f64, to: f64) -> (Vector, Vector) {
    let idx: Vec<usize> = trace.indices_in(from, to).collect();
    let n = trace.leader[0].len();
    let (mut a, mut b) = (Vector::zeros(n), Vector::zeros(n));
    for w in idx.windows(2) {
        let h = trace.t[w[1]] - trace.t[w[0]];
        for &k in w {
            let d = &trace.agents[agent][k].x - &trace.leader[k];
            let t = trace.t[k];
            a += &d * (0.5 * h * (omega * t).cos());
            b += &d * (0.5 * h * (omega * t).sin());
        }
    }
    let span = trace.t[*idx.last().unwrap()] - trace.t[idx[0]];
    (a * (2.0 / span), b * (2.0 / span))
}

fn quantify(q: Quantifier, oks: impl Iterator<Item = bool>) -> bool {
    let v: Vec<bool> = oks.collect();
    !v.is_empty()
        && match q {
            Quantifier::All => v.iter().all(|&b| b),
            Quantifier::Any => v.iter().any(|&b| b),
        }
}

pub fn evaluate_check(spec: &CheckSpec, trace: &SimTrace, default_window: [f64; 2], l2: &[L2Metrics]) -> CheckResult {
    let agents: Vec<usize> = spec.agents.iter().filter(|&&a| a >= 1 && a <= trace.n_agents()).map(|a| a - 1).collect();
    let w = spec.window.unwrap_or(default_window);
    let whole = spec.window.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
    let measure = |i: usize| -> f64 {
        match spec.kind {
            CheckKind::DeviationBelow | CheckKind::DeviationAbove => trace.max_over(w[0], w[1], |k| trace.deviation(i, k)),
            CheckKind::ErrorBelow => trace.max_over(w[0], w[1], |k| trace.agents[i][k].e_norm),
            CheckKind::ObserverErrorBelow => trace.max_over(w[0], w[1], |k| trace.observer_error(i, k)),
            CheckKind::ConfidenceBelow | CheckKind::ConfidenceAtLeast => trace
                .indices_in(whole[0], whole[1])
                .map(|k| trace.agents[i][k].c)
                .fold(f64::INFINITY, f64::min),
            CheckKind::L2Certified => l2.iter().find(|m| m.agent == i + 1).map_or(f64::NAN, |m| m.ratio),
        }
    };
    let values: Vec<(usize, f64)> = agents.iter().map(|&i| (i + 1, measure(i))).collect();
    let t = spec.threshold;
    let passed = quantify(
        spec.quantifier,
        values.iter().map(|&(a, v)| match spec.kind {
            CheckKind::DeviationBelow | CheckKind::ErrorBelow | CheckKind::ObserverErrorBelow | CheckKind::ConfidenceBelow => v < t,
            CheckKind::DeviationAbove => v > t,
            CheckKind::ConfidenceAtLeast => v >= t,
            CheckKind::L2Certified => l2.iter().any(|m| m.agent == a && m.certified),
        }),
    );
    CheckResult { name: spec.name.clone(), passed, values, threshold: t }
}

pub fn summarize(name: &str, trace: &SimTrace, window: [f64; 2], checks: &[CheckSpec], sol: Option<(&GareSolution, &Mat, &Mat)>) -> Summary {
    let l2: Vec<L2Metrics> = match sol {
        Some((s, q, r)) => (0..trace.n_agents()).filter_map(|i| l2_for_agent(trace, i, s, q, r)).collect(),
        None => Vec::new(),
    };
    let online_lambda_min = trace.lambda_audit.iter().map(|p| p.1).reduce(f64::min);
    Summary {
        scenario: name.to_string(),
        window,
        agents: agent_metrics(trace, window),
        checks: checks.iter().map(|c| evaluate_check(c, trace, window, &l2)).collect(),
        l2,
        online_lambda_min,
    }
}
