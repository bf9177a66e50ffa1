//! Confidence and trust monitors built from purely local observer evidence.

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::plant::rk4_step;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorParams {
    pub delta: f64,
    pub theta: f64,
    pub beta: f64,
    pub kappa: f64,
    pub normalize_trust: bool,
}

impl Default for MonitorParams {
    fn default() -> Self {
        Self { delta: 0.1, theta: 0.1, beta: 10.0, kappa: 10.0, normalize_trust: false }
    }
}

/// Data agent i holds about one in-neighbour j at a time instant.
#[derive(Clone, Debug)]
pub struct Incoming<'a> {
    pub weight: f64,
    /// Observer state as received (possibly corrupted on the link).
    pub r: &'a Vector,
    /// Confidence broadcast by j.
    pub confidence: f64,
    pub trust: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evidence {
    pub o: f64,
    pub s: f64,
    pub q: f64,
}

/// `T_ij = max(C_i, d_ij)`, optionally normalised to sum to one.
pub fn trust_weights(c_i: f64, d: &[f64], normalize: bool) -> Vec<f64> {
    let mut t: Vec<f64> = d.iter().map(|&dij| c_i.max(dij).clamp(0.0, 1.0)).collect();
    if normalize {
        let sum: f64 = t.iter().sum();
        if sum > 0.0 {
            t.iter_mut().for_each(|v| *v /= sum);
        }
    }
    t
}

/// `η_i = Σ C_j T_ij a_ij (r_j − r_i) + b_i (ζ₀ − r_i)`.
pub fn eta(r_i: &Vector, incoming: &[Incoming], pinning: f64, leader: &Vector) -> Vector {
    let mut e = (leader - r_i) * pinning;
    for n in incoming {
        e += (n.r - r_i) * (n.confidence * n.trust * n.weight);
    }
    e
}

/// `s_i = Σ a_ij ‖r_j − r_i‖ + b_i ‖ζ₀ − r_i‖`, ignoring all trust weights.
pub fn raw_disagreement(r_i: &Vector, incoming: &[Incoming], pinning: f64, leader: &Vector) -> f64 {
    pinning * (leader - r_i).norm() + incoming.iter().map(|n| n.weight * (n.r - r_i).norm()).sum::<f64>()
}

pub fn gap_score(o: f64, s: f64, delta: f64) -> f64 {
    delta / (delta + (s - o).abs())
}

pub fn observe(r_i: &Vector, incoming: &[Incoming], pinning: f64, leader: &Vector, delta: f64) -> Evidence {
    let o = eta(r_i, incoming, pinning, leader).norm();
    let s = raw_disagreement(r_i, incoming, pinning, leader);
    Evidence { o, s, q: gap_score(o, s, delta) }
}

/// `Ċ = β (q − C)`.
pub fn confidence_rate(q: f64, c: f64, beta: f64) -> f64 {
    beta * (q - c)
}

/// One RK4 step of the confidence filter with `q` held over the step.
pub fn update_confidence(q: f64, c: f64, beta: f64, dt: f64) -> f64 {
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = confidence_rate(q, y[0], beta);
    rk4_step(&mut f, 0.0, &[c], dt)[0].clamp(0.0, 1.0)
}

/// `l_ij = θ / (‖r_j − h_i‖ + θ)` with `h_i` the mean of the received neighbour states.
pub fn neighbor_scores(received: &[&Vector], theta: f64) -> Vec<f64> {
    if received.is_empty() {
        return Vec::new();
    }
    let mut h = Vector::zeros(received[0].len());
    for r in received {
        h += *r;
    }
    h /= received.len() as f64;
    received.iter().map(|r| theta / ((*r - &h).norm() + theta)).collect()
}

/// One RK4 step of `ḋ_ij = κ (l_ij − d_ij)` followed by `T_ij = max(C_i, d_ij)`.
/// Returns `(d_ij, T_ij)`.
pub fn update_trust(l_ij: f64, d_ij: f64, c_i: f64, kappa: f64, dt: f64) -> (f64, f64) {
    let d = update_confidence(l_ij, d_ij, kappa, dt);
    (d, c_i.max(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synchronized_network_is_trusted() {
        let z = Vector::from_column_slice(&[0.4, -1.0]);
        let inc = [Incoming { weight: 1.0, r: &z, confidence: 1.0, trust: 1.0 }];
        let ev = observe(&z, &inc, 1.0, &z, 0.1);
        assert_eq!((ev.o, ev.s, ev.q), (0.0, 0.0, 1.0));
        assert_eq!(neighbor_scores(&[&z, &z], 0.1), vec![1.0, 1.0]);
    }

    #[test]
    fn gap_score_value() {
        assert!((gap_score(0.0, 0.9, 0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn trust_is_max_of_confidence_and_score() {
        assert_eq!(trust_weights(0.2, &[0.7], false), vec![0.7]);
        let t = trust_weights(0.5, &[0.2, 1.0], true);
        assert!((t[0] - 1.0 / 3.0).abs() < 1e-15 && (t[1] - 2.0 / 3.0).abs() < 1e-15);
        let (d, t) = update_trust(1.0, 1.0, 0.2, 10.0, 1e-3);
        assert_eq!((d, t), (1.0, 1.0));
    }

    #[test]
    fn isolated_agent_has_zero_eta() {
        let r = Vector::from_column_slice(&[1.0, 2.0]);
        let other = Vector::from_column_slice(&[5.0, -3.0]);
        let inc = [Incoming { weight: 1.0, r: &other, confidence: 0.0, trust: 1.0 }];
        assert_eq!(eta(&r, &inc, 0.0, &other), Vector::zeros(2));
    }
}
