//! The standard two-term distributed tracking protocol (vulnerable to stealthy attacks).

use crate::error::Result;
use crate::graph::{GraphMatrices, GraphTopology};
use crate::linalg::{Mat, Vector};
use crate::plant::SystemModel;
use crate::riccati;

pub const DEFAULT_BOUNDARY_LAYER: f64 = 1e-3;
pub const DEFAULT_MARGIN: f64 = 1.1;

#[derive(Clone, Debug)]
pub struct BaselineGains {
    pub c1: f64,
    pub c2: f64,
    pub k: Mat,
}

impl BaselineGains {
    /// `c1 = c1_margin / min Re eig(H)`, `c2 = c2_margin · v_m`, `K = −BᵀX`.
    pub fn design(model: &SystemModel, graph: &GraphMatrices, c1_margin: f64, c2_margin: f64) -> Result<Self> {
        let (_, k) = riccati::solve_gain_lmi(&model.a, &model.b)?;
        Ok(Self { c1: c1_margin / graph.lambda_min_h, c2: c2_margin * model.v_max, k })
    }

    pub fn c1_bound(graph: &GraphMatrices) -> f64 {
        1.0 / graph.lambda_min_h
    }

    /// Describing-function gain of the two-term law when it must cancel a sinusoidal
    /// attack of amplitude `attack`: the fundamental of `c1 y + c2 sgn(y)` is
    /// `(c1 + 4 c2 / (π Y)) y`, and balancing `c1 Y + 4 c2 / π = |ω|` gives
    /// `c̄ = |ω| c1 / (|ω| − 4 c2 / π)`. `None` when the nonlinear term alone can cancel it.
    pub fn describing_gain(&self, attack: f64) -> Option<f64> {
        let w = attack.abs();
        let room = w - 4.0 * self.c2 / std::f64::consts::PI;
        (room > 0.0).then(|| w * self.c1 / room)
    }
}

/// `e_i = Σ a_ij (x_j − x_i) + b_i (ζ₀ − x_i)`.
pub fn local_tracking_error(i: usize, states: &[Vector], leader: &Vector, topology: &GraphTopology) -> Vector {
    let xi = &states[i];
    let mut e = (leader - xi) * topology.pinning()[i];
    for (j, w) in topology.in_neighbors(i) {
        e += (&states[j] - xi) * w;
    }
    e
}

/// Boundary-layer unit vector `x / (‖x‖ + ε)`; `ε = 0` gives the exact normaliser with h(0) = 0.
pub fn normalizer(x: &Vector, eps: f64) -> Vector {
    let n = x.norm();
    if n + eps == 0.0 {
        return Vector::zeros(x.len());
    }
    x / (n + eps)
}

/// `c1 K e + c2 h(K e)`.
pub fn two_term(k: &Mat, e: &Vector, c1: f64, c2: f64, eps: f64) -> Vector {
    let ke = k * e;
    &ke * c1 + normalizer(&ke, eps) * c2
}

/// Control for agent i. The law is applied to the disagreement `−e_i`: with `K = −BᵀX`
/// this is the stabilising sign (see README, "Sign convention").
pub fn control(i: usize, states: &[Vector], leader: &Vector, topology: &GraphTopology, gains: &BaselineGains, eps: f64) -> Vector {
    let e = local_tracking_error(i, states, leader, topology);
    two_term(&gains.k, &(-e), gains.c1, gains.c2, eps)
}
