//! Distributed leader-state observer gains and input law.

use crate::baseline::two_term;
use crate::error::Result;
use crate::graph::GraphMatrices;
use crate::linalg::{Mat, Vector};
use crate::plant::SystemModel;
use crate::riccati;

#[derive(Clone, Debug)]
pub struct ObserverGains {
    pub f: Mat,
    pub c: f64,
    pub rho: f64,
    pub p_obs: Mat,
}

impl ObserverGains {
    /// `F = −BᵀP`, `c = margin · φ_max / λ_min(ΦH + HᵀΦ)`, `ρ = margin · v_m`.
    pub fn design(model: &SystemModel, graph: &GraphMatrices, margin: f64) -> Result<Self> {
        let p_obs = riccati::solve_standard_are(&model.a, &model.b)?.p;
        let f = -(model.b.transpose() * &p_obs);
        Ok(Self {
            f,
            c: margin * Self::c_bound(graph),
            rho: margin * model.v_max,
            p_obs,
        })
    }

    pub fn c_bound(graph: &GraphMatrices) -> f64 {
        graph.phi_max() / graph.lambda_min_sym
    }
}

/// `υ_i = c F ξ + ρ h(F ξ)` evaluated on the disagreement `ξ = −η_i`.
pub fn observer_input(eta: &Vector, gains: &ObserverGains, eps: f64) -> Vector {
    two_term(&gains.f, &(-eta), gains.c, gains.rho, eps)
}

/// `V(η) = ηᵀ (Φ ⊗ P) η` for the stacked observer errors.
pub fn lyapunov_value(etas: &[Vector], phi: &Vector, p_obs: &Mat) -> f64 {
    etas.iter()
        .zip(phi.iter())
        .map(|(e, w)| w * (e.transpose() * p_obs * e)[(0, 0)])
        .sum()
}
