//! Observer-tracking H∞ design on the augmented state `X = [x − r; r]`.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::plant::SystemModel;
use crate::riccati::{self, AreProblem};

#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    pub t: Mat,
    pub b1: Mat,
    pub d1: Mat,
    pub e1: Mat,
    pub q: Mat,
    pub r: Mat,
    pub alpha: f64,
    pub gamma: f64,
}

impl AugmentedSystem {
    pub fn assemble(model: &SystemModel, q1: &Mat, r: &Mat, alpha: f64, gamma: f64) -> Result<Self> {
        let n = model.n();
        let m = model.m();
        if q1.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!("Q1 must be {n}×{n} and R {m}×{m}")));
        }
        if !(alpha >= 0.0) || !(gamma > 0.0) {
            return Err(Error::Config("need alpha >= 0 and gamma > 0".into()));
        }
        let t = linalg::block_diag(&model.a, &model.a);
        let stack = |top: &Mat, bottom: &Mat| {
            let mut out = Mat::zeros(2 * n, top.ncols());
            out.view_mut((0, 0), top.shape()).copy_from(top);
            out.view_mut((n, 0), bottom.shape()).copy_from(bottom);
            out
        };
        let b1 = stack(&model.b, &Mat::zeros(n, m));
        let d1 = stack(&model.d, &Mat::zeros(n, model.d_dim()));
        let e1 = stack(&(-&model.b), &model.b);
        let q = linalg::block_diag(q1, &Mat::zeros(n, n));
        Ok(Self { t, b1, d1, e1, q, r: r.clone(), alpha, gamma })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn problem(&self) -> AreProblem {
        AreProblem {
            a: self.t.clone(),
            b: self.b1.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            attack: Some((self.d1.clone(), self.gamma)),
            alpha: self.alpha,
        }
    }

    pub fn r_inv(&self) -> Mat {
        self.r.clone().try_inverse().expect("R positive definite")
    }

    /// `B1 R⁻¹ B1ᵀ − γ⁻² D1 D1ᵀ`.
    pub fn m(&self) -> Mat {
        &self.b1 * self.r_inv() * self.b1.transpose() - &self.d1 * self.d1.transpose() / (self.gamma * self.gamma)
    }

    /// `αI + P M − Tᵀ`, the drift of the Π equation.
    pub fn pi_drift(&self, p: &Mat) -> Mat {
        Mat::identity(self.dim(), self.dim()) * self.alpha + p * self.m() - self.t.transpose()
    }

    /// `Π̇ = (αI + PM − Tᵀ) Π − P E1 υ`.
    pub fn pi_rate(&self, p: &Mat, pi: &Vector, upsilon: &Vector) -> Vector {
        self.pi_drift(p) * pi - p * &self.e1 * upsilon
    }

    /// `Γ̇ = αΓ + ΠᵀB1R⁻¹B1ᵀΠ − γ⁻²ΠᵀD1D1ᵀΠ − 2υᵀE1ᵀΠ`.
    pub fn gamma_rate(&self, gamma_v: f64, pi: &Vector, upsilon: &Vector) -> f64 {
        self.alpha * gamma_v + (pi.transpose() * self.m() * pi)[(0, 0)] - 2.0 * (upsilon.transpose() * self.e1.transpose() * pi)[(0, 0)]
    }

    /// `u = −R⁻¹B1ᵀ(P X + Π)`.
    pub fn control_with_pi(&self, p: &Mat, x: &Vector, pi: &Vector) -> Vector {
        -(self.r_inv() * self.b1.transpose() * (p * x + pi))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolutionSource {
    Model,
    Learned,
}

/// Policy artefact. With the quasi-steady Π the non-homogeneous terms are linear/quadratic
/// in the observer input: `Π = S υ`, `Γ = υᵀ G υ`.
#[derive(Clone, Debug)]
pub struct GareSolution {
    pub p: Mat,
    pub pi_map: Mat,
    pub gamma_map: Mat,
    /// `K = −R⁻¹B1ᵀP`.
    pub k: Mat,
    /// `g = g_map υ = −R⁻¹B1ᵀS υ`.
    pub g_map: Mat,
    /// `γ⁻²D1ᵀP`.
    pub worst_gain: Mat,
    /// `γ⁻²D1ᵀS`.
    pub worst_ff: Mat,
    pub residual: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub source: SolutionSource,
    pub iterations: usize,
}

impl GareSolution {
    pub fn pi(&self, upsilon: &Vector) -> Vector {
        &self.pi_map * upsilon
    }

    pub fn gamma_value(&self, upsilon: &Vector) -> f64 {
        (upsilon.transpose() * &self.gamma_map * upsilon)[(0, 0)]
    }

    pub fn value(&self, x: &Vector, upsilon: &Vector) -> f64 {
        (x.transpose() * &self.p * x)[(0, 0)] + 2.0 * x.dot(&self.pi(upsilon)) + self.gamma_value(upsilon)
    }

    /// `u* = K X + g`.
    pub fn control(&self, x: &Vector, upsilon: &Vector) -> Vector {
        &self.k * x + &self.g_map * upsilon
    }

    /// `ω* = γ⁻² D1ᵀ (P X + Π)`.
    pub fn worst_case_attack(&self, x: &Vector, upsilon: &Vector) -> Vector {
        &self.worst_gain * x + &self.worst_ff * upsilon
    }
}

pub fn solve(aug: &AugmentedSystem) -> Result<GareSolution> {
    let sol = riccati::solve_discounted_game_are(&aug.problem())?;
    let p = sol.p;
    let drift = aug.pi_drift(&p);
    let pi_map = drift.lu().solve(&(&p * &aug.e1)).ok_or(Error::GammaTooSmall { gamma: aug.gamma })?;
    let m = aug.m();
    let cross = pi_map.transpose() * &aug.e1;
    let gamma_map = if aug.alpha > 0.0 {
        (-(pi_map.transpose() * &m * &pi_map) + &cross + cross.transpose()) / aug.alpha
    } else {
        Mat::zeros(aug.b1.ncols(), aug.b1.ncols())
    };
    let rb = aug.r_inv() * aug.b1.transpose();
    let dg = aug.d1.transpose() / (aug.gamma * aug.gamma);
    Ok(GareSolution {
        k: -(&rb * &p),
        g_map: -(&rb * &pi_map),
        worst_gain: &dg * &p,
        worst_ff: &dg * &pi_map,
        p,
        pi_map,
        gamma_map,
        residual: sol.residual_norm,
        alpha: aug.alpha,
        gamma: aug.gamma,
        source: SolutionSource::Model,
        iterations: 0,
    })
}

/// `H = XᵀQX + uᵀRu − γ²ωᵀω + ∇V·(TX + B1u + D1ω + E1υ) − αV` for the quasi-steady value.
pub fn hamiltonian(aug: &AugmentedSystem, sol: &GareSolution, x: &Vector, upsilon: &Vector, u: &Vector, w: &Vector) -> f64 {
    let grad = (&sol.p * x + sol.pi(upsilon)) * 2.0;
    let xdot = &aug.t * x + &aug.b1 * u + &aug.d1 * w + &aug.e1 * upsilon;
    (x.transpose() * &aug.q * x)[(0, 0)] + (u.transpose() * &aug.r * u)[(0, 0)] - aug.gamma * aug.gamma * w.dot(w) + grad.dot(&xdot)
        - aug.alpha * sol.value(x, upsilon)
}

#[derive(Clone, Copy, Debug)]
pub struct L2Gain {
    /// `∫ e^{−αt}(XᵀQX + uᵀRu) dt`.
    pub output_energy: f64,
    /// `∫ e^{−αt} ωᵀω dt`.
    pub attack_energy: f64,
    pub ratio: f64,
}

impl L2Gain {
    /// Dissipation inequality with the initial-value slack.
    pub fn certified(&self, gamma: f64, initial_value: f64) -> bool {
        self.output_energy <= gamma * gamma * self.attack_energy + initial_value.max(0.0)
    }
}

/// Discounted output/attack energy ratio by the trapezoidal rule on a uniform-or-not grid.
pub fn l2_gain_ratio(t: &[f64], x: &[Vector], u: &[Vector], w: &[Vector], q: &Mat, r: &Mat, alpha: f64) -> Result<L2Gain> {
    let len = t.len();
    if x.len() != len || u.len() != len || w.len() != len {
        return Err(Error::DimensionMismatch("trace columns differ in length".into()));
    }
    let out: Vec<f64> = (0..len)
        .map(|k| (-alpha * t[k]).exp() * ((x[k].transpose() * q * &x[k])[(0, 0)] + (u[k].transpose() * r * &u[k])[(0, 0)]))
        .collect();
    let att: Vec<f64> = (0..len).map(|k| (-alpha * t[k]).exp() * w[k].dot(&w[k])).collect();
    let trap = |y: &[f64]| (1..len).map(|k| 0.5 * (y[k] + y[k - 1]) * (t[k] - t[k - 1])).sum::<f64>();
    let output_energy = trap(&out);
    let attack_energy = trap(&att);
    if attack_energy <= 0.0 {
        return Err(Error::ZeroAttackEnergy);
    }
    Ok(L2Gain { output_energy, attack_energy, ratio: output_energy / attack_energy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_zero_policy() {
        let aug = AugmentedSystem::assemble(&SystemModel::paper(), &(Mat::identity(2, 2) * 100.0), &Mat::identity(1, 1), 0.1, 10.0).unwrap();
        let sol = solve(&aug).unwrap();
        let x = Vector::zeros(4);
        let v = Vector::zeros(1);
        assert_eq!(sol.control(&x, &v), Vector::zeros(1));
        assert_eq!(sol.worst_case_attack(&x, &v), Vector::zeros(1));
        assert_eq!(sol.pi(&v), Vector::zeros(4));
    }

    #[test]
    fn zero_attack_energy_is_an_error() {
        let t = [0.0, 0.1, 0.2];
        let z = vec![Vector::zeros(1); 3];
        let q = Mat::identity(1, 1);
        assert!(matches!(l2_gain_ratio(&t, &z, &z, &z, &q, &q, 0.1), Err(Error::ZeroAttackEnergy)));
    }

    #[test]
    fn assemble_rejects_bad_weights() {
        let model = SystemModel::paper();
        assert!(AugmentedSystem::assemble(&model, &Mat::identity(3, 3), &Mat::identity(1, 1), 0.1, 10.0).is_err());
        assert!(AugmentedSystem::assemble(&model, &Mat::identity(2, 2), &Mat::identity(1, 1), 0.1, 0.0).is_err());
    }
}
