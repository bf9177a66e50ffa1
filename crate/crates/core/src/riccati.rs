//! Riccati solvers: the observer ARE, the inverse-ARE LMI certificate and the discounted
//! game ARE.
//!
//! All problems are reduced to `Tαᵀ P + P Tα − P M P + Q = 0` with `Tα = T − (α/2) I` and
//! `M = B R⁻¹ Bᵀ − γ⁻² D Dᵀ`. The stable invariant subspace of the Hamiltonian
//! `[[Tα, −M], [−Q, −Tαᵀ]]` is extracted with the matrix sign function and the result is
//! polished with Newton steps on the residual.

use log::debug;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

pub const STANDARD_TOL: f64 = 1e-10;
pub const GAME_TOL: f64 = 1e-8;
pub const HURWITZ_MARGIN: f64 = 1e-9;
pub const PBH_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct AreProblem {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    /// Attack channel and attenuation level.
    pub attack: Option<(Mat, f64)>,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct AreSolution {
    pub p: Mat,
    pub residual_norm: f64,
    pub stabilizing: bool,
}

impl AreProblem {
    pub fn lqr(a: Mat, b: Mat, q: Mat, r: Mat) -> Self {
        Self { a, b, q, r, attack: None, alpha: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let bad = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
        if self.a.ncols() != n {
            return bad("A must be square");
        }
        if self.b.nrows() != n {
            return bad("B rows must match A");
        }
        if self.q.shape() != (n, n) {
            return bad("Q must be n×n");
        }
        let m = self.b.ncols();
        if self.r.shape() != (m, m) {
            return bad("R must be m×m");
        }
        if let Some((d, gamma)) = &self.attack {
            if d.nrows() != n {
                return bad("D rows must match A");
            }
            if !(*gamma > 0.0) {
                return Err(Error::Config("gamma must be positive".into()));
            }
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("discount alpha must be >= 0".into()));
        }
        if (&self.q - self.q.transpose()).norm() > 1e-12 * self.q.norm().max(1.0) || linalg::sym_min_eig(&self.q) < -1e-12 {
            return Err(Error::Config("Q must be symmetric positive semidefinite".into()));
        }
        if (&self.r - self.r.transpose()).norm() > 1e-12 * self.r.norm().max(1.0) || linalg::sym_min_eig(&self.r) <= 0.0 {
            return Err(Error::Config("R must be symmetric positive definite".into()));
        }
        Ok(())
    }

    pub fn shifted_drift(&self) -> Mat {
        let n = self.a.nrows();
        &self.a - Mat::identity(n, n) * (self.alpha / 2.0)
    }

    /// `B R⁻¹ Bᵀ − γ⁻² D Dᵀ`.
    pub fn quadratic_weight(&self) -> Mat {
        let rinv = self.r.clone().try_inverse().expect("R validated positive definite");
        let mut m = &self.b * rinv * self.b.transpose();
        if let Some((d, gamma)) = &self.attack {
            m -= d * d.transpose() / (gamma * gamma);
        }
        m
    }

    pub fn residual(&self, p: &Mat) -> Mat {
        let ta = self.shifted_drift();
        ta.transpose() * p + p * &ta - p * self.quadratic_weight() * p + &self.q
    }

    pub fn closed_loop(&self, p: &Mat) -> Mat {
        self.shifted_drift() - self.quadratic_weight() * p
    }

    fn failure(&self) -> Error {
        match self.attack {
            Some((_, gamma)) => Error::GammaTooSmall { gamma },
            None => Error::NotStabilizable,
        }
    }

    fn tolerance(&self) -> f64 {
        if self.attack.is_some() {
            GAME_TOL
        } else {
            STANDARD_TOL
        }
    }
}

pub fn hamiltonian(problem: &AreProblem) -> Mat {
    let n = problem.a.nrows();
    let ta = problem.shifted_drift();
    let m = problem.quadratic_weight();
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ta);
    h.view_mut((0, n), (n, n)).copy_from(&(-m));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&problem.q));
    h.view_mut((n, n), (n, n)).copy_from(&(-ta.transpose()));
    h
}

fn stable_subspace_solution(problem: &AreProblem) -> Option<Mat> {
    let n = problem.a.nrows();
    let h = hamiltonian(problem);
    let scale = h.norm().max(1.0);
    if linalg::eigenvalues(&h).iter().any(|z| z.re.abs() <= HURWITZ_MARGIN * scale) {
        debug!("Hamiltonian has eigenvalues on the imaginary axis");
        return None;
    }
    let w = linalg::matrix_sign(&h)?;
    // Stable subspace = ker(W + I); with basis [I; P] this reads [W12; W22+I] P = −[W11+I; W21].
    let wi = w + Mat::identity(2 * n, 2 * n);
    let lhs = wi.columns(n, n).into_owned();
    let rhs = -wi.columns(0, n).into_owned();
    let svd = lhs.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-12 * sv.max() {
        debug!("stable subspace is not a graph over the first block");
        return None;
    }
    let p = svd.solve(&rhs, 0.0).ok()?;
    Some(linalg::symmetrize(&p))
}

/// Newton refinement on the Riccati residual; needs a stabilizing start.
fn newton_refine(problem: &AreProblem, mut p: Mat, steps: usize) -> Result<Mat> {
    let m = problem.quadratic_weight();
    for _ in 0..steps {
        if problem.residual(&p).norm() < 1e-3 * problem.tolerance() {
            break;
        }
        let ak = problem.closed_loop(&p);
        if !linalg::is_hurwitz(&ak, HURWITZ_MARGIN) {
            break;
        }
        let c = &problem.q + &p * &m * &p;
        p = linalg::lyapunov(&ak, &c)?;
    }
    Ok(p)
}

/// Kleinman-style iteration from `p = 0`; only usable when the shifted drift is stable.
fn kleinman_from_zero(problem: &AreProblem) -> Option<Mat> {
    let n = problem.a.nrows();
    if !linalg::is_hurwitz(&problem.shifted_drift(), HURWITZ_MARGIN) {
        return None;
    }
    let mut p = Mat::zeros(n, n);
    for _ in 0..200 {
        let next = newton_refine(problem, p.clone(), 1).ok()?;
        if !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        let done = (&next - &p).norm() <= 1e-14 * next.norm().max(1.0);
        p = next;
        if done {
            return Some(p);
        }
    }
    Some(p)
}

pub fn solve_are(problem: &AreProblem) -> Result<AreSolution> {
    problem.validate()?;
    let n = problem.a.nrows();
    if !linalg::stabilizable(&problem.shifted_drift(), &problem.b, PBH_TOL) {
        return Err(Error::NotStabilizable);
    }
    let initial = stable_subspace_solution(problem)
        .or_else(|| kleinman_from_zero(problem))
        .ok_or_else(|| problem.failure())?;
    let p = linalg::symmetrize(&newton_refine(problem, initial, 8)?);
    let residual_norm = problem.residual(&p).norm();
    let stabilizing = linalg::is_hurwitz(&problem.closed_loop(&p), HURWITZ_MARGIN);
    debug!("ARE n={n} residual={residual_norm:e} stabilizing={stabilizing}");
    if !p.iter().all(|v| v.is_finite()) || residual_norm >= problem.tolerance() || !stabilizing {
        return Err(problem.failure());
    }
    // A stabilizing game solution that is not PSD is the wrong saddle point for an
    // attenuation problem (γ below the achievable level).
    if problem.attack.is_some() && linalg::sym_min_eig(&p) < -1e-8 * p.norm().max(1.0) {
        return Err(problem.failure());
    }
    Ok(AreSolution { p, residual_norm, stabilizing })
}

/// `AᵀP + PA + I − PBBᵀP = 0`.
pub fn solve_standard_are(a: &Mat, b: &Mat) -> Result<AreSolution> {
    let n = a.nrows();
    let m = b.ncols();
    let sol = solve_are(&AreProblem::lqr(a.clone(), b.clone(), Mat::identity(n, n), Mat::identity(m, m)))?;
    if linalg::sym_min_eig(&sol.p) <= 0.0 {
        return Err(Error::NotStabilizable);
    }
    Ok(sol)
}

/// Inverse-ARE certificate for the baseline LMI: returns `(P_lmi, K)` with `P_lmi = X⁻¹`
/// and `K = −BᵀX`.
pub fn solve_gain_lmi(a: &Mat, b: &Mat) -> Result<(Mat, Mat)> {
    let x = solve_standard_are(a, b)?.p;
    let p_lmi = linalg::symmetrize(&x.clone().try_inverse().ok_or(Error::NotStabilizable)?);
    let k = -(b.transpose() * &x);
    Ok((p_lmi, k))
}

pub fn solve_discounted_game_are(problem: &AreProblem) -> Result<AreSolution> {
    solve_are(problem)
}
