//! Off-policy integral RL for the discounted non-homogeneous game.
//!
//! The learner sees only sampled trajectories (augmented state X, applied input u, applied
//! disturbance ω, observer input υ) and the cost weights; it never touches A, B or D.
//!
//! The value is parameterised as `V(X, υ) = XᵀPX + 2XᵀSυ + υᵀGυ`, i.e. the quasi-steady
//! form of `Π = Sυ`, `Γ = υᵀGυ`. Treating υ as an exogenous signal, each window
//! `[t, t+T]` gives one linear equation
//!
//! ```text
//! e^{−αT}V(t+T) − V(t) − 2∫e (XᵀS + υᵀG) dυ − 2∫e (W_u X + σ_u υ)ᵀ R (u − uᵏ)
//!     − 2γ²∫e (W_ω X + σ_ω υ)ᵀ (ω − ωᵏ) = −∫e (XᵀQX + uᵏᵀRuᵏ − γ²|ωᵏ|²)
//! ```
//!
//! with `e = e^{−α(τ−t)}`, target policies `uᵏ = −(W_uᵏX + σ_uᵏυ)`, `ωᵏ = W_ωᵏX + σ_ωᵏυ`.
//! The unknowns `W_u = R⁻¹B1ᵀP`, `σ_u = R⁻¹B1ᵀS`, `W_ω = γ⁻²D1ᵀP`, `σ_ω = γ⁻²D1ᵀS`
//! are the improved policies.

use log::{debug, info};

use crate::error::{Error, Result};
use crate::hinf::{GareSolution, SolutionSource};
use crate::linalg::{Mat, Vector};
use crate::scenario::Scenario;
use crate::sim::{Policy, RunConfig};

/// Samples of one window at simulation resolution.
#[derive(Clone, Debug)]
pub struct DataTuple {
    pub t0: f64,
    pub dt: f64,
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    pub w: Vec<Vector>,
    pub upsilon: Vec<Vector>,
}

#[derive(Clone, Debug)]
pub struct LearningWeights {
    pub q: Mat,
    pub r: Mat,
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueParameters {
    pub p: Mat,
    pub s: Mat,
    pub g: Mat,
    pub k: usize,
}

/// Target policy pair: `u = −(wu X + su υ)`, `ω = ww X + sw υ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParameters {
    pub wu: Mat,
    pub su: Mat,
    pub ww: Mat,
    pub sw: Mat,
}

impl PolicyParameters {
    pub fn zero(dims: Dims) -> Self {
        Self {
            wu: Mat::zeros(dims.m, dims.nx),
            su: Mat::zeros(dims.m, dims.m),
            ww: Mat::zeros(dims.d, dims.nx),
            sw: Mat::zeros(dims.d, dims.m),
        }
    }

    fn u(&self, x: &Vector, v: &Vector) -> Vector {
        -(&self.wu * x + &self.su * v)
    }

    fn w(&self, x: &Vector, v: &Vector) -> Vector {
        &self.ww * x + &self.sw * v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    /// Augmented state dimension 2n.
    pub nx: usize,
    pub m: usize,
    pub d: usize,
}

impl Dims {
    pub fn of(tuples: &[DataTuple]) -> Result<Self> {
        let first = tuples.first().ok_or(Error::SingularRegression)?;
        let s = Self { nx: first.x[0].len(), m: first.u[0].len(), d: first.w[0].len() };
        if first.upsilon[0].len() != s.m {
            return Err(Error::DimensionMismatch("observer input must have the control dimension".into()));
        }
        Ok(s)
    }

    pub fn value_unknowns(&self) -> usize {
        self.nx * (self.nx + 1) / 2 + self.nx * self.m + self.m * (self.m + 1) / 2
    }

    pub fn unknowns(&self) -> usize {
        self.value_unknowns() + self.m * self.nx + self.m * self.m + self.d * self.nx + self.d * self.m
    }

    /// Default window count: 1.5× the regression unknowns, rounded up.
    pub fn default_windows(&self) -> usize {
        (1.5 * self.unknowns() as f64).ceil() as usize
    }
}

#[derive(Clone, Debug)]
pub struct LsqOutcome {
    pub value: ValueParameters,
    pub policy: PolicyParameters,
    pub residual: f64,
    pub condition: f64,
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct LearnOutcome {
    pub solution: GareSolution,
    pub iterations: usize,
    /// `‖Pᵏ − Pᵏ⁻¹‖_F` per iteration (with P⁰ = 0).
    pub history: Vec<f64>,
    pub iterates: Vec<Mat>,
}

fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

fn trap(y: &[f64], dt: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    dt * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[y.len() - 1]))
}

fn quad(a: &Vector, m: &Mat, b: &Vector) -> f64 {
    (a.transpose() * m * b)[(0, 0)]
}

/// Regression row and right-hand side for one window under target policy `pol`.
fn window_row(tp: &DataTuple, lw: &LearningWeights, pol: &PolicyParameters, dims: Dims) -> (Vec<f64>, f64) {
    let len = tp.x.len();
    let dt = tp.dt;
    let disc: Vec<f64> = (0..len).map(|k| (-lw.alpha * k as f64 * dt).exp()).collect();
    let e_end = disc[len - 1];
    let (x0, x1) = (&tp.x[0], &tp.x[len - 1]);
    let (v0, v1) = (&tp.upsilon[0], &tp.upsilon[len - 1]);
    let g2 = lw.gamma * lw.gamma;
    let mut row = Vec::with_capacity(dims.unknowns());

    for (i, j) in sym_pairs(dims.nx) {
        let f = if i == j { 1.0 } else { 2.0 };
        row.push(f * (e_end * x1[i] * x1[j] - x0[i] * x0[j]));
    }
    // Stieltjes sums ∫e f dυ with midpoint values.
    let stieltjes = |f: &dyn Fn(usize) -> f64, c: usize| -> f64 {
        (1..len)
            .map(|k| 0.5 * (disc[k] + disc[k - 1]) * 0.5 * (f(k) + f(k - 1)) * (tp.upsilon[k][c] - tp.upsilon[k - 1][c]))
            .sum()
    };
    for a in 0..dims.nx {
        for c in 0..dims.m {
            let boundary = 2.0 * (e_end * x1[a] * v1[c] - x0[a] * v0[c]);
            row.push(boundary - 2.0 * stieltjes(&|k| tp.x[k][a], c));
        }
    }
    for (c, c2) in sym_pairs(dims.m) {
        let f = if c == c2 { 1.0 } else { 2.0 };
        let boundary = f * (e_end * v1[c] * v1[c2] - v0[c] * v0[c2]);
        let inner = if c == c2 {
            stieltjes(&|k| tp.upsilon[k][c], c)
        } else {
            stieltjes(&|k| tp.upsilon[k][c], c2) + stieltjes(&|k| tp.upsilon[k][c2], c)
        };
        row.push(boundary - 2.0 * inner);
    }

    let uk: Vec<Vector> = (0..len).map(|k| pol.u(&tp.x[k], &tp.upsilon[k])).collect();
    let wk: Vec<Vector> = (0..len).map(|k| pol.w(&tp.x[k], &tp.upsilon[k])).collect();
    let du: Vec<Vector> = (0..len).map(|k| &lw.r * (&tp.u[k] - &uk[k])).collect();
    let dw: Vec<Vector> = (0..len).map(|k| &tp.w[k] - &wk[k]).collect();
    let integral = |f: &dyn Fn(usize) -> f64| -> f64 {
        let y: Vec<f64> = (0..len).map(|k| disc[k] * f(k)).collect();
        trap(&y, dt)
    };
    for p in 0..dims.m {
        for a in 0..dims.nx {
            row.push(-2.0 * integral(&|k| tp.x[k][a] * du[k][p]));
        }
    }
    for p in 0..dims.m {
        for c in 0..dims.m {
            row.push(-2.0 * integral(&|k| tp.upsilon[k][c] * du[k][p]));
        }
    }
    for q in 0..dims.d {
        for a in 0..dims.nx {
            row.push(-2.0 * g2 * integral(&|k| tp.x[k][a] * dw[k][q]));
        }
    }
    for q in 0..dims.d {
        for c in 0..dims.m {
            row.push(-2.0 * g2 * integral(&|k| tp.upsilon[k][c] * dw[k][q]));
        }
    }
    let rhs = -integral(&|k| quad(&tp.x[k], &lw.q, &tp.x[k]) + quad(&uk[k], &lw.r, &uk[k]) - g2 * wk[k].dot(&wk[k]));
    (row, rhs)
}

pub fn regression(tuples: &[DataTuple], lw: &LearningWeights, pol: &PolicyParameters) -> Result<(Mat, Vector)> {
    let dims = Dims::of(tuples)?;
    let mut a = Mat::zeros(tuples.len(), dims.unknowns());
    let mut b = Vector::zeros(tuples.len());
    for (r, tp) in tuples.iter().enumerate() {
        if tp.x.len() < 2 || tp.u.len() != tp.x.len() || tp.w.len() != tp.x.len() || tp.upsilon.len() != tp.x.len() {
            return Err(Error::DimensionMismatch("window sample counts differ".into()));
        }
        let (row, rhs) = window_row(tp, lw, pol, dims);
        a.row_mut(r).copy_from_slice(&row);
        b[r] = rhs;
    }
    Ok((a, b))
}

/// Least squares by column-pivoted QR on unit-norm columns.
/// Returns `(solution, rank, condition estimate)`.
pub fn pivoted_lstsq(a: &Mat, b: &Vector) -> (Vector, usize, f64) {
    let cols = a.ncols();
    let scale: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    let mut scaled = a.clone();
    for j in 0..cols {
        scaled.column_mut(j).unscale_mut(scale[j]);
    }
    let qr = scaled.col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let p = qr.p();
    let k = r.nrows().min(cols);
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    let rank = diag.iter().filter(|&&d| d > 1e-12 * top).count();
    let qtb = q.transpose() * b;
    let mut z = Vector::zeros(cols);
    for i in (0..rank).rev() {
        let mut acc = qtb[i];
        for j in i + 1..rank {
            acc -= r[(i, j)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    p.inv_permute_rows(&mut z);
    for j in 0..cols {
        z[j] /= scale[j];
    }
    let condition = if rank == 0 {
        f64::INFINITY
    } else {
        let sv = r.view((0, 0), (rank, rank)).into_owned().svd(false, false).singular_values;
        if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY }
    };
    (z, rank, condition)
}

fn unpack(sol: &Vector, dims: Dims, k: usize) -> (ValueParameters, PolicyParameters) {
    let mut it = sol.iter().copied();
    let mut p = Mat::zeros(dims.nx, dims.nx);
    for (i, j) in sym_pairs(dims.nx) {
        let v = it.next().unwrap();
        p[(i, j)] = v;
        p[(j, i)] = v;
    }
    let mut s = Mat::zeros(dims.nx, dims.m);
    for a in 0..dims.nx {
        for c in 0..dims.m {
            s[(a, c)] = it.next().unwrap();
        }
    }
    let mut g = Mat::zeros(dims.m, dims.m);
    for (i, j) in sym_pairs(dims.m) {
        let v = it.next().unwrap();
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    let mut take = |r: usize, c: usize| {
        let mut m = Mat::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                m[(i, j)] = it.next().unwrap();
            }
        }
        m
    };
    let wu = take(dims.m, dims.nx);
    let su = take(dims.m, dims.m);
    let ww = take(dims.d, dims.nx);
    let sw = take(dims.d, dims.m);
    (ValueParameters { p, s, g, k }, PolicyParameters { wu, su, ww, sw })
}

/// One policy-iteration step: evaluate the current target policies and return the value
/// together with the improved policies.
pub fn bellman_lsq(tuples: &[DataTuple], current: &PolicyParameters, k: usize, lw: &LearningWeights) -> Result<LsqOutcome> {
    let dims = Dims::of(tuples)?;
    let (a, b) = regression(tuples, lw, current)?;
    if a.nrows() < dims.unknowns() {
        return Err(Error::SingularRegression);
    }
    let (sol, rank, condition) = pivoted_lstsq(&a, &b);
    if rank < dims.unknowns() || !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularRegression);
    }
    let residual = (&a * &sol - &b).norm();
    debug!("bellman_lsq k={k} rank={rank} cond={condition:.3e} residual={residual:.3e}");
    let (value, policy) = unpack(&sol, dims, k);
    Ok(LsqOutcome { value, policy, residual, condition, rank })
}

/// Per-window Bellman residuals of a candidate value/policy pair (`pol` is the target
/// policy being evaluated, `next` the improved one implied by the value).
pub fn bellman_residuals(tuples: &[DataTuple], lw: &LearningWeights, value: &ValueParameters, pol: &PolicyParameters, next: &PolicyParameters) -> Result<Vec<f64>> {
    let dims = Dims::of(tuples)?;
    let mut x = Vec::with_capacity(dims.unknowns());
    for (i, j) in sym_pairs(dims.nx) {
        x.push(value.p[(i, j)]);
    }
    for a in 0..dims.nx {
        for c in 0..dims.m {
            x.push(value.s[(a, c)]);
        }
    }
    for (i, j) in sym_pairs(dims.m) {
        x.push(value.g[(i, j)]);
    }
    for m in [&next.wu, &next.su, &next.ww, &next.sw] {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                x.push(m[(i, j)]);
            }
        }
    }
    let (a, b) = regression(tuples, lw, pol)?;
    Ok((a * Vector::from_vec(x) - b).iter().copied().collect())
}

/// Check the regression for the initial policy has full column rank.
pub fn excitation_rank(tuples: &[DataTuple], lw: &LearningWeights) -> Result<usize> {
    let dims = Dims::of(tuples)?;
    let (a, _) = regression(tuples, lw, &PolicyParameters::zero(dims))?;
    let (_, rank, _) = pivoted_lstsq(&a, &Vector::zeros(a.nrows()));
    if rank < dims.unknowns() {
        return Err(Error::InsufficientExcitation { rank, unknowns: dims.unknowns() });
    }
    Ok(rank)
}

/// Iterate `bellman_lsq` from the zero policy until `‖Pᵏ − Pᵏ⁻¹‖_F < tol`.
pub fn learn_from_data(tuples: &[DataTuple], lw: &LearningWeights, tol: f64, k_max: usize) -> Result<LearnOutcome> {
    let dims = Dims::of(tuples)?;
    let mut policy = PolicyParameters::zero(dims);
    let mut prev = Mat::zeros(dims.nx, dims.nx);
    let mut history = Vec::new();
    let mut iterates = Vec::new();
    for k in 1..=k_max {
        let out = bellman_lsq(tuples, &policy, k, lw)?;
        let change = (&out.value.p - &prev).norm();
        history.push(change);
        iterates.push(out.value.p.clone());
        info!("iteration {k}: ‖ΔP‖ = {change:.3e}, LS residual {:.3e}, cond {:.3e}", out.residual, out.condition);
        prev = out.value.p.clone();
        policy = out.policy.clone();
        if change < tol {
            let sol = GareSolution {
                p: out.value.p.clone(),
                pi_map: out.value.s.clone(),
                gamma_map: out.value.g.clone(),
                k: -&out.policy.wu,
                g_map: -&out.policy.su,
                worst_gain: out.policy.ww.clone(),
                worst_ff: out.policy.sw.clone(),
                residual: out.residual,
                alpha: lw.alpha,
                gamma: lw.gamma,
                source: SolutionSource::Learned,
                iterations: k,
            };
            return Ok(LearnOutcome { solution: sol, iterations: k, history, iterates });
        }
    }
    Err(Error::NoConvergence { iterations: k_max, history })
}

/// Data for one learning agent.
#[derive(Clone, Debug)]
pub struct AgentData {
    pub agent: usize,
    pub tuples: Vec<DataTuple>,
}

/// Run the behaviour policy on the scenario's network and slice evenly spaced windows.
pub fn collect(scenario: &Scenario) -> Result<Vec<AgentData>> {
    let rl = &scenario.file.rl;
    let (probes, exploration) = scenario.exploration_signals();
    let mut net = scenario.network(Policy::Behavior { kb: scenario.behavior_gain()?, probes, exploration });
    if let Some(eps) = rl.boundary_layer {
        net.boundary_layer = eps;
    }
    let dt = scenario.file.dt;
    let trace = net.simulate(&RunConfig { horizon: rl.horizon, dt, record_every: 1 })?;
    let steps = trace.t.len() - 1;
    let span = (rl.sample_interval / dt).round() as usize;
    if span == 0 || span > steps {
        return Err(Error::Config("sample_interval must be within (dt, horizon]".into()));
    }
    let n = scenario.model.n();
    let dims = Dims { nx: 2 * n, m: scenario.model.m(), d: scenario.model.d_dim() };
    let windows = rl.windows.unwrap_or_else(|| dims.default_windows());
    if windows == 0 {
        return Err(Error::Config("need at least one learning window".into()));
    }
    let last = steps - span;
    let starts: Vec<usize> = (0..windows)
        .map(|w| if windows == 1 { 0 } else { (w as f64 * last as f64 / (windows - 1) as f64).floor() as usize })
        .collect();
    let mut out = Vec::new();
    for &id in &rl.agents {
        let i = id - 1;
        let tuples = starts
            .iter()
            .map(|&s| DataTuple {
                t0: trace.t[s],
                dt,
                x: (s..=s + span).map(|k| trace.augmented(i, k)).collect(),
                u: (s..=s + span).map(|k| trace.agents[i][k].u.clone()).collect(),
                w: (s..=s + span).map(|k| trace.agents[i][k].plant_omega.clone()).collect(),
                upsilon: (s..=s + span).map(|k| trace.agents[i][k].upsilon.clone()).collect(),
            })
            .collect();
        out.push(AgentData { agent: i, tuples });
    }
    Ok(out)
}

pub fn weights(scenario: &Scenario) -> Result<LearningWeights> {
    let aug = scenario.augmented()?;
    Ok(LearningWeights { q: aug.q, r: aug.r, alpha: aug.alpha, gamma: aug.gamma })
}

/// Collect data and learn one solution per configured agent.
pub fn learn(scenario: &Scenario) -> Result<Vec<(usize, LearnOutcome)>> {
    let lw = weights(scenario)?;
    let data = collect(scenario)?;
    let mut out = Vec::new();
    for d in data {
        excitation_rank(&d.tuples, &lw)?;
        let o = learn_from_data(&d.tuples, &lw, scenario.file.rl.tol, scenario.file.rl.max_iter)?;
        info!("agent {} converged in {} iterations", d.agent + 1, o.iterations);
        out.push((d.agent, o));
    }
    Ok(out)
}
