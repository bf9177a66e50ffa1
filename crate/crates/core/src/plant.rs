//! Agent/leader dynamics, attack signals and the fixed-step integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, GraphTopology};
use crate::linalg::{self, Mat, Vector};

/// Scalar time signal used for leader inputs, attack waveforms and probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    Zero,
    Constant { value: f64 },
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    DecayingSine { amplitude: f64, decay: f64, frequency: f64 },
    Multisine { amplitude: f64, frequencies: Vec<f64>, phases: Vec<f64> },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::Sine { amplitude, frequency, phase } => amplitude * (frequency * t + phase).sin(),
            Signal::DecayingSine { amplitude, decay, frequency } => {
                amplitude * (-decay * t).exp() * (frequency * t).sin()
            }
            Signal::Multisine { amplitude, frequencies, phases } => {
                amplitude
                    * frequencies
                        .iter()
                        .zip(phases)
                        .map(|(f, p)| (f * t + p).sin())
                        .sum::<f64>()
            }
        }
    }

    /// Envelope bound on |signal| for t ≥ 0.
    pub fn bound(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value.abs(),
            Signal::Sine { amplitude, .. } => amplitude.abs(),
            Signal::DecayingSine { amplitude, decay, .. } => {
                if *decay >= 0.0 {
                    amplitude.abs()
                } else {
                    f64::INFINITY
                }
            }
            Signal::Multisine { amplitude, frequencies, .. } => amplitude.abs() * frequencies.len() as f64,
        }
    }
}

pub fn eval_signals(signals: &[Signal], t: f64) -> Vector {
    Vector::from_iterator(signals.len(), signals.iter().map(|s| s.eval(t)))
}

#[derive(Clone, Debug)]
pub struct SystemModel {
    pub a: Mat,
    pub b: Mat,
    pub d: Mat,
    pub leader_input: Vec<Signal>,
    pub v_max: f64,
}

impl SystemModel {
    pub fn new(a: Mat, b: Mat, d: Mat, leader_input: Vec<Signal>, v_max: Option<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || d.nrows() != n {
            return Err(Error::DimensionMismatch("A must be n×n and B, D must have n rows".into()));
        }
        if leader_input.len() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "leader input has {} channels, B has {} columns",
                leader_input.len(),
                b.ncols()
            )));
        }
        let bound = leader_input.iter().map(|s| s.bound().powi(2)).sum::<f64>().sqrt();
        let v_max = v_max.unwrap_or(bound);
        if !(v_max >= bound) {
            return Err(Error::Config(format!("v_max = {v_max} is below the leader input bound {bound}")));
        }
        Ok(Self { a, b, d, leader_input, v_max })
    }

    /// The five-agent example: harmonic oscillator with leader input 4e^{−0.15t} sin 2t.
    pub fn paper() -> Self {
        let a = Mat::from_row_slice(2, 2, &[0.0, -4.0, 1.0, 0.0]);
        let b = Mat::from_column_slice(2, 1, &[1.0, 0.0]);
        let input = Signal::DecayingSine { amplitude: 4.0, decay: 0.15, frequency: 2.0 };
        Self::new(a, b.clone(), b, vec![input], None).expect("static model is valid")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn d_dim(&self) -> usize {
        self.d.ncols()
    }

    pub fn leader_input_at(&self, t: f64) -> Vector {
        eval_signals(&self.leader_input, t)
    }
}

/// Linear exosystem `ẇ = Γw`, `ω = C w`, with time measured from t = 0.
#[derive(Clone, Debug)]
pub struct StealthyGenerator {
    pub gamma: Mat,
    pub initial: Vector,
    pub output: Mat,
    modes: Vec<(f64, f64)>,
}

impl StealthyGenerator {
    pub fn new(a: &Mat, gamma: Mat, initial: Vector, output: Mat) -> Result<Self> {
        let k = gamma.nrows();
        if gamma.ncols() != k || initial.len() != k || output.ncols() != k {
            return Err(Error::DimensionMismatch("generator blocks are inconsistent".into()));
        }
        for z in linalg::eigenvalues(&gamma) {
            find_mode(a, z.re, z.im)?;
        }
        let modes = closed_form_modes(&gamma);
        Ok(Self { gamma, initial, output, modes })
    }

    pub fn state(&self, t: f64) -> Vector {
        if let Some(w) = self.closed_form_state(t) {
            return w;
        }
        (&self.gamma * t).exp() * &self.initial
    }

    pub fn eval(&self, t: f64) -> Vector {
        &self.output * self.state(t)
    }

    /// Generators built from 1×1 / rotation blocks evaluate without a matrix exponential.
    fn closed_form_state(&self, t: f64) -> Option<Vector> {
        if self.modes.is_empty() {
            return None;
        }
        let mut w = Vector::zeros(self.initial.len());
        let mut k = 0;
        for &(re, im) in &self.modes {
            let g = (re * t).exp();
            if im == 0.0 {
                w[k] = g * self.initial[k];
                k += 1;
            } else {
                let (s, c) = (im * t).sin_cos();
                let (w1, w2) = (self.initial[k], self.initial[k + 1]);
                w[k] = g * (c * w1 + s * w2);
                w[k + 1] = g * (-s * w1 + c * w2);
                k += 2;
            }
        }
        Some(w)
    }
}

/// Recognise block-diagonal `[re]` / `[[re, im], [−im, re]]` structure.
fn closed_form_modes(gamma: &Mat) -> Vec<(f64, f64)> {
    let k = gamma.nrows();
    let mut modes = Vec::new();
    let mut i = 0;
    while i < k {
        let two = i + 1 < k && gamma[(i, i + 1)] != 0.0;
        let size = if two { 2 } else { 1 };
        for r in 0..k {
            for c in 0..k {
                let inside = r >= i && r < i + size && c >= i && c < i + size;
                if (r >= i && r < i + size || c >= i && c < i + size) && !inside && gamma[(r, c)] != 0.0 {
                    return Vec::new();
                }
            }
        }
        if two {
            let (re, im) = (gamma[(i, i)], gamma[(i, i + 1)]);
            if gamma[(i + 1, i + 1)] != re || gamma[(i + 1, i)] != -im {
                return Vec::new();
            }
            modes.push((re, im));
        } else {
            modes.push((gamma[(i, i)], 0.0));
        }
        i += size;
    }
    modes
}

fn find_mode(a: &Mat, re: f64, im: f64) -> Result<()> {
    let hit = linalg::eigenvalues(a)
        .iter()
        .any(|z| ((z.re - re).powi(2) + (z.im.abs() - im.abs()).powi(2)).sqrt() <= 1e-9 * (1.0 + z.norm()));
    if hit {
        Ok(())
    } else {
        Err(Error::ModeNotFound { re, im })
    }
}

/// Generator reproducing the modal signal `amplitude · e^{re t} sin(im t)` (or
/// `amplitude · e^{re t}` for a real mode) on channel `channel` of a d-dimensional attack.
pub fn make_stealthy_attack(a: &Mat, amplitude: f64, re: f64, im: f64, d: usize, channel: usize) -> Result<StealthyGenerator> {
    if channel >= d {
        return Err(Error::DimensionMismatch(format!("attack channel {channel} outside 0..{d}")));
    }
    find_mode(a, re, im)?;
    let im = im.abs();
    if im == 0.0 {
        let mut out = Mat::zeros(d, 1);
        out[(channel, 0)] = amplitude;
        StealthyGenerator::new(a, Mat::from_element(1, 1, re), Vector::from_element(1, 1.0), out)
    } else {
        let gamma = Mat::from_row_slice(2, 2, &[re, im, -im, re]);
        let mut out = Mat::zeros(d, 2);
        out[(channel, 0)] = amplitude;
        StealthyGenerator::new(a, gamma, Vector::from_column_slice(&[0.0, 1.0]), out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttackKind {
    /// Injected through the plant channel D.
    Type1,
    /// Added to the target's observer dynamics through D; the node also broadcasts C = 1.
    Type2Node,
    /// Corrupts the observer value sent from `source` to the target on that one edge.
    Type2Link { source: usize },
}

#[derive(Clone, Debug)]
pub enum AttackSignal {
    Stealthy(StealthyGenerator),
    Waveform(Vec<Signal>),
}

#[derive(Clone, Debug)]
pub struct AttackSpec {
    pub target: usize,
    pub kind: AttackKind,
    pub signal: AttackSignal,
    pub start: f64,
}

impl AttackSpec {
    /// The d-vector the attacker injects at time t (zero before onset).
    pub fn value(&self, t: f64, d: usize) -> Vector {
        if t < self.start {
            return Vector::zeros(d);
        }
        match &self.signal {
            AttackSignal::Stealthy(g) => g.eval(t),
            AttackSignal::Waveform(s) => eval_signals(s, t),
        }
    }
}

/// One classical RK4 step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &[f64], dt: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    f(t + 0.5 * dt, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    f(t + 0.5 * dt, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    f(t + dt, &tmp, &mut k4);
    (0..n)
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrate over `[0, horizon]` with `steps` equal steps; returns the final state.
pub fn integrate<F>(mut f: F, y0: &[f64], horizon: f64, steps: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dt = horizon / steps as f64;
    let mut y = y0.to_vec();
    for k in 0..steps {
        let t = k as f64 * dt;
        y = rk4_step(&mut f, t, &y, dt);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t: t + dt });
        }
    }
    Ok(y)
}

/// Leader trajectory `ζ̇ = Aζ + Bv₀(t)` sampled at the end of the horizon.
pub fn leader_state(model: &SystemModel, z0: &[f64], horizon: f64, steps: usize) -> Result<Vec<f64>> {
    let mut bv = vec![0.0; model.n()];
    integrate(
        |t, y, dy| {
            linalg::matvec_into(&model.a, y, dy);
            linalg::matvec_into(&model.b, model.leader_input_at(t).as_slice(), &mut bv);
            for (o, v) in dy.iter_mut().zip(&bv) {
                *o += v;
            }
        },
        z0,
        horizon,
        steps,
    )
}

/// Steady deviation of each follower from the leader under a persistent stealthy attack on
/// `target`, for the baseline law linearised with effective coupling `c_bar` on the
/// compromised agent. Intact agents end up with zero local error, so the compromised
/// agent's disagreement ξ_c = S w must satisfy `A S = S Γ` and `c̄ B K S + D C = 0`;
/// offsets follow from `δ = (H⁻¹ ⊗ I)(e_c ⊗ ξ_c)`.
#[derive(Clone, Debug)]
pub struct SteadyState {
    /// Per-agent map from generator state to deviation `x_i − ζ₀`.
    pub maps: Vec<Mat>,
}

impl SteadyState {
    pub fn offsets(&self, w: &Vector) -> Vec<Vector> {
        self.maps.iter().map(|s| s * w).collect()
    }
}

pub fn steady_state_under_attack(
    topology: &GraphTopology,
    model: &SystemModel,
    k: &Mat,
    c_bar: f64,
    target: usize,
    generator: &StealthyGenerator,
) -> Result<SteadyState> {
    let n = model.n();
    let g = generator.gamma.nrows();
    if k.shape() != (model.m(), n) || generator.output.nrows() != model.d_dim() {
        return Err(Error::DimensionMismatch("K or generator output has the wrong shape".into()));
    }
    if target >= topology.n_agents() {
        return Err(Error::Config(format!("target {} is not a follower", target + 1)));
    }
    let h = match graph::build_matrices(topology) {
        Ok(m) => m.h,
        Err(_) => return Err(Error::SingularLf),
    };
    let hinv = h.try_inverse().ok_or(Error::SingularLf)?;

    // vec(A S − S Γ) = (I ⊗ A − Γᵀ ⊗ I) vec S ; vec(c̄ B K S) = (I ⊗ c̄BK) vec S.
    let eye_g = Mat::identity(g, g);
    let eye_n = Mat::identity(n, n);
    let modal = linalg::kron(&eye_g, &model.a) - linalg::kron(&generator.gamma.transpose(), &eye_n);
    let channel = linalg::kron(&eye_g, &(&model.b * k * c_bar));
    let rows = modal.nrows() + channel.nrows();
    let mut lhs = Mat::zeros(rows, n * g);
    lhs.view_mut((0, 0), modal.shape()).copy_from(&modal);
    lhs.view_mut((modal.nrows(), 0), channel.shape()).copy_from(&channel);
    let dc = &model.d * &generator.output;
    let mut rhs = Vector::zeros(rows);
    rhs.rows_mut(modal.nrows(), n * g).copy_from(&(-Vector::from_column_slice(dc.as_slice())));

    let svd = lhs.clone().svd(true, true);
    let xi = svd.solve(&rhs, 1e-12).map_err(|_| Error::NoSteadyState)?;
    if (&lhs * &xi - &rhs).norm() > 1e-8 * rhs.norm().max(1.0) {
        return Err(Error::NoSteadyState);
    }
    let s = Mat::from_column_slice(n, g, xi.as_slice());
    let maps = (0..topology.n_agents()).map(|i| &s * hinv[(i, target)]).collect();
    Ok(SteadyState { maps })
}
