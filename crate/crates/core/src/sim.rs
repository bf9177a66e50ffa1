//! Coupled network simulation: leader, plants, observers, monitors and (optionally) the
//! Π/Γ filters, advanced together by one RK4 step per dt.

use log::{debug, trace};

use crate::baseline::{self, BaselineGains};
use crate::error::{Error, Result};
use crate::graph::{GraphMatrices, GraphTopology};
use crate::hinf::{AugmentedSystem, GareSolution};
use crate::linalg::{self, Mat, Vector};
use crate::observer::{self, ObserverGains};
use crate::plant::{rk4_step, AttackKind, AttackSpec, Signal, SystemModel};
use crate::trust::{self, Incoming, MonitorParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiMode {
    QuasiSteady,
    Filter,
}

#[derive(Clone, Debug)]
pub enum Policy {
    Baseline(BaselineGains),
    Hinf { aug: AugmentedSystem, sol: GareSolution, mode: PiMode },
    /// Data-collection policy `u = K_b (x − r) + probe`, with a known exploration signal
    /// added to the plant channel.
    Behavior { kb: Mat, probes: Vec<Vec<Signal>>, exploration: Vec<Vec<Signal>> },
}

#[derive(Clone, Debug)]
pub struct Network {
    pub model: SystemModel,
    pub topology: GraphTopology,
    pub matrices: GraphMatrices,
    pub observer: ObserverGains,
    pub monitor: MonitorParams,
    pub policy: Policy,
    pub attacks: Vec<AttackSpec>,
    pub boundary_layer: f64,
    pub leader0: Vector,
    pub x0: Vec<Vector>,
    pub r0: Vec<Vector>,
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSample {
    pub x: Vector,
    pub r: Vector,
    pub u: Vector,
    /// Every attack/exploration signal aimed at this agent, summed.
    pub omega: Vector,
    /// Plant-channel disturbance only (Type-1 attack plus exploration).
    pub plant_omega: Vector,
    pub upsilon: Vector,
    pub e_norm: f64,
    pub eta_norm: f64,
    pub o: f64,
    pub s: f64,
    pub c: f64,
    pub trust: Vec<Option<f64>>,
    /// Forward Γ diagnostic (H∞ policies only).
    pub value_offset: f64,
}

#[derive(Clone, Debug)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub leader: Vec<Vector>,
    pub agents: Vec<Vec<AgentSample>>,
    /// `(t, λ_min)` of the trust-weighted intact graph, logged whenever weights drift > 1 %.
    pub lambda_audit: Vec<(f64, f64)>,
    pub compromised: Vec<usize>,
}

impl SimTrace {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn deviation(&self, agent: usize, k: usize) -> f64 {
        (&self.agents[agent][k].x - &self.leader[k]).norm()
    }

    pub fn observer_error(&self, agent: usize, k: usize) -> f64 {
        (&self.agents[agent][k].r - &self.leader[k]).norm()
    }

    pub fn indices_in(&self, from: f64, to: f64) -> impl Iterator<Item = usize> + '_ {
        let tol = 1e-9;
        self.t
            .iter()
            .enumerate()
            .filter(move |(_, &t)| t >= from - tol && t <= to + tol)
            .map(|(k, _)| k)
    }

    pub fn max_over<F: Fn(usize) -> f64>(&self, from: f64, to: f64, f: F) -> f64 {
        self.indices_in(from, to).map(f).fold(0.0, f64::max)
    }

    /// Augmented state `[x − r; r]` of one agent at sample k.
    pub fn augmented(&self, agent: usize, k: usize) -> Vector {
        let s = &self.agents[agent][k];
        let n = s.x.len();
        let mut x = Vector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&(&s.x - &s.r));
        x.rows_mut(n, n).copy_from(&s.r);
        x
    }
}

struct Layout {
    n: usize,
    agents: usize,
    x: usize,
    r: usize,
    c: usize,
    d: usize,
    pi: usize,
    gam: usize,
    len: usize,
}

/// Per-agent inbound edge list: `(state index of d_ij, j, a_ij)`.
type Inbound = Vec<Vec<(usize, usize, f64)>>;

struct Signals {
    u: Vec<Vector>,
    omega: Vec<Vector>,
    plant_omega: Vec<Vector>,
    upsilon: Vec<Vector>,
    e_norm: Vec<f64>,
    eta: Vec<Vector>,
    o: Vec<f64>,
    s: Vec<f64>,
    trust: Vec<Vec<Option<f64>>>,
    weights: Vec<Vec<(usize, f64)>>,
}

impl Network {
    fn layout(&self) -> (Layout, Inbound) {
        let n = self.model.n();
        let agents = self.topology.n_agents();
        let x = n;
        let r = x + agents * n;
        let c = r + agents * n;
        let d = c + agents;
        let mut inbound: Inbound = vec![Vec::new(); agents];
        let mut next = d;
        for (i, list) in inbound.iter_mut().enumerate() {
            for (j, w) in self.topology.in_neighbors(i) {
                list.push((next, j, w));
                next += 1;
            }
        }
        let pi = next;
        let (pi_len, gam_len) = match &self.policy {
            Policy::Hinf { mode: PiMode::Filter, .. } => (agents * 2 * n, agents),
            Policy::Hinf { .. } => (0, agents),
            _ => (0, 0),
        };
        let gam = pi + pi_len;
        let len = gam + gam_len;
        (Layout { n, agents, x, r, c, d, pi, gam, len }, inbound)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        let agents = self.topology.n_agents();
        if self.leader0.len() != n
            || self.x0.len() != agents
            || self.r0.len() != agents
            || self.x0.iter().chain(&self.r0).any(|v| v.len() != n)
        {
            return Err(Error::DimensionMismatch("initial conditions do not match n and N".into()));
        }
        for a in &self.attacks {
            if a.target >= agents {
                return Err(Error::Config(format!("attack target {} is not a follower", a.target + 1)));
            }
            if a.start < 0.0 {
                return Err(Error::Config("attack start must be >= 0".into()));
            }
            if let AttackKind::Type2Link { source } = a.kind {
                if !self.topology.in_neighbors(a.target).iter().any(|(j, _)| *j == source) {
                    return Err(Error::Config(format!("no edge {}→{} to attack", source + 1, a.target + 1)));
                }
            }
        }
        if let Policy::Behavior { kb, probes, exploration } = &self.policy {
            if kb.shape() != (self.model.m(), n) || probes.len() != agents || exploration.len() != agents {
                return Err(Error::DimensionMismatch("behaviour policy shapes".into()));
            }
        }
        Ok(())
    }

    /// Agents whose observer or plant is directly attacked.
    pub fn compromised(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .attacks
            .iter()
            .filter(|a| !matches!(a.kind, AttackKind::Type2Link { .. }))
            .map(|a| a.target)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn hijacked(&self) -> Vec<bool> {
        let mut v = vec![false; self.topology.n_agents()];
        for a in &self.attacks {
            if a.kind == AttackKind::Type2Node {
                v[a.target] = true;
            }
        }
        v
    }

    fn initial_state(&self, lay: &Layout) -> Vec<f64> {
        let n = lay.n;
        let mut y = vec![0.0; lay.len];
        y[..n].copy_from_slice(self.leader0.as_slice());
        for i in 0..lay.agents {
            y[lay.x + i * n..lay.x + (i + 1) * n].copy_from_slice(self.x0[i].as_slice());
            y[lay.r + i * n..lay.r + (i + 1) * n].copy_from_slice(self.r0[i].as_slice());
            y[lay.c + i] = 1.0;
        }
        for v in &mut y[lay.d..lay.pi] {
            *v = 1.0;
        }
        y
    }

    fn eval(&self, lay: &Layout, inbound: &Inbound, hijacked: &[bool], t: f64, y: &[f64], dy: &mut [f64], rec: Option<&mut Signals>) {
        let n = lay.n;
        let nag = lay.agents;
        let ddim = self.model.d_dim();
        let a = &self.model.a;
        let b = &self.model.b;
        let dmat = &self.model.d;
        let slice = |off: usize, i: usize| Vector::from_column_slice(&y[off + i * n..off + (i + 1) * n]);

        let z = Vector::from_column_slice(&y[..n]);
        let dz = a * &z + b * self.model.leader_input_at(t);
        dy[..n].copy_from_slice(dz.as_slice());

        let mut w_plant = vec![Vector::zeros(ddim); nag];
        let mut w_obs = vec![Vector::zeros(ddim); nag];
        let mut w_all = vec![Vector::zeros(ddim); nag];
        let mut link: Vec<(usize, usize, Vector)> = Vec::new();
        for atk in &self.attacks {
            if t < atk.start {
                continue;
            }
            let w = atk.value(t, ddim);
            w_all[atk.target] += &w;
            match atk.kind {
                AttackKind::Type1 => w_plant[atk.target] += w,
                AttackKind::Type2Node => w_obs[atk.target] += w,
                AttackKind::Type2Link { source } => link.push((atk.target, source, dmat * w)),
            }
        }
        if let Policy::Behavior { exploration, .. } = &self.policy {
            for i in 0..nag {
                let w = crate::plant::eval_signals(&exploration[i], t);
                w_plant[i] += &w;
                w_all[i] += w;
            }
        }

        let xs: Vec<Vector> = (0..nag).map(|i| slice(lay.x, i)).collect();
        let rs: Vec<Vector> = (0..nag).map(|i| slice(lay.r, i)).collect();
        let conf: Vec<f64> = (0..nag).map(|i| y[lay.c + i]).collect();
        let broadcast: Vec<f64> = (0..nag).map(|j| if hijacked[j] { 1.0 } else { conf[j] }).collect();

        let mut out = rec;
        for i in 0..nag {
            let received: Vec<Vector> = inbound[i]
                .iter()
                .map(|&(_, j, _)| {
                    let mut r = rs[j].clone();
                    for (tgt, src, off) in &link {
                        if *tgt == i && *src == j {
                            r += off;
                        }
                    }
                    r
                })
                .collect();
            let dvals: Vec<f64> = inbound[i].iter().map(|&(idx, _, _)| y[idx]).collect();
            let tw = trust::trust_weights(conf[i], &dvals, self.monitor.normalize_trust);
            let incoming: Vec<Incoming> = inbound[i]
                .iter()
                .zip(&received)
                .zip(&tw)
                .map(|((&(_, j, w), r), &tij)| Incoming { weight: w, r, confidence: broadcast[j], trust: tij })
                .collect();
            let pin = self.topology.pinning()[i];
            let eta = trust::eta(&rs[i], &incoming, pin, &z);
            let o = eta.norm();
            let s = trust::raw_disagreement(&rs[i], &incoming, pin, &z);
            let q = trust::gap_score(o, s, self.monitor.delta);
            dy[lay.c + i] = trust::confidence_rate(q, conf[i], self.monitor.beta);
            let refs: Vec<&Vector> = received.iter().collect();
            let scores = trust::neighbor_scores(&refs, self.monitor.theta);
            for (&(idx, _, _), l) in inbound[i].iter().zip(scores) {
                dy[idx] = trust::confidence_rate(l, y[idx], self.monitor.kappa);
            }

            let ups = observer::observer_input(&eta, &self.observer, self.boundary_layer);
            let dr = a * &rs[i] + b * &ups + dmat * &w_obs[i];
            dy[lay.r + i * n..lay.r + (i + 1) * n].copy_from_slice(dr.as_slice());

            let e = baseline::local_tracking_error(i, &xs, &z, &self.topology);
            let mut aug_x = Vector::zeros(2 * n);
            aug_x.rows_mut(0, n).copy_from(&(&xs[i] - &rs[i]));
            aug_x.rows_mut(n, n).copy_from(&rs[i]);
            let u = match &self.policy {
                Policy::Baseline(g) => baseline::two_term(&g.k, &(-&e), g.c1, g.c2, self.boundary_layer),
                Policy::Hinf { aug, sol, mode } => {
                    let pi = match mode {
                        PiMode::QuasiSteady => sol.pi(&ups),
                        PiMode::Filter => Vector::from_column_slice(&y[lay.pi + i * 2 * n..lay.pi + (i + 1) * 2 * n]),
                    };
                    if *mode == PiMode::Filter {
                        let dpi = aug.pi_rate(&sol.p, &pi, &ups);
                        dy[lay.pi + i * 2 * n..lay.pi + (i + 1) * 2 * n].copy_from_slice(dpi.as_slice());
                    }
                    dy[lay.gam + i] = aug.gamma_rate(y[lay.gam + i], &pi, &ups);
                    match mode {
                        PiMode::QuasiSteady => sol.control(&aug_x, &ups),
                        PiMode::Filter => aug.control_with_pi(&sol.p, &aug_x, &pi),
                    }
                }
                Policy::Behavior { kb, probes, .. } => kb * (&xs[i] - &rs[i]) + crate::plant::eval_signals(&probes[i], t),
            };
            let dx = a * &xs[i] + b * &u + dmat * &w_plant[i];
            dy[lay.x + i * n..lay.x + (i + 1) * n].copy_from_slice(dx.as_slice());

            if let Some(sig) = out.as_deref_mut() {
                let mut row = vec![None; nag];
                let mut wrow = Vec::new();
                for (&(_, j, w), &tij) in inbound[i].iter().zip(&tw) {
                    row[j] = Some(tij);
                    wrow.push((j, broadcast[j] * tij * w));
                }
                sig.u.push(u);
                sig.omega.push(w_all[i].clone());
                sig.plant_omega.push(w_plant[i].clone());
                sig.upsilon.push(ups);
                sig.e_norm.push(e.norm());
                sig.eta.push(eta);
                sig.o.push(o);
                sig.s.push(s);
                sig.trust.push(row);
                sig.weights.push(wrow);
            }
        }
    }

    /// Run the scenario and record every `record_every`-th step (always including t = 0).
    pub fn simulate(&self, cfg: &RunConfig) -> Result<SimTrace> {
        self.validate()?;
        if !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || cfg.record_every == 0 {
            return Err(Error::Config("need dt > 0, horizon > 0 and record_every >= 1".into()));
        }
        let (lay, inbound) = self.layout();
        let hijacked = self.hijacked();
        let compromised = self.compromised();
        let steps = (cfg.horizon / cfg.dt).round() as usize;
        let mut y = self.initial_state(&lay);
        let mut dy = vec![0.0; lay.len];
        let mut tr = SimTrace {
            t: Vec::new(),
            leader: Vec::new(),
            agents: vec![Vec::new(); lay.agents],
            lambda_audit: Vec::new(),
            compromised: compromised.clone(),
        };
        let mut audit_weights: Option<Vec<Vec<(usize, f64)>>> = None;
        debug!("simulating {} steps, state dimension {}", steps, lay.len);

        for k in 0..=steps {
            let t = k as f64 * cfg.dt;
            if k % cfg.record_every == 0 || k == steps {
                let mut sig = Signals {
                    u: vec![],
                    omega: vec![],
                    plant_omega: vec![],
                    upsilon: vec![],
                    e_norm: vec![],
                    eta: vec![],
                    o: vec![],
                    s: vec![],
                    trust: vec![],
                    weights: vec![],
                };
                self.eval(&lay, &inbound, &hijacked, t, &y, &mut dy, Some(&mut sig));
                self.record(&lay, &y, t, sig, &mut tr, &mut audit_weights, &compromised);
            }
            if k == steps {
                break;
            }
            let mut f = |tt: f64, yy: &[f64], d: &mut [f64]| self.eval(&lay, &inbound, &hijacked, tt, yy, d, None);
            y = rk4_step(&mut f, t, &y, cfg.dt);
            for v in &mut y[lay.c..lay.pi] {
                *v = v.clamp(0.0, 1.0);
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t: t + cfg.dt });
            }
            if lay.gam > lay.pi && linalg::norm(&y[lay.pi..lay.gam]) > 1e8 {
                return Err(Error::Diverged { what: "Π filter".into(), t: t + cfg.dt });
            }
        }
        Ok(tr)
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        lay: &Layout,
        y: &[f64],
        t: f64,
        sig: Signals,
        tr: &mut SimTrace,
        audit: &mut Option<Vec<Vec<(usize, f64)>>>,
        compromised: &[usize],
    ) {
        let n = lay.n;
        tr.t.push(t);
        tr.leader.push(Vector::from_column_slice(&y[..n]));
        let Signals { u, omega, plant_omega, upsilon, e_norm, eta, o, s, trust, weights } = sig;
        let mut it = u.into_iter().zip(omega).zip(plant_omega).zip(upsilon).zip(eta).zip(trust);
        for i in 0..lay.agents {
            let (((((u, omega), plant_omega), upsilon), eta), trust) = it.next().expect("one signal row per agent");
            tr.agents[i].push(AgentSample {
                x: Vector::from_column_slice(&y[lay.x + i * n..lay.x + (i + 1) * n]),
                r: Vector::from_column_slice(&y[lay.r + i * n..lay.r + (i + 1) * n]),
                u,
                omega,
                plant_omega,
                upsilon,
                e_norm: e_norm[i],
                eta_norm: eta.norm(),
                o: o[i],
                s: s[i],
                c: y[lay.c + i],
                trust,
                value_offset: if lay.len > lay.gam { y[lay.gam + i] } else { 0.0 },
            });
        }
        let drifted = match audit.as_ref() {
            None => true,
            Some(prev) => prev.iter().zip(&weights).any(|(p, w)| p.iter().zip(w).any(|(a, b)| (a.1 - b.1).abs() > 0.01 * a.1.abs().max(1e-12))),
        };
        if drifted {
            let lam = weighted_lambda_min(&self.topology, &weights, compromised);
            trace!("t={t:.3} trust-weighted λ_min = {lam:.6}");
            tr.lambda_audit.push((t, lam));
            *audit = Some(weights);
        }
    }
}

/// `λ_min(ΦH + HᵀΦ)` of the intact subgraph under the current effective weights; zero if
/// that subgraph has lost its spanning tree.
fn weighted_lambda_min(topology: &GraphTopology, weights: &[Vec<(usize, f64)>], compromised: &[usize]) -> f64 {
    let intact: Vec<usize> = (0..topology.n_agents()).filter(|i| !compromised.contains(i)).collect();
    let k = intact.len();
    if k == 0 {
        return 0.0;
    }
    let mut h = Mat::zeros(k, k);
    for (a, &i) in intact.iter().enumerate() {
        h[(a, a)] += topology.pinning()[i];
        for &(j, w) in &weights[i] {
            h[(a, a)] += w;
            if let Some(bj) = intact.iter().position(|&x| x == j) {
                h[(a, bj)] -= w;
            }
        }
    }
    let Some(phi) = h.transpose().lu().solve(&Vector::repeat(k, 1.0)) else {
        return 0.0;
    };
    if phi.iter().any(|v| !(*v > 0.0)) {
        return 0.0;
    }
    let pm = Mat::from_diagonal(&phi);
    linalg::sym_min_eig(&(&pm * &h + h.transpose() * &pm))
}
