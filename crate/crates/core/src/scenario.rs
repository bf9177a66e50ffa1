//! Scenario files (TOML) and their translation into a simulation `Network`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineGains, DEFAULT_BOUNDARY_LAYER, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::graph::{self, GraphMatrices, GraphTopology};
use crate::hinf::{self, AugmentedSystem, GareSolution};
use crate::linalg::{mat_from_rows, Mat, Vector};
use crate::observer::ObserverGains;
use crate::plant::{self, AttackKind, AttackSignal, AttackSpec, Signal, SystemModel};
use crate::sim::{Network, PiMode, Policy, RunConfig};
use crate::trust::MonitorParams;

fn default_horizon() -> f64 {
    30.0
}
fn default_dt() -> f64 {
    1e-3
}
fn one() -> usize {
    1
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_eps() -> f64 {
    DEFAULT_BOUNDARY_LAYER
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub record_every: usize,
    pub system: SystemSection,
    pub graph: GraphSection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub monitor: MonitorParams,
    #[serde(default)]
    pub attack: BTreeMap<String, AttackSection>,
    #[serde(default)]
    pub rl: RlSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub leader_input: Vec<Signal>,
    pub v_max: Option<f64>,
    #[serde(default)]
    pub leader_initial: Option<Vec<f64>>,
    #[serde(default)]
    pub agent_initial: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub observer_initial: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub agents: usize,
    /// One-based `[from, to, weight]` triples.
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    pub pinning: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Baseline,
    Hinf,
    HinfRl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PiModeName {
    QuasiSteady,
    Filter,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    #[serde(default = "default_margin")]
    pub c1_margin: f64,
    #[serde(default = "default_margin")]
    pub c2_margin: f64,
    #[serde(default = "default_margin")]
    pub observer_margin: f64,
    #[serde(default = "default_eps")]
    pub boundary_layer: f64,
    pub q1: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default = "ControllerSection::default_alpha")]
    pub alpha: f64,
    #[serde(default = "ControllerSection::default_gamma")]
    pub gamma: f64,
    #[serde(default = "ControllerSection::default_pi_mode")]
    pub pi_mode: PiModeName,
    /// Learned gains for `hinf-rl`; learned inline when absent.
    pub gains_file: Option<PathBuf>,
}

impl ControllerSection {
    fn default_alpha() -> f64 {
        0.1
    }
    fn default_gamma() -> f64 {
        10.0
    }
    fn default_pi_mode() -> PiModeName {
        PiModeName::QuasiSteady
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKindName {
    Type1,
    Type2Node,
    Type2Link,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSignalSection {
    /// Modal signal `amplitude · e^{growth t} sin(frequency t)` on one channel.
    Stealthy {
        amplitude: f64,
        #[serde(default)]
        growth: f64,
        #[serde(default)]
        frequency: f64,
        #[serde(default = "one")]
        channel: usize,
    },
    Waveform { channels: Vec<Signal> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub target: usize,
    pub kind: AttackKindName,
    pub source: Option<usize>,
    #[serde(default)]
    pub start: f64,
    pub signal: AttackSignalSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    /// One-based agents whose data are used for learning.
    pub agents: Vec<usize>,
    pub sample_interval: f64,
    pub horizon: f64,
    pub windows: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    /// Feedback on `x − r` during collection (m×n).
    pub behavior_gain: Option<Vec<Vec<f64>>>,
    pub probe_amplitude: f64,
    pub probe_count: usize,
    pub probe_band: [f64; 2],
    pub exploration_amplitude: f64,
    /// Boundary layer used while collecting data (overrides the controller value).
    pub boundary_layer: Option<f64>,
}

impl Default for RlSection {
    fn default() -> Self {
        Self {
            agents: vec![1],
            sample_interval: 0.05,
            horizon: 25.0,
            windows: None,
            tol: 1e-6,
            max_iter: 50,
            behavior_gain: None,
            probe_amplitude: 0.5,
            probe_count: 8,
            probe_band: [0.1, 20.0],
            exploration_amplitude: 0.5,
            boundary_layer: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    DeviationBelow,
    DeviationAbove,
    ErrorBelow,
    ObserverErrorBelow,
    ConfidenceBelow,
    ConfidenceAtLeast,
    L2Certified,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantifier {
    #[default]
    All,
    Any,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    pub kind: CheckKind,
    #[serde(default)]
    pub agents: Vec<usize>,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub quantifier: Quantifier,
    pub window: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub window: [f64; 2],
    pub check: Vec<CheckSpec>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { window: [25.0, 30.0], check: Vec::new() }
    }
}

/// Apply `dotted.key=value` overrides to a parsed TOML document. Values are parsed as
/// TOML when possible and fall back to plain strings.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{ov}` is not key=value")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut table = &mut *doc;
        for p in &parts[..parts.len() - 1] {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override path `{key}` crosses a non-table")))?;
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

impl ScenarioFile {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text, overrides)?, base))
    }
}

/// Fully validated scenario with every derived design artefact.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub base_dir: PathBuf,
    pub model: SystemModel,
    pub topology: GraphTopology,
    pub matrices: GraphMatrices,
    pub observer: ObserverGains,
    pub attacks: Vec<AttackSpec>,
    pub leader0: Vector,
    pub x0: Vec<Vector>,
    pub r0: Vec<Vector>,
    pub q1: Mat,
    pub r: Mat,
}

fn initial_rows(rows: &Option<Vec<Vec<f64>>>, agents: usize, n: usize, what: &str) -> Result<Vec<Vector>> {
    match rows {
        None => Ok(vec![Vector::zeros(n); agents]),
        Some(rows) => {
            if rows.len() != agents || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("{what} must have {agents} rows of length {n}")));
            }
            Ok(rows.iter().map(|r| Vector::from_column_slice(r)).collect())
        }
    }
}

impl Scenario {
    pub fn from_file(file: ScenarioFile, base_dir: PathBuf) -> Result<Self> {
        let cfg = |e: Error| match e {
            Error::DimensionMismatch(m) => Error::Config(m),
            other => other,
        };
        if !(file.horizon > 0.0) || !(file.dt > 0.0) || file.dt > file.horizon {
            return Err(Error::Config("need 0 < dt <= horizon".into()));
        }
        let s = &file.system;
        let model = SystemModel::new(
            mat_from_rows(&s.a).map_err(cfg)?,
            mat_from_rows(&s.b).map_err(cfg)?,
            mat_from_rows(&s.d).map_err(cfg)?,
            s.leader_input.clone(),
            s.v_max,
        )
        .map_err(cfg)?;
        let n = model.n();
        let g = &file.graph;
        let topology = GraphTopology::from_one_based(g.agents, &g.edges, g.pinning.clone()).map_err(cfg)?;
        let matrices = graph::build_matrices(&topology)?;
        let c = &file.controller;
        if !(c.boundary_layer >= 0.0) {
            return Err(Error::Config("boundary_layer must be >= 0".into()));
        }
        let observer = ObserverGains::design(&model, &matrices, c.observer_margin)?;
        let leader0 = match &s.leader_initial {
            None => Vector::zeros(n),
            Some(v) if v.len() == n => Vector::from_column_slice(v),
            Some(_) => return Err(Error::Config(format!("leader_initial must have length {n}"))),
        };
        let x0 = initial_rows(&s.agent_initial, g.agents, n, "agent_initial")?;
        let r0 = initial_rows(&s.observer_initial, g.agents, n, "observer_initial")?;
        let q1 = match &c.q1 {
            Some(rows) => mat_from_rows(rows).map_err(cfg)?,
            None => Mat::identity(n, n),
        };
        let r = match &c.r {
            Some(rows) => mat_from_rows(rows).map_err(cfg)?,
            None => Mat::identity(model.m(), model.m()),
        };
        let mut attacks = Vec::new();
        for (label, a) in &file.attack {
            attacks.push(build_attack(label, a, &model, g.agents)?);
        }
        for id in &file.rl.agents {
            if *id == 0 || *id > g.agents {
                return Err(Error::Config(format!("rl agent {id} is not a follower")));
            }
        }
        Ok(Self { file, base_dir, model, topology, matrices, observer, attacks, leader0, x0, r0, q1, r })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let (file, base) = ScenarioFile::load(path, overrides)?;
        Self::from_file(file, base)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig { horizon: self.file.horizon, dt: self.file.dt, record_every: self.file.record_every }
    }

    pub fn baseline_gains(&self) -> Result<BaselineGains> {
        BaselineGains::design(&self.model, &self.matrices, self.file.controller.c1_margin, self.file.controller.c2_margin)
    }

    pub fn augmented(&self) -> Result<AugmentedSystem> {
        let c = &self.file.controller;
        AugmentedSystem::assemble(&self.model, &self.q1, &self.r, c.alpha, c.gamma)
    }

    pub fn model_gare(&self) -> Result<GareSolution> {
        hinf::solve(&self.augmented()?)
    }

    pub fn pi_mode(&self) -> PiMode {
        match self.file.controller.pi_mode {
            PiModeName::QuasiSteady => PiMode::QuasiSteady,
            PiModeName::Filter => PiMode::Filter,
        }
    }

    pub fn network(&self, policy: Policy) -> Network {
        Network {
            model: self.model.clone(),
            topology: self.topology.clone(),
            matrices: self.matrices.clone(),
            observer: self.observer.clone(),
            monitor: self.file.monitor.clone(),
            policy,
            attacks: self.attacks.clone(),
            boundary_layer: self.file.controller.boundary_layer,
            leader0: self.leader0.clone(),
            x0: self.x0.clone(),
            r0: self.r0.clone(),
        }
    }

    /// Network with the controller named in the file. `hinf-rl` needs the learned solution.
    pub fn network_with(&self, learned: Option<GareSolution>) -> Result<Network> {
        let policy = match self.file.controller.kind {
            ControllerKind::Baseline => Policy::Baseline(self.baseline_gains()?),
            ControllerKind::Hinf => Policy::Hinf { aug: self.augmented()?, sol: self.model_gare()?, mode: self.pi_mode() },
            ControllerKind::HinfRl => {
                let sol = learned.ok_or_else(|| Error::Config("hinf-rl needs learned gains".into()))?;
                if self.pi_mode() == PiMode::Filter {
                    return Err(Error::Config("learned gains only support the quasi-steady Π mode".into()));
                }
                Policy::Hinf { aug: self.augmented()?, sol, mode: PiMode::QuasiSteady }
            }
        };
        Ok(self.network(policy))
    }

    /// Seeded multisine probes (one per input channel) and exploration signals (one per
    /// attack channel) for every agent.
    pub fn exploration_signals(&self) -> (Vec<Vec<Signal>>, Vec<Vec<Signal>>) {
        let rl = &self.file.rl;
        let k = rl.probe_count.max(1);
        let (lo, hi) = (rl.probe_band[0], rl.probe_band[1]);
        let freqs: Vec<f64> = (0..k)
            .map(|i| if k == 1 { lo } else { lo * (hi / lo).powf(i as f64 / (k - 1) as f64) })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.file.seed);
        let mut phases = |count: usize| -> Vec<f64> { (0..count).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect() };
        let agents = self.topology.n_agents();
        let mut probes = Vec::with_capacity(agents);
        let mut explore = Vec::with_capacity(agents);
        for _ in 0..agents {
            probes.push(
                (0..self.model.m())
                    .map(|_| Signal::Multisine { amplitude: rl.probe_amplitude, frequencies: freqs.clone(), phases: phases(k) })
                    .collect(),
            );
            // Exploration frequencies are offset from the probe so the two are not collinear.
            let efreqs: Vec<f64> = freqs.iter().map(|f| 1.3 * f).collect();
            explore.push(
                (0..self.model.d_dim())
                    .map(|_| Signal::Multisine { amplitude: rl.exploration_amplitude, frequencies: efreqs.clone(), phases: phases(k) })
                    .collect(),
            );
        }
        (probes, explore)
    }

    pub fn behavior_gain(&self) -> Result<Mat> {
        match &self.file.rl.behavior_gain {
            Some(rows) => {
                let kb = mat_from_rows(rows)?;
                if kb.shape() != (self.model.m(), self.model.n()) {
                    return Err(Error::Config("behavior_gain must be m×n".into()));
                }
                Ok(kb)
            }
            None => Ok(Mat::zeros(self.model.m(), self.model.n())),
        }
    }
}

fn build_attack(label: &str, a: &AttackSection, model: &SystemModel, agents: usize) -> Result<AttackSpec> {
    if a.target == 0 || a.target > agents {
        return Err(Error::Config(format!("attack.{label}: target {} is not a follower", a.target)));
    }
    if !(a.start >= 0.0) {
        return Err(Error::Config(format!("attack.{label}: start must be >= 0")));
    }
    let kind = match a.kind {
        AttackKindName::Type1 => AttackKind::Type1,
        AttackKindName::Type2Node => AttackKind::Type2Node,
        AttackKindName::Type2Link => {
            let source = a.source.ok_or_else(|| Error::Config(format!("attack.{label}: type2-link needs `source`")))?;
            if source == 0 || source > agents {
                return Err(Error::Config(format!("attack.{label}: source {source} is not a follower")));
            }
            AttackKind::Type2Link { source: source - 1 }
        }
    };
    let signal = match &a.signal {
        AttackSignalSection::Stealthy { amplitude, growth, frequency, channel } => {
            if *channel == 0 {
                return Err(Error::Config("attack channels are one-based".into()));
            }
            let g = plant::make_stealthy_attack(&model.a, *amplitude, *growth, *frequency, model.d_dim(), channel - 1).map_err(|e| match e {
                Error::DimensionMismatch(m) => Error::Config(m),
                other => other,
            })?;
            AttackSignal::Stealthy(g)
        }
        AttackSignalSection::Waveform { channels } => {
            if channels.len() != model.d_dim() {
                return Err(Error::Config(format!("attack.{label}: waveform needs {} channels", model.d_dim())));
            }
            AttackSignal::Waveform(channels.clone())
        }
    };
    Ok(AttackSpec { target: a.target - 1, kind, signal, start: a.start })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[system]
a = [[0.0]]
b = [[1.0]]
d = [[1.0]]
leader_input = [{ kind = "zero" }]
[graph]
agents = 1
pinning = [1.0]
[controller]
kind = "baseline"
"#;

    #[test]
    fn overrides_reach_nested_tables() {
        let f = ScenarioFile::parse(MINIMAL, &["monitor.delta=0.5".into(), "controller.kind=\"hinf\"".into(), "horizon=2".into()]).unwrap();
        assert_eq!(f.monitor.delta, 0.5);
        assert_eq!(f.controller.kind, ControllerKind::Hinf);
        assert_eq!(f.horizon, 2.0);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = ScenarioFile::parse(MINIMAL, &["monitor.dleta=0.5".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(ScenarioFile::parse(MINIMAL, &["novalue".into()]).is_err());
    }
}
