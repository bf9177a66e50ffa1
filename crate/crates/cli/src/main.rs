use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use masim::harness;
use masim::scenario::Scenario;

#[derive(Parser)]
#[command(name = "masim", version, about = "Resilient leader-follower synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any scenario key, e.g. `--set controller.gamma=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut ov = self.set.clone();
        if let Some(s) = self.seed {
            ov.push(format!("seed={s}"));
        }
        ov
    }

    fn load(&self) -> masim::Result<Scenario> {
        Scenario::load(&self.scenario, &self.overrides())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write per-agent CSV traces plus summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Exit with status 1 when any metrics check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Print graph quantities and designed gains.
    Gains {
        #[command(flatten)]
        common: Common,
    },
    /// Learn the game solution from data and write gains files.
    Learn {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-run a scenario across values of one parameter, in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// gamma, alpha, delta, theta, beta, kappa, dt or amplitude.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_checks(summary: &masim::metrics::Summary) {
    for c in &summary.checks {
        let vals: Vec<String> = c.values.iter().map(|(a, v)| format!("{a}:{v:.4e}")).collect();
        println!("{} {} (threshold {}) [{}]", if c.passed { "PASS" } else { "FAIL" }, c.name, c.threshold, vals.join(" "));
    }
}

/// `Ok(code)` is the process exit status for a command that ran to completion.
fn dispatch(cmd: Cmd) -> masim::Result<u8> {
    match cmd {
        Cmd::Run { common, out, strict } => {
            let sc = common.load()?;
            let res = harness::run(&sc, &out)?;
            for a in &res.summary.agents {
                println!(
                    "agent {}: final |x-z| = {:.4e}, window max = {:.4e}, peak = {:.4e}, min C = {:.4}",
                    a.agent, a.final_deviation, a.window_max_deviation, a.peak_deviation, a.min_confidence
                );
            }
            for l in &res.summary.l2 {
                println!("agent {}: L2 ratio = {:.4} (bound {:.4})", l.agent, l.ratio, l.bound);
            }
            print_checks(&res.summary);
            Ok(if strict && !res.summary.all_passed() { 1 } else { 0 })
        }
        Cmd::Gains { common } => {
            print!("{}", harness::gains_report(&common.load()?)?);
            Ok(0)
        }
        Cmd::Learn { common, out } => {
            let sc = common.load()?;
            for (r, _) in harness::learn(&sc, &out)? {
                let err = r.p_error.map_or("n/a".to_string(), |e| format!("{e:.3e}"));
                println!("agent {}: {} iterations, |P - P_model| = {err}", r.agent, r.iterations);
            }
            Ok(0)
        }
        Cmd::Sweep { common, param, values, out } => {
            let points = harness::sweep(&common.scenario, &common.overrides(), &param, &values, out.as_deref().map(Path::new))?;
            let code = harness::SweepPoint::aggregate_code(&points);
            for p in points {
                match (p.summary, p.error) {
                    (Some(s), _) => {
                        let worst = s.agents.iter().map(|a| a.window_max_deviation).fold(0.0, f64::max);
                        let passed = s.checks.iter().filter(|c| c.passed).count();
                        println!("{param}={}: max window deviation {worst:.4e}, checks {passed}/{}", p.value, s.checks.len());
                    }
                    (None, e) => println!("{param}={}: error: {}", p.value, e.unwrap_or_default()),
                }
            }
            Ok(code as u8)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MASIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
