//! Command-line front end. Exit codes: 0 success (or no violation / pass),
//! 1 a negative finding (RJF violated, verification or forced run failed),
//! 2 usage or runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::arrivals::{concatenate_episodes, ArrivalSpec, PilotConfig, StationaryPlan};
use crate::error::{Error, Result};
use crate::fluid::integrate_fluid;
use crate::jf::{check_rjf, integrate_jf, Jump, JumpSchedule, RateProfile, RjfStatus, SearchConfig, Witness};
use crate::lyapunov::{build_distance_lyapunov, heavy_lattice, sample_clouds, verify_special_with, VerifyConfig};
use crate::network::Network;
use crate::scenario::{four_queue_timing, three_queue, Scenario};
use crate::stability::{
    forced_jump_run, geometric_horizons, monte_carlo, run_witness, simulate, MonteCarloConfig, SimOptions,
    WitnessConfig,
};

#[derive(Debug, Parser)]
#[command(name = "mwlab", version, about = "Max-Weight delay stability under heavy-tailed traffic")]
pub struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "MWLAB_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the fluid (or jumping-fluid) model and print a trajectory CSV.
    Fluid(FluidArgs),
    /// Search for a robust-jumping-fluid violation at the target queue.
    RjfCheck(RjfArgs),
    /// Monte Carlo growth trends of the stochastic system.
    Simulate(SimulateArgs),
    /// Run the instability witness built from an RJF violation.
    Witness(WitnessArgs),
    /// Build a distance-to-reachable-set candidate and verify it.
    Lyapunov(LyapunovArgs),
}

/// Scenario selection and overrides shared by every command.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// `three-queue`, `four-queue-timing`, or a scenario JSON file.
    pub scenario: String,
    /// Three-queue case (1, 2 or 3).
    #[arg(long)]
    pub case: Option<u8>,
    /// Nominal rates λ*, comma separated.
    #[arg(long, value_parser = parse_float_list)]
    pub lambda: Option<FloatList>,
    /// Override λ*₃ only.
    #[arg(long)]
    pub lambda3: Option<f64>,
    /// Tail exponents, comma separated; `inf` for light tails.
    #[arg(long, value_parser = parse_float_list)]
    pub gamma: Option<FloatList>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Target queue, 1-based.
    #[arg(long)]
    pub queue: Option<usize>,
    /// Initial state, comma separated.
    #[arg(long, value_parser = parse_float_list)]
    pub init: Option<FloatList>,
    /// Replace the service set with a network JSON file.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// four-queue-timing: add the jump of size 2 at t = 5.
    #[arg(long)]
    pub second_jump: bool,
}

#[derive(Debug, Args)]
pub struct FluidArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// End time; defaults to the scenario's horizon or 10.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sample the state every `dt` instead of listing breakpoints.
    #[arg(long)]
    pub every: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RjfArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Interior points of the jump-time grid.
    #[arg(long, default_value_t = SearchConfig::default().time_grid)]
    pub grid: usize,
    #[arg(long, default_value_t = SearchConfig::default().budget_evals)]
    pub budget_evals: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the witness JSON here when a violation is found.
    #[arg(long)]
    pub witness_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub replications: usize,
    /// Largest checkpoint; checkpoints double from 16.
    #[arg(long, default_value_t = 1 << 17)]
    pub max_horizon: u64,
    /// Scale of the Pareto mixtures.
    #[arg(long)]
    pub x_min: Option<f64>,
    /// Save the full report (with raw samples) as JSON.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    /// Save replication 0 as a trace CSV.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deterministic bulk-jump run instead of the stochastic witness.
    #[arg(long)]
    pub forced: bool,
    /// Horizon of the forced run.
    #[arg(long = "T", default_value_t = 10_000)]
    pub horizon: u64,
    /// Slack per slot in the forced-run check.
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    /// First episode length.
    #[arg(long, default_value_t = 100)]
    pub base_t: u64,
    #[arg(long, default_value_t = 64)]
    pub replications: usize,
    /// Load a saved RJF witness instead of searching.
    #[arg(long)]
    pub witness: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LyapunovArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Heavy queues, 1-based; defaults to the finite-γ queues other than the target.
    #[arg(long, value_delimiter = ',')]
    pub heavy: Option<Vec<usize>>,
    /// Largest jump count per heavy queue in the cloud lattice.
    #[arg(long, default_value_t = 2)]
    pub max_jumps: usize,
    /// Reachable-set samples per lattice point.
    #[arg(long, default_value_t = 300)]
    pub cloud_samples: usize,
    /// Samples per property.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Drift tolerance; defaults to 0.1ε.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Use the raw clouds without closing them under heavy increments.
    #[arg(long)]
    pub no_closure: bool,
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

fn parse_float_list(s: &str) -> std::result::Result<FloatList, String> {
    parse_list(s).map(FloatList)
}

/// Parses `a,b,c`, accepting `inf`.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                _ => t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")),
            }
        })
        .collect()
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<Scenario> {
        let mut s = match self.scenario.as_str() {
            "three-queue" => three_queue(self.case.unwrap_or(2))?,
            "four-queue-timing" => four_queue_timing(self.second_jump),
            path => Scenario::load(path)?,
        };
        if self.case.is_some() && self.scenario != "three-queue" {
            return Err(Error::InvalidArgument("--case applies to three-queue only".into()));
        }
        if let Some(p) = &self.network {
            s.network = Network::load(p)?;
        }
        if self.lambda.is_some() || self.lambda3.is_some() || self.gamma.is_some() {
            s.arrivals = None;
        }
        if let Some(l) = &self.lambda {
            s.lambda_star = l.0.clone();
        }
        if let Some(l3) = self.lambda3 {
            match s.lambda_star.get_mut(2) {
                Some(x) => *x = l3,
                None => return Err(Error::InvalidArgument("--lambda3 needs at least three queues".into())),
            }
        }
        if let Some(g) = &self.gamma {
            s.gamma = g.0.clone();
        }
        if let Some(e) = self.epsilon {
            s.epsilon = e;
        }
        if let Some(q) = self.queue {
            if q == 0 {
                return Err(Error::InvalidArgument("--queue is 1-based".into()));
            }
            s.queue = q - 1;
        }
        if let Some(x) = &self.init {
            s.init = Some(x.0.clone());
        }
        s.validate()?;
        Ok(s)
    }
}

fn header(out: &mut dyn Write, command: &str, seed: Option<u64>, s: &Scenario) -> Result<()> {
    let scen = serde_json::to_string(&s.to_file())?;
    match seed {
        Some(seed) => writeln!(out, "# mwlab {command} seed={seed}")?,
        None => writeln!(out, "# mwlab {command}")?,
    }
    writeln!(out, "# scenario={scen}")?;
    Ok(())
}

fn write_file(path: &PathBuf, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

fn cmd_fluid(a: &FluidArgs, out: &mut dyn Write) -> Result<i32> {
    let s = a.scenario.resolve()?;
    let t_end = a.horizon.or(s.horizon).unwrap_or(10.0);
    let ell = s.network.ell();
    let init = s.init.clone().unwrap_or_else(|| vec![0.0; ell]);
    let traj = if s.jumps.is_empty() {
        integrate_fluid(&s.network, &s.lambda_star, &init, t_end)?
    } else {
        // A nonzero start is equivalent to jumps at time 0 from the origin.
        let mut jumps: Vec<Jump> = init
            .iter()
            .enumerate()
            .filter(|(_, x)| **x > 0.0)
            .map(|(queue, &size)| Jump { t: 0.0, queue, size })
            .collect();
        jumps.extend(s.jumps.iter().copied());
        let profile = RateProfile::constant(s.lambda_star.clone(), s.epsilon)?;
        integrate_jf(&s.network, &profile, &JumpSchedule::new(jumps)?, t_end)?
    };
    let csv = match a.every {
        None => traj.to_csv(),
        Some(dt) => {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("--every must be positive".into()));
            }
            let mut c = String::from("t");
            for j in 1..=ell {
                c += &format!(",q_{j}");
            }
            c.push('\n');
            let steps = (t_end / dt + 1e-9).floor() as u64;
            for k in 0..=steps {
                let t = (k as f64 * dt).min(t_end);
                c += &t.to_string();
                for x in traj.state_at(t) {
                    c += &format!(",{x}");
                }
                c.push('\n');
            }
            c
        }
    };
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(0)
}

fn search(s: &Scenario, seed: u64, grid: usize, budget_evals: usize) -> Result<crate::jf::RjfVerdict> {
    let cfg = SearchConfig { time_grid: grid, budget_evals, seed, ..Default::default() };
    check_rjf(&s.network, &s.lambda_star, &s.gamma, s.epsilon, s.queue, &cfg)
}

fn cmd_rjf(a: &RjfArgs, out: &mut dyn Write) -> Result<i32> {
    let s = a.scenario.resolve()?;
    let seed = a.seed.or(s.seed).unwrap_or(0);
    header(out, "rjf-check", Some(seed), &s)?;
    let v = search(&s, seed, a.grid, a.budget_evals)?;
    let st = &v.search_stats;
    writeln!(out, "status={:?}", v.status)?;
    writeln!(
        out,
        "evaluations={} budgets_searched={} best_value={} best_n={:?} budget_consumed={} failed_integrations={}",
        st.evaluations, st.budgets_searched, st.best_value, st.best_n, st.budget_consumed, st.failed_integrations
    )?;
    if let Some(w) = &v.witness {
        let json = serde_json::to_string_pretty(w)?;
        writeln!(out, "witness value={} n={:?} t_eval={}", w.value, w.n, w.t_eval)?;
        if let Some(p) = &a.witness_out {
            write_file(p, &json)?;
            writeln!(out, "witness written to {}", p.display())?;
        }
    }
    Ok(match v.status {
        RjfStatus::Violated => 1,
        RjfStatus::NoViolationFound => 0,
    })
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let s = a.scenario.resolve()?;
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let mut specs = s.arrival_specs();
    if let Some(x) = a.x_min {
        for sp in &mut specs {
            if let ArrivalSpec::ParetoMixture { x_min, .. } = sp {
                *x_min = x;
            }
        }
    }
    let plan = StationaryPlan::new(specs)?;
    let cfg = MonteCarloConfig {
        horizons: geometric_horizons(16, a.max_horizon),
        replications: a.replications,
        seed,
        ..Default::default()
    };
    header(out, "simulate", Some(seed), &s)?;
    let report = monte_carlo(&s.network, &plan, &cfg)?;
    out.write_all(report.to_text().as_bytes())?;
    if let Some(p) = &a.report_json {
        write_file(p, &serde_json::to_string(&report)?)?;
    }
    if let Some(p) = &a.trace_out {
        let opts = SimOptions { stride: (a.max_horizon / 1000).max(1), full_arrivals: false, schedules: false };
        write_file(p, &simulate(&s.network, &plan, a.max_horizon, seed, &opts)?.to_csv())?;
    }
    Ok(0)
}

fn obtain_witness(s: &Scenario, seed: u64, path: Option<&PathBuf>, out: &mut dyn Write) -> Result<Option<Witness>> {
    if let Some(p) = path {
        let w: Witness = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        return Ok(Some(w));
    }
    let v = search(s, seed, SearchConfig::default().time_grid, SearchConfig::default().budget_evals)?;
    writeln!(out, "rjf status={:?}", v.status)?;
    Ok(v.witness)
}

fn cmd_witness(a: &WitnessArgs, out: &mut dyn Write) -> Result<i32> {
    let s = a.scenario.resolve()?;
    let seed = a.seed.or(s.seed).unwrap_or(0);
    header(out, "witness", Some(seed), &s)?;
    let Some(w) = obtain_witness(&s, seed, a.witness.as_ref(), out)? else {
        writeln!(out, "no RJF violation found; no witness to run")?;
        return Ok(1);
    };
    writeln!(out, "rjf witness={}", serde_json::to_string(&w)?)?;
    if a.forced {
        let run = forced_jump_run(&s.network, &w, a.horizon, a.tolerance, 1000)?;
        writeln!(
            out,
            "forced T={} queue={} c={} target={} q_m={} verdict={:?} pass={}",
            run.horizon,
            run.queue + 1,
            run.c,
            run.target,
            run.q_m,
            run.verdict,
            run.passed()
        )?;
        return Ok(if run.passed() { 0 } else { 1 });
    }
    let pilot = PilotConfig { replications: a.replications, seed, ..Default::default() };
    let conc = concatenate_episodes(&s.network, &w, a.base_t, a.episodes, &pilot)?;
    writeln!(out, "boundaries={:?}", conc.boundaries)?;
    writeln!(out, "pilot_estimates={:?}", conc.estimates)?;
    let cfg = WitnessConfig { replications: a.replications, seed, ..Default::default() };
    let report = run_witness(&s.network, &conc.plan, &cfg)?;
    out.write_all(report.to_text().as_bytes())?;
    Ok(0)
}

fn cmd_lyapunov(a: &LyapunovArgs, out: &mut dyn Write) -> Result<i32> {
    let s = a.scenario.resolve()?;
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let ell = s.network.ell();
    let heavy: Vec<usize> = match &a.heavy {
        Some(h) => h
            .iter()
            .map(|&j| {
                if j == 0 || j > ell {
                    Err(Error::InvalidArgument(format!("heavy queue {j} out of range 1..={ell}")))
                } else {
                    Ok(j - 1)
                }
            })
            .collect::<Result<_>>()?,
        None => (0..ell).filter(|&j| j != s.queue && s.gamma[j].is_finite()).collect(),
    };
    header(out, "lyapunov", Some(seed), &s)?;
    writeln!(
        out,
        "heavy={:?} max_jumps={} cloud_samples={} closure={}",
        heavy.iter().map(|j| j + 1).collect::<Vec<_>>(),
        a.max_jumps,
        a.cloud_samples,
        !a.no_closure
    )?;
    let lattice = heavy_lattice(ell, &heavy, a.max_jumps);
    let clouds = sample_clouds(&s.network, &s.lambda_star, s.epsilon, &lattice, a.cloud_samples, seed)?;
    let cand = build_distance_lyapunov(&clouds, heavy, s.epsilon, !a.no_closure)?;
    let cfg = VerifyConfig { samples: a.samples, seed, tol: a.tol, box_upper: None };
    let report = verify_special_with(&cand, &s.network, &s.lambda_star, s.epsilon, s.queue, &cfg)?;
    out.write_all(report.to_text().as_bytes())?;
    Ok(if report.overall { 0 } else { 1 })
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Fluid(a) => cmd_fluid(a, out),
        Command::RjfCheck(a) => cmd_rjf(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Witness(a) => cmd_witness(a, out),
        Command::Lyapunov(a) => cmd_lyapunov(a, out),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Errors go to stderr.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        // Fails only if the pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli, out) {
        Ok(code) => {
            let _ = out.flush();
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with(std::env::args_os(), &mut lock)
}
