// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dgmdp::fitting::{analyze, fit_agent, targets_from_empirical, AnalyzeOptions, EpisodeFilter, FitOptions, FreeMask};
use dgmdp::game::event::parse_jsonl;
use dgmdp::game::player::SimulatedPlayer;
use dgmdp::game::summary::subjects_from_log;
use dgmdp::game::{EventStore, ExperimentProtocol, ExportFilter, ProtocolId};
use dgmdp::hazard::{hazard_from_solution, simulate_thresholds};
use dgmdp::incentive::{optimize_bonus_limit, optimize_interest_accrual, BonusLimitScenario, InterestScenario, Optimized};
use dgmdp::solver::{grid::solve_grid, GridSpec};
use dgmdp::{solve, AgentParams, Error, Result, SolverKind, TaskParams};

#[derive(Parser)]
#[command(name = "dgmdp", version, about = "Delay-gratification decision model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Value table V(t, w) with both action values, as CSV.
    Solve(SolveArgs),
    /// Predicted hazard curve as CSV, optionally checked by simulation.
    Hazard(HazardArgs),
    /// Simulated game sessions as a JSONL event log.
    Simulate(SimulateArgs),
    /// Least-squares agent fit to a game log.
    Fit(FitArgs),
    /// Bonus schedule optimization.
    Optimize(OptimizeArgs),
    /// Run the game service.
    Serve(ServeArgs),
    /// Experiment analysis over a game log.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Model {
    /// Task parameters: a JSON file or inline JSON.
    #[arg(long)]
    task: String,
    /// Agent parameters: a JSON file or inline JSON.
    #[arg(long)]
    agent: String,
    #[arg(long, default_value = "pla")]
    solver: SolverKind,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: Model,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    w_min: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    w_max: f64,
    #[arg(long, default_value_t = 0.1)]
    w_step: f64,
    /// Grid solver resolution.
    #[arg(long)]
    grid_points: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct HazardArgs {
    #[command(flatten)]
    model: Model,
    #[arg(long, default_value_t = dgmdp::hazard::DEFAULT_Q)]
    q: usize,
    /// Also simulate this many episodes.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ProtocolArg {
    /// Experiment protocol, EXP1..EXP5.
    #[arg(long)]
    protocol: ProtocolId,
    /// Reward-rate ratio arm (EXP1 only).
    #[arg(long)]
    rho: Option<f64>,
}

impl ProtocolArg {
    fn load(&self) -> Result<ExperimentProtocol> {
        ExperimentProtocol::builtin(self.protocol, self.rho)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    protocol: ProtocolArg,
    #[arg(long)]
    agent: String,
    #[arg(long, default_value_t = 1)]
    subjects: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Play time for phases without a fixed length.
    #[arg(long, default_value_t = 600)]
    open_phase_s: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct FitArgs {
    /// JSONL event log.
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    protocol: ProtocolArg,
    /// Starting parameters; population values when absent.
    #[arg(long)]
    agent: Option<String>,
    /// Comma-separated subset of gamma,sigma1,sigma,mu_e, or `all`.
    #[arg(long, default_value = "all")]
    free: FreeMask,
    #[arg(long, default_value_t = 200)]
    q: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 400)]
    max_evals: usize,
    #[arg(long)]
    weight_by_at_risk: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Interest,
    BonusLimit,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum)]
    setting: SettingArg,
    /// Scenario JSON file or inline JSON.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    agent: String,
    /// Horizon for the bonus-limit setting.
    #[arg(long, default_value_t = 10)]
    tau: usize,
    /// Sweep the agent's discount rate over these values.
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory for sessions.jsonl and events.jsonl; in memory when absent.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    protocol: ProtocolArg,
    #[arg(long)]
    agent: Option<String>,
    /// Override the protocol's default free parameters.
    #[arg(long)]
    free: Option<FreeMask>,
    #[arg(long, default_value_t = dgmdp::fitting::analysis::DEFAULT_SHUFFLES)]
    shuffles: usize,
    /// Posterior quantiles for reported predictions.
    #[arg(long, default_value_t = dgmdp::hazard::DEFAULT_Q)]
    q: usize,
    /// Posterior quantiles inside fits.
    #[arg(long, default_value_t = 200)]
    fit_q: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let report = ErrorReport { error: kind, message };
    eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::Hazard(a) => cmd_hazard(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

/// Inline JSON when the argument looks like an object, else a file path.
fn json_text(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        Ok(std::fs::read_to_string(arg)?)
    }
}

fn load_task(arg: &str) -> Result<TaskParams> {
    TaskParams::from_json(&json_text(arg)?)
}

fn load_agent(arg: &str) -> Result<AgentParams> {
    AgentParams::from_json(&json_text(arg)?)
}

fn need_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidParams(format!("{what} needs --seed")))
}

/// Population starting point for a protocol.
fn default_agent(id: ProtocolId) -> AgentParams {
    let mu_e = if id == ProtocolId::Exp1 { -52.1 } else { -99.7 };
    AgentParams::new(0.957, 81.3, 21.3, mu_e)
}

fn write_output(output: &Output, content: &str) -> Result<()> {
    match &output.out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => write_file(path, content, output.force),
    }
}

fn write_file(path: &Path, content: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.display().to_string()));
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let task = load_task(&a.model.task)?;
    let agent = load_agent(&a.model.agent)?;
    if !(a.w_step > 0.0) || a.w_max < a.w_min {
        return Err(Error::InvalidParams("need w_step > 0 and w_max >= w_min".into()));
    }
    let sol = match (a.model.solver, a.grid_points) {
        (SolverKind::Grid, Some(points)) => Box::new(solve_grid(&task, &agent, &GridSpec::with_points(points))?),
        (kind, _) => solve(kind, &task, &agent)?,
    };
    let thresholds = sol.threshold_values();
    let n = ((a.w_max - a.w_min) / a.w_step + 1e-9).floor() as usize;
    let mut csv = String::from("t,w,value,q_defect,q_persist,threshold\n");
    for t in 1..=task.tau {
        for i in 0..=n {
            let w = a.w_min + i as f64 * a.w_step;
            let q = sol.action_values(t, w)?;
            writeln!(
                csv,
                "{t},{w},{},{},{},{}",
                q.q_defect.max(q.q_persist),
                q.q_defect,
                q.q_persist,
                thresholds[t - 1]
            )
            .expect("writing to a String");
        }
    }
    write_output(&a.output, &csv)
}

fn cmd_hazard(a: HazardArgs) -> Result<()> {
    let task = load_task(&a.model.task)?;
    let agent = load_agent(&a.model.agent)?;
    let sol = solve(a.model.solver, &task, &agent)?;
    let curve = hazard_from_solution(sol.as_ref(), a.q)?;
    let sim = match a.mc {
        Some(n) => Some(simulate_thresholds(
            &sol.threshold_values(),
            &agent,
            n,
            need_seed(a.seed, "--mc")?,
        )?),
        None => None,
    };
    let (mc_h, mc_se) = sim.as_ref().map_or((Vec::new(), Vec::new()), |s| (s.hazard(), s.stderr()));
    let cell = |v: Option<&Option<f64>>| v.copied().flatten().map_or(String::new(), |x| x.to_string());
    let mut csv = String::from("t,h_t,h_mc,stderr\n");
    for (i, h) in curve.h.iter().enumerate() {
        writeln!(csv, "{},{h},{},{}", i + 1, cell(mc_h.get(i)), cell(mc_se.get(i))).expect("writing to a String");
    }
    write_output(&a.output, &csv)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let protocol = a.protocol.load()?;
    let agent = load_agent(&a.agent)?;
    let seed = need_seed(a.seed, "simulate")?;
    let player = SimulatedPlayer::new(agent);
    let store = EventStore::in_memory();
    for i in 0..a.subjects as u64 {
        let session_seed = seed.wrapping_mul(1_000_003).wrapping_add(i);
        let config = store.create_session(protocol.id, a.protocol.rho, session_seed)?;
        let events = player.play(
            &protocol,
            session_seed,
            session_seed ^ 0x9e37_79b9_7f4a_7c15,
            a.open_phase_s * 1000,
        )?;
        let ack = store.record_events(&config.session_id, &events)?;
        if !ack.violations.is_empty() {
            return Err(Error::InvalidParams(format!(
                "simulated session {} broke game rules: {:?}",
                config.session_id, ack.violations
            )));
        }
    }
    write_output(&a.output, &store.export(&ExportFilter::All))
}

fn read_log(path: &Path) -> Result<Vec<dgmdp::game::GameEvent>> {
    parse_jsonl(&std::fs::read_to_string(path)?)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let protocol = a.protocol.load()?;
    let events = read_log(&a.log)?;
    let init = match &a.agent {
        Some(s) => load_agent(s)?,
        None => default_agent(protocol.id),
    };
    let subjects = subjects_from_log(&protocol, &events);
    let emp = dgmdp::fitting::empirical_hazard(&subjects, &EpisodeFilter::default());
    let targets = targets_from_empirical(&emp, &protocol, a.weight_by_at_risk);
    let opts = FitOptions {
        restarts: a.restarts,
        q: a.q,
        seed: need_seed(a.seed, "fit")?,
        max_evals: a.max_evals,
    };
    let result = fit_agent(&targets, &init, a.free, &opts)?;
    write_output(&a.output, &to_json(&result)?)
}

#[derive(Serialize)]
struct SweepPoint {
    gamma: f64,
    #[serde(flatten)]
    result: Optimized,
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let agent = load_agent(&a.agent)?;
    let text = json_text(&a.scenario)?;
    let run = |agent: &AgentParams| -> Result<Optimized> {
        match a.setting {
            SettingArg::Interest => {
                let mut scenario: InterestScenario = serde_json::from_str(&text)?;
                if let Some(seed) = a.seed {
                    scenario.seed = seed;
                }
                optimize_interest_accrual(agent, &scenario)
            }
            SettingArg::BonusLimit => {
                let scenario: BonusLimitScenario = serde_json::from_str(&text)?;
                optimize_bonus_limit(agent, &scenario, a.tau)
            }
        }
    };
    let json = if a.gammas.is_empty() {
        to_json(&run(&agent)?)?
    } else {
        let sweep = a
            .gammas
            .iter()
            .map(|&gamma| {
                let agent = AgentParams { gamma, ..agent };
                Ok(SweepPoint {
                    gamma,
                    result: run(&agent)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        to_json(&sweep)?
    };
    write_output(&a.output, &json)
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let store = match &a.data_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            EventStore::open(dir)?
        }
        None => EventStore::in_memory(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(dgmdp::game::server::serve(Arc::new(store), a.port))?;
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let protocol = a.protocol.load()?;
    let events = read_log(&a.log)?;
    let init = match &a.agent {
        Some(s) => load_agent(s)?,
        None => default_agent(protocol.id),
    };
    let mut opts = AnalyzeOptions::new(init);
    opts.free = a.free;
    opts.shuffles = a.shuffles;
    opts.q = a.q;
    opts.fit.q = a.fit_q;
    opts.fit.restarts = a.restarts;
    opts.fit.seed = need_seed(a.seed, "analyze")?;
    let report = analyze(&protocol, &events, &opts)?;
    write_output(&a.output, &to_json(&report)?)
}
