use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ert_cli::args::{parse_grid, parse_strategies, parse_strategy};
use ert_cli::monitor::{MonitorConfig, MonitorRun, MonitorSink};
use ert_cli::output::{aligned_table, json_string, trajectory_svg, write_csv, write_json, write_trajectory_csv};
use ert_core::binary::BinaryConfig;
use ert_core::continuous::ContinuousConfig;
use ert_core::deaths::{design_sample_size, expected_deaths, DeathsConfig};
use ert_core::multistate::{MultistateConfig, StateModel};
use ert_core::simlab::sizing::{size_logrank, size_t_test, size_two_proportion};
use ert_core::simlab::study::{head_to_head, wage_study, WageStudy, WageVariant};
use ert_core::simlab::{
    run_operating_characteristics_with, simulate_trajectories, BettingStrategy, Execution, OperatingCharacteristics,
    SimScenario,
};
use ert_core::survival::SurvivalConfig;
use ert_core::{RampSchedule, WealthStep};

const EXIT_CROSSED: u8 = 10;

#[derive(Parser)]
#[command(name = "ert", version, about = "Anytime-valid sequential randomization tests")]
struct Cli {
    /// Run replications on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monitor an NDJSON event stream; exits 10 once the threshold is crossed.
    Monitor(MonitorArgs),
    /// Operating characteristics of a scenario file.
    Simulate(SimulateArgs),
    /// Fixed-sample size for a design alternative.
    Power(PowerArgs),
    /// Deaths-only against binary monitoring on the same simulated trials.
    Compare(CompareArgs),
    /// Betting strategies across an effect grid.
    Wage(WageArgs),
    /// Wealth paths of simulated trials as CSV (and SVG).
    Trajectories(TrajectoryArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Binary,
    Deaths,
    Continuous,
    Survival,
    Multistate,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long, value_enum)]
    variant: Variant,
    /// NDJSON input, `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Resumed from if it exists, in which case the input holds only later
    /// records (see --replay). Rewritten as events are processed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    checkpoint_every: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    ramp: Option<u64>,
    /// Allocation probability to treatment (binary, continuous).
    #[arg(long)]
    allocation: Option<f64>,
    /// Continuous only (default 0.6).
    #[arg(long)]
    c_max: Option<f64>,
    /// Survival fixed bet magnitude (default 0.25).
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Wager policy, e.g. half-kelly, full-kelly, fixed:0.1, sign-only:0.6.
    #[arg(long)]
    strategy: Option<String>,
    /// Survival only: subjects randomized to treatment.
    #[arg(long)]
    n_trt: Option<u64>,
    /// Survival only: subjects randomized to control.
    #[arg(long)]
    n_ctrl: Option<u64>,
    /// Input is the whole stream: skip the records a resumed checkpoint already covers.
    #[arg(long)]
    replay: bool,
    /// Print every ledger step as NDJSON.
    #[arg(long)]
    trace: bool,
    /// Also write the final summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON scenario file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_sims: Option<u64>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, value_enum)]
    variant: Variant,
    /// Control event rate.
    #[arg(long)]
    p1: Option<f64>,
    /// Treatment event rate.
    #[arg(long)]
    p2: Option<f64>,
    /// Standardized mean difference.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    hr: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    power: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    tables: TableOut,
}

#[derive(Args)]
struct TableOut {
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    arr: f64,
    /// Comma list or `lo..hi` range.
    #[arg(long, default_value = "0.10..0.40")]
    baselines: String,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 0.8)]
    power: f64,
    #[arg(long, default_value_t = 1000)]
    n_sims: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    tables: TableOut,
}

#[derive(Args)]
struct WageArgs {
    #[arg(long, value_enum)]
    variant: Variant,
    /// Single hazard ratio (survival).
    #[arg(long)]
    hr: Option<f64>,
    /// Single absolute risk reduction (binary, deaths).
    #[arg(long)]
    arr: Option<f64>,
    /// Single standardized effect (continuous).
    #[arg(long)]
    d: Option<f64>,
    /// Effect grid: comma list or `lo..hi` range.
    #[arg(long)]
    effects: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Comma list, e.g. fixed:0.25,half-kelly.
    #[arg(long)]
    strategies: Option<String>,
    /// Control rate for binary (default 0.40) and deaths (default 0.25).
    #[arg(long)]
    p_ctrl: Option<f64>,
    /// Fixed size for every cell instead of per-effect sizing.
    #[arg(long)]
    n_patients: Option<u64>,
    #[arg(long, default_value_t = 0.8)]
    power: f64,
    #[arg(long, default_value_t = 1000)]
    n_sims: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    tables: TableOut,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 30)]
    n_trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let exec = execution(&cli)?;
    match cli.command {
        Command::Monitor(a) => monitor(a),
        Command::Simulate(a) => simulate(a, exec),
        Command::Power(a) => power(a),
        Command::Compare(a) => compare(a, exec),
        Command::Wage(a) => wage(a, exec),
        Command::Trajectories(a) => trajectories(a, exec),
    }
}

fn execution(cli: &Cli) -> anyhow::Result<Execution> {
    if cli.sequential {
        return Ok(Execution::Sequential);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
        if n == 1 {
            return Ok(Execution::Sequential);
        }
    }
    Ok(Execution::Parallel)
}

fn monitor_config(a: &MonitorArgs) -> anyhow::Result<MonitorConfig> {
    let only = |flag: &str, set: bool, allowed: &[Variant]| -> anyhow::Result<()> {
        if set && !allowed.contains(&a.variant) {
            bail!("--{flag} does not apply to this variant");
        }
        Ok(())
    };
    only("allocation", a.allocation.is_some(), &[Variant::Binary, Variant::Continuous])?;
    only("c-max", a.c_max.is_some(), &[Variant::Continuous])?;
    only("lambda-max", a.lambda_max.is_some(), &[Variant::Survival])?;
    only("n-trt", a.n_trt.is_some(), &[Variant::Survival])?;
    only("n-ctrl", a.n_ctrl.is_some(), &[Variant::Survival])?;
    let strategy = a.strategy.as_deref().map(parse_strategy).transpose()?;
    let schedule = |d: RampSchedule| -> anyhow::Result<RampSchedule> {
        Ok(RampSchedule::new(a.burn_in.unwrap_or(d.burn_in), a.ramp.unwrap_or(d.ramp))?)
    };
    Ok(match a.variant {
        Variant::Binary => {
            let d = BinaryConfig::default();
            let c = BinaryConfig {
                schedule: schedule(d.schedule)?,
                p: a.allocation.unwrap_or(d.p),
                alpha: a.alpha,
                policy: strategy.map(|s| s.binary_policy()).transpose()?.unwrap_or(d.policy),
            };
            c.validate()?;
            MonitorConfig::Binary(c)
        }
        Variant::Deaths => {
            let d = DeathsConfig::default();
            MonitorConfig::Deaths(DeathsConfig {
                schedule: schedule(d.schedule)?,
                alpha: a.alpha,
                policy: strategy.map(|s| s.deaths_policy()).transpose()?.unwrap_or(d.policy),
            })
        }
        Variant::Continuous => {
            let d = ContinuousConfig::default();
            MonitorConfig::Continuous(ContinuousConfig {
                schedule: schedule(d.schedule)?,
                c_max: a.c_max.unwrap_or(d.c_max),
                p: a.allocation.unwrap_or(d.p),
                alpha: a.alpha,
                policy: strategy.map(|s| s.continuous_policy()).transpose()?.unwrap_or(d.policy),
            })
        }
        Variant::Survival => {
            let (Some(n_trt), Some(n_ctrl)) = (a.n_trt, a.n_ctrl) else {
                bail!("survival monitoring needs --n-trt and --n-ctrl");
            };
            let d = SurvivalConfig::default();
            let lambda_max = a.lambda_max.unwrap_or(0.25);
            let policy = match strategy {
                Some(s) if a.lambda_max.is_some() => bail!("give either --strategy {} or --lambda-max", s.label()),
                Some(s) => s.survival_policy()?,
                None => BettingStrategy::Fixed { lambda: lambda_max }.survival_policy()?,
            };
            MonitorConfig::Survival {
                config: SurvivalConfig { schedule: schedule(d.schedule)?, alpha: a.alpha, policy },
                n_trt,
                n_ctrl,
            }
        }
        Variant::Multistate => {
            if let Some(s) = strategy {
                s.check_multistate()?;
            }
            let d = MultistateConfig::default();
            MonitorConfig::Multistate {
                config: MultistateConfig { schedule: schedule(d.schedule)?, alpha: a.alpha, ..d },
                model: StateModel::default(),
            }
        }
    })
}

struct ConsoleSink {
    trace: bool,
    out: io::BufWriter<io::Stdout>,
}

impl MonitorSink for ConsoleSink {
    fn step(&mut self, step: &WealthStep) -> anyhow::Result<()> {
        if self.trace {
            serde_json::to_writer(&mut self.out, step)?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    fn crossed(&mut self, step: &WealthStep, timestamp: &str) -> anyhow::Result<()> {
        self.out.flush()?;
        eprintln!("CROSSED index={} e_value={} at={timestamp}", step.index, step.wealth);
        Ok(())
    }
}

fn monitor(a: MonitorArgs) -> anyhow::Result<ExitCode> {
    let config = monitor_config(&a)?;
    let mut run = match &a.checkpoint {
        Some(path) if path.exists() => MonitorRun::resume(config, path)?,
        _ => MonitorRun::fresh(config)?,
    };
    let input: Box<dyn BufRead> = if a.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(BufReader::new(fs::File::open(&a.input).with_context(|| format!("opening {}", a.input))?))
    };
    let mut sink = ConsoleSink { trace: a.trace, out: io::BufWriter::new(io::stdout()) };
    let skip = if a.replay { run.state.ledger().len() } else { 0 };
    let result = run.run(input, skip, a.checkpoint.as_deref(), a.checkpoint_every, &mut sink);
    sink.out.flush()?;
    result?;
    let summary = run.summary();
    println!("{}", serde_json::to_string(&summary)?);
    if let Some(path) = &a.report {
        write_json(path, "monitor", &summary)?;
    }
    Ok(if summary.crossed { ExitCode::from(EXIT_CROSSED) } else { ExitCode::SUCCESS })
}

fn load_scenario(path: &PathBuf, seed: Option<u64>, n_sims: Option<u64>) -> anyhow::Result<SimScenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut s: SimScenario =
        serde_json::from_str(&text).with_context(|| format!("invalid scenario {}", path.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(n) = n_sims {
        s.n_sims = n;
    }
    Ok(s)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

fn oc_table(oc: &OperatingCharacteristics) -> String {
    let crossing = match (oc.median_first_crossing, oc.median_crossing_fraction) {
        (Some(m), Some(f)) => format!("{m} ({:.0}%)", 100.0 * f),
        (Some(m), None) => m.to_string(),
        _ => "-".into(),
    };
    let q = &oc.final_e;
    let rows = vec![
        vec!["variant".into(), oc.variant.clone()],
        vec!["strategy".into(), oc.strategy.clone()],
        vec!["design size".into(), oc.design_size.to_string()],
        vec!["replications".into(), oc.n_sims.to_string()],
        vec!["rejection rate".into(), format!("{:.4} (SE {:.4})", oc.rejection_rate, oc.standard_error)],
        vec!["median crossing".into(), crossing],
        vec!["median stream length".into(), oc.median_stream_length.to_string()],
        vec![
            "final e q05/q25/q50/q75/q95".into(),
            format!("{:.3e} {:.3e} {:.3e} {:.3e} {:.3e}", q.q05, q.q25, q.q50, q.q75, q.q95),
        ],
    ];
    aligned_table(&["quantity", "value"], &rows)
}

fn simulate(a: SimulateArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(&a.scenario, a.seed, a.n_sims)?;
    let oc = run_operating_characteristics_with(&scenario, exec)?;
    if a.json {
        println!("{}", json_string("operating_characteristics", &oc)?);
    } else {
        print!("{}", oc_table(&oc));
    }
    if let Some(path) = &a.out {
        write_json(path, "operating_characteristics", &oc)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn emit_tables<T: Serialize>(kind: &str, rows: &[T], header: &[&str], cells: Vec<Vec<String>>, out: &TableOut) -> anyhow::Result<()> {
    print!("{}", aligned_table(header, &cells));
    if let Some(path) = &out.csv {
        write_csv(path, rows)?;
    }
    if let Some(path) = &out.json {
        #[derive(Serialize)]
        struct Rows<'a, T> {
            rows: &'a [T],
        }
        write_json(path, kind, &Rows { rows })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PowerRow {
    variant: &'static str,
    effect: String,
    power: f64,
    alpha: f64,
    n_total: u64,
    n_monitoring: Option<u64>,
    expected_deaths: Option<u64>,
}

fn power(a: PowerArgs) -> anyhow::Result<ExitCode> {
    let need = |v: Option<f64>, flag: &str| v.with_context(|| format!("--{flag} is required for this variant"));
    let row = match a.variant {
        Variant::Binary => {
            let (p1, p2) = (need(a.p1, "p1")?, need(a.p2, "p2")?);
            PowerRow {
                variant: "binary",
                effect: format!("p1={p1} p2={p2}"),
                power: a.power,
                alpha: a.alpha,
                n_total: size_two_proportion(p1, p2, a.power, a.alpha)?,
                n_monitoring: None,
                expected_deaths: None,
            }
        }
        Variant::Deaths => {
            let (p1, p2) = (need(a.p1, "p1")?, need(a.p2, "p2")?);
            let n = size_two_proportion(p1, p2, a.power, a.alpha)?;
            let inflated = design_sample_size(n);
            PowerRow {
                variant: "deaths",
                effect: format!("p1={p1} p2={p2}"),
                power: a.power,
                alpha: a.alpha,
                n_total: n,
                n_monitoring: Some(inflated),
                expected_deaths: Some(expected_deaths(inflated, p1, p2)),
            }
        }
        Variant::Continuous => {
            let d = need(a.d, "d")?;
            PowerRow {
                variant: "continuous",
                effect: format!("d={d}"),
                power: a.power,
                alpha: a.alpha,
                n_total: size_t_test(d, a.power, a.alpha)?,
                n_monitoring: None,
                expected_deaths: None,
            }
        }
        Variant::Survival => {
            let hr = need(a.hr, "hr")?;
            PowerRow {
                variant: "survival",
                effect: format!("hr={hr}"),
                power: a.power,
                alpha: a.alpha,
                n_total: size_logrank(hr, a.power, a.alpha)?,
                n_monitoring: None,
                expected_deaths: None,
            }
        }
        Variant::Multistate => bail!("no fixed-sample design is defined for the multistate test"),
    };
    let opt = |v: Option<u64>| v.map_or_else(|| "-".into(), |x| x.to_string());
    let cells = vec![vec![
        row.variant.into(),
        row.effect.clone(),
        row.power.to_string(),
        row.alpha.to_string(),
        row.n_total.to_string(),
        opt(row.n_monitoring),
        opt(row.expected_deaths),
    ]];
    emit_tables(
        "power",
        std::slice::from_ref(&row),
        &["variant", "effect", "power", "alpha", "n", "n_monitoring", "expected_deaths"],
        cells,
        &a.tables,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn compare(a: CompareArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    let baselines = parse_grid(&a.baselines, a.step)?;
    let rows = head_to_head(&baselines, a.arr, a.power, a.n_sims, a.seed, exec)?;
    let cells = rows
        .iter()
        .map(|r| {
            vec![
                format!("{:.2}", r.baseline),
                format!("{:.3}", r.death_coin),
                r.n_patients.to_string(),
                r.expected_deaths.to_string(),
                format!("{:.1}%", 100.0 * r.binary_power),
                format!("{:.1}%", 100.0 * r.deaths_power),
                format!("{:+.1}", r.delta_pp),
                r.winner.clone(),
            ]
        })
        .collect();
    emit_tables(
        "compare",
        &rows,
        &["baseline", "death_coin", "n", "deaths", "binary_power", "deaths_power", "delta_pp", "winner"],
        cells,
        &a.tables,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn wage(a: WageArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    let single = |flag: &str, v: Option<f64>, allowed: Variant| -> anyhow::Result<Option<f64>> {
        match v {
            Some(_) if a.variant != allowed => bail!("--{flag} does not apply to this variant"),
            _ => Ok(v),
        }
    };
    let hr = single("hr", a.hr, Variant::Survival)?;
    let d = single("d", a.d, Variant::Continuous)?;
    let arr = match a.variant {
        Variant::Deaths => a.arr,
        _ => single("arr", a.arr, Variant::Binary)?,
    };
    let (variant, default_effects, default_strategies) = match a.variant {
        Variant::Binary => (
            WageVariant::Binary { p_ctrl: a.p_ctrl.unwrap_or(0.40) },
            vec![0.05],
            "fixed:0.05,fixed:0.10,fixed:0.15,fixed:0.20,half-kelly",
        ),
        Variant::Deaths => (
            WageVariant::Deaths { p_ctrl: a.p_ctrl.unwrap_or(0.25) },
            vec![0.05],
            "full-kelly,half-kelly,fixed:0.05,fixed:0.10",
        ),
        Variant::Continuous => (WageVariant::Continuous, vec![0.5, 0.3, 0.2], "doubly-adaptive,sign-only:0.3,sign-only:0.6"),
        Variant::Survival => (WageVariant::Survival, vec![0.70, 0.75, 0.80, 0.85, 0.90], "fixed:0.25,half-kelly"),
        Variant::Multistate => bail!("the multistate test has a single wager; nothing to compare"),
    };
    if a.p_ctrl.is_some() && !matches!(a.variant, Variant::Binary | Variant::Deaths) {
        bail!("--p-ctrl does not apply to this variant");
    }
    let effects = match (&a.effects, hr.or(d).or(arr)) {
        (Some(_), Some(_)) => bail!("give either --effects or a single effect flag"),
        (Some(grid), None) => parse_grid(grid, a.step)?,
        (None, Some(e)) => vec![e],
        (None, None) => default_effects,
    };
    let strategies = parse_strategies(a.strategies.as_deref().unwrap_or(default_strategies))?;
    let study = WageStudy {
        variant,
        strategies,
        effects,
        n_sims: a.n_sims,
        seed: a.seed,
        n_patients: a.n_patients,
        target_power: a.power,
    };
    let cells = wage_study(&study, exec)?;
    let rows = cells
        .iter()
        .map(|c| {
            vec![
                c.effect.to_string(),
                c.strategy.clone(),
                c.design_size.to_string(),
                format!("{:.1}%", 100.0 * c.power),
                format!("{:.1}", 100.0 * c.standard_error),
                format!("{:.3e}", c.median_final_e),
                fmt_opt(c.median_first_crossing, 1),
            ]
        })
        .collect();
    emit_tables(
        "wage",
        &cells,
        &["effect", "strategy", "n", "power", "se_pp", "median_final_e", "median_crossing"],
        rows,
        &a.tables,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn trajectories(a: TrajectoryArgs, exec: Execution) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(&a.scenario, a.seed, None)?;
    let paths = simulate_trajectories(&scenario, a.n_trials, exec)?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_trajectory_csv(io::BufWriter::new(file), &paths)?;
    if let Some(svg) = &a.svg {
        fs::write(svg, trajectory_svg(&paths, 1.0 / scenario.alpha)).with_context(|| format!("writing {}", svg.display()))?;
    }
    let crossed = paths.iter().filter(|p| p.iter().any(|s| s.crossed)).count();
    println!("{} trajectories, {crossed} crossed 1/alpha = {}", paths.len(), 1.0 / scenario.alpha);
    Ok(ExitCode::SUCCESS)
}
