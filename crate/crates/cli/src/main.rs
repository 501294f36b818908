use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ecology::calibration::{calibrate, format_table, FlowRegressionOptions, FundPanel};
use ecology::experiments::{run_sweep, sample_simplex};
use ecology::io::{write_json, write_series};
use ecology::optimize::{
    dynamic_objective, evaluate_controller, evaluate_investor, investor_objective, optimize_search, static_objective,
    Controller, InvestorEnv, InvestorPolicy, Measure, PolicyKind, SearchMode, SearchOptions, SignalSchedule,
    StaticFamily, TradingEnv,
};
use ecology::stats::{facts_report, FactsOptions};
use ecology::{Error, SimConfig, Simulation};

#[derive(Parser)]
#[command(name = "ecology", version, about = "Market ecology simulator of heterogeneous fund strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its series.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the stylized-facts report.
        #[arg(long)]
        facts: bool,
    },
    /// Sweep initial wealth shares over the simplex.
    Simplex {
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value_t = 20)]
        years: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "EVOLOGY_WORKERS", default_value_t = 1)]
        workers: usize,
    },
    /// Regress fund net flows on lagged excess returns.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,6,12,24,36,48,60,120")]
        lags: Vec<usize>,
        #[arg(long, default_value_t = 15e6)]
        min_tna: f64,
        #[arg(long, default_value_t = 36.0)]
        min_age_months: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for an adaptive trading or investment strategy.
    Optimize {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long, value_enum, default_value_t = Mode::Static)]
        mode: Mode,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, default_value = "wealth-multiplier")]
        measure: String,
        #[arg(long, value_enum, default_value_t = Family::Mixed)]
        family: Family,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<usize>,
        /// Initial wealth share of the adaptive trading fund.
        #[arg(long, default_value_t = 0.01)]
        wealth_share: f64,
        /// Investor starting cash and per-period allocation budget.
        #[arg(long, default_value_t = 1000.0)]
        capital: f64,
        #[arg(long, default_value_t = 100.0)]
        invest_budget: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "EVOLOGY_WORKERS", default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Trading,
    Investor,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Static,
    Dynamic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Constant,
    Mixed,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_simulation_failure() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>, days: Option<usize>) -> Result<SimConfig, Failure> {
    let mut c = match path {
        Some(p) => SimConfig::from_path(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        c.run.master_seed = s;
    }
    if let Some(d) = days {
        c.run.t_max_days = d;
    }
    c.validate()?;
    Ok(c)
}

fn prepare_out(dir: &Path, config: &SimConfig) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("resolved_config.json"), config.to_json() + "\n")?;
    Ok(())
}

fn cmd_run(config: SimConfig, out: &Path, facts: bool) -> Result<(), Failure> {
    prepare_out(out, &config)?;
    let supply = config.market.supply_q;
    let mut sim = Simulation::new(config)?;
    let outcome = sim.run_with(&mut ecology::engine::NoHooks);
    let record = sim.into_record();
    write_series(&record, out)?;
    if facts {
        let value = match facts_report(&record, supply, &FactsOptions::default()) {
            Ok(r) => serde_json::to_value(&r).expect("report serializes"),
            Err(e) => json!({ "days": record.days.len(), "error": e.to_string() }),
        };
        write_json(&out.join("facts.json"), &value)?;
    }
    if let Err(e) = outcome {
        let t = record.termination.clone();
        write_json(
            &out.join("failure.json"),
            &json!({
                "day": t.as_ref().map(|t| t.day),
                "reason": e.to_string(),
                "completed_days": record.days.len(),
            }),
        )?;
        return Err(e.into());
    }
    println!("{} days written to {}", record.days.len(), out.display());
    Ok(())
}

fn cmd_simplex(config: SimConfig, points: usize, reps: usize, years: usize, out: &Path, workers: usize) -> Result<(), Failure> {
    if points == 0 {
        return Err(input_error("--points must be at least 1"));
    }
    prepare_out(out, &config)?;
    let pts = sample_simplex(points, config.run.master_seed);
    let res = run_sweep(&pts, reps, years, &config, workers)?;
    res.write_csv(std::io::BufWriter::new(fs::File::create(out.join("sweep.csv"))?))?;
    let failed: usize = res.points.iter().map(|p| p.failed).sum();
    println!(
        "{} points x {} reps over {} days; {} failed runs; sweep.csv in {}",
        points,
        reps,
        res.days,
        failed,
        out.display()
    );
    Ok(())
}

fn cmd_calibrate(data: &Path, options: FlowRegressionOptions, out: &Path) -> Result<(), Failure> {
    let panel = FundPanel::from_path(data)?;
    let report = calibrate(&panel, &options)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_json(out, &report)?;
    print!("{}", format_table(&report.result, "OLS Regression Results", "net_flow"));
    println!(
        "rows: {} total, {} screened, {} incomplete, {} used",
        report.counts.total, report.counts.screened, report.counts.incomplete, report.counts.used
    );
    if !report.dropped_columns.is_empty() {
        println!("dropped all-zero regressors: {}", report.dropped_columns.join(", "));
    }
    Ok(())
}

struct OptimizeArgs {
    task: Task,
    mode: Mode,
    budget: usize,
    measure: Measure,
    family: StaticFamily,
    wealth_share: f64,
    capital: f64,
    invest_budget: f64,
    workers: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.6}"))
}

fn cmd_optimize(config: SimConfig, a: OptimizeArgs, out: &Path) -> Result<(), Failure> {
    prepare_out(out, &config)?;
    let seed = config.run.master_seed;
    let days = config.run.t_max_days;
    let search_mode = match a.mode {
        Mode::Static => SearchMode::Static,
        Mode::Dynamic => SearchMode::Dynamic,
    };
    let mut options = SearchOptions::new(a.budget, seed, search_mode);
    options.workers = a.workers;

    let summary = match a.task {
        Task::Trading => {
            let env = TradingEnv::new(config, a.wealth_share, a.measure);
            let cash = evaluate_controller(&Controller::Schedule(SignalSchedule::constant(0.0, days)?), &env);
            let result = match a.mode {
                Mode::Static => optimize_search(static_objective(&env, a.family), vec![0.0; a.family.dimension()], &options)?,
                Mode::Dynamic => optimize_search(dynamic_objective(&env), vec![0.0; days.max(1)], &options)?,
            };
            result.write_trace_csv(std::io::BufWriter::new(fs::File::create(out.join("trace.csv"))?))?;
            println!("cash baseline          {}", fmt_opt(cash.measure));
            for (label, m) in ["NT", "VI", "TF"].iter().zip(cash.base) {
                println!("{label} style              {}", fmt_opt(m));
            }
            println!("optimized              {:.6}", result.best_measure);
            json!({
                "task": "trading",
                "mode": format!("{search_mode:?}"),
                "family": format!("{:?}", a.family),
                "measure": a.measure,
                "best_measure": result.best_measure,
                "candidate": result.best,
                "cash_baseline": cash.measure,
                "base_styles": { "nt": cash.base[0], "vi": cash.base[1], "tf": cash.base[2] },
                "evaluations": result.trace.len(),
            })
        }
        Task::Investor => {
            if matches!(a.mode, Mode::Dynamic) {
                return Err(input_error("--mode dynamic applies to the trading task only"));
            }
            let env = InvestorEnv {
                config,
                capital: a.capital,
                measure: a.measure,
            };
            let idle = evaluate_investor(
                &InvestorPolicy {
                    kind: PolicyKind::Null,
                    budget: a.invest_budget,
                },
                &env,
            );
            let chasing = evaluate_investor(
                &InvestorPolicy {
                    kind: PolicyKind::ReturnChasing,
                    budget: a.invest_budget,
                },
                &env,
            );
            let result = optimize_search(investor_objective(&env, a.invest_budget), vec![0.0; 7], &options)?;
            result.write_trace_csv(std::io::BufWriter::new(fs::File::create(out.join("trace.csv"))?))?;
            println!("cash baseline          {}", fmt_opt(idle.measure));
            println!("return chasing         {}", fmt_opt(chasing.measure));
            println!("optimized linear       {:.6}", result.best_measure);
            json!({
                "task": "investor",
                "mode": "Static",
                "measure": a.measure,
                "best_measure": result.best_measure,
                "candidate": result.best,
                "cash_baseline": idle.measure,
                "return_chasing": chasing.measure,
                "evaluations": result.trace.len(),
            })
        }
    };
    write_json(&out.join("best.json"), &summary)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            days,
            out,
            facts,
        } => cmd_run(load_config(config.as_deref(), seed, days)?, &out, facts),
        Command::Simplex {
            points,
            reps,
            years,
            config,
            seed,
            out,
            workers,
        } => cmd_simplex(load_config(config.as_deref(), seed, None)?, points, reps, years, &out, workers),
        Command::Calibrate {
            data,
            lags,
            min_tna,
            min_age_months,
            out,
        } => cmd_calibrate(
            &data,
            FlowRegressionOptions {
                lags,
                min_tna,
                min_age_months,
                controls: Vec::new(),
            },
            &out,
        ),
        Command::Optimize {
            task,
            mode,
            budget,
            measure,
            family,
            config,
            seed,
            days,
            wealth_share,
            capital,
            invest_budget,
            out,
            workers,
        } => {
            let measure: Measure = measure.parse()?;
            let family = match family {
                Family::Constant => StaticFamily::Constant,
                Family::Mixed => StaticFamily::Mixed,
            };
            let config = load_config(config.as_deref(), seed, days)?;
            cmd_optimize(
                config,
                OptimizeArgs {
                    task,
                    mode,
                    budget,
                    measure,
                    family,
                    wealth_share,
                    capital,
                    invest_budget,
                    workers,
                },
                &out,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
