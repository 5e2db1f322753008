//! Command-line front end: config validation, agent training, policy runs,
//! exact solving, LP export, and multi-policy comparisons, all reproducible
//! from explicit seeds.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};

use offloadsim::exact::{self, ExactError};
use offloadsim::experiments::{self, PolicySpec};
use offloadsim::model::{self, SimConfig};
use offloadsim::qlearn::{self, TrainSchedule};
use offloadsim::sim;

type Config = SimConfig<f64>;

#[derive(Parser)]
#[command(
    name = "offloadsim",
    version,
    about = "Deadline- and battery-aware task offloading: simulate, train, solve, compare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file and report every broken invariant.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
        /// Also require the interval-grid divisibility the exact solver needs.
        #[arg(long)]
        exact: bool,
    },
    /// Train the per-UAV agents and persist their Q-tables.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        seed: u64,
        /// Output path for the Q-table bundle.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of per-episode cumulative rewards per agent.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.85)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon_start: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon_end: f64,
        /// Fraction of episodes over which epsilon decays linearly.
        #[arg(long, default_value_t = 0.5)]
        decay: f64,
    },
    /// Simulate one policy over a seed list and write the metrics CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// One of rr, hef, qhef, local, or qlearn:<tables-path>.
        #[arg(long)]
        policy: String,
        /// Comma-separated seed list, e.g. 1,2,3.
        #[arg(long)]
        seeds: String,
        /// Output directory (or $OFFLOADSIM_OUT_DIR, or the working dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write the generated workload trace per seed.
        #[arg(long)]
        export_traces: bool,
    },
    /// Solve a workload trace exactly and write the solution listing.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Workload trace file (task_id,type,source_uav,arrival_time).
        #[arg(long)]
        trace: PathBuf,
        /// Objective weight between energy (1) and violations (0).
        #[arg(long)]
        weight: f64,
        /// Search budget in seconds; omit for a complete proven search.
        #[arg(long)]
        time_budget: Option<u64>,
        /// Solution JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additionally export the model in LP text format.
        #[arg(long)]
        export_lp: Option<PathBuf>,
    },
    /// Export the exact model for a trace in LP text format.
    ExportLp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        weight: Option<f64>,
        /// LP file path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several policies over one seed list and write the comparison.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated policy list, e.g. rr,hef,qhef,qlearn:tables.bin.
        #[arg(long)]
        policies: String,
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Io { path: PathBuf, message: String },
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Infeasible(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Infeasible(msg) => write!(f, "{msg}"),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes through a temp file in the same directory, then renames, so a
/// crash never leaves a partial artifact behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = read_to_string(path)?;
    let cfg: Config = model::config_from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid configuration: {e}", path.display())))?;
    let violations = model::validate_config(&cfg);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Usage(format!(
            "{}: invalid configuration:\n  {}",
            path.display(),
            violations.join("\n  ")
        )))
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let seeds: Result<Vec<u64>, _> = spec.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let seeds = seeds.map_err(|e| CliError::Usage(format!("invalid --seeds `{spec}`: {e}")))?;
    if seeds.is_empty() {
        return Err(CliError::Usage(
            "--seeds must name at least one seed".into(),
        ));
    }
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(CliError::Usage(format!(
            "--seeds `{spec}` contains duplicates"
        )));
    }
    Ok(seeds)
}

/// A parsed --policy argument; qlearn keeps its loaded tables alive for the
/// batch's lifetime.
enum PolicyChoice {
    Builtin(&'static str),
    Tables(Vec<qlearn::QTable<f64>>),
}

fn parse_policy(spec: &str, cfg: &Config) -> Result<PolicyChoice, CliError> {
    match spec {
        "rr" => Ok(PolicyChoice::Builtin("rr")),
        "hef" => Ok(PolicyChoice::Builtin("hef")),
        "qhef" => Ok(PolicyChoice::Builtin("qhef")),
        "local" => Ok(PolicyChoice::Builtin("local")),
        other => {
            if let Some(path) = other.strip_prefix("qlearn:") {
                let path = Path::new(path);
                let bytes = fs::read(path).map_err(|e| CliError::Io {
                    path: path.to_path_buf(),
                    message: format!("cannot read Q-tables: {e}"),
                })?;
                let tables =
                    qlearn::load_tables::<f64>(&mut bytes.as_slice(), model::config_hash(cfg))
                        .map_err(|e| CliError::Io {
                            path: path.to_path_buf(),
                            message: e.to_string(),
                        })?;
                if tables.len() != cfg.n_uavs {
                    return Err(CliError::Usage(format!(
                        "{}: bundle has {} agents, config has {} UAVs",
                        path.display(),
                        tables.len(),
                        cfg.n_uavs
                    )));
                }
                Ok(PolicyChoice::Tables(tables))
            } else {
                Err(CliError::Usage(format!(
                    "unknown policy `{other}` (expected rr, hef, qhef, local, or qlearn:<path>)"
                )))
            }
        }
    }
}

impl PolicyChoice {
    fn spec(&self) -> PolicySpec<'_, f64> {
        match self {
            PolicyChoice::Builtin("rr") => PolicySpec::RoundRobin,
            PolicyChoice::Builtin("hef") => PolicySpec::Hef,
            PolicyChoice::Builtin("qhef") => PolicySpec::Qhef,
            PolicyChoice::Builtin(_) => PolicySpec::LocalOnly,
            PolicyChoice::Tables(tables) => PolicySpec::Greedy(tables),
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("OFFLOADSIM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn exact_exit(err: ExactError) -> CliError {
    match err {
        ExactError::Infeasible | ExactError::TaskCannotFit { .. } | ExactError::BudgetExhausted => {
            CliError::Infeasible(err.to_string())
        }
        other => CliError::Usage(other.to_string()),
    }
}

fn load_trace(cfg: &Config, path: &Path) -> Result<Vec<model::Task<f64>>, CliError> {
    let text = read_to_string(path)?;
    let workload = sim::parse_trace::<f64>(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    sim::check_workload(cfg, &workload)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(workload)
}

fn require_exact_config(cfg: &Config) -> Result<(), CliError> {
    let issues = model::validate_config_for_exact(cfg);
    if issues.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "configuration unusable for the exact solver:\n  {}",
            issues.join("\n  ")
        )))
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::ValidateConfig { config, exact } => {
            let text = read_to_string(&config)?;
            let cfg: Config = model::config_from_json(&text).map_err(|e| {
                CliError::Usage(format!("{}: invalid configuration: {e}", config.display()))
            })?;
            let violations = if exact {
                model::validate_config_for_exact(&cfg)
            } else {
                model::validate_config(&cfg)
            };
            if violations.is_empty() {
                println!("valid");
                Ok(())
            } else {
                Err(CliError::Usage(format!(
                    "{} violation(s):\n  {}",
                    violations.len(),
                    violations.join("\n  ")
                )))
            }
        }

        Command::Train {
            config,
            episodes,
            seed,
            out,
            trace_out,
            alpha,
            gamma,
            epsilon_start,
            epsilon_end,
            decay,
        } => {
            let cfg = load_config(&config)?;
            let mut schedule = TrainSchedule::new(episodes);
            schedule.learning_rate = alpha;
            schedule.discount = gamma;
            schedule.epsilon_start = epsilon_start;
            schedule.epsilon_end = epsilon_end;
            schedule.decay_fraction = decay;
            let issues = schedule.validate();
            if !issues.is_empty() {
                return Err(CliError::Usage(format!(
                    "invalid training schedule:\n  {}",
                    issues.join("\n  ")
                )));
            }
            let result = qlearn::train(&cfg, &schedule, seed);
            let mut bytes = Vec::new();
            qlearn::save_tables(&mut bytes, model::config_hash(&cfg), &result.tables)
                .expect("in-memory write cannot fail");
            write_atomic(&out, &bytes)?;
            println!(
                "trained {} agents for {episodes} episodes (seed {seed}); tables -> {}",
                result.tables.len(),
                out.display()
            );
            println!(
                "battery exhausted in {} of {episodes} episodes",
                result.exhausted_episodes.len()
            );
            if let Some(trace_path) = trace_out {
                write_atomic(
                    &trace_path,
                    experiments::reward_trace_csv(&result.reward_traces).as_bytes(),
                )?;
                println!("reward traces -> {}", trace_path.display());
            }
            Ok(())
        }

        Command::Run {
            config,
            policy,
            seeds,
            out_dir: dir,
            export_traces,
        } => {
            let cfg = load_config(&config)?;
            let seeds = parse_seeds(&seeds)?;
            let choice = parse_policy(&policy, &cfg)?;
            let batches = vec![experiments::run_batch(&cfg, choice.spec(), &seeds)];
            let dir = out_dir(dir);
            write_atomic(
                &dir.join("energy.csv"),
                experiments::energy_csv(&batches).as_bytes(),
            )?;
            write_atomic(
                &dir.join("violations.csv"),
                experiments::violations_csv(&batches).as_bytes(),
            )?;
            if export_traces {
                for &seed in &seeds {
                    let workload = sim::generate_workload(&cfg, seed);
                    write_atomic(
                        &dir.join(format!("trace-{seed}.csv")),
                        sim::write_trace(&workload).as_bytes(),
                    )?;
                }
            }
            for m in &batches[0] {
                println!(
                    "seed {}: {} tasks, {} violations ({}%), min remaining {}%",
                    m.seed,
                    m.total_tasks,
                    m.violations_total,
                    m.violation_pct(),
                    m.min_remaining_pct()
                );
            }
            println!("metrics -> {}", dir.join("energy.csv").display());
            println!("metrics -> {}", dir.join("violations.csv").display());
            Ok(())
        }

        Command::Solve {
            config,
            trace,
            weight,
            time_budget,
            out,
            export_lp,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.weight = weight;
            require_exact_config(&cfg)?;
            let workload = load_trace(&cfg, &trace)?;
            let instance = exact::build_instance(&cfg, &workload).map_err(exact_exit)?;
            if let Some(lp_path) = export_lp {
                write_atomic(&lp_path, exact::export_lp(&instance).as_bytes())?;
                println!("model -> {}", lp_path.display());
            }
            let budget = time_budget.map(Duration::from_secs);
            let outcome = exact::solve(&instance, budget).map_err(exact_exit)?;
            let dump = exact::solution_dump(&instance, &outcome);
            println!(
                "objective: {} (proven optimal: {}), violations: {}",
                dump.objective, dump.proven_optimal, dump.violations_total
            );
            let json = experiments::to_json_pretty(&dump);
            match out {
                Some(path) => {
                    write_atomic(&path, json.as_bytes())?;
                    println!("solution -> {}", path.display());
                }
                None => println!("{json}"),
            }
            Ok(())
        }

        Command::ExportLp {
            config,
            trace,
            weight,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = weight {
                cfg.weight = w;
            }
            require_exact_config(&cfg)?;
            let workload = load_trace(&cfg, &trace)?;
            let instance = exact::build_instance(&cfg, &workload).map_err(exact_exit)?;
            let lp = exact::export_lp(&instance);
            match out {
                Some(path) => {
                    write_atomic(&path, lp.as_bytes())?;
                    println!("model -> {}", path.display());
                }
                None => print!("{lp}"),
            }
            Ok(())
        }

        Command::Compare {
            config,
            policies,
            seeds,
            out_dir: dir,
        } => {
            let cfg = load_config(&config)?;
            let seeds = parse_seeds(&seeds)?;
            let choices: Vec<PolicyChoice> = policies
                .split(',')
                .map(|p| parse_policy(p.trim(), &cfg))
                .collect::<Result<_, _>>()?;
            if choices.is_empty() {
                return Err(CliError::Usage(
                    "--policies must name at least one policy".into(),
                ));
            }
            let batches: Vec<_> = choices
                .iter()
                .map(|c| experiments::run_batch(&cfg, c.spec(), &seeds))
                .collect();
            let report =
                experiments::compare(&batches).map_err(|e| CliError::Usage(e.to_string()))?;
            let dir = out_dir(dir);
            write_atomic(
                &dir.join("report.json"),
                experiments::to_json_pretty(&report).as_bytes(),
            )?;
            write_atomic(
                &dir.join("energy.csv"),
                experiments::energy_csv(&batches).as_bytes(),
            )?;
            write_atomic(
                &dir.join("violations.csv"),
                experiments::violations_csv(&batches).as_bytes(),
            )?;
            for p in &report.policies {
                println!(
                    "{}: min remaining {}% (sd {}), violations {}% (sd {})",
                    p.policy,
                    p.mean_min_remaining_pct,
                    p.stddev_min_remaining_pct,
                    p.mean_violation_pct,
                    p.stddev_violation_pct
                );
            }
            for o in &report.orderings {
                println!(
                    "ordering {}: {}",
                    o.name,
                    if o.holds { "holds" } else { "fails" }
                );
            }
            println!("report -> {}", dir.join("report.json").display());
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = execute(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
