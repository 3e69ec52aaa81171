use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use takeover_core::gain_model::{choice_gain, following_gain, switch_point};
use takeover_core::intervention::ModalityBoosts;
use takeover_core::scenario::write_trials_csv;
use takeover_core::simulate::{
    self, calibrate_targets, replicate, write_rows_csv, Calibration, CalibrationOptions, CalibrationParameter,
    CalibrationTarget, PolicyPlan, ReplicateOptions, ReportRow, Study,
};
use takeover_core::{Choice, PayoffMatrix, PayoffSet, PolicyKind, PolicySpec, SessionConfig, Task};
use takeover_service::{replay_file, MonotonicClock, SessionStore, DATA_DIR_ENV};

mod failure;

use failure::Failure;

const REPORT_SCHEMA: &str = "\
Report CSV (long format, one row per cell):
  study, group            run label and remind method (aag, base, null; `all` otherwise)
  task, accuracy,         cell factors; `all` marks a level pooled over
  time_budget_s
  n_trials                trials behind the row
  aag_mean, opg_mean      mean expected gain per trial, achieved and optimal
  aag_sd                  SD of per-driver mean AAG
  gap_ratio               1 - AAG/OPG over the pooled trials
  aag_opg_ratio           AAG/OPG
  follow_rate, conservative_rate, correct_ratio
  realized_mean           mean payoff read in the ground-truth column
Metrics are printed with four decimals.";

const TRIALS_SCHEMA: &str = "\
Trial CSV: trial_id, task, p_announced, suggestion, truth, time_budget_s, drive_phase_s
(`suggestion` and `truth` are option labels; `truth` is the better option).";

#[derive(Parser)]
#[command(name = "takeover", version, about = "Expected-gain model of driver take-over decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Study2,
    Study3,
    Study4,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::Study2 => Study::Study2,
            StudyArg::Study3 => Study::Study3,
            StudyArg::Study4 => Study::Study4,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ParameterArg {
    RationalWeight,
    Temperature,
}

#[derive(Subcommand)]
enum Command {
    /// Print the payoff presets with following gain, choice gain and switch points.
    Presets {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Export the trial sequence of a session config.
    #[command(after_help = TRIALS_SCHEMA)]
    Trials {
        /// Preset name (study2, study3, study4) or JSON config file.
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a driver population and write per-cell results.
    #[command(after_help = REPORT_SCHEMA)]
    Simulate {
        /// Preset name (study2, study3, study4) or JSON config file.
        #[arg(long)]
        config: String,
        /// optimal, follow, conservative, anti_follow, time_pressured:<weight>,
        /// bounded_rational:<temperature>, or a JSON policy, plan or calibration file.
        #[arg(long, default_value = "optimal")]
        policy: String,
        #[arg(long, default_value_t = 100)]
        drivers: u32,
        /// Seeds the trial streams and every policy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full run report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Payoff matrix JSON files replacing presets.
        #[arg(long = "payoff")]
        payoffs: Vec<PathBuf>,
    },
    /// Fit time-pressured rational weights (or temperatures) to target gap ratios.
    Calibrate {
        /// `default` or a JSON array of {"time_budget_s", "target_gap_ratio"}.
        #[arg(long, default_value = "default")]
        targets: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50_000)]
        trials_per_eval: u32,
        #[arg(long, value_enum, default_value = "rational-weight")]
        parameter: ParameterArg,
        #[arg(long = "payoff")]
        payoffs: Vec<PathBuf>,
    },
    /// Replicate a study and write `<study>.csv` and `<study>.json` to DIR.
    #[command(after_help = REPORT_SCHEMA)]
    Replicate {
        #[arg(value_enum)]
        study: StudyArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Calibration file from `calibrate`; fitted on the fly when absent.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Policy overriding the calibration (same syntax as `simulate`).
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, default_value_t = 50_000)]
        trials_per_cell: u32,
        /// Alert boost applied to every modality.
        #[arg(long)]
        boost: Option<f64>,
        /// Per-alert decay of the boost over consecutive alerts.
        #[arg(long)]
        habituation: Option<f64>,
        #[arg(long = "payoff")]
        payoffs: Vec<PathBuf>,
    },
    /// Serve live sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for session logs.
        #[arg(long, env = DATA_DIR_ENV)]
        data: Option<PathBuf>,
    },
    /// Recompute a live session summary from its JSONL log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::user("IoError", format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Failure::user("IoError", format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, bytes).map_err(|e| Failure::user("IoError", format!("{}: {e}", p.display())))
        }
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::internal("IoError", e.to_string())),
    }
}

fn load_config(arg: &str, seed: Option<u64>) -> Result<SessionConfig, Failure> {
    let mut config = match SessionConfig::preset(arg, 0) {
        Some(c) => c,
        None => serde_json::from_str(&read(Path::new(arg))?).map_err(|e| Failure::user("ConfigError", format!("{arg}: {e}")))?,
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate().map_err(|e| Failure::user("ConfigError", e.to_string()))?;
    Ok(config)
}

fn load_payoffs(paths: &[PathBuf]) -> Result<PayoffSet, Failure> {
    paths.iter().try_fold(PayoffSet::presets(), |set, p| {
        let m = PayoffMatrix::from_json(&read(p)?).map_err(|e| Failure::user("PayoffError", format!("{}: {e}", p.display())))?;
        Ok(set.with(m))
    })
}

fn parse_policy(arg: &str, seed: u64) -> Result<PolicyPlan, Failure> {
    let bad = |m: String| Failure::user("PolicyError", m);
    let number = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("{s:?} is not a number")));
    let kind = match arg.split_once(':') {
        None => match arg {
            "optimal" => Some(PolicyKind::Optimal),
            "follow" => Some(PolicyKind::Follow),
            "conservative" => Some(PolicyKind::Conservative),
            "anti_follow" => Some(PolicyKind::AntiFollow),
            _ => None,
        },
        Some(("time_pressured", w)) => Some(PolicyKind::TimePressured {
            rational_weight: number(w)?,
            fallback: Default::default(),
        }),
        Some(("bounded_rational", t)) => Some(PolicyKind::BoundedRational { temperature: number(t)? }),
        Some(_) => None,
    };
    let plan = match kind {
        Some(kind) => PolicyPlan::from(PolicySpec { kind, seed }),
        None => {
            let text = read(Path::new(arg))?;
            if let Ok(c) = serde_json::from_str::<Calibration>(&text) {
                c.plan()
            } else if let Ok(p) = serde_json::from_str::<PolicyPlan>(&text) {
                p
            } else {
                PolicyPlan::from(
                    serde_json::from_str::<PolicySpec>(&text).map_err(|e| bad(format!("{arg}: {e}")))?,
                )
            }
        }
    }
    .with_seed(seed);
    plan.validate().map_err(|e| bad(e.to_string()))?;
    Ok(plan)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn presets(format: Format) -> Result<(), Failure> {
    let rows: Vec<_> = Task::ALL
        .iter()
        .map(|&t| {
            let m = PayoffMatrix::preset(t);
            (t, m.clone(), following_gain(&m), choice_gain(&m), Choice::BOTH.map(|v| switch_point(&m, v)))
        })
        .collect();
    let sp = |x: Option<f64>| x.map_or("none".to_string(), |p| format!("{p:.4}"));
    let text = match format {
        Format::Json => {
            let doc: Vec<_> = rows
                .iter()
                .map(|(t, m, fg, cg, s)| {
                    serde_json::json!({
                        "task": t, "labels": t.labels(), "matrix": m,
                        "following_gain": fg, "choice_gain": cg,
                        "switch_point": {"suggest_first": s[0], "suggest_second": s[1]},
                    })
                })
                .collect();
            String::from_utf8(json_bytes(&doc)).unwrap()
        }
        Format::Csv => {
            let mut s = String::from("task,pg00,pg01,pg10,pg11,following_gain,choice_gain,switch_point_first,switch_point_second\n");
            for (t, m, fg, cg, sw) in &rows {
                let pg = m.pg();
                s += &format!(
                    "{t},{},{},{},{},{fg:.2},{cg:.2},{},{}\n",
                    pg[0][0], pg[0][1], pg[1][0], pg[1][1], sp(sw[0]), sp(sw[1])
                );
            }
            s
        }
        Format::Text => {
            let mut s = format!(
                "{:<16}{:>7}{:>7}{:>7}{:>7}{:>11}{:>9}{:>10}{:>10}\n",
                "task", "pg00", "pg01", "pg10", "pg11", "following", "choice", "p*(V=1)", "p*(V=2)"
            );
            for (t, m, fg, cg, sw) in &rows {
                let pg = m.pg();
                s += &format!(
                    "{:<16}{:>7.2}{:>7.2}{:>7.2}{:>7.2}{:>11.2}{:>9.2}{:>10}{:>10}\n",
                    t.as_str(), pg[0][0], pg[0][1], pg[1][0], pg[1][1], fg, cg, sp(sw[0]), sp(sw[1])
                );
            }
            s += "\npgDV: perceived gain of decision D under suggestion V; option 1 is ";
            s += &Task::ALL.map(|t| t.labels()[0]).join(" / ");
            s += ".\n";
            s
        }
    };
    emit(None, text.as_bytes())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Presets { format } => presets(format),
        Command::Trials { config, seed, out } => {
            let config = load_config(&config, seed)?;
            let trials = takeover_core::scenario::generate_session(&config).map_err(Failure::from_scenario)?;
            let mut buf = Vec::new();
            write_trials_csv(&trials, &mut buf).map_err(Failure::from_scenario)?;
            emit(out.as_deref(), &buf)
        }
        Command::Simulate {
            config,
            policy,
            drivers,
            seed,
            out,
            json,
            payoffs,
        } => {
            let config = load_config(&config, Some(seed))?;
            let plan = parse_policy(&policy, seed)?;
            let payoffs = load_payoffs(&payoffs)?;
            let report = simulate::run(&config, &plan, &payoffs, drivers).map_err(Failure::from_sim)?;
            let rows: Vec<ReportRow> = report
                .cells
                .iter()
                .map(|c| ReportRow::from_cell("simulate", "all", c))
                .collect();
            let mut buf = Vec::new();
            write_rows_csv(&rows, &mut buf).map_err(|e| Failure::internal("IoError", e.to_string()))?;
            emit(out.as_deref(), &buf)?;
            if let Some(path) = json {
                emit(Some(&path), &json_bytes(&report))?;
            }
            Ok(())
        }
        Command::Calibrate {
            targets,
            out,
            seed,
            trials_per_eval,
            parameter,
            payoffs,
        } => {
            let targets = if targets == "default" {
                CalibrationTarget::defaults()
            } else {
                serde_json::from_str(&read(Path::new(&targets))?)
                    .map_err(|e| Failure::user("ConfigError", format!("{targets}: {e}")))?
            };
            let opts = CalibrationOptions {
                parameter: match parameter {
                    ParameterArg::RationalWeight => CalibrationParameter::RationalWeight,
                    ParameterArg::Temperature => CalibrationParameter::Temperature,
                },
                trials_per_eval,
                policy_seed: seed,
                ..CalibrationOptions::default()
            };
            let cal = calibrate_targets(&targets, seed, &load_payoffs(&payoffs)?, &opts).map_err(Failure::from_sim)?;
            emit(out.as_deref(), &json_bytes(&cal))
        }
        Command::Replicate {
            study,
            out,
            seed,
            calibration,
            policy,
            trials_per_cell,
            boost,
            habituation,
            payoffs,
        } => {
            let study = Study::from(study);
            let mut opts = ReplicateOptions::new(seed);
            opts.trials_per_cell = trials_per_cell;
            opts.payoffs = load_payoffs(&payoffs)?;
            if let Some(path) = calibration {
                let text = read(&path)?;
                opts.calibration = Some(
                    serde_json::from_str(&text)
                        .map_err(|e| Failure::user("ConfigError", format!("{}: {e}", path.display())))?,
                );
            }
            if let Some(p) = policy {
                opts.plan = Some(parse_policy(&p, seed)?);
            }
            if let Some(b) = boost {
                opts.alerts.boosts = ModalityBoosts::uniform(b);
            }
            if let Some(h) = habituation {
                opts.alerts.habituation = h;
            }
            let report = replicate(study, &opts).map_err(Failure::from_sim)?;
            let mut buf = Vec::new();
            report
                .write_csv(&mut buf)
                .map_err(|e| Failure::internal("IoError", e.to_string()))?;
            emit(Some(&out.join(format!("{}.csv", study.as_str()))), &buf)?;
            emit(Some(&out.join(format!("{}.json", study.as_str()))), &json_bytes(&report))?;
            let mut text = String::new();
            for g in &report.groups {
                let f = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.4}"));
                text += &format!(
                    "{} {}: gap_ratio {} aag/opg {} correct_ratio {:.4}",
                    study.as_str(),
                    g.group,
                    f(g.mean_gap_ratio),
                    f(g.aag_opg_ratio),
                    g.correct_ratio
                );
                if let Some(c) = g.correlation {
                    text += &format!(" pearson {:.4} spearman {:.4}", c.pearson, c.spearman);
                }
                text.push('\n');
            }
            emit(None, text.as_bytes())
        }
        Command::Serve { addr, data } => {
            tracing_subscriber::fmt().init();
            let store = SessionStore::new(data, Arc::new(MonotonicClock::default())).map_err(Failure::from_service)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::internal("RuntimeError", e.to_string()))?;
            rt.block_on(takeover_service::serve(addr, Arc::new(store)))
                .map_err(|e| Failure::user("IoError", format!("{addr}: {e}")))
        }
        Command::Report { log, out } => {
            let session = replay_file(&log).map_err(Failure::from_service)?;
            emit(out.as_deref(), &json_bytes(&session.summary()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}

