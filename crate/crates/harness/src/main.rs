use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use follow_core::follower::{RunRecord, Variant};
use follow_harness::scenario::{builtin, ConfigError, ScenarioConfig, BUILTIN_NAMES, SUITE};
use follow_harness::trace::{read_trace_file, write_trace_file};
use follow_harness::{compute_metrics, render_svg, run_ablation_suite, run_scenario, AblationTable};

#[derive(Parser)]
#[command(name = "follow", about = "Leader-following simulation harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write a trace per episode.
    Run {
        /// Scenario file, or the name of a builtin scenario.
        #[arg(long)]
        scenario: String,
        /// full, no_dfb, no_graph or pursuit; defaults to the scenario's variant.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Run only the first N scripts.
        #[arg(long)]
        scripts: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Leave per-plan geometry out of the traces.
        #[arg(long)]
        no_plans: bool,
    },
    /// Score traces: a file or a directory of `.jsonl` files.
    Metrics {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Draw one episode of a trace as SVG.
    Render {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        /// Tick whose plan is drawn; defaults to the last planned tick.
        #[arg(long)]
        tick: Option<usize>,
    },
    /// Compare every variant over a set of scenarios.
    Ablation {
        /// Scenario files or builtin names; defaults to the four-scenario suite.
        #[arg(long)]
        scenario: Vec<String>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List builtin scenarios, or write them as TOML into a directory.
    Scenarios {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant `{s}`"))
}

enum Failure {
    Config(ConfigError),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOLLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            variant,
            seed,
            repeats,
            scripts,
            out,
            no_plans,
        } => {
            let mut cfg = ScenarioConfig::load(&scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.seeds.clear();
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            if let Some(n) = scripts {
                cfg.scripts.truncate(n);
            }
            cfg.follower.record_plans = !no_plans;
            let variant = variant.unwrap_or(cfg.variant);
            let records = run_scenario(&cfg, variant)?;
            std::fs::create_dir_all(&out).map_err(other)?;
            for r in &records {
                let name = format!("{}-{}-s{:02}-r{:02}.jsonl", r.scenario, variant.name(), r.script, r.repeat);
                write_trace_file(&out.join(name), std::slice::from_ref(r)).map_err(other)?;
            }
            print_summary(&records);
            Ok(())
        }
        Command::Metrics { traces } => {
            let records = load_traces(&traces)?;
            let mut variants: Vec<Variant> = records.iter().map(|r| r.variant).collect();
            variants.sort_by_key(|v| Variant::ALL.iter().position(|a| a == v));
            variants.dedup();
            let table = AblationTable {
                scenarios: Vec::new(),
                rows: variants
                    .into_iter()
                    .filter_map(|v| {
                        let subset: Vec<RunRecord> = records.iter().filter(|r| r.variant == v).cloned().collect();
                        compute_metrics(&subset).map(|m| (v, m))
                    })
                    .collect(),
            };
            print!("{}", table.render());
            Ok(())
        }
        Command::Render {
            trace,
            out,
            episode,
            tick,
        } => {
            let records = read_trace_file(&trace).map_err(other)?;
            let rec = records
                .get(episode)
                .ok_or_else(|| Failure::Other(format!("trace has {} episodes", records.len())))?;
            std::fs::write(&out, render_svg(rec, tick)).map_err(other)?;
            Ok(())
        }
        Command::Ablation { scenario, repeats, out } => {
            let names: Vec<String> = if scenario.is_empty() {
                SUITE.iter().map(|s| s.to_string()).collect()
            } else {
                scenario
            };
            let mut cfgs = names
                .iter()
                .map(|n| ScenarioConfig::load(n))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(r) = repeats {
                cfgs.iter_mut().for_each(|c| c.repeats = r);
            }
            let table = run_ablation_suite(&cfgs, &Variant::ALL)?;
            print!("{}", table.render());
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&table).map_err(other)?).map_err(other)?;
            }
            Ok(())
        }
        Command::Scenarios { out } => {
            match out {
                None => {
                    for name in BUILTIN_NAMES {
                        let cfg = builtin(name).expect("builtin exists");
                        println!("{name}: {} scripts x {} repeats", cfg.scripts.len(), cfg.repeats);
                    }
                }
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(other)?;
                    for name in BUILTIN_NAMES {
                        let cfg = builtin(name).expect("builtin exists");
                        std::fs::write(dir.join(format!("{name}.toml")), cfg.to_toml()).map_err(other)?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn load_traces(path: &Path) -> Result<Vec<RunRecord>, Failure> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(other)? {
            let p = entry.map_err(other)?.path();
            if p.extension().is_some_and(|e| e == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut records = Vec::new();
    for f in files {
        records.extend(read_trace_file(&f).map_err(|e| Failure::Other(format!("{}: {e}", f.display())))?);
    }
    if records.is_empty() {
        return Err(Failure::Other("no episodes found".into()));
    }
    Ok(records)
}

fn print_summary(records: &[RunRecord]) {
    if let Some(m) = compute_metrics(records) {
        println!(
            "episodes {}  success {:.3}  loss_ratio {:.3}  collision {:.3}  distance {:.3}",
            m.episodes, m.follow_success_rate, m.avg_leader_loss_ratio, m.collision_rate, m.avg_distance
        );
    }
}
