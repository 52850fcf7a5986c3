//! `parkour` subcommands. Each returns the process exit code.

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parkour_core::bench::bench;
use parkour_core::mppc::mppc_step;
use parkour_core::planner::PlanError;
use parkour_core::scenario::{bundled, parse_scenario, Scenario, BUNDLED};
use parkour_core::sim::{run_episode, EpisodeLog};
use parkour_core::trace::export_trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    EpisodeFailed = 1,
    InvalidInput = 2,
    Infeasible = 3,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug, Parser)]
#[command(name = "parkour", version, about = "Plan and simulate a hopping leg over an obstacle course")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Plan one receding-horizon step from the scenario start.
    Plan {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        json: bool,
        /// Plan from this foot position instead of `x_s`.
        #[arg(long)]
        from: Option<f64>,
    },
    /// Simulate a whole episode.
    Run {
        scenario: String,
        /// Write the episode as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write an SVG, CSV or JSON trace; the format follows the extension.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Time the planner over repeated episodes.
    Bench {
        scenario: String,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        #[arg(long)]
        json: bool,
    },
    /// Export a JSON-lines episode log as svg, csv or json.
    Trace {
        log: PathBuf,
        #[arg(long, default_value = "svg")]
        format: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the episode live behind a websocket and a viewer page.
    Serve {
        scenario: String,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        paused: bool,
    },
    /// List bundled scenarios, or print one.
    Scenarios { name: Option<String> },
}

struct Failure {
    exit: Exit,
    message: String,
}

impl Failure {
    fn input(message: impl fmt::Display) -> Self {
        Self {
            exit: Exit::InvalidInput,
            message: message.to_string(),
        }
    }
}

type CmdResult = Result<Exit, Failure>;

/// A file path, or a bundled scenario name when no such file exists.
pub fn load_scenario(arg: &str) -> Result<Scenario, String> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?
    } else if let Some(text) = bundled(arg) {
        text.to_owned()
    } else {
        return Err(format!(
            "{arg}: no such file or bundled scenario (bundled: {})",
            BUNDLED.join(", ")
        ));
    };
    parse_scenario(&text).map_err(|e| format!("{arg}: {e}"))
}

fn scenario(arg: &str) -> Result<Scenario, Failure> {
    load_scenario(arg).map_err(Failure::input)
}

/// Write to stdout. A closed pipe (`| head`) is not an error.
fn out(text: impl AsRef<str>) {
    let _ = std::io::stdout().lock().write_all(text.as_ref().as_bytes());
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn plan(arg: &str, json: bool, from: Option<f64>) -> CmdResult {
    let s = scenario(arg)?;
    let x_s = from.unwrap_or(s.x_s);
    let geometry = s.leg.geometry().map_err(Failure::input)?;
    match mppc_step(&s.parkour, &geometry, x_s, &s.mppc_config(), &s.solver) {
        Ok(r) => {
            if json {
                out(serde_json::to_string_pretty(&r).expect("result serializes") + "\n");
            } else {
                out(format!(
                    "target {:.4} m, {} jumps, flight time {:.4} s, loop {:.2} ms\n",
                    r.target_used,
                    r.horizon_used,
                    r.full_plan.total_flight_time,
                    r.loop_time.as_secs_f64() * 1e3
                ));
                out(format!("{:>3} {:>8} {:>8} {:>9} {:>9} {:>9}\n", "n", "t [s]", "v [m/s]", "θ [deg]", "x [m]", "z [m]"));
                for (i, j) in r.full_plan.jumps.iter().enumerate() {
                    out(format!(
                        "{:>3} {:>8.4} {:>8.4} {:>9.3} {:>9.4} {:>9.4}\n",
                        i + 1,
                        j.t,
                        j.v,
                        j.theta.to_degrees(),
                        j.landing[0],
                        j.landing[1]
                    ));
                }
            }
            Ok(Exit::Success)
        }
        Err(PlanError::InvalidInput(m)) => Err(Failure::input(m)),
        Err(e) => Err(Failure {
            exit: Exit::Infeasible,
            message: e.to_string(),
        }),
    }
}

fn summary(log: &EpisodeLog) -> String {
    let mut out = format!(
        "{}: {} after {} jumps at t={:.3} s ({} hard failures, {} margin violations)\n",
        log.meta.name,
        log.outcome.map_or("unfinished".to_string(), |o| format!("{o:?}")),
        log.jumps.len(),
        log.end_time,
        log.hard_failures(),
        log.margin_violations()
    );
    for j in &log.jumps {
        let landing = j.landing.map(|l| format!("{:.4}", l[0])).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "  jump {:>2}: target {:.3}, N={}, land {landing}, loop {:.2} ms\n",
            j.number,
            j.plan.target,
            j.plan.horizon,
            j.plan.loop_time * 1e3
        ));
    }
    out
}

fn run(arg: &str, log_path: Option<&Path>, seed: Option<u64>, trace: Option<&Path>, json: bool) -> CmdResult {
    let mut s = scenario(arg)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    let log = run_episode(&s).map_err(Failure::input)?;
    if let Some(path) = log_path {
        let file = fs::File::create(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        log.write_jsonl(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = trace {
        let format = path.extension().and_then(|e| e.to_str()).unwrap_or("svg");
        let text = export_trace(&log, format).map_err(Failure::input)?;
        write_file(path, &text)?;
    }
    if json {
        let jumps: Vec<_> = log
            .jumps
            .iter()
            .map(|j| serde_json::json!({"jump": j.number, "landing": j.landing, "plan": j.plan}))
            .collect();
        let report = serde_json::json!({
            "name": log.meta.name,
            "outcome": log.outcome,
            "end_time": log.end_time,
            "hard_failures": log.hard_failures(),
            "margin_violations": log.margin_violations(),
            "jumps": jumps,
        });
        out(serde_json::to_string_pretty(&report).expect("summary serializes") + "\n");
    } else {
        out(summary(&log));
    }
    Ok(if log.succeeded() {
        Exit::Success
    } else {
        Exit::EpisodeFailed
    })
}

fn bench_cmd(arg: &str, reps: u64, json: bool) -> CmdResult {
    let s = scenario(arg)?;
    match bench(&s, reps as usize) {
        Ok(r) => {
            if json {
                out(serde_json::to_string_pretty(&r).expect("report serializes") + "\n");
            } else {
                out(r.to_table());
                if let Some(m) = r.median_loop_time() {
                    out(format!("median loop time {:.3} ms over {} repetitions\n", m * 1e3, r.repetitions));
                }
            }
            Ok(Exit::Success)
        }
        Err(parkour_core::bench::BenchError::Scenario(e)) => Err(Failure::input(e)),
        Err(e) => Err(Failure {
            exit: Exit::EpisodeFailed,
            message: e.to_string(),
        }),
    }
}

fn trace_cmd(log_path: &Path, format: &str, output: Option<&Path>) -> CmdResult {
    let file = fs::File::open(log_path).map_err(|e| Failure::input(format!("{}: {e}", log_path.display())))?;
    let log = EpisodeLog::read_jsonl(BufReader::new(file))
        .map_err(|e| Failure::input(format!("{}: {e}", log_path.display())))?;
    let text = export_trace(&log, format).map_err(Failure::input)?;
    match output {
        Some(path) => write_file(path, &text)?,
        None => {
            out(&text);
        }
    }
    Ok(Exit::Success)
}

fn serve(arg: &str, port: Option<u16>, speed: f64, paused: bool) -> CmdResult {
    let s = scenario(arg)?;
    if !(speed > 0.0 && speed <= parkour_live::session::MAX_SPEED) {
        return Err(Failure::input(format!(
            "--speed must be in (0, {}]",
            parkour_live::session::MAX_SPEED
        )));
    }
    let addr = parkour_live::bind_addr(port).map_err(Failure::input)?;
    let config = parkour_live::LiveConfig {
        speed,
        start_paused: paused,
        ..Default::default()
    };
    let (handle, _sim) = parkour_live::spawn(s, config).map_err(Failure::input)?;
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::input)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::input(format!("bind {addr}: {e}")))?;
        eprintln!("serving on http://{addr}/ (websocket at /ws)");
        parkour_live::serve(listener, handle).await.map_err(Failure::input)?;
        Ok(Exit::Success)
    })
}

fn scenarios(name: Option<&str>) -> CmdResult {
    match name {
        None => {
            for n in BUNDLED {
                out(format!("{n}\n"));
            }
            Ok(Exit::Success)
        }
        Some(n) => match bundled(n) {
            Some(text) => {
                out(text);
                Ok(Exit::Success)
            }
            None => Err(Failure::input(format!("no bundled scenario named {n}"))),
        },
    }
}

pub fn execute(cli: Cli) -> Exit {
    let result = match cli.command {
        Cmd::Plan { scenario, json, from } => plan(&scenario, json, from),
        Cmd::Run {
            scenario,
            log,
            seed,
            trace,
            json,
        } => run(&scenario, log.as_deref(), seed, trace.as_deref(), json),
        Cmd::Bench { scenario, reps, json } => bench_cmd(&scenario, reps, json),
        Cmd::Trace { log, format, output } => trace_cmd(&log, &format, output.as_deref()),
        Cmd::Serve {
            scenario,
            port,
            speed,
            paused,
        } => serve(&scenario, port, speed, paused),
        Cmd::Scenarios { name } => scenarios(name.as_deref()),
    };
    match result {
        Ok(exit) => exit,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.exit
        }
    }
}
