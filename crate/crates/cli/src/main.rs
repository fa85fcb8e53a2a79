use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ests_core::es_rapp::NotificationMode;
use ests_core::traffic::{synth_diurnal, DiurnalConfig};
use ests_core::{replay, run, EventLog, MetricsReport, Scenario, Topology};

#[derive(Parser)]
#[command(name = "ests", version, about = "Energy-saving / traffic-steering RAN simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write events.jsonl, audit.jsonl and metrics.json.
    Run(RunArgs),
    /// Synthesize a diurnal utilization trace as CSV.
    GenTrace(GenTraceArgs),
    /// Generate a multi-carrier topology file.
    GenTopology(GenTopologyArgs),
    /// Recompute metrics from an event log.
    Replay {
        log: PathBuf,
        /// Write metrics here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a metrics file as a summary, CSV or plot data.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    A1,
    Ccc,
}

impl From<ModeArg> for NotificationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::A1 => NotificationMode::A1,
            ModeArg::Ccc => NotificationMode::Ccc,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenTraceArgs {
    /// Diurnal generator config (JSON).
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Topology whose cells get a series; defaults to 13 sites / 41 sectors / 5 bands.
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Args)]
struct GenTopologyArgs {
    #[arg(long, default_value_t = 13)]
    sites: u32,
    #[arg(long, default_value_t = 41)]
    sectors: u32,
    #[arg(long, default_value_t = 5)]
    bands: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    metrics: PathBuf,
    #[arg(long, conflicts_with = "plot_data")]
    csv: bool,
    #[arg(long)]
    plot_data: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => cmd_run(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::GenTopology(args) => {
            let topo = Topology::generate(args.sites, args.sectors, args.bands)?;
            write_text(&args.out, &topo.to_json_pretty())
        }
        Command::Replay { log, out } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let events = EventLog::read_jsonl(BufReader::new(file))?;
            let metrics = replay(&events)?;
            let text = metrics.to_json_pretty();
            match out {
                Some(path) => write_text(&path, &text),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::Report(args) => cmd_report(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut sc = Scenario::load(&args.scenario)?;
    if let Some(mode) = args.mode {
        sc = sc.with_mode(mode.into());
    }
    if let Some(seed) = args.seed {
        sc = sc.with_seed(seed);
    }
    let out = run(&sc)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut events = BufWriter::new(create(&args.out.join("events.jsonl"))?);
    out.log.write_jsonl(&mut events)?;
    events.flush()?;

    let mut audit = BufWriter::new(create(&args.out.join("audit.jsonl"))?);
    for e in out.log.events() {
        if matches!(e, ests_core::Event::Audit(_)) {
            serde_json::to_writer(&mut audit, e)?;
            audit.write_all(b"\n")?;
        }
    }
    audit.flush()?;

    write_text(&args.out.join("metrics.json"), &out.metrics.to_json_pretty())?;
    let m = &out.metrics;
    println!(
        "{}: savings {:.2}% accessibility {:.6} handovers {}/{} transitions {}",
        m.scenario,
        m.savings_capacity_pct,
        m.accessibility,
        m.handovers_succeeded,
        m.handovers_attempted,
        m.transitions
    );
    Ok(())
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let cfg: DiurnalConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let topo = match &args.topology {
        Some(p) => Topology::load(p)?,
        None => Topology::generate(13, 41, 5)?,
    };
    let trace = synth_diurnal(&topo, &cfg)?;
    trace.write_csv(&args.out)?;
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.metrics).with_context(|| format!("reading {}", args.metrics.display()))?;
    let m = MetricsReport::from_json(&text).with_context(|| format!("parsing {}", args.metrics.display()))?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    if args.csv {
        m.write_summary_csv(&mut w)?;
    } else if args.plot_data {
        m.write_plot_data(&mut w)?;
    } else {
        writeln!(w, "scenario            {}", m.scenario)?;
        writeln!(w, "mode                {}", m.mode)?;
        writeln!(w, "capacity savings    {:.2} %", m.savings_capacity_pct)?;
        writeln!(w, "energy (actual)     {:.1} J", m.energy_actual_j)?;
        writeln!(w, "energy (baseline)   {:.1} J", m.energy_baseline_j)?;
        writeln!(
            w,
            "accessibility       {:.6} ({} of {})",
            m.accessibility, m.admitted, m.attempts
        )?;
        writeln!(
            w,
            "handovers           {} of {} succeeded",
            m.handovers_succeeded, m.handovers_attempted
        )?;
        writeln!(w, "on/off transitions  {}", m.transitions)?;
        writeln!(w, "drain timeouts      {}", m.drain_timeouts)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}
