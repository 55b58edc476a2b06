use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use medmod::io;
use medmod::link::ber_sweep;
use medmod::par;
use medmod::scenarios::{self, RawRun, ScenarioConfig, ScenarioKind, Simulation};
use medmod::transport::Particle;

#[derive(Parser)]
#[command(name = "medmod", version, about = "Media-modulation molecular communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML).
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MEDMOD_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace, metrics and manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write a particle snapshot every N steps (0 = never).
        #[arg(long, default_value_t = 0)]
        snapshot_every: u64,
    },
    /// Run the [sweep] section of a config and write ber.csv.
    BerSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Run a testbed replay and write its trace and decode report.
    ReplayTestbed {
        #[command(flatten)]
        common: Common,
    },
    /// Decode an existing trace CSV with the detector of a config.
    Analyze {
        /// Trace CSV written by `simulate`.
        trace: PathBuf,
        /// Config the trace was produced with.
        #[arg(long)]
        config: PathBuf,
        /// Seed the bit sequence was drawn with, if not the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Serialize)]
struct Manifest {
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    seed: u64,
    started_unix_s: f64,
    finished_unix_s: f64,
    files: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn finish(out: &Path, command: &'static str, cfg: &ScenarioConfig, started: f64, mut files: Vec<String>) -> Result<()> {
    files.push("manifest.json".into());
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: Sha256::digest(cfg.to_toml_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
        seed: cfg.seed,
        started_unix_s: started,
        finished_unix_s: now(),
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn simulate(common: &Common, snapshot_every: u64) -> Result<()> {
    let cfg = load(common)?;
    fs::create_dir_all(&common.out)?;
    let started = now();
    let mut files = vec!["config.toml".to_string(), "trace.csv".into(), "metrics.json".into()];
    fs::write(common.out.join("config.toml"), cfg.to_toml_string())?;

    let run = par::with_threads(common.threads, || -> Result<_> {
        if snapshot_every == 0 {
            return Ok(scenarios::run_scenario(&cfg, None)?);
        }
        let f = fs::File::create(common.out.join("snapshots.csv"))?;
        let mut w = io::snapshot_writer(BufWriter::new(f));
        let mut failure = None;
        let mut obs = |step: u64, _t: f64, p: &[Particle]| {
            if step.is_multiple_of(snapshot_every) && failure.is_none() {
                failure = io::write_snapshot(&mut w, step, p).err();
            }
        };
        let run = scenarios::run_scenario(&cfg, Some(&mut obs))?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        w.flush()?;
        Ok(run)
    })?;
    if snapshot_every > 0 {
        files.push("snapshots.csv".into());
    }
    io::write_trace_file(&common.out.join("trace.csv"), &run.trace)?;
    write_json(&common.out.join("metrics.json"), &run)?;
    log::info!("{} bits, {} errors, {} false peaks", run.bits.len(), run.bit_errors, run.isi.false_peaks);
    finish(&common.out, "simulate", &cfg, started, files)
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    if cfg.sweep.is_none() {
        bail!("{} has no [sweep] section", common.config.display());
    }
    fs::create_dir_all(&common.out)?;
    let started = now();
    let rows = par::with_threads(common.threads, || ber_sweep(&cfg))?;
    let f = fs::File::create(common.out.join("ber.csv"))?;
    io::write_sweep(BufWriter::new(f), &rows)?;
    finish(&common.out, "ber-sweep", &cfg, started, vec!["ber.csv".into()])
}

#[derive(Serialize)]
struct ReplayReport<'a> {
    loop_time_s: f64,
    bits: &'a [u8],
    decoded: &'a [u8],
    bit_errors: usize,
    threshold: f64,
    echo: Option<&'a scenarios::EchoFit>,
}

fn replay(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    if cfg.kind != ScenarioKind::TestbedReplay {
        bail!("replay-testbed needs kind = \"testbed_replay\", got {:?}", cfg.kind);
    }
    fs::create_dir_all(&common.out)?;
    let started = now();
    let report = par::with_threads(common.threads, || scenarios::run_testbed_replay(&cfg))?;
    io::write_trace_file(&common.out.join("trace.csv"), &report.run.trace)?;
    let summary = ReplayReport {
        loop_time_s: report.loop_time_s,
        bits: &report.run.bits,
        decoded: &report.run.decoded,
        bit_errors: report.run.bit_errors,
        threshold: report.run.detector.threshold,
        echo: report.echo.as_ref(),
    };
    write_json(&common.out.join("report.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    finish(&common.out, "replay-testbed", &cfg, started, vec!["trace.csv".into(), "report.json".into()])
}

fn analyze(trace: &Path, config: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let trace = io::read_trace_file(trace)?;
    let sim = Simulation::new(&cfg, cfg.seed)?;
    let frame = medmod::link::OokFrame::new(sim.bits(), cfg.frame.symbol_duration_s, cfg.frame.tx_on_time_s)?;
    let run = scenarios::analyze(&cfg, RawRun { frame, trace, population: Vec::new(), released: 0 })?;
    println!("{}", serde_json::to_string_pretty(&run)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate { common, snapshot_every } => simulate(&common, snapshot_every),
        Command::BerSweep { common } => sweep(&common),
        Command::ReplayTestbed { common } => replay(&common),
        Command::Analyze { trace, config, seed } => analyze(&trace, &config, seed),
    }
}
