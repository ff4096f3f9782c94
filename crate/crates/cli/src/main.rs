use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use causal_detector::config::KeyValue;
use causal_detector::encoder::{EncoderLayout, SpikeClock, DEFAULT_CALIBRATION_SEED, DEFAULT_CALIBRATION_STEPS};
use causal_detector::error::{Error, Result};
use causal_detector::ga::{run_ga_with, GaConfig};
use causal_detector::neuron::Detector;
use causal_detector::plasticity::PlasticityConfig;
use causal_detector::pong::RacketParams;
use causal_detector::record::{record_pong_with, EpisodeRecord};
use causal_detector::session::{evaluate_frozen, train, write_resources_csv, TrainOptions, STEPS_PER_SECOND};
use causal_detector::synthetic::{generate, SyntheticConfig};

const CSV_HELP: &str = "\
CSV outputs:
  train series     window_start_s,window_end_s,fires,rewards,firing_hz,stability,abs_dw
                   (one row per report window; abs_dw is the sum of |dw| in the window)
  train resources  section,index,channel,resource,weight
                   (sections: ball_x, ball_y, ball_vx, ball_vy, racket_y, close_zone)
  ga history       generation,best_r,mean_r,d_h_bar,w_min,w_max,d_s
  export           step,channels,event
                   (rows only for steps with spikes or an event; channels
                   space-separated; event is reward, punishment or empty)

Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file format error.";

#[derive(Parser)]
#[command(
    name = "causal-detector",
    version,
    about = "Single-neuron causal detector: record episodes, train, evaluate and search parameters",
    after_help = CSV_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record a pong episode with a chaotic racket
    Record(RecordArgs),
    /// Replay a record through a fresh detector and write the learned state
    Train(TrainArgs),
    /// Score a saved detector with plasticity frozen
    Eval(EvalArgs),
    /// Genetic search over the plasticity constants
    Ga(GaArgs),
    /// Write a synthetic record with a known cause
    Synthetic(SyntheticArgs),
    /// Dump a record as CSV
    Export(ExportArgs),
    /// Fit velocity bin boundaries from a seeded pong run
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockKind {
    Shared,
    Bernoulli,
}

#[derive(Args)]
struct RecordArgs {
    /// Episode length in seconds
    #[arg(long, default_value_t = 2000)]
    duration: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output record file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Racket settings (racket_speed, policy_period)
    #[arg(long)]
    params: Option<PathBuf>,
    /// Velocity bin file; defaults to the bundled calibration
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClockKind::Shared)]
    clock: ClockKind,
    /// Print the racket settings and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Record file
    record: Option<PathBuf>,
    /// Plasticity constants (d_bar, w_min, w_max, d_s, t_p)
    #[arg(long)]
    params: Option<PathBuf>,
    /// Snapshot output; series and resource CSVs are written next to it
    /// as <out>.series.csv and <out>.resources.csv
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scoring window START:END in seconds; defaults to the last 600 s
    #[arg(long)]
    window: Option<String>,
    /// Freeze plasticity from the start of the scoring window
    #[arg(long)]
    freeze_window: bool,
    /// Report window length in seconds
    #[arg(long, default_value_t = 10)]
    report_every: u64,
    /// Print the plasticity defaults and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Record file
    record: PathBuf,
    /// Detector snapshot
    #[arg(long)]
    snapshot: PathBuf,
    /// Scoring window START:END in seconds; defaults to the last 600 s
    #[arg(long)]
    window: Option<String>,
}

#[derive(Args)]
struct GaArgs {
    /// Record file
    record: Option<PathBuf>,
    /// GA settings
    #[arg(long)]
    params: Option<PathBuf>,
    /// Start from the small desk-scale settings instead of the full ones
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// History CSV output; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the GA settings and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct SyntheticArgs {
    /// Generator settings
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Length in seconds
    #[arg(long)]
    duration: Option<u64>,
    /// Output record file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the generator settings and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Record file
    record: PathBuf,
    /// CSV output; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_SEED)]
    seed: u64,
    /// Calibration run length in steps
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_STEPS)]
    steps: u64,
    /// Racket settings used during calibration
    #[arg(long)]
    params: Option<PathBuf>,
    /// Layout output; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Format(_) => 3,
        _ => 2,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Record(a) => cmd_record(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ga(a) => cmd_ga(a),
        Command::Synthetic(a) => cmd_synthetic(a),
        Command::Export(a) => cmd_export(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    }
}

fn load_config<T: KeyValue>(base: T, path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => base.apply_text(&fs::read_to_string(p)?),
        None => {
            base.check()?;
            Ok(base)
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("missing {what}")))
}

fn secs_to_steps(s: u64) -> Result<u64> {
    s.checked_mul(STEPS_PER_SECOND)
        .ok_or_else(|| Error::Config(format!("{s} s is too long")))
}

/// `START:END` in seconds, or the last 600 s (whole record if shorter).
fn parse_window(text: Option<&str>, duration_steps: u64) -> Result<(u64, u64)> {
    let (start, end) = match text {
        None => (duration_steps.saturating_sub(600 * STEPS_PER_SECOND), duration_steps),
        Some(s) => {
            let bad = || Error::Config(format!("window `{s}` is not START:END in seconds"));
            let (a, b) = s.split_once(':').ok_or_else(bad)?;
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if !(a >= 0.0 && b > a && b.is_finite()) {
                return Err(bad());
            }
            let to_steps = |x: f64| (x * STEPS_PER_SECOND as f64).round() as u64;
            (to_steps(a), to_steps(b))
        }
    };
    if end > duration_steps {
        return Err(Error::Config(format!(
            "window ends at step {end} but the record has {duration_steps} steps"
        )));
    }
    Ok((start, end))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_record(a: RecordArgs) -> Result<()> {
    let racket = load_config(RacketParams::default(), a.params.as_deref())?;
    if a.dump_config {
        print!("{}", racket.dump());
        return Ok(());
    }
    if a.duration == 0 {
        return Err(Error::Config("duration must be positive".into()));
    }
    let out = required(&a.out, "--out")?;
    let layout = match &a.layout {
        Some(p) => EncoderLayout::parse(&fs::read_to_string(p)?)?,
        None => EncoderLayout::default(),
    };
    let clock = match a.clock {
        ClockKind::Shared => SpikeClock::Shared,
        ClockKind::Bernoulli => SpikeClock::bernoulli(a.seed),
    };
    let rec = record_pong_with(secs_to_steps(a.duration)?, a.seed, racket, layout, clock);
    rec.save(out)?;
    println!(
        "steps {} rewards {} punishments {}",
        rec.duration_steps(),
        rec.reward_steps().len(),
        rec.punishment_steps().len()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(PlasticityConfig::pong_optimum(), a.params.as_deref())?;
    if a.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let rec = EpisodeRecord::load(required(&a.record, "record path")?)?;
    let out = required(&a.out, "--out")?;
    if a.report_every == 0 {
        return Err(Error::Config("report window must be positive".into()));
    }
    let window = parse_window(a.window.as_deref(), rec.duration_steps())?;
    let mut det = Detector::new(rec.channels(), cfg)?;
    let opts = TrainOptions {
        report_window: secs_to_steps(a.report_every)?,
        eval_window: Some(window),
        freeze_from: a.freeze_window.then_some(window.0),
        stop_at: None,
    };
    let report = train(&mut det, &rec, &opts)?;

    let mut snap = create(out)?;
    det.write_snapshot(&mut snap)?;
    snap.flush()?;
    let mut series = create(&with_suffix(out, ".series.csv"))?;
    report.write_series_csv(&mut series)?;
    series.flush()?;
    let mut res = create(&with_suffix(out, ".resources.csv"))?;
    write_resources_csv(&det, &mut res)?;
    res.flush()?;

    println!(
        "fires {} rewards {} stability {}",
        report.fire_count(),
        report.reward_count,
        det.stability()
    );
    match report.r_eval {
        Some(r) => println!("R {r} over steps [{}, {})", window.0, window.1),
        None => println!("R undefined: no target events in steps [{}, {})", window.0, window.1),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let rec = EpisodeRecord::load(&a.record)?;
    let det = Detector::read_snapshot(File::open(&a.snapshot)?)?;
    let (start, end) = parse_window(a.window.as_deref(), rec.duration_steps())?;
    let r = evaluate_frozen(&det, &rec, start, end)?;
    println!("R {r} over steps [{start}, {end})");
    Ok(())
}

fn cmd_ga(a: GaArgs) -> Result<()> {
    let base = if a.desk { GaConfig::desk() } else { GaConfig::default() };
    let mut cfg = load_config(base, a.params.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let rec = EpisodeRecord::load(required(&a.record, "record path")?)?;
    let outcome = run_ga_with(&cfg, &rec, |g| {
        eprintln!(
            "generation {} best {} mean {}",
            g.generation, g.best_fitness, g.mean_fitness
        );
    })?;
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            outcome.write_history_csv(&mut w)?;
            w.flush()?;
        }
        None => outcome.write_history_csv(io::stdout().lock())?,
    }
    let b = outcome.best;
    eprintln!(
        "best R {} d_bar {} w_min {} w_max {} d_s {}",
        outcome.best_fitness, b.d_h_bar, -b.neg_w_min, b.w_max, b.d_s
    );
    Ok(())
}

fn cmd_synthetic(a: SyntheticArgs) -> Result<()> {
    let mut cfg = load_config(SyntheticConfig::default(), a.params.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration_steps = secs_to_steps(d)?;
    }
    cfg.validate()?;
    if a.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let out = required(&a.out, "--out")?;
    let ep = generate(&cfg)?;
    ep.record.save(out)?;
    println!(
        "steps {} causes {} rewards {}",
        ep.record.duration_steps(),
        ep.cause_steps.len(),
        ep.record.reward_steps().len()
    );
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let rec = EpisodeRecord::load(&a.record)?;
    match &a.out {
        Some(p) => rec.write_csv(File::create(p)?),
        None => rec.write_csv(io::stdout().lock()),
    }
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let racket = load_config(RacketParams::default(), a.params.as_deref())?;
    let layout = EncoderLayout::calibrate_with(a.seed, a.steps, racket)?;
    match &a.out {
        Some(p) => fs::write(p, layout.to_text())?,
        None => print!("{}", layout.to_text()),
    }
    Ok(())
}
