use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use room_awareness::confidence::{pose_confidences, ConfidenceHistory};
use room_awareness::harness::{parse_log, run_experiment, train_model, write_log, Config};
use room_awareness::orientation_filter::OrientationParticle;
use room_awareness::sim::{panorama_ppm, synthesize_background, InitKind, ScenarioKind};
use room_awareness::{Error, Result};

#[derive(Parser)]
#[command(name = "room-awareness", version, about = "Room-awareness trials on a symmetric field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    HeadOnly,
    PenaltyWalk,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::HeadOnly => ScenarioKind::HeadOnly,
            ScenarioArg::PenaltyWalk => ScenarioKind::PenaltyWalk,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured trial batches and write report.csv plus per-trial logs.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        /// Include orientation particles in every log frame.
        #[arg(long)]
        verbose: bool,
    },
    /// Train a background model at the start pose and write a .bgm snapshot.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        seconds: f64,
        /// Also write the wall texture as a PPM panorama.
        #[arg(long)]
        panorama: Option<PathBuf>,
    },
    /// Re-derive confidences from a verbose trial log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, seed, trials, scenario, verbose } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.experiment_seed = s;
            }
            if let Some(n) = trials {
                cfg.experiment_trials = n;
            }
            if let Some(s) = scenario {
                cfg.experiment_scenarios = vec![s.into()];
            }
            cfg.validate()?;
            let logs = out.join("logs");
            fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
            let exp = run_experiment(&cfg, verbose)?;
            for t in &exp.trials {
                write(&logs.join(t.log_name()), write_log(&t.trial.log))?;
            }
            write(&out.join("report.csv"), exp.report.to_csv())?;
            for row in &exp.report.rows {
                let time = row.mean_time.map_or_else(|| "> cap".to_string(), |t| format!("{t:.1} s"));
                println!(
                    "{:<13} {:<9} trials {:>3}  flip {:>5.1}%  purge {:>5.1}%  failed {:>5.1}%  correct {}/{}  mean time {}",
                    row.scenario.as_str(),
                    row.init.as_str(),
                    row.trials,
                    row.flip_pct,
                    row.purge_pct,
                    row.failed_pct,
                    row.correct,
                    row.signalled(),
                    time,
                );
            }
            Ok(())
        }
        Command::Train { config, out, seconds, panorama } => {
            let cfg = load_config(config.as_deref())?;
            if !(seconds >= 0.0 && seconds.is_finite()) {
                return Err(Error::InvalidParameter("--seconds must be non-negative".into()));
            }
            let seed = cfg.experiment_seed;
            let world = cfg.world(seed);
            let texture = synthesize_background(&world.texture, &world.cylinder, seed);
            let kind = cfg.experiment_scenarios.first().copied().unwrap_or(ScenarioKind::HeadOnly);
            let scenario = cfg.scenario(kind, InitKind::CorrectPose, false);
            let frames = (seconds * cfg.sim_frame_rate).round() as u64;
            let model = train_model(&cfg, &world, &texture, &scenario, frames)?;
            write(&out, model.snapshot())?;
            if let Some(p) = panorama {
                write(&p, panorama_ppm(&texture, &world.cylinder, 720, 96))?;
            }
            println!("{} of {} tiles trained", model.seen_count(), model.grid().tile_count());
            Ok(())
        }
        Command::Replay { log, config } => {
            let cfg = load_config(config.as_deref())?;
            let text = fs::read_to_string(&log).map_err(|e| Error::io(&log, e))?;
            let records = parse_log(&text)?;
            let mut history = ConfidenceHistory::new(cfg.confidence_window)?;
            let mut mismatches = 0usize;
            println!("frame\ttime\tcurrent\treflected\tsmoothed_current\tsmoothed_reflected\tcommand");
            for r in &records {
                let (raw, smoothed) = match &r.particles {
                    Some(ps) => {
                        let ps: Vec<_> = ps
                            .iter()
                            .map(|&(azimuth, weight)| OrientationParticle { azimuth, weight })
                            .collect();
                        let raw = pose_confidences(&ps, r.believed_view_center, cfg.confidence_fov());
                        if r.command == Some(room_awareness::controller::CommandKind::ResetOrientation) {
                            history.clear();
                        }
                        (raw, history.smooth(raw))
                    }
                    None => (r.confidence, r.smoothed),
                };
                if (raw.current - r.confidence.current).abs() > 1e-12
                    || (raw.reflected - r.confidence.reflected).abs() > 1e-12
                {
                    mismatches += 1;
                }
                println!(
                    "{}\t{:.1}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{}",
                    r.frame,
                    r.time,
                    raw.current,
                    raw.reflected,
                    smoothed.current,
                    smoothed.reflected,
                    r.command.map_or("", |c| c.as_str()),
                );
            }
            if records.iter().all(|r| r.particles.is_none()) {
                eprintln!("log has no particle dumps; showing logged confidences");
            } else {
                eprintln!("{mismatches} frames differ from the logged confidences");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
