//! The per-frame pipeline and trial batches.

use std::f64::consts::TAU;

use rayon::prelude::*;

use super::config::Config;
use super::log::FrameRecord;
use super::report::{Classification, ExperimentReport, ReportRow, TrialOutcome};
use crate::angle;
use crate::background_model::{BackgroundModel, GateReason};
use crate::colour::{build_histogram, ColourHistogram};
use crate::confidence::{pose_confidences, ConfidenceHistory};
use crate::controller::{decide, CommandKind, ControllerState};
use crate::error::{Error, Result};
use crate::geometry::{make_tile_grid, view_center_azimuth, visible_tiles, CameraFrame, TileGrid, TileId, ViewPose};
use crate::orientation_filter::OrientationFilter;
use crate::selfloc::{
    best_pose, flip_pose, mcl_step, particles_around, purge_reflection, reset_orientation, Pose2D,
};
use crate::sim::{
    render_perceived_tile, sense_tiles, step_world, substream, synthesize_background, InitKind,
    Scenario, ScenarioKind, Stream, Texture, WorldSpec, WorldState,
};

fn view_of(pose: &Pose2D, head_yaw: f64) -> ViewPose {
    ViewPose::new((pose.x, pose.y), pose.heading, head_yaw, 0.0)
}

fn histograms(cfg: &Config, samples: &[(TileId, Vec<crate::colour::PixelYCrCb>)]) -> Result<Vec<(TileId, ColourHistogram)>> {
    let binning = cfg.binning()?;
    samples
        .iter()
        .map(|(id, px)| Ok((*id, build_histogram(px, &binning)?)))
        .collect()
}

/// Trains a fresh model at the true start pose with the gate open.
///
/// The body turns once on the spot while the head sweeps, so every column
/// of the wall is seen.
pub fn train_model(
    cfg: &Config,
    world: &WorldSpec,
    texture: &Texture,
    scenario: &Scenario,
    frames: u64,
) -> Result<BackgroundModel> {
    let grid = make_tile_grid(world.cylinder)?;
    let mut model = BackgroundModel::new(grid, cfg.model_n_param)?;
    model.set_training_gate(true, GateReason::Manual, 0);
    let start = scenario.start_pose();
    let binning = cfg.binning()?;
    for f in 0..frames {
        let heading = start.heading + TAU * f as f64 / frames as f64;
        let view = ViewPose::new((start.x, start.y), heading, scenario.head_yaw(f), 0.0);
        let frame = CameraFrame::new(&view, &world.camera);
        let mut rng = substream(world.seed, Stream::Warmup, f);
        for t in visible_tiles(&view, &world.camera, &grid, &world.occluders) {
            let px = render_perceived_tile(
                &frame,
                &frame,
                &grid,
                t.id,
                texture,
                texture.noise_std,
                world.samples_per_tile,
                &mut rng,
            );
            model.update_tile(t.id, &build_histogram(&px, &binning)?)?;
        }
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub outcome: TrialOutcome,
    pub log: Vec<FrameRecord>,
    pub model: BackgroundModel,
}

fn gate_reason(open: bool, fall: bool, state: &ControllerState, frame: u64, cfg: &Config) -> GateReason {
    if open {
        GateReason::LowConfidence
    } else if fall || state.pending_reset {
        GateReason::Fall
    } else if state.in_cooldown(frame, &cfg.controller()) {
        GateReason::Penalty
    } else {
        GateReason::LowConfidence
    }
}

/// Runs one trial: warmup training, then the full pipeline until the cap or
/// until the post-signal window after the first flip or purge has elapsed.
pub fn run_trial(cfg: &Config, scenario: &Scenario, seed: u64, verbose: bool) -> Result<Trial> {
    cfg.validate()?;
    scenario.validate()?;
    let world = cfg.world(seed);
    world.validate()?;
    let grid: TileGrid = make_tile_grid(world.cylinder)?;
    let texture = synthesize_background(&world.texture, &world.cylinder, seed);
    let mut model = train_model(cfg, &world, &texture, scenario, cfg.warmup_frames())?;

    let sl_cfg = cfg.selfloc();
    let bc = cfg.controller();
    let fov = cfg.confidence_fov();
    let mut sl_rng = substream(seed, Stream::SelfLoc, 0);
    let mut or_rng = substream(seed, Stream::Orientation, 0);

    let truth0 = scenario.start_pose();
    let believed0 = match scenario.init {
        InitKind::CorrectPose => truth0,
        InitKind::ReflectedPose => truth0.reflect(),
    };
    let mut particles = particles_around(
        believed0,
        sl_cfg.particle_count,
        cfg.selfloc_init_pos_std,
        cfg.selfloc_init_heading_std,
        &mut sl_rng,
    );
    let mut filter = OrientationFilter::new(cfg.filter(), &mut or_rng)?;
    let mut history = ConfidenceHistory::new(cfg.confidence_window)?;
    let mut cstate = ControllerState::default();
    let mut gate = false;
    let mut reason = GateReason::LowConfidence;
    let (mut belief, mut multimodal) = best_pose(&particles, &sl_cfg);
    let mut prev_yaw = scenario.head_yaw(0);
    let mut wstate = WorldState::start(scenario);

    let mut log = Vec::new();
    let mut first_signal = None;
    let mut stop_at = scenario.duration_frames;
    for f in 0..scenario.duration_frames {
        if f >= stop_at {
            break;
        }
        let mut bundle = step_world(scenario, f, &world, &mut wstate, &belief);
        let predicted = belief.compose(bundle.odometry);
        let bview = view_of(&predicted, bundle.head_yaw);
        let prev_vc = view_center_azimuth(&view_of(&belief, prev_yaw), &grid);
        let vc = view_center_azimuth(&bview, &grid);
        let delta = angle::diff(vc, prev_vc);
        let ids: Vec<TileId> = visible_tiles(&bview, &world.camera, &grid, &world.occluders)
            .into_iter()
            .map(|t| t.id)
            .collect();
        sense_tiles(&world, &grid, &texture, &mut bundle, &bview, &ids);
        let perceived = histograms(cfg, &bundle.tile_samples)?;

        model.set_training_gate(gate, reason, f);
        for (id, h) in &perceived {
            model.update_tile(*id, h)?;
        }
        filter.step(delta, &perceived, vc, &model, cfg.colour_sigma0, &mut or_rng);
        let raw = pose_confidences(filter.particles(), vc, fov);
        let smoothed = history.smooth(raw);
        let (decision, next) = decide(smoothed, multimodal, bundle.fall, cstate, &bc);
        cstate = next;
        gate = decision.training_gate;
        reason = gate_reason(gate, bundle.fall, &cstate, f, cfg);

        let command = decision.command.map(|c| c.kind);
        match command {
            Some(CommandKind::FlipPose) => flip_pose(&mut particles),
            Some(CommandKind::PurgeReflection) => {
                match purge_reflection(&mut particles, belief, &sl_cfg, &mut sl_rng) {
                    Ok(_) | Err(Error::PurgeWouldEmpty) => {}
                    Err(e) => return Err(e),
                }
            }
            Some(CommandKind::ResetOrientation) => {
                reset_orientation(&mut particles, &mut sl_rng);
                filter.reinitialize(&mut or_rng);
                history.clear();
            }
            None => {}
        }
        mcl_step(
            &mut particles,
            bundle.odometry,
            &bundle.observations,
            &world.field,
            &sl_cfg,
            &mut sl_rng,
        );
        prev_yaw = bundle.head_yaw;
        (belief, multimodal) = best_pose(&particles, &sl_cfg);

        let time = f as f64 / scenario.frame_rate;
        if first_signal.is_none() {
            if let Some(k @ (CommandKind::FlipPose | CommandKind::PurgeReflection)) = command {
                first_signal = Some((k, time));
                stop_at = stop_at.min(f + 1 + cfg.post_signal_frames());
            }
        }
        log.push(FrameRecord {
            frame: f,
            time,
            truth: bundle.true_pose,
            estimate: belief,
            multimodal,
            head_yaw: bundle.head_yaw,
            believed_view_center: vc,
            visible_tiles: ids.len(),
            cluster: filter.cluster(),
            confidence: raw,
            smoothed,
            training_gate: gate,
            fall: bundle.fall,
            command,
            particles: verbose.then(|| filter.particles().iter().map(|p| (p.azimuth, p.weight)).collect()),
        });
    }

    let truth = wstate.pose;
    let correct = sl_cfg.pose_distance(&belief, &truth) < sl_cfg.pose_distance(&belief, &truth.reflect());
    let classification = match first_signal {
        Some((CommandKind::FlipPose, _)) => Classification::Flip,
        Some((CommandKind::PurgeReflection, _)) => Classification::Purge,
        _ => Classification::Failed,
    };
    Ok(Trial {
        outcome: TrialOutcome {
            first_signal,
            classification,
            correct_after_signal: correct,
            final_error: (
                belief.distance(&truth),
                angle::diff(belief.heading, truth.heading).abs(),
            ),
        },
        log,
        model,
    })
}

/// One trial of a batch, with what is needed to name and reproduce it.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub scenario: ScenarioKind,
    pub init: InitKind,
    pub index: usize,
    pub seed: u64,
    pub mirrored_start: bool,
    pub trial: Trial,
}

impl TrialRecord {
    pub fn log_name(&self) -> String {
        format!("{}-{}-{:03}.jsonl", self.scenario.as_str(), self.init.as_str(), self.index)
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    pub trials: Vec<TrialRecord>,
}

/// Seed of trial `index` in a batch.
pub fn trial_seed(cfg: &Config, index: usize) -> u64 {
    cfg.experiment_seed.wrapping_add(index as u64)
}

/// Runs a batch of trials for one scenario and initialization. The second
/// half of the batch starts from the reflected start pose.
pub fn run_batch(cfg: &Config, kind: ScenarioKind, init: InitKind, verbose: bool) -> Result<Vec<TrialRecord>> {
    let n = cfg.experiment_trials;
    (0..n)
        .into_par_iter()
        .map(|index| {
            let mirrored_start = index >= n / 2;
            let scenario = cfg.scenario(kind, init, mirrored_start);
            let seed = trial_seed(cfg, index);
            let trial = run_trial(cfg, &scenario, seed, verbose)?;
            Ok(TrialRecord {
                scenario: kind,
                init,
                index,
                seed,
                mirrored_start,
                trial,
            })
        })
        .collect()
}

/// All configured scenarios, plus a correct-initialization control row per
/// scenario when enabled.
pub fn run_experiment(cfg: &Config, verbose: bool) -> Result<Experiment> {
    cfg.validate()?;
    let mut inits = vec![cfg.experiment_init];
    if cfg.experiment_control {
        inits.push(match cfg.experiment_init {
            InitKind::CorrectPose => InitKind::ReflectedPose,
            InitKind::ReflectedPose => InitKind::CorrectPose,
        });
    }
    let mut report = ExperimentReport::default();
    let mut trials = Vec::new();
    for &kind in &cfg.experiment_scenarios {
        for &init in &inits {
            let batch = run_batch(cfg, kind, init, verbose)?;
            let outcomes: Vec<_> = batch.iter().map(|t| t.trial.outcome).collect();
            report.rows.push(ReportRow::from_outcomes(kind, init, &outcomes));
            trials.extend(batch);
        }
    }
    Ok(Experiment { report, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::log::write_log;

    fn short() -> Config {
        Config {
            sim_duration_s: 20.0,
            experiment_warmup_s: 10.0,
            experiment_trials: 2,
            ..Config::default()
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = short();
        let sc = cfg.scenario(ScenarioKind::PenaltyWalk, InitKind::ReflectedPose, false);
        let a = run_trial(&cfg, &sc, 4, true).unwrap();
        let b = run_trial(&cfg, &sc, 4, true).unwrap();
        assert_eq!(write_log(&a.log), write_log(&b.log));
        assert_eq!(a.model.snapshot(), b.model.snapshot());
        let c = run_trial(&cfg, &sc, 5, true).unwrap();
        assert_ne!(write_log(&a.log), write_log(&c.log));
    }

    #[test]
    fn warmup_trains_the_whole_wall() {
        let cfg = Config::default();
        let world = cfg.world(3);
        let tex = synthesize_background(&world.texture, &world.cylinder, 3);
        let sc = cfg.scenario(ScenarioKind::HeadOnly, InitKind::ReflectedPose, false);
        let model = train_model(&cfg, &world, &tex, &sc, cfg.warmup_frames()).unwrap();
        assert_eq!(model.seen_count(), model.grid().tile_count());
    }

    #[test]
    fn gate_is_never_open_while_it_is_logged_closed() {
        let cfg = short();
        let sc = cfg.scenario(ScenarioKind::HeadOnly, InitKind::ReflectedPose, false);
        let t = run_trial(&cfg, &sc, 2, false).unwrap();
        for w in t.log.windows(2) {
            if w[0].command.is_some() {
                assert!(!w[0].training_gate);
            }
        }
        assert!(t.log.iter().all(|r| r.smoothed.current + r.smoothed.reflected <= 1.0 + 1e-12));
    }

    #[test]
    fn experiment_rows_follow_configuration() {
        let cfg = Config {
            experiment_scenarios: vec![],
            ..short()
        };
        let e = run_experiment(&cfg, false).unwrap();
        assert!(e.report.rows.is_empty() && e.trials.is_empty());
        let cfg = Config {
            experiment_control: true,
            sim_duration_s: 5.0,
            experiment_warmup_s: 3.0,
            ..short()
        };
        let e = run_experiment(&cfg, false).unwrap();
        assert_eq!(e.report.rows.len(), 2);
        assert_eq!(e.report.rows[1].init, InitKind::CorrectPose);
        assert_eq!(e.trials.len(), 4);
        assert!(!e.trials[0].mirrored_start && e.trials[1].mirrored_start);
    }
}
