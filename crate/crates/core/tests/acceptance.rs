//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use room_awareness::angle;
use room_awareness::background_model::BackgroundModel;
use room_awareness::colour::{build_histogram, BinningConfig, ColourHistogram, PixelYCrCb, BIN_COUNT};
use room_awareness::controller::CommandKind;
use room_awareness::geometry::{make_tile_grid, view_center_azimuth, visible_tiles, CameraFrame, CylinderParams, TileId, ViewPose};
use room_awareness::harness::{run_batch, run_trial, train_model, write_log, Classification, Config, TextureMode, TrialRecord};
use room_awareness::orientation_filter::OrientationFilter;
use room_awareness::selfloc::{flip_pose, purge_reflection, reset_orientation, Pose2D, SelfLocConfig, SelfLocParticle};
use room_awareness::sim::{render_perceived_tile, substream, synthesize_background, InitKind, ScenarioKind, Stream};

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Verdict { name, pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn signal_times(batch: &[TrialRecord]) -> Vec<f64> {
    batch
        .iter()
        .filter_map(|t| t.trial.outcome.first_signal.map(|(_, s)| s))
        .collect()
}

fn head_only_reflected() -> Verdict {
    let cfg = Config { experiment_trials: 20, ..Config::default() };
    let start = Instant::now();
    let batch = run_batch(&cfg, ScenarioKind::HeadOnly, InitKind::ReflectedPose, false).unwrap();
    let elapsed = start.elapsed();
    let signalled: Vec<_> = batch
        .iter()
        .filter(|t| t.trial.outcome.classification != Classification::Failed)
        .collect();
    let correct = signalled.iter().filter(|t| t.trial.outcome.correct_after_signal).count();
    let times = signal_times(&batch);
    let mean_time = if times.is_empty() { f64::INFINITY } else { mean(&times) };
    let pass = signalled.len() * 100 >= 80 * batch.len()
        && correct * 100 >= 90 * signalled.len()
        && !signalled.is_empty()
        && mean_time <= 60.0
        && elapsed <= Duration::from_secs(120);
    verdict(
        "head-only reflected init (20 trials)",
        pass,
        format!(
            "signalled {}/{} (>= 80%), correct {}/{} (>= 90%), mean time {:.1} s (<= 60 s), runtime {:.1} s (<= 120 s)",
            signalled.len(),
            batch.len(),
            correct,
            signalled.len(),
            mean_time,
            elapsed.as_secs_f64()
        ),
    )
}

fn penalty_walk_reflected() -> Verdict {
    let cfg = Config { experiment_trials: 10, ..Config::default() };
    let start = Instant::now();
    let batch = run_batch(&cfg, ScenarioKind::PenaltyWalk, InitKind::ReflectedPose, false).unwrap();
    let elapsed = start.elapsed();
    let count = |c| batch.iter().filter(|t| t.trial.outcome.classification == c).count();
    let (failed, flip) = (count(Classification::Failed), count(Classification::Flip));
    let pass = failed == 0 && flip * 100 >= 80 * batch.len() && elapsed <= Duration::from_secs(120);
    verdict(
        "penalty-walk reflected init (10 trials)",
        pass,
        format!(
            "failed {failed} (= 0), flip first {flip}/{} (>= 80%), runtime {:.1} s (<= 120 s)",
            batch.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Exact two-sided binomial test against p = 1/2: total probability of
/// outcomes no more likely than `k`.
fn binomial_two_sided(k: u64, n: u64) -> f64 {
    let choose = |n: u64, r: u64| -> f64 {
        (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    let pmf = |i: u64| choose(n, i) * 0.5f64.powi(n as i32);
    let pk = pmf(k);
    (0..=n).map(pmf).filter(|p| *p <= pk * (1.0 + 1e-9)).sum::<f64>().min(1.0)
}

fn symmetry_null_test() -> Verdict {
    let cfg = Config { sim_texture: TextureMode::Periodic, ..Config::default() };
    let pairs = 10u64;
    let mut correct = 0u64;
    let mut signalled = 0u64;
    for i in 0..pairs {
        let seed = 1000 + i;
        // Side A: truth P, belief reflect(P). Side B: truth reflect(P), same belief.
        let a = cfg.scenario(ScenarioKind::HeadOnly, InitKind::ReflectedPose, false);
        let b = cfg.scenario(ScenarioKind::HeadOnly, InitKind::CorrectPose, true);
        for sc in [a, b] {
            let o = run_trial(&cfg, &sc, seed, false).unwrap().outcome;
            correct += u64::from(o.correct_after_signal);
            signalled += u64::from(o.first_signal.is_some());
        }
    }
    let n = 2 * pairs;
    let p = binomial_two_sided(correct, n);
    verdict(
        "symmetry null test (periodic texture, 20 paired trials)",
        p > 0.05,
        format!("correct {correct}/{n}, signalled {signalled}/{n}, binomial p = {p:.3} (> 0.05)"),
    )
}

fn random_histogram(rng: &mut ChaCha8Rng) -> ColourHistogram {
    let mut bins = [0.0; BIN_COUNT];
    for b in &mut bins {
        *b = rng.random::<f64>().powi(2);
    }
    ColourHistogram::from_bins(bins).unwrap()
}

fn moving_average_oracle() -> Verdict {
    let n = 20u32;
    let nf = f64::from(n);
    let grid = make_tile_grid(CylinderParams::default()).unwrap();
    let id = TileId::new(1, 7);
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = BackgroundModel::new(grid, n).unwrap();
        let mut mu = [0.0f64; BIN_COUNT];
        let mut var = [0.0f64; BIN_COUNT];
        for step in 0..1000 {
            let x = random_histogram(&mut rng);
            model.update_tile(id, &x).unwrap();
            for b in 0..BIN_COUNT {
                if step == 0 {
                    mu[b] = x.bins[b];
                    var[b] = 0.0;
                } else {
                    let d = mu[b] - x.bins[b];
                    var[b] = (nf * var[b] + nf / (nf + 1.0) * d * d) / (nf + 1.0);
                    mu[b] = (nf * mu[b] + x.bins[b]) / (nf + 1.0);
                }
            }
            let t = model.tile(id);
            for b in 0..BIN_COUNT {
                worst = worst.max((t.mean[b] - mu[b]).abs()).max((t.variance[b] - var[b]).abs());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut model = BackgroundModel::new(grid, n).unwrap();
    model.update_tile(id, &random_histogram(&mut rng)).unwrap();
    let c = random_histogram(&mut rng);
    let mut converged_at = None;
    for k in 1..=100 * n {
        model.update_tile(id, &c).unwrap();
        if converged_at.is_none() && model.tile(id).variance.iter().all(|v| *v < 1e-9) {
            converged_at = Some(k);
        }
    }
    let final_max = model.tile(id).variance.iter().copied().fold(0.0, f64::max);
    let pass = worst <= 1e-12 && converged_at.is_some() && final_max < 1e-9;
    verdict(
        "moving-average oracle",
        pass,
        format!(
            "max deviation {worst:.2e} over 5 x 1000 steps (<= 1e-12); constant-input variance < 1e-9 after {} updates (<= {}), final {final_max:.2e}",
            converged_at.map_or("never".to_string(), |k| k.to_string()),
            100 * n
        ),
    )
}

/// Counts by walking the interval layout directly.
fn counting_oracle(pixels: &[PixelYCrCb], c: (i32, i32, i32)) -> [f64; BIN_COUNT] {
    let (c1, c2, c3) = c;
    let edges = [(-128, -c3), (-c3, -c2), (-c2, -c1), (-c1, 0), (0, c1), (c1, c2), (c2, c3), (c3, 129)];
    let slot = |v: u8| {
        let d = i32::from(v) - 128;
        edges.iter().position(|&(lo, hi)| d >= lo && d < hi).unwrap()
    };
    let mut counts = [0usize; BIN_COUNT];
    for p in pixels {
        counts[slot(p.cr)] += 1;
        counts[8 + slot(p.cb)] += 1;
    }
    counts.map(|k| k as f64 / (2 * pixels.len()) as f64)
}

fn histogram_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for set in 0..100 {
        let (c1, c2, c3) = if set % 2 == 0 { (16, 32, 64) } else {
            let c1 = rng.random_range(1..40);
            let c2 = rng.random_range(c1 + 1..80);
            (c1, c2, rng.random_range(c2 + 1..=128))
        };
        let cfg = BinningConfig::new(c1, c2, c3).unwrap();
        let len = rng.random_range(1..1000);
        let px: Vec<PixelYCrCb> = (0..len)
            .map(|_| PixelYCrCb::new(rng.random(), rng.random(), rng.random()))
            .collect();
        if build_histogram(&px, &cfg).unwrap().bins != counting_oracle(&px, (c1, c2, c3)) {
            mismatches += 1;
        }
    }
    verdict("histogram oracle", mismatches == 0, format!("{mismatches}/100 random pixel sets differ bin-exactly (= 0)"))
}

fn filter_convergence() -> Verdict {
    let cfg = Config::default();
    let grid = make_tile_grid(cfg.cylinder()).unwrap();
    let binning = cfg.binning().unwrap();
    let runs = 100u64;
    let mut hits = 0;
    for seed in 0..runs {
        let world = cfg.world(seed);
        let texture = synthesize_background(&world.texture, &world.cylinder, seed);
        let scenario = cfg.scenario(ScenarioKind::HeadOnly, InitKind::CorrectPose, false);
        let model = train_model(&cfg, &world, &texture, &scenario, cfg.warmup_frames()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
        let start = scenario.start_pose();
        let view = ViewPose::new((start.x, start.y), rng.random_range(-PI..PI), rng.random_range(-1.0..1.0), 0.0);
        let truth_vc = view_center_azimuth(&view, &grid);
        let frame = CameraFrame::new(&view, &world.camera);
        let tiles = visible_tiles(&view, &world.camera, &grid, &[]);
        let mut or_rng = substream(seed, Stream::Orientation, 0);
        let mut filter = OrientationFilter::new(cfg.filter(), &mut or_rng).unwrap();
        for _ in 0..50 {
            let perceived: Vec<_> = tiles
                .iter()
                .map(|t| {
                    let px = render_perceived_tile(&frame, &frame, &grid, t.id, &texture, texture.noise_std, world.samples_per_tile, &mut rng);
                    (t.id, build_histogram(&px, &binning).unwrap())
                })
                .collect();
            filter.step(0.0, &perceived, truth_vc, &model, cfg.colour_sigma0, &mut or_rng);
        }
        if angle::diff(filter.cluster().center, truth_vc).abs() <= 2.0 * grid.col_width() {
            hits += 1;
        }
    }
    verdict(
        "orientation filter convergence",
        hits * 100 >= 95 * runs,
        format!("{hits}/{runs} runs within 2 tile widths after 50 cycles (>= 95%)"),
    )
}

fn particle_set() -> impl Strategy<Value = Vec<SelfLocParticle>> {
    proptest::collection::vec(
        (-3.0f64..3.0, -2.0f64..2.0, -PI..PI, 0.01f64..1.0).prop_map(|(x, y, h, w)| SelfLocParticle {
            pose: Pose2D::new(x, y, h),
            weight: w,
        }),
        1..120,
    )
}

fn props(cases: u32) -> PropConfig {
    PropConfig { cases, failure_persistence: None, ..PropConfig::default() }
}

fn command_contracts() -> Verdict {
    let mut failures = Vec::new();
    let mut runner = TestRunner::new(props(256));
    if let Err(e) = runner.run(&particle_set(), |ps| {
        let mut twice = ps.clone();
        flip_pose(&mut twice);
        flip_pose(&mut twice);
        prop_assert_eq!(twice, ps);
        Ok(())
    }) {
        failures.push(format!("flip involution: {e}"));
    }
    let mut runner = TestRunner::new(props(256));
    if let Err(e) = runner.run(&(particle_set(), any::<u64>()), |(ps, seed)| {
        let mut reset = ps.clone();
        reset_orientation(&mut reset, &mut ChaCha8Rng::seed_from_u64(seed));
        for (a, b) in ps.iter().zip(&reset) {
            prop_assert_eq!((a.pose.x.to_bits(), a.pose.y.to_bits()), (b.pose.x.to_bits(), b.pose.y.to_bits()));
        }
        Ok(())
    }) {
        failures.push(format!("reset position preservation: {e}"));
    }
    let mut runner = TestRunner::new(props(256));
    if let Err(e) = runner.run(&(particle_set(), any::<u64>()), |(ps, seed)| {
        let mut purged = ps.clone();
        let best = ps[0].pose;
        let _ = purge_reflection(&mut purged, best, &SelfLocConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(purged.len(), ps.len());
        Ok(())
    }) {
        failures.push(format!("purge count preservation: {e}"));
    }
    let mut runner = TestRunner::new(props(6));
    if let Err(e) = runner.run(&(any::<u64>(), 5.0f64..40.0, any::<bool>()), |(seed, fall_s, walk)| {
        let cfg = Config {
            sim_duration_s: 60.0,
            experiment_warmup_s: 10.0,
            experiment_post_signal_s: 60.0,
            sim_fall_s: Some(fall_s),
            ..Config::default()
        };
        let kind = if walk { ScenarioKind::PenaltyWalk } else { ScenarioKind::HeadOnly };
        let sc = cfg.scenario(kind, InitKind::ReflectedPose, seed % 2 == 0);
        let log = run_trial(&cfg, &sc, seed, false).unwrap().log;
        let frames: Vec<u64> = log.iter().filter(|r| r.command.is_some()).map(|r| r.frame).collect();
        for w in frames.windows(2) {
            prop_assert!(w[1] - w[0] >= u64::from(cfg.bc_cooldown_frames), "commands at {:?}", frames);
        }
        prop_assert!(log.iter().any(|r| r.command == Some(CommandKind::ResetOrientation)));
        Ok(())
    }) {
        failures.push(format!("cooldown log audit: {e}"));
    }
    let pass = failures.is_empty();
    verdict(
        "command contracts",
        pass,
        if pass {
            "flip involution, reset positions, purge count, cooldown audit all hold".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn determinism() -> Verdict {
    let cfg = Config { sim_duration_s: 60.0, ..Config::default() };
    let mut identical = true;
    for (kind, seed) in [(ScenarioKind::HeadOnly, 7u64), (ScenarioKind::PenaltyWalk, 8)] {
        let sc = cfg.scenario(kind, InitKind::ReflectedPose, false);
        let a = write_log(&run_trial(&cfg, &sc, seed, true).unwrap().log);
        let b = write_log(&run_trial(&cfg, &sc, seed, true).unwrap().log);
        identical &= a.as_bytes() == b.as_bytes() && !a.is_empty();
    }
    verdict("determinism", identical, format!("repeated runs byte-identical: {identical}"))
}

fn main() -> std::process::ExitCode {
    let verdicts = [
        head_only_reflected(),
        penalty_walk_reflected(),
        symmetry_null_test(),
        moving_average_oracle(),
        histogram_oracle(),
        filter_convergence(),
        command_contracts(),
        determinism(),
    ];
    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| format!("{}: {}", v.name, v.detail)).collect();
    println!("{}/{} criteria pass", verdicts.len() - failed.len(), verdicts.len());
    if failed.is_empty() {
        std::process::ExitCode::SUCCESS
    } else {
        eprintln!("failing criteria: {failed:#?}");
        std::process::ExitCode::FAILURE
    }
}
