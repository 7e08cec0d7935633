//! Baseline Monte-Carlo self-localization on a point-symmetric field, plus
//! the three particle-set manipulations the behaviour controller can request.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::orientation_filter::systematic_indices;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Headings are kept on a 2^-40 rad lattice so that adding a half turn is
/// exact and point reflection is an exact involution.
const HEADING_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

/// Largest lattice value not above π.
fn half_turn() -> f64 {
    (PI / HEADING_QUANTUM).floor() * HEADING_QUANTUM
}

/// Snaps a heading to the lattice and wraps it into `[-half_turn, half_turn)`.
pub fn wrap_heading(h: f64) -> f64 {
    let ht = half_turn();
    let q = (h / HEADING_QUANTUM).round() * HEADING_QUANTUM;
    let r = (q + ht).rem_euclid(2.0 * ht) - ht;
    if r >= ht {
        r - 2.0 * ht
    } else {
        r
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_heading(heading),
        }
    }

    /// Point reflection about the field center.
    pub fn reflect(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            heading: wrap_heading(wrap_heading(self.heading) + half_turn()),
        }
    }

    /// Applies a robot-frame displacement `(forward, left, turn)`.
    pub fn compose(&self, (dx, dy, dh): (f64, f64, f64)) -> Self {
        let (s, c) = self.heading.sin_cos();
        Self::new(self.x + c * dx - s * dy, self.y + s * dx + c * dy, self.heading + dh)
    }

    /// Robot-frame displacement that takes `self` to `other`.
    pub fn delta_to(&self, other: &Pose2D) -> (f64, f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let (gx, gy) = (other.x - self.x, other.y - self.y);
        (c * gx + s * gy, -s * gx + c * gy, angle::diff(other.heading, self.heading))
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfLocParticle {
    pub pose: Pose2D,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkClass {
    GoalPost,
    LineJunction,
    CircleCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub class: LandmarkClass,
    pub position: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkObservation {
    pub landmark_class: LandmarkClass,
    /// Robot frame.
    pub bearing: f64,
    pub range: f64,
    /// `(range_std, bearing_std)`.
    pub noise_std: (f64, f64),
}

/// Field landmarks, centred on the field origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub length: f64,
    pub width: f64,
    pub landmarks: Vec<Landmark>,
}

impl FieldMap {
    /// Goal posts, line junctions and the center circle of a field with
    /// identical goals at both ends.
    pub fn symmetric(length: f64, width: f64) -> Self {
        let (hx, hy) = (length / 2.0, width / 2.0);
        let goal_half = 0.75;
        let box_depth = 0.6;
        let box_half = 1.1;
        let mut landmarks = Vec::new();
        let mut both = |class, x: f64, y: f64| {
            landmarks.push(Landmark { class, position: (x, y) });
            landmarks.push(Landmark { class, position: (-x, -y) });
        };
        both(LandmarkClass::GoalPost, hx, goal_half);
        both(LandmarkClass::GoalPost, hx, -goal_half);
        both(LandmarkClass::LineJunction, hx, hy);
        both(LandmarkClass::LineJunction, hx, -hy);
        both(LandmarkClass::LineJunction, 0.0, hy);
        both(LandmarkClass::LineJunction, hx, box_half);
        both(LandmarkClass::LineJunction, hx, -box_half);
        both(LandmarkClass::LineJunction, hx - box_depth, box_half);
        both(LandmarkClass::LineJunction, hx - box_depth, -box_half);
        landmarks.push(Landmark {
            class: LandmarkClass::CircleCenter,
            position: (0.0, 0.0),
        });
        Self {
            length,
            width,
            landmarks,
        }
    }

    /// Whether the landmark set is invariant under point reflection.
    pub fn is_point_symmetric(&self, tol: f64) -> bool {
        self.landmarks.iter().all(|l| {
            self.landmarks.iter().any(|m| {
                m.class == l.class
                    && (m.position.0 + l.position.0).abs() <= tol
                    && (m.position.1 + l.position.1).abs() <= tol
            })
        })
    }
}

impl Default for FieldMap {
    fn default() -> Self {
        Self::symmetric(6.0, 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfLocConfig {
    pub particle_count: usize,
    /// Per-step `(forward, left, turn)` standard deviations.
    pub motion_noise: (f64, f64, f64),
    pub purge_radius: f64,
    /// Metres per radian of heading difference in the pose metric.
    pub heading_scale: f64,
    /// Weight fraction on the reflected cluster above which the set counts as multimodal.
    pub multimodal_threshold: f64,
}

impl Default for SelfLocConfig {
    fn default() -> Self {
        Self {
            particle_count: 100,
            motion_noise: (0.02, 0.02, 0.01),
            purge_radius: 1.0,
            heading_scale: 1.0,
            multimodal_threshold: 0.2,
        }
    }
}

impl SelfLocConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.motion_noise;
        if self.particle_count == 0
            || [a, b, c].iter().any(|v| !(*v >= 0.0 && v.is_finite()))
            || !(self.purge_radius > 0.0 && self.purge_radius.is_finite())
            || !(self.heading_scale >= 0.0 && self.heading_scale.is_finite())
            || !(0.0..1.0).contains(&self.multimodal_threshold)
        {
            return Err(Error::invalid(format!("invalid self-localization config {self:?}")));
        }
        Ok(())
    }

    /// Distance combining position and scaled heading difference.
    pub fn pose_distance(&self, a: &Pose2D, b: &Pose2D) -> f64 {
        a.distance(b) + self.heading_scale * angle::diff(a.heading, b.heading).abs()
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated standard deviation")
}

fn draw(n: &Normal<f64>, std: f64, rng: &mut impl Rng) -> f64 {
    if std > 0.0 {
        n.sample(rng)
    } else {
        0.0
    }
}

/// Particles drawn around `center` with the given position and heading spread.
pub fn particles_around(
    center: Pose2D,
    count: usize,
    pos_std: f64,
    heading_std: f64,
    rng: &mut impl Rng,
) -> Vec<SelfLocParticle> {
    let (np, nh) = (normal(pos_std), normal(heading_std));
    let w = 1.0 / count as f64;
    (0..count)
        .map(|_| SelfLocParticle {
            pose: Pose2D::new(
                center.x + draw(&np, pos_std, rng),
                center.y + draw(&np, pos_std, rng),
                center.heading + draw(&nh, heading_std, rng),
            ),
            weight: w,
        })
        .collect()
}

/// Unnormalized likelihood of one observation from a pose, using the
/// best-matching map landmark of the same class.
fn observation_likelihood(pose: &Pose2D, obs: &LandmarkObservation, map: &FieldMap) -> f64 {
    let (sr, sb) = obs.noise_std;
    map.landmarks
        .iter()
        .filter(|l| l.class == obs.landmark_class)
        .map(|l| {
            let (dx, dy) = (l.position.0 - pose.x, l.position.1 - pose.y);
            let range = dx.hypot(dy);
            let bearing = angle::diff(dy.atan2(dx), pose.heading);
            let zr = (range - obs.range) / sr;
            let zb = angle::diff(bearing, obs.bearing) / sb;
            (-0.5 * (zr * zr + zb * zb)).exp()
        })
        .fold(0.0, f64::max)
}

/// One motion / weighting / resampling cycle.
///
/// With no observations the set is only moved. When every particle has zero
/// likelihood the weights fall back to uniform before resampling.
pub fn mcl_step(
    particles: &mut Vec<SelfLocParticle>,
    odometry: (f64, f64, f64),
    observations: &[LandmarkObservation],
    map: &FieldMap,
    cfg: &SelfLocConfig,
    rng: &mut impl Rng,
) {
    let (sx, sy, sh) = cfg.motion_noise;
    let (nx, ny, nh) = (normal(sx), normal(sy), normal(sh));
    for p in particles.iter_mut() {
        let noisy = (
            odometry.0 + draw(&nx, sx, rng),
            odometry.1 + draw(&ny, sy, rng),
            odometry.2 + draw(&nh, sh, rng),
        );
        p.pose = p.pose.compose(noisy);
    }
    if observations.is_empty() || particles.is_empty() {
        return;
    }
    for p in particles.iter_mut() {
        let l: f64 = observations
            .iter()
            .map(|o| observation_likelihood(&p.pose, o, map))
            .product();
        p.weight *= l;
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0 && total.is_finite()) {
        let w = 1.0 / particles.len() as f64;
        particles.iter_mut().for_each(|p| p.weight = w);
    }
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let indices = systematic_indices(&weights, particles.len(), rng)
        .expect("weights are positive after fallback");
    let w = 1.0 / particles.len() as f64;
    *particles = indices
        .into_iter()
        .map(|i| SelfLocParticle {
            pose: particles[i].pose,
            weight: w,
        })
        .collect();
}

/// Moves every belief onto its symmetric reflection.
pub fn flip_pose(particles: &mut [SelfLocParticle]) {
    for p in particles {
        p.pose = p.pose.reflect();
    }
}

/// Redraws every heading uniformly; positions are left bit-identical.
pub fn reset_orientation(particles: &mut [SelfLocParticle], rng: &mut impl Rng) {
    if particles.is_empty() {
        return;
    }
    let w = 1.0 / particles.len() as f64;
    for p in particles {
        p.pose.heading = wrap_heading(rng.random_range(-PI..PI));
        p.weight = w;
    }
}

/// Replaces the beliefs near `reflect(best)` with jittered copies of beliefs
/// near `best`. Particles within `radius` of `best` are never touched.
pub fn purge_reflection(
    particles: &mut [SelfLocParticle],
    best: Pose2D,
    cfg: &SelfLocConfig,
    rng: &mut impl Rng,
) -> Result<usize> {
    let mirror = best.reflect();
    let radius = cfg.purge_radius;
    let purged: Vec<bool> = particles
        .iter()
        .map(|p| {
            cfg.pose_distance(&p.pose, &mirror) <= radius && cfg.pose_distance(&p.pose, &best) > radius
        })
        .collect();
    let removed = purged.iter().filter(|p| **p).count();
    if removed == 0 {
        return Ok(0);
    }
    let survivors: Vec<usize> = (0..particles.len()).filter(|&i| !purged[i]).collect();
    if survivors.is_empty() {
        return Err(Error::PurgeWouldEmpty);
    }
    let near: Vec<usize> = survivors
        .iter()
        .copied()
        .filter(|&i| cfg.pose_distance(&particles[i].pose, &best) <= radius)
        .collect();
    let sources = if near.is_empty() { survivors } else { near };
    let source_weights: Vec<f64> = sources.iter().map(|&i| particles[i].weight).collect();
    let picks = systematic_indices(&source_weights, removed, rng).unwrap_or_else(|_| {
        (0..removed).map(|k| k % sources.len()).collect()
    });
    let (sx, sy, sh) = cfg.motion_noise;
    let (nx, ny, nh) = (normal(sx), normal(sy), normal(sh));
    let mut picks = picks.into_iter();
    for i in 0..particles.len() {
        if !purged[i] {
            continue;
        }
        let src = particles[sources[picks.next().expect("one pick per purged particle")]];
        particles[i] = SelfLocParticle {
            pose: src.pose.compose((
                draw(&nx, sx, rng),
                draw(&ny, sy, rng),
                draw(&nh, sh, rng),
            )),
            weight: src.weight,
        };
    }
    Ok(removed)
}

/// Weighted mean of the dominant cluster, and whether the reflected cluster
/// carries more than the multimodality threshold of the total weight.
pub fn best_pose(particles: &[SelfLocParticle], cfg: &SelfLocConfig) -> (Pose2D, bool) {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if particles.is_empty() || total <= 0.0 {
        return (Pose2D::default(), false);
    }
    let radius = cfg.purge_radius;
    let mass_near = |center: &Pose2D| -> f64 {
        particles
            .iter()
            .filter(|q| cfg.pose_distance(&q.pose, center) <= radius)
            .map(|q| q.weight)
            .sum()
    };
    let mut mode = 0;
    let mut mode_mass = f64::NEG_INFINITY;
    for (i, p) in particles.iter().enumerate() {
        let m = mass_near(&p.pose);
        if m > mode_mass {
            mode = i;
            mode_mass = m;
        }
    }
    let mode_pose = particles[mode].pose;
    let cluster: Vec<&SelfLocParticle> = particles
        .iter()
        .filter(|q| cfg.pose_distance(&q.pose, &mode_pose) <= radius)
        .collect();
    let w: f64 = cluster.iter().map(|q| q.weight).sum();
    let x = cluster.iter().map(|q| q.weight * q.pose.x).sum::<f64>() / w;
    let y = cluster.iter().map(|q| q.weight * q.pose.y).sum::<f64>() / w;
    let heading = angle::weighted_mean(cluster.iter().map(|q| (q.pose.heading, q.weight)))
        .map_or(mode_pose.heading, |(h, _)| h);
    let best = Pose2D::new(x, y, heading);
    let mirror = best.reflect();
    let reflected: f64 = particles
        .iter()
        .filter(|q| {
            cfg.pose_distance(&q.pose, &mirror) <= radius
                && cfg.pose_distance(&q.pose, &mode_pose) > radius
        })
        .map(|q| q.weight)
        .sum();
    (best, reflected / total > cfg.multimodal_threshold)
}
