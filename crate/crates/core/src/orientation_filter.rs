//! Particle filter over the azimuth of the view center on the wall.
//!
//! Each particle is a field-frame hypothesis of where the camera's optical
//! axis meets the cylinder. Hypotheses are scored by re-addressing the
//! perceived tiles (labelled under the believed pose) by the offset between
//! the hypothesis and the believed view center and comparing them against
//! the background model.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::background_model::BackgroundModel;
use crate::colour::{similarity, ColourHistogram};
use crate::error::{Error, Result};
use crate::geometry::TileId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationParticle {
    pub azimuth: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationFilterConfig {
    pub particle_count: usize,
    pub motion_noise_std: f64,
    pub inject_fraction: f64,
    pub weight_floor: f64,
    pub cluster_window: f64,
}

impl Default for OrientationFilterConfig {
    fn default() -> Self {
        Self {
            particle_count: 200,
            motion_noise_std: 0.03,
            inject_fraction: 0.05,
            weight_floor: 0.01,
            cluster_window: 0.35,
        }
    }
}

impl OrientationFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particle_count < 10 {
            return Err(Error::invalid("filter.count must be at least 10"));
        }
        if !(0.0..0.5).contains(&self.inject_fraction) {
            return Err(Error::invalid("filter.inject_fraction must lie in [0, 0.5)"));
        }
        if !(self.motion_noise_std >= 0.0 && self.motion_noise_std.is_finite()) {
            return Err(Error::invalid("filter.noise_std must be non-negative"));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return Err(Error::invalid("filter.epsilon must be positive"));
        }
        if !(self.cluster_window > 0.0 && self.cluster_window <= PI) {
            return Err(Error::invalid("filter.cluster_window must lie in (0, pi]"));
        }
        Ok(())
    }

    pub fn inject_count(&self) -> usize {
        (self.inject_fraction * self.particle_count as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterEstimate {
    pub center: f64,
    /// Circular standard deviation, capped at π.
    pub spread: f64,
    pub mass: f64,
}

/// `count` particles spread evenly around the circle with equal weights.
pub fn uniform_particles(count: usize, rng: &mut impl Rng) -> Vec<OrientationParticle> {
    let offset: f64 = rng.random::<f64>() * TAU / count as f64;
    (0..count)
        .map(|i| OrientationParticle {
            azimuth: angle::wrap(offset + i as f64 * TAU / count as f64),
            weight: 1.0 / count as f64,
        })
        .collect()
}

fn gaussian(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("standard deviation is validated non-negative")
}

/// Shifts every hypothesis by the change of the believed view center plus noise.
pub fn predict(
    particles: &mut [OrientationParticle],
    delta_view: f64,
    cfg: &OrientationFilterConfig,
    rng: &mut impl Rng,
) {
    let noise = gaussian(cfg.motion_noise_std);
    for p in particles {
        let n = if cfg.motion_noise_std > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        };
        p.azimuth = angle::wrap(p.azimuth + delta_view + n);
    }
}

/// Geometric mean of `floor + similarity` over the perceived tiles that map
/// onto seen model tiles for the hypothesis `azimuth`, or `floor` when none do.
pub fn hypothesis_score(
    azimuth: f64,
    perceived: &[(TileId, ColourHistogram)],
    believed_view_center: f64,
    model: &BackgroundModel,
    floor: f64,
    sigma0: f64,
) -> f64 {
    let grid = model.grid();
    let offset = angle::diff(azimuth, believed_view_center);
    let (mut log_sum, mut matched) = (0.0, 0usize);
    for (id, h) in perceived {
        let tile = model.tile(grid.rotate(*id, offset));
        if let Ok(s) = similarity(h, tile, sigma0) {
            log_sum += (floor + s).ln();
            matched += 1;
        }
    }
    if matched == 0 {
        floor
    } else {
        (log_sum / matched as f64).exp()
    }
}

/// Multiplies each particle's weight by its hypothesis score.
///
/// An empty perception carries no information and leaves weights unchanged.
pub fn weigh(
    particles: &mut [OrientationParticle],
    perceived: &[(TileId, ColourHistogram)],
    believed_view_center: f64,
    model: &BackgroundModel,
    cfg: &OrientationFilterConfig,
    sigma0: f64,
) {
    if perceived.is_empty() {
        return;
    }
    for p in particles {
        p.weight *= hypothesis_score(
            p.azimuth,
            perceived,
            believed_view_center,
            model,
            cfg.weight_floor,
            sigma0,
        );
    }
}

/// Highest-weight particle; ties go to the lowest wrapped azimuth.
pub fn best_particle(particles: &[OrientationParticle]) -> Option<OrientationParticle> {
    particles.iter().copied().reduce(|best, p| {
        if p.weight > best.weight || (p.weight == best.weight && p.azimuth < best.azimuth) {
            p
        } else {
            best
        }
    })
}

/// Indices drawn by systematic (low-variance) resampling.
pub fn systematic_indices(weights: &[f64], count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let start: f64 = rng.random::<f64>();
    let step = total / count as f64;
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..count {
        let target = (start + i as f64) * step;
        while cumulative <= target && j + 1 < weights.len() {
            j += 1;
            cumulative += weights[j];
        }
        out.push(j);
    }
    Ok(out)
}

/// Systematic resampling of `(1 - inject_fraction) n` particles, plus
/// `inject_fraction n` fresh ones around the current best match.
/// All weights come back uniform.
pub fn resample_and_inject(
    particles: &mut Vec<OrientationParticle>,
    cfg: &OrientationFilterConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let n = particles.len();
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let inject = ((cfg.inject_fraction * n as f64).round() as usize).min(n);
    let indices = systematic_indices(&weights, n - inject, rng)?;
    let best = best_particle(particles).ok_or(Error::DegenerateWeights)?;
    let uniform = 1.0 / n as f64;
    let mut next: Vec<OrientationParticle> = indices
        .into_iter()
        .map(|i| OrientationParticle {
            azimuth: particles[i].azimuth,
            weight: uniform,
        })
        .collect();
    let noise = gaussian(cfg.motion_noise_std);
    for _ in 0..inject {
        let n = if cfg.motion_noise_std > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        };
        next.push(OrientationParticle {
            azimuth: angle::wrap(best.azimuth + n),
            weight: uniform,
        });
    }
    *particles = next;
    Ok(())
}

/// Weighted circular mean, circular spread and the mass near the mean.
pub fn cluster_center(particles: &[OrientationParticle], cfg: &OrientationFilterConfig) -> ClusterEstimate {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let mean = angle::weighted_mean(particles.iter().map(|p| (p.azimuth, p.weight)));
    let (center, resultant) = match mean {
        Some((c, r)) if r > 1e-9 => (c, r),
        Some((_, r)) => {
            let c = particles
                .iter()
                .filter(|p| p.weight > 0.0)
                .map(|p| p.azimuth)
                .fold(f64::INFINITY, f64::min);
            (c, r)
        }
        None => {
            let c = particles.iter().map(|p| p.azimuth).fold(f64::INFINITY, f64::min);
            (if c.is_finite() { c } else { 0.0 }, 0.0)
        }
    };
    let spread = angle::circular_std(resultant).min(PI);
    let mass = if total > 0.0 {
        particles
            .iter()
            .filter(|p| angle::diff(p.azimuth, center).abs() <= cfg.cluster_window)
            .map(|p| p.weight)
            .sum::<f64>()
            / total
    } else {
        0.0
    };
    ClusterEstimate { center, spread, mass }
}

/// Particle set plus configuration, stepped once per frame.
#[derive(Debug, Clone)]
pub struct OrientationFilter {
    pub config: OrientationFilterConfig,
    particles: Vec<OrientationParticle>,
}

impl OrientationFilter {
    pub fn new(config: OrientationFilterConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            particles: uniform_particles(config.particle_count, rng),
            config,
        })
    }

    pub fn particles(&self) -> &[OrientationParticle] {
        &self.particles
    }

    pub fn reinitialize(&mut self, rng: &mut impl Rng) {
        self.particles = uniform_particles(self.config.particle_count, rng);
    }

    /// One predict / weigh / resample cycle.
    pub fn step(
        &mut self,
        delta_view: f64,
        perceived: &[(TileId, ColourHistogram)],
        believed_view_center: f64,
        model: &BackgroundModel,
        sigma0: f64,
        rng: &mut impl Rng,
    ) {
        predict(&mut self.particles, delta_view, &self.config, rng);
        weigh(
            &mut self.particles,
            perceived,
            believed_view_center,
            model,
            &self.config,
            sigma0,
        );
        if resample_and_inject(&mut self.particles, &self.config, rng).is_err() {
            self.reinitialize(rng);
        }
    }

    pub fn cluster(&self) -> ClusterEstimate {
        cluster_center(&self.particles, &self.config)
    }
}
