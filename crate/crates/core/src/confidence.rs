//! Current-pose and reflected-pose confidences from the orientation particles.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};
use crate::orientation_filter::OrientationParticle;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfidencePair {
    pub current: f64,
    pub reflected: f64,
}

impl ConfidencePair {
    pub const fn new(current: f64, reflected: f64) -> Self {
        Self { current, reflected }
    }

    /// `current - reflected`.
    pub fn margin(&self) -> f64 {
        self.current - self.reflected
    }
}

/// Weighted fractions of particles within `fov / 2` of the believed view
/// center and of its antipode.
pub fn pose_confidences(
    particles: &[OrientationParticle],
    believed_view_center: f64,
    fov: f64,
) -> ConfidencePair {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if total <= 0.0 {
        return ConfidencePair::default();
    }
    let half = 0.5 * fov;
    let opposite = believed_view_center + PI;
    let (mut cur, mut refl) = (0.0, 0.0);
    for p in particles {
        if angle::diff(p.azimuth, believed_view_center).abs() <= half {
            cur += p.weight;
        } else if angle::diff(p.azimuth, opposite).abs() <= half {
            refl += p.weight;
        }
    }
    ConfidencePair::new(cur / total, refl / total)
}

/// Sliding-window mean of the last `W` confidence pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistory {
    capacity: usize,
    window: VecDeque<ConfidencePair>,
    smoothed: ConfidencePair,
}

impl ConfidenceHistory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("confidence.window must be at least 1"));
        }
        Ok(Self {
            capacity,
            window: VecDeque::with_capacity(capacity),
            smoothed: ConfidencePair::default(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn smoothed(&self) -> ConfidencePair {
        self.smoothed
    }

    pub fn clear(&mut self) {
        self.window.clear();
        self.smoothed = ConfidencePair::default();
    }

    /// Pushes a sample, evicting the oldest once full, and returns the new mean.
    pub fn smooth(&mut self, sample: ConfidencePair) -> ConfidencePair {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(sample);
        let n = self.window.len() as f64;
        let (c, r) = self
            .window
            .iter()
            .fold((0.0, 0.0), |(c, r), p| (c + p.current, r + p.reflected));
        self.smoothed = ConfidencePair::new(c / n, r / n);
        self.smoothed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn at(azimuths: &[f64]) -> Vec<OrientationParticle> {
        azimuths
            .iter()
            .map(|&azimuth| OrientationParticle { azimuth, weight: 1.0 })
            .collect()
    }

    #[test]
    fn examples() {
        let fov = 60f64.to_radians();
        assert_eq!(pose_confidences(&at(&[0.4; 10]), 0.4, fov), ConfidencePair::new(1.0, 0.0));

        let mut az = vec![0.4; 5];
        az.extend(vec![0.4 + PI; 5]);
        assert_eq!(pose_confidences(&at(&az), 0.4, fov), ConfidencePair::new(0.5, 0.5));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let az: Vec<f64> = (0..20_000).map(|_| rng.random_range(-PI..PI)).collect();
        let c = pose_confidences(&at(&az), 1.0, PI / 3.0);
        // Each window covers a sixth of the circle; 4 sigma of a binomial fraction.
        let tol = 4.0 * (1.0f64 / 6.0 * 5.0 / 6.0 / 20_000.0).sqrt();
        assert!((c.current - 1.0 / 6.0).abs() < tol);
        assert!((c.reflected - 1.0 / 6.0).abs() < tol);
    }

    #[test]
    fn smoothing_examples() {
        let mut h = ConfidenceHistory::new(15).unwrap();
        for _ in 0..40 {
            h.smooth(ConfidencePair::new(0.8, 0.1));
        }
        assert!((h.smoothed().current - 0.8).abs() < 1e-12);
        assert!((h.smoothed().reflected - 0.1).abs() < 1e-12);

        let mut h = ConfidenceHistory::new(4).unwrap();
        for c in [1.0, 0.0, 1.0, 0.0] {
            h.smooth(ConfidencePair::new(c, 0.0));
        }
        assert_eq!(h.smoothed().current, 0.5);

        let mut h = ConfidenceHistory::new(10).unwrap();
        for _ in 0..10 {
            h.smooth(ConfidencePair::new(0.0, 0.0));
        }
        for k in 1..=12 {
            let s = h.smooth(ConfidencePair::new(1.0, 0.0));
            let expected = (k.min(10) as f64) / 10.0;
            assert!((s.current - expected).abs() < 1e-12, "k {k}");
        }
        assert!(ConfidenceHistory::new(0).is_err());
    }

    proptest! {
        #[test]
        fn pair_sum_bounded_and_rotation_invariant(
            az in proptest::collection::vec((-PI..PI, 0.0f64..1.0), 1..200),
            believed in -PI..PI,
            delta in -PI..PI,
            fov in 0.1f64..3.1,
        ) {
            let ps: Vec<_> = az.iter().map(|&(azimuth, weight)| OrientationParticle { azimuth, weight }).collect();
            let a = pose_confidences(&ps, believed, fov);
            prop_assert!(a.current + a.reflected <= 1.0 + 1e-12);
            let rotated: Vec<_> = ps.iter().map(|p| OrientationParticle { azimuth: angle::wrap(p.azimuth + delta), weight: p.weight }).collect();
            let b = pose_confidences(&rotated, believed + delta, fov);
            // Particles sitting exactly on a window edge may flip under rounding.
            let edge = ps.iter().any(|p| {
                let d = angle::diff(p.azimuth, believed).abs();
                (d - fov / 2.0).abs() < 1e-9 || (PI - d - fov / 2.0).abs() < 1e-9
            });
            if !edge {
                prop_assert!((a.current - b.current).abs() < 1e-9);
                prop_assert!((a.reflected - b.reflected).abs() < 1e-9);
            }
        }

        #[test]
        fn smoothing_bounded_and_order_insensitive(vals in proptest::collection::vec(0.0f64..1.0, 8)) {
            let mut h = ConfidenceHistory::new(8).unwrap();
            for v in &vals {
                h.smooth(ConfidencePair::new(*v, 0.0));
            }
            let mut rev = ConfidenceHistory::new(8).unwrap();
            for v in vals.iter().rev() {
                rev.smooth(ConfidencePair::new(*v, 0.0));
            }
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(h.smoothed().current >= lo - 1e-12 && h.smoothed().current <= hi + 1e-12);
            prop_assert!((h.smoothed().current - rev.smoothed().current).abs() < 1e-12);
        }
    }
}
