//! Wrapped-angle helpers and weighted circular statistics.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `[-π, π)`.
pub fn wrap(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return TAU for tiny negative inputs after rounding.
    if a >= PI {
        a - TAU
    } else {
        a
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_positive(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Signed shortest difference `a - b`, in `[-π, π)`.
pub fn diff(a: f64, b: f64) -> f64 {
    wrap(a - b)
}

/// Weighted circular mean and resultant length of a set of angles.
///
/// Returns `None` when the total weight is zero. The resultant length lies in
/// `[0, 1]`; it is 1 when all mass sits on one angle.
pub fn weighted_mean<I>(samples: I) -> Option<(f64, f64)>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut s, mut c, mut total) = (0.0, 0.0, 0.0);
    for (angle, weight) in samples {
        s += weight * angle.sin();
        c += weight * angle.cos();
        total += weight;
    }
    if total <= 0.0 {
        return None;
    }
    let r = ((s * s + c * c).sqrt() / total).min(1.0);
    Some((wrap(s.atan2(c)), r))
}

/// Circular standard deviation `sqrt(-2 ln R)` for a resultant length `R`.
pub fn circular_std(resultant: f64) -> f64 {
    if resultant <= 0.0 {
        f64::INFINITY
    } else {
        (-2.0 * resultant.min(1.0).ln()).max(0.0).sqrt()
    }
}
