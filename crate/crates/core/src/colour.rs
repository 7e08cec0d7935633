//! Pixel conversion, chroma binning and histogram comparison.
//!
//! Histograms are two concatenated 8-interval marginals over centred Cr
//! (slots 0..8) and Cb (slots 8..16). Luma is ignored. Each channel's
//! intervals are defined by the sign of `channel - 128` and three magnitude
//! thresholds `c1 < c2 < c3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of slots in a concatenated Cr/Cb histogram.
pub const BIN_COUNT: usize = 16;

const CHANNEL_BINS: usize = BIN_COUNT / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRGB {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl PixelRGB {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelYCrCb {
    pub y: u8,
    pub cr: u8,
    pub cb: u8,
}

impl PixelYCrCb {
    pub const fn new(y: u8, cr: u8, cb: u8) -> Self {
        Self { y, cr, cb }
    }
}

fn round_clamp(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Full-range BT.601 conversion, rounded to nearest and clamped.
pub fn rgb_to_ycrcb(p: PixelRGB) -> PixelYCrCb {
    let (r, g, b) = (f64::from(p.r), f64::from(p.g), f64::from(p.b));
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    PixelYCrCb::new(round_clamp(y), round_clamp(cr), round_clamp(cb))
}

/// Chroma interval thresholds on the centred `[-128, 128]` scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningConfig {
    c1: i32,
    c2: i32,
    c3: i32,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            c1: 16,
            c2: 32,
            c3: 64,
        }
    }
}

impl BinningConfig {
    pub fn new(c1: i32, c2: i32, c3: i32) -> Result<Self> {
        if !(0 < c1 && c1 < c2 && c2 < c3 && c3 <= 128) {
            return Err(Error::invalid(format!(
                "binning thresholds must satisfy 0 < c1 < c2 < c3 <= 128, got {c1}, {c2}, {c3}"
            )));
        }
        Ok(Self { c1, c2, c3 })
    }

    pub fn thresholds(&self) -> (i32, i32, i32) {
        (self.c1, self.c2, self.c3)
    }

    pub const fn bin_count(&self) -> usize {
        BIN_COUNT
    }

    fn channel_bin(&self, channel: u8) -> usize {
        let d = i32::from(channel) - 128;
        let m = d.abs();
        if d >= 0 {
            if m < self.c1 {
                4
            } else if m < self.c2 {
                5
            } else if m < self.c3 {
                6
            } else {
                7
            }
        } else if m <= self.c1 {
            3
        } else if m <= self.c2 {
            2
        } else if m <= self.c3 {
            1
        } else {
            0
        }
    }
}

/// Returns `(cr_slot, cb_slot)`; the Cb slot already carries the +8 offset.
pub fn bin_index(p: PixelYCrCb, cfg: &BinningConfig) -> (usize, usize) {
    (
        cfg.channel_bin(p.cr),
        CHANNEL_BINS + cfg.channel_bin(p.cb),
    )
}

/// A normalized chroma histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColourHistogram {
    pub bins: [f64; BIN_COUNT],
}

impl ColourHistogram {
    /// Builds a histogram from raw bins, normalizing them to sum to 1.
    pub fn from_bins(bins: [f64; BIN_COUNT]) -> Result<Self> {
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::invalid("histogram bins must be finite and non-negative"));
        }
        let total: f64 = bins.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("histogram has no mass"));
        }
        Ok(Self {
            bins: bins.map(|b| b / total),
        })
    }

    pub fn sum(&self) -> f64 {
        self.bins.iter().sum()
    }
}

/// Counts every pixel once into its Cr slot and once into its Cb slot.
pub fn build_histogram(samples: &[PixelYCrCb], cfg: &BinningConfig) -> Result<ColourHistogram> {
    if samples.is_empty() {
        return Err(Error::EmptyTileSample);
    }
    let mut counts = [0u32; BIN_COUNT];
    for &p in samples {
        let (cr, cb) = bin_index(p, cfg);
        counts[cr] += 1;
        counts[cb] += 1;
    }
    let norm = 2.0 * samples.len() as f64;
    Ok(ColourHistogram {
        bins: counts.map(|c| f64::from(c) / norm),
    })
}

/// Per-bin running mean and variance of the histograms observed on one tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColourHistogramModel {
    pub mean: [f64; BIN_COUNT],
    pub variance: [f64; BIN_COUNT],
    pub seen: bool,
    pub update_weight: u32,
}

impl ColourHistogramModel {
    pub fn unseen(update_weight: u32) -> Self {
        Self {
            mean: [0.0; BIN_COUNT],
            variance: [0.0; BIN_COUNT],
            seen: false,
            update_weight,
        }
    }

    /// A seen model whose mean is `h` and whose variance is zero.
    pub fn from_histogram(h: &ColourHistogram, update_weight: u32) -> Self {
        Self {
            mean: h.bins,
            variance: [0.0; BIN_COUNT],
            seen: true,
            update_weight,
        }
    }

    /// Folds one observation into the model.
    ///
    /// The first observation is copied verbatim. Later ones use the fixed-N
    /// moving average and its matching variance recurrence:
    ///
    /// ```text
    /// mean' = (N mean + x) / (N + 1)
    /// var'  = (N var + N / (N + 1) (mean - x)^2) / (N + 1)
    /// ```
    pub fn absorb(&mut self, x: &ColourHistogram) {
        if !self.seen {
            *self = Self::from_histogram(x, self.update_weight);
            return;
        }
        let n = f64::from(self.update_weight);
        let n1 = n + 1.0;
        for b in 0..BIN_COUNT {
            let last = self.mean[b];
            let d = last - x.bins[b];
            self.mean[b] = (n * last + x.bins[b]) / n1;
            self.variance[b] = (n * self.variance[b] + (n / n1) * d * d) / n1;
        }
    }
}

/// Variance-weighted histogram intersection in `[0, 1]`.
///
/// With `w_b = 1 / (var_b + sigma0)` this is
/// `Σ w_b min(p_b, m_b) / Σ w_b (p_b + m_b) / 2`.
pub fn similarity(
    perceived: &ColourHistogram,
    model: &ColourHistogramModel,
    sigma0: f64,
) -> Result<f64> {
    if !model.seen {
        return Err(Error::UnseenTile);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for b in 0..BIN_COUNT {
        let w = 1.0 / (model.variance[b] + sigma0);
        let (p, m) = (perceived.bins[b], model.mean[b]);
        num += w * p.min(m);
        den += w * 0.5 * (p + m);
    }
    if den <= 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}
