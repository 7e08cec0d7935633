//! Per-tile colour histogram models trained online under a gate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::colour::{ColourHistogram, ColourHistogramModel, BIN_COUNT};
use crate::error::{Error, Result};
use crate::geometry::{make_tile_grid, CylinderParams, TileGrid, TileId};

const MAGIC: &str = "room-awareness-bgm";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateReason {
    Fall,
    Penalty,
    LowConfidence,
    Manual,
}

impl GateReason {
    fn as_str(self) -> &'static str {
        match self {
            GateReason::Fall => "fall",
            GateReason::Penalty => "penalty",
            GateReason::LowConfidence => "low-confidence",
            GateReason::Manual => "manual",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fall" => GateReason::Fall,
            "penalty" => GateReason::Penalty,
            "low-confidence" => GateReason::LowConfidence,
            "manual" => GateReason::Manual,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEvent {
    pub frame: u64,
    pub enabled: bool,
    pub reason: GateReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    grid: TileGrid,
    tiles: Vec<ColourHistogramModel>,
    n_param: u32,
    training_enabled: bool,
    version: u64,
    dropped_updates: u64,
    gate_log: Vec<GateEvent>,
}

impl BackgroundModel {
    /// An untrained model with the gate open.
    pub fn new(grid: TileGrid, n_param: u32) -> Result<Self> {
        if n_param == 0 {
            return Err(Error::invalid("model.n_param must be at least 1"));
        }
        Ok(Self {
            tiles: vec![ColourHistogramModel::unseen(n_param); grid.tile_count()],
            grid,
            n_param,
            training_enabled: true,
            version: 0,
            dropped_updates: 0,
            gate_log: Vec::new(),
        })
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn n_param(&self) -> u32 {
        self.n_param
    }

    pub fn training_enabled(&self) -> bool {
        self.training_enabled
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dropped_updates(&self) -> u64 {
        self.dropped_updates
    }

    pub fn gate_log(&self) -> &[GateEvent] {
        &self.gate_log
    }

    pub fn tile(&self, id: TileId) -> &ColourHistogramModel {
        &self.tiles[self.grid.index(id)]
    }

    pub fn seen_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.seen).count()
    }

    /// Folds a perceived histogram into one tile, unless the gate is closed.
    pub fn update_tile(&mut self, id: TileId, perceived: &ColourHistogram) -> Result<UpdateOutcome> {
        if !self.grid.contains(id) {
            return Err(Error::invalid(format!("tile {id:?} outside the grid")));
        }
        if !self.training_enabled {
            self.dropped_updates += 1;
            return Ok(UpdateOutcome::Dropped);
        }
        let idx = self.grid.index(id);
        self.tiles[idx].absorb(perceived);
        self.version += 1;
        Ok(UpdateOutcome::Applied)
    }

    /// Opens or closes the training gate. Only changes are logged.
    pub fn set_training_gate(&mut self, enabled: bool, reason: GateReason, frame: u64) {
        if enabled == self.training_enabled {
            return;
        }
        self.training_enabled = enabled;
        self.gate_log.push(GateEvent {
            frame,
            enabled,
            reason,
        });
    }

    /// Text snapshot; binary64 values are written in shortest round-trip form.
    pub fn snapshot(&self) -> String {
        let p = self.grid.params();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "n_param {}", self.n_param);
        let _ = writeln!(
            out,
            "cylinder {:?} {:?} {:?} {:?} {:?} {} {}",
            p.center.0, p.center.1, p.radius, p.z_min, p.z_max, p.rows, p.cols
        );
        let _ = writeln!(out, "version {}", self.version);
        let _ = writeln!(out, "training_enabled {}", u8::from(self.training_enabled));
        let _ = writeln!(out, "dropped {}", self.dropped_updates);
        for e in &self.gate_log {
            let _ = writeln!(out, "gate {} {} {}", e.frame, u8::from(e.enabled), e.reason.as_str());
        }
        for id in self.grid.ids() {
            let t = self.tile(id);
            let _ = write!(out, "tile {} {} {}", id.row, id.col, u8::from(t.seen));
            for v in t.mean.iter().chain(t.variance.iter()) {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| fmt_err("not valid UTF-8"))?;
        Parser::new(text).parse()
    }
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
        }
    }

    fn record(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self
            .lines
            .next()
            .ok_or_else(|| fmt_err(format!("missing `{key}` record")))?;
        let mut fields = line.split_ascii_whitespace();
        if fields.next() != Some(key) {
            return Err(fmt_err(format!("line {}: expected `{key}`", n + 1)));
        }
        Ok((n + 1, fields.collect()))
    }

    fn parse(mut self) -> Result<BackgroundModel> {
        let (n, f) = self.record(MAGIC)?;
        if f != [FORMAT_VERSION.to_string().as_str()] {
            return Err(fmt_err(format!("line {n}: unsupported format version")));
        }
        let (n, f) = self.record("n_param")?;
        let n_param: u32 = single(n, &f)?;
        let (n, f) = self.record("cylinder")?;
        if f.len() != 7 {
            return Err(fmt_err(format!("line {n}: cylinder needs 7 fields")));
        }
        let params = CylinderParams {
            center: (num(n, f[0])?, num(n, f[1])?),
            radius: num(n, f[2])?,
            z_min: num(n, f[3])?,
            z_max: num(n, f[4])?,
            rows: num(n, f[5])?,
            cols: num(n, f[6])?,
        };
        if params.rows.saturating_mul(params.cols) > 1 << 20 {
            return Err(fmt_err(format!("line {n}: grid too large")));
        }
        let grid = make_tile_grid(params).map_err(|e| fmt_err(format!("line {n}: {e}")))?;
        let mut model =
            BackgroundModel::new(grid, n_param).map_err(|e| fmt_err(format!("line {n}: {e}")))?;
        let (n, f) = self.record("version")?;
        model.version = single(n, &f)?;
        let (n, f) = self.record("training_enabled")?;
        model.training_enabled = flag(n, single::<String>(n, &f)?.as_str())?;
        let (n, f) = self.record("dropped")?;
        model.dropped_updates = single(n, &f)?;

        while let Some((_, line)) = self.lines.peek() {
            if !line.starts_with("gate ") {
                break;
            }
            let (n, f) = self.record("gate")?;
            if f.len() != 3 {
                return Err(fmt_err(format!("line {n}: gate needs 3 fields")));
            }
            let reason = GateReason::parse(f[2])
                .ok_or_else(|| fmt_err(format!("line {n}: unknown gate reason")))?;
            model.gate_log.push(GateEvent {
                frame: num(n, f[0])?,
                enabled: flag(n, f[1])?,
                reason,
            });
        }

        let ids: Vec<TileId> = grid.ids().collect();
        for id in ids {
            let (n, f) = self.record("tile")?;
            if f.len() != 3 + 2 * BIN_COUNT {
                return Err(fmt_err(format!("line {n}: tile needs {} fields", 3 + 2 * BIN_COUNT)));
            }
            let (row, col): (usize, usize) = (num(n, f[0])?, num(n, f[1])?);
            if (row, col) != (id.row, id.col) {
                return Err(fmt_err(format!("line {n}: expected tile {} {}", id.row, id.col)));
            }
            let seen = flag(n, f[2])?;
            let mut t = ColourHistogramModel::unseen(n_param);
            t.seen = seen;
            for b in 0..BIN_COUNT {
                t.mean[b] = num(n, f[3 + b])?;
                t.variance[b] = num(n, f[3 + BIN_COUNT + b])?;
            }
            let finite = t.mean.iter().chain(t.variance.iter()).all(|v| v.is_finite());
            if !finite || t.variance.iter().any(|v| *v < 0.0) || t.mean.iter().any(|v| *v < 0.0) {
                return Err(fmt_err(format!("line {n}: invalid tile statistics")));
            }
            if seen && (t.mean.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(fmt_err(format!("line {n}: tile mean is not normalized")));
            }
            let idx = grid.index(id);
            model.tiles[idx] = t;
        }
        if let Some((n, _)) = self.lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(fmt_err(format!("line {}: trailing data", n + 1)));
        }
        Ok(model)
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| fmt_err(format!("line {line}: cannot parse `{s}`")))
}

fn single<T: std::str::FromStr>(line: usize, f: &[&str]) -> Result<T> {
    match f {
        [v] => num(line, v),
        _ => Err(fmt_err(format!("line {line}: expected one value"))),
    }
}

fn flag(line: usize, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(fmt_err(format!("line {line}: expected 0 or 1"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: u32) -> BackgroundModel {
        BackgroundModel::new(make_tile_grid(CylinderParams::default()).unwrap(), n).unwrap()
    }

    fn random_histogram(rng: &mut ChaCha8Rng) -> ColourHistogram {
        let mut bins = [0.0; BIN_COUNT];
        for b in &mut bins {
            *b = rng.random::<f64>();
        }
        ColourHistogram::from_bins(bins).unwrap()
    }

    fn one_bin(v: f64) -> ColourHistogram {
        let mut bins = [0.0; BIN_COUNT];
        bins[0] = v;
        bins[1] = 1.0 - v;
        ColourHistogram { bins }
    }

    #[test]
    fn first_observation_is_copied() {
        let mut m = model(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_histogram(&mut rng);
        let id = TileId::new(1, 5);
        assert_eq!(m.update_tile(id, &h).unwrap(), UpdateOutcome::Applied);
        assert_eq!(m.tile(id).mean, h.bins);
        assert_eq!(m.tile(id).variance, [0.0; BIN_COUNT]);
        assert!(m.tile(id).seen);
        assert_eq!(m.version(), 1);
    }

    #[test]
    fn moving_average_worked_example() {
        let mut m = model(4);
        let id = TileId::new(0, 0);
        m.update_tile(id, &one_bin(0.5)).unwrap();
        m.update_tile(id, &one_bin(0.7)).unwrap();
        // (4 * 0.5 + 0.7) / 5 and (1/5) * (4/5) * 0.2^2.
        assert!((m.tile(id).mean[0] - 0.54).abs() < 1e-15);
        assert!((m.tile(id).variance[0] - 0.0064).abs() < 1e-15);
    }

    #[test]
    fn constant_input_decays_variance() {
        let n = 4;
        let mut m = model(n);
        let id = TileId::new(0, 0);
        m.update_tile(id, &one_bin(0.2)).unwrap();
        m.update_tile(id, &one_bin(0.9)).unwrap();
        let mut trace = vec![m.tile(id).variance[0]];
        for _ in 0..100 * n {
            m.update_tile(id, &one_bin(0.9)).unwrap();
            trace.push(m.tile(id).variance[0]);
        }
        // Rises while the mean is still far from the input, then decays monotonically.
        let peak = trace
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        assert!(trace[peak..].windows(2).all(|w| w[1] <= w[0]));
        assert!(*trace.last().unwrap() < 1e-9);

        // A stream that is constant from the first sample never gains variance.
        let mut m = model(n);
        for _ in 0..10 {
            m.update_tile(id, &one_bin(0.3)).unwrap();
            assert_eq!(m.tile(id).variance, [0.0; BIN_COUNT]);
        }
    }

    #[test]
    fn gate_drops_updates() {
        let mut m = model(4);
        let id = TileId::new(0, 3);
        m.set_training_gate(false, GateReason::Fall, 10);
        assert_eq!(m.update_tile(id, &one_bin(0.5)).unwrap(), UpdateOutcome::Dropped);
        assert!(!m.tile(id).seen);
        assert_eq!(m.dropped_updates(), 1);
        assert_eq!(m.version(), 0);
        m.set_training_gate(false, GateReason::Penalty, 11);
        assert_eq!(m.gate_log().len(), 1);
        m.set_training_gate(true, GateReason::Manual, 12);
        m.set_training_gate(true, GateReason::Manual, 13);
        assert_eq!(m.gate_log().len(), 2);
        assert_eq!(m.update_tile(id, &one_bin(0.5)).unwrap(), UpdateOutcome::Applied);
        assert_eq!(m.gate_log()[1], GateEvent { frame: 12, enabled: true, reason: GateReason::Manual });
    }

    #[test]
    fn snapshot_round_trips() {
        let m = model(20);
        assert_eq!(BackgroundModel::load(m.snapshot().as_bytes()).unwrap(), m);

        let mut m = model(7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let id = TileId::new(rng.random_range(0..2), rng.random_range(0..36));
            m.update_tile(id, &random_histogram(&mut rng)).unwrap();
        }
        m.set_training_gate(false, GateReason::LowConfidence, 77);
        m.update_tile(TileId::new(0, 0), &random_histogram(&mut rng)).unwrap();
        let text = m.snapshot();
        let back = BackgroundModel::load(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.snapshot(), text);
    }

    #[test]
    fn malformed_snapshots_rejected() {
        let mut m = model(20);
        m.update_tile(TileId::new(0, 0), &one_bin(0.3)).unwrap();
        let text = m.snapshot();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(BackgroundModel::load(truncated.as_bytes()), Err(Error::ModelFormat(_))));
        let wrong_version = text.replacen("room-awareness-bgm 1", "room-awareness-bgm 2", 1);
        assert!(matches!(BackgroundModel::load(wrong_version.as_bytes()), Err(Error::ModelFormat(_))));
        assert!(BackgroundModel::load(b"").is_err());
        assert!(BackgroundModel::load(&[0xff, 0xfe]).is_err());
        let extra = format!("{text}tile 0 0 0\n");
        assert!(BackgroundModel::load(extra.as_bytes()).is_err());
    }

    /// Separate evaluation of the two recurrences, one bin at a time.
    fn reference_run(n: f64, xs: &[f64]) -> (f64, f64) {
        let mut mu = xs[0];
        let mut var = 0.0;
        for &x in &xs[1..] {
            let next_var = (1.0 / (n + 1.0)) * (n * var + (n / (n + 1.0)) * (mu - x) * (mu - x));
            mu = (n * mu + x) / (n + 1.0);
            var = next_var;
        }
        (mu, var)
    }

    #[test]
    fn matches_reference_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = model(20);
        let id = TileId::new(1, 1);
        let seq: Vec<ColourHistogram> = (0..1000).map(|_| random_histogram(&mut rng)).collect();
        for h in &seq {
            m.update_tile(id, h).unwrap();
        }
        for b in 0..BIN_COUNT {
            let xs: Vec<f64> = seq.iter().map(|h| h.bins[b]).collect();
            let (mu, var) = reference_run(20.0, &xs);
            assert!((m.tile(id).mean[b] - mu).abs() <= 1e-12);
            assert!((m.tile(id).variance[b] - var).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn means_stay_normalized(seed in any::<u64>(), n in 1u32..50, steps in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = model(n);
            let id = TileId::new(0, 0);
            for _ in 0..steps {
                m.update_tile(id, &random_histogram(&mut rng)).unwrap();
                let t = m.tile(id);
                prop_assert!((t.mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(t.variance.iter().all(|v| *v >= 0.0));
            }
        }

        #[test]
        fn geometric_decay_bound(seed in any::<u64>(), n in 1u32..40, k in 1usize..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = model(n);
            let id = TileId::new(0, 0);
            let start = random_histogram(&mut rng);
            let target = random_histogram(&mut rng);
            m.update_tile(id, &start).unwrap();
            for _ in 0..k {
                m.update_tile(id, &target).unwrap();
            }
            let ratio = (f64::from(n) / f64::from(n + 1)).powi(k as i32);
            for b in 0..BIN_COUNT {
                let bound = ratio * (start.bins[b] - target.bins[b]).abs() + 1e-12;
                prop_assert!((m.tile(id).mean[b] - target.bins[b]).abs() <= bound);
            }
        }

        #[test]
        fn closed_gate_never_updates(ops in proptest::collection::vec((any::<bool>(), 0usize..36), 1..100)) {
            let mut m = model(5);
            let h = one_bin(0.4);
            for (frame, (enabled, col)) in ops.into_iter().enumerate() {
                m.set_training_gate(enabled, GateReason::Manual, frame as u64);
                let before = m.clone();
                let outcome = m.update_tile(TileId::new(0, col), &h).unwrap();
                if enabled {
                    prop_assert_eq!(outcome, UpdateOutcome::Applied);
                    prop_assert_eq!(m.version(), before.version() + 1);
                } else {
                    prop_assert_eq!(outcome, UpdateOutcome::Dropped);
                    prop_assert_eq!(&m.tiles, &before.tiles);
                    prop_assert_eq!(m.version(), before.version());
                }
            }
        }
    }
}
