//! Per-scenario outcome table and its CSV form.

use serde::{Deserialize, Serialize};

use crate::controller::CommandKind;
use crate::error::{Error, Result};
use crate::sim::{InitKind, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Flip,
    Purge,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// First flip or purge command and its time in seconds after initialization.
    pub first_signal: Option<(CommandKind, f64)>,
    pub classification: Classification,
    /// The dominant pose at the end of the trial is nearer the truth than its reflection.
    pub correct_after_signal: bool,
    /// Position error in metres and absolute heading error in radians at the end.
    pub final_error: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: ScenarioKind,
    pub init: InitKind,
    pub trials: usize,
    pub flip: usize,
    pub purge: usize,
    pub failed: usize,
    /// Signalled trials whose final dominant pose is correct.
    pub correct: usize,
    pub flip_pct: f64,
    pub purge_pct: f64,
    pub failed_pct: f64,
    pub mean_time: Option<f64>,
    pub mean_time_flip: Option<f64>,
    pub mean_time_purge: Option<f64>,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ReportRow {
    /// Aggregates outcomes; Failed trials are left out of every mean.
    pub fn from_outcomes(scenario: ScenarioKind, init: InitKind, outcomes: &[TrialOutcome]) -> Self {
        let count = |c: Classification| outcomes.iter().filter(|o| o.classification == c).count();
        let (flip, purge, failed) = (
            count(Classification::Flip),
            count(Classification::Purge),
            count(Classification::Failed),
        );
        let times = |kind: Option<CommandKind>| {
            mean(outcomes.iter().filter_map(|o| o.first_signal).filter_map(move |(k, t)| {
                (kind.is_none() || kind == Some(k)).then_some(t)
            }))
        };
        let correct = outcomes
            .iter()
            .filter(|o| o.classification != Classification::Failed && o.correct_after_signal)
            .count();
        let trials = outcomes.len();
        Self {
            scenario,
            init,
            trials,
            flip,
            purge,
            failed,
            correct,
            flip_pct: pct(flip, trials),
            purge_pct: pct(purge, trials),
            failed_pct: pct(failed, trials),
            mean_time: times(None),
            mean_time_flip: times(Some(CommandKind::FlipPose)),
            mean_time_purge: times(Some(CommandKind::PurgeReflection)),
        }
    }

    pub fn signalled(&self) -> usize {
        self.flip + self.purge
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ReportFormat(format!("{} row: {m}", self.scenario.as_str())));
        if self.flip + self.purge + self.failed != self.trials {
            return bad("classification counts do not sum to trials");
        }
        if self.correct > self.signalled() {
            return bad("more correct trials than signalled ones");
        }
        let expected = [
            (self.flip_pct, pct(self.flip, self.trials)),
            (self.purge_pct, pct(self.purge, self.trials)),
            (self.failed_pct, pct(self.failed, self.trials)),
        ];
        if expected.iter().any(|(a, b)| a != b) {
            return bad("percentages disagree with counts");
        }
        if (self.signalled() == 0) != self.mean_time.is_none()
            || (self.flip == 0) != self.mean_time_flip.is_none()
            || (self.purge == 0) != self.mean_time_purge.is_none()
        {
            return bad("mean times present without matching trials");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for row in &self.rows {
            w.serialize(row).expect("report rows always serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::ReportFormat(e.to_string()))?;
        if header.iter().ne(HEADER.iter().copied()) {
            return Err(Error::ReportFormat(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.deserialize::<ReportRow>() {
            let row = rec.map_err(|e| Error::ReportFormat(e.to_string()))?;
            row.check()?;
            rows.push(row);
        }
        Ok(Self { rows })
    }
}

const HEADER: [&str; 13] = [
    "scenario",
    "init",
    "trials",
    "flip",
    "purge",
    "failed",
    "correct",
    "flip_pct",
    "purge_pct",
    "failed_pct",
    "mean_time",
    "mean_time_flip",
    "mean_time_purge",
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(kind: Option<CommandKind>, t: f64, correct: bool) -> TrialOutcome {
        TrialOutcome {
            first_signal: kind.map(|k| (k, t)),
            classification: match kind {
                Some(CommandKind::FlipPose) => Classification::Flip,
                Some(CommandKind::PurgeReflection) => Classification::Purge,
                _ => Classification::Failed,
            },
            correct_after_signal: correct,
            final_error: (0.1, 0.05),
        }
    }

    #[test]
    fn aggregates_counts_and_means() {
        let outcomes = vec![
            outcome(Some(CommandKind::FlipPose), 10.0, true),
            outcome(Some(CommandKind::FlipPose), 20.0, true),
            outcome(Some(CommandKind::PurgeReflection), 33.0, false),
            outcome(None, 0.0, false),
        ];
        let row = ReportRow::from_outcomes(ScenarioKind::HeadOnly, InitKind::ReflectedPose, &outcomes);
        assert_eq!((row.flip, row.purge, row.failed, row.correct), (2, 1, 1, 2));
        assert_eq!((row.flip_pct, row.purge_pct, row.failed_pct), (50.0, 25.0, 25.0));
        assert_eq!(row.mean_time, Some(21.0));
        assert_eq!(row.mean_time_flip, Some(15.0));
        assert_eq!(row.mean_time_purge, Some(33.0));
        assert_eq!(row.flip_pct + row.purge_pct + row.failed_pct, 100.0);
    }

    #[test]
    fn empty_report_round_trips() {
        let r = ExperimentReport::default();
        let text = r.to_csv();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(ExperimentReport::from_csv(&text).unwrap(), r);
    }

    #[test]
    fn rejects_inconsistent_rows() {
        let row = ReportRow::from_outcomes(
            ScenarioKind::PenaltyWalk,
            InitKind::ReflectedPose,
            &[outcome(Some(CommandKind::FlipPose), 3.0, true), outcome(None, 0.0, false)],
        );
        let good = ExperimentReport { rows: vec![row] }.to_csv();
        assert!(ExperimentReport::from_csv(&good).is_ok());
        let bad = good.replace("penalty-walk,reflected,2,1,0,1", "penalty-walk,reflected,3,1,0,1");
        assert_ne!(bad, good);
        assert!(ExperimentReport::from_csv(&bad).is_err());
        assert!(ExperimentReport::from_csv("a,b\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trips(
            rows in proptest::collection::vec(
                proptest::collection::vec((0u8..3, 0.0f64..200.0, any::<bool>()), 1..30),
                0..4,
            )
        ) {
            let kinds = [Some(CommandKind::FlipPose), Some(CommandKind::PurgeReflection), None];
            let report = ExperimentReport {
                rows: rows
                    .iter()
                    .enumerate()
                    .map(|(i, os)| {
                        let outcomes: Vec<_> = os.iter().map(|&(k, t, c)| outcome(kinds[k as usize], t, c)).collect();
                        let scenario = if i % 2 == 0 { ScenarioKind::HeadOnly } else { ScenarioKind::PenaltyWalk };
                        ReportRow::from_outcomes(scenario, InitKind::ReflectedPose, &outcomes)
                    })
                    .collect(),
            };
            for row in &report.rows {
                prop_assert!((row.flip_pct + row.purge_pct + row.failed_pct - 100.0).abs() < 1e-9);
            }
            prop_assert_eq!(ExperimentReport::from_csv(&report.to_csv()).unwrap(), report);
        }
    }
}
