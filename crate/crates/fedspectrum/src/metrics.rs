//! Per-round metrics and their CSV form.
//!
//! The CSV schema is fixed: a mandatory header row, floats rendered with
//! 9 significant digits, selected agent ids joined with ';'. Identical runs
//! produce byte-identical files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Training regime a metrics row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Fl,
    Distributed,
    Random,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Fl => write!(f, "fl"),
            Regime::Distributed => write!(f, "distributed"),
            Regime::Random => write!(f, "random"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Regime> {
        match s {
            "fl" => Ok(Regime::Fl),
            "distributed" => Ok(Regime::Distributed),
            "random" => Ok(Regime::Random),
            other => Err(Error::InvalidArgument(format!("unknown regime `{other}`"))),
        }
    }
}

/// Joint reward and per-agent mean from one evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub joint_reward: f64,
    pub per_agent_mean_reward: f64,
}

/// One CSV row: the state of a run at the start of a round, plus that
/// round's communication bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub seed: u64,
    pub regime: Regime,
    pub round: u64,
    pub joint_reward: f64,
    pub per_agent_mean_reward: f64,
    pub selected: Vec<usize>,
    pub bytes_uplinked: u64,
    /// Kept deterministic (always 0) so identical configs produce
    /// byte-identical files; real timings go to stderr.
    pub wall_clock_ms: u64,
}

pub const CSV_HEADER: &str =
    "seed,regime,round,joint_reward,per_agent_mean_reward,selected_agent_ids,bytes_uplinked,wall_clock_ms";

/// Render a float with 9 significant digits.
pub fn fmt_g9(x: f64) -> String {
    format!("{x:.8e}")
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        let ids: Vec<String> = self.selected.iter().map(|id| id.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.seed,
            self.regime,
            self.round,
            fmt_g9(self.joint_reward),
            fmt_g9(self.per_agent_mean_reward),
            ids.join(";"),
            self.bytes_uplinked,
            self.wall_clock_ms,
        )
    }

    fn from_csv_row(row: &str, row_number: usize) -> Result<MetricsRecord> {
        let bad = |reason: &str| Error::MalformedCsv {
            row: row_number,
            reason: reason.into(),
        };
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(&format!("expected 8 fields, got {}", fields.len())));
        }
        let seed = fields[0].parse().map_err(|_| bad("bad seed"))?;
        let regime = fields[1].parse().map_err(|_| bad("bad regime"))?;
        let round = fields[2].parse().map_err(|_| bad("bad round"))?;
        let joint_reward: f64 = fields[3].parse().map_err(|_| bad("bad joint_reward"))?;
        let per_agent_mean_reward = fields[4]
            .parse()
            .map_err(|_| bad("bad per_agent_mean_reward"))?;
        let selected = if fields[5].is_empty() {
            Vec::new()
        } else {
            fields[5]
                .split(';')
                .map(|s| s.parse().map_err(|_| bad("bad selected_agent_ids")))
                .collect::<Result<Vec<usize>>>()?
        };
        let bytes_uplinked = fields[6].parse().map_err(|_| bad("bad bytes_uplinked"))?;
        let wall_clock_ms = fields[7].parse().map_err(|_| bad("bad wall_clock_ms"))?;
        if !joint_reward.is_finite() {
            return Err(bad("joint_reward is not finite"));
        }
        Ok(MetricsRecord {
            seed,
            regime,
            round,
            joint_reward,
            per_agent_mean_reward,
            selected,
            bytes_uplinked,
            wall_clock_ms,
        })
    }
}

/// Write all records to `path` atomically: build in a temp file, rename on
/// success, remove on failure.
pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    let result = (|| -> Result<()> {
        let mut file = fs::File::create(&tmp)?;
        writeln!(file, "{CSV_HEADER}")?;
        for record in records {
            writeln!(file, "{}", record.to_csv_row())?;
        }
        file.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Read a metrics CSV back. Row numbers in errors are 1-based and count the
/// header.
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::MalformedCsv {
                row: 1,
                reason: format!("unexpected header `{header}`"),
            })
        }
        None => {
            return Err(Error::MalformedCsv {
                row: 1,
                reason: "empty file".into(),
            })
        }
    }
    lines
        .filter(|(_, line)| !line.is_empty())
        .map(|(i, line)| MetricsRecord::from_csv_row(line, i + 1))
        .collect()
}
