//! Run reports and their CSV files.
//!
//! A report directory holds:
//!
//! - `trace.csv`: one row per island per generation per repetition.
//! - `repetitions.csv`: best fitness, evaluations and wall time per repetition.
//! - `summary.csv`: aggregates across repetitions.
//! - `migrations.csv`: one row per integrated packet.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, IslandId, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const REPETITIONS_FILE: &str = "repetitions.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MIGRATIONS_FILE: &str = "migrations.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub repetition: usize,
    pub island: IslandId,
    pub generation: u64,
    pub best: f64,
    pub avg: f64,
    pub dev: f64,
    pub evaluations: u64,
    /// Immigrants integrated right after this generation's stats.
    pub migrated_in: usize,
    pub wall_ms: u64,
}

/// A packet integrated by `destination` after generation `generation`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationEvent {
    pub repetition: usize,
    pub destination: IslandId,
    pub generation: u64,
    pub source: IslandId,
    /// Source generation when the packet was posted.
    pub epoch: u64,
    pub immigrants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub repetition: usize,
    pub best_fitness: f64,
    pub best_island: IslandId,
    pub total_evaluations: u64,
    pub wall_ms: u64,
    /// Islands that disconnected or failed, `;`-separated.
    #[serde(with = "semicolon_list")]
    pub failed_islands: Vec<IslandId>,
    /// Protocol anomalies observed during the repetition, `;`-separated.
    #[serde(with = "semicolon_list")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub repetitions: usize,
    pub mean_best: f64,
    pub min_best: f64,
    pub mean_wall_ms: f64,
    pub mean_total_evaluations: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<GenerationRow>,
    pub repetitions: Vec<RepetitionSummary>,
    pub migrations: Vec<MigrationEvent>,
}

impl RunReport {
    /// Aggregates over the repetition summaries.
    pub fn summary(&self) -> Summary {
        let n = self.repetitions.len();
        let mean = |f: &dyn Fn(&RepetitionSummary) -> f64| {
            if n == 0 {
                0.0
            } else {
                self.repetitions.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Summary {
            repetitions: n,
            mean_best: mean(&|r| r.best_fitness),
            min_best: self.repetitions.iter().map(|r| r.best_fitness).fold(f64::INFINITY, f64::min),
            mean_wall_ms: mean(&|r| r.wall_ms as f64),
            mean_total_evaluations: mean(&|r| r.total_evaluations as f64),
        }
    }

    /// Rows of one repetition and island, in generation order.
    pub fn island_rows(&self, repetition: usize, island: IslandId) -> Vec<&GenerationRow> {
        self.rows.iter().filter(|r| r.repetition == repetition && r.island == island).collect()
    }

    /// Recomputes each repetition's best fitness, best island and total
    /// evaluations from the raw rows and checks them against the summaries.
    pub fn verify(&self) -> Result<()> {
        let mut best: BTreeMap<usize, (f64, IslandId)> = BTreeMap::new();
        let mut last_evals: BTreeMap<(usize, IslandId), u64> = BTreeMap::new();
        for row in &self.rows {
            let entry = best.entry(row.repetition).or_insert((f64::INFINITY, row.island));
            if row.best < entry.0 || (row.best == entry.0 && row.island < entry.1) {
                *entry = (row.best, row.island);
            }
            let evals = last_evals.entry((row.repetition, row.island)).or_insert(0);
            if row.evaluations < *evals {
                return Err(Error::State(format!(
                    "evaluations decrease for repetition {} island {} at generation {}",
                    row.repetition, row.island, row.generation
                )));
            }
            *evals = row.evaluations;
        }
        for rep in &self.repetitions {
            let Some(&(fitness, island)) = best.get(&rep.repetition) else {
                return Err(Error::State(format!("repetition {} has no rows", rep.repetition)));
            };
            let total: u64 =
                last_evals.iter().filter(|((r, _), _)| *r == rep.repetition).map(|(_, &e)| e).sum();
            if fitness != rep.best_fitness || island != rep.best_island || total != rep.total_evaluations {
                return Err(Error::State(format!(
                    "repetition {} summary (best {} on island {}, {} evaluations) disagrees with rows \
                     (best {fitness} on island {island}, {total} evaluations)",
                    rep.repetition, rep.best_fitness, rep.best_island, rep.total_evaluations
                )));
            }
        }
        if best.len() != self.repetitions.len() {
            return Err(Error::State("rows reference repetitions without a summary".into()));
        }
        Ok(())
    }

    /// Builds the repetition summary from this report's rows of `repetition`.
    pub fn summarize_repetition(
        &self,
        repetition: usize,
        wall_ms: u64,
        failed_islands: Vec<IslandId>,
        flags: Vec<String>,
    ) -> Result<RepetitionSummary> {
        let rows: Vec<&GenerationRow> = self.rows.iter().filter(|r| r.repetition == repetition).collect();
        let mut best: Option<&GenerationRow> = None;
        let mut last: BTreeMap<IslandId, u64> = BTreeMap::new();
        for &row in &rows {
            if best.is_none_or(|b| row.best < b.best || (row.best == b.best && row.island < b.island)) {
                best = Some(row);
            }
            last.insert(row.island, row.evaluations);
        }
        let best = best.ok_or_else(|| Error::State(format!("repetition {repetition} produced no statistics")))?;
        Ok(RepetitionSummary {
            repetition,
            best_fitness: best.best,
            best_island: best.island,
            total_evaluations: last.values().sum(),
            wall_ms,
            failed_islands,
            flags,
        })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join(TRACE_FILE), &self.rows)?;
        write_csv(&dir.join(REPETITIONS_FILE), &self.repetitions)?;
        write_csv(&dir.join(SUMMARY_FILE), std::slice::from_ref(&self.summary()))?;
        write_csv(&dir.join(MIGRATIONS_FILE), &self.migrations)
    }

    /// Reads the raw files written by [`RunReport::write`]; the summary file
    /// is not read since it is derived.
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self {
            rows: read_csv(&dir.join(TRACE_FILE))?,
            repetitions: read_csv(&dir.join(REPETITIONS_FILE))?,
            migrations: read_csv(&dir.join(MIGRATIONS_FILE))?,
        })
    }
}

pub fn read_summary(dir: impl AsRef<Path>) -> Result<Summary> {
    read_csv::<Summary>(&dir.as_ref().join(SUMMARY_FILE))?
        .into_iter()
        .next()
        .ok_or_else(|| Error::State("empty summary file".into()))
}

/// Column names of a CSV file, in serialization order.
pub trait CsvTable {
    const COLUMNS: &'static [&'static str];
}

impl CsvTable for GenerationRow {
    const COLUMNS: &'static [&'static str] =
        &["repetition", "island", "generation", "best", "avg", "dev", "evaluations", "migrated_in", "wall_ms"];
}

impl CsvTable for MigrationEvent {
    const COLUMNS: &'static [&'static str] =
        &["repetition", "destination", "generation", "source", "epoch", "immigrants"];
}

impl CsvTable for RepetitionSummary {
    const COLUMNS: &'static [&'static str] =
        &["repetition", "best_fitness", "best_island", "total_evaluations", "wall_ms", "failed_islands", "flags"];
}

impl CsvTable for Summary {
    const COLUMNS: &'static [&'static str] =
        &["repetitions", "mean_best", "min_best", "mean_wall_ms", "mean_total_evaluations"];
}

/// Serializes `rows` as CSV with a header line, even when empty.
pub fn write_csv<T: Serialize + CsvTable>(path: &Path, rows: &[T]) -> Result<()> {
    std::fs::write(path, csv_bytes(rows)?)?;
    Ok(())
}

pub fn csv_bytes<T: Serialize + CsvTable>(rows: &[T]) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(T::COLUMNS).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().map(|r| r.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

mod semicolon_list {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<S: Serializer, T: Display>(items: &[T], s: S) -> Result<S::Ok, S::Error> {
        let joined: Vec<String> = items.iter().map(ToString::to_string).collect();
        s.serialize_str(&joined.join(";"))
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
    where
        D: Deserializer<'de>,
        T: FromStr,
        T::Err: Display,
    {
        let text = String::deserialize(d)?;
        text.split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}
