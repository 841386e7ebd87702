//! Benchmark harness for the migration-interval experiments and the
//! single-island versus distributed comparison.
//!
//! The migration tests run `n_islands` islands with an unrestricted topology
//! and no elitism, once per migration interval plus once without migration.
//! The single-island test runs one island with an evaluation terminator set
//! to the mean total evaluations of the no-migration test, so both spend the
//! same evaluation budget.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ea::{GaConfig, Problem, Terminator};
use crate::migration::{MigrationPolicy, TopologyKind, Trigger};
use crate::roles::local::{local_run_instance, single_island_run};
use crate::roles::report::{write_csv, CsvTable, RunReport};
use crate::roles::ExperimentConfig;
use crate::{Error, Result};

pub const BENCH_SUMMARY_FILE: &str = "bench_summary.csv";
pub const FITNESS_TRACE_FILE: &str = "fitness_trace.csv";
pub const DEVIATION_TRACE_FILE: &str = "deviation_trace.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub n_islands: usize,
    pub population_size: usize,
    pub generations: u64,
    pub repetitions: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    /// Migration intervals to test; a no-migration test is always added.
    pub intervals: Vec<u64>,
    pub base_seed: u64,
    /// Run the distributed tests with islands on concurrent workers.
    pub parallel: bool,
    pub wall_clock: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            n_islands: 4,
            population_size: 100,
            generations: 1000,
            repetitions: 10,
            crossover_probability: 0.95,
            mutation_probability: 0.05,
            intervals: vec![100, 200, 500],
            base_seed: 1,
            parallel: true,
            wall_clock: true,
        }
    }
}

impl BenchSettings {
    fn ga(&self, terminator: Terminator) -> GaConfig {
        GaConfig {
            population_size: self.population_size,
            crossover_probability: self.crossover_probability,
            mutation_probability: self.mutation_probability,
            elitism: false,
            terminator,
            seed: 0,
        }
    }

    /// Experiment for one migration test; `None` disables migration.
    pub fn experiment(&self, interval: Option<u64>) -> ExperimentConfig {
        let policy = match interval {
            Some(n) => MigrationPolicy::new(Trigger::Interval(n)),
            None => MigrationPolicy::never(),
        };
        let mut cfg = ExperimentConfig::new(
            self.n_islands,
            self.ga(Terminator::GenerationLimit(self.generations)),
            policy,
            "",
        );
        cfg.topology = TopologyKind::Unrestricted;
        cfg.repetitions = self.repetitions;
        cfg.base_seed = self.base_seed;
        cfg.wall_clock = self.wall_clock;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub label: String,
    /// Migration interval, `None` for no migration.
    pub interval: Option<u64>,
    pub n_islands: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResults {
    /// One entry per interval, followed by the no-migration test.
    pub migration_tests: Vec<TestResult>,
    pub single_island: TestResult,
    /// Evaluation terminator used by the single-island test.
    pub evaluation_limit: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummaryRow {
    pub test: String,
    pub islands: usize,
    pub repetitions: usize,
    pub mean_best: f64,
    pub min_best: f64,
    pub mean_final_deviation: f64,
    pub mean_total_evaluations: f64,
    pub mean_wall_ms: f64,
}

impl CsvTable for BenchSummaryRow {
    const COLUMNS: &'static [&'static str] = &[
        "test",
        "islands",
        "repetitions",
        "mean_best",
        "min_best",
        "mean_final_deviation",
        "mean_total_evaluations",
        "mean_wall_ms",
    ];
}

pub fn test_label(interval: Option<u64>) -> String {
    match interval {
        Some(n) => format!("interval_{n}"),
        None => "no_migration".to_owned(),
    }
}

/// Runs one migration test.
pub fn run_migration_test<P: Problem>(
    settings: &BenchSettings,
    problem: &P,
    interval: Option<u64>,
) -> Result<TestResult> {
    let cfg = settings.experiment(interval);
    log::info!("running {} ({} repetitions)", test_label(interval), cfg.repetitions);
    let report = local_run_instance(&cfg, problem, settings.parallel)?;
    Ok(TestResult { label: test_label(interval), interval, n_islands: settings.n_islands, report })
}

/// Runs a single island for `evaluation_limit` evaluations per repetition.
pub fn run_single_island<P: Problem>(
    settings: &BenchSettings,
    problem: &P,
    evaluation_limit: u64,
) -> Result<TestResult> {
    let mut cfg = settings.experiment(None);
    cfg.ga.terminator = Terminator::EvaluationLimit(evaluation_limit);
    log::info!("running single island with {evaluation_limit} evaluations");
    let report = single_island_run(&cfg, problem)?;
    Ok(TestResult { label: "single_island".to_owned(), interval: None, n_islands: 1, report })
}

/// All migration tests followed by the evaluation-matched single island.
pub fn run_paper_bench<P: Problem>(settings: &BenchSettings, problem: &P) -> Result<BenchResults> {
    let mut migration_tests = Vec::with_capacity(settings.intervals.len() + 1);
    for &interval in &settings.intervals {
        migration_tests.push(run_migration_test(settings, problem, Some(interval))?);
    }
    let none = run_migration_test(settings, problem, None)?;
    let evaluation_limit = none.report.summary().mean_total_evaluations.ceil() as u64;
    migration_tests.push(none);
    let single_island = run_single_island(settings, problem, evaluation_limit)?;
    Ok(BenchResults { migration_tests, single_island, evaluation_limit })
}

impl TestResult {
    pub fn summary_row(&self) -> BenchSummaryRow {
        let s = self.report.summary();
        BenchSummaryRow {
            test: self.label.clone(),
            islands: self.n_islands,
            repetitions: s.repetitions,
            mean_best: s.mean_best,
            min_best: s.min_best,
            mean_final_deviation: mean_final_deviation(&self.report),
            mean_total_evaluations: s.mean_total_evaluations,
            mean_wall_ms: s.mean_wall_ms,
        }
    }
}

impl BenchResults {
    pub fn tests(&self) -> impl Iterator<Item = &TestResult> {
        self.migration_tests.iter().chain(std::iter::once(&self.single_island))
    }

    pub fn test(&self, label: &str) -> Option<&TestResult> {
        self.tests().find(|t| t.label == label)
    }

    pub fn summary_rows(&self) -> Vec<BenchSummaryRow> {
        self.tests().map(TestResult::summary_row).collect()
    }

    /// Writes every test's report into its own directory plus the summary and
    /// the per-generation mean fitness and deviation curves.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for test in self.tests() {
            test.report.write(dir.join(&test.label))?;
        }
        write_csv(&dir.join(BENCH_SUMMARY_FILE), &self.summary_rows())?;
        self.write_curve(&dir.join(FITNESS_TRACE_FILE), |r| r.avg)?;
        self.write_curve(&dir.join(DEVIATION_TRACE_FILE), |r| r.dev)
    }

    fn write_curve(&self, path: &Path, value: fn(&crate::roles::GenerationRow) -> f64) -> Result<()> {
        let curves: Vec<BTreeMap<u64, f64>> =
            self.migration_tests.iter().map(|t| mean_curve(&t.report, value)).collect();
        let generations: Vec<u64> = curves.first().map(|c| c.keys().copied().collect()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["generation".to_owned()];
        header.extend(self.migration_tests.iter().map(|t| t.label.clone()));
        w.write_record(&header).map_err(io)?;
        for g in generations {
            let mut record = vec![g.to_string()];
            record.extend(curves.iter().map(|c| c.get(&g).map(f64::to_string).unwrap_or_default()));
            w.write_record(&record).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

fn io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Mean of `value` over all repetitions and islands, per generation.
pub fn mean_curve(report: &RunReport, value: impl Fn(&crate::roles::GenerationRow) -> f64) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for row in &report.rows {
        let e = acc.entry(row.generation).or_insert((0.0, 0));
        e.0 += value(row);
        e.1 += 1;
    }
    acc.into_iter().map(|(g, (sum, n))| (g, sum / n as f64)).collect()
}

/// Deviation of each island's last generation, averaged.
pub fn mean_final_deviation(report: &RunReport) -> f64 {
    let mut last: BTreeMap<(usize, usize), (u64, f64)> = BTreeMap::new();
    for row in &report.rows {
        let e = last.entry((row.repetition, row.island)).or_insert((row.generation, row.dev));
        if row.generation >= e.0 {
            *e = (row.generation, row.dev);
        }
    }
    if last.is_empty() {
        return 0.0;
    }
    last.values().map(|&(_, d)| d).sum::<f64>() / last.len() as f64
}

/// Mean of `dev(g + 1) - dev(g)` over every island, repetition and migration
/// generation `g` (positive multiples of `interval` with a following
/// generation). `None` when no such generation exists.
pub fn deviation_spike(report: &RunReport, interval: u64) -> Option<f64> {
    if interval == 0 {
        return None;
    }
    let dev: BTreeMap<(usize, usize, u64), f64> =
        report.rows.iter().map(|r| ((r.repetition, r.island, r.generation), r.dev)).collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&(rep, island, g), &d) in &dev {
        if g > 0 && g % interval == 0 {
            if let Some(&next) = dev.get(&(rep, island, g + 1)) {
                sum += next - d;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobshop::JobShopInstance;
    use crate::roles::GenerationRow;
    use crate::seeded_rng;

    fn row(rep: usize, island: usize, generation: u64, dev: f64) -> GenerationRow {
        GenerationRow { repetition: rep, island, generation, best: 1.0, avg: 2.0, dev, evaluations: generation, migrated_in: 0, wall_ms: 0 }
    }

    #[test]
    fn spike_is_mean_of_post_migration_jumps() {
        let report = RunReport {
            rows: vec![
                row(0, 0, 9, 0.0),
                row(0, 0, 10, 1.0),
                row(0, 0, 11, 4.0),
                row(0, 1, 10, 2.0),
                row(0, 1, 11, 1.0),
                row(0, 0, 20, 0.0),
            ],
            ..Default::default()
        };
        assert_eq!(deviation_spike(&report, 10), Some((3.0 - 1.0) / 2.0));
        assert_eq!(deviation_spike(&report, 7), None);
        assert_eq!(mean_final_deviation(&report), (0.0 + 1.0) / 2.0);
    }

    #[test]
    fn small_bench_produces_five_result_sets() {
        let inst = JobShopInstance::random(5, 4, 1..=20, &mut seeded_rng(3)).unwrap();
        let settings = BenchSettings {
            population_size: 12,
            generations: 20,
            repetitions: 2,
            intervals: vec![5, 10],
            wall_clock: false,
            parallel: false,
            ..Default::default()
        };
        let results = run_paper_bench(&settings, &inst).unwrap();
        let labels: Vec<_> = results.tests().map(|t| t.label.as_str()).collect();
        assert_eq!(labels, ["interval_5", "interval_10", "no_migration", "single_island"]);
        for t in &results.migration_tests {
            assert_eq!(t.report.rows.len(), 2 * 4 * 21);
        }
        let single = results.single_island.summary_row();
        assert!(single.mean_total_evaluations >= results.evaluation_limit as f64);
        for rep in &results.single_island.report.repetitions {
            assert!(rep.total_evaluations >= results.evaluation_limit);
        }

        let dir = tempfile::tempdir().unwrap();
        results.write(dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join(BENCH_SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 5);
        let curve = std::fs::read_to_string(dir.path().join(DEVIATION_TRACE_FILE)).unwrap();
        assert_eq!(curve.lines().next().unwrap(), "generation,interval_5,interval_10,no_migration");
        assert_eq!(curve.lines().count(), 22);
    }
}
