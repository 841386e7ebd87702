//! Job-shop scheduling: instance files, semi-active decoding and makespan.
//!
//! Instance format: `#` starts a comment line and blank lines are skipped.
//! The first remaining line is `n_jobs n_machines`; then one line per job with
//! `2 * n_machines` integers, alternating machine id and duration, listing the
//! job's operations in processing order.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::ea::{Gene, GenomeShape, Problem};
use crate::{Error, IslandRng, Result};

pub type Time = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instance parse error at line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operation {
    pub machine: usize,
    pub duration: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobShopInstance {
    n_jobs: usize,
    n_machines: usize,
    /// `ops[j][k]` is the k-th operation of job j.
    ops: Vec<Vec<Operation>>,
}

/// Start times of every operation plus the resulting makespan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// `start[j][k]` is the start of the k-th operation of job j.
    pub start: Vec<Vec<Time>>,
    pub makespan: Time,
}

impl JobShopInstance {
    /// Builds an instance, validating that every job visits each machine once.
    pub fn new(ops: Vec<Vec<Operation>>) -> Result<Self> {
        let n_jobs = ops.len();
        let n_machines = ops.first().map_or(0, Vec::len);
        if n_jobs == 0 || n_machines == 0 {
            return Err(Error::Argument("instance needs at least one job and one machine".into()));
        }
        for (j, job) in ops.iter().enumerate() {
            check_job(job, n_machines).map_err(|m| Error::Argument(format!("job {j}: {m}")))?;
        }
        Ok(Self { n_jobs, n_machines, ops })
    }

    pub fn n_jobs(&self) -> usize {
        self.n_jobs
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    pub fn ops(&self) -> &[Vec<Operation>] {
        &self.ops
    }

    pub fn shape(&self) -> GenomeShape {
        GenomeShape::new(self.n_jobs, self.n_machines)
    }

    /// max(longest job, most loaded machine); no schedule can beat it.
    pub fn lower_bound(&self) -> Time {
        let job_bound = self
            .ops
            .iter()
            .map(|job| job.iter().map(|o| o.duration).sum::<Time>())
            .max()
            .unwrap_or(0);
        let mut load = vec![0; self.n_machines];
        for op in self.ops.iter().flatten() {
            load[op.machine] += op.duration;
        }
        job_bound.max(load.into_iter().max().unwrap_or(0))
    }

    /// Renders the instance in the file format accepted by [`parse_instance`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_jobs, self.n_machines);
        for job in &self.ops {
            let row: Vec<String> = job.iter().map(|o| format!("{} {}", o.machine, o.duration)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    /// Random instance: each job visits machines in a uniformly random order
    /// with durations drawn uniformly from `durations`.
    pub fn random(
        n_jobs: usize,
        n_machines: usize,
        durations: std::ops::RangeInclusive<Time>,
        rng: &mut IslandRng,
    ) -> Result<Self> {
        let ops = (0..n_jobs)
            .map(|_| {
                let mut machines: Vec<usize> = (0..n_machines).collect();
                machines.shuffle(rng);
                machines
                    .into_iter()
                    .map(|machine| Operation { machine, duration: rng.gen_range(durations.clone()) })
                    .collect()
            })
            .collect();
        Self::new(ops)
    }
}

fn check_job(job: &[Operation], n_machines: usize) -> std::result::Result<(), String> {
    if job.len() != n_machines {
        return Err(format!("expected {n_machines} operations, found {}", job.len()));
    }
    let mut seen = vec![false; n_machines];
    for op in job {
        if op.machine >= n_machines {
            return Err(format!("machine id {} out of range 0..{n_machines}", op.machine));
        }
        if std::mem::replace(&mut seen[op.machine], true) {
            return Err(format!("machine {} visited twice", op.machine));
        }
    }
    Ok(())
}

pub fn parse_instance(text: &str) -> Result<JobShopInstance, ParseError> {
    let err = |line: usize, message: String| ParseError { line, message };
    let eof = text.lines().count().max(1);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or_else(|| err(eof, "missing header".into()))?;
    let dims = parse_ints(header, header_line)?;
    let (n_jobs, n_machines) = match dims[..] {
        [j, m] if j > 0 && m > 0 => (j as usize, m as usize),
        _ => {
            return Err(err(
                header_line,
                format!("header must be two positive integers \"n_jobs n_machines\", got {header:?}"),
            ))
        }
    };

    let mut ops = Vec::with_capacity(n_jobs);
    for job in 0..n_jobs {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| err(eof, format!("expected {n_jobs} job lines, found {job}")))?;
        let values = parse_ints(line, line_no)?;
        if values.len() != 2 * n_machines {
            return Err(err(
                line_no,
                format!("expected {} integers for {n_machines} operations, found {}", 2 * n_machines, values.len()),
            ));
        }
        let row: Vec<Operation> = values
            .chunks_exact(2)
            .map(|pair| Operation { machine: pair[0] as usize, duration: pair[1] })
            .collect();
        check_job(&row, n_machines).map_err(|m| err(line_no, m))?;
        ops.push(row);
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(err(line_no, format!("unexpected data after {n_jobs} job lines")));
    }
    Ok(JobShopInstance { n_jobs, n_machines, ops })
}

fn parse_ints(line: &str, line_no: usize) -> Result<Vec<u64>, ParseError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<u64>().map_err(|_| ParseError {
                line: line_no,
                message: format!("expected a non-negative integer, found {tok:?}"),
            })
        })
        .collect()
}

/// Semi-active decoding: the t-th occurrence of job j in the genome schedules
/// operation t of job j at the earliest time both the job and its machine are
/// free.
pub fn decode(genome: &[Gene], instance: &JobShopInstance) -> Result<Schedule> {
    let mut start = vec![vec![0; instance.n_machines]; instance.n_jobs];
    let makespan = simulate(genome, instance, |job, k, t| start[job][k] = t)?;
    Ok(Schedule { start, makespan })
}

/// Makespan of the semi-active schedule of `genome`.
pub fn evaluate(genome: &[Gene], instance: &JobShopInstance) -> Result<Time> {
    simulate(genome, instance, |_, _, _| {})
}

fn simulate(
    genome: &[Gene],
    instance: &JobShopInstance,
    mut record: impl FnMut(usize, usize, Time),
) -> Result<Time> {
    instance.shape().check(genome)?;
    let mut next_op = vec![0usize; instance.n_jobs];
    let mut job_ready = vec![0; instance.n_jobs];
    let mut machine_ready = vec![0; instance.n_machines];
    let mut makespan = 0;
    for &gene in genome {
        let job = gene as usize;
        let k = next_op[job];
        next_op[job] += 1;
        let op = instance.ops[job][k];
        let start = job_ready[job].max(machine_ready[op.machine]);
        let end = start + op.duration;
        record(job, k, start);
        job_ready[job] = end;
        machine_ready[op.machine] = end;
        makespan = makespan.max(end);
    }
    Ok(makespan)
}

pub fn random_genome(instance: &JobShopInstance, rng: &mut IslandRng) -> Vec<Gene> {
    instance.shape().random_genome(rng)
}

impl Problem for JobShopInstance {
    fn genome_shape(&self) -> GenomeShape {
        self.shape()
    }

    fn evaluate(&self, genome: &[Gene]) -> Result<f64> {
        evaluate(genome, self).map(|t| t as f64)
    }
}
