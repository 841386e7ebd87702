//! Single-island generational genetic algorithm.
//!
//! Genomes are job-repetition permutations: with `n_jobs` jobs that each have
//! `n_machines` operations, a genome holds every job id exactly `n_machines`
//! times. The engine is problem-agnostic beyond that shape; fitness comes from
//! a [`Problem`] and is minimized.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, IslandRng, Result};

pub type Gene = u32;

/// Shape of a job-repetition genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenomeShape {
    pub n_jobs: usize,
    /// Occurrences of each job id in a genome.
    pub n_machines: usize,
}

impl GenomeShape {
    pub fn new(n_jobs: usize, n_machines: usize) -> Self {
        Self { n_jobs, n_machines }
    }

    pub fn len(&self) -> usize {
        self.n_jobs * self.n_machines
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Uniformly shuffled multiset with each job repeated `n_machines` times.
    pub fn random_genome(&self, rng: &mut IslandRng) -> Vec<Gene> {
        let mut genome: Vec<Gene> = (0..self.n_jobs as Gene)
            .flat_map(|job| std::iter::repeat_n(job, self.n_machines))
            .collect();
        genome.shuffle(rng);
        genome
    }

    /// Checks the length and per-job occurrence invariants.
    pub fn check(&self, genome: &[Gene]) -> Result<()> {
        if genome.len() != self.len() {
            return Err(Error::Argument(format!(
                "genome length {} does not match {} jobs x {} machines",
                genome.len(),
                self.n_jobs,
                self.n_machines
            )));
        }
        let mut counts = vec![0usize; self.n_jobs];
        for &gene in genome {
            let job = gene as usize;
            if job >= self.n_jobs {
                return Err(Error::Argument(format!("job id {job} out of range")));
            }
            counts[job] += 1;
        }
        if let Some(job) = counts.iter().position(|&c| c != self.n_machines) {
            return Err(Error::Argument(format!(
                "job {job} occurs {} times, expected {}",
                counts[job], self.n_machines
            )));
        }
        Ok(())
    }

    pub fn is_feasible(&self, genome: &[Gene]) -> bool {
        self.check(genome).is_ok()
    }
}

/// The objective an island optimizes. Lower fitness is better.
pub trait Problem: Sync {
    fn genome_shape(&self) -> GenomeShape;

    fn evaluate(&self, genome: &[Gene]) -> Result<f64>;
}

/// A genome plus its cached fitness. `fitness` is `None` until evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub genome: Vec<Gene>,
    pub fitness: Option<f64>,
}

impl Chromosome {
    pub fn new(genome: Vec<Gene>) -> Self {
        Self { genome, fitness: None }
    }

    pub fn evaluated(genome: Vec<Gene>, fitness: f64) -> Self {
        Self { genome, fitness: Some(fitness) }
    }

    pub fn is_evaluated(&self) -> bool {
        self.fitness.is_some()
    }

    /// Fitness of an evaluated chromosome.
    pub fn fitness(&self) -> Result<f64> {
        self.fitness
            .ok_or_else(|| Error::State("chromosome has not been evaluated".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminator {
    /// Stop after this many generations past generation 0.
    GenerationLimit(u64),
    /// Stop at the first generation boundary where cumulative evaluations
    /// reach this value.
    EvaluationLimit(u64),
}

impl Terminator {
    pub fn is_reached(&self, stats: &IslandStats) -> bool {
        match *self {
            Terminator::GenerationLimit(g) => stats.generation >= g,
            Terminator::EvaluationLimit(e) => stats.evaluations >= e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub elitism: bool,
    pub terminator: Terminator,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            crossover_probability: 0.95,
            mutation_probability: 0.05,
            elitism: false,
            terminator: Terminator::GenerationLimit(1000),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config(format!(
                "population_size must be at least 2, got {}",
                self.population_size
            )));
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Per-generation statistics of one island.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslandStats {
    pub generation: u64,
    pub best_fitness: f64,
    pub average_fitness: f64,
    /// Population standard deviation of fitness (divisor N).
    pub deviation: f64,
    /// Cumulative number of fitness evaluations.
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    members: Vec<Chromosome>,
}

impl Population {
    pub fn new(members: Vec<Chromosome>) -> Self {
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Chromosome] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Chromosome] {
        &mut self.members
    }

    pub fn into_members(self) -> Vec<Chromosome> {
        self.members
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Chromosome> {
        self.members.iter()
    }

    pub fn is_evaluated(&self) -> bool {
        self.members.iter().all(Chromosome::is_evaluated)
    }

    /// Fitness of every member, failing on the first unevaluated one.
    pub fn fitnesses(&self) -> Result<Vec<f64>> {
        self.members.iter().map(Chromosome::fitness).collect()
    }

    /// Index of the lowest-fitness member; ties go to the lowest index.
    pub fn best_index(&self) -> Result<usize> {
        self.extreme_index(|candidate, current| candidate < current)
    }

    /// Index of the highest-fitness member; ties go to the lowest index.
    pub fn worst_index(&self) -> Result<usize> {
        self.extreme_index(|candidate, current| candidate > current)
    }

    fn extreme_index(&self, better: impl Fn(f64, f64) -> bool) -> Result<usize> {
        let fitness = self.fitnesses()?;
        let mut iter = fitness.iter().enumerate();
        let (mut idx, mut value) = match iter.next() {
            Some((i, &f)) => (i, f),
            None => return Err(Error::State("population is empty".into())),
        };
        for (i, &f) in iter {
            if better(f, value) {
                idx = i;
                value = f;
            }
        }
        Ok(idx)
    }
}

impl From<Vec<Chromosome>> for Population {
    fn from(members: Vec<Chromosome>) -> Self {
        Self::new(members)
    }
}

/// Creates `population_size` unevaluated random chromosomes.
pub fn init_population<P: Problem + ?Sized>(
    cfg: &GaConfig,
    problem: &P,
    rng: &mut IslandRng,
) -> Result<Population> {
    cfg.validate()?;
    let shape = problem.genome_shape();
    let members = (0..cfg.population_size)
        .map(|_| Chromosome::new(shape.random_genome(rng)))
        .collect();
    Ok(Population::new(members))
}

/// Evaluates every unevaluated member and returns how many were evaluated.
pub fn evaluate_population<P: Problem + ?Sized>(
    population: &mut Population,
    problem: &P,
) -> Result<u64> {
    let mut count = 0;
    for member in population.members_mut() {
        if member.fitness.is_none() {
            member.fitness = Some(problem.evaluate(&member.genome)?);
            count += 1;
        }
    }
    Ok(count)
}

/// Binary tournament: samples two distinct members and returns the one with
/// lower fitness, the first sampled on ties.
pub fn tournament_select<'a>(
    population: &'a Population,
    rng: &mut IslandRng,
) -> Result<&'a Chromosome> {
    let n = population.len();
    if n < 2 {
        return Err(Error::State(format!(
            "tournament needs at least 2 individuals, population has {n}"
        )));
    }
    let first = rng.gen_range(0..n);
    let mut second = rng.gen_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    let a = &population.members()[first];
    let b = &population.members()[second];
    Ok(if b.fitness()? < a.fitness()? { b } else { a })
}

/// Repairs a genome in place so each job occurs exactly `n_machines` times.
///
/// Scans left to right; a gene whose job already reached its quota becomes
/// the lowest-numbered job still under quota.
pub fn repair(genome: &mut [Gene], shape: GenomeShape) {
    let mut counts = vec![0usize; shape.n_jobs];
    let mut lowest_open = 0usize;
    for gene in genome.iter_mut() {
        let job = *gene as usize;
        if job < shape.n_jobs && counts[job] < shape.n_machines {
            counts[job] += 1;
            continue;
        }
        while lowest_open < shape.n_jobs && counts[lowest_open] >= shape.n_machines {
            lowest_open += 1;
        }
        // A full genome of the right length always leaves a job under quota here.
        debug_assert!(lowest_open < shape.n_jobs);
        *gene = lowest_open as Gene;
        counts[lowest_open] += 1;
    }
}

/// One-point crossover followed by quota repair of both children.
pub fn one_point_crossover(
    a: &Chromosome,
    b: &Chromosome,
    cut: usize,
    shape: GenomeShape,
) -> Result<(Chromosome, Chromosome)> {
    let len = a.genome.len();
    if b.genome.len() != len {
        return Err(Error::Argument(format!(
            "parent lengths differ: {} vs {}",
            len,
            b.genome.len()
        )));
    }
    if cut == 0 || cut >= len {
        return Err(Error::Argument(format!(
            "cut {cut} outside 1..{len} for genome length {len}"
        )));
    }
    let mut first: Vec<Gene> = a.genome[..cut].iter().chain(&b.genome[cut..]).copied().collect();
    let mut second: Vec<Gene> = b.genome[..cut].iter().chain(&a.genome[cut..]).copied().collect();
    repair(&mut first, shape);
    repair(&mut second, shape);
    Ok((Chromosome::new(first), Chromosome::new(second)))
}

/// Reverses the genome segment `[i..=j]` and clears the fitness cache.
pub fn inversion_mutate(c: &mut Chromosome, i: usize, j: usize) -> Result<()> {
    let len = c.genome.len();
    if i > j || j >= len {
        return Err(Error::Argument(format!(
            "inversion bounds ({i}, {j}) invalid for genome length {len}"
        )));
    }
    c.genome[i..=j].reverse();
    c.fitness = None;
    Ok(())
}

/// Statistics over an evaluated population.
pub fn compute_stats(population: &Population, generation: u64, evaluations: u64) -> Result<IslandStats> {
    if population.is_empty() {
        return Err(Error::State("cannot compute stats of an empty population".into()));
    }
    let fitness = population.fitnesses()?;
    let best = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (average, deviation) = if best == worst {
        (best, 0.0)
    } else {
        let n = fitness.len() as f64;
        let mean = fitness.iter().sum::<f64>() / n;
        let var = fitness.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
        (mean.clamp(best, worst), var.sqrt())
    };
    Ok(IslandStats {
        generation,
        best_fitness: best,
        average_fitness: average,
        deviation,
        evaluations,
    })
}

/// Breeds a full replacement population and evaluates the new offspring.
///
/// `previous` is the stats record of `population`; the returned stats carry
/// the next generation number and the updated evaluation count.
pub fn step_generation<P: Problem + ?Sized>(
    population: &Population,
    cfg: &GaConfig,
    problem: &P,
    rng: &mut IslandRng,
    previous: &IslandStats,
) -> Result<(Population, IslandStats)> {
    if !population.is_evaluated() {
        return Err(Error::State("population must be evaluated before breeding".into()));
    }
    let shape = problem.genome_shape();
    let target = cfg.population_size;
    let mut offspring = Vec::with_capacity(target + 1);
    while offspring.len() < target {
        let a = tournament_select(population, rng)?;
        let b = tournament_select(population, rng)?;
        let len = a.genome.len();
        let (c1, c2) = if len >= 2 && rng.gen_bool(cfg.crossover_probability) {
            let cut = rng.gen_range(1..len);
            one_point_crossover(a, b, cut, shape)?
        } else {
            (a.clone(), b.clone())
        };
        offspring.push(c1);
        offspring.push(c2);
    }
    offspring.truncate(target);

    for child in &mut offspring {
        let len = child.genome.len();
        if len > 0 && rng.gen_bool(cfg.mutation_probability) {
            let x = rng.gen_range(0..len);
            let y = rng.gen_range(0..len);
            inversion_mutate(child, x.min(y), x.max(y))?;
        }
    }

    let mut next = Population::new(offspring);
    let evaluated = evaluate_population(&mut next, problem)?;

    if cfg.elitism {
        let elite = population.members()[population.best_index()?].clone();
        let worst = next.worst_index()?;
        next.members_mut()[worst] = elite;
    }

    let stats = compute_stats(&next, previous.generation + 1, previous.evaluations + evaluated)?;
    Ok((next, stats))
}

/// Callback invoked after each generation's statistics are recorded,
/// including generation 0. Migration is implemented through this hook.
pub trait MigrationHook {
    fn after_generation(
        &mut self,
        stats: &IslandStats,
        population: &mut Population,
        rng: &mut IslandRng,
    ) -> Result<()>;
}

/// A hook that never migrates.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoMigration;

impl MigrationHook for NoMigration {
    fn after_generation(&mut self, _: &IslandStats, _: &mut Population, _: &mut IslandRng) -> Result<()> {
        Ok(())
    }
}

impl<H: MigrationHook + ?Sized> MigrationHook for &mut H {
    fn after_generation(
        &mut self,
        stats: &IslandStats,
        population: &mut Population,
        rng: &mut IslandRng,
    ) -> Result<()> {
        (**self).after_generation(stats, population, rng)
    }
}

/// Result of a finished island.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandOutcome {
    /// Best chromosome observed in any recorded generation.
    pub best: Chromosome,
    /// Stats of generations `0..=last`.
    pub trace: Vec<IslandStats>,
}

/// An island's evolving state, stepped one generation at a time.
pub struct Island<'p, P: ?Sized> {
    problem: &'p P,
    config: GaConfig,
    rng: IslandRng,
    population: Population,
    trace: Vec<IslandStats>,
    best: Chromosome,
}

impl<'p, P: Problem + ?Sized> Island<'p, P> {
    /// Builds and evaluates the initial population (generation 0).
    pub fn new(config: GaConfig, problem: &'p P) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        let mut population = init_population(&config, problem, &mut rng)?;
        let evaluations = evaluate_population(&mut population, problem)?;
        let stats = compute_stats(&population, 0, evaluations)?;
        let best = population.members()[population.best_index()?].clone();
        Ok(Self {
            problem,
            config,
            rng,
            population,
            trace: vec![stats],
            best,
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    pub fn stats(&self) -> &IslandStats {
        self.trace.last().expect("trace always holds generation 0")
    }

    pub fn trace(&self) -> &[IslandStats] {
        &self.trace
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn best(&self) -> &Chromosome {
        &self.best
    }

    pub fn is_finished(&self) -> bool {
        self.config.terminator.is_reached(self.stats())
    }

    /// Advances one generation and returns its stats.
    pub fn step(&mut self) -> Result<IslandStats> {
        let previous = *self.stats();
        let (next, stats) =
            step_generation(&self.population, &self.config, self.problem, &mut self.rng, &previous)?;
        self.population = next;
        let idx = self.population.best_index()?;
        if self.population.members()[idx].fitness()? < self.best.fitness()? {
            self.best = self.population.members()[idx].clone();
        }
        self.trace.push(stats);
        Ok(stats)
    }

    /// Latest stats together with mutable access to the population and the
    /// island's generator, for drivers that migrate in separate phases.
    pub fn parts_mut(&mut self) -> (&IslandStats, &mut Population, &mut IslandRng) {
        let stats = self.trace.last().expect("trace always holds generation 0");
        (stats, &mut self.population, &mut self.rng)
    }

    /// Runs `hook` against the latest stats and the current population.
    pub fn run_hook<H: MigrationHook + ?Sized>(&mut self, hook: &mut H) -> Result<()> {
        let stats = *self.stats();
        hook.after_generation(&stats, &mut self.population, &mut self.rng)?;
        if !self.population.is_evaluated() {
            return Err(Error::State("migration hook left unevaluated individuals".into()));
        }
        Ok(())
    }

    pub fn into_outcome(self) -> IslandOutcome {
        IslandOutcome {
            best: self.best,
            trace: self.trace,
        }
    }
}

/// Runs one island until its terminator fires, calling `hook` after every
/// generation (generation 0 included).
pub fn run_island<P, H>(cfg: &GaConfig, problem: &P, hook: &mut H) -> Result<IslandOutcome>
where
    P: Problem + ?Sized,
    H: MigrationHook + ?Sized,
{
    let mut island = Island::new(*cfg, problem)?;
    island.run_hook(hook)?;
    while !island.is_finished() {
        island.step()?;
        island.run_hook(hook)?;
    }
    Ok(island.into_outcome())
}
