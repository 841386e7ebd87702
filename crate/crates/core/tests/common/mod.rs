//! Reference implementations used as oracles by the integration tests.
//! Nothing here calls into the crate's scheduling code.

#![allow(dead_code)]

use std::collections::HashMap;

use archipel::ea::{GaConfig, Terminator};
use archipel::exchange::wire::{IslandAssignment, WireMessage};
use archipel::exchange::{Board, MemoryBoard};
use archipel::migration::{Migrant, MigrantPacket, MigrationPolicy, TopologyKind, Trigger};
use proptest::prelude::*;

/// (machine, duration) per operation, per job.
pub type Ops = Vec<Vec<(usize, u64)>>;

pub const T1: &str = "2 2\n0 3 1 2\n1 2 0 4\n";

pub fn t1_ops() -> Ops {
    vec![vec![(0, 3), (1, 2)], vec![(1, 2), (0, 4)]]
}

/// Semi-active makespan computed by an event list: each operation is placed
/// at the earliest time after its job predecessor and after the previous
/// operation placed on its machine.
pub fn reference_starts(genome: &[u32], ops: &Ops) -> Vec<Vec<u64>> {
    let mut next_op = vec![0usize; ops.len()];
    let mut placed: Vec<Vec<(u64, u64)>> = vec![Vec::new(); machine_count(ops)];
    let mut starts: Vec<Vec<u64>> = ops.iter().map(|j| vec![0; j.len()]).collect();
    for &g in genome {
        let j = g as usize;
        let k = next_op[j];
        next_op[j] += 1;
        let (m, d) = ops[j][k];
        let job_ready = if k == 0 { 0 } else { starts[j][k - 1] + ops[j][k - 1].1 };
        let machine_ready = placed[m].iter().map(|&(_, end)| end).max().unwrap_or(0);
        let s = job_ready.max(machine_ready);
        starts[j][k] = s;
        placed[m].push((s, s + d));
    }
    starts
}

pub fn reference_makespan(genome: &[u32], ops: &Ops) -> u64 {
    let starts = reference_starts(genome, ops);
    ops.iter()
        .zip(&starts)
        .flat_map(|(job, s)| job.iter().zip(s).map(|(&(_, d), &st)| st + d))
        .max()
        .unwrap_or(0)
}

pub fn machine_count(ops: &Ops) -> usize {
    ops.iter().flatten().map(|&(m, _)| m + 1).max().unwrap_or(0)
}

/// Checks job precedence, machine exclusivity and the makespan definition.
/// Returns a description of the first violation.
pub fn check_schedule(ops: &Ops, starts: &[Vec<u64>], makespan: u64) -> Result<(), String> {
    let mut by_machine: HashMap<usize, Vec<(u64, u64)>> = HashMap::new();
    let mut latest = 0;
    for (j, job) in ops.iter().enumerate() {
        for (k, &(m, d)) in job.iter().enumerate() {
            let s = starts[j][k];
            if k > 0 && s < starts[j][k - 1] + job[k - 1].1 {
                return Err(format!("job {j} op {k} starts at {s} before its predecessor ends"));
            }
            by_machine.entry(m).or_default().push((s, s + d));
            latest = latest.max(s + d);
        }
    }
    for (m, mut intervals) in by_machine {
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 && w[0].0 < w[0].1 && w[1].0 < w[1].1 {
                return Err(format!("machine {m} runs {:?} and {:?} at once", w[0], w[1]));
            }
        }
    }
    if latest != makespan {
        return Err(format!("makespan {makespan} but last operation ends at {latest}"));
    }
    Ok(())
}

/// Calls `f` on every distinct arrangement of `n_jobs` jobs each repeated
/// `reps` times.
pub fn for_each_genome(n_jobs: usize, reps: usize, mut f: impl FnMut(&[u32])) {
    fn rec(left: &mut [usize], genome: &mut Vec<u32>, len: usize, f: &mut dyn FnMut(&[u32])) {
        if genome.len() == len {
            f(genome);
            return;
        }
        for j in 0..left.len() {
            if left[j] > 0 {
                left[j] -= 1;
                genome.push(j as u32);
                rec(left, genome, len, f);
                genome.pop();
                left[j] += 1;
            }
        }
    }
    let mut left = vec![reps; n_jobs];
    rec(&mut left, &mut Vec::new(), n_jobs * reps, &mut f);
}

/// Minimum makespan over the whole genome space, and the space's size.
pub fn brute_force_optimum(ops: &Ops) -> (u64, usize) {
    let reps = ops[0].len();
    let mut best = u64::MAX;
    let mut count = 0;
    for_each_genome(ops.len(), reps, |g| {
        count += 1;
        best = best.min(reference_makespan(g, ops));
    });
    (best, count)
}

/// Number of distinct genomes: (n·m)! / (m!)^n.
pub fn genome_space(n_jobs: usize, n_machines: usize) -> u128 {
    let fact = |k: usize| (1..=k as u128).product::<u128>();
    fact(n_jobs * n_machines) / fact(n_machines).pow(n_jobs as u32)
}

/// Instance text for `ops` in the plain benchmark format.
pub fn instance_text(ops: &Ops) -> String {
    let mut s = format!("{} {}\n", ops.len(), ops[0].len());
    for job in ops {
        let row: Vec<String> = job.iter().map(|(m, d)| format!("{m} {d}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// A small deterministic instance: every job visits every machine once in
/// an order and with durations drawn from a splitmix sequence.
pub fn toy_ops(n_jobs: usize, n_machines: usize, seed: u64) -> Ops {
    let mut state = seed;
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    (0..n_jobs)
        .map(|_| {
            let mut order: Vec<usize> = (0..n_machines).collect();
            for i in (1..n_machines).rev() {
                order.swap(i, (next() % (i as u64 + 1)) as usize);
            }
            order.into_iter().map(|m| (m, 1 + next() % 9)).collect()
        })
        .collect()
}

pub fn migrant() -> impl Strategy<Value = Migrant> {
    (prop::collection::vec(0u32..20, 0..30), 0.0f64..1e9).prop_map(|(genome, fitness)| Migrant { genome, fitness })
}

pub fn packet_strategy() -> impl Strategy<Value = MigrantPacket> {
    (0usize..64, any::<u64>(), prop::collection::vec(migrant(), 1..4))
        .prop_map(|(source_island, epoch, chromosomes)| MigrantPacket { source_island, epoch, chromosomes })
}

pub fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

prop_compose! {
    fn assignment()(island_id in 0usize..16, n in 1usize..16, ring in any::<bool>(), pop in 2usize..500,
                    pc in 0.0f64..=1.0, pm in 0.0f64..=1.0, gens in any::<u64>(), interval in 1u64..1000,
                    text in ".*", seed in any::<u64>()) -> IslandAssignment {
        IslandAssignment {
            island_id,
            n_islands: n,
            topology: if ring { TopologyKind::Ring } else { TopologyKind::Unrestricted },
            ga: GaConfig {
                population_size: pop,
                crossover_probability: pc,
                mutation_probability: pm,
                terminator: Terminator::GenerationLimit(gens),
                ..GaConfig::default()
            },
            policy: MigrationPolicy::new(Trigger::Interval(interval)),
            instance_text: text,
            seed,
        }
    }
}

pub fn message() -> impl Strategy<Value = WireMessage> {
    prop_oneof![
        ".*".prop_map(|worker_name| WireMessage::Register { worker_name }),
        assignment().prop_map(WireMessage::Config),
        (packet_strategy(), prop::option::of(prop::collection::vec(0usize..64, 0..5))).prop_map(|(p, d)| {
            WireMessage::post(&p, d.as_deref())
        }),
        (0usize..64).prop_map(|island_id| WireMessage::Take { island_id }),
        prop::collection::vec(packet_strategy(), 0..3).prop_map(|packets| WireMessage::Packets { packets }),
        (0usize..64, any::<u64>(), finite(), finite(), finite(), any::<u64>()).prop_map(
            |(island_id, generation, best, avg, dev, evaluations)| WireMessage::Stats {
                island_id,
                generation,
                best,
                avg,
                dev,
                evaluations
            }
        ),
        (0usize..64, prop::collection::vec(any::<u32>(), 0..40), finite(), any::<u64>()).prop_map(
            |(island_id, best_genome, best_fitness, wall_ms)| WireMessage::Done { island_id, best_genome, best_fitness, wall_ms }
        ),
        Just(WireMessage::Ack),
        Just(WireMessage::Shutdown),
        (".*", ".*").prop_map(|(code, message)| WireMessage::error(code, message)),
    ]
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct StressOutcome {
    pub delivered: usize,
    pub lost: usize,
    pub duplicated: usize,
    pub misrouted: usize,
    pub out_of_order: usize,
}

/// `n` islands each post `posts_per_island` packets to rotating destinations
/// while every island keeps taking concurrently.
pub fn board_stress(n: usize, posts_per_island: u64) -> StressOutcome {
    let dest_of = move |src: usize, epoch: u64| (src + 1 + (epoch as usize % (n - 1))) % n;
    let board = MemoryBoard::new(n).open_all();
    let mut received: Vec<Vec<MigrantPacket>> = std::thread::scope(|s| {
        for src in 0..n {
            let board = &board;
            s.spawn(move || {
                for epoch in 0..posts_per_island {
                    let p = MigrantPacket {
                        source_island: src,
                        epoch,
                        chromosomes: vec![Migrant { genome: vec![0], fitness: epoch as f64 }],
                    };
                    board.post(&p, &[dest_of(src, epoch)]).unwrap();
                }
            });
        }
        let takers: Vec<_> = (0..n)
            .map(|island| {
                let board = &board;
                s.spawn(move || {
                    let mut got = Vec::new();
                    for _ in 0..2_000 {
                        got.extend(board.take(island).unwrap());
                        std::thread::yield_now();
                    }
                    got
                })
            })
            .collect();
        takers.into_iter().map(|t| t.join().unwrap()).collect()
    });
    for (island, got) in received.iter_mut().enumerate() {
        got.extend(board.take(island).unwrap());
    }

    let mut out = StressOutcome::default();
    let mut seen: HashMap<(usize, u64), usize> = HashMap::new();
    for (dest, got) in received.iter().enumerate() {
        let mut last_epoch: HashMap<usize, u64> = HashMap::new();
        for p in got {
            out.delivered += 1;
            if dest_of(p.source_island, p.epoch) != dest {
                out.misrouted += 1;
            }
            if last_epoch.insert(p.source_island, p.epoch).is_some_and(|prev| prev >= p.epoch) {
                out.out_of_order += 1;
            }
            *seen.entry((p.source_island, p.epoch)).or_default() += 1;
        }
    }
    out.lost = n * posts_per_island as usize - seen.len();
    out.duplicated = seen.values().map(|&c| c - 1).sum();
    out
}
