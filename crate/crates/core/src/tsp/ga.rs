//! Permutation GA: tournament selection, order crossover, swap mutation,
//! single elite.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DistanceMatrix, MetaheuristicConfig, RunStats};

const TOURNAMENT: usize = 3;
const MUTATION_RATE: f64 = 0.3;

fn tournament<'a, R: Rng>(pop: &'a [(Vec<usize>, f64)], rng: &mut R) -> &'a [usize] {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..TOURNAMENT {
        let challenger = &pop[rng.random_range(0..pop.len())];
        if challenger.1 < best.1 {
            best = challenger;
        }
    }
    &best.0
}

/// Order crossover: copy `p1[lo..=hi]`, fill the rest in `p2` order.
fn order_crossover<R: Rng>(p1: &[usize], p2: &[usize], rng: &mut R) -> Vec<usize> {
    let n = p1.len();
    let mut a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n);
    if a > b {
        core::mem::swap(&mut a, &mut b);
    }
    let mut child = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for i in a..=b {
        child[i] = p1[i];
        used[p1[i]] = true;
    }
    let mut fill = p2.iter().filter(|c| !used[**c]);
    for slot in child.iter_mut() {
        if *slot == usize::MAX {
            *slot = *fill.next().expect("parents are permutations");
        }
    }
    child
}

pub(super) fn run(
    dist: &DistanceMatrix,
    guide: &DistanceMatrix,
    cfg: &MetaheuristicConfig,
    stats: &mut RunStats,
) -> Vec<usize> {
    let n = dist.len();
    let size = cfg.population_size.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut pop: Vec<(Vec<usize>, f64)> = (0..size)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let fit = guide.cycle_cost(&order);
            (order, fit)
        })
        .collect();

    let mut best = pop
        .iter()
        .map(|(o, _)| (o.clone(), dist.cycle_cost(o)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty population");
    stats.initial_length = best.1;

    for _ in 0..cfg.iterations {
        let elite = pop
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("non-empty population");
        let mut next = Vec::with_capacity(size);
        next.push(elite);
        while next.len() < size {
            let p1 = tournament(&pop, &mut rng);
            let p2 = tournament(&pop, &mut rng);
            let mut child = order_crossover(p1, p2, &mut rng);
            if rng.random::<f64>() < MUTATION_RATE {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                child.swap(i, j);
            }
            let fit = guide.cycle_cost(&child);
            next.push((child, fit));
        }
        pop = next;
        for (order, _) in &pop {
            let len = dist.cycle_cost(order);
            if len < best.1 {
                best = (order.clone(), len);
            }
        }
        stats.record(best.1);
    }
    stats.best_length = best.1;
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossover_yields_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1: Vec<usize> = (0..9).collect();
        let p2: Vec<usize> = (0..9).rev().collect();
        for _ in 0..50 {
            let mut child = order_crossover(&p1, &p2, &mut rng);
            child.sort_unstable();
            assert_eq!(child, p1);
        }
    }
}
