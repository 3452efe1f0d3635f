//! Ant System with best-so-far reinforcement.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DistanceMatrix, MetaheuristicConfig, RunStats};

const ALPHA: f64 = 1.0;
const BETA: f64 = 2.0;
const EVAPORATION: f64 = 0.1;

fn construct<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut visited = vec![false; n];
    let start = rng.random_range(0..n);
    let mut tour = Vec::with_capacity(n);
    tour.push(start);
    visited[start] = true;
    let mut current = start;
    let mut probs = vec![0.0; n];
    while tour.len() < n {
        let mut total = 0.0;
        for j in 0..n {
            probs[j] = if visited[j] { 0.0 } else { weights[current * n + j] };
            total += probs[j];
        }
        let next = if total > 0.0 && total.is_finite() {
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = None;
            for (j, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    if pick < *p {
                        chosen = Some(j);
                        break;
                    }
                    pick -= p;
                }
            }
            chosen.unwrap_or_else(|| (0..n).rev().find(|&j| !visited[j]).expect("unvisited city"))
        } else {
            let open: Vec<usize> = (0..n).filter(|&j| !visited[j]).collect();
            open[rng.random_range(0..open.len())]
        };
        visited[next] = true;
        tour.push(next);
        current = next;
    }
    tour
}

pub(super) fn run(
    dist: &DistanceMatrix,
    desirability: &DistanceMatrix,
    cfg: &MetaheuristicConfig,
    stats: &mut RunStats,
) -> Vec<usize> {
    let n = dist.len();
    let ants = cfg.population_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut pheromone = vec![1.0; n * n];
    let eta: Vec<f64> = (0..n * n)
        .map(|ij| libm::pow(desirability.get(ij / n, ij % n).max(0.0), BETA))
        .collect();
    let mut weights = vec![0.0; n * n];
    let mut best: Option<(Vec<usize>, f64)> = None;

    for _ in 0..cfg.iterations {
        for ij in 0..n * n {
            weights[ij] = libm::pow(pheromone[ij], ALPHA) * eta[ij];
        }
        let mut tours = Vec::with_capacity(ants);
        for _ in 0..ants {
            let tour = construct(&weights, n, &mut rng);
            let len = dist.cycle_cost(&tour);
            match &best {
                None => {
                    stats.initial_length = len;
                    best = Some((tour.clone(), len));
                }
                Some((_, b)) if len < *b => best = Some((tour.clone(), len)),
                _ => {}
            }
            tours.push((tour, len));
        }
        for p in pheromone.iter_mut() {
            *p *= 1.0 - EVAPORATION;
        }
        let best_ref = best.as_ref().expect("at least one ant");
        let deposits = tours.iter().chain(core::iter::once(best_ref));
        for (tour, len) in deposits {
            let amount = 1.0 / len.max(1e-10);
            for i in 0..n {
                let a = tour[i];
                let b = tour[(i + 1) % n];
                pheromone[a * n + b] += amount;
                pheromone[b * n + a] += amount;
            }
        }
        stats.record(best_ref.1);
    }
    let (order, len) = best.expect("iterations >= 1");
    stats.best_length = len;
    order
}
