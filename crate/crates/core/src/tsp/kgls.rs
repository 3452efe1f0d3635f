//! Guided local search: 2-opt on penalty-augmented costs, penalising the
//! tour edge with the highest `score / (1 + penalty)` at every local optimum.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DistanceMatrix, MetaheuristicConfig, RunStats};

/// λ = ALPHA · (first local optimum length) / n
const ALPHA: f64 = 0.1;

/// First-improvement 2-opt on `cost`, to a local optimum.
pub(super) fn two_opt(order: &mut [usize], cost: impl Fn(usize, usize) -> f64) {
    let n = order.len();
    if n < 4 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n - 1 {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (order[i], order[i + 1]);
                let (c, d) = (order[j], order[(j + 1) % n]);
                let delta = cost(a, c) + cost(b, d) - cost(a, b) - cost(c, d);
                if delta < -1e-12 {
                    order[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
    }
}

pub(super) fn run(
    dist: &DistanceMatrix,
    feature: &DistanceMatrix,
    cfg: &MetaheuristicConfig,
    stats: &mut RunStats,
) -> Vec<usize> {
    let n = dist.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    stats.initial_length = dist.cycle_cost(&order);

    two_opt(&mut order, |a, b| dist.get(a, b));
    let mut best = (order.clone(), dist.cycle_cost(&order));
    let lambda = ALPHA * best.1 / n as f64;
    let mut penalty = vec![0.0_f64; n * n];
    stats.record(best.1);

    for _ in 1..cfg.iterations {
        // penalise the max-utility edge(s) of the current local optimum
        let mut max_util = f64::MIN;
        let mut targets: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            let (a, b) = (order[i], order[(i + 1) % n]);
            let util = feature.get(a, b) / (1.0 + penalty[a * n + b]);
            if util > max_util + 1e-12 {
                max_util = util;
                targets.clear();
                targets.push((a, b));
            } else if (util - max_util).abs() <= 1e-12 {
                targets.push((a, b));
            }
        }
        for (a, b) in targets {
            penalty[a * n + b] += 1.0;
            penalty[b * n + a] += 1.0;
        }
        two_opt(&mut order, |a, b| dist.get(a, b) + lambda * penalty[a * n + b]);
        let len = dist.cycle_cost(&order);
        if len < best.1 {
            best = (order.clone(), len);
        }
        stats.record(best.1);
    }
    stats.best_length = best.1;
    best.0
}
