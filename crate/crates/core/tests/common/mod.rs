//! Brute-force oracles shared by the integration suites.

#![allow(dead_code)]

use metagame_core::sweep::{build_grid, AxisSpec, GridSpec, ParameterGrid, PayoffTensor};
use rand::Rng;

/// Profiles from which no unilateral deviation gains more than `tau`.
pub fn brute_nash(t: &PayoffTensor, tau: f64) -> Vec<(usize, usize)> {
    let n = t.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut stable = true;
            for d in 0..n {
                if t.mean_1[d * n + j] > t.mean_1[i * n + j] + tau {
                    stable = false;
                }
                if t.mean_2[i * n + d] > t.mean_2[i * n + j] + tau {
                    stable = false;
                }
            }
            if stable {
                out.push((i, j));
            }
        }
    }
    out
}

/// Profiles whose payoff pair no other profile weakly improves with one strict gain.
pub fn brute_front(t: &PayoffTensor) -> Vec<(usize, usize)> {
    let n = t.n();
    let cells = n * n;
    let mut out = Vec::new();
    for a in 0..cells {
        let dominated = (0..cells).any(|b| {
            let ge = t.mean_1[b] >= t.mean_1[a] && t.mean_2[b] >= t.mean_2[a];
            let gt = t.mean_1[b] > t.mean_1[a] || t.mean_2[b] > t.mean_2[a];
            ge && gt
        });
        if !dominated {
            out.push((a / n, a % n));
        }
    }
    out
}

/// Column-wise condition over player 1's deviations only.
pub fn brute_unilateral_front(t: &PayoffTensor) -> Vec<(usize, usize)> {
    let n = t.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let beaten = (0..n).any(|d| {
                t.mean_1[d * n + j] > t.mean_1[i * n + j] && t.mean_2[d * n + j] >= t.mean_2[i * n + j]
            });
            if !beaten {
                out.push((i, j));
            }
        }
    }
    out
}

/// A grid with 1..=`max_points` values on each axis.
pub fn random_grid<R: Rng>(rng: &mut R, max_points: usize) -> ParameterGrid {
    let mut p = || rng.gen_range(1..=max_points);
    let spec = GridSpec {
        alpha: AxisSpec::new(0.1, 0.9, p()),
        epsilon: AxisSpec::new(0.0, 0.5, p()),
        gamma: AxisSpec::new(0.0, 0.9, p()),
    };
    build_grid(&spec).unwrap()
}

/// Integer-valued payoffs from `0..levels`, so ties are common.
pub fn random_tensor<R: Rng>(rng: &mut R, grid: ParameterGrid, levels: u32) -> PayoffTensor {
    let cells = grid.len() * grid.len();
    let mut draw = || (0..cells).map(|_| rng.gen_range(0..levels) as f64).collect::<Vec<_>>();
    let (m1, m2) = (draw(), draw());
    PayoffTensor::from_means(grid, m1, m2).unwrap()
}

pub fn transpose(m: &[f64], n: usize) -> Vec<f64> {
    (0..n * n).map(|k| m[(k % n) * n + k / n]).collect()
}

/// Two-sample fixtures with hand-computed KS distances. Sample sizes divide
/// a power of two or make every ECDF value 0 or 1, so the distances are
/// exact in binary floating point.
pub fn ks_fixtures() -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    vec![
        (vec![0., 1., 2., 3.], vec![2., 3., 4., 5.], 0.5),
        (vec![0., 0., 0.], vec![6., 6., 6.], 1.0),
        (vec![1., 2., 3.], vec![1., 2., 3.], 0.0),
        (vec![1.], vec![2.], 1.0),
        (vec![1., 2.], vec![2., 3.], 0.5),
        (vec![1., 2., 3., 4.], vec![1., 2., 3., 4., 5., 6., 7., 8.], 0.5),
        (vec![0., 0., 1., 1.], vec![0., 1., 1., 1.], 0.25),
        (vec![3., 3.], vec![1., 2., 3., 4., 5., 6., 7., 8.], 0.625),
        (vec![2., 2., 2., 2.], vec![1., 2., 3., 4.], 0.5),
        (vec![0., 6.], vec![3., 3., 3.], 0.5),
        (vec![1., 1., 1., 2.], vec![1., 2., 2., 2.], 0.5),
        (vec![0.5, 1.5, 2.5, 3.5], vec![1.0, 2.0], 0.5),
        (vec![5., 4., 3., 1.], vec![1., 1., 1., 1.], 0.75),
        (vec![2., 4., 4., 6., 6., 6., 8., 8.], vec![1., 3., 5., 7.], 0.375),
    ]
}

/// Largest ECDF gap, evaluated at every pooled value.
pub fn brute_ks(x: &[f64], y: &[f64]) -> f64 {
    let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
    x.iter().chain(y).map(|&t| (ecdf(x, t) - ecdf(y, t)).abs()).fold(0.0, f64::max)
}
