#![allow(dead_code)]

use gammaphi::loss::{GammaFn, PhiFn};
use gammaphi::risk::{extended_risk, ExtendedScore};
use gammaphi::{LossSpec, ProbVector, ScoreVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PRESETS: [&str; 6] = ["logistic", "coherence:1", "pairwise-exp", "savage", "sigmoid", "cex"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_scores<R: Rng>(rng: &mut R, k: usize, spread: f64) -> ScoreVector {
    ScoreVector::new((0..k).map(|_| rng.random_range(-spread..spread)).collect()).unwrap()
}

/// Interior point, or with probability 1/3 a point with some zero entries.
pub fn random_prob<R: Rng>(rng: &mut R, k: usize) -> ProbVector {
    let mut w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    if k > 2 && rng.random_bool(1.0 / 3.0) {
        let zeros = rng.random_range(1..k - 1);
        for _ in 0..zeros {
            let i = rng.random_range(0..k);
            w[i] = 0.0;
        }
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
    }
    ProbVector::normalized(w).unwrap()
}

pub fn random_permutation<R: Rng>(rng: &mut R, k: usize) -> gammaphi::Permutation {
    let mut map: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        map.swap(i, j);
    }
    gammaphi::Permutation::new(map).unwrap()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Central difference of `f` along coordinate `i`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

/// Brute-force Bayes risk: every active prefix of the descending sort of
/// `p`, top class pinned at 0, the rest on a regular grid over `[lo, hi]`.
pub fn grid_bayes(p: &ProbVector, spec: &LossSpec, lo: f64, hi: f64, step: f64) -> f64 {
    let order = p.descending_order();
    let n = ((hi - lo) / step).round() as usize + 1;
    let node = |i: usize| lo + step * i as f64;
    let mut best = f64::INFINITY;
    for l in 1..=spec.k {
        let active = order[..l].to_vec();
        let eval = |alpha: Vec<f64>| {
            let e = ExtendedScore::new(active.clone(), alpha).unwrap();
            extended_risk(p, spec, &e).unwrap().total
        };
        match l {
            1 => best = best.min(eval(vec![0.0])),
            2 => {
                for i in 0..n {
                    best = best.min(eval(vec![0.0, node(i)]));
                }
            }
            3 => {
                use rayon::prelude::*;
                // all classes active: plain risk, evaluated without allocating
                let w: Vec<f64> = order.iter().map(|&c| p[c]).collect();
                let risk = |v: [f64; 3]| -> f64 {
                    (0..3)
                        .filter(|&y| w[y] > 0.0)
                        .map(|y| {
                            let s: f64 = (0..3).filter(|&j| j != y).map(|j| spec.phi.value(v[y] - v[j])).sum();
                            w[y] * spec.gamma.value(s)
                        })
                        .sum()
                };
                let m = (0..n)
                    .into_par_iter()
                    .map(|i| (0..n).map(|j| risk([0.0, node(i), node(j)])).fold(f64::INFINITY, f64::min))
                    .reduce(|| f64::INFINITY, f64::min);
                best = best.min(m);
            }
            _ => panic!("grid oracle supports k <= 3"),
        }
    }
    best
}
