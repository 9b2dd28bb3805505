use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::gp::GpModel;
use crate::rng::SeedRng;

/// Anything that yields a posterior mean and variance on the unit cube.
pub trait Surrogate {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> (f64, f64);
}

impl Surrogate for GpModel {
    fn dim(&self) -> usize {
        GpModel::dim(self)
    }

    fn predict(&self, x: &[f64]) -> (f64, f64) {
        GpModel::predict(self, x)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(core::f64::consts::TAU)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Closed-form expected improvement for minimization. Zero variance gives
/// zero.
pub fn expected_improvement(mu: f64, var: f64, f_min: f64) -> f64 {
    if !(var > 0.0) {
        return 0.0;
    }
    let sigma = libm::sqrt(var);
    let d = f_min - mu;
    let z = d / sigma;
    (d * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub candidates: usize,
    pub refine_starts: usize,
    pub refine_rounds: usize,
    /// First coordinate step of the refinement; halved after every round.
    pub initial_step: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            candidates: 1024,
            refine_starts: 4,
            refine_rounds: 20,
            initial_step: 0.125,
        }
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut ps = Vec::with_capacity(count);
    let mut c = 2u64;
    while ps.len() < count {
        if ps.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            ps.push(c);
        }
        c += 1;
    }
    ps
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `n` Halton points (indices 1..=n) shifted by a seeded random offset
/// modulo 1.
pub fn shifted_halton(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let ps = primes(d);
    let mut rng = SeedRng::new(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
    (1..=n as u64)
        .map(|i| {
            ps.iter()
                .zip(&shift)
                .map(|(&p, &s)| {
                    let v = radical_inverse(i, p) + s;
                    if v >= 1.0 {
                        v - 1.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

/// Maximizes EI over the unit cube: scores the quasi-random candidates,
/// then refines the best few coordinate by coordinate. Only strict
/// improvements are taken, so ties go to the earliest candidate.
pub fn propose_next<S: Surrogate + ?Sized>(model: &S, f_min: f64, seed: u64, cfg: &ProposalConfig) -> Vec<f64> {
    let d = model.dim();
    let ei = |x: &[f64]| {
        let (mu, var) = model.predict(x);
        expected_improvement(mu, var, f_min)
    };
    let cands = shifted_halton(cfg.candidates.max(1), d, seed);
    let scores: Vec<f64> = cands.iter().map(|c| ei(c)).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    // Stable: equal scores keep index order.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut best = cands[order[0]].clone();
    let mut best_ei = scores[order[0]];
    for &start in order.iter().take(cfg.refine_starts) {
        let mut x = cands[start].clone();
        let mut fx = scores[start];
        let mut step = cfg.initial_step;
        for _ in 0..cfg.refine_rounds {
            for j in 0..d {
                for sign in [1.0, -1.0] {
                    let v = (x[j] + sign * step).clamp(0.0, 1.0);
                    if v == x[j] {
                        continue;
                    }
                    let old = x[j];
                    x[j] = v;
                    let f = ei(&x);
                    if f > fx {
                        fx = f;
                        break;
                    }
                    x[j] = old;
                }
            }
            step *= 0.5;
        }
        if fx > best_ei {
            best_ei = fx;
            best = x;
        }
    }
    best
}
