// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded, sharded Monte-Carlo with mergeable sufficient statistics.
//!
//! Worker `w` draws from ChaCha8 seeded with the root seed on stream `w` and
//! handles a contiguous block of trials. Partial statistics are merged in
//! worker order, so results depend only on `(seed, trials, workers)`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, stderr: 0.0 }
    }

    /// `|mean − value| ≤ k·stderr`, with a small absolute floor for
    /// degenerate (zero-variance) estimates.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McPlan {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

impl McPlan {
    pub fn new(trials: u64, seed: u64, workers: usize) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("Monte-Carlo needs at least one trial"));
        }
        if workers == 0 {
            return Err(invalid("Monte-Carlo needs at least one worker"));
        }
        Ok(Self { trials, seed, workers })
    }

    /// Contiguous trial ranges, one per worker, sizes differing by at most one.
    pub fn shards(&self) -> Vec<Range<u64>> {
        let w = self.workers as u64;
        let (base, extra) = (self.trials / w, self.trials % w);
        let mut start = 0;
        (0..w)
            .map(|i| {
                let len = base + u64::from(i < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }
}

pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

/// Runs `step` once per trial across `plan.workers` threads. Each worker
/// starts from `init()` and the partials are merged in worker order.
pub fn run_sharded<A, I, F, M>(plan: &McPlan, init: I, step: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut ChaCha8Rng) + Sync,
    M: Fn(&mut A, A),
{
    let shards = plan.shards();
    let partials: Vec<A> = if plan.workers == 1 {
        let mut acc = init();
        let mut rng = worker_rng(plan.seed, 0);
        for _ in shards[0].clone() {
            step(&mut acc, &mut rng);
        }
        vec![acc]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = shards
                .iter()
                .enumerate()
                .map(|(w, range)| {
                    let (init, step) = (&init, &step);
                    let range = range.clone();
                    scope.spawn(move || {
                        let mut acc = init();
                        let mut rng = worker_rng(plan.seed, w);
                        for _ in range {
                            step(&mut acc, &mut rng);
                        }
                        acc
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("Monte-Carlo worker panicked"))
                .collect()
        })
    };
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("at least one worker");
    for p in iter {
        merge(&mut total, p);
    }
    total
}

/// First and second moments of a real random vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    n: u64,
    sum: Vec<f64>,
    outer: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; dim],
            outer: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        self.n += 1;
        for i in 0..d {
            self.sum[i] += x[i];
            let row = &mut self.outer[i * d..(i + 1) * d];
            for j in 0..d {
                row[j] += x[i] * x[j];
            }
        }
    }

    pub fn merge(&mut self, other: Moments) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.outer.iter_mut().zip(other.outer) {
            *a += b;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let d = self.dim();
        let n = self.n as f64;
        if self.n < 2 {
            return 0.0;
        }
        (self.outer[i * d + j] - self.sum[i] * self.sum[j] / n) / (n - 1.0)
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        let n = self.n as f64;
        Estimate {
            mean: self.sum[i] / n,
            stderr: (self.covariance(i, i).max(0.0) / n).sqrt(),
        }
    }

    /// Delta-method estimate of `g(mean)` given its gradient at the mean.
    pub fn delta(&self, value: f64, grad: &[f64]) -> Estimate {
        let d = self.dim();
        let mut var = 0.0;
        for i in 0..d {
            if grad[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                var += grad[i] * grad[j] * self.covariance(i, j);
            }
        }
        Estimate {
            mean: value,
            stderr: (var.max(0.0) / self.n as f64).sqrt(),
        }
    }

    /// Delta-method estimate of `g(mean)` with a central-difference gradient.
    pub fn delta_fn(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        let mean = self.mean();
        let value = g(&mean);
        let mut grad = vec![0.0; mean.len()];
        let mut probe = mean.clone();
        for i in 0..mean.len() {
            let h = 1e-6 * mean[i].abs().max(1e-3);
            probe[i] = mean[i] + h;
            let up = g(&probe);
            probe[i] = mean[i] - h;
            let down = g(&probe);
            probe[i] = mean[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        self.delta(value, &grad)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
