//! Streaming moment accumulators and the deterministic Monte-Carlo driver.

use rayon::prelude::*;

use crate::rng::{self, SimRng};

/// Welford accumulator for a scalar sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Per-component Welford accumulator for a vector sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorMoments {
    components: Vec<Moments>,
}

impl VectorMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            components: vec![Moments::new(); dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.components.len());
        for (m, &v) in self.components.iter_mut().zip(x) {
            m.push(v);
        }
    }

    pub fn merge(&mut self, other: &VectorMoments) {
        for (m, o) in self.components.iter_mut().zip(&other.components) {
            m.merge(o);
        }
    }

    pub fn count(&self) -> u64 {
        self.components.first().map_or(0, Moments::count)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.components.iter().map(Moments::mean).collect()
    }

    /// Trace of the sample covariance.
    pub fn total_variance(&self) -> f64 {
        self.components.iter().map(Moments::variance).sum()
    }

    /// Standard error of the mean vector measured in Euclidean norm:
    /// `sqrt(tr(Cov) / N)`, the typical size of `‖mean − E[x]‖`.
    pub fn stderr_norm(&self) -> f64 {
        let n = self.count();
        if n < 2 {
            0.0
        } else {
            (self.total_variance() / n as f64).sqrt()
        }
    }
}

/// Sample mean and standard error (`sample std / sqrt(k)`) of a slice.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m: Moments = xs.iter().copied().collect();
    (m.mean(), m.stderr())
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Default number of independent chunks a Monte-Carlo run is split into.
pub const MC_CHUNKS: usize = 32;

/// Split `total` Monte-Carlo draws into `MC_CHUNKS` chunks, each with its own
/// rng stream derived from `seed`, evaluate them in parallel and return the
/// per-chunk results in chunk order. The result does not depend on the
/// number of worker threads.
pub fn monte_carlo<T, F>(total: u64, seed: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync,
{
    let chunks = MC_CHUNKS as u64;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = total / chunks + u64::from(c < total % chunks);
            let mut rng = rng::stream(seed, &[rng::purpose::MONTE_CARLO, c]);
            work(count, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25, 0.5];
        let m: Moments = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((m.mean() - mean).abs() < 1e-14);
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_sequential() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let all: Moments = xs.iter().copied().collect();
        let mut a: Moments = xs[..17].iter().copied().collect();
        let b: Moments = xs[17..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.count(), all.count());
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn single_sample_has_zero_stderr() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        use rand::Rng;
        let run = || -> Vec<f64> { monte_carlo(1000, 5, |n, rng| (0..n).map(|_| rng.random::<f64>()).sum()) };
        assert_eq!(run(), run());
        let counts: u64 = monte_carlo(1001, 5, |n, _| n).iter().sum();
        assert_eq!(counts, 1001);
    }
}
