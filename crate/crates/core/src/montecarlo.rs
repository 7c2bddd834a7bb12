//! Round-by-round simulation of the adaptive protocol.
//!
//! Trials are split into fixed-size batches. Batch `i` draws from the ChaCha8
//! stream `(stream_key << 32) | i` of the master seed, and batch results are
//! reduced in index order with integer accumulators, so estimates are
//! bit-identical whether batches run on one thread or many.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::device::DerivedProbs;
use crate::error::{self, Result};

pub const BATCH_SIZE: u64 = 4096;

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability validated on entry")
        .sample(rng)
}

/// How a pulse gets heralded at the node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Herald {
    /// One Bernoulli trial per pulse with the product probability.
    Collapsed(f64),
    /// Source emission, channel survival and QND success drawn as separate stages.
    Staged {
        eta_s: f64,
        eta_half: f64,
        p_qnd: f64,
    },
}

impl From<f64> for Herald {
    fn from(p: f64) -> Self {
        Herald::Collapsed(p)
    }
}

impl Herald {
    pub fn probability(&self) -> f64 {
        match *self {
            Herald::Collapsed(p) => p,
            Herald::Staged {
                eta_s,
                eta_half,
                p_qnd,
            } => eta_s * eta_half * p_qnd,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Herald::Collapsed(p) => error::probability("p_herald", p).map(|_| ()),
            Herald::Staged {
                eta_s,
                eta_half,
                p_qnd,
            } => {
                error::probability("eta_s", eta_s)?;
                error::probability("eta_half", eta_half)?;
                error::probability("p_qnd", p_qnd)?;
                Ok(())
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> u64 {
        match *self {
            Herald::Collapsed(p) => binomial(m, p, rng),
            Herald::Staged {
                eta_s,
                eta_half,
                p_qnd,
            } => {
                let emitted = binomial(m, eta_s, rng);
                let arrived = binomial(emitted, eta_half, rng);
                binomial(arrived, p_qnd, rng)
            }
        }
    }
}

/// Error process on sifted pairs: an accepted event is a dark-count
/// coincidence with probability `dark_fraction` (random bit), otherwise a
/// signal event flipped with probability `misalignment`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairErrors {
    pub misalignment: f64,
    pub dark_fraction: f64,
}

impl PairErrors {
    pub const NONE: PairErrors = PairErrors {
        misalignment: 0.0,
        dark_fraction: 0.0,
    };

    pub fn from_derived(d: &DerivedProbs) -> Self {
        Self {
            misalignment: d.misalignment,
            dark_fraction: d.dark_fraction,
        }
    }

    fn validate(&self) -> Result<()> {
        error::probability("misalignment", self.misalignment)?;
        error::probability("dark_fraction", self.dark_fraction)?;
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        if rng.random_bool(self.dark_fraction) {
            rng.random_bool(0.5)
        } else {
            rng.random_bool(self.misalignment)
        }
    }
}

/// What happened in one multiplexed round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub k_alice: u64,
    pub k_bob: u64,
    pub pairs_formed: u64,
    pub n_sifted: u64,
    /// One entry per sifted pair; `true` marks a bit error.
    pub error_flags: Vec<bool>,
}

/// Steps (i)-(vi) of one round: herald each party's pulses, pair the
/// surplus-free minimum, run the Bell measurements and draw bit errors.
/// Unpaired heralded photons are discarded.
pub fn simulate_round<R: Rng + ?Sized>(
    m: u64,
    herald: impl Into<Herald>,
    p_bm: f64,
    errors: &PairErrors,
    rng: &mut R,
) -> Result<RoundOutcome> {
    let herald = herald.into();
    check_inputs(m, &herald, p_bm)?;
    errors.validate()?;
    let k_alice = herald.sample(m, rng);
    let k_bob = herald.sample(m, rng);
    let pairs_formed = k_alice.min(k_bob);
    let n_sifted = binomial(pairs_formed, p_bm, rng);
    let error_flags = (0..n_sifted).map(|_| errors.draw(rng)).collect();
    Ok(RoundOutcome {
        k_alice,
        k_bob,
        pairs_formed,
        n_sifted,
        error_flags,
    })
}

fn check_inputs(m: u64, herald: &Herald, p_bm: f64) -> Result<()> {
    error::at_least_one("m", m)?;
    herald.validate()?;
    error::probability("p_bm", p_bm)?;
    Ok(())
}

fn sifted_count<R: Rng + ?Sized>(m: u64, herald: &Herald, p_bm: f64, rng: &mut R) -> u64 {
    let pairs = herald.sample(m, rng).min(herald.sample(m, rng));
    binomial(pairs, p_bm, rng)
}

/// Trial count, seed and execution mode of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimSettings {
    pub trials: u64,
    pub seed: u64,
    /// Selects a disjoint family of streams, e.g. one per validation grid point.
    pub stream_key: u32,
    pub parallel: bool,
}

impl SimSettings {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            stream_key: 0,
            parallel: true,
        }
    }

    pub fn sequential(self) -> Self {
        Self {
            parallel: false,
            ..self
        }
    }

    pub fn with_stream_key(self, stream_key: u32) -> Self {
        Self { stream_key, ..self }
    }

    fn batch_rng(&self, batch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.stream_key as u64) << 32) | batch);
        rng
    }

    /// Runs `work(rng, trials_in_batch)` per batch, results in batch order.
    fn run_batches<T, F>(&self, work: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
    {
        error::at_least_one("trials", self.trials)?;
        let batches = self.trials.div_ceil(BATCH_SIZE);
        if batches > u32::MAX as u64 {
            return Err(crate::Error::TooLarge {
                m: self.trials,
                limit: u32::MAX as u64 * BATCH_SIZE,
            });
        }
        let one = |b: u64| {
            let size = BATCH_SIZE.min(self.trials - b * BATCH_SIZE);
            work(&mut self.batch_rng(b), size)
        };
        Ok(if self.parallel {
            (0..batches).into_par_iter().map(one).collect()
        } else {
            (0..batches).map(one).collect()
        })
    }
}

/// Monte Carlo estimate of a mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// Standard error from the unbiased sample variance; 0 when degenerate.
    pub std_error: f64,
    /// Rounds simulated.
    pub trials: u64,
    /// Observations the mean is taken over (rounds, or sifted pairs for error rates).
    pub samples: u64,
    pub seed: u64,
    /// Fewer than two observations, so no spread could be measured.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: u128,
    sum_sq: u128,
}

impl Moments {
    fn push(&mut self, x: u64) {
        self.n += 1;
        self.sum += x as u128;
        self.sum_sq += (x as u128) * (x as u128);
    }

    fn merge(self, other: Moments) -> Moments {
        Moments {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    fn estimate(&self, trials: u64, seed: u64) -> SimEstimate {
        let n = self.n;
        let mean = if n == 0 {
            0.0
        } else {
            self.sum as f64 / n as f64
        };
        let degenerate = n < 2;
        let std_error = if degenerate {
            0.0
        } else {
            // n * sum_sq - sum^2 is exact in integers and never negative.
            let spread = n as u128 * self.sum_sq - self.sum * self.sum;
            let variance = spread as f64 / (n as f64 * (n - 1) as f64);
            (variance / n as f64).sqrt()
        };
        SimEstimate {
            mean,
            std_error,
            trials,
            samples: n,
            seed,
            degenerate,
        }
    }
}

/// Mean and standard error of the sifted-pair count per round.
pub fn estimate_mean_sifted(
    m: u64,
    herald: impl Into<Herald>,
    p_bm: f64,
    settings: &SimSettings,
) -> Result<SimEstimate> {
    let herald = herald.into();
    check_inputs(m, &herald, p_bm)?;
    let total = settings
        .run_batches(|rng, size| {
            let mut acc = Moments::default();
            for _ in 0..size {
                acc.push(sifted_count(m, &herald, p_bm, rng));
            }
            acc
        })?
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    Ok(total.estimate(settings.trials, settings.seed))
}

/// Histogram of sifted-pair counts over all rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDist {
    pub counts: Vec<u64>,
    pub trials: u64,
}

impl EmpiricalDist {
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.trials as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Total-variation distance to a reference distribution of the same support.
    pub fn tv_distance(&self, reference: &[f64]) -> f64 {
        let p = self.probabilities();
        let len = p.len().max(reference.len());
        0.5 * (0..len)
            .map(|i| (p.get(i).unwrap_or(&0.0) - reference.get(i).unwrap_or(&0.0)).abs())
            .sum::<f64>()
    }
}

/// Empirical distribution of sifted pairs per round.
pub fn estimate_sifted_dist(
    m: u64,
    herald: impl Into<Herald>,
    p_bm: f64,
    settings: &SimSettings,
) -> Result<EmpiricalDist> {
    let herald = herald.into();
    check_inputs(m, &herald, p_bm)?;
    let len = usize::try_from(m).ok().and_then(|m| m.checked_add(1));
    let len = match len {
        Some(len) if m <= crate::stats::MAX_DIST_TRIALS => len,
        _ => {
            return Err(crate::Error::TooLarge {
                m,
                limit: crate::stats::MAX_DIST_TRIALS,
            })
        }
    };
    let mut counts = vec![0u64; len];
    for batch in settings.run_batches(|rng, size| {
        let mut local = vec![0u64; len];
        for _ in 0..size {
            local[sifted_count(m, &herald, p_bm, rng) as usize] += 1;
        }
        local
    })? {
        for (c, b) in counts.iter_mut().zip(batch) {
            *c += b;
        }
    }
    Ok(EmpiricalDist {
        counts,
        trials: settings.trials,
    })
}

/// Fraction of sifted pairs carrying a bit error, across all simulated rounds.
///
/// `degenerate` is set when fewer than two sifted pairs occurred.
pub fn estimate_error_rate(
    m: u64,
    derived: &DerivedProbs,
    settings: &SimSettings,
) -> Result<SimEstimate> {
    let herald = Herald::Collapsed(derived.p_herald);
    let errors = PairErrors::from_derived(derived);
    check_inputs(m, &herald, derived.p_bm)?;
    errors.validate()?;
    let total = settings
        .run_batches(|rng, size| {
            let mut acc = Moments::default();
            for _ in 0..size {
                let round = simulate_round(m, herald, derived.p_bm, &errors, rng)
                    .expect("inputs validated on entry");
                for flag in round.error_flags {
                    acc.push(flag as u64);
                }
            }
            acc
        })?
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    Ok(total.estimate(settings.trials, settings.seed))
}
