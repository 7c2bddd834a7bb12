//! Pairing statistics of the adaptive Bell measurement.
//!
//! Each party sends `m` pulses per round; each pulse is heralded at the middle
//! node independently with probability `p`. The node pairs `min(k_alice, k_bob)`
//! heralded photons and every pair survives the Bell measurement with
//! probability `p_bm`. Everything here is a pure function of `(m, p, p_bm)`.
//!
//! Binomial terms use the direct product form for `m <= 64` and log-gamma
//! anchors with a ratio recurrence above that, so `m` in the millions stays
//! finite. Vector-valued results are capped at [`MAX_DIST_TRIALS`] entries.

use crate::error::{self, Error, Result};

/// Largest `m` for which binomial coefficients are formed as a direct product.
pub const EXACT_PRODUCT_MAX_M: u64 = 64;

/// Largest `m` for which [`g_m`] is evaluated exactly.
pub const EXACT_CORRECTION_MAX_M: u64 = 100_000;

/// Largest `m` for which a full probability vector is materialized.
pub const MAX_DIST_TRIALS: u64 = 10_000_000;

/// Largest `m` accepted by the quadratic-cost [`sifted_pair_dist`].
pub const MAX_SIFTED_TRIALS: u64 = 20_000;

/// Negative `f_{l|m}` values above this are treated as rounding noise.
const NEGATIVE_NOISE_FLOOR: f64 = -1e-15;

/// Multiplexing size together with the per-pulse heralding and
/// Bell-measurement success probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingStatistics {
    m: u64,
    p: f64,
    p_bm: f64,
}

impl PairingStatistics {
    pub fn new(m: u64, p: f64, p_bm: f64) -> Result<Self> {
        Ok(Self {
            m: error::at_least_one("m", m)?,
            p: error::probability("p_herald", p)?,
            p_bm: error::probability("p_bm", p_bm)?,
        })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn p_herald(&self) -> f64 {
        self.p
    }

    pub fn p_bm(&self) -> f64 {
        self.p_bm
    }

    pub fn arrival(&self) -> Result<Vec<f64>> {
        arrival_dist(self.m, self.p)
    }

    pub fn min_pair(&self) -> Result<Vec<f64>> {
        min_pair_dist(self.m, self.p)
    }

    pub fn sifted(&self) -> Result<Vec<f64>> {
        sifted_pair_dist(self.m, self.p, self.p_bm)
    }

    pub fn correction(&self) -> Result<Correction> {
        g_m(self.m, self.p)
    }

    pub fn mean_shifted_pairs(&self) -> Result<f64> {
        mean_shifted_pairs(self.m, self.p, self.p_bm)
    }
}

/// Value of the finite-multiplexing correction `g_m(p)`.
///
/// `approximate` is set when `m` exceeded [`EXACT_CORRECTION_MAX_M`] and the
/// normal approximation was substituted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    pub value: f64,
    pub approximate: bool,
}

fn ln_choose(m: u64, k: u64) -> f64 {
    libm::lgamma(m as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((m - k) as f64 + 1.0)
}

fn choose_product(m: u64, k: u64) -> f64 {
    let k = k.min(m - k);
    (0..k).fold(1.0, |c, i| c * (m - i) as f64 / (i + 1) as f64)
}

/// `C(m,k) p^k (1-p)^(m-k)`.
pub fn binomial_pmf(k: u64, m: u64, p: f64) -> Result<f64> {
    let p = error::probability("p", p)?;
    if k > m {
        return Err(Error::IndexOutOfRange { k, m });
    }
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if k == m { 1.0 } else { 0.0 });
    }
    if m <= EXACT_PRODUCT_MAX_M {
        let q = 1.0 - p;
        return Ok(choose_product(m, k) * p.powi(k as i32) * q.powi((m - k) as i32));
    }
    let ln_pmf = ln_choose(m, k) + k as f64 * p.ln() + (m - k) as f64 * (-p).ln_1p();
    Ok(ln_pmf.exp())
}

fn point_mass(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}

fn check_size(m: u64, limit: u64) -> Result<usize> {
    if m > limit {
        return Err(Error::TooLarge { m, limit });
    }
    Ok(m as usize)
}

/// Arrival distribution `p_{k|m} = B_{k|m}(p_herald)` for `k = 0..=m`.
pub fn arrival_dist(m: u64, p_herald: f64) -> Result<Vec<f64>> {
    let p = error::probability("p_herald", p_herald)?;
    let n = check_size(m, MAX_DIST_TRIALS)?;
    if p == 0.0 {
        return Ok(point_mass(n + 1, 0));
    }
    if p == 1.0 {
        return Ok(point_mass(n + 1, n));
    }
    if m <= EXACT_PRODUCT_MAX_M {
        return (0..=m).map(|k| binomial_pmf(k, m, p)).collect();
    }

    // Anchor at the mode in log space, then walk outward with the ratio
    // B_{k+1}/B_k = (m-k)/(k+1) * p/(1-p). Terms shrink away from the mode so
    // underflow is harmless.
    let odds = p / (1.0 - p);
    let mode = (((m + 1) as f64 * p).floor() as u64).min(m);
    let mut v = vec![0.0; n + 1];
    v[mode as usize] = binomial_pmf(mode, m, p)?;
    for k in mode..m {
        v[k as usize + 1] = v[k as usize] * ((m - k) as f64 / (k + 1) as f64) * odds;
    }
    for k in (1..=mode).rev() {
        v[k as usize - 1] = v[k as usize] * (k as f64 / (m - k + 1) as f64) / odds;
    }
    // The log-gamma anchor carries ~1e-12 relative error that would otherwise
    // scale every entry.
    let total = tails_inward_sum(&v);
    v.iter_mut().for_each(|x| *x /= total);
    Ok(v)
}

/// Sums a unimodal sequence from both tails inward, smallest terms first.
pub(crate) fn tails_inward_sum(v: &[f64]) -> f64 {
    let (mut lo, mut hi) = (0, v.len());
    let mut acc = 0.0;
    while lo < hi {
        if v[lo] <= v[hi - 1] {
            acc += v[lo];
            lo += 1;
        } else {
            hi -= 1;
            acc += v[hi];
        }
    }
    acc
}

/// Distribution of `min(X, Y)` for independent `X, Y ~ Binomial(m, p_herald)`:
/// `f_{l|m} = 2 p_{l|m} sum_{k>=l} p_{k|m} - p_{l|m}^2`.
pub fn min_pair_dist(m: u64, p_herald: f64) -> Result<Vec<f64>> {
    let arrival = arrival_dist(m, p_herald)?;
    let mut upper_tail = 0.0;
    let mut f = vec![0.0; arrival.len()];
    for l in (0..arrival.len()).rev() {
        let a = arrival[l];
        upper_tail += a;
        let value = 2.0 * a * upper_tail - a * a;
        f[l] = if value >= 0.0 {
            value
        } else if value >= NEGATIVE_NOISE_FLOOR {
            0.0
        } else {
            return Err(Error::Inconsistent(format!(
                "f_{{{l}|{m}}} = {value:e} is negative beyond rounding noise"
            )));
        };
    }
    Ok(f)
}

/// Distribution of sifted pairs `P^sif_{n|m} = sum_{l>=n} B_{n|l}(p_bm) f_{l|m}`.
///
/// Cost is quadratic in `m`; inputs above [`MAX_SIFTED_TRIALS`] are rejected.
pub fn sifted_pair_dist(m: u64, p_herald: f64, p_bm: f64) -> Result<Vec<f64>> {
    let p_bm = error::probability("p_bm", p_bm)?;
    check_size(m, MAX_SIFTED_TRIALS)?;
    let f = min_pair_dist(m, p_herald)?;
    if p_bm == 1.0 {
        return Ok(f);
    }
    let mut out = vec![0.0; f.len()];
    for (l, &weight) in f.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let thinned = arrival_dist(l as u64, p_bm)?;
        for (slot, b) in out.iter_mut().zip(thinned) {
            *slot += b * weight;
        }
    }
    Ok(out)
}

/// Finite-multiplexing correction
/// `g_m(p) = p(1-p) [sum_l B_{l|m-1}(p)^2 + sum_{l>=1} B_{l|m-1}(p) B_{l-1|m-1}(p)]`.
///
/// Exact for `m <= EXACT_CORRECTION_MAX_M`; above that the normal
/// approximation [`g_m_approx`] is returned with `approximate = true`.
pub fn g_m(m: u64, p: f64) -> Result<Correction> {
    let m = error::at_least_one("m", m)?;
    let p = error::probability("p", p)?;
    if p == 0.0 || p == 1.0 {
        return Ok(Correction {
            value: 0.0,
            approximate: false,
        });
    }
    if m > EXACT_CORRECTION_MAX_M {
        return Ok(Correction {
            value: g_m_approx(m, p)?,
            approximate: true,
        });
    }
    let b = arrival_dist(m - 1, p)?;
    let squares: Vec<f64> = b.iter().map(|x| x * x).collect();
    let neighbours: Vec<f64> = b.windows(2).map(|w| w[0] * w[1]).collect();
    let value = p * (1.0 - p) * (tails_inward_sum(&squares) + tails_inward_sum(&neighbours));
    Ok(Correction {
        value: value.clamp(0.0, p),
        approximate: false,
    })
}

/// Normal approximation `sqrt(p(1-p) / (pi m))` of [`g_m`].
///
/// Follows from `E[min(X,Y)] = mp - E|X-Y|/2` with `X - Y` treated as
/// Gaussian; the relative error shrinks like `1/m`.
pub fn g_m_approx(m: u64, p: f64) -> Result<f64> {
    let m = error::at_least_one("m", m)?;
    let p = error::probability("p", p)?;
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok((p * (1.0 - p) / (std::f64::consts::PI * m as f64)).sqrt())
}

/// Mean number of sifted pairs per round, `m p_bm [p - g_m(p)]`.
pub fn mean_shifted_pairs(m: u64, p_herald: f64, p_bm: f64) -> Result<f64> {
    let p_bm = error::probability("p_bm", p_bm)?;
    let g = g_m(m, p_herald)?;
    Ok(m as f64 * p_bm * (p_herald - g.value).max(0.0))
}

/// Mean number of sifted pairs computed directly as `p_bm sum_l l f_{l|m}`.
///
/// Independent of the closed form in [`mean_shifted_pairs`]; the two must agree.
pub fn mean_shifted_pairs_by_distribution(m: u64, p_herald: f64, p_bm: f64) -> Result<f64> {
    let p_bm = error::probability("p_bm", p_bm)?;
    error::at_least_one("m", m)?;
    let f = min_pair_dist(m, p_herald)?;
    let weighted: Vec<f64> = f.iter().enumerate().map(|(l, x)| l as f64 * x).collect();
    Ok(p_bm * tails_inward_sum(&weighted))
}

/// Asymptotic sifted-key rate per pulse, `p_bm p_qnd eta_half eta_s`.
pub fn asymptotic_rate(p_qnd: f64, eta_half: f64, eta_s: f64, p_bm: f64) -> Result<f64> {
    Ok(error::probability("p_bm", p_bm)?
        * error::probability("p_qnd", p_qnd)?
        * error::probability("eta_half", eta_half)?
        * error::probability("eta_s", eta_s)?)
}
