//! Secret-key rates for the adaptive protocol and the original baseline.

use serde::Serialize;

use crate::device::{self, ChannelParams, DerivedProbs, DeviceParams};
use crate::error::{self, Error, Result};
use crate::stats;

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    let x = error::probability("x", x)?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Asymptotic secret-key rate `max(0, R [1 - h(e_z) - h(e_x)])` per pulse.
pub fn secret_key_rate(rate: f64, e_z: f64, e_x: f64) -> Result<f64> {
    let rate = error::probability("R", rate)?;
    let fraction = 1.0 - binary_entropy(e_z)? - binary_entropy(e_x)?;
    Ok((rate * fraction).max(0.0))
}

/// Sifted rate of the original protocol with predetermined pairings,
/// `p_bm eta_full eta_s`.
pub fn original_mdiqkd_rate(params: &DeviceParams, channel: &ChannelParams) -> Result<f64> {
    let p_bm = device::bell_success_prob(params, channel)?;
    Ok(p_bm * channel.eta_full()? * params.eta_s)
}

/// Sifted rate of the adaptive protocol in the large-`m` limit.
pub fn adaptive_rate(params: &DeviceParams, channel: &ChannelParams) -> Result<f64> {
    let d = DerivedProbs::derive(params, channel)?;
    stats::asymptotic_rate(d.p_qnd, d.eta_half, params.eta_s, d.p_bm)
}

const CROSSOVER_TOLERANCE_KM: f64 = 1e-6;
const CROSSOVER_SEARCH_LIMIT_KM: f64 = 1e7;

/// Distance beyond which `p_qnd > eta_half`.
///
/// Uses `-2 l_att ln p_qnd` when `p_qnd` does not vary with the distance and
/// falls back to bisection otherwise.
pub fn crossover_distance(params: &DeviceParams, channel_template: &ChannelParams) -> Result<f64> {
    channel_template.validate()?;
    let residual = |l: f64| -> Result<f64> {
        let c = channel_template.at_length(l);
        Ok(device::qnd_success_prob(params, &c)? - c.eta_half()?)
    };
    let p_qnd = device::qnd_success_prob(params, &channel_template.at_length(0.0))?;
    if p_qnd >= 1.0 {
        return Err(Error::NoCrossover(format!(
            "p_qnd = {p_qnd} never falls below the lossless transmittance"
        )));
    }
    if p_qnd <= 0.0 {
        return Err(Error::NoCrossover("p_qnd is zero at every distance".into()));
    }
    let analytic = -2.0 * channel_template.l_att * p_qnd.ln();
    if residual(analytic)?.abs() <= 1e-12 {
        return Ok(analytic);
    }

    let (mut lo, mut hi) = (0.0, analytic.max(1.0));
    while residual(hi)? <= 0.0 {
        hi *= 2.0;
        if hi > CROSSOVER_SEARCH_LIMIT_KM {
            return Err(Error::NoCrossover(format!(
                "no sign change of p_qnd - eta_half below {CROSSOVER_SEARCH_LIMIT_KM} km"
            )));
        }
    }
    while hi - lo > CROSSOVER_TOLERANCE_KM {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Secret-key bits per second at the source repetition rate.
pub fn throughput_hz(g: f64, params: &DeviceParams) -> Result<f64> {
    Ok(error::non_negative("G", g)? * params.source_rep_rate)
}

/// Rates for both protocols at one distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    #[serde(rename = "L_km")]
    pub length_km: f64,
    pub eta_half: f64,
    pub p_qnd: f64,
    pub p_bm: f64,
    #[serde(rename = "R_adaptive")]
    pub r_adaptive: f64,
    #[serde(rename = "R_original")]
    pub r_original: f64,
    #[serde(rename = "G_adaptive")]
    pub g_adaptive: f64,
    #[serde(rename = "G_original")]
    pub g_original: f64,
    pub key_hz_adaptive: f64,
    pub e_z: f64,
    pub e_x: f64,
    /// `None` when the rate underflows and no finite `m` exists.
    pub m_required: Option<u64>,
    pub crossed_over: bool,
}

impl RateReport {
    pub fn evaluate(params: &DeviceParams, channel: &ChannelParams) -> Result<Self> {
        let d = DerivedProbs::derive(params, channel)?;
        let r_adaptive = stats::asymptotic_rate(d.p_qnd, d.eta_half, params.eta_s, d.p_bm)?;
        let r_original = original_mdiqkd_rate(params, channel)?;
        let g_adaptive = secret_key_rate(r_adaptive, d.e_z, d.e_x)?;
        let g_original = secret_key_rate(r_original, d.e_z, d.e_x)?;
        let m_required = match device::multiplexing_estimate(params, channel) {
            Ok(m) => Some(m),
            Err(Error::Overflow { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            length_km: channel.length_km,
            eta_half: d.eta_half,
            p_qnd: d.p_qnd,
            p_bm: d.p_bm,
            r_adaptive,
            r_original,
            g_adaptive,
            g_original,
            key_hz_adaptive: throughput_hz(g_adaptive, params)?,
            e_z: d.e_z,
            e_x: d.e_x,
            m_required,
            crossed_over: device::outperformance_condition(params, channel)?,
        })
    }
}
