//! Hardware and channel parameters, and the probabilities derived from them.
//!
//! Units: distances in km, times in seconds, rates in Hz. The light speed is
//! configured in m/s and converted here.

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};

/// Ceiling of a linear-optics Bell measurement (two of four Bell states).
pub const LINEAR_OPTICS_BELL_CEILING: f64 = 0.5;

/// Detectors in one Bell analyzer that can fire a dark click.
pub const BELL_ANALYZER_DETECTORS: f64 = 4.0;

const METERS_PER_KM: f64 = 1000.0;

/// Sources, detectors and feedforward of the middle node and both senders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// Single-photon source efficiency.
    pub eta_s: f64,
    /// Source pulse width, s. Also used as the detection window.
    pub tau_s: f64,
    /// Detector quantum efficiency.
    pub eta_d: f64,
    /// Mean dark count rate, 1/s.
    pub nu_d: f64,
    /// Time to complete one active feedforward, s.
    pub tau_a: f64,
    /// Source repetition rate, pulses/s.
    pub source_rep_rate: f64,
    /// Efficiency of preparing the Bell pair consumed by each QND measurement.
    pub eta_bp: f64,
    /// Feedforward operations charged to the QND measurement.
    pub n_ff_qnd: u32,
    /// Feedforward operations charged to the pairing switch.
    pub n_ff_pair: u32,
    /// Intrinsic bit/phase error probability of an accepted signal event.
    pub misalignment: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            eta_s: 0.90,
            tau_s: 300e-12,
            eta_d: 0.93,
            nu_d: 1.0,
            tau_a: 150e-9,
            source_rep_rate: 1e9,
            eta_bp: 1.0,
            n_ff_qnd: 1,
            n_ff_pair: 1,
            misalignment: 0.0,
        }
    }
}

impl DeviceParams {
    /// Lossless, noiseless devices with no feedforward delay.
    pub fn ideal() -> Self {
        Self {
            eta_s: 1.0,
            eta_d: 1.0,
            nu_d: 0.0,
            eta_bp: 1.0,
            n_ff_qnd: 0,
            n_ff_pair: 0,
            misalignment: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        error::probability("eta_s", self.eta_s)?;
        error::probability("eta_d", self.eta_d)?;
        error::probability("eta_bp", self.eta_bp)?;
        error::non_negative("tau_s", self.tau_s)?;
        error::non_negative("nu_d", self.nu_d)?;
        error::non_negative("tau_a", self.tau_a)?;
        error::non_negative("source_rep_rate", self.source_rep_rate)?;
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::Domain {
                name: "misalignment",
                value: self.misalignment,
                range: "[0, 0.5]",
            });
        }
        Ok(())
    }
}

/// Fiber link between Alice and Bob with the node at the midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Alice-Bob distance, km.
    #[serde(rename = "L")]
    pub length_km: f64,
    /// Attenuation length, km.
    pub l_att: f64,
    /// Speed of light in fiber, m/s.
    pub c: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            length_km: 0.0,
            l_att: 22.0,
            c: 2.0e8,
        }
    }
}

impl ChannelParams {
    pub fn at_length(self, length_km: f64) -> Self {
        Self { length_km, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        error::non_negative("L", self.length_km)?;
        error::positive("l_att", self.l_att)?;
        error::positive("c", self.c)?;
        Ok(())
    }

    /// Half-path transmittance `exp(-L / (2 l_att))`.
    pub fn eta_half(&self) -> Result<f64> {
        transmittance(self.length_km / 2.0, self.l_att)
    }

    /// Full-path transmittance `exp(-L / l_att)`.
    pub fn eta_full(&self) -> Result<f64> {
        transmittance(self.length_km, self.l_att)
    }
}

/// Transmittance `exp(-d / l_att)` of `d` km of fiber.
pub fn transmittance(d: f64, l_att: f64) -> Result<f64> {
    let d = error::non_negative("d", d)?;
    let l_att = error::positive("l_att", l_att)?;
    Ok((-d / l_att).exp())
}

/// Fiber loss accrued while photons wait out `n_ff` feedforward operations.
pub fn feedforward_transmittance(
    params: &DeviceParams,
    channel: &ChannelParams,
    n_ff: u32,
) -> Result<f64> {
    let delay_km = n_ff as f64 * channel.c * params.tau_a / METERS_PER_KM;
    transmittance(delay_km, channel.l_att)
}

/// Teleportation-based QND success: one linear-optics Bell measurement with
/// two detector clicks, a prepared Bell pair and the feedforward delay.
pub fn qnd_success_prob(params: &DeviceParams, channel: &ChannelParams) -> Result<f64> {
    params.validate()?;
    let ff = feedforward_transmittance(params, channel, params.n_ff_qnd)?;
    Ok(LINEAR_OPTICS_BELL_CEILING * params.eta_d.powi(2) * params.eta_bp * ff)
}

/// Success of the final Bell measurement on a heralded pair, including the
/// pairing switch delay.
pub fn bell_success_prob(params: &DeviceParams, channel: &ChannelParams) -> Result<f64> {
    params.validate()?;
    let ff = feedforward_transmittance(params, channel, params.n_ff_pair)?;
    Ok(LINEAR_OPTICS_BELL_CEILING * params.eta_d.powi(2) * ff)
}

/// Probability of at least one dark count in a detection window of length `tau_s`.
pub fn dark_click_prob(params: &DeviceParams) -> f64 {
    -(-params.nu_d * params.tau_s).exp_m1()
}

/// Fraction of accepted Bell events caused by dark-count coincidences.
pub fn dark_event_fraction(p_bm: f64, p_dark: f64) -> f64 {
    let dark = BELL_ANALYZER_DETECTORS * p_dark;
    if dark == 0.0 {
        0.0
    } else {
        dark / (p_bm + dark)
    }
}

/// Bit and phase error rates `(e_z, e_x)`.
///
/// Both equal `misalignment + w_dark / 2`, clamped to `[0, 0.5]`, where
/// `w_dark` is the dark share of accepted events on heralded pairs.
pub fn error_rates(params: &DeviceParams, channel: &ChannelParams) -> Result<(f64, f64)> {
    let p_bm = bell_success_prob(params, channel)?;
    let w_dark = dark_event_fraction(p_bm, dark_click_prob(params));
    let e = (params.misalignment + 0.5 * w_dark).clamp(0.0, 0.5);
    Ok((e, e))
}

/// True when the adaptive protocol beats the original one: `p_qnd > eta_half`.
pub fn outperformance_condition(params: &DeviceParams, channel: &ChannelParams) -> Result<bool> {
    Ok(qnd_success_prob(params, channel)? > channel.eta_half()?)
}

/// Pulses per party needed for about one sifted pair per round,
/// `ceil(1 / (p_bm p_qnd eta_half eta_s))`.
pub fn multiplexing_estimate(params: &DeviceParams, channel: &ChannelParams) -> Result<u64> {
    let d = DerivedProbs::derive(params, channel)?;
    let rate = d.p_bm * d.p_qnd * d.eta_half * params.eta_s;
    let m = (1.0 / rate).ceil();
    if rate <= 0.0 || !m.is_finite() || m > u64::MAX as f64 {
        return Err(Error::Overflow { rate });
    }
    Ok(m as u64)
}

/// Every probability the rate and simulation layers need at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedProbs {
    pub eta_half: f64,
    pub eta_full: f64,
    pub p_qnd: f64,
    pub p_bm: f64,
    /// Per-pulse heralding probability `p_qnd eta_half eta_s`.
    pub p_herald: f64,
    pub p_dark: f64,
    pub dark_fraction: f64,
    pub misalignment: f64,
    pub e_z: f64,
    pub e_x: f64,
}

impl DerivedProbs {
    pub fn derive(params: &DeviceParams, channel: &ChannelParams) -> Result<Self> {
        params.validate()?;
        channel.validate()?;
        let eta_half = channel.eta_half()?;
        let p_qnd = qnd_success_prob(params, channel)?;
        let p_bm = bell_success_prob(params, channel)?;
        let p_dark = dark_click_prob(params);
        let (e_z, e_x) = error_rates(params, channel)?;
        Ok(Self {
            eta_half,
            eta_full: channel.eta_full()?,
            p_qnd,
            p_bm,
            p_herald: p_qnd * eta_half * params.eta_s,
            p_dark,
            dark_fraction: dark_event_fraction(p_bm, p_dark),
            misalignment: params.misalignment,
            e_z,
            e_x,
        })
    }
}
