//! Link budget: free-space path loss, SNR, achievable rates and per-link delays.
//!
//! Everything in here works in linear units. Decibel values only appear in
//! [`LinkBudgetDb`], the serialized form used by scenario configs.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("wavelength must be positive, got {0}")]
    Wavelength(f64),
    #[error("distance must be positive, got {0}")]
    Distance(f64),
    #[error("invalid link parameter `{field}`: {value}")]
    Param { field: &'static str, value: f64 },
    #[error("bandwidth fraction must lie in [0, 1], got {0}")]
    Fraction(f64),
    #[error("zero-capacity link asked to carry {0} of a file")]
    ZeroCapacity(f64),
}

/// Physical parameters of one link type, all linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub tx_power_w: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Additional loss factor in (0, 1].
    pub additional_loss: f64,
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_density: f64,
    /// Small-scale power gain h², 1 for capacity planning.
    pub fading_gain: f64,
}

impl LinkParams {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let positive = [
            ("tx_power_w", self.tx_power_w),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("frequency_hz", self.frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_density", self.noise_density),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LinkError::Param { field, value });
            }
        }
        if !(self.additional_loss > 0.0 && self.additional_loss <= 1.0) {
            return Err(LinkError::Param {
                field: "additional_loss",
                value: self.additional_loss,
            });
        }
        if !(self.fading_gain >= 0.0 && self.fading_gain.is_finite()) {
            return Err(LinkError::Param {
                field: "fading_gain",
                value: self.fading_gain,
            });
        }
        Ok(())
    }

    /// Received SNR at distance `d` with the full band.
    pub fn snr(&self, d: f64) -> Result<f64, LinkError> {
        link_snr(self, d)
    }

    /// Shannon capacity with the full band at distance `d`.
    pub fn capacity(&self, d: f64) -> Result<f64, LinkError> {
        Ok(shannon_rate(self.bandwidth_hz, self.snr(d)?))
    }

    /// The per-slot constant c(g, s) of the bandwidth-split rate: the SNR the
    /// receiver would see if the transmitter used the whole band.
    pub fn snr_constant(&self, d: f64) -> Result<f64, LinkError> {
        let gain = self.tx_power_w * self.tx_gain * self.rx_gain * self.additional_loss;
        Ok(gain * path_loss(self.wavelength(), d)? / (self.noise_density * self.bandwidth_hz))
    }
}

/// Free-space path loss as a linear gain, (λ / 4πd)².
pub fn path_loss(wavelength: f64, d: f64) -> Result<f64, LinkError> {
    if !(wavelength > 0.0) {
        return Err(LinkError::Wavelength(wavelength));
    }
    if !(d > 0.0) {
        return Err(LinkError::Distance(d));
    }
    let ratio = wavelength / (4.0 * PI * d);
    Ok(ratio * ratio)
}

/// Received SNR over distance `d`, including the small-scale gain h².
pub fn link_snr(params: &LinkParams, d: f64) -> Result<f64, LinkError> {
    let numerator = params.tx_power_w
        * params.tx_gain
        * params.rx_gain
        * params.additional_loss
        * path_loss(params.wavelength(), d)?
        * params.fading_gain;
    Ok(numerator / (params.noise_density * params.bandwidth_hz))
}

/// W·log2(1 + γ).
pub fn shannon_rate(bandwidth_hz: f64, snr: f64) -> f64 {
    bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2
}

/// Rate of a receiver granted fraction `omega` of a band whose full-band SNR
/// constant is `c_const`: ω·W·log2(1 + c/ω). The ω → 0 limit is 0.
pub fn g2s_rate(omega: f64, c_const: f64, bandwidth_hz: f64) -> Result<f64, LinkError> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(LinkError::Fraction(omega));
    }
    if omega == 0.0 {
        return Ok(0.0);
    }
    Ok(omega * shannon_rate(bandwidth_hz, c_const / omega))
}

/// Transmission delay of fraction `rho` of a `packets`-packet file.
pub fn tx_delay(rho: f64, packets: f64, packet_bits: f64, capacity: f64) -> Result<f64, LinkError> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    if !(capacity > 0.0) {
        return Err(LinkError::ZeroCapacity(rho));
    }
    Ok(rho * packets * packet_bits / capacity)
}

pub fn prop_delay(d: f64) -> f64 {
    d / SPEED_OF_LIGHT
}

/// Transmission and propagation delay of one active link in Phase 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkDelay {
    pub transmission: f64,
    pub propagation: f64,
}

impl LinkDelay {
    pub fn total(&self) -> f64 {
        self.transmission + self.propagation
    }
}

/// Delay record for one delivered file.
///
/// Phase 1 runs all its links in parallel, so its contribution is the slowest
/// link; Phase 2 is the final hop to the aircraft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub phase1_links: Vec<LinkDelay>,
    pub phase2: f64,
}

impl DelayBreakdown {
    pub fn new(phase1_links: Vec<LinkDelay>, phase2: f64) -> Self {
        Self {
            phase1_links,
            phase2,
        }
    }

    /// A file that never touches Phase 1 (self-cached or direct G2A).
    pub fn phase2_only(phase2: f64) -> Self {
        Self::new(Vec::new(), phase2)
    }

    pub fn phase1(&self) -> f64 {
        self.phase1_links
            .iter()
            .map(LinkDelay::total)
            .fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.phase1() + self.phase2
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One link type as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParamsDb {
    pub tx_power_w: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    /// Additional loss as a positive number of dB.
    pub additional_loss_db: f64,
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
}

impl LinkParamsDb {
    pub fn to_linear(&self) -> LinkParams {
        LinkParams {
            tx_power_w: self.tx_power_w,
            tx_gain: db_to_linear(self.tx_gain_db),
            rx_gain: db_to_linear(self.rx_gain_db),
            additional_loss: db_to_linear(-self.additional_loss_db),
            frequency_hz: self.frequency_hz,
            bandwidth_hz: self.bandwidth_hz,
            noise_density: db_to_linear(self.noise_density_dbm_hz - 30.0),
            fading_gain: 1.0,
        }
    }

    pub fn from_linear(p: &LinkParams) -> Self {
        Self {
            tx_power_w: p.tx_power_w,
            tx_gain_db: linear_to_db(p.tx_gain),
            rx_gain_db: linear_to_db(p.rx_gain),
            additional_loss_db: -linear_to_db(p.additional_loss),
            frequency_hz: p.frequency_hz,
            bandwidth_hz: p.bandwidth_hz,
            noise_density_dbm_hz: linear_to_db(p.noise_density) + 30.0,
        }
    }
}

/// Thermal noise floor at 290 K.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Link budgets for the four link types of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetDb {
    pub isl: LinkParamsDb,
    pub g2s: LinkParamsDb,
    pub s2a: LinkParamsDb,
    pub g2a: LinkParamsDb,
}

impl Default for LinkBudgetDb {
    /// Laser ISL at 193 THz / 50 MHz / 90 dB; RF links at 100 MHz with
    /// 40 dB satellite, 30 dB aircraft and 52 dB ground antennas.
    fn default() -> Self {
        Self {
            isl: LinkParamsDb {
                tx_power_w: 5.0,
                tx_gain_db: 90.0,
                rx_gain_db: 90.0,
                additional_loss_db: 5.2,
                frequency_hz: 193e12,
                bandwidth_hz: 50e6,
                noise_density_dbm_hz: THERMAL_NOISE_DBM_HZ,
            },
            g2s: LinkParamsDb {
                tx_power_w: 10.0,
                tx_gain_db: 52.0,
                rx_gain_db: 40.0,
                additional_loss_db: 2.5,
                frequency_hz: 30e9,
                bandwidth_hz: 100e6,
                noise_density_dbm_hz: THERMAL_NOISE_DBM_HZ,
            },
            s2a: LinkParamsDb {
                tx_power_w: 5.0,
                tx_gain_db: 40.0,
                rx_gain_db: 30.0,
                additional_loss_db: 2.5,
                frequency_hz: 15e9,
                bandwidth_hz: 100e6,
                noise_density_dbm_hz: THERMAL_NOISE_DBM_HZ,
            },
            g2a: LinkParamsDb {
                tx_power_w: 10.0,
                tx_gain_db: 52.0,
                rx_gain_db: 30.0,
                additional_loss_db: 2.5,
                frequency_hz: 18e9,
                bandwidth_hz: 100e6,
                noise_density_dbm_hz: THERMAL_NOISE_DBM_HZ,
            },
        }
    }
}

/// Linear counterpart of [`LinkBudgetDb`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub isl: LinkParams,
    pub g2s: LinkParams,
    pub s2a: LinkParams,
    pub g2a: LinkParams,
}

impl LinkBudget {
    pub fn from_db(db: &LinkBudgetDb) -> Result<Self, LinkError> {
        let budget = Self {
            isl: db.isl.to_linear(),
            g2s: db.g2s.to_linear(),
            s2a: db.s2a.to_linear(),
            g2a: db.g2a.to_linear(),
        };
        for p in [&budget.isl, &budget.g2s, &budget.s2a, &budget.g2a] {
            p.validate()?;
        }
        Ok(budget)
    }
}
