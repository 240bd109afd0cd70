//! Small-scale fading on satellite links and the resulting packet error rate.
//!
//! Ground-to-space links use shadowed-Rician (SR) fading and space-to-air links
//! use the Loo model. For both, the average PER is bounded by the probability
//! that the instantaneous SNR falls below c0 = ∫ f(γ) dγ, where f is the
//! uncoded BPSK packet error function over AWGN.

use crate::quad::{integrate, QuadConfig, QuadError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FadingError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("invalid fading parameter `{field}`: {value}")]
    Param { field: &'static str, value: f64 },
    #[error("expected a {expected} model")]
    WrongDistribution { expected: &'static str },
}

/// Fading distribution of the received amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fading {
    /// SR(b0, m, Ω): 2·b0 is the scatter power, Ω the LoS power, m the
    /// Nakagami order (integer here).
    ShadowedRician { b0: f64, m: u32, omega: f64 },
    /// Loo(μ, d0, b0): lognormal LoS amplitude with log-mean μ and
    /// log-variance d0, plus Rayleigh scatter of power 2·b0.
    Loo { mu: f64, d0: f64, b0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ShadowingScenario {
    /// Infrequent light shadowing.
    Ils,
    /// Frequent heavy shadowing.
    Fhs,
    /// Average shadowing.
    As,
    /// Clear line of sight, as seen from an aircraft at cruise altitude.
    Los,
}

impl ShadowingScenario {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ils => "ILS",
            Self::Fhs => "FHS",
            Self::As => "AS",
            Self::Los => "LOS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerModel {
    pub fading: Fading,
    pub packet_bits: u32,
    pub scenario: ShadowingScenario,
}

/// Packet length used throughout the PER curves.
pub const DEFAULT_PACKET_BITS: u32 = 1023;

impl PerModel {
    pub fn ils_sr() -> Self {
        Self::sr(0.158, 19, 1.29, ShadowingScenario::Ils)
    }

    /// m = 0.739 in the measurement literature, rounded to the nearest
    /// admissible integer.
    pub fn fhs_sr() -> Self {
        Self::sr(0.063, 1, 8.97e-4, ShadowingScenario::Fhs)
    }

    pub fn as_sr() -> Self {
        Self::sr(0.126, 10, 0.835, ShadowingScenario::As)
    }

    /// Default space-to-air model: 0 dB mean LoS, 0.5 dB shadowing spread,
    /// scatter 20 dB below the LoS component.
    pub fn s2a_loo() -> Self {
        let sigma = 0.5 * std::f64::consts::LN_10 / 20.0;
        Self::loo(0.0, sigma * sigma, 0.005, ShadowingScenario::Los)
    }

    /// Land-mobile light shadowing set.
    pub fn loo_light() -> Self {
        Self::loo(0.115, 0.115 * 0.115, 0.158, ShadowingScenario::Ils)
    }

    /// Land-mobile average shadowing set.
    pub fn loo_average() -> Self {
        Self::loo(-0.115, 0.161 * 0.161, 0.126, ShadowingScenario::As)
    }

    /// Land-mobile heavy shadowing set.
    pub fn loo_heavy() -> Self {
        Self::loo(-3.914, 0.806 * 0.806, 0.063, ShadowingScenario::Fhs)
    }

    fn sr(b0: f64, m: u32, omega: f64, scenario: ShadowingScenario) -> Self {
        Self {
            fading: Fading::ShadowedRician { b0, m, omega },
            packet_bits: DEFAULT_PACKET_BITS,
            scenario,
        }
    }

    fn loo(mu: f64, d0: f64, b0: f64, scenario: ShadowingScenario) -> Self {
        Self {
            fading: Fading::Loo { mu, d0, b0 },
            packet_bits: DEFAULT_PACKET_BITS,
            scenario,
        }
    }

    pub fn validate(&self) -> Result<(), FadingError> {
        if self.packet_bits == 0 {
            return Err(FadingError::Param {
                field: "packet_bits",
                value: 0.0,
            });
        }
        let check = |field, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(FadingError::Param { field, value })
            }
        };
        match self.fading {
            Fading::ShadowedRician { b0, m, omega } => {
                check("b0", b0)?;
                check("omega", omega)?;
                check("m", m as f64)
            }
            Fading::Loo { mu, d0, b0 } => {
                check("b0", b0)?;
                check("d0", d0)?;
                if !mu.is_finite() {
                    return Err(FadingError::Param { field: "mu", value: mu });
                }
                Ok(())
            }
        }
    }

    /// PDF of the instantaneous SNR at average SNR `mean_snr`.
    pub fn pdf(&self, gamma: f64, mean_snr: f64) -> Result<f64, FadingError> {
        match self.fading {
            Fading::ShadowedRician { b0, m, omega } => Ok(sr_pdf(gamma, mean_snr, b0, m, omega)),
            Fading::Loo { mu, d0, b0 } => loo_pdf(gamma, mean_snr, mu, d0, b0),
        }
    }

    pub fn per_upper_bound(&self, mean_snr: f64) -> Result<f64, FadingError> {
        let c0 = c0_integral(self.packet_bits)?;
        self.per_upper_bound_with_c0(mean_snr, c0)
    }

    /// Same as [`per_upper_bound`](Self::per_upper_bound) with c0 supplied by
    /// the caller, which avoids recomputing it along a curve.
    pub fn per_upper_bound_with_c0(&self, mean_snr: f64, c0: f64) -> Result<f64, FadingError> {
        self.validate()?;
        if !(mean_snr > 0.0) {
            return Err(FadingError::Param {
                field: "mean_snr",
                value: mean_snr,
            });
        }
        match self.fading {
            Fading::ShadowedRician { b0, m, omega } => sr_bound(mean_snr, c0, b0, m, omega),
            Fading::Loo { mu, d0, b0 } => loo_bound(mean_snr, c0, mu, d0, b0),
        }
    }
}

/// Gaussian tail probability Q(x).
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Coherent BPSK bit error rate over AWGN.
pub fn bpsk_ber(snr: f64) -> f64 {
    q_function((2.0 * snr).sqrt())
}

/// PER of an uncoded `n`-bit packet, 1 − (1 − b(γ))ⁿ.
pub fn awgn_per(snr: f64, n: u32) -> f64 {
    let b = bpsk_ber(snr.max(0.0));
    -(n as f64 * (-b).ln_1p()).exp_m1()
}

/// Laguerre polynomial L_k(x) by the three-term recurrence.
fn laguerre(k: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 - x;
    for j in 1..k {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 - x) * cur - j * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// ₁F₁(m; 1; x) for integer m ≥ 1, via Kummer's transformation
/// ₁F₁(m; 1; x) = eˣ L_{m−1}(−x).
pub fn kummer_1f1(m: u32, x: f64) -> f64 {
    assert!(m >= 1, "kummer_1f1 needs m >= 1");
    x.exp() * laguerre(m - 1, -x)
}

/// ln ₁F₁(m; 1; x) for x ≥ 0, safe where eˣ alone would overflow.
fn ln_kummer_1f1(m: u32, x: f64) -> f64 {
    x + laguerre(m - 1, -x).ln()
}

const I0_SERIES_LIMIT: f64 = 30.0;

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Asymptotic √(2πx)·e^{−x}·I0(x); accurate to double precision for x > 30.
fn i0_asymptotic_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let k = k as f64;
        let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * x);
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= I0_SERIES_LIMIT {
        i0_series(x)
    } else {
        x.exp() * i0_asymptotic_scaled(x) / (2.0 * PI * x).sqrt()
    }
}

/// e^{−|x|}·I0(x), finite for every x.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= I0_SERIES_LIMIT {
        (-x).exp() * i0_series(x)
    } else {
        i0_asymptotic_scaled(x) / (2.0 * PI * x).sqrt()
    }
}

/// c0 = ∫₀^∞ f(γ) dγ for `n`-bit packets. The integrand is truncated where
/// f drops below 1e-12.
pub fn c0_integral(n: u32) -> Result<f64, FadingError> {
    if n == 0 {
        return Err(FadingError::Param {
            field: "packet_bits",
            value: 0.0,
        });
    }
    let mut upper = 1.0;
    while awgn_per(upper, n) >= 1e-12 {
        upper *= 2.0;
    }
    let cfg = QuadConfig {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        ..QuadConfig::default()
    };
    // The PER drops from ~1 to ~0 over a short stretch; split the range so
    // the first pass already resolves it.
    let mut total = 0.0;
    let pieces = 16;
    for i in 0..pieces {
        let a = upper * i as f64 / pieces as f64;
        let b = upper * (i + 1) as f64 / pieces as f64;
        total += integrate(|g| awgn_per(g, n), a, b, &cfg)?;
    }
    Ok(total)
}

fn sr_ln_prefactor(mean_snr: f64, b0: f64, m: u32, omega: f64) -> f64 {
    let mf = m as f64;
    mf * (2.0 * b0 * mf / (2.0 * b0 * mf + omega)).ln() - (2.0 * b0 * mean_snr).ln()
}

fn sr_density(gamma: f64, mean_snr: f64, b0: f64, m: u32, omega: f64, ln_pre: f64) -> f64 {
    let beta = omega / (2.0 * b0 * (2.0 * b0 * m as f64 + omega) * mean_snr);
    (ln_pre - gamma / (2.0 * b0 * mean_snr) + ln_kummer_1f1(m, beta * gamma)).exp()
}

/// Shadowed-Rician SNR density at `gamma` for scale `mean_snr`.
pub fn sr_pdf(gamma: f64, mean_snr: f64, b0: f64, m: u32, omega: f64) -> f64 {
    if gamma < 0.0 {
        return 0.0;
    }
    let ln_pre = sr_ln_prefactor(mean_snr, b0, m, omega);
    sr_density(gamma, mean_snr, b0, m, omega, ln_pre)
}

/// Breakpoints at octaves of the fading mean so that narrow densities are
/// not stepped over by the first quadrature pass.
fn octave_breaks(scale: f64, upper: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut x = scale / 16.0;
    while x < upper {
        pts.push(x);
        x *= 2.0;
    }
    pts.push(upper);
    pts
}

fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> Result<f64, QuadError> {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += integrate(&mut f, w[0], w[1], cfg)?;
    }
    Ok(total)
}

fn sr_bound(mean_snr: f64, c0: f64, b0: f64, m: u32, omega: f64) -> Result<f64, FadingError> {
    let ln_pre = sr_ln_prefactor(mean_snr, b0, m, omega);
    let scale = mean_snr * (2.0 * b0 + omega);
    let cfg = QuadConfig::default();
    let p = integrate_pieces(
        |g| sr_density(g, mean_snr, b0, m, omega, ln_pre),
        &octave_breaks(scale, c0),
        &cfg,
    )?;
    Ok(p.clamp(0.0, 1.0))
}

const LOO_SPAN: f64 = 10.0;

fn inner_cfg() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-14,
        rel_tol: 1e-10,
        ..QuadConfig::default()
    }
}

/// Rice density of amplitude `r` around LoS amplitude `z`, scatter power 2·b0.
fn rice_density(r: f64, z: f64, b0: f64) -> f64 {
    let d = r - z;
    r / b0 * (-d * d / (2.0 * b0)).exp() * bessel_i0e(r * z / b0)
}

/// Loo SNR density at `gamma` for scale `mean_snr`. The amplitude is
/// r = γ/γ̄; the shadowing integral runs over w = ln z.
pub fn loo_pdf(gamma: f64, mean_snr: f64, mu: f64, d0: f64, b0: f64) -> Result<f64, FadingError> {
    if gamma <= 0.0 {
        return Ok(0.0);
    }
    let r = gamma / mean_snr;
    let sd = d0.sqrt();
    let (lo, hi) = (mu - LOO_SPAN * sd, mu + LOO_SPAN * sd);
    let mut breaks = vec![lo, mu, hi];
    if r.ln() > lo && r.ln() < hi {
        breaks.push(r.ln());
    }
    breaks.sort_by(f64::total_cmp);
    let norm = 1.0 / (2.0 * PI * d0).sqrt();
    let inner = integrate_pieces(
        |w| {
            let z = w.exp();
            norm * (-(w - mu).powi(2) / (2.0 * d0)).exp() * rice_density(r, z, b0)
        },
        &breaks,
        &inner_cfg(),
    )?;
    Ok(inner / mean_snr)
}

/// Probability that a Rice amplitude with LoS `z` stays below `r_max`.
fn rice_cdf(r_max: f64, z: f64, b0: f64) -> Result<f64, QuadError> {
    let s = b0.sqrt();
    let mut breaks = vec![0.0, r_max];
    for p in [z - 8.0 * s, z - s, z, z + s, z + 8.0 * s] {
        if p > 0.0 && p < r_max {
            breaks.push(p);
        }
    }
    breaks.sort_by(f64::total_cmp);
    Ok(integrate_pieces(|r| rice_density(r, z, b0), &breaks, &inner_cfg())?.min(1.0))
}

fn loo_bound(mean_snr: f64, c0: f64, mu: f64, d0: f64, b0: f64) -> Result<f64, FadingError> {
    // The two integrals are swapped relative to the textbook form: the Rice
    // part is integrated over amplitude first, where its peak is known.
    let r_max = c0 / mean_snr;
    let sd = d0.sqrt();
    let (lo, hi) = (mu - LOO_SPAN * sd, mu + LOO_SPAN * sd);
    let mut breaks = vec![lo, mu, hi];
    if r_max.ln() > lo && r_max.ln() < hi {
        breaks.push(r_max.ln());
    }
    breaks.sort_by(f64::total_cmp);
    let norm = 1.0 / (2.0 * PI * d0).sqrt();
    let mut failure = None;
    let p = integrate_pieces(
        |w| {
            let weight = norm * (-(w - mu).powi(2) / (2.0 * d0)).exp();
            match rice_cdf(r_max, w.exp(), b0) {
                Ok(c) => weight * c,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &breaks,
        &QuadConfig::default(),
    )?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(p.clamp(0.0, 1.0))
}

pub fn per_upper_sr(mean_snr: f64, model: &PerModel) -> Result<f64, FadingError> {
    match model.fading {
        Fading::ShadowedRician { .. } => model.per_upper_bound(mean_snr),
        Fading::Loo { .. } => Err(FadingError::WrongDistribution {
            expected: "shadowed-Rician",
        }),
    }
}

pub fn per_upper_loo(mean_snr: f64, model: &PerModel) -> Result<f64, FadingError> {
    match model.fading {
        Fading::Loo { .. } => model.per_upper_bound(mean_snr),
        Fading::ShadowedRician { .. } => Err(FadingError::WrongDistribution { expected: "Loo" }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerPoint {
    pub scenario: String,
    pub snr_db: f64,
    pub per_bound: f64,
}

/// Models plotted by default: the three SR scenarios and the S2A Loo model.
pub fn default_models() -> Vec<(String, PerModel)> {
    vec![
        ("SR-ILS".into(), PerModel::ils_sr()),
        ("SR-AS".into(), PerModel::as_sr()),
        ("SR-FHS".into(), PerModel::fhs_sr()),
        ("Loo-LOS".into(), PerModel::s2a_loo()),
    ]
}

/// Bound evaluated over a grid of average SNRs in dB.
pub fn per_curve(models: &[(String, PerModel)], grid_db: &[f64]) -> Result<Vec<PerPoint>, FadingError> {
    let mut out = Vec::with_capacity(models.len() * grid_db.len());
    for (name, model) in models {
        let c0 = c0_integral(model.packet_bits)?;
        for &db in grid_db {
            let snr = 10f64.powf(db / 10.0);
            out.push(PerPoint {
                scenario: name.clone(),
                snr_db: db,
                per_bound: model.per_upper_bound_with_c0(snr, c0)?,
            });
        }
    }
    Ok(out)
}

/// Average SNR in dB at which the bound first drops to `target`, found by
/// bisection on [lo_db, hi_db]. `None` if the bracket does not straddle it.
pub fn crossing_db(model: &PerModel, target: f64, lo_db: f64, hi_db: f64) -> Result<Option<f64>, FadingError> {
    let c0 = c0_integral(model.packet_bits)?;
    let eval = |db: f64| model.per_upper_bound_with_c0(10f64.powf(db / 10.0), c0);
    let (mut lo, mut hi) = (lo_db, hi_db);
    if eval(lo)? < target || eval(hi)? > target {
        return Ok(None);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn awgn_per_examples() {
        assert!((awgn_per(0.0, 1023) - 1.0).abs() < 1e-15);
        assert!(awgn_per(1e3, 1023) < 1e-100);
        assert!((awgn_per(3.162, 1023) - 0.9977).abs() < 2e-4);
        assert!((awgn_per(0.0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kummer_examples() {
        assert_eq!(kummer_1f1(3, 0.0), 1.0);
        for x in [-2.0, 0.3, 4.0] {
            assert!((kummer_1f1(1, x) - f64::exp(x)).abs() < 1e-12 * f64::exp(x));
        }
        assert!((kummer_1f1(2, 1.0) - 2.0 * std::f64::consts::E).abs() < 1e-12);
    }

    fn kummer_series(m: u32, x: f64) -> f64 {
        // Σ (m)_k xᵏ / (k!)²
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..200 {
            let k = k as f64;
            term *= (m as f64 + k) * x / ((k + 1.0) * (k + 1.0));
            sum += term;
        }
        sum
    }

    #[test]
    fn kummer_matches_series() {
        for m in [1, 2, 5, 10, 19] {
            for x in [-3.0, -0.5, 0.1, 1.0, 7.5, 20.0] {
                let a = kummer_1f1(m, x);
                let b = kummer_series(m, x);
                // Alternating series for x < 0 cancels, so compare on an absolute floor.
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "m={m} x={x}: {a} vs {b}");
            }
        }
    }

    fn i0_oracle(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..300 {
            if k > 0 {
                term *= (x / 2.0).powi(2) / ((k * k) as f64);
            }
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        for x in [0.5, 5.0, 25.0, 29.9, 30.1, 45.0, 80.0] {
            let want = i0_oracle(x);
            assert!((bessel_i0(x) - want).abs() < 1e-12 * want, "x={x}");
            assert!((bessel_i0e(x) - want * (-x).exp()).abs() < 1e-12 * want * (-x).exp());
        }
        let mut last = 0.0;
        for i in 0..200 {
            let v = bessel_i0(i as f64 * 0.5);
            assert!(v >= last && v >= 1.0);
            last = v;
        }
        assert!(bessel_i0e(1e6).is_finite());
    }

    #[test]
    fn c0_examples() {
        let one = c0_integral(1).unwrap();
        assert!((one - 0.25).abs() < 1e-9, "{one}");
        let full = c0_integral(1023).unwrap();
        assert!(full > one);
        assert!((full - 5.336_145_775_159_82).abs() < 1e-8, "{full}");
        assert!(c0_integral(0).is_err());
    }

    #[test]
    fn wrong_distribution_rejected() {
        assert!(per_upper_sr(10.0, &PerModel::s2a_loo()).is_err());
        assert!(per_upper_loo(10.0, &PerModel::ils_sr()).is_err());
    }

    #[test]
    fn bounds_vanish_at_high_snr() {
        let hi = 10f64.powf(6.0);
        assert!(per_upper_sr(hi, &PerModel::ils_sr()).unwrap() < 1e-3);
        assert!(per_upper_loo(hi, &PerModel::s2a_loo()).unwrap() < 1e-3);
    }

    #[test]
    fn bounds_saturate_at_low_snr() {
        let lo = 1e-3;
        assert!(per_upper_sr(lo, &PerModel::as_sr()).unwrap() > 0.999);
        assert!(per_upper_loo(lo, &PerModel::s2a_loo()).unwrap() > 0.999);
    }

    #[test]
    fn ils_crossing_near_sixteen_db() {
        let x = crossing_db(&PerModel::ils_sr(), 1e-2, 0.0, 40.0).unwrap().unwrap();
        assert!((x - 17.53).abs() < 0.05, "{x}");
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = PerModel::ils_sr();
        m.packet_bits = 0;
        assert!(m.validate().is_err());
        let bad = PerModel {
            fading: Fading::Loo {
                mu: 0.0,
                d0: 0.0,
                b0: 0.1,
            },
            packet_bits: 8,
            scenario: ShadowingScenario::Los,
        };
        assert!(bad.per_upper_bound(10.0).is_err());
    }
}
