//! Air-to-ground channel: distance-based mean power with LoS/NLoS constants,
//! unit-mean Nakagami power fading, and SINR.
//!
//! Powers in dB are dBm; linear powers are milliwatts.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    Los,
    Nlos,
}

impl LinkState {
    pub fn from_blocked(blocked: bool) -> Self {
        if blocked {
            LinkState::Nlos
        } else {
            LinkState::Los
        }
    }

    pub fn is_los(self) -> bool {
        self == LinkState::Los
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Transmit power, dBm.
    pub zeta: f64,
    /// Additional loss, dB (negative).
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// Nakagami shape.
    pub m_los: f64,
    pub m_nlos: f64,
    /// Noise power, dBm.
    pub sigma2: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            zeta: 30.0,
            eta_los: -35.0,
            eta_nlos: -48.0,
            alpha_los: 2.0,
            alpha_nlos: 2.3,
            m_los: 1.0,
            m_nlos: 2.0,
            sigma2: -90.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("zeta", self.zeta),
            ("eta_los", self.eta_los),
            ("eta_nlos", self.eta_nlos),
            ("alpha_los", self.alpha_los),
            ("alpha_nlos", self.alpha_nlos),
            ("m_los", self.m_los),
            ("m_nlos", self.m_nlos),
            ("sigma2", self.sigma2),
        ];
        for (n, v) in fields {
            ensure_finite(n, v).map_err(|_| Error::config(format!("channel.{n}"), "must be finite"))?;
        }
        for (n, v) in [("alpha_los", self.alpha_los), ("alpha_nlos", self.alpha_nlos)] {
            if v < 1.0 {
                return Err(Error::config(format!("channel.{n}"), format!("must be >= 1, got {v}")));
            }
        }
        for (n, v) in [("m_los", self.m_los), ("m_nlos", self.m_nlos)] {
            if v < 0.5 {
                return Err(Error::config(format!("channel.{n}"), format!("must be >= 0.5, got {v}")));
            }
        }
        Ok(())
    }

    pub fn eta(&self, q: LinkState) -> f64 {
        match q {
            LinkState::Los => self.eta_los,
            LinkState::Nlos => self.eta_nlos,
        }
    }

    pub fn alpha(&self, q: LinkState) -> f64 {
        match q {
            LinkState::Los => self.alpha_los,
            LinkState::Nlos => self.alpha_nlos,
        }
    }

    pub fn m(&self, q: LinkState) -> f64 {
        match q {
            LinkState::Los => self.m_los,
            LinkState::Nlos => self.m_nlos,
        }
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.sigma2)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Mean received power in dBm at distance `d` meters.
pub fn mean_received_power(d: f64, q: LinkState, cp: &ChannelParams) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("distance must be positive and finite, got {d}")));
    }
    Ok(mean_received_power_unchecked(d, q, cp))
}

#[inline]
pub(crate) fn mean_received_power_unchecked(d: f64, q: LinkState, cp: &ChannelParams) -> f64 {
    cp.zeta + cp.eta(q) - 10.0 * cp.alpha(q) * d.log10()
}

/// Mean SNR in dB.
pub fn mean_snr_db(d: f64, q: LinkState, cp: &ChannelParams) -> Result<f64> {
    Ok(mean_received_power(d, q, cp)? - cp.sigma2)
}

/// Gamma power gain with shape `m` and unit mean.
#[derive(Debug, Clone, Copy)]
pub struct Fading {
    los: Gamma<f64>,
    nlos: Gamma<f64>,
}

impl Fading {
    pub fn new(cp: &ChannelParams) -> Self {
        Fading {
            los: Gamma::new(cp.m_los, 1.0 / cp.m_los).expect("validated shape"),
            nlos: Gamma::new(cp.m_nlos, 1.0 / cp.m_nlos).expect("validated shape"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, q: LinkState, rng: &mut R) -> f64 {
        match q {
            LinkState::Los => self.los.sample(rng),
            LinkState::Nlos => self.nlos.sample(rng),
        }
    }
}

/// One unit-mean fading draw for link state `q`.
pub fn sample_fading<R: Rng + ?Sized>(q: LinkState, cp: &ChannelParams, rng: &mut R) -> f64 {
    Fading::new(cp).sample(q, rng)
}

/// SINR in dB from linear (mW) signal and interference powers.
pub fn sinr(signal: f64, interferers: &[f64], cp: &ChannelParams) -> Result<f64> {
    if !signal.is_finite() || signal <= 0.0 {
        return Err(Error::Domain(format!("signal must be positive and finite, got {signal}")));
    }
    let mut total = 0.0;
    for &i in interferers {
        if !i.is_finite() || i < 0.0 {
            return Err(Error::Domain(format!("interference must be finite and >= 0, got {i}")));
        }
        total += i;
    }
    Ok(10.0 * (signal / (total + cp.noise_mw())).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn mean_power_spot_values() {
        let cp = ChannelParams::default();
        assert_eq!(mean_received_power(1.0, LinkState::Los, &cp).unwrap(), -5.0);
        assert_eq!(mean_received_power(100.0, LinkState::Los, &cp).unwrap(), -45.0);
        assert_eq!(mean_received_power(100.0, LinkState::Nlos, &cp).unwrap(), -64.0);
        assert!(mean_received_power(0.0, LinkState::Los, &cp).is_err());
        assert!(mean_received_power(-3.0, LinkState::Los, &cp).is_err());
    }

    #[test]
    fn sinr_examples() {
        let cp = ChannelParams::default();
        assert!(sinr(cp.noise_mw(), &[], &cp).unwrap().abs() < 1e-12);
        assert!((sinr(dbm_to_mw(-45.0), &[], &cp).unwrap() - 45.0).abs() < 1e-9);
        let s = dbm_to_mw(-10.0);
        assert!(sinr(s, &[s], &cp).unwrap().abs() < 1e-6);
        assert!(sinr(f64::NAN, &[], &cp).is_err());
        assert!(sinr(1.0, &[f64::INFINITY], &cp).is_err());
    }

    #[test]
    fn gamma_shape_two_moments() {
        let cp = ChannelParams::default();
        let f = Fading::new(&cp);
        let mut rng = rng_from_seed(11);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let g = f.sample(LinkState::Nlos, &mut rng);
            s += g;
            s2 += g * g;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((var - 0.5).abs() < 0.025, "var {var}");
    }

    #[test]
    fn validation_names_keys() {
        let cp = ChannelParams { alpha_los: 0.5, ..Default::default() };
        match cp.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "channel.alpha_los"),
            other => panic!("{other:?}"),
        }
    }
}
