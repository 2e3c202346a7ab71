//! Ground-truth "physical world" oracle: modulates basebands onto an
//! ultrasonic carrier, propagates them with distance/angle-dependent gain and
//! position-locked anomalous noise, and simulates the nonlinear microphone
//! front end that demodulates them into the audible band.

mod leakage;
mod modulate;
mod noise;
mod transmit;

pub use leakage::{audible_leakage, matched_power};
pub use modulate::{edge_taper, modulate_dsb, modulate_ssb, ModScheme, ModulatedSignal, EMIT_TAPER_S, MOD_DEPTH};
pub use noise::anomalous_noise;
pub use transmit::{carrier_noise, transmit};

use crate::error::{Error, Result};

/// Everything the oracle needs to know about one transmitter/receiver
/// placement: carrier, geometry, device nonlinearities, attenuation law and
/// the noise process. Immutable value object; all oracle calls are pure
/// functions of (scene, input).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScene {
    pub carrier_hz: f64,
    pub distance_m: f64,
    /// Aim angle in degrees, 0..=180; 90 is broadside.
    pub angle_deg: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// Speaker second-order coefficient; 0 for a clean transmitter.
    pub gamma2: f64,
    /// Medium attenuation parameter, 1/(rad/s · m).
    pub a0: f64,
    /// Attenuation frequency exponent, 1..=2.
    pub n_att: f64,
    pub noise_seed: u64,
    /// Target RMS of the anomalous noise at unit propagation gain; 0 disables.
    pub noise_rms: f64,
    pub ultra_rate: u32,
    pub adc_rate: u32,
}

/// Default half-gain distance of the attenuation law, meters.
pub const HALF_GAIN_DISTANCE_M: f64 = 5.0;

impl Default for ChannelScene {
    fn default() -> Self {
        let carrier = 25_000.0;
        ChannelScene {
            carrier_hz: carrier,
            distance_m: 1.0,
            angle_deg: 90.0,
            k1: 1.0,
            k2: 0.2,
            k3: 0.05,
            gamma2: 0.0,
            // carrier amplitude halves every HALF_GAIN_DISTANCE_M meters
            a0: std::f64::consts::LN_2
                / (2.0 * std::f64::consts::PI * carrier * HALF_GAIN_DISTANCE_M),
            n_att: 1.0,
            noise_seed: 7,
            noise_rms: 0.02,
            ultra_rate: 96_000,
            adc_rate: 16_000,
        }
    }
}

impl ChannelScene {
    pub fn validate(&self) -> Result<()> {
        if self.carrier_hz >= self.ultra_rate as f64 / 2.0 {
            return Err(Error::InvalidArg(format!(
                "carrier {} above Nyquist of ultra_rate {}",
                self.carrier_hz, self.ultra_rate
            )));
        }
        if self.adc_rate >= self.ultra_rate {
            return Err(Error::InvalidArg("adc_rate must be below ultra_rate".into()));
        }
        if self.k1 == 0.0 {
            return Err(Error::InvalidArg("k1 must be nonzero".into()));
        }
        if !(0.0..=180.0).contains(&self.angle_deg) {
            return Err(Error::InvalidArg("angle_deg outside [0, 180]".into()));
        }
        if self.distance_m < 0.0 {
            return Err(Error::InvalidArg("distance_m must be ≥ 0".into()));
        }
        if !(1.0..=2.0).contains(&self.n_att) {
            return Err(Error::InvalidArg("n_att outside [1, 2]".into()));
        }
        Ok(())
    }

    /// Smooth angle gain: broadside maximum, reduced toward 0°/180°.
    pub fn angle_gain(&self) -> f64 {
        0.4 + 0.6 * self.angle_deg.to_radians().sin()
    }

    /// Distance attenuation alone: e^{−a0·(2π·carrier)^n_att·d}.
    pub fn distance_gain(&self) -> f64 {
        attenuation(self.a0, self.n_att, self.carrier_hz, self.distance_m)
    }

    /// Full propagation amplitude gain (distance × angle).
    pub fn propagation_gain(&self) -> f64 {
        self.distance_gain() * self.angle_gain()
    }

    pub fn at(&self, distance_m: f64, angle_deg: f64) -> ChannelScene {
        ChannelScene { distance_m, angle_deg, ..self.clone() }
    }
}

/// Attenuation law e^{−a0·(2πf)^n·d}, shared with the attacker-side model.
pub fn attenuation(a0: f64, n: f64, carrier_hz: f64, d: f64) -> f64 {
    (-a0 * (2.0 * std::f64::consts::PI * carrier_hz).powf(n) * d).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_attenuation_halves_every_5m() {
        let s = ChannelScene::default();
        let g5 = attenuation(s.a0, s.n_att, s.carrier_hz, 5.0);
        let g10 = attenuation(s.a0, s.n_att, s.carrier_hz, 10.0);
        assert!((g5 - 0.5).abs() < 1e-12);
        assert!((g10 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn angle_gain_peaks_broadside() {
        let s = ChannelScene::default();
        assert!((s.at(1.0, 90.0).angle_gain() - 1.0).abs() < 1e-12);
        assert!((s.at(1.0, 0.0).angle_gain() - 0.4).abs() < 1e-12);
        assert!((s.at(1.0, 180.0).angle_gain() - 0.4).abs() < 1e-9);
        assert!(s.at(1.0, 45.0).angle_gain() < 1.0);
    }

    #[test]
    fn scene_validation_catches_bad_fields() {
        let mut s = ChannelScene::default();
        s.carrier_hz = 60_000.0;
        assert!(s.validate().is_err());
        let mut s = ChannelScene::default();
        s.k1 = 0.0;
        assert!(s.validate().is_err());
        let mut s = ChannelScene::default();
        s.angle_deg = 200.0;
        assert!(s.validate().is_err());
        assert!(ChannelScene::default().validate().is_ok());
    }
}
