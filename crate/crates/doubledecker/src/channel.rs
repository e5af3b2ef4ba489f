//! Propagation and error model between tag and receiver.
//!
//! Signal strength follows the log-distance path-loss law; packets whose
//! RSSI falls at or below the noise floor are lost outright, and near the
//! floor delivery degrades along a logistic ramp. Delivered payloads pass
//! through a two-state Gilbert-Elliott process that produces bursty
//! symbol errors, applied at each protocol's natural error unit: payload
//! bits for 802.11b, coded bits for 802.11g OFDM, chips for ZigBee and
//! frequency labels for BLE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::protocols::{Frame, SymbolPayload};
use crate::tag::translated;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeParams {
    pub p_good_to_bad: f64,
    pub p_bad_to_good: f64,
    pub err_rate_good: f64,
    pub err_rate_bad: f64,
}

impl Default for GeParams {
    fn default() -> Self {
        GeParams {
            p_good_to_bad: 0.0,
            p_bad_to_good: 1.0,
            err_rate_good: 0.0,
            err_rate_bad: 0.0,
        }
    }
}

impl GeParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_good_to_bad", self.p_good_to_bad),
            ("p_bad_to_good", self.p_bad_to_good),
            ("err_rate_good", self.err_rate_good),
            ("err_rate_bad", self.err_rate_bad),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::config(name, format!("{v} is not a probability")));
            }
        }
        if self.err_rate_bad < self.err_rate_good {
            return Err(Error::config(
                "err_rate_bad",
                "must be at least err_rate_good",
            ));
        }
        Ok(())
    }

    /// Long-run error rate: the stationary state mixture of the two
    /// per-state error rates.
    pub fn stationary_error_rate(&self) -> f64 {
        let denom = self.p_good_to_bad + self.p_bad_to_good;
        if denom == 0.0 {
            return self.err_rate_good;
        }
        let pi_bad = self.p_good_to_bad / denom;
        (1.0 - pi_bad) * self.err_rate_good + pi_bad * self.err_rate_bad
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// RSSI at 1 m, in dBm.
    pub reference_rssi: f64,
    pub path_loss_exponent: f64,
    /// Packets at or below this RSSI are undecodable.
    pub noise_floor: f64,
    /// Logistic delivery ramp offset in dB above the floor.
    pub ramp_offset_db: f64,
    /// How strongly a weak signal stretches bad-state dwell time.
    pub rssi_dwell_slope: f64,
    pub ge: GeParams,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            // Calibrated so rssi_at(28 m) = -86 dBm with exponent 2.7.
            reference_rssi: -86.0 + 10.0 * 2.7 * 28f64.log10(),
            path_loss_exponent: 2.7,
            noise_floor: -95.0,
            ramp_offset_db: 11.0,
            rssi_dwell_slope: 0.0,
            ge: GeParams::default(),
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.path_loss_exponent.is_finite() || self.path_loss_exponent <= 0.0 {
            return Err(Error::config(
                "path_loss_exponent",
                "must be a positive finite number",
            ));
        }
        self.ge.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeState {
    Good,
    Bad,
}

/// Mutable per-trial channel state; never share a live one across
/// threads — concurrent trials each own their own state and seed.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub ge_state: GeState,
    rng: ChaCha8Rng,
}

impl ChannelState {
    pub fn new(seed: u64) -> Self {
        ChannelState {
            ge_state: GeState::Good,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_config(config: &ChannelConfig) -> Self {
        Self::new(config.seed)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Advance the Gilbert-Elliott process one error unit and report
    /// whether that unit is hit. `p_recover` is the (possibly
    /// dwell-stretched) bad-to-good transition probability.
    fn step(&mut self, ge: &GeParams, p_recover: f64) -> bool {
        let err_rate = match self.ge_state {
            GeState::Good => ge.err_rate_good,
            GeState::Bad => ge.err_rate_bad,
        };
        let hit = err_rate > 0.0 && self.rng.gen::<f64>() < err_rate;
        match self.ge_state {
            GeState::Good => {
                if ge.p_good_to_bad > 0.0 && self.rng.gen::<f64>() < ge.p_good_to_bad {
                    self.ge_state = GeState::Bad;
                }
            }
            GeState::Bad => {
                if p_recover > 0.0 && self.rng.gen::<f64>() < p_recover {
                    self.ge_state = GeState::Good;
                }
            }
        }
        hit
    }
}

/// Log-distance path loss: `reference_rssi − 10·n·log10(distance)`.
pub fn rssi_at(config: &ChannelConfig, distance_m: f64) -> Result<f64> {
    if distance_m <= 0.0 || distance_m.is_nan() {
        return Err(Error::invalid(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok(config.reference_rssi - 10.0 * config.path_loss_exponent * distance_m.log10())
}

/// Probability that a packet at `rssi` is delivered at all.
pub fn delivery_probability(config: &ChannelConfig, rssi: f64) -> f64 {
    if rssi <= config.noise_floor {
        return 0.0;
    }
    let x = config.noise_floor + config.ramp_offset_db - rssi;
    (1.0 / (1.0 + x.exp())).clamp(0.0, 1.0)
}

/// Propagate a backscattered frame over `distance_m`. Returns the
/// (possibly corrupted) frame, or `None` when the packet is lost, plus
/// the RSSI it was received at.
pub fn transmit(
    frame: &Frame,
    state: &mut ChannelState,
    config: &ChannelConfig,
    distance_m: f64,
) -> Result<(Option<Frame>, f64)> {
    config.validate()?;
    let rssi = rssi_at(config, distance_m)?;
    let p_deliver = delivery_probability(config, rssi);
    if p_deliver <= 0.0 || state.rng.gen::<f64>() >= p_deliver {
        return Ok((None, rssi));
    }

    // Weak signals stretch bad-state dwell time (delivery and corruption
    // stay independently tunable; error rates themselves are untouched).
    let margin = rssi - config.noise_floor;
    let deficit = (config.ramp_offset_db - margin).max(0.0);
    let p_recover = config.ge.p_bad_to_good / (1.0 + config.rssi_dwell_slope * deficit);

    let mut out = frame.clone();
    for sym in out.payload_mut() {
        match &mut sym.payload {
            SymbolPayload::Preamble => {}
            SymbolPayload::Bit(_) | SymbolPayload::Ble(_) => {
                if state.step(&config.ge, p_recover) {
                    sym.payload = translated(&sym.payload);
                }
            }
            SymbolPayload::Ofdm(ofdm) => {
                for bit in ofdm.coded_bits.iter_mut() {
                    if state.step(&config.ge, p_recover) {
                        *bit ^= 1;
                    }
                }
            }
            SymbolPayload::Zigbee { chips, .. } => {
                for i in 0..32 {
                    if state.step(&config.ge, p_recover) {
                        *chips ^= 1 << i;
                    }
                }
            }
        }
    }
    Ok((Some(out), rssi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipplan::{plan_for_mode, Mode};
    use crate::protocols::{build_frame, profile, ProtocolId};

    #[test]
    fn rssi_formula_and_calibration_anchor() {
        let cfg = ChannelConfig::default();
        assert!((rssi_at(&cfg, 1.0).unwrap() - cfg.reference_rssi).abs() < 1e-12);
        assert!((rssi_at(&cfg, 28.0).unwrap() - (-86.0)).abs() < 1e-9);
        // Doubling distance always costs 10·n·log10(2) dB.
        for d in [1.0, 3.5, 14.0] {
            let drop = rssi_at(&cfg, 2.0 * d).unwrap() - rssi_at(&cfg, d).unwrap();
            assert!((drop - (-10.0 * 2.7 * 2f64.log10())).abs() < 1e-9);
        }
        assert!(rssi_at(&cfg, 0.0).is_err());
        assert!(rssi_at(&cfg, -3.0).is_err());
    }

    #[test]
    fn delivery_hard_threshold_and_ramp() {
        let cfg = ChannelConfig::default();
        assert_eq!(delivery_probability(&cfg, cfg.noise_floor - 0.1), 0.0);
        assert_eq!(delivery_probability(&cfg, cfg.noise_floor), 0.0);
        // Far above the floor delivery saturates near 1.
        assert!(delivery_probability(&cfg, -50.0) > 0.999);
        // At 28 m (-86 dBm, 9 dB margin) delivery is poor.
        let p28 = delivery_probability(&cfg, -86.0);
        assert!(p28 < 0.2, "delivery at 28 m = {p28}");
        // Monotone in rssi.
        let mut last = 0.0;
        for rssi in (-95..-40).map(f64::from) {
            let p = delivery_probability(&cfg, rssi);
            assert!(p >= last);
            last = p;
        }
    }

    fn test_frame() -> Frame {
        let p = profile(ProtocolId::WifiB);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        build_frame(&p, &[1, 0, 1, 1, 0, 0, 1, 0], &plan).unwrap()
    }

    #[test]
    fn noiseless_strong_link_delivers_unchanged() {
        let cfg = ChannelConfig::default();
        let frame = test_frame();
        let mut state = ChannelState::new(7);
        let (out, rssi) = transmit(&frame, &mut state, &cfg, 1.0).unwrap();
        assert!((rssi - cfg.reference_rssi).abs() < 1e-12);
        assert_eq!(out.unwrap(), frame);
    }

    #[test]
    fn below_floor_always_lost() {
        let cfg = ChannelConfig::default();
        let frame = test_frame();
        let mut state = ChannelState::new(7);
        // 2000 m is far below the floor for the default calibration.
        for _ in 0..50 {
            let (out, rssi) = transmit(&frame, &mut state, &cfg, 2000.0).unwrap();
            assert!(rssi <= cfg.noise_floor);
            assert!(out.is_none());
        }
    }

    #[test]
    fn identical_seed_identical_transcript() {
        let mut cfg = ChannelConfig::default();
        cfg.ge = GeParams {
            p_good_to_bad: 0.05,
            p_bad_to_good: 0.2,
            err_rate_good: 0.001,
            err_rate_bad: 0.3,
        };
        let frame = test_frame();
        let run = || {
            let mut state = ChannelState::new(42);
            (0..200)
                .map(|_| transmit(&frame, &mut state, &cfg, 20.0).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        for ((fa, ra), (fb, rb)) in a.iter().zip(&b) {
            assert_eq!(ra, rb);
            assert_eq!(fa, fb);
        }
        assert!(a.iter().any(|(f, _)| f.is_some()));
        assert!(a
            .iter()
            .any(|(f, _)| matches!(f, Some(f) if f.payload() != test_frame().payload())));
    }

    #[test]
    fn ge_empirical_rate_matches_stationary_mixture() {
        let ge = GeParams {
            p_good_to_bad: 0.02,
            p_bad_to_good: 0.1,
            err_rate_good: 0.005,
            err_rate_bad: 0.4,
        };
        ge.validate().unwrap();
        let mut state = ChannelState::new(1234);
        let n = 1_000_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            if state.step(&ge, ge.p_bad_to_good) {
                hits += 1;
            }
        }
        let measured = hits as f64 / n as f64;
        let expected = ge.stationary_error_rate();
        let rel = (measured - expected).abs() / expected;
        assert!(
            rel < 0.02,
            "measured {measured:.5} vs stationary {expected:.5} (rel err {rel:.4})"
        );
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut ge = GeParams::default();
        ge.p_good_to_bad = 1.5;
        assert!(ge.validate().is_err());
        let mut ge = GeParams::default();
        ge.err_rate_good = 0.2;
        ge.err_rate_bad = 0.1;
        assert!(ge.validate().is_err());
        let mut cfg = ChannelConfig::default();
        cfg.path_loss_exponent = 0.0;
        assert!(cfg.validate().is_err());
    }
}
