//! Chip geometry planning and rate accounting.
//!
//! A data chip is a run of `lambda` identical carrier symbols; the first
//! `pilot_count` of them are the unmodulated pilot reference and the
//! remaining symbols are split into `tag_bits_per_chip` groups of
//! `group_size` symbols, each group carrying one tag bit by
//! presence/absence of translation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::protocols::ProtocolProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Balanced: chip length is the protocol default lambda, half of it
    /// pilot, one tag bit per chip.
    Mode1,
    /// Throughput-leaning: chips twice as long but with a quarter of the
    /// pilot density, three tag bits per chip.
    Mode2,
    /// Reliability-leaning: the whole payload is a single chip with one
    /// pilot symbol; every remaining symbol carries its own tag bit.
    Mode3,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Mode::Mode1 => "MODE1",
            Mode::Mode2 => "MODE2",
            Mode::Mode3 => "MODE3",
        };
        f.write_str(name)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MODE1" | "1" => Ok(Mode::Mode1),
            "MODE2" | "2" => Ok(Mode::Mode2),
            "MODE3" | "3" => Ok(Mode::Mode3),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChipPlan {
    /// Carrier symbols per data chip.
    pub lambda: usize,
    /// Leading unmodulated symbols per chip.
    pub pilot_count: usize,
    pub tag_bits_per_chip: usize,
    pub mode: Mode,
    /// Modulatable symbols per tag bit.
    pub group_size: usize,
}

impl ChipPlan {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 2 {
            return Err(Error::invalid("chip must have at least 2 symbols"));
        }
        if self.pilot_count == 0 || self.pilot_count >= self.lambda {
            return Err(Error::invalid(format!(
                "pilot count {} must be in 1..{}",
                self.pilot_count, self.lambda
            )));
        }
        if self.group_size == 0 || self.tag_bits_per_chip == 0 {
            return Err(Error::invalid("chip must carry at least one tag bit"));
        }
        if self.pilot_count + self.tag_bits_per_chip * self.group_size != self.lambda {
            return Err(Error::invalid(format!(
                "chip geometry mismatch: {} pilot + {}x{} data != lambda {}",
                self.pilot_count, self.tag_bits_per_chip, self.group_size, self.lambda
            )));
        }
        Ok(())
    }

    /// Data chips a payload of `payload_symbols` carrier symbols holds.
    pub fn chips_in(&self, payload_symbols: usize) -> usize {
        payload_symbols / self.lambda
    }

    /// A MODE1-shaped plan with an explicit spreading factor: half the
    /// chip is pilot, the rest is a single tag-bit group.
    pub fn balanced(lambda: usize) -> Result<ChipPlan> {
        let pilot_count = (lambda / 2).max(1);
        let plan = ChipPlan {
            lambda,
            pilot_count,
            tag_bits_per_chip: 1,
            mode: Mode::Mode1,
            group_size: lambda.saturating_sub(pilot_count),
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Derive the chip geometry for a mode on a protocol.
///
/// `payload_symbols` is only consulted by [`Mode::Mode3`], where the chip
/// spans the whole payload.
pub fn plan_for_mode(mode: Mode, profile: &ProtocolProfile, payload_symbols: usize) -> Result<ChipPlan> {
    let d = profile.default_lambda;
    let plan = match mode {
        Mode::Mode1 => ChipPlan {
            lambda: d,
            pilot_count: d / 2,
            tag_bits_per_chip: 1,
            mode,
            group_size: d - d / 2,
        },
        Mode::Mode2 => {
            let lambda = 2 * d;
            let pilot_count = (d / 2).max(1);
            let data = lambda - pilot_count;
            if !data.is_multiple_of(3) {
                return Err(Error::invalid(format!(
                    "MODE2 data span {data} is not divisible into 3 tag-bit groups"
                )));
            }
            ChipPlan {
                lambda,
                pilot_count,
                tag_bits_per_chip: 3,
                mode,
                group_size: data / 3,
            }
        }
        Mode::Mode3 => {
            if payload_symbols < 2 {
                return Err(Error::invalid(
                    "MODE3 needs a payload of at least 2 symbols",
                ));
            }
            ChipPlan {
                lambda: payload_symbols,
                pilot_count: 1,
                tag_bits_per_chip: payload_symbols - 1,
                mode,
                group_size: 1,
            }
        }
    };
    plan.validate()?;
    Ok(plan)
}

/// Link rates over a measurement interval, all in kbps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub tag_rate_kbps: f64,
    pub productive_rate_kbps: f64,
    pub aggregate_rate_kbps: f64,
}

/// Account tag-link and productive-link rates for `packets_received`
/// packets of `payload_symbols` carrier symbols delivered during
/// `interval_secs`.
pub fn account_rates(
    plan: &ChipPlan,
    profile: &ProtocolProfile,
    packets_received: u64,
    payload_symbols: usize,
    interval_secs: f64,
) -> RateReport {
    assert!(interval_secs > 0.0, "interval must be positive");
    let chips = plan.chips_in(payload_symbols) as f64;
    let pkts = packets_received as f64;
    let tag_bits = pkts * chips * plan.tag_bits_per_chip as f64;
    let productive_bits = pkts * chips * profile.data_bits_per_symbol as f64;
    let tag = tag_bits / interval_secs / 1000.0;
    let productive = productive_bits / interval_secs / 1000.0;
    RateReport {
        tag_rate_kbps: tag,
        productive_rate_kbps: productive,
        aggregate_rate_kbps: tag + productive,
    }
}
