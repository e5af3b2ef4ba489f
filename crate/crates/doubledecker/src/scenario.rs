//! Scenario configuration files.
//!
//! Scenarios are flat, line-oriented text: `key = value` pairs grouped
//! under optional `[section]` headers, `#` starts a comment. The format
//! is chosen for diffability; the full grammar is documented in the
//! repository README.
//!
//! Recognized sections and keys:
//!
//! ```text
//! protocol = WIFI_B | WIFI_G | ZIGBEE | BLE
//! mode = MODE1 | MODE2 | MODE3
//! distances = 1, 4, 8, 16          # meters, strictly increasing
//! packets_per_point = 1000
//! payload_symbols = 96             # carrier symbols per packet payload
//! seed = 42
//!
//! [channel]                        # all optional, defaults calibrated
//! reference_rssi / path_loss_exponent / noise_floor / ramp_offset_db
//! rssi_dwell_slope
//! p_good_to_bad / p_bad_to_good / err_rate_good / err_rate_bad
//!
//! [plan]                           # optional chip-geometry overrides
//! lambda / pilot_count / tag_bits_per_chip / group_size
//!
//! [profile]                        # optional protocol overrides
//! packet_rate / preamble_duration_us / max_payload_symbols
//!
//! [window]                         # OFDM decoding window
//! start_bit / length
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::channel::ChannelConfig;
use crate::chipplan::{plan_for_mode, ChipPlan, Mode};
use crate::error::{Error, Result};
use crate::protocols::{profile, ProtocolId, ProtocolProfile};
use crate::receiver::DecodingWindow;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanOverrides {
    pub lambda: Option<usize>,
    pub pilot_count: Option<usize>,
    pub tag_bits_per_chip: Option<usize>,
    pub group_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProfileOverrides {
    pub packet_rate: Option<f64>,
    pub preamble_duration_us: Option<u32>,
    pub max_payload_symbols: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub protocol: ProtocolId,
    pub mode: Mode,
    pub distances: Vec<f64>,
    pub packets_per_point: u64,
    pub payload_symbols: usize,
    pub channel: ChannelConfig,
    pub plan_overrides: PlanOverrides,
    pub profile_overrides: ProfileOverrides,
    pub window: DecodingWindow,
    pub seed: u64,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.packets_per_point == 0 {
            return Err(Error::config("packets_per_point", "must be at least 1"));
        }
        if self.distances.is_empty() {
            return Err(Error::config("distances", "must list at least one distance"));
        }
        if !self.distances.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("distances", "must be strictly increasing"));
        }
        if self.distances.iter().any(|&d| d <= 0.0 || d.is_nan()) {
            return Err(Error::config("distances", "must be positive"));
        }
        if self.payload_symbols == 0 {
            return Err(Error::config("payload_symbols", "must be at least 1"));
        }
        self.channel.validate()?;
        self.window.validate()?;
        self.resolved_plan()?;
        let p = self.resolved_profile();
        if self.payload_symbols > p.max_payload_symbols {
            return Err(Error::config(
                "payload_symbols",
                format!(
                    "{} exceeds the protocol limit of {}",
                    self.payload_symbols, p.max_payload_symbols
                ),
            ));
        }
        Ok(())
    }

    pub fn resolved_profile(&self) -> ProtocolProfile {
        let mut p = profile(self.protocol);
        if let Some(rate) = self.profile_overrides.packet_rate {
            p.packet_rate = rate;
        }
        if let Some(pre) = self.profile_overrides.preamble_duration_us {
            p.preamble_duration_us = pre;
        }
        if let Some(max) = self.profile_overrides.max_payload_symbols {
            p.max_payload_symbols = max;
        }
        p
    }

    /// The chip plan for this scenario: the mode's default geometry on
    /// the resolved profile, with any explicit overrides applied on top.
    pub fn resolved_plan(&self) -> Result<ChipPlan> {
        let p = self.resolved_profile();
        let o = &self.plan_overrides;
        let mut plan = if let Some(lambda) = o.lambda {
            let mut plan = ChipPlan::balanced(lambda)
                .map_err(|e| Error::config("plan.lambda", e.to_string()))?;
            plan.mode = self.mode;
            plan
        } else {
            plan_for_mode(self.mode, &p, self.payload_symbols)?
        };
        if let Some(pc) = o.pilot_count {
            plan.pilot_count = pc;
            if plan.tag_bits_per_chip > 0 && plan.lambda > pc {
                plan.group_size = (plan.lambda - pc) / plan.tag_bits_per_chip;
            }
        }
        if let Some(t) = o.tag_bits_per_chip {
            plan.tag_bits_per_chip = t;
            if t > 0 && plan.lambda > plan.pilot_count {
                plan.group_size = (plan.lambda - plan.pilot_count) / t;
            }
        }
        if let Some(g) = o.group_size {
            plan.group_size = g;
        }
        plan.validate()?;
        if !self.payload_symbols.is_multiple_of(plan.lambda) {
            return Err(Error::config(
                "payload_symbols",
                format!(
                    "{} is not a multiple of the chip size {}",
                    self.payload_symbols, plan.lambda
                ),
            ));
        }
        Ok(plan)
    }
}

fn parse_field<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| {
        let field = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        Error::config(field, format!("cannot parse `{value}`: {e}"))
    })
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(text: &str) -> Result<Scenario> {
        // First pass: collect (section, key) -> value, rejecting
        // duplicates and malformed lines early.
        let mut entries: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::invalid(format!("line {}: unterminated section header", lineno + 1))
                })?;
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if entries
                .insert((section.clone(), key.clone()), value)
                .is_some()
            {
                return Err(Error::config(
                    format!("{section}.{key}"),
                    "duplicate assignment",
                ));
            }
        }

        let mut protocol = None;
        let mut mode = None;
        let mut distances = Vec::new();
        let mut packets_per_point = 1000u64;
        let mut payload_symbols = None;
        let mut channel = ChannelConfig::default();
        let mut plan_overrides = PlanOverrides::default();
        let mut profile_overrides = ProfileOverrides::default();
        let mut window = DecodingWindow::default();
        let mut seed = 0u64;

        for ((section, key), value) in &entries {
            let (s, k, v) = (section.as_str(), key.as_str(), value.as_str());
            match (s, k) {
                ("", "protocol") => protocol = Some(parse_field::<ProtocolId>(s, k, v)?),
                ("", "mode") => mode = Some(parse_field::<Mode>(s, k, v)?),
                ("", "distances") => {
                    distances = v
                        .split(',')
                        .map(|d| parse_field::<f64>(s, "distances", d.trim()))
                        .collect::<Result<_>>()?;
                }
                ("", "packets_per_point") => packets_per_point = parse_field(s, k, v)?,
                ("", "payload_symbols") => payload_symbols = Some(parse_field(s, k, v)?),
                ("", "seed") => seed = parse_field(s, k, v)?,
                ("channel", "reference_rssi") => channel.reference_rssi = parse_field(s, k, v)?,
                ("channel", "path_loss_exponent") => {
                    channel.path_loss_exponent = parse_field(s, k, v)?
                }
                ("channel", "noise_floor") => channel.noise_floor = parse_field(s, k, v)?,
                ("channel", "ramp_offset_db") => channel.ramp_offset_db = parse_field(s, k, v)?,
                ("channel", "rssi_dwell_slope") => {
                    channel.rssi_dwell_slope = parse_field(s, k, v)?
                }
                ("channel", "p_good_to_bad") => channel.ge.p_good_to_bad = parse_field(s, k, v)?,
                ("channel", "p_bad_to_good") => channel.ge.p_bad_to_good = parse_field(s, k, v)?,
                ("channel", "err_rate_good") => channel.ge.err_rate_good = parse_field(s, k, v)?,
                ("channel", "err_rate_bad") => channel.ge.err_rate_bad = parse_field(s, k, v)?,
                ("channel", "seed") => channel.seed = parse_field(s, k, v)?,
                ("plan", "lambda") => plan_overrides.lambda = Some(parse_field(s, k, v)?),
                ("plan", "pilot_count") => plan_overrides.pilot_count = Some(parse_field(s, k, v)?),
                ("plan", "tag_bits_per_chip") => {
                    plan_overrides.tag_bits_per_chip = Some(parse_field(s, k, v)?)
                }
                ("plan", "group_size") => plan_overrides.group_size = Some(parse_field(s, k, v)?),
                ("profile", "packet_rate") => {
                    profile_overrides.packet_rate = Some(parse_field(s, k, v)?)
                }
                ("profile", "preamble_duration_us") => {
                    profile_overrides.preamble_duration_us = Some(parse_field(s, k, v)?)
                }
                ("profile", "max_payload_symbols") => {
                    profile_overrides.max_payload_symbols = Some(parse_field(s, k, v)?)
                }
                ("window", "start_bit") => window.start_bit = parse_field(s, k, v)?,
                ("window", "length") => window.length = parse_field(s, k, v)?,
                _ => {
                    return Err(Error::config(
                        if s.is_empty() {
                            k.to_string()
                        } else {
                            format!("{s}.{k}")
                        },
                        "unknown key",
                    ))
                }
            }
        }

        let scenario = Scenario {
            protocol: protocol.ok_or_else(|| Error::config("protocol", "missing"))?,
            mode: mode.ok_or_else(|| Error::config("mode", "missing"))?,
            distances,
            packets_per_point,
            payload_symbols: payload_symbols
                .ok_or_else(|| Error::config("payload_symbols", "missing"))?,
            channel,
            plan_overrides,
            profile_overrides,
            window,
            seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
