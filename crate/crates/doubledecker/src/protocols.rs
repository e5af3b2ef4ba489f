//! Carrier protocol profiles, frame construction and per-protocol symbol
//! codecs.
//!
//! All four carriers are reduced to the same abstraction: an ordered
//! sequence of [`CarrierSymbol`]s with region labels that the tag and the
//! receiver operate on. Protocol-specific detail lives in the symbol
//! payload: a plain bit for 802.11b, 48 coded bits for 802.11g OFDM, a
//! 32-chip PN sequence for ZigBee and a frequency label for BLE.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;

use crate::chipplan::ChipPlan;
use crate::error::{Error, Result};
use crate::ofdm::{self, CoderState, OfdmSymbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolId {
    WifiB,
    WifiG,
    Zigbee,
    Ble,
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ProtocolId::WifiB => "WIFI_B",
            ProtocolId::WifiG => "WIFI_G",
            ProtocolId::Zigbee => "ZIGBEE",
            ProtocolId::Ble => "BLE",
        };
        f.write_str(name)
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WIFI_B" | "WIFIB" | "802.11B" => Ok(ProtocolId::WifiB),
            "WIFI_G" | "WIFIG" | "802.11G" => Ok(ProtocolId::WifiG),
            "ZIGBEE" => Ok(ProtocolId::Zigbee),
            "BLE" | "BLUETOOTH" => Ok(ProtocolId::Ble),
            other => Err(Error::invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Per-protocol constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolProfile {
    pub protocol_id: ProtocolId,
    /// Carrier symbol duration in microseconds.
    pub symbol_duration_us: u32,
    pub data_bits_per_symbol: usize,
    /// Preamble plus header airtime in microseconds.
    pub preamble_duration_us: u32,
    /// Excitation packet rate in packets per second.
    pub packet_rate: f64,
    pub max_payload_symbols: usize,
    pub default_lambda: usize,
}

// 802.11b/g packet rates are not protocol constants; 500 packets/second
// makes a one-bit-per-packet payload come out at 0.5 kbps. Overridable
// per scenario.
const WIFI_B: ProtocolProfile = ProtocolProfile {
    protocol_id: ProtocolId::WifiB,
    symbol_duration_us: 1,
    data_bits_per_symbol: 1,
    preamble_duration_us: 192,
    packet_rate: 500.0,
    max_payload_symbols: 18_768,
    default_lambda: 16,
};

const WIFI_G: ProtocolProfile = ProtocolProfile {
    protocol_id: ProtocolId::WifiG,
    symbol_duration_us: 4,
    data_bits_per_symbol: 24,
    preamble_duration_us: 20,
    packet_rate: 500.0,
    max_payload_symbols: 1_365,
    default_lambda: 4,
};

const ZIGBEE: ProtocolProfile = ProtocolProfile {
    protocol_id: ProtocolId::Zigbee,
    symbol_duration_us: 16,
    data_bits_per_symbol: 4,
    preamble_duration_us: 160,
    packet_rate: 20.0,
    max_payload_symbols: 254,
    default_lambda: 6,
};

const BLE: ProtocolProfile = ProtocolProfile {
    protocol_id: ProtocolId::Ble,
    symbol_duration_us: 1,
    data_bits_per_symbol: 1,
    preamble_duration_us: 40,
    packet_rate: 70.0,
    // Modulatable region of a broadcast packet: 37 bytes.
    max_payload_symbols: 296,
    default_lambda: 24,
};

pub fn profile(id: ProtocolId) -> ProtocolProfile {
    match id {
        ProtocolId::WifiB => WIFI_B,
        ProtocolId::WifiG => WIFI_G,
        ProtocolId::Zigbee => ZIGBEE,
        ProtocolId::Ble => BLE,
    }
}

/// GFSK frequency label; `F0` carries bit 0, `F1` carries bit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqLabel {
    F0,
    F1,
}

impl FreqLabel {
    pub fn swapped(self) -> FreqLabel {
        match self {
            FreqLabel::F0 => FreqLabel::F1,
            FreqLabel::F1 => FreqLabel::F0,
        }
    }
}

pub fn ble_symbol(bit: u8) -> FreqLabel {
    if bit & 1 == 0 {
        FreqLabel::F0
    } else {
        FreqLabel::F1
    }
}

pub fn ble_symbol_inverse(label: FreqLabel) -> u8 {
    match label {
        FreqLabel::F0 => 0,
        FreqLabel::F1 => 1,
    }
}

/// The 16 standard ZigBee PN sequences, chip c0 in bit 0.
pub fn zigbee_pn_table() -> &'static [u32; 16] {
    static TABLE: OnceLock<[u32; 16]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let raw = include_str!("../data/zigbee_pn.txt");
        let mut table = [0u32; 16];
        let mut n = 0;
        for line in raw.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            assert_eq!(line.len(), 32, "PN table line must have 32 chips");
            let mut chips = 0u32;
            for (i, c) in line.chars().enumerate() {
                match c {
                    '1' => chips |= 1 << i,
                    '0' => {}
                    _ => panic!("PN table entries must be binary"),
                }
            }
            assert!(n < 16, "PN table must have exactly 16 rows");
            table[n] = chips;
            n += 1;
        }
        assert_eq!(n, 16, "PN table must have exactly 16 rows");
        table
    })
}

/// Spread a 4-bit symbol value to its 32-chip PN sequence.
pub fn zigbee_spread(symbol_value: u8) -> u32 {
    zigbee_pn_table()[(symbol_value & 0x0f) as usize]
}

#[inline]
pub fn chip_agreement(a: u32, b: u32) -> u32 {
    32 - (a ^ b).count_ones()
}

/// Best-match despreading: returns the symbol value whose PN sequence
/// agrees with the received chips in the most positions, plus the
/// agreement count. Ties are resolved by a seeded pseudo-random choice
/// among the tied set, which is what makes demodulation of translated
/// symbols nondeterministic.
pub fn zigbee_despread(chips: u32, rng: &mut impl Rng) -> (u8, u32) {
    let table = zigbee_pn_table();
    let mut best = 0u32;
    for &pn in table.iter() {
        best = best.max(chip_agreement(chips, pn));
    }
    let tied: Vec<u8> = (0u8..16)
        .filter(|&v| chip_agreement(chips, table[v as usize]) == best)
        .collect();
    let pick = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.gen_range(0..tied.len())]
    };
    (pick, best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Preamble,
    Pilot,
    Data,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SymbolPayload {
    /// Preamble/header symbol; content is not modeled.
    Preamble,
    /// One DSSS/BPSK or GFSK-equivalent bit (802.11b).
    Bit(u8),
    /// One 802.11g OFDM symbol.
    Ofdm(OfdmSymbol),
    /// ZigBee symbol: the carrier's 4-bit value and the chips on air.
    Zigbee { value: u8, chips: u32 },
    /// BLE GFSK symbol.
    Ble(FreqLabel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarrierSymbol {
    pub payload: SymbolPayload,
    pub region: Region,
}

/// An on-air carrier frame: preamble symbols followed by spread payload
/// symbols carrying `productive_bits`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub profile: ProtocolProfile,
    pub symbols: Vec<CarrierSymbol>,
    /// The raw application bits this frame carries.
    pub productive_bits: Vec<u8>,
    /// Set once the tag has reflected the frame onto the shifted channel.
    pub shifted: bool,
}

impl Frame {
    pub fn airtime_us(&self) -> u32 {
        self.symbols.len() as u32 * self.profile.symbol_duration_us
    }

    pub fn preamble_symbols(&self) -> usize {
        (self.profile.preamble_duration_us / self.profile.symbol_duration_us) as usize
    }

    /// Payload symbols, excluding the preamble.
    pub fn payload(&self) -> &[CarrierSymbol] {
        &self.symbols[self.preamble_symbols()..]
    }

    pub fn payload_mut(&mut self) -> &mut [CarrierSymbol] {
        let start = self.preamble_symbols();
        &mut self.symbols[start..]
    }
}

fn bits_to_zigbee_value(bits: &[u8]) -> u8 {
    // bits[0] is the least significant bit of the 4-bit symbol value.
    bits.iter()
        .enumerate()
        .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << i))
}

pub fn zigbee_value_to_bits(value: u8) -> [u8; 4] {
    [value & 1, (value >> 1) & 1, (value >> 2) & 1, (value >> 3) & 1]
}

/// Build a carrier frame: each productive symbol group is spread
/// `plan.lambda` times into one data chip, the first `plan.pilot_count`
/// repetitions labeled PILOT and the rest DATA, with the protocol
/// preamble prepended.
pub fn build_frame(profile: &ProtocolProfile, productive_bits: &[u8], plan: &ChipPlan) -> Result<Frame> {
    let group_bits = profile.data_bits_per_symbol;
    if !productive_bits.len().is_multiple_of(group_bits) {
        return Err(Error::invalid(format!(
            "productive bits ({}) must be a multiple of {group_bits} for {}",
            productive_bits.len(),
            profile.protocol_id
        )));
    }
    if productive_bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("productive bits must be 0 or 1"));
    }
    let n_groups = productive_bits.len() / group_bits;
    let payload_symbols = n_groups * plan.lambda;
    if payload_symbols > profile.max_payload_symbols {
        return Err(Error::CapacityExceeded {
            needed: payload_symbols,
            max: profile.max_payload_symbols,
        });
    }

    let preamble_count = (profile.preamble_duration_us / profile.symbol_duration_us) as usize;
    let mut symbols = Vec::with_capacity(preamble_count + payload_symbols);
    for _ in 0..preamble_count {
        symbols.push(CarrierSymbol {
            payload: SymbolPayload::Preamble,
            region: Region::Preamble,
        });
    }

    let region_for = |rep: usize| {
        if rep < plan.pilot_count {
            Region::Pilot
        } else {
            Region::Data
        }
    };

    match profile.protocol_id {
        ProtocolId::WifiG => {
            // The OFDM pipeline runs once over the whole spread payload;
            // the copies share decoded content, not coded bits.
            let mut carrier_bits = Vec::with_capacity(payload_symbols * group_bits);
            for group in productive_bits.chunks(group_bits) {
                for _ in 0..plan.lambda {
                    carrier_bits.extend_from_slice(group);
                }
            }
            let ofdm_symbols = ofdm::ofdm_symbol_map(&carrier_bits, &CoderState::default())?;
            for (i, sym) in ofdm_symbols.into_iter().enumerate() {
                symbols.push(CarrierSymbol {
                    payload: SymbolPayload::Ofdm(sym),
                    region: region_for(i % plan.lambda),
                });
            }
        }
        ProtocolId::WifiB | ProtocolId::Ble => {
            for (g, group) in productive_bits.chunks(group_bits).enumerate() {
                let bit = group[0];
                for rep in 0..plan.lambda {
                    let payload = if profile.protocol_id == ProtocolId::WifiB {
                        SymbolPayload::Bit(bit)
                    } else {
                        SymbolPayload::Ble(ble_symbol(bit))
                    };
                    symbols.push(CarrierSymbol {
                        payload,
                        region: region_for(rep),
                    });
                }
                let _ = g;
            }
        }
        ProtocolId::Zigbee => {
            for group in productive_bits.chunks(group_bits) {
                let value = bits_to_zigbee_value(group);
                let chips = zigbee_spread(value);
                for rep in 0..plan.lambda {
                    symbols.push(CarrierSymbol {
                        payload: SymbolPayload::Zigbee { value, chips },
                        region: region_for(rep),
                    });
                }
            }
        }
    }

    Ok(Frame {
        profile: *profile,
        symbols,
        productive_bits: productive_bits.to_vec(),
        shifted: false,
    })
}
