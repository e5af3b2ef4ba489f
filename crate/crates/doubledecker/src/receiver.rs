//! Single-receiver demodulation.
//!
//! The receiver sees only the backscattered frame. Within each chip the
//! leading pilot copies are never translated by the tag, so a per-position
//! majority over them reconstructs the carrier's symbol; each tag bit is
//! then the majority vote, across its symbol group, of "does this data
//! symbol differ from the pilot consensus". For OFDM the comparison is
//! restricted to a decoding window in the middle of each symbol's 24
//! decoded bits, keeping trellis edge effects out of the vote.
//!
//! `decode_freerider` is the dual-receiver reference decoder: it has the
//! original frame available and XORs it against the backscattered one.
//! It exists to cross-check that pilot consensus carries the same
//! information as a second receiver would.

use rand::Rng;

use crate::chipplan::ChipPlan;
use crate::error::{Error, Result};
use crate::ofdm::{self, DATA_BITS_PER_SYMBOL, SCRAMBLER_DEFAULT_SEED};
use crate::protocols::{
    ble_symbol_inverse, zigbee_despread, zigbee_value_to_bits, Frame, ProtocolId, Region,
    SymbolPayload,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodingWindow {
    /// First bit of the window within a symbol's 24 decoded data bits.
    pub start_bit: usize,
    pub length: usize,
}

impl Default for DecodingWindow {
    fn default() -> Self {
        // 20 valid mid-symbol bits, centered in 24.
        DecodingWindow {
            start_bit: 2,
            length: 20,
        }
    }
}

impl DecodingWindow {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::invalid("decoding window must be at least 1 bit"));
        }
        if self.start_bit + self.length > DATA_BITS_PER_SYMBOL {
            return Err(Error::invalid(format!(
                "decoding window {}+{} exceeds {DATA_BITS_PER_SYMBOL} bits",
                self.start_bit, self.length
            )));
        }
        Ok(())
    }
}

/// The contiguous sub-sequence `[start_bit, start_bit + length)` of a
/// symbol's decoded data bits.
pub fn extract_window<'a>(symbol_bits: &'a [u8], window: &DecodingWindow) -> Result<&'a [u8]> {
    window.validate()?;
    if symbol_bits.len() != DATA_BITS_PER_SYMBOL {
        return Err(Error::invalid(format!(
            "expected {DATA_BITS_PER_SYMBOL} decoded bits, got {}",
            symbol_bits.len()
        )));
    }
    Ok(&symbol_bits[window.start_bit..window.start_bit + window.length])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub tag_bits: Vec<u8>,
    pub productive_bits: Vec<u8>,
    /// Fraction of agreeing votes per tag bit, in [0.5, 1].
    pub per_chip_confidence: Vec<f64>,
    pub packet_ok: bool,
    /// Chips whose pilot copies disagreed in more than 40% of positions.
    pub low_confidence_chips: Vec<usize>,
}

/// Per-position majority across equal-length bit rows; ties go to the
/// last row (the latest pilot copy).
fn positional_majority(rows: &[&[u8]]) -> Vec<u8> {
    let width = rows[0].len();
    (0..width)
        .map(|p| {
            let ones = rows.iter().filter(|r| r[p] == 1).count();
            let n = rows.len();
            if 2 * ones > n {
                1
            } else if 2 * ones < n {
                0
            } else {
                rows[n - 1][p]
            }
        })
        .collect()
}

fn positional_majority_chips(rows: &[u32]) -> u32 {
    let n = rows.len();
    let mut out = 0u32;
    for p in 0..32 {
        let ones = rows.iter().filter(|&&r| (r >> p) & 1 == 1).count();
        let bit = if 2 * ones > n {
            1
        } else if 2 * ones < n {
            0
        } else {
            (rows[n - 1] >> p) & 1
        };
        out |= bit << p;
    }
    out
}

fn disagreement_fraction(consensus: &[u8], rows: &[&[u8]]) -> f64 {
    let total = consensus.len() * rows.len();
    if total == 0 {
        return 0.0;
    }
    let mismatches: usize = rows
        .iter()
        .map(|r| r.iter().zip(consensus).filter(|(a, b)| a != b).count())
        .sum();
    mismatches as f64 / total as f64
}

fn chip_disagreement(consensus: u32, rows: &[u32]) -> f64 {
    let total = 32 * rows.len();
    let mismatches: u32 = rows.iter().map(|&r| (r ^ consensus).count_ones()).sum();
    mismatches as f64 / total as f64
}

/// Decode every payload symbol to its bit content: one bit for 802.11b
/// and BLE, 24 descrambled data bits per 802.11g OFDM symbol.
fn decode_symbol_bits(frame: &Frame) -> Result<Vec<Vec<u8>>> {
    let payload = frame.payload();
    match frame.profile.protocol_id {
        ProtocolId::WifiB | ProtocolId::Ble => payload
            .iter()
            .map(|s| match &s.payload {
                SymbolPayload::Bit(b) => Ok(vec![*b]),
                SymbolPayload::Ble(label) => Ok(vec![ble_symbol_inverse(*label)]),
                other => Err(Error::ProtocolViolation(format!(
                    "unexpected payload {other:?} in bit-symbol frame"
                ))),
            })
            .collect(),
        ProtocolId::WifiG => {
            let mut stream = Vec::with_capacity(payload.len() * DATA_BITS_PER_SYMBOL);
            for s in payload {
                match &s.payload {
                    SymbolPayload::Ofdm(sym) => {
                        let deinterleaved = ofdm::deinterleave(&sym.coded_bits)?;
                        stream.extend(ofdm::viterbi_decode_free_start(&deinterleaved)?);
                    }
                    other => {
                        return Err(Error::ProtocolViolation(format!(
                            "unexpected payload {other:?} in OFDM frame"
                        )))
                    }
                }
            }
            let descrambled = ofdm::scramble(&stream, SCRAMBLER_DEFAULT_SEED)?;
            Ok(descrambled
                .chunks(DATA_BITS_PER_SYMBOL)
                .map(|c| c.to_vec())
                .collect())
        }
        ProtocolId::Zigbee => Err(Error::ProtocolViolation(
            "ZigBee frames are decoded at chip level".into(),
        )),
    }
}

fn check_regions(frame: &Frame, plan: &ChipPlan, chips: usize) -> Result<()> {
    let payload = frame.payload();
    for chip in 0..chips {
        for rep in 0..plan.lambda {
            let expected = if rep < plan.pilot_count {
                Region::Pilot
            } else {
                Region::Data
            };
            let got = payload[chip * plan.lambda + rep].region;
            if got != expected {
                return Err(Error::ProtocolViolation(format!(
                    "chip {chip} symbol {rep}: expected {expected:?} region, found {got:?}"
                )));
            }
        }
    }
    Ok(())
}

fn majority_vote(votes: &[u8]) -> (u8, f64) {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    let n = votes.len();
    // Split votes resolve to 0: the physically passive, untranslated state.
    let bit = if 2 * ones > n { 1 } else { 0 };
    let agree = if bit == 1 { ones } else { n - ones };
    (bit, agree as f64 / n as f64)
}

/// Decode tag and productive data from a backscattered frame using only
/// its own pilot symbols as the reference.
pub fn decode_double_decker(
    frame: &Frame,
    plan: &ChipPlan,
    window: &DecodingWindow,
    rng: &mut impl Rng,
) -> Result<DecodeResult> {
    plan.validate()?;
    window.validate()?;
    let chips = plan.chips_in(frame.payload().len());
    check_regions(frame, plan, chips)?;

    if frame.profile.protocol_id == ProtocolId::Zigbee {
        return decode_double_decker_zigbee(frame, plan, chips, rng);
    }

    let symbol_bits = decode_symbol_bits(frame)?;
    let wide = frame.profile.protocol_id == ProtocolId::WifiG;
    let mut result = DecodeResult {
        tag_bits: Vec::with_capacity(chips * plan.tag_bits_per_chip),
        productive_bits: Vec::new(),
        per_chip_confidence: Vec::with_capacity(chips * plan.tag_bits_per_chip),
        packet_ok: true,
        low_confidence_chips: Vec::new(),
    };

    for chip in 0..chips {
        let base = chip * plan.lambda;
        let pilots: Vec<&[u8]> = (0..plan.pilot_count)
            .map(|r| symbol_bits[base + r].as_slice())
            .collect();
        let consensus = positional_majority(&pilots);
        if disagreement_fraction(&consensus, &pilots) > 0.4 {
            result.low_confidence_chips.push(chip);
        }

        let mut chip_tag_bits = Vec::with_capacity(plan.tag_bits_per_chip);
        for group in 0..plan.tag_bits_per_chip {
            let start = base + plan.pilot_count + group * plan.group_size;
            let votes: Vec<u8> = (start..start + plan.group_size)
                .map(|i| {
                    let bits = &symbol_bits[i];
                    let (c, b) = if wide {
                        (
                            extract_window(&consensus, window).unwrap(),
                            extract_window(bits, window).unwrap(),
                        )
                    } else {
                        (consensus.as_slice(), bits.as_slice())
                    };
                    let differing = c.iter().zip(b).filter(|(x, y)| x != y).count();
                    u8::from(2 * differing > c.len())
                })
                .collect();
            let (bit, confidence) = majority_vote(&votes);
            chip_tag_bits.push(bit);
            result.tag_bits.push(bit);
            result.per_chip_confidence.push(confidence);
        }

        // Productive recovery: strip the decoded translations off the
        // data copies and take a positional majority over all of them
        // together with the pilots.
        let mut stripped: Vec<Vec<u8>> = pilots.iter().map(|p| p.to_vec()).collect();
        for group in 0..plan.tag_bits_per_chip {
            let start = base + plan.pilot_count + group * plan.group_size;
            for i in start..start + plan.group_size {
                let mut bits = symbol_bits[i].clone();
                if chip_tag_bits[group] == 1 {
                    for b in &mut bits {
                        *b ^= 1;
                    }
                }
                stripped.push(bits);
            }
        }
        let rows: Vec<&[u8]> = stripped.iter().map(|r| r.as_slice()).collect();
        result.productive_bits.extend(positional_majority(&rows));
    }
    Ok(result)
}

fn decode_double_decker_zigbee(
    frame: &Frame,
    plan: &ChipPlan,
    chips: usize,
    rng: &mut impl Rng,
) -> Result<DecodeResult> {
    let payload = frame.payload();
    let sym_chips = |i: usize| -> Result<u32> {
        match payload[i].payload {
            SymbolPayload::Zigbee { chips, .. } => Ok(chips),
            ref other => Err(Error::ProtocolViolation(format!(
                "unexpected payload {other:?} in ZigBee frame"
            ))),
        }
    };

    let mut result = DecodeResult {
        tag_bits: Vec::with_capacity(chips * plan.tag_bits_per_chip),
        productive_bits: Vec::new(),
        per_chip_confidence: Vec::with_capacity(chips * plan.tag_bits_per_chip),
        packet_ok: true,
        low_confidence_chips: Vec::new(),
    };

    for chip in 0..chips {
        let base = chip * plan.lambda;
        let pilots: Vec<u32> = (0..plan.pilot_count)
            .map(|r| sym_chips(base + r))
            .collect::<Result<_>>()?;
        let consensus = positional_majority_chips(&pilots);
        if chip_disagreement(consensus, &pilots) > 0.4 {
            result.low_confidence_chips.push(chip);
        }
        let (pilot_value, _) = zigbee_despread(consensus, rng);

        let mut chip_tag_bits = Vec::with_capacity(plan.tag_bits_per_chip);
        for group in 0..plan.tag_bits_per_chip {
            let start = base + plan.pilot_count + group * plan.group_size;
            let votes: Vec<u8> = (start..start + plan.group_size)
                .map(|i| {
                    let (value, _) = zigbee_despread(sym_chips(i)?, rng);
                    Ok(u8::from(value != pilot_value))
                })
                .collect::<Result<_>>()?;
            let (bit, confidence) = majority_vote(&votes);
            chip_tag_bits.push(bit);
            result.tag_bits.push(bit);
            result.per_chip_confidence.push(confidence);
        }

        let mut stripped: Vec<u32> = pilots;
        for group in 0..plan.tag_bits_per_chip {
            let start = base + plan.pilot_count + group * plan.group_size;
            for i in start..start + plan.group_size {
                let c = sym_chips(i)?;
                stripped.push(if chip_tag_bits[group] == 1 { !c } else { c });
            }
        }
        let merged = positional_majority_chips(&stripped);
        let (value, _) = zigbee_despread(merged, rng);
        result.productive_bits.extend(zigbee_value_to_bits(value));
    }
    Ok(result)
}

/// Dual-receiver reference decoder: recovers tag bits by comparing the
/// backscattered frame against the original, group by group.
pub fn decode_freerider(
    original: &Frame,
    backscattered: &Frame,
    plan: &ChipPlan,
    window: &DecodingWindow,
    rng: &mut impl Rng,
) -> Result<Vec<u8>> {
    plan.validate()?;
    window.validate()?;
    if original.profile.protocol_id != backscattered.profile.protocol_id {
        return Err(Error::invalid("frames use different protocols"));
    }
    if original.symbols.len() != backscattered.symbols.len() {
        return Err(Error::invalid(format!(
            "frame length mismatch: {} vs {} symbols",
            original.symbols.len(),
            backscattered.symbols.len()
        )));
    }
    let chips = plan.chips_in(original.payload().len());
    check_regions(backscattered, plan, chips)?;

    let mut tag_bits = Vec::with_capacity(chips * plan.tag_bits_per_chip);

    if original.profile.protocol_id == ProtocolId::Zigbee {
        let orig = original.payload();
        let back = backscattered.payload();
        for chip in 0..chips {
            for group in 0..plan.tag_bits_per_chip {
                let start = chip * plan.lambda + plan.pilot_count + group * plan.group_size;
                let votes: Vec<u8> = (start..start + plan.group_size)
                    .map(|i| {
                        let reference = match orig[i].payload {
                            SymbolPayload::Zigbee { value, .. } => value,
                            ref other => {
                                return Err(Error::ProtocolViolation(format!(
                                    "unexpected payload {other:?} in ZigBee frame"
                                )))
                            }
                        };
                        let received = match back[i].payload {
                            SymbolPayload::Zigbee { chips, .. } => chips,
                            ref other => {
                                return Err(Error::ProtocolViolation(format!(
                                    "unexpected payload {other:?} in ZigBee frame"
                                )))
                            }
                        };
                        let (value, _) = zigbee_despread(received, rng);
                        Ok(u8::from(value != reference))
                    })
                    .collect::<Result<_>>()?;
                tag_bits.push(majority_vote(&votes).0);
            }
        }
        return Ok(tag_bits);
    }

    let orig_bits = decode_symbol_bits(original)?;
    let back_bits = decode_symbol_bits(backscattered)?;
    let wide = original.profile.protocol_id == ProtocolId::WifiG;
    for chip in 0..chips {
        for group in 0..plan.tag_bits_per_chip {
            let start = chip * plan.lambda + plan.pilot_count + group * plan.group_size;
            let votes: Vec<u8> = (start..start + plan.group_size)
                .map(|i| {
                    let (a, b) = if wide {
                        (
                            extract_window(&orig_bits[i], window).unwrap(),
                            extract_window(&back_bits[i], window).unwrap(),
                        )
                    } else {
                        (orig_bits[i].as_slice(), back_bits[i].as_slice())
                    };
                    let differing = a.iter().zip(b).filter(|(x, y)| x != y).count();
                    u8::from(2 * differing > a.len())
                })
                .collect();
            tag_bits.push(majority_vote(&votes).0);
        }
    }
    Ok(tag_bits)
}
