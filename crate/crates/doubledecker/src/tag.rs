//! Tag-side codeword translation.
//!
//! The tag reflects the carrier frame onto the shifted channel and embeds
//! its bits by translating whole symbol groups: a tag bit of 1 complements
//! every modulatable symbol of its group, a tag bit of 0 passes the group
//! through unchanged. Preamble and pilot symbols are never translated.
//!
//! ZigBee adds one imperfection. The RF switch actuates at chip
//! boundaries, and when a chip ends in the translated state the switch is
//! still settling while the next chip's first pilot symbol starts; a
//! random-length prefix of that pilot's 32 chips comes out inverted. With
//! several pilot copies per chip the receiver's consensus absorbs this,
//! but a single-pilot geometry exposes it.

use rand::Rng;

use crate::chipplan::ChipPlan;
use crate::error::{Error, Result};
use crate::protocols::{Frame, ProtocolId, Region, SymbolPayload};

/// The translated image of a carrier symbol payload: BPSK/GFSK symbols
/// are complemented or frequency-swapped, OFDM symbols have all 48 coded
/// bits flipped, ZigBee symbols have all 32 chips inverted.
pub fn translated(payload: &SymbolPayload) -> SymbolPayload {
    match payload {
        SymbolPayload::Preamble => SymbolPayload::Preamble,
        SymbolPayload::Bit(b) => SymbolPayload::Bit(b ^ 1),
        SymbolPayload::Ofdm(sym) => SymbolPayload::Ofdm(sym.complemented()),
        SymbolPayload::Zigbee { value, chips } => SymbolPayload::Zigbee {
            value: *value,
            chips: !chips,
        },
        SymbolPayload::Ble(label) => SymbolPayload::Ble(label.swapped()),
    }
}

fn invert_leading_chips(chips: u32, k: u32) -> u32 {
    debug_assert!(k <= 32);
    if k == 0 {
        chips
    } else if k >= 32 {
        !chips
    } else {
        chips ^ ((1u32 << k) - 1)
    }
}

/// Backscatter `tag_bits` onto `frame` in place.
///
/// `tag_bits` must supply exactly `tag_bits_per_chip` bits for every full
/// chip in the payload; a trailing partial chip is passed through
/// untranslated. The RNG drives only the ZigBee switch-settling model and
/// is untouched for other carriers.
pub fn modulate(
    frame: &mut Frame,
    plan: &ChipPlan,
    tag_bits: &[u8],
    rng: &mut impl Rng,
) -> Result<()> {
    plan.validate()?;
    if frame.shifted {
        return Err(Error::ProtocolViolation(
            "frame has already been backscattered".into(),
        ));
    }
    if tag_bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("tag bits must be 0 or 1"));
    }
    let protocol = frame.profile.protocol_id;
    let payload = frame.payload_mut();
    let chips = payload.len() / plan.lambda;
    let expected = chips * plan.tag_bits_per_chip;
    if tag_bits.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} tag bits for {chips} chips, got {}",
            tag_bits.len()
        )));
    }

    for chip in 0..chips {
        let base = chip * plan.lambda;
        for group in 0..plan.tag_bits_per_chip {
            if tag_bits[chip * plan.tag_bits_per_chip + group] == 0 {
                continue;
            }
            let start = base + plan.pilot_count + group * plan.group_size;
            for sym in &mut payload[start..start + plan.group_size] {
                debug_assert_eq!(sym.region, Region::Data);
                sym.payload = translated(&sym.payload);
            }
        }
    }

    if protocol == ProtocolId::Zigbee {
        // Settling hits the symbol right after each chip whose final
        // group was translated; with pilot_count >= 1 that symbol is the
        // next chip's leading pilot (or a discarded partial-chip symbol).
        for chip in 0..chips {
            let last_group_bit = tag_bits[chip * plan.tag_bits_per_chip + plan.tag_bits_per_chip - 1];
            if last_group_bit == 0 {
                continue;
            }
            let follower = (chip + 1) * plan.lambda;
            if follower >= payload.len() {
                continue;
            }
            let k = rng.gen_range(0..=32u32);
            if let SymbolPayload::Zigbee { chips: c, .. } = &mut payload[follower].payload {
                *c = invert_leading_chips(*c, k);
            }
        }
    }

    frame.shifted = true;
    Ok(())
}

/// FreeRider-style modulation: one tag bit per chip, translated across
/// the whole chip with no pilot region spared. The baseline the pilot
/// scheme is compared against.
pub fn freerider_modulate(
    frame: &mut Frame,
    plan: &ChipPlan,
    tag_bits: &[u8],
    rng: &mut impl Rng,
) -> Result<()> {
    plan.validate()?;
    if frame.shifted {
        return Err(Error::ProtocolViolation(
            "frame has already been backscattered".into(),
        ));
    }
    if tag_bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("tag bits must be 0 or 1"));
    }
    let protocol = frame.profile.protocol_id;
    let payload = frame.payload_mut();
    let chips = payload.len() / plan.lambda;
    if tag_bits.len() != chips {
        return Err(Error::invalid(format!(
            "expected {chips} tag bits (one per chip), got {}",
            tag_bits.len()
        )));
    }
    for chip in 0..chips {
        if tag_bits[chip] == 0 {
            continue;
        }
        let base = chip * plan.lambda;
        for sym in &mut payload[base..base + plan.lambda] {
            sym.payload = translated(&sym.payload);
        }
    }
    if protocol == ProtocolId::Zigbee {
        for chip in 0..chips {
            if tag_bits[chip] == 0 {
                continue;
            }
            let follower = (chip + 1) * plan.lambda;
            if follower >= payload.len() || tag_bits.get(chip + 1) == Some(&1) {
                continue;
            }
            let k = rng.gen_range(0..=32u32);
            if let SymbolPayload::Zigbee { chips: c, .. } = &mut payload[follower].payload {
                *c = invert_leading_chips(*c, k);
            }
        }
    }
    frame.shifted = true;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipplan::{plan_for_mode, Mode};
    use crate::protocols::{build_frame, profile, zigbee_spread, FreqLabel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn translation_is_an_involution() {
        let payloads = [
            SymbolPayload::Bit(0),
            SymbolPayload::Bit(1),
            SymbolPayload::Ble(FreqLabel::F0),
            SymbolPayload::Zigbee {
                value: 5,
                chips: zigbee_spread(5),
            },
        ];
        for p in payloads {
            assert_ne!(translated(&p), p);
            assert_eq!(translated(&translated(&p)), p);
        }
        assert_eq!(translated(&SymbolPayload::Preamble), SymbolPayload::Preamble);
    }

    #[test]
    fn wifi_b_modulation_complements_exactly_the_flagged_groups() {
        let p = profile(ProtocolId::WifiB);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let bits = vec![1u8, 0, 1, 1];
        let reference = build_frame(&p, &bits, &plan).unwrap();
        let mut frame = reference.clone();
        let tag_bits = [1u8, 0, 0, 1];
        modulate(&mut frame, &plan, &tag_bits, &mut rng(0)).unwrap();
        assert!(frame.shifted);
        for (i, (got, want)) in frame.payload().iter().zip(reference.payload()).enumerate() {
            let chip = i / plan.lambda;
            let in_group = i % plan.lambda >= plan.pilot_count;
            if in_group && tag_bits[chip] == 1 {
                assert_eq!(got.payload, translated(&want.payload), "symbol {i}");
            } else {
                assert_eq!(got.payload, want.payload, "symbol {i}");
            }
        }
    }

    #[test]
    fn wrong_tag_bit_count_and_double_modulation_are_rejected() {
        let p = profile(ProtocolId::Ble);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let mut frame = build_frame(&p, &[1, 0], &plan).unwrap();
        assert!(modulate(&mut frame, &plan, &[1], &mut rng(0)).is_err());
        modulate(&mut frame, &plan, &[1, 0], &mut rng(0)).unwrap();
        assert!(matches!(
            modulate(&mut frame, &plan, &[1, 0], &mut rng(0)),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn zigbee_settling_corrupts_only_the_following_chips_leading_pilot() {
        let p = profile(ProtocolId::Zigbee);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let bits: Vec<u8> = vec![0, 1, 1, 0, 1, 0, 0, 1]; // two 4-bit groups
        let reference = build_frame(&p, &bits, &plan).unwrap();
        let mut frame = reference.clone();
        modulate(&mut frame, &plan, &[1, 0], &mut rng(3)).unwrap();
        let payload = frame.payload();
        let clean = reference.payload();
        // Chip 0 pilots untouched; chip 1 pilots 1..3 untouched.
        for i in [0, 1, 2, plan.lambda + 1, plan.lambda + 2] {
            assert_eq!(payload[i].payload, clean[i].payload, "pilot {i}");
        }
        // Chip 1's leading pilot has an inverted chip prefix of some
        // length k; verify the trailing 32-k chips are intact.
        let (got, want) = match (&payload[plan.lambda].payload, &clean[plan.lambda].payload) {
            (SymbolPayload::Zigbee { chips: g, .. }, SymbolPayload::Zigbee { chips: w, .. }) => {
                (*g, *w)
            }
            _ => unreachable!(),
        };
        let diff = got ^ want;
        // diff must be a (possibly empty) contiguous low-bit mask.
        assert!(
            (diff as u64 + 1).is_power_of_two(),
            "corruption must be a contiguous leading-chip prefix, diff={diff:032b}"
        );
    }

    #[test]
    fn zigbee_settling_never_fires_after_untranslated_chips() {
        let p = profile(ProtocolId::Zigbee);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let bits: Vec<u8> = vec![1, 1, 0, 0, 0, 0, 1, 1, 1, 0, 1, 0];
        let reference = build_frame(&p, &bits, &plan).unwrap();
        let mut frame = reference.clone();
        modulate(&mut frame, &plan, &[0, 0, 0], &mut rng(9)).unwrap();
        assert_eq!(frame.payload(), reference.payload());
    }

    #[test]
    fn freerider_all_zero_bits_is_identity_modulo_shift_flag() {
        let p = profile(ProtocolId::WifiB);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let reference = build_frame(&p, &[1, 0, 1], &plan).unwrap();
        let mut frame = reference.clone();
        freerider_modulate(&mut frame, &plan, &[0, 0, 0], &mut rng(0)).unwrap();
        assert!(frame.shifted);
        assert_eq!(frame.symbols, reference.symbols);
    }

    #[test]
    fn freerider_translates_whole_chips_including_pilot_positions() {
        let p = profile(ProtocolId::WifiB);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let reference = build_frame(&p, &[1, 0], &plan).unwrap();
        let mut frame = reference.clone();
        freerider_modulate(&mut frame, &plan, &[1, 0], &mut rng(0)).unwrap();
        for (i, (got, want)) in frame.payload().iter().zip(reference.payload()).enumerate() {
            if i < plan.lambda {
                assert_eq!(got.payload, translated(&want.payload), "symbol {i}");
            } else {
                assert_eq!(got.payload, want.payload, "symbol {i}");
            }
        }
        assert!(freerider_modulate(&mut reference.clone(), &plan, &[1], &mut rng(0)).is_err());
    }

    proptest! {
        /// Preamble and pilot symbols survive modulation bit-exactly for
        /// non-ZigBee carriers, and every data symbol is either intact or
        /// the exact translation of the original.
        #[test]
        fn pilots_and_preamble_are_immutable(
            proto in prop::sample::select(vec![ProtocolId::WifiB, ProtocolId::WifiG, ProtocolId::Ble]),
            seed in any::<u64>(),
            groups in 1usize..6,
        ) {
            let p = profile(proto);
            let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
            let mut r = rng(seed);
            let bits: Vec<u8> = (0..groups * p.data_bits_per_symbol)
                .map(|_| r.gen_range(0..2u8))
                .collect();
            let tag_bits: Vec<u8> = (0..groups).map(|_| r.gen_range(0..2u8)).collect();
            let reference = build_frame(&p, &bits, &plan).unwrap();
            let mut frame = reference.clone();
            modulate(&mut frame, &plan, &tag_bits, &mut r).unwrap();
            for (got, want) in frame.symbols.iter().zip(&reference.symbols) {
                match got.region {
                    Region::Preamble | Region::Pilot => prop_assert_eq!(&got.payload, &want.payload),
                    Region::Data => prop_assert!(
                        got.payload == want.payload || got.payload == translated(&want.payload)
                    ),
                }
            }
        }

        #[test]
        fn invert_leading_chips_prefix_property(chips in any::<u32>(), k in 0u32..=32) {
            let out = invert_leading_chips(chips, k);
            for i in 0..32 {
                let flipped = ((out ^ chips) >> i) & 1 == 1;
                prop_assert_eq!(flipped, i < k as usize);
            }
        }
    }
}
