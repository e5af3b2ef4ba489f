//! 802.11g BPSK rate-1/2 payload pipeline at the coded-bit level.
//!
//! The pipeline is scramble -> convolutional encode -> block interleave,
//! with hard-decision Viterbi decoding on the way back. Subcarrier
//! modulation, cyclic prefix and pilot tones are not modeled: a 180-degree
//! phase flip of a BPSK symbol is exactly a bitwise complement of its 48
//! coded bits, which is all the tag-side translation needs.

use crate::error::{Error, Result};

/// Coded bits per OFDM symbol (48 BPSK subcarrier positions).
pub const CODED_BITS_PER_SYMBOL: usize = 48;
/// Data bits per OFDM symbol at rate 1/2.
pub const DATA_BITS_PER_SYMBOL: usize = 24;
/// Tail bits appended per frame to drive the encoder back toward zero.
pub const TAIL_BITS: usize = 6;

/// Default scrambler seed, fixed per frame for reproducible runs.
pub const SCRAMBLER_DEFAULT_SEED: u8 = 0b101_1101;

// Rate-1/2 constraint-length-7 generators, octal 133 / 171.
// Masks apply to a 7-bit window where bit i holds the input bit delayed i steps.
const GEN_A: u8 = 0o133;
const GEN_B: u8 = 0o171;

const NUM_STATES: usize = 64;

/// One OFDM symbol after interleaving: 48 coded bits, one per subcarrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfdmSymbol {
    pub coded_bits: [u8; CODED_BITS_PER_SYMBOL],
    /// Ordinal position within the frame payload.
    pub index: usize,
}

impl OfdmSymbol {
    pub fn complemented(&self) -> OfdmSymbol {
        let mut coded_bits = self.coded_bits;
        for b in coded_bits.iter_mut() {
            *b ^= 1;
        }
        OfdmSymbol {
            coded_bits,
            index: self.index,
        }
    }
}

/// Scrambler and encoder state at frame start.
#[derive(Debug, Clone, Copy)]
pub struct CoderState {
    /// 7-bit LFSR state; must be nonzero.
    pub scrambler_register: u8,
    /// 6-bit convolutional encoder memory; zero at frame start.
    pub encoder_register: u8,
}

impl Default for CoderState {
    fn default() -> Self {
        CoderState {
            scrambler_register: SCRAMBLER_DEFAULT_SEED,
            encoder_register: 0,
        }
    }
}

/// XOR the input with the degree-7 LFSR stream (x^7 + x^4 + 1).
///
/// Self-inverse: applying it twice with the same seed is the identity.
pub fn scramble(raw_bits: &[u8], seed: u8) -> Result<Vec<u8>> {
    if seed & 0x7f == 0 {
        return Err(Error::invalid("scrambler seed must be nonzero"));
    }
    let mut state = seed & 0x7f;
    let mut out = Vec::with_capacity(raw_bits.len());
    for &bit in raw_bits {
        let fb = ((state >> 6) ^ (state >> 3)) & 1;
        state = ((state << 1) | fb) & 0x7f;
        out.push(bit ^ fb);
    }
    Ok(out)
}

#[inline]
fn parity(v: u8) -> u8 {
    (v.count_ones() & 1) as u8
}

#[inline]
fn branch_outputs(window: u8) -> (u8, u8) {
    (parity(window & GEN_A), parity(window & GEN_B))
}

/// Rate-1/2 convolutional encode. Output is the two generator streams
/// interleaved (A then B per input bit). The caller appends tail bits if
/// zero termination is wanted.
pub fn bcc_encode(data_bits: &[u8]) -> Vec<u8> {
    let mut window: u8 = 0;
    let mut out = Vec::with_capacity(data_bits.len() * 2);
    for &bit in data_bits {
        window = ((window << 1) | (bit & 1)) & 0x7f;
        let (a, b) = branch_outputs(window);
        out.push(a);
        out.push(b);
    }
    out
}

#[inline]
fn interleave_index(k: usize) -> usize {
    // 802.11 block interleaver, 48 coded bits, 1 bit per subcarrier.
    // The second permutation is the identity for BPSK.
    (CODED_BITS_PER_SYMBOL / 16) * (k % 16) + k / 16
}

/// Fixed 48-bit block permutation spreading adjacent coded bits across
/// subcarriers.
pub fn interleave(coded_bits: &[u8]) -> Result<[u8; CODED_BITS_PER_SYMBOL]> {
    if coded_bits.len() != CODED_BITS_PER_SYMBOL {
        return Err(Error::invalid(format!(
            "interleave expects {} bits, got {}",
            CODED_BITS_PER_SYMBOL,
            coded_bits.len()
        )));
    }
    let mut out = [0u8; CODED_BITS_PER_SYMBOL];
    for (k, &bit) in coded_bits.iter().enumerate() {
        out[interleave_index(k)] = bit;
    }
    Ok(out)
}

/// Exact inverse of [`interleave`].
pub fn deinterleave(coded_bits: &[u8]) -> Result<[u8; CODED_BITS_PER_SYMBOL]> {
    if coded_bits.len() != CODED_BITS_PER_SYMBOL {
        return Err(Error::invalid(format!(
            "deinterleave expects {} bits, got {}",
            CODED_BITS_PER_SYMBOL,
            coded_bits.len()
        )));
    }
    let mut out = [0u8; CODED_BITS_PER_SYMBOL];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = coded_bits[interleave_index(k)];
    }
    Ok(out)
}

/// Hard-decision Viterbi decode of the rate-1/2 code.
///
/// Full traceback over the whole sequence, no truncation window. The
/// trellis starts in the all-zero state; the end state is free (the tail's
/// coded bits are not part of the modulatable symbols). Ties resolve
/// toward the lower-numbered predecessor state.
pub fn viterbi_decode(coded_bits: &[u8]) -> Result<Vec<u8>> {
    viterbi_decode_impl(coded_bits, false)
}

/// Viterbi decode with a free start state.
///
/// Used for per-symbol decoding where the encoder state at the symbol
/// boundary is unknown to the receiver. Head bits before the trellis
/// merge are a tie-break artifact; interior bits are exact.
pub fn viterbi_decode_free_start(coded_bits: &[u8]) -> Result<Vec<u8>> {
    viterbi_decode_impl(coded_bits, true)
}

fn viterbi_decode_impl(coded_bits: &[u8], free_start: bool) -> Result<Vec<u8>> {
    if !coded_bits.len().is_multiple_of(2) {
        return Err(Error::invalid("coded sequence must have even length"));
    }
    let steps = coded_bits.len() / 2;
    if steps == 0 {
        return Ok(Vec::new());
    }

    // Expected output pair per (predecessor state, input bit).
    let mut branch = [[(0u8, 0u8); 2]; NUM_STATES];
    for (s, row) in branch.iter_mut().enumerate() {
        for (b, out) in row.iter_mut().enumerate() {
            let window = (((s as u8) << 1) | b as u8) & 0x7f;
            *out = branch_outputs(window);
        }
    }

    const INF: u32 = u32::MAX / 2;
    let mut metric = [INF; NUM_STATES];
    if free_start {
        metric = [0; NUM_STATES];
    } else {
        metric[0] = 0;
    }
    // Chosen predecessor per state per step: false = lower-numbered.
    let mut chose_upper = vec![[false; NUM_STATES]; steps];

    for t in 0..steps {
        let ra = coded_bits[2 * t];
        let rb = coded_bits[2 * t + 1];
        let mut next = [INF; NUM_STATES];
        for ns in 0..NUM_STATES {
            let bit = ns & 1;
            let p0 = ns >> 1;
            let p1 = p0 | (NUM_STATES >> 1);
            let (e0a, e0b) = branch[p0][bit];
            let (e1a, e1b) = branch[p1][bit];
            let c0 = metric[p0].saturating_add(u32::from(e0a ^ ra) + u32::from(e0b ^ rb));
            let c1 = metric[p1].saturating_add(u32::from(e1a ^ ra) + u32::from(e1b ^ rb));
            if c1 < c0 {
                next[ns] = c1;
                chose_upper[t][ns] = true;
            } else {
                next[ns] = c0;
            }
        }
        metric = next;
    }

    let mut state = 0;
    let mut best = metric[0];
    for (s, &m) in metric.iter().enumerate() {
        if m < best {
            best = m;
            state = s;
        }
    }

    let mut data = vec![0u8; steps];
    for t in (0..steps).rev() {
        data[t] = (state & 1) as u8;
        let p0 = state >> 1;
        state = if chose_upper[t][state] {
            p0 | (NUM_STATES >> 1)
        } else {
            p0
        };
    }
    Ok(data)
}

/// Full frame pipeline: scramble, append tail bits, encode, interleave
/// into 48-bit symbols. Payload length must be a multiple of 24.
///
/// The tail's own coded bits fall past the last full symbol and are not
/// emitted; decoding uses a free end state instead.
pub fn ofdm_symbol_map(payload_bits: &[u8], state: &CoderState) -> Result<Vec<OfdmSymbol>> {
    if !payload_bits.len().is_multiple_of(DATA_BITS_PER_SYMBOL) {
        return Err(Error::invalid(format!(
            "payload length {} is not a multiple of {}",
            payload_bits.len(),
            DATA_BITS_PER_SYMBOL
        )));
    }
    let mut scrambled = scramble(payload_bits, state.scrambler_register)?;
    scrambled.extend(std::iter::repeat_n(0, TAIL_BITS));
    let coded = bcc_encode(&scrambled);

    let n_symbols = payload_bits.len() / DATA_BITS_PER_SYMBOL;
    let mut symbols = Vec::with_capacity(n_symbols);
    for i in 0..n_symbols {
        let chunk = &coded[i * CODED_BITS_PER_SYMBOL..(i + 1) * CODED_BITS_PER_SYMBOL];
        symbols.push(OfdmSymbol {
            coded_bits: interleave(chunk)?,
            index: i,
        });
    }
    Ok(symbols)
}

/// Inverse of [`ofdm_symbol_map`]: per-symbol deinterleave and Viterbi
/// decode, then descramble.
///
/// Each symbol is decoded independently with a free start state. On a
/// valid (or fully complemented) segment the zero-cost path is unique, so
/// the per-symbol decode is exact and a complemented symbol decodes as the
/// exact bitwise complement. Cross-symbol trellis context is deliberately
/// not used here; [`viterbi_decode`] over [`deinterleaved_stream`] gives
/// the stream-style decode, whose paths smear flip boundaries across
/// neighboring symbols.
pub fn ofdm_symbol_unmap(symbols: &[OfdmSymbol], state: &CoderState) -> Result<Vec<u8>> {
    let mut decoded = Vec::with_capacity(symbols.len() * DATA_BITS_PER_SYMBOL);
    for sym in symbols {
        let de = deinterleave(&sym.coded_bits)?;
        decoded.extend(viterbi_decode_free_start(&de)?);
    }
    scramble(&decoded, state.scrambler_register)
}

/// Concatenated deinterleaved coded bits of a symbol sequence.
pub fn deinterleaved_stream(symbols: &[OfdmSymbol]) -> Result<Vec<u8>> {
    let mut stream = Vec::with_capacity(symbols.len() * CODED_BITS_PER_SYMBOL);
    for sym in symbols {
        stream.extend_from_slice(&deinterleave(&sym.coded_bits)?);
    }
    Ok(stream)
}
