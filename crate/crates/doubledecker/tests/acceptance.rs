//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture`).

use doubledecker::channel::rssi_at;
use doubledecker::chipplan::{plan_for_mode, ChipPlan, Mode};
use doubledecker::harness::{csv_string, run_scenario, run_tradeoff_report};
use doubledecker::ofdm::{self, SCRAMBLER_DEFAULT_SEED};
use doubledecker::protocols::{build_frame, profile, ProtocolId, Region, SymbolPayload};
use doubledecker::receiver::{decode_double_decker, decode_freerider, DecodingWindow};
use doubledecker::scenario::Scenario;
use doubledecker::tag::modulate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALL_PROTOCOLS: [ProtocolId; 4] = [
    ProtocolId::WifiB,
    ProtocolId::WifiG,
    ProtocolId::Zigbee,
    ProtocolId::Ble,
];

fn check(number: u32, name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("criterion {number} ({name}): PASS"),
        Err(msg) => {
            println!("criterion {number} ({name}): FAIL - {msg}");
            panic!("criterion {number} ({name}) failed: {msg}");
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_bits(r: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| r.gen_range(0..2u8)).collect()
}

/// A mode-appropriate plan plus a payload size that tiles into chips.
fn plan_and_payload(
    proto: ProtocolId,
    mode: Mode,
    r: &mut ChaCha8Rng,
) -> (ChipPlan, usize) {
    let p = profile(proto);
    match mode {
        Mode::Mode1 => {
            let chips = r.gen_range(1..=4usize);
            (plan_for_mode(mode, &p, 0).unwrap(), chips * p.default_lambda)
        }
        Mode::Mode2 => {
            let chips = r.gen_range(1..=2usize);
            (plan_for_mode(mode, &p, 0).unwrap(), chips * 2 * p.default_lambda)
        }
        Mode::Mode3 => {
            let payload = p.default_lambda * r.gen_range(2..=4usize);
            (plan_for_mode(mode, &p, payload).unwrap(), payload)
        }
    }
}

#[test]
fn criterion_1_noiseless_completeness() {
    check(1, "noiseless completeness", || {
        let mut r = rng(0xC1);
        for proto in ALL_PROTOCOLS {
            let p = profile(proto);
            for mode in [Mode::Mode1, Mode::Mode2, Mode::Mode3] {
                for trial in 0..100 {
                    let (plan, payload_symbols) = plan_and_payload(proto, mode, &mut r);
                    let groups = payload_symbols / plan.lambda;
                    let productive = random_bits(&mut r, groups * p.data_bits_per_symbol);
                    let tag = random_bits(&mut r, groups * plan.tag_bits_per_chip);
                    let mut frame = build_frame(&p, &productive, &plan)
                        .map_err(|e| format!("{proto}/{mode}: {e}"))?;
                    modulate(&mut frame, &plan, &tag, &mut r)
                        .map_err(|e| format!("{proto}/{mode}: {e}"))?;
                    let out =
                        decode_double_decker(&frame, &plan, &DecodingWindow::default(), &mut r)
                            .map_err(|e| format!("{proto}/{mode}: {e}"))?;
                    if out.tag_bits != tag {
                        return Err(format!("{proto}/{mode} trial {trial}: tag BER > 0"));
                    }
                    if out.productive_bits != productive {
                        return Err(format!("{proto}/{mode} trial {trial}: productive BER > 0"));
                    }
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_2_oracle_equivalence() {
    check(2, "oracle equivalence", || {
        for proto in ALL_PROTOCOLS {
            let p = profile(proto);
            let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
            let mut r = rng(0xC2 ^ proto as u64);
            for trial in 0..10_000 {
                let groups = r.gen_range(1..=2usize);
                let productive = random_bits(&mut r, groups * p.data_bits_per_symbol);
                let tag = random_bits(&mut r, groups);
                let original = build_frame(&p, &productive, &plan).unwrap();
                let mut frame = original.clone();
                modulate(&mut frame, &plan, &tag, &mut r).unwrap();
                let w = DecodingWindow::default();
                let dd = decode_double_decker(&frame, &plan, &w, &mut r)
                    .map_err(|e| e.to_string())?;
                let fr = decode_freerider(&original, &frame, &plan, &w, &mut r)
                    .map_err(|e| e.to_string())?;
                if dd.tag_bits != fr {
                    return Err(format!(
                        "{proto} trial {trial}: double-decker {:?} != freerider {fr:?}",
                        dd.tag_bits
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_3_ofdm_decoding_window() {
    check(3, "OFDM decoding window", || {
        let p = profile(ProtocolId::WifiG);
        let plan = plan_for_mode(Mode::Mode1, &p, 0).unwrap();
        let w = DecodingWindow::default();
        let mut r = rng(0xC3);
        let mut edge_corruption_seen = false;
        for trial in 0..1_000 {
            let groups = r.gen_range(1..=3usize);
            let productive = random_bits(&mut r, groups * 24);
            let tag = random_bits(&mut r, groups);
            let mut frame = build_frame(&p, &productive, &plan).unwrap();
            modulate(&mut frame, &plan, &tag, &mut r).unwrap();

            let symbols: Vec<_> = frame
                .payload()
                .iter()
                .map(|s| match &s.payload {
                    SymbolPayload::Ofdm(sym) => sym.clone(),
                    other => panic!("unexpected payload {other:?}"),
                })
                .collect();

            // Per-symbol decode: the receiver's view.
            let mut per_symbol = Vec::with_capacity(symbols.len() * 24);
            for sym in &symbols {
                let deinterleaved = ofdm::deinterleave(&sym.coded_bits).unwrap();
                per_symbol.extend(ofdm::viterbi_decode_free_start(&deinterleaved).unwrap());
            }
            let descrambled = ofdm::scramble(&per_symbol, SCRAMBLER_DEFAULT_SEED).unwrap();
            let blocks: Vec<&[u8]> = descrambled.chunks(24).collect();

            // Clause 1: inside the window every modulated data symbol is
            // the exact complement of its chip's pilot decode.
            for (i, sym) in frame.payload().iter().enumerate() {
                let chip = i / plan.lambda;
                let pilot = blocks[chip * plan.lambda];
                let modulated = sym.region == Region::Data && tag[chip] == 1;
                for bit in w.start_bit..w.start_bit + w.length {
                    let want = pilot[bit] ^ u8::from(modulated);
                    if blocks[i][bit] != want {
                        return Err(format!(
                            "trial {trial}: symbol {i} bit {bit} not {} pilot inside window",
                            if modulated { "complement of" } else { "equal to" }
                        ));
                    }
                }
            }

            // Clause 2: a whole-stream trellis decode smears translation
            // boundaries; corruption must land outside the window in at
            // least one frame, showing why the window exists.
            let stream = ofdm::deinterleaved_stream(&symbols).unwrap();
            let decoded = ofdm::viterbi_decode(&stream).unwrap();
            let stream_blocks = ofdm::scramble(&decoded, SCRAMBLER_DEFAULT_SEED).unwrap();
            for (i, block) in stream_blocks.chunks(24).enumerate() {
                for bit in 0..24 {
                    if block[bit] != blocks[i][bit]
                        && !(w.start_bit..w.start_bit + w.length).contains(&bit)
                    {
                        edge_corruption_seen = true;
                    }
                }
            }
        }
        if !edge_corruption_seen {
            return Err("no frame showed edge-bit corruption outside the window".into());
        }
        Ok(())
    });
}

const LOW_ERROR_CHANNEL: &str = "\
[channel]
p_good_to_bad = 0.005
p_bad_to_good = 0.2
err_rate_good = 0.001
err_rate_bad = 0.1
";

#[test]
fn criterion_4_mode_tradeoff_ratios() {
    check(4, "mode tradeoff ratios", || {
        let s: Scenario = format!(
            "protocol = WIFI_G\nmode = MODE1\ndistances = 1\npackets_per_point = 400\npayload_symbols = 96\nseed = 11\n{LOW_ERROR_CHANNEL}"
        )
        .parse()
        .map_err(|e| format!("{e}"))?;
        let rows = run_tradeoff_report(&s).map_err(|e| e.to_string())?;
        let tag_ratio = rows[1].tag_ratio_vs_mode1;
        let prod_ratio = rows[1].productive_ratio_vs_mode1;
        if !(1.40..=1.55).contains(&tag_ratio) {
            return Err(format!("MODE2/MODE1 tag ratio {tag_ratio} outside [1.40, 1.55]"));
        }
        if !(0.45..=0.55).contains(&prod_ratio) {
            return Err(format!(
                "MODE2/MODE1 productive ratio {prod_ratio} outside [0.45, 0.55]"
            ));
        }
        Ok(())
    });
}

#[test]
fn criterion_5_preamble_driven_protocol_ratio() {
    check(5, "preamble-driven protocol ratio", || {
        // Matched packet rates (500/s) and payload airtime (~608-612 us
        // per packet), 16 us chips on both protocols; the only structural
        // difference left is the 192 us vs 20 us preamble.
        let run = |proto: &str, payload: usize| -> Result<f64, String> {
            let s: Scenario = format!(
                "protocol = {proto}\nmode = MODE1\ndistances = 1\npackets_per_point = 200\npayload_symbols = {payload}\nseed = 17\n"
            )
            .parse()
            .map_err(|e| format!("{e}"))?;
            let out = run_scenario(&s, false).map_err(|e| e.to_string())?;
            Ok(out.metrics[0].tag_throughput_kbps)
        };
        let b = run("WIFI_B", 416)?; // 192 + 416 us airtime, 26 chips of 16 us
        let g = run("WIFI_G", 148)?; // 20 + 592 us airtime, 37 chips of 16 us
        let ratio = g / b;
        if !(1.3..=1.5).contains(&ratio) {
            return Err(format!("WIFI_G/WIFI_B tag throughput ratio {ratio} outside [1.3, 1.5]"));
        }
        Ok(())
    });
}

#[test]
fn criterion_6_ble_ceiling() {
    check(6, "BLE throughput ceiling", || {
        let s: Scenario = "protocol = BLE\nmode = MODE1\ndistances = 1\npackets_per_point = 700\npayload_symbols = 288\nseed = 23\n"
            .parse()
            .map_err(|e: doubledecker::Error| e.to_string())?;
        let out = run_scenario(&s, false).map_err(|e| e.to_string())?;
        let m = &out.metrics[0];
        if m.packets_received != m.packets_sent {
            return Err(format!(
                "expected zero loss, got {}/{}",
                m.packets_received, m.packets_sent
            ));
        }
        let kbps = m.tag_throughput_kbps;
        if !(0.75..=1.0).contains(&kbps) {
            return Err(format!("BLE tag throughput {kbps} kbps outside [0.75, 1.0]"));
        }
        Ok(())
    });
}

#[test]
fn criterion_7_zigbee_redundancy_target() {
    check(7, "ZigBee redundancy target", || {
        let run = |lambda_override: &str, packets: u64| -> Result<(f64, u64), String> {
            let s: Scenario = format!(
                "protocol = ZIGBEE\nmode = MODE1\ndistances = 1\npackets_per_point = {packets}\npayload_symbols = 252\nseed = 29\n{lambda_override}"
            )
            .parse()
            .map_err(|e| format!("{e}"))?;
            let plan = s.resolved_plan().map_err(|e| e.to_string())?;
            let chips = packets * (252 / plan.lambda) as u64;
            let out = run_scenario(&s, true).map_err(|e| e.to_string())?;
            Ok((out.metrics[0].tag_ber, chips))
        };
        let (ber6, chips6) = run("", 2400)?; // lambda = 6: 100,800 chips
        let (ber2, chips2) = run("[plan]\nlambda = 2\n", 800)?; // 100,800 chips
        if chips6 < 100_000 || chips2 < 100_000 {
            return Err("insufficient chips simulated".into());
        }
        if ber6 > 0.001 {
            return Err(format!("lambda=6 tag BER {ber6} exceeds 0.1%"));
        }
        if ber2 <= ber6 {
            return Err(format!(
                "lambda=2 BER {ber2} not strictly greater than lambda=6 BER {ber6}"
            ));
        }
        Ok(())
    });
}

#[test]
fn criterion_8_redundancy_monotonicity() {
    check(8, "redundancy monotonicity", || {
        // Bursty profile with ~3% average symbol errors:
        // stationary bad-state share 0.0625, mix 0.9375*0.01 + 0.0625*0.35.
        let ge = "[channel]\np_good_to_bad = 0.02\np_bad_to_good = 0.3\nerr_rate_good = 0.01\nerr_rate_bad = 0.35\n";
        let mut last = f64::INFINITY;
        let mut ber16 = None;
        for lambda in [4usize, 8, 16, 32] {
            let chips_per_packet = 960 / lambda;
            let packets = 120_000 / chips_per_packet as u64 + 1;
            let s: Scenario = format!(
                "protocol = WIFI_B\nmode = MODE1\ndistances = 1\npackets_per_point = {packets}\npayload_symbols = 960\nseed = 1234\n[plan]\nlambda = {lambda}\n{ge}"
            )
            .parse()
            .map_err(|e| format!("{e}"))?;
            let out = run_scenario(&s, true).map_err(|e| e.to_string())?;
            let ber = out.metrics[0].tag_ber;
            if ber >= last {
                return Err(format!(
                    "BER not strictly decreasing: lambda {lambda} gave {ber} after {last}"
                ));
            }
            last = ber;
            if lambda == 16 {
                ber16 = Some(ber);
            }
        }
        let ber16 = ber16.unwrap();
        if ber16 > 0.01 {
            return Err(format!("lambda=16 BER {ber16} exceeds 1%"));
        }
        Ok(())
    });
}

#[test]
fn criterion_9_channel_sanity() {
    check(9, "channel sanity", || {
        let s: Scenario = "protocol = WIFI_B\nmode = MODE1\ndistances = 1, 4, 8, 12, 16, 20, 24, 28\npackets_per_point = 1000\npayload_symbols = 64\nseed = 42\n"
            .parse()
            .map_err(|e: doubledecker::Error| e.to_string())?;
        // rssi_at is exactly the log-distance formula at the calibration.
        let r28 = rssi_at(&s.channel, 28.0).map_err(|e| e.to_string())?;
        if (r28 - (-86.0)).abs() > 1e-9 {
            return Err(format!("rssi_at(28) = {r28}, expected -86"));
        }
        for d in [2.0f64, 7.0, 19.0] {
            let want = s.channel.reference_rssi - 10.0 * s.channel.path_loss_exponent * d.log10();
            let got = rssi_at(&s.channel, d).map_err(|e| e.to_string())?;
            if (got - want).abs() > 1e-12 {
                return Err(format!("rssi_at({d}) deviates from the formula"));
            }
        }
        let out = run_scenario(&s, false).map_err(|e| e.to_string())?;
        let received: Vec<u64> = out.metrics.iter().map(|m| m.packets_received).collect();
        if !received.windows(2).all(|w| w[0] >= w[1]) {
            return Err(format!("delivery not monotone non-increasing: {received:?}"));
        }
        let ratio28 = *received.last().unwrap() as f64 / 1000.0;
        if ratio28 >= 0.2 {
            return Err(format!("delivery ratio at 28 m = {ratio28}, expected < 20%"));
        }
        Ok(())
    });
}

#[test]
fn criterion_10_determinism() {
    check(10, "determinism", || {
        let text = "protocol = ZIGBEE\nmode = MODE2\ndistances = 2, 9, 25\npackets_per_point = 120\npayload_symbols = 240\nseed = 77\n[channel]\np_good_to_bad = 0.03\np_bad_to_good = 0.2\nerr_rate_bad = 0.3\nerr_rate_good = 0.005\n";
        let s: Scenario = text.parse().map_err(|e: doubledecker::Error| e.to_string())?;
        let a = csv_string(&run_scenario(&s, false).map_err(|e| e.to_string())?.metrics);
        let b = csv_string(&run_scenario(&s, false).map_err(|e| e.to_string())?.metrics);
        if a != b {
            return Err("identical scenario + seed produced different CSV bytes".into());
        }
        Ok(())
    });
}
