//! Experiment orchestration: seeded Monte-Carlo sweeps over distance,
//! metric aggregation, CSV reports, transcripts and the audit recount.
//!
//! Distance points are independent work units: each derives its own seed
//! (scenario seed XOR distance index), owns its channel state and RNG,
//! and may run concurrently; results are merged in distance order so a
//! run is reproducible regardless of scheduling.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{transmit, rssi_at, ChannelState};
use crate::chipplan::account_rates;
use crate::error::{Error, Result};
use crate::protocols::build_frame;
use crate::receiver::decode_double_decker;
use crate::scenario::Scenario;
use crate::tag::modulate;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub protocol: String,
    pub mode: String,
    pub distance_m: f64,
    pub rssi_dbm: f64,
    pub packets_sent: u64,
    pub packets_received: u64,
    pub tag_ber: f64,
    pub tag_throughput_kbps: f64,
    pub productive_throughput_kbps: f64,
    pub aggregate_throughput_kbps: f64,
    pub seed: u64,
}

/// One packet's outcome, kept for the transcript audit.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub delivered: bool,
    pub productive_ok: bool,
    pub sent_tag: Vec<u8>,
    pub decoded_tag: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointTranscript {
    pub metrics: LinkMetrics,
    pub records: Vec<PacketRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<LinkMetrics>,
    pub transcripts: Vec<PointTranscript>,
}

fn run_point(
    scenario: &Scenario,
    index: usize,
    count_raw: bool,
) -> Result<PointTranscript> {
    let profile = scenario.resolved_profile();
    let plan = scenario.resolved_plan()?;
    let distance = scenario.distances[index];
    let point_seed = scenario.seed ^ index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
    let mut channel_state = ChannelState::new(rng.gen::<u64>() ^ scenario.channel.seed);

    let groups = scenario.payload_symbols / plan.lambda;
    let productive_len = groups * profile.data_bits_per_symbol;
    let tag_len = groups * plan.tag_bits_per_chip;

    let mut records = Vec::with_capacity(scenario.packets_per_point as usize);
    let mut received = 0u64;
    let mut tag_errors = 0u64;
    let mut tag_total = 0u64;
    let mut qualifying = 0u64; // packets whose tag bits count toward throughput
    let mut productive_ok_count = 0u64;

    for _ in 0..scenario.packets_per_point {
        let productive: Vec<u8> = (0..productive_len).map(|_| rng.gen_range(0..2u8)).collect();
        let sent_tag: Vec<u8> = (0..tag_len).map(|_| rng.gen_range(0..2u8)).collect();
        let mut frame = build_frame(&profile, &productive, &plan)?;
        modulate(&mut frame, &plan, &sent_tag, &mut rng)?;
        let (delivered, _rssi) = transmit(&frame, &mut channel_state, &scenario.channel, distance)?;
        match delivered {
            None => records.push(PacketRecord {
                delivered: false,
                productive_ok: false,
                sent_tag,
                decoded_tag: Vec::new(),
            }),
            Some(rx) => {
                received += 1;
                let decoded = decode_double_decker(&rx, &plan, &scenario.window, &mut rng)?;
                let productive_ok = decoded.productive_bits == productive;
                tag_total += tag_len as u64;
                tag_errors += decoded
                    .tag_bits
                    .iter()
                    .zip(&sent_tag)
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                if productive_ok {
                    productive_ok_count += 1;
                }
                if count_raw || productive_ok {
                    qualifying += 1;
                }
                records.push(PacketRecord {
                    delivered: true,
                    productive_ok,
                    sent_tag,
                    decoded_tag: decoded.tag_bits,
                });
            }
        }
    }

    let interval_secs = scenario.packets_per_point as f64 / profile.packet_rate;
    let tag_rates = account_rates(&plan, &profile, qualifying, scenario.payload_symbols, interval_secs);
    let prod_rates = account_rates(
        &plan,
        &profile,
        productive_ok_count,
        scenario.payload_symbols,
        interval_secs,
    );
    let tag_ber = if tag_total == 0 {
        0.0
    } else {
        tag_errors as f64 / tag_total as f64
    };
    let metrics = LinkMetrics {
        protocol: scenario.protocol.to_string(),
        mode: scenario.mode.to_string(),
        distance_m: distance,
        rssi_dbm: rssi_at(&scenario.channel, distance)?,
        packets_sent: scenario.packets_per_point,
        packets_received: received,
        tag_ber,
        tag_throughput_kbps: tag_rates.tag_rate_kbps,
        productive_throughput_kbps: prod_rates.productive_rate_kbps,
        aggregate_throughput_kbps: tag_rates.tag_rate_kbps + prod_rates.productive_rate_kbps,
        seed: scenario.seed,
    };
    Ok(PointTranscript { metrics, records })
}

/// Run a full distance sweep. With `count_raw` false (the default
/// convention), a packet's tag bits count toward throughput only when
/// its productive payload decoded correctly (goodput).
pub fn run_scenario(scenario: &Scenario, count_raw: bool) -> Result<RunOutput> {
    scenario.validate()?;
    let transcripts: Vec<PointTranscript> = (0..scenario.distances.len())
        .into_par_iter()
        .map(|i| run_point(scenario, i, count_raw))
        .collect::<Result<_>>()?;
    let metrics = transcripts.iter().map(|t| t.metrics.clone()).collect();
    Ok(RunOutput {
        metrics,
        transcripts,
    })
}

pub const CSV_HEADER: &str = "protocol,mode,distance_m,rssi_dbm,packets_sent,packets_received,tag_ber,tag_throughput_kbps,productive_throughput_kbps,aggregate_throughput_kbps,seed";

pub fn csv_string(rows: &[LinkMetrics]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.protocol,
            r.mode,
            r.distance_m,
            r.rssi_dbm,
            r.packets_sent,
            r.packets_received,
            r.tag_ber,
            r.tag_throughput_kbps,
            r.productive_throughput_kbps,
            r.aggregate_throughput_kbps,
            r.seed
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn emit_csv(rows: &[LinkMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, csv_string(rows)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a CSV produced by [`emit_csv`]; the inverse used by tests and
/// the audit tooling.
pub fn parse_csv(text: &str) -> Result<Vec<LinkMetrics>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::invalid(format!("bad CSV header: {other:?}"))),
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(Error::invalid(format!("bad CSV row: {line}")));
            }
            fn num<T: FromStr>(s: &str) -> Result<T>
            where
                T::Err: std::fmt::Display,
            {
                s.parse()
                    .map_err(|e: T::Err| Error::invalid(format!("bad CSV field `{s}`: {e}")))
            }
            Ok(LinkMetrics {
                protocol: f[0].to_string(),
                mode: f[1].to_string(),
                distance_m: num(f[2])?,
                rssi_dbm: num(f[3])?,
                packets_sent: num(f[4])?,
                packets_received: num(f[5])?,
                tag_ber: num(f[6])?,
                tag_throughput_kbps: num(f[7])?,
                productive_throughput_kbps: num(f[8])?,
                aggregate_throughput_kbps: num(f[9])?,
                seed: num(f[10])?,
            })
        })
        .collect()
}

fn bits_to_str(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

fn bits_from_str(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::invalid(format!("bad bit `{other}` in transcript"))),
        })
        .collect()
}

/// Serialize per-packet outcomes alongside the summary each point
/// reported, so an auditor can recount BER independently.
pub fn transcript_string(output: &RunOutput) -> String {
    let mut out = String::from("# doubledecker transcript v1\n");
    for t in &output.transcripts {
        let m = &t.metrics;
        writeln!(
            out,
            "[point] protocol={} mode={} distance_m={} packets_sent={} packets_received={} tag_ber={}",
            m.protocol, m.mode, m.distance_m, m.packets_sent, m.packets_received, m.tag_ber
        )
        .expect("writing to a String cannot fail");
        for r in &t.records {
            if r.delivered {
                writeln!(
                    out,
                    "pkt delivered=1 productive_ok={} sent={} decoded={}",
                    u8::from(r.productive_ok),
                    bits_to_str(&r.sent_tag),
                    bits_to_str(&r.decoded_tag)
                )
                .expect("writing to a String cannot fail");
            } else {
                out.push_str("pkt delivered=0\n");
            }
        }
    }
    out
}

pub fn write_transcript(output: &RunOutput, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, transcript_string(output)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointAudit {
    pub distance_m: f64,
    pub stated_received: u64,
    pub recounted_received: u64,
    pub stated_tag_ber: f64,
    pub recounted_tag_ber: f64,
    pub ok: bool,
}

fn kv<'a>(token: &'a str, key: &str) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::invalid(format!("expected `{key}=...`, found `{token}`")))
}

/// Recount packets and tag BER from a transcript and compare against the
/// summaries embedded in it.
pub fn audit_transcript(text: &str) -> Result<Vec<PointAudit>> {
    struct Point {
        distance_m: f64,
        stated_received: u64,
        stated_tag_ber: f64,
        received: u64,
        errors: u64,
        total: u64,
    }
    let mut points: Vec<Point> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("[point]") {
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            if tokens.len() != 6 {
                return Err(Error::invalid(format!("bad point header: {line}")));
            }
            points.push(Point {
                distance_m: kv(tokens[2], "distance_m")?
                    .parse()
                    .map_err(|e| Error::invalid(format!("bad distance: {e}")))?,
                stated_received: kv(tokens[4], "packets_received")?
                    .parse()
                    .map_err(|e| Error::invalid(format!("bad received count: {e}")))?,
                stated_tag_ber: kv(tokens[5], "tag_ber")?
                    .parse()
                    .map_err(|e| Error::invalid(format!("bad tag_ber: {e}")))?,
                received: 0,
                errors: 0,
                total: 0,
            });
        } else if let Some(rest) = line.strip_prefix("pkt ") {
            let point = points
                .last_mut()
                .ok_or_else(|| Error::invalid("packet record before any [point] header"))?;
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            if kv(tokens[0], "delivered")? == "0" {
                continue;
            }
            if tokens.len() != 4 {
                return Err(Error::invalid(format!("bad packet record: {line}")));
            }
            let sent = bits_from_str(kv(tokens[2], "sent")?)?;
            let decoded = bits_from_str(kv(tokens[3], "decoded")?)?;
            if sent.len() != decoded.len() {
                return Err(Error::invalid("sent/decoded length mismatch in transcript"));
            }
            point.received += 1;
            point.total += sent.len() as u64;
            point.errors += sent.iter().zip(&decoded).filter(|(a, b)| a != b).count() as u64;
        } else {
            return Err(Error::invalid(format!("unrecognized transcript line: {line}")));
        }
    }
    Ok(points
        .into_iter()
        .map(|p| {
            let recounted = if p.total == 0 {
                0.0
            } else {
                p.errors as f64 / p.total as f64
            };
            PointAudit {
                distance_m: p.distance_m,
                stated_received: p.stated_received,
                recounted_received: p.received,
                stated_tag_ber: p.stated_tag_ber,
                recounted_tag_ber: recounted,
                ok: p.received == p.stated_received && recounted == p.stated_tag_ber,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub mode: String,
    pub tag_throughput_kbps: f64,
    pub productive_throughput_kbps: f64,
    pub aggregate_throughput_kbps: f64,
    pub tag_ratio_vs_mode1: f64,
    pub productive_ratio_vs_mode1: f64,
}

/// Run the scenario's protocol under all three modes at the first
/// configured distance and report each mode's rates and its ratios
/// relative to MODE1. Plan overrides are ignored here: each mode uses
/// its canonical geometry.
pub fn run_tradeoff_report(scenario: &Scenario) -> Result<Vec<TradeoffRow>> {
    use crate::chipplan::Mode;
    let mut rows = Vec::with_capacity(3);
    let mut mode1: Option<(f64, f64)> = None;
    for mode in [Mode::Mode1, Mode::Mode2, Mode::Mode3] {
        let mut s = scenario.clone();
        s.mode = mode;
        s.plan_overrides = Default::default();
        s.distances = vec![scenario.distances[0]];
        s.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field,
                message: format!("({mode}) {message}"),
            },
            other => other,
        })?;
        let out = run_scenario(&s, false)?;
        let m = &out.metrics[0];
        let (t1, p1) = *mode1.get_or_insert((m.tag_throughput_kbps, m.productive_throughput_kbps));
        rows.push(TradeoffRow {
            mode: mode.to_string(),
            tag_throughput_kbps: m.tag_throughput_kbps,
            productive_throughput_kbps: m.productive_throughput_kbps,
            aggregate_throughput_kbps: m.aggregate_throughput_kbps,
            tag_ratio_vs_mode1: if t1 > 0.0 { m.tag_throughput_kbps / t1 } else { 0.0 },
            productive_ratio_vs_mode1: if p1 > 0.0 {
                m.productive_throughput_kbps / p1
            } else {
                0.0
            },
        });
    }
    Ok(rows)
}

pub const TRADEOFF_CSV_HEADER: &str = "mode,tag_throughput_kbps,productive_throughput_kbps,aggregate_throughput_kbps,tag_ratio_vs_mode1,productive_ratio_vs_mode1";

pub fn tradeoff_csv_string(rows: &[TradeoffRow]) -> String {
    let mut out = String::new();
    out.push_str(TRADEOFF_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mode,
            r.tag_throughput_kbps,
            r.productive_throughput_kbps,
            r.aggregate_throughput_kbps,
            r.tag_ratio_vs_mode1,
            r.productive_ratio_vs_mode1
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn emit_tradeoff_csv(rows: &[TradeoffRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tradeoff_csv_string(rows)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
