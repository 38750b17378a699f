//! Deterministic scenario runner: senders, a lossy broadcast channel seen by
//! several antennas, an optional injecting adversary and the verifier.

mod channel;
mod config;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use channel::{sample_channel, BurstChannel, Channel};
pub use config::{
    AdversaryConfig, AdversaryPlan, AircraftConfig, AntennaConfig, BurstConfig, ConfigError,
    Coverage, ProtocolConfig, Scenario, ScenarioConfig, Strategy, MAX_ADVERSARY_RATE,
};

use crate::authority::{Authority, AuthorityError, Registry};
use crate::codec::{
    encode_frame, encode_position_payload, encode_security_payload, CodecError, Es1090Frame,
    PositionPayload, RawFrame, SecurityKind, SecurityPayload, DF_EXTENDED_SQUITTER,
};
use crate::sender::{AircraftSession, EmissionKind, SessionError, AIRBORNE_CAPABILITY};
use crate::tesla::chunk_value;
use crate::verifier::{verify_feed, write_verdict_log, IngestStats, Observation, SlotVerdict};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Authority(#[from] AuthorityError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Legit {
        aircraft: usize,
        kind: EmissionKind,
        slot: u64,
    },
    Adversary,
}

#[derive(Debug, Clone, Copy)]
struct Transmission {
    time: f64,
    frame: RawFrame,
    source: Source,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AntennaStats {
    pub antenna_id: u16,
    /// Frames that reached this antenna's air space (legitimate and forged).
    pub sent: u64,
    pub delivered: u64,
    pub legit_sent: u64,
    pub legit_delivered: u64,
    /// Slots for which this antenna alone heard every frame the slot needs.
    pub complete_slots: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub registry: Registry,
    pub feed: Vec<Observation>,
    pub verdicts: Vec<SlotVerdict>,
    pub ingest: IngestStats,
    pub antennas: Vec<AntennaStats>,
    /// (aircraft, slot) pairs that were transmitted.
    pub slots_total: u64,
    /// Slots where the union of antennas heard every frame the slot needs.
    pub server_complete_slots: u64,
    /// Slots whose accepted frames equal exactly what the aircraft sent.
    pub slots_correct: u64,
    /// Verdicts that accepted at least one forged frame.
    pub verdicts_with_injected: u64,
    pub legit_frames: u64,
    pub legit_frames_delivered: u64,
    pub data_frames_sent: u64,
    pub security_frames_sent: u64,
    pub injected_frames_sent: u64,
}

impl RunReport {
    pub fn slot_success_rate(&self) -> f64 {
        ratio(self.slots_correct, self.slots_total)
    }

    pub fn server_delivery_rate(&self) -> f64 {
        ratio(self.legit_frames_delivered, self.legit_frames)
    }

    pub fn server_completeness(&self) -> f64 {
        ratio(self.server_complete_slots, self.slots_total)
    }

    pub fn antenna_delivery_rate(&self, antenna: usize) -> f64 {
        let a = &self.antennas[antenna];
        ratio(a.legit_delivered, a.legit_sent)
    }

    pub fn antenna_completeness(&self, antenna: usize) -> f64 {
        ratio(self.antennas[antenna].complete_slots, self.slots_total)
    }

    /// Security frames per data frame, in percent.
    pub fn measured_overhead_percent(&self) -> f64 {
        ratio(self.security_frames_sent, self.data_frames_sent) * 100.0
    }

    pub fn verdict_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for v in &self.verdicts {
            let mut label = v.verdict.label().to_string();
            let detail = v.verdict.detail();
            if !detail.is_empty() {
                label = format!("{label}({detail})");
            }
            *out.entry(label).or_default() += 1;
        }
        out
    }

    pub fn max_subsets_tried(&self) -> u128 {
        self.verdicts
            .iter()
            .map(|v| v.verdict.subsets_tried())
            .max()
            .unwrap_or(0)
    }

    pub fn write_verdicts<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        write_verdict_log(out, &self.verdicts)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "slots transmitted      {}", self.slots_total);
        let _ = writeln!(
            s,
            "slots verified correct {} ({:.6})",
            self.slots_correct,
            self.slot_success_rate()
        );
        for (label, n) in self.verdict_counts() {
            let _ = writeln!(s, "  {label:<30} {n}");
        }
        let _ = writeln!(s, "verdicts with injected {}", self.verdicts_with_injected);
        let _ = writeln!(s, "max subsets tried      {}", self.max_subsets_tried());
        let _ = writeln!(
            s,
            "server delivery        {}/{} ({:.6})",
            self.legit_frames_delivered,
            self.legit_frames,
            self.server_delivery_rate()
        );
        let _ = writeln!(
            s,
            "server completeness    {:.6}",
            self.server_completeness()
        );
        let _ = writeln!(
            s,
            "overhead measured      {:.2}% ({} security / {} data)",
            self.measured_overhead_percent(),
            self.security_frames_sent,
            self.data_frames_sent
        );
        let _ = writeln!(s, "injected frames        {}", self.injected_frames_sent);
        let _ = writeln!(
            s,
            "antenna,sent,delivered,legit_sent,legit_delivered,complete_slots"
        );
        for a in &self.antennas {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                a.antenna_id,
                a.sent,
                a.delivered,
                a.legit_sent,
                a.legit_delivered,
                a.complete_slots
            );
        }
        s
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn aircraft_position(a: &AircraftConfig, report: u64) -> PositionPayload {
    const MASK: u64 = (1 << 17) - 1;
    PositionPayload {
        type_code: a.type_code,
        t_flag: false,
        f_flag: report % 2 == 1,
        altitude: a.altitude,
        latitude: ((u64::from(a.latitude) + report * u64::from(a.lat_step)) & MASK) as u32,
        longitude: ((u64::from(a.longitude) + report * u64::from(a.lon_step)) & MASK) as u32,
    }
}

fn spoof(icao: u32, payload: u64) -> Result<RawFrame, CodecError> {
    encode_frame(&Es1090Frame {
        df: DF_EXTENDED_SQUITTER,
        capability: AIRBORNE_CAPABILITY,
        icao,
        payload,
        pi: 0,
    })
}

fn adversary_transmissions<R: Rng>(
    plan: &AdversaryPlan,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<Vec<Transmission>, SimError> {
    let d = scenario.params.slot_duration;
    let t0 = scenario.config.t0;
    let end = t0 + scenario.slots as f64 * d;
    let ghost_alt: u16 = rng.random_range(0..1 << 12);
    let ghost_lat: u32 = rng.random_range(0..1 << 17);
    let ghost_lon: u32 = rng.random_range(0..1 << 17);
    let mut forged_digest = None;
    let mut current_slot = u64::MAX;
    let mut in_slot = 0usize;
    let mut out = Vec::new();
    for m in 0u64.. {
        // offset keeps injections off slot boundaries and legitimate ticks
        let time = t0 + (m as f64 + 0.37) / plan.rate;
        if time >= end {
            break;
        }
        let slot = ((time - t0) / d).floor() as u64;
        if slot != current_slot {
            current_slot = slot;
            in_slot = 0;
            forged_digest = Some(chunk_value(rng.random::<u128>()));
        }
        let payload = match plan.strategy {
            Strategy::EqualCoverage if in_slot < 3 => {
                let c = forged_digest.expect("set at slot start")[in_slot];
                encode_security_payload(&SecurityPayload {
                    kind: SecurityKind::Digest,
                    chunk_id: c.chunk_id,
                    content: c.content,
                })?
            }
            Strategy::Ghost | Strategy::EqualCoverage => {
                encode_position_payload(&PositionPayload {
                    type_code: 11,
                    t_flag: false,
                    f_flag: m % 2 == 1,
                    altitude: ghost_alt,
                    latitude: (ghost_lat + (m as u32).wrapping_mul(13)) & ((1 << 17) - 1),
                    longitude: (ghost_lon + (m as u32).wrapping_mul(3)) & ((1 << 17) - 1),
                })?
            }
            Strategy::Flood => encode_position_payload(&PositionPayload {
                type_code: rng.random_range(9..=18),
                t_flag: false,
                f_flag: rng.random(),
                altitude: rng.random_range(0..1 << 12),
                latitude: rng.random_range(0..1 << 17),
                longitude: rng.random_range(0..1 << 17),
            })?,
        };
        in_slot += 1;
        out.push(Transmission {
            time,
            frame: spoof(plan.target, payload)?,
            source: Source::Adversary,
        });
    }
    Ok(out)
}

/// Runs a scenario end to end. Identical configs give identical reports.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, SimError> {
    let scenario = config.validate()?;
    let mut master = ChaCha20Rng::seed_from_u64(config.seed);
    let n_ant = usize::from(config.antennas.count);

    // provisioning
    let mut authority = Authority::new();
    let mut registry = Registry::new();
    let mut sessions = Vec::new();
    for &icao in &scenario.icaos {
        let (prov, ann) =
            authority.provision(icao, config.t0, &scenario.params, Some(master.next_u64()))?;
        registry.insert(ann)?;
        sessions.push(AircraftSession::new(&prov, config.t0, scenario.params)?);
    }
    let mut adv_rng = ChaCha20Rng::seed_from_u64(master.next_u64());
    let mut channel_rng = ChaCha20Rng::seed_from_u64(master.next_u64());

    // legitimate traffic
    let mut tx = Vec::new();
    let mut truth: HashMap<(u32, u64), Vec<RawFrame>> = HashMap::new();
    let mut needed: HashMap<(usize, u64), u64> = HashMap::new();
    let (mut data_sent, mut security_sent) = (0u64, 0u64);
    for (i, session) in sessions.iter_mut().enumerate() {
        let ac = &config.aircraft[i];
        let mut report = 0u64;
        let mut emissions = Vec::new();
        for s in 0..scenario.slots {
            for k in 0..scenario.msgs_per_slot {
                emissions.extend(
                    session.emit_tick(session.tick_time(s, k), &aircraft_position(ac, report))?,
                );
                report += 1;
            }
        }
        emissions.extend(session.close(session.tick_time(scenario.slots, 0))?);
        for e in emissions {
            match e.kind {
                EmissionKind::Position => {
                    data_sent += 1;
                    truth
                        .entry((session.icao(), e.slot))
                        .or_default()
                        .push(e.frame);
                }
                _ => security_sent += 1,
            }
            *needed.entry((i, e.slot)).or_default() += 1;
            tx.push(Transmission {
                time: e.time,
                frame: e.frame,
                source: Source::Legit {
                    aircraft: i,
                    kind: e.kind,
                    slot: e.slot,
                },
            });
        }
    }
    let mut injected = HashSet::new();
    let mut coverage: Vec<bool> = vec![false; n_ant];
    if let Some(plan) = &scenario.adversary {
        for &a in &plan.coverage {
            coverage[usize::from(a)] = true;
        }
        for t in adversary_transmissions(plan, &scenario, &mut adv_rng)? {
            injected.insert(t.frame);
            tx.push(t);
        }
    }
    let injected_sent = tx.iter().filter(|t| t.source == Source::Adversary).count() as u64;
    tx.sort_by(|a, b| a.time.total_cmp(&b.time));

    // channel
    let mut channels = (0..n_ant)
        .map(|_| Channel::new(config.antennas.loss, config.antennas.burst))
        .collect::<Result<Vec<_>, _>>()?;
    let mut antennas: Vec<AntennaStats> = (0..n_ant)
        .map(|a| AntennaStats {
            antenna_id: a as u16,
            ..Default::default()
        })
        .collect();
    let mut heard: HashMap<(usize, u64), (Vec<u64>, u64)> = HashMap::new();
    let mut feed = Vec::new();
    let (mut legit_frames, mut legit_delivered) = (0u64, 0u64);
    for t in &tx {
        let legit = matches!(t.source, Source::Legit { .. });
        let mut any = false;
        let mut got = vec![false; n_ant];
        for a in 0..n_ant {
            if !legit && !coverage[a] {
                continue;
            }
            let stats = &mut antennas[a];
            stats.sent += 1;
            stats.legit_sent += u64::from(legit);
            if channels[a].deliver(&mut channel_rng) {
                stats.delivered += 1;
                stats.legit_delivered += u64::from(legit);
                got[a] = true;
                any = true;
                feed.push(Observation {
                    antenna_id: a as u16,
                    rx_time: t.time,
                    frame: t.frame,
                });
            }
        }
        if let Source::Legit { aircraft, slot, .. } = t.source {
            legit_frames += 1;
            legit_delivered += u64::from(any);
            let entry = heard
                .entry((aircraft, slot))
                .or_insert_with(|| (vec![0; n_ant], 0));
            for (a, g) in got.iter().enumerate() {
                entry.0[a] += u64::from(*g);
            }
            entry.1 += u64::from(any);
        }
    }
    let mut server_complete = 0;
    for (key, need) in &needed {
        if let Some((per_ant, server)) = heard.get(key) {
            for (a, count) in per_ant.iter().enumerate() {
                antennas[a].complete_slots += u64::from(count == need);
            }
            server_complete += u64::from(server == need);
        }
    }

    let (verdicts, ingest) = verify_feed(&registry, config.verifier_config(), &feed);

    let mut slots_correct = 0;
    let mut with_injected = 0;
    for v in &verdicts {
        let accepted = v.verdict.accepted();
        if accepted.iter().any(|f| injected.contains(f)) {
            with_injected += 1;
        }
        if let Some(slot) = v.slot {
            let sent = truth.get(&(v.icao, slot));
            if !accepted.is_empty() && sent.is_some_and(|s| s.as_slice() == accepted) {
                slots_correct += 1;
            }
        }
    }

    Ok(RunReport {
        registry,
        feed,
        verdicts,
        ingest,
        antennas,
        slots_total: scenario.slots * scenario.icaos.len() as u64,
        server_complete_slots: server_complete,
        slots_correct,
        verdicts_with_injected: with_injected,
        legit_frames,
        legit_frames_delivered: legit_delivered,
        data_frames_sent: data_sent,
        security_frames_sent: security_sent,
        injected_frames_sent: injected_sent,
    })
}
