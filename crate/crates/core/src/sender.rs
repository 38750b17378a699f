//! Aircraft-side protocol engine.
//!
//! Per slot `s` the aircraft emits, in order:
//!
//! 1. three Type-32 frames disclosing the key of slot `s - 1` (none in slot 0),
//! 2. `N = rate * d` position frames,
//! 3. three Type-25 frames carrying the digest of those `N` frames.
//!
//! Time slot `s` is authenticated with chain index `s + 1`, so slot 0 already
//! uses a secret key and the public root `K_0` never signs anything.

use thiserror::Error;

use crate::authority::Provision;
use crate::codec::{
    encode_frame, encode_position_payload, encode_security_payload, CodecError, Es1090Frame,
    PositionPayload, RawFrame, SecurityKind, SecurityPayload, DF_EXTENDED_SQUITTER,
};
use crate::tesla::{
    chunk_value, ChainError, KeyChain, SlotMac, CHUNKS_PER_VALUE, DEFAULT_CHAIN_LENGTH,
};

/// Transponder capability advertised in emitted frames (airborne).
pub const AIRBORNE_CAPABILITY: u8 = 5;

const MAX_FRAME_SPACING: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("time {now} is before boot time {t0}")]
    PreBoot { now: f64, t0: f64 },
    #[error("invalid protocol parameters: {0}")]
    Params(String),
    #[error("session terminated: {0}")]
    Terminated(#[from] ChainError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Timing and chain parameters shared by sender, authority and verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub slot_duration: f64,
    pub data_rate: f64,
    pub chain_length: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            slot_duration: 2.0,
            data_rate: 6.0,
            chain_length: DEFAULT_CHAIN_LENGTH,
        }
    }
}

impl ProtocolParams {
    /// `N = rate * d`, which must be a positive integer.
    pub fn msgs_per_slot(&self) -> Result<u32, SessionError> {
        if !(self.slot_duration.is_finite() && self.slot_duration > 0.0) {
            return Err(SessionError::Params(format!(
                "slot duration must be positive, got {}",
                self.slot_duration
            )));
        }
        if !(self.data_rate.is_finite() && self.data_rate > 0.0) {
            return Err(SessionError::Params(format!(
                "data rate must be positive, got {}",
                self.data_rate
            )));
        }
        if self.chain_length == 0 {
            return Err(SessionError::Params(
                "chain length must be at least 1".into(),
            ));
        }
        let n = self.data_rate * self.slot_duration;
        let rounded = n.round();
        if (n - rounded).abs() > 1e-9 || rounded < 1.0 || rounded > f64::from(u16::MAX) {
            return Err(SessionError::Params(format!(
                "rate * slot duration must be a positive integer, got {n}"
            )));
        }
        Ok(rounded as u32)
    }

    /// Spacing between consecutive position transmissions.
    pub fn tick_interval(&self) -> f64 {
        1.0 / self.data_rate
    }

    /// Gap between frames emitted back-to-back at one tick.
    pub fn frame_spacing(&self) -> f64 {
        MAX_FRAME_SPACING.min(self.tick_interval() / 16.0)
    }
}

/// Slot containing `now`; slots are `[t_s, t_{s+1})`.
pub fn slot_index(now: f64, t0: f64, slot_duration: f64) -> Result<u64, SessionError> {
    if now < t0 {
        return Err(SessionError::PreBoot { now, t0 });
    }
    Ok(((now - t0) / slot_duration).floor() as u64)
}

/// Chain index of the key that authenticates time slot `slot`.
pub fn chain_index_for_slot(slot: u64) -> u64 {
    slot + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmissionKind {
    Position,
    Digest,
    Key,
}

/// A frame leaving the aircraft.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub time: f64,
    pub frame: RawFrame,
    pub kind: EmissionKind,
    /// Slot whose verification this frame is needed for (for key frames, the
    /// slot being disclosed).
    pub slot: u64,
}

#[derive(Debug)]
struct SlotState {
    slot: u64,
    data: Vec<RawFrame>,
}

/// One aircraft's sending state machine.
#[derive(Debug)]
pub struct AircraftSession {
    icao: u32,
    t0: f64,
    params: ProtocolParams,
    msgs_per_slot: u32,
    chain: KeyChain,
    current: Option<SlotState>,
}

impl AircraftSession {
    pub fn new(
        provision: &Provision,
        t0: f64,
        params: ProtocolParams,
    ) -> Result<Self, SessionError> {
        let params = ProtocolParams {
            chain_length: provision.chain_length,
            ..params
        };
        let msgs_per_slot = params.msgs_per_slot()?;
        let chain = KeyChain::generate(provision.master_key, provision.chain_length)?;
        Ok(AircraftSession {
            icao: provision.icao,
            t0,
            params,
            msgs_per_slot,
            chain,
            current: None,
        })
    }

    pub fn icao(&self) -> u32 {
        self.icao
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn msgs_per_slot(&self) -> u32 {
        self.msgs_per_slot
    }

    pub fn slot_start(&self, slot: u64) -> f64 {
        self.t0 + slot as f64 * self.params.slot_duration
    }

    /// Nominal time of the `k`-th position transmission in `slot`, centred in
    /// its tick interval so that no frame sits on a slot boundary.
    pub fn tick_time(&self, slot: u64, k: u32) -> f64 {
        self.slot_start(slot) + (f64::from(k) + 0.5) * self.params.tick_interval()
    }

    fn frame(&self, payload: u64) -> Result<RawFrame, SessionError> {
        Ok(encode_frame(&Es1090Frame {
            df: DF_EXTENDED_SQUITTER,
            capability: AIRBORNE_CAPABILITY,
            icao: self.icao,
            payload,
            pi: 0,
        })?)
    }

    fn security_frames(
        &self,
        kind: SecurityKind,
        value: u128,
    ) -> Result<Vec<RawFrame>, SessionError> {
        chunk_value(value)
            .iter()
            .map(|c| {
                let payload = encode_security_payload(&SecurityPayload {
                    kind,
                    chunk_id: c.chunk_id,
                    content: c.content,
                })?;
                self.frame(payload)
            })
            .collect()
    }

    fn key_emissions(&self, slot: u64, start: f64) -> Result<Vec<Emission>, SessionError> {
        let key = self.chain.slot_key(chain_index_for_slot(slot))?.key;
        let spacing = self.params.frame_spacing();
        Ok(self
            .security_frames(SecurityKind::Key, key.to_u128())?
            .into_iter()
            .enumerate()
            .map(|(j, frame)| Emission {
                time: start + j as f64 * spacing,
                frame,
                kind: EmissionKind::Key,
                slot,
            })
            .collect())
    }

    /// Frames due at this transmission opportunity. Once a slot has carried
    /// its `N` position frames and the digest, further ticks in that slot
    /// return nothing.
    pub fn emit_tick(
        &mut self,
        now: f64,
        position: &PositionPayload,
    ) -> Result<Vec<Emission>, SessionError> {
        let slot = slot_index(now, self.t0, self.params.slot_duration)?;
        // fail before touching state so a terminated session stays consistent
        self.chain.slot_key(chain_index_for_slot(slot))?;
        let spacing = self.params.frame_spacing();
        let mut out = Vec::new();
        let mut t = now;

        let rolled = match &self.current {
            Some(state) if state.slot == slot => false,
            Some(state) => {
                if state.slot + 1 == slot {
                    out.extend(self.key_emissions(state.slot, t)?);
                    t += CHUNKS_PER_VALUE as f64 * spacing;
                }
                true
            }
            None => true,
        };
        if rolled {
            self.current = Some(SlotState {
                slot,
                data: Vec::with_capacity(self.msgs_per_slot as usize),
            });
        }

        let n = self.msgs_per_slot as usize;
        let filled = self.current.as_ref().map_or(0, |s| s.data.len());
        if filled >= n {
            return Ok(out);
        }
        let frame = self.frame(encode_position_payload(position)?)?;
        out.push(Emission {
            time: t,
            frame,
            kind: EmissionKind::Position,
            slot,
        });
        t += spacing;
        let state = self.current.as_mut().expect("slot state set above");
        state.data.push(frame);

        if state.data.len() == n {
            let key = self.chain.slot_key(chain_index_for_slot(slot))?.key;
            let digest = SlotMac::new(&key).digest(&state.data);
            for (j, frame) in self
                .security_frames(SecurityKind::Digest, digest.to_u128())?
                .into_iter()
                .enumerate()
            {
                out.push(Emission {
                    time: t + j as f64 * spacing,
                    frame,
                    kind: EmissionKind::Digest,
                    slot,
                });
            }
        }
        Ok(out)
    }

    /// Discloses the key of the last active slot at `now`, which must fall in
    /// the slot right after it. Used when the aircraft stops emitting data.
    pub fn close(&mut self, now: f64) -> Result<Vec<Emission>, SessionError> {
        let slot = slot_index(now, self.t0, self.params.slot_duration)?;
        match self.current.take() {
            Some(state) if state.slot + 1 == slot => self.key_emissions(state.slot, now),
            _ => Ok(Vec::new()),
        }
    }
}
