use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::codec::RawFrame;
use crate::tesla::{Chunk, CHUNKS_PER_VALUE};

/// A distinct frame with every antenna that reported it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: RawFrame,
    pub antennas: BTreeSet<u16>,
    rx_times: Vec<f64>,
}

impl FrameRecord {
    fn new(frame: RawFrame) -> Self {
        FrameRecord {
            frame,
            antennas: BTreeSet::new(),
            rx_times: Vec::new(),
        }
    }

    pub fn antenna_count(&self) -> usize {
        self.antennas.len()
    }

    /// Median reception time across reporting antennas.
    pub fn median_rx_time(&self) -> f64 {
        let mut times = self.rx_times.clone();
        times.sort_by(f64::total_cmp);
        let n = times.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            times[n / 2]
        } else {
            (times[n / 2 - 1] + times[n / 2]) / 2.0
        }
    }
}

/// Canonical transmission order: ascending median rx time, then frame bytes.
pub fn canonical_cmp(a: &FrameRecord, b: &FrameRecord) -> Ordering {
    a.median_rx_time()
        .total_cmp(&b.median_rx_time())
        .then_with(|| a.frame.cmp(&b.frame))
}

/// Observed contents per chunk id, each with its reporting antennas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkVotes {
    by_id: [BTreeMap<u64, BTreeSet<u16>>; CHUNKS_PER_VALUE],
}

impl ChunkVotes {
    pub(crate) fn record(&mut self, chunk_id: u8, content: u64, antenna: u16) -> bool {
        match self.by_id.get_mut(usize::from(chunk_id)) {
            Some(votes) => votes.entry(content).or_default().insert(antenna),
            None => false,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.by_id.iter().all(|v| !v.is_empty())
    }

    /// Candidate contents for `chunk_id`, most corroborated first.
    pub fn ranked(&self, chunk_id: u8) -> Vec<(u64, usize)> {
        let mut out: Vec<(u64, usize)> = self.by_id[usize::from(chunk_id)]
            .iter()
            .map(|(content, ants)| (*content, ants.len()))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Contents that pass the majority rule (count >= ceil(max / 2)).
    pub fn majority(&self, chunk_id: u8) -> Vec<Chunk> {
        let ranked = self.ranked(chunk_id);
        let Some(&(_, best)) = ranked.first() else {
            return Vec::new();
        };
        let threshold = best.div_ceil(2);
        ranked
            .into_iter()
            .filter(|(_, n)| *n >= threshold)
            .map(|(content, _)| Chunk { chunk_id, content })
            .collect()
    }
}

/// Everything the server holds for one aircraft and one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotBuffer {
    pub icao: u32,
    pub slot: u64,
    pub slot_start: f64,
    pub slot_duration: f64,
    data: BTreeMap<RawFrame, FrameRecord>,
    pub digest: ChunkVotes,
    pub key: ChunkVotes,
}

impl SlotBuffer {
    pub fn new(icao: u32, slot: u64, slot_start: f64, slot_duration: f64) -> Self {
        SlotBuffer {
            icao,
            slot,
            slot_start,
            slot_duration,
            data: BTreeMap::new(),
            digest: ChunkVotes::default(),
            key: ChunkVotes::default(),
        }
    }

    /// Records a data frame; returns false for a repeated (frame, antenna).
    pub fn add_data(&mut self, frame: RawFrame, antenna: u16, rx_time: f64) -> bool {
        let rec = self
            .data
            .entry(frame)
            .or_insert_with(|| FrameRecord::new(frame));
        if rec.antennas.insert(antenna) {
            rec.rx_times.push(rx_time);
            true
        } else {
            false
        }
    }

    pub fn data_count(&self) -> usize {
        self.data.len()
    }

    pub fn record(&self, frame: &RawFrame) -> Option<&FrameRecord> {
        self.data.get(frame)
    }

    /// Distinct data frames in canonical transmission order.
    pub fn canonical_frames(&self) -> Vec<&FrameRecord> {
        let mut v: Vec<&FrameRecord> = self.data.values().collect();
        v.sort_by(|a, b| canonical_cmp(a, b));
        v
    }
}
