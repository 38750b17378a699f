//! Recovery mode: antenna-majority filtering per sub-slot followed by an
//! exhaustive N-subset digest search.

use rayon::prelude::*;

use super::buffer::{FrameRecord, SlotBuffer};
use super::{RejectReason, VerificationVerdict};
use crate::analysis::recovery_worst_case;
use crate::codec::RawFrame;
use crate::tesla::{Digest128, Key128, SlotMac};

/// Default cap on subset digests per slot; covers C(24, 12) with headroom.
pub const DEFAULT_MAX_SUBSETS: u128 = 1 << 22;

const SEARCH_BATCH: usize = 8192;

/// Key and digest already resolved for a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotMaterial {
    pub key: Key128,
    pub digest: Digest128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryLimits {
    pub max_subsets: u128,
}

impl Default for RecoveryLimits {
    fn default() -> Self {
        RecoveryLimits {
            max_subsets: DEFAULT_MAX_SUBSETS,
        }
    }
}

fn subslot_of(rec: &FrameRecord, buffer: &SlotBuffer, subslots: u32) -> usize {
    let width = buffer.slot_duration / f64::from(subslots);
    let offset = (rec.median_rx_time() - buffer.slot_start) / width;
    (offset.floor().max(0.0) as usize).min(subslots as usize - 1)
}

/// Keeps, within each sub-slot, the frames reported by at least
/// `ceil(A_max / 2)` antennas, `A_max` being the best count in that sub-slot.
/// Output is in canonical order.
pub fn majority_filter(buffer: &SlotBuffer, subslots: u32) -> Vec<&FrameRecord> {
    let subslots = subslots.max(1);
    let frames = buffer.canonical_frames();
    let mut best = vec![0usize; subslots as usize];
    for rec in &frames {
        let s = subslot_of(rec, buffer, subslots);
        best[s] = best[s].max(rec.antenna_count());
    }
    frames
        .into_iter()
        .filter(|rec| {
            let s = subslot_of(rec, buffer, subslots);
            rec.antenna_count() >= best[s].div_ceil(2)
        })
        .collect()
}

/// Lexicographic k-combinations of `0..n`.
struct Combinations {
    idx: Vec<usize>,
    n: usize,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            idx: (0..k).collect(),
            n,
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        match (0..k).rev().find(|&i| self.idx[i] != i + self.n - k) {
            Some(i) => {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(out)
    }
}

/// Searches the N-subsets of `candidates` (given in canonical order) for the
/// one whose digest under `material.key` equals `material.digest`.
///
/// Subsets are enumerated lexicographically over the candidates ranked by
/// antenna count (descending, canonical order breaking ties); each subset is
/// digested in canonical order. The first match in that order wins, so the
/// result is deterministic even though batches are checked in parallel.
pub fn recover_slot(
    candidates: &[&FrameRecord],
    msgs_per_slot: usize,
    material: &SlotMaterial,
    limits: &RecoveryLimits,
) -> VerificationVerdict {
    let total = candidates.len();
    if total < msgs_per_slot || msgs_per_slot == 0 {
        return VerificationVerdict::Rejected {
            reason: RejectReason::InsufficientCandidates,
            subsets_tried: 0,
        };
    }
    let worst = recovery_worst_case(total as u64, msgs_per_slot as u64).unwrap_or(u128::MAX);
    if worst > limits.max_subsets {
        return VerificationVerdict::Rejected {
            reason: RejectReason::Budget,
            subsets_tried: 0,
        };
    }

    // rank[r] = canonical position of the r-th most corroborated candidate
    let mut rank: Vec<usize> = (0..total).collect();
    rank.sort_by(|&a, &b| {
        candidates[b]
            .antenna_count()
            .cmp(&candidates[a].antenna_count())
            .then(a.cmp(&b))
    });
    let frames: Vec<RawFrame> = candidates.iter().map(|r| r.frame).collect();
    let mac = SlotMac::new(&material.key);

    let matches = |combo: &Vec<usize>| {
        let mut positions: Vec<usize> = combo.iter().map(|&r| rank[r]).collect();
        positions.sort_unstable();
        mac.digest(positions.iter().map(|&p| &frames[p])) == material.digest
    };

    let mut combos = Combinations::new(total, msgs_per_slot);
    let mut tried: u128 = 0;
    loop {
        let batch: Vec<Vec<usize>> = combos.by_ref().take(SEARCH_BATCH).collect();
        if batch.is_empty() {
            break;
        }
        if let Some(pos) = batch.par_iter().position_first(matches) {
            tried += pos as u128 + 1;
            let mut positions: Vec<usize> = batch[pos].iter().map(|&r| rank[r]).collect();
            positions.sort_unstable();
            return VerificationVerdict::Recovered {
                frames: positions.iter().map(|&p| frames[p]).collect(),
                subsets_tried: tried,
            };
        }
        tried += batch.len() as u128;
    }
    VerificationVerdict::Rejected {
        reason: RejectReason::NoMatch,
        subsets_tried: tried,
    }
}
