//! Closed-form calculators: bandwidth overhead, slot verification success
//! under loss, and worst-case recovery work. Sweeps produce CSV tables.

use std::io;

use thiserror::Error;

use crate::codec::CHUNK_CONTENT_BITS;

/// Frames HIBS needs to authenticate one payload (1 data + 22 signature).
pub const HIBS_WINDOW: u32 = 23;
/// Recommended ES1090 average rate cap (msgs/s).
pub const BASELINE_RATE: f64 = 6.2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("need T >= N, got T={total}, N={chosen}")]
    TooFewCandidates { total: u64, chosen: u64 },
    #[error("binomial C({0}, {1}) overflows 128 bits")]
    Overflow(u64, u64),
    #[error("sweep range `{0}` is empty")]
    EmptyRange(&'static str),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadParams {
    pub key_bits: u32,
    pub digest_bits: u32,
    pub chunk_bits: u32,
    pub slot_duration: f64,
    pub data_rate: f64,
    pub baseline_rate: f64,
}

impl Default for OverheadParams {
    fn default() -> Self {
        OverheadParams {
            key_bits: 128,
            digest_bits: 128,
            chunk_bits: CHUNK_CONTENT_BITS,
            slot_duration: 2.0,
            data_rate: 6.0,
            baseline_rate: BASELINE_RATE,
        }
    }
}

impl OverheadParams {
    pub fn key_chunks(&self) -> u32 {
        self.key_bits.div_ceil(self.chunk_bits)
    }

    pub fn digest_chunks(&self) -> u32 {
        self.digest_bits.div_ceil(self.chunk_bits)
    }

    pub fn security_frames_per_slot(&self) -> u32 {
        self.key_chunks() + self.digest_chunks()
    }

    pub fn data_frames_per_slot(&self) -> f64 {
        self.data_rate * self.slot_duration
    }
}

/// Security frames per slot over data frames per slot, in percent.
pub fn overhead_percent(p: &OverheadParams) -> f64 {
    f64::from(p.security_frames_per_slot()) / p.data_frames_per_slot() * 100.0
}

/// Average emitted rate when security frames are added on top of the data
/// rate (frames/s).
pub fn emitted_rate(p: &OverheadParams) -> f64 {
    p.data_rate + f64::from(p.security_frames_per_slot()) / p.slot_duration
}

/// The recommended cap scaled by the overhead, i.e. the cap an SOS sender
/// needs if security frames are additive.
pub fn augmented_cap(p: &OverheadParams) -> f64 {
    p.baseline_rate * (1.0 + overhead_percent(p) / 100.0)
}

/// Probability that all `window_msgs` frames survive i.i.d. loss `p_loss`.
pub fn slot_success_prob(p_loss: f64, window_msgs: u32) -> f64 {
    (1.0 - p_loss).powi(window_msgs as i32)
}

/// Frames a slot cannot do without: its data frames plus the digest chunks
/// (12 + 3 = 15 for d = 2 s at 6 msg/s). A lost key is not counted because
/// any later disclosed key hashes down to it.
pub fn sos_loss_window(slot_duration: f64, data_rate: f64, digest_bits: u32) -> u32 {
    (data_rate * slot_duration).round() as u32 + digest_bits.div_ceil(CHUNK_CONTENT_BITS)
}

/// Every frame emitted for one slot: data, digest chunks and key chunks
/// (12 + 3 + 3 = 18 for the defaults). This is the window when lost keys are
/// never derived from later ones.
pub fn frames_per_verification(p: &OverheadParams) -> u32 {
    p.data_frames_per_slot().round() as u32 + p.security_frames_per_slot()
}

/// `C(T, N)`, exact.
pub fn recovery_worst_case(total: u64, chosen: u64) -> Result<u128, AnalysisError> {
    if total < chosen {
        return Err(AnalysisError::TooFewCandidates { total, chosen });
    }
    let k = chosen.min(total - chosen);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (T - i) is divisible by (i + 1) after the multiplication
        acc = acc
            .checked_mul(u128::from(total - i))
            .ok_or(AnalysisError::Overflow(total, chosen))?
            / u128::from(i + 1);
    }
    Ok(acc)
}

/// A CSV-ready table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Overhead grid over digest sizes and slot durations.
pub fn overhead_sweep(
    digest_bits: &[u32],
    slot_durations: &[f64],
    key_bits: u32,
    data_rate: f64,
) -> Result<Table, AnalysisError> {
    if digest_bits.is_empty() {
        return Err(AnalysisError::EmptyRange("digest_bits"));
    }
    if slot_durations.is_empty() {
        return Err(AnalysisError::EmptyRange("slot_duration"));
    }
    if data_rate <= 0.0 || slot_durations.iter().any(|d| *d <= 0.0) {
        return Err(AnalysisError::Invalid(
            "rates and durations must be positive".into(),
        ));
    }
    let mut t = Table::new(&[
        "digest_bits",
        "key_bits",
        "slot_duration_s",
        "security_frames",
        "data_frames",
        "overhead_percent",
        "emitted_rate_per_s",
    ]);
    for &digest in digest_bits {
        for &d in slot_durations {
            let p = OverheadParams {
                key_bits,
                digest_bits: digest,
                slot_duration: d,
                data_rate,
                ..OverheadParams::default()
            };
            t.rows.push(vec![
                digest.to_string(),
                key_bits.to_string(),
                num(d),
                p.security_frames_per_slot().to_string(),
                num(p.data_frames_per_slot()),
                num(overhead_percent(&p)),
                num(emitted_rate(&p)),
            ]);
        }
    }
    Ok(t)
}

/// Slot success probability for SOS and HIBS over loss probabilities.
pub fn loss_sweep(
    loss_probs: &[f64],
    slot_duration: f64,
    data_rate: f64,
) -> Result<Table, AnalysisError> {
    if loss_probs.is_empty() {
        return Err(AnalysisError::EmptyRange("loss_prob"));
    }
    if loss_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(AnalysisError::Invalid(
            "loss probabilities must lie in [0, 1]".into(),
        ));
    }
    let window = sos_loss_window(slot_duration, data_rate, 128);
    let mut t = Table::new(&[
        "loss_prob",
        "sos_window",
        "sos_success",
        "hibs_window",
        "hibs_success",
    ]);
    for &p in loss_probs {
        t.rows.push(vec![
            num(p),
            window.to_string(),
            num(slot_success_prob(p, window)),
            HIBS_WINDOW.to_string(),
            num(slot_success_prob(p, HIBS_WINDOW)),
        ]);
    }
    Ok(t)
}

/// Worst-case recovery work for SOS and HIBS under injection at the given
/// adversary rates.
pub fn recovery_sweep(
    adversary_rates: &[f64],
    slot_durations: &[f64],
    data_rate: f64,
) -> Result<Table, AnalysisError> {
    if adversary_rates.is_empty() {
        return Err(AnalysisError::EmptyRange("adversary_rate"));
    }
    if slot_durations.is_empty() {
        return Err(AnalysisError::EmptyRange("slot_duration"));
    }
    let mut t = Table::new(&[
        "adversary_rate_per_s",
        "slot_duration_s",
        "legit_msgs",
        "injected_msgs",
        "sos_worst_case",
        "sos_log2",
        "hibs_worst_case",
        "hibs_log2",
    ]);
    // HIBS spreads one authenticated payload over 23 frames at the data rate.
    let hibs_span = f64::from(HIBS_WINDOW) / data_rate;
    for &d in slot_durations {
        for &rate in adversary_rates {
            let legit = (data_rate * d).round() as u64;
            let injected = (rate * d).round() as u64;
            let sos = recovery_worst_case(legit + injected, legit)?;
            let hibs_injected = (rate * hibs_span).round() as u64;
            let hibs = recovery_worst_case(
                u64::from(HIBS_WINDOW) + hibs_injected,
                u64::from(HIBS_WINDOW),
            )?;
            t.rows.push(vec![
                num(rate),
                num(d),
                legit.to_string(),
                injected.to_string(),
                sos.to_string(),
                num((sos as f64).log2()),
                hibs.to_string(),
                num((hibs as f64).log2()),
            ]);
        }
    }
    Ok(t)
}
