//! Antenna feed records.
//!
//! Binary: fixed 24-byte records `antenna_id: u16 LE | rx_time: f64 LE |
//! frame: [u8; 14]`. Text: one `antenna_id,rx_time,frame_hex` per line.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::codec::{RawFrame, FRAME_LEN};

pub const RECORD_LEN: usize = 24;

/// One frame as received by one antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub antenna_id: u16,
    pub rx_time: f64,
    pub frame: RawFrame,
}

impl Observation {
    pub fn to_record(&self) -> [u8; RECORD_LEN] {
        let mut out = [0u8; RECORD_LEN];
        out[..2].copy_from_slice(&self.antenna_id.to_le_bytes());
        out[2..10].copy_from_slice(&self.rx_time.to_le_bytes());
        out[10..].copy_from_slice(self.frame.as_bytes());
        out
    }

    pub fn to_text_line(&self) -> String {
        format!(
            "{},{},{}",
            self.antenna_id,
            self.rx_time,
            self.frame.to_hex()
        )
    }
}

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("malformed record at byte offset {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedFormat {
    Binary,
    Text,
}

impl FeedFormat {
    /// `.txt` and `.csv` are text; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("txt") || ext.eq_ignore_ascii_case("csv") => {
                FeedFormat::Text
            }
            _ => FeedFormat::Binary,
        }
    }
}

pub fn parse_binary_feed(bytes: &[u8]) -> Result<Vec<Observation>, FeedError> {
    let mut out = Vec::with_capacity(bytes.len() / RECORD_LEN);
    for (i, rec) in bytes.chunks(RECORD_LEN).enumerate() {
        let offset = i * RECORD_LEN;
        if rec.len() != RECORD_LEN {
            return Err(FeedError::Malformed {
                offset,
                message: format!("truncated record of {} bytes", rec.len()),
            });
        }
        let rx_time = f64::from_le_bytes(rec[2..10].try_into().expect("8 bytes"));
        if !rx_time.is_finite() {
            return Err(FeedError::Malformed {
                offset: offset + 2,
                message: "non-finite rx_time".into(),
            });
        }
        let mut frame = [0u8; FRAME_LEN];
        frame.copy_from_slice(&rec[10..]);
        out.push(Observation {
            antenna_id: u16::from_le_bytes([rec[0], rec[1]]),
            rx_time,
            frame: RawFrame(frame),
        });
    }
    Ok(out)
}

pub fn parse_text_feed(text: &str) -> Result<Vec<Observation>, FeedError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |message: String| FeedError::Malformed {
            offset: start,
            message,
        };
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let antenna_id = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad antenna id `{}`", fields[0])))?;
        let rx_time: f64 = fields[1]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| bad(format!("bad rx_time `{}`", fields[1])))?;
        let frame = RawFrame::from_hex(fields[2]).map_err(|e| bad(e.to_string()))?;
        out.push(Observation {
            antenna_id,
            rx_time,
            frame,
        });
    }
    Ok(out)
}

pub fn read_feed(path: &Path, format: FeedFormat) -> Result<Vec<Observation>, FeedError> {
    match format {
        FeedFormat::Binary => parse_binary_feed(&std::fs::read(path)?),
        FeedFormat::Text => parse_text_feed(&std::fs::read_to_string(path)?),
    }
}

pub fn write_feed<W: Write>(
    mut out: W,
    observations: &[Observation],
    format: FeedFormat,
) -> io::Result<()> {
    for obs in observations {
        match format {
            FeedFormat::Binary => out.write_all(&obs.to_record())?,
            FeedFormat::Text => writeln!(out, "{}", obs.to_text_line())?,
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs() -> Vec<Observation> {
        let frame = RawFrame::from_hex("8D4840D6202CC371C32CE0576098").unwrap();
        vec![
            Observation {
                antenna_id: 3,
                rx_time: 0.1 + 0.2,
                frame,
            },
            Observation {
                antenna_id: 65535,
                rx_time: 1e9 / 3.0,
                frame,
            },
        ]
    }

    #[test]
    fn binary_layout() {
        let rec = obs()[0].to_record();
        assert_eq!(&rec[..2], &[3, 0]);
        assert_eq!(&rec[2..10], &(0.1f64 + 0.2).to_le_bytes());
        assert_eq!(rec[10], 0x8D);
    }

    #[test]
    fn both_formats_round_trip_exactly() {
        for format in [FeedFormat::Binary, FeedFormat::Text] {
            let mut buf = Vec::new();
            write_feed(&mut buf, &obs(), format).unwrap();
            let back = match format {
                FeedFormat::Binary => parse_binary_feed(&buf).unwrap(),
                FeedFormat::Text => parse_text_feed(std::str::from_utf8(&buf).unwrap()).unwrap(),
            };
            assert_eq!(back, obs());
        }
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let mut buf = Vec::new();
        write_feed(&mut buf, &obs(), FeedFormat::Binary).unwrap();
        buf.truncate(30);
        match parse_binary_feed(&buf) {
            Err(FeedError::Malformed { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_text_line_reports_offset() {
        let text = "1,0.5,8D4840D6202CC371C32CE0576098\n2,abc,8D4840D6202CC371C32CE0576098\n";
        match parse_text_feed(text) {
            Err(FeedError::Malformed { offset, message }) => {
                assert_eq!(offset, 35);
                assert!(message.contains("rx_time"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            FeedFormat::from_path(Path::new("a/feed.txt")),
            FeedFormat::Text
        );
        assert_eq!(
            FeedFormat::from_path(Path::new("feed.bin")),
            FeedFormat::Binary
        );
    }
}
