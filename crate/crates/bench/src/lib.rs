//! Fixtures shared by the benchmarks.

use sos_core::codec::{encode_frame, encode_position_payload};
use sos_core::verifier::SlotBuffer;
use sos_core::{Es1090Frame, PositionPayload, RawFrame};

/// Distinct, valid position frames for one aircraft.
pub fn position_frames(icao: u32, count: usize, salt: u32) -> Vec<RawFrame> {
    (0..count as u32)
        .map(|i| {
            let payload = encode_position_payload(&PositionPayload {
                type_code: 11,
                f_flag: i % 2 == 1,
                altitude: 0xC38,
                latitude: (salt.wrapping_mul(7919) + i * 13) & 0x1_FFFF,
                longitude: (salt.wrapping_mul(104_729) + i * 29) & 0x1_FFFF,
                ..Default::default()
            })
            .expect("fields in range");
            encode_frame(&Es1090Frame {
                df: 17,
                capability: 5,
                icao,
                payload,
                pi: 0,
            })
            .expect("valid frame")
        })
        .collect()
}

/// A one-second slot holding `legit` frames seen by `legit_antennas` and
/// `fakes` frames seen by `fake_antennas`, interleaved in time.
pub fn injected_slot(
    legit: usize,
    fakes: usize,
    legit_antennas: u16,
    fake_antennas: u16,
) -> (SlotBuffer, Vec<RawFrame>) {
    let mut buf = SlotBuffer::new(1, 0, 0.0, 1.0);
    let real = position_frames(1, legit, 1);
    let forged = position_frames(1, fakes, 2);
    for (i, f) in real.iter().enumerate() {
        for a in 0..legit_antennas {
            buf.add_data(*f, a, (i as f64 + 0.5) / legit as f64);
        }
    }
    for (i, f) in forged.iter().enumerate() {
        for a in 0..fake_antennas {
            buf.add_data(*f, a, (i as f64 + 0.25) / fakes.max(1) as f64);
        }
    }
    (buf, real)
}
