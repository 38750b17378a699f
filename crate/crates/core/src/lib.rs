//! SOS: broadcast authentication for ADS-B.
//!
//! Aircraft append delayed-key TESLA digests to their regular 1090ES traffic
//! and a community server that fuses many receivers checks them, falling back
//! to a majority-filtered subset search when frames were injected.

pub mod analysis;
pub mod authority;
pub mod codec;
pub mod sender;
pub mod simulator;
pub mod tesla;
pub mod verifier;

pub use authority::{Announcement, Authority, Provision, Registry};
pub use codec::{Es1090Frame, PositionPayload, RawFrame, SecurityKind, SecurityPayload};
pub use sender::{AircraftSession, Emission, EmissionKind, ProtocolParams};
pub use tesla::{Digest128, Key128, KeyChain};
pub use verifier::{Observation, SlotVerdict, VerificationVerdict, Verifier, VerifierConfig};
