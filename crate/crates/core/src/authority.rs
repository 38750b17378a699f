//! Avionics authority: per-flight provisioning and the public announcement
//! registry consumed by verifiers.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::sender::ProtocolParams;
use crate::tesla::{derive_root_key, ChainError, Key128};

#[derive(Debug, Error)]
pub enum AuthorityError {
    #[error("icao {0:06x} is already provisioned")]
    DuplicateIcao(u32),
    #[error("icao {0:#x} does not fit in 24 bits")]
    BadIcao(u32),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("{0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate icao {icao:06x}")]
    Duplicate { line: usize, icao: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Public per-flight parameters. Never carries the master key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Announcement {
    pub icao: u32,
    pub t0: f64,
    pub root_key: Key128,
    pub chain_length: u64,
    pub slot_duration: f64,
    pub msgs_per_slot: u32,
}

impl Announcement {
    /// Start of time slot `slot`.
    pub fn slot_start(&self, slot: u64) -> f64 {
        self.t0 + slot as f64 * self.slot_duration
    }

    /// Slot containing `time`, or `None` before boot.
    pub fn slot_of(&self, time: f64) -> Option<u64> {
        crate::sender::slot_index(time, self.t0, self.slot_duration).ok()
    }

    fn to_line(self) -> String {
        format!(
            "{:06x},{},{},{},{},{}",
            self.icao,
            self.t0,
            self.root_key.to_hex(),
            self.chain_length,
            self.slot_duration,
            self.msgs_per_slot
        )
    }

    fn parse_line(line: &str, lineno: usize) -> Result<Self, RegistryError> {
        let err = |message: String| RegistryError::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", fields.len())));
        }
        let icao = u32::from_str_radix(fields[0], 16)
            .ok()
            .filter(|v| *v < 1 << 24 && fields[0].len() == 6)
            .ok_or_else(|| err(format!("bad icao `{}`", fields[0])))?;
        let t0: f64 = fields[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("bad t0 `{}`", fields[1])))?;
        let root_key =
            Key128::from_hex(fields[2]).map_err(|_| err(format!("bad K0 hex `{}`", fields[2])))?;
        let chain_length: u64 = fields[3]
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| err(format!("bad chain length `{}`", fields[3])))?;
        let slot_duration: f64 = fields[4]
            .parse()
            .ok()
            .filter(|d: &f64| d.is_finite() && *d > 0.0)
            .ok_or_else(|| err(format!("bad slot duration `{}`", fields[4])))?;
        let msgs_per_slot: u32 = fields[5]
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| err(format!("bad messages per slot `{}`", fields[5])))?;
        Ok(Announcement {
            icao,
            t0,
            root_key,
            chain_length,
            slot_duration,
            msgs_per_slot,
        })
    }
}

/// Secret material handed to the aircraft.
#[derive(Clone, PartialEq, Eq)]
pub struct Provision {
    pub icao: u32,
    pub master_key: Key128,
    pub chain_length: u64,
}

impl fmt::Debug for Provision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Provision")
            .field("icao", &format_args!("{:06x}", self.icao))
            .field("chain_length", &self.chain_length)
            .finish_non_exhaustive()
    }
}

impl Provision {
    /// `icao_hex,KM_hex,n` for the secret store.
    pub fn to_secret_line(&self) -> String {
        format!(
            "{:06x},{},{}",
            self.icao,
            self.master_key.to_hex(),
            self.chain_length
        )
    }
}

/// Issues key material and tracks which addresses are in use.
#[derive(Debug, Default)]
pub struct Authority {
    active: BTreeSet<u32>,
}

impl Authority {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeds the active set, e.g. from an existing registry.
    pub fn with_active<I: IntoIterator<Item = u32>>(icaos: I) -> Self {
        Authority {
            active: icaos.into_iter().collect(),
        }
    }

    /// Draws a fresh master key and derives the public announcement. A seed
    /// makes provisioning reproducible (test mode); `None` uses OS entropy.
    pub fn provision(
        &mut self,
        icao: u32,
        t0: f64,
        params: &ProtocolParams,
        seed: Option<u64>,
    ) -> Result<(Provision, Announcement), AuthorityError> {
        if icao >= 1 << 24 {
            return Err(AuthorityError::BadIcao(icao));
        }
        if self.active.contains(&icao) {
            return Err(AuthorityError::DuplicateIcao(icao));
        }
        let msgs_per_slot = params
            .msgs_per_slot()
            .map_err(|e| AuthorityError::Params(e.to_string()))?;
        let mut bytes = [0u8; 16];
        match seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed).fill(&mut bytes),
            None => StdRng::from_os_rng().fill(&mut bytes),
        }
        let master_key = Key128(bytes);
        let root_key = derive_root_key(&master_key, params.chain_length)?;
        self.active.insert(icao);
        Ok((
            Provision {
                icao,
                master_key,
                chain_length: params.chain_length,
            },
            Announcement {
                icao,
                t0,
                root_key,
                chain_length: params.chain_length,
                slot_duration: params.slot_duration,
                msgs_per_slot,
            },
        ))
    }

    pub fn end_flight(&mut self, icao: u32) -> bool {
        self.active.remove(&icao)
    }
}

/// Announcements keyed by icao, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    records: Vec<Announcement>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: Announcement) -> Result<(), AuthorityError> {
        if self.get(a.icao).is_some() {
            return Err(AuthorityError::DuplicateIcao(a.icao));
        }
        self.records.push(a);
        Ok(())
    }

    pub fn get(&self, icao: u32) -> Option<&Announcement> {
        self.records.iter().find(|a| a.icao == icao)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Announcement> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.records {
            out.push_str(&a.to_line());
            out.push('\n');
        }
        out
    }

    /// Parses `icao_hex,t0,K0_hex,n,d,N` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Registry::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let a = Announcement::parse_line(line, lineno)?;
            if reg.get(a.icao).is_some() {
                return Err(RegistryError::Duplicate {
                    line: lineno,
                    icao: a.icao,
                });
            }
            reg.records.push(a);
        }
        Ok(reg)
    }
}

impl FromIterator<Announcement> for Registry {
    fn from_iter<T: IntoIterator<Item = Announcement>>(iter: T) -> Self {
        let mut reg = Registry::new();
        for a in iter {
            // later duplicates are dropped
            let _ = reg.insert(a);
        }
        reg
    }
}

pub fn store_announcements(path: &Path, registry: &Registry) -> Result<(), RegistryError> {
    fs::write(path, registry.to_text())?;
    Ok(())
}

pub fn load_announcements(path: &Path) -> Result<Registry, RegistryError> {
    Registry::parse(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tesla::{derive_slot_key, verify_slot_key};

    fn params() -> ProtocolParams {
        ProtocolParams {
            chain_length: 64,
            ..ProtocolParams::default()
        }
    }

    #[test]
    fn provisioned_chain_is_consistent() {
        let mut auth = Authority::new();
        let (prov, ann) = auth.provision(0x4840d6, 100.0, &params(), Some(7)).unwrap();
        let k1 = derive_slot_key(&prov.master_key, prov.chain_length, 1).unwrap();
        assert!(verify_slot_key(&k1.key, 1, &ann.root_key));
        assert_eq!(ann.msgs_per_slot, 12);
    }

    #[test]
    fn seeds_control_key_material() {
        let (p1, a1) = Authority::new()
            .provision(1, 0.0, &params(), Some(1))
            .unwrap();
        let (p2, a2) = Authority::new()
            .provision(1, 0.0, &params(), Some(2))
            .unwrap();
        let (p3, a3) = Authority::new()
            .provision(1, 0.0, &params(), Some(1))
            .unwrap();
        assert_ne!(p1.master_key, p2.master_key);
        assert_ne!(a1.root_key, a2.root_key);
        assert_eq!(p1, p3);
        assert_eq!(a1, a3);
    }

    #[test]
    fn duplicate_active_icao_rejected() {
        let mut auth = Authority::new();
        auth.provision(5, 0.0, &params(), None).unwrap();
        assert!(matches!(
            auth.provision(5, 0.0, &params(), None),
            Err(AuthorityError::DuplicateIcao(5))
        ));
        assert!(auth.end_flight(5));
        auth.provision(5, 0.0, &params(), None).unwrap();
    }

    #[test]
    fn registry_round_trip_through_file() {
        let mut auth = Authority::new();
        let reg: Registry = (0..3)
            .map(|i| {
                auth.provision(0xa0 + i, 12.5 * i as f64, &params(), Some(i.into()))
                    .unwrap()
                    .1
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.csv");
        store_announcements(&path, &reg).unwrap();
        assert_eq!(load_announcements(&path).unwrap(), reg);
    }

    #[test]
    fn empty_registry() {
        assert!(Registry::parse("").unwrap().is_empty());
    }

    #[test]
    fn corrupt_root_key_names_line() {
        let text = "0000a0,0,00000000000000000000000000000001,64,2,12\n\
                    0000a1,0,zz000000000000000000000000000001,64,2,12\n";
        match Registry::parse(text) {
            Err(RegistryError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("K0"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn master_key_never_in_announcement_text() {
        let mut auth = Authority::new();
        let (prov, ann) = auth.provision(0xabcdef, 0.0, &params(), Some(3)).unwrap();
        let text = Registry::from_iter([ann]).to_text();
        assert!(!text.contains(&prov.master_key.to_hex()));
        assert!(!format!("{prov:?}").contains(&prov.master_key.to_hex()));
    }
}
