//! Scenario configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! duration = 200.0      # seconds of traffic, whole slots only
//!
//! [protocol]
//! slot_duration = 1.0
//! data_rate = 6.0
//!
//! [[aircraft]]
//! icao = "4840d6"
//!
//! [antennas]
//! count = 10
//! loss = 0.0
//!
//! [adversary]
//! enabled = true
//! rate = 6.0
//! coverage = 2          # antennas 0 and 1; or a list, or a fraction
//! strategy = "ghost"
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::is_security_type;
use crate::sender::ProtocolParams;
use crate::tesla::DEFAULT_CHAIN_LENGTH;
use crate::verifier::{
    RecoveryLimits, VerifierConfig, DEFAULT_KEY_WAIT_SLOTS, DEFAULT_MAX_SUBSETS,
};

/// Transmission cap an injecting adversary stays under to remain stealthy.
pub const MAX_ADVERSARY_RATE: f64 = 6.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration: f64,
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    pub aircraft: Vec<AircraftConfig>,
    pub antennas: AntennaConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub slot_duration: f64,
    pub data_rate: f64,
    pub chain_length: u64,
    pub max_subsets: u64,
    pub majority_filter: bool,
    /// Sub-slots per slot for majority voting; defaults to one per second.
    pub subslots: Option<u32>,
    /// Slots to wait for a later key when a slot's own key was lost.
    pub key_wait_slots: u32,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            slot_duration: 2.0,
            data_rate: 6.0,
            chain_length: DEFAULT_CHAIN_LENGTH,
            max_subsets: DEFAULT_MAX_SUBSETS as u64,
            majority_filter: true,
            subslots: None,
            key_wait_slots: DEFAULT_KEY_WAIT_SLOTS,
        }
    }
}

/// Straight-line flight in raw encoded units: each position report advances
/// latitude and longitude by a fixed step (mod 2^17).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftConfig {
    pub icao: String,
    #[serde(default = "default_type_code")]
    pub type_code: u8,
    #[serde(default = "default_altitude")]
    pub altitude: u16,
    #[serde(default)]
    pub latitude: u32,
    #[serde(default)]
    pub longitude: u32,
    #[serde(default = "default_lat_step")]
    pub lat_step: u32,
    #[serde(default = "default_lon_step")]
    pub lon_step: u32,
}

fn default_type_code() -> u8 {
    11
}
fn default_altitude() -> u16 {
    0xC38
}
fn default_lat_step() -> u32 {
    7
}
fn default_lon_step() -> u32 {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaConfig {
    pub count: u16,
    /// Per-frame loss probability (in the good state when bursts are on).
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub burst: Option<BurstConfig>,
}

/// Two-state loss model: every frame is lost while in the burst state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstConfig {
    pub enter: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Divergent trajectory under the target's address.
    Ghost,
    /// Random position payloads under the target's address.
    Flood,
    /// Full coverage plus forged digest chunks: aims to force rejection.
    EqualCoverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coverage {
    Count(u16),
    Fraction(f64),
    Antennas(Vec<u16>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    pub enabled: bool,
    pub rate: f64,
    pub coverage: Option<Coverage>,
    pub strategy: Strategy,
    /// Spoofed address; defaults to the first aircraft.
    pub target: Option<String>,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            enabled: false,
            rate: MAX_ADVERSARY_RATE,
            coverage: None,
            strategy: Strategy::Ghost,
            target: None,
        }
    }
}

fn parse_icao(field: &'static str, s: &str) -> Result<u32, ConfigError> {
    match u32::from_str_radix(s, 16) {
        Ok(v) if s.len() <= 6 && v < 1 << 24 => Ok(v),
        _ => Err(invalid(field, format!("`{s}` is not a 24-bit hex address"))),
    }
}

fn probability(field: &'static str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("{p} is not a probability")))
    }
}

/// Checked form of a scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: ProtocolParams,
    pub msgs_per_slot: u32,
    pub slots: u64,
    pub icaos: Vec<u32>,
    pub adversary: Option<AdversaryPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryPlan {
    pub target: u32,
    pub rate: f64,
    pub strategy: Strategy,
    pub coverage: Vec<u16>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn verifier_config(&self) -> VerifierConfig {
        VerifierConfig {
            subslots: self.protocol.subslots,
            majority_filter: self.protocol.majority_filter,
            limits: RecoveryLimits {
                max_subsets: u128::from(self.protocol.max_subsets),
            },
            key_wait_slots: self.protocol.key_wait_slots,
            ..VerifierConfig::default()
        }
    }

    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        let p = &self.protocol;
        let params = ProtocolParams {
            slot_duration: p.slot_duration,
            data_rate: p.data_rate,
            chain_length: p.chain_length,
        };
        let msgs_per_slot = params
            .msgs_per_slot()
            .map_err(|e| invalid("protocol", e.to_string()))?;
        if !self.t0.is_finite() || self.t0 < 0.0 {
            return Err(invalid("t0", "must be a non-negative number"));
        }
        if !(self.duration.is_finite() && self.duration >= p.slot_duration) {
            return Err(invalid("duration", "must cover at least one slot"));
        }
        let slots = (self.duration / p.slot_duration + 1e-9).floor() as u64;
        if p.chain_length < slots + 1 {
            return Err(invalid(
                "protocol.chain_length",
                format!("{} keys cannot cover {slots} slots", p.chain_length),
            ));
        }
        if p.max_subsets == 0 {
            return Err(invalid("protocol.max_subsets", "must be at least 1"));
        }
        if p.subslots == Some(0) {
            return Err(invalid("protocol.subslots", "must be at least 1"));
        }

        if self.aircraft.is_empty() {
            return Err(invalid("aircraft", "at least one aircraft is required"));
        }
        let mut icaos = Vec::new();
        let mut seen = BTreeSet::new();
        for a in &self.aircraft {
            let icao = parse_icao("aircraft.icao", &a.icao)?;
            if !seen.insert(icao) {
                return Err(invalid(
                    "aircraft.icao",
                    format!("duplicate address {}", a.icao),
                ));
            }
            if !(1..=31).contains(&a.type_code) || is_security_type(a.type_code) {
                return Err(invalid(
                    "aircraft.type_code",
                    format!("{} is not a usable position type code", a.type_code),
                ));
            }
            if a.altitude >= 1 << 12 {
                return Err(invalid("aircraft.altitude", "exceeds 12 bits"));
            }
            if a.latitude >= 1 << 17 || a.longitude >= 1 << 17 {
                return Err(invalid("aircraft.latitude", "coordinates exceed 17 bits"));
            }
            // identical reports within a slot would be merged by the server
            if a.lat_step % (1 << 17) == 0 && a.lon_step % (1 << 17) == 0 {
                return Err(invalid("aircraft.lat_step", "aircraft must move"));
            }
            icaos.push(icao);
        }

        let ant = &self.antennas;
        if ant.count == 0 {
            return Err(invalid(
                "antennas.count",
                "at least one antenna is required",
            ));
        }
        probability("antennas.loss", ant.loss)?;
        if let Some(b) = ant.burst {
            probability("antennas.burst.enter", b.enter)?;
            probability("antennas.burst.exit", b.exit)?;
        }

        let adversary = if self.adversary.enabled {
            Some(self.adversary_plan(&icaos)?)
        } else {
            None
        };

        Ok(Scenario {
            config: self.clone(),
            params,
            msgs_per_slot,
            slots,
            icaos,
            adversary,
        })
    }

    fn adversary_plan(&self, icaos: &[u32]) -> Result<AdversaryPlan, ConfigError> {
        let adv = &self.adversary;
        if !(adv.rate > 0.0 && adv.rate <= MAX_ADVERSARY_RATE) {
            return Err(invalid(
                "adversary.rate",
                format!("{} is outside (0, {MAX_ADVERSARY_RATE}] msgs/s", adv.rate),
            ));
        }
        let target = match &adv.target {
            Some(t) => parse_icao("adversary.target", t)?,
            None => icaos[0],
        };
        if !icaos.contains(&target) {
            return Err(invalid(
                "adversary.target",
                "not one of the configured aircraft",
            ));
        }
        let count = self.antennas.count;
        let all: Vec<u16> = (0..count).collect();
        let coverage = match (&adv.coverage, adv.strategy) {
            (None, Strategy::EqualCoverage) => all.clone(),
            (None, _) => return Err(invalid("adversary.coverage", "required for this strategy")),
            (Some(Coverage::Count(c)), _) => {
                if *c > count {
                    return Err(invalid("adversary.coverage", "more antennas than exist"));
                }
                (0..*c).collect()
            }
            (Some(Coverage::Fraction(f)), _) => {
                probability("adversary.coverage", *f)?;
                (0..(f * f64::from(count)).floor() as u16).collect()
            }
            (Some(Coverage::Antennas(list)), _) => {
                let set: BTreeSet<u16> = list.iter().copied().collect();
                if set.iter().any(|&a| a >= count) {
                    return Err(invalid("adversary.coverage", "antenna id out of range"));
                }
                set.into_iter().collect()
            }
        };
        if coverage.is_empty() {
            return Err(invalid("adversary.coverage", "covers no antenna"));
        }
        if adv.strategy == Strategy::EqualCoverage {
            if coverage != all {
                return Err(invalid(
                    "adversary.coverage",
                    "equal-coverage must cover every antenna",
                ));
            }
            if adv.rate * self.protocol.slot_duration < 3.0 {
                return Err(invalid(
                    "adversary.rate",
                    "equal-coverage needs room for three forged digest chunks per slot",
                ));
            }
        }
        Ok(AdversaryPlan {
            target,
            rate: adv.rate,
            strategy: adv.strategy,
            coverage,
        })
    }
}
