//! Per-antenna loss channels.

use rand::Rng;

use super::config::{BurstConfig, ConfigError};

/// One Bernoulli draw: `true` if the frame gets through at loss `p`.
pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<bool, ConfigError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ConfigError::Invalid {
            field: "loss",
            message: format!("{p} is not a probability"),
        });
    }
    Ok(!rng.random_bool(p))
}

/// Two-state loss chain. The state moves once per frame, then the frame is
/// lost with `p` in the gap state or always in the burst state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstChannel {
    pub p: f64,
    pub enter: f64,
    pub exit: f64,
    in_burst: bool,
}

impl BurstChannel {
    pub fn new(p: f64, burst: BurstConfig) -> Result<Self, ConfigError> {
        for (field, v) in [
            ("loss", p),
            ("burst.enter", burst.enter),
            ("burst.exit", burst.exit),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid {
                    field,
                    message: format!("{v} is not a probability"),
                });
            }
        }
        Ok(BurstChannel {
            p,
            enter: burst.enter,
            exit: burst.exit,
            in_burst: false,
        })
    }

    pub fn in_burst(&self) -> bool {
        self.in_burst
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let flip = if self.in_burst { self.exit } else { self.enter };
        if rng.random_bool(flip) {
            self.in_burst = !self.in_burst;
        }
        !self.in_burst && !rng.random_bool(self.p)
    }
}

/// Loss process for one antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Bernoulli(f64),
    Burst(BurstChannel),
}

impl Channel {
    pub fn new(p: f64, burst: Option<BurstConfig>) -> Result<Self, ConfigError> {
        match burst {
            Some(b) => Ok(Channel::Burst(BurstChannel::new(p, b)?)),
            None => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ConfigError::Invalid {
                        field: "loss",
                        message: format!("{p} is not a probability"),
                    });
                }
                Ok(Channel::Bernoulli(p))
            }
        }
    }

    pub fn deliver<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        match self {
            Channel::Bernoulli(p) => !rng.random_bool(*p),
            Channel::Burst(b) => b.sample(rng),
        }
    }
}
