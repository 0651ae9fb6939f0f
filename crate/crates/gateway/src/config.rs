//! Service configuration, read from a TOML file.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! journal = "credito.journal"
//! claim_validation = true
//! reward_rate = 0.0
//!
//! [policy]
//! max_credit_per_property = 10000000   # cents
//! max_properties_per_customer = 2
//!
//! [agents]
//! cadence_ms = 250
//! alpha = 0.3
//! period_length = 10
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use credito_core::agents::forecast::{SmoothingFactor, DEFAULT_ALPHA};
use credito_core::rules::ClaimPolicy;
use credito_core::{EngineSettings, Money, Ratio};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid listen address {0:?}")]
    Listen(String),
    #[error("smoothing factor alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("reward_rate must be a finite non-negative number, got {0}")]
    RewardRate(f64),
    #[error("claim caps must be positive")]
    Policy,
    #[error("{0} must be positive")]
    Zero(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub max_credit_per_property: u64,
    pub max_properties_per_customer: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        let p = ClaimPolicy::default();
        PolicyConfig {
            max_credit_per_property: p.max_credit_per_property.cents(),
            max_properties_per_customer: p.max_properties_per_customer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Interval between background agent ticks.
    pub cadence_ms: u64,
    pub alpha: f64,
    /// Logical-time units per forecast period.
    pub period_length: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { cadence_ms: 250, alpha: DEFAULT_ALPHA, period_length: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Journal file; `None` keeps the journal in memory.
    pub journal: Option<PathBuf>,
    pub claim_validation: bool,
    /// Fraction paid on principal at fund close, e.g. `0.1`.
    pub reward_rate: f64,
    pub policy: PolicyConfig,
    pub agents: AgentConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            journal: None,
            claim_validation: true,
            reward_rate: 0.0,
            policy: PolicyConfig::default(),
            agents: AgentConfig::default(),
        }
    }
}

/// A configuration that passed every startup check.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub listen: SocketAddr,
    pub journal: Option<PathBuf>,
    pub engine: EngineSettings,
    pub reward_rate: Ratio,
    pub cadence_ms: u64,
    pub alpha: f64,
    pub period_length: u64,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let listen = self.listen.parse().map_err(|_| ConfigError::Listen(self.listen.clone()))?;
        SmoothingFactor::new(self.agents.alpha).map_err(|_| ConfigError::Alpha(self.agents.alpha))?;
        let reward_rate = Ratio::from_f64(self.reward_rate).ok_or(ConfigError::RewardRate(self.reward_rate))?;
        let policy = ClaimPolicy::new(
            Money::from_cents(self.policy.max_credit_per_property),
            self.policy.max_properties_per_customer,
        )
        .ok_or(ConfigError::Policy)?;
        if self.agents.cadence_ms == 0 {
            return Err(ConfigError::Zero("agents.cadence_ms"));
        }
        if self.agents.period_length == 0 {
            return Err(ConfigError::Zero("agents.period_length"));
        }
        Ok(Validated {
            listen,
            journal: self.journal.clone(),
            engine: EngineSettings { policy, claim_validation: self.claim_validation },
            reward_rate,
            cadence_ms: self.agents.cadence_ms,
            alpha: self.agents.alpha,
            period_length: self.agents.period_length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = ServiceConfig::from_toml("").unwrap();
        assert_eq!(c, ServiceConfig::default());
        let v = c.validate().unwrap();
        assert_eq!(v.engine, EngineSettings::default());
        assert_eq!(v.reward_rate, Ratio::ZERO);
    }

    #[test]
    fn full_file() {
        let c = ServiceConfig::from_toml(
            r#"
            listen = "0.0.0.0:9000"
            journal = "/tmp/x.journal"
            claim_validation = false
            reward_rate = 0.1
            [policy]
            max_credit_per_property = 500
            max_properties_per_customer = 3
            [agents]
            cadence_ms = 10
            alpha = 0.5
            period_length = 7
            "#,
        )
        .unwrap();
        let v = c.validate().unwrap();
        assert_eq!(v.listen.port(), 9000);
        assert!(!v.engine.claim_validation);
        assert_eq!(v.engine.policy.max_credit_per_property, Money::from_cents(500));
        assert_eq!(v.reward_rate, Ratio::from_ppm(100_000));
        assert_eq!(v.period_length, 7);
    }

    #[test]
    fn example_file_parses() {
        let c = ServiceConfig::from_toml(include_str!("../example.toml")).unwrap();
        let v = c.validate().unwrap();
        assert_eq!(v.engine, EngineSettings::default());
        assert_eq!(c.journal.as_deref(), Some(Path::new("credito.journal")));
    }

    #[test]
    fn rejects_bad_values() {
        for (text, want) in [
            ("[agents]\nalpha = 0.0", "alpha"),
            ("[agents]\nalpha = 1.5", "alpha"),
            ("reward_rate = -0.1", "reward_rate"),
            ("listen = \"nowhere\"", "listen"),
            ("[policy]\nmax_properties_per_customer = 0", "caps"),
            ("[agents]\ncadence_ms = 0", "cadence"),
        ] {
            let err = ServiceConfig::from_toml(text).unwrap().validate().unwrap_err();
            assert!(err.to_string().contains(want), "{text}: {err}");
        }
        assert!(matches!(ServiceConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
    }
}
