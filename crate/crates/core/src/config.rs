//! INI-style cluster configuration files.
//!
//! ```text
//! [cluster]
//! mode = independent
//! pool = 8
//!
//! [tier.fe]
//! bandwidth_bps = 100000000
//! latency_us = 100
//! max_reliable_bytes = 33554432
//!
//! [tier.ge]
//! bandwidth_bps = 1000000000
//! latency_us = 50
//! max_reliable_bytes = 1073741824
//!
//! [channels]
//! service = fe
//! io = ge
//! ```
//!
//! Every section and key shown is required. Unknown sections or keys,
//! repeated keys and repeated sections are errors. `#` and `;` start comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::topology::{ClusterConfig, Mode, NetworkTier, TierName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate section [{name}]")]
    DuplicateSection { line: usize, name: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("missing key `{key}` in [{section}]")]
    MissingKey { section: String, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {message}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
    #[error("worker pool must contain at least one node")]
    ZeroPool,
    #[error("invalid {tier} tier: {reason}")]
    InvalidTier { tier: TierName, reason: String },
    #[error("tier ordering: {0}")]
    TierOrdering(String),
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("cluster", &["mode", "pool"]),
    (
        "tier.fe",
        &["bandwidth_bps", "latency_us", "max_reliable_bytes"],
    ),
    (
        "tier.ge",
        &["bandwidth_bps", "latency_us", "max_reliable_bytes"],
    ),
    ("channels", &["service", "io"]),
];

struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<&'static str, BTreeMap<&'static str, Entry>>;

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<(&'static str, &'static [&'static str])> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or_default().trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            let Some(&(known, keys)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
                return Err(ConfigError::UnknownSection {
                    line,
                    name: name.to_string(),
                });
            };
            if sections.insert(known, BTreeMap::new()).is_some() {
                return Err(ConfigError::DuplicateSection {
                    line,
                    name: known.to_string(),
                });
            }
            current = Some((known, keys));
            continue;
        }

        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let Some((section, keys)) = current else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` outside of any section"),
            });
        };
        let Some(&known_key) = keys.iter().find(|k| **k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                section: section.to_string(),
                key: key.to_string(),
            });
        };
        let entries = sections.entry(section).or_default();
        if entries.contains_key(known_key) {
            return Err(ConfigError::DuplicateKey {
                line,
                section: section.to_string(),
                key: key.to_string(),
            });
        }
        entries.insert(
            known_key,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(sections)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Result<&Entry, ConfigError> {
        let entries = self
            .sections
            .get(section)
            .ok_or_else(|| ConfigError::MissingSection(section.to_string()))?;
        entries.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    fn parse<T>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        let entry = self.get(section, key)?;
        entry
            .value
            .parse::<T>()
            .map_err(|e| ConfigError::InvalidValue {
                line: entry.line,
                key: key.to_string(),
                value: entry.value.clone(),
                message: e.to_string(),
            })
    }

    fn tier(&self, name: TierName) -> Result<NetworkTier, ConfigError> {
        let section = match name {
            TierName::Fe => "tier.fe",
            TierName::Ge => "tier.ge",
        };
        Ok(NetworkTier {
            name,
            bandwidth_bps: self.parse(section, "bandwidth_bps")?,
            latency_us: self.parse(section, "latency_us")?,
            max_reliable_bytes: self.parse(section, "max_reliable_bytes")?,
        })
    }
}

impl ClusterConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = tokenize(text)?;
        let r = Reader {
            sections: &sections,
        };
        let config = ClusterConfig {
            mode: r.parse::<Mode>("cluster", "mode")?,
            worker_pool_size: r.parse("cluster", "pool")?,
            fe: r.tier(TierName::Fe)?,
            ge: r.tier(TierName::Ge)?,
            service_tier: r.parse("channels", "service")?,
            io_tier: r.parse("channels", "io")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Renders the configuration in the file format accepted by [`ClusterConfig::parse`].
    pub fn to_ini(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ClusterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[cluster]")?;
        writeln!(f, "mode = {}", self.mode)?;
        writeln!(f, "pool = {}", self.worker_pool_size)?;
        for tier in [&self.fe, &self.ge] {
            writeln!(f)?;
            writeln!(f, "[tier.{}]", tier.name.as_str().to_ascii_lowercase())?;
            writeln!(f, "bandwidth_bps = {}", tier.bandwidth_bps)?;
            writeln!(f, "latency_us = {}", tier.latency_us)?;
            writeln!(f, "max_reliable_bytes = {}", tier.max_reliable_bytes)?;
        }
        writeln!(f)?;
        writeln!(f, "[channels]")?;
        writeln!(
            f,
            "service = {}",
            self.service_tier.as_str().to_ascii_lowercase()
        )?;
        writeln!(f, "io = {}", self.io_tier.as_str().to_ascii_lowercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# default layout
[cluster]
mode = independent
pool = 8

[tier.fe]
bandwidth_bps = 100000000
latency_us = 100
max_reliable_bytes = 33554432

[tier.ge]
bandwidth_bps = 1000000000
latency_us = 50   ; per hop
max_reliable_bytes = 1073741824

[channels]
service = fe
io = ge
";

    #[test]
    fn parses_default_layout() {
        assert_eq!(
            ClusterConfig::parse(SAMPLE).unwrap(),
            ClusterConfig::default()
        );
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = ClusterConfig {
            mode: Mode::Conventional,
            io_tier: TierName::Fe,
            ..ClusterConfig::default()
        };
        cfg.fe.latency_us = 87.5;
        assert_eq!(ClusterConfig::parse(&cfg.to_ini()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_error() {
        let text = SAMPLE.replace("pool = 8", "pool = 8\ncolor = blue");
        assert!(matches!(
            ClusterConfig::parse(&text),
            Err(ConfigError::UnknownKey { key, .. }) if key == "color"
        ));
    }

    #[test]
    fn unknown_section_is_error() {
        let text = format!("{SAMPLE}\n[tier.ib]\n");
        assert!(matches!(
            ClusterConfig::parse(&text),
            Err(ConfigError::UnknownSection { .. })
        ));
    }

    #[test]
    fn duplicate_channel_assignment_is_error() {
        let text = SAMPLE.replace("io = ge", "io = ge\nio = fe");
        assert!(matches!(
            ClusterConfig::parse(&text),
            Err(ConfigError::DuplicateKey { key, .. }) if key == "io"
        ));
    }

    #[test]
    fn missing_tier_is_error() {
        let start = SAMPLE.find("[tier.ge]").unwrap();
        let end = SAMPLE.find("[channels]").unwrap();
        let text = format!("{}{}", &SAMPLE[..start], &SAMPLE[end..]);
        assert_eq!(
            ClusterConfig::parse(&text),
            Err(ConfigError::MissingSection("tier.ge".into()))
        );
    }

    #[test]
    fn zero_pool_is_error() {
        let text = SAMPLE.replace("pool = 8", "pool = 0");
        assert_eq!(ClusterConfig::parse(&text), Err(ConfigError::ZeroPool));
    }

    #[test]
    fn bad_values_report_line() {
        let text = SAMPLE.replace("mode = independent", "mode = hybrid");
        assert!(matches!(
            ClusterConfig::parse(&text),
            Err(ConfigError::InvalidValue { line: 3, .. })
        ));
        let text = SAMPLE.replace("pool = 8", "pool = -1");
        assert!(matches!(
            ClusterConfig::parse(&text),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn key_outside_section() {
        assert!(matches!(
            ClusterConfig::parse("pool = 3\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }
}
