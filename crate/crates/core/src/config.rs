//! Tool configuration, read from a TOML file given by `--config` or the
//! `ELBOOT_CONFIG` environment variable. Every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_ENV: &str = "ELBOOT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub journal_dir: PathBuf,
    pub ingest: IngestConfig,
    pub generator: GeneratorConfig,
    pub search: SearchConfig,
    pub resolver: ResolverConfig,
    pub review: ReviewConfig,
    pub stats: StatsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            journal_dir: PathBuf::from("elboot-data"),
            ingest: IngestConfig::default(),
            generator: GeneratorConfig::default(),
            search: SearchConfig::default(),
            resolver: ResolverConfig::default(),
            review: ReviewConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub window_chars: usize,
    pub doc_marker: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            window_chars: crate::corpus::DEFAULT_CONTEXT_WINDOW,
            doc_marker: crate::corpus::DEFAULT_DOC_MARKER.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub max_candidates: usize,
    pub timeout_secs: u64,
    pub fan_out: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_candidates: crate::candidate::DEFAULT_MAX_CANDIDATES,
            timeout_secs: crate::candidate::DEFAULT_TIMEOUT.as_secs(),
            fan_out: crate::candidate::DEFAULT_FAN_OUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub hosts: Vec<String>,
    pub limit: usize,
    pub rate_per_sec: f64,
    pub cache_ttl_secs: u64,
    /// Relative paths are resolved against `journal_dir`.
    pub cache_dir: PathBuf,
    /// Candidates in these languages are presented first.
    pub preferred_languages: Vec<String>,
    pub user_agent: String,
    pub request_timeout_secs: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            hosts: crate::wapis::DEFAULT_HOSTS
                .iter()
                .map(|h| h.to_string())
                .collect(),
            limit: crate::wapis::DEFAULT_LIMIT,
            rate_per_sec: crate::net::DEFAULT_RATE,
            cache_ttl_secs: crate::net::DEFAULT_TTL.as_secs(),
            cache_dir: PathBuf::from("cache/search"),
            preferred_languages: vec!["is".to_string()],
            user_agent: concat!("elboot/", env!("CARGO_PKG_VERSION")).to_string(),
            request_timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolverConfig {
    pub host_template: String,
    pub cache_dir: PathBuf,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        ResolverConfig {
            host_template: crate::resolver::DEFAULT_HOST_TEMPLATE.to_string(),
            cache_dir: PathBuf::from("cache/resolve"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviewConfig {
    pub addr: String,
    pub lease_ttl_secs: u64,
    /// Shared bearer token; no check when absent.
    pub auth_token: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub snapshot_every: usize,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            addr: "127.0.0.1:8080".to_string(),
            lease_ttl_secs: crate::review::DEFAULT_LEASE_TTL.as_secs(),
            auth_token: None,
            static_dir: None,
            snapshot_every: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub min_count: usize,
    pub skew_subcategories: Vec<String>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            min_count: crate::stats::DEFAULT_MIN_COUNT,
            skew_subcategories: vec!["adjudications".to_string()],
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads `path`, else `$ELBOOT_CONFIG`, else returns defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = path
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        match path {
            None => Ok(Config::default()),
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                Config::from_toml(&text, &path)
            }
        }
    }

    pub fn search_cache_dir(&self) -> PathBuf {
        self.journal_dir.join(&self.search.cache_dir)
    }

    pub fn resolver_cache_dir(&self) -> PathBuf {
        self.journal_dir.join(&self.resolver.cache_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.search.hosts, ["is.wikipedia.org", "en.wikipedia.org"]);
        assert_eq!(c.search.limit, 10);
        assert_eq!(c.search.cache_ttl_secs, 7 * 24 * 3600);
        assert_eq!(c.review.lease_ttl_secs, 600);
        assert_eq!(c.ingest.window_chars, 256);
        assert_eq!(c.generator.timeout_secs, 30);
        assert_eq!(c.generator.fan_out, 4);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let text = r#"
journal_dir = "/tmp/x"
[search]
hosts = ["fo.wikipedia.org", "da.wikipedia.org"]
[review]
auth_token = "s3cret"
"#;
        let c = Config::from_toml(text, Path::new("c.toml")).unwrap();
        assert_eq!(c.search.hosts[0], "fo.wikipedia.org");
        assert_eq!(c.search.limit, 10);
        assert_eq!(c.review.auth_token.as_deref(), Some("s3cret"));
        assert_eq!(c.search_cache_dir(), PathBuf::from("/tmp/x/cache/search"));
    }

    #[test]
    fn bad_toml() {
        assert!(matches!(
            Config::from_toml("journal_dir = [", Path::new("c.toml")),
            Err(ConfigError::Parse { .. })
        ));
    }
}
