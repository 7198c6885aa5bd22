//! Command-line surface and configuration layering.
//!
//! Every setting can come from a flag, a `SENTINEL_*` environment variable,
//! or a TOML config file. Precedence is flag > env > file > default; clap
//! resolves the first two and [`Settings::resolve`] the rest.

use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sentinel_core::adapters::Backend;
use sentinel_core::api::DEFAULT_PORT;
use sentinel_core::dedupe::{DedupeConfig, DEFAULT_THRESHOLD};
use sentinel_core::pipeline::{PipelineConfig, DEFAULT_PARALLELISM};
use sentinel_core::source::{SourceConfig, SourceMode};
use sentinel_core::Tool;

#[derive(Debug, Parser)]
#[command(name = "sentinel", version, about = "Aggregate Kubernetes misconfiguration findings from several scanners")]
pub struct Cli {
    /// TOML file supplying defaults for any flag (keys use underscores).
    #[arg(long, env = "SENTINEL_CONFIG", global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// error, warn, info, debug or trace.
    #[arg(long, env = "SENTINEL_LOG_LEVEL", global = true, value_name = "LEVEL")]
    pub log_level: Option<String>,

    /// Print the resolved configuration as JSON and exit.
    #[arg(long, env = "SENTINEL_PRINT_CONFIG", global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scan cycle, or loop with --interval.
    Scan(ScanArgs),
    /// Serve the JSON API (and optionally run the pipeline alongside).
    Serve(ServeArgs),
    /// Check for or install scanner binaries.
    Tools(ToolsArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Scan *.yaml / *.yml files in this directory instead of a cluster.
    #[arg(long, env = "SENTINEL_MANIFEST_DIR", value_name = "DIR")]
    pub manifest_dir: Option<PathBuf>,

    /// kubeconfig for cluster mode (default: kubectl's own resolution).
    #[arg(long, env = "SENTINEL_KUBECONFIG", value_name = "PATH")]
    pub kubeconfig: Option<PathBuf>,

    /// kubectl binary used in cluster mode.
    #[arg(long, env = "SENTINEL_KUBECTL", value_name = "PATH")]
    pub kubectl: Option<PathBuf>,

    /// Only scan these namespaces (comma separated or repeated).
    #[arg(long, env = "SENTINEL_NAMESPACE", value_delimiter = ',', value_name = "NS")]
    pub namespace: Vec<String>,

    /// Scanners to run: trivy, kubesec, kube-score, kube-linter, fixture.
    #[arg(long, env = "SENTINEL_TOOLS", value_delimiter = ',', value_name = "TOOLS")]
    pub tools: Vec<Tool>,

    /// Read canned `<pod>-<tool>.json` scanner output from this directory.
    #[arg(long, env = "SENTINEL_FIXTURE_DIR", value_name = "DIR")]
    pub fixture_dir: Option<PathBuf>,

    /// Similarity at or above which a kubesec finding duplicates a Trivy one [default: 0.65].
    #[arg(long, env = "SENTINEL_DEDUPE_THRESHOLD", value_name = "RATIO")]
    pub dedupe_threshold: Option<f64>,

    /// Root of the output tree [default: output].
    #[arg(long, env = "SENTINEL_OUT_DIR", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Seconds between cycle starts; omit for a single cycle.
    #[arg(long, env = "SENTINEL_INTERVAL", value_name = "SECONDS")]
    pub interval: Option<f64>,

    /// Concurrent scanner invocations [default: 4].
    #[arg(long, env = "SENTINEL_PARALLELISM", value_name = "N")]
    pub parallelism: Option<usize>,

    /// Per-invocation scanner timeout in seconds [default: 120].
    #[arg(long, env = "SENTINEL_TIMEOUT", value_name = "SECONDS")]
    pub timeout: Option<f64>,

    /// Directory searched for scanner binaries before PATH [default: bin].
    #[arg(long, env = "SENTINEL_BIN_DIR", value_name = "DIR")]
    pub bin_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StoreArgs {
    /// On-disk store directory [default: store].
    #[arg(long, env = "SENTINEL_STORE_PATH", value_name = "DIR")]
    pub store_path: Option<PathBuf>,

    /// MongoDB connection URI (requires the `mongo` build feature).
    #[arg(long, env = "SENTINEL_DB_URI", value_name = "URI")]
    pub db_uri: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub store: StoreArgs,
    /// Emit cycle metrics as JSON instead of tables.
    #[arg(long, env = "SENTINEL_METRICS_JSON")]
    pub metrics_json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub store: StoreArgs,
    /// Listen port; 0 picks a free one [default: 5002].
    #[arg(long, env = "SENTINEL_PORT", value_name = "PORT")]
    pub port: Option<u16>,
    /// Listen address [default: 0.0.0.0].
    #[arg(long, env = "SENTINEL_BIND", value_name = "ADDR")]
    pub bind: Option<IpAddr>,
    /// Serve static dashboard files from this directory.
    #[arg(long, env = "SENTINEL_STATIC_DIR", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Also run scan cycles in this process (every --interval seconds).
    #[arg(long, env = "SENTINEL_WITH_PIPELINE")]
    pub with_pipeline: bool,
    /// Emit cycle metrics as JSON instead of tables.
    #[arg(long, env = "SENTINEL_METRICS_JSON")]
    pub metrics_json: bool,
}

#[derive(Debug, Args)]
pub struct ToolsArgs {
    #[command(subcommand)]
    pub command: ToolsCommand,
}

#[derive(Debug, Subcommand)]
pub enum ToolsCommand {
    /// Report which scanners resolve, and where.
    Check {
        /// Directory searched before PATH [default: bin].
        #[arg(long, env = "SENTINEL_BIN_DIR", value_name = "DIR")]
        bin_dir: Option<PathBuf>,
    },
    /// Download the latest release of the named scanners.
    Install {
        /// trivy, kubesec, kube-score or kube-linter.
        #[arg(required = true)]
        names: Vec<String>,
        /// Install into this directory [default: bin].
        #[arg(long, env = "SENTINEL_BIN_DIR", value_name = "DIR")]
        bin_dir: Option<PathBuf>,
        /// Fetch releases from this host instead of github.com.
        #[arg(long, env = "SENTINEL_STUB_HOST", value_name = "URL")]
        stub_host: Option<String>,
    },
}

/// Config file contents. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest_dir: Option<PathBuf>,
    pub kubeconfig: Option<PathBuf>,
    pub kubectl: Option<PathBuf>,
    pub namespace: Option<Vec<String>>,
    pub tools: Option<Vec<String>>,
    pub fixture_dir: Option<PathBuf>,
    pub dedupe_threshold: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub interval: Option<f64>,
    pub parallelism: Option<usize>,
    pub timeout: Option<f64>,
    pub bin_dir: Option<PathBuf>,
    pub store_path: Option<PathBuf>,
    pub db_uri: Option<String>,
    pub port: Option<u16>,
    pub bind: Option<IpAddr>,
    pub static_dir: Option<PathBuf>,
    pub with_pipeline: Option<bool>,
    pub metrics_json: Option<bool>,
    pub log_level: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config file {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config file {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Where findings are persisted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreSelection {
    Path(PathBuf),
    Uri(String),
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub manifest_dir: Option<PathBuf>,
    pub kubeconfig: Option<PathBuf>,
    pub kubectl: PathBuf,
    pub namespace: Vec<String>,
    pub tools: Vec<Tool>,
    pub fixture_dir: Option<PathBuf>,
    pub dedupe_threshold: f64,
    pub out_dir: PathBuf,
    pub interval: Option<f64>,
    pub parallelism: usize,
    pub timeout: f64,
    pub bin_dir: PathBuf,
    pub store: StoreSelection,
    pub port: u16,
    pub bind: IpAddr,
    pub static_dir: Option<PathBuf>,
    pub with_pipeline: bool,
    pub metrics_json: bool,
    pub log_level: String,
}

const LOG_LEVELS: [&str; 5] = ["error", "warn", "info", "debug", "trace"];

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl Settings {
    /// Layer flags/env over the config file over defaults, then validate.
    pub fn resolve(
        pipeline: &PipelineArgs,
        store: &StoreArgs,
        serve: Option<&ServeArgs>,
        metrics_json: bool,
        log_level: Option<&str>,
        file: &FileConfig,
    ) -> Result<Settings, ConfigError> {
        let non_empty = |v: &Vec<String>| (!v.is_empty()).then(|| v.clone());
        let tools = if pipeline.tools.is_empty() {
            match &file.tools {
                Some(names) => names
                    .iter()
                    .map(|n| n.parse::<Tool>().map_err(|e| invalid(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?,
                None => Tool::SCANNERS.to_vec(),
            }
        } else {
            pipeline.tools.clone()
        };

        let store_path = store.store_path.clone().or_else(|| file.store_path.clone());
        let db_uri = store.db_uri.clone().or_else(|| file.db_uri.clone());
        let store = match (store_path, db_uri) {
            (Some(_), Some(_)) => return Err(invalid("--store-path and --db-uri are mutually exclusive")),
            (None, Some(uri)) => StoreSelection::Uri(uri),
            (path, None) => StoreSelection::Path(path.unwrap_or_else(|| PathBuf::from("store"))),
        };

        let settings = Settings {
            manifest_dir: pipeline.manifest_dir.clone().or_else(|| file.manifest_dir.clone()),
            kubeconfig: pipeline.kubeconfig.clone().or_else(|| file.kubeconfig.clone()),
            kubectl: pipeline
                .kubectl
                .clone()
                .or_else(|| file.kubectl.clone())
                .unwrap_or_else(|| PathBuf::from("kubectl")),
            namespace: non_empty(&pipeline.namespace)
                .or_else(|| file.namespace.clone())
                .unwrap_or_default(),
            tools,
            fixture_dir: pipeline.fixture_dir.clone().or_else(|| file.fixture_dir.clone()),
            dedupe_threshold: pipeline
                .dedupe_threshold
                .or(file.dedupe_threshold)
                .unwrap_or(DEFAULT_THRESHOLD),
            out_dir: pipeline
                .out_dir
                .clone()
                .or_else(|| file.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("output")),
            interval: pipeline.interval.or(file.interval),
            parallelism: pipeline.parallelism.or(file.parallelism).unwrap_or(DEFAULT_PARALLELISM),
            timeout: pipeline
                .timeout
                .or(file.timeout)
                .unwrap_or(sentinel_core::adapters::exec::DEFAULT_TIMEOUT.as_secs_f64()),
            bin_dir: pipeline
                .bin_dir
                .clone()
                .or_else(|| file.bin_dir.clone())
                .unwrap_or_else(|| PathBuf::from("bin")),
            store,
            port: serve.and_then(|s| s.port).or(file.port).unwrap_or(DEFAULT_PORT),
            bind: serve
                .and_then(|s| s.bind)
                .or(file.bind)
                .unwrap_or(IpAddr::V4(Ipv4Addr::UNSPECIFIED)),
            static_dir: serve
                .and_then(|s| s.static_dir.clone())
                .or_else(|| file.static_dir.clone()),
            with_pipeline: serve.is_some_and(|s| s.with_pipeline) || file.with_pipeline.unwrap_or(false),
            metrics_json: metrics_json || file.metrics_json.unwrap_or(false),
            log_level: log_level
                .map(str::to_string)
                .or_else(|| file.log_level.clone())
                .unwrap_or_else(|| "info".to_string()),
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.manifest_dir.is_some() && self.kubeconfig.is_some() {
            return Err(invalid("--manifest-dir and --kubeconfig are mutually exclusive"));
        }
        if self.manifest_dir.is_some() && !self.namespace.is_empty() {
            return Err(invalid("--namespace only applies to cluster mode, not --manifest-dir"));
        }
        if !(0.0..=1.0).contains(&self.dedupe_threshold) {
            return Err(invalid(format!(
                "--dedupe-threshold must be within [0, 1], got {}",
                self.dedupe_threshold
            )));
        }
        if self.parallelism == 0 {
            return Err(invalid("--parallelism must be at least 1"));
        }
        if let Some(i) = self.interval {
            if !(i.is_finite() && i > 0.0) {
                return Err(invalid(format!("--interval must be a positive number of seconds, got {i}")));
            }
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(invalid(format!("--timeout must be positive, got {}", self.timeout)));
        }
        if self.tools.is_empty() {
            return Err(invalid("--tools must name at least one scanner"));
        }
        if self.uses_fixtures() && self.fixture_dir.is_none() && self.manifest_dir.is_none() {
            return Err(invalid("the fixture tool needs --fixture-dir or --manifest-dir"));
        }
        if !LOG_LEVELS.contains(&self.log_level.to_ascii_lowercase().as_str()) {
            return Err(invalid(format!(
                "--log-level must be one of {}, got {:?}",
                LOG_LEVELS.join(", "),
                self.log_level
            )));
        }
        if matches!(self.store, StoreSelection::Uri(_)) && !cfg!(feature = "mongo") {
            return Err(invalid("--db-uri requires a build with the `mongo` feature"));
        }
        Ok(())
    }

    fn uses_fixtures(&self) -> bool {
        self.fixture_dir.is_some() || self.tools.contains(&Tool::Fixture)
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let source = match &self.manifest_dir {
            Some(dir) => SourceConfig::directory(dir),
            None => SourceConfig {
                mode: SourceMode::Cluster {
                    kubeconfig: self.kubeconfig.clone(),
                    kubectl: self.kubectl.clone(),
                },
                namespace_filter: (!self.namespace.is_empty()).then(|| self.namespace.clone()),
            },
        };
        let backend = if self.uses_fixtures() {
            let dir = self
                .fixture_dir
                .clone()
                .or_else(|| self.manifest_dir.clone())
                .expect("validated: fixture runs have a directory");
            Backend::Fixture { dir }
        } else {
            Backend::Exec {
                bin_dir: Some(self.bin_dir.clone()),
                timeout: Duration::from_secs_f64(self.timeout),
            }
        };
        PipelineConfig {
            source,
            tools: self.tools.clone(),
            backend,
            dedupe: DedupeConfig {
                threshold: self.dedupe_threshold,
                ..DedupeConfig::default()
            },
            out_dir: self.out_dir.clone(),
            interval: self.interval.map(Duration::from_secs_f64),
            parallelism: self.parallelism,
        }
    }
}
