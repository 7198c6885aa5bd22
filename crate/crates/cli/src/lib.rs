//! The `sentinel` command: scan cycles, the API server and scanner setup.

pub mod config;
pub mod report;

use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use serde_json::json;
use tokio::sync::watch;

use sentinel_core::pipeline::{CycleReport, Pipeline, PipelineError};
use sentinel_core::tools::{self, Arch, ToolSpec};
use sentinel_core::{CycleMetrics, DirStore, FindingsStore, StoreError, Tool};

use config::{Cli, Command, ConfigError, FileConfig, PipelineArgs, Settings, StoreArgs, StoreSelection, ToolsCommand};
use report::Stats;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn init_logging(level: &str) {
    let level: tracing::Level = level.parse().unwrap_or(tracing::Level::INFO);
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .try_init();
}

fn resolve(cli: &Cli) -> Result<Settings, ConfigError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let log_level = cli.log_level.as_deref();
    match &cli.command {
        Command::Scan(a) => Settings::resolve(&a.pipeline, &a.store, None, a.metrics_json, log_level, &file),
        Command::Serve(a) => Settings::resolve(&a.pipeline, &a.store, Some(a), a.metrics_json, log_level, &file),
        Command::Tools(a) => {
            let bin_dir = match &a.command {
                ToolsCommand::Check { bin_dir } | ToolsCommand::Install { bin_dir, .. } => bin_dir.clone(),
            };
            let pipeline = PipelineArgs {
                bin_dir,
                ..PipelineArgs::default()
            };
            let store = StoreArgs::default();
            let trimmed = FileConfig {
                bin_dir: file.bin_dir.clone(),
                log_level: file.log_level.clone(),
                ..FileConfig::default()
            };
            Settings::resolve(&pipeline, &store, None, false, log_level, &trimmed)
        }
    }
}

fn open_store(selection: &StoreSelection) -> Result<Arc<dyn FindingsStore>, StoreError> {
    match selection {
        StoreSelection::Path(path) => Ok(Arc::new(DirStore::open(path)?)),
        #[cfg(feature = "mongo")]
        StoreSelection::Uri(uri) => Ok(Arc::new(sentinel_core::store::mongo::MongoStore::connect(uri)?)),
        #[cfg(not(feature = "mongo"))]
        StoreSelection::Uri(_) => Err(StoreError::Backend("built without MongoDB support".into())),
    }
}

/// A watch channel that flips to `true` on ctrl-c.
fn shutdown_on_ctrl_c() -> watch::Receiver<bool> {
    let (tx, rx) = watch::channel(false);
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            tracing::info!("interrupt received; stopping after the current stage");
            let _ = tx.send(true);
        }
    });
    rx
}

fn print_cycle(result: &Result<CycleReport, PipelineError>, as_json: bool) {
    let mut stdout = std::io::stdout().lock();
    match result {
        Ok(report) if as_json => {
            let _ = writeln!(stdout, "{}", serde_json::to_string(report).expect("report serializes"));
        }
        Ok(report) => {
            let _ = write!(stdout, "{}", report::cycle_tables(report));
        }
        Err(e) => eprintln!("error: cycle failed: {e}"),
    }
    let _ = stdout.flush();
}

fn print_loop_summary(history: &[CycleMetrics], as_json: bool) {
    if as_json {
        let stage = |f: fn(&CycleMetrics) -> f64| Stats::of(&history.iter().map(f).collect::<Vec<_>>());
        let body = json!({
            "cycles": history.len(),
            "scan_s": stage(|m| m.scan_s),
            "dedupe_s": stage(|m| m.dedupe_s),
            "normalize_s": stage(|m| m.normalize_s),
            "merge_s": stage(|m| m.merge_s),
            "persist_s": stage(|m| m.persist_s),
            "total_s": stage(|m| m.total_s),
        });
        println!("{body}");
    } else {
        print!("{}", report::loop_summary(history));
    }
}

async fn scan(settings: &Settings) -> ExitCode {
    let store = match open_store(&settings.store) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_FAILURE, format!("opening store: {e}")),
    };
    let pipeline = match Pipeline::new(settings.pipeline_config(), store) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let shutdown = shutdown_on_ctrl_c();
    let as_json = settings.metrics_json;

    if settings.interval.is_none() {
        let result = pipeline.run_cycle_until(shutdown).await;
        print_cycle(&result, as_json);
        return match result {
            Ok(_) => ExitCode::from(EXIT_OK),
            Err(_) => ExitCode::from(EXIT_FAILURE),
        };
    }

    let mut history = Vec::new();
    let outcome = pipeline
        .run_loop(shutdown, |result| {
            print_cycle(result, as_json);
            if let Ok(report) = result {
                history.push(report.metrics.clone());
            }
        })
        .await;
    print_loop_summary(&history, as_json);
    match outcome {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => fail(EXIT_FAILURE, format!("giving up: {e}")),
    }
}

async fn serve(settings: &Settings) -> ExitCode {
    let store = match open_store(&settings.store) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_FAILURE, format!("opening store: {e}")),
    };
    let addr = SocketAddr::new(settings.bind, settings.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => return fail(EXIT_FAILURE, format!("binding {addr}: {e}")),
    };
    let local = listener.local_addr().map(|a| a.to_string()).unwrap_or_else(|_| addr.to_string());
    println!("listening on http://{local}");
    let _ = std::io::stdout().flush();

    let shutdown = shutdown_on_ctrl_c();
    let worker = if settings.with_pipeline {
        let pipeline = match Pipeline::new(settings.pipeline_config(), store.clone()) {
            Ok(p) => p,
            Err(e) => return fail(EXIT_USAGE, e),
        };
        let rx = shutdown.clone();
        let as_json = settings.metrics_json;
        Some(tokio::spawn(async move {
            pipeline.run_loop(rx, |result| print_cycle(result, as_json)).await
        }))
    } else {
        None
    };

    let mut rx = shutdown.clone();
    let stop = async move {
        let _ = rx.wait_for(|stop| *stop).await;
    };
    let router = sentinel_core::api::router(store, settings.static_dir.clone());
    if let Err(e) = sentinel_core::api::serve(listener, router, stop).await {
        return fail(EXIT_FAILURE, format!("server error: {e}"));
    }
    if let Some(worker) = worker {
        match worker.await {
            Ok(Err(e)) => return fail(EXIT_FAILURE, format!("pipeline gave up: {e}")),
            Err(e) => return fail(EXIT_FAILURE, format!("pipeline task: {e}")),
            Ok(Ok(())) => {}
        }
    }
    ExitCode::from(EXIT_OK)
}

async fn tools_check(bin_dir: &Path) -> ExitCode {
    let specs = ToolSpec::defaults(Arch::current());
    let checks = tools::check_tools(&specs, Some(bin_dir)).await;
    println!("{:<12} {:<8} {:<40} VERSION", "TOOL", "FOUND", "PATH");
    for c in checks {
        let path = c.path.map(|p| p.display().to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<12} {:<8} {:<40} {}",
            c.tool.as_str(),
            if c.found { "yes" } else { "no" },
            path,
            c.version.as_deref().unwrap_or("-")
        );
    }
    ExitCode::from(EXIT_OK)
}

async fn tools_install(names: &[String], bin_dir: &Path, stub_host: Option<&str>) -> ExitCode {
    let mut specs = Vec::new();
    for name in names {
        let spec = name
            .parse::<Tool>()
            .ok()
            .and_then(|t| ToolSpec::lookup(t, Arch::current()));
        match spec {
            Some(spec) => specs.push(match stub_host {
                Some(host) => spec.rebased(host),
                None => spec,
            }),
            None => return fail(EXIT_USAGE, format!("unknown tool {name:?}; expected trivy, kubesec, kube-score or kube-linter")),
        }
    }
    let client = match reqwest::Client::builder().user_agent("sentinel").build() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    let mut code = EXIT_OK;
    for spec in &specs {
        match tools::install_tool(&client, spec, bin_dir).await {
            Ok((version, path)) => println!("installed {} {version} at {}", spec.tool, path.display()),
            Err(e) => {
                eprintln!("error: installing {}: {e}", spec.tool);
                code = EXIT_FAILURE;
            }
        }
    }
    ExitCode::from(code)
}

/// Run a parsed command line to completion.
pub async fn run(cli: Cli) -> ExitCode {
    let settings = match resolve(&cli) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&settings).expect("settings serialize"));
        return ExitCode::from(EXIT_OK);
    }
    init_logging(&settings.log_level);
    match &cli.command {
        Command::Scan(_) => scan(&settings).await,
        Command::Serve(_) => serve(&settings).await,
        Command::Tools(t) => match &t.command {
            ToolsCommand::Check { .. } => tools_check(&settings.bin_dir).await,
            ToolsCommand::Install { names, stub_host, .. } => {
                tools_install(names, &settings.bin_dir, stub_host.as_deref()).await
            }
        },
    }
}
