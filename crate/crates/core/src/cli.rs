//! Command-line front end: `validate`, `backtest`, `corrupt`, `ablate` and `report`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 internal error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::backtest::{
    read_json, render_ablation, render_metrics, run_ablations, run_backtest, run_backtest_with_reference,
    write_ablation_artifacts, write_backtest_artifacts, AblationSummary, MetricsReport, ABLATION_FILE,
    FAULT_LOG_FILE, METRICS_FILE,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::faults::corrupt_panel;
use crate::market_data::{compute_features, generate_synthetic_panel, load_macro, load_panel, PanelDataset};
use crate::quality::{assess_panel, QualityState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tailwatch", version, about = "Daily ETF tail-risk monitoring and walk-forward backtests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for the backtest engine.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Use the synthetic panel generator instead of a data file.
    #[arg(long, global = true)]
    pub synthetic: bool,
    /// Comma-separated symbols to keep, in order.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub symbols: Option<Vec<String>>,
    /// Long-format OHLCV panel CSV.
    #[arg(long, global = true, value_name = "PATH")]
    pub panel: Option<PathBuf>,
    /// Macro CSV with VIX and yields.
    #[arg(long = "macro", global = true, value_name = "PATH")]
    pub macro_data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest the panel and print per-symbol quality flag counts.
    Validate,
    /// Walk-forward backtest on the panel; writes records, metrics, rolling breaches and alerts.
    Backtest,
    /// Inject faults from the first prediction date on and backtest the corrupted panel.
    Corrupt,
    /// Fallback-component and quality-layer ablations on clean and corrupted inputs.
    Ablate,
    /// Print the tables stored in an output directory.
    Report {
        /// Directory to read; defaults to the configured output directory.
        #[arg(long, value_name = "DIR")]
        from: Option<PathBuf>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

/// Config file, then command-line overrides.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if let Some(symbols) = &g.symbols {
        cfg.data.symbols = Some(symbols.clone());
    }
    if let Some(p) = &g.panel {
        cfg.data.panel = Some(p.clone());
    }
    if let Some(m) = &g.macro_data {
        cfg.data.macro_data = Some(m.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_data(cfg: &RunConfig, synthetic: bool) -> Result<PanelDataset> {
    let panel = if synthetic {
        generate_synthetic_panel(&cfg.synthetic)
    } else {
        let path = cfg.data.panel.as_ref().ok_or_else(|| {
            Error::Config("no panel given: pass --panel PATH, set data.panel, or use --synthetic".into())
        })?;
        let mut panel = load_panel(path, &cfg.data.panel_schema)?;
        if let Some(m) = &cfg.data.macro_data {
            panel = panel.with_macro(load_macro(m, &cfg.data.macro_schema)?);
        }
        panel
    };
    match &cfg.data.symbols {
        Some(wanted) => {
            if let Some(missing) = wanted.iter().find(|s| panel.symbol_index(s).is_none()) {
                return Err(Error::InsufficientData(format!("symbol {missing} is not in the panel")));
            }
            Ok(panel.select_symbols(wanted))
        }
        None => Ok(panel),
    }
}

/// Per-symbol counts of raised quality components and of quality states.
pub fn quality_summary(panel: &PanelDataset, cfg: &RunConfig) -> String {
    let mut features = compute_features(panel, cfg.model.ewma_lambda);
    let reports = assess_panel(panel, &mut features, &cfg.quality);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} symbols x {} dates ({} to {})",
        panel.n_symbols(),
        panel.n_dates(),
        panel.dates.first().map(ToString::to_string).unwrap_or_default(),
        panel.dates.last().map(ToString::to_string).unwrap_or_default()
    );
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>5}",
        "symbol", "miss", "ohlc", "jump", "vol", "stale", "green", "yellow", "red"
    );
    for (series, rows) in panel.series.iter().zip(&reports) {
        let count = |f: &dyn Fn(&crate::quality::QualityReport) -> bool| rows.iter().filter(|r| f(r)).count();
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>5}",
            series.symbol,
            count(&|r| r.components.q_miss > 0.0),
            count(&|r| r.components.q_ohlc >= 1.0),
            count(&|r| r.components.q_jump >= 0.5),
            count(&|r| r.components.q_vol >= 0.5),
            count(&|r| r.components.q_stale >= 1.0),
            count(&|r| r.state == QualityState::Green),
            count(&|r| r.state == QualityState::Yellow),
            count(&|r| r.state == QualityState::Red),
        );
    }
    out
}

fn print(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let synthetic = cli.global.synthetic;
    match &cli.command {
        Command::Report { from } => {
            let dir = from.clone().unwrap_or_else(|| cfg.out_dir.clone());
            report(&dir)
        }
        cmd => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| execute(cmd, &cfg, synthetic))
        }
    }
}

fn execute(cmd: &Command, cfg: &RunConfig, synthetic: bool) -> Result<()> {
    let panel = load_data(cfg, synthetic)?;
    let out = &cfg.out_dir;
    match cmd {
        Command::Validate => print(&quality_summary(&panel, cfg)),
        Command::Backtest => {
            let run = run_backtest(&panel, cfg)?;
            let report = write_backtest_artifacts(out, &run, cfg)?;
            print(&render_metrics(&report));
            log::info!("wrote backtest artifacts to {}", out.display());
        }
        Command::Corrupt => {
            let (corrupted, log) = corrupt_panel(&panel, &cfg.faults, cfg.windows.train)?;
            let run = run_backtest_with_reference(&corrupted, &panel, cfg)?;
            let report = write_backtest_artifacts(out, &run, cfg)?;
            log.write_csv(out.join(FAULT_LOG_FILE))?;
            corrupted.write_csv(out.join("corrupted_panel.csv"))?;
            corrupted.write_macro_csv(out.join("corrupted_macro.csv"))?;
            print(&format!(
                "corrupted {} of {} eligible rows\n{}",
                log.len(),
                log.eligible_rows,
                render_metrics(&report)
            ));
        }
        Command::Ablate => {
            let runs = run_ablations(&panel, cfg)?;
            write_ablation_artifacts(out, &runs)?;
            print(&render_ablation(&runs.summary));
        }
        Command::Report { .. } => unreachable!("handled before data loading"),
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let metrics = dir.join(METRICS_FILE);
    let ablation = dir.join(ABLATION_FILE);
    if !metrics.exists() && !ablation.exists() {
        return Err(Error::InsufficientData(format!(
            "{} holds neither {METRICS_FILE} nor {ABLATION_FILE}",
            dir.display()
        )));
    }
    if metrics.exists() {
        let m: MetricsReport = read_json(&metrics)?;
        print(&render_metrics(&m));
    }
    if ablation.exists() {
        let a: AblationSummary = read_json(&ablation)?;
        print(&render_ablation(&a));
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            EXIT_INTERNAL
        }
    }
}
