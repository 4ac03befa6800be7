//! `panelalpha` command-line runner.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panelalpha::dsl::{analyze_patterns, check_point_in_time, check_with_columns, reference_corpus, Expr, NamedFeature};
use panelalpha::panel::write_panel;
use panelalpha::runner::pipeline::{
    config_features, cost_inputs, decay_table, load_data, manifest_from_path, optimizer_table, truth_table, Evaluator,
};
use panelalpha::runner::{
    emit_report, generate_synthetic, prepare_and_score, run_experiment, write_atomically, Cell, ExperimentConfig, Format,
    RunError, Table,
};

#[derive(Parser)]
#[command(name = "panelalpha", version, about = "Cross-sectional equity alpha research runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full experiment: every report table.
    Run(Common),
    /// Write the configured synthetic panel and its planted coefficients.
    Synth(Common),
    /// Point-in-time check of a feature manifest.
    ValidateFeatures {
        #[command(flatten)]
        common: Common,
        /// Manifest file; defaults to the config's features or the bundled corpus.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Structural pattern statistics of a feature manifest.
    AnalyzePatterns {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Sharpe by execution lag for each strategy.
    Decay(Common),
    /// Naive versus optimized portfolio construction.
    OptimizeCompare(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, RunError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| RunError::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn optional_config(common: &Common) -> Result<Option<ExperimentConfig>, RunError> {
    match common.config {
        Some(_) => load_config(common).map(Some),
        None => Ok(None),
    }
}

fn manifest_features(
    manifest: Option<&Path>,
    config: Option<&ExperimentConfig>,
) -> Result<Vec<NamedFeature>, RunError> {
    match (manifest, config) {
        (Some(path), _) => manifest_from_path(path),
        (None, Some(c)) if c.features.manifest.is_some() || !c.features.inline.is_empty() => config_features(c),
        _ => Ok(reference_corpus()),
    }
}

fn print_tables(tables: &[Table]) -> Result<(), RunError> {
    let mut stdout = std::io::stdout().lock();
    for t in tables {
        t.write_markdown(&mut stdout)?;
    }
    Ok(())
}

fn emit(tables: &[Table], extra: &[(&str, String)], dest: Option<&Path>) -> Result<(), RunError> {
    print_tables(tables)?;
    if let Some(dest) = dest {
        write_atomically(dest, |dir| {
            emit_report(tables, dir)?;
            for (name, body) in extra {
                std::fs::write(dir.join(name), body)?;
            }
            Ok(())
        })?;
        eprintln!("wrote {}", dest.display());
    }
    Ok(())
}

fn cmd_run(common: &Common) -> Result<(), RunError> {
    let config = load_config(common)?;
    let dest = run_experiment(&config, common.out.as_deref())?;
    println!("report written to {}", dest.display());
    Ok(())
}

fn cmd_synth(common: &Common) -> Result<(), RunError> {
    let mut config = match optional_config(common)? {
        Some(c) => c,
        None => ExperimentConfig::from_toml("", Path::new("."))?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let dest = common.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
    let synthetic = generate_synthetic(&config.synthetic_spec()?).map_err(|e| RunError::Data {
        stage: "synthetic",
        message: e.to_string(),
    })?;
    write_atomically(&dest, |dir| {
        write_panel(&synthetic.panel, dir.join("panel.csv"), b',').map_err(|e| RunError::Data {
            stage: "synthetic",
            message: e.to_string(),
        })?;
        emit_report(&[truth_table(&synthetic.truth)], dir)?;
        Ok(())
    })?;
    println!(
        "wrote {} rows for {} securities to {}",
        synthetic.panel.len(),
        synthetic.panel.index().blocks().len(),
        dest.display()
    );
    Ok(())
}

fn cmd_validate(common: &Common, manifest: Option<&Path>) -> Result<(), RunError> {
    let config = optional_config(common)?;
    let features = manifest_features(manifest, config.as_ref())?;
    let columns: Option<Vec<String>> = match &config {
        Some(c) => Some(load_data(c)?.0.column_names().map(str::to_string).collect()),
        None => None,
    };
    let mut failed = 0;
    for f in &features {
        let report = match &columns {
            Some(cols) => check_with_columns(&f.expr, cols),
            None => check_point_in_time(&f.expr),
        };
        if report.passed() {
            println!("PASS {}", f.name);
        } else {
            failed += 1;
            println!("FAIL {}: {report}", f.name);
        }
    }
    println!("{} of {} features passed", features.len() - failed, features.len());
    if failed > 0 {
        return Err(RunError::Config(format!("{failed} features failed validation")));
    }
    Ok(())
}

fn pattern_table(exprs: &[Expr]) -> Table {
    let mut t = Table::new("patterns", "Feature Pattern Statistics", &["Metric", "Value"]);
    let Some(s) = analyze_patterns(exprs) else {
        return t;
    };
    let pct = |v: f64| Cell::num(v, Format::Pct(1));
    let rows = vec![
        ("Features", Cell::num(s.n_features as f64, Format::Int)),
        ("Mean operations", Cell::num(s.mean_operations(), Format::Fixed(2))),
        ("Median operations", Cell::num(s.median_operations(), Format::Fixed(1))),
        ("Cross-sectional ranking", pct(s.ranking)),
        ("Regime normalization", pct(s.regime_normalization)),
        ("Interaction", pct(s.interaction)),
        ("Multi-timeframe", pct(s.multi_timeframe)),
        ("Outlier z-score", pct(s.outlier_zscore)),
        ("Momentum adjustment", pct(s.momentum_adjustment)),
    ];
    for (k, v) in rows {
        t.push(vec![Cell::text(k), v]);
    }
    for (bucket, share) in &s.window_histogram {
        t.push(vec![Cell::text(format!("Windows {}", bucket.label())), pct(*share)]);
    }
    t
}

fn cmd_patterns(common: &Common, manifest: Option<&Path>) -> Result<(), RunError> {
    let config = optional_config(common)?;
    let features = manifest_features(manifest, config.as_ref())?;
    let exprs: Vec<Expr> = features.into_iter().map(|f| f.expr).collect();
    emit(&[pattern_table(&exprs)], &[], common.out.as_deref())
}

fn cmd_decay(common: &Common) -> Result<(), RunError> {
    let config = load_config(common)?;
    let (prepared, scored) = prepare_and_score(&config)?;
    let table = decay_table(&config, &prepared, &scored)?;
    emit(&[table], &[], common.out.as_deref())
}

fn cmd_optimize(common: &Common) -> Result<(), RunError> {
    let config = load_config(common)?;
    if !config.optimizer.enabled {
        return Err(RunError::Config("optimizer.enabled is false".into()));
    }
    let (prepared, scored) = prepare_and_score(&config)?;
    let costs = cost_inputs(&config, &prepared)?;
    let ev = Evaluator {
        config: &config,
        prepared: &prepared,
        inputs: costs.as_ref().map(|c| &c.0),
        mask: costs.as_ref().and_then(|c| c.1.as_ref()),
    };
    let primary = config.primary_name();
    let scores = &scored
        .get(&primary)
        .ok_or_else(|| RunError::Config(format!("primary strategy {primary:?} not found")))?
        .scores;
    let (table, log) = optimizer_table(&ev, scores)?;
    let mut body = log.join("\n");
    body.push('\n');
    emit(&[table], &[("solver_log.txt", body)], common.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Synth(c) | Command::Decay(c) | Command::OptimizeCompare(c) => c,
        Command::ValidateFeatures { common, .. } | Command::AnalyzePatterns { common, .. } => common,
    };
    if let Some(jobs) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot configure {jobs} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Synth(c) => cmd_synth(c),
        Command::ValidateFeatures { common, manifest } => cmd_validate(common, manifest.as_deref()),
        Command::AnalyzePatterns { common, manifest } => cmd_patterns(common, manifest.as_deref()),
        Command::Decay(c) => cmd_decay(c),
        Command::OptimizeCompare(c) => cmd_optimize(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
