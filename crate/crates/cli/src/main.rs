//! Command-line benchmark runner.
//!
//! Exit codes: 0 success, 1 configuration error (bad flags, bad config
//! file, impossible protocol), 2 data error (unreadable or malformed
//! inputs, output failures), 3 golden-file mismatch.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pairview::harness::{
    ablation_table, ablation_table_with_scores, accuracy_curve, accuracy_curve_with_scores,
    check_golden, policies_for_seed, run_benchmark, run_benchmark_with_scores, weights_for_seed,
    weights_for_seed_scores, world_for_seed, BenchConfig, ResultsTable,
};
use pairview::policy::episode::Strategy;
use pairview::sensorium::ScoreTable;
use pairview::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pairview",
    version,
    about = "Multi-view recognition benchmark on a discretised viewing sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON benchmark configuration; absent fields take their defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Replaces the config's seed list with this single master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's, then the working directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated strategy override.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    strategies: Option<Vec<Strategy>>,
    /// Comma-separated sequence length override.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    lengths: Option<Vec<usize>>,
    /// Worker threads for episode execution (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ScoresArg {
    /// Score table CSV; replaces the synthetic world oracle.
    #[arg(long, value_name = "CSV")]
    scores: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world for a seed and describe it on disk.
    GenWorld {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Learn the relative-pose weight table and write it as CSV.
    LearnWeights {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scores: ScoresArg,
    },
    /// Fit next-best-view and view-quality policies, write them as CSV.
    FitPolicies {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the benchmark and write result tables.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scores: ScoresArg,
    },
    /// Classify shared random episodes under the four pair fusion modes.
    Ablation {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scores: ScoresArg,
    },
    /// Measure accuracy at every prefix of the longest episodes.
    Curve {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scores: ScoresArg,
    },
    /// Run the benchmark and byte-compare its aggregate against a golden file.
    CheckGolden {
        /// The committed aggregate CSV to compare against.
        #[arg(value_name = "GOLDEN")]
        golden: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scores: ScoresArg,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            err.print().expect("writing clap output");
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GoldenMismatch { .. } => 3,
        e if e.is_config() => 1,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorld { common } => gen_world(&common),
        Command::LearnWeights { common, scores } => learn_weights_cmd(&common, &scores),
        Command::FitPolicies { common } => fit_policies_cmd(&common),
        Command::Bench { common, scores } => {
            let (config, out) = setup(&common)?;
            let table = match load_scores(&config, &scores)? {
                Some(table) => run_benchmark_with_scores(&config, &table)?,
                None => run_benchmark(&config)?,
            };
            emit_tables(&out, "results", &table)
        }
        Command::Ablation { common, scores } => {
            let (config, out) = setup(&common)?;
            let table = match load_scores(&config, &scores)? {
                Some(table) => ablation_table_with_scores(&config, &table)?,
                None => ablation_table(&config)?,
            };
            emit_tables(&out, "ablation", &table)
        }
        Command::Curve { common, scores } => {
            let (config, out) = setup(&common)?;
            let table = match load_scores(&config, &scores)? {
                Some(table) => accuracy_curve_with_scores(&config, &table)?,
                None => accuracy_curve(&config)?,
            };
            emit_tables(&out, "curves", &table)
        }
        Command::CheckGolden {
            golden,
            common,
            scores,
        } => {
            let (config, _) = setup(&common)?;
            let table = match load_scores(&config, &scores)? {
                Some(table) => run_benchmark_with_scores(&config, &table)?,
                None => run_benchmark(&config)?,
            };
            check_golden(&golden, table.aggregate_csv_string().as_bytes())?;
            println!("golden match: {}", golden.display());
            Ok(())
        }
    }
}

/// Loads the config, applies flag overrides, and sets up the worker pool.
fn setup(common: &CommonArgs) -> Result<(BenchConfig, PathBuf)> {
    let mut config = match &common.config {
        Some(path) => BenchConfig::load_json(path)?,
        None => BenchConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(strategies) = &common.strategies {
        config.strategies = strategies.clone();
    }
    if let Some(lengths) = &common.lengths {
        config.lengths = lengths.clone();
    }
    config.validate()?;
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        // Ignore the error from configuring the pool twice; the first
        // setting wins, which only happens in-process during tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    Ok((config, out))
}

fn master_seed(config: &BenchConfig) -> u64 {
    config.seeds[0]
}

fn load_scores(config: &BenchConfig, arg: &ScoresArg) -> Result<Option<ScoreTable>> {
    match &arg.scores {
        Some(path) => Ok(Some(ScoreTable::load_csv(config.grid, path)?)),
        None => Ok(None),
    }
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn emit_tables(out: &Path, stem: &str, table: &ResultsTable) -> Result<()> {
    let csv = out.join(format!("{stem}.csv"));
    table.save_csv(&csv)?;
    report(&csv);
    let aggregate = out.join(format!("{stem}_aggregate.csv"));
    std::fs::write(&aggregate, table.aggregate_csv_string())?;
    report(&aggregate);
    let markdown = out.join(format!("{stem}.md"));
    std::fs::write(&markdown, table.markdown_string())?;
    report(&markdown);
    Ok(())
}

fn gen_world(common: &CommonArgs) -> Result<()> {
    let (config, out) = setup(common)?;
    let master = master_seed(&config);
    let world = world_for_seed(&config, master)?;

    let manifest = serde_json::json!({
        "master_seed": master,
        "grid": config.grid,
        "world": config.world,
    });
    let path = out.join("world.json");
    let mut file = File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)
        .map_err(|e| Error::Config(e.to_string()))?;
    writeln!(file)?;
    report(&path);

    let path = out.join("ambiguity.csv");
    let mut file = File::create(&path)?;
    writeln!(file, "azimuth,elevation,ambiguity")?;
    for view in config.grid.all_views() {
        writeln!(
            file,
            "{},{},{}",
            view.azimuth,
            view.elevation,
            world.ambiguity(view)?
        )?;
    }
    report(&path);

    let path = out.join("signatures.csv");
    let mut file = File::create(&path)?;
    write!(file, "class,azimuth,elevation")?;
    for d in 0..world.feature_dim() {
        write!(file, ",f{d}")?;
    }
    writeln!(file)?;
    for class in 0..world.num_classes() {
        for view in config.grid.all_views() {
            write!(file, "{class},{},{}", view.azimuth, view.elevation)?;
            for value in world.signature(class, view)? {
                write!(file, ",{value}")?;
            }
            writeln!(file)?;
        }
    }
    report(&path);
    Ok(())
}

fn learn_weights_cmd(common: &CommonArgs, scores: &ScoresArg) -> Result<()> {
    let (config, out) = setup(common)?;
    let master = master_seed(&config);
    let weights = match load_scores(&config, scores)? {
        Some(table) => weights_for_seed_scores(&config, &table, master)?,
        None => {
            let world = world_for_seed(&config, master)?;
            weights_for_seed(&config, &world, master)?
        }
    };
    let path = out.join("weights.csv");
    weights.save_csv(&path)?;
    report(&path);
    Ok(())
}

fn fit_policies_cmd(common: &CommonArgs) -> Result<()> {
    let (config, out) = setup(common)?;
    let master = master_seed(&config);
    let world = world_for_seed(&config, master)?;
    let policies = policies_for_seed(&config, &world, master)?;
    let path = out.join("nbv_policy.csv");
    policies.nbv.save_csv(&path)?;
    report(&path);
    let path = out.join("quality.csv");
    policies.quality.save_csv(&path)?;
    report(&path);
    Ok(())
}
