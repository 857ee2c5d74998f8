//! Benchmark execution.
//!
//! The protocol: per master seed, build the world and its learned
//! artifacts, then run one episode per (strategy, length, test object,
//! start viewpoint) and average correctness over objects and starts.
//! Every episode's rng is keyed by those labels alone, so any subset of
//! the work (a single table, the ablation, the curve) reproduces exactly
//! the episodes a full run would see.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{
    classify_prefix, learn_weights, learn_weights_from_scores, vote_prefix, FusionSettings,
    PairSelect, SequenceRecord, WeightTable,
};
use crate::harness::config::{BenchConfig, FusionMode};
use crate::harness::results::{ResultRow, ResultsTable};
use crate::policy::episode::{run_episode, EpisodeOptions, EpisodeOracle, Strategy};
use crate::policy::PolicySet;
use crate::seed::{self, STREAM_EPISODE, STREAM_QUALITY, STREAM_WEIGHTS, STREAM_WORLD};
use crate::sensorium::{ScoreTable, SyntheticWorld};
use crate::viewsphere::ViewIndex;

/// Sequence length used by the fusion ablation, capped by the grid.
pub fn ablation_length(config: &BenchConfig) -> usize {
    6.min(config.grid.num_views())
}

/// The synthetic world a master seed denotes under this config.
pub fn world_for_seed(config: &BenchConfig, master: u64) -> Result<SyntheticWorld> {
    SyntheticWorld::generate(
        seed::derive_seed(master, &[STREAM_WORLD]),
        config.grid,
        &config.world,
    )
}

fn training_classes(config: &BenchConfig) -> Vec<usize> {
    (0..config.world.num_classes)
        .flat_map(|c| std::iter::repeat(c).take(config.train_objects_per_class))
        .collect()
}

/// Fusion weights a master seed denotes, learned on the training objects.
pub fn weights_for_seed(
    config: &BenchConfig,
    world: &SyntheticWorld,
    master: u64,
) -> Result<WeightTable> {
    learn_weights(
        world,
        &training_classes(config),
        &config.weight_params(),
        &mut seed::stream(master, &[STREAM_WEIGHTS]),
    )
}

/// As [`weights_for_seed`], but sampling an ingested score table.
pub fn weights_for_seed_scores(
    config: &BenchConfig,
    table: &ScoreTable,
    master: u64,
) -> Result<WeightTable> {
    let objects: Vec<usize> = (0..table.num_objects()).collect();
    learn_weights_from_scores(
        table,
        &objects,
        &config.weight_params(),
        &mut seed::stream(master, &[STREAM_WEIGHTS]),
    )
}

/// Exploration policies a master seed denotes.
pub fn policies_for_seed(
    config: &BenchConfig,
    world: &SyntheticWorld,
    master: u64,
) -> Result<PolicySet> {
    PolicySet::fit(
        world,
        config.quality_samples,
        &mut seed::stream(master, &[STREAM_QUALITY]),
    )
}

/// Classifies the first `prefix` observations of a record under one mode.
pub fn classify_mode(record: &SequenceRecord, prefix: usize, mode: FusionMode) -> Result<usize> {
    let settings = match mode {
        FusionMode::Vote => return vote_prefix(record, prefix),
        FusionMode::AllUnweighted => FusionSettings {
            select: PairSelect::All,
            weighted: false,
        },
        FusionMode::AllWeighted => FusionSettings {
            select: PairSelect::All,
            weighted: true,
        },
        FusionMode::BestUnweighted => FusionSettings {
            select: PairSelect::Best,
            weighted: false,
        },
        FusionMode::BestWeighted => FusionSettings {
            select: PairSelect::Best,
            weighted: true,
        },
    };
    classify_prefix(record, prefix, settings).map(|(label, _)| label)
}

/// Everything one full run produces.
#[derive(Debug, Clone, Default)]
pub struct BenchOutput {
    /// One row per (strategy, configured fusion, length, seed).
    pub results: ResultsTable,
    /// Random six-view episodes classified under all four pair modes.
    pub ablation: ResultsTable,
    /// Prefix accuracies of the longest configured episodes.
    pub curves: ResultsTable,
}

#[derive(Clone, Copy)]
struct Parts {
    bench: bool,
    ablation: bool,
    curve: bool,
}

#[derive(Clone, Copy)]
enum Source<'a> {
    Synthetic,
    Scores(&'a ScoreTable),
}

#[derive(Clone, Copy)]
struct Cell {
    strategy: Strategy,
    length: usize,
    bench: bool,
    ablation: bool,
    curve: bool,
}

struct EpisodeEval {
    final_ok: Option<bool>,
    ablation_ok: Option<[bool; 4]>,
    prefix_ok: Option<Vec<bool>>,
}

/// Runs the configured benchmark on synthetic worlds.
pub fn run_benchmark(config: &BenchConfig) -> Result<ResultsTable> {
    let out = run(
        config,
        Source::Synthetic,
        Parts {
            bench: true,
            ablation: false,
            curve: false,
        },
    )?;
    Ok(out.results)
}

/// Classifies shared random six-view episodes under all four pair fusion
/// modes. The variants see literally the same observation records.
pub fn ablation_table(config: &BenchConfig) -> Result<ResultsTable> {
    let out = run(
        config,
        Source::Synthetic,
        Parts {
            bench: false,
            ablation: true,
            curve: false,
        },
    )?;
    Ok(out.ablation)
}

/// Accuracy at every prefix length of the longest configured episodes,
/// one series per strategy.
pub fn accuracy_curve(config: &BenchConfig) -> Result<ResultsTable> {
    let out = run(
        config,
        Source::Synthetic,
        Parts {
            bench: false,
            ablation: false,
            curve: true,
        },
    )?;
    Ok(out.curves)
}

/// Benchmark, ablation, and curves in one pass over shared episodes.
pub fn run_full(config: &BenchConfig) -> Result<BenchOutput> {
    run(
        config,
        Source::Synthetic,
        Parts {
            bench: true,
            ablation: true,
            curve: true,
        },
    )
}

/// Runs the benchmark against an ingested score table instead of a
/// synthetic world. Only strategies that need no fitted policies apply.
pub fn run_benchmark_with_scores(config: &BenchConfig, table: &ScoreTable) -> Result<ResultsTable> {
    let out = run(
        config,
        Source::Scores(table),
        Parts {
            bench: true,
            ablation: false,
            curve: false,
        },
    )?;
    Ok(out.results)
}

/// As [`ablation_table`], over an ingested score table.
pub fn ablation_table_with_scores(
    config: &BenchConfig,
    table: &ScoreTable,
) -> Result<ResultsTable> {
    let out = run(
        config,
        Source::Scores(table),
        Parts {
            bench: false,
            ablation: true,
            curve: false,
        },
    )?;
    Ok(out.ablation)
}

/// As [`accuracy_curve`], over an ingested score table.
pub fn accuracy_curve_with_scores(
    config: &BenchConfig,
    table: &ScoreTable,
) -> Result<ResultsTable> {
    let out = run(
        config,
        Source::Scores(table),
        Parts {
            bench: false,
            ablation: false,
            curve: true,
        },
    )?;
    Ok(out.curves)
}

/// As [`run_full`], over an ingested score table.
pub fn run_full_with_scores(config: &BenchConfig, table: &ScoreTable) -> Result<BenchOutput> {
    run(
        config,
        Source::Scores(table),
        Parts {
            bench: true,
            ablation: true,
            curve: true,
        },
    )
}

fn run(config: &BenchConfig, source: Source<'_>, parts: Parts) -> Result<BenchOutput> {
    config.validate()?;
    let grid = config.grid;

    fn touch(
        cells: &mut BTreeMap<(u64, usize), Cell>,
        strategy: Strategy,
        length: usize,
    ) -> &mut Cell {
        cells
            .entry((strategy.code(), length))
            .or_insert_with(|| Cell {
                strategy,
                length,
                bench: false,
                ablation: false,
                curve: false,
            })
    }
    let mut cells: BTreeMap<(u64, usize), Cell> = BTreeMap::new();
    let curve_length = *config.lengths.iter().max().expect("validated non-empty");
    for &strategy in &config.strategies {
        if parts.bench {
            for &length in &config.lengths {
                touch(&mut cells, strategy, length).bench = true;
            }
        }
        if parts.curve {
            touch(&mut cells, strategy, curve_length).curve = true;
        }
    }
    if parts.ablation {
        touch(&mut cells, Strategy::Random, ablation_length(config)).ablation = true;
    }
    let cells: Vec<Cell> = cells.into_values().collect();

    if let Source::Scores(table) = source {
        if *table.grid() != grid {
            return Err(Error::Config(format!(
                "score table was built on a {}x{} grid, config expects {}x{}",
                table.grid().azimuth_steps,
                table.grid().elevation_steps,
                grid.azimuth_steps,
                grid.elevation_steps
            )));
        }
        if let Some(cell) = cells.iter().find(|c| c.strategy.needs_policies()) {
            return Err(Error::Config(format!(
                "score-table runs cannot fit exploration policies; strategy {} is unavailable",
                cell.strategy
            )));
        }
    }

    let num_objects = match source {
        Source::Synthetic => config.world.num_classes * config.test_objects_per_class,
        Source::Scores(table) => table.num_objects(),
    };
    let need_policies = cells.iter().any(|c| c.strategy.needs_policies());

    let mut output = BenchOutput::default();
    for &master in &config.seeds {
        let world = match source {
            Source::Synthetic => Some(world_for_seed(config, master)?),
            Source::Scores(_) => None,
        };
        let weights = match source {
            Source::Synthetic => {
                weights_for_seed(config, world.as_ref().expect("synthetic world"), master)?
            }
            Source::Scores(table) => weights_for_seed_scores(config, table, master)?,
        };
        let policies = match (&world, need_policies) {
            (Some(world), true) => Some(policies_for_seed(config, world, master)?),
            _ => None,
        };

        for cell in &cells {
            let jobs: Vec<(usize, usize)> = (0..num_objects)
                .flat_map(|t| (0..grid.num_views()).map(move |flat| (t, flat)))
                .collect();
            let mut options = EpisodeOptions::new(cell.strategy, cell.length);
            options.horizon_cap = config.horizon_cap;

            let evals: Vec<EpisodeEval> = jobs
                .par_iter()
                .map(|&(object, flat)| {
                    let oracle = match source {
                        Source::Synthetic => EpisodeOracle::world(
                            world.as_ref().expect("synthetic world"),
                            object / config.test_objects_per_class,
                        )?,
                        Source::Scores(table) => EpisodeOracle::scores(table, object)?,
                    };
                    let truth = oracle.true_class();
                    let mut rng = seed::stream(
                        master,
                        &[
                            STREAM_EPISODE,
                            cell.strategy.code(),
                            cell.length as u64,
                            object as u64,
                            flat as u64,
                        ],
                    );
                    let outcome = run_episode(
                        &grid,
                        &oracle,
                        Some(&weights),
                        policies.as_ref(),
                        &options,
                        ViewIndex::from_flat(&grid, flat),
                        &mut rng,
                    )?;
                    let record = &outcome.record;
                    let final_ok = if cell.bench {
                        Some(classify_mode(record, cell.length, config.fusion)? == truth)
                    } else {
                        None
                    };
                    let ablation_ok = if cell.ablation {
                        let mut ok = [false; 4];
                        for (slot, mode) in ok.iter_mut().zip(FusionMode::ABLATION) {
                            *slot = classify_mode(record, cell.length, mode)? == truth;
                        }
                        Some(ok)
                    } else {
                        None
                    };
                    let prefix_ok = if cell.curve {
                        let flags = (1..=cell.length)
                            .map(|p| Ok(classify_mode(record, p, config.fusion)? == truth))
                            .collect::<Result<Vec<bool>>>()?;
                        Some(flags)
                    } else {
                        None
                    };
                    Ok(EpisodeEval {
                        final_ok,
                        ablation_ok,
                        prefix_ok,
                    })
                })
                .collect::<Result<Vec<EpisodeEval>>>()?;

            let episodes = evals.len();
            if cell.bench {
                let correct = evals.iter().filter(|e| e.final_ok == Some(true)).count();
                output.results.push(ResultRow::from_counts(
                    cell.strategy,
                    config.fusion,
                    cell.length,
                    master,
                    correct,
                    episodes,
                ));
            }
            if cell.ablation {
                for (i, mode) in FusionMode::ABLATION.into_iter().enumerate() {
                    let correct = evals
                        .iter()
                        .filter(|e| e.ablation_ok.map_or(false, |ok| ok[i]))
                        .count();
                    output.ablation.push(ResultRow::from_counts(
                        cell.strategy,
                        mode,
                        cell.length,
                        master,
                        correct,
                        episodes,
                    ));
                }
            }
            if cell.curve {
                for p in 1..=cell.length {
                    let correct = evals
                        .iter()
                        .filter(|e| e.prefix_ok.as_ref().map_or(false, |ok| ok[p - 1]))
                        .count();
                    output.curves.push(ResultRow::from_counts(
                        cell.strategy,
                        config.fusion,
                        p,
                        master,
                        correct,
                        episodes,
                    ));
                }
            }
        }
    }
    Ok(output)
}
