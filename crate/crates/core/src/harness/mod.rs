//! Benchmark harness: configuration, execution, and result tables.

pub mod config;
pub mod results;
pub mod runner;

pub use config::{BenchConfig, FusionMode};
pub use results::{check_golden, AggregateRow, ResultRow, ResultsTable};
pub use runner::{
    ablation_length, ablation_table, ablation_table_with_scores, accuracy_curve,
    accuracy_curve_with_scores, classify_mode, policies_for_seed, run_benchmark,
    run_benchmark_with_scores, run_full, run_full_with_scores, weights_for_seed,
    weights_for_seed_scores, world_for_seed, BenchOutput,
};
