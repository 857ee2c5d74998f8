//! Result rows, seed aggregation, and stable file formats.
//!
//! Column order and float formatting are frozen: result files from
//! identical runs must be byte-identical so golden files can be compared
//! without a parser.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::FusionMode;
use crate::policy::episode::Strategy;

/// Accuracy of one (strategy, fusion, length, seed) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub strategy: Strategy,
    pub fusion: FusionMode,
    pub length: usize,
    pub seed: u64,
    /// Episodes behind the accuracy, i.e. test objects times start views.
    pub episodes: usize,
    pub accuracy: f64,
}

impl ResultRow {
    pub fn from_counts(
        strategy: Strategy,
        fusion: FusionMode,
        length: usize,
        seed: u64,
        correct: usize,
        episodes: usize,
    ) -> Self {
        debug_assert!(correct <= episodes && episodes > 0);
        ResultRow {
            strategy,
            fusion,
            length,
            seed,
            episodes,
            accuracy: correct as f64 / episodes as f64,
        }
    }

    fn sort_key(&self) -> (u64, u8, usize, u64) {
        (
            self.strategy.code(),
            self.fusion.ordinal(),
            self.length,
            self.seed,
        )
    }
}

/// Mean and sample standard deviation of one cell across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub strategy: Strategy,
    pub fusion: FusionMode,
    pub length: usize,
    pub seeds: usize,
    pub episodes: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

const RESULT_HEADER: &str = "strategy,fusion,length,seed,episodes,accuracy";
const AGGREGATE_HEADER: &str = "strategy,fusion,length,seeds,episodes,mean_accuracy,std_accuracy";

/// An accumulating table of benchmark results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ResultRow>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn sorted_rows(&self) -> Vec<ResultRow> {
        let mut rows = self.rows.clone();
        rows.sort_by_key(ResultRow::sort_key);
        rows
    }

    /// Collapses seeds: one aggregate row per (strategy, fusion, length),
    /// mean and sample standard deviation over the per-seed accuracies.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        for row in self.sorted_rows() {
            match out.last_mut() {
                Some(agg)
                    if agg.strategy == row.strategy
                        && agg.fusion == row.fusion
                        && agg.length == row.length =>
                {
                    agg.seeds += 1;
                    agg.episodes += row.episodes;
                    // mean_accuracy accumulates the sum until finalised below.
                    agg.mean_accuracy += row.accuracy;
                    agg.std_accuracy += row.accuracy * row.accuracy;
                }
                _ => out.push(AggregateRow {
                    strategy: row.strategy,
                    fusion: row.fusion,
                    length: row.length,
                    seeds: 1,
                    episodes: row.episodes,
                    mean_accuracy: row.accuracy,
                    std_accuracy: row.accuracy * row.accuracy,
                }),
            }
        }
        for agg in &mut out {
            let n = agg.seeds as f64;
            let mean = agg.mean_accuracy / n;
            let var = if agg.seeds > 1 {
                ((agg.std_accuracy - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            agg.mean_accuracy = mean;
            agg.std_accuracy = var.sqrt();
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RESULT_HEADER}")?;
        for row in self.sorted_rows() {
            writeln!(
                w,
                "{},{},{},{},{},{:.6}",
                row.strategy, row.fusion, row.length, row.seed, row.episodes, row.accuracy
            )?;
        }
        Ok(())
    }

    pub fn write_aggregate_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{AGGREGATE_HEADER}")?;
        for agg in self.aggregate() {
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{:.6}",
                agg.strategy,
                agg.fusion,
                agg.length,
                agg.seeds,
                agg.episodes,
                agg.mean_accuracy,
                agg.std_accuracy
            )?;
        }
        Ok(())
    }

    /// Markdown summary: one pivot per fusion mode, strategies as rows and
    /// sequence lengths as columns, cells in percent.
    pub fn write_markdown<W: Write>(&self, mut w: W) -> Result<()> {
        let aggregates = self.aggregate();
        let mut lengths: Vec<usize> = aggregates.iter().map(|a| a.length).collect();
        lengths.sort_unstable();
        lengths.dedup();
        for fusion in FusionMode::ALL {
            let block: Vec<&AggregateRow> =
                aggregates.iter().filter(|a| a.fusion == fusion).collect();
            if block.is_empty() {
                continue;
            }
            writeln!(w, "## {fusion} fusion\n")?;
            write!(w, "| strategy |")?;
            for m in &lengths {
                write!(w, " {m} views |")?;
            }
            writeln!(w)?;
            write!(w, "| --- |")?;
            for _ in &lengths {
                write!(w, " --- |")?;
            }
            writeln!(w)?;
            for strategy in Strategy::ALL {
                let cells: Vec<String> = lengths
                    .iter()
                    .map(|&m| {
                        block
                            .iter()
                            .find(|a| a.strategy == strategy && a.length == m)
                            .map(|a| {
                                format!(
                                    "{:.2} ± {:.2}",
                                    100.0 * a.mean_accuracy,
                                    100.0 * a.std_accuracy
                                )
                            })
                            .unwrap_or_else(|| "—".into())
                    })
                    .collect();
                if cells.iter().all(|c| c == "—") {
                    continue;
                }
                writeln!(w, "| {strategy} | {} |", cells.join(" | "))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn aggregate_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_aggregate_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn markdown_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_markdown(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("markdown output is ascii")
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_csv(&mut file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::ResultsParse {
            line: 1,
            msg: e.to_string(),
        })?;
        let expected: Vec<&str> = RESULT_HEADER.split(',').collect();
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::ResultsParse {
                line: 1,
                msg: format!("header must be {RESULT_HEADER:?}"),
            });
        }
        let mut table = ResultsTable::new();
        for (n, record) in rdr.records().enumerate() {
            let line = n + 2;
            let bad = |msg: String| Error::ResultsParse { line, msg };
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != expected.len() {
                return Err(bad(format!(
                    "expected {} fields, got {}",
                    expected.len(),
                    record.len()
                )));
            }
            let accuracy: f64 = record[5]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad accuracy: {:?}", &record[5])))?;
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(bad(format!("accuracy {accuracy} outside [0, 1]")));
            }
            table.push(ResultRow {
                strategy: record[0]
                    .parse()
                    .map_err(|_| bad(format!("bad strategy: {:?}", &record[0])))?,
                fusion: record[1]
                    .parse()
                    .map_err(|_| bad(format!("bad fusion: {:?}", &record[1])))?,
                length: record[2]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad length: {:?}", &record[2])))?,
                seed: record[3]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad seed: {:?}", &record[3])))?,
                episodes: record[4]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad episodes: {:?}", &record[4])))?,
                accuracy,
            });
        }
        Ok(table)
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Byte-compares `actual` against the file at `path`; mismatches name the
/// first differing line.
pub fn check_golden<P: AsRef<Path>>(path: P, actual: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let expected = std::fs::read(path)?;
    if expected == actual {
        return Ok(());
    }
    let expected_text = String::from_utf8_lossy(&expected);
    let actual_text = String::from_utf8_lossy(actual);
    let mut want = expected_text.lines();
    let mut got = actual_text.lines();
    let mut line = 0usize;
    let detail = loop {
        line += 1;
        match (want.next(), got.next()) {
            (Some(w), Some(g)) if w == g => continue,
            (Some(w), Some(g)) => break format!("line {line}: expected {w:?}, got {g:?}"),
            (Some(w), None) => break format!("line {line}: expected {w:?}, got end of output"),
            (None, Some(g)) => break format!("line {line}: expected end of file, got {g:?}"),
            // Same lines but different bytes (trailing newline or CR).
            (None, None) => break "outputs differ only in line endings".to_string(),
        }
    };
    Err(Error::GoldenMismatch {
        path: path.display().to_string(),
        detail,
    })
}
