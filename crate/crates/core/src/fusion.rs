//! Pairwise decomposition and fusion.
//!
//! A sequence of M views yields N = M(M-1)/2 unordered view pairs. Each
//! pair is classified on its own; the per-pair distributions are then fused
//! by a weighted average, where a pair's weight depends only on the relative
//! pose between its two views. Weights are learned by measuring the mean
//! classification cross entropy per pose on training pairs: poses that tend
//! to classify well earn large weights.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sensorium::{
    ClassDistribution, Observation, PairOracle, ScoreTable, SyntheticWorld, ViewPair,
};
use crate::viewsphere::{GridSpec, RelativePose, ViewIndex};

/// Probabilities are floored at this value before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Classification confidence of `dist` against the known label: the negative
/// log probability assigned to the true class, floored at [`PROB_FLOOR`].
pub fn cross_entropy(dist: &ClassDistribution, true_class: usize) -> f64 {
    -dist.prob(true_class).max(PROB_FLOOR).ln()
}

/// All unordered index pairs (i, j) with i < j over `m` sequence positions.
///
/// Pairs appear in acquisition order: every new position pairs with all
/// earlier ones, so the list for m positions is a prefix of the list for
/// m + 1.
pub fn enumerate_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for j in 1..m {
        for i in 0..j {
            out.push((i, j));
        }
    }
    out
}

/// Learned per-pose fusion weight and the statistic it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry {
    pub mean_cross_entropy: f64,
    pub lambda: f64,
}

/// Fusion weights for every realisable relative pose on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    entries: BTreeMap<RelativePose, WeightEntry>,
}

impl WeightTable {
    fn from_entries(grid: &GridSpec, entries: BTreeMap<RelativePose, WeightEntry>) -> Result<Self> {
        for pose in grid.all_poses() {
            if !entries.contains_key(&pose) {
                return Err(Error::PoseCoverage {
                    d_azimuth: pose.d_azimuth,
                    d_elevation: pose.d_elevation,
                });
            }
        }
        Ok(WeightTable { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, pose: RelativePose) -> Option<&WeightEntry> {
        self.entries.get(&pose)
    }

    pub fn lambda(&self, pose: RelativePose) -> Result<f64> {
        self.entries
            .get(&pose)
            .map(|e| e.lambda)
            .ok_or(Error::PoseLookup {
                d_azimuth: pose.d_azimuth,
                d_elevation: pose.d_elevation,
            })
    }

    /// Entries in ascending pose order.
    pub fn iter(&self) -> impl Iterator<Item = (RelativePose, &WeightEntry)> {
        self.entries.iter().map(|(p, e)| (*p, e))
    }

    /// Writes the table as CSV in ascending pose order. Floats round-trip
    /// exactly through the shortest-representation formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d_azimuth,d_elevation,mean_cross_entropy,lambda")?;
        for (pose, e) in &self.entries {
            writeln!(
                w,
                "{},{},{},{}",
                pose.d_azimuth, pose.d_elevation, e.mean_cross_entropy, e.lambda
            )?;
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses a table and validates coverage of every realisable pose of
    /// `grid`.
    pub fn from_csv_reader<R: Read>(grid: &GridSpec, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::WeightParse {
            line: 1,
            msg: e.to_string(),
        })?;
        let want = ["d_azimuth", "d_elevation", "mean_cross_entropy", "lambda"];
        if headers.len() != want.len() || headers.iter().zip(want).any(|(h, w)| h != w) {
            return Err(Error::WeightParse {
                line: 1,
                msg: format!("expected header {want:?}"),
            });
        }
        let mut entries = BTreeMap::new();
        for (n, record) in rdr.records().enumerate() {
            let line = n + 2;
            let record = record.map_err(|e| Error::WeightParse {
                line,
                msg: e.to_string(),
            })?;
            let field = |i: usize| -> &str { record.get(i).unwrap_or("") };
            let parse = |i: usize, what: &str| -> Result<f64> {
                field(i).trim().parse().map_err(|_| Error::WeightParse {
                    line,
                    msg: format!("bad {what}: {:?}", field(i)),
                })
            };
            let d_azimuth = parse(0, "d_azimuth")? as i32;
            let d_elevation = parse(1, "d_elevation")? as i32;
            let mean_cross_entropy = parse(2, "mean_cross_entropy")?;
            let lambda = parse(3, "lambda")?;
            if !lambda.is_finite() || lambda <= 0.0 {
                return Err(Error::WeightParse {
                    line,
                    msg: format!("lambda must be finite and positive, got {lambda}"),
                });
            }
            let pose = RelativePose::new(d_azimuth, d_elevation);
            if grid.canonical_pose(d_azimuth as i64, d_elevation) != pose {
                return Err(Error::WeightParse {
                    line,
                    msg: format!("pose ({d_azimuth}, {d_elevation}) is not canonical"),
                });
            }
            if entries
                .insert(
                    pose,
                    WeightEntry {
                        mean_cross_entropy,
                        lambda,
                    },
                )
                .is_some()
            {
                return Err(Error::WeightParse {
                    line,
                    msg: format!("duplicate pose ({d_azimuth}, {d_elevation})"),
                });
            }
        }
        Self::from_entries(grid, entries)
    }

    pub fn load_csv<P: AsRef<Path>>(grid: &GridSpec, path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(grid, std::io::BufReader::new(file))
    }
}

/// Parameters for weight learning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// Training pairs sampled per pose.
    pub min_samples: usize,
    /// Sharpness of the cross-entropy to weight mapping.
    pub beta: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            min_samples: 50,
            beta: 1.0,
        }
    }
}

impl WeightParams {
    fn validate(&self) -> Result<()> {
        if self.min_samples == 0 {
            return Err(Error::InvalidParameter(
                "min_samples must be at least 1".into(),
            ));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Views from which `pose` can be applied without leaving the grid,
/// in flat-index order.
pub(crate) fn pose_sources(grid: &GridSpec, pose: RelativePose) -> Vec<ViewIndex> {
    grid.all_views()
        .filter(|v| matches!(grid.apply_pose(*v, pose), Ok(Some(_))))
        .collect()
}

/// Core learning loop shared by both oracles. `sample` draws one training
/// pair with the requested source and target view and returns its
/// classification cross entropy.
fn learn_weights_with<R, F>(
    grid: &GridSpec,
    params: &WeightParams,
    rng: &mut R,
    mut sample: F,
) -> Result<WeightTable>
where
    R: Rng + ?Sized,
    F: FnMut(ViewIndex, ViewIndex, &mut R) -> Result<f64>,
{
    params.validate()?;
    let mut entries = BTreeMap::new();
    for pose in grid.all_poses() {
        let sources = pose_sources(grid, pose);
        if sources.is_empty() {
            return Err(Error::PoseCoverage {
                d_azimuth: pose.d_azimuth,
                d_elevation: pose.d_elevation,
            });
        }
        let mut total = 0.0;
        for _ in 0..params.min_samples {
            let a = sources[rng.random_range(0..sources.len())];
            let b = grid
                .apply_pose(a, pose)?
                .expect("sources admit the pose by construction");
            total += sample(a, b, rng)?;
        }
        let mean = total / params.min_samples as f64;
        entries.insert(
            pose,
            WeightEntry {
                mean_cross_entropy: mean,
                lambda: (-params.beta * mean).exp(),
            },
        );
    }
    WeightTable::from_entries(grid, entries)
}

/// Learns fusion weights from a synthetic world. `object_classes` lists the
/// class label of every training object; each sampled pair draws an object,
/// then a source view admitting the pose, then noisy observations of both
/// views.
pub fn learn_weights<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    object_classes: &[usize],
    params: &WeightParams,
    rng: &mut R,
) -> Result<WeightTable> {
    if object_classes.is_empty() {
        return Err(Error::EmptyInput("training objects"));
    }
    let grid = *world.grid();
    learn_weights_with(&grid, params, rng, |a, b, rng| {
        let class = object_classes[rng.random_range(0..object_classes.len())];
        let obs_a = world.observe(class, a, rng)?;
        let obs_b = world.observe(class, b, rng)?;
        let pair = ViewPair::new(&grid, obs_a, obs_b)?;
        Ok(cross_entropy(&world.pair_distribution(&pair)?, class))
    })
}

/// Learns fusion weights from an ingested score table, sampling among the
/// listed object indices.
pub fn learn_weights_from_scores<R: Rng + ?Sized>(
    table: &ScoreTable,
    objects: &[usize],
    params: &WeightParams,
    rng: &mut R,
) -> Result<WeightTable> {
    if objects.is_empty() {
        return Err(Error::EmptyInput("training objects"));
    }
    let grid = *table.grid();
    learn_weights_with(&grid, params, rng, |a, b, rng| {
        let object = objects[rng.random_range(0..objects.len())];
        let dist = table.posterior_from_scores(object, &[a, b])?;
        Ok(cross_entropy(&dist, table.object_class(object)))
    })
}

/// Pair subset selection ahead of fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSelect {
    /// Keep every pair.
    All,
    /// Keep the min(M, N) pairs with the largest weights.
    Best,
}

/// Indices of the pairs to fuse, ascending. For [`PairSelect::Best`],
/// `lambdas` ranks the pairs; ties keep the earlier pair.
pub fn select_pairs(
    lambdas: &[f64],
    num_views: usize,
    mode: PairSelect,
) -> Vec<usize> {
    match mode {
        PairSelect::All => (0..lambdas.len()).collect(),
        PairSelect::Best => {
            let keep = num_views.min(lambdas.len());
            let mut order: Vec<usize> = (0..lambdas.len()).collect();
            order.sort_by(|&i, &j| {
                lambdas[j]
                    .partial_cmp(&lambdas[i])
                    .expect("weights are finite")
                    .then(i.cmp(&j))
            });
            let mut chosen: Vec<usize> = order.into_iter().take(keep).collect();
            chosen.sort_unstable();
            chosen
        }
    }
}

/// Weighted-average fusion of per-pair class distributions, renormalised to
/// unit mass. `lambdas: None` averages uniformly.
pub fn fuse(dists: &[ClassDistribution], lambdas: Option<&[f64]>) -> Result<ClassDistribution> {
    if let Some(l) = lambdas {
        if l.len() != dists.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} distributions",
                l.len(),
                dists.len()
            )));
        }
    }
    fuse_iter(
        dists
            .iter()
            .enumerate()
            .map(|(i, d)| (lambdas.map_or(1.0, |l| l[i]), d)),
    )
}

fn fuse_iter<'a, I>(items: I) -> Result<ClassDistribution>
where
    I: Iterator<Item = (f64, &'a ClassDistribution)>,
{
    let mut acc: Vec<f64> = Vec::new();
    let mut any_weight = false;
    let mut count = 0usize;
    for (w, d) in items {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "fusion weight {w} is not a finite non-negative value"
            )));
        }
        if acc.is_empty() {
            acc = vec![0.0; d.num_classes()];
        } else if acc.len() != d.num_classes() {
            return Err(Error::InvalidParameter(
                "fused distributions must share a class count".into(),
            ));
        }
        for (a, p) in acc.iter_mut().zip(d.probs()) {
            *a += w * p;
        }
        any_weight |= w > 0.0;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput("distributions to fuse"));
    }
    if !any_weight {
        return Err(Error::InvalidParameter(
            "fusion weights sum to zero".into(),
        ));
    }
    let total: f64 = acc.iter().sum();
    for a in &mut acc {
        *a /= total;
    }
    ClassDistribution::new(acc)
}

/// One classified view pair inside a [`SequenceRecord`].
#[derive(Debug, Clone)]
pub struct PairRecord {
    pub a: usize,
    pub b: usize,
    pub pose: RelativePose,
    pub dist: ClassDistribution,
    /// Fusion weight of this pair's pose, when a table was supplied.
    pub lambda: Option<f64>,
}

/// Ordered observations of one episode plus every derived pair
/// distribution, maintained incrementally as views arrive.
///
/// The pair list always equals `enumerate_pairs(len())`: each pushed view
/// appends one pair per existing view, so the first m(m-1)/2 entries cover
/// exactly the first m observations.
#[derive(Debug, Clone)]
pub struct SequenceRecord {
    grid: GridSpec,
    observations: Vec<Observation>,
    singles: Vec<ClassDistribution>,
    pairs: Vec<PairRecord>,
}

impl SequenceRecord {
    pub fn new(grid: GridSpec) -> Self {
        SequenceRecord {
            grid,
            observations: Vec::new(),
            singles: Vec::new(),
            pairs: Vec::new(),
        }
    }

    /// Builds a record from a full observation list.
    pub fn build<O: PairOracle>(
        grid: GridSpec,
        oracle: &O,
        observations: Vec<Observation>,
        weights: Option<&WeightTable>,
    ) -> Result<Self> {
        let mut rec = SequenceRecord::new(grid);
        for obs in observations {
            rec.push(obs, oracle, weights)?;
        }
        Ok(rec)
    }

    /// Appends one observation, classifying it alone and paired with every
    /// earlier observation.
    pub fn push<O: PairOracle>(
        &mut self,
        obs: Observation,
        oracle: &O,
        weights: Option<&WeightTable>,
    ) -> Result<()> {
        let single = oracle.single_distribution(&obs)?;
        let j = self.observations.len();
        let mut new_pairs = Vec::with_capacity(j);
        for (i, earlier) in self.observations.iter().enumerate() {
            let pair = ViewPair::new(&self.grid, earlier.clone(), obs.clone())?;
            let pose = pair.pose();
            let dist = oracle.pair_distribution(&pair)?;
            let lambda = match weights {
                Some(table) => Some(table.lambda(pose)?),
                None => None,
            };
            new_pairs.push(PairRecord {
                a: i,
                b: j,
                pose,
                dist,
                lambda,
            });
        }
        self.observations.push(obs);
        self.singles.push(single);
        self.pairs.extend(new_pairs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn singles(&self) -> &[ClassDistribution] {
        &self.singles
    }

    pub fn pairs(&self) -> &[PairRecord] {
        &self.pairs
    }
}

/// How a sequence is turned into one fused distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionSettings {
    pub select: PairSelect,
    /// Use learned weights in the average; otherwise all kept pairs count
    /// equally.
    pub weighted: bool,
}

/// Classifies the first `prefix` observations of a record.
///
/// A single observation falls back to its single-view posterior; with two or
/// more, the pair decomposition applies. Best selection and weighted fusion
/// both require the record to have been built with a weight table.
pub fn classify_prefix(
    record: &SequenceRecord,
    prefix: usize,
    settings: FusionSettings,
) -> Result<(usize, ClassDistribution)> {
    if prefix == 0 || record.is_empty() {
        return Err(Error::EmptyInput("observations to classify"));
    }
    if prefix > record.len() {
        return Err(Error::InvalidParameter(format!(
            "prefix {prefix} exceeds record length {}",
            record.len()
        )));
    }
    if prefix == 1 {
        let dist = record.singles[0].clone();
        return Ok((dist.argmax(), dist));
    }
    let pairs = &record.pairs[..prefix * (prefix - 1) / 2];
    let need_lambda = settings.weighted || settings.select == PairSelect::Best;
    let lambdas: Vec<f64> = if need_lambda {
        pairs
            .iter()
            .map(|p| {
                p.lambda.ok_or(Error::InvalidParameter(
                    "weighted fusion or Best selection requires a weight table".into(),
                ))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let chosen = match settings.select {
        PairSelect::All => select_pairs(&vec![0.0; pairs.len()], prefix, PairSelect::All),
        PairSelect::Best => select_pairs(&lambdas, prefix, PairSelect::Best),
    };
    let fused = fuse_iter(chosen.iter().map(|&i| {
        let w = if settings.weighted { lambdas[i] } else { 1.0 };
        (w, &pairs[i].dist)
    }))?;
    Ok((fused.argmax(), fused))
}

/// Classifies a whole record. See [`classify_prefix`].
pub fn classify_sequence(
    record: &SequenceRecord,
    settings: FusionSettings,
) -> Result<(usize, ClassDistribution)> {
    classify_prefix(record, record.len(), settings)
}

/// Baseline fusion: averages the single-view posteriors of the first
/// `prefix` observations and takes the argmax.
pub fn vote_prefix(record: &SequenceRecord, prefix: usize) -> Result<usize> {
    if prefix == 0 || record.is_empty() {
        return Err(Error::EmptyInput("observations to vote on"));
    }
    if prefix > record.len() {
        return Err(Error::InvalidParameter(format!(
            "prefix {prefix} exceeds record length {}",
            record.len()
        )));
    }
    let fused = fuse_iter(record.singles[..prefix].iter().map(|d| (1.0, d)))?;
    Ok(fused.argmax())
}

/// Baseline fusion over raw observations: averages single-view posteriors.
pub fn vote_views<O: PairOracle>(oracle: &O, observations: &[Observation]) -> Result<usize> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("observations to vote on"));
    }
    let singles: Vec<ClassDistribution> = observations
        .iter()
        .map(|o| oracle.single_distribution(o))
        .collect::<Result<_>>()?;
    let fused = fuse_iter(singles.iter().map(|d| (1.0, d)))?;
    Ok(fused.argmax())
}
