//! Active view selection.
//!
//! Two fitted artifacts drive the exploration strategies: an [`NbvPolicy`]
//! that maps any observation to the most informative partner view for its
//! apparent class, and a [`QualityPredictor`] that estimates how well a
//! (view, target) pair will classify, feeding the trajectory planner in
//! [`state`]. Both dispatch raw observations by nearest stored signature,
//! so they become exact as observation noise vanishes.

pub mod episode;
pub mod state;

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fusion::cross_entropy;
use crate::sensorium::{Observation, SyntheticWorld, ViewPair};
use crate::viewsphere::{GridSpec, RelativePose, ViewIndex};

/// Planner lookahead depth used when no explicit cap is given.
pub const DEFAULT_PLANNING_HORIZON: usize = 5;

/// Resolution of the quality grid: predicted qualities are snapped to
/// multiples of 2^-40.
const QUALITY_SCALE: f64 = (1u64 << 40) as f64;

/// Converts a predicted cross entropy into a bounded quality in (0, 1],
/// snapped to the 2^-40 grid.
///
/// The snap makes every quality an exact binary fraction, so sums of up to
/// 2^13 of them stay exactly representable in an f64. Trajectory scores are
/// such sums; keeping them exact makes planning independent of summation
/// order.
pub fn quality_from_entropy(h: f64) -> f64 {
    let q = ((-h).exp() * QUALITY_SCALE).round() / QUALITY_SCALE;
    q.max(1.0 / QUALITY_SCALE).min(1.0)
}

/// Noise-free reference signatures for every (class, view) cell, used to
/// dispatch raw observations the way the trained networks dispatch images.
#[derive(Debug, Clone)]
pub struct SignatureBank {
    grid: GridSpec,
    num_classes: usize,
    feature_dim: usize,
    data: Vec<f64>,
}

impl SignatureBank {
    pub fn from_world(world: &SyntheticWorld) -> Result<Self> {
        let grid = *world.grid();
        let views = grid.num_views();
        let dim = world.feature_dim();
        let mut data = Vec::with_capacity(world.num_classes() * views * dim);
        for class in 0..world.num_classes() {
            for view in grid.all_views() {
                data.extend_from_slice(world.signature(class, view)?);
            }
        }
        Ok(SignatureBank {
            grid,
            num_classes: world.num_classes(),
            feature_dim: dim,
            data,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// The (class, view) cell whose signature is nearest to `features` in
    /// Euclidean distance. Ties go to the lowest class, then the lowest
    /// flat view index.
    pub fn dispatch(&self, features: &[f64]) -> Result<(usize, ViewIndex)> {
        if features.len() != self.feature_dim {
            return Err(Error::InvalidParameter(format!(
                "observation has {} features, bank stores {}",
                features.len(),
                self.feature_dim
            )));
        }
        let views = self.grid.num_views();
        let mut best = (f64::INFINITY, 0usize);
        for cell in 0..self.num_classes * views {
            let sig = &self.data[cell * self.feature_dim..(cell + 1) * self.feature_dim];
            let d: f64 = sig
                .iter()
                .zip(features)
                .map(|(s, x)| (x - s) * (x - s))
                .sum();
            if d < best.0 {
                best = (d, cell);
            }
        }
        let (_, cell) = best;
        Ok((cell / views, ViewIndex::from_flat(&self.grid, cell % views)))
    }
}

/// Candidate scope for the next-best-view rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbvMode {
    /// The whole sphere is reachable.
    Global,
    /// Only views adjacent to the current one are considered, falling back
    /// to the sphere-wide ranking once the neighborhood is exhausted.
    Adjacent,
}

/// Per-(class, view) next-best-view lookup with a full partner ranking for
/// fallbacks.
#[derive(Debug, Clone)]
pub struct NbvPolicy {
    bank: SignatureBank,
    /// Best relative motion per cell.
    best: Vec<RelativePose>,
    /// All partner views per cell, most informative first.
    ranking: Vec<Vec<ViewIndex>>,
    /// Rank of each (cell, view); the cell's own view ranks last.
    rank: Vec<u16>,
}

impl NbvPolicy {
    /// Evaluates every partner view of every (class, view) cell on
    /// noise-free signature pairs and ranks partners by the posterior mass
    /// they give the true class. Ranking ties prefer the lexicographically
    /// smaller relative pose.
    pub fn build(world: &SyntheticWorld) -> Result<Self> {
        let bank = SignatureBank::from_world(world)?;
        let grid = bank.grid;
        let views = grid.num_views();
        let mut best = Vec::with_capacity(bank.num_classes * views);
        let mut ranking = Vec::with_capacity(bank.num_classes * views);
        let mut rank = vec![u16::MAX; bank.num_classes * views * views];
        for class in 0..bank.num_classes {
            for view in grid.all_views() {
                let mut scored: Vec<(f64, RelativePose, ViewIndex)> = grid
                    .all_views()
                    .filter(|w| *w != view)
                    .map(|w| {
                        let pair = ViewPair::new(
                            &grid,
                            Observation::new(world.signature(class, view)?.to_vec(), view),
                            Observation::new(world.signature(class, w)?.to_vec(), w),
                        )?;
                        let p = world.pair_posterior(&pair)?.prob(class);
                        Ok((p, grid.relative_pose(view, w)?, w))
                    })
                    .collect::<Result<_>>()?;
                scored.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .expect("posteriors are finite")
                        .then(a.1.cmp(&b.1))
                });
                let cell = class * views + view.flat(&grid);
                for (r, (_, _, w)) in scored.iter().enumerate() {
                    rank[cell * views + w.flat(&grid)] = r as u16;
                }
                best.push(scored[0].1);
                ranking.push(scored.into_iter().map(|(_, _, w)| w).collect());
            }
        }
        Ok(NbvPolicy {
            bank,
            best,
            ranking,
            rank,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.bank.grid()
    }

    pub fn num_classes(&self) -> usize {
        self.bank.num_classes
    }

    fn cell(&self, class: usize, view: ViewIndex) -> usize {
        class * self.bank.grid.num_views() + view.flat(&self.bank.grid)
    }

    /// The stored best relative motion for a cell.
    pub fn best_pose(&self, class: usize, view: ViewIndex) -> Result<RelativePose> {
        self.check_cell(class, view)?;
        Ok(self.best[self.cell(class, view)])
    }

    /// Partner views of a cell, most informative first.
    pub fn ranking(&self, class: usize, view: ViewIndex) -> Result<&[ViewIndex]> {
        self.check_cell(class, view)?;
        Ok(&self.ranking[self.cell(class, view)])
    }

    fn check_cell(&self, class: usize, view: ViewIndex) -> Result<()> {
        if class >= self.bank.num_classes {
            return Err(Error::InvalidParameter(format!(
                "class {class} out of range, policy has {} classes",
                self.bank.num_classes
            )));
        }
        self.bank.grid.check(view)
    }

    pub fn dispatch(&self, obs: &Observation) -> Result<(usize, ViewIndex)> {
        self.bank.dispatch(&obs.features)
    }

    /// Selects the next view to move to after `obs`, avoiding views already
    /// in `visited` (a flat-indexed flag per grid view).
    ///
    /// The observation is dispatched to its nearest signature cell. Global
    /// mode applies the cell's stored motion to the actual current view;
    /// Adjacent mode picks the best-ranked unvisited neighbor. When the
    /// preferred move is visited or unrealisable, the cell's sphere-wide
    /// ranking supplies the best unvisited view instead.
    pub fn nbv_next(
        &self,
        obs: &Observation,
        mode: NbvMode,
        visited: &[bool],
    ) -> Result<ViewIndex> {
        let grid = self.bank.grid;
        let views = grid.num_views();
        if visited.len() != views {
            return Err(Error::InvalidParameter(format!(
                "visited flags have length {}, grid has {} views",
                visited.len(),
                views
            )));
        }
        grid.check(obs.view)?;
        if visited.iter().all(|&v| v) {
            return Err(Error::EpisodeComplete);
        }
        let (class, _) = self.dispatch(obs)?;
        let cell = self.cell(class, obs.view);
        match mode {
            NbvMode::Global => {
                if let Some(target) = grid.apply_pose(obs.view, self.best[cell])? {
                    if !visited[target.flat(&grid)] {
                        return Ok(target);
                    }
                }
            }
            NbvMode::Adjacent => {
                let mut best: Option<(u16, ViewIndex)> = None;
                for n in grid.neighbors(obs.view)? {
                    if visited[n.flat(&grid)] {
                        continue;
                    }
                    let r = self.rank[cell * views + n.flat(&grid)];
                    if best.is_none_or(|(br, _)| r < br) {
                        best = Some((r, n));
                    }
                }
                if let Some((_, n)) = best {
                    return Ok(n);
                }
            }
        }
        for &w in &self.ranking[cell] {
            if !visited[w.flat(&grid)] {
                return Ok(w);
            }
        }
        // Only the dispatched cell's own view can be missing from its
        // ranking, so reaching this scan requires a dispatch mismatch.
        for w in grid.all_views() {
            if !visited[w.flat(&grid)] {
                return Ok(w);
            }
        }
        Err(Error::EpisodeComplete)
    }

    /// Writes one row per cell: `class,azimuth,elevation,best_d_azimuth,best_d_elevation`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "class,azimuth,elevation,best_d_azimuth,best_d_elevation"
        )?;
        let grid = self.bank.grid;
        for class in 0..self.bank.num_classes {
            for view in grid.all_views() {
                let pose = self.best[self.cell(class, view)];
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    class, view.azimuth, view.elevation, pose.d_azimuth, pose.d_elevation
                )?;
            }
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Sampled mean cross entropy for every (class, view, target view) triple,
/// with nearest-signature dispatch. The planner consumes these through
/// [`quality_from_entropy`].
#[derive(Debug, Clone)]
pub struct QualityPredictor {
    bank: SignatureBank,
    samples: usize,
    /// Flat over ((class * views + view) * views + target).
    h: Vec<f64>,
}

impl QualityPredictor {
    /// Estimates every cell by averaging the classification cross entropy
    /// of `samples` independently drawn noisy observation pairs.
    pub fn fit<R: Rng + ?Sized>(
        world: &SyntheticWorld,
        samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidParameter(
                "quality fitting needs at least one sample per cell".into(),
            ));
        }
        let bank = SignatureBank::from_world(world)?;
        let grid = bank.grid;
        let views = grid.num_views();
        let mut h = Vec::with_capacity(bank.num_classes * views * views);
        for class in 0..bank.num_classes {
            for view in grid.all_views() {
                for target in grid.all_views() {
                    let mut total = 0.0;
                    for _ in 0..samples {
                        let a = world.observe(class, view, rng)?;
                        let b = world.observe(class, target, rng)?;
                        let pair = ViewPair::new(&grid, a, b)?;
                        total += cross_entropy(&world.pair_posterior(&pair)?, class);
                    }
                    h.push(total / samples as f64);
                }
            }
        }
        Ok(QualityPredictor { bank, samples, h })
    }

    pub fn grid(&self) -> &GridSpec {
        self.bank.grid()
    }

    pub fn num_classes(&self) -> usize {
        self.bank.num_classes
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn index(&self, class: usize, view: ViewIndex, target: ViewIndex) -> usize {
        let views = self.bank.grid.num_views();
        (class * views + view.flat(&self.bank.grid)) * views + target.flat(&self.bank.grid)
    }

    /// Predicted mean cross entropy when `view`'s observation of `class`
    /// is paired with one from `target`.
    pub fn h_hat(&self, class: usize, view: ViewIndex, target: ViewIndex) -> Result<f64> {
        self.check(class, view, target)?;
        Ok(self.h[self.index(class, view, target)])
    }

    /// Predicted pair quality in (0, 1], snapped to the exact-sum grid.
    pub fn quality(&self, class: usize, view: ViewIndex, target: ViewIndex) -> Result<f64> {
        Ok(quality_from_entropy(self.h_hat(class, view, target)?))
    }

    fn check(&self, class: usize, view: ViewIndex, target: ViewIndex) -> Result<()> {
        if class >= self.bank.num_classes {
            return Err(Error::InvalidParameter(format!(
                "class {class} out of range, predictor has {} classes",
                self.bank.num_classes
            )));
        }
        self.bank.grid.check(view)?;
        self.bank.grid.check(target)
    }

    pub fn dispatch(&self, obs: &Observation) -> Result<(usize, ViewIndex)> {
        self.bank.dispatch(&obs.features)
    }

    /// Writes one row per triple:
    /// `class,azimuth,elevation,target_azimuth,target_elevation,h_hat`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "class,azimuth,elevation,target_azimuth,target_elevation,h_hat"
        )?;
        let grid = self.bank.grid;
        for class in 0..self.bank.num_classes {
            for view in grid.all_views() {
                for target in grid.all_views() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        class,
                        view.azimuth,
                        view.elevation,
                        target.azimuth,
                        target.elevation,
                        self.h[self.index(class, view, target)]
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// The fitted pair used by the active strategies.
#[derive(Debug, Clone)]
pub struct PolicySet {
    pub nbv: NbvPolicy,
    pub quality: QualityPredictor,
}

impl PolicySet {
    pub fn fit<R: Rng + ?Sized>(
        world: &SyntheticWorld,
        samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(PolicySet {
            nbv: NbvPolicy::build(world)?,
            quality: QualityPredictor::fit(world, samples, rng)?,
        })
    }
}
