//! Observation models.
//!
//! Two interchangeable classifier oracles live here: a seeded synthetic
//! world with closed-form Gaussian posteriors ([`SyntheticWorld`]) and an
//! ingested table of per-view class scores ([`ScoreTable`]). Both expose
//! exact per-view and per-pair class distributions through [`PairOracle`].

mod scores;
mod world;

pub use scores::{ObjectScores, ScoreRow, ScoreTable};
pub use world::{AmbiguityProfile, SyntheticWorld, WorldParams};

use crate::error::{Error, Result};
use crate::viewsphere::{GridSpec, RelativePose, ViewIndex};

/// Tolerance on the total probability mass of a [`ClassDistribution`].
pub const DIST_SUM_TOL: f64 = 1e-9;

/// A feature vector captured at a known grid view.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub view: ViewIndex,
}

impl Observation {
    pub fn new(features: Vec<f64>, view: ViewIndex) -> Self {
        Observation { features, view }
    }
}

/// A probability distribution over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates non-negativity and unit mass (within [`DIST_SUM_TOL`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("class distribution"));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "class probability {p} is not a finite non-negative value"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "class probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn uniform(num_classes: usize) -> Self {
        ClassDistribution {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    /// Normalises unnormalised log scores. The computation stays in the log
    /// domain (max subtraction before exponentiation), so inputs may be
    /// arbitrarily small without underflowing to an all-zero vector.
    pub fn from_log_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput("log score vector"));
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidParameter(
                "log scores must contain at least one finite entry".into(),
            ));
        }
        let mut probs: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Ok(ClassDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Most probable class; ties resolve to the lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Two observations of the same object plus their relative pose.
///
/// The pose is always derived from the two views at construction time, so it
/// cannot drift out of sync with them.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    obs_a: Observation,
    obs_b: Observation,
    pose: RelativePose,
}

impl ViewPair {
    pub fn new(grid: &GridSpec, obs_a: Observation, obs_b: Observation) -> Result<Self> {
        let pose = grid.relative_pose(obs_a.view, obs_b.view)?;
        Ok(ViewPair { obs_a, obs_b, pose })
    }

    pub fn obs_a(&self) -> &Observation {
        &self.obs_a
    }

    pub fn obs_b(&self) -> &Observation {
        &self.obs_b
    }

    pub fn pose(&self) -> RelativePose {
        self.pose
    }
}

/// A classifier oracle that scores single views and view pairs.
pub trait PairOracle {
    fn num_classes(&self) -> usize;

    /// Class posterior given one observation.
    fn single_distribution(&self, obs: &Observation) -> Result<ClassDistribution>;

    /// Class posterior given both observations of a pair.
    fn pair_distribution(&self, pair: &ViewPair) -> Result<ClassDistribution>;
}
