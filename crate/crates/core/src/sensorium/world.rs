//! Seeded synthetic recognition world.
//!
//! Each class carries one feature signature per grid view. A per-view
//! ambiguity in [0, 1] blends all class signatures toward their common mean,
//! so ambiguity 0 leaves views fully discriminative and ambiguity 1 makes
//! every class look identical from that view. Observations add isotropic
//! Gaussian noise. Because the generative model is known, the exact Bayes
//! posterior under a uniform class prior is available in closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, STREAM_WORLD};
use crate::sensorium::{ClassDistribution, Observation, PairOracle, ViewPair};
use crate::viewsphere::{GridSpec, ViewIndex};

/// Per-view ambiguity specification, resolved to one value per view when a
/// world is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmbiguityProfile {
    /// The same ambiguity everywhere.
    Constant { value: f64 },
    /// One base value per elevation row, plus an optional seeded per-view
    /// jitter drawn uniformly from [-jitter, +jitter] and clamped to [0, 1].
    PerElevation {
        values: Vec<f64>,
        #[serde(default)]
        jitter: f64,
    },
    /// An explicit value for every view, in flat-index order.
    PerView { values: Vec<f64> },
}

impl AmbiguityProfile {
    fn check_unit(value: f64, what: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{what} must lie in [0, 1], got {value}"
            )));
        }
        Ok(())
    }

    /// One ambiguity per view in flat order.
    pub fn resolve<R: Rng + ?Sized>(&self, grid: &GridSpec, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            AmbiguityProfile::Constant { value } => {
                Self::check_unit(*value, "ambiguity")?;
                Ok(vec![*value; grid.num_views()])
            }
            AmbiguityProfile::PerElevation { values, jitter } => {
                if values.len() != grid.elevation_steps {
                    return Err(Error::InvalidParameter(format!(
                        "per-elevation ambiguity needs {} values, got {}",
                        grid.elevation_steps,
                        values.len()
                    )));
                }
                for &v in values {
                    Self::check_unit(v, "ambiguity")?;
                }
                Self::check_unit(*jitter, "ambiguity jitter")?;
                let mut out = Vec::with_capacity(grid.num_views());
                for view in grid.all_views() {
                    let base = values[view.elevation];
                    let wobble = if *jitter > 0.0 {
                        rng.random_range(-*jitter..=*jitter)
                    } else {
                        0.0
                    };
                    out.push((base + wobble).clamp(0.0, 1.0));
                }
                Ok(out)
            }
            AmbiguityProfile::PerView { values } => {
                if values.len() != grid.num_views() {
                    return Err(Error::InvalidParameter(format!(
                        "per-view ambiguity needs {} values, got {}",
                        grid.num_views(),
                        values.len()
                    )));
                }
                for &v in values {
                    Self::check_unit(v, "ambiguity")?;
                }
                Ok(values.clone())
            }
        }
    }
}

/// Generation parameters for a [`SyntheticWorld`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Observation noise standard deviation. Zero is allowed and switches
    /// the posteriors to their exact noise-free limit.
    pub noise_sigma: f64,
    pub ambiguity: AmbiguityProfile,
    /// Angular correlation length of class appearance, in grid steps: a
    /// signature field is smoothed over neighbouring views so nearby
    /// viewpoints look alike and carry redundant evidence, as they do for
    /// real objects. Zero leaves every view independent.
    #[serde(default)]
    pub view_correlation_length: f64,
}

/// Convolves the raw signature field with a Gaussian kernel over angular
/// distance (circular in azimuth), renormalised per view so the marginal
/// distribution stays standard normal.
fn smooth_over_views(grid: &GridSpec, params: &WorldParams, base: &[f64]) -> Vec<f64> {
    let views = grid.num_views();
    let dim = params.feature_dim;
    let scale = 2.0 * params.view_correlation_length * params.view_correlation_length;
    let all: Vec<ViewIndex> = grid.all_views().collect();
    let mut kernel = vec![0.0; views * views];
    let mut norm = vec![0.0; views];
    for (i, u) in all.iter().enumerate() {
        let mut sq = 0.0;
        for (j, v) in all.iter().enumerate() {
            let wrap = (u.azimuth as i64 - v.azimuth as i64).unsigned_abs() as usize;
            let daz = wrap.min(grid.azimuth_steps - wrap) as f64;
            let del = u.elevation as f64 - v.elevation as f64;
            let k = if i == j {
                1.0
            } else {
                (-(daz * daz + del * del) / scale).exp()
            };
            kernel[i * views + j] = k;
            sq += k * k;
        }
        norm[i] = sq.sqrt();
    }
    let mut out = vec![0.0; base.len()];
    for c in 0..params.num_classes {
        for i in 0..views {
            for j in 0..views {
                let k = kernel[i * views + j];
                for d in 0..dim {
                    out[(c * views + i) * dim + d] += k * base[(c * views + j) * dim + d];
                }
            }
            for d in 0..dim {
                out[(c * views + i) * dim + d] /= norm[i];
            }
        }
    }
    out
}

/// A fully specified synthetic recognition problem.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    seed: u64,
    grid: GridSpec,
    num_classes: usize,
    feature_dim: usize,
    noise_sigma: f64,
    ambiguity: Vec<f64>,
    /// Blended signatures, indexed (class * views + view) * feature_dim.
    signatures: Vec<f64>,
}

impl SyntheticWorld {
    /// Generates the world deterministically from `seed`. The same seed and
    /// parameters always produce bitwise identical signature tables.
    pub fn generate(seed: u64, grid: GridSpec, params: &WorldParams) -> Result<Self> {
        grid.validate()?;
        if params.num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "a recognition world needs at least 2 classes, got {}",
                params.num_classes
            )));
        }
        if params.feature_dim == 0 {
            return Err(Error::InvalidParameter(
                "feature_dim must be at least 1".into(),
            ));
        }
        if !params.noise_sigma.is_finite() || params.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be finite and non-negative, got {}",
                params.noise_sigma
            )));
        }
        if !params.view_correlation_length.is_finite() || params.view_correlation_length < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "view_correlation_length must be finite and non-negative, got {}",
                params.view_correlation_length
            )));
        }

        let views = grid.num_views();
        let dim = params.feature_dim;
        let mut rng = seed::stream(seed, &[STREAM_WORLD]);

        // Draw base signatures first, then the ambiguity jitter, in a fixed
        // order; reordering would silently change every derived number.
        let mut base = Vec::with_capacity(params.num_classes * views * dim);
        for _ in 0..params.num_classes * views * dim {
            base.push(rng.sample::<f64, _>(StandardNormal));
        }
        let ambiguity = params.ambiguity.resolve(&grid, &mut rng)?;

        if params.view_correlation_length > 0.0 {
            base = smooth_over_views(&grid, params, &base);
        }

        // Blend every class signature toward the per-view class mean.
        let mut signatures = vec![0.0; base.len()];
        for v in 0..views {
            for d in 0..dim {
                let mut mean = 0.0;
                for c in 0..params.num_classes {
                    mean += base[(c * views + v) * dim + d];
                }
                mean /= params.num_classes as f64;
                let a = ambiguity[v];
                for c in 0..params.num_classes {
                    let idx = (c * views + v) * dim + d;
                    signatures[idx] = (1.0 - a) * base[idx] + a * mean;
                }
            }
        }

        Ok(SyntheticWorld {
            seed,
            grid,
            num_classes: params.num_classes,
            feature_dim: dim,
            noise_sigma: params.noise_sigma,
            ambiguity,
            signatures,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn ambiguity(&self, view: ViewIndex) -> Result<f64> {
        self.grid.check(view)?;
        Ok(self.ambiguity[view.flat(&self.grid)])
    }

    pub fn ambiguity_table(&self) -> &[f64] {
        &self.ambiguity
    }

    /// The stored (blended, noise-free) signature for one class and view.
    pub fn signature(&self, class: usize, view: ViewIndex) -> Result<&[f64]> {
        self.check_class(class)?;
        self.grid.check(view)?;
        let idx = (class * self.grid.num_views() + view.flat(&self.grid)) * self.feature_dim;
        Ok(&self.signatures[idx..idx + self.feature_dim])
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(Error::InvalidParameter(format!(
                "class {class} out of range, world has {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Draws one noisy observation of `class` from `view`.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        class: usize,
        view: ViewIndex,
        rng: &mut R,
    ) -> Result<Observation> {
        let sig = self.signature(class, view)?;
        let features = sig
            .iter()
            .map(|&s| s + self.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Observation::new(features, view))
    }

    fn check_features(&self, obs: &Observation) -> Result<()> {
        if obs.features.len() != self.feature_dim {
            return Err(Error::InvalidParameter(format!(
                "observation has {} features, world expects {}",
                obs.features.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn squared_distance(&self, class: usize, obs: &Observation) -> Result<f64> {
        let sig = self.signature(class, obs.view)?;
        Ok(sig
            .iter()
            .zip(&obs.features)
            .map(|(s, x)| (x - s) * (x - s))
            .sum())
    }

    /// Posterior from per-class squared distances. With positive noise this
    /// is a log-domain softmax; with zero noise it is the exact limit, a
    /// uniform distribution over the classes at minimal distance.
    fn posterior_from_ssds(&self, ssds: &[f64]) -> Result<ClassDistribution> {
        if self.noise_sigma > 0.0 {
            let scale = -0.5 / (self.noise_sigma * self.noise_sigma);
            let logs: Vec<f64> = ssds.iter().map(|&d| d * scale).collect();
            ClassDistribution::from_log_scores(&logs)
        } else {
            let min = ssds.iter().cloned().fold(f64::INFINITY, f64::min);
            let hits = ssds.iter().filter(|&&d| d == min).count();
            let probs = ssds
                .iter()
                .map(|&d| if d == min { 1.0 / hits as f64 } else { 0.0 })
                .collect();
            ClassDistribution::new(probs)
        }
    }

    /// Exact Bayes posterior for a single observation under a uniform prior.
    pub fn single_posterior(&self, obs: &Observation) -> Result<ClassDistribution> {
        self.check_features(obs)?;
        let ssds: Vec<f64> = (0..self.num_classes)
            .map(|c| self.squared_distance(c, obs))
            .collect::<Result<_>>()?;
        self.posterior_from_ssds(&ssds)
    }

    /// Exact Bayes posterior for a view pair: per-class likelihoods multiply
    /// across the two conditionally independent observations.
    pub fn pair_posterior(&self, pair: &ViewPair) -> Result<ClassDistribution> {
        self.check_features(pair.obs_a())?;
        self.check_features(pair.obs_b())?;
        let ssds: Vec<f64> = (0..self.num_classes)
            .map(|c| {
                Ok(self.squared_distance(c, pair.obs_a())?
                    + self.squared_distance(c, pair.obs_b())?)
            })
            .collect::<Result<_>>()?;
        self.posterior_from_ssds(&ssds)
    }
}

impl PairOracle for SyntheticWorld {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn single_distribution(&self, obs: &Observation) -> Result<ClassDistribution> {
        self.single_posterior(obs)
    }

    fn pair_distribution(&self, pair: &ViewPair) -> Result<ClassDistribution> {
        self.pair_posterior(pair)
    }
}
