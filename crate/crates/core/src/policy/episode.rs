//! Episode execution: one object, one start view, one exploration strategy.
//!
//! An episode observes `num_views` distinct views, moving over the sphere
//! under the strategy's rules, and records every observation in a
//! [`SequenceRecord`] for later classification at any prefix length. The
//! movement path is kept separately from the observed views: passive
//! strategies may pass through already-observed views without spending
//! budget, and fallback rules occasionally jump, which is recorded as a
//! teleport.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{SequenceRecord, WeightTable};
use crate::policy::state::EpisodeState;
use crate::policy::{NbvMode, PolicySet};
use crate::sensorium::{
    ClassDistribution, Observation, ObjectScores, PairOracle, ScoreTable, SyntheticWorld,
    ViewPair,
};
use crate::viewsphere::{GridSpec, RelativePose, ViewIndex, UNIT_DIRECTIONS};

/// Exploration strategies, ordered as they appear in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform random walk over adjacent views.
    Random,
    /// Fixed direction with elevation reflection; degenerates to a random
    /// walk once the line stops yielding new views.
    Straight,
    /// Next-best-view over the whole sphere; travel is free.
    NbvGlobal,
    /// Next-best-view restricted to the current neighborhood.
    NbvAdjacent,
    /// Receding-horizon trajectory optimisation.
    Optimised,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Straight,
        Strategy::NbvGlobal,
        Strategy::NbvAdjacent,
        Strategy::Optimised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Straight => "straight",
            Strategy::NbvGlobal => "nbv_global",
            Strategy::NbvAdjacent => "nbv_adjacent",
            Strategy::Optimised => "optimised",
        }
    }

    /// Stable small integer naming this strategy in seed derivation and
    /// row ordering. Tied to the [`Strategy::ALL`] order.
    pub fn code(self) -> u64 {
        Strategy::ALL.iter().position(|st| *st == self).unwrap() as u64
    }

    /// True for strategies that need fitted policies to run.
    pub fn needs_policies(self) -> bool {
        matches!(
            self,
            Strategy::NbvGlobal | Strategy::NbvAdjacent | Strategy::Optimised
        )
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?}, expected one of: {}",
                    Strategy::ALL.map(|st| st.name()).join(", ")
                ))
            })
    }
}

/// The classifier an episode draws observations from: a synthetic world
/// bound to a class, or a score table bound to one object.
#[derive(Debug, Clone, Copy)]
pub enum EpisodeOracle<'a> {
    World {
        world: &'a SyntheticWorld,
        class: usize,
    },
    Scores(ObjectScores<'a>),
}

impl<'a> EpisodeOracle<'a> {
    pub fn world(world: &'a SyntheticWorld, class: usize) -> Result<Self> {
        if class >= world.num_classes() {
            return Err(Error::InvalidParameter(format!(
                "class {class} out of range, world has {} classes",
                world.num_classes()
            )));
        }
        Ok(EpisodeOracle::World { world, class })
    }

    pub fn scores(table: &'a ScoreTable, object: usize) -> Result<Self> {
        Ok(EpisodeOracle::Scores(table.object_oracle(object)?))
    }

    pub fn true_class(&self) -> usize {
        match self {
            EpisodeOracle::World { class, .. } => *class,
            EpisodeOracle::Scores(scores) => scores.true_class(),
        }
    }

    /// Score-table observations carry no features; their view is all the
    /// oracle needs.
    fn observe<R: Rng + ?Sized>(&self, view: ViewIndex, rng: &mut R) -> Result<Observation> {
        match self {
            EpisodeOracle::World { world, class } => world.observe(*class, view, rng),
            EpisodeOracle::Scores(_) => Ok(Observation::new(Vec::new(), view)),
        }
    }
}

impl PairOracle for EpisodeOracle<'_> {
    fn num_classes(&self) -> usize {
        match self {
            EpisodeOracle::World { world, .. } => world.num_classes(),
            EpisodeOracle::Scores(scores) => scores.num_classes(),
        }
    }

    fn single_distribution(&self, obs: &Observation) -> Result<ClassDistribution> {
        match self {
            EpisodeOracle::World { world, .. } => world.single_distribution(obs),
            EpisodeOracle::Scores(scores) => scores.single_distribution(obs),
        }
    }

    fn pair_distribution(&self, pair: &ViewPair) -> Result<ClassDistribution> {
        match self {
            EpisodeOracle::World { world, .. } => world.pair_distribution(pair),
            EpisodeOracle::Scores(scores) => scores.pair_distribution(pair),
        }
    }
}

/// Knobs for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub strategy: Strategy,
    /// Distinct views to observe.
    pub num_views: usize,
    /// Planner lookahead cap for [`Strategy::Optimised`].
    pub horizon_cap: usize,
    /// Movement steps before a wandering walk teleports to an unvisited
    /// view; `None` derives 16 moves per grid view.
    pub movement_cap: Option<usize>,
    /// Fixed direction for [`Strategy::Straight`]; `None` draws one of the
    /// eight unit directions.
    pub straight_direction: Option<RelativePose>,
}

impl EpisodeOptions {
    pub fn new(strategy: Strategy, num_views: usize) -> Self {
        EpisodeOptions {
            strategy,
            num_views,
            horizon_cap: super::DEFAULT_PLANNING_HORIZON,
            movement_cap: None,
            straight_direction: None,
        }
    }
}

/// Everything an episode produced.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    /// Views in observation order; always `num_views` long and free of
    /// duplicates.
    pub observed: Vec<ViewIndex>,
    /// Movement path including the start and pass-through views.
    pub path: Vec<ViewIndex>,
    /// Non-adjacent consecutive moves in `path`.
    pub teleports: usize,
    /// Observations with cached single and pairwise distributions.
    pub record: SequenceRecord,
}

struct StraightWalk {
    d_azimuth: i32,
    d_elevation: i32,
    seen: HashSet<(usize, i32, i32)>,
    exhausted: bool,
}

impl StraightWalk {
    fn new(grid: &GridSpec, direction: RelativePose) -> Result<Self> {
        let mut d_el = direction.d_elevation;
        if direction.d_azimuth.abs() > 1 || d_el.abs() > 1 {
            return Err(Error::InvalidDirection);
        }
        if grid.elevation_steps == 1 {
            d_el = 0;
        }
        Ok(StraightWalk {
            d_azimuth: direction.d_azimuth,
            d_elevation: d_el,
            // A degenerate direction cannot move; start exhausted.
            exhausted: direction.d_azimuth == 0 && d_el == 0,
            seen: HashSet::new(),
        })
    }

    /// One reflected step, or `None` once the line revisits a state and
    /// stops producing new views.
    fn step(&mut self, grid: &GridSpec, from: ViewIndex) -> Option<ViewIndex> {
        if self.exhausted {
            return None;
        }
        let key = (from.flat(grid), self.d_azimuth, self.d_elevation);
        if !self.seen.insert(key) {
            self.exhausted = true;
            return None;
        }
        let el = from.elevation as i64 + self.d_elevation as i64;
        if el < 0 || el >= grid.elevation_steps as i64 {
            self.d_elevation = -self.d_elevation;
        }
        let pose = RelativePose::new(self.d_azimuth, self.d_elevation);
        Some(
            grid.apply_pose(from, pose)
                .expect("walk stays on the grid")
                .expect("reflection keeps the elevation in range"),
        )
    }
}

/// Runs one episode and returns its trajectory and classification record.
///
/// Strategies draw from `rng` in a fixed order (direction draw, then one
/// draw per movement step where applicable, interleaved with observation
/// noise), so outcomes are a pure function of the inputs and the rng state.
pub fn run_episode<R: Rng + ?Sized>(
    grid: &GridSpec,
    oracle: &EpisodeOracle,
    weights: Option<&WeightTable>,
    policies: Option<&PolicySet>,
    options: &EpisodeOptions,
    start: ViewIndex,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    grid.check(start)?;
    if options.num_views == 0 {
        return Err(Error::InvalidParameter(
            "episodes must observe at least one view".into(),
        ));
    }
    if options.num_views > grid.num_views() {
        return Err(Error::InvalidParameter(format!(
            "cannot observe {} distinct views on a grid of {}",
            options.num_views,
            grid.num_views()
        )));
    }
    let policies = match (options.strategy.needs_policies(), policies) {
        (true, None) => {
            return Err(Error::Config(format!(
                "strategy {} requires fitted policies",
                options.strategy
            )))
        }
        (_, p) => p,
    };

    let mut state = EpisodeState::new(*grid)?;
    let mut record = SequenceRecord::new(*grid);
    let mut path = vec![start];
    let mut teleports = 0usize;

    let observe = |view: ViewIndex,
                       state: &mut EpisodeState,
                       record: &mut SequenceRecord,
                       rng: &mut R|
     -> Result<()> {
        let obs = oracle.observe(view, rng)?;
        record.push(obs.clone(), oracle, weights)?;
        match (options.strategy, policies) {
            (Strategy::Optimised, Some(p)) => state.update_costs(obs, &p.quality),
            _ => state.visit(obs),
        }
    };
    observe(start, &mut state, &mut record, rng)?;

    let mut straight = match options.strategy {
        Strategy::Straight => {
            let direction = options.straight_direction.unwrap_or_else(|| {
                let (d_az, d_el) = UNIT_DIRECTIONS[rng.random_range(0..UNIT_DIRECTIONS.len())];
                RelativePose::new(d_az, d_el)
            });
            Some(StraightWalk::new(grid, direction)?)
        }
        _ => None,
    };
    let movement_cap = options.movement_cap.unwrap_or(16 * grid.num_views());
    let mut moves = 0usize;

    while state.visited().len() < options.num_views {
        let current = *path.last().expect("path starts non-empty");
        let wandering = matches!(options.strategy, Strategy::Random | Strategy::Straight);
        let next = if wandering && moves >= movement_cap {
            // The walk failed to reach enough fresh views; jump to a
            // uniformly chosen unvisited one so the episode terminates.
            let free: Vec<ViewIndex> = grid
                .all_views()
                .filter(|v| !state.is_visited(*v))
                .collect();
            free[rng.random_range(0..free.len())]
        } else {
            match options.strategy {
                Strategy::Random => random_step(grid, current, rng)?,
                Strategy::Straight => {
                    let walk = straight.as_mut().expect("initialised for Straight");
                    match walk.step(grid, current) {
                        Some(v) => v,
                        None => random_step(grid, current, rng)?,
                    }
                }
                Strategy::NbvGlobal | Strategy::NbvAdjacent => {
                    let p = policies.expect("checked above");
                    let mode = if options.strategy == Strategy::NbvGlobal {
                        NbvMode::Global
                    } else {
                        NbvMode::Adjacent
                    };
                    let last = record.observations().last().expect("observed start");
                    p.nbv.nbv_next(last, mode, state.visited_flags())?
                }
                Strategy::Optimised => {
                    let remaining = options.num_views - state.visited().len();
                    state.optimised_next(remaining, options.horizon_cap)?
                }
            }
        };
        if !grid.adjacent(current, next) {
            teleports += 1;
        }
        path.push(next);
        moves += 1;
        if !state.is_visited(next) {
            observe(next, &mut state, &mut record, rng)?;
        }
    }

    Ok(EpisodeOutcome {
        observed: state.visited().to_vec(),
        path,
        teleports,
        record,
    })
}

fn random_step<R: Rng + ?Sized>(
    grid: &GridSpec,
    from: ViewIndex,
    rng: &mut R,
) -> Result<ViewIndex> {
    let neighbors = grid.neighbors(from)?;
    Ok(neighbors[rng.random_range(0..neighbors.len())])
}
