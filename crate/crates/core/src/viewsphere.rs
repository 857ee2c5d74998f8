//! Discretised viewing sphere: an azimuth x elevation grid of camera
//! positions, 8-connected adjacency, wrap-aware relative poses, and path
//! utilities used by the trajectory planners.
//!
//! Azimuth wraps; elevation clamps. There are no pole vertices: the top and
//! bottom elevation rows are ordinary rows with a reduced neighborhood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard ceiling on exhaustive path enumeration depth.
pub const DEFAULT_HORIZON_CAP: usize = 8;

/// The eight unit grid steps, in lexicographic order.
pub const UNIT_DIRECTIONS: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn default_step_degrees() -> f64 {
    30.0
}

/// Dimensions of the viewing grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub azimuth_steps: usize,
    pub elevation_steps: usize,
    /// Angular spacing between adjacent grid positions, informational only.
    #[serde(default = "default_step_degrees")]
    pub step_degrees: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            azimuth_steps: 12,
            elevation_steps: 5,
            step_degrees: default_step_degrees(),
        }
    }
}

/// One camera position on the grid.
///
/// Ordering is lexicographic on (azimuth, elevation), which is also the flat
/// index order; every deterministic tie-break in the crate leans on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ViewIndex {
    pub azimuth: usize,
    pub elevation: usize,
}

impl ViewIndex {
    pub fn new(azimuth: usize, elevation: usize) -> Self {
        ViewIndex { azimuth, elevation }
    }

    /// Flat index into per-view tables: azimuth major, elevation minor.
    pub fn flat(&self, grid: &GridSpec) -> usize {
        self.azimuth * grid.elevation_steps + self.elevation
    }

    pub fn from_flat(grid: &GridSpec, flat: usize) -> Self {
        ViewIndex {
            azimuth: flat / grid.elevation_steps,
            elevation: flat % grid.elevation_steps,
        }
    }
}

/// Signed grid offset between two views.
///
/// `d_azimuth` is the shortest wrap distance, canonicalised into
/// `(-A/2, A/2]`: a tie at the half wrap takes the positive sign.
/// `d_elevation` is a plain difference, never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelativePose {
    pub d_azimuth: i32,
    pub d_elevation: i32,
}

impl RelativePose {
    pub fn new(d_azimuth: i32, d_elevation: i32) -> Self {
        RelativePose {
            d_azimuth,
            d_elevation,
        }
    }
}

/// A sequence of views where every consecutive pair is grid-adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    views: Vec<ViewIndex>,
}

impl Path {
    /// Validates adjacency of every consecutive pair.
    pub fn new(grid: &GridSpec, views: Vec<ViewIndex>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::EmptyInput("path must contain at least one view"));
        }
        for v in &views {
            grid.check(*v)?;
        }
        for w in views.windows(2) {
            if !grid.adjacent(w[0], w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "path views ({}, {}) and ({}, {}) are not adjacent",
                    w[0].azimuth, w[0].elevation, w[1].azimuth, w[1].elevation
                )));
            }
        }
        Ok(Path { views })
    }

    pub(crate) fn from_adjacent_unchecked(views: Vec<ViewIndex>) -> Self {
        Path { views }
    }

    pub fn views(&self) -> &[ViewIndex] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn into_views(self) -> Vec<ViewIndex> {
        self.views
    }
}

impl GridSpec {
    pub fn new(azimuth_steps: usize, elevation_steps: usize) -> Result<Self> {
        let grid = GridSpec {
            azimuth_steps,
            elevation_steps,
            step_degrees: default_step_degrees(),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Re-checks the structural invariants; needed after deserialisation,
    /// which bypasses the constructor.
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_steps < 3 {
            return Err(Error::InvalidGrid(format!(
                "azimuth_steps must be at least 3, got {}",
                self.azimuth_steps
            )));
        }
        if self.elevation_steps < 1 {
            return Err(Error::InvalidGrid(
                "elevation_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Total number of views on the grid.
    pub fn num_views(&self) -> usize {
        self.azimuth_steps * self.elevation_steps
    }

    pub fn contains(&self, v: ViewIndex) -> bool {
        v.azimuth < self.azimuth_steps && v.elevation < self.elevation_steps
    }

    pub fn check(&self, v: ViewIndex) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::OutOfGrid {
                view: v,
                grid: *self,
            })
        }
    }

    /// All views in flat-index (lexicographic) order.
    pub fn all_views(&self) -> impl Iterator<Item = ViewIndex> + '_ {
        (0..self.num_views()).map(|i| ViewIndex::from_flat(self, i))
    }

    fn wrap_azimuth(&self, azimuth: i64) -> usize {
        let a = self.azimuth_steps as i64;
        (((azimuth % a) + a) % a) as usize
    }

    /// The 8-neighborhood of `v` (5 on the top and bottom rows), sorted
    /// lexicographically. Azimuth offsets wrap; elevation offsets that leave
    /// the grid are dropped.
    pub fn neighbors(&self, v: ViewIndex) -> Result<Vec<ViewIndex>> {
        self.check(v)?;
        let mut out = Vec::with_capacity(8);
        for (da, de) in UNIT_DIRECTIONS {
            let el = v.elevation as i64 + de as i64;
            if el < 0 || el >= self.elevation_steps as i64 {
                continue;
            }
            let n = ViewIndex {
                azimuth: self.wrap_azimuth(v.azimuth as i64 + da as i64),
                elevation: el as usize,
            };
            if n != v && !out.contains(&n) {
                out.push(n);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn adjacent(&self, a: ViewIndex, b: ViewIndex) -> bool {
        self.neighbors(a).map(|ns| ns.contains(&b)).unwrap_or(false)
    }

    /// Wraps an arbitrary azimuth offset into the canonical `(-A/2, A/2]`
    /// range and pairs it with the given elevation offset.
    pub fn canonical_pose(&self, d_azimuth: i64, d_elevation: i32) -> RelativePose {
        let a = self.azimuth_steps as i64;
        let mut d = ((d_azimuth % a) + a) % a; // now in [0, A)
        if 2 * d > a {
            d -= a;
        }
        RelativePose {
            d_azimuth: d as i32,
            d_elevation,
        }
    }

    /// Relative pose from `a` to `b`.
    pub fn relative_pose(&self, a: ViewIndex, b: ViewIndex) -> Result<RelativePose> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.canonical_pose(
            b.azimuth as i64 - a.azimuth as i64,
            b.elevation as i32 - a.elevation as i32,
        ))
    }

    /// Pose inverse: both components negated, azimuth re-canonicalised so a
    /// half-wrap offset stays positive.
    pub fn inverse_pose(&self, pose: RelativePose) -> RelativePose {
        self.canonical_pose(-(pose.d_azimuth as i64), -pose.d_elevation)
    }

    /// Applies `pose` to `v`. Azimuth wraps; an elevation that leaves the
    /// grid yields `None`.
    pub fn apply_pose(&self, v: ViewIndex, pose: RelativePose) -> Result<Option<ViewIndex>> {
        self.check(v)?;
        let el = v.elevation as i64 + pose.d_elevation as i64;
        if el < 0 || el >= self.elevation_steps as i64 {
            return Ok(None);
        }
        Ok(Some(ViewIndex {
            azimuth: self.wrap_azimuth(v.azimuth as i64 + pose.d_azimuth as i64),
            elevation: el as usize,
        }))
    }

    /// Every pose realisable between two grid views, sorted. Includes the
    /// identity pose (0, 0).
    pub fn all_poses(&self) -> Vec<RelativePose> {
        let a = self.azimuth_steps as i64;
        let e = self.elevation_steps as i64;
        let mut out = Vec::new();
        for da in (-(a - 1) / 2)..=(a / 2) {
            for de in -(e - 1)..=(e - 1) {
                out.push(RelativePose {
                    d_azimuth: da as i32,
                    d_elevation: de as i32,
                });
            }
        }
        out.sort();
        out
    }

    /// Exhaustively enumerates every walk of exactly `steps` moves starting
    /// at `start`. Walks may revisit views. Uses [`DEFAULT_HORIZON_CAP`].
    pub fn enumerate_paths(&self, start: ViewIndex, steps: usize) -> Result<Vec<Path>> {
        self.enumerate_paths_capped(start, steps, DEFAULT_HORIZON_CAP)
    }

    /// As [`GridSpec::enumerate_paths`] with an explicit depth cap.
    pub fn enumerate_paths_capped(
        &self,
        start: ViewIndex,
        steps: usize,
        cap: usize,
    ) -> Result<Vec<Path>> {
        self.check(start)?;
        if steps > cap {
            return Err(Error::HorizonExceeded { steps, cap });
        }
        let mut out = Vec::new();
        let mut prefix = vec![start];
        self.extend_paths(&mut prefix, steps, &mut out);
        Ok(out)
    }

    fn extend_paths(&self, prefix: &mut Vec<ViewIndex>, remaining: usize, out: &mut Vec<Path>) {
        if remaining == 0 {
            out.push(Path::from_adjacent_unchecked(prefix.clone()));
            return;
        }
        let last = *prefix.last().expect("prefix starts non-empty");
        for n in self.neighbors(last).expect("prefix views are in-grid") {
            prefix.push(n);
            self.extend_paths(prefix, remaining - 1, out);
            prefix.pop();
        }
    }

    /// Walks `steps` unit moves in `direction`, reflecting the elevation
    /// component whenever it would leave the grid. On a single-row grid the
    /// elevation component is dropped before walking.
    pub fn straight_path(
        &self,
        start: ViewIndex,
        direction: RelativePose,
        steps: usize,
    ) -> Result<Path> {
        self.check(start)?;
        let d_az = direction.d_azimuth;
        let mut d_el = direction.d_elevation;
        if d_az.abs() > 1 || d_el.abs() > 1 {
            return Err(Error::InvalidDirection);
        }
        if self.elevation_steps == 1 {
            d_el = 0;
        }
        if d_az == 0 && d_el == 0 {
            return Err(Error::InvalidDirection);
        }
        let mut views = Vec::with_capacity(steps + 1);
        views.push(start);
        let mut cur = start;
        for _ in 0..steps {
            let el = cur.elevation as i64 + d_el as i64;
            if el < 0 || el >= self.elevation_steps as i64 {
                d_el = -d_el;
            }
            cur = ViewIndex {
                azimuth: self.wrap_azimuth(cur.azimuth as i64 + d_az as i64),
                elevation: (cur.elevation as i64 + d_el as i64) as usize,
            };
            views.push(cur);
        }
        Ok(Path { views })
    }

    /// A seeded random walk: every move is drawn uniformly from the
    /// neighbors of the current view.
    pub fn random_path<R: rand::Rng + ?Sized>(
        &self,
        rng: &mut R,
        start: ViewIndex,
        steps: usize,
    ) -> Result<Path> {
        self.check(start)?;
        let mut views = Vec::with_capacity(steps + 1);
        views.push(start);
        let mut cur = start;
        for _ in 0..steps {
            let ns = self.neighbors(cur)?;
            cur = ns[rng.random_range(0..ns.len())];
            views.push(cur);
        }
        Ok(Path { views })
    }
}
