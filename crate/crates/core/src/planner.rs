//! Candidate trajectories from motion primitives, scored by predicted reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridLocation, TopicField};
use crate::reward::RewardModelParams;
use crate::rng::SimRng;

pub const PRIMITIVE_COUNT: usize = 13;
pub const PRIMITIVE_LENGTH: usize = 5;
const HEADING_SPAN: f64 = 135.0;
const MAX_RESAMPLE_ATTEMPTS: usize = 100;

/// Straight segment at a heading relative to the robot's current direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    /// Degrees, counter-clockwise in grid coordinates.
    pub relative_heading: f64,
    pub length: usize,
}

/// The 13 standard primitives: headings `-135° + 22.5°·k`, each 5 cells long.
pub fn motion_primitive_set() -> Vec<MotionPrimitive> {
    let spacing = 2.0 * HEADING_SPAN / (PRIMITIVE_COUNT - 1) as f64;
    (0..PRIMITIVE_COUNT)
        .map(|k| MotionPrimitive {
            relative_heading: -HEADING_SPAN + spacing * k as f64,
            length: PRIMITIVE_LENGTH,
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Unit steps, excluding the starting cell.
    pub cells: Vec<GridLocation>,
    /// Absolute heading after each primitive, degrees in (-180, 180].
    pub headings: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Heading the robot has while taking unit step `step`, if headings are known.
    pub fn heading_at_step(&self, step: usize) -> Option<f64> {
        if self.headings.is_empty() || self.cells.is_empty() {
            return None;
        }
        let per = self.cells.len().div_ceil(self.headings.len());
        self.headings.get(step / per.max(1)).copied()
    }
}

/// Set of visited cells as a dense bitmap over the grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitedSet {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    count: usize,
}

impl VisitedSet {
    pub fn new(width: usize, height: usize) -> Self {
        VisitedSet {
            width,
            height,
            bits: vec![false; width * height],
            count: 0,
        }
    }

    /// Marks `loc`; returns true when it was not visited before.
    pub fn insert(&mut self, loc: GridLocation) -> bool {
        let i = loc.y * self.width + loc.x;
        let fresh = !self.bits[i];
        if fresh {
            self.bits[i] = true;
            self.count += 1;
        }
        fresh
    }

    pub fn contains(&self, loc: GridLocation) -> bool {
        loc.x < self.width && loc.y < self.height && self.bits[loc.y * self.width + loc.x]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerState {
    pub location: GridLocation,
    pub heading: f64,
    pub visited: VisitedSet,
}

impl PlannerState {
    /// A state at `location` with only that cell visited.
    pub fn at(location: GridLocation, heading: f64, dims: (usize, usize)) -> Self {
        let mut visited = VisitedSet::new(dims.0, dims.1);
        visited.insert(location);
        PlannerState {
            location,
            heading,
            visited,
        }
    }
}

fn normalize_heading(mut h: f64) -> f64 {
    h %= 360.0;
    if h > 180.0 {
        h -= 360.0;
    } else if h <= -180.0 {
        h += 360.0;
    }
    h
}

const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Rasterizes a sequence of primitives into unit steps.
///
/// Each step moves to the 8-neighbour closest to the ideal continuous point
/// `start + k·(cos h, sin h)` of the current primitive, so every primitive
/// yields exactly `length` moves. With `clamp` the search is restricted to
/// in-bounds neighbours (staying put only if none exist); without it the
/// function returns `None` as soon as a step leaves the map.
fn rasterize(
    start: GridLocation,
    heading: f64,
    primitives: &[MotionPrimitive],
    dims: (usize, usize),
    clamp: bool,
) -> Option<Trajectory> {
    let (w, h) = (dims.0 as i64, dims.1 as i64);
    let mut cur = (start.x as i64, start.y as i64);
    let mut heading = heading;
    let total: usize = primitives.iter().map(|p| p.length).sum();
    let mut traj = Trajectory {
        cells: Vec::with_capacity(total),
        headings: Vec::with_capacity(primitives.len()),
    };
    for prim in primitives {
        heading = normalize_heading(heading + prim.relative_heading);
        let (dx, dy) = (heading.to_radians().cos(), heading.to_radians().sin());
        let origin = (cur.0 as f64, cur.1 as f64);
        for k in 1..=prim.length {
            let target = (origin.0 + k as f64 * dx, origin.1 + k as f64 * dy);
            let mut best: Option<((i64, i64), f64)> = None;
            for (ox, oy) in NEIGHBOURS {
                let cand = (cur.0 + ox, cur.1 + oy);
                let inside = cand.0 >= 0 && cand.1 >= 0 && cand.0 < w && cand.1 < h;
                if clamp && !inside {
                    continue;
                }
                let dist = (cand.0 as f64 - target.0).powi(2) + (cand.1 as f64 - target.1).powi(2);
                if best.is_none_or(|(_, d)| dist < d) {
                    best = Some((cand, dist));
                }
            }
            let next = match best {
                Some((cand, _)) => cand,
                None => cur,
            };
            if next.0 < 0 || next.1 < 0 || next.0 >= w || next.1 >= h {
                return None;
            }
            cur = next;
            traj.cells.push(GridLocation::new(cur.0 as usize, cur.1 as usize));
        }
        traj.headings.push(heading);
    }
    Some(traj)
}

/// Generates `n` random trajectories of `primitives_per_traj` primitives.
///
/// A trajectory that would leave the map is resampled, up to 100 attempts per
/// slot; after that the last sample is clamped to the boundary.
pub fn generate_trajectories(
    state: &PlannerState,
    dims: (usize, usize),
    n: usize,
    primitives_per_traj: usize,
    rng: &mut SimRng,
) -> Vec<Trajectory> {
    let prims = motion_primitive_set();
    let mut out = Vec::with_capacity(n);
    let mut chosen = Vec::with_capacity(primitives_per_traj);
    for _ in 0..n {
        let mut traj = None;
        for _ in 0..MAX_RESAMPLE_ATTEMPTS {
            chosen.clear();
            chosen.extend((0..primitives_per_traj).map(|_| prims[rng.random_range(0..prims.len())]));
            traj = rasterize(state.location, state.heading, &chosen, dims, false);
            if traj.is_some() {
                break;
            }
        }
        let traj = traj.unwrap_or_else(|| {
            rasterize(state.location, state.heading, &chosen, dims, true)
                .expect("clamped rasterization stays in bounds")
        });
        out.push(traj);
    }
    out
}

/// Discounted predicted reward `Σ γ^j g(z(x_j))`, skipping visited cells and
/// repeats within the trajectory.
pub fn score_trajectory(
    traj: &Trajectory,
    field: &TopicField,
    params: &RewardModelParams,
    visited: &VisitedSet,
    gamma: f64,
) -> Result<f64> {
    if field.topics() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            actual: field.topics(),
        });
    }
    let mut total = 0.0;
    for (step, loc) in contributing_steps(traj, visited) {
        total += gamma.powi(step as i32) * params.predict_unchecked(field.topic_at(loc)?);
    }
    Ok(total)
}

/// `(step index, cell)` for the steps of `traj` that can earn reward: not
/// already visited and not repeated earlier in the same trajectory.
pub fn contributing_steps<'a>(
    traj: &'a Trajectory,
    visited: &'a VisitedSet,
) -> impl Iterator<Item = (usize, GridLocation)> + 'a {
    traj.cells
        .iter()
        .enumerate()
        .filter(move |(j, loc)| !visited.contains(**loc) && !traj.cells[..*j].contains(loc))
        .map(|(j, loc)| (j, *loc))
}

/// Precomputed scoring structure for a fixed candidate set and visited set.
///
/// Which steps contribute, and with what discount, does not depend on the
/// reward model, so rescoring the set under another model only needs the
/// model's prediction at each distinct contributing cell.
#[derive(Clone, Debug)]
pub struct CandidateScorer {
    /// Distinct contributing cells, as row-major field indices.
    cells: Vec<usize>,
    /// Per trajectory: (index into `cells`, discount weight).
    terms: Vec<Vec<(usize, f64)>>,
}

impl CandidateScorer {
    pub fn new(candidates: &[Trajectory], field: &TopicField, visited: &VisitedSet, gamma: f64) -> Self {
        let mut slot = std::collections::HashMap::new();
        let mut cells = Vec::new();
        let terms = candidates
            .iter()
            .map(|traj| {
                contributing_steps(traj, visited)
                    .map(|(j, loc)| {
                        let idx = field.index_of(loc);
                        let s = *slot.entry(idx).or_insert_with(|| {
                            cells.push(idx);
                            cells.len() - 1
                        });
                        (s, gamma.powi(j as i32))
                    })
                    .collect()
            })
            .collect();
        CandidateScorer { cells, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Scores of every candidate under `params`.
    pub fn scores(&self, field: &TopicField, params: &RewardModelParams) -> Vec<f64> {
        let preds: Vec<f64> = self
            .cells
            .iter()
            .map(|&i| params.predict_unchecked(field.cell(i)))
            .collect();
        self.terms
            .iter()
            .map(|t| t.iter().map(|&(s, w)| w * preds[s]).sum())
            .collect()
    }
}

/// Index of the maximum, lowest index on ties. `None` for an empty slice.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Result of one planning cycle: every candidate, its score and the winner.
#[derive(Clone, Debug)]
pub struct Plan {
    pub candidates: Vec<Trajectory>,
    pub scores: Vec<f64>,
    pub best: usize,
}

impl Plan {
    pub fn best_trajectory(&self) -> &Trajectory {
        &self.candidates[self.best]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub n_trajectories: usize,
    pub primitives_per_traj: usize,
    pub gamma: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_trajectories: 50,
            primitives_per_traj: 5,
            gamma: 1.0,
        }
    }
}

/// Generates candidates, scores them all and picks the best.
pub fn plan_trajectory(
    state: &PlannerState,
    field: &TopicField,
    params: &RewardModelParams,
    config: &PlannerConfig,
    rng: &mut SimRng,
) -> Result<Plan> {
    if config.n_trajectories == 0 {
        return Err(Error::param("at least one candidate trajectory is required"));
    }
    if field.topics() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            actual: field.topics(),
        });
    }
    let candidates = generate_trajectories(
        state,
        field.dims(),
        config.n_trajectories,
        config.primitives_per_traj,
        rng,
    );
    let scores = CandidateScorer::new(&candidates, field, &state.visited, config.gamma).scores(field, params);
    let best = argmax_first(&scores).expect("nonempty candidate set");
    Ok(Plan {
        candidates,
        scores,
        best,
    })
}
