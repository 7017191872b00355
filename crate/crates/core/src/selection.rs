//! Label-query selectors.
//!
//! Every selector picks one unlabelled observation from the pool (or none).
//! The informative selectors maximize an objective `h(z)` over the pool with
//! ties resolved to the lowest pool index:
//!
//! * `Entropy`: `H[g(z; θ)]`.
//! * `InfoGain`: `H[g(z; θ)] - E_y[H[g(z; θ_y)]]`, where `θ_y` is refit on
//!   the dataset plus `(z, y)` and `y ~ Bernoulli(g(z; θ))`.
//! * `Regret`: `E_y[s*(θ_y) - s_0(θ_y)]`, the expected score gap between the
//!   best candidate trajectory and the reference trajectory once `(z, y)`
//!   is added to the training set.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridLocation, TopicField};
use crate::planner::{argmax_first, plan_trajectory, CandidateScorer, PlannerConfig, PlannerState, Trajectory};
use crate::reward::{binary_entropy, fit_with_extra, FitConfig, LabeledDataset, RewardModelParams};
use crate::rng::{seeded_stream, SimRng};

/// Index of an observation along the robot's path (0-based).
pub type ObservationId = usize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolEntry<'a> {
    pub id: ObservationId,
    pub feature: &'a [f64],
    pub location: GridLocation,
}

/// Unlabelled, never-queried observations, in ascending id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryPool<'a> {
    entries: Vec<PoolEntry<'a>>,
}

impl<'a> QueryPool<'a> {
    pub fn new(mut entries: Vec<PoolEntry<'a>>) -> Self {
        entries.sort_by_key(|e| e.id);
        QueryPool { entries }
    }

    pub fn entries(&self) -> &[PoolEntry<'a>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `cap` most recent entries (all of them when `cap` is `None`).
    pub fn most_recent(&self, cap: Option<usize>) -> &[PoolEntry<'a>] {
        match cap {
            Some(c) if c < self.entries.len() => &self.entries[self.entries.len() - c..],
            _ => &self.entries,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Random,
    Uniform,
    Entropy,
    InfoGain,
    Regret,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::Random,
        SelectorKind::Uniform,
        SelectorKind::Entropy,
        SelectorKind::InfoGain,
        SelectorKind::Regret,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Random => "random",
            SelectorKind::Uniform => "uniform",
            SelectorKind::Entropy => "entropy",
            SelectorKind::InfoGain => "info_gain",
            SelectorKind::Regret => "regret",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        SelectorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "infogain" && *k == SelectorKind::InfoGain))
            .ok_or_else(|| Error::Config(format!("unknown selector {s:?}")))
    }
}

/// A chosen query plus what it cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub id: ObservationId,
    /// Objective value of the chosen entry (informative selectors only).
    pub objective: Option<f64>,
    pub refits: usize,
    pub rescoring_passes: usize,
}

impl Selection {
    fn plain(id: ObservationId) -> Self {
        Selection {
            id,
            objective: None,
            refits: 0,
            rescoring_passes: 0,
        }
    }
}

pub fn select_random(pool: &QueryPool<'_>, rng: &mut SimRng) -> Option<Selection> {
    if pool.is_empty() {
        return None;
    }
    let i = rng.random_range(0..pool.len());
    Some(Selection::plain(pool.entries[i].id))
}

/// Every `period`-th timestep, the newest observation.
pub fn select_uniform(t: usize, period: usize, latest: Option<ObservationId>) -> Option<ObservationId> {
    if period == 0 || t % period != 0 {
        return None;
    }
    latest
}

pub fn entropy_scores(entries: &[PoolEntry<'_>], params: &RewardModelParams) -> Vec<f64> {
    entries
        .iter()
        .map(|e| binary_entropy(params.predict_unchecked(e.feature)))
        .collect()
}

pub fn select_entropy(pool: &QueryPool<'_>, params: &RewardModelParams) -> Option<Selection> {
    let scores = entropy_scores(pool.entries(), params);
    argmax_first(&scores).map(|i| Selection {
        id: pool.entries[i].id,
        objective: Some(scores[i]),
        refits: 0,
        rescoring_passes: 0,
    })
}

/// Information-gain objective for one feature vector.
pub fn info_gain(
    z: &[f64],
    params: &RewardModelParams,
    dataset: &LabeledDataset,
    fit: &FitConfig,
) -> Result<f64> {
    let q = params.predict(z)?;
    let h0 = binary_entropy(fit_with_extra(dataset, z, false, Some(params), fit)?.predict_unchecked(z));
    let h1 = binary_entropy(fit_with_extra(dataset, z, true, Some(params), fit)?.predict_unchecked(z));
    Ok(binary_entropy(q) - (q * h1 + (1.0 - q) * h0))
}

pub fn select_info_gain(
    pool: &QueryPool<'_>,
    params: &RewardModelParams,
    dataset: &LabeledDataset,
    fit: &FitConfig,
    pool_cap: Option<usize>,
) -> Result<Option<Selection>> {
    let entries = pool.most_recent(pool_cap);
    let scores = entries
        .iter()
        .map(|e| info_gain(e.feature, params, dataset, fit))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(&scores).map(|i| Selection {
        id: entries[i].id,
        objective: Some(scores[i]),
        refits: 2 * entries.len(),
        rescoring_passes: 0,
    }))
}

/// Where the post-label best trajectory is searched for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Rescore the candidate set that produced the reference trajectory.
    #[default]
    Shared,
    /// Draw a fresh candidate set for every temporary label; regret may then be negative.
    Regenerate,
}

/// Everything regret evaluation needs about the current planning cycle.
pub struct RegretContext<'a> {
    field: &'a TopicField,
    candidates: &'a [Trajectory],
    reference: usize,
    scorer: CandidateScorer,
    regenerate: Option<RegenerateInputs<'a>>,
}

#[derive(Clone, Copy)]
pub struct RegenerateInputs<'a> {
    pub state: &'a PlannerState,
    pub planner: PlannerConfig,
    pub seed: u64,
}

impl<'a> RegretContext<'a> {
    /// Shared-candidate context; `reference` indexes into `candidates`.
    pub fn new(
        field: &'a TopicField,
        visited: &crate::planner::VisitedSet,
        gamma: f64,
        candidates: &'a [Trajectory],
        reference: usize,
    ) -> Result<Self> {
        if reference >= candidates.len() {
            return Err(Error::param("reference trajectory must belong to the candidate set"));
        }
        Ok(RegretContext {
            field,
            candidates,
            reference,
            scorer: CandidateScorer::new(candidates, field, visited, gamma),
            regenerate: None,
        })
    }

    /// Switches to regenerating candidates for every temporary label.
    pub fn regenerating(mut self, inputs: RegenerateInputs<'a>) -> Self {
        self.regenerate = Some(inputs);
        self
    }

    pub fn candidates(&self) -> &[Trajectory] {
        self.candidates
    }

    /// Regret of not knowing label `y` for `z`: refit with the temporary
    /// label, then best candidate score minus the reference's score. The
    /// dataset itself is never modified.
    ///
    /// `stream` selects the random stream in regenerate mode and is ignored
    /// otherwise.
    pub fn regret_given_label(
        &self,
        z: &[f64],
        y: bool,
        dataset: &LabeledDataset,
        warm_start: Option<&RewardModelParams>,
        fit: &FitConfig,
        stream: u64,
    ) -> Result<f64> {
        let refit = fit_with_extra(dataset, z, y, warm_start, fit)?;
        let scores = self.scorer.scores(self.field, &refit);
        let reference = scores[self.reference];
        let best = match self.regenerate {
            None => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Some(inputs) => {
                let mut rng = seeded_stream(inputs.seed, stream);
                plan_trajectory(inputs.state, self.field, &refit, &inputs.planner, &mut rng)?.best_score()
            }
        };
        Ok(best - reference)
    }

    /// Expected regret `q·r1 + (1-q)·r0` with `q = g(z; θ)`.
    pub fn expected_regret(
        &self,
        z: &[f64],
        params: &RewardModelParams,
        dataset: &LabeledDataset,
        fit: &FitConfig,
        stream: u64,
    ) -> Result<f64> {
        let q = params.predict(z)?;
        let r0 = self.regret_given_label(z, false, dataset, Some(params), fit, 2 * stream)?;
        let r1 = self.regret_given_label(z, true, dataset, Some(params), fit, 2 * stream + 1)?;
        Ok(q * r1 + (1.0 - q) * r0)
    }
}

/// Regret of label `y` for `z` against a shared candidate set.
#[allow(clippy::too_many_arguments)]
pub fn compute_regret(
    reference: usize,
    candidates: &[Trajectory],
    z: &[f64],
    y: bool,
    dataset: &LabeledDataset,
    field: &TopicField,
    visited: &crate::planner::VisitedSet,
    gamma: f64,
    warm_start: Option<&RewardModelParams>,
    fit: &FitConfig,
) -> Result<f64> {
    RegretContext::new(field, visited, gamma, candidates, reference)?
        .regret_given_label(z, y, dataset, warm_start, fit, 0)
}

pub fn select_regret(
    pool: &QueryPool<'_>,
    params: &RewardModelParams,
    dataset: &LabeledDataset,
    ctx: &RegretContext<'_>,
    fit: &FitConfig,
    pool_cap: Option<usize>,
) -> Result<Option<Selection>> {
    let entries = pool.most_recent(pool_cap);
    let scores = entries
        .iter()
        .enumerate()
        .map(|(i, e)| ctx.expected_regret(e.feature, params, dataset, fit, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_first(&scores).map(|i| Selection {
        id: entries[i].id,
        objective: Some(scores[i]),
        refits: 2 * entries.len(),
        rescoring_passes: 2 * entries.len(),
    }))
}
