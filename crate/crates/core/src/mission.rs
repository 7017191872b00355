//! Closed-loop co-robotic exploration mission.
//!
//! Each timestep, in order: move one cell along the current plan, observe
//! the topic vector there, receive the in-flight label if it has been out
//! for at least `labeling_period` steps (and refit the reward model), replan,
//! and, when no query is in flight, select and dispatch a new one.

pub mod lawnmower;
pub mod trace;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridLocation, InterestMap, TopicField};
use crate::planner::{plan_trajectory, Plan, PlannerConfig, PlannerState, VisitedSet};
use crate::reward::{fit, map_cross_entropy, FitConfig, LabeledDataset, RewardModelParams};
use crate::rng::{seeded_stream, SeedDeriver, SimRng};
use crate::selection::{
    select_entropy, select_info_gain, select_random, select_regret, select_uniform, CandidateMode,
    ObservationId, PoolEntry, QueryPool, RegenerateInputs, RegretContext, Selection, SelectorKind,
};

pub use lawnmower::{lawnmower_trajectories, run_lawnmower};
pub use trace::{MissionTrace, TraceFooter, TraceHeader};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanPolicy {
    #[default]
    EveryStep,
    OnCompletion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub t_max: usize,
    pub labeling_period: usize,
    pub selector: SelectorKind,
    pub n_trajectories: usize,
    pub primitives_per_traj: usize,
    pub gamma: f64,
    /// Defaults to the map centre.
    pub start: Option<GridLocation>,
    pub initial_heading: f64,
    pub seed: u64,
    pub fit: FitConfig,
    /// Evaluate only this many of the most recent pool entries (info-gain and regret).
    pub pool_cap: Option<usize>,
    pub regret_candidates: CandidateMode,
    pub replan: ReplanPolicy,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            t_max: 300,
            labeling_period: 10,
            selector: SelectorKind::Regret,
            n_trajectories: 50,
            primitives_per_traj: 5,
            gamma: 1.0,
            start: None,
            initial_heading: 0.0,
            seed: 0,
            fit: FitConfig::default(),
            pool_cap: None,
            regret_candidates: CandidateMode::Shared,
            replan: ReplanPolicy::EveryStep,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if self.labeling_period == 0 {
            return Err(Error::Config("labeling_period must be at least 1".into()));
        }
        if self.n_trajectories == 0 || self.primitives_per_traj == 0 {
            return Err(Error::Config("planner needs at least one trajectory of one primitive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.pool_cap == Some(0) {
            return Err(Error::Config("pool_cap must be positive when set".into()));
        }
        self.fit.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            n_trajectories: self.n_trajectories,
            primitives_per_traj: self.primitives_per_traj,
            gamma: self.gamma,
        }
    }

    pub fn start_for(&self, dims: (usize, usize)) -> GridLocation {
        self.start.unwrap_or(GridLocation::new(dims.0 / 2, dims.1 / 2))
    }
}

/// A question put to the operator.
#[derive(Clone, Copy, Debug)]
pub struct LabelRequest<'a> {
    pub id: ObservationId,
    pub location: GridLocation,
    pub feature: &'a [f64],
    pub requested_at: usize,
    /// Timestep at which the label is being collected.
    pub t: usize,
}

/// Source of interest labels: the simulated map lookup or a live human.
pub trait Operator {
    /// The label for `request`, or `None` if it is not available yet.
    fn answer(&mut self, request: &LabelRequest<'_>) -> Option<bool>;
}

/// Answers from the ground-truth interest map.
pub struct SimulatedOperator<'a> {
    map: &'a InterestMap,
}

impl<'a> SimulatedOperator<'a> {
    pub fn new(map: &'a InterestMap) -> Self {
        SimulatedOperator { map }
    }
}

impl Operator for SimulatedOperator<'_> {
    fn answer(&mut self, request: &LabelRequest<'_>) -> Option<bool> {
        self.map.get(request.location).ok()
    }
}

/// Deterministic operator judgement: the map label at `loc`.
pub fn simulated_operator(map: &InterestMap, loc: GridLocation) -> Result<bool> {
    map.get(loc)
}

impl<F: FnMut(&LabelRequest<'_>) -> Option<bool>> Operator for F {
    fn answer(&mut self, request: &LabelRequest<'_>) -> Option<bool> {
        self(request)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub location: GridLocation,
    pub feature: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InFlight {
    pub id: ObservationId,
    pub requested_at: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelArrival {
    pub id: ObservationId,
    pub label: bool,
    pub requested_at: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryDispatch {
    pub id: ObservationId,
    pub location: GridLocation,
    pub objective: Option<f64>,
    pub refits: usize,
}

/// One timestep of a mission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub location: GridLocation,
    pub feature: Vec<f64>,
    /// Model prediction at the new cell before this step's label update.
    pub predicted_reward: f64,
    /// Ground-truth label of the cell, when a ground truth is attached.
    pub true_reward: Option<bool>,
    pub new_cell: bool,
    pub cumulative_reward: Option<u64>,
    pub label_received: Option<LabelArrival>,
    pub query: Option<QueryDispatch>,
    pub plan_score: Option<f64>,
    pub plan_index: Option<usize>,
    pub dataset_size: usize,
}

/// Everything the robot knows at the end of a timestep.
#[derive(Clone, Debug)]
pub struct MissionState {
    pub t: usize,
    pub path: Vec<Observation>,
    pub dataset: LabeledDataset,
    /// Path index of each dataset entry, in arrival order.
    pub labeled: Vec<(ObservationId, bool)>,
    pub queried: Vec<bool>,
    pub in_flight: Option<InFlight>,
    pub visited: VisitedSet,
    pub params: RewardModelParams,
    pub heading: f64,
    /// Remaining unit steps of the plan being followed.
    pub plan: VecDeque<(GridLocation, Option<f64>)>,
    pub last_plan: Option<Plan>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub reward_per_timestep: f64,
    pub final_map_loss: f64,
    pub queries_made: usize,
    pub unique_cells_visited: usize,
}

/// Step-by-step mission driver. `F` is any owner of or reference to the field.
pub struct Mission<F: AsRef<TopicField>> {
    config: MissionConfig,
    field: F,
    ground_truth: Option<InterestMap>,
    state: MissionState,
    records: Vec<StepRecord>,
    cumulative_reward: u64,
    planner_rng: SimRng,
    selector_rng: SimRng,
}

impl AsRef<TopicField> for TopicField {
    fn as_ref(&self) -> &TopicField {
        self
    }
}

impl<F: AsRef<TopicField>> Mission<F> {
    /// A mission at `t = 0`. `ground_truth` is used only to account true
    /// reward in the trace; the robot never reads it.
    pub fn new(config: MissionConfig, field: F, ground_truth: Option<InterestMap>) -> Result<Self> {
        config.validate()?;
        let f = field.as_ref();
        if let Some(map) = &ground_truth {
            if map.dims() != f.dims() {
                return Err(Error::Config(format!(
                    "interest map is {:?} but field is {:?}",
                    map.dims(),
                    f.dims()
                )));
            }
        }
        let start = config.start_for(f.dims());
        if !f.contains(start) {
            return Err(Error::Config(format!("start {start:?} is outside the field")));
        }
        let mut plan = VecDeque::new();
        plan.push_back((start, None));
        let state = MissionState {
            t: 0,
            path: Vec::with_capacity(config.t_max),
            dataset: LabeledDataset::new(f.topics()),
            labeled: Vec::new(),
            queried: Vec::with_capacity(config.t_max),
            in_flight: None,
            visited: VisitedSet::new(f.width(), f.height()),
            params: RewardModelParams::uninformed(f.topics()),
            heading: config.initial_heading,
            plan,
            last_plan: None,
        };
        Ok(Mission {
            planner_rng: seeded_stream(config.seed, 0),
            selector_rng: seeded_stream(config.seed, 1),
            config,
            field,
            ground_truth,
            state,
            records: Vec::new(),
            cumulative_reward: 0,
        })
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    pub fn field(&self) -> &TopicField {
        self.field.as_ref()
    }

    pub fn state(&self) -> &MissionState {
        &self.state
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn ground_truth(&self) -> Option<&InterestMap> {
        self.ground_truth.as_ref()
    }

    pub fn cumulative_reward(&self) -> Option<u64> {
        self.ground_truth.as_ref().map(|_| self.cumulative_reward)
    }

    pub fn is_finished(&self) -> bool {
        self.state.t >= self.config.t_max
    }

    /// The in-flight query whose label will be collected on the next step.
    pub fn label_due_next(&self) -> Option<InFlight> {
        self.state
            .in_flight
            .filter(|q| self.state.t + 1 - q.requested_at >= self.config.labeling_period)
    }

    /// Advances one timestep. Returns `None` once the mission is over.
    pub fn step(&mut self, operator: &mut dyn Operator) -> Result<Option<&StepRecord>> {
        if self.is_finished() {
            return Ok(None);
        }
        let field = self.field.as_ref();
        let st = &mut self.state;
        st.t += 1;
        let t = st.t;

        // move
        let (location, heading) = st.plan.pop_front().unwrap_or((
            st.path.last().map(|o| o.location).unwrap_or_else(|| self.config.start_for(field.dims())),
            None,
        ));
        if let Some(h) = heading {
            st.heading = h;
        }

        // observe
        let feature = field.topic_at(location)?.to_vec();
        let predicted_reward = st.params.predict_unchecked(&feature);
        let new_cell = st.visited.insert(location);
        let true_reward = match &self.ground_truth {
            Some(map) => Some(map.get(location)?),
            None => None,
        };
        if new_cell && true_reward == Some(true) {
            self.cumulative_reward += 1;
        }
        st.path.push(Observation { location, feature: feature.clone() });
        st.queried.push(false);

        // receive label
        let mut label_received = None;
        if let Some(q) = st.in_flight {
            if t - q.requested_at >= self.config.labeling_period {
                let obs = &st.path[q.id];
                let request = LabelRequest {
                    id: q.id,
                    location: obs.location,
                    feature: &obs.feature,
                    requested_at: q.requested_at,
                    t,
                };
                if let Some(label) = operator.answer(&request) {
                    st.dataset.push(&obs.feature, label)?;
                    st.labeled.push((q.id, label));
                    st.params = fit(&st.dataset, &self.config.fit)?;
                    st.in_flight = None;
                    label_received = Some(LabelArrival { id: q.id, label, requested_at: q.requested_at });
                }
            }
        }

        // replan
        let planner = self.config.planner();
        let planner_state = PlannerState {
            location,
            heading: st.heading,
            visited: st.visited.clone(),
        };
        let mut plan_score = None;
        let mut plan_index = None;
        if self.config.replan == ReplanPolicy::EveryStep || st.plan.is_empty() {
            let plan = plan_trajectory(&planner_state, field, &st.params, &planner, &mut self.planner_rng)?;
            let best = plan.best_trajectory();
            st.plan = best
                .cells
                .iter()
                .enumerate()
                .map(|(j, c)| (*c, best.heading_at_step(j)))
                .collect();
            plan_score = Some(plan.best_score());
            plan_index = Some(plan.best);
            st.last_plan = Some(plan);
        }

        // select and dispatch
        let mut query = None;
        if st.in_flight.is_none() {
            let selection = select_query(
                &self.config,
                field,
                st,
                &planner_state,
                &mut self.selector_rng,
            )?;
            if let Some(sel) = selection {
                st.queried[sel.id] = true;
                st.in_flight = Some(InFlight { id: sel.id, requested_at: t });
                query = Some(QueryDispatch {
                    id: sel.id,
                    location: st.path[sel.id].location,
                    objective: sel.objective,
                    refits: sel.refits,
                });
            }
        }

        self.records.push(StepRecord {
            t,
            location,
            feature,
            predicted_reward,
            true_reward,
            new_cell,
            cumulative_reward: true_reward.map(|_| self.cumulative_reward),
            label_received,
            query,
            plan_score,
            plan_index,
            dataset_size: st.dataset.len(),
        });
        Ok(self.records.last())
    }

    pub fn run_to_end(&mut self, operator: &mut dyn Operator) -> Result<()> {
        while self.step(operator)?.is_some() {}
        Ok(())
    }

    /// Trace of the steps taken so far.
    pub fn trace(&self, field_id: Option<String>, map_id: Option<String>) -> MissionTrace {
        let field = self.field.as_ref();
        MissionTrace {
            header: TraceHeader::new(self.config.clone(), field, field_id, map_id),
            records: self.records.clone(),
            footer: TraceFooter {
                final_params: self.state.params.clone(),
                dropped_query: self.state.in_flight.map(|q| q.id),
                labels_received: self.state.dataset.len(),
            },
        }
    }

    pub fn into_trace(self, field_id: Option<String>, map_id: Option<String>) -> MissionTrace {
        self.trace(field_id, map_id)
    }
}

fn select_query(
    config: &MissionConfig,
    field: &TopicField,
    st: &MissionState,
    planner_state: &PlannerState,
    rng: &mut SimRng,
) -> Result<Option<Selection>> {
    let entries: Vec<PoolEntry<'_>> = st
        .path
        .iter()
        .enumerate()
        .filter(|(i, _)| !st.queried[*i])
        .map(|(i, o)| PoolEntry { id: i, feature: &o.feature, location: o.location })
        .collect();
    let pool = QueryPool::new(entries);
    let t = st.t;
    Ok(match config.selector {
        SelectorKind::Random => select_random(&pool, rng),
        SelectorKind::Uniform => {
            let latest = st.path.len().checked_sub(1).filter(|&i| !st.queried[i]);
            select_uniform(t, config.labeling_period, latest).map(|id| Selection {
                id,
                objective: None,
                refits: 0,
                rescoring_passes: 0,
            })
        }
        SelectorKind::Entropy => select_entropy(&pool, &st.params),
        SelectorKind::InfoGain => select_info_gain(&pool, &st.params, &st.dataset, &config.fit, config.pool_cap)?,
        SelectorKind::Regret => {
            let Some(plan) = &st.last_plan else {
                return Ok(None);
            };
            let mut ctx = RegretContext::new(field, &st.visited, config.gamma, &plan.candidates, plan.best)?;
            if config.regret_candidates == CandidateMode::Regenerate {
                ctx = ctx.regenerating(RegenerateInputs {
                    state: planner_state,
                    planner: config.planner(),
                    seed: SeedDeriver::new("regret-regenerate").u64(config.seed).u64(t as u64).finish(),
                });
            }
            select_regret(&pool, &st.params, &st.dataset, &ctx, &config.fit, config.pool_cap)?
        }
    })
}

/// Runs the full mission with `operator` answering queries and
/// `interest_map` used for true-reward accounting.
pub fn run_mission(
    config: &MissionConfig,
    field: &TopicField,
    interest_map: &InterestMap,
    operator: &mut dyn Operator,
) -> Result<MissionTrace> {
    let mut mission = Mission::new(config.clone(), field, Some(interest_map.clone()))?;
    mission.run_to_end(operator)?;
    Ok(mission.into_trace(None, None))
}

/// Summary metrics recomputed from the trace's path and the ground truth.
pub fn compute_metrics(trace: &MissionTrace, field: &TopicField, interest_map: &InterestMap) -> Result<MetricsRecord> {
    if field.dims() != interest_map.dims() {
        return Err(Error::param("field and interest map dimensions differ"));
    }
    let mut visited = VisitedSet::new(field.width(), field.height());
    let mut reward = 0usize;
    for r in &trace.records {
        if visited.insert(r.location) && interest_map.get(r.location)? {
            reward += 1;
        }
    }
    let steps = trace.header.config.t_max.max(1);
    Ok(MetricsRecord {
        reward_per_timestep: reward as f64 / steps as f64,
        final_map_loss: map_cross_entropy(&trace.footer.final_params, field, interest_map)?,
        queries_made: trace.records.iter().filter(|r| r.query.is_some()).count(),
        unique_cells_visited: visited.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_voronoi_topic_field_seeded, sample_interest_map, sample_interest_profile, VoronoiParams};
    use crate::rng::seeded;
    use std::f64::consts::LN_2;

    fn world(seed: u64, size: usize) -> (TopicField, InterestMap) {
        let params = VoronoiParams { width: size, height: size, topics: 4, n_cells: 10, sigma: 3.0 };
        let field = generate_voronoi_topic_field_seeded(&params, seed).unwrap();
        let mut rng = seeded(seed + 1000);
        let profile = sample_interest_profile(4, &mut rng).unwrap();
        let map = sample_interest_map(&field, &profile, &mut rng).unwrap();
        (field, map)
    }

    fn config(selector: SelectorKind, period: usize, t_max: usize) -> MissionConfig {
        MissionConfig {
            t_max,
            labeling_period: period,
            selector,
            n_trajectories: 12,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn one_step_mission() {
        let (field, map) = world(1, 20);
        let trace = run_mission(&config(SelectorKind::Regret, 1, 1), &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.footer.labels_received, 0);
        assert!(trace.records[0].cumulative_reward.unwrap() <= 1);
        assert_eq!(trace.records[0].location, GridLocation::new(10, 10));
    }

    #[test]
    fn uniform_period_one_labels_every_step() {
        let (field, map) = world(2, 20);
        let trace = run_mission(&config(SelectorKind::Uniform, 1, 40), &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        for r in &trace.records {
            assert_eq!(r.dataset_size, r.t - 1);
            assert_eq!(r.label_received.is_some(), r.t > 1);
        }
    }

    #[test]
    fn all_zero_map_gives_no_reward_and_learns_nothing_wrong() {
        let (field, _) = world(3, 20);
        let map = InterestMap::filled(20, 20, false);
        let trace = run_mission(&config(SelectorKind::Uniform, 1, 30), &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        assert_eq!(trace.records.last().unwrap().cumulative_reward, Some(0));
        let m = compute_metrics(&trace, &field, &map).unwrap();
        assert_eq!(m.reward_per_timestep, 0.0);
        // single-class labels keep the model uninformed
        assert!((m.final_map_loss - LN_2).abs() < 1e-12);
    }

    #[test]
    fn simulated_operator_reads_the_map() {
        let map = InterestMap::new(2, 1, vec![true, false]).unwrap();
        assert!(simulated_operator(&map, GridLocation::new(0, 0)).unwrap());
        assert!(!simulated_operator(&map, GridLocation::new(1, 0)).unwrap());
        for _ in 0..3 {
            assert!(simulated_operator(&map, GridLocation::new(0, 0)).unwrap());
        }
        assert!(simulated_operator(&map, GridLocation::new(2, 0)).is_err());
    }

    #[test]
    fn missions_are_deterministic_and_legal() {
        let (field, map) = world(4, 30);
        for selector in SelectorKind::ALL {
            let cfg = config(selector, 3, 60);
            let a = run_mission(&cfg, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
            let b = run_mission(&cfg, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
            assert_eq!(a.to_jsonl_string().unwrap(), b.to_jsonl_string().unwrap());
            assert_eq!(a.records.len(), 60);
            let mut prev: Option<GridLocation> = None;
            let mut last_cum = 0;
            let mut visited = VisitedSet::new(30, 30);
            let mut truth = 0;
            for r in &a.records {
                if let Some(p) = prev {
                    assert_eq!(p.chebyshev(&r.location), 1, "{selector}: one move per step");
                }
                prev = Some(r.location);
                let cum = r.cumulative_reward.unwrap();
                assert!(cum >= last_cum);
                last_cum = cum;
                if visited.insert(r.location) && map.get(r.location).unwrap() {
                    truth += 1;
                }
                assert_eq!(cum, truth);
            }
        }
    }

    #[test]
    fn bandwidth_protocol_holds() {
        let (field, map) = world(5, 25);
        for period in [1, 3, 7] {
            for selector in [SelectorKind::Random, SelectorKind::Uniform, SelectorKind::Entropy] {
                let trace = run_mission(&config(selector, period, 50), &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
                let mut arrivals = Vec::new();
                for r in &trace.records {
                    assert!(r.dataset_size <= r.t / period + 1);
                    if let Some(l) = r.label_received {
                        assert_eq!(r.t - l.requested_at, period);
                        arrivals.push(r.t);
                    }
                }
                for w in arrivals.windows(2) {
                    assert_eq!(w[1] - w[0], period, "{selector} p={period}");
                }
            }
        }
    }

    #[test]
    fn late_operator_delays_the_label() {
        let (field, map) = world(6, 20);
        let mut mission = Mission::new(config(SelectorKind::Uniform, 2, 20), &field, Some(map.clone())).unwrap();
        let mut silent = |_: &LabelRequest<'_>| None;
        mission.run_to_end(&mut silent).unwrap();
        assert_eq!(mission.state().dataset.len(), 0);
        let trace = mission.into_trace(None, None);
        assert!(trace.footer.dropped_query.is_some());
        assert_eq!(trace.records.iter().filter(|r| r.query.is_some()).count(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (field, map) = world(7, 10);
        for bad in [
            MissionConfig { t_max: 0, ..Default::default() },
            MissionConfig { labeling_period: 0, ..Default::default() },
            MissionConfig { gamma: 1.5, ..Default::default() },
            MissionConfig { start: Some(GridLocation::new(10, 0)), ..Default::default() },
        ] {
            assert!(matches!(Mission::new(bad, &field, Some(map.clone())), Err(Error::Config(_))));
        }
        let wrong = InterestMap::filled(9, 10, true);
        assert!(Mission::new(MissionConfig::default(), &field, Some(wrong)).is_err());
    }

    #[test]
    fn replan_on_completion_follows_whole_plans() {
        let (field, map) = world(8, 30);
        let cfg = MissionConfig { replan: ReplanPolicy::OnCompletion, ..config(SelectorKind::Entropy, 5, 60) };
        let trace = run_mission(&cfg, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        let replans: Vec<usize> = trace.records.iter().filter(|r| r.plan_score.is_some()).map(|r| r.t).collect();
        assert_eq!(replans[0], 1);
        for w in replans.windows(2) {
            assert_eq!(w[1] - w[0], 25);
        }
    }

    #[test]
    fn reward_rate_arithmetic() {
        // 300 steps through the first 30 cells of an all-interesting row, then back and forth
        let map = InterestMap::filled(40, 1, true);
        let values: Vec<f64> = (0..40).flat_map(|_| [1.0, 0.0]).collect();
        let field = TopicField::from_values(40, 1, 2, values, crate::field::FieldProvenance::Explicit).unwrap();
        let cfg = MissionConfig { t_max: 300, ..Default::default() };
        let mut trace = run_mission(&MissionConfig { t_max: 1, ..cfg.clone() }, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        trace.header.config = cfg;
        let template = trace.records[0].clone();
        trace.records = (0..300)
            .map(|t| {
                let k = t % 58;
                let x = if k < 30 { k } else { 58 - k };
                StepRecord { t: t + 1, location: GridLocation::new(x, 0), ..template.clone() }
            })
            .collect();
        let m = compute_metrics(&trace, &field, &map).unwrap();
        assert_eq!(m.unique_cells_visited, 30);
        assert_eq!(m.reward_per_timestep, 0.1);
        assert_eq!(m.final_map_loss, LN_2);
    }

    #[test]
    fn metrics_recompute_from_trace() {
        let (field, map) = world(9, 20);
        let trace = run_mission(&config(SelectorKind::InfoGain, 4, 80), &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        let m = compute_metrics(&trace, &field, &map).unwrap();
        let last = trace.records.last().unwrap();
        assert_eq!(m.reward_per_timestep, last.cumulative_reward.unwrap() as f64 / 80.0);
        assert!((0.0..=1.0).contains(&m.reward_per_timestep));
        assert_eq!(m.queries_made, trace.records.iter().filter(|r| r.query.is_some()).count());
        let loss = map_cross_entropy(&trace.footer.final_params, &field, &map).unwrap();
        assert_eq!(m.final_map_loss, loss);
    }
}
