//! Live missions with a human operator in the loop.
//!
//! A [`Session`] owns a mission and is driven by `tick()` and
//! `submit_label()` calls; it performs no I/O and keeps no clock of its own.
//! In step-on-label mode the robot pauses while a query is unanswered; in
//! timed mode the host ticks on a fixed interval and late labels simply stay
//! in flight. Either way an answered label is applied only once it has been
//! out for the labeling period, exactly as in a simulated mission.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{GridLocation, InterestMap, TopicField};
use crate::mission::{LabelRequest, Mission, MissionConfig, MissionTrace, StepRecord};
use crate::selection::{ObservationId, SelectorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    /// Advance only on `tick()`, and not while a query is unanswered.
    StepOnLabel,
    /// The host calls `tick()` every `tick_ms`; `0` means manual ticking only.
    Timed { tick_ms: u64 },
}

impl Default for ClockMode {
    fn default() -> Self {
        ClockMode::StepOnLabel
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mission: MissionConfig,
    pub clock: ClockMode,
    /// Half-width of the argmax-topic patch sent with each query.
    pub patch_radius: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { mission: MissionConfig::default(), clock: ClockMode::default(), patch_radius: 3 }
    }
}

/// The neighbourhood of a queried cell, as dominant topic indices (row-major).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub topics: Vec<usize>,
}

pub fn render_patch(field: &TopicField, center: GridLocation, radius: usize) -> Patch {
    let x0 = center.x.saturating_sub(radius);
    let y0 = center.y.saturating_sub(radius);
    let x1 = (center.x + radius + 1).min(field.width());
    let y1 = (center.y + radius + 1).min(field.height());
    let mut topics = Vec::with_capacity((x1 - x0) * (y1 - y0));
    for y in y0..y1 {
        for x in x0..x1 {
            topics.push(crate::field::argmax(field.cell(field.index_of(GridLocation::new(x, y)))));
        }
    }
    Patch { x0, y0, width: x1 - x0, height: y1 - y0, topics }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub id: ObservationId,
    pub location: GridLocation,
    pub feature: Vec<f64>,
    pub requested_at: usize,
    /// First timestep at which the label can be applied.
    pub due_at: usize,
    pub objective: Option<f64>,
    pub patch: Patch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Stepped { t: usize, location: GridLocation, cumulative_reward: Option<u64> },
    QueryIssued { query: PendingQuery },
    LabelSubmitted { id: ObservationId, label: bool },
    LabelApplied { id: ObservationId, label: bool, t: usize },
    Finished { t: usize, dropped_query: Option<ObservationId> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Starts at 1 and increases by one per event.
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TickOutcome {
    Advanced { t: usize, location: GridLocation },
    /// Waiting for the operator to label `id`.
    Blocked { id: ObservationId },
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Accepted,
    /// The same label was already given; nothing changed.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("observation {0} has no open query")]
    UnknownQuery(ObservationId),
    #[error("observation {id} was already labelled {existing}")]
    Conflict { id: ObservationId, existing: bool },
    #[error("mission is finished")]
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledObservation {
    pub id: ObservationId,
    pub location: GridLocation,
    pub label: bool,
}

/// Everything an operator console needs to draw the session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub t: usize,
    pub t_max: usize,
    pub finished: bool,
    pub selector: SelectorKind,
    pub labeling_period: usize,
    pub clock: ClockMode,
    pub width: usize,
    pub height: usize,
    pub location: Option<GridLocation>,
    pub path: Vec<GridLocation>,
    pub plan: Vec<GridLocation>,
    /// Predicted interest per cell, row-major.
    pub heat: Vec<f64>,
    pub dataset: Vec<LabeledObservation>,
    /// Unanswered query.
    pub pending: Option<PendingQuery>,
    /// Answered label waiting out the labeling period.
    pub delivering: Option<LabeledObservation>,
    pub cumulative_reward: Option<u64>,
    pub last_event: u64,
}

pub struct Session {
    id: String,
    config: SessionConfig,
    mission: Mission<Arc<TopicField>>,
    pending: Option<PendingQuery>,
    delivering: Option<LabeledObservation>,
    events: Vec<SessionEvent>,
}

impl Session {
    /// `ground_truth`, if given, is only used to score true reward.
    pub fn new(id: impl Into<String>, config: SessionConfig, field: Arc<TopicField>, ground_truth: Option<InterestMap>) -> Result<Self> {
        let mission = Mission::new(config.mission.clone(), field, ground_truth)?;
        Ok(Session { id: id.into(), config, mission, pending: None, delivering: None, events: Vec::new() })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn mission(&self) -> &Mission<Arc<TopicField>> {
        &self.mission
    }

    pub fn is_finished(&self) -> bool {
        self.mission.is_finished()
    }

    pub fn pending(&self) -> Option<&PendingQuery> {
        self.pending.as_ref()
    }

    pub fn delivering(&self) -> Option<&LabeledObservation> {
        self.delivering.as_ref()
    }

    /// Interval at which the host should tick, for timed sessions.
    pub fn tick_interval(&self) -> Option<Duration> {
        match self.config.clock {
            ClockMode::Timed { tick_ms } if tick_ms > 0 => Some(Duration::from_millis(tick_ms)),
            _ => None,
        }
    }

    fn push(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(SessionEvent { seq, kind });
    }

    /// Events with `seq > after` (all events when `after` is `None`).
    pub fn events_after(&self, after: Option<u64>) -> &[SessionEvent] {
        let start = after.map_or(0, |a| (a as usize).min(self.events.len()));
        &self.events[start..]
    }

    pub fn last_event_id(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn submit_label(&mut self, id: ObservationId, label: bool) -> std::result::Result<SubmitOutcome, SessionError> {
        let earlier = self
            .mission
            .state()
            .labeled
            .iter()
            .map(|&(i, l)| (i, l))
            .chain(self.delivering.as_ref().map(|d| (d.id, d.label)))
            .find(|(i, _)| *i == id);
        if let Some((_, existing)) = earlier {
            return if existing == label { Ok(SubmitOutcome::Duplicate) } else { Err(SessionError::Conflict { id, existing }) };
        }
        if self.is_finished() {
            return Err(SessionError::Finished);
        }
        match self.pending.take() {
            Some(q) if q.id == id => {
                self.delivering = Some(LabeledObservation { id, location: q.location, label });
                self.push(EventKind::LabelSubmitted { id, label });
                Ok(SubmitOutcome::Accepted)
            }
            other => {
                self.pending = other;
                Err(SessionError::UnknownQuery(id))
            }
        }
    }

    pub fn tick(&mut self) -> Result<TickOutcome> {
        if self.is_finished() {
            return Ok(TickOutcome::Finished);
        }
        if self.config.clock == ClockMode::StepOnLabel {
            if let Some(q) = &self.pending {
                return Ok(TickOutcome::Blocked { id: q.id });
            }
        }
        let answer = self.delivering.as_ref().map(|d| (d.id, d.label));
        let mut operator = |req: &LabelRequest<'_>| answer.filter(|(id, _)| *id == req.id).map(|(_, l)| l);
        let record: StepRecord = match self.mission.step(&mut operator)? {
            Some(r) => r.clone(),
            None => return Ok(TickOutcome::Finished),
        };
        self.push(EventKind::Stepped { t: record.t, location: record.location, cumulative_reward: record.cumulative_reward });
        if let Some(l) = record.label_received {
            self.delivering = None;
            self.push(EventKind::LabelApplied { id: l.id, label: l.label, t: record.t });
        }
        if let Some(q) = record.query {
            let query = PendingQuery {
                id: q.id,
                location: q.location,
                feature: self.mission.state().path[q.id].feature.clone(),
                requested_at: record.t,
                due_at: record.t + self.config.mission.labeling_period,
                objective: q.objective,
                patch: render_patch(self.mission.field(), q.location, self.config.patch_radius),
            };
            self.pending = Some(query.clone());
            self.push(EventKind::QueryIssued { query });
        }
        if self.is_finished() {
            // an unanswered or undelivered query can no longer be used
            let dropped = self.mission.state().in_flight.map(|q| q.id);
            self.pending = None;
            self.delivering = None;
            self.push(EventKind::Finished { t: record.t, dropped_query: dropped });
        }
        Ok(TickOutcome::Advanced { t: record.t, location: record.location })
    }

    pub fn snapshot(&self) -> Result<SessionSnapshot> {
        let st = self.mission.state();
        let field = self.mission.field();
        let mc = &self.config.mission;
        Ok(SessionSnapshot {
            id: self.id.clone(),
            t: st.t,
            t_max: mc.t_max,
            finished: self.is_finished(),
            selector: mc.selector,
            labeling_period: mc.labeling_period,
            clock: self.config.clock,
            width: field.width(),
            height: field.height(),
            location: st.path.last().map(|o| o.location),
            path: st.path.iter().map(|o| o.location).collect(),
            plan: st.plan.iter().map(|(c, _)| *c).collect(),
            heat: st.params.predict_field(field)?,
            dataset: st
                .labeled
                .iter()
                .map(|&(id, label)| LabeledObservation { id, location: st.path[id].location, label })
                .collect(),
            pending: self.pending.clone(),
            delivering: self.delivering.clone(),
            cumulative_reward: self.mission.cumulative_reward(),
            last_event: self.last_event_id(),
        })
    }

    pub fn trace(&self) -> MissionTrace {
        self.mission.trace(None, None)
    }
}
