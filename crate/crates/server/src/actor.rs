//! One task per session owns the [`Session`]; handlers talk to it over a
//! channel and read the snapshot and event log it publishes.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::MissedTickBehavior;

use coexplore_core::field::InterestMap;
use coexplore_core::live::{Session, SessionError, SessionEvent, SessionSnapshot, SubmitOutcome, TickOutcome};
use coexplore_core::selection::ObservationId;

pub enum Command {
    Submit { id: ObservationId, label: bool, reply: oneshot::Sender<Result<SubmitOutcome, SessionError>> },
    Tick { steps: usize, reply: oneshot::Sender<Result<TickReport, String>> },
    Trace { reply: oneshot::Sender<Result<String, String>> },
}

#[derive(Debug, serde::Serialize)]
pub struct TickReport {
    pub advanced: usize,
    pub outcome: TickOutcome,
}

/// State the session task publishes for readers.
pub struct Published {
    pub snapshot: RwLock<Arc<SessionSnapshot>>,
    pub events: RwLock<Vec<SessionEvent>>,
    /// Sequence number of the newest published event.
    pub last_event: watch::Sender<u64>,
}

impl Published {
    fn new(session: &Session) -> Result<Arc<Self>, String> {
        let snapshot = session.snapshot().map_err(|e| e.to_string())?;
        let (last_event, _) = watch::channel(0);
        Ok(Arc::new(Published { snapshot: RwLock::new(Arc::new(snapshot)), events: RwLock::new(Vec::new()), last_event }))
    }

    pub fn snapshot(&self) -> Arc<SessionSnapshot> {
        Arc::clone(&self.snapshot.read().unwrap())
    }

    pub fn events_after(&self, after: u64) -> Vec<SessionEvent> {
        let events = self.events.read().unwrap();
        events[(after as usize).min(events.len())..].to_vec()
    }

    fn publish(&self, session: &Session) {
        let published = self.events.read().unwrap().len() as u64;
        let fresh = session.events_after(Some(published));
        if !fresh.is_empty() {
            self.events.write().unwrap().extend_from_slice(fresh);
        }
        if let Ok(snap) = session.snapshot() {
            *self.snapshot.write().unwrap() = Arc::new(snap);
        }
        self.last_event.send_replace(session.last_event_id());
    }
}

pub struct SessionTask {
    pub session: Session,
    /// Answers queries from this map as soon as they are issued.
    pub auto_label: Option<InterestMap>,
    /// Where to write the trace once the mission ends.
    pub trace_dir: Option<PathBuf>,
}

pub fn spawn(task: SessionTask) -> Result<(mpsc::Sender<Command>, Arc<Published>), String> {
    let published = Published::new(&task.session)?;
    let (tx, rx) = mpsc::channel(64);
    tokio::spawn(run(task, rx, Arc::clone(&published)));
    Ok((tx, published))
}

fn auto_answer(session: &mut Session, map: Option<&InterestMap>) {
    let (Some(map), Some(q)) = (map, session.pending()) else { return };
    let (id, location) = (q.id, q.location);
    if let Ok(label) = map.get(location) {
        let _ = session.submit_label(id, label);
    }
}

fn tick_n(session: &mut Session, steps: usize, auto: Option<&InterestMap>) -> Result<TickReport, String> {
    let mut advanced = 0;
    let mut outcome = TickOutcome::Finished;
    for _ in 0..steps.max(1) {
        outcome = session.tick().map_err(|e| e.to_string())?;
        auto_answer(session, auto);
        match outcome {
            TickOutcome::Advanced { .. } => advanced += 1,
            _ => break,
        }
    }
    Ok(TickReport { advanced, outcome })
}

/// Publishes the session's state and, once the mission has ended, writes its trace.
fn settle(task: &mut SessionTask, published: &Published, trace_written: &mut bool) {
    published.publish(&task.session);
    if !task.session.is_finished() || *trace_written {
        return;
    }
    *trace_written = true;
    if let Some(dir) = &task.trace_dir {
        let path = dir.join(format!("{}.jsonl", task.session.id()));
        let written = task
            .session
            .trace()
            .to_jsonl_string()
            .map_err(|e| e.to_string())
            .and_then(|text| std::fs::write(&path, text).map_err(|e| e.to_string()));
        if let Err(e) = written {
            eprintln!("session {}: cannot write trace to {}: {e}", task.session.id(), path.display());
        }
    }
}

async fn run(mut task: SessionTask, mut rx: mpsc::Receiver<Command>, published: Arc<Published>) {
    let mut interval = task.session.tick_interval().map(|d| {
        let mut i = tokio::time::interval(d);
        i.set_missed_tick_behavior(MissedTickBehavior::Delay);
        i
    });
    let mut trace_written = false;
    loop {
        let ticking = interval.is_some() && !task.session.is_finished();
        let next_tick = async {
            match interval.as_mut() {
                Some(i) => {
                    i.tick().await;
                }
                None => std::future::pending().await,
            }
        };
        // replies go out only after the new state is visible to readers
        tokio::select! {
            cmd = rx.recv() => match cmd {
                None => break,
                Some(Command::Submit { id, label, reply }) => {
                    let result = task.session.submit_label(id, label);
                    settle(&mut task, &published, &mut trace_written);
                    let _ = reply.send(result);
                }
                Some(Command::Tick { steps, reply }) => {
                    let result = tick_n(&mut task.session, steps, task.auto_label.as_ref());
                    settle(&mut task, &published, &mut trace_written);
                    let _ = reply.send(result);
                }
                Some(Command::Trace { reply }) => {
                    let _ = reply.send(task.session.trace().to_jsonl_string().map_err(|e| e.to_string()));
                }
            },
            _ = next_tick, if ticking => {
                let _ = tick_n(&mut task.session, 1, task.auto_label.as_ref());
                settle(&mut task, &published, &mut trace_written);
            }
        }
    }
}
