//! JSON-lines mission traces.
//!
//! Line 1 is the header (`"type":"header"`), then one `"type":"step"` line per
//! timestep, then a `"type":"footer"` line with the final model.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{MissionConfig, StepRecord};
use crate::error::{Error, Result};
use crate::field::TopicField;
use crate::reward::RewardModelParams;
use crate::selection::ObservationId;

pub const TRACE_SCHEMA: &str = "coexplore-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    pub config: MissionConfig,
    pub width: usize,
    pub height: usize,
    pub topics: usize,
    pub field_id: Option<String>,
    pub map_id: Option<String>,
}

impl TraceHeader {
    pub fn new(config: MissionConfig, field: &TopicField, field_id: Option<String>, map_id: Option<String>) -> Self {
        TraceHeader {
            schema: TRACE_SCHEMA.into(),
            version: TRACE_VERSION,
            config,
            width: field.width(),
            height: field.height(),
            topics: field.topics(),
            field_id,
            map_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub final_params: RewardModelParams,
    /// Query still in flight when the mission ended; its label never arrived.
    pub dropped_query: Option<ObservationId>,
    pub labels_received: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionTrace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
    pub footer: TraceFooter,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(StepRecord),
    Footer(TraceFooter),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a TraceHeader),
    Step(&'a StepRecord),
    Footer(&'a TraceFooter),
}

fn bad(detail: impl Into<String>) -> Error {
    Error::format("mission trace", detail)
}

impl MissionTrace {
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let mut put = |line: LineRef<'_>| -> Result<()> {
            serde_json::to_writer(&mut out, &line).map_err(|e| bad(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))
        };
        put(LineRef::Header(&self.header))?;
        for r in &self.records {
            put(LineRef::Step(r))?;
        }
        put(LineRef::Footer(&self.footer))
    }

    pub fn to_jsonl_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        String::from_utf8(buf).map_err(|e| bad(e.to_string()))
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut header = None;
        let mut footer = None;
        let mut records = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<trace>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
            match parsed {
                Line::Header(h) if header.is_none() && n == 0 => {
                    if h.schema != TRACE_SCHEMA || h.version != TRACE_VERSION {
                        return Err(bad(format!("unsupported schema {} v{}", h.schema, h.version)));
                    }
                    header = Some(h)
                }
                Line::Step(r) if header.is_some() && footer.is_none() => records.push(r),
                Line::Footer(f) if header.is_some() && footer.is_none() => footer = Some(f),
                _ => return Err(bad(format!("line {}: out of order", n + 1))),
            }
        }
        Ok(MissionTrace {
            header: header.ok_or_else(|| bad("missing header"))?,
            records,
            footer: footer.ok_or_else(|| bad("missing footer"))?,
        })
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_voronoi_topic_field_seeded, InterestMap, VoronoiParams};
    use crate::mission::{run_mission, SimulatedOperator};
    use crate::selection::SelectorKind;

    #[test]
    fn jsonl_round_trip_is_exact() {
        let params = VoronoiParams { width: 15, height: 15, topics: 3, n_cells: 6, sigma: 2.0 };
        let field = generate_voronoi_topic_field_seeded(&params, 3).unwrap();
        let labels = field.argmax_topics().iter().map(|&k| k == 0).collect();
        let map = InterestMap::new(15, 15, labels).unwrap();
        let config = MissionConfig { t_max: 30, labeling_period: 3, selector: SelectorKind::Regret, n_trajectories: 8, ..Default::default() };
        let trace = run_mission(&config, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
        let text = trace.to_jsonl_string().unwrap();
        assert_eq!(text.lines().count(), 32);
        let back = MissionTrace::from_jsonl_str(&text).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.to_jsonl_string().unwrap(), text);
    }

    #[test]
    fn rejects_malformed_traces() {
        assert!(MissionTrace::from_jsonl_str("").is_err());
        assert!(MissionTrace::from_jsonl_str("{\"type\":\"footer\"}\n").is_err());
        assert!(MissionTrace::from_jsonl_str("not json\n").is_err());
    }
}
