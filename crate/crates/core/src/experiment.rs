//! Batch experiments: many maps × selectors × labeling periods × trials.
//!
//! Every rollout derives its seed from the plan's master seed and its own
//! coordinates, so a batch gives the same rows whether it runs serially or
//! across a thread pool, in any order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::io::{load_label_raster, save_field, save_interest_map};
use crate::field::{
    generate_voronoi_topic_field_seeded, ingest_label_raster, sample_interest_map, sample_interest_profile,
    InterestMap, InterestProfile, TopicField, VoronoiParams,
};
use crate::mission::{compute_metrics, run_lawnmower, Mission, MissionConfig, SimulatedOperator};
use crate::reward::{expected_map_cross_entropy, RewardModelParams};
use crate::rng::{rollout_seed, seeded, SeedDeriver};
use crate::selection::SelectorKind;

/// Where the topic fields of a batch come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    Voronoi {
        count: usize,
        #[serde(default)]
        params: VoronoiParams,
    },
    Raster {
        paths: Vec<PathBuf>,
        #[serde(default = "default_radius")]
        smoothing_radius: usize,
        #[serde(default)]
        ignore_label: Option<i64>,
    },
}

fn default_radius() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub seed: u64,
    pub maps: MapSource,
    pub interest_maps_per_field: usize,
    pub trials: usize,
    pub periods: Vec<usize>,
    pub selectors: Vec<SelectorKind>,
    pub include_lawnmower: bool,
    /// Template for every rollout; its selector, period and seed are overridden.
    pub mission: MissionConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            name: "experiment".into(),
            seed: 0,
            maps: MapSource::Voronoi { count: 10, params: VoronoiParams::default() },
            interest_maps_per_field: 1,
            trials: 8,
            periods: vec![1, 3, 10, 30, 100],
            selectors: vec![SelectorKind::Random, SelectorKind::Uniform, SelectorKind::InfoGain, SelectorKind::Regret],
            include_lawnmower: true,
            mission: MissionConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_toml_str(&text)?;
        // raster paths are relative to the plan file
        if let MapSource::Raster { paths, .. } = &mut plan.maps {
            let base = path.parent().unwrap_or(Path::new(""));
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.interest_maps_per_field == 0 {
            return Err(Error::Config("trials and interest_maps_per_field must be positive".into()));
        }
        if self.periods.iter().any(|&p| p == 0) {
            return Err(Error::Config("labeling periods must be positive".into()));
        }
        match &self.maps {
            MapSource::Voronoi { count, params } => {
                if *count == 0 {
                    return Err(Error::Config("map count must be positive".into()));
                }
                params.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
            MapSource::Raster { paths, .. } if paths.is_empty() => {
                return Err(Error::Config("raster source lists no paths".into()))
            }
            MapSource::Raster { .. } => {}
        }
        let mut probe = self.mission.clone();
        probe.labeling_period = 1;
        probe.validate()
    }

    /// Number of rows `run_batch` will produce.
    pub fn row_count(&self) -> usize {
        let maps = match &self.maps {
            MapSource::Voronoi { count, .. } => *count,
            MapSource::Raster { paths, .. } => paths.len(),
        };
        let per_world = self.periods.len() * (self.selectors.len() * self.trials + usize::from(self.include_lawnmower));
        maps * self.interest_maps_per_field * per_world
    }
}

/// An interest profile and the binary map sampled from it.
#[derive(Clone, Debug)]
pub struct InterestSample {
    pub id: String,
    pub profile: InterestProfile,
    pub map: InterestMap,
}

/// A topic field and the interest maps drawn on it.
#[derive(Clone, Debug)]
pub struct World {
    pub map_index: usize,
    pub map_id: String,
    pub field: Arc<TopicField>,
    pub interest_maps: Vec<InterestSample>,
}

/// Builds every field and interest map the plan refers to.
pub fn prepare_worlds(plan: &ExperimentPlan) -> Result<Vec<World>> {
    let fields: Vec<(String, TopicField)> = match &plan.maps {
        MapSource::Voronoi { count, params } => (0..*count)
            .map(|i| {
                let seed = SeedDeriver::new("voronoi-field").u64(plan.seed).u64(i as u64).finish();
                Ok((format!("voronoi-{i:03}"), generate_voronoi_topic_field_seeded(params, seed)?))
            })
            .collect::<Result<_>>()?,
        MapSource::Raster { paths, smoothing_radius, ignore_label } => paths
            .iter()
            .map(|p| {
                let raster = load_label_raster(p)?;
                let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
                Ok((id, ingest_label_raster(&raster, *smoothing_radius, *ignore_label)?))
            })
            .collect::<Result<_>>()?,
    };
    fields
        .into_iter()
        .enumerate()
        .map(|(i, (map_id, field))| {
            let interest_maps = (0..plan.interest_maps_per_field)
                .map(|j| {
                    let mut rng = seeded(SeedDeriver::new("interest-map").u64(plan.seed).u64(i as u64).u64(j as u64).finish());
                    let profile = sample_interest_profile(field.topics(), &mut rng)?;
                    let map = sample_interest_map(&field, &profile, &mut rng)?;
                    Ok(InterestSample { id: format!("{map_id}/im{j}"), profile, map })
                })
                .collect::<Result<_>>()?;
            Ok(World { map_index: i, map_id, field: Arc::new(field), interest_maps })
        })
        .collect()
}

/// Writes each world's field and interest maps into `dir`.
pub fn save_worlds(worlds: &[World], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for w in worlds {
        let path = dir.join(format!("{}.field", w.map_id.replace('/', "_")));
        save_field(&w.field, &path)?;
        written.push(path);
        for sample in &w.interest_maps {
            let path = dir.join(format!("{}.imap", sample.id.replace('/', "_")));
            save_interest_map(&sample.map, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// An adaptive selector or the lawnmower baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Lawnmower,
    Adaptive(SelectorKind),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Lawnmower => f.write_str("lawnmower"),
            Method::Adaptive(k) => f.write_str(k.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("lawnmower") {
            Ok(Method::Lawnmower)
        } else {
            s.parse().map(Method::Adaptive)
        }
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub map_id: String,
    pub interest_map_id: String,
    pub method: Method,
    pub period: usize,
    pub trial: usize,
    pub seed: u64,
    pub reward_per_timestep: f64,
    /// Cross-entropy against the sampled binary map.
    pub final_map_loss: f64,
    /// Cross-entropy against the interest probabilities the map was sampled from.
    pub expected_map_loss: f64,
    pub queries_made: usize,
    pub unique_cells_visited: usize,
    pub runtime_ms: f64,
}

pub const RESULT_COLUMNS: [&str; 12] = [
    "map_id",
    "interest_map_id",
    "method",
    "period",
    "trial",
    "seed",
    "reward_per_timestep",
    "final_map_loss",
    "expected_map_loss",
    "queries_made",
    "unique_cells_visited",
    "runtime_ms",
];

/// 17 significant digits: enough to reproduce any f64 exactly.
fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Equality on everything except wall-clock runtime.
    pub fn same_results(&self, other: &ResultTable) -> bool {
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| ResultRow { runtime_ms: 0.0, ..a.clone() } == ResultRow { runtime_ms: 0.0, ..b.clone() })
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(RESULT_COLUMNS).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.map_id.clone(),
                r.interest_map_id.clone(),
                r.method.to_string(),
                r.period.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                sig17(r.reward_per_timestep),
                sig17(r.final_map_loss),
                sig17(r.expected_map_loss),
                r.queries_made.to_string(),
                r.unique_cells_visited.to_string(),
                sig17(r.runtime_ms),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(|e| Error::format("result csv", e.to_string()))?;
        Ok(ResultTable { rows })
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.rows {
            serde_json::to_writer(&mut out, r).map_err(|e| Error::Data(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(&line).map_err(|e| Error::format("result jsonl", format!("line {}: {e}", n + 1)))?);
        }
        Ok(ResultTable { rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let out = std::io::BufWriter::new(file);
        if is_jsonl(path) {
            self.write_jsonl(out)
        } else {
            self.write_csv(out)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        if is_jsonl(path) {
            Self::read_jsonl(std::io::BufReader::new(file))
        } else {
            Self::read_csv(file)
        }
    }
}

fn is_jsonl(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation over √n).
    pub sem: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, sem: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { mean, sem: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Summary { mean, sem: (var / n as f64).sqrt() }
    }

    /// Mean ± one standard error.
    pub fn interval(&self) -> (f64, f64) {
        (self.mean - self.sem, self.mean + self.sem)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub period: usize,
    pub n: usize,
    pub reward: Summary,
    pub map_loss: Summary,
    pub expected_map_loss: Summary,
    pub queries: Summary,
}

/// Groups rows by (method, period), ordered lawnmower first then by selector
/// and period. The result does not depend on row order.
pub fn aggregate(table: &ResultTable) -> Result<Vec<AggregateRow>> {
    if table.rows.is_empty() {
        return Err(Error::Data("cannot aggregate an empty result table".into()));
    }
    let mut groups: BTreeMap<(Method, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in &table.rows {
        groups.entry((r.method, r.period)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((method, period), mut rows)| {
            // fixed summation order keeps means bit-stable under row permutations
            rows.sort_by(|a, b| (&a.map_id, &a.interest_map_id, a.trial).cmp(&(&b.map_id, &b.interest_map_id, b.trial)));
            let col = |f: fn(&ResultRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            AggregateRow {
                method,
                period,
                n: rows.len(),
                reward: Summary::of(&col(|r| r.reward_per_timestep)),
                map_loss: Summary::of(&col(|r| r.final_map_loss)),
                expected_map_loss: Summary::of(&col(|r| r.expected_map_loss)),
                queries: Summary::of(&col(|r| r.queries_made as f64)),
            }
        })
        .collect())
}

pub fn find_aggregate(rows: &[AggregateRow], method: Method, period: usize) -> Option<&AggregateRow> {
    rows.iter().find(|r| r.method == method && r.period == period)
}

/// One flat line of an exported summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub selector: Method,
    pub period: usize,
    pub n: usize,
    pub reward_mean: f64,
    pub reward_sem: f64,
    pub reward_ci_low: f64,
    pub reward_ci_high: f64,
    pub map_loss_mean: f64,
    pub map_loss_sem: f64,
    pub expected_map_loss_mean: f64,
    pub expected_map_loss_sem: f64,
    pub queries_mean: f64,
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "selector",
    "period",
    "n",
    "reward_mean",
    "reward_sem",
    "reward_ci_low",
    "reward_ci_high",
    "map_loss_mean",
    "map_loss_sem",
    "expected_map_loss_mean",
    "expected_map_loss_sem",
    "queries_mean",
];

impl From<&AggregateRow> for SummaryRecord {
    fn from(a: &AggregateRow) -> Self {
        let (lo, hi) = a.reward.interval();
        SummaryRecord {
            selector: a.method,
            period: a.period,
            n: a.n,
            reward_mean: a.reward.mean,
            reward_sem: a.reward.sem,
            reward_ci_low: lo,
            reward_ci_high: hi,
            map_loss_mean: a.map_loss.mean,
            map_loss_sem: a.map_loss.sem,
            expected_map_loss_mean: a.expected_map_loss.mean,
            expected_map_loss_sem: a.expected_map_loss.sem,
            queries_mean: a.queries.mean,
        }
    }
}

pub fn write_summary_csv(rows: &[AggregateRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(SUMMARY_COLUMNS).map_err(err)?;
    for a in rows {
        let r = SummaryRecord::from(a);
        let mut fields = vec![r.selector.to_string(), r.period.to_string(), r.n.to_string()];
        fields.extend(
            [
                r.reward_mean,
                r.reward_sem,
                r.reward_ci_low,
                r.reward_ci_high,
                r.map_loss_mean,
                r.map_loss_sem,
                r.expected_map_loss_mean,
                r.expected_map_loss_sem,
                r.queries_mean,
            ]
            .map(sig17),
        );
        w.write_record(fields).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_summary_jsonl(rows: &[AggregateRow], mut out: impl Write) -> Result<()> {
    for a in rows {
        serde_json::to_writer(&mut out, &SummaryRecord::from(a)).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn read_summary_csv(input: impl Read) -> Result<Vec<SummaryRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRecord>, _>>()
        .map_err(|e| Error::format("summary csv", e.to_string()))
}

pub fn save_summary(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let out = std::io::BufWriter::new(file);
    if is_jsonl(path) {
        write_summary_jsonl(rows, out)
    } else {
        write_summary_csv(rows, out)
    }
}

/// Plain-text table of aggregates.
pub fn format_report(rows: &[AggregateRow]) -> String {
    let mut out = format!(
        "{:<10} {:>6} {:>5}  {:>18}  {:>18}  {:>8}\n",
        "method", "period", "n", "reward/step ± sem", "map loss ± sem", "queries"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>6} {:>5}  {:>9.4} ± {:<6.4}  {:>9.4} ± {:<6.4}  {:>8.1}\n",
            r.method.to_string(),
            r.period,
            r.n,
            r.reward.mean,
            r.reward.sem,
            r.map_loss.mean,
            r.map_loss.sem,
            r.queries.mean
        ));
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct BatchOptions {
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    pub serial: bool,
    /// Write one JSONL trace per adaptive rollout here.
    pub trace_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct Job {
    world: usize,
    interest_map: usize,
    method: Method,
    period: usize,
    trial: usize,
}

fn jobs(plan: &ExperimentPlan, worlds: &[World]) -> Vec<Job> {
    let mut out = Vec::with_capacity(plan.row_count());
    for (w, world) in worlds.iter().enumerate() {
        for im in 0..world.interest_maps.len() {
            for &period in &plan.periods {
                if plan.include_lawnmower {
                    out.push(Job { world: w, interest_map: im, method: Method::Lawnmower, period, trial: 0 });
                }
                for &sel in &plan.selectors {
                    for trial in 0..plan.trials {
                        out.push(Job { world: w, interest_map: im, method: Method::Adaptive(sel), period, trial });
                    }
                }
            }
        }
    }
    out
}

fn run_job(plan: &ExperimentPlan, worlds: &[World], job: Job, trace_dir: Option<&Path>) -> Result<ResultRow> {
    let world = &worlds[job.world];
    let sample = &world.interest_maps[job.interest_map];
    let (im_id, map) = (&sample.id, &sample.map);
    let seed = rollout_seed(plan.seed, world.map_index, job.interest_map, &job.method.to_string(), job.period, job.trial);
    let started = Instant::now();
    let (metrics, final_params) = match job.method {
        Method::Lawnmower => {
            let start = plan.mission.start_for(world.field.dims());
            (run_lawnmower(map, start, plan.mission.t_max)?, RewardModelParams::uninformed(world.field.topics()))
        }
        Method::Adaptive(selector) => {
            let config = MissionConfig { selector, labeling_period: job.period, seed, ..plan.mission.clone() };
            let mut mission = Mission::new(config, Arc::clone(&world.field), Some(map.clone()))?;
            mission.run_to_end(&mut SimulatedOperator::new(map))?;
            let trace = mission.into_trace(Some(world.map_id.clone()), Some(im_id.clone()));
            if let Some(dir) = trace_dir {
                let name = format!("{}_{}_p{}_t{}.jsonl", im_id.replace('/', "_"), job.method, job.period, job.trial);
                let path = dir.join(name);
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                trace.write_jsonl(std::io::BufWriter::new(file))?;
            }
            (compute_metrics(&trace, &world.field, map)?, trace.footer.final_params)
        }
    };
    Ok(ResultRow {
        map_id: world.map_id.clone(),
        interest_map_id: im_id.clone(),
        method: job.method,
        period: job.period,
        trial: job.trial,
        seed,
        reward_per_timestep: metrics.reward_per_timestep,
        final_map_loss: metrics.final_map_loss,
        expected_map_loss: expected_map_cross_entropy(&final_params, &world.field, &sample.profile)?,
        queries_made: metrics.queries_made,
        unique_cells_visited: metrics.unique_cells_visited,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs every rollout of `plan` on prepared worlds. Rows come back in plan
/// order regardless of scheduling.
pub fn run_batch_on(plan: &ExperimentPlan, worlds: &[World], options: &BatchOptions) -> Result<ResultTable> {
    plan.validate()?;
    if let Some(dir) = &options.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let jobs = jobs(plan, worlds);
    let trace_dir = options.trace_dir.as_deref();
    let rows: Vec<Result<ResultRow>> = if options.serial || options.jobs == Some(1) {
        jobs.iter().map(|&j| run_job(plan, worlds, j, trace_dir)).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = options.jobs {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|&j| run_job(plan, worlds, j, trace_dir)).collect())
    };
    Ok(ResultTable { rows: rows.into_iter().collect::<Result<_>>()? })
}

pub fn run_batch(plan: &ExperimentPlan, options: &BatchOptions) -> Result<ResultTable> {
    let worlds = prepare_worlds(plan)?;
    run_batch_on(plan, &worlds, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> ExperimentPlan {
        ExperimentPlan {
            seed: 11,
            maps: MapSource::Voronoi {
                count: 2,
                params: VoronoiParams { width: 20, height: 20, topics: 4, n_cells: 8, sigma: 3.0 },
            },
            trials: 2,
            periods: vec![1, 5],
            mission: MissionConfig { t_max: 30, n_trajectories: 10, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn plan_parses_from_toml() {
        let text = r#"
            name = "desk"
            seed = 4
            trials = 3
            periods = [10, 30]
            selectors = ["random", "regret"]
            [maps]
            kind = "voronoi"
            count = 5
            [maps.params]
            width = 50
            [mission]
            t_max = 120
        "#;
        let plan = ExperimentPlan::from_toml_str(text).unwrap();
        assert_eq!(plan.trials, 3);
        assert_eq!(plan.selectors, vec![SelectorKind::Random, SelectorKind::Regret]);
        assert_eq!(plan.maps, MapSource::Voronoi { count: 5, params: VoronoiParams { width: 50, ..Default::default() } });
        assert_eq!(plan.mission.t_max, 120);
        assert_eq!(plan.mission.n_trajectories, 50);
        assert_eq!(plan.row_count(), 5 * 2 * (2 * 3 + 1));
        let back = ExperimentPlan::from_toml_str(&plan.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn plan_validation() {
        assert!(ExperimentPlan::from_toml_str("periods = [0]").is_err());
        assert!(ExperimentPlan::from_toml_str("trials = 0").is_err());
        assert!(ExperimentPlan::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentPlan::from_toml_str("[maps]\nkind = \"raster\"\npaths = []").is_err());
        assert!(ExperimentPlan::from_toml_str("[mission]\ngamma = 2.0").is_err());
    }

    #[test]
    fn serial_and_parallel_batches_agree() {
        let plan = small_plan();
        let serial = run_batch(&plan, &BatchOptions { serial: true, ..Default::default() }).unwrap();
        let parallel = run_batch(&plan, &BatchOptions { jobs: Some(3), ..Default::default() }).unwrap();
        assert_eq!(serial.rows.len(), plan.row_count());
        assert!(serial.same_results(&parallel));
        let again = run_batch(&plan, &BatchOptions { serial: true, ..Default::default() }).unwrap();
        assert!(serial.same_results(&again));
    }

    #[test]
    fn rollout_seeds_are_distinct() {
        let table = run_batch(&small_plan(), &BatchOptions { serial: true, ..Default::default() }).unwrap();
        let mut seeds: Vec<u64> = table.rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), table.rows.len());
    }

    #[test]
    fn tables_round_trip_through_csv_and_jsonl() {
        let table = run_batch(&small_plan(), &BatchOptions::default()).unwrap();
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        assert_eq!(ResultTable::read_csv(&csv[..]).unwrap(), table);
        let mut jsonl = Vec::new();
        table.write_jsonl(&mut jsonl).unwrap();
        assert_eq!(ResultTable::read_jsonl(&jsonl[..]).unwrap(), table);
        let dir = tempfile::tempdir().unwrap();
        for name in ["r.csv", "r.jsonl"] {
            table.save(dir.path().join(name)).unwrap();
            assert_eq!(ResultTable::load(dir.path().join(name)).unwrap(), table);
        }
    }

    #[test]
    fn empty_table_exports_header_only() {
        let mut csv = Vec::new();
        ResultTable::default().write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv.clone()).unwrap().trim_end(), RESULT_COLUMNS.join(","));
        assert_eq!(ResultTable::read_csv(&csv[..]).unwrap(), ResultTable::default());
        assert!(aggregate(&ResultTable::default()).is_err());
    }

    #[test]
    fn csv_floats_carry_17_significant_digits() {
        let table = run_batch(&small_plan(), &BatchOptions::default()).unwrap();
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let row = text.lines().nth(1).unwrap();
        let reward = row.split(',').nth(6).unwrap();
        let mantissa = reward.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17, "{reward}");
    }

    #[test]
    fn one_map_one_selector_two_trials() {
        let plan = ExperimentPlan {
            selectors: vec![SelectorKind::Random],
            periods: vec![3],
            include_lawnmower: false,
            maps: MapSource::Voronoi { count: 1, params: VoronoiParams { width: 10, height: 10, topics: 3, n_cells: 4, sigma: 2.0 } },
            ..small_plan()
        };
        let table = run_batch(&plan, &BatchOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_ne!(table.rows[0].seed, table.rows[1].seed);
        assert_eq!(run_batch(&plan, &BatchOptions::default()).unwrap().rows.len(), 2);
    }

    #[test]
    fn aggregation_matches_streaming_oracle_and_ignores_order() {
        let table = run_batch(&small_plan(), &BatchOptions::default()).unwrap();
        let agg = aggregate(&table).unwrap();
        for a in &agg {
            // Welford's single-pass recurrence
            let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
            for r in table.rows.iter().filter(|r| r.method == a.method && r.period == a.period) {
                n += 1.0;
                let delta = r.reward_per_timestep - mean;
                mean += delta / n;
                m2 += delta * (r.reward_per_timestep - mean);
            }
            let sem = if n > 1.0 { (m2 / (n - 1.0) / n).sqrt() } else { 0.0 };
            assert!((a.reward.mean - mean).abs() < 1e-12);
            assert!((a.reward.sem - sem).abs() < 1e-12);
        }
        let mut shuffled = table.clone();
        shuffled.rows.reverse();
        shuffled.rows.rotate_left(5);
        assert_eq!(aggregate(&shuffled).unwrap(), agg);
    }

    #[test]
    fn summary_exports_round_trip() {
        let table = run_batch(&small_plan(), &BatchOptions::default()).unwrap();
        let agg = aggregate(&table).unwrap();
        let mut csv = Vec::new();
        write_summary_csv(&agg, &mut csv).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.starts_with("selector,period,n,reward_mean,reward_sem"));
        let back = read_summary_csv(&csv[..]).unwrap();
        let expected: Vec<SummaryRecord> = agg.iter().map(SummaryRecord::from).collect();
        assert_eq!(back, expected);
        let mut jsonl = Vec::new();
        write_summary_jsonl(&agg, &mut jsonl).unwrap();
        assert_eq!(String::from_utf8(jsonl).unwrap().lines().count(), agg.len());
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(Summary::of(&[0.0, 1.0]), Summary { mean: 0.5, sem: 0.5 });
        assert_eq!(Summary::of(&[0.3; 5]).sem, 0.0);
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sample sd = sqrt(5/3), sem = sd / 2
        assert!((s.sem - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[7.0]).sem, 0.0);
        assert!(Summary::of(&[]).mean.is_nan());
        assert_eq!(s.interval(), (2.5 - s.sem, 2.5 + s.sem));
    }

    #[test]
    fn aggregation_groups_by_method_and_period() {
        let plan = small_plan();
        let table = run_batch(&plan, &BatchOptions::default()).unwrap();
        let agg = aggregate(&table).unwrap();
        assert_eq!(agg.len(), 2 * (1 + plan.selectors.len()));
        assert_eq!(agg[0].method, Method::Lawnmower);
        let regret = find_aggregate(&agg, Method::Adaptive(SelectorKind::Regret), 5).unwrap();
        assert_eq!(regret.n, 2 * 2);
        let report = format_report(&agg);
        assert!(report.contains("regret"));
        assert_eq!(report.lines().count(), agg.len() + 1);
    }

    #[test]
    fn traces_are_written_when_requested() {
        let mut plan = small_plan();
        plan.maps = MapSource::Voronoi { count: 1, params: VoronoiParams { width: 12, height: 12, topics: 3, n_cells: 4, sigma: 2.0 } };
        plan.trials = 1;
        plan.periods = vec![3];
        let dir = tempfile::tempdir().unwrap();
        run_batch(&plan, &BatchOptions { trace_dir: Some(dir.path().into()), ..Default::default() }).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), plan.selectors.len());
    }

    #[test]
    fn raster_worlds_load_relative_to_plan() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("reef.txt"), "1 1 2 2\n1 1 2 2\n3 3 3 3\n3 3 3 3\n").unwrap();
        let text = "[maps]\nkind = \"raster\"\npaths = [\"reef.txt\"]\nsmoothing_radius = 1\n";
        std::fs::write(dir.path().join("plan.toml"), text).unwrap();
        let plan = ExperimentPlan::load(dir.path().join("plan.toml")).unwrap();
        let worlds = prepare_worlds(&plan).unwrap();
        assert_eq!(worlds[0].map_id, "reef");
        assert_eq!(worlds[0].field.topics(), 3);
        let files = save_worlds(&worlds, dir.path().join("out")).unwrap();
        assert_eq!(files.len(), 2);
    }

    #[test]
    fn lawnmower_rows_report_uninformed_loss() {
        let table = run_batch(&small_plan(), &BatchOptions::default()).unwrap();
        for r in table.rows.iter().filter(|r| r.method == Method::Lawnmower) {
            assert_eq!(r.final_map_loss, std::f64::consts::LN_2);
            assert!((r.expected_map_loss - std::f64::consts::LN_2).abs() < 1e-12);
            assert_eq!(r.queries_made, 0);
        }
    }

    #[test]
    fn method_names() {
        assert_eq!("lawnmower".parse::<Method>().unwrap(), Method::Lawnmower);
        assert_eq!("info_gain".parse::<Method>().unwrap(), Method::Adaptive(SelectorKind::InfoGain));
        assert!("nope".parse::<Method>().is_err());
    }
}
