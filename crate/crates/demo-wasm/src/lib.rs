//! Browser demo. A page generates a world, runs one mission with a chosen
//! selector and labeling period, and compares all selectors against the
//! lawnmower sweep. Everything here is plain Rust; the `#[wasm_bindgen]`
//! items are thin wrappers so the same code is tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use coexplore_core::field::{
    generate_voronoi_topic_field_seeded, sample_interest_map, sample_interest_profile, GridLocation, InterestMap,
    InterestProfile, TopicField, VoronoiParams,
};
use coexplore_core::mission::{compute_metrics, run_lawnmower, run_mission, MetricsRecord, MissionConfig, SimulatedOperator};
use coexplore_core::rng::seeded;
use coexplore_core::SelectorKind;

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// A topic field with one hidden interest map.
pub struct World {
    pub field: TopicField,
    pub profile: InterestProfile,
    pub map: InterestMap,
}

impl World {
    pub fn generate(seed: u64, size: usize, topics: usize) -> Result<World, String> {
        let params = VoronoiParams { width: size, height: size, topics, n_cells: (5 * topics).max(2 * topics), sigma: size as f64 / 20.0 };
        let field = generate_voronoi_topic_field_seeded(&params, seed).map_err(|e| e.to_string())?;
        let mut rng = seeded(seed ^ 0x5EED);
        let profile = sample_interest_profile(topics, &mut rng).map_err(|e| e.to_string())?;
        let map = sample_interest_map(&field, &profile, &mut rng).map_err(|e| e.to_string())?;
        Ok(World { field, profile, map })
    }

    /// Dominant topic per cell, RGBA.
    pub fn field_rgba(&self) -> Vec<u8> {
        self.field.argmax_topics().iter().flat_map(|&k| rgba(PALETTE[k % PALETTE.len()])).collect()
    }

    /// Interesting cells white, others dark grey.
    pub fn interest_rgba(&self) -> Vec<u8> {
        self.map.labels().iter().flat_map(|&l| if l { rgba([255, 255, 255]) } else { rgba([40, 40, 40]) }).collect()
    }

    pub fn run(&self, selector: SelectorKind, period: usize, t_max: usize, seed: u64) -> Result<MissionView, String> {
        let config = MissionConfig { selector, labeling_period: period, t_max, seed, ..Default::default() };
        let trace = run_mission(&config, &self.field, &self.map, &mut SimulatedOperator::new(&self.map)).map_err(|e| e.to_string())?;
        let metrics = compute_metrics(&trace, &self.field, &self.map).map_err(|e| e.to_string())?;
        let heat = trace.footer.final_params.predict_field(&self.field).map_err(|e| e.to_string())?;
        let queried = trace.records.iter().filter_map(|r| r.query.map(|q| q.location)).collect();
        let path = trace.records.iter().map(|r| r.location).collect();
        Ok(MissionView { path, queried, metrics, heat })
    }

    pub fn lawnmower(&self, t_max: usize) -> Result<MetricsRecord, String> {
        let (w, h) = self.field.dims();
        run_lawnmower(&self.map, GridLocation::new(w / 2, h / 2), t_max).map_err(|e| e.to_string())
    }

    /// Mean reward per step of every selector over `trials` seeds, plus the lawnmower.
    pub fn compare(&self, period: usize, t_max: usize, trials: usize) -> Result<Vec<ComparisonRow>, String> {
        let mut rows = Vec::new();
        for selector in SelectorKind::ALL {
            let mut reward = 0.0;
            let mut loss = 0.0;
            for trial in 0..trials.max(1) {
                let m = self.run(selector, period, t_max, trial as u64)?.metrics;
                reward += m.reward_per_timestep;
                loss += m.final_map_loss;
            }
            let n = trials.max(1) as f64;
            rows.push(ComparisonRow { method: selector.to_string(), reward_per_timestep: reward / n, final_map_loss: loss / n });
        }
        let lawn = self.lawnmower(t_max)?;
        rows.push(ComparisonRow { method: "lawnmower".into(), reward_per_timestep: lawn.reward_per_timestep, final_map_loss: lawn.final_map_loss });
        Ok(rows)
    }
}

fn rgba(c: [u8; 3]) -> [u8; 4] {
    [c[0], c[1], c[2], 255]
}

/// Predicted interest as greyscale RGBA.
pub fn heat_rgba(heat: &[f64]) -> Vec<u8> {
    heat.iter().flat_map(|&p| {
        let v = (p.clamp(0.0, 1.0) * 255.0).round() as u8;
        rgba([v, v, v])
    }).collect()
}

#[derive(Debug, Serialize)]
pub struct MissionView {
    pub path: Vec<GridLocation>,
    pub queried: Vec<GridLocation>,
    pub metrics: MetricsRecord,
    #[serde(skip)]
    pub heat: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub reward_per_timestep: f64,
    pub final_map_loss: f64,
}

fn js_err(e: impl ToString) -> JsError {
    JsError::new(&e.to_string())
}

/// Handle the page holds on to.
#[wasm_bindgen]
pub struct Demo {
    world: World,
    last_heat: Vec<f64>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: usize, topics: usize) -> Result<Demo, JsError> {
        let world = World::generate(u64::from(seed), size, topics).map_err(js_err)?;
        let last_heat = vec![0.5; world.field.len()];
        Ok(Demo { world, last_heat })
    }

    pub fn size(&self) -> usize {
        self.world.field.width()
    }

    pub fn field_rgba(&self) -> Vec<u8> {
        self.world.field_rgba()
    }

    pub fn interest_rgba(&self) -> Vec<u8> {
        self.world.interest_rgba()
    }

    /// Final predicted interest of the last mission, greyscale RGBA.
    pub fn heat_rgba(&self) -> Vec<u8> {
        heat_rgba(&self.last_heat)
    }

    /// Runs one mission and returns `{path, queried, metrics}` as JSON.
    pub fn run_mission(&mut self, selector: &str, period: usize, t_max: usize, seed: u32) -> Result<String, JsError> {
        let selector: SelectorKind = selector.parse().map_err(js_err)?;
        let view = self.world.run(selector, period.max(1), t_max.max(1), u64::from(seed)).map_err(js_err)?;
        let json = serde_json::to_string(&view).map_err(js_err)?;
        self.last_heat = view.heat;
        Ok(json)
    }

    /// Compares every selector and the lawnmower; returns JSON rows.
    pub fn compare(&self, period: usize, t_max: usize, trials: usize) -> Result<String, JsError> {
        let rows = self.world.compare(period.max(1), t_max.max(1), trials).map_err(js_err)?;
        serde_json::to_string(&rows).map_err(js_err)
    }
}
