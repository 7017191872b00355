//! Ground-truth semantic environment: topic fields, interest profiles and
//! binary interest maps.
//!
//! A [`TopicField`] assigns every grid cell a probability vector over `d`
//! topics. Fields come either from a smoothed random Voronoi partition or
//! from a class-label raster (for example an expert annotation mosaic).

pub mod io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Tolerance on the per-cell simplex sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridLocation {
    pub x: usize,
    pub y: usize,
}

impl GridLocation {
    pub const fn new(x: usize, y: usize) -> Self {
        GridLocation { x, y }
    }

    /// Chebyshev distance; 1 means 8-neighbour adjacent.
    pub fn chebyshev(&self, other: &GridLocation) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

/// How a field was produced. Written into the serialized header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldProvenance {
    Voronoi {
        n_cells: usize,
        sigma: f64,
        seed: Option<u64>,
    },
    Raster {
        smoothing_radius: usize,
        /// Original raster class labels, in topic order.
        classes: Vec<i64>,
    },
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicField {
    width: usize,
    height: usize,
    topics: usize,
    /// Row-major cell vectors, `topics` entries per cell.
    values: Vec<f64>,
    provenance: FieldProvenance,
}

fn check_simplex(v: &[f64]) -> bool {
    let mut sum = 0.0;
    for &p in v {
        if !p.is_finite() || p < 0.0 {
            return false;
        }
        sum += p;
    }
    (sum - 1.0).abs() <= SIMPLEX_TOLERANCE
}

impl TopicField {
    /// Builds a field from row-major cell vectors, validating every cell.
    pub fn from_values(
        width: usize,
        height: usize,
        topics: usize,
        values: Vec<f64>,
        provenance: FieldProvenance,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("field dimensions must be positive"));
        }
        if topics < 2 {
            return Err(Error::param("a topic field needs at least 2 topics"));
        }
        if values.len() != width * height * topics {
            return Err(Error::Dimension {
                expected: width * height * topics,
                actual: values.len(),
            });
        }
        if let Some(i) = values.chunks_exact(topics).position(|c| !check_simplex(c)) {
            return Err(Error::Data(format!(
                "cell ({}, {}) is not a probability vector",
                i % width,
                i / width
            )));
        }
        Ok(TopicField {
            width,
            height,
            topics,
            values,
            provenance,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn provenance(&self) -> &FieldProvenance {
        &self.provenance
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, loc: GridLocation) -> bool {
        loc.x < self.width && loc.y < self.height
    }

    pub fn index_of(&self, loc: GridLocation) -> usize {
        loc.y * self.width + loc.x
    }

    pub fn location_of(&self, index: usize) -> GridLocation {
        GridLocation::new(index % self.width, index / self.width)
    }

    /// Topic vector at `loc`.
    pub fn topic_at(&self, loc: GridLocation) -> Result<&[f64]> {
        if !self.contains(loc) {
            return Err(Error::OutOfBounds {
                x: loc.x,
                y: loc.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.cell(self.index_of(loc)))
    }

    /// Topic vector of the cell with row-major index `index`. Panics when out of range.
    pub fn cell(&self, index: usize) -> &[f64] {
        &self.values[index * self.topics..(index + 1) * self.topics]
    }

    pub fn cells(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.topics)
    }

    /// Index of the largest component at each cell (lowest index on ties).
    pub fn argmax_topics(&self) -> Vec<usize> {
        self.cells().map(argmax).collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoronoiParams {
    pub width: usize,
    pub height: usize,
    pub topics: usize,
    pub n_cells: usize,
    pub sigma: f64,
}

impl Default for VoronoiParams {
    fn default() -> Self {
        VoronoiParams {
            width: 100,
            height: 100,
            topics: 8,
            n_cells: 40,
            sigma: 5.0,
        }
    }
}

impl VoronoiParams {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("field dimensions must be positive"));
        }
        if self.topics < 2 {
            return Err(Error::param("a topic field needs at least 2 topics"));
        }
        if self.n_cells < self.topics {
            return Err(Error::param(format!(
                "n_cells ({}) must be at least the topic count ({})",
                self.n_cells, self.topics
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma must be a positive finite length"));
        }
        Ok(())
    }
}

/// A Voronoi seed: continuous position in cell units plus its topic label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoronoiSeed {
    pub x: f64,
    pub y: f64,
    pub topic: usize,
}

/// Samples `n_cells` seeds uniformly over the map, each with a uniformly
/// random topic, and blends them with [`topic_field_from_seeds`].
pub fn generate_voronoi_topic_field(params: &VoronoiParams, rng: &mut SimRng) -> Result<TopicField> {
    params.validate()?;
    let seeds: Vec<VoronoiSeed> = (0..params.n_cells)
        .map(|_| VoronoiSeed {
            x: rng.random::<f64>() * params.width as f64,
            y: rng.random::<f64>() * params.height as f64,
            topic: rng.random_range(0..params.topics),
        })
        .collect();
    let mut field = topic_field_from_seeds(
        params.width,
        params.height,
        params.topics,
        &seeds,
        params.sigma,
    )?;
    field.provenance = FieldProvenance::Voronoi {
        n_cells: params.n_cells,
        sigma: params.sigma,
        seed: None,
    };
    Ok(field)
}

/// Same as [`generate_voronoi_topic_field`] with a fresh generator seeded by
/// `seed`; the seed is recorded in the field's provenance.
pub fn generate_voronoi_topic_field_seeded(params: &VoronoiParams, seed: u64) -> Result<TopicField> {
    let mut rng = crate::rng::seeded(seed);
    let mut field = generate_voronoi_topic_field(params, &mut rng)?;
    field.provenance = FieldProvenance::Voronoi {
        n_cells: params.n_cells,
        sigma: params.sigma,
        seed: Some(seed),
    };
    Ok(field)
}

/// Distance-weighted blend of seed labels.
///
/// Seed `c` weighs `exp(-dist(x, seed_c) / sigma)` at pixel centre `x`
/// (Euclidean); component `k` of the pixel vector is the normalized weight
/// mass of seeds labelled `k`. Weights are shifted by the nearest-seed
/// distance before exponentiation so small `sigma` degrades to a hard
/// Voronoi partition instead of underflowing.
pub fn topic_field_from_seeds(
    width: usize,
    height: usize,
    topics: usize,
    seeds: &[VoronoiSeed],
    sigma: f64,
) -> Result<TopicField> {
    if seeds.is_empty() {
        return Err(Error::param("at least one seed is required"));
    }
    if let Some(s) = seeds.iter().find(|s| s.topic >= topics) {
        return Err(Error::param(format!("seed topic {} out of range", s.topic)));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("sigma must be positive"));
    }
    let mut values = Vec::with_capacity(width * height * topics);
    let mut dist = vec![0.0; seeds.len()];
    let mut mass = vec![0.0; topics];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            for (d, s) in dist.iter_mut().zip(seeds) {
                *d = (px - s.x).hypot(py - s.y);
            }
            let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
            mass.iter_mut().for_each(|m| *m = 0.0);
            for (d, s) in dist.iter().zip(seeds) {
                mass[s.topic] += (-(d - nearest) / sigma).exp();
            }
            let total: f64 = mass.iter().sum();
            values.extend(mass.iter().map(|m| m / total));
        }
    }
    TopicField::from_values(width, height, topics, values, FieldProvenance::Explicit)
}

/// Integer class-label grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<i64>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: labels.len(),
            });
        }
        Ok(LabelRaster {
            width,
            height,
            labels,
        })
    }
}

/// One-hot encodes a class raster and smooths it with a normalized disk blur.
///
/// Distinct labels are remapped, in ascending order, to topics `0..d`.
/// Pixels equal to `ignore_label` take the most common class in the
/// smallest surrounding square window that contains any labelled pixel.
/// The blur averages every in-bounds cell within Euclidean distance
/// `smoothing_radius`; radius 0 leaves the one-hot field untouched.
pub fn ingest_label_raster(
    raster: &LabelRaster,
    smoothing_radius: usize,
    ignore_label: Option<i64>,
) -> Result<TopicField> {
    let (w, h) = (raster.width, raster.height);
    if w == 0 || h == 0 || raster.labels.is_empty() {
        return Err(Error::Ingestion("raster is empty".into()));
    }
    if raster.labels.len() != w * h {
        return Err(Error::Ingestion(format!(
            "raster has {} labels for a {w}x{h} grid",
            raster.labels.len()
        )));
    }
    let mut classes: Vec<i64> = raster
        .labels
        .iter()
        .copied()
        .filter(|&l| Some(l) != ignore_label)
        .collect();
    classes.sort_unstable();
    classes.dedup();
    match classes.len() {
        0 => return Err(Error::Ingestion("raster has no labelled pixels".into())),
        1 => {
            return Err(Error::Ingestion(format!(
                "raster has a single class ({}); at least two are required",
                classes[0]
            )))
        }
        _ => {}
    }
    let d = classes.len();
    let topic_of = |label: i64| classes.binary_search(&label).ok();
    let mut topic: Vec<Option<usize>> = raster.labels.iter().map(|&l| topic_of(l)).collect();

    // Fill ignored pixels from the original labelling only.
    let original = topic.clone();
    for y in 0..h {
        for x in 0..w {
            if original[y * w + x].is_some() {
                continue;
            }
            let mut counts = vec![0usize; d];
            for r in 1..w.max(h) {
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                        if let Some(k) = original[yy * w + xx] {
                            counts[k] += 1;
                        }
                    }
                }
                if counts.iter().any(|&c| c > 0) {
                    break;
                }
            }
            let mut best = 0;
            for k in 1..d {
                if counts[k] > counts[best] {
                    best = k;
                }
            }
            topic[y * w + x] = Some(best);
        }
    }
    let topic: Vec<usize> = topic.into_iter().map(|t| t.unwrap_or(0)).collect();

    let r = smoothing_radius as isize;
    let r2 = r * r;
    let mut values = Vec::with_capacity(w * h * d);
    let mut acc = vec![0.0; d];
    for y in 0..h as isize {
        for x in 0..w as isize {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut count = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy > r2 {
                        continue;
                    }
                    let (xx, yy) = (x + dx, y + dy);
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    acc[topic[yy as usize * w + xx as usize]] += 1.0;
                    count += 1.0;
                }
            }
            values.extend(acc.iter().map(|a| a / count));
        }
    }
    TopicField::from_values(
        w,
        h,
        d,
        values,
        FieldProvenance::Raster {
            smoothing_radius,
            classes,
        },
    )
}

/// Per-topic interest probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterestProfile {
    p: Vec<f64>,
}

impl InterestProfile {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::param(format!("interest probability {x} outside [0, 1]")));
        }
        Ok(InterestProfile { p })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Probability `p · z` that an observation with topic vector `z` is interesting.
    pub fn interest_probability(&self, z: &[f64]) -> f64 {
        let dot: f64 = self.p.iter().zip(z).map(|(a, b)| a * b).sum();
        dot.clamp(0.0, 1.0)
    }
}

/// Independent Uniform(0, 1) draw per topic.
pub fn sample_interest_profile(topics: usize, rng: &mut SimRng) -> Result<InterestProfile> {
    if topics < 2 {
        return Err(Error::param("an interest profile needs at least 2 topics"));
    }
    Ok(InterestProfile {
        p: (0..topics).map(|_| rng.random::<f64>()).collect(),
    })
}

/// Binary ground-truth reward grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestMap {
    width: usize,
    height: usize,
    labels: Vec<bool>,
}

impl InterestMap {
    pub fn new(width: usize, height: usize, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: labels.len(),
            });
        }
        Ok(InterestMap {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        InterestMap {
            width,
            height,
            labels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn get(&self, loc: GridLocation) -> Result<bool> {
        if loc.x >= self.width || loc.y >= self.height {
            return Err(Error::OutOfBounds {
                x: loc.x,
                y: loc.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.labels[loc.y * self.width + loc.x])
    }

    pub fn count_interesting(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Independent Bernoulli(`p · z`) label per cell, row-major draw order.
pub fn sample_interest_map(
    field: &TopicField,
    profile: &InterestProfile,
    rng: &mut SimRng,
) -> Result<InterestMap> {
    if profile.len() != field.topics() {
        return Err(Error::Dimension {
            expected: field.topics(),
            actual: profile.len(),
        });
    }
    let labels = field
        .cells()
        .map(|z| rng.random::<f64>() < profile.interest_probability(z))
        .collect();
    InterestMap::new(field.width(), field.height(), labels)
}
