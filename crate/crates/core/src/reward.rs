//! Learned interest model: binary logistic regression over topic vectors.
//!
//! The training objective for `n` labelled samples is
//!
//! ```text
//! J(w, b) = (1/n) * [ sum_i CE(y_i, sigmoid(w·z_i + b)) + (reg_strength / 2) * |w|^2 ]
//! ```
//!
//! i.e. the mean cross-entropy with the L2 penalty on the weights (never the
//! bias) scaled the same way as scikit-learn's `LogisticRegression` with
//! `C = 1 / reg_strength`, so the minimizer matches that estimator.
//!
//! Until both label classes have been seen the model is *uninformed* and
//! predicts exactly 0.5 everywhere.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{InterestMap, InterestProfile, TopicField};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any logarithm.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub reg_strength: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient's Euclidean norm.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            reg_strength: 1.0,
            max_iters: 100,
            tolerance: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_strength >= 0.0 && self.reg_strength.is_finite()) {
            return Err(Error::param("reg_strength must be a nonnegative finite number"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct RewardModelParams {
    weights: Vec<f64>,
    bias: f64,
    /// (a 0-label has been seen, a 1-label has been seen)
    classes_seen: (bool, bool),
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    d: usize,
    weights: Vec<f64>,
    bias: f64,
    classes_seen: (bool, bool),
}

impl From<RewardModelParams> for ParamsRepr {
    fn from(p: RewardModelParams) -> Self {
        ParamsRepr {
            d: p.weights.len(),
            weights: p.weights,
            bias: p.bias,
            classes_seen: p.classes_seen,
        }
    }
}

impl TryFrom<ParamsRepr> for RewardModelParams {
    type Error = String;

    fn try_from(r: ParamsRepr) -> Result<Self, String> {
        if r.weights.len() != r.d {
            return Err(format!("d = {} but {} weights", r.d, r.weights.len()));
        }
        Ok(RewardModelParams {
            weights: r.weights,
            bias: r.bias,
            classes_seen: r.classes_seen,
        })
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

/// Binary entropy in nats of a Bernoulli(`q`) variable, `q` clamped.
pub fn binary_entropy(q: f64) -> f64 {
    let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -q * q.ln() - (1.0 - q) * (1.0 - q).ln()
}

/// Cross-entropy of label `y` under predicted probability `q`, `q` clamped.
pub fn cross_entropy(y: bool, q: f64) -> f64 {
    let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y {
        -q.ln()
    } else {
        -(1.0 - q).ln()
    }
}

impl RewardModelParams {
    /// The uninformed state for `d` topics: predicts 0.5 everywhere.
    pub fn uninformed(d: usize) -> Self {
        RewardModelParams {
            weights: vec![0.0; d],
            bias: 0.0,
            classes_seen: (false, false),
        }
    }

    /// Explicit parameters, treated as informed.
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        RewardModelParams {
            weights,
            bias,
            classes_seen: (true, true),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn classes_seen(&self) -> (bool, bool) {
        self.classes_seen
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_informed(&self) -> bool {
        self.classes_seen.0 && self.classes_seen.1
    }

    /// Raw logit `w·z + b`, ignoring the uninformed override.
    pub fn logit(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                actual: z.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.predict_unchecked(z))
    }

    /// [`predict`](Self::predict) without the dimension check.
    pub fn predict_unchecked(&self, z: &[f64]) -> f64 {
        if self.is_informed() {
            sigmoid(self.logit(z))
        } else {
            0.5
        }
    }

    pub fn entropy(&self, z: &[f64]) -> Result<f64> {
        Ok(binary_entropy(self.predict(z)?))
    }

    /// Prediction at every cell of `field`, row-major.
    pub fn predict_field(&self, field: &TopicField) -> Result<Vec<f64>> {
        if field.topics() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: field.topics(),
            });
        }
        Ok(field.cells().map(|z| self.predict_unchecked(z)).collect())
    }

    fn as_vector(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }
}

/// Training set of (topic vector, binary label) pairs sharing one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    d: usize,
    features: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledDataset {
    pub fn new(d: usize) -> Self {
        LabeledDataset {
            d,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_pairs<'a>(d: usize, pairs: impl IntoIterator<Item = (&'a [f64], bool)>) -> Result<Self> {
        let mut ds = LabeledDataset::new(d);
        for (z, y) in pairs {
            ds.push(z, y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, z: &[f64], y: bool) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                actual: z.len(),
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("feature vector has non-finite components".into()));
        }
        self.features.extend_from_slice(z);
        self.labels.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], bool)> + '_ {
        self.features.chunks_exact(self.d.max(1)).zip(self.labels.iter().copied())
    }

    pub fn classes_present(&self) -> (bool, bool) {
        (self.labels.iter().any(|&y| !y), self.labels.iter().any(|&y| y))
    }
}

/// Dataset view with an optional extra (temporary) sample appended.
#[derive(Clone, Copy)]
struct Samples<'a> {
    base: &'a LabeledDataset,
    extra: Option<(&'a [f64], bool)>,
}

impl<'a> Samples<'a> {
    fn len(&self) -> usize {
        self.base.len() + usize::from(self.extra.is_some())
    }

    fn iter(&self) -> impl Iterator<Item = (&'a [f64], bool)> + 'a {
        let base: &'a LabeledDataset = self.base;
        base.iter().chain(self.extra)
    }

    fn classes_present(&self) -> (bool, bool) {
        let (mut zero, mut one) = self.base.classes_present();
        if let Some((_, y)) = self.extra {
            zero |= !y;
            one |= y;
        }
        (zero, one)
    }

    fn validate(&self) -> Result<()> {
        if self.len() == 0 {
            return Err(Error::Training("cannot fit on an empty dataset".into()));
        }
        for (z, _) in self.iter() {
            if z.len() != self.base.dim() {
                return Err(Error::Dimension {
                    expected: self.base.dim(),
                    actual: z.len(),
                });
            }
            if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data("feature vector has non-finite components".into()));
            }
        }
        Ok(())
    }
}

/// Objective value for the packed parameter vector `theta = [w..., b]`.
fn objective(theta: &[f64], samples: Samples<'_>, reg: f64) -> f64 {
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let mut total = 0.0;
    for (z, y) in samples.iter() {
        let s = w.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() + b;
        total += softplus(s) - if y { s } else { 0.0 };
    }
    let penalty = 0.5 * reg * w.iter().map(|x| x * x).sum::<f64>();
    (total + penalty) / samples.len() as f64
}

fn gradient(theta: &[f64], samples: Samples<'_>, reg: f64) -> Vec<f64> {
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let mut g = vec![0.0; d + 1];
    for (z, y) in samples.iter() {
        let s = w.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() + b;
        let r = sigmoid(s) - f64::from(u8::from(y));
        for (gk, x) in g.iter_mut().zip(z) {
            *gk += r * x;
        }
        g[d] += r;
    }
    for (gk, wk) in g.iter_mut().zip(w) {
        *gk += reg * wk;
    }
    let n = samples.len() as f64;
    g.iter_mut().for_each(|x| *x /= n);
    g
}

fn hessian(theta: &[f64], samples: Samples<'_>, reg: f64) -> DMatrix<f64> {
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut x = vec![1.0; d + 1];
    for (z, _) in samples.iter() {
        x[..d].copy_from_slice(z);
        let s = w.iter().zip(z).map(|(a, v)| a * v).sum::<f64>() + b;
        let q = sigmoid(s);
        let c = q * (1.0 - q);
        for i in 0..=d {
            for j in 0..=i {
                h[(i, j)] += c * x[i] * x[j];
            }
        }
    }
    for i in 0..d {
        h[(i, i)] += reg;
    }
    let n = samples.len() as f64;
    for i in 0..=d {
        for j in 0..i {
            h[(j, i)] = h[(i, j)];
        }
    }
    h / n
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of one optimizer run.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub params: RewardModelParams,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub loss_trace: Vec<f64>,
}

fn uninformed_report(d: usize, classes_seen: (bool, bool)) -> FitReport {
    let mut params = RewardModelParams::uninformed(d);
    params.classes_seen = classes_seen;
    FitReport {
        params,
        iterations: 0,
        gradient_norm: 0.0,
        converged: true,
        loss_trace: Vec::new(),
    }
}

/// Damped Newton iteration with Armijo backtracking.
fn newton(samples: Samples<'_>, init: Vec<f64>, config: &FitConfig) -> FitReport {
    let reg = config.reg_strength;
    let d = init.len() - 1;
    let mut theta = init;
    let mut loss = objective(&theta, samples, reg);
    let mut loss_trace = vec![loss];
    let mut g = gradient(&theta, samples, reg);
    let mut iterations = 0;
    while iterations < config.max_iters && norm(&g) >= config.tolerance {
        iterations += 1;
        let h = hessian(&theta, samples, reg);
        let neg_g = DVector::from_iterator(d + 1, g.iter().map(|x| -x));
        let mut dir: Vec<f64> = match h.cholesky() {
            Some(chol) => chol.solve(&neg_g).iter().copied().collect(),
            None => neg_g.iter().copied().collect(),
        };
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            dir = g.iter().map(|x| -x).collect();
            slope = -g.iter().map(|x| x * x).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, p)| t + step * p).collect();
            let trial_loss = objective(&trial, samples, reg);
            if trial_loss <= loss + 1e-4 * step * slope {
                accepted = Some((trial, trial_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_loss)) = accepted else {
            break;
        };
        theta = next;
        loss = next_loss;
        loss_trace.push(loss);
        g = gradient(&theta, samples, reg);
    }
    let gradient_norm = norm(&g);
    let bias = theta.pop().unwrap_or(0.0);
    FitReport {
        params: RewardModelParams {
            weights: theta,
            bias,
            classes_seen: (true, true),
        },
        iterations,
        gradient_norm,
        converged: gradient_norm < config.tolerance,
        loss_trace,
    }
}

fn fit_samples(samples: Samples<'_>, init: Option<&RewardModelParams>, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    samples.validate()?;
    let d = samples.base.dim();
    let classes = samples.classes_present();
    if !(classes.0 && classes.1) {
        return Ok(uninformed_report(d, classes));
    }
    let start = match init {
        Some(p) if p.is_informed() && p.dim() == d => p.as_vector(),
        _ => vec![0.0; d + 1],
    };
    Ok(newton(samples, start, config))
}

/// Fits from the zero initialization.
pub fn fit(dataset: &LabeledDataset, config: &FitConfig) -> Result<RewardModelParams> {
    Ok(fit_report(dataset, config)?.params)
}

pub fn fit_report(dataset: &LabeledDataset, config: &FitConfig) -> Result<FitReport> {
    fit_samples(Samples { base: dataset, extra: None }, None, config)
}

/// Fits on `dataset ∪ {(z, y)}` without copying the dataset, starting from
/// `warm_start` when it is informed.
pub fn fit_with_extra(
    dataset: &LabeledDataset,
    z: &[f64],
    y: bool,
    warm_start: Option<&RewardModelParams>,
    config: &FitConfig,
) -> Result<RewardModelParams> {
    let samples = Samples { base: dataset, extra: Some((z, y)) };
    Ok(fit_samples(samples, warm_start, config)?.params)
}

/// Regularized mean cross-entropy at `params` (raw logits, no uninformed override).
pub fn regularized_loss(params: &RewardModelParams, dataset: &LabeledDataset, reg_strength: f64) -> Result<f64> {
    let samples = Samples { base: dataset, extra: None };
    samples.validate()?;
    if params.dim() != dataset.dim() {
        return Err(Error::Dimension { expected: dataset.dim(), actual: params.dim() });
    }
    Ok(objective(&params.as_vector(), samples, reg_strength))
}

/// Analytic gradient of [`regularized_loss`], packed as `[d weights..., bias]`.
pub fn loss_gradient(params: &RewardModelParams, dataset: &LabeledDataset, reg_strength: f64) -> Result<Vec<f64>> {
    let samples = Samples { base: dataset, extra: None };
    samples.validate()?;
    if params.dim() != dataset.dim() {
        return Err(Error::Dimension { expected: dataset.dim(), actual: params.dim() });
    }
    Ok(gradient(&params.as_vector(), samples, reg_strength))
}

/// Mean per-cell cross-entropy between the binary interest map and the model.
pub fn map_cross_entropy(params: &RewardModelParams, field: &TopicField, map: &InterestMap) -> Result<f64> {
    if field.dims() != map.dims() {
        return Err(Error::param(format!(
            "field is {:?} but interest map is {:?}",
            field.dims(),
            map.dims()
        )));
    }
    if field.topics() != params.dim() {
        return Err(Error::Dimension { expected: params.dim(), actual: field.topics() });
    }
    if !params.is_informed() {
        // every cell contributes exactly ln 2; skip the rounding of a long sum
        return Ok(std::f64::consts::LN_2);
    }
    let total: f64 = field
        .cells()
        .zip(map.labels())
        .map(|(z, &r)| cross_entropy(r, params.predict_unchecked(z)))
        .sum();
    Ok(total / field.len() as f64)
}

/// Mean per-cell cross-entropy against the interest probabilities `p·z`
/// rather than a sampled binary map.
pub fn expected_map_cross_entropy(params: &RewardModelParams, field: &TopicField, profile: &InterestProfile) -> Result<f64> {
    if field.topics() != params.dim() || profile.len() != params.dim() {
        return Err(Error::Dimension { expected: params.dim(), actual: field.topics().max(profile.len()) });
    }
    if !params.is_informed() {
        return Ok(std::f64::consts::LN_2);
    }
    let total: f64 = field
        .cells()
        .map(|z| {
            let p = profile.interest_probability(z);
            let q = params.predict_unchecked(z);
            p * cross_entropy(true, q) + (1.0 - p) * cross_entropy(false, q)
        })
        .sum();
    Ok(total / field.len() as f64)
}
