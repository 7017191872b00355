//! Acceptance suite. Runs every primary criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//! `ACCEPTANCE_ONLY=name1,name2` restricts the run to the named criteria.

use std::collections::HashSet;
use std::f64::consts::LN_2;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use coexplore_core::experiment::{
    aggregate, find_aggregate, format_report, prepare_worlds, run_batch_on, AggregateRow, BatchOptions, ExperimentPlan,
    MapSource, Method,
};
use coexplore_core::field::{
    generate_voronoi_topic_field_seeded, sample_interest_map, sample_interest_profile, GridLocation, InterestMap,
    InterestProfile, TopicField, VoronoiParams,
};
use coexplore_core::live::{ClockMode, Session, SessionConfig, TickOutcome};
use coexplore_core::mission::{run_mission, MissionConfig, SimulatedOperator};
use coexplore_core::planner::{generate_trajectories, score_trajectory, PlannerState, Trajectory, VisitedSet};
use coexplore_core::reward::{fit, loss_gradient, regularized_loss, FitConfig, LabeledDataset, RewardModelParams};
use coexplore_core::rng::{seeded, SimRng};
use coexplore_core::selection::{
    compute_regret, select_entropy, select_info_gain, select_regret, PoolEntry, QueryPool, RegretContext,
    SelectorKind,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_simplex(rng: &mut SimRng, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

// ---------------------------------------------------------------- gradient

fn gradient_check() -> Outcome {
    let mut rng = seeded(0x6752);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=16);
        let n = rng.random_range(1..=100);
        let mut data = LabeledDataset::new(d);
        for _ in 0..n {
            let z = random_simplex(&mut rng, d);
            data.push(&z, rng.random_bool(0.5)).unwrap();
        }
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b = rng.random_range(-2.0..2.0);
        let lambda = rng.random_range(0.01..2.0);
        let analytic = loss_gradient(&RewardModelParams::new(w.clone(), b), &data, lambda).unwrap();
        let h = 1e-6;
        let loss_at = |w: &[f64], b: f64| regularized_loss(&RewardModelParams::new(w.to_vec(), b), &data, lambda).unwrap();
        let mut numeric = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let (mut wp, mut wm, mut bp, mut bm) = (w.clone(), w.clone(), b, b);
            if k < d {
                wp[k] += h;
                wm[k] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            numeric.push((loss_at(&wp, bp) - loss_at(&wm, bm)) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt()).max(1e-8);
        worst = worst.max(diff / scale);
    }
    outcome(worst <= 1e-5, format!("worst relative error {worst:.2e} over 100 instances (bound 1e-5)"))
}

// ---------------------------------------------------------------- selector oracles

fn oracle_entropy(q: f64) -> f64 {
    let q = q.clamp(1e-12, 1.0 - 1e-12);
    -(q * q.ln() + (1.0 - q) * (1.0 - q).ln())
}

fn oracle_predict(p: &RewardModelParams, z: &[f64]) -> f64 {
    if !p.is_informed() {
        return 0.5;
    }
    let s: f64 = p.weights().iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + p.bias();
    1.0 / (1.0 + (-s).exp())
}

fn oracle_refit(data: &LabeledDataset, z: &[f64], y: bool, config: &FitConfig) -> RewardModelParams {
    let mut augmented = data.clone();
    augmented.push(z, y).unwrap();
    fit(&augmented, config).unwrap()
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

struct SelectorInstance {
    field: TopicField,
    data: LabeledDataset,
    params: RewardModelParams,
    pool: Vec<(usize, Vec<f64>, GridLocation)>,
    candidates: Vec<Trajectory>,
    reference: usize,
    visited: VisitedSet,
}

fn selector_instance(seed: u64) -> SelectorInstance {
    let mut rng = seeded(seed);
    let size = rng.random_range(8..=20);
    let d = rng.random_range(2..=5);
    let params = VoronoiParams { width: size, height: size, topics: d, n_cells: rng.random_range(d..=2 * d + 4), sigma: rng.random_range(1.0..4.0) };
    let field = generate_voronoi_topic_field_seeded(&params, seed ^ 0xF1E1D).unwrap();
    let profile = sample_interest_profile(d, &mut rng).unwrap();
    let map = sample_interest_map(&field, &profile, &mut rng).unwrap();
    let mut data = LabeledDataset::new(d);
    let n_labels = rng.random_range(0..=12);
    for _ in 0..n_labels {
        let loc = GridLocation::new(rng.random_range(0..size), rng.random_range(0..size));
        data.push(field.topic_at(loc).unwrap(), map.get(loc).unwrap()).unwrap();
    }
    let fitted = if data.is_empty() { RewardModelParams::uninformed(d) } else { fit(&data, &FitConfig::default()).unwrap() };
    let pool_size = rng.random_range(1..=50);
    let pool = (0..pool_size)
        .map(|i| {
            let loc = GridLocation::new(rng.random_range(0..size), rng.random_range(0..size));
            (i * 3 + 1, field.topic_at(loc).unwrap().to_vec(), loc)
        })
        .collect();
    let start = GridLocation::new(rng.random_range(0..size), rng.random_range(0..size));
    let mut visited = VisitedSet::new(size, size);
    for _ in 0..rng.random_range(0..30) {
        visited.insert(GridLocation::new(rng.random_range(0..size), rng.random_range(0..size)));
    }
    visited.insert(start);
    let state = PlannerState { location: start, heading: rng.random_range(0.0..360.0), visited: visited.clone() };
    let n_cand = rng.random_range(1..=10);
    let candidates = generate_trajectories(&state, (size, size), n_cand, rng.random_range(1..=3), &mut rng);
    let scores: Vec<f64> = candidates.iter().map(|t| score_trajectory(t, &field, &fitted, &visited, 1.0).unwrap()).collect();
    let reference = first_argmax(&scores);
    SelectorInstance { field, data, params: fitted, pool, candidates, reference, visited }
}

impl SelectorInstance {
    fn query_pool(&self) -> QueryPool<'_> {
        QueryPool::new(self.pool.iter().map(|(id, z, loc)| PoolEntry { id: *id, feature: z, location: *loc }).collect())
    }

    fn oracle_regret(&self, z: &[f64], y: bool, config: &FitConfig) -> f64 {
        let refit = oracle_refit(&self.data, z, y, config);
        let scores: Vec<f64> = self
            .candidates
            .iter()
            .map(|t| {
                let mut seen = HashSet::new();
                let mut s = 0.0;
                for c in &t.cells {
                    if !self.visited.contains(*c) && seen.insert(*c) {
                        s += oracle_predict(&refit, self.field.topic_at(*c).unwrap());
                    }
                }
                s
            })
            .collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        best - scores[self.reference]
    }
}

fn selector_oracle_equivalence() -> Outcome {
    let config = FitConfig::default();
    let mut mismatches = Vec::new();
    for k in 0..50u64 {
        let inst = selector_instance(1000 + k);
        let pool = inst.query_pool();
        let ids: Vec<usize> = inst.pool.iter().map(|p| p.0).collect();

        let entropy: Vec<f64> = inst.pool.iter().map(|(_, z, _)| oracle_entropy(oracle_predict(&inst.params, z))).collect();
        let want = ids[first_argmax(&entropy)];
        let got = select_entropy(&pool, &inst.params).unwrap().id;
        if got != want {
            mismatches.push(format!("entropy #{k}: {got} vs {want}"));
        }

        let gain: Vec<f64> = inst
            .pool
            .iter()
            .map(|(_, z, _)| {
                let q = oracle_predict(&inst.params, z);
                let h1 = oracle_entropy(oracle_predict(&oracle_refit(&inst.data, z, true, &config), z));
                let h0 = oracle_entropy(oracle_predict(&oracle_refit(&inst.data, z, false, &config), z));
                oracle_entropy(q) - (q * h1 + (1.0 - q) * h0)
            })
            .collect();
        let want = ids[first_argmax(&gain)];
        let got = select_info_gain(&pool, &inst.params, &inst.data, &config, None).unwrap().unwrap().id;
        if got != want {
            mismatches.push(format!("info_gain #{k}: {got} vs {want}"));
        }

        let regret: Vec<f64> = inst
            .pool
            .iter()
            .map(|(_, z, _)| {
                let q = oracle_predict(&inst.params, z);
                q * inst.oracle_regret(z, true, &config) + (1.0 - q) * inst.oracle_regret(z, false, &config)
            })
            .collect();
        let want = ids[first_argmax(&regret)];
        let ctx = RegretContext::new(&inst.field, &inst.visited, 1.0, &inst.candidates, inst.reference).unwrap();
        let got = select_regret(&pool, &inst.params, &inst.data, &ctx, &config, None).unwrap().unwrap().id;
        if got != want {
            mismatches.push(format!("regret #{k}: {got} vs {want}"));
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() { "entropy, info_gain and regret agree with brute force on 50/50 instances".into() } else { mismatches.join("; ") },
    )
}

fn regret_nonnegativity() -> Outcome {
    let config = FitConfig::default();
    let mut rng = seeded(0x4E6);
    let mut worst = f64::INFINITY;
    for k in 0..1000u64 {
        let inst = selector_instance(50_000 + k);
        let d = inst.field.topics();
        let z = if rng.random_bool(0.5) { inst.pool[0].1.clone() } else { random_simplex(&mut rng, d) };
        let y = rng.random_bool(0.5);
        let reference = rng.random_range(0..inst.candidates.len());
        let warm = rng.random_bool(0.5).then_some(&inst.params);
        let before = inst.data.clone();
        let r = compute_regret(reference, &inst.candidates, &z, y, &inst.data, &inst.field, &inst.visited, 1.0, warm, &config).unwrap();
        assert_eq!(before, inst.data);
        worst = worst.min(r);
    }
    outcome(worst >= -1e-12, format!("minimum regret {worst:.3e} over 1000 instances (bound -1e-12)"))
}

// ---------------------------------------------------------------- mission protocol

fn full_world(seed: u64) -> (TopicField, InterestMap) {
    let field = generate_voronoi_topic_field_seeded(&VoronoiParams::default(), seed).unwrap();
    let mut rng = seeded(seed.wrapping_mul(31) + 7);
    let profile = sample_interest_profile(field.topics(), &mut rng).unwrap();
    let map = sample_interest_map(&field, &profile, &mut rng).unwrap();
    (field, map)
}

fn bandwidth_protocol() -> Outcome {
    let mut violations = Vec::new();
    let mut rollouts = 0;
    for seed in [21u64, 22] {
        let (field, map) = full_world(seed);
        for period in [1usize, 3, 10, 30] {
            for selector in SelectorKind::ALL {
                let cfg = MissionConfig { labeling_period: period, selector, seed: seed * 100 + period as u64, ..Default::default() };
                let trace = run_mission(&cfg, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
                rollouts += 1;
                let mut arrivals = Vec::new();
                let mut outstanding: Option<usize> = None;
                for r in &trace.records {
                    if r.dataset_size > r.t / period + 1 {
                        violations.push(format!("{selector} p={period} t={}: |D|={}", r.t, r.dataset_size));
                    }
                    if let Some(l) = r.label_received {
                        if r.t - l.requested_at != period || outstanding != Some(l.id) {
                            violations.push(format!("{selector} p={period} t={}: late or unknown label", r.t));
                        }
                        outstanding = None;
                        arrivals.push(r.t);
                    }
                    if let Some(q) = r.query {
                        if outstanding.is_some() {
                            violations.push(format!("{selector} p={period} t={}: two queries in flight", r.t));
                        }
                        outstanding = Some(q.id);
                    }
                }
                if arrivals.windows(2).any(|w| w[1] - w[0] != period) {
                    violations.push(format!("{selector} p={period}: arrival spacing differs from period"));
                }
            }
        }
    }
    outcome(violations.is_empty(), if violations.is_empty() { format!("{rollouts} rollouts, all exact") } else { violations.join("; ") })
}

fn bernoulli_consistency() -> Outcome {
    let params = VoronoiParams { width: 50, height: 50, ..Default::default() };
    let field = generate_voronoi_topic_field_seeded(&params, 77).unwrap();
    let profile: InterestProfile = sample_interest_profile(field.topics(), &mut seeded(78)).unwrap();
    let n = 10_000;
    let mut counts = vec![0u32; field.len()];
    let mut rng = seeded(79);
    for _ in 0..n {
        let map = sample_interest_map(&field, &profile, &mut rng).unwrap();
        for (c, &l) in counts.iter_mut().zip(map.labels()) {
            *c += u32::from(l);
        }
    }
    let within = field
        .cells()
        .zip(&counts)
        .filter(|(z, &c)| {
            let p = profile.interest_probability(z);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            (c as f64 / n as f64 - p).abs() <= 3.0 * sigma
        })
        .count();
    let frac = within as f64 / field.len() as f64;
    outcome(frac >= 0.99, format!("{:.2}% of 2500 cells within 3σ (bound 99%)", 100.0 * frac))
}

// ---------------------------------------------------------------- batch experiments

fn determinism() -> Outcome {
    let plan = ExperimentPlan {
        seed: 5,
        maps: MapSource::Voronoi { count: 2, params: VoronoiParams::default() },
        trials: 2,
        periods: vec![1, 10, 30],
        selectors: SelectorKind::ALL.to_vec(),
        ..Default::default()
    };
    let worlds = prepare_worlds(&plan).unwrap();
    let serial = run_batch_on(&plan, &worlds, &BatchOptions { serial: true, ..Default::default() }).unwrap();
    let parallel = run_batch_on(&plan, &worlds, &BatchOptions { jobs: Some(4), ..Default::default() }).unwrap();
    let strip = |t: &coexplore_core::experiment::ResultTable| {
        let mut t = t.clone();
        t.rows.iter_mut().for_each(|r| r.runtime_ms = 0.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        buf
    };
    let same = strip(&serial) == strip(&parallel) && serial.same_results(&parallel);
    outcome(same, format!("{} rows, serial and 4-thread CSVs byte-identical apart from wall-clock runtime", serial.rows.len()))
}

fn desk_plan() -> ExperimentPlan {
    ExperimentPlan {
        name: "desk".into(),
        seed: 2019,
        maps: MapSource::Voronoi { count: 10, params: VoronoiParams::default() },
        trials: 8,
        periods: vec![1, 10, 30, 100],
        selectors: vec![SelectorKind::Random, SelectorKind::Uniform, SelectorKind::InfoGain, SelectorKind::Regret],
        include_lawnmower: true,
        mission: MissionConfig { t_max: 300, ..Default::default() },
        ..Default::default()
    }
}

fn mean(rows: &[AggregateRow], m: Method, p: usize) -> f64 {
    find_aggregate(rows, m, p).map(|a| a.reward.mean).unwrap_or(f64::NAN)
}

fn adaptive_beats_lawnmower(agg: &[AggregateRow], plan: &ExperimentPlan) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for &p in &plan.periods {
        let lawn = mean(agg, Method::Lawnmower, p);
        for &s in &plan.selectors {
            let r = mean(agg, Method::Adaptive(s), p);
            if !(r > lawn) {
                ok = false;
                notes.push(format!("{s}@{p}: {r:.4} ≤ lawnmower {lawn:.4}"));
            }
        }
    }
    let lawn1 = mean(agg, Method::Lawnmower, 1);
    let best1 = plan.selectors.iter().map(|&s| mean(agg, Method::Adaptive(s), 1)).fold(f64::NEG_INFINITY, f64::max);
    let margin = best1 / lawn1 - 1.0;
    if margin < 0.5 {
        ok = false;
    }
    notes.insert(0, format!("period-1 margin {:+.1}% (bound +50%)", 100.0 * margin));
    outcome(ok, notes.join("; "))
}

fn regret_advantage(agg: &[AggregateRow]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in [10, 30] {
        let regret = mean(agg, Method::Adaptive(SelectorKind::Regret), p);
        let random = mean(agg, Method::Adaptive(SelectorKind::Random), p);
        let uniform = mean(agg, Method::Adaptive(SelectorKind::Uniform), p);
        let info = mean(agg, Method::Adaptive(SelectorKind::InfoGain), p);
        let pass = regret >= random && regret >= uniform && regret >= 0.97 * info;
        ok &= pass;
        notes.push(format!("p={p}: regret {regret:.4}, random {random:.4}, uniform {uniform:.4}, info_gain {info:.4}"));
    }
    outcome(ok, notes.join("; "))
}

fn learning_vs_earning(agg: &[AggregateRow]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in [10, 30] {
        let loss = |s| find_aggregate(agg, Method::Adaptive(s), p).map(|a| a.map_loss.mean).unwrap_or(f64::NAN);
        let (info, regret) = (loss(SelectorKind::InfoGain), loss(SelectorKind::Regret));
        ok &= info <= regret;
        notes.push(format!("p={p}: info_gain loss {info:.4} vs regret {regret:.4}"));
    }
    outcome(ok, notes.join("; "))
}

// ---------------------------------------------------------------- live sessions

fn live_equivalence() -> Outcome {
    let mut mismatches = Vec::new();
    let mut runs = 0;
    let (field, map) = full_world(404);
    let field = Arc::new(field);
    for period in [1usize, 3, 10, 30] {
        for selector in SelectorKind::ALL {
            let mission = MissionConfig { labeling_period: period, selector, seed: 9000 + period as u64, ..Default::default() };
            let sim = run_mission(&mission, &field, &map, &mut SimulatedOperator::new(&map)).unwrap();
            let config = SessionConfig { mission, clock: ClockMode::Timed { tick_ms: 0 }, patch_radius: 3 };
            let mut session = Session::new("acceptance", config, Arc::clone(&field), Some(map.clone())).unwrap();
            loop {
                if let Some(q) = session.pending().cloned() {
                    session.submit_label(q.id, map.get(q.location).unwrap()).unwrap();
                }
                if session.tick().unwrap() == TickOutcome::Finished {
                    break;
                }
            }
            runs += 1;
            if session.trace().to_jsonl_string().unwrap() != sim.to_jsonl_string().unwrap() {
                mismatches.push(format!("{selector} p={period}"));
            }
        }
    }
    outcome(mismatches.is_empty(), if mismatches.is_empty() { format!("{runs} timed sessions byte-identical to run_mission") } else { mismatches.join("; ") })
}

fn main() {
    let only: Option<HashSet<String>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let wanted = |name: &str| only.as_ref().is_none_or(|o| o.contains(name));
    let mut failures = 0;
    let mut report = |name: &str, started: Instant, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!("[{status}] {name} ({:.1}s): {}", started.elapsed().as_secs_f64(), o.detail);
    };

    type Check = fn() -> Outcome;
    let quick: [(&str, Check); 6] = [
        ("gradient_check", gradient_check),
        ("selector_oracle_equivalence", selector_oracle_equivalence),
        ("regret_nonnegativity", regret_nonnegativity),
        ("bandwidth_protocol", bandwidth_protocol),
        ("bernoulli_consistency", bernoulli_consistency),
        ("determinism", determinism),
    ];
    for (name, check) in quick {
        if wanted(name) {
            let t = Instant::now();
            report(name, t, check());
        }
    }

    let desk = ["adaptive_beats_lawnmower", "regret_advantage", "learning_vs_earning"];
    if desk.iter().any(|n| wanted(n)) {
        let t = Instant::now();
        let plan = desk_plan();
        let worlds = prepare_worlds(&plan).unwrap();
        let table = run_batch_on(&plan, &worlds, &BatchOptions::default()).unwrap();
        let adaptive = table.rows.iter().filter(|r| r.method != Method::Lawnmower).count();
        assert_eq!(adaptive, 1280, "desk-scale plan arithmetic");
        let agg = aggregate(&table).unwrap();
        println!("desk-scale plan: {} rollouts in {:.1}s", table.rows.len(), t.elapsed().as_secs_f64());
        print!("{}", format_report(&agg));
        let checks: [(&str, Box<dyn Fn() -> Outcome>); 3] = [
            ("adaptive_beats_lawnmower", Box::new(|| adaptive_beats_lawnmower(&agg, &plan))),
            ("regret_advantage", Box::new(|| regret_advantage(&agg))),
            ("learning_vs_earning", Box::new(|| learning_vs_earning(&agg))),
        ];
        for (name, check) in checks {
            if wanted(name) {
                report(name, t, check());
            }
        }
    }

    if wanted("live_equivalence") {
        let t = Instant::now();
        report("live_equivalence", t, live_equivalence());
    }

    assert!(LN_2 > 0.0);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
