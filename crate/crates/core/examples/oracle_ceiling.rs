//! Reward an omniscient planner would collect on the desk-scale worlds.
//!
//! The same 50-candidate, 5-primitive planner is driven by the true interest
//! probability p·z, and then by the true labels, and compared with the
//! lawnmower baseline. This bounds what any learned reward model can reach.
//!
//! Run with `cargo run --release -p coexplore-core --example oracle_ceiling`.

use std::collections::HashSet;

use coexplore_core::experiment::{prepare_worlds, ExperimentPlan, MapSource};
use coexplore_core::field::{GridLocation, InterestMap, InterestProfile, TopicField, VoronoiParams};
use coexplore_core::mission::lawnmower::run_lawnmower;
use coexplore_core::planner::{generate_trajectories, PlannerState, Trajectory, VisitedSet};
use coexplore_core::rng::seeded;

const T_MAX: usize = 300;

fn oracle_rollout(field: &TopicField, profile: &InterestProfile, map: &InterestMap, use_labels: bool, seed: u64) -> f64 {
    let (w, h) = field.dims();
    let start = GridLocation::new(w / 2, h / 2);
    let mut rng = seeded(seed);
    let mut state = PlannerState { location: start, heading: 0.0, visited: VisitedSet::new(w, h) };
    state.visited.insert(start);
    let mut reward = u64::from(map.get(start).unwrap());
    for _ in 1..T_MAX {
        let candidates = generate_trajectories(&state, (w, h), 50, 5, &mut rng);
        let score = |t: &Trajectory| {
            let mut seen = HashSet::new();
            t.cells
                .iter()
                .filter(|c| !state.visited.contains(**c) && seen.insert(**c))
                .map(|&c| if use_labels { f64::from(u8::from(map.get(c).unwrap())) } else { profile.interest_probability(field.topic_at(c).unwrap()) })
                .sum::<f64>()
        };
        let scores: Vec<f64> = candidates.iter().map(score).collect();
        let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        let next = candidates[best].cells[0];
        if let Some(h) = candidates[best].heading_at_step(0) {
            state.heading = h;
        }
        state.location = next;
        if state.visited.insert(next) && map.get(next).unwrap() {
            reward += 1;
        }
    }
    reward as f64 / T_MAX as f64
}

fn main() {
    let plan = ExperimentPlan { seed: 2019, maps: MapSource::Voronoi { count: 10, params: VoronoiParams::default() }, ..Default::default() };
    let worlds = prepare_worlds(&plan).unwrap();
    let n = worlds.len() as f64;
    let (mut base, mut lawn, mut by_prob, mut by_label) = (0.0, 0.0, 0.0, 0.0);
    for (i, world) in worlds.iter().enumerate() {
        let sample = &world.interest_maps[0];
        let (w, h) = world.field.dims();
        base += sample.map.count_interesting() as f64 / (w * h) as f64;
        lawn += run_lawnmower(&sample.map, GridLocation::new(w / 2, h / 2), T_MAX).unwrap().reward_per_timestep;
        by_prob += oracle_rollout(&world.field, &sample.profile, &sample.map, false, i as u64);
        by_label += oracle_rollout(&world.field, &sample.profile, &sample.map, true, i as u64);
    }
    let lawn = lawn / n;
    println!("interesting fraction      {:.3}", base / n);
    println!("lawnmower                 {lawn:.3}");
    println!("planner on true p·z       {:.3} ({:+.1}%)", by_prob / n, 100.0 * (by_prob / n / lawn - 1.0));
    println!("planner on true labels    {:.3} ({:+.1}%)", by_label / n, 100.0 * (by_label / n / lawn - 1.0));
}
