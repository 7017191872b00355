//! Non-adaptive boustrophedon baseline.

use std::f64::consts::LN_2;

use super::MetricsRecord;
use crate::error::{Error, Result};
use crate::field::{GridLocation, InterestMap};
use crate::planner::VisitedSet;

fn toward(a: usize, b: usize) -> usize {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => a + 1,
        std::cmp::Ordering::Greater => a - 1,
        std::cmp::Ordering::Equal => a,
    }
}

fn sweep(width: usize, height: usize, corner: GridLocation, by_rows: bool) -> Vec<GridLocation> {
    let xs: Vec<usize> = if corner.x == 0 { (0..width).collect() } else { (0..width).rev().collect() };
    let ys: Vec<usize> = if corner.y == 0 { (0..height).collect() } else { (0..height).rev().collect() };
    let mut cells = Vec::with_capacity(width * height);
    if by_rows {
        for (i, &y) in ys.iter().enumerate() {
            let row: Box<dyn Iterator<Item = &usize>> = if i % 2 == 0 { Box::new(xs.iter()) } else { Box::new(xs.iter().rev()) };
            cells.extend(row.map(|&x| GridLocation::new(x, y)));
        }
    } else {
        for (i, &x) in xs.iter().enumerate() {
            let col: Box<dyn Iterator<Item = &usize>> = if i % 2 == 0 { Box::new(ys.iter()) } else { Box::new(ys.iter().rev()) };
            cells.extend(col.map(|&y| GridLocation::new(x, y)));
        }
    }
    cells
}

/// The eight sweeps (four corners, row- and column-major), each a path of
/// `t_max` cells beginning at `start`. A sweep first walks diagonally to its
/// corner; if it finishes the map early it retraces itself.
pub fn lawnmower_trajectories(width: usize, height: usize, start: GridLocation, t_max: usize) -> Result<Vec<Vec<GridLocation>>> {
    if width == 0 || height == 0 || start.x >= width || start.y >= height {
        return Err(Error::OutOfBounds { x: start.x, y: start.y, width, height });
    }
    let corners = [
        GridLocation::new(0, 0),
        GridLocation::new(width - 1, 0),
        GridLocation::new(0, height - 1),
        GridLocation::new(width - 1, height - 1),
    ];
    let mut out = Vec::with_capacity(8);
    for corner in corners {
        for by_rows in [true, false] {
            let mut pass = vec![start];
            let mut at = start;
            while at != corner {
                at = GridLocation::new(toward(at.x, corner.x), toward(at.y, corner.y));
                pass.push(at);
            }
            pass.extend(sweep(width, height, corner, by_rows).into_iter().skip(1));
            let mut path = Vec::with_capacity(t_max);
            let mut forward = true;
            while path.len() < t_max {
                if pass.len() == 1 {
                    path.push(pass[0]);
                    continue;
                }
                let leg: Box<dyn Iterator<Item = &GridLocation>> =
                    if forward { Box::new(pass.iter()) } else { Box::new(pass.iter().rev()) };
                let skip = usize::from(!path.is_empty());
                path.extend(leg.skip(skip).take(t_max - path.len()));
                forward = !forward;
            }
            out.push(path);
        }
    }
    Ok(out)
}

/// Reward of each sweep averaged over the eight sweeps. The baseline learns
/// no model, so its map loss is that of the uninformed prediction, ln 2.
pub fn run_lawnmower(interest_map: &InterestMap, start: GridLocation, t_max: usize) -> Result<MetricsRecord> {
    let (w, h) = interest_map.dims();
    let paths = lawnmower_trajectories(w, h, start, t_max)?;
    let mut reward = 0.0;
    let mut unique = 0usize;
    for path in &paths {
        let mut visited = VisitedSet::new(w, h);
        let mut r = 0usize;
        for &c in path {
            if visited.insert(c) && interest_map.get(c)? {
                r += 1;
            }
        }
        reward += r as f64 / t_max as f64;
        unique += visited.len();
    }
    Ok(MetricsRecord {
        reward_per_timestep: reward / paths.len() as f64,
        final_map_loss: LN_2,
        queries_made: 0,
        unique_cells_visited: unique / paths.len(),
    })
}
