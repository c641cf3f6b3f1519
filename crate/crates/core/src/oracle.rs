//! Brute-force references for the solver and the adaptation factor.

use rand::Rng;

use crate::error::SolverError;
use crate::geometry::{uniform_in_disk, Point, Square};
use crate::model::{ImpactLevelTable, Strategy};
use crate::solver::{expected_utility, Game, StrategyProfile};

/// Largest number of grid cells [`grid_search`] will visit.
pub const GRID_GUARD_CELLS: f64 = 1e8;

/// Exhaustive search over strategies shared by all vehicles of a privacy level.
///
/// Levels `1..` take values `0, step, 2·step, …` within the budget and level 0
/// spends what is left, `min(1, (A − Σ)/a_{φ,0})`. Returns the profile of
/// highest expected utility; on ties the first one visited wins.
pub fn grid_search(game: &Game, step: f64) -> Result<StrategyProfile, SolverError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(SolverError::InvalidGame(format!("grid step {step} outside (0, 0.5]")));
    }
    let levels = game.impact_levels();
    let active: Vec<usize> =
        (0..game.privacy_levels()).filter(|&phi| game.counts()[phi] > 0).collect();
    let ticks = (1.0 / step + 1e-9).floor() as usize;
    let cells = ((ticks + 1) as f64).powi(((levels - 1) * active.len()) as i32);
    if cells > GRID_GUARD_CELLS {
        return Err(SolverError::GridGuard { cells, limit: GRID_GUARD_CELLS });
    }

    let options: Vec<Vec<Vec<f64>>> =
        active.iter().map(|&phi| group_grid(game.loads(phi), game.bandwidth(), ticks, step)).collect();

    let mut profile = StrategyProfile::zeros(game);
    let mut best = profile.clone();
    let mut best_utility = f64::NEG_INFINITY;
    let mut odometer = vec![0usize; active.len()];
    loop {
        for (slot, &phi) in active.iter().enumerate() {
            profile.strategies[phi].probabilities.clone_from(&options[slot][odometer[slot]]);
        }
        let utility = expected_utility(game, &profile, active[0]);
        if utility > best_utility {
            best_utility = utility;
            best.clone_from(&profile);
        }
        let mut slot = 0;
        loop {
            if slot == active.len() {
                return Ok(best);
            }
            odometer[slot] += 1;
            if odometer[slot] < options[slot].len() {
                break;
            }
            odometer[slot] = 0;
            slot += 1;
        }
    }
}

fn group_grid(loads: &[f64], bandwidth: f64, ticks: usize, step: f64) -> Vec<Vec<f64>> {
    let levels = loads.len();
    let mut out = Vec::new();
    let mut digits = vec![0usize; levels];
    loop {
        let mut p = vec![0.0; levels];
        for i in 1..levels {
            p[i] = (digits[i] as f64 * step).min(1.0);
        }
        let used: f64 = (1..levels).map(|i| p[i] * loads[i]).sum();
        if used <= bandwidth + 1e-12 {
            let left = (bandwidth - used).max(0.0);
            p[0] = if loads[0] > 0.0 { (left / loads[0]).min(1.0) } else { 1.0 };
            out.push(p);
        }
        let mut i = 1;
        loop {
            if i == levels {
                return out;
            }
            digits[i] += 1;
            if digits[i] <= ticks {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Fractional knapsack for a lone vehicle: levels in descending order of
/// impact per transmitted bit `μ̄_i/ρ_i`, each filled to `min(1, left/a_{φ,i})`.
pub fn single_vehicle_greedy(table: &ImpactLevelTable, rho_row: &[f64], bandwidth: f64) -> Strategy {
    let levels = table.levels();
    assert_eq!(rho_row.len(), levels.len(), "one adaptation factor per level");
    let mut order: Vec<usize> = (0..levels.len()).collect();
    let value = |i: usize| levels[i].expected_impact / rho_row[i];
    order.sort_by(|&a, &b| value(b).total_cmp(&value(a)).then(a.cmp(&b)));
    let mut left = bandwidth;
    let mut p = vec![0.0; levels.len()];
    for i in order {
        let load = levels[i].load * rho_row[i];
        p[i] = if load > 0.0 { (left / load).clamp(0.0, 1.0) } else { 1.0 };
        left -= p[i] * load;
    }
    Strategy { probabilities: p }
}

/// Monte Carlo estimate of the adaptation factor: the ratio of message origins
/// within `r_φ + r_i` of a sampled region centre to those within `r_i` of the
/// true position.
///
/// Origins are drawn from the square of half-side `r_φ + r_i` around the region
/// centre, which contains both disks.
pub fn monte_carlo_rho<R: Rng + ?Sized>(r_phi: f64, r_i: f64, samples: usize, rng: &mut R) -> f64 {
    let truth = Point::new(0.0, 0.0);
    let center = uniform_in_disk(truth, r_phi, rng);
    let square = Square::centered(center, 2.0 * (r_phi + r_i));
    let (server_sq, vehicle_sq) = ((r_phi + r_i).powi(2), r_i * r_i);
    let (mut server, mut vehicle) = (0u64, 0u64);
    for _ in 0..samples {
        let origin = square.sample(rng);
        if origin.distance_sq(&center) <= server_sq {
            server += 1;
        }
        if origin.distance_sq(&truth) <= vehicle_sq {
            vehicle += 1;
        }
    }
    server as f64 / vehicle.max(1) as f64
}
