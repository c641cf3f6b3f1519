//! Cross-checks of the solver against the oracles and its own optimality
//! conditions. Used by `--mode validate` and the acceptance target.

use fcdgame_core::oracle::{grid_search, monte_carlo_rho, single_vehicle_greedy};
use fcdgame_core::solver::{
    check_concavity, check_nash_deviation, expected_utility, random_feasible_strategy,
    solve_optimal, Game, SolverOptions, StrategyProfile,
};
use fcdgame_core::{adaptation_factor, default_scenario, ImpactLevel, ImpactLevelTable, RhoTable, SolverError, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A solver under test.
pub type Solver = dyn Fn(&Game) -> Result<StrategyProfile, SolverError> + Sync;

pub fn reference_solver(game: &Game) -> Result<StrategyProfile, SolverError> {
    solve_optimal(game, &SolverOptions::default()).map(|s| s.profile)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub tolerance: String,
    pub detail: String,
}

/// Sizes of the validation battery.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidateParams {
    pub seed: u64,
    pub rho_pairs: usize,
    pub rho_samples: usize,
    pub oracle_instances: usize,
    pub oracle_step: f64,
    pub linear_instances: usize,
    pub concavity_profiles: usize,
    pub nash_trials: usize,
}

impl ValidateParams {
    pub fn full() -> Self {
        Self {
            seed: 2024,
            rho_pairs: 20,
            rho_samples: 1_000_000,
            oracle_instances: 200,
            oracle_step: 0.02,
            linear_instances: 200,
            concavity_profiles: 100,
            nash_trials: 1000,
        }
    }

    pub fn quick() -> Self {
        Self {
            rho_pairs: 5,
            rho_samples: 200_000,
            oracle_instances: 30,
            oracle_step: 0.05,
            linear_instances: 50,
            concavity_profiles: 30,
            nash_trials: 200,
            ..Self::full()
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random game with at most two privacy levels, three impact levels and four
/// vehicles.
pub fn random_small_game<R: Rng + ?Sized>(rng: &mut R) -> Game {
    let levels = rng.random_range(1..=3usize);
    let groups = rng.random_range(1..=2usize);
    let impacts: Vec<f64> = (0..levels).map(|_| rng.random_range(0.1..10.0)).collect();
    let loads: Vec<f64> = (0..levels).map(|_| rng.random_range(0.1..10.0)).collect();
    let rows: Vec<Vec<f64>> = (0..groups)
        .map(|_| {
            (0..levels)
                .map(|_| if rng.random_bool(0.3) { 1.0 } else { rng.random_range(1.0..10.0) })
                .collect()
        })
        .collect();
    let total = rng.random_range(1..=4u32);
    let mut counts = vec![0u32; groups];
    for _ in 0..total {
        counts[rng.random_range(0..groups)] += 1;
    }
    let required: f64 = loads.iter().sum();
    let bandwidth = rng.random_range(0.02..1.2) * required;
    Game::from_parts(impacts, loads, RhoTable::from_rows(rows), counts, bandwidth)
        .expect("generated game is valid")
}

/// Default levels with an imprecise and an exact privacy level.
pub fn table_one_game<R: Rng + ?Sized>(rng: &mut R) -> Game {
    let cfg = default_scenario();
    let r_phi = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let rho = RhoTable::from_radii(&[0.0, r_phi], &cfg.impact_levels).expect("valid radii");
    let mut counts = vec![rng.random_range(0..=6u32), rng.random_range(0..=6u32)];
    if counts.iter().all(|&c| c == 0) {
        counts[0] = 1;
    }
    let fraction = [0.01, 0.1, 0.3][rng.random_range(0..3)];
    let bandwidth = fraction * cfg.impact_levels.required_bandwidth();
    Game::new(&cfg.impact_levels, &rho, &counts, bandwidth).expect("valid game")
}

fn random_table<R: Rng + ?Sized>(rng: &mut R, levels: usize) -> ImpactLevelTable {
    let mut impacts: Vec<f64> = (0..levels).map(|_| rng.random_range(0.1..100.0)).collect();
    impacts.sort_by(f64::total_cmp);
    let levels = impacts
        .iter()
        .enumerate()
        .map(|(k, &m)| ImpactLevel {
            radius_km: rng.random_range(0.5..100.0),
            impact_lower: m,
            impact_upper: impacts.get(k + 1).copied().unwrap_or(f64::INFINITY),
            expected_impact: m,
            load: rng.random_range(0.01..50.0),
        })
        .collect();
    ImpactLevelTable::new(levels).expect("generated table is valid")
}

pub fn adaptation_suite(params: &ValidateParams) -> SuiteOutcome {
    let tolerance = 0.02;
    let mut pair_rng = rng_for(params.seed, 1);
    let pairs: Vec<(f64, f64)> = (0..params.rho_pairs)
        .map(|_| {
            let r_i = 10f64.powf(pair_rng.random_range(0.0..2.0));
            let r_phi = pair_rng.random_range(0.0..(3.0 * r_i).min(10.0));
            (r_phi, r_i)
        })
        .collect();
    let errors: Vec<f64> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(r_phi, r_i))| {
            let mut rng = rng_for(params.seed, 100 + k as u64);
            let estimate = monte_carlo_rho(r_phi, r_i, params.rho_samples, &mut rng);
            let exact = adaptation_factor(r_phi, r_i).expect("valid radii");
            (estimate / exact - 1.0).abs()
        })
        .collect();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    SuiteOutcome {
        name: "adaptation-factor",
        passed: worst <= tolerance,
        tolerance: format!("relative error <= {tolerance} at {} samples", params.rho_samples),
        detail: format!("{} pairs, worst relative error {worst:.5}", pairs.len()),
    }
}

pub fn oracle_suite(params: &ValidateParams, solver: &Solver) -> SuiteOutcome {
    let tolerance = 1e-3;
    let mut rng = rng_for(params.seed, 2);
    let games: Vec<Game> = (0..params.oracle_instances).map(|_| random_small_game(&mut rng)).collect();
    let ratios: Vec<Result<f64, String>> = games
        .par_iter()
        .map(|game| {
            let solved = solver(game).map_err(|e| e.to_string())?;
            let grid = grid_search(game, params.oracle_step).map_err(|e| e.to_string())?;
            let phi = active(game)[0];
            let u = expected_utility(game, &solved, phi);
            let g = expected_utility(game, &grid, phi);
            Ok(if g > 0.0 { u / g } else { 1.0 })
        })
        .collect();
    let errors = ratios.iter().filter(|r| r.is_err()).count();
    let worst = ratios.iter().filter_map(|r| r.as_ref().ok()).copied().fold(f64::INFINITY, f64::min);
    SuiteOutcome {
        name: "oracle-equivalence",
        passed: errors == 0 && worst >= 1.0 - tolerance,
        tolerance: format!("solver >= (1 - {tolerance}) x grid at step {}", params.oracle_step),
        detail: format!("{} instances, {errors} errors, worst ratio {worst:.6}", games.len()),
    }
}

pub fn linear_suite(params: &ValidateParams, solver: &Solver) -> SuiteOutcome {
    let tolerance = 1e-9;
    let mut rng = rng_for(params.seed, 3);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for k in 0..params.linear_instances {
        let (table, r_phi, bandwidth) = if k % 4 == 0 {
            let cfg = default_scenario();
            let r_phi = [0.0, 0.1, 1.0, 10.0, 100.0][rng.random_range(0..5)];
            let b = rng.random_range(0.0..1.2) * cfg.impact_levels.required_bandwidth();
            (cfg.impact_levels, r_phi, b)
        } else {
            let levels = rng.random_range(1..=5);
            let table = random_table(&mut rng, levels);
            let b = rng.random_range(0.0..1.2) * table.required_bandwidth();
            (table, rng.random_range(0.0..20.0), b)
        };
        let rho = RhoTable::from_radii(&[r_phi], &table).expect("valid radii");
        let game = Game::new(&table, &rho, &[1], bandwidth).expect("valid game");
        let greedy = single_vehicle_greedy(&table, rho.row(0), bandwidth);
        let g = expected_utility(&game, &StrategyProfile::new(vec![greedy], vec![1]), 0);
        match solver(&game) {
            Ok(p) => {
                let s = expected_utility(&game, &p, 0);
                worst = worst.max((s - g).abs() / g.abs().max(1.0));
            }
            Err(_) => errors += 1,
        }
    }
    SuiteOutcome {
        name: "linear-case",
        passed: errors == 0 && worst <= tolerance,
        tolerance: format!("|solver - greedy| <= {tolerance} x max(1, greedy)"),
        detail: format!("{} instances, {errors} errors, worst scaled gap {worst:.3e}", params.linear_instances),
    }
}

pub fn concavity_suite(params: &ValidateParams) -> SuiteOutcome {
    let mut rng = rng_for(params.seed, 4);
    let mut failures = 0;
    let mut checked = 0;
    while checked < params.concavity_profiles {
        let levels = rng.random_range(2..=4usize);
        let groups = rng.random_range(1..=2usize);
        let table = random_table(&mut rng, levels);
        let radii: Vec<f64> = (0..groups).map(|_| rng.random_range(0.0..10.0)).collect();
        let rho = RhoTable::from_radii(&radii, &table).expect("valid radii");
        let counts: Vec<u32> = (0..groups).map(|_| rng.random_range(1..=6)).collect();
        let bandwidth = rng.random_range(0.05..0.9) * table.required_bandwidth();
        let game = Game::new(&table, &rho, &counts, bandwidth).expect("valid game");
        let strategies = (0..groups)
            .map(|phi| Strategy { probabilities: random_feasible_strategy(game.loads(phi), bandwidth, &mut rng) })
            .collect();
        let profile = StrategyProfile::new(strategies, counts);
        let phi = rng.random_range(0..groups);
        let level = rng.random_range(1..levels);
        let interior = |p: f64| p > 1e-3 && p < 1.0 - 1e-3;
        if !interior(profile.p(phi, level)) || !interior(profile.p(phi, 0)) {
            continue;
        }
        checked += 1;
        if !check_concavity(&game, &profile, phi, level) {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "concavity",
        passed: failures == 0,
        tolerance: format!("second derivative <= {}", fcdgame_core::solver::CONCAVITY_TOLERANCE),
        detail: format!("{checked} random feasible profiles, {failures} failures"),
    }
}

pub fn nash_suite(params: &ValidateParams, solver: &Solver) -> SuiteOutcome {
    let tolerance = 1e-6;
    let mut rng = rng_for(params.seed, 5);
    let mut games: Vec<Game> = (0..params.oracle_instances).map(|_| random_small_game(&mut rng)).collect();
    games.extend((0..params.oracle_instances / 4).map(|_| table_one_game(&mut rng)));
    let gains: Vec<Result<f64, String>> = games
        .par_iter()
        .enumerate()
        .map(|(k, game)| {
            let profile = solver(game).map_err(|e| e.to_string())?;
            let mut rng = rng_for(params.seed, 1000 + k as u64);
            Ok(active(game)
                .into_iter()
                .map(|phi| check_nash_deviation(game, &profile, phi, params.nash_trials, &mut rng))
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let errors = gains.iter().filter(|g| g.is_err()).count();
    let worst = gains.iter().filter_map(|g| g.as_ref().ok()).copied().fold(f64::NEG_INFINITY, f64::max);
    SuiteOutcome {
        name: "nash-deviation",
        passed: errors == 0 && worst <= tolerance,
        tolerance: format!("gain <= {tolerance} over {} deviations", params.nash_trials),
        detail: format!("{} solver outputs, {errors} errors, worst gain {worst:.3e}", games.len()),
    }
}

fn active(game: &Game) -> Vec<usize> {
    (0..game.privacy_levels()).filter(|&phi| game.counts()[phi] > 0).collect()
}

pub fn run_all(params: &ValidateParams, solver: &Solver) -> Vec<SuiteOutcome> {
    vec![
        adaptation_suite(params),
        oracle_suite(params, solver),
        linear_suite(params, solver),
        concavity_suite(params),
        nash_suite(params, solver),
    ]
}
