use fcdgame_core::oracle::{grid_search, single_vehicle_greedy};
use fcdgame_core::solver::{
    check_concavity, check_nash_deviation, constrained_second_derivative, expected_utility,
    solve_fixed_support, solve_optimal, Game, SolverOptions, StrategyProfile, SupportPartition,
};
use fcdgame_core::{default_scenario, ImpactLevel, ImpactLevelTable, RhoTable, Strategy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table(impacts: &[f64], loads: &[f64]) -> ImpactLevelTable {
    let levels = impacts
        .iter()
        .zip(loads)
        .enumerate()
        .map(|(k, (&m, &a))| ImpactLevel {
            radius_km: 1.0 + k as f64,
            impact_lower: m,
            impact_upper: f64::INFINITY,
            expected_impact: m,
            load: a,
        })
        .collect();
    ImpactLevelTable::new(levels).unwrap()
}

prop_compose! {
    fn small_game()(
        levels in 1usize..=3,
        groups in 1usize..=2,
    )(
        impacts in prop::collection::vec(0.1f64..10.0, levels),
        loads in prop::collection::vec(0.1f64..10.0, levels),
        rho in prop::collection::vec(1.0f64..10.0, levels * groups),
        counts in prop::collection::vec(0u32..=2, groups),
        budget in 0.05f64..1.2,
        levels in Just(levels),
        groups in Just(groups),
    ) -> Game {
        let rows = (0..groups).map(|g| rho[g * levels..(g + 1) * levels].to_vec()).collect();
        let mut counts = counts;
        if counts.iter().all(|&c| c == 0) {
            counts[0] = 1;
        }
        let total: f64 = loads.iter().sum();
        Game::from_parts(impacts, loads, RhoTable::from_rows(rows), counts, budget * total).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_profiles_are_feasible(game in small_game()) {
        let sol = solve_optimal(&game, &SolverOptions::default()).unwrap();
        for (phi, s) in sol.profile.strategies.iter().enumerate() {
            prop_assert!(s.bandwidth(game.loads(phi)) <= game.bandwidth() + 1e-9);
            prop_assert!(s.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn utility_is_monotone(game in small_game(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sol = solve_optimal(&game, &SolverOptions::default()).unwrap();
        let base = expected_utility(&game, &sol.profile, 0);
        let mut raised = sol.profile.clone();
        for s in &mut raised.strategies {
            for p in &mut s.probabilities {
                *p = (*p + rand::Rng::random::<f64>(&mut rng) * (1.0 - *p)).min(1.0);
            }
        }
        prop_assert!(expected_utility(&game, &raised, 0) >= base - 1e-12);
    }

    #[test]
    fn solver_beats_coarse_grid(game in small_game()) {
        let sol = solve_optimal(&game, &SolverOptions::default()).unwrap();
        let u = expected_utility(&game, &sol.profile, 0);
        let g = expected_utility(&game, &grid_search(&game, 0.1).unwrap(), 0);
        prop_assert!(u >= (1.0 - 1e-3) * g, "{} < {}", u, g);
    }

    #[test]
    fn no_profitable_deviation(game in small_game(), seed in any::<u64>()) {
        let sol = solve_optimal(&game, &SolverOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for phi in 0..game.privacy_levels() {
            if game.counts()[phi] > 0 {
                prop_assert!(check_nash_deviation(&game, &sol.profile, phi, 200, &mut rng) <= 1e-6);
            }
        }
    }

    #[test]
    fn utility_is_privacy_invariant(game in small_game()) {
        let sol = solve_optimal(&game, &SolverOptions::default()).unwrap();
        let a = expected_utility(&game, &sol.profile, 0);
        for phi in 1..game.privacy_levels() {
            let b = expected_utility(&game, &sol.profile, phi);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn swapping_privacy_levels_swaps_the_score(
        impacts in prop::collection::vec(0.1f64..10.0, 3),
        loads in prop::collection::vec(0.1f64..10.0, 3),
        rho in prop::collection::vec(1.0f64..10.0, 6),
        counts in prop::collection::vec(1u32..=3, 2),
        budget in 0.05f64..1.0,
    ) {
        let total: f64 = loads.iter().sum();
        let rows = vec![rho[..3].to_vec(), rho[3..].to_vec()];
        let swapped = vec![rows[1].clone(), rows[0].clone()];
        let a = Game::from_parts(impacts.clone(), loads.clone(), RhoTable::from_rows(rows), counts.clone(), budget * total).unwrap();
        let b = Game::from_parts(impacts, loads, RhoTable::from_rows(swapped), vec![counts[1], counts[0]], budget * total).unwrap();
        let opts = SolverOptions::default();
        let x = solve_optimal(&a, &opts).unwrap();
        let y = solve_optimal(&b, &opts).unwrap();
        prop_assert!((x.report.robust_score - y.report.robust_score).abs() <= 1e-9 * x.report.robust_score.max(1.0));
    }
}

#[test]
fn swapping_distinct_privacy_levels_swaps_strategies() {
    let rows = vec![vec![1.0, 1.0, 1.0], vec![9.0, 4.0, 1.1]];
    let a = Game::from_parts(
        vec![1.0, 5.0, 20.0],
        vec![10.0, 2.0, 0.5],
        RhoTable::from_rows(rows.clone()),
        vec![2, 3],
        3.0,
    )
    .unwrap();
    let b = Game::from_parts(
        vec![1.0, 5.0, 20.0],
        vec![10.0, 2.0, 0.5],
        RhoTable::from_rows(vec![rows[1].clone(), rows[0].clone()]),
        vec![3, 2],
        3.0,
    )
    .unwrap();
    let x = solve_optimal(&a, &SolverOptions::default()).unwrap().profile;
    let y = solve_optimal(&b, &SolverOptions::default()).unwrap().profile;
    for i in 0..3 {
        assert!((x.p(0, i) - y.p(1, i)).abs() < 1e-9);
        assert!((x.p(1, i) - y.p(0, i)).abs() < 1e-9);
    }
}

#[test]
fn single_vehicle_solver_equals_greedy_under_privacy() {
    let cfg = default_scenario();
    for r_phi in [0.0, 0.1, 1.0, 10.0, 50.0] {
        let rho = RhoTable::from_radii(&[r_phi], &cfg.impact_levels).unwrap();
        for fraction in [0.01, 0.1, 0.5, 1.5] {
            let a = fraction * cfg.impact_levels.required_bandwidth();
            let game = Game::new(&cfg.impact_levels, &rho, &[1], a).unwrap();
            let solved = solve_optimal(&game, &SolverOptions::default()).unwrap().profile;
            let greedy = single_vehicle_greedy(&cfg.impact_levels, rho.row(0), a);
            let g = expected_utility(&game, &StrategyProfile::new(vec![greedy], vec![1]), 0);
            let s = expected_utility(&game, &solved, 0);
            assert!((g - s).abs() <= 1e-9 * g.max(1.0), "r={r_phi} A={a}: {g} vs {s}");
        }
    }
}

#[test]
fn privacy_level_favours_wide_levels() {
    // two impact levels of equal weight; the small-radius one is 100 times
    // more expensive for the imprecise vehicles
    let t = table(&[1.0, 1.0], &[1.0, 1.0]);
    let rho = RhoTable::from_rows(vec![vec![1.0, 1.0], vec![100.0, 1.5]]);
    let game = Game::new(&t, &rho, &[2, 2], 0.5).unwrap();
    let sol = solve_optimal(&game, &SolverOptions::default()).unwrap();
    assert_eq!(sol.profile.p(1, 0), 0.0);
    assert!(sol.profile.p(1, 1) > 0.0);
}

#[test]
fn concavity_matches_closed_form() {
    // U'' along the budget line for one level with n vehicles
    let t = table(&[1.0, 4.0], &[2.0, 1.0]);
    let rho = RhoTable::from_rows(vec![vec![1.3, 1.1]]);
    let game = Game::new(&t, &rho, &[3], 1.0).unwrap();
    let profile = StrategyProfile::new(vec![Strategy::new(vec![0.2, 0.4]).unwrap()], vec![3]);
    let n = 3.0;
    let ratio = game.loads(0)[1] / game.loads(0)[0];
    let analytic = -game.weight(1) * n * (n - 1.0) * (1.0f64 - 0.4).powf(n - 2.0)
        - game.weight(0) * n * (n - 1.0) * (1.0f64 - 0.2).powf(n - 2.0) * ratio * ratio;
    let numeric = constrained_second_derivative(&game, &profile, 0, 1, 1e-4);
    assert!((numeric - analytic).abs() <= 1e-4 * analytic.abs(), "{numeric} vs {analytic}");
    assert!(check_concavity(&game, &profile, 0, 1));
}

#[test]
fn fixed_support_reports_convergence() {
    let cfg = default_scenario();
    let rho = RhoTable::from_radii(&[0.0, 10.0], &cfg.impact_levels).unwrap();
    let game = Game::new(&cfg.impact_levels, &rho, &[3, 4], 10.0).unwrap();
    let options = SolverOptions::default();
    let sol = solve_fixed_support(&game, &SupportPartition::full(2, 4), &options);
    assert!(sol.converged);
    assert!(sol.last_change <= options.epsilon);
    assert!(sol.profile.is_feasible(&game));
}
