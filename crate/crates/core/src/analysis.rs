//! Closed-form studies on solver outputs: utility over privacy share and
//! bandwidth, and the loss caused by misjudging the neighbourhood.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::SolverError;
use crate::model::ImpactLevelTable;
use crate::obfuscation::RhoTable;
use crate::solver::{expected_utility, solve_optimal, Game, SolverOptions, StrategyProfile};

/// Axes of the privacy-share study.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyGrid {
    /// Vehicles in the neighbourhood, tagged vehicle included.
    pub neighbourhood: u32,
    pub imprecision_km: f64,
    /// Shares of privacy-sensitive vehicles, each in [0, 1].
    pub shares: Vec<f64>,
    /// Bandwidth as a fraction of the load required to receive everything.
    pub bandwidth_fractions: Vec<f64>,
}

impl PrivacyGrid {
    /// Shares 0, 5, …, 100 % at the given bandwidth fractions.
    pub fn standard(imprecision_km: f64, bandwidth_fractions: Vec<f64>) -> Self {
        Self {
            neighbourhood: 20,
            imprecision_km,
            shares: (0..=20).map(|k| k as f64 * 0.05).collect(),
            bandwidth_fractions,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivacyPoint {
    pub imprecision_km: f64,
    pub bandwidth_fraction: f64,
    pub privacy_share: f64,
    pub exact_count: u32,
    pub private_count: u32,
    pub expected_utility: f64,
    pub relative_utility: f64,
}

/// Splits `total` vehicles into exact and privacy-sensitive ones.
pub fn split_counts(total: u32, share: f64) -> (u32, u32) {
    let private = ((total as f64) * share).round().clamp(0.0, total as f64) as u32;
    (total - private, private)
}

/// Expected utility of the optimal profile for every (bandwidth, share) cell.
pub fn privacy_share_grid(
    table: &ImpactLevelTable,
    grid: &PrivacyGrid,
    options: &SolverOptions,
) -> Result<Vec<PrivacyPoint>, SolverError> {
    let rho = RhoTable::from_radii(&[0.0, grid.imprecision_km], table)
        .map_err(|e| SolverError::InvalidGame(e.to_string()))?;
    let required = table.required_bandwidth();
    let mut out = Vec::new();
    for &fraction in &grid.bandwidth_fractions {
        let base = Game::new(table, &rho, &[grid.neighbourhood, 0], fraction * required)?;
        for &share in &grid.shares {
            let (exact, private) = split_counts(grid.neighbourhood, share);
            let game = base.with_counts(&[exact, private]);
            let solution = solve_optimal(&game, options)?;
            let phi = if exact > 0 { 0 } else { 1 };
            let utility = expected_utility(&game, &solution.profile, phi);
            out.push(PrivacyPoint {
                imprecision_km: grid.imprecision_km,
                bandwidth_fraction: fraction,
                privacy_share: share,
                exact_count: exact,
                private_count: private,
                expected_utility: utility,
                relative_utility: utility / game.total_weight(),
            });
        }
    }
    Ok(out)
}

/// Direction of the neighbourhood misjudgement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Misestimation {
    Over,
    Under,
}

impl Misestimation {
    pub fn label(self) -> &'static str {
        match self {
            Self::Over => "over",
            Self::Under => "under",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MisestimationPoint {
    pub exact_count: u32,
    pub private_count: u32,
    pub expected_utility: f64,
    pub actual_utility: f64,
    /// `1 − actual/expected`
    pub loss: f64,
}

/// For every pair of true counts, each privacy level solves the game with
/// the other level's count shifted by `offset` (up for [`Misestimation::Over`],
/// down for [`Misestimation::Under`], never below zero) and plays its own part
/// of that solution. The loss compares the utility of the resulting mixed
/// profile at the true counts with the optimum at the true counts.
pub fn misestimation_matrix(
    table: &ImpactLevelTable,
    imprecision_km: f64,
    bandwidth: f64,
    max_count: u32,
    offset: u32,
    direction: Misestimation,
    options: &SolverOptions,
) -> Result<Vec<MisestimationPoint>, SolverError> {
    let rho = RhoTable::from_radii(&[0.0, imprecision_km], table)
        .map_err(|e| SolverError::InvalidGame(e.to_string()))?;
    let base = Game::new(table, &rho, &[1, 1], bandwidth)?;
    let shift = |n: u32| match direction {
        Misestimation::Over => n + offset,
        Misestimation::Under => n.saturating_sub(offset),
    };
    let mut cache: HashMap<[u32; 2], StrategyProfile> = HashMap::new();
    let mut solve = |counts: [u32; 2]| -> Result<StrategyProfile, SolverError> {
        if let Some(p) = cache.get(&counts) {
            return Ok(p.clone());
        }
        let profile = solve_optimal(&base.with_counts(&counts), options)?.profile;
        cache.insert(counts, profile.clone());
        Ok(profile)
    };
    let mut out = Vec::new();
    for exact in 1..=max_count {
        for private in 1..=max_count {
            let truth = [exact, private];
            let game = base.with_counts(&truth);
            let optimal = solve(truth)?;
            let expected = expected_utility(&game, &optimal, 0);
            let seen_by_exact = solve([exact, shift(private)])?;
            let seen_by_private = solve([shift(exact), private])?;
            let played = StrategyProfile::new(
                vec![seen_by_exact.strategies[0].clone(), seen_by_private.strategies[1].clone()],
                truth.to_vec(),
            );
            let actual = expected_utility(&game, &played, 0);
            out.push(MisestimationPoint {
                exact_count: exact,
                private_count: private,
                expected_utility: expected,
                actual_utility: actual,
                loss: if expected > 0.0 { 1.0 - actual / expected } else { 0.0 },
            });
        }
    }
    Ok(out)
}
