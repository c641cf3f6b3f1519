//! Mixed-strategy solution of the subscription game.
//!
//! Every vehicle of privacy level `φ` subscribes to impact level `i` with
//! probability `p_{φ,i}` under the bandwidth budget `Σ_i a_{φ,i} p_{φ,i} <= A`.
//! A message of level `i` reaches a vehicle through the cellular link or a
//! neighbour with probability `1 - Π_φ (1 - p_{φ,i})^{n_φ}`, so the expected
//! utility of the tagged vehicle is
//!
//! ```text
//! ū = Σ_i μ̄_{φe,i} a_{φe,i} [1 - Π_φ (1 - p_{φ,i})^{n_φ}]
//! ```
//!
//! which does not depend on `φe` because `μ̄_{φ,i} a_{φ,i} = μ̄_i a_i`.
//!
//! [`solve_fixed_support`] runs the round-robin recalculation over privacy
//! levels for one zero/non-zero pattern ([`SupportPartition`]);
//! [`solve_optimal`] enumerates every pattern and keeps the best-scoring
//! converged profile.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::SolverError;
use crate::model::{ImpactLevelTable, ScenarioConfig, Strategy, FEASIBILITY_TOLERANCE};
use crate::obfuscation::{obfuscated_impact, obfuscated_load, RhoTable};

/// Largest enumeration accepted by [`solve_optimal`] by default, in bits.
pub const DEFAULT_GUARD_BITS: usize = 20;

/// Sweeps allowed per privacy level before a partition counts as non-converged.
pub const DEFAULT_SWEEPS_PER_LEVEL: usize = 10;

/// Second derivatives above this value fail the concavity check.
pub const CONCAVITY_TOLERANCE: f64 = 1e-6;

/// Relative tolerance under which two partition scores are considered tied.
const SCORE_TIE_TOLERANCE: f64 = 1e-12;

/// The game as seen from one neighbourhood.
#[derive(Clone, Debug, PartialEq)]
pub struct Game {
    expected_impact: Vec<f64>,
    base_loads: Vec<f64>,
    weights: Vec<f64>,
    rho: RhoTable,
    loads: Vec<Vec<f64>>,
    counts: Vec<u32>,
    bandwidth: f64,
}

impl Game {
    pub fn new(
        table: &ImpactLevelTable,
        rho: &RhoTable,
        counts: &[u32],
        bandwidth: f64,
    ) -> Result<Self, SolverError> {
        Self::from_parts(
            table.levels().iter().map(|l| l.expected_impact).collect(),
            table.levels().iter().map(|l| l.load).collect(),
            rho.clone(),
            counts.to_vec(),
            bandwidth,
        )
    }

    /// Builds a game from raw per-level vectors.
    pub fn from_parts(
        expected_impact: Vec<f64>,
        base_loads: Vec<f64>,
        rho: RhoTable,
        counts: Vec<u32>,
        bandwidth: f64,
    ) -> Result<Self, SolverError> {
        let levels = expected_impact.len();
        if levels == 0 || base_loads.len() != levels {
            return Err(SolverError::InvalidGame("impact and load vectors must match".into()));
        }
        if rho.privacy_levels() != counts.len() || counts.is_empty() {
            return Err(SolverError::InvalidGame("one count per privacy level is required".into()));
        }
        if (0..counts.len()).any(|phi| rho.row(phi).len() != levels) {
            return Err(SolverError::InvalidGame("adaptation rows must cover every level".into()));
        }
        if !(bandwidth >= 0.0) || !bandwidth.is_finite() {
            return Err(SolverError::InvalidGame(format!("invalid bandwidth {bandwidth}")));
        }
        if expected_impact.iter().chain(&base_loads).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SolverError::InvalidGame("impacts and loads must be finite and >= 0".into()));
        }
        let weights = expected_impact.iter().zip(&base_loads).map(|(m, a)| m * a).collect();
        let loads = (0..counts.len())
            .map(|phi| {
                base_loads.iter().zip(rho.row(phi)).map(|(&a, &r)| obfuscated_load(a, r)).collect()
            })
            .collect();
        Ok(Self { expected_impact, base_loads, weights, rho, loads, counts, bandwidth })
    }

    pub fn from_config(config: &ScenarioConfig) -> Result<Self, SolverError> {
        let rho = RhoTable::new(&config.privacy_profiles, &config.impact_levels)
            .map_err(|e| SolverError::InvalidGame(e.to_string()))?;
        Self::new(&config.impact_levels, &rho, &config.counts(), config.bandwidth_per_slot)
    }

    pub fn with_counts(&self, counts: &[u32]) -> Self {
        assert_eq!(counts.len(), self.counts.len(), "one count per privacy level");
        Self { counts: counts.to_vec(), ..self.clone() }
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Self {
        Self { bandwidth, ..self.clone() }
    }

    pub fn impact_levels(&self) -> usize {
        self.expected_impact.len()
    }

    pub fn privacy_levels(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn expected_impact(&self, level: usize) -> f64 {
        self.expected_impact[level]
    }

    pub fn base_load(&self, level: usize) -> f64 {
        self.base_loads[level]
    }

    /// `μ̄_i a_i`
    pub fn weight(&self, level: usize) -> f64 {
        self.weights[level]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn rho(&self) -> &RhoTable {
        &self.rho
    }

    /// `a_{φ,i}` for every level.
    pub fn loads(&self, phi: usize) -> &[f64] {
        &self.loads[phi]
    }

    /// `μ̄_{φ,i}`, the impact per delivered bit for privacy level `phi`.
    pub fn impact_per_bit(&self, phi: usize, level: usize) -> f64 {
        obfuscated_impact(self.expected_impact[level], self.rho.get(phi, level))
    }

    fn active_levels(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&phi| self.counts[phi] > 0).collect()
    }
}

/// One strategy per privacy level together with the neighbourhood counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyProfile {
    pub strategies: Vec<Strategy>,
    pub counts: Vec<u32>,
}

impl StrategyProfile {
    pub fn zeros(game: &Game) -> Self {
        Self {
            strategies: vec![Strategy::zeros(game.impact_levels()); game.privacy_levels()],
            counts: game.counts().to_vec(),
        }
    }

    pub fn new(strategies: Vec<Strategy>, counts: Vec<u32>) -> Self {
        assert_eq!(strategies.len(), counts.len(), "one strategy per privacy level");
        Self { strategies, counts }
    }

    pub fn p(&self, phi: usize, level: usize) -> f64 {
        self.strategies[phi].probabilities[level]
    }

    /// `p(μ_i)`, see [`receive_probability`].
    pub fn receive_probability(&self, level: usize) -> f64 {
        receive_probability(level, self)
    }

    pub fn is_feasible(&self, game: &Game) -> bool {
        self.strategies
            .iter()
            .enumerate()
            .all(|(phi, s)| s.is_feasible(game.loads(phi), game.bandwidth()))
    }

    pub fn with_counts(&self, counts: &[u32]) -> Self {
        Self { strategies: self.strategies.clone(), counts: counts.to_vec() }
    }
}

/// For every impact level, which privacy levels may subscribe with non-zero
/// probability. Bit `phi * n_levels + level` of the mask marks `phi ∈ Φ⁺(level)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SupportPartition {
    mask: u64,
    privacy_levels: usize,
    impact_levels: usize,
}

impl SupportPartition {
    pub fn new(mask: u64, privacy_levels: usize, impact_levels: usize) -> Self {
        assert!(privacy_levels * impact_levels <= 64, "partition does not fit in 64 bits");
        let bits = privacy_levels * impact_levels;
        let mask = if bits == 64 { mask } else { mask & ((1u64 << bits) - 1) };
        Self { mask, privacy_levels, impact_levels }
    }

    pub fn full(privacy_levels: usize, impact_levels: usize) -> Self {
        Self::new(u64::MAX, privacy_levels, impact_levels)
    }

    /// The pattern of non-zero probabilities of a profile.
    pub fn of_profile(profile: &StrategyProfile) -> Self {
        let (np, nl) = (profile.strategies.len(), profile.strategies[0].len());
        let mut mask = 0u64;
        for phi in 0..np {
            for level in 0..nl {
                if profile.p(phi, level) > 0.0 {
                    mask |= 1 << (phi * nl + level);
                }
            }
        }
        Self::new(mask, np, nl)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn supports(&self, phi: usize, level: usize) -> bool {
        self.mask >> (phi * self.impact_levels + level) & 1 == 1
    }

    /// `Φ⁺(level)`
    pub fn positive(&self, level: usize) -> Vec<usize> {
        (0..self.privacy_levels).filter(|&phi| self.supports(phi, level)).collect()
    }

    /// `Φ⁻(level)`
    pub fn negative(&self, level: usize) -> Vec<usize> {
        (0..self.privacy_levels).filter(|&phi| !self.supports(phi, level)).collect()
    }

    pub fn support_of(&self, phi: usize) -> Vec<bool> {
        (0..self.impact_levels).map(|level| self.supports(phi, level)).collect()
    }

    pub fn supported_pairs(&self) -> u32 {
        self.mask.count_ones()
    }

    /// `'1'`/`'0'` per impact level, privacy levels separated by `|`.
    pub fn pattern(&self) -> String {
        (0..self.privacy_levels)
            .map(|phi| {
                (0..self.impact_levels)
                    .map(|l| if self.supports(phi, l) { '1' } else { '0' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// `p(μ_i) = 1 − Π_φ (1 − p_{φ,i})^{n_φ}`
pub fn receive_probability(level: usize, profile: &StrategyProfile) -> f64 {
    1.0 - miss_probability(level, profile, None)
}

/// `Π_φ (1 − p_{φ,i})^{n_φ}`, optionally leaving out one privacy level.
fn miss_probability(level: usize, profile: &StrategyProfile, skip: Option<usize>) -> f64 {
    profile
        .strategies
        .iter()
        .zip(&profile.counts)
        .enumerate()
        .filter(|(phi, _)| Some(*phi) != skip)
        .map(|(_, (s, &n))| (1.0 - s.probabilities[level]).powi(n as i32))
        .product()
}

/// Expected utility of a vehicle at privacy level `phi_e`.
pub fn expected_utility(game: &Game, profile: &StrategyProfile, phi_e: usize) -> f64 {
    (0..game.impact_levels())
        .map(|i| {
            let rho = game.rho().get(phi_e, i);
            let per_bit = obfuscated_impact(game.expected_impact(i), rho);
            let load = obfuscated_load(game.base_load(i), rho);
            per_bit * load * receive_probability(i, profile)
        })
        .sum()
}

/// `Λ_l`, the factor linking `1 − p_{φe,l}` to `1 − p_{φe,1}` when every
/// privacy level in `Φ⁺(l)` is solved jointly:
///
/// ```text
/// Λ_l = [ (μ̄_1/μ̄_l) (ρ_{φe,l}/ρ_{φe,1}) Π_{φ∈Φ⁻(l)} (1 − p_{φ,1})^{n_φ} ]^(1/n⁺(l))
/// n⁺(l) = Σ_{φ∈Φ⁺(l)} n_φ − 1
/// ```
///
/// `Λ` of the first level is 1.
pub fn lambda_term(
    game: &Game,
    level: usize,
    partition: &SupportPartition,
    profile: &StrategyProfile,
    phi_e: usize,
) -> Result<f64, SolverError> {
    if level >= game.impact_levels() {
        return Err(SolverError::LevelOutOfRange { level });
    }
    if level == 0 {
        return Ok(1.0);
    }
    let n_plus: i64 =
        partition.positive(level).iter().map(|&phi| profile.counts[phi] as i64).sum::<i64>() - 1;
    if n_plus <= 0 {
        return Err(SolverError::DegenerateSupport { level });
    }
    let others: f64 = partition
        .negative(level)
        .iter()
        .map(|&phi| (1.0 - profile.p(phi, 0)).powi(profile.counts[phi] as i32))
        .product();
    let base = (game.expected_impact(0) / game.expected_impact(level))
        * (game.rho().get(phi_e, level) / game.rho().get(phi_e, 0))
        * others;
    Ok(base.powf(1.0 / n_plus as f64))
}

/// Recalculates the strategy of privacy level `phi` with every other level held
/// fixed, allowing non-zero probabilities only where `support` is set.
///
/// With `n_φ > 1` the stationarity condition of the expected utility under the
/// budget gives `1 − p_l = Λ_l (1 − p_k)` for a pivot level `k`, with
/// `Λ_l = [(μ̄_k/μ̄_l)(ρ_l/ρ_k)(Q_k/Q_l)]^(1/(n_φ−1))` and `Q_i` the miss
/// probability of the other privacy levels. Substituting the budget as an
/// equality yields
///
/// ```text
/// p_l = 1 + Λ_l (A − Σ_S a_{φ,i}) / Σ_S a_{φ,i} Λ_i
/// ```
///
/// over the supported set `S`. Levels that come out negative leave `S` and the
/// system is solved again. With `n_φ = 1` the utility is linear in the own
/// probabilities and the optimum is a fractional knapsack fill.
pub fn best_response(
    game: &Game,
    profile: &StrategyProfile,
    phi: usize,
    support: &[bool],
) -> Vec<f64> {
    let levels = game.impact_levels();
    let loads = game.loads(phi);
    let n = profile.counts[phi];
    let mut p = vec![0.0; levels];
    if n == 0 {
        return p;
    }
    let q: Vec<f64> = (0..levels).map(|i| miss_probability(i, profile, Some(phi))).collect();

    // levels that cost nothing are always taken
    let mut budget = game.bandwidth();
    let mut active: Vec<usize> = Vec::new();
    for i in 0..levels {
        if !support[i] || q[i] <= 0.0 || game.weight(i) <= 0.0 {
            continue;
        }
        if loads[i] <= 0.0 {
            p[i] = 1.0;
        } else {
            active.push(i);
        }
    }
    let demand: f64 = active.iter().map(|&i| loads[i]).sum();
    if demand <= budget {
        for &i in &active {
            p[i] = 1.0;
        }
        return p;
    }
    if budget <= 0.0 {
        return p;
    }

    if n == 1 {
        // marginal impact per bit of each level
        let value = |i: usize| game.impact_per_bit(phi, i) * q[i];
        active.sort_by(|&a, &b| value(b).total_cmp(&value(a)).then(a.cmp(&b)));
        for &i in &active {
            let take = (budget / loads[i]).min(1.0);
            p[i] = take;
            budget -= take * loads[i];
            if budget <= 0.0 {
                break;
            }
        }
        return p;
    }

    let exponent = 1.0 / (n as f64 - 1.0);
    loop {
        let pivot = active[0];
        let lambda = |i: usize| -> f64 {
            let ratio = (game.expected_impact(pivot) * q[pivot] * game.rho().get(phi, i))
                / (game.expected_impact(i) * q[i] * game.rho().get(phi, pivot));
            ratio.powf(exponent)
        };
        let lambdas: Vec<f64> = active.iter().map(|&i| lambda(i)).collect();
        let demand: f64 = active.iter().map(|&i| loads[i]).sum();
        let scaled: f64 = active.iter().zip(&lambdas).map(|(&i, l)| loads[i] * l).sum();
        // 1 − p_pivot
        let slack = (demand - budget) / scaled;
        let candidate: Vec<f64> = lambdas.iter().map(|l| 1.0 - l * slack).collect();
        if candidate.iter().all(|&c| c >= 0.0) {
            for (&i, c) in active.iter().zip(candidate) {
                p[i] = c.min(1.0);
            }
            break;
        }
        active = active
            .iter()
            .zip(&candidate)
            .filter(|(_, &c)| c >= 0.0)
            .map(|(&i, _)| i)
            .collect();
        if active.is_empty() {
            break;
        }
        let demand: f64 = active.iter().map(|&i| loads[i]).sum();
        if demand <= budget {
            for &i in &active {
                p[i] = 1.0;
            }
            break;
        }
    }
    enforce_budget(&mut p, loads, game.bandwidth());
    p
}

/// Scales a strategy down if rounding pushed it over the budget.
fn enforce_budget(p: &mut [f64], loads: &[f64], bandwidth: f64) {
    let used: f64 = p.iter().zip(loads).map(|(p, a)| p * a).sum();
    if used > bandwidth && used > 0.0 {
        let factor = bandwidth / used;
        for v in p.iter_mut() {
            *v = (*v * factor).clamp(0.0, 1.0);
        }
    }
}

/// Knobs of the iterative solver and the partition enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub epsilon: f64,
    /// Sweeps over all privacy levels per partition; `None` uses
    /// [`DEFAULT_SWEEPS_PER_LEVEL`] times the number of privacy levels.
    pub max_sweeps: Option<usize>,
    pub trust_weight: f64,
    pub guard_bits: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            max_sweeps: None,
            trust_weight: 1.0,
            guard_bits: DEFAULT_GUARD_BITS,
        }
    }
}

impl SolverOptions {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            epsilon: config.convergence_epsilon,
            trust_weight: config.trust_weight,
            ..Self::default()
        }
    }

    fn sweep_cap(&self, privacy_levels: usize) -> usize {
        self.max_sweeps.unwrap_or(DEFAULT_SWEEPS_PER_LEVEL * privacy_levels.max(1))
    }
}

/// Outcome of the round-robin recalculation for one partition.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedSupportSolution {
    pub profile: StrategyProfile,
    pub converged: bool,
    pub sweeps: usize,
    /// Total absolute change of the last sweep.
    pub last_change: f64,
}

/// Round-robin recalculation of every privacy level's strategy for a fixed
/// zero/non-zero pattern, starting from all-zero strategies and stopping once a
/// full sweep changes the probabilities by at most `epsilon` in total.
pub fn solve_fixed_support(
    game: &Game,
    partition: &SupportPartition,
    options: &SolverOptions,
) -> FixedSupportSolution {
    let mut profile = StrategyProfile::zeros(game);
    let active = game.active_levels();
    let cap = options.sweep_cap(game.privacy_levels());
    let supports: Vec<Vec<bool>> =
        (0..game.privacy_levels()).map(|phi| partition.support_of(phi)).collect();
    let mut last_change = f64::INFINITY;
    for sweep in 1..=cap {
        let mut change = 0.0;
        for &phi in &active {
            let next = best_response(game, &profile, phi, &supports[phi]);
            let current = &mut profile.strategies[phi].probabilities;
            change += current.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
            *current = next;
        }
        last_change = change;
        if change <= options.epsilon {
            return FixedSupportSolution { profile, converged: true, sweeps: sweep, last_change };
        }
    }
    FixedSupportSolution { profile, converged: false, sweeps: cap, last_change }
}

/// `β · ū(profile) + (1 − β) · ū(own strategy alone)`
pub fn robust_score(game: &Game, profile: &StrategyProfile, phi_e: usize, beta: f64) -> f64 {
    let together = expected_utility(game, profile, phi_e);
    if beta >= 1.0 {
        return together;
    }
    let mut alone_counts = vec![0; profile.counts.len()];
    alone_counts[phi_e] = 1;
    let alone = expected_utility(game, &profile.with_counts(&alone_counts), phi_e);
    beta * together + (1.0 - beta) * alone
}

/// Count-weighted mean of [`robust_score`] over the privacy levels present.
///
/// Every vehicle ranks partitions with this shared score so that neighbours of
/// different privacy levels settle on the same partition.
pub fn neighbourhood_score(game: &Game, profile: &StrategyProfile, beta: f64) -> f64 {
    let total: u32 = game.counts().iter().sum();
    if total == 0 {
        return 0.0;
    }
    game.active_levels()
        .iter()
        .map(|&phi| game.counts()[phi] as f64 * robust_score(game, profile, phi, beta))
        .sum::<f64>()
        / total as f64
}

/// Result summary of [`solve_optimal`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverReport {
    pub partition: SupportPartition,
    pub converged: bool,
    pub sweeps: usize,
    pub partitions_evaluated: usize,
    pub partitions_converged: usize,
    pub utility_per_level: Vec<f64>,
    pub robust_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub profile: StrategyProfile,
    pub report: SolverReport,
}

/// Enumerates every zero/non-zero pattern of the privacy levels present,
/// solves each with [`solve_fixed_support`] and keeps the converged, feasible
/// profile with the highest [`neighbourhood_score`].
///
/// Ties go to the partition with fewer supported pairs, then the smaller mask.
pub fn solve_optimal(game: &Game, options: &SolverOptions) -> Result<Solution, SolverError> {
    let active = game.active_levels();
    let levels = game.impact_levels();
    let bits = active.len() * levels;
    if bits > options.guard_bits || bits > 63 {
        return Err(SolverError::EnumerationGuard { bits, limit: options.guard_bits });
    }

    let mut evaluated = 0usize;
    let mut converged_count = 0usize;
    let mut best: Option<(f64, FixedSupportSolution, SupportPartition)> = None;
    for local in 0..(1u64 << bits) {
        let mut mask = 0u64;
        for (slot, &phi) in active.iter().enumerate() {
            let chunk = (local >> (slot * levels)) & ((1u64 << levels) - 1);
            mask |= chunk << (phi * levels);
        }
        let partition = SupportPartition::new(mask, game.privacy_levels(), levels);
        evaluated += 1;
        let solution = solve_fixed_support(game, &partition, options);
        if !solution.converged || !solution.profile.is_feasible(game) {
            continue;
        }
        converged_count += 1;
        let score = neighbourhood_score(game, &solution.profile, options.trust_weight);
        let replace = match &best {
            None => true,
            Some((best_score, _, best_partition)) => {
                let tol = SCORE_TIE_TOLERANCE * best_score.abs().max(1.0);
                score > best_score + tol
                    || ((score - best_score).abs() <= tol
                        && partition.supported_pairs() < best_partition.supported_pairs())
            }
        };
        if replace {
            best = Some((score, solution, partition));
        }
    }

    let (score, chosen, partition) = best.ok_or(SolverError::NoConvergedPartition)?;

    let utility_per_level =
        (0..game.privacy_levels()).map(|phi| expected_utility(game, &chosen.profile, phi)).collect();
    Ok(Solution {
        report: SolverReport {
            partition,
            converged: true,
            sweeps: chosen.sweeps,
            partitions_evaluated: evaluated,
            partitions_converged: converged_count,
            utility_per_level,
            robust_score: score,
        },
        profile: chosen.profile,
    })
}

/// Second derivative of the expected utility along the budget line: all
/// `n_φe` vehicles move `p_{φe,level}` by `t` while `p_{φe,0}` absorbs the
/// bandwidth change, `Δp_{φe,0} = −t · a_{φe,level}/a_{φe,0}`. Central finite
/// difference with step `h`. Only the two moved levels enter the difference,
/// and `(y+h)^n − 2y^n + (y−h)^n` is summed from its binomial expansion.
pub fn constrained_second_derivative(
    game: &Game,
    profile: &StrategyProfile,
    phi_e: usize,
    level: usize,
    h: f64,
) -> f64 {
    let loads = game.loads(phi_e);
    let slope = if loads[0] > 0.0 { loads[level] / loads[0] } else { 0.0 };
    let n = profile.counts[phi_e];
    let term = |i: usize, step: f64| {
        let y = 1.0 - profile.p(phi_e, i);
        let others = miss_probability(i, profile, Some(phi_e));
        -game.weight(i) * others * central_difference_of_power(y, n, step)
    };
    (term(level, h) + term(0, h * slope)) / (h * h)
}

/// `(y+h)^n − 2y^n + (y−h)^n = 2 Σ_{k even, k ≥ 2} C(n,k) y^{n−k} h^k`
fn central_difference_of_power(y: f64, n: u32, h: f64) -> f64 {
    let mut sum = 0.0;
    let mut binom = 1.0;
    for k in 1..=n {
        binom *= (n - k + 1) as f64 / k as f64;
        if k.is_multiple_of(2) {
            sum += binom * y.powi((n - k) as i32) * h.powi(k as i32);
        }
    }
    2.0 * sum
}

/// Whether the expected utility is concave at `profile` along the budget line
/// of `level`. Requires `0 < level` and interior probabilities.
pub fn check_concavity(game: &Game, profile: &StrategyProfile, phi_e: usize, level: usize) -> bool {
    if level == 0 || level >= game.impact_levels() {
        return false;
    }
    let loads = game.loads(phi_e);
    let slope = if loads[0] > 0.0 { loads[level] / loads[0] } else { 0.0 };
    let p_l = profile.p(phi_e, level);
    let p_0 = profile.p(phi_e, 0);
    let mut h = 1e-3_f64.min(p_l.min(1.0 - p_l) / 2.0);
    if slope > 0.0 {
        h = h.min(p_0.min(1.0 - p_0) / (2.0 * slope));
    }
    if !(h > 0.0) {
        return false;
    }
    constrained_second_derivative(game, profile, phi_e, level, h) <= CONCAVITY_TOLERANCE
}

/// Utility of one vehicle of level `phi_e` that plays `deviation` while every
/// other vehicle, including the rest of its own level, keeps `profile`.
pub fn deviation_utility(
    game: &Game,
    profile: &StrategyProfile,
    phi_e: usize,
    deviation: &[f64],
) -> f64 {
    let n_e = profile.counts[phi_e].max(1);
    (0..game.impact_levels())
        .map(|i| {
            let others = miss_probability(i, profile, Some(phi_e));
            let own = (1.0 - profile.p(phi_e, i)).powi(n_e as i32 - 1);
            game.weight(i) * (1.0 - others * own * (1.0 - deviation[i]))
        })
        .sum()
}

/// Random strategy within the budget, biased toward using all of it.
pub fn random_feasible_strategy<R: Rng + ?Sized>(
    loads: &[f64],
    bandwidth: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = loads.len();
    let mut q = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    match rng.random_range(0..3) {
        0 => {
            // random split of the budget, overflow refilled in random order
            let shares: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let total: f64 = shares.iter().sum();
            let mut left = bandwidth;
            for i in 0..n {
                q[i] = if loads[i] > 0.0 {
                    (bandwidth * shares[i] / total / loads[i]).min(1.0)
                } else {
                    1.0
                };
                left -= q[i] * loads[i];
            }
            for &i in &order {
                if left <= 0.0 {
                    break;
                }
                if loads[i] > 0.0 && q[i] < 1.0 {
                    let extra = (left / loads[i]).min(1.0 - q[i]);
                    q[i] += extra;
                    left -= extra * loads[i];
                }
            }
        }
        1 => {
            // vertex: greedy fill in random order
            let mut left = bandwidth;
            for &i in &order {
                let take = if loads[i] > 0.0 { (left / loads[i]).min(1.0) } else { 1.0 };
                q[i] = take;
                left -= take * loads[i];
                if left <= 0.0 {
                    break;
                }
            }
        }
        _ => {
            // uniform box sample, scaled into the budget
            for v in q.iter_mut() {
                *v = rng.random::<f64>();
            }
        }
    }
    enforce_budget(&mut q, loads, bandwidth);
    q
}

/// Largest utility gain over `trials` random feasible unilateral deviations.
pub fn check_nash_deviation<R: Rng + ?Sized>(
    game: &Game,
    profile: &StrategyProfile,
    phi_e: usize,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let own = deviation_utility(game, profile, phi_e, &profile.strategies[phi_e].probabilities);
    let loads = game.loads(phi_e);
    (0..trials)
        .map(|_| {
            let q = random_feasible_strategy(loads, game.bandwidth(), rng);
            debug_assert!(
                q.iter().zip(loads).map(|(q, a)| q * a).sum::<f64>()
                    <= game.bandwidth() + FEASIBILITY_TOLERANCE
            );
            deviation_utility(game, profile, phi_e, &q) - own
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
