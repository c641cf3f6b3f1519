//! Shared domain types: messages, impact levels, privacy profiles, strategies
//! and the scenario configuration.
//!
//! Level indices are zero-based throughout the crate; level `0` is the level
//! with the lowest expected impact per bit.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::error::ModelError;
use crate::geometry::Point;

/// Relative tolerance used when matching a message radius to a level radius.
pub const RADIUS_MATCH_TOLERANCE: f64 = 1e-6;

/// Absolute slack allowed when checking a strategy against the bandwidth budget.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Impact per bit of each default level.
pub const DEFAULT_IMPACTS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
/// Share of the relevant load contributed by each default level.
pub const DEFAULT_FREQUENCIES: [f64; 4] = [0.9, 0.09, 0.009, 0.001];
/// Dissemination radius of each default level.
pub const DEFAULT_RADII_KM: [f64; 4] = [10.0, 1.0, 100.0, 100.0];
/// Messages per slot relevant to a vehicle that reports its exact location.
pub const DEFAULT_RELEVANT_RATE: f64 = 100.0;
/// Default usable bandwidth as a fraction of the load required to receive everything.
pub const DEFAULT_BANDWIDTH_FRACTION: f64 = 0.10;

/// A floating-car-data message.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: u64,
    pub origin: Point,
    /// Impact per bit, `μ(m)`.
    pub impact: f64,
    /// Size in bits, `a(m)`.
    pub size: f64,
    /// Dissemination radius in km, `r(m)`.
    pub radius_km: f64,
    pub created_at: u64,
}

impl Message {
    pub fn new(
        id: u64,
        origin: Point,
        impact: f64,
        size: f64,
        radius_km: f64,
        created_at: u64,
    ) -> Result<Self, ModelError> {
        if !(impact > 0.0) {
            return Err(ModelError::InvalidMessage(format!("impact must be > 0, got {impact}")));
        }
        if !(size > 0.0) {
            return Err(ModelError::InvalidMessage(format!("size must be > 0, got {size}")));
        }
        if !(radius_km > 0.0) {
            return Err(ModelError::InvalidMessage(format!(
                "radius must be > 0, got {radius_km}"
            )));
        }
        Ok(Self { id, origin, impact, size, radius_km, created_at })
    }

    /// Total impact carried by the message, `μ(m)·a(m)`.
    pub fn weight(&self) -> f64 {
        self.impact * self.size
    }
}

fn infinite() -> f64 {
    f64::INFINITY
}

/// One impact level: messages with radius `radius_km` and impact per bit in
/// `[impact_lower, impact_upper)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactLevel {
    pub radius_km: f64,
    pub impact_lower: f64,
    #[serde(default = "infinite")]
    pub impact_upper: f64,
    #[serde(rename = "expected_impact_per_bit")]
    pub expected_impact: f64,
    /// Expected bits per slot for a vehicle reporting its exact location.
    #[serde(rename = "load_bits_per_slot")]
    pub load: f64,
}

impl ImpactLevel {
    fn validate(&self, index: usize) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidLevel { index, reason: reason.to_string() };
        if !(self.radius_km > 0.0) || !self.radius_km.is_finite() {
            return Err(bad("radius must be positive and finite"));
        }
        if !(self.impact_lower < self.impact_upper) {
            return Err(bad("impact_lower must be below impact_upper"));
        }
        if !(self.expected_impact >= self.impact_lower && self.expected_impact < self.impact_upper)
        {
            return Err(bad("expected impact must lie in [impact_lower, impact_upper)"));
        }
        if !(self.load >= 0.0) || !self.load.is_finite() {
            return Err(bad("load must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn contains_impact(&self, impact: f64) -> bool {
        impact >= self.impact_lower && impact < self.impact_upper
    }

    pub fn matches_radius(&self, radius_km: f64) -> bool {
        let scale = self.radius_km.abs().max(radius_km.abs());
        (self.radius_km - radius_km).abs() <= RADIUS_MATCH_TOLERANCE * scale
    }

    /// `μ̄_i · a_i`, the impact a vehicle gains per slot from receiving the whole level.
    pub fn weight(&self) -> f64 {
        self.expected_impact * self.load
    }
}

/// Ordered list of impact levels.
///
/// Levels are kept sorted by expected impact per bit, ties broken by radius.
/// The last level has an unbounded impact interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ImpactLevel>", into = "Vec<ImpactLevel>")]
pub struct ImpactLevelTable {
    levels: Vec<ImpactLevel>,
}

impl ImpactLevelTable {
    pub fn new(mut levels: Vec<ImpactLevel>) -> Result<Self, ModelError> {
        if levels.is_empty() {
            return Err(ModelError::EmptyTable);
        }
        for (i, level) in levels.iter().enumerate() {
            level.validate(i)?;
        }
        levels.sort_by(|a, b| {
            a.expected_impact
                .total_cmp(&b.expected_impact)
                .then(a.radius_km.total_cmp(&b.radius_km))
        });
        let last = levels.len() - 1;
        if levels[last].impact_upper != f64::INFINITY {
            return Err(ModelError::InvalidLevel {
                index: last,
                reason: "the highest level must have an unbounded impact interval".into(),
            });
        }
        for i in 0..levels.len() {
            for j in (i + 1)..levels.len() {
                let (a, b) = (&levels[i], &levels[j]);
                let overlap = a.impact_lower < b.impact_upper && b.impact_lower < a.impact_upper;
                if a.matches_radius(b.radius_km) && overlap {
                    return Err(ModelError::InvalidLevel {
                        index: j,
                        reason: format!("impact interval overlaps level {i} with the same radius"),
                    });
                }
            }
        }
        Ok(Self { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[ImpactLevel] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> &ImpactLevel {
        &self.levels[index]
    }

    /// `Σ a_i`, the bandwidth needed to receive every relevant message with an exact location.
    pub fn required_bandwidth(&self) -> f64 {
        self.levels.iter().map(|l| l.load).sum()
    }

    /// `Σ μ̄_i a_i`, the expected impact per slot of receiving everything.
    pub fn total_weight(&self) -> f64 {
        self.levels.iter().map(ImpactLevel::weight).sum()
    }

    pub fn max_radius_km(&self) -> f64 {
        self.levels.iter().map(|l| l.radius_km).fold(0.0, f64::max)
    }

    /// Returns a copy with every load scaled by `factor`.
    pub fn with_scaled_loads(&self, factor: f64) -> Self {
        let levels = self
            .levels
            .iter()
            .map(|l| ImpactLevel { load: l.load * factor, ..l.clone() })
            .collect();
        Self { levels }
    }
}

impl TryFrom<Vec<ImpactLevel>> for ImpactLevelTable {
    type Error = ModelError;

    fn try_from(levels: Vec<ImpactLevel>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<ImpactLevelTable> for Vec<ImpactLevel> {
    fn from(table: ImpactLevelTable) -> Self {
        table.levels
    }
}

/// Returns the level a message belongs to, if any.
pub fn classify_message(message: &Message, table: &ImpactLevelTable) -> Option<usize> {
    table
        .levels()
        .iter()
        .position(|l| l.matches_radius(message.radius_km) && l.contains_impact(message.impact))
}

/// A privacy level and how many vehicles of it are around.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyProfile {
    /// One-based privacy level identifier; `1` means exact location.
    pub phi: u32,
    pub imprecision_radius_km: f64,
    /// Vehicles of this level in the tagged vehicle's neighbourhood, itself included.
    #[serde(default)]
    pub count: u32,
    /// Fraction of the simulated fleet at this level.
    #[serde(default)]
    pub fleet_share: f64,
}

impl PrivacyProfile {
    pub fn new(phi: u32, imprecision_radius_km: f64, count: u32) -> Result<Self, ModelError> {
        let profile = Self { phi, imprecision_radius_km, count, fleet_share: 0.0 };
        profile.validate()?;
        Ok(profile)
    }

    pub fn with_fleet_share(mut self, share: f64) -> Self {
        self.fleet_share = share;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidProfile { phi: self.phi, reason: reason.into() };
        if self.phi == 0 {
            return Err(bad("privacy levels are numbered from 1"));
        }
        if !(self.imprecision_radius_km >= 0.0) || !self.imprecision_radius_km.is_finite() {
            return Err(bad("imprecision radius must be non-negative and finite"));
        }
        if self.phi == 1 && self.imprecision_radius_km != 0.0 {
            return Err(bad("privacy level 1 reports its exact location (radius 0)"));
        }
        if !(0.0..=1.0).contains(&self.fleet_share) {
            return Err(bad("fleet share must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Subscription probabilities of one privacy level, one entry per impact level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub probabilities: Vec<f64>,
}

impl Strategy {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(i) = probabilities.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModelError::InvalidStrategy(format!(
                "probability {} of level {i} outside [0, 1]",
                probabilities[i]
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn zeros(levels: usize) -> Self {
        Self { probabilities: vec![0.0; levels] }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Expected bits per slot, `Σ_i a_{φ,i} p_{φ,i}`.
    pub fn bandwidth(&self, loads: &[f64]) -> f64 {
        self.probabilities.iter().zip(loads).map(|(p, a)| p * a).sum()
    }

    pub fn is_feasible(&self, loads: &[f64], bandwidth: f64) -> bool {
        self.bandwidth(loads) <= bandwidth + FEASIBILITY_TOLERANCE
    }
}

/// Mobility, clustering and metric parameters of the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub vehicle_count: usize,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub message_size_bits: f64,
    pub cluster_timeout_slots: u64,
    pub metrics_window_slots: u64,
    /// Whether non-cooperating vehicles still hear local broadcasts of others.
    pub nc_receives_shares: bool,
    /// Re-draw the reported region every slot instead of only when leaving it.
    pub resample_region_every_slot: bool,
    /// Added to every observed count of the other privacy levels before solving.
    pub neighbor_count_bias: i32,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            vehicle_count: 60,
            speed_min_mps: 5.0,
            speed_max_mps: 15.0,
            message_size_bits: 1.0,
            cluster_timeout_slots: 5,
            metrics_window_slots: 60,
            nc_receives_shares: false,
            resample_region_every_slot: false,
            neighbor_count_bias: 0,
        }
    }
}

/// Everything needed to solve the game, run the analyses, or simulate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(rename = "bandwidth_bits_per_slot")]
    pub bandwidth_per_slot: f64,
    pub impact_levels: ImpactLevelTable,
    pub privacy_profiles: Vec<PrivacyProfile>,
    #[serde(default = "default_trust_weight")]
    pub trust_weight: f64,
    #[serde(default = "default_epsilon")]
    pub convergence_epsilon: f64,
    #[serde(default = "default_generation_region")]
    pub generation_region_km: f64,
    #[serde(default = "default_sim_region")]
    pub sim_region_km: f64,
    #[serde(default = "default_v2v_range")]
    pub v2v_range_km: f64,
    #[serde(default = "default_slot_seconds")]
    pub slot_seconds: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sim: SimParams,
}

fn default_trust_weight() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    1e-9
}
fn default_generation_region() -> f64 {
    220.0
}
fn default_sim_region() -> f64 {
    2.0
}
fn default_v2v_range() -> f64 {
    0.3
}
fn default_slot_seconds() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &'static str, reason: &str| ModelError::InvalidConfig {
            field,
            reason: reason.to_string(),
        };
        if !(self.bandwidth_per_slot > 0.0) || !self.bandwidth_per_slot.is_finite() {
            return Err(bad("bandwidth_bits_per_slot", "must be positive"));
        }
        if !(self.convergence_epsilon > 0.0) {
            return Err(bad("convergence_epsilon", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.trust_weight) {
            return Err(bad("trust_weight", "must lie in [0, 1]"));
        }
        if self.privacy_profiles.is_empty() {
            return Err(bad("privacy_profiles", "at least one privacy level is required"));
        }
        for p in &self.privacy_profiles {
            p.validate()?;
        }
        for (i, a) in self.privacy_profiles.iter().enumerate() {
            if self.privacy_profiles[..i].iter().any(|b| b.phi == a.phi) {
                return Err(bad("privacy_profiles", "privacy level identifiers must be unique"));
            }
        }
        for (field, value) in [
            ("generation_region_km", self.generation_region_km),
            ("sim_region_km", self.sim_region_km),
            ("v2v_range_km", self.v2v_range_km),
            ("slot_seconds", self.slot_seconds),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(bad(field, "must be positive and finite"));
            }
        }
        if self.sim_region_km > self.generation_region_km {
            return Err(bad("sim_region_km", "must not exceed generation_region_km"));
        }
        let sim = &self.sim;
        if !(sim.speed_min_mps >= 0.0 && sim.speed_min_mps <= sim.speed_max_mps) {
            return Err(bad("sim.speed_min_mps", "need 0 <= speed_min_mps <= speed_max_mps"));
        }
        if !(sim.message_size_bits > 0.0) {
            return Err(bad("sim.message_size_bits", "must be positive"));
        }
        if sim.metrics_window_slots == 0 {
            return Err(bad("sim.metrics_window_slots", "must be at least 1"));
        }
        Ok(())
    }

    /// Checks that a set of strategies lines up with this scenario.
    pub fn validate_strategies(&self, strategies: &[Strategy]) -> Result<(), ModelError> {
        if strategies.len() != self.privacy_profiles.len() {
            return Err(ModelError::ShapeMismatch {
                expected: self.privacy_profiles.len(),
                found: strategies.len(),
            });
        }
        for s in strategies {
            if s.len() != self.impact_levels.len() {
                return Err(ModelError::ShapeMismatch {
                    expected: self.impact_levels.len(),
                    found: s.len(),
                });
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<u32> {
        self.privacy_profiles.iter().map(|p| p.count).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let config: Self = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// The default numerical-analysis scenario: four levels, exact-location
/// vehicles only, bandwidth at ten percent of the required load.
pub fn default_scenario() -> ScenarioConfig {
    let levels = (0..DEFAULT_IMPACTS.len())
        .map(|i| ImpactLevel {
            radius_km: DEFAULT_RADII_KM[i],
            impact_lower: DEFAULT_IMPACTS[i],
            impact_upper: DEFAULT_IMPACTS.get(i + 1).copied().unwrap_or(f64::INFINITY),
            expected_impact: DEFAULT_IMPACTS[i],
            load: DEFAULT_FREQUENCIES[i] * DEFAULT_RELEVANT_RATE,
        })
        .collect();
    let table = ImpactLevelTable::new(levels).expect("default levels are valid");
    let bandwidth = DEFAULT_BANDWIDTH_FRACTION * table.required_bandwidth();
    ScenarioConfig {
        bandwidth_per_slot: bandwidth,
        impact_levels: table,
        privacy_profiles: vec![PrivacyProfile {
            phi: 1,
            imprecision_radius_km: 0.0,
            count: 1,
            fleet_share: 1.0,
        }],
        trust_weight: default_trust_weight(),
        convergence_epsilon: default_epsilon(),
        generation_region_km: default_generation_region(),
        sim_region_km: default_sim_region(),
        v2v_range_km: default_v2v_range(),
        slot_seconds: default_slot_seconds(),
        seed: 0,
        sim: SimParams::default(),
    }
}

impl fmt::Display for ImpactLevelTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.levels.iter().enumerate() {
            writeln!(
                f,
                "level {}: r={} km, impact [{}, {}), mean {} per bit, load {} bits/slot",
                i + 1,
                l.radius_km,
                l.impact_lower,
                l.impact_upper,
                l.expected_impact,
                l.load
            )?;
        }
        Ok(())
    }
}
