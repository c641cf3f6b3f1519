//! Location imprecision and its effect on server-side geocast filtering.
//!
//! A vehicle at privacy level `φ` reports a disk of radius `r_φ` that contains
//! its true position. To never miss a message of dissemination radius `r_i`, the
//! server has to push everything within `r_φ + r_i` of the disk centre, which
//! inflates the load by the adaptation factor `ρ = (r_φ / r_i + 1)²` and deflates
//! the impact per delivered bit by the same factor.

use rand::Rng;

use crate::error::ObfuscationError;
use crate::geometry::{uniform_in_disk, Point};
use crate::model::{ImpactLevelTable, Message, PrivacyProfile};

/// The disk a vehicle reports instead of its position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportedRegion {
    pub center: Point,
    pub radius_km: f64,
}

impl ReportedRegion {
    pub fn exact(position: Point) -> Self {
        Self { center: position, radius_km: 0.0 }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.distance(p) <= self.radius_km
    }
}

pub fn adaptation_factor(r_phi: f64, r_i: f64) -> Result<f64, ObfuscationError> {
    if !(r_i > 0.0) {
        return Err(ObfuscationError::InvalidLevelRadius(r_i));
    }
    if !(r_phi >= 0.0) {
        return Err(ObfuscationError::InvalidImprecision(r_phi));
    }
    let ratio = r_phi / r_i + 1.0;
    Ok(ratio * ratio)
}

/// `a_{φ,i} = a_i · ρ_{φ,i}`
pub fn obfuscated_load(load: f64, rho: f64) -> f64 {
    load * rho
}

/// `μ̄_{φ,i} = μ̄_i / ρ_{φ,i}`
pub fn obfuscated_impact(expected_impact: f64, rho: f64) -> f64 {
    expected_impact / rho
}

/// Draws the region a vehicle at `true_pos` reports: the centre is offset by a
/// uniform point of the disk, so the true position is uniform within the region.
pub fn sample_reported_region<R: Rng + ?Sized>(
    true_pos: Point,
    r_phi: f64,
    rng: &mut R,
) -> ReportedRegion {
    ReportedRegion { center: uniform_in_disk(true_pos, r_phi, rng), radius_km: r_phi }
}

/// Whether the server forwards `msg` to a vehicle that reported `region`.
pub fn server_relevant(msg: &Message, region: &ReportedRegion, r_i: f64) -> bool {
    msg.origin.distance(&region.center) <= region.radius_km + r_i
}

/// Whether `msg` actually concerns a vehicle at `true_pos`.
pub fn vehicle_relevant(msg: &Message, true_pos: &Point, r_i: f64) -> bool {
    msg.origin.distance(true_pos) <= r_i
}

/// `ρ_{φ,i}` for every privacy profile (rows) and impact level (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct RhoTable {
    rows: Vec<Vec<f64>>,
}

impl RhoTable {
    pub fn new(
        profiles: &[PrivacyProfile],
        table: &ImpactLevelTable,
    ) -> Result<Self, ObfuscationError> {
        let radii: Vec<f64> = profiles.iter().map(|p| p.imprecision_radius_km).collect();
        Self::from_radii(&radii, table)
    }

    pub fn from_radii(radii: &[f64], table: &ImpactLevelTable) -> Result<Self, ObfuscationError> {
        let rows = radii
            .iter()
            .map(|&r_phi| {
                table
                    .levels()
                    .iter()
                    .map(|l| adaptation_factor(r_phi, l.radius_km))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }

    /// Builds a table directly from factors; every entry must be at least 1.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(rows.iter().flatten().all(|&r| r >= 1.0), "adaptation factors are >= 1");
        Self { rows }
    }

    /// A table of ones: `privacy_levels` rows of exact-location vehicles.
    pub fn exact(privacy_levels: usize, impact_levels: usize) -> Self {
        Self { rows: vec![vec![1.0; impact_levels]; privacy_levels] }
    }

    pub fn row(&self, phi: usize) -> &[f64] {
        &self.rows[phi]
    }

    pub fn get(&self, phi: usize, level: usize) -> f64 {
        self.rows[phi][level]
    }

    pub fn privacy_levels(&self) -> usize {
        self.rows.len()
    }
}
