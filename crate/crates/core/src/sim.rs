//! Time-slotted simulation of vehicles that fetch geocast messages over a
//! budgeted cellular link and relay them to neighbours.
//!
//! Each slot: vehicles move, refresh their reported regions, (re)form
//! clusters, pick strategies, then the server pushes the slot's messages and
//! holders broadcast them within V2V range. Messages only matter in the slot
//! they are generated in.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::geometry::{Point, Rect, Square};
use crate::model::{Message, ScenarioConfig, Strategy};
use crate::obfuscation::{sample_reported_region, server_relevant, vehicle_relevant, ReportedRegion, RhoTable};
use crate::oracle::single_vehicle_greedy;
use crate::solver::{solve_optimal, Game, SolverOptions};

/// How vehicles coordinate their subscriptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Approach {
    /// Game-theoretic cooperation.
    Gtp,
    /// No cooperation.
    Nc,
    /// Clustering with perfect failure detection.
    Gk,
    /// Clustering with timeout-based failure detection.
    Cl,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Gtp, Approach::Nc, Approach::Gk, Approach::Cl];

    pub fn label(self) -> &'static str {
        match self {
            Self::Gtp => "GTP",
            Self::Nc => "NC",
            Self::Gk => "GK",
            Self::Cl => "CL",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label().eq_ignore_ascii_case(text.trim()))
    }

    fn clustered(self) -> bool {
        matches!(self, Self::Gk | Self::Cl)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Free,
    Head,
    Member { head: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub position: Point,
    waypoint: Point,
    /// km per slot
    speed: f64,
    /// Index into the scenario's privacy profiles.
    pub privacy: usize,
    pub region: ReportedRegion,
    pub strategy: Strategy,
    pub role: Role,
    pub cellular_bits: f64,
    window_bits: f64,
    window_relevant: f64,
    window_received: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub head: usize,
    pub members: Vec<usize>,
    pub formed_at: u64,
    /// Last slot each member was seen within range of the head.
    pub last_heartbeat: HashMap<usize, u64>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len() + 1
    }
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub window: u64,
    pub vehicle: usize,
    pub phi: u32,
    /// `None` when nothing relevant was sent during the window.
    pub relative_utility: Option<f64>,
    pub used_bandwidth: f64,
}

/// What each vehicle got in one slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlotOutcome {
    pub messages: Vec<Message>,
    pub levels: Vec<usize>,
    /// Per message, vehicles the server pushed it to.
    pub holders: Vec<Vec<usize>>,
    /// Per message, vehicles holding it after local sharing.
    pub receivers: Vec<Vec<usize>>,
}

pub struct World {
    pub slot: u64,
    pub vehicles: Vec<Vehicle>,
    pub approach: Approach,
    pub clusters: Vec<Cluster>,
    config: ScenarioConfig,
    rho: RhoTable,
    game: Game,
    sim_square: Square,
    zones: Vec<Option<Rect>>,
    mobility_rng: ChaCha8Rng,
    message_rng: ChaCha8Rng,
    delivery_rng: ChaCha8Rng,
    region_rng: ChaCha8Rng,
    solve_cache: HashMap<Vec<u32>, Option<Vec<Strategy>>>,
    next_message_id: u64,
    neighbours: Vec<Vec<usize>>,
    pub solver_failures: u64,
    pub rows: Vec<MetricRow>,
}

impl World {
    /// Places the vehicles and assigns privacy levels by fleet share. All
    /// random streams derive from `seed` only, so every approach sees the same
    /// mobility and messages for a given seed.
    pub fn new(config: &ScenarioConfig, approach: Approach, seed: u64) -> Self {
        let rho = RhoTable::new(&config.privacy_profiles, &config.impact_levels)
            .expect("validated scenario");
        let counts = vec![0; config.privacy_profiles.len()];
        let game = Game::new(&config.impact_levels, &rho, &counts, config.bandwidth_per_slot)
            .expect("validated scenario");
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        let mut mobility_rng = stream(1);
        let mut region_rng = stream(4);

        let centre = config.generation_region_km / 2.0;
        let sim_square = Square::centered(Point::new(centre, centre), config.sim_region_km);
        let generation = Square::new(Point::new(0.0, 0.0), config.generation_region_km);
        let max_imprecision = config
            .privacy_profiles
            .iter()
            .map(|p| p.imprecision_radius_km)
            .fold(0.0, f64::max);
        let zones = config
            .impact_levels
            .levels()
            .iter()
            .map(|l| {
                let pad = l.radius_km + max_imprecision;
                Square::centered(sim_square.center(), config.sim_region_km + 2.0 * pad)
                    .intersect(&generation)
            })
            .collect();

        let privacy = assign_privacy(config, &mut mobility_rng);
        let speed_range = (config.sim.speed_min_mps, config.sim.speed_max_mps);
        let vehicles = privacy
            .into_iter()
            .enumerate()
            .map(|(id, privacy)| {
                let position = sim_square.sample(&mut mobility_rng);
                let waypoint = sim_square.sample(&mut mobility_rng);
                let speed = draw_speed(speed_range, config.slot_seconds, &mut mobility_rng);
                let r_phi = config.privacy_profiles[privacy].imprecision_radius_km;
                Vehicle {
                    id,
                    position,
                    waypoint,
                    speed,
                    privacy,
                    region: sample_reported_region(position, r_phi, &mut region_rng),
                    strategy: Strategy::zeros(config.impact_levels.len()),
                    role: Role::Free,
                    cellular_bits: 0.0,
                    window_bits: 0.0,
                    window_relevant: 0.0,
                    window_received: 0.0,
                }
            })
            .collect();

        let mut world = Self {
            slot: 0,
            vehicles,
            approach,
            clusters: Vec::new(),
            config: config.clone(),
            rho,
            game,
            sim_square,
            zones,
            mobility_rng,
            message_rng: stream(2),
            delivery_rng: stream(3),
            region_rng,
            solve_cache: HashMap::new(),
            next_message_id: 0,
            neighbours: Vec::new(),
            solver_failures: 0,
            rows: Vec::new(),
        };
        world.refresh_neighbours();
        world
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Vehicles within V2V range of `id`, excluding itself.
    pub fn neighbours(&self, id: usize) -> &[usize] {
        &self.neighbours[id]
    }

    fn refresh_neighbours(&mut self) {
        let range_sq = self.config.v2v_range_km.powi(2);
        let n = self.vehicles.len();
        let mut out = vec![Vec::new(); n];
        for a in 0..n {
            for b in (a + 1)..n {
                if self.vehicles[a].position.distance_sq(&self.vehicles[b].position) <= range_sq {
                    out[a].push(b);
                    out[b].push(a);
                }
            }
        }
        self.neighbours = out;
    }

    fn in_range(&self, a: usize, b: usize) -> bool {
        self.vehicles[a].position.distance_sq(&self.vehicles[b].position)
            <= self.config.v2v_range_km.powi(2)
    }

    /// Random-waypoint movement inside the simulation square.
    pub fn move_vehicles(&mut self) {
        let speed_range = (self.config.sim.speed_min_mps, self.config.sim.speed_max_mps);
        for v in &mut self.vehicles {
            let mut budget = v.speed;
            loop {
                let d = v.position.distance(&v.waypoint);
                if d > budget {
                    let f = budget / d;
                    v.position = v.position.offset(
                        (v.waypoint.x - v.position.x) * f,
                        (v.waypoint.y - v.position.y) * f,
                    );
                    break;
                }
                v.position = v.waypoint;
                budget -= d;
                v.waypoint = self.sim_square.sample(&mut self.mobility_rng);
                v.speed = draw_speed(speed_range, self.config.slot_seconds, &mut self.mobility_rng);
                if budget <= 0.0 {
                    break;
                }
            }
        }
        self.refresh_neighbours();
    }

    /// Re-draws a vehicle's reported region once it drives out of it, or every
    /// slot if so configured.
    pub fn refresh_regions(&mut self) {
        let every_slot = self.config.sim.resample_region_every_slot;
        for v in &mut self.vehicles {
            let r_phi = self.config.privacy_profiles[v.privacy].imprecision_radius_km;
            if every_slot || !v.region.contains(&v.position) {
                v.region = sample_reported_region(v.position, r_phi, &mut self.region_rng);
            }
        }
    }

    /// Draws this slot's messages. Only the part of the generation square from
    /// which a level's messages can concern a vehicle in the simulation square
    /// is populated, at the density that yields the level's load.
    pub fn generate_messages(&mut self) -> (Vec<Message>, Vec<usize>) {
        let size = self.config.sim.message_size_bits;
        let mut messages = Vec::new();
        let mut levels = Vec::new();
        for (i, level) in self.config.impact_levels.levels().iter().enumerate() {
            let Some(zone) = self.zones[i] else { continue };
            let density = level.load / size / (std::f64::consts::PI * level.radius_km.powi(2));
            let mean = density * zone.area();
            if !(mean > 0.0) {
                continue;
            }
            let count = Poisson::new(mean).expect("positive mean").sample(&mut self.message_rng) as u64;
            for _ in 0..count {
                let origin = zone.sample(&mut self.message_rng);
                messages.push(Message {
                    id: self.next_message_id,
                    origin,
                    impact: level.expected_impact,
                    size,
                    radius_km: level.radius_km,
                    created_at: self.slot,
                });
                levels.push(i);
                self.next_message_id += 1;
            }
        }
        (messages, levels)
    }

    /// Recomputes clusters. GK rebuilds them from true positions every slot;
    /// CL keeps them and drops a member only after it has been out of range of
    /// its head for longer than the timeout.
    pub fn maintain_clusters(&mut self) {
        match self.approach {
            Approach::Gk => {
                for v in &mut self.vehicles {
                    v.role = Role::Free;
                }
                self.clusters.clear();
                self.form_clusters();
            }
            Approach::Cl => {
                let timeout = self.config.sim.cluster_timeout_slots;
                let slot = self.slot;
                let mut clusters = std::mem::take(&mut self.clusters);
                for c in &mut clusters {
                    let mut kept = Vec::new();
                    for &m in &c.members {
                        if self.in_range(c.head, m) {
                            c.last_heartbeat.insert(m, slot);
                        }
                        if slot - c.last_heartbeat[&m] > timeout {
                            c.last_heartbeat.remove(&m);
                            self.vehicles[m].role = Role::Free;
                        } else {
                            kept.push(m);
                        }
                    }
                    c.members = kept;
                }
                // of two heads in range, the higher id resigns with its cluster
                let heads: Vec<usize> = clusters.iter().map(|c| c.head).collect();
                for c in &clusters {
                    if heads.iter().any(|&h| h < c.head && self.in_range(h, c.head)) {
                        self.vehicles[c.head].role = Role::Free;
                        for &m in &c.members {
                            self.vehicles[m].role = Role::Free;
                        }
                    }
                }
                clusters.retain(|c| self.vehicles[c.head].role == Role::Head);
                self.clusters = clusters;
                self.form_clusters();
            }
            _ => {}
        }
    }

    /// Free vehicles in id order become heads unless a head is in range, then
    /// every remaining free vehicle joins the nearest head in range.
    fn form_clusters(&mut self) {
        let n = self.vehicles.len();
        for v in 0..n {
            if self.vehicles[v].role != Role::Free {
                continue;
            }
            let covered = self.clusters.iter().any(|c| self.in_range(c.head, v));
            if !covered {
                self.vehicles[v].role = Role::Head;
                self.clusters.push(Cluster {
                    head: v,
                    members: Vec::new(),
                    formed_at: self.slot,
                    last_heartbeat: HashMap::new(),
                });
            }
        }
        for v in 0..n {
            if self.vehicles[v].role != Role::Free {
                continue;
            }
            let position = self.vehicles[v].position;
            let nearest = self
                .clusters
                .iter()
                .enumerate()
                .filter(|(_, c)| self.in_range(c.head, v))
                .min_by(|(_, a), (_, b)| {
                    let da = self.vehicles[a.head].position.distance_sq(&position);
                    let db = self.vehicles[b.head].position.distance_sq(&position);
                    da.total_cmp(&db).then(a.head.cmp(&b.head))
                })
                .map(|(k, _)| k)
                .expect("a head is in range of every free vehicle");
            let c = &mut self.clusters[nearest];
            c.members.push(v);
            c.last_heartbeat.insert(v, self.slot);
            self.vehicles[v].role = Role::Member { head: c.head };
        }
        self.clusters.sort_by_key(|c| c.head);
    }

    /// Counts of each privacy level within range, the vehicle included.
    pub fn observed_counts(&self, id: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.config.privacy_profiles.len()];
        counts[self.vehicles[id].privacy] += 1;
        for &n in &self.neighbours[id] {
            counts[self.vehicles[n].privacy] += 1;
        }
        let bias = self.config.sim.neighbor_count_bias;
        if bias != 0 {
            let own = self.vehicles[id].privacy;
            for (phi, c) in counts.iter_mut().enumerate() {
                if phi != own && *c > 0 {
                    *c = (*c as i64 + bias as i64).max(0) as u32;
                }
            }
        }
        counts
    }

    /// Picks every vehicle's strategy for the slot.
    pub fn update_strategies(&mut self) {
        let table = self.config.impact_levels.clone();
        let bandwidth = self.config.bandwidth_per_slot;
        match self.approach {
            Approach::Gtp => {
                let options = SolverOptions::from_config(&self.config);
                for id in 0..self.vehicles.len() {
                    let counts = self.observed_counts(id);
                    let entry = self.solve_cache.entry(counts.clone()).or_insert_with(|| {
                        solve_optimal(&self.game.with_counts(&counts), &options)
                            .ok()
                            .map(|s| s.profile.strategies)
                    });
                    match entry {
                        Some(strategies) => {
                            let phi = self.vehicles[id].privacy;
                            self.vehicles[id].strategy = strategies[phi].clone();
                        }
                        None => self.solver_failures += 1,
                    }
                }
            }
            Approach::Nc => {
                for v in &mut self.vehicles {
                    v.strategy = single_vehicle_greedy(&table, self.rho.row(v.privacy), bandwidth);
                }
            }
            Approach::Gk | Approach::Cl => {
                let levels = table.len();
                for v in &mut self.vehicles {
                    v.strategy = Strategy::zeros(levels);
                }
                for c in &self.clusters {
                    let row: Vec<f64> = (0..levels)
                        .map(|i| {
                            std::iter::once(c.head)
                                .chain(c.members.iter().copied())
                                .map(|m| self.rho.get(self.vehicles[m].privacy, i))
                                .fold(1.0, f64::max)
                        })
                        .collect();
                    let pooled = bandwidth * c.size() as f64;
                    self.vehicles[c.head].strategy = single_vehicle_greedy(&table, &row, pooled);
                }
            }
        }
    }

    /// Server push: every vehicle whose reported region makes a message
    /// relevant gets it with its subscription probability for that level and
    /// pays its size. Cluster heads are served for the regions of all members.
    pub fn cellular_push(&mut self, messages: &[Message], levels: &[usize]) -> Vec<Vec<usize>> {
        let table = &self.config.impact_levels;
        let mut holders = vec![Vec::new(); messages.len()];
        for (k, (m, &i)) in messages.iter().zip(levels).enumerate() {
            let r_i = table.level(i).radius_km;
            for id in 0..self.vehicles.len() {
                let p = self.vehicles[id].strategy.probabilities[i];
                if p <= 0.0 {
                    continue;
                }
                let relevant = if self.approach.clustered() {
                    match self.cluster_of_head(id) {
                        Some(c) => std::iter::once(c.head)
                            .chain(c.members.iter().copied())
                            .any(|v| server_relevant(m, &self.vehicles[v].region, r_i)),
                        None => false,
                    }
                } else {
                    server_relevant(m, &self.vehicles[id].region, r_i)
                };
                if relevant && (p >= 1.0 || self.delivery_rng.random::<f64>() < p) {
                    holders[k].push(id);
                    let v = &mut self.vehicles[id];
                    v.cellular_bits += m.size;
                    v.window_bits += m.size;
                }
            }
        }
        holders
    }

    fn cluster_of_head(&self, id: usize) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.head == id)
    }

    /// Lossless local broadcast of this slot's pushes. Under GTP every vehicle
    /// in range of a holder gets the message; NC vehicles keep their own
    /// deliveries unless configured to listen; cluster members hear only their
    /// own head.
    pub fn v2v_share(&self, holders: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = self.vehicles.len();
        holders
            .iter()
            .map(|hs| {
                let mut got = vec![false; n];
                for &h in hs {
                    got[h] = true;
                    match self.approach {
                        Approach::Gtp => self.neighbours[h].iter().for_each(|&v| got[v] = true),
                        Approach::Nc if self.config.sim.nc_receives_shares => {
                            self.neighbours[h].iter().for_each(|&v| got[v] = true)
                        }
                        Approach::Gk | Approach::Cl => {
                            if let Some(c) = self.cluster_of_head(h) {
                                for &m in &c.members {
                                    if self.in_range(h, m) {
                                        got[m] = true;
                                    }
                                }
                            }
                        }
                        Approach::Nc => {}
                    }
                }
                (0..n).filter(|&v| got[v]).collect()
            })
            .collect()
    }

    /// Advances one slot and returns what happened in it.
    pub fn step(&mut self) -> SlotOutcome {
        if self.slot > 0 {
            self.move_vehicles();
        }
        self.refresh_regions();
        self.maintain_clusters();
        self.update_strategies();
        let (messages, levels) = self.generate_messages();
        let holders = self.cellular_push(&messages, &levels);
        let receivers = self.v2v_share(&holders);
        self.account(&messages, &levels, &receivers);
        self.slot += 1;
        if self.slot.is_multiple_of(self.config.sim.metrics_window_slots) {
            self.close_window();
        }
        SlotOutcome { messages, levels, holders, receivers }
    }

    fn account(&mut self, messages: &[Message], levels: &[usize], receivers: &[Vec<usize>]) {
        let table = &self.config.impact_levels;
        for ((m, &i), got) in messages.iter().zip(levels).zip(receivers) {
            let r_i = table.level(i).radius_km;
            let weight = m.weight();
            let mut next = got.iter().peekable();
            for v in &mut self.vehicles {
                let received = next.next_if(|&&g| g == v.id).is_some();
                if vehicle_relevant(m, &v.position, r_i) {
                    v.window_relevant += weight;
                    if received {
                        v.window_received += weight;
                    }
                }
            }
        }
    }

    fn close_window(&mut self) {
        let window_slots = self.config.sim.metrics_window_slots;
        let window = self.slot / window_slots - 1;
        for v in &mut self.vehicles {
            self.rows.push(MetricRow {
                window,
                vehicle: v.id,
                phi: self.config.privacy_profiles[v.privacy].phi,
                relative_utility: relative_utility(v.window_received, v.window_relevant),
                used_bandwidth: used_bandwidth(v.window_bits, window_slots),
            });
            v.window_bits = 0.0;
            v.window_relevant = 0.0;
            v.window_received = 0.0;
        }
    }
}

/// Received over relevant impact; `None` if nothing relevant was sent.
pub fn relative_utility(received_weight: f64, relevant_weight: f64) -> Option<f64> {
    (relevant_weight > 0.0).then(|| received_weight / relevant_weight)
}

/// Average cellular bits per slot.
pub fn used_bandwidth(bits: f64, slots: u64) -> f64 {
    if slots == 0 {
        0.0
    } else {
        bits / slots as f64
    }
}

fn draw_speed<R: Rng + ?Sized>(range: (f64, f64), slot_seconds: f64, rng: &mut R) -> f64 {
    let mps = if range.1 > range.0 { rng.random_range(range.0..=range.1) } else { range.0 };
    mps * slot_seconds / 1000.0
}

/// Largest-remainder split of the fleet by profile share, shuffled over ids.
fn assign_privacy<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let n = config.sim.vehicle_count;
    let shares: Vec<f64> = config.privacy_profiles.iter().map(|p| p.fleet_share.max(0.0)).collect();
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares
        .iter()
        .map(|s| if total > 0.0 { s / total * n as f64 } else { 0.0 })
        .collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>().min(n);
    for &k in order.iter().cycle().take(left * shares.len().max(1)) {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    let mut out: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &c)| vec![k; c]).collect();
    out.shuffle(rng);
    out
}

/// Summary of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub approach: Approach,
    pub seed: u64,
    pub slots: u64,
    /// Mean over vehicles and windows with relevant traffic.
    pub mean_relative_utility: f64,
    /// Mean over vehicles of the long-run cellular bits per slot.
    pub mean_used_bandwidth: f64,
    pub max_vehicle_bandwidth: f64,
    pub solver_failures: u64,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub rows: Vec<MetricRow>,
}

pub fn run_simulation(config: &ScenarioConfig, approach: Approach, seed: u64, slots: u64) -> RunOutput {
    let mut world = World::new(config, approach, seed);
    for _ in 0..slots {
        world.step();
    }
    let utilities: Vec<f64> = world.rows.iter().filter_map(|r| r.relative_utility).collect();
    let mean_relative_utility = if utilities.is_empty() {
        0.0
    } else {
        utilities.iter().sum::<f64>() / utilities.len() as f64
    };
    let per_vehicle: Vec<f64> =
        world.vehicles.iter().map(|v| used_bandwidth(v.cellular_bits, slots)).collect();
    let summary = RunSummary {
        approach,
        seed,
        slots,
        mean_relative_utility,
        mean_used_bandwidth: per_vehicle.iter().sum::<f64>() / per_vehicle.len().max(1) as f64,
        max_vehicle_bandwidth: per_vehicle.iter().copied().fold(0.0, f64::max),
        solver_failures: world.solver_failures,
    };
    RunOutput { summary, rows: world.rows }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify_message, default_scenario};

    fn small_config(vehicles: usize) -> ScenarioConfig {
        let mut cfg = default_scenario();
        cfg.sim.vehicle_count = vehicles;
        cfg
    }

    #[test]
    fn zero_rate_generates_nothing() {
        let mut cfg = small_config(2);
        cfg.impact_levels = cfg.impact_levels.with_scaled_loads(0.0);
        let mut world = World::new(&cfg, Approach::Gtp, 1);
        assert!(world.generate_messages().0.is_empty());
    }

    #[test]
    fn messages_are_classified_and_inside_the_generation_square() {
        let cfg = small_config(2);
        let mut world = World::new(&cfg, Approach::Nc, 3);
        let square = Square::new(Point::new(0.0, 0.0), cfg.generation_region_km);
        let (messages, levels) = world.generate_messages();
        assert!(!messages.is_empty());
        for (m, &i) in messages.iter().zip(&levels) {
            assert!(square.contains(&m.origin));
            assert_eq!(classify_message(m, &cfg.impact_levels), Some(i));
        }
    }

    #[test]
    fn everything_relevant_arrives_with_full_subscription() {
        let cfg = small_config(5);
        let mut world = World::new(&cfg, Approach::Nc, 4);
        for v in &mut world.vehicles {
            v.strategy = Strategy::new(vec![1.0; 4]).unwrap();
        }
        let (messages, levels) = world.generate_messages();
        let holders = world.cellular_push(&messages, &levels);
        for ((m, &i), hs) in messages.iter().zip(&levels).zip(&holders) {
            let r = cfg.impact_levels.level(i).radius_km;
            for v in &world.vehicles {
                if vehicle_relevant(m, &v.position, r) {
                    assert!(hs.contains(&v.id));
                }
            }
        }
    }

    #[test]
    fn no_subscription_no_delivery() {
        let cfg = small_config(5);
        let mut world = World::new(&cfg, Approach::Nc, 4);
        let (messages, levels) = world.generate_messages();
        let holders = world.cellular_push(&messages, &levels);
        assert!(holders.iter().all(|h| h.is_empty()));
        assert!(world.vehicles.iter().all(|v| v.cellular_bits == 0.0));
    }

    #[test]
    fn sharing_is_a_union_within_range() {
        let cfg = small_config(3);
        let mut world = World::new(&cfg, Approach::Gtp, 5);
        let base = world.sim_square.center();
        world.vehicles[0].position = base;
        world.vehicles[1].position = base.offset(0.1, 0.0);
        world.vehicles[2].position = base.offset(1.0, 0.0);
        world.refresh_neighbours();
        let got = world.v2v_share(&[vec![0], vec![1], vec![2]]);
        assert_eq!(got, vec![vec![0, 1], vec![0, 1], vec![2]]);
    }

    #[test]
    fn lone_gtp_vehicle_plays_greedy() {
        let cfg = small_config(1);
        let mut gtp = World::new(&cfg, Approach::Gtp, 6);
        let mut nc = World::new(&cfg, Approach::Nc, 6);
        gtp.update_strategies();
        nc.update_strategies();
        for (a, b) in gtp.vehicles[0].strategy.probabilities.iter().zip(&nc.vehicles[0].strategy.probabilities) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn two_close_gtp_vehicles_mix() {
        let cfg = small_config(2);
        let mut world = World::new(&cfg, Approach::Gtp, 7);
        let base = world.sim_square.center();
        world.vehicles[0].position = base;
        world.vehicles[1].position = base.offset(0.05, 0.0);
        world.refresh_neighbours();
        world.update_strategies();
        let p = &world.vehicles[0].strategy.probabilities;
        assert!(p.iter().any(|&x| x > 0.0 && x < 1.0), "{p:?}");
    }

    #[test]
    fn gk_head_pools_budget() {
        let cfg = small_config(4);
        let mut world = World::new(&cfg, Approach::Gk, 8);
        let base = world.sim_square.center();
        for (k, v) in world.vehicles.iter_mut().enumerate() {
            v.position = base.offset(0.01 * k as f64, 0.0);
        }
        world.refresh_neighbours();
        world.maintain_clusters();
        world.update_strategies();
        assert_eq!(world.clusters.len(), 1);
        assert_eq!(world.clusters[0].head, 0);
        let used = world.vehicles[0].strategy.bandwidth(&cfg.impact_levels.levels().iter().map(|l| l.load).collect::<Vec<_>>());
        assert!((used - 4.0 * cfg.bandwidth_per_slot).abs() < 1e-9);
        assert!(world.vehicles[1..].iter().all(|v| v.strategy.probabilities.iter().all(|&p| p == 0.0)));
    }

    #[test]
    fn static_gk_and_cl_agree() {
        let mut cfg = small_config(20);
        cfg.sim.speed_min_mps = 0.0;
        cfg.sim.speed_max_mps = 0.0;
        let a = run_simulation(&cfg, Approach::Gk, 9, 60);
        let b = run_simulation(&cfg, Approach::Cl, 9, 60);
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn cl_member_out_of_range_is_cut_off_until_timeout() {
        let mut cfg = small_config(2);
        cfg.sim.speed_min_mps = 0.0;
        cfg.sim.speed_max_mps = 0.0;
        let mut world = World::new(&cfg, Approach::Cl, 10);
        let base = world.sim_square.center();
        world.vehicles[0].position = base;
        world.vehicles[1].position = base.offset(0.1, 0.0);
        world.refresh_neighbours();
        world.step();
        assert_eq!(world.vehicles[1].role, Role::Member { head: 0 });
        world.vehicles[1].position = base.offset(0.9, 0.0);
        world.vehicles[1].waypoint = world.vehicles[1].position;
        for _ in 0..5 {
            let out = world.step();
            assert_eq!(world.vehicles[1].role, Role::Member { head: 0 });
            assert!(out.receivers.iter().all(|r| !r.contains(&1)));
        }
        world.step();
        assert_eq!(world.vehicles[1].role, Role::Head);
    }

    #[test]
    fn metric_definitions() {
        assert_eq!(relative_utility(5.0, 5.0), Some(1.0));
        assert_eq!(relative_utility(0.0, 5.0), Some(0.0));
        assert_eq!(relative_utility(0.0, 0.0), None);
        assert_eq!(used_bandwidth(0.0, 60), 0.0);
        assert_eq!(used_bandwidth(60.0, 60), 1.0);
    }

    #[test]
    fn privacy_assignment_follows_shares() {
        let mut cfg = small_config(60);
        cfg.privacy_profiles = vec![
            crate::model::PrivacyProfile::new(1, 0.0, 1).unwrap().with_fleet_share(0.25),
            crate::model::PrivacyProfile::new(2, 10.0, 1).unwrap().with_fleet_share(0.75),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = assign_privacy(&cfg, &mut rng);
        assert_eq!(out.iter().filter(|&&k| k == 0).count(), 15);
        assert_eq!(out.len(), 60);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
