//! The simulated world: a Walker-delta LEO constellation over a spherical,
//! non-rotating Earth, aircraft flying great-circle routes, ground stations
//! and gateways, per-slot visibility and associations, cache placement and
//! file requests.

use crate::linkmodel::{db_to_linear, LinkBudget, LinkBudgetDb, LinkParams};
use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;
use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Standard gravitational parameter of the Earth, m³/s².
pub const MU_EARTH: f64 = 3.986_004_418e14;
/// Slack for grazing lines of sight and nodes sitting on the surface.
const LOS_SLACK_M: f64 = 1.0;

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("slot {slot} out of range (scenario has {num_slots} slots)")]
    SlotOutOfRange { slot: usize, num_slots: usize },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        field: field.into(),
        message: message.into(),
    }
}

/// Geodetic point on the sphere, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatLon {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl LatLon {
    pub const fn new(lat_deg: f64, lon_deg: f64) -> Self {
        Self { lat_deg, lon_deg }
    }

    pub fn unit(&self) -> Vec3 {
        let (lat, lon) = (self.lat_deg.to_radians(), self.lon_deg.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    pub fn ecef(&self, altitude_m: f64) -> Vec3 {
        let u = self.unit();
        let r = EARTH_RADIUS_M + altitude_m;
        [r * u[0], r * u[1], r * u[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundRole {
    /// Air-to-ground gateway serving aircraft directly.
    Gateway,
    /// Ground station uplinking to satellites.
    Gs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundNode {
    pub name: String,
    pub location: LatLon,
    pub role: GroundRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub name: String,
    pub from: LatLon,
    pub to: LatLon,
    pub speed_mps: f64,
    pub altitude_m: f64,
}

impl Route {
    fn arc(&self) -> f64 {
        dot(self.from.unit(), self.to.unit()).clamp(-1.0, 1.0).acos()
    }

    /// Flight length at cruise altitude, meters.
    pub fn length_m(&self) -> f64 {
        self.arc() * (EARTH_RADIUS_M + self.altitude_m)
    }

    /// Point at fraction `s` ∈ [0, 1] of the way along the great circle.
    pub fn point(&self, s: f64) -> Vec3 {
        let (a, b) = (self.from.unit(), self.to.unit());
        let omega = self.arc();
        let u = if omega < 1e-12 {
            a
        } else {
            let (wa, wb) = (((1.0 - s) * omega).sin() / omega.sin(), (s * omega).sin() / omega.sin());
            [wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]]
        };
        let r = EARTH_RADIUS_M + self.altitude_m;
        [r * u[0], r * u[1], r * u[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileType {
    Music,
    Image,
    Video,
    Stream,
}

impl FileType {
    pub const ALL: [FileType; 4] = [Self::Music, Self::Image, Self::Video, Self::Stream];

    /// Music, images and video may be cached in orbit; streams only exist at
    /// ground stations.
    pub fn is_cacheable(&self) -> bool {
        !matches!(self, Self::Stream)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Music => "music",
            Self::Image => "image",
            Self::Video => "video",
            Self::Stream => "stream",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeMix {
    /// Relative draw weight, ≥ 0.
    pub weight: f64,
    /// Inclusive packet-count range.
    pub packets: [u32; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileMix {
    pub music: TypeMix,
    pub image: TypeMix,
    pub video: TypeMix,
    pub stream: TypeMix,
}

impl Default for FileMix {
    fn default() -> Self {
        Self {
            music: TypeMix {
                weight: 1.0,
                packets: [50, 100],
            },
            image: TypeMix {
                weight: 1.0,
                packets: [500, 1000],
            },
            video: TypeMix {
                weight: 1.0,
                packets: [1000, 3000],
            },
            stream: TypeMix {
                weight: 1.0,
                packets: [10, 1000],
            },
        }
    }
}

impl FileMix {
    pub fn get(&self, t: FileType) -> &TypeMix {
        match t {
            FileType::Music => &self.music,
            FileType::Image => &self.image,
            FileType::Video => &self.video,
            FileType::Stream => &self.stream,
        }
    }

    pub fn get_mut(&mut self, t: FileType) -> &mut TypeMix {
        match t {
            FileType::Music => &mut self.music,
            FileType::Image => &mut self.image,
            FileType::Video => &mut self.video,
            FileType::Stream => &mut self.stream,
        }
    }

    /// Keep only cacheable types (`true`) or only streams (`false`).
    pub fn restricted(&self, cacheable: bool) -> Self {
        let mut out = *self;
        for t in FileType::ALL {
            if t.is_cacheable() != cacheable {
                out.get_mut(t).weight = 0.0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum CachePolicy {
    /// Every satellite holds each cacheable item independently with
    /// `probability`.
    Uniform { probability: f64 },
    /// Every satellite holds `capacity` distinct items drawn without
    /// replacement with weight rank^(−exponent) within each file type.
    Zipf { exponent: f64, capacity: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub num_planes: usize,
    pub sats_per_plane: usize,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    /// Walker phasing factor F.
    pub phasing: usize,
    pub num_aircraft: usize,
    pub aircraft_routes: Vec<Route>,
    pub ground_nodes: Vec<GroundNode>,
    pub slot_duration_s: f64,
    pub num_slots: usize,
    pub max_isl: usize,
    pub snr_threshold_db: f64,
    pub file_mix: FileMix,
    pub packet_bits: u32,
    pub request_probability: f64,
    /// Distinct items per cacheable file type.
    pub catalog_size: u32,
    /// Request popularity exponent over the catalog; 0 is uniform.
    pub popularity_exponent: f64,
    pub cache_policy: CachePolicy,
    pub links: LinkBudgetDb,
    pub rng_seed: u64,
}

pub fn default_ground_nodes() -> Vec<GroundNode> {
    let gs = [
        ("Chicago", 41.88, -87.63),
        ("Madrid", 40.42, -3.70),
        ("Nairobi", -1.29, 36.82),
        ("Sydney", -33.87, 151.21),
        ("Tokyo", 35.68, 139.69),
    ];
    let gw = [
        ("New York", 40.71, -74.01),
        ("London", 51.51, -0.13),
        ("Los Angeles", 34.05, -118.24),
        ("Singapore", 1.35, 103.82),
    ];
    let mut nodes: Vec<GroundNode> = gs
        .iter()
        .map(|&(name, lat, lon)| GroundNode {
            name: name.into(),
            location: LatLon::new(lat, lon),
            role: GroundRole::Gs,
        })
        .collect();
    nodes.extend(gw.iter().map(|&(name, lat, lon)| GroundNode {
        name: name.into(),
        location: LatLon::new(lat, lon),
        role: GroundRole::Gateway,
    }));
    nodes
}

pub fn default_routes() -> Vec<Route> {
    let airports = [
        ("JFK", 40.64, -73.78),
        ("LHR", 51.47, -0.45),
        ("LAX", 33.94, -118.41),
        ("NRT", 35.77, 140.39),
        ("SFO", 37.62, -122.38),
        ("SYD", -33.95, 151.18),
        ("GRU", -23.43, -46.47),
        ("JNB", -26.14, 28.25),
        ("MIA", 25.79, -80.29),
        ("MAD", 40.49, -3.57),
        ("HNL", 21.32, -157.92),
        ("AKL", -37.01, 174.79),
        ("CPT", -33.97, 18.60),
        ("PER", -31.94, 115.97),
        ("YVR", 49.19, -123.18),
        ("HKG", 22.31, 113.91),
        ("BOS", 42.36, -71.01),
        ("CDG", 49.01, 2.55),
        ("SCL", -33.39, -70.79),
    ];
    let find = |code: &str| {
        let &(_, lat, lon) = airports.iter().find(|a| a.0 == code).expect("known airport");
        LatLon::new(lat, lon)
    };
    [
        ("JFK", "LHR"),
        ("LAX", "NRT"),
        ("SFO", "SYD"),
        ("GRU", "JNB"),
        ("MIA", "MAD"),
        ("HNL", "AKL"),
        ("CPT", "PER"),
        ("YVR", "HKG"),
        ("BOS", "CDG"),
        ("SCL", "AKL"),
    ]
    .iter()
    .map(|&(a, b)| Route {
        name: format!("{a}-{b}"),
        from: find(a),
        to: find(b),
        speed_mps: 250.0,
        altitude_m: 10_000.0,
    })
    .collect()
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            num_planes: 6,
            sats_per_plane: 20,
            altitude_m: 1_000e3,
            inclination_deg: 53.0,
            phasing: 1,
            num_aircraft: 40,
            aircraft_routes: default_routes(),
            ground_nodes: default_ground_nodes(),
            slot_duration_s: 15.0,
            num_slots: 5760,
            max_isl: 2,
            snr_threshold_db: 7.0,
            file_mix: FileMix::default(),
            packet_bits: 1080,
            request_probability: 0.5,
            catalog_size: 1,
            popularity_exponent: 0.0,
            cache_policy: CachePolicy::Uniform { probability: 0.3 },
            links: LinkBudgetDb::default(),
            rng_seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn num_sats(&self) -> usize {
        self.num_planes * self.sats_per_plane
    }

    pub fn link_budget(&self) -> Result<LinkBudget, ScenarioError> {
        LinkBudget::from_db(&self.links).map_err(|e| field_err("links", e.to_string()))
    }

    /// Circular orbital period, seconds.
    pub fn orbital_period_s(&self) -> f64 {
        let a = EARTH_RADIUS_M + self.altitude_m;
        2.0 * PI * (a * a * a / MU_EARTH).sqrt()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.num_sats() == 0 {
            return Err(field_err("num_planes", "constellation needs at least one satellite"));
        }
        if !(self.altitude_m > 0.0) {
            return Err(field_err("altitude_m", "must be positive"));
        }
        if !self.inclination_deg.is_finite() {
            return Err(field_err("inclination_deg", "must be finite"));
        }
        if !(self.slot_duration_s > 0.0) {
            return Err(field_err("slot_duration_s", "must be positive"));
        }
        if self.num_slots == 0 {
            return Err(field_err("num_slots", "must be at least 1"));
        }
        if self.max_isl == 0 {
            return Err(field_err("max_isl", "must be at least 1"));
        }
        if !self.snr_threshold_db.is_finite() {
            return Err(field_err("snr_threshold_db", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.request_probability) {
            return Err(field_err("request_probability", "must lie in [0, 1]"));
        }
        if self.packet_bits == 0 {
            return Err(field_err("packet_bits", "must be at least 1"));
        }
        if self.catalog_size == 0 {
            return Err(field_err("catalog_size", "must be at least 1"));
        }
        if !(self.popularity_exponent >= 0.0) {
            return Err(field_err("popularity_exponent", "must be non-negative"));
        }
        if self.num_aircraft > 0 && self.aircraft_routes.is_empty() {
            return Err(field_err("aircraft_routes", "aircraft need at least one route"));
        }
        for (i, r) in self.aircraft_routes.iter().enumerate() {
            if !(r.speed_mps > 0.0) {
                return Err(field_err(format!("aircraft_routes[{i}].speed_mps"), "must be positive"));
            }
            if !(r.altitude_m >= 0.0) {
                return Err(field_err(format!("aircraft_routes[{i}].altitude_m"), "must be non-negative"));
            }
        }
        let mut total_weight = 0.0;
        for t in FileType::ALL {
            let m = self.file_mix.get(t);
            let field = format!("file_mix.{}", t.name());
            if !(m.weight >= 0.0 && m.weight.is_finite()) {
                return Err(field_err(field, "weight must be non-negative"));
            }
            if m.packets[0] == 0 || m.packets[0] > m.packets[1] {
                return Err(field_err(field, "packet range needs 1 <= low <= high"));
            }
            total_weight += m.weight;
        }
        if !(total_weight > 0.0) {
            return Err(field_err("file_mix", "at least one weight must be positive"));
        }
        match self.cache_policy {
            CachePolicy::Uniform { probability } => {
                if !(0.0..=1.0).contains(&probability) {
                    return Err(field_err("cache_policy.probability", "must lie in [0, 1]"));
                }
            }
            CachePolicy::Zipf { exponent, .. } => {
                if !(exponent >= 0.0) {
                    return Err(field_err("cache_policy.exponent", "must be non-negative"));
                }
            }
        }
        self.link_budget()?;
        Ok(())
    }
}

/// Independent deterministic random stream for (`seed`, `purpose`, `index`).
/// Streams never overlap, so results do not depend on evaluation order.
pub fn rng_stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Stream purposes used by the simulator.
pub mod streams {
    pub const CACHE: u64 = 1;
    pub const REQUESTS: u64 = 2;
    pub const SOLVER: u64 = 3;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    pub sats: Vec<Vec3>,
    pub aircraft: Vec<Vec3>,
    pub ground: Vec<Vec3>,
}

/// Node positions at slot `t` (time t·τ).
pub fn propagate(spec: &ScenarioSpec, t: usize) -> Result<Positions, ScenarioError> {
    if t >= spec.num_slots {
        return Err(ScenarioError::SlotOutOfRange {
            slot: t,
            num_slots: spec.num_slots,
        });
    }
    let time = t as f64 * spec.slot_duration_s;
    Ok(Positions {
        sats: satellite_positions(spec, time),
        aircraft: aircraft_positions(spec, time),
        ground: spec.ground_nodes.iter().map(|g| g.location.ecef(0.0)).collect(),
    })
}

/// Walker-delta positions at absolute time `time` seconds.
pub fn satellite_positions(spec: &ScenarioSpec, time: f64) -> Vec<Vec3> {
    let a = EARTH_RADIUS_M + spec.altitude_m;
    let mean_motion = (MU_EARTH / (a * a * a)).sqrt();
    let inc = spec.inclination_deg.to_radians();
    let (p, s) = (spec.num_planes, spec.sats_per_plane);
    let total = (p * s) as f64;
    let mut out = Vec::with_capacity(p * s);
    for plane in 0..p {
        let raan = 2.0 * PI * plane as f64 / p as f64;
        for k in 0..s {
            let u = 2.0 * PI * k as f64 / s as f64
                + 2.0 * PI * (spec.phasing * plane) as f64 / total
                + mean_motion * time;
            let (cu, su) = (u.cos(), u.sin());
            let (co, so) = (raan.cos(), raan.sin());
            out.push([
                a * (co * cu - so * su * inc.cos()),
                a * (so * cu + co * su * inc.cos()),
                a * su * inc.sin(),
            ]);
        }
    }
    out
}

/// Aircraft shuttle back and forth along their routes. Aircraft sharing a
/// route are spread evenly over the round trip at time zero.
pub fn aircraft_positions(spec: &ScenarioSpec, time: f64) -> Vec<Vec3> {
    let routes = &spec.aircraft_routes;
    if routes.is_empty() {
        return Vec::new();
    }
    let n_routes = routes.len();
    (0..spec.num_aircraft)
        .map(|a| {
            let route = &routes[a % n_routes];
            let on_route = spec.num_aircraft / n_routes + usize::from(a % n_routes < spec.num_aircraft % n_routes);
            let slot = a / n_routes;
            let len = route.length_m();
            if len <= 0.0 {
                return route.point(0.0);
            }
            let offset = (slot as f64 + 0.5) / on_route as f64 * 2.0 * len;
            let travelled = (offset + route.speed_mps * time).rem_euclid(2.0 * len);
            let s = if travelled <= len { travelled / len } else { 2.0 - travelled / len };
            route.point(s)
        })
        .collect()
}

/// True when the segment between `a` and `b` stays outside the Earth.
pub fn line_of_sight(a: Vec3, b: Vec3) -> bool {
    let d = sub(b, a);
    let dd = dot(d, d);
    let t = if dd > 0.0 { (-dot(a, d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    let closest = [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]];
    norm(closest) >= EARTH_RADIUS_M - LOS_SLACK_M
}

/// A usable link to one node with its full-band quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Link {
    pub node: usize,
    pub distance_m: f64,
    /// Full-band SNR; for G2S links this is the split-band constant c(g, s).
    pub snr: f64,
    pub capacity_bps: f64,
}

/// Item a satellite may hold: a file type plus catalog index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ContentKey {
    pub file_type: FileType,
    pub content: u32,
}

/// Per-satellite set of cached items.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CachePlacement {
    pub sats: Vec<BTreeSet<ContentKey>>,
}

impl CachePlacement {
    pub fn holds(&self, sat: usize, key: &ContentKey) -> bool {
        self.sats.get(sat).is_some_and(|s| s.contains(key))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlotTopology {
    pub slot: usize,
    pub positions: Positions,
    /// Serving satellite per aircraft.
    pub aircraft_sat: Vec<Option<Link>>,
    /// Gateway per aircraft, indexing `ground_nodes`.
    pub aircraft_gateway: Vec<Option<Link>>,
    /// Ground station per satellite, indexing `ground_nodes`.
    pub sat_gs: Vec<Option<Link>>,
    /// Visible ISL neighbors per satellite.
    pub sat_neighbors: Vec<Vec<Link>>,
}

impl TimeSlotTopology {
    pub fn isl(&self, a: usize, b: usize) -> Option<&Link> {
        self.sat_neighbors[a].iter().find(|l| l.node == b)
    }
}

fn usable_link(params: &LinkParams, a: Vec3, b: Vec3, threshold: f64, node: usize) -> Option<Link> {
    if !line_of_sight(a, b) {
        return None;
    }
    let d = distance(a, b);
    let snr = params.snr(d).ok()?;
    if snr < threshold {
        return None;
    }
    Some(Link {
        node,
        distance_m: d,
        snr,
        capacity_bps: params.capacity(d).ok()?,
    })
}

fn nearest(links: impl Iterator<Item = Link>) -> Option<Link> {
    links.min_by(|x, y| x.distance_m.total_cmp(&y.distance_m).then(x.node.cmp(&y.node)))
}

/// Visibility sets and nearest-distance associations for one slot.
pub fn build_topology(
    positions: Positions,
    spec: &ScenarioSpec,
    slot: usize,
) -> Result<TimeSlotTopology, ScenarioError> {
    let budget = spec.link_budget()?;
    let threshold = db_to_linear(spec.snr_threshold_db);
    let sats = &positions.sats;
    let ground = &positions.ground;
    let role = |g: usize| spec.ground_nodes[g].role;

    let aircraft_sat = positions
        .aircraft
        .iter()
        .map(|&p| {
            nearest(
                sats.iter()
                    .enumerate()
                    .filter_map(|(s, &q)| usable_link(&budget.s2a, q, p, threshold, s)),
            )
        })
        .collect();
    let aircraft_gateway = positions
        .aircraft
        .iter()
        .map(|&p| {
            nearest(
                ground
                    .iter()
                    .enumerate()
                    .filter(|&(g, _)| role(g) == GroundRole::Gateway)
                    .filter_map(|(g, &q)| usable_link(&budget.g2a, q, p, threshold, g)),
            )
        })
        .collect();
    let sat_gs = sats
        .iter()
        .map(|&p| {
            nearest(
                ground
                    .iter()
                    .enumerate()
                    .filter(|&(g, _)| role(g) == GroundRole::Gs)
                    .filter_map(|(g, &q)| usable_link(&budget.g2s, q, p, threshold, g)),
            )
        })
        .collect();
    let mut sat_neighbors = vec![Vec::new(); sats.len()];
    for i in 0..sats.len() {
        for j in (i + 1)..sats.len() {
            if let Some(link) = usable_link(&budget.isl, sats[i], sats[j], threshold, j) {
                sat_neighbors[j].push(Link { node: i, ..link });
                sat_neighbors[i].push(link);
            }
        }
    }
    Ok(TimeSlotTopology {
        slot,
        positions,
        aircraft_sat,
        aircraft_gateway,
        sat_gs,
        sat_neighbors,
    })
}

/// Normalized weights k^(−exponent), k = 1..=n.
pub fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn cacheable_catalog(spec: &ScenarioSpec) -> Vec<ContentKey> {
    FileType::ALL
        .iter()
        .filter(|t| t.is_cacheable())
        .flat_map(|&file_type| (0..spec.catalog_size).map(move |content| ContentKey { file_type, content }))
        .collect()
}

pub fn place_cache<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Result<CachePlacement, ScenarioError> {
    let catalog = cacheable_catalog(spec);
    let mut sats = Vec::with_capacity(spec.num_sats());
    match spec.cache_policy {
        CachePolicy::Uniform { probability } => {
            if !(0.0..=1.0).contains(&probability) {
                return Err(field_err("cache_policy.probability", "must lie in [0, 1]"));
            }
            for _ in 0..spec.num_sats() {
                sats.push(catalog.iter().copied().filter(|_| rng.random_bool(probability)).collect());
            }
        }
        CachePolicy::Zipf { exponent, capacity } => {
            if !(exponent >= 0.0) {
                return Err(field_err("cache_policy.exponent", "must be non-negative"));
            }
            let ranks = zipf_weights(spec.catalog_size as usize, exponent);
            let amount = capacity.min(catalog.len());
            for _ in 0..spec.num_sats() {
                let picked = sample_weighted(rng, catalog.len(), |i| ranks[catalog[i].content as usize], amount)
                    .map_err(|e| field_err("cache_policy", e.to_string()))?;
                sats.push(picked.iter().map(|i| catalog[i]).collect());
            }
        }
    }
    Ok(CachePlacement { sats })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRequest {
    /// Requesting aircraft.
    pub source: usize,
    /// Slot in which the request was generated.
    pub slot: usize,
    pub file_type: FileType,
    /// Catalog index within the file type; always 0 for streams.
    pub content: u32,
    pub packets: u32,
    pub packet_bits: u32,
}

impl FileRequest {
    pub fn is_cached_type(&self) -> bool {
        self.file_type.is_cacheable()
    }

    pub fn key(&self) -> ContentKey {
        ContentKey {
            file_type: self.file_type,
            content: self.content,
        }
    }

    pub fn bits(&self) -> f64 {
        self.packets as f64 * self.packet_bits as f64
    }
}

/// At most one request per aircraft for slot `t`.
pub fn generate_requests<R: Rng>(spec: &ScenarioSpec, t: usize, rng: &mut R) -> Vec<FileRequest> {
    let weights: Vec<f64> = FileType::ALL.iter().map(|&f| spec.file_mix.get(f).weight).collect();
    let total: f64 = weights.iter().sum();
    let popularity = zipf_weights(spec.catalog_size as usize, spec.popularity_exponent);
    let draw = |rng: &mut R, w: &[f64], total: f64| {
        let mut x = rng.random::<f64>() * total;
        for (i, &wi) in w.iter().enumerate() {
            if x < wi {
                return i;
            }
            x -= wi;
        }
        w.iter().rposition(|&v| v > 0.0).unwrap_or(0)
    };
    let mut out = Vec::new();
    for source in 0..spec.num_aircraft {
        if !rng.random_bool(spec.request_probability) {
            continue;
        }
        let file_type = FileType::ALL[draw(rng, &weights, total)];
        let [lo, hi] = spec.file_mix.get(file_type).packets;
        let packets = rng.random_range(lo..=hi);
        let content = if file_type.is_cacheable() {
            draw(rng, &popularity, 1.0) as u32
        } else {
            0
        };
        out.push(FileRequest {
            source,
            slot: t,
            file_type,
            content,
            packets,
            packet_bits: spec.packet_bits,
        });
    }
    out
}
