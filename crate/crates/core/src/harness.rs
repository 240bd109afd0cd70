//! Experiment runner.
//!
//! A run walks slots through topology, request generation, the two
//! association problems and delay accounting, then reports the mean
//! per-file delay. Every (sweep point, scheme, seed) job is independent and
//! draws from its own random streams, so jobs run in parallel without
//! changing results.

use crate::baselines::{
    equal_bandwidth, exhaustive_cached_split, fully_connected_cached, fully_connected_noncached, greedy_cached,
    greedy_noncached, random_cached, random_noncached, rounding_assoc, rounding_cached, BaselineError,
};
use crate::cached::{epm_associate, AssociationSolution, CachedInstance, CachedRequest, Candidate, EpmParams};
use crate::fading::{default_models, per_curve, FadingError, PerPoint};
use crate::linkmodel::{prop_delay, DelayBreakdown, LinkBudget, LinkDelay};
use crate::noncached::{
    ao_solve, AoParams, DirectRequest, NonCachedInstance, NonCachedSolution, RelayLink, RelayNode, RelayRequest,
};
use crate::scenario::{
    build_topology, generate_requests, place_cache, propagate, rng_stream, streams, CachePlacement, FileRequest,
    GroundRole, ScenarioError, ScenarioSpec, TimeSlotTopology,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Stream purpose for per-seed scenario seeds.
const SEED_STREAM: u64 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("cannot read config: {0}")]
    Parse(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("solver failed in slot {slot}: {source}")]
    Solver { slot: usize, source: BaselineError },
    #[error(transparent)]
    Fading(#[from] FadingError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("nothing to aggregate")]
    Empty,
    #[error("no slot in the scenario produces a nontrivial {0} instance")]
    NoInstance(&'static str),
}

impl HarnessError {
    /// Process exit code for the CLI: 2 for bad input, 3 for solver
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::Parse(_) | Self::Scenario(_) => 2,
            Self::Solver { .. } | Self::Fading(_) | Self::NoInstance(_) => 3,
            Self::Io(_) | Self::Empty => 1,
        }
    }
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DelayVsRequestsCached,
    DelayVsRequestsNoncached,
    DelayVsMaxIsl,
    DelayVsGsCount,
    DelayVsBandwidthAltitude,
    PerVsSnr,
    ConvergenceTrace,
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Self::DelayVsRequestsCached => "delay-vs-requests-cached",
            Self::DelayVsRequestsNoncached => "delay-vs-requests-noncached",
            Self::DelayVsMaxIsl => "delay-vs-max-isl",
            Self::DelayVsGsCount => "delay-vs-gs-count",
            Self::DelayVsBandwidthAltitude => "delay-vs-bandwidth-altitude",
            Self::PerVsSnr => "per-vs-snr",
            Self::ConvergenceTrace => "convergence-trace",
        }
    }

    fn is_delay(&self) -> bool {
        !matches!(self, Self::PerVsSnr | Self::ConvergenceTrace)
    }
}

/// Which requests a scheme is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileClass {
    Cached,
    NonCached,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact-penalty association on cached files.
    Epm,
    Exhaustive,
    Greedy,
    Random,
    Rounding,
    FullyConnected,
    /// Alternating association and bandwidth allocation on non-cached files.
    Ao,
    EqualBandwidth,
    RoundingAssoc,
    GreedyRelay,
    RandomRelay,
    FullyConnectedRelay,
    /// EPM and AO together on the full file mix.
    Proposed,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Epm => "epm",
            Self::Exhaustive => "exhaustive",
            Self::Greedy => "greedy",
            Self::Random => "random",
            Self::Rounding => "rounding",
            Self::FullyConnected => "fully-connected",
            Self::Ao => "ao",
            Self::EqualBandwidth => "equal-bandwidth",
            Self::RoundingAssoc => "rounding-assoc",
            Self::GreedyRelay => "greedy-relay",
            Self::RandomRelay => "random-relay",
            Self::FullyConnectedRelay => "fully-connected-relay",
            Self::Proposed => "proposed",
        }
    }

    pub fn class(&self) -> FileClass {
        match self {
            Self::Epm | Self::Exhaustive | Self::Greedy | Self::Random | Self::Rounding | Self::FullyConnected => {
                FileClass::Cached
            }
            Self::Ao
            | Self::EqualBandwidth
            | Self::RoundingAssoc
            | Self::GreedyRelay
            | Self::RandomRelay
            | Self::FullyConnectedRelay => FileClass::NonCached,
            Self::Proposed => FileClass::All,
        }
    }

    fn fully_connected_for(class: FileClass) -> Option<Scheme> {
        match class {
            FileClass::Cached => Some(Self::FullyConnected),
            FileClass::NonCached => Some(Self::FullyConnectedRelay),
            FileClass::All => None,
        }
    }
}

fn default_seeds() -> usize {
    1
}

fn default_slots() -> usize {
    10
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Sweep values: mean requests per slot, max ISLs, GS count, G2S
    /// bandwidth in MHz or SNR in dB depending on the experiment. Ignored by
    /// the convergence trace.
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Slots simulated per job.
    #[serde(default = "default_slots")]
    pub slots: usize,
    /// Distance between simulated slots.
    #[serde(default = "default_stride")]
    pub slot_stride: usize,
    /// Constellation altitudes for the bandwidth/altitude experiment.
    #[serde(default)]
    pub altitudes_m: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub scenario: ScenarioSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        if self.seeds == 0 {
            return Err(config_err("seeds", "must be at least 1"));
        }
        if self.slots == 0 {
            return Err(config_err("slots", "must be at least 1"));
        }
        if self.slot_stride == 0 {
            return Err(config_err("slot_stride", "must be at least 1"));
        }
        if self.experiment != Experiment::ConvergenceTrace && self.sweep.is_empty() {
            return Err(config_err("sweep", "must not be empty"));
        }
        if let Some(v) = self.sweep.iter().find(|v| !v.is_finite()) {
            return Err(config_err("sweep", format!("value {v} is not finite")));
        }
        let integral = |field: &str, lo: f64, hi: f64| -> Result<(), HarnessError> {
            for &v in &self.sweep {
                if v.fract() != 0.0 || v < lo || v > hi {
                    return Err(config_err(field, format!("value {v} must be an integer in [{lo}, {hi}]")));
                }
            }
            Ok(())
        };
        match self.experiment {
            Experiment::DelayVsRequestsCached | Experiment::DelayVsRequestsNoncached => {
                if let Some(v) = self.sweep.iter().find(|&&v| v < 0.0 || v > self.scenario.num_aircraft as f64) {
                    return Err(config_err(
                        "sweep",
                        format!("mean requests {v} outside [0, {}]", self.scenario.num_aircraft),
                    ));
                }
            }
            Experiment::DelayVsMaxIsl => integral("sweep", 1.0, 64.0)?,
            Experiment::DelayVsGsCount => {
                let n = self.scenario.ground_nodes.iter().filter(|g| g.role == GroundRole::Gs).count();
                integral("sweep", 0.0, n as f64)?
            }
            Experiment::DelayVsBandwidthAltitude => {
                if self.sweep.iter().any(|&v| v <= 0.0) {
                    return Err(config_err("sweep", "bandwidths must be positive"));
                }
                if self.altitudes_m.iter().any(|&a| !(a > 0.0)) {
                    return Err(config_err("altitudes_m", "altitudes must be positive"));
                }
            }
            Experiment::PerVsSnr | Experiment::ConvergenceTrace => {}
        }
        if self.experiment.is_delay() {
            if self.schemes.is_empty() {
                return Err(config_err("schemes", "must not be empty"));
            }
            let required = match self.experiment {
                Experiment::DelayVsRequestsCached => Some(FileClass::Cached),
                Experiment::DelayVsRequestsNoncached => Some(FileClass::NonCached),
                _ => None,
            };
            if let Some(class) = required {
                if let Some(s) = self.schemes.iter().find(|s| s.class() != class) {
                    return Err(config_err(
                        "schemes",
                        format!("{} does not apply to {}", s.name(), self.experiment.id()),
                    ));
                }
            }
        }
        Ok(())
    }

    fn points(&self) -> Vec<(f64, Option<f64>)> {
        if self.experiment == Experiment::DelayVsBandwidthAltitude && !self.altitudes_m.is_empty() {
            self.altitudes_m
                .iter()
                .flat_map(|&a| self.sweep.iter().map(move |&v| (v, Some(a))))
                .collect()
        } else {
            self.sweep.iter().map(|&v| (v, None)).collect()
        }
    }

    /// Schemes actually run; the max-ISL sweep always carries the
    /// fully connected reference.
    pub fn effective_schemes(&self) -> Vec<Scheme> {
        let mut schemes = self.schemes.clone();
        if self.experiment == Experiment::DelayVsMaxIsl {
            for s in self.schemes.iter().filter_map(|s| Scheme::fully_connected_for(s.class())) {
                if !schemes.contains(&s) {
                    schemes.push(s);
                }
            }
        }
        schemes
    }

    /// Scenario at one sweep point, restricted to the scheme's file class.
    pub fn spec_for(&self, value: f64, altitude: Option<f64>, scheme: Scheme) -> ScenarioSpec {
        let mut spec = self.scenario.clone();
        match self.experiment {
            Experiment::DelayVsRequestsCached | Experiment::DelayVsRequestsNoncached => {
                spec.request_probability = if spec.num_aircraft == 0 {
                    0.0
                } else {
                    (value / spec.num_aircraft as f64).min(1.0)
                };
            }
            Experiment::DelayVsMaxIsl => spec.max_isl = value as usize,
            Experiment::DelayVsGsCount => {
                let mut kept = 0;
                spec.ground_nodes.retain(|g| {
                    if g.role != GroundRole::Gs {
                        return true;
                    }
                    kept += 1;
                    kept as f64 <= value
                });
            }
            Experiment::DelayVsBandwidthAltitude => {
                spec.links.g2s.bandwidth_hz = value * 1e6;
                if let Some(a) = altitude {
                    spec.altitude_m = a;
                }
            }
            Experiment::PerVsSnr | Experiment::ConvergenceTrace => {}
        }
        match scheme.class() {
            FileClass::Cached => spec.file_mix = spec.file_mix.restricted(true),
            FileClass::NonCached => spec.file_mix = spec.file_mix.restricted(false),
            FileClass::All => {}
        }
        spec
    }
}

fn sweep_label(value: f64, altitude: Option<f64>) -> String {
    match altitude {
        Some(a) => format!("{value}@{}km", a / 1e3),
        None => format!("{value}"),
    }
}

/// Scenario seed for seed index `s`.
pub fn job_seed(base: u64, s: usize) -> u64 {
    rng_stream(base, SEED_STREAM, s as u64).random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep: String,
    pub scheme: String,
    pub seed: usize,
    pub mean_delay_s: f64,
    pub phase1_s: f64,
    pub phase2_s: f64,
    pub unservable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub sweep: String,
    pub scheme: String,
    pub seeds: usize,
    pub mean_delay_s: f64,
    pub stderr_s: f64,
    pub phase1_s: f64,
    pub phase2_s: f64,
    pub unservable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub problem: String,
    pub seed: usize,
    pub iteration: usize,
    pub objective: f64,
    /// Penalty residual; cached problem only.
    pub residual: Option<f64>,
}

/// How one request is delivered in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Unservable,
    /// Straight from a gateway over G2A.
    Gateway(LinkDelay),
    /// The serving satellite already holds the file.
    SelfCached,
    /// Index into the slot's cached instance.
    Cached(usize),
    /// Index into the non-cached instance's direct requests.
    GsDirect(usize),
    /// Index into the non-cached instance's relayed requests.
    Relayed(usize),
}

/// Everything the solvers need for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPlan {
    pub requests: Vec<FileRequest>,
    pub deliveries: Vec<Delivery>,
    /// S2A delay of each request's final hop; 0 where unused.
    pub s2a: Vec<LinkDelay>,
    pub cached: CachedInstance,
    /// Relay paths for each cached-instance request, used if association
    /// leaves it without a link.
    pub cached_fallback: Vec<Vec<RelayLink>>,
    /// Its `consumed` map is filled once the cached problem is solved.
    pub noncached: NonCachedInstance,
}

/// Route every request of a slot and build both problem instances.
pub fn plan_slot(
    spec: &ScenarioSpec,
    budget: &LinkBudget,
    topo: &TimeSlotTopology,
    cache: &CachePlacement,
    requests: Vec<FileRequest>,
) -> SlotPlan {
    let mut deliveries = Vec::with_capacity(requests.len());
    let mut s2a = Vec::with_capacity(requests.len());
    let mut cached = CachedInstance {
        requests: Vec::new(),
        max_isl: spec.max_isl,
        consumed: BTreeMap::new(),
    };
    let mut noncached = NonCachedInstance {
        relays: Vec::new(),
        relayed: Vec::new(),
        direct: Vec::new(),
        bandwidth_hz: budget.g2s.bandwidth_hz,
        max_isl: spec.max_isl,
        consumed: BTreeMap::new(),
    };
    let mut relay_index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cached_fallback = Vec::new();
    for req in &requests {
        let bits = req.bits();
        if let Some(g) = &topo.aircraft_gateway[req.source] {
            deliveries.push(Delivery::Gateway(LinkDelay {
                transmission: bits / g.capacity_bps,
                propagation: prop_delay(g.distance_m),
            }));
            s2a.push(LinkDelay::default());
            continue;
        }
        let Some(serving) = &topo.aircraft_sat[req.source] else {
            deliveries.push(Delivery::Unservable);
            s2a.push(LinkDelay::default());
            continue;
        };
        s2a.push(LinkDelay {
            transmission: bits / serving.capacity_bps,
            propagation: prop_delay(serving.distance_m),
        });
        let sj = serving.node;
        let gs = topo.sat_gs[sj].as_ref();
        if req.is_cached_type() {
            let key = req.key();
            if cache.holds(sj, &key) {
                deliveries.push(Delivery::SelfCached);
                continue;
            }
            let candidates: Vec<Candidate> = topo.sat_neighbors[sj]
                .iter()
                .filter(|l| cache.holds(l.node, &key))
                .map(|l| Candidate {
                    sat: l.node,
                    capacity_bps: l.capacity_bps,
                    distance_m: l.distance_m,
                })
                .collect();
            if !candidates.is_empty() {
                deliveries.push(Delivery::Cached(cached.requests.len()));
                let fallback = if gs.is_none() {
                    relay_links(budget, topo, sj, &mut relay_index, &mut noncached.relays)
                } else {
                    Vec::new()
                };
                cached_fallback.push(fallback);
                cached.requests.push(CachedRequest {
                    requester: sj,
                    bits,
                    candidates,
                    gs_capacity_bps: gs.map_or(0.0, |g| g.capacity_bps),
                    gs_distance_m: gs.map_or(0.0, |g| g.distance_m),
                });
                continue;
            }
            // Not cached anywhere in reach: fetched from the ground instead.
        }
        if let Some(g) = gs {
            deliveries.push(Delivery::GsDirect(noncached.direct.len()));
            noncached.direct.push(DirectRequest {
                requester: sj,
                bits,
                gs: g.node,
                capacity_bps: g.capacity_bps,
                gs_distance_m: g.distance_m,
            });
            continue;
        }
        let links = relay_links(budget, topo, sj, &mut relay_index, &mut noncached.relays);
        if links.is_empty() {
            deliveries.push(Delivery::Unservable);
        } else {
            deliveries.push(Delivery::Relayed(noncached.relayed.len()));
            noncached.relayed.push(RelayRequest {
                requester: sj,
                bits,
                links,
            });
        }
    }
    SlotPlan {
        requests,
        deliveries,
        s2a,
        cached,
        cached_fallback,
        noncached,
    }
}

/// Two-hop paths from `sj` through GS-visible neighbors, registering new
/// relay nodes in `relays`.
fn relay_links(
    budget: &LinkBudget,
    topo: &TimeSlotTopology,
    sj: usize,
    relay_index: &mut BTreeMap<usize, usize>,
    relays: &mut Vec<RelayNode>,
) -> Vec<RelayLink> {
    let mut links = Vec::new();
    for l in &topo.sat_neighbors[sj] {
        let Some(g) = &topo.sat_gs[l.node] else { continue };
        let Ok(c) = budget.g2s.snr_constant(g.distance_m) else { continue };
        let relay = *relay_index.entry(l.node).or_insert_with(|| {
            relays.push(RelayNode {
                sat: l.node,
                gs: g.node,
                snr_const: c,
                gs_distance_m: g.distance_m,
            });
            relays.len() - 1
        });
        links.push(RelayLink {
            relay,
            isl_capacity_bps: l.capacity_bps,
            isl_distance_m: l.distance_m,
        });
    }
    links
}

/// Solver outputs for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub cached: AssociationSolution,
    pub noncached: NonCachedSolution,
    /// Per request; `None` when unservable.
    pub delays: Vec<Option<DelayBreakdown>>,
}

fn solve_cached_part(scheme: Scheme, inst: &CachedInstance, rng: &mut ChaCha8Rng) -> Result<AssociationSolution, BaselineError> {
    Ok(match scheme {
        Scheme::Exhaustive => exhaustive_cached_split(inst)?.solution,
        Scheme::Greedy => greedy_cached(inst),
        Scheme::Random => random_cached(inst, rng),
        Scheme::Rounding => rounding_cached(inst)?,
        Scheme::FullyConnected => fully_connected_cached(inst),
        _ => epm_associate(inst, &EpmParams::default())?,
    })
}

fn solve_noncached_part(scheme: Scheme, inst: &NonCachedInstance, rng: &mut ChaCha8Rng) -> Result<NonCachedSolution, BaselineError> {
    let params = AoParams::default();
    Ok(match scheme {
        Scheme::EqualBandwidth => equal_bandwidth(inst, &params.epm)?,
        Scheme::RoundingAssoc => rounding_assoc(inst, &params)?,
        Scheme::GreedyRelay => greedy_noncached(inst, &params)?,
        Scheme::RandomRelay => random_noncached(inst, rng)?,
        Scheme::FullyConnectedRelay => fully_connected_noncached(inst, &params)?,
        _ => ao_solve(inst, &inst.equal_omega(), &params)?,
    })
}

/// Solve both problems of a planned slot with `scheme` and account delays.
pub fn solve_slot(plan: &mut SlotPlan, scheme: Scheme, rng: &mut ChaCha8Rng) -> Result<SlotOutcome, BaselineError> {
    let cached = solve_cached_part(scheme, &plan.cached, rng)?;
    plan.noncached.consumed = plan.cached.degrees(&cached.x);
    // Cached files left without any link are fetched from the ground.
    for d in plan.deliveries.iter_mut() {
        if let Delivery::Cached(i) = *d {
            if cached.delays[i].is_infinite() && !plan.cached_fallback[i].is_empty() {
                *d = Delivery::Relayed(plan.noncached.relayed.len());
                plan.noncached.relayed.push(RelayRequest {
                    requester: plan.cached.requests[i].requester,
                    bits: plan.cached.requests[i].bits,
                    links: plan.cached_fallback[i].clone(),
                });
            }
        }
    }
    let noncached = solve_noncached_part(scheme, &plan.noncached, rng)?;
    let delays = account(plan, &cached, &noncached);
    Ok(SlotOutcome {
        cached,
        noncached,
        delays,
    })
}

/// Per-request delay breakdowns from the two solutions.
pub fn account(plan: &SlotPlan, cached: &AssociationSolution, noncached: &NonCachedSolution) -> Vec<Option<DelayBreakdown>> {
    let nc = &plan.noncached;
    plan.deliveries
        .iter()
        .zip(&plan.s2a)
        .map(|(d, s2a)| match *d {
            Delivery::Unservable => None,
            Delivery::Gateway(g) => Some(DelayBreakdown::phase2_only(g.total())),
            Delivery::SelfCached => Some(DelayBreakdown::phase2_only(s2a.total())),
            Delivery::Cached(i) => {
                let req = &plan.cached.requests[i];
                let (x, r) = (&cached.x[i], &cached.ratios[i]);
                let mut links: Vec<LinkDelay> = req
                    .candidates
                    .iter()
                    .zip(x)
                    .zip(&r.isl)
                    .filter(|((_, &on), _)| on)
                    .map(|((c, _), &rho)| LinkDelay {
                        transmission: rho * req.bits / c.capacity_bps,
                        propagation: prop_delay(c.distance_m),
                    })
                    .collect();
                if r.gs > 0.0 {
                    links.push(LinkDelay {
                        transmission: r.gs * req.bits / req.gs_capacity_bps,
                        propagation: prop_delay(req.gs_distance_m),
                    });
                }
                (!links.is_empty()).then(|| DelayBreakdown::new(links, s2a.total()))
            }
            Delivery::GsDirect(i) => {
                let req = &nc.direct[i];
                Some(DelayBreakdown::new(
                    vec![LinkDelay {
                        transmission: req.bits / req.capacity_bps,
                        propagation: prop_delay(req.gs_distance_m),
                    }],
                    s2a.total(),
                ))
            }
            Delivery::Relayed(j) => {
                let req = &nc.relayed[j];
                let links: Vec<LinkDelay> = req
                    .links
                    .iter()
                    .zip(&noncached.x[j])
                    .zip(&noncached.ratios[j])
                    .filter(|((_, &on), _)| on)
                    .map(|((l, _), &rho)| {
                        let node = &nc.relays[l.relay];
                        let g = nc.g2s_capacity(l.relay, noncached.omega[l.relay]);
                        LinkDelay {
                            transmission: rho * req.bits * (1.0 / g + 1.0 / l.isl_capacity_bps),
                            propagation: prop_delay(node.gs_distance_m) + prop_delay(l.isl_distance_m),
                        }
                    })
                    .collect();
                let finite = links.iter().all(|l| l.transmission.is_finite());
                (!links.is_empty() && finite).then(|| DelayBreakdown::new(links, s2a.total()))
            }
        })
        .collect()
}

/// Accumulated delays of one job.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub files: usize,
    pub unservable: usize,
    pub total_s: f64,
    pub phase1_s: f64,
    pub phase2_s: f64,
}

impl RunStats {
    pub fn add(&mut self, d: &Option<DelayBreakdown>) {
        match d {
            Some(b) => {
                self.files += 1;
                self.total_s += b.total();
                self.phase1_s += b.phase1();
                self.phase2_s += b.phase2;
            }
            None => self.unservable += 1,
        }
    }

    /// (mean total, mean phase 1, mean phase 2); zeros when nothing was
    /// delivered.
    pub fn means(&self) -> (f64, f64, f64) {
        if self.files == 0 {
            return (0.0, 0.0, 0.0);
        }
        let n = self.files as f64;
        (self.total_s / n, self.phase1_s / n, self.phase2_s / n)
    }
}

/// Static state shared by all slots of a job.
pub struct World {
    pub spec: ScenarioSpec,
    pub budget: LinkBudget,
    pub cache: CachePlacement,
}

impl World {
    pub fn new(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        spec.validate()?;
        let budget = spec.link_budget()?;
        let cache = place_cache(&spec, &mut rng_stream(spec.rng_seed, streams::CACHE, 0))?;
        Ok(Self { spec, budget, cache })
    }

    pub fn plan(&self, t: usize) -> Result<SlotPlan, ScenarioError> {
        let topo = build_topology(propagate(&self.spec, t)?, &self.spec, t)?;
        let requests = generate_requests(&self.spec, t, &mut rng_stream(self.spec.rng_seed, streams::REQUESTS, t as u64));
        Ok(plan_slot(&self.spec, &self.budget, &topo, &self.cache, requests))
    }
}

/// Requests and their delays for each of `slots` slots spaced by `stride`.
fn slot_delays(
    spec: ScenarioSpec,
    scheme: Scheme,
    slots: usize,
    stride: usize,
) -> Result<Vec<(Vec<FileRequest>, Vec<Option<DelayBreakdown>>)>, HarnessError> {
    let world = World::new(spec)?;
    (0..slots)
        .map(|i| {
            let t = (i * stride) % world.spec.num_slots;
            let mut plan = world.plan(t)?;
            let mut rng = rng_stream(world.spec.rng_seed, streams::SOLVER, t as u64);
            let outcome =
                solve_slot(&mut plan, scheme, &mut rng).map_err(|source| HarnessError::Solver { slot: t, source })?;
            Ok((plan.requests, outcome.delays))
        })
        .collect()
}

/// Simulate `slots` slots spaced by `stride` under `scheme`.
pub fn simulate(spec: ScenarioSpec, scheme: Scheme, slots: usize, stride: usize) -> Result<RunStats, HarnessError> {
    let mut stats = RunStats::default();
    for (_, delays) in slot_delays(spec, scheme, slots, stride)? {
        delays.iter().for_each(|d| stats.add(d));
    }
    Ok(stats)
}

/// Mean delay at one sweep point and seed over the paired request set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub sweep: String,
    pub scheme: String,
    pub seed: usize,
    pub mean_delay_s: f64,
    /// Requests of this seed delivered in every arm.
    pub files: usize,
}

/// Per-seed mean delay of each scheme at each sweep point over the requests
/// delivered by every scheme at every point. Unlike the per-run mean this
/// does not shift when a sweep makes more requests servable. The schemes
/// must share a file class and the sweep must leave requests unchanged, so
/// the request-count experiments are rejected. Rows are ordered by scheme,
/// sweep point, then seed.
pub fn paired_means(config: &ExperimentConfig, schemes: &[Scheme]) -> Result<Vec<PairedRow>, HarnessError> {
    config.validate()?;
    if !config.experiment.is_delay()
        || matches!(
            config.experiment,
            Experiment::DelayVsRequestsCached | Experiment::DelayVsRequestsNoncached
        )
    {
        return Err(config_err("experiment", "paired means need a sweep that keeps the requests fixed"));
    }
    let Some(first) = schemes.first() else {
        return Err(config_err("schemes", "need at least one scheme"));
    };
    if schemes.iter().any(|s| s.class() != first.class()) {
        return Err(config_err("schemes", "paired schemes must share a file class"));
    }
    let points = config.points();
    let arms: Vec<(Scheme, usize)> = schemes.iter().flat_map(|&sc| (0..points.len()).map(move |p| (sc, p))).collect();
    let jobs: Vec<(usize, usize)> = (0..arms.len()).flat_map(|a| (0..config.seeds).map(move |s| (a, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(a, s)| {
            let (scheme, p) = arms[a];
            let (value, altitude) = points[p];
            let mut spec = config.spec_for(value, altitude, scheme);
            spec.rng_seed = job_seed(config.scenario.rng_seed, s);
            slot_delays(spec, scheme, config.slots, config.slot_stride)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let run = |a: usize, s: usize| &runs[a * config.seeds + s];
    let mut totals = vec![vec![0.0; config.seeds]; arms.len()];
    let mut files = vec![0; config.seeds];
    for s in 0..config.seeds {
        for slot in 0..config.slots {
            let requests = &run(0, s)[slot].0;
            if (1..arms.len()).any(|a| &run(a, s)[slot].0 != requests) {
                return Err(config_err("sweep", "requests differ between sweep points"));
            }
            for i in 0..requests.len() {
                let delays: Option<Vec<f64>> =
                    (0..arms.len()).map(|a| run(a, s)[slot].1[i].as_ref().map(|d| d.total())).collect();
                if let Some(d) = delays {
                    files[s] += 1;
                    d.iter().enumerate().for_each(|(a, x)| totals[a][s] += x);
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (a, &(scheme, p)) in arms.iter().enumerate() {
        let (value, altitude) = points[p];
        for s in 0..config.seeds {
            rows.push(PairedRow {
                sweep: sweep_label(value, altitude),
                scheme: scheme.name().into(),
                seed: s,
                mean_delay_s: if files[s] == 0 { 0.0 } else { totals[a][s] / files[s] as f64 },
                files: files[s],
            });
        }
    }
    Ok(rows)
}

/// Output of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Delays(Vec<ResultRow>),
    Per(Vec<PerPoint>),
    Trace(Vec<TraceRow>),
}

/// Run an experiment. Row order is fixed by (sweep point, scheme, seed)
/// regardless of thread scheduling.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    match config.experiment {
        Experiment::PerVsSnr => Ok(RunOutput::Per(per_curve(&default_models(), &config.sweep)?)),
        Experiment::ConvergenceTrace => {
            let mut rows = Vec::new();
            for s in 0..config.seeds {
                let mut spec = config.scenario.clone();
                spec.rng_seed = job_seed(config.scenario.rng_seed, s);
                rows.extend(trace(&spec, TraceProblem::Cached, s, config.slot_stride)?);
                rows.extend(trace(&spec, TraceProblem::NonCached, s, config.slot_stride)?);
            }
            Ok(RunOutput::Trace(rows))
        }
        _ => {
            let schemes = config.effective_schemes();
            let mut jobs = Vec::new();
            for (value, altitude) in config.points() {
                for &scheme in &schemes {
                    for s in 0..config.seeds {
                        jobs.push((value, altitude, scheme, s));
                    }
                }
            }
            let rows: Result<Vec<ResultRow>, HarnessError> = jobs
                .par_iter()
                .map(|&(value, altitude, scheme, s)| {
                    let mut spec = config.spec_for(value, altitude, scheme);
                    spec.rng_seed = job_seed(config.scenario.rng_seed, s);
                    let stats = simulate(spec, scheme, config.slots, config.slot_stride)?;
                    let (mean, p1, p2) = stats.means();
                    Ok(ResultRow {
                        experiment: config.experiment.id().into(),
                        sweep: sweep_label(value, altitude),
                        scheme: scheme.name().into(),
                        seed: s,
                        mean_delay_s: mean,
                        phase1_s: p1,
                        phase2_s: p2,
                        unservable: stats.unservable,
                    })
                })
                .collect();
            Ok(RunOutput::Delays(rows?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceProblem {
    Cached,
    NonCached,
}

impl TraceProblem {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cached => "cached",
            Self::NonCached => "noncached",
        }
    }
}

/// Solver trace on the first slot with at least two requests for the
/// chosen problem, scanning slots with `stride`.
pub fn trace(spec: &ScenarioSpec, problem: TraceProblem, seed: usize, stride: usize) -> Result<Vec<TraceRow>, HarnessError> {
    let mut spec = spec.clone();
    spec.file_mix = spec.file_mix.restricted(problem == TraceProblem::Cached);
    let world = World::new(spec)?;
    let stride = stride.max(1);
    let mut t = 0;
    while t < world.spec.num_slots {
        let plan = world.plan(t)?;
        let rows: Option<Vec<TraceRow>> = match problem {
            TraceProblem::Cached if plan.cached.requests.len() >= 2 => {
                let sol = epm_associate(&plan.cached, &EpmParams::default())
                    .map_err(|e| HarnessError::Solver { slot: t, source: e.into() })?;
                Some(
                    sol.trace
                        .iter()
                        .map(|r| TraceRow {
                            problem: problem.name().into(),
                            seed,
                            iteration: r.iteration,
                            objective: r.objective,
                            residual: Some(r.residual),
                        })
                        .collect(),
                )
            }
            TraceProblem::NonCached if plan.noncached.relayed.len() >= 2 => {
                let inst = &plan.noncached;
                let sol = ao_solve(inst, &inst.equal_omega(), &AoParams::default())
                    .map_err(|e| HarnessError::Solver { slot: t, source: e.into() })?;
                Some(
                    sol.trace
                        .iter()
                        .map(|r| TraceRow {
                            problem: problem.name().into(),
                            seed,
                            iteration: r.outer,
                            objective: r.objective,
                            residual: None,
                        })
                        .collect(),
                )
            }
            _ => None,
        };
        if let Some(rows) = rows {
            return Ok(rows);
        }
        t += stride;
    }
    Err(HarnessError::NoInstance(problem.name()))
}

/// Mean ± standard error over seeds per (experiment, sweep, scheme), in
/// first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<SummaryRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.experiment.clone(), r.sweep.clone(), r.scheme.clone());
        let g = groups.entry(key.clone()).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(r);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let n = g.len() as f64;
            let mean = |f: &dyn Fn(&ResultRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            let m = mean(&|r| r.mean_delay_s);
            let stderr = if g.len() > 1 {
                let var = g.iter().map(|r| (r.mean_delay_s - m).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                experiment: key.0,
                sweep: key.1,
                scheme: key.2,
                seeds: g.len(),
                mean_delay_s: m,
                stderr_s: stderr,
                phase1_s: mean(&|r| r.phase1_s),
                phase2_s: mean(&|r| r.phase2_s),
                unservable: mean(&|r| r.unservable as f64),
            }
        })
        .collect())
}

/// CSV text with a header row.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Io(e.to_string()))
}

impl RunOutput {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        match self {
            Self::Delays(rows) => to_csv(rows),
            Self::Per(rows) => to_csv(rows),
            Self::Trace(rows) => to_csv(rows),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_csv()?).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sweep: &str, seed: usize, delay: f64) -> ResultRow {
        ResultRow {
            experiment: "e".into(),
            sweep: sweep.into(),
            scheme: "epm".into(),
            seed,
            mean_delay_s: delay,
            phase1_s: delay / 2.0,
            phase2_s: delay / 2.0,
            unservable: 0,
        }
    }

    #[test]
    fn aggregate_single_seed_has_zero_stderr() {
        let s = aggregate(&[row("1", 0, 3.0)]).unwrap();
        assert_eq!(s[0].stderr_s, 0.0);
        assert_eq!(s[0].mean_delay_s, 3.0);
    }

    #[test]
    fn aggregate_hand_computed_group() {
        // Values 1, 2, 6: mean 3, sample variance 7, stderr sqrt(7/3).
        let rows = [row("1", 0, 1.0), row("1", 1, 2.0), row("1", 2, 6.0), row("2", 0, 5.0)];
        let s = aggregate(&rows).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].sweep, "1");
        assert!((s[0].mean_delay_s - 3.0).abs() < 1e-15);
        assert!((s[0].stderr_s - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s[1].mean_delay_s, 5.0);
    }

    #[test]
    fn aggregate_constant_rows() {
        let rows: Vec<ResultRow> = (0..4).map(|s| row("x", s, 2.5)).collect();
        let s = aggregate(&rows).unwrap();
        assert_eq!(s[0].mean_delay_s, 2.5);
        assert_eq!(s[0].stderr_s, 0.0);
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert!(matches!(aggregate(&[]), Err(HarnessError::Empty)));
    }

    #[test]
    fn csv_header_order() {
        let text = to_csv(&[row("1", 0, 1.0)]).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "experiment,sweep,scheme,seed,mean_delay_s,phase1_s,phase2_s,unservable"
        );
    }

    #[test]
    fn config_field_errors() {
        let bad = r#"{"experiment": "delay-vs-max-isl", "sweep": [], "schemes": ["epm"]}"#;
        let err = ExperimentConfig::from_json(bad).unwrap().validate().unwrap_err();
        assert!(matches!(&err, HarnessError::Config { field, .. } if field == "sweep"));
        assert_eq!(err.exit_code(), 2);
        let bad = r#"{"experiment": "delay-vs-max-isl", "sweep": [1], "schemes": ["epm"], "seeds": 0}"#;
        let err = ExperimentConfig::from_json(bad).unwrap().validate().unwrap_err();
        assert!(matches!(&err, HarnessError::Config { field, .. } if field == "seeds"));
        let bad = r#"{"experiment": "delay-vs-requests-cached", "sweep": [1], "schemes": ["ao"]}"#;
        let err = ExperimentConfig::from_json(bad).unwrap().validate().unwrap_err();
        assert!(matches!(&err, HarnessError::Config { field, .. } if field == "schemes"));
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nope", "sweep": [1]}"#).is_err());
    }

    #[test]
    fn max_isl_adds_reference() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "delay-vs-max-isl", "sweep": [1], "schemes": ["epm", "ao"]}"#)
            .unwrap();
        assert_eq!(
            c.effective_schemes(),
            vec![Scheme::Epm, Scheme::Ao, Scheme::FullyConnected, Scheme::FullyConnectedRelay]
        );
    }

    #[test]
    fn gs_count_keeps_gateways() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "delay-vs-gs-count", "sweep": [2], "schemes": ["epm"]}"#)
            .unwrap();
        let spec = c.spec_for(2.0, None, Scheme::Epm);
        let gs = spec.ground_nodes.iter().filter(|g| g.role == GroundRole::Gs).count();
        let gw = spec.ground_nodes.iter().filter(|g| g.role == GroundRole::Gateway).count();
        assert_eq!((gs, gw), (2, 4));
    }

    #[test]
    fn paired_means_share_requests() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "delay-vs-max-isl", "sweep": [1, 3], "schemes": ["epm"], "seeds": 2, "slots": 2,
                "scenario": {"num_planes": 4, "sats_per_plane": 6}}"#,
        )
        .unwrap();
        let rows = paired_means(&c, &[Scheme::Epm, Scheme::FullyConnected]).unwrap();
        let order: Vec<(&str, &str, usize)> = rows.iter().map(|r| (r.scheme.as_str(), r.sweep.as_str(), r.seed)).collect();
        assert_eq!(
            order,
            vec![
                ("epm", "1", 0),
                ("epm", "1", 1),
                ("epm", "3", 0),
                ("epm", "3", 1),
                ("fully-connected", "1", 0),
                ("fully-connected", "1", 1),
                ("fully-connected", "3", 0),
                ("fully-connected", "3", 1),
            ]
        );
        for r in &rows {
            assert_eq!(r.files, rows[r.seed].files);
        }
        assert!(paired_means(&c, &[Scheme::Epm, Scheme::Ao]).is_err());
        assert!(paired_means(&c, &[]).is_err());
    }
}
