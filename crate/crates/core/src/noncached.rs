//! Delivery of files that only exist at ground stations.
//!
//! A requesting satellite that sees a GS downloads directly (case 1).
//! Otherwise it pulls shares of the file through GS-visible relay satellites
//! over two hops, GS → relay → requester (case 2). Each GS splits its band
//! among the relays it feeds. Relay selection and the band split are
//! optimized alternately: the selection with the exact-penalty solver of
//! [`crate::cached`], the split by successive convex approximation.
//!
//! For a fixed selection and split, the best download ratios are
//! proportional to each path's effective capacity 1/(1/C_isl + 1/C_g2s(ω)),
//! and the resulting common delay equals min over ρ̃ of
//! Σ_k ρ̃_k²·b·(1/C_isl,k + f2(ω_k)/W), with f2(ω) = 1/(ω·log2(1 + c/ω)).
//! The SCA step majorizes the product ρ̃²·f2(ω) in that sum.

use crate::cached::{self, CachedError, CachedInstance, CachedRequest, Candidate, EpmParams};
use crate::linkmodel::{g2s_rate, prop_delay, DelayBreakdown, LinkDelay, LinkError};
use crate::optcore::{minimize, Constraints, ConvexProblem, LinearRow, OptError};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::LOG2_E;
use thiserror::Error;

/// Smallest admissible bandwidth fraction.
pub const OMEGA_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonCachedError {
    #[error("request {request} is not GS-visible")]
    NotGsVisible { request: usize },
    #[error("relayed request {request} has no active path")]
    NoActivePath { request: usize },
    #[error("relay association failed at outer iteration {outer}: {source}")]
    Association { outer: usize, source: CachedError },
    #[error("bandwidth step failed at outer iteration {outer}, SCA step {step}: {source}")]
    Bandwidth { outer: usize, step: usize, source: OptError },
    #[error("invalid bandwidth allocation: {0}")]
    Omega(String),
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// A GS-visible satellite that can forward GS content over one ISL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelayNode {
    pub sat: usize,
    /// Index of the feeding GS.
    pub gs: usize,
    /// Full-band SNR constant c(g, s) of the G2S link.
    pub snr_const: f64,
    pub gs_distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelayLink {
    /// Index into [`NonCachedInstance::relays`].
    pub relay: usize,
    pub isl_capacity_bps: f64,
    pub isl_distance_m: f64,
}

/// Case 2: a requester without GS visibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelayRequest {
    pub requester: usize,
    pub bits: f64,
    pub links: Vec<RelayLink>,
}

/// Case 1: a requester that downloads directly from its GS.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectRequest {
    pub requester: usize,
    pub bits: f64,
    pub gs: usize,
    /// Full-band G2S capacity, 0 if the GS is not actually visible.
    pub capacity_bps: f64,
    pub gs_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonCachedInstance {
    pub relays: Vec<RelayNode>,
    pub relayed: Vec<RelayRequest>,
    pub direct: Vec<DirectRequest>,
    /// G2S band W, Hz.
    pub bandwidth_hz: f64,
    pub max_isl: usize,
    pub consumed: BTreeMap<usize, usize>,
}

impl NonCachedInstance {
    pub fn validate(&self) -> Result<(), NonCachedError> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(NonCachedError::Malformed("bandwidth must be positive".into()));
        }
        for (i, r) in self.relayed.iter().enumerate() {
            if !(r.bits >= 0.0) {
                return Err(NonCachedError::Malformed(format!("relayed request {i} has negative size")));
            }
            for l in &r.links {
                if l.relay >= self.relays.len() || !(l.isl_capacity_bps >= 0.0) {
                    return Err(NonCachedError::Malformed(format!("relayed request {i} has a bad link")));
                }
                if self.relays[l.relay].sat == r.requester {
                    return Err(NonCachedError::Malformed(format!("relayed request {i} relays through itself")));
                }
            }
        }
        for (k, n) in self.relays.iter().enumerate() {
            if !(n.snr_const >= 0.0) {
                return Err(NonCachedError::Malformed(format!("relay {k} has a negative SNR constant")));
            }
        }
        Ok(())
    }

    /// GS indices that feed at least one relay, with their relay indices.
    pub fn relays_by_gs(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, n) in self.relays.iter().enumerate() {
            m.entry(n.gs).or_default().push(k);
        }
        m
    }

    /// Equal split of each GS band over all of its candidate relays.
    pub fn equal_omega(&self) -> Vec<f64> {
        let by_gs = self.relays_by_gs();
        self.relays.iter().map(|n| 1.0 / by_gs[&n.gs].len() as f64).collect()
    }

    /// Equal split of each GS band over the relays used by `x`; unused
    /// relays sit at the floor.
    pub fn equal_omega_for(&self, x: &[Vec<bool>]) -> Vec<f64> {
        let used = self.used_relays(x);
        let mut count: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, n) in self.relays.iter().enumerate() {
            if used[k] {
                *count.entry(n.gs).or_insert(0) += 1;
            }
        }
        self.relays
            .iter()
            .enumerate()
            .map(|(k, n)| if used[k] { 1.0 / count[&n.gs] as f64 } else { OMEGA_FLOOR })
            .collect()
    }

    pub fn used_relays(&self, x: &[Vec<bool>]) -> Vec<bool> {
        let mut used = vec![false; self.relays.len()];
        for (req, row) in self.relayed.iter().zip(x) {
            for (l, &on) in req.links.iter().zip(row) {
                if on {
                    used[l.relay] = true;
                }
            }
        }
        used
    }

    pub fn check_omega(&self, omega: &[f64]) -> Result<(), NonCachedError> {
        if omega.len() != self.relays.len() {
            return Err(NonCachedError::Omega("one fraction per relay expected".into()));
        }
        if let Some(w) = omega.iter().find(|w| !(**w >= OMEGA_FLOOR * (1.0 - 1e-9) && **w <= 1.0 + 1e-9)) {
            return Err(NonCachedError::Omega(format!("fraction {w} outside [{OMEGA_FLOOR}, 1]")));
        }
        for (gs, ks) in self.relays_by_gs() {
            let total: f64 = ks.iter().map(|&k| omega[k]).sum();
            if total > 1.0 + 1e-9 {
                return Err(NonCachedError::Omega(format!("GS {gs} hands out {total} of its band")));
            }
        }
        Ok(())
    }

    /// G2S rate of relay `k` at fraction `omega`.
    pub fn g2s_capacity(&self, k: usize, omega: f64) -> f64 {
        g2s_rate(omega.clamp(0.0, 1.0), self.relays[k].snr_const, self.bandwidth_hz).unwrap_or(0.0)
    }

    /// Effective capacity of the two-hop path through `link` at `omega`.
    pub fn path_capacity(&self, link: &RelayLink, omega: f64) -> f64 {
        let g = self.g2s_capacity(link.relay, omega);
        if g <= 0.0 || link.isl_capacity_bps <= 0.0 {
            return 0.0;
        }
        1.0 / (1.0 / link.isl_capacity_bps + 1.0 / g)
    }

    /// The relay choice as a cached-style association problem over the
    /// effective path capacities at `omega`.
    pub fn association_instance(&self, omega: &[f64]) -> CachedInstance {
        CachedInstance {
            requests: self
                .relayed
                .iter()
                .map(|r| CachedRequest {
                    requester: r.requester,
                    bits: r.bits,
                    candidates: r
                        .links
                        .iter()
                        .map(|l| Candidate {
                            sat: self.relays[l.relay].sat,
                            capacity_bps: self.path_capacity(l, omega[l.relay]),
                            distance_m: l.isl_distance_m,
                        })
                        .collect(),
                    gs_capacity_bps: 0.0,
                    gs_distance_m: 0.0,
                })
                .collect(),
            max_isl: self.max_isl,
            consumed: self.consumed.clone(),
        }
    }
}

/// Transmission delay of a case-1 file plus its breakdown with the final hop.
pub fn case1_delay(req: &DirectRequest, s2a_delay_s: f64) -> Result<DelayBreakdown, NonCachedError> {
    if !(req.capacity_bps > 0.0) {
        return Err(NonCachedError::NotGsVisible { request: req.requester });
    }
    Ok(DelayBreakdown::new(
        vec![LinkDelay {
            transmission: req.bits / req.capacity_bps,
            propagation: prop_delay(req.gs_distance_m),
        }],
        s2a_delay_s,
    ))
}

/// Two-hop delay of share `rho` of a `bits`-bit file through one relay path:
/// GS → relay at fraction `omega`, then relay → requester over the ISL.
pub fn relay_delay(
    rho: f64,
    omega: f64,
    bits: f64,
    link: &RelayLink,
    relay: &RelayNode,
    bandwidth_hz: f64,
) -> Result<f64, NonCachedError> {
    let prop = prop_delay(relay.gs_distance_m) + prop_delay(link.isl_distance_m);
    if rho == 0.0 {
        return Ok(prop);
    }
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(NonCachedError::Omega(format!("fraction {omega} outside (0, 1]")));
    }
    let g = g2s_rate(omega, relay.snr_const, bandwidth_hz)?;
    if !(g > 0.0) || !(link.isl_capacity_bps > 0.0) {
        return Err(LinkError::ZeroCapacity(rho).into());
    }
    Ok(rho * bits * (1.0 / g + 1.0 / link.isl_capacity_bps) + prop)
}

/// Harmonic ratios for fixed selection and split, with each relayed
/// request's common transmission delay.
pub fn optimal_relay_ratios(
    x: &[Vec<bool>],
    omega: &[f64],
    inst: &NonCachedInstance,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), NonCachedError> {
    let mut ratios = Vec::with_capacity(inst.relayed.len());
    let mut delays = Vec::with_capacity(inst.relayed.len());
    for (j, (req, row)) in inst.relayed.iter().zip(x).enumerate() {
        let caps: Vec<f64> = req
            .links
            .iter()
            .zip(row)
            .map(|(l, &on)| if on { inst.path_capacity(l, omega[l.relay]) } else { 0.0 })
            .collect();
        let total: f64 = caps.iter().sum();
        if !(total > 0.0) {
            return Err(NonCachedError::NoActivePath { request: j });
        }
        ratios.push(caps.iter().map(|c| c / total).collect());
        delays.push(req.bits / total);
    }
    Ok((ratios, delays))
}

/// Sum of harmonic delays over relayed requests; infinite if one has no
/// active path.
pub fn relayed_objective(x: &[Vec<bool>], omega: &[f64], inst: &NonCachedInstance) -> f64 {
    inst.relayed
        .iter()
        .zip(x)
        .map(|(req, row)| {
            let total: f64 = req
                .links
                .iter()
                .zip(row)
                .filter(|(_, &on)| on)
                .map(|(l, _)| inst.path_capacity(l, omega[l.relay]))
                .sum();
            if total > 0.0 {
                req.bits / total
            } else if req.bits == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// f2(ω) = 1/(ω·log2(1 + c/ω)).
pub fn f2(omega: f64, c: f64) -> f64 {
    1.0 / (omega * (c / omega).ln_1p() * LOG2_E)
}

/// df2/dω.
pub fn f2_prime(omega: f64, c: f64) -> f64 {
    let l = (c / omega).ln_1p() * LOG2_E;
    let f = f2(omega, c);
    -f * f * (l - LOG2_E * c / (omega + c))
}

/// The product f(ρ̃, ω) = ρ̃^p·f2(ω) that the SCA step majorizes.
pub fn sca_product(rho: f64, omega: f64, c: f64, p: i32) -> f64 {
    rho.powi(p) * f2(omega, c)
}

/// Convex majorizer of ρ̃^p·f2(ω) tangent at (ρ̃₀, ω₀), from the identity
/// f1·f2 = ½(f1 + f2)² − ½(f1² + f2²) with the subtracted convex part
/// replaced by its linearization. `p` is 1 or 2.
pub fn sca_upper_bound(rho: f64, omega: f64, rho0: f64, omega0: f64, c: f64, p: i32) -> f64 {
    let f1 = rho.powi(p);
    let g = f2(omega, c);
    let f1_0 = rho0.powi(p);
    let g0 = f2(omega0, c);
    let d_f1sq = 2.0 * p as f64 * rho0.powi(2 * p - 1);
    let d_f2sq = 2.0 * g0 * f2_prime(omega0, c);
    0.5 * (f1 + g).powi(2) - 0.5 * (f1_0 * f1_0 + d_f1sq * (rho - rho0) + g0 * g0 + d_f2sq * (omega - omega0))
}

/// Gradient of [`sca_upper_bound`] in (ρ̃, ω).
pub fn sca_upper_bound_grad(rho: f64, omega: f64, rho0: f64, omega0: f64, c: f64, p: i32) -> (f64, f64) {
    let f1 = rho.powi(p);
    let g = f2(omega, c);
    let g0 = f2(omega0, c);
    let df1 = p as f64 * rho.powi(p - 1);
    let d_rho = (f1 + g) * df1 - p as f64 * rho0.powi(2 * p - 1);
    let d_omega = (f1 + g) * f2_prime(omega, c) - g0 * f2_prime(omega0, c);
    (d_rho, d_omega)
}

/// Q(ρ̃, ω) = Σ_j b_j Σ_k ρ̃_jk²·(1/C_isl,k + f2(ω_k)/W) over active paths.
pub fn quadratic_objective(x: &[Vec<bool>], ratios: &[Vec<f64>], omega: &[f64], inst: &NonCachedInstance) -> f64 {
    let mut q = 0.0;
    for ((req, row), rho) in inst.relayed.iter().zip(x).zip(ratios) {
        for ((l, &on), &r) in req.links.iter().zip(row).zip(rho) {
            if on {
                let c = inst.relays[l.relay].snr_const;
                q += req.bits * r * r * (1.0 / l.isl_capacity_bps + f2(omega[l.relay], c) / inst.bandwidth_hz);
            }
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoParams {
    pub epm: EpmParams,
    /// Relative objective decrease below which loops stop.
    pub xi: f64,
    pub max_outer: usize,
    pub max_sca: usize,
}

impl Default for AoParams {
    fn default() -> Self {
        Self {
            epm: EpmParams::default(),
            xi: 1e-5,
            max_outer: 30,
            max_sca: 50,
        }
    }
}

/// One convex surrogate step for fixed `x`, expanded at (`ratios`, `omega`).
/// Returns the surrogate minimizer.
pub fn solve_bandwidth_subproblem(
    x: &[Vec<bool>],
    ratios: &[Vec<f64>],
    omega: &[f64],
    inst: &NonCachedInstance,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), OptError> {
    // Layout: one ρ̃ per active path, then one ω per relay.
    let mut paths: Vec<(usize, usize)> = Vec::new();
    for (j, row) in x.iter().enumerate() {
        for (k, &on) in row.iter().enumerate() {
            if on {
                paths.push((j, k));
            }
        }
    }
    let np = paths.len();
    let nr = inst.relays.len();
    let used = inst.used_relays(x);
    let mut lower = vec![0.0; np + nr];
    let mut upper = vec![1.0; np + nr];
    let mut start = Vec::with_capacity(np + nr);
    for &(j, k) in &paths {
        start.push(ratios[j][k]);
    }
    for k in 0..nr {
        if used[k] {
            lower[np + k] = OMEGA_FLOOR;
            start.push(omega[k].max(OMEGA_FLOOR));
        } else {
            lower[np + k] = OMEGA_FLOOR;
            upper[np + k] = OMEGA_FLOOR;
            start.push(OMEGA_FLOOR);
        }
    }
    let mut rows = Vec::new();
    for j in 0..inst.relayed.len() {
        let vars: Vec<(usize, f64)> = paths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.0 == j)
            .map(|(i, _)| (i, 1.0))
            .collect();
        if !vars.is_empty() {
            rows.push(LinearRow::eq(vars, 1.0));
        }
    }
    for ks in inst.relays_by_gs().values() {
        rows.push(LinearRow::le(ks.iter().map(|&k| (np + k, 1.0)).collect(), 1.0));
    }
    let constraints = Constraints { lower, upper, rows };
    let start = constraints.project(&start, 1e-9)?;

    let w = inst.bandwidth_hz;
    let coef: Vec<(f64, f64, f64, usize)> = paths
        .iter()
        .map(|&(j, k)| {
            let req = &inst.relayed[j];
            let l = &req.links[k];
            (req.bits, 1.0 / l.isl_capacity_bps, inst.relays[l.relay].snr_const, l.relay)
        })
        .collect();
    let rho0: Vec<f64> = start[..np].to_vec();
    let omega0: Vec<f64> = start[np..].to_vec();
    let surrogate = |z: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut value = 0.0;
        for (i, &(bits, inv_isl, c, k)) in coef.iter().enumerate() {
            let (r, om) = (z[i], z[np + k]);
            let fb = sca_upper_bound(r, om, rho0[i], omega0[k], c, 2);
            let (gr, go) = sca_upper_bound_grad(r, om, rho0[i], omega0[k], c, 2);
            value += bits * (r * r * inv_isl + fb / w);
            g[i] += bits * (2.0 * r * inv_isl + gr / w);
            g[np + k] += bits * go / w;
        }
        value
    };
    // Scale to order one so the optimality tolerance is meaningful.
    let mut g0 = vec![0.0; np + nr];
    let scale = surrogate(&start, &mut g0).abs().max(1e-300);
    let scaled = |z: &[f64], g: &mut [f64]| -> f64 {
        let v = surrogate(z, g);
        g.iter_mut().for_each(|x| *x /= scale);
        v / scale
    };
    let problem = ConvexProblem::new(scaled, constraints);
    // An inexact surrogate minimizer is still usable: the caller keeps the
    // step only if the true objective does not increase.
    let z = match minimize(&problem, &start) {
        Ok(sol) => sol.x,
        Err(OptError::IterationLimit { residual, last, .. }) => {
            log::debug!("bandwidth step stopped at the iteration cap, residual {residual:e}");
            last
        }
        Err(e) => return Err(e),
    };
    let mut new_ratios: Vec<Vec<f64>> = x.iter().map(|row| vec![0.0; row.len()]).collect();
    for (i, &(j, k)) in paths.iter().enumerate() {
        new_ratios[j][k] = z[i];
    }
    Ok((new_ratios, z[np..].to_vec()))
}

/// Outcome of the SCA loop for a fixed selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthResult {
    pub ratios: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub objective: f64,
    pub steps: usize,
}

/// Repeated SCA steps with harmonic ratio refresh until the relative
/// decrease falls below `xi`, or `max_steps`.
pub fn optimize_bandwidth(
    x: &[Vec<bool>],
    omega_start: &[f64],
    inst: &NonCachedInstance,
    xi: f64,
    max_steps: usize,
) -> Result<BandwidthResult, (usize, OptError)> {
    let mut omega = omega_start.to_vec();
    let (mut ratios, _) = match optimal_relay_ratios(x, &omega, inst) {
        Ok(r) => r,
        Err(_) => {
            return Ok(BandwidthResult {
                ratios: x.iter().map(|r| vec![0.0; r.len()]).collect(),
                omega,
                objective: relayed_objective(x, omega_start, inst),
                steps: 0,
            })
        }
    };
    let mut obj = relayed_objective(x, &omega, inst);
    let mut steps = 0;
    while steps < max_steps {
        let (_, new_omega) = solve_bandwidth_subproblem(x, &ratios, &omega, inst).map_err(|e| (steps, e))?;
        steps += 1;
        let new_obj = relayed_objective(x, &new_omega, inst);
        if !(new_obj <= obj) {
            break;
        }
        let decrease = obj - new_obj;
        omega = new_omega;
        ratios = optimal_relay_ratios(x, &omega, inst).map_err(|_| (steps, OptError::NonFiniteStart))?.0;
        obj = new_obj;
        if decrease <= xi * obj {
            break;
        }
    }
    Ok(BandwidthResult {
        ratios,
        omega,
        objective: obj,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AoTraceRow {
    pub outer: usize,
    /// Sum of relayed-request transmission delays, seconds.
    pub objective: f64,
    pub sca_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonCachedSolution {
    /// Relay selection per relayed request.
    pub x: Vec<Vec<bool>>,
    pub ratios: Vec<Vec<f64>>,
    /// Band fraction per relay node.
    pub omega: Vec<f64>,
    /// Transmission delay per relayed request; infinite if it has no path.
    pub relayed_delays: Vec<f64>,
    /// Transmission delay per direct request; infinite if not GS-visible.
    pub direct_delays: Vec<f64>,
    /// Sum of all finite and infinite delays above.
    pub objective: f64,
    pub trace: Vec<AoTraceRow>,
}

/// Finish a solution for fixed `x` and `omega` with harmonic ratios.
pub fn solution_for(inst: &NonCachedInstance, x: Vec<Vec<bool>>, omega: Vec<f64>, trace: Vec<AoTraceRow>) -> NonCachedSolution {
    let mut ratios = Vec::with_capacity(x.len());
    let mut relayed_delays = Vec::with_capacity(x.len());
    for (req, row) in inst.relayed.iter().zip(&x) {
        let caps: Vec<f64> = req
            .links
            .iter()
            .zip(row)
            .map(|(l, &on)| if on { inst.path_capacity(l, omega[l.relay]) } else { 0.0 })
            .collect();
        let total: f64 = caps.iter().sum();
        if total > 0.0 {
            ratios.push(caps.iter().map(|c| c / total).collect());
            relayed_delays.push(req.bits / total);
        } else {
            ratios.push(vec![0.0; caps.len()]);
            relayed_delays.push(if req.bits == 0.0 { 0.0 } else { f64::INFINITY });
        }
    }
    let direct_delays: Vec<f64> = inst
        .direct
        .iter()
        .map(|d| if d.capacity_bps > 0.0 { d.bits / d.capacity_bps } else { f64::INFINITY })
        .collect();
    let objective = relayed_delays.iter().chain(&direct_delays).sum();
    NonCachedSolution {
        x,
        ratios,
        omega,
        relayed_delays,
        direct_delays,
        objective,
        trace,
    }
}

/// Alternating relay association and bandwidth allocation.
///
/// Each outer round re-associates with the exact-penalty solver using path
/// capacities at the current split (relays outside the selection are valued
/// at their share of `omega0`), then re-optimizes the split for the new
/// selection. A round is kept only if it lowers the objective, so the trace
/// never increases.
pub fn ao_solve(inst: &NonCachedInstance, omega0: &[f64], params: &AoParams) -> Result<NonCachedSolution, NonCachedError> {
    inst.validate()?;
    inst.check_omega(omega0)?;
    let mut trace = Vec::new();
    if inst.relayed.is_empty() {
        return Ok(solution_for(inst, Vec::new(), omega0.to_vec(), trace));
    }

    let assoc = |omega: &[f64], outer: usize| -> Result<Vec<Vec<bool>>, NonCachedError> {
        cached::epm_associate(&inst.association_instance(omega), &params.epm)
            .map(|s| s.x)
            .map_err(|source| NonCachedError::Association { outer, source })
    };
    let bandwidth = |x: &[Vec<bool>], outer: usize| -> Result<BandwidthResult, NonCachedError> {
        optimize_bandwidth(x, &inst.equal_omega_for(x), inst, params.xi, params.max_sca)
            .map_err(|(step, source)| NonCachedError::Bandwidth { outer, step, source })
    };

    let mut x = assoc(omega0, 0)?;
    let mut best = bandwidth(&x, 0)?;
    trace.push(AoTraceRow {
        outer: 0,
        objective: best.objective,
        sca_steps: best.steps,
    });
    for outer in 1..params.max_outer {
        let used = inst.used_relays(&x);
        let eval: Vec<f64> = (0..inst.relays.len())
            .map(|k| if used[k] { best.omega[k] } else { omega0[k] })
            .collect();
        let candidate = assoc(&eval, outer)?;
        if candidate == x {
            break;
        }
        let result = bandwidth(&candidate, outer)?;
        if !(result.objective < best.objective * (1.0 - params.xi)) {
            break;
        }
        x = candidate;
        best = result;
        trace.push(AoTraceRow {
            outer,
            objective: best.objective,
            sca_steps: best.steps,
        });
    }
    Ok(solution_for(inst, x, best.omega, trace))
}
