//! Delivery of cached files: each requesting satellite pulls shares of the
//! file over laser ISLs from neighbors holding it, plus at most one G2S link.
//!
//! With the download ratios at their closed-form optimum the problem reduces
//! to a binary program over the ISL choice. The binary constraint is replaced
//! by the inner-product equality ⟨π, v⟩ = S² on π = 2x − 1, which is handled
//! with an increasing exact penalty (the EPM loop in [`epm_associate`]).

use crate::optcore::{minimize, Constraints, ConvexProblem, LinearRow, OptError};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CachedError {
    #[error("request {request} has no usable link")]
    Unservable { request: usize },
    #[error("invalid EPM parameter `{field}`: {value}")]
    Param { field: &'static str, value: f64 },
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("pi-subproblem failed at EPM iteration {iteration}: {source}")]
    Subproblem { iteration: usize, source: OptError },
}

/// A neighbor holding the requested file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub sat: usize,
    pub capacity_bps: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CachedRequest {
    /// Satellite serving the requesting aircraft.
    pub requester: usize,
    /// File size in bits, b_f·R_p.
    pub bits: f64,
    pub candidates: Vec<Candidate>,
    /// Full-band G2S capacity, 0 when no GS is visible.
    pub gs_capacity_bps: f64,
    pub gs_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CachedInstance {
    pub requests: Vec<CachedRequest>,
    pub max_isl: usize,
    /// ISLs already committed per satellite earlier in the slot.
    pub consumed: BTreeMap<usize, usize>,
}

impl CachedInstance {
    pub fn budget(&self, sat: usize) -> usize {
        self.max_isl.saturating_sub(self.consumed.get(&sat).copied().unwrap_or(0))
    }

    pub fn num_pairs(&self) -> usize {
        self.requests.iter().map(|r| r.candidates.len()).sum()
    }

    /// Flat index of every (request, candidate) pair.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.requests
            .iter()
            .enumerate()
            .flat_map(|(r, req)| (0..req.candidates.len()).map(move |k| (r, k)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), CachedError> {
        for (i, r) in self.requests.iter().enumerate() {
            let ok = |v: f64| v >= 0.0 && v.is_finite();
            if !(r.bits >= 0.0 && r.bits.is_finite()) || !ok(r.gs_capacity_bps) {
                return Err(CachedError::Malformed(format!("request {i} has invalid size or GS capacity")));
            }
            if r.candidates.iter().any(|c| !ok(c.capacity_bps) || c.sat == r.requester) {
                return Err(CachedError::Malformed(format!("request {i} has an invalid candidate")));
            }
        }
        Ok(())
    }

    /// Per-satellite count of selected ISLs under `x`.
    pub fn degrees(&self, x: &[Vec<bool>]) -> BTreeMap<usize, usize> {
        let mut deg = BTreeMap::new();
        for (req, row) in self.requests.iter().zip(x) {
            for (c, &on) in req.candidates.iter().zip(row) {
                if on {
                    *deg.entry(req.requester).or_insert(0) += 1;
                    *deg.entry(c.sat).or_insert(0) += 1;
                }
            }
        }
        deg
    }

    pub fn is_feasible(&self, x: &[Vec<bool>]) -> bool {
        x.len() == self.requests.len()
            && x.iter().zip(&self.requests).all(|(row, r)| row.len() == r.candidates.len())
            && self.degrees(x).iter().all(|(&s, &d)| d <= self.budget(s))
    }

    /// Whether request `r` can be served by some selection.
    pub fn servable(&self, r: usize) -> bool {
        let req = &self.requests[r];
        req.gs_capacity_bps > 0.0
            || (self.budget(req.requester) > 0
                && req.candidates.iter().any(|c| c.capacity_bps > 0.0 && self.budget(c.sat) > 0))
    }
}

/// Download ratios of one request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ratios {
    pub isl: Vec<f64>,
    pub gs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpmTraceRow {
    pub iteration: usize,
    /// P2 objective at the relaxed π, seconds.
    pub objective: f64,
    /// S² − ⟨π, v⟩.
    pub residual: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationSolution {
    pub x: Vec<Vec<bool>>,
    pub ratios: Vec<Ratios>,
    /// Phase-1 transmission delay per request; infinite if unservable.
    pub delays: Vec<f64>,
    /// Sum of `delays`.
    pub objective: f64,
    pub trace: Vec<EpmTraceRow>,
    /// The penalty loop stopped at its iteration cap before the residual met
    /// the threshold; `x` is then a repaired rounding.
    pub hit_iteration_cap: bool,
}

/// Transmission-only P2 objective of one request under `x`.
pub fn request_delay(req: &CachedRequest, x: &[bool]) -> f64 {
    let total: f64 = req
        .candidates
        .iter()
        .zip(x)
        .filter(|(_, &on)| on)
        .map(|(c, _)| c.capacity_bps)
        .sum::<f64>()
        + req.gs_capacity_bps;
    if total > 0.0 {
        req.bits / total
    } else if req.bits == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Σ over requests of [`request_delay`].
pub fn p2_objective(inst: &CachedInstance, x: &[Vec<bool>]) -> f64 {
    inst.requests.iter().zip(x).map(|(r, row)| request_delay(r, row)).sum()
}

/// Ratios proportional to capacity over the established links, which make
/// every active link finish at the same time.
pub fn optimal_ratios(x: &[Vec<bool>], inst: &CachedInstance) -> Result<(Vec<Ratios>, Vec<f64>), CachedError> {
    let mut ratios = Vec::with_capacity(inst.requests.len());
    let mut delays = Vec::with_capacity(inst.requests.len());
    for (r, (req, row)) in inst.requests.iter().zip(x).enumerate() {
        let total: f64 = req
            .candidates
            .iter()
            .zip(row)
            .filter(|(_, &on)| on)
            .map(|(c, _)| c.capacity_bps)
            .sum::<f64>()
            + req.gs_capacity_bps;
        if !(total > 0.0) {
            return Err(CachedError::Unservable { request: r });
        }
        ratios.push(Ratios {
            isl: req
                .candidates
                .iter()
                .zip(row)
                .map(|(c, &on)| if on { c.capacity_bps / total } else { 0.0 })
                .collect(),
            gs: req.gs_capacity_bps / total,
        });
        delays.push(req.bits / total);
    }
    Ok((ratios, delays))
}

/// Max-form phase-1 transmission delay of one request for arbitrary ratios.
pub fn max_form_delay(req: &CachedRequest, x: &[bool], ratios: &Ratios) -> f64 {
    let mut worst: f64 = 0.0;
    for ((c, &on), &rho) in req.candidates.iter().zip(x).zip(&ratios.isl) {
        if on && rho > 0.0 {
            worst = worst.max(rho * req.bits / c.capacity_bps);
        }
    }
    if ratios.gs > 0.0 {
        worst = worst.max(ratios.gs * req.bits / req.gs_capacity_bps);
    }
    worst
}

/// Assemble a solution record from a binary selection.
pub fn solution_from_x(inst: &CachedInstance, x: Vec<Vec<bool>>) -> AssociationSolution {
    let mut ratios = Vec::with_capacity(inst.requests.len());
    let mut delays = Vec::with_capacity(inst.requests.len());
    for (req, row) in inst.requests.iter().zip(&x) {
        let single = CachedInstance {
            requests: vec![req.clone()],
            max_isl: inst.max_isl,
            consumed: BTreeMap::new(),
        };
        match optimal_ratios(std::slice::from_ref(row), &single) {
            Ok((mut r, d)) => {
                ratios.push(r.remove(0));
                delays.push(d[0]);
            }
            Err(_) => {
                ratios.push(Ratios {
                    isl: vec![0.0; row.len()],
                    gs: 0.0,
                });
                delays.push(if req.bits == 0.0 { 0.0 } else { f64::INFINITY });
            }
        }
    }
    let objective = delays.iter().sum();
    AssociationSolution {
        x,
        ratios,
        delays,
        objective,
        trace: Vec::new(),
        hit_iteration_cap: false,
    }
}

/// Drop the lowest-capacity selected links at over-budget satellites until
/// the selection is feasible.
pub fn repair(inst: &CachedInstance, x: &mut [Vec<bool>]) {
    loop {
        let deg = inst.degrees(x);
        let over: Vec<usize> = deg
            .iter()
            .filter(|(&s, &d)| d > inst.budget(s))
            .map(|(&s, _)| s)
            .collect();
        if over.is_empty() {
            return;
        }
        let mut worst: Option<(f64, usize, usize)> = None;
        for (r, req) in inst.requests.iter().enumerate() {
            for (k, c) in req.candidates.iter().enumerate() {
                if x[r][k] && (over.contains(&req.requester) || over.contains(&c.sat)) {
                    let better = match worst {
                        None => true,
                        Some((cap, _, _)) => c.capacity_bps < cap,
                    };
                    if better {
                        worst = Some((c.capacity_bps, r, k));
                    }
                }
            }
        }
        let (_, r, k) = worst.expect("an over-budget satellite has a selected link");
        x[r][k] = false;
    }
}

/// Give every request without a GS link its strongest candidate that still
/// fits the budgets, so a rounding never leaves a servable request stranded.
/// When every candidate is blocked by a full satellite, take the slot from a
/// request that keeps another way down, choosing the cheapest such swap.
pub fn fill_empty(inst: &CachedInstance, x: &mut [Vec<bool>]) {
    for r in 0..inst.requests.len() {
        let req = &inst.requests[r];
        if req.gs_capacity_bps > 0.0 || x[r].iter().any(|&on| on) {
            continue;
        }
        let deg = inst.degrees(x);
        let free = |s: usize| deg.get(&s).copied().unwrap_or(0) < inst.budget(s);
        let usable = |c: &Candidate| c.capacity_bps > 0.0 && inst.budget(c.sat) > 0;
        if free(req.requester) {
            let best = req
                .candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| usable(c) && free(c.sat))
                .max_by(|a, b| a.1.capacity_bps.total_cmp(&b.1.capacity_bps));
            if let Some((k, _)) = best {
                x[r][k] = true;
                continue;
            }
        }
        if inst.budget(req.requester) == 0 {
            continue;
        }
        let mut best: Option<(f64, usize, Vec<(usize, usize)>)> = None;
        for (k, c) in req.candidates.iter().enumerate().filter(|(_, c)| usable(c)) {
            let mut drops: Vec<(usize, usize)> = Vec::new();
            let mut cost = req.bits / c.capacity_bps;
            let mut ok = true;
            for s in [req.requester, c.sat] {
                if free(s) || drops.iter().any(|&(r2, k2)| touches(inst, r2, k2, s)) {
                    continue;
                }
                match cheapest_drop(inst, x, s, &drops) {
                    Some((extra, r2, k2)) => {
                        cost += extra;
                        drops.push((r2, k2));
                    }
                    None => ok = false,
                }
            }
            if ok && best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, k, drops));
            }
        }
        if let Some((_, k, drops)) = best {
            for (r2, k2) in drops {
                x[r2][k2] = false;
            }
            x[r][k] = true;
        }
    }
}

fn touches(inst: &CachedInstance, r: usize, k: usize, s: usize) -> bool {
    inst.requests[r].requester == s || inst.requests[r].candidates[k].sat == s
}

/// The selected link at `s` whose removal raises total delay least, among
/// links whose request still has another link or a GS afterwards.
fn cheapest_drop(inst: &CachedInstance, x: &[Vec<bool>], s: usize, taken: &[(usize, usize)]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for (r, req) in inst.requests.iter().enumerate() {
        let rate = |skip: &[(usize, usize)]| -> f64 {
            req.gs_capacity_bps
                + req
                    .candidates
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| x[r][k] && !skip.contains(&(r, k)))
                    .map(|(_, c)| c.capacity_bps)
                    .sum::<f64>()
        };
        let before = rate(taken);
        for k in 0..req.candidates.len() {
            if !x[r][k] || taken.contains(&(r, k)) || !touches(inst, r, k, s) {
                continue;
            }
            let after = before - req.candidates[k].capacity_bps;
            if after <= 0.0 {
                continue;
            }
            let extra = req.bits / after - req.bits / before;
            if best.is_none_or(|b| extra < b.0) {
                best = Some((extra, r, k));
            }
        }
    }
    best
}

/// S·π/‖π‖₂, the maximizer of ⟨π, v⟩ over the ball ‖v‖₂ ≤ S; 0 when π = 0.
pub fn update_v(pi: &[f64], s: f64) -> Vec<f64> {
    let n = pi.iter().map(|p| p * p).sum::<f64>().sqrt();
    if n == 0.0 {
        return vec![0.0; pi.len()];
    }
    pi.iter().map(|p| s * p / n).collect()
}

/// Membership of (u, v) in {⟨u, v⟩ = mn, −1 ≤ u ≤ 1, ‖v‖² ≤ mn}, with a
/// small absolute tolerance on each condition.
pub fn theorem1_check(u: &[f64], v: &[f64], m: usize, n: usize) -> bool {
    const TOL: f64 = 1e-9;
    let mn = (m * n) as f64;
    if u.len() != m * n || v.len() != m * n {
        return false;
    }
    let inner: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let vv: f64 = v.iter().map(|b| b * b).sum();
    (inner - mn).abs() <= TOL && u.iter().all(|a| a.abs() <= 1.0 + TOL) && vv <= mn + TOL
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpmParams {
    pub eps0: f64,
    pub delta: f64,
    pub xi: f64,
    pub max_iter: usize,
}

impl Default for EpmParams {
    fn default() -> Self {
        Self {
            eps0: 1e-4,
            delta: 5.0,
            xi: 1e-5,
            max_iter: 60,
        }
    }
}

impl EpmParams {
    pub fn validate(&self) -> Result<(), CachedError> {
        if !(self.eps0 > 0.0) {
            return Err(CachedError::Param {
                field: "eps0",
                value: self.eps0,
            });
        }
        if !(self.delta > 1.0) {
            return Err(CachedError::Param {
                field: "delta",
                value: self.delta,
            });
        }
        if !(self.xi > 0.0) {
            return Err(CachedError::Param {
                field: "xi",
                value: self.xi,
            });
        }
        Ok(())
    }
}

const OPT_TOL_NOMINAL: f64 = 1e-6;

const START_JITTER: f64 = 1e-3;

/// The π-subproblem data: flattened variables, degree rows and the
/// objective scale.
pub struct PiProblem<'a> {
    inst: &'a CachedInstance,
    pub pairs: Vec<(usize, usize)>,
    constraints: Constraints,
    /// Strictly feasible interior point.
    pub start: Vec<f64>,
    /// F at `start`; the relaxed objective is divided by it so that the
    /// penalty weight is dimensionless.
    pub scale: f64,
}

impl<'a> PiProblem<'a> {
    pub fn new(inst: &'a CachedInstance) -> Self {
        let pairs = inst.pairs();
        let n = pairs.len();
        let mut by_sat: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let lower = vec![-1.0; n];
        let mut upper = vec![1.0; n];
        for (i, &(r, k)) in pairs.iter().enumerate() {
            let req = &inst.requests[r];
            let c = &req.candidates[k];
            if inst.budget(req.requester) == 0 || inst.budget(c.sat) == 0 || c.capacity_bps <= 0.0 {
                upper[i] = -1.0;
                continue;
            }
            by_sat.entry(req.requester).or_default().push(i);
            by_sat.entry(c.sat).or_default().push(i);
        }
        // Σ (π + 1)/2 ≤ budget  ⇔  Σ π ≤ 2·budget − count.
        let mut rows = Vec::new();
        let mut start_x = vec![1.0f64; n];
        for (&s, vars) in &by_sat {
            let budget = inst.budget(s) as f64;
            let count = vars.len() as f64;
            if count <= budget {
                continue;
            }
            for &i in vars {
                start_x[i] = start_x[i].min(budget / count);
            }
            rows.push(LinearRow::le(
                vars.iter().map(|&i| (i, 1.0)).collect(),
                2.0 * budget - count,
            ));
        }
        // A slight per-pair shrink keeps the start feasible and breaks exact
        // ties between equal-capacity links, which the penalty cannot.
        let start: Vec<f64> = (0..n)
            .map(|i| {
                if upper[i] == -1.0 {
                    -1.0
                } else {
                    2.0 * start_x[i] * (1.0 - START_JITTER * (i + 1) as f64 / n as f64) - 1.0
                }
            })
            .collect();
        let mut p = Self {
            inst,
            pairs,
            constraints: Constraints { lower, upper, rows },
            start,
            scale: 1.0,
        };
        let f0 = p.relaxed_objective(&p.start.clone());
        p.scale = if f0.is_finite() && f0 > 0.0 { f0 } else { 1.0 };
        p
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn denominators(&self, pi: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = self.inst.requests.iter().map(|r| r.gs_capacity_bps).collect();
        for (&(r, k), &p) in self.pairs.iter().zip(pi) {
            d[r] += 0.5 * (p + 1.0) * self.inst.requests[r].candidates[k].capacity_bps;
        }
        d
    }

    /// F(π) in seconds, summed over servable requests.
    pub fn relaxed_objective(&self, pi: &[f64]) -> f64 {
        let d = self.denominators(pi);
        self.inst
            .requests
            .iter()
            .zip(&d)
            .enumerate()
            .filter(|(r, _)| self.inst.servable(*r))
            .map(|(_, (req, &den))| req.bits / den)
            .sum()
    }

    /// Minimize F(π)/scale − ε⟨π, v⟩ from `start`.
    pub fn solve(&self, v: &[f64], eps: f64, start: &[f64]) -> Result<Vec<f64>, OptError> {
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        let servable: Vec<bool> = (0..self.inst.requests.len()).map(|r| self.inst.servable(r)).collect();
        // Same minimizer; keeps gradients of order one as ε grows, which the
        // projected-gradient tolerances assume.
        let norm = 1.0 + eps * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let objective = |pi: &[f64], g: &mut [f64]| -> f64 {
            let d = self.denominators(pi);
            let mut value = 0.0;
            for (r, req) in self.inst.requests.iter().enumerate() {
                if servable[r] {
                    value += req.bits / d[r];
                }
            }
            value /= self.scale;
            for (i, &(r, k)) in self.pairs.iter().enumerate() {
                let req = &self.inst.requests[r];
                g[i] = if servable[r] {
                    -0.5 * req.bits * req.candidates[k].capacity_bps / (d[r] * d[r] * self.scale)
                } else {
                    0.0
                };
                g[i] -= eps * v[i];
                g[i] /= norm;
                value -= eps * v[i] * pi[i];
            }
            value / norm
        };
        let mut problem = ConvexProblem::new(objective, self.constraints.clone());
        problem.opt_tol = (OPT_TOL_NOMINAL / norm).max(1e-13);
        let start = if self.constraints.violation(start) <= problem.feas_tol {
            start.to_vec()
        } else {
            self.constraints.project(start, problem.feas_tol)?
        };
        match minimize(&problem, &start) {
            Ok(m) => Ok(m.x),
            // The tightened tolerance can be out of reach on degenerate
            // faces; a point meeting the nominal one is still usable.
            Err(OptError::IterationLimit { residual, last, .. }) if residual <= OPT_TOL_NOMINAL => Ok(last),
            Err(e) => Err(e),
        }
    }

    pub fn to_x(&self, pi: &[f64]) -> Vec<Vec<bool>> {
        let mut x: Vec<Vec<bool>> = self.inst.requests.iter().map(|r| vec![false; r.candidates.len()]).collect();
        for (&(r, k), &p) in self.pairs.iter().zip(pi) {
            // Ties at 0 go to "no link".
            x[r][k] = p > 0.0;
        }
        x
    }
}

/// The π-subproblem for fixed v and ε, started from the interior point.
pub fn solve_pi_subproblem(inst: &CachedInstance, v: &[f64], eps: f64) -> Result<Vec<f64>, OptError> {
    let p = PiProblem::new(inst);
    p.solve(v, eps, &p.start.clone())
}

/// Exact-penalty association for cached files.
pub fn epm_associate(inst: &CachedInstance, params: &EpmParams) -> Result<AssociationSolution, CachedError> {
    params.validate()?;
    inst.validate()?;
    let problem = PiProblem::new(inst);
    let n = problem.dim();
    let s = (n as f64).sqrt();
    let mut pi = problem.start.clone();
    let mut v = vec![0.0; n];
    let mut eps = params.eps0;
    let mut trace = Vec::new();
    let mut converged = n == 0;
    for iteration in 0..params.max_iter {
        if converged {
            break;
        }
        // A subproblem that stalls at a large ε still leaves a feasible
        // iterate; the outer loop stops there and rounds it.
        let mut stalled = false;
        pi = match problem.solve(&v, eps, &pi) {
            Ok(p) => p,
            Err(OptError::IterationLimit { last, .. }) => {
                stalled = iteration > 0;
                last
            }
            Err(source) => return Err(CachedError::Subproblem { iteration, source }),
        };
        v = update_v(&pi, s);
        let inner: f64 = pi.iter().zip(&v).map(|(a, b)| a * b).sum();
        let residual = s * s - inner;
        trace.push(EpmTraceRow {
            iteration,
            objective: problem.relaxed_objective(&pi),
            residual,
            epsilon: eps,
        });
        if residual.abs() <= params.xi {
            converged = true;
            break;
        }
        if stalled {
            break;
        }
        eps *= params.delta;
    }
    let mut x = problem.to_x(&pi);
    repair(inst, &mut x);
    fill_empty(inst, &mut x);
    let mut sol = solution_from_x(inst, x);
    sol.trace = trace;
    sol.hit_iteration_cap = !converged;
    if sol.hit_iteration_cap {
        log::debug!("EPM stopped at its iteration cap; returning a repaired rounding");
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(sat: usize, capacity_bps: f64) -> Candidate {
        Candidate {
            sat,
            capacity_bps,
            distance_m: 1e6,
        }
    }

    fn single(caps: &[f64], gs: f64, max_isl: usize) -> CachedInstance {
        CachedInstance {
            requests: vec![CachedRequest {
                requester: 0,
                bits: 4e6,
                candidates: caps.iter().enumerate().map(|(i, &c)| cand(i + 1, c)).collect(),
                gs_capacity_bps: gs,
                gs_distance_m: if gs > 0.0 { 1.2e6 } else { 0.0 },
            }],
            max_isl,
            consumed: BTreeMap::new(),
        }
    }

    #[test]
    fn ratios_single_isl() {
        let inst = single(&[1e6], 0.0, 2);
        let (r, d) = optimal_ratios(&[vec![true]], &inst).unwrap();
        assert_eq!(r[0].isl, vec![1.0]);
        assert!((d[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ratios_proportional_split() {
        let inst = single(&[2e6, 1e6], 1e6, 2);
        let (r, d) = optimal_ratios(&[vec![true, true]], &inst).unwrap();
        assert!((r[0].isl[0] - 0.5).abs() < 1e-15);
        assert!((r[0].isl[1] - 0.25).abs() < 1e-15);
        assert!((r[0].gs - 0.25).abs() < 1e-15);
        assert!((d[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratios_unservable() {
        let inst = single(&[2e6], 0.0, 2);
        assert!(matches!(
            optimal_ratios(&[vec![false]], &inst),
            Err(CachedError::Unservable { request: 0 })
        ));
    }

    #[test]
    fn epm_picks_top_capacities() {
        let inst = single(&[5e6, 3e6, 2e6, 1e6], 0.0, 2);
        let sol = epm_associate(&inst, &EpmParams::default()).unwrap();
        assert_eq!(sol.x[0], vec![true, true, false, false]);
        assert!(!sol.hit_iteration_cap);
        assert!(sol.trace.last().unwrap().residual <= 1e-5);
    }

    #[test]
    fn epm_takes_all_when_budget_allows() {
        let inst = single(&[5e6, 3e6, 2e6], 1e6, 3);
        let sol = epm_associate(&inst, &EpmParams::default()).unwrap();
        assert_eq!(sol.x[0], vec![true; 3]);
    }

    #[test]
    fn update_v_examples() {
        let pi = vec![1.0, -1.0, -1.0, 1.0];
        assert_eq!(update_v(&pi, 2.0), pi);
        assert_eq!(update_v(&[0.0; 3], 3f64.sqrt()), vec![0.0; 3]);
        let v = update_v(&[0.3, -0.4], 1.0);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn exactness_examples() {
        assert!(theorem1_check(&[1.0; 6], &[1.0; 6], 2, 3));
        assert!(!theorem1_check(&[1.0; 6], &[0.0; 6], 2, 3));
        let mut u = vec![1.0; 4];
        u[2] = 0.5;
        let v = update_v(&u, 2.0);
        assert!(!theorem1_check(&u, &v, 2, 2));
    }

    #[test]
    fn pi_subproblem_penalty_dominates() {
        let inst = single(&[5e6, 3e6, 2e6], 0.0, 2);
        let pi = solve_pi_subproblem(&inst, &[1.0, 1.0, 1.0], 1e6).unwrap();
        // Degree cap 2 forces one entry to −1; penalty pushes the rest to 1.
        let ones = pi.iter().filter(|p| (*p - 1.0).abs() < 1e-9).count();
        let sum: f64 = pi.iter().map(|p| (p + 1.0) / 2.0).sum();
        assert!(sum <= 2.0 + 1e-8);
        assert!(ones >= 1);
    }

    #[test]
    fn pi_subproblem_without_penalty_balances() {
        // Two requesters sharing one neighbor with a single free ISL slot:
        // F alone splits the contested link by the fine-grid optimum.
        let inst = CachedInstance {
            requests: vec![
                CachedRequest {
                    requester: 0,
                    bits: 1e6,
                    candidates: vec![cand(2, 4e6)],
                    gs_capacity_bps: 1e6,
                    gs_distance_m: 1e6,
                },
                CachedRequest {
                    requester: 1,
                    bits: 1e6,
                    candidates: vec![cand(2, 2e6)],
                    gs_capacity_bps: 1e6,
                    gs_distance_m: 1e6,
                },
            ],
            max_isl: 1,
            consumed: BTreeMap::new(),
        };
        let pi = solve_pi_subproblem(&inst, &[0.0, 0.0], 1e-12).unwrap();
        let x: Vec<f64> = pi.iter().map(|p| (p + 1.0) / 2.0).collect();
        let f = |a: f64, b: f64| 1.0 / (4.0 * a + 1.0) + 1.0 / (2.0 * b + 1.0);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let a = i as f64 / 10_000.0;
            let v = f(a, 1.0 - a);
            if v < best.0 {
                best = (v, a);
            }
        }
        assert!((x[0] - best.1).abs() < 1e-3, "{x:?} vs {best:?}");
        assert!((x[0] + x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fill_empty_takes_a_spare_slot() {
        // Both ISL slots of satellite 0 go to the first request; the second
        // has no GS, so the first gives up its weaker link.
        let req = |bits: f64, caps: &[(usize, f64)]| CachedRequest {
            requester: 0,
            bits,
            candidates: caps.iter().map(|&(s, c)| cand(s, c)).collect(),
            gs_capacity_bps: 0.0,
            gs_distance_m: 0.0,
        };
        let inst = CachedInstance {
            requests: vec![req(4e6, &[(1, 5e6), (2, 3e6)]), req(1e6, &[(3, 2e6)])],
            max_isl: 2,
            consumed: BTreeMap::new(),
        };
        let mut x = vec![vec![true, true], vec![false]];
        fill_empty(&inst, &mut x);
        assert_eq!(x, vec![vec![true, false], vec![true]]);
        assert!(inst.is_feasible(&x));
        // A lone link is never taken.
        let inst1 = CachedInstance { max_isl: 1, ..inst };
        let mut x = vec![vec![true, false], vec![false]];
        fill_empty(&inst1, &mut x);
        assert_eq!(x, vec![vec![true, false], vec![false]]);
    }

    #[test]
    fn repair_drops_weakest() {
        let inst = single(&[5e6, 3e6, 2e6], 0.0, 2);
        let mut x = vec![vec![true, true, true]];
        repair(&inst, &mut x);
        assert_eq!(x[0], vec![true, true, false]);
    }

    #[test]
    fn consumed_budget_respected() {
        let mut inst = single(&[5e6, 3e6, 2e6], 1e6, 2);
        inst.consumed.insert(1, 2);
        let sol = epm_associate(&inst, &EpmParams::default()).unwrap();
        assert_eq!(sol.x[0], vec![false, true, true]);
        assert!(inst.is_feasible(&sol.x));
    }

    #[test]
    fn bad_params_rejected() {
        let inst = single(&[1e6], 0.0, 1);
        let p = EpmParams {
            delta: 1.0,
            ..EpmParams::default()
        };
        assert!(matches!(epm_associate(&inst, &p), Err(CachedError::Param { .. })));
    }
}
