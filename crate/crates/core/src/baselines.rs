//! Reference schemes for both delivery problems.

use crate::cached::{
    fill_empty, p2_objective, repair, request_delay, solution_from_x, AssociationSolution, CachedError, CachedInstance,
    EpmParams, PiProblem,
};
use crate::noncached::{optimize_bandwidth, solution_for, AoParams, NonCachedError, NonCachedInstance, NonCachedSolution};
use crate::optcore::OptError;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Largest number of binary variables exhaustive search accepts.
pub const EXHAUSTIVE_LIMIT: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("instance has {variables} binary variables, exhaustive search allows {limit}")]
    TooLarge { variables: usize, limit: usize },
    #[error(transparent)]
    Cached(#[from] CachedError),
    #[error(transparent)]
    NonCached(#[from] NonCachedError),
    #[error(transparent)]
    Opt(#[from] OptError),
}

/// Ordering key for selections: fewer stranded requests first, then the
/// sum of the finite delays.
pub fn selection_key(inst: &CachedInstance, x: &[Vec<bool>]) -> (usize, f64) {
    let mut stranded = 0;
    let mut sum = 0.0;
    for (req, row) in inst.requests.iter().zip(x) {
        let d = request_delay(req, row);
        if d.is_finite() {
            sum += d;
        } else {
            stranded += 1;
        }
    }
    (stranded, sum)
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exhaustive {
    pub solution: AssociationSolution,
    /// Number of feasible selections visited.
    pub enumerated: u64,
}

struct Search<'a> {
    inst: &'a CachedInstance,
    pairs: Vec<(usize, usize)>,
    /// Compact satellite id of (requester, candidate) for each pair.
    ends: Vec<(usize, usize)>,
    budget: Vec<usize>,
    degree: Vec<usize>,
    x: Vec<Vec<bool>>,
    best: Option<((usize, f64), Vec<Vec<bool>>)>,
    count: u64,
}

impl Search<'_> {
    fn visit(&mut self, i: usize) {
        if i == self.pairs.len() {
            self.count += 1;
            let key = selection_key(self.inst, &self.x);
            if self.best.as_ref().is_none_or(|(k, _)| better(key, *k)) {
                self.best = Some((key, self.x.clone()));
            }
            return;
        }
        self.visit(i + 1);
        let (a, b) = self.ends[i];
        if self.degree[a] < self.budget[a] && self.degree[b] < self.budget[b] {
            let (r, k) = self.pairs[i];
            self.degree[a] += 1;
            self.degree[b] += 1;
            self.x[r][k] = true;
            self.visit(i + 1);
            self.x[r][k] = false;
            self.degree[a] -= 1;
            self.degree[b] -= 1;
        }
    }
}

/// Globally optimal association by enumerating every feasible selection.
pub fn exhaustive_cached(inst: &CachedInstance) -> Result<Exhaustive, BaselineError> {
    inst.validate()?;
    let variables = inst.num_pairs();
    if variables > EXHAUSTIVE_LIMIT {
        return Err(BaselineError::TooLarge {
            variables,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut id = |s: usize| {
        let n = ids.len();
        *ids.entry(s).or_insert(n)
    };
    let pairs = inst.pairs();
    let ends: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&(r, k)| {
            let req = &inst.requests[r];
            (id(req.requester), id(req.candidates[k].sat))
        })
        .collect();
    let mut budget = vec![0; ids.len()];
    for (&s, &i) in &ids {
        budget[i] = inst.budget(s);
    }
    let mut search = Search {
        inst,
        pairs,
        ends,
        degree: vec![0; budget.len()],
        budget,
        x: inst.requests.iter().map(|r| vec![false; r.candidates.len()]).collect(),
        best: None,
        count: 0,
    };
    search.visit(0);
    let (_, x) = search.best.expect("the empty selection is always feasible");
    Ok(Exhaustive {
        solution: solution_from_x(inst, x),
        enumerated: search.count,
    })
}

/// Groups of requests that share no satellite, so their budgets never
/// interact.
pub fn components(inst: &CachedInstance) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..inst.requests.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (r, req) in inst.requests.iter().enumerate() {
        let sats = std::iter::once(req.requester).chain(req.candidates.iter().map(|c| c.sat));
        for s in sats {
            match owner.get(&s) {
                Some(&o) => {
                    let (a, b) = (find(&mut parent, o), find(&mut parent, r));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    owner.insert(s, r);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in 0..inst.requests.len() {
        let root = find(&mut parent, r);
        groups.entry(root).or_default().push(r);
    }
    groups.into_values().collect()
}

/// [`exhaustive_cached`] applied to each independent component; the size
/// guard holds per component.
pub fn exhaustive_cached_split(inst: &CachedInstance) -> Result<Exhaustive, BaselineError> {
    inst.validate()?;
    let mut x: Vec<Vec<bool>> = inst.requests.iter().map(|r| vec![false; r.candidates.len()]).collect();
    let mut enumerated = 0;
    for group in components(inst) {
        let sub = CachedInstance {
            requests: group.iter().map(|&r| inst.requests[r].clone()).collect(),
            max_isl: inst.max_isl,
            consumed: inst.consumed.clone(),
        };
        let e = exhaustive_cached(&sub)?;
        enumerated += e.enumerated;
        for (&r, row) in group.iter().zip(e.solution.x) {
            x[r] = row;
        }
    }
    Ok(Exhaustive {
        solution: solution_from_x(inst, x),
        enumerated,
    })
}

/// Requests in descending size order each take their strongest candidates
/// while both ends still have ISL budget.
pub fn greedy_cached(inst: &CachedInstance) -> AssociationSolution {
    let mut order: Vec<usize> = (0..inst.requests.len()).collect();
    order.sort_by(|&a, &b| inst.requests[b].bits.total_cmp(&inst.requests[a].bits));
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    let mut x: Vec<Vec<bool>> = inst.requests.iter().map(|r| vec![false; r.candidates.len()]).collect();
    for r in order {
        let req = &inst.requests[r];
        let mut cands: Vec<usize> = (0..req.candidates.len()).filter(|&k| req.candidates[k].capacity_bps > 0.0).collect();
        cands.sort_by(|&a, &b| req.candidates[b].capacity_bps.total_cmp(&req.candidates[a].capacity_bps));
        for k in cands {
            let sat = req.candidates[k].sat;
            let deg = |s: usize, d: &BTreeMap<usize, usize>| d.get(&s).copied().unwrap_or(0);
            if deg(req.requester, &degree) < inst.budget(req.requester) && deg(sat, &degree) < inst.budget(sat) {
                x[r][k] = true;
                *degree.entry(req.requester).or_insert(0) += 1;
                *degree.entry(sat).or_insert(0) += 1;
            }
        }
    }
    solution_from_x(inst, x)
}

/// Each pair is switched on with probability one half, visited in random
/// order and skipped when a budget is exhausted. Requests left without any
/// link then get their strongest feasible candidate.
pub fn random_cached<R: Rng + ?Sized>(inst: &CachedInstance, rng: &mut R) -> AssociationSolution {
    let mut pairs = inst.pairs();
    pairs.shuffle(rng);
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    let mut x: Vec<Vec<bool>> = inst.requests.iter().map(|r| vec![false; r.candidates.len()]).collect();
    for (r, k) in pairs {
        let req = &inst.requests[r];
        let c = &req.candidates[k];
        if !rng.random_bool(0.5) || c.capacity_bps <= 0.0 {
            continue;
        }
        let deg = |s: usize| degree.get(&s).copied().unwrap_or(0);
        if deg(req.requester) < inst.budget(req.requester) && deg(c.sat) < inst.budget(c.sat) {
            x[r][k] = true;
            *degree.entry(req.requester).or_insert(0) += 1;
            *degree.entry(c.sat).or_insert(0) += 1;
        }
    }
    fill_empty(inst, &mut x);
    solution_from_x(inst, x)
}

/// Solve the continuous relaxation, round at one half (ties go down), then
/// repair and fill.
pub fn rounding_cached(inst: &CachedInstance) -> Result<AssociationSolution, BaselineError> {
    inst.validate()?;
    let problem = PiProblem::new(inst);
    let pi = problem.solve(&vec![0.0; problem.dim()], 0.0, &problem.start)?;
    let mut x = problem.to_x(&pi);
    repair(inst, &mut x);
    fill_empty(inst, &mut x);
    Ok(solution_from_x(inst, x))
}

/// Every positive-capacity candidate selected, ignoring ISL budgets.
pub fn fully_connected_cached(inst: &CachedInstance) -> AssociationSolution {
    let x = inst
        .requests
        .iter()
        .map(|r| r.candidates.iter().map(|c| c.capacity_bps > 0.0).collect())
        .collect();
    solution_from_x(inst, x)
}

/// Exact-penalty relay selection at an equal band split over each GS's
/// candidate relays, then an equal split over the selected relays.
pub fn equal_bandwidth(inst: &NonCachedInstance, epm: &EpmParams) -> Result<NonCachedSolution, BaselineError> {
    inst.validate()?;
    let ci = inst.association_instance(&inst.equal_omega());
    let x = crate::cached::epm_associate(&ci, epm)?.x;
    let omega = inst.equal_omega_for(&x);
    Ok(solution_for(inst, x, omega, Vec::new()))
}

fn with_bandwidth(inst: &NonCachedInstance, x: Vec<Vec<bool>>, params: &AoParams) -> Result<NonCachedSolution, BaselineError> {
    let res = optimize_bandwidth(&x, &inst.equal_omega_for(&x), inst, params.xi, params.max_sca)
        .map_err(|(step, source)| NonCachedError::Bandwidth { outer: 0, step, source })?;
    Ok(solution_for(inst, x, res.omega, Vec::new()))
}

/// Relaxed relay selection rounded at one half, then SCA bandwidth.
pub fn rounding_assoc(inst: &NonCachedInstance, params: &AoParams) -> Result<NonCachedSolution, BaselineError> {
    inst.validate()?;
    let ci = inst.association_instance(&inst.equal_omega());
    let x = rounding_cached(&ci)?.x;
    with_bandwidth(inst, x, params)
}

/// Every relay path selected, ignoring ISL budgets, then SCA bandwidth.
pub fn fully_connected_noncached(inst: &NonCachedInstance, params: &AoParams) -> Result<NonCachedSolution, BaselineError> {
    inst.validate()?;
    let x = inst.relayed.iter().map(|r| vec![true; r.links.len()]).collect();
    with_bandwidth(inst, x, params)
}

/// Random relay selection at the equal split, then equal bandwidth.
pub fn random_noncached<R: Rng + ?Sized>(inst: &NonCachedInstance, rng: &mut R) -> Result<NonCachedSolution, BaselineError> {
    inst.validate()?;
    let ci = inst.association_instance(&inst.equal_omega());
    let x = random_cached(&ci, rng).x;
    let omega = inst.equal_omega_for(&x);
    Ok(solution_for(inst, x, omega, Vec::new()))
}

/// Greedy relay selection at the equal split, then SCA bandwidth.
pub fn greedy_noncached(inst: &NonCachedInstance, params: &AoParams) -> Result<NonCachedSolution, BaselineError> {
    inst.validate()?;
    let ci = inst.association_instance(&inst.equal_omega());
    let x = greedy_cached(&ci).x;
    with_bandwidth(inst, x, params)
}

/// P2 objective of a selection, exposed for comparisons.
pub fn cached_objective(inst: &CachedInstance, x: &[Vec<bool>]) -> f64 {
    p2_objective(inst, x)
}
