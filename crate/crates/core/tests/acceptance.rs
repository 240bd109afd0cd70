//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sagin::baselines::{exhaustive_cached, greedy_cached};
use sagin::cached::{epm_associate, max_form_delay, theorem1_check, update_v, CachedInstance, EpmParams, Ratios};
use sagin::fading::{crossing_db, PerModel};
use sagin::harness::{
    job_seed, paired_means, run, trace, ExperimentConfig, PairedRow, RunOutput, Scheme, TraceProblem,
};
use sagin::noncached::{
    ao_solve, sca_product, sca_upper_bound, sca_upper_bound_grad, AoParams, NonCachedInstance,
    NonCachedSolution,
};
use sagin::scenario::ScenarioSpec;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn c1_per_anchors() -> Outcome {
    let ils = crossing_db(&PerModel::ils_sr(), 1e-2, -10.0, 40.0).unwrap();
    let loo = crossing_db(&PerModel::s2a_loo(), 1e-2, -10.0, 40.0).unwrap();
    let (Some(ils), Some(loo)) = (ils, loo) else {
        return outcome(false, format!("no crossing: ils {ils:?}, loo {loo:?}"));
    };
    outcome(
        (ils - 16.0).abs() <= 2.0 && (loo - 7.0).abs() <= 2.0,
        format!("SR-ILS crosses 1e-2 at {ils:.2} dB, Loo at {loo:.2} dB"),
    )
}

fn cached_instances() -> Vec<CachedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|_| {
            let sats = rng.random_range(4..=8);
            let requests = rng.random_range(2..=6);
            common::cached_instance(&mut rng, sats, requests, 24)
        })
        .collect()
}

fn c2_cached_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact = 0;
    let instances = cached_instances();
    for inst in &instances {
        let epm = epm_associate(inst, &EpmParams::default()).unwrap().objective;
        let best = exhaustive_cached(inst).unwrap().solution.objective;
        let gap = if epm == best { 0.0 } else { relative(epm, best) };
        worst = worst.max(gap);
        if gap <= 1e-9 {
            exact += 1;
        }
    }
    let n = instances.len();
    outcome(
        worst <= 0.05 && exact * 5 >= n * 4,
        format!("{n} instances, worst gap {:.3}%, exact {exact}/{n}", 100.0 * worst),
    )
}

/// Capacity of a relay path at band fraction `omega`, from the link formulas.
fn path_cap(inst: &NonCachedInstance, j: usize, k: usize, omega: f64) -> f64 {
    let link = &inst.relayed[j].links[k];
    let c = inst.relays[link.relay].snr_const;
    let g2s = omega * inst.bandwidth_hz * (1.0 + c / omega).log2();
    1.0 / (1.0 / link.isl_capacity_bps + 1.0 / g2s)
}

fn relay_instances() -> Vec<NonCachedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    (0..25)
        .map(|_| {
            let relays = rng.random_range(2..=3);
            let requests = rng.random_range(1..=2);
            let max_isl = rng.random_range(1..=2);
            let mut inst = common::noncached_instance(&mut rng, relays, requests, max_isl);
            inst.relays.iter_mut().for_each(|r| r.gs = 0);
            inst
        })
        .collect()
}

/// Best objective over every feasible selection and every split of the band
/// among the used relays on a 0.01 grid, with closed-form ratios.
fn relay_brute_force(inst: &NonCachedInstance) -> f64 {
    let shape = inst.association_instance(&inst.equal_omega());
    let slots: Vec<(usize, usize)> = inst
        .relayed
        .iter()
        .enumerate()
        .flat_map(|(j, r)| (0..r.links.len()).map(move |k| (j, k)))
        .collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << slots.len()) {
        let mut x: Vec<Vec<bool>> = inst.relayed.iter().map(|r| vec![false; r.links.len()]).collect();
        for (b, &(j, k)) in slots.iter().enumerate() {
            x[j][k] = mask >> b & 1 == 1;
        }
        if !shape.is_feasible(&x) || x.iter().any(|row| !row.contains(&true)) {
            continue;
        }
        let mut used: Vec<usize> = Vec::new();
        for &(j, k) in &slots {
            let relay = inst.relayed[j].links[k].relay;
            if x[j][k] && !used.contains(&relay) {
                used.push(relay);
            }
        }
        let mut omega = vec![0.0; inst.relays.len()];
        grid_search(inst, &x, &used, 0, 100, &mut omega, &mut best);
    }
    best
}

fn grid_search(
    inst: &NonCachedInstance,
    x: &[Vec<bool>],
    used: &[usize],
    depth: usize,
    left: usize,
    omega: &mut [f64],
    best: &mut f64,
) {
    if depth == used.len() {
        let mut total = 0.0;
        for (j, req) in inst.relayed.iter().enumerate() {
            let cap: f64 = (0..req.links.len())
                .filter(|&k| x[j][k])
                .map(|k| path_cap(inst, j, k, omega[req.links[k].relay]))
                .sum();
            total += req.bits / cap;
        }
        *best = best.min(total);
        return;
    }
    let reserve = used.len() - depth - 1;
    for step in 1..=left.saturating_sub(reserve) {
        omega[used[depth]] = step as f64 / 100.0;
        grid_search(inst, x, used, depth + 1, left - step, omega, best);
    }
}

fn c3_relay_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let instances = relay_instances();
    for inst in &instances {
        let ao = ao_solve(inst, &inst.equal_omega(), &AoParams::default()).unwrap();
        worst = worst.max(relative(ao.objective, relay_brute_force(inst)));
    }
    outcome(
        worst <= 0.05,
        format!("{} instances, worst gap to grid optimum {:.3}%", instances.len(), 100.0 * worst),
    )
}

/// Largest relative spread of per-link delays within a request, and the
/// number of random ratio vectors that beat the equal-finish delay.
fn equal_finish_cached(inst: &CachedInstance, rng: &mut ChaCha8Rng, trials: usize) -> (f64, usize) {
    let sol = epm_associate(inst, &EpmParams::default()).unwrap();
    let mut spread: f64 = 0.0;
    let mut beaten = 0;
    for (r, req) in inst.requests.iter().enumerate() {
        let d = sol.delays[r];
        if !d.is_finite() {
            continue;
        }
        let rat = &sol.ratios[r];
        for ((c, &on), &rho) in req.candidates.iter().zip(&sol.x[r]).zip(&rat.isl) {
            if on {
                spread = spread.max(relative(rho * req.bits / c.capacity_bps, d));
            }
        }
        if req.gs_capacity_bps > 0.0 {
            spread = spread.max(relative(rat.gs * req.bits / req.gs_capacity_bps, d));
        }
        let at_opt = max_form_delay(req, &sol.x[r], rat);
        for _ in 0..trials {
            let mut isl: Vec<f64> = sol.x[r].iter().map(|&on| if on { rng.random() } else { 0.0 }).collect();
            let mut gs = if req.gs_capacity_bps > 0.0 { rng.random() } else { 0.0 };
            let total = isl.iter().sum::<f64>() + gs;
            isl.iter_mut().for_each(|v| *v /= total);
            gs /= total;
            if max_form_delay(req, &sol.x[r], &Ratios { isl, gs }) < at_opt * (1.0 - 1e-12) {
                beaten += 1;
            }
        }
    }
    (spread, beaten)
}

fn equal_finish_relay(inst: &NonCachedInstance, sol: &NonCachedSolution, rng: &mut ChaCha8Rng, trials: usize) -> (f64, usize) {
    let mut spread: f64 = 0.0;
    let mut beaten = 0;
    for (j, req) in inst.relayed.iter().enumerate() {
        let d = sol.relayed_delays[j];
        let active: Vec<usize> = (0..req.links.len()).filter(|&k| sol.x[j][k]).collect();
        let caps: Vec<f64> = active
            .iter()
            .map(|&k| path_cap(inst, j, k, sol.omega[req.links[k].relay]))
            .collect();
        for (i, &k) in active.iter().enumerate() {
            spread = spread.max(relative(sol.ratios[j][k] * req.bits / caps[i], d));
        }
        for _ in 0..trials {
            let w: Vec<f64> = active.iter().map(|_| rng.random()).collect();
            let total: f64 = w.iter().sum();
            let worst = w
                .iter()
                .zip(&caps)
                .fold(0.0f64, |m, (wi, c)| m.max(wi / total * req.bits / c));
            if worst < d * (1.0 - 1e-12) {
                beaten += 1;
            }
        }
    }
    (spread, beaten)
}

fn c4_equal_finish() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut spread, mut beaten): (f64, usize) = (0.0, 0);
    for inst in cached_instances() {
        let (s, b) = equal_finish_cached(&inst, &mut rng, 10_000);
        spread = spread.max(s);
        beaten += b;
    }
    for inst in relay_instances() {
        let sol = ao_solve(&inst, &inst.equal_omega(), &AoParams::default()).unwrap();
        let (s, b) = equal_finish_relay(&inst, &sol, &mut rng, 10_000);
        spread = spread.max(s);
        beaten += b;
    }
    outcome(
        spread <= 1e-9 && beaten == 0,
        format!("max active-link spread {spread:.2e}, random ratios beating equal finish: {beaten}"),
    )
}

fn c5_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut members = 0;
    let mut accepted_fractional = 0;
    for trial in 0..100_000 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(1..=5);
        let mn = m * n;
        let s = (mn as f64).sqrt();
        let u: Vec<f64> = match trial % 3 {
            0 => (0..mn).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
            1 => (0..mn).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            _ => (0..mn).map(|_| rng.random_range(-1.0..=1.0f64).signum()).collect(),
        };
        let v = match trial % 4 {
            0 => u.clone(),
            1 => update_v(&u, s),
            2 => (0..mn).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            _ => u.iter().map(|a| a + rng.random_range(-1e-3..1e-3)).collect(),
        };
        if theorem1_check(&u, &v, m, n) {
            members += 1;
            let binary = u.iter().all(|a| (a.abs() - 1.0).abs() <= 1e-6);
            let equal = u.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-4);
            if !binary || !equal {
                violations += 1;
            }
        }
        // Directed boundary case: one fractional entry.
        let mut frac: Vec<f64> = (0..mn).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let i = rng.random_range(0..mn);
        frac[i] = rng.random_range(-0.999..0.999);
        if theorem1_check(&frac, &update_v(&frac, s), m, n) {
            accepted_fractional += 1;
        }
    }
    outcome(
        violations == 0 && accepted_fractional == 0 && members > 0,
        format!("1e5 trials, {members} members, {violations} non-binary members, {accepted_fractional} fractional accepted"),
    )
}

fn c6_sca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut tangency, mut below, mut grad_err): (f64, usize, f64) = (0.0, 0, 0.0);
    for _ in 0..100 {
        let c = 10f64.powf(rng.random_range(0.0..3.0));
        let p = rng.random_range(1..=2);
        let rho0 = rng.random_range(0.05..1.0);
        let omega0 = rng.random_range(0.05..1.0);
        let f0 = sca_product(rho0, omega0, c, p);
        tangency = tangency.max((sca_upper_bound(rho0, omega0, rho0, omega0, c, p) - f0).abs());
        for _ in 0..1000 {
            let rho = rng.random_range(0.0..1.0);
            let omega = rng.random_range(0.01..1.0);
            let up = sca_upper_bound(rho, omega, rho0, omega0, c, p);
            let f = sca_product(rho, omega, c, p);
            if up < f - 1e-12 * f.abs().max(1.0) {
                below += 1;
            }
        }
        let rho = rng.random_range(0.05..0.95);
        let omega = rng.random_range(0.05..0.95);
        let h = 1e-6;
        let ub = |r: f64, w: f64| sca_upper_bound(r, w, rho0, omega0, c, p);
        let fd = (
            (ub(rho + h, omega) - ub(rho - h, omega)) / (2.0 * h),
            (ub(rho, omega + h) - ub(rho, omega - h)) / (2.0 * h),
        );
        let g = sca_upper_bound_grad(rho, omega, rho0, omega0, c, p);
        grad_err = grad_err
            .max((g.0 - fd.0).abs() / fd.0.abs().max(1.0))
            .max((g.1 - fd.1).abs() / fd.1.abs().max(1.0));
    }
    outcome(
        tangency <= 1e-10 && below == 0 && grad_err <= 1e-4,
        format!("tangency {tangency:.1e}, majorization violations {below}/100000, gradient error {grad_err:.1e}"),
    )
}

fn c7_convergence() -> Outcome {
    let base = ScenarioSpec::default();
    let mut details = Vec::new();
    let mut pass = true;
    for s in 0..3 {
        let mut spec = base.clone();
        spec.rng_seed = job_seed(base.rng_seed, s);
        let cached = trace(&spec, TraceProblem::Cached, s, 1).unwrap();
        let residual = cached.last().and_then(|r| r.residual).unwrap_or(f64::INFINITY);
        let relay = trace(&spec, TraceProblem::NonCached, s, 1).unwrap();
        let monotone = relay.windows(2).all(|w| w[1].objective <= w[0].objective);
        pass &= residual <= 1e-5 && monotone && relay.len() <= 30;
        details.push(format!(
            "seed {s}: EPM residual {residual:.1e} after {} iterations, AO {} outer iterations{}",
            cached.len(),
            relay.len(),
            if monotone { "" } else { " (increase)" }
        ));
    }
    outcome(pass, details.join("; "))
}

fn config(name: &str) -> ExperimentConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    ExperimentConfig::load(&path).unwrap()
}

/// Per-point paired means of one scheme, one vector of per-seed values per
/// sweep point.
fn series(rows: &[PairedRow], scheme: Scheme) -> Vec<Vec<f64>> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| r.scheme == scheme.name()) {
        match out.iter_mut().find(|(s, _)| *s == r.sweep) {
            Some((_, v)) => v.push(r.mean_delay_s),
            None => out.push((r.sweep.clone(), vec![r.mean_delay_s])),
        }
    }
    out.into_iter().map(|(_, v)| v).collect()
}

/// Mean and standard error of the per-seed differences b − a.
fn paired_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// No step is a significant increase and the whole sweep is a significant
/// decrease.
fn decreasing(points: &[Vec<f64>]) -> bool {
    let steps_ok = points.windows(2).all(|w| {
        let (d, se) = paired_diff(&w[0], &w[1]);
        d <= 2.0 * se
    });
    let (d, se) = paired_diff(&points[0], &points[points.len() - 1]);
    steps_ok && d < -2.0 * se
}

fn fmt_series(points: &[Vec<f64>]) -> String {
    points.iter().map(|p| format!("{:.3}", mean(p))).collect::<Vec<_>>().join(" > ")
}

fn c8_trends() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;

    let isl = config("desk-max-isl.json");
    let mut drops = Vec::new();
    for (scheme, reference) in [(Scheme::Epm, Scheme::FullyConnected), (Scheme::Ao, Scheme::FullyConnectedRelay)] {
        let rows = paired_means(&isl, &[scheme, reference]).unwrap();
        let s = series(&rows, scheme);
        let r = series(&rows, reference);
        let gap = relative(mean(&s[s.len() - 1]), mean(&r[r.len() - 1]));
        let ok = decreasing(&s) && gap <= 0.02;
        pass &= ok;
        details.push(format!(
            "{} vs max ISL {} (fully connected {:.3}, gap {:.2}%)",
            scheme.name(),
            fmt_series(&s),
            mean(&r[r.len() - 1]),
            100.0 * gap
        ));
    }

    let gs = config("desk-gs-count.json");
    for scheme in [Scheme::Epm, Scheme::Ao] {
        let rows = paired_means(&gs, &[scheme]).unwrap();
        let s = series(&rows, scheme);
        let drop = 1.0 - mean(&s[s.len() - 1]) / mean(&s[0]);
        pass &= decreasing(&s);
        drops.push(drop);
        details.push(format!(
            "{} vs GS count {} (drop {:.1}%)",
            scheme.name(),
            fmt_series(&s),
            100.0 * drop
        ));
    }
    pass &= drops[1] > drops[0];

    let matched = config("desk-matched-load.json");
    let RunOutput::Delays(rows) = run(&matched).unwrap() else {
        unreachable!()
    };
    let per_seed = |scheme: Scheme| -> Vec<f64> {
        rows.iter().filter(|r| r.scheme == scheme.name()).map(|r| r.mean_delay_s).collect()
    };
    let (epm, ao) = (per_seed(Scheme::Epm), per_seed(Scheme::Ao));
    let (d, se) = paired_diff(&epm, &ao);
    pass &= d > 2.0 * se;
    details.push(format!(
        "matched load: non-cached {:.3} s vs cached {:.3} s",
        mean(&ao),
        mean(&epm)
    ));
    outcome(pass, details.join("; "))
}

fn c9_single_requester() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut inst = common::cached_instance(&mut rng, 10, 1, 8);
        inst.max_isl = rng.random_range(1..=6);
        let greedy = greedy_cached(&inst).objective;
        let epm = epm_associate(&inst, &EpmParams::default()).unwrap().objective;
        let best = exhaustive_cached(&inst).unwrap().solution.objective;
        worst = worst.max(relative(greedy, best)).max(relative(epm, best));
    }
    outcome(worst <= 1e-9, format!("100 instances, worst relative gap {worst:.1e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 PER anchors", c1_per_anchors, Duration::from_secs(30)),
        ("2 cached oracle", c2_cached_oracle, Duration::from_secs(120)),
        ("3 non-cached oracle", c3_relay_oracle, Duration::from_secs(300)),
        ("4 equal-finish ratios", c4_equal_finish, Duration::MAX),
        ("5 exactness set", c5_exactness, Duration::MAX),
        ("6 SCA majorizer", c6_sca, Duration::MAX),
        ("7 convergence", c7_convergence, Duration::MAX),
        ("8 trends", c8_trends, Duration::from_secs(600)),
        ("9 single requester", c9_single_requester, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
