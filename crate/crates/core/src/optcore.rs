//! Box- and linearly-constrained smooth convex minimization.
//!
//! The solver is a spectral projected gradient method: Barzilai–Borwein
//! trial steps with a monotone Armijo search along the projected direction.
//! Projection onto the box intersected with the linear rows is done by exact
//! dual coordinate ascent, one row at a time.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("start point violates the constraints by {violation:e}")]
    InfeasibleStart { violation: f64 },
    #[error("no point satisfies the constraints (residual violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error("iteration cap {iterations} reached with residual {residual:e}")]
    IterationLimit {
        iterations: usize,
        residual: f64,
        /// Last feasible iterate.
        last: Vec<f64>,
    },
    #[error("problem is malformed: {0}")]
    Malformed(String),
    #[error("objective is not finite at the start point")]
    NonFiniteStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// a·x ≤ b
    Le,
    /// a·x = b
    Eq,
}

/// Sparse linear constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub kind: RowKind,
}

impl LinearRow {
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            rhs,
            kind: RowKind::Le,
        }
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            rhs,
            kind: RowKind::Eq,
        }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row, 0 if satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let r = self.dot(x) - self.rhs;
        match self.kind {
            RowKind::Le => r.max(0.0),
            RowKind::Eq => r.abs(),
        }
    }
}

/// The feasible set: lower ≤ x ≤ upper and every linear row.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LinearRow>,
}

impl Constraints {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), OptError> {
        if self.lower.len() != self.upper.len() {
            return Err(OptError::Malformed("bound vectors differ in length".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l <= u) {
                return Err(OptError::Malformed(format!("bounds cross at coordinate {j}: {l} > {u}")));
            }
        }
        for row in &self.rows {
            if let Some(&(j, _)) = row.coeffs.iter().find(|(j, _)| *j >= self.dim()) {
                return Err(OptError::Malformed(format!("row refers to coordinate {j}")));
            }
        }
        Ok(())
    }

    /// Largest violation of any bound or row.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            worst = worst.max(row.violation(x));
        }
        worst
    }

    /// Euclidean projection of `y` onto the feasible set, to within `tol` on
    /// every row. Bounds are always met exactly.
    pub fn project(&self, y: &[f64], tol: f64) -> Result<Vec<f64>, OptError> {
        self.project_warm(y, tol, &mut Vec::new())
    }

    /// [`Constraints::project`] started from the row multipliers in
    /// `lambda`, which are overwritten with the final ones. An empty or
    /// mismatched `lambda` starts from zero.
    pub fn project_warm(&self, y: &[f64], tol: f64, lambda: &mut Vec<f64>) -> Result<Vec<f64>, OptError> {
        let n = self.dim();
        let clip = |j: usize, v: f64| v.clamp(self.lower[j], self.upper[j]);
        if self.rows.is_empty() {
            return Ok((0..n).map(|j| clip(j, y[j])).collect());
        }
        if lambda.len() != self.rows.len() {
            *lambda = vec![0.0; self.rows.len()];
        }
        // w = y − Σ λᵢ aᵢ; the primal point is clip(w).
        let mut w = y.to_vec();
        for (row, &l) in self.rows.iter().zip(lambda.iter()) {
            for &(j, a) in &row.coeffs {
                w[j] -= l * a;
            }
        }
        let mut z = Vec::new();
        let mut breaks = Vec::new();
        const MAX_SWEEPS: usize = 20_000;
        for _ in 0..MAX_SWEEPS {
            let mut moved: f64 = 0.0;
            for (i, row) in self.rows.iter().enumerate() {
                z.clear();
                z.extend(row.coeffs.iter().map(|&(j, a)| w[j] + lambda[i] * a));
                let new = self.row_multiplier(row, &z, &mut breaks);
                let delta = new - lambda[i];
                if delta != 0.0 {
                    for (k, &(j, a)) in row.coeffs.iter().enumerate() {
                        let nw = z[k] - new * a;
                        moved = moved.max((clip(j, nw) - clip(j, w[j])).abs());
                        w[j] = nw;
                    }
                    lambda[i] = new;
                }
            }
            if moved <= 1e-15 * (1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                break;
            }
        }
        let mut x: Vec<f64> = (0..n).map(|j| clip(j, w[j])).collect();
        self.polish(&mut x);
        let violation = self.violation(&x);
        if violation > tol {
            return Err(OptError::Infeasible { violation });
        }
        Ok(x)
    }

    /// Remove the cancellation error left by large multipliers: each
    /// violated row moves its interior coordinates by the residual, spread
    /// along the row normal.
    fn polish(&self, x: &mut [f64]) {
        for _ in 0..8 {
            let mut clean = true;
            for row in &self.rows {
                let excess = row.dot(x) - row.rhs;
                if excess == 0.0 || (row.kind == RowKind::Le && excess < 0.0) {
                    continue;
                }
                clean = false;
                let free = |j: usize, v: f64| v > self.lower[j] && v < self.upper[j];
                let norm: f64 = row.coeffs.iter().filter(|&&(j, _)| free(j, x[j])).map(|(_, a)| a * a).sum();
                if norm == 0.0 {
                    continue;
                }
                for &(j, a) in &row.coeffs {
                    if free(j, x[j]) {
                        x[j] = (x[j] - excess * a / norm).clamp(self.lower[j], self.upper[j]);
                    }
                }
            }
            if clean {
                return;
            }
        }
    }

    /// Best multiplier for one row with the others frozen. `z` holds the
    /// unclipped coordinates on the row's support with this row's own
    /// contribution removed. `breaks` is scratch space.
    fn row_multiplier(&self, row: &LinearRow, z: &[f64], breaks: &mut Vec<f64>) -> f64 {
        let value = |lam: f64| -> f64 {
            row.coeffs
                .iter()
                .zip(z)
                .map(|(&(j, a), &zj)| a * (zj - lam * a).clamp(self.lower[j], self.upper[j]))
                .sum()
        };
        let at_zero = value(0.0);
        if row.kind == RowKind::Le && at_zero <= row.rhs {
            return 0.0;
        }
        // value(λ) is continuous, piecewise linear and non-increasing.
        breaks.clear();
        for (&(j, a), &zj) in row.coeffs.iter().zip(z) {
            if a != 0.0 {
                breaks.push((zj - self.lower[j]) / a);
                breaks.push((zj - self.upper[j]) / a);
            }
        }
        breaks.retain(|b| b.is_finite());
        if breaks.is_empty() {
            return 0.0;
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let target = row.rhs;
        let first = breaks[0];
        let last = *breaks.last().unwrap();
        // Left of the first break the row value is flat at its maximum, and
        // right of the last at its minimum; clamp there when out of reach.
        if value(first) <= target {
            return first;
        }
        if value(last) >= target {
            return if row.kind == RowKind::Le { last.max(0.0) } else { last };
        }
        // Binary search for the segment where value crosses target.
        let (mut lo, mut hi) = (0, breaks.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if value(breaks[mid]) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (l0, l1) = (breaks[lo], breaks[hi]);
        let (v0, v1) = (value(l0), value(l1));
        if v0 == v1 {
            return l0;
        }
        let lam = l0 + (v0 - target) * (l1 - l0) / (v0 - v1);
        if row.kind == RowKind::Le {
            lam.max(0.0)
        } else {
            lam
        }
    }
}

/// Smooth convex objective over a constrained box.
pub struct ConvexProblem<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    /// Writes ∇f(x) into the second argument and returns f(x).
    pub objective: F,
    pub constraints: Constraints,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
}

impl<F> ConvexProblem<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    pub fn new(objective: F, constraints: Constraints) -> Self {
        Self {
            objective,
            constraints,
            feas_tol: 1e-8,
            opt_tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// ‖x − P(x − ∇f(x))‖∞ at the returned point.
    pub residual: f64,
    /// False when the line search could make no further progress before
    /// the residual reached the tolerance (round-off floor).
    pub converged: bool,
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Minimize `problem` starting from the feasible point `start`.
pub fn minimize<F>(problem: &ConvexProblem<F>, start: &[f64]) -> Result<Minimum, OptError>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let cons = &problem.constraints;
    cons.validate()?;
    let n = cons.dim();
    if start.len() != n {
        return Err(OptError::Malformed(format!(
            "start has {} coordinates, problem has {n}",
            start.len()
        )));
    }
    let violation = cons.violation(start);
    if violation > problem.feas_tol {
        return Err(OptError::InfeasibleStart { violation });
    }
    // Projection accuracy well below the optimality tolerance.
    let ptol = problem.feas_tol;
    let f = &problem.objective;

    let mut x = start.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(OptError::NonFiniteStart);
    }
    let mut alpha = {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax > 0.0 { (1.0 / gmax).min(1.0) } else { 1.0 }
    };
    let mut g_new = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut residual = f64::INFINITY;
    // Far longer steps leave too few significant digits in the projection.
    let width = (0..n)
        .map(|j| cons.upper[j] - cons.lower[j])
        .filter(|w| w.is_finite())
        .fold(0.0f64, f64::max);
    let reach = if width > 0.0 { 1e4 * width } else { f64::INFINITY };
    let mut lam_unit = Vec::new();
    let mut lam_step = Vec::new();

    for iter in 0..problem.max_iter {
        let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        let p = cons.project_warm(&step, ptol, &mut lam_unit)?;
        residual = inf_norm_diff(&x, &p);
        if residual <= problem.opt_tol {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: iter,
                residual,
                converged: true,
            });
        }

        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax > 0.0 {
            alpha = alpha.min(reach / gmax);
        }
        let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        let p = cons.project_warm(&step, ptol, &mut lam_step)?;
        let d: Vec<f64> = p.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: iter,
                residual,
                converged: false,
            });
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for j in 0..n {
                trial[j] = (x[j] + t * d[j]).clamp(cons.lower[j], cons.upper[j]);
            }
            let ft = f(&trial, &mut g_new);
            if ft.is_finite() && g_new.iter().all(|v| v.is_finite()) && ft <= fx + 1e-4 * t * slope {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
        }
        let Some(ft) = accepted else {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: iter,
                residual,
                converged: false,
            });
        };

        let mut ss = 0.0;
        let mut sy = 0.0;
        for j in 0..n {
            let s = trial[j] - x[j];
            ss += s * s;
            sy += s * (g_new[j] - g[j]);
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e12 };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        fx = ft;
    }
    Err(OptError::IterationLimit {
        iterations: problem.max_iter,
        residual,
        last: x,
    })
}
