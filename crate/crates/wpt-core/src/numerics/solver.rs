//! Log-barrier interior-point solver for the small convex subproblems the
//! successive-approximation loops produce.
//!
//! Problems are posed over a real decision vector with a linear objective
//! and a handful of constraint shapes (sums of exponentials of affine forms,
//! affine inequalities, coordinate disc bounds, and exponential-vs-affine
//! comparisons). All shapes are convex, so a damped Newton method on the
//! barrier with a decreasing centering parameter lands on the optimum with
//! vanishing duality gap.

use crate::{Error, Result};

/// Sparse affine functional a.x + c.
#[derive(Debug, Clone)]
pub struct LinearTerm {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearTerm {
    pub fn new(coeffs: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { coeffs, constant }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(i, c)| c * x[*i]).sum::<f64>() + self.constant
    }
}

/// Convex inequality g(x) <= 0 in one of the supported shapes.
#[derive(Debug, Clone)]
pub enum Constraint {
    /// sum_j exp(term_j(x)) <= bound.
    SumExp { terms: Vec<LinearTerm>, bound: f64 },
    /// term(x) <= 0.
    Affine { term: LinearTerm },
    /// sum_v x_v^2 <= bound.
    SquareSum { vars: Vec<usize>, bound: f64 },
    /// exp(scale * x_var + shift) <= rhs(x).
    ExpAffine {
        var: usize,
        scale: f64,
        shift: f64,
        rhs: LinearTerm,
    },
}

impl Constraint {
    /// Constraint value g(x); feasible iff negative.
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::SumExp { terms, bound } => {
                terms.iter().map(|t| t.eval(x).exp()).sum::<f64>() - bound
            }
            Constraint::Affine { term } => term.eval(x),
            Constraint::SquareSum { vars, bound } => {
                vars.iter().map(|&v| x[v] * x[v]).sum::<f64>() - bound
            }
            Constraint::ExpAffine {
                var,
                scale,
                shift,
                rhs,
            } => (scale * x[*var] + shift).exp() - rhs.eval(x),
        }
    }

    /// Adds weight * grad g to `grad` and weight * hess g to `hess`.
    fn accumulate(&self, x: &[f64], weight: f64, grad: &mut [f64], hess: &mut SymMatrix) {
        match self {
            Constraint::SumExp { terms, .. } => {
                for t in terms {
                    let ez = t.eval(x).exp();
                    for &(i, a) in &t.coeffs {
                        grad[i] += weight * ez * a;
                        for &(j, b) in &t.coeffs {
                            if j <= i {
                                hess.add(i, j, weight * ez * a * b);
                            }
                        }
                    }
                }
            }
            Constraint::Affine { term } => {
                for &(i, a) in &term.coeffs {
                    grad[i] += weight * a;
                }
            }
            Constraint::SquareSum { vars, .. } => {
                for &v in vars {
                    grad[v] += weight * 2.0 * x[v];
                    hess.add(v, v, weight * 2.0);
                }
            }
            Constraint::ExpAffine {
                var,
                scale,
                shift,
                rhs,
            } => {
                let ez = (scale * x[*var] + shift).exp();
                grad[*var] += weight * scale * ez;
                hess.add(*var, *var, weight * scale * scale * ez);
                for &(i, a) in &rhs.coeffs {
                    grad[i] -= weight * a;
                }
            }
        }
    }

    /// Gradient alone, as a dense vector (used for rank-one barrier terms).
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.accumulate(x, 1.0, out, &mut SymMatrix::empty());
    }

    /// Magnitude of the quantities the constraint evaluation sums; the
    /// rounding noise of `value` is roughly machine epsilon times this.
    fn eval_scale(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::SumExp { terms, bound } => {
                terms.iter().map(|t| t.eval(x).exp()).sum::<f64>() + bound.abs()
            }
            Constraint::Affine { term } => {
                term.coeffs
                    .iter()
                    .map(|(i, c)| (c * x[*i]).abs())
                    .sum::<f64>()
                    + term.constant.abs()
            }
            Constraint::SquareSum { vars, bound } => {
                vars.iter().map(|&v| x[v] * x[v]).sum::<f64>() + bound.abs()
            }
            Constraint::ExpAffine {
                var,
                scale,
                shift,
                rhs,
            } => {
                (scale * x[*var] + shift).exp()
                    + rhs
                        .coeffs
                        .iter()
                        .map(|(i, c)| (c * x[*i]).abs())
                        .sum::<f64>()
                    + rhs.constant.abs()
            }
        }
    }
}

/// Linear objective c.x minimized over the given constraints.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

/// Solver output: strictly feasible point with near-zero duality gap.
#[derive(Debug, Clone)]
pub struct SolvedPoint {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Scaled stationarity residual ||c + sum lambda_i grad g_i|| / max(1, ||c||).
    pub kkt_residual: f64,
    pub newton_iterations: usize,
}

const MU_INITIAL: f64 = 1.0;
const MU_FLOOR: f64 = 1e-12;
const MU_SHRINK: f64 = 0.1;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_STAGE_CAP: usize = 200;
const KKT_TOL: f64 = 1e-6;
/// A constraint counts as active for the stationarity check when its slack
/// is this small relative to the evaluation scale. Binding slacks end near
/// MU_FLOOR / lambda, far below it; inactive ones sit far above.
const ACTIVE_SLACK_REL: f64 = 1e-7;

impl ConvexSubproblem {
    /// Runs the barrier method from a strictly feasible start.
    pub fn solve(&self, start: &[f64]) -> Result<SolvedPoint> {
        if start.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "start has {} entries, problem has {} variables",
                start.len(),
                self.num_vars
            )));
        }
        for (i, g) in self.constraints.iter().enumerate() {
            let v = g.value(start);
            if v.is_nan() || v >= 0.0 {
                return Err(Error::InfeasibleStart(format!(
                    "constraint {i} has value {v:e} at the start point"
                )));
            }
        }

        let mut x = start.to_vec();
        let mut best = x.clone();
        let mut best_objective = dot(&self.objective, &x);
        let mut total_newton = 0;
        let mut mu = MU_INITIAL;
        loop {
            total_newton += self.center(&mut x, mu);
            let f = dot(&self.objective, &x);
            if f < best_objective {
                best_objective = f;
                best.copy_from_slice(&x);
            }
            if mu <= MU_FLOOR {
                break;
            }
            mu = (mu * MU_SHRINK).max(MU_FLOOR);
        }

        let objective = dot(&self.objective, &x);
        let kkt_residual = self.kkt_residual(&x);
        if kkt_residual > KKT_TOL {
            return Err(Error::SolverDiverged {
                message: format!("stationarity residual {kkt_residual:e} above {KKT_TOL:e}"),
                best_point: best,
                best_objective,
            });
        }
        Ok(SolvedPoint {
            x,
            objective,
            kkt_residual,
            newton_iterations: total_newton,
        })
    }

    /// Damped Newton on the barrier function for one value of mu.
    /// Returns the number of Newton steps taken. `x` stays strictly
    /// feasible throughout.
    fn center(&self, x: &mut Vec<f64>, mu: f64) -> usize {
        let n = self.num_vars;
        let mut steps = 0;
        let mut grad = vec![0.0; n];
        let mut gvec = vec![0.0; n];
        for _ in 0..NEWTON_STAGE_CAP {
            // grad phi = c + mu * sum grad g / (-g);
            // hess phi = mu * sum [hess g / (-g) + grad g grad g^T / g^2].
            grad.copy_from_slice(&self.objective);
            let mut hess = SymMatrix::zeros(n);
            for con in &self.constraints {
                let g = con.value(x);
                let slack = -g;
                con.accumulate(x, mu / slack, &mut grad, &mut hess);
                con.gradient(x, &mut gvec);
                let w = mu / (slack * slack);
                for i in 0..n {
                    if gvec[i] == 0.0 {
                        continue;
                    }
                    for j in 0..=i {
                        if gvec[j] != 0.0 {
                            hess.add(i, j, w * gvec[i] * gvec[j]);
                        }
                    }
                }
            }

            let step = match hess.solve_newton(&grad) {
                Some(s) => s,
                None => break,
            };
            let decrement = -dot(&grad, &step);
            if decrement / 2.0 <= NEWTON_TOL {
                break;
            }
            steps += 1;

            let phi0 = self.barrier_value(x, mu);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + t * d).collect();
                if self.strictly_feasible(&trial) {
                    let phi = self.barrier_value(&trial, mu);
                    if phi <= phi0 - 1e-4 * t * decrement {
                        *x = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        steps
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
            && self.constraints.iter().all(|c| {
                let g = c.value(x);
                g.is_finite() && g < 0.0
            })
    }

    fn barrier_value(&self, x: &[f64], mu: f64) -> f64 {
        let mut phi = dot(&self.objective, x);
        for c in &self.constraints {
            phi -= mu * (-c.value(x)).ln();
        }
        phi
    }

    /// Scaled stationarity residual ||c + sum lambda_i grad g_i|| / max(1, ||c||)
    /// with lambda >= 0. Inactive constraints keep their barrier multipliers
    /// MU_FLOOR / slack (vanishingly small); the near-active ones get
    /// least-squares multipliers, because mu / slack is quantization noise
    /// once the slack falls to rounding error of the constraint evaluation.
    fn kkt_residual(&self, x: &[f64]) -> f64 {
        let n = self.num_vars;
        let mut resid = self.objective.clone();
        let mut gvec = vec![0.0; n];
        let mut active: Vec<Vec<f64>> = Vec::new();
        for c in &self.constraints {
            let slack = -c.value(x);
            c.gradient(x, &mut gvec);
            if slack <= ACTIVE_SLACK_REL * c.eval_scale(x) {
                active.push(gvec.clone());
            } else {
                let lambda = MU_FLOOR / slack;
                for i in 0..n {
                    resid[i] += lambda * gvec[i];
                }
            }
        }

        // Nonnegative least squares over the active gradients by iteratively
        // dropping the most negative multiplier.
        let mut keep: Vec<usize> = (0..active.len()).collect();
        let mut lambda = Vec::new();
        while !keep.is_empty() {
            let k = keep.len();
            let mut gram = SymMatrix::zeros(k);
            let mut proj = vec![0.0; k];
            for (a, &ia) in keep.iter().enumerate() {
                proj[a] = dot(&active[ia], &resid);
                for (b, &ib) in keep.iter().enumerate().take(a + 1) {
                    gram.add(a, b, dot(&active[ia], &active[ib]));
                }
            }
            let Some(sol) = gram.solve_newton(&proj) else {
                lambda.clear();
                break;
            };
            let worst = sol
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i, *v));
            match worst {
                Some((i, v)) if v < 0.0 => {
                    keep.remove(i);
                }
                _ => {
                    lambda = sol;
                    break;
                }
            }
        }
        let mut out = resid;
        for (a, &ia) in keep.iter().enumerate() {
            let l = lambda.get(a).copied().unwrap_or(0.0).max(0.0);
            for i in 0..n {
                out[i] += l * active[ia][i];
            }
        }
        norm(&out) / norm(&self.objective).max(1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense symmetric matrix stored as the lower triangle.
struct SymMatrix {
    n: usize,
    lower: Vec<f64>,
}

impl SymMatrix {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            lower: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// Placeholder that ignores writes; lets `accumulate` double as a pure
    /// gradient evaluator.
    fn empty() -> Self {
        Self { n: 0, lower: Vec::new() }
    }

    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(j <= i);
        i * (i + 1) / 2 + j
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        if self.n == 0 {
            return;
        }
        let (r, c) = if j <= i { (i, j) } else { (j, i) };
        self.lower[Self::idx(r, c)] += v;
    }

    /// Solves H s = -grad by Cholesky, bumping the diagonal if the factor
    /// fails (semidefinite Hessians appear when a variable only enters
    /// affine constraints).
    fn solve_newton(&self, grad: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let max_diag = (0..n)
            .map(|i| self.lower[Self::idx(i, i)].abs())
            .fold(0.0_f64, f64::max)
            .max(1e-300);
        let mut bump = 0.0;
        for _ in 0..40 {
            if let Some(chol) = self.cholesky(bump) {
                let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
                // Forward substitution L y = rhs.
                for i in 0..n {
                    for j in 0..i {
                        rhs[i] -= chol[Self::idx(i, j)] * rhs[j];
                    }
                    rhs[i] /= chol[Self::idx(i, i)];
                }
                // Back substitution L^T s = y.
                for i in (0..n).rev() {
                    for j in (i + 1)..n {
                        rhs[i] -= chol[Self::idx(j, i)] * rhs[j];
                    }
                    rhs[i] /= chol[Self::idx(i, i)];
                }
                if rhs.iter().all(|v| v.is_finite()) {
                    return Some(rhs);
                }
            }
            bump = if bump == 0.0 { 1e-14 * max_diag } else { bump * 100.0 };
        }
        None
    }

    fn cholesky(&self, bump: f64) -> Option<Vec<f64>> {
        let n = self.n;
        let mut l = self.lower.clone();
        for i in 0..n {
            l[Self::idx(i, i)] += bump;
        }
        for i in 0..n {
            for j in 0..=i {
                let mut sum = l[Self::idx(i, j)];
                for k in 0..j {
                    sum -= l[Self::idx(i, k)] * l[Self::idx(j, k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[Self::idx(i, i)] = sum.sqrt();
                } else {
                    l[Self::idx(i, j)] = sum / l[Self::idx(j, j)];
                }
            }
        }
        Some(l)
    }
}
