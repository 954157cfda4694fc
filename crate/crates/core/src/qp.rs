//! Dense primal active-set solver for convex quadratic programs
//!
//! ```text
//!     minimize     1/2 zᵀ H z + cᵀ z + k
//!     subject to   A_eq z  = b_eq
//!                  A_in z <= b_in
//!                  lower <= z <= upper
//! ```
//!
//! `H` only needs to be positive *semi*definite, so linear programs are the
//! special case `H = 0`. Along directions of zero curvature the solver moves
//! on a ray until a constraint blocks, which makes it a vertex-following
//! method on the linear part. Multipliers follow the convention
//! `∇f(z) + Σ λ_i a_i = 0`, with `λ_i >= 0` on inequality and bound rows.

use log::trace;
use thiserror::Error;

use crate::linalg::{dot, householder_qr, norm_inf, rank, solve_upper, symmetric_eigen, Matrix};
use crate::scalar::{scaled_tol, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("constraints are infeasible (residual {0})")]
    Infeasible(f64),
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("active-set iteration limit reached after {0} iterations")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone)]
pub struct QpProblem<T> {
    n: usize,
    hessian: Matrix<T>,
    linear: Vec<T>,
    constant: T,
    eq: Vec<(Vec<T>, T)>,
    ineq: Vec<(Vec<T>, T)>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// A problem over `n` free variables with zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hessian: Matrix::zeros(n, n),
            linear: vec![T::zero(); n],
            constant: T::zero(),
            eq: Vec::new(),
            ineq: Vec::new(),
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    /// Adds `value` to `H[i][j]` and `H[j][i]` (once when `i == j`).
    pub fn add_hessian(&mut self, i: usize, j: usize, value: T) {
        self.hessian[(i, j)] = self.hessian[(i, j)] + value;
        if i != j {
            self.hessian[(j, i)] = self.hessian[(j, i)] + value;
        }
    }

    pub fn hessian(&self) -> &Matrix<T> {
        &self.hessian
    }

    pub fn add_linear(&mut self, i: usize, value: T) {
        self.linear[i] = self.linear[i] + value;
    }

    pub fn linear(&self) -> &[T] {
        &self.linear
    }

    pub fn add_constant(&mut self, value: T) {
        self.constant = self.constant + value;
    }

    pub fn set_bounds(&mut self, i: usize, lower: T, upper: T) {
        self.lower[i] = lower;
        self.upper[i] = upper;
    }

    pub fn bounds(&self, i: usize) -> (T, T) {
        (self.lower[i], self.upper[i])
    }

    pub fn add_eq(&mut self, row: Vec<T>, rhs: T) -> Result<usize, QpError> {
        self.check_row(&row)?;
        self.eq.push((row, rhs));
        Ok(self.eq.len() - 1)
    }

    pub fn add_le(&mut self, row: Vec<T>, rhs: T) -> Result<usize, QpError> {
        self.check_row(&row)?;
        self.ineq.push((row, rhs));
        Ok(self.ineq.len() - 1)
    }

    pub fn eq_rows(&self) -> &[(Vec<T>, T)] {
        &self.eq
    }

    pub fn ineq_rows(&self) -> &[(Vec<T>, T)] {
        &self.ineq
    }

    fn check_row(&self, row: &[T]) -> Result<(), QpError> {
        if row.len() != self.n {
            return Err(QpError::Dimension(format!(
                "row has {} entries, problem has {} variables",
                row.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn objective(&self, z: &[T]) -> T {
        let hz = self.hessian.mul_vec(z);
        dot(z, &hz) / T::two() + dot(&self.linear, z) + self.constant
    }

    /// Largest constraint violation at `z`.
    pub fn max_violation(&self, z: &[T]) -> T {
        let mut worst = T::zero();
        for (a, b) in &self.eq {
            worst = worst.max((dot(a, z) - *b).abs());
        }
        for (a, b) in &self.ineq {
            worst = worst.max(dot(a, z) - *b);
        }
        for i in 0..self.n {
            worst = worst.max(self.lower[i] - z[i]).max(z[i] - self.upper[i]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions<T> {
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for QpOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::solver_tolerance(),
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub eq_multipliers: Vec<T>,
    pub ineq_multipliers: Vec<T>,
    pub lower_multipliers: Vec<T>,
    pub upper_multipliers: Vec<T>,
    /// More constraints are active than their gradients span, so the
    /// multipliers above are one vertex of a non-singleton set.
    pub degenerate: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Eq(usize),
    Ineq(usize),
    Lower(usize),
    Upper(usize),
    Artificial,
}

#[derive(Debug, Clone)]
struct Con<T> {
    a: Vec<T>,
    b: T,
    equality: bool,
    origin: Origin,
}

/// Stacked constraint view used by the iteration.
struct Model<'a, T> {
    n: usize,
    hessian: &'a Matrix<T>,
    linear: &'a [T],
    cons: Vec<Con<T>>,
    tol: T,
    curvature_floor: T,
    max_iterations: usize,
}

struct Outcome<T> {
    working: Vec<usize>,
    multipliers: Vec<T>,
    iterations: usize,
}

impl<'a, T: Scalar> Model<'a, T> {
    fn gradient(&self, z: &[T]) -> Vec<T> {
        let mut g = self.hessian.mul_vec(z);
        for (gi, ci) in g.iter_mut().zip(self.linear) {
            *gi = *gi + *ci;
        }
        g
    }

    fn active_tol(&self, b: T) -> T {
        scaled_tol(self.tol * T::lit(100.0), b)
    }

    /// Greedily collects equality rows and constraints active at `z` whose
    /// gradients are linearly independent.
    fn initial_working_set(&self, z: &[T]) -> Vec<usize> {
        let mut basis: Vec<Vec<T>> = Vec::new();
        let mut working = Vec::new();
        let candidates = self
            .cons
            .iter()
            .enumerate()
            .filter(|(_, c)| c.equality)
            .chain(self.cons.iter().enumerate().filter(|(_, c)| !c.equality));
        for (i, c) in candidates {
            if !c.equality && (dot(&c.a, z) - c.b).abs() > self.active_tol(c.b) {
                continue;
            }
            if let Some(q) = orthogonal_residual(&basis, &c.a, self.tol) {
                basis.push(q);
                working.push(i);
            }
        }
        working
    }

    fn run(&self, z: &mut [T], mut working: Vec<usize>) -> Result<Outcome<T>, QpError> {
        let n = self.n;
        let mut last_step_zero = false;
        for iter in 0..self.max_iterations {
            let g = self.gradient(z);
            let gscale = norm_inf(&g).max(T::one());
            let columns: Vec<&[T]> = working.iter().map(|&i| self.cons[i].a.as_slice()).collect();
            let m = columns.len();
            let (q, r) = if m > 0 {
                householder_qr(&Matrix::from_columns(n, &columns))
            } else {
                (Matrix::identity(n), Matrix::zeros(0, 0))
            };
            let zbasis = q.column_block(m, n);
            let k = n - m;

            let mut step: Option<(Vec<T>, T)> = None;
            if k > 0 {
                let reduced_grad = zbasis.tr_mul_vec(&g);
                if norm_inf(&reduced_grad) > self.tol * gscale {
                    let hz = self.hessian.mul(&zbasis);
                    let reduced_h = zbasis.transpose().mul(&hz);
                    let (eig, vecs) = symmetric_eigen(&reduced_h);
                    let proj = vecs.tr_mul_vec(&reduced_grad);
                    let flat: Vec<bool> = eig.iter().map(|&e| e <= self.curvature_floor).collect();
                    let ray_part = proj
                        .iter()
                        .zip(&flat)
                        .filter(|(_, &f)| f)
                        .fold(T::zero(), |mx, (p, _)| mx.max(p.abs()));
                    let mut coeffs = vec![T::zero(); k];
                    let max_len;
                    if ray_part > self.tol * gscale {
                        for (j, &f) in flat.iter().enumerate() {
                            if f {
                                for (c, v) in coeffs.iter_mut().zip(vecs.column(j)) {
                                    *c = *c - v * proj[j];
                                }
                            }
                        }
                        max_len = T::infinity();
                    } else {
                        for (j, &f) in flat.iter().enumerate() {
                            if !f {
                                let w = proj[j] / eig[j];
                                for (c, v) in coeffs.iter_mut().zip(vecs.column(j)) {
                                    *c = *c - v * w;
                                }
                            }
                        }
                        max_len = T::one();
                    }
                    let p = zbasis.mul_vec(&coeffs);
                    if norm_inf(&p) > T::epsilon() * norm_inf(z).max(T::one()) {
                        step = Some((p, max_len));
                    }
                }
            }

            if let Some((p, max_len)) = step {
                let pnorm = norm_inf(&p);
                let mut best: Option<(usize, T)> = None;
                for (i, c) in self.cons.iter().enumerate() {
                    if c.equality || working.contains(&i) {
                        continue;
                    }
                    let ap = dot(&c.a, &p);
                    let anorm = norm_inf(&c.a);
                    if ap <= self.tol * anorm * pnorm {
                        continue;
                    }
                    let slack = (c.b - dot(&c.a, z)).max(T::zero());
                    let alpha = slack / ap;
                    match best {
                        Some((_, ba)) if alpha >= ba => {}
                        _ => best = Some((i, alpha)),
                    }
                }
                match best {
                    Some((i, alpha)) if alpha < max_len => {
                        for (zi, pi) in z.iter_mut().zip(&p) {
                            *zi = *zi + alpha * *pi;
                        }
                        trace!("iter {iter}: block on {i} at alpha {alpha}");
                        working.push(i);
                        last_step_zero = alpha == T::zero();
                    }
                    _ => {
                        if max_len.is_infinite() {
                            return Err(QpError::Unbounded);
                        }
                        for (zi, pi) in z.iter_mut().zip(&p) {
                            *zi = *zi + *pi;
                        }
                        last_step_zero = false;
                    }
                }
                continue;
            }

            // Stationary on the working set: inspect multipliers.
            let mut multipliers = vec![T::zero(); m];
            if m > 0 {
                let q1 = q.column_block(0, m);
                let rhs: Vec<T> = q1.tr_mul_vec(&g).into_iter().map(|v| -v).collect();
                multipliers = solve_upper(&r, &rhs);
            }
            let mult_tol = self.tol * gscale * T::lit(10.0);
            let mut drop: Option<(usize, T)> = None;
            for (pos, &ci) in working.iter().enumerate() {
                if self.cons[ci].equality || multipliers[pos] >= -mult_tol {
                    continue;
                }
                let better = match drop {
                    None => true,
                    Some((_, v)) => !last_step_zero && multipliers[pos] < v,
                };
                if better {
                    drop = Some((pos, multipliers[pos]));
                }
            }
            match drop {
                Some((pos, _)) => {
                    if last_step_zero {
                        // Bland-style: lowest constraint index among candidates.
                        let mut cands: Vec<(usize, usize)> = working
                            .iter()
                            .enumerate()
                            .filter(|(p, &ci)| !self.cons[ci].equality && multipliers[*p] < -mult_tol)
                            .map(|(p, &ci)| (ci, p))
                            .collect();
                        cands.sort_unstable();
                        working.remove(cands[0].1);
                    } else {
                        working.remove(pos);
                    }
                }
                None => {
                    return Ok(Outcome {
                        working,
                        multipliers,
                        iterations: iter + 1,
                    })
                }
            }
        }
        Err(QpError::IterationLimit(self.max_iterations))
    }
}

/// Gram-Schmidt residual of `a` against an orthonormal basis, normalised,
/// or `None` when `a` lies in the span.
fn orthogonal_residual<T: Scalar>(basis: &[Vec<T>], a: &[T], tol: T) -> Option<Vec<T>> {
    let anorm = dot(a, a).sqrt();
    if anorm == T::zero() {
        return None;
    }
    let mut v = a.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi = *vi - c * *qi;
            }
        }
    }
    let vnorm = dot(&v, &v).sqrt();
    if vnorm <= tol * T::lit(100.0) * anorm {
        return None;
    }
    Some(v.into_iter().map(|x| x / vnorm).collect())
}

fn stack_constraints<T: Scalar>(p: &QpProblem<T>) -> Vec<Con<T>> {
    let n = p.n;
    let mut cons = Vec::new();
    for (i, (a, b)) in p.eq.iter().enumerate() {
        cons.push(Con {
            a: a.clone(),
            b: *b,
            equality: true,
            origin: Origin::Eq(i),
        });
    }
    for (i, (a, b)) in p.ineq.iter().enumerate() {
        cons.push(Con {
            a: a.clone(),
            b: *b,
            equality: false,
            origin: Origin::Ineq(i),
        });
    }
    for j in 0..n {
        if p.lower[j].is_finite() {
            let mut a = vec![T::zero(); n];
            a[j] = -T::one();
            cons.push(Con {
                a,
                b: -p.lower[j],
                equality: false,
                origin: Origin::Lower(j),
            });
        }
        if p.upper[j].is_finite() {
            let mut a = vec![T::zero(); n];
            a[j] = T::one();
            cons.push(Con {
                a,
                b: p.upper[j],
                equality: false,
                origin: Origin::Upper(j),
            });
        }
    }
    cons
}

fn curvature_floor<T: Scalar>(h: &Matrix<T>, tol: T) -> T {
    let hmax = h.max_abs();
    if hmax == T::zero() {
        T::zero()
    } else {
        tol * hmax
    }
}

/// Finds a feasible point by minimising the sum of artificial residuals.
fn phase_one<T: Scalar>(p: &QpProblem<T>, opts: &QpOptions<T>) -> Result<Vec<T>, QpError> {
    let n = p.n;
    let z0: Vec<T> = (0..n)
        .map(|j| T::zero().max(p.lower[j]).min(p.upper[j]))
        .collect();
    let feas = opts.tolerance * T::lit(100.0);
    let mut artificial: Vec<(usize, bool, T)> = Vec::new(); // (row, is_eq, coefficient)
    for (i, (a, b)) in p.eq.iter().enumerate() {
        let r = dot(a, &z0) - *b;
        if r.abs() > scaled_tol(feas, *b) {
            artificial.push((i, true, if r > T::zero() { -T::one() } else { T::one() }));
        }
    }
    for (i, (a, b)) in p.ineq.iter().enumerate() {
        let r = dot(a, &z0) - *b;
        if r > scaled_tol(feas, *b) {
            artificial.push((i, false, -T::one()));
        }
    }
    if artificial.is_empty() {
        return Ok(z0);
    }
    let na = n + artificial.len();
    let mut lin = vec![T::zero(); na];
    let mut start = z0.clone();
    start.resize(na, T::zero());
    let mut cons = Vec::new();
    let widen = |a: &[T]| {
        let mut w = a.to_vec();
        w.resize(na, T::zero());
        w
    };
    let mut eq_art = vec![None; p.eq.len()];
    let mut in_art = vec![None; p.ineq.len()];
    for (k, &(row, is_eq, coef)) in artificial.iter().enumerate() {
        let col = n + k;
        lin[col] = T::one();
        let (a, b) = if is_eq { &p.eq[row] } else { &p.ineq[row] };
        start[col] = (dot(a, &z0) - *b).abs();
        if is_eq {
            eq_art[row] = Some((col, coef));
        } else {
            in_art[row] = Some((col, coef));
        }
    }
    for (i, (a, b)) in p.eq.iter().enumerate() {
        let mut w = widen(a);
        if let Some((col, coef)) = eq_art[i] {
            w[col] = coef;
        }
        cons.push(Con {
            a: w,
            b: *b,
            equality: true,
            origin: Origin::Eq(i),
        });
    }
    for (i, (a, b)) in p.ineq.iter().enumerate() {
        let mut w = widen(a);
        if let Some((col, coef)) = in_art[i] {
            w[col] = coef;
        }
        cons.push(Con {
            a: w,
            b: *b,
            equality: false,
            origin: Origin::Ineq(i),
        });
    }
    for j in 0..n {
        if p.lower[j].is_finite() {
            let mut a = vec![T::zero(); na];
            a[j] = -T::one();
            cons.push(Con {
                a,
                b: -p.lower[j],
                equality: false,
                origin: Origin::Lower(j),
            });
        }
        if p.upper[j].is_finite() {
            let mut a = vec![T::zero(); na];
            a[j] = T::one();
            cons.push(Con {
                a,
                b: p.upper[j],
                equality: false,
                origin: Origin::Upper(j),
            });
        }
    }
    for k in 0..artificial.len() {
        let mut a = vec![T::zero(); na];
        a[n + k] = -T::one();
        cons.push(Con {
            a,
            b: T::zero(),
            equality: false,
            origin: Origin::Artificial,
        });
    }
    let zero_h = Matrix::zeros(na, na);
    let model = Model {
        n: na,
        hessian: &zero_h,
        linear: &lin,
        cons,
        tol: opts.tolerance,
        curvature_floor: T::zero(),
        max_iterations: opts.max_iterations,
    };
    let working = model.initial_working_set(&start);
    let mut z = start;
    model.run(&mut z, working)?;
    let residual = z[n..].iter().fold(T::zero(), |s, &t| s + t);
    let scale = p
        .eq
        .iter()
        .chain(&p.ineq)
        .fold(T::one(), |m, (_, b)| m.max(b.abs()));
    if residual > feas * scale {
        return Err(QpError::Infeasible(residual.to_f64().unwrap_or(f64::NAN)));
    }
    z.truncate(n);
    Ok(z)
}

/// Solves the problem from scratch.
pub fn solve<T: Scalar>(p: &QpProblem<T>, opts: &QpOptions<T>) -> Result<QpSolution<T>, QpError> {
    let start = phase_one(p, opts)?;
    optimize(p, opts, start)
}

/// Solves starting from `start`, which is used directly when feasible.
pub fn solve_from<T: Scalar>(
    p: &QpProblem<T>,
    opts: &QpOptions<T>,
    start: &[T],
) -> Result<QpSolution<T>, QpError> {
    if start.len() != p.n {
        return Err(QpError::Dimension("start point length".into()));
    }
    let scale = p
        .eq
        .iter()
        .chain(&p.ineq)
        .fold(T::one(), |m, (_, b)| m.max(b.abs()));
    if p.max_violation(start) <= opts.tolerance * T::lit(100.0) * scale {
        optimize(p, opts, start.to_vec())
    } else {
        solve(p, opts)
    }
}

fn optimize<T: Scalar>(
    p: &QpProblem<T>,
    opts: &QpOptions<T>,
    mut z: Vec<T>,
) -> Result<QpSolution<T>, QpError> {
    let model = Model {
        n: p.n,
        hessian: &p.hessian,
        linear: &p.linear,
        cons: stack_constraints(p),
        tol: opts.tolerance,
        curvature_floor: curvature_floor(&p.hessian, opts.tolerance),
        max_iterations: opts.max_iterations,
    };
    let working = model.initial_working_set(&z);
    let outcome = model.run(&mut z, working)?;

    let mut sol = QpSolution {
        objective: p.objective(&z),
        eq_multipliers: vec![T::zero(); p.eq.len()],
        ineq_multipliers: vec![T::zero(); p.ineq.len()],
        lower_multipliers: vec![T::zero(); p.n],
        upper_multipliers: vec![T::zero(); p.n],
        degenerate: false,
        iterations: outcome.iterations,
        x: Vec::new(),
    };
    for (pos, &ci) in outcome.working.iter().enumerate() {
        let mu = outcome.multipliers[pos];
        match model.cons[ci].origin {
            Origin::Eq(i) => sol.eq_multipliers[i] = mu,
            Origin::Ineq(i) => sol.ineq_multipliers[i] = mu.max(T::zero()),
            Origin::Lower(j) => sol.lower_multipliers[j] = mu.max(T::zero()),
            Origin::Upper(j) => sol.upper_multipliers[j] = mu.max(T::zero()),
            Origin::Artificial => {}
        }
    }
    let active: Vec<Vec<T>> = model
        .cons
        .iter()
        .filter(|c| c.equality || (dot(&c.a, &z) - c.b).abs() <= model.active_tol(c.b))
        .map(|c| c.a.clone())
        .collect();
    sol.degenerate = rank(&active, opts.tolerance * T::lit(100.0)) < active.len();
    sol.x = z;
    Ok(sol)
}
