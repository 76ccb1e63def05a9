//! Bounded-variable revised simplex.
//!
//! Every row `i` gets a logical variable `s_i = -a_i x`, so the working system
//! is `[A | I] (x, s) = 0` with all information moved into variable bounds.
//! The main algorithm is the dual simplex with dual steepest-edge pricing and
//! a Harris two-pass ratio test. Dual feasibility of the starting basis is
//! obtained by bound flipping and, where a variable has no usable finite
//! bound, by a temporary artificial box that is widened until it is inactive.
//! A primal simplex pass removes any dual infeasibility left after cost
//! shifts are undone.

use std::time::Instant;

use log::debug;

use crate::lu::LuFactor;
use crate::{LpProblem, Scalar, Sense, SolverConfig, Status};

const NONE: usize = usize::MAX;
const REFACTOR_INTERVAL: usize = 96;
const MAX_BOX_WIDENINGS: usize = 8;

/// Status of one variable (structural or logical) in a simplex basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// A simplex basis: one status per structural variable followed by one per row.
/// Feeding the final basis of one solve into a structurally identical problem
/// (same variables and rows, different data) usually saves most pivots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub num_vars: usize,
    pub num_rows: usize,
    pub status: Vec<BasisStatus>,
}

pub(crate) struct Outcome<T> {
    pub status: Status,
    pub values: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

enum LoopEnd {
    Optimal,
    Infeasible,
    Unbounded,
    Limit(&'static str),
    Numerical(&'static str),
}

struct Simplex<T> {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<T>,
    row_start: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<T>,

    lower: Vec<T>,
    upper: Vec<T>,
    art_lower: Vec<bool>,
    art_upper: Vec<bool>,
    cost: Vec<T>,
    orig_cost: Vec<T>,
    big_m: T,

    x: Vec<T>,
    state: Vec<BasisStatus>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    d: Vec<T>,
    weights: Vec<T>,
    lu: Option<LuFactor<T>>,

    tol_p: T,
    tol_d: T,
    tol_piv: T,
    iterations: usize,
    max_iterations: usize,
    started: Instant,
    time_limit: Option<std::time::Duration>,

    // scratch
    buf_rows: Vec<T>,
    buf_pos: Vec<T>,
    col: Vec<T>,
    rho: Vec<T>,
    tau: Vec<T>,
    alpha: Vec<T>,
    touched: Vec<usize>,
    in_touched: Vec<bool>,
}

pub(crate) fn solve<T: Scalar>(
    problem: &LpProblem<T>,
    config: &SolverConfig,
    warm: Option<&Basis>,
) -> Outcome<T> {
    let mut s = Simplex::new(problem, config);
    let status = s.run(warm);
    let values = s.x[..s.n].to_vec();
    let objective = problem.objective_value(&values);
    let basis = matches!(status, Status::Optimal).then(|| s.export_basis());
    debug!(
        "simplex `{}`: {:?} after {} iterations in {:?}",
        problem.name,
        status,
        s.iterations,
        s.started.elapsed()
    );
    Outcome {
        status,
        values,
        objective,
        iterations: s.iterations,
        basis,
    }
}

impl<T: Scalar> Simplex<T> {
    fn new(problem: &LpProblem<T>, config: &SolverConfig) -> Self {
        let n = problem.num_vars();
        let m = problem.num_rows();
        let nnz = problem.num_nonzeros();

        let mut row_start = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::with_capacity(nnz);
        let mut row_val = Vec::with_capacity(nnz);
        let mut col_count = vec![0usize; n];
        row_start.push(0);
        for r in &problem.rows {
            // Merge duplicate terms on the same variable.
            let mut terms: Vec<(usize, T)> = r.terms.iter().map(|&(v, a)| (v.0, a)).collect();
            terms.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(terms.len());
            for (j, a) in terms {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 = last.1 + a,
                    _ => merged.push((j, a)),
                }
            }
            for (j, a) in merged {
                if a != T::zero() {
                    row_idx.push(j);
                    row_val.push(a);
                    col_count[j] += 1;
                }
            }
            row_start.push(row_idx.len());
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + col_count[j];
        }
        let mut fill = col_start.clone();
        let mut col_idx = vec![0usize; row_idx.len()];
        let mut col_val = vec![T::zero(); row_idx.len()];
        for i in 0..m {
            for e in row_start[i]..row_start[i + 1] {
                let j = row_idx[e];
                col_idx[fill[j]] = i;
                col_val[fill[j]] = row_val[e];
                fill[j] += 1;
            }
        }

        let inf = T::infinity();
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        let mut scale = T::one();
        for v in &problem.vars {
            lower.push(v.lower);
            upper.push(v.upper);
            cost.push(v.cost);
            for b in [v.lower, v.upper] {
                if b.is_finite() {
                    scale = scale.max(b.abs());
                }
            }
        }
        for r in &problem.rows {
            let (lo, hi) = match r.sense {
                Sense::Le => (-r.rhs, inf),
                Sense::Ge => (-inf, -r.rhs),
                Sense::Eq => (-r.rhs, -r.rhs),
            };
            lower.push(lo);
            upper.push(hi);
            cost.push(T::zero());
            scale = scale.max(r.rhs.abs());
        }

        let tol_p = T::of(config.feasibility_tolerance).max(T::epsilon() * T::of(64.0));
        let tol_d = T::of(config.optimality_tolerance).max(T::epsilon() * T::of(64.0));
        Self {
            n,
            m,
            col_start,
            col_idx,
            col_val,
            row_start,
            row_idx,
            row_val,
            lower,
            upper,
            art_lower: vec![false; n + m],
            art_upper: vec![false; n + m],
            orig_cost: cost.clone(),
            cost,
            big_m: scale * T::of(1e4),
            x: vec![T::zero(); n + m],
            state: vec![BasisStatus::AtLower; n + m],
            basis: vec![NONE; m],
            pos_of: vec![NONE; n + m],
            d: vec![T::zero(); n + m],
            weights: vec![T::one(); m],
            lu: None,
            tol_p,
            tol_d,
            tol_piv: T::epsilon().sqrt() * T::of(1e-1),
            iterations: 0,
            max_iterations: config.max_iterations,
            started: Instant::now(),
            time_limit: config.time_limit,
            buf_rows: vec![T::zero(); m],
            buf_pos: vec![T::zero(); m],
            col: vec![T::zero(); m],
            rho: vec![T::zero(); m],
            tau: vec![T::zero(); m],
            alpha: vec![T::zero(); n + m],
            touched: Vec::new(),
            in_touched: vec![false; n + m],
        }
    }

    // ----------------------------------------------------------------- setup

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (range, logical) = if j < self.n {
            (self.col_start[j]..self.col_start[j + 1], None)
        } else {
            (0..0, Some(j - self.n))
        };
        range
            .map(move |e| (self.col_idx[e], self.col_val[e]))
            .chain(logical.map(|i| (i, T::one())))
    }

    fn install_slack_basis(&mut self) {
        for j in 0..self.n {
            self.state[j] = self.resting_status(j, self.cost[j]);
            self.pos_of[j] = NONE;
        }
        for i in 0..self.m {
            let j = self.n + i;
            self.state[j] = BasisStatus::Basic;
            self.basis[i] = j;
            self.pos_of[j] = i;
        }
        self.set_nonbasic_values();
    }

    /// Preferred nonbasic status given the sign of a reduced cost.
    fn resting_status(&self, j: usize, dj: T) -> BasisStatus {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        if dj >= T::zero() {
            if lo.is_finite() {
                BasisStatus::AtLower
            } else if hi.is_finite() && dj == T::zero() {
                BasisStatus::AtUpper
            } else if dj == T::zero() {
                BasisStatus::Free
            } else {
                BasisStatus::AtLower
            }
        } else {
            BasisStatus::AtUpper
        }
    }

    fn install_warm_basis(&mut self, warm: &Basis) -> bool {
        if warm.num_vars != self.n
            || warm.num_rows != self.m
            || warm.status.len() != self.n + self.m
            || warm.status.iter().filter(|s| **s == BasisStatus::Basic).count() != self.m
        {
            return false;
        }
        let mut pos = 0;
        for (j, &st) in warm.status.iter().enumerate() {
            if st == BasisStatus::Basic {
                self.basis[pos] = j;
                self.pos_of[j] = pos;
                self.state[j] = BasisStatus::Basic;
                pos += 1;
            } else {
                self.pos_of[j] = NONE;
                self.state[j] = match st {
                    BasisStatus::AtLower if self.lower[j].is_finite() => BasisStatus::AtLower,
                    BasisStatus::AtUpper if self.upper[j].is_finite() => BasisStatus::AtUpper,
                    _ if self.lower[j].is_finite() => BasisStatus::AtLower,
                    _ if self.upper[j].is_finite() => BasisStatus::AtUpper,
                    _ => BasisStatus::Free,
                };
            }
        }
        self.set_nonbasic_values();
        true
    }

    fn set_nonbasic_values(&mut self) {
        for j in 0..self.n + self.m {
            self.x[j] = match self.state[j] {
                BasisStatus::Basic => self.x[j],
                BasisStatus::AtLower => self.bound_or_box(j, false),
                BasisStatus::AtUpper => self.bound_or_box(j, true),
                BasisStatus::Free => T::zero(),
            };
        }
    }

    /// Returns the requested bound, installing an artificial box bound if it is infinite.
    fn bound_or_box(&mut self, j: usize, upper: bool) -> T {
        if upper {
            if !self.upper[j].is_finite() {
                self.upper[j] = self.big_m.max(self.lower[j] + self.big_m);
                self.art_upper[j] = true;
            }
            self.upper[j]
        } else {
            if !self.lower[j].is_finite() {
                self.lower[j] = (-self.big_m).min(self.upper[j] - self.big_m);
                self.art_lower[j] = true;
            }
            self.lower[j]
        }
    }

    // ------------------------------------------------------ factor and solve

    fn refactor(&mut self) -> Result<(), &'static str> {
        for _attempt in 0..self.m + 2 {
            let columns: Vec<Vec<(usize, T)>> = self
                .basis
                .iter()
                .map(|&j| self.column(j).collect())
                .collect();
            match LuFactor::factorize(self.m, &columns, T::of(0.1)) {
                Ok(lu) => {
                    self.lu = Some(lu);
                    return Ok(());
                }
                Err(sing) => {
                    debug!("basis singular, repairing {} positions", sing.positions.len());
                    for (&p, &i) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.basis[p];
                        let logical = self.n + i;
                        if self.pos_of[logical] != NONE {
                            continue;
                        }
                        self.pos_of[out] = NONE;
                        let v = self.x[out];
                        self.state[out] = if self.lower[out].is_finite()
                            && (!self.upper[out].is_finite()
                                || (v - self.lower[out]).abs() <= (self.upper[out] - v).abs())
                        {
                            BasisStatus::AtLower
                        } else if self.upper[out].is_finite() {
                            BasisStatus::AtUpper
                        } else {
                            BasisStatus::Free
                        };
                        self.x[out] = match self.state[out] {
                            BasisStatus::AtLower => self.lower[out],
                            BasisStatus::AtUpper => self.upper[out],
                            _ => T::zero(),
                        };
                        self.basis[p] = logical;
                        self.pos_of[logical] = p;
                        self.state[logical] = BasisStatus::Basic;
                        self.weights[p] = T::one();
                    }
                }
            }
        }
        Err("basis repair failed")
    }

    fn compute_primal(&mut self) {
        let zero = T::zero();
        let mut rhs = std::mem::take(&mut self.buf_rows);
        rhs.iter_mut().for_each(|v| *v = zero);
        for j in 0..self.n + self.m {
            if self.state[j] == BasisStatus::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == zero {
                continue;
            }
            if j < self.n {
                for e in self.col_start[j]..self.col_start[j + 1] {
                    let i = self.col_idx[e];
                    rhs[i] = rhs[i] - self.col_val[e] * xj;
                }
            } else {
                rhs[j - self.n] = rhs[j - self.n] - xj;
            }
        }
        let mut out = std::mem::take(&mut self.buf_pos);
        self.lu.as_ref().unwrap().ftran(&mut rhs, &mut out);
        for p in 0..self.m {
            self.x[self.basis[p]] = out[p];
        }
        self.buf_rows = rhs;
        self.buf_pos = out;
    }

    fn compute_duals(&mut self) {
        let mut cb = std::mem::take(&mut self.buf_pos);
        for p in 0..self.m {
            cb[p] = self.cost[self.basis[p]];
        }
        let mut y = std::mem::take(&mut self.buf_rows);
        self.lu.as_ref().unwrap().btran(&mut cb, &mut y);
        for j in 0..self.n + self.m {
            if self.state[j] == BasisStatus::Basic {
                self.d[j] = T::zero();
                continue;
            }
            let dot = if j < self.n {
                (self.col_start[j]..self.col_start[j + 1])
                    .map(|e| self.col_val[e] * y[self.col_idx[e]])
                    .fold(T::zero(), |a, b| a + b)
            } else {
                y[j - self.n]
            };
            self.d[j] = self.cost[j] - dot;
        }
        self.buf_pos = cb;
        self.buf_rows = y;
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    /// Moves nonbasic variables to the bound that matches the sign of their
    /// reduced cost, boxing infinite bounds where necessary. Returns whether
    /// any value changed.
    fn make_dual_feasible(&mut self) -> bool {
        let mut changed = false;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if st == BasisStatus::Basic || self.is_fixed(j) {
                continue;
            }
            let dj = self.d[j];
            let want = if dj > self.tol_d {
                BasisStatus::AtLower
            } else if dj < -self.tol_d {
                BasisStatus::AtUpper
            } else {
                continue;
            };
            if st != want {
                self.state[j] = want;
                let v = self.bound_or_box(j, want == BasisStatus::AtUpper);
                self.x[j] = v;
                changed = true;
            }
        }
        changed
    }

    /// Removes cost shifts and reports the largest remaining dual infeasibility.
    fn restore_costs(&mut self) -> T {
        self.cost.copy_from_slice(&self.orig_cost);
        self.compute_duals();
        self.max_dual_infeasibility()
    }

    fn max_dual_infeasibility(&self) -> T {
        let mut worst = T::zero();
        for j in 0..self.n + self.m {
            if self.is_fixed(j) {
                continue;
            }
            let dj = self.d[j];
            let v = match self.state[j] {
                BasisStatus::Basic => T::zero(),
                BasisStatus::AtLower => (-dj).max(T::zero()),
                BasisStatus::AtUpper => dj.max(T::zero()),
                BasisStatus::Free => dj.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    fn max_primal_infeasibility(&self) -> T {
        self.basis
            .iter()
            .map(|&j| (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]))
            .fold(T::zero(), T::max)
    }

    fn check_limits(&self) -> Option<&'static str> {
        if self.iterations >= self.max_iterations {
            return Some("iteration limit reached");
        }
        if let Some(limit) = self.time_limit {
            if self.iterations.is_multiple_of(16) && self.started.elapsed() >= limit {
                return Some("time limit reached");
            }
        }
        None
    }

    /// Fills `self.alpha` with row `r` of `B^-1 [A I]` restricted to nonbasic
    /// variables, given `self.rho = e_r^T B^-1`.
    fn compute_pivot_row(&mut self) {
        for &j in &self.touched {
            self.alpha[j] = T::zero();
            self.in_touched[j] = false;
        }
        self.touched.clear();
        let zero = T::zero();
        for i in 0..self.m {
            let ri = self.rho[i];
            if ri == zero {
                continue;
            }
            for e in self.row_start[i]..self.row_start[i + 1] {
                let j = self.row_idx[e];
                if self.state[j] == BasisStatus::Basic {
                    continue;
                }
                if !self.in_touched[j] {
                    self.in_touched[j] = true;
                    self.touched.push(j);
                }
                self.alpha[j] = self.alpha[j] + ri * self.row_val[e];
            }
            let j = self.n + i;
            if self.state[j] != BasisStatus::Basic {
                if !self.in_touched[j] {
                    self.in_touched[j] = true;
                    self.touched.push(j);
                }
                self.alpha[j] = self.alpha[j] + ri;
            }
        }
    }

    fn btran_unit(&mut self, r: usize) {
        let mut e = std::mem::take(&mut self.buf_pos);
        e.iter_mut().for_each(|v| *v = T::zero());
        e[r] = T::one();
        let mut out = std::mem::take(&mut self.rho);
        self.lu.as_ref().unwrap().btran(&mut e, &mut out);
        self.rho = out;
        self.buf_pos = e;
    }

    fn ftran_column(&mut self, q: usize) {
        let mut rhs = std::mem::take(&mut self.buf_rows);
        rhs.iter_mut().for_each(|v| *v = T::zero());
        for (i, a) in self.column(q).collect::<Vec<_>>() {
            rhs[i] = a;
        }
        let mut out = std::mem::take(&mut self.col);
        self.lu.as_ref().unwrap().ftran(&mut rhs, &mut out);
        self.col = out;
        self.buf_rows = rhs;
    }

    fn pivot_basis(&mut self, r: usize, q: usize, leaving_status: BasisStatus) {
        let leaving = self.basis[r];
        self.lu.as_mut().unwrap().update(r, &self.col);
        self.state[leaving] = leaving_status;
        self.pos_of[leaving] = NONE;
        self.basis[r] = q;
        self.state[q] = BasisStatus::Basic;
        self.pos_of[q] = r;
        self.iterations += 1;
    }

    fn needs_refactor(&self) -> bool {
        let lu = self.lu.as_ref().unwrap();
        lu.num_updates() >= REFACTOR_INTERVAL || lu.eta_nonzeros() > 2 * lu.factor_nonzeros() + 4 * self.m
    }

    // ------------------------------------------------------------ dual simplex

    fn dual_loop(&mut self) -> LoopEnd {
        let mut trouble = 0;
        loop {
            if let Some(why) = self.check_limits() {
                return LoopEnd::Limit(why);
            }
            if self.needs_refactor() {
                if let Err(why) = self.refactor() {
                    return LoopEnd::Numerical(why);
                }
                self.compute_primal();
                self.compute_duals();
                self.shift_dual_infeasibilities();
            }

            // Pricing: dual steepest edge.
            let mut r = NONE;
            let mut best = T::zero();
            for p in 0..self.m {
                let j = self.basis[p];
                let xj = self.x[j];
                let infeas = if xj < self.lower[j] - self.tol_p {
                    self.lower[j] - xj
                } else if xj > self.upper[j] + self.tol_p {
                    xj - self.upper[j]
                } else {
                    continue;
                };
                let score = infeas * infeas / self.weights[p];
                if score > best {
                    best = score;
                    r = p;
                }
            }
            if r == NONE {
                return LoopEnd::Optimal;
            }
            let leaving = self.basis[r];
            let to_lower = self.x[leaving] < self.lower[leaving];
            let target = if to_lower {
                self.lower[leaving]
            } else {
                self.upper[leaving]
            };
            let sign = if to_lower { T::one() } else { -T::one() };

            self.btran_unit(r);
            self.compute_pivot_row();

            // Harris ratio test, pass 1.
            let mut theta_max = T::infinity();
            for &j in &self.touched {
                if self.is_fixed(j) {
                    continue;
                }
                let a = sign * self.alpha[j];
                let dj = self.d[j];
                let bound = match self.state[j] {
                    BasisStatus::AtLower if a < -self.tol_piv => (dj + self.tol_d) / -a,
                    BasisStatus::AtUpper if a > self.tol_piv => (self.tol_d - dj) / a,
                    BasisStatus::Free if a.abs() > self.tol_piv => self.tol_d / a.abs(),
                    _ => continue,
                };
                if bound < theta_max {
                    theta_max = bound;
                }
            }
            if theta_max == T::infinity() {
                return LoopEnd::Infeasible;
            }
            // Pass 2: largest pivot among near-minimal ratios.
            let mut q = NONE;
            let mut q_abs = T::zero();
            for &j in &self.touched {
                if self.is_fixed(j) {
                    continue;
                }
                let a = sign * self.alpha[j];
                let dj = self.d[j];
                let ratio = match self.state[j] {
                    BasisStatus::AtLower if a < -self.tol_piv => dj.max(T::zero()) / -a,
                    BasisStatus::AtUpper if a > self.tol_piv => (-dj).max(T::zero()) / a,
                    BasisStatus::Free if a.abs() > self.tol_piv => T::zero(),
                    _ => continue,
                };
                if ratio <= theta_max && a.abs() > q_abs {
                    q_abs = a.abs();
                    q = j;
                }
            }
            if q == NONE {
                return LoopEnd::Infeasible;
            }

            self.ftran_column(q);
            let alpha_row = self.alpha[q];
            let alpha_col = self.col[r];
            if alpha_col.abs() <= self.tol_piv
                || (alpha_col - alpha_row).abs() > T::of(1e-6) * (T::one() + alpha_col.abs())
            {
                trouble += 1;
                if trouble > 3 {
                    return LoopEnd::Numerical("unstable pivot in dual simplex");
                }
                if let Err(why) = self.refactor() {
                    return LoopEnd::Numerical(why);
                }
                self.compute_primal();
                self.compute_duals();
                self.shift_dual_infeasibilities();
                continue;
            }
            trouble = 0;

            // Dual update, shifting the entering cost if Harris let it go slightly infeasible.
            let mut dq = self.d[q];
            let wrong_sign = match self.state[q] {
                BasisStatus::AtLower => dq < T::zero(),
                BasisStatus::AtUpper => dq > T::zero(),
                _ => dq != T::zero(),
            };
            if wrong_sign {
                self.cost[q] = self.cost[q] - dq;
                dq = T::zero();
            }
            let theta_d = dq / alpha_row;
            for &j in &self.touched {
                self.d[j] = self.d[j] - theta_d * self.alpha[j];
            }
            self.d[q] = T::zero();
            self.d[leaving] = -theta_d;

            // Primal update.
            let theta_p = (self.x[leaving] - target) / alpha_col;
            for p in 0..self.m {
                let c = self.col[p];
                if c != T::zero() {
                    let j = self.basis[p];
                    self.x[j] = self.x[j] - theta_p * c;
                }
            }
            let entering_value = self.x[q] + theta_p;

            // Dual steepest-edge weights.
            let wr = self.rho.iter().fold(T::zero(), |acc, &v| acc + v * v);
            {
                let mut rhs = std::mem::take(&mut self.buf_rows);
                rhs.copy_from_slice(&self.rho);
                let mut tau = std::mem::take(&mut self.tau);
                self.lu.as_ref().unwrap().ftran(&mut rhs, &mut tau);
                for p in 0..self.m {
                    let c = self.col[p];
                    if p == r || c == T::zero() {
                        continue;
                    }
                    let ratio = c / alpha_col;
                    let w = self.weights[p] - T::of(2.0) * ratio * tau[p] + ratio * ratio * wr;
                    self.weights[p] = w.max(ratio * ratio).max(T::of(1e-6));
                }
                self.weights[r] = (wr / (alpha_col * alpha_col)).max(T::of(1e-6));
                self.tau = tau;
                self.buf_rows = rhs;
            }

            let leaving_status = if to_lower {
                BasisStatus::AtLower
            } else {
                BasisStatus::AtUpper
            };
            self.pivot_basis(r, q, leaving_status);
            self.x[leaving] = target;
            self.x[q] = entering_value;
        }
    }

    /// After recomputing reduced costs from scratch, absorbs small sign errors into cost shifts.
    fn shift_dual_infeasibilities(&mut self) {
        for j in 0..self.n + self.m {
            if self.state[j] == BasisStatus::Basic || self.is_fixed(j) {
                continue;
            }
            let dj = self.d[j];
            let bad = match self.state[j] {
                BasisStatus::AtLower => dj < T::zero(),
                BasisStatus::AtUpper => dj > T::zero(),
                BasisStatus::Free => dj != T::zero(),
                BasisStatus::Basic => false,
            };
            if bad {
                if dj.abs() > self.tol_d * T::of(10.0) {
                    // Large error: flip to the matching bound instead.
                    continue;
                }
                self.cost[j] = self.cost[j] - dj;
                self.d[j] = T::zero();
            }
        }
        if self.make_dual_feasible() {
            self.compute_primal();
        }
    }

    // ---------------------------------------------------------- primal simplex

    fn primal_loop(&mut self) -> LoopEnd {
        let mut trouble = 0;
        loop {
            if let Some(why) = self.check_limits() {
                return LoopEnd::Limit(why);
            }
            if self.needs_refactor() {
                if let Err(why) = self.refactor() {
                    return LoopEnd::Numerical(why);
                }
                self.compute_primal();
                self.compute_duals();
            }
            let mut q = NONE;
            let mut best = self.tol_d;
            for j in 0..self.n + self.m {
                if self.state[j] == BasisStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let dj = self.d[j];
                let infeas = match self.state[j] {
                    BasisStatus::AtLower => -dj,
                    BasisStatus::AtUpper => dj,
                    BasisStatus::Free => dj.abs(),
                    BasisStatus::Basic => continue,
                };
                if infeas > best {
                    best = infeas;
                    q = j;
                }
            }
            if q == NONE {
                return LoopEnd::Optimal;
            }
            let dir = if self.d[q] < T::zero() {
                T::one()
            } else {
                -T::one()
            };
            self.ftran_column(q);

            // Harris ratio test over basic variables.
            let mut theta_max = T::infinity();
            for p in 0..self.m {
                let rate = -dir * self.col[p];
                if rate.abs() <= self.tol_piv {
                    continue;
                }
                let j = self.basis[p];
                let lim = if rate < T::zero() {
                    if !self.lower[j].is_finite() {
                        continue;
                    }
                    (self.x[j] - self.lower[j] + self.tol_p) / -rate
                } else {
                    if !self.upper[j].is_finite() {
                        continue;
                    }
                    (self.upper[j] - self.x[j] + self.tol_p) / rate
                };
                theta_max = theta_max.min(lim);
            }
            let range = self.upper[q] - self.lower[q];
            if theta_max == T::infinity() && !range.is_finite() {
                return LoopEnd::Unbounded;
            }
            let mut r = NONE;
            let mut r_abs = T::zero();
            let mut step = T::zero();
            for p in 0..self.m {
                let rate = -dir * self.col[p];
                if rate.abs() <= self.tol_piv {
                    continue;
                }
                let j = self.basis[p];
                let dist = if rate < T::zero() {
                    if !self.lower[j].is_finite() {
                        continue;
                    }
                    (self.x[j] - self.lower[j]).max(T::zero()) / -rate
                } else {
                    if !self.upper[j].is_finite() {
                        continue;
                    }
                    (self.upper[j] - self.x[j]).max(T::zero()) / rate
                };
                if dist <= theta_max && rate.abs() > r_abs {
                    r_abs = rate.abs();
                    r = p;
                    step = dist;
                }
            }

            if r == NONE || range <= step {
                // Bound flip of the entering variable.
                let step = range;
                for p in 0..self.m {
                    let c = self.col[p];
                    if c != T::zero() {
                        let j = self.basis[p];
                        self.x[j] = self.x[j] - dir * step * c;
                    }
                }
                if dir > T::zero() {
                    self.state[q] = BasisStatus::AtUpper;
                    self.x[q] = self.upper[q];
                } else {
                    self.state[q] = BasisStatus::AtLower;
                    self.x[q] = self.lower[q];
                }
                self.iterations += 1;
                continue;
            }

            self.btran_unit(r);
            self.compute_pivot_row();
            let alpha_row = self.alpha[q];
            let alpha_col = self.col[r];
            if alpha_col.abs() <= self.tol_piv
                || (alpha_col - alpha_row).abs() > T::of(1e-6) * (T::one() + alpha_col.abs())
            {
                trouble += 1;
                if trouble > 3 {
                    return LoopEnd::Numerical("unstable pivot in primal simplex");
                }
                if let Err(why) = self.refactor() {
                    return LoopEnd::Numerical(why);
                }
                self.compute_primal();
                self.compute_duals();
                continue;
            }
            trouble = 0;

            let leaving = self.basis[r];
            let rate_r = -dir * alpha_col;
            let (leaving_status, leaving_value) = if rate_r < T::zero() {
                (BasisStatus::AtLower, self.lower[leaving])
            } else {
                (BasisStatus::AtUpper, self.upper[leaving])
            };
            for p in 0..self.m {
                let c = self.col[p];
                if c != T::zero() {
                    let j = self.basis[p];
                    self.x[j] = self.x[j] - dir * step * c;
                }
            }
            let entering_value = self.x[q] + dir * step;

            let theta_d = self.d[q] / alpha_row;
            for &j in &self.touched {
                self.d[j] = self.d[j] - theta_d * self.alpha[j];
            }
            self.d[q] = T::zero();
            self.d[leaving] = -theta_d;

            self.pivot_basis(r, q, leaving_status);
            self.weights[r] = T::one();
            self.x[leaving] = leaving_value;
            self.x[q] = entering_value;
        }
    }

    // ----------------------------------------------------------------- driver

    /// Widens the artificial box if any variable rests on it. Returns
    /// `Ok(true)` if the box was widened, `Err` if it can no longer grow.
    fn widen_box_if_active(&mut self) -> Result<bool, ()> {
        let mut active = false;
        for j in 0..self.n + self.m {
            let near = |b: T, x: T| (x - b).abs() <= self.tol_p * (T::one() + b.abs());
            if (self.art_lower[j] && near(self.lower[j], self.x[j]))
                || (self.art_upper[j] && near(self.upper[j], self.x[j]))
            {
                active = true;
                break;
            }
        }
        if !active {
            return Ok(false);
        }
        let limit = T::max_value().sqrt();
        let new_m = self.big_m * T::of(1e3);
        if new_m >= limit {
            return Err(());
        }
        let factor = new_m / self.big_m;
        self.big_m = new_m;
        for j in 0..self.n + self.m {
            if self.art_lower[j] {
                self.lower[j] = self.lower[j] * factor;
                if self.state[j] == BasisStatus::AtLower {
                    self.x[j] = self.lower[j];
                }
            }
            if self.art_upper[j] {
                self.upper[j] = self.upper[j] * factor;
                if self.state[j] == BasisStatus::AtUpper {
                    self.x[j] = self.upper[j];
                }
            }
        }
        Ok(true)
    }

    fn run(&mut self, warm: Option<&Basis>) -> Status {
        if self.m == 0 {
            return self.solve_unconstrained();
        }
        let warm_ok = warm.is_some_and(|b| self.install_warm_basis(b));
        if !warm_ok {
            self.install_slack_basis();
        }
        if let Err(why) = self.refactor() {
            return Status::NumericalFailure(why.into());
        }
        self.compute_duals();
        self.make_dual_feasible();
        self.compute_primal();

        let mut widenings = 0;
        for _round in 0..MAX_BOX_WIDENINGS + 8 {
            match self.dual_loop() {
                LoopEnd::Optimal => {}
                LoopEnd::Infeasible => {
                    // Confirm on a fresh factorization before giving up.
                    if self.refactor().is_err() {
                        return Status::NumericalFailure("basis repair failed".into());
                    }
                    self.compute_primal();
                    self.compute_duals();
                    self.shift_dual_infeasibilities();
                    match self.dual_loop() {
                        LoopEnd::Optimal => {}
                        LoopEnd::Infeasible => return Status::Infeasible,
                        LoopEnd::Unbounded => return Status::Unbounded,
                        LoopEnd::Limit(why) | LoopEnd::Numerical(why) => {
                            return Status::NumericalFailure(why.into())
                        }
                    }
                }
                LoopEnd::Unbounded => return Status::Unbounded,
                LoopEnd::Limit(why) | LoopEnd::Numerical(why) => {
                    return Status::NumericalFailure(why.into())
                }
            }

            if self.refactor().is_err() {
                return Status::NumericalFailure("basis repair failed".into());
            }
            self.compute_primal();
            let dual_infeas = self.restore_costs();
            if dual_infeas > self.tol_d {
                self.weights.iter_mut().for_each(|w| *w = T::one());
                match self.primal_loop() {
                    LoopEnd::Optimal => {}
                    LoopEnd::Unbounded => return Status::Unbounded,
                    LoopEnd::Infeasible => return Status::Infeasible,
                    LoopEnd::Limit(why) | LoopEnd::Numerical(why) => {
                        return Status::NumericalFailure(why.into())
                    }
                }
                if self.refactor().is_err() {
                    return Status::NumericalFailure("basis repair failed".into());
                }
                self.compute_primal();
                self.compute_duals();
            }

            match self.widen_box_if_active() {
                Ok(true) => {
                    widenings += 1;
                    if widenings > MAX_BOX_WIDENINGS {
                        return Status::Unbounded;
                    }
                    self.compute_primal();
                    continue;
                }
                Ok(false) => {}
                Err(()) => return Status::Unbounded,
            }

            let p_inf = self.max_primal_infeasibility();
            let d_inf = self.max_dual_infeasibility();
            if p_inf <= self.tol_p && d_inf <= self.tol_d {
                return Status::Optimal;
            }
            debug!("re-entering dual simplex: primal infeas {p_inf:?}, dual infeas {d_inf:?}");
            self.shift_dual_infeasibilities();
        }
        Status::NumericalFailure("simplex did not settle to a verified optimum".into())
    }

    fn solve_unconstrained(&mut self) -> Status {
        for j in 0..self.n {
            let c = self.cost[j];
            let (lo, hi) = (self.lower[j], self.upper[j]);
            self.x[j] = if c > T::zero() {
                if !lo.is_finite() {
                    return Status::Unbounded;
                }
                lo
            } else if c < T::zero() {
                if !hi.is_finite() {
                    return Status::Unbounded;
                }
                hi
            } else if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                T::zero()
            };
        }
        Status::Optimal
    }

    fn export_basis(&self) -> Basis {
        let status = (0..self.n + self.m)
            .map(|j| match self.state[j] {
                BasisStatus::AtLower if self.art_lower[j] => BasisStatus::Free,
                BasisStatus::AtUpper if self.art_upper[j] => BasisStatus::Free,
                s => s,
            })
            .collect();
        Basis {
            num_vars: self.n,
            num_rows: self.m,
            status,
        }
    }
}
