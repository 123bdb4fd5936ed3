//! Linear programming backend.
//!
//! Dispatch problems talk to [`LpSolver`]; the shipped implementation is a
//! dense revised simplex with bounded variables and a two-phase start.
//! Every row is a range `lower <= a·x <= upper`, which covers equalities
//! (`lower == upper`) and one-sided rows (an infinite side).

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("problem is unbounded along variable {variable}")]
    Unbounded { variable: usize },
    #[error("iteration limit {iterations} reached")]
    IterationLimit { iterations: usize },
    #[error("numerical failure after {iterations} iterations: {message}")]
    Numerical { iterations: usize, message: String },
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coefs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// `min cᵀx` subject to row ranges and variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub costs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    /// Adds a variable and returns its index. Rows added earlier get a zero coefficient.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for row in &mut self.rows {
            row.coefs.push(0.0);
        }
        self.costs.len() - 1
    }

    /// Adds `lower <= coefs·x <= upper`; `coefs` must have one entry per variable.
    pub fn add_row(&mut self, coefs: Vec<f64>, lower: f64, upper: f64) -> usize {
        self.rows.push(LpRow { coefs, lower, upper });
        self.rows.len() - 1
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match cost vector".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u || l == f64::INFINITY || u == f64::NEG_INFINITY || l.is_nan() || u.is_nan() {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.coefs.len() != n {
                return Err(LpError::Malformed(format!("row {r} has {} coefficients, expected {n}", row.coefs.len())));
            }
            if row.lower > row.upper || row.coefs.iter().any(|c| !c.is_finite()) {
                return Err(LpError::Malformed(format!("row {r} is inconsistent")));
            }
        }
        if self.costs.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite cost".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `a·x` for every row.
    pub row_activity: Vec<f64>,
    pub iterations: usize,
}

pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

#[derive(Debug, Clone)]
pub struct BoundedSimplex {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    /// Rebuild the basis inverse from scratch this often.
    pub refactor_every: usize,
}

impl Default for BoundedSimplex {
    fn default() -> Self {
        BoundedSimplex {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-10,
            max_iterations: 50_000,
            refactor_every: 50,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Column {
    Structural(usize),
    /// `-e_r`
    Logical(usize),
    /// `sign * e_r`
    Artificial(usize, f64),
}

struct Tableau<'a> {
    lp: &'a LinearProgram,
    cols: Vec<Column>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    value: Vec<f64>,
    /// Basic column per row position.
    basis: Vec<usize>,
    /// Position in `basis`, if basic.
    position: Vec<Option<usize>>,
    binv: DMatrix<f64>,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        match self.cols[j] {
            Column::Structural(k) => self.lp.rows.iter().zip(y).map(|(row, yr)| row.coefs[k] * yr).sum(),
            Column::Logical(r) => -y[r],
            Column::Artificial(r, s) => s * y[r],
        }
    }

    fn dense_column(&self, j: usize) -> Vec<f64> {
        let m = self.lp.rows.len();
        match self.cols[j] {
            Column::Structural(k) => self.lp.rows.iter().map(|row| row.coefs[k]).collect(),
            Column::Logical(r) => {
                let mut c = vec![0.0; m];
                c[r] = -1.0;
                c
            }
            Column::Artificial(r, s) => {
                let mut c = vec![0.0; m];
                c[r] = s;
                c
            }
        }
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = col.len();
        let mut out = vec![0.0; m];
        for (k, &c) in col.iter().enumerate() {
            if c != 0.0 {
                for i in 0..m {
                    out[i] += self.binv[(i, k)] * c;
                }
            }
        }
        out
    }

    /// Rebuilds `B⁻¹` and recomputes basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.lp.rows.len();
        if m == 0 {
            return Ok(());
        }
        let mut b = DMatrix::zeros(m, m);
        for (p, &j) in self.basis.iter().enumerate() {
            for (r, v) in self.dense_column(j).into_iter().enumerate() {
                b[(r, p)] = v;
            }
        }
        self.binv = b.try_inverse().ok_or_else(|| LpError::Numerical {
            iterations: self.iterations,
            message: "singular basis".into(),
        })?;
        let mut rhs = vec![0.0; m];
        for j in 0..self.cols.len() {
            if self.position[j].is_none() && self.value[j] != 0.0 {
                let v = self.value[j];
                match self.cols[j] {
                    Column::Structural(k) => {
                        for (r, row) in self.lp.rows.iter().enumerate() {
                            rhs[r] -= row.coefs[k] * v;
                        }
                    }
                    Column::Logical(r) => rhs[r] += v,
                    Column::Artificial(r, s) => rhs[r] -= s * v,
                }
            }
        }
        let xb = self.ftran(&rhs);
        for (p, &j) in self.basis.iter().enumerate() {
            self.value[j] = xb[p];
        }
        Ok(())
    }

    fn run(&mut self, opts: &BoundedSimplex) -> Result<(), LpError> {
        let m = self.lp.rows.len();
        let cost_scale = self.cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        let dtol = opts.optimality_tol * cost_scale;
        let mut degenerate_streak = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit { iterations: self.iterations });
            }
            if since_refactor >= opts.refactor_every {
                self.refactor()?;
                since_refactor = 0;
            }
            // duals
            let mut y = vec![0.0; m];
            for (p, &j) in self.basis.iter().enumerate() {
                let c = self.cost[j];
                if c != 0.0 {
                    for (r, yr) in y.iter_mut().enumerate() {
                        *yr += c * self.binv[(p, r)];
                    }
                }
            }
            let mut structural_price = vec![0.0; self.lp.num_vars()];
            for (row, &yr) in self.lp.rows.iter().zip(&y) {
                if yr != 0.0 {
                    for (sp, a) in structural_price.iter_mut().zip(&row.coefs) {
                        *sp += yr * a;
                    }
                }
            }
            let bland = degenerate_streak > 50;
            let mut entering: Option<(usize, f64, f64)> = None; // (col, direction, |d|)
            for j in 0..self.cols.len() {
                if self.position[j].is_some() || self.lo[j] == self.hi[j] {
                    continue;
                }
                let price = match self.cols[j] {
                    Column::Structural(k) => structural_price[k],
                    _ => self.column_dot(j, &y),
                };
                let d = self.cost[j] - price;
                let at_lower = self.value[j] <= self.lo[j];
                let at_upper = self.value[j] >= self.hi[j];
                let dir = if d < -dtol && !at_upper {
                    1.0
                } else if d > dtol && !at_lower {
                    -1.0
                } else {
                    continue;
                };
                let better = match entering {
                    None => true,
                    Some((_, _, best)) => !bland && d.abs() > best,
                };
                if better {
                    entering = Some((j, dir, d.abs()));
                }
                if bland {
                    break;
                }
            }
            let Some((q, dir, _)) = entering else {
                return Ok(());
            };
            self.iterations += 1;
            since_refactor += 1;

            let alpha = self.ftran(&self.dense_column(q));
            let mut step = self.hi[q] - self.lo[q];
            let mut leaving: Option<(usize, f64)> = None;
            let mut best_pivot = 0.0;
            for (p, &a) in alpha.iter().enumerate() {
                if a.abs() <= opts.pivot_tol {
                    continue;
                }
                let j = self.basis[p];
                let rate = dir * a;
                let (limit, bound) = if rate > 0.0 {
                    if self.lo[j] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.value[j] - self.lo[j]) / rate).max(0.0), self.lo[j])
                } else {
                    if self.hi[j] == f64::INFINITY {
                        continue;
                    }
                    (((self.hi[j] - self.value[j]) / -rate).max(0.0), self.hi[j])
                };
                let eps = 1e-12 * limit.abs().max(1.0);
                let tie = step.is_finite() && (limit - step).abs() <= eps;
                if (limit < step && !tie) || (tie && a.abs() > best_pivot) {
                    step = limit;
                    leaving = Some((p, bound));
                    best_pivot = a.abs();
                }
            }
            if step == f64::INFINITY {
                let variable = match self.cols[q] {
                    Column::Structural(k) => k,
                    _ => usize::MAX,
                };
                return Err(LpError::Unbounded { variable });
            }
            degenerate_streak = if step <= 1e-12 { degenerate_streak + 1 } else { 0 };

            self.value[q] += dir * step;
            for (p, &a) in alpha.iter().enumerate() {
                let j = self.basis[p];
                self.value[j] -= dir * step * a;
            }
            match leaving {
                None => {
                    // bound flip
                    self.value[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((p, bound)) => {
                    let out = self.basis[p];
                    self.value[out] = bound;
                    self.position[out] = None;
                    self.basis[p] = q;
                    self.position[q] = Some(p);
                    let pivot = alpha[p];
                    for c in 0..m {
                        self.binv[(p, c)] /= pivot;
                    }
                    for i in 0..m {
                        if i != p && alpha[i] != 0.0 {
                            let f = alpha[i];
                            for c in 0..m {
                                let v = self.binv[(p, c)];
                                self.binv[(i, c)] -= f * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

impl LpSolver for BoundedSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.check()?;
        let n = lp.num_vars();
        let m = lp.rows.len();
        let mut cols: Vec<Column> = (0..n).map(Column::Structural).collect();
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        let mut value: Vec<f64> = (0..n)
            .map(|j| {
                if lo[j].is_finite() {
                    lo[j]
                } else if hi[j].is_finite() {
                    hi[j]
                } else {
                    0.0
                }
            })
            .collect();
        let activity: Vec<f64> = lp
            .rows
            .iter()
            .map(|row| row.coefs.iter().zip(&value).map(|(a, x)| a * x).sum())
            .collect();
        let mut basis = Vec::with_capacity(m);
        let mut binv = DMatrix::zeros(m, m);
        let mut artificials = Vec::new();
        for (r, row) in lp.rows.iter().enumerate() {
            let a = activity[r];
            cols.push(Column::Logical(r));
            lo.push(row.lower);
            hi.push(row.upper);
            let logical = cols.len() - 1;
            let tol = self.feasibility_tol * (1.0 + a.abs());
            if a >= row.lower - tol && a <= row.upper + tol {
                value.push(a);
                basis.push(logical);
                binv[(r, r)] = -1.0;
            } else {
                let bound = if a < row.lower { row.lower } else { row.upper };
                value.push(bound);
                let sign = if bound > a { 1.0 } else { -1.0 };
                cols.push(Column::Artificial(r, sign));
                lo.push(0.0);
                hi.push(f64::INFINITY);
                value.push((bound - a) * sign);
                basis.push(cols.len() - 1);
                artificials.push(cols.len() - 1);
                binv[(r, r)] = sign;
            }
        }
        let mut position = vec![None; cols.len()];
        for (p, &j) in basis.iter().enumerate() {
            position[j] = Some(p);
        }
        let mut tab = Tableau {
            lp,
            cost: vec![0.0; cols.len()],
            cols,
            lo,
            hi,
            value,
            basis,
            position,
            binv,
            iterations: 0,
        };

        if !artificials.is_empty() {
            for &j in &artificials {
                tab.cost[j] = 1.0;
            }
            tab.run(self)?;
            tab.refactor()?;
            let residual: f64 = artificials.iter().map(|&j| tab.value[j].max(0.0)).sum();
            let scale = lp
                .rows
                .iter()
                .map(|r| r.lower.abs().min(r.upper.abs()))
                .filter(|v| v.is_finite())
                .fold(1.0_f64, f64::max);
            if residual > 1e-7 * scale {
                return Err(LpError::Infeasible { residual });
            }
            for &j in &artificials {
                tab.cost[j] = 0.0;
                tab.hi[j] = 0.0;
                if tab.position[j].is_none() {
                    tab.value[j] = 0.0;
                }
            }
        }
        for j in 0..n {
            tab.cost[j] = lp.costs[j];
        }
        tab.run(self)?;
        tab.refactor()?;

        let x: Vec<f64> = (0..n)
            .map(|j| tab.value[j].clamp(lp.lower[j], lp.upper[j]))
            .collect();
        let row_activity: Vec<f64> = lp
            .rows
            .iter()
            .map(|row| row.coefs.iter().zip(&x).map(|(a, v)| a * v).sum())
            .collect();
        for (r, (row, &a)) in lp.rows.iter().zip(&row_activity).enumerate() {
            let tol = 1e-6 * (1.0 + a.abs());
            if a < row.lower - tol || a > row.upper + tol {
                return Err(LpError::Numerical {
                    iterations: tab.iterations,
                    message: format!("row {r} activity {a} outside [{}, {}]", row.lower, row.upper),
                });
            }
        }
        let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective, row_activity, iterations: tab.iterations })
    }
}
