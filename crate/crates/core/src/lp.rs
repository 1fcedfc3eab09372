//! Dense linear programming with an optional PSD cutting-plane loop.
//!
//! Problems are stated as
//!
//! ```text
//! maximize    c . x
//! subject to  a_i . x  (<= | >= | =)  b_i
//!             x_j >= l_j            (optional per variable)
//! ```
//!
//! The identification LPs have a handful of variables and thousands of
//! rows, so [`solve_lp`] equilibrates the rows and columns and runs a
//! two-phase tableau simplex on the dual
//!
//! ```text
//! minimize    b . y   subject to   A^T y = c,   y >= 0
//! ```
//!
//! whose tableau has one row per primal variable. The primal point is read
//! off the final dual basis through the simplex multipliers. An unbounded
//! dual ray is a Farkas certificate of primal infeasibility.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// One entry of a symmetric matrix block: `P[row][col] = P[col][row] = coeff * x[var]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdEntry {
    pub row: usize,
    pub col: usize,
    pub var: usize,
    pub coeff: f64,
}

/// A symmetric `dim x dim` matrix, linear in the decision variables, that
/// must be positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub dim: usize,
    pub entries: Vec<PsdEntry>,
}

impl PsdBlock {
    pub fn validate(&self, num_vars: usize) -> Result<(), String> {
        for e in &self.entries {
            if e.row >= self.dim || e.col >= self.dim || e.var >= num_vars {
                return Err(format!("psd entry {e:?} out of range"));
            }
        }
        Ok(())
    }

    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim, self.dim);
        for e in &self.entries {
            let v = e.coeff * x[e.var];
            p[(e.row, e.col)] += v;
            if e.row != e.col {
                p[(e.col, e.row)] += v;
            }
        }
        p
    }

    /// Smallest eigenvalue and its unit eigenvector.
    pub fn min_eigen(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let eig = SymmetricEigen::new(self.matrix(x));
        let (idx, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty block");
        (lambda, eig.eigenvectors.column(idx).iter().copied().collect())
    }

    /// Coefficients of the linear form `v^T P(x) v` in the variables.
    pub fn quadratic_form_row(&self, v: &[f64], num_vars: usize) -> Vec<f64> {
        let mut row = vec![0.0; num_vars];
        for e in &self.entries {
            let w = if e.row == e.col { 1.0 } else { 2.0 };
            row[e.var] += w * e.coeff * v[e.row] * v[e.col];
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub num_vars: usize,
    /// Maximized.
    pub objective: Vec<f64>,
    pub rows: Vec<LinearRow>,
    /// `None` means the variable is free.
    pub lower_bounds: Vec<Option<f64>>,
    pub psd_block: Option<PsdBlock>,
    /// Variables constrained to be nonnegative, on top of `lower_bounds`.
    pub sign_constrained: Vec<usize>,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            lower_bounds: vec![None; num_vars],
            psd_block: None,
            sign_constrained: Vec::new(),
        }
    }

    pub fn push_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars);
        self.rows.push(LinearRow::new(coeffs, sense, rhs));
    }

    /// Effective lower bound of a variable after merging sign constraints.
    pub fn effective_lower_bound(&self, j: usize) -> Option<f64> {
        let sign = self.sign_constrained.contains(&j).then_some(0.0);
        match (self.lower_bounds[j], sign) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.objective.len() != self.num_vars || self.lower_bounds.len() != self.num_vars {
            return Err("objective/bounds width mismatch".into());
        }
        if let Some(i) = self.rows.iter().position(|r| r.coeffs.len() != self.num_vars) {
            return Err(format!("row {i} has the wrong width"));
        }
        if self.sign_constrained.iter().any(|&j| j >= self.num_vars) {
            return Err("sign-constrained index out of range".into());
        }
        if let Some(b) = &self.psd_block {
            b.validate(self.num_vars)?;
        }
        Ok(())
    }

    /// Largest violation of any row or bound by `x`, in the problem's own units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        (0..self.num_vars)
            .filter_map(|j| self.effective_lower_bound(j).map(|l| (l - x[j]).max(0.0)))
            .fold(rows, f64::max)
    }

    /// Largest violation with each row divided by its largest coefficient.
    pub fn max_scaled_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let scale = r.coeffs.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
                if scale > 0.0 {
                    r.violation(x) / scale
                } else {
                    r.violation(x)
                }
            })
            .fold(0.0, f64::max);
        (0..self.num_vars)
            .filter_map(|j| self.effective_lower_bound(j).map(|l| (l - x[j]).max(0.0)))
            .fold(rows, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Where a certificate multiplier applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintRef {
    Row(usize),
    LowerBound(usize),
}

/// Nonnegative multipliers `y` over the constraints, each written as
/// `a . x <= b` (`>=` rows and lower bounds negated, equalities split), with
/// `sum y_i a_i = 0` and `sum y_i b_i < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    pub multipliers: Vec<(ConstraintRef, f64)>,
    /// `sum y_i b_i`, negative.
    pub combined_rhs: f64,
}

impl FarkasCertificate {
    /// Returns `(max |sum y_i a_i|, combined rhs)` recomputed from `problem`.
    pub fn check(&self, problem: &LpProblem) -> (f64, f64) {
        let mut combo = vec![0.0; problem.num_vars];
        let mut rhs = 0.0;
        for &(r, y) in &self.multipliers {
            match r {
                ConstraintRef::Row(i) => {
                    let row = &problem.rows[i];
                    let s = match row.sense {
                        Sense::Le => 1.0,
                        Sense::Ge => -1.0,
                        Sense::Eq => 1.0,
                    };
                    for (c, a) in combo.iter_mut().zip(&row.coeffs) {
                        *c += s * y * a;
                    }
                    rhs += s * y * row.rhs;
                }
                ConstraintRef::LowerBound(j) => {
                    combo[j] -= y;
                    rhs -= y * problem.effective_lower_bound(j).unwrap_or(0.0);
                }
            }
        }
        (combo.iter().fold(0.0, |m, c| m.max(c.abs())), rhs)
    }

    pub fn summary(&self) -> String {
        format!(
            "nonnegative combination of {} constraints yields 0 <= {:.3e}",
            self.multipliers.len(),
            self.combined_rhs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Present iff `status` is optimal.
    pub solution: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    pub cuts_added: usize,
    pub iterations: usize,
    pub certificate: Option<FarkasCertificate>,
    /// Last relaxation optimum when the cut budget ran out.
    pub best_iterate: Option<Vec<f64>>,
}

impl SolveOutcome {
    fn bare(status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            solution: None,
            objective_value: None,
            cuts_added: 0,
            iterations,
            certificate: None,
            best_iterate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Optimality and feasibility tolerance in scaled units.
    pub tolerance: f64,
    pub pivot_tolerance: f64,
    /// Rebuild the tableau from the original data every this many pivots.
    pub refactor_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 100_000, tolerance: 1e-10, pivot_tolerance: 1e-11, refactor_every: 40 }
    }
}

pub fn solve_lp(problem: &LpProblem) -> SolveOutcome {
    solve_lp_with(problem, &SolverOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, opts: &SolverOptions) -> SolveOutcome {
    if let Err(e) = problem.validate() {
        panic!("malformed LP: {e}");
    }
    let norm = Normalized::new(problem);
    if let Some((origin, mult, rhs)) = norm.trivially_infeasible {
        return SolveOutcome {
            certificate: Some(FarkasCertificate { multipliers: vec![(origin, mult)], combined_rhs: rhs }),
            ..SolveOutcome::bare(SolveStatus::Infeasible, 0)
        };
    }

    match run_dual(&norm, &norm.objective, opts) {
        DualResult::Optimal { x, iterations } => {
            let x = norm.unscale(&x);
            let value = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            SolveOutcome {
                solution: Some(x),
                objective_value: Some(value),
                ..SolveOutcome::bare(SolveStatus::Optimal, iterations)
            }
        }
        DualResult::Unbounded { ray, iterations } => SolveOutcome {
            certificate: Some(norm.certificate(&ray)),
            ..SolveOutcome::bare(SolveStatus::Infeasible, iterations)
        },
        DualResult::IterationLimit { iterations } => SolveOutcome::bare(SolveStatus::IterationLimit, iterations),
        DualResult::Infeasible { iterations } => {
            // primal is infeasible or unbounded; decide with a zero objective
            let zero = vec![0.0; norm.num_vars];
            match run_dual(&norm, &zero, opts) {
                DualResult::Optimal { iterations: more, .. } => {
                    SolveOutcome::bare(SolveStatus::Unbounded, iterations + more)
                }
                DualResult::Unbounded { ray, iterations: more } => SolveOutcome {
                    certificate: Some(norm.certificate(&ray)),
                    ..SolveOutcome::bare(SolveStatus::Infeasible, iterations + more)
                },
                DualResult::IterationLimit { iterations: more } | DualResult::Infeasible { iterations: more } => {
                    SolveOutcome::bare(SolveStatus::IterationLimit, iterations + more)
                }
            }
        }
    }
}

/// Constraints rewritten as scaled `<=` rows.
struct Normalized {
    num_vars: usize,
    // row-major, rows x num_vars
    a: Vec<f64>,
    b: Vec<f64>,
    origin: Vec<Origin>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    objective: Vec<f64>,
    trivially_infeasible: Option<(ConstraintRef, f64, f64)>,
}

#[derive(Clone, Copy)]
struct Origin {
    r: ConstraintRef,
    sign: f64,
    is_eq: bool,
}

impl Origin {
    /// Multiplier as reported in a certificate for a normalized-row weight `y >= 0`.
    fn reported(&self, y: f64) -> f64 {
        if self.is_eq {
            self.sign * y
        } else {
            y
        }
    }
}

impl Normalized {
    fn new(p: &LpProblem) -> Self {
        let n = p.num_vars;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut origin = Vec::new();
        let mut trivially_infeasible = None;

        let mut push = |coeffs: &[f64], rhs: f64, o: Origin| {
            let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            if scale == 0.0 {
                if o.sign * rhs < 0.0 && trivially_infeasible.is_none() {
                    trivially_infeasible = Some((o.r, o.reported(1.0), o.sign * rhs));
                }
                return;
            }
            a.extend(coeffs.iter().map(|c| o.sign * c));
            b.push(o.sign * rhs);
            origin.push(o);
        };

        for (i, row) in p.rows.iter().enumerate() {
            let r = ConstraintRef::Row(i);
            let o = |sign, is_eq| Origin { r, sign, is_eq };
            match row.sense {
                Sense::Le => push(&row.coeffs, row.rhs, o(1.0, false)),
                Sense::Ge => push(&row.coeffs, row.rhs, o(-1.0, false)),
                Sense::Eq => {
                    push(&row.coeffs, row.rhs, o(1.0, true));
                    push(&row.coeffs, row.rhs, o(-1.0, true));
                }
            }
        }
        let mut unit = vec![0.0; n];
        for j in 0..n {
            if let Some(l) = p.effective_lower_bound(j) {
                unit.fill(0.0);
                unit[j] = 1.0;
                push(&unit, l, Origin { r: ConstraintRef::LowerBound(j), sign: -1.0, is_eq: false });
            }
        }

        let m = b.len();
        let mut row_scale = vec![1.0; m];
        for i in 0..m {
            let r = &mut a[i * n..(i + 1) * n];
            let s = r.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
            row_scale[i] = 1.0 / s;
            r.iter_mut().for_each(|c| *c /= s);
            b[i] /= s;
        }
        let mut col_scale = vec![1.0; n];
        for (j, cs) in col_scale.iter_mut().enumerate() {
            let s = (0..m).fold(0.0_f64, |acc, i| acc.max(a[i * n + j].abs()));
            if s > 0.0 {
                *cs = 1.0 / s;
                for i in 0..m {
                    a[i * n + j] /= s;
                }
            }
        }
        let objective = p.objective.iter().zip(&col_scale).map(|(c, s)| c * s).collect();
        Self { num_vars: n, a, b, origin, row_scale, col_scale, objective, trivially_infeasible }
    }

    fn rows(&self) -> usize {
        self.b.len()
    }

    fn unscale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col_scale).map(|(v, s)| v * s).collect()
    }

    fn certificate(&self, ray: &[f64]) -> FarkasCertificate {
        let mut multipliers: Vec<(ConstraintRef, f64)> = Vec::new();
        let mut combined_rhs = 0.0;
        for (i, &y) in ray.iter().enumerate() {
            if y <= 0.0 {
                continue;
            }
            let o = self.origin[i];
            let mult = o.reported(y * self.row_scale[i]);
            combined_rhs += y * self.b[i];
            // the two halves of an equality row fold into one signed multiplier
            match multipliers.iter_mut().find(|(rr, _)| *rr == o.r) {
                Some(entry) => entry.1 += mult,
                None => multipliers.push((o.r, mult)),
            }
        }
        FarkasCertificate { multipliers, combined_rhs }
    }
}

enum DualResult {
    Optimal { x: Vec<f64>, iterations: usize },
    Unbounded { ray: Vec<f64>, iterations: usize },
    Infeasible { iterations: usize },
    IterationLimit { iterations: usize },
}

/// Tableau for `min cost . z` s.t. `A z = rhs`, `z >= 0`, where `z` is the
/// dual vector followed by one artificial per row.
struct Tableau {
    m: usize,
    ncols: usize,
    n_struct: usize,
    // original (sign-flipped) equality system, m x n_struct, column-major
    a0: Vec<f64>,
    rhs0: Vec<f64>,
    // current tableau, m x (ncols + 1), row-major; last column is the rhs
    t: Vec<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.ncols + 1
    }

    fn original_column(&self, j: usize, out: &mut [f64]) {
        if j < self.n_struct {
            out.copy_from_slice(&self.a0[j * self.m..(j + 1) * self.m]);
        } else {
            out.fill(0.0);
            out[j - self.n_struct] = 1.0;
        }
    }

    /// Rebuilds the tableau as `B^-1 [A | I | rhs]`. Returns false if the
    /// basis matrix is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut bmat = DMatrix::zeros(m, m);
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.original_column(j, &mut col);
            for i in 0..m {
                bmat[(i, k)] = col[i];
            }
        }
        let Some(binv) = bmat.try_inverse() else {
            return false;
        };
        let w = self.width();
        for j in 0..self.ncols {
            self.original_column(j, &mut col);
            let v = &binv * DVector::from_column_slice(&col);
            for i in 0..m {
                self.t[i * w + j] = v[i];
            }
        }
        let v = &binv * DVector::from_column_slice(&self.rhs0);
        for i in 0..m {
            self.t[i * w + self.ncols] = v[i].max(0.0);
        }
        for &j in &self.basis {
            for i in 0..m {
                self.t[i * w + j] = 0.0;
            }
        }
        for (k, &j) in self.basis.iter().enumerate() {
            self.t[k * w + j] = 1.0;
        }
        self.recompute_reduced();
        true
    }

    fn recompute_reduced(&mut self) {
        let w = self.width();
        for j in 0..self.ncols {
            let mut d = self.cost[j];
            for (k, &bj) in self.basis.iter().enumerate() {
                d -= self.cost[bj] * self.t[k * w + j];
            }
            self.reduced[j] = d;
        }
        for &bj in &self.basis {
            self.reduced[bj] = 0.0;
        }
    }

    fn objective(&self) -> f64 {
        let w = self.width();
        self.basis.iter().enumerate().map(|(k, &j)| self.cost[j] * self.t[k * w + self.ncols]).sum()
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width();
        let p = self.t[r * w + e];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[e];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.reduced[e];
        if f != 0.0 {
            for (d, pv) in self.reduced.iter_mut().zip(prow.iter()) {
                *d -= f * pv;
            }
            self.reduced[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct
    }

    /// Runs simplex iterations on the current cost vector.
    fn optimize(&mut self, opts: &SolverOptions, iterations: &mut usize, allow_artificial: bool) -> Phase {
        let w = self.width();
        let mut since_refactor = 0;
        let mut degenerate_run = 0;
        loop {
            if *iterations >= opts.max_iterations {
                return Phase::IterationLimit;
            }
            let bland = degenerate_run > 30;
            let mut entering = None;
            let mut best = -opts.tolerance;
            for j in 0..self.ncols {
                if !allow_artificial && self.is_artificial(j) {
                    continue;
                }
                let d = self.reduced[j];
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(e) = entering else {
                // confirm against a fresh factorization before declaring optimality
                if since_refactor > 0 {
                    if !self.refactor() {
                        return Phase::Singular;
                    }
                    since_refactor = 0;
                    let still_optimal = (0..self.ncols)
                        .filter(|&j| allow_artificial || !self.is_artificial(j))
                        .all(|j| self.reduced[j] >= -opts.tolerance);
                    if !still_optimal {
                        continue;
                    }
                }
                return Phase::Optimal;
            };

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_piv = 0.0;
            for i in 0..self.m {
                let a = self.t[i * w + e];
                if a <= opts.pivot_tolerance {
                    continue;
                }
                let ratio = self.t[i * w + self.ncols].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                        if tie {
                            if bland {
                                self.basis[i] < self.basis[l]
                            } else {
                                a > best_piv
                            }
                        } else {
                            ratio < best_ratio
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    best_ratio = ratio;
                    best_piv = a;
                }
            }
            let Some(r) = leave else {
                return Phase::Unbounded(e);
            };
            if best_ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, e);
            *iterations += 1;
            since_refactor += 1;
            if since_refactor >= opts.refactor_every {
                if !self.refactor() {
                    return Phase::Singular;
                }
                since_refactor = 0;
            }
        }
    }
}

enum Phase {
    Optimal,
    Unbounded(usize),
    IterationLimit,
    Singular,
}

fn run_dual(norm: &Normalized, objective: &[f64], opts: &SolverOptions) -> DualResult {
    let m = norm.num_vars;
    let p = norm.rows();
    let n = norm.num_vars;
    let flip: Vec<f64> = objective.iter().map(|&c| if c < 0.0 { -1.0 } else { 1.0 }).collect();

    // a0 column k (dual variable k) = flip .* (normalized row k)
    let mut a0 = vec![0.0; m * p];
    for k in 0..p {
        for j in 0..n {
            a0[k * m + j] = flip[j] * norm.a[k * n + j];
        }
    }
    let rhs0: Vec<f64> = objective.iter().zip(&flip).map(|(c, f)| c * f).collect();
    let ncols = p + m;
    let w = ncols + 1;
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        for k in 0..p {
            t[i * w + k] = a0[k * m + i];
        }
        t[i * w + p + i] = 1.0;
        t[i * w + ncols] = rhs0[i];
    }
    let mut cost = vec![0.0; ncols];
    cost[p..].fill(1.0);
    let mut tab = Tableau {
        m,
        ncols,
        n_struct: p,
        a0,
        rhs0,
        t,
        reduced: vec![0.0; ncols],
        basis: (p..p + m).collect(),
        cost,
    };
    tab.recompute_reduced();

    let mut iterations = 0;
    match tab.optimize(opts, &mut iterations, true) {
        Phase::Optimal => {}
        Phase::IterationLimit | Phase::Singular => return DualResult::IterationLimit { iterations },
        Phase::Unbounded(_) => unreachable!("phase one is bounded below by zero"),
    }
    let scale = 1.0 + objective.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    if tab.objective() > 1e-9 * scale {
        return DualResult::Infeasible { iterations };
    }

    // drive artificials out of the basis where possible
    for r in 0..m {
        if !tab.is_artificial(tab.basis[r]) {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            let a = tab.t[r * w + j].abs();
            if a > 1e-9 && best.is_none_or(|(_, b)| a > b) {
                best = Some((j, a));
            }
        }
        if let Some((j, _)) = best {
            tab.t[r * w + ncols] = 0.0;
            tab.pivot(r, j);
            iterations += 1;
        }
    }

    for (k, c) in tab.cost.iter_mut().enumerate() {
        *c = if k < p { norm.b[k] } else { 0.0 };
    }
    if !tab.refactor() {
        return DualResult::IterationLimit { iterations };
    }
    match tab.optimize(opts, &mut iterations, false) {
        Phase::Optimal => {}
        Phase::IterationLimit | Phase::Singular => return DualResult::IterationLimit { iterations },
        Phase::Unbounded(e) => {
            let mut ray = vec![0.0; p];
            ray[e] = 1.0;
            for (k, &bj) in tab.basis.iter().enumerate() {
                if bj < p {
                    ray[bj] = (-tab.t[k * w + e]).max(0.0);
                }
            }
            return DualResult::Unbounded { ray, iterations };
        }
    }

    // simplex multipliers pi = B^-T c_B give the scaled primal point
    let mut bmat = DMatrix::zeros(m, m);
    let mut col = vec![0.0; m];
    for (k, &j) in tab.basis.iter().enumerate() {
        tab.original_column(j, &mut col);
        for i in 0..m {
            bmat[(i, k)] = col[i];
        }
    }
    let cb = DVector::from_iterator(m, tab.basis.iter().map(|&j| tab.cost[j]));
    let Some(pi) = bmat.transpose().lu().solve(&cb) else {
        return DualResult::IterationLimit { iterations };
    };
    let x = pi.iter().zip(&flip).map(|(v, f)| v * f).collect();
    DualResult::Optimal { x, iterations }
}

/// Solves an LP with a PSD block by outer approximation: each relaxation
/// optimum whose block has a negative eigenvalue below `-eig_tol` gets the
/// cut `v^T P v >= 0` for the corresponding eigenvector `v`.
pub fn solve_with_psd_cuts(problem: &LpProblem, max_cuts: usize, eig_tol: f64) -> SolveOutcome {
    let Some(block) = problem.psd_block.clone() else {
        return solve_lp(problem);
    };
    let mut relaxed = problem.clone();
    relaxed.psd_block = None;
    let mut cuts = 0;
    let mut iterations = 0;
    let mut seeded = false;

    loop {
        let mut out = solve_lp(&relaxed);
        iterations += out.iterations;
        out.iterations = iterations;
        out.cuts_added = cuts;
        match out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Unbounded if !seeded => {
                // bound the relaxation with the coordinate and pairwise directions
                seeded = true;
                for v in seed_directions(block.dim) {
                    relaxed.push_row(block.quadratic_form_row(&v, problem.num_vars), Sense::Ge, 0.0);
                    cuts += 1;
                }
                continue;
            }
            _ => return out,
        }
        let x = out.solution.clone().expect("optimal");
        let (lambda, v) = block.min_eigen(&x);
        if lambda >= -eig_tol {
            return out;
        }
        if cuts >= max_cuts {
            out.status = SolveStatus::IterationLimit;
            out.best_iterate = out.solution.take();
            out.objective_value = None;
            return out;
        }
        relaxed.push_row(block.quadratic_form_row(&v, problem.num_vars), Sense::Ge, 0.0);
        cuts += 1;
    }
}

fn seed_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..dim {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        dirs.push(v);
        for j in i + 1..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                v[j] = s;
                dirs.push(v);
            }
        }
    }
    dirs
}
