//! Dense linear-program solver with primal and dual certificates.
//!
//! Primal revised simplex over an explicit basis inverse, in two phases with
//! artificial variables for rows whose slack cannot seed the basis. Pricing
//! is most-negative-reduced-cost with smallest-index tie breaking; Bland's
//! rule takes over after 500 consecutive degenerate pivots, which guarantees
//! termination on cycling instances. Free variables are handled natively
//! (they enter in either direction and never block the ratio test), finite
//! lower bounds by shifting, and upper bounds by reflection or an extra row.
//!
//! On termination the basis is refactorized by LU and the solution, duals and
//! reduced costs are recomputed from scratch, so reported residuals reflect
//! the actual numbers returned rather than drifted incremental updates. The
//! solver is deterministic: identical inputs give identical pivot sequences.

use thiserror::Error;

use crate::scalar::{fl, Scalar};

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Row relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// One dense constraint row.
#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

/// A dense linear program.
///
/// Variable bounds default to `[0, +inf)`; a lower bound of `-inf` marks a
/// free variable.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub sense: Sense,
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Sense, objective: Vec<T>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Mark variable `j` as free (unbounded below and above).
    pub fn set_free(&mut self, j: usize) {
        self.lower[j] = T::neg_infinity();
        self.upper[j] = T::infinity();
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("pivot limit of {0} exceeded")]
    PivotLimit(usize),
    #[error("internal solver failure: {0}")]
    Internal(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Numeric quality of a returned optimum, measured in user space.
#[derive(Debug, Clone, Copy)]
pub struct Residuals<T> {
    /// Largest violation of a constraint or variable bound.
    pub primal: T,
    /// Largest violation of sign conditions on reduced costs.
    pub dual: T,
    /// |primal objective - dual objective|.
    pub gap: T,
    /// Largest complementary-slackness product.
    pub complementarity: T,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Objective value in the user's sense; NaN unless status is Optimal.
    pub objective: T,
    pub primal: Vec<T>,
    /// One dual per constraint row, signed so that each equals the
    /// derivative of the optimal objective with respect to that row's rhs.
    pub duals: Vec<T>,
    /// c_j - y . A_j per variable, in the user's sense.
    pub reduced_costs: Vec<T>,
    pub residuals: Residuals<T>,
    pub pivots: usize,
}

const PIVOT_CAP: usize = 1_000_000;
const BLAND_TRIGGER: usize = 500;
const REFRESH_ROUNDS: usize = 6;

fn feas_tol<T: Scalar>() -> T {
    fl(1e-9)
}
fn opt_tol<T: Scalar>() -> T {
    fl(1e-9)
}
fn zero_piv<T: Scalar>() -> T {
    fl(1e-11)
}

/// Solve a dense LP; see the module docs for the method.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>, LpError> {
    validate(lp)?;
    let std_form = standardize(lp);
    let mut sim = Simplex::new(&std_form);

    if !sim.phase_one()? {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            objective: T::nan(),
            primal: vec![T::zero(); lp.n_vars()],
            duals: vec![T::zero(); lp.n_rows()],
            reduced_costs: vec![T::zero(); lp.n_vars()],
            residuals: Residuals {
                primal: T::nan(),
                dual: T::nan(),
                gap: T::nan(),
                complementarity: T::nan(),
            },
            pivots: sim.pivots,
        });
    }
    if !sim.phase_two()? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: T::nan(),
            primal: vec![T::zero(); lp.n_vars()],
            duals: vec![T::zero(); lp.n_rows()],
            reduced_costs: vec![T::zero(); lp.n_vars()],
            residuals: Residuals {
                primal: T::nan(),
                dual: T::nan(),
                gap: T::nan(),
                complementarity: T::nan(),
            },
            pivots: sim.pivots,
        });
    }
    Ok(extract(lp, &std_form, &sim))
}

fn validate<T: Scalar>(lp: &LinearProgram<T>) -> Result<(), LpError> {
    let n = lp.n_vars();
    if n == 0 {
        return Err(LpError::Malformed("no variables".into()));
    }
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(LpError::Malformed(format!(
            "bound arrays must have length {n}"
        )));
    }
    if lp.objective.iter().any(|c| !c.is_finite()) {
        return Err(LpError::Malformed("objective has NaN or infinity".into()));
    }
    for (i, row) in lp.constraints.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(LpError::Malformed(format!(
                "row {i} has {} coefficients, expected {n}",
                row.coeffs.len()
            )));
        }
        if row.coeffs.iter().any(|c| !c.is_finite()) || !row.rhs.is_finite() {
            return Err(LpError::Malformed(format!("row {i} has NaN or infinity")));
        }
    }
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_nan() || hi.is_nan() || lo == T::infinity() || hi == T::neg_infinity() || lo > hi
        {
            return Err(LpError::Malformed(format!("variable {j} has bad bounds")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ColKind {
    Structural(usize),
    Slack(usize),
    Artificial(usize),
}

enum ColData<T> {
    Dense(Vec<T>),
    Unit { row: usize, value: T },
}

struct Column<T> {
    kind: ColKind,
    free: bool,
    data: ColData<T>,
}

impl<T: Scalar> Column<T> {
    fn dot(&self, y: &[T]) -> T {
        match &self.data {
            ColData::Dense(v) => v.iter().zip(y).map(|(&a, &b)| a * b).sum(),
            ColData::Unit { row, value } => *value * y[*row],
        }
    }

    fn entry(&self, row: usize) -> T {
        match &self.data {
            ColData::Dense(v) => v[row],
            ColData::Unit { row: r, value } => {
                if *r == row {
                    *value
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Program in "min c x, A x = b, b >= 0" form plus the bookkeeping needed to
/// map a basic solution back to user space.
struct StdForm<T> {
    m: usize,
    cols: Vec<Column<T>>,
    b: Vec<T>,
    cost: Vec<T>,
    n_user_rows: usize,
    row_sign: Vec<T>,
    row_scale: Vec<T>,
    col_scale: Vec<T>,
    var_sign: Vec<T>,
    var_shift: Vec<T>,
    obj_sign: T,
    n_structural: usize,
}

/// Nearest power of two, for equilibration without rounding error.
fn pow2_near<T: Scalar>(x: T) -> T {
    let e = x.to_f64().unwrap_or(1.0).abs().log2().round().clamp(-300.0, 300.0);
    fl(e.exp2())
}

fn standardize<T: Scalar>(lp: &LinearProgram<T>) -> StdForm<T> {
    let n = lp.n_vars();
    let n_user_rows = lp.n_rows();
    let obj_sign = match lp.sense {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };

    // Power-of-two equilibration: divide rows, then columns, by the nearest
    // power of two to their largest magnitude. Mantissas are untouched, so
    // results stay deterministic; badly mixed scales (payment powers next to
    // tiny prior weights) stop poisoning pivot tolerances.
    let mut mat: Vec<Vec<T>> = lp.constraints.iter().map(|r| r.coeffs.clone()).collect();
    let mut rhs: Vec<T> = lp.constraints.iter().map(|r| r.rhs).collect();
    let mut row_scale = vec![T::one(); n_user_rows];
    for i in 0..n_user_rows {
        let maxa = mat[i].iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
        if maxa > T::zero() {
            let s = pow2_near(maxa);
            if s != T::one() {
                for x in &mut mat[i] {
                    *x = *x / s;
                }
                rhs[i] = rhs[i] / s;
                row_scale[i] = s;
            }
        }
    }
    // internal variable x'_j = x_j / col_scale_j
    let mut col_scale = vec![T::one(); n];
    for j in 0..n {
        let maxa = (0..n_user_rows).fold(T::zero(), |acc, i| acc.max(mat[i][j].abs()));
        if maxa > T::zero() {
            let s = pow2_near(maxa);
            if s != T::one() {
                for row in mat.iter_mut() {
                    row[j] = row[j] * s;
                }
                col_scale[j] = s;
            }
        }
    }
    let lower: Vec<T> = (0..n).map(|j| lp.lower[j] / col_scale[j]).collect();
    let upper: Vec<T> = (0..n).map(|j| lp.upper[j] / col_scale[j]).collect();
    let objective: Vec<T> = (0..n).map(|j| lp.objective[j] * col_scale[j]).collect();

    // Variable transforms: x' = shift + sign * x_internal, x_internal >= 0
    // (or free when both bounds are infinite). A finite lower bound shifts,
    // an upper-only bound reflects, two finite bounds shift plus a bound row.
    let mut var_sign = vec![T::one(); n];
    let mut var_shift = vec![T::zero(); n];
    let mut free = vec![false; n];
    let mut bound_rows: Vec<(usize, T)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lower[j], upper[j]);
        if lo.is_finite() {
            var_shift[j] = lo;
            if hi.is_finite() {
                bound_rows.push((j, hi - lo));
            }
        } else if hi.is_finite() {
            var_sign[j] = -T::one();
            var_shift[j] = hi;
        } else {
            free[j] = true;
        }
    }

    let m = n_user_rows + bound_rows.len();

    // Right-hand sides after shifting, then row signs making them nonnegative.
    let mut b = Vec::with_capacity(m);
    for (i, coeffs) in mat.iter().enumerate() {
        let shift_term: T = coeffs
            .iter()
            .zip(&var_shift)
            .map(|(&a, &s)| a * s)
            .sum();
        b.push(rhs[i] - shift_term);
    }
    for &(_, range) in &bound_rows {
        b.push(range);
    }
    let mut row_sign = vec![T::one(); m];
    for i in 0..m {
        if b[i] < T::zero() {
            row_sign[i] = -T::one();
            b[i] = -b[i];
        }
    }

    // Structural columns.
    let mut cols: Vec<Column<T>> = Vec::with_capacity(n + m);
    for j in 0..n {
        let mut col = vec![T::zero(); m];
        for (i, coeffs) in mat.iter().enumerate() {
            col[i] = row_sign[i] * var_sign[j] * coeffs[j];
        }
        for (bi, &(var, _)) in bound_rows.iter().enumerate() {
            if var == j {
                let i = n_user_rows + bi;
                col[i] = row_sign[i] * var_sign[j];
            }
        }
        cols.push(Column {
            kind: ColKind::Structural(j),
            free: free[j],
            data: ColData::Dense(col),
        });
    }

    // Slack / surplus columns; bound rows are Le.
    for i in 0..m {
        let rel = if i < n_user_rows {
            lp.constraints[i].relation
        } else {
            Relation::Le
        };
        let raw = match rel {
            Relation::Le => T::one(),
            Relation::Ge => -T::one(),
            Relation::Eq => continue,
        };
        cols.push(Column {
            kind: ColKind::Slack(i),
            free: false,
            data: ColData::Unit { row: i, value: row_sign[i] * raw },
        });
    }

    // Phase-2 costs (artificial columns are appended by the simplex).
    let mut cost = vec![T::zero(); cols.len()];
    for col in cols.iter().enumerate() {
        if let ColKind::Structural(j) = col.1.kind {
            cost[col.0] = obj_sign * var_sign[j] * objective[j];
        }
    }

    StdForm {
        m,
        cols,
        b,
        cost,
        n_user_rows,
        row_sign,
        row_scale,
        col_scale,
        var_sign,
        var_shift,
        obj_sign,
        n_structural: n,
    }
}

enum StepOutcome {
    Optimal,
    Unbounded,
}

struct Simplex<'a, T> {
    f: &'a StdForm<T>,
    cols: Vec<Column<T>>, // standardized columns plus artificials
    cost2: Vec<T>,
    basis: Vec<usize>,
    basic_pos: Vec<Option<usize>>,
    binv: Vec<T>, // m x m row-major
    xb: Vec<T>,
    pivots: usize,
    degenerate_run: usize,
    bland: bool,
    rescues: usize,
    n_artificial_start: usize,
}

impl<'a, T: Scalar> Simplex<'a, T> {
    fn new(f: &'a StdForm<T>) -> Self {
        let m = f.m;
        // Seed the basis with +1 slacks where available, artificials elsewhere.
        let mut basis_of_row: Vec<Option<usize>> = vec![None; m];
        for (idx, col) in f.cols.iter().enumerate() {
            if let ColKind::Slack(i) = col.kind {
                if col.entry(i) == T::one() {
                    basis_of_row[i] = Some(idx);
                }
            }
        }
        let mut cols: Vec<Column<T>> = f
            .cols
            .iter()
            .map(|c| Column {
                kind: c.kind,
                free: c.free,
                data: match &c.data {
                    ColData::Dense(v) => ColData::Dense(v.clone()),
                    ColData::Unit { row, value } => ColData::Unit { row: *row, value: *value },
                },
            })
            .collect();
        let n_artificial_start = cols.len();
        let mut cost2 = f.cost.clone();
        let mut basis = Vec::with_capacity(m);
        for (i, maybe) in basis_of_row.iter().enumerate() {
            match maybe {
                Some(idx) => basis.push(*idx),
                None => {
                    cols.push(Column {
                        kind: ColKind::Artificial(i),
                        free: false,
                        data: ColData::Unit { row: i, value: T::one() },
                    });
                    cost2.push(T::zero());
                    basis.push(cols.len() - 1);
                }
            }
        }
        let mut basic_pos = vec![None; cols.len()];
        for (i, &c) in basis.iter().enumerate() {
            basic_pos[c] = Some(i);
        }
        // Initial basis is the identity up to unit slack/artificial columns.
        let mut binv = vec![T::zero(); m * m];
        for i in 0..m {
            binv[i * m + i] = T::one();
        }
        let xb = f.b.clone();
        Simplex {
            f,
            cols,
            cost2,
            basis,
            basic_pos,
            binv,
            xb,
            pivots: 0,
            degenerate_run: 0,
            bland: false,
            rescues: 0,
            n_artificial_start,
        }
    }

    fn is_artificial(&self, col: usize) -> bool {
        matches!(self.cols[col].kind, ColKind::Artificial(_))
    }

    fn phase_costs(&self, phase1: bool) -> Vec<T> {
        if phase1 {
            let mut c = vec![T::zero(); self.cols.len()];
            for (j, item) in c.iter_mut().enumerate() {
                if self.is_artificial(j) {
                    *item = T::one();
                }
            }
            c
        } else {
            self.cost2.clone()
        }
    }

    fn btran(&self, costs: &[T]) -> Vec<T> {
        let m = self.f.m;
        let mut y = vec![T::zero(); m];
        for (i, &bcol) in self.basis.iter().enumerate() {
            let cb = costs[bcol];
            if cb != T::zero() {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yj, &bij) in y.iter_mut().zip(row) {
                    *yj = *yj + cb * bij;
                }
            }
        }
        y
    }

    fn ftran(&self, col: usize) -> Vec<T> {
        let m = self.f.m;
        let mut d = vec![T::zero(); m];
        match &self.cols[col].data {
            ColData::Dense(a) => {
                for i in 0..m {
                    let row = &self.binv[i * m..(i + 1) * m];
                    let mut acc = T::zero();
                    for (bij, &aj) in row.iter().zip(a) {
                        acc = acc + *bij * aj;
                    }
                    d[i] = acc;
                }
            }
            ColData::Unit { row, value } => {
                for i in 0..m {
                    d[i] = self.binv[i * m + row] * *value;
                }
            }
        }
        d
    }

    /// One simplex phase; `phase1` selects the artificial cost vector.
    fn run(&mut self, phase1: bool) -> Result<StepOutcome, LpError> {
        let costs = self.phase_costs(phase1);
        loop {
            if self.pivots >= PIVOT_CAP {
                return Err(LpError::PivotLimit(PIVOT_CAP));
            }
            let y = self.btran(&costs);
            let entering = self.price(&costs, &y, phase1);
            let (col, dir) = match entering {
                None => return Ok(StepOutcome::Optimal),
                Some(e) => e,
            };
            let d = self.ftran(col);
            match self.ratio_test(&d, dir, phase1) {
                None => {
                    if phase1 {
                        return Err(LpError::Internal("unbounded phase-one objective"));
                    }
                    // An unblocked ray may be an artifact of incremental
                    // inverse drift (near-zero objective weights sit below
                    // the pricing tolerance once duals are recomputed).
                    // Refactorize and re-price before trusting the verdict.
                    if self.rescues < 3 {
                        self.rescues += 1;
                        if !self.refresh()? {
                            return Ok(StepOutcome::Optimal);
                        }
                        continue;
                    }
                    return Ok(StepOutcome::Unbounded);
                }
                Some((leave_row, theta)) => {
                    self.pivot(col, dir, &d, leave_row, theta);
                    if theta <= fl(1e-12) {
                        self.degenerate_run += 1;
                        if self.degenerate_run >= BLAND_TRIGGER {
                            self.bland = true;
                        }
                    } else {
                        self.degenerate_run = 0;
                    }
                    // keep incremental-update drift from ever getting deep
                    if self.pivots % 128 == 0 {
                        self.refactorize()?;
                    }
                }
            }
        }
    }

    /// Entering column and direction (+1 increases the variable, -1 only for
    /// free variables).
    fn price(&self, costs: &[T], y: &[T], phase1: bool) -> Option<(usize, T)> {
        let tol = opt_tol::<T>();
        let mut best: Option<(T, usize, T)> = None; // (score, col, dir)
        for j in 0..self.cols.len() {
            if self.basic_pos[j].is_some() {
                continue;
            }
            if self.is_artificial(j) && !phase1 {
                continue;
            }
            let r = costs[j] - self.cols[j].dot(y);
            let cand: Option<(T, T)> = if self.cols[j].free {
                if r < -tol {
                    Some((r, T::one()))
                } else if r > tol {
                    Some((-r, -T::one()))
                } else {
                    None
                }
            } else if r < -tol {
                Some((r, T::one()))
            } else {
                None
            };
            if let Some((score, dir)) = cand {
                if self.bland {
                    return Some((j, dir));
                }
                match &best {
                    Some((s, _, _)) if *s <= score => {}
                    _ => best = Some((score, j, dir)),
                }
            }
        }
        best.map(|(_, j, dir)| (j, dir))
    }

    /// Smallest nonnegative step keeping every bounded basic variable
    /// feasible. Basic free variables never block; in phase two a basic
    /// artificial must stay at zero, so it blocks in either direction.
    ///
    /// Among step ties the pivot with the largest magnitude wins, which
    /// keeps the basis well conditioned; under Bland's rule the smallest
    /// basis index wins instead, which is what guarantees termination.
    fn ratio_test(&self, d: &[T], dir: T, phase1: bool) -> Option<(usize, T)> {
        let zp = zero_piv::<T>();
        let tie: T = fl(1e-9);
        // (tightest ratio seen, chosen row's own ratio, row, basis col, |pivot|)
        let mut best: Option<(T, T, usize, usize, T)> = None;
        for i in 0..self.f.m {
            let bcol = self.basis[i];
            let art = self.is_artificial(bcol);
            if self.cols[bcol].free && !art {
                continue;
            }
            let delta = dir * d[i];
            let theta = if delta > zp {
                self.xb[i].max(T::zero()) / delta
            } else if !phase1 && art && delta < -zp {
                T::zero()
            } else {
                continue;
            };
            let dabs = delta.abs();
            match &mut best {
                None => best = Some((theta, theta, i, bcol, dabs)),
                Some((floor, own, row, bc, da)) => {
                    let band = tie * (T::one() + *floor);
                    if theta < *floor - band {
                        best = Some((theta, theta, i, bcol, dabs));
                    } else if theta <= *floor + band {
                        let take = if self.bland { bcol < *bc } else { dabs > *da };
                        if take {
                            *own = theta;
                            *row = i;
                            *bc = bcol;
                            *da = dabs;
                        }
                        if theta < *floor {
                            *floor = theta;
                        }
                    }
                }
            }
        }
        best.map(|(_, own, row, _, _)| (row, own))
    }

    fn pivot(&mut self, col: usize, dir: T, d: &[T], leave_row: usize, theta: T) {
        let m = self.f.m;
        for i in 0..m {
            self.xb[i] = self.xb[i] - theta * dir * d[i];
        }
        self.xb[leave_row] = dir * theta;

        let piv = d[leave_row];
        // binv <- E binv with the elementary matrix built from d
        let pivot_row: Vec<T> = self.binv[leave_row * m..(leave_row + 1) * m].to_vec();
        for i in 0..m {
            if i == leave_row {
                continue;
            }
            let factor = d[i] / piv;
            if factor != T::zero() {
                let row = &mut self.binv[i * m..(i + 1) * m];
                for (rij, &pj) in row.iter_mut().zip(&pivot_row) {
                    *rij = *rij - factor * pj;
                }
            }
        }
        for (j, &pj) in pivot_row.iter().enumerate() {
            self.binv[leave_row * m + j] = pj / piv;
        }

        let old = self.basis[leave_row];
        self.basic_pos[old] = None;
        self.basis[leave_row] = col;
        self.basic_pos[col] = Some(leave_row);
        self.pivots += 1;
    }

    /// Returns false when the program is infeasible.
    fn phase_one(&mut self) -> Result<bool, LpError> {
        let any_artificial = self.cols.len() > self.n_artificial_start;
        if any_artificial {
            match self.run(true)? {
                StepOutcome::Optimal => {}
                StepOutcome::Unbounded => return Err(LpError::Internal("phase one unbounded")),
            }
            let infeas: T = (0..self.f.m)
                .filter(|&i| self.is_artificial(self.basis[i]))
                .map(|i| self.xb[i].max(T::zero()))
                .sum();
            if infeas > feas_tol::<T>() {
                return Ok(false);
            }
            self.drive_out_artificials();
        }
        self.bland = false;
        self.degenerate_run = 0;
        Ok(true)
    }

    /// Swap zero-valued basic artificials for structural or slack columns
    /// where a nonzero pivot exists; rows with no such column are redundant
    /// and keep their artificial pinned at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.f.m;
        let zp = zero_piv::<T>();
        for row in 0..m {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let w: Vec<T> = self.binv[row * m..(row + 1) * m].to_vec();
            let mut found = None;
            for j in 0..self.n_artificial_start {
                if self.basic_pos[j].is_some() {
                    continue;
                }
                let entry = self.cols[j].dot(&w);
                if entry.abs() > zp {
                    found = Some(j);
                    break;
                }
            }
            if let Some(j) = found {
                let d = self.ftran(j);
                self.pivot(j, T::one(), &d, row, T::zero());
            }
        }
    }

    /// Returns false when the program is unbounded.
    fn phase_two(&mut self) -> Result<bool, LpError> {
        self.rescues = 0;
        for _round in 0..REFRESH_ROUNDS {
            match self.run(false)? {
                StepOutcome::Unbounded => return Ok(false),
                StepOutcome::Optimal => {}
            }
            if !self.refresh()? {
                return Ok(true);
            }
        }
        // Tolerance-level disagreement after repeated refreshes; accept the
        // refreshed basis rather than loop forever.
        Ok(true)
    }

    /// Refactorize the basis by LU and recompute the inverse and xb exactly.
    fn refactorize(&mut self) -> Result<(), LpError> {
        let m = self.f.m;
        let mut bmat = vec![T::zero(); m * m];
        for (i, &bcol) in self.basis.iter().enumerate() {
            for r in 0..m {
                bmat[r * m + i] = self.cols[bcol].entry(r);
            }
        }
        let lu = Lu::factor(bmat, m).ok_or(LpError::Internal("singular basis"))?;
        self.binv = lu.inverse();
        self.xb = {
            let mut x = vec![T::zero(); m];
            for i in 0..m {
                let row = &self.binv[i * m..(i + 1) * m];
                let mut acc = T::zero();
                for (bij, &bj) in row.iter().zip(&self.f.b) {
                    acc = acc + *bij * bj;
                }
                x[i] = acc;
            }
            x
        };
        Ok(())
    }

    /// Refactorize and report whether the refreshed reduced costs still
    /// admit an entering column.
    fn refresh(&mut self) -> Result<bool, LpError> {
        self.refactorize()?;
        let costs = self.phase_costs(false);
        let y = self.btran(&costs);
        Ok(self.price(&costs, &y, false).is_some())
    }
}

fn extract<T: Scalar>(lp: &LinearProgram<T>, f: &StdForm<T>, sim: &Simplex<T>) -> LpSolution<T> {
    let costs = sim.phase_costs(false);
    let y_int = sim.btran(&costs);

    // Internal structural values, then user values (undo shift, reflection
    // and column equilibration).
    let mut x_int = vec![T::zero(); f.n_structural];
    for (i, &bcol) in sim.basis.iter().enumerate() {
        if let ColKind::Structural(j) = sim.cols[bcol].kind {
            x_int[j] = sim.xb[i];
        }
    }
    let primal: Vec<T> = (0..f.n_structural)
        .map(|j| f.col_scale[j] * (f.var_shift[j] + f.var_sign[j] * x_int[j]))
        .collect();

    // User duals: dObj/d rhs, with the row equilibration undone.
    let duals: Vec<T> = (0..f.n_user_rows)
        .map(|i| f.obj_sign * f.row_sign[i] * y_int[i] / f.row_scale[i])
        .collect();

    let reduced: Vec<T> = (0..f.n_structural)
        .map(|j| {
            let mut r = lp.objective[j];
            for (i, row) in lp.constraints.iter().enumerate() {
                r = r - duals[i] * row.coeffs[j];
            }
            r
        })
        .collect();

    let objective: T = lp
        .objective
        .iter()
        .zip(&primal)
        .map(|(&c, &x)| c * x)
        .sum();

    let residuals = residuals(lp, &primal, &duals, &reduced, objective);
    LpSolution {
        status: LpStatus::Optimal,
        objective,
        primal,
        duals,
        reduced_costs: reduced,
        residuals,
        pivots: sim.pivots,
    }
}

fn residuals<T: Scalar>(
    lp: &LinearProgram<T>,
    x: &[T],
    y: &[T],
    r: &[T],
    objective: T,
) -> Residuals<T> {
    let mut primal = T::zero();
    let mut comp = T::zero();
    let mut dual_obj = T::zero();
    for (i, row) in lp.constraints.iter().enumerate() {
        let lhs: T = row.coeffs.iter().zip(x).map(|(&a, &xj)| a * xj).sum();
        let slack = lhs - row.rhs;
        let viol = match row.relation {
            Relation::Le => slack.max(T::zero()),
            Relation::Ge => (-slack).max(T::zero()),
            Relation::Eq => slack.abs(),
        };
        primal = primal.max(viol);
        comp = comp.max((y[i] * slack).abs());
        dual_obj = dual_obj + y[i] * row.rhs;
    }
    let mut dual = T::zero();
    let max_sign = match lp.sense {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };
    for j in 0..lp.n_vars() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        primal = primal.max((lo - x[j]).max(T::zero()));
        primal = primal.max((x[j] - hi).max(T::zero()));
        // distance from the nearest bound, for complementarity
        let at_lo = if lo.is_finite() { (x[j] - lo).abs() } else { T::infinity() };
        let at_hi = if hi.is_finite() { (hi - x[j]).abs() } else { T::infinity() };
        let gap_to_bound = at_lo.min(at_hi);
        if gap_to_bound.is_finite() {
            comp = comp.max((r[j] * gap_to_bound).abs());
        } else {
            // free variable: its reduced cost must vanish
            dual = dual.max(r[j].abs());
        }
        // sign conditions: minimizing wants r >= 0 at lower bounds, r <= 0 at
        // upper bounds; maximizing is mirrored.
        let rs = max_sign * r[j];
        if lo.is_finite() && at_lo <= at_hi {
            dual = dual.max((-rs).max(T::zero()));
        } else if hi.is_finite() {
            dual = dual.max(rs.max(T::zero()));
        }
        dual_obj = dual_obj
            + r[j]
                * if !lo.is_finite() && !hi.is_finite() {
                    T::zero()
                } else if at_lo <= at_hi {
                    if lo.is_finite() { lo } else { T::zero() }
                } else {
                    hi
                };
    }
    Residuals {
        primal,
        dual,
        gap: (objective - dual_obj).abs(),
        complementarity: comp,
    }
}

/// Dense LU with partial pivoting; used once per solve to refactorize the
/// final basis so reported numbers do not inherit incremental-update drift.
struct Lu<T> {
    n: usize,
    a: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    fn factor(mut a: Vec<T>, n: usize) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[perm[k] * n + k].abs();
            for i in k + 1..n {
                let v = a[perm[i] * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < fl(1e-13) {
                return None;
            }
            perm.swap(k, p);
            let pk = perm[k];
            let pivot = a[pk * n + k];
            for i in k + 1..n {
                let pi = perm[i];
                let factor = a[pi * n + k] / pivot;
                a[pi * n + k] = factor;
                if factor != T::zero() {
                    for j in k + 1..n {
                        a[pi * n + j] = a[pi * n + j] - factor * a[pk * n + j];
                    }
                }
            }
        }
        Some(Lu { n, a, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let pi = self.perm[i];
            let mut acc = b[pi];
            for j in 0..i {
                acc = acc - self.a[pi * n + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let pi = self.perm[i];
            let mut acc = y[i];
            for j in i + 1..n {
                acc = acc - self.a[pi * n + j] * y[j];
            }
            y[i] = acc / self.a[pi * n + i];
        }
        y
    }

    fn inverse(&self) -> Vec<T> {
        let n = self.n;
        let mut inv = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for col in 0..n {
            e[col] = T::one();
            let x = self.solve(&e);
            e[col] = T::zero();
            for row in 0..n {
                inv[row * n + col] = x[row];
            }
        }
        inv
    }
}
