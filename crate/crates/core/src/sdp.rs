//! Affine matrix expressions over scalar decision variables, conic problem
//! assembly in standard primal form, and a Clarabel backend.

use std::collections::BTreeMap;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{is_symmetric, min_eigenvalue, scale, symmetrize};

/// Default feasibility tolerance used when validating solver output.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum SdpError {
    #[error("expression references undeclared scalar variable {0}")]
    UndeclaredVariable(usize),
    #[error("PSD constraint '{0}' is not symmetric")]
    NonSymmetric(String),
    #[error("problem has no constraints")]
    Empty,
    #[error("objective must be a 1x1 expression")]
    BadObjective,
    #[error("symmetric input required")]
    NonSymmetricInput,
    #[error("requested {k} eigenpairs of a {n}x{n} matrix")]
    BadRank { k: usize, n: usize },
}

/// A matrix-valued decision variable. Symmetric variables are parameterized by
/// their upper triangle, row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarHandle {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    offset: usize,
}

impl VarHandle {
    pub fn scalar_count(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Scalar index and coefficient matrix for each parameter.
    fn basis(&self) -> Vec<(usize, DMatrix<f64>)> {
        let mut out = Vec::with_capacity(self.scalar_count());
        let mut k = self.offset;
        if self.symmetric {
            for i in 0..self.rows {
                for j in i..self.rows {
                    let mut e = DMatrix::zeros(self.rows, self.rows);
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                    out.push((k, e));
                    k += 1;
                }
            }
        } else {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    let mut e = DMatrix::zeros(self.rows, self.cols);
                    e[(i, j)] = 1.0;
                    out.push((k, e));
                    k += 1;
                }
            }
        }
        out
    }

    pub fn expr(&self) -> Expr {
        Expr {
            constant: DMatrix::zeros(self.rows, self.cols),
            terms: self.basis(),
        }
    }

    /// Reads this variable's value out of a flat scalar assignment.
    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        let mut k = self.offset;
        if self.symmetric {
            for i in 0..self.rows {
                for j in i..self.rows {
                    m[(i, j)] = x[k];
                    m[(j, i)] = x[k];
                    k += 1;
                }
            }
        } else {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    m[(i, j)] = x[k];
                    k += 1;
                }
            }
        }
        m
    }

    /// Writes a matrix value into a flat assignment (upper triangle for symmetric).
    pub fn write(&self, m: &DMatrix<f64>, x: &mut [f64]) {
        let mut k = self.offset;
        if self.symmetric {
            for i in 0..self.rows {
                for j in i..self.rows {
                    x[k] = m[(i, j)];
                    k += 1;
                }
            }
        } else {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    x[k] = m[(i, j)];
                    k += 1;
                }
            }
        }
    }
}

/// `constant + Σ x_k · coeff_k`, terms sorted by scalar index.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub constant: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl Expr {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Expr {
            constant: m,
            terms: Vec::new(),
        }
    }

    pub fn zeros(r: usize, c: usize) -> Self {
        Self::constant(DMatrix::zeros(r, c))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, v))
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn terms(&self) -> &[(usize, DMatrix<f64>)] {
        &self.terms
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.last().map(|t| t.0)
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Expr {
        Expr {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(k, m)| (*k, f(m))).collect(),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Expr, s: f64) -> Expr {
        assert_eq!(self.shape(), other.shape(), "expression shape mismatch");
        let mut terms = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let a = self.terms.get(i);
            let b = other.terms.get(j);
            match (a, b) {
                (Some((ka, ma)), Some((kb, mb))) if ka == kb => {
                    terms.push((*ka, ma + mb * s));
                    i += 1;
                    j += 1;
                }
                (Some((ka, ma)), Some((kb, _))) if ka < kb => {
                    terms.push((*ka, ma.clone()));
                    i += 1;
                }
                (Some((ka, ma)), None) => {
                    terms.push((*ka, ma.clone()));
                    i += 1;
                }
                (_, Some((kb, mb))) => {
                    terms.push((*kb, mb * s));
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Expr {
            constant: &self.constant + &other.constant * s,
            terms,
        }
    }

    pub fn add_const(&self, m: &DMatrix<f64>) -> Expr {
        let mut e = self.clone();
        e.constant += m;
        e
    }

    pub fn scale(&self, s: f64) -> Expr {
        self.map(|m| m * s)
    }

    pub fn transpose(&self) -> Expr {
        self.map(|m| m.transpose())
    }

    /// `a · self`
    pub fn lmul(&self, a: &DMatrix<f64>) -> Expr {
        self.map(|m| a * m)
    }

    /// `self · b`
    pub fn rmul(&self, b: &DMatrix<f64>) -> Expr {
        self.map(|m| m * b)
    }

    /// `self + selfᵀ`
    pub fn sym_part(&self) -> Expr {
        self.add(&self.transpose())
    }

    pub fn view(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Expr {
        let mut terms = Vec::new();
        for (k, m) in &self.terms {
            let v = m.view((r0, c0), (nr, nc)).into_owned();
            if v.iter().any(|x| *x != 0.0) {
                terms.push((*k, v));
            }
        }
        Expr {
            constant: self.constant.view((r0, c0), (nr, nc)).into_owned(),
            terms,
        }
    }

    /// Block assembly; same shape rules as [`crate::linalg::block`].
    pub fn block(rows: &[Vec<&Expr>]) -> Expr {
        let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
        let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
        let (h, w) = (heights.iter().sum(), widths.iter().sum());
        let mut constant = DMatrix::zeros(h, w);
        let mut acc: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        let mut r0 = 0;
        for (row, bh) in rows.iter().zip(&heights) {
            let mut c0 = 0;
            for (b, bw) in row.iter().zip(&widths) {
                assert_eq!(b.shape(), (*bh, *bw), "block shape mismatch");
                constant
                    .view_mut((r0, c0), (*bh, *bw))
                    .copy_from(&b.constant);
                for (k, m) in &b.terms {
                    acc.entry(*k)
                        .or_insert_with(|| DMatrix::zeros(h, w))
                        .view_mut((r0, c0), (*bh, *bw))
                        .copy_from(m);
                }
                c0 += bw;
            }
            r0 += bh;
        }
        Expr {
            constant,
            terms: acc.into_iter().collect(),
        }
    }

    /// Frobenius inner product ⟨a, self⟩ as a 1×1 expression.
    pub fn inner(&self, a: &DMatrix<f64>) -> Expr {
        self.map(|m| DMatrix::from_element(1, 1, a.dot(m)))
    }

    /// `s ⊗ I_n` for a 1×1 expression `s`.
    pub fn times_identity(&self, n: usize) -> Expr {
        assert_eq!(self.shape(), (1, 1));
        self.map(|m| DMatrix::identity(n, n) * m[(0, 0)])
    }

    pub fn trace(&self) -> Expr {
        let n = self.nrows();
        self.inner(&DMatrix::identity(n, n))
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, m) in &self.terms {
            if x[*k] != 0.0 {
                out += m * x[*k];
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        let tol = 1e-12;
        is_symmetric(&self.constant, tol) && self.terms.iter().all(|(_, m)| is_symmetric(m, tol))
    }
}

#[derive(Debug, Clone)]
pub struct PsdConstraint {
    pub name: String,
    pub expr: Expr,
}

/// Convenience builder that owns variables and constraints before assembly.
#[derive(Debug, Default, Clone)]
pub struct Model {
    vars: Vec<VarHandle>,
    next: usize,
    psd: Vec<PsdConstraint>,
    eqs: Vec<Expr>,
    objective: Option<Expr>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: &str, rows: usize, cols: usize, symmetric: bool) -> VarHandle {
        assert!(!symmetric || rows == cols);
        let v = VarHandle {
            name: name.to_string(),
            rows,
            cols,
            symmetric,
            offset: self.next,
        };
        self.next += v.scalar_count();
        self.vars.push(v.clone());
        v
    }

    pub fn psd(&mut self, name: &str, expr: Expr) {
        self.psd.push(PsdConstraint {
            name: name.to_string(),
            expr,
        });
    }

    /// `expr ≺ 0` encoded as `−expr − δI ⪰ 0`.
    pub fn negative_definite(&mut self, name: &str, expr: &Expr, delta: f64) {
        let n = expr.nrows();
        self.psd(
            name,
            expr.scale(-1.0)
                .add_const(&(DMatrix::identity(n, n) * -delta)),
        );
    }

    /// `expr ≻ 0` encoded as `expr − δI ⪰ 0`.
    pub fn positive_definite(&mut self, name: &str, expr: &Expr, delta: f64) {
        let n = expr.nrows();
        self.psd(name, expr.add_const(&(DMatrix::identity(n, n) * -delta)));
    }

    pub fn equal_zero(&mut self, expr: Expr) {
        self.eqs.push(expr);
    }

    pub fn minimize(&mut self, objective: Expr) {
        self.objective = Some(objective);
    }

    pub fn psd_constraints(&self) -> &[PsdConstraint] {
        &self.psd
    }

    pub fn assemble(&self) -> Result<ConicProblem, SdpError> {
        let obj = self.objective.clone().unwrap_or_else(|| Expr::scalar(0.0));
        assemble(&self.vars, &self.psd, &self.eqs, &obj)
    }
}

/// Cone blocks in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    Zero(usize),
    Psd(usize),
}

/// `min qᵀx + c0  s.t.  b − Ax ∈ K`.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub vars: Vec<VarHandle>,
    pub n: usize,
    pub q: Vec<f64>,
    pub objective_constant: f64,
    /// Triplets (row, col, value) of A.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeBlock>,
    pub psd: Vec<PsdConstraint>,
    pub eqs: Vec<Expr>,
}

impl ConicProblem {
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn psd_block_count(&self) -> usize {
        self.cones
            .iter()
            .filter(|c| matches!(c, ConeBlock::Psd(_)))
            .count()
    }
}

/// Index of entry (i, j), i ≤ j, in the column-major upper-triangle vector.
fn triu_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

/// Scaled vectorization of a symmetric matrix (upper triangle, column-major,
/// off-diagonals times √2).
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = vec![0.0; n * (n + 1) / 2];
    for j in 0..n {
        for i in 0..=j {
            let s = if i == j {
                1.0
            } else {
                std::f64::consts::SQRT_2
            };
            v[triu_index(i, j)] = s * 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    v
}

pub fn assemble(
    vars: &[VarHandle],
    psd: &[PsdConstraint],
    eqs: &[Expr],
    objective: &Expr,
) -> Result<ConicProblem, SdpError> {
    if psd.is_empty() && eqs.is_empty() {
        return Err(SdpError::Empty);
    }
    if objective.shape() != (1, 1) {
        return Err(SdpError::BadObjective);
    }
    let n: usize = vars
        .iter()
        .map(|v| v.offset + v.scalar_count())
        .max()
        .unwrap_or(0);
    let mut declared = vec![false; n];
    for v in vars {
        declared[v.offset..v.offset + v.scalar_count()]
            .iter_mut()
            .for_each(|d| *d = true);
    }
    let check = |e: &Expr| -> Result<(), SdpError> {
        for (k, _) in e.terms() {
            if *k >= n || !declared[*k] {
                return Err(SdpError::UndeclaredVariable(*k));
            }
        }
        Ok(())
    };
    check(objective)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0;
    let mut eq_rows = 0;
    for e in eqs {
        check(e)?;
        let (r, c) = e.shape();
        for i in 0..r {
            for j in 0..c {
                // s = b − Ax = 0  ⇔  const + Σ x_k F_k = 0
                b.push(-e.constant[(i, j)]);
                for (k, m) in e.terms() {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        a.push((row, *k, v));
                    }
                }
                row += 1;
                eq_rows += 1;
            }
        }
    }
    if eq_rows > 0 {
        cones.push(ConeBlock::Zero(eq_rows));
    }
    for p in psd {
        check(&p.expr)?;
        if !p.expr.constant.is_square() || !p.expr.is_symmetric() {
            return Err(SdpError::NonSymmetric(p.name.clone()));
        }
        let dim = p.expr.nrows();
        b.extend(svec(&p.expr.constant));
        for (k, m) in p.expr.terms() {
            for (t, v) in svec(m).into_iter().enumerate() {
                if v != 0.0 {
                    a.push((row + t, *k, -v));
                }
            }
        }
        row += dim * (dim + 1) / 2;
        cones.push(ConeBlock::Psd(dim));
    }
    let mut q = vec![0.0; n];
    for (k, m) in objective.terms() {
        q[*k] += m[(0, 0)];
    }
    Ok(ConicProblem {
        vars: vars.to_vec(),
        n,
        q,
        objective_constant: objective.constant[(0, 0)],
        a,
        b,
        cones,
        psd: psd.to_vec(),
        eqs: eqs.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
            SolveStatus::IterationLimit => "iteration-limit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub seconds: f64,
    /// Largest scaled PSD or equality violation at `x`.
    pub violation: f64,
}

impl SolveOutcome {
    pub fn value(&self, v: &VarHandle) -> DMatrix<f64> {
        v.value(&self.x)
    }

    pub fn eval(&self, e: &Expr) -> DMatrix<f64> {
        e.eval(&self.x)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Any backend meeting the [`SolveOutcome`] contract.
pub trait ConicSolver {
    fn solve(&self, problem: &ConicProblem) -> SolveOutcome;
}

#[derive(Debug, Clone, Copy)]
pub struct ClarabelSolver {
    pub tol: f64,
    pub max_iter: u32,
    pub feas_tol: f64,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        ClarabelSolver {
            tol: 1e-8,
            max_iter: 200,
            feas_tol: FEAS_TOL,
        }
    }
}

/// Largest scaled violation of the problem's constraints at `x`.
pub fn constraint_violation(problem: &ConicProblem, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for p in &problem.psd {
        let m = p.expr.eval(x);
        worst = worst.max(-min_eigenvalue(&m) / scale(&m));
    }
    for e in &problem.eqs {
        let m = e.eval(x);
        let s = scale(&e.constant).max(
            e.terms()
                .iter()
                .map(|(k, c)| (c * x[*k]).norm())
                .fold(1.0, f64::max),
        );
        worst = worst.max(m.amax() / s);
    }
    worst
}

fn csc(problem: &ConicProblem) -> CscMatrix<f64> {
    let (m, n) = (problem.rows(), problem.n);
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(r, c, v) in &problem.a {
        cols[c].push((r, v));
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in cols.iter_mut() {
        col.sort_by_key(|e| e.0);
        // merge duplicates
        let mut last: Option<usize> = None;
        for &(r, v) in col.iter() {
            if last == Some(r) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                last = Some(r);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, problem: &ConicProblem) -> SolveOutcome {
        let start = Instant::now();
        let n = problem.n;
        let failed = |status| SolveOutcome {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            iterations: 0,
            seconds: start.elapsed().as_secs_f64(),
            violation: f64::INFINITY,
        };
        let p = CscMatrix::<f64>::zeros((n, n));
        let a = csc(problem);
        let cones: Vec<SupportedConeT<f64>> = problem
            .cones
            .iter()
            .map(|c| match *c {
                ConeBlock::Zero(k) => SupportedConeT::ZeroConeT(k),
                ConeBlock::Psd(k) => SupportedConeT::PSDTriangleConeT(k),
            })
            .collect();
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .build()
        {
            Ok(s) => s,
            Err(_) => return failed(SolveStatus::NumericalFailure),
        };
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            let mut solver =
                DefaultSolver::new(&p, &problem.q, &a, &problem.b, &cones, settings).ok()?;
            solver.solve();
            Some((
                solver.solution.status,
                solver.solution.x.clone(),
                solver.solution.obj_val,
                solver.solution.iterations,
            ))
        }));
        let Ok(Some((raw, x, obj, iterations))) = result else {
            return failed(SolveStatus::NumericalFailure);
        };
        let violation = if x.iter().all(|v| v.is_finite()) {
            constraint_violation(problem, &x)
        } else {
            f64::INFINITY
        };
        let status = match raw {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                if violation <= self.feas_tol {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalFailure
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
            _ => SolveStatus::NumericalFailure,
        };
        SolveOutcome {
            status,
            objective: obj + problem.objective_constant,
            x,
            iterations,
            seconds: start.elapsed().as_secs_f64(),
            violation,
        }
    }
}

/// Solves with the default backend and settings.
pub fn solve(problem: &ConicProblem, tol: f64) -> SolveOutcome {
    ClarabelSolver {
        tol,
        ..ClarabelSolver::default()
    }
    .solve(problem)
}

/// The `k` largest eigenvalues (descending) and orthonormal eigenvectors as
/// columns.
pub fn top_eigenpairs(q: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>), SdpError> {
    let n = q.nrows();
    if !is_symmetric(q, 1e-9) {
        return Err(SdpError::NonSymmetricInput);
    }
    if k == 0 || k > n {
        return Err(SdpError::BadRank { k, n });
    }
    let eig = SymmetricEigen::new(symmetrize(q));
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the solver's order on ties
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expr_algebra_matches_evaluation() {
        let mut m = Model::new();
        let x = m.var("X", 2, 2, true);
        let r = m.var("R", 2, 1, false);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let e = x.expr().lmul(&a).sym_part().add(
            &Expr::block(&[vec![&r.expr().rmul(&DMatrix::from_element(1, 2, 1.0))]]).sym_part(),
        );
        let vals = [0.3, -0.2, 1.5, 0.7, -1.1];
        let xv = x.value(&vals);
        let rv = r.value(&vals);
        let direct = &a * &xv
            + (&a * &xv).transpose()
            + &rv * DMatrix::from_element(1, 2, 1.0)
            + (&rv * DMatrix::from_element(1, 2, 1.0)).transpose();
        assert!((e.eval(&vals) - direct).amax() < 1e-14);
        assert!(e.is_symmetric());
    }

    #[test]
    fn svec_order_matches_backend() {
        // min x12 s.t. [[1, x12],[x12, 1]] ⪰ 0 → x12 = −1
        let mut m = Model::new();
        let x = m.var("X", 2, 2, true);
        m.psd("X", x.expr());
        m.equal_zero(
            x.expr()
                .view(0, 0, 1, 1)
                .add_const(&DMatrix::from_element(1, 1, -1.0)),
        );
        m.equal_zero(
            x.expr()
                .view(1, 1, 1, 1)
                .add_const(&DMatrix::from_element(1, 1, -1.0)),
        );
        m.minimize(x.expr().view(0, 1, 1, 1));
        let out = solve(&m.assemble().unwrap(), 1e-9);
        assert!(out.is_optimal());
        assert!((out.objective + 1.0).abs() < 1e-6);
        // asymmetric 3x3 weight checks full index mapping
        let mut m = Model::new();
        let x = m.var("X", 3, 3, true);
        m.psd("X-I", x.expr().add_const(&-DMatrix::identity(3, 3)));
        let w = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 4.0]);
        m.minimize(x.expr().inner(&w));
        let out = solve(&m.assemble().unwrap(), 1e-9);
        assert!(out.is_optimal());
        assert!((out.value(&x) - DMatrix::identity(3, 3)).amax() < 1e-5);
    }

    #[test]
    fn trace_minimization() {
        let mut m = Model::new();
        let x = m.var("X", 3, 3, true);
        m.psd("X-I", x.expr().add_const(&-DMatrix::identity(3, 3)));
        m.minimize(x.expr().trace());
        let p = m.assemble().unwrap();
        assert_eq!(p.psd_block_count(), 1);
        assert_eq!(p.q, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let out = solve(&p, 1e-8);
        assert!(out.is_optimal());
        assert!((out.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn gamma_minimization() {
        let mut m = Model::new();
        let g = m.var("gamma", 1, 1, false);
        let ge = g.expr();
        let e = Expr::block(&[
            vec![&ge.scale(-1.0), &Expr::scalar(1.0)],
            vec![&Expr::scalar(1.0), &ge.scale(-1.0)],
        ]);
        m.psd("neg", e.scale(-1.0));
        m.minimize(ge);
        let out = solve(&m.assemble().unwrap(), 1e-8);
        assert!(out.is_optimal());
        assert!((out.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_pair() {
        let mut m = Model::new();
        let x = m.var("X", 2, 2, true);
        m.psd("X-I", x.expr().add_const(&-DMatrix::identity(2, 2)));
        m.psd(
            "-X-I",
            x.expr().scale(-1.0).add_const(&-DMatrix::identity(2, 2)),
        );
        let out = solve(&m.assemble().unwrap(), 1e-8);
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn assembly_errors() {
        let m = Model::new();
        assert_eq!(m.assemble().unwrap_err(), SdpError::Empty);
        let mut m = Model::new();
        let r = m.var("R", 2, 2, false);
        m.psd("R", r.expr());
        assert!(matches!(m.assemble(), Err(SdpError::NonSymmetric(_))));
        let mut other = Model::new();
        other.var("pad", 4, 4, false);
        let stray = other.var("Z", 1, 1, false);
        let mut m = Model::new();
        m.var("X", 1, 1, false);
        m.psd("Z", stray.expr());
        assert!(matches!(m.assemble(), Err(SdpError::UndeclaredVariable(_))));
    }

    #[test]
    fn eigenpairs() {
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let (v, w) = top_eigenpairs(&q, 2).unwrap();
        assert_eq!(v, vec![3.0, 2.0]);
        assert!((w[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((w[(2, 1)].abs() - 1.0).abs() < 1e-12);
        assert!(top_eigenpairs(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), 1).is_err());
        assert!(top_eigenpairs(&q, 4).is_err());
    }
}
