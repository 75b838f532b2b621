//! Sequential rank-surrogate algorithms, the stabilizability bootstrap, the
//! initial γ, bisection on γ and certificate checking.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eye, max_eigenvalue, min_eigenvalue};
use crate::refine::{certify, refine, stabilize};
use crate::sdp::{
    top_eigenpairs, ClarabelSolver, ConicSolver, Expr, Model, SolveOutcome, SolveStatus, VarHandle,
};
use crate::synthesis::{
    exact_w, fractional_measure, mij_expr, mij_stab_expr, pid_realization, q_expr,
    realization_expr, spectral_measure, structured_w_expr, AugmentedPlant, PidPdcController,
    PidRuleGains, SynthesisError, SynthesisState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Spectral,
    Fractional,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectral" | "1" => Ok(Variant::Spectral),
            "fractional" | "2" => Ok(Variant::Fractional),
            other => Err(format!(
                "unknown algorithm '{other}' (expected spectral or fractional)"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Spectral => "spectral",
            Variant::Fractional => "fractional",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    /// Derivative filter constant of the PID realization.
    pub tau: f64,
    /// Acceptance threshold on the measure and relative stopping tolerance.
    pub eps: f64,
    pub max_iter: usize,
    /// Margin for strict inequalities.
    pub delta: f64,
    pub eta: f64,
    pub round_cap: usize,
    /// Subproblem cap per local refinement or stabilization call.
    pub refine_rounds: usize,
    /// Frobenius bound on each rule's stacked gains during refinement.
    pub gain_bound: f64,
    pub solver: ClarabelSolver,
}

impl Settings {
    pub fn new(tau: f64) -> Self {
        Settings {
            tau,
            eps: 1e-5,
            max_iter: 50,
            delta: 1e-6,
            eta: 0.01,
            round_cap: 100,
            refine_rounds: 200,
            gain_bound: 1e4,
            solver: ClarabelSolver::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AlgorithmError {
    #[error("solver reported {status} at iteration {iteration}")]
    NumericalFailure {
        status: SolveStatus,
        iteration: usize,
        trace: IterationTrace,
    },
    #[error("trace of W22 vanished at iteration {iteration}")]
    DegenerateMeasure {
        iteration: usize,
        trace: IterationTrace,
    },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Sdp(#[from] crate::sdp::SdpError),
}

impl AlgorithmError {
    pub fn trace(&self) -> Option<&IterationTrace> {
        match self {
            AlgorithmError::NumericalFailure { trace, .. }
            | AlgorithmError::DegenerateMeasure { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

// ---- constraint system ------------------------------------------------------

/// Decision variables and derived expressions of one feasibility problem.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    pub model: Model,
    pub gamma: Option<f64>,
    pub x: VarHandle,
    pub w: Vec<VarHandle>,
    pub r: Vec<VarHandle>,
    pub y: Vec<VarHandle>,
    pub w11: Vec<VarHandle>,
    pub w22: VarHandle,
    pub x1: Expr,
    pub q: Expr,
    pub ny: usize,
    pub c2: DMatrix<f64>,
}

/// Counts of constraint blocks by kind, for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub lyapunov: usize,
    pub vertex: usize,
    pub cross: usize,
    pub lifting: usize,
    pub equalities: usize,
}

impl FeasibilityProblem {
    pub fn counts(&self) -> ConstraintCounts {
        let mut c = ConstraintCounts {
            lyapunov: 0,
            vertex: 0,
            cross: 0,
            lifting: 0,
            equalities: self.w.len(),
        };
        for p in self.model.psd_constraints() {
            match p.name.split(':').next().unwrap_or("") {
                "lyapunov" => c.lyapunov += 1,
                "vertex" => c.vertex += 1,
                "cross" => c.cross += 1,
                "lifting" => c.lifting += 1,
                _ => {}
            }
        }
        c
    }

    fn state(&self, out: &SolveOutcome, plant: &AugmentedPlant) -> SynthesisState {
        let _ = plant;
        SynthesisState {
            x: out.value(&self.x),
            w: self.w.iter().map(|v| out.value(v)).collect(),
            y: self.y.iter().map(|v| out.value(v)).collect(),
            w11: self.w11.iter().map(|v| out.value(v)).collect(),
            w22: out.value(&self.w22),
            r: self
                .r
                .iter()
                .map(|v| PidRuleGains::from_stacked(&out.value(v)))
                .collect(),
            gamma: self.gamma,
        }
    }
}

/// Adds the vertex and cross conditions built from `block(i, j)`.
fn add_relaxation(model: &mut Model, l: usize, delta: f64, block: impl Fn(usize, usize) -> Expr) {
    let blocks: Vec<Vec<Expr>> = (0..l)
        .map(|i| (0..l).map(|j| block(i, j)).collect())
        .collect();
    for (i, row) in blocks.iter().enumerate() {
        model.negative_definite(&format!("vertex:{i}"), &row[i], delta);
    }
    for i in 0..l {
        for j in 0..l {
            if i != j {
                let e = blocks[i][i]
                    .scale(1.0 / (l as f64 - 1.0))
                    .add(&blocks[i][j].add(&blocks[j][i]).scale(0.5));
                model.negative_definite(&format!("cross:{i}:{j}"), &e, delta);
            }
        }
    }
}

/// Lyapunov, vertex, cross, linear-part and lifting constraints at a frozen γ,
/// or the stabilizability system when `gamma` is `None`.
pub fn feasibility_constraints(
    plant: &AugmentedPlant,
    c2: &DMatrix<f64>,
    gamma: Option<f64>,
    settings: &Settings,
) -> FeasibilityProblem {
    let (nx, nu, ny) = (plant.nx, plant.nu, plant.ny);
    let nc = plant.nc();
    let l = plant.rule_count();
    let mut m = Model::new();
    let x = m.var("X", nc, nc, true);
    let w: Vec<VarHandle> = (0..l)
        .map(|j| m.var(&format!("W{j}"), 3 * nu, nc, false))
        .collect();
    let r: Vec<VarHandle> = (0..l)
        .map(|j| m.var(&format!("R{j}"), 3 * nu, ny, false))
        .collect();
    let y: Vec<VarHandle> = (0..l)
        .map(|j| m.var(&format!("Y{j}"), 3 * nu, nc, false))
        .collect();
    let w11: Vec<VarHandle> = (0..l)
        .map(|j| m.var(&format!("W11_{j}"), 3 * nu, 3 * nu, true))
        .collect();
    let w22 = m.var("W22", nc, nc, true);

    let xe = x.expr();
    match gamma {
        // the stabilizability problem is invariant under scaling of X, so fix the scale
        None => m.psd("lyapunov:0", xe.add_const(&-eye(nc))),
        Some(_) => m.positive_definite("lyapunov:0", &xe, settings.delta),
    }
    let ks: Vec<Expr> = r
        .iter()
        .map(|v| realization_expr(&v.expr(), nu, settings.tau))
        .collect();
    let ws: Vec<Expr> = w.iter().map(VarHandle::expr).collect();
    match gamma {
        Some(g) => {
            let ge = Expr::scalar(g);
            add_relaxation(&mut m, l, settings.delta, |i, j| {
                mij_expr(plant, i, &xe, &ks[j], &ws[j], &ge)
            });
        }
        None => add_relaxation(&mut m, l, settings.delta, |i, j| {
            mij_stab_expr(plant, i, &xe, &ws[j])
        }),
    }
    let sw = structured_w_expr(&xe, nx, nu, settings.tau);
    for j in 0..l {
        m.equal_zero(ws[j].sub(&sw).sub(&y[j].expr()));
    }
    let x1 = xe.view(0, 0, nx, nc);
    let cx = x1.lmul(c2);
    for j in 0..l {
        let re = r[j].expr();
        let ye = y[j].expr();
        let b = Expr::block(&[
            vec![&w11[j].expr(), &ye, &re],
            vec![&ye.transpose(), &w22.expr(), &cx.transpose()],
            vec![&re.transpose(), &cx, &Expr::identity(ny)],
        ]);
        m.psd(&format!("lifting:{j}"), b);
    }
    let q = q_expr(&x1, &w22.expr(), c2);
    FeasibilityProblem {
        model: m,
        gamma,
        x,
        w,
        r,
        y,
        w11,
        w22,
        x1,
        q,
        ny,
        c2: c2.clone(),
    }
}

// ---- iteration trace ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub measure: f64,
    pub gamma: Option<f64>,
    pub status: SolveStatus,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub fn measures(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.measure).collect()
    }

    /// Largest increase between consecutive measures (≤ 0 for a descent).
    pub fn worst_ascent(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].measure - w[0].measure)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "measure", "gamma", "status", "seconds"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                fmt_f64(r.measure),
                r.gamma.map(fmt_f64).unwrap_or_default(),
                r.status.to_string(),
                fmt_f64(r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<(usize, f64)>> {
        let mut rd = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let iter = rec[0].parse().unwrap_or(0);
            let measure = rec[1].parse().unwrap_or(f64::NAN);
            out.push((iter, measure));
        }
        Ok(out)
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

// ---- feasibility runs ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityStatus {
    Feasible,
    InfeasibleDeclared,
    IterationLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub variant: Variant,
    pub gamma: Option<f64>,
    /// Final measure value (F or 1 − g).
    pub measure: f64,
    pub measure_accepted: bool,
    pub iterations: usize,
    pub state: Option<SynthesisState>,
    pub certificate: Option<CertificateReport>,
    pub trace: IterationTrace,
}

impl FeasibilityResult {
    pub fn controller(&self, tau: f64) -> Option<PidPdcController> {
        self.state.as_ref().map(|s| PidPdcController {
            tau,
            gains: s.r.clone(),
        })
    }
}

fn measure_of(
    p: &FeasibilityProblem,
    out: &SolveOutcome,
    variant: Variant,
) -> Result<f64, SynthesisError> {
    match variant {
        Variant::Spectral => spectral_measure(&out.eval(&p.q), p.ny),
        Variant::Fractional => fractional_measure(&out.eval(&p.x1), &out.value(&p.w22), &p.c2),
    }
}

/// Convex surrogate linearized at the current point.
fn surrogate(
    p: &FeasibilityProblem,
    out: &SolveOutcome,
    variant: Variant,
) -> Result<Expr, AlgorithmError> {
    Ok(match variant {
        Variant::Spectral => {
            let qk = out.eval(&p.q);
            let (_, v) = top_eigenpairs(&crate::linalg::symmetrize(&qk), p.ny)?;
            let n = qk.nrows();
            // Trace(Q) − Σ w_iᵀ Q w_i = ⟨I − VVᵀ, Q⟩
            p.q.inner(&(eye(n) - &v * v.transpose()))
        }
        Variant::Fractional => {
            let x1k = out.eval(&p.x1);
            let t = out.value(&p.w22).trace();
            let cx = &p.c2 * &x1k;
            let lin = p.c2.transpose() * &cx;
            p.x1.inner(&lin)
                .scale(-2.0 / t)
                .add(&p.w22.expr().trace().scale(cx.norm_squared() / (t * t)))
        }
    })
}

/// Algorithm 1 (spectral) or 2 (fractional) at a frozen γ, or on the
/// stabilizability system when `gamma` is `None`.
pub fn run_feasibility(
    plant: &AugmentedPlant,
    c2: &DMatrix<f64>,
    gamma: Option<f64>,
    variant: Variant,
    settings: &Settings,
    solver: &dyn ConicSolver,
) -> Result<FeasibilityResult, AlgorithmError> {
    let mut p = feasibility_constraints(plant, c2, gamma, settings);
    let mut trace = IterationTrace::default();
    let start = Instant::now();
    p.model.minimize(p.q.trace());
    let out = solver.solve(&p.model.assemble()?);
    let declared = |trace: IterationTrace, status, measure| FeasibilityResult {
        status,
        variant,
        gamma,
        measure,
        measure_accepted: false,
        iterations: 0,
        state: None,
        certificate: None,
        trace,
    };
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            trace.records.push(TraceRecord {
                iter: 0,
                measure: f64::NAN,
                gamma,
                status: out.status,
                seconds: start.elapsed().as_secs_f64(),
            });
            return Ok(declared(
                trace,
                FeasibilityStatus::InfeasibleDeclared,
                f64::NAN,
            ));
        }
        status => {
            trace.records.push(TraceRecord {
                iter: 0,
                measure: f64::NAN,
                gamma,
                status,
                seconds: start.elapsed().as_secs_f64(),
            });
            return Err(AlgorithmError::NumericalFailure {
                status,
                iteration: 0,
                trace,
            });
        }
    }
    let degenerate = |iteration, trace| AlgorithmError::DegenerateMeasure { iteration, trace };
    let mut cur = out;
    let mut meas = match measure_of(&p, &cur, variant) {
        Ok(v) => v,
        Err(_) => return Err(degenerate(0, trace)),
    };
    trace.records.push(TraceRecord {
        iter: 0,
        measure: meas,
        gamma,
        status: cur.status,
        seconds: start.elapsed().as_secs_f64(),
    });
    let mut k = 0;
    let mut stopped = meas <= settings.eps;
    while !stopped && k < settings.max_iter {
        let obj = surrogate(&p, &cur, variant)?;
        p.model.minimize(obj.clone());
        let next = solver.solve(&p.model.assemble()?);
        k += 1;
        if !next.is_optimal() {
            trace.records.push(TraceRecord {
                iter: k,
                measure: f64::NAN,
                gamma,
                status: next.status,
                seconds: start.elapsed().as_secs_f64(),
            });
            return Err(AlgorithmError::NumericalFailure {
                status: next.status,
                iteration: k,
                trace,
            });
        }
        // a reduced-accuracy solve can land above the linearization point,
        // which is itself feasible; the incumbent is kept in that case
        let next = if obj.eval(&next.x)[(0, 0)] > obj.eval(&cur.x)[(0, 0)] {
            SolveOutcome {
                status: next.status,
                ..cur.clone()
            }
        } else {
            next
        };
        let new = match measure_of(&p, &next, variant) {
            Ok(v) => v,
            Err(_) => return Err(degenerate(k, trace)),
        };
        trace.records.push(TraceRecord {
            iter: k,
            measure: new,
            gamma,
            status: next.status,
            seconds: start.elapsed().as_secs_f64(),
        });
        // relative progress; the fractional rule is written on g = 1 − measure
        let progress = match variant {
            Variant::Spectral => (meas - new) / meas.max(f64::MIN_POSITIVE),
            Variant::Fractional => {
                ((1.0 - new) - (1.0 - meas)) / (1.0 - meas).max(f64::MIN_POSITIVE)
            }
        };
        cur = next;
        meas = new;
        stopped = meas <= settings.eps || progress <= settings.eps;
    }
    let state = p.state(&cur, plant);
    let accepted = meas <= settings.eps;
    let controller = PidPdcController {
        tau: settings.tau,
        gains: state.r.clone(),
    };
    let certificate = if accepted {
        Some(check_certificate(
            plant,
            &state.x,
            &controller,
            gamma,
            &alpha_grid(plant.rule_count()),
            settings.delta,
        )?)
    } else {
        None
    };
    let status = match (&certificate, stopped) {
        (Some(c), _) if c.pass => FeasibilityStatus::Feasible,
        (_, false) => FeasibilityStatus::IterationLimit,
        _ => FeasibilityStatus::InfeasibleDeclared,
    };
    Ok(FeasibilityResult {
        status,
        variant,
        gamma,
        measure: meas,
        measure_accepted: accepted,
        iterations: k,
        state: Some(state),
        certificate,
        trace,
    })
}

pub fn algorithm1_spectral(
    plant: &AugmentedPlant,
    c2: &DMatrix<f64>,
    gamma: f64,
    settings: &Settings,
) -> Result<FeasibilityResult, AlgorithmError> {
    run_feasibility(
        plant,
        c2,
        Some(gamma),
        Variant::Spectral,
        settings,
        &settings.solver,
    )
}

pub fn algorithm2_fractional(
    plant: &AugmentedPlant,
    c2: &DMatrix<f64>,
    gamma: f64,
    settings: &Settings,
) -> Result<FeasibilityResult, AlgorithmError> {
    run_feasibility(
        plant,
        c2,
        Some(gamma),
        Variant::Fractional,
        settings,
        &settings.solver,
    )
}

pub fn stabilizability_init(
    plant: &AugmentedPlant,
    c2: &DMatrix<f64>,
    variant: Variant,
    settings: &Settings,
) -> Result<FeasibilityResult, AlgorithmError> {
    run_feasibility(plant, c2, None, variant, settings, &settings.solver)
}

// ---- certificates ---------------------------------------------------------------

/// Points of the simplex used for falsification checks: for two rules, 101
/// evenly spaced points; otherwise a lattice of resolution 10 plus 101
/// points along every edge (vertices included).
pub fn alpha_grid(l: usize) -> Vec<Vec<f64>> {
    alpha_grid_with(l, 101, 10)
}

pub fn alpha_grid_with(l: usize, edge_points: usize, lattice: usize) -> Vec<Vec<f64>> {
    if l == 1 {
        return vec![vec![1.0]];
    }
    let mut pts = Vec::new();
    for a in 0..l {
        for b in a + 1..l {
            for k in 0..edge_points {
                let t = k as f64 / (edge_points - 1) as f64;
                let mut v = vec![0.0; l];
                v[a] = 1.0 - t;
                v[b] = t;
                pts.push(v);
            }
        }
    }
    if l > 2 {
        let mut comp = vec![0usize; l];
        lattice_points(&mut comp, 0, lattice, lattice, &mut pts);
    }
    pts
}

fn lattice_points(
    comp: &mut Vec<usize>,
    pos: usize,
    left: usize,
    res: usize,
    out: &mut Vec<Vec<f64>>,
) {
    if pos == comp.len() - 1 {
        comp[pos] = left;
        // skip points already on an edge
        if comp.iter().filter(|&&c| c > 0).count() > 2 {
            out.push(comp.iter().map(|&c| c as f64 / res as f64).collect());
        }
        return;
    }
    for c in 0..=left {
        comp[pos] = c;
        lattice_points(comp, pos + 1, left - c, res, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub pass: bool,
    pub gamma: Option<f64>,
    pub max_eigenvalue: f64,
    pub worst_alpha: Vec<f64>,
    pub min_eigenvalue_x: f64,
    pub points: usize,
}

/// Recomputes `W_j = K_j 𝓒 X` and evaluates `Σ_i Σ_j α_i α_j M_ij` on the
/// grid. With `gamma = None` only the (1,1) blocks are checked.
pub fn check_certificate(
    plant: &AugmentedPlant,
    x: &DMatrix<f64>,
    controller: &PidPdcController,
    gamma: Option<f64>,
    grid: &[Vec<f64>],
    delta: f64,
) -> Result<CertificateReport, SynthesisError> {
    let l = plant.rule_count();
    if controller.gains.len() != l {
        return Err(SynthesisError::Dimension(format!(
            "controller has {} rules, plant has {l}",
            controller.gains.len()
        )));
    }
    let xs = crate::linalg::symmetrize(x);
    let xe = Expr::constant(xs.clone());
    let mut blocks = vec![vec![DMatrix::zeros(0, 0); l]; l];
    for j in 0..l {
        let k = pid_realization(&controller.gains[j], controller.tau)?;
        let w = exact_w(plant, &controller.gains[j], controller.tau, &xs)?;
        for (i, row) in blocks.iter_mut().enumerate() {
            row[j] = match gamma {
                Some(g) => {
                    mij_expr(
                        plant,
                        i,
                        &xe,
                        &Expr::constant(k.clone()),
                        &Expr::constant(w.clone()),
                        &Expr::scalar(g),
                    )
                    .constant
                }
                None => mij_stab_expr(plant, i, &xe, &Expr::constant(w.clone())).constant,
            };
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_alpha = Vec::new();
    for a in grid {
        let mut s = DMatrix::zeros(blocks[0][0].nrows(), blocks[0][0].ncols());
        for i in 0..l {
            for j in 0..l {
                let c = a[i] * a[j];
                if c != 0.0 {
                    s += &blocks[i][j] * c;
                }
            }
        }
        let e = max_eigenvalue(&s);
        if e > worst {
            worst = e;
            worst_alpha = a.clone();
        }
    }
    let min_x = min_eigenvalue(&xs);
    Ok(CertificateReport {
        pass: worst <= -delta / 2.0 && min_x >= delta / 2.0,
        gamma,
        max_eigenvalue: worst,
        worst_alpha,
        min_eigenvalue_x: min_x,
        points: grid.len(),
    })
}

// ---- frozen-variable LMIs ---------------------------------------------------------

/// Result of an LMI solve with one factor of the bilinear terms frozen.
#[derive(Debug, Clone)]
pub struct FrozenSolution {
    pub gamma: f64,
    pub x: DMatrix<f64>,
    pub controller: PidPdcController,
}

/// Smallest γ with the gains frozen; solves for X and γ. With
/// `fixed_gamma = Some(g)` only feasibility at g is tested.
pub fn lyapunov_for_gains(
    plant: &AugmentedPlant,
    controller: &PidPdcController,
    fixed_gamma: Option<f64>,
    settings: &Settings,
) -> Result<Option<FrozenSolution>, AlgorithmError> {
    let nc = plant.nc();
    let l = plant.rule_count();
    let mut m = Model::new();
    let x = m.var("X", nc, nc, true);
    let (g, ge) = match fixed_gamma {
        Some(v) => (None, Expr::scalar(v)),
        None => {
            let g = m.var("gamma", 1, 1, false);
            let e = g.expr();
            (Some(g), e)
        }
    };
    let xe = x.expr();
    m.positive_definite("lyapunov:0", &xe, settings.delta);
    let ks: Vec<DMatrix<f64>> = controller
        .gains
        .iter()
        .map(|r| pid_realization(r, controller.tau))
        .collect::<Result<_, _>>()?;
    let ws: Vec<Expr> = ks.iter().map(|k| xe.lmul(&(k * &plant.cc))).collect();
    let kes: Vec<Expr> = ks.iter().map(|k| Expr::constant(k.clone())).collect();
    add_relaxation(&mut m, l, settings.delta, |i, j| {
        mij_expr(plant, i, &xe, &kes[j], &ws[j], &ge)
    });
    if let Some(g) = &g {
        m.minimize(g.expr());
    }
    let out = settings.solver.solve(&m.assemble()?);
    Ok(out.is_optimal().then(|| FrozenSolution {
        gamma: g
            .as_ref()
            .map_or_else(|| fixed_gamma.unwrap(), |g| out.value(g)[(0, 0)]),
        x: out.value(&x),
        controller: controller.clone(),
    }))
}

/// Minimal γ making every frozen relaxation block negative definite with
/// margin δ, for fixed X, gains and W. `None` if no γ works.
pub fn initial_gamma(
    plant: &AugmentedPlant,
    state: &SynthesisState,
    tau: f64,
    settings: &Settings,
) -> Result<Option<f64>, AlgorithmError> {
    let l = plant.rule_count();
    let mut m = Model::new();
    let g = m.var("gamma", 1, 1, false);
    let ge = g.expr();
    let xe = Expr::constant(state.x.clone());
    let ks: Vec<Expr> = state
        .r
        .iter()
        .map(|r| pid_realization(r, tau).map(Expr::constant))
        .collect::<Result<_, _>>()?;
    let ws: Vec<Expr> = state.w.iter().map(|w| Expr::constant(w.clone())).collect();
    add_relaxation(&mut m, l, settings.delta, |i, j| {
        mij_expr(plant, i, &xe, &ks[j], &ws[j], &ge)
    });
    m.psd("positive", ge.clone());
    m.minimize(ge);
    let out = settings.solver.solve(&m.assemble()?);
    Ok(out.is_optimal().then(|| out.value(&g)[(0, 0)]))
}

// ---- bisection -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub feasible: bool,
    /// Level actually certified when feasible; may lie below the probed γ.
    pub certified_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectionStep {
    pub round: usize,
    pub gamma: f64,
    pub feasible: bool,
    pub gamma_l: f64,
    pub gamma_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectionOutcome {
    pub gamma_u: f64,
    pub gamma_l: f64,
    pub rounds: usize,
    pub hit_round_cap: bool,
    pub history: Vec<BisectionStep>,
}

impl BisectionOutcome {
    pub fn width_ratio(&self) -> f64 {
        (self.gamma_u - self.gamma_l) / self.gamma_u
    }
}

/// Tests γ = (1 − η)γ_u each round; feasible probes lower γ_u (to the
/// certified level when one is reported), infeasible ones raise γ_l. Stops
/// when (γ_u − γ_l)/γ_u ≤ η or after `round_cap` rounds.
pub fn bisection<E>(
    gamma_u: f64,
    eta: f64,
    round_cap: usize,
    mut oracle: impl FnMut(f64) -> Result<Probe, E>,
) -> Result<BisectionOutcome, E> {
    let mut gu = gamma_u;
    let mut gl = 0.0;
    let mut history = Vec::new();
    let mut rounds = 0;
    while (gu - gl) / gu > eta * (1.0 + 1e-12) {
        if rounds == round_cap {
            return Ok(BisectionOutcome {
                gamma_u: gu,
                gamma_l: gl,
                rounds,
                hit_round_cap: true,
                history,
            });
        }
        rounds += 1;
        let g = (1.0 - eta) * gu;
        let p = oracle(g)?;
        if p.feasible {
            gu = p.certified_gamma.map_or(g, |c| c.min(g));
        } else {
            gl = g;
        }
        history.push(BisectionStep {
            round: rounds,
            gamma: g,
            feasible: p.feasible,
            gamma_l: gl,
            gamma_u: gu,
        });
    }
    Ok(BisectionOutcome {
        gamma_u: gu,
        gamma_l: gl,
        rounds,
        hit_round_cap: false,
        history,
    })
}

// ---- pipeline ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub optimal_gamma: f64,
    pub controller: PidPdcController,
    #[serde(with = "crate::synthesis::rows")]
    pub lyapunov_x: DMatrix<f64>,
    pub certificate: CertificateReport,
    pub algorithm: Variant,
    pub initial_gamma: Option<f64>,
    pub bisection: BisectionOutcome,
    pub stabilizability: FeasibilityResult,
    pub feasibility_results: Vec<FeasibilityResult>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no stabilizing PID PDC controller found")]
    NotStabilizable {
        stabilizability: Box<FeasibilityResult>,
    },
    #[error("stabilizing controller certifies no finite γ")]
    NoInitialGamma,
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
}

/// Stabilizability bootstrap, initial γ, then bisection. Each probe runs the
/// chosen algorithm cold; its gains and Lyapunov matrix, and the incumbent,
/// seed a local refinement whose result is certified on the premise grid.
pub fn synthesize(
    plant: &AugmentedPlant,
    c2: &DMatrix<f64>,
    variant: Variant,
    settings: &Settings,
) -> Result<SynthesisReport, PipelineError> {
    let grid = alpha_grid(plant.rule_count());
    let stab = stabilizability_init(plant, c2, variant, settings)?;
    let mut start = None;
    if let Some(c) = stab.controller(settings.tau) {
        start = lyapunov_for_gains(plant, &c, None, settings)?;
        if start.is_none() {
            let x0 = stab
                .state
                .as_ref()
                .map(|s| &s.x)
                .filter(|x| max_eigenvalue(x) < 1e4);
            start = stabilize(plant, &c, x0, settings)?;
        }
    }
    let Some(start) = start else {
        return Err(PipelineError::NotStabilizable {
            stabilizability: Box::new(stab),
        });
    };
    let init = stab
        .state
        .as_ref()
        .map(|s| initial_gamma(plant, s, settings.tau, settings))
        .transpose()?
        .flatten();
    let Some(mut incumbent) = certify(
        plant,
        start,
        &grid,
        &[1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
        settings,
    )?
    else {
        return Err(PipelineError::NoInitialGamma);
    };
    let mut results = Vec::new();
    let outcome = bisection(
        incumbent.gamma,
        settings.eta,
        settings.round_cap,
        |g| -> Result<Probe, AlgorithmError> {
            let run = run_feasibility(plant, c2, Some(g), variant, settings, &settings.solver);
            let mut seeds = Vec::new();
            match run {
                Ok(res) => {
                    if let (Some(c), Some(s)) = (res.controller(settings.tau), &res.state) {
                        seeds.push((s.x.clone(), c));
                    }
                    results.push(res);
                }
                Err(
                    AlgorithmError::NumericalFailure { .. }
                    | AlgorithmError::DegenerateMeasure { .. },
                ) => {}
                Err(e) => return Err(e),
            }
            seeds.push((incumbent.x.clone(), incumbent.controller.clone()));
            for (x, c) in seeds {
                let Some(r) = refine(plant, &x, &c, settings)? else {
                    continue;
                };
                if r.gamma < incumbent.gamma {
                    incumbent = r;
                }
            }
            Ok(if incumbent.gamma <= g {
                Probe {
                    feasible: true,
                    certified_gamma: Some(incumbent.gamma),
                }
            } else {
                Probe {
                    feasible: false,
                    certified_gamma: None,
                }
            })
        },
    )?;
    let gamma = outcome.gamma_u.max(incumbent.gamma);
    let certificate = check_certificate(
        plant,
        &incumbent.x,
        &incumbent.controller,
        Some(gamma),
        &grid,
        settings.delta,
    )
    .map_err(AlgorithmError::from)?;
    Ok(SynthesisReport {
        optimal_gamma: gamma,
        controller: incumbent.controller,
        lyapunov_x: incumbent.x,
        certificate,
        algorithm: variant,
        initial_gamma: init,
        bisection: outcome,
        stabilizability: stab,
        feasibility_results: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::{Membership, TsFuzzyModel, VertexPlant};
    use crate::simulation::benchmarks::{benchmark_duffing, benchmark_pendulum, benchmark_tora};
    use crate::synthesis::augment;

    #[test]
    fn constraint_counts() {
        let b = benchmark_pendulum();
        let p = augment(&b.model);
        let s = Settings::new(b.tau);
        let f = feasibility_constraints(&p, &b.model.c2, Some(0.5), &s);
        assert_eq!(
            f.counts(),
            ConstraintCounts {
                lyapunov: 1,
                vertex: 2,
                cross: 2,
                lifting: 2,
                equalities: 2
            }
        );
        let t = benchmark_tora();
        let p = augment(&t.model);
        let f = feasibility_constraints(&p, &t.model.c2, Some(10.0), &Settings::new(t.tau));
        let c = f.counts();
        assert_eq!((c.vertex, c.cross, c.lifting), (4, 12, 4));
        let prob = f.model.assemble().unwrap();
        assert_eq!(prob.psd_block_count(), 21);
    }

    #[test]
    fn single_rule_has_no_cross_terms() {
        let b = benchmark_duffing(4.0);
        let mut model = b.model.clone();
        model.rules.truncate(1);
        model.membership = Membership::PiecewiseTable {
            state: 0,
            breakpoints: vec![0.0],
            weights: vec![vec![1.0]],
        };
        let p = augment(&model);
        let f = feasibility_constraints(&p, &model.c2, Some(1.0), &Settings::new(2.0));
        assert_eq!(f.counts().cross, 0);
        assert_eq!(alpha_grid(1), vec![vec![1.0]]);
    }

    #[test]
    fn grid_contents() {
        let g = alpha_grid(2);
        assert_eq!(g.len(), 101);
        assert!(g.contains(&vec![1.0, 0.0]) && g.contains(&vec![0.0, 1.0]));
        let g = alpha_grid(4);
        assert!(g
            .iter()
            .all(|a| (a.iter().sum::<f64>() - 1.0).abs() < 1e-12));
        assert!(g.contains(&vec![0.0, 0.0, 1.0, 0.0]));
        assert!(g.contains(&vec![0.5, 0.0, 0.5, 0.0]));
    }

    #[test]
    fn bisection_threshold_oracle() {
        for eta in [0.1, 0.01] {
            let out = bisection::<()>(1.0, eta, 100, |g| {
                Ok(Probe {
                    feasible: g >= 0.5,
                    certified_gamma: None,
                })
            })
            .unwrap();
            assert!(out.width_ratio() <= eta * (1.0 + 1e-9));
            assert!(out.gamma_u >= 0.5 && out.gamma_u <= 0.5 / (1.0 - eta));
        }
        let out = bisection::<()>(1.0, 0.5, 10, |_| {
            Ok(Probe {
                feasible: true,
                certified_gamma: None,
            })
        })
        .unwrap();
        assert!(out.hit_round_cap);
        assert!((out.gamma_u - 0.5f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn zero_controller_fails_certificate() {
        let b = benchmark_pendulum();
        let p = augment(&b.model);
        let c = PidPdcController::zeros(6.0, 2, 1, 1);
        let rep = check_certificate(&p, &eye(4), &c, Some(1.0), &alpha_grid(2), 1e-6).unwrap();
        assert!(!rep.pass);
        let s = Settings::new(6.0);
        assert!(lyapunov_for_gains(&p, &c, Some(1.0), &s).unwrap().is_none());
    }

    #[test]
    fn unstabilizable_plant_is_declared() {
        let r = VertexPlant {
            a: eye(1),
            b1: DMatrix::zeros(1, 1),
            b2: DMatrix::zeros(1, 1),
            c1: eye(1),
            d11: DMatrix::zeros(1, 1),
            d12: DMatrix::zeros(1, 1),
        };
        let model = TsFuzzyModel {
            rules: vec![r.clone(), r],
            c2: eye(1),
            d21: DMatrix::zeros(1, 1),
            membership: Membership::DuffingQuadratic { state: 0, d: 1.0 },
            domain: vec![],
        };
        let p = augment(&model);
        let res =
            stabilizability_init(&p, &model.c2, Variant::Spectral, &Settings::new(1.0)).unwrap();
        assert_eq!(res.status, FeasibilityStatus::InfeasibleDeclared);
    }

    #[test]
    fn initial_gamma_signals_indefinite_block() {
        let b = benchmark_pendulum();
        let p = augment(&b.model);
        let s = Settings::new(6.0);
        let state = SynthesisState {
            x: eye(4),
            w: vec![DMatrix::zeros(3, 4); 2],
            y: vec![DMatrix::zeros(3, 4); 2],
            w11: vec![DMatrix::zeros(3, 3); 2],
            w22: DMatrix::zeros(4, 4),
            r: vec![PidRuleGains::zeros(1, 1); 2],
            gamma: None,
        };
        assert_eq!(initial_gamma(&p, &state, 6.0, &s).unwrap(), None);
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = IterationTrace {
            records: vec![
                TraceRecord {
                    iter: 0,
                    measure: 0.25,
                    gamma: Some(1.0),
                    status: SolveStatus::Optimal,
                    seconds: 0.1,
                },
                TraceRecord {
                    iter: 1,
                    measure: 1.0 / 3.0,
                    gamma: Some(1.0),
                    status: SolveStatus::Optimal,
                    seconds: 0.2,
                },
            ],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iter,measure,gamma,status,seconds\n"));
        let back = IterationTrace::read_csv(&buf[..]).unwrap();
        assert_eq!(back[1], (1, 1.0 / 3.0));
        assert!((t.worst_ascent() - (1.0 / 3.0 - 0.25)).abs() < 1e-15);
    }
}
