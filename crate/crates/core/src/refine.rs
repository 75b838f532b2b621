//! Local improvement of a PID PDC controller together with its Lyapunov
//! matrix. The products of gains and Lyapunov matrix are bounded above by a
//! convex quadratic that is tight at the current point, so any solution of a
//! subproblem satisfies the exact bilinear inequalities.

use nalgebra::DMatrix;

use crate::algorithms::{
    alpha_grid, check_certificate, lyapunov_for_gains, AlgorithmError, FrozenSolution, Settings,
};
use crate::linalg::{block, eye, zeros};
use crate::sdp::{ConicSolver, Expr, Model, SolveOutcome, VarHandle};
use crate::synthesis::{
    mij_expr, mij_stab_expr, realization_expr, structured_w_expr, AugmentedPlant, PidPdcController,
    PidRuleGains,
};

/// Upper bound on X while minimizing the stability slack; keeps the
/// subproblem bounded.
const LYAPUNOV_CEILING: f64 = 1e4;

#[derive(Clone, Copy, PartialEq)]
enum Family {
    Stability,
    BoundedReal,
}

/// `(U, Vᵀ)` such that the bilinear part of block (i, j) is `UV + VᵀUᵀ`.
fn factors(plant: &AugmentedPlant, family: Family, i: usize, x: &Expr, r_j: &Expr) -> (Expr, Expr) {
    let (nu, ny) = (plant.nu, plant.ny);
    let measured = plant.cc.rows(2 * nu, ny).into_owned();
    let cx = x.lmul(&measured);
    match family {
        Family::Stability => (r_j.lmul(&plant.bb[i]), cx.transpose()),
        Family::BoundedReal => {
            let gap = zeros(plant.ninf, 3 * nu);
            let e = block(&[vec![&plant.bb[i]], vec![&gap], vec![&plant.d12[i]]]);
            let v = Expr::block(&[vec![&cx, &Expr::zeros(ny, plant.ninf + plant.nz)]]);
            (r_j.lmul(&e), v.transpose())
        }
    }
}

struct Linearization<'a> {
    plant: &'a AugmentedPlant,
    family: Family,
    tau: f64,
    xk: DMatrix<f64>,
    rk: Vec<DMatrix<f64>>,
    /// Balances the two factors so neither dominates the bound.
    rho: f64,
}

impl<'a> Linearization<'a> {
    fn new(
        plant: &'a AugmentedPlant,
        family: Family,
        tau: f64,
        xk: DMatrix<f64>,
        rk: Vec<DMatrix<f64>>,
    ) -> Self {
        let (u, v) = factors(
            plant,
            family,
            0,
            &Expr::constant(xk.clone()),
            &Expr::constant(rk[0].clone()),
        );
        let rho = (u.constant.norm().max(1e-9) / v.constant.norm().max(1e-9)).sqrt();
        Linearization {
            plant,
            family,
            tau,
            xk,
            rk,
            rho,
        }
    }

    /// Affine part of block (i, j) after bounding the bilinear term, and the
    /// factor whose outer product completes the bound.
    fn pair(&self, i: usize, j: usize, x: &Expr, r: &[Expr], gamma: &Expr) -> (Expr, Expr) {
        let p = self.plant;
        let sw = structured_w_expr(x, p.nx, p.nu, self.tau);
        let lin = match self.family {
            Family::Stability => mij_stab_expr(p, i, x, &sw),
            Family::BoundedReal => {
                let k = realization_expr(&r[j], p.nu, self.tau);
                mij_expr(p, i, x, &k, &sw, gamma)
            }
        };
        let (u, vt) = factors(p, self.family, i, x, &r[j]);
        let (uk, vtk) = factors(
            p,
            self.family,
            i,
            &Expr::constant(self.xk.clone()),
            &Expr::constant(self.rk[j].clone()),
        );
        let s = u.scale(1.0 / self.rho).add(&vt.scale(self.rho));
        let d = u.scale(1.0 / self.rho).sub(&vt.scale(self.rho));
        let dk = uk.constant / self.rho - vtk.constant * self.rho;
        let lin = lin
            .sub(&d.transpose().lmul(&dk).sym_part().scale(0.5))
            .add_const(&(&dk * dk.transpose() * 0.5));
        (lin, s)
    }

    /// Relaxation blocks in Schur form: `level − Σ c·lin ⪰ Σ (c/2)·S Sᵀ`.
    fn constrain(&self, m: &mut Model, x: &Expr, r: &[Expr], gamma: &Expr, level: &Expr) {
        let l = self.plant.rule_count();
        let ny = self.plant.ny;
        let mut groups: Vec<(String, Vec<(f64, usize, usize)>)> = (0..l)
            .map(|i| (format!("vertex:{i}"), vec![(1.0, i, i)]))
            .collect();
        for i in 0..l {
            for j in 0..l {
                if i != j {
                    let w = 1.0 / (l as f64 - 1.0);
                    groups.push((
                        format!("cross:{i}:{j}"),
                        vec![(w, i, i), (0.5, i, j), (0.5, j, i)],
                    ));
                }
            }
        }
        for (name, terms) in groups {
            let mut lhs = level.clone();
            let mut cols = Vec::new();
            let mut diag = Vec::new();
            for &(c, i, j) in &terms {
                let (lin, s) = self.pair(i, j, x, r, gamma);
                lhs = lhs.sub(&lin.scale(c));
                cols.push(s);
                diag.push(2.0 / c);
            }
            let n = lhs.nrows();
            let k = cols.len() * ny;
            let mut weight = zeros(k, k);
            for (q, w) in diag.iter().enumerate() {
                weight
                    .view_mut((q * ny, q * ny), (ny, ny))
                    .copy_from(&(eye(ny) * *w));
            }
            let col_refs: Vec<&Expr> = cols.iter().collect();
            let top = Expr::block(&[col_refs]);
            let z = Expr::block(&[
                vec![&lhs, &top],
                vec![&top.transpose(), &Expr::constant(weight)],
            ]);
            debug_assert_eq!(z.nrows(), n + k);
            m.psd(&name, z);
        }
    }
}

/// `‖vec(R)‖ ≤ bound` as a PSD constraint.
pub(crate) fn norm_bound(m: &mut Model, name: &str, r: &Expr, bound: f64) {
    let n = r.nrows() * r.ncols();
    let cols: Vec<Expr> = (0..r.ncols()).map(|c| r.view(0, c, r.nrows(), 1)).collect();
    let refs: Vec<Vec<&Expr>> = cols.iter().map(|c| vec![c]).collect();
    let v = Expr::block(&refs);
    let b = Expr::block(&[
        vec![&Expr::constant(eye(n) * bound), &v],
        vec![&v.transpose(), &Expr::scalar(bound)],
    ]);
    m.psd(name, b);
}

struct Step {
    level: f64,
    x: DMatrix<f64>,
    r: Vec<DMatrix<f64>>,
}

fn step(lin: &Linearization, settings: &Settings) -> Result<Option<Step>, AlgorithmError> {
    let p = lin.plant;
    let (nc, nu, ny) = (p.nc(), p.nu, p.ny);
    let mut m = Model::new();
    let x = m.var("X", nc, nc, true);
    let level = m.var("level", 1, 1, false);
    let r: Vec<VarHandle> = (0..p.rule_count())
        .map(|j| m.var(&format!("R{j}"), 3 * nu, ny, false))
        .collect();
    let xe = x.expr();
    let re: Vec<Expr> = r.iter().map(VarHandle::expr).collect();
    let le = level.expr();
    match lin.family {
        Family::Stability => {
            m.positive_definite("lyapunov:lower", &xe, 1.0);
            m.psd(
                "lyapunov:upper",
                xe.scale(-1.0).add_const(&(eye(nc) * LYAPUNOV_CEILING)),
            );
            let n = nc;
            lin.constrain(&mut m, &xe, &re, &le, &le.times_identity(n));
        }
        Family::BoundedReal => {
            m.positive_definite("lyapunov:0", &xe, settings.delta);
            let n = p.lmi_dim();
            lin.constrain(
                &mut m,
                &xe,
                &re,
                &le,
                &Expr::constant(eye(n) * -settings.delta),
            );
        }
    }
    for (j, v) in re.iter().enumerate() {
        norm_bound(&mut m, &format!("bound:{j}"), v, settings.gain_bound);
    }
    m.minimize(le);
    let out: SolveOutcome = settings.solver.solve(&m.assemble()?);
    // a stalled solve still yields a usable point when it is feasible to
    // tolerance; the caller certifies every point it keeps
    if !out.is_optimal() && !(out.violation <= settings.solver.feas_tol) {
        return Ok(None);
    }
    Ok(Some(Step {
        level: out.value(&level)[(0, 0)],
        x: out.value(&x),
        r: r.iter().map(|v| out.value(v)).collect(),
    }))
}

fn controller(tau: f64, r: &[DMatrix<f64>]) -> PidPdcController {
    PidPdcController {
        tau,
        gains: r.iter().map(PidRuleGains::from_stacked).collect(),
    }
}

/// Drives the worst closed-loop Lyapunov derivative negative, starting from
/// the given gains and Lyapunov guess. Once it is, the gains get the smallest
/// γ their frozen bounded-real inequalities admit. `None` when the rounds run
/// out or a subproblem fails.
pub fn stabilize(
    plant: &AugmentedPlant,
    start: &PidPdcController,
    x0: Option<&DMatrix<f64>>,
    settings: &Settings,
) -> Result<Option<FrozenSolution>, AlgorithmError> {
    let nc = plant.nc();
    let mut xk = x0.cloned().unwrap_or_else(|| eye(nc));
    let mut rk: Vec<DMatrix<f64>> = start.gains.iter().map(PidRuleGains::stacked).collect();
    for _ in 0..settings.refine_rounds {
        let lin = Linearization::new(plant, Family::Stability, settings.tau, xk, rk);
        let Some(s) = step(&lin, settings)? else {
            return Ok(None);
        };
        if s.level < -settings.delta {
            let c = controller(settings.tau, &s.r);
            if let Some(f) = lyapunov_for_gains(plant, &c, None, settings)? {
                return Ok(Some(f));
            }
        }
        xk = s.x;
        rk = s.r;
    }
    Ok(None)
}

/// Minimizes γ from the given linearization point until the relative
/// improvement falls below `settings.eps`. The start need not be feasible;
/// the result is the best iterate passing the certificate check.
pub fn refine(
    plant: &AugmentedPlant,
    x0: &DMatrix<f64>,
    start: &PidPdcController,
    settings: &Settings,
) -> Result<Option<FrozenSolution>, AlgorithmError> {
    let mut xk = x0.clone();
    let mut rk: Vec<DMatrix<f64>> = start.gains.iter().map(PidRuleGains::stacked).collect();
    let mut path: Vec<Step> = Vec::new();
    for _ in 0..settings.refine_rounds {
        let lin = Linearization::new(plant, Family::BoundedReal, settings.tau, xk, rk);
        let Some(s) = step(&lin, settings)? else {
            break;
        };
        let stalled = path
            .last()
            .is_some_and(|p| p.level - s.level < settings.eps * s.level.abs());
        xk = s.x.clone();
        rk = s.r.clone();
        path.push(s);
        if stalled {
            break;
        }
    }
    let grid = alpha_grid(plant.rule_count());
    path.sort_by(|a, b| a.level.total_cmp(&b.level));
    for s in path {
        let candidate = FrozenSolution {
            gamma: s.level,
            x: s.x,
            controller: controller(settings.tau, &s.r),
        };
        if let Some(f) = certify(plant, candidate, &grid, &[1e-4, 1e-3, 1e-2], settings)? {
            return Ok(Some(f));
        }
    }
    Ok(None)
}

/// Returns the point itself when it passes the grid check. Otherwise X is
/// recomputed with the gains frozen at γ relaxed by each factor in `slacks`
/// in turn; with badly scaled X the solver's error can exceed the margin
/// even though the gains are fine.
pub fn certify(
    plant: &AugmentedPlant,
    point: FrozenSolution,
    grid: &[Vec<f64>],
    slacks: &[f64],
    settings: &Settings,
) -> Result<Option<FrozenSolution>, AlgorithmError> {
    let pass = |f: &FrozenSolution| -> Result<bool, AlgorithmError> {
        Ok(check_certificate(
            plant,
            &f.x,
            &f.controller,
            Some(f.gamma),
            grid,
            settings.delta,
        )?
        .pass)
    };
    if pass(&point)? {
        return Ok(Some(point));
    }
    for slack in slacks {
        let g = point.gamma * (1.0 + slack);
        if let Some(f) = lyapunov_for_gains(plant, &point.controller, Some(g), settings)? {
            if pass(&f)? {
                return Ok(Some(f));
            }
        }
    }
    Ok(None)
}
