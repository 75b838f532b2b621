//! PID realization, augmented closed-loop blocks, LMI blocks, the structured
//! part of W, the rank matrix Q and the two feasibility measures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::TsFuzzyModel;
use crate::linalg::{block, eye, is_symmetric, sym_eigenvalues, zeros};
use crate::sdp::Expr;

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("filter constant must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric")]
    NonSymmetric,
    #[error("trace of W22 is {0}, too small for the fractional measure")]
    DegenerateDenominator(f64),
}

/// Per-rule PID parameters, each `n_u × n_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidRuleGains {
    #[serde(with = "rows")]
    pub r_i: DMatrix<f64>,
    #[serde(with = "rows")]
    pub r_d: DMatrix<f64>,
    #[serde(with = "rows")]
    pub r_p: DMatrix<f64>,
}

impl PidRuleGains {
    pub fn zeros(nu: usize, ny: usize) -> Self {
        PidRuleGains {
            r_i: zeros(nu, ny),
            r_d: zeros(nu, ny),
            r_p: zeros(nu, ny),
        }
    }

    /// SISO convenience constructor.
    pub fn scalar(r_i: f64, r_d: f64, r_p: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        PidRuleGains {
            r_i: s(r_i),
            r_d: s(r_d),
            r_p: s(r_p),
        }
    }

    pub fn nu(&self) -> usize {
        self.r_i.nrows()
    }

    pub fn ny(&self) -> usize {
        self.r_i.ncols()
    }

    /// `[R_I; R_D; R_P]`
    pub fn stacked(&self) -> DMatrix<f64> {
        block(&[vec![&self.r_i], vec![&self.r_d], vec![&self.r_p]])
    }

    pub fn from_stacked(r: &DMatrix<f64>) -> Self {
        let nu = r.nrows() / 3;
        let ny = r.ncols();
        PidRuleGains {
            r_i: r.view((0, 0), (nu, ny)).into_owned(),
            r_d: r.view((nu, 0), (nu, ny)).into_owned(),
            r_p: r.view((2 * nu, 0), (nu, ny)).into_owned(),
        }
    }

    fn check(&self) -> Result<(), SynthesisError> {
        let s = self.r_i.shape();
        if self.r_d.shape() != s || self.r_p.shape() != s {
            return Err(SynthesisError::Dimension(
                "R_I, R_D, R_P differ in shape".into(),
            ));
        }
        Ok(())
    }
}

/// Gain-scheduled PID controller: one set of gains per rule and a shared
/// derivative-filter constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidPdcController {
    pub tau: f64,
    pub gains: Vec<PidRuleGains>,
}

impl PidPdcController {
    pub fn zeros(tau: f64, l: usize, nu: usize, ny: usize) -> Self {
        PidPdcController {
            tau,
            gains: vec![PidRuleGains::zeros(nu, ny); l],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PidFrequencyGains {
    pub k_p: DMatrix<f64>,
    pub k_i: DMatrix<f64>,
    pub k_d: DMatrix<f64>,
    pub eps: f64,
}

/// Controller matrix `[[0, 0, R_I], [0, −τI, R_D], [I, I, R_P]]`.
pub fn pid_realization(r: &PidRuleGains, tau: f64) -> Result<DMatrix<f64>, SynthesisError> {
    if !(tau > 0.0) {
        return Err(SynthesisError::NonPositiveTau(tau));
    }
    r.check()?;
    let nu = r.nu();
    let z = zeros(nu, nu);
    let i = eye(nu);
    let t = eye(nu) * -tau;
    Ok(block(&[
        vec![&z, &z, &r.r_i],
        vec![&z, &t, &r.r_d],
        vec![&i, &i, &r.r_p],
    ]))
}

pub fn pid_gains(r: &PidRuleGains, tau: f64) -> Result<PidFrequencyGains, SynthesisError> {
    if !(tau > 0.0) {
        return Err(SynthesisError::NonPositiveTau(tau));
    }
    r.check()?;
    let eps = 1.0 / tau;
    Ok(PidFrequencyGains {
        k_p: &r.r_p + &r.r_d * eps,
        k_i: r.r_i.clone(),
        k_d: &r.r_d * (-eps * eps),
        eps,
    })
}

/// Closed-loop shorthand blocks for the plant augmented with the `2n_u`
/// controller states.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPlant {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    pub ninf: usize,
    pub nz: usize,
    pub a0: Vec<DMatrix<f64>>,
    pub b01: Vec<DMatrix<f64>>,
    pub c01: Vec<DMatrix<f64>>,
    pub bb: Vec<DMatrix<f64>>,
    pub d12: Vec<DMatrix<f64>>,
    pub d11: Vec<DMatrix<f64>>,
    pub cc: DMatrix<f64>,
    pub d21: DMatrix<f64>,
}

impl AugmentedPlant {
    pub fn rule_count(&self) -> usize {
        self.a0.len()
    }

    /// Closed-loop state dimension `n_x + 2n_u`.
    pub fn nc(&self) -> usize {
        self.nx + 2 * self.nu
    }

    /// Size of the bounded-real block.
    pub fn lmi_dim(&self) -> usize {
        self.nc() + self.ninf + self.nz
    }
}

pub fn augment(model: &TsFuzzyModel) -> AugmentedPlant {
    let (nx, nu, ny, ninf) = (model.nx(), model.nu(), model.ny(), model.ninf());
    let nz = model.rules[0].c1.nrows();
    let nc = nx + 2 * nu;
    let mut p = AugmentedPlant {
        nx,
        nu,
        ny,
        ninf,
        nz,
        a0: Vec::new(),
        b01: Vec::new(),
        c01: Vec::new(),
        bb: Vec::new(),
        d12: Vec::new(),
        d11: Vec::new(),
        cc: zeros(2 * nu + ny, nc),
        d21: zeros(2 * nu + ny, ninf),
    };
    for r in &model.rules {
        let mut a0 = zeros(nc, nc);
        a0.view_mut((0, 0), (nx, nx)).copy_from(&r.a);
        let mut b01 = zeros(nc, ninf);
        b01.view_mut((0, 0), (nx, ninf)).copy_from(&r.b1);
        let mut c01 = zeros(nz, nc);
        c01.view_mut((0, 0), (nz, nx)).copy_from(&r.c1);
        let mut bb = zeros(nc, 3 * nu);
        bb.view_mut((0, 2 * nu), (nx, nu)).copy_from(&r.b2);
        bb.view_mut((nx, 0), (2 * nu, 2 * nu))
            .copy_from(&eye(2 * nu));
        let mut d12 = zeros(nz, 3 * nu);
        d12.view_mut((0, 2 * nu), (nz, nu)).copy_from(&r.d12);
        p.a0.push(a0);
        p.b01.push(b01);
        p.c01.push(c01);
        p.bb.push(bb);
        p.d12.push(d12);
        p.d11.push(r.d11.clone());
    }
    p.cc.view_mut((0, nx), (2 * nu, 2 * nu))
        .copy_from(&eye(2 * nu));
    p.cc.view_mut((2 * nu, 0), (ny, nx)).copy_from(&model.c2);
    p.d21
        .view_mut((2 * nu, 0), (ny, ninf))
        .copy_from(&model.d21);
    p
}

/// Block view of a closed-loop-sized symmetric X.
#[derive(Debug, Clone, PartialEq)]
pub struct XPartition {
    pub x11: DMatrix<f64>,
    pub x12: DMatrix<f64>,
    pub x13: DMatrix<f64>,
    pub x22: DMatrix<f64>,
    pub x23: DMatrix<f64>,
    pub x33: DMatrix<f64>,
}

impl XPartition {
    pub fn split(x: &DMatrix<f64>, nx: usize, nu: usize) -> Self {
        let v = |r, c, h, w| x.view((r, c), (h, w)).into_owned();
        XPartition {
            x11: v(0, 0, nx, nx),
            x12: v(0, nx, nx, nu),
            x13: v(0, nx + nu, nx, nu),
            x22: v(nx, nx, nu, nu),
            x23: v(nx, nx + nu, nu, nu),
            x33: v(nx + nu, nx + nu, nu, nu),
        }
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let (x21, x31, x32) = (
            self.x12.transpose(),
            self.x13.transpose(),
            self.x23.transpose(),
        );
        block(&[
            vec![&self.x11, &self.x12, &self.x13],
            vec![&x21, &self.x22, &self.x23],
            vec![&x31, &x32, &self.x33],
        ])
    }

    /// `X_1 = [X_11, X_12, X_13]`
    pub fn x1(&self) -> DMatrix<f64> {
        block(&[vec![&self.x11, &self.x12, &self.x13]])
    }
}

/// Decision variables of one feasibility run, evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisState {
    #[serde(with = "rows")]
    pub x: DMatrix<f64>,
    #[serde(with = "rows_vec")]
    pub w: Vec<DMatrix<f64>>,
    #[serde(with = "rows_vec")]
    pub y: Vec<DMatrix<f64>>,
    #[serde(with = "rows_vec")]
    pub w11: Vec<DMatrix<f64>>,
    #[serde(with = "rows")]
    pub w22: DMatrix<f64>,
    pub r: Vec<PidRuleGains>,
    pub gamma: Option<f64>,
}

// ---- expression builders (numeric versions evaluate constant expressions) --

/// Controller matrix as an expression in the stacked gains.
pub fn realization_expr(r: &Expr, nu: usize, tau: f64) -> Expr {
    let mut head = zeros(3 * nu, 2 * nu);
    head.view_mut((nu, nu), (nu, nu))
        .copy_from(&(eye(nu) * -tau));
    head.view_mut((2 * nu, 0), (nu, nu)).copy_from(&eye(nu));
    head.view_mut((2 * nu, nu), (nu, nu)).copy_from(&eye(nu));
    Expr::block(&[vec![&Expr::constant(head), r]])
}

/// Structured part of W as an expression in X.
pub fn structured_w_expr(x: &Expr, nx: usize, nu: usize, tau: f64) -> Expr {
    let v = |r, c, h, w| x.view(r, c, h, w);
    let (x12, x13) = (v(0, nx, nx, nu), v(0, nx + nu, nx, nu));
    let (x22, x23, x33) = (
        v(nx, nx, nu, nu),
        v(nx, nx + nu, nu, nu),
        v(nx + nu, nx + nu, nu, nu),
    );
    let top = Expr::zeros(nu, nx + 2 * nu);
    let mid = Expr::block(&[vec![
        &x13.transpose().scale(-tau),
        &x23.transpose().scale(-tau),
        &x33.scale(-tau),
    ]]);
    let bot = Expr::block(&[vec![
        &x12.transpose().add(&x13.transpose()),
        &x22.add(&x23.transpose()),
        &x23.add(&x33),
    ]]);
    Expr::block(&[vec![&top], vec![&mid], vec![&bot]])
}

/// The bounded-real block for rule pair (i, j); `k_j` is the controller
/// matrix of rule j and `w_j` stands in for `K_j 𝓒 X`.
pub fn mij_expr(
    plant: &AugmentedPlant,
    i: usize,
    x: &Expr,
    k_j: &Expr,
    w_j: &Expr,
    gamma: &Expr,
) -> Expr {
    let s = x.lmul(&plant.a0[i]).add(&w_j.lmul(&plant.bb[i])).sym_part();
    let b = k_j
        .rmul(&plant.d21)
        .lmul(&plant.bb[i])
        .add_const(&plant.b01[i]);
    let c = x.lmul(&plant.c01[i]).add(&w_j.lmul(&plant.d12[i]));
    let d = k_j
        .rmul(&plant.d21)
        .lmul(&plant.d12[i])
        .add_const(&plant.d11[i]);
    let ninf = plant.ninf;
    let nz = plant.nz;
    let g_inf = gamma.times_identity(ninf).scale(-1.0);
    let g_z = gamma.times_identity(nz).scale(-1.0);
    Expr::block(&[
        vec![&s, &b, &c.transpose()],
        vec![&b.transpose(), &g_inf, &d.transpose()],
        vec![&c, &d, &g_z],
    ])
}

/// The (1,1) block alone, used for stabilizability.
pub fn mij_stab_expr(plant: &AugmentedPlant, i: usize, x: &Expr, w_j: &Expr) -> Expr {
    x.lmul(&plant.a0[i]).add(&w_j.lmul(&plant.bb[i])).sym_part()
}

pub fn build_mij(
    plant: &AugmentedPlant,
    i: usize,
    x: &DMatrix<f64>,
    r_j: &PidRuleGains,
    tau: f64,
    w_j: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>, SynthesisError> {
    let nc = plant.nc();
    if x.shape() != (nc, nc)
        || w_j.shape() != (3 * plant.nu, nc)
        || r_j.stacked().shape() != (3 * plant.nu, plant.ny)
    {
        return Err(SynthesisError::Dimension(
            "X, W_j or R_j has the wrong shape".into(),
        ));
    }
    let k = pid_realization(r_j, tau)?;
    let e = mij_expr(
        plant,
        i,
        &Expr::constant(x.clone()),
        &Expr::constant(k),
        &Expr::constant(w_j.clone()),
        &Expr::scalar(gamma),
    );
    Ok(e.constant)
}

pub fn build_mij_stab(
    plant: &AugmentedPlant,
    i: usize,
    x: &DMatrix<f64>,
    w_j: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthesisError> {
    let nc = plant.nc();
    if x.shape() != (nc, nc) || w_j.shape() != (3 * plant.nu, nc) {
        return Err(SynthesisError::Dimension(
            "X or W_j has the wrong shape".into(),
        ));
    }
    let s = &plant.a0[i] * x + &plant.bb[i] * w_j;
    Ok(&s + s.transpose())
}

pub fn structured_w(x: &DMatrix<f64>, nx: usize, nu: usize, tau: f64) -> DMatrix<f64> {
    structured_w_expr(&Expr::constant(x.clone()), nx, nu, tau).constant
}

/// `W_j = K_j 𝓒 X`, the exact change of variables.
pub fn exact_w(
    plant: &AugmentedPlant,
    r_j: &PidRuleGains,
    tau: f64,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthesisError> {
    Ok(pid_realization(r_j, tau)? * &plant.cc * x)
}

/// Closed-loop state matrix of rule pair (i, j).
pub fn closed_loop_a(
    plant: &AugmentedPlant,
    i: usize,
    r_j: &PidRuleGains,
    tau: f64,
) -> Result<DMatrix<f64>, SynthesisError> {
    Ok(&plant.a0[i] + &plant.bb[i] * pid_realization(r_j, tau)? * &plant.cc)
}

pub fn build_q(
    x1: &DMatrix<f64>,
    w22: &DMatrix<f64>,
    c2: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthesisError> {
    let ny = c2.nrows();
    if c2.ncols() != x1.nrows() || w22.shape() != (x1.ncols(), x1.ncols()) {
        return Err(SynthesisError::Dimension(
            "X_1, W_22 and C_2 disagree".into(),
        ));
    }
    let cx = c2 * x1;
    let cxt = cx.transpose();
    Ok(block(&[vec![w22, &cxt], vec![&cx, &eye(ny)]]))
}

pub fn q_expr(x1: &Expr, w22: &Expr, c2: &DMatrix<f64>) -> Expr {
    let cx = x1.lmul(c2);
    Expr::block(&[
        vec![w22, &cx.transpose()],
        vec![&cx, &Expr::identity(c2.nrows())],
    ])
}

/// `Trace(Q)` minus the sum of its `n_y` largest eigenvalues.
pub fn spectral_measure(q: &DMatrix<f64>, ny: usize) -> Result<f64, SynthesisError> {
    if !is_symmetric(q, 1e-9) {
        return Err(SynthesisError::NonSymmetric);
    }
    let ev = sym_eigenvalues(q);
    let keep = ev.len().saturating_sub(ny);
    Ok(ev[..keep].iter().sum())
}

/// `1 − ‖C_2X_1‖² / Trace(W_22)`.
pub fn fractional_measure(
    x1: &DMatrix<f64>,
    w22: &DMatrix<f64>,
    c2: &DMatrix<f64>,
) -> Result<f64, SynthesisError> {
    let t = w22.trace();
    if !(t > 1e-12) {
        return Err(SynthesisError::DegenerateDenominator(t));
    }
    Ok(1.0 - (c2 * x1).norm_squared() / t)
}

// ---- serde helpers for matrices as row lists -------------------------------

pub(crate) mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        crate::fuzzy::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r: Vec<Vec<f64>> = Vec::deserialize(d)?;
        crate::fuzzy::from_rows(&r, "matrix").map_err(serde::de::Error::custom)
    }
}

pub(crate) mod rows_vec {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(crate::fuzzy::to_rows)
            .collect::<Vec<_>>()
            .serialize(s)
    }

    #[allow(dead_code)]
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let r: Vec<Vec<Vec<f64>>> = Vec::deserialize(d)?;
        r.iter()
            .map(|m| crate::fuzzy::from_rows(m, "matrix").map_err(serde::de::Error::custom))
            .collect()
    }
}
