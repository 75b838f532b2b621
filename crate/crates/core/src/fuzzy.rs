//! Takagi-Sugeno fuzzy models: vertex plants, membership functions and
//! simplex-weighted blending.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for membership weights to count as lying in the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("premise variable x{index} = {value} outside domain [{min}, {max}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("state vector has length {found}, model expects {expected}")]
    StateLength { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model file: {0}")]
    Parse(String),
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One rule of the fuzzy model.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexPlant {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
}

/// Interval bound on one premise variable, identified by its state index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiseBound {
    pub state: usize,
    pub min: f64,
    pub max: f64,
}

/// Built-in membership families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Membership {
    /// Two rules; `α1 = (1 − σ(k(x − c)))·σ(k(x + c))`, `α2 = 1 − α1`.
    PendulumSigmoid {
        state: usize,
        slope: f64,
        center: f64,
    },
    /// Two rules; `α1 = 1 − x²/d²`, `α2 = x²/d²`.
    DuffingQuadratic { state: usize, d: f64 },
    /// Four rules built from two premises (x_p, x_q).
    ToraQuadruple {
        first: usize,
        second: usize,
        a: f64,
        b: f64,
    },
    /// Linear interpolation of per-rule weights over one premise variable.
    PiecewiseTable {
        state: usize,
        breakpoints: Vec<f64>,
        weights: Vec<Vec<f64>>,
    },
}

impl Membership {
    pub fn rule_count(&self) -> Option<usize> {
        match self {
            Membership::PendulumSigmoid { .. } | Membership::DuffingQuadratic { .. } => Some(2),
            Membership::ToraQuadruple { .. } => Some(4),
            Membership::PiecewiseTable { weights, .. } => weights.first().map(Vec::len),
        }
    }

    fn raw(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Membership::PendulumSigmoid {
                state,
                slope,
                center,
            } => {
                let s = |v: f64| 1.0 / (1.0 + (-v).exp());
                let a1 = (1.0 - s(slope * (x[state] - center))) * s(slope * (x[state] + center));
                vec![a1, 1.0 - a1]
            }
            Membership::DuffingQuadratic { state, d } => {
                let r = x[state] * x[state] / (d * d);
                vec![1.0 - r, r]
            }
            Membership::ToraQuadruple {
                first,
                second,
                a,
                b,
            } => {
                let a1 = x[first] * x[first] / (a * a);
                let t = x[second];
                // limit at t = 0 is 1
                let a3 = if t.abs() < 1e-8 {
                    1.0
                } else {
                    (b * t.sin() - t * b.sin()) / (t * (b - b.sin()))
                };
                vec![a1, 0.5 - a1, a3, 0.5 - a3]
            }
            Membership::PiecewiseTable {
                state,
                ref breakpoints,
                ref weights,
            } => {
                let v = x[state];
                let n = breakpoints.len();
                if n == 1 || v <= breakpoints[0] {
                    return weights[0].clone();
                }
                if v >= breakpoints[n - 1] {
                    return weights[n - 1].clone();
                }
                let k = breakpoints.partition_point(|&b| b <= v) - 1;
                let t = (v - breakpoints[k]) / (breakpoints[k + 1] - breakpoints[k]);
                weights[k]
                    .iter()
                    .zip(&weights[k + 1])
                    .map(|(lo, hi)| (1.0 - t) * lo + t * hi)
                    .collect()
            }
        }
    }
}

/// Membership weights on the simplex Γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(pub Vec<f64>);

impl SimplexWeights {
    pub fn vertex(l: usize, i: usize) -> Self {
        let mut v = vec![0.0; l];
        v[i] = 1.0;
        SimplexWeights(v)
    }

    pub fn uniform(l: usize) -> Self {
        SimplexWeights(vec![1.0 / l as f64; l])
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        (sum - 1.0).abs() <= SIMPLEX_TOL && self.0.iter().all(|&a| a >= -1e-12)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Result of evaluating memberships; `clamped` flags a renormalized output.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipValue {
    pub weights: SimplexWeights,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsFuzzyModel {
    pub rules: Vec<VertexPlant>,
    pub c2: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub membership: Membership,
    pub domain: Vec<PremiseBound>,
}

/// Blended plant matrices at a fixed α.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedPlant {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d21: DMatrix<f64>,
}

impl TsFuzzyModel {
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }
    pub fn nx(&self) -> usize {
        self.rules[0].a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.rules[0].b2.ncols()
    }
    pub fn ny(&self) -> usize {
        self.c2.nrows()
    }
    pub fn ninf(&self) -> usize {
        self.rules[0].b1.ncols()
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn from_path(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }
}

/// Findings reported by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Finding {
    Dimension {
        matrix: String,
        rule: Option<usize>,
        expected: (usize, usize),
        found: (usize, usize),
    },
    RuleCount {
        membership: usize,
        rules: usize,
    },
    Simplex {
        state: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::Dimension {
                matrix,
                rule,
                expected,
                found,
            } => {
                let rule = rule
                    .map(|r| format!(" (rule {})", r + 1))
                    .unwrap_or_default();
                write!(
                    f,
                    "{matrix}{rule}: expected {}x{}, found {}x{}",
                    expected.0, expected.1, found.0, found.1
                )
            }
            Finding::RuleCount { membership, rules } => {
                write!(
                    f,
                    "membership yields {membership} weights but model has {rules} rules"
                )
            }
            Finding::Simplex { state, weights } => {
                write!(f, "membership outside simplex at {state:?}: {weights:?}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
    pub fn has_dimension_findings(&self) -> bool {
        self.findings
            .iter()
            .any(|f| matches!(f, Finding::Dimension { .. } | Finding::RuleCount { .. }))
    }
}

const GRID_POINTS: usize = 41;

pub fn validate_model(model: &TsFuzzyModel) -> ValidationReport {
    let mut findings = Vec::new();
    if model.rules.is_empty() {
        findings.push(Finding::RuleCount {
            membership: model.membership.rule_count().unwrap_or(0),
            rules: 0,
        });
        return ValidationReport { findings };
    }
    let r0 = &model.rules[0];
    let nx = r0.a.nrows();
    let nu = r0.b2.ncols();
    let ninf = r0.b1.ncols();
    let nz = r0.c1.nrows();
    let ny = model.c2.nrows();
    let mut check = |name: &str, rule: Option<usize>, m: &DMatrix<f64>, r: usize, c: usize| {
        if m.shape() != (r, c) {
            findings.push(Finding::Dimension {
                matrix: name.to_string(),
                rule,
                expected: (r, c),
                found: m.shape(),
            });
        }
    };
    for (i, p) in model.rules.iter().enumerate() {
        // conventional per-rule names: A_i, B_1i, ...
        let tag = |base: &str| format!("{base}{}", i + 1);
        check(&tag("A"), Some(i), &p.a, nx, nx);
        check(&tag("B1"), Some(i), &p.b1, nx, ninf);
        check(&tag("B2"), Some(i), &p.b2, nx, nu);
        check(&tag("C1"), Some(i), &p.c1, nz, nx);
        check(&tag("D11"), Some(i), &p.d11, nz, ninf);
        check(&tag("D12"), Some(i), &p.d12, nz, nu);
    }
    check("C2", None, &model.c2, ny, nx);
    check("D21", None, &model.d21, ny, ninf);
    if let Some(m) = model.membership.rule_count() {
        if m != model.rules.len() {
            findings.push(Finding::RuleCount {
                membership: m,
                rules: model.rules.len(),
            });
        }
    }
    if findings.is_empty() {
        findings.extend(simplex_findings(model));
    }
    ValidationReport { findings }
}

fn simplex_findings(model: &TsFuzzyModel) -> Vec<Finding> {
    let mut out = Vec::new();
    let nx = model.nx();
    let dims = model.domain.len();
    let total = GRID_POINTS.pow(dims as u32);
    for flat in 0..total {
        let mut x = vec![0.0; nx];
        let mut k = flat;
        for b in &model.domain {
            let t = (k % GRID_POINTS) as f64 / (GRID_POINTS - 1) as f64;
            k /= GRID_POINTS;
            x[b.state] = b.min + t * (b.max - b.min);
        }
        let raw = model.membership.raw(&x);
        let w = SimplexWeights(raw.clone());
        if !w.is_valid() {
            out.push(Finding::Simplex {
                state: x,
                weights: raw,
            });
        }
    }
    out
}

/// Evaluates the membership weights at the state `x`; premise variables are
/// read from their designated state indices.
pub fn membership_eval(model: &TsFuzzyModel, x: &[f64]) -> Result<MembershipValue, ModelError> {
    if x.len() != model.nx() {
        return Err(ModelError::StateLength {
            expected: model.nx(),
            found: x.len(),
        });
    }
    for b in &model.domain {
        let v = x[b.state];
        let slack = 1e-12 * (1.0 + b.max.abs().max(b.min.abs()));
        if !(v >= b.min - slack && v <= b.max + slack) {
            return Err(ModelError::OutOfDomain {
                index: b.state,
                value: v,
                min: b.min,
                max: b.max,
            });
        }
    }
    let raw = model.membership.raw(x);
    Ok(normalize(raw))
}

/// Clamps negative weights to zero and renormalizes onto Γ.
fn normalize(mut raw: Vec<f64>) -> MembershipValue {
    let mut clamped = false;
    for a in raw.iter_mut() {
        if *a < 0.0 {
            clamped |= *a < -1e-12;
            *a = 0.0;
        }
    }
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            clamped = true;
        }
        for a in raw.iter_mut() {
            *a /= sum;
        }
    } else {
        clamped = true;
        let l = raw.len() as f64;
        raw.iter_mut().for_each(|a| *a = 1.0 / l);
    }
    MembershipValue {
        weights: SimplexWeights(raw),
        clamped,
    }
}

/// Projects the premise variables of `x` onto the premise domain.
pub fn saturate_premises(model: &TsFuzzyModel, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for b in &model.domain {
        y[b.state] = y[b.state].clamp(b.min, b.max);
    }
    y
}

pub fn blend(model: &TsFuzzyModel, alpha: &SimplexWeights) -> Result<BlendedPlant, ModelError> {
    let l = model.rule_count();
    if alpha.0.len() != l {
        return Err(ModelError::Dimension(format!(
            "weight vector has {} entries, model has {l} rules",
            alpha.0.len()
        )));
    }
    let r0 = &model.rules[0];
    let mut out = BlendedPlant {
        a: DMatrix::zeros(r0.a.nrows(), r0.a.ncols()),
        b1: DMatrix::zeros(r0.b1.nrows(), r0.b1.ncols()),
        b2: DMatrix::zeros(r0.b2.nrows(), r0.b2.ncols()),
        c1: DMatrix::zeros(r0.c1.nrows(), r0.c1.ncols()),
        d11: DMatrix::zeros(r0.d11.nrows(), r0.d11.ncols()),
        d12: DMatrix::zeros(r0.d12.nrows(), r0.d12.ncols()),
        c2: model.c2.clone(),
        d21: model.d21.clone(),
    };
    for (w, p) in alpha.0.iter().zip(&model.rules) {
        if p.a.shape() != out.a.shape()
            || p.b1.shape() != out.b1.shape()
            || p.b2.shape() != out.b2.shape()
        {
            return Err(ModelError::Dimension(
                "rule matrices differ in shape".into(),
            ));
        }
        out.a += &p.a * *w;
        out.b1 += &p.b1 * *w;
        out.b2 += &p.b2 * *w;
        out.c1 += &p.c1 * *w;
        out.d11 += &p.d11 * *w;
        out.d12 += &p.d12 * *w;
    }
    Ok(out)
}

// ---- model file -----------------------------------------------------------

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct RuleFile {
    A: Rows,
    B1: Rows,
    B2: Rows,
    C1: Rows,
    D11: Rows,
    D12: Rows,
}

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ModelFile {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    n_inf: usize,
    L: usize,
    rules: Vec<RuleFile>,
    C2: Rows,
    D21: Rows,
    membership: Membership,
    domain: Vec<PremiseBound>,
}

pub(crate) fn from_rows(rows: &Rows, name: &str) -> Result<DMatrix<f64>, ModelError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(ModelError::Parse(format!("{name}: ragged rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds a matrix that may have zero rows or columns from file rows.
fn sized(rows: &Rows, r: usize, c: usize, name: &str) -> Result<DMatrix<f64>, ModelError> {
    if r == 0 || c == 0 {
        return Ok(DMatrix::zeros(r, c));
    }
    from_rows(rows, name)
}

impl ModelFile {
    fn into_model(self) -> Result<TsFuzzyModel, ModelError> {
        if self.rules.len() != self.L {
            return Err(ModelError::Parse(format!(
                "L = {} but {} rules given",
                self.L,
                self.rules.len()
            )));
        }
        let nz = self.rules.first().map_or(0, |r| r.C1.len());
        let mut rules = Vec::with_capacity(self.L);
        for (i, r) in self.rules.iter().enumerate() {
            let tag = |b: &str| format!("{b}{}", i + 1);
            rules.push(VertexPlant {
                a: sized(&r.A, self.n_x, self.n_x, &tag("A"))?,
                b1: sized(&r.B1, self.n_x, self.n_inf, &tag("B1"))?,
                b2: sized(&r.B2, self.n_x, self.n_u, &tag("B2"))?,
                c1: sized(&r.C1, nz, self.n_x, &tag("C1"))?,
                d11: sized(&r.D11, nz, self.n_inf, &tag("D11"))?,
                d12: sized(&r.D12, nz, self.n_u, &tag("D12"))?,
            });
        }
        let model = TsFuzzyModel {
            rules,
            c2: sized(&self.C2, self.n_y, self.n_x, "C2")?,
            d21: sized(&self.D21, self.n_y, self.n_inf, "D21")?,
            membership: self.membership,
            domain: self.domain,
        };
        for b in &model.domain {
            if b.state >= self.n_x || !(b.min <= b.max) {
                return Err(ModelError::Parse(format!("bad premise bound {b:?}")));
            }
        }
        Ok(model)
    }

    fn from_model(m: &TsFuzzyModel) -> Self {
        ModelFile {
            n_x: m.nx(),
            n_u: m.nu(),
            n_y: m.ny(),
            n_inf: m.ninf(),
            L: m.rule_count(),
            rules: m
                .rules
                .iter()
                .map(|r| RuleFile {
                    A: to_rows(&r.a),
                    B1: to_rows(&r.b1),
                    B2: to_rows(&r.b2),
                    C1: to_rows(&r.c1),
                    D11: to_rows(&r.d11),
                    D12: to_rows(&r.d12),
                })
                .collect(),
            C2: to_rows(&m.c2),
            D21: to_rows(&m.d21),
            membership: m.membership.clone(),
            domain: m.domain.clone(),
        }
    }
}

/// Pendulum membership with slope 7 and centre π/4.
pub fn pendulum_membership() -> Membership {
    Membership::PendulumSigmoid {
        state: 0,
        slope: 7.0,
        center: PI / 4.0,
    }
}
