//! The three benchmark systems with their reported targets.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use super::Disturbance;
use crate::fuzzy::{pendulum_membership, Membership, PremiseBound, TsFuzzyModel, VertexPlant};
use crate::synthesis::{PidPdcController, PidRuleGains};

/// Values reported for a benchmark, kept as regression fixtures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportedTargets {
    pub gamma_spectral: f64,
    pub gamma_fractional: f64,
    pub iterations_spectral: usize,
    pub iterations_fractional: usize,
    /// Gains reported with the better of the two algorithms.
    pub controller: PidPdcController,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Benchmark {
    pub name: String,
    #[serde(skip)]
    pub model: TsFuzzyModel,
    pub tau: f64,
    pub x0: Vec<f64>,
    pub disturbance: Disturbance,
    pub horizon: f64,
    pub dt: f64,
    pub reported: ReportedTargets,
}

fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

fn siso_controller(tau: f64, rows: &[(f64, f64, f64)]) -> PidPdcController {
    PidPdcController {
        tau,
        gains: rows
            .iter()
            .map(|&(i, d, p)| PidRuleGains::scalar(i, d, p))
            .collect(),
    }
}

pub fn benchmark_pendulum() -> Benchmark {
    let rule = |a21: f64, b2: f64| VertexPlant {
        a: m(2, 2, &[0.0, 1.0, a21, 0.0]),
        b1: m(2, 1, &[0.0, 0.1]),
        b2: m(2, 1, &[0.0, b2]),
        c1: m(1, 2, &[1.0, 1.0]),
        d11: m(1, 1, &[0.1]),
        d12: m(1, 1, &[0.0]),
    };
    let model = TsFuzzyModel {
        rules: vec![rule(17.2941, -0.1765), rule(12.6305, -0.0779)],
        c2: m(1, 2, &[3.0, 0.0]),
        d21: m(1, 1, &[0.0]),
        membership: pendulum_membership(),
        domain: vec![PremiseBound {
            state: 0,
            min: -PI / 3.0,
            max: PI / 3.0,
        }],
    };
    Benchmark {
        name: "pendulum".into(),
        model,
        tau: 6.0,
        x0: vec![PI / 4.0, -PI / 4.0],
        disturbance: Disturbance::sine(3.0, 5.0 * PI),
        horizon: 20.0,
        dt: 1e-3,
        reported: ReportedTargets {
            gamma_spectral: 0.12,
            gamma_fractional: 0.13,
            iterations_spectral: 4,
            iterations_fractional: 5,
            controller: siso_controller(
                6.0,
                &[(0.1449, 5.0864, 72.3777), (0.1028, 8.8573, 99.2379)],
            ),
        },
    }
}

/// Duffing oscillator with premise bound `d`; the forcing `10 cos t` enters
/// through the disturbance channel as `w = 100 cos t`.
pub fn benchmark_duffing(d: f64) -> Benchmark {
    let rule = |a21: f64| VertexPlant {
        a: m(2, 2, &[0.0, 1.0, a21, -0.2]),
        b1: m(2, 1, &[0.0, 0.1]),
        b2: m(2, 1, &[0.0, 1.0]),
        c1: m(1, 2, &[1.0, 1.0]),
        d11: m(1, 1, &[0.1]),
        d12: m(1, 1, &[0.0]),
    };
    let model = TsFuzzyModel {
        rules: vec![rule(0.0), rule(-d * d)],
        c2: m(1, 2, &[1.0, 0.0]),
        d21: m(1, 1, &[0.0]),
        membership: Membership::DuffingQuadratic { state: 0, d },
        domain: vec![PremiseBound {
            state: 0,
            min: -d,
            max: d,
        }],
    };
    Benchmark {
        name: "duffing".into(),
        model,
        tau: 2.0,
        x0: vec![0.1, 0.0],
        disturbance: Disturbance::Sine {
            amplitude: 100.0,
            angular_frequency: 1.0,
            phase: PI / 2.0,
        },
        horizon: 20.0,
        dt: 1e-3,
        reported: ReportedTargets {
            gamma_spectral: 1.1,
            gamma_fractional: 1.4,
            iterations_spectral: 10,
            iterations_fractional: 20,
            controller: siso_controller(
                2.0,
                &[(-1.4964, -0.7271, -96.8448), (-1.4984, -0.0094, 6.4360)],
            ),
        },
    }
}

const TORA_PHI: f64 = 0.1;
const TORA_C: f64 = 4.0;
const TORA_ALPHA: f64 = 0.99;

fn tora(kinematic_fix: bool) -> Benchmark {
    let phi = TORA_PHI;
    let c = TORA_C;
    // the coupling symbol in A_1 is bound to φ
    let eps = phi;
    let al = TORA_ALPHA;
    let k = 1.0 / (1.0 - phi * phi);
    let a1 = m(
        4,
        4,
        &[
            0.0,
            1.0,
            0.0,
            0.0,
            -1.0,
            0.0,
            eps * (al * PI).sin() / (al * PI),
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            -phi * k,
            0.0,
            0.0,
            0.0,
        ],
    );
    let mut a2 = m(
        4,
        4,
        &[
            0.0,
            1.0,
            0.0,
            0.0,
            -1.0,
            0.0,
            2.0 * phi / PI,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ],
    );
    if kinematic_fix {
        a2[(2, 3)] = 1.0;
    }
    let a3 = m(
        4,
        4,
        &[
            0.0,
            1.0,
            0.0,
            0.0,
            -1.0,
            0.0,
            phi,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            phi * k,
            0.0,
            -phi * phi * k,
            0.0,
        ],
    );
    let mut a4 = a3.clone();
    a4[(3, 2)] = -phi * phi * (1.0 - c * c) * k;
    let rule = |a: DMatrix<f64>, b: f64| VertexPlant {
        a,
        b1: DMatrix::zeros(4, 1),
        b2: m(4, 1, &[0.0, 0.0, 0.0, b]),
        c1: m(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        d11: DMatrix::zeros(2, 1),
        d12: DMatrix::zeros(2, 1),
    };
    let (a, b) = (0.8, 0.6);
    let model = TsFuzzyModel {
        rules: vec![rule(a1, k), rule(a2, 1.0), rule(a3, k), rule(a4, k)],
        c2: m(
            3,
            4,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        ),
        d21: DMatrix::zeros(3, 1),
        membership: Membership::ToraQuadruple {
            first: 0,
            second: 2,
            a,
            b,
        },
        domain: vec![
            PremiseBound {
                state: 0,
                min: -a,
                max: a,
            },
            PremiseBound {
                state: 2,
                min: -b,
                max: b,
            },
        ],
    };
    let row = |v: [f64; 3]| DMatrix::from_row_slice(1, 3, &v);
    let gains = [
        (
            [-0.3471, -1.0139, 0.6820],
            [0.8038, 2.0883, -1.2315],
            [-7.1101, -16.1981, 11.42817],
        ),
        (
            [-0.3450, -1.01858, 0.6830],
            [0.6084, 1.3740, -0.7847],
            [-5.5390, -11.9724, 8.5207],
        ),
        (
            [-0.4091, -1.1184, 0.7669],
            [0.5537, 1.4268, -0.7742],
            [-5.7119, -12.9499, 9.0553],
        ),
        (
            [-0.4337, -1.1552, 0.7969],
            [0.5048, 1.4486, -0.7513],
            [-5.7189, -12.9240, 9.0397],
        ),
    ];
    Benchmark {
        name: if kinematic_fix {
            "tora-kinematic"
        } else {
            "tora"
        }
        .into(),
        model,
        tau: 1.0,
        x0: vec![0.0, 0.0, 0.5, 0.0],
        disturbance: Disturbance::sine(10.0, PI),
        horizon: 100.0,
        dt: 1e-3,
        reported: ReportedTargets {
            gamma_spectral: 10.3,
            gamma_fractional: 9.9,
            iterations_spectral: 11,
            iterations_fractional: 4,
            controller: PidPdcController {
                tau: 1.0,
                gains: gains
                    .iter()
                    .map(|(i, d, p)| PidRuleGains {
                        r_i: row(*i),
                        r_d: row(*d),
                        r_p: row(*p),
                    })
                    .collect(),
            },
        },
    }
}

/// TORA exactly as listed.
pub fn benchmark_tora() -> Benchmark {
    tora(false)
}

/// TORA with the kinematic link θ' = θ̇ restored in rule 2, whose listed
/// third row is zero and leaves θ uncontrollable at that vertex.
pub fn benchmark_tora_kinematic() -> Benchmark {
    tora(true)
}

pub fn benchmark_by_name(name: &str) -> Option<Benchmark> {
    match name {
        "pendulum" => Some(benchmark_pendulum()),
        "duffing" => Some(benchmark_duffing(4.0)),
        "tora" => Some(benchmark_tora()),
        "tora-kinematic" => Some(benchmark_tora_kinematic()),
        _ => None,
    }
}

pub const BENCHMARK_NAMES: [&str; 4] = ["pendulum", "duffing", "tora", "tora-kinematic"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_entries() {
        let p = benchmark_pendulum();
        assert_eq!(p.model.rules[0].a[(1, 0)], 17.2941);
        assert_eq!(p.model.c2, m(1, 2, &[3.0, 0.0]));
        assert_eq!(p.model.rules[1].d11[(0, 0)], 0.1);
        let t = benchmark_tora();
        assert_eq!(t.model.ny(), 3);
        assert_eq!(t.reported.controller.gains[0].r_p.shape(), (1, 3));
        assert_eq!(t.reported.controller.gains[0].r_p[(0, 0)], -7.1101);
        assert_eq!(benchmark_duffing(4.0).model.rules[1].a[(1, 0)], -16.0);
        // c only enters rule 4
        let a4 = &t.model.rules[3].a;
        assert!((a4[(3, 2)] - 0.15 / 0.99).abs() < 1e-12);
    }
}
