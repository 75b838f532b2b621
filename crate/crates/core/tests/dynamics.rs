//! Properties that need the solver or the integrator: relaxation soundness,
//! descent of the feasibility measures, and closed-loop behaviour under a
//! certified controller.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tspid_core::algorithms::{
    alpha_grid, check_certificate, lyapunov_for_gains, run_feasibility, FrozenSolution, Settings,
    Variant,
};
use tspid_core::fuzzy::{Membership, PremiseBound, TsFuzzyModel, VertexPlant};
use tspid_core::refine::refine;
use tspid_core::sdp::FEAS_TOL;
use tspid_core::simulation::benchmarks::{benchmark_duffing, benchmark_pendulum};
use tspid_core::simulation::{simulate, Disturbance, SimConfig};
use tspid_core::synthesis::{
    augment, build_mij, exact_w, AugmentedPlant, PidPdcController, PidRuleGains,
};

fn pendulum_frozen() -> (AugmentedPlant, FrozenSolution) {
    let b = benchmark_pendulum();
    let plant = augment(&b.model);
    // stabilizing at each vertex with a common Lyapunov matrix
    let c = PidPdcController {
        tau: b.tau,
        gains: vec![
            PidRuleGains::scalar(5.0, -680.0, 240.0),
            PidRuleGains::scalar(11.0, -1541.0, 525.0),
        ],
    };
    let f = lyapunov_for_gains(&plant, &c, None, &Settings::new(b.tau))
        .unwrap()
        .expect("frozen LMI feasible");
    (plant, f)
}

fn random_simplex(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    // normalized exponentials are uniform on the simplex
    let e: Vec<f64> = (0..l).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().max()
}

fn blended(m: &[Vec<DMatrix<f64>>], a: &[f64]) -> DMatrix<f64> {
    let n = m[0][0].nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in m.iter().enumerate() {
        for (j, mij) in row.iter().enumerate() {
            out += mij * (a[i] * a[j]);
        }
    }
    out
}

#[test]
fn relaxation_conditions_imply_the_blended_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let l = rng.gen_range(2..=4);
        let n = rng.gen_range(1..=5);
        let mut m: Vec<Vec<DMatrix<f64>>> = (0..l)
            .map(|_| {
                (0..l)
                    .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        for row in m.iter_mut() {
            for b in row.iter_mut() {
                *b = (&*b + b.transpose()) * 0.5;
            }
        }
        // shift every block by the same multiple of I until the vertex and
        // cross conditions hold
        let worst = (0..l)
            .flat_map(|i| (0..l).map(move |j| (i, j)))
            .map(|(i, j)| {
                if i == j {
                    max_eig(&m[i][i])
                } else {
                    let c = &m[i][i] / (l as f64 - 1.0) + (&m[i][j] + &m[j][i]) * 0.5;
                    max_eig(&c) / (1.0 / (l as f64 - 1.0) + 1.0)
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let shift = worst + 1e-3;
        for row in m.iter_mut() {
            for b in row.iter_mut() {
                *b -= DMatrix::identity(n, n) * shift;
            }
        }
        for i in 0..l {
            assert!(max_eig(&m[i][i]) < 0.0);
        }
        for _ in 0..500 {
            let a = random_simplex(&mut rng, l);
            assert!(max_eig(&blended(&m, &a)) < 0.0);
        }
    }
}

#[test]
fn frozen_certificate_holds_off_grid() {
    let (plant, f) = pendulum_frozen();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m: Vec<Vec<DMatrix<f64>>> = (0..2)
        .map(|i| {
            (0..2)
                .map(|j| {
                    let g = &f.controller.gains[j];
                    let w = exact_w(&plant, g, f.controller.tau, &f.x).unwrap();
                    build_mij(&plant, i, &f.x, g, f.controller.tau, &w, f.gamma).unwrap()
                })
                .collect()
        })
        .collect();
    for _ in 0..500 {
        let a = random_simplex(&mut rng, 2);
        assert!(max_eig(&blended(&m, &a)) < 0.0);
    }
}

fn pendulum_run(controller: &PidPdcController, dt: f64) -> Vec<Vec<f64>> {
    let b = benchmark_pendulum();
    let cfg = SimConfig {
        x0: b.x0.clone(),
        disturbance: Disturbance::Zero,
        dt,
        horizon: 2.0,
    };
    let t = simulate(&b.model, controller, &cfg).unwrap();
    t.x.iter()
        .zip(&t.xk)
        .map(|(x, k)| x.iter().chain(k).copied().collect())
        .collect()
}

#[test]
fn halving_the_step_barely_moves_the_trajectory() {
    let (_, f) = pendulum_frozen();
    let coarse = pendulum_run(&f.controller, 1e-3);
    let fine = pendulum_run(&f.controller, 5e-4);
    let sup = coarse
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.iter()
                .zip(&fine[2 * k])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    assert!(sup <= 1e-4, "sup-norm gap {sup}");
}

#[test]
fn certified_energy_does_not_grow() {
    let (_, f) = pendulum_frozen();
    let p = f.x.clone().try_inverse().unwrap();
    let states = pendulum_run(&f.controller, 1e-3);
    let v: Vec<f64> = states
        .iter()
        .map(|s| {
            let x = DVector::from_column_slice(s);
            (x.transpose() * &p * &x)[(0, 0)]
        })
        .collect();
    for w in v.windows(2) {
        assert!(w[1] <= w[0] + 1e-6 * w[0].max(1.0), "{} -> {}", w[0], w[1]);
    }
    assert!(v.last().unwrap() < &v[0]);
}

fn assert_descent(measures: &[f64], label: &str) {
    for (k, w) in measures.windows(2).enumerate() {
        assert!(
            w[1] <= w[0] + FEAS_TOL,
            "{label}: measure rose at {k}: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn measures_descend_on_benchmarks() {
    let cases = [(benchmark_pendulum(), 0.3), (benchmark_duffing(4.0), 1.4)];
    let mut ran = 0;
    for (b, gamma) in cases {
        let plant = augment(&b.model);
        let s = Settings::new(b.tau);
        for v in [Variant::Spectral, Variant::Fractional] {
            for g in [None, Some(gamma)] {
                if let Ok(r) = run_feasibility(&plant, &b.model.c2, g, v, &s, &s.solver) {
                    let m: Vec<f64> = r.trace.records.iter().map(|t| t.measure).collect();
                    assert_descent(&m, &format!("{} {v} {g:?}", b.name));
                    ran += 1;
                }
            }
        }
    }
    assert!(ran >= 6, "only {ran} runs completed");
}

fn synthetic(rng: &mut ChaCha8Rng) -> TsFuzzyModel {
    let rule = |rng: &mut ChaCha8Rng| {
        let mut a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        // keep the vertices Hurwitz so a feasible point exists
        let shift = a
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
            + 0.5;
        if shift > 0.0 {
            a -= DMatrix::identity(2, 2) * shift;
        }
        VertexPlant {
            a,
            b1: DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-0.5..0.5)),
            b2: DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0)),
            c1: DMatrix::from_fn(1, 2, |_, _| rng.gen_range(-1.0..1.0)),
            d11: DMatrix::zeros(1, 1),
            d12: DMatrix::zeros(1, 1),
        }
    };
    TsFuzzyModel {
        rules: vec![rule(rng), rule(rng)],
        c2: DMatrix::from_fn(1, 2, |_, _| rng.gen_range(-1.0..1.0)),
        d21: DMatrix::zeros(1, 1),
        membership: Membership::PiecewiseTable {
            state: 0,
            breakpoints: vec![-1.0, 1.0],
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        domain: vec![PremiseBound {
            state: 0,
            min: -1.0,
            max: 1.0,
        }],
    }
}

#[test]
fn measures_descend_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = Settings::new(1.0);
    let mut ran = 0;
    for n in 0..20 {
        let model = synthetic(&mut rng);
        let plant = augment(&model);
        let v = if n % 2 == 0 {
            Variant::Spectral
        } else {
            Variant::Fractional
        };
        if let Ok(r) = run_feasibility(&plant, &model.c2, Some(10.0), v, &s, &s.solver) {
            let m: Vec<f64> = r.trace.records.iter().map(|t| t.measure).collect();
            assert_descent(&m, &format!("instance {n} {v}"));
            ran += 1;
        }
    }
    assert!(ran >= 15, "only {ran} runs completed");
}

#[test]
fn refinement_lowers_gamma_and_stays_certified() {
    let (plant, f) = pendulum_frozen();
    let s = Settings::new(f.controller.tau);
    let r = refine(&plant, &f.x, &f.controller, &s)
        .unwrap()
        .expect("refinement certifies");
    assert!(r.gamma < f.gamma);
    let grid = alpha_grid(2);
    let c = check_certificate(&plant, &r.x, &r.controller, Some(r.gamma), &grid, s.delta).unwrap();
    assert!(c.pass);
}
