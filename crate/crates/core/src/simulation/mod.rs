//! Closed-loop simulation of the fuzzy plant under the gain-scheduled PID
//! controller, disturbance signals and empirical H∞ estimation.

pub mod benchmarks;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::fmt_f64;
use crate::fuzzy::{blend, membership_eval, saturate_premises, TsFuzzyModel};
use crate::synthesis::{pid_realization, PidPdcController, SynthesisError};
use benchmarks::Benchmark;

/// State norm treated as blow-up.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Disturbance {
    Zero,
    /// `amplitude · sin(angular_frequency · t + phase)` on every channel.
    Sine {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear samples; `values[k]` holds one entry per channel.
    CustomTable {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl Disturbance {
    pub fn sine(amplitude: f64, angular_frequency: f64) -> Self {
        Disturbance::Sine {
            amplitude,
            angular_frequency,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64, channels: usize) -> DVector<f64> {
        match self {
            Disturbance::Zero => DVector::zeros(channels),
            Disturbance::Sine {
                amplitude,
                angular_frequency,
                phase,
            } => DVector::from_element(channels, amplitude * (angular_frequency * t + phase).sin()),
            Disturbance::CustomTable { times, values } => {
                let n = times.len();
                let pick = |k: usize| {
                    DVector::from_fn(channels, |c, _| values[k].get(c).copied().unwrap_or(0.0))
                };
                if n == 0 {
                    return DVector::zeros(channels);
                }
                if t <= times[0] {
                    return pick(0);
                }
                if t >= times[n - 1] {
                    return pick(n - 1);
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                pick(k) * (1.0 - s) + pick(k + 1) * s
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("state norm exceeded {DIVERGENCE_BOUND:e} at t = {time}")]
    Divergence { time: f64, partial: Box<Trajectory> },
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("disturbance energy is zero")]
    ZeroEnergy,
}

/// Uniformly sampled closed-loop signals; one row per sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xk: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    /// Number of right-hand-side evaluations whose weights were renormalized.
    pub clamped_evaluations: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn final_state_norm(&self) -> f64 {
        self.x
            .last()
            .map_or(0.0, |x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let width = |rows: &Vec<Vec<f64>>| rows.first().map_or(0, Vec::len);
        let mut header = vec!["time".to_string()];
        let groups: [(&str, &Vec<Vec<f64>>); 6] = [
            ("x", &self.x),
            ("xk", &self.xk),
            ("u", &self.u),
            ("w", &self.w),
            ("z", &self.z),
            ("alpha", &self.alpha),
        ];
        for (name, rows) in groups {
            header.extend((1..=width(rows)).map(|i| format!("{name}{i}")));
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![fmt_f64(self.time[k])];
            for (_, rows) in groups {
                rec.extend(rows[k].iter().map(|v| fmt_f64(*v)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    pub disturbance: Disturbance,
    pub dt: f64,
    pub horizon: f64,
}

struct Signals {
    dx: DVector<f64>,
    u: DVector<f64>,
    w: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
    alpha: Vec<f64>,
    clamped: bool,
}

struct ClosedLoop<'a> {
    model: &'a TsFuzzyModel,
    ks: Vec<DMatrix<f64>>,
    disturbance: &'a Disturbance,
    nx: usize,
    nu: usize,
}

impl ClosedLoop<'_> {
    /// Right-hand side and outputs at (t, s) with s = [x; x_K]; premises are
    /// saturated to their domain so the weights stay defined.
    fn eval(&self, t: f64, s: &DVector<f64>) -> Signals {
        let (nx, nu) = (self.nx, self.nu);
        let x = s.rows(0, nx).into_owned();
        let xk = s.rows(nx, 2 * nu).into_owned();
        let premise = saturate_premises(self.model, x.as_slice());
        let mv =
            membership_eval(self.model, &premise).expect("saturated premises lie in the domain");
        let alpha = mv.weights.0;
        let p = blend(self.model, &crate::fuzzy::SimplexWeights(alpha.clone()))
            .expect("rule count matches");
        let mut k = DMatrix::zeros(self.ks[0].nrows(), self.ks[0].ncols());
        for (a, ki) in alpha.iter().zip(&self.ks) {
            k += ki * *a;
        }
        let w = self.disturbance.eval(t, self.model.ninf());
        let y = &p.c2 * &x + &p.d21 * &w;
        let mut ky = DVector::zeros(2 * nu + y.len());
        ky.rows_mut(0, 2 * nu).copy_from(&xk);
        ky.rows_mut(2 * nu, y.len()).copy_from(&y);
        let ctrl = &k * ky;
        let dxk = ctrl.rows(0, 2 * nu).into_owned();
        let u = ctrl.rows(2 * nu, nu).into_owned();
        let dxp = &p.a * &x + &p.b1 * &w + &p.b2 * &u;
        let z = &p.c1 * &x + &p.d11 * &w + &p.d12 * &u;
        let mut dx = DVector::zeros(nx + 2 * nu);
        dx.rows_mut(0, nx).copy_from(&dxp);
        dx.rows_mut(nx, 2 * nu).copy_from(&dxk);
        Signals {
            dx,
            u,
            w,
            z,
            y,
            alpha,
            clamped: mv.clamped,
        }
    }
}

/// Fixed-step RK4 integration of plant and controller; the weights are
/// re-evaluated at every stage.
pub fn simulate(
    model: &TsFuzzyModel,
    controller: &PidPdcController,
    cfg: &SimConfig,
) -> Result<Trajectory, SimulationError> {
    let (nx, nu) = (model.nx(), model.nu());
    if controller.gains.len() != model.rule_count() {
        return Err(SimulationError::Invalid(format!(
            "controller has {} rules, model has {}",
            controller.gains.len(),
            model.rule_count()
        )));
    }
    if controller
        .gains
        .iter()
        .any(|g| g.nu() != nu || g.ny() != model.ny())
    {
        return Err(SimulationError::Invalid(
            "controller gain shape does not match the model".into(),
        ));
    }
    if cfg.x0.len() != nx {
        return Err(SimulationError::Invalid(format!(
            "x0 has {} entries, expected {nx}",
            cfg.x0.len()
        )));
    }
    if !(cfg.dt > 0.0) || !(cfg.horizon >= 0.0) {
        return Err(SimulationError::Invalid(
            "dt must be positive and horizon nonnegative".into(),
        ));
    }
    let ks = controller
        .gains
        .iter()
        .map(|g| pid_realization(g, controller.tau))
        .collect::<Result<Vec<_>, _>>()?;
    let sys = ClosedLoop {
        model,
        ks,
        disturbance: &cfg.disturbance,
        nx,
        nu,
    };
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut s = DVector::zeros(nx + 2 * nu);
    s.rows_mut(0, nx).copy_from_slice(&cfg.x0);
    let mut traj = Trajectory::default();
    let dt = cfg.dt;
    for n in 0..=steps {
        let t = n as f64 * dt;
        let sig = sys.eval(t, &s);
        traj.time.push(t);
        traj.x.push(s.rows(0, nx).iter().copied().collect());
        traj.xk.push(s.rows(nx, 2 * nu).iter().copied().collect());
        traj.u.push(sig.u.iter().copied().collect());
        traj.w.push(sig.w.iter().copied().collect());
        traj.z.push(sig.z.iter().copied().collect());
        traj.y.push(sig.y.iter().copied().collect());
        traj.alpha.push(sig.alpha.clone());
        traj.clamped_evaluations += sig.clamped as usize;
        if n == steps {
            break;
        }
        let k1 = sig.dx;
        let k2 = sys.eval(t + dt / 2.0, &(&s + &k1 * (dt / 2.0)));
        traj.clamped_evaluations += k2.clamped as usize;
        let k2 = k2.dx;
        let k3 = sys.eval(t + dt / 2.0, &(&s + &k2 * (dt / 2.0)));
        traj.clamped_evaluations += k3.clamped as usize;
        let k3 = k3.dx;
        let k4 = sys.eval(t + dt, &(&s + &k3 * dt));
        traj.clamped_evaluations += k4.clamped as usize;
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4.dx) * (dt / 6.0);
        let norm = s.norm();
        if !norm.is_finite() || norm > DIVERGENCE_BOUND {
            return Err(SimulationError::Divergence {
                time: t + dt,
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}

/// Simulates a benchmark from its initial state, with its disturbance or none.
pub fn simulate_benchmark(
    bench: &Benchmark,
    controller: &PidPdcController,
    disturbance_on: bool,
    dt: f64,
) -> Result<Trajectory, SimulationError> {
    simulate(
        &bench.model,
        controller,
        &SimConfig {
            x0: bench.x0.clone(),
            disturbance: if disturbance_on {
                bench.disturbance.clone()
            } else {
                Disturbance::Zero
            },
            dt,
            horizon: bench.horizon,
        },
    )
}

/// sup over sample horizons of sqrt(∫‖z‖² / ∫‖w‖²), trapezoidal quadrature.
/// Horizons with less than 1e-6 of the total disturbance energy are skipped.
pub fn empirical_hinf(traj: &Trajectory) -> Result<f64, SimulationError> {
    let sq = |rows: &Vec<Vec<f64>>| -> Vec<f64> {
        rows.iter().map(|r| r.iter().map(|v| v * v).sum()).collect()
    };
    let (zz, ww) = (sq(&traj.z), sq(&traj.w));
    let mut ez = vec![0.0; traj.len()];
    let mut ew = vec![0.0; traj.len()];
    for k in 1..traj.len() {
        let h = traj.time[k] - traj.time[k - 1];
        ez[k] = ez[k - 1] + 0.5 * h * (zz[k] + zz[k - 1]);
        ew[k] = ew[k - 1] + 0.5 * h * (ww[k] + ww[k - 1]);
    }
    let total = ew.last().copied().unwrap_or(0.0);
    if !(total > 1e-12) {
        return Err(SimulationError::ZeroEnergy);
    }
    let floor = 1e-6 * total;
    Ok(ez
        .iter()
        .zip(&ew)
        .filter(|(_, w)| **w > floor)
        .map(|(z, w)| (z / w).sqrt())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::benchmarks::*;
    use super::*;

    #[test]
    fn static_gain_estimate() {
        let n = 20001;
        let dt = 1e-3;
        let time: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let w: Vec<Vec<f64>> = time.iter().map(|t| vec![t.sin()]).collect();
        let z: Vec<Vec<f64>> = w.iter().map(|r| vec![0.1 * r[0]]).collect();
        let traj = Trajectory {
            time,
            w,
            z,
            ..Default::default()
        };
        assert!((empirical_hinf(&traj).unwrap() - 0.1).abs() < 1e-3);
        let quiet = Trajectory {
            w: vec![vec![0.0]; n],
            ..traj
        };
        assert!(matches!(
            empirical_hinf(&quiet),
            Err(SimulationError::ZeroEnergy)
        ));
    }

    #[test]
    fn equilibrium_stays_put() {
        for b in [
            benchmark_pendulum(),
            benchmark_duffing(4.0),
            benchmark_tora(),
        ] {
            let c = b.reported.controller.clone();
            let traj = simulate(
                &b.model,
                &c,
                &SimConfig {
                    x0: vec![0.0; b.model.nx()],
                    disturbance: Disturbance::Zero,
                    dt: 1e-2,
                    horizon: 1.0,
                },
            )
            .unwrap();
            assert!(traj
                .x
                .iter()
                .flatten()
                .chain(traj.u.iter().flatten())
                .all(|v| *v == 0.0));
        }
    }

    #[test]
    fn duffing_open_loop_is_bounded() {
        let b = benchmark_duffing(4.0);
        let c = PidPdcController::zeros(2.0, 2, 1, 1);
        let traj = simulate_benchmark(&b, &c, true, 1e-3).unwrap();
        assert!(traj.x.iter().all(|x| x[0].abs() <= 4.0));
        assert!(traj.final_state_norm() > 0.05);
    }

    #[test]
    fn simplex_and_output_consistency() {
        let b = benchmark_tora();
        let traj = simulate_benchmark(&b, &b.reported.controller, true, 1e-2).unwrap();
        for (k, a) in traj.alpha.iter().enumerate() {
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9 && a.iter().all(|v| *v >= 0.0));
            let y: Vec<f64> = (0..3)
                .map(|r| (0..4).map(|c| b.model.c2[(r, c)] * traj.x[k][c]).sum())
                .collect();
            assert_eq!(y, traj.y[k]);
        }
    }

    #[test]
    fn csv_header() {
        let b = benchmark_pendulum();
        let c = PidPdcController::zeros(6.0, 2, 1, 1);
        let traj = simulate(
            &b.model,
            &c,
            &SimConfig {
                x0: vec![0.0, 0.0],
                disturbance: Disturbance::Zero,
                dt: 0.1,
                horizon: 0.2,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,x1,x2,xk1,xk2,u1,w1,z1,alpha1,alpha2\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn divergence_is_reported() {
        let b = benchmark_pendulum();
        // open loop with the state leaving the premise domain
        let c = PidPdcController::zeros(6.0, 2, 1, 1);
        let err = simulate_benchmark(&b, &c, false, 1e-2).unwrap_err();
        match err {
            SimulationError::Divergence { partial, .. } => assert!(!partial.is_empty()),
            other => panic!("{other}"),
        }
    }
}
