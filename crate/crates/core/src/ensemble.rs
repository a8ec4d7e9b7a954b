//! Phase-averaged pumping: ensembles over random initial phases, the
//! analytic power law, slope fits and the Fibonacci-ratio scan.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::{sample_initial_phases, DriveParams, Phase, TorusPoint};
use crate::error::{Error, Result};
use crate::evolution::{evolve_pump, IntegratorConfig, DEFAULT_DT};
use crate::geometry::{euler_class, DEFAULT_EULER_GRID};
use crate::tripod::{InitialStateSpec, TripodModel};

/// How initial phases are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseSampling {
    /// Uniform on the torus, drawn from the seeded generator.
    #[default]
    Random,
    /// Every trajectory starts at `phi0`.
    Fixed { phi0: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub delta: f64,
    pub m: f64,
    pub drive: DriveParams,
    pub init: InitialStateSpec,
    pub trajectories: usize,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    pub stride: usize,
    #[serde(default)]
    pub sampling: PhaseSampling,
}

impl EnsembleConfig {
    /// Two-tone drive at `omega = 0.4`, `p/q = 3/2`, `m = 0.5`, `Delta = 1`,
    /// `c = 1/sqrt2`, `dphi = pi/2`, 400 trajectories over `t in [0, 200]`.
    pub fn reference(seed: u64) -> Self {
        EnsembleConfig {
            delta: 1.0,
            m: 0.5,
            drive: DriveParams {
                omega: 0.4,
                p: 3,
                q: 2,
            },
            init: InitialStateSpec {
                c: FRAC_1_SQRT_2,
                delta_phi: FRAC_PI_2,
            },
            trajectories: 400,
            seed,
            t_end: 200.0,
            dt: DEFAULT_DT,
            stride: 10,
            sampling: PhaseSampling::Random,
        }
    }

    pub fn model(&self) -> TripodModel {
        TripodModel::two_tone(self.delta, self.m)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            stride: self.stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories < 2 {
            return Err(Error::validation(format!(
                "trajectories = {} (need at least 2)",
                self.trajectories
            )));
        }
        if !self.delta.is_finite() || !self.m.is_finite() {
            return Err(Error::validation("delta and m must be finite"));
        }
        self.init.validate()?;
        self.drive.protocol(TorusPoint::new([0.0, 0.0]))?;
        self.integrator().steps(self.t_end)?;
        Ok(())
    }

    pub fn initial_phases(&self) -> Result<Vec<Phase>> {
        match self.sampling {
            PhaseSampling::Random => sample_initial_phases(self.seed, self.trajectories),
            PhaseSampling::Fixed { phi0 } => Ok(vec![TorusPoint::new(phi0); self.trajectories]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    /// Phase-averaged `[E_1, E_2]`.
    pub mean_energy: Vec<[f64; 2]>,
    /// Population standard deviation of `E_2`.
    pub sigma_e2: Vec<f64>,
    /// Least-squares slope of the mean `E_2` over the whole run.
    pub fitted_slope: f64,
    /// Least-squares slope of `sigma_e2` over `[0.1 t_end, t_end]`.
    pub sigma_slope: f64,
    /// `chi_12` of the model.
    pub chi12: f64,
    /// Predicted `dE_2/dt`.
    pub analytic_slope: f64,
}

impl EnsembleStats {
    pub fn mean_series(&self, mu: usize) -> Vec<f64> {
        self.mean_energy.iter().map(|e| e[mu]).collect()
    }

    /// `|fitted - analytic| / |analytic|`
    pub fn relative_error(&self) -> f64 {
        (self.fitted_slope - self.analytic_slope).abs() / self.analytic_slope.abs()
    }
}

/// `omega_nu omega_mu c sqrt(1 - c^2) sin(dphi) chi_{nu mu} / pi`
pub fn analytic_power(c: f64, delta_phi: f64, chi: f64, omega_nu: f64, omega_mu: f64) -> f64 {
    omega_nu * omega_mu * c * (1.0 - c * c).max(0.0).sqrt() * delta_phi.sin() * chi / PI
}

/// Ordinary least-squares slope of the samples with `window.0 <= t <= window.1`.
pub fn fit_slope(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<f64> {
    if t.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: t.len(),
            right: y.len(),
        });
    }
    let points: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&x, _)| x >= window.0 && x <= window.1)
        .map(|(&x, &v)| (x, v))
        .collect();
    if points.len() < 2 {
        return Err(Error::validation(format!(
            "fit window [{}, {}] holds {} samples",
            window.0,
            window.1,
            points.len()
        )));
    }
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, v) in &points {
        sxy += (x - tm) * (v - ym);
        sxx += (x - tm) * (x - tm);
    }
    if sxx == 0.0 {
        return Err(Error::validation("fit window has no spread in t"));
    }
    Ok(sxy / sxx)
}

/// Sample times and `[E_1, E_2]` of one trajectory.
type Series = (Vec<f64>, Vec<[f64; 2]>);

/// Runs every trajectory of `cfg` and reduces them in index order, so the
/// result does not depend on how the work was scheduled.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    let model = cfg.model();
    let integrator = cfg.integrator();
    let phases = cfg.initial_phases()?;

    let runs: Vec<Result<Series>> = phases
        .par_iter()
        .enumerate()
        .map(|(index, phi0)| {
            let protocol = cfg.drive.protocol(*phi0)?;
            evolve_pump(&model, &protocol, &cfg.init, cfg.t_end, &integrator)
                .map(|tr| (tr.t, tr.energy))
                .map_err(|e| Error::Trajectory {
                    index,
                    phi0: *phi0.coords(),
                    source: Box::new(e),
                })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let t = runs[0].0.clone();
    let n = runs.len() as f64;
    let mut mean_energy = Vec::with_capacity(t.len());
    let mut sigma_e2 = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        let mut mean = [0.0; 2];
        for (_, e) in &runs {
            mean[0] += e[k][0];
            mean[1] += e[k][1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let var = runs.iter().map(|(_, e)| (e[k][1] - mean[1]).powi(2)).sum::<f64>() / n;
        mean_energy.push(mean);
        sigma_e2.push(var.sqrt());
    }

    let e2: Vec<f64> = mean_energy.iter().map(|e| e[1]).collect();
    let fitted_slope = fit_slope(&t, &e2, (0.0, cfg.t_end))?;
    let sigma_slope = fit_slope(&t, &sigma_e2, (0.1 * cfg.t_end, cfg.t_end))?;
    let chi12 = euler_class(&model, (0, 1), DEFAULT_EULER_GRID)?.chi;
    let [w1, w2] = cfg.drive.protocol(TorusPoint::new([0.0, 0.0]))?.frequencies();
    let analytic_slope = analytic_power(cfg.init.c, cfg.init.delta_phi, chi12, w1, w2);

    Ok(EnsembleStats {
        t,
        mean_energy,
        sigma_e2,
        fitted_slope,
        sigma_slope,
        chi12,
        analytic_slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSlope {
    pub p: u64,
    pub q: u64,
    pub ratio: f64,
    pub slope: f64,
}

/// `sigma_{E_2}` growth rate for each frequency ratio, all else equal.
pub fn sigma_slope_scan(base: &EnsembleConfig, ratios: &[(u64, u64)]) -> Result<Vec<SigmaSlope>> {
    if ratios.is_empty() {
        return Err(Error::validation("ratio list is empty"));
    }
    ratios
        .iter()
        .map(|&(p, q)| {
            let mut cfg = *base;
            cfg.drive.p = p;
            cfg.drive.q = q;
            let stats = run_ensemble(&cfg)?;
            Ok(SigmaSlope {
                p,
                q,
                ratio: p as f64 / q as f64,
                slope: stats.sigma_slope,
            })
        })
        .collect()
}
