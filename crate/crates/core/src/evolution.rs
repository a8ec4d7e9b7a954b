//! Transitionless evolution under `H_0 + A_t` with per-drive energy
//! accounting, plus the curvature-only energy oracle.
//!
//! The state is integrated in the full 4-level space by classical RK4 on a
//! fixed grid `t_k = k dt`. The pumped energies
//! `E_mu(t) = int phidot^mu <psi| d_mu A_t |psi>` and the `H_0` channel
//! `E'_mu(t) = int phidot^mu <psi| d_mu H_0 |psi>` are accumulated on the
//! same grid: composite Simpson up to the last even node, plus a
//! third-order closing panel on odd nodes.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use num_complex::Complex64;

use crate::drive::{Phase, Trajectory, TrajectoryPoint};
use crate::error::{Error, Result};
use crate::geometry::euler_form;
use crate::operator::StateVector;
use crate::tripod::{InitialStateSpec, OmegaJet, TripodModel, EXCITED};

pub const DEFAULT_DT: f64 = 0.01;

/// Upper bound on `dt * max(|Delta|, |Omega|, |A_t|)`.
pub const STABILITY_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Record every `stride`-th step (the last step is always recorded).
    pub stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: DEFAULT_DT,
            stride: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, stride: usize) -> Result<Self> {
        let cfg = IntegratorConfig { dt, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation(format!("dt = {} must be positive", self.dt)));
        }
        if self.stride == 0 {
            return Err(Error::validation("stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`; `t_end` must be a multiple of `dt`.
    pub fn steps(&self, t_end: f64) -> Result<usize> {
        self.validate()?;
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::validation(format!("t_end = {t_end} must be nonnegative")));
        }
        let n = (t_end / self.dt).round();
        if (n * self.dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
            return Err(Error::validation(format!(
                "t_end = {t_end} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Sampled output of one transitionless run.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpTrace {
    pub t: Vec<f64>,
    pub psi: Vec<StateVector>,
    /// `[E_1, E_2]`
    pub energy: Vec<[f64; 2]>,
    /// `[E'_1, E'_2]`
    pub energy_h0: Vec<[f64; 2]>,
    pub transitionless_err: Vec<f64>,
    pub norm_err: Vec<f64>,
    /// Maxima over every integrator step, not only the recorded ones.
    pub max_transitionless_err: f64,
    pub max_norm_err: f64,
}

impl PumpTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn energy_series(&self, mu: usize) -> Vec<f64> {
        self.energy.iter().map(|e| e[mu]).collect()
    }
}

type C = Complex64;

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

/// Everything the integrator needs at one time.
struct Sample {
    point: TrajectoryPoint<2>,
    jet: OmegaJet,
    kgp: Matrix3<f64>,
}

impl Sample {
    fn at<T: Trajectory + ?Sized>(model: &TripodModel, traj: &T, t: f64) -> Result<Self> {
        let point = traj.eval(t);
        let jet = model.omega_jet(&point.phi);
        jet.require_gap()?;
        let kgp = model.kgp_coefficients(&jet, &point.velocity);
        Ok(Sample { point, jet, kgp })
    }

    /// `H_0 + A_t`
    fn hamiltonian(&self, delta: f64) -> Matrix4<C> {
        let mut h = Matrix4::zeros();
        for j in 0..3 {
            for k in 0..3 {
                h[(j, k)] = C::new(0.0, self.kgp[(j, k)]);
            }
            h[(j, EXCITED)] = c(self.jet.omega[j]);
            h[(EXCITED, j)] = c(self.jet.omega[j]);
        }
        h[(EXCITED, EXCITED)] = c(delta);
        h
    }

    fn stability_scale(&self, delta: f64) -> f64 {
        // spectral norm of a real antisymmetric 3x3 is the length of its axial vector
        let a = (self.kgp.norm_squared() / 2.0).sqrt();
        delta.abs().max(self.jet.norm).max(a)
    }

    fn powers(&self, model: &TripodModel, psi: &Vector4<C>) -> ([f64; 2], [f64; 2]) {
        let v = self.point.velocity;
        let mut p = [0.0; 2];
        let mut p0 = [0.0; 2];
        for mu in 0..2 {
            if v[mu] == 0.0 {
                continue;
            }
            let d = model.kgp_coefficient_derivative(&self.jet, &v, mu);
            p[mu] = v[mu] * imag_antisym_expectation(&d, psi);
            p0[mu] = v[mu] * coupling_expectation(&self.jet.grad[mu], psi);
        }
        (p, p0)
    }
}

/// `<psi| i D |psi>` for real antisymmetric `D` on the ground block.
fn imag_antisym_expectation(d: &Matrix3<f64>, psi: &Vector4<C>) -> f64 {
    let mut s = 0.0;
    for j in 0..3 {
        for k in (j + 1)..3 {
            // i D_jk (psi_j^* psi_k - psi_k^* psi_j) = -2 D_jk Im(psi_j^* psi_k)
            s -= 2.0 * d[(j, k)] * (psi[j].conj() * psi[k]).im;
        }
    }
    s
}

/// `<psi| V |psi>` where `V` couples `e` to `g_j` with real amplitudes `w_j`.
fn coupling_expectation(w: &Vector3<f64>, psi: &Vector4<C>) -> f64 {
    let mut s = C::new(0.0, 0.0);
    for j in 0..3 {
        s += psi[j].conj() * psi[EXCITED] * w[j];
    }
    2.0 * s.re
}

fn dark_leak(g: &Vector3<f64>, psi: &Vector4<C>) -> f64 {
    let overlap: C = (0..3).map(|j| psi[j] * g[j]).sum();
    (overlap.norm_sqr() + psi[EXCITED].norm_sqr()).sqrt()
}

fn to_vector4(psi: &StateVector) -> Result<Vector4<C>> {
    if psi.dim() != 4 {
        return Err(Error::DimensionMismatch {
            left: psi.dim(),
            right: 4,
        });
    }
    Ok(Vector4::from_column_slice(psi.amplitudes()))
}

fn to_state(psi: &Vector4<C>) -> StateVector {
    StateVector::new(psi.iter().copied().collect())
}

/// Running Simpson-consistent integral of a power sampled on a uniform grid.
#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    /// Integral up to the last even node.
    even: f64,
    prev2: f64,
    prev1: f64,
}

impl Accumulator {
    fn new(p0: f64) -> Self {
        Accumulator {
            even: 0.0,
            prev2: 0.0,
            prev1: p0,
        }
    }

    /// Adds node `k` with power `p`; returns the integral up to `t_k`.
    fn push(&mut self, k: usize, p: f64, dt: f64) -> f64 {
        let value = if k % 2 == 0 {
            self.even += dt / 3.0 * (self.prev2 + 4.0 * self.prev1 + p);
            self.even
        } else if k == 1 {
            self.even + 0.5 * dt * (self.prev1 + p)
        } else {
            self.even + dt / 12.0 * (-self.prev2 + 8.0 * self.prev1 + 5.0 * p)
        };
        self.prev2 = self.prev1;
        self.prev1 = p;
        value
    }
}

/// Integrates `i dpsi/dt = (H_0 + A_t) psi` from the state prepared by
/// `init` at the trajectory start.
pub fn evolve_pump<T: Trajectory + ?Sized>(
    model: &TripodModel,
    trajectory: &T,
    init: &InitialStateSpec,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<PumpTrace> {
    let steps = cfg.steps(t_end)?;
    let psi0 = init.prepare(model, &trajectory.start())?;
    evolve_state(model, trajectory, &psi0, steps, cfg)
}

/// Like [`evolve_pump`] but from an arbitrary 4-level state, for `steps` steps.
pub fn evolve_state<T: Trajectory + ?Sized>(
    model: &TripodModel,
    trajectory: &T,
    psi0: &StateVector,
    steps: usize,
    cfg: &IntegratorConfig,
) -> Result<PumpTrace> {
    cfg.validate()?;
    let dt = cfg.dt;
    let delta = model.delta;
    let minus_i = C::new(0.0, -1.0);

    let mut psi = to_vector4(psi0)?;
    let here = Sample::at(model, trajectory, 0.0)?;
    let check = |s: &Sample| -> Result<()> {
        let product = dt * s.stability_scale(delta);
        if product < STABILITY_LIMIT {
            Ok(())
        } else {
            Err(Error::Stability {
                product,
                limit: STABILITY_LIMIT,
            })
        }
    };
    check(&here)?;

    let capacity = steps / cfg.stride + 2;
    let mut trace = PumpTrace {
        t: Vec::with_capacity(capacity),
        psi: Vec::with_capacity(capacity),
        energy: Vec::with_capacity(capacity),
        energy_h0: Vec::with_capacity(capacity),
        transitionless_err: Vec::with_capacity(capacity),
        norm_err: Vec::with_capacity(capacity),
        max_transitionless_err: 0.0,
        max_norm_err: 0.0,
    };
    let record = |trace: &mut PumpTrace, t: f64, psi: &Vector4<C>, g: &Vector3<f64>, e: [f64; 2], e0: [f64; 2], keep: bool| {
        let leak = dark_leak(g, psi);
        let norm_err = (psi.norm() - 1.0).abs();
        trace.max_transitionless_err = trace.max_transitionless_err.max(leak);
        trace.max_norm_err = trace.max_norm_err.max(norm_err);
        if keep {
            trace.t.push(t);
            trace.psi.push(to_state(psi));
            trace.energy.push(e);
            trace.energy_h0.push(e0);
            trace.transitionless_err.push(leak);
            trace.norm_err.push(norm_err);
        }
    };

    let (p, p0) = here.powers(model, &psi);
    let mut acc = [Accumulator::new(p[0]), Accumulator::new(p[1])];
    let mut acc0 = [Accumulator::new(p0[0]), Accumulator::new(p0[1])];
    record(&mut trace, 0.0, &psi, &here.jet.bright(), [0.0; 2], [0.0; 2], true);

    let mut h_here = here.hamiltonian(delta);
    for k in 1..=steps {
        let t0 = (k - 1) as f64 * dt;
        let mid = Sample::at(model, trajectory, t0 + 0.5 * dt)?;
        let next = Sample::at(model, trajectory, k as f64 * dt)?;
        check(&mid)?;
        check(&next)?;
        let h_mid = mid.hamiltonian(delta);
        let h_next = next.hamiltonian(delta);

        let k1 = h_here * psi * minus_i;
        let k2 = h_mid * (psi + k1 * c(0.5 * dt)) * minus_i;
        let k3 = h_mid * (psi + k2 * c(0.5 * dt)) * minus_i;
        let k4 = h_next * (psi + k3 * c(dt)) * minus_i;
        psi += (k1 + (k2 + k3) * c(2.0) + k4) * c(dt / 6.0);

        let (p, p0) = next.powers(model, &psi);
        let e = [acc[0].push(k, p[0], dt), acc[1].push(k, p[1], dt)];
        let e0 = [acc0[0].push(k, p0[0], dt), acc0[1].push(k, p0[1], dt)];
        let keep = k % cfg.stride == 0 || k == steps;
        record(&mut trace, k as f64 * dt, &psi, &next.jet.bright(), e, e0, keep);

        h_here = h_next;
    }
    Ok(trace)
}

/// `phidot^mu <psi| d_mu A_t |psi>` with `d_mu A_t` at fixed velocity.
pub fn pump_power_kgp(
    psi: &StateVector,
    model: &TripodModel,
    phi: &Phase,
    velocity: &[f64; 2],
    mu: usize,
) -> Result<f64> {
    let psi = to_vector4(psi)?;
    let jet = model.omega_jet(phi);
    jet.require_gap()?;
    let d = model.kgp_coefficient_derivative(&jet, velocity, mu);
    Ok(velocity[mu] * imag_antisym_expectation(&d, &psi))
}

/// `phidot^mu <psi| d_mu H_0 |psi>`.
pub fn pump_power_h0(
    psi: &StateVector,
    model: &TripodModel,
    phi: &Phase,
    velocity: &[f64; 2],
    mu: usize,
) -> Result<f64> {
    let psi = to_vector4(psi)?;
    let jet = model.omega_jet(phi);
    Ok(velocity[mu] * coupling_expectation(&jet.grad[mu], &psi))
}

/// `|(1 - Pi_dark(phi)) psi|`
pub fn transitionless_error(psi: &StateVector, model: &TripodModel, phi: &Phase) -> Result<f64> {
    let psi = to_vector4(psi)?;
    let jet = model.omega_jet(phi);
    jet.require_gap()?;
    Ok(dark_leak(&jet.bright(), &psi))
}

/// Energies predicted from the Euler form alone.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSeries {
    pub t: Vec<f64>,
    /// `[E_1, E_2]`
    pub energy: Vec<[f64; 2]>,
}

impl CurvatureSeries {
    pub fn energy_series(&self, mu: usize) -> Vec<f64> {
        self.energy.iter().map(|e| e[mu]).collect()
    }
}

/// `E_mu(t) = -2 Im(c_1^* c_2) sum_{nu != mu} int phidot^nu phidot^mu Eu_{nu mu}`,
/// by per-interval Simpson quadrature on `steps` uniform intervals.
pub fn curvature_pump_reference<T: Trajectory + ?Sized>(
    model: &TripodModel,
    trajectory: &T,
    init: &InitialStateSpec,
    t_end: f64,
    steps: usize,
) -> Result<CurvatureSeries> {
    init.validate()?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::validation(format!("t_end = {t_end} must be nonnegative")));
    }
    let pre = init.coherence();
    if t_end == 0.0 {
        // still insist on a gapped start
        model.omega_jet(&trajectory.start()).require_gap()?;
        return Ok(CurvatureSeries {
            t: vec![0.0],
            energy: vec![[0.0; 2]],
        });
    }
    if steps == 0 {
        return Err(Error::validation("curvature_pump_reference needs at least one step"));
    }
    let h = t_end / steps as f64;
    let integrand = |t: f64| -> Result<[f64; 2]> {
        let pt = trajectory.eval(t);
        let [v1, v2] = pt.velocity;
        let eu21 = euler_form(model, &pt.phi, 1, 0)?;
        // Eu_{12} = -Eu_{21}
        let w = pre * v1 * v2;
        Ok([w * eu21, -w * eu21])
    };
    let mut t = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps + 1);
    t.push(0.0);
    energy.push([0.0; 2]);
    let mut left = integrand(0.0)?;
    let mut total = [0.0; 2];
    for k in 1..=steps {
        let t0 = (k - 1) as f64 * h;
        let mid = integrand(t0 + 0.5 * h)?;
        let right = integrand(k as f64 * h)?;
        for mu in 0..2 {
            total[mu] += h / 6.0 * (left[mu] + 4.0 * mid[mu] + right[mu]);
        }
        t.push(k as f64 * h);
        energy.push(total);
        left = right;
    }
    Ok(CurvatureSeries { t, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{DriveProtocol, LinearPath, TorusPoint};
    use crate::geometry::wilson_line;
    use crate::operator::ComplexOperator;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

    fn fig2_model() -> TripodModel {
        TripodModel::two_tone(1.0, 0.5)
    }

    fn fig2_drive(phi0: [f64; 2]) -> DriveProtocol {
        DriveProtocol::new(TorusPoint::new(phi0), 0.4, 3, 2).unwrap()
    }

    fn init(c: f64, dphi: f64) -> InitialStateSpec {
        InitialStateSpec::new(c, dphi).unwrap()
    }

    #[test]
    fn accumulator_is_exact_for_cubics() {
        let dt = 0.1;
        let f = |t: f64| 1.0 + 2.0 * t - 3.0 * t * t + t * t * t;
        let big_f = |t: f64| t + t * t - t * t * t + 0.25 * t.powi(4);
        let mut acc = Accumulator::new(f(0.0));
        for k in 1..=9 {
            let t = k as f64 * dt;
            let v = acc.push(k, f(t), dt);
            let tol = if k == 1 { 1e-3 } else { 1e-4 };
            if k % 2 == 0 {
                assert!((v - big_f(t)).abs() < 1e-14, "k={k}");
            } else {
                assert!((v - big_f(t)).abs() < tol, "k={k}");
            }
        }
    }

    #[test]
    fn step_count_validation() {
        let cfg = IntegratorConfig::default();
        assert_eq!(cfg.steps(200.0).unwrap(), 20_000);
        assert_eq!(cfg.steps(0.0).unwrap(), 0);
        assert!(cfg.steps(0.005).is_err());
        assert!(IntegratorConfig::new(0.0, 1).is_err());
        assert!(IntegratorConfig::new(0.01, 0).is_err());
    }

    #[test]
    fn zero_duration_run() {
        let md = fig2_model();
        let tr = evolve_pump(&md, &fig2_drive([0.3, 1.0]), &init(FRAC_1_SQRT_2, FRAC_PI_2), 0.0, &IntegratorConfig::default())
            .unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.energy[0], [0.0; 2]);
        assert_eq!(tr.energy_h0[0], [0.0; 2]);
        assert!(tr.transitionless_err[0] < 1e-15 && tr.norm_err[0] < 1e-15);
    }

    #[test]
    fn fig2_single_trajectory_invariants() {
        let md = fig2_model();
        let drive = fig2_drive([0.3, 1.0]);
        let spec = init(FRAC_1_SQRT_2, FRAC_PI_2);
        let cfg = IntegratorConfig::new(0.01, 10).unwrap();
        let tr = evolve_pump(&md, &drive, &spec, 200.0, &cfg).unwrap();
        assert_eq!(tr.len(), 2001);
        assert!(tr.max_transitionless_err < 1e-5, "{}", tr.max_transitionless_err);
        assert!(tr.max_norm_err < 1e-8, "{}", tr.max_norm_err);
        let max_e2 = tr.energy.iter().fold(0.0f64, |a, e| a.max(e[1].abs()));
        assert!(max_e2 > 1.0);
        for (e, e0) in tr.energy.iter().zip(&tr.energy_h0) {
            assert!((e[0] + e[1]).abs() < 1e-6);
            assert!(e0[0].abs() < 1e-6 && e0[1].abs() < 1e-6);
        }

        let geo = curvature_pump_reference(&md, &drive, &spec, 200.0, 20_000).unwrap();
        let worst = tr
            .t
            .iter()
            .zip(&tr.energy)
            .map(|(&t, e)| {
                let k = (t / 0.01).round() as usize;
                (geo.energy[k][1] - e[1]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-4 * max_e2, "worst {worst} vs scale {max_e2}");
    }

    #[test]
    fn transitionless_error_converges_at_fourth_order() {
        let md = fig2_model();
        let drive = fig2_drive([0.3, 1.0]);
        let spec = init(FRAC_1_SQRT_2, FRAC_PI_2);
        let run = |dt| {
            evolve_pump(&md, &drive, &spec, 50.0, &IntegratorConfig::new(dt, 1000).unwrap())
                .unwrap()
                .max_transitionless_err
        };
        let ratio = run(0.02) / run(0.01);
        assert!(ratio > 8.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn pure_u1_pumps_nothing_and_sign_flips() {
        let md = fig2_model();
        let drive = fig2_drive([2.0, 5.0]);
        let cfg = IntegratorConfig::default();
        let tr = evolve_pump(&md, &drive, &init(1.0, FRAC_PI_2), 40.0, &cfg).unwrap();
        assert!(tr.energy.iter().all(|e| e[1].abs() < 1e-6));

        let plus = evolve_pump(&md, &drive, &init(FRAC_1_SQRT_2, FRAC_PI_3), 40.0, &cfg).unwrap();
        let minus = evolve_pump(&md, &drive, &init(FRAC_1_SQRT_2, -FRAC_PI_3), 40.0, &cfg).unwrap();
        for (a, b) in plus.energy.iter().zip(&minus.energy) {
            assert!((a[1] + b[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_scales_with_sin_dphi() {
        let md = fig2_model();
        let drive = fig2_drive([4.0, 0.5]);
        let cfg = IntegratorConfig::default();
        let series = |d: f64| {
            let tr = evolve_pump(&md, &drive, &init(0.6, d), 60.0, &cfg).unwrap();
            tr.energy_series(1).iter().map(|e| e / d.sin()).collect::<Vec<_>>()
        };
        let base = series(FRAC_PI_2);
        let scale = base.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        for d in [FRAC_PI_6, FRAC_PI_3] {
            let other = series(d);
            let worst = base.iter().zip(&other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-3 * scale, "dphi {d}: {worst}");
        }
    }

    #[test]
    fn state_follows_wilson_line() {
        let md = fig2_model();
        let drive = fig2_drive([0.3, 1.0]);
        let spec = init(0.8, 1.0);
        let tr = evolve_pump(&md, &drive, &spec, 20.0, &IntegratorConfig::new(0.01, 2000).unwrap()).unwrap();
        let w = wilson_line(&md, &drive, 0.0, 20.0, 200_000).unwrap();
        let psi0 = &tr.psi[0];
        let ground0 = StateVector::new(psi0.amplitudes()[..3].to_vec());
        let transported = w.unitary.apply(&ground0).unwrap();
        let last = tr.psi.last().unwrap();
        let ground = StateVector::new(last.amplitudes()[..3].to_vec());
        let deficit = 1.0 - transported.inner(&ground).unwrap().norm();
        assert!(deficit.abs() < 1e-6, "deficit {deficit}");
    }

    #[test]
    fn h0_power_examples() {
        let md = fig2_model();
        let phi = TorusPoint::new([0.8, 2.1]);
        let v = [0.4, 0.6];
        let frame = md.dark_frame(&phi).unwrap();
        let dark = frame.state(0);
        for mu in 0..2 {
            assert!(pump_power_h0(&dark, &md, &phi, &v, mu).unwrap().abs() < 1e-10);
            assert_eq!(pump_power_h0(&dark, &md, &phi, &[0.0, 0.0], mu).unwrap(), 0.0);
        }

        // lower bright-band eigenstate: ~ Omega g~ + eps_- e
        let jet = md.omega_jet(&phi);
        let (eps, _) = md.bright_energies(&phi);
        let g = jet.bright();
        let mut amps: Vec<C> = (0..3).map(|j| c(jet.norm * g[j])).collect();
        amps.push(c(eps));
        let psi = StateVector::new(amps).normalized().unwrap();
        let h = md.hamiltonian(&phi);
        let residual = &h.apply(&psi).unwrap();
        for j in 0..4 {
            assert!((residual.amplitudes()[j] - psi.amplitudes()[j] * eps).norm() < 1e-12);
        }
        let root = (md.delta * md.delta + 4.0 * jet.norm * jet.norm).sqrt();
        for mu in 0..2 {
            let d_norm = g.dot(&jet.grad[mu]);
            let d_eps = -2.0 * jet.norm * d_norm / root;
            let p = pump_power_h0(&psi, &md, &phi, &v, mu).unwrap();
            assert!((p - v[mu] * d_eps).abs() < 1e-8, "{p} vs {}", v[mu] * d_eps);
        }
    }

    #[test]
    fn kgp_power_matches_operator_expectation() {
        let md = fig2_model();
        let phi = TorusPoint::new([1.3, 5.1]);
        let v = [0.4, 0.6];
        let psi = StateVector::new(vec![C::new(0.3, 0.1), C::new(-0.2, 0.5), C::new(0.6, -0.1), C::new(0.1, 0.2)])
            .normalized()
            .unwrap();
        for mu in 0..2 {
            let op: ComplexOperator = md.kgp_derivative(&phi, &v, mu).unwrap();
            let expect = v[mu] * op.expectation(&psi).unwrap().re;
            let got = pump_power_kgp(&psi, &md, &phi, &v, mu).unwrap();
            assert!((got - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn transitionless_error_examples() {
        let md = fig2_model();
        let phi = TorusPoint::new([0.8, 2.1]);
        let u1 = md.dark_frame(&phi).unwrap().state(0);
        assert!(transitionless_error(&u1, &md, &phi).unwrap() < 1e-12);
        let e = StateVector::basis(4, EXCITED);
        assert!((transitionless_error(&e, &md, &phi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_reference_edge_cases() {
        let md = fig2_model();
        let drive = fig2_drive([0.3, 1.0]);
        let zero = curvature_pump_reference(&md, &drive, &init(0.0, 1.0), 20.0, 200).unwrap();
        assert!(zero.energy.iter().all(|e| e[0] == 0.0 && e[1] == 0.0));
        let empty = curvature_pump_reference(&md, &drive, &init(0.5, 1.0), 0.0, 10).unwrap();
        assert_eq!(empty.t, vec![0.0]);
        assert_eq!(empty.energy, vec![[0.0; 2]]);
    }

    #[test]
    fn gap_and_stability_errors() {
        let md = TripodModel::two_tone(1.0, 2.0);
        let through_gap = LinearPath {
            start: [-0.5, -0.5],
            velocity: [1.0, 1.0],
        };
        let err = evolve_pump(&md, &through_gap, &init(0.5, 1.0), 1.0, &IntegratorConfig::new(0.01, 1).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::GapViolation { .. }), "{err:?}");

        let err = evolve_pump(
            &fig2_model(),
            &fig2_drive([0.3, 1.0]),
            &init(0.5, 1.0),
            1.0,
            &IntegratorConfig::new(0.5, 1).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stability { .. }), "{err:?}");
    }

    #[test]
    fn fig2_trajectory_pumps_at_expected_rate_on_average() {
        // per-trajectory energy is E2 ~ P t + bounded; its sign follows chi
        let md = fig2_model();
        let drive = fig2_drive([0.3, 1.0]);
        let tr = evolve_pump(&md, &drive, &init(FRAC_1_SQRT_2, FRAC_PI_2), 200.0, &IntegratorConfig::default()).unwrap();
        let last = tr.energy.last().unwrap()[1];
        assert!(last < 0.0 && (last / 200.0 + 0.24 / PI).abs() < 0.05, "{last}");
    }
}
