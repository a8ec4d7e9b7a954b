//! Cross-module invariant suite behind `geopump verify`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use geopump::drive::{sample_initial_phases, DriveProtocol, Phase, TorusPoint};
use geopump::evolution::{curvature_pump_reference, evolve_pump, IntegratorConfig};
use geopump::geometry::{berry_curvature_in_frame, wilczek_zee_curvature, Band};
use geopump::operator::{commutator, spectral_decompose, FiniteDiff, DEFAULT_GROUPING_TOL};
use geopump::{ComplexOperator, InitialStateSpec, Result, TripodModel};
use num_complex::Complex64;

const POINT_SEED: u64 = 17;
const POINTS: usize = 100;

pub struct Check {
    pub name: &'static str,
    pub limit: f64,
    measure: fn(&TripodModel) -> Result<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub value: Option<f64>,
    pub limit: f64,
    pub error: Option<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        matches!(self.value, Some(v) if v < self.limit)
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        match (&self.value, &self.error) {
            (Some(v), _) => format!("{status} {:<34} {v:.3e} (limit {:.0e})", self.name, self.limit),
            (None, Some(e)) => format!("{status} {:<34} error: {e}", self.name),
            (None, None) => format!("{status} {}", self.name),
        }
    }
}

pub fn checks() -> Vec<Check> {
    vec![
        Check {
            name: "kgp_block_off_diagonal",
            limit: 1e-8,
            measure: kgp_block_off_diagonal,
        },
        Check {
            name: "projector_derivative_identity",
            limit: 1e-6,
            measure: projector_derivative_identity,
        },
        Check {
            name: "wilczek_zee_equivalence",
            limit: 1e-6,
            measure: wilczek_zee_equivalence,
        },
        Check {
            name: "real_frame_diagonal_curvature",
            limit: 1e-8,
            measure: real_frame_diagonal_curvature,
        },
        Check {
            name: "two_path_energy",
            limit: 1e-4,
            measure: two_path_energy,
        },
        Check {
            name: "transitionless_bound",
            limit: 1e-5,
            measure: transitionless_bound,
        },
    ]
}

/// The model every check runs on; `inject_fault` flips the sign of the
/// counterdiabatic coefficients.
pub fn verification_model(inject_fault: bool) -> TripodModel {
    let model = TripodModel::two_tone(1.0, 0.5);
    if inject_fault {
        model.with_flipped_kgp_sign()
    } else {
        model
    }
}

pub fn run_checks(inject_fault: bool) -> Vec<CheckReport> {
    let model = verification_model(inject_fault);
    checks()
        .iter()
        .map(|c| match (c.measure)(&model) {
            Ok(v) => CheckReport {
                name: c.name,
                value: Some(v),
                limit: c.limit,
                error: None,
            },
            Err(e) => CheckReport {
                name: c.name,
                value: None,
                limit: c.limit,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

fn random_points() -> Result<Vec<Phase>> {
    sample_initial_phases(POINT_SEED, POINTS)
}

fn patch() -> Vec<Phase> {
    let n = 32;
    (0..n * n)
        .map(|k| {
            let s = |i: usize| -0.25 + 0.5 * i as f64 / (n - 1) as f64;
            TorusPoint::new([FRAC_PI_2 + s(k / n), FRAC_PI_2 + s(k % n)])
        })
        .collect()
}

/// `max |Pi^n A_mu Pi^n|` over the eigenprojectors of `H_0`.
fn kgp_block_off_diagonal(model: &TripodModel) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for phi in random_points()? {
        let spectrum = spectral_decompose(&model.hamiltonian(&phi), DEFAULT_GROUPING_TOL)?;
        for mu in 0..2 {
            let a = model.kgp_direction(&phi, mu)?;
            for c in &spectrum.clusters {
                worst = worst.max((&(&c.projector * &a) * &c.projector).frobenius_norm());
            }
        }
    }
    Ok(worst)
}

/// `max |d_mu Pi + i [A_mu, Pi]|` for the dark and bright-direction projectors.
fn projector_derivative_identity(model: &TripodModel) -> Result<f64> {
    let i = Complex64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for phi in random_points()? {
        for mu in 0..2 {
            let a = model.kgp_direction(&phi, mu)?;
            let pairs: [(ComplexOperator, ComplexOperator); 2] = [
                (model.dark_projector(&phi)?, model.dark_projector_derivative(&phi, mu)?),
                (model.bright_projector(&phi)?, model.bright_projector_derivative(&phi, mu)?),
            ];
            for (p, dp) in &pairs {
                let residual = dp + &commutator(&a, p)?.scale(i);
                worst = worst.max(residual.frobenius_norm());
            }
        }
    }
    Ok(worst)
}

fn wilczek_zee_equivalence(model: &TripodModel) -> Result<f64> {
    let center = TorusPoint::new([FRAC_PI_2, FRAC_PI_2]);
    let axis = model.dark_frame(&center)?.axis;
    let mut worst: f64 = 0.0;
    for phi in patch() {
        let wz = wilczek_zee_curvature(model, &phi, 0, 1, axis, FiniteDiff::default())?;
        let frame = model.frame_jet_on_axis(&phi, axis)?.frame;
        let proj = berry_curvature_in_frame(model, &phi, 0, 1, Band::Dark, &frame)?;
        worst = worst.max((wz - proj.dark).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}

fn real_frame_diagonal_curvature(model: &TripodModel) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for phi in random_points()?.into_iter().chain(patch()) {
        let frame = model.dark_frame(&phi)?;
        let f = berry_curvature_in_frame(model, &phi, 0, 1, Band::Dark, &frame)?;
        worst = worst.max(f.dark[(0, 0)].norm()).max(f.dark[(1, 1)].norm());
    }
    Ok(worst)
}

fn reference_run(
    model: &TripodModel,
) -> Result<(DriveProtocol, InitialStateSpec, geopump::evolution::PumpTrace)> {
    let drive = DriveProtocol::new(TorusPoint::new([0.3, 1.0]), 0.4, 3, 2)?;
    let init = InitialStateSpec::new(FRAC_1_SQRT_2, FRAC_PI_2)?;
    let trace = evolve_pump(model, &drive, &init, 200.0, &IntegratorConfig::new(0.01, 1)?)?;
    Ok((drive, init, trace))
}

/// `max_t |E_2^dyn - E_2^geo| / max_t |E_2^dyn|`
fn two_path_energy(model: &TripodModel) -> Result<f64> {
    let (drive, init, trace) = reference_run(model)?;
    let geo = curvature_pump_reference(model, &drive, &init, 200.0, trace.len() - 1)?;
    let scale = trace.energy.iter().fold(0.0f64, |a, e| a.max(e[1].abs()));
    let diff = trace
        .energy
        .iter()
        .zip(&geo.energy)
        .fold(0.0f64, |a, (d, g)| a.max((d[1] - g[1]).abs()));
    Ok(diff / scale)
}

fn transitionless_bound(model: &TripodModel) -> Result<f64> {
    let (_, _, trace) = reference_run(model)?;
    // a norm defect beyond 1e-8 counts as a failure as well
    if trace.max_norm_err >= 1e-8 {
        return Ok(f64::INFINITY);
    }
    Ok(trace.max_transitionless_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_shipped_model() {
        for r in run_checks(false) {
            assert!(r.passed(), "{}", r.line());
        }
    }

    #[test]
    fn flipped_sign_breaks_projector_identity() {
        let reports = run_checks(true);
        let identity = reports.iter().find(|r| r.name == "projector_derivative_identity").unwrap();
        assert!(!identity.passed(), "{}", identity.line());
    }

    #[test]
    fn names_are_unique() {
        let names: Vec<_> = checks().iter().map(|c| c.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }
}
