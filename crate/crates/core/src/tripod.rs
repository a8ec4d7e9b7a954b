//! The tripod level scheme: three ground states `g_1, g_2, g_3` coupled to
//! one excited state `e` with real Rabi rates `Omega_i(phi)`.
//!
//! Basis order is `(g_1, g_2, g_3, e)` everywhere. The dark subspace is the
//! zero-energy kernel of `H_0`, orthogonal to `e` and to the bright state
//! `g~ = Omega / |Omega|`.
//!
//! The counterdiabatic term restricted to the ground manifold is
//! `A_t = i sum_jk A_jk |g_j><g_k|` with
//! `A_jk = (dOmega_j Omega_k - dOmega_k Omega_j) / |Omega|^2`, where the
//! dot is the time derivative along the trajectory. Its derivatives with
//! respect to the torus angles are built from the analytic second
//! derivatives of the Rabi rates.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::Phase;
use crate::error::{Error, Result};
use crate::operator::{ComplexOperator, StateVector};

/// Default lower bound on `|Omega|` before the gap counts as closed.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-3;

pub const EXCITED: usize = 3;

/// How the Rabi rates depend on the drive phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Couplings {
    /// `Omega = (m - cos phi1 - cos phi2, sin phi1, sin phi2)`.
    TwoTone { m: f64 },
    /// `Omega = (offset + amplitude (sin phi1 + cos phi2)) * direction`.
    ///
    /// The bright direction never moves, so every geometric quantity
    /// vanishes. Used as a control model.
    Aligned {
        direction: [f64; 3],
        offset: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripodModel {
    pub delta: f64,
    pub couplings: Couplings,
    pub gap_floor: f64,
    kgp_sign: f64,
}

/// Rabi rates with their first and second phase derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaJet {
    pub phi: Phase,
    pub omega: Vector3<f64>,
    /// `grad[mu] = d Omega / d phi^mu`
    pub grad: [Vector3<f64>; 2],
    /// `hess[mu][nu] = d^2 Omega / d phi^mu d phi^nu`
    pub hess: [[Vector3<f64>; 2]; 2],
    pub norm: f64,
    /// `norm > gap_floor`
    pub gapped: bool,
    gap_floor: f64,
}

impl OmegaJet {
    pub fn require_gap(&self) -> Result<()> {
        if self.gapped {
            Ok(())
        } else {
            Err(Error::GapViolation {
                phi: *self.phi.coords(),
                omega: self.norm,
                floor: self.gap_floor,
            })
        }
    }

    /// Time derivative `sum_mu v^mu d_mu Omega`.
    pub fn rate(&self, velocity: &[f64; 2]) -> Vector3<f64> {
        self.grad[0] * velocity[0] + self.grad[1] * velocity[1]
    }

    /// Unit bright direction `g~`.
    pub fn bright(&self) -> Vector3<f64> {
        self.omega / self.norm
    }

    /// `d_mu g~ = (d_mu Omega - g~ (g~ . d_mu Omega)) / |Omega|`
    pub fn bright_grad(&self, mu: usize) -> Vector3<f64> {
        let g = self.bright();
        (self.grad[mu] - g * g.dot(&self.grad[mu])) / self.norm
    }
}

/// Orthonormal real frame `(u_1, u_2)` of the dark subspace, with
/// `u_1 x u_2 = g~`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkFrame {
    pub bright: Vector3<f64>,
    pub u1: Vector3<f64>,
    pub u2: Vector3<f64>,
    /// Reference axis used for the Gram-Schmidt step.
    pub axis: usize,
}

impl DarkFrame {
    /// Largest deviation from orthonormality and right-handedness.
    pub fn orthonormality_residual(&self) -> f64 {
        let vs = [self.bright, self.u1, self.u2];
        let mut r: f64 = 0.0;
        for (i, a) in vs.iter().enumerate() {
            for (j, b) in vs.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                r = r.max((a.dot(b) - target).abs());
            }
        }
        r.max((self.u1.cross(&self.u2) - self.bright).amax())
    }

    /// Embeds `u_alpha` as a 4-level state with no excited component.
    pub fn state(&self, alpha: usize) -> StateVector {
        let u = if alpha == 0 { self.u1 } else { self.u2 };
        StateVector::from_real(&[u[0], u[1], u[2], 0.0])
    }
}

/// The local frame together with its first phase derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameJet {
    pub frame: DarkFrame,
    pub du1: [Vector3<f64>; 2],
    pub du2: [Vector3<f64>; 2],
}

/// Initial superposition `c e^{i dphi} u_1 + sqrt(1 - c^2) u_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    pub c: f64,
    pub delta_phi: f64,
}

impl InitialStateSpec {
    pub fn new(c: f64, delta_phi: f64) -> Result<Self> {
        let spec = InitialStateSpec { c, delta_phi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::validation(format!("c = {} outside [0, 1]", self.c)));
        }
        if !self.delta_phi.is_finite() {
            return Err(Error::validation("delta_phi must be finite"));
        }
        Ok(())
    }

    /// `(c_1, c_2)` with the phase of `c_2` fixed to zero.
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        (
            Complex64::from_polar(self.c, self.delta_phi),
            Complex64::new((1.0 - self.c * self.c).max(0.0).sqrt(), 0.0),
        )
    }

    /// `-2 Im(c_1^* c_2)`, the prefactor of the geometric energy formula.
    pub fn coherence(&self) -> f64 {
        let (c1, c2) = self.amplitudes();
        -2.0 * (c1.conj() * c2).im
    }

    /// The 4-level state in the local dark frame at `phi0`.
    pub fn prepare(&self, model: &TripodModel, phi0: &Phase) -> Result<StateVector> {
        self.validate()?;
        let frame = model.dark_frame(phi0)?;
        let (c1, c2) = self.amplitudes();
        let amps = (0..3)
            .map(|j| c1 * frame.u1[j] + c2 * frame.u2[j])
            .chain(std::iter::once(Complex64::new(0.0, 0.0)))
            .collect();
        Ok(StateVector::new(amps))
    }
}

impl TripodModel {
    pub fn new(delta: f64, couplings: Couplings) -> Self {
        TripodModel {
            delta,
            couplings,
            gap_floor: DEFAULT_GAP_FLOOR,
            kgp_sign: 1.0,
        }
    }

    /// The two-tone model with mass parameter `m`.
    pub fn two_tone(delta: f64, m: f64) -> Self {
        Self::new(delta, Couplings::TwoTone { m })
    }

    pub fn with_gap_floor(mut self, gap_floor: f64) -> Self {
        self.gap_floor = gap_floor;
        self
    }

    /// Flips the sign of the counterdiabatic coefficients. Only meant for
    /// checking that the verification suite notices a broken gauge potential.
    #[doc(hidden)]
    pub fn with_flipped_kgp_sign(mut self) -> Self {
        self.kgp_sign = -self.kgp_sign;
        self
    }

    pub fn omega_jet(&self, phi: &Phase) -> OmegaJet {
        let [p1, p2] = *phi.coords();
        let (s1, c1) = p1.sin_cos();
        let (s2, c2) = p2.sin_cos();
        let zero = Vector3::zeros();
        let (omega, grad, hess) = match self.couplings {
            Couplings::TwoTone { m } => (
                Vector3::new(m - c1 - c2, s1, s2),
                [Vector3::new(s1, c1, 0.0), Vector3::new(s2, 0.0, c2)],
                [
                    [Vector3::new(c1, -s1, 0.0), zero],
                    [zero, Vector3::new(c2, 0.0, -s2)],
                ],
            ),
            Couplings::Aligned {
                direction,
                offset,
                amplitude,
            } => {
                let n = Vector3::from(direction).normalize();
                let f = offset + amplitude * (s1 + c2);
                (
                    n * f,
                    [n * (amplitude * c1), n * (-amplitude * s2)],
                    [[n * (-amplitude * s1), zero], [zero, n * (-amplitude * c2)]],
                )
            }
        };
        let norm = omega.norm();
        OmegaJet {
            phi: *phi,
            omega,
            grad,
            hess,
            norm,
            gapped: norm > self.gap_floor,
            gap_floor: self.gap_floor,
        }
    }

    pub(crate) fn gapped_jet(&self, phi: &Phase) -> Result<OmegaJet> {
        let jet = self.omega_jet(phi);
        jet.require_gap()?;
        Ok(jet)
    }

    /// `H_0 = Delta |e><e| + sum_i Omega_i (|e><g_i| + |g_i><e|)`
    pub fn hamiltonian(&self, phi: &Phase) -> ComplexOperator {
        let jet = self.omega_jet(phi);
        let mut h = ComplexOperator::zeros(4);
        h.set(EXCITED, EXCITED, re(self.delta));
        for i in 0..3 {
            h.set(EXCITED, i, re(jet.omega[i]));
            h.set(i, EXCITED, re(jet.omega[i]));
        }
        h
    }

    /// `d_mu H_0`, nonzero only on the `e`-`g_i` couplings.
    pub fn hamiltonian_derivative(&self, phi: &Phase, mu: usize) -> ComplexOperator {
        let jet = self.omega_jet(phi);
        let mut h = ComplexOperator::zeros(4);
        for i in 0..3 {
            h.set(EXCITED, i, re(jet.grad[mu][i]));
            h.set(i, EXCITED, re(jet.grad[mu][i]));
        }
        h
    }

    /// Closed-form nonzero eigenvalues `(Delta -+ sqrt(Delta^2 + 4 Omega^2)) / 2`.
    pub fn bright_energies(&self, phi: &Phase) -> (f64, f64) {
        let o = self.omega_jet(phi).norm;
        let root = (self.delta * self.delta + 4.0 * o * o).sqrt();
        (0.5 * (self.delta - root), 0.5 * (self.delta + root))
    }

    /// `|g~><g~|` embedded in the 4-level space.
    pub fn bright_projector(&self, phi: &Phase) -> Result<ComplexOperator> {
        let g = self.gapped_jet(phi)?.bright();
        Ok(embed_ground(&(g * g.transpose())))
    }

    /// `d_mu |g~><g~|`
    pub fn bright_projector_derivative(&self, phi: &Phase, mu: usize) -> Result<ComplexOperator> {
        let jet = self.gapped_jet(phi)?;
        let g = jet.bright();
        let dg = jet.bright_grad(mu);
        Ok(embed_ground(&(dg * g.transpose() + g * dg.transpose())))
    }

    /// Projector onto the dark subspace, `1_g - |g~><g~|`.
    pub fn dark_projector(&self, phi: &Phase) -> Result<ComplexOperator> {
        let g = self.gapped_jet(phi)?.bright();
        Ok(embed_ground(&(Matrix3::identity() - g * g.transpose())))
    }

    pub fn dark_projector_derivative(&self, phi: &Phase, mu: usize) -> Result<ComplexOperator> {
        Ok(-&self.bright_projector_derivative(phi, mu)?)
    }

    /// Local dark frame built by Gram-Schmidt from the coordinate axis along
    /// which `g~` is smallest (lowest index wins ties).
    pub fn dark_frame(&self, phi: &Phase) -> Result<DarkFrame> {
        Ok(frame_from_bright(self.gapped_jet(phi)?.bright()))
    }

    /// Local frame with its analytic first derivatives. The reference axis is
    /// frozen at its value at `phi`, so the frame is smooth in a
    /// neighbourhood even where the pointwise choice would switch.
    pub fn frame_jet(&self, phi: &Phase) -> Result<FrameJet> {
        let jet = self.gapped_jet(phi)?;
        let frame = frame_from_bright(jet.bright());
        Ok(frame_jet_on_axis(&jet, frame.axis))
    }

    /// Frame jet with an explicitly chosen reference axis.
    pub fn frame_jet_on_axis(&self, phi: &Phase, axis: usize) -> Result<FrameJet> {
        let jet = self.gapped_jet(phi)?;
        Ok(frame_jet_on_axis(&jet, axis))
    }

    /// Antisymmetric coefficients `A_jk` for velocity `velocity`.
    pub fn kgp_coefficients(&self, jet: &OmegaJet, velocity: &[f64; 2]) -> Matrix3<f64> {
        let rate = jet.rate(velocity);
        let outer = rate * jet.omega.transpose();
        (outer - outer.transpose()) * (self.kgp_sign / (jet.norm * jet.norm))
    }

    /// `d_mu A_jk` at fixed velocity.
    pub fn kgp_coefficient_derivative(
        &self,
        jet: &OmegaJet,
        velocity: &[f64; 2],
        mu: usize,
    ) -> Matrix3<f64> {
        let n2 = jet.norm * jet.norm;
        let rate = jet.rate(velocity);
        let d_rate = jet.hess[mu][0] * velocity[0] + jet.hess[mu][1] * velocity[1];
        let d_omega = jet.grad[mu];
        let numer = rate * jet.omega.transpose();
        let numer = numer - numer.transpose();
        let d_numer = d_rate * jet.omega.transpose() + rate * d_omega.transpose();
        let d_numer = d_numer - d_numer.transpose();
        let d_n2 = 2.0 * jet.omega.dot(&d_omega);
        (d_numer / n2 - numer * (d_n2 / (n2 * n2))) * self.kgp_sign
    }

    /// Counterdiabatic term `A_t` on the ground manifold, embedded 4x4.
    pub fn kgp_projected(&self, phi: &Phase, velocity: &[f64; 2]) -> Result<ComplexOperator> {
        let jet = self.gapped_jet(phi)?;
        Ok(embed_ground_imag(&self.kgp_coefficients(&jet, velocity)))
    }

    /// Directional potential `A_mu` (unit velocity along `mu`).
    pub fn kgp_direction(&self, phi: &Phase, mu: usize) -> Result<ComplexOperator> {
        let mut v = [0.0; 2];
        v[mu] = 1.0;
        self.kgp_projected(phi, &v)
    }

    /// `d_mu A_t` with the velocity held fixed.
    pub fn kgp_derivative(
        &self,
        phi: &Phase,
        velocity: &[f64; 2],
        mu: usize,
    ) -> Result<ComplexOperator> {
        let jet = self.gapped_jet(phi)?;
        Ok(embed_ground_imag(
            &self.kgp_coefficient_derivative(&jet, velocity, mu),
        ))
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn unit(axis: usize) -> Vector3<f64> {
    let mut e = Vector3::zeros();
    e[axis] = 1.0;
    e
}

fn frame_from_bright(g: Vector3<f64>) -> DarkFrame {
    let mut axis = 0;
    for k in 1..3 {
        if g[k].abs() < g[axis].abs() {
            axis = k;
        }
    }
    let e = unit(axis);
    let u1 = (e - g * g[axis]).normalize();
    let u2 = g.cross(&u1);
    DarkFrame {
        bright: g,
        u1,
        u2,
        axis,
    }
}

fn frame_jet_on_axis(jet: &OmegaJet, axis: usize) -> FrameJet {
    let g = jet.bright();
    let e = unit(axis);
    let w = e - g * g[axis];
    let n = w.norm();
    let u1 = w / n;
    let u2 = g.cross(&u1);
    let frame = DarkFrame {
        bright: g,
        u1,
        u2,
        axis,
    };
    let mut du1 = [Vector3::zeros(); 2];
    let mut du2 = [Vector3::zeros(); 2];
    for mu in 0..2 {
        let dg = jet.bright_grad(mu);
        let dw = -(dg * g[axis] + g * dg[axis]);
        // d(w/|w|) = (dw - u1 (u1 . dw)) / |w|
        du1[mu] = (dw - u1 * u1.dot(&dw)) / n;
        du2[mu] = dg.cross(&u1) + g.cross(&du1[mu]);
    }
    FrameJet { frame, du1, du2 }
}

/// Places a real 3x3 ground-manifold matrix into the 4-level space.
pub fn embed_ground(block: &Matrix3<f64>) -> ComplexOperator {
    ComplexOperator::from_fn(4, |i, j| {
        if i < 3 && j < 3 {
            re(block[(i, j)])
        } else {
            re(0.0)
        }
    })
}

/// Places `i * block` into the 4-level space.
pub fn embed_ground_imag(block: &Matrix3<f64>) -> ComplexOperator {
    ComplexOperator::from_fn(4, |i, j| {
        if i < 3 && j < 3 {
            Complex64::new(0.0, block[(i, j)])
        } else {
            re(0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::TorusPoint;
    use crate::operator::{commutator, spectral_decompose, DEFAULT_GROUPING_TOL};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn pt(a: f64, b: f64) -> Phase {
        TorusPoint::new([a, b])
    }

    fn max3(m: &Matrix3<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn omega_values() {
        let jet = TripodModel::two_tone(1.0, 0.5).omega_jet(&pt(0.0, 0.0));
        assert!((jet.omega - Vector3::new(-1.5, 0.0, 0.0)).amax() < 1e-15);
        assert!((jet.norm - 1.5).abs() < 1e-15);
        assert!(jet.gapped);

        let jet = TripodModel::two_tone(1.0, 0.5).omega_jet(&pt(FRAC_PI_2, FRAC_PI_2));
        assert!((jet.omega - Vector3::new(0.5, 1.0, 1.0)).amax() < 1e-15);
        assert!((jet.norm - 1.5).abs() < 1e-15);

        let jet = TripodModel::two_tone(1.0, 2.0).omega_jet(&pt(0.0, 0.0));
        assert!(jet.omega.amax() < 1e-15);
        assert!(!jet.gapped);
        assert!(matches!(jet.require_gap(), Err(Error::GapViolation { .. })));
    }

    #[test]
    fn spectrum_has_double_dark_level() {
        let model = TripodModel::two_tone(1.0, 0.5);
        for &(a, b) in &[(0.3, 1.1), (2.0, 4.0), (FRAC_PI_2, 0.0)] {
            let phi = pt(a, b);
            let sd = spectral_decompose(&model.hamiltonian(&phi), DEFAULT_GROUPING_TOL).unwrap();
            let dark = sd.cluster_at(0.0).expect("zero-energy cluster");
            assert_eq!(sd.clusters[dark].multiplicity, 2);
            let (lo, hi) = model.bright_energies(&phi);
            assert_eq!(sd.clusters.len(), 3);
            assert!((sd.clusters[0].energy - lo).abs() < 1e-12);
            assert!((sd.clusters[2].energy - hi).abs() < 1e-12);
            // the dark eigenprojector is the analytic one
            let pd = model.dark_projector(&phi).unwrap();
            assert!((&sd.clusters[dark].projector - &pd).max_abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_at_unit_coupling() {
        // aligned couplings with zero amplitude pin |Omega| = 1 everywhere
        let model = TripodModel::new(
            1.0,
            Couplings::Aligned {
                direction: [1.0, 0.0, 0.0],
                offset: 1.0,
                amplitude: 0.0,
            },
        );
        let sd = spectral_decompose(&model.hamiltonian(&pt(0.2, 0.3)), 1e-8).unwrap();
        let e = sd.energies();
        let s5 = 5f64.sqrt();
        assert!((e[0] - (1.0 - s5) / 2.0).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);
        assert!((e[2] - (1.0 + s5) / 2.0).abs() < 1e-12);
        assert_eq!(sd.clusters[1].multiplicity, 2);

        let model = TripodModel::new(0.0, model.couplings);
        let e = spectral_decompose(&model.hamiltonian(&pt(0.0, 0.0)), 1e-8)
            .unwrap()
            .energies();
        assert!((e[0] + 1.0).abs() < 1e-12 && e[1].abs() < 1e-12 && (e[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_frame() {
        let f = frame_from_bright(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(f.axis, 1);
        assert!((f.u1 - Vector3::new(0.0, 1.0, 0.0)).amax() < 1e-15);
        assert!((f.u2 - Vector3::new(0.0, 0.0, 1.0)).amax() < 1e-15);
        assert!((f.u1.cross(&f.u2) - f.bright).amax() < 1e-15);
    }

    #[test]
    fn frame_is_dark() {
        let model = TripodModel::two_tone(1.0, 0.5);
        let phi = pt(1.0, 2.5);
        let frame = model.dark_frame(&phi).unwrap();
        assert!(frame.orthonormality_residual() < 1e-12);
        let h = model.hamiltonian(&phi);
        for alpha in 0..2 {
            let hu = h.apply(&frame.state(alpha)).unwrap();
            assert!(hu.norm() < 1e-12);
        }
        assert!(TripodModel::two_tone(1.0, 2.0).dark_frame(&pt(0.0, 0.0)).is_err());
    }

    #[test]
    fn kgp_hand_example() {
        // Omega = (1, 0, 0) along direction 1, Omega-dot = (0, 1, 0)
        let model = TripodModel::two_tone(1.0, 2.0);
        let jet = model.omega_jet(&pt(0.0, PI));
        assert!((jet.omega - Vector3::new(2.0, 0.0, 0.0)).amax() < 1e-15);
        // at phi = (0, pi): dOmega/dphi1 = (0, 1, 0), |Omega| = 2
        let a = model.kgp_coefficients(&jet, &[1.0, 0.0]);
        // A_12 = (0*2 - 1*2)/4 = -1/2 ; scale the hand example by |Omega|
        assert!((a[(0, 1)] + 0.5).abs() < 1e-15);
        assert!((a[(1, 0)] - 0.5).abs() < 1e-15);
        let mut rest = a;
        rest[(0, 1)] = 0.0;
        rest[(1, 0)] = 0.0;
        assert!(max3(&rest) < 1e-15);
    }

    #[test]
    fn kgp_unit_example() {
        // Exactly Omega = (1,0,0), Omega-dot = (0,1,0) through a hand-built jet
        let model = TripodModel::two_tone(1.0, 0.5);
        let mut jet = model.omega_jet(&pt(0.0, 0.0));
        jet.omega = Vector3::new(1.0, 0.0, 0.0);
        jet.norm = 1.0;
        jet.grad = [Vector3::new(0.0, 1.0, 0.0), Vector3::zeros()];
        let a = model.kgp_coefficients(&jet, &[1.0, 0.0]);
        assert_eq!(a[(0, 1)], -1.0);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(0, 2)], 0.0);
        assert_eq!(a[(2, 1)], 0.0);
    }

    #[test]
    fn kgp_trivial_cases() {
        let model = TripodModel::two_tone(1.0, 0.5);
        let op = model.kgp_projected(&pt(0.4, 0.9), &[0.0, 0.0]).unwrap();
        assert_eq!(op.max_abs(), 0.0);

        let aligned = TripodModel::new(
            1.0,
            Couplings::Aligned {
                direction: [1.0, 2.0, -0.5],
                offset: 3.0,
                amplitude: 1.0,
            },
        );
        let op = aligned.kgp_projected(&pt(0.4, 0.9), &[0.3, 0.7]).unwrap();
        assert!(op.max_abs() < 1e-15);
    }

    #[test]
    fn projector_derivative_matches_finite_difference() {
        use crate::operator::{finite_diff_operator, FiniteDiff};
        let model = TripodModel::two_tone(1.0, 0.5);
        let phi = pt(FRAC_PI_3, FRAC_PI_4);
        let fd = finite_diff_operator(|p| model.bright_projector(p), &phi, 0, FiniteDiff::default()).unwrap();
        let exact = model.bright_projector_derivative(&phi, 0).unwrap();
        assert!((&fd - &exact).max_abs() < 1e-8);
    }

    #[test]
    fn theorem_projector_transport_identity() {
        // d_mu Pi = -i [A_mu, Pi] for the dark and bright projectors
        let model = TripodModel::two_tone(1.0, 0.5);
        let i = Complex64::new(0.0, 1.0);
        for &(a, b) in &[(0.3, 1.9), (4.0, 0.2), (2.2, 5.1)] {
            let phi = pt(a, b);
            for mu in 0..2 {
                let amu = model.kgp_direction(&phi, mu).unwrap();
                for (pi, dpi) in [
                    (model.dark_projector(&phi).unwrap(), model.dark_projector_derivative(&phi, mu).unwrap()),
                    (model.bright_projector(&phi).unwrap(), model.bright_projector_derivative(&phi, mu).unwrap()),
                ] {
                    let rhs = commutator(&amu, &pi).unwrap().scale(-i);
                    assert!((&dpi - &rhs).max_abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flipped_sign_breaks_transport_identity() {
        let model = TripodModel::two_tone(1.0, 0.5).with_flipped_kgp_sign();
        let phi = pt(0.3, 1.9);
        let amu = model.kgp_direction(&phi, 0).unwrap();
        let pi = model.dark_projector(&phi).unwrap();
        let rhs = commutator(&amu, &pi).unwrap().scale(Complex64::new(0.0, -1.0));
        let dpi = model.dark_projector_derivative(&phi, 0).unwrap();
        assert!((&dpi - &rhs).max_abs() > 1e-3);
    }

    #[test]
    fn dh0_matches_finite_difference() {
        use crate::operator::{finite_diff_operator, FiniteDiff};
        let model = TripodModel::two_tone(1.0, -0.7);
        let phi = pt(2.0, 0.5);
        for mu in 0..2 {
            let fd = finite_diff_operator(|p| Ok(model.hamiltonian(p)), &phi, mu, FiniteDiff::default()).unwrap();
            assert!((&fd - &model.hamiltonian_derivative(&phi, mu)).max_abs() < 1e-9);
        }
    }

    #[test]
    fn kgp_derivative_matches_finite_difference() {
        use crate::operator::{finite_diff_operator, FiniteDiff};
        let model = TripodModel::two_tone(1.0, 0.5);
        let phi = pt(1.2, 3.3);
        let v = [0.4, 0.6];
        for mu in 0..2 {
            let fd = finite_diff_operator(|p| model.kgp_projected(p, &v), &phi, mu, FiniteDiff::default())
                .unwrap();
            let exact = model.kgp_derivative(&phi, &v, mu).unwrap();
            assert!((&fd - &exact).max_abs() < 1e-8);
        }
    }

    #[test]
    fn frame_jet_matches_finite_difference() {
        let model = TripodModel::two_tone(1.0, 0.5);
        let phi = pt(0.8, 2.1);
        let fj = model.frame_jet(&phi).unwrap();
        let h = 1e-6;
        for mu in 0..2 {
            let plus = model.frame_jet_on_axis(&phi.shifted(mu, h), fj.frame.axis).unwrap().frame;
            let minus = model.frame_jet_on_axis(&phi.shifted(mu, -h), fj.frame.axis).unwrap().frame;
            assert!(((plus.u1 - minus.u1) / (2.0 * h) - fj.du1[mu]).amax() < 1e-8);
            assert!(((plus.u2 - minus.u2) / (2.0 * h) - fj.du2[mu]).amax() < 1e-8);
        }
    }

    #[test]
    fn initial_state() {
        let model = TripodModel::two_tone(1.0, 0.5);
        let spec = InitialStateSpec::new(std::f64::consts::FRAC_1_SQRT_2, FRAC_PI_2).unwrap();
        let psi = spec.prepare(&model, &pt(0.3, 0.4)).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert_eq!(psi.amplitudes()[3], Complex64::new(0.0, 0.0));
        assert!((spec.coherence() - 1.0).abs() < 1e-15);
        assert!(InitialStateSpec::new(1.5, 0.0).is_err());
        assert!(InitialStateSpec::new(-0.1, 0.0).is_err());
    }

    fn gapped_point() -> impl Strategy<Value = (f64, f64, f64)> {
        (0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU, prop_oneof![-1.6..-0.3f64, 0.3..1.6f64, 2.3..3.5f64])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn frame_invariants((a, b, m) in gapped_point()) {
            let model = TripodModel::two_tone(1.0, m);
            let phi = pt(a, b);
            let frame = model.dark_frame(&phi).unwrap();
            prop_assert!(frame.orthonormality_residual() < 1e-12);
            prop_assert!(frame.u1.dot(&frame.bright).abs() < 1e-12);
            let h = model.hamiltonian(&phi);
            for alpha in 0..2 {
                prop_assert!(h.apply(&frame.state(alpha)).unwrap().norm() < 1e-12);
            }
        }

        #[test]
        fn kgp_structure((a, b, m) in gapped_point(), v1 in -1.0..1.0f64, v2 in -1.0..1.0f64) {
            let model = TripodModel::two_tone(1.0, m);
            let jet = model.omega_jet(&pt(a, b));
            let coeff = model.kgp_coefficients(&jet, &[v1, v2]);
            prop_assert_eq!(coeff, -coeff.transpose());
            let op = model.kgp_projected(&pt(a, b), &[v1, v2]).unwrap();
            prop_assert_eq!(op.hermiticity_residual(), 0.0);
        }

        #[test]
        fn second_derivatives_consistent((a, b, m) in gapped_point()) {
            let model = TripodModel::two_tone(1.0, m);
            let phi = pt(a, b);
            let jet = model.omega_jet(&phi);
            let h = 1e-5;
            for mu in 0..2 {
                for nu in 0..2 {
                    prop_assert!((jet.hess[mu][nu] - jet.hess[nu][mu]).amax() < 1e-12);
                    let plus = model.omega_jet(&phi.shifted(nu, h)).grad[mu];
                    let minus = model.omega_jet(&phi.shifted(nu, -h)).grad[mu];
                    prop_assert!(((plus - minus) / (2.0 * h) - jet.hess[mu][nu]).amax() < 1e-6);
                }
            }
        }
    }
}
