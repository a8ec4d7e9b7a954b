//! Quantum geometry of the tripod dark subspace: non-abelian Berry
//! curvature, the Euler form and class, and Wilson lines.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::drive::{Phase, TorusPoint, Trajectory};
use crate::error::{Error, Result};
use crate::operator::{commutator, ComplexOperator, FiniteDiff};
use crate::tripod::{DarkFrame, FrameJet, TripodModel};

/// Default torus grid for the Euler class.
pub const DEFAULT_EULER_GRID: (usize, usize) = (128, 128);

/// Distance from an even integer below which the Euler class counts as quantized.
pub const EULER_RESIDUAL_TOL: f64 = 1e-6;

/// Which eigenprojector the curvature is taken for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// Zero-energy dark subspace, `1_g - |g~><g~|`.
    Dark,
    /// The bright ground-manifold direction `|g~><g~|`.
    Bright,
}

#[derive(Debug, Clone)]
pub struct CurvatureSample {
    pub phi: Phase,
    pub axes: (usize, usize),
    /// `F_{mu nu} = i [d_mu Pi, d_nu Pi]`
    pub operator: ComplexOperator,
    /// `F^{alpha beta} = <u_alpha| F |u_beta>` in the supplied dark frame.
    pub dark: Matrix2<Complex64>,
}

/// Curvature of `band` in the local dark frame at `phi`.
pub fn berry_curvature(
    model: &TripodModel,
    phi: &Phase,
    mu: usize,
    nu: usize,
    band: Band,
) -> Result<CurvatureSample> {
    let frame = model.dark_frame(phi)?;
    berry_curvature_in_frame(model, phi, mu, nu, band, &frame)
}

pub fn berry_curvature_in_frame(
    model: &TripodModel,
    phi: &Phase,
    mu: usize,
    nu: usize,
    band: Band,
    frame: &DarkFrame,
) -> Result<CurvatureSample> {
    let derivative = |axis| match band {
        Band::Dark => model.dark_projector_derivative(phi, axis),
        Band::Bright => model.bright_projector_derivative(phi, axis),
    };
    let operator = if mu == nu {
        model.omega_jet(phi).require_gap()?;
        ComplexOperator::zeros(4)
    } else {
        commutator(&derivative(mu)?, &derivative(nu)?)?.scale(Complex64::new(0.0, 1.0))
    };
    let states = [frame.state(0), frame.state(1)];
    let mut dark = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            dark[(a, b)] = operator.matrix_element(&states[a], &states[b])?;
        }
    }
    Ok(CurvatureSample {
        phi: *phi,
        axes: (mu, nu),
        operator,
        dark,
    })
}

/// Euler form `Eu_{nu mu} = g~ . (d_nu g~ x d_mu g~)`. Frame independent.
pub fn euler_form(model: &TripodModel, phi: &Phase, nu: usize, mu: usize) -> Result<f64> {
    let jet = model.gapped_jet(phi)?;
    Ok(euler_form_from_bright(
        &jet.bright(),
        &jet.bright_grad(nu),
        &jet.bright_grad(mu),
    ))
}

fn euler_form_from_bright(g: &Vector3<f64>, dg_nu: &Vector3<f64>, dg_mu: &Vector3<f64>) -> f64 {
    g.dot(&dg_nu.cross(dg_mu))
}

/// Euler form from the connection of a smooth real frame,
/// `<d_nu u_1|d_mu u_2> - <d_nu u_2|d_mu u_1>`.
pub fn euler_form_in_frame(fj: &FrameJet, nu: usize, mu: usize) -> f64 {
    fj.du1[nu].dot(&fj.du2[mu]) - fj.du2[nu].dot(&fj.du1[mu])
}

/// Connection-form evaluation of the Euler form in the local frame at `phi`.
pub fn euler_form_connection(model: &TripodModel, phi: &Phase, nu: usize, mu: usize) -> Result<f64> {
    Ok(euler_form_in_frame(&model.frame_jet(phi)?, nu, mu))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerData {
    pub grid: (usize, usize),
    pub axes: (usize, usize),
    /// Row-major `n1 x n2` samples of `Eu_{nu mu}` at `(2pi i/n1, 2pi j/n2)`.
    pub samples: Vec<f64>,
    pub chi: f64,
    pub residual: f64,
}

impl EulerData {
    pub fn nearest_even(&self) -> i64 {
        nearest_even(self.chi)
    }

    pub fn is_quantized(&self) -> bool {
        self.residual < EULER_RESIDUAL_TOL
    }
}

pub fn nearest_even(x: f64) -> i64 {
    2 * (x / 2.0).round() as i64
}

/// `chi_{nu mu} = (1/2pi) * integral of Eu_{nu mu} over the torus`, by the
/// periodic trapezoidal rule on a uniform grid.
pub fn euler_class(
    model: &TripodModel,
    axes: (usize, usize),
    grid: (usize, usize),
) -> Result<EulerData> {
    let (nu, mu) = axes;
    let (n1, n2) = grid;
    if n1 == 0 || n2 == 0 {
        return Err(Error::validation("Euler grid must be nonempty"));
    }
    if nu > 1 || mu > 1 {
        return Err(Error::validation(format!("axes {axes:?} out of range for T^2")));
    }
    let samples = (0..n1 * n2)
        .into_par_iter()
        .map(|k| {
            let phi = TorusPoint::new([TAU * (k / n2) as f64 / n1 as f64, TAU * (k % n2) as f64 / n2 as f64]);
            euler_form(model, &phi, nu, mu)
        })
        .collect::<Result<Vec<f64>>>()?;
    // sequential sum keeps chi bit-reproducible
    let sum: f64 = samples.iter().sum();
    let chi = sum * (TAU / n1 as f64) * (TAU / n2 as f64) / TAU;
    let residual = (chi - nearest_even(chi) as f64).abs();
    Ok(EulerData {
        grid,
        axes,
        samples,
        chi,
        residual,
    })
}

/// Torus average of the dark-frame curvature, assembled from the Euler
/// class: zero diagonal and `F^{12} = i chi / 2pi = -F^{21}`.
pub fn averaged_curvature(
    model: &TripodModel,
    axes: (usize, usize),
    grid: (usize, usize),
) -> Result<Matrix2<Complex64>> {
    let chi = euler_class(model, axes, grid)?.chi;
    let off = Complex64::new(0.0, chi / TAU);
    let zero = Complex64::new(0.0, 0.0);
    Ok(Matrix2::new(zero, off, off.conj(), zero))
}

/// Parallel transporter between two points, acting on the ground manifold.
#[derive(Debug, Clone)]
pub struct WilsonLine {
    pub start: Phase,
    pub end: Phase,
    /// 3x3 unitary on span{g_1, g_2, g_3}.
    pub unitary: ComplexOperator,
}

impl WilsonLine {
    /// `|W^dagger W - 1|`
    pub fn unitarity_residual(&self) -> f64 {
        (&(&self.unitary.adjoint() * &self.unitary) - &ComplexOperator::identity(3)).max_abs()
    }

    /// `|(1 - Pi_end) W Pi_start|`, zero when dark states stay dark.
    pub fn dark_leakage(&self, model: &TripodModel) -> Result<f64> {
        let p_start = model.dark_projector(&self.start)?.block(0, 3);
        let p_end = model.dark_projector(&self.end)?.block(0, 3);
        let q_end = &ComplexOperator::identity(3) - &p_end;
        Ok((&(&q_end * &self.unitary) * &p_start).max_abs())
    }

    /// `other` after `self`.
    pub fn then(&self, other: &WilsonLine) -> WilsonLine {
        WilsonLine {
            start: self.start,
            end: other.end,
            unitary: &other.unitary * &self.unitary,
        }
    }
}

/// `exp(K)` for a real antisymmetric 3x3 `K` (Rodrigues).
pub(crate) fn rotation_exp(k: &Matrix3<f64>) -> Matrix3<f64> {
    let w = Vector3::new(k[(2, 1)], k[(0, 2)], k[(1, 0)]);
    let theta = w.norm();
    if theta < 1e-300 {
        return Matrix3::identity();
    }
    // 1 - cos written stably for small angles
    let half = (0.5 * theta).sin();
    Matrix3::identity() + k * (theta.sin() / theta) + (k * k) * (2.0 * half * half / (theta * theta))
}

/// Ordered product of midpoint exponentials `exp(-i A_t(mid) dt)` over
/// `steps` uniform substeps of `[t0, t1]`.
pub fn wilson_line<T: Trajectory + ?Sized>(
    model: &TripodModel,
    trajectory: &T,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<WilsonLine> {
    if steps == 0 {
        return Err(Error::validation("wilson_line needs at least one step"));
    }
    let start = trajectory.eval(t0).phi;
    let end = trajectory.eval(t1).phi;
    let dt = (t1 - t0) / steps as f64;
    let mut acc = Matrix3::identity();
    if dt != 0.0 {
        for k in 0..steps {
            let mid = trajectory.eval(t0 + (k as f64 + 0.5) * dt);
            let jet = model.gapped_jet(&mid.phi)?;
            // A_t = i * coeff, so -i A_t dt = coeff dt
            let gen = model.kgp_coefficients(&jet, &mid.velocity) * dt;
            acc = rotation_exp(&gen) * acc;
        }
    }
    Ok(WilsonLine {
        start,
        end,
        unitary: ComplexOperator::from_fn(3, |i, j| Complex64::new(acc[(i, j)], 0.0)),
    })
}

/// Wilczek-Zee connection `A_mu^{ab} = i <u_a| d_mu u_b>` of a real frame.
pub fn wilczek_zee_connection(fj: &FrameJet) -> [Matrix2<Complex64>; 2] {
    let u = [fj.frame.u1, fj.frame.u2];
    let du = |b: usize, mu: usize| if b == 0 { fj.du1[mu] } else { fj.du2[mu] };
    [0, 1].map(|mu| {
        Matrix2::from_fn(|a, b| Complex64::new(0.0, u[a].dot(&du(b, mu))))
    })
}

/// `F_{mu nu} = d_mu A_nu - d_nu A_mu - i [A_mu, A_nu]` from the frame built
/// on reference axis `axis`, with the connection differentiated numerically.
pub fn wilczek_zee_curvature(
    model: &TripodModel,
    phi: &Phase,
    mu: usize,
    nu: usize,
    axis: usize,
    fd: FiniteDiff,
) -> Result<Matrix2<Complex64>> {
    let conn = |p: &Phase| -> Result<[Matrix2<Complex64>; 2]> {
        Ok(wilczek_zee_connection(&model.frame_jet_on_axis(p, axis)?))
    };
    let d = |along: usize, component: usize| -> Result<Matrix2<Complex64>> {
        let plus = conn(&phi.shifted(along, fd.step))?[component];
        let minus = conn(&phi.shifted(along, -fd.step))?[component];
        Ok((plus - minus) / Complex64::new(2.0 * fd.step, 0.0))
    };
    let a = conn(phi)?;
    let i = Complex64::new(0.0, 1.0);
    Ok(d(mu, nu)? - d(nu, mu)? - (a[mu] * a[nu] - a[nu] * a[mu]) * i)
}
