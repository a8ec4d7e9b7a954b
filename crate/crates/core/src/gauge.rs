//! Kato gauge potential of an arbitrary Hermitian family, built from
//! finite-difference derivatives of its eigenprojectors:
//! `A_mu = (i/2) sum_n [d_mu Pi^n, Pi^n]`.

use num_complex::Complex64;

use crate::drive::TorusPoint;
use crate::error::{Error, Result};
use crate::operator::{
    commutator, spectral_decompose, ComplexOperator, FiniteDiff, SpectralDecomposition,
};

/// Spectral decomposition at a point together with `d_mu Pi^n` for every
/// cluster `n`.
#[derive(Debug, Clone)]
pub struct ProjectorDerivatives {
    pub spectrum: SpectralDecomposition,
    /// `derivatives[n]` is `d_axis Pi^n`.
    pub derivatives: Vec<ComplexOperator>,
}

/// Differentiates every eigenprojector of `h_map` along `axis`.
///
/// The cluster structure at both stencil points must match the one at `phi`
/// (same count and multiplicities, each energy closer to its own cluster than
/// half the smallest gap); otherwise a level crossing sits inside the stencil.
pub fn projector_derivatives<const D: usize, F>(
    h_map: &F,
    phi: &TorusPoint<D>,
    axis: usize,
    fd: FiniteDiff,
    grouping_tol: f64,
) -> Result<ProjectorDerivatives>
where
    F: Fn(&TorusPoint<D>) -> Result<ComplexOperator>,
{
    let spectrum = spectral_decompose(&h_map(phi)?, grouping_tol)?;
    let half_gap = 0.5 * spectrum.min_gap();
    let stencil = |h: f64| -> Result<SpectralDecomposition> {
        let sd = spectral_decompose(&h_map(&phi.shifted(axis, h))?, grouping_tol)?;
        let same_shape = sd.clusters.len() == spectrum.clusters.len()
            && sd
                .clusters
                .iter()
                .zip(&spectrum.clusters)
                .all(|(a, b)| a.multiplicity == b.multiplicity && (a.energy - b.energy).abs() < half_gap);
        if same_shape {
            Ok(sd)
        } else {
            Err(Error::ClusterChange(format!(
                "axis {axis}, step {h:e}: energies {:?} vs {:?}",
                sd.energies(),
                spectrum.energies()
            )))
        }
    };

    let central = |h: f64| -> Result<Vec<ComplexOperator>> {
        let plus = stencil(h)?;
        let minus = stencil(-h)?;
        Ok(plus
            .clusters
            .iter()
            .zip(&minus.clusters)
            .map(|(p, m)| (&p.projector - &m.projector).scale_real(0.5 / h))
            .collect())
    };

    let coarse = central(fd.step)?;
    let derivatives = if fd.richardson {
        let fine = central(0.5 * fd.step)?;
        fine.iter()
            .zip(&coarse)
            .map(|(f, c)| &f.scale_real(4.0 / 3.0) - &c.scale_real(1.0 / 3.0))
            .collect()
    } else {
        coarse
    };
    Ok(ProjectorDerivatives {
        spectrum,
        derivatives,
    })
}

/// Directional gauge potential `A_axis` of the family `h_map`.
pub fn kgp_direction_generic<const D: usize, F>(
    h_map: &F,
    phi: &TorusPoint<D>,
    axis: usize,
    fd: FiniteDiff,
    grouping_tol: f64,
) -> Result<ComplexOperator>
where
    F: Fn(&TorusPoint<D>) -> Result<ComplexOperator>,
{
    let pd = projector_derivatives(h_map, phi, axis, fd, grouping_tol)?;
    let dim = pd.spectrum.dim();
    let mut acc = ComplexOperator::zeros(dim);
    for (cluster, dpi) in pd.spectrum.clusters.iter().zip(&pd.derivatives) {
        acc = acc + commutator(dpi, &cluster.projector)?;
    }
    Ok(acc.scale(Complex64::new(0.0, 0.5)))
}

/// `A_t = sum_mu phidot^mu A_mu` for an arbitrary gapped Hermitian family.
pub fn kgp_generic<const D: usize, F>(
    h_map: F,
    phi: &TorusPoint<D>,
    velocity: &[f64; D],
    fd: FiniteDiff,
    grouping_tol: f64,
) -> Result<ComplexOperator>
where
    F: Fn(&TorusPoint<D>) -> Result<ComplexOperator>,
{
    let h0 = h_map(phi)?;
    let mut acc = ComplexOperator::zeros(h0.dim());
    for (axis, &v) in velocity.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let a = kgp_direction_generic(&h_map, phi, axis, fd, grouping_tol)?;
        acc = acc + a.scale_real(v);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::Phase;
    use crate::operator::DEFAULT_GROUPING_TOL;
    use crate::tripod::TripodModel;

    fn pt(a: f64, b: f64) -> Phase {
        TorusPoint::new([a, b])
    }

    #[test]
    fn diagonal_blocks_vanish() {
        let model = TripodModel::two_tone(1.0, 0.5);
        let h = |p: &Phase| Ok(model.hamiltonian(p));
        for &(a, b) in &[(0.3, 1.1), (2.5, 4.4), (5.9, 0.1)] {
            let phi = pt(a, b);
            let sd = spectral_decompose(&h(&phi).unwrap(), DEFAULT_GROUPING_TOL).unwrap();
            for mu in 0..2 {
                let amu = kgp_direction_generic(&h, &phi, mu, FiniteDiff::default(), DEFAULT_GROUPING_TOL)
                    .unwrap();
                assert!(amu.hermiticity_residual() < 1e-10);
                for c in &sd.clusters {
                    let block = &(&c.projector * &amu) * &c.projector;
                    assert!(block.max_abs() < 1e-8, "block {}", block.max_abs());
                }
            }
        }
    }

    #[test]
    fn ground_block_matches_tripod_formula() {
        let model = TripodModel::two_tone(1.0, 0.5);
        let h = |p: &Phase| Ok(model.hamiltonian(p));
        let phi = pt(1.0, 2.0);
        let v = [0.4, 0.6];
        let generic = kgp_generic(h, &phi, &v, FiniteDiff::default(), DEFAULT_GROUPING_TOL).unwrap();
        let projected = model.kgp_projected(&phi, &v).unwrap();
        let diff = &generic.block(0, 3) - &projected.block(0, 3);
        assert!(diff.max_abs() < 1e-6, "diff {}", diff.max_abs());
    }

    #[test]
    fn constant_family_has_no_potential() {
        let h = |_: &Phase| Ok(ComplexOperator::diag(&[0.0, 0.0, 1.0]));
        let a = kgp_generic(h, &pt(0.1, 0.2), &[1.0, 1.0], FiniteDiff::default(), 1e-8).unwrap();
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn level_crossing_is_reported() {
        // eigenvalues cos(phi1) and -cos(phi1) cross at phi1 = pi/2
        let h = |p: &Phase| {
            let x = p.coords()[0].cos();
            Ok(ComplexOperator::diag(&[x, -x]))
        };
        let phi = pt(std::f64::consts::FRAC_PI_2 + 1e-6, 0.0);
        let res = kgp_direction_generic(&h, &phi, 0, FiniteDiff::with_step(1e-5), 1e-8);
        assert!(matches!(res, Err(Error::ClusterChange(_))));
    }
}
