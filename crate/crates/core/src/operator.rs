//! Dense complex linear algebra for the few-level Hilbert spaces used here.
//!
//! Everything is small (dimension 3 or 4 in the shipped models), so the
//! operators are plain dense matrices and every function allocates freely.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::drive::TorusPoint;
use crate::error::{Error, Result};

/// Largest `|H - H^dagger|` entry tolerated for a Hermitian operator.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default energy tolerance for merging eigenvalues into one cluster.
pub const DEFAULT_GROUPING_TOL: f64 = 1e-8;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

const EIGEN_MAX_ITER: usize = 10_000;

/// A square complex matrix acting on a `dim`-level system (hbar = 1).
#[derive(Clone, PartialEq)]
pub struct ComplexOperator(DMatrix<Complex64>);

impl ComplexOperator {
    pub fn zeros(dim: usize) -> Self {
        ComplexOperator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        ComplexOperator(DMatrix::identity(dim, dim))
    }

    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows(),
                right: matrix.ncols(),
            });
        }
        Ok(ComplexOperator(matrix))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        ComplexOperator(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds an operator from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |i, j| {
            assert_eq!(rows[i].len(), dim, "row {i} has wrong length");
            Complex64::new(rows[i][j], 0.0)
        })
    }

    /// Diagonal operator with real entries.
    pub fn diag(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// `|a><b|`
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        ComplexOperator(a.as_vector() * b.as_vector().adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.0[(row, col)] = value;
    }

    pub fn adjoint(&self) -> Self {
        ComplexOperator(self.0.adjoint())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        ComplexOperator(&self.0 * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |H - H^dagger|` over all entries.
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.0 - self.0.adjoint())
            .iter()
            .fold(0.0, |acc, z| acc.max(z.norm()))
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_residual() < HERMITIAN_TOL
    }

    /// Square sub-block `rows x rows` starting at `offset`.
    pub fn block(&self, offset: usize, size: usize) -> Self {
        ComplexOperator(self.0.view((offset, offset), (size, size)).into_owned())
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        check_dims(self.dim(), state.dim())?;
        Ok(StateVector(&self.0 * state.as_vector()))
    }

    /// `<a|self|b>`
    pub fn matrix_element(&self, a: &StateVector, b: &StateVector) -> Result<Complex64> {
        check_dims(self.dim(), a.dim())?;
        check_dims(self.dim(), b.dim())?;
        Ok(a.as_vector().dotc(&(&self.0 * b.as_vector())))
    }

    pub fn expectation(&self, state: &StateVector) -> Result<Complex64> {
        self.matrix_element(state, state)
    }

    /// Dense matrix exponential.
    pub fn exp(&self) -> Self {
        ComplexOperator(self.0.clone().exp())
    }

    pub fn checked_mul(&self, rhs: &Self) -> Result<Self> {
        check_dims(self.dim(), rhs.dim())?;
        Ok(ComplexOperator(&self.0 * &rhs.0))
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self> {
        check_dims(self.dim(), rhs.dim())?;
        Ok(ComplexOperator(&self.0 + &rhs.0))
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self> {
        check_dims(self.dim(), rhs.dim())?;
        Ok(ComplexOperator(&self.0 - &rhs.0))
    }
}

impl fmt::Debug for ComplexOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexOperator{}", self.0)
    }
}

// The operator overloads panic on dimension mismatch, like nalgebra itself.
// Use the `checked_*` methods where the dimensions come from user input.
impl<'a> Add<&'a ComplexOperator> for &'a ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: &ComplexOperator) -> ComplexOperator {
        ComplexOperator(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a ComplexOperator> for &'a ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: &ComplexOperator) -> ComplexOperator {
        ComplexOperator(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a ComplexOperator> for &'a ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: &ComplexOperator) -> ComplexOperator {
        ComplexOperator(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexOperator {
    type Output = ComplexOperator;
    fn neg(self) -> ComplexOperator {
        ComplexOperator(-&self.0)
    }
}

impl Add for ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: ComplexOperator) -> ComplexOperator {
        ComplexOperator(self.0 + rhs.0)
    }
}

impl Sub for ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: ComplexOperator) -> ComplexOperator {
        ComplexOperator(self.0 - rhs.0)
    }
}

/// A pure state `|psi>`.
#[derive(Clone, PartialEq)]
pub struct StateVector(DVector<Complex64>);

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        StateVector(DVector::from_vec(amplitudes))
    }

    pub fn from_real(amplitudes: &[f64]) -> Self {
        StateVector(DVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    /// Basis vector `|index>` in a `dim`-level space.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = Complex64::new(1.0, 0.0);
        StateVector(v)
    }

    /// Rescales to unit norm; fails on the zero vector.
    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::validation("cannot normalize a zero or non-finite state"));
        }
        Ok(StateVector(self.0 / Complex64::new(n, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.0.dotc(&other.0))
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateVector{:?}", self.0.as_slice())
    }
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left, right })
    }
}

/// `AB - BA`
pub fn commutator(a: &ComplexOperator, b: &ComplexOperator) -> Result<ComplexOperator> {
    check_dims(a.dim(), b.dim())?;
    Ok(ComplexOperator(&a.0 * &b.0 - &b.0 * &a.0))
}

/// One eigenvalue cluster: energy, degeneracy and the orthogonal projector
/// onto its eigenspace.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub energy: f64,
    pub multiplicity: usize,
    pub projector: ComplexOperator,
}

/// `H = sum_n e_n Pi^n` with clusters sorted by ascending energy.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub clusters: Vec<Cluster>,
    pub grouping_tol: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).sum()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.energy).collect()
    }

    /// Index of the cluster whose energy lies within `grouping_tol` of `energy`.
    pub fn cluster_at(&self, energy: f64) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| (c.energy - energy).abs() <= self.grouping_tol)
    }

    /// `sum_n e_n Pi^n`
    pub fn reconstruct(&self) -> ComplexOperator {
        let dim = self.dim();
        self.clusters
            .iter()
            .fold(ComplexOperator::zeros(dim), |acc, c| {
                acc + c.projector.scale_real(c.energy)
            })
    }

    /// Smallest distance between neighbouring cluster energies.
    pub fn min_gap(&self) -> f64 {
        self.clusters
            .windows(2)
            .map(|w| w[1].energy - w[0].energy)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Eigendecomposition of a Hermitian operator with degenerate eigenvalues
/// merged into clusters.
///
/// Sorted eigenvalues are chained into one cluster while consecutive values
/// differ by at most `grouping_tol`. Projectors are assembled from the
/// orthonormal eigenvectors of each cluster.
pub fn spectral_decompose(h: &ComplexOperator, grouping_tol: f64) -> Result<SpectralDecomposition> {
    if !(grouping_tol > 0.0) {
        return Err(Error::validation("grouping_tol must be positive"));
    }
    let residual = h.hermiticity_residual();
    if !(residual < HERMITIAN_TOL) {
        return Err(Error::validation(format!(
            "operator is not Hermitian (residual {residual:.3e})"
        )));
    }
    let dim = h.dim();
    let eig = SymmetricEigen::try_new(h.0.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &i in &order {
        let e = eig.eigenvalues[i];
        match groups.last_mut() {
            Some(g) if e - last <= grouping_tol => g.push(i),
            _ => groups.push(vec![i]),
        }
        last = e;
    }

    let clusters = groups
        .into_iter()
        .map(|members| {
            let energy =
                members.iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / members.len() as f64;
            let mut projector = DMatrix::zeros(dim, dim);
            for &i in &members {
                let v = eig.eigenvectors.column(i);
                projector += &v * v.adjoint();
            }
            Cluster {
                energy,
                multiplicity: members.len(),
                projector: ComplexOperator(projector),
            }
        })
        .collect();

    Ok(SpectralDecomposition {
        clusters,
        grouping_tol,
    })
}

/// Central-difference settings for operator-valued maps on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiff {
    pub step: f64,
    /// Combine steps `h` and `h/2` to cancel the `h^2` error term.
    pub richardson: bool,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        FiniteDiff {
            step: DEFAULT_FD_STEP,
            richardson: false,
        }
    }
}

impl FiniteDiff {
    pub fn with_step(step: f64) -> Self {
        FiniteDiff {
            step,
            richardson: false,
        }
    }
}

/// `d map / d phi^axis` at `phi` by central differences.
pub fn finite_diff_operator<const D: usize, F>(
    map: F,
    phi: &TorusPoint<D>,
    axis: usize,
    fd: FiniteDiff,
) -> Result<ComplexOperator>
where
    F: Fn(&TorusPoint<D>) -> Result<ComplexOperator>,
{
    if axis >= D {
        return Err(Error::validation(format!("axis {axis} out of range for d = {D}")));
    }
    if !(fd.step > 0.0) {
        return Err(Error::validation("finite-difference step must be positive"));
    }
    let central = |h: f64| -> Result<ComplexOperator> {
        let plus = map(&phi.shifted(axis, h))?;
        let minus = map(&phi.shifted(axis, -h))?;
        Ok(plus.checked_sub(&minus)?.scale_real(0.5 / h))
    };
    let coarse = central(fd.step)?;
    if !fd.richardson {
        return Ok(coarse);
    }
    let fine = central(0.5 * fd.step)?;
    fine.scale_real(4.0 / 3.0).checked_sub(&coarse.scale_real(1.0 / 3.0))
}
