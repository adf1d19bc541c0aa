//! Generalized Gell-Mann basis and the density-matrix <-> Bloch-vector map.
//!
//! A density operator of a `D`-level system is written as
//!
//! ```text
//! rho = (1/D) (1 + sqrt(D(D-1)/2) * sum_i r_i lambda_i)
//! ```
//!
//! with `lambda_i` the `D^2 - 1` generalized Gell-Mann matrices normalized to
//! `Tr[lambda_i lambda_j] = 2 delta_ij`. With this scaling pure states sit on
//! the unit sphere `|R| = 1` and the maximally mixed state at `R = 0`.
//!
//! The matrices are enumerated in the usual SU(D) embedding order: for each
//! `k = 2..=D` the symmetric and antisymmetric generators coupling level `k`
//! to the lower levels `j < k`, followed by the `k`-th diagonal generator.
//! For `D = 3` this is the standard Gell-Mann ordering `lambda_1..lambda_8`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Default tolerance for the positivity check of reconstructed states.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Tolerance on `|Tr rho - 1|` accepted when validating density matrices.
pub const TRACE_TOL: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GellMannBasis {
    dimension: usize,
    matrices: Vec<CMatrix>,
}

/// Totally antisymmetric structure constants `f^{ijk}` with
/// `[lambda_i, lambda_j] = 2i f^{ijk} lambda_k`. Indices are zero-based.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    n: usize,
    f: Vec<f64>,
}

impl StructureConstants {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.f[(i * self.n + j) * self.n + k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochVector {
    dimension: usize,
    r: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub physical: bool,
    pub min_eigenvalue: f64,
}

impl GellMannBasis {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidDimension(dimension));
        }
        let d = dimension;
        let zero = Complex64::new(0.0, 0.0);
        let mut matrices = Vec::with_capacity(d * d - 1);
        for k in 1..d {
            for j in 0..k {
                let mut sym = CMatrix::from_element(d, d, zero);
                sym[(j, k)] = Complex64::new(1.0, 0.0);
                sym[(k, j)] = Complex64::new(1.0, 0.0);
                matrices.push(sym);

                let mut anti = CMatrix::from_element(d, d, zero);
                anti[(j, k)] = Complex64::new(0.0, -1.0);
                anti[(k, j)] = Complex64::new(0.0, 1.0);
                matrices.push(anti);
            }
            // diag(1, .., 1, -k, 0, ..) with k ones, normalized to Tr = 2
            let norm = (2.0 / ((k * (k + 1)) as f64)).sqrt();
            let mut diag = CMatrix::from_element(d, d, zero);
            for l in 0..k {
                diag[(l, l)] = Complex64::new(norm, 0.0);
            }
            diag[(k, k)] = Complex64::new(-(k as f64) * norm, 0.0);
            matrices.push(diag);
        }
        Ok(Self { dimension, matrices })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of generators, `D^2 - 1`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, i: usize) -> &CMatrix {
        &self.matrices[i]
    }

    /// `sqrt(D / (2(D-1)))`, the factor taking `Tr[rho lambda_i]` to `r_i`.
    pub fn projection_scale(&self) -> f64 {
        let d = self.dimension as f64;
        (d / (2.0 * (d - 1.0))).sqrt()
    }

    /// `sqrt(D(D-1)/2)`, the factor multiplying `R . lambda` in `rho`.
    pub fn expansion_scale(&self) -> f64 {
        let d = self.dimension as f64;
        (d * (d - 1.0) / 2.0).sqrt()
    }

    pub fn structure_constants(&self) -> StructureConstants {
        let n = self.len();
        let mut f = vec![0.0; n * n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let comm = &self.matrices[i] * &self.matrices[j]
                    - &self.matrices[j] * &self.matrices[i];
                for k in 0..n {
                    // Tr([l_i, l_j] l_k) / (4i)
                    let value = (trace_product(&comm, &self.matrices[k]) / Complex64::new(0.0, 4.0)).re;
                    if value.abs() < 1e-15 {
                        continue;
                    }
                    f[(i * n + j) * n + k] = value;
                    f[(j * n + i) * n + k] = -value;
                }
            }
        }
        StructureConstants { n, f }
    }

    /// Linear Bloch image `r_i = scale * Re Tr[A lambda_i]` of an arbitrary
    /// matrix. Used both for states and for (traceless) time derivatives.
    pub fn components(&self, a: &CMatrix) -> DVector<f64> {
        let scale = self.projection_scale();
        DVector::from_iterator(
            self.len(),
            self.matrices.iter().map(|l| scale * trace_product(a, l).re),
        )
    }

    /// `sum_i v_i lambda_i`.
    pub fn combine(&self, v: &[f64]) -> CMatrix {
        let d = self.dimension;
        let mut out = CMatrix::zeros(d, d);
        for (l, &c) in self.matrices.iter().zip(v) {
            if c != 0.0 {
                out += l * Complex64::new(c, 0.0);
            }
        }
        out
    }

    pub fn to_bloch(&self, rho: &DensityMatrix) -> Result<BlochVector> {
        if rho.dimension() != self.dimension {
            return Err(Error::Validation(format!(
                "density matrix is {0}x{0}, basis dimension is {1}",
                rho.dimension(),
                self.dimension
            )));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Validation(format!("trace {tr} differs from one")));
        }
        Ok(BlochVector { dimension: self.dimension, r: self.components(rho.matrix()) })
    }

    pub fn from_bloch(&self, r: &BlochVector) -> Result<DensityMatrix> {
        if r.len() != self.len() {
            return Err(Error::Validation(format!(
                "Bloch vector has length {}, expected {}",
                r.len(),
                self.len()
            )));
        }
        Ok(DensityMatrix { rho: self.reconstruct(r.as_slice()) })
    }

    /// Matrix `(1/D)(1 + c R.lambda)` for any real slice of the right
    /// length; no validation.
    pub(crate) fn reconstruct(&self, r: &[f64]) -> CMatrix {
        let d = self.dimension as f64;
        let mut rho = self.combine(r) * Complex64::new(self.expansion_scale() / d, 0.0);
        for i in 0..self.dimension {
            rho[(i, i)] += Complex64::new(1.0 / d, 0.0);
        }
        rho
    }

    pub fn physicality(&self, r: &BlochVector, tol: f64) -> Result<Physicality> {
        let rho = self.from_bloch(r)?;
        let min_eigenvalue = rho.min_eigenvalue();
        Ok(Physicality { physical: min_eigenvalue >= -tol, min_eigenvalue })
    }
}

pub fn build_gellmann(dimension: usize) -> Result<GellMannBasis> {
    GellMannBasis::new(dimension)
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

impl BlochVector {
    pub fn new(dimension: usize, r: Vec<f64>) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidDimension(dimension));
        }
        if r.len() != dimension * dimension - 1 {
            return Err(Error::Validation(format!(
                "Bloch vector for D = {dimension} needs {} components, got {}",
                dimension * dimension - 1,
                r.len()
            )));
        }
        Ok(Self { dimension, r: DVector::from_vec(r) })
    }

    /// Maximally mixed state.
    pub fn zeros(dimension: usize) -> Self {
        Self { dimension, r: DVector::zeros(dimension * dimension - 1) }
    }

    pub(crate) fn from_vector(dimension: usize, r: DVector<f64>) -> Self {
        debug_assert_eq!(r.len(), dimension * dimension - 1);
        Self { dimension, r }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.r.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn norm(&self) -> f64 {
        self.r.norm()
    }

    /// `Tr[rho^2] = 1/D + (D-1)/D |R|^2`.
    pub fn purity(&self) -> f64 {
        let d = self.dimension as f64;
        1.0 / d + (d - 1.0) / d * self.r.norm_squared()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { dimension: self.dimension, r: &self.r * factor }
    }
}

pub fn purity(r: &BlochVector) -> f64 {
    r.purity()
}

impl DensityMatrix {
    /// Validates squareness, hermiticity and unit trace. Positivity is not
    /// checked here.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::Validation("density matrix must be square".into()));
        }
        if rho.nrows() < 2 {
            return Err(Error::InvalidDimension(rho.nrows()));
        }
        let asym = (&rho - rho.adjoint()).norm();
        if asym > HERMITIAN_TOL * rho.norm().max(1.0) {
            return Err(Error::Validation(format!("matrix is not Hermitian (|A - A^+| = {asym:.3e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Validation(format!("trace {tr} differs from one")));
        }
        Ok(Self { rho })
    }

    /// Projector onto `psi / |psi|`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Validation("state vector has zero norm".into()));
        }
        let v = DVector::from_iterator(psi.len(), psi.iter().map(|c| c / norm));
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(dimension: usize) -> Self {
        let d = dimension as f64;
        Self { rho: CMatrix::identity(dimension, dimension) * Complex64::new(1.0 / d, 0.0) }
    }

    pub(crate) fn from_matrix_unchecked(rho: CMatrix) -> Self {
        Self { rho }
    }

    pub fn dimension(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn into_matrix(self) -> CMatrix {
        self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.rho, &self.rho).re
    }

    pub fn population(&self, level: usize) -> f64 {
        self.rho[(level, level)].re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        // hermitize first; SymmetricEigen only reads one triangle
        let h = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

/// Haar-random pure state from a normalized complex Gaussian vector.
pub fn random_pure_density<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> DensityMatrix {
    let psi: Vec<Complex64> = (0..dimension)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    DensityMatrix::pure(&psi).expect("Gaussian vector has non-zero norm")
}

/// Convex mixture of `dimension` random pure states with random weights.
pub fn random_mixed_density<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> DensityMatrix {
    let weights: Vec<f64> = (0..dimension).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut rho = CMatrix::zeros(dimension, dimension);
    for w in weights {
        rho += random_pure_density(dimension, rng).into_matrix() * Complex64::new(w / total, 0.0);
    }
    DensityMatrix::from_matrix_unchecked(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dimension_below_two_is_rejected() {
        assert!(matches!(GellMannBasis::new(1), Err(Error::InvalidDimension(1))));
        assert!(matches!(GellMannBasis::new(0), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn qutrit_basis_is_the_standard_gell_mann_set() {
        let b = GellMannBasis::new(3).unwrap();
        let s3 = 3f64.sqrt();
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let expected = [
            [[z, o, z], [o, z, z], [z, z, z]],
            [[z, -i, z], [i, z, z], [z, z, z]],
            [[o, z, z], [z, -o, z], [z, z, z]],
            [[z, z, o], [z, z, z], [o, z, z]],
            [[z, z, -i], [z, z, z], [i, z, z]],
            [[z, z, z], [z, z, o], [z, o, z]],
            [[z, z, z], [z, z, -i], [z, i, z]],
            [[o / s3, z, z], [z, o / s3, z], [z, z, -2.0 * o / s3]],
        ];
        for (n, m) in expected.iter().enumerate() {
            for r in 0..3 {
                for col in 0..3 {
                    assert!((b.matrix(n)[(r, col)] - m[r][col]).norm() < 1e-15, "lambda_{}", n + 1);
                }
            }
        }
    }

    #[test]
    fn qubit_basis_is_pauli() {
        let b = GellMannBasis::new(2).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.matrix(0)[(0, 1)], c(1.0, 0.0));
        assert_eq!(b.matrix(1)[(0, 1)], c(0.0, -1.0));
        assert_eq!(b.matrix(1)[(1, 0)], c(0.0, 1.0));
        assert_eq!(b.matrix(2)[(0, 0)], c(1.0, 0.0));
        assert_eq!(b.matrix(2)[(1, 1)], c(-1.0, 0.0));
    }

    #[test]
    fn orthogonality_and_tracelessness() {
        for d in 2..=5 {
            let b = GellMannBasis::new(d).unwrap();
            assert_eq!(b.len(), d * d - 1);
            for (i, li) in b.matrices().iter().enumerate() {
                assert!(li.trace().norm() < 1e-15);
                assert!((li - li.adjoint()).norm() < 1e-15);
                for (j, lj) in b.matrices().iter().enumerate() {
                    let expected = if i == j { 2.0 } else { 0.0 };
                    assert!((trace_product(li, lj) - c(expected, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn qutrit_structure_constants() {
        let f = GellMannBasis::new(3).unwrap().structure_constants();
        let h = 0.5;
        let r = 3f64.sqrt() / 2.0;
        // one-based (i, j, k) and value
        let listed = [
            ((1, 2, 3), 1.0),
            ((1, 4, 7), h),
            ((1, 6, 5), h),
            ((2, 4, 6), h),
            ((2, 5, 7), h),
            ((3, 4, 5), h),
            ((3, 7, 6), h),
            ((4, 5, 8), r),
            ((6, 7, 8), r),
        ];
        for &((i, j, k), v) in &listed {
            assert_abs_diff_eq!(f.get(i - 1, j - 1, k - 1), v, epsilon = 1e-12);
            // cyclic and odd permutations
            assert_abs_diff_eq!(f.get(j - 1, k - 1, i - 1), v, epsilon = 1e-12);
            assert_abs_diff_eq!(f.get(j - 1, i - 1, k - 1), -v, epsilon = 1e-12);
        }
        let mut nonzero = 0;
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..8 {
                    if f.get(i, j, k).abs() > 1e-12 {
                        nonzero += 1;
                    }
                    if i == j || j == k || i == k {
                        assert_eq!(f.get(i, j, k), 0.0);
                    }
                }
            }
        }
        // nine independent triples, six permutations each
        assert_eq!(nonzero, 9 * 6);
    }

    #[test]
    fn commutators_close_on_the_algebra() {
        let b = GellMannBasis::new(3).unwrap();
        let f = b.structure_constants();
        for i in 0..8 {
            for j in 0..8 {
                let comm = b.matrix(i) * b.matrix(j) - b.matrix(j) * b.matrix(i);
                let coeffs: Vec<f64> = (0..8).map(|k| f.get(i, j, k)).collect();
                let rhs = b.combine(&coeffs) * c(0.0, 2.0);
                assert!((comm - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn maximally_mixed_state_is_origin() {
        let b = GellMannBasis::new(3).unwrap();
        let r = b.to_bloch(&DensityMatrix::maximally_mixed(3)).unwrap();
        assert!(r.norm() < 1e-15);
        let back = b.from_bloch(&BlochVector::zeros(3)).unwrap();
        assert!((back.matrix() - DensityMatrix::maximally_mixed(3).matrix()).norm() < 1e-15);
    }

    #[test]
    fn level_one_projector() {
        let b = GellMannBasis::new(3).unwrap();
        let rho = DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let r = b.to_bloch(&rho).unwrap();
        let expected = [0.0, 0.0, 3f64.sqrt() / 2.0, 0.0, 0.0, 0.0, 0.0, 0.5];
        for (x, e) in r.as_slice().iter().zip(expected) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(r.norm(), 1.0, epsilon = 1e-15);
        let back = b.from_bloch(&r).unwrap();
        assert!((back.matrix() - rho.matrix()).norm() < 1e-15);
    }

    #[test]
    fn wrong_lengths_and_traces_are_rejected() {
        let b = GellMannBasis::new(3).unwrap();
        assert!(BlochVector::new(3, vec![0.0; 7]).is_err());
        let r2 = BlochVector::zeros(2);
        assert!(b.from_bloch(&r2).is_err());
        let doubled = CMatrix::identity(3, 3) * c(2.0 / 3.0, 0.0);
        assert!(DensityMatrix::new(doubled).is_err());
        let mut nonherm = CMatrix::identity(3, 3) * c(1.0 / 3.0, 0.0);
        nonherm[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(nonherm).is_err());
    }

    #[test]
    fn physicality_classification() {
        let b = GellMannBasis::new(3).unwrap();
        let origin = b.physicality(&BlochVector::zeros(3), POSITIVITY_TOL).unwrap();
        assert!(origin.physical);
        assert_abs_diff_eq!(origin.min_eigenvalue, 1.0 / 3.0, epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pure = b.to_bloch(&random_pure_density(3, &mut rng)).unwrap();
        let p = b.physicality(&pure, POSITIVITY_TOL).unwrap();
        assert!(p.physical);
        assert_abs_diff_eq!(p.min_eigenvalue, 0.0, epsilon = 1e-12);

        // r8 = -1.5 gives diag(-1/6, -1/6, 4/3)
        let out = BlochVector::new(3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.5]).unwrap();
        let p = b.physicality(&out, POSITIVITY_TOL).unwrap();
        assert!(!p.physical);
        assert!(p.min_eigenvalue < 0.0);
    }

    #[test]
    fn any_direction_is_physical_near_the_origin() {
        let b = GellMannBasis::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect();
            let r = BlochVector::new(3, v).unwrap();
            let eps = 0.5 / r.norm();
            assert!(b.physicality(&r.scaled(eps), POSITIVITY_TOL).unwrap().physical);
        }
    }

    #[test]
    fn purity_closed_form() {
        let r = BlochVector::zeros(3);
        assert_abs_diff_eq!(r.purity(), 1.0 / 3.0, epsilon = 1e-15);
        let half = BlochVector::new(3, vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(half.purity(), 0.5, epsilon = 1e-15);
        let b = GellMannBasis::new(3).unwrap();
        assert_abs_diff_eq!(b.from_bloch(&half).unwrap().purity(), 0.5, epsilon = 1e-15);
    }
}
