//! Spectral analysis of the real, non-symmetric Liouvillian matrix `M`:
//! eigendecomposition with left and right vectors, gap, steady states,
//! exceptional-point scans, and mode expansion of the affine dynamics.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bloch::{BlochVector, GellMannBasis};
use crate::error::{Error, Result};
use crate::liouvillian::LiouvillianAffine;

/// Real parts below this magnitude count as zero modes.
pub const ZERO_TOL: f64 = 1e-10;

/// Per-eigenvalue condition number above which an eigenbasis is treated as
/// defective (expansion refused, EP candidate confirmed).
pub const CONDITION_THRESHOLD: f64 = 1e6;

/// EP confirmation: branch separation below this fraction of `|M|_F`.
pub const SEPARATION_FRACTION: f64 = 1e-6;

/// Condition estimate above which `M` is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Sorted by real part, then imaginary part, both descending.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors; the largest component is real positive.
    pub right_vectors: Vec<DVector<Complex64>>,
    /// Left eigenvectors normalized so that `<L_i, R_i> = 1`.
    pub left_vectors: Vec<DVector<Complex64>>,
    /// `|L_i| |R_i| / |<L_i, R_i>|` per eigenvalue.
    pub condition: Vec<f64>,
    /// Two-norm condition number of the matrix of right vectors.
    pub vector_condition: f64,
    /// Frobenius norm of the decomposed matrix.
    pub matrix_norm: f64,
}

fn inner(a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn cmp_eigen(a: &Complex64, b: &Complex64) -> Ordering {
    b.re.partial_cmp(&a.re)
        .unwrap_or(Ordering::Equal)
        .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
}

/// Scales to unit length and rotates the largest component onto the
/// positive real axis.
fn fix_phase(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let mut k = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        // small bias towards the first index keeps ties deterministic
        if z.norm() > best * (1.0 + 1e-9) {
            best = z.norm();
            k = i;
        }
    }
    let phase = v[k].conj() / v[k].norm();
    v *= phase / norm;
    v[k] = Complex64::new(v[k].re, 0.0);
    v
}

/// The `k` right singular vectors of `a` with smallest singular values.
/// Up to `k` right singular vectors of `a` with smallest singular values.
/// Beyond the first, only vectors with singular value below `cut` are
/// kept; a defective cluster repeats its last genuine vector instead.
fn complex_null_space(a: DMatrix<Complex64>, k: usize, cut: f64) -> Result<Vec<DVector<Complex64>>> {
    let n = a.ncols();
    let budget = 1000 * n.max(10);
    let svd = SVD::try_new(a, false, true, f64::EPSILON, budget)
        .ok_or(Error::NoConvergence { iterations: budget })?;
    let vt = svd.v_t.expect("requested V^T");
    let mut out: Vec<DVector<Complex64>> = vec![vt.row(n - 1).adjoint()];
    for r in (n - k..n - 1).rev() {
        if svd.singular_values[r] <= cut {
            out.push(vt.row(r).adjoint());
        } else {
            out.push(out[out.len() - 1].clone());
        }
    }
    Ok(out)
}

fn eigen_vectors_for(m: &DMatrix<f64>, mu: Complex64, k: usize, transpose: bool) -> Result<Vec<DVector<Complex64>>> {
    let n = m.nrows();
    let base = if transpose { m.transpose() } else { m.clone() };
    let cut = 1e-8 * m.norm().max(1.0);
    let mut a = base.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        a[(i, i)] -= mu;
    }
    let vecs = complex_null_space(a, k, cut)?;
    if mu.im == 0.0 {
        // real shift: the singular vectors are real up to a global phase
        return Ok(vecs.into_iter().map(|v| fix_phase(v).map(|z| Complex64::new(z.re, 0.0))).collect());
    }
    Ok(vecs)
}

/// Eigenvalues of a real square matrix (Hessenberg reduction followed by
/// the implicitly shifted QR iteration).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Validation(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut eig: Vec<Complex64> = a
        .eigenvalues()
        // the QR sweep allots 30 * max(10, n) iterations
        .map_err(|_| Error::NoConvergence { iterations: 30 * n.max(10) })?
        .into_iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    eig.sort_by(cmp_eigen);
    Ok(eig)
}

pub fn eigendecompose(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let eig = eigenvalues(m)?;
    let n = eig.len();
    let matrix_norm = m.norm();
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: eig,
            right_vectors: Vec::new(),
            left_vectors: Vec::new(),
            condition: Vec::new(),
            vector_condition: 1.0,
            matrix_norm,
        });
    }
    let tol = 1e-10 * matrix_norm.max(1.0);

    // Group numerically coincident eigenvalues; each cluster gets an
    // orthonormal basis of the corresponding (approximate) null space.
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if cluster_of[i] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        cluster_of[i] = id;
        for j in i + 1..n {
            if cluster_of[j] == usize::MAX
                && (eig[j] - eig[i]).norm() < tol
                && (eig[j].im == 0.0) == (eig[i].im == 0.0)
                && eig[j].im.signum() == eig[i].im.signum()
            {
                cluster_of[j] = id;
                members.push(j);
            }
        }
        clusters.push(members);
    }
    let center = |c: &Vec<usize>| -> Complex64 {
        c.iter().map(|&i| eig[i]).sum::<Complex64>() / c.len() as f64
    };

    let mut right: Vec<DVector<Complex64>> = vec![DVector::zeros(n); n];
    let mut done = vec![false; clusters.len()];
    // upper half-plane and real clusters first, lower half by conjugation
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by_key(|&c| eig[clusters[c][0]].im < 0.0);
    for c in order {
        let members = &clusters[c];
        let mu = center(members);
        let partner = if mu.im < 0.0 {
            (0..clusters.len()).find(|&o| {
                done[o] && clusters[o].len() == members.len() && (center(&clusters[o]) - mu.conj()).norm() < tol
            })
        } else {
            None
        };
        let vecs: Vec<DVector<Complex64>> = match partner {
            Some(o) => clusters[o].iter().map(|&i| right[i].map(|z| z.conj())).collect(),
            None => eigen_vectors_for(m, mu, members.len(), false)?
                .into_iter()
                .map(fix_phase)
                .collect(),
        };
        for (&i, v) in members.iter().zip(vecs) {
            right[i] = v;
        }
        done[c] = true;
    }

    let mut vmat = DMatrix::<Complex64>::zeros(n, n);
    for (j, v) in right.iter().enumerate() {
        vmat.set_column(j, v);
    }
    let sv = vmat.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let vector_condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let inverse = if vector_condition < 1e13 { vmat.clone().try_inverse() } else { None };
    let (left, condition): (Vec<DVector<Complex64>>, Vec<f64>) = match inverse {
        Some(inv) => (0..n)
            .map(|i| {
                let l: DVector<Complex64> = inv.row(i).adjoint();
                let c = l.norm();
                (l, c)
            })
            .unzip(),
        None => {
            // defective or nearly so: pair each right vector with the left
            // null vector of its own eigenvalue
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                // M real: the left vector solves (M^T - conj(mu)) l = 0
                let l = eigen_vectors_for(m, eig[i].conj(), 1, true)?.remove(0);
                let overlap = inner(&l, &right[i]);
                if overlap.norm() > f64::EPSILON * l.norm() {
                    let l = l / overlap.conj();
                    let c = l.norm();
                    out.push((l, c));
                } else {
                    out.push((l, f64::INFINITY));
                }
            }
            out.into_iter().unzip()
        }
    };

    Ok(SpectralDecomposition { eigenvalues: eig, right_vectors: right, left_vectors: left, condition, vector_condition, matrix_norm })
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_condition(&self) -> f64 {
        self.condition.iter().copied().fold(0.0, f64::max)
    }

    /// `|M R_i - mu_i R_i|` for every eigenpair.
    pub fn residuals(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let mc = m.map(|x| Complex64::new(x, 0.0));
        self.eigenvalues
            .iter()
            .zip(&self.right_vectors)
            .map(|(mu, r)| (&mc * r - r * *mu).norm())
            .collect()
    }

    /// Eigenvalues within `imag_tol` of the real axis.
    pub fn real_count(&self, imag_tol: f64) -> usize {
        self.eigenvalues.iter().filter(|z| z.im.abs() <= imag_tol).count()
    }
}

/// Smallest non-zero decay rate `min Re(-mu)` over eigenvalues with
/// `Re(-mu) > zero_tol`; zero when there is none.
pub fn liouvillian_gap(spec: &SpectralDecomposition, zero_tol: f64) -> Result<f64> {
    if spec.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let gap = spec.eigenvalues.iter().map(|z| -z.re).filter(|&r| r > zero_tol).fold(f64::INFINITY, f64::min);
    Ok(if gap.is_finite() { gap } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SteadyState {
    /// `R = -M^{-1} b`.
    Unique(DVector<f64>),
    /// `M` is singular: stationary states form `particular + span(null_space)`
    /// (when `consistent`).
    Manifold {
        particular: DVector<f64>,
        null_space: Vec<DVector<f64>>,
        consistent: bool,
        condition: f64,
    },
}

impl SteadyState {
    pub fn is_unique(&self) -> bool {
        matches!(self, SteadyState::Unique(_))
    }

    /// The unique solution or the least-squares particular solution.
    pub fn vector(&self) -> &DVector<f64> {
        match self {
            SteadyState::Unique(r) => r,
            SteadyState::Manifold { particular, .. } => particular,
        }
    }

    pub fn bloch(&self, dimension: usize) -> Result<BlochVector> {
        BlochVector::new(dimension, self.vector().iter().copied().collect())
    }
}

pub fn steady_state(gen: &LiouvillianAffine) -> SteadyState {
    let n = gen.len();
    if n == 0 {
        return SteadyState::Unique(DVector::zeros(0));
    }
    let svd = SVD::new(gen.m.clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition < SINGULAR_CONDITION {
        let r = gen.m.clone().lu().solve(&(-&gen.b)).expect("non-singular by condition estimate");
        return SteadyState::Unique(r);
    }
    let cut = smax * n as f64 * f64::EPSILON * 1e3;
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let null_space: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cut.max(smax / SINGULAR_CONDITION))
        .map(|i| vt.row(i).transpose())
        .collect();
    let pinv = svd.pseudo_inverse(cut.max(smax / SINGULAR_CONDITION)).expect("U and V^T computed");
    let particular = -(pinv * &gen.b);
    let residual = (&gen.m * &particular + &gen.b).norm();
    SteadyState::Manifold {
        consistent: residual <= 1e-9 * gen.b.norm().max(1.0),
        particular,
        null_space,
        condition,
    }
}

/// Coefficients `c_i = <L_i, R0>` so that `R0 = sum c_i R_i`.
pub fn expand_initial(spec: &SpectralDecomposition, r0: &[f64]) -> Result<Vec<Complex64>> {
    if r0.len() != spec.len() {
        return Err(Error::Validation(format!(
            "vector has length {}, spectrum has {} modes",
            r0.len(),
            spec.len()
        )));
    }
    let cond = spec.max_condition();
    if !(cond <= CONDITION_THRESHOLD) {
        return Err(Error::IllConditioned { condition: cond });
    }
    let r = DVector::from_iterator(r0.len(), r0.iter().map(|&x| Complex64::new(x, 0.0)));
    let coeffs: Vec<Complex64> = spec.left_vectors.iter().map(|l| inner(l, &r)).collect();
    let mut back = DVector::<Complex64>::zeros(r0.len());
    for (c, v) in coeffs.iter().zip(&spec.right_vectors) {
        back += v * *c;
    }
    let residual = (back - r).norm();
    if residual > 1e-9 * r0.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0) {
        return Err(Error::IllConditioned { condition: spec.vector_condition });
    }
    Ok(coeffs)
}

/// Projections `p_i = <L_i, b>` of the pump onto the modes.
pub fn projected_pump(spec: &SpectralDecomposition, b: &DVector<f64>) -> Vec<Complex64> {
    let bc = b.map(|x| Complex64::new(x, 0.0));
    spec.left_vectors.iter().map(|l| inner(l, &bc)).collect()
}

/// Driven evolution of a single mode:
/// `R_i(t) = [e^{mu t} + p_i (e^{mu t} - 1)/mu] R_i`.
pub fn mode_evolution(spec: &SpectralDecomposition, b: &DVector<f64>, i: usize, t: f64) -> Result<DVector<Complex64>> {
    if i >= spec.len() {
        return Err(Error::Validation(format!("mode index {i} out of range")));
    }
    let mu = spec.eigenvalues[i];
    let p = projected_pump(spec, b)[i];
    let e = (mu * t).exp();
    let scale = if mu.norm() <= ZERO_TOL {
        if p.norm() > ZERO_TOL {
            return Err(Error::SecularGrowth { index: i, pump: p.norm() });
        }
        e
    } else {
        e + p * (e - 1.0) / mu
    };
    Ok(&spec.right_vectors[i] * scale)
}

/// `R(t)` of the constant-generator problem `dR/dt = M R + b` summed over
/// modes, `sum_i [c_i e^{mu_i t} + p_i phi(mu_i, t)] R_i` with
/// `phi = (e^{mu t} - 1)/mu`, or `t` for zero modes.
pub fn spectral_solution(spec: &SpectralDecomposition, b: &DVector<f64>, r0: &[f64], t: f64) -> Result<DVector<f64>> {
    let c = expand_initial(spec, r0)?;
    let p = projected_pump(spec, b);
    let mut out = DVector::<Complex64>::zeros(spec.len());
    for i in 0..spec.len() {
        let mu = spec.eigenvalues[i];
        let e = (mu * t).exp();
        let phi = if mu.norm() <= ZERO_TOL { Complex64::new(t, 0.0) } else { (e - 1.0) / mu };
        out += &spec.right_vectors[i] * (c[i] * e + p[i] * phi);
    }
    Ok(out.map(|z| z.re))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenvectorPhysicality {
    pub physical: bool,
    /// Largest `s` with `s * R_i / |R_i|` a valid state (real modes only).
    pub max_length: Option<f64>,
}

/// Complex modes are unphysical outright. A real mode is rescaled to the
/// largest length for which `(1/D)(1 + c s u.lambda)` stays positive,
/// `s = 1 / (c |a_min|)` with `a_min` the lowest eigenvalue of `u.lambda`,
/// and that state is checked with the basis positivity test.
pub fn eigenvector_physicality(
    basis: &GellMannBasis,
    eigenvalue: Complex64,
    vector: &DVector<Complex64>,
    imag_tol: f64,
) -> EigenvectorPhysicality {
    let unphysical = EigenvectorPhysicality { physical: false, max_length: None };
    if eigenvalue.im.abs() > imag_tol || vector.len() != basis.len() {
        return unphysical;
    }
    let norm = vector.norm();
    let re: Vec<f64> = vector.iter().map(|z| z.re).collect();
    let im_norm = vector.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    if norm == 0.0 || im_norm > imag_tol.max(1e-9) * norm {
        return unphysical;
    }
    let re_norm = re.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: Vec<f64> = re.iter().map(|x| x / re_norm).collect();
    let s = max_physical_length(basis, &u);
    let scaled = BlochVector::new(basis.dimension(), u.iter().map(|x| x * s).collect());
    let physical = scaled
        .and_then(|r| basis.physicality(&r, 1e-9))
        .map(|p| p.physical)
        .unwrap_or(false);
    EigenvectorPhysicality { physical, max_length: Some(s) }
}

/// Largest `s >= 0` with `(1/D)(1 + c s u.lambda) >= 0` for unit `u`.
pub fn max_physical_length(basis: &GellMannBasis, u: &[f64]) -> f64 {
    let a = basis.combine(u);
    let herm = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let a_min = herm.symmetric_eigenvalues().min();
    if a_min >= 0.0 {
        return f64::INFINITY;
    }
    1.0 / (basis.expansion_scale() * -a_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EpKind {
    /// A complex-conjugate pair becomes real as the coupling grows.
    Normal,
    /// Two real branches acquire imaginary parts as the coupling grows.
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EPRecord {
    pub gamma_star: f64,
    /// Branch indices (as tracked over the grid) of the merging pair.
    pub pair: (usize, usize),
    pub min_separation: f64,
    pub peak_condition: f64,
    pub kind: EpKind,
    /// `|<R_i, R_j>|` of the merging right vectors at the complex-side end
    /// of the refined bracket.
    pub overlap: f64,
    /// Whether the coalescence diagnostics pass the detection thresholds.
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanWarning {
    pub interval: (f64, f64),
    pub message: String,
}

/// One grid point with eigenvalues in tracked branch order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub gamma: f64,
    pub eigenvalues: Vec<Complex64>,
    pub condition: Vec<f64>,
    pub physical: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpScan {
    pub points: Vec<ScanPoint>,
    pub records: Vec<EPRecord>,
    pub warnings: Vec<ScanWarning>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Relative tolerance on `|Im mu|` (times `max(1, |M|_F)`) for counting
    /// an eigenvalue as real.
    pub imag_tol: f64,
    /// Bisection stops once the bracket is narrower than this; zero means
    /// machine resolution.
    pub resolution: f64,
    /// Maximal recursion depth of step halving during branch tracking.
    pub max_halving: u32,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { imag_tol: 1e-7, resolution: 0.0, max_halving: 8 }
    }
}

fn imag_tol_for(opts: &ScanOptions, m: &DMatrix<f64>) -> f64 {
    opts.imag_tol * m.norm().max(1.0)
}

/// Greedy nearest-neighbour assignment of `next` to the predicted branch
/// values. Returns the permutation (branch -> index into `next`) and
/// whether any assignment was ambiguous.
fn assign(predicted: &[Complex64], next: &[Complex64], same_tol: f64) -> (Vec<usize>, bool) {
    let n = predicted.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in predicted.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for &(_, i, j) in &pairs {
        if perm[i] == usize::MAX && !taken[j] {
            perm[i] = j;
            taken[j] = true;
        }
    }
    let mut ambiguous = false;
    for (i, p) in predicted.iter().enumerate() {
        let chosen = next[perm[i]];
        let d1 = (p - chosen).norm();
        for (j, q) in next.iter().enumerate() {
            if j != perm[i] && (q - chosen).norm() > same_tol && (p - q).norm() < 2.0 * d1 {
                ambiguous = true;
            }
        }
    }
    (perm, ambiguous)
}

struct Tracker<'a, F> {
    builder: &'a F,
    opts: ScanOptions,
}

impl<F> Tracker<'_, F>
where
    F: Fn(f64) -> Result<LiouvillianAffine>,
{
    fn eig_at(&self, gamma: f64) -> Result<Vec<Complex64>> {
        eigenvalues(&(self.builder)(gamma)?.m)
    }

    /// Continues branch values from `(g0, prev)` to `g1`, halving the step
    /// while the assignment is ambiguous. Returns the values in branch order
    /// and whether ambiguity persisted at maximal depth.
    fn step(
        &self,
        g0: f64,
        prev: &[Complex64],
        slope: Option<&[Complex64]>,
        g1: f64,
        next: &[Complex64],
        depth: u32,
    ) -> Result<(Vec<Complex64>, bool)> {
        let h = g1 - g0;
        let predicted: Vec<Complex64> = match slope {
            Some(s) => prev.iter().zip(s).map(|(p, d)| p + d * h).collect(),
            None => prev.to_vec(),
        };
        let scale = prev.iter().chain(next).map(|z| z.norm()).fold(1.0, f64::max);
        let (perm, ambiguous) = assign(&predicted, next, 1e-8 * scale);
        if !ambiguous || depth >= self.opts.max_halving || h == 0.0 {
            return Ok((perm.iter().map(|&j| next[j]).collect(), ambiguous));
        }
        let gm = 0.5 * (g0 + g1);
        let mid = self.eig_at(gm)?;
        let (mid_tracked, a1) = self.step(g0, prev, slope, gm, &mid, depth + 1)?;
        let mid_slope: Vec<Complex64> =
            mid_tracked.iter().zip(prev).map(|(m, p)| (m - p) / (gm - g0)).collect();
        let (out, a2) = self.step(gm, &mid_tracked, Some(&mid_slope), g1, next, depth + 1)?;
        Ok((out, a1 || a2))
    }
}

/// Scans `builder(gamma)` over a sorted grid, tracks eigenvalue branches by
/// nearest-neighbour continuation, and locates exceptional points where
/// the number of real eigenvalues changes. Each location is refined by
/// bisection and characterized by eigenvector coalescence diagnostics.
pub fn ep_scan<F>(builder: F, gamma_grid: &[f64], opts: ScanOptions) -> Result<EpScan>
where
    F: Fn(f64) -> Result<LiouvillianAffine> + Sync,
{
    if gamma_grid.len() < 3 {
        return Err(Error::Validation("an EP scan needs at least three grid points".into()));
    }
    if gamma_grid.iter().any(|g| !g.is_finite()) || gamma_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Validation("gamma grid must be finite and sorted".into()));
    }
    let basis = GellMannBasis::new(3)?;
    let decomps: Vec<(DMatrix<f64>, SpectralDecomposition)> = gamma_grid
        .par_iter()
        .map(|&g| {
            let gen = builder(g)?;
            let spec = eigendecompose(&gen.m)?;
            Ok((gen.m, spec))
        })
        .collect::<Result<_>>()?;

    let tracker = Tracker { builder: &builder, opts };
    let n = decomps[0].1.len();
    let mut branches: Vec<Vec<usize>> = Vec::with_capacity(gamma_grid.len());
    let mut values: Vec<Vec<Complex64>> = Vec::with_capacity(gamma_grid.len());
    let mut warnings = Vec::new();
    let mut ambiguous_intervals = Vec::new();
    branches.push((0..n).collect());
    values.push(decomps[0].1.eigenvalues.clone());
    for k in 1..gamma_grid.len() {
        let next = &decomps[k].1.eigenvalues;
        let slope: Option<Vec<Complex64>> = if k >= 2 && gamma_grid[k - 1] > gamma_grid[k - 2] {
            let h = gamma_grid[k - 1] - gamma_grid[k - 2];
            Some(values[k - 1].iter().zip(&values[k - 2]).map(|(a, b)| (a - b) / h).collect())
        } else {
            None
        };
        let (tracked, ambiguous) =
            tracker.step(gamma_grid[k - 1], &values[k - 1], slope.as_deref(), gamma_grid[k], next, 0)?;
        // map tracked values back to indices of the sorted spectrum
        let mut used = vec![false; n];
        let idx: Vec<usize> = tracked
            .iter()
            .map(|z| {
                let j = (0..n)
                    .filter(|&j| !used[j])
                    .min_by(|&a, &b| (next[a] - z).norm().partial_cmp(&(next[b] - z).norm()).unwrap_or(Ordering::Equal))
                    .expect("same length");
                used[j] = true;
                j
            })
            .collect();
        values.push(idx.iter().map(|&j| next[j]).collect());
        branches.push(idx);
        if ambiguous {
            ambiguous_intervals.push(k);
        }
    }

    let count = |k: usize| {
        let (m, spec) = &decomps[k];
        spec.real_count(imag_tol_for(&opts, m))
    };
    let counts: Vec<usize> = (0..gamma_grid.len()).map(count).collect();
    let mut records = Vec::new();
    for k in 1..gamma_grid.len() {
        if counts[k] == counts[k - 1] {
            continue;
        }
        let mut events = Vec::new();
        refine(&builder, &opts, gamma_grid[k - 1], counts[k - 1], gamma_grid[k], counts[k], &mut events)?;
        for (lo, clo, hi, chi) in events {
            records.extend(characterize(&builder, &opts, (lo, clo), (hi, chi), gamma_grid[k - 1], &values[k - 1])?);
        }
    }
    for k in ambiguous_intervals {
        if counts[k] == counts[k - 1] {
            warnings.push(ScanWarning {
                interval: (gamma_grid[k - 1], gamma_grid[k]),
                message: "branch assignment stayed ambiguous after step halving; refine the grid".into(),
            });
        }
    }

    let points = gamma_grid
        .iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let (m, spec) = &decomps[k];
            let tol = imag_tol_for(&opts, m);
            let idx = &branches[k];
            ScanPoint {
                gamma,
                eigenvalues: idx.iter().map(|&j| spec.eigenvalues[j]).collect(),
                condition: idx.iter().map(|&j| spec.condition[j]).collect(),
                physical: idx
                    .iter()
                    .map(|&j| {
                        basis.len() == spec.len()
                            && eigenvector_physicality(&basis, spec.eigenvalues[j], &spec.right_vectors[j], tol).physical
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(EpScan { points, records, warnings })
}

fn real_count_at<F>(builder: &F, opts: &ScanOptions, gamma: f64) -> Result<usize>
where
    F: Fn(f64) -> Result<LiouvillianAffine>,
{
    let m = builder(gamma)?.m;
    let tol = imag_tol_for(opts, &m);
    Ok(eigenvalues(&m)?.iter().filter(|z| z.im.abs() <= tol).count())
}

/// Recursive bisection collecting every bracket where the real count
/// changes.
fn refine<F>(
    builder: &F,
    opts: &ScanOptions,
    lo: f64,
    clo: usize,
    hi: f64,
    chi: usize,
    out: &mut Vec<(f64, usize, f64, usize)>,
) -> Result<()>
where
    F: Fn(f64) -> Result<LiouvillianAffine>,
{
    let mid = 0.5 * (lo + hi);
    if hi - lo <= opts.resolution || mid <= lo || mid >= hi {
        out.push((lo, clo, hi, chi));
        return Ok(());
    }
    let cm = real_count_at(builder, opts, mid)?;
    if cm != clo {
        refine(builder, opts, lo, clo, mid, cm, out)?;
    }
    if cm != chi {
        refine(builder, opts, mid, cm, hi, chi, out)?;
    }
    Ok(())
}

/// Smallest cosine of the principal angles between the approximate
/// eigenspaces of `mu` and `conj(mu)`. Eigenvalues much closer to `mu`
/// than to its conjugate are grouped with it, which keeps the measure
/// meaningful when several pairs merge together. For a simple eigenvalue
/// this is `|<R, conj(R)>|`.
fn conjugate_overlap(m: &DMatrix<f64>, spec: &SpectralDecomposition, mu: Complex64) -> Result<f64> {
    let radius = 0.25 * (mu - mu.conj()).norm();
    let k = spec.eigenvalues.iter().filter(|z| (*z - mu).norm() < radius).count().max(1);
    let n = m.nrows();
    let mut a = m.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        a[(i, i)] -= mu;
    }
    let budget = 1000 * n.max(10);
    let svd = SVD::try_new(a, false, true, f64::EPSILON, budget).ok_or(Error::NoConvergence { iterations: budget })?;
    let vt = svd.v_t.expect("requested V^T");
    let q: DMatrix<Complex64> = vt.rows(n - k, k).adjoint();
    Ok((q.adjoint() * q.map(|z| z.conj())).singular_values().min())
}

/// Builds the records for one refined bracket. The merging pairs are the
/// closest pairs among eigenvalues that change realness across it.
fn characterize<F>(
    builder: &F,
    opts: &ScanOptions,
    (lo, clo): (f64, usize),
    (hi, chi): (f64, usize),
    grid_lo: f64,
    grid_values: &[Complex64],
) -> Result<Vec<EPRecord>>
where
    F: Fn(f64) -> Result<LiouvillianAffine>,
{
    let kind = if chi > clo { EpKind::Normal } else { EpKind::Reversed };
    // the complex side of the bracket carries the conjugate pairs
    let complex_side = if kind == EpKind::Normal { lo } else { hi };
    let m_c = builder(complex_side)?.m;
    let tol_c = imag_tol_for(opts, &m_c);
    let spec_c = eigendecompose(&m_c)?;
    let norm = m_c.norm().max(1.0);

    let n_pairs = clo.abs_diff(chi) / 2;
    // candidate conjugate pairs on the complex side, smallest |Im| first
    let mut upper: Vec<usize> = (0..spec_c.len()).filter(|&i| spec_c.eigenvalues[i].im > tol_c).collect();
    upper.sort_by(|&a, &b| {
        spec_c.eigenvalues[a].im.partial_cmp(&spec_c.eigenvalues[b].im).unwrap_or(Ordering::Equal)
    });

    // branch ids: continue from the grid point to the bracket in sub-steps
    let tracker = Tracker { builder, opts: *opts };
    let steps = 16;
    let mut prev = grid_values.to_vec();
    let mut g_prev = grid_lo;
    for s in 1..=steps {
        let g = grid_lo + (complex_side - grid_lo) * s as f64 / steps as f64;
        if g <= g_prev {
            continue;
        }
        let next = eigenvalues(&builder(g)?.m)?;
        prev = tracker.step(g_prev, &prev, None, g, &next, 0)?.0;
        g_prev = g;
    }
    let mut taken_branches: Vec<usize> = Vec::new();
    let mut branch_of = |z: Complex64| -> usize {
        let k = (0..prev.len())
            .filter(|k| !taken_branches.contains(k))
            .min_by(|&a, &b| (prev[a] - z).norm().partial_cmp(&(prev[b] - z).norm()).unwrap_or(Ordering::Equal))
            .unwrap_or(0);
        taken_branches.push(k);
        k
    };

    // Im(mu)^2 is linear in gamma next to an EP; extrapolate from the
    // bracket end to the coalescence point
    let away = if kind == EpKind::Normal { -1.0 } else { 1.0 };
    let width = 1e-6 * complex_side.abs().max(1.0);
    let back = eigenvalues(&builder(complex_side + away * width)?.m)?;
    let mut pairs = Vec::new();
    for &iu in upper.iter().take(n_pairs) {
        let mu = spec_c.eigenvalues[iu];
        let il = (0..spec_c.len())
            .filter(|&j| j != iu)
            .min_by(|&a, &b| {
                (spec_c.eigenvalues[a] - mu.conj())
                    .norm()
                    .partial_cmp(&(spec_c.eigenvalues[b] - mu.conj()).norm())
                    .unwrap_or(Ordering::Equal)
            })
            .expect("conjugate partner");
        let im2 = back
            .iter()
            .filter(|z| z.im > 0.0)
            .min_by(|a, b| (*a - mu).norm().partial_cmp(&(*b - mu).norm()).unwrap_or(Ordering::Equal))
            .map(|z| z.im)
            .unwrap_or(0.0);
        let (i1, i2) = (mu.im * mu.im, im2 * im2);
        let mut gamma_star = 0.5 * (lo + hi);
        if i2 > i1 {
            let g = complex_side - away * width * i1 / (i2 - i1);
            if (g - gamma_star).abs() <= 2.0 * width {
                gamma_star = g;
            }
        }
        pairs.push((iu, il, mu, gamma_star));
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let g_eval = pairs.iter().map(|p| p.3).sum::<f64>() / pairs.len() as f64;
    let spec_s = eigendecompose(&builder(g_eval)?.m)?;

    let mut records = Vec::new();
    let mut used: Vec<usize> = Vec::new();
    for (iu, il, mu, gamma_star) in pairs {
        // the eigenvalues next to Re(mu); with several pairs merging at
        // once, the most parallel unused pair among them
        let mut near: Vec<usize> = (0..spec_s.len()).filter(|i| !used.contains(i)).collect();
        near.sort_by(|&a, &b| {
            (spec_s.eigenvalues[a] - Complex64::new(mu.re, 0.0))
                .norm()
                .partial_cmp(&(spec_s.eigenvalues[b] - Complex64::new(mu.re, 0.0)).norm())
                .unwrap_or(Ordering::Equal)
        });
        let cand: Vec<usize> = near.into_iter().take(2 * n_pairs).collect();
        if cand.len() < 2 {
            break;
        }
        let mut best = (cand[0], cand[1], -1.0);
        for x in 0..cand.len() {
            for y in x + 1..cand.len() {
                let o = inner(&spec_s.right_vectors[cand[x]], &spec_s.right_vectors[cand[y]]).norm();
                if o > best.2 {
                    best = (cand[x], cand[y], o);
                }
            }
        }
        let (a, b, _) = best;
        // the conjugate pair on the complex side of the bracket identifies
        // the merging branches unambiguously
        let overlap = conjugate_overlap(&m_c, &spec_c, mu)?;
        used.extend([a, b]);
        let sep_star = (spec_s.eigenvalues[a] - spec_s.eigenvalues[b]).norm();
        let sep_c = (spec_c.eigenvalues[iu] - spec_c.eigenvalues[il]).norm();
        let min_separation = sep_star.min(sep_c);
        let peak_condition = spec_s.condition[a]
            .max(spec_s.condition[b])
            .max(spec_c.condition[iu])
            .max(spec_c.condition[il]);
        let mut pair = (branch_of(mu), branch_of(mu.conj()));
        if pair.0 > pair.1 {
            pair = (pair.1, pair.0);
        }
        records.push(EPRecord {
            gamma_star,
            pair,
            min_separation,
            peak_condition,
            kind,
            overlap,
            confirmed: peak_condition > CONDITION_THRESHOLD && min_separation < SEPARATION_FRACTION * norm,
        });
    }
    Ok(records)
}
