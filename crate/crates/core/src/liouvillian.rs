//! Lindblad models and their affine Bloch generators `dR/dt = M R + b`.
//!
//! [`compile_affine`] projects the Lindbladian onto the Gell-Mann basis and is
//! exact for any model, because the Bloch-projected map is affine. The
//! closed-form builders [`dephasing_affine`] and [`emission_affine`] hold
//! the tabulated matrices for the two STIRAP loss channels verbatim, printing
//! errors included; [`consistency_report`] compares them against the compiled
//! generator entry by entry.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{CMatrix, DensityMatrix, GellMannBasis};
use crate::error::{Error, Result};
use crate::stirap::{self, Pulses};

pub type HamiltonianFn = dyn Fn(f64) -> CMatrix + Send + Sync;

/// One dissipative channel `gamma (2 L rho L^+ - L^+ L rho - rho L^+ L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub rate: f64,
    pub jump: CMatrix,
}

impl Channel {
    pub fn new(rate: f64, jump: CMatrix) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::InvalidRate(rate));
        }
        if jump.nrows() != jump.ncols() {
            return Err(Error::Validation("jump operator must be square".into()));
        }
        Ok(Self { rate, jump })
    }
}

#[derive(Clone)]
pub struct LindbladModel {
    dimension: usize,
    hamiltonian: Arc<HamiltonianFn>,
    channels: Vec<Channel>,
}

impl fmt::Debug for LindbladModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LindbladModel")
            .field("dimension", &self.dimension)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl LindbladModel {
    pub fn new<H>(dimension: usize, hamiltonian: H, channels: Vec<Channel>) -> Result<Self>
    where
        H: Fn(f64) -> CMatrix + Send + Sync + 'static,
    {
        if dimension < 2 {
            return Err(Error::InvalidDimension(dimension));
        }
        for ch in &channels {
            if !(ch.rate >= 0.0) {
                return Err(Error::InvalidRate(ch.rate));
            }
            if ch.jump.nrows() != dimension || ch.jump.ncols() != dimension {
                return Err(Error::Validation(format!(
                    "jump operator is {}x{}, model dimension is {dimension}",
                    ch.jump.nrows(),
                    ch.jump.ncols()
                )));
            }
        }
        Ok(Self { dimension, hamiltonian: Arc::new(hamiltonian), channels })
    }

    /// Time-independent Hamiltonian.
    pub fn constant(hamiltonian: CMatrix, channels: Vec<Channel>) -> Result<Self> {
        let d = hamiltonian.nrows();
        Self::new(d, move |_| hamiltonian.clone(), channels)
    }

    /// Three-level Lambda system driven by `pulses` with the loss channels of `case`.
    pub fn stirap<P: Pulses + 'static>(pulses: P, case: &LossCase, gamma: f64) -> Result<Self> {
        let channels = case.channels(gamma)?;
        let delta = pulses.detuning();
        Self::new(
            3,
            move |t| {
                let (g1, g2) = pulses.couplings(t);
                stirap::hamiltonian(g1, g2, delta)
            },
            channels,
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        (self.hamiltonian)(t)
    }

    /// `L[rho] = i[rho, H(t)] + D[rho]` for an arbitrary matrix argument.
    pub fn apply(&self, rho: &CMatrix, t: f64) -> CMatrix {
        lindbladian(&self.hamiltonian(t), &self.channels, rho)
    }
}

pub fn lindbladian(h: &CMatrix, channels: &[Channel], rho: &CMatrix) -> CMatrix {
    let i = Complex64::new(0.0, 1.0);
    let mut out = (rho * h - h * rho) * i;
    for ch in channels {
        if ch.rate == 0.0 {
            continue;
        }
        let l = &ch.jump;
        let ld = l.adjoint();
        let ldl = &ld * l;
        let term = (l * rho * &ld) * Complex64::new(2.0, 0.0) - &ldl * rho - rho * &ldl;
        out += term * Complex64::new(ch.rate, 0.0);
    }
    out
}

pub fn superoperator_apply(model: &LindbladModel, rho: &DensityMatrix, t: f64) -> CMatrix {
    model.apply(rho.matrix(), t)
}

/// Loss channels acting on the three-level system.
#[derive(Debug, Clone, PartialEq)]
pub enum LossCase {
    Closed,
    /// `L = |1><1| - |3><3|`.
    Dephasing,
    /// `L1 = |1><2|`, `L2 = |3><2|` with a common rate.
    Emission,
    /// `L1 = |1><2|` at rate `gamma1`, `L2 = |3><2|` at rate `gamma2`.
    EmissionRates { gamma1: f64, gamma2: f64 },
    /// Single user-supplied 3x3 jump operator.
    Custom(CMatrix),
}

impl LossCase {
    /// `L = |1><2| + |3><2|`, decay into a coherent superposition.
    pub fn coherent_emission() -> Self {
        LossCase::Custom(ket_bra(0, 1) + ket_bra(2, 1))
    }

    pub fn custom(jump: CMatrix) -> Result<Self> {
        if jump.nrows() != 3 || jump.ncols() != 3 {
            return Err(Error::Validation(format!(
                "jump operator must be 3x3, got {}x{}",
                jump.nrows(),
                jump.ncols()
            )));
        }
        Ok(LossCase::Custom(jump))
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossCase::Closed => "closed",
            LossCase::Dephasing => "dephasing",
            LossCase::Emission => "emission",
            LossCase::EmissionRates { .. } => "emission-rates",
            LossCase::Custom(_) => "custom",
        }
    }

    pub fn channels(&self, gamma: f64) -> Result<Vec<Channel>> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidRate(gamma));
        }
        Ok(match self {
            LossCase::Closed => Vec::new(),
            LossCase::Dephasing => vec![Channel::new(gamma, ket_bra(0, 0) - ket_bra(2, 2))?],
            LossCase::Emission => vec![
                Channel::new(gamma, ket_bra(0, 1))?,
                Channel::new(gamma, ket_bra(2, 1))?,
            ],
            LossCase::EmissionRates { gamma1, gamma2 } => vec![
                Channel::new(*gamma1, ket_bra(0, 1))?,
                Channel::new(*gamma2, ket_bra(2, 1))?,
            ],
            LossCase::Custom(jump) => vec![Channel::new(gamma, jump.clone())?],
        })
    }
}

/// `|i><j|` on the three-level space.
pub fn ket_bra(i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(3, 3);
    m[(i, j)] = Complex64::new(1.0, 0.0);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianAffine {
    pub m: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LiouvillianAffine {
    pub fn new(m: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() != b.len() {
            return Err(Error::Validation(format!(
                "generator shapes disagree: M is {}x{}, b has {} entries",
                m.nrows(),
                m.ncols(),
                b.len()
            )));
        }
        Ok(Self { m, b })
    }

    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n), b: DVector::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// `M r + b`.
    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.m * r + &self.b
    }

    /// `|M + M^T|_F`, zero for unitary generators.
    pub fn skew_defect(&self) -> f64 {
        (&self.m + self.m.transpose()).norm()
    }

    /// `self + scale * other`.
    pub fn add_scaled(&mut self, other: &LiouvillianAffine, scale: f64) {
        self.m += &other.m * scale;
        self.b += &other.b * scale;
    }

    pub fn to_record(&self, case: &str, parameters: Vec<(String, f64)>) -> AffineRecord {
        let n = self.len();
        let mut m = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                m.push(self.m[(i, j)]);
            }
        }
        AffineRecord {
            case: case.to_string(),
            parameters: parameters.into_iter().collect(),
            dimension: n,
            m,
            b: self.b.iter().copied().collect(),
        }
    }
}

/// JSON form of a generator: row-major `m`, vector `b`, and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRecord {
    pub case: String,
    pub parameters: std::collections::BTreeMap<String, f64>,
    pub dimension: usize,
    pub m: Vec<f64>,
    pub b: Vec<f64>,
}

impl AffineRecord {
    pub fn to_affine(&self) -> Result<LiouvillianAffine> {
        let n = self.dimension;
        if self.m.len() != n * n || self.b.len() != n {
            return Err(Error::Validation("record shapes disagree with its dimension".into()));
        }
        LiouvillianAffine::new(
            DMatrix::from_row_slice(n, n, &self.m),
            DVector::from_column_slice(&self.b),
        )
    }
}

/// Projection of a Hamiltonian plus channels onto the affine Bloch form.
pub fn compile_parts(h: &CMatrix, channels: &[Channel], basis: &GellMannBasis) -> LiouvillianAffine {
    let d = basis.dimension();
    let n = basis.len();
    let mixed = DensityMatrix::maximally_mixed(d);
    let b = basis.components(&lindbladian(h, channels, mixed.matrix()));
    // L is linear, so L[rho_j] - L[1/D] = L[(c/D) lambda_j]
    let weight = Complex64::new(basis.expansion_scale() / d as f64, 0.0);
    let mut m = DMatrix::zeros(n, n);
    for (j, l) in basis.matrices().iter().enumerate() {
        let col = basis.components(&lindbladian(h, channels, &(l * weight)));
        m.set_column(j, &col);
    }
    LiouvillianAffine { m, b }
}

pub fn compile_affine(model: &LindbladModel, t: f64, basis: &GellMannBasis) -> LiouvillianAffine {
    compile_parts(&model.hamiltonian(t), model.channels(), basis)
}

fn check_rate(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidRate(gamma));
    }
    Ok(())
}

/// Tabulated generator for dephasing of the lower levels, `b = 0`.
pub fn dephasing_affine(g1: f64, g2: f64, delta: f64, gamma: f64) -> Result<LiouvillianAffine> {
    check_rate(gamma)?;
    let s3 = 3f64.sqrt();
    let h = gamma / 2.0;
    #[rustfmt::skip]
    let rows = [
        -h,     delta,      0.0,     0.0,          g2,           0.0,    0.0,     0.0,
        -delta, -h,         -2.0*g1, -g2,          0.0,          0.0,    0.0,     0.0,
        0.0,    2.0*g1,     0.0,     0.0,          0.0,          0.0,    -g2,     0.0,
        0.0,    g2,         0.0,     -2.0*gamma,   0.0,          0.0,    -g2,     0.0,
        -g2,    0.0,        0.0,     0.0,          -2.0*gamma,   g1,     0.0,     0.0,
        0.0,    0.0,        0.0,     0.0,          -g1,          -h,     -delta,  0.0,
        0.0,    0.0,        g2,      g1,           0.0,          delta,  -h,      -s3*g2,
        0.0,    0.0,        0.0,     0.0,          0.0,          0.0,    s3*g2,   0.0,
    ];
    Ok(LiouvillianAffine { m: DMatrix::from_row_slice(8, 8, &rows), b: DVector::zeros(8) })
}

/// Tabulated generator and pump for emission from the excited level.
pub fn emission_affine(g1: f64, g2: f64, delta: f64, gamma: f64) -> Result<LiouvillianAffine> {
    check_rate(gamma)?;
    let s3 = 3f64.sqrt();
    let h = gamma / 2.0;
    #[rustfmt::skip]
    let rows = [
        -h,     delta,  0.0,     0.0,  g2,   0.0,    0.0,     0.0,
        -delta, -h,     -2.0*g1, -g2,  0.0,  0.0,    0.0,     0.0,
        0.0,    2.0*g1, -gamma,  0.0,  0.0,  0.0,    -g2,     gamma/s3,
        0.0,    g2,     0.0,     -h,   0.0,  0.0,    -g2,     0.0,
        -g2,    0.0,    0.0,     0.0,  -h,   g1,     0.0,     0.0,
        0.0,    0.0,    0.0,     0.0,  -g1,  -gamma, -delta,  0.0,
        0.0,    0.0,    g2,      g1,   0.0,  delta,  -gamma,  -s3*g2,
        0.0,    0.0,    0.0,     0.0,  0.0,  0.0,    s3*g2,   0.0,
    ];
    let mut b = DVector::zeros(8);
    b[2] = gamma / s3;
    Ok(LiouvillianAffine { m: DMatrix::from_row_slice(8, 8, &rows), b })
}

/// Precompiled STIRAP generator, affine in the couplings:
/// `M(t) = G1(t) M_1 + G2(t) M_2 + Delta M_Delta + M_loss`, `b = b_loss`.
#[derive(Clone)]
pub struct StirapGenerator {
    pulses: Arc<dyn Pulses>,
    unit_g1: DMatrix<f64>,
    unit_g2: DMatrix<f64>,
    static_part: LiouvillianAffine,
}

impl fmt::Debug for StirapGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StirapGenerator").field("static_part", &self.static_part).finish_non_exhaustive()
    }
}

impl StirapGenerator {
    pub fn new<P: Pulses + 'static>(pulses: P, case: &LossCase, gamma: f64) -> Result<Self> {
        let basis = GellMannBasis::new(3)?;
        let channels = case.channels(gamma)?;
        let unit_g1 = compile_parts(&stirap::hamiltonian(1.0, 0.0, 0.0), &[], &basis).m;
        let unit_g2 = compile_parts(&stirap::hamiltonian(0.0, 1.0, 0.0), &[], &basis).m;
        let static_part =
            compile_parts(&stirap::hamiltonian(0.0, 0.0, pulses.detuning()), &channels, &basis);
        Ok(Self { pulses: Arc::new(pulses), unit_g1, unit_g2, static_part })
    }

    pub fn at(&self, t: f64) -> LiouvillianAffine {
        let (g1, g2) = self.pulses.couplings(t);
        let mut out = self.static_part.clone();
        out.m += &self.unit_g1 * g1 + &self.unit_g2 * g2;
        out
    }

    /// `dr = M(t) r + b` without allocating.
    pub fn rate_into(&self, t: f64, r: &[f64], dr: &mut [f64]) {
        let (g1, g2) = self.pulses.couplings(t);
        let n = r.len();
        for i in 0..n {
            let mut acc = self.static_part.b[i];
            for j in 0..n {
                let m = self.static_part.m[(i, j)] + g1 * self.unit_g1[(i, j)] + g2 * self.unit_g2[(i, j)];
                acc += m * r[j];
            }
            dr[i] = acc;
        }
    }
}

/// Which of two mutually inconsistent tabulated entries the compiled
/// generator supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Supported {
    Upper,
    Lower,
    Both,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryMismatch {
    /// One-based row and column.
    pub row: usize,
    pub col: usize,
    pub tabulated: f64,
    pub compiled: f64,
}

/// Pair `(i, j)`, `(j, i)` of the tabulated matrix violating the
/// skew-symmetry a lossless generator must have.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewDefect {
    pub row: usize,
    pub col: usize,
    pub tabulated_upper: f64,
    pub tabulated_lower: f64,
    pub compiled_upper: f64,
    pub compiled_lower: f64,
    pub supported: Supported,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub case: String,
    pub g1: f64,
    pub g2: f64,
    pub delta: f64,
    pub gamma: f64,
    pub matrix_mismatches: Vec<EntryMismatch>,
    pub pump_mismatches: Vec<EntryMismatch>,
    /// Skew-symmetry defects of the tabulated matrix evaluated at `gamma = 0`.
    pub skew_defects: Vec<SkewDefect>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.matrix_mismatches.is_empty() && self.pump_mismatches.is_empty() && self.skew_defects.is_empty()
    }

    /// Whether entry `(row, col)` (one-based) is listed as a matrix mismatch.
    pub fn flags(&self, row: usize, col: usize) -> bool {
        self.matrix_mismatches.iter().any(|m| m.row == row && m.col == col)
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} generator at G1={} G2={} Delta={} gamma={}: {} matrix, {} pump mismatches",
            self.case,
            self.g1,
            self.g2,
            self.delta,
            self.gamma,
            self.matrix_mismatches.len(),
            self.pump_mismatches.len()
        )?;
        for m in &self.matrix_mismatches {
            writeln!(f, "  M({},{}): tabulated {:+.6}, compiled {:+.6}", m.row, m.col, m.tabulated, m.compiled)?;
        }
        for m in &self.pump_mismatches {
            writeln!(f, "  b({}): tabulated {:+.6}, compiled {:+.6}", m.row, m.tabulated, m.compiled)?;
        }
        for s in &self.skew_defects {
            writeln!(
                f,
                "  skew defect at gamma=0: M({r},{c}) = {:+.6} vs M({c},{r}) = {:+.6}; compiled has {:+.6} / {:+.6}, supports {:?}",
                s.tabulated_upper,
                s.tabulated_lower,
                s.compiled_upper,
                s.compiled_lower,
                s.supported,
                r = s.row,
                c = s.col
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabulatedCase {
    Dephasing,
    Emission,
}

/// Compare a tabulated generator with the compiled ground truth at one
/// parameter point. Use `g1 != g2` to expose entries that differ only in
/// which coupling they carry.
pub fn consistency_report(
    case: TabulatedCase,
    g1: f64,
    g2: f64,
    delta: f64,
    gamma: f64,
    tol: f64,
) -> Result<ConsistencyReport> {
    let (tabulated, tabulated_unitary, loss, name) = match case {
        TabulatedCase::Dephasing => (
            dephasing_affine(g1, g2, delta, gamma)?,
            dephasing_affine(g1, g2, delta, 0.0)?,
            LossCase::Dephasing,
            "dephasing",
        ),
        TabulatedCase::Emission => (
            emission_affine(g1, g2, delta, gamma)?,
            emission_affine(g1, g2, delta, 0.0)?,
            LossCase::Emission,
            "emission",
        ),
    };
    let basis = GellMannBasis::new(3)?;
    let h = stirap::hamiltonian(g1, g2, delta);
    let compiled = compile_parts(&h, &loss.channels(gamma)?, &basis);
    let unitary = compile_parts(&h, &[], &basis);

    let mut matrix_mismatches = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            let (t, c) = (tabulated.m[(i, j)], compiled.m[(i, j)]);
            if (t - c).abs() > tol {
                matrix_mismatches.push(EntryMismatch { row: i + 1, col: j + 1, tabulated: t, compiled: c });
            }
        }
    }
    let pump_mismatches = (0..8)
        .filter(|&i| (tabulated.b[i] - compiled.b[i]).abs() > tol)
        .map(|i| EntryMismatch { row: i + 1, col: 1, tabulated: tabulated.b[i], compiled: compiled.b[i] })
        .collect();

    let mut skew_defects = Vec::new();
    for i in 0..8 {
        for j in (i + 1)..8 {
            let (up, lo) = (tabulated_unitary.m[(i, j)], tabulated_unitary.m[(j, i)]);
            if (up + lo).abs() <= tol {
                continue;
            }
            let (cu, cl) = (unitary.m[(i, j)], unitary.m[(j, i)]);
            let supported = match ((up - cu).abs() <= tol, (lo - cl).abs() <= tol) {
                (true, true) => Supported::Both,
                (true, false) => Supported::Upper,
                (false, true) => Supported::Lower,
                (false, false) => Supported::Neither,
            };
            skew_defects.push(SkewDefect {
                row: i + 1,
                col: j + 1,
                tabulated_upper: up,
                tabulated_lower: lo,
                compiled_upper: cu,
                compiled_lower: cl,
                supported,
            });
        }
    }
    Ok(ConsistencyReport {
        case: name.to_string(),
        g1,
        g2,
        delta,
        gamma,
        matrix_mismatches,
        pump_mismatches,
        skew_defects,
    })
}
