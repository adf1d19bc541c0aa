//! Time integration of the affine Bloch equation `dR/dt = M(t) R + b(t)`,
//! a direct density-matrix integrator for cross-checks, and observables.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::{random_pure_density, BlochVector, CMatrix, DensityMatrix, GellMannBasis};
use crate::error::{Error, Result};
use crate::liouvillian::{LindbladModel, LiouvillianAffine, StirapGenerator};
use crate::ode::{self, Tolerances};
use crate::spectral;
use crate::stirap::PulseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    /// Number of uniformly spaced output times, end points included.
    pub samples: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_step: 0.5, initial_step: 1e-3, samples: 1001 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rel_tol) || !positive(self.abs_tol) {
            return Err(Error::Validation("integrator tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) || !positive(self.initial_step) {
            return Err(Error::Validation("integrator step sizes must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::Validation("need at least two output samples".into()));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    /// Caps the step at a quarter of the pulse width so that short pulses
    /// cannot be stepped over.
    pub fn for_schedule(mut self, schedule: &PulseSchedule) -> Self {
        self.max_step = self.max_step.min(schedule.width() / 4.0);
        self
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            initial_step: self.initial_step,
        }
    }
}

/// Anything that can evaluate `M(t) R + b(t)`.
pub trait BlochGenerator: Send + Sync {
    fn len(&self) -> usize;

    fn rate_into(&self, t: f64, r: &[f64], dr: &mut [f64]);

    fn affine_at(&self, t: f64) -> LiouvillianAffine;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BlochGenerator for StirapGenerator {
    fn len(&self) -> usize {
        8
    }

    fn rate_into(&self, t: f64, r: &[f64], dr: &mut [f64]) {
        StirapGenerator::rate_into(self, t, r, dr)
    }

    fn affine_at(&self, t: f64) -> LiouvillianAffine {
        self.at(t)
    }
}

impl BlochGenerator for LiouvillianAffine {
    fn len(&self) -> usize {
        LiouvillianAffine::len(self)
    }

    fn rate_into(&self, _t: f64, r: &[f64], dr: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut acc = self.b[i];
            for j in 0..n {
                acc += self.m[(i, j)] * r[j];
            }
            dr[i] = acc;
        }
    }

    fn affine_at(&self, _t: f64) -> LiouvillianAffine {
        self.clone()
    }
}

/// Wraps a closure `t -> (M, b)`.
pub struct FnGenerator<F> {
    len: usize,
    f: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(f64) -> LiouvillianAffine + Send + Sync,
{
    pub fn new(len: usize, f: F) -> Self {
        Self { len, f }
    }
}

impl<F> BlochGenerator for FnGenerator<F>
where
    F: Fn(f64) -> LiouvillianAffine + Send + Sync,
{
    fn len(&self) -> usize {
        self.len
    }

    fn rate_into(&self, t: f64, r: &[f64], dr: &mut [f64]) {
        (self.f)(t).rate_into(t, r, dr)
    }

    fn affine_at(&self, t: f64) -> LiouvillianAffine {
        (self.f)(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// `P1 - P3`.
    pub z: f64,
    pub purity: f64,
}

pub fn observables(r: &BlochVector) -> Observables {
    let basis = GellMannBasis::new(r.dimension()).expect("Bloch vectors carry a valid dimension");
    observables_in(&basis, r.as_slice())
}

fn observables_in(basis: &GellMannBasis, r: &[f64]) -> Observables {
    let rho = basis.reconstruct(r);
    let pop = |i: usize| if i < basis.dimension() { rho[(i, i)].re } else { 0.0 };
    let (p1, p2, p3) = (pop(0), pop(1), pop(2));
    let d = basis.dimension() as f64;
    let norm2: f64 = r.iter().map(|x| x * x).sum();
    Observables { p1, p2, p3, z: p1 - p3, purity: 1.0 / d + (d - 1.0) / d * norm2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryCheck {
    pub max_purity: f64,
    pub min_eigenvalue: f64,
    /// Largest `|Tr rho - 1|`; zero by construction for Bloch trajectories.
    pub max_trace_error: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    pub observables: Vec<Observables>,
    pub max_trace_error: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &BlochVector {
        self.states.last().expect("trajectories hold at least two samples")
    }

    pub fn final_observables(&self) -> Observables {
        *self.observables.last().expect("trajectories hold at least two samples")
    }

    /// Sample index closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// `|P3(t_f) - P3(t_f - window)|`.
    pub fn settling(&self, window: f64) -> f64 {
        let tf = *self.times.last().expect("non-empty");
        let k = self.index_near(tf - window);
        (self.final_observables().p3 - self.observables[k].p3).abs()
    }

    /// Largest componentwise distance between two trajectories sampled at
    /// the same times.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::Validation("trajectories have different sample counts".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }

    /// Purity bound and positivity of every reconstructed sample.
    pub fn check(&self) -> TrajectoryCheck {
        let mut max_purity = f64::NEG_INFINITY;
        let mut min_eigenvalue = f64::INFINITY;
        if let Some(first) = self.states.first() {
            let basis = GellMannBasis::new(first.dimension()).expect("valid dimension");
            for (r, o) in self.states.iter().zip(&self.observables) {
                max_purity = max_purity.max(o.purity);
                let rho = DensityMatrix::from_matrix_unchecked(basis.reconstruct(r.as_slice()));
                min_eigenvalue = min_eigenvalue.min(rho.min_eigenvalue());
            }
        }
        TrajectoryCheck { max_purity, min_eigenvalue, max_trace_error: self.max_trace_error }
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|i| format!("r{i}")));
        h.extend(["P1", "P2", "P3", "Z", "purity"].map(String::from));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.states)
            .zip(&self.observables)
            .map(|((&t, r), o)| {
                let mut row = vec![t];
                row.extend_from_slice(r.as_slice());
                row.extend([o.p1, o.p2, o.p3, o.z, o.purity]);
                row
            })
            .collect()
    }

    /// Columns `t, r1.., P1, P2, P3, Z, purity`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header())?;
        for row in self.csv_rows() {
            out.write_record(row.iter().map(|x| x.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn sample_times(t_span: (f64, f64), samples: usize) -> Result<Vec<f64>> {
    let (t0, t1) = t_span;
    if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Validation(format!("invalid time span ({t0}, {t1})")));
    }
    let n = samples - 1;
    Ok((0..=n)
        .map(|i| if i == n { t1 } else { t0 + (t1 - t0) * i as f64 / n as f64 })
        .collect())
}

fn with_gap<G: BlochGenerator + ?Sized>(err: Error, gen: &G) -> Error {
    match err {
        Error::StepSizeUnderflow { t, step, .. } => {
            let gap = spectral::eigendecompose(&gen.affine_at(t).m)
                .and_then(|s| spectral::liouvillian_gap(&s, spectral::ZERO_TOL))
                .ok();
            Error::StepSizeUnderflow { t, step, gap }
        }
        other => other,
    }
}

/// Integrates `dR/dt = M(t) R + b(t)` over `t_span`, sampling uniformly.
pub fn evolve_bloch<G: BlochGenerator + ?Sized>(
    gen: &G,
    r0: &BlochVector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if r0.len() != gen.len() {
        return Err(Error::Validation(format!(
            "initial state has {} components, generator expects {}",
            r0.len(),
            gen.len()
        )));
    }
    let times = sample_times(t_span, cfg.samples)?;
    let basis = GellMannBasis::new(r0.dimension())?;
    let d = r0.dimension();
    let mut states = Vec::with_capacity(times.len());
    let mut obs = Vec::with_capacity(times.len());
    ode::integrate(
        |t, r, dr| gen.rate_into(t, r, dr),
        r0.as_slice(),
        &times,
        &cfg.tolerances(),
        |_, _, r| {
            obs.push(observables_in(&basis, r));
            states.push(BlochVector::from_vector(d, DVector::from_column_slice(r)));
        },
    )
    .map_err(|e| with_gap(e, gen))?;
    Ok(Trajectory { times, states, observables: obs, max_trace_error: 0.0 })
}

/// Integrates the Lindblad equation for the full density matrix and maps
/// every sample to its Bloch vector.
pub fn evolve_density(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let d = model.dimension();
    if rho0.dimension() != d {
        return Err(Error::Validation(format!(
            "initial state is {0}x{0}, model dimension is {d}",
            rho0.dimension()
        )));
    }
    let times = sample_times(t_span, cfg.samples)?;
    let basis = GellMannBasis::new(d)?;
    let dd = d * d;
    let unpack = |y: &[f64]| CMatrix::from_fn(d, d, |i, j| Complex64::new(y[i * d + j], y[dd + i * d + j]));
    let mut y0 = vec![0.0; 2 * dd];
    for i in 0..d {
        for j in 0..d {
            let z = rho0.matrix()[(i, j)];
            y0[i * d + j] = z.re;
            y0[dd + i * d + j] = z.im;
        }
    }
    let mut states = Vec::with_capacity(times.len());
    let mut obs = Vec::with_capacity(times.len());
    let mut max_trace_error: f64 = 0.0;
    ode::integrate(
        |t, y, dy| {
            let rate = model.apply(&unpack(y), t);
            for i in 0..d {
                for j in 0..d {
                    dy[i * d + j] = rate[(i, j)].re;
                    dy[dd + i * d + j] = rate[(i, j)].im;
                }
            }
        },
        &y0,
        &times,
        &cfg.tolerances(),
        |_, _, y| {
            let rho = unpack(y);
            let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
            max_trace_error = max_trace_error.max((tr - 1.0).abs());
            let r = basis.components(&rho);
            obs.push(observables_in(&basis, r.as_slice()));
            states.push(BlochVector::from_vector(d, r));
        },
    )
    .map_err(|e| match e {
        Error::StepSizeUnderflow { t, step, .. } => {
            let affine = crate::liouvillian::compile_affine(model, t, &basis);
            with_gap(Error::StepSizeUnderflow { t, step, gap: None }, &affine)
        }
        other => other,
    })?;
    Ok(Trajectory { times, states, observables: obs, max_trace_error })
}

/// Bloch vector of a Haar-random pure qutrit state, deterministic in `seed`.
pub fn random_pure_state(seed: u64) -> BlochVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = random_pure_density(3, &mut rng);
    GellMannBasis::new(3)
        .and_then(|b| b.to_bloch(&rho))
        .expect("pure states have unit trace")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouvillian::{compile_parts, LossCase};
    use crate::stirap::{dark_bloch, hamiltonian, ConstantCouplings};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn constant(case: &LossCase, gamma: f64) -> LiouvillianAffine {
        let basis = GellMannBasis::new(3).unwrap();
        compile_parts(&hamiltonian(1.0, 1.0, 0.0), &case.channels(gamma).unwrap(), &basis)
    }

    #[test]
    fn observables_of_reference_states() {
        let o = observables(&BlochVector::zeros(3));
        assert_abs_diff_eq!(o.p1, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.p2, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.p3, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.z, 0.0, epsilon = 1e-15);

        let o = observables(&dark_bloch(0.0));
        assert_abs_diff_eq!(o.p1, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.p2, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.p3, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.z, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.purity, 1.0, epsilon = 1e-14);

        let o = observables(&dark_bloch(FRAC_PI_4));
        assert_abs_diff_eq!(o.p1, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(o.p2, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.p3, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(o.z, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn random_states_are_pure_and_seeded() {
        let a = random_pure_state(1);
        assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(a.as_slice(), random_pure_state(1).as_slice());
        assert_ne!(a.as_slice(), random_pure_state(2).as_slice());
    }

    #[test]
    fn random_states_average_to_the_origin() {
        let mut mean = DVector::<f64>::zeros(8);
        let n = 10_000;
        for seed in 0..n {
            mean += random_pure_state(seed).vector();
        }
        mean /= n as f64;
        for x in mean.iter() {
            assert!(x.abs() < 0.05, "{mean}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig::default().with_rel_tol(0.0).validate().is_err());
        assert!(IntegratorConfig::default().with_samples(1).validate().is_err());
        let sched = PulseSchedule::default().with_a(0.1);
        assert_abs_diff_eq!(IntegratorConfig::default().for_schedule(&sched).max_step, 0.25);
    }

    #[test]
    fn dephasing_relaxes_to_the_mixed_state() {
        let gen = constant(&LossCase::Dephasing, 1.0);
        let cfg = IntegratorConfig::default().with_samples(201);
        let traj = evolve_bloch(&gen, &random_pure_state(7), (0.0, 60.0), &cfg).unwrap();
        assert!(traj.final_state().norm() < 1e-6);
        assert_abs_diff_eq!(traj.final_observables().purity, 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn matches_the_mode_expansion() {
        for case in [LossCase::Dephasing, LossCase::Emission] {
            let gen = constant(&case, 0.37);
            let spec = spectral::eigendecompose(&gen.m).unwrap();
            let r0 = random_pure_state(3);
            let cfg = IntegratorConfig { rel_tol: 1e-11, abs_tol: 1e-13, ..Default::default() }.with_samples(41);
            let traj = evolve_bloch(&gen, &r0, (0.0, 8.0), &cfg).unwrap();
            for (t, r) in traj.times.iter().zip(&traj.states) {
                let want = spectral::spectral_solution(&spec, &gen.b, r0.as_slice(), *t).unwrap();
                assert!((r.vector() - want).amax() < 1e-7);
            }
        }
    }

    #[test]
    fn density_and_bloch_agree() {
        let sched = PulseSchedule::default().with_a(0.3);
        let cfg = IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..Default::default() }
            .for_schedule(&sched)
            .with_samples(401);
        for case in [LossCase::Dephasing, LossCase::Emission] {
            let gen = StirapGenerator::new(sched, &case, 0.6).unwrap();
            let model = LindbladModel::stirap(sched, &case, 0.6).unwrap();
            let r0 = random_pure_state(11);
            let rho0 = GellMannBasis::new(3).unwrap().from_bloch(&r0).unwrap();
            let a = evolve_bloch(&gen, &r0, (-30.0, 30.0), &cfg).unwrap();
            let b = evolve_density(&model, &rho0, (-30.0, 30.0), &cfg).unwrap();
            assert!(a.sup_distance(&b).unwrap() < 1e-8);
            assert!(b.max_trace_error < 1e-10);
        }
    }

    #[test]
    fn unitary_evolution_keeps_purity() {
        let sched = PulseSchedule::default();
        let model = LindbladModel::stirap(sched, &LossCase::Closed, 0.0).unwrap();
        let psi = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), Complex64::new(0.0, 0.0)];
        let rho0 = DensityMatrix::pure(&psi).unwrap();
        let cfg = IntegratorConfig { rel_tol: 1e-11, abs_tol: 1e-13, ..Default::default() }.with_samples(101);
        let traj = evolve_density(&model, &rho0, (-40.0, 40.0), &cfg).unwrap();
        for o in &traj.observables {
            assert_abs_diff_eq!(o.purity, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn dark_projector_is_stationary_under_emission() {
        let couplings = ConstantCouplings { g1: 1.0, g2: 1.0, delta: 0.0 };
        let model = LindbladModel::stirap(couplings, &LossCase::Emission, 1.0).unwrap();
        let s = FRAC_PI_4.sin();
        let dark = [Complex64::new(s, 0.0), Complex64::new(0.0, 0.0), Complex64::new(-s, 0.0)];
        let rho0 = DensityMatrix::pure(&dark).unwrap();
        let cfg = IntegratorConfig::default().with_samples(51);
        let traj = evolve_density(&model, &rho0, (0.0, 50.0), &cfg).unwrap();
        let r0 = traj.states[0].clone();
        for r in &traj.states {
            assert!((r.vector() - r0.vector()).amax() < 1e-9);
        }
        assert!((r0.vector() - dark_bloch(FRAC_PI_4).vector()).amax() < 1e-12);
    }

    #[test]
    fn closed_transfer_is_adiabatic() {
        let sched = PulseSchedule::default();
        let gen = StirapGenerator::new(sched, &LossCase::Closed, 0.0).unwrap();
        let cfg = IntegratorConfig::default().for_schedule(&sched);
        let traj = evolve_bloch(&gen, &dark_bloch(0.0), (-100.0, 100.0), &cfg).unwrap();
        let last = traj.final_observables();
        assert!(last.p3 > 0.99);
        assert!(traj.settling(10.0) < 1e-6);
        assert!(traj.observables.iter().any(|o| o.p2 > 1e-4));
        let check = traj.check();
        assert!(check.max_purity <= 1.0 + 1e-9);
        assert!(check.min_eigenvalue >= -1e-6);
    }

    #[test]
    fn rel_tol_halving_changes_little() {
        let sched = PulseSchedule::default().with_a(0.4);
        let gen = StirapGenerator::new(sched, &LossCase::Dephasing, 0.5).unwrap();
        let cfg = IntegratorConfig::default().for_schedule(&sched).with_samples(11);
        let p3 = |c: &IntegratorConfig| {
            evolve_bloch(&gen, &dark_bloch(0.0), (-100.0, 100.0), c).unwrap().final_observables().p3
        };
        let coarse = p3(&cfg);
        let fine = p3(&cfg.with_rel_tol(cfg.rel_tol / 2.0));
        assert!((coarse - fine).abs() < 10.0 * cfg.rel_tol);
    }

    #[test]
    fn stiff_generator_reports_gap() {
        let gen = constant(&LossCase::Dephasing, 1e9);
        let cfg = IntegratorConfig { max_step: 1.0, ..Default::default() }.with_samples(2);
        match evolve_bloch(&gen, &random_pure_state(0), (0.0, 1e3), &cfg) {
            Err(Error::StepSizeUnderflow { gap, .. }) => assert!(gap.is_some()),
            other => panic!("expected a stiffness error, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_csv() {
        let gen = constant(&LossCase::Dephasing, 1.0);
        let traj = evolve_bloch(&gen, &dark_bloch(0.0), (0.0, 1.0), &IntegratorConfig::default().with_samples(3)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,r1,r2,r3,r4,r5,r6,r7,r8,P1,P2,P3,Z,purity");
        assert_eq!(lines.count(), 3);
    }
}
