//! Three-level Lambda-system STIRAP: Gaussian pulse pair, diabatic
//! Hamiltonian, adiabatic frame and the dark-state Bloch vector.
//!
//! Units follow `hbar = 1`; couplings, detuning and rates are in inverse
//! time units, `tau` and `sigma` in time units, `a` is dimensionless.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochVector, CMatrix};
use crate::error::{Error, Result};

/// Time-dependent couplings `(G1(t), G2(t))` and a constant detuning.
pub trait Pulses: Send + Sync {
    fn couplings(&self, t: f64) -> (f64, f64);

    fn detuning(&self) -> f64 {
        0.0
    }
}

/// Counterintuitively ordered Gaussian pulse pair
/// `G1(t) = g0 exp[-(t - a tau)^2 / (2 (a sigma)^2)]`,
/// `G2(t) = g0 exp[-(t + a tau)^2 / (2 (a sigma)^2)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub g0: f64,
    pub a: f64,
    pub tau: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl Default for PulseSchedule {
    fn default() -> Self {
        Self { g0: 1.0, a: 1.0, tau: 10.0, sigma: 10.0, delta: 0.0 }
    }
}

impl PulseSchedule {
    pub fn new(g0: f64, a: f64, tau: f64, sigma: f64, delta: f64) -> Result<Self> {
        let s = Self { g0, a, tau, sigma, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.g0, self.a, self.tau, self.sigma, self.delta].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::Validation("pulse parameters must be finite".into()));
        }
        if self.g0 <= 0.0 || self.a <= 0.0 || self.sigma <= 0.0 || self.tau < 0.0 {
            return Err(Error::Validation(format!(
                "need g0 > 0, a > 0, sigma > 0, tau >= 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    /// Pulse width `a sigma`.
    pub fn width(&self) -> f64 {
        self.a * self.sigma
    }

    pub fn pulses(&self, t: f64) -> (f64, f64) {
        let w2 = 2.0 * self.width() * self.width();
        let shift = self.a * self.tau;
        let g1 = self.g0 * (-(t - shift).powi(2) / w2).exp();
        let g2 = self.g0 * (-(t + shift).powi(2) / w2).exp();
        (g1, g2)
    }
}

impl Pulses for PulseSchedule {
    fn couplings(&self, t: f64) -> (f64, f64) {
        self.pulses(t)
    }

    fn detuning(&self) -> f64 {
        self.delta
    }
}

/// Time-independent couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantCouplings {
    pub g1: f64,
    pub g2: f64,
    pub delta: f64,
}

impl Pulses for ConstantCouplings {
    fn couplings(&self, _t: f64) -> (f64, f64) {
        (self.g1, self.g2)
    }

    fn detuning(&self) -> f64 {
        self.delta
    }
}

/// Diabatic Hamiltonian `[[0, G1, 0], [G1, Delta, G2], [0, G2, 0]]`.
pub fn hamiltonian(g1: f64, g2: f64, delta: f64) -> CMatrix {
    let c = |x: f64| Complex64::new(x, 0.0);
    let z = c(0.0);
    CMatrix::from_row_slice(3, 3, &[z, c(g1), z, c(g1), c(delta), c(g2), z, c(g2), z])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticFrame {
    /// Mixing angle with `tan theta = G1 / G2`, in `[0, pi/2]`.
    pub theta: f64,
    /// Mixing angle with `tan 2 phi = 2 G0 / Delta`, in `(0, pi/2)`.
    pub phi: f64,
    /// Adiabatic states `(phi_+, phi_0, phi_-)` as columns, in the diabatic basis.
    pub u: Matrix3<f64>,
    /// `(E_+, E_0, E_-)`, with `E_0 = 0`.
    pub energies: (f64, f64, f64),
}

impl AdiabaticFrame {
    /// Dark state `|phi_0> = cos(theta)|1> - sin(theta)|3>`.
    pub fn dark_state(&self) -> [f64; 3] {
        let col = self.u.column(1);
        [col[0], col[1], col[2]]
    }

    /// `U^T H U`; diagonal with `(E_+, 0, E_-)` for the Hamiltonian the frame
    /// was built from.
    pub fn to_adiabatic(&self, h: &Matrix3<f64>) -> Matrix3<f64> {
        self.u.transpose() * h * self.u
    }
}

pub fn adiabatic_frame(g1: f64, g2: f64, delta: f64) -> Result<AdiabaticFrame> {
    let g0 = g1.hypot(g2);
    if g0 == 0.0 {
        return Err(Error::DegenerateFrame);
    }
    let theta = g1.atan2(g2);
    let phi = 0.5 * (2.0 * g0).atan2(delta);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    #[rustfmt::skip]
    let u = Matrix3::new(
        sp * st, ct,  cp * st,
        cp,      0.0, -sp,
        sp * ct, -st, cp * ct,
    );
    let root = (delta * delta + 4.0 * g0 * g0).sqrt();
    let energies = ((delta + root) / 2.0, 0.0, (delta - root) / 2.0);
    Ok(AdiabaticFrame { theta, phi, u, energies })
}

/// Real form of [`hamiltonian`].
pub fn hamiltonian_real(g1: f64, g2: f64, delta: f64) -> Matrix3<f64> {
    Matrix3::new(0.0, g1, 0.0, g1, delta, g2, 0.0, g2, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adiabaticity {
    pub value: f64,
    /// Set when `G0` vanishes numerically; `value` is then `+inf`.
    pub degenerate: bool,
}

/// Local adiabaticity measure `A(t) = G1 G2 / G0^3 * a tau / (a sigma)^2`.
/// Adiabatic following needs `A(t) << 1` over the whole window.
pub fn adiabaticity_measure(t: f64, sched: &PulseSchedule) -> Adiabaticity {
    let (g1, g2) = sched.pulses(t);
    let g0 = g1.hypot(g2);
    if g0 < f64::MIN_POSITIVE {
        return Adiabaticity { value: f64::INFINITY, degenerate: true };
    }
    let geometric = (g1 / g0) * (g2 / g0) / g0;
    let value = geometric * sched.a * sched.tau / (sched.width() * sched.width());
    Adiabaticity { value, degenerate: false }
}

/// Bloch vector of the dark-state projector,
/// `R0 = [0, 0, sqrt3 c^2, -2 sqrt3 s c, 0, 0, 0, 1 - 3 s^2] / 2`.
pub fn dark_bloch(theta: f64) -> BlochVector {
    let (s, c) = theta.sin_cos();
    let s3 = 3f64.sqrt();
    let r = vec![
        0.0,
        0.0,
        s3 * c * c / 2.0,
        -s3 * s * c,
        0.0,
        0.0,
        0.0,
        (1.0 - 3.0 * s * s) / 2.0,
    ];
    BlochVector::new(3, r).expect("length 8")
}
