//! Simulation of von Neumann indirect measurements on pre- and post-selected
//! systems with a Gaussian probe.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation on immutable values; file formats, plotting, random noise
//! sources and the command line live in the `weakprobe` companion crate.
//!
//! Module map:
//!
//! - [`hilbert`]: small dense complex linear algebra, states, density
//!   operators, Hermitian observables via cyclic Jacobi.
//! - [`probe`]: grid wavefunctions, quadrature moments, Wigner function.
//! - [`fracft`]: fractional Fourier transform and its lens/free-space
//!   realization.
//! - [`weakstats`]: weak values, weak variances, weak moments, weak-valued
//!   probabilities, Kirkwood–Dirac distributions, total-law decompositions.
//! - [`vnsim`]: exact coupling, post-selection and readout, compared against
//!   the second-order perturbative predictions.
//! - [`experiment`]: waveplate-parametrized selections, closed-form theory
//!   curves with visibility/angle error/background, least-squares fitting.
//! - [`shaping`]: probe waveform control through weak moments.
#![no_std]
#![deny(unsafe_code)]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)] // NaN-rejecting checks; index loops mirror the maths

extern crate alloc;

pub mod error;
pub mod experiment;
pub mod fft;
pub mod fracft;
pub mod hilbert;
pub mod probe;
pub mod shaping;
pub mod vnsim;
pub mod weakstats;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Numeric helpers shared by the modules (`core` has no float intrinsics).
pub(crate) mod num {
    pub(crate) use num_traits::Float;

    pub(crate) const PI: f64 = core::f64::consts::PI;
    pub(crate) const FRAC_PI_2: f64 = core::f64::consts::FRAC_PI_2;
    pub(crate) const FRAC_PI_4: f64 = core::f64::consts::FRAC_PI_4;

    /// Maps an angle into (-π, π].
    pub(crate) fn wrap_angle(a: f64) -> f64 {
        let two_pi = 2.0 * PI;
        let mut r = a % two_pi;
        if r <= -PI {
            r += two_pi;
        } else if r > PI {
            r -= two_pi;
        }
        r
    }
}
