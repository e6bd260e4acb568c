//! Fractional Fourier transform on the position grid, and its realization by
//! a lens, free-space propagation and a second lens.
//!
//! `F_α[ψ](ω) = √((1 − i cot α)/2π) ∫ ψ(x) exp[i(cot α ω² − 2 csc α ωx + cot α x²)/2] dx`
//! with the principal square root. Output samples share the input grid.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::fft;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use crate::num::Float;
use crate::num::{wrap_angle, FRAC_PI_2, FRAC_PI_4, PI};
use crate::probe::{Grid, ProbeWavefunction};
use crate::{Error, Result};

/// Angles this close to 0 or π take the exact identity/parity branch.
pub const SNAP_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
enum Stage {
    Identity,
    Parity,
    Chirp(ChirpStage),
    /// Apply `first`, then `second`.
    Split(ChirpStage, ChirpStage),
}

#[derive(Clone, Debug)]
struct ChirpStage {
    /// `e^{i(cot−csc)x²/2}` on the grid.
    pre: Vec<Complex64>,
    /// `e^{i csc u²/2}`, `u = m·dx` for `m = −(n−1) … n−1`.
    kernel: Vec<Complex64>,
    /// `A·e^{i(cot−csc)ω²/2}·dx`
    post: Vec<Complex64>,
}

impl ChirpStage {
    fn new(grid: &Grid, alpha: f64) -> Self {
        let n = grid.n();
        let dx = grid.dx();
        let (s, c) = alpha.sin_cos();
        let cot = c / s;
        let csc = 1.0 / s;
        // cot − csc = −tan(α/2), evaluated without cancellation
        let diff = -(alpha / 2.0).tan();
        let amp = (Complex64::new(1.0, -cot)).sqrt() / (2.0 * PI).sqrt();
        let pre: Vec<Complex64> = (0..n)
            .map(|k| {
                let x = grid.x(k);
                Complex64::from_polar(1.0, diff * x * x / 2.0)
            })
            .collect();
        let kernel = (0..2 * n - 1)
            .map(|t| {
                let u = (t as f64 - (n - 1) as f64) * dx;
                Complex64::from_polar(1.0, csc * u * u / 2.0)
            })
            .collect();
        let post = pre.iter().map(|p| amp * p * dx).collect();
        Self { pre, kernel, post }
    }

    fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        let g: Vec<Complex64> = psi.iter().zip(&self.pre).map(|(a, b)| a * b).collect();
        let conv = fft::convolve(&g, &self.kernel);
        (0..n).map(|j| conv[j + n - 1] * self.post[j]).collect()
    }
}

/// Reusable transform for one grid and angle.
#[derive(Clone, Debug)]
pub struct FrFTPlan {
    grid: Grid,
    alpha: f64,
    stage: Stage,
}

impl FrFTPlan {
    /// Angles are reduced to (−π, π]. Angles with `|csc α| > √2` are split
    /// into two rotations through ±π/2 so the chirp kernel stays resolved.
    pub fn new(grid: Grid, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("angle {alpha} is not finite")));
        }
        let resolvable = 4.0 * grid.x_max() <= grid.k_max();
        let a = wrap_angle(alpha);
        let stage = if a.abs() < SNAP_TOL {
            Stage::Identity
        } else if (a.abs() - PI).abs() < SNAP_TOL {
            Stage::Parity
        } else {
            if !resolvable {
                return Err(Error::InvalidGrid(alloc::format!(
                    "chirp kernel unresolved: need x_max² ≤ πn/8 (n = {}, x_max = {})",
                    grid.n(),
                    grid.x_max()
                )));
            }
            if a.abs() < FRAC_PI_4 {
                Stage::Split(ChirpStage::new(&grid, FRAC_PI_2), ChirpStage::new(&grid, a - FRAC_PI_2))
            } else if a.abs() > 3.0 * FRAC_PI_4 {
                let half = FRAC_PI_2.copysign(a);
                Stage::Split(ChirpStage::new(&grid, half), ChirpStage::new(&grid, a - half))
            } else {
                Stage::Chirp(ChirpStage::new(&grid, a))
            }
        };
        Ok(Self { grid, alpha, stage })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn apply(&self, psi: &ProbeWavefunction) -> Result<ProbeWavefunction> {
        if psi.grid() != self.grid {
            return Err(Error::InvalidGrid("plan and wavefunction grids differ".into()));
        }
        let amps = psi.amplitudes();
        let out = match &self.stage {
            Stage::Identity => amps.to_vec(),
            Stage::Parity => {
                let n = amps.len();
                (0..n).map(|j| amps[(n - j) % n]).collect()
            }
            Stage::Chirp(c) => c.apply(amps),
            Stage::Split(first, second) => second.apply(&first.apply(amps)),
        };
        psi.with_amplitudes(out)
    }
}

/// `F_α[ψ]` on the grid of `psi`.
pub fn frft(psi: &ProbeWavefunction, alpha: f64) -> Result<ProbeWavefunction> {
    FrFTPlan::new(psi.grid(), alpha)?.apply(psi)
}

/// Lens focal length, propagation distance and coordinate scales of an
/// optical fractional Fourier transform.
///
/// The output intensity is `|F_α[ψ_s](X/scale)|²` up to a constant, where
/// `ψ_s(x) = ψ(x·input_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpticalRealization {
    pub alpha: f64,
    pub focal_length: f64,
    pub distance: f64,
    pub scale: f64,
    pub input_scale: f64,
}

/// Realizations for α ∈ {π/4, π/2, 3π/4}.
pub fn optical_params(alpha: f64, focal_length: f64) -> Result<OpticalRealization> {
    if !(focal_length > 0.0) || !focal_length.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!(
            "focal length {focal_length} must be positive"
        )));
    }
    let f = focal_length;
    let r2 = 2.0f64.sqrt();
    let close = |target: f64| (alpha - target).abs() < 1e-9;
    let (distance, scale, input_scale) = if close(FRAC_PI_2) {
        (f, f, 1.0)
    } else if close(FRAC_PI_4) {
        let s = ((r2 - 1.0) * f).sqrt();
        ((1.0 - 1.0 / r2) * f, s, s)
    } else if close(3.0 * FRAC_PI_4) {
        let s = ((r2 + 1.0) * f).sqrt();
        ((1.0 + 1.0 / r2) * f, s, s)
    } else {
        return Err(Error::UnsupportedAngle { alpha });
    };
    Ok(OpticalRealization { alpha, focal_length: f, distance, scale, input_scale })
}

/// Output of the lens/free-space/lens pipeline.
#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub psi: ProbeWavefunction,
    /// Fraction of probability in the outer 5% of the X or K range.
    pub edge_fraction: f64,
    /// `edge_fraction > 1e-6`: the grid is probably too small.
    pub aliasing_warning: bool,
}

/// Lens `e^{−iX²/2F}`, free space `e^{−iDK²/2}`, lens `e^{−iX²/2F}`.
pub fn lens_freespace_propagate(psi: &ProbeWavefunction, focal_length: f64, distance: f64) -> Result<PropagationResult> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("distance {distance} must be positive")));
    }
    if focal_length == 0.0 || !focal_length.is_finite() {
        return Err(Error::InvalidParameter("focal length must be nonzero and finite".into()));
    }
    let grid = psi.grid();
    let lens: Vec<Complex64> =
        (0..grid.n()).map(|k| Complex64::from_polar(1.0, -grid.x(k).powi(2) / (2.0 * focal_length))).collect();
    let after_lens = psi.with_amplitudes(psi.amplitudes().iter().zip(&lens).map(|(a, b)| a * b).collect())?;
    let propagated = after_lens.apply_k_multiplier(|k| Complex64::from_polar(1.0, -distance * k * k / 2.0))?;
    let out = propagated.with_amplitudes(propagated.amplitudes().iter().zip(&lens).map(|(a, b)| a * b).collect())?;
    let edge_fraction = edge_fraction(&after_lens).max(edge_fraction(&out));
    Ok(PropagationResult { psi: out, edge_fraction, aliasing_warning: edge_fraction > 1e-6 })
}

fn edge_fraction(psi: &ProbeWavefunction) -> f64 {
    let n = psi.grid().n();
    let band = n / 40;
    let frac = |v: &[Complex64]| {
        let total: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = v[..band].iter().chain(&v[n - band..]).map(|a| a.norm_sqr()).sum();
        edge / total
    };
    frac(psi.amplitudes()).max(frac(&psi.fourier()))
}
