//! Probe wavefunctions on a uniform grid of the dimensionless position X.
//!
//! The continuous Fourier transform `ψ̂(K) = (2π)^{-1/2} ∫ ψ(X) e^{-iKX} dX`
//! is realized on the grid by a centred FFT; the conjugate lattice is
//! `K_m = -π/dx + m·dk` with `dk = π/x_max`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::fft::FftPlan;
use crate::fracft;
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use crate::num::Float;
use crate::num::PI;
use crate::{Error, Result};

/// Norm below which a post-selected probe counts as annihilated.
pub const ORTHOGONAL_NORM_FLOOR: f64 = 1e-14;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Uniform grid `x_k = -x_max + k·dx`, `dx = 2·x_max/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    x_max: f64,
}

impl Grid {
    pub const DEFAULT_N: usize = 4096;
    pub const DEFAULT_X_MAX: f64 = 20.0;

    /// `n` must be a power of two ≥ 256 and `x_max ≥ 8`.
    pub fn new(n: usize, x_max: f64) -> Result<Self> {
        if !n.is_power_of_two() || n < 256 {
            return Err(Error::InvalidGrid(alloc::format!(
                "n = {n} must be a power of two and at least 256"
            )));
        }
        if !x_max.is_finite() || x_max < 8.0 {
            return Err(Error::InvalidGrid(alloc::format!("x_max = {x_max} must be at least 8")));
        }
        Ok(Self { n, x_max })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / self.n as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        -self.x_max + k as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }

    /// Spacing of the conjugate lattice.
    pub fn dk(&self) -> f64 {
        PI / self.x_max
    }

    /// Nyquist wavenumber `π/dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }

    pub fn k(&self, m: usize) -> f64 {
        -self.k_max() + m as f64 * self.dk()
    }

    pub fn ks(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.k(m)).collect()
    }

    /// Index of the grid point nearest to `x` (clamped).
    pub fn nearest_index(&self, x: f64) -> usize {
        let idx = ((x + self.x_max) / self.dx()).round();
        idx.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self { n: Self::DEFAULT_N, x_max: Self::DEFAULT_X_MAX }
    }
}

/// Complex amplitudes on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeWavefunction {
    grid: Grid,
    psi: Vec<Complex64>,
    normalized: bool,
}

impl ProbeWavefunction {
    pub fn new(grid: Grid, psi: Vec<Complex64>) -> Result<Self> {
        if psi.len() != grid.n() {
            return Err(Error::DimensionMismatch { expected: grid.n(), got: psi.len() });
        }
        let mut out = Self { grid, psi, normalized: false };
        out.normalized = (out.norm_sqr() - 1.0).abs() < 1e-10;
        Ok(out)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Self {
        let psi = (0..grid.n()).map(|k| f(grid.x(k))).collect();
        let mut out = Self { grid, psi, normalized: false };
        out.normalized = (out.norm_sqr() - 1.0).abs() < 1e-10;
        out
    }

    /// Builds the wavefunction whose transform on the K lattice is `values`.
    pub fn from_fourier(grid: Grid, values: &[Complex64]) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::DimensionMismatch { expected: grid.n(), got: values.len() });
        }
        let n = grid.n();
        let mut buf: Vec<Complex64> = values
            .iter()
            .enumerate()
            .map(|(m, v)| if m % 2 == 0 { *v } else { -*v })
            .collect();
        FftPlan::new(n).process(&mut buf, crate::fft::Direction::Inverse);
        let s = grid.dk() / (2.0 * PI).sqrt();
        for (j, v) in buf.iter_mut().enumerate() {
            *v *= if j % 2 == 0 { s } else { -s };
        }
        Self::new(grid, buf)
    }

    /// Same grid, new amplitudes.
    pub fn with_amplitudes(&self, psi: Vec<Complex64>) -> Result<Self> {
        Self::new(self.grid, psi)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `Σ |ψ_k|² dx`
    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if !(norm >= ORTHOGONAL_NORM_FLOOR) {
            return Err(Error::OrthogonalPostSelection { norm });
        }
        let psi = self.psi.iter().map(|v| v / norm).collect();
        Ok(Self { grid: self.grid, psi, normalized: true })
    }

    /// `Σ ψ*_k χ_k dx`
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.psi.iter().zip(&other.psi).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.dx()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let psi: Vec<Complex64> = self.psi.iter().map(|v| v * s).collect();
        let mut out = Self { grid: self.grid, psi, normalized: false };
        out.normalized = (out.norm_sqr() - 1.0).abs() < 1e-10;
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("wavefunctions live on different grids".into()));
        }
        self.with_amplitudes(self.psi.iter().zip(&other.psi).map(|(a, b)| a + b).collect())
    }

    /// Transform on the K lattice `Grid::ks`.
    pub fn fourier(&self) -> Vec<Complex64> {
        let n = self.grid.n();
        let mut buf: Vec<Complex64> = self
            .psi
            .iter()
            .enumerate()
            .map(|(j, v)| if j % 2 == 0 { *v } else { -*v })
            .collect();
        FftPlan::new(n).forward(&mut buf);
        let s = self.grid.dx() / (2.0 * PI).sqrt();
        for (m, v) in buf.iter_mut().enumerate() {
            *v *= if m % 2 == 0 { s } else { -s };
        }
        buf
    }

    /// Multiplies the K-space amplitude by `f(K)`.
    pub fn apply_k_multiplier(&self, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let mut spec = self.fourier();
        for (m, v) in spec.iter_mut().enumerate() {
            *v *= f(self.grid.k(m));
        }
        let mut out = Self::from_fourier(self.grid, &spec)?;
        if self.normalized && (out.norm_sqr() - 1.0).abs() < 1e-10 {
            out.normalized = true;
        }
        Ok(out)
    }

    /// `ψ(X - a)`, via the phase ramp `e^{-iaK}`.
    pub fn shifted(&self, a: f64) -> Result<Self> {
        if a == 0.0 {
            return Ok(self.clone());
        }
        self.apply_k_multiplier(|k| Complex64::from_polar(1.0, -a * k))
    }

    /// Continuous transform at arbitrary wavenumbers by direct quadrature.
    pub fn fourier_at(&self, ks: &[f64]) -> Vec<Complex64> {
        let dx = self.grid.dx();
        let x0 = self.grid.x(0);
        let s = dx / (2.0 * PI).sqrt();
        ks.iter()
            .map(|&k| {
                let step = Complex64::from_polar(1.0, -k * dx);
                let mut w = Complex64::from_polar(1.0, -k * x0);
                let mut acc = ZERO;
                for (j, v) in self.psi.iter().enumerate() {
                    if j % 256 == 0 {
                        // re-anchor the recurrence to bound round-off drift
                        w = Complex64::from_polar(1.0, -k * self.grid.x(j));
                    }
                    acc += v * w;
                    w *= step;
                }
                acc * s
            })
            .collect()
    }

    /// Band-limited interpolation at arbitrary positions.
    pub fn sample_at(&self, xs: &[f64]) -> Vec<Complex64> {
        let spec = self.fourier();
        let dk = self.grid.dk();
        let k0 = self.grid.k(0);
        let s = dk / (2.0 * PI).sqrt();
        xs.iter()
            .map(|&x| {
                let step = Complex64::from_polar(1.0, x * dk);
                let mut w = Complex64::from_polar(1.0, x * k0);
                let mut acc = ZERO;
                for (m, v) in spec.iter().enumerate() {
                    if m % 256 == 0 {
                        w = Complex64::from_polar(1.0, x * self.grid.k(m));
                    }
                    acc += v * w;
                    w *= step;
                }
                acc * s
            })
            .collect()
    }

    /// First and second moments of X̂ and K̂ (normalizes internally).
    pub fn phase_space_moments(&self) -> Result<PhaseSpaceMoments> {
        let psi = self.normalize()?;
        let dx = psi.grid.dx();
        let xs = psi.grid.xs();
        let ks = psi.grid.ks();
        let spec = psi.fourier();
        let dk = psi.grid.dk();
        let mut mean_x = 0.0;
        let mut x2 = 0.0;
        for (x, v) in xs.iter().zip(&psi.psi) {
            let p = v.norm_sqr() * dx;
            mean_x += x * p;
            x2 += x * x * p;
        }
        let mut mean_k = 0.0;
        let mut k2 = 0.0;
        for (k, v) in ks.iter().zip(&spec) {
            let p = v.norm_sqr() * dk;
            mean_k += k * p;
            k2 += k * k * p;
        }
        // ⟨(XK + KX)/2⟩ = Re ⟨ψ| X K̂ |ψ⟩ with K̂ψ from the spectrum
        let kpsi = {
            let weighted: Vec<Complex64> = spec.iter().zip(&ks).map(|(v, k)| v * *k).collect();
            Self::from_fourier(psi.grid, &weighted)?
        };
        let xk: f64 = xs
            .iter()
            .zip(psi.psi.iter().zip(&kpsi.psi))
            .map(|(x, (a, b))| (a.conj() * b).re * x)
            .sum::<f64>()
            * dx;
        Ok(PhaseSpaceMoments {
            mean_x,
            mean_k,
            var_x: x2 - mean_x * mean_x,
            var_k: k2 - mean_k * mean_k,
            cov_xk: xk - mean_x * mean_k,
        })
    }
}

/// `L²` distance between two wavefunctions after removing the best global phase.
pub fn phase_aligned_distance(a: &ProbeWavefunction, b: &ProbeWavefunction) -> f64 {
    let ov = b.inner(a);
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { Complex64::new(1.0, 0.0) };
    let dx = a.grid.dx();
    (a.psi.iter().zip(&b.psi).map(|(x, y)| (x - y * phase).norm_sqr()).sum::<f64>() * dx).sqrt()
}

/// `φ(X) = π^{-1/4} exp(-X²/2)`
pub fn gaussian_probe(grid: Grid) -> ProbeWavefunction {
    gaussian_at(grid, 0.0)
}

/// `φ(X - x0)` evaluated analytically.
pub fn gaussian_at(grid: Grid, x0: f64) -> ProbeWavefunction {
    let c = PI.powf(-0.25);
    ProbeWavefunction::from_fn(grid, |x| Complex64::new(c * (-(x - x0) * (x - x0) / 2.0).exp(), 0.0))
}

/// Normalized `Σ_n ((−iθK)^n/n!) μ_n φ(K)` with `μ_0 = 1` and
/// `μ_n = weak_moments[n − 1]`: the post-selected probe truncated after the
/// supplied moments.
pub fn moment_series_probe(grid: Grid, theta: f64, weak_moments: &[Complex64]) -> Result<ProbeWavefunction> {
    let c = PI.powf(-0.25);
    let values: Vec<Complex64> = grid
        .ks()
        .into_iter()
        .map(|k| {
            // analytic φ(K): FFT round-off would be amplified by the polynomial
            let p = c * (-k * k / 2.0).exp();
            let step = Complex64::new(0.0, -theta * k);
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = term;
            for (n, m) in weak_moments.iter().enumerate() {
                term = term * step / (n + 1) as f64;
                sum += term * m;
            }
            sum * p
        })
        .collect();
    ProbeWavefunction::from_fourier(grid, &values)?.normalize()
}

/// Means and (co)variances of the conjugate pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSpaceMoments {
    pub mean_x: f64,
    pub mean_k: f64,
    pub var_x: f64,
    pub var_k: f64,
    /// `⟨(X̂K̂ + K̂X̂)/2⟩ − ⟨X̂⟩⟨K̂⟩`
    pub cov_xk: f64,
}

impl PhaseSpaceMoments {
    /// Moments of `M̂(α) = X̂ cos α + K̂ sin α`.
    pub fn quadrature(&self, alpha: f64) -> QuadratureMoments {
        let (s, c) = alpha.sin_cos();
        QuadratureMoments {
            alpha,
            mean: c * self.mean_x + s * self.mean_k,
            variance: c * c * self.var_x + s * s * self.var_k + 2.0 * s * c * self.cov_xk,
        }
    }
}

/// Mean and variance of `M̂(α)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureMoments {
    pub alpha: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `|F_α[ψ](m)|²` over the grid.
pub fn quadrature_moments(psi: &ProbeWavefunction, alpha: f64) -> Result<QuadratureMoments> {
    let psi = psi.normalize()?;
    let rotated = fracft::frft(&psi, alpha)?;
    let (mean, second) = position_moments_raw(&rotated);
    Ok(QuadratureMoments { alpha, mean, variance: second - mean * mean })
}

/// Quadrature moments of an incoherent mixture `Σ ψ_k ψ_k†` of
/// non-normalized components; each weight is the component's squared norm.
pub fn mixture_quadrature_moments(
    components: &[ProbeWavefunction],
    alpha: f64,
) -> Result<QuadratureMoments> {
    let mut total = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for c in components {
        let w = c.norm_sqr();
        if w < ORTHOGONAL_NORM_FLOOR * ORTHOGONAL_NORM_FLOOR {
            continue;
        }
        let q = quadrature_moments(c, alpha)?;
        total += w;
        first += w * q.mean;
        second += w * (q.variance + q.mean * q.mean);
    }
    if !(total.sqrt() >= ORTHOGONAL_NORM_FLOOR) {
        return Err(Error::OrthogonalPostSelection { norm: total.sqrt() });
    }
    let mean = first / total;
    Ok(QuadratureMoments { alpha, mean, variance: second / total - mean * mean })
}

fn position_moments_raw(psi: &ProbeWavefunction) -> (f64, f64) {
    let dx = psi.grid.dx();
    let norm = psi.norm_sqr();
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (k, v) in psi.psi.iter().enumerate() {
        let x = psi.grid.x(k);
        let p = v.norm_sqr() * dx;
        m1 += x * p;
        m2 += x * x * p;
    }
    (m1 / norm, m2 / norm)
}

/// Wavenumber axis of a Wigner evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum KAxis {
    /// The FFT lattice `K_m = mπ/(n·dx)`, `m = -n/2 … n/2 - 1`.
    Native,
    Samples(Vec<f64>),
}

/// `W(X_i, K_j)` stored row-major, one row per X sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerMap {
    pub xs: Vec<f64>,
    pub ks: Vec<f64>,
    pub values: Vec<f64>,
}

impl WignerMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ks.len() + j]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `W(X,K) = (1/π) ∫ ψ*(X+y) ψ(X−y) e^{2iKy} dy`
///
/// X samples off the grid are handled by a band-limited shift of ψ. The
/// native K axis spans `±π/(2dx)` with spacing `π/(n·dx)`.
pub fn wigner(psi: &ProbeWavefunction, xs: &[f64], k_axis: &KAxis) -> Result<WignerMap> {
    let psi = psi.normalize()?;
    let grid = psi.grid;
    let n = grid.n();
    let dx = grid.dx();
    let half_span = grid.k_max() / 2.0;
    for &x in xs {
        if !(x >= -grid.x_max() && x <= grid.x_max()) {
            return Err(Error::SampleOutOfRange { value: x, min: -grid.x_max(), max: grid.x_max() });
        }
    }
    let ks: Vec<f64> = match k_axis {
        KAxis::Native => (0..n).map(|m| (m as f64 - (n / 2) as f64) * PI / (n as f64 * dx)).collect(),
        KAxis::Samples(ks) => {
            for &k in ks {
                if !(k.abs() <= half_span) {
                    return Err(Error::SampleOutOfRange { value: k, min: -half_span, max: half_span });
                }
            }
            ks.clone()
        }
    };
    let plan = FftPlan::new(n);
    let mut values = Vec::with_capacity(xs.len() * ks.len());
    for &x in xs {
        let i = grid.nearest_index(x);
        let offset = x - grid.x(i);
        let shifted;
        let amps = if offset.abs() > 1e-12 * dx {
            shifted = psi.shifted(-offset)?;
            shifted.amplitudes()
        } else {
            psi.amplitudes()
        };
        // f_j = ψ*(x_i + j dx) ψ(x_i − j dx), j wrapped into 0..n
        let mut f = vec![ZERO; n];
        let jmax = (n / 2) as isize;
        for j in (-jmax + 1)..jmax {
            let p = i as isize + j;
            let q = i as isize - j;
            if p < 0 || q < 0 || p >= n as isize || q >= n as isize {
                continue;
            }
            f[j.rem_euclid(n as isize) as usize] = amps[p as usize].conj() * amps[q as usize];
        }
        match k_axis {
            KAxis::Native => {
                plan.process(&mut f, crate::fft::Direction::Inverse);
                for m in 0..n {
                    // K index m ↔ frequency m - n/2
                    let idx = (m + n - n / 2) % n;
                    values.push(f[idx].re * dx / PI);
                }
            }
            KAxis::Samples(_) => {
                for &k in &ks {
                    let mut acc = 0.0;
                    for j in (-jmax + 1)..jmax {
                        let v = f[j.rem_euclid(n as isize) as usize];
                        if v == ZERO {
                            continue;
                        }
                        let ph = 2.0 * k * j as f64 * dx;
                        acc += v.re * ph.cos() - v.im * ph.sin();
                    }
                    values.push(acc * dx / PI);
                }
            }
        }
    }
    Ok(WignerMap { xs: xs.to_vec(), ks, values })
}
