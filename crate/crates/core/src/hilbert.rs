//! Dense complex linear algebra for small target Hilbert spaces (d ≤ 16).
//!
//! Matrices are row-major [`CMatrix`] values. Hermitian spectra come from a
//! cyclic complex Jacobi sweep; degenerate eigenvalues are merged into a
//! single projector, so callers compare projectors, never eigenvector phases.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use crate::num::Float;
use crate::{Error, Result};

/// Eigenvalues closer than this are merged into one eigenspace.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// Hermiticity tolerance for observables.
pub const HERMITIAN_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from rows; all rows must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(*v, 0.0);
        }
        m
    }

    /// `|u⟩⟨v|`
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        assert_eq!(u.len(), v.len());
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Integer power, `m⁰ = 1`.
    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// `max |m_ij − conj(m_ji)|`
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

/// `⟨u|v⟩`
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Normalized pure state of the target system.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetState {
    amps: Vec<Complex64>,
}

impl TargetState {
    /// Normalizes `amps`; the zero vector is rejected.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let n = vec_norm(&amps);
        if amps.is_empty() || !(n > 1e-300) || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self { amps: amps.into_iter().map(|a| a / n).collect() })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Computational basis vector `|k⟩` in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[k] = ONE;
        Self { amps }
    }

    /// `cos(ϑ/2)|0⟩ + e^{iφ} sin(ϑ/2)|1⟩`
    pub fn bloch(vartheta: f64, phi: f64) -> Self {
        let (s, c) = (vartheta / 2.0).sin_cos();
        Self { amps: vec![Complex64::new(c, 0.0), Complex64::from_polar(s, phi)] }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &TargetState) -> Complex64 {
        inner(&self.amps, &other.amps)
    }

    pub fn projector(&self) -> CMatrix {
        CMatrix::outer(&self.amps, &self.amps)
    }
}

/// Density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    matrix: CMatrix,
}

impl DensityOp {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let asym = matrix.max_asymmetry();
        if asym > 1e-12 {
            return Err(Error::NonHermitian { max_asymmetry: asym });
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > 1e-12 {
            return Err(Error::InvalidDensity(alloc::format!("trace {tr} differs from 1")));
        }
        let (values, _) = jacobi_eigen(&matrix);
        if let Some(&min) = values.first() {
            if min < -1e-10 {
                return Err(Error::InvalidDensity(alloc::format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn pure(state: &TargetState) -> Self {
        Self { matrix: state.projector() }
    }

    /// `1̂/d`
    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim).scale(Complex64::new(1.0 / dim as f64, 0.0)) }
    }

    /// Convex mixture `Σ w_k |ψ_k⟩⟨ψ_k|`; weights must be non-negative and sum to one.
    pub fn mixture(components: &[(f64, TargetState)]) -> Result<Self> {
        let dim = components.first().map(|c| c.1.dim()).ok_or(Error::ZeroVector)?;
        let mut m = CMatrix::zeros(dim);
        for (w, s) in components {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
            }
            m = m.add(&s.projector().scale(Complex64::new(*w, 0.0)));
        }
        Self::from_matrix(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Eigen-ensemble `(λ_r, |r⟩)` with weights above `1e-15`.
    pub fn ensemble(&self) -> Vec<(f64, TargetState)> {
        let (values, vectors) = jacobi_eigen(&self.matrix);
        values
            .into_iter()
            .zip(vectors)
            .filter(|(w, _)| *w > 1e-15)
            .filter_map(|(w, v)| TargetState::new(v).ok().map(|s| (w, s)))
            .collect()
    }

    pub fn is_pure(&self) -> bool {
        (self.matrix.mul(&self.matrix).trace().re - 1.0).abs() < 1e-12
    }
}

/// Pure or mixed state of the target system.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemState {
    Pure(TargetState),
    Mixed(DensityOp),
}

impl SystemState {
    pub fn dim(&self) -> usize {
        match self {
            Self::Pure(s) => s.dim(),
            Self::Mixed(r) => r.dim(),
        }
    }

    pub fn density(&self) -> DensityOp {
        match self {
            Self::Pure(s) => DensityOp::pure(s),
            Self::Mixed(r) => r.clone(),
        }
    }

    /// Eigen-ensemble; a pure state is its own single component.
    pub fn ensemble(&self) -> Vec<(f64, TargetState)> {
        match self {
            Self::Pure(s) => vec![(1.0, s.clone())],
            Self::Mixed(r) => r.ensemble(),
        }
    }

    pub fn as_pure(&self) -> Option<&TargetState> {
        match self {
            Self::Pure(s) => Some(s),
            Self::Mixed(_) => None,
        }
    }
}

impl From<TargetState> for SystemState {
    fn from(s: TargetState) -> Self {
        Self::Pure(s)
    }
}

impl From<DensityOp> for SystemState {
    fn from(r: DensityOp) -> Self {
        Self::Mixed(r)
    }
}

/// One eigenspace of a Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenspace {
    pub value: f64,
    pub projector: CMatrix,
    /// Orthonormal vectors spanning the eigenspace.
    pub vectors: Vec<Vec<Complex64>>,
}

impl Eigenspace {
    pub fn multiplicity(&self) -> usize {
        self.vectors.len()
    }
}

/// Cyclic complex Jacobi diagonalization of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order with matching orthonormal
/// eigenvectors. Only the Hermitian part of `m` is used.
pub fn jacobi_eigen(m: &CMatrix) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let d = m.dim();
    let mut a = m.clone();
    for i in 0..d {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
    }
    let mut v = CMatrix::identity(d);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off += a[(i, j)].norm_sqr();
                }
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let b = a[(p, q)];
                let babs = b.norm();
                if babs <= 1e-300 {
                    continue;
                }
                let phase = (b / babs).conj();
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * babs);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = diag(1, e^{-iφ}) · [[c, s], [-s, c]]
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = Complex64::new(s, 0.0);
                let u_qp = phase * (-s);
                let u_qq = phase * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * u_pp + akq * u_qp;
                    a[(k, q)] = akp * u_pq + akq * u_qq;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u_pp + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * u_qq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
                    a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|k| v[(k, i)]).collect()).collect();
    (values, vectors)
}

/// Spectral decomposition with degenerate eigenvalues merged.
///
/// Eigenvalues within `degeneracy_tol` of their sorted neighbour share one
/// projector; the reported eigenvalue is the group mean.
pub fn eig_hermitian(m: &CMatrix, degeneracy_tol: f64) -> Result<Vec<Eigenspace>> {
    let asym = m.max_asymmetry();
    if asym > HERMITIAN_TOL {
        return Err(Error::NonHermitian { max_asymmetry: asym });
    }
    let (values, vectors) = jacobi_eigen(m);
    let d = m.dim();
    let mut spaces: Vec<Eigenspace> = Vec::new();
    let mut last: Option<f64> = None;
    let mut members = 0usize;
    for (val, vec) in values.into_iter().zip(vectors) {
        let merge = matches!(last, Some(prev) if (val - prev).abs() <= degeneracy_tol);
        if merge {
            let sp = spaces.last_mut().expect("merge implies an open eigenspace");
            sp.value = (sp.value * members as f64 + val) / (members + 1) as f64;
            sp.projector = sp.projector.add(&CMatrix::outer(&vec, &vec));
            sp.vectors.push(vec);
            members += 1;
        } else {
            spaces.push(Eigenspace {
                value: val,
                projector: CMatrix::outer(&vec, &vec),
                vectors: vec![vec],
            });
            members = 1;
        }
        last = Some(val);
    }
    debug_assert_eq!(spaces.iter().map(Eigenspace::multiplicity).sum::<usize>(), d);
    Ok(spaces)
}

/// Hermitian observable `Â = Σ_j a_j Π_j` with its merged spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianObservable {
    matrix: CMatrix,
    spectrum: Vec<Eigenspace>,
}

impl HermitianObservable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_degeneracy_tol(matrix, DEFAULT_DEGENERACY_TOL)
    }

    pub fn with_degeneracy_tol(matrix: CMatrix, tol: f64) -> Result<Self> {
        let spectrum = eig_hermitian(&matrix, tol)?;
        Ok(Self { matrix, spectrum })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(CMatrix::from_real_diagonal(values))
    }

    /// `Σ_j a_j |v_j⟩⟨v_j|` for an orthonormal basis `vectors`.
    pub fn from_eigenbasis(values: &[f64], basis: &OrthonormalBasis) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: values.len() });
        }
        let mut m = CMatrix::zeros(basis.dim());
        for (a, v) in values.iter().zip(basis.vectors()) {
            m = m.add(&CMatrix::outer(v, v).scale(Complex64::new(*a, 0.0)));
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &[Eigenspace] {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectrum.iter().map(|s| s.value).collect()
    }

    pub fn projectors(&self) -> Vec<CMatrix> {
        self.spectrum.iter().map(|s| s.projector.clone()).collect()
    }

    /// `‖Â‖ = max_j |a_j|`
    pub fn norm(&self) -> f64 {
        self.spectrum.iter().map(|s| s.value.abs()).fold(0.0, f64::max)
    }

    /// Every eigenvalue is simple.
    pub fn is_nondegenerate(&self) -> bool {
        self.spectrum.iter().all(|s| s.multiplicity() == 1)
    }

    /// `⟨ψ|Â|ψ⟩`
    pub fn expectation(&self, state: &TargetState) -> f64 {
        inner(state.amplitudes(), &self.matrix.mul_vec(state.amplitudes())).re
    }

    /// `⟨Â²⟩ − ⟨Â⟩²`
    pub fn variance(&self, state: &TargetState) -> f64 {
        let mean = self.expectation(state);
        let a2 = self.matrix.mul(&self.matrix);
        inner(state.amplitudes(), &a2.mul_vec(state.amplitudes())).re - mean * mean
    }
}

/// Orthonormal list of vectors (not necessarily complete).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis {
    dim: usize,
    vectors: Vec<Vec<Complex64>>,
}

impl OrthonormalBasis {
    /// Rejects lists whose Gram matrix deviates from identity by more than `1e-10`.
    pub fn new(vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).ok_or(Error::ZeroVector)?;
        let mut worst = 0.0_f64;
        for (i, u) in vectors.iter().enumerate() {
            if u.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: u.len() });
            }
            for (j, v) in vectors.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((inner(u, v) - target).norm());
            }
        }
        if worst > 1e-10 || vectors.len() > dim {
            return Err(Error::NonOrthonormalBasis { deviation: worst });
        }
        Ok(Self { dim, vectors })
    }

    pub fn from_states(states: &[TargetState]) -> Result<Self> {
        Self::new(states.iter().map(|s| s.amplitudes().to_vec()).collect())
    }

    pub fn computational(dim: usize) -> Self {
        Self { dim, vectors: (0..dim).map(|k| TargetState::basis(dim, k).amps).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.vectors.len() == self.dim
    }

    pub fn vectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }

    pub fn state(&self, k: usize) -> TargetState {
        TargetState { amps: self.vectors[k].clone() }
    }
}

/// `p_j = ⟨i|Π_j|i⟩`
pub fn projection_probability(state: &TargetState, proj: &CMatrix) -> Result<f64> {
    if proj.dim() != state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: proj.dim() });
    }
    Ok(inner(state.amplitudes(), &proj.mul_vec(state.amplitudes())).re)
}

/// `max |Σ_j Π_j − 1̂|`
pub fn completeness_deficiency(projectors: &[CMatrix]) -> f64 {
    let Some(first) = projectors.first() else {
        return f64::INFINITY;
    };
    let mut sum = CMatrix::zeros(first.dim());
    for p in projectors {
        if p.dim() != first.dim() {
            return f64::INFINITY;
        }
        sum = sum.add(p);
    }
    sum.max_abs_diff(&CMatrix::identity(first.dim()))
}

/// Least-squares solution of an `m × n` complex system (`m ≥ n`).
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub solution: Vec<Complex64>,
    /// `‖A x − b‖₂`
    pub residual: f64,
    /// `max |R_ii| / min |R_ii|` from the QR factor.
    pub condition_estimate: f64,
}

/// Householder QR least squares. `rows` is row-major `m × n`.
pub fn least_squares(rows: &[Vec<Complex64>], rhs: &[Complex64]) -> Result<LeastSquares> {
    let m = rows.len();
    let n = rows.first().map(Vec::len).unwrap_or(0);
    if m != rhs.len() {
        return Err(Error::DimensionMismatch { expected: m, got: rhs.len() });
    }
    if n == 0 || m < n {
        return Err(Error::InvalidParameter(alloc::format!(
            "least squares needs at least as many rows as columns ({m} < {n})"
        )));
    }
    let mut a: Vec<Vec<Complex64>> = rows.to_vec();
    let mut b = rhs.to_vec();
    for k in 0..n {
        let norm_x = (k..m).map(|i| a[i][k].norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let x0 = a[k][k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * norm_x;
        let mut v: Vec<Complex64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm = vec_norm(&v);
        if vnorm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        for j in k..n {
            let dot: Complex64 = (k..m).map(|i| v[i - k].conj() * a[i][j]).sum();
            for i in k..m {
                a[i][j] -= v[i - k] * dot * 2.0;
            }
        }
        let dot: Complex64 = (k..m).map(|i| v[i - k].conj() * b[i]).sum();
        for i in k..m {
            b[i] -= v[i - k] * dot * 2.0;
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| a[i][i].norm()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_estimate = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if !condition_estimate.is_finite() {
        return Err(Error::IllConditioned { condition: condition_estimate });
    }
    let mut x = vec![ZERO; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    let residual = b[n..].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok(LeastSquares { solution: x, residual, condition_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d);
        for i in 0..d {
            m[(i, i)] = c(rng.random_range(-2.0..2.0), 0.0);
            for j in (i + 1)..d {
                let z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn diagonal_spectrum() {
        let obs = HermitianObservable::diagonal(&[1.0, -1.0]).unwrap();
        let sp = obs.spectrum();
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[0].value, -1.0);
        assert_eq!(sp[1].value, 1.0);
        let p1 = CMatrix::outer(TargetState::basis(2, 1).amplitudes(), TargetState::basis(2, 1).amplitudes());
        assert!(sp[0].projector.max_abs_diff(&p1) < 1e-14);
    }

    #[test]
    fn pauli_x_projectors_are_diagonal_antidiagonal() {
        let m = CMatrix::from_rows(&[vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]]).unwrap();
        let obs = HermitianObservable::new(m).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let d = TargetState::from_real(&[h, h]).unwrap();
        let a = TargetState::from_real(&[h, -h]).unwrap();
        assert!((obs.spectrum()[0].value + 1.0).abs() < 1e-14);
        assert!(obs.spectrum()[0].projector.max_abs_diff(&a.projector()) < 1e-14);
        assert!(obs.spectrum()[1].projector.max_abs_diff(&d.projector()) < 1e-14);
    }

    #[test]
    fn random_reconstruction_completeness_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let d = 2 + trial % 15;
            let d = if trial < 50 { 4 } else { d };
            let m = random_hermitian(&mut rng, d);
            let obs = HermitianObservable::new(m.clone()).unwrap();
            let mut recon = CMatrix::zeros(d);
            let mut sum = CMatrix::zeros(d);
            for s in obs.spectrum() {
                recon = recon.add(&s.projector.scale(c(s.value, 0.0)));
                sum = sum.add(&s.projector);
            }
            assert!(recon.max_abs_diff(&m) < 1e-10, "reconstruction d={d}");
            assert!(sum.max_abs_diff(&CMatrix::identity(d)) < 1e-10);
            for (j, pj) in obs.spectrum().iter().enumerate() {
                for (k, pk) in obs.spectrum().iter().enumerate() {
                    let prod = pj.projector.mul(&pk.projector);
                    let expect = if j == k { pj.projector.clone() } else { CMatrix::zeros(d) };
                    assert!(prod.max_abs_diff(&expect) < 1e-10);
                }
            }
            let vals = obs.eigenvalues();
            assert!(vals.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn degenerate_eigenvalues_merge() {
        // U diag(2, 2, -1) U† for a non-trivial unitary
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let basis = OrthonormalBasis::new(vec![
            vec![c(h, 0.), c(0., h), c(0., 0.)],
            vec![c(h, 0.), c(0., -h), c(0., 0.)],
            vec![c(0., 0.), c(0., 0.), c(0., 1.)],
        ])
        .unwrap();
        let obs = HermitianObservable::from_eigenbasis(&[2.0, 2.0, -1.0], &basis).unwrap();
        assert_eq!(obs.spectrum().len(), 2);
        assert_eq!(obs.spectrum()[1].multiplicity(), 2);
        assert!((obs.spectrum()[1].value - 2.0).abs() < 1e-12);
        assert!(!obs.is_nondegenerate());
    }

    #[test]
    fn non_hermitian_rejected_with_asymmetry() {
        let m = CMatrix::from_rows(&[vec![c(0., 0.), c(1., 0.)], vec![c(0.5, 0.), c(0., 0.)]]).unwrap();
        match HermitianObservable::new(m) {
            Err(Error::NonHermitian { max_asymmetry }) => assert!((max_asymmetry - 0.5).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_state_rejected() {
        assert_eq!(TargetState::new(vec![ZERO, ZERO]), Err(Error::ZeroVector));
    }

    #[test]
    fn projection_probability_examples() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let d = TargetState::from_real(&[h, h]).unwrap();
        let hs = TargetState::basis(2, 0);
        assert!((projection_probability(&d, &d.projector()).unwrap() - 1.0).abs() < 1e-15);
        assert!((projection_probability(&hs, &d.projector()).unwrap() - 0.5).abs() < 1e-15);
        let i = TargetState::bloch(core::f64::consts::FRAC_PI_3, 0.7);
        let p0 = TargetState::basis(2, 0).projector();
        // direct inner product oracle
        let amp = i.amplitudes()[0];
        assert!((projection_probability(&i, &p0).unwrap() - amp.norm_sqr()).abs() < 1e-15);
        assert!((projection_probability(&i, &p0).unwrap() - 0.75).abs() < 1e-12);
        assert!(projection_probability(&i, &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn density_validation() {
        let rho = DensityOp::maximally_mixed(3);
        assert!(DensityOp::from_matrix(rho.matrix().clone()).is_ok());
        assert!(DensityOp::from_matrix(CMatrix::identity(2)).is_err());
        let bad = CMatrix::from_real_diagonal(&[1.5, -0.5]);
        assert!(matches!(DensityOp::from_matrix(bad), Err(Error::InvalidDensity(_))));
        let ens = rho.ensemble();
        assert_eq!(ens.len(), 3);
        assert!(ens.iter().all(|(w, _)| (w - 1.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let rows = vec![
            vec![c(1., 0.), c(1., 0.)],
            vec![c(1., 0.), c(-1., 0.)],
            vec![c(1., 0.), c(1., 0.)],
        ];
        let x = [c(0.3, -1.0), c(2.0, 0.5)];
        let b: Vec<Complex64> = rows.iter().map(|r| r[0] * x[0] + r[1] * x[1]).collect();
        let sol = least_squares(&rows, &b).unwrap();
        for (a, e) in sol.solution.iter().zip(x) {
            assert!((a - e).norm() < 1e-14);
        }
        assert!(sol.residual < 1e-14);
    }

    #[test]
    fn orthonormal_basis_rejects_skewed_vectors() {
        assert!(OrthonormalBasis::new(vec![vec![c(1., 0.), c(0., 0.)], vec![c(1., 0.), c(1., 0.)]]).is_err());
    }
}
