//! Probe waveform control through weak moments.
//!
//! After post-selection the probe in K space is
//! `φ̃(K) ∝ Σ_n ((−iθ)^n/n!) ⟨Â^n⟩_w K^n φ(K)`, so matching the first `d`
//! moments makes it follow a target `φ_⋆(K)` up to a term of order
//! `θ^{d+1}`. An observable with `d + 1` distinct eigenvalues has exactly
//! `d` free weak-valued probabilities once `Σ_j p_wj = 1` is imposed.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::hilbert::{least_squares, CMatrix, HermitianObservable, SystemState, TargetState};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use crate::num::Float;
use crate::probe::{gaussian_probe, Grid, ProbeWavefunction};
use crate::vnsim::{evolve, post_select, CouplingConfig};
use crate::weakstats::moments_of;
use crate::{Error, Result};

/// Default half-width of the matching window in K.
pub const DEFAULT_WINDOW: f64 = 4.0;

/// Fits with a QR condition estimate above this are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Minimum eigenvalue gap for the moment ↔ probability map.
pub const MIN_EIGEN_GAP: f64 = 1e-8;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Target waveform and the resources available to shape toward it.
#[derive(Clone, Debug)]
pub struct ShapingProblem {
    pub grid: Grid,
    /// `φ_⋆(K)` on `grid.ks()`.
    pub target: Vec<Complex64>,
    pub observable: HermitianObservable,
    pub theta: f64,
    /// Number of matched moments `d`.
    pub order: usize,
    pub window: f64,
}

impl ShapingProblem {
    pub fn new(
        grid: Grid,
        target: Vec<Complex64>,
        observable: HermitianObservable,
        theta: f64,
        order: usize,
    ) -> Result<Self> {
        if target.len() != grid.n() {
            return Err(Error::DimensionMismatch { expected: grid.n(), got: target.len() });
        }
        if order == 0 {
            return Err(Error::InvalidParameter("shaping order must be at least 1".into()));
        }
        let levels = observable.spectrum().len();
        if levels != order + 1 {
            return Err(Error::InvalidParameter(alloc::format!(
                "order {order} needs an observable with {} distinct eigenvalues, got {levels}",
                order + 1
            )));
        }
        if !(theta.is_finite() && theta != 0.0) {
            return Err(Error::InvalidParameter("shaping needs a nonzero finite θ".into()));
        }
        Ok(Self { grid, target, observable, theta, order, window: DEFAULT_WINDOW })
    }

    pub fn from_fn(
        grid: Grid,
        target: impl Fn(f64) -> Complex64,
        observable: HermitianObservable,
        theta: f64,
        order: usize,
    ) -> Result<Self> {
        let t = grid.ks().into_iter().map(target).collect();
        Self::new(grid, t, observable, theta, order)
    }

    pub fn with_window(mut self, window: f64) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::InvalidParameter("window half-width must be positive".into()));
        }
        self.window = window;
        Ok(self)
    }

    fn window_indices(&self) -> Vec<usize> {
        let ks = self.grid.ks();
        (0..ks.len()).filter(|&m| ks[m].abs() <= self.window).collect()
    }
}

/// Polynomial fit of `φ_⋆/φ` and the weak moments it implies.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentFit {
    /// `[⟨Â⟩_w, …, ⟨Â^d⟩_w]`
    pub moments: Vec<Complex64>,
    /// `c_0 … c_d` with `c_0 = 1`.
    pub coefficients: Vec<Complex64>,
    /// Weighted `L²` misfit of the polynomial on the window.
    pub fit_residual: f64,
    pub condition: f64,
}

/// Weighted (`|φ|²`) degree-`d` least-squares fit of `φ_⋆(K)/φ(K)` on the
/// window, mapped to moments by `⟨Â^n⟩_w = n!·c_n/(−iθ)^n`.
pub fn match_moments(problem: &ShapingProblem) -> Result<MomentFit> {
    let phi = gaussian_probe(problem.grid).fourier();
    let ks = problem.grid.ks();
    let idx = problem.window_indices();
    let d = problem.order;
    if idx.len() < 2 * (d + 1) {
        return Err(Error::InvalidParameter("matching window holds too few grid points".into()));
    }
    let kw = problem.window;
    let mut rows = Vec::with_capacity(idx.len());
    let mut rhs = Vec::with_capacity(idx.len());
    for &m in &idx {
        let w = phi[m].norm();
        if w <= 1e-12 {
            return Err(Error::InvalidParameter(alloc::format!(
                "base probe vanishes at K = {}; shrink the window",
                ks[m]
            )));
        }
        let u = ks[m] / kw;
        let mut pow = 1.0;
        let mut row = Vec::with_capacity(d + 1);
        for _ in 0..=d {
            row.push(Complex64::new(w * pow, 0.0));
            pow *= u;
        }
        rows.push(row);
        rhs.push(problem.target[m] / phi[m] * w);
    }
    let sol = least_squares(&rows, &rhs)?;
    if sol.condition_estimate > MAX_CONDITION {
        return Err(Error::IllConditioned { condition: sol.condition_estimate });
    }
    let mut coefficients: Vec<Complex64> =
        sol.solution.iter().enumerate().map(|(n, c)| c / kw.powi(n as i32)).collect();
    let c0 = coefficients[0];
    if c0.norm() < 1e-14 {
        return Err(Error::InvalidParameter("target has no component along the base probe".into()));
    }
    for c in coefficients.iter_mut() {
        *c /= c0;
    }
    coefficients[0] = ONE;
    let mut fact = 1.0;
    let mut moments = Vec::with_capacity(d);
    for n in 1..=d {
        fact *= n as f64;
        let denom = Complex64::new(0.0, -problem.theta).powi(n as i32);
        moments.push(coefficients[n] * fact / denom);
    }
    let fit_residual = sol.residual * problem.grid.dk().sqrt() / c0.norm();
    Ok(MomentFit { moments, coefficients, fit_residual, condition: sol.condition_estimate })
}

/// Weak-valued probabilities reproducing a moment sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbSolution {
    pub probs: Vec<Complex64>,
    /// `‖V p − μ‖₂` over the moment rows; zero for a consistent system.
    pub consistency_residual: f64,
}

/// Solves `Σ_j a_j^n p_j = ⟨Â^n⟩_w` (`n = 1 … m`) with `Σ_j p_j = 1` exactly.
pub fn moments_to_probs(moments: &[Complex64], eigenvalues: &[f64]) -> Result<ProbSolution> {
    let j = eigenvalues.len();
    if j == 0 {
        return Err(Error::InvalidParameter("no eigenvalues".into()));
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[1] - w[0] < MIN_EIGEN_GAP {
            return Err(Error::NearDegenerate { a: w[0], b: w[1] });
        }
    }
    if j == 1 {
        let residual = moments
            .iter()
            .enumerate()
            .map(|(n, m)| (m - eigenvalues[0].powi(n as i32 + 1)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        return Ok(ProbSolution { probs: vec![ONE], consistency_residual: residual });
    }
    if moments.len() < j - 1 {
        return Err(Error::InvalidParameter(alloc::format!(
            "{} moments cannot fix {} probabilities",
            moments.len(),
            j
        )));
    }
    // eliminate the last probability through Σ p = 1
    let last = eigenvalues[j - 1];
    let rows: Vec<Vec<Complex64>> = (1..=moments.len())
        .map(|n| {
            (0..j - 1)
                .map(|k| Complex64::new(eigenvalues[k].powi(n as i32) - last.powi(n as i32), 0.0))
                .collect()
        })
        .collect();
    let rhs: Vec<Complex64> =
        moments.iter().enumerate().map(|(i, m)| m - last.powi(i as i32 + 1)).collect();
    let sol = least_squares(&rows, &rhs)?;
    let mut probs = sol.solution;
    let rest: Complex64 = probs.iter().sum();
    probs.push(ONE - rest);
    Ok(ProbSolution { probs, consistency_residual: sol.residual })
}

/// Pre-selected state realizing requested weak-valued probabilities.
#[derive(Clone, Debug, PartialEq)]
pub enum Realization {
    Feasible {
        pre: TargetState,
        /// `|⟨f|i⟩|²`
        success_prob: f64,
    },
    /// `Π_j|f⟩ = 0` while `p_wj ≠ 0`.
    Infeasible { index: usize },
}

impl Realization {
    pub fn pre(&self) -> Option<&TargetState> {
        match self {
            Self::Feasible { pre, .. } => Some(pre),
            Self::Infeasible { .. } => None,
        }
    }
}

/// `|i⟩ ∝ Σ_j p_wj Π_j|f⟩/‖Π_j|f⟩‖²`, which gives `⟨Π_j⟩_w = p_wj` whenever
/// `Σ_j p_wj = 1`.
pub fn realize_selection(probs: &[Complex64], projectors: &[CMatrix], post: &TargetState) -> Result<Realization> {
    if probs.len() != projectors.len() {
        return Err(Error::DimensionMismatch { expected: projectors.len(), got: probs.len() });
    }
    let total: Complex64 = probs.iter().sum();
    let scale: f64 = probs.iter().map(|p| p.norm()).sum::<f64>().max(1.0);
    if (total - ONE).norm() > 1e-10 * scale {
        return Err(Error::InvalidParameter(alloc::format!("weak-valued probabilities sum to {total}")));
    }
    if scale > 1.0 / 1e-10 {
        // cancellation between huge entries leaves nothing meaningful
        return Err(Error::IllConditioned { condition: scale });
    }
    let dim = post.dim();
    let mut amps = vec![ZERO; dim];
    for (k, (p, proj)) in probs.iter().zip(projectors).enumerate() {
        if proj.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: proj.dim() });
        }
        let v = proj.mul_vec(post.amplitudes());
        let n2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if n2 < 1e-24 {
            if p.norm() > 1e-12 {
                return Ok(Realization::Infeasible { index: k });
            }
            continue;
        }
        for (a, x) in amps.iter_mut().zip(&v) {
            *a += x * (p / n2);
        }
    }
    let pre = TargetState::new(amps)?;
    let success_prob = post.inner(&pre).norm_sqr();
    Ok(Realization::Feasible { pre, success_prob })
}

/// Moments, probabilities and realization for one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapingSolution {
    pub weak_moments: Vec<Complex64>,
    pub weak_probs: Vec<Complex64>,
    pub realization: Realization,
    pub post: TargetState,
    pub fit: MomentFit,
}

/// Full pipeline: fit, convert to probabilities, realize with `post`.
pub fn solve(problem: &ShapingProblem, post: &TargetState) -> Result<ShapingSolution> {
    let fit = match_moments(problem)?;
    let probs = moments_to_probs(&fit.moments, &problem.observable.eigenvalues())?;
    let realization = realize_selection(&probs.probs, &problem.observable.projectors(), post)?;
    Ok(ShapingSolution {
        weak_moments: fit.moments.clone(),
        weak_probs: probs.probs,
        realization,
        post: post.clone(),
        fit,
    })
}

/// Outcome of simulating a realized selection.
#[derive(Clone, Debug)]
pub struct ShapeReport {
    /// Windowed `L²` distance between the normalized achieved and target
    /// K-space waveforms, modulo a global phase.
    pub achieved_error: f64,
    /// Size of the first neglected series term on the window.
    pub truncation_bound: f64,
    pub achieved: ProbeWavefunction,
    pub success_prob: f64,
}

pub fn verify_shape(solution: &ShapingSolution, problem: &ShapingProblem) -> Result<ShapeReport> {
    let pre = solution
        .realization
        .pre()
        .ok_or_else(|| Error::InvalidParameter("selection is not realizable".into()))?;
    let cfg = CouplingConfig::new(problem.theta, problem.observable.clone())?;
    let joint = evolve(&SystemState::Pure(pre.clone()), &gaussian_probe(problem.grid), &cfg)?;
    let post = post_select(&joint, &SystemState::Pure(solution.post.clone()))?;
    let achieved = post.psi_tilde().expect("pure selection").normalize()?;
    let idx = problem.window_indices();
    let dk = problem.grid.dk();
    let spec = achieved.fourier();
    let a: Vec<Complex64> = idx.iter().map(|&m| spec[m]).collect();
    let b: Vec<Complex64> = idx.iter().map(|&m| problem.target[m]).collect();
    let achieved_error = windowed_distance(&a, &b, dk);

    let d = problem.order;
    let eig = problem.observable.eigenvalues();
    let next = moments_of(&solution.weak_probs, &eig, d + 1)[d + 1];
    let mut fact = 1.0;
    for n in 1..=d + 1 {
        fact *= n as f64;
    }
    let phi = gaussian_probe(problem.grid).fourier();
    let ks = problem.grid.ks();
    let tail: f64 = idx.iter().map(|&m| (ks[m].powi(d as i32 + 1) * phi[m].norm()).powi(2)).sum::<f64>() * dk;
    let truncation_bound = problem.theta.abs().powi(d as i32 + 1) / fact * next.norm() * tail.sqrt();
    Ok(ShapeReport { achieved_error, truncation_bound, achieved, success_prob: post.success_prob })
}

fn windowed_distance(a: &[Complex64], b: &[Complex64], dk: f64) -> f64 {
    let na = (a.iter().map(|v| v.norm_sqr()).sum::<f64>() * dk).sqrt();
    let nb = (b.iter().map(|v| v.norm_sqr()).sum::<f64>() * dk).sqrt();
    if na == 0.0 || nb == 0.0 {
        return f64::INFINITY;
    }
    let ov: Complex64 = a.iter().zip(b).map(|(x, y)| y.conj() * x).sum();
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { ONE };
    (a.iter().zip(b).map(|(x, y)| (x / na - y / nb * phase).norm_sqr()).sum::<f64>() * dk).sqrt()
}

/// Observable with eigenvalues evenly spaced on `[−1, 1]` in the computational basis.
pub fn ladder_observable(levels: usize) -> Result<HermitianObservable> {
    if levels < 2 {
        return Err(Error::InvalidParameter("need at least two levels".into()));
    }
    let vals: Vec<f64> = (0..levels).map(|k| -1.0 + 2.0 * k as f64 / (levels - 1) as f64).collect();
    HermitianObservable::diagonal(&vals)
}

/// Equal superposition of the computational basis.
pub fn uniform_post(dim: usize) -> TargetState {
    TargetState::new(vec![ONE; dim]).expect("nonzero")
}
