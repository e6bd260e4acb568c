//! Exact von Neumann coupling `exp(−iθ Â⊗K̂)`, post-selection and probe
//! readout, plus the second-order perturbative predictions they are
//! checked against.
//!
//! Each eigenbranch `Π_j|i⟩` carries the probe shifted to `φ(X − θa_j)`.
//! Shifts are applied as a K-space phase ramp, so they need not fall on
//! grid points.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::hilbert::{inner, HermitianObservable, SystemState};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use crate::num::Float;
use crate::probe::{
    mixture_quadrature_moments, quadrature_moments, Grid, ProbeWavefunction, QuadratureMoments,
};
use crate::weakstats::{Selection, WeakStats};
use crate::{Error, Result};

/// Minimum clearance, in probe widths, between a shifted probe and the grid edge.
pub const SHIFT_MARGIN: f64 = 8.0;

/// Success probabilities below this count as an orthogonal post-selection.
pub const SUCCESS_FLOOR: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strength {
    /// `θ‖Â‖ < 1`
    Weak,
    Strong,
}

/// Coupling strength θ and the measured observable.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingConfig {
    theta: f64,
    observable: HermitianObservable,
}

impl CouplingConfig {
    pub fn new(theta: f64, observable: HermitianObservable) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("coupling θ = {theta} is not finite")));
        }
        Ok(Self { theta, observable })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn observable(&self) -> &HermitianObservable {
        &self.observable
    }

    /// `‖Â‖ = max_j |a_j|`
    pub fn norm(&self) -> f64 {
        self.observable.norm()
    }

    pub fn strength(&self) -> Strength {
        if self.theta.abs() * self.norm() < 1.0 {
            Strength::Weak
        } else {
            Strength::Strong
        }
    }

    /// `θ a_j` for each eigenspace.
    pub fn shifts(&self) -> Vec<f64> {
        self.observable.spectrum().iter().map(|s| self.theta * s.value).collect()
    }
}

/// One member `(w_r, |r⟩)` of the pre-selected ensemble after coupling.
#[derive(Clone, Debug)]
pub struct JointComponent {
    pub weight: f64,
    /// `Π_j|r⟩` for each eigenspace `j`.
    pub branches: Vec<Vec<Complex64>>,
}

/// `Σ_j Π_j|r⟩ ⊗ φ(X − θa_j)` for every ensemble member.
#[derive(Clone, Debug)]
pub struct JointState {
    pub components: Vec<JointComponent>,
    /// `φ(X − θa_j)`, shared by all members.
    pub shifted_probes: Vec<ProbeWavefunction>,
    pub shifts: Vec<f64>,
}

impl JointState {
    /// Probe position density after tracing out the target:
    /// `P(X) = Σ_j p_j |φ(X − θa_j)|²`.
    pub fn position_distribution(&self) -> Vec<f64> {
        let n = self.shifted_probes[0].grid().n();
        let mut out = alloc::vec![0.0; n];
        for c in &self.components {
            for (b, probe) in c.branches.iter().zip(&self.shifted_probes) {
                let p = c.weight * b.iter().map(|v| v.norm_sqr()).sum::<f64>();
                for (o, v) in out.iter_mut().zip(probe.amplitudes()) {
                    *o += p * v.norm_sqr();
                }
            }
        }
        out
    }

    /// Total norm of the joint state; 1 for a normalized input probe.
    pub fn total_norm(&self) -> f64 {
        let mut total = 0.0;
        for c in &self.components {
            for (b, probe) in c.branches.iter().zip(&self.shifted_probes) {
                total += c.weight * b.iter().map(|v| v.norm_sqr()).sum::<f64>() * probe.norm_sqr();
            }
        }
        total
    }

    /// Reduced probe state without post-selection, as incoherent components.
    pub fn unconditioned_components(&self) -> Result<Vec<ProbeWavefunction>> {
        let mut out = Vec::new();
        for c in &self.components {
            for (b, probe) in c.branches.iter().zip(&self.shifted_probes) {
                let p = c.weight * b.iter().map(|v| v.norm_sqr()).sum::<f64>();
                if p > 0.0 {
                    out.push(probe.scale(Complex64::new(p.sqrt(), 0.0)));
                }
            }
        }
        Ok(out)
    }
}

/// Applies `exp(−iθ Â⊗K̂)` to `pre ⊗ probe`.
pub fn evolve(pre: &SystemState, probe: &ProbeWavefunction, cfg: &CouplingConfig) -> Result<JointState> {
    let a = cfg.observable();
    if pre.dim() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: pre.dim() });
    }
    let shifts = cfg.shifts();
    let x_max = probe.grid().x_max();
    for &s in &shifts {
        if s.abs() + SHIFT_MARGIN >= x_max {
            return Err(Error::ShiftExceedsGrid { shift: s, x_max });
        }
    }
    let shifted_probes = shifts.iter().map(|&s| probe.shifted(s)).collect::<Result<Vec<_>>>()?;
    let components = pre
        .ensemble()
        .into_iter()
        .map(|(weight, r)| JointComponent {
            weight,
            branches: a.spectrum().iter().map(|sp| sp.projector.mul_vec(r.amplitudes())).collect(),
        })
        .collect();
    Ok(JointState { components, shifted_probes, shifts })
}

/// Non-normalized probe left after post-selection.
#[derive(Clone, Debug)]
pub struct PostSelectedProbe {
    /// Incoherent components `√(w_r q_s)·Σ_j ⟨s|Π_j|r⟩ φ(X − θa_j)`; a single
    /// entry for pure selections.
    pub components: Vec<ProbeWavefunction>,
    /// Sum of the squared component norms.
    pub success_prob: f64,
}

impl PostSelectedProbe {
    /// `φ̃_f` for pure selections.
    pub fn psi_tilde(&self) -> Option<&ProbeWavefunction> {
        match self.components.as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }

    /// Exact mean and variance of `M̂(α)` for the normalized probe state.
    pub fn quadrature(&self, alpha: f64) -> Result<QuadratureMoments> {
        match self.psi_tilde() {
            Some(psi) => quadrature_moments(psi, alpha),
            None => mixture_quadrature_moments(&self.components, alpha),
        }
    }
}

/// Projects the target onto `post` and keeps the probe.
pub fn post_select(joint: &JointState, post: &SystemState) -> Result<PostSelectedProbe> {
    let post_ensemble = post.ensemble();
    let mut components = Vec::new();
    let mut success_prob = 0.0;
    for c in &joint.components {
        if let Some(b) = c.branches.first() {
            if b.len() != post.dim() {
                return Err(Error::DimensionMismatch { expected: b.len(), got: post.dim() });
            }
        }
        for (q, s) in &post_ensemble {
            let amp = (c.weight * q).sqrt();
            let coeffs: Vec<Complex64> = c.branches.iter().map(|b| inner(s.amplitudes(), b) * amp).collect();
            let grid = joint.shifted_probes[0].grid();
            let mut psi = alloc::vec![Complex64::new(0.0, 0.0); grid.n()];
            for (coef, probe) in coeffs.iter().zip(&joint.shifted_probes) {
                for (o, v) in psi.iter_mut().zip(probe.amplitudes()) {
                    *o += coef * v;
                }
            }
            let psi = ProbeWavefunction::new(grid, psi)?;
            success_prob += psi.norm_sqr();
            components.push(psi);
        }
    }
    if !(success_prob >= SUCCESS_FLOOR) {
        return Err(Error::OrthogonalPostSelection { norm: success_prob.max(0.0).sqrt() });
    }
    Ok(PostSelectedProbe { components, success_prob })
}

/// `(⟨M̂⟩_f, σ²_f(M̂))` to second order in θ, including the mixed-state
/// term `θ²(Ã − |⟨Â⟩_w|²)/2`.
pub fn perturbative_prediction(stats: &WeakStats, theta: f64, alpha: f64) -> (f64, f64) {
    let w = stats.weak_value;
    let v = stats.weak_variance;
    let (s, c) = alpha.sin_cos();
    let (s2, c2) = (2.0 * alpha).sin_cos();
    let t2 = theta * theta;
    let mean = theta * (c * w.re + s * w.im);
    let var = 0.5 + 0.5 * t2 * (c2 * v.re + s2 * v.im) + 0.5 * t2 * (stats.a_tilde.re - w.norm_sqr());
    (mean, var)
}

/// Exact against perturbative moments at one quadrature angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureReport {
    pub alpha: f64,
    pub exact_mean: f64,
    pub exact_var: f64,
    pub pert_mean: f64,
    pub pert_var: f64,
    pub residual_mean: f64,
    pub residual_var: f64,
    pub success_prob: f64,
}

/// Report for one α from an already post-selected probe.
pub fn quadrature_report(
    probe: &PostSelectedProbe,
    stats: &WeakStats,
    theta: f64,
    alpha: f64,
) -> Result<QuadratureReport> {
    let exact = probe.quadrature(alpha)?;
    let (pert_mean, pert_var) = perturbative_prediction(stats, theta, alpha);
    Ok(QuadratureReport {
        alpha,
        exact_mean: exact.mean,
        exact_var: exact.variance,
        pert_mean,
        pert_var,
        residual_mean: exact.mean - pert_mean,
        residual_var: exact.variance - pert_var,
        success_prob: probe.success_prob,
    })
}

/// Simulates the selection on a fresh Gaussian probe and post-selects.
pub fn simulate(sel: &Selection, a: &HermitianObservable, theta: f64, grid: Grid) -> Result<PostSelectedProbe> {
    let cfg = CouplingConfig::new(theta, a.clone())?;
    let joint = evolve(sel.pre(), &crate::probe::gaussian_probe(grid), &cfg)?;
    post_select(&joint, sel.post())
}

/// Exact grid simulation against the perturbative formulas, one report per α
/// in input order.
pub fn compare(
    sel: &Selection,
    a: &HermitianObservable,
    theta: f64,
    alphas: &[f64],
    grid: Grid,
) -> Result<Vec<QuadratureReport>> {
    let stats = WeakStats::compute(sel, a)?;
    let probe = simulate(sel, a, theta, grid)?;
    alphas.iter().map(|&alpha| quadrature_report(&probe, &stats, theta, alpha)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{CMatrix, DensityOp, TargetState};
    use crate::probe::gaussian_probe;
    use alloc::vec;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn obs() -> HermitianObservable {
        let c = |x: f64| Complex64::new(x, 0.0);
        HermitianObservable::new(CMatrix::from_rows(&[vec![c(0.), c(1.)], vec![c(1.), c(0.)]]).unwrap()).unwrap()
    }

    fn h() -> TargetState {
        TargetState::basis(2, 0)
    }

    fn case_i(deg: f64) -> TargetState {
        let vt = (4.0 * deg).to_radians() - core::f64::consts::FRAC_PI_2;
        let (s, c) = (vt / 2.0).sin_cos();
        TargetState::from_real(&[(c + s) * FRAC_1_SQRT_2, (c - s) * FRAC_1_SQRT_2]).unwrap()
    }

    fn grid() -> Grid {
        Grid::new(2048, 16.0).unwrap()
    }

    #[test]
    fn zero_coupling_leaves_probe() {
        let cfg = CouplingConfig::new(0.0, obs()).unwrap();
        let phi = gaussian_probe(grid());
        let joint = evolve(&h().into(), &phi, &cfg).unwrap();
        let post = post_select(&joint, &h().into()).unwrap();
        assert!((post.success_prob - 1.0).abs() < 1e-12);
        let d = crate::probe::phase_aligned_distance(post.psi_tilde().unwrap(), &phi);
        assert!(d < 1e-12);
    }

    #[test]
    fn strong_coupling_is_bimodal() {
        let cfg = CouplingConfig::new(3.0, obs()).unwrap();
        assert_eq!(cfg.strength(), Strength::Strong);
        let g = grid();
        let joint = evolve(&h().into(), &gaussian_probe(g), &cfg).unwrap();
        let p = joint.position_distribution();
        let c = core::f64::consts::PI.sqrt().recip();
        for (k, v) in p.iter().enumerate() {
            let x = g.x(k);
            let exact = 0.5 * c * ((-(x - 3.0) * (x - 3.0)).exp() + (-(x + 3.0) * (x + 3.0)).exp());
            assert!((v - exact).abs() < 1e-10);
        }
        assert!((joint.total_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pre_selection_only_variance() {
        let cfg = CouplingConfig::new(0.2, obs()).unwrap();
        let joint = evolve(&h().into(), &gaussian_probe(grid()), &cfg).unwrap();
        let comps = joint.unconditioned_components().unwrap();
        let q = mixture_quadrature_moments(&comps, 0.0).unwrap();
        assert!((q.variance - 0.54).abs() < 1e-10);
    }

    #[test]
    fn shift_beyond_margin_rejected() {
        let cfg = CouplingConfig::new(9.0, obs()).unwrap();
        assert!(matches!(
            evolve(&h().into(), &gaussian_probe(grid()), &cfg),
            Err(Error::ShiftExceedsGrid { .. })
        ));
    }

    #[test]
    fn success_probability_two_gaussian_overlap() {
        let theta = 0.05;
        let i = case_i(15.0);
        let sel = Selection::pure(&i, &h()).unwrap();
        let probe = simulate(&sel, &obs(), theta, grid()).unwrap();
        let a = obs();
        let coeffs: Vec<Complex64> = a
            .spectrum()
            .iter()
            .map(|sp| inner(h().amplitudes(), &sp.projector.mul_vec(i.amplitudes())))
            .collect();
        let sep = theta * (a.spectrum()[1].value - a.spectrum()[0].value);
        let oracle = coeffs[0].norm_sqr()
            + coeffs[1].norm_sqr()
            + 2.0 * (coeffs[0].conj() * coeffs[1]).re * (-sep * sep / 4.0).exp();
        assert!((probe.success_prob - oracle).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_post_selection_is_an_error() {
        let sel = Selection::pure(&h(), &TargetState::basis(2, 1)).unwrap();
        assert!(matches!(simulate(&sel, &obs(), 0.0, grid()), Err(Error::OrthogonalPostSelection { .. })));
        // small but nonzero at finite coupling
        let p = simulate(&sel, &obs(), 0.05, grid()).unwrap();
        assert!(p.success_prob < 1e-2);
    }

    #[test]
    fn pure_prediction_special_angles() {
        let sel = Selection::pure(&case_i(15.0), &h()).unwrap();
        let stats = WeakStats::compute(&sel, &obs()).unwrap();
        let t = 0.03;
        let (_, v0) = perturbative_prediction(&stats, t, 0.0);
        assert!((v0 - (0.5 + 0.5 * stats.weak_variance.re * t * t)).abs() < 1e-15);
        let (_, v1) = perturbative_prediction(&stats, t, core::f64::consts::FRAC_PI_4);
        assert!((v1 - (0.5 + 0.5 * stats.weak_variance.im * t * t)).abs() < 1e-15);
        let mixed = Selection::new(h(), DensityOp::maximally_mixed(2)).unwrap();
        let stats = WeakStats::compute(&mixed, &obs()).unwrap();
        let (_, v) = perturbative_prediction(&stats, t, 0.0);
        assert!((v - (0.5 + t * t * obs().variance(&h()))).abs() < 1e-15);
    }

    #[test]
    fn narrowing_at_fifteen_degrees() {
        let sel = Selection::pure(&case_i(15.0), &h()).unwrap();
        let r = compare(&sel, &obs(), 0.03, &[0.0], grid()).unwrap();
        assert!(r[0].exact_var < 0.5);
    }

    #[test]
    fn mean_residual_scales_cubically() {
        let sel = Selection::pure(&case_i(20.0), &h()).unwrap();
        let a = obs();
        let r2 = compare(&sel, &a, 0.02, &[0.0], grid()).unwrap()[0];
        let r1 = compare(&sel, &a, 0.01, &[0.0], grid()).unwrap()[0];
        let ratio = r2.residual_mean / r1.residual_mean;
        assert!((6.0..=10.0).contains(&ratio), "{ratio}");
        // the variance is even in θ, so its residual falls off as θ⁴
        let vratio = r2.residual_var / r1.residual_var;
        assert!((14.0..=18.0).contains(&vratio), "{vratio}");
    }

    #[test]
    fn maximally_mixed_post_is_exact_at_any_coupling() {
        let i = case_i(10.0);
        let sel = Selection::new(i.clone(), DensityOp::maximally_mixed(2)).unwrap();
        let r = compare(&sel, &obs(), 0.5, &[0.0], grid()).unwrap()[0];
        assert!((r.exact_var - (0.5 + 0.25 * obs().variance(&i))).abs() < 1e-10);
    }
}
