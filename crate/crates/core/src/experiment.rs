//! Closed-form model of the polarization experiment: waveplate
//! pre-selections, theory curves with visibility, angle error and a flat
//! background, synthetic data and least-squares parameter recovery.
//!
//! Target basis: `|0⟩ = |D⟩`, `|1⟩ = |A⟩`, post-selection `|H⟩`, observable
//! `Â = |D⟩⟨D| − |A⟩⟨A|`. Vectors are written in H/V coordinates. Angles
//! are degrees at the interface and radians inside.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::hilbert::{CMatrix, HermitianObservable, TargetState};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use crate::num::Float;
use crate::num::FRAC_PI_2;
use crate::weakstats::Selection;
use crate::{Error, Result};

/// Background half-width of the experimental setup.
pub const DEFAULT_HALF_WIDTH: f64 = 5.6;

/// Bound on the waveplate angle error, degrees.
pub const MAX_ANGLE_ERROR_DEG: f64 = 0.5;

/// Polarization states and the measured observable in H/V coordinates.
pub mod polarization {
    use super::*;
    use core::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> TargetState {
        TargetState::basis(2, 0)
    }

    pub fn v() -> TargetState {
        TargetState::basis(2, 1)
    }

    pub fn d() -> TargetState {
        TargetState::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).expect("nonzero")
    }

    pub fn a() -> TargetState {
        TargetState::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).expect("nonzero")
    }

    /// `cos(ϑ/2)|D⟩ + e^{iφ} sin(ϑ/2)|A⟩`
    pub fn state(vartheta: f64, phi: f64) -> TargetState {
        let (s, c) = (vartheta / 2.0).sin_cos();
        let e = Complex64::from_polar(s, phi);
        let k = FRAC_1_SQRT_2;
        TargetState::new(vec![(e + c) * k, (-e + c) * k]).expect("normalized by construction")
    }

    /// `|D⟩⟨D| − |A⟩⟨A|`
    pub fn observable() -> HermitianObservable {
        let m = d().projector().sub(&a().projector());
        HermitianObservable::new(m).expect("Hermitian by construction")
    }

    pub fn observable_matrix() -> CMatrix {
        d().projector().sub(&a().projector())
    }
}

/// Which waveplate prepares the pre-selected state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    /// Half-wave plate at ϑ_H; real weak values.
    HalfWave,
    /// Quarter-wave plate at ϑ_Q; imaginary weak variance.
    QuarterWave,
}

/// Pre-selection parametrized by one waveplate angle (degrees).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreSelectionSpec {
    pub case: Case,
    pub angle_deg: f64,
}

impl PreSelectionSpec {
    pub fn new(case: Case, angle_deg: f64) -> Self {
        Self { case, angle_deg }
    }

    /// `(ϑ_i, φ_i)` in radians with the waveplate angle offset by `delta_deg`.
    pub fn bloch_angles(&self, delta_deg: f64) -> (f64, f64) {
        let w = (self.angle_deg + delta_deg).to_radians();
        match self.case {
            Case::HalfWave => (4.0 * w - FRAC_PI_2, 0.0),
            Case::QuarterWave => (2.0 * w - FRAC_PI_2, -2.0 * w),
        }
    }

    pub fn state(&self) -> TargetState {
        let (t, p) = self.bloch_angles(0.0);
        polarization::state(t, p)
    }

    /// Pure selection with post-selection `|H⟩`.
    pub fn selection(&self) -> Result<Selection> {
        Selection::pure(&self.state(), &polarization::h())
    }
}

/// Weak value and weak variance of `Â` for the waveplate pre-selection.
///
/// `⟨Â⟩_w = (cos ϑ − i sin ϑ sin φ)/(1 + sin ϑ cos φ)`,
/// `σ²_w = [2 sin ϑ (sin ϑ + cos φ) + i sin 2ϑ sin φ]/(1 + sin ϑ cos φ)²`.
pub fn exact_weak_stats(spec: &PreSelectionSpec) -> Result<(Complex64, Complex64)> {
    let (t, p) = spec.bloch_angles(0.0);
    let den = 1.0 + t.sin() * p.cos();
    if den.abs() < 1e-12 {
        return Err(Error::SingularAngle { angle_deg: spec.angle_deg });
    }
    let w = Complex64::new(t.cos(), -t.sin() * p.sin()) / den;
    let var = Complex64::new(2.0 * t.sin() * (t.sin() + p.cos()), (2.0 * t).sin() * p.sin()) / (den * den);
    Ok((w, var))
}

/// Parameters of the theory curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitModel {
    pub theta: f64,
    pub visibility: f64,
    /// Waveplate angle error, degrees.
    pub delta_deg: f64,
    pub background: f64,
    pub half_width: f64,
}

impl FitModel {
    /// Ideal model: `V = 1`, no angle error, no background.
    pub fn ideal(theta: f64) -> Self {
        Self { theta, visibility: 1.0, delta_deg: 0.0, background: 0.0, half_width: DEFAULT_HALF_WIDTH }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.into()));
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad("theta must be positive");
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad("visibility must lie in [0, 1]");
        }
        if !(self.delta_deg.abs() <= MAX_ANGLE_ERROR_DEG) {
            return bad("angle error must lie in [-0.5°, 0.5°]");
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return bad("background must be non-negative");
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return bad("background half-width must be positive");
        }
        Ok(())
    }
}

/// `⟨M̂⟩_f` for the visibility-reduced, post-selected probe.
pub fn mean_curve(spec: &PreSelectionSpec, model: &FitModel, alpha: f64) -> f64 {
    let (t, p) = spec.bloch_angles(model.delta_deg);
    let e = model.visibility * (-model.theta * model.theta).exp();
    let (sa, ca) = alpha.sin_cos();
    model.theta * (ca * t.cos() - e * sa * t.sin() * p.sin()) / (1.0 + e * t.sin() * p.cos())
}

/// `σ²_f(M̂)` including the flat background of intensity N on `[−L, L]`.
pub fn variance_curve(spec: &PreSelectionSpec, model: &FitModel, alpha: f64) -> f64 {
    let (t, p) = spec.bloch_angles(model.delta_deg);
    let th2 = model.theta * model.theta;
    let v = model.visibility;
    let e1 = (-th2).exp();
    let e2 = (-2.0 * th2).exp();
    let (sa, ca) = alpha.sin_cos();
    let (s2a, c2a) = (2.0 * alpha).sin_cos();
    let (st, ct) = t.sin_cos();
    let (sp, cp) = p.sin_cos();
    let bg = 4.0 * model.half_width * model.background;
    let den = 1.0 + v * st * cp * e1 + bg;
    let signal = th2 * st * ((ca * ca - v * v * sa * sa * e2) * st + v * e1 * (c2a * cp + s2a * ct * sp)) / (den * den);
    let mixing = bg * th2 * (ca * ca - v * e1 * sa * sa * st * cp) / (den * den);
    let flat = 2.0 / 3.0 * model.half_width * model.background * (2.0 * model.half_width.powi(2) - 3.0) / den;
    0.5 + signal + mixing + flat
}

/// `Δσ² = (σ²_f − 1/2)/(1/2)`
pub fn delta_variance(variance: f64) -> f64 {
    (variance - 0.5) / 0.5
}

/// Curve quantity used for synthesis and fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Mean,
    Variance,
}

impl Quantity {
    pub fn evaluate(self, spec: &PreSelectionSpec, model: &FitModel, alpha: f64) -> f64 {
        match self {
            Self::Mean => mean_curve(spec, model, alpha),
            Self::Variance => variance_curve(spec, model, alpha),
        }
    }
}

/// One `(angle_deg, value)` sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPoint {
    pub angle_deg: f64,
    pub value: f64,
}

/// Curve samples plus `noise_sigma · z`, with `z` drawn from `standard_normal`.
pub fn synthesize_data(
    case: Case,
    angles_deg: &[f64],
    model: &FitModel,
    alpha: f64,
    quantity: Quantity,
    noise_sigma: f64,
    mut standard_normal: impl FnMut() -> f64,
) -> Result<Vec<DataPoint>> {
    if angles_deg.is_empty() {
        return Err(Error::InvalidParameter("empty angle range".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("noise sigma {noise_sigma} must be non-negative")));
    }
    Ok(angles_deg
        .iter()
        .map(|&angle_deg| {
            let spec = PreSelectionSpec::new(case, angle_deg);
            let mut value = quantity.evaluate(&spec, model, alpha);
            if noise_sigma > 0.0 {
                value += noise_sigma * standard_normal();
            }
            DataPoint { angle_deg, value }
        })
        .collect())
}

/// Which model parameters the fit may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreeParams {
    pub theta: bool,
    pub visibility: bool,
    pub delta: bool,
    pub background: bool,
}

impl FreeParams {
    pub const ALL: Self = Self { theta: true, visibility: true, delta: true, background: true };
    pub const SIGNAL: Self = Self { theta: true, visibility: true, delta: true, background: false };
    pub const BACKGROUND_ONLY: Self = Self { theta: false, visibility: false, delta: false, background: true };

    pub fn count(&self) -> usize {
        [self.theta, self.visibility, self.delta, self.background].iter().filter(|b| **b).count()
    }

    fn indices(&self) -> Vec<Param> {
        let mut v = Vec::new();
        if self.theta {
            v.push(Param::Theta);
        }
        if self.visibility {
            v.push(Param::Visibility);
        }
        if self.delta {
            v.push(Param::Delta);
        }
        if self.background {
            v.push(Param::Background);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Param {
    Theta,
    Visibility,
    Delta,
    Background,
}

impl Param {
    /// Typical magnitude; the optimizer works in units of this.
    fn scale(self) -> f64 {
        match self {
            Self::Theta => 1e-2,
            Self::Visibility => 1.0,
            Self::Delta => 1.0,
            Self::Background => 1e-6,
        }
    }

    fn bounds(self) -> (f64, f64) {
        match self {
            Self::Theta => (1e-12, f64::INFINITY),
            Self::Visibility => (0.0, 1.0),
            Self::Delta => (-MAX_ANGLE_ERROR_DEG, MAX_ANGLE_ERROR_DEG),
            Self::Background => (0.0, f64::INFINITY),
        }
    }

    fn get(self, m: &FitModel) -> f64 {
        match self {
            Self::Theta => m.theta,
            Self::Visibility => m.visibility,
            Self::Delta => m.delta_deg,
            Self::Background => m.background,
        }
    }

    fn set(self, m: &mut FitModel, v: f64) {
        match self {
            Self::Theta => m.theta = v,
            Self::Visibility => m.visibility = v,
            Self::Delta => m.delta_deg = v,
            Self::Background => m.background = v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMethod {
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub method: FitMethod,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { method: FitMethod::LevenbergMarquardt, max_iters: 500 }
    }
}

/// What is being fitted and against which data.
#[derive(Clone, Copy, Debug)]
pub struct FitProblem<'a> {
    pub data: &'a [DataPoint],
    pub case: Case,
    pub alpha: f64,
    pub quantity: Quantity,
    pub free: FreeParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub estimates: FitModel,
    pub free: FreeParams,
    /// Sum of squared residuals at the estimate.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Objective<'a> {
    problem: FitProblem<'a>,
    params: Vec<Param>,
    base: FitModel,
}

impl Objective<'_> {
    fn model(&self, x: &[f64]) -> FitModel {
        let mut m = self.base;
        for (p, v) in self.params.iter().zip(x) {
            p.set(&mut m, v * p.scale());
        }
        m
    }

    fn project(&self, x: &mut [f64]) {
        for (p, v) in self.params.iter().zip(x.iter_mut()) {
            let (lo, hi) = p.bounds();
            *v = v.clamp(lo / p.scale(), hi / p.scale());
        }
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let m = self.model(x);
        self.problem
            .data
            .iter()
            .map(|d| {
                let spec = PreSelectionSpec::new(self.problem.case, d.angle_deg);
                self.problem.quantity.evaluate(&spec, &m, self.problem.alpha) - d.value
            })
            .collect()
    }

    fn cost(&self, x: &[f64]) -> f64 {
        let c: f64 = self.residuals(x).iter().map(|r| r * r).sum();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

/// Unweighted least squares over the free parameters, the rest held at
/// `initial`. A fit that exhausts `max_iters` returns `converged = false`.
pub fn fit(problem: FitProblem<'_>, initial: FitModel, options: FitOptions) -> Result<FitResult> {
    let params = problem.free.indices();
    if params.is_empty() {
        return Err(Error::InvalidParameter("no free parameters".into()));
    }
    if problem.data.len() < 2 * params.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "{} data points for {} free parameters; need at least twice as many",
            problem.data.len(),
            params.len()
        )));
    }
    initial.validate()?;
    let obj = Objective { problem, params, base: initial };
    let mut x: Vec<f64> = obj.params.iter().map(|p| p.get(&initial) / p.scale()).collect();
    obj.project(&mut x);
    let (x, iterations, converged) = match options.method {
        FitMethod::LevenbergMarquardt => levenberg_marquardt(&obj, x, options.max_iters),
        FitMethod::NelderMead => nelder_mead(&obj, x, options.max_iters),
    };
    Ok(FitResult {
        estimates: obj.model(&x),
        free: problem.free,
        residual_norm: obj.cost(&x),
        iterations,
        converged,
    })
}

const REL_COST_TOL: f64 = 1e-12;
const STEP_TOL: f64 = 1e-10;
const SMALL_STREAK: usize = 3;

fn jacobian(obj: &Objective<'_>, x: &[f64], r0: &[f64]) -> Vec<Vec<f64>> {
    // columns of ∂r/∂x_k
    (0..x.len())
        .map(|k| {
            let p = obj.params[k];
            let (_, hi) = p.bounds();
            let mut h = 1e-7 * x[k].abs().max(1.0);
            if x[k] + h > hi / p.scale() {
                h = -h;
            }
            let mut xp = x.to_vec();
            xp[k] += h;
            obj.residuals(&xp).iter().zip(r0).map(|(a, b)| (a - b) / h).collect()
        })
        .collect()
}

fn levenberg_marquardt(obj: &Objective<'_>, mut x: Vec<f64>, max_iters: usize) -> (Vec<f64>, usize, bool) {
    let m = x.len();
    let mut r = obj.residuals(&x);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut streak = 0;
    for iter in 1..=max_iters {
        if cost == 0.0 {
            return (x, iter - 1, true);
        }
        let jac = jacobian(obj, &x, &r);
        let mut jtj = vec![vec![0.0; m]; m];
        let mut g = vec![0.0; m];
        for a in 0..m {
            g[a] = jac[a].iter().zip(&r).map(|(j, v)| j * v).sum();
            for b in 0..m {
                jtj[a][b] = jac[a].iter().zip(&jac[b]).map(|(u, v)| u * v).sum();
            }
        }
        // parameters pinned at a bound with the descent direction pointing outside stay put
        let active: Vec<bool> = (0..m)
            .map(|k| {
                let p = obj.params[k];
                let (lo, hi) = p.bounds();
                (x[k] <= lo / p.scale() && g[k] > 0.0) || (x[k] >= hi / p.scale() && g[k] < 0.0)
            })
            .collect();
        let gnorm = (0..m).filter(|&k| !active[k]).fold(0.0f64, |acc, k| acc.max(g[k].abs()));
        if gnorm <= 1e-15 * (1.0 + cost) {
            return (x, iter, true);
        }
        loop {
            let mut lhs = jtj.clone();
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            for a in 0..m {
                lhs[a][a] += lambda * jtj[a][a].max(1e-12);
                if active[a] {
                    for b in 0..m {
                        lhs[a][b] = 0.0;
                        lhs[b][a] = 0.0;
                    }
                    lhs[a][a] = 1.0;
                    rhs[a] = 0.0;
                }
            }
            let step = solve_dense(lhs, rhs);
            let mut xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            obj.project(&mut xn);
            let step_norm = xn.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let rn = obj.residuals(&xn);
            let cn: f64 = rn.iter().map(|v| v * v).sum();
            if cn.is_finite() && cn <= cost {
                let rel = (cost - cn) / cost.max(f64::MIN_POSITIVE);
                streak = if rel < REL_COST_TOL || step_norm < STEP_TOL { streak + 1 } else { 0 };
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda / 3.0).max(1e-15);
                break;
            }
            lambda *= 4.0;
            if step_norm < STEP_TOL || lambda > 1e20 {
                streak += 1;
                break;
            }
        }
        if streak >= SMALL_STREAK {
            return (x, iter, true);
        }
    }
    (x, max_iters, false)
}

/// Gaussian elimination with partial pivoting; singular pivots give a zero step.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for row in (col + 1)..n {
            let f = a[row][col] / d;
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = if a[i][i].abs() < 1e-300 { 0.0 } else { (b[i] - s) / a[i][i] };
    }
    x
}

fn nelder_mead(obj: &Objective<'_>, x0: Vec<f64>, max_iters: usize) -> (Vec<f64>, usize, bool) {
    let m = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
    for k in 0..m {
        let mut v = x0.clone();
        v[k] += if v[k].abs() > 1e-3 { 0.05 * v[k] } else { 0.05 };
        obj.project(&mut v);
        if v == x0 {
            v[k] -= 0.05;
            obj.project(&mut v);
        }
        simplex.push(v);
    }
    let mut costs: Vec<f64> = simplex.iter().map(|v| obj.cost(v)).collect();
    let mut streak = 0;
    for iter in 1..=max_iters {
        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        costs = order.iter().map(|&i| costs[i]).collect();
        let best = costs[0];
        let worst = costs[m];
        let spread = (0..m)
            .map(|k| simplex.iter().map(|v| (v[k] - simplex[0][k]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let rel = (worst - best) / best.abs().max(f64::MIN_POSITIVE);
        streak = if rel < REL_COST_TOL || spread < STEP_TOL { streak + 1 } else { 0 };
        if streak >= SMALL_STREAK || best == 0.0 {
            return (simplex[0].clone(), iter, true);
        }
        let centroid: Vec<f64> = (0..m).map(|k| simplex[..m].iter().map(|v| v[k]).sum::<f64>() / m as f64).collect();
        let along = |t: f64| {
            let mut v: Vec<f64> = centroid.iter().zip(&simplex[m]).map(|(c, w)| c + t * (c - w)).collect();
            obj.project(&mut v);
            v
        };
        let xr = along(1.0);
        let cr = obj.cost(&xr);
        if cr < costs[0] {
            let xe = along(2.0);
            let ce = obj.cost(&xe);
            if ce < cr {
                simplex[m] = xe;
                costs[m] = ce;
            } else {
                simplex[m] = xr;
                costs[m] = cr;
            }
        } else if cr < costs[m - 1] {
            simplex[m] = xr;
            costs[m] = cr;
        } else {
            let xc = along(if cr < costs[m] { 0.5 } else { -0.5 });
            let cc = obj.cost(&xc);
            if cc < costs[m].min(cr) {
                simplex[m] = xc;
                costs[m] = cc;
            } else {
                for i in 1..=m {
                    let v: Vec<f64> = simplex[i].iter().zip(&simplex[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    costs[i] = obj.cost(&v);
                    simplex[i] = v;
                }
            }
        }
    }
    let best = (0..=m).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap_or(0);
    (simplex[best].clone(), max_iters, false)
}

/// Evenly spaced angles `start, start + step, …` up to and including `stop`.
pub fn angle_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidParameter(alloc::format!("bad angle range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weakstats::{weak_value, weak_variance};

    fn eq15(theta_h_deg: f64) -> (f64, f64) {
        let t = theta_h_deg.to_radians();
        let s2 = (2.0 * t).sin();
        ((2.0 * t).cos() / s2, -(4.0 * t).cos() / (s2 * s2))
    }

    fn eq16(theta_q_deg: f64) -> f64 {
        let t = theta_q_deg.to_radians();
        let s2 = (2.0 * t).sin();
        2.0 * (2.0 * t).cos() / (s2 * s2)
    }

    #[test]
    fn half_wave_examples() {
        let (w, v) = exact_weak_stats(&PreSelectionSpec::new(Case::HalfWave, 22.5)).unwrap();
        assert!((w - 1.0).norm() < 1e-12);
        assert!(v.norm() < 1e-12);
        let (w, v) = exact_weak_stats(&PreSelectionSpec::new(Case::HalfWave, 15.0)).unwrap();
        assert!((w - 3f64.sqrt()).norm() < 1e-12);
        assert!((v + 2.0).norm() < 1e-12);
    }

    #[test]
    fn quarter_wave_example() {
        let (_, v) = exact_weak_stats(&PreSelectionSpec::new(Case::QuarterWave, 30.0)).unwrap();
        assert!((v - Complex64::new(0.0, 4.0 / 3.0)).norm() < 1e-12);
    }

    #[test]
    fn closed_forms_match_state_computation() {
        let a = polarization::observable();
        for deg in 1..90 {
            let deg = deg as f64;
            let spec = PreSelectionSpec::new(Case::HalfWave, deg);
            let (w, v) = exact_weak_stats(&spec).unwrap();
            let (w15, v15) = eq15(deg);
            assert!((w - w15).norm() < 1e-10 * (1.0 + w15.abs()));
            assert!((v - v15).norm() < 1e-10 * (1.0 + v15.abs()));
            let sel = spec.selection().unwrap();
            assert!((weak_value(&sel, &a).unwrap() - w).norm() < 1e-12 * (1.0 + w.norm()));
            assert!((weak_variance(&sel, &a).unwrap() - v).norm() < 1e-12 * (1.0 + v.norm()));

            let spec = PreSelectionSpec::new(Case::QuarterWave, deg);
            let (_, v) = exact_weak_stats(&spec).unwrap();
            assert!(v.re.abs() < 1e-12 * (1.0 + v.norm()));
            assert!((v.im - eq16(deg)).abs() < 1e-10 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn singular_angles_rejected() {
        assert!(matches!(
            exact_weak_stats(&PreSelectionSpec::new(Case::HalfWave, 0.0)),
            Err(Error::SingularAngle { .. })
        ));
        assert!(exact_weak_stats(&PreSelectionSpec::new(Case::QuarterWave, 90.0)).is_err());
    }

    #[test]
    fn mean_curve_examples() {
        let m = FitModel::ideal(0.05);
        assert!(mean_curve(&PreSelectionSpec::new(Case::HalfWave, 45.0), &m, 0.0).abs() < 1e-15);
        // reduces to θ Re⟨Â⟩_w as θ → 0
        let spec = PreSelectionSpec::new(Case::HalfWave, 15.0);
        let t = 1e-3;
        let v = mean_curve(&spec, &FitModel::ideal(t), 0.0);
        assert!((v - t * 3f64.sqrt()).abs() < 10.0 * t * t * t);
        // explicit case (i) form θ sin4ϑ/(1 − V cos4ϑ e^{−θ²}) with the fitted values
        let fitted = FitModel { theta: 3.62e-2, visibility: 1.0, delta_deg: 1.57e-3, background: 0.0, half_width: 5.6 };
        let spec = PreSelectionSpec::new(Case::HalfWave, 10.0);
        let a = (4.0 * (10.0 + 1.57e-3f64)).to_radians();
        let th = 3.62e-2f64;
        let expect = th * a.sin() / (1.0 - a.cos() * (-th * th).exp());
        assert!((mean_curve(&spec, &fitted, 0.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn variance_curve_limits() {
        let spec = PreSelectionSpec::new(Case::HalfWave, 15.0);
        assert!((variance_curve(&spec, &FitModel::ideal(1e-9), 0.0) - 0.5).abs() < 1e-15);
        assert!(variance_curve(&spec, &FitModel::ideal(0.03), 0.0) < 0.5);
        let mut m = FitModel::ideal(0.03);
        m.background = 1e9;
        let v = variance_curve(&spec, &m, 0.0);
        let uniform = DEFAULT_HALF_WIDTH * DEFAULT_HALF_WIDTH / 3.0;
        assert!((v - uniform).abs() < 1e-6, "{v} vs {uniform}");
        assert!((uniform - 10.4533).abs() < 1e-4);
    }

    #[test]
    fn variance_curve_is_pi_periodic_in_alpha() {
        let m = FitModel { theta: 0.05, visibility: 0.9, delta_deg: 0.2, background: 1e-6, half_width: 5.6 };
        for case in [Case::HalfWave, Case::QuarterWave] {
            let spec = PreSelectionSpec::new(case, 27.0);
            for alpha in [0.0, 0.4, 1.3, 2.9] {
                let a = variance_curve(&spec, &m, alpha);
                let b = variance_curve(&spec, &m, alpha + core::f64::consts::PI);
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn background_term_matches_mixture_oracle() {
        // signal (normalized weight S, mean μ, variance σ²) mixed with a
        // uniform box of weight 2LN and variance L²/3
        let spec = PreSelectionSpec::new(Case::QuarterWave, 20.0);
        let mut m = FitModel { theta: 0.05, visibility: 0.8, delta_deg: 0.0, background: 0.0, half_width: 5.6 };
        let alpha = 0.0;
        let mu = mean_curve(&spec, &m, alpha);
        let var = variance_curve(&spec, &m, alpha);
        let (t, p) = spec.bloch_angles(0.0);
        // trace of the non-normalized signal is (1 + V sinϑ cosφ e^{−θ²})/2
        let s = (1.0 + m.visibility * t.sin() * p.cos() * (-m.theta * m.theta).exp()) / 2.0;
        m.background = 3e-4;
        let b = 2.0 * m.half_width * m.background;
        let total = s + b;
        let second = (s * (var + mu * mu) + b * m.half_width * m.half_width / 3.0) / total;
        let mean = s * mu / total;
        let oracle = second - mean * mean;
        assert!((variance_curve(&spec, &m, alpha) - oracle).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fit_is_a_fixed_point() {
        let truth = FitModel { theta: 5.56e-2, visibility: 1.0, delta_deg: 0.482, background: 8.21e-7, half_width: 5.6 };
        let angles = angle_range(1.0, 45.0, 0.5).unwrap();
        let data = synthesize_data(Case::QuarterWave, &angles, &truth, 0.0, Quantity::Variance, 0.0, || 0.0).unwrap();
        let problem = FitProblem { data: &data, case: Case::QuarterWave, alpha: 0.0, quantity: Quantity::Variance, free: FreeParams::ALL };
        let start = FitModel { theta: 5.0e-2, visibility: 0.95, delta_deg: 0.3, background: 1e-6, half_width: 5.6 };
        let r = fit(problem, start, FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.residual_norm < 1e-16, "{}", r.residual_norm);
        assert!((r.estimates.theta / truth.theta - 1.0).abs() < 1e-6);
        assert!((r.estimates.delta_deg / truth.delta_deg - 1.0).abs() < 1e-6);
        assert!((r.estimates.background / truth.background - 1.0).abs() < 1e-6);
    }

    #[test]
    fn background_only_fit() {
        let truth = FitModel { theta: 3.62e-2, visibility: 1.0, delta_deg: 1.57e-3, background: 2.11e-6, half_width: 5.6 };
        let angles = angle_range(1.0, 45.0, 1.0).unwrap();
        let data = synthesize_data(Case::HalfWave, &angles, &truth, 0.0, Quantity::Variance, 0.0, || 0.0).unwrap();
        let problem = FitProblem { data: &data, case: Case::HalfWave, alpha: 0.0, quantity: Quantity::Variance, free: FreeParams::BACKGROUND_ONLY };
        let mut start = truth;
        start.background = 0.0;
        let r = fit(problem, start, FitOptions::default()).unwrap();
        assert!((r.estimates.background / truth.background - 1.0).abs() < 1e-6);
        assert_eq!(r.estimates.theta, truth.theta);
    }

    #[test]
    fn nelder_mead_agrees() {
        let truth = FitModel { theta: 3.62e-2, visibility: 0.97, delta_deg: 0.1, background: 0.0, half_width: 5.6 };
        let angles = angle_range(2.0, 44.0, 1.0).unwrap();
        let data = synthesize_data(Case::HalfWave, &angles, &truth, 0.0, Quantity::Mean, 0.0, || 0.0).unwrap();
        let problem = FitProblem { data: &data, case: Case::HalfWave, alpha: 0.0, quantity: Quantity::Mean, free: FreeParams::SIGNAL };
        let start = FitModel { theta: 3.0e-2, visibility: 0.9, delta_deg: 0.0, background: 0.0, half_width: 5.6 };
        let opts = FitOptions { method: FitMethod::NelderMead, max_iters: 5000 };
        let r = fit(problem, start, opts).unwrap();
        assert!((r.estimates.theta / truth.theta - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn fit_rejects_too_little_data() {
        let data = [DataPoint { angle_deg: 10.0, value: 0.0 }; 5];
        let problem = FitProblem { data: &data, case: Case::HalfWave, alpha: 0.0, quantity: Quantity::Mean, free: FreeParams::SIGNAL };
        assert!(fit(problem, FitModel::ideal(0.03), FitOptions::default()).is_err());
    }

    #[test]
    fn synthesis_rejects_empty_range() {
        assert!(synthesize_data(Case::HalfWave, &[], &FitModel::ideal(0.03), 0.0, Quantity::Mean, 0.0, || 0.0).is_err());
    }

    #[test]
    fn angle_range_inclusive() {
        let r = angle_range(5.0, 45.0, 0.5).unwrap();
        assert_eq!(r.len(), 81);
        assert_eq!(*r.last().unwrap(), 45.0);
    }
}
