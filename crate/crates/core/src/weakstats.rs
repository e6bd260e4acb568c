//! Statistics of pre- and post-selected ensembles.
//!
//! For density operators `ρ_i`, `ρ_f` the weak moment is
//! `⟨Â^n⟩_w = tr(ρ_f Â^n ρ_i)/tr(ρ_f ρ_i)`, which reduces to
//! `⟨f|Â^n|i⟩/⟨f|i⟩` for pure states.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::hilbert::{
    completeness_deficiency, inner, CMatrix, HermitianObservable, OrthonormalBasis, SystemState, TargetState,
};
use crate::{Error, Result};

/// Selections with `|tr(ρ_f ρ_i)|` at or below this are near-orthogonal.
pub const OVERLAP_FLOOR: f64 = 1e-12;

/// Post-selection weights below this are dropped from total-law sums.
pub const ZERO_WEIGHT_FLOOR: f64 = 1e-24;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Pre- and post-selected states with their overlap `tr(ρ_f ρ_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pre: SystemState,
    post: SystemState,
    overlap: Complex64,
}

impl Selection {
    pub fn new(pre: impl Into<SystemState>, post: impl Into<SystemState>) -> Result<Self> {
        let pre = pre.into();
        let post = post.into();
        if pre.dim() != post.dim() {
            return Err(Error::DimensionMismatch { expected: pre.dim(), got: post.dim() });
        }
        let overlap = match (&pre, &post) {
            (SystemState::Pure(i), SystemState::Pure(f)) => Complex64::new(f.inner(i).norm_sqr(), 0.0),
            _ => post.density().matrix().mul(pre.density().matrix()).trace(),
        };
        Ok(Self { pre, post, overlap })
    }

    pub fn pure(pre: &TargetState, post: &TargetState) -> Result<Self> {
        Self::new(pre.clone(), post.clone())
    }

    pub fn pre(&self) -> &SystemState {
        &self.pre
    }

    pub fn post(&self) -> &SystemState {
        &self.post
    }

    pub fn dim(&self) -> usize {
        self.pre.dim()
    }

    /// `tr(ρ_f ρ_i)`; equals `|⟨f|i⟩|²` for pure states.
    pub fn overlap(&self) -> Complex64 {
        self.overlap
    }

    pub fn is_near_orthogonal(&self) -> bool {
        self.overlap.norm() <= OVERLAP_FLOOR
    }

    pub fn is_pure(&self) -> bool {
        self.pure_states().is_some()
    }

    pub fn pure_states(&self) -> Option<(&TargetState, &TargetState)> {
        Some((self.pre.as_pure()?, self.post.as_pure()?))
    }

    fn check(&self) -> Result<()> {
        if self.is_near_orthogonal() {
            return Err(Error::NearOrthogonal { overlap: self.overlap.norm() });
        }
        Ok(())
    }

    /// Weak value of an arbitrary operator `M`.
    pub fn weak_value_of(&self, m: &CMatrix) -> Result<Complex64> {
        self.check()?;
        if m.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: m.dim() });
        }
        if let Some((i, f)) = self.pure_states() {
            let num = inner(f.amplitudes(), &m.mul_vec(i.amplitudes()));
            return Ok(num / f.inner(i));
        }
        let rho_f = self.post.density();
        let rho_i = self.pre.density();
        Ok(rho_f.matrix().mul(m).mul(rho_i.matrix()).trace() / self.overlap)
    }
}

/// `⟨Â^n⟩_w`; `n = 0` gives exactly 1.
pub fn weak_moment(sel: &Selection, a: &HermitianObservable, n: u32) -> Result<Complex64> {
    sel.check()?;
    if n == 0 {
        return Ok(ONE);
    }
    sel.weak_value_of(&a.matrix().pow(n))
}

pub fn weak_value(sel: &Selection, a: &HermitianObservable) -> Result<Complex64> {
    weak_moment(sel, a, 1)
}

/// `σ²_w(Â) = ⟨Â²⟩_w − ⟨Â⟩_w²`
pub fn weak_variance(sel: &Selection, a: &HermitianObservable) -> Result<Complex64> {
    let m1 = weak_moment(sel, a, 1)?;
    let m2 = weak_moment(sel, a, 2)?;
    Ok(m2 - m1 * m1)
}

/// `Ã = tr(ρ_f Â ρ_i Â)/tr(ρ_f ρ_i)`
pub fn a_tilde(sel: &Selection, a: &HermitianObservable) -> Result<Complex64> {
    sel.check()?;
    if a.dim() != sel.dim() {
        return Err(Error::DimensionMismatch { expected: sel.dim(), got: a.dim() });
    }
    if sel.is_pure() {
        return Ok(Complex64::new(weak_value(sel, a)?.norm_sqr(), 0.0));
    }
    let rho_f = sel.post.density();
    let rho_i = sel.pre.density();
    let m = a.matrix();
    Ok(rho_f.matrix().mul(m).mul(rho_i.matrix()).mul(m).trace() / sel.overlap)
}

/// `p_wj = ⟨Π_j⟩_w` for a complete set of projectors.
pub fn weak_prob_distribution(sel: &Selection, projectors: &[CMatrix]) -> Result<Vec<Complex64>> {
    let deficiency = completeness_deficiency(projectors);
    if deficiency > 1e-10 {
        return Err(Error::IncompleteProjectors { deficiency });
    }
    projectors.iter().map(|p| sel.weak_value_of(p)).collect()
}

/// Weak statistics of one observable under one selection.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakStats {
    pub weak_value: Complex64,
    pub weak_variance: Complex64,
    /// `[⟨Â⟩_w, ⟨Â²⟩_w, …, ⟨Â^N⟩_w]`
    pub weak_moments: Vec<Complex64>,
    pub a_tilde: Complex64,
    /// One entry per eigenspace of Â, ascending eigenvalue order.
    pub weak_probs: Vec<Complex64>,
    pub eigenvalues: Vec<f64>,
}

impl WeakStats {
    /// Uses `max(4, d)` moments.
    pub fn compute(sel: &Selection, a: &HermitianObservable) -> Result<Self> {
        Self::with_moments(sel, a, a.dim().max(4))
    }

    pub fn with_moments(sel: &Selection, a: &HermitianObservable, n_moments: usize) -> Result<Self> {
        let n_moments = n_moments.max(2);
        let weak_moments = (1..=n_moments as u32)
            .map(|n| weak_moment(sel, a, n))
            .collect::<Result<Vec<_>>>()?;
        let weak_value = weak_moments[0];
        Ok(Self {
            weak_value,
            weak_variance: weak_moments[1] - weak_value * weak_value,
            a_tilde: a_tilde(sel, a)?,
            weak_probs: weak_prob_distribution(sel, &a.projectors())?,
            eigenvalues: a.eigenvalues(),
            weak_moments,
        })
    }

    /// `(Σ_j (a_j − ⟨Â⟩_w)² p_wj, Σ_j |a_j − ⟨Â⟩_w|² p_wj)`
    pub fn variance_via_probs(&self) -> (Complex64, Complex64) {
        let w = self.weak_value;
        let mut squared = Complex64::new(0.0, 0.0);
        let mut modulus = Complex64::new(0.0, 0.0);
        for (a, p) in self.eigenvalues.iter().zip(&self.weak_probs) {
            let d = Complex64::new(*a, 0.0) - w;
            squared += d * d * p;
            modulus += p * d.norm_sqr();
        }
        (squared, modulus)
    }

    /// `⟨Â^n⟩_w` with `n = 0` mapped to 1.
    pub fn moment(&self, n: usize) -> Option<Complex64> {
        if n == 0 {
            Some(ONE)
        } else {
            self.weak_moments.get(n - 1).copied()
        }
    }
}

/// Kirkwood–Dirac distribution `D(a_j, a'_k | i) = ⟨i|a_j⟩⟨a_j|a'_k⟩⟨a'_k|i⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct KdDistribution {
    /// Row `j` ↔ basis A vector, column `k` ↔ basis B vector.
    pub values: Vec<Vec<Complex64>>,
}

impl KdDistribution {
    pub fn total(&self) -> Complex64 {
        self.values.iter().flatten().sum()
    }

    /// `Σ_k D(a_j, a'_k)` for each `j`.
    pub fn marginal_a(&self) -> Vec<Complex64> {
        self.values.iter().map(|row| row.iter().sum()).collect()
    }

    /// `Σ_j D(a_j, a'_k)` for each `k`.
    pub fn marginal_b(&self) -> Vec<Complex64> {
        let cols = self.values.first().map_or(0, Vec::len);
        (0..cols).map(|k| self.values.iter().map(|row| row[k]).sum()).collect()
    }

    /// `D(a'_k | i, a_j) = D(a_j, a'_k)/Σ_k D(a_j, a'_k)`
    pub fn conditional_row(&self, j: usize) -> Result<Vec<Complex64>> {
        let row = &self.values[j];
        let total: Complex64 = row.iter().sum();
        if total.norm() <= OVERLAP_FLOOR {
            return Err(Error::NearOrthogonal { overlap: total.norm() });
        }
        Ok(row.iter().map(|v| v / total).collect())
    }
}

pub fn kd_distribution(
    state: &TargetState,
    basis_a: &OrthonormalBasis,
    basis_b: &OrthonormalBasis,
) -> Result<KdDistribution> {
    for b in [basis_a, basis_b] {
        if b.dim() != state.dim() {
            return Err(Error::DimensionMismatch { expected: state.dim(), got: b.dim() });
        }
        if !b.is_complete() {
            return Err(Error::InvalidParameter(alloc::format!(
                "basis has {} of {} vectors",
                b.len(),
                b.dim()
            )));
        }
    }
    let i = state.amplitudes();
    let values = basis_a
        .vectors()
        .iter()
        .map(|a| {
            basis_b
                .vectors()
                .iter()
                .map(|b| inner(i, a) * inner(a, b) * inner(b, i))
                .collect()
        })
        .collect();
    Ok(KdDistribution { values })
}

/// One post-selection outcome in a total-law decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalLawTerm {
    /// `|⟨f_j|i⟩|²`
    pub weight: f64,
    /// `None` when the weight is below the zero floor.
    pub weak_value: Option<Complex64>,
    pub weak_variance: Option<Complex64>,
}

/// Both sides of the laws of total expectation and total variance.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalLaws {
    pub expectation: f64,
    /// `Σ_j w_j ⟨Â⟩_wj`
    pub expectation_sum: Complex64,
    pub variance: f64,
    /// `Σ_j w_j σ²_wj`
    pub variance_within: Complex64,
    /// `Σ_j w_j (⟨Â⟩_wj − ⟨Â⟩)²`
    pub variance_between: Complex64,
    pub terms: Vec<TotalLawTerm>,
}

impl TotalLaws {
    pub fn expectation_error(&self) -> f64 {
        (self.expectation_sum - self.expectation).norm()
    }

    pub fn variance_error(&self) -> f64 {
        (self.variance_within + self.variance_between - self.variance).norm()
    }
}

pub fn total_laws(pre: &TargetState, a: &HermitianObservable, post_basis: &OrthonormalBasis) -> Result<TotalLaws> {
    if post_basis.dim() != pre.dim() || a.dim() != pre.dim() {
        return Err(Error::DimensionMismatch { expected: pre.dim(), got: post_basis.dim() });
    }
    if !post_basis.is_complete() {
        return Err(Error::InvalidParameter("post-selection basis is incomplete".into()));
    }
    let expectation = a.expectation(pre);
    let variance = a.variance(pre);
    let mut terms = Vec::with_capacity(post_basis.len());
    let mut expectation_sum = Complex64::new(0.0, 0.0);
    let mut variance_within = Complex64::new(0.0, 0.0);
    let mut variance_between = Complex64::new(0.0, 0.0);
    for k in 0..post_basis.len() {
        let f = post_basis.state(k);
        let weight = f.inner(pre).norm_sqr();
        if weight < ZERO_WEIGHT_FLOOR {
            terms.push(TotalLawTerm { weight: 0.0, weak_value: None, weak_variance: None });
            continue;
        }
        let sel = Selection::pure(pre, &f)?;
        let wv = weak_value(&sel, a)?;
        let var = weak_variance(&sel, a)?;
        expectation_sum += wv * weight;
        variance_within += var * weight;
        let d = wv - expectation;
        variance_between += d * d * weight;
        terms.push(TotalLawTerm { weight, weak_value: Some(wv), weak_variance: Some(var) });
    }
    Ok(TotalLaws { expectation, expectation_sum, variance, variance_within, variance_between, terms })
}

/// `Σ_j p_j a_j^n` for `n = 0 … order`.
pub fn moments_of(probs: &[Complex64], eigenvalues: &[f64], order: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); order + 1];
    for (p, a) in probs.iter().zip(eigenvalues) {
        let mut pow = 1.0;
        for m in out.iter_mut() {
            *m += p * pow;
            pow *= a;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DensityOp;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn d() -> TargetState {
        TargetState::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap()
    }

    fn h() -> TargetState {
        TargetState::basis(2, 0)
    }

    /// `|D⟩⟨D| − |A⟩⟨A|` in the H/V basis.
    fn obs() -> HermitianObservable {
        HermitianObservable::new(CMatrix::from_rows(&[vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]]).unwrap())
            .unwrap()
    }

    /// `cos(ϑ/2)|D⟩ + e^{iφ} sin(ϑ/2)|A⟩` in H/V coordinates.
    fn pre(vartheta: f64, phi: f64) -> TargetState {
        let (s, co) = (vartheta / 2.0).sin_cos();
        let e = Complex64::from_polar(s, phi);
        let k = FRAC_1_SQRT_2;
        TargetState::new(vec![(e + co) * k, (-e + co) * k]).unwrap()
    }

    fn case_i(theta_h_deg: f64) -> TargetState {
        pre((4.0 * theta_h_deg).to_radians() - core::f64::consts::FRAC_PI_2, 0.0)
    }

    #[test]
    fn eigenstate_weak_value() {
        let sel = Selection::pure(&d(), &d()).unwrap();
        assert!((weak_value(&sel, &obs()).unwrap() - 1.0).norm() < 1e-15);
        assert_eq!(weak_moment(&sel, &obs(), 0).unwrap(), ONE);
    }

    #[test]
    fn case_i_weak_values() {
        let sel = Selection::pure(&case_i(30.0), &h()).unwrap();
        let wv = weak_value(&sel, &obs()).unwrap();
        // direct inner products
        let i = case_i(30.0);
        let f = h();
        let oracle = inner(f.amplitudes(), &obs().matrix().mul_vec(i.amplitudes())) / f.inner(&i);
        assert!((wv - oracle).norm() < 1e-14);
        assert!((wv.re - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let sel = Selection::pure(&case_i(15.0), &h()).unwrap();
        assert!((weak_variance(&sel, &obs()).unwrap() - c(-2.0, 0.0)).norm() < 1e-12);
        let sel = Selection::pure(&case_i(22.5), &h()).unwrap();
        assert!(weak_variance(&sel, &obs()).unwrap().norm() < 1e-12);
    }

    #[test]
    fn case_ii_weak_variance_is_imaginary() {
        let q = 30f64.to_radians();
        let sel = Selection::pure(&pre(2.0 * q - core::f64::consts::FRAC_PI_2, -2.0 * q), &h()).unwrap();
        let v = weak_variance(&sel, &obs()).unwrap();
        assert!((v - c(0.0, 4.0 / 3.0)).norm() < 1e-12, "{v}");
    }

    #[test]
    fn maximally_mixed_post_selection_is_ordinary_statistics() {
        let i = pre(0.7, 0.4);
        let sel = Selection::new(i.clone(), DensityOp::maximally_mixed(2)).unwrap();
        let a = obs();
        assert!((weak_value(&sel, &a).unwrap() - a.expectation(&i)).norm() < 1e-12);
        let v = weak_variance(&sel, &a).unwrap();
        assert!(v.im.abs() < 1e-12);
        assert!((v.re - a.variance(&i)).abs() < 1e-12);
        let sel = Selection::new(h(), DensityOp::maximally_mixed(2)).unwrap();
        assert!((a_tilde(&sel, &a).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn weak_probabilities_case_i() {
        let sel = Selection::pure(&case_i(15.0), &h()).unwrap();
        let a = obs();
        let p = weak_prob_distribution(&sel, &a.projectors()).unwrap();
        let s3 = 3f64.sqrt();
        // ascending eigenvalues: −1 ↔ |A⟩, +1 ↔ |D⟩
        assert!((p[0] - (1.0 - s3) / 2.0).norm() < 1e-12);
        assert!((p[1] - (1.0 + s3) / 2.0).norm() < 1e-12);
        assert!(p[0].re < 0.0);
        assert!((p.iter().sum::<Complex64>() - 1.0).norm() < 1e-12);
        assert!((a_tilde(&sel, &a).unwrap() - 3.0).norm() < 1e-12);
    }

    #[test]
    fn weak_probabilities_reduce_to_born_rule() {
        let i = pre(1.1, 0.3);
        let sel = Selection::pure(&i, &i).unwrap();
        let a = obs();
        let p = weak_prob_distribution(&sel, &a.projectors()).unwrap();
        for (pj, proj) in p.iter().zip(a.projectors()) {
            let born = crate::hilbert::projection_probability(&i, &proj).unwrap();
            assert!((pj - born).norm() < 1e-12);
        }
    }

    #[test]
    fn incomplete_projectors_rejected() {
        let sel = Selection::pure(&d(), &h()).unwrap();
        let proj = vec![d().projector()];
        assert!(matches!(weak_prob_distribution(&sel, &proj), Err(Error::IncompleteProjectors { .. })));
    }

    #[test]
    fn near_orthogonal_rejected() {
        let sel = Selection::pure(&h(), &TargetState::basis(2, 1)).unwrap();
        assert!(sel.is_near_orthogonal());
        assert!(matches!(weak_value(&sel, &obs()), Err(Error::NearOrthogonal { .. })));
    }

    #[test]
    fn kd_examples() {
        let hv = OrthonormalBasis::computational(2);
        let da = OrthonormalBasis::new(vec![
            vec![c(FRAC_1_SQRT_2, 0.), c(FRAC_1_SQRT_2, 0.)],
            vec![c(FRAC_1_SQRT_2, 0.), c(-FRAC_1_SQRT_2, 0.)],
        ])
        .unwrap();
        let kd = kd_distribution(&h(), &hv, &da).unwrap();
        let expect = [[0.5, 0.5], [0.0, 0.0]];
        for j in 0..2 {
            for k in 0..2 {
                assert!((kd.values[j][k] - expect[j][k]).norm() < 1e-15);
            }
        }
        let i = pre(0.9, -0.6);
        let same = kd_distribution(&i, &da, &da).unwrap();
        assert!(same.values[0][1].norm() < 1e-15);
        assert!((same.values[0][0] - i.inner(&da.state(0)).norm_sqr()).norm() < 1e-15);
        // conditional row ↔ weak-valued probabilities of basis B projectors
        let kd = kd_distribution(&i, &hv, &da).unwrap();
        let row = kd.conditional_row(0).unwrap();
        let sel = Selection::pure(&i, &h()).unwrap();
        let pw = weak_prob_distribution(&sel, &[da.state(0).projector(), da.state(1).projector()]).unwrap();
        for (a, b) in row.iter().zip(&pw) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((kd.total() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn total_law_examples() {
        let a = obs();
        let i = pre(0.8, 1.2);
        let laws = total_laws(&i, &a, &OrthonormalBasis::computational(2)).unwrap();
        assert!(laws.expectation_error() < 1e-11);
        assert!(laws.variance_error() < 1e-11);
        // eigenbasis post-selection: every weak variance vanishes
        let eig = OrthonormalBasis::new(a.spectrum().iter().map(|s| s.vectors[0].clone()).collect()).unwrap();
        let laws = total_laws(&i, &a, &eig).unwrap();
        for t in &laws.terms {
            assert!(t.weak_variance.unwrap().norm() < 1e-12);
        }
        assert!(laws.variance_error() < 1e-11);
        // the pre-state as a member of the post basis
        let laws = total_laws(&h(), &a, &OrthonormalBasis::computational(2)).unwrap();
        assert_eq!(laws.terms[1].weight, 0.0);
        assert!(laws.terms[1].weak_value.is_none());
        assert!((laws.terms[0].weak_variance.unwrap() - a.variance(&h())).norm() < 1e-12);
    }

    #[test]
    fn variance_via_probs_identities() {
        let sel = Selection::pure(&pre(2.0, 0.9), &pre(0.4, -1.0)).unwrap();
        let ws = WeakStats::compute(&sel, &obs()).unwrap();
        let (sq, modulus) = ws.variance_via_probs();
        assert!((sq - ws.weak_variance).norm() < 1e-12);
        assert!((modulus - ws.weak_variance).norm() < 1e-12);
        assert_eq!(ws.weak_moments.len(), 4);
    }
}
