//! Labeled spectra, closed-form eigenvectors and characteristic fields of
//! the base (6×6) and augmented (8×8) systems, plus the weak-stratification
//! expansions of the critical Froude numbers and eigenvalues.

use std::fmt;

use nalgebra::{DMatrix, DVector, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolicity::{critical_froude, is_hyperbolic_2d};
use crate::model::{
    build_a_theta, build_aug_a_theta, build_aug_ax, build_rotation, build_rotation_aug,
    AugmentedState, LayerState, NondimState, PhysParams,
};
use crate::polynomial::{all_roots_real, char_quartic_from, quartic_roots_oracle, RootCertificate};
use crate::tristate::TriState;
use crate::DEFAULT_TOL;

/// Default weak-stratification window: the ordering of the spectrum is
/// checked for `gamma >= 1 - DEFAULT_DELTA`.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Eigenvalue labels. The first six are shared by both systems (`mu` for
/// the base system, `nu` for the augmented one); `L4±` are the two zero
/// eigenvalues of the augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    L1Minus,
    L1Plus,
    L2Minus,
    L2Plus,
    L3Minus,
    L3Plus,
    L4Minus,
    L4Plus,
}

impl Label {
    pub const BASE: [Label; 6] = [
        Label::L1Minus,
        Label::L1Plus,
        Label::L2Minus,
        Label::L2Plus,
        Label::L3Minus,
        Label::L3Plus,
    ];
    pub const AUGMENTED: [Label; 8] = [
        Label::L1Minus,
        Label::L1Plus,
        Label::L2Minus,
        Label::L2Plus,
        Label::L3Minus,
        Label::L3Plus,
        Label::L4Minus,
        Label::L4Plus,
    ];

    fn suffix(self) -> &'static str {
        match self {
            Label::L1Minus => "1-",
            Label::L1Plus => "1+",
            Label::L2Minus => "2-",
            Label::L2Plus => "2+",
            Label::L3Minus => "3-",
            Label::L3Plus => "3+",
            Label::L4Minus => "4-",
            Label::L4Plus => "4+",
        }
    }

    /// `mu1-` style names for the base system, `nu1-` for the augmented one.
    pub fn name(self, augmented: bool) -> String {
        format!("{}{}", if augmented { "nu" } else { "mu" }, self.suffix())
    }

    fn index(self) -> usize {
        Label::AUGMENTED.iter().position(|&l| l == self).unwrap()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

/// Spectrum of `A(u, theta)` (or `A^r(v, theta)`), one value per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSpectrum {
    pub theta: f64,
    pub augmented: bool,
    /// Values in the order of [`Label::BASE`] or [`Label::AUGMENTED`].
    pub values: Vec<Complex64>,
    /// Certificate of the quartic factor in the `theta` frame.
    pub certificate: RootCertificate,
}

impl LabeledSpectrum {
    pub fn labels(&self) -> &'static [Label] {
        if self.augmented {
            &Label::AUGMENTED
        } else {
            &Label::BASE
        }
    }

    pub fn get(&self, label: Label) -> Complex64 {
        self.values[label.index()]
    }

    /// `True` when the quartic factor has only real roots.
    pub fn real(&self) -> TriState {
        self.certificate.verdict
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Real parts, or `None` if the spectrum is certified complex.
    pub fn real_values(&self) -> Option<Vec<f64>> {
        if self.real().is_false() {
            None
        } else {
            Some(self.values.iter().map(|z| z.re).collect())
        }
    }
}

/// Quartic roots labeled `[l1-, l1+, l2-, l2+]`.
///
/// Real roots: for `|f| <= 1 + sqrt(h)` the outer pair is `l1` and the inner
/// pair `l2`; above, the pair next to `f` is `l1`. With a complex pair, the
/// real pair is `l1` and the conjugate pair `l2` (`l2+` has positive imaginary part).
fn label_roots(roots: [Complex64; 4], f: f64, h: f64, verdict: TriState) -> [Complex64; 4] {
    if !verdict.is_false() {
        let mut r: Vec<f64> = roots.iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        let c = |x: f64| Complex64::new(x, 0.0);
        return if f.abs() <= 1.0 + h.sqrt() {
            [c(r[0]), c(r[3]), c(r[1]), c(r[2])]
        } else if f > 0.0 {
            [c(r[2]), c(r[3]), c(r[0]), c(r[1])]
        } else {
            [c(r[0]), c(r[1]), c(r[2]), c(r[3])]
        };
    }
    let mut by_imag = roots;
    by_imag.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()));
    let pair = |a: Complex64, b: Complex64| {
        // enforce exact conjugacy
        let re = 0.5 * (a.re + b.re);
        let im = 0.5 * (a.im.abs() + b.im.abs());
        (Complex64::new(re, -im), Complex64::new(re, im))
    };
    let (lo, hi) = (by_imag[0], by_imag[1]);
    let first = if hi.im.abs() <= 1e-7 * hi.norm().max(1.0) {
        let (a, b) = if lo.re <= hi.re {
            (lo.re, hi.re)
        } else {
            (hi.re, lo.re)
        };
        (Complex64::new(a, 0.0), Complex64::new(b, 0.0))
    } else {
        pair(lo, hi)
    };
    let second = pair(by_imag[2], by_imag[3]);
    [first.0, first.1, second.0, second.1]
}

/// Labeled spectrum of `A(u, theta)`.
pub fn spectrum(s: &LayerState, p: &PhysParams, theta: f64) -> Result<LabeledSpectrum> {
    let r = s.rotated(theta);
    if !(r.h1 > 0.0) {
        return Err(Error::DegenerateLayer(format!(
            "h1 = {} (spectrum labeling needs h1 > 0)",
            r.h1
        )));
    }
    let c = (p.g * r.h1).sqrt();
    let f = (r.u2 - r.u1) / c;
    let h = r.h2 / r.h1;
    let quartic = char_quartic_from(f, h, p.gamma);
    let certificate = all_roots_real(&quartic);
    let lam = label_roots(quartic_roots_oracle(&quartic), f, h, certificate.verdict);
    let mut values: Vec<Complex64> = lam.iter().map(|l| r.u1 + l * c).collect();
    values.push(Complex64::new(r.u1, 0.0));
    values.push(Complex64::new(r.u2, 0.0));
    Ok(LabeledSpectrum {
        theta,
        augmented: false,
        values,
        certificate,
    })
}

/// Labeled spectrum of `A^r(v, theta)`: the base spectrum with `nu4± = 0`.
pub fn augmented_spectrum(
    v: &AugmentedState,
    p: &PhysParams,
    theta: f64,
) -> Result<LabeledSpectrum> {
    let mut sp = spectrum(&v.layer, p, theta)?;
    sp.values.extend([Complex64::new(0.0, 0.0); 2]);
    sp.augmented = true;
    Ok(sp)
}

/// `mu1+ > mu2+ > mu2- > mu1-` on a real spectrum.
pub fn ordering_holds(sp: &LabeledSpectrum) -> bool {
    match sp.real_values() {
        Some(v) if sp.real().is_true() => v[1] > v[3] && v[3] > v[2] && v[2] > v[0],
        _ => false,
    }
}

type CVec6 = SVector<Complex64, 6>;
type CVec8 = SVector<Complex64, 8>;

fn cr_cl(r: &LayerState, p: &PhysParams, mu: Complex64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let cr = one - (mu - r.u1).powi(2) / (p.g * r.h1);
    let cl = one - (mu - r.u2).powi(2) / (p.g * r.h2);
    (cr, cl)
}

/// Closed-form right eigenvector of `A_x` at state `r` (already in the
/// x-frame). Also valid for complex `mu` on the quartic branches.
pub fn right_vector_x(r: &LayerState, p: &PhysParams, label: Label, mu: Complex64) -> CVec6 {
    let mut e = CVec6::zeros();
    match label {
        Label::L3Minus => e[4] = Complex64::new(1.0, 0.0),
        Label::L3Plus => e[5] = Complex64::new(1.0, 0.0),
        _ => {
            let (cr, _) = cr_cl(r, p, mu);
            e[0] = Complex64::new(1.0, 0.0);
            e[1] = -cr;
            e[2] = (mu - r.u1) / r.h1;
            e[3] = -cr * (mu - r.u2) / r.h2;
        }
    }
    e
}

/// Closed-form left eigenvector of `A_x` at state `r` (x-frame).
pub fn left_vector_x(r: &LayerState, p: &PhysParams, label: Label, mu: Complex64) -> CVec6 {
    let mut e = CVec6::zeros();
    match label {
        Label::L3Minus => e[4] = Complex64::new(1.0, 0.0),
        Label::L3Plus => e[5] = Complex64::new(1.0, 0.0),
        _ => {
            let (_, cl) = cr_cl(r, p, mu);
            e[0] = (mu - r.u1) / r.h1;
            e[1] = -(mu - r.u2) / (r.h2 * cl);
            e[2] = Complex64::new(1.0, 0.0);
            e[3] = -cl.inv();
        }
    }
    e
}

/// Eigenvalues, eigenvectors and their quality.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub spectrum: LabeledSpectrum,
    pub right: Vec<DVector<f64>>,
    pub left: Vec<DVector<f64>>,
    /// `|A r - mu r|_inf` per label.
    pub residuals: Vec<f64>,
    /// `|l^T A - mu l^T|_inf` per label.
    pub left_residuals: Vec<f64>,
    /// Largest absolute entry of the symbol, at least 1.
    pub scale: f64,
    pub diagonalizable: TriState,
    /// Labels whose vectors come from a numerical null-space basis instead
    /// of the closed forms.
    pub numeric_fallback: Vec<Label>,
}

impl EigenDecomposition {
    /// `max_k residual_k / (scale |r_k|)`.
    pub fn max_relative_residual(&self) -> f64 {
        self.residuals
            .iter()
            .zip(&self.right)
            .map(|(res, r)| res / (self.scale * r.amax()))
            .fold(0.0, f64::max)
    }

    pub fn max_relative_left_residual(&self) -> f64 {
        self.left_residuals
            .iter()
            .zip(&self.left)
            .map(|(res, l)| res / (self.scale * l.amax()))
            .fold(0.0, f64::max)
    }

    /// Right eigenvectors as columns.
    pub fn right_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.right)
    }
}

fn real_part<const N: usize>(v: &SVector<Complex64, N>) -> DVector<f64> {
    DVector::from_iterator(N, v.iter().map(|z| z.re))
}

/// Smallest singular value of the column-normalized matrix.
fn min_singular_normalized(cols: &[DVector<f64>]) -> f64 {
    let normed: Vec<DVector<f64>> = cols.iter().map(|c| c / c.norm()).collect();
    let m = DMatrix::from_columns(&normed);
    m.singular_values().min()
}

fn diagonalizable_verdict(sp: &LabeledSpectrum, cols: &[DVector<f64>], tol: f64) -> TriState {
    match sp.real() {
        TriState::False => TriState::False,
        TriState::Boundary => TriState::Boundary,
        TriState::True => {
            let smin = min_singular_normalized(cols);
            if smin.is_finite() && smin > tol {
                TriState::True
            } else {
                TriState::Boundary
            }
        }
    }
}

fn require_layers(s: &LayerState) -> Result<()> {
    if !(s.h1 > 0.0 && s.h2 > 0.0) {
        return Err(Error::DegenerateLayer(format!(
            "eigenvectors need h1, h2 > 0, got h1 = {}, h2 = {}",
            s.h1, s.h2
        )));
    }
    Ok(())
}

/// Closed-form eigenstructure of `A(u, theta)`, transported from the
/// x-direction with `r(u, theta) = P(theta)^T r_x(P(theta) u)`.
pub fn eigen_decomposition(
    s: &LayerState,
    p: &PhysParams,
    theta: f64,
) -> Result<EigenDecomposition> {
    require_layers(s)?;
    let sp = spectrum(s, p, theta)?;
    if sp.real().is_false() {
        return Err(Error::NonRealSpectrum {
            max_imag: sp.max_imag(),
        });
    }
    let rs = s.rotated(theta);
    let pt = build_rotation(theta).transpose();
    let a = build_a_theta(s, p, theta);
    let mut right = Vec::with_capacity(6);
    let mut left = Vec::with_capacity(6);
    let mut residuals = Vec::with_capacity(6);
    let mut left_residuals = Vec::with_capacity(6);
    for &label in &Label::BASE {
        let mu = Complex64::new(sp.get(label).re, 0.0);
        let r = pt * real_part(&right_vector_x(&rs, p, label, mu)).fixed_rows::<6>(0);
        let l = pt * real_part(&left_vector_x(&rs, p, label, mu)).fixed_rows::<6>(0);
        residuals.push((a * r - r * mu.re).amax());
        left_residuals.push((a.transpose() * l - l * mu.re).amax());
        right.push(DVector::from_column_slice(r.as_slice()));
        left.push(DVector::from_column_slice(l.as_slice()));
    }
    let diagonalizable = diagonalizable_verdict(&sp, &right, DEFAULT_TOL);
    Ok(EigenDecomposition {
        spectrum: sp,
        right,
        left,
        residuals,
        left_residuals,
        scale: a.amax().max(1.0),
        diagonalizable,
        numeric_fallback: Vec::new(),
    })
}

/// Real diagonalizability of `A(u, theta)`: `False` for a complex spectrum
/// or degenerate layers, `Boundary` when eigenvalues of the quartic factor
/// collide or the eigenvectors are numerically dependent.
pub fn is_diagonalizable(s: &LayerState, p: &PhysParams, theta: f64) -> TriState {
    match eigen_decomposition(s, p, theta) {
        Ok(d) => d.diagonalizable,
        Err(Error::NonRealSpectrum { .. }) | Err(Error::DegenerateLayer(_)) => TriState::False,
        Err(_) => TriState::Boundary,
    }
}

fn aug_right_x(v: &AugmentedState, p: &PhysParams, label: Label, nu: f64) -> CVec8 {
    let s = &v.layer;
    let (g, f) = (p.g, p.f);
    let (r1, r2) = (v.w1 + f, v.w2 + f);
    let mut e = [0.0; 8];
    match label {
        Label::L3Minus => e[6] = 1.0,
        Label::L3Plus => e[7] = 1.0,
        Label::L4Minus => {
            let k = s.v1 * s.v2;
            e[1] = k * s.h2;
            e[3] = -k * s.u2;
            e[7] = k * r2;
            e[4] = -g * s.h2 * s.v2;
            e[5] = s.v1 * (s.u2 * s.u2 - g * s.h2);
        }
        Label::L4Plus => {
            let k = s.v1 * s.v2;
            e[0] = k * s.h1;
            e[2] = -k * s.u1;
            e[6] = k * r1;
            e[4] = s.v2 * (s.u1 * s.u1 - g * s.h1);
            e[5] = -p.gamma * g * s.h1 * s.v1;
        }
        _ => {
            let cr = 1.0 - (nu - s.u1).powi(2) / (g * s.h1);
            e[0] = 1.0;
            e[2] = (nu - s.u1) / s.h1;
            e[6] = r1 / s.h1;
            e[1] = -cr;
            e[3] = -cr * (nu - s.u2) / s.h2;
            e[7] = -cr * r2 / s.h2;
        }
    }
    CVec8::from_iterator(e.iter().map(|&x| Complex64::new(x, 0.0)))
}

fn aug_left_x(v: &AugmentedState, p: &PhysParams, label: Label, nu: f64) -> CVec8 {
    let s = &v.layer;
    let (r1, r2) = (v.w1 + p.f, v.w2 + p.f);
    let mut e = [0.0; 8];
    match label {
        Label::L3Minus => {
            e[0] = -r1;
            e[6] = s.h1;
        }
        Label::L3Plus => {
            e[1] = -r2;
            e[7] = s.h2;
        }
        Label::L4Minus => e[4] = 1.0,
        Label::L4Plus => e[5] = 1.0,
        _ => {
            let base = left_vector_x(s, p, label, Complex64::new(nu, 0.0));
            for i in 0..4 {
                e[i] = nu * base[i].re;
            }
            let cl = 1.0 - (nu - s.u2).powi(2) / (p.g * s.h2);
            e[4] = s.v1;
            e[5] = -s.v2 / cl;
        }
    }
    CVec8::from_iterator(e.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// Closed-form eigenstructure of `A^r(v, theta)`.
///
/// The `nu4±` closed forms carry the factor `v1 v2` of the rotated state and
/// collapse when it vanishes; those two vectors are then replaced by a
/// numerical null-space basis and listed in `numeric_fallback`.
pub fn augmented_eigenvectors(
    v: &AugmentedState,
    p: &PhysParams,
    theta: f64,
) -> Result<EigenDecomposition> {
    require_layers(&v.layer)?;
    let sp = augmented_spectrum(v, p, theta)?;
    if sp.real().is_false() {
        return Err(Error::NonRealSpectrum {
            max_imag: sp.max_imag(),
        });
    }
    let rv = v.rotated(theta);
    let pt = build_rotation_aug(theta).transpose();
    let a = build_aug_a_theta(v, p, theta);
    let mut right: Vec<DVector<f64>> = Vec::with_capacity(8);
    let mut left: Vec<DVector<f64>> = Vec::with_capacity(8);
    for &label in &Label::AUGMENTED {
        let nu = sp.get(label).re;
        let r = pt * real_part(&aug_right_x(&rv, p, label, nu)).fixed_rows::<8>(0);
        let l = pt * real_part(&aug_left_x(&rv, p, label, nu)).fixed_rows::<8>(0);
        right.push(DVector::from_column_slice(r.as_slice()));
        left.push(DVector::from_column_slice(l.as_slice()));
    }
    let mut numeric_fallback = Vec::new();
    let kernel_pair = [right[6].clone(), right[7].clone()];
    let collapsed = kernel_pair.iter().any(|c| !(c.amax() > 0.0))
        || min_singular_normalized(&kernel_pair) < 1e-8;
    if collapsed {
        let ax = build_aug_ax(&rv, p);
        let svd = DMatrix::from_column_slice(8, 8, ax.as_slice()).svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let pt_d = DMatrix::from_column_slice(8, 8, pt.as_slice());
        for (slot, &k) in [6usize, 7].iter().zip(order.iter()) {
            right[*slot] = &pt_d * vt.row(k).transpose();
        }
        numeric_fallback.extend([Label::L4Minus, Label::L4Plus]);
    }
    let ad = DMatrix::from_column_slice(8, 8, a.as_slice());
    let mut residuals = Vec::with_capacity(8);
    let mut left_residuals = Vec::with_capacity(8);
    for (k, &label) in Label::AUGMENTED.iter().enumerate() {
        let nu = sp.get(label).re;
        residuals.push((&ad * &right[k] - &right[k] * nu).amax());
        left_residuals.push((ad.transpose() * &left[k] - &left[k] * nu).amax());
    }
    let diagonalizable = diagonalizable_verdict(&sp, &right, DEFAULT_TOL);
    Ok(EigenDecomposition {
        spectrum: sp,
        right,
        left,
        residuals,
        left_residuals,
        scale: a.amax().max(1.0),
        diagonalizable,
        numeric_fallback,
    })
}

/// Like [`augmented_eigenvectors`] but refuses the numerical fallback.
pub fn augmented_eigenvectors_strict(
    v: &AugmentedState,
    p: &PhysParams,
    theta: f64,
) -> Result<EigenDecomposition> {
    let d = augmented_eigenvectors(v, p, theta)?;
    if d.numeric_fallback.is_empty() {
        Ok(d)
    } else {
        Err(Error::DegenerateEigenvector(format!(
            "nu4 closed forms collapse (v1 v2 = {} in the rotated frame)",
            {
                let r = v.layer.rotated(theta);
                r.v1 * r.v2
            }
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    GenuinelyNonlinear,
    LinearlyDegenerate,
    Indeterminate,
}

/// Threshold above which the normalized margin means genuinely nonlinear.
pub const GNL_THRESHOLD: f64 = 1e-6;
/// Threshold below which the normalized margin means linearly degenerate.
pub const LD_THRESHOLD: f64 = 1e-10;
/// Relative finite-difference step for eigenvalue gradients.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub label: Label,
    pub value: f64,
    /// Gradient of the eigenvalue with respect to the state variables.
    pub gradient: Vec<f64>,
    /// `grad(mu) . r`
    pub dot: f64,
    /// `|grad(mu) . r| / (|grad(mu)| |r|)`, zero when the gradient vanishes.
    pub margin: f64,
    /// Relative change of the gradient between step and half step.
    pub richardson_gap: f64,
    pub kind: FieldKind,
}

fn classify_margin(margin: f64) -> FieldKind {
    if margin > GNL_THRESHOLD {
        FieldKind::GenuinelyNonlinear
    } else if margin < LD_THRESHOLD {
        FieldKind::LinearlyDegenerate
    } else {
        FieldKind::Indeterminate
    }
}

/// Finite-difference field classification shared by both systems.
fn fields_generic(
    x0: &[f64],
    eval: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    labels: &[Label],
    right: &[DVector<f64>],
) -> Result<Vec<FieldReport>> {
    let base = eval(x0)?;
    let n = x0.len();
    let vscale = base.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tracked = |perturbed: &[f64]| -> Result<()> {
        for j in 0..base.len() {
            let same = (perturbed[j] - base[j]).abs();
            for k in 0..base.len() {
                if k != j
                    && (base[k] - base[j]).abs() > 1e-12 * vscale
                    && (perturbed[k] - base[j]).abs() < same
                {
                    return Err(Error::EigenTrackingFailure(format!(
                        "eigenvalue {} is closer to {} after perturbation",
                        labels[j], labels[k]
                    )));
                }
            }
        }
        Ok(())
    };
    let central = |step_factor: f64| -> Result<Vec<Vec<f64>>> {
        let mut grads = vec![vec![0.0; n]; base.len()];
        for i in 0..n {
            let d = FD_STEP * step_factor * x0[i].abs().max(1.0);
            let mut xp = x0.to_vec();
            let mut xm = x0.to_vec();
            xp[i] += d;
            xm[i] -= d;
            let (vp, vm) = (eval(&xp)?, eval(&xm)?);
            tracked(&vp)?;
            tracked(&vm)?;
            let width = xp[i] - xm[i];
            for j in 0..base.len() {
                grads[j][i] = (vp[j] - vm[j]) / width;
            }
        }
        Ok(grads)
    };
    let full = central(1.0)?;
    let half = central(0.5)?;
    let mut out = Vec::with_capacity(labels.len());
    for (j, &label) in labels.iter().enumerate() {
        let grad: Vec<f64> = (0..n)
            .map(|i| (4.0 * half[j][i] - full[j][i]) / 3.0)
            .collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let diff = (0..n)
            .map(|i| (full[j][i] - half[j][i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let r = &right[j];
        let dot: f64 = grad.iter().zip(r.iter()).map(|(g, x)| g * x).sum();
        let denom = gnorm * r.norm();
        let margin = if denom > 0.0 { dot.abs() / denom } else { 0.0 };
        out.push(FieldReport {
            label,
            value: base[j],
            gradient: grad,
            dot,
            margin,
            richardson_gap: if gnorm > 0.0 { diff / gnorm } else { 0.0 },
            kind: classify_margin(margin),
        });
    }
    Ok(out)
}

/// Genuinely nonlinear / linearly degenerate classification of the six
/// x-direction characteristic fields.
pub fn characteristic_fields(s: &LayerState, p: &PhysParams) -> Result<Vec<FieldReport>> {
    let d = eigen_decomposition(s, p, 0.0)?;
    let x0 = s.to_vector();
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        let st = LayerState::from_vector(&crate::model::Vec6::from_column_slice(x));
        let sp = spectrum(&st, p, 0.0)?;
        sp.real_values().ok_or(Error::NonRealSpectrum {
            max_imag: sp.max_imag(),
        })
    };
    fields_generic(x0.as_slice(), &eval, &Label::BASE, &d.right)
}

/// Field classification for the eight x-direction fields of the augmented system.
pub fn characteristic_fields_augmented(
    v: &AugmentedState,
    p: &PhysParams,
) -> Result<Vec<FieldReport>> {
    let d = augmented_eigenvectors(v, p, 0.0)?;
    let x0 = v.to_vector();
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        let st = AugmentedState::from_vector(&crate::model::Vec8::from_column_slice(x));
        let sp = augmented_spectrum(&st, p, 0.0)?;
        sp.real_values().ok_or(Error::NonRealSpectrum {
            max_imag: sp.max_imag(),
        })
    };
    fields_generic(x0.as_slice(), &eval, &Label::AUGMENTED, &d.right)
}

/// Scans `gamma` downward from 1 in steps of `step` at fixed `(h, fx)` and
/// returns the first `1 - gamma` at which a 2D-hyperbolic state violates
/// `mu1+ > mu2+ > mu2- > mu1-`, or `None` if the ordering never fails.
pub fn delta_probe(h: f64, fx: f64, step: f64) -> Option<f64> {
    let n = (1.0 / step).floor() as usize;
    (1..n).map(|k| k as f64 * step).find(|&eps| {
        let gamma = 1.0 - eps;
        let p = PhysParams {
            gamma,
            g: 1.0,
            f: 0.0,
        };
        let s = NondimState { fx, fy: 0.0, h }.to_layer_state(1.0);
        is_hyperbolic_2d(&s, &p).is_true()
            && !spectrum(&s, &p, 0.0)
                .map(|sp| ordering_holds(&sp))
                .unwrap_or(false)
    })
}

/// Weak-stratification expansions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// `F_crit^-² ≈ (1 - gamma)(1 + h)`
    FcritMinusSquared,
    /// `F_crit^+ ≈ (1 + h^(1/3))^(3/2)`
    FcritPlus,
    /// `lambda` for `|F_x| < F_crit^-`
    SubcriticalLambda,
    /// `lambda` for `|F_x| > F_crit^+` and small `h`
    SupercriticalLambda,
    /// `F_crit^-² - (1 - gamma)(1 + h) ≈ (1 - gamma)² h (1 + 27h + 27h² + 9h³)/(1 + h)^4`
    RigidLidGap,
}

impl Expansion {
    pub const ALL: [Expansion; 5] = [
        Expansion::FcritMinusSquared,
        Expansion::FcritPlus,
        Expansion::SubcriticalLambda,
        Expansion::SupercriticalLambda,
        Expansion::RigidLidGap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Expansion::FcritMinusSquared => "fcrit_minus_squared",
            Expansion::FcritPlus => "fcrit_plus",
            Expansion::SubcriticalLambda => "subcritical_lambda",
            Expansion::SupercriticalLambda => "supercritical_lambda",
            Expansion::RigidLidGap => "rigid_lid_gap",
        }
    }
}

/// A predicted (or exact) value. Lambdas are ordered `[l1-, l1+, l2-, l2+]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Scalar(f64),
    Lambdas([f64; 4]),
}

impl Prediction {
    fn values(&self) -> Vec<f64> {
        match self {
            Prediction::Scalar(x) => vec![*x],
            Prediction::Lambdas(l) => l.to_vec(),
        }
    }
}

/// How far from `gamma = 1` (and `h = 0` for the supercritical case) an
/// expansion may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionLimits {
    pub max_one_minus_gamma: f64,
    pub max_h: f64,
}

impl Default for ExpansionLimits {
    fn default() -> Self {
        ExpansionLimits {
            max_one_minus_gamma: 0.1,
            max_h: 0.25,
        }
    }
}

pub fn expansion(nd: &NondimState, gamma: f64, which: Expansion) -> Result<Prediction> {
    expansion_with_limits(nd, gamma, which, &ExpansionLimits::default())
}

/// Evaluates the displayed closed forms.
pub fn expansion_with_limits(
    nd: &NondimState,
    gamma: f64,
    which: Expansion,
    limits: &ExpansionLimits,
) -> Result<Prediction> {
    let eps = 1.0 - gamma;
    let (f, h) = (nd.fx, nd.h);
    if !(eps > 0.0 && eps <= limits.max_one_minus_gamma) {
        return Err(Error::OutOfRegime(format!(
            "1 - gamma = {eps} outside (0, {}]",
            limits.max_one_minus_gamma
        )));
    }
    if !(h > 0.0) {
        return Err(Error::DegenerateLayer(format!("h = {h}")));
    }
    Ok(match which {
        Expansion::FcritMinusSquared => Prediction::Scalar(eps * (1.0 + h)),
        Expansion::FcritPlus => Prediction::Scalar((1.0 + h.cbrt()).powf(1.5)),
        Expansion::RigidLidGap => Prediction::Scalar(
            eps * eps * h * (1.0 + 27.0 * h + 27.0 * h * h + 9.0 * h.powi(3)) / (1.0 + h).powi(4),
        ),
        Expansion::SubcriticalLambda => {
            let fm = critical_froude(h, gamma)?.f_minus;
            if f.abs() >= fm {
                return Err(Error::OutOfRegime(format!(
                    "|F_x| = {} not below F_crit^- = {fm}",
                    f.abs()
                )));
            }
            let s = (1.0 + h).sqrt();
            let outer = (1.0 + h).powi(2) - 0.5 * h * eps;
            let l1 = |sign: f64| (f * h * s + sign * outer) / (1.0 + h).powf(1.5);
            let rad = (h / (1.0 + h).powi(2) * ((1.0 + h) * eps - f * f)).sqrt();
            let c = f / (1.0 + h);
            Prediction::Lambdas([l1(-1.0), l1(1.0), c - rad, c + rad])
        }
        Expansion::SupercriticalLambda => {
            if h > limits.max_h {
                return Err(Error::OutOfRegime(format!(
                    "h = {h} above {}",
                    limits.max_h
                )));
            }
            let fp = critical_froude(h, gamma)?.f_plus;
            if f.abs() <= fp {
                return Err(Error::OutOfRegime(format!(
                    "|F_x| = {} not above F_crit^+ = {fp}",
                    f.abs()
                )));
            }
            let d = f * f - 1.0;
            let centre = f + f * h / d;
            let rad = h.sqrt() * (1.0 + h * gamma / d + (h * f / d).powi(2)).sqrt();
            let l2 = 1.0 + h / (2.0 * (f - 1.0).powi(2));
            Prediction::Lambdas([centre - rad, centre + rad, -l2, l2])
        }
    })
}

/// Exact counterpart of an expansion: roots of `q` for the thresholds,
/// labeled quartic roots for the eigenvalues.
pub fn expansion_oracle(nd: &NondimState, gamma: f64, which: Expansion) -> Result<Prediction> {
    let fc = || critical_froude(nd.h, gamma);
    Ok(match which {
        Expansion::FcritMinusSquared => Prediction::Scalar(fc()?.f_minus.powi(2)),
        Expansion::FcritPlus => Prediction::Scalar(fc()?.f_plus),
        Expansion::RigidLidGap => Prediction::Scalar(
            fc()?.f_minus.powi(2) - crate::hyperbolicity::rigid_lid_threshold(nd.h, gamma),
        ),
        Expansion::SubcriticalLambda | Expansion::SupercriticalLambda => {
            let q = char_quartic_from(nd.fx, nd.h, gamma);
            let cert = all_roots_real(&q);
            if cert.verdict.is_false() {
                return Err(Error::NonRealSpectrum {
                    max_imag: crate::polynomial::max_imag_root(&q),
                });
            }
            let l = label_roots(quartic_roots_oracle(&q), nd.fx, nd.h, cert.verdict);
            Prediction::Lambdas([l[0].re, l[1].re, l[2].re, l[3].re])
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub one_minus_gamma: f64,
    pub fx: f64,
    pub oracle: Prediction,
    pub predicted: Prediction,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub which: Expansion,
    pub h: f64,
    /// Least-squares slope of `ln(error)` against `ln(1 - gamma)`.
    pub slope: f64,
    pub samples: Vec<FitSample>,
}

/// Gammas `1 - 2^-k`, `k = 4..=12`, used by the order fits.
pub fn fit_gammas() -> Vec<f64> {
    (4..=12).map(|k| 1.0 - 2f64.powi(-k)).collect()
}

/// Error of an expansion at one `gamma`. Eigenvalue expansions are compared
/// on the pair the expansion targets (`l2±` subcritical, `l1±` supercritical)
/// at `F_x = F_crit^-/2` and `F_x = 2 F_crit^+` respectively.
pub fn expansion_sample(h: f64, gamma: f64, which: Expansion) -> Result<FitSample> {
    let fc = critical_froude(h, gamma)?;
    let fx = match which {
        Expansion::SubcriticalLambda => 0.5 * fc.f_minus,
        Expansion::SupercriticalLambda => 2.0 * fc.f_plus,
        _ => 0.0,
    };
    let nd = NondimState::new(fx, 0.0, h)?;
    let limits = ExpansionLimits {
        max_one_minus_gamma: 1.0,
        max_h: f64::INFINITY,
    };
    let predicted = expansion_with_limits(&nd, gamma, which, &limits)?;
    let oracle = expansion_oracle(&nd, gamma, which)?;
    let (pv, ov) = (predicted.values(), oracle.values());
    let range = match which {
        Expansion::SubcriticalLambda => 2..4,
        Expansion::SupercriticalLambda => 0..2,
        _ => 0..1,
    };
    let error = range.map(|i| (pv[i] - ov[i]).abs()).fold(0.0, f64::max);
    Ok(FitSample {
        one_minus_gamma: 1.0 - gamma,
        fx,
        oracle,
        predicted,
        error,
    })
}

pub fn expansion_order_fit(h: f64, which: Expansion) -> Result<OrderFit> {
    let samples = fit_gammas()
        .into_iter()
        .map(|g| expansion_sample(h, g, which))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.error > 0.0)
        .map(|s| (s.one_minus_gamma.ln(), s.error.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidInput(
            "order fit needs at least two nonzero errors".into(),
        ));
    }
    Ok(OrderFit {
        which,
        h,
        slope: ls_slope(&pts),
        samples,
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn state(h1: f64, h2: f64, u1: f64, u2: f64, v1: f64, v2: f64) -> LayerState {
        LayerState::new(h1, h2, u1, u2, v1, v2).unwrap()
    }

    fn params(gamma: f64, g: f64) -> PhysParams {
        PhysParams::new(gamma, g, 0.0).unwrap()
    }

    #[test]
    fn spectrum_at_rest() {
        let sp = spectrum(&state(1.0, 1.0, 0.0, 0.0, 0.0, 0.0), &params(1.0, 1.0), 0.0).unwrap();
        let v: Vec<f64> = sp.values.iter().map(|z| z.re).collect();
        assert!((v[0] + SQRT_2).abs() < 1e-7 && (v[1] - SQRT_2).abs() < 1e-7);
        assert!(v[2].abs() < 1e-7 && v[3].abs() < 1e-7);
        assert_eq!((v[4], v[5]), (0.0, 0.0));

        let sp = spectrum(
            &state(1.0, 1.0, 0.0, 0.0, 0.0, 0.0),
            &params(1.0, 9.81),
            0.0,
        )
        .unwrap();
        let m = (2.0f64 * 9.81).sqrt();
        assert!(
            (sp.get(Label::L1Plus).re - m).abs() < 1e-6
                && (sp.get(Label::L1Minus).re + m).abs() < 1e-6
        );
    }

    #[test]
    fn gap_state_has_complex_second_pair() {
        let s = NondimState::new(2.0, 0.0, 1.0).unwrap().to_layer_state(1.0);
        let sp = spectrum(&s, &params(0.5, 1.0), 0.0).unwrap();
        assert_eq!(sp.real(), TriState::False);
        let (m, p) = (sp.get(Label::L2Minus), sp.get(Label::L2Plus));
        assert!(p.im > 0.1 && m == p.conj());
        assert_eq!(sp.get(Label::L1Plus).im, 0.0);
        let e = eigen_decomposition(&s, &params(0.5, 1.0), 0.0);
        assert!(matches!(e, Err(Error::NonRealSpectrum { .. })));
    }

    #[test]
    fn trivial_eigenvalues_are_exact() {
        let s = state(1.2, 0.8, 0.3, -0.1, 0.2, 0.05);
        let sp = spectrum(&s, &params(0.95, 9.81), 0.7).unwrap();
        let r = s.rotated(0.7);
        assert_eq!(sp.get(Label::L3Minus).re, r.u1);
        assert_eq!(sp.get(Label::L3Plus).re, r.u2);
    }

    #[test]
    fn closed_form_residuals() {
        let s = state(1.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let d = eigen_decomposition(&s, &params(1.0, 1.0), 0.0).unwrap();
        assert_eq!(d.residuals[4], 0.0);
        assert_eq!(
            d.right[4],
            DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        // mu = sqrt 2: c^r = -1
        let r = &d.right[1];
        assert!((r[1] - 1.0).abs() < 1e-7 && (r[2] - SQRT_2).abs() < 1e-7);
        assert!(d.residuals[1] < 1e-10);

        let s = state(1.3, 0.9, 0.21, 0.17, -0.12, -0.08);
        let p = params(0.97, 9.81);
        for theta in [0.0, 0.4, 2.1, -1.3] {
            let d = eigen_decomposition(&s, &p, theta).unwrap();
            assert!(
                d.max_relative_residual() < 1e-8,
                "{theta}: {}",
                d.max_relative_residual()
            );
            assert!(d.max_relative_left_residual() < 1e-8);
            assert_eq!(d.diagonalizable, TriState::True);
            assert!(ordering_holds(&d.spectrum));
        }
    }

    #[test]
    fn biorthogonality() {
        let s = state(1.3, 0.9, 0.21, 0.17, -0.12, -0.08);
        let d = eigen_decomposition(&s, &params(0.97, 9.81), 0.3).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    let dot = d.left[i].dot(&d.right[j]);
                    assert!(
                        dot.abs() < 1e-8 * d.left[i].norm() * d.right[j].norm(),
                        "({i},{j}) {dot}"
                    );
                }
            }
        }
    }

    #[test]
    fn diagonalizability_examples() {
        let s = NondimState::new(0.05, 0.0, 1.0)
            .unwrap()
            .to_layer_state(1.0);
        assert_eq!(
            is_diagonalizable(&s, &params(0.99, 1.0), 0.0),
            TriState::True
        );
        let s = state(1.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            is_diagonalizable(&s, &params(1.0, 1.0), 0.0),
            TriState::Boundary
        );
        let s = NondimState::new(2.0, 0.0, 1.0).unwrap().to_layer_state(1.0);
        assert_eq!(
            is_diagonalizable(&s, &params(0.5, 1.0), 0.0),
            TriState::False
        );
    }

    #[test]
    fn augmented_vectors() {
        let v = AugmentedState::new(state(1.1, 0.9, 0.1, 0.25, 0.3, -0.2), 0.4, -0.1).unwrap();
        let p = PhysParams::new(0.96, 9.81, 1e-4).unwrap();
        for theta in [0.0, 0.9, -2.4] {
            let d = augmented_eigenvectors(&v, &p, theta).unwrap();
            assert!(d.numeric_fallback.is_empty());
            assert!(
                d.max_relative_residual() < 1e-8,
                "{}",
                d.max_relative_residual()
            );
            assert!(
                d.max_relative_left_residual() < 1e-8,
                "{}",
                d.max_relative_left_residual()
            );
        }
        let d = augmented_eigenvectors(&v, &p, 0.0).unwrap();
        assert_eq!(d.residuals[4], 0.0);
        assert_eq!(d.right[4][6], 1.0);
        let l = &d.left[4];
        assert_eq!((l[0], l[6]), (-(p.f + v.w1), v.layer.h1));
        assert!(d.left_residuals[4] < 1e-10 * d.scale);
    }

    #[test]
    fn augmented_fallback_without_transverse_velocity() {
        let v = AugmentedState::new(state(1.0, 1.0, 0.1, 0.2, 0.0, 0.0), 0.0, 0.0).unwrap();
        let p = params(0.95, 9.81);
        let d = augmented_eigenvectors(&v, &p, 0.0).unwrap();
        assert_eq!(d.numeric_fallback, vec![Label::L4Minus, Label::L4Plus]);
        assert!(d.max_relative_residual() < 1e-8);
        assert!(matches!(
            augmented_eigenvectors_strict(&v, &p, 0.0),
            Err(Error::DegenerateEigenvector(_))
        ));
    }

    #[test]
    fn field_classification() {
        let s = NondimState::new(0.05, 0.0, 1.0)
            .unwrap()
            .to_layer_state(1.0);
        let p = params(0.99, 1.0);
        let fields = characteristic_fields(&s, &p).unwrap();
        for f in &fields {
            let expected = match f.label {
                Label::L3Minus | Label::L3Plus => FieldKind::LinearlyDegenerate,
                _ => FieldKind::GenuinelyNonlinear,
            };
            assert_eq!(f.kind, expected, "{:?}", f);
        }
        assert_eq!(fields[4].dot, 0.0);

        let v = AugmentedState::new(state(1.0, 1.0, 0.0, 0.05, 0.02, 0.03), 0.1, 0.2).unwrap();
        let fields = characteristic_fields_augmented(&v, &p).unwrap();
        for f in &fields[4..] {
            assert_eq!(f.kind, FieldKind::LinearlyDegenerate, "{:?}", f);
        }
        assert!(fields[6].gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn expansion_examples() {
        for h in [0.5, 1.0, 2.0] {
            let nd = NondimState::new(0.0, 0.0, h).unwrap();
            let Prediction::Lambdas(l) =
                expansion(&nd, 0.99, Expansion::SubcriticalLambda).unwrap()
            else {
                panic!()
            };
            let expected = (h * 0.01 / (1.0 + h)).sqrt();
            assert!((l[3] - expected).abs() < 1e-15 && (l[2] + expected).abs() < 1e-15);
        }
        let nd = NondimState::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(
            expansion(&nd, 0.99, Expansion::FcritPlus).unwrap(),
            Prediction::Scalar(2f64.powf(1.5))
        );
        let Prediction::Scalar(gap) = expansion(&nd, 0.98, Expansion::RigidLidGap).unwrap() else {
            panic!()
        };
        assert!((gap - 1.6e-3).abs() < 1e-15);
        assert!(matches!(
            expansion(&nd, 0.5, Expansion::FcritPlus),
            Err(Error::OutOfRegime(_))
        ));
        let fast = NondimState::new(0.5, 0.0, 1.0).unwrap();
        assert!(matches!(
            expansion(&fast, 0.99, Expansion::SubcriticalLambda),
            Err(Error::OutOfRegime(_))
        ));
    }

    #[test]
    fn order_fits() {
        let f = expansion_order_fit(1.0, Expansion::FcritMinusSquared).unwrap();
        assert!(f.slope >= 1.7, "{}", f.slope);
        let f = expansion_order_fit(1.0, Expansion::FcritPlus).unwrap();
        assert!(f.slope >= 0.7, "{}", f.slope);
        let f = expansion_order_fit(1.0, Expansion::SubcriticalLambda).unwrap();
        assert!(f.slope >= 0.7, "{}", f.slope);
    }

    #[test]
    fn ordering_probe() {
        assert!(delta_probe(1.0, 0.05, 0.01).is_none());
    }
}
