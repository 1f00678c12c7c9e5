//! Critical Froude numbers, one- and two-dimensional hyperbolicity criteria
//! and the symmetrizer test.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_ax, nondimensionalize, LayerState, Mat6, NondimState, PhysParams};
use crate::polynomial::{
    all_roots_real, char_quartic_from, q_of_z, quartic_roots_oracle, RootCertificate,
};
use crate::tristate::TriState;
use crate::DEFAULT_TOL;

/// Thresholds on the shear Froude number. The x-direction spectrum is real
/// for `|F| < f_minus` and `|F| > f_plus`, complex in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalFroude {
    pub f_minus: f64,
    pub f_plus: f64,
}

/// Both critical Froude numbers for thickness ratio `h` and density ratio `gamma`.
///
/// `q` has exactly one root below `(1 + sqrt h)²` and one above for
/// `gamma` in `(0, 1)`. Oracle roots seed a bracket which bisection then
/// shrinks to machine precision.
pub fn critical_froude(h: f64, gamma: f64) -> Result<CriticalFroude> {
    let q = q_of_z(h, gamma)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::OutOfRegime(format!(
            "critical Froude numbers need gamma in (0, 1), got {gamma}"
        )));
    }
    let mid = (1.0 + h.sqrt()).powi(2);
    let upper = {
        let a = q.coeffs();
        1.0 + a[..4].iter().map(|c| c.abs()).fold(0.0, f64::max)
    };
    let roots = quartic_roots_oracle(&q);
    let seed = |lo: f64, hi: f64| {
        roots
            .iter()
            .filter(|r| r.im.abs() <= 1e-6 * r.norm().max(1.0) && r.re > lo && r.re < hi)
            .map(|r| r.re)
            .next()
    };
    let eval = |z: f64| q.eval(z);
    let z_minus = polish_root(&eval, 0.0, mid, seed(0.0, mid));
    let z_plus = polish_root(&eval, mid, upper, seed(mid, upper));
    Ok(CriticalFroude {
        f_minus: z_minus.sqrt(),
        f_plus: z_plus.sqrt(),
    })
}

/// Bisection on `[lo, hi]` where `f` changes sign, started from a narrow
/// bracket around `seed` when one is available.
fn polish_root(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, seed: Option<f64>) -> f64 {
    let (flo, fhi) = (f(lo), f(hi));
    let (mut a, mut b) = (lo, hi);
    if let Some(r) = seed {
        let w = 1e-6 * r.abs().max(1e-12);
        let (ra, rb) = ((r - w).max(lo), (r + w).min(hi));
        if f(ra).signum() == flo.signum() && f(rb).signum() == fhi.signum() {
            a = ra;
            b = rb;
        }
    }
    let sa = flo.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Threshold `(1 - gamma)(1 + h)` on `F_x² + F_y²` for the rigid-lid model.
pub fn rigid_lid_threshold(h: f64, gamma: f64) -> f64 {
    (1.0 - gamma) * (1.0 + h)
}

fn in_domain(s: &LayerState, p: &PhysParams) -> bool {
    p.gamma > 0.0 && p.gamma < 1.0 && s.h1 > 0.0 && s.h2 > 0.0
}

/// Compares `x` against the threshold `t` with a relative band.
fn below(x: f64, t: f64, tol: f64) -> TriState {
    TriState::positive(t - x, tol * t.max(1.0))
}

pub fn is_hyperbolic_1d(s: &LayerState, p: &PhysParams) -> TriState {
    is_hyperbolic_1d_with_tol(s, p, DEFAULT_TOL)
}

/// x-direction hyperbolicity: `|F_x| < F_crit^-` or `|F_x| > F_crit^+`.
pub fn is_hyperbolic_1d_with_tol(s: &LayerState, p: &PhysParams, tol: f64) -> TriState {
    if !in_domain(s, p) {
        return TriState::False;
    }
    let (nd, fc) = match thresholds(s, p) {
        Some(v) => v,
        None => return TriState::False,
    };
    let f = nd.fx.abs();
    below(f, fc.f_minus, tol).or(below(fc.f_plus, f, tol))
}

pub fn is_hyperbolic_2d(s: &LayerState, p: &PhysParams) -> TriState {
    is_hyperbolic_2d_with_tol(s, p, DEFAULT_TOL)
}

/// Hyperbolicity in every direction: `F_x² + F_y² < (F_crit^-)²`.
pub fn is_hyperbolic_2d_with_tol(s: &LayerState, p: &PhysParams, tol: f64) -> TriState {
    if !in_domain(s, p) {
        return TriState::False;
    }
    match thresholds(s, p) {
        Some((nd, fc)) => below(nd.shear(), fc.f_minus, tol),
        None => TriState::False,
    }
}

fn thresholds(s: &LayerState, p: &PhysParams) -> Option<(NondimState, CriticalFroude)> {
    let nd = nondimensionalize(s, p).ok()?;
    let fc = critical_froude(nd.h, p.gamma).ok()?;
    Some((nd, fc))
}

/// Perturbed energy Hessian `S_x(u, u0)`. Symmetric, and `S_x A_x` is
/// symmetric for every state and every `u0`.
pub fn symmetrizer(s: &LayerState, p: &PhysParams, u0: f64) -> Mat6 {
    let (g, gm) = (p.g, p.gamma);
    let (a, b) = (s.u1 - u0, s.u2 - u0);
    #[rustfmt::skip]
    let m = Mat6::from_row_slice(&[
        g * gm,  g * gm, gm * a,     0.0,  0.0,        0.0,
        g * gm,  g,      0.0,        b,    0.0,        0.0,
        gm * a,  0.0,    gm * s.h1,  0.0,  0.0,        0.0,
        0.0,     b,      0.0,        s.h2, 0.0,        0.0,
        0.0,     0.0,    0.0,        0.0,  gm * s.h1,  0.0,
        0.0,     0.0,    0.0,        0.0,  0.0,        s.h2,
    ]);
    m
}

/// Closed-form symmetrizability: `gamma` in `(0, 1)`, positive thicknesses
/// and `(1 - gamma) g h2 > (u2 - u1)² + (v2 - v1)²`.
pub fn is_symmetrizable(s: &LayerState, p: &PhysParams) -> bool {
    in_domain(s, p) && symmetrizer_margin(s, p) > 0.0
}

/// `(1 - gamma) g h2 - |shear|²`; positive iff the rotated symmetrizers are
/// positive definite in every direction.
pub fn symmetrizer_margin(s: &LayerState, p: &PhysParams) -> f64 {
    let (du, dv) = (s.u2 - s.u1, s.v2 - s.v1);
    (1.0 - p.gamma) * p.g * s.h2 - (du * du + dv * dv)
}

/// Sylvester test: all leading principal minors positive.
pub fn is_positive_definite(m: &Mat6) -> bool {
    let d = DMatrix::from_column_slice(6, 6, m.as_slice());
    (1..=6).all(|k| d.view((0, 0), (k, k)).determinant() > 0.0)
}

/// Positive definiteness of `S_x(P(theta) u, u1(theta))` over `n_theta`
/// equispaced directions in `[0, 2 pi)` plus the direction of the shear,
/// where the definiteness margin is smallest.
pub fn symmetrizable_by_sylvester(s: &LayerState, p: &PhysParams, n_theta: usize) -> bool {
    let worst = (s.v2 - s.v1).atan2(s.u2 - s.u1);
    let grid = (0..n_theta).map(|k| std::f64::consts::TAU * k as f64 / n_theta as f64);
    std::iter::once(worst).chain(grid).all(|theta| {
        let r = s.rotated(theta);
        is_positive_definite(&symmetrizer(&r, p, r.u1))
    })
}

/// Shear regime of a state, by the magnitude of the total shear Froude number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Gap,
    Supercritical,
    Boundary,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    /// Root certificate of the x-direction quartic (absent when `h1 <= 0`).
    pub certificate: Option<RootCertificate>,
    pub f_crit: Option<CriticalFroude>,
    pub nondim: Option<NondimState>,
    pub symmetrizable: bool,
    pub hyperbolic_1d: TriState,
    pub hyperbolic_2d: TriState,
    pub regime: Regime,
    /// Machine-readable reasons for negative verdicts.
    pub reasons: Vec<String>,
}

pub fn classify(s: &LayerState, p: &PhysParams) -> HyperbolicityReport {
    classify_with_tol(s, p, DEFAULT_TOL)
}

pub fn classify_with_tol(s: &LayerState, p: &PhysParams, tol: f64) -> HyperbolicityReport {
    let mut reasons = Vec::new();
    if !(p.gamma > 0.0 && p.gamma < 1.0) {
        reasons.push("gamma_out_of_range".to_string());
    }
    if !(s.h1 > 0.0) {
        reasons.push("h1_nonpositive".to_string());
    }
    if !(s.h2 > 0.0) {
        reasons.push("h2_nonpositive".to_string());
    }
    let nondim = nondimensionalize(s, p).ok();
    let certificate = nondim.map(|nd| all_roots_real(&char_quartic_from(nd.fx, nd.h, p.gamma)));
    let f_crit = nondim.and_then(|nd| critical_froude(nd.h, p.gamma).ok());

    let symmetrizable = is_symmetrizable(s, p);
    let hyperbolic_1d = is_hyperbolic_1d_with_tol(s, p, tol);
    let mut hyperbolic_2d = is_hyperbolic_2d_with_tol(s, p, tol);

    let regime = match (reasons.is_empty(), nondim, f_crit) {
        (true, Some(nd), Some(fc)) => {
            let shear = nd.shear();
            let near = |t: f64| (shear - t).abs() <= tol * t.max(1.0);
            if near(fc.f_minus) || near(fc.f_plus) {
                Regime::Boundary
            } else if shear < fc.f_minus {
                Regime::Subcritical
            } else if shear < fc.f_plus {
                Regime::Gap
            } else {
                Regime::Supercritical
            }
        }
        _ => Regime::Degenerate,
    };

    if regime != Regime::Degenerate {
        if symmetrizable && hyperbolic_2d.is_false() {
            // cannot happen away from rounding: the symmetrizer bound lies
            // strictly inside the lower critical Froude number
            hyperbolic_2d = TriState::Boundary;
        }
        if !symmetrizable {
            reasons.push("shear_exceeds_symmetrizer_bound".to_string());
        }
        match regime {
            Regime::Gap => reasons.push("shear_in_complex_gap".to_string()),
            Regime::Supercritical => {
                reasons.push("supercritical_shear_not_hyperbolic_in_2d".to_string())
            }
            Regime::Boundary => reasons.push("shear_at_critical_threshold".to_string()),
            _ => {}
        }
    }

    HyperbolicityReport {
        certificate,
        f_crit,
        nondim,
        symmetrizable,
        hyperbolic_1d,
        hyperbolic_2d,
        regime,
        reasons,
    }
}

/// Symmetry defect `max |S A_x - (S A_x)^T|` of the symmetrizer.
pub fn symmetrizer_defect(s: &LayerState, p: &PhysParams, u0: f64) -> f64 {
    let sa = symmetrizer(s, p, u0) * build_ax(s, p);
    (sa - sa.transpose()).amax()
}
