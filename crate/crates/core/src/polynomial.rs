//! Quartic polynomials, their Bezout matrix and the all-real-roots criterion.
//!
//! A real quartic `R` has only real roots iff the Bezout matrix of `R` and `R'`
//! is positive semidefinite; its roots are real and simple iff the matrix is
//! positive definite, which is decided here from the four leading principal
//! minors.

use nalgebra::{
    linalg::{balancing::balance_parlett_reinsch, Schur},
    Matrix4,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::model::NondimState;
use crate::tristate::TriState;

/// Relative width of the band around zero in which a minor is undecidable.
pub const MINOR_BAND: f64 = 1e-9;

/// `a0 + a1 x + a2 x² + a3 x³ + a4 x⁴` with `a4 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartic {
    coeffs: [f64; 5],
}

impl Quartic {
    /// Coefficients from constant to leading.
    pub fn new(coeffs: [f64; 5]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "quartic coefficients must be finite".into(),
            ));
        }
        if !(coeffs[4] > 0.0) {
            return Err(Error::InvalidInput(format!(
                "leading coefficient must be positive, got {}",
                coeffs[4]
            )));
        }
        Ok(Quartic { coeffs })
    }

    /// Monic quartic with the given roots.
    pub fn from_roots(r: [f64; 4]) -> Self {
        let mut c = [1.0, 0.0, 0.0, 0.0, 0.0];
        // c holds the product so far, leading coefficient first
        for (k, &x) in r.iter().enumerate() {
            for i in (1..=k + 1).rev() {
                c[i] -= x * c[i - 1];
            }
        }
        c.reverse();
        Quartic { coeffs: c }
    }

    pub fn coeffs(&self) -> [f64; 5] {
        self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Coefficients of the derivative, constant to leading.
    pub fn derivative(&self) -> [f64; 4] {
        let a = &self.coeffs;
        [a[1], 2.0 * a[2], 3.0 * a[3], 4.0 * a[4]]
    }

    fn eval_derivative_complex(&self, z: Complex64) -> Complex64 {
        self.derivative()
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Characteristic quartic in `lambda = (mu - u1)/sqrt(g h1)` for the x-direction:
/// `P(lambda) = (lambda² - 1)((lambda - fx)² - h) - gamma h`.
pub fn char_quartic(nd: &NondimState, gamma: f64) -> Quartic {
    char_quartic_from(nd.fx, nd.h, gamma)
}

/// Same as [`char_quartic`] for an arbitrary shear Froude number `f`.
pub fn char_quartic_from(f: f64, h: f64, gamma: f64) -> Quartic {
    let f2 = f * f;
    Quartic {
        coeffs: [h * (1.0 - gamma) - f2, 2.0 * f, f2 - h - 1.0, -2.0 * f, 1.0],
    }
}

/// The quartic `q(z)` in `z = F²` whose positive roots are the squared
/// critical Froude numbers; the last leading minor equals `16 h q(F²)`.
pub fn q_of_z(h: f64, gamma: f64) -> Result<Quartic> {
    if !(h > 0.0) {
        return Err(Error::DegenerateLayer(format!(
            "thickness ratio h = {h} must be positive"
        )));
    }
    let g = gamma;
    let h2p1 = h * h + 1.0;
    let c = (h - 1.0).powi(2) + 4.0 * g * h;
    Quartic::new([
        -(g - 1.0) * c * c,
        (1.0 + h) * (h2p1 * (3.0 * g - 4.0) + h * (-20.0 * g * g + 10.0 * g + 8.0)),
        -(3.0 * h2p1 * (g - 2.0) - h * (g * g - 26.0 * g + 4.0)),
        (h + 1.0) * (g - 4.0),
        1.0,
    ])
}

/// Symmetric Bezout matrix of `R` and `R'`, with entries kept in
/// double-double precision so the minors can be evaluated accurately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezoutMatrix {
    entries: [[TwoFloat; 4]; 4],
}

impl BezoutMatrix {
    /// Wraps an arbitrary symmetric matrix.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        if m != &m.transpose() {
            return Err(Error::InvalidInput(
                "Bezout matrix must be symmetric".into(),
            ));
        }
        let mut entries = [[TwoFloat::from(0.0); 4]; 4];
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = TwoFloat::from(m[(i, j)]);
            }
        }
        Ok(BezoutMatrix { entries })
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| to_f64(self.entries[i][j]))
    }

    /// Largest absolute entry.
    pub fn scale(&self) -> f64 {
        self.matrix().amax()
    }
}

fn to_f64(x: TwoFloat) -> f64 {
    x.hi() + x.lo()
}

/// Bezout matrix from its definition
/// `(R(X) R'(Y) - R(Y) R'(X)) / (X - Y) = sum M_ij X^(4-i) Y^(4-j)` (1-based `i, j`).
pub fn bezout_matrix(q: &Quartic) -> BezoutMatrix {
    let a = q.coeffs;
    let d = q.derivative();
    let b = |k: usize| if k < 4 { d[k] } else { 0.0 };
    // coefficient of X^i Y^j, 0 <= i, j <= 3
    let mut c = [[TwoFloat::from(0.0); 4]; 4];
    for k in 1..5 {
        for l in 0..k {
            // (a_k b_l - a_l b_k)(X^k Y^l - X^l Y^k)/(X - Y)
            let dkl = TwoFloat::new_mul(a[k], b(l)) - TwoFloat::new_mul(a[l], b(k));
            for m in 0..(k - l) {
                c[l + m][k - 1 - m] += dkl;
            }
        }
    }
    let mut entries = [[TwoFloat::from(0.0); 4]; 4];
    for (i, row) in entries.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = c[3 - i][3 - j];
        }
    }
    BezoutMatrix { entries }
}

fn det_dd(m: &[[TwoFloat; 4]; 4], n: usize) -> TwoFloat {
    match n {
        1 => m[0][0],
        _ => {
            // Laplace expansion along the first row
            let mut acc = TwoFloat::from(0.0);
            for col in 0..n {
                let mut sub = [[TwoFloat::from(0.0); 4]; 4];
                for r in 1..n {
                    let mut cc = 0;
                    for c in 0..n {
                        if c != col {
                            sub[r - 1][cc] = m[r][c];
                            cc += 1;
                        }
                    }
                }
                let term = m[0][col] * det_dd(&sub, n - 1);
                if col % 2 == 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            acc
        }
    }
}

/// Leading principal minors `(m1, m2, m3, m4)` by cofactor expansion in
/// double-double arithmetic.
pub fn leading_minors(m: &BezoutMatrix) -> [f64; 4] {
    [1, 2, 3, 4].map(|k| to_f64(det_dd(&m.entries, k)))
}

/// Outcome of the all-real-roots test together with its evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootCertificate {
    pub verdict: TriState,
    pub minors: [f64; 4],
    /// Largest absolute entry of the Bezout matrix.
    pub scale: f64,
}

/// Decides whether all roots of `q` are real and simple.
///
/// `True` when every leading minor is positive, `False` as soon as one is
/// clearly negative, `Boundary` when some `|m_k| < band * scale^k` and none is
/// clearly negative.
pub fn all_roots_real(q: &Quartic) -> RootCertificate {
    all_roots_real_with_band(q, MINOR_BAND)
}

pub fn all_roots_real_with_band(q: &Quartic, band: f64) -> RootCertificate {
    let m = bezout_matrix(q);
    let minors = leading_minors(&m);
    let scale = m.scale();
    let mut undecided = false;
    let mut negative = false;
    for (k, &mk) in minors.iter().enumerate() {
        let width = band * scale.powi(k as i32 + 1);
        if mk.abs() < width {
            undecided = true;
        } else if mk < 0.0 {
            negative = true;
        }
    }
    let verdict = if negative {
        TriState::False
    } else if undecided {
        TriState::Boundary
    } else {
        TriState::True
    };
    RootCertificate {
        verdict,
        minors,
        scale,
    }
}

/// Roots of `q` from the eigenvalues of its balanced companion matrix,
/// refined by Newton steps that are only kept when they lower the residual.
/// If the QR iteration stalls, simultaneous Aberth iteration is used instead.
/// Sorted by real part, then imaginary part.
pub fn quartic_roots_oracle(q: &Quartic) -> [Complex64; 4] {
    let a = q.coeffs;
    let mut comp = Matrix4::<f64>::zeros();
    for i in 1..4 {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..4 {
        comp[(i, 3)] = -a[i] / a[4];
    }
    balance_parlett_reinsch(&mut comp);
    let mut roots = match Schur::try_new(comp, f64::EPSILON, 400) {
        Some(schur) => {
            let ev = schur.complex_eigenvalues();
            [ev[0], ev[1], ev[2], ev[3]]
        }
        None => aberth(q),
    };
    for r in roots.iter_mut() {
        *r = polish(q, *r);
    }
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    roots
}

fn aberth(q: &Quartic) -> [Complex64; 4] {
    let a = q.coeffs;
    let radius = 1.0 + a[..4].iter().map(|c| (c / a[4]).abs()).fold(0.0, f64::max);
    let mut z: [Complex64; 4] = std::array::from_fn(|k| {
        Complex64::from_polar(radius, 0.4 + k as f64 * std::f64::consts::FRAC_PI_2)
    });
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for k in 0..4 {
            let ratio = q.eval_complex(z[k]) / q.eval_derivative_complex(z[k]);
            let repulsion: Complex64 = (0..4)
                .filter(|&j| j != k)
                .map(|j| (z[k] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[k] -= step;
                moved = moved.max(step.norm() / z[k].norm().max(1.0));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn polish(q: &Quartic, mut z: Complex64) -> Complex64 {
    let mut res = q.eval_complex(z).norm();
    for _ in 0..8 {
        let d = q.eval_derivative_complex(z);
        if d.norm() == 0.0 || res == 0.0 {
            break;
        }
        let cand = z - q.eval_complex(z) / d;
        let cres = q.eval_complex(cand).norm();
        if !(cres < res) {
            break;
        }
        z = cand;
        res = cres;
    }
    z
}

/// Largest `|Im|` among the oracle roots.
pub fn max_imag_root(q: &Quartic) -> f64 {
    quartic_roots_oracle(q)
        .iter()
        .map(|r| r.im.abs())
        .fold(0.0, f64::max)
}
