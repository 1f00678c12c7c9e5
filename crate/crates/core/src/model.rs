//! Matrices and vectors of the quasilinear two-layer system
//!
//! ```text
//! du/dt + A_x(u) du/dx + A_y(u) du/dy + b(u) = 0,   u = (h1, h2, u1, u2, v1, v2)
//! ```
//!
//! and of the augmented conservative system in `v = (u, w1, w2)`.
//! Rows are ordered mass 1, mass 2, x-momentum 1, x-momentum 2,
//! y-momentum 1, y-momentum 2 (then vorticity 1, vorticity 2).

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Vec6 = SVector<f64, 6>;
pub type Vec8 = SVector<f64, 8>;

/// Physical parameters. `gamma` is the density ratio of the upper layer
/// over the lower one, `g` gravity (m/s²), `f` the Coriolis parameter (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub gamma: f64,
    pub g: f64,
    #[serde(default)]
    pub f: f64,
}

impl PhysParams {
    pub fn new(gamma: f64, g: f64, f: f64) -> Result<Self> {
        let p = PhysParams { gamma, g, f };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::InvalidInput(format!(
                "g must be positive, got {}",
                self.g
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !self.f.is_finite() {
            return Err(Error::InvalidInput("f must be finite".into()));
        }
        Ok(())
    }
}

/// Pointwise state of the two layers. Positivity of the thicknesses is not
/// enforced here: the criteria classify such states instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub h1: f64,
    pub h2: f64,
    pub u1: f64,
    pub u2: f64,
    pub v1: f64,
    pub v2: f64,
}

impl LayerState {
    pub fn new(h1: f64, h2: f64, u1: f64, u2: f64, v1: f64, v2: f64) -> Result<Self> {
        let s = LayerState {
            h1,
            h2,
            u1,
            u2,
            v1,
            v2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_vector().iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "layer state has non-finite entries".into(),
            ))
        }
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(self.h1, self.h2, self.u1, self.u2, self.v1, self.v2)
    }

    pub fn from_vector(v: &Vec6) -> Self {
        LayerState {
            h1: v[0],
            h2: v[1],
            u1: v[2],
            u2: v[3],
            v1: v[4],
            v2: v[5],
        }
    }

    /// `P(theta) u`: velocities expressed in the frame whose x-axis points
    /// along `(cos theta, sin theta)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        LayerState {
            h1: self.h1,
            h2: self.h2,
            u1: c * self.u1 + s * self.v1,
            u2: c * self.u2 + s * self.v2,
            v1: -s * self.u1 + c * self.v1,
            v2: -s * self.u2 + c * self.v2,
        }
    }

    /// Largest absolute component, at least 1.
    pub fn scale(&self) -> f64 {
        self.to_vector().amax().max(1.0)
    }
}

/// Layer state augmented with the vorticities `w_i = dv_i/dx - du_i/dy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    #[serde(flatten)]
    pub layer: LayerState,
    pub w1: f64,
    pub w2: f64,
}

impl AugmentedState {
    pub fn new(layer: LayerState, w1: f64, w2: f64) -> Result<Self> {
        layer.validate()?;
        if !(w1.is_finite() && w2.is_finite()) {
            return Err(Error::InvalidInput("vorticity must be finite".into()));
        }
        Ok(AugmentedState { layer, w1, w2 })
    }

    pub fn to_vector(&self) -> Vec8 {
        let l = &self.layer;
        Vec8::from_column_slice(&[l.h1, l.h2, l.u1, l.u2, l.v1, l.v2, self.w1, self.w2])
    }

    pub fn from_vector(v: &Vec8) -> Self {
        AugmentedState {
            layer: LayerState {
                h1: v[0],
                h2: v[1],
                u1: v[2],
                u2: v[3],
                v1: v[4],
                v2: v[5],
            },
            w1: v[6],
            w2: v[7],
        }
    }

    /// `P^r(theta) v`; vorticities are unchanged by a rotation.
    pub fn rotated(&self, theta: f64) -> Self {
        AugmentedState {
            layer: self.layer.rotated(theta),
            w1: self.w1,
            w2: self.w2,
        }
    }
}

/// Shear Froude numbers and thickness ratio:
/// `fx = (u2 - u1)/sqrt(g h1)`, `fy = (v2 - v1)/sqrt(g h1)`, `h = h2/h1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimState {
    pub fx: f64,
    pub fy: f64,
    pub h: f64,
}

impl NondimState {
    pub fn new(fx: f64, fy: f64, h: f64) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && h.is_finite()) {
            return Err(Error::InvalidInput(
                "nondimensional state must be finite".into(),
            ));
        }
        if h < 0.0 {
            return Err(Error::InvalidInput(format!(
                "thickness ratio must be >= 0, got {h}"
            )));
        }
        Ok(NondimState { fx, fy, h })
    }

    /// A dimensional representative: `h1 = 1`, lower layer at rest.
    pub fn to_layer_state(&self, g: f64) -> LayerState {
        let c = g.sqrt();
        LayerState {
            h1: 1.0,
            h2: self.h,
            u1: 0.0,
            u2: self.fx * c,
            v1: 0.0,
            v2: self.fy * c,
        }
    }

    /// Shear magnitude `sqrt(fx² + fy²)`.
    pub fn shear(&self) -> f64 {
        self.fx.hypot(self.fy)
    }

    /// Shear Froude number along direction `theta`.
    pub fn directional(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        c * self.fx + s * self.fy
    }
}

pub fn nondimensionalize(s: &LayerState, p: &PhysParams) -> Result<NondimState> {
    if !(s.h1 > 0.0) {
        return Err(Error::DegenerateLayer(format!(
            "h1 = {} (nondimensionalization needs h1 > 0)",
            s.h1
        )));
    }
    let c = (p.g * s.h1).sqrt();
    Ok(NondimState {
        fx: (s.u2 - s.u1) / c,
        fy: (s.v2 - s.v1) / c,
        h: s.h2 / s.h1,
    })
}

pub fn build_ax(s: &LayerState, p: &PhysParams) -> Mat6 {
    let g = p.g;
    #[rustfmt::skip]
    let m = Mat6::from_row_slice(&[
        s.u1,        0.0,  s.h1, 0.0,  0.0,  0.0,
        0.0,         s.u2, 0.0,  s.h2, 0.0,  0.0,
        g,           g,    s.u1, 0.0,  0.0,  0.0,
        p.gamma * g, g,    0.0,  s.u2, 0.0,  0.0,
        0.0,         0.0,  0.0,  0.0,  s.u1, 0.0,
        0.0,         0.0,  0.0,  0.0,  0.0,  s.u2,
    ]);
    m
}

pub fn build_ay(s: &LayerState, p: &PhysParams) -> Mat6 {
    let g = p.g;
    #[rustfmt::skip]
    let m = Mat6::from_row_slice(&[
        s.v1,        0.0,  0.0,  0.0,  s.h1, 0.0,
        0.0,         s.v2, 0.0,  0.0,  0.0,  s.h2,
        0.0,         0.0,  s.v1, 0.0,  0.0,  0.0,
        0.0,         0.0,  0.0,  s.v2, 0.0,  0.0,
        g,           g,    0.0,  0.0,  s.v1, 0.0,
        p.gamma * g, g,    0.0,  0.0,  0.0,  s.v2,
    ]);
    m
}

/// Block rotation `P(theta)`; orthogonal, `P^-1 = P^T`.
pub fn build_rotation(theta: f64) -> Mat6 {
    let (s, c) = theta.sin_cos();
    let mut m = Mat6::identity();
    m[(2, 2)] = c;
    m[(2, 4)] = s;
    m[(3, 3)] = c;
    m[(3, 5)] = s;
    m[(4, 2)] = -s;
    m[(4, 4)] = c;
    m[(5, 3)] = -s;
    m[(5, 5)] = c;
    m
}

/// `P^r(theta)`: `P(theta)` acting on the first six slots, identity on the vorticities.
pub fn build_rotation_aug(theta: f64) -> Mat8 {
    let mut m = Mat8::identity();
    m.fixed_view_mut::<6, 6>(0, 0)
        .copy_from(&build_rotation(theta));
    m
}

/// Directional symbol `cos(theta) A_x + sin(theta) A_y`.
pub fn build_a_theta(s: &LayerState, p: &PhysParams, theta: f64) -> Mat6 {
    let (sn, c) = theta.sin_cos();
    build_ax(s, p) * c + build_ay(s, p) * sn
}

/// Source term `b(u)` for a bottom with gradient `grad_b = (db/dx, db/dy)`.
pub fn build_source(s: &LayerState, p: &PhysParams, grad_b: (f64, f64)) -> Vec6 {
    let (bx, by) = grad_b;
    let g = p.g;
    Vec6::new(
        0.0,
        0.0,
        -p.f * s.v1 + g * bx,
        -p.f * s.v2 + g * bx,
        p.f * s.u1 + g * by,
        p.f * s.u2 + g * by,
    )
}

pub fn build_aug_ax(v: &AugmentedState, p: &PhysParams) -> Mat8 {
    let s = &v.layer;
    let g = p.g;
    let (r1, r2) = (v.w1 + p.f, v.w2 + p.f);
    #[rustfmt::skip]
    let m = Mat8::from_row_slice(&[
        s.u1,        0.0,  s.h1, 0.0,  0.0,  0.0,  0.0,  0.0,
        0.0,         s.u2, 0.0,  s.h2, 0.0,  0.0,  0.0,  0.0,
        g,           g,    s.u1, 0.0,  s.v1, 0.0,  0.0,  0.0,
        p.gamma * g, g,    0.0,  s.u2, 0.0,  s.v2, 0.0,  0.0,
        0.0,         0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,
        0.0,         0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,
        0.0,         0.0,  r1,   0.0,  0.0,  0.0,  s.u1, 0.0,
        0.0,         0.0,  0.0,  r2,   0.0,  0.0,  0.0,  s.u2,
    ]);
    m
}

/// `A^r_y`. The vorticity rows carry the advective `v_i` on the diagonal,
/// which the conservation law `dw/dt + div((w + f) u) = 0` and the
/// rotational invariance both require.
pub fn build_aug_ay(v: &AugmentedState, p: &PhysParams) -> Mat8 {
    let s = &v.layer;
    let g = p.g;
    let (r1, r2) = (v.w1 + p.f, v.w2 + p.f);
    #[rustfmt::skip]
    let m = Mat8::from_row_slice(&[
        s.v1,        0.0,  0.0,  0.0,  s.h1, 0.0,  0.0,  0.0,
        0.0,         s.v2, 0.0,  0.0,  0.0,  s.h2, 0.0,  0.0,
        0.0,         0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,
        0.0,         0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,
        g,           g,    s.u1, 0.0,  s.v1, 0.0,  0.0,  0.0,
        p.gamma * g, g,    0.0,  s.u2, 0.0,  s.v2, 0.0,  0.0,
        0.0,         0.0,  0.0,  0.0,  r1,   0.0,  s.v1, 0.0,
        0.0,         0.0,  0.0,  0.0,  0.0,  r2,   0.0,  s.v2,
    ]);
    m
}

pub fn build_aug_a_theta(v: &AugmentedState, p: &PhysParams, theta: f64) -> Mat8 {
    let (sn, c) = theta.sin_cos();
    build_aug_ax(v, p) * c + build_aug_ay(v, p) * sn
}

/// Source term `b^r(v)` of the augmented system. The vorticity equations
/// carry no source.
pub fn build_aug_source(v: &AugmentedState, p: &PhysParams, grad_b: (f64, f64)) -> Vec8 {
    let s = &v.layer;
    let (bx, by) = grad_b;
    let g = p.g;
    let (r1, r2) = (v.w1 + p.f, v.w2 + p.f);
    Vec8::from_column_slice(&[
        0.0,
        0.0,
        -r1 * s.v1 + g * bx,
        -r2 * s.v2 + g * bx,
        r1 * s.u1 + g * by,
        r2 * s.u2 + g * by,
        0.0,
        0.0,
    ])
}

/// Jacobian of `b^r` with respect to `v` (flat bottom).
pub fn build_aug_source_jacobian(v: &AugmentedState, p: &PhysParams) -> Mat8 {
    let s = &v.layer;
    let (r1, r2) = (v.w1 + p.f, v.w2 + p.f);
    let mut m = Mat8::zeros();
    m[(2, 4)] = -r1;
    m[(2, 6)] = -s.v1;
    m[(3, 5)] = -r2;
    m[(3, 7)] = -s.v2;
    m[(4, 2)] = r1;
    m[(4, 6)] = s.u1;
    m[(5, 3)] = r2;
    m[(5, 7)] = s.u2;
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    /// One-dimensional energy (x-velocities only).
    E1,
    /// Two-dimensional energy including the y-velocities.
    E2,
}

/// Energy density, up to an additive constant and the lower-layer density.
pub fn energy(s: &LayerState, p: &PhysParams, which: EnergyKind) -> f64 {
    let g = p.g;
    let (k1, k2) = match which {
        EnergyKind::E1 => (s.u1 * s.u1, s.u2 * s.u2),
        EnergyKind::E2 => (s.u1 * s.u1 + s.v1 * s.v1, s.u2 * s.u2 + s.v2 * s.v2),
    };
    0.5 * p.gamma * s.h1 * (k1 + g * (s.h1 + 2.0 * s.h2)) + 0.5 * s.h2 * (k2 + g * s.h2)
}

/// Hessian of the two-dimensional energy with respect to `u`.
pub fn energy_hessian(s: &LayerState, p: &PhysParams) -> Mat6 {
    let (g, gm) = (p.g, p.gamma);
    #[rustfmt::skip]
    let m = Mat6::from_row_slice(&[
        g * gm,    g * gm, gm * s.u1,  0.0,  gm * s.v1,  0.0,
        g * gm,    g,      0.0,        s.u2, 0.0,        s.v2,
        gm * s.u1, 0.0,    gm * s.h1,  0.0,  0.0,        0.0,
        0.0,       s.u2,   0.0,        s.h2, 0.0,        0.0,
        gm * s.v1, 0.0,    0.0,        0.0,  gm * s.h1,  0.0,
        0.0,       s.v2,   0.0,        0.0,  0.0,        s.h2,
    ]);
    m
}

/// Largest absolute entry of a matrix, at least 1. Used to scale tolerances.
pub fn entry_scale<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> f64 {
    m.amax().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit() -> PhysParams {
        PhysParams::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn ax_rows_for_resting_unit_state() {
        let s = LayerState::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let a = build_ax(&s, &unit());
        assert_eq!(
            a.row(2).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            a.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
        let p = PhysParams::new(0.7, 9.81, 0.0).unwrap();
        assert_eq!(build_ax(&s, &p)[(3, 0)], 0.7 * 9.81);
    }

    #[test]
    fn zero_velocity_gives_zero_diagonal() {
        let s = LayerState::new(2.0, 0.5, 0.0, 0.0, 0.0, 0.0).unwrap();
        let a = build_ax(&s, &PhysParams::new(0.4, 3.0, 1.0).unwrap());
        assert!(a.diagonal().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn rotation_at_special_angles() {
        assert_eq!(build_rotation(0.0), Mat6::identity());
        let s = LayerState::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0).unwrap();
        let r = s.rotated(FRAC_PI_2);
        assert!((r.u1 - 5.0).abs() < 1e-15 && (r.v1 + 3.0).abs() < 1e-15);
        assert!((r.u2 - 6.0).abs() < 1e-15 && (r.v2 + 4.0).abs() < 1e-15);
        let via_matrix = build_rotation(FRAC_PI_2) * s.to_vector();
        assert!((via_matrix - r.to_vector()).amax() < 1e-15);
    }

    #[test]
    fn a_theta_special_angles() {
        let s = LayerState::new(1.3, 0.7, 0.2, -0.4, 0.9, 0.1).unwrap();
        let p = PhysParams::new(0.8, 9.81, 0.0).unwrap();
        assert_eq!(build_a_theta(&s, &p, 0.0), build_ax(&s, &p));
        assert!((build_a_theta(&s, &p, FRAC_PI_2) - build_ay(&s, &p)).amax() < 1e-14);
    }

    #[test]
    fn source_terms() {
        let s = LayerState::new(1.0, 1.0, 0.3, 0.2, 0.1, 0.4).unwrap();
        let p0 = PhysParams::new(0.5, 9.81, 0.0).unwrap();
        assert_eq!(build_source(&s, &p0, (0.0, 0.0)), Vec6::zeros());

        let s1 = LayerState::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let p1 = PhysParams::new(0.5, 9.81, 1.0).unwrap();
        let b = build_source(&s1, &p1, (0.0, 0.0));
        assert_eq!(b[4], 1.0);
        assert_eq!((b[0], b[1]), (0.0, 0.0));

        let v = AugmentedState::new(
            LayerState::new(1.0, 1.0, 0.0, 0.0, 3.0, 0.0).unwrap(),
            2.0,
            0.0,
        )
        .unwrap();
        let br = build_aug_source(&v, &p1, (0.0, 0.0));
        assert_eq!(br[2], -9.0);
        assert_eq!((br[6], br[7]), (0.0, 0.0));
    }

    #[test]
    fn augmented_rows_at_rest() {
        let v = AugmentedState::new(
            LayerState::new(1.0, 2.0, 0.0, 0.0, 0.0, 0.0).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let a = build_aug_ax(&v, &PhysParams::new(0.9, 9.81, 0.0).unwrap());
        assert!(a.row(6).iter().all(|&x| x == 0.0));
        assert!(a.row(7).iter().all(|&x| x == 0.0));
        assert!(a.row(4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nondimensional_quantities() {
        let s = LayerState::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let nd = nondimensionalize(&s, &unit()).unwrap();
        assert_eq!((nd.fx, nd.fy, nd.h), (0.0, 0.0, 1.0));

        let s = LayerState::new(1.0, 2.0, 0.0, 3.0, 0.0, 0.0).unwrap();
        let nd = nondimensionalize(&s, &PhysParams::new(0.5, 9.0, 0.0).unwrap()).unwrap();
        assert_eq!((nd.fx, nd.h), (1.0, 2.0));

        let s = LayerState::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            nondimensionalize(&s, &unit()),
            Err(Error::DegenerateLayer(_))
        ));
    }

    #[test]
    fn energies() {
        let s = LayerState::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(energy(&s, &unit(), EnergyKind::E1), 2.0);
        let s = LayerState::new(1.2, 0.4, 0.5, -0.3, 0.0, 0.0).unwrap();
        let p = PhysParams::new(0.9, 9.81, 0.0).unwrap();
        assert_eq!(
            energy(&s, &p, EnergyKind::E1),
            energy(&s, &p, EnergyKind::E2)
        );
    }

    #[test]
    fn energy_hessian_matches_finite_differences() {
        let s = LayerState::new(1.2, 0.4, 0.5, -0.3, 0.2, 0.7).unwrap();
        let p = PhysParams::new(0.9, 9.81, 0.0).unwrap();
        let hess = energy_hessian(&s, &p);
        let x0 = s.to_vector();
        let e = |x: &Vec6| energy(&LayerState::from_vector(x), &p, EnergyKind::E2);
        let d = 1e-4;
        for i in 0..6 {
            for j in 0..6 {
                let mut pp = x0;
                let mut pm = x0;
                let mut mp = x0;
                let mut mm = x0;
                pp[i] += d;
                pp[j] += d;
                pm[i] += d;
                pm[j] -= d;
                mp[i] -= d;
                mp[j] += d;
                mm[i] -= d;
                mm[j] -= d;
                let fd = (e(&pp) - e(&pm) - e(&mp) + e(&mm)) / (4.0 * d * d);
                assert!(
                    (fd - hess[(i, j)]).abs() < 1e-5,
                    "({i},{j}) {fd} vs {}",
                    hess[(i, j)]
                );
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(PhysParams::new(0.5, 0.0, 0.0).is_err());
        assert!(PhysParams::new(0.0, 9.81, 0.0).is_err());
        assert!(PhysParams::new(1.5, 9.81, 0.0).is_ok());
        assert!(LayerState::new(f64::NAN, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(LayerState::new(-1.0, 1.0, 0.0, 0.0, 0.0, 0.0).is_ok());
        assert!(NondimState::new(0.0, 0.0, -0.1).is_err());
    }
}
