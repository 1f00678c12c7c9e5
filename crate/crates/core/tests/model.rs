use proptest::prelude::*;

use strata::model::*;

fn layer() -> impl Strategy<Value = LayerState> {
    (
        0.05..5.0f64,
        0.05..5.0f64,
        -3.0..3.0f64,
        -3.0..3.0f64,
        -3.0..3.0f64,
        -3.0..3.0f64,
    )
        .prop_map(|(h1, h2, u1, u2, v1, v2)| LayerState::new(h1, h2, u1, u2, v1, v2).unwrap())
}

fn params() -> impl Strategy<Value = PhysParams> {
    (0.01..1.2f64, 0.5..20.0f64, -1.0..1.0f64)
        .prop_map(|(gm, g, f)| PhysParams::new(gm, g, f).unwrap())
}

fn augmented() -> impl Strategy<Value = AugmentedState> {
    (layer(), -2.0..2.0f64, -2.0..2.0f64)
        .prop_map(|(s, w1, w2)| AugmentedState::new(s, w1, w2).unwrap())
}

/// Determinant of a square matrix with the shift `-mu I`.
fn shifted_det<const N: usize>(a: &nalgebra::SMatrix<f64, N, N>, mu: f64) -> f64
where
    nalgebra::Const<N>: nalgebra::DimMin<nalgebra::Const<N>, Output = nalgebra::Const<N>>,
{
    (a - nalgebra::SMatrix::<f64, N, N>::identity() * mu).determinant()
}

proptest! {
    #[test]
    fn directional_symbol_is_rotated_x_symbol(s in layer(), p in params(), theta in -7.0..7.0f64) {
        let a = build_a_theta(&s, &p, theta);
        let r = build_rotation(theta);
        let b = r.transpose() * build_ax(&s.rotated(theta), &p) * r;
        prop_assert!((a - b).amax() <= 1e-12 * entry_scale(&a));
    }

    #[test]
    fn augmented_symbol_is_rotated_x_symbol(v in augmented(), p in params(), theta in -7.0..7.0f64) {
        let a = build_aug_a_theta(&v, &p, theta);
        let r = build_rotation_aug(theta);
        let b = r.transpose() * build_aug_ax(&v.rotated(theta), &p) * r;
        prop_assert!((a - b).amax() <= 1e-12 * entry_scale(&a));
    }

    #[test]
    fn rotations_compose(a in -4.0..4.0f64, b in -4.0..4.0f64) {
        let (ra, rb) = (build_rotation(a), build_rotation(b));
        prop_assert!((ra * rb - build_rotation(a + b)).amax() < 1e-14);
        prop_assert!((ra * ra.transpose() - Mat6::identity()).amax() < 1e-14);
    }

    #[test]
    fn x_symbol_factors_into_advection_and_quartic(s in layer(), p in params(), mu in -10.0..10.0f64) {
        let c = (p.g * s.h1).sqrt();
        let q = strata::polynomial::char_quartic_from((s.u2 - s.u1) / c, s.h2 / s.h1, p.gamma);
        let expected = (s.u1 - mu) * (s.u2 - mu) * (p.g * s.h1).powi(2) * q.eval((mu - s.u1) / c);
        let got = shifted_det(&build_ax(&s, &p), mu);
        let scale = entry_scale(&build_ax(&s, &p)).max(mu.abs()).powi(6);
        prop_assert!((got - expected).abs() <= 1e-10 * scale, "{got} vs {expected}");
    }

    #[test]
    fn augmented_determinant_adds_two_zeros(v in augmented(), p in params(), nu in -10.0..10.0f64) {
        let base = shifted_det(&build_ax(&v.layer, &p), nu);
        let aug = shifted_det(&build_aug_ax(&v, &p), nu);
        let scale = entry_scale(&build_aug_ax(&v, &p)).max(nu.abs()).powi(8);
        prop_assert!((aug - nu * nu * base).abs() <= 1e-10 * scale);
    }

    #[test]
    fn energy_hessian_is_symmetric(s in layer(), p in params()) {
        let h = energy_hessian(&s, &p);
        prop_assert_eq!(h, h.transpose());
    }

    #[test]
    fn state_vectors_round_trip(v in augmented()) {
        prop_assert_eq!(AugmentedState::from_vector(&v.to_vector()), v);
        prop_assert_eq!(LayerState::from_vector(&v.layer.to_vector()), v.layer);
    }

    #[test]
    fn rotation_preserves_thickness_and_speed(s in layer(), theta in -7.0..7.0f64) {
        let r = s.rotated(theta);
        prop_assert_eq!((r.h1, r.h2), (s.h1, s.h2));
        prop_assert!((r.u1.hypot(r.v1) - s.u1.hypot(s.v1)).abs() < 1e-12);
        let back = r.rotated(-theta);
        prop_assert!((back.u2 - s.u2).abs() < 1e-12 && (back.v2 - s.v2).abs() < 1e-12);
    }

    #[test]
    fn source_jacobian_matches_finite_differences(v in augmented(), p in params()) {
        let j = build_aug_source_jacobian(&v, &p);
        let x0 = v.to_vector();
        for k in 0..8 {
            let d = 1e-6 * x0[k].abs().max(1.0);
            let mut xp = x0;
            let mut xm = x0;
            xp[k] += d;
            xm[k] -= d;
            let fp = build_aug_source(&AugmentedState::from_vector(&xp), &p, (0.0, 0.0));
            let fm = build_aug_source(&AugmentedState::from_vector(&xm), &p, (0.0, 0.0));
            let col = (fp - fm) / (2.0 * d);
            prop_assert!((col - j.column(k)).amax() < 1e-7 * entry_scale(&j));
        }
    }
}

#[test]
fn nondimensional_round_trip() {
    let p = PhysParams::new(0.9, 9.81, 0.0).unwrap();
    let nd = NondimState::new(0.3, -0.2, 1.5).unwrap();
    let back = nondimensionalize(&nd.to_layer_state(p.g), &p).unwrap();
    assert!((back.fx - nd.fx).abs() < 1e-15 && (back.fy - nd.fy).abs() < 1e-15 && back.h == nd.h);
    let thin = LayerState::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0).unwrap();
    assert!(nondimensionalize(&thin, &p).is_err());
}
