use nalgebra::{Complex, Schur};
use proptest::prelude::*;

use strata::eigen::*;
use strata::hyperbolicity::{critical_froude, is_hyperbolic_2d};
use strata::model::*;
use strata::TriState;

/// 2D-hyperbolic state: shear set to `frac` of the lower critical value.
fn hyperbolic(gamma_lo: f64) -> impl Strategy<Value = (LayerState, PhysParams, f64)> {
    (
        gamma_lo..0.999f64,
        0.2..3.0f64,
        0.2..3.0f64,
        0.0..0.95f64,
        0.0..std::f64::consts::TAU,
        -2.0..2.0f64,
        -2.0..2.0f64,
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(gm, h1, h2, frac, dir, u1, v1, theta)| {
            let p = PhysParams::new(gm, 9.81, 0.0).unwrap();
            let fm = critical_froude(h2 / h1, gm).unwrap().f_minus;
            let mag = frac * fm * (p.g * h1).sqrt();
            let s = LayerState::new(h1, h2, u1, u1 + mag * dir.cos(), v1, v1 + mag * dir.sin())
                .unwrap();
            (s, p, theta)
        })
}

fn numeric_eigenvalues<const N: usize>(a: nalgebra::SMatrix<f64, N, N>) -> Vec<Complex<f64>> {
    let d = nalgebra::DMatrix::from_column_slice(N, N, a.as_slice());
    let mut ev: Vec<Complex<f64>> = Schur::try_new(d, f64::EPSILON, 2000)
        .expect("Schur iteration")
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re));
    ev
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spectrum_matches_numeric_eigenvalues((s, p, theta) in hyperbolic(0.05)) {
        let a = build_a_theta(&s, &p, theta);
        let mut closed: Vec<f64> = spectrum(&s, &p, theta).unwrap().values.iter().map(|z| z.re).collect();
        closed.sort_by(f64::total_cmp);
        for (c, n) in closed.iter().zip(numeric_eigenvalues(a)) {
            prop_assert!((n - Complex::new(*c, 0.0)).norm() <= 1e-8 * entry_scale(&a));
        }
    }

    #[test]
    fn closed_form_vectors_have_small_residuals((s, p, theta) in hyperbolic(0.05)) {
        let d = eigen_decomposition(&s, &p, theta).unwrap();
        prop_assert!(d.max_relative_residual() <= 1e-8);
        prop_assert!(d.max_relative_left_residual() <= 1e-8);
        prop_assert_eq!(d.diagonalizable, TriState::True);
    }

    #[test]
    fn left_and_right_vectors_are_biorthogonal((s, p, theta) in hyperbolic(0.05)) {
        let d = eigen_decomposition(&s, &p, theta).unwrap();
        let mu: Vec<f64> = d.spectrum.values.iter().map(|z| z.re).collect();
        let scale = mu.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for i in 0..6 {
            for j in 0..6 {
                if (mu[i] - mu[j]).abs() > 1e-6 * scale {
                    let dot = d.left[i].dot(&d.right[j]);
                    prop_assert!(dot.abs() <= 1e-8 * d.left[i].norm() * d.right[j].norm(), "{i} {j} {dot}");
                }
            }
        }
    }

    #[test]
    fn augmented_spectrum_adds_two_zeros((s, p, theta) in hyperbolic(0.05), w1 in -1.0..1.0f64, w2 in -1.0..1.0f64) {
        let v = AugmentedState::new(s, w1, w2).unwrap();
        let a = build_aug_a_theta(&v, &p, theta);
        let mut expected: Vec<f64> = spectrum(&s, &p, theta).unwrap().values.iter().map(|z| z.re).collect();
        expected.extend([0.0, 0.0]);
        expected.sort_by(f64::total_cmp);
        let mut closed: Vec<f64> = augmented_spectrum(&v, &p, theta).unwrap().values.iter().map(|z| z.re).collect();
        closed.sort_by(f64::total_cmp);
        prop_assert_eq!(&closed, &expected);
        let r = s.rotated(theta);
        if r.v1.abs() > 0.05 && r.v2.abs() > 0.05 {
            for (e, n) in expected.iter().zip(numeric_eigenvalues(a)) {
                prop_assert!((n - Complex::new(*e, 0.0)).norm() <= 1e-8 * entry_scale(&a));
            }
            let d = augmented_eigenvectors_strict(&v, &p, theta).unwrap();
            prop_assert!(d.max_relative_residual() <= 1e-8);
        }
    }

    #[test]
    fn weakly_stratified_ordering((s, p, theta) in hyperbolic(0.95)) {
        prop_assume!(is_hyperbolic_2d(&s, &p).is_true());
        prop_assert!(ordering_holds(&spectrum(&s, &p, theta).unwrap()));
    }

    #[test]
    fn spectrum_rotates_with_the_state((s, p, theta) in hyperbolic(0.05)) {
        let direct = spectrum(&s, &p, theta).unwrap();
        let x = spectrum(&s.rotated(theta), &p, 0.0).unwrap();
        for (a, b) in direct.values.iter().zip(&x.values) {
            prop_assert!((a - b).norm() < 1e-12 * s.scale().max(1.0));
        }
    }

    #[test]
    fn transported_vectors_are_eigenvectors_of_the_rotated_symbol((s, p, theta) in hyperbolic(0.05)) {
        let d = eigen_decomposition(&s, &p, theta).unwrap();
        let a = build_a_theta(&s, &p, theta);
        let dm = nalgebra::DMatrix::from_column_slice(6, 6, a.as_slice());
        for (r, mu) in d.right.iter().zip(&d.spectrum.values) {
            let res = (&dm * r - r * mu.re).amax();
            prop_assert!(res <= 1e-8 * entry_scale(&a) * r.amax());
        }
    }
}

#[test]
fn gap_state_labels_a_conjugate_pair() {
    let p = PhysParams::new(0.5, 1.0, 0.0).unwrap();
    let s = NondimState::new(2.0, 0.0, 1.0).unwrap().to_layer_state(1.0);
    let sp = spectrum(&s, &p, 0.0).unwrap();
    assert_eq!(sp.real(), TriState::False);
    assert_eq!(sp.get(Label::L2Minus), sp.get(Label::L2Plus).conj());
    assert!(sp.get(Label::L2Plus).im > 0.0);
    assert!(matches!(
        eigen_decomposition(&s, &p, 0.0),
        Err(strata::Error::NonRealSpectrum { .. })
    ));
    assert_eq!(is_diagonalizable(&s, &p, 0.0), TriState::False);
}

#[test]
fn expansions_refuse_their_complement() {
    let nd = NondimState::new(5.0, 0.0, 1.0).unwrap();
    assert!(expansion(&nd, 0.99, Expansion::SupercriticalLambda).is_err());
    let small = NondimState::new(5.0, 0.0, 0.1).unwrap();
    assert!(matches!(
        expansion(&small, 0.99, Expansion::SupercriticalLambda),
        Ok(Prediction::Lambdas(_))
    ));
    assert!(expansion(&nd, 0.5, Expansion::SubcriticalLambda).is_err());
}
