use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use xyent::concurrence::{c4_mixed, c4_pure, c4_pure_complex};
use xyent::gmn::{genuine_negativity, verify_witness};
use xyent::io::{density_matrix_from_json, density_matrix_to_json};
use xyent::model::{ChainSize, ModelParams};
use xyent::rdm::{build_rdm, validate_state, Arrangement, DensityMatrix};
use xyent::scaling::{derivative, Stencil};

fn size() -> impl Strategy<Value = ChainSize> {
    prop_oneof![Just(ChainSize::Thermodynamic), (6usize..30).prop_map(|k| ChainSize::Finite(2 * k + 1))]
}

fn spacings(parties: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=3, parties - 1)
}

fn mixed_state(parties: usize) -> impl Strategy<Value = DensityMatrix> {
    let d = 1 << parties;
    prop::collection::vec(-1.0f64..1.0, d * 3).prop_map(move |v| {
        let a = DMatrix::from_vec(d, 3, v);
        let m = &a * a.transpose() + DMatrix::identity(d, d) * 1e-3;
        let t = m.trace();
        DensityMatrix::new(m / t, parties).unwrap()
    })
}

fn su2(theta: f64, phi: f64, chi: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = (theta.cos(), theta.sin());
    let a = Complex64::from_polar(c, phi);
    let b = Complex64::from_polar(s, chi);
    [[a, -b.conj()], [b, a.conj()]]
}

fn apply_local(psi: &[Complex64], us: &[[[Complex64; 2]; 2]]) -> Vec<Complex64> {
    let mut out = psi.to_vec();
    for (k, u) in us.iter().enumerate() {
        let bit = 1 << (us.len() - 1 - k);
        let mut next = vec![Complex64::new(0.0, 0.0); out.len()];
        for (i, amp) in out.iter().enumerate() {
            let b = usize::from(i & bit != 0);
            for (r, row) in u.iter().enumerate() {
                let j = if r == 1 { i | bit } else { i & !bit };
                next[j] += row[b] * amp;
            }
        }
        out = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_rdms_are_states(lambda in 0.05f64..2.0, s in spacings(3), l in size()) {
        let a = Arrangement::new(s).unwrap();
        prop_assume!(a.fits(l));
        let p = ModelParams::ising(lambda, l).unwrap();
        let rho = build_rdm(&p, &a, 1e-13).unwrap();
        prop_assert!(validate_state(&rho, 1e-10).passed);
    }

    #[test]
    fn marginal_of_four_site_state(lambda in 0.05f64..2.0, s in spacings(4)) {
        let p = ModelParams::ising(lambda, ChainSize::Thermodynamic).unwrap();
        let four = build_rdm(&p, &Arrangement::new(s.clone()).unwrap(), 1e-13).unwrap();
        let three = build_rdm(&p, &Arrangement::new(s[..2].to_vec()).unwrap(), 1e-13).unwrap();
        let traced = four.trace_out(&[3]).unwrap();
        prop_assert!((traced.matrix() - three.matrix()).amax() < 1e-12);
    }

    #[test]
    fn mirror_reverses_parties(lambda in 0.05f64..2.0, s in spacings(4)) {
        let p = ModelParams::ising(lambda, ChainSize::Thermodynamic).unwrap();
        let a = Arrangement::new(s).unwrap();
        let rho = build_rdm(&p, &a, 1e-13).unwrap();
        let mirrored = build_rdm(&p, &a.mirrored(), 1e-13).unwrap();
        let reversed = rho.permute_parties(&[3, 2, 1, 0]).unwrap();
        prop_assert!((mirrored.matrix() - reversed.matrix()).amax() < 1e-12);
    }

    #[test]
    fn arrangement_text_round_trip(s in prop::collection::vec(1usize..9, 2..4)) {
        let a = Arrangement::new(s).unwrap();
        prop_assert_eq!(a.to_string().parse::<Arrangement>().unwrap(), a);
    }

    #[test]
    fn json_round_trip(rho in mixed_state(3)) {
        let back = density_matrix_from_json(&density_matrix_to_json(&rho)).unwrap();
        prop_assert_eq!(back.matrix(), rho.matrix());
    }

    #[test]
    fn c4_local_unitary_invariance(
        re in prop::collection::vec(-1.0f64..1.0, 16),
        im in prop::collection::vec(-1.0f64..1.0, 16),
        angles in prop::collection::vec(0.0f64..6.3, 12),
    ) {
        let norm: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        let psi: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(a / norm, b / norm)).collect();
        let us: Vec<_> = angles.chunks(3).map(|c| su2(c[0], c[1], c[2])).collect();
        let moved = apply_local(&psi, &us);
        prop_assert!((c4_pure_complex(&psi).unwrap() - c4_pure_complex(&moved).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn c4_mixed_matches_pure(v in prop::collection::vec(-1.0f64..1.0, 16)) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        let psi: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let rho = DensityMatrix::pure(&psi).unwrap();
        prop_assert!((c4_mixed(&rho).unwrap() - c4_pure(&psi).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn stencils_exact_on_quartics(c in prop::collection::vec(-2.0f64..2.0, 5), x in -1.0f64..1.0) {
        let f = |t: f64| Ok(c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4]))));
        let exact = c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * 4.0 * c[4]));
        for s in [Stencil::Central, Stencil::Forward, Stencil::Backward] {
            prop_assert!((derivative(f, x, 0.05, s).unwrap() - exact).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn witness_verifies_and_permutation_invariant(rho in mixed_state(3), perm in Just(vec![0, 1, 2]).prop_shuffle()) {
        let res = genuine_negativity(&rho, 1e-10).unwrap();
        prop_assert!(verify_witness(&res, &rho, 1e-8).passed);
        prop_assert!(res.value >= 0.0);
        let q = rho.permute_parties(&perm).unwrap();
        let r = genuine_negativity(&q, 1e-10).unwrap();
        prop_assert!(verify_witness(&r, &q, 1e-8).passed);
        prop_assert!((r.value - res.value).abs() < 1e-8, "{} vs {}", r.value, res.value);
    }

    #[test]
    fn negativity_vanishes_inside_the_ball(rho in mixed_state(3), p in 0.9f64..1.0) {
        let noisy = rho.mixed_with_identity(p);
        prop_assume!(noisy.purity() < 1.0 / 7.0);
        let res = genuine_negativity(&noisy, 1e-10).unwrap();
        prop_assert!(res.value < 1e-8);
    }
}
