use proptest::prelude::*;
use toda_core::backlund::{bt_forward, bt_inverse, bt_lagrangian, BtParam};
use toda_core::continuous::{poisson_bracket, toda_h1, toda_h2, HamiltonianSystem};
use toda_core::zero_curvature::{lax_l, monodromy};
use toda_core::{gap_exp, Boundary, LatticeState, TodaConfig};

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn state(max_n: usize) -> impl Strategy<Value = LatticeState> {
    (1..=max_n)
        .prop_flat_map(|n| (coords(n), coords(n)))
        .prop_map(|(x, p)| LatticeState::new(x, p).unwrap())
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::OpenEnd), Just(Boundary::Periodic)]
}

proptest! {
    #[test]
    fn gap_exp_is_shift_invariant(x in coords(5), c in -3.0f64..3.0, b in boundary(), k in 1usize..=5) {
        let cfg = TodaConfig::new(5, b).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let a = gap_exp(&x, k, &cfg).unwrap();
        let s = gap_exp(&shifted, k, &cfg).unwrap();
        prop_assert!((a - s).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn energies_are_translation_invariant(s in state(6), c in -3.0f64..3.0, b in boundary()) {
        let cfg = TodaConfig::new(s.n(), b).unwrap();
        let moved = LatticeState::new(s.x.iter().map(|v| v + c).collect(), s.p.clone()).unwrap();
        let (h1, h2) = (toda_h1(&s, &cfg).unwrap(), toda_h2(&s, &cfg).unwrap());
        prop_assert!((toda_h1(&moved, &cfg).unwrap() - h1).abs() <= 1e-11 * h1.abs().max(1.0));
        prop_assert!((toda_h2(&moved, &cfg).unwrap() - h2).abs() <= 1e-11 * h2.abs().max(1.0));
    }

    #[test]
    fn h1_is_bounded_below(s in state(6), b in boundary()) {
        let cfg = TodaConfig::new(s.n(), b).unwrap();
        prop_assert!(toda_h1(&s, &cfg).unwrap() >= 0.0);
    }

    #[test]
    fn hamiltonians_are_in_involution(s in state(6), b in boundary()) {
        let cfg = TodaConfig::new(s.n(), b).unwrap();
        let sys = HamiltonianSystem::toda(&cfg);
        let scale = toda_h1(&s, &cfg).unwrap().powi(2).max(1.0);
        prop_assert!(poisson_bracket(&sys, 1, 2, &s).unwrap().abs() <= 1e-13 * scale);
    }

    #[test]
    fn lax_matrices_are_unimodular(s in state(6), mu in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0]) {
        for k in 1..=s.n() {
            let d = lax_l(&s, k, mu).unwrap().det();
            prop_assert!((d - 1.0).abs() <= 1e-12);
        }
        let t = monodromy(&s, mu).unwrap();
        let scale = t.to_rows().iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!((t.det() - 1.0).abs() <= 1e-12 * scale * scale);
    }

    #[test]
    fn edge_lagrangian_vanishes_on_diagonal_without_coupling(x in coords(1), l in 0.1f64..2.0) {
        let cfg = TodaConfig::open(1);
        prop_assert_eq!(bt_lagrangian(&x, &x, BtParam::new(l).unwrap(), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn forward_then_inverse_is_identity(
        n in 1usize..=6,
        seed in any::<u64>(),
        l in 0.05f64..0.4,
    ) {
        let cfg = TodaConfig::open(n);
        let s = LatticeState::sampled(n, Boundary::OpenEnd, seed);
        let lam = BtParam::new(l).unwrap();
        if let Ok(r) = bt_forward(&s, lam, &cfg) {
            let back = bt_inverse(&r.next, lam, &cfg).unwrap().next;
            prop_assert!(back.max_diff(&s) <= 1e-9);
        }
    }

    #[test]
    fn zero_parameter_is_always_rejected(v in prop_oneof![Just(0.0), Just(-0.0), Just(f64::NAN), Just(f64::INFINITY)]) {
        prop_assert!(BtParam::new(v).is_err());
    }
}
