use icicap::closedform::{cap_311, cap_qab, g_value, ordinary_capacity, witness_311};
use icicap::dual::capacity_composition;
use icicap::graphs::build_ici_graph;
use icicap::markov::{maxentropic_chain, ClassMasses, CompositionVector, MarkovChain};
use icicap::oracle::{count_words, CountWindow};
use icicap::spectral::perron;
use nalgebra::DMatrix;
use num_bigint::BigUint;
use proptest::prelude::*;

/// Class masses with `rho_L, rho_H` bounded away from zero.
fn masses() -> impl Strategy<Value = ClassMasses> {
    (0.02f64..1.0, 0.0f64..1.0, 0.02f64..1.0).prop_map(|(l, i, h)| {
        let s = l + i + h;
        ClassMasses::new(l / s, i / s, h / s).unwrap()
    })
}

fn shape() -> impl Strategy<Value = (usize, usize, usize)> {
    prop_oneof![
        Just((2, 1, 1)),
        Just((3, 1, 1)),
        Just((4, 1, 2)),
        Just((4, 2, 1)),
        Just((5, 2, 2)),
        Just((5, 1, 3))
    ]
}

fn composition() -> impl Strategy<Value = CompositionVector> {
    shape().prop_flat_map(|(q, a, b)| {
        proptest::collection::vec(0.05f64..1.0, q).prop_map(move |w| {
            let s: f64 = w.iter().sum();
            CompositionVector::ici(q, a, b, w.into_iter().map(|x| x / s).collect()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_matches_dual(rho in masses()) {
        let closed = cap_311(&rho).unwrap().capacity_bits;
        let dual = capacity_composition(3, 1, 1, &rho.as_array()).unwrap().capacity_bits;
        prop_assert!((closed - dual).abs() < 1e-8, "{closed} vs {dual}");
    }

    #[test]
    fn composition_never_beats_ordinary(p in composition()) {
        let (a, i, b) = p.alphabet().class_sizes().unwrap();
        let constrained = cap_qab(&p).unwrap().capacity_bits;
        prop_assert!(constrained <= ordinary_capacity(a + i + b, a, b).unwrap() + 1e-12);
        prop_assert!(constrained > 0.0);
    }

    #[test]
    fn optimal_chain_realizes_capacity_and_composition(p in composition()) {
        let res = cap_qab(&p).unwrap();
        prop_assert!((res.chain.entropy_rate() - res.capacity_bits).abs() < 1e-9);
        let all: Vec<_> = p.alphabet().symbols().collect();
        for (got, want) in res.chain.expected_indicator(&all).iter().zip(p.probs()) {
            prop_assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn witness_minimizes_g(rho in masses(), dy in -0.05f64..0.05, dl in -0.05f64..0.05) {
        let w = witness_311(&rho).unwrap();
        prop_assume!(w.y > 0.0);
        let at = g_value(w.y, w.lambda, &rho).unwrap();
        let (y, lambda) = (w.y * (1.0 + dy), w.lambda * (1.0 + dl));
        if let Ok(nearby) = g_value(y, lambda, &rho) {
            prop_assert!(nearby >= at * (1.0 - 1e-12), "{nearby} < {at}");
        }
    }

    #[test]
    fn dp_agrees_with_graph_count((q, a, b) in shape(), n in 1usize..9) {
        let dp = count_words(q, a, b, n, None).unwrap().count;
        let graph = build_ici_graph(q, a, b).unwrap().count_words(n);
        prop_assert_eq!(dp, BigUint::from(graph));
    }

    #[test]
    fn band_count_grows_with_epsilon(rho in masses(), n in 4usize..14, e in 0.02f64..0.3) {
        let p = CompositionVector::ici(3, 1, 1, rho.as_array().to_vec()).unwrap();
        let narrow = CountWindow::epsilon_band(p.clone(), e).unwrap();
        let wide = CountWindow::epsilon_band(p, e + 0.1).unwrap();
        let c_narrow = count_words(3, 1, 1, n, Some(&narrow)).unwrap().count;
        let c_wide = count_words(3, 1, 1, n, Some(&wide)).unwrap().count;
        let total = count_words(3, 1, 1, n, None).unwrap().count;
        prop_assert!(c_narrow <= c_wide && c_wide <= total);
    }

    #[test]
    fn perron_pair_is_an_eigenpair(entries in proptest::collection::vec(0.0f64..5.0, 16)) {
        let a = DMatrix::from_row_slice(4, 4, &entries).map(|x| x + 1e-3);
        let sp = perron(&a).unwrap();
        let norm = a.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
        prop_assert!((&a * &sp.right - &sp.right * sp.lambda).amax() <= 1e-12 * norm);
        prop_assert!(sp.right.iter().all(|&x| x > 0.0) && sp.left.iter().all(|&x| x > 0.0));
        prop_assert!((sp.left.dot(&sp.right) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_json_round_trips((q, a, b) in shape()) {
        let g = build_ici_graph(q, a, b).unwrap();
        let c = maxentropic_chain(&g).unwrap();
        let back = MarkovChain::from_json_on(&g, &c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }
}
