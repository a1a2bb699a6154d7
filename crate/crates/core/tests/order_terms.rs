use proptest::prelude::*;
use smallnoise_core::multiindex::{family_order_term, taylor_polynomial, taylor_remainder_constant};
use smallnoise_core::{MultiIndex, Polynomial, ScalarField};

fn monomials(dim: usize, max_degree: usize) -> Vec<MultiIndex> {
    (0..=max_degree)
        .flat_map(|n| MultiIndex::all_of_length(dim, n))
        .collect()
}

fn poly(dim: usize, coeffs: &[f64]) -> Polynomial {
    Polynomial::new(dim, monomials(dim, 3).into_iter().zip(coeffs.iter().copied()))
}

/// (dimension, cubic coefficients, coefficient vectors u_0..u_K).
fn model(max_k: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..=2, 0..=max_k).prop_flat_map(|(d, k)| {
        let n = monomials(d, 3).len();
        (
            Just(d),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), k + 1),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // For a cubic f and u truncated at K, f(Σ ε^j u_j) is a polynomial in ε of
    // degree 3K whose coefficients are exactly the order terms.
    #[test]
    fn order_terms_resum_to_the_composition(
        (d, coeffs, u) in model(2),
        eps in prop::collection::vec(0.01..0.5f64, 5),
    ) {
        let f = poly(d, &coeffs);
        let k_top = u.len() - 1;
        let mut padded = u.clone();
        padded.resize(3 * k_top + 1, vec![0.0; d]);
        let refs: Vec<&[f64]> = padded.iter().map(|v| v.as_slice()).collect();
        let terms: Vec<f64> = (0..padded.len())
            .map(|k| family_order_term(k, &[&f], &refs).unwrap())
            .collect();
        for e in eps {
            let mut x = vec![0.0; d];
            for (j, uj) in u.iter().enumerate() {
                for (xi, v) in x.iter_mut().zip(uj) {
                    *xi += e.powi(j as i32) * v;
                }
            }
            let direct = f.evaluate(&x);
            let series: f64 = terms.iter().enumerate().map(|(k, t)| e.powi(k as i32) * t).sum();
            prop_assert!((direct - series).abs() <= 1e-12 * (1.0 + direct.abs()), "{direct} vs {series}");
        }
    }

    #[test]
    fn top_coefficient_enters_linearly((d, coeffs, u) in model(4)) {
        prop_assume!(u.len() >= 2);
        let p = poly(d, &coeffs);
        let k = u.len() - 1;
        let refs: Vec<&[f64]> = u.iter().map(|v| v.as_slice()).collect();
        let full = family_order_term(k, &[&p], &refs).unwrap();
        let zero = vec![0.0; d];
        let mut without = refs.clone();
        without[k] = &zero;
        let rest = family_order_term(k, &[&p], &without).unwrap();
        let linear: f64 = (0..d)
            .map(|i| p.derivative(&MultiIndex::unit(d, i), &u[0]).unwrap() * u[k][i])
            .sum();
        prop_assert!((full - rest - linear).abs() <= 1e-12 * (1.0 + full.abs()));
    }

    #[test]
    fn taylor_bound_holds_for_cubics(
        (d, coeffs, u) in model(1),
        p in 0usize..3,
    ) {
        prop_assume!(u.len() == 2);
        let f = poly(d, &coeffs);
        let (x0, x) = (&u[0], &u[1]);
        let bound = taylor_remainder_constant(&f, x0, x, p).unwrap();
        let err = (f.evaluate(x) - taylor_polynomial(&f, x0, x, p).unwrap()).abs();
        prop_assert!(err <= bound.bound(x, x0) * (1.0 + 1e-9) + 1e-14, "{err} > {}", bound.bound(x, x0));
    }
}
