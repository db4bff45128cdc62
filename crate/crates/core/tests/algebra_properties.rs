// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

use liethermal_core::pauli_algebra::{
    commutator, generate_closure, pauli_product, CartanLabel, LieBasis, PauliString,
};
use proptest::prelude::*;

fn basis(n: usize) -> LieBasis {
    generate_closure(n).unwrap()
}

/// `[P, Q]` as `(coefficient, string)` with `[P,Q] = -i c R`.
fn bracket(p: &PauliString, q: &PauliString) -> Option<(f64, PauliString)> {
    commutator(p, q).unwrap()
}

fn element() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (3usize..=7).prop_flat_map(|n| {
        let dim = 2 * n * n + 3 * n + 1;
        (Just(n), 0..dim, 0..dim, 0..dim)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_and_antisymmetric((n, i, j, _) in element()) {
        let b = basis(n);
        let (p, q) = (b.element(i), b.element(j));
        match (bracket(&p, &q), bracket(&q, &p)) {
            (None, None) => {}
            (Some((l1, r1)), Some((l2, r2))) => {
                prop_assert_eq!(r1, r2);
                prop_assert_eq!(l1, -l2);
                prop_assert!(b.index_of(&r1).is_some(), "{} not in the algebra", r1);
            }
            _ => prop_assert!(false, "commutation is not symmetric"),
        }
    }

    #[test]
    fn cartan_grading((n, i, j, _) in element()) {
        let b = basis(n);
        let (p, q) = (b.element(i), b.element(j));
        if let Some((_, r)) = bracket(&p, &q) {
            let expected = if b.label(i) == b.label(j) { CartanLabel::K } else { CartanLabel::M };
            prop_assert_eq!(CartanLabel::of(&r), expected);
        }
    }

    #[test]
    fn jacobi_identity((n, i, j, k) in element()) {
        let b = basis(n);
        let (p, q, r) = (b.element(i), b.element(j), b.element(k));
        // Accumulate [P,[Q,R]] + [Q,[R,P]] + [R,[P,Q]] per string; each term
        // is (-i)^2 c1 c2 S = -c1 c2 S.
        let mut terms: Vec<(PauliString, f64)> = Vec::new();
        for (a, x, y) in [(p, q, r), (q, r, p), (r, p, q)] {
            if let Some((c1, inner)) = bracket(&x, &y) {
                if let Some((c2, s)) = bracket(&a, &inner) {
                    match terms.iter_mut().find(|(t, _)| *t == s) {
                        Some(entry) => entry.1 -= c1 * c2,
                        None => terms.push((s, -c1 * c2)),
                    }
                }
            }
        }
        for (s, v) in terms {
            prop_assert!(v.abs() < 1e-12, "Jacobi fails on {}: {}", s, v);
        }
    }

    #[test]
    fn product_is_associative((n, i, j, k) in element()) {
        let b = basis(n);
        let (p, q, r) = (b.element(i), b.element(j), b.element(k));
        let (a1, pq) = pauli_product(&p, &q).unwrap();
        let (a2, left) = pauli_product(&pq, &r).unwrap();
        let (b1, qr) = pauli_product(&q, &r).unwrap();
        let (b2, right) = pauli_product(&p, &qr).unwrap();
        prop_assert_eq!(left, right);
        prop_assert_eq!((a1 + a2) % 4, (b1 + b2) % 4);
    }
}

#[test]
fn dimension_and_sector_sizes() {
    for n in 3..=10 {
        let b = basis(n);
        assert_eq!(b.len(), 2 * n * n + 3 * n + 1);
        assert_eq!(b.count(CartanLabel::K) + b.count(CartanLabel::M), b.len());
        assert_eq!(b.h_indices().len(), n + 1);
    }
}
