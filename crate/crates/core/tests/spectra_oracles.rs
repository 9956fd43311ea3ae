//! Spectra checked against brute-force constructions that do not use the
//! closed-form multiplicity formulas.

use std::collections::BTreeMap;

use csc_core::exact::{int, ratio};
use csc_core::spectra::{EigenvalueEntry, SpectrumModel};
use csc_core::Rational;
use num_traits::{One, Zero};
use proptest::prelude::*;

/// Exponent vectors of all monomials of degree `k` in `vars` variables.
fn monomials(vars: usize, k: usize) -> Vec<Vec<usize>> {
    if vars == 1 {
        return vec![vec![k]];
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in monomials(vars - 1, k - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Rank over the rationals by plain Gaussian elimination.
fn rank(mut rows: Vec<Vec<Rational>>) -> usize {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let p = rows[rank][col].clone();
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = &rows[r][col] / &p;
                for c in col..cols {
                    let delta = &f * &rows[rank][c];
                    rows[r][c] -= delta;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Dimension of the harmonic homogeneous polynomials of degree `k` on
/// `R^vars`, computed as the kernel dimension of the Laplacian matrix.
fn harmonic_dim(vars: usize, k: usize) -> u64 {
    let domain = monomials(vars, k);
    if k < 2 {
        return domain.len() as u64;
    }
    let target = monomials(vars, k - 2);
    let index: BTreeMap<Vec<usize>, usize> =
        target.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
    // One row per target monomial, one column per domain monomial.
    let mut rows = vec![vec![Rational::zero(); domain.len()]; target.len()];
    for (col, mono) in domain.iter().enumerate() {
        for i in 0..vars {
            if mono[i] >= 2 {
                let mut image = mono.clone();
                image[i] -= 2;
                let coeff = (mono[i] * (mono[i] - 1)) as i64;
                rows[index[&image]][col] += int(coeff);
            }
        }
    }
    domain.len() as u64 - rank(rows) as u64
}

#[test]
fn sphere_multiplicities_match_harmonic_polynomial_kernels() {
    for n in [2u32, 3, 4, 7] {
        let radius = ratio(1, 2);
        let spec = SpectrumModel::sphere(n, radius.clone()).unwrap();
        for k in 0..6usize {
            let entry = spec.entry(k).unwrap();
            let expected_value = int((k * (k + n as usize - 1)) as i64) / (&radius * &radius);
            assert_eq!(entry.value, expected_value, "S^{n}, k = {k}");
            assert_eq!(
                entry.multiplicity,
                harmonic_dim(n as usize + 1, k),
                "S^{n}, k = {k}"
            );
        }
    }
}

#[test]
fn circle_multiplicities_match_fourier_count() {
    let radius = int(3);
    let spec = SpectrumModel::sphere(1, radius.clone()).unwrap();
    let bound = int(5);
    // Count integers j with j²/r² ≤ bound, grouped by value.
    let mut counts: BTreeMap<Rational, u64> = BTreeMap::new();
    for j in -20i64..=20 {
        let v = int(j * j) / (&radius * &radius);
        if v <= bound {
            *counts.entry(v).or_default() += 1;
        }
    }
    let got: Vec<(Rational, u64)> = spec
        .entries_up_to(&bound)
        .unwrap()
        .into_iter()
        .map(|e| (e.value, e.multiplicity))
        .collect();
    assert_eq!(got, counts.into_iter().collect::<Vec<_>>());
}

fn brute_product(a: &[(Rational, u64)], b: &[(Rational, u64)], bound: &Rational) -> Vec<(Rational, u64)> {
    let mut acc: BTreeMap<Rational, u64> = BTreeMap::new();
    for (x, mx) in a {
        for (y, my) in b {
            let v = x + y;
            if v <= *bound {
                *acc.entry(v).or_default() += mx * my;
            }
        }
    }
    acc.into_iter().collect()
}

fn closed_form_sphere(n: i64, radius: &Rational, levels: i64) -> Vec<(Rational, u64)> {
    (0..levels)
        .map(|k| {
            let value = int(k * (k + n - 1)) / (radius * radius);
            let mult = if n == 1 {
                if k == 0 { 1 } else { 2 }
            } else {
                harmonic_dim(n as usize + 1, k as usize)
            };
            (value, mult)
        })
        .collect()
}

#[test]
fn product_spectrum_matches_double_loop() {
    let circle = SpectrumModel::sphere(1, int(1)).unwrap();
    let s2 = SpectrumModel::sphere(2, int(1)).unwrap();
    let product = SpectrumModel::product(&circle, &s2);
    let bound = int(30);
    let got: Vec<(Rational, u64)> = product
        .entries_up_to(&bound)
        .unwrap()
        .into_iter()
        .map(|e| (e.value, e.multiplicity))
        .collect();
    let expected = brute_product(
        &closed_form_sphere(1, &int(1), 8),
        &closed_form_sphere(2, &int(1), 8),
        &bound,
    );
    assert_eq!(got, expected);
}

#[test]
fn explicit_spectrum_refuses_queries_past_completeness() {
    let spec = SpectrumModel::explicit(
        vec![
            EigenvalueEntry::new(int(0), 1),
            EigenvalueEntry::new(int(3), 2),
        ],
        int(5),
    )
    .unwrap();
    assert!(spec.entries_up_to(&int(4)).is_ok());
    assert!(spec.entries_up_to(&int(6)).is_err());
    let product = SpectrumModel::product(&spec, &SpectrumModel::sphere(2, int(1)).unwrap());
    assert_eq!(product.completeness_bound(), Some(int(5)));
}

proptest! {
    #[test]
    fn counting_below_agrees_with_enumeration(n in 1u32..6, num in 1i64..200, den in 1i64..20) {
        let spec = SpectrumModel::sphere(n, Rational::one()).unwrap();
        let x = ratio(num, den);
        let brute: u64 = spec
            .entries_up_to(&x)
            .unwrap()
            .iter()
            .filter(|e| e.value < x)
            .map(|e| e.multiplicity)
            .sum();
        prop_assert_eq!(spec.count_strictly_below(&x).unwrap(), brute);
    }

    #[test]
    fn product_is_symmetric(r1 in 1i64..4, r2 in 1i64..4, bound in 0i64..40) {
        let a = SpectrumModel::sphere(1, int(r1)).unwrap();
        let b = SpectrumModel::sphere(2, int(r2)).unwrap();
        let x = int(bound);
        prop_assert_eq!(
            SpectrumModel::product(&a, &b).entries_up_to(&x).unwrap(),
            SpectrumModel::product(&b, &a).entries_up_to(&x).unwrap()
        );
    }
}
