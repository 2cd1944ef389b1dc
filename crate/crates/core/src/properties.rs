//! Randomized invariants, run with the unit tests. Inputs are drawn from seeded generators so every
//! failing case shrinks to a seed that reproduces it exactly.

use crate::algebroid::Connection;
use crate::fixtures::{chart, NAMES};
use crate::random::Gen;
use crate::ring::{rat, NuTruncation, Scalar};
use crate::spec::parse_spec;
use crate::structure;
use crate::uea::{self, LieData, Strategy as Rewrite, UeaElement};
use crate::{solve_r, EFormSeries, FedosovSetup, Geometry};
use proptest::prelude::*;

fn fixture() -> impl Strategy<Value = &'static str> {
    prop::sample::select(NAMES)
}

fn kappa() -> impl Strategy<Value = Scalar> {
    (0i64..=4).prop_map(|k| rat(k, 4))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn base_polynomials_form_a_ring(seed in any::<u64>(), n in 0usize..3) {
        let mut g = Gen::new(seed);
        let (a, b, c) = (g.base_poly(n, 2, 3), g.base_poly(n, 2, 3), g.base_poly(n, 2, 3));
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn sections_print_and_parse_back(seed in any::<u64>(), name in fixture()) {
        let ch = chart(name);
        let mut g = Gen::new(seed);
        let s = g.section(ch.n, ch.rank, 3, 2, 2, 4);
        let back = crate::algebroid::parse_section(&s.to_string(), ch.n, ch.rank).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn delta_homotopy(seed in any::<u64>(), name in fixture()) {
        let ch = chart(name);
        let l = structure::check_delta_homotopy(ch.n, ch.rank, NuTruncation::new(3, 5).unwrap(), seed, 4);
        prop_assert!(l.pass, "{}", l);
    }

    #[test]
    fn fibre_product_associative(seed in any::<u64>(), name in fixture(), k in kappa()) {
        let ch = chart(name);
        let l = structure::check_fibre_associativity(ch.n, ch.rank, NuTruncation::new(3, 4).unwrap(), &k, seed, 3);
        prop_assert!(l.pass, "{}", l);
    }

    #[test]
    fn ordering_change_is_multiplicative(seed in any::<u64>(), name in fixture(), k in kappa(), k2 in kappa()) {
        let ch = chart(name);
        let l = structure::check_m_transform(ch.n, ch.rank, NuTruncation::new(3, 4).unwrap(), &k, &k2, seed, 3);
        prop_assert!(l.pass, "{}", l);
    }

    #[test]
    fn star_is_associative(seed in any::<u64>(), name in fixture(), k in kappa()) {
        let ch = chart(name);
        let conn = Connection::half_structure_constants(&ch);
        let (n, rank) = (ch.n, ch.rank);
        let setup = FedosovSetup::new(Geometry::new(ch, conn).unwrap(), EFormSeries::zero(n, rank), k, NuTruncation::new(3, 3).unwrap()).unwrap();
        let sol = solve_r(&setup).unwrap();
        let mut g = Gen::new(seed);
        let base = if n == 0 { 0 } else { 1 };
        let t = (g.section(n, rank, 2, base, 1, 2), g.section(n, rank, 2, base, 0, 2), g.section(n, rank, 2, base, 0, 2));
        let l = crate::fedosov::check_associativity(&sol, &[t]);
        prop_assert!(l.pass, "{}", l);
    }

    #[test]
    fn normal_order_is_confluent(seed in any::<u64>(), which in 0usize..3, len in 1usize..6) {
        let lie = LieData::from_chart(&chart(["heis3", "so3", "axb"][which])).unwrap();
        let mut g = Gen::new(seed);
        let word: Vec<usize> = (0..len).map(|_| g.below(lie.rank)).collect();
        let x = UeaElement::word(lie.rank, &word);
        let a = uea::normal_order(&x, &lie, Rewrite::Leftmost);
        prop_assert!(a.is_normal());
        prop_assert_eq!(&a, &uea::normal_order(&x, &lie, Rewrite::Rightmost));
        prop_assert_eq!(&a, &uea::normal_order(&x, &lie, Rewrite::Random(seed)));
    }

    #[test]
    fn spec_echo_round_trips(name in fixture(), num in -5i64..5, den in 1i64..4, l in 0u32..6) {
        let text = format!("chart = {name}\nkappa = {num}/{den}\nnu_order = {l}\ncommand = star\n");
        let s = parse_spec(&text).unwrap();
        prop_assert_eq!(&s.kappa, &rat(num, den));
        let again = parse_spec(&s.echo()).unwrap();
        prop_assert_eq!(again.echo(), s.echo());
    }
}
