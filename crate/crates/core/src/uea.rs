//! Universal enveloping algebra of a Lie algebra over ν-polynomials, as a
//! rewriting system to PBW normal form, and its comparison with the Weyl
//! ordered Fedosov product on polynomials in p.
//!
//! Relations: e_α e_β − e_β e_α = −ν c^γ_{αβ} e_γ, i.e. a descent
//! e_β e_α (β > α) is rewritten to e_α e_β + ν c^γ_{αβ} e_γ.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebroid::{PolySection, ValidChart};
use crate::error::{Error, Result};
use crate::fedosov::FedosovSolution;
use crate::linalg::echelon;
use crate::random::Gen;
use crate::report::{CheckLine, Report};
use crate::ring::{exponents_up_to, factorial, int, nu_text, rat, write_sum, Scalar};

/// Structure constants of a Lie algebra (a chart over a point).
#[derive(Clone, Debug)]
pub struct LieData {
    pub rank: usize,
    c: Vec<Scalar>,
}

impl LieData {
    pub fn from_chart(ch: &ValidChart) -> Result<Self> {
        if ch.n != 0 {
            return Err(Error::Unsupported("the enveloping-algebra oracle needs a point base (n = 0)".into()));
        }
        let r = ch.rank;
        let mut c = Vec::with_capacity(r * r * r);
        for a in 0..r {
            for b in 0..r {
                for g in 0..r {
                    c.push(ch.c(a, b, g).as_constant().unwrap_or_else(Scalar::zero));
                }
            }
        }
        Ok(LieData { rank: r, c })
    }

    pub fn c(&self, a: usize, b: usize, g: usize) -> &Scalar {
        &self.c[(a * self.rank + b) * self.rank + g]
    }
}

/// ν-polynomial combination of words in the generators (0-based indices).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UeaElement {
    rank: usize,
    terms: BTreeMap<(Vec<usize>, u32), Scalar>,
}

impl UeaElement {
    pub fn zero(rank: usize) -> Self {
        UeaElement { rank, terms: BTreeMap::new() }
    }

    pub fn word(rank: usize, w: &[usize]) -> Self {
        let mut x = Self::zero(rank);
        x.add_term(w.to_vec(), 0, Scalar::one());
        x
    }

    pub fn add_term(&mut self, w: Vec<usize>, nu: u32, c: Scalar) {
        if c.is_zero() {
            return;
        }
        let key = (w, nu);
        let v = self.terms.entry(key.clone()).or_insert_with(Scalar::zero);
        *v += c;
        if v.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Vec<usize>, u32), &Scalar)> {
        self.terms.iter()
    }

    /// True if every word is non-decreasing.
    pub fn is_normal(&self) -> bool {
        self.terms.keys().all(|(w, _)| w.windows(2).all(|p| p[0] <= p[1]))
    }

    pub fn scale(&self, c: &Scalar) -> Self {
        let mut x = Self::zero(self.rank);
        for ((w, k), v) in &self.terms {
            x.add_term(w.clone(), *k, v * c);
        }
        x
    }

    fn add(&self, other: &Self, sign: &Scalar) -> Self {
        let mut x = self.clone();
        for ((w, k), v) in &other.terms {
            x.add_term(w.clone(), *k, v * sign);
        }
        x
    }

    pub fn plus(&self, other: &Self) -> Self {
        self.add(other, &Scalar::one())
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.add(other, &int(-1))
    }

    /// Concatenation product (not normal ordered).
    pub fn concat(&self, other: &Self) -> Self {
        let mut x = Self::zero(self.rank);
        for ((w1, k1), c1) in &self.terms {
            for ((w2, k2), c2) in &other.terms {
                let mut w = w1.clone();
                w.extend_from_slice(w2);
                x.add_term(w, k1 + k2, c1 * c2);
            }
        }
        x
    }
}

impl fmt::Display for UeaElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<_> = self.terms.iter().collect();
        keys.sort_by(|a, b| (a.0 .1, std::cmp::Reverse(a.0 .0.len()), &a.0 .0).cmp(&(b.0 .1, std::cmp::Reverse(b.0 .0.len()), &b.0 .0)));
        write_sum(
            f,
            keys.into_iter().map(|((w, k), c)| {
                let mut g: Vec<String> = nu_text(*k).into_iter().collect();
                if !w.is_empty() {
                    g.push(w.iter().map(|a| format!("e{}", a + 1)).collect::<Vec<_>>().join("*"));
                }
                (c, g)
            }),
        )
    }
}

/// Which descent to rewrite first.
#[derive(Clone, Copy, Debug)]
pub enum Strategy {
    Leftmost,
    Rightmost,
    Random(u64),
}

/// Rewrites to PBW normal form (non-decreasing words).
pub fn normal_order(x: &UeaElement, lie: &LieData, strategy: Strategy) -> UeaElement {
    let mut rng = match strategy {
        Strategy::Random(s) => Some(ChaCha8Rng::seed_from_u64(s)),
        _ => None,
    };
    let mut out = UeaElement::zero(x.rank);
    let mut pending = x.clone();
    while let Some(((w, k), c)) = pending.terms.pop_first() {
        let descents: Vec<usize> = (0..w.len().saturating_sub(1)).filter(|&i| w[i] > w[i + 1]).collect();
        let Some(&i) = (match (&strategy, rng.as_mut()) {
            (Strategy::Leftmost, _) => descents.first(),
            (Strategy::Rightmost, _) => descents.last(),
            (Strategy::Random(_), Some(r)) => descents.choose(r),
            _ => unreachable!(),
        }) else {
            out.add_term(w, k, c);
            continue;
        };
        let (b, a) = (w[i], w[i + 1]);
        let mut swapped = w.clone();
        swapped.swap(i, i + 1);
        pending.add_term(swapped, k, c.clone());
        for g in 0..lie.rank {
            let cg = lie.c(a, b, g);
            if cg.is_zero() {
                continue;
            }
            let mut v = w[..i].to_vec();
            v.push(g);
            v.extend_from_slice(&w[i + 2..]);
            pending.add_term(v, k + 1, &c * cg);
        }
    }
    out
}

/// Product of two elements, normal ordered.
pub fn pbw_product(x: &UeaElement, y: &UeaElement, lie: &LieData) -> UeaElement {
    normal_order(&x.concat(y), lie, Strategy::Leftmost)
}

/// Distinct rearrangements of a multiset given by exponent counts.
fn arrangements(counts: &mut [u32], prefix: &mut Vec<usize>, total: usize, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == total {
        out.push(prefix.clone());
        return;
    }
    for a in 0..counts.len() {
        if counts[a] > 0 {
            counts[a] -= 1;
            prefix.push(a);
            arrangements(counts, prefix, total, out);
            prefix.pop();
            counts[a] += 1;
        }
    }
}

fn sorted_word(b: &[u32]) -> Vec<usize> {
    b.iter().enumerate().flat_map(|(a, &e)| std::iter::repeat_n(a, e as usize)).collect()
}

/// Total symmetrization p^b ↦ (1/k!) Σ_σ e_{w_σ}.
pub fn sym(f: &PolySection) -> Result<UeaElement> {
    if f.n() != 0 {
        return Err(Error::Unsupported("symmetrization needs a point base".into()));
    }
    let mut x = UeaElement::zero(f.rank());
    for (k, _, b, c) in f.monomials() {
        let total: u32 = b.iter().sum();
        let weight: Scalar = b.iter().map(|&e| factorial(e)).product::<Scalar>() / factorial(total);
        let mut words = Vec::new();
        arrangements(&mut b.clone(), &mut Vec::new(), total as usize, &mut words);
        for w in words {
            x.add_term(w, k, &c * &weight);
        }
    }
    Ok(x)
}

/// Inverse of `sym` on normal-ordered elements.
pub fn sym_inverse(x: &UeaElement, lie: &LieData) -> PolySection {
    let rank = lie.rank;
    let mut rest = normal_order(x, lie, Strategy::Leftmost);
    let mut out = PolySection::zero(0, rank);
    while let Some(((w, k), c)) = rest.terms.iter().max_by_key(|((w, _), _)| w.len()).map(|(a, b)| (a.clone(), b.clone())) {
        let mut b = vec![0u32; rank];
        for &a in &w {
            b[a] += 1;
        }
        let s = PolySection::monomial(0, rank, k, vec![], b, c);
        rest = rest.minus(&normal_order(&sym(&s).expect("point base"), lie, Strategy::Leftmost));
        out = &out + &s;
    }
    out
}

/// Identical normal forms under different rewriting orders.
pub fn diamond_test(lie: &LieData, seed: u64, words: usize, max_len: usize) -> CheckLine {
    let mut gen = Gen::new(seed);
    for t in 0..words {
        let len = 1 + gen.below(max_len);
        let w: Vec<usize> = (0..len).map(|_| gen.below(lie.rank)).collect();
        let x = UeaElement::word(lie.rank, &w);
        let l = normal_order(&x, lie, Strategy::Leftmost);
        for s in [Strategy::Rightmost, Strategy::Random(seed.wrapping_add(t as u64))] {
            let y = normal_order(&x, lie, s);
            if y != l || !l.is_normal() {
                return CheckLine::new("pbw diamond", false, format!("word {w:?}: {l} vs {y}"));
            }
        }
    }
    CheckLine::new("pbw diamond", true, format!("{words} words, length <= {max_len}"))
}

/// (xy)z = x(yz) for random PBW words of length ≤ `max_len`.
pub fn pbw_associativity(lie: &LieData, seed: u64, trials: usize, max_len: usize) -> CheckLine {
    let mut gen = Gen::new(seed);
    let word = |gen: &mut Gen| {
        let len = gen.below(max_len + 1);
        let mut w: Vec<usize> = (0..len).map(|_| gen.below(lie.rank)).collect();
        w.sort();
        UeaElement::word(lie.rank, &w)
    };
    for _ in 0..trials {
        let (x, y, z) = (word(&mut gen), word(&mut gen), word(&mut gen));
        let a = pbw_product(&pbw_product(&x, &y, lie), &z, lie);
        let b = pbw_product(&x, &pbw_product(&y, &z, lie), lie);
        if a != b {
            return CheckLine::new("pbw associativity", false, format!("x = {x}; y = {y}; z = {z}; {a} vs {b}"));
        }
    }
    CheckLine::new("pbw associativity", true, format!("{trials} triples, length <= {max_len}"))
}

fn require_weyl_point(sol: &FedosovSolution) -> Result<LieData> {
    let s = sol.setup();
    if s.kappa != rat(1, 2) || !s.b.is_zero() {
        return Err(Error::Input("enveloping-algebra checks need kappa = 1/2 and B = 0".into()));
    }
    LieData::from_chart(&s.geo.chart)
}

/// Weyl product with enough ν-orders for inputs of the given fibre degrees.
fn weyl_star(deep: &FedosovSolution, f: &PolySection, g: &PolySection) -> Result<PolySection> {
    Ok(deep.star(f, g)?.product)
}

/// p_{w1} ⋆ (p_{w2} ⋆ (… ⋆ p_{wk})).
fn word_image(deep: &FedosovSolution, w: &[usize]) -> Result<PolySection> {
    let rank = deep.setup().rank();
    let mut acc = PolySection::constant(0, rank, Scalar::one());
    for &a in w.iter().rev() {
        acc = weyl_star(deep, &PolySection::p(0, rank, a), &acc)?;
    }
    Ok(acc)
}

/// The image of a UEA element under e_α ↦ p_α into (Pol, ⋆_Weyl).
fn element_image(deep: &FedosovSolution, x: &UeaElement) -> Result<PolySection> {
    let rank = deep.setup().rank();
    let mut out = PolySection::zero(0, rank);
    for ((w, k), c) in x.iter() {
        out = &out + &word_image(deep, w)?.shift_nu(*k).scale(c);
    }
    Ok(out)
}

fn all_words(rank: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w: &Vec<usize>| {
                (0..rank).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Defining relations, the homomorphism property on all words of length
/// ≤ 3 and full rank of PBW words of length ≤ d in (Pol, ⋆_Weyl).
pub fn phi_check(sol: &FedosovSolution, d: u32) -> Result<Report> {
    let lie = require_weyl_point(sol)?;
    let rank = lie.rank;
    let deep = sol.widened(d.max(3))?;
    let mut rep = Report::default();

    let mut bad = None;
    for a in 0..rank {
        for b in a + 1..rank {
            let (pa, pb) = (PolySection::p(0, rank, a), PolySection::p(0, rank, b));
            let lhs = &weyl_star(&deep, &pa, &pb)? - &weyl_star(&deep, &pb, &pa)?;
            let mut rhs = PolySection::zero(0, rank);
            for g in 0..rank {
                rhs = &rhs + &PolySection::p(0, rank, g).shift_nu(1).scale(&-lie.c(a, b, g).clone());
            }
            if lhs != rhs && bad.is_none() {
                bad = Some(format!("[p{}, p{}] = {lhs}, expected {rhs}", a + 1, b + 1));
            }
        }
    }
    rep.push(match bad {
        None => CheckLine::new("weyl commutators", true, format!("[p_a, p_b] = -nu c^g_ab p_g for all {} pairs", rank * rank.saturating_sub(1) / 2)),
        Some(m) => CheckLine::new("weyl commutators", false, m),
    });

    let words = all_words(rank, 3);
    let fails: Vec<Option<String>> = words
        .par_iter()
        .map(|w| -> Option<String> {
            let direct = word_image(&deep, w).ok()?;
            let via = element_image(&deep, &normal_order(&UeaElement::word(rank, w), &lie, Strategy::Leftmost)).ok()?;
            (direct != via).then(|| format!("word {w:?}: {direct} vs {via}"))
        })
        .collect();
    let fail = fails.into_iter().flatten().next();
    rep.push(CheckLine::new(
        "phi homomorphism",
        fail.is_none(),
        fail.unwrap_or_else(|| format!("{} words of length <= 3", words.len())),
    ));

    let pbw: Vec<Vec<usize>> = exponents_up_to(rank, d).iter().map(|b| sorted_word(b)).collect();
    let images: Vec<PolySection> = pbw.par_iter().map(|w| word_image(&deep, w)).collect::<Result<_>>()?;
    let max_nu = images.iter().map(PolySection::max_nu).max().unwrap_or(0);
    let mut rows_index: BTreeMap<(u32, Vec<u32>), usize> = BTreeMap::new();
    for img in &images {
        for (k, _, b, _) in img.monomials() {
            let next = rows_index.len();
            rows_index.entry((k, b)).or_insert(next);
        }
    }
    let mut detail = Vec::new();
    let mut pass = true;
    for top in 0..=max_nu {
        let keys: Vec<&(u32, Vec<u32>)> = rows_index.keys().filter(|(k, _)| *k <= top).collect();
        let mut m = vec![vec![Scalar::zero(); pbw.len()]; keys.len()];
        for (j, img) in images.iter().enumerate() {
            for (k, _, b, c) in img.monomials() {
                if k <= top {
                    let i = keys.iter().position(|key| key.0 == k && key.1 == b).expect("row exists");
                    m[i][j] = c;
                }
            }
        }
        let e = echelon(m, pbw.len());
        detail.push(format!("nu^{top}: {}", e.rank()));
        if let Some(v) = e.kernel_vector() {
            pass = false;
            let kernel: Vec<String> = v
                .iter()
                .zip(&pbw)
                .filter(|(c, _)| !c.is_zero())
                .map(|(c, w)| format!("{c}*{w:?}"))
                .collect();
            detail.push(format!("kernel {}", kernel.join(" + ")));
            break;
        }
    }
    rep.push(CheckLine::new(
        "pbw injectivity",
        pass,
        format!("{} PBW words of length <= {d}; rank {}", pbw.len(), detail.join(", ")),
    ));
    Ok(rep)
}

/// f ⋆_Weyl g against sym⁻¹(sym f ⋄ sym g) for all monomials of degree ≤ d.
pub fn gutt_compare(sol: &FedosovSolution, d: u32) -> Result<Report> {
    let lie = require_weyl_point(sol)?;
    let rank = lie.rank;
    let deep = sol.widened(2 * d)?;
    let mons: Vec<PolySection> = exponents_up_to(rank, d)
        .into_iter()
        .map(|b| PolySection::monomial(0, rank, 0, vec![], b, Scalar::one()))
        .collect();
    let pairs: Vec<(&PolySection, &PolySection)> = mons.iter().flat_map(|f| mons.iter().map(move |g| (f, g))).collect();
    let lines: Vec<CheckLine> = pairs
        .par_iter()
        .map(|(f, g)| -> Result<CheckLine> {
            let star = weyl_star(&deep, f, g)?;
            let u = pbw_product(&sym(f)?, &sym(g)?, &lie);
            let back = sym_inverse(&u, &lie);
            let name = format!("gutt ({f}) * ({g})");
            Ok(if star == back {
                CheckLine::new(name, true, star.to_string())
            } else {
                CheckLine::new(name, false, format!("star {star}; symmetrized {back}"))
            })
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::default();
    for l in lines {
        rep.push(l);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{parse_section, Connection, EFormSeries, Geometry};
    use crate::fedosov::{solve_r, FedosovSetup};
    use crate::fixtures::chart;
    use crate::ring::NuTruncation;

    fn lie(name: &str) -> LieData {
        LieData::from_chart(&chart(name)).unwrap()
    }

    fn weyl(name: &str, l: u32) -> FedosovSolution {
        let ch = chart(name);
        let conn = Connection::half_structure_constants(&ch);
        let r = ch.rank;
        let geo = Geometry::new(ch, conn).unwrap();
        solve_r(&FedosovSetup::new(geo, EFormSeries::zero(0, r), rat(1, 2), NuTruncation::new(l, l + 1).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn heisenberg_rewriting() {
        let h = lie("heis3");
        let x = normal_order(&UeaElement::word(3, &[1, 0]), &h, Strategy::Leftmost);
        assert_eq!(x.to_string(), "e1*e2 + nu e3");
        let x = normal_order(&UeaElement::word(3, &[1, 1, 0]), &h, Strategy::Rightmost);
        assert_eq!(x.to_string(), "e1*e2*e2 + 2 nu e2*e3");
        let a = lie("abelian2");
        assert_eq!(normal_order(&UeaElement::word(2, &[1, 0]), &a, Strategy::Leftmost).to_string(), "e1*e2");
    }

    #[test]
    fn rewriting_is_confluent_and_associative() {
        for name in ["heis3", "so3", "axb"] {
            let l = lie(name);
            let line = diamond_test(&l, 1, 100, 5);
            assert!(line.pass, "{name}: {line}");
            let line = pbw_associativity(&l, 2, 30, 4);
            assert!(line.pass, "{name}: {line}");
        }
    }

    #[test]
    fn symmetrization_round_trips() {
        let l = lie("so3");
        let f = parse_section("p1^2*p3 + 3 nu p2*p3 - p1 + 2", 0, 3).unwrap();
        assert_eq!(sym_inverse(&sym(&f).unwrap(), &l), f);
        let s = sym(&parse_section("p1*p2", 0, 3).unwrap()).unwrap();
        assert_eq!(s.to_string(), "(1/2) e1*e2 + (1/2) e2*e1");
    }

    #[test]
    fn heisenberg_weyl_and_gutt_agree_on_generators() {
        let sol = weyl("heis3", 2);
        let l = lie("heis3");
        let p1 = parse_section("p1", 0, 3).unwrap();
        let p2 = parse_section("p2", 0, 3).unwrap();
        let u = pbw_product(&sym(&p1).unwrap(), &sym(&p2).unwrap(), &l);
        assert_eq!(sym_inverse(&u, &l).to_string(), "p1*p2 - (1/2) nu p3");
        assert_eq!(sol.star(&p1, &p2).unwrap().product.to_string(), "p1*p2 - (1/2) nu p3");
    }

    #[test]
    fn phi_check_on_lie_algebras() {
        for name in ["abelian2", "heis3", "so3", "axb"] {
            let rep = phi_check(&weyl(name, 2), 3).unwrap();
            assert!(rep.all_pass(), "{name}:\n{rep}");
        }
    }

    #[test]
    fn gutt_comparison() {
        let rep = gutt_compare(&weyl("heis3", 2), 2).unwrap();
        assert_eq!(rep.lines.len(), 100);
        assert!(rep.all_pass(), "{rep}");
        // so3: the products agree to first order but not at ν²
        let rep = gutt_compare(&weyl("so3", 2), 1).unwrap();
        let line = rep.get("gutt (p1) * (p1)").unwrap();
        assert!(!line.pass);
        assert_eq!(line.detail, "star p1^2 + (1/8) nu^2; symmetrized p1^2");
    }

    #[test]
    fn rejects_non_weyl_and_non_point() {
        let ch = chart("heis3");
        let geo = Geometry::new(ch.clone(), Connection::half_structure_constants(&ch)).unwrap();
        let s = FedosovSetup::new(geo, EFormSeries::zero(0, 3), rat(0, 1), NuTruncation::new(2, 3).unwrap()).unwrap();
        assert!(matches!(phi_check(&solve_r(&s).unwrap(), 2), Err(Error::Input(_))));
        assert!(matches!(LieData::from_chart(&chart("tangent1")), Err(Error::Unsupported(_))));
    }
}
