//! Divergences, the modular class, the modular vector field of E*, and
//! the trace certificate for homogeneous star products.
//!
//! Densities are e^{w_M}|dq¹…dqⁿ| on the base and e^{w_E}|e₁∧…∧e_N| on E,
//! with polynomial weights, so every divergence and adjoint is polynomial.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::One;
use rayon::prelude::*;

use crate::algebroid::{hamiltonian_field, vertical_lift, AlgebroidChart, EFormSeries, PhaseVectorField, PolySection};
use crate::error::{Error, Result};
use crate::fedosov::FedosovSolution;
use crate::random::Gen;
use crate::report::{CheckLine, Report};
use crate::ring::{exponents_up_to, multi_factorial, BasePoly, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct DensityWeights {
    pub w_m: BasePoly,
    pub w_e: BasePoly,
}

impl DensityWeights {
    pub fn constant(n: usize) -> Self {
        DensityWeights { w_m: BasePoly::zero(n), w_e: BasePoly::zero(n) }
    }

    pub fn total(&self) -> BasePoly {
        &self.w_m + &self.w_e
    }
}

fn frame(n: usize, rank: usize, a: usize) -> Vec<BasePoly> {
    let mut s = vec![BasePoly::zero(n); rank];
    s[a] = BasePoly::one(n);
    s
}

/// div_μ(s) = ρ(s)(w_M) + ∂_i(s^α ρ^i_α).
pub fn div_mu(ch: &AlgebroidChart, w_m: &BasePoly, s: &[BasePoly]) -> BasePoly {
    let mut out = ch.rho_section(s, w_m);
    for (a, sa) in s.iter().enumerate() {
        for i in 0..ch.n {
            out = &out + &(sa * ch.anchor(a, i)).partial_unchecked(i);
        }
    }
    out
}

/// div_E(s) = ρ(s)(w_E) + s^β c^α_{βα} − ρ_α(s^α).
pub fn div_e(ch: &AlgebroidChart, w_e: &BasePoly, s: &[BasePoly]) -> BasePoly {
    let mut out = ch.rho_section(s, w_e);
    for (b, sb) in s.iter().enumerate() {
        for a in 0..ch.rank {
            out = &out + &(sb * ch.c(b, a, a));
        }
        out = &out - &ch.rho(b, sb);
    }
    out
}

/// tr ad = div_μ + div_E as a one-form.
pub fn tr_ad(ch: &AlgebroidChart, dw: &DensityWeights) -> EFormSeries {
    let mut f = EFormSeries::zero(ch.n, ch.rank);
    for a in 0..ch.rank {
        let s = frame(ch.n, ch.rank, a);
        f.add_term(0, 1 << a, &div_mu(ch, &dw.w_m, &s) + &div_e(ch, &dw.w_e, &s));
    }
    f
}

fn first_mismatch(items: impl IntoIterator<Item = (String, BasePoly, BasePoly)>) -> Option<String> {
    items.into_iter().find(|(_, a, b)| a != b).map(|(what, a, b)| format!("{what}: {a} != {b}"))
}

/// The divergence identities and the properties of tr ad on frame sections
/// and random multiples.
pub fn divergence_checks(ch: &AlgebroidChart, dw: &DensityWeights, seed: u64, trials: usize) -> Report {
    let (n, r) = (ch.n, ch.rank);
    let mut gen = Gen::new(seed);
    let base_deg = if n == 0 { 0 } else { 2 };
    let mut sections: Vec<Vec<BasePoly>> = (0..r).map(|a| frame(n, r, a)).collect();
    for _ in 0..trials {
        sections.push((0..r).map(|_| gen.base_poly(n, base_deg, 2)).collect());
    }
    let us: Vec<BasePoly> = (0..trials.max(1)).map(|_| gen.base_poly(n, base_deg, 2)).collect();
    let vs: Vec<BasePoly> = (0..trials.max(1)).map(|_| gen.base_poly(n, base_deg, 2)).collect();
    let mut rep = Report::default();

    let mut mu = Vec::new();
    let mut nu = Vec::new();
    for (k, s) in sections.iter().enumerate() {
        let u = &us[k % us.len()];
        let v = &vs[k % vs.len()];
        let us_: Vec<BasePoly> = s.iter().map(|x| u * x).collect();
        let rho_u = ch.rho_section(s, u);
        mu.push(("div_mu(us)".to_string(), div_mu(ch, &dw.w_m, &us_), &(u * &div_mu(ch, &dw.w_m, s)) + &rho_u));
        nu.push(("div_E(us)".to_string(), div_e(ch, &dw.w_e, &us_), &(u * &div_e(ch, &dw.w_e, s)) - &rho_u));
        let rho_v = ch.rho_section(s, v);
        mu.push(("div_{e^v mu}".to_string(), div_mu(ch, &(&dw.w_m + v), s), &div_mu(ch, &dw.w_m, s) + &rho_v));
        nu.push(("div_{e^v E}".to_string(), div_e(ch, &(&dw.w_e + v), s), &div_e(ch, &dw.w_e, s) + &rho_v));
        let t = &sections[(k + 1) % sections.len()];
        let st = ch.bracket_sections(s, t);
        mu.push((
            "div_mu([s,t])".to_string(),
            div_mu(ch, &dw.w_m, &st),
            &ch.rho_section(s, &div_mu(ch, &dw.w_m, t)) - &ch.rho_section(t, &div_mu(ch, &dw.w_m, s)),
        ));
        nu.push((
            "div_E([s,t])".to_string(),
            div_e(ch, &dw.w_e, &st),
            &ch.rho_section(s, &div_e(ch, &dw.w_e, t)) - &ch.rho_section(t, &div_e(ch, &dw.w_e, s)),
        ));
    }
    let count = sections.len();
    for (name, list) in [("base divergence identities", mu), ("E divergence identities", nu)] {
        rep.push(match first_mismatch(list) {
            None => CheckLine::new(name, true, format!("{count} sections")),
            Some(m) => CheckLine::new(name, false, m),
        });
    }

    let tr = tr_ad(ch, dw);
    let mut linear = Vec::new();
    for (k, s) in sections.iter().enumerate() {
        let u = &us[k % us.len()];
        let us_: Vec<BasePoly> = s.iter().map(|x| u * x).collect();
        let full = |s: &[BasePoly]| &div_mu(ch, &dw.w_m, s) + &div_e(ch, &dw.w_e, s);
        linear.push(("tr ad(us)".to_string(), full(&us_), u * &tr.pair(0, s)));
    }
    rep.push(match first_mismatch(linear) {
        None => CheckLine::new("tr ad linearity", true, format!("{count} sections")),
        Some(m) => CheckLine::new("tr ad linearity", false, m),
    });
    let d = tr.d_e(ch);
    rep.push(CheckLine::new("tr ad closed", d.is_zero(), format!("d_E tr ad = {d}")));
    let mut shifts = None;
    for (vm, ve) in us.iter().zip(&vs) {
        let other = DensityWeights { w_m: &dw.w_m + vm, w_e: &dw.w_e + ve };
        let diff = &tr_ad(ch, &other) - &tr;
        let exact = EFormSeries::function(&(vm + ve), r).d_e(ch);
        if diff != exact {
            shifts = Some(format!("weights +({vm}, {ve}): shift {diff}, expected {exact}"));
            break;
        }
    }
    rep.push(match shifts {
        None => CheckLine::new("tr ad density shift", true, format!("{} weight changes shift by d_E(v_M + v_E)", us.len())),
        Some(m) => CheckLine::new("tr ad density shift", false, m),
    });
    rep
}

/// Modular vector field from Δ(f) = div_Ω(X_f) on the coordinate functions.
pub fn modular_field_from_hamiltonians(ch: &AlgebroidChart, dw: &DensityWeights) -> PhaseVectorField {
    let (n, r) = (ch.n, ch.rank);
    let w = PolySection::base(&dw.total(), r);
    let div = |f: &PolySection| {
        let x = hamiltonian_field(f, ch);
        let mut out = x.apply(&w);
        for (i, c) in x.dq.iter().enumerate() {
            out = &out + &c.partial_q(i);
        }
        for (a, c) in x.dp.iter().enumerate() {
            out = &out + &c.partial_p(a);
        }
        out
    };
    let mut v = PhaseVectorField::zero(n, r);
    for i in 0..n {
        v.dq[i] = div(&PolySection::base(&BasePoly::var(n, i), r));
    }
    for a in 0..r {
        v.dp[a] = div(&PolySection::p(n, r, a));
    }
    v
}

/// Vertical lift of tr ad.
pub fn modular_field_vertical(ch: &AlgebroidChart, dw: &DensityWeights) -> PhaseVectorField {
    vertical_lift(&tr_ad(ch, dw), ch.n, ch.rank)
}

/// Both routes, which must agree.
pub fn modular_vector_field(ch: &AlgebroidChart, dw: &DensityWeights) -> Result<PhaseVectorField> {
    let a = modular_field_from_hamiltonians(ch, dw);
    let b = modular_field_vertical(ch, dw);
    if a != b {
        return Err(Error::Internal(format!("modular vector field routes disagree: {a} vs {b}")));
    }
    Ok(a)
}

/// Polynomial differential operator Σ a_{I,J}(q, p) ∂_q^I ∂_p^J.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractedOperator {
    n: usize,
    rank: usize,
    terms: BTreeMap<(Vec<u32>, Vec<u32>), PolySection>,
}

impl ExtractedOperator {
    pub fn zero(n: usize, rank: usize) -> Self {
        ExtractedOperator { n, rank, terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, qi: Vec<u32>, pj: Vec<u32>, a: PolySection) {
        if a.is_zero() {
            return;
        }
        let key = (qi, pj);
        let v = match self.terms.remove(&key) {
            Some(old) => &old + &a,
            None => a,
        };
        if !v.is_zero() {
            self.terms.insert(key, v);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for ((qi, pj), a) in &other.terms {
            out.add_term(qi.clone(), pj.clone(), -a);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Vec<u32>, Vec<u32>), &PolySection)> {
        self.terms.iter()
    }

    pub fn order(&self) -> u32 {
        self.terms.keys().map(|(i, j)| i.iter().sum::<u32>() + j.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn apply(&self, g: &PolySection) -> PolySection {
        let mut out = PolySection::zero(self.n, self.rank);
        for ((qi, pj), a) in &self.terms {
            let mut d = g.clone();
            for (i, &e) in qi.iter().enumerate() {
                for _ in 0..e {
                    d = d.partial_q(i);
                }
            }
            for (b, &e) in pj.iter().enumerate() {
                for _ in 0..e {
                    d = d.partial_p(b);
                }
            }
            out = &out + &(a * &d);
        }
        out
    }

    /// Each term a ∂_q^I ∂_p^J has Euler weight deg_p(a) − |J|; returns the
    /// set of weights that occur.
    pub fn euler_weights(&self) -> Vec<i64> {
        let mut w: Vec<i64> = self
            .terms
            .iter()
            .flat_map(|((_, pj), a)| {
                let j: u32 = pj.iter().sum();
                a.monomials().into_iter().map(move |(_, _, b, _)| b.iter().sum::<u32>() as i64 - j as i64)
            })
            .collect();
        w.sort();
        w.dedup();
        w
    }
}

impl fmt::Display for ExtractedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|((qi, pj), a)| {
                let mut d = Vec::new();
                for (i, &e) in qi.iter().enumerate() {
                    match e {
                        0 => {}
                        1 => d.push(format!("d_q{}", i + 1)),
                        _ => d.push(format!("d_q{}^{e}", i + 1)),
                    }
                }
                for (b, &e) in pj.iter().enumerate() {
                    match e {
                        0 => {}
                        1 => d.push(format!("d_p{}", b + 1)),
                        _ => d.push(format!("d_p{}^{e}", b + 1)),
                    }
                }
                if d.is_empty() {
                    format!("({a})")
                } else {
                    format!("({a}) {}", d.join(" "))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// g ↦ C_r(f, g)
    Left,
    /// g ↦ C_r(g, f)
    Right,
    /// g ↦ C_r(f, g) − C_r(g, f)
    Commutator,
}

/// Star coefficients C_0..C_L of f ⋆ g, exact for the given solution.
fn coefficients(deep: &FedosovSolution, f: &PolySection, g: &PolySection) -> Vec<PolySection> {
    let prod = deep.star_truncated(f, g);
    let l = deep.setup().trunc.max_nu;
    (0..=l).map(|k| prod.nu_coefficient(k)).collect()
}

fn side_value(deep: &FedosovSolution, f: &PolySection, g: &PolySection, r: u32, side: Side) -> PolySection {
    let get = |a: &PolySection, b: &PolySection| coefficients(deep, a, b).get(r as usize).cloned().unwrap_or_else(|| PolySection::zero(f.n(), f.rank()));
    match side {
        Side::Left => get(f, g),
        Side::Right => get(g, f),
        Side::Commutator => &get(f, g) - &get(g, f),
    }
}

fn split_exps(e: &[u32], n: usize) -> (Vec<u32>, Vec<u32>) {
    (e[..n].to_vec(), e[n..].to_vec())
}

fn coordinate_monomial(n: usize, rank: usize, e: &[u32]) -> PolySection {
    let (q, p) = split_exps(e, n);
    PolySection::monomial(n, rank, 0, q, p, Scalar::one())
}

/// Interpolates a linear operator of order ≤ m from its values on the
/// coordinate monomials x^K, |K| ≤ m (triangular system).
pub fn interpolate_operator<F>(n: usize, rank: usize, m: u32, value: F) -> ExtractedOperator
where
    F: Fn(&PolySection) -> PolySection + Sync,
{
    let ks = exponents_up_to(n + rank, m);
    let values: Vec<PolySection> = ks.par_iter().map(|k| value(&coordinate_monomial(n, rank, k))).collect();
    let mut op = ExtractedOperator::zero(n, rank);
    for (k, v) in ks.iter().zip(values) {
        let lower = op.apply(&coordinate_monomial(n, rank, k));
        let a = (&v - &lower).scale(&(Scalar::one() / multi_factorial(k)));
        let (qi, pj) = split_exps(k, n);
        op.add_term(qi, pj, a);
    }
    op
}

/// The operator g ↦ C_r(f, g) (or its mirror / commutator) by jet
/// interpolation, checked on independent random probes.
pub fn extract_operator(sol: &FedosovSolution, f: &PolySection, r: u32, side: Side, m: u32, seed: u64) -> Result<ExtractedOperator> {
    if m < r {
        return Err(Error::Input(format!("order bound {m} is below the nu-order {r}")));
    }
    let (n, rank) = (sol.setup().n(), sol.setup().rank());
    let deep = sol.widened(r.max(f.fibre_degree() + m + 1))?;
    let op = interpolate_operator(n, rank, m, |g| side_value(&deep, f, g, r, side));
    let mut gen = Gen::new(seed);
    let probes: Vec<PolySection> = (0..4).map(|_| gen.section(n, rank, m + 1, if n == 0 { 0 } else { m + 1 }, 0, 3)).collect();
    let deep = sol.widened(r.max(f.fibre_degree() + m + 2))?;
    for g in &probes {
        let want = side_value(&deep, f, g, r, side);
        let got = op.apply(g);
        if want != got {
            return Err(Error::Rejected(format!(
                "order bound {m} too small for C_{r}({f}, .): probe {g} gives residual {}",
                &want - &got
            )));
        }
    }
    Ok(op)
}

/// D*(1) = Σ (−1)^{|I|+|J|} e^{−w} ∂_q^I ∂_p^J (e^w a_{I,J}) for a weight w(q).
pub fn formal_adjoint_unit(op: &ExtractedOperator, w: &BasePoly) -> PolySection {
    let (n, rank) = (op.n, op.rank);
    let grad: Vec<PolySection> = (0..n).map(|i| PolySection::base(&w.partial_unchecked(i), rank)).collect();
    let mut out = PolySection::zero(n, rank);
    for ((qi, pj), a) in op.iter() {
        let mut t = a.clone();
        for (b, &e) in pj.iter().enumerate() {
            for _ in 0..e {
                t = t.partial_p(b);
            }
        }
        for (i, &e) in qi.iter().enumerate() {
            for _ in 0..e {
                t = &t.partial_q(i) + &(&grad[i] * &t);
            }
        }
        let order: u32 = qi.iter().sum::<u32>() + pj.iter().sum::<u32>();
        out = if order % 2 == 0 { &out + &t } else { &out - &t };
    }
    out
}

#[derive(Clone, Debug)]
pub struct CertificateEntry {
    pub f: PolySection,
    pub r: u32,
    pub adjoint_unit: PolySection,
    /// Euler weights of C_r(f, ·) and C_r(·, f); each must be {k − r} or empty.
    pub euler_ok: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TraceCertificate {
    pub entries: Vec<CertificateEntry>,
}

impl TraceCertificate {
    pub fn passes(&self) -> bool {
        self.entries.iter().all(|e| e.adjoint_unit.is_zero() && e.euler_ok)
    }

    pub fn report(&self) -> Report {
        let mut rep = Report::default();
        let bad = self.entries.iter().find(|e| !e.adjoint_unit.is_zero());
        rep.push(CheckLine::new(
            "trace adjoint",
            bad.is_none(),
            match bad {
                None => format!("{} (f, r) pairs, all adjoint units vanish", self.entries.len()),
                Some(e) => format!("f={} r={} adjoint_unit={}", e.f, e.r, e.adjoint_unit),
            },
        ));
        let bad = self.entries.iter().find(|e| !e.euler_ok);
        rep.push(CheckLine::new(
            "euler homogeneity",
            bad.is_none(),
            match bad {
                None => "every C_r(f, .) and C_r(., f) has weight k - r".to_string(),
                Some(e) => format!("f={} r={}", e.f, e.r),
            },
        ));
        rep
    }
}

impl fmt::Display for TraceCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "f={} r={} adjoint_unit={}", e.f, e.r, e.adjoint_unit)?;
        }
        Ok(())
    }
}

/// C_r(f, ·) and C_r(·, f) for r = 1..=r_max, interpolated at order ≤ r from
/// one table of star products and checked on random probes.
pub fn operator_family(sol: &FedosovSolution, f: &PolySection, r_max: u32, seed: u64) -> Result<Vec<(ExtractedOperator, ExtractedOperator)>> {
    let (n, rank) = (sol.setup().n(), sol.setup().rank());
    let deep = sol.widened(r_max.max(f.fibre_degree() + r_max + 1))?;
    let ks = exponents_up_to(n + rank, r_max);
    let table: Vec<(Vec<PolySection>, Vec<PolySection>)> = ks
        .par_iter()
        .map(|k| {
            let g = coordinate_monomial(n, rank, k);
            (coefficients(&deep, f, &g), coefficients(&deep, &g, f))
        })
        .collect();
    let mut gen = Gen::new(seed);
    let probes: Vec<PolySection> = (0..3).map(|_| gen.section(n, rank, r_max + 1, if n == 0 { 0 } else { r_max + 1 }, 0, 3)).collect();
    let deep = sol.widened(r_max.max(f.fibre_degree() + r_max + 2))?;
    let probe_values: Vec<(Vec<PolySection>, Vec<PolySection>)> =
        probes.par_iter().map(|g| (coefficients(&deep, f, g), coefficients(&deep, g, f))).collect();
    let mut out = Vec::new();
    for r in 1..=r_max {
        let mut ops = Vec::new();
        for left in [true, false] {
            let mut op = ExtractedOperator::zero(n, rank);
            for (k, (lv, rv)) in ks.iter().zip(&table) {
                if k.iter().sum::<u32>() > r {
                    continue;
                }
                let v = if left { &lv[r as usize] } else { &rv[r as usize] };
                let lower = op.apply(&coordinate_monomial(n, rank, k));
                let (qi, pj) = split_exps(k, n);
                op.add_term(qi, pj, (v - &lower).scale(&(Scalar::one() / multi_factorial(k))));
            }
            for (g, (lv, rv)) in probes.iter().zip(&probe_values) {
                let want = if left { &lv[r as usize] } else { &rv[r as usize] };
                let got = op.apply(g);
                if *want != got {
                    return Err(Error::Rejected(format!(
                        "order bound {r} too small for C_{r} with f = {f}: probe {g} gives residual {}",
                        want - &got
                    )));
                }
            }
            ops.push(op);
        }
        let right = ops.pop().expect("two sides");
        let left = ops.pop().expect("two sides");
        out.push((left, right));
    }
    Ok(out)
}

/// For all monomials f of fibre degree ≤ d (base degree ≤ 1) and
/// 1 ≤ r ≤ r_max: the commutator operator has vanishing adjoint unit, and
/// C_r(f, ·), C_r(·, f) have Euler weight k − r. Refused unless tr ad = 0.
pub fn trace_certificate(sol: &FedosovSolution, dw: &DensityWeights, d: u32, r_max: u32, seed: u64) -> Result<TraceCertificate> {
    let ch = &sol.setup().geo.chart;
    let tr = tr_ad(ch, dw);
    if !tr.is_zero() {
        return Err(Error::Rejected(format!(
            "trace certificate refused: tr ad = {tr} is nonzero for these densities (choose weights with tr ad = 0)"
        )));
    }
    if !sol.setup().b_is_homogeneous() {
        return Err(Error::Input("trace certificate needs a homogeneous star product (B = nu B1)".into()));
    }
    let (n, rank) = (ch.n, ch.rank);
    let mut fs = Vec::new();
    for b in exponents_up_to(rank, d) {
        for q in exponents_up_to(n, 1) {
            fs.push(PolySection::monomial(n, rank, 0, q, b.clone(), Scalar::one()));
        }
    }
    let w = dw.total();
    let per_f: Vec<Vec<CertificateEntry>> = fs
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<Vec<CertificateEntry>> {
            let k = f.fibre_degree() as i64;
            let family = operator_family(sol, f, r_max, seed.wrapping_add(i as u64))?;
            Ok(family
                .into_iter()
                .zip(1..)
                .map(|((left, right), r)| {
                    let want = k - r as i64;
                    let ok = |op: &ExtractedOperator| op.euler_weights().iter().all(|&x| x == want);
                    CertificateEntry {
                        f: f.clone(),
                        r,
                        adjoint_unit: formal_adjoint_unit(&left.minus(&right), &w),
                        euler_ok: ok(&left) && ok(&right),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(TraceCertificate { entries: per_f.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{parse_section, Connection, Geometry};
    use crate::fedosov::{solve_r, FedosovSetup};
    use crate::fixtures::{chart, NAMES};
    use crate::ring::{rat, NuTruncation, PolyParser};

    fn poly(s: &str, n: usize) -> BasePoly {
        PolyParser::base(n).parse_base(s).unwrap()
    }

    fn sol(name: &str, kappa: Scalar, l: u32) -> FedosovSolution {
        let ch = chart(name);
        let conn = Connection::half_structure_constants(&ch);
        let (n, r) = (ch.n, ch.rank);
        let geo = Geometry::new(ch, conn).unwrap();
        solve_r(&FedosovSetup::new(geo, EFormSeries::zero(n, r), kappa, NuTruncation::new(l, l + 1).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let t = chart("tangent1");
        assert_eq!(div_mu(&t, &poly("q1", 1), &[BasePoly::one(1)]).to_string(), "1");
        let a = chart("abelian2");
        assert!(tr_ad(&a, &DensityWeights::constant(0)).is_zero());
        assert!(tr_ad(&chart("heis3"), &DensityWeights::constant(0)).is_zero());
        assert!(tr_ad(&chart("so3"), &DensityWeights::constant(0)).is_zero());
        assert_eq!(tr_ad(&chart("axb"), &DensityWeights::constant(0)).to_string(), "nu^0 [1] : 1");
        let r2 = chart("rank2");
        assert_eq!(tr_ad(&r2, &DensityWeights::constant(1)).to_string(), "nu^0 [1] : 1; nu^0 [2] : q1");
        let dw = DensityWeights { w_m: poly("-q1", 1), w_e: BasePoly::zero(1) };
        assert!(tr_ad(&r2, &dw).is_zero());
    }

    #[test]
    fn divergence_identities_on_all_fixtures() {
        for name in NAMES {
            let ch = chart(name);
            let n = ch.n;
            for dw in [DensityWeights::constant(n), DensityWeights { w_m: Gen::new(3).base_poly(n, 2, 2), w_e: Gen::new(4).base_poly(n, 2, 2) }] {
                let rep = divergence_checks(&ch, &dw, 7, 10);
                assert!(rep.all_pass(), "{name}:\n{rep}");
            }
        }
    }

    #[test]
    fn modular_field_routes_agree() {
        for name in NAMES {
            let ch = chart(name);
            let dw = DensityWeights { w_m: Gen::new(5).base_poly(ch.n, 2, 2), w_e: Gen::new(6).base_poly(ch.n, 2, 2) };
            let v = modular_vector_field(&ch, &dw).unwrap();
            assert!(v.dq.iter().all(PolySection::is_zero), "{name}");
        }
        assert!(modular_vector_field(&chart("heis3"), &DensityWeights::constant(0)).unwrap().is_zero());
        let v = modular_vector_field(&chart("axb"), &DensityWeights::constant(0)).unwrap();
        assert_eq!(v.to_string(), "(1) d/dp1");
    }

    #[test]
    fn adjoint_examples() {
        let mut d = ExtractedOperator::zero(1, 1);
        d.add_term(vec![1], vec![0], PolySection::constant(1, 1, Scalar::one()));
        assert!(formal_adjoint_unit(&d, &BasePoly::zero(1)).is_zero());
        let mut d = ExtractedOperator::zero(1, 1);
        d.add_term(vec![1], vec![0], parse_section("q1", 1, 1).unwrap());
        assert_eq!(formal_adjoint_unit(&d, &BasePoly::zero(1)).to_string(), "-1");
        let mut d = ExtractedOperator::zero(1, 1);
        d.add_term(vec![0], vec![1], PolySection::constant(1, 1, Scalar::one()));
        assert!(formal_adjoint_unit(&d, &BasePoly::zero(1)).is_zero());
    }

    #[test]
    fn extraction_examples() {
        let s = sol("tangent1", rat(0, 1), 2);
        let p = parse_section("p1", 1, 1).unwrap();
        let op = extract_operator(&s, &p, 1, Side::Left, 1, 1).unwrap();
        assert_eq!(op.to_string(), "(-1) d_q1");
        let op = extract_operator(&s, &p, 0, Side::Left, 1, 1).unwrap();
        assert_eq!(op.to_string(), "(p1)");

        let h = sol("heis3", rat(1, 2), 2);
        let ch = chart("heis3");
        let p1 = parse_section("p1", 0, 3).unwrap();
        let op = extract_operator(&h, &p1, 1, Side::Commutator, 2, 2).unwrap();
        let x = hamiltonian_field(&p1, &ch);
        let mut gen = Gen::new(8);
        for _ in 0..5 {
            let g = gen.section(0, 3, 3, 0, 0, 3);
            // C₁(f,g) − C₁(g,f) = {f, g} = −X_f(g)
            assert_eq!(op.apply(&g), -&x.apply(&g), "g = {g}");
        }
    }

    #[test]
    fn heisenberg_trace_certificate() {
        let s = sol("heis3", rat(1, 2), 2);
        let cert = trace_certificate(&s, &DensityWeights::constant(0), 2, 2, 1).unwrap();
        assert!(cert.passes(), "{cert}");
        assert_eq!(cert.entries.len(), 20);
        assert!(cert.to_string().starts_with("f=1 r=1 adjoint_unit=0\n"));
    }

    #[test]
    fn family_matches_single_extraction() {
        let s = sol("so3", rat(1, 2), 2);
        let f = parse_section("p1*p2", 0, 3).unwrap();
        let fam = operator_family(&s, &f, 2, 3).unwrap();
        for r in 1..=2u32 {
            let (l, rt) = &fam[r as usize - 1];
            assert_eq!(*l, extract_operator(&s, &f, r, Side::Left, r, 4).unwrap());
            assert_eq!(*rt, extract_operator(&s, &f, r, Side::Right, r, 4).unwrap());
        }
    }

    #[test]
    fn certificate_with_weights_on_rank2() {
        let s = sol("rank2", rat(1, 2), 2);
        let dw = DensityWeights { w_m: poly("-q1", 1), w_e: BasePoly::zero(1) };
        let cert = trace_certificate(&s, &dw, 2, 2, 5).unwrap();
        assert!(cert.passes(), "{cert}");
    }

    #[test]
    fn refuses_non_unimodular() {
        let s = sol("axb", rat(1, 2), 2);
        let err = trace_certificate(&s, &DensityWeights::constant(0), 1, 1, 1).unwrap_err();
        assert!(matches!(err, Error::Rejected(_)));
        assert!(err.to_string().contains("nu^0 [1] : 1"));
    }
}
