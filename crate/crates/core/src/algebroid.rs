//! Lie algebroid chart data in a local frame: anchor, structure functions,
//! E-connections, the differential d_E, curvature, and the classical
//! Poisson geometry of the dual bundle (brackets, Hamiltonian fields, lifts).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::ring::{int, monomial_text, nu_text, rat, write_sum, BasePoly, NuTruncation, Scalar, Truncate};
use crate::wsl::{WslElement, WslKey};

/// Sign and result of `e^A ∧ e^B` for index bitmasks; `None` if they overlap.
pub fn wedge_masks(a: u32, b: u32) -> Option<(u32, bool)> {
    if a & b != 0 {
        return None;
    }
    let mut swaps = 0;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    Some((a | b, swaps % 2 == 1))
}

pub fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

pub(crate) fn mask_text(mask: u32) -> String {
    let idx: Vec<String> = mask_indices(mask).iter().map(|i| (i + 1).to_string()).collect();
    idx.join(",")
}

/// Local presentation of a Lie algebroid E → U over a chart of dimension n.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidChart {
    pub name: String,
    pub n: usize,
    pub rank: usize,
    /// ρ^i_α at `α * n + i`.
    pub anchor: Vec<BasePoly>,
    /// c^γ_{αβ} at `(α * rank + β) * rank + γ`.
    pub bracket: Vec<BasePoly>,
}

impl AlgebroidChart {
    pub fn new(name: &str, n: usize, rank: usize) -> Self {
        AlgebroidChart {
            name: name.to_string(),
            n,
            rank,
            anchor: vec![BasePoly::zero(n); rank * n],
            bracket: vec![BasePoly::zero(n); rank * rank * rank],
        }
    }

    pub fn anchor(&self, alpha: usize, i: usize) -> &BasePoly {
        &self.anchor[alpha * self.n + i]
    }

    pub fn c(&self, alpha: usize, beta: usize, gamma: usize) -> &BasePoly {
        &self.bracket[(alpha * self.rank + beta) * self.rank + gamma]
    }

    pub fn set_anchor(&mut self, alpha: usize, i: usize, v: BasePoly) {
        self.anchor[alpha * self.n + i] = v;
    }

    pub fn set_c(&mut self, alpha: usize, beta: usize, gamma: usize, v: BasePoly) {
        let r = self.rank;
        self.bracket[(alpha * r + beta) * r + gamma] = v;
    }

    /// ρ(e_α) applied to a base function.
    pub fn rho(&self, alpha: usize, u: &BasePoly) -> BasePoly {
        let mut out = BasePoly::zero(self.n);
        for i in 0..self.n {
            let a = self.anchor(alpha, i);
            if !a.is_zero() {
                out = &out + &(a * &u.partial_unchecked(i));
            }
        }
        out
    }

    /// ρ(s) for a section s = s^α e_α.
    pub fn rho_section(&self, s: &[BasePoly], u: &BasePoly) -> BasePoly {
        let mut out = BasePoly::zero(self.n);
        for (alpha, sa) in s.iter().enumerate() {
            if !sa.is_zero() {
                out = &out + &(sa * &self.rho(alpha, u));
            }
        }
        out
    }

    /// Bracket of sections, [s, t]_E via the Leibniz rule.
    pub fn bracket_sections(&self, s: &[BasePoly], t: &[BasePoly]) -> Vec<BasePoly> {
        let r = self.rank;
        let mut out = vec![BasePoly::zero(self.n); r];
        for g in 0..r {
            out[g] = &self.rho_section(s, &t[g]) - &self.rho_section(t, &s[g]);
            for a in 0..r {
                for b in 0..r {
                    let c = self.c(a, b, g);
                    if !c.is_zero() {
                        out[g] = &out[g] + &(&(&s[a] * &t[b]) * c);
                    }
                }
            }
        }
        out
    }

    pub fn validate(self) -> Result<ValidChart> {
        let report = validate_chart(&self);
        if report.is_empty() {
            Ok(ValidChart(Arc::new(self)))
        } else {
            Err(Error::InvalidChart(format!("{}: {}", self.name, report.join("; "))))
        }
    }
}

/// Lists every violated antisymmetry, anchor-compatibility and Jacobi
/// identity; empty iff the chart presents a Lie algebroid.
pub fn validate_chart(ch: &AlgebroidChart) -> Vec<String> {
    let (n, r) = (ch.n, ch.rank);
    let mut report = Vec::new();
    if ch.anchor.len() != r * n || ch.bracket.len() != r * r * r {
        report.push("table sizes do not match (n, N)".to_string());
        return report;
    }
    if ch.anchor.iter().chain(&ch.bracket).any(|p| p.arity() != n) {
        report.push(format!("coefficient arity differs from n={n}"));
        return report;
    }
    for a in 0..r {
        for b in a..r {
            for g in 0..r {
                let s = ch.c(a, b, g) + ch.c(b, a, g);
                if !s.is_zero() {
                    report.push(format!(
                        "antisymmetry c[{}][{}][{}] + c[{}][{}][{}] = {s}",
                        a + 1, b + 1, g + 1, b + 1, a + 1, g + 1
                    ));
                }
            }
        }
    }
    for a in 0..r {
        for b in a + 1..r {
            for i in 0..n {
                let mut v = &ch.rho(a, ch.anchor(b, i)) - &ch.rho(b, ch.anchor(a, i));
                for g in 0..r {
                    v = &v - &(ch.c(a, b, g) * ch.anchor(g, i));
                }
                if !v.is_zero() {
                    report.push(format!(
                        "anchor compatibility (alpha={}, beta={}, i={}): {v}",
                        a + 1, b + 1, i + 1
                    ));
                }
            }
        }
    }
    for a in 0..r {
        for b in a + 1..r {
            for g in b + 1..r {
                for e in 0..r {
                    let mut v = BasePoly::zero(n);
                    for (x, y, z) in [(a, b, g), (b, g, a), (g, a, b)] {
                        v = &v + &ch.rho(x, ch.c(y, z, e));
                        for d in 0..r {
                            v = &v + &(ch.c(y, z, d) * ch.c(x, d, e));
                        }
                    }
                    if !v.is_zero() {
                        report.push(format!(
                            "Jacobi ({},{},{}) component {}: {v}",
                            a + 1, b + 1, g + 1, e + 1
                        ));
                    }
                }
            }
        }
    }
    report
}

/// A chart that passed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidChart(Arc<AlgebroidChart>);

impl std::ops::Deref for ValidChart {
    type Target = AlgebroidChart;
    fn deref(&self) -> &AlgebroidChart {
        &self.0
    }
}

/// E-connection given by Christoffel symbols ∇_{e_α} e_β = Γ^γ_{αβ} e_γ.
#[derive(Clone, Debug, PartialEq)]
pub struct Connection {
    pub rank: usize,
    /// Γ^γ_{αβ} at `(α * rank + β) * rank + γ`.
    pub gamma: Vec<BasePoly>,
}

impl Connection {
    pub fn zero(n: usize, rank: usize) -> Self {
        Connection { rank, gamma: vec![BasePoly::zero(n); rank * rank * rank] }
    }

    /// Γ = c/2, torsion-free for every chart.
    pub fn half_structure_constants(ch: &AlgebroidChart) -> Self {
        Connection {
            rank: ch.rank,
            gamma: ch.bracket.iter().map(|c| c.scale(&rat(1, 2))).collect(),
        }
    }

    pub fn g(&self, alpha: usize, beta: usize, gamma: usize) -> &BasePoly {
        &self.gamma[(alpha * self.rank + beta) * self.rank + gamma]
    }

    pub fn set(&mut self, alpha: usize, beta: usize, gamma: usize, v: BasePoly) {
        let r = self.rank;
        self.gamma[(alpha * r + beta) * r + gamma] = v;
    }

    /// T^γ_{αβ} = Γ^γ_{αβ} − Γ^γ_{βα} − c^γ_{αβ}.
    pub fn torsion(&self, ch: &AlgebroidChart) -> Vec<BasePoly> {
        let r = self.rank;
        let mut t = Vec::with_capacity(r * r * r);
        for a in 0..r {
            for b in 0..r {
                for g in 0..r {
                    t.push(&(self.g(a, b, g) - self.g(b, a, g)) - ch.c(a, b, g));
                }
            }
        }
        t
    }

    pub fn is_torsion_free(&self, ch: &AlgebroidChart) -> bool {
        self.torsion(ch).iter().all(BasePoly::is_zero)
    }

    /// Subtract half the torsion.
    pub fn symmetrize(&self, ch: &AlgebroidChart) -> Connection {
        let t = self.torsion(ch);
        Connection {
            rank: self.rank,
            gamma: self
                .gamma
                .iter()
                .zip(&t)
                .map(|(g, t)| g - &t.scale(&rat(1, 2)))
                .collect(),
        }
    }
}

/// A validated chart together with a torsion-free connection; the input of
/// every Fedosov-type construction.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub chart: ValidChart,
    pub conn: Connection,
}

impl Geometry {
    pub fn new(chart: ValidChart, conn: Connection) -> Result<Self> {
        if conn.rank != chart.rank || conn.gamma.iter().any(|g| g.arity() != chart.n) {
            return Err(Error::Input("connection does not match the chart dimensions".into()));
        }
        if !conn.is_torsion_free(&chart) {
            let t = conn.torsion(&chart);
            let r = chart.rank;
            let (idx, v) = t.iter().enumerate().find(|(_, v)| !v.is_zero()).unwrap();
            let (a, b, g) = (idx / (r * r), (idx / r) % r, idx % r);
            return Err(Error::Torsion(format!("T[{}][{}][{}] = {v}", a + 1, b + 1, g + 1)));
        }
        Ok(Geometry { chart, conn })
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn rank(&self) -> usize {
        self.chart.rank
    }

    /// Components R^γ_{δαβ} of R(e_α, e_β)e_δ = R^γ_{δαβ} e_γ.
    pub fn curvature_component(&self, g: usize, d: usize, a: usize, b: usize) -> BasePoly {
        let (ch, cn) = (&self.chart, &self.conn);
        let mut v = &ch.rho(a, cn.g(b, d, g)) - &ch.rho(b, cn.g(a, d, g));
        for e in 0..ch.rank {
            v = &v + &(cn.g(b, d, e) * cn.g(a, e, g));
            v = &v - &(cn.g(a, d, e) * cn.g(b, e, g));
            v = &v - &(ch.c(a, b, e) * cn.g(e, d, g));
        }
        v
    }

    /// The curvature as the element ½ R^γ_{δαβ} y^δ p_γ e^α∧e^β.
    pub fn curvature(&self, t: NuTruncation) -> WslElement {
        let (n, r) = (self.n(), self.rank());
        let mut out = WslElement::zero(n, r, t);
        for a in 0..r {
            for b in a + 1..r {
                for g in 0..r {
                    for d in 0..r {
                        let v = self.curvature_component(g, d, a, b);
                        if v.is_zero() {
                            continue;
                        }
                        let mut key = WslKey::unit(r);
                        key.w[d] = 1;
                        key.s[g] = 1;
                        key.lam = (1 << a) | (1 << b);
                        out.add_term(key, v);
                    }
                }
            }
        }
        out
    }

    /// ∇_{e_α} acting on a polynomial section of Sym E.
    pub fn nabla_section(&self, alpha: usize, s: &PolySection) -> PolySection {
        let ch = &self.chart;
        let mut out = PolySection::zero(ch.n, ch.rank);
        for ((k, b), u) in s.iter() {
            out.add_term(*k, b.clone(), ch.rho(alpha, u));
            for beta in 0..ch.rank {
                if b[beta] == 0 {
                    continue;
                }
                for g in 0..ch.rank {
                    let gm = self.conn.g(alpha, beta, g);
                    if gm.is_zero() {
                        continue;
                    }
                    let mut e = b.clone();
                    e[beta] -= 1;
                    e[g] += 1;
                    out.add_term(*k, e, (u * gm).scale(&int(b[beta] as i64)));
                }
            }
        }
        out
    }

    /// The horizontal lift of a section s = s^α e_α.
    pub fn horizontal_lift(&self, s: &[BasePoly]) -> PhaseVectorField {
        let ch = &self.chart;
        let mut v = PhaseVectorField::zero(ch.n, ch.rank);
        for (a, sa) in s.iter().enumerate() {
            if sa.is_zero() {
                continue;
            }
            for i in 0..ch.n {
                v.dq[i] = &v.dq[i] + &PolySection::base(&(sa * ch.anchor(a, i)), ch.rank);
            }
            for b in 0..ch.rank {
                for g in 0..ch.rank {
                    let c = self.conn.g(a, b, g);
                    if !c.is_zero() {
                        let t = &PolySection::base(&(sa * c), ch.rank) * &PolySection::p(ch.n, ch.rank, g);
                        v.dp[b] = &v.dp[b] + &t;
                    }
                }
            }
        }
        v
    }

    /// Bracket from θ_E − B₀^ver with θ_E = (e_α)^hor ∧ (e^α)^ver.
    pub fn theta_bracket(&self, f: &PolySection, g: &PolySection, b0: &EFormSeries) -> PolySection {
        let (n, r) = (self.n(), self.rank());
        let mut out = PolySection::zero(n, r);
        for a in 0..r {
            let mut frame = vec![BasePoly::zero(n); r];
            frame[a] = BasePoly::one(n);
            let hor = self.horizontal_lift(&frame);
            let fa = f.partial_p(a);
            let ga = g.partial_p(a);
            out = &(&out + &(&hor.apply(f) * &ga)) - &(&fa * &hor.apply(g));
        }
        &out - &b0_contract(b0, f, g)
    }
}

/// Σ_{α,β} B₀(e_α, e_β) ∂_{p_α} f ∂_{p_β} g for the ν⁰ part of `b`.
fn b0_contract(b: &EFormSeries, f: &PolySection, g: &PolySection) -> PolySection {
    let mut out = PolySection::zero(f.n(), f.rank());
    for ((k, mask), u) in b.iter() {
        if *k != 0 || mask.count_ones() != 2 {
            continue;
        }
        let idx = mask_indices(*mask);
        let (a, bb) = (idx[0], idx[1]);
        let ub = PolySection::base(u, f.rank());
        let t = &(&f.partial_p(a) * &g.partial_p(bb)) - &(&f.partial_p(bb) * &g.partial_p(a));
        out = &out + &(&ub * &t);
    }
    out
}

/// Gauged Poisson bracket via the covariant first-order formula
/// ∇_α s ∂_{p_α} t − ∂_{p_α} s ∇_α t − B₀(e_α,e_β) ∂_{p_α} s ∂_{p_β} t.
pub fn gauged_poisson_bracket(
    f: &PolySection,
    g: &PolySection,
    geo: &Geometry,
    b0: &EFormSeries,
) -> Result<PolySection> {
    let d = b0.d_e(&geo.chart);
    if !d.is_zero() {
        return Err(Error::NotClosed(d.to_string()));
    }
    let mut out = PolySection::zero(geo.n(), geo.rank());
    for a in 0..geo.rank() {
        out = &out + &(&geo.nabla_section(a, f) * &g.partial_p(a));
        out = &out - &(&f.partial_p(a) * &geo.nabla_section(a, g));
    }
    Ok(&out - &b0_contract(b0, f, g))
}

/// Coordinate form of the linear Poisson bracket on E* (B₀ = 0):
/// ρ^i_α(∂_i f ∂_{p_α} g − ∂_{p_α} f ∂_i g) − p_γ c^γ_{αβ} ∂_{p_α} f ∂_{p_β} g.
pub fn linear_poisson_bracket(f: &PolySection, g: &PolySection, ch: &AlgebroidChart) -> PolySection {
    let (n, r) = (ch.n, ch.rank);
    let mut out = PolySection::zero(n, r);
    for a in 0..r {
        let (fa, ga) = (f.partial_p(a), g.partial_p(a));
        for i in 0..n {
            let rho = PolySection::base(ch.anchor(a, i), r);
            if rho.is_zero() {
                continue;
            }
            let t = &(&f.partial_q(i) * &ga) - &(&fa * &g.partial_q(i));
            out = &out + &(&rho * &t);
        }
        for b in 0..r {
            for gg in 0..r {
                let c = ch.c(a, b, gg);
                if c.is_zero() {
                    continue;
                }
                let coef = &PolySection::base(c, r) * &PolySection::p(n, r, gg);
                out = &out - &(&coef * &(&fa * &g.partial_p(b)));
            }
        }
    }
    out
}

/// X_f = −ρ^i_α ∂_i f ∂_{p_α} + ρ^i_α ∂_{p_α} f ∂_i + p_γ c^γ_{αβ} ∂_{p_α} f ∂_{p_β}.
/// With this sign convention X_f(g) = {g, f}.
pub fn hamiltonian_field(f: &PolySection, ch: &AlgebroidChart) -> PhaseVectorField {
    let (n, r) = (ch.n, ch.rank);
    let mut v = PhaseVectorField::zero(n, r);
    for a in 0..r {
        let fa = f.partial_p(a);
        for i in 0..n {
            let rho = PolySection::base(ch.anchor(a, i), r);
            if rho.is_zero() {
                continue;
            }
            v.dq[i] = &v.dq[i] + &(&rho * &fa);
            v.dp[a] = &v.dp[a] - &(&rho * &f.partial_q(i));
        }
        for b in 0..r {
            for g in 0..r {
                let c = ch.c(a, b, g);
                if !c.is_zero() {
                    let coef = &PolySection::base(c, r) * &PolySection::p(n, r, g);
                    v.dp[b] = &v.dp[b] + &(&coef * &fa);
                }
            }
        }
    }
    v
}

/// Vertical lift of a one-form α = α_β e^β: α_β ∂/∂p_β.
pub fn vertical_lift(form: &EFormSeries, n: usize, rank: usize) -> PhaseVectorField {
    let mut v = PhaseVectorField::zero(n, rank);
    for ((k, mask), u) in form.iter() {
        if mask.count_ones() == 1 {
            let b = mask.trailing_zeros() as usize;
            v.dp[b].add_term(*k, vec![0; rank], u.clone());
        }
    }
    v
}

/// Formal ν-series of E-differential forms, keyed by (ν-power, index mask).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EFormSeries {
    n: usize,
    rank: usize,
    terms: BTreeMap<(u32, u32), BasePoly>,
}

impl EFormSeries {
    pub fn zero(n: usize, rank: usize) -> Self {
        EFormSeries { n, rank, terms: BTreeMap::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32), &BasePoly)> {
        self.terms.iter()
    }

    pub fn get(&self, k: u32, mask: u32) -> BasePoly {
        self.terms.get(&(k, mask)).cloned().unwrap_or_else(|| BasePoly::zero(self.n))
    }

    pub fn add_term(&mut self, k: u32, mask: u32, u: BasePoly) {
        if u.is_zero() {
            return;
        }
        let e = self.terms.entry((k, mask)).or_insert_with(|| BasePoly::zero(u.arity()));
        *e = &*e + &u;
        if e.is_zero() {
            self.terms.remove(&(k, mask));
        }
    }

    /// Add u · e^{i_1} ∧ … ∧ e^{i_m} for an arbitrary index list.
    pub fn add_wedge(&mut self, k: u32, indices: &[usize], u: BasePoly) {
        let mut mask = 0u32;
        let mut neg = false;
        for &i in indices {
            match wedge_masks(mask, 1 << i) {
                Some((m, s)) => {
                    mask = m;
                    neg ^= s;
                }
                None => return,
            }
        }
        self.add_term(k, mask, if neg { -&u } else { u });
    }

    /// A function viewed as a zero-form.
    pub fn function(u: &BasePoly, rank: usize) -> Self {
        let mut f = Self::zero(u.arity(), rank);
        f.add_term(0, 0, u.clone());
        f
    }

    pub fn scale(&self, c: &Scalar) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, m), u) in &self.terms {
            out.add_term(*k, *m, u.scale(c));
        }
        out
    }

    pub fn shift_nu(&self, by: u32) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, m), u) in &self.terms {
            out.add_term(k + by, *m, u.clone());
        }
        out
    }

    /// The ν^k component.
    pub fn nu_part(&self, k: u32) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((kk, m), u) in &self.terms {
            if *kk == k {
                out.add_term(0, *m, u.clone());
            }
        }
        out
    }

    pub fn form_degree(&self) -> Option<u32> {
        let mut degs = self.terms.keys().map(|(_, m)| m.count_ones());
        let d = degs.next()?;
        degs.all(|x| x == d).then_some(d)
    }

    pub fn max_nu(&self) -> u32 {
        self.terms.keys().map(|(k, _)| *k).max().unwrap_or(0)
    }

    /// True if every coefficient is homogeneous of ν-degree one (B = νB₁).
    pub fn is_nu_linear(&self) -> bool {
        self.terms.keys().all(|(k, _)| *k == 1)
    }

    /// True if all ν-powers are even.
    pub fn is_nu_even(&self) -> bool {
        self.terms.keys().all(|(k, _)| k % 2 == 0)
    }

    /// The Lie algebroid differential.
    pub fn d_e(&self, ch: &AlgebroidChart) -> EFormSeries {
        let r = ch.rank;
        let mut out = Self::zero(self.n, r);
        for ((k, mask), u) in &self.terms {
            for a in 0..r {
                let du = ch.rho(a, u);
                if du.is_zero() {
                    continue;
                }
                if let Some((m, neg)) = wedge_masks(1 << a, *mask) {
                    out.add_term(*k, m, if neg { -&du } else { du });
                }
            }
            let idx = mask_indices(*mask);
            for (pos, &g) in idx.iter().enumerate() {
                let prefix: u32 = idx[..pos].iter().map(|i| 1u32 << i).sum();
                let suffix: u32 = idx[pos + 1..].iter().map(|i| 1u32 << i).sum();
                for a in 0..r {
                    for b in a + 1..r {
                        let c = ch.c(a, b, g);
                        if c.is_zero() {
                            continue;
                        }
                        let Some((m1, s1)) = wedge_masks(prefix, (1 << a) | (1 << b)) else {
                            continue;
                        };
                        let Some((m2, s2)) = wedge_masks(m1, suffix) else {
                            continue;
                        };
                        // d e^g = -sum_{a<b} c^g_ab e^a e^b, passed over `pos` one-forms
                        let neg = s1 ^ s2 ^ (pos % 2 == 1) ^ true;
                        let v = u * c;
                        out.add_term(*k, m2, if neg { -&v } else { v });
                    }
                }
            }
        }
        out
    }

    /// Pairing of a one-form with a section.
    pub fn pair(&self, k: u32, s: &[BasePoly]) -> BasePoly {
        let mut out = BasePoly::zero(self.n);
        for (a, sa) in s.iter().enumerate() {
            out = &out + &(&self.get(k, 1 << a) * sa);
        }
        out
    }
}

impl std::ops::Add for &EFormSeries {
    type Output = EFormSeries;
    fn add(self, rhs: &EFormSeries) -> EFormSeries {
        let mut out = self.clone();
        for ((k, m), u) in &rhs.terms {
            out.add_term(*k, *m, u.clone());
        }
        out
    }
}

impl std::ops::Sub for &EFormSeries {
    type Output = EFormSeries;
    fn sub(self, rhs: &EFormSeries) -> EFormSeries {
        self + &rhs.scale(&int(-1))
    }
}

impl Truncate for EFormSeries {
    fn truncate(&self, t: NuTruncation) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, m), u) in &self.terms {
            if *k <= t.max_nu {
                out.add_term(*k, *m, u.clone());
            }
        }
        out
    }
}

impl fmt::Display for EFormSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((k, m), u) in &self.terms {
            if !first {
                write!(f, "; ")?;
            }
            first = false;
            write!(f, "nu^{k} [{}] : {u}", mask_text(*m))?;
        }
        Ok(())
    }
}

/// Polynomial section of Sym E (a fibrewise polynomial on E*) with
/// coefficients in the base and a ν-grading.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PolySection {
    n: usize,
    rank: usize,
    terms: BTreeMap<(u32, Vec<u32>), BasePoly>,
}

impl PolySection {
    pub fn zero(n: usize, rank: usize) -> Self {
        PolySection { n, rank, terms: BTreeMap::new() }
    }

    /// The pull-back π*u of a base function.
    pub fn base(u: &BasePoly, rank: usize) -> Self {
        let mut s = Self::zero(u.arity(), rank);
        s.add_term(0, vec![0; rank], u.clone());
        s
    }

    pub fn constant(n: usize, rank: usize, c: Scalar) -> Self {
        Self::base(&BasePoly::constant(n, c), rank)
    }

    /// The fibre coordinate p_(a+1).
    pub fn p(n: usize, rank: usize, a: usize) -> Self {
        let mut b = vec![0; rank];
        b[a] = 1;
        Self::monomial(n, rank, 0, vec![0; n], b, int(1))
    }

    pub fn monomial(n: usize, rank: usize, nu: u32, q: Vec<u32>, b: Vec<u32>, c: Scalar) -> Self {
        let mut s = Self::zero(n, rank);
        s.add_term(nu, b, BasePoly::monomial(q, c));
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, Vec<u32>), &BasePoly)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.values().map(BasePoly::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, nu: u32, b: Vec<u32>, u: BasePoly) {
        if u.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry((nu, b)) {
            Entry::Vacant(v) => {
                v.insert(u);
            }
            Entry::Occupied(mut o) => {
                let s = &*o.get() + &u;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn scale(&self, c: &Scalar) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        if c.is_zero() {
            return out;
        }
        for ((k, b), u) in &self.terms {
            out.add_term(*k, b.clone(), u.scale(c));
        }
        out
    }

    pub fn shift_nu(&self, by: u32) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            out.add_term(k + by, b.clone(), u.clone());
        }
        out
    }

    /// Divide by ν^by; `None` if some term has a lower ν-power.
    pub fn unshift_nu(&self, by: u32) -> Option<Self> {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            if *k < by {
                return None;
            }
            out.add_term(k - by, b.clone(), u.clone());
        }
        Some(out)
    }

    /// The ν^k coefficient as a ν-free section.
    pub fn nu_coefficient(&self, k: u32) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((kk, b), u) in &self.terms {
            if *kk == k {
                out.add_term(0, b.clone(), u.clone());
            }
        }
        out
    }

    pub fn max_nu(&self) -> u32 {
        self.terms.keys().map(|(k, _)| *k).max().unwrap_or(0)
    }

    pub fn fibre_degree(&self) -> u32 {
        self.terms.keys().map(|(_, b)| b.iter().sum()).max().unwrap_or(0)
    }

    /// Homogeneous fibre degree, if every term has the same p-degree.
    pub fn homogeneous_fibre_degree(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|(_, b)| b.iter().sum::<u32>());
        let d = it.next()?;
        it.all(|x| x == d).then_some(d)
    }

    pub fn partial_p(&self, a: usize) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            if b[a] > 0 {
                let mut e = b.clone();
                e[a] -= 1;
                out.add_term(*k, e, u.scale(&int(b[a] as i64)));
            }
        }
        out
    }

    pub fn partial_q(&self, i: usize) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            out.add_term(*k, b.clone(), u.partial_unchecked(i));
        }
        out
    }

    /// Apply the ν ↦ −ν substitution.
    pub fn nu_parity(&self) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            let u = if k % 2 == 1 { -u } else { u.clone() };
            out.add_term(*k, b.clone(), u);
        }
        out
    }

    /// H = deg_p + deg_ν applied termwise.
    pub fn homogeneity(&self) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            let h = k + b.iter().sum::<u32>();
            out.add_term(*k, b.clone(), u.scale(&int(h as i64)));
        }
        out
    }

    /// Monomials in (q, p) with ν-power, coefficient.
    pub fn monomials(&self) -> Vec<(u32, Vec<u32>, Vec<u32>, Scalar)> {
        let mut out = Vec::new();
        for ((k, b), u) in &self.terms {
            for (q, c) in u.terms() {
                out.push((*k, q.clone(), b.clone(), c.clone()));
            }
        }
        out
    }
}

impl std::ops::Add for &PolySection {
    type Output = PolySection;
    fn add(self, rhs: &PolySection) -> PolySection {
        let mut out = self.clone();
        for ((k, b), u) in &rhs.terms {
            out.add_term(*k, b.clone(), u.clone());
        }
        out
    }
}

impl std::ops::Sub for &PolySection {
    type Output = PolySection;
    fn sub(self, rhs: &PolySection) -> PolySection {
        let mut out = self.clone();
        for ((k, b), u) in &rhs.terms {
            out.add_term(*k, b.clone(), -u);
        }
        out
    }
}

impl std::ops::Neg for &PolySection {
    type Output = PolySection;
    fn neg(self) -> PolySection {
        self.scale(&int(-1))
    }
}

/// Commutative pointwise product.
impl std::ops::Mul for &PolySection {
    type Output = PolySection;
    fn mul(self, rhs: &PolySection) -> PolySection {
        let mut out = PolySection::zero(self.n, self.rank);
        for ((ka, ba), ua) in &self.terms {
            for ((kb, bb), ub) in &rhs.terms {
                out.add_term(ka + kb, crate::ring::add_exps(ba, bb), ua * ub);
            }
        }
        out
    }
}

impl Truncate for PolySection {
    fn truncate(&self, t: NuTruncation) -> Self {
        let mut out = Self::zero(self.n, self.rank);
        for ((k, b), u) in &self.terms {
            if *k <= t.max_nu {
                out.add_term(*k, b.clone(), u.clone());
            }
        }
        out
    }
}

impl fmt::Display for PolySection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use std::cmp::Reverse;
        let mut mons = self.monomials();
        mons.sort_by(|x, y| {
            let kx = (x.0, Reverse(x.2.iter().sum::<u32>()), Reverse(&x.2), Reverse(&x.1));
            let ky = (y.0, Reverse(y.2.iter().sum::<u32>()), Reverse(&y.2), Reverse(&y.1));
            kx.cmp(&ky)
        });
        write_sum(
            f,
            mons.iter().map(|(k, q, b, c)| {
                let mut groups = Vec::new();
                groups.extend(nu_text(*k));
                let mut m = monomial_text("q", q);
                m.extend(monomial_text("p", b));
                if !m.is_empty() {
                    groups.push(m.join("*"));
                }
                (c, groups)
            }),
        )
    }
}

/// Parse a polynomial in q, p and nu into a section.
pub fn parse_section(text: &str, n: usize, rank: usize) -> Result<PolySection> {
    let raw = crate::ring::PolyParser::new(n, rank).parse(text)?;
    Ok(section_from_raw(&raw, n, rank))
}

pub(crate) fn section_from_raw(raw: &crate::ring::RawPoly, n: usize, rank: usize) -> PolySection {
    let mut out = PolySection::zero(n, rank);
    for (e, c) in &raw.terms {
        out.add_term(e[n + rank], e[n..n + rank].to_vec(), BasePoly::monomial(e[..n].to_vec(), c.clone()));
    }
    out
}

/// Vector field on E* with polynomial coefficients.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PhaseVectorField {
    pub dq: Vec<PolySection>,
    pub dp: Vec<PolySection>,
}

impl PhaseVectorField {
    pub fn zero(n: usize, rank: usize) -> Self {
        PhaseVectorField {
            dq: vec![PolySection::zero(n, rank); n],
            dp: vec![PolySection::zero(n, rank); rank],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.dq.iter().chain(&self.dp).all(PolySection::is_zero)
    }

    pub fn apply(&self, g: &PolySection) -> PolySection {
        let mut out = PolySection::zero(g.n(), g.rank());
        for (i, c) in self.dq.iter().enumerate() {
            if !c.is_zero() {
                out = &out + &(c * &g.partial_q(i));
            }
        }
        for (a, c) in self.dp.iter().enumerate() {
            if !c.is_zero() {
                out = &out + &(c * &g.partial_p(a));
            }
        }
        out
    }
}

impl fmt::Display for PhaseVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (i, c) in self.dq.iter().enumerate() {
            if !c.is_zero() {
                parts.push(format!("({c}) d/dq{}", i + 1));
            }
        }
        for (a, c) in self.dp.iter().enumerate() {
            if !c.is_zero() {
                parts.push(format!("({c}) d/dp{}", a + 1));
            }
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn wedge_signs() {
        assert_eq!(wedge_masks(0b01, 0b10), Some((0b11, false)));
        assert_eq!(wedge_masks(0b10, 0b01), Some((0b11, true)));
        assert_eq!(wedge_masks(0b01, 0b01), None);
        assert_eq!(wedge_masks(0b101, 0b010), Some((0b111, true)));
    }

    #[test]
    fn section_printing() {
        let s = parse_section("p1*p2 - nu p3/2", 0, 3).unwrap();
        assert_eq!(s.to_string(), "p1*p2 - (1/2) nu p3");
        let t = parse_section("q1 p1 - nu", 1, 1).unwrap();
        assert_eq!(t.to_string(), "q1*p1 - nu");
        assert_eq!(parse_section(&t.to_string(), 1, 1).unwrap(), t);
    }

    #[test]
    fn spurious_entry_from_the_heisenberg_example_is_still_a_lie_algebra() {
        // [e1,e2] = e3 together with [e2,e3] = e1 satisfies Jacobi.
        let mut ch = AlgebroidChart::new("h", 0, 3);
        let one = BasePoly::one(0);
        ch.set_c(0, 1, 2, one.clone());
        ch.set_c(1, 0, 2, -&one);
        ch.set_c(1, 2, 0, one.clone());
        ch.set_c(2, 1, 0, -&one);
        assert!(validate_chart(&ch).is_empty());
        // whereas [e1,e2] = e3, [e1,e3] = e1 does not
        ch.set_c(1, 2, 0, BasePoly::zero(0));
        ch.set_c(2, 1, 0, BasePoly::zero(0));
        ch.set_c(0, 2, 0, one.clone());
        ch.set_c(2, 0, 0, -&one);
        let rep = validate_chart(&ch);
        assert!(rep.iter().any(|l| l.starts_with("Jacobi (1,2,3)")), "{rep:?}");
    }

    #[test]
    fn anchor_violation_is_reported() {
        let mut ch = AlgebroidChart::new("bad", 1, 2);
        ch.set_anchor(0, 0, BasePoly::one(1));
        ch.set_anchor(1, 0, BasePoly::var(1, 0));
        let rep = validate_chart(&ch);
        assert!(rep.iter().any(|l| l.contains("anchor compatibility")), "{rep:?}");
    }

    #[test]
    fn differential_examples() {
        let t2 = fixtures::chart("tangent2");
        let q1 = EFormSeries::function(&BasePoly::var(2, 0), 2);
        let mut e1 = EFormSeries::zero(2, 2);
        e1.add_term(0, 0b01, BasePoly::one(2));
        assert_eq!(q1.d_e(&t2), e1);

        let h = fixtures::chart("heis3");
        let mut e3 = EFormSeries::zero(0, 3);
        e3.add_term(0, 0b100, BasePoly::one(0));
        let mut want = EFormSeries::zero(0, 3);
        want.add_term(0, 0b011, BasePoly::constant(0, int(-1)));
        assert_eq!(e3.d_e(&h), want);
    }

    #[test]
    fn symmetrization() {
        let h = fixtures::chart("heis3");
        let s = Connection::zero(0, 3).symmetrize(&h);
        assert_eq!(s, Connection::half_structure_constants(&h));
        assert_eq!(s.symmetrize(&h), s);
        let a = fixtures::chart("abelian2");
        assert_eq!(Connection::zero(0, 2).symmetrize(&a), Connection::zero(0, 2));
    }

    #[test]
    fn bracket_examples() {
        let h = fixtures::chart("heis3");
        let geo = Geometry::new(h.clone(), Connection::half_structure_constants(&h)).unwrap();
        let p = |a| PolySection::p(0, 3, a);
        let b0 = EFormSeries::zero(0, 3);
        let br = gauged_poisson_bracket(&p(0), &p(1), &geo, &b0).unwrap();
        assert_eq!(br, -&p(2));

        let a2 = fixtures::chart("abelian2");
        let geo2 = Geometry::new(a2, Connection::zero(0, 2)).unwrap();
        let mut b = EFormSeries::zero(0, 2);
        b.add_term(0, 0b11, BasePoly::one(0));
        let br = gauged_poisson_bracket(&PolySection::p(0, 2, 0), &PolySection::p(0, 2, 1), &geo2, &b).unwrap();
        assert_eq!(br, PolySection::constant(0, 2, int(-1)));
    }

    #[test]
    fn non_closed_b0_is_rejected() {
        let t = fixtures::chart("tangent2");
        let geo = Geometry::new(t, Connection::zero(2, 2)).unwrap();
        let mut a = EFormSeries::zero(2, 2);
        a.add_term(0, 0b01, BasePoly::var(2, 1));
        assert!(!a.d_e(&geo.chart).is_zero());
        let f = PolySection::p(2, 2, 0);
        assert!(matches!(
            gauged_poisson_bracket(&f, &f, &geo, &a),
            Err(Error::NotClosed(_))
        ));
    }

    #[test]
    fn hamiltonian_field_examples() {
        let t1 = fixtures::chart("tangent1");
        let x = hamiltonian_field(&PolySection::p(1, 1, 0), &t1);
        assert_eq!(x.dq[0], PolySection::constant(1, 1, int(1)));
        assert!(x.dp[0].is_zero());

        let h = fixtures::chart("heis3");
        let x = hamiltonian_field(&PolySection::p(0, 3, 0), &h);
        assert_eq!(x.dp[1], PolySection::p(0, 3, 2));
        assert!(x.dp[0].is_zero() && x.dp[2].is_zero());

        let a = fixtures::chart("abelian2");
        assert!(hamiltonian_field(&PolySection::constant(0, 2, int(3)), &a).is_zero());
    }

    #[test]
    fn curvature_vanishes_on_flat_examples() {
        let a = fixtures::chart("abelian2");
        let geo = Geometry::new(a, Connection::zero(0, 2)).unwrap();
        assert!(geo.curvature(NuTruncation::uniform(2)).is_zero());
        let t = fixtures::chart("tangent1");
        let geo = Geometry::new(t, Connection::zero(1, 1)).unwrap();
        assert!(geo.curvature(NuTruncation::uniform(2)).is_zero());
    }

    #[test]
    fn torsionful_connection_is_rejected() {
        let h = fixtures::chart("heis3");
        assert!(matches!(Geometry::new(h, Connection::zero(0, 3)), Err(Error::Torsion(_))));
    }
}
