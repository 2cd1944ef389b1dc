//! The Fedosov construction: the r-recursion, the Fedosov derivation and its
//! homotopy inverse, Fedosov-Taylor series and the star products on
//! polynomial sections.
//!
//! Exactness: r is computed to total degree T and is exact there. Anything
//! obtained from r by one application of δ is exact one degree lower, so
//! identities are compared on `up_to_deg(T - 1)` (or lower where two
//! lowering steps are involved).

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::algebroid::{gauged_poisson_bracket, EFormSeries, Geometry, PolySection};
use crate::error::{Error, Result};
use crate::random::Gen;
use crate::report::{CheckLine, Report};
use crate::ring::{factorial, int, rat, BasePoly, NuTruncation, Scalar, Truncate};
use crate::wsl::WslElement;

/// Input of the construction: geometry, a closed two-form series B, the
/// ordering parameter κ and the truncation.
#[derive(Clone, Debug)]
pub struct FedosovSetup {
    pub geo: Geometry,
    pub b: EFormSeries,
    pub kappa: Scalar,
    pub trunc: NuTruncation,
}

impl FedosovSetup {
    pub fn new(geo: Geometry, b: EFormSeries, kappa: Scalar, trunc: NuTruncation) -> Result<Self> {
        if b.n() != geo.n() || b.rank() != geo.rank() {
            return Err(Error::Arity { expected: geo.rank(), found: b.rank() });
        }
        if let Some(((k, m), _)) = b.iter().find(|((_, m), _)| m.count_ones() != 2) {
            return Err(Error::Input(format!(
                "B must be a two-form; nu^{k} part has a term of form degree {}",
                m.count_ones()
            )));
        }
        let d = b.d_e(&geo.chart);
        if !d.is_zero() {
            return Err(Error::NotClosed(d.to_string().trim().to_string()));
        }
        Ok(FedosovSetup { geo, b, kappa, trunc })
    }

    pub fn n(&self) -> usize {
        self.geo.n()
    }

    pub fn rank(&self) -> usize {
        self.geo.rank()
    }

    pub fn with_kappa(&self, kappa: Scalar) -> Self {
        FedosovSetup { kappa, ..self.clone() }
    }

    pub fn with_truncation(&self, trunc: NuTruncation) -> Self {
        FedosovSetup { trunc, ..self.clone() }
    }

    /// True if B has no ν⁰ part and is at most linear in ν, the condition
    /// for a homogeneous star product.
    pub fn b_is_homogeneous(&self) -> bool {
        self.b.iter().all(|((k, _), _)| *k == 1)
    }
}

/// Solution of the r-recursion plus everything derived from it.
pub struct FedosovSolution {
    setup: FedosovSetup,
    r: WslElement,
    /// `ledger[m]` is the total-degree-m part of r; `ledger[0] = 0`.
    ledger: Vec<WslElement>,
    curvature: WslElement,
    sstar_le_one: bool,
    tau_cache: Mutex<HashMap<(Vec<u32>, Vec<u32>), Arc<WslElement>>>,
    wider: Mutex<HashMap<u32, Arc<FedosovSolution>>>,
}

impl fmt::Debug for FedosovSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FedosovSolution")
            .field("trunc", &self.setup.trunc)
            .field("kappa", &self.setup.kappa)
            .field("r_terms", &self.r.len())
            .finish()
    }
}

/// Σ_α μ(∂_{p_α} x, ∂_{y^α} y), which equals −(1/ν) x∘_κ y when both are
/// odd and of p-degree at most one.
fn contraction_term(dps: &[WslElement], dys: &[WslElement]) -> Result<WslElement> {
    let mut out = WslElement::zero(dps[0].n(), dps[0].rank(), dps[0].truncation());
    for (dp, dy) in dps.iter().zip(dys) {
        if dp.is_zero() || dy.is_zero() {
            continue;
        }
        out = &out + &dp.mu_product(dy)?;
    }
    Ok(out)
}

/// Solves the r-recursion degree by degree with the κ-free form of the
/// quadratic term, then verifies both defining equations with the full
/// κ-product.
pub fn solve_r(setup: &FedosovSetup) -> Result<FedosovSolution> {
    let t = setup.trunc;
    let (n, rank) = (setup.n(), setup.rank());
    let geo = &setup.geo;
    let bw = WslElement::from_forms(&setup.b, t);
    let curv = geo.curvature(t);
    let zero = WslElement::zero(n, rank, t);
    let mut ledger = vec![zero.clone()];
    let mut dps: Vec<Vec<WslElement>> = vec![vec![zero.clone(); rank]];
    let mut dys: Vec<Vec<WslElement>> = vec![vec![zero.clone(); rank]];
    for m in 1..=t.max_deg as usize {
        let mut rhs = &bw.deg_part(m as u32 - 1) - &curv.deg_part(m as u32 - 1);
        rhs = &rhs + &geo.cov_d(&ledger[m - 1]);
        for i in 1..m {
            rhs = &rhs + &contraction_term(&dps[i], &dys[m - i])?;
        }
        let rm = rhs.delta_inv();
        dps.push((0..rank).map(|a| rm.d_p(a)).collect());
        dys.push((0..rank).map(|a| rm.d_y(a)).collect());
        ledger.push(rm);
    }
    let r = ledger.iter().fold(zero, |acc, x| &acc + x);
    let sstar_le_one = r.max_of(crate::wsl::Degree::SStar) <= 1;
    let sol = FedosovSolution {
        setup: setup.clone(),
        r,
        ledger,
        curvature: curv,
        sstar_le_one,
        tau_cache: Mutex::new(HashMap::new()),
        wider: Mutex::new(HashMap::new()),
    };
    sol.verify()?;
    Ok(sol)
}

/// The same fixed point computed from the κ-dependent form
/// r = δ⁻¹(D r − (1/ν) r∘_κ r − R + B). Used as a cross-check.
pub fn solve_r_kappa_full(setup: &FedosovSetup) -> WslElement {
    let t = setup.trunc;
    let (n, rank) = (setup.n(), setup.rank());
    let geo = &setup.geo;
    let bw = WslElement::from_forms(&setup.b, t);
    let curv = geo.curvature(t);
    let zero = WslElement::zero(n, rank, t);
    let half = rat(1, 2);
    let mut ledger = vec![zero.clone()];
    for m in 1..=t.max_deg as usize {
        let mut rhs = &bw.deg_part(m as u32 - 1) - &curv.deg_part(m as u32 - 1);
        rhs = &rhs + &geo.cov_d(&ledger[m - 1]);
        // Σ_{i+j=m} r^(i)∘r^(j) = ½ Σ_{i+j=m} [r^(i), r^(j)] for odd r
        for i in 1..m {
            let c = ledger[i].nu_ad(&ledger[m - i], &setup.kappa);
            rhs = &rhs - &c.scale(&half);
        }
        ledger.push(rhs.delta_inv());
    }
    ledger.iter().fold(zero, |acc, x| &acc + x)
}

impl FedosovSolution {
    pub fn setup(&self) -> &FedosovSetup {
        &self.setup
    }

    pub fn r(&self) -> &WslElement {
        &self.r
    }

    /// Total-degree-m part of r, for 1 ≤ m ≤ T.
    pub fn r_degree(&self, m: u32) -> &WslElement {
        &self.ledger[m as usize]
    }

    /// Part of r of p-degree zero; linear in B.
    pub fn r0(&self) -> WslElement {
        self.r.filter(|k| k.deg_sstar() == 0)
    }

    /// Part of r of p-degree one; independent of B.
    pub fn r1(&self) -> WslElement {
        self.r.filter(|k| k.deg_sstar() == 1)
    }

    pub fn curvature(&self) -> &WslElement {
        &self.curvature
    }

    /// deg_s*(r) ≤ 1, certified on the computed r.
    pub fn sstar_le_one(&self) -> bool {
        self.sstar_le_one
    }

    fn kappa(&self) -> &Scalar {
        &self.setup.kappa
    }

    /// Both defining equations of r, below the truncation edge.
    pub fn verify(&self) -> Result<()> {
        let t = self.setup.trunc;
        if !self.r.delta_inv().is_zero() {
            return Err(Error::Internal("delta^-1 r != 0".into()));
        }
        let bw = WslElement::from_forms(&self.setup.b, t);
        let quad = self.r.nu_ad(&self.r, self.kappa()).scale(&rat(1, 2));
        let rhs = &(&(&self.setup.geo.cov_d(&self.r) - &quad) - &self.curvature) + &bw;
        let lhs = self.r.delta();
        let cut = t.max_deg.saturating_sub(1);
        let diff = (&lhs - &rhs).up_to_deg(cut);
        if !diff.is_zero() {
            return Err(Error::Internal(format!("r equation fails:\n{}", diff.dump())));
        }
        Ok(())
    }

    /// Compares r with the κ-dependent recursion at each given κ.
    pub fn kappa_certificate(&self, kappas: &[Scalar]) -> bool {
        kappas.iter().all(|k| solve_r_kappa_full(&self.setup.with_kappa(k.clone())) == self.r)
    }

    /// (1/ν)[r, x]_κ.
    fn ad_r(&self, x: &WslElement) -> WslElement {
        self.r.nu_ad(x, self.kappa())
    }

    /// 𝒟x = −δx + Dx − (1/ν)[r, x]_κ.
    pub fn derivation(&self, x: &WslElement) -> WslElement {
        let dx = self.setup.geo.cov_d(x);
        &(&dx - &x.delta()) - &self.ad_r(x).with_truncation(x.truncation())
    }

    /// Q = D − (1/ν)ad(r).
    fn q_op(&self, x: &WslElement) -> WslElement {
        &self.setup.geo.cov_d(x) - &self.ad_r(x).with_truncation(x.truncation())
    }

    /// Σ_n K^n x with K = δ⁻¹Q + Qδ⁻¹; terminates since K raises Deg.
    pub fn geometric_series(&self, x: &WslElement) -> WslElement {
        let mut out = x.clone();
        let mut cur = x.clone();
        for _ in 0..=x.truncation().max_deg + 1 {
            cur = &self.q_op(&cur).delta_inv() + &self.q_op(&cur.delta_inv());
            if cur.is_zero() {
                return out;
            }
            out = &out + &cur;
        }
        debug_assert!(cur.is_zero());
        out
    }

    /// 𝒟⁻¹x = −δ⁻¹ Σ_n K^n x.
    pub fn homotopy_inverse(&self, x: &WslElement) -> WslElement {
        -&self.geometric_series(x).delta_inv()
    }

    /// Third term of the homotopy formula, Σ_n K^n σ(x).
    pub fn homotopy_projection(&self, x: &WslElement) -> WslElement {
        self.geometric_series(&WslElement::from_section(&x.sigma(), x.truncation()))
    }

    /// Fedosov-Taylor series at the setup truncation.
    pub fn taylor(&self, s: &PolySection) -> WslElement {
        self.taylor_in(s, self.setup.trunc)
    }

    /// Fedosov-Taylor series under truncation `t` (max_deg ≤ T), degree by
    /// degree: τ⁽ᵐ⁾ = s⁽ᵐ⁾ + δ⁻¹(Dτ⁽ᵐ⁻¹⁾ − (1/ν) Σ_{i≥1} [r⁽ⁱ⁾, τ⁽ᵐ⁻ⁱ⁾]).
    pub fn taylor_in(&self, s: &PolySection, t: NuTruncation) -> WslElement {
        assert!(t.max_deg <= self.setup.trunc.max_deg, "Taylor series beyond the solved degree");
        let (n, rank) = (self.setup.n(), self.setup.rank());
        let sw = WslElement::from_section(s, t);
        let rs: Vec<WslElement> = self.ledger.iter().map(|x| x.with_truncation(t)).collect();
        let mut parts: Vec<WslElement> = Vec::new();
        for m in 0..=t.max_deg as usize {
            let mut acc = sw.deg_part(m as u32);
            if m > 0 {
                let mut inner = self.setup.geo.cov_d(&parts[m - 1]);
                for i in 1..=m {
                    if rs[i].is_zero() || parts[m - i].is_zero() {
                        continue;
                    }
                    inner = &inner - &rs[i].nu_ad(&parts[m - i], self.kappa());
                }
                acc = &acc + &inner.delta_inv();
            }
            parts.push(acc);
        }
        parts.iter().fold(WslElement::zero(n, rank, t), |a, x| &a + x)
    }

    pub fn star_trunc(&self) -> NuTruncation {
        let l = self.setup.trunc.max_nu;
        NuTruncation { max_nu: l, max_deg: l }
    }

    fn taylor_basis(&self, q: &[u32], b: &[u32]) -> Arc<WslElement> {
        let key = (q.to_vec(), b.to_vec());
        if let Some(x) = self.tau_cache.lock().unwrap().get(&key) {
            return x.clone();
        }
        let (n, rank) = (self.setup.n(), self.setup.rank());
        let s = PolySection::monomial(n, rank, 0, q.to_vec(), b.to_vec(), Scalar::one());
        let x = Arc::new(self.taylor_in(&s, self.star_trunc()));
        self.tau_cache.lock().unwrap().entry(key).or_insert(x).clone()
    }

    /// τ(s) up to total degree L, assembled from cached monomial series.
    pub fn taylor_for_star(&self, s: &PolySection) -> WslElement {
        let t = self.star_trunc();
        let mut out = WslElement::zero(self.setup.n(), self.setup.rank(), t);
        for (k, q, b, c) in s.monomials() {
            if k > t.max_nu {
                continue;
            }
            let x = self.taylor_basis(&q, &b);
            out = &out + &x.scale(&c).shift_nu(k);
        }
        out
    }

    /// f ⋆ g truncated at ν^L, with no sufficiency check.
    pub fn star_truncated(&self, f: &PolySection, g: &PolySection) -> PolySection {
        let tf = self.taylor_for_star(f);
        let tg = self.taylor_for_star(g);
        tf.sigma_product(&tg, self.kappa())
    }

    /// Solution of the same setup at ν-order `l` (and total degree at least
    /// `l`), cached.
    pub fn widened(&self, l: u32) -> Result<Arc<FedosovSolution>> {
        if let Some(s) = self.wider.lock().unwrap().get(&l) {
            return Ok(s.clone());
        }
        let t = NuTruncation { max_nu: l, max_deg: self.setup.trunc.max_deg.max(l) };
        let sol = Arc::new(solve_r(&self.setup.with_truncation(t))?);
        Ok(self.wider.lock().unwrap().entry(l).or_insert(sol).clone())
    }

    /// f ⋆ g with certified completeness. The product is recomputed at
    /// ν-order max(L+1, bound), where bound = (ν-orders + fibre degrees of
    /// the inputs) is the order at which polynomial products terminate; the
    /// ν ≤ L part must agree exactly and nothing may survive beyond L.
    pub fn star(&self, f: &PolySection, g: &PolySection) -> Result<StarResult> {
        let l = self.setup.trunc.max_nu;
        let bound = f.max_nu() + g.max_nu() + f.fibre_degree() + g.fibre_degree();
        let check = bound.max(l + 1);
        let product = self.star_truncated(f, g);
        let full = self.widened(check)?.star_truncated(f, g);
        let low = full.truncate(NuTruncation { max_nu: l, max_deg: l.max(self.setup.trunc.max_deg) });
        if low != product {
            return Err(Error::Internal("star product changed when recomputed at a higher order".into()));
        }
        if let Some(k) = (l + 1..=check).find(|k| !full.nu_coefficient(*k).is_zero()) {
            return Err(Error::InsufficientTruncation(format!(
                "f*g has a nonzero nu^{k} term beyond nu_order = {l}; need nu_order >= {bound}"
            )));
        }
        let coefficients = (0..=l).map(|r| product.nu_coefficient(r)).collect();
        Ok(StarResult { product, coefficients })
    }

    /// π*u ⋆ f (left) or f ⋆ π*u (right) from the closed formulas
    /// F(exp(κνD_s)u) f and F(exp(−(1−κ)νD_s)u) f.
    pub fn base_multiplication(&self, u: &BasePoly, f: &PolySection, left: bool) -> PolySection {
        let l = self.setup.trunc.max_nu;
        let c = if left { self.kappa().clone() } else { -(Scalar::one() - self.kappa()) };
        let x = exp_sym_d(&self.setup.geo, u, &c, l);
        symbol_operator(&x, f, l)
    }
}

/// Σ_k c^k ν^k D_s^k u / k! for k ≤ l.
pub fn exp_sym_d(geo: &Geometry, u: &BasePoly, c: &Scalar, l: u32) -> WslElement {
    let t = NuTruncation { max_nu: l, max_deg: 2 * l };
    let (n, rank) = (geo.n(), geo.rank());
    let mut cur = WslElement::term(n, rank, t, crate::wsl::WslKey::unit(rank), u.clone());
    let mut out = cur.clone();
    for k in 1..=l {
        cur = geo.sym_d(&cur).shift_nu(1).scale(&(c / int(k as i64)));
        if cur.is_zero() {
            break;
        }
        out = &out + &cur;
    }
    out
}

/// exp(D_s)u up to y-degree `max_deg`, without ν.
pub fn exp_sym_d_classical(geo: &Geometry, u: &BasePoly, t: NuTruncation) -> WslElement {
    let (n, rank) = (geo.n(), geo.rank());
    let mut cur = WslElement::term(n, rank, t, crate::wsl::WslKey::unit(rank), u.clone());
    let mut out = cur.clone();
    for k in 1..=t.max_deg {
        cur = geo.sym_d(&cur).scale(&(Scalar::one() / int(k as i64)));
        if cur.is_zero() {
            break;
        }
        out = &out + &cur;
    }
    out
}

/// The operator F: a W-only element u ν^k y^a acts as u ν^k ∂_p^a.
/// Terms with p- or form-degree are ignored by construction of the callers.
pub fn symbol_operator(x: &WslElement, f: &PolySection, max_nu: u32) -> PolySection {
    let (n, rank) = (f.n(), f.rank());
    let mut out = PolySection::zero(n, rank);
    for (k, u) in x.iter() {
        debug_assert!(k.lam == 0 && k.deg_sstar() == 0, "symbol_operator expects W-only input");
        if k.nu > max_nu {
            continue;
        }
        let mut d = f.clone();
        for (a, &e) in k.w.iter().enumerate() {
            for _ in 0..e {
                d = d.partial_p(a);
            }
        }
        if d.is_zero() {
            continue;
        }
        let term = (&PolySection::base(u, rank) * &d).shift_nu(k.nu);
        out = &out + &term;
    }
    out.truncate(NuTruncation { max_nu, max_deg: max_nu })
}

/// A star product together with its ν-expansion coefficients C_r.
#[derive(Clone, Debug, PartialEq)]
pub struct StarResult {
    pub product: PolySection,
    /// `coefficients[r]` is the ν^r coefficient, without the ν-power.
    pub coefficients: Vec<PolySection>,
}

impl StarResult {
    /// For inputs of fibre degrees k and l: C_r has fibre degree ≤ k+l−r
    /// and vanishes for r > k+l.
    pub fn degree_bound_holds(&self, k: u32, l: u32) -> bool {
        self.coefficients.iter().enumerate().all(|(r, c)| {
            let r = r as u32;
            c.is_zero() || (r <= k + l && c.fibre_degree() <= k + l - r)
        })
    }

    pub fn ledger(&self) -> String {
        let mut s = String::new();
        for (r, c) in self.coefficients.iter().enumerate() {
            s += &format!("C{r} = {c}\n");
        }
        s
    }
}

fn first_failure<T: Sync, F>(items: &[T], check: F) -> Option<String>
where
    F: Fn(&T) -> Option<String> + Sync + Send,
{
    let fails: Vec<Option<String>> = items.par_iter().map(check).collect();
    fails.into_iter().flatten().next()
}

/// (f⋆g)⋆h = f⋆(g⋆h) on each triple, exact up to ν^L.
pub fn check_associativity(sol: &FedosovSolution, triples: &[(PolySection, PolySection, PolySection)]) -> CheckLine {
    let fail = first_failure(triples, |(f, g, h)| {
        let a = sol.star_truncated(&sol.star_truncated(f, g), h);
        let b = sol.star_truncated(f, &sol.star_truncated(g, h));
        (a != b).then(|| format!("f = {f}; g = {g}; h = {h}; difference {}", &a - &b))
    });
    CheckLine::new("associativity", fail.is_none(), fail.unwrap_or_else(|| format!("{} triples", triples.len())))
}

/// ν⁰(f⋆g) = fg and the antisymmetrized ν¹ part is the gauged bracket.
pub fn check_classical_limit(sol: &FedosovSolution, pairs: &[(PolySection, PolySection)]) -> Result<CheckLine> {
    let b0 = sol.setup.b.nu_part(0);
    let mut brackets = Vec::new();
    for (f, g) in pairs {
        brackets.push(gauged_poisson_bracket(f, g, &sol.setup.geo, &b0)?);
    }
    let items: Vec<_> = pairs.iter().zip(&brackets).collect();
    let fail = first_failure(&items, |((f, g), br)| {
        let fg = sol.star_truncated(f, g);
        let gf = sol.star_truncated(g, f);
        let prod = (f * g).nu_coefficient(0);
        if fg.nu_coefficient(0) != prod {
            return Some(format!("nu^0 of {f} * {g} is {}", fg.nu_coefficient(0)));
        }
        let anti = &fg.nu_coefficient(1) - &gf.nu_coefficient(1);
        let want = br.nu_coefficient(0);
        (anti != want).then(|| format!("first-order commutator of {f}, {g} is {anti}, bracket {want}"))
    });
    Ok(CheckLine::new("classical-limit", fail.is_none(), fail.unwrap_or_else(|| format!("{} pairs", pairs.len()))))
}

/// Star products with base functions against the closed formulas; for
/// κ = 0 (κ = 1) also the plain product from the left (right).
pub fn check_base_multiplication(sol: &FedosovSolution, pairs: &[(BasePoly, PolySection)]) -> Vec<CheckLine> {
    let rank = sol.setup.rank();
    let kappa = sol.kappa().clone();
    let mut out = Vec::new();
    for left in [true, false] {
        let fail = first_failure(pairs, |(u, f)| {
            let us = PolySection::base(u, rank);
            let star = if left { sol.star_truncated(&us, f) } else { sol.star_truncated(f, &us) };
            let closed = sol.base_multiplication(u, f, left);
            if star != closed {
                return Some(format!("u = {u}; f = {f}: star {star}, closed form {closed}"));
            }
            let plain = (left && kappa.is_zero()) || (!left && kappa.is_one());
            (plain && star != &us * f).then(|| format!("u = {u}; f = {f}: {star} != u f"))
        });
        let name = if left { "left-base-multiplication" } else { "right-base-multiplication" };
        out.push(CheckLine::new(name, fail.is_none(), fail.unwrap_or_else(|| format!("{} pairs", pairs.len()))));
    }
    out
}

/// Whether H = deg_p + deg_ν is a derivation of ⋆ on the pairs; returns a
/// witness when it is not.
pub fn homogeneity_witness(sol: &FedosovSolution, pairs: &[(PolySection, PolySection)]) -> Option<String> {
    first_failure(pairs, |(f, g)| {
        let lhs = sol.star_truncated(f, g).homogeneity();
        let rhs = &sol.star_truncated(&f.homogeneity(), g) + &sol.star_truncated(f, &g.homogeneity());
        (lhs != rhs).then(|| format!("f = {f}; g = {g}; H(f*g) - Hf*g - f*Hg = {}", &lhs - &rhs))
    })
}

/// N(f⋆g) = N(g)⋆N(f) with N: ν ↦ −ν.
pub fn parity_witness(sol: &FedosovSolution, pairs: &[(PolySection, PolySection)]) -> Option<String> {
    first_failure(pairs, |(f, g)| {
        let lhs = sol.star_truncated(f, g).nu_parity();
        let rhs = sol.star_truncated(&g.nu_parity(), &f.nu_parity());
        (lhs != rhs).then(|| format!("f = {f}; g = {g}; difference {}", &lhs - &rhs))
    })
}

fn random_pairs(sol: &FedosovSolution, gen: &mut Gen, trials: usize, max_fibre: u32) -> Vec<(PolySection, PolySection)> {
    let (n, rank) = (sol.setup.n(), sol.setup.rank());
    let base = if n == 0 { 0 } else { 2 };
    (0..trials)
        .map(|_| (gen.section(n, rank, max_fibre, base, 0, 2), gen.section(n, rank, max_fibre, base, 0, 2)))
        .collect()
}

/// Ordering identities, homogeneity and ν-parity on random data.
pub fn ordering_and_parity_checks(sol: &FedosovSolution, seed: u64, trials: usize) -> Report {
    let mut gen = Gen::new(seed);
    let (n, rank) = (sol.setup.n(), sol.setup.rank());
    let mut rep = Report::default();
    let base_pairs: Vec<(BasePoly, PolySection)> = (0..trials)
        .map(|_| {
            let u = gen.base_poly(n, if n == 0 { 0 } else { 2 }, 2);
            (u, gen.section(n, rank, 2, if n == 0 { 0 } else { 1 }, 0, 2))
        })
        .collect();
    for l in check_base_multiplication(sol, &base_pairs) {
        rep.push(l);
    }
    let pairs = random_pairs(sol, &mut gen, trials, 2);
    let predicted = sol.setup.b_is_homogeneous() || sol.setup.b.is_zero();
    let w = homogeneity_witness(sol, &pairs);
    let holds = w.is_none();
    let detail = match &w {
        None => format!("H is a derivation on {} pairs; predicted {}", pairs.len(), yes_no(predicted)),
        Some(w) => format!("H is not a derivation ({w}); predicted {}", yes_no(predicted)),
    };
    rep.push(CheckLine::new("homogeneity", holds == predicted, detail));
    if *sol.kappa() != rat(1, 2) {
        rep.push(CheckLine::new("parity", true, "skipped: kappa != 1/2"));
    } else if !sol.setup.b.is_nu_even() {
        rep.push(CheckLine::new("parity", true, "skipped: B not even in nu"));
    } else {
        let w = parity_witness(sol, &pairs);
        rep.push(CheckLine::new("parity", w.is_none(), w.unwrap_or_else(|| format!("{} pairs", pairs.len()))));
    }
    rep
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Scalar 1/k!.
pub fn inv_factorial(k: u32) -> Scalar {
    Scalar::one() / factorial(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{parse_section, Connection};
    use crate::fixtures::chart;

    fn setup(name: &str, half_c: bool, b: EFormSeries, kappa: Scalar, l: u32, t: u32) -> FedosovSetup {
        let ch = chart(name);
        let conn = if half_c { Connection::half_structure_constants(&ch) } else { Connection::zero(ch.n, ch.rank) };
        let geo = Geometry::new(ch, conn).unwrap();
        FedosovSetup::new(geo, b, kappa, NuTruncation::new(l, t).unwrap()).unwrap()
    }

    fn sec(s: &str, n: usize, r: usize) -> PolySection {
        parse_section(s, n, r).unwrap()
    }

    #[test]
    fn abelian_zero_b_gives_zero_r() {
        let s = setup("abelian2", false, EFormSeries::zero(0, 2), rat(1, 2), 3, 5);
        assert!(solve_r(&s).unwrap().r().is_zero());
    }

    #[test]
    fn abelian_constant_b() {
        let mut b = EFormSeries::zero(0, 2);
        b.add_wedge(0, &[0, 1], BasePoly::one(0));
        let s = setup("abelian2", false, b.clone(), rat(1, 2), 3, 5);
        let sol = solve_r(&s).unwrap();
        let bw = WslElement::from_forms(&b, s.trunc);
        assert_eq!(sol.r(), &bw.delta_inv());
        assert_eq!(sol.r().delta(), bw);
        for k in [rat(0, 1), rat(1, 2), rat(1, 1)] {
            let sol = solve_r(&s.with_kappa(k)).unwrap();
            let f = sec("p1", 0, 2);
            let g = sec("p2", 0, 2);
            let c = &sol.star_truncated(&f, &g) - &sol.star_truncated(&g, &f);
            assert_eq!(c.to_string(), "-nu");
        }
    }

    #[test]
    fn heis3_half_c_is_flat_so_r_vanishes() {
        // two-step nilpotent: every curvature term contains c∘c = 0
        let s = setup("heis3", true, EFormSeries::zero(0, 3), rat(1, 2), 3, 5);
        let sol = solve_r(&s).unwrap();
        assert!(sol.curvature().is_zero());
        assert!(sol.r().is_zero());
    }

    #[test]
    fn so3_r_is_kappa_independent() {
        let s = setup("so3", true, EFormSeries::zero(0, 3), rat(1, 2), 2, 5);
        let sol = solve_r(&s).unwrap();
        assert!(sol.sstar_le_one());
        assert_eq!(sol.r().max_of(crate::wsl::Degree::SStar), 1);
        assert!(sol.kappa_certificate(&[rat(0, 1), rat(1, 2), rat(1, 1)]));
        for k in [rat(0, 1), rat(1, 1)] {
            assert_eq!(solve_r(&s.with_kappa(k)).unwrap().r(), sol.r());
        }
    }

    #[test]
    fn heis3_weyl_commutator() {
        let s = setup("heis3", true, EFormSeries::zero(0, 3), rat(1, 2), 3, 5);
        let sol = solve_r(&s).unwrap();
        let (f, g) = (sec("p1", 0, 3), sec("p2", 0, 3));
        let c = &sol.star_truncated(&f, &g) - &sol.star_truncated(&g, &f);
        assert_eq!(c.to_string(), "-nu p3");
        let st = sol.star(&f, &g).unwrap();
        assert_eq!(st.product.to_string(), "p1*p2 - (1/2) nu p3");
        assert!(st.degree_bound_holds(1, 1));
    }

    #[test]
    fn tangent_standard_ordering() {
        let s = setup("tangent1", false, EFormSeries::zero(1, 1), rat(0, 1), 3, 5);
        let sol = solve_r(&s).unwrap();
        let p = sec("p1", 1, 1);
        let q = sec("q1", 1, 1);
        assert_eq!(sol.star_truncated(&p, &q).to_string(), "q1*p1 - nu");
        assert_eq!(sol.star_truncated(&q, &p).to_string(), "q1*p1");
        let tq = sol.taylor(&q);
        assert_eq!(tq.dump(), "W[0] S[0] L[] nu^0 : q1\nW[1] S[0] L[] nu^0 : 1\n");
    }

    #[test]
    fn taylor_of_constants_and_projection() {
        let s = setup("heis3", true, EFormSeries::zero(0, 3), rat(1, 2), 3, 5);
        let sol = solve_r(&s).unwrap();
        let one = sec("1", 0, 3);
        assert_eq!(sol.taylor(&one), WslElement::one(0, 3, s.trunc));
        let p1 = sec("p1", 0, 3);
        let tp = sol.taylor(&p1);
        assert_eq!(tp.sigma(), p1);
        assert!(sol.derivation(&tp).up_to_deg(4).is_zero());
        assert_eq!(sol.geometric_series(&WslElement::from_section(&p1, s.trunc)), tp);
    }

    #[test]
    fn insufficient_truncation_is_reported() {
        let s = setup("heis3", true, EFormSeries::zero(0, 3), rat(0, 1), 1, 3);
        let sol = solve_r(&s).unwrap();
        let f = sec("p1^2", 0, 3);
        let g = sec("p2^2", 0, 3);
        assert!(matches!(sol.star(&f, &g), Err(Error::InsufficientTruncation(_))));
        assert!(sol.star(&sec("p1", 0, 3), &sec("p2", 0, 3)).is_ok());
    }

    #[test]
    fn rejects_non_closed_b() {
        let mut ch = crate::algebroid::AlgebroidChart::new("tangent3", 3, 3);
        for a in 0..3 {
            ch.set_anchor(a, a, BasePoly::one(3));
        }
        let ch = ch.validate().unwrap();
        let geo = Geometry::new(ch, Connection::zero(3, 3)).unwrap();
        let mut b = EFormSeries::zero(3, 3);
        b.add_wedge(0, &[1, 2], BasePoly::var(3, 0));
        let t = NuTruncation::uniform(2);
        assert!(matches!(FedosovSetup::new(geo.clone(), b, rat(1, 2), t), Err(Error::NotClosed(_))));
        let mut f = EFormSeries::zero(3, 3);
        f.add_wedge(0, &[0], BasePoly::one(3));
        assert!(matches!(FedosovSetup::new(geo, f, rat(1, 2), t), Err(Error::Input(_))));
    }
}
