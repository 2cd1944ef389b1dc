//! The formal Fedosov algebra: symmetric E*-tensors (y variables) ⊗
//! symmetric E-tensors (p variables) ⊗ E-forms, with a formal parameter ν.
//!
//! Degree conventions: `w` is the y-multidegree, `s` the p-multidegree,
//! `lam` the bitmask of the antisymmetric part, `nu` the ν-power. The
//! total degree is |w| + nu.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};

use crate::algebroid::{mask_text, wedge_masks, EFormSeries, Geometry, PolySection};
use crate::error::{Error, Result};
use crate::ring::{falling, int, pow, total, BasePoly, NuTruncation, Scalar, Truncate};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct WslKey {
    pub w: Vec<u32>,
    pub s: Vec<u32>,
    pub lam: u32,
    pub nu: u32,
}

impl WslKey {
    pub fn unit(rank: usize) -> Self {
        WslKey { w: vec![0; rank], s: vec![0; rank], lam: 0, nu: 0 }
    }

    pub fn deg(&self) -> u32 {
        total(&self.w) + self.nu
    }

    pub fn deg_s(&self) -> u32 {
        total(&self.w)
    }

    pub fn deg_sstar(&self) -> u32 {
        total(&self.s)
    }

    pub fn deg_a(&self) -> u32 {
        self.lam.count_ones()
    }
}

/// Truncated element of the Fedosov algebra.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WslElement {
    n: usize,
    rank: usize,
    trunc: NuTruncation,
    terms: BTreeMap<WslKey, BasePoly>,
}

/// Which degree to weigh terms by in [`WslElement::weighted`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    /// y-degree (symmetric E* part).
    S,
    /// p-degree (symmetric E part).
    SStar,
    /// form degree.
    A,
    /// ν-power.
    Nu,
    /// y-degree plus ν-power.
    Total,
    /// p-degree plus ν-power.
    Homogeneity,
}

impl WslElement {
    pub fn zero(n: usize, rank: usize, trunc: NuTruncation) -> Self {
        WslElement { n, rank, trunc, terms: BTreeMap::new() }
    }

    pub fn one(n: usize, rank: usize, trunc: NuTruncation) -> Self {
        let mut x = Self::zero(n, rank, trunc);
        x.add_term(WslKey::unit(rank), BasePoly::one(n));
        x
    }

    /// A single term; dropped if outside the truncation.
    pub fn term(n: usize, rank: usize, trunc: NuTruncation, key: WslKey, u: BasePoly) -> Self {
        let mut x = Self::zero(n, rank, trunc);
        x.add_term(key, u);
        x
    }

    /// y^(a+1) with unit coefficient.
    pub fn y(n: usize, rank: usize, trunc: NuTruncation, a: usize) -> Self {
        let mut k = WslKey::unit(rank);
        k.w[a] = 1;
        Self::term(n, rank, trunc, k, BasePoly::one(n))
    }

    /// p_(a+1) with unit coefficient.
    pub fn p(n: usize, rank: usize, trunc: NuTruncation, a: usize) -> Self {
        let mut k = WslKey::unit(rank);
        k.s[a] = 1;
        Self::term(n, rank, trunc, k, BasePoly::one(n))
    }

    /// The form e^(a+1).
    pub fn e(n: usize, rank: usize, trunc: NuTruncation, a: usize) -> Self {
        let mut k = WslKey::unit(rank);
        k.lam = 1 << a;
        Self::term(n, rank, trunc, k, BasePoly::one(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn truncation(&self) -> NuTruncation {
        self.trunc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WslKey, &BasePoly)> {
        self.terms.iter()
    }

    pub fn get(&self, key: &WslKey) -> Option<&BasePoly> {
        self.terms.get(key)
    }

    pub fn add_term(&mut self, key: WslKey, u: BasePoly) {
        if u.is_zero() || !self.trunc.keeps(key.nu, key.deg()) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
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

    fn add_scaled(&mut self, key: WslKey, u: &BasePoly, c: &Scalar) {
        if c.is_zero() {
            return;
        }
        self.add_term(key, if c.is_one() { u.clone() } else { u.scale(c) });
    }

    fn empty_like(&self) -> Self {
        Self::zero(self.n, self.rank, self.trunc)
    }

    /// Same terms under a different truncation (terms outside it dropped).
    pub fn with_truncation(&self, t: NuTruncation) -> Self {
        let mut out = Self::zero(self.n, self.rank, t);
        for (k, u) in &self.terms {
            out.add_term(k.clone(), u.clone());
        }
        out
    }

    pub fn scale(&self, c: &Scalar) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            out.add_scaled(k.clone(), u, c);
        }
        out
    }

    pub fn mul_base(&self, u: &BasePoly) -> Self {
        let mut out = self.empty_like();
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v * u);
        }
        out
    }

    /// Multiply by ν^by (terms leaving the truncation are dropped).
    pub fn shift_nu(&self, by: u32) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            let mut k = k.clone();
            k.nu += by;
            out.add_term(k, u.clone());
        }
        out
    }

    /// Divide by ν, failing if some term is not divisible.
    pub fn unshift_nu(&self) -> Result<Self> {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            if k.nu == 0 {
                return Err(Error::Internal(format!(
                    "expected a nu-divisible element, found term {}",
                    dump_line(k, u)
                )));
            }
            let mut k = k.clone();
            k.nu -= 1;
            out.add_term(k, u.clone());
        }
        Ok(out)
    }

    pub fn max_deg(&self) -> Option<u32> {
        self.terms.keys().map(WslKey::deg).max()
    }

    pub fn min_deg(&self) -> Option<u32> {
        self.terms.keys().map(WslKey::deg).min()
    }

    /// Terms of total degree exactly `d`.
    pub fn deg_part(&self, d: u32) -> Self {
        self.filter(|k| k.deg() == d)
    }

    /// Terms of total degree at most `d`.
    pub fn up_to_deg(&self, d: u32) -> Self {
        self.filter(|k| k.deg() <= d)
    }

    pub fn filter(&self, keep: impl Fn(&WslKey) -> bool) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            if keep(k) {
                out.terms.insert(k.clone(), u.clone());
            }
        }
        out
    }

    /// Termwise multiplication by the chosen degree.
    pub fn weighted(&self, d: Degree) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            let w = match d {
                Degree::S => k.deg_s(),
                Degree::SStar => k.deg_sstar(),
                Degree::A => k.deg_a(),
                Degree::Nu => k.nu,
                Degree::Total => k.deg(),
                Degree::Homogeneity => k.deg_sstar() + k.nu,
            };
            out.add_scaled(k.clone(), u, &int(w as i64));
        }
        out
    }

    pub fn max_of(&self, d: Degree) -> u32 {
        self.terms
            .keys()
            .map(|k| match d {
                Degree::S => k.deg_s(),
                Degree::SStar => k.deg_sstar(),
                Degree::A => k.deg_a(),
                Degree::Nu => k.nu,
                Degree::Total => k.deg(),
                Degree::Homogeneity => k.deg_sstar() + k.nu,
            })
            .max()
            .unwrap_or(0)
    }

    /// Embed a section of Sym E (y-degree and form degree zero).
    pub fn from_section(s: &PolySection, t: NuTruncation) -> Self {
        let mut out = Self::zero(s.n(), s.rank(), t);
        for ((k, b), u) in s.iter() {
            out.add_term(WslKey { w: vec![0; s.rank()], s: b.clone(), lam: 0, nu: *k }, u.clone());
        }
        out
    }

    /// Embed E-forms into the form slot.
    pub fn from_forms(f: &EFormSeries, t: NuTruncation) -> Self {
        let mut out = Self::zero(f.n(), f.rank(), t);
        for ((k, m), u) in f.iter() {
            out.add_term(
                WslKey { w: vec![0; f.rank()], s: vec![0; f.rank()], lam: *m, nu: *k },
                u.clone(),
            );
        }
        out
    }

    /// Embed a one-form α_β e^β into the symmetric slot as α_β y^β.
    pub fn from_one_form_symmetric(f: &EFormSeries, t: NuTruncation) -> Self {
        let mut out = Self::zero(f.n(), f.rank(), t);
        for ((k, m), u) in f.iter() {
            if m.count_ones() == 1 {
                let mut key = WslKey::unit(f.rank());
                key.w[m.trailing_zeros() as usize] = 1;
                key.nu = *k;
                out.add_term(key, u.clone());
            }
        }
        out
    }

    /// Projection to y-degree and form degree zero.
    pub fn sigma(&self) -> PolySection {
        let mut out = PolySection::zero(self.n, self.rank);
        for (k, u) in &self.terms {
            if k.lam == 0 && k.deg_s() == 0 {
                out.add_term(k.nu, k.s.clone(), u.clone());
            }
        }
        out
    }

    /// Pure form part (y- and p-degree zero) as an E-form series.
    pub fn form_part(&self) -> EFormSeries {
        let mut out = EFormSeries::zero(self.n, self.rank);
        for (k, u) in &self.terms {
            if k.deg_s() == 0 && k.deg_sstar() == 0 {
                out.add_term(k.nu, k.lam, u.clone());
            }
        }
        out
    }

    /// ∂/∂y^(a+1), the symmetric insertion of e_(a+1).
    pub fn d_y(&self, a: usize) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            if k.w[a] > 0 {
                let mut nk = k.clone();
                nk.w[a] -= 1;
                out.add_scaled(nk, u, &int(k.w[a] as i64));
            }
        }
        out
    }

    /// ∂/∂p_(a+1), the symmetric insertion of e^(a+1).
    pub fn d_p(&self, a: usize) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            if k.s[a] > 0 {
                let mut nk = k.clone();
                nk.s[a] -= 1;
                out.add_scaled(nk, u, &int(k.s[a] as i64));
            }
        }
        out
    }

    /// Left multiplication by y^(a+1).
    pub fn times_y(&self, a: usize) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            let mut nk = k.clone();
            nk.w[a] += 1;
            out.add_term(nk, u.clone());
        }
        out
    }

    /// Left multiplication by the form e^(a+1).
    pub fn wedge_e(&self, a: usize) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            if let Some((m, neg)) = wedge_masks(1 << a, k.lam) {
                let mut nk = k.clone();
                nk.lam = m;
                out.add_term(nk, if neg { -u } else { u.clone() });
            }
        }
        out
    }

    /// Antisymmetric insertion of e_(a+1) (odd derivation).
    pub fn insert_a(&self, a: usize) -> Self {
        let mut out = self.empty_like();
        for (k, u) in &self.terms {
            if k.lam & (1 << a) != 0 {
                let below = (k.lam & ((1 << a) - 1)).count_ones();
                let mut nk = k.clone();
                nk.lam &= !(1 << a);
                out.add_term(nk, if below % 2 == 1 { -u } else { u.clone() });
            }
        }
        out
    }

    /// δ = e^α ∧ ∂/∂y^α.
    pub fn delta(&self) -> Self {
        let mut out = self.empty_like();
        for a in 0..self.rank {
            out = &out + &self.d_y(a).wedge_e(a);
        }
        out
    }

    /// δ* = y^α i_a(e_α).
    pub fn delta_star(&self) -> Self {
        let mut out = self.empty_like();
        for a in 0..self.rank {
            out = &out + &self.insert_a(a).times_y(a);
        }
        out
    }

    /// δ⁻¹ = δ*/(k+ℓ) on y-degree k and form degree ℓ, zero when k+ℓ = 0.
    pub fn delta_inv(&self) -> Self {
        let ds = self.delta_star();
        let mut out = self.empty_like();
        for (k, u) in &ds.terms {
            let kl = k.deg_s() + k.deg_a();
            debug_assert!(kl > 0);
            out.add_term(k.clone(), u.scale(&Scalar::new(1.into(), (kl as i64).into())));
        }
        out
    }

    /// Undeformed product μ with the super-sign of the form part.
    pub fn mu_product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.product_impl(other, None, false, self.trunc))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.rank != other.rank {
            return Err(Error::Arity { expected: self.rank, found: other.rank });
        }
        if self.trunc != other.trunc {
            return Err(Error::Truncation(format!("{:?} vs {:?}", self.trunc, other.trunc)));
        }
        Ok(())
    }

    fn common_trunc(&self, other: &Self) -> NuTruncation {
        assert_eq!((self.n, self.rank), (other.n, other.rank), "element dimensions differ");
        NuTruncation {
            max_nu: self.trunc.max_nu.min(other.trunc.max_nu),
            max_deg: self.trunc.max_deg.min(other.trunc.max_deg),
        }
    }

    /// The κ-ordered fibrewise product ∘_κ.
    pub fn fib_product(&self, other: &Self, kappa: &Scalar) -> Self {
        let t = self.common_trunc(other);
        self.product_impl(other, Some(kappa), false, t)
    }

    /// Super-commutator [x, y]_κ = x∘y − (−1)^{|x||y|} y∘x.
    pub fn commutator(&self, other: &Self, kappa: &Scalar) -> Self {
        let t = self.common_trunc(other);
        self.commutator_in(other, kappa, t)
    }

    fn commutator_in(&self, other: &Self, kappa: &Scalar, t: NuTruncation) -> Self {
        let xy = self.product_impl(other, Some(kappa), false, t);
        let yx = other.product_impl(self, Some(kappa), true, t);
        &xy - &yx
    }

    /// (1/ν)[x, y]_κ, computed one order deeper and divided exactly.
    pub fn nu_ad(&self, other: &Self, kappa: &Scalar) -> Self {
        let t = self.common_trunc(other);
        let c = self.commutator_in(other, kappa, t.widened());
        c.unshift_nu()
            .expect("fibrewise commutators are divisible by nu")
            .with_truncation(t)
    }

    /// Σ (±) x_i ∘ y_j over term pairs; `swap_sign` applies (−1)^{|x_i||y_j|}.
    fn product_impl(&self, other: &Self, kappa: Option<&Scalar>, swap_sign: bool, t: NuTruncation) -> Self {
        let mut out = Self::zero(self.n, self.rank, t);
        // coefficients of the two contraction types
        let (left, right) = match kappa {
            Some(k) => (-(Scalar::one() - k), k.clone()),
            None => (Scalar::zero(), Scalar::zero()),
        };
        let maxp = (t.max_nu + 1) as usize;
        let lpow: Vec<Scalar> = (0..=maxp).map(|j| pow(&left, j as u32)).collect();
        let rpow: Vec<Scalar> = (0..=maxp).map(|j| pow(&right, j as u32)).collect();
        let rank = self.rank;
        let mut by_deg: BTreeMap<u32, Vec<(&WslKey, &BasePoly)>> = BTreeMap::new();
        for (k, u) in &other.terms {
            by_deg.entry(k.deg()).or_default().push((k, u));
        }
        for (ka, ua) in &self.terms {
            let da = ka.deg();
            for (_, bucket) in by_deg.range(..=t.max_deg.saturating_sub(da)) {
                if da > t.max_deg {
                    break;
                }
                for &(kb, ub) in bucket {
                    let base_nu = ka.nu + kb.nu;
                    if base_nu > t.max_nu {
                        continue;
                    }
                    let Some((lam, mut neg)) = wedge_masks(ka.lam, kb.lam) else {
                        continue;
                    };
                    if swap_sign && ka.deg_a() % 2 == 1 && kb.deg_a() % 2 == 1 {
                        neg = !neg;
                    }
                    let budget = t.max_nu - base_nu;
                    // contractions -(1-κ)ν ∂_p ⊗ ∂_y (mu) and κν ∂_y ⊗ ∂_p (nu')
                    let mu_bound: Vec<u32> = if kappa.is_some() && !left.is_zero() {
                        ka.s.iter().zip(&kb.w).map(|(a, b)| *a.min(b)).collect()
                    } else {
                        vec![0; rank]
                    };
                    let nup_bound: Vec<u32> = if kappa.is_some() && !right.is_zero() {
                        ka.w.iter().zip(&kb.s).map(|(a, b)| *a.min(b)).collect()
                    } else {
                        vec![0; rank]
                    };
                    let mut prod: Option<BasePoly> = None;
                    for mu in bounded_indices(&mu_bound, budget) {
                        let m1 = total(&mu);
                        let c1 = &lpow[m1 as usize] * binom_falling(&ka.s, &kb.w, &mu);
                        for nup in bounded_indices(&nup_bound, budget - m1) {
                            let m2 = total(&nup);
                            let c = &c1 * &rpow[m2 as usize] * binom_falling(&ka.w, &kb.s, &nup);
                            if c.is_zero() {
                                continue;
                            }
                            let key = WslKey {
                                w: (0..rank).map(|i| ka.w[i] - nup[i] + kb.w[i] - mu[i]).collect(),
                                s: (0..rank).map(|i| ka.s[i] - mu[i] + kb.s[i] - nup[i]).collect(),
                                lam,
                                nu: base_nu + m1 + m2,
                            };
                            let p = prod.get_or_insert_with(|| ua * ub);
                            let c = if neg { -c } else { c };
                            out.add_scaled(key, p, &c);
                        }
                    }
                }
            }
        }
        out
    }

    /// σ(x ∘_κ y) without forming the full product: only full contractions
    /// of the y-variables survive the projection.
    pub fn sigma_product(&self, other: &Self, kappa: &Scalar) -> PolySection {
        let t = self.common_trunc(other);
        let left = -(Scalar::one() - kappa);
        let maxp = t.max_nu + 1;
        let lpow: Vec<Scalar> = (0..=maxp).map(|j| pow(&left, j)).collect();
        let rpow: Vec<Scalar> = (0..=maxp).map(|j| pow(kappa, j)).collect();
        let rank = self.rank;
        let mut acc: BTreeMap<(u32, Vec<u32>), BasePoly> = BTreeMap::new();
        let bs: Vec<_> = other.terms.iter().filter(|(k, _)| k.lam == 0).collect();
        for (ka, ua) in self.terms.iter().filter(|(k, _)| k.lam == 0) {
            let wa = total(&ka.w);
            for &(kb, ub) in &bs {
                let wb = total(&kb.w);
                let nu = ka.nu + kb.nu + wa + wb;
                if nu > t.max_nu {
                    continue;
                }
                if (0..rank).any(|i| kb.w[i] > ka.s[i] || ka.w[i] > kb.s[i]) {
                    continue;
                }
                let c = &lpow[wb as usize] * &rpow[wa as usize] * falling(&ka.s, &kb.w) * falling(&kb.s, &ka.w);
                if c.is_zero() {
                    continue;
                }
                let s: Vec<u32> = (0..rank).map(|i| ka.s[i] - kb.w[i] + kb.s[i] - ka.w[i]).collect();
                acc.entry((nu, s)).or_insert_with(|| BasePoly::zero(self.n)).add_assign_scaled(&(ua * ub), &c);
            }
        }
        let mut out = PolySection::zero(self.n, self.rank);
        for ((nu, s), u) in acc {
            out.add_term(nu, s, u);
        }
        out
    }

    /// The fibrewise Laplacian Σ_α ∂/∂p_α ∂/∂y^α.
    pub fn laplace_fib(&self) -> Self {
        let mut out = self.empty_like();
        for a in 0..self.rank {
            out = &out + &self.d_y(a).d_p(a);
        }
        out
    }

    /// exp(ν·dk·Δ_fib), the ordering change ∘_κ → ∘_{κ+dk}.
    pub fn m_transform(&self, dk: &Scalar) -> Self {
        let mut out = self.clone();
        let mut cur = self.clone();
        let mut j = 1;
        loop {
            cur = cur.laplace_fib().shift_nu(1).scale(&(dk / int(j)));
            if cur.is_zero() {
                return out;
            }
            out = &out + &cur;
            j += 1;
        }
    }

    /// Canonical debug dump, one sorted line per key.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (k, u) in &self.terms {
            s.push_str(&dump_line(k, u));
            s.push('\n');
        }
        s
    }
}

fn dump_line(k: &WslKey, u: &BasePoly) -> String {
    let list = |v: &[u32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    format!("W[{}] S[{}] L[{}] nu^{} : {}", list(&k.w), list(&k.s), mask_text(k.lam), k.nu, u)
}

impl fmt::Display for WslElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return writeln!(f, "0");
        }
        write!(f, "{}", self.dump())
    }
}

/// binom(a, m) * falling(b, m) = falling(a,m) falling(b,m) / m!.
fn binom_falling(a: &[u32], b: &[u32], m: &[u32]) -> Scalar {
    let mut c = falling(a, m) * falling(b, m);
    for &k in m {
        for j in 2..=k {
            c /= int(j as i64);
        }
    }
    c
}

/// Multi-indices m ≤ bound with |m| ≤ budget.
fn bounded_indices(bound: &[u32], budget: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(bound.len())];
    let mut used = vec![0u32];
    for &b in bound {
        let mut next = Vec::new();
        let mut next_used = Vec::new();
        for (v, &u) in out.iter().zip(&used) {
            for k in 0..=b.min(budget - u) {
                let mut w = v.clone();
                w.push(k);
                next.push(w);
                next_used.push(u + k);
            }
        }
        out = next;
        used = next_used;
    }
    out
}

impl std::ops::Add for &WslElement {
    type Output = WslElement;
    fn add(self, rhs: &WslElement) -> WslElement {
        assert_eq!((self.n, self.rank), (rhs.n, rhs.rank), "element dimensions differ");
        let mut out = self.clone();
        for (k, u) in &rhs.terms {
            out.add_term(k.clone(), u.clone());
        }
        out
    }
}

impl std::ops::Sub for &WslElement {
    type Output = WslElement;
    fn sub(self, rhs: &WslElement) -> WslElement {
        assert_eq!((self.n, self.rank), (rhs.n, rhs.rank), "element dimensions differ");
        let mut out = self.clone();
        for (k, u) in &rhs.terms {
            out.add_term(k.clone(), -u);
        }
        out
    }
}

impl std::ops::Neg for &WslElement {
    type Output = WslElement;
    fn neg(self) -> WslElement {
        self.scale(&int(-1))
    }
}

impl Truncate for WslElement {
    fn truncate(&self, t: NuTruncation) -> Self {
        self.with_truncation(t)
    }
}

impl Geometry {
    /// ∇_{e_α} acting on all tensor slots.
    pub fn nabla(&self, alpha: usize, x: &WslElement) -> WslElement {
        let ch = &self.chart;
        let cn = &self.conn;
        let r = ch.rank;
        let mut out = x.empty_like();
        for (k, u) in &x.terms {
            out.add_term(k.clone(), ch.rho(alpha, u));
            for b in 0..r {
                if k.w[b] > 0 {
                    // ∇_α y^b = -Γ^b_{αγ} y^γ
                    for g in 0..r {
                        let gm = cn.g(alpha, g, b);
                        if gm.is_zero() {
                            continue;
                        }
                        let mut nk = k.clone();
                        nk.w[b] -= 1;
                        nk.w[g] += 1;
                        out.add_term(nk, (u * gm).scale(&int(-(k.w[b] as i64))));
                    }
                }
                if k.s[b] > 0 {
                    // ∇_α p_b = Γ^γ_{αb} p_γ
                    for g in 0..r {
                        let gm = cn.g(alpha, b, g);
                        if gm.is_zero() {
                            continue;
                        }
                        let mut nk = k.clone();
                        nk.s[b] -= 1;
                        nk.s[g] += 1;
                        out.add_term(nk, (u * gm).scale(&int(k.s[b] as i64)));
                    }
                }
                if k.lam & (1 << b) != 0 {
                    // ∇_α e^b = -Γ^b_{αγ} e^γ, in place
                    let below = (k.lam & ((1 << b) - 1)).count_ones() % 2 == 1;
                    let rest = k.lam & !(1 << b);
                    for g in 0..r {
                        let gm = cn.g(alpha, g, b);
                        if gm.is_zero() {
                            continue;
                        }
                        let Some((m, s)) = wedge_masks(1 << g, rest) else {
                            continue;
                        };
                        let mut nk = k.clone();
                        nk.lam = m;
                        let neg = !(below ^ s);
                        let v = u * gm;
                        out.add_term(nk, if neg { -&v } else { v });
                    }
                }
            }
        }
        out
    }

    /// D = e^α ∧ ∇_{e_α}.
    pub fn cov_d(&self, x: &WslElement) -> WslElement {
        let mut out = x.empty_like();
        for a in 0..self.rank() {
            out = &out + &self.nabla(a, x).wedge_e(a);
        }
        out
    }

    /// D_s = y^α ∇_{e_α}, the symmetric covariant derivative.
    pub fn sym_d(&self, x: &WslElement) -> WslElement {
        let mut out = x.empty_like();
        for a in 0..self.rank() {
            out = &out + &self.nabla(a, x).times_y(a);
        }
        out
    }
}

/// D for an arbitrary connection; rejects torsion.
pub fn cov_d(x: &WslElement, chart: &crate::algebroid::ValidChart, conn: &crate::algebroid::Connection) -> Result<WslElement> {
    let geo = Geometry::new(chart.clone(), conn.clone())?;
    Ok(geo.cov_d(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::rat;

    fn t(l: u32) -> NuTruncation {
        NuTruncation::uniform(l)
    }

    #[test]
    fn single_contraction_product() {
        let tr = t(3);
        let x = WslElement::p(0, 1, tr, 0);
        let y = WslElement::y(0, 1, tr, 0);
        for k in [rat(0, 1), rat(1, 2), rat(1, 1), rat(3, 7)] {
            let prod = x.fib_product(&y, &k);
            let mut want = WslElement::term(0, 1, tr, WslKey { w: vec![1], s: vec![1], lam: 0, nu: 0 }, BasePoly::one(0));
            want.add_term(WslKey { w: vec![0], s: vec![0], lam: 0, nu: 1 }, BasePoly::constant(0, -(int(1) - &k)));
            assert_eq!(prod, want);
            let c = y.commutator(&x, &k);
            assert_eq!(c, WslElement::one(0, 1, tr).shift_nu(1));
        }
    }

    #[test]
    fn form_products_are_super_commutative() {
        let tr = t(2);
        let e1 = WslElement::e(0, 2, tr, 0);
        let e2 = WslElement::e(0, 2, tr, 1);
        assert!(e1.mu_product(&e1).unwrap().is_zero());
        let a = e1.mu_product(&e2).unwrap();
        let b = e2.mu_product(&e1).unwrap();
        assert_eq!(a, -&b);
        assert_eq!(a.iter().next().unwrap().0.lam, 0b11);
        let y1 = WslElement::y(0, 2, tr, 0);
        let yy = y1.mu_product(&y1).unwrap();
        assert_eq!(yy.iter().next().unwrap().0.w, vec![2, 0]);
        assert!(matches!(e1.mu_product(&e1.with_truncation(t(3))), Err(Error::Truncation(_))));
    }

    #[test]
    fn delta_examples() {
        let tr = t(2);
        let y1 = WslElement::y(0, 1, tr, 0);
        let e1 = WslElement::e(0, 1, tr, 0);
        assert_eq!(y1.delta(), e1);
        assert_eq!(e1.delta_inv(), y1);
        let p1 = WslElement::p(0, 1, tr, 0);
        assert_eq!(p1.sigma(), PolySection::p(0, 1, 0));
        assert!(y1.fib_product(&p1, &rat(1, 2)).up_to_deg(1).filter(|k| k.nu == 0).sigma().is_zero());
    }

    #[test]
    fn laplacian_and_m_transform() {
        let tr = t(2);
        let x = WslElement::term(0, 1, tr, WslKey { w: vec![1], s: vec![1], lam: 0, nu: 0 }, BasePoly::one(0));
        assert_eq!(x.laplace_fib(), WslElement::one(0, 1, tr));
        assert!(WslElement::e(0, 1, tr, 0).laplace_fib().is_zero());
        assert_eq!(x.m_transform(&rat(0, 1)), x);
    }
}
