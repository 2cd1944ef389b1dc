//! Equivalences between Fedosov star products: gauge change of B inside
//! its class, change of connection, and change of ordering parameter.
//! Each is realized as s ↦ σ(exp((1/ν) ad h) τ(s)) for a suitable h, with
//! closed formulas where they exist.

use num_traits::{One, Zero};

use crate::algebroid::{EFormSeries, Geometry, PolySection};
use crate::error::{Error, Result};
use crate::fedosov::{solve_r, symbol_operator, FedosovSolution};
use crate::report::CheckLine;
use crate::ring::{factorial, int, pow, BasePoly, NuTruncation, Scalar, Truncate};
use crate::wsl::{Degree, WslElement, WslKey};

const SERIES_CAP: u32 = 256;

/// exp((1/ν) ad_κ h) x; the series terminates on polynomial data because
/// each application lowers the p-degree or raises the total degree.
pub fn exp_ad(h: &WslElement, x: &WslElement, kappa: &Scalar) -> Result<WslElement> {
    let mut out = x.clone();
    let mut cur = x.clone();
    for k in 1..=SERIES_CAP {
        cur = h.nu_ad(&cur, kappa).with_truncation(x.truncation()).scale(&(Scalar::one() / int(k as i64)));
        if cur.is_zero() {
            return Ok(out);
        }
        out = &out + &cur;
    }
    Err(Error::Internal("exponential series did not terminate".into()))
}

/// exp(F(x)) f where F turns u ν^k y^a into u ν^k ∂_p^a.
pub fn exp_symbol(x: &WslElement, f: &PolySection, max_nu: u32) -> Result<PolySection> {
    let mut out = f.clone();
    let mut cur = f.clone();
    for k in 1..=SERIES_CAP {
        cur = symbol_operator(x, &cur, max_nu).scale(&(Scalar::one() / int(k as i64)));
        if cur.is_zero() {
            return Ok(out);
        }
        out = &out + &cur;
    }
    Err(Error::Internal("exp(F(.)) did not terminate".into()))
}

/// Bernoulli numbers B_0..=B_n with B_1 = −½ (x/(eˣ−1) = Σ B_n xⁿ/n!).
pub fn bernoulli(n: usize) -> Vec<Scalar> {
    let mut b = vec![Scalar::one()];
    for m in 1..=n {
        let mut s = Scalar::zero();
        let mut binom = Scalar::one();
        for (k, bk) in b.iter().enumerate() {
            s += &binom * bk;
            binom = binom * int((m + 1 - k) as i64) / int((k + 1) as i64);
        }
        b.push(-s / int((m + 1) as i64));
    }
    b
}

fn require_room(sol: &FedosovSolution) -> Result<()> {
    let t = sol.setup().trunc;
    if t.max_deg < t.max_nu + 1 {
        return Err(Error::Input(format!(
            "equivalences need total_degree >= nu_order + 1 (have T = {}, L = {})",
            t.max_deg, t.max_nu
        )));
    }
    Ok(())
}

fn same_geometry(a: &FedosovSolution, b: &FedosovSolution) -> bool {
    *a.setup().geo.chart == *b.setup().geo.chart && a.setup().trunc == b.setup().trunc
}

/// σ(exp((1/ν) ad h) x) cut at ν^L.
fn project_exp_ad(h: &WslElement, x: &WslElement, kappa: &Scalar, l: u32) -> Result<PolySection> {
    Ok(exp_ad(h, x, kappa)?.sigma().truncate(NuTruncation { max_nu: l, max_deg: l }))
}

/// f ↦ f(q, p + A₀(q)).
pub fn translate(f: &PolySection, a0: &EFormSeries) -> PolySection {
    let (n, rank) = (f.n(), f.rank());
    let shifted: Vec<PolySection> = (0..rank)
        .map(|a| &PolySection::p(n, rank, a) + &PolySection::base(&a0.get(0, 1 << a), rank))
        .collect();
    let mut out = PolySection::zero(n, rank);
    for (k, q, b, c) in f.monomials() {
        let mut term = PolySection::monomial(n, rank, k, q, vec![0; rank], c);
        for (a, &e) in b.iter().enumerate() {
            for _ in 0..e {
                term = &term * &shifted[a];
            }
        }
        out = &out + &term;
    }
    out
}

// ---------------------------------------------------------------- gauge

/// Data of the isomorphism I_A between the products for B and B′ = B − d_E A.
#[derive(Clone, Debug)]
pub struct GaugeData {
    pub a: EFormSeries,
    /// h_A = 𝒟⁻¹(r′ − r − A).
    pub h: WslElement,
    /// Classical part of A.
    pub a0: EFormSeries,
}

/// Builds h_A from the homotopy inverse. `sol` is for B, `sol2` for B′.
pub fn gauge_data(sol: &FedosovSolution, sol2: &FedosovSolution, a: &EFormSeries) -> Result<GaugeData> {
    if !same_geometry(sol, sol2) || sol.setup().kappa != sol2.setup().kappa {
        return Err(Error::Input("gauge change needs the same chart, connection, kappa and truncation".into()));
    }
    if a.iter().any(|((_, m), _)| m.count_ones() != 1) {
        return Err(Error::Input("A must be a one-form".into()));
    }
    let ch = &sol.setup().geo.chart;
    let diff = &(&sol.setup().b - &sol2.setup().b) - &a.d_e(ch);
    if !diff.is_zero() {
        return Err(Error::Rejected(format!("d_E A != B - B'; residual {}", diff.to_string().trim())));
    }
    let t = sol.setup().trunc;
    let x = &(sol2.r() - sol.r()) - &WslElement::from_forms(a, t);
    let h = sol.homotopy_inverse(&x);
    Ok(GaugeData { a: a.clone(), h, a0: a.nu_part(0) })
}

/// Closed form h_A = Σ_m D_s^m A/(m+1)! with A placed in the y-slot.
pub fn gauge_h_closed_form(geo: &Geometry, a: &EFormSeries, t: NuTruncation) -> WslElement {
    let mut cur = WslElement::from_one_form_symmetric(a, t);
    let mut out = WslElement::zero(geo.n(), geo.rank(), t);
    for m in 0..=t.max_deg {
        if cur.is_zero() {
            break;
        }
        out = &out + &cur.scale(&(Scalar::one() / factorial(m + 1)));
        cur = geo.sym_d(&cur);
    }
    out
}

/// φ(νD_s)A = Σ_m (κ^{m+1} − (−(1−κ))^{m+1})/(m+1)! ν^m D_s^m A, to ν^l.
pub fn phi_series(geo: &Geometry, a: &EFormSeries, kappa: &Scalar, l: u32) -> WslElement {
    let t = NuTruncation { max_nu: l, max_deg: 2 * l + 1 };
    let lk = -(Scalar::one() - kappa);
    let mut cur = WslElement::from_one_form_symmetric(a, t);
    let mut out = WslElement::zero(geo.n(), geo.rank(), t);
    for m in 0..=l {
        let c = (pow(kappa, m + 1) - pow(&lk, m + 1)) / factorial(m + 1);
        out = &out + &cur.shift_nu(m).scale(&c);
        cur = geo.sym_d(&cur);
        if cur.is_zero() {
            break;
        }
    }
    out
}

/// I_A s = σ(exp((1/ν) ad h_A) τ(s)), from ⋆_B to ⋆_B′.
pub fn gauge_iso(sol: &FedosovSolution, g: &GaugeData, f: &PolySection) -> Result<PolySection> {
    require_room(sol)?;
    let l = sol.setup().trunc.max_nu;
    project_exp_ad(&g.h, &sol.taylor_for_star(f), &sol.setup().kappa, l)
}

/// I_A s = exp(F(φ(νD_s)A)) s.
pub fn gauge_iso_closed(geo: &Geometry, a: &EFormSeries, kappa: &Scalar, f: &PolySection, l: u32) -> Result<PolySection> {
    exp_symbol(&phi_series(geo, a, kappa, l), f, l)
}

/// I_A = Φ*_{A₀} ∘ exp(F(φ(νD_s)A − A₀)), with Φ_{A₀} the fibre translation.
pub fn gauge_iso_factored(geo: &Geometry, a: &EFormSeries, kappa: &Scalar, f: &PolySection, l: u32) -> Result<PolySection> {
    let a0 = a.nu_part(0);
    let phi = phi_series(geo, a, kappa, l);
    let rest = &phi - &WslElement::from_one_form_symmetric(&a0, phi.truncation());
    Ok(translate(&exp_symbol(&rest, f, l)?, &a0))
}

/// The derivation F(φ(νD_s)A) of ⋆_κ attached to a closed one-form A.
pub fn derivation_from_closed_a(geo: &Geometry, a: &EFormSeries, kappa: &Scalar, f: &PolySection, l: u32) -> Result<PolySection> {
    let d = a.d_e(&geo.chart);
    if !d.is_zero() {
        return Err(Error::NotClosed(d.to_string().trim().to_string()));
    }
    Ok(symbol_operator(&phi_series(geo, a, kappa, l), f, l))
}

/// (1/ν)(u ⋆ f − f ⋆ u), using a solution one ν-order deeper.
pub fn nu_ad_star(sol: &FedosovSolution, u: &PolySection, f: &PolySection) -> Result<PolySection> {
    let l = sol.setup().trunc.max_nu;
    let deep = sol.widened(l + 1)?;
    let c = &deep.star_truncated(u, f) - &deep.star_truncated(f, u);
    if !c.nu_coefficient(0).is_zero() {
        return Err(Error::Internal(format!("star commutator with a base function has a nu^0 part: {c}")));
    }
    Ok(c.unshift_nu(1).expect("checked above").truncate(NuTruncation { max_nu: l, max_deg: l }))
}

/// exp(c · (1/ν) ad_⋆(u)) f for c = 1, or exp(ad_⋆(u)) f when `nu_scaled`.
pub fn inner_automorphism(sol: &FedosovSolution, u: &PolySection, f: &PolySection, nu_scaled: bool) -> Result<PolySection> {
    let l = sol.setup().trunc.max_nu;
    let mut out = f.clone();
    let mut cur = f.clone();
    for k in 1..=SERIES_CAP {
        cur = nu_ad_star(sol, u, &cur)?;
        if nu_scaled {
            cur = cur.shift_nu(1).truncate(NuTruncation { max_nu: l, max_deg: l });
        }
        cur = cur.scale(&(Scalar::one() / int(k as i64)));
        if cur.is_zero() {
            return Ok(out);
        }
        out = &out + &cur;
    }
    Err(Error::Internal("inner automorphism series did not terminate".into()))
}

// ---------------------------------------------------------------- connection change

#[derive(Clone, Debug)]
pub struct ConnectionChange {
    /// S = ½ ΔΓ^γ_{αδ} y^α y^δ p_γ with ΔΓ = Γ − Γ′.
    pub s: WslElement,
    /// T = δS.
    pub t: WslElement,
    pub h: WslElement,
}

/// The element S for the difference of the two connections.
pub fn connection_difference(sol: &FedosovSolution, sol2: &FedosovSolution) -> WslElement {
    let t = sol.setup().trunc;
    let (g1, g2) = (&sol.setup().geo.conn, &sol2.setup().geo.conn);
    let (n, rank) = (sol.setup().n(), sol.setup().rank());
    let mut s = WslElement::zero(n, rank, t);
    for a in 0..rank {
        for d in 0..rank {
            for g in 0..rank {
                let dg = g1.g(a, d, g) - g2.g(a, d, g);
                if dg.is_zero() {
                    continue;
                }
                let mut k = WslKey::unit(rank);
                k.w[a] += 1;
                k.w[d] += 1;
                k.s[g] = 1;
                s.add_term(k, dg.scale(&Scalar::new(1.into(), 2.into())));
            }
        }
    }
    s
}

/// Solves h = δ⁻¹(Dh − (1/ν)[r, h] − Σ_n B_n Xⁿ/n! (T + r′ − r)), X = (1/ν)ad h,
/// for the change from `sol` (∇) to `sol2` (∇′).
pub fn connection_change(sol: &FedosovSolution, sol2: &FedosovSolution) -> Result<ConnectionChange> {
    let (s1, s2) = (sol.setup(), sol2.setup());
    if *s1.geo.chart != *s2.geo.chart || s1.trunc != s2.trunc || s1.kappa != s2.kappa || s1.b != s2.b {
        return Err(Error::Input("connection change needs the same chart, B, kappa and truncation".into()));
    }
    let kappa = &s1.kappa;
    let tr = s1.trunc;
    let s = connection_difference(sol, sol2);
    let t = s.delta();
    let y = &(&t + sol2.r()) - sol.r();
    let bern = bernoulli(tr.max_deg as usize + 2);
    let mut h = WslElement::zero(s1.n(), s1.rank(), tr);
    for _ in 0..=tr.max_deg + 1 {
        let mut series = y.clone();
        let mut cur = y.clone();
        for (k, bk) in bern.iter().enumerate().skip(1) {
            cur = h.nu_ad(&cur, kappa);
            if cur.is_zero() {
                break;
            }
            series = &series + &cur.scale(&(bk / factorial(k as u32)));
        }
        let inner = &(&s1.geo.cov_d(&h) - &sol.r().nu_ad(&h, kappa)) - &series;
        let next = inner.delta_inv();
        if next == h {
            break;
        }
        h = next;
    }
    // T + r′ − r − ((e^X − 1)/X) 𝒟h = 0 up to one degree below T
    let dh = sol.derivation(&h);
    let mut series = dh.clone();
    let mut cur = dh;
    for k in 1..=tr.max_deg + 1 {
        cur = h.nu_ad(&cur, kappa);
        if cur.is_zero() {
            break;
        }
        series = &series + &cur.scale(&(Scalar::one() / factorial(k + 1)));
    }
    let resid = (&y - &series).up_to_deg(tr.max_deg.saturating_sub(1));
    if !resid.is_zero() {
        return Err(Error::Internal(format!("connection-change equation fails:\n{}", resid.dump())));
    }
    Ok(ConnectionChange { s, t, h })
}

/// E s = σ(exp((1/ν) ad h) τ(s)), from ⋆ (∇) to ⋆′ (∇′).
pub fn connection_equivalence(sol: &FedosovSolution, cc: &ConnectionChange, f: &PolySection) -> Result<PolySection> {
    require_room(sol)?;
    let l = sol.setup().trunc.max_nu;
    project_exp_ad(&cc.h, &sol.taylor_for_star(f), &sol.setup().kappa, l)
}

// ---------------------------------------------------------------- ordering change

#[derive(Clone, Debug)]
pub struct OrderingChange {
    pub gamma: EFormSeries,
    pub h: WslElement,
    pub kappa2: Scalar,
}

/// Σ_α Γ^β_{αβ} e^α, the connection trace.
pub fn connection_trace(geo: &Geometry) -> EFormSeries {
    let rank = geo.rank();
    let mut f = EFormSeries::zero(geo.n(), rank);
    for a in 0..rank {
        let mut v = BasePoly::zero(geo.n());
        for b in 0..rank {
            v = &v + geo.conn.g(a, b, b);
        }
        f.add_term(0, 1 << a, v);
    }
    f
}

/// −Δ_fib R as a two-form.
pub fn minus_laplace_curvature(sol: &FedosovSolution) -> EFormSeries {
    sol.curvature().laplace_fib().form_part().scale(&int(-1))
}

/// The one-form γ with d_E γ = −Δ_fib R: the supplied one, or the
/// connection trace with whichever sign satisfies the equation.
pub fn resolve_gamma(sol: &FedosovSolution, gamma: Option<&EFormSeries>) -> Result<EFormSeries> {
    let ch = &sol.setup().geo.chart;
    let target = minus_laplace_curvature(sol);
    let check = |g: &EFormSeries| &g.d_e(ch) - &target;
    match gamma {
        Some(g) => {
            let r = check(g);
            if r.is_zero() {
                Ok(g.clone())
            } else {
                Err(Error::Rejected(format!("d_E gamma != -Delta_fib R; residual {}", r.to_string().trim())))
            }
        }
        None => {
            let c = connection_trace(&sol.setup().geo);
            let (r1, neg) = (check(&c), c.scale(&int(-1)));
            let r2 = check(&neg);
            if r1.is_zero() {
                Ok(c)
            } else if r2.is_zero() {
                Ok(neg)
            } else {
                Err(Error::Rejected(format!(
                    "connection trace solves neither sign: residuals {} | {}",
                    r1.to_string().trim(),
                    r2.to_string().trim()
                )))
            }
        }
    }
}

/// h = −𝒟_{κ′}⁻¹(ν(κ′−κ)(γ + Δ_fib r)). `sol` is at κ, `sol2` at κ′.
pub fn ordering_change(sol: &FedosovSolution, sol2: &FedosovSolution, gamma: Option<&EFormSeries>) -> Result<OrderingChange> {
    if !same_geometry(sol, sol2) || sol.setup().b != sol2.setup().b {
        return Err(Error::Input("ordering change needs the same chart, connection, B and truncation".into()));
    }
    let gamma = resolve_gamma(sol, gamma)?;
    let t = sol.setup().trunc;
    let dk = &sol2.setup().kappa - &sol.setup().kappa;
    let y = (&WslElement::from_forms(&gamma, t) + &sol.r().laplace_fib()).shift_nu(1).scale(&dk);
    let h = -&sol2.homotopy_inverse(&y);
    let resid = (&sol2.derivation(&h) + &y).up_to_deg(t.max_deg.saturating_sub(1));
    if !resid.is_zero() {
        return Err(Error::Internal(format!("ordering-change equation fails:\n{}", resid.dump())));
    }
    Ok(OrderingChange { gamma, h, kappa2: sol2.setup().kappa.clone() })
}

/// N s = σ(exp((1/ν) ad_{κ′} h) M_{κ′−κ} τ_κ(s)), from ⋆_κ to ⋆_{κ′}.
pub fn kappa_equivalence(sol: &FedosovSolution, oc: &OrderingChange, f: &PolySection) -> Result<PolySection> {
    require_room(sol)?;
    let l = sol.setup().trunc.max_nu;
    let dk = &oc.kappa2 - &sol.setup().kappa;
    let x = sol.taylor_for_star(f).m_transform(&dk);
    project_exp_ad(&oc.h, &x, &oc.kappa2, l)
}

/// map(f ⋆₁ g) = map(f) ⋆₂ map(g) on each pair.
pub fn check_intertwining<M>(
    name: &str,
    from: &FedosovSolution,
    to: &FedosovSolution,
    map: M,
    pairs: &[(PolySection, PolySection)],
) -> Result<CheckLine>
where
    M: Fn(&PolySection) -> Result<PolySection>,
{
    for (f, g) in pairs {
        let lhs = map(&from.star_truncated(f, g))?;
        let rhs = to.star_truncated(&map(f)?, &map(g)?);
        if lhs != rhs {
            return Ok(CheckLine::new(name, false, format!("f = {f}; g = {g}; residual {}", &lhs - &rhs)));
        }
    }
    Ok(CheckLine::new(name, true, format!("{} pairs", pairs.len())))
}

/// True if h has p-degree at most one.
pub fn sstar_at_most_one(h: &WslElement) -> bool {
    h.max_of(Degree::SStar) <= 1
}

/// Convenience: solve the κ′ problem sharing everything else with `sol`.
pub fn solve_at_kappa(sol: &FedosovSolution, kappa2: &Scalar) -> Result<FedosovSolution> {
    solve_r(&sol.setup().with_kappa(kappa2.clone()))
}
