//! Structural identities of the Fedosov algebra and of the solution r,
//! checked on seeded random elements.

use crate::algebroid::{EFormSeries, Geometry};
use crate::error::Result;
use crate::fedosov::{solve_r, solve_r_kappa_full, FedosovSetup, FedosovSolution};
use crate::random::Gen;
use crate::report::{CheckLine, Report};
use crate::ring::{int, rat, NuTruncation, Scalar};
use crate::wsl::{Degree, WslElement};

fn first_bad<T>(items: impl IntoIterator<Item = T>, mut check: impl FnMut(T) -> Option<String>) -> Option<String> {
    items.into_iter().find_map(&mut check)
}

fn line(name: &str, fail: Option<String>, ok: String) -> CheckLine {
    match fail {
        None => CheckLine::new(name, true, ok),
        Some(m) => CheckLine::new(name, false, m),
    }
}

/// The projection σ inside the algebra: y-degree 0 and form degree 0.
pub fn sigma_projection(x: &WslElement) -> WslElement {
    x.filter(|k| k.deg_s() == 0 && k.lam == 0)
}

fn all_form_degrees(rank: usize) -> Vec<u32> {
    (0..=rank as u32).collect()
}

/// δδ⁻¹ + δ⁻¹δ + σ = id on random elements, below the truncation edge where
/// δ⁻¹ would leave the truncation.
pub fn check_delta_homotopy(n: usize, rank: usize, t: NuTruncation, seed: u64, count: usize) -> CheckLine {
    let mut gen = Gen::new(seed);
    let xs: Vec<WslElement> = (0..count).map(|_| gen.wsl(n, rank, t, 3, &all_form_degrees(rank), 4)).collect();
    let cut = t.max_deg.saturating_sub(1);
    let fail = first_bad(&xs, |x| {
        let lhs = &(&x.delta_inv().delta() + &x.delta().delta_inv()) + &sigma_projection(x);
        let diff = (&lhs - x).up_to_deg(cut);
        (!diff.is_zero()).then(|| format!("x =\n{}residual\n{}", x.dump(), diff.dump()))
    });
    line("delta homotopy", fail, format!("{count} elements, Deg <= {cut}"))
}

/// 𝒟𝒟⁻¹ + 𝒟⁻¹𝒟 + Σ Kⁿσ = id on random elements, below the truncation edge.
pub fn check_derivation_homotopy(sol: &FedosovSolution, seed: u64, count: usize) -> CheckLine {
    let t = sol.setup().trunc;
    let (n, rank) = (sol.setup().n(), sol.setup().rank());
    let mut gen = Gen::new(seed);
    let xs: Vec<WslElement> = (0..count).map(|_| gen.wsl(n, rank, t, 2, &all_form_degrees(rank), 3)).collect();
    let cut = t.max_deg.saturating_sub(1);
    let fail = first_bad(&xs, |x| {
        let a = sol.derivation(&sol.homotopy_inverse(x));
        let b = sol.homotopy_inverse(&sol.derivation(x));
        let lhs = &(&sol.homotopy_projection(x) + &a) + &b;
        let diff = (&lhs - x).up_to_deg(cut);
        (!diff.is_zero()).then(|| format!("x =\n{}residual\n{}", x.dump(), diff.dump()))
    });
    line("derivation homotopy", fail, format!("{count} elements, Deg <= {cut}"))
}

/// 𝒟² = 0 below the truncation edge.
pub fn check_derivation_squares_to_zero(sol: &FedosovSolution, seed: u64, count: usize) -> CheckLine {
    let t = sol.setup().trunc;
    let (n, rank) = (sol.setup().n(), sol.setup().rank());
    let mut gen = Gen::new(seed);
    let cut = t.max_deg.saturating_sub(2);
    let fail = first_bad(0..count, |_| {
        let x = gen.wsl(n, rank, t, 2, &all_form_degrees(rank), 3);
        let d2 = sol.derivation(&sol.derivation(&x)).up_to_deg(cut);
        (!d2.is_zero()).then(|| format!("x =\n{}D^2 x =\n{}", x.dump(), d2.dump()))
    });
    line("derivation squares to zero", fail, format!("{count} elements, Deg <= {cut}"))
}

fn parity(x: &WslElement) -> Option<u32> {
    let mut it = x.iter().map(|(k, _)| k.deg_a() % 2);
    let first = it.next()?;
    it.all(|p| p == first).then_some(first)
}

/// ∘_κ associativity on random triples.
pub fn check_fibre_associativity(n: usize, rank: usize, t: NuTruncation, kappa: &Scalar, seed: u64, count: usize) -> CheckLine {
    let mut gen = Gen::new(seed);
    let fd = all_form_degrees(rank);
    let fail = first_bad(0..count, |_| {
        let (a, b, c) = (gen.wsl(n, rank, t, 2, &fd, 3), gen.wsl(n, rank, t, 2, &fd, 3), gen.wsl(n, rank, t, 2, &fd, 3));
        let l = a.fib_product(&b, kappa).fib_product(&c, kappa);
        let r = a.fib_product(&b.fib_product(&c, kappa), kappa);
        (l != r).then(|| format!("kappa = {kappa}: a =\n{}b =\n{}c =\n{}", a.dump(), b.dump(), c.dump()))
    });
    line(&format!("fibre associativity kappa={kappa}"), fail, format!("{count} triples"))
}

/// M_{κ′−κ}(a ∘_κ b) = M a ∘_κ′ M b.
pub fn check_m_transform(n: usize, rank: usize, t: NuTruncation, kappa: &Scalar, kappa2: &Scalar, seed: u64, count: usize) -> CheckLine {
    let mut gen = Gen::new(seed);
    let fd = all_form_degrees(rank);
    let dk = kappa2 - kappa;
    let fail = first_bad(0..count, |_| {
        let (a, b) = (gen.wsl(n, rank, t, 2, &fd, 3), gen.wsl(n, rank, t, 2, &fd, 3));
        let l = a.fib_product(&b, kappa).m_transform(&dk);
        let r = a.m_transform(&dk).fib_product(&b.m_transform(&dk), kappa2);
        (l != r).then(|| format!("a =\n{}b =\n{}", a.dump(), b.dump()))
    });
    line(&format!("ordering change {kappa} -> {kappa2}"), fail, format!("{count} pairs"))
}

/// D(a∘b) = Da∘b + (−1)^{|a|} a∘Db and δD + Dδ = 0.
pub fn check_covariant_derivative(geo: &Geometry, t: NuTruncation, kappa: &Scalar, seed: u64, count: usize) -> Report {
    let (n, rank) = (geo.n(), geo.rank());
    let mut gen = Gen::new(seed);
    let mut rep = Report::default();
    let mut pairs = Vec::new();
    for i in 0..count {
        let da = (i % (rank + 1)) as u32;
        let db = ((i / 2) % (rank + 1)) as u32;
        pairs.push((gen.wsl(n, rank, t, 2, &[da], 3), gen.wsl(n, rank, t, 2, &[db], 3)));
    }
    let fail = first_bad(&pairs, |(a, b)| {
        let sign = if parity(a).unwrap_or(0) == 1 { int(-1) } else { int(1) };
        let l = geo.cov_d(&a.fib_product(b, kappa));
        let r = &geo.cov_d(a).fib_product(b, kappa) + &a.fib_product(&geo.cov_d(b), kappa).scale(&sign);
        (l != r).then(|| format!("a =\n{}b =\n{}", a.dump(), b.dump()))
    });
    rep.push(line("D super-derivation", fail, format!("{count} pairs")));
    let fd = all_form_degrees(rank);
    let fail = first_bad(0..count, |_| {
        let x = gen.wsl(n, rank, t, 3, &fd, 4);
        let c = &geo.cov_d(&x).delta() + &geo.cov_d(&x.delta());
        (!c.is_zero()).then(|| format!("x =\n{}[delta, D] x =\n{}", x.dump(), c.dump()))
    });
    rep.push(line("delta D + D delta = 0", fail, format!("{count} elements")));
    rep
}

/// Both r equations, κ-independence, deg_s* r ≤ 1 and the r₀/r₁ split.
pub fn check_r_structure(setup: &FedosovSetup) -> Result<Report> {
    let mut rep = Report::default();
    let sol = solve_r(setup)?;
    let cut = setup.trunc.max_deg.saturating_sub(1);
    rep.push(match sol.verify() {
        Ok(()) => CheckLine::new("r equations", true, format!("delta r = D r - (1/2nu)[r, r] - R + B up to Deg {cut}, delta^-1 r = 0")),
        Err(e) => CheckLine::new("r equations", false, e.to_string()),
    });
    let kappas = [rat(0, 1), rat(1, 2), rat(1, 1)];
    let mut same = true;
    for k in &kappas {
        let s = setup.with_kappa(k.clone());
        same &= solve_r(&s)?.r() == sol.r() && solve_r_kappa_full(&s) == *sol.r();
    }
    rep.push(CheckLine::new("r kappa-independent", same, "kappa in {0, 1/2, 1}, both recursions"));
    let ss = sol.r().max_of(Degree::SStar);
    rep.push(CheckLine::new("deg_s* r <= 1", ss <= 1, format!("max p-degree {ss}")));
    let doubled = FedosovSetup { b: setup.b.scale(&int(2)), ..setup.clone() };
    let zero = FedosovSetup { b: EFormSeries::zero(setup.n(), setup.rank()), ..setup.clone() };
    let s2 = solve_r(&doubled)?;
    let s0 = solve_r(&zero)?;
    let lin = s2.r0() == sol.r0().scale(&int(2)) && s0.r0().is_zero();
    let indep = s2.r1() == sol.r1() && s0.r1() == sol.r1();
    rep.push(CheckLine::new("r0 linear in B", lin, "r0(2B) = 2 r0(B), r0(0) = 0"));
    rep.push(CheckLine::new("r1 independent of B", indep, "r1(2B) = r1(0) = r1(B)"));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::Connection;
    use crate::fixtures::chart;

    fn setup(name: &str, l: u32, t: u32) -> FedosovSetup {
        let ch = chart(name);
        let conn = Connection::half_structure_constants(&ch);
        let (n, r) = (ch.n, ch.rank);
        FedosovSetup::new(Geometry::new(ch, conn).unwrap(), EFormSeries::zero(n, r), rat(1, 2), NuTruncation::new(l, t).unwrap()).unwrap()
    }

    #[test]
    fn homotopies_on_so3_and_rank2() {
        for name in ["so3", "rank2"] {
            let s = setup(name, 2, 4);
            let l = check_delta_homotopy(s.n(), s.rank(), s.trunc, 1, 20);
            assert!(l.pass, "{name}: {l}");
            let sol = solve_r(&s).unwrap();
            let l = check_derivation_homotopy(&sol, 2, 10);
            assert!(l.pass, "{name}: {l}");
            let l = check_derivation_squares_to_zero(&sol, 3, 10);
            assert!(l.pass, "{name}: {l}");
        }
    }

    #[test]
    fn fibre_algebra_identities() {
        let s = setup("rank2", 2, 4);
        for k in [rat(0, 1), rat(1, 2), rat(1, 1)] {
            let l = check_fibre_associativity(1, 2, s.trunc, &k, 4, 10);
            assert!(l.pass, "{l}");
        }
        let l = check_m_transform(1, 2, s.trunc, &rat(0, 1), &rat(1, 2), 5, 10);
        assert!(l.pass, "{l}");
        let rep = check_covariant_derivative(&s.geo, s.trunc, &rat(1, 2), 6, 10);
        assert!(rep.all_pass(), "{rep}");
    }

    #[test]
    fn r_structure_with_b() {
        let mut s = setup("so3", 2, 4);
        let mut b = EFormSeries::zero(0, 3);
        b.add_wedge(1, &[0, 1], crate::ring::BasePoly::one(0));
        b.add_wedge(0, &[1, 2], crate::ring::BasePoly::one(0));
        s = FedosovSetup::new(s.geo.clone(), b, s.kappa.clone(), s.trunc).unwrap();
        let rep = check_r_structure(&s).unwrap();
        assert!(rep.all_pass(), "{rep}");
    }
}
