//! Seeded generators for random test data. Every generator draws from a
//! ChaCha stream, so equal seeds give equal data on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebroid::{EFormSeries, PolySection};
use crate::ring::{exponents_up_to, rat, BasePoly, NuTruncation, Scalar};
use crate::wsl::{WslElement, WslKey};

pub struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Nonzero small rational, mostly integers.
    pub fn scalar(&mut self) -> Scalar {
        let mut num = self.rng.gen_range(-3i64..=3);
        if num == 0 {
            num = 1;
        }
        let den = if self.rng.gen_bool(0.25) { 2 } else { 1 };
        rat(num, den)
    }

    fn pick_exps(&mut self, len: usize, max_deg: u32) -> Vec<u32> {
        let all = exponents_up_to(len, max_deg);
        all[self.below(all.len())].clone()
    }

    pub fn base_poly(&mut self, n: usize, max_deg: u32, terms: usize) -> BasePoly {
        let mut u = BasePoly::zero(n);
        for _ in 0..terms {
            let e = self.pick_exps(n, max_deg);
            let c = self.scalar();
            u.add_term(e, c);
        }
        u
    }

    /// Random polynomial section with fibre degree ≤ `max_fibre`, base degree
    /// ≤ `max_base` and ν-power ≤ `max_nu`.
    pub fn section(&mut self, n: usize, rank: usize, max_fibre: u32, max_base: u32, max_nu: u32, terms: usize) -> PolySection {
        let mut s = PolySection::zero(n, rank);
        for _ in 0..terms {
            let b = self.pick_exps(rank, max_fibre);
            let k = self.rng.gen_range(0..=max_nu);
            let u = self.base_poly(n, max_base, 1);
            s.add_term(k, b, u);
        }
        s
    }

    /// Random E-form series of form degree `deg`.
    pub fn forms(&mut self, n: usize, rank: usize, deg: u32, max_base: u32, max_nu: u32, terms: usize) -> EFormSeries {
        let masks: Vec<u32> = (0u32..1 << rank).filter(|m| m.count_ones() == deg).collect();
        let mut f = EFormSeries::zero(n, rank);
        if masks.is_empty() {
            return f;
        }
        for _ in 0..terms {
            let m = masks[self.below(masks.len())];
            let k = self.rng.gen_range(0..=max_nu);
            let u = self.base_poly(n, max_base, 1);
            f.add_term(k, m, u);
        }
        f
    }

    /// Random element with y- and p-degree ≤ `max_fibre` and the given form
    /// degrees allowed.
    pub fn wsl(&mut self, n: usize, rank: usize, t: NuTruncation, max_fibre: u32, form_degrees: &[u32], terms: usize) -> WslElement {
        let masks: Vec<u32> = (0u32..1 << rank).filter(|m| form_degrees.contains(&m.count_ones())).collect();
        let mut x = WslElement::zero(n, rank, t);
        for _ in 0..terms {
            let key = WslKey {
                w: self.pick_exps(rank, max_fibre),
                s: self.pick_exps(rank, max_fibre),
                lam: masks[self.below(masks.len())],
                nu: self.rng.gen_range(0..=t.max_nu),
            };
            let u = self.base_poly(n, 1, 1);
            x.add_term(key, u);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = Gen::new(7).section(1, 2, 2, 2, 1, 5);
        let b = Gen::new(7).section(1, 2, 2, 2, 1, 5);
        assert_eq!(a, b);
        assert!(!a.is_zero());
    }
}
