//! Exact Gaussian elimination over the rationals.

use num_traits::{One, Zero};

use crate::ring::Scalar;

/// Row-reduced echelon form of a dense matrix.
#[derive(Clone, Debug)]
pub struct Echelon {
    pub rows: Vec<Vec<Scalar>>,
    /// Pivot column of each nonzero row.
    pub pivots: Vec<usize>,
    pub cols: usize,
}

pub fn echelon(mut m: Vec<Vec<Scalar>>, cols: usize) -> Echelon {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let inv = Scalar::one() / &m[r][c];
        for x in m[r].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= &f * y;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == m.len() {
            break;
        }
    }
    m.truncate(r);
    Echelon { rows: m, pivots, cols }
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// A nonzero vector v with M v = 0, if the columns are dependent.
    pub fn kernel_vector(&self) -> Option<Vec<Scalar>> {
        let free = (0..self.cols).find(|c| !self.pivots.contains(c))?;
        let mut v = vec![Scalar::zero(); self.cols];
        v[free] = Scalar::one();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            v[p] = -row[free].clone();
        }
        Some(v)
    }
}

/// Some solution of M x = b, or None if the system is inconsistent.
pub fn solve(m: &[Vec<Scalar>], b: &[Scalar], cols: usize) -> Option<Vec<Scalar>> {
    let aug: Vec<Vec<Scalar>> = m
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let e = echelon(aug, cols + 1);
    if e.pivots.last() == Some(&cols) {
        return None;
    }
    let mut x = vec![Scalar::zero(); cols];
    for (row, &p) in e.rows.iter().zip(&e.pivots) {
        x[p] = row[cols].clone();
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::int;

    fn m(rows: &[&[i64]]) -> Vec<Vec<Scalar>> {
        rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect()
    }

    #[test]
    fn rank_and_kernel() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6], &[0, 1, 1]]);
        let e = echelon(a.clone(), 3);
        assert_eq!(e.rank(), 2);
        let v = e.kernel_vector().unwrap();
        for row in &a {
            let s: Scalar = row.iter().zip(&v).map(|(x, y)| x * y).sum();
            assert!(s.is_zero());
        }
        assert!(echelon(m(&[&[1, 0], &[0, 1]]), 2).kernel_vector().is_none());
    }

    #[test]
    fn solves_consistent_systems() {
        let a = m(&[&[1, 1], &[1, -1]]);
        assert_eq!(solve(&a, &[int(3), int(1)], 2).unwrap(), vec![int(2), int(1)]);
        let a = m(&[&[1, 1], &[2, 2]]);
        assert!(solve(&a, &[int(1), int(3)], 2).is_none());
    }
}
