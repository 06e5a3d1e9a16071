//! Complex banded LU with partial pivoting.
//!
//! Row `i` stores columns `i−kl ..= i+kl+ku`; the extra `kl` superdiagonals
//! absorb fill-in from row interchanges.

use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![C64::new(0.0, 0.0); n * width] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + j + self.kl - i
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.slot(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.slot(i, j);
        self.data[k] = v;
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting. A zero pivot reports its
    /// column as `SingularStep { step: 0, column }`.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].norm();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularStep { step: 0, column: k });
            }
            pivots.push(p);
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                let m = self.data[s] / pivot;
                self.data[s] = m;
                if m == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.data[self.slot(k, j)];
                    let t = self.slot(i, j);
                    self.data[t] -= m * u;
                }
            }
        }
        Ok(BandedLu { lu: self, pivots })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    lu: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn size(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let m = &self.lu;
        let n = m.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + m.kl).min(n - 1) {
                b[i] -= m.data[m.slot(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + m.kl + m.ku).min(n - 1) {
                acc -= m.data[m.slot(k, j)] * b[j];
            }
            b[k] = acc / m.data[m.slot(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> (BandedMatrix, Vec<Vec<C64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandedMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m.set(i, j, v);
                dense[i][j] = v;
            }
        }
        (m, dense)
    }

    #[test]
    fn solves_random_systems_against_dense_product() {
        for (seed, (n, kl, ku)) in [(12usize, 3usize, 3usize), (40, 3, 3), (17, 1, 2), (9, 2, 0)].into_iter().enumerate() {
            let (m, dense) = random_banded(n, kl, ku, seed as u64);
            let x: Vec<C64> = (0..n).map(|i| c(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
            let b: Vec<C64> = (0..n).map(|i| (0..n).map(|j| dense[i][j] * x[j]).sum()).collect();
            assert_eq!(m.mul_vec(&x).len(), n);
            let lu = m.factorize().unwrap();
            let mut sol = b.clone();
            lu.solve_in_place(&mut sol);
            let err = sol.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} kl={kl} ku={ku}: err {err}");
        }
    }

    #[test]
    fn zero_leading_pivot_requires_interchange() {
        // [[0,1],[1,0]] embedded in a tridiagonal band
        let mut m = BandedMatrix::zeros(3, 1, 1);
        m.set(0, 1, c(1.0, 0.0));
        m.set(1, 0, c(1.0, 0.0));
        m.set(2, 2, c(2.0, 0.0));
        let lu = m.factorize().unwrap();
        let mut b = vec![c(3.0, 0.0), c(4.0, 0.0), c(2.0, 0.0)];
        lu.solve_in_place(&mut b);
        assert_eq!(b, vec![c(4.0, 0.0), c(3.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn singular_matrix_reports_column() {
        let mut m = BandedMatrix::zeros(3, 1, 1);
        m.set(0, 0, c(1.0, 0.0));
        m.set(2, 2, c(1.0, 0.0));
        match m.factorize() {
            Err(Error::SingularStep { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected singular, got {other:?}"),
        }
    }
}
