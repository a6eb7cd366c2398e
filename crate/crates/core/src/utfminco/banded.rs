//! Square band matrix with in-place LU factorization (no pivoting).
//!
//! The polynomial boundary-value systems assembled here have nonzero leading
//! principal minors, so Doolittle elimination without row exchanges is
//! stable and keeps all fill-in inside the band.

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.upper, "({i},{j}) outside band");
        i * (self.lower + self.upper + 1) + (j + self.lower - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.lower < i || j > i + self.upper {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Overwrites `self` with its unit-lower/upper LU factors.
    pub fn factorize(&mut self) {
        let n = self.n;
        for k in 0..n.saturating_sub(1) {
            let i_max = (k + self.lower).min(n - 1);
            let pivot = self.get(k, k);
            for i in k + 1..=i_max {
                let v = self.get(i, k);
                if v != 0.0 {
                    self.set(i, k, v / pivot);
                }
            }
            let j_max = (k + self.upper).min(n - 1);
            for j in k + 1..=j_max {
                let ukj = self.get(k, j);
                if ukj == 0.0 {
                    continue;
                }
                for i in k + 1..=i_max {
                    let lik = self.get(i, k);
                    if lik != 0.0 {
                        let v = self.get(i, j) - lik * ukj;
                        self.set(i, j, v);
                    }
                }
            }
        }
    }

    /// Solves `A x = b` in place, one right-hand side per column of `rows`.
    pub fn solve<const M: usize>(&self, rows: &mut [[f64; M]]) {
        let n = self.n;
        assert_eq!(rows.len(), n);
        for j in 0..n {
            let i_max = (j + self.lower).min(n - 1);
            for i in j + 1..=i_max {
                let l = self.get(i, j);
                if l != 0.0 {
                    for c in 0..M {
                        rows[i][c] -= l * rows[j][c];
                    }
                }
            }
        }
        for j in (0..n).rev() {
            let d = self.get(j, j);
            for c in 0..M {
                rows[j][c] /= d;
            }
            let i_min = j.saturating_sub(self.upper);
            for i in i_min..j {
                let u = self.get(i, j);
                if u != 0.0 {
                    for c in 0..M {
                        rows[i][c] -= u * rows[j][c];
                    }
                }
            }
        }
    }

    /// Solves `A^T x = b` in place using the stored factors.
    pub fn solve_adjoint<const M: usize>(&self, rows: &mut [[f64; M]]) {
        let n = self.n;
        assert_eq!(rows.len(), n);
        for j in 0..n {
            let d = self.get(j, j);
            for c in 0..M {
                rows[j][c] /= d;
            }
            let i_max = (j + self.upper).min(n - 1);
            for i in j + 1..=i_max {
                let u = self.get(j, i);
                if u != 0.0 {
                    for c in 0..M {
                        rows[i][c] -= u * rows[j][c];
                    }
                }
            }
        }
        for j in (0..n).rev() {
            let i_min = j.saturating_sub(self.lower);
            for i in i_min..j {
                let l = self.get(j, i);
                if l != 0.0 {
                    for c in 0..M {
                        rows[i][c] -= l * rows[j][c];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, lo: usize, up: usize, rng: &mut ChaCha8Rng) -> (BandedMatrix, DMatrix<f64>) {
        let mut b = BandedMatrix::zeros(n, lo, up);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(lo)..=(i + up).min(n - 1) {
                let v = if i == j { 10.0 + rng.gen::<f64>() } else { rng.gen_range(-1.0..1.0) };
                b.set(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn matches_dense_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 7, 30] {
            let (mut b, d) = random_band(n, 4, 2, &mut rng);
            b.factorize();
            let rhs: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
            let mut x = rhs.clone();
            b.solve(&mut x);
            let mut y = rhs.clone();
            b.solve_adjoint(&mut y);
            let lu = d.clone().lu();
            let dt = d.transpose().lu();
            for c in 0..2 {
                let col = nalgebra::DVector::from_iterator(n, rhs.iter().map(|r| r[c]));
                let xs = lu.solve(&col).unwrap();
                let ys = dt.solve(&col).unwrap();
                for i in 0..n {
                    assert!((xs[i] - x[i][c]).abs() < 1e-12);
                    assert!((ys[i] - y[i][c]).abs() < 1e-12);
                }
            }
        }
    }
}
