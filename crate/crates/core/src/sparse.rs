//! Compressed-row complex matrices and a banded LU factorization with
//! partial pivoting (LAPACK `gbtrf` storage layout).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spin::CMatrix;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl CsrMatrix {
    /// Square matrix from (row, col, value) triplets; duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet index out of range");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
                last = Some((r, c));
            }
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != ZERO {
                keep_rows.push(r);
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    /// Upper bound on the spectral radius (largest absolute row sum).
    pub fn gershgorin_radius(&self) -> f64 {
        (0..self.n)
            .map(|r| {
                self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        self.entries().fold((0, 0), |(kl, ku), (r, c, _)| {
            if r > c {
                (kl.max(r - c), ku)
            } else {
                (kl, ku.max(c - r))
            }
        })
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }
}

/// LU factors of `A - shift·I` for a banded `A`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<Complex64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Factor `a - shift·I`. Storage is column-major with `2·kl + ku + 1`
    /// rows per column; the top `kl` rows absorb pivoting fill-in.
    pub fn factor(a: &CsrMatrix, shift: Complex64) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidth();
        let ldab = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![ZERO; ldab * n];
        for (r, c, v) in a.entries() {
            ab[kv + r - c + c * ldab] += v;
        }
        for j in 0..n {
            ab[kv + j * ldab] -= shift;
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv: vec![0; n],
        };
        lu.factor_in_place()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let ldab = self.ldab;
        let mut ju = 0usize;
        for k in 0..n {
            let km = kl.min(n - 1 - k);
            // pivot search in column k, rows k..=k+km
            let col0 = self.idx(k, k);
            let mut p = 0usize;
            let mut best = -1.0f64;
            for i in 0..=km {
                let v = self.ab[col0 + i];
                let mag = v.re.abs() + v.im.abs();
                if mag > best {
                    best = mag;
                    p = i;
                }
            }
            let piv_row = k + p;
            self.ipiv[k] = piv_row;
            if best == 0.0 {
                return Err(Error::SingularMatrix { column: k });
            }
            ju = ju.max((k + self.ku + p).min(n - 1));
            if p != 0 {
                for j in k..=ju {
                    let a = kv + k - j + j * ldab;
                    let b = kv + piv_row - j + j * ldab;
                    self.ab.swap(a, b);
                }
            }
            let inv = Complex64::new(1.0, 0.0) / self.ab[col0];
            for i in 1..=km {
                self.ab[col0 + i] *= inv;
            }
            if km == 0 {
                continue;
            }
            let (head, tail) = self.ab.split_at_mut((k + 1) * ldab);
            let multipliers = &head[col0 + 1..col0 + 1 + km];
            for j in (k + 1)..=ju {
                let base = kv + k - j + (j - k - 1) * ldab;
                let t = tail[base];
                if t == ZERO {
                    continue;
                }
                let target = &mut tail[base + 1..base + 1 + km];
                for (dst, &l) in target.iter_mut().zip(multipliers) {
                    *dst -= l * t;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve (A − shift·I)x = b in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                b.swap(k, p);
            }
            let km = kl.min(n - 1 - k);
            let bk = b[k];
            if bk != ZERO {
                let col0 = self.idx(k, k);
                for i in 1..=km {
                    b[k + i] -= self.ab[col0 + i] * bk;
                }
            }
        }
        for j in (0..n).rev() {
            let diag = self.ab[kv + j * self.ldab];
            b[j] /= diag;
            let bj = b[j];
            if bj == ZERO {
                continue;
            }
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                b[i] -= self.ab[kv + i - j + j * self.ldab] * bj;
            }
        }
    }
}
