//! Bit-packed linear algebra over GF(2).
//!
//! Functionals on `l x m` matrices are stored in a single `u64` word: variable
//! `a[i][j]` occupies bit `i * m + j`. The pivot of a nonzero word is its
//! largest set bit, and reduced row echelon forms list rows by descending
//! pivot.

use std::fmt;

use crate::error::{Error, Result};

/// A vector over GF(2) with at most 64 coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    width: usize,
    bits: u64,
}

impl BitVector {
    pub fn zero(width: usize) -> Self {
        assert!(width <= 64, "BitVector width {width} exceeds 64");
        Self { width, bits: 0 }
    }

    /// Builds a vector from a word, masking off bits above `width`.
    pub fn from_word(width: usize, bits: u64) -> Self {
        assert!(width <= 64, "BitVector width {width} exceeds 64");
        Self {
            width,
            bits: bits & low_mask(width),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn word(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, index: usize) -> bool {
        index < self.width && (self.bits >> index) & 1 == 1
    }

    pub fn set(&mut self, index: usize, value: bool) {
        assert!(index < self.width);
        if value {
            self.bits |= 1 << index;
        } else {
            self.bits &= !(1 << index);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Largest set bit, if any.
    pub fn pivot(&self) -> Option<usize> {
        pivot(self.bits)
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        if self.width != other.width {
            return Err(Error::DimensionMismatch(format!(
                "xor of widths {} and {}",
                self.width, other.width
            )));
        }
        Ok(Self {
            width: self.width,
            bits: self.bits ^ other.bits,
        })
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(")?;
        for i in (0..self.width).rev() {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        write!(f, ")")
    }
}

#[inline]
pub fn low_mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[inline]
pub fn pivot(word: u64) -> Option<usize> {
    if word == 0 {
        None
    } else {
        Some(63 - word.leading_zeros() as usize)
    }
}

/// Inserts `word` into a basis held in reduced row echelon form.
///
/// Returns `false` when the word already lies in the span. The basis stays
/// fully reduced but is not re-sorted; callers sort once at the end.
#[inline]
pub fn insert_reduced(basis: &mut Vec<u64>, mut word: u64) -> bool {
    for &row in basis.iter() {
        let p = 63 - row.leading_zeros();
        if (word >> p) & 1 == 1 {
            word ^= row;
        }
    }
    if word == 0 {
        return false;
    }
    let p = 63 - word.leading_zeros();
    for row in basis.iter_mut() {
        if (*row >> p) & 1 == 1 {
            *row ^= word;
        }
    }
    basis.push(word);
    true
}

/// Reduced row echelon form of the span of `words`.
///
/// Rows come back sorted by pivot descending with every pivot cleared from
/// all other rows; zero rows are dropped. The result is the unique RREF of
/// the span under the largest-bit pivot convention.
pub fn rref_words(words: &[u64]) -> Vec<u64> {
    let mut basis = Vec::with_capacity(words.len());
    for &w in words {
        insert_reduced(&mut basis, w);
    }
    // Distinct pivots and reduced rows: ordering by value is ordering by pivot.
    basis.sort_unstable_by(|a, b| b.cmp(a));
    basis
}

/// Reduces `word` against a basis in RREF.
#[inline]
pub fn reduce(basis: &[u64], mut word: u64) -> u64 {
    for &row in basis {
        let p = 63 - row.leading_zeros();
        if (word >> p) & 1 == 1 {
            word ^= row;
        }
    }
    word
}

/// RREF of a list of vectors, returning the basis and its pivot set.
pub fn rref(basis: &[BitVector]) -> Result<(Vec<BitVector>, Vec<usize>)> {
    let Some(first) = basis.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let width = first.width();
    if let Some(bad) = basis.iter().find(|v| v.width() != width) {
        return Err(Error::DimensionMismatch(format!(
            "rref over widths {width} and {}",
            bad.width()
        )));
    }
    let words: Vec<u64> = basis.iter().map(|v| v.word()).collect();
    let reduced = rref_words(&words);
    let pivots = reduced.iter().filter_map(|&w| pivot(w)).collect();
    let vectors = reduced
        .into_iter()
        .map(|w| BitVector::from_word(width, w))
        .collect();
    Ok((vectors, pivots))
}

/// Rank of a set of (possibly multiword) rows.
pub fn rank_rows(rows: &[Vec<u64>]) -> usize {
    let mut rows: Vec<Vec<u64>> = rows.iter().filter(|r| r.iter().any(|&w| w != 0)).cloned().collect();
    let mut rank = 0;
    let words = rows.first().map_or(0, Vec::len);
    for word in (0..words).rev() {
        for bit in (0..64).rev() {
            let Some(idx) = (rank..rows.len()).find(|&i| (rows[i][word] >> bit) & 1 == 1) else {
                continue;
            };
            rows.swap(rank, idx);
            let (head, tail) = rows.split_at_mut(rank + 1);
            let pivot_row = &head[rank];
            for row in tail.iter_mut() {
                if (row[word] >> bit) & 1 == 1 {
                    for (w, p) in row.iter_mut().zip(pivot_row) {
                        *w ^= p;
                    }
                }
            }
            rank += 1;
            if rank == rows.len() {
                return rank;
            }
        }
    }
    rank
}

/// Dense matrix over GF(2) with bit-packed rows.
///
/// Column `j` of a row lives in word `j / 64`, bit `j % 64`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64).max(1);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix with at most 64 columns from one word per row.
    pub fn from_row_words(cols: usize, words: &[u64]) -> Self {
        assert!(cols <= 64, "from_row_words supports at most 64 columns");
        Self {
            rows: words.len(),
            cols,
            stride: 1,
            data: words.iter().map(|&w| w & low_mask(cols)).collect(),
        }
    }

    /// Decodes a square matrix from its row-major integer encoding
    /// (entry `(i, j)` at bit `i * n + j`).
    pub fn from_code(n: usize, code: u64) -> Self {
        let words: Vec<u64> = (0..n).map(|i| (code >> (i * n)) & low_mask(n)).collect();
        Self::from_row_words(n, &words)
    }

    /// Row-major integer encoding of a matrix with `rows * cols <= 64`.
    pub fn code(&self) -> u64 {
        assert!(self.rows * self.cols <= 64);
        (0..self.rows).fold(0, |acc, i| acc | (self.row_word(i) << (i * self.cols)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        (self.data[r * self.stride + c / 64] >> (c % 64)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[r * self.stride + c / 64];
        if value {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    pub fn toggle(&mut self, r: usize, c: usize) {
        assert!(r < self.rows && c < self.cols);
        self.data[r * self.stride + c / 64] ^= 1 << (c % 64);
    }

    /// The first word of row `r`; the whole row when `cols <= 64`.
    pub fn row_word(&self, r: usize) -> u64 {
        self.data[r * self.stride]
    }

    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row_vector(&self, r: usize) -> BitVector {
        assert!(self.cols <= 64);
        BitVector::from_word(self.cols, self.row_word(r))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn rank(&self) -> usize {
        if self.cols <= 64 {
            let mut basis = Vec::with_capacity(self.rows);
            for r in 0..self.rows {
                insert_reduced(&mut basis, self.row_word(r));
            }
            basis.len()
        } else {
            let rows: Vec<Vec<u64>> = (0..self.rows).map(|r| self.row_words(r).to_vec()).collect();
            rank_rows(&rows)
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) {
                    let (dst, src) = (r * out.stride, k * other.stride);
                    for w in 0..out.stride {
                        out.data[dst + w] ^= other.data[src + w];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_invertible(&self) -> Result<bool> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "invertibility of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok(self.rank() == self.rows)
    }

    /// Inverse via Gauss-Jordan; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        if self.rows != self.cols || self.cols > 64 {
            return None;
        }
        let n = self.rows;
        let mut a: Vec<u64> = (0..n).map(|r| self.row_word(r)).collect();
        let mut inv: Vec<u64> = (0..n).map(|r| 1u64 << r).collect();
        for col in 0..n {
            let p = (col..n).find(|&r| (a[r] >> col) & 1 == 1)?;
            a.swap(col, p);
            inv.swap(col, p);
            for r in 0..n {
                if r != col && (a[r] >> col) & 1 == 1 {
                    a[r] ^= a[col];
                    inv[r] ^= inv[col];
                }
            }
        }
        Some(Self::from_row_words(n, &inv))
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                write!(f, "{}", u8::from(self.get(r, c)))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Order of GL(n, F2): the product of `2^n - 2^k` for `k < n`.
pub fn gl_order(n: usize) -> u64 {
    (0..n).map(|k| (1u64 << n) - (1u64 << k)).product()
}

/// Every invertible `n x n` matrix over F2, ordered by ascending row-major
/// integer encoding.
pub fn enumerate_gl(n: usize) -> Vec<BitMatrix> {
    assert!((1..=4).contains(&n), "GL enumeration supports 1 <= n <= 4");
    let mut out = Vec::with_capacity(gl_order(n) as usize);
    for code in 0..(1u64 << (n * n)) {
        let m = BitMatrix::from_code(n, code);
        if m.rank() == n {
            out.push(m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> BitMatrix {
        let words: Vec<u64> = (0..rows).map(|_| rng.random::<u64>()).collect();
        BitMatrix::from_row_words(cols, &words)
    }

    #[test]
    fn rref_eliminates_lower_pivot() {
        let (basis, pivots) = rref(&[BitVector::from_word(4, 0b1100), BitVector::from_word(4, 0b0110)]).unwrap();
        assert_eq!(basis.iter().map(|v| v.word()).collect::<Vec<_>>(), vec![0b1010, 0b0110]);
        assert_eq!(pivots, vec![3, 2]);
    }

    #[test]
    fn rref_same_subspace_for_equivalent_generators() {
        // {a00, a00 + a01} and {a00, a01} on a 2x2 matrix
        assert_eq!(rref_words(&[0b0001, 0b0011]), rref_words(&[0b0001, 0b0010]));
        assert_eq!(rref_words(&[0b0001, 0b0011]), vec![0b0010, 0b0001]);
    }

    #[test]
    fn rref_of_empty_is_empty() {
        let (basis, pivots) = rref(&[]).unwrap();
        assert!(basis.is_empty() && pivots.is_empty());
        assert!(rref_words(&[0, 0]).is_empty());
    }

    #[test]
    fn rref_rejects_mixed_widths() {
        assert!(rref(&[BitVector::zero(3), BitVector::zero(4)]).is_err());
    }

    #[test]
    fn rank_basics() {
        assert_eq!(BitMatrix::identity(3).rank(), 3);
        assert_eq!(BitMatrix::zeros(2, 4).rank(), 0);
    }

    #[test]
    fn rank_matches_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let rows = rng.random_range(1..=9);
            let cols = rng.random_range(1..=9);
            let m = random_matrix(&mut rng, rows, cols);
            assert_eq!(m.rank(), m.transpose().rank());
            assert!(m.rank() <= rows.min(cols));
        }
    }

    #[test]
    fn multiword_rank_matches_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut m = BitMatrix::zeros(12, 150);
            for r in 0..12 {
                for c in 0..150 {
                    if rng.random_bool(0.1) {
                        m.set(r, c, true);
                    }
                }
            }
            assert_eq!(m.rank(), m.transpose().rank());
        }
    }

    #[test]
    fn product_small_example() {
        let a = BitMatrix::from_row_words(2, &[0b11, 0b10]); // [[1,1],[0,1]]
        let b = BitMatrix::from_row_words(2, &[0b01, 0b11]); // [[1,0],[1,1]]
        let c = a.mul(&b).unwrap();
        // [[0,1],[1,1]]
        assert!(!c.get(0, 0) && c.get(0, 1) && c.get(1, 0) && c.get(1, 1));
    }

    #[test]
    fn product_dimension_mismatch() {
        assert!(BitMatrix::zeros(2, 3).mul(&BitMatrix::zeros(2, 3)).is_err());
        assert!(BitMatrix::zeros(2, 3).is_invertible().is_err());
    }

    #[test]
    fn identity_and_transpose_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 4, 5);
            assert_eq!(BitMatrix::identity(4).mul(&m).unwrap(), m);
            assert_eq!(m.mul(&BitMatrix::identity(5)).unwrap(), m);
            assert_eq!(m.transpose().transpose(), m);
        }
    }

    #[test]
    fn product_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 3, 4);
            let b = random_matrix(&mut rng, 4, 2);
            let c = random_matrix(&mut rng, 2, 5);
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            assert_eq!(left, right);
        }
    }

    #[test]
    fn gl_counts() {
        assert_eq!(enumerate_gl(1).len(), 1);
        assert_eq!(enumerate_gl(2).len(), 6);
        assert_eq!(enumerate_gl(3).len(), 168);
        assert_eq!(enumerate_gl(4).len() as u64, gl_order(4));
        assert_eq!(gl_order(4), 20160);
    }

    #[test]
    fn gl_elements_distinct_invertible_and_ordered() {
        for n in 1..=3 {
            let all = enumerate_gl(n);
            let codes: Vec<u64> = all.iter().map(BitMatrix::code).collect();
            assert!(codes.windows(2).all(|w| w[0] < w[1]));
            for m in &all {
                assert!(m.is_invertible().unwrap());
                let inv = m.inverse().unwrap();
                assert_eq!(m.mul(&inv).unwrap(), BitMatrix::identity(n));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn rref_idempotent_and_spanning(words in proptest::collection::vec(0u64..(1 << 12), 0..10)) {
            let r = rref_words(&words);
            proptest::prop_assert_eq!(rref_words(&r), r.clone());
            for &w in &words {
                proptest::prop_assert_eq!(reduce(&r, w), 0);
            }
            let pivots: Vec<usize> = r.iter().map(|&w| pivot(w).unwrap()).collect();
            proptest::prop_assert!(pivots.windows(2).all(|p| p[0] > p[1]));
            for (i, &row) in r.iter().enumerate() {
                for (j, &p) in pivots.iter().enumerate() {
                    if i != j {
                        proptest::prop_assert_eq!((row >> p) & 1, 0);
                    }
                }
            }
        }
    }
}
