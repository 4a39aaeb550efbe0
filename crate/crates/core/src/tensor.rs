//! Restricted matrix multiplication tensors over F2.
//!
//! A [`Tensor3`] of shape `(dA, dB, dC)` is stored as `dC` slices, each a
//! `dA x dB` bit matrix. For a restricted `<l,m,n>` tensor the A basis is the
//! free variables of the restriction set in ascending bit order, B is
//! `b[j][k]` at index `j*n + k`, and C is `c[k][i]` at index `k*l + i`.

use std::fmt;

use crate::error::{Error, Result};
use crate::gf2::{self, BitMatrix, BitVector};
use crate::orbits::RestrictionSet;

/// Which pair of factors is merged into the rows of the unfolding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bipartition {
    /// Rows indexed by (A, B), columns by C.
    AbC,
    /// Rows indexed by (B, C), columns by A.
    BcA,
    /// Rows indexed by (C, A), columns by B.
    CaB,
}

impl Bipartition {
    pub const ALL: [Bipartition; 3] = [Bipartition::AbC, Bipartition::BcA, Bipartition::CaB];
}

#[derive(Clone, PartialEq, Eq)]
pub struct Tensor3 {
    dims: [usize; 3],
    slices: Vec<BitMatrix>,
    labels: Option<[Vec<String>; 3]>,
}

impl Tensor3 {
    pub fn zeros(da: usize, db: usize, dc: usize) -> Self {
        assert!(da <= 64 && db <= 64, "slice dimensions must fit a word");
        Self {
            dims: [da, db, dc],
            slices: (0..dc).map(|_| BitMatrix::zeros(da, db)).collect(),
            labels: None,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.slices[z].get(x, y)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        self.slices[z].set(x, y, value);
    }

    pub fn toggle(&mut self, x: usize, y: usize, z: usize) {
        self.slices[z].toggle(x, y);
    }

    pub fn slice(&self, z: usize) -> &BitMatrix {
        &self.slices[z]
    }

    pub fn labels(&self) -> Option<&[Vec<String>; 3]> {
        self.labels.as_ref()
    }

    pub fn with_labels(mut self, labels: [Vec<String>; 3]) -> Self {
        assert!(labels.iter().zip(self.dims).all(|(l, d)| l.len() == d));
        self.labels = Some(labels);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.slices.iter().all(BitMatrix::is_zero)
    }

    /// Number of nonzero cells.
    pub fn nnz(&self) -> usize {
        self.slices.iter().map(BitMatrix::count_ones).sum()
    }

    /// Nonzero cells in (z, x, y) lexicographic order.
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (z, s) in self.slices.iter().enumerate() {
            for x in 0..self.dims[0] {
                for y in 0..self.dims[1] {
                    if s.get(x, y) {
                        out.push((x, y, z));
                    }
                }
            }
        }
        out
    }

    /// The matrix of an unfolding; rows are indexed by the merged pair.
    pub fn flattening(&self, part: Bipartition) -> BitMatrix {
        let [a, b, c] = self.dims;
        let (rows, cols) = match part {
            Bipartition::AbC => (a * b, c),
            Bipartition::BcA => (b * c, a),
            Bipartition::CaB => (c * a, b),
        };
        let mut out = BitMatrix::zeros(rows, cols);
        for (x, y, z) in self.cells() {
            match part {
                Bipartition::AbC => out.set(x * b + y, z, true),
                Bipartition::BcA => out.set(y * c + z, x, true),
                Bipartition::CaB => out.set(z * a + x, y, true),
            }
        }
        out
    }

    pub fn flattening_rank(&self, part: Bipartition) -> usize {
        // Rank of the transpose is the same; use the side with fewer rows.
        let [a, b, c] = self.dims;
        match part {
            Bipartition::AbC => {
                let rows: Vec<Vec<u64>> = self.slices.iter().map(|s| pack_slice(s, a, b)).collect();
                gf2::rank_rows(&rows)
            }
            Bipartition::BcA => {
                let rows: Vec<Vec<u64>> = (0..a)
                    .map(|x| {
                        let mut row = vec![0u64; (b * c).div_ceil(64).max(1)];
                        for (z, s) in self.slices.iter().enumerate() {
                            let w = s.row_word(x);
                            for y in 0..b {
                                if (w >> y) & 1 == 1 {
                                    let bit = y * c + z;
                                    row[bit / 64] |= 1 << (bit % 64);
                                }
                            }
                        }
                        row
                    })
                    .collect();
                gf2::rank_rows(&rows)
            }
            Bipartition::CaB => {
                let rows: Vec<Vec<u64>> = (0..b)
                    .map(|y| {
                        let mut row = vec![0u64; (c * a).div_ceil(64).max(1)];
                        for (z, s) in self.slices.iter().enumerate() {
                            for x in 0..a {
                                if s.get(x, y) {
                                    let bit = z * a + x;
                                    row[bit / 64] |= 1 << (bit % 64);
                                }
                            }
                        }
                        row
                    })
                    .collect();
                gf2::rank_rows(&rows)
            }
        }
    }

    pub fn max_flattening_rank(&self) -> usize {
        Bipartition::ALL.iter().map(|&p| self.flattening_rank(p)).max().unwrap_or(0)
    }

    /// Cyclically permutes the factors. One step sends `(A, B, C)` to
    /// `(C, A, B)`: the new first factor is the old third.
    pub fn rotate(&self, shift: usize) -> Tensor3 {
        let mut t = self.clone();
        for _ in 0..shift % 3 {
            t = t.rotate_once();
        }
        t
    }

    fn rotate_once(&self) -> Tensor3 {
        let [a, b, c] = self.dims;
        let mut out = Tensor3::zeros(c, a, b);
        for (x, y, z) in self.cells() {
            out.set(z, x, y, true);
        }
        if let Some([la, lb, lc]) = &self.labels {
            out.labels = Some([lc.clone(), la.clone(), lb.clone()]);
        }
        out
    }

    /// Nonzero C-slices in ascending index order.
    pub fn c_slices(&self) -> Vec<(usize, BitMatrix)> {
        self.slices
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_zero())
            .map(|(z, s)| (z, s.clone()))
            .collect()
    }

    /// `T + u (x) v (x) w`.
    pub fn add_rank_one(&self, u: &BitVector, v: &BitVector, w: &BitVector) -> Result<Tensor3> {
        let [a, b, c] = self.dims;
        if u.width() != a || v.width() != b || w.width() != c {
            return Err(Error::DimensionMismatch(format!(
                "rank-one term of widths ({}, {}, {}) on a {a}x{b}x{c} tensor",
                u.width(),
                v.width(),
                w.width()
            )));
        }
        let mut out = self.clone();
        for z in 0..c {
            if !w.get(z) {
                continue;
            }
            for x in 0..a {
                if u.get(x) {
                    for y in 0..b {
                        if v.get(y) {
                            out.toggle(x, y, z);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn label(&self, factor: usize, idx: usize) -> String {
        match &self.labels {
            Some(l) => l[factor][idx].clone(),
            None => format!("{}{idx}", ["x", "y", "z"][factor]),
        }
    }
}

fn pack_slice(s: &BitMatrix, a: usize, b: usize) -> Vec<u64> {
    let mut row = vec![0u64; (a * b).div_ceil(64).max(1)];
    for x in 0..a {
        let w = s.row_word(x);
        let bit = x * b;
        row[bit / 64] |= w << (bit % 64);
        if !bit.is_multiple_of(64) && bit % 64 + b > 64 {
            row[bit / 64 + 1] |= w >> (64 - bit % 64);
        }
    }
    row
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.dims;
        write!(f, "Tensor3[{a}x{b}x{c}](")?;
        let terms: Vec<String> = self
            .cells()
            .into_iter()
            .map(|(x, y, z)| format!("{}*{}*{}", self.label(0, x), self.label(1, y), self.label(2, z)))
            .collect();
        write!(f, "{})", terms.join(" + "))
    }
}

/// The `<l,m,n>` tensor with the A factor confined to the subspace cut out
/// by `restrictions`.
///
/// Each pivot variable is rewritten as the sum of the other variables in
/// its RREF row, all of which are free.
pub fn build_restricted_tensor(l: usize, m: usize, n: usize, restrictions: &RestrictionSet) -> Result<Tensor3> {
    if restrictions.l() != l || restrictions.m() != m {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} restrictions for a <{l},{m},{n}> tensor",
            restrictions.l(),
            restrictions.m()
        )));
    }
    if !(1..=4).contains(&n) {
        return Err(Error::Unsupported(format!("n = {n}")));
    }
    let free = restrictions.free_variables();
    let mut index_of = vec![usize::MAX; l * m];
    for (idx, &bit) in free.iter().enumerate() {
        index_of[bit] = idx;
    }
    // expr[bit] = free-variable coordinates of a[i][j]
    let mut expr = vec![0u64; l * m];
    for &bit in &free {
        expr[bit] = 1 << index_of[bit];
    }
    for &row in restrictions.basis() {
        let p = gf2::pivot(row).unwrap();
        let rest = row & !(1u64 << p);
        expr[p] = (0..l * m)
            .filter(|b| (rest >> b) & 1 == 1)
            .fold(0, |acc, b| acc ^ (1u64 << index_of[b]));
    }

    let (da, db, dc) = (free.len(), m * n, n * l);
    let mut t = Tensor3::zeros(da, db, dc);
    for i in 0..l {
        for j in 0..m {
            let e = expr[i * m + j];
            for k in 0..n {
                for x in 0..da {
                    if (e >> x) & 1 == 1 {
                        t.toggle(x, j * n + k, k * l + i);
                    }
                }
            }
        }
    }
    let la = free.iter().map(|&b| format!("a{}{}", b / m, b % m)).collect();
    let lb = (0..db).map(|y| format!("b{}{}", y / n, y % n)).collect();
    let lc = (0..dc).map(|z| format!("c{}{}", z / l, z % l)).collect();
    Ok(t.with_labels([la, lb, lc]))
}

/// The unrestricted `<l,m,n>` tensor.
pub fn matmul_tensor(l: usize, m: usize, n: usize) -> Result<Tensor3> {
    build_restricted_tensor(l, m, n, &RestrictionSet::empty(l, m))
}
