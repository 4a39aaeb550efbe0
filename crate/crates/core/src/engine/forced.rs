//! Forced-product bound.
//!
//! For a rotation of the tensor, take the nonzero `C`-slices and greedily pick
//! linearly independent rank-one slices `P_1..P_s`. Any decomposition can be
//! assumed to contain these as terms (up to a change of basis of `C`), and
//! each other slice `Q_j` can absorb any combination of them. Enumerating the
//! `2^(s(t-s))` combinations and taking the worst residual flattening rank
//! gives `R(T) >= s + min max-flattening`.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::tensor::Tensor3;

/// Up to 16 x 16 bits packed into one row of a wide matrix.
type Wide = [u64; 4];

/// Low bits enumerated sequentially per parallel chunk.
const CHUNK_BITS: usize = 14;

/// Result of analysing one rotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotationAnalysis {
    pub rotation: u8,
    /// Nonzero `C`-slices.
    pub t: usize,
    /// Selected independent rank-one slices.
    pub s: usize,
    /// Indices (in the rotated tensor) of the selected slices.
    pub selected: Vec<usize>,
    /// `s * (t - s)`.
    pub unknowns: usize,
    /// Set when `unknowns` reached the cap and nothing was enumerated.
    pub skipped: bool,
    /// Minimum residual max-flattening rank over all cases; `None` if skipped
    /// or abandoned below the floor.
    pub min_flattening: Option<usize>,
    /// `s + min_flattening` when available.
    pub bound: Option<usize>,
}

fn wide_set(w: &mut Wide, bit: usize) {
    w[bit / 64] |= 1 << (bit % 64);
}

fn wide_top(w: &Wide) -> Option<usize> {
    (0..4).rev().find(|&i| w[i] != 0).map(|i| i * 64 + 63 - w[i].leading_zeros() as usize)
}

/// Rank of up to 16 wide rows, stopping once `need` is reached.
fn wide_rank(rows: &[Wide], need: usize) -> usize {
    let mut basis: [Wide; 16] = [[0; 4]; 16];
    let mut pivots = [0usize; 16];
    let mut rank = 0;
    for row in rows {
        let mut r = *row;
        for k in 0..rank {
            let p = pivots[k];
            if (r[p / 64] >> (p % 64)) & 1 == 1 {
                for i in 0..4 {
                    r[i] ^= basis[k][i];
                }
            }
        }
        if let Some(p) = wide_top(&r) {
            for b in &mut basis[..rank] {
                if (b[p / 64] >> (p % 64)) & 1 == 1 {
                    for (x, y) in b.iter_mut().zip(&r) {
                        *x ^= y;
                    }
                }
            }
            basis[rank] = r;
            pivots[rank] = p;
            rank += 1;
            if rank >= need {
                return rank;
            }
        }
    }
    rank
}

/// Residual slices kept both as rows (`a x b`) and transposed (`b x a`).
#[derive(Clone)]
struct Residual {
    a: usize,
    b: usize,
    rows: Vec<[u16; 16]>,
    cols: Vec<[u16; 16]>,
}

impl Residual {
    fn add(&mut self, j: usize, u: u16, v: u16) {
        for x in 0..self.a {
            if (u >> x) & 1 == 1 {
                self.rows[j][x] ^= v;
            }
        }
        for y in 0..self.b {
            if (v >> y) & 1 == 1 {
                self.cols[j][y] ^= u;
            }
        }
    }

    /// Whether some flattening of the residual has rank at least `need`;
    /// with `need = usize::MAX` returns the max flattening rank instead.
    fn max_flattening(&self, need: usize) -> usize {
        let q = self.rows.len();
        let (a, b) = (self.a, self.b);
        let mut best = 0;
        // AB|C: one vector per slice.
        let mut vecs = [[0u64; 4]; 16];
        for (j, v) in vecs.iter_mut().enumerate().take(q) {
            for x in 0..a {
                let w = self.rows[j][x] as u64;
                for y in 0..b {
                    if (w >> y) & 1 == 1 {
                        wide_set(v, x * b + y);
                    }
                }
            }
        }
        best = best.max(wide_rank(&vecs[..q], need));
        if best >= need {
            return best;
        }
        // BC|A: one row per x.
        let mut rows = [[0u64; 4]; 16];
        for (x, row) in rows.iter_mut().enumerate().take(a) {
            for j in 0..q {
                let w = self.rows[j][x] as u64;
                let off = j * b;
                row[off / 64] |= w << (off % 64);
                if off % 64 + b > 64 {
                    row[off / 64 + 1] |= w >> (64 - off % 64);
                }
            }
        }
        best = best.max(wide_rank(&rows[..a], need));
        if best >= need {
            return best;
        }
        // CA|B: one row per y.
        let mut rows = [[0u64; 4]; 16];
        for (y, row) in rows.iter_mut().enumerate().take(b) {
            for j in 0..q {
                let w = self.cols[j][y] as u64;
                let off = j * a;
                row[off / 64] |= w << (off % 64);
                if off % 64 + a > 64 {
                    row[off / 64 + 1] |= w >> (64 - off % 64);
                }
            }
        }
        best.max(wide_rank(&rows[..b], need))
    }
}

/// Analyses rotation `rotation` of `t`.
///
/// Rotations whose unknown count reaches `bit_cap` are skipped. With
/// `floor = Some(f)` the enumeration stops as soon as a case proves
/// `s + flat < f`; the returned bound is then `None`.
pub fn analyze_rotation(t: &Tensor3, rotation: u8, bit_cap: usize, floor: Option<usize>) -> RotationAnalysis {
    let rt = t.rotate(rotation as usize);
    let (a, b, _) = rt.dims();
    let slices = rt.c_slices();
    let tcount = slices.len();
    assert!(a <= 16 && b <= 16 && tcount <= 16, "forced product supports dimensions up to 16");

    // Greedy independent rank-one selection, ascending slice index.
    let mut span: Vec<Wide> = Vec::new();
    let mut selected = Vec::new();
    let mut factors: Vec<(u16, u16)> = Vec::new();
    let mut rest = Vec::new();
    for (pos, (z, mat)) in slices.iter().enumerate() {
        let mut packed = [0u64; 4];
        for x in 0..a {
            let w = mat.row_word(x);
            for y in 0..b {
                if (w >> y) & 1 == 1 {
                    wide_set(&mut packed, x * b + y);
                }
            }
        }
        let independent = {
            let mut trial = span.clone();
            trial.push(packed);
            wide_rank(&trial, usize::MAX) == trial.len()
        };
        if mat.rank() == 1 && independent {
            span.push(packed);
            selected.push(*z);
            let u = (0..a).filter(|&x| mat.row_word(x) != 0).fold(0u16, |acc, x| acc | 1 << x);
            let v = (0..a).map(|x| mat.row_word(x)).find(|&w| w != 0).unwrap_or(0) as u16;
            factors.push((u, v));
        } else {
            rest.push(pos);
        }
    }
    let s = selected.len();
    let q = tcount - s;
    let unknowns = s * q;
    let mut analysis = RotationAnalysis {
        rotation,
        t: tcount,
        s,
        selected,
        unknowns,
        skipped: false,
        min_flattening: None,
        bound: None,
    };
    if unknowns >= bit_cap.min(63) {
        analysis.skipped = true;
        return analysis;
    }

    let mut base = Residual {
        a,
        b,
        rows: vec![[0; 16]; q],
        cols: vec![[0; 16]; q],
    };
    for (j, &pos) in rest.iter().enumerate() {
        let mat = &slices[pos].1;
        for x in 0..a {
            let w = mat.row_word(x) as u16;
            base.rows[j][x] = w;
            for y in 0..b {
                if (w >> y) & 1 == 1 {
                    base.cols[j][y] |= 1 << x;
                }
            }
        }
    }
    // A case is good when its residual reaches `need`.
    let need = floor.map(|f| f.saturating_sub(s));

    let low_bits = unknowns.min(CHUNK_BITS);
    let chunks = 1u64 << (unknowns - low_bits);
    let minimum = AtomicUsize::new(usize::MAX);
    let abandoned = AtomicBool::new(false);
    let apply_bit = |res: &mut Residual, bit: usize| {
        let (i, j) = (bit / q, bit % q);
        res.add(j, factors[i].0, factors[i].1);
    };

    (0..chunks).into_par_iter().for_each(|chunk| {
        if abandoned.load(Ordering::Relaxed) {
            return;
        }
        let mut res = base.clone();
        for k in 0..(unknowns - low_bits) {
            if (chunk >> k) & 1 == 1 {
                apply_bit(&mut res, low_bits + k);
            }
        }
        let mut local_min = usize::MAX;
        for g in 0..(1u64 << low_bits) {
            if g > 0 {
                apply_bit(&mut res, g.trailing_zeros() as usize);
            }
            let flat = res.max_flattening(usize::MAX);
            local_min = local_min.min(flat);
            if let Some(nd) = need {
                if flat < nd {
                    abandoned.store(true, Ordering::Relaxed);
                    return;
                }
            }
            if g & 0xfff == 0 && abandoned.load(Ordering::Relaxed) {
                return;
            }
        }
        minimum.fetch_min(local_min, Ordering::Relaxed);
    });

    if !abandoned.load(Ordering::Relaxed) {
        let min = minimum.load(Ordering::Relaxed);
        analysis.min_flattening = Some(min);
        analysis.bound = Some(s + min);
    }
    analysis
}

/// Best forced-product bound over the three rotations, with the rotation
/// attaining it. Rotations that cannot beat `floor` are abandoned early.
pub fn bound_forced_product(t: &Tensor3, bit_cap: usize, floor: usize) -> Option<(usize, u8)> {
    let mut best: Option<(usize, u8)> = None;
    for rotation in 0..3u8 {
        let f = best.map_or(floor, |(b, _)| floor.max(b + 1));
        let a = analyze_rotation(t, rotation, bit_cap, Some(f));
        if let Some(b) = a.bound {
            if b >= f {
                best = Some((b, rotation));
            }
        }
    }
    best
}
