//! Exhaustive rank test for tiny tensors, used to cross-check the engine.
//!
//! `R(T) <= r` iff some `r` rank-one `B x C` matrices span a space containing
//! every `A`-slice of `T`. The search picks rank-one matrices in strictly
//! decreasing encoded order and prunes when the slices still outside the span
//! need more picks than remain.

use crate::error::{Error, Result};
use crate::gf2::{insert_reduced, reduce};
use crate::tensor::Tensor3;

/// Largest `r` accepted by [`exhaustive_rank_leq`].
pub const MAX_ORACLE_RANK: usize = 8;

/// Decides `R(T) <= r` by exhaustive search. Dimensions up to 4 each.
pub fn exhaustive_rank_leq(t: &Tensor3, r: usize) -> Result<bool> {
    let (a, b, c) = t.dims();
    if a > 4 || b > 4 || c > 4 {
        return Err(Error::ResourceLimit(format!("oracle supports dimensions up to 4, got {a}x{b}x{c}")));
    }
    if r > MAX_ORACLE_RANK {
        return Err(Error::ResourceLimit(format!("oracle supports r <= {MAX_ORACLE_RANK}, got {r}")));
    }
    // A-slice x as a b*c-bit word: bit y*c + z.
    let mut slices = Vec::new();
    for x in 0..a {
        let mut w = 0u64;
        for y in 0..b {
            for z in 0..c {
                if t.get(x, y, z) {
                    w |= 1 << (y * c + z);
                }
            }
        }
        insert_reduced(&mut slices, w);
    }
    if slices.is_empty() {
        return Ok(true);
    }
    if slices.len() > r {
        return Ok(false);
    }
    let mut candidates = Vec::new();
    for v in 1..(1u64 << b) {
        for w in 1..(1u64 << c) {
            let mut word = 0u64;
            for y in 0..b {
                if (v >> y) & 1 == 1 {
                    word |= w << (y * c);
                }
            }
            candidates.push(word);
        }
    }
    candidates.sort_unstable_by(|x, y| y.cmp(x));
    let mut search = Search {
        candidates: &candidates,
        chosen: Vec::new(),
        joint: slices.clone(),
    };
    Ok(search.run(0, r))
}

struct Search<'a> {
    candidates: &'a [u64],
    chosen: Vec<u64>,
    /// Span of the slices plus the chosen matrices.
    joint: Vec<u64>,
}

impl Search<'_> {
    fn deficit(&self) -> usize {
        self.joint.len() - self.chosen.len()
    }

    fn run(&mut self, start: usize, remaining: usize) -> bool {
        let deficit = self.deficit();
        if deficit == 0 {
            return true;
        }
        if deficit > remaining {
            return false;
        }
        for i in start..self.candidates.len() {
            let cand = self.candidates[i];
            if reduce(&self.chosen, cand) == 0 {
                continue;
            }
            let inside = reduce(&self.joint, cand) == 0;
            // A pick outside the joint span leaves the deficit unchanged.
            if !inside && deficit > remaining - 1 {
                continue;
            }
            let saved = (self.chosen.clone(), self.joint.clone());
            insert_reduced(&mut self.chosen, cand);
            insert_reduced(&mut self.joint, cand);
            if self.run(i + 1, remaining - 1) {
                return true;
            }
            (self.chosen, self.joint) = saved;
        }
        false
    }
}

/// Exact rank by increasing `r` until the oracle accepts.
pub fn exhaustive_rank(t: &Tensor3) -> Result<usize> {
    for r in 0..=MAX_ORACLE_RANK {
        if exhaustive_rank_leq(t, r)? {
            return Ok(r);
        }
    }
    Err(Error::ResourceLimit(format!("rank exceeds {MAX_ORACLE_RANK}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::BitVector;

    #[test]
    fn zero_and_rank_one() {
        let z = Tensor3::zeros(2, 2, 2);
        assert!(exhaustive_rank_leq(&z, 0).unwrap());
        let t = z
            .add_rank_one(&BitVector::from_word(2, 3), &BitVector::from_word(2, 1), &BitVector::from_word(2, 2))
            .unwrap();
        assert_eq!(exhaustive_rank(&t).unwrap(), 1);
    }

    #[test]
    fn w_state_has_rank_three() {
        let mut t = Tensor3::zeros(2, 2, 2);
        t.set(1, 0, 0, true);
        t.set(0, 1, 0, true);
        t.set(0, 0, 1, true);
        assert_eq!(exhaustive_rank(&t).unwrap(), 3);
    }

    #[test]
    fn limits_are_enforced() {
        assert!(exhaustive_rank_leq(&Tensor3::zeros(5, 1, 1), 1).is_err());
        assert!(exhaustive_rank_leq(&Tensor3::zeros(1, 1, 1), 9).is_err());
    }
}
