use mmrank::engine::{prove_format, EngineConfig};
use mmrank::gf2::BitVector;
use mmrank::oracle::{exhaustive_rank, exhaustive_rank_leq};
use mmrank::orbits::RestrictionSet;
use mmrank::tensor::{build_restricted_tensor, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn orbit_one_has_rank_two() {
    let s = RestrictionSet::new(2, 2, &[1, 2, 4]).unwrap();
    let t = build_restricted_tensor(2, 2, 2, &s).unwrap();
    assert!(!exhaustive_rank_leq(&t, 1).unwrap());
    assert!(exhaustive_rank_leq(&t, 2).unwrap());
}

#[test]
fn sums_of_rank_one_terms_respect_the_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let (a, b, c) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4));
        let k = rng.random_range(0..4);
        let mut t = Tensor3::zeros(a, b, c);
        for _ in 0..k {
            let u = BitVector::from_word(a, rng.random_range(0..1u64 << a));
            let v = BitVector::from_word(b, rng.random_range(0..1u64 << b));
            let w = BitVector::from_word(c, rng.random_range(0..1u64 << c));
            t = t.add_rank_one(&u, &v, &w).unwrap();
        }
        let r = exhaustive_rank(&t).unwrap();
        assert!(r <= k);
        assert!(r >= t.max_flattening_rank());
        assert!(exhaustive_rank_leq(&t, r + 1).unwrap());
    }
}

#[test]
fn engine_never_exceeds_true_rank() {
    let cfg = EngineConfig {
        thread_count: 1,
        ..EngineConfig::default()
    };
    let run = prove_format(2, 2, 2, &cfg).unwrap();
    // Skip the unrestricted orbit here; the acceptance run covers it.
    for e in run.entries.iter().filter(|e| e.orbit != 0) {
        let t = build_restricted_tensor(2, 2, 2, run.catalog.representative(e.orbit)).unwrap();
        if e.bound > 0 {
            assert!(!exhaustive_rank_leq(&t, e.bound as usize - 1).unwrap(), "orbit {}", e.orbit);
        }
    }
}
