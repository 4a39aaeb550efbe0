use mmrank::certificate::Technique;
use mmrank::engine::{
    bound_degenerate, bound_flattening, bound_forced_product, prove_format, prove_format_with, EngineConfig,
    SearchOutcome, SubstitutionSearch,
};
use mmrank::orbits::{enumerate_orbits, RestrictionSet};
use mmrank::tensor::{build_restricted_tensor, Tensor3};
use std::sync::Mutex;

fn single_thread() -> EngineConfig {
    EngineConfig {
        thread_count: 1,
        ..EngineConfig::default()
    }
}

#[test]
fn two_by_two_reaches_seven() {
    let run = prove_format(2, 2, 2, &single_thread()).unwrap();
    assert_eq!(run.final_bound(), 7);
    assert_eq!(run.bounds().len(), 10);
    for (entry, summary) in run.entries.iter().zip(&run.summaries) {
        assert!(entry.bound >= summary.flattening);
        assert_eq!(entry.technique.name(), summary.technique);
    }
}

#[test]
fn rectangular_formats_dominate_flattening() {
    let cfg = EngineConfig {
        step_limit: 20_000,
        ..single_thread()
    };
    for (l, m, n) in [(2, 2, 3), (2, 3, 2), (3, 2, 2)] {
        let run = prove_format(l, m, n, &cfg).unwrap();
        let flat = run.summaries[0].flattening;
        assert!(run.final_bound() >= flat);
        // <2,2,3> has rank 11 over every field.
        assert!(run.final_bound() <= 11, "<{l},{m},{n}> claims {}", run.final_bound());
        assert!(!run.certificate.header.square);
    }
}

#[test]
fn consulted_orbits_are_always_deeper() {
    let run = prove_format(2, 2, 3, &single_thread()).unwrap();
    for s in &run.summaries {
        if let Some(c) = s.min_child_dimension {
            assert!(c > s.dimension, "orbit {} consulted dimension {c}", s.orbit);
        }
    }
}

#[test]
fn global_target_stops_substitution() {
    let cfg = EngineConfig {
        global_target: Some(4),
        ..single_thread()
    };
    let run = prove_format(2, 2, 2, &cfg).unwrap();
    // Degeneration alone already gives 6; only substitution is capped.
    assert_eq!(run.final_bound(), 6);
    assert!(run.summaries[0].stages.is_empty());
    for s in &run.summaries {
        assert!(s.stages.iter().all(|st| st.target <= 4));
    }
}

#[test]
fn step_limit_one_aborts_every_attempt() {
    let cfg = EngineConfig {
        step_limit: 1,
        ..single_thread()
    };
    let run = prove_format(2, 2, 2, &cfg).unwrap();
    for s in &run.summaries {
        assert!(s.stages.iter().all(|st| st.outcome == SearchOutcome::Aborted));
        assert!(s.bound == s.flattening.max(s.forced_product.unwrap_or(0)).max(s.degenerate.unwrap_or(0)));
    }
    assert!(run.final_bound() < 7);
    mmrank::verifier::verify(&run.certificate, &cfg).unwrap();
}

#[test]
fn certificates_are_deterministic() {
    let a = prove_format(2, 2, 3, &single_thread()).unwrap().certificate.to_bytes();
    let b = prove_format(2, 2, 3, &single_thread()).unwrap().certificate.to_bytes();
    let small_cache = EngineConfig {
        cache_capacity: 4,
        thread_count: 2,
        seed: 99,
        ..EngineConfig::default()
    };
    let c = prove_format(2, 2, 3, &small_cache).unwrap().certificate.to_bytes();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn progress_sees_every_orbit_once() {
    let seen = Mutex::new(Vec::new());
    let run = prove_format_with(2, 2, 2, &single_thread(), &|s| seen.lock().unwrap().push(s.orbit)).unwrap();
    let mut seen = seen.into_inner().unwrap();
    // Deepest layer first.
    assert_eq!(seen[0] as usize, run.catalog.len() - 1);
    assert_eq!(*seen.last().unwrap(), 0);
    seen.sort_unstable();
    assert_eq!(seen, (0..10).collect::<Vec<u32>>());
    let line = serde_json::to_value(&run.summaries[0]).unwrap();
    assert_eq!(line["orbit"], 0);
    assert_eq!(line["technique"], "substitution");
    assert_eq!(line["stages"][0]["outcome"], "proved");
}

#[test]
fn degenerate_on_full_restriction_has_no_candidates() {
    let cat = enumerate_orbits(2, 2, true).unwrap();
    let full = RestrictionSet::new(2, 2, &[1, 2, 4, 8]).unwrap();
    let bounds = vec![Some(0); cat.len()];
    assert_eq!(bound_degenerate(&cat, &bounds, &full).unwrap(), None);
}

#[test]
fn zero_tensor_bounds() {
    let z = Tensor3::zeros(0, 4, 4);
    assert_eq!(bound_flattening(&z), 0);
    assert_eq!(bound_forced_product(&z, 32, 0).map_or(0, |(b, _)| b), 0);
}

#[test]
fn substitution_cannot_prove_past_the_true_rank() {
    // The unrestricted <2,2,2> tensor has rank 7, so target 8 must fail.
    let run = prove_format(2, 2, 2, &single_thread()).unwrap();
    let bounds: Vec<Option<u32>> = run.bounds().into_iter().map(Some).collect();
    let cfg = single_thread();
    let search = SubstitutionSearch::new(&run.catalog, &bounds, run.catalog.representative(0), &cfg);
    let (report, records) = search.run(8).unwrap();
    assert_eq!(report.outcome, SearchOutcome::Failed);
    assert!(records.is_none());
}

#[test]
fn invalid_formats_are_rejected() {
    assert!(prove_format(5, 2, 2, &EngineConfig::default()).is_err());
    assert!(prove_format(2, 2, 0, &EngineConfig::default()).is_err());
}

#[test]
fn technique_payloads_are_well_formed() {
    let run = prove_format(2, 2, 2, &single_thread()).unwrap();
    for e in &run.entries {
        let rep = run.catalog.representative(e.orbit);
        match &e.technique {
            Technique::Degenerate { added } => {
                assert_eq!(added.len(), 1);
                assert_eq!(added[0] & rep.pivot_mask(), 0);
            }
            Technique::ForcedProduct { rotation } => assert!(*rotation < 3),
            Technique::Substitution { stages, .. } => {
                let mut target = stages[0].target;
                for st in stages {
                    assert_eq!(st.target, target);
                    assert!(!st.records.is_empty());
                    target += 1;
                }
                assert_eq!(target - 1, e.bound);
            }
            Technique::Flattening => {
                let t = build_restricted_tensor(2, 2, 2, rep).unwrap();
                assert_eq!(bound_flattening(&t), e.bound);
            }
        }
    }
}
