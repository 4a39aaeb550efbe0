use mmrank::certificate::{Certificate, Technique};
use mmrank::engine::{prove_format, EngineConfig};
use mmrank::verifier::{verify, verify_bytes, VerifyError};

fn cfg() -> EngineConfig {
    EngineConfig {
        thread_count: 1,
        ..EngineConfig::default()
    }
}

fn two_by_two() -> Certificate {
    prove_format(2, 2, 2, &cfg()).unwrap().certificate
}

fn rejected_at(cert: &Certificate) -> Option<u32> {
    match verify(cert, &cfg()) {
        Err(VerifyError::Rejected { orbit, .. }) => orbit,
        Err(e) => panic!("environment failure: {e}"),
        Ok(t) => panic!("accepted a tampered certificate with bound {}", t.final_bound),
    }
}

fn substitution_of(cert: &mut Certificate, orbit: usize) -> &mut Vec<mmrank::certificate::SubstitutionStage> {
    match &mut cert.records[orbit].technique {
        Technique::Substitution { stages, .. } => stages,
        t => panic!("orbit {orbit} uses {}", t.name()),
    }
}

#[test]
fn accepts_engine_output() {
    let cert = two_by_two();
    let table = verify(&cert, &cfg()).unwrap();
    assert_eq!(table.final_bound, 7);
    assert_eq!(table.bounds.len(), 10);
    assert_eq!(table.layer_millis.iter().map(|(d, _)| *d).collect::<Vec<_>>(), vec![4, 3, 2, 1, 0]);
    let again = verify_bytes(&cert.to_bytes(), &cfg()).unwrap();
    assert_eq!(again.bounds, table.bounds);
}

#[test]
fn accepts_rectangular_and_transposed_free_formats() {
    let run = prove_format(2, 3, 2, &cfg()).unwrap();
    let table = verify(&run.certificate, &cfg()).unwrap();
    assert_eq!(table.bounds, run.bounds());
}

#[test]
fn inflated_bounds_are_rejected_at_their_orbit() {
    let good = two_by_two();
    for id in 1..good.records.len() {
        let mut c = good.clone();
        c.records[id].bound += 1;
        if let Technique::Substitution { stages, .. } = &mut c.records[id].technique {
            // Keep the stage chain consistent so the structural check passes.
            let last = stages.last().unwrap().clone();
            let mut extra = last;
            extra.target += 1;
            stages.push(extra);
        }
        assert_eq!(rejected_at(&c), Some(id as u32), "orbit {id}");
    }
}

#[test]
fn wrong_child_is_rejected() {
    let mut c = two_by_two();
    let stages = substitution_of(&mut c, 0);
    let r = &mut stages[0].records[0];
    r.child = if r.child == 1 { 2 } else { 1 };
    assert_eq!(rejected_at(&c), Some(0));
}

#[test]
fn wrong_witness_is_rejected() {
    let good = two_by_two();
    let mut found = false;
    for id in 0..good.records.len() {
        let mut c = good.clone();
        let Technique::Substitution { stages, .. } = &mut c.records[id].technique else { continue };
        for rec in stages.iter_mut().flat_map(|s| s.records.iter_mut()) {
            // Swap the rows of L; accepted only if the image happens to agree.
            let swapped = ((rec.left & 3) << 2) | (rec.left >> 2);
            if swapped != rec.left {
                rec.left = swapped;
                found = true;
                break;
            }
        }
        if let Ok(t) = verify(&c, &cfg()) {
            assert_eq!(t.bounds, verify(&good, &cfg()).unwrap().bounds);
        }
    }
    assert!(found);
}

#[test]
fn dropped_or_extra_records_are_rejected() {
    let mut c = two_by_two();
    substitution_of(&mut c, 0)[0].records.pop();
    assert_eq!(rejected_at(&c), Some(0));

    let mut c = two_by_two();
    let stage = &mut substitution_of(&mut c, 0)[0];
    let dup = stage.records[0];
    stage.records.push(dup);
    assert_eq!(rejected_at(&c), Some(0));
}

#[test]
fn subset_must_contain_the_newest_component() {
    let mut c = two_by_two();
    let mut hit = None;
    for (id, orbit) in c.records.iter_mut().enumerate() {
        let Technique::Substitution { stages, .. } = &mut orbit.technique else { continue };
        if let Some(rec) = stages.iter_mut().flat_map(|s| s.records.iter_mut()).find(|r| r.depth >= 2) {
            rec.subset &= !(1 << (rec.depth - 1));
            rec.subset |= 1;
            hit = Some(id as u32);
            break;
        }
    }
    assert!(hit.is_some(), "no record below depth 1");
    // Caught by the structural pass, before any orbit is replayed.
    assert!(c.validate().is_err());
    assert!(verify(&c, &cfg()).unwrap_err().is_rejection());
}

#[test]
fn degenerate_must_add_a_new_restriction() {
    let good = two_by_two();
    let id = good
        .records
        .iter()
        .position(|r| matches!(r.technique, Technique::Degenerate { .. }))
        .expect("a degenerate orbit");
    let mut c = good.clone();
    c.records[id].technique = Technique::Degenerate {
        added: vec![c.records[id].basis.first().copied().unwrap_or(0)],
    };
    assert_eq!(rejected_at(&c), Some(id as u32));
}

#[test]
fn catalog_mismatch_is_a_global_rejection() {
    let mut c = two_by_two();
    c.header.square = false;
    c.layer_counts = vec![1, 2, 4, 2, 1];
    match verify(&c, &cfg()) {
        Err(VerifyError::Rejected { orbit: None, .. }) => {}
        other => panic!("expected a global rejection, got {other:?}"),
    }
    let mut bytes = two_by_two().to_bytes();
    bytes[9] ^= 1;
    let err = verify_bytes(&bytes, &cfg()).unwrap_err();
    assert!(err.is_rejection());
}

#[test]
fn thread_count_does_not_change_the_table() {
    let cert = two_by_two();
    let many = EngineConfig {
        thread_count: 4,
        ..EngineConfig::default()
    };
    assert_eq!(verify(&cert, &many).unwrap().bounds, verify(&cert, &cfg()).unwrap().bounds);
}
