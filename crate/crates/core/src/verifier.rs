//! Independent certificate replay.
//!
//! The verifier rebuilds the orbit catalog, checks that the certificate lists
//! the same representatives, and re-derives every bound from orbits of larger
//! dimension. Substitution records are checked by applying the stored
//! symmetry with plain matrix products, never through the catalog lookup.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::certificate::{Certificate, OrbitRecord, SubstitutionStage, Technique};
use crate::engine::{analyze_rotation, submasks_ascending, EngineConfig};
use crate::error::Error;
use crate::orbits::{OrbitCatalog, RestrictionSet};
use crate::tensor::build_restricted_tensor;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("certificate rejected{}: {reason}", orbit.map(|o| format!(" at orbit {o}")).unwrap_or_default())]
    Rejected {
        orbit: Option<u32>,
        technique: Option<&'static str>,
        reason: String,
    },
    #[error(transparent)]
    Environment(#[from] Error),
}

impl VerifyError {
    fn global(reason: impl Into<String>) -> Self {
        VerifyError::Rejected {
            orbit: None,
            technique: None,
            reason: reason.into(),
        }
    }

    pub fn is_rejection(&self) -> bool {
        matches!(self, VerifyError::Rejected { .. })
    }
}

/// Outcome of a successful verification.
#[derive(Clone, Debug)]
pub struct VerifiedTable {
    pub final_bound: u32,
    pub bounds: Vec<u32>,
    /// `(dimension, milliseconds)` in processing order.
    pub layer_millis: Vec<(usize, f64)>,
}

/// Parses and verifies a certificate file's bytes.
pub fn verify_bytes(data: &[u8], cfg: &EngineConfig) -> Result<VerifiedTable, VerifyError> {
    let cert = Certificate::from_bytes(data).map_err(|e| VerifyError::global(e.to_string()))?;
    verify(&cert, cfg)
}

pub fn verify(cert: &Certificate, cfg: &EngineConfig) -> Result<VerifiedTable, VerifyError> {
    cfg.install(|| verify_inner(cert, cfg))?
}

fn verify_inner(cert: &Certificate, cfg: &EngineConfig) -> Result<VerifiedTable, VerifyError> {
    cert.validate().map_err(|e| VerifyError::global(e.to_string()))?;
    let (l, m, n) = (cert.l(), cert.m(), cert.n());
    let catalog = OrbitCatalog::enumerate(l, m, cert.header.square, &cfg.catalog_options())?;
    let counts: Vec<u32> = catalog.layer_counts().iter().map(|&c| c as u32).collect();
    if counts != cert.layer_counts {
        return Err(VerifyError::global(format!(
            "layer counts {:?} differ from the recomputed catalog {:?}",
            cert.layer_counts, counts
        )));
    }
    for (orbit, rec) in catalog.orbits().iter().zip(&cert.records) {
        if orbit.representative.basis() != rec.basis.as_slice() {
            return Err(VerifyError::Rejected {
                orbit: Some(orbit.id),
                technique: None,
                reason: "representative differs from the recomputed catalog".into(),
            });
        }
    }

    let lm = l * m;
    let mut verified: Vec<Option<u32>> = vec![None; catalog.len()];
    let mut layer_millis = Vec::with_capacity(lm + 1);
    for d in (0..=lm).rev() {
        let start = Instant::now();
        let layer = catalog.layer(d);
        let results: Vec<Result<(), VerifyError>> = layer
            .par_iter()
            .map(|orbit| {
                let rec = &cert.records[orbit.id as usize];
                check_record(&catalog, &verified, orbit.id, rec, n, cert.header.fp_bit_cap as usize).map_err(|e| match e {
                    Check::Reject(reason) => VerifyError::Rejected {
                        orbit: Some(orbit.id),
                        technique: Some(rec.technique.name()),
                        reason,
                    },
                    Check::Env(e) => VerifyError::Environment(e),
                })
            })
            .collect();
        for r in results {
            r?;
        }
        for orbit in layer {
            verified[orbit.id as usize] = Some(cert.records[orbit.id as usize].bound);
        }
        layer_millis.push((d, start.elapsed().as_secs_f64() * 1e3));
    }
    let bounds: Vec<u32> = verified.into_iter().map(|b| b.expect("all layers verified")).collect();
    Ok(VerifiedTable {
        final_bound: bounds[0],
        bounds,
        layer_millis,
    })
}

enum Check {
    Reject(String),
    Env(Error),
}

impl From<Error> for Check {
    fn from(e: Error) -> Self {
        Check::Env(e)
    }
}

fn reject<T>(msg: impl Into<String>) -> Result<T, Check> {
    Err(Check::Reject(msg.into()))
}

fn child_bound(catalog: &OrbitCatalog, verified: &[Option<u32>], parent_dim: usize, child: u32) -> Result<u32, Check> {
    if child as usize >= verified.len() {
        return reject(format!("child orbit {child} does not exist"));
    }
    if catalog.dimension_of(child) <= parent_dim {
        return reject(format!("child orbit {child} is not more restricted"));
    }
    match verified[child as usize] {
        Some(b) => Ok(b),
        None => reject(format!("child orbit {child} has not been verified")),
    }
}

/// Bound proved by a non-substitution technique.
fn simple_bound(
    catalog: &OrbitCatalog,
    verified: &[Option<u32>],
    rep: &RestrictionSet,
    technique: &Technique,
    claimed: u32,
    n: usize,
    fp_bit_cap: usize,
) -> Result<u32, Check> {
    let (l, m) = (catalog.l(), catalog.m());
    match technique {
        Technique::Flattening => {
            let t = build_restricted_tensor(l, m, n, rep)?;
            Ok(t.max_flattening_rank() as u32)
        }
        Technique::ForcedProduct { rotation } => {
            let t = build_restricted_tensor(l, m, n, rep)?;
            let a = analyze_rotation(&t, *rotation, fp_bit_cap, Some(claimed as usize));
            if a.skipped {
                return reject("forced product exceeds the bit cap");
            }
            Ok(a.bound.unwrap_or(0) as u32)
        }
        Technique::Degenerate { added } => {
            let ext = rep.extend(added).map_err(|e| Check::Reject(e.to_string()))?;
            if ext.dimension() <= rep.dimension() {
                return reject("added functionals lie in the restriction space");
            }
            let (child, _) = catalog.canonicalize(&ext)?;
            child_bound(catalog, verified, rep.dimension(), child)
        }
        Technique::Substitution { .. } => reject("nested substitution"),
    }
}

fn check_record(
    catalog: &OrbitCatalog,
    verified: &[Option<u32>],
    id: u32,
    rec: &OrbitRecord,
    n: usize,
    fp_bit_cap: usize,
) -> Result<(), Check> {
    let rep = catalog.representative(id);
    match &rec.technique {
        Technique::Substitution { base, stages } => {
            let first = stages.first().map_or(rec.bound, |s| s.target);
            let need = first - 1;
            let got = simple_bound(catalog, verified, rep, base, need, n, fp_bit_cap)?;
            if got < need {
                return reject(format!("base {} gives {got}, below {need}", base.name()));
            }
            for stage in stages {
                replay_stage(catalog, verified, rep, stage)?;
            }
            Ok(())
        }
        t => {
            let got = simple_bound(catalog, verified, rep, t, rec.bound, n, fp_bit_cap)?;
            if got < rec.bound {
                return reject(format!("{} gives {got}, below the claimed {}", t.name(), rec.bound));
            }
            Ok(())
        }
    }
}

struct Replay<'a> {
    catalog: &'a OrbitCatalog,
    verified: &'a [Option<u32>],
    rep: &'a RestrictionSet,
    components: Vec<u64>,
    stage: &'a SubstitutionStage,
    pos: usize,
}

fn replay_stage(
    catalog: &OrbitCatalog,
    verified: &[Option<u32>],
    rep: &RestrictionSet,
    stage: &SubstitutionStage,
) -> Result<(), Check> {
    let mut replay = Replay {
        catalog,
        verified,
        rep,
        components: submasks_ascending(rep.free_mask()),
        stage,
        pos: 0,
    };
    if replay.components.is_empty() {
        return reject("substitution on an orbit without free variables");
    }
    let mut seq = Vec::new();
    for c in 0..replay.components.len() {
        seq.push(c);
        replay.node(&mut seq)?;
        seq.pop();
    }
    if replay.pos != stage.records.len() {
        return reject(format!(
            "target {}: {} records left over",
            stage.target,
            stage.records.len() - replay.pos
        ));
    }
    Ok(())
}

impl Replay<'_> {
    fn node(&mut self, seq: &mut Vec<usize>) -> Result<(), Check> {
        let k = seq.len();
        let target = self.stage.target;
        let Some(rec) = self.stage.records.get(self.pos) else {
            return reject(format!("target {target}: records exhausted at depth {k}"));
        };
        let depth = rec.depth as usize;
        if depth == k {
            self.pos += 1;
            return self.check(seq, rec);
        }
        if depth < k {
            return reject(format!("target {target}: record at depth {depth} where depth {k} was expected"));
        }
        if k as u32 + 1 >= target {
            return reject(format!("target {target}: node at depth {k} is not pruned"));
        }
        let last = *seq.last().expect("nonempty");
        for c in last..self.components.len() {
            seq.push(c);
            self.node(seq)?;
            seq.pop();
        }
        Ok(())
    }

    fn check(&self, seq: &[usize], rec: &crate::certificate::SubstitutionRecord) -> Result<(), Check> {
        let k = seq.len();
        if k >= 64 || rec.subset >> (k - 1) != 1 {
            return reject("subset must include the newest component and nothing beyond it");
        }
        let chosen: Vec<u64> = (0..k)
            .filter(|&i| (rec.subset >> i) & 1 == 1)
            .map(|i| self.components[seq[i]])
            .collect();
        let ext = self.rep.extend(&chosen).map_err(|e| Check::Reject(e.to_string()))?;
        let (l, m) = (self.catalog.l(), self.catalog.m());
        let witness = rec.witness(l, m);
        if witness.transposed && !self.catalog.square() {
            return reject("transposed witness in a non-square format");
        }
        let image = match witness.apply(&ext) {
            Ok(img) => img,
            Err(Error::DimensionMismatch(msg)) => return reject(msg),
            Err(e) => return Err(Check::Env(e)),
        };
        if (rec.child as usize) >= self.catalog.len() || image.basis() != self.catalog.representative(rec.child).basis() {
            return reject(format!("witness does not map the restriction onto orbit {}", { rec.child }));
        }
        let b = child_bound(self.catalog, self.verified, self.rep.dimension(), rec.child)?;
        if rec.subset.count_ones() + b < self.stage.target {
            return reject(format!(
                "record proves only {} + {} < {}",
                rec.subset.count_ones(),
                b,
                self.stage.target
            ));
        }
        Ok(())
    }
}
